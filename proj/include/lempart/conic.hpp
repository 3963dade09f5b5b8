#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <string>
#include <vector>

namespace lempart::conic {

using SpMat = Eigen::SparseMatrix<double>;

// min c'x  s.t.  Ax = b,  Gx + s = h,  s ∈ K
// K = R₊^lp × Q^{soc[0]} × Q^{soc[1]} × …, with the LP rows first.
// Duals follow c + A'y + G'z = 0 with z ∈ K.
struct Problem {
    Eigen::VectorXd c;
    SpMat A;
    Eigen::VectorXd b;
    SpMat G;
    Eigen::VectorXd h;
    int lp_dim = 0;
    std::vector<int> soc_dims;
};

enum class Status { Optimal, OptimalInaccurate, PrimalInfeasible, DualInfeasible, MaxIterations, NumericalError };

const char* status_name(Status status);

struct Settings {
    double feastol = 1e-9;
    double reltol = 1e-9;
    double inaccurate_tol = 1e-6;  // accepted when progress stalls
    int max_iter = 120;
    bool equilibrate = true;
    int equil_iters = 12;
    double static_reg = 1e-9;
    int refine_steps = 6;
};

struct Result {
    Status status = Status::NumericalError;
    Eigen::VectorXd x, y, z, s;
    double primal_objective = 0.0;
    double dual_objective = 0.0;
    double gap = 0.0;            // s'z
    double relative_gap = 0.0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    int iterations = 0;

    bool optimal() const { return status == Status::Optimal || status == Status::OptimalInaccurate; }
};

Result solve(const Problem& problem, const Settings& settings = {});

// Incremental construction with row and variable bookkeeping.
class Builder {
public:
    int add_var(double cost = 0.0);
    void add_cost(int var, double cost);

    using Terms = std::vector<std::pair<int, double>>;
    // Σ terms = rhs; returns the equality row index.
    int add_eq(const Terms& terms, double rhs);
    // Σ terms ≤ rhs; returns the LP row index.
    int add_leq(const Terms& terms, double rhs);
    // ‖(a_1, …, a_k)‖ ≤ a_0 where a_i = const_i + Σ terms_i; returns the index of
    // the cone among all SOC cones.
    int add_soc(const std::vector<std::pair<double, Terms>>& rows);

    int num_vars() const { return static_cast<int>(cost_.size()); }
    int num_eq() const { return static_cast<int>(eq_rhs_.size()); }
    int num_lp() const { return static_cast<int>(lp_rhs_.size()); }
    int num_soc() const { return static_cast<int>(soc_offsets_.size()); }

    // Offsets of each block inside Problem::G / Result::z.
    int lp_row(int r) const { return r; }
    int soc_row(int cone) const { return num_lp() + soc_offsets_[cone]; }
    int soc_dim(int cone) const { return soc_dims_[cone]; }

    Problem build() const;

private:
    std::vector<double> cost_;
    std::vector<Eigen::Triplet<double>> eq_;
    std::vector<double> eq_rhs_;
    std::vector<Eigen::Triplet<double>> lp_;
    std::vector<double> lp_rhs_;
    std::vector<Eigen::Triplet<double>> soc_;
    std::vector<double> soc_rhs_;
    std::vector<int> soc_offsets_;
    std::vector<int> soc_dims_;
};

}  // namespace lempart::conic
