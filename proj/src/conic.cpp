#include "lempart/conic.hpp"

#include <Eigen/OrderingMethods>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <optional>

namespace lempart::conic {

const char* status_name(Status status) {
    switch (status) {
        case Status::Optimal: return "optimal";
        case Status::OptimalInaccurate: return "optimal_inaccurate";
        case Status::PrimalInfeasible: return "primal_infeasible";
        case Status::DualInfeasible: return "dual_infeasible";
        case Status::MaxIterations: return "max_iterations";
        case Status::NumericalError: return "numerical_error";
    }
    return "unknown";
}

// ---------------------------------------------------------------- builder

int Builder::add_var(double cost) {
    cost_.push_back(cost);
    return static_cast<int>(cost_.size()) - 1;
}

void Builder::add_cost(int var, double cost) { cost_[var] += cost; }

int Builder::add_eq(const Terms& terms, double rhs) {
    const int row = num_eq();
    for (auto [v, a] : terms) eq_.emplace_back(row, v, a);
    eq_rhs_.push_back(rhs);
    return row;
}

int Builder::add_leq(const Terms& terms, double rhs) {
    const int row = num_lp();
    for (auto [v, a] : terms) lp_.emplace_back(row, v, a);
    lp_rhs_.push_back(rhs);
    return row;
}

int Builder::add_soc(const std::vector<std::pair<double, Terms>>& rows) {
    const int offset = static_cast<int>(soc_rhs_.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (auto [v, a] : rows[i].second) soc_.emplace_back(offset + static_cast<int>(i), v, -a);
        soc_rhs_.push_back(rows[i].first);
    }
    soc_offsets_.push_back(offset);
    soc_dims_.push_back(static_cast<int>(rows.size()));
    return num_soc() - 1;
}

Problem Builder::build() const {
    Problem p;
    const int n = num_vars();
    p.c = Eigen::Map<const Eigen::VectorXd>(cost_.data(), n);
    p.A.resize(num_eq(), n);
    p.A.setFromTriplets(eq_.begin(), eq_.end());
    p.b = Eigen::Map<const Eigen::VectorXd>(eq_rhs_.data(), num_eq());
    const int m = num_lp() + static_cast<int>(soc_rhs_.size());
    std::vector<Eigen::Triplet<double>> g = lp_;
    for (const auto& t : soc_) g.emplace_back(t.row() + num_lp(), t.col(), t.value());
    p.G.resize(m, n);
    p.G.setFromTriplets(g.begin(), g.end());
    p.h.resize(m);
    for (int i = 0; i < num_lp(); ++i) p.h[i] = lp_rhs_[i];
    for (std::size_t i = 0; i < soc_rhs_.size(); ++i) p.h[num_lp() + static_cast<int>(i)] = soc_rhs_[i];
    p.lp_dim = num_lp();
    p.soc_dims = soc_dims_;
    return p;
}

// ---------------------------------------------------------------- solver

namespace {

using Vec = Eigen::VectorXd;

constexpr double kInfStep = 1e6;

struct ConeLayout {
    int lp = 0;
    std::vector<int> offset;
    std::vector<int> dim;
    int m = 0;

    int degree() const { return lp + static_cast<int>(dim.size()); }
};

// Nesterov-Todd scaling for every cone. A second-order cone keeps η and the
// normalized point w̄ (stored at the cone's offset in wbar); then
// W = η·[w̄0 w̄1'; w̄1 I + w̄1w̄1'/(1 + w̄0)] and W² = η²(2w̄w̄' − J).
struct Scaling {
    Vec w;                    // LP: sqrt(s/z)
    Vec wbar;
    std::vector<double> eta;
    Vec lambda;

    void identity(const ConeLayout& cl) {
        w = Vec::Ones(cl.lp);
        wbar = Vec::Zero(cl.m);
        for (int off : cl.offset) wbar[off] = 1.0;
        eta.assign(cl.dim.size(), 1.0);
    }

    // out = W^{±1} v on cone c; out may not alias v.
    void soc_apply(const ConeLayout& cl, std::size_t c, const double* v, double* out, bool inverse) const {
        const int off = cl.offset[c], k = cl.dim[c];
        const double* wb = wbar.data() + off;
        double dot = 0.0;
        for (int i = 1; i < k; ++i) dot += wb[i] * v[i];
        const double sg = inverse ? -1.0 : 1.0;
        const double f = inverse ? 1.0 / eta[c] : eta[c];
        out[0] = f * (wb[0] * v[0] + sg * dot);
        const double coef = sg * v[0] + dot / (1.0 + wb[0]);
        for (int i = 1; i < k; ++i) out[i] = f * (v[i] + coef * wb[i]);
    }

    double soc_w2(const ConeLayout& cl, std::size_t c, int i, int j) const {
        const double* wb = wbar.data() + cl.offset[c];
        const double jij = i != j ? 0.0 : (i == 0 ? 1.0 : -1.0);
        return eta[c] * eta[c] * (2.0 * wb[i] * wb[j] - jij);
    }
};

double soc_residual(const Vec& v, int off, int k) {
    return v[off] * v[off] - v.segment(off + 1, k - 1).squaredNorm();
}

bool compute_scaling(const ConeLayout& cl, const Vec& s, const Vec& z, Scaling& sc) {
    sc.w.resize(cl.lp);
    sc.lambda.resize(cl.m);
    sc.wbar.resize(cl.m);
    sc.eta.resize(cl.dim.size());
    for (int i = 0; i < cl.lp; ++i) {
        if (!(s[i] > 0.0 && z[i] > 0.0)) return false;
        sc.w[i] = std::sqrt(s[i] / z[i]);
        sc.lambda[i] = std::sqrt(s[i] * z[i]);
    }
    for (std::size_t c = 0; c < cl.dim.size(); ++c) {
        const int off = cl.offset[c], k = cl.dim[c];
        const double sres = soc_residual(s, off, k), zres = soc_residual(z, off, k);
        if (!(sres > 0.0 && zres > 0.0 && s[off] > 0.0 && z[off] > 0.0)) return false;
        const double sn = std::sqrt(sres), zn = std::sqrt(zres);
        double sz = 0.0;
        for (int i = 0; i < k; ++i) sz += s[off + i] * z[off + i];
        const double gamma = std::sqrt((1.0 + sz / (sn * zn)) / 2.0);
        sc.wbar[off] = (s[off] / sn + z[off] / zn) / (2.0 * gamma);
        for (int i = 1; i < k; ++i) sc.wbar[off + i] = (s[off + i] / sn - z[off + i] / zn) / (2.0 * gamma);
        sc.eta[c] = std::sqrt(sn / zn);
        sc.soc_apply(cl, c, z.data() + off, sc.lambda.data() + off, false);
    }
    return true;
}

Vec apply_W(const ConeLayout& cl, const Scaling& sc, const Vec& v) {
    Vec out(cl.m);
    for (int i = 0; i < cl.lp; ++i) out[i] = sc.w[i] * v[i];
    for (std::size_t c = 0; c < cl.dim.size(); ++c) sc.soc_apply(cl, c, v.data() + cl.offset[c], out.data() + cl.offset[c], false);
    return out;
}

Vec apply_Winv(const ConeLayout& cl, const Scaling& sc, const Vec& v) {
    Vec out(cl.m);
    for (int i = 0; i < cl.lp; ++i) out[i] = v[i] / sc.w[i];
    for (std::size_t c = 0; c < cl.dim.size(); ++c) sc.soc_apply(cl, c, v.data() + cl.offset[c], out.data() + cl.offset[c], true);
    return out;
}

Vec jordan(const ConeLayout& cl, const Vec& u, const Vec& v) {
    Vec out(cl.m);
    for (int i = 0; i < cl.lp; ++i) out[i] = u[i] * v[i];
    for (std::size_t c = 0; c < cl.dim.size(); ++c) {
        const int off = cl.offset[c], k = cl.dim[c];
        out[off] = u.segment(off, k).dot(v.segment(off, k));
        out.segment(off + 1, k - 1) = u[off] * v.segment(off + 1, k - 1) + v[off] * u.segment(off + 1, k - 1);
    }
    return out;
}

// Solves λ∘x = v.
Vec jordan_div(const ConeLayout& cl, const Vec& lambda, const Vec& v) {
    Vec out(cl.m);
    for (int i = 0; i < cl.lp; ++i) out[i] = v[i] / lambda[i];
    for (std::size_t c = 0; c < cl.dim.size(); ++c) {
        const int off = cl.offset[c], k = cl.dim[c];
        const double l0 = lambda[off];
        const auto l1 = lambda.segment(off + 1, k - 1);
        const double det = l0 * l0 - l1.squaredNorm();
        const double x0 = (l0 * v[off] - l1.dot(v.segment(off + 1, k - 1))) / det;
        out[off] = x0;
        out.segment(off + 1, k - 1) = (v.segment(off + 1, k - 1) - x0 * l1) / l0;
    }
    return out;
}

Vec identity_element(const ConeLayout& cl) {
    Vec e = Vec::Zero(cl.m);
    for (int i = 0; i < cl.lp; ++i) e[i] = 1.0;
    for (int off : cl.offset) e[off] = 1.0;
    return e;
}

// Largest step keeping u + α·d in the cone.
double max_step(const ConeLayout& cl, const Vec& u, const Vec& d) {
    double alpha = kInfStep;
    for (int i = 0; i < cl.lp; ++i)
        if (d[i] < 0.0) alpha = std::min(alpha, -u[i] / d[i]);
    // For u in int Q: u + αd ∈ Q iff α(‖ρ1‖ − ρ0) ≤ 1 with ρ = P(u^{-1/2})d.
    for (std::size_t c = 0; c < cl.dim.size(); ++c) {
        const int off = cl.offset[c], k = cl.dim[c];
        const double nu = std::sqrt(std::max(soc_residual(u, off, k), 1e-300));
        const double u0 = u[off] / nu;
        const auto u1 = u.segment(off + 1, k - 1) / nu;
        const double ujd = u0 * d[off] - u1.dot(d.segment(off + 1, k - 1));
        const double rho0 = ujd / nu;
        const double rho1 = ((d.segment(off + 1, k - 1) - (ujd + d[off]) / (u0 + 1.0) * u1) / nu).norm();
        if (rho1 - rho0 > 0.0) alpha = std::min(alpha, 1.0 / (rho1 - rho0));
    }
    return std::max(alpha, 0.0);
}

// Moves v into the interior when it is not already there.
void shift_into_cone(const ConeLayout& cl, Vec& v) {
    double worst = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < cl.lp; ++i) worst = std::max(worst, -v[i]);
    for (std::size_t c = 0; c < cl.dim.size(); ++c) {
        const int off = cl.offset[c], k = cl.dim[c];
        worst = std::max(worst, v.segment(off + 1, k - 1).norm() - v[off]);
    }
    if (worst >= -1e-8) v += (1.0 + std::max(worst, 0.0)) * identity_element(cl);
}

// Up-looking LDL' on a fill-reducing ordering. Pivots whose sign disagrees
// with the quasidefinite pattern are replaced by ±delta.
class Ldl {
public:
    void analyze(const SpMat& K, const std::vector<signed char>& sign) {
        n_ = static_cast<int>(K.rows());
        Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> perm;
        Eigen::AMDOrdering<int> amd;
        amd(K, perm);
        P_.assign(perm.indices().data(), perm.indices().data() + n_);
        Pinv_.assign(n_, 0);
        for (int k = 0; k < n_; ++k) Pinv_[P_[k]] = k;
        sign_.assign(n_, 1);
        for (int k = 0; k < n_; ++k) sign_[k] = sign[P_[k]];

        const int* Ap = K.outerIndexPtr();
        const int* Ai = K.innerIndexPtr();
        parent_.assign(n_, -1);
        std::vector<int> flag(n_), lnz(n_, 0);
        for (int k = 0; k < n_; ++k) {
            flag[k] = k;
            const int kk = P_[k];
            for (int p = Ap[kk]; p < Ap[kk + 1]; ++p) {
                int i = Pinv_[Ai[p]];
                if (i >= k) continue;
                for (; flag[i] != k; i = parent_[i]) {
                    if (parent_[i] == -1) parent_[i] = k;
                    ++lnz[i];
                    flag[i] = k;
                }
            }
        }
        Lp_.assign(n_ + 1, 0);
        for (int k = 0; k < n_; ++k) Lp_[k + 1] = Lp_[k] + lnz[k];
        Li_.assign(Lp_[n_], 0);
        Lx_.assign(Lp_[n_], 0.0);
        D_.assign(n_, 0.0);
    }

    void factor(const SpMat& K, double eps, double delta) {
        const int* Ap = K.outerIndexPtr();
        const int* Ai = K.innerIndexPtr();
        const double* Ax = K.valuePtr();
        std::vector<double> Y(n_, 0.0);
        std::vector<int> pattern(n_), flag(n_), lnz(n_, 0);
        for (int k = 0; k < n_; ++k) {
            int top = n_;
            flag[k] = k;
            const int kk = P_[k];
            for (int p = Ap[kk]; p < Ap[kk + 1]; ++p) {
                int i = Pinv_[Ai[p]];
                if (i > k) continue;
                Y[i] += Ax[p];
                int len = 0;
                for (; flag[i] != k; i = parent_[i]) {
                    pattern[len++] = i;
                    flag[i] = k;
                }
                while (len > 0) pattern[--top] = pattern[--len];
            }
            double d = Y[k];
            Y[k] = 0.0;
            for (; top < n_; ++top) {
                const int i = pattern[top];
                const double yi = Y[i];
                Y[i] = 0.0;
                const int p2 = Lp_[i] + lnz[i];
                for (int p = Lp_[i]; p < p2; ++p) Y[Li_[p]] -= Lx_[p] * yi;
                const double l = yi / D_[i];
                d -= l * yi;
                Li_[p2] = k;
                Lx_[p2] = l;
                ++lnz[i];
            }
            if (sign_[k] * d <= eps) d = sign_[k] * delta;
            D_[k] = d;
        }
    }

    Vec solve(const Vec& b) const {
        Vec x(n_);
        for (int k = 0; k < n_; ++k) x[k] = b[P_[k]];
        for (int j = 0; j < n_; ++j)
            for (int p = Lp_[j]; p < Lp_[j + 1]; ++p) x[Li_[p]] -= Lx_[p] * x[j];
        for (int j = 0; j < n_; ++j) x[j] /= D_[j];
        for (int j = n_ - 1; j >= 0; --j)
            for (int p = Lp_[j]; p < Lp_[j + 1]; ++p) x[j] -= Lx_[p] * x[Li_[p]];
        Vec out(n_);
        for (int k = 0; k < n_; ++k) out[P_[k]] = x[k];
        return out;
    }

private:
    int n_ = 0;
    std::vector<int> P_, Pinv_, parent_, Lp_, Li_;
    std::vector<signed char> sign_;
    std::vector<double> Lx_, D_;
};

class Kkt {
public:
    Kkt(const SpMat& A, const SpMat& G, const ConeLayout& cl, double reg)
        : A_(A), G_(G), cl_(cl), n_(static_cast<int>(A.cols())), p_(static_cast<int>(A.rows())),
          m_(static_cast<int>(G.rows())), reg_(reg) {
        const int N = n_ + p_ + m_;
        std::vector<Eigen::Triplet<double>> t;
        t.reserve(2 * (A.nonZeros() + G.nonZeros()) + N + 32 * cl.dim.size());
        auto sym = [&](int i, int j, double v) {
            t.emplace_back(i, j, v);
            if (i != j) t.emplace_back(j, i, v);
        };
        for (int i = 0; i < n_; ++i) t.emplace_back(i, i, reg_);
        for (int k = 0; k < A.outerSize(); ++k)
            for (SpMat::InnerIterator it(A, k); it; ++it) sym(n_ + it.row(), it.col(), it.value());
        for (int i = 0; i < p_; ++i) t.emplace_back(n_ + i, n_ + i, -reg_);
        for (int k = 0; k < G.outerSize(); ++k)
            for (SpMat::InnerIterator it(G, k); it; ++it) sym(n_ + p_ + it.row(), it.col(), it.value());
        const int zo = n_ + p_;
        for (int i = 0; i < cl.lp; ++i) t.emplace_back(zo + i, zo + i, -1.0);
        for (std::size_t c = 0; c < cl.dim.size(); ++c)
            for (int j = 0; j < cl.dim[c]; ++j)
                for (int i = j; i < cl.dim[c]; ++i) sym(zo + cl.offset[c] + i, zo + cl.offset[c] + j, -1.0);
        K_.resize(N, N);
        K_.setFromTriplets(t.begin(), t.end());
        K_.makeCompressed();
        lp_slots_.resize(cl.lp);
        for (int i = 0; i < cl.lp; ++i) lp_slots_[i] = &K_.coeffRef(zo + i, zo + i);
        soc_slots_.resize(cl.dim.size());
        for (std::size_t c = 0; c < cl.dim.size(); ++c)
            for (int j = 0; j < cl.dim[c]; ++j)
                for (int i = 0; i < cl.dim[c]; ++i)
                    soc_slots_[c].push_back(&K_.coeffRef(zo + cl.offset[c] + i, zo + cl.offset[c] + j));
        std::vector<signed char> sign(N, -1);
        for (int i = 0; i < n_; ++i) sign[i] = 1;
        ldl_.analyze(K_, sign);
    }

    bool factor(const Scaling& sc) {
        sc_ = &sc;
        for (int i = 0; i < cl_.lp; ++i) *lp_slots_[i] = -sc.w[i] * sc.w[i] - reg_;
        for (std::size_t c = 0; c < cl_.dim.size(); ++c) {
            int idx = 0;
            for (int j = 0; j < cl_.dim[c]; ++j)
                for (int i = 0; i < cl_.dim[c]; ++i) *soc_slots_[c][idx++] = -sc.soc_w2(cl_, c, i, j) - (i == j ? reg_ : 0.0);
        }
        lp_w2_ = sc.w.array().square();
        ldl_.factor(K_, 1e-13, std::max(reg_, 1e-8));
        return true;
    }

    // Solves the unregularized system with iterative refinement.
    Vec solve(const Vec& rhs, int refine) const {
        Vec x = ldl_.solve(rhs);
        const double scale = 1.0 + rhs.lpNorm<Eigen::Infinity>();
        double last = std::numeric_limits<double>::infinity();
        for (int k = 0; k < refine; ++k) {
            Vec r = rhs - multiply(x);
            const double err = r.lpNorm<Eigen::Infinity>();
            if (!std::isfinite(err) || err < 1e-14 * scale || err > 0.5 * last) break;
            last = err;
            x += ldl_.solve(r);
        }
        return x;
    }

private:
    Vec multiply(const Vec& v) const {
        const auto x = v.head(n_);
        const auto y = v.segment(n_, p_);
        const auto z = v.tail(m_);
        Vec out(n_ + p_ + m_);
        out.head(n_) = A_.transpose() * y + G_.transpose() * z;
        out.segment(n_, p_) = A_ * x;
        Vec gz = G_ * x;
        for (int i = 0; i < cl_.lp; ++i) gz[i] -= lp_w2_[i] * z[i];
        const Vec& wb = sc_->wbar;
        for (std::size_t c = 0; c < cl_.dim.size(); ++c) {
            const int off = cl_.offset[c], k = cl_.dim[c];
            double dot = 0.0;
            for (int i = 0; i < k; ++i) dot += wb[off + i] * z[off + i];
            const double e2 = sc_->eta[c] * sc_->eta[c];
            gz[off] -= e2 * (2.0 * wb[off] * dot - z[off]);
            for (int i = 1; i < k; ++i) gz[off + i] -= e2 * (2.0 * wb[off + i] * dot + z[off + i]);
        }
        out.tail(m_) = gz;
        return out;
    }

    const SpMat& A_;
    const SpMat& G_;
    const ConeLayout& cl_;
    int n_, p_, m_;
    double reg_;
    SpMat K_;
    std::vector<double*> lp_slots_;
    std::vector<std::vector<double*>> soc_slots_;
    const Scaling* sc_ = nullptr;
    Vec lp_w2_;
    Ldl ldl_;
};

// Ruiz equilibration; SOC rows share one factor per cone.
void equilibrate(SpMat& A, SpMat& G, const ConeLayout& cl, int iters, Vec& D, Vec& E, Vec& F) {
    const int n = static_cast<int>(A.cols());
    D = Vec::Ones(n);
    E = Vec::Ones(A.rows());
    F = Vec::Ones(G.rows());
    auto clamp = [](double v) { return v < 1e-8 ? 1.0 : 1.0 / std::sqrt(std::clamp(v, 1e-4, 1e4)); };
    for (int it = 0; it < iters; ++it) {
        Vec col = Vec::Zero(n), rowA = Vec::Zero(A.rows()), rowG = Vec::Zero(G.rows());
        for (int k = 0; k < A.outerSize(); ++k)
            for (SpMat::InnerIterator i(A, k); i; ++i) {
                col[k] = std::max(col[k], std::abs(i.value()));
                rowA[i.row()] = std::max(rowA[i.row()], std::abs(i.value()));
            }
        for (int k = 0; k < G.outerSize(); ++k)
            for (SpMat::InnerIterator i(G, k); i; ++i) {
                col[k] = std::max(col[k], std::abs(i.value()));
                rowG[i.row()] = std::max(rowG[i.row()], std::abs(i.value()));
            }
        for (std::size_t c = 0; c < cl.dim.size(); ++c) {
            const double mx = rowG.segment(cl.offset[c], cl.dim[c]).maxCoeff();
            rowG.segment(cl.offset[c], cl.dim[c]).setConstant(mx);
        }
        Vec d = col.unaryExpr(clamp), e = rowA.unaryExpr(clamp), f = rowG.unaryExpr(clamp);
        A = e.asDiagonal() * A * d.asDiagonal();
        G = f.asDiagonal() * G * d.asDiagonal();
        D.array() *= d.array();
        E.array() *= e.array();
        F.array() *= f.array();
    }
}

Result solve_hsde(const Problem& prob, const Settings& st) {
    ConeLayout cl;
    cl.lp = prob.lp_dim;
    int off = cl.lp;
    for (int k : prob.soc_dims) {
        cl.offset.push_back(off);
        cl.dim.push_back(k);
        off += k;
    }
    cl.m = off;

    const int n = static_cast<int>(prob.c.size());
    const int p = static_cast<int>(prob.b.size());
    SpMat A = prob.A, G = prob.G;
    Vec D, E, F;
    if (st.equilibrate) {
        equilibrate(A, G, cl, st.equil_iters, D, E, F);
    } else {
        D = Vec::Ones(n);
        E = Vec::Ones(p);
        F = Vec::Ones(cl.m);
    }
    const Vec c = D.cwiseProduct(prob.c);
    const Vec b = E.cwiseProduct(prob.b);
    const Vec h = F.cwiseProduct(prob.h);

    Result res;
    Kkt kkt(A, G, cl, st.static_reg);

    // Initial point: least-squares primal and dual estimates, shifted into K.
    Scaling sc;
    sc.identity(cl);
    if (!kkt.factor(sc)) return res;
    Vec rhs(n + p + cl.m);
    rhs << Vec::Zero(n), b, h;
    Vec sol = kkt.solve(rhs, st.refine_steps);
    Vec x = sol.head(n);
    Vec s = -sol.tail(cl.m);
    shift_into_cone(cl, s);
    rhs << -c, Vec::Zero(p), Vec::Zero(cl.m);
    sol = kkt.solve(rhs, st.refine_steps);
    Vec y = sol.segment(n, p);
    Vec z = sol.tail(cl.m);
    shift_into_cone(cl, z);
    double tau = 1.0, kappa = 1.0;

    const Vec e = identity_element(cl);
    const double nb = 1.0 + prob.b.lpNorm<Eigen::Infinity>();
    const double nh = 1.0 + prob.h.lpNorm<Eigen::Infinity>();
    const double nc = 1.0 + prob.c.lpNorm<Eigen::Infinity>();

    struct Snapshot {
        Vec x, y, z, s;
        double pres, dres, pobj, dobj, gap, relgap;
    };
    auto unscale = [&](double t) {
        Snapshot o;
        o.x = D.cwiseProduct(x) / t;
        o.y = E.cwiseProduct(y) / t;
        o.z = F.cwiseProduct(z) / t;
        o.s = s.cwiseQuotient(F) / t;
        const Vec ry = prob.A * o.x - prob.b;
        const Vec rz = prob.G * o.x + o.s - prob.h;
        const Vec rx = prob.A.transpose() * o.y + prob.G.transpose() * o.z + prob.c;
        o.pres = std::max(p ? ry.lpNorm<Eigen::Infinity>() / nb : 0.0, cl.m ? rz.lpNorm<Eigen::Infinity>() / nh : 0.0);
        o.dres = rx.lpNorm<Eigen::Infinity>() / nc;
        o.pobj = prob.c.dot(o.x);
        o.dobj = -prob.b.dot(o.y) - prob.h.dot(o.z);
        o.gap = o.s.dot(o.z);
        o.relgap = std::max(std::abs(o.gap), std::abs(o.pobj - o.dobj)) /
                   std::max(1.0, std::min(std::abs(o.pobj), std::abs(o.dobj)));
        return o;
    };
    auto finish = [&](Status status, const Snapshot& o, int it) {
        res.status = status;
        res.x = o.x;
        res.y = o.y;
        res.z = o.z;
        res.s = o.s;
        res.primal_objective = o.pobj;
        res.dual_objective = o.dobj;
        res.gap = o.gap;
        res.relative_gap = o.relgap;
        res.primal_residual = o.pres;
        res.dual_residual = o.dres;
        res.iterations = it;
        return res;
    };
    auto accurate = [&](const Snapshot& o, double tol_f, double tol_r) {
        return o.pres < tol_f && o.dres < tol_f && o.relgap < tol_r;
    };

    // Infeasibility certificates on the unnormalized iterates.
    Snapshot certified;
    auto certify = [&](const Snapshot& cur, double tol) -> std::optional<Status> {
        const Vec yu = E.cwiseProduct(y), zu = F.cwiseProduct(z), xu = D.cwiseProduct(x), su = s.cwiseQuotient(F);
        const double bhz = prob.b.dot(yu) + prob.h.dot(zu);
        if (bhz < -1e-12) {
            const double r = (prob.A.transpose() * yu + prob.G.transpose() * zu).lpNorm<Eigen::Infinity>();
            if (r / -bhz < tol) {
                certified = cur;
                certified.y = yu / -bhz;
                certified.z = zu / -bhz;
                return Status::PrimalInfeasible;
            }
        }
        const double cx = prob.c.dot(xu);
        if (cx < -1e-12) {
            const double r = std::max((prob.A * xu).lpNorm<Eigen::Infinity>(), (prob.G * xu + su).lpNorm<Eigen::Infinity>());
            if (r / -cx < tol) {
                certified = cur;
                certified.x = xu / -cx;
                certified.s = su / -cx;
                return Status::DualInfeasible;
            }
        }
        return std::nullopt;
    };

    Snapshot best;
    bool have_best = false;
    const double degree = cl.degree() + 1.0;

    for (int it = 0; it <= st.max_iter; ++it) {
        Snapshot cur = unscale(tau);
        if (std::getenv("LEMPART_IPM_TRACE"))
            std::fprintf(stderr, "it %2d pobj %.10e dobj %.10e pres %.2e dres %.2e relgap %.2e tau %.2e kappa %.2e\n", it,
                         cur.pobj, cur.dobj, cur.pres, cur.dres, cur.relgap, tau, kappa);
        if (accurate(cur, st.feastol, st.reltol)) return finish(Status::Optimal, cur, it);
        if (cur.x.allFinite() && cur.pres < st.inaccurate_tol && cur.dres < st.inaccurate_tol) {
            if (!have_best || cur.relgap < best.relgap) {
                best = cur;
                have_best = true;
            }
        }

        if (auto cert = certify(cur, st.feastol)) return finish(*cert, certified, it);
        if (it == st.max_iter) break;

        const Vec Rx = A.transpose() * y + G.transpose() * z + c * tau;
        const Vec Ry = A * x - b * tau;
        const Vec Rz = G * x + s - h * tau;
        const double Rt = kappa + c.dot(x) + b.dot(y) + h.dot(z);
        const double mu = (s.dot(z) + tau * kappa) / degree;

        if (!compute_scaling(cl, s, z, sc)) {
            if (std::getenv("LEMPART_IPM_TRACE")) std::fprintf(stderr, "scaling failed\n");
            break;
        }
        if (!kkt.factor(sc)) {
            if (std::getenv("LEMPART_IPM_TRACE")) std::fprintf(stderr, "factor failed\n");
            break;
        }

        rhs << -c, b, h;
        const Vec v1 = kkt.solve(rhs, st.refine_steps);
        const double den = c.dot(v1.head(n)) + b.dot(v1.segment(n, p)) + h.dot(v1.tail(cl.m)) - kappa / tau;

        struct Dir {
            Vec dx, dy, dz, ds;
            double dt, dk;
        };
        auto direction = [&](double eta_r, const Vec& d_s, double d_k) {
            const Vec w_ld = apply_W(cl, sc, jordan_div(cl, sc.lambda, d_s));
            Vec r2(n + p + cl.m);
            r2 << -eta_r * Rx, -eta_r * Ry, -eta_r * Rz - w_ld;
            const Vec v2 = kkt.solve(r2, st.refine_steps);
            Dir d;
            d.dt = (-eta_r * Rt - d_k / tau - c.dot(v2.head(n)) - b.dot(v2.segment(n, p)) - h.dot(v2.tail(cl.m))) / den;
            const Vec v = v2 + d.dt * v1;
            d.dx = v.head(n);
            d.dy = v.segment(n, p);
            d.dz = v.tail(cl.m);
            d.ds = w_ld - apply_W(cl, sc, apply_W(cl, sc, d.dz));
            d.dk = (d_k - kappa * d.dt) / tau;
            return d;
        };
        auto step_to_boundary = [&](const Dir& d) {
            double a = std::min(max_step(cl, s, d.ds), max_step(cl, z, d.dz));
            if (d.dt < 0.0) a = std::min(a, -tau / d.dt);
            if (d.dk < 0.0) a = std::min(a, -kappa / d.dk);
            return a;
        };

        const Vec ll = jordan(cl, sc.lambda, sc.lambda);
        const Dir aff = direction(1.0, -ll, -tau * kappa);
        const double alpha_aff = std::min(1.0, step_to_boundary(aff));
        const double sigma = std::clamp(std::pow(1.0 - alpha_aff, 3.0), 0.0, 1.0);

        const Vec ds_s = jordan(cl, apply_Winv(cl, sc, aff.ds), apply_W(cl, sc, aff.dz));
        const Vec d_s = -ll - ds_s + sigma * mu * e;
        const double d_k = -tau * kappa - aff.dt * aff.dk + sigma * mu;
        const Dir dir = direction(1.0 - sigma, d_s, d_k);
        if (!dir.dx.allFinite() || !dir.dz.allFinite()) break;
        const double alpha = std::min(1.0, 0.99 * step_to_boundary(dir));
        if (std::getenv("LEMPART_IPM_TRACE"))
            std::fprintf(stderr, "   alpha_aff %.3e sigma %.3e alpha %.3e\n", alpha_aff, sigma, alpha);
        if (alpha < 1e-10) break;

        x += alpha * dir.dx;
        y += alpha * dir.dy;
        z += alpha * dir.dz;
        s += alpha * dir.ds;
        tau += alpha * dir.dt;
        kappa += alpha * dir.dk;
        res.iterations = it + 1;
    }

    if (have_best && best.relgap < st.inaccurate_tol) return finish(Status::OptimalInaccurate, best, res.iterations);
    Snapshot last = unscale(tau);
    // A stalled run with τ vanishing against κ is judged on a looser certificate.
    if (tau < st.inaccurate_tol * kappa)
        if (auto cert = certify(last, st.inaccurate_tol)) return finish(*cert, certified, res.iterations);
    return finish(res.iterations >= st.max_iter ? Status::MaxIterations : Status::NumericalError, last, res.iterations);
}

// Least violation of the constraints: min Σp + Σq + w over
// Ax − p + q = b,  Gx + s = h + w·e,  p, q, w ≥ 0. Always feasible and bounded.
Problem phase_one(const Problem& prob) {
    const int n = static_cast<int>(prob.c.size());
    const int p = static_cast<int>(prob.b.size());
    const int m = static_cast<int>(prob.h.size());
    const int w = n + 2 * p;
    const int lp = prob.lp_dim;

    Problem f;
    f.c = Vec::Zero(w + 1);
    f.c.tail(2 * p + 1).setOnes();
    f.b = prob.b;
    std::vector<Eigen::Triplet<double>> ta, tg;
    for (int k = 0; k < prob.A.outerSize(); ++k)
        for (SpMat::InnerIterator it(prob.A, k); it; ++it) ta.emplace_back(it.row(), it.col(), it.value());
    for (int i = 0; i < p; ++i) {
        ta.emplace_back(i, n + i, -1.0);
        ta.emplace_back(i, n + p + i, 1.0);
    }
    f.A.resize(p, w + 1);
    f.A.setFromTriplets(ta.begin(), ta.end());

    // Rows: original LP rows, then p, q, w ≥ 0, then the second-order cones.
    const int extra = 2 * p + 1;
    auto row = [&](int r) { return r < lp ? r : r + extra; };
    for (int k = 0; k < prob.G.outerSize(); ++k)
        for (SpMat::InnerIterator it(prob.G, k); it; ++it) tg.emplace_back(row(it.row()), it.col(), it.value());
    for (int r = 0; r < lp; ++r) tg.emplace_back(r, w, -1.0);
    int off = lp;
    for (int d : prob.soc_dims) {
        tg.emplace_back(row(off), w, -1.0);
        off += d;
    }
    for (int i = 0; i < extra; ++i) tg.emplace_back(lp + i, n + i, -1.0);
    f.G.resize(m + extra, w + 1);
    f.G.setFromTriplets(tg.begin(), tg.end());
    f.h = Vec::Zero(m + extra);
    f.h.head(lp) = prob.h.head(lp);
    f.h.tail(m - lp) = prob.h.tail(m - lp);
    f.lp_dim = lp + extra;
    f.soc_dims = prob.soc_dims;
    return f;
}

}  // namespace

Result solve(const Problem& prob, const Settings& st) {
    Result r = solve_hsde(prob, st);
    if (r.status != Status::NumericalError && r.status != Status::MaxIterations) return r;
    // The embedding can wander on infeasible problems; settle it directly.
    const Result f = solve_hsde(phase_one(prob), st);
    if (!f.optimal()) return r;
    const double scale = 1.0 + std::max(prob.b.size() ? prob.b.lpNorm<Eigen::Infinity>() : 0.0,
                                        prob.h.size() ? prob.h.lpNorm<Eigen::Infinity>() : 0.0);
    if (f.primal_objective > std::sqrt(st.inaccurate_tol) * scale) r.status = Status::PrimalInfeasible;
    return r;
}

}  // namespace lempart::conic
