#include "lempart/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>

#include "json.hpp"
#include "lempart/error.hpp"

namespace lempart {

using json = nlohmann::ordered_json;

namespace {

// Line of every value in an already validated JSON text, keyed by path
// ("nodes[2].dv_limit").
class Locator {
public:
    explicit Locator(const std::string& text) : text_(text) {
        skip();
        if (pos_ < text_.size()) value("");
    }

    int line(const std::string& path) const {
        auto it = lines_.find(path);
        return it == lines_.end() ? 0 : it->second;
    }

private:
    void skip() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
            if (text_[pos_] == '\n') ++line_;
            ++pos_;
        }
    }

    std::string string() {
        std::string out;
        ++pos_;
        while (pos_ < text_.size() && text_[pos_] != '"') {
            if (text_[pos_] == '\\') ++pos_;
            out += text_[pos_++];
        }
        ++pos_;
        return out;
    }

    void value(const std::string& path) {
        skip();
        lines_.emplace(path, line_);
        const char c = text_[pos_];
        if (c == '{') {
            ++pos_;
            skip();
            if (text_[pos_] == '}') { ++pos_; return; }
            for (;;) {
                skip();
                const std::string key = string();
                skip();
                ++pos_;  // ':'
                value(path.empty() ? key : path + "." + key);
                skip();
                if (text_[pos_++] != ',') return;
            }
        } else if (c == '[') {
            ++pos_;
            skip();
            if (text_[pos_] == ']') { ++pos_; return; }
            for (int i = 0;; ++i) {
                value(path + "[" + std::to_string(i) + "]");
                skip();
                if (text_[pos_++] != ',') return;
            }
        } else if (c == '"') {
            string();
        } else {
            while (pos_ < text_.size() && !std::strchr(",]} \t\r\n", text_[pos_])) ++pos_;
        }
    }

    const std::string& text_;
    std::size_t pos_ = 0;
    int line_ = 1;
    std::map<std::string, int> lines_;
};

struct Doc {
    json root;
    Locator where;
    std::string source;

    Doc(const std::string& text, std::string src) : root(parse(text, src)), where(text), source(std::move(src)) {}

    static json parse(const std::string& text, const std::string& source) {
        try {
            return json::parse(text);
        } catch (const json::parse_error& e) {
            int line = 1;
            int col = 1;
            for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
                if (text[i] == '\n') { ++line; col = 1; } else { ++col; }
            }
            throw Error(ErrorCode::ParseError,
                        source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": invalid JSON");
        }
    }

    [[noreturn]] void fail(const std::string& path, const std::string& what) const {
        int line = where.line(path);
        // Missing keys have no line of their own; cite the enclosing object.
        for (std::string p = path; line == 0 && !p.empty();) {
            const auto cut = p.find_last_of(".[");
            p = cut == std::string::npos ? "" : p.substr(0, cut);
            line = where.line(p);
        }
        throw Error(ErrorCode::ParseError,
                    source + ":" + std::to_string(line) + ": field '" + (path.empty() ? "<root>" : path) + "': " + what);
    }
};

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }
std::string join(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

// A JSON value together with its path, for error reporting.
struct Node {
    const Doc& doc;
    const json& j;
    std::string path;

    bool has(const std::string& key) const { return j.is_object() && j.contains(key); }
    Node operator[](const std::string& key) const {
        if (!j.is_object()) doc.fail(path, "expected an object");
        if (!j.contains(key)) doc.fail(join(path, key), "missing");
        return {doc, j.at(key), join(path, key)};
    }
    Node at(std::size_t i) const { return {doc, j.at(i), join(path, i)}; }
    std::size_t size() const {
        if (!j.is_array()) doc.fail(path, "expected an array");
        return j.size();
    }

    double number() const {
        if (!j.is_number()) doc.fail(path, "expected a number");
        return j.get<double>();
    }
    // null, "inf" or a number
    double limit() const {
        if (j.is_null()) return kInf;
        if (j.is_string() && j.get<std::string>() == "inf") return kInf;
        return number();
    }
    bool boolean() const {
        if (!j.is_boolean()) doc.fail(path, "expected true or false");
        return j.get<bool>();
    }
    std::string string() const {
        if (j.is_string()) return j.get<std::string>();
        if (j.is_number_integer()) return std::to_string(j.get<long long>());
        doc.fail(path, "expected a string");
    }
    std::uint64_t unsigned_integer() const {
        if (!j.is_number_integer() || j.get<long long>() < 0) doc.fail(path, "expected a nonnegative integer");
        return j.get<std::uint64_t>();
    }

    double number_or(const std::string& key, double fallback) const { return has(key) ? (*this)[key].number() : fallback; }
    double limit_or(const std::string& key) const { return has(key) ? (*this)[key].limit() : kInf; }
};

json limit_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// Parsed values are checked by the library; errors keep the line of the
// offending entry when possible.
template <class F>
auto cite(const Doc& doc, const std::string& path, F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        if (e.code() == ErrorCode::ParseError) throw;
        const int line = doc.where.line(path);
        throw Error(e.code(), doc.source + ":" + std::to_string(line) + ": " + e.what());
    }
}

Grid grid_from(const Node& root) {
    std::vector<NodeSpec> nodes;
    const Node ns = root["nodes"];
    for (std::size_t i = 0; i < ns.size(); ++i) {
        const Node n = ns.at(i);
        NodeSpec spec;
        spec.id = n["id"].string();
        spec.dv_limit = n.limit_or("dv_limit");
        spec.is_prosumer = n.has("is_prosumer") && n["is_prosumer"].boolean();
        nodes.push_back(spec);
    }
    std::vector<EdgeSpec> edges;
    const Node es = root["edges"];
    for (std::size_t i = 0; i < es.size(); ++i) {
        const Node e = es.at(i);
        EdgeSpec spec;
        spec.from = e["from"].string();
        spec.to = e["to"].string();
        spec.r = e.number_or("r", 0.0);
        spec.x = e.number_or("x", 0.0);
        spec.s_limit = e.limit_or("s_limit");
        edges.push_back(spec);
    }
    const std::string pcc = root["pcc"].string();
    const double v_ref = root.number_or("v_ref", 1.0);
    return cite(root.doc, root.path, [&] { return build_grid(nodes, edges, pcc, v_ref); });
}

json grid_json(const Grid& grid) {
    json j;
    j["pcc"] = grid.node_id(grid.pcc());
    j["v_ref"] = grid.v_ref();
    json nodes = json::array();
    for (int n = 0; n < grid.num_nodes(); ++n)
        nodes.push_back({{"id", grid.node_id(n)},
                         {"dv_limit", limit_json(grid.dv_limit(n))},
                         {"is_prosumer", grid.prosumer_at(n) >= 0}});
    j["nodes"] = nodes;
    json edges = json::array();
    for (int n : grid.order()) {
        if (n == grid.pcc()) continue;
        edges.push_back({{"from", grid.node_id(n)},
                         {"to", grid.node_id(grid.parent(n))},
                         {"r", grid.impedance(n).real()},
                         {"x", grid.impedance(n).imag()},
                         {"s_limit", limit_json(grid.s_limit(n))}});
    }
    j["edges"] = edges;
    return j;
}

// Per-id values: a number applies to all, an object maps ids to numbers with
// an optional "default".
std::vector<double> per_id(const Node& n, int count, const std::function<int(const std::string&)>& index,
                           double fallback) {
    std::vector<double> out(count, fallback);
    if (n.j.is_number()) {
        out.assign(count, n.number());
        return out;
    }
    if (!n.j.is_object()) n.doc.fail(n.path, "expected a number or an object keyed by id");
    if (n.has("default")) out.assign(count, n["default"].number());
    for (auto it = n.j.begin(); it != n.j.end(); ++it) {
        if (it.key() == "default") continue;
        const Node v = n[it.key()];
        const int k = cite(n.doc, v.path, [&] { return index(it.key()); });
        out[k] = v.number();
    }
    return out;
}

// Numbers, or [p, q] pairs; a single number broadcasts.
Series complex_series(const Node& n) {
    auto one = [](const Node& v) {
        if (v.j.is_array()) {
            if (v.size() != 2) v.doc.fail(v.path, "expected [p, q]");
            return Complex{v.at(0).number(), v.at(1).number()};
        }
        return Complex{v.number(), 0.0};
    };
    if (!n.j.is_array()) return {one(n)};
    Series out;
    for (std::size_t i = 0; i < n.size(); ++i) out.push_back(one(n.at(i)));
    if (out.empty()) n.doc.fail(n.path, "empty series");
    return out;
}

std::vector<double> real_series(const Node& n) {
    if (!n.j.is_array()) return {n.number()};
    std::vector<double> out;
    for (std::size_t i = 0; i < n.size(); ++i) out.push_back(n.at(i).number());
    if (out.empty()) n.doc.fail(n.path, "empty series");
    return out;
}

const char* family_name(FlexCost::Family f) {
    switch (f) {
        case FlexCost::Family::Linear: return "linear";
        case FlexCost::Family::Quadratic: return "quadratic";
        case FlexCost::Family::PiecewiseLinear: return "piecewise";
    }
    return "linear";
}

ProsumerFlex flex_from(const Node& n, ProsumerFlex f) {
    if (!n.j.is_object()) n.doc.fail(n.path, "expected an object");
    if (n.has("family")) {
        const std::string fam = n["family"].string();
        if (fam == "linear") f.cost.family = FlexCost::Family::Linear;
        else if (fam == "quadratic") f.cost.family = FlexCost::Family::Quadratic;
        else if (fam == "piecewise") f.cost.family = FlexCost::Family::PiecewiseLinear;
        else n.doc.fail(join(n.path, "family"), "expected linear, quadratic or piecewise");
    }
    f.cost.linear = n.number_or("linear", f.cost.linear);
    f.cost.quadratic = n.number_or("quadratic", f.cost.quadratic);
    if (n.has("pieces")) {
        const Node ps = n["pieces"];
        f.cost.pieces.clear();
        for (std::size_t i = 0; i < ps.size(); ++i) {
            const Node p = ps.at(i);
            if (p.size() != 2) n.doc.fail(p.path, "expected [slope, intercept]");
            f.cost.pieces.emplace_back(p.at(0).number(), p.at(1).number());
        }
    }
    if (n.has("max_magnitude")) f.set.max_magnitude = n["max_magnitude"].limit();
    if (n.has("energy_neutral")) f.set.energy_neutral = n["energy_neutral"].boolean();
    return f;
}

json flex_json(const ProsumerFlex& f) {
    json j;
    j["family"] = family_name(f.cost.family);
    j["linear"] = f.cost.linear;
    j["quadratic"] = f.cost.quadratic;
    if (!f.cost.pieces.empty()) {
        json ps = json::array();
        for (auto [s, c] : f.cost.pieces) ps.push_back({s, c});
        j["pieces"] = ps;
    }
    j["max_magnitude"] = limit_json(f.set.max_magnitude);
    j["energy_neutral"] = f.set.energy_neutral;
    return j;
}

ParamsFile params_from(const Node& root, const Grid& grid) {
    ParamsFile out;
    CostParams& p = out.params;
    p = default_params(grid);
    if (!root.j.is_object()) root.doc.fail(root.path, "expected an object");
    p.step_hours = root.number_or("step_hours", 1.0);
    if (root.has("regime")) {
        const std::string r = root["regime"].string();
        if (r == "taxed") p.regime = ExchangeRegime::Taxed;
        else if (r == "strict") p.regime = ExchangeRegime::StrictSelfConsumption;
        else root.doc.fail(join(root.path, "regime"), "expected taxed or strict");
    }
    if (root.has("export_price")) p.export_price = complex_series(root["export_price"]);
    if (root.has("exchange_tax")) p.exchange_tax = real_series(root["exchange_tax"]);
    p.imbalance_penalty = root.number_or("imbalance_penalty", 0.0);

    auto node_index = [&](const std::string& id) { return grid.node_index(id); };
    if (root.has("overload_penalty"))
        p.overload_penalty = per_id(root["overload_penalty"], grid.num_nodes(), node_index, 0.0);
    if (root.has("voltage_penalty")) {
        const Node v = root["voltage_penalty"];
        if (v.has("curtailment_price"))
            p.voltage_penalty = voltage_penalty_from_curtailment(grid, v["curtailment_price"].number(), p.step_hours);
        else
            p.voltage_penalty = per_id(v, grid.num_nodes(), node_index, 0.0);
    }
    if (root.has("coalition_balancing") && !root["coalition_balancing"].j.is_null())
        p.coalition_balancing = root["coalition_balancing"].number();
    if (root.has("coalition_balancing_overrides")) {
        const Node os = root["coalition_balancing_overrides"];
        for (std::size_t i = 0; i < os.size(); ++i) {
            const Node o = os.at(i);
            const Node ms = o["members"];
            std::vector<int> members;
            for (std::size_t k = 0; k < ms.size(); ++k) {
                const std::string id = ms.at(k).string();
                members.push_back(cite(root.doc, ms.at(k).path, [&] { return grid.prosumer_index(id); }));
            }
            std::sort(members.begin(), members.end());
            p.coalition_balancing_overrides[members] = o["price"].number();
        }
    }
    p.tiebreak = root.number_or("tiebreak", p.tiebreak);
    if (root.has("flex")) {
        const Node f = root["flex"];
        ProsumerFlex base;
        if (f.has("default")) base = flex_from(f["default"], base);
        p.flex.assign(grid.num_prosumers(), base);
        for (auto it = f.j.begin(); it != f.j.end(); ++it) {
            if (it.key() == "default") continue;
            const Node v = f[it.key()];
            const int k = cite(root.doc, v.path, [&] { return grid.prosumer_index(it.key()); });
            p.flex[k] = flex_from(v, base);
        }
    }
    if (root.has("noise")) {
        const Node n = root["noise"];
        out.noise.sigma = n.number_or("sigma", 0.0);
        out.noise.scale_bound = n.number_or("scale_bound", out.noise.scale_bound);
        if (n.has("shift_bound")) out.noise.shift_bound = static_cast<int>(n["shift_bound"].unsigned_integer());
        if (n.has("seed")) out.noise.seed = n["seed"].unsigned_integer();
    }
    return out;
}

json params_json(const Grid& grid, const CostParams& p, const NoiseSpec& noise) {
    json j;
    j["step_hours"] = p.step_hours;
    j["regime"] = p.regime == ExchangeRegime::Taxed ? "taxed" : "strict";
    json price = json::array();
    for (const Complex& c : p.export_price) price.push_back({c.real(), c.imag()});
    j["export_price"] = price;
    j["exchange_tax"] = p.exchange_tax;
    j["imbalance_penalty"] = p.imbalance_penalty;
    json over = json::object();
    for (int n = 0; n < grid.num_nodes(); ++n)
        if (n != grid.pcc() && n < static_cast<int>(p.overload_penalty.size())) over[grid.node_id(n)] = p.overload_penalty[n];
    j["overload_penalty"] = over;
    json volt = json::object();
    for (int n = 0; n < grid.num_nodes() && n < static_cast<int>(p.voltage_penalty.size()); ++n)
        volt[grid.node_id(n)] = p.voltage_penalty[n];
    j["voltage_penalty"] = volt;
    j["coalition_balancing"] = p.coalition_balancing ? json(*p.coalition_balancing) : json(nullptr);
    json overrides = json::array();
    for (const auto& [members, price_f] : p.coalition_balancing_overrides) {
        json ids = json::array();
        for (int k : members) ids.push_back(grid.prosumer_id(k));
        overrides.push_back({{"members", ids}, {"price", price_f}});
    }
    j["coalition_balancing_overrides"] = overrides;
    j["tiebreak"] = p.tiebreak;
    json flex = json::object();
    for (int k = 0; k < grid.num_prosumers() && k < static_cast<int>(p.flex.size()); ++k)
        flex[grid.prosumer_id(k)] = flex_json(p.flex[k]);
    j["flex"] = flex;
    j["noise"] = {{"sigma", noise.sigma},
                  {"scale_bound", noise.scale_bound},
                  {"shift_bound", noise.shift_bound},
                  {"seed", noise.seed}};
    return j;
}

// {"<prosumer id>": [values...]}
std::vector<std::vector<double>> series_from_object(const Node& n, const Grid& grid) {
    if (!n.j.is_object()) n.doc.fail(n.path, "expected a path or an object keyed by prosumer id");
    std::vector<std::vector<double>> out(grid.num_prosumers());
    std::vector<bool> seen(grid.num_prosumers(), false);
    for (auto it = n.j.begin(); it != n.j.end(); ++it) {
        const Node v = n[it.key()];
        const int k = cite(n.doc, v.path, [&] { return grid.prosumer_index(it.key()); });
        for (std::size_t t = 0; t < v.size(); ++t) out[k].push_back(v.at(t).number());
        seen[k] = true;
    }
    for (int k = 0; k < grid.num_prosumers(); ++k)
        if (!seen[k])
            throw Error(ErrorCode::MissingProsumerSeries,
                        n.doc.source + ":" + std::to_string(n.doc.where.line(n.path)) + ": field '" + n.path +
                            "': no series for prosumer '" + grid.prosumer_id(k) + "'");
    return out;
}

std::filesystem::path resolve(const std::string& base_dir, const std::string& path) {
    std::filesystem::path p(path);
    return p.is_absolute() ? p : std::filesystem::path(base_dir) / p;
}

std::vector<std::vector<double>> series_from(const Node& n, const Grid& grid, const std::string& base_dir) {
    if (n.j.is_string()) {
        const auto path = resolve(base_dir, n.string());
        return parse_series_csv(read_file(path.string()), grid, path.string());
    }
    return series_from_object(n, grid);
}

std::vector<Series> combine(const std::vector<std::vector<double>>& p, const std::vector<std::vector<double>>* q,
                            const std::string& what) {
    std::vector<Series> out(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (q && (*q)[k].size() != p[k].size())
            throw Error(ErrorCode::InvalidParameter, what + ": active and reactive series differ in length");
        for (std::size_t t = 0; t < p[k].size(); ++t) out[k].emplace_back(p[k][t], q ? (*q)[k][t] : 0.0);
    }
    return out;
}

json series_object(const Grid& grid, const std::vector<Series>& s, bool reactive) {
    json j = json::object();
    for (int k = 0; k < grid.num_prosumers(); ++k) {
        json row = json::array();
        for (const Complex& c : s[k]) row.push_back(reactive ? c.imag() : c.real());
        j[grid.prosumer_id(k)] = row;
    }
    return j;
}

bool any_reactive(const std::vector<Series>& s) {
    for (const auto& row : s)
        for (const Complex& c : row)
            if (c.imag() != 0.0) return true;
    return false;
}

std::string fmt(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

json ids_json(const Grid& grid, const std::vector<int>& members) {
    json j = json::array();
    for (int k : members) j.push_back(grid.prosumer_id(k));
    return j;
}

json partition_groups(const Grid& grid, const Partition& p) {
    json j = json::array();
    for (const auto& block : p) j.push_back(ids_json(grid, block.members));
    return j;
}

json number_json(double v) { return std::isfinite(v) ? json(v) : json(v > 0 ? "inf" : "-inf"); }

json matrix_json(const std::vector<std::vector<double>>& m) {
    json j = json::array();
    for (const auto& row : m) j.push_back(row);
    return j;
}

json complex_matrix_json(const std::vector<Series>& m) {
    json j = json::array();
    for (const auto& row : m) {
        json r = json::array();
        for (const Complex& c : row) r.push_back({c.real(), c.imag()});
        j.push_back(r);
    }
    return j;
}

json core_object(const Grid& grid, const CoreResult& core) {
    json j;
    j["nonempty"] = core.nonempty;
    j["budget"] = number_json(core.budget);
    j["lp_value"] = number_json(core.lp_value);
    json alloc = json::object();
    for (std::size_t i = 0; i < core.allocation.size(); ++i) {
        const std::string key = core.by_prosumer ? grid.prosumer_id(core.edges[i]) : grid.node_id(core.edges[i]);
        alloc[key] = core.allocation[i];
    }
    j["allocation_by"] = core.by_prosumer ? "prosumer" : "edge";
    j["allocation"] = alloc;
    json devs = json::array();
    for (const auto& d : core.deviations)
        devs.push_back({{"members", ids_json(grid, d.members)},
                        {"cost", number_json(d.cost)},
                        {"allocated", d.allocated},
                        {"dual", d.dual}});
    j["deviations"] = devs;
    json blockers = json::array();
    for (const auto& b : core.blockers) blockers.push_back(ids_json(grid, b));
    j["blockers"] = blockers;
    return j;
}

}  // namespace

Grid parse_grid_json(const std::string& text, const std::string& source) {
    Doc doc(text, source);
    return grid_from(Node{doc, doc.root, ""});
}

Grid load_grid(const std::string& path) { return parse_grid_json(read_file(path), path); }

std::string grid_to_json(const Grid& grid) { return grid_json(grid).dump(2) + "\n"; }

std::vector<std::vector<double>> parse_series_csv(const std::string& text, const Grid& grid, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    auto fail = [&](const std::string& what) -> void {
        throw Error(ErrorCode::ParseError, source + ":" + std::to_string(line_no) + ": " + what);
    };
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream row(s);
        while (std::getline(row, cell, ',')) {
            const auto a = cell.find_first_not_of(" \t\r");
            const auto b = cell.find_last_not_of(" \t\r");
            cells.push_back(a == std::string::npos ? "" : cell.substr(a, b - a + 1));
        }
        if (!s.empty() && s.back() == ',') cells.push_back("");
        return cells;
    };

    std::vector<std::string> header;
    while (header.empty() && std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") != std::string::npos) header = split(line);
    }
    if (header.empty()) fail("missing header row");
    const std::size_t first = header.front() == "t" ? 1 : 0;
    std::vector<int> column(header.size(), -1);
    for (std::size_t c = first; c < header.size(); ++c) {
        try {
            column[c] = grid.prosumer_index(header[c]);
        } catch (const Error&) {
            throw Error(ErrorCode::UnknownProsumer,
                        source + ":" + std::to_string(line_no) + ": column '" + header[c] + "' is not a prosumer");
        }
        for (std::size_t d = first; d < c; ++d)
            if (column[d] == column[c]) fail("duplicate column '" + header[c] + "'");
    }

    std::vector<std::vector<double>> out(grid.num_prosumers());
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = split(line);
        if (cells.size() != header.size())
            fail("expected " + std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()));
        for (std::size_t c = first; c < cells.size(); ++c) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cells[c], &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != cells[c].size()) fail("column '" + header[c] + "': not a number '" + cells[c] + "'");
            out[column[c]].push_back(v);
        }
    }
    for (int k = 0; k < grid.num_prosumers(); ++k) {
        bool present = false;
        for (std::size_t c = first; c < header.size(); ++c) present = present || column[c] == k;
        if (!present)
            throw Error(ErrorCode::MissingProsumerSeries, source + ": no column for prosumer '" + grid.prosumer_id(k) + "'");
    }
    return out;
}

std::string series_to_csv(const Grid& grid, const std::vector<std::vector<double>>& values) {
    std::ostringstream out;
    out << "t";
    for (int k = 0; k < grid.num_prosumers(); ++k) out << "," << grid.prosumer_id(k);
    out << "\n";
    const std::size_t steps = values.empty() ? 0 : values.front().size();
    for (std::size_t t = 0; t < steps; ++t) {
        out << t;
        for (int k = 0; k < grid.num_prosumers(); ++k) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.17g", values[k][t]);
            out << "," << buf;
        }
        out << "\n";
    }
    return out.str();
}

ParamsFile parse_params_json(const std::string& text, const Grid& grid, const std::string& source) {
    Doc doc(text, source);
    ParamsFile pf = params_from(Node{doc, doc.root, ""}, grid);
    // Without series the horizon is whatever the per-step prices imply.
    const int steps = static_cast<int>(std::max<std::size_t>(
        {std::size_t{1}, pf.params.export_price.size(), pf.params.exchange_tax.size()}));
    cite(doc, "", [&] { validate_params(pf.params, grid, steps); });
    return pf;
}

std::string params_to_json(const Grid& grid, const CostParams& params, const NoiseSpec& noise) {
    return params_json(grid, params, noise).dump(2) + "\n";
}

RunConfig parse_run_config(const std::string& text, const std::string& base_dir, const std::string& source) {
    Doc doc(text, source);
    const Node root{doc, doc.root, ""};
    if (!root.j.is_object()) doc.fail("", "expected an object");
    RunConfig cfg;
    cfg.bundle.name = root.has("name") ? root["name"].string() : "config";

    const Node g = root["grid"];
    if (g.j.is_string()) {
        const auto path = resolve(base_dir, g.string());
        cfg.bundle.grid = parse_grid_json(read_file(path.string()), path.string());
    } else {
        cfg.bundle.grid = grid_from(g);
    }
    const Grid& grid = cfg.bundle.grid;

    ParamsFile pf;
    if (!root.has("params")) {
        pf.params = default_params(grid);
    } else if (const Node p = root["params"]; p.j.is_string()) {
        const auto path = resolve(base_dir, p.string());
        pf = parse_params_json(read_file(path.string()), grid, path.string());
    } else {
        pf = params_from(p, grid);
    }
    cfg.bundle.params = pf.params;
    cfg.noise = pf.noise;

    const Node s = root["series"];
    ProsumptionSet& data = cfg.bundle.data;
    data.step_hours = s.number_or("step_hours", cfg.bundle.params.step_hours);
    auto part = [&](const std::string& key, bool required) -> std::optional<std::vector<std::vector<double>>> {
        if (!s.has(key)) {
            if (required) s[key];  // reports the missing field
            return std::nullopt;
        }
        return series_from(s[key], grid, base_dir);
    };
    const auto rp = part("realized_p", true);
    const auto rq = part("realized_q", false);
    const auto fp = part("forecast_p", false);
    const auto fq = part("forecast_q", false);
    data.realized = combine(*rp, rq ? &*rq : nullptr, "realized");
    data.forecast = fp ? combine(*fp, fq ? &*fq : nullptr, "forecast") : data.realized;
    cite(doc, "series", [&] {
        validate_prosumption(data, grid.num_prosumers());
        return 0;
    });
    cite(doc, "params", [&] {
        validate_params(cfg.bundle.params, grid, data.steps());
        return 0;
    });

    if (root.has("mode")) {
        const std::string m = root["mode"].string();
        if (m == "no-externalities") cfg.mode = DeviationMode::NoExternalities;
        else if (m == "externalities") cfg.mode = DeviationMode::Externalities;
        else doc.fail("mode", "expected no-externalities or externalities");
    }
    if (root.has("seed")) cfg.seed = root["seed"].unsigned_integer();
    if (root.has("active")) {
        const Node a = root["active"];
        for (std::size_t i = 0; i < a.size(); ++i) {
            const std::string id = a.at(i).string();
            cfg.active.push_back(cite(doc, a.at(i).path, [&] { return grid.prosumer_index(id); }));
        }
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    const auto dir = std::filesystem::path(path).parent_path();
    return parse_run_config(read_file(path), dir.empty() ? "." : dir.string(), path);
}

std::string run_config_to_json(const RunConfig& cfg) {
    const Grid& grid = cfg.bundle.grid;
    json j;
    j["name"] = cfg.bundle.name;
    j["mode"] = cfg.mode == DeviationMode::NoExternalities ? "no-externalities" : "externalities";
    j["seed"] = cfg.seed;
    if (!cfg.active.empty()) j["active"] = ids_json(grid, cfg.active);
    j["grid"] = grid_json(grid);
    j["params"] = params_json(grid, cfg.bundle.params, cfg.noise);
    json s;
    s["step_hours"] = cfg.bundle.data.step_hours;
    s["forecast_p"] = series_object(grid, cfg.bundle.data.forecast, false);
    if (any_reactive(cfg.bundle.data.forecast)) s["forecast_q"] = series_object(grid, cfg.bundle.data.forecast, true);
    s["realized_p"] = series_object(grid, cfg.bundle.data.realized, false);
    if (any_reactive(cfg.bundle.data.realized)) s["realized_q"] = series_object(grid, cfg.bundle.data.realized, true);
    j["series"] = s;
    return j.dump(2) + "\n";
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::ParseError, path + ": cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    const auto dir = std::filesystem::path(path).parent_path();
    if (!dir.empty()) std::filesystem::create_directories(dir);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::ParseError, path + ": cannot write file");
    out << content;
}

std::string cost_report_csv(const Grid& grid, const std::vector<CostReport>& reports) {
    std::ostringstream out;
    out << "Partition,Flex,Imb,Over,Volt,Tax,Export,Total\n";
    for (const auto& r : reports)
        out << "\"" << partition_label(grid, r.partition) << "\"," << fmt(r.flex) << "," << fmt(r.imbalance) << ","
            << fmt(r.overload) << "," << fmt(r.voltage) << "," << fmt(r.tax) << "," << fmt(r.export_cost) << ","
            << fmt(r.total) << "\n";
    return out.str();
}

std::string cost_report_json(const Grid& grid, const std::vector<CostReport>& reports, bool with_duals) {
    json arr = json::array();
    for (const auto& r : reports) {
        json j;
        j["partition"] = partition_label(grid, r.partition);
        j["groups"] = partition_groups(grid, r.partition);
        json shared = json::array();
        for (int n : shared_nodes(grid, r.partition)) shared.push_back(grid.node_id(n));
        j["shared_nodes"] = shared;
        j["flex"] = r.flex;
        j["imbalance"] = r.imbalance;
        j["overload"] = r.overload;
        j["voltage"] = r.voltage;
        j["tax"] = r.tax;
        j["export"] = r.export_cost;
        j["total"] = r.total;
        j["exante_realized"] = r.exante_realized;
        j["balancing_by_step"] = r.balancing;
        j["external_violation_by_step"] = r.external;
        j["internal_violation_by_block"] = matrix_json(r.internal);
        j["imbalance_by_block"] = matrix_json(r.block_imbalance);
        json dispatch;
        dispatch["objective"] = r.dispatch.objective;
        dispatch["relative_gap"] = r.dispatch.relative_gap;
        json u = json::object();
        for (int k = 0; k < grid.num_prosumers(); ++k) {
            json row = json::array();
            for (const Complex& c : r.dispatch.u[k]) row.push_back({c.real(), c.imag()});
            u[grid.prosumer_id(k)] = row;
        }
        dispatch["u"] = u;
        if (with_duals) {
            const DualBundle& d = r.dispatch.duals;
            json duals;
            duals["lambda"] = complex_matrix_json(d.lambda);
            duals["beta"] = matrix_json(d.beta);
            duals["beta0"] = d.beta0;
            duals["mu"] = matrix_json(d.mu);
            duals["eta_upper"] = matrix_json(d.eta_upper);
            duals["eta_lower"] = matrix_json(d.eta_lower);
            duals["theta"] = matrix_json(d.theta);
            duals["theta_neutral"] = d.theta_neutral;
            duals["node_lagrangian"] = d.node_lagrangian;
            json ids = json::array();
            for (int n = 0; n < grid.num_nodes(); ++n) ids.push_back(grid.node_id(n));
            duals["node_ids"] = ids;
            dispatch["duals"] = duals;
        }
        j["dispatch"] = dispatch;
        arr.push_back(j);
    }
    return json{{"reports", arr}}.dump(2) + "\n";
}

std::string stability_json(const Grid& grid, const StablePartitionResult& result) {
    json arr = json::array();
    for (const auto& p : result.partitions) {
        json j;
        j["partition"] = partition_label(grid, p.partition);
        j["groups"] = partition_groups(grid, p.partition);
        j["feasible"] = p.feasible;
        j["total"] = number_json(p.total);
        j["stable"] = p.stable;
        json costs = json::array();
        for (double c : p.block_costs) costs.push_back(number_json(c));
        j["block_costs"] = costs;
        j["first_blocker"] = p.first_blocker ? ids_json(grid, *p.first_blocker) : json(nullptr);
        if (!p.note.empty()) j["note"] = p.note;
        json cores = json::array();
        for (const auto& c : p.cores) cores.push_back(core_object(grid, c));
        j["cores"] = cores;
        arr.push_back(j);
    }
    json out;
    out["optimal_stable"] = result.best >= 0 ? json(partition_label(grid, result.partitions[result.best].partition))
                                             : json(nullptr);
    out["gamma"] = result.best >= 0 ? json(result.gamma) : json(nullptr);
    out["optimal"] = result.optimal >= 0 ? json(partition_label(grid, result.partitions[result.optimal].partition))
                                         : json(nullptr);
    out["partitions"] = arr;
    return out.dump(2) + "\n";
}

std::string core_json(const Grid& grid, const Partition& partition, int block_index, const CoreResult& core) {
    json j;
    j["partition"] = partition_label(grid, partition);
    j["block"] = ids_json(grid, partition[block_index].members);
    j["core"] = core_object(grid, core);
    return j.dump(2) + "\n";
}

std::string partitions_json(const Grid& grid, const std::vector<Partition>& partitions) {
    json arr = json::array();
    for (const auto& p : partitions) {
        json shared = json::array();
        for (int n : shared_nodes(grid, p)) shared.push_back(grid.node_id(n));
        arr.push_back({{"partition", partition_label(grid, p)}, {"groups", partition_groups(grid, p)}, {"shared_nodes", shared}});
    }
    return json{{"count", partitions.size()}, {"partitions", arr}}.dump(2) + "\n";
}

std::string optimal_json(const Grid& grid, const OptimalPartitionResult& result) {
    json arr = json::array();
    for (const auto& p : result.partitions)
        arr.push_back({{"partition", partition_label(grid, p.partition)},
                       {"feasible", p.feasible},
                       {"total", number_json(p.total)}});
    json out;
    out["optimal"] = result.best >= 0 ? json(partition_label(grid, result.partitions[result.best].partition))
                                      : json(nullptr);
    out["total"] = result.best >= 0 ? json(result.total) : json(nullptr);
    out["partitions"] = arr;
    return out.dump(2) + "\n";
}

std::string error_json(const std::string& name, const std::string& message) {
    return json{{"error", name}, {"message", message}}.dump() + "\n";
}

}  // namespace lempart
