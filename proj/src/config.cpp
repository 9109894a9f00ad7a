#include "nashpar/config.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "nashpar/errors.hpp"

namespace nashpar {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

[[noreturn]] void fail(const std::string& label, const std::string& what) {
    throw ValidationError(label + ": " + what);
}

double parse_double(const std::string& label, const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (trim(v.substr(used)).empty()) return x;
    } catch (const std::exception&) {
    }
    fail(label, "key '" + key + "' expects a number, got '" + v + "'");
}

int parse_int(const std::string& label, const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const long long x = std::stoll(v, &used);
        if (trim(v.substr(used)).empty() && x >= -(1LL << 31) && x < (1LL << 31))
            return static_cast<int>(x);
    } catch (const std::exception&) {
    }
    fail(label, "key '" + key + "' expects an integer, got '" + v + "'");
}

std::vector<double> parse_list(const std::string& label, const std::string& key,
                               const std::string& v) {
    std::vector<double> out;
    std::string item;
    std::istringstream in(v);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (item.empty()) fail(label, "key '" + key + "' has an empty list entry");
        out.push_back(parse_double(label, key, item));
    }
    if (out.empty()) fail(label, "key '" + key + "' expects a comma-separated list");
    return out;
}

std::pair<double, double> parse_interval(const std::string& label, const std::string& key,
                                         const std::string& v) {
    const auto colon = v.find(':');
    if (colon == std::string::npos)
        fail(label, "key '" + key + "' expects an interval lo:hi, got '" + v + "'");
    const double lo = parse_double(label, key, trim(v.substr(0, colon)));
    const double hi = parse_double(label, key, trim(v.substr(colon + 1)));
    if (!(lo < hi)) fail(label, "key '" + key + "' needs lo < hi, got '" + v + "'");
    return {lo, hi};
}

class KeyTable {
public:
    KeyTable(std::string label, const std::vector<std::pair<std::string, std::string>>& pairs)
        : label_(std::move(label)) {
        for (const auto& [k, v] : pairs)
            if (!map_.emplace(k, v).second)
                fail(label_, "duplicate configuration key '" + k + "'");
    }

    const std::string* find(const std::string& key) {
        used_.insert(key);
        const auto it = map_.find(key);
        return it == map_.end() ? nullptr : &it->second;
    }

    const std::string& require(const std::string& key) {
        const std::string* v = find(key);
        if (!v) fail(label_, "missing required configuration key '" + key + "'");
        return *v;
    }

    void reject_unknown() const {
        for (const auto& [k, v] : map_)
            if (!used_.count(k)) fail(label_, "unknown configuration key '" + k + "'");
    }

private:
    std::string label_;
    std::unordered_map<std::string, std::string> map_;
    std::unordered_set<std::string> used_;
};

std::vector<double> follower_array(const std::string& label, const std::string& key,
                                   KeyTable& keys, int nf, double fallback) {
    const std::string* raw = keys.find(key);
    if (!raw) return std::vector<double>(static_cast<std::size_t>(nf), fallback);
    std::vector<double> vals = parse_list(label, key, *raw);
    if (vals.size() == 1) return std::vector<double>(static_cast<std::size_t>(nf), vals[0]);
    if (static_cast<int>(vals.size()) != nf)
        fail(label, "key '" + key + "' needs 1 or " + std::to_string(nf) + " entries");
    return vals;
}

AdaptedField constant_target(const GameSpec& spec, const std::vector<double>& c1,
                             const std::vector<double>& c2) {
    const int M = spec.tgrid.n_steps();
    AdaptedField f(spec.tgrid, spec.tree, 2, spec.grid.n_x, M);
    const std::vector<double> p1 = sine_profile(spec.grid, c1);
    const std::vector<double> p2 = sine_profile(spec.grid, c2);
    for (int m = 0; m <= M; ++m)
        for (std::int64_t p = 0; p < f.nodes(m); ++p) {
            auto a = f.at(m, p, 0);
            auto b = f.at(m, p, 1);
            for (int j = 0; j < spec.grid.n_x; ++j) {
                a[static_cast<std::size_t>(j)] = p1[static_cast<std::size_t>(j)];
                b[static_cast<std::size_t>(j)] = p2[static_cast<std::size_t>(j)];
            }
        }
    return f;
}

} // namespace

std::vector<double> sine_profile(const SpatialGrid& grid, const std::vector<double>& coeffs) {
    std::vector<double> out(static_cast<std::size_t>(grid.n_x), 0.0);
    const double pi = std::acos(-1.0);
    for (std::size_t k = 0; k < coeffs.size(); ++k)
        for (int j = 0; j < grid.n_x; ++j)
            out[static_cast<std::size_t>(j)] +=
                coeffs[k] * std::sin(static_cast<double>(k + 1) * pi *
                                     grid.nodes[static_cast<std::size_t>(j)] / grid.length);
    return out;
}

RunConfig parse_config(const std::string& text, const std::string& label,
                       std::ostream* warnings) {
    std::vector<std::pair<std::string, std::string>> pairs;
    {
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                fail(label, "line " + std::to_string(lineno) + " is not a key = value pair");
            const std::string key = trim(line.substr(0, eq));
            const std::string val = trim(line.substr(eq + 1));
            if (key.empty() || val.empty())
                fail(label, "line " + std::to_string(lineno) + " has an empty key or value");
            pairs.emplace_back(key, val);
        }
    }

    KeyTable keys(label, pairs);
    RunConfig cfg;
    cfg.echo = pairs;
    GameSpec& spec = cfg.spec;

    const int n_x = parse_int(label, "n_x", keys.require("n_x"));
    const double length = parse_double(label, "length", keys.require("length"));
    const double T = parse_double(label, "T", keys.require("T"));
    const int K = parse_int(label, "K", keys.require("K"));
    const int R = parse_int(label, "R", keys.require("R"));
    const int nf = parse_int(label, "followers", keys.require("followers"));
    if (nf < 1) fail(label, "followers must be at least 1");

    spec.grid = SpatialGrid::make(n_x, length);
    spec.tgrid = TimeGrid::make(T, K, R);
    spec.tree = NoiseTree::make(spec.tgrid);

    spec.layout.mask_G0 =
        NodeMask::from_intervals(spec.grid, {parse_interval(label, "G0", keys.require("G0"))});
    spec.layout.mask_Od =
        NodeMask::from_intervals(spec.grid, {parse_interval(label, "Od", keys.require("Od"))});
    spec.layout.mask_O0 =
        NodeMask::from_intervals(spec.grid, {parse_interval(label, "O0", keys.require("O0"))});
    for (int i = 1; i <= nf; ++i) {
        const std::string key = "G" + std::to_string(i);
        spec.layout.mask_Gi.push_back(
            NodeMask::from_intervals(spec.grid, {parse_interval(label, key, keys.require(key))}));
    }

    const double a11 = parse_double(label, "a11", keys.require("a11"));
    const double a12 = parse_double(label, "a12", keys.require("a12"));
    const double a21 = parse_double(label, "a21", keys.require("a21"));
    const double a22 = parse_double(label, "a22", keys.require("a22"));
    spec.coeffs = CouplingField::constant(a11, a12, a21, a22, spec.tgrid.n_steps(), n_x);
    if (const std::string* v = keys.find("a0")) spec.a0 = parse_double(label, "a0", *v);

    double lambda = 0.1, mu = 0.5;
    if (const std::string* v = keys.find("lambda")) lambda = parse_double(label, "lambda", *v);
    if (const std::string* v = keys.find("mu")) mu = parse_double(label, "mu", *v);
    spec.wparams = build_eta0(spec.grid, spec.layout, lambda, mu);
    spec.weights = build_weight_tables(spec.wparams, spec.grid, spec.tgrid);
    spec.stencil = DiffusionStencil::make(spec.grid, spec.tgrid);

    if (const std::string* v = keys.find("scenario")) {
        if (*v == "full")
            spec.scenario = Scenario::full_observation;
        else if (*v == "second")
            spec.scenario = Scenario::second_component;
        else
            fail(label, "scenario must be 'full' or 'second', got '" + *v + "'");
    }

    spec.alpha = follower_array(label, "alpha", keys, nf, 1.0);
    spec.beta = follower_array(label, "beta", keys, nf, 100.0);

    if (const std::string* v = keys.find("picard_tol"))
        spec.picard_tol = parse_double(label, "picard_tol", *v);
    if (const std::string* v = keys.find("picard_max_iter"))
        spec.picard_max_iter = parse_int(label, "picard_max_iter", *v);
    if (const std::string* v = keys.find("nash_tol"))
        spec.nash_tol = parse_double(label, "nash_tol", *v);
    if (const std::string* v = keys.find("target_weight_cap"))
        spec.target_weight_cap = parse_double(label, "target_weight_cap", *v);

    for (int i = 1; i <= nf; ++i) {
        std::vector<double> c1, c2;
        if (const std::string* v = keys.find("target" + std::to_string(i) + "_1"))
            c1 = parse_list(label, "target" + std::to_string(i) + "_1", *v);
        if (const std::string* v = keys.find("target" + std::to_string(i) + "_2"))
            c2 = parse_list(label, "target" + std::to_string(i) + "_2", *v);
        spec.targets.push_back(constant_target(spec, c1, c2));
    }

    std::vector<double> y1, y2;
    if (const std::string* v = keys.find("y0_1")) y1 = parse_list(label, "y0_1", *v);
    if (const std::string* v = keys.find("y0_2")) y2 = parse_list(label, "y0_2", *v);
    cfg.y0.assign(static_cast<std::size_t>(2 * n_x), 0.0);
    const std::vector<double> p1 = sine_profile(spec.grid, y1);
    const std::vector<double> p2 = sine_profile(spec.grid, y2);
    for (int j = 0; j < n_x; ++j) {
        cfg.y0[static_cast<std::size_t>(j)] = p1[static_cast<std::size_t>(j)];
        cfg.y0[static_cast<std::size_t>(n_x + j)] = p2[static_cast<std::size_t>(j)];
    }

    if (const std::string* v = keys.find("epsilon"))
        cfg.hum.epsilon = parse_double(label, "epsilon", *v);
    if (const std::string* v = keys.find("cg_tol"))
        cfg.hum.cg_tol = parse_double(label, "cg_tol", *v);
    if (const std::string* v = keys.find("cg_max_iter"))
        cfg.hum.cg_max_iter = parse_int(label, "cg_max_iter", *v);
    if (const std::string* v = keys.find("eps_list"))
        cfg.eps_list = parse_list(label, "eps_list", *v);
    if (const std::string* v = keys.find("n_probes"))
        cfg.n_probes = parse_int(label, "n_probes", *v);
    if (const std::string* v = keys.find("obs_mode")) {
        if (*v == "sampled")
            cfg.obs_mode = ObservabilityMode::sampled;
        else if (*v == "dense")
            cfg.obs_mode = ObservabilityMode::dense;
        else
            fail(label, "obs_mode must be 'sampled' or 'dense', got '" + *v + "'");
    }

    keys.reject_unknown();

    spec.finalize();
    spec.validate(warnings);
    return cfg;
}

RunConfig load_config(const std::string& path, std::ostream* warnings) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open configuration file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path, warnings);
}

} // namespace nashpar
