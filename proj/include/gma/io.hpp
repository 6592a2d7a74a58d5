#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gma/monitors.hpp"
#include "gma/operator.hpp"
#include "gma/solver.hpp"
#include "gma/trig.hpp"

namespace gma {

inline constexpr const char* kVersion = "0.1.0";

class ConfigError : public std::runtime_error {
  public:
    ConfigError(const std::string& path, const std::string& what)
        : std::runtime_error(path + ": " + what), path_(path) {}
    const std::string& path() const { return path_; }

  private:
    std::string path_;
};

// ---------------------------------------------------------------------------
// GMAF1 field binary format:
//   "GMAF1\n"
//   "n res_1 ... res_{2n} kind\n"     kind in {real, complex, hermitian}
//   raw little-endian float64, row-major over axes (x_1 fastest),
//   complex interleaved (re, im), hermitian n^2 complex entries per point.
// ---------------------------------------------------------------------------

enum class FieldKind { Real, Complex, Hermitian };

inline std::string field_kind_name(FieldKind k) {
    switch (k) {
        case FieldKind::Real: return "real";
        case FieldKind::Complex: return "complex";
        case FieldKind::Hermitian: return "hermitian";
    }
    throw std::logic_error("field_kind_name");
}

namespace io_detail {

inline void write_doubles(std::ostream& os, const double* data, std::size_t count) {
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
}

inline void read_doubles(std::istream& is, double* data, std::size_t count) {
    is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
    if (!is) throw std::runtime_error("GMAF1: truncated payload");
}

inline void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!os) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace io_detail

inline void write_gmaf(std::ostream& os, const ComplexScalarField& f) {
    const PeriodicGrid& g = f.grid();
    const FieldKind kind = f.is_real() ? FieldKind::Real : FieldKind::Complex;
    os << "GMAF1\n" << g.dimension();
    for (int a = 0; a < g.axes(); ++a) os << ' ' << g.res(a);
    os << ' ' << field_kind_name(kind) << '\n';
    if (kind == FieldKind::Real) {
        std::vector<double> buf(f.size());
        for (std::size_t i = 0; i < f.size(); ++i) buf[i] = f[i].real();
        io_detail::write_doubles(os, buf.data(), buf.size());
    } else {
        io_detail::write_doubles(os, reinterpret_cast<const double*>(f.values().data()), 2 * f.size());
    }
}

inline void write_gmaf(std::ostream& os, const HermitianMatrixField& m) {
    const PeriodicGrid& g = m.grid();
    os << "GMAF1\n" << g.dimension();
    for (int a = 0; a < g.axes(); ++a) os << ' ' << g.res(a);
    os << ' ' << field_kind_name(FieldKind::Hermitian) << '\n';
    io_detail::write_doubles(os, reinterpret_cast<const double*>(m.entries().data()), 2 * m.entries().size());
}

struct LoadedField {
    PeriodicGrid grid;
    FieldKind kind = FieldKind::Real;
    std::vector<Complex> data;  // per point; n^2 per point for hermitian

    ComplexScalarField as_scalar() const {
        if (kind == FieldKind::Hermitian) throw std::runtime_error("GMAF1: hermitian field is not a scalar");
        return ComplexScalarField(grid, data, kind == FieldKind::Real);
    }
    HermitianMatrixField as_hermitian() const {
        if (kind != FieldKind::Hermitian) throw std::runtime_error("GMAF1: scalar field is not hermitian");
        return HermitianMatrixField(grid, data);
    }
};

inline LoadedField read_gmaf(std::istream& is) {
    std::string magic;
    if (!std::getline(is, magic) || magic != "GMAF1") throw std::runtime_error("GMAF1: bad magic");
    std::string header;
    if (!std::getline(is, header)) throw std::runtime_error("GMAF1: missing header line");
    std::istringstream hs(header);
    int n = 0;
    if (!(hs >> n)) throw std::runtime_error("GMAF1: bad dimension");
    std::vector<int> res(static_cast<std::size_t>(2 * n));
    for (int& r : res)
        if (!(hs >> r)) throw std::runtime_error("GMAF1: bad resolution list");
    std::string kind_name;
    if (!(hs >> kind_name)) throw std::runtime_error("GMAF1: missing kind");

    LoadedField out{PeriodicGrid(n, res), FieldKind::Real, {}};
    std::size_t total = out.grid.size();
    if (kind_name == "real") {
        out.kind = FieldKind::Real;
        std::vector<double> buf(total);
        io_detail::read_doubles(is, buf.data(), buf.size());
        out.data.resize(total);
        for (std::size_t i = 0; i < total; ++i) out.data[i] = Complex(buf[i], 0.0);
    } else if (kind_name == "complex" || kind_name == "hermitian") {
        out.kind = kind_name == "complex" ? FieldKind::Complex : FieldKind::Hermitian;
        std::size_t count = kind_name == "complex" ? total : total * static_cast<std::size_t>(n * n);
        out.data.resize(count);
        io_detail::read_doubles(is, reinterpret_cast<double*>(out.data.data()), 2 * count);
    } else {
        throw std::runtime_error("GMAF1: unknown kind '" + kind_name + "'");
    }
    return out;
}

template <typename Field>
inline void save_gmaf(const std::filesystem::path& path, const Field& f) {
    std::ostringstream os(std::ios::binary);
    write_gmaf(os, f);
    io_detail::write_atomic(path, os.str());
}

inline LoadedField load_gmaf(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    return read_gmaf(is);
}

// ---------------------------------------------------------------------------
// Run configuration (JSON)
// ---------------------------------------------------------------------------

struct MetricEntryConfig {
    int i = 0, j = 0;
    TrigExpression re, im;
};

struct RunConfig {
    int n = 1;
    std::vector<int> res;  // 2n entries

    bool flat_metric = true;
    std::vector<MetricEntryConfig> metric_perturbation;
    bool metric_check_positivity = true;

    bool a_constant = false;
    std::vector<Complex> a_const;  // n values when a_constant
    struct FormComponent {
        TrigExpression re, im;
    };
    std::vector<FormComponent> a_components;  // n entries otherwise (may be empty: a = 0)

    TrigExpression F;
    std::optional<TrigExpression> truth;  // manufactured u*

    SolverConfig solver;

    std::string out_dir = "out";
    std::vector<std::string> monitors = {"estimates"};
    int uniqueness_trials = 3;
    std::uint64_t seed = 1;
};

namespace io_detail {

using nlohmann::json;

inline void require_keys(const json& obj, const std::string& path, std::initializer_list<const char*> known,
                         bool strict) {
    if (!strict || !obj.is_object()) return;
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) throw ConfigError(path + "/" + it.key(), "unknown key (strict mode)");
    }
}

inline TrigExpression parse_trig(const json& j, const std::string& path, int axes) {
    if (!j.is_array()) throw ConfigError(path, "expected an array of trig terms");
    TrigExpression expr;
    int idx = 0;
    for (const json& t : j) {
        std::string tpath = path + "/" + std::to_string(idx++);
        if (!t.is_object()) throw ConfigError(tpath, "expected a trig term object");
        if (!t.contains("amp") || !t["amp"].is_number()) throw ConfigError(tpath + "/amp", "missing amplitude");
        if (!t.contains("k") || !t["k"].is_array()) throw ConfigError(tpath + "/k", "missing wavevector");
        std::vector<int> k;
        for (const json& c : t["k"]) {
            if (!c.is_number_integer()) throw ConfigError(tpath + "/k", "wavevector must be integers");
            k.push_back(c.get<int>());
        }
        if (static_cast<int>(k.size()) != axes)
            throw ConfigError(tpath + "/k", "wavevector must have 2n = " + std::to_string(axes) + " entries");
        std::string phase = t.value("phase", "cos");
        if (phase != "cos" && phase != "sin") throw ConfigError(tpath + "/phase", "phase must be cos or sin");
        expr.add(t["amp"].get<double>(), std::move(k),
                 phase == "cos" ? TrigTerm::Phase::Cos : TrigTerm::Phase::Sin);
    }
    return expr;
}

inline json trig_to_json(const TrigExpression& expr) {
    json arr = json::array();
    for (const TrigTerm& t : expr.terms()) {
        json term;
        term["amp"] = t.amplitude;
        term["k"] = t.wavevector;
        term["phase"] = t.phase == TrigTerm::Phase::Cos ? "cos" : "sin";
        arr.push_back(term);
    }
    return arr;
}

}  // namespace io_detail

inline RunConfig parse_config(const std::string& text, bool strict = false) {
    using nlohmann::json;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("/", std::string("not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("/", "top level must be an object");
    io_detail::require_keys(j, "", {"n", "res", "metric", "a", "F", "truth", "solver", "outputs",
                                    "uniqueness_trials", "seed"},
                            strict);

    RunConfig cfg;
    if (!j.contains("n") || !j["n"].is_number_integer()) throw ConfigError("/n", "required integer");
    cfg.n = j["n"].get<int>();
    if (cfg.n < 1 || cfg.n > 3) throw ConfigError("/n", "complex dimension must be 1..3");
    const int axes = 2 * cfg.n;

    if (!j.contains("res")) throw ConfigError("/res", "required");
    if (j["res"].is_number_integer()) {
        cfg.res.assign(static_cast<std::size_t>(axes), j["res"].get<int>());
    } else if (j["res"].is_array()) {
        for (const json& r : j["res"]) {
            if (!r.is_number_integer()) throw ConfigError("/res", "entries must be integers");
            cfg.res.push_back(r.get<int>());
        }
        if (static_cast<int>(cfg.res.size()) != axes)
            throw ConfigError("/res", "need 2n = " + std::to_string(axes) + " entries");
    } else {
        throw ConfigError("/res", "expected integer or array");
    }
    for (int a = 0; a < axes; ++a) {
        int r = cfg.res[static_cast<std::size_t>(a)];
        if (r < 4 || r % 2 != 0)
            throw ConfigError("/res/" + std::to_string(a),
                              "resolution must be even and >= 4 on axis " + std::to_string(a) + ", got " +
                                  std::to_string(r));
    }

    if (j.contains("metric") && !(j["metric"].is_string() && j["metric"] == "flat")) {
        const json& m = j["metric"];
        if (!m.is_object()) throw ConfigError("/metric", "expected \"flat\" or a perturbation object");
        io_detail::require_keys(m, "/metric", {"perturbation", "check_positivity"}, strict);
        cfg.flat_metric = false;
        cfg.metric_check_positivity = m.value("check_positivity", true);
        if (!m.contains("perturbation") || !m["perturbation"].is_array())
            throw ConfigError("/metric/perturbation", "required array of entries");
        int idx = 0;
        for (const json& e : m["perturbation"]) {
            std::string path = "/metric/perturbation/" + std::to_string(idx++);
            io_detail::require_keys(e, path, {"i", "j", "re", "im"}, strict);
            MetricEntryConfig me;
            me.i = e.value("i", -1);
            me.j = e.value("j", -1);
            if (me.i < 0 || me.i >= cfg.n || me.j < 0 || me.j >= cfg.n)
                throw ConfigError(path, "entry indices out of range");
            if (e.contains("re")) me.re = io_detail::parse_trig(e["re"], path + "/re", axes);
            if (e.contains("im")) me.im = io_detail::parse_trig(e["im"], path + "/im", axes);
            if (me.i == me.j && !me.im.empty())
                throw ConfigError(path + "/im", "diagonal metric entries must be real");
            cfg.metric_perturbation.push_back(std::move(me));
        }
    }

    if (j.contains("a")) {
        const json& a = j["a"];
        if (!a.is_object()) throw ConfigError("/a", "expected an object");
        io_detail::require_keys(a, "/a", {"constant", "components"}, strict);
        if (a.contains("constant")) {
            cfg.a_constant = true;
            if (!a["constant"].is_array() || static_cast<int>(a["constant"].size()) != cfg.n)
                throw ConfigError("/a/constant", "need n = " + std::to_string(cfg.n) + " complex pairs");
            for (const json& c : a["constant"]) {
                if (!c.is_array() || c.size() != 2 || !c[0].is_number() || !c[1].is_number())
                    throw ConfigError("/a/constant", "each entry must be [re, im]");
                cfg.a_const.emplace_back(c[0].get<double>(), c[1].get<double>());
            }
        } else if (a.contains("components")) {
            if (!a["components"].is_array() || static_cast<int>(a["components"].size()) != cfg.n)
                throw ConfigError("/a/components", "need n = " + std::to_string(cfg.n) + " components");
            int idx = 0;
            for (const json& c : a["components"]) {
                std::string path = "/a/components/" + std::to_string(idx++);
                io_detail::require_keys(c, path, {"re", "im"}, strict);
                RunConfig::FormComponent fc;
                if (c.contains("re")) fc.re = io_detail::parse_trig(c["re"], path + "/re", axes);
                if (c.contains("im")) fc.im = io_detail::parse_trig(c["im"], path + "/im", axes);
                cfg.a_components.push_back(std::move(fc));
            }
        } else {
            throw ConfigError("/a", "expected \"constant\" or \"components\"");
        }
    }

    if (j.contains("F")) cfg.F = io_detail::parse_trig(j["F"], "/F", axes);
    if (j.contains("truth")) cfg.truth = io_detail::parse_trig(j["truth"], "/truth", axes);

    if (j.contains("solver")) {
        const json& s = j["solver"];
        if (!s.is_object()) throw ConfigError("/solver", "expected an object");
        io_detail::require_keys(s, "/solver",
                                {"t_steps", "newton_tol", "max_newton", "krylov_tol", "krylov_max",
                                 "krylov_restart", "eig_floor", "damping_min", "dealias",
                                 "secant_extrapolation"},
                                strict);
        cfg.solver.t_steps = s.value("t_steps", cfg.solver.t_steps);
        cfg.solver.newton_tol = s.value("newton_tol", cfg.solver.newton_tol);
        cfg.solver.max_newton = s.value("max_newton", cfg.solver.max_newton);
        cfg.solver.krylov_tol = s.value("krylov_tol", cfg.solver.krylov_tol);
        cfg.solver.krylov_max = s.value("krylov_max", cfg.solver.krylov_max);
        cfg.solver.krylov_restart = s.value("krylov_restart", cfg.solver.krylov_restart);
        cfg.solver.eig_floor = s.value("eig_floor", cfg.solver.eig_floor);
        cfg.solver.damping_min = s.value("damping_min", cfg.solver.damping_min);
        cfg.solver.dealias = s.value("dealias", cfg.solver.dealias);
        cfg.solver.secant_extrapolation = s.value("secant_extrapolation", cfg.solver.secant_extrapolation);
        try {
            cfg.solver.validate();
        } catch (const std::exception& e) {
            throw ConfigError("/solver", e.what());
        }
    }

    if (j.contains("outputs")) {
        const json& o = j["outputs"];
        if (!o.is_object()) throw ConfigError("/outputs", "expected an object");
        io_detail::require_keys(o, "/outputs", {"dir", "monitors"}, strict);
        cfg.out_dir = o.value("dir", cfg.out_dir);
        if (o.contains("monitors")) {
            cfg.monitors.clear();
            for (const json& m : o["monitors"]) {
                std::string name = m.get<std::string>();
                if (name != "estimates" && name != "aeppli" && name != "uniqueness" && name != "kernel")
                    throw ConfigError("/outputs/monitors", "unknown monitor '" + name + "'");
                cfg.monitors.push_back(name);
            }
        }
    }
    cfg.uniqueness_trials = j.value("uniqueness_trials", cfg.uniqueness_trials);
    cfg.seed = j.value("seed", cfg.seed);

    // expressions must be resolvable on the grid
    PeriodicGrid grid(cfg.n, cfg.res);
    auto check = [&](const TrigExpression& e, const std::string& path) {
        try {
            e.check_resolvable(grid);
        } catch (const std::exception& ex) {
            throw ConfigError(path, ex.what());
        }
    };
    check(cfg.F, "/F");
    if (cfg.truth) check(*cfg.truth, "/truth");
    for (std::size_t i = 0; i < cfg.a_components.size(); ++i) {
        check(cfg.a_components[i].re, "/a/components/" + std::to_string(i) + "/re");
        check(cfg.a_components[i].im, "/a/components/" + std::to_string(i) + "/im");
    }
    for (std::size_t i = 0; i < cfg.metric_perturbation.size(); ++i) {
        check(cfg.metric_perturbation[i].re, "/metric/perturbation/" + std::to_string(i) + "/re");
        check(cfg.metric_perturbation[i].im, "/metric/perturbation/" + std::to_string(i) + "/im");
    }
    return cfg;
}

inline nlohmann::json serialize_config(const RunConfig& cfg) {
    using nlohmann::json;
    json j;
    j["n"] = cfg.n;
    j["res"] = cfg.res;
    if (cfg.flat_metric) {
        j["metric"] = "flat";
    } else {
        json pert = json::array();
        for (const MetricEntryConfig& e : cfg.metric_perturbation) {
            json je;
            je["i"] = e.i;
            je["j"] = e.j;
            je["re"] = io_detail::trig_to_json(e.re);
            je["im"] = io_detail::trig_to_json(e.im);
            pert.push_back(je);
        }
        j["metric"] = {{"perturbation", pert}, {"check_positivity", cfg.metric_check_positivity}};
    }
    if (cfg.a_constant) {
        json arr = json::array();
        for (const Complex& c : cfg.a_const) arr.push_back({c.real(), c.imag()});
        j["a"] = {{"constant", arr}};
    } else if (!cfg.a_components.empty()) {
        json arr = json::array();
        for (const RunConfig::FormComponent& c : cfg.a_components)
            arr.push_back({{"re", io_detail::trig_to_json(c.re)}, {"im", io_detail::trig_to_json(c.im)}});
        j["a"] = {{"components", arr}};
    }
    j["F"] = io_detail::trig_to_json(cfg.F);
    if (cfg.truth) j["truth"] = io_detail::trig_to_json(*cfg.truth);
    j["solver"] = {{"t_steps", cfg.solver.t_steps},
                   {"newton_tol", cfg.solver.newton_tol},
                   {"max_newton", cfg.solver.max_newton},
                   {"krylov_tol", cfg.solver.krylov_tol},
                   {"krylov_max", cfg.solver.krylov_max},
                   {"krylov_restart", cfg.solver.krylov_restart},
                   {"eig_floor", cfg.solver.eig_floor},
                   {"damping_min", cfg.solver.damping_min},
                   {"dealias", cfg.solver.dealias},
                   {"secant_extrapolation", cfg.solver.secant_extrapolation}};
    j["outputs"] = {{"dir", cfg.out_dir}, {"monitors", cfg.monitors}};
    j["uniqueness_trials"] = cfg.uniqueness_trials;
    j["seed"] = cfg.seed;
    return j;
}

// Build the problem data a config describes; the F field can be overridden
// (the manufactured harness substitutes a spectrally computed source).
inline ProblemData build_problem(const RunConfig& cfg) {
    PeriodicGrid grid(cfg.n, cfg.res);
    HermitianMatrixField g = HermitianMatrixField::identity(grid);
    if (!cfg.flat_metric) {
        for (const MetricEntryConfig& e : cfg.metric_perturbation) {
            ComplexScalarField re = sample_field(e.re, grid);
            ComplexScalarField im = sample_field(e.im, grid);
            for (std::size_t pt = 0; pt < grid.size(); ++pt) {
                Complex v(re[pt].real(), im[pt].real());
                if (e.i == e.j) {
                    g.at(pt, e.i, e.i) += Complex(v.real(), 0.0);
                } else {
                    g.at(pt, e.i, e.j) += v;
                    g.at(pt, e.j, e.i) += std::conj(v);
                }
            }
        }
        if (cfg.metric_check_positivity) {
            for (std::size_t pt = 0; pt < grid.size(); ++pt)
                if (herm_min_eigenvalue(g.matrix(pt), cfg.n) <= 0.0)
                    throw ConfigError("/metric", "perturbed metric is not positive definite");
        }
    }

    OneFormField a(grid);
    if (cfg.a_constant) {
        for (int i = 0; i < cfg.n; ++i) {
            ComplexScalarField c(grid);
            for (std::size_t pt = 0; pt < grid.size(); ++pt) c[pt] = cfg.a_const[static_cast<std::size_t>(i)];
            a.component(i) = std::move(c);
        }
    } else {
        for (std::size_t i = 0; i < cfg.a_components.size(); ++i) {
            ComplexScalarField re = sample_field(cfg.a_components[i].re, grid);
            ComplexScalarField im = sample_field(cfg.a_components[i].im, grid);
            ComplexScalarField c(grid);
            for (std::size_t pt = 0; pt < grid.size(); ++pt) c[pt] = Complex(re[pt].real(), im[pt].real());
            a.component(static_cast<int>(i)) = std::move(c);
        }
    }

    ComplexScalarField F = sample_field(cfg.F, grid);
    return make_problem(grid, std::move(g), std::move(a), std::move(F));
}

// ---------------------------------------------------------------------------
// Result bundles
// ---------------------------------------------------------------------------

inline nlohmann::json report_to_json(const EstimateReport& r) {
    nlohmann::json j;
    j["sup_abs_u"] = r.sup_abs_u;
    j["grad_sup_sq"] = r.grad_sup_sq;
    j["K"] = r.K;
    j["lambda1_max"] = r.lambda1_max;
    j["hessian_sup"] = r.hessian_sup;
    j["c2_ratio"] = r.c2_ratio;
    j["b_bound_slack"] = r.b_bound_slack;
    if (r.aeppli_defect) j["aeppli_defect"] = *r.aeppli_defect;
    j["sup_F"] = r.sup_F;
    return j;
}

struct RunResult {
    bool converged = false;
    Solution solution;
    std::optional<EstimateReport> report;
    std::optional<UniquenessReport> uniqueness;
    std::optional<double> kernel_defect;
    std::string abort_reason;
};

inline void write_bundle(const std::filesystem::path& dir, const RunConfig& cfg, const ProblemData& p,
                         const RunResult& result, double elapsed_seconds) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    nlohmann::json meta;
    meta["version"] = kVersion;
    meta["config"] = serialize_config(cfg);
    meta["converged"] = result.converged;
    meta["elapsed_seconds"] = elapsed_seconds;
    meta["b"] = result.solution.b;
    meta["final_residual"] = result.solution.final_residual;
    meta["min_eig"] = result.solution.min_eig;
    if (!result.abort_reason.empty()) meta["abort_reason"] = result.abort_reason;
    if (result.kernel_defect) meta["kernel_defect"] = *result.kernel_defect;
    if (result.uniqueness) {
        meta["uniqueness"] = {{"trials", result.uniqueness->trials},
                              {"converged_trials", result.uniqueness->converged_trials},
                              {"max_u_distance", result.uniqueness->max_u_distance},
                              {"max_b_distance", result.uniqueness->max_b_distance},
                              {"pass", result.uniqueness->pass}};
    }
    io_detail::write_atomic(dir / "metadata.json", meta.dump(2) + "\n");

    save_gmaf(dir / "u.gmaf", result.solution.u);
    save_gmaf(dir / "F.gmaf", p.F);
    if (result.converged) {
        OperatorOutput op = assemble_gtilde(p, result.solution.u);
        save_gmaf(dir / "gtilde.gmaf", op.gtilde);
    }
    if (result.report)
        io_detail::write_atomic(dir / "estimate_report.json", report_to_json(*result.report).dump(2) + "\n");
    io_detail::write_atomic(dir / "trace.txt", format_trace(result.solution.trace));
}

inline RunResult run_solve(const RunConfig& cfg, const std::optional<ComplexScalarField>& F_override = {},
                           int threads = 1) {
    ProblemData p = build_problem(cfg);
    if (F_override) {
        F_override->require_real("run_solve: F override");
        p = make_problem(p.grid, p.g, p.a, *F_override);
    }

    auto t0 = std::chrono::steady_clock::now();
    RunResult result;
    try {
        result.solution = continuity_solve(p, cfg.solver);
        result.converged = true;
    } catch (const SolverAbort& e) {
        result.abort_reason = e.what();
        result.solution.u = normalize_sup(e.last_good().u);
        result.solution.b = e.last_good().b;
        result.solution.final_residual = e.last_good().residual_norm;
        result.solution.min_eig = e.last_good().min_eig;
        result.solution.trace = e.trace();
    }

    if (result.converged) {
        for (const std::string& m : cfg.monitors) {
            if (m == "estimates" || m == "aeppli") {
                if (!result.report) result.report = estimate_report(p, result.solution);
            } else if (m == "uniqueness") {
                result.uniqueness = uniqueness_probe(p, cfg.solver, cfg.uniqueness_trials, cfg.seed,
                                                     &result.solution, threads);
            } else if (m == "kernel") {
                OperatorOutput op = assemble_gtilde(p, result.solution.u);
                result.kernel_defect = kernel_density(op, p.a, cfg.solver).defect;
            }
        }
    }
    double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_bundle(cfg.out_dir, cfg, p, result, elapsed);
    return result;
}

struct VerificationReport {
    bool converged = false;
    double u_sup_error = 0.0;
    double b_abs = 0.0;
    double final_residual = 0.0;
    double truth_min_eig = 0.0;
};

// Manufactured-solution harness: F* = log det gtilde(u*) - log det g, solve
// with F = F*, compare against u* - sup u* and b = 0.
inline VerificationReport run_manufactured(const RunConfig& cfg) {
    if (!cfg.truth) throw ConfigError("/truth", "verify requires a truth expression");
    ProblemData p = build_problem(cfg);
    ComplexScalarField u_star = sample_field(*cfg.truth, p.grid);
    OperatorOutput op = assemble_gtilde(p, u_star);
    if (!op.positive())
        throw ConfigError("/truth", "manufactured potential is inadmissible (min_eig = " +
                                        std::to_string(op.min_eig) + ")");

    VerificationReport rep;
    rep.truth_min_eig = op.min_eig;
    ComplexScalarField F_star = op.log_det_ratio;
    RunResult run = run_solve(cfg, F_star);
    rep.converged = run.converged;
    rep.final_residual = run.solution.final_residual;
    if (run.converged) {
        ComplexScalarField diff = run.solution.u;
        diff -= normalize_sup(u_star);
        rep.u_sup_error = sup_abs(diff);
        rep.b_abs = std::abs(run.solution.b);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Bundle loading, validation, reporting
// ---------------------------------------------------------------------------

struct LoadedBundle {
    nlohmann::json metadata;
    RunConfig config;
    ComplexScalarField u;
    ComplexScalarField F;
    std::optional<HermitianMatrixField> gtilde;
    std::vector<TraceRecord> trace;
    std::optional<nlohmann::json> estimate;
};

inline LoadedBundle load_bundle(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    LoadedBundle b;
    auto read_text = [&](const fs::path& f) {
        std::ifstream is(f, std::ios::binary);
        if (!is) throw std::runtime_error("bundle integrity failure: missing " + f.string());
        std::ostringstream ss;
        ss << is.rdbuf();
        return ss.str();
    };
    try {
        b.metadata = nlohmann::json::parse(read_text(dir / "metadata.json"));
    } catch (const nlohmann::json::parse_error&) {
        throw std::runtime_error("bundle integrity failure: corrupt " + (dir / "metadata.json").string());
    }
    b.config = parse_config(b.metadata.at("config").dump(), false);
    b.u = load_gmaf(dir / "u.gmaf").as_scalar();
    b.F = load_gmaf(dir / "F.gmaf").as_scalar();
    if (fs::exists(dir / "gtilde.gmaf")) b.gtilde = load_gmaf(dir / "gtilde.gmaf").as_hermitian();
    if (fs::exists(dir / "estimate_report.json"))
        b.estimate = nlohmann::json::parse(read_text(dir / "estimate_report.json"));

    std::istringstream ts(read_text(dir / "trace.txt"));
    std::string line;
    while (std::getline(ts, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        TraceRecord r;
        if (!(ls >> r.t >> r.newton_iter >> r.residual_sup >> r.min_eig >> r.b))
            throw std::runtime_error("bundle integrity failure: corrupt " + (dir / "trace.txt").string());
        b.trace.push_back(r);
    }
    return b;
}

// Re-validate the module invariants of a converged bundle: gtilde Hermitian,
// sup u = 0, residual within tolerance.
inline void validate_bundle(const LoadedBundle& b) {
    if (!b.metadata.value("converged", false)) return;
    if (!b.gtilde) throw std::runtime_error("bundle invariant: converged bundle lacks gtilde.gmaf");
    b.gtilde->check_hermitian();
    if (std::abs(sup(b.u)) > 1e-12) throw std::runtime_error("bundle invariant: sup u != 0");

    RunConfig cfg = b.config;
    ProblemData p = build_problem(cfg);
    p = make_problem(p.grid, p.g, p.a, b.F);
    ComplexScalarField u = b.u;
    ComplexScalarField r = ma_residual(p, u, b.metadata.at("b").get<double>(), 1.0);
    if (sup_abs(r) > 10.0 * cfg.solver.newton_tol)
        throw std::runtime_error("bundle invariant: residual exceeds tolerance");

    OperatorOutput op = assemble_gtilde(p, u);
    double max_diff = 0.0;
    for (std::size_t i = 0; i < op.gtilde.entries().size(); ++i)
        max_diff = std::max(max_diff, std::abs(op.gtilde.entries()[i] - b.gtilde->entries()[i]));
    if (max_diff > 1e-9) throw std::runtime_error("bundle invariant: stored gtilde does not match state");
}

struct RenderedReport {
    std::string text;
    std::string csv;
};

inline RenderedReport run_report(const std::filesystem::path& dir) {
    LoadedBundle b = load_bundle(dir);
    RenderedReport out;

    std::ostringstream text;
    text.precision(12);
    text << "solve bundle: " << dir.string() << "\n";
    text << "version: " << b.metadata.value("version", "?") << "\n";
    text << "converged: " << (b.metadata.value("converged", false) ? "yes" : "no") << "\n";
    text << "b = " << b.metadata.value("b", 0.0) << "\n";
    text << "final residual (sup) = " << b.metadata.value("final_residual", 0.0) << "\n";
    text << "min eigenvalue of gtilde = " << b.metadata.value("min_eig", 0.0) << "\n";
    if (b.estimate) {
        text << "estimate monitors:\n";
        for (auto it = b.estimate->begin(); it != b.estimate->end(); ++it)
            text << "  " << it.key() << " = " << it.value().dump() << "\n";
    }
    if (b.metadata.contains("uniqueness")) {
        const auto& u = b.metadata["uniqueness"];
        text << "uniqueness probe: " << (u.value("pass", false) ? "pass" : "FAIL") << " (max |du| = "
             << u.value("max_u_distance", 0.0) << ", max |db| = " << u.value("max_b_distance", 0.0) << ")\n";
    }
    text << "newton trace: " << b.trace.size() << " records\n";
    out.text = text.str();

    std::ostringstream csv;
    csv.precision(17);
    for (const TraceRecord& r : b.trace) {
        csv << r.t << ',' << r.newton_iter << ',' << r.residual_sup << ',' << r.min_eig << ',' << r.b;
        if (b.estimate) {
            csv << ',' << b.estimate->value("sup_abs_u", 0.0) << ',' << b.estimate->value("grad_sup_sq", 0.0)
                << ',' << b.estimate->value("c2_ratio", 0.0) << ',' << b.estimate->value("lambda1_max", 0.0);
        }
        csv << '\n';
    }
    out.csv = csv.str();
    return out;
}

}  // namespace gma
