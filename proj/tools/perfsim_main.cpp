#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "perfsim/dynamics.hpp"
#include "perfsim/errors.hpp"
#include "perfsim/experiments.hpp"
#include "perfsim/oracle.hpp"
#include "perfsim/version.hpp"

namespace {

using ordered_json = nlohmann::ordered_json;
using namespace perfsim;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRegime = 2;
constexpr int kExitCheckFailed = 3;

// ---------------------------------------------------------------------------
// formatting

std::string fmt_double(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string fmt_opt(const std::optional<double>& v) {
    return v ? fmt_double(*v) : std::string();
}

// ---------------------------------------------------------------------------
// config plumbing

[[noreturn]] void config_fail(const std::string& msg) {
    throw ConfigError(msg);
}

void require_object(const ordered_json& j, const std::string& path) {
    if (!j.is_object()) {
        config_fail("config section '" + path + "' must be an object");
    }
}

void check_keys(const ordered_json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* k : allowed) {
            if (item.key() == k) {
                known = true;
                break;
            }
        }
        if (!known) {
            config_fail("unknown config key: " +
                        (path.empty() ? item.key() : path + "." + item.key()));
        }
    }
}

double get_number(const ordered_json& obj, const std::string& path,
                  const std::string& key, double fallback) {
    if (!obj.contains(key)) {
        return fallback;
    }
    const auto& v = obj.at(key);
    if (!v.is_number()) {
        config_fail("config key " + path + "." + key + " must be a number");
    }
    return v.get<double>();
}

std::string get_string(const ordered_json& obj, const std::string& path,
                       const std::string& key, const std::string& fallback) {
    if (!obj.contains(key)) {
        return fallback;
    }
    const auto& v = obj.at(key);
    if (!v.is_string()) {
        config_fail("config key " + path + "." + key + " must be a string");
    }
    return v.get<std::string>();
}

// The fully resolved settings for one invocation. Flags override file values;
// the echo embedded into artifacts is rebuilt from these fields, so it always
// reflects what actually ran. The thread count is deliberately not part of
// the echo (it can never change results).
struct Resolved {
    std::uint64_t seed = 0;
    int threads = 1;
    std::string out_path;
    std::string format;  // "csv" or "json"

    // shift
    int d = 1;
    double sigma0 = 1.0;
    double sigma = 0.0;
    double mu0 = 1.0;
    double mu = 0.0;
    std::string base = "gaussian";
    std::optional<ordered_json> sigma0_mat;  // d > 1
    std::optional<ordered_json> mu0_vec;     // d > 1
    std::optional<ordered_json> mu_mat;      // d > 1

    // loss
    std::string loss_kind = "squared";
    std::optional<ordered_json> loss_a;

    // run
    std::string algo = "rrm";
    long long horizon = 50;
    std::string mode;  // "", "exact", "integer", "effective"
    std::string sample_kind = "constant";
    double sample_n = 1.0;
    std::vector<double> sample_values;
    std::string reg_kind = "none";  // none|constant|linear-t|custom
    std::string reg_lambda_raw;     // number or "star"
    std::vector<double> reg_values;
    std::string regularizer = "proximal";
    bool record_metrics = true;
    std::vector<double> theta0;

    // experiment
    std::string exp_name;
    long long reps = -1;
    long long exp_horizon = -1;
    std::optional<long long> exp_n;
    std::optional<double> exp_lambda;
    TolerancePolicy tol;

    // sweep
    std::vector<std::pair<std::string, std::vector<double>>> grid;
    std::vector<std::string> sweep_outputs;

    bool shift_given = false;
};

BaseNoise parse_base(const std::string& s) {
    if (s == "gaussian") {
        return BaseNoise{NoiseKind::StandardGaussian};
    }
    if (s == "rademacher") {
        return BaseNoise{NoiseKind::Rademacher};
    }
    config_fail("shift.base must be 'gaussian' or 'rademacher'");
}

Eigen::MatrixXd parse_matrix(const ordered_json& j, int d,
                             const std::string& what) {
    if (j.is_number()) {
        return j.get<double>() * Eigen::MatrixXd::Identity(d, d);
    }
    if (!j.is_array() || j.size() != static_cast<std::size_t>(d)) {
        config_fail(what + " must be a number or a " + std::to_string(d) +
                    "-row matrix");
    }
    Eigen::MatrixXd m(d, d);
    for (int i = 0; i < d; ++i) {
        const auto& row = j.at(i);
        if (!row.is_array() || row.size() != static_cast<std::size_t>(d)) {
            config_fail(what + " rows must have length " + std::to_string(d));
        }
        for (int k = 0; k < d; ++k) {
            if (!row.at(k).is_number()) {
                config_fail(what + " entries must be numbers");
            }
            m(i, k) = row.at(k).get<double>();
        }
    }
    return m;
}

Eigen::VectorXd parse_vector(const ordered_json& j, int d,
                             const std::string& what) {
    if (!j.is_array() || j.size() != static_cast<std::size_t>(d)) {
        config_fail(what + " must be an array of length " + std::to_string(d));
    }
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) {
        if (!j.at(i).is_number()) {
            config_fail(what + " entries must be numbers");
        }
        v[i] = j.at(i).get<double>();
    }
    return v;
}

struct ModelBundle {
    std::optional<ScalarShiftModel> scalar;
    std::optional<LinearShiftModel> linear;
    std::optional<QuadraticLoss> loss;
};

ModelBundle build_models(const Resolved& r) {
    ModelBundle b;
    const BaseNoise base = parse_base(r.base);
    if (r.d == 1 && !r.mu0_vec) {
        b.scalar = ScalarShiftModel(r.sigma0, r.sigma, r.mu0, r.mu);
        b.linear = b.scalar->to_linear(base);
    } else {
        const int d = r.d;
        if (r.sigma != 0.0) {
            config_fail(
                "shift.sigma (covariance dependence on theta) is only "
                "supported for d = 1");
        }
        Eigen::MatrixXd s0 =
            r.sigma0_mat ? parse_matrix(*r.sigma0_mat, d, "shift.sigma0")
                         : r.sigma0 * Eigen::MatrixXd::Identity(d, d);
        Eigen::VectorXd m0 = r.mu0_vec
                                 ? parse_vector(*r.mu0_vec, d, "shift.mu0")
                                 : Eigen::VectorXd::Constant(d, r.mu0);
        Eigen::MatrixXd mu = r.mu_mat ? parse_matrix(*r.mu_mat, d, "shift.mu")
                                      : r.mu * Eigen::MatrixXd::Identity(d, d);
        b.linear = LinearShiftModel::mean_shift(std::move(s0), std::move(m0),
                                                std::move(mu), base);
    }
    const int d = b.linear->dim();
    if (r.loss_kind == "squared") {
        b.loss = QuadraticLoss::squared(d);
    } else if (r.loss_kind == "mahalanobis") {
        if (!r.loss_a) {
            config_fail("loss.kind 'mahalanobis' requires loss.a");
        }
        b.loss = QuadraticLoss(parse_matrix(*r.loss_a, d, "loss.a"));
    } else {
        config_fail("loss.kind must be 'squared' or 'mahalanobis'");
    }
    return b;
}

// λ given as a literal value or the token "star" (resolved via the scalar
// closed form).
double resolve_lambda(const std::string& raw, const Resolved& r) {
    if (raw == "star") {
        if (!r.shift_given && r.d != 1) {
            config_fail("lambda 'star' needs a scalar shift instance");
        }
        const ScalarShiftModel m(r.sigma0, r.sigma, r.mu0, r.mu);
        const SolutionReport sol = solve_scalar(m);
        if (!sol.lambda_star || !(sol.flags.lambda_star_valid ||
                                  *sol.lambda_star == 0.0)) {
            throw WrongRegimeError(
                "this instance has no usable ridge weight: the fixed-point "
                "correction formula gives " +
                (sol.lambda_star ? fmt_double(*sol.lambda_star)
                                 : std::string("no value")));
        }
        return *sol.lambda_star;
    }
    try {
        std::size_t pos = 0;
        const double v = std::stod(raw, &pos);
        if (pos != raw.size()) {
            config_fail("lambda must be a number or 'star'");
        }
        return v;
    } catch (const std::invalid_argument&) {
        config_fail("lambda must be a number or 'star'");
    } catch (const std::out_of_range&) {
        config_fail("lambda is out of range");
    }
}

// ---------------------------------------------------------------------------
// config file loading

void apply_config_file(const std::string& path, Resolved& r) {
    std::ifstream in(path);
    if (!in) {
        config_fail("cannot open config file: " + path);
    }
    ordered_json j;
    try {
        j = ordered_json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        config_fail("config file is not valid JSON: " + std::string(e.what()));
    }
    require_object(j, "(root)");
    check_keys(j, "",
               {"seed", "shift", "loss", "run", "experiment", "sweep",
                "output"});
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer()) {
            config_fail("config key seed must be an integer");
        }
        r.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("shift")) {
        const auto& s = j["shift"];
        require_object(s, "shift");
        check_keys(s, "shift", {"d", "sigma0", "sigma", "mu0", "mu", "base"});
        r.shift_given = true;
        r.d = static_cast<int>(get_number(s, "shift", "d", 1.0));
        if (r.d < 1) {
            config_fail("shift.d must be >= 1");
        }
        r.base = get_string(s, "shift", "base", r.base);
        if (s.contains("sigma0") && s["sigma0"].is_array()) {
            r.sigma0_mat = s["sigma0"];
        } else {
            r.sigma0 = get_number(s, "shift", "sigma0", r.sigma0);
        }
        if (s.contains("mu0") && s["mu0"].is_array()) {
            r.mu0_vec = s["mu0"];
        } else {
            r.mu0 = get_number(s, "shift", "mu0", r.mu0);
        }
        if (s.contains("mu") && s["mu"].is_array()) {
            r.mu_mat = s["mu"];
        } else {
            r.mu = get_number(s, "shift", "mu", r.mu);
        }
        r.sigma = get_number(s, "shift", "sigma", r.sigma);
    }
    if (j.contains("loss")) {
        const auto& l = j["loss"];
        require_object(l, "loss");
        check_keys(l, "loss", {"kind", "a"});
        r.loss_kind = get_string(l, "loss", "kind", r.loss_kind);
        if (l.contains("a")) {
            r.loss_a = l["a"];
        }
    }
    if (j.contains("run")) {
        const auto& run = j["run"];
        require_object(run, "run");
        check_keys(run, "run",
                   {"algo", "T", "theta0", "mode", "samples", "reg",
                    "record_metrics"});
        r.algo = get_string(run, "run", "algo", r.algo);
        r.horizon = static_cast<long long>(
            get_number(run, "run", "T", static_cast<double>(r.horizon)));
        r.mode = get_string(run, "run", "mode", r.mode);
        if (run.contains("record_metrics")) {
            if (!run["record_metrics"].is_boolean()) {
                config_fail("run.record_metrics must be a boolean");
            }
            r.record_metrics = run["record_metrics"].get<bool>();
        }
        if (run.contains("theta0")) {
            const auto& t0 = run["theta0"];
            if (!t0.is_array()) {
                config_fail("run.theta0 must be an array");
            }
            r.theta0.clear();
            for (const auto& v : t0) {
                if (!v.is_number()) {
                    config_fail("run.theta0 entries must be numbers");
                }
                r.theta0.push_back(v.get<double>());
            }
        }
        if (run.contains("samples")) {
            const auto& sm = run["samples"];
            require_object(sm, "run.samples");
            check_keys(sm, "run.samples", {"kind", "N", "values"});
            r.sample_kind = get_string(sm, "run.samples", "kind", "constant");
            r.sample_n = get_number(sm, "run.samples", "N", r.sample_n);
            if (sm.contains("values")) {
                const auto& vals = sm["values"];
                if (!vals.is_array() || vals.empty()) {
                    config_fail(
                        "run.samples.values must be a non-empty array");
                }
                r.sample_values.clear();
                for (const auto& v : vals) {
                    r.sample_values.push_back(v.get<double>());
                }
            }
        }
        if (run.contains("reg")) {
            const auto& rg = run["reg"];
            require_object(rg, "run.reg");
            check_keys(rg, "run.reg",
                       {"kind", "lambda", "values", "regularizer"});
            r.reg_kind = get_string(rg, "run.reg", "kind", r.reg_kind);
            r.regularizer =
                get_string(rg, "run.reg", "regularizer", r.regularizer);
            if (rg.contains("lambda")) {
                if (rg["lambda"].is_string()) {
                    r.reg_lambda_raw = rg["lambda"].get<std::string>();
                } else if (rg["lambda"].is_number()) {
                    r.reg_lambda_raw = fmt_double(rg["lambda"].get<double>());
                } else {
                    config_fail("run.reg.lambda must be a number or 'star'");
                }
                if (r.reg_kind == "none") {
                    r.reg_kind = "constant";
                }
            }
            if (rg.contains("values")) {
                const auto& vals = rg["values"];
                if (!vals.is_array() || vals.empty()) {
                    config_fail("run.reg.values must be a non-empty array");
                }
                r.reg_values.clear();
                for (const auto& v : vals) {
                    r.reg_values.push_back(v.get<double>());
                }
            }
        }
    }
    if (j.contains("experiment")) {
        const auto& e = j["experiment"];
        require_object(e, "experiment");
        check_keys(e, "experiment",
                   {"name", "reps", "T", "N", "lambda", "rel_tol", "se_mult",
                    "abs_tol"});
        r.exp_name = get_string(e, "experiment", "name", r.exp_name);
        r.reps = static_cast<long long>(
            get_number(e, "experiment", "reps", static_cast<double>(r.reps)));
        r.exp_horizon = static_cast<long long>(get_number(
            e, "experiment", "T", static_cast<double>(r.exp_horizon)));
        if (e.contains("N")) {
            r.exp_n = static_cast<long long>(get_number(e, "experiment", "N", 0));
        }
        if (e.contains("lambda")) {
            r.exp_lambda = get_number(e, "experiment", "lambda", 0.0);
        }
        r.tol.rel_tol = get_number(e, "experiment", "rel_tol", r.tol.rel_tol);
        r.tol.se_mult = get_number(e, "experiment", "se_mult", r.tol.se_mult);
        r.tol.abs_tol = get_number(e, "experiment", "abs_tol", r.tol.abs_tol);
    }
    if (j.contains("sweep")) {
        const auto& s = j["sweep"];
        require_object(s, "sweep");
        check_keys(s, "sweep", {"over", "outputs"});
        if (s.contains("over")) {
            const auto& over = s["over"];
            require_object(over, "sweep.over");
            check_keys(over, "sweep.over",
                       {"sigma0", "sigma", "mu0", "mu", "N", "T", "lambda"});
            for (const auto& item : over.items()) {
                if (!item.value().is_array() || item.value().empty()) {
                    config_fail("sweep.over." + item.key() +
                                " must be a non-empty array");
                }
                std::vector<double> vals;
                for (const auto& v : item.value()) {
                    if (!v.is_number()) {
                        config_fail("sweep.over." + item.key() +
                                    " entries must be numbers");
                    }
                    vals.push_back(v.get<double>());
                }
                r.grid.emplace_back(item.key(), std::move(vals));
            }
        }
        if (s.contains("outputs")) {
            const auto& outs = s["outputs"];
            if (!outs.is_array()) {
                config_fail("sweep.outputs must be an array of metric names");
            }
            for (const auto& v : outs) {
                if (!v.is_string()) {
                    config_fail("sweep.outputs entries must be strings");
                }
                r.sweep_outputs.push_back(v.get<std::string>());
            }
        }
    }
    if (j.contains("output")) {
        const auto& o = j["output"];
        require_object(o, "output");
        check_keys(o, "output", {"path", "format"});
        r.out_path = get_string(o, "output", "path", r.out_path);
        r.format = get_string(o, "output", "format", r.format);
    }
}

// ---------------------------------------------------------------------------
// config echo

ordered_json shift_echo(const Resolved& r) {
    ordered_json s;
    s["d"] = r.d;
    s["sigma0"] = r.sigma0_mat ? *r.sigma0_mat : ordered_json(r.sigma0);
    s["sigma"] = r.sigma;
    s["mu0"] = r.mu0_vec ? *r.mu0_vec : ordered_json(r.mu0);
    s["mu"] = r.mu_mat ? *r.mu_mat : ordered_json(r.mu);
    s["base"] = r.base;
    return s;
}

ordered_json loss_echo(const Resolved& r) {
    ordered_json l;
    l["kind"] = r.loss_kind;
    if (r.loss_a) {
        l["a"] = *r.loss_a;
    }
    return l;
}

ordered_json base_echo(const Resolved& r) {
    ordered_json cfg;
    cfg["seed"] = r.seed;
    cfg["shift"] = shift_echo(r);
    cfg["loss"] = loss_echo(r);
    return cfg;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        config_fail("cannot write output file: " + path);
    }
    out << text;
}

void emit(const Resolved& r, const std::string& text) {
    if (r.out_path.empty()) {
        std::cout << text;
    } else {
        write_text(r.out_path, text);
    }
}

std::string csv_preamble(const ordered_json& cfg) {
    std::string s = "# version: ";
    s += kVersion;
    s += "\n# config: ";
    s += cfg.dump();
    s += "\n";
    return s;
}

// ---------------------------------------------------------------------------
// solve

int cmd_solve(const Resolved& r) {
    const ModelBundle b = build_models(r);
    ordered_json cfg = base_echo(r);
    ordered_json rep;
    rep["version"] = kVersion;
    rep["config"] = cfg;
    std::ostringstream table;
    if (b.scalar) {
        const SolutionReport sol = solve_scalar(*b.scalar);
        rep["theta_ps"] = sol.theta_ps;
        rep["theta_stat"] = sol.theta_stat;
        rep["theta_po"] = sol.theta_po;
        rep["pr_at_ps"] = sol.pr_at_ps;
        rep["pr_at_po"] = sol.pr_at_po;
        rep["gap"] = sol.gap;
        if (sol.lambda_star) {
            rep["lambda_star"] = *sol.lambda_star;
        } else {
            rep["lambda_star"] = nullptr;
        }
        rep["contractive"] = sol.flags.contractive;
        rep["lambda_star_valid"] = sol.flags.lambda_star_valid;
        const auto row = [&table](const char* k, const std::string& v) {
            table << k;
            for (std::size_t i = std::string(k).size(); i < 18; ++i) {
                table << ' ';
            }
            table << v << "\n";
        };
        row("theta_ps", fmt_double(sol.theta_ps));
        row("theta_stat", fmt_double(sol.theta_stat));
        row("theta_po", fmt_double(sol.theta_po));
        row("pr_at_ps", fmt_double(sol.pr_at_ps));
        row("pr_at_po", fmt_double(sol.pr_at_po));
        row("gap", fmt_double(sol.gap));
        row("lambda_star", sol.lambda_star ? fmt_double(*sol.lambda_star)
                                           : std::string("none"));
        row("contractive", sol.flags.contractive ? "true" : "false");
        row("lambda_star_valid",
            sol.flags.lambda_star_valid ? "true" : "false");
    } else {
        const Eigen::VectorXd tps = theta_ps_mean_shift(*b.linear, *b.loss);
        ordered_json arr = ordered_json::array();
        for (Eigen::Index i = 0; i < tps.size(); ++i) {
            arr.push_back(tps[i]);
        }
        rep["theta_ps"] = arr;
        rep["theta_po"] = arr;
        rep["theta_stat"] = arr;
        const double pr = pr_analytic(*b.linear, *b.loss, tps);
        rep["pr_at_ps"] = pr;
        rep["pr_at_po"] = pr;
        rep["gap"] = 0.0;
        table << "theta_ps          [";
        for (Eigen::Index i = 0; i < tps.size(); ++i) {
            table << (i ? ", " : "") << fmt_double(tps[i]);
        }
        table << "]\n";
        table << "pr_at_ps          " << fmt_double(pr) << "\n";
        table << "gap               0 (mean shift: optimum and fixed point "
                 "coincide)\n";
    }
    if (r.format == "json") {
        emit(r, rep.dump(2) + "\n");
    } else {
        if (!r.out_path.empty()) {
            write_text(r.out_path, rep.dump(2) + "\n");
        }
        std::cout << table.str();
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// run

Algorithm parse_algo(const std::string& s) {
    if (s == "rrm") {
        return Algorithm::RRM;
    }
    if (s == "rerm") {
        return Algorithm::RERM;
    }
    if (s == "reg-rrm") {
        return Algorithm::RegRRM;
    }
    if (s == "reg-rerm") {
        return Algorithm::RegRERM;
    }
    config_fail("run.algo must be one of rrm|rerm|reg-rrm|reg-rerm");
}

RunMode parse_mode(const std::string& s, Algorithm algo) {
    if (s.empty()) {
        return (algo == Algorithm::RRM || algo == Algorithm::RegRRM)
                   ? RunMode::ExactExpectation
                   : RunMode::EmpiricalInteger;
    }
    if (s == "exact") {
        return RunMode::ExactExpectation;
    }
    if (s == "integer") {
        return RunMode::EmpiricalInteger;
    }
    if (s == "effective") {
        return RunMode::EmpiricalEffectiveNoise;
    }
    config_fail("run.mode must be one of exact|integer|effective");
}

SampleSchedule parse_samples(const Resolved& r) {
    if (r.sample_kind == "constant") {
        const double n = r.sample_n;
        if (n < 1.0 || n != std::floor(n)) {
            config_fail("run.samples.N must be a positive integer");
        }
        return SampleSchedule::constant(static_cast<long long>(n));
    }
    if (r.sample_kind == "log") {
        return SampleSchedule::log_growth();
    }
    if (r.sample_kind == "inverse-t") {
        return SampleSchedule::inverse_t(r.sample_n);
    }
    if (r.sample_kind == "custom") {
        if (r.sample_values.empty()) {
            config_fail("run.samples.kind 'custom' requires values");
        }
        return SampleSchedule::custom(r.sample_values);
    }
    config_fail("run.samples.kind must be one of constant|log|inverse-t|custom");
}

RegSchedule parse_reg(const Resolved& r) {
    RegularizerKind kind;
    if (r.regularizer == "proximal") {
        kind = RegularizerKind::Proximal;
    } else if (r.regularizer == "ridge") {
        kind = RegularizerKind::Ridge;
    } else {
        config_fail("run.reg.regularizer must be 'proximal' or 'ridge'");
    }
    if (r.reg_kind == "none") {
        return RegSchedule::none();
    }
    if (r.reg_kind == "constant") {
        const double lambda = r.reg_lambda_raw.empty()
                                  ? 0.0
                                  : resolve_lambda(r.reg_lambda_raw, r);
        return RegSchedule::constant(lambda, kind);
    }
    if (r.reg_kind == "linear-t") {
        return RegSchedule::linear_in_t(kind);
    }
    if (r.reg_kind == "custom") {
        if (r.reg_values.empty()) {
            config_fail("run.reg.kind 'custom' requires values");
        }
        return RegSchedule::custom(r.reg_values, kind);
    }
    config_fail("run.reg.kind must be one of none|constant|linear-t|custom");
}

ordered_json run_echo(const Resolved& r, RunMode mode) {
    ordered_json run;
    run["algo"] = r.algo;
    run["T"] = r.horizon;
    run["mode"] = mode == RunMode::ExactExpectation
                      ? "exact"
                      : (mode == RunMode::EmpiricalInteger ? "integer"
                                                           : "effective");
    if (mode != RunMode::ExactExpectation) {
        ordered_json sm;
        sm["kind"] = r.sample_kind;
        if (r.sample_kind == "custom") {
            sm["values"] = r.sample_values;
        } else if (r.sample_kind != "log") {
            sm["N"] = r.sample_n;
        }
        run["samples"] = sm;
    }
    if (r.reg_kind != "none") {
        ordered_json rg;
        rg["kind"] = r.reg_kind;
        rg["regularizer"] = r.regularizer;
        if (r.reg_kind == "constant") {
            rg["lambda"] = r.reg_lambda_raw.empty() ? "0" : r.reg_lambda_raw;
        } else if (r.reg_kind == "custom") {
            rg["values"] = r.reg_values;
        }
        run["reg"] = rg;
    }
    if (!r.theta0.empty()) {
        run["theta0"] = r.theta0;
    }
    run["record_metrics"] = r.record_metrics;
    return run;
}

int cmd_run(const Resolved& r) {
    const ModelBundle b = build_models(r);
    const Algorithm algo = parse_algo(r.algo);
    const RunMode mode = parse_mode(r.mode, algo);

    RunConfig cfg;
    cfg.T = r.horizon;
    cfg.seed = r.seed;
    cfg.mode = mode;
    cfg.samples = parse_samples(r);
    cfg.reg = parse_reg(r);
    cfg.record_metrics = r.record_metrics;
    if (!r.theta0.empty()) {
        cfg.theta0 = Eigen::Map<const Eigen::VectorXd>(
            r.theta0.data(), static_cast<Eigen::Index>(r.theta0.size()));
    }
    if (r.record_metrics) {
        // Reference points for the distance columns, when the regime has them.
        try {
            if (b.scalar) {
                const SolutionReport sol = solve_scalar(*b.scalar);
                Eigen::VectorXd tps(1), tpo(1);
                tps[0] = sol.theta_ps;
                tpo[0] = sol.theta_po;
                cfg.theta_ps_ref = tps;
                cfg.theta_po_ref = tpo;
            } else {
                const Eigen::VectorXd tps =
                    theta_ps_mean_shift(*b.linear, *b.loss);
                cfg.theta_ps_ref = tps;
                cfg.theta_po_ref = tps;
            }
        } catch (const NonContractiveError&) {
        }
    }

    const Trajectory traj = run_dynamics(algo, *b.linear, *b.loss, cfg);

    ordered_json echo = base_echo(r);
    echo["run"] = run_echo(r, mode);
    const int d = b.linear->dim();

    if (r.format == "json") {
        ordered_json out;
        out["version"] = kVersion;
        out["config"] = echo;
        out["diverged"] = traj.diverged;
        ordered_json rows = ordered_json::array();
        for (std::size_t t = 0; t < traj.iterates.size(); ++t) {
            ordered_json row;
            row["t"] = t;
            ordered_json th = ordered_json::array();
            for (int i = 0; i < d; ++i) {
                th.push_back(traj.iterates[t][i]);
            }
            row["theta"] = th;
            const StepRecord& rec = traj.per_step[t];
            row["N_t"] = rec.n_used ? ordered_json(*rec.n_used)
                                    : ordered_json(nullptr);
            row["lambda_t"] = rec.lambda_used ? ordered_json(*rec.lambda_used)
                                              : ordered_json(nullptr);
            row["pr"] = rec.pr ? ordered_json(*rec.pr) : ordered_json(nullptr);
            row["dist2_ps"] = rec.dist2_ps ? ordered_json(*rec.dist2_ps)
                                           : ordered_json(nullptr);
            row["dist2_po"] = rec.dist2_po ? ordered_json(*rec.dist2_po)
                                           : ordered_json(nullptr);
            rows.push_back(row);
        }
        out["trajectory"] = rows;
        emit(r, out.dump(2) + "\n");
        return kExitOk;
    }

    std::string csv = csv_preamble(echo);
    csv += "t";
    for (int i = 0; i < d; ++i) {
        csv += ",theta" + std::to_string(i);
    }
    csv += ",N_t,lambda_t,pr,dist2_ps,dist2_po,diverged\n";
    for (std::size_t t = 0; t < traj.iterates.size(); ++t) {
        csv += std::to_string(t);
        for (int i = 0; i < d; ++i) {
            csv += "," + fmt_double(traj.iterates[t][i]);
        }
        const StepRecord& rec = traj.per_step[t];
        csv += "," + fmt_opt(rec.n_used);
        csv += "," + fmt_opt(rec.lambda_used);
        csv += "," + fmt_opt(rec.pr);
        csv += "," + fmt_opt(rec.dist2_ps);
        csv += "," + fmt_opt(rec.dist2_po);
        const bool last = t + 1 == traj.iterates.size();
        csv += std::string(",") + (traj.diverged && last ? "1" : "0");
        csv += "\n";
    }
    emit(r, csv);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// experiment

ordered_json result_json(const TheoremCheckResult& res) {
    ordered_json j;
    j["name"] = res.name;
    j["pass"] = res.pass;
    j["skipped"] = res.skipped;
    if (!res.note.empty()) {
        j["note"] = res.note;
    }
    ordered_json details = ordered_json::array();
    for (const auto& d : res.details) {
        ordered_json dj;
        dj["label"] = d.label;
        dj["predicted"] = d.predicted;
        dj["observed"] = d.observed;
        dj["std_error"] = d.std_error;
        dj["tolerance"] = d.tolerance;
        dj["pass"] = d.pass;
        dj["binding"] = d.binding;
        details.push_back(dj);
    }
    j["details"] = details;
    return j;
}

int cmd_experiment(const Resolved& r, const std::string& name_arg) {
    std::string name = !name_arg.empty() ? name_arg : r.exp_name;
    if (name.empty()) {
        config_fail("experiment name required (or 'all')");
    }
    std::vector<std::string> names;
    if (name == "all") {
        names = experiment_names();
    } else {
        bool known = false;
        for (const auto& n : experiment_names()) {
            if (n == name) {
                known = true;
                break;
            }
        }
        if (!known) {
            config_fail("unknown experiment: " + name);
        }
        names.push_back(name);
    }

    ExperimentSpec spec;
    spec.seed = r.seed;
    spec.reps = r.reps;
    spec.horizon = r.exp_horizon;
    spec.threads = r.threads;
    spec.tol = r.tol;
    spec.n_samples = r.exp_n;
    spec.lambda = r.exp_lambda;
    if (r.shift_given) {
        if (r.d != 1 || r.mu0_vec) {
            config_fail("experiments take scalar shift instances (d = 1)");
        }
        spec.scalar_model = ScalarShiftModel(r.sigma0, r.sigma, r.mu0, r.mu);
    }

    std::vector<TheoremCheckResult> results;
    bool all_pass = true;
    for (const auto& n : names) {
        spec.name = n;
        TheoremCheckResult res = run_experiment(spec);
        if (res.skipped) {
            std::cout << "[SKIP] " << res.name << ": " << res.note << "\n";
        } else {
            std::cout << (res.pass ? "[PASS] " : "[FAIL] ") << res.name << " ("
                      << res.details.size() << " checks)\n";
        }
        if (!res.pass) {
            all_pass = false;
        }
        results.push_back(std::move(res));
    }

    ordered_json echo = base_echo(r);
    ordered_json exp;
    exp["name"] = name;
    exp["reps"] = r.reps;
    exp["T"] = r.exp_horizon;
    if (r.exp_n) {
        exp["N"] = *r.exp_n;
    }
    if (r.exp_lambda) {
        exp["lambda"] = *r.exp_lambda;
    }
    exp["rel_tol"] = r.tol.rel_tol;
    exp["se_mult"] = r.tol.se_mult;
    exp["abs_tol"] = r.tol.abs_tol;
    echo["experiment"] = exp;

    if (r.format == "csv") {
        std::string csv = csv_preamble(echo);
        csv += "experiment,check,predicted,observed,std_error,tolerance,pass,"
               "binding\n";
        for (const auto& res : results) {
            for (const auto& d : res.details) {
                std::string label = d.label;
                for (auto& c : label) {
                    if (c == ',') {
                        c = ';';
                    }
                }
                csv += res.name + "," + label + "," + fmt_double(d.predicted) +
                       "," + fmt_double(d.observed) + "," +
                       fmt_double(d.std_error) + "," + fmt_double(d.tolerance) +
                       "," + (d.pass ? "1" : "0") + "," +
                       (d.binding ? "1" : "0") + "\n";
            }
        }
        emit(r, csv);
    } else {
        ordered_json out;
        out["version"] = kVersion;
        out["config"] = echo;
        ordered_json arr = ordered_json::array();
        for (const auto& res : results) {
            arr.push_back(result_json(res));
        }
        out["results"] = arr;
        if (!r.out_path.empty()) {
            write_text(r.out_path, out.dump(2) + "\n");
        } else if (r.format == "json") {
            std::cout << out.dump(2) << "\n";
        }
    }
    return all_pass ? kExitOk : kExitCheckFailed;
}

// ---------------------------------------------------------------------------
// sweep

int cmd_sweep(const Resolved& r) {
    if (r.grid.empty()) {
        config_fail("sweep requires a non-empty grid (sweep.over or --grid)");
    }
    // Deterministic order: canonical key order, first key outermost.
    const std::vector<std::string> canonical = {"sigma0", "sigma", "mu0",
                                                "mu",     "N",     "T",
                                                "lambda"};
    std::vector<std::pair<std::string, std::vector<double>>> grid;
    for (const auto& key : canonical) {
        for (const auto& entry : r.grid) {
            if (entry.first == key) {
                grid.push_back(entry);
            }
        }
    }
    std::vector<std::string> outputs = r.sweep_outputs;
    if (outputs.empty()) {
        outputs = {"theta_ps", "theta_po", "gap", "relative_gap"};
    }
    const std::vector<std::string> known_outputs = {
        "theta_ps", "theta_stat",   "theta_po",    "pr_ps",
        "pr_po",    "gap",          "relative_gap", "lambda_star",
        "plateau",  "final_mse",    "sensitivity"};
    for (const auto& o : outputs) {
        bool ok = false;
        for (const auto& k : known_outputs) {
            if (k == o) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            config_fail("unknown sweep output: " + o);
        }
    }

    ordered_json echo = base_echo(r);
    ordered_json sw;
    ordered_json over;
    for (const auto& g : grid) {
        over[g.first] = g.second;
    }
    sw["over"] = over;
    sw["outputs"] = outputs;
    echo["sweep"] = sw;

    std::string header;
    for (const auto& g : grid) {
        header += (header.empty() ? "" : ",") + g.first;
    }
    for (const auto& o : outputs) {
        header += "," + o;
    }

    std::vector<std::size_t> idx(grid.size(), 0);
    std::vector<std::string> rows;
    while (true) {
        double sigma0 = r.sigma0, sigma = r.sigma, mu0 = r.mu0, mu = r.mu;
        double n = r.exp_n ? static_cast<double>(*r.exp_n) : 1.0;
        double horizon = static_cast<double>(r.horizon);
        double lambda = 0.0;
        for (std::size_t k = 0; k < grid.size(); ++k) {
            const double v = grid[k].second[idx[k]];
            const std::string& key = grid[k].first;
            if (key == "sigma0") {
                sigma0 = v;
            } else if (key == "sigma") {
                sigma = v;
            } else if (key == "mu0") {
                mu0 = v;
            } else if (key == "mu") {
                mu = v;
            } else if (key == "N") {
                n = v;
            } else if (key == "T") {
                horizon = v;
            } else {
                lambda = v;
            }
        }
        (void)lambda;
        const ScalarShiftModel m(sigma0, sigma, mu0, mu);
        const SolutionReport sol = solve_scalar(m);
        std::string row;
        for (std::size_t k = 0; k < grid.size(); ++k) {
            row += (row.empty() ? "" : ",") + fmt_double(grid[k].second[idx[k]]);
        }
        for (const auto& o : outputs) {
            double v;
            if (o == "theta_ps") {
                v = sol.theta_ps;
            } else if (o == "theta_stat") {
                v = sol.theta_stat;
            } else if (o == "theta_po") {
                v = sol.theta_po;
            } else if (o == "pr_ps") {
                v = sol.pr_at_ps;
            } else if (o == "pr_po") {
                v = sol.pr_at_po;
            } else if (o == "gap") {
                v = sol.gap;
            } else if (o == "relative_gap") {
                v = sigma * sigma / ((1.0 - mu) * (1.0 - mu));
            } else if (o == "lambda_star") {
                if (!sol.lambda_star) {
                    row += ",";
                    continue;
                }
                v = *sol.lambda_star;
            } else if (o == "plateau") {
                v = rerm_mse_plateau(mu, sigma0, 1, n);
            } else if (o == "final_mse") {
                const double e0 = sol.theta_ps * sol.theta_ps;
                v = rerm_mse_closed_form(e0, mu, sigma0, 1, n,
                                         static_cast<long long>(horizon));
            } else {  // sensitivity
                v = std::abs(mu) + sigma;
            }
            row += "," + fmt_double(v);
        }
        rows.push_back(row);

        std::size_t k = grid.size();
        while (k > 0) {
            --k;
            if (++idx[k] < grid[k].second.size()) {
                break;
            }
            idx[k] = 0;
            if (k == 0) {
                k = SIZE_MAX;
                break;
            }
        }
        if (k == SIZE_MAX) {
            break;
        }
    }

    if (r.format == "json") {
        ordered_json out;
        out["version"] = kVersion;
        out["config"] = echo;
        ordered_json arr = ordered_json::array();
        std::vector<std::string> cols;
        {
            std::stringstream ss(header);
            std::string col;
            while (std::getline(ss, col, ',')) {
                cols.push_back(col);
            }
        }
        for (const auto& row : rows) {
            ordered_json obj;
            std::stringstream ss(row);
            std::string cell;
            std::size_t c = 0;
            while (std::getline(ss, cell, ',')) {
                if (cell.empty()) {
                    obj[cols[c]] = nullptr;
                } else {
                    obj[cols[c]] = std::stod(cell);
                }
                ++c;
            }
            arr.push_back(obj);
        }
        out["rows"] = arr;
        emit(r, out.dump(2) + "\n");
    } else {
        std::string csv = csv_preamble(echo) + header + "\n";
        for (const auto& row : rows) {
            csv += row + "\n";
        }
        emit(r, csv);
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------

int to_exit_code(const std::exception& e) {
    if (dynamic_cast<const NonContractiveError*>(&e) ||
        dynamic_cast<const WrongRegimeError*>(&e) ||
        dynamic_cast<const ScheduleModeMismatchError*>(&e)) {
        return kExitRegime;
    }
    return kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Retraining dynamics under decision-dependent data shift"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    std::string config_path;
    Resolved flag_defaults;
    std::optional<std::uint64_t> seed_flag;
    std::optional<std::string> out_flag, format_flag;
    std::optional<long long> reps_flag;
    std::optional<int> threads_flag;
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--seed", seed_flag, "master seed");
    app.add_option("--out", out_flag, "output file path (default: stdout)");
    app.add_option("--format", format_flag, "artifact format: csv|json")
        ->check(CLI::IsMember({"csv", "json"}));
    app.add_option("--reps", reps_flag, "replication count");
    app.add_option("--threads", threads_flag,
                   "worker threads (affects speed only, never results)");

    std::optional<double> sigma0_flag, sigma_flag, mu0_flag, mu_flag;
    std::optional<std::string> base_flag;
    const auto add_model_flags = [&](CLI::App* sub) {
        sub->add_option("--sigma0", sigma0_flag, "base noise scale");
        sub->add_option("--sigma", sigma_flag,
                        "covariance dependence on theta");
        sub->add_option("--mu0", mu0_flag, "base mean");
        sub->add_option("--mu", mu_flag, "mean dependence on theta");
        sub->add_option("--base", base_flag, "base noise: gaussian|rademacher")
            ->check(CLI::IsMember({"gaussian", "rademacher"}));
    };

    CLI::App* solve = app.add_subcommand("solve", "closed-form solution report");
    solve->fallthrough();
    add_model_flags(solve);

    CLI::App* run = app.add_subcommand("run", "simulate one trajectory");
    run->fallthrough();
    add_model_flags(run);
    std::optional<std::string> algo_flag, mode_flag, reg_flag, lambda_flag,
        samples_flag;
    std::optional<long long> horizon_flag, n_flag;
    run->add_option("--algo", algo_flag, "rrm|rerm|reg-rrm|reg-rerm");
    run->add_option("-T,--horizon", horizon_flag, "number of retraining rounds");
    run->add_option("--mode", mode_flag, "exact|integer|effective");
    run->add_option("--N", n_flag, "constant per-round sample size");
    run->add_option("--samples", samples_flag,
                    "sample schedule: constant|log|inverse-t");
    run->add_option("--reg", reg_flag, "regularizer: proximal|ridge");
    run->add_option("--lambda", lambda_flag,
                    "regularization weight (number or 'star')");
    run->add_option("--lambda-schedule", flag_defaults.reg_kind,
                    "constant|linear-t")
        ->check(CLI::IsMember({"constant", "linear-t"}));

    CLI::App* experiment =
        app.add_subcommand("experiment", "run a named check (or 'all')");
    experiment->fallthrough();
    add_model_flags(experiment);
    std::string exp_name_arg;
    experiment->add_option("name", exp_name_arg, "experiment name or 'all'");
    std::optional<long long> exp_horizon_flag, exp_n_flag;
    std::optional<double> exp_lambda_flag;
    experiment->add_option("-T,--horizon", exp_horizon_flag, "horizon override");
    experiment->add_option("--N", exp_n_flag, "sample size override");
    experiment->add_option("--lambda", exp_lambda_flag,
                           "regularization weight override");

    CLI::App* check = app.add_subcommand("check", "alias for 'experiment all'");
    check->fallthrough();
    std::optional<long long> check_horizon_flag;
    check->add_option("-T,--horizon", check_horizon_flag, "horizon override");

    CLI::App* sweep = app.add_subcommand("sweep", "grid of closed-form values");
    sweep->fallthrough();
    add_model_flags(sweep);
    std::vector<std::string> grid_flags;
    std::vector<std::string> metric_flags;
    sweep->add_option("--grid", grid_flags,
                      "grid axis as key=v1,v2,... (repeatable)");
    sweep->add_option("--metrics", metric_flags,
                      "output columns (repeatable)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        Resolved r;
        if (!config_path.empty()) {
            apply_config_file(config_path, r);
        }
        if (seed_flag) {
            r.seed = *seed_flag;
        }
        if (out_flag) {
            r.out_path = *out_flag;
        }
        if (reps_flag) {
            r.reps = *reps_flag;
        }
        if (threads_flag) {
            if (*threads_flag < 1) {
                config_fail("--threads must be >= 1");
            }
            r.threads = *threads_flag;
        }
        if (sigma0_flag) {
            r.sigma0 = *sigma0_flag;
            r.shift_given = true;
        }
        if (sigma_flag) {
            r.sigma = *sigma_flag;
            r.shift_given = true;
        }
        if (mu0_flag) {
            r.mu0 = *mu0_flag;
            r.shift_given = true;
        }
        if (mu_flag) {
            r.mu = *mu_flag;
            r.shift_given = true;
        }
        if (base_flag) {
            r.base = *base_flag;
        }

        if (solve->parsed()) {
            r.format = format_flag.value_or(r.format.empty() ? "table"
                                                             : r.format);
            return cmd_solve(r);
        }
        if (run->parsed()) {
            if (algo_flag) {
                r.algo = *algo_flag;
            }
            if (horizon_flag) {
                r.horizon = *horizon_flag;
            }
            if (mode_flag) {
                r.mode = *mode_flag;
            }
            if (n_flag) {
                r.sample_n = static_cast<double>(*n_flag);
            }
            if (samples_flag) {
                r.sample_kind = *samples_flag;
            }
            if (reg_flag) {
                r.regularizer = *reg_flag;
            }
            if (lambda_flag) {
                r.reg_lambda_raw = *lambda_flag;
                if (r.reg_kind == "none") {
                    r.reg_kind = "constant";
                }
            }
            if (flag_defaults.reg_kind != "none") {
                r.reg_kind = flag_defaults.reg_kind;
            }
            r.format = format_flag.value_or(r.format.empty() ? "csv"
                                                             : r.format);
            return cmd_run(r);
        }
        if (experiment->parsed() || check->parsed()) {
            if (exp_horizon_flag) {
                r.exp_horizon = *exp_horizon_flag;
            }
            if (check_horizon_flag) {
                r.exp_horizon = *check_horizon_flag;
            }
            if (exp_n_flag) {
                r.exp_n = *exp_n_flag;
            }
            if (exp_lambda_flag) {
                r.exp_lambda = *exp_lambda_flag;
            }
            r.format = format_flag.value_or(r.format.empty() ? "json"
                                                             : r.format);
            const std::string name =
                check->parsed() ? std::string("all") : exp_name_arg;
            return cmd_experiment(r, name);
        }
        if (sweep->parsed()) {
            for (const auto& g : grid_flags) {
                const auto eq = g.find('=');
                if (eq == std::string::npos) {
                    config_fail("--grid expects key=v1,v2,...");
                }
                const std::string key = g.substr(0, eq);
                std::vector<double> vals;
                std::stringstream ss(g.substr(eq + 1));
                std::string cell;
                while (std::getline(ss, cell, ',')) {
                    try {
                        std::size_t pos = 0;
                        vals.push_back(std::stod(cell, &pos));
                        if (pos != cell.size()) {
                            config_fail("--grid value is not a number: " + cell);
                        }
                    } catch (const std::logic_error&) {
                        config_fail("--grid value is not a number: " + cell);
                    }
                }
                if (vals.empty()) {
                    config_fail("--grid axis is empty: " + key);
                }
                bool known = false;
                for (const char* k :
                     {"sigma0", "sigma", "mu0", "mu", "N", "T", "lambda"}) {
                    if (key == k) {
                        known = true;
                        break;
                    }
                }
                if (!known) {
                    config_fail("unknown grid key: " + key);
                }
                r.grid.emplace_back(key, std::move(vals));
            }
            for (const auto& m : metric_flags) {
                r.sweep_outputs.push_back(m);
            }
            r.format = format_flag.value_or(r.format.empty() ? "csv"
                                                             : r.format);
            return cmd_sweep(r);
        }
        config_fail("no subcommand given");
    } catch (const std::exception& e) {
        const int code = to_exit_code(e);
        std::cerr << (code == kExitRegime ? "regime violation: " : "error: ")
                  << e.what() << "\n";
        return code;
    }
}
