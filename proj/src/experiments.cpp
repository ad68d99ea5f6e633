#include "perfsim/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>
#include <utility>

namespace perfsim {

namespace {

// Stream-id convention inside experiments: replication indices [0, R) belong
// to trajectory replications; indices with the top bit of the low word set
// are reserved for harness-internal randomness (instance generation, Monte
// Carlo risk estimates), so the two can never collide.
constexpr std::uint64_t kHarnessRep = 1ull << 31;

ScalarShiftModel canonical_cov_shift() {
    return ScalarShiftModel(0.5, 0.5, 1.0, 0.0);
}

ScalarShiftModel canonical_mean_shift() {
    return ScalarShiftModel(1.0, 0.0, 1.0, 0.5);
}

CheckDetail make_check(std::string label, double predicted, double observed,
                       double tolerance, double std_error = 0.0,
                       bool binding = true) {
    CheckDetail d;
    d.label = std::move(label);
    d.predicted = predicted;
    d.observed = observed;
    d.std_error = std_error;
    d.tolerance = tolerance;
    d.pass = std::abs(observed - predicted) <= tolerance;
    d.binding = binding;
    return d;
}

void finalize(TheoremCheckResult& r) {
    for (const auto& d : r.details) {
        if (d.binding && !d.pass) {
            r.pass = false;
        }
    }
}

std::vector<double> gather(long long reps, int threads, int width,
                           const std::function<void(std::uint64_t, double*)>& fn) {
    if (reps < 1) {
        throw InvalidParameterError("replication count must be >= 1");
    }
    if (width < 1) {
        throw InvalidParameterError("replication width must be >= 1");
    }
    std::vector<double> out(static_cast<std::size_t>(reps) * width);
    const long long workers =
        std::clamp<long long>(threads, 1, std::min<long long>(reps, 64));
    if (workers == 1) {
        for (long long r = 0; r < reps; ++r) {
            fn(static_cast<std::uint64_t>(r),
               out.data() + static_cast<std::size_t>(r) * width);
        }
        return out;
    }
    std::vector<std::thread> pool;
    std::mutex err_mutex;
    std::exception_ptr first_error;
    const long long chunk = (reps + workers - 1) / workers;
    for (long long w = 0; w < workers; ++w) {
        const long long lo = w * chunk;
        const long long hi = std::min(reps, lo + chunk);
        if (lo >= hi) {
            break;
        }
        pool.emplace_back([&, lo, hi] {
            try {
                for (long long r = lo; r < hi; ++r) {
                    fn(static_cast<std::uint64_t>(r),
                       out.data() + static_cast<std::size_t>(r) * width);
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) {
                    first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }
    return out;
}

StatSummary summarize_component(const std::vector<double>& flat, long long reps,
                                int width, int component) {
    std::vector<double> col(static_cast<std::size_t>(reps));
    for (long long r = 0; r < reps; ++r) {
        col[static_cast<std::size_t>(r)] =
            flat[static_cast<std::size_t>(r) * width + component];
    }
    return summarize(col);
}

}  // namespace

double pairwise_sum(const double* x, std::size_t n) {
    if (n <= 32) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            s += x[i];
        }
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(x, half) + pairwise_sum(x + half, n - half);
}

StatSummary summarize(const std::vector<double>& values) {
    if (values.empty()) {
        throw InvalidParameterError("cannot summarize an empty sample");
    }
    StatSummary s;
    s.count = static_cast<long long>(values.size());
    const double n = static_cast<double>(values.size());
    s.mean = pairwise_sum(values.data(), values.size()) / n;
    if (values.size() > 1) {
        std::vector<double> sq(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double d = values[i] - s.mean;
            sq[i] = d * d;
        }
        const double ss = pairwise_sum(sq.data(), sq.size());
        s.std_error = std::sqrt(ss / (n - 1.0) / n);
    }
    s.ci_lo = s.mean - 1.96 * s.std_error;
    s.ci_hi = s.mean + 1.96 * s.std_error;
    return s;
}

StatSummary run_replicated(long long reps, int threads,
                           const std::function<double(std::uint64_t)>& fn) {
    const auto flat = gather(reps, threads, 1,
                             [&fn](std::uint64_t rep, double* out) {
                                 out[0] = fn(rep);
                             });
    return summarize(flat);
}

std::vector<StatSummary> run_replicated_vec(
    long long reps, int threads, int width,
    const std::function<void(std::uint64_t, double*)>& fn) {
    const auto flat = gather(reps, threads, width, fn);
    std::vector<StatSummary> out;
    out.reserve(static_cast<std::size_t>(width));
    for (int k = 0; k < width; ++k) {
        out.push_back(summarize_component(flat, reps, width, k));
    }
    return out;
}

double rerm_mse_closed_form(double e0_sq, double mu, double sigma0, int d,
                            double n, long long t) {
    const double decay = std::pow(mu * mu, static_cast<double>(t));
    const double noise = d * sigma0 * sigma0 / n;
    return e0_sq * decay + noise * (1.0 - decay) / (1.0 - mu * mu);
}

double rerm_mse_plateau(double mu, double sigma0, int d, double n) {
    return d * sigma0 * sigma0 / (n * (1.0 - mu * mu));
}

std::vector<double> reg_rerm_mse_curve(double e0_sq, double mu, double sigma0,
                                       int d, const SampleSchedule& samples,
                                       const RegSchedule& reg, long long t_max) {
    std::vector<double> curve;
    curve.reserve(static_cast<std::size_t>(t_max) + 1);
    double bias = e0_sq;
    double noise = 0.0;
    curve.push_back(bias + noise);
    for (long long t = 1; t <= t_max; ++t) {
        const double lambda = reg.at(t - 1);
        const double a = (lambda + mu) / (lambda + 1.0);
        const double a2 = a * a;
        bias *= a2;
        noise = a2 * noise + d * sigma0 * sigma0 /
                                 (samples.at(t) * (lambda + 1.0) * (lambda + 1.0));
        curve.push_back(bias + noise);
    }
    return curve;
}

ScalarShiftModel random_scalar_instance(RngStream& stream) {
    const double sigma0 = 2.0 * (1.0 - stream.next_uniform());  // (0, 2]
    const double sigma = 2.0 * stream.next_uniform();           // [0, 2)
    const double mu0 = -2.0 + 4.0 * stream.next_uniform();      // [-2, 2)
    const double mu = -1.0 + 1.9 * stream.next_uniform();       // [-1, 0.9)
    return ScalarShiftModel(sigma0, sigma, mu0, mu);
}

Eigen::MatrixXd random_spd_matrix(int d, RngStream& stream) {
    Eigen::MatrixXd b(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            b(i, j) = -1.0 + 2.0 * stream.next_uniform();
        }
    }
    return b.transpose() * b + 0.3 * Eigen::MatrixXd::Identity(d, d);
}

LinearShiftModel random_mean_shift_instance(int d, RngStream& stream,
                                            double mu_norm) {
    Eigen::VectorXd mu0(d);
    for (int i = 0; i < d; ++i) {
        mu0[i] = -2.0 + 4.0 * stream.next_uniform();
    }
    Eigen::MatrixXd m(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            m(i, j) = -1.0 + 2.0 * stream.next_uniform();
        }
    }
    const double top = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
    if (top < 1e-12) {
        m = mu_norm * Eigen::MatrixXd::Identity(d, d);
    } else {
        m *= mu_norm / top;
    }
    return LinearShiftModel::mean_shift(Eigen::MatrixXd::Identity(d, d), mu0,
                                        m);
}

TheoremCheckResult exp_fixed_point_coincidence(const ExperimentSpec& spec) {
    TheoremCheckResult r;
    r.name = "fixed-point";
    const long long T = spec.horizon > 0 ? spec.horizon : 200;
    const long long n_grad = spec.reps > 0 ? spec.reps : 1000000;
    const double grad_se_mult = 5.0;

    struct Instance {
        std::string label;
        LinearShiftModel model;
        QuadraticLoss loss;
    };
    std::vector<Instance> instances;
    {
        ScalarShiftModel canon = canonical_mean_shift();
        instances.push_back(
            {"d=1 canonical", canon.to_linear(), QuadraticLoss::squared(1)});
    }
    int idx = 0;
    for (int d : {2, 3, 5, 10}) {
        RngStream gen = stream_for(spec.seed, kHarnessRep + 100 + idx, 0);
        LinearShiftModel model = random_mean_shift_instance(d, gen);
        QuadraticLoss loss(random_spd_matrix(d, gen));
        instances.push_back({"d=" + std::to_string(d) + " random",
                             std::move(model), std::move(loss)});
        ++idx;
    }

    int inst_id = 0;
    for (const auto& inst : instances) {
        const Eigen::VectorXd theta_ps =
            theta_ps_mean_shift(inst.model, inst.loss);
        RunConfig cfg;
        cfg.T = T;
        cfg.mode = RunMode::ExactExpectation;
        const Trajectory traj = run_rrm(inst.model, inst.loss, cfg);
        r.details.push_back(make_check(
            inst.label + ": retraining iterate reaches the fixed point", 0.0,
            (traj.last() - theta_ps).norm(), spec.tol.abs_tol));

        RngStream grad_stream =
            stream_for(spec.seed, kHarnessRep + 200 + inst_id, 0);
        const McGradient g = pr_grad_monte_carlo(inst.model, inst.loss,
                                                 theta_ps, n_grad, grad_stream);
        double max_ratio = 0.0;
        for (Eigen::Index i = 0; i < g.grad.size(); ++i) {
            const double band =
                std::max(grad_se_mult * g.std_error[i], 1e-12);
            max_ratio = std::max(max_ratio, std::abs(g.grad[i]) / band);
        }
        CheckDetail d = make_check(
            inst.label + ": MC risk gradient at the fixed point is zero "
                         "(max |g_i| / 5 SE_i)",
            0.0, max_ratio, 1.0);
        d.std_error = g.std_error.maxCoeff();
        r.details.push_back(std::move(d));
        ++inst_id;
    }
    finalize(r);
    return r;
}

TheoremCheckResult exp_gap_identity(const ExperimentSpec& spec) {
    TheoremCheckResult r;
    r.name = "gap-identity";
    const ScalarShiftModel canon =
        spec.scalar_model ? *spec.scalar_model : canonical_cov_shift();
    const SolutionReport sol = solve_scalar(canon);
    const double rel_factor =
        canon.sigma * canon.sigma / ((1.0 - canon.mu) * (1.0 - canon.mu));
    const double predicted_gap = sol.pr_at_po * rel_factor;

    if (!spec.scalar_model) {
        // Default instance has gap exactly 0.1.
        r.details.push_back(make_check("canonical instance: gap closed form",
                                       0.1, sol.gap, 1e-12));
    }
    r.details.push_back(make_check(
        "gap equals PR(theta_po) * sigma^2/(1-mu)^2", predicted_gap, sol.gap,
        1e-9 * (1.0 + std::abs(sol.pr_at_po))));

    double max_scaled_residual = 0.0;
    const int n_random = 1000;
    for (int k = 0; k < n_random; ++k) {
        RngStream gen = stream_for(spec.seed, kHarnessRep + 300,
                                   static_cast<std::uint64_t>(k));
        const ScalarShiftModel m = random_scalar_instance(gen);
        const SolutionReport s = solve_scalar(m);
        const double factor =
            m.sigma * m.sigma / ((1.0 - m.mu) * (1.0 - m.mu));
        const double resid = std::abs(s.gap - s.pr_at_po * factor) /
                             (1.0 + std::abs(s.pr_at_po));
        max_scaled_residual = std::max(max_scaled_residual, resid);
    }
    r.details.push_back(make_check(
        "identity residual over 1000 random instances (max, scaled)", 0.0,
        max_scaled_residual, 1e-9));

    const long long n_mc = spec.reps > 0 ? spec.reps : 1000000;
    const LinearShiftModel lin = canon.to_linear();
    const QuadraticLoss loss = QuadraticLoss::squared(1);
    Eigen::VectorXd t_ps(1), t_po(1);
    t_ps[0] = sol.theta_ps;
    t_po[0] = sol.theta_po;
    // Common random numbers: the same stream is replayed at both points.
    RngStream s1 = stream_for(spec.seed, kHarnessRep + 301, 0);
    RngStream s2 = stream_for(spec.seed, kHarnessRep + 301, 0);
    const McEstimate mc_ps = pr_monte_carlo(lin, loss, t_ps, n_mc, s1);
    const McEstimate mc_po = pr_monte_carlo(lin, loss, t_po, n_mc, s2);
    const double joint_se = std::sqrt(mc_ps.std_error * mc_ps.std_error +
                                      mc_po.std_error * mc_po.std_error);
    CheckDetail mc = make_check("Monte Carlo gap vs closed form", sol.gap,
                                mc_ps.estimate - mc_po.estimate,
                                spec.tol.se_mult * joint_se);
    mc.std_error = joint_se;
    r.details.push_back(std::move(mc));
    finalize(r);
    return r;
}

TheoremCheckResult exp_rerm_mse_curve(const ExperimentSpec& spec) {
    TheoremCheckResult r;
    r.name = "rerm-mse";
    const ScalarShiftModel m =
        spec.scalar_model ? *spec.scalar_model : canonical_mean_shift();
    if (m.sigma != 0.0) {
        throw WrongRegimeError(
            "sampled-retraining error curve needs a mean-shift instance "
            "(sigma = 0)");
    }
    if (!m.contractive()) {
        throw NonContractiveError(
            "sampled-retraining error curve needs |mu| < 1");
    }
    const long long N = spec.n_samples ? *spec.n_samples : 4;
    const long long R = spec.reps > 0 ? spec.reps : 100000;
    const long long T = spec.horizon > 0 ? spec.horizon : 50;
    std::vector<long long> cps;
    for (long long cp : {1LL, 5LL, 10LL, 50LL}) {
        if (cp <= T) {
            cps.push_back(cp);
        }
    }
    if (cps.empty() || cps.back() != T) {
        cps.push_back(T);
    }
    const double theta_ps = m.mu0 / (1.0 - m.mu);
    const double e0_sq = theta_ps * theta_ps;

    const LinearShiftModel lin = m.to_linear();
    const QuadraticLoss loss = QuadraticLoss::squared(1);
    auto recipe = [&](std::uint64_t rep, double* out) {
        RunConfig cfg;
        cfg.T = T;
        cfg.seed = spec.seed;
        cfg.replication = rep;
        cfg.mode = RunMode::EmpiricalInteger;
        cfg.samples = SampleSchedule::constant(N);
        const Trajectory traj = run_rerm(lin, loss, cfg);
        for (std::size_t k = 0; k < cps.size(); ++k) {
            const double e =
                traj.iterates[static_cast<std::size_t>(cps[k])][0] - theta_ps;
            out[k] = e * e;
        }
    };
    const auto stats = run_replicated_vec(R, spec.threads,
                                          static_cast<int>(cps.size()), recipe);
    for (std::size_t k = 0; k < cps.size(); ++k) {
        const double predicted = rerm_mse_closed_form(
            e0_sq, m.mu, m.sigma0, 1, static_cast<double>(N), cps[k]);
        const double tol = std::max(spec.tol.rel_tol * predicted,
                                    spec.tol.se_mult * stats[k].std_error);
        CheckDetail d = make_check(
            "E dist^2 to fixed point at T=" + std::to_string(cps[k]),
            predicted, stats[k].mean, tol);
        d.std_error = stats[k].std_error;
        r.details.push_back(std::move(d));
    }
    {
        const double plateau =
            rerm_mse_plateau(m.mu, m.sigma0, 1, static_cast<double>(N));
        const double analytic_last = rerm_mse_closed_form(
            e0_sq, m.mu, m.sigma0, 1, static_cast<double>(N), cps.back());
        // Only assert the limit once the analytic transient has died; at
        // short horizons the curve is legitimately far from the plateau.
        if (std::abs(analytic_last - plateau) <= spec.tol.rel_tol * plateau) {
            CheckDetail d = make_check(
                "plateau reached at T=" + std::to_string(cps.back()), plateau,
                stats.back().mean,
                std::max(spec.tol.rel_tol * plateau,
                         spec.tol.se_mult * stats.back().std_error));
            d.std_error = stats.back().std_error;
            r.details.push_back(std::move(d));
        }
    }
    {
        // Same curve under Rademacher base noise: the closed form depends on
        // the noise law only through its covariance, so this should track
        // too. Reported as a diagnostic, not a binding check.
        const long long R_diag = std::min<long long>(R, 10000);
        const LinearShiftModel rad =
            m.to_linear(BaseNoise{NoiseKind::Rademacher});
        auto recipe_rad = [&](std::uint64_t rep, double* out) {
            RunConfig cfg;
            cfg.T = T;
            cfg.seed = spec.seed + 1;
            cfg.replication = rep;
            cfg.mode = RunMode::EmpiricalInteger;
            cfg.samples = SampleSchedule::constant(N);
            const Trajectory traj = run_rerm(rad, loss, cfg);
            const double e =
                traj.iterates[static_cast<std::size_t>(T)][0] - theta_ps;
            out[0] = e * e;
        };
        const auto st = run_replicated_vec(R_diag, spec.threads, 1, recipe_rad);
        const double predicted = rerm_mse_closed_form(
            e0_sq, m.mu, m.sigma0, 1, static_cast<double>(N), T);
        CheckDetail d = make_check(
            "Rademacher base noise, E dist^2 at T=" + std::to_string(T) +
                " (diagnostic)",
            predicted, st[0].mean,
            std::max(spec.tol.rel_tol * predicted,
                     spec.tol.se_mult * st[0].std_error),
            st[0].std_error, /*binding=*/false);
        r.details.push_back(std::move(d));
    }
    finalize(r);
    return r;
}

TheoremCheckResult exp_lambda_star_convergence(const ExperimentSpec& spec) {
    TheoremCheckResult r;
    r.name = "lambda-star";
    const ScalarShiftModel canon =
        spec.scalar_model ? *spec.scalar_model : canonical_cov_shift();
    const SolutionReport sol = solve_scalar(canon);
    const long long T = spec.horizon > 0 ? spec.horizon : 50;

    const bool trivially_aligned =
        sol.lambda_star && *sol.lambda_star == 0.0 && std::abs(sol.gap) <= 1e-12;
    if (!sol.flags.lambda_star_valid && !trivially_aligned) {
        r.skipped = true;
        r.note =
            "no positive ridge weight can move the retraining fixed point "
            "onto the risk minimizer for this instance";
        return r;
    }
    const double lambda =
        spec.lambda ? *spec.lambda : sol.lambda_star.value();

    const LinearShiftModel lin = canon.to_linear();
    const QuadraticLoss loss = QuadraticLoss::squared(1);
    RunConfig cfg;
    cfg.T = T;
    cfg.mode = RunMode::ExactExpectation;
    cfg.reg = RegSchedule::constant(lambda, RegularizerKind::Ridge);
    const Trajectory ridge = run_reg_rrm(lin, loss, cfg);
    r.details.push_back(make_check(
        "ridge-regularized retraining lands on the risk minimizer",
        sol.theta_po, ridge.last()[0], 1e-10));
    r.details.push_back(make_check(
        "ridge fixed-point equation residual", sol.theta_po,
        canon.mu0 / (1.0 - canon.mu + lambda), 1e-10));

    RunConfig cfg_plain;
    cfg_plain.T = T;
    cfg_plain.mode = RunMode::ExactExpectation;
    const Trajectory plain = run_rrm(lin, loss, cfg_plain);
    r.details.push_back(make_check(
        "unregularized retraining lands on the fixed point", sol.theta_ps,
        plain.last()[0], 1e-10));
    const double offset = std::abs(sol.theta_ps - sol.theta_po);
    r.details.push_back(make_check(
        "unregularized iterate stays the full offset away from the "
        "risk minimizer",
        offset, std::abs(plain.last()[0] - sol.theta_po), 1e-6));
    r.details.push_back(make_check(
        "risk difference between the two limit points equals the gap",
        sol.gap,
        pr_analytic_scalar(canon, plain.last()[0]) -
            pr_analytic_scalar(canon, ridge.last()[0]),
        1e-10));

    if (!spec.scalar_model) {
        // Random instances with a usable ridge weight; the horizon is chosen
        // per instance from the contraction ratio |mu|/(1+lambda).
        const int wanted = 100;
        int found = 0;
        double max_err = 0.0;
        for (int k = 0; k < 100000 && found < wanted; ++k) {
            RngStream gen = stream_for(spec.seed, kHarnessRep + 400,
                                       static_cast<std::uint64_t>(k));
            const ScalarShiftModel m = random_scalar_instance(gen);
            const SolutionReport s = solve_scalar(m);
            if (!s.flags.lambda_star_valid) {
                continue;
            }
            ++found;
            const double ls = s.lambda_star.value();
            const double ratio = std::abs(m.mu) / (1.0 + ls);
            long long horizon = 50;
            if (ratio > 0.0) {
                const double e0 = std::max(std::abs(s.theta_po), 1.0);
                horizon = static_cast<long long>(
                    std::ceil(std::log(1e-12 / e0) / std::log(ratio)));
                horizon = std::clamp<long long>(horizon, 50, 40000);
            }
            RunConfig c;
            c.T = horizon;
            c.mode = RunMode::ExactExpectation;
            c.reg = RegSchedule::constant(ls, RegularizerKind::Ridge);
            const Trajectory tr = run_reg_rrm(m.to_linear(), loss, c);
            max_err = std::max(max_err, std::abs(tr.last()[0] - s.theta_po));
        }
        r.details.push_back(make_check(
            "100 random instances: ridge iterate reaches the risk minimizer "
            "(max error)",
            0.0, max_err, spec.tol.abs_tol));

        // sigma = 0: the correction degenerates to lambda = 0 and both
        // procedures share their limit.
        const ScalarShiftModel ms = canonical_mean_shift();
        const SolutionReport ss = solve_scalar(ms);
        RunConfig c0;
        c0.T = 200;
        c0.mode = RunMode::ExactExpectation;
        c0.reg = RegSchedule::constant(0.0, RegularizerKind::Ridge);
        const Trajectory t0 = run_reg_rrm(ms.to_linear(), loss, c0);
        r.details.push_back(make_check(
            "sigma=0 instance: zero ridge weight, same limit point",
            ss.theta_po, t0.last()[0], spec.tol.abs_tol));
    }
    finalize(r);
    return r;
}

TheoremCheckResult exp_reg_rerm_schedules(const ExperimentSpec& spec) {
    TheoremCheckResult r;
    r.name = "schedules";
    const ScalarShiftModel m =
        spec.scalar_model ? *spec.scalar_model : canonical_mean_shift();
    if (m.sigma != 0.0) {
        throw WrongRegimeError(
            "schedule convergence needs a mean-shift instance (sigma = 0)");
    }
    if (!m.contractive()) {
        throw NonContractiveError("schedule convergence needs |mu| < 1");
    }
    const long long R = spec.reps > 0 ? spec.reps : 10000;
    const long long T = spec.horizon > 0 ? spec.horizon : 1000;
    const double theta_ps = m.mu0 / (1.0 - m.mu);
    const double e0_sq = theta_ps * theta_ps;
    const LinearShiftModel lin = m.to_linear();
    const QuadraticLoss loss = QuadraticLoss::squared(1);

    std::vector<long long> cps;
    for (long long cp : {10LL, 100LL, 1000LL}) {
        if (cp <= T) {
            cps.push_back(cp);
        }
    }
    if (cps.empty() || cps.back() != T) {
        cps.push_back(T);
    }

    struct Pair {
        std::string label;
        SampleSchedule samples;
        RegSchedule reg;
        RunMode mode;
        bool binding;
    };
    const double lambda_const = spec.lambda ? *spec.lambda : 5.0;
    std::vector<Pair> pairs;
    pairs.push_back({"constant lambda, growing sample size",
                     SampleSchedule::log_growth(),
                     RegSchedule::constant(lambda_const),
                     RunMode::EmpiricalInteger, true});
    pairs.push_back({"growing lambda, single sample",
                     SampleSchedule::constant(1), RegSchedule::linear_in_t(),
                     RunMode::EmpiricalInteger, true});
    // Shrinking effective sample size N_t = 1/t: the noise term of the
    // analytic curve levels off instead of vanishing, so this pair is
    // tracked as a diagnostic only.
    pairs.push_back({"growing lambda, shrinking effective sample size",
                     SampleSchedule::inverse_t(), RegSchedule::linear_in_t(),
                     RunMode::EmpiricalEffectiveNoise, false});

    std::uint64_t pair_seed_offset = 0;
    for (const auto& p : pairs) {
        const std::vector<double> curve =
            reg_rerm_mse_curve(e0_sq, m.mu, m.sigma0, 1, p.samples, p.reg, T);
        CheckDetail conv = make_check(
            p.label + ": analytic error at T=" + std::to_string(T) +
                " below 1% of initial",
            0.0, curve.back() / curve.front(), 1e-2);
        conv.binding = p.binding;
        r.details.push_back(std::move(conv));

        auto recipe = [&](std::uint64_t rep, double* out) {
            RunConfig cfg;
            cfg.T = T;
            cfg.seed = spec.seed + pair_seed_offset;
            cfg.replication = rep;
            cfg.mode = p.mode;
            cfg.samples = p.samples;
            cfg.reg = p.reg;
            const Trajectory traj = run_reg_rerm(lin, loss, cfg);
            for (std::size_t k = 0; k < cps.size(); ++k) {
                const double e =
                    traj.iterates[static_cast<std::size_t>(cps[k])][0] -
                    theta_ps;
                out[k] = e * e;
            }
        };
        const auto stats = run_replicated_vec(
            R, spec.threads, static_cast<int>(cps.size()), recipe);
        for (std::size_t k = 0; k < cps.size(); ++k) {
            const double predicted =
                curve[static_cast<std::size_t>(cps[k])];
            CheckDetail d = make_check(
                p.label + ": empirical tracks analytic at t=" +
                    std::to_string(cps[k]),
                predicted, stats[k].mean,
                std::max(spec.tol.se_mult * stats[k].std_error, 1e-12),
                stats[k].std_error);
            d.binding = p.binding;
            r.details.push_back(std::move(d));
        }
        pair_seed_offset += 1;
    }
    finalize(r);
    return r;
}

TheoremCheckResult exp_sensitivity_diagnostic(const ExperimentSpec& spec) {
    TheoremCheckResult r;
    r.name = "sensitivity";
    const QuadraticLoss loss1 = QuadraticLoss::squared(1);

    struct Entry {
        std::string label;
        LinearShiftModel model;
        QuadraticLoss loss;
        std::optional<Eigen::VectorXd> theta_ps;
    };
    std::vector<Entry> entries;
    {
        const ScalarShiftModel m = canonical_mean_shift();
        Eigen::VectorXd tp(1);
        tp[0] = solve_scalar(m).theta_ps;
        entries.push_back({"scalar mean shift, mu=0.5", m.to_linear(), loss1, tp});
    }
    {
        const ScalarShiftModel m(1.0, 0.0, 1.0, 0.0);
        Eigen::VectorXd tp(1);
        tp[0] = 1.0;
        entries.push_back({"scalar static mean, mu=0", m.to_linear(), loss1, tp});
    }
    {
        const ScalarShiftModel m = canonical_cov_shift();
        Eigen::VectorXd tp(1);
        tp[0] = solve_scalar(m).theta_ps;
        entries.push_back(
            {"scalar covariance shift, sigma=0.5", m.to_linear(), loss1, tp});
    }
    {
        RngStream gen = stream_for(spec.seed, kHarnessRep + 500, 0);
        LinearShiftModel model = random_mean_shift_instance(2, gen);
        Eigen::MatrixXd a(2, 2);
        a << 1.0, 0.0, 0.0, 4.0;
        QuadraticLoss loss(a);
        Eigen::VectorXd tp = theta_ps_mean_shift(model, loss);
        entries.push_back({"d=2 mean shift, ill-matched curvature",
                           std::move(model), std::move(loss), tp});
    }

    for (const auto& e : entries) {
        const double eps = e.model.sensitivity_bound();
        const double condition = e.loss.gamma() / e.loss.beta_z();
        const bool certified = eps < condition;
        RunConfig cfg;
        cfg.T = 30;
        cfg.mode = RunMode::ExactExpectation;
        const Trajectory traj = run_rrm(e.model, e.loss, cfg);
        double max_ratio = 0.0;
        if (e.theta_ps) {
            double prev = (traj.iterates[0] - *e.theta_ps).norm();
            for (std::size_t t = 1; t < traj.iterates.size(); ++t) {
                const double cur = (traj.iterates[t] - *e.theta_ps).norm();
                if (prev > 1e-13) {
                    max_ratio = std::max(max_ratio, cur / prev);
                }
                prev = cur;
            }
        }
        CheckDetail d = make_check(
            e.label + ": contraction ratio (sensitivity " +
                std::to_string(eps) + ", threshold " +
                std::to_string(condition) +
                (certified ? ", certified)" : ", not certified)"),
            0.0, max_ratio, 1.0 - 1e-12);
        d.binding = certified;
        r.details.push_back(std::move(d));
    }
    {
        // Expanding mean map: the certificate fails and the run diverges.
        Eigen::MatrixXd s0(1, 1), mu(1, 1);
        s0(0, 0) = 1.0;
        mu(0, 0) = 1.5;
        Eigen::VectorXd m0(1);
        m0[0] = 1.0;
        const LinearShiftModel model =
            LinearShiftModel::mean_shift(s0, m0, mu);
        RunConfig cfg;
        cfg.T = 200;
        cfg.mode = RunMode::ExactExpectation;
        const Trajectory traj = run_rrm(model, loss1, cfg);
        CheckDetail d = make_check(
            "expanding mean map, mu=1.5: not certified, run diverges "
            "(diagnostic)",
            1.0, traj.diverged ? 1.0 : 0.0, 0.5, 0.0, /*binding=*/false);
        r.details.push_back(std::move(d));
    }
    finalize(r);
    return r;
}

const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names = {
        "fixed-point",  "gap-identity", "rerm-mse",
        "lambda-star",  "schedules",    "sensitivity",
    };
    return names;
}

TheoremCheckResult run_experiment(const ExperimentSpec& spec) {
    if (spec.name == "fixed-point") {
        return exp_fixed_point_coincidence(spec);
    }
    if (spec.name == "gap-identity") {
        return exp_gap_identity(spec);
    }
    if (spec.name == "rerm-mse") {
        return exp_rerm_mse_curve(spec);
    }
    if (spec.name == "lambda-star") {
        return exp_lambda_star_convergence(spec);
    }
    if (spec.name == "schedules") {
        return exp_reg_rerm_schedules(spec);
    }
    if (spec.name == "sensitivity") {
        return exp_sensitivity_diagnostic(spec);
    }
    throw InvalidParameterError("unknown experiment: " + spec.name);
}

}  // namespace perfsim
