#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "perfsim/dynamics.hpp"
#include "perfsim/errors.hpp"
#include "perfsim/experiments.hpp"
#include "perfsim/rng.hpp"

using namespace perfsim;

namespace {

// Unrolled two-term error decomposition, written directly from the one-step
// recursion e_t = a_t e_{t-1} + xi_t / (1 + lambda_{t-1}) with
// a_t = (lambda_{t-1} + mu) / (1 + lambda_{t-1}); used as an independent
// cross-check of the forward recursion.
double unrolled_mse(double e0_sq, double mu, double sigma0, int d,
                    const SampleSchedule& samples, const RegSchedule& reg,
                    long long t) {
    const auto a = [&](long long s) {
        const double l = reg.at(s - 1);
        return (l + mu) / (1.0 + l);
    };
    double bias = e0_sq;
    for (long long s = 1; s <= t; ++s) {
        bias *= a(s) * a(s);
    }
    double noise = 0.0;
    for (long long s = 1; s <= t; ++s) {
        double damp = 1.0;
        for (long long r = s + 1; r <= t; ++r) {
            damp *= a(r) * a(r);
        }
        const double l = reg.at(s - 1);
        noise += damp * d * sigma0 * sigma0 /
                 (samples.at(s) * (1.0 + l) * (1.0 + l));
    }
    return bias + noise;
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double dmax = 0.0;
    while (i < a.size() && j < b.size()) {
        if (a[i] <= b[j]) {
            ++i;
        } else {
            ++j;
        }
        dmax = std::max(dmax, std::abs(i / na - j / nb));
    }
    return dmax;
}

}  // namespace

TEST_SUITE("experiments") {

TEST_CASE("pairwise summation matches exact sums") {
    std::vector<double> v(1000);
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = static_cast<double>(i + 1);
    }
    CHECK(pairwise_sum(v.data(), v.size()) == doctest::Approx(500500.0));
    CHECK(pairwise_sum(v.data(), 0) == 0.0);
    CHECK(pairwise_sum(v.data(), 1) == 1.0);
    // Deterministic: same input, same bits.
    CHECK(pairwise_sum(v.data(), v.size()) ==
          pairwise_sum(v.data(), v.size()));
}

TEST_CASE("summary statistics on a known sample") {
    const std::vector<double> v = {1.0, 2.0, 3.0, 4.0};
    const StatSummary s = summarize(v);
    CHECK(s.mean == doctest::Approx(2.5));
    CHECK(s.std_error ==
          doctest::Approx(std::sqrt(5.0 / 3.0 / 4.0)).epsilon(1e-12));
    CHECK(s.count == 4);
    CHECK(s.ci_lo == doctest::Approx(2.5 - 1.96 * s.std_error));
    CHECK(s.ci_hi == doctest::Approx(2.5 + 1.96 * s.std_error));
    const StatSummary one = summarize({7.0});
    CHECK(one.mean == 7.0);
    CHECK(one.std_error == 0.0);
}

TEST_CASE("replicated harness is independent of the thread count") {
    const auto fn = [](std::uint64_t rep) {
        RngStream s = stream_for(99, rep, 0);
        return s.next_gaussian();
    };
    const StatSummary s1 = run_replicated(5000, 1, fn);
    const StatSummary s8 = run_replicated(5000, 8, fn);
    CHECK(s1.mean == s8.mean);
    CHECK(s1.std_error == s8.std_error);
    // CLT sanity: mean of 5000 standard normals.
    CHECK(std::abs(s1.mean) < 5.0 / std::sqrt(5000.0));
    CHECK(s1.std_error == doctest::Approx(1.0 / std::sqrt(5000.0)).epsilon(0.1));

    const auto vec_fn = [](std::uint64_t rep, double* out) {
        RngStream s = stream_for(100, rep, 0);
        out[0] = s.next_gaussian();
        out[1] = 2.0 + s.next_gaussian();
    };
    const auto v1 = run_replicated_vec(3000, 1, 2, vec_fn);
    const auto v6 = run_replicated_vec(3000, 6, 2, vec_fn);
    REQUIRE(v1.size() == 2);
    CHECK(v1[0].mean == v6[0].mean);
    CHECK(v1[1].mean == v6[1].mean);
    CHECK(std::abs(v1[1].mean - 2.0) < 5.0 / std::sqrt(3000.0));
}

TEST_CASE("closed-form error curve for the plain noisy recursion") {
    // T = 1: squared bias 1, noise 1/4.
    CHECK(rerm_mse_closed_form(4.0, 0.5, 1.0, 1, 4.0, 1) ==
          doctest::Approx(1.25).epsilon(1e-12));
    CHECK(rerm_mse_closed_form(4.0, 0.5, 1.0, 1, 4.0, 5) ==
          doctest::Approx(0.336914).epsilon(1e-4));
    CHECK(rerm_mse_closed_form(4.0, 0.5, 1.0, 1, 4.0, 50) ==
          doctest::Approx(1.0 / 3.0).epsilon(1e-10));
    CHECK(rerm_mse_plateau(0.5, 1.0, 1, 4.0) ==
          doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    // The plateau is the t -> infinity limit.
    CHECK(rerm_mse_closed_form(9.0, -0.3, 0.7, 2, 3.0, 400) ==
          doctest::Approx(rerm_mse_plateau(-0.3, 0.7, 2, 3.0)).epsilon(1e-12));
}

TEST_CASE("regularized error curve agrees with the unrolled sums") {
    const double mu = 0.5, sigma0 = 1.0, e0_sq = 4.0;
    {
        const SampleSchedule samples = SampleSchedule::log_growth();
        const RegSchedule reg =
            RegSchedule::constant(5.0, RegularizerKind::Proximal);
        const auto curve =
            reg_rerm_mse_curve(e0_sq, mu, sigma0, 1, samples, reg, 200);
        REQUIRE(curve.size() == 201);
        CHECK(curve[0] == e0_sq);
        for (const long long t : {1LL, 7LL, 50LL, 200LL}) {
            const double direct =
                unrolled_mse(e0_sq, mu, sigma0, 1, samples, reg, t);
            CHECK(curve[t] == doctest::Approx(direct).epsilon(1e-12));
        }
    }
    {
        const SampleSchedule samples = SampleSchedule::constant(1);
        const RegSchedule reg =
            RegSchedule::linear_in_t(RegularizerKind::Proximal);
        const auto curve =
            reg_rerm_mse_curve(e0_sq, mu, sigma0, 1, samples, reg, 200);
        for (const long long t : {1LL, 10LL, 100LL, 200LL}) {
            const double direct =
                unrolled_mse(e0_sq, mu, sigma0, 1, samples, reg, t);
            CHECK(curve[t] == doctest::Approx(direct).epsilon(1e-12));
        }
    }
    {
        // Offset-by-one weight schedule, supplied explicitly.
        std::vector<double> lams(200);
        for (std::size_t i = 0; i < lams.size(); ++i) {
            lams[i] = static_cast<double>(i + 1);
        }
        const SampleSchedule samples = SampleSchedule::constant(2);
        const RegSchedule reg =
            RegSchedule::custom(lams, RegularizerKind::Proximal);
        const auto curve =
            reg_rerm_mse_curve(e0_sq, mu, sigma0, 1, samples, reg, 150);
        for (const long long t : {1LL, 40LL, 150LL}) {
            const double direct =
                unrolled_mse(e0_sq, mu, sigma0, 1, samples, reg, t);
            CHECK(curve[t] == doctest::Approx(direct).epsilon(1e-12));
        }
    }
    // With no regularization the curve collapses to the plain closed form.
    {
        const SampleSchedule samples = SampleSchedule::constant(4);
        const RegSchedule reg = RegSchedule::none();
        const auto curve =
            reg_rerm_mse_curve(e0_sq, mu, sigma0, 1, samples, reg, 50);
        for (const long long t : {1LL, 5LL, 50LL}) {
            CHECK(curve[t] ==
                  doctest::Approx(rerm_mse_closed_form(e0_sq, mu, sigma0, 1,
                                                       4.0, t))
                      .epsilon(1e-12));
        }
    }
}

TEST_CASE("integer and surrogate sampling agree in distribution") {
    const LinearShiftModel m = ScalarShiftModel(1.0, 0.0, 1.0, 0.5).to_linear();
    const QuadraticLoss loss = QuadraticLoss::squared(1);
    const int reps = 1500;
    std::vector<double> integer_final, surrogate_final;
    for (int rep = 0; rep < reps; ++rep) {
        RunConfig cfg;
        cfg.T = 3;
        cfg.seed = 101;
        cfg.replication = static_cast<std::uint64_t>(rep);
        cfg.mode = RunMode::EmpiricalInteger;
        cfg.samples = SampleSchedule::constant(2);
        integer_final.push_back(run_rerm(m, loss, cfg).last()[0]);
        cfg.seed = 202;
        cfg.mode = RunMode::EmpiricalEffectiveNoise;
        surrogate_final.push_back(run_rerm(m, loss, cfg).last()[0]);
    }
    const double d = ks_statistic(integer_final, surrogate_final);
    const double n = static_cast<double>(reps);
    // Two-sample Kolmogorov-Smirnov bound at significance 1e-3.
    const double threshold = 1.95 * std::sqrt(2.0 * n / (n * n));
    CHECK(d < threshold);
}

TEST_CASE("random instance generators stay in the admissible region") {
    RngStream gen(808, 0);
    for (int i = 0; i < 500; ++i) {
        const ScalarShiftModel m = random_scalar_instance(gen);
        CHECK(m.sigma0 > 0.0);
        CHECK(m.sigma >= 0.0);
        CHECK(m.contractive());
    }
    for (const int d : {2, 5}) {
        const LinearShiftModel m = random_mean_shift_instance(d, gen);
        CHECK(m.dim() == d);
        CHECK(m.is_mean_shift());
        CHECK(m.sensitivity_bound() < 1.0);
    }
    const Eigen::MatrixXd a = random_spd_matrix(4, gen);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
    CHECK((a - a.transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gap identity experiment passes") {
    ExperimentSpec spec;
    spec.name = "gap-identity";
    spec.reps = 20000;
    const TheoremCheckResult res = run_experiment(spec);
    for (const auto& det : res.details) {
        INFO(det.label, ": predicted ", det.predicted, " observed ",
             det.observed);
        CHECK(det.pass);
    }
    CHECK(res.pass);
    CHECK_FALSE(res.skipped);
    CHECK(res.details.size() >= 3);
}

TEST_CASE("fixed point coincidence experiment passes") {
    ExperimentSpec spec;
    spec.name = "fixed-point";
    spec.reps = 20000;
    const TheoremCheckResult res = run_experiment(spec);
    for (const auto& det : res.details) {
        INFO(det.label, ": observed ", det.observed, " tol ", det.tolerance);
        CHECK(det.pass);
    }
    CHECK(res.pass);
}

TEST_CASE("noisy error curve experiment passes") {
    ExperimentSpec spec;
    spec.name = "rerm-mse";
    spec.reps = 5000;
    const TheoremCheckResult res = run_experiment(spec);
    for (const auto& det : res.details) {
        if (!det.binding) {
            continue;
        }
        INFO(det.label, ": predicted ", det.predicted, " observed ",
             det.observed);
        CHECK(det.pass);
    }
    CHECK(res.pass);
}

TEST_CASE("ridge weight experiment passes") {
    ExperimentSpec spec;
    spec.name = "lambda-star";
    const TheoremCheckResult res = run_experiment(spec);
    for (const auto& det : res.details) {
        INFO(det.label, ": observed ", det.observed);
        CHECK(det.pass);
    }
    CHECK(res.pass);
    CHECK_FALSE(res.skipped);
}

TEST_CASE("ridge weight experiment skips out-of-scope instances") {
    ExperimentSpec spec;
    spec.name = "lambda-star";
    spec.scalar_model = ScalarShiftModel(1.0, 0.5, 1.0, 0.5);
    const TheoremCheckResult res = run_experiment(spec);
    CHECK(res.skipped);
    CHECK(res.pass);
    CHECK_FALSE(res.note.empty());
}

TEST_CASE("schedule experiment passes with reduced replications") {
    ExperimentSpec spec;
    spec.name = "schedules";
    spec.reps = 300;
    const TheoremCheckResult res = run_experiment(spec);
    for (const auto& det : res.details) {
        if (!det.binding) {
            continue;
        }
        INFO(det.label, ": predicted ", det.predicted, " observed ",
             det.observed, " tol ", det.tolerance);
        CHECK(det.pass);
    }
    CHECK(res.pass);
}

TEST_CASE("sensitivity diagnostic experiment passes") {
    ExperimentSpec spec;
    spec.name = "sensitivity";
    const TheoremCheckResult res = run_experiment(spec);
    for (const auto& det : res.details) {
        if (!det.binding) {
            continue;
        }
        INFO(det.label, ": observed ", det.observed);
        CHECK(det.pass);
    }
    CHECK(res.pass);
}

TEST_CASE("experiment results are identical across thread counts") {
    ExperimentSpec a;
    a.name = "rerm-mse";
    a.reps = 2000;
    a.threads = 1;
    ExperimentSpec b = a;
    b.threads = 7;
    const TheoremCheckResult ra = run_experiment(a);
    const TheoremCheckResult rb = run_experiment(b);
    REQUIRE(ra.details.size() == rb.details.size());
    for (std::size_t i = 0; i < ra.details.size(); ++i) {
        CHECK(ra.details[i].observed == rb.details[i].observed);
        CHECK(ra.details[i].std_error == rb.details[i].std_error);
    }
}

TEST_CASE("unknown experiment names are rejected") {
    ExperimentSpec spec;
    spec.name = "does-not-exist";
    CHECK_THROWS_AS(run_experiment(spec), InvalidParameterError);
    CHECK(experiment_names().size() == 6);
}

TEST_CASE("error curve experiment refuses covariance-shift instances") {
    ExperimentSpec spec;
    spec.name = "rerm-mse";
    spec.reps = 100;
    spec.scalar_model = ScalarShiftModel(0.5, 0.5, 1.0, 0.0);
    CHECK_THROWS_AS(run_experiment(spec), WrongRegimeError);
    spec.scalar_model = ScalarShiftModel(1.0, 0.0, 1.0, 1.2);
    CHECK_THROWS_AS(run_experiment(spec), NonContractiveError);
}

}  // TEST_SUITE
