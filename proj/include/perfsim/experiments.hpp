#ifndef PERFSIM_EXPERIMENTS_HPP
#define PERFSIM_EXPERIMENTS_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "perfsim/dynamics.hpp"
#include "perfsim/oracle.hpp"

namespace perfsim {

struct TolerancePolicy {
    double rel_tol = 0.02;  // relative band for Monte Carlo curve matching
    double se_mult = 3.0;   // standard-error multiplier for statistical checks
    double abs_tol = 1e-8;  // absolute band for deterministic fixed-point checks
};

struct StatSummary {
    double mean = 0.0;
    double std_error = 0.0;
    long long count = 0;
    double ci_lo = 0.0;  // mean - 1.96 * std_error
    double ci_hi = 0.0;  // mean + 1.96 * std_error
};

/**
 * One comparison inside an experiment: a predicted value from closed-form
 * analysis against an observed value (possibly a Monte Carlo mean with
 * standard error). Non-binding details are informational and never fail the
 * experiment.
 */
struct CheckDetail {
    std::string label;
    double predicted = 0.0;
    double observed = 0.0;
    double std_error = 0.0;
    double tolerance = 0.0;
    bool pass = true;
    bool binding = true;
};

struct TheoremCheckResult {
    std::string name;
    bool pass = true;
    bool skipped = false;
    std::string note;
    std::vector<CheckDetail> details;
};

/**
 * Parameters shared by the experiment battery. Negative reps/horizon mean
 * "use this experiment's default". An explicit scalar_model narrows an
 * experiment to that single instance where it applies.
 */
struct ExperimentSpec {
    std::string name;
    std::uint64_t seed = 2024;
    long long reps = -1;
    long long horizon = -1;
    int threads = 1;
    TolerancePolicy tol;
    std::optional<ScalarShiftModel> scalar_model;
    std::optional<long long> n_samples;
    std::optional<double> lambda;
};

/// Pairwise (cascade) sum: fixed association, accurate for large n.
double pairwise_sum(const double* x, std::size_t n);

/// Mean, standard error, and 95% interval of a sample.
StatSummary summarize(const std::vector<double>& values);

/**
 * Runs fn(rep) for rep = 0..reps-1 and summarizes the results. Replications
 * may run on several threads; results are stored by replication index and
 * reduced in fixed order, so the summary does not depend on the thread count.
 */
StatSummary run_replicated(long long reps, int threads,
                           const std::function<double(std::uint64_t)>& fn);

/**
 * Same, for recipes that produce `width` values per replication (e.g. one
 * per checkpoint). Returns one summary per component.
 */
std::vector<StatSummary> run_replicated_vec(
    long long reps, int threads, int width,
    const std::function<void(std::uint64_t, double*)>& fn);

/**
 * Mean squared distance to the fixed point after T rounds of sampled
 * retraining with constant sample size n: the bias term e0² μ^{2T} plus the
 * accumulated sampling noise (d σ0²/n)(1-μ^{2T})/(1-μ²).
 */
double rerm_mse_closed_form(double e0_sq, double mu, double sigma0, int d,
                            double n, long long t);

/// Large-T limit of rerm_mse_closed_form: d σ0²/(n (1-μ²)).
double rerm_mse_plateau(double mu, double sigma0, int d, double n);

/**
 * Analytic E‖theta_t - theta_ps‖² for regularized sampled retraining of a
 * scalar-mean-shift instance (proximal regularizer, squared loss), evaluated
 * for t = 0..T by the forward recursion
 *   bias_t  = a_t² bias_{t-1},
 *   noise_t = a_t² noise_{t-1} + d σ0² / (N_t (λ_{t-1}+1)²),
 * with a_t = (λ_{t-1}+μ)/(λ_{t-1}+1). Entry t holds bias_t + noise_t.
 */
std::vector<double> reg_rerm_mse_curve(double e0_sq, double mu, double sigma0,
                                       int d, const SampleSchedule& samples,
                                       const RegSchedule& reg, long long t_max);

/// Random scalar instance: σ0∈(0,2], σ∈[0,2], μ0∈[-2,2], μ∈[-1,0.9].
ScalarShiftModel random_scalar_instance(RngStream& stream);

/// Random symmetric positive-definite matrix (BᵀB plus a ridge).
Eigen::MatrixXd random_spd_matrix(int d, RngStream& stream);

/// Random mean-shift model with the mean map scaled to a given operator norm.
LinearShiftModel random_mean_shift_instance(int d, RngStream& stream,
                                            double mu_norm = 0.7);

TheoremCheckResult exp_fixed_point_coincidence(const ExperimentSpec& spec);
TheoremCheckResult exp_gap_identity(const ExperimentSpec& spec);
TheoremCheckResult exp_rerm_mse_curve(const ExperimentSpec& spec);
TheoremCheckResult exp_lambda_star_convergence(const ExperimentSpec& spec);
TheoremCheckResult exp_reg_rerm_schedules(const ExperimentSpec& spec);
TheoremCheckResult exp_sensitivity_diagnostic(const ExperimentSpec& spec);

/// The experiment ids accepted by run_experiment, in suite order.
const std::vector<std::string>& experiment_names();

/// Dispatch by ExperimentSpec::name; unknown names raise InvalidParameterError.
TheoremCheckResult run_experiment(const ExperimentSpec& spec);

}  // namespace perfsim

#endif  // PERFSIM_EXPERIMENTS_HPP
