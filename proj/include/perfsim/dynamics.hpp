#ifndef PERFSIM_DYNAMICS_HPP
#define PERFSIM_DYNAMICS_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "perfsim/loss.hpp"
#include "perfsim/shift_model.hpp"

namespace perfsim {

/// Norm threshold past which a trajectory is declared divergent.
inline constexpr double kDivergenceNorm = 1e12;

/**
 * Per-round sample budget N_t, t >= 1.
 *
 * Constant and LogGrowth (N_t = max(1, ceil(log(t+1)))) are integer-valued;
 * InverseT (N_t = n1/t) is real-valued and only usable in effective-noise
 * mode. Custom holds an explicit list for t = 1, 2, ...; past the end the
 * last entry repeats.
 */
class SampleSchedule {
public:
    enum class Kind { Constant, LogGrowth, InverseT, Custom };

    static SampleSchedule constant(long long n);
    static SampleSchedule log_growth();
    static SampleSchedule inverse_t(double n1 = 1.0);
    static SampleSchedule custom(std::vector<double> values);

    Kind kind() const { return kind_; }
    double at(long long t) const;

private:
    SampleSchedule(Kind kind, double value, std::vector<double> values)
        : kind_(kind), value_(value), values_(std::move(values)) {}

    Kind kind_;
    double value_;
    std::vector<double> values_;
};

/**
 * Regularization weight lambda_t, t >= 0. The update producing theta_t uses
 * lambda_{t-1}. None means unregularized; LinearInT is lambda_t = t; Custom
 * holds an explicit list for t = 0, 1, ... with the last entry repeating.
 */
class RegSchedule {
public:
    enum class Kind { None, Constant, LinearInT, Custom };

    static RegSchedule none();
    static RegSchedule constant(double lambda,
                                RegularizerKind reg = RegularizerKind::Proximal);
    static RegSchedule linear_in_t(
        RegularizerKind reg = RegularizerKind::Proximal);
    static RegSchedule custom(std::vector<double> values,
                              RegularizerKind reg = RegularizerKind::Proximal);

    Kind kind() const { return kind_; }
    RegularizerKind regularizer() const { return reg_; }
    double at(long long t) const;

private:
    RegSchedule(Kind kind, double value, std::vector<double> values,
                RegularizerKind reg)
        : kind_(kind), value_(value), values_(std::move(values)), reg_(reg) {}

    Kind kind_;
    double value_;
    std::vector<double> values_;
    RegularizerKind reg_;
};

enum class RunMode {
    ExactExpectation,        // population update, no randomness
    EmpiricalInteger,        // draw N_t samples, retrain on their mean
    EmpiricalEffectiveNoise, // exact mean plus noise of the sample mean's law
};

enum class Algorithm { RRM, RERM, RegRRM, RegRERM };

struct RunConfig {
    long long T = 1;
    Eigen::VectorXd theta0;  // empty means the zero vector
    std::uint64_t seed = 0;
    std::uint64_t replication = 0;  // index into the derived stream family
    RunMode mode = RunMode::ExactExpectation;
    SampleSchedule samples = SampleSchedule::constant(1);
    RegSchedule reg = RegSchedule::none();
    bool record_metrics = false;
    // Reference points for the recorded distance metrics, when known.
    std::optional<Eigen::VectorXd> theta_ps_ref;
    std::optional<Eigen::VectorXd> theta_po_ref;
};

struct StepRecord {
    std::optional<double> n_used;
    std::optional<double> lambda_used;
    std::optional<double> pr;
    std::optional<double> dist2_ps;
    std::optional<double> dist2_po;
};

/**
 * Recorded run: iterates theta_0..theta_T and one StepRecord per iterate.
 * If the norm guard trips, diverged is set and the trajectory ends at the
 * first offending iterate.
 */
struct Trajectory {
    std::vector<Eigen::VectorXd> iterates;
    std::vector<StepRecord> per_step;
    bool diverged = false;

    const Eigen::VectorXd& last() const { return iterates.back(); }
};

/// Exact retraining: theta_t = mean of D(theta_{t-1}). ExactExpectation only.
Trajectory run_rrm(const LinearShiftModel& model, const QuadraticLoss& loss,
                   const RunConfig& config);

/// Retraining on sampled data (or its effective-noise surrogate).
Trajectory run_rerm(const LinearShiftModel& model, const QuadraticLoss& loss,
                    const RunConfig& config);

/// Exact retraining with the configured regularization schedule.
Trajectory run_reg_rrm(const LinearShiftModel& model, const QuadraticLoss& loss,
                       const RunConfig& config);

/// Sampled retraining with the configured regularization schedule.
Trajectory run_reg_rerm(const LinearShiftModel& model,
                        const QuadraticLoss& loss, const RunConfig& config);

Trajectory run_dynamics(Algorithm algo, const LinearShiftModel& model,
                        const QuadraticLoss& loss, const RunConfig& config);

}  // namespace perfsim

#endif  // PERFSIM_DYNAMICS_HPP
