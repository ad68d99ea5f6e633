#include "perfsim/dynamics.hpp"

#include <cmath>
#include <utility>

#include "perfsim/oracle.hpp"
#include "perfsim/rng.hpp"

namespace perfsim {

SampleSchedule SampleSchedule::constant(long long n) {
    if (n < 1) {
        throw InvalidParameterError("constant sample size must be >= 1");
    }
    return SampleSchedule(Kind::Constant, static_cast<double>(n), {});
}

SampleSchedule SampleSchedule::log_growth() {
    return SampleSchedule(Kind::LogGrowth, 0.0, {});
}

SampleSchedule SampleSchedule::inverse_t(double n1) {
    if (!(n1 > 0.0)) {
        throw InvalidParameterError("inverse-t sample scale must be > 0");
    }
    return SampleSchedule(Kind::InverseT, n1, {});
}

SampleSchedule SampleSchedule::custom(std::vector<double> values) {
    if (values.empty()) {
        throw InvalidParameterError("custom sample schedule must be non-empty");
    }
    for (double v : values) {
        if (!(v > 0.0)) {
            throw InvalidParameterError("sample sizes must be > 0");
        }
    }
    return SampleSchedule(Kind::Custom, 0.0, std::move(values));
}

double SampleSchedule::at(long long t) const {
    if (t < 1) {
        throw InvalidParameterError("sample schedule is indexed from t = 1");
    }
    switch (kind_) {
        case Kind::Constant:
            return value_;
        case Kind::LogGrowth: {
            const double n = std::ceil(std::log(static_cast<double>(t) + 1.0));
            return n < 1.0 ? 1.0 : n;
        }
        case Kind::InverseT:
            return value_ / static_cast<double>(t);
        case Kind::Custom: {
            const auto idx = static_cast<std::size_t>(t - 1);
            return idx < values_.size() ? values_[idx] : values_.back();
        }
    }
    return 1.0;
}

RegSchedule RegSchedule::none() {
    return RegSchedule(Kind::None, 0.0, {}, RegularizerKind::Proximal);
}

RegSchedule RegSchedule::constant(double lambda, RegularizerKind reg) {
    if (lambda < 0.0) {
        throw InvalidParameterError("regularization weight must be >= 0");
    }
    return RegSchedule(Kind::Constant, lambda, {}, reg);
}

RegSchedule RegSchedule::linear_in_t(RegularizerKind reg) {
    return RegSchedule(Kind::LinearInT, 0.0, {}, reg);
}

RegSchedule RegSchedule::custom(std::vector<double> values,
                                RegularizerKind reg) {
    if (values.empty()) {
        throw InvalidParameterError(
            "custom regularization schedule must be non-empty");
    }
    for (double v : values) {
        if (v < 0.0) {
            throw InvalidParameterError("regularization weights must be >= 0");
        }
    }
    return RegSchedule(Kind::Custom, 0.0, std::move(values), reg);
}

double RegSchedule::at(long long t) const {
    if (t < 0) {
        throw InvalidParameterError(
            "regularization schedule is indexed from t = 0");
    }
    switch (kind_) {
        case Kind::None:
            return 0.0;
        case Kind::Constant:
            return value_;
        case Kind::LinearInT:
            return static_cast<double>(t);
        case Kind::Custom: {
            const auto idx = static_cast<std::size_t>(t);
            return idx < values_.size() ? values_[idx] : values_.back();
        }
    }
    return 0.0;
}

namespace {

bool is_empirical(RunMode mode) { return mode != RunMode::ExactExpectation; }

void record_metrics(const LinearShiftModel& model, const QuadraticLoss& loss,
                    const RunConfig& config, const Eigen::VectorXd& theta,
                    StepRecord& rec) {
    if (!config.record_metrics) {
        return;
    }
    rec.pr = pr_analytic(model, loss, theta);
    if (config.theta_ps_ref) {
        rec.dist2_ps = (theta - *config.theta_ps_ref).squaredNorm();
    }
    if (config.theta_po_ref) {
        rec.dist2_po = (theta - *config.theta_po_ref).squaredNorm();
    }
}

Trajectory run_impl(const LinearShiftModel& model, const QuadraticLoss& loss,
                    const RunConfig& config, bool use_reg) {
    if (config.T < 1) {
        throw InvalidParameterError("horizon must be >= 1");
    }
    if (loss.dim() != model.dim()) {
        throw DimensionMismatchError("loss dimension does not match model");
    }
    const Eigen::Index d = model.dim();
    Eigen::VectorXd theta;
    if (config.theta0.size() == 0) {
        theta = Eigen::VectorXd::Zero(d);
    } else if (config.theta0.size() == d) {
        theta = config.theta0;
    } else {
        throw DimensionMismatchError("theta0 dimension does not match model");
    }
    if (config.mode == RunMode::EmpiricalInteger &&
        config.samples.kind() == SampleSchedule::Kind::InverseT) {
        throw ScheduleModeMismatchError(
            "inverse-t sample schedule is real-valued; use effective-noise "
            "mode");
    }

    Trajectory traj;
    traj.iterates.reserve(static_cast<std::size_t>(config.T) + 1);
    traj.per_step.reserve(static_cast<std::size_t>(config.T) + 1);
    traj.iterates.push_back(theta);
    traj.per_step.emplace_back();
    record_metrics(model, loss, config, theta, traj.per_step.back());

    const RegularizerKind reg_kind = config.reg.regularizer();
    Eigen::VectorXd zbar(d);
    Eigen::VectorXd noise(d);
    for (long long t = 1; t <= config.T; ++t) {
        const double lambda = use_reg ? config.reg.at(t - 1) : 0.0;
        StepRecord rec;
        if (use_reg && config.reg.kind() != RegSchedule::Kind::None) {
            rec.lambda_used = lambda;
        }
        if (config.mode == RunMode::ExactExpectation) {
            zbar = model.mean_at(theta);
        } else {
            const double n_t = config.samples.at(t);
            rec.n_used = n_t;
            RngStream stream =
                stream_for(config.seed, config.replication,
                           static_cast<std::uint64_t>(t));
            if (config.mode == RunMode::EmpiricalInteger) {
                if (n_t < 1.0 || n_t != std::floor(n_t)) {
                    throw ScheduleModeMismatchError(
                        "integer-sample mode needs integer N_t >= 1");
                }
                const Eigen::MatrixXd z = model.sample(
                    theta, static_cast<Eigen::Index>(n_t), stream);
                zbar = z.colwise().mean().transpose();
            } else {
                model.base().fill(stream, noise);
                zbar = model.mean_at(theta);
                zbar.noalias() +=
                    model.sigma_at(theta) * (noise / std::sqrt(n_t));
            }
        }
        theta = reg_erm_from_mean(loss, zbar, lambda, theta, reg_kind);
        traj.iterates.push_back(theta);
        record_metrics(model, loss, config, theta, rec);
        traj.per_step.push_back(std::move(rec));
        if (!(theta.norm() <= kDivergenceNorm)) {
            traj.diverged = true;
            break;
        }
    }
    return traj;
}

}  // namespace

Trajectory run_rrm(const LinearShiftModel& model, const QuadraticLoss& loss,
                   const RunConfig& config) {
    if (is_empirical(config.mode)) {
        throw InvalidParameterError(
            "exact retraining requires ExactExpectation mode");
    }
    return run_impl(model, loss, config, /*use_reg=*/false);
}

Trajectory run_rerm(const LinearShiftModel& model, const QuadraticLoss& loss,
                    const RunConfig& config) {
    if (!is_empirical(config.mode)) {
        throw InvalidParameterError(
            "sampled retraining requires an empirical mode");
    }
    return run_impl(model, loss, config, /*use_reg=*/false);
}

Trajectory run_reg_rrm(const LinearShiftModel& model, const QuadraticLoss& loss,
                       const RunConfig& config) {
    if (is_empirical(config.mode)) {
        throw InvalidParameterError(
            "exact retraining requires ExactExpectation mode");
    }
    return run_impl(model, loss, config, /*use_reg=*/true);
}

Trajectory run_reg_rerm(const LinearShiftModel& model,
                        const QuadraticLoss& loss, const RunConfig& config) {
    if (!is_empirical(config.mode)) {
        throw InvalidParameterError(
            "sampled retraining requires an empirical mode");
    }
    return run_impl(model, loss, config, /*use_reg=*/true);
}

Trajectory run_dynamics(Algorithm algo, const LinearShiftModel& model,
                        const QuadraticLoss& loss, const RunConfig& config) {
    switch (algo) {
        case Algorithm::RRM:
            return run_rrm(model, loss, config);
        case Algorithm::RERM:
            return run_rerm(model, loss, config);
        case Algorithm::RegRRM:
            return run_reg_rrm(model, loss, config);
        case Algorithm::RegRERM:
            return run_reg_rerm(model, loss, config);
    }
    throw InvalidParameterError("unknown algorithm");
}

}  // namespace perfsim
