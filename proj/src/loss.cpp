#include "perfsim/loss.hpp"

#include <string>
#include <utility>

namespace perfsim {

QuadraticLoss::QuadraticLoss(Eigen::MatrixXd a) : a_(std::move(a)) {
    if (a_.rows() < 1 || a_.rows() != a_.cols()) {
        throw DimensionMismatchError("loss matrix must be square and non-empty");
    }
    if (!a_.isApprox(a_.transpose(), 1e-12)) {
        throw InvalidParameterError("loss matrix must be symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a_,
                                                      Eigen::EigenvaluesOnly);
    gamma_ = es.eigenvalues().minCoeff();
    beta_z_ = es.eigenvalues().maxCoeff();
    if (!(gamma_ > 0.0)) {
        throw InvalidParameterError("loss matrix must be positive definite");
    }
    is_identity_ = a_.isIdentity(0.0);
}

QuadraticLoss QuadraticLoss::squared(int d) {
    return QuadraticLoss(Eigen::MatrixXd::Identity(d, d));
}

void QuadraticLoss::check_dims(
    const Eigen::Ref<const Eigen::VectorXd>& z,
    const Eigen::Ref<const Eigen::VectorXd>& theta) const {
    if (z.size() != a_.rows() || theta.size() != a_.rows()) {
        throw DimensionMismatchError(
            "loss expects z and theta of dimension " +
            std::to_string(a_.rows()));
    }
}

double QuadraticLoss::value(const Eigen::Ref<const Eigen::VectorXd>& z,
                            const Eigen::Ref<const Eigen::VectorXd>& theta) const {
    check_dims(z, theta);
    const Eigen::VectorXd r = theta - z;
    if (is_identity_) {
        return 0.5 * r.squaredNorm();
    }
    return 0.5 * r.dot(a_ * r);
}

Eigen::VectorXd QuadraticLoss::grad_theta(
    const Eigen::Ref<const Eigen::VectorXd>& z,
    const Eigen::Ref<const Eigen::VectorXd>& theta) const {
    check_dims(z, theta);
    if (is_identity_) {
        return theta - z;
    }
    return a_ * (theta - z);
}

Eigen::VectorXd erm_minimizer(const QuadraticLoss& loss,
                              const Eigen::Ref<const Eigen::MatrixXd>& samples) {
    if (samples.rows() < 1) {
        throw InvalidParameterError("need at least one sample");
    }
    if (samples.cols() != loss.dim()) {
        throw DimensionMismatchError("sample dimension does not match loss");
    }
    return samples.colwise().mean().transpose();
}

Eigen::VectorXd reg_erm_from_mean(
    const QuadraticLoss& loss,
    const Eigen::Ref<const Eigen::VectorXd>& sample_mean, double lambda,
    const Eigen::Ref<const Eigen::VectorXd>& anchor, RegularizerKind kind) {
    if (lambda < 0.0) {
        throw InvalidParameterError("regularization weight must be >= 0");
    }
    if (sample_mean.size() != loss.dim() || anchor.size() != loss.dim()) {
        throw DimensionMismatchError("mean/anchor dimension does not match loss");
    }
    if (lambda == 0.0) {
        return sample_mean;
    }
    if (loss.is_identity()) {
        if (kind == RegularizerKind::Proximal) {
            return (sample_mean + lambda * anchor) / (1.0 + lambda);
        }
        return sample_mean / (1.0 + lambda);
    }
    const int d = loss.dim();
    Eigen::MatrixXd lhs = loss.a() + lambda * Eigen::MatrixXd::Identity(d, d);
    Eigen::VectorXd rhs = loss.a() * sample_mean;
    if (kind == RegularizerKind::Proximal) {
        rhs += lambda * anchor;
    }
    return lhs.llt().solve(rhs);
}

Eigen::VectorXd reg_erm_minimizer(
    const QuadraticLoss& loss, const Eigen::Ref<const Eigen::MatrixXd>& samples,
    double lambda, const Eigen::Ref<const Eigen::VectorXd>& anchor,
    RegularizerKind kind) {
    const Eigen::VectorXd zbar = erm_minimizer(loss, samples);
    return reg_erm_from_mean(loss, zbar, lambda, anchor, kind);
}

}  // namespace perfsim
