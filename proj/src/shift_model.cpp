#include "perfsim/shift_model.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace perfsim {

namespace {

bool all_zero(const std::vector<Eigen::MatrixXd>& mats) {
    for (const auto& m : mats) {
        if (!m.isZero(0.0)) {
            return false;
        }
    }
    return true;
}

}  // namespace

LinearShiftModel::LinearShiftModel(Eigen::MatrixXd sigma0_mat,
                                   std::vector<Eigen::MatrixXd> sigma_coeff,
                                   Eigen::VectorXd mu0, Eigen::MatrixXd mu_map,
                                   BaseNoise base)
    : sigma0_(std::move(sigma0_mat)),
      sigma_coeff_(std::move(sigma_coeff)),
      mu0_(std::move(mu0)),
      mu_(std::move(mu_map)),
      base_(base) {
    const Eigen::Index d = mu0_.size();
    if (d < 1) {
        throw InvalidParameterError("shift model dimension must be >= 1");
    }
    if (sigma0_.rows() != d || sigma0_.cols() != d) {
        throw DimensionMismatchError("sigma0 matrix must be d x d");
    }
    if (mu_.rows() != d || mu_.cols() != d) {
        throw DimensionMismatchError("mu map must be d x d");
    }
    if (!sigma_coeff_.empty() &&
        sigma_coeff_.size() != static_cast<std::size_t>(d)) {
        throw DimensionMismatchError(
            "sigma map needs one coefficient matrix per coordinate");
    }
    for (const auto& c : sigma_coeff_) {
        if (c.rows() != d || c.cols() != d) {
            throw DimensionMismatchError("sigma coefficient must be d x d");
        }
    }
    sigma_is_zero_ = all_zero(sigma_coeff_);
}

LinearShiftModel LinearShiftModel::mean_shift(Eigen::MatrixXd sigma0_mat,
                                              Eigen::VectorXd mu0,
                                              Eigen::MatrixXd mu_map,
                                              BaseNoise base) {
    return LinearShiftModel(std::move(sigma0_mat), {}, std::move(mu0),
                            std::move(mu_map), base);
}

void LinearShiftModel::check_theta(
    const Eigen::Ref<const Eigen::VectorXd>& theta) const {
    if (theta.size() != mu0_.size()) {
        throw DimensionMismatchError("theta has dimension " +
                                     std::to_string(theta.size()) +
                                     ", model expects " +
                                     std::to_string(mu0_.size()));
    }
}

Eigen::MatrixXd LinearShiftModel::sigma_at(
    const Eigen::Ref<const Eigen::VectorXd>& theta) const {
    check_theta(theta);
    Eigen::MatrixXd s = sigma0_;
    if (!sigma_is_zero_) {
        for (std::size_t k = 0; k < sigma_coeff_.size(); ++k) {
            s.noalias() += theta[static_cast<Eigen::Index>(k)] * sigma_coeff_[k];
        }
    }
    return s;
}

Eigen::VectorXd LinearShiftModel::mean_at(
    const Eigen::Ref<const Eigen::VectorXd>& theta) const {
    check_theta(theta);
    return mu0_ + mu_ * theta;
}

Eigen::MatrixXd LinearShiftModel::cov_at(
    const Eigen::Ref<const Eigen::VectorXd>& theta) const {
    const Eigen::MatrixXd s = sigma_at(theta);
    return s * s.transpose();
}

bool LinearShiftModel::full_rank_at(
    const Eigen::Ref<const Eigen::VectorXd>& theta) const {
    const Eigen::MatrixXd s = sigma_at(theta);
    return Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(s).rank() == s.rows();
}

double LinearShiftModel::sensitivity_bound() const {
    const Eigen::Index d = mu0_.size();
    double mu_norm = 0.0;
    if (!mu_.isZero(0.0)) {
        mu_norm = Eigen::JacobiSVD<Eigen::MatrixXd>(mu_).singularValues()(0);
    }
    double sigma_norm = 0.0;
    if (!sigma_is_zero_) {
        // Operator norm of theta ↦ Sigma(theta) with the Frobenius norm on the
        // output, via the (d*d) x d matrix of vectorized coefficients.
        Eigen::MatrixXd stacked(d * d, d);
        for (Eigen::Index k = 0; k < d; ++k) {
            stacked.col(k) =
                Eigen::Map<const Eigen::VectorXd>(sigma_coeff_[k].data(), d * d);
        }
        sigma_norm =
            Eigen::JacobiSVD<Eigen::MatrixXd>(stacked).singularValues()(0);
    }
    return mu_norm + sigma_norm * std::sqrt(static_cast<double>(d));
}

Eigen::MatrixXd LinearShiftModel::sample(
    const Eigen::Ref<const Eigen::VectorXd>& theta, Eigen::Index n,
    RngStream& stream) const {
    check_theta(theta);
    if (n < 1) {
        throw InvalidParameterError("sample count must be >= 1");
    }
    const Eigen::Index d = mu0_.size();
    Eigen::MatrixXd w(n, d);
    Eigen::VectorXd row(d);
    for (Eigen::Index i = 0; i < n; ++i) {
        base_.fill(stream, row);
        w.row(i) = row;
    }
    const Eigen::MatrixXd s = sigma_at(theta);
    const Eigen::VectorXd m = mean_at(theta);
    Eigen::MatrixXd z = w * s.transpose();
    z.rowwise() += m.transpose();
    return z;
}

ScalarShiftModel::ScalarShiftModel(double sigma0_in, double sigma_in,
                                   double mu0_in, double mu_in)
    : sigma0(sigma0_in), sigma(sigma_in), mu0(mu0_in), mu(mu_in) {
    if (!(sigma0 > 0.0)) {
        throw InvalidParameterError("sigma0 must be > 0");
    }
    if (sigma < 0.0) {
        throw InvalidParameterError("sigma must be >= 0");
    }
}

LinearShiftModel ScalarShiftModel::to_linear(BaseNoise base) const {
    Eigen::MatrixXd s0(1, 1);
    s0(0, 0) = sigma0;
    Eigen::MatrixXd c(1, 1);
    c(0, 0) = sigma;
    Eigen::VectorXd m0(1);
    m0(0) = mu0;
    Eigen::MatrixXd m(1, 1);
    m(0, 0) = mu;
    std::vector<Eigen::MatrixXd> coeff;
    if (sigma != 0.0) {
        coeff.push_back(c);
    }
    return LinearShiftModel(s0, coeff, m0, m, base);
}

}  // namespace perfsim
