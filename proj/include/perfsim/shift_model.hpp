#ifndef PERFSIM_SHIFT_MODEL_HPP
#define PERFSIM_SHIFT_MODEL_HPP

#include <vector>

#include <Eigen/Dense>

#include "perfsim/errors.hpp"
#include "perfsim/rng.hpp"

namespace perfsim {

enum class NoiseKind { StandardGaussian, Rademacher };

/**
 * Base noise law z0 with E[z0] = 0 and E[z0 z0ᵀ] = I.
 *
 * StandardGaussian is the default; Rademacher (independent ±1 coordinates)
 * shares the same first two moments, which is what most closed-form results
 * depend on.
 */
struct BaseNoise {
    NoiseKind kind = NoiseKind::StandardGaussian;

    void fill(RngStream& stream, Eigen::Ref<Eigen::VectorXd> out) const {
        const Eigen::Index d = out.size();
        if (kind == NoiseKind::StandardGaussian) {
            for (Eigen::Index i = 0; i < d; ++i) {
                out[i] = stream.next_gaussian();
            }
        } else {
            for (Eigen::Index i = 0; i < d; ++i) {
                out[i] = stream.next_sign();
            }
        }
    }
};

/**
 * Decision-dependent data distribution with linear dependence on the deployed
 * parameter vector:
 *
 *     z(theta) = (Sigma0 + Sigma(theta)) z0 + mu0 + Mu theta,
 *
 * where Sigma(theta) = sum_k theta[k] * C_k is a linear matrix-valued map
 * (stored by its coefficient matrices C_k, empty meaning identically zero)
 * and Mu is a constant d×d matrix. The model is immutable after construction
 * and safe to share across threads.
 */
class LinearShiftModel {
public:
    LinearShiftModel(Eigen::MatrixXd sigma0_mat,
                     std::vector<Eigen::MatrixXd> sigma_coeff,
                     Eigen::VectorXd mu0, Eigen::MatrixXd mu_map,
                     BaseNoise base = BaseNoise{});

    /// Model with no covariance dependence on theta (Sigma ≡ 0).
    static LinearShiftModel mean_shift(Eigen::MatrixXd sigma0_mat,
                                       Eigen::VectorXd mu0,
                                       Eigen::MatrixXd mu_map,
                                       BaseNoise base = BaseNoise{});

    int dim() const { return static_cast<int>(mu0_.size()); }
    const Eigen::MatrixXd& sigma0_mat() const { return sigma0_; }
    const std::vector<Eigen::MatrixXd>& sigma_coeff() const { return sigma_coeff_; }
    const Eigen::VectorXd& mu0() const { return mu0_; }
    const Eigen::MatrixXd& mu_map() const { return mu_; }
    const BaseNoise& base() const { return base_; }

    bool is_mean_shift() const { return sigma_is_zero_; }

    /// Covariance factor Sigma0 + Sigma(theta).
    Eigen::MatrixXd sigma_at(const Eigen::Ref<const Eigen::VectorXd>& theta) const;

    /// Mean of z(theta): mu0 + Mu theta.
    Eigen::VectorXd mean_at(const Eigen::Ref<const Eigen::VectorXd>& theta) const;

    /// Covariance of z(theta): S Sᵀ with S = sigma_at(theta). Symmetric PSD.
    Eigen::MatrixXd cov_at(const Eigen::Ref<const Eigen::VectorXd>& theta) const;

    /// Whether the covariance factor at theta has full rank (checked on
    /// demand; a rank-deficient factor still samples fine).
    bool full_rank_at(const Eigen::Ref<const Eigen::VectorXd>& theta) const;

    /**
     * Upper bound on the Wasserstein-1 sensitivity of the map theta ↦ D(theta):
     * op-norm of Mu plus op-norm of the stacked Sigma coefficients times √d.
     * Tight for mean-only shifts.
     */
    double sensitivity_bound() const;

    /**
     * n i.i.d. draws from D(theta), one per row. Identical (model, theta, n,
     * stream state) gives bit-identical output.
     */
    Eigen::MatrixXd sample(const Eigen::Ref<const Eigen::VectorXd>& theta,
                           Eigen::Index n, RngStream& stream) const;

private:
    void check_theta(const Eigen::Ref<const Eigen::VectorXd>& theta) const;

    Eigen::MatrixXd sigma0_;
    std::vector<Eigen::MatrixXd> sigma_coeff_;
    Eigen::VectorXd mu0_;
    Eigen::MatrixXd mu_;
    BaseNoise base_;
    bool sigma_is_zero_;
};

/**
 * One-dimensional shift model z(theta) = (sigma0 + sigma*theta) z0 + mu0 +
 * mu*theta. The workhorse for covariance-shift analysis; converts losslessly
 * to a d=1 LinearShiftModel.
 *
 * mu >= 1 is allowed (the divergent regime is worth simulating); contractive()
 * reports whether the retraining map is a contraction.
 */
class ScalarShiftModel {
public:
    ScalarShiftModel(double sigma0, double sigma, double mu0, double mu);

    double sigma0;
    double sigma;
    double mu0;
    double mu;

    bool contractive() const { return mu < 1.0 && mu > -1.0; }

    LinearShiftModel to_linear(BaseNoise base = BaseNoise{}) const;
};

}  // namespace perfsim

#endif  // PERFSIM_SHIFT_MODEL_HPP
