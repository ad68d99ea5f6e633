#ifndef PERFSIM_LOSS_HPP
#define PERFSIM_LOSS_HPP

#include <Eigen/Dense>

#include "perfsim/errors.hpp"

namespace perfsim {

/**
 * Quadratic loss ℓ(z; θ) = ½ (θ - z)ᵀ A (θ - z) with A symmetric positive
 * definite. A = I recovers the plain squared loss. Strong-convexity modulus
 * gamma() = λ_min(A) and smoothness-in-z constant beta_z() = λ_max(A) are
 * computed once at construction.
 */
class QuadraticLoss {
public:
    explicit QuadraticLoss(Eigen::MatrixXd a);

    /// Squared loss in dimension d (A = I).
    static QuadraticLoss squared(int d);

    int dim() const { return static_cast<int>(a_.rows()); }
    const Eigen::MatrixXd& a() const { return a_; }
    bool is_identity() const { return is_identity_; }
    double gamma() const { return gamma_; }
    double beta_z() const { return beta_z_; }

    double value(const Eigen::Ref<const Eigen::VectorXd>& z,
                 const Eigen::Ref<const Eigen::VectorXd>& theta) const;

    /// Gradient in theta: A (θ - z).
    Eigen::VectorXd grad_theta(const Eigen::Ref<const Eigen::VectorXd>& z,
                               const Eigen::Ref<const Eigen::VectorXd>& theta) const;

private:
    void check_dims(const Eigen::Ref<const Eigen::VectorXd>& z,
                    const Eigen::Ref<const Eigen::VectorXd>& theta) const;

    Eigen::MatrixXd a_;
    double gamma_ = 0.0;
    double beta_z_ = 0.0;
    bool is_identity_ = false;
};

enum class RegularizerKind {
    Proximal,  // ½‖θ - anchor‖²
    Ridge,     // ½‖θ‖²
};

/**
 * Minimizer of the empirical risk (1/n) Σ ℓ(z_i; θ) over the rows of
 * `samples`: the sample mean, independent of A.
 */
Eigen::VectorXd erm_minimizer(const QuadraticLoss& loss,
                              const Eigen::Ref<const Eigen::MatrixXd>& samples);

/**
 * Minimizer of (1/n) Σ ℓ(z_i; θ) + λ R(θ, anchor). Solves
 * (A + λI) θ = A z̄ + λ r with r = anchor (Proximal) or 0 (Ridge); λ = 0
 * reduces exactly to erm_minimizer.
 */
Eigen::VectorXd reg_erm_minimizer(const QuadraticLoss& loss,
                                  const Eigen::Ref<const Eigen::MatrixXd>& samples,
                                  double lambda,
                                  const Eigen::Ref<const Eigen::VectorXd>& anchor,
                                  RegularizerKind kind);

/// Same minimizer, given the sample mean directly.
Eigen::VectorXd reg_erm_from_mean(const QuadraticLoss& loss,
                                  const Eigen::Ref<const Eigen::VectorXd>& sample_mean,
                                  double lambda,
                                  const Eigen::Ref<const Eigen::VectorXd>& anchor,
                                  RegularizerKind kind);

}  // namespace perfsim

#endif  // PERFSIM_LOSS_HPP
