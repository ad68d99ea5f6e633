#ifndef PERFSIM_ORACLE_HPP
#define PERFSIM_ORACLE_HPP

#include <functional>
#include <optional>

#include <Eigen/Dense>

#include "perfsim/loss.hpp"
#include "perfsim/rng.hpp"
#include "perfsim/shift_model.hpp"

namespace perfsim {

struct RegimeFlags {
    bool contractive = false;
    bool lambda_star_valid = false;
};

/**
 * Closed-form solution of a scalar shift instance: the retraining fixed point
 * theta_ps, the risk minimizer theta_po (= the stationary point theta_stat),
 * risk values at both, the risk gap, and the ridge weight lambda_star that
 * moves the regularized fixed point onto theta_po.
 *
 * lambda_star is absent when its formula's denominator mu0(1-mu) - sigma0*sigma
 * is exactly zero; otherwise the algebraic value is reported and
 * lambda_star_valid says whether it is usable (positive, positive denominator).
 */
struct SolutionReport {
    double theta_ps = 0.0;
    double theta_stat = 0.0;
    double theta_po = 0.0;
    double pr_at_ps = 0.0;
    double pr_at_po = 0.0;
    double gap = 0.0;
    std::optional<double> lambda_star;
    RegimeFlags flags;
};

/// Monte Carlo estimate with its standard error.
struct McEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
    Eigen::Index n = 0;
};

/// Per-coordinate Monte Carlo gradient estimate with standard errors.
struct McGradient {
    Eigen::VectorXd grad;
    Eigen::VectorXd std_error;
    Eigen::Index n = 0;
};

/**
 * Fixed point of exact retraining for a mean-shift model: (I - Mu)^{-1} mu0.
 * For these models the fixed point, the risk minimizer, and the stationary
 * point all coincide. Requires a zero covariance map and operator norm of Mu
 * below one.
 */
Eigen::VectorXd theta_ps_mean_shift(const LinearShiftModel& model,
                                    const QuadraticLoss& loss);

/// Deployed risk of a scalar instance: ((σ0+σθ)² + ((1-μ)θ-μ0)²)/2.
double pr_analytic_scalar(const ScalarShiftModel& model, double theta);

/**
 * Deployed risk of any linear shift model under quadratic loss, from the
 * first two moments of D(theta):
 * ½ (θ-m)ᵀ A (θ-m) + ½ tr(Sᵀ A S), m = mean, S = covariance factor.
 */
double pr_analytic(const LinearShiftModel& model, const QuadraticLoss& loss,
                   const Eigen::Ref<const Eigen::VectorXd>& theta);

/// All closed forms for a scalar instance. Requires mu < 1.
SolutionReport solve_scalar(const ScalarShiftModel& model);

/// Sample-mean estimate of the deployed risk over n draws.
McEstimate pr_monte_carlo(const LinearShiftModel& model,
                          const QuadraticLoss& loss,
                          const Eigen::Ref<const Eigen::VectorXd>& theta,
                          Eigen::Index n, RngStream& stream);

/**
 * Monte Carlo estimate of ∇PR(theta) by per-draw central differences with
 * common random numbers: each base-noise draw is reused at theta ± step·e_i,
 * so the sampling noise of the two risk evaluations cancels.
 */
McGradient pr_grad_monte_carlo(const LinearShiftModel& model,
                               const QuadraticLoss& loss,
                               const Eigen::Ref<const Eigen::VectorXd>& theta,
                               Eigen::Index n, RngStream& stream,
                               double step = 1e-6);

/// Central finite difference of a scalar function.
double fd_derivative(const std::function<double(double)>& f, double x,
                     double step = 1e-6);

/// Central finite-difference gradient of a scalar field.
Eigen::VectorXd fd_gradient(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::Ref<const Eigen::VectorXd>& x, double step = 1e-6);

/**
 * Risk minimizer of a scalar instance found by golden-section search over a
 * bracket guaranteed to contain it, refined by one exact parabolic fit.
 * Independent cross-check of solve_scalar().theta_po.
 */
double theta_po_numeric_scalar(const ScalarShiftModel& model);

}  // namespace perfsim

#endif  // PERFSIM_ORACLE_HPP
