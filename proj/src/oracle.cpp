#include "perfsim/oracle.hpp"

#include <cmath>

namespace perfsim {

Eigen::VectorXd theta_ps_mean_shift(const LinearShiftModel& model,
                                    const QuadraticLoss& loss) {
    if (!model.is_mean_shift()) {
        throw WrongRegimeError(
            "closed-form fixed point requires a zero covariance map");
    }
    if (loss.dim() != model.dim()) {
        throw DimensionMismatchError("loss dimension does not match model");
    }
    const double mu_norm =
        Eigen::JacobiSVD<Eigen::MatrixXd>(model.mu_map()).singularValues()(0);
    if (mu_norm >= 1.0) {
        throw NonContractiveError(
            "contraction requires the mean map's operator norm below 1; "
            "retraining has no stable fixed point");
    }
    const Eigen::Index d = model.dim();
    const Eigen::MatrixXd lhs =
        Eigen::MatrixXd::Identity(d, d) - model.mu_map();
    return lhs.partialPivLu().solve(model.mu0());
}

double pr_analytic_scalar(const ScalarShiftModel& model, double theta) {
    const double s = model.sigma0 + model.sigma * theta;
    const double b = (1.0 - model.mu) * theta - model.mu0;
    return 0.5 * (s * s + b * b);
}

double pr_analytic(const LinearShiftModel& model, const QuadraticLoss& loss,
                   const Eigen::Ref<const Eigen::VectorXd>& theta) {
    if (loss.dim() != model.dim()) {
        throw DimensionMismatchError("loss dimension does not match model");
    }
    const Eigen::VectorXd r = theta - model.mean_at(theta);
    const Eigen::MatrixXd s = model.sigma_at(theta);
    double quad;
    double trace;
    if (loss.is_identity()) {
        quad = r.squaredNorm();
        trace = s.squaredNorm();
    } else {
        quad = r.dot(loss.a() * r);
        trace = (s.transpose() * loss.a() * s).trace();
    }
    return 0.5 * (quad + trace);
}

SolutionReport solve_scalar(const ScalarShiftModel& model) {
    if (model.mu >= 1.0) {
        throw NonContractiveError(
            "contraction requires mu < 1; retraining has no stable fixed point");
    }
    const double one_minus_mu = 1.0 - model.mu;
    SolutionReport rep;
    rep.theta_ps = model.mu0 / one_minus_mu;
    rep.theta_stat =
        (one_minus_mu * model.mu0 - model.sigma0 * model.sigma) /
        (one_minus_mu * one_minus_mu + model.sigma * model.sigma);
    rep.theta_po = rep.theta_stat;
    rep.pr_at_ps = pr_analytic_scalar(model, rep.theta_ps);
    rep.pr_at_po = pr_analytic_scalar(model, rep.theta_po);
    rep.gap = rep.pr_at_ps - rep.pr_at_po;
    rep.flags.contractive = model.contractive();
    const double denom = model.mu0 * one_minus_mu - model.sigma0 * model.sigma;
    if (denom != 0.0) {
        const double value =
            model.sigma * (model.mu0 * model.sigma + one_minus_mu * model.sigma0) /
            denom;
        rep.lambda_star = value;
        rep.flags.lambda_star_valid = denom > 0.0 && value > 0.0;
    }
    return rep;
}

McEstimate pr_monte_carlo(const LinearShiftModel& model,
                          const QuadraticLoss& loss,
                          const Eigen::Ref<const Eigen::VectorXd>& theta,
                          Eigen::Index n, RngStream& stream) {
    if (n < 2) {
        throw InvalidParameterError("Monte Carlo risk needs n >= 2");
    }
    if (loss.dim() != model.dim()) {
        throw DimensionMismatchError("loss dimension does not match model");
    }
    const Eigen::Index d = model.dim();
    const Eigen::MatrixXd s = model.sigma_at(theta);
    const Eigen::VectorXd m = model.mean_at(theta);
    Eigen::VectorXd w(d);
    Eigen::VectorXd z(d);
    double mean = 0.0;
    double m2 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        model.base().fill(stream, w);
        z.noalias() = s * w;
        z += m;
        const double v = loss.value(z, theta);
        const double delta = v - mean;
        mean += delta / static_cast<double>(i + 1);
        m2 += delta * (v - mean);
    }
    McEstimate out;
    out.estimate = mean;
    out.std_error = std::sqrt(m2 / static_cast<double>(n - 1) /
                              static_cast<double>(n));
    out.n = n;
    return out;
}

McGradient pr_grad_monte_carlo(const LinearShiftModel& model,
                               const QuadraticLoss& loss,
                               const Eigen::Ref<const Eigen::VectorXd>& theta,
                               Eigen::Index n, RngStream& stream, double step) {
    if (n < 2) {
        throw InvalidParameterError("Monte Carlo gradient needs n >= 2");
    }
    if (step <= 0.0) {
        throw InvalidParameterError("finite-difference step must be > 0");
    }
    if (loss.dim() != model.dim()) {
        throw DimensionMismatchError("loss dimension does not match model");
    }
    const Eigen::Index d = model.dim();
    std::vector<Eigen::VectorXd> theta_p(d), theta_m(d), mean_p(d), mean_m(d);
    std::vector<Eigen::MatrixXd> s_p, s_m;
    for (Eigen::Index i = 0; i < d; ++i) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
        e[i] = step;
        theta_p[i] = theta + e;
        theta_m[i] = theta - e;
        mean_p[i] = model.mean_at(theta_p[i]);
        mean_m[i] = model.mean_at(theta_m[i]);
    }
    const bool shared_cov = model.is_mean_shift();
    Eigen::MatrixXd s0;
    if (shared_cov) {
        s0 = model.sigma_at(theta);
    } else {
        s_p.resize(d);
        s_m.resize(d);
        for (Eigen::Index i = 0; i < d; ++i) {
            s_p[i] = model.sigma_at(theta_p[i]);
            s_m[i] = model.sigma_at(theta_m[i]);
        }
    }
    Eigen::VectorXd w(d), sw(d), zp(d), zm(d);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd m2 = Eigen::VectorXd::Zero(d);
    const double inv_2h = 1.0 / (2.0 * step);
    for (Eigen::Index j = 0; j < n; ++j) {
        model.base().fill(stream, w);
        if (shared_cov) {
            sw.noalias() = s0 * w;
        }
        for (Eigen::Index i = 0; i < d; ++i) {
            if (shared_cov) {
                zp = sw + mean_p[i];
                zm = sw + mean_m[i];
            } else {
                zp.noalias() = s_p[i] * w;
                zp += mean_p[i];
                zm.noalias() = s_m[i] * w;
                zm += mean_m[i];
            }
            const double fd =
                (loss.value(zp, theta_p[i]) - loss.value(zm, theta_m[i])) *
                inv_2h;
            const double delta = fd - mean[i];
            mean[i] += delta / static_cast<double>(j + 1);
            m2[i] += delta * (fd - mean[i]);
        }
    }
    McGradient out;
    out.grad = mean;
    out.std_error = (m2 / static_cast<double>(n - 1) /
                     static_cast<double>(n))
                        .cwiseSqrt();
    out.n = n;
    return out;
}

double fd_derivative(const std::function<double(double)>& f, double x,
                     double step) {
    if (step <= 0.0) {
        throw InvalidParameterError("finite-difference step must be > 0");
    }
    return (f(x + step) - f(x - step)) / (2.0 * step);
}

Eigen::VectorXd fd_gradient(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::Ref<const Eigen::VectorXd>& x, double step) {
    if (step <= 0.0) {
        throw InvalidParameterError("finite-difference step must be > 0");
    }
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd xp = x;
    Eigen::VectorXd xm = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        xp[i] = x[i] + step;
        xm[i] = x[i] - step;
        g[i] = (f(xp) - f(xm)) / (2.0 * step);
        xp[i] = x[i];
        xm[i] = x[i];
    }
    return g;
}

double theta_po_numeric_scalar(const ScalarShiftModel& model) {
    if (model.mu >= 1.0) {
        throw NonContractiveError(
            "contraction requires mu < 1; retraining has no stable fixed point");
    }
    const auto f = [&model](double t) { return pr_analytic_scalar(model, t); };
    const double width =
        10.0 * (std::abs(model.mu0) + model.sigma0 + 1.0) / (1.0 - model.mu);
    double lo = -width;
    double hi = width;
    // Golden-section search down to an interval of width 1e-10.
    const double inv_phi = 0.6180339887498949;
    double x1 = hi - inv_phi * (hi - lo);
    double x2 = lo + inv_phi * (hi - lo);
    double f1 = f(x1);
    double f2 = f(x2);
    while (hi - lo > 1e-10) {
        if (f1 <= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    double x = 0.5 * (lo + hi);
    // One parabolic fit with a wide spacing: exact for a quadratic objective
    // and immune to the flat-bottom roundoff that limits pure golden section.
    const double h = 1e-3 * (1.0 + std::abs(x));
    const double fp = f(x + h);
    const double fm = f(x - h);
    const double fc = f(x);
    const double curvature = fp - 2.0 * fc + fm;
    if (curvature > 0.0) {
        x -= h * (fp - fm) / (2.0 * curvature);
    }
    return x;
}

}  // namespace perfsim
