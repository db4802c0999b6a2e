#include "bel/posterior.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace bel {

Target make_target(ConstraintModel model, Dataset data, double prior_sd) {
    Target t;
    t.prior = NaturalGaussian::isotropic(model.p, prior_sd * prior_sd);
    t.model = std::move(model);
    t.data = std::move(data);
    return t;
}

double log_post(const Target& t, const Eigen::VectorXd& theta) {
    const double lp = log_pdf(t.prior, theta);
    if (t.prior_only) return lp;
    const ELEvaluation ev = eval_el(t.model, t.data, theta);
    if (!ev.in_support) return -std::numeric_limits<double>::infinity();
    return lp + ev.log_el;
}

Eigen::VectorXd grad_log_post(const Target& t, const Eigen::VectorXd& theta) {
    Eigen::VectorXd g = t.prior.r - t.prior.Q * theta;
    if (t.prior_only) return g;
    const ELEvaluation ev = eval_el(t.model, t.data, theta);
    if (!ev.in_support) throw std::runtime_error("grad_log_post: theta out of support");
    g += el_gradient(t.model, t.data, theta, ev).grad_log_el;
    return g;
}

Eigen::MatrixXd hess_log_post(const Target& t, const Eigen::VectorXd& theta) {
    Eigen::MatrixXd h = -t.prior.Q;
    if (t.prior_only) return h;
    h += el_hessian_fd(t.model, t.data, theta);
    return h;
}

Eigen::VectorXd estimating_equation_start(const ConstraintModel& model, const Dataset& data) {
    if (!model.smooth)
        throw std::runtime_error("estimating_equation_start: model Jacobian unavailable");
    const Eigen::Index n = data.n();
    const double inv_n = 1.0 / static_cast<double>(n);
    auto mean_h = [&](const Eigen::VectorXd& th) {
        Eigen::VectorXd m = Eigen::VectorXd::Zero(model.K);
        for (Eigen::Index i = 0; i < n; ++i) m += model.h(data.row(i), th);
        return (inv_n * m).eval();
    };

    Eigen::VectorXd theta = Eigen::VectorXd::Zero(model.p);
    Eigen::VectorXd m = mean_h(theta);
    for (int iter = 0; iter < 100; ++iter) {
        if (m.norm() <= 1e-12) break;
        Eigen::MatrixXd j = Eigen::MatrixXd::Zero(model.K, model.p);
        for (Eigen::Index i = 0; i < n; ++i) j += model.jac(data.row(i), theta);
        j *= inv_n;
        Eigen::MatrixXd jtj = j.transpose() * j;
        jtj.diagonal().array() += 1e-10 * (1.0 + jtj.trace());
        const Eigen::VectorXd step = jtj.ldlt().solve(j.transpose() * m);
        if (!step.allFinite()) break;

        // Backtrack on the residual norm; saturating score functions produce
        // near-singular Jacobians whose raw Gauss-Newton steps overshoot.
        double alpha = 1.0;
        bool moved = false;
        for (int bt = 0; bt < 40; ++bt) {
            const Eigen::VectorXd cand = theta - alpha * step;
            const Eigen::VectorXd m_cand = mean_h(cand);
            if (m_cand.norm() < m.norm()) {
                theta = cand;
                m = m_cand;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!moved || step.norm() * alpha <= 1e-12 * (1.0 + theta.norm())) break;
    }
    return theta;
}

Eigen::MatrixXd repair_positive_definite(const Eigen::MatrixXd& m) {
    Eigen::MatrixXd s = 0.5 * (m + m.transpose());
    if (s.llt().info() == Eigen::Success) return s;
    double tau = 1e-6 * (1.0 + s.diagonal().cwiseAbs().maxCoeff());
    for (int k = 0; k < 80; ++k) {
        Eigen::MatrixXd cand = s + tau * Eigen::MatrixXd::Identity(s.rows(), s.cols());
        if (cand.llt().info() == Eigen::Success) return cand;
        tau *= 2.0;
    }
    throw std::runtime_error("repair_positive_definite: ridge escalation failed");
}

LaplaceResult map_newton(const Target& t, const Eigen::VectorXd& theta0, double tol, int max_iter) {
    const auto t_start = std::chrono::steady_clock::now();
    Eigen::VectorXd theta = theta0;
    double value = log_post(t, theta);
    if (!std::isfinite(value)) throw std::runtime_error("map_newton: start out of support");

    Eigen::VectorXd grad = grad_log_post(t, theta);
    const double scale = tol * (1.0 + grad.norm());
    bool converged = grad.norm() <= scale;
    int iter = 0;
    for (; iter < max_iter && !converged; ++iter) {
        const Eigen::MatrixXd neg_hess = repair_positive_definite(-hess_log_post(t, theta));
        const Eigen::VectorXd dir = neg_hess.llt().solve(grad);
        const double slope = grad.dot(dir);

        // Armijo with a roundoff allowance: near the mode the predicted
        // increase sits below the evaluation noise of the log posterior.
        const double noise = 1e-11 * (1.0 + std::abs(value));
        double alpha = 1.0;
        bool stepped = false;
        for (int bt = 0; bt < 60; ++bt) {
            const Eigen::VectorXd cand = theta + alpha * dir;
            const double v = log_post(t, cand);
            // Reject any step that leaves the support, then require ascent.
            if (std::isfinite(v) && v >= value + 1e-4 * alpha * slope - noise) {
                theta = cand;
                value = v;
                stepped = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!stepped) break;
        grad = grad_log_post(t, theta);
        if (grad.norm() <= scale) {
            converged = true;
            ++iter;
            break;
        }
    }

    LaplaceResult res;
    res.mode = theta;
    res.newton_iters = iter;
    res.converged = converged;
    const Eigen::MatrixXd q = repair_positive_definite(-hess_log_post(t, theta));
    res.approx = NaturalGaussian(q * theta, q);
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return res;
}

LaplaceResult map_newton(const Target& t, double tol, int max_iter) {
    Eigen::VectorXd start;
    if (t.prior_only) {
        start = to_moments(t.prior).mu;
    } else {
        start = estimating_equation_start(t.model, t.data);
        if (!std::isfinite(log_post(t, start))) {
            // The estimating-equation solution is in support with probability
            // approaching one; shrink toward zero if a finite sample misses.
            for (int k = 0; k < 60 && !std::isfinite(log_post(t, start)); ++k) start *= 0.5;
            if (!std::isfinite(log_post(t, start))) start.setZero();
        }
    }
    return map_newton(t, start, tol, max_iter);
}

}  // namespace bel
