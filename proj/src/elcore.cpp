#include "bel/elcore.hpp"

#include <cmath>
#include <stdexcept>

namespace bel {

namespace {

constexpr double kBoundaryEps = 1e-10;

double dual_value(const Eigen::VectorXd& den) {
    return den.array().log().sum();
}

}  // namespace

ELEvaluation solve_lambda(const Eigen::MatrixXd& h, double tol, int max_iter) {
    const Eigen::Index n = h.rows();
    const Eigen::Index K = h.cols();
    if (n < 1 || K < 1) throw std::invalid_argument("solve_lambda: empty constraint matrix");
    if (!(tol > 0.0)) throw std::invalid_argument("solve_lambda: tol must be positive");
    if (!h.allFinite()) throw std::invalid_argument("solve_lambda: non-finite constraint matrix");

    ELEvaluation ev;
    ev.h = h;
    ev.lambda = Eigen::VectorXd::Zero(K);

    if (K == 1) {
        const double lo = h.col(0).minCoeff();
        const double hi = h.col(0).maxCoeff();
        const bool mixed_signs = lo < 0.0 && hi > 0.0;
        const bool degenerate_zero = lo == 0.0 && hi == 0.0;
        if (!mixed_signs && !degenerate_zero) return ev;  // 0 outside the convex hull
    }

    Eigen::VectorXd lambda = Eigen::VectorXd::Zero(K);
    Eigen::VectorXd den = Eigen::VectorXd::Ones(n);  // 1 + lambda'h_i
    double value = 0.0;
    const double grad_tol = tol * static_cast<double>(n);
    bool converged = false;

    Eigen::VectorXd grad(K);
    Eigen::MatrixXd hess(K, K);
    int iter = 0;
    for (; iter < max_iter; ++iter) {
        grad = h.transpose() * den.cwiseInverse();
        // The |lambda| scaling rejects the spurious near-zero gradients that
        // arise when 0 lies outside the hull and lambda runs off along a
        // recession direction (there D is unbounded but its gradient decays).
        if (grad.norm() * std::max(1.0, lambda.norm()) <= grad_tol) {
            converged = true;
            break;
        }

        const Eigen::VectorXd inv2 = den.cwiseInverse().cwiseAbs2();
        hess.setZero();
        for (Eigen::Index i = 0; i < n; ++i) hess.selfadjointView<Eigen::Lower>().rankUpdate(h.row(i).transpose(), inv2[i]);
        hess = hess.selfadjointView<Eigen::Lower>();

        Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
        Eigen::VectorXd dir;
        if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
            dir = ldlt.solve(grad);
        } else {
            const double ridge = 1e-12 * (1.0 + hess.trace() / static_cast<double>(K));
            dir = (hess + ridge * Eigen::MatrixXd::Identity(K, K)).ldlt().solve(grad);
        }
        if (!dir.allFinite()) break;

        // Longest step keeping every factor above the boundary.
        const Eigen::VectorXd hd = h * dir;
        double alpha_max = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < n; ++i)
            if (hd[i] < 0.0) alpha_max = std::min(alpha_max, (den[i] - kBoundaryEps) / -hd[i]);
        double alpha = std::min(1.0, 0.99 * alpha_max);
        if (!(alpha > 0.0)) break;

        const double slope = grad.dot(dir);
        bool stepped = false;
        for (int bt = 0; bt < 60; ++bt) {
            Eigen::VectorXd den_new = den + alpha * hd;
            if (den_new.minCoeff() >= kBoundaryEps) {
                const double value_new = dual_value(den_new);
                if (value_new >= value + 1e-4 * alpha * slope) {
                    lambda += alpha * dir;
                    den.swap(den_new);
                    value = value_new;
                    stepped = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if (!stepped) break;  // line search stalled at the feasibility boundary
    }

    if (converged) {
        // Polish: quadratic convergence makes one or two extra guarded Newton
        // steps drive the residual to machine scale, which downstream
        // derivative consumers (dlambda/dtheta versus finite differences)
        // rely on.
        for (int polish = 0; polish < 2; ++polish) {
            grad = h.transpose() * den.cwiseInverse();
            if (grad.norm() <= 1e-13 * static_cast<double>(n)) break;
            const Eigen::VectorXd inv2 = den.cwiseInverse().cwiseAbs2();
            hess.setZero();
            for (Eigen::Index i = 0; i < n; ++i)
                hess.selfadjointView<Eigen::Lower>().rankUpdate(h.row(i).transpose(), inv2[i]);
            hess = hess.selfadjointView<Eigen::Lower>();
            Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
            if (ldlt.info() != Eigen::Success) break;
            const Eigen::VectorXd dir = ldlt.solve(grad);
            if (!dir.allFinite()) break;
            const Eigen::VectorXd hd = h * dir;
            double alpha_max = 1.0;
            for (Eigen::Index i = 0; i < n; ++i)
                if (hd[i] < 0.0) alpha_max = std::min(alpha_max, 0.99 * (den[i] - kBoundaryEps) / -hd[i]);
            if (!(alpha_max > 0.0)) break;
            const Eigen::VectorXd den_new = den + alpha_max * hd;
            const double value_new = dual_value(den_new);
            if (den_new.minCoeff() < kBoundaryEps || value_new < value - 1e-12 * (1.0 + std::abs(value)))
                break;
            lambda += alpha_max * dir;
            den = den_new;
            value = value_new;
            ++iter;
        }
    }

    ev.iterations = iter;
    ev.lambda = lambda;
    if (!converged) return ev;  // out of support: boundary-active non-convergence

    ev.in_support = true;
    ev.weights = (static_cast<double>(n) * den).cwiseInverse();
    ev.log_el = ev.weights.array().log().sum();
    return ev;
}

ELEvaluation eval_el(const ConstraintModel& model, const Dataset& data, const Eigen::VectorXd& theta,
                     double tol, int max_iter) {
    if (theta.size() != model.p) throw std::invalid_argument("eval_el: theta has wrong dimension");
    const Eigen::Index n = data.n();
    Eigen::MatrixXd h(n, model.K);
    for (Eigen::Index i = 0; i < n; ++i) h.row(i) = model.h(data.row(i), theta).transpose();
    return solve_lambda(h, tol, max_iter);
}

ELGradient gradient_from_parts(const Eigen::MatrixXd& h, const std::vector<Eigen::MatrixXd>& jac,
                               const Eigen::VectorXd& lambda, const Eigen::VectorXd& weights) {
    const Eigen::Index n = h.rows();
    const Eigen::Index K = h.cols();
    if (static_cast<Eigen::Index>(jac.size()) != n)
        throw std::invalid_argument("gradient_from_parts: one Jacobian per observation required");
    if (weights.size() != n) throw std::invalid_argument("gradient_from_parts: weight length mismatch");
    const Eigen::Index p = jac.empty() ? 0 : jac.front().cols();

    // Left-hand side sum w_i^2 h_i h_i' and right-hand side of the
    // implicit-function system for dlambda/dtheta.
    Eigen::MatrixXd lhs = Eigen::MatrixXd::Zero(K, K);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(K, p);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double w = weights[i];
        lhs.selfadjointView<Eigen::Lower>().rankUpdate(h.row(i).transpose(), w * w);
        rhs.noalias() += w * (inv_n * jac[i] - w * h.row(i).transpose() * (lambda.transpose() * jac[i]));
    }
    lhs = lhs.selfadjointView<Eigen::Lower>();

    Eigen::FullPivLU<Eigen::MatrixXd> lu(lhs);
    if (lu.rank() < K) throw std::runtime_error("el_gradient: degenerate constraint span");

    ELGradient g;
    g.dlambda_dtheta = lu.solve(rhs);
    g.grad_log_w.resize(n, p);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double scale = static_cast<double>(n) * weights[i];  // 1 / (1 + lambda'h_i)
        g.grad_log_w.row(i) =
            -scale * (h.row(i) * g.dlambda_dtheta + lambda.transpose() * jac[i]);
    }
    g.grad_log_el = g.grad_log_w.colwise().sum().transpose();
    return g;
}

ELGradient el_gradient(const ConstraintModel& model, const Dataset& data, const Eigen::VectorXd& theta,
                       const ELEvaluation& ev) {
    if (!ev.in_support) throw std::invalid_argument("el_gradient: evaluation is out of support");
    if (!model.smooth) throw std::runtime_error("el_gradient: non-differentiable model");
    const Eigen::Index n = data.n();
    std::vector<Eigen::MatrixXd> jac(n);
    for (Eigen::Index i = 0; i < n; ++i) jac[i] = model.jac(data.row(i), theta);
    return gradient_from_parts(ev.h, jac, ev.lambda, ev.weights);
}

Eigen::MatrixXd el_hessian_fd(const ConstraintModel& model, const Dataset& data,
                              const Eigen::VectorXd& theta, double step) {
    const Eigen::Index p = theta.size();
    const double base = step > 0.0 ? step : std::cbrt(std::numeric_limits<double>::epsilon());
    Eigen::MatrixXd hess(p, p);
    Eigen::VectorXd probe = theta;
    for (Eigen::Index j = 0; j < p; ++j) {
        const double s = base * (1.0 + std::abs(theta[j]));

        probe[j] = theta[j] + s;
        ELEvaluation ev_plus = eval_el(model, data, probe);
        if (!ev_plus.in_support) throw std::runtime_error("el_hessian_fd: support boundary too close");
        const Eigen::VectorXd g_plus = el_gradient(model, data, probe, ev_plus).grad_log_el;

        probe[j] = theta[j] - s;
        ELEvaluation ev_minus = eval_el(model, data, probe);
        if (!ev_minus.in_support) throw std::runtime_error("el_hessian_fd: support boundary too close");
        const Eigen::VectorXd g_minus = el_gradient(model, data, probe, ev_minus).grad_log_el;

        probe[j] = theta[j];
        hess.col(j) = (g_plus - g_minus) / (2.0 * s);
    }
    return 0.5 * (hess + hess.transpose());
}

}  // namespace bel
