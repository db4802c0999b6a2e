#include "bel/vb.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace bel {

namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double softplus_inv(double y) {
    if (!(y > 0.0)) throw std::invalid_argument("softplus_inv: argument must be positive");
    return y > 30.0 ? y : std::log(std::expm1(y));
}

double sigmoid(double x) { return expit(x); }

}  // namespace

void VbConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("VbConfig: learning_rate must be positive");
    if (steps < 0) throw std::invalid_argument("VbConfig: steps must be non-negative");
    if (mc_samples < 1) throw std::invalid_argument("VbConfig: mc_samples must be >= 1");
}

double VbConfig::resolve_a_n(Eigen::Index n) const {
    if (a_n >= 0.0) return a_n;
    return 0.5 * std::log(static_cast<double>(n));
}

ELEvaluation adjusted_el(const ConstraintModel& model, const Dataset& data,
                         const Eigen::VectorXd& theta, double a_n) {
    if (a_n < 0.0) throw std::invalid_argument("adjusted_el: a_n must be non-negative");
    if (a_n == 0.0) return eval_el(model, data, theta);
    const Eigen::Index n = data.n();
    Eigen::MatrixXd h(n + 1, model.K);
    for (Eigen::Index i = 0; i < n; ++i) h.row(i) = model.h(data.row(i), theta).transpose();
    h.row(n) = -(a_n / static_cast<double>(n)) * h.topRows(n).colwise().sum();
    // Far from the data the augmented optimum hugs the feasibility boundary
    // and the damped Newton solve needs room; support is guaranteed here.
    return solve_lambda(h, kElTol, 500);
}

ELGradient adjusted_el_gradient(const ConstraintModel& model, const Dataset& data,
                                const Eigen::VectorXd& theta, const ELEvaluation& ev_adj,
                                double a_n) {
    if (a_n == 0.0) return el_gradient(model, data, theta, ev_adj);
    if (!ev_adj.in_support) throw std::invalid_argument("adjusted_el_gradient: out of support");
    const Eigen::Index n = data.n();
    if (ev_adj.h.rows() != n + 1)
        throw std::invalid_argument("adjusted_el_gradient: evaluation was not adjusted");
    std::vector<Eigen::MatrixXd> jac(n + 1);
    Eigen::MatrixXd jac_sum = Eigen::MatrixXd::Zero(model.K, model.p);
    for (Eigen::Index i = 0; i < n; ++i) {
        jac[i] = model.jac(data.row(i), theta);
        jac_sum += jac[i];
    }
    // The pseudo-observation depends on theta through the h sum.
    jac[n] = -(a_n / static_cast<double>(n)) * jac_sum;
    return gradient_from_parts(ev_adj.h, jac, ev_adj.lambda, ev_adj.weights);
}

double adjusted_log_post(const Target& t, const Eigen::VectorXd& theta, double a_n) {
    const double lp = log_pdf(t.prior, theta);
    if (t.prior_only) return lp;
    const ELEvaluation ev = adjusted_el(t.model, t.data, theta, a_n);
    if (!ev.in_support) return -std::numeric_limits<double>::infinity();
    return lp + ev.log_el;
}

Eigen::VectorXd adjusted_grad_log_post(const Target& t, const Eigen::VectorXd& theta, double a_n) {
    Eigen::VectorXd g = t.prior.r - t.prior.Q * theta;
    if (t.prior_only) return g;
    const ELEvaluation ev = adjusted_el(t.model, t.data, theta, a_n);
    if (!ev.in_support) throw std::runtime_error("adjusted_grad_log_post: out of support");
    g += adjusted_el_gradient(t.model, t.data, theta, ev, a_n).grad_log_el;
    return g;
}

ElboSample elbo_grad_pathwise(const Target& t, const VbParams& params, double a_n,
                              std::mt19937_64& rng) {
    if (!t.prior_only && !t.model.smooth)
        throw std::runtime_error("elbo_grad_pathwise: non-smooth model has no pathwise gradient");
    const Eigen::Index p = params.dim();
    std::normal_distribution<double> nd;

    ElboSample out;
    out.grad_mu = Eigen::VectorXd::Zero(p);
    out.grad_scale = Eigen::MatrixXd::Zero(p, p);

    Eigen::VectorXd eps(p);
    for (Eigen::Index j = 0; j < p; ++j) eps[j] = nd(rng);
    const Eigen::VectorXd theta = params.mu + params.scale_tril * eps;

    double entropy = 0.5 * static_cast<double>(p) * (1.0 + std::log(2.0 * EIGEN_PI));
    for (Eigen::Index j = 0; j < p; ++j) entropy += std::log(params.scale_tril(j, j));

    const double lp = adjusted_log_post(t, theta, a_n);
    if (!std::isfinite(lp)) {
        out.elbo = -std::numeric_limits<double>::infinity();
        return out;
    }
    Eigen::VectorXd g = t.prior.r - t.prior.Q * theta;
    if (!t.prior_only) {
        const ELEvaluation ev = adjusted_el(t.model, t.data, theta, a_n);
        g += adjusted_el_gradient(t.model, t.data, theta, ev, a_n).grad_log_el;
    }

    out.elbo = lp + entropy;
    out.grad_mu = g;
    out.grad_scale = (g * eps.transpose()).triangularView<Eigen::Lower>();
    for (Eigen::Index j = 0; j < p; ++j) out.grad_scale(j, j) += 1.0 / params.scale_tril(j, j);
    return out;
}

VbOptimizer::VbOptimizer(const Target& t, VbConfig cfg, const LaplaceResult& init)
    : target_(t), cfg_(std::move(cfg)), rng_(cfg_.seed) {
    cfg_.validate();
    if (!init.converged || !init.approx.proper())
        throw std::invalid_argument("VbOptimizer: Laplace initialization must be converged");
    a_n_ = cfg_.resolve_a_n(t.prior_only ? 1 : t.data.n());
    const MomentGaussian m = to_moments(init.approx);
    const Eigen::Index p = m.dim();
    mu_ = m.mu;
    const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(m.sigma).matrixL();
    offdiag_ = chol;
    offdiag_.diagonal().setZero();
    raw_diag_.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) raw_diag_[j] = softplus_inv(chol(j, j));

    const Eigen::Index n_params = p + p + p * (p - 1) / 2;
    adam_m_ = Eigen::VectorXd::Zero(n_params);
    adam_v_ = Eigen::VectorXd::Zero(n_params);
}

VbParams VbOptimizer::params() const {
    VbParams out;
    out.mu = mu_;
    out.scale_tril = offdiag_;
    for (Eigen::Index j = 0; j < mu_.size(); ++j) out.scale_tril(j, j) = softplus(raw_diag_[j]);
    return out;
}

NaturalGaussian VbOptimizer::approx() const {
    const VbParams pr = params();
    return from_moments(MomentGaussian(pr.mu, pr.scale_tril * pr.scale_tril.transpose()));
}

void VbOptimizer::step(int count) {
    const Eigen::Index p = mu_.size();
    for (int k = 0; k < count && step_ < cfg_.steps; ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        const VbParams pr = params();

        double elbo = 0.0;
        Eigen::VectorXd gm = Eigen::VectorXd::Zero(p);
        Eigen::MatrixXd gs = Eigen::MatrixXd::Zero(p, p);
        for (int s = 0; s < cfg_.mc_samples; ++s) {
            const ElboSample es = elbo_grad_pathwise(target_, pr, a_n_, rng_);
            if (!std::isfinite(es.elbo)) {
                elbo = -std::numeric_limits<double>::infinity();
                break;
            }
            elbo += es.elbo;
            gm += es.grad_mu;
            gs += es.grad_scale;
        }

        ++step_;
        if (std::isfinite(elbo)) {
            elbo /= cfg_.mc_samples;
            gm /= cfg_.mc_samples;
            gs /= cfg_.mc_samples;

            // Flatten (mu, raw diagonal, strict lower triangle) and chain the
            // softplus through the diagonal gradient.
            Eigen::VectorXd grad(adam_m_.size());
            grad.head(p) = gm;
            for (Eigen::Index j = 0; j < p; ++j)
                grad[p + j] = gs(j, j) * sigmoid(raw_diag_[j]);
            Eigen::Index idx = 2 * p;
            for (Eigen::Index c = 0; c < p; ++c)
                for (Eigen::Index r = c + 1; r < p; ++r) grad[idx++] = gs(r, c);

            adam_m_ = cfg_.adam_beta1 * adam_m_ + (1.0 - cfg_.adam_beta1) * grad;
            adam_v_ = cfg_.adam_beta2 * adam_v_.array().matrix() +
                      (1.0 - cfg_.adam_beta2) * grad.cwiseAbs2();
            const double bc1 = 1.0 - std::pow(cfg_.adam_beta1, step_);
            const double bc2 = 1.0 - std::pow(cfg_.adam_beta2, step_);
            const Eigen::VectorXd update =
                (cfg_.learning_rate / bc1) * adam_m_.array().matrix().cwiseQuotient(
                    ((adam_v_ / bc2).cwiseSqrt().array() + cfg_.adam_eps).matrix());

            mu_ += update.head(p);
            raw_diag_ += update.segment(p, p);
            idx = 2 * p;
            for (Eigen::Index c = 0; c < p; ++c)
                for (Eigen::Index r = c + 1; r < p; ++r) offdiag_(r, c) += update[idx++];
        }
        seconds_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        trace_.push_back({step_, elbo, seconds_});
    }
}

std::pair<NaturalGaussian, VbTrace> vb_run(const Target& t, const VbConfig& cfg,
                                           const LaplaceResult& init) {
    VbOptimizer opt(t, cfg, init);
    opt.step(cfg.steps);
    return {opt.approx(), opt.trace()};
}

std::pair<NaturalGaussian, VbTrace> vb_run(const Target& t, const VbConfig& cfg) {
    return vb_run(t, cfg, map_newton(t));
}

}  // namespace bel
