#include "bel/ep.hpp"

#include <chrono>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "bel/elcore.hpp"
#include "bel/rng.hpp"

namespace bel::ep {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

// Combined cavity-plus-site value and gradient; nullopt out of support.
std::optional<std::pair<double, Eigen::VectorXd>> tilted_value_grad(const SiteTarget& site,
                                                                    const NaturalGaussian& cav,
                                                                    const Eigen::VectorXd& x) {
    if (site.quadratic) {
        const auto& q = *site.quadratic;
        const double v = log_density_unnormalized(cav, x) + log_density_unnormalized(q, x);
        Eigen::VectorXd g = (cav.r - cav.Q * x) + (q.r - q.Q * x);
        return std::make_pair(v, std::move(g));
    }
    auto sg = site.value_grad(x);
    if (!sg) return std::nullopt;
    const double v = log_density_unnormalized(cav, x) + sg->first;
    Eigen::VectorXd g = (cav.r - cav.Q * x) + sg->second;
    return std::make_pair(v, std::move(g));
}

// Finite-difference curvature of the site factor alone (the cavity part is
// analytic).  Returns false when a probe leaves the support.
bool site_hessian_fd(const SiteTarget& site, const Eigen::VectorXd& x, Eigen::MatrixXd& out) {
    const Eigen::Index p = x.size();
    const double base = std::cbrt(std::numeric_limits<double>::epsilon());
    out.resize(p, p);
    Eigen::VectorXd probe = x;
    for (Eigen::Index j = 0; j < p; ++j) {
        double s = base * (1.0 + std::abs(x[j]));
        bool ok = false;
        for (int attempt = 0; attempt < 3 && !ok; ++attempt, s *= 0.1) {
            probe[j] = x[j] + s;
            auto gp = site.value_grad(probe);
            probe[j] = x[j] - s;
            auto gm = site.value_grad(probe);
            probe[j] = x[j];
            if (gp && gm) {
                out.col(j) = (gp->second - gm->second) / (2.0 * s);
                ok = true;
            }
        }
        if (!ok) return false;
    }
    out = (0.5 * (out + out.transpose())).eval();
    return true;
}

}  // namespace

void EpConfig::validate(Eigen::Index n, Eigen::Index p) const {
    if (num_sites < 2 || num_sites > n + 1)
        throw std::invalid_argument("EpConfig: num_sites must lie in [2, n+1]");
    if (!(damping > 0.0 && damping <= 1.0))
        throw std::invalid_argument("EpConfig: damping must lie in (0, 1]");
    if (warmup_cycles < 0) throw std::invalid_argument("EpConfig: warmup_cycles must be >= 0");
    if (is_samples < 2 * p + 2)
        throw std::invalid_argument("EpConfig: is_samples must be at least 2p + 2");
    if (max_cycles < 1) throw std::invalid_argument("EpConfig: max_cycles must be >= 1");
    if (!(convergence_tol > 0.0))
        throw std::invalid_argument("EpConfig: convergence_tol must be positive");
}

double eta_norm(const NaturalGaussian& g) {
    return std::sqrt(g.r.squaredNorm() + g.Q.squaredNorm());
}

EpState init_from_laplace(const LaplaceResult& lap, int num_sites) {
    if (!lap.converged || !lap.approx.proper())
        throw std::invalid_argument("init_from_laplace: improper or non-converged Laplace input");
    if (num_sites < 1) throw std::invalid_argument("init_from_laplace: num_sites must be >= 1");
    EpState st;
    const double share = 1.0 / static_cast<double>(num_sites);
    NaturalGaussian site(share * lap.approx.r, share * lap.approx.Q);
    st.sites.assign(static_cast<std::size_t>(num_sites), site);
    Eigen::VectorXd r = Eigen::VectorXd::Zero(lap.approx.dim());
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(lap.approx.dim(), lap.approx.dim());
    for (const auto& s : st.sites) {
        r += s.r;
        q += s.Q;
    }
    st.global = NaturalGaussian(r, q);
    st.last_ess.assign(static_cast<std::size_t>(num_sites), kNaN);
    return st;
}

NaturalGaussian cavity(const EpState& state, int i) {
    return quotient(state.global, state.sites.at(static_cast<std::size_t>(i)));
}

TiltedLaplace tilted_laplace(const SiteTarget& site, const NaturalGaussian& cav) {
    TiltedLaplace out;
    if (site.quadratic) {
        const NaturalGaussian prod = product(cav, *site.quadratic);
        if (!prod.proper()) return out;
        out.moments = to_moments(prod);
        out.ok = true;
        return out;
    }
    if (!site.value_grad) return out;

    Eigen::LLT<Eigen::MatrixXd> cav_llt(cav.Q);
    if (cav_llt.info() != Eigen::Success) return out;  // needs a proper cavity
    Eigen::VectorXd x = cav_llt.solve(cav.r);

    auto vg = tilted_value_grad(site, cav, x);
    if (!vg) return out;  // cavity mean out of support
    double value = vg->first;
    Eigen::VectorXd grad = vg->second;
    const double tol = 1e-9 * (1.0 + grad.norm());

    Eigen::MatrixXd site_hess;
    int iter = 0;
    for (; iter < 60 && grad.norm() > tol; ++iter) {
        if (!site_hessian_fd(site, x, site_hess)) return out;
        const Eigen::MatrixXd neg_hess = repair_positive_definite(cav.Q - site_hess);
        const Eigen::VectorXd dir = neg_hess.llt().solve(grad);
        const double slope = grad.dot(dir);
        const double noise = 1e-11 * (1.0 + std::abs(value));

        double alpha = 1.0;
        bool stepped = false;
        for (int bt = 0; bt < 50; ++bt) {
            auto cand = tilted_value_grad(site, cav, x + alpha * dir);
            if (cand && cand->first >= value + 1e-4 * alpha * slope - noise) {
                x += alpha * dir;
                value = cand->first;
                grad = cand->second;
                stepped = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!stepped) break;
    }
    out.iterations = iter;
    if (grad.norm() > std::max(tol, 1e-6 * (1.0 + grad.norm()))) return out;

    if (!site_hessian_fd(site, x, site_hess)) return out;
    const Eigen::MatrixXd q_tilted = cav.Q - site_hess;
    Eigen::LLT<Eigen::MatrixXd> llt(q_tilted);
    if (llt.info() != Eigen::Success) return out;  // indefinite curvature at the mode
    const Eigen::MatrixXd sigma = llt.solve(Eigen::MatrixXd::Identity(x.size(), x.size()));
    out.moments = MomentGaussian(x, sigma);
    out.ok = true;
    return out;
}

TiltedIs tilted_is(const SiteTarget& site, const NaturalGaussian& cav,
                   const NaturalGaussian& proposal, int n_samples, std::mt19937_64& rng) {
    if (n_samples < 2) throw std::invalid_argument("tilted_is: need at least two samples");
    const Eigen::Index p = cav.dim();
    const Eigen::MatrixXd draws = sample(proposal, n_samples, rng);

    Eigen::VectorXd log_w(n_samples);
    for (int l = 0; l < n_samples; ++l) {
        const Eigen::VectorXd theta = draws.row(l).transpose();
        const double site_val = site.quadratic ? log_density_unnormalized(*site.quadratic, theta)
                                               : site.log_f(theta);
        if (!std::isfinite(site_val)) {
            log_w[l] = -kInf;
            continue;
        }
        log_w[l] = log_density_unnormalized(cav, theta) + site_val -
                   log_density_unnormalized(proposal, theta);
    }

    const double m = log_w.maxCoeff();
    if (!std::isfinite(m)) throw std::runtime_error("tilted_is: proposal disjoint from tilted mass");
    const Eigen::VectorXd xi = (log_w.array() - m).exp();
    const double sum_xi = xi.sum();

    TiltedIs out;
    out.ess = sum_xi * sum_xi / xi.squaredNorm();

    const Eigen::VectorXd mu = draws.transpose() * xi / sum_xi;
    Eigen::MatrixXd scatter(n_samples, p);
    for (int l = 0; l < n_samples; ++l)
        scatter.row(l) = std::sqrt(xi[l]) * (draws.row(l) - mu.transpose());
    const Eigen::MatrixXd r_fact = Eigen::HouseholderQR<Eigen::MatrixXd>(scatter)
                                       .matrixQR()
                                       .topRows(p)
                                       .triangularView<Eigen::Upper>();
    out.moments = MomentGaussian(mu, (r_fact.transpose() * r_fact) / sum_xi);
    return out;
}

Runner::Runner(std::vector<SiteTarget> sites, EpState init, EpConfig cfg)
    : targets_(std::move(sites)), state_(std::move(init)), cfg_(cfg) {
    if (targets_.size() != state_.sites.size())
        throw std::invalid_argument("Runner: one target per site required");
    if (!state_.global.proper()) throw std::invalid_argument("Runner: initial global must be proper");
    state_.last_ess.assign(targets_.size(), kNaN);
}

bool Runner::done() const {
    return converged_ || stalled_ || state_.cycle >= cfg_.max_cycles ||
           attempts_ >= cfg_.max_cycles + 20;
}

void Runner::cycle() {
    if (done()) return;
    const auto t0 = std::chrono::steady_clock::now();
    const int attempt = attempts_++;
    const std::size_t n_sites = targets_.size();
    const NaturalGaussian global_snapshot = state_.global;

    // Site phase: independent given the snapshot; deltas are the undamped
    // natural-parameter updates tilde(eta)_i - eta^t.
    std::vector<NaturalGaussian> delta(n_sites);
    std::vector<bool> active(n_sites, false);
    std::vector<double> ess(n_sites, kNaN);
    int failures = 0;
    for (std::size_t i = 0; i < n_sites; ++i) {
        const SiteTarget& site = targets_[i];
        const NaturalGaussian cav = quotient(global_snapshot, state_.sites[i]);
        const bool cav_proper = cav.proper();
        std::mt19937_64 rng =
            make_rng(derive_seed(cfg_.seed, static_cast<std::uint64_t>(attempt), i));

        std::optional<NaturalGaussian> tilted;
        try {
            if (site.quadratic) {
                tilted = product(cav, *site.quadratic);
            } else {
                const bool laplace_phase =
                    !cfg_.is_only && site.smooth() && state_.cycle < cfg_.warmup_cycles;
                if (laplace_phase && cav_proper) {
                    const TiltedLaplace tl = tilted_laplace(site, cav);
                    if (tl.ok) {
                        tilted = from_moments(tl.moments);
                    } else {
                        ++state_.site_fallbacks;
                        const TiltedIs ti = tilted_is(site, cav, cav, cfg_.is_samples, rng);
                        ess[i] = ti.ess;
                        tilted = from_moments(ti.moments);
                    }
                } else {
                    // Importance sampling; the proposal prefers the fresh
                    // Laplace fit of the tilted density, then the cavity,
                    // then the always-proper global approximation.
                    std::optional<NaturalGaussian> proposal;
                    if (site.smooth() && cav_proper) {
                        const TiltedLaplace tl = tilted_laplace(site, cav);
                        if (tl.ok) proposal = from_moments(tl.moments);
                    }
                    if (!proposal && cav_proper) proposal = cav;
                    if (!proposal) proposal = global_snapshot;
                    const TiltedIs ti = tilted_is(site, cav, *proposal, cfg_.is_samples, rng);
                    ess[i] = ti.ess;
                    tilted = from_moments(ti.moments);
                }
            }
        } catch (const std::runtime_error&) {
            tilted.reset();  // degenerate moments or disjoint proposal
        }

        if (!tilted) {
            ++failures;
            continue;
        }
        if (std::isfinite(ess[i]) && ess[i] < cfg_.ess_floor) ++state_.low_ess_events;
        delta[i] = quotient(*tilted, global_snapshot);
        active[i] = true;
    }
    if (failures == static_cast<int>(n_sites))
        throw std::runtime_error("ep::Runner: all sites failed in one cycle");

    // Commit phase: halve the damping until the summed precision stays
    // positive definite.
    double alpha = cfg_.damping;
    bool committed = false;
    for (int retry = 0; retry <= 10 && !committed; ++retry, alpha *= 0.5) {
        std::vector<NaturalGaussian> cand_sites = state_.sites;
        Eigen::VectorXd r = Eigen::VectorXd::Zero(global_snapshot.dim());
        Eigen::MatrixXd q = Eigen::MatrixXd::Zero(global_snapshot.dim(), global_snapshot.dim());
        for (std::size_t i = 0; i < n_sites; ++i) {
            if (active[i])
                cand_sites[i] =
                    NaturalGaussian(cand_sites[i].r + alpha * delta[i].r,
                                    cand_sites[i].Q + alpha * delta[i].Q);
            r += cand_sites[i].r;
            q += cand_sites[i].Q;
        }
        NaturalGaussian cand_global(r, q);
        if (!cand_global.proper()) continue;

        double max_update = 0.0;
        for (std::size_t i = 0; i < n_sites; ++i)
            if (active[i])
                max_update = std::max(
                    max_update, std::sqrt(alpha * alpha *
                                          (delta[i].r.squaredNorm() + delta[i].Q.squaredNorm())));

        state_.sites = std::move(cand_sites);
        state_.global = std::move(cand_global);
        state_.cycle += 1;
        state_.last_max_update = max_update;
        state_.last_ess = ess;
        state_.damping_history.push_back(alpha);
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        trace_.push_back({state_.cycle, max_update, ess, alpha, seconds});
        converged_ = max_update <= cfg_.convergence_tol * eta_norm(state_.global);
        committed = true;
    }
    if (!committed) {
        ++state_.skipped_commits;
        // A deterministic warm-up cycle would reproduce the same rejected
        // update forever; stop instead of spinning.
        const bool deterministic_phase = !cfg_.is_only && state_.cycle < cfg_.warmup_cycles;
        if (deterministic_phase) stalled_ = true;
    }
}

std::vector<SiteTarget> build_sites(const Target& t, int num_sites) {
    const Eigen::Index n = t.data.n();
    if (num_sites < 2 || num_sites > n + 1)
        throw std::invalid_argument("build_sites: num_sites must lie in [2, n+1]");
    auto owned = std::make_shared<const Target>(t);

    std::vector<SiteTarget> sites;
    sites.reserve(static_cast<std::size_t>(num_sites));

    SiteTarget prior_site;
    prior_site.quadratic = owned->prior;
    prior_site.log_f = [owned](const Eigen::VectorXd& x) {
        return log_density_unnormalized(owned->prior, x);
    };
    sites.push_back(std::move(prior_site));

    const int blocks = num_sites - 1;
    const Eigen::Index base = n / blocks;
    const Eigen::Index rem = n % blocks;
    Eigen::Index start = 0;
    for (int b = 0; b < blocks; ++b) {
        const Eigen::Index len = base + (b < rem ? 1 : 0);
        SiteTarget s;
        s.log_f = [owned, start, len](const Eigen::VectorXd& theta) -> double {
            const ELEvaluation ev = eval_el(owned->model, owned->data, theta);
            if (!ev.in_support) return -kInf;
            return ev.weights.segment(start, len).array().log().sum();
        };
        if (owned->model.smooth) {
            s.value_grad = [owned, start, len](const Eigen::VectorXd& theta)
                -> std::optional<std::pair<double, Eigen::VectorXd>> {
                const ELEvaluation ev = eval_el(owned->model, owned->data, theta);
                if (!ev.in_support) return std::nullopt;
                const ELGradient g = el_gradient(owned->model, owned->data, theta, ev);
                const double value = ev.weights.segment(start, len).array().log().sum();
                Eigen::VectorXd grad =
                    g.grad_log_w.middleRows(start, len).colwise().sum().transpose();
                return std::make_pair(value, std::move(grad));
            };
        }
        sites.push_back(std::move(s));
        start += len;
    }
    return sites;
}

std::pair<NaturalGaussian, EpTrace> run(const Target& t, EpConfig cfg, const LaplaceResult& lap) {
    if (!t.model.smooth) cfg.is_only = true;
    cfg.validate(t.data.n(), t.p());
    Runner runner(build_sites(t, cfg.num_sites), init_from_laplace(lap, cfg.num_sites), cfg);
    while (!runner.done()) runner.cycle();
    return {runner.state().global, runner.trace()};
}

std::pair<NaturalGaussian, EpTrace> run(const Target& t, const EpConfig& cfg) {
    if (!t.model.smooth)
        throw std::invalid_argument(
            "ep::run: non-smooth target requires an externally supplied Laplace initialization");
    return run(t, cfg, map_newton(t));
}

}  // namespace bel::ep
