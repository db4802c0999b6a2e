#include "bel/samplers.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "bel/elcore.hpp"

namespace bel {

namespace {

// Two-stage minimal-norm coefficient of Blanes, Casas and Sanz-Serna.
constexpr double kMinimalNormB1 = 0.1931833275037836;

Eigen::MatrixXd identity_if_empty(const Eigen::MatrixXd& m, Eigen::Index p, const char* what) {
    if (m.size() == 0) return Eigen::MatrixXd::Identity(p, p);
    if (m.rows() != p || m.cols() != p)
        throw std::invalid_argument(std::string(what) + ": wrong dimensions");
    return m;
}

Eigen::MatrixXd chol_or_throw(const Eigen::MatrixXd& m, const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success)
        throw std::invalid_argument(std::string(what) + ": matrix not positive definite");
    return llt.matrixL();
}

class ScopedTimer {
  public:
    explicit ScopedTimer(double& acc) : acc_(acc), t0_(std::chrono::steady_clock::now()) {}
    ~ScopedTimer() {
        acc_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    }

  private:
    double& acc_;
    std::chrono::steady_clock::time_point t0_;
};

}  // namespace

void ChainConfig::validate(Eigen::Index p) const {
    if (draws < 1) throw std::invalid_argument("ChainConfig: draws must be positive");
    if (burn_in < 0) throw std::invalid_argument("ChainConfig: burn_in must be non-negative");
    if (!(step_size > 0.0)) throw std::invalid_argument("ChainConfig: step_size must be positive");
    if (n_leapfrog < 1) throw std::invalid_argument("ChainConfig: n_leapfrog must be positive");
    if (!(shrinkage > 0.0 && shrinkage <= 1.0))
        throw std::invalid_argument("ChainConfig: shrinkage must lie in (0, 1]");
    if (prelim_draws < 0) throw std::invalid_argument("ChainConfig: prelim_draws must be >= 0");
    if (mass.size() != 0 && (mass.rows() != p || mass.cols() != p))
        throw std::invalid_argument("ChainConfig: mass has wrong dimensions");
    if (proposal_cov.size() != 0 && (proposal_cov.rows() != p || proposal_cov.cols() != p))
        throw std::invalid_argument("ChainConfig: proposal_cov has wrong dimensions");
}

bool neg_log_post_grad(const Target& t, const Eigen::VectorXd& x, double& u, Eigen::VectorXd& grad) {
    if (t.prior_only) {
        u = -log_pdf(t.prior, x);
        grad = -(t.prior.r - t.prior.Q * x);
        return true;
    }
    const ELEvaluation ev = eval_el(t.model, t.data, x);
    if (!ev.in_support) return false;
    u = -(log_pdf(t.prior, x) + ev.log_el);
    const ELGradient g = el_gradient(t.model, t.data, x, ev);
    grad = -((t.prior.r - t.prior.Q * x) + g.grad_log_el);
    return grad.allFinite() && std::isfinite(u);
}

// ---------------------------------------------------------------------------
// Random-walk Metropolis-Hastings
// ---------------------------------------------------------------------------

MhSampler::MhSampler(const Target& t, ChainConfig cfg, const Eigen::VectorXd& start)
    : target_(t), cfg_(std::move(cfg)), rng_(cfg_.seed) {
    ScopedTimer timer(seconds_);
    const Eigen::Index p = t.p();
    cfg_.validate(p);
    current_ = start;
    current_logp_ = log_post(t, current_);
    if (!std::isfinite(current_logp_)) throw std::runtime_error("mh_run: start out of support");
    chain_.resize(std::min(cfg_.draws, 65536), p);

    const Eigen::MatrixXd base = identity_if_empty(cfg_.proposal_cov, p, "proposal_cov");
    Eigen::MatrixXd main_cov;
    if (cfg_.prelim_draws > 0) {
        // Preliminary isotropic-scaled phase estimating the posterior spread.
        const Eigen::MatrixXd prelim_chol =
            cfg_.prelim_scale * chol_or_throw(base, "proposal_cov");
        Eigen::MatrixXd prelim(cfg_.prelim_draws, p);
        std::normal_distribution<double> nd;
        Eigen::VectorXd z(p);
        for (int i = 0; i < cfg_.prelim_draws; ++i) {
            for (Eigen::Index j = 0; j < p; ++j) z[j] = nd(rng_);
            const Eigen::VectorXd cand = current_ + prelim_chol * z;
            const double lp = log_post(target_, cand);
            if (std::isfinite(lp) &&
                std::log(std::uniform_real_distribution<double>()(rng_)) <= lp - current_logp_) {
                current_ = cand;
                current_logp_ = lp;
            }
            prelim.row(i) = current_.transpose();
        }
        const Eigen::MatrixXd centered = prelim.rowwise() - prelim.colwise().mean();
        main_cov = cfg_.shrinkage * (centered.transpose() * centered) /
                   static_cast<double>(cfg_.prelim_draws - 1);
        // Guard against a degenerate preliminary chain.
        main_cov.diagonal().array() += 1e-12 * (1.0 + main_cov.trace());
    } else {
        main_cov = cfg_.shrinkage * base;
    }
    proposal_chol_ = chol_or_throw(main_cov, "main proposal covariance");
}

void MhSampler::step(int count) {
    ScopedTimer timer(seconds_);
    const Eigen::Index p = current_.size();
    std::normal_distribution<double> nd;
    Eigen::VectorXd z(p);
    for (int k = 0; k < count && drawn_ < cfg_.draws; ++k) {
        for (Eigen::Index j = 0; j < p; ++j) z[j] = nd(rng_);
        const Eigen::VectorXd cand = current_ + proposal_chol_ * z;
        const double lp = log_post(target_, cand);
        if (std::isfinite(lp) &&
            std::log(std::uniform_real_distribution<double>()(rng_)) <= lp - current_logp_) {
            current_ = cand;
            current_logp_ = lp;
            ++accepts_;
        }
        if (drawn_ == chain_.rows())
            chain_.conservativeResize(std::min<Eigen::Index>(cfg_.draws, chain_.rows() * 2),
                                      Eigen::NoChange);
        chain_.row(drawn_++) = current_.transpose();
    }
}

SampleMatrix MhSampler::result() const {
    SampleMatrix out;
    out.draws = chain_.topRows(drawn_);
    out.accept_rate = drawn_ > 0 ? static_cast<double>(accepts_) / drawn_ : 0.0;
    out.seconds = seconds_;
    out.method = "mh";
    out.seed = cfg_.seed;
    return out;
}

SampleMatrix mh_run(const Target& t, const ChainConfig& cfg, const Eigen::VectorXd& start) {
    MhSampler s(t, cfg, start);
    s.step(cfg.draws);
    return s.result();
}

SampleMatrix mh_run(const Target& t, const ChainConfig& cfg) {
    return mh_run(t, cfg, map_newton(t).mode);
}

// ---------------------------------------------------------------------------
// Hamiltonian Monte Carlo, two-stage minimal-norm integrator
// ---------------------------------------------------------------------------

bool minimal_norm_trajectory(const Target& t, const Eigen::MatrixXd& mass_inv, double step_size,
                             int n_steps, Eigen::VectorXd& position, Eigen::VectorXd& momentum) {
    double u;
    Eigen::VectorXd grad(position.size());
    if (!neg_log_post_grad(t, position, u, grad)) return false;
    const double b1 = kMinimalNormB1;
    const double b2 = 1.0 - 2.0 * b1;
    for (int s = 0; s < n_steps; ++s) {
        momentum -= b1 * step_size * grad;
        position += 0.5 * step_size * (mass_inv * momentum);
        if (!neg_log_post_grad(t, position, u, grad)) return false;
        momentum -= b2 * step_size * grad;
        position += 0.5 * step_size * (mass_inv * momentum);
        if (!neg_log_post_grad(t, position, u, grad)) return false;
        momentum -= b1 * step_size * grad;
    }
    return true;
}

HmcSampler::HmcSampler(const Target& t, ChainConfig cfg, const Eigen::VectorXd& start)
    : target_(t), cfg_(std::move(cfg)), rng_(cfg_.seed) {
    ScopedTimer timer(seconds_);
    const Eigen::Index p = t.p();
    cfg_.validate(p);
    if (!t.prior_only && !t.model.smooth)
        throw std::runtime_error("hmc_run: gradient unavailable for a non-smooth model; use mh");
    const Eigen::MatrixXd mass = identity_if_empty(cfg_.mass, p, "mass");
    mass_chol_ = chol_or_throw(mass, "mass");
    mass_inv_ = mass.llt().solve(Eigen::MatrixXd::Identity(p, p));

    current_ = start;
    Eigen::VectorXd g(p);
    if (!neg_log_post_grad(target_, current_, current_u_, g))
        throw std::runtime_error("hmc_run: start out of support");
    chain_.resize(std::min(cfg_.draws, 65536), p);
}

void HmcSampler::step(int count) {
    ScopedTimer timer(seconds_);
    const Eigen::Index p = current_.size();
    std::normal_distribution<double> nd;
    Eigen::VectorXd z(p);
    for (int k = 0; k < count && drawn_ < cfg_.draws; ++k) {
        for (Eigen::Index j = 0; j < p; ++j) z[j] = nd(rng_);
        Eigen::VectorXd momentum = mass_chol_ * z;
        const double h0 = current_u_ + 0.5 * momentum.dot(mass_inv_ * momentum);

        Eigen::VectorXd pos = current_;
        const bool ok =
            minimal_norm_trajectory(target_, mass_inv_, cfg_.step_size, cfg_.n_leapfrog, pos, momentum);
        bool accept = false;
        if (ok) {
            double u1;
            Eigen::VectorXd g(p);
            if (neg_log_post_grad(target_, pos, u1, g)) {
                const double h1 = u1 + 0.5 * momentum.dot(mass_inv_ * momentum);
                if (std::isfinite(h1) &&
                    std::log(std::uniform_real_distribution<double>()(rng_)) <= h0 - h1) {
                    current_ = pos;
                    current_u_ = u1;
                    accept = true;
                }
            } else {
                ++divergences_;
            }
        } else {
            ++divergences_;
        }
        if (accept) ++accepts_;
        if (drawn_ == chain_.rows())
            chain_.conservativeResize(std::min<Eigen::Index>(cfg_.draws, chain_.rows() * 2),
                                      Eigen::NoChange);
        chain_.row(drawn_++) = current_.transpose();
    }
}

SampleMatrix HmcSampler::result() const {
    SampleMatrix out;
    out.draws = chain_.topRows(drawn_);
    out.accept_rate = drawn_ > 0 ? static_cast<double>(accepts_) / drawn_ : 0.0;
    out.seconds = seconds_;
    out.method = "hmc";
    out.seed = cfg_.seed;
    return out;
}

SampleMatrix hmc_run(const Target& t, const ChainConfig& cfg, const Eigen::VectorXd& start) {
    HmcSampler s(t, cfg, start);
    s.step(cfg.draws);
    return s.result();
}

SampleMatrix hmc_run(const Target& t, const ChainConfig& cfg) {
    return hmc_run(t, cfg, map_newton(t).mode);
}

// ---------------------------------------------------------------------------

SampleMatrix thin_and_pool(const SampleMatrix& chain, int burn_in, int count) {
    const Eigen::Index m = chain.draws.rows();
    if (burn_in < 0 || burn_in >= m) throw std::invalid_argument("thin_and_pool: burn_in out of range");
    const Eigen::Index rem = m - burn_in;
    if (count < 1 || count > rem)
        throw std::invalid_argument("thin_and_pool: count exceeds retained draws");
    SampleMatrix out = chain;
    out.draws.resize(count, chain.draws.cols());
    for (int j = 0; j < count; ++j) {
        const Eigen::Index idx =
            burn_in + (static_cast<Eigen::Index>(j) * rem) / static_cast<Eigen::Index>(count);
        out.draws.row(j) = chain.draws.row(idx);
    }
    return out;
}

void save_chain_csv(const SampleMatrix& chain, int burn_in, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_chain_csv: cannot open " + path);
    const Eigen::Index p = chain.draws.cols();
    for (Eigen::Index j = 0; j < p; ++j) out << (j ? "," : "") << "theta_" << (j + 1);
    out << '\n';
    out.precision(17);
    for (Eigen::Index i = 0; i < chain.draws.rows(); ++i) {
        for (Eigen::Index j = 0; j < p; ++j) out << (j ? "," : "") << chain.draws(i, j);
        out << '\n';
    }
    std::ofstream side(path + ".json");
    side << "{\"method\": \"" << chain.method << "\", \"seed\": " << chain.seed
         << ", \"accept_rate\": " << chain.accept_rate << ", \"seconds\": " << chain.seconds
         << ", \"burn_in\": " << burn_in << "}\n";
}

SampleMatrix load_chain_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_chain_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_chain_csv: empty file");
    Eigen::Index p = 1;
    for (char c : line)
        if (c == ',') ++p;
    std::vector<double> values;
    Eigen::Index rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t pos = 0;
        for (Eigen::Index j = 0; j < p; ++j) {
            std::size_t next = line.find(',', pos);
            values.push_back(std::stod(line.substr(pos, next - pos)));
            pos = next == std::string::npos ? line.size() : next + 1;
        }
        ++rows;
    }
    SampleMatrix out;
    out.draws.resize(rows, p);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < p; ++j) out.draws(i, j) = values[static_cast<std::size_t>(i * p + j)];
    out.method = "csv";
    return out;
}

}  // namespace bel
