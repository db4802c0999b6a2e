#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "bel/gaussian.hpp"
#include "bel/posterior.hpp"

namespace bel::ep {

/// One factor of the target posterior: the log factor, an optional combined
/// value-and-gradient evaluation (absent for non-smooth factors), and, when
/// the factor is itself Gaussian (the prior, or pseudo-sites in tests), its
/// exact natural parameters.
struct SiteTarget {
    std::function<double(const Eigen::VectorXd&)> log_f;
    std::function<std::optional<std::pair<double, Eigen::VectorXd>>(const Eigen::VectorXd&)>
        value_grad;
    std::optional<NaturalGaussian> quadratic;

    bool smooth() const { return quadratic.has_value() || static_cast<bool>(value_grad); }
};

struct EpConfig {
    int num_sites = 6;            // D, prior included as its own site
    double damping = 0.1;         // alpha
    int warmup_cycles = 50;       // Laplace-based tilted moments before IS
    int is_samples = 5000;        // L
    int max_cycles = 100;
    double convergence_tol = 1e-4;  // on max site update, scaled by |global eta|
    double ess_floor = 100.0;
    std::uint64_t seed = 0;
    bool is_only = false;  // non-smooth targets: importance sampling from cycle 0

    void validate(Eigen::Index n, Eigen::Index p) const;
};

struct EpState {
    std::vector<NaturalGaussian> sites;
    NaturalGaussian global;
    int cycle = 0;  // committed cycles
    double last_max_update = std::numeric_limits<double>::infinity();
    std::vector<double> last_ess;          // per site; NaN for exact/Laplace updates
    std::vector<double> damping_history;   // alpha actually applied per committed cycle
    int skipped_commits = 0;
    int site_fallbacks = 0;   // Laplace failures recovered through IS
    int low_ess_events = 0;   // IS updates accepted below the ESS floor
};

struct CycleRecord {
    int cycle;
    double max_update;
    std::vector<double> site_ess;
    double alpha_used;
    double seconds;
};
using EpTrace = std::vector<CycleRecord>;

/// Sites initialized as equal shares eta/D of the Laplace natural parameters.
EpState init_from_laplace(const LaplaceResult& lap, int num_sites);

/// Cavity of site i: global with the site divided out.  May be improper.
NaturalGaussian cavity(const EpState& state, int i);

struct TiltedLaplace {
    MomentGaussian moments;
    bool ok = false;
    int iterations = 0;
};

/// Laplace approximation of the tilted density cav * exp(site.log_f): Newton
/// from the cavity mean, curvature by finite differences of the site gradient.
/// ok = false signals a failed mode search or indefinite curvature; callers
/// fall back to importance sampling.
TiltedLaplace tilted_laplace(const SiteTarget& site, const NaturalGaussian& cav);

struct TiltedIs {
    MomentGaussian moments;
    double ess = 0.0;
};

/// Self-normalized importance-sampling moments of the tilted density with the
/// given proposal; the covariance comes from a QR factorization of the
/// weighted scatter matrix.  Out-of-support draws receive zero weight; all
/// weights zero is an error.
TiltedIs tilted_is(const SiteTarget& site, const NaturalGaussian& cav,
                   const NaturalGaussian& proposal, int n_samples, std::mt19937_64& rng);

/// Damped parallel-update expectation propagation: per cycle every site reads
/// a snapshot of the global approximation, computes tilted moments, and emits
/// a damped natural-parameter update; a single commit applies them all and
/// halves the damping while the committed precision fails to stay positive
/// definite.
class Runner {
  public:
    Runner(std::vector<SiteTarget> sites, EpState init, EpConfig cfg);

    void cycle();
    bool converged() const { return converged_; }
    bool done() const;
    const EpState& state() const { return state_; }
    const EpTrace& trace() const { return trace_; }
    const EpConfig& config() const { return cfg_; }

  private:
    std::vector<SiteTarget> targets_;
    EpState state_;
    EpConfig cfg_;
    EpTrace trace_;
    bool converged_ = false;
    bool stalled_ = false;
    int attempts_ = 0;
};

/// The prior as site 0 plus D-1 equal contiguous observation blocks.  Each
/// data site's log factor is the block sum of log w_i from the full profile
/// empirical likelihood.
std::vector<SiteTarget> build_sites(const Target& t, int num_sites);

/// Full algorithm from a Laplace initialization.  Non-smooth targets switch to
/// importance-sampling-only updates automatically.
std::pair<NaturalGaussian, EpTrace> run(const Target& t, EpConfig cfg, const LaplaceResult& lap);

/// Convenience overload computing the Laplace initialization internally
/// (smooth targets only).
std::pair<NaturalGaussian, EpTrace> run(const Target& t, const EpConfig& cfg);

/// sqrt(|r|^2 + |Q|_F^2), the update-norm metric used for convergence.
double eta_norm(const NaturalGaussian& g);

}  // namespace bel::ep
