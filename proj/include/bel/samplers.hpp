#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string>

#include "bel/posterior.hpp"

namespace bel {

struct ChainConfig {
    int draws = 100000;
    int burn_in = 10000;
    double step_size = 0.01;  // HMC
    int n_leapfrog = 50;      // HMC
    Eigen::MatrixXd mass;          // HMC; empty selects the identity
    Eigen::MatrixXd proposal_cov;  // MH preliminary phase; empty selects the identity
    double shrinkage = 0.7;        // MH main-phase covariance multiplier
    double prelim_scale = 0.1;     // MH preliminary isotropic scale
    int prelim_draws = 10000;      // 0 disables the preliminary phase
    std::uint64_t seed = 0;

    void validate(Eigen::Index p) const;
};

/// Posterior draws, one per row, with provenance.  Every row satisfies
/// log_post > -infinity by construction.
struct SampleMatrix {
    Eigen::MatrixXd draws;
    double accept_rate = 0.0;
    double seconds = 0.0;
    std::string method;
    std::uint64_t seed = 0;
};

/// Random-walk Metropolis-Hastings.  A preliminary isotropic run estimates the
/// posterior covariance; the main chain proposes with shrinkage times that
/// estimate.  Out-of-support proposals are rejected.
class MhSampler {
  public:
    MhSampler(const Target& t, ChainConfig cfg, const Eigen::VectorXd& start);

    void step(int count);
    SampleMatrix result() const;
    int drawn() const { return drawn_; }
    const ChainConfig& config() const { return cfg_; }

  private:
    const Target& target_;
    ChainConfig cfg_;
    std::mt19937_64 rng_;
    Eigen::MatrixXd chain_;
    Eigen::MatrixXd proposal_chol_;
    Eigen::VectorXd current_;
    double current_logp_ = 0.0;
    int drawn_ = 0;
    long accepts_ = 0;
    double seconds_ = 0.0;
};

/// Hamiltonian Monte Carlo with the two-stage minimal-norm symmetric
/// integrator (coefficient 0.19318...).  Trajectories that leave the support
/// or produce a non-finite Hamiltonian are rejected as divergences.
class HmcSampler {
  public:
    HmcSampler(const Target& t, ChainConfig cfg, const Eigen::VectorXd& start);

    void step(int count);
    SampleMatrix result() const;
    int drawn() const { return drawn_; }
    int divergences() const { return divergences_; }

  private:
    const Target& target_;
    ChainConfig cfg_;
    std::mt19937_64 rng_;
    Eigen::MatrixXd chain_;
    Eigen::MatrixXd mass_chol_;
    Eigen::MatrixXd mass_inv_;
    Eigen::VectorXd current_;
    double current_u_ = 0.0;
    int drawn_ = 0;
    long accepts_ = 0;
    int divergences_ = 0;
    double seconds_ = 0.0;
};

SampleMatrix mh_run(const Target& t, const ChainConfig& cfg, const Eigen::VectorXd& start);
SampleMatrix mh_run(const Target& t, const ChainConfig& cfg);  // MAP start
SampleMatrix hmc_run(const Target& t, const ChainConfig& cfg, const Eigen::VectorXd& start);
SampleMatrix hmc_run(const Target& t, const ChainConfig& cfg);  // MAP start

/// One minimal-norm trajectory; returns false on divergence.  Exposed for the
/// reversibility and energy-conservation checks.
bool minimal_norm_trajectory(const Target& t, const Eigen::MatrixXd& mass_inv, double step_size,
                             int n_steps, Eigen::VectorXd& position, Eigen::VectorXd& momentum);

/// Negative log posterior and its gradient in one evaluation; false when the
/// position is out of support.
bool neg_log_post_grad(const Target& t, const Eigen::VectorXd& x, double& u, Eigen::VectorXd& grad);

/// Drop burn_in rows, then evenly subsample to count rows (index gaps differ
/// by at most one; count = 1 keeps the first retained row).
SampleMatrix thin_and_pool(const SampleMatrix& chain, int burn_in, int count);

/// Chain CSV (header theta_1..theta_p) plus a JSON sidecar at path + ".json".
void save_chain_csv(const SampleMatrix& chain, int burn_in, const std::string& path);
SampleMatrix load_chain_csv(const std::string& path);

}  // namespace bel
