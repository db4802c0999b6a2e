#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <utility>
#include <vector>

#include "bel/elcore.hpp"
#include "bel/posterior.hpp"

namespace bel {

struct VbConfig {
    double learning_rate = 1e-3;
    int steps = 20000;
    int mc_samples = 1;
    double a_n = -1.0;  // adjustment factor; negative selects log(n)/2
    std::uint64_t seed = 0;
    // Adam moment decay and stabilizer, standard defaults.
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
    double resolve_a_n(Eigen::Index n) const;
};

/// Unconstrained Gaussian family parameterization: mean plus a lower
/// triangular covariance factor whose diagonal stays positive through a
/// softplus map maintained by the optimizer.
struct VbParams {
    Eigen::VectorXd mu;
    Eigen::MatrixXd scale_tril;

    Eigen::Index dim() const { return mu.size(); }
};

/// Empirical likelihood with the Chen-style pseudo-observation
/// h_{n+1} = -(a_n/n) sum_i h_i appended, which places zero inside the
/// augmented hull for every theta.  a_n = 0 disables the augmentation and
/// returns the plain evaluation verbatim.
ELEvaluation adjusted_el(const ConstraintModel& model, const Dataset& data,
                         const Eigen::VectorXd& theta, double a_n);

/// Gradient of the adjusted log empirical likelihood; the pseudo-row's theta
/// dependence is differentiated through.
ELGradient adjusted_el_gradient(const ConstraintModel& model, const Dataset& data,
                                const Eigen::VectorXd& theta, const ELEvaluation& ev_adj,
                                double a_n);

/// Adjusted log posterior log p(theta) + log EL_adj(theta) and its gradient.
double adjusted_log_post(const Target& t, const Eigen::VectorXd& theta, double a_n);
Eigen::VectorXd adjusted_grad_log_post(const Target& t, const Eigen::VectorXd& theta, double a_n);

struct ElboSample {
    double elbo = 0.0;
    Eigen::VectorXd grad_mu;
    Eigen::MatrixXd grad_scale;  // lower triangular
};

/// One-sample pathwise (reparameterization) estimate of the ELBO and its
/// gradient with respect to (mu, scale_tril).  The entropy term is analytic.
ElboSample elbo_grad_pathwise(const Target& t, const VbParams& params, double a_n,
                              std::mt19937_64& rng);

struct VbStep {
    int step;
    double elbo_estimate;
    double seconds;
};
using VbTrace = std::vector<VbStep>;

/// Full-covariance Gaussian variational Bayes on the adjusted posterior:
/// Adam ascent of the pathwise ELBO, initialized at the Laplace fit.
class VbOptimizer {
  public:
    VbOptimizer(const Target& t, VbConfig cfg, const LaplaceResult& init);

    void step(int count);
    int steps_done() const { return step_; }
    bool done() const { return step_ >= cfg_.steps; }
    VbParams params() const;
    NaturalGaussian approx() const;
    const VbTrace& trace() const { return trace_; }

  private:
    const Target& target_;
    VbConfig cfg_;
    double a_n_;
    std::mt19937_64 rng_;
    Eigen::VectorXd mu_;
    Eigen::MatrixXd offdiag_;   // strict lower triangle of the scale factor
    Eigen::VectorXd raw_diag_;  // softplus pre-image of the scale diagonal
    Eigen::VectorXd adam_m_, adam_v_;
    int step_ = 0;
    VbTrace trace_;
    double seconds_ = 0.0;
};

std::pair<NaturalGaussian, VbTrace> vb_run(const Target& t, const VbConfig& cfg,
                                           const LaplaceResult& init);
std::pair<NaturalGaussian, VbTrace> vb_run(const Target& t, const VbConfig& cfg);

}  // namespace bel
