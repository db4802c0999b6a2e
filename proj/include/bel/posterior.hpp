#pragma once

#include <Eigen/Dense>

#include "bel/elcore.hpp"
#include "bel/gaussian.hpp"
#include "bel/models.hpp"

namespace bel {

/// The log target log p(theta) + log EL(theta), assembled from a constraint
/// model, a dataset, and a Gaussian prior.  Immutable; evaluations at distinct
/// theta may run concurrently.  prior_only drops the likelihood factor and is
/// a test seam for samplers and variational code.
struct Target {
    ConstraintModel model;
    Dataset data;
    NaturalGaussian prior;
    bool prior_only = false;

    Eigen::Index p() const { return prior.dim(); }
};

/// Target with the default N(0, prior_sd^2 I) prior.
Target make_target(ConstraintModel model, Dataset data, double prior_sd = 10.0);

/// Log posterior up to constants; -infinity outside the support.
double log_post(const Target& t, const Eigen::VectorXd& theta);

/// Gradient / Hessian of the log posterior; both throw when theta is out of
/// support.  The Hessian combines the analytic prior curvature with finite
/// differences of the analytic empirical-likelihood gradient.
Eigen::VectorXd grad_log_post(const Target& t, const Eigen::VectorXd& theta);
Eigen::MatrixXd hess_log_post(const Target& t, const Eigen::VectorXd& theta);

struct LaplaceResult {
    Eigen::VectorXd mode;
    NaturalGaussian approx;  // Q = -Hessian at the mode, r = Q * mode
    int newton_iters = 0;
    bool converged = false;
    double seconds = 0.0;
};

/// Gauss-Newton solve of the empirical estimating equation sum_i h(z_i, theta)
/// = 0 (least squares when over-identified); the default Newton start.
Eigen::VectorXd estimating_equation_start(const ConstraintModel& model, const Dataset& data);

/// Damped Newton ascent of the log posterior with a support-aware line search.
/// Non-convergence is flagged on the result, not thrown.
LaplaceResult map_newton(const Target& t, const Eigen::VectorXd& theta0, double tol = 1e-8,
                         int max_iter = 200);
LaplaceResult map_newton(const Target& t, double tol = 1e-8, int max_iter = 200);

/// Add tau*I with tau doubling from 1e-6 until Cholesky succeeds.
Eigen::MatrixXd repair_positive_definite(const Eigen::MatrixXd& m);

}  // namespace bel
