#pragma once

#include <Eigen/Dense>

#include <limits>
#include <vector>

#include "bel/models.hpp"

namespace bel {

/// Result of the inner constrained optimization at one theta.  When the
/// evaluation is out of support, log_el is -infinity and weights is empty.
/// The constraint matrix is kept so derivative routines can reuse it.
struct ELEvaluation {
    Eigen::VectorXd lambda;   // Lagrange multiplier, length K
    Eigen::VectorXd weights;  // length n, strictly positive when in support
    double log_el = -std::numeric_limits<double>::infinity();
    bool in_support = false;
    int iterations = 0;
    Eigen::MatrixXd h;        // cached n x K constraint values
};

/// First derivatives of the profile empirical likelihood at one theta.
struct ELGradient {
    Eigen::MatrixXd dlambda_dtheta;  // K x p
    Eigen::MatrixXd grad_log_w;      // n x p, row i = d log w_i / d theta
    Eigen::VectorXd grad_log_el;     // p, column sums of grad_log_w
};

inline constexpr double kElTol = 1e-9;
inline constexpr int kElMaxIter = 100;

/// Maximize the concave dual D(lambda) = sum_i log(1 + lambda'h_i) over the
/// region where every factor stays positive, by damped Newton with a
/// backtracking line search.  Declares out-of-support on the exact 1-D sign
/// test (K = 1) or on solver failure with boundary-active iterates (K > 1).
/// Throws std::invalid_argument when h contains non-finite entries.
ELEvaluation solve_lambda(const Eigen::MatrixXd& h, double tol = kElTol, int max_iter = kElMaxIter);

/// Assemble the n x K constraint matrix for (model, data, theta) and delegate
/// to solve_lambda.  The matrix is cached on the returned evaluation.
ELEvaluation eval_el(const ConstraintModel& model, const Dataset& data, const Eigen::VectorXd& theta,
                     double tol = kElTol, int max_iter = kElMaxIter);

/// Derivative assembly from raw parts; jac[i] is the K x p Jacobian of row i.
/// Solves the implicit-function linear system for dlambda/dtheta and chains it
/// through log w_i = -log n - log(1 + lambda'h_i).  Throws on a degenerate
/// constraint span (the weighted scatter sum w_i^2 h_i h_i' is singular).
ELGradient gradient_from_parts(const Eigen::MatrixXd& h, const std::vector<Eigen::MatrixXd>& jac,
                               const Eigen::VectorXd& lambda, const Eigen::VectorXd& weights);

/// Gradient of the profile empirical likelihood at an in-support evaluation.
ELGradient el_gradient(const ConstraintModel& model, const Dataset& data, const Eigen::VectorXd& theta,
                       const ELEvaluation& ev);

/// Symmetrized central finite differences of the analytic gradient.  step <= 0
/// selects the default cbrt(machine epsilon) * (1 + |theta_j|) per coordinate.
/// Throws when a probe point leaves the support.
Eigen::MatrixXd el_hessian_fd(const ConstraintModel& model, const Dataset& data,
                              const Eigen::VectorXd& theta, double step = 0.0);

}  // namespace bel
