#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

namespace bel {

/// A moment-constraint model: per-observation constraint value h(z, theta) in
/// R^K and, when smooth, its K x p Jacobian in theta.  Models are immutable
/// function bundles and safe to share across threads.
struct ConstraintModel {
    std::string name;
    int K = 0;
    int p = 0;
    bool smooth = true;
    std::function<Eigen::VectorXd(const Eigen::VectorXd& z, const Eigen::VectorXd& theta)> h;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd& z, const Eigen::VectorXd& theta)> jac;
};

struct DatasetMeta {
    std::string generator;
    std::uint64_t seed = 0;
    std::optional<Eigen::VectorXd> theta0;
};

/// Fixed-width observation records, responses first then covariates.
struct Dataset {
    Eigen::MatrixXd observations;  // n x record_width
    DatasetMeta meta;

    Eigen::Index n() const { return observations.rows(); }
    Eigen::VectorXd row(Eigen::Index i) const { return observations.row(i).transpose(); }
};

/// Linear regression orthogonality constraint: h = x (y - x'theta), K = p.
/// Record layout: (y, x_1..x_p).
ConstraintModel linreg_model(int p);

/// Logistic regression score constraint h = x (y - expit(x'theta)), K = p = 4.
/// Record layout: (y, x_1..x_4) with x_1 the intercept.
ConstraintModel logistic_model();

/// Quantile regression constraint h = rho_tau(y - x'theta) x for p = 2.
/// The non-smooth variant uses the piecewise score {1-tau, 0, -tau} and has no
/// Jacobian; the smooth variant substitutes expit(-u/epsilon_rho) - tau.
ConstraintModel quantile_model(double tau, double epsilon_rho, bool smooth);

/// Quadratic inference function for bivariate repeated measures, p = 5,
/// K = 10: blocks x M_j (y - x'theta) for M_1 = I and M_2 compound symmetry
/// with off-diagonal 0.7.  Record layout: (y_1, y_2, x_.1 (5), x_.2 (5)).
ConstraintModel gee_model();

double expit(double t);

/// Piecewise quantile score: 1-tau for u < 0, 0 at u = 0, -tau for u > 0.
double quantile_score(double tau, double u);

/// Smooth surrogate expit(-u/epsilon) - tau.
double quantile_score_smooth(double tau, double epsilon, double u);

/// Synthetic data for one of {linreg2, linreg10, quantile, gee}; pure
/// function of (spec, seed).
Dataset generate(const std::string& spec, std::uint64_t seed);

/// Load the bundled 81-row kyphosis CSV (header Kyphosis,Age,Number,Start),
/// map the response to {0,1}, standardize the covariates to mean 0 and sample
/// standard deviation 1 (n-1 denominator), and prepend an intercept column.
/// Validates the expected row count and column checksums.
Dataset load_kyphosis(const std::string& path);

/// Dataset CSV interchange: header row, one observation per row, responses
/// first then covariates.
void save_dataset_csv(const Dataset& data, int n_responses, const std::string& path);
Dataset load_dataset_csv(const std::string& path);

}  // namespace bel
