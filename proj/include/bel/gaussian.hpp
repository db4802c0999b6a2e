#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <stdexcept>
#include <utility>

namespace bel {

/// Multivariate Gaussian in natural parameters: linear shift r and precision Q,
/// so that log density = const + r'x - x'Qx/2.  Mean mu = Q^{-1} r, covariance
/// Sigma = Q^{-1}.  Values are immutable after construction and Q is
/// symmetrized on entry.  A NaturalGaussian may be improper (Q not positive
/// definite); sites produced by expectation propagation routinely are.
template <typename Scalar>
struct NaturalGaussianT {
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    Vec r;
    Mat Q;

    NaturalGaussianT() = default;

    NaturalGaussianT(Vec shift, Mat precision) : r(std::move(shift)), Q(std::move(precision)) {
        if (Q.rows() != Q.cols() || Q.rows() != r.size())
            throw std::invalid_argument("NaturalGaussian: dimension mismatch between r and Q");
        Q = (Scalar(0.5) * (Q + Q.transpose())).eval();
    }

    Eigen::Index dim() const { return r.size(); }

    /// Proper means Q admits a Cholesky factorization.
    bool proper() const {
        if (dim() == 0) return false;
        Eigen::LLT<Mat> llt(Q);
        return llt.info() == Eigen::Success;
    }

    static NaturalGaussianT zero(Eigen::Index p) {
        return NaturalGaussianT(Vec::Zero(p), Mat::Zero(p, p));
    }

    /// N(0, variance * I) in natural form.
    static NaturalGaussianT isotropic(Eigen::Index p, Scalar variance) {
        if (!(variance > Scalar(0))) throw std::invalid_argument("isotropic: variance must be positive");
        return NaturalGaussianT(Vec::Zero(p), Mat::Identity(p, p) / variance);
    }
};

/// Moment parameterization: mean and covariance.  Symmetrized on entry; the
/// covariance is only required to be PD where a conversion to natural form or
/// a density is requested (importance-sampling estimates may be degenerate).
template <typename Scalar>
struct MomentGaussianT {
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    Vec mu;
    Mat sigma;

    MomentGaussianT() = default;

    MomentGaussianT(Vec mean, Mat covariance) : mu(std::move(mean)), sigma(std::move(covariance)) {
        if (sigma.rows() != sigma.cols() || sigma.rows() != mu.size())
            throw std::invalid_argument("MomentGaussian: dimension mismatch between mu and sigma");
        sigma = (Scalar(0.5) * (sigma + sigma.transpose())).eval();
    }

    Eigen::Index dim() const { return mu.size(); }
};

using NaturalGaussian = NaturalGaussianT<double>;
using MomentGaussian = MomentGaussianT<double>;

namespace detail {
template <typename Scalar>
void check_same_dim(const NaturalGaussianT<Scalar>& a, const NaturalGaussianT<Scalar>& b) {
    if (a.dim() != b.dim())
        throw std::invalid_argument("gaussian: operands have different dimensions");
}
}  // namespace detail

/// Product of densities: natural parameters add.  May be improper.
template <typename Scalar>
NaturalGaussianT<Scalar> product(const NaturalGaussianT<Scalar>& a, const NaturalGaussianT<Scalar>& b) {
    detail::check_same_dim(a, b);
    return NaturalGaussianT<Scalar>(a.r + b.r, a.Q + b.Q);
}

/// Quotient of densities: natural parameters subtract.  May be improper.
template <typename Scalar>
NaturalGaussianT<Scalar> quotient(const NaturalGaussianT<Scalar>& a, const NaturalGaussianT<Scalar>& b) {
    detail::check_same_dim(a, b);
    return NaturalGaussianT<Scalar>(a.r - b.r, a.Q - b.Q);
}

template <typename Scalar>
MomentGaussianT<Scalar> to_moments(const NaturalGaussianT<Scalar>& g) {
    using Mat = typename NaturalGaussianT<Scalar>::Mat;
    Eigen::LLT<Mat> llt(g.Q);
    if (g.dim() == 0 || llt.info() != Eigen::Success)
        throw std::runtime_error("to_moments: improper Gaussian (precision not positive definite)");
    auto mu = llt.solve(g.r).eval();
    auto sigma = llt.solve(Mat::Identity(g.dim(), g.dim())).eval();
    return MomentGaussianT<Scalar>(std::move(mu), std::move(sigma));
}

template <typename Scalar>
NaturalGaussianT<Scalar> from_moments(const MomentGaussianT<Scalar>& m) {
    using Mat = typename MomentGaussianT<Scalar>::Mat;
    Eigen::LLT<Mat> llt(m.sigma);
    if (m.dim() == 0 || llt.info() != Eigen::Success)
        throw std::runtime_error("from_moments: covariance not positive definite");
    auto Q = llt.solve(Mat::Identity(m.dim(), m.dim())).eval();
    auto r = (Q * m.mu).eval();
    return NaturalGaussianT<Scalar>(std::move(r), std::move(Q));
}

/// Exact multivariate normal log density.  Requires a proper Gaussian.
template <typename Scalar>
Scalar log_pdf(const NaturalGaussianT<Scalar>& g, const typename NaturalGaussianT<Scalar>::Vec& x) {
    using Mat = typename NaturalGaussianT<Scalar>::Mat;
    if (x.size() != g.dim()) throw std::invalid_argument("log_pdf: point has wrong dimension");
    Eigen::LLT<Mat> llt(g.Q);
    if (g.dim() == 0 || llt.info() != Eigen::Success)
        throw std::runtime_error("log_pdf: improper Gaussian");
    const Scalar log_det_Q = Scalar(2) * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const auto mu = llt.solve(g.r).eval();
    const auto d = (x - mu).eval();
    const Scalar quad = d.dot(g.Q * d);
    const Scalar p = static_cast<Scalar>(g.dim());
    return Scalar(0.5) * log_det_Q - Scalar(0.5) * p * std::log(Scalar(2) * EIGEN_PI) - Scalar(0.5) * quad;
}

/// Unnormalized log density r'x - x'Qx/2; valid for improper Gaussians too.
template <typename Scalar>
Scalar log_density_unnormalized(const NaturalGaussianT<Scalar>& g,
                                const typename NaturalGaussianT<Scalar>::Vec& x) {
    if (x.size() != g.dim()) throw std::invalid_argument("log_density_unnormalized: wrong dimension");
    return g.r.dot(x) - Scalar(0.5) * x.dot(g.Q * x);
}

/// i.i.d. draws (one per row) via the Cholesky factor of the covariance.
/// Deterministic for a fixed generator state.
template <typename Scalar, typename Rng>
typename NaturalGaussianT<Scalar>::Mat sample(const MomentGaussianT<Scalar>& m, Eigen::Index count,
                                              Rng& rng) {
    using Mat = typename MomentGaussianT<Scalar>::Mat;
    using Vec = typename MomentGaussianT<Scalar>::Vec;
    if (count < 0) throw std::invalid_argument("sample: negative count");
    Eigen::LLT<Mat> llt(m.sigma);
    if (m.dim() == 0 || llt.info() != Eigen::Success)
        throw std::runtime_error("sample: covariance not positive definite");
    const Mat L = llt.matrixL();
    std::normal_distribution<Scalar> nd;
    Mat out(count, m.dim());
    Vec z(m.dim());
    for (Eigen::Index i = 0; i < count; ++i) {
        for (Eigen::Index j = 0; j < m.dim(); ++j) z[j] = nd(rng);
        out.row(i) = (m.mu + L * z).transpose();
    }
    return out;
}

template <typename Scalar, typename Rng>
typename NaturalGaussianT<Scalar>::Mat sample(const NaturalGaussianT<Scalar>& g, Eigen::Index count,
                                              Rng& rng) {
    return sample(to_moments(g), count, rng);
}

}  // namespace bel
