#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "bel/gaussian.hpp"
#include "bel/rng.hpp"

using bel::MomentGaussian;
using bel::NaturalGaussian;

namespace {

NaturalGaussian ng(std::initializer_list<double> r, std::initializer_list<double> qdiag) {
    Eigen::VectorXd rv(static_cast<Eigen::Index>(r.size()));
    Eigen::Index i = 0;
    for (double v : r) rv[i++] = v;
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(rv.size(), rv.size());
    i = 0;
    for (double v : qdiag) q(i, i) = v, ++i;
    return NaturalGaussian(rv, q);
}

Eigen::MatrixXd random_pd(int p, std::mt19937_64& rng, double cond_cap = 1e6) {
    std::normal_distribution<double> nd;
    Eigen::MatrixXd a(p, p);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) a(i, j) = nd(rng);
    Eigen::MatrixXd m = a * a.transpose();
    // Clamp the spectrum so the condition number stays moderate.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    Eigen::VectorXd ev = es.eigenvalues();
    const double top = ev.maxCoeff();
    Eigen::VectorXd clamped = ev.cwiseMax(top / cond_cap);
    return es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

TEST_CASE("product adds natural parameters") {
    auto a = ng({1.0, 0.0}, {1.0, 1.0});
    auto b = ng({0.0, 1.0}, {2.0, 2.0});
    auto c = bel::product(a, b);
    CHECK(c.r.isApprox(Eigen::Vector2d(1.0, 1.0)));
    CHECK(c.Q.isApprox(3.0 * Eigen::Matrix2d::Identity()));
}

TEST_CASE("zero Gaussian is the identity element") {
    auto a = ng({1.0, -2.0}, {0.5, 3.0});
    auto z = NaturalGaussian::zero(2);
    auto c = bel::product(a, z);
    CHECK(c.r.isApprox(a.r));
    CHECK(c.Q.isApprox(a.Q));
}

TEST_CASE("product with a negative site subtracts") {
    auto a = ng({2.0}, {4.0});
    auto b = ng({-2.0}, {-1.0});
    auto c = bel::product(a, b);
    CHECK(c.r[0] == doctest::Approx(0.0));
    CHECK(c.Q(0, 0) == doctest::Approx(3.0));
}

TEST_CASE("quotient inverts product") {
    auto a = ng({1.0, 0.0}, {1.0, 1.0});
    auto b = ng({0.0, 1.0}, {2.0, 2.0});
    auto q = bel::quotient(bel::product(a, b), b);
    CHECK(q.r.isApprox(a.r, 1e-12));
    CHECK(q.Q.isApprox(a.Q, 1e-12));

    auto self = bel::quotient(a, a);
    CHECK(self.r.norm() == doctest::Approx(0.0));
    CHECK(self.Q.norm() == doctest::Approx(0.0));

    auto c = bel::quotient(ng({1.0, 1.0}, {3.0, 3.0}), ng({0.0, 1.0}, {2.0, 2.0}));
    CHECK(c.r.isApprox(Eigen::Vector2d(1.0, 0.0)));
    CHECK(c.Q.isApprox(Eigen::Matrix2d::Identity()));
}

TEST_CASE("dimension mismatch throws") {
    CHECK_THROWS_AS(bel::product(ng({1.0}, {1.0}), ng({1.0, 1.0}, {1.0, 1.0})),
                    std::invalid_argument);
}

TEST_CASE("product and quotient form an abelian group on parameters") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> nd;
    auto rand_gauss = [&](int p) {
        Eigen::VectorXd r(p);
        Eigen::MatrixXd q(p, p);
        for (int i = 0; i < p; ++i) r[i] = nd(rng);
        for (int i = 0; i < p; ++i)
            for (int j = 0; j < p; ++j) q(i, j) = nd(rng);
        return NaturalGaussian(r, q);  // may be improper on purpose
    };
    for (int rep = 0; rep < 25; ++rep) {
        auto a = rand_gauss(3), b = rand_gauss(3), c = rand_gauss(3);
        auto ab_c = bel::product(bel::product(a, b), c);
        auto a_bc = bel::product(a, bel::product(b, c));
        CHECK((ab_c.r - a_bc.r).norm() <= 1e-12 * (1.0 + ab_c.r.norm()));
        CHECK((ab_c.Q - a_bc.Q).norm() <= 1e-12 * (1.0 + ab_c.Q.norm()));
        auto inv = bel::quotient(bel::product(a, b), b);
        CHECK((inv.r - a.r).norm() <= 1e-12 * (1.0 + a.r.norm()));
        CHECK((inv.Q - a.Q).norm() <= 1e-12 * (1.0 + a.Q.norm()));
    }
}

TEST_CASE("to_moments on scalar example") {
    auto g = ng({0.5}, {0.25});
    auto m = bel::to_moments(g);
    CHECK(m.mu[0] == doctest::Approx(2.0));
    CHECK(m.sigma(0, 0) == doctest::Approx(4.0));

    auto std2 = ng({0.0, 0.0}, {1.0, 1.0});
    auto m2 = bel::to_moments(std2);
    CHECK(m2.mu.norm() == doctest::Approx(0.0));
    CHECK(m2.sigma.isApprox(Eigen::Matrix2d::Identity()));
}

TEST_CASE("to_moments and from_moments are inverse maps") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> nd;
    for (int rep = 0; rep < 30; ++rep) {
        const int p = 1 + static_cast<int>(rng() % 6);
        Eigen::VectorXd r(p);
        for (int i = 0; i < p; ++i) r[i] = nd(rng);
        NaturalGaussian g(r, random_pd(p, rng));
        auto back = bel::from_moments(bel::to_moments(g));
        CHECK((back.r - g.r).norm() <= 1e-10 * (1.0 + g.r.norm()));
        CHECK((back.Q - g.Q).norm() <= 1e-10 * (1.0 + g.Q.norm()));

        MomentGaussian m(r, random_pd(p, rng));
        auto round = bel::to_moments(bel::from_moments(m));
        CHECK((round.mu - m.mu).norm() <= 1e-10 * (1.0 + m.mu.norm()));
        CHECK((round.sigma - m.sigma).norm() <= 1e-10 * (1.0 + m.sigma.norm()));
    }
}

TEST_CASE("to_moments rejects improper input") {
    auto g = ng({1.0}, {-2.0});
    CHECK_FALSE(g.proper());
    CHECK_THROWS_WITH_AS(bel::to_moments(g), doctest::Contains("improper"), std::runtime_error);
}

TEST_CASE("log_pdf of standard normals") {
    auto g1 = ng({0.0}, {1.0});
    CHECK(bel::log_pdf(g1, Eigen::VectorXd::Zero(1)) ==
          doctest::Approx(-0.5 * std::log(2.0 * EIGEN_PI)).epsilon(1e-12));

    auto g2 = ng({0.0, 0.0}, {1.0, 1.0});
    CHECK(bel::log_pdf(g2, Eigen::VectorXd::Zero(2)) ==
          doctest::Approx(-std::log(2.0 * EIGEN_PI)).epsilon(1e-12));

    // The N(0, 10^2) prior used throughout the regression experiments.
    auto gp = NaturalGaussian::isotropic(1, 100.0);
    CHECK(bel::log_pdf(gp, Eigen::VectorXd::Zero(1)) ==
          doctest::Approx(-0.5 * std::log(2.0 * EIGEN_PI) - std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("log_pdf integrates to one by trapezoid quadrature") {
    auto g = ng({0.6}, {0.8});  // mean 0.75, sd ~1.118
    const auto m = bel::to_moments(g);
    const double sd = std::sqrt(m.sigma(0, 0));
    const int steps = 20000;
    const double lo = m.mu[0] - 10.0 * sd, hi = m.mu[0] + 10.0 * sd;
    const double dx = (hi - lo) / steps;
    double acc = 0.0;
    Eigen::VectorXd x(1);
    for (int i = 0; i <= steps; ++i) {
        x[0] = lo + i * dx;
        const double f = std::exp(bel::log_pdf(g, x));
        acc += (i == 0 || i == steps) ? 0.5 * f : f;
    }
    CHECK(acc * dx == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("sampling is deterministic given the seed") {
    auto g = ng({0.3, -0.1}, {2.0, 0.7});
    auto rng1 = bel::make_rng(42);
    auto rng2 = bel::make_rng(42);
    auto s1 = bel::sample(g, 2, rng1);
    auto s2 = bel::sample(g, 2, rng2);
    CHECK(s1 == s2);

    auto rng3 = bel::make_rng(42);
    CHECK(bel::sample(g, 0, rng3).rows() == 0);
}

TEST_CASE("sample mean respects the CLT bound") {
    auto g = ng({0.0}, {1.0});
    auto rng = bel::make_rng(1234);
    const int n = 100000;
    auto s = bel::sample(g, n, rng);
    CHECK(std::abs(s.col(0).mean()) <= 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("sample rejects improper Gaussians") {
    auto g = ng({0.0}, {-1.0});
    auto rng = bel::make_rng(5);
    CHECK_THROWS_AS(bel::sample(g, 3, rng), std::runtime_error);
}

TEST_CASE("Q is symmetrized on construction") {
    Eigen::MatrixXd q(2, 2);
    q << 1.0, 0.3, 0.1, 2.0;
    NaturalGaussian g(Eigen::Vector2d(0.0, 0.0), q);
    CHECK(g.Q(0, 1) == doctest::Approx(0.2));
    CHECK((g.Q - g.Q.transpose()).norm() <= 1e-10);
}

TEST_CASE("from_moments rejects non-PD covariance") {
    Eigen::MatrixXd bad(2, 2);
    bad << 1.0, 2.0, 2.0, 1.0;  // indefinite
    CHECK_THROWS_AS(bel::from_moments(bel::MomentGaussian(Eigen::Vector2d(0, 0), bad)),
                    std::runtime_error);
}
