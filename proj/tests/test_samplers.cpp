#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "bel/samplers.hpp"
#include "bel/rng.hpp"

using bel::ChainConfig;
using bel::SampleMatrix;
using bel::Target;

namespace {

// A pure-Gaussian target through the prior-only seam.
Target gauss_seam(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma) {
    Target t;
    t.prior = bel::from_moments(bel::MomentGaussian(mu, sigma));
    t.prior_only = true;
    t.model.p = static_cast<int>(mu.size());
    return t;
}

Target gauss_seam_1d(double mu, double var) {
    Eigen::VectorXd m(1);
    m << mu;
    Eigen::MatrixXd s(1, 1);
    s << var;
    return gauss_seam(m, s);
}

double ks_against_normal(const Eigen::VectorXd& draws, double mu, double sd) {
    std::vector<double> v(draws.data(), draws.data() + draws.size());
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    double ks = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double f = 0.5 * std::erfc(-(v[i] - mu) / (sd * std::sqrt(2.0)));
        ks = std::max(ks, std::abs(f - (static_cast<double>(i) + 1.0) / n));
        ks = std::max(ks, std::abs(f - static_cast<double>(i) / n));
    }
    return ks;
}

// Integrated autocorrelation time by the initial positive sequence estimator.
double integrated_autocorr(const Eigen::VectorXd& x) {
    const Eigen::Index n = x.size();
    const double mean = x.mean();
    const Eigen::VectorXd c = x.array() - mean;
    const double var = c.squaredNorm() / n;
    double tau = 1.0;
    for (Eigen::Index lag = 1; lag < n / 2; ++lag) {
        const double rho = c.head(n - lag).dot(c.tail(n - lag)) / ((n - lag) * var);
        if (rho <= 0.0) break;
        tau += 2.0 * rho;
    }
    return tau;
}

}  // namespace

TEST_CASE("MH mean matches the seam target within the autocorrelation CLT bound") {
    auto t = gauss_seam_1d(1.5, 0.49);
    ChainConfig cfg;
    cfg.draws = 100000;
    cfg.burn_in = 2000;
    cfg.seed = 31;
    Eigen::VectorXd start(1);
    start << 1.5;
    auto chain = bel::mh_run(t, cfg, start);
    REQUIRE(chain.draws.rows() == cfg.draws);

    auto kept = bel::thin_and_pool(chain, cfg.burn_in, cfg.draws - cfg.burn_in);
    const double tau = integrated_autocorr(kept.draws.col(0));
    const double se = 0.7 * std::sqrt(tau / static_cast<double>(kept.draws.rows()));
    CHECK(std::abs(kept.draws.col(0).mean() - 1.5) <= 4.0 * se);
}

TEST_CASE("vanishing proposal scale drives the acceptance rate to one") {
    auto t = gauss_seam_1d(0.0, 1.0);
    ChainConfig cfg;
    cfg.draws = 2000;
    cfg.prelim_draws = 0;  // use proposal_cov directly
    cfg.proposal_cov = Eigen::MatrixXd::Constant(1, 1, 1e-12);
    cfg.shrinkage = 1.0;
    cfg.seed = 7;
    Eigen::VectorXd start(1);
    start << 0.3;
    auto chain = bel::mh_run(t, cfg, start);
    CHECK(chain.accept_rate >= 0.999);
}

TEST_CASE("fixed seeds reproduce chains bit for bit") {
    auto t = gauss_seam_1d(0.0, 1.0);
    ChainConfig cfg;
    cfg.draws = 5000;
    cfg.prelim_draws = 500;
    cfg.seed = 12345;
    Eigen::VectorXd start(1);
    start << 0.0;
    auto a = bel::mh_run(t, cfg, start);
    auto b = bel::mh_run(t, cfg, start);
    CHECK(a.draws == b.draws);
    CHECK(a.accept_rate == b.accept_rate);

    cfg.n_leapfrog = 10;
    cfg.step_size = 0.2;
    auto h1 = bel::hmc_run(t, cfg, start);
    auto h2 = bel::hmc_run(t, cfg, start);
    CHECK(h1.draws == h2.draws);
}

TEST_CASE("MH rejects an out-of-support start") {
    auto t = bel::make_target(bel::linreg_model(2), bel::generate("linreg2", 2));
    ChainConfig cfg;
    cfg.draws = 10;
    cfg.prelim_draws = 10;
    Eigen::VectorXd start(2);
    start << 400.0, 400.0;
    CHECK_THROWS_AS(bel::mh_run(t, cfg, start), std::runtime_error);
}

TEST_CASE("energy is conserved along minimal-norm trajectories on the seam") {
    auto t = gauss_seam_1d(0.0, 1.0);
    const Eigen::MatrixXd mass_inv = Eigen::MatrixXd::Identity(1, 1);
    auto rng = bel::make_rng(5);
    std::normal_distribution<double> nd;
    for (int rep = 0; rep < 20; ++rep) {
        Eigen::VectorXd x(1), p(1);
        x << nd(rng);
        p << nd(rng);
        double u0;
        Eigen::VectorXd g(1);
        REQUIRE(bel::neg_log_post_grad(t, x, u0, g));
        const double h0 = u0 + 0.5 * p.squaredNorm();
        Eigen::VectorXd x1 = x, p1 = p;
        REQUIRE(bel::minimal_norm_trajectory(t, mass_inv, 0.01, 50, x1, p1));
        double u1;
        REQUIRE(bel::neg_log_post_grad(t, x1, u1, g));
        const double h1 = u1 + 0.5 * p1.squaredNorm();
        CHECK(std::abs(h1 - h0) <= 1e-3);
    }
}

TEST_CASE("the integrator is time reversible") {
    Eigen::VectorXd mu(2);
    mu << 0.4, -0.2;
    Eigen::MatrixXd sigma(2, 2);
    sigma << 1.0, 0.3, 0.3, 0.8;
    auto t = gauss_seam(mu, sigma);
    const Eigen::MatrixXd mass_inv = Eigen::MatrixXd::Identity(2, 2);

    auto rng = bel::make_rng(17);
    std::normal_distribution<double> nd;
    for (int rep = 0; rep < 10; ++rep) {
        Eigen::VectorXd x(2), p(2);
        for (int j = 0; j < 2; ++j) x[j] = nd(rng), p[j] = nd(rng);
        Eigen::VectorXd xf = x, pf = p;
        REQUIRE(bel::minimal_norm_trajectory(t, mass_inv, 0.05, 30, xf, pf));
        pf = -pf;
        REQUIRE(bel::minimal_norm_trajectory(t, mass_inv, 0.05, 30, xf, pf));
        pf = -pf;
        CHECK((xf - x).norm() <= 1e-8);
        CHECK((pf - p).norm() <= 1e-8);
    }
}

TEST_CASE("HMC requires a smooth model") {
    auto t = bel::make_target(bel::quantile_model(0.7, 0.1, false), bel::generate("quantile", 3));
    ChainConfig cfg;
    Eigen::VectorXd start(2);
    start << 0.9, 1.0;
    CHECK_THROWS_WITH_AS(bel::hmc_run(t, cfg, start), doctest::Contains("gradient unavailable"),
                         std::runtime_error);
}

TEST_CASE("MH and HMC pass the Kolmogorov-Smirnov calibration on the seam") {
    auto t = gauss_seam_1d(0.7, 2.25);  // sd 1.5
    Eigen::VectorXd start(1);
    start << 0.7;

    ChainConfig mh_cfg;
    mh_cfg.draws = 100000;
    mh_cfg.burn_in = 5000;
    mh_cfg.seed = 101;
    auto mh = bel::thin_and_pool(bel::mh_run(t, mh_cfg, start), mh_cfg.burn_in, 95000);
    CHECK(ks_against_normal(mh.draws.col(0), 0.7, 1.5) <= 0.02);

    ChainConfig hmc_cfg;
    hmc_cfg.draws = 100000;
    hmc_cfg.burn_in = 1000;
    hmc_cfg.step_size = 0.5;
    hmc_cfg.n_leapfrog = 8;
    hmc_cfg.seed = 103;
    auto hmc = bel::thin_and_pool(bel::hmc_run(t, hmc_cfg, start), hmc_cfg.burn_in, 99000);
    CHECK(hmc.accept_rate >= 0.95);
    CHECK(ks_against_normal(hmc.draws.col(0), 0.7, 1.5) <= 0.02);
}

TEST_CASE("every emitted draw stays inside the support") {
    auto t = bel::make_target(bel::linreg_model(2), bel::generate("linreg2", 9));
    ChainConfig cfg;
    cfg.draws = 2000;
    cfg.prelim_draws = 1000;
    cfg.seed = 77;
    auto chain = bel::mh_run(t, cfg);
    for (Eigen::Index i = 0; i < chain.draws.rows(); i += 97)
        CHECK(std::isfinite(bel::log_post(t, chain.draws.row(i).transpose())));
}

TEST_CASE("thin_and_pool follows the documented index rules") {
    SampleMatrix sm;
    sm.draws.resize(10, 1);
    for (int i = 0; i < 10; ++i) sm.draws(i, 0) = i;

    auto all = bel::thin_and_pool(sm, 0, 10);
    CHECK(all.draws == sm.draws);

    auto one = bel::thin_and_pool(sm, 4, 1);
    CHECK(one.draws(0, 0) == 4.0);  // index burn_in

    auto sub = bel::thin_and_pool(sm, 1, 4);
    // Indices 1 + floor(9j/4): 1, 3, 5, 7 -> gaps all equal.
    CHECK(sub.draws(0, 0) == 1.0);
    CHECK(sub.draws(1, 0) == 3.0);
    CHECK(sub.draws(2, 0) == 5.0);
    CHECK(sub.draws(3, 0) == 7.0);

    std::vector<double> gaps;
    auto sub2 = bel::thin_and_pool(sm, 0, 7);
    for (int j = 1; j < 7; ++j) gaps.push_back(sub2.draws(j, 0) - sub2.draws(j - 1, 0));
    const auto [mn, mx] = std::minmax_element(gaps.begin(), gaps.end());
    CHECK(*mx - *mn <= 1.0);

    CHECK_THROWS_AS(bel::thin_and_pool(sm, 5, 6), std::invalid_argument);
}

TEST_CASE("chain csv round trip with sidecar") {
    SampleMatrix sm;
    sm.draws.resize(3, 2);
    sm.draws << 1.0, 2.0, 3.0, 4.0, 5.0, 6.5;
    sm.method = "mh";
    sm.seed = 9;
    sm.accept_rate = 0.4;
    const std::string path = "chain_test.csv";
    bel::save_chain_csv(sm, 1, path);
    auto back = bel::load_chain_csv(path);
    CHECK((back.draws - sm.draws).cwiseAbs().maxCoeff() <= 1e-15);
    std::remove(path.c_str());
    std::remove((path + ".json").c_str());
}
