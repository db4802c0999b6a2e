#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "bel/ep.hpp"
#include "bel/samplers.hpp"
#include "bel/rng.hpp"
#include "testutil.hpp"

using bel::MomentGaussian;
using bel::NaturalGaussian;
using bel::Target;
namespace ep = bel::ep;

namespace {

NaturalGaussian diag_gauss(std::initializer_list<double> r, std::initializer_list<double> q) {
    Eigen::VectorXd rv(static_cast<Eigen::Index>(r.size()));
    Eigen::Index i = 0;
    for (double v : r) rv[i++] = v;
    Eigen::MatrixXd qm = Eigen::MatrixXd::Zero(rv.size(), rv.size());
    i = 0;
    for (double v : q) qm(i, i) = v, ++i;
    return NaturalGaussian(rv, qm);
}

bel::LaplaceResult fake_laplace(const NaturalGaussian& g) {
    bel::LaplaceResult lap;
    lap.approx = g;
    lap.mode = bel::to_moments(g).mu;
    lap.converged = true;
    return lap;
}

// A Gaussian pseudo-site expressed through callbacks only (no exact-quadratic
// shortcut), to exercise the generic Laplace / IS paths.
ep::SiteTarget callback_site(const NaturalGaussian& g) {
    ep::SiteTarget s;
    s.log_f = [g](const Eigen::VectorXd& x) { return bel::log_density_unnormalized(g, x); };
    s.value_grad = [g](const Eigen::VectorXd& x)
        -> std::optional<std::pair<double, Eigen::VectorXd>> {
        return std::make_pair(bel::log_density_unnormalized(g, x),
                              (g.r - g.Q * x).eval());
    };
    return s;
}

ep::SiteTarget constant_site(Eigen::Index p) {
    ep::SiteTarget s;
    s.log_f = [](const Eigen::VectorXd&) { return 0.0; };
    s.value_grad = [p](const Eigen::VectorXd&)
        -> std::optional<std::pair<double, Eigen::VectorXd>> {
        return std::make_pair(0.0, Eigen::VectorXd::Zero(p).eval());
    };
    return s;
}

Target linreg2_target(std::uint64_t seed = 1) {
    return bel::make_target(bel::linreg_model(2), bel::generate("linreg2", seed));
}

}  // namespace

TEST_CASE("init_from_laplace splits the natural parameters into equal shares") {
    auto lap = fake_laplace(diag_gauss({1.0, -0.5}, {4.0, 2.0}));

    auto st6 = ep::init_from_laplace(lap, 6);
    CHECK(st6.sites.size() == 6);
    for (const auto& s : st6.sites) CHECK(s.Q.isApprox(lap.approx.Q / 6.0, 1e-14));
    Eigen::VectorXd r_sum = Eigen::VectorXd::Zero(2);
    Eigen::MatrixXd q_sum = Eigen::MatrixXd::Zero(2, 2);
    for (const auto& s : st6.sites) {
        r_sum += s.r;
        q_sum += s.Q;
    }
    CHECK((r_sum - lap.approx.r).norm() <= 1e-12);
    CHECK((q_sum - lap.approx.Q).norm() <= 1e-12);
    CHECK((st6.global.r - lap.approx.r).norm() <= 1e-12);

    auto st1 = ep::init_from_laplace(lap, 1);
    CHECK(st1.sites.size() == 1);
    CHECK(st1.sites[0].Q.isApprox(st1.global.Q, 1e-14));

    auto bad = lap;
    bad.converged = false;
    CHECK_THROWS_AS(ep::init_from_laplace(bad, 4), std::invalid_argument);
}

TEST_CASE("cavity divides one site out of the global approximation") {
    auto lap = fake_laplace(diag_gauss({2.0, 1.0}, {6.0, 4.0}));
    auto st = ep::init_from_laplace(lap, 2);
    const NaturalGaussian cav = ep::cavity(st, 0);
    CHECK(cav.Q.isApprox((0.5 * st.global.Q).eval(), 1e-12));
    CHECK(cav.r.isApprox((0.5 * st.global.r).eval(), 1e-12));

    const NaturalGaussian back = bel::product(cav, st.sites[0]);
    CHECK(back.r.isApprox(st.global.r, 1e-12));
    CHECK(back.Q.isApprox(st.global.Q, 1e-12));
}

TEST_CASE("tilted_laplace of a constant site returns the cavity moments") {
    const NaturalGaussian cav = diag_gauss({0.8, -0.4}, {2.0, 5.0});
    auto res = ep::tilted_laplace(constant_site(2), cav);
    REQUIRE(res.ok);
    const MomentGaussian want = bel::to_moments(cav);
    CHECK((res.moments.mu - want.mu).norm() <= 1e-9);
    CHECK((res.moments.sigma - want.sigma).norm() <= 1e-7);
}

TEST_CASE("tilted_laplace of a Gaussian pseudo-site reproduces the product") {
    const NaturalGaussian cav = diag_gauss({0.5, 0.2}, {3.0, 1.5});
    const NaturalGaussian site = diag_gauss({-0.3, 0.9}, {1.0, 2.0});
    auto res = ep::tilted_laplace(callback_site(site), cav);
    REQUIRE(res.ok);
    const MomentGaussian want = bel::to_moments(bel::product(cav, site));
    CHECK((res.moments.mu - want.mu).norm() <= 1e-8);
    CHECK((res.moments.sigma - want.sigma).norm() <= 1e-6);
}

TEST_CASE("tilted_laplace on a real likelihood site drives the gradient to zero") {
    auto t = linreg2_target(3);
    auto lap = bel::map_newton(t);
    REQUIRE(lap.converged);
    auto sites = ep::build_sites(t, 6);
    auto st = ep::init_from_laplace(lap, 6);
    for (int i : {1, 3, 5}) {
        const NaturalGaussian cav = ep::cavity(st, i);
        REQUIRE(cav.proper());
        auto res = ep::tilted_laplace(sites[static_cast<std::size_t>(i)], cav);
        REQUIRE(res.ok);
        auto vg = sites[static_cast<std::size_t>(i)].value_grad(res.moments.mu);
        REQUIRE(vg.has_value());
        const Eigen::VectorXd tilted_grad = (cav.r - cav.Q * res.moments.mu) + vg->second;
        CHECK(tilted_grad.norm() <= 1e-8);
    }
}

TEST_CASE("tilted_is with a constant site and cavity proposal is plain Monte Carlo") {
    const NaturalGaussian cav = diag_gauss({1.2, -0.6}, {2.0, 3.0});
    auto rng = bel::make_rng(99);
    const int L = 5000;
    auto res = ep::tilted_is(constant_site(2), cav, cav, L, rng);
    CHECK(res.ess == doctest::Approx(static_cast<double>(L)));  // equal weights exactly

    const MomentGaussian cm = bel::to_moments(cav);
    for (int j = 0; j < 2; ++j) {
        const double se = std::sqrt(cm.sigma(j, j) / L);
        CHECK(std::abs(res.moments.mu[j] - cm.mu[j]) <= 4.0 * se);
    }
}

TEST_CASE("tilted_is with one dominating weight degenerates gracefully") {
    const NaturalGaussian cav = diag_gauss({0.0}, {1.0});
    // A razor-thin site factor concentrates all weight on the draw nearest its
    // center; every other weight underflows to zero.
    ep::SiteTarget razor;
    razor.log_f = [](const Eigen::VectorXd& x) {
        return -5e7 * (x[0] - 0.3) * (x[0] - 0.3);
    };
    auto rng = bel::make_rng(7);
    auto res = ep::tilted_is(razor, cav, cav, 100, rng);
    CHECK(res.ess == doctest::Approx(1.0));
    CHECK(res.moments.sigma.norm() <= 1e-12);

    // The surviving draw is the one closest to 0.3.
    auto rng2 = bel::make_rng(7);
    const Eigen::MatrixXd draws = bel::sample(cav, 100, rng2);
    Eigen::Index best = 0;
    (draws.col(0).array() - 0.3).abs().minCoeff(&best);
    CHECK(res.moments.mu[0] == doctest::Approx(draws(best, 0)));
}

TEST_CASE("tilted_is rejects a disjoint proposal") {
    const NaturalGaussian cav = diag_gauss({0.0}, {1.0});
    ep::SiteTarget wall;
    wall.log_f = [](const Eigen::VectorXd&) { return -std::numeric_limits<double>::infinity(); };
    auto rng = bel::make_rng(3);
    CHECK_THROWS_WITH_AS(ep::tilted_is(wall, cav, cav, 50, rng), doctest::Contains("disjoint"),
                         std::runtime_error);
}

TEST_CASE("undamped EP on Gaussian pseudo-sites reaches the product in two cycles") {
    // Three quadratic sites; the EP fixed point is their exact product.
    std::vector<NaturalGaussian> factors = {diag_gauss({0.4, 0.0}, {1.0, 0.5}),
                                            diag_gauss({-0.2, 0.3}, {0.8, 1.2}),
                                            diag_gauss({0.1, -0.5}, {0.6, 0.9})};
    NaturalGaussian product_all = factors[0];
    for (std::size_t i = 1; i < factors.size(); ++i) product_all = bel::product(product_all, factors[i]);

    std::vector<ep::SiteTarget> sites;
    for (const auto& f : factors) {
        ep::SiteTarget s;
        s.quadratic = f;
        s.log_f = [f](const Eigen::VectorXd& x) { return bel::log_density_unnormalized(f, x); };
        sites.push_back(std::move(s));
    }

    ep::EpConfig cfg;
    cfg.num_sites = 3;
    cfg.damping = 1.0;  // undamped
    cfg.warmup_cycles = 10;
    cfg.max_cycles = 10;
    cfg.convergence_tol = 1e-10;
    cfg.is_samples = 64;

    // A deliberately wrong but proper start.
    auto st = ep::init_from_laplace(fake_laplace(diag_gauss({0.0, 0.0}, {5.0, 5.0})), 3);
    ep::Runner runner(sites, st, cfg);
    while (!runner.done()) runner.cycle();

    CHECK(runner.state().cycle <= 2);
    CHECK((runner.state().global.r - product_all.r).norm() <= 1e-8);
    CHECK((runner.state().global.Q - product_all.Q).norm() <= 1e-8);
}

TEST_CASE("an improper cavity falls back to sampling with the global proposal") {
    // One site holds more precision than the global approximation, so its
    // cavity is improper; the cycle must still commit through the IS path.
    ep::EpConfig cfg;
    cfg.num_sites = 2;
    cfg.damping = 0.5;
    cfg.warmup_cycles = 5;
    cfg.max_cycles = 5;
    cfg.is_samples = 2000;
    cfg.seed = 11;

    const NaturalGaussian f0 = diag_gauss({0.5}, {1.0});
    const NaturalGaussian f1 = diag_gauss({-0.2}, {0.7});
    std::vector<ep::SiteTarget> sites = {callback_site(f0), callback_site(f1)};

    ep::EpState st;
    st.sites = {diag_gauss({0.0}, {3.0}), diag_gauss({0.0}, {-0.5})};
    st.global = bel::product(st.sites[0], st.sites[1]);  // proper: Q = 2.5
    REQUIRE(st.global.proper());
    REQUIRE_FALSE(ep::cavity(st, 0).proper());

    ep::Runner runner(sites, st, cfg);
    runner.cycle();
    CHECK(runner.state().cycle == 1);
    CHECK(runner.state().global.proper());
    // The improper-cavity site went through importance sampling.
    CHECK(std::isfinite(runner.state().last_ess[0]));
}

TEST_CASE("EPEL on linreg2 stays consistent and lands near the Laplace fit") {
    auto t = linreg2_target(5);
    auto lap = bel::map_newton(t);
    REQUIRE(lap.converged);

    ep::EpConfig cfg;
    cfg.num_sites = 6;
    cfg.damping = 0.2;
    cfg.warmup_cycles = 40;  // Laplace-phase only: deterministic and fast
    cfg.max_cycles = 40;
    cfg.convergence_tol = 1e-6;
    cfg.seed = 2;

    auto [approx, trace] = ep::run(t, cfg, lap);
    CHECK(approx.proper());
    CHECK(static_cast<int>(trace.size()) <= cfg.max_cycles);

    const Eigen::VectorXd ep_mean = bel::to_moments(approx).mu;
    CHECK((ep_mean - lap.mode).cwiseAbs().maxCoeff() <= 0.05);
}

TEST_CASE("every committed cycle keeps global equal to the site product") {
    auto t = linreg2_target(8);
    auto lap = bel::map_newton(t);
    ep::EpConfig cfg;
    cfg.num_sites = 4;
    cfg.damping = 0.3;
    cfg.warmup_cycles = 3;
    cfg.max_cycles = 8;  // crosses the warmup -> IS boundary
    cfg.is_samples = 500;
    cfg.seed = 21;

    ep::Runner runner(ep::build_sites(t, cfg.num_sites), ep::init_from_laplace(lap, cfg.num_sites),
                      cfg);
    int committed = 0;
    while (!runner.done()) {
        runner.cycle();
        const auto& st = runner.state();
        if (st.cycle == committed) continue;  // skipped commit
        committed = st.cycle;
        Eigen::VectorXd r = Eigen::VectorXd::Zero(2);
        Eigen::MatrixXd q = Eigen::MatrixXd::Zero(2, 2);
        for (const auto& s : st.sites) {
            r += s.r;
            q += s.Q;
        }
        CHECK((r - st.global.r).norm() <= 1e-8);
        CHECK((q - st.global.Q).norm() <= 1e-8);
        CHECK(st.global.proper());
    }
    CHECK(static_cast<int>(runner.trace().size()) == runner.state().cycle);
    // IS cycles after warmup have recorded effective sample sizes.
    bool saw_ess = false;
    for (const auto& rec : runner.trace())
        for (double e : rec.site_ess)
            if (std::isfinite(e)) saw_ess = true;
    CHECK(saw_ess);
}

TEST_CASE("site assignment permutation moves the converged mean only slightly") {
    auto t = linreg2_target(13);
    auto lap = bel::map_newton(t);

    ep::EpConfig cfg;
    cfg.num_sites = 6;
    cfg.damping = 0.3;
    cfg.warmup_cycles = 60;
    cfg.max_cycles = 60;
    cfg.convergence_tol = 1e-7;
    auto [a, tr_a] = ep::run(t, cfg, lap);

    auto t_perm = t;
    std::mt19937_64 rng = bel::make_rng(55);
    std::vector<Eigen::Index> perm(t.data.n());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (Eigen::Index i = 0; i < t.data.n(); ++i)
        t_perm.data.observations.row(i) = t.data.observations.row(perm[i]);
    auto lap_perm = bel::map_newton(t_perm);
    auto [b, tr_b] = ep::run(t_perm, cfg, lap_perm);

    const Eigen::VectorXd mean_a = bel::to_moments(a).mu;
    const Eigen::VectorXd mean_b = bel::to_moments(b).mu;
    CHECK((mean_a - mean_b).cwiseAbs().maxCoeff() <= 0.02);
}

TEST_CASE("config validation rejects out-of-range settings") {
    ep::EpConfig cfg;
    cfg.num_sites = 200;
    CHECK_THROWS_AS(cfg.validate(100, 2), std::invalid_argument);
    cfg.num_sites = 6;
    cfg.damping = 0.0;
    CHECK_THROWS_AS(cfg.validate(100, 2), std::invalid_argument);
    cfg.damping = 1.0;  // undamped is allowed
    CHECK_NOTHROW(cfg.validate(100, 2));
    cfg.is_samples = 4;
    CHECK_THROWS_AS(cfg.validate(100, 2), std::invalid_argument);
}

TEST_CASE("converged EPEL mean tracks a long MH gold standard") {
    auto t = linreg2_target(20);
    auto lap = bel::map_newton(t);
    REQUIRE(lap.converged);

    ep::EpConfig cfg;
    cfg.is_samples = 2000;
    cfg.max_cycles = 60;  // 50 warm-up cycles + a short IS tail
    cfg.seed = 4;
    auto [approx, trace] = ep::run(t, cfg, lap);

    bel::ChainConfig gold_cfg;
    gold_cfg.draws = 200000;
    gold_cfg.seed = 6;
    auto gold = bel::mh_run(t, gold_cfg, lap.mode);
    const Eigen::VectorXd gold_mean =
        gold.draws.bottomRows(gold.draws.rows() - gold_cfg.burn_in).colwise().mean();

    const Eigen::VectorXd ep_mean = bel::to_moments(approx).mu;
    CHECK((ep_mean - gold_mean).cwiseAbs().maxCoeff() <= 0.05);
}

TEST_CASE("a cycle where every site fails raises an error") {
    ep::SiteTarget wall;
    wall.log_f = [](const Eigen::VectorXd&) { return -std::numeric_limits<double>::infinity(); };

    ep::EpConfig cfg;
    cfg.num_sites = 1;
    cfg.damping = 0.5;
    cfg.warmup_cycles = 0;
    cfg.max_cycles = 3;
    cfg.is_samples = 100;

    ep::EpState st;
    st.sites = {diag_gauss({0.0}, {1.0})};
    st.global = st.sites[0];
    ep::Runner runner({wall}, st, cfg);
    CHECK_THROWS_WITH_AS(runner.cycle(), doctest::Contains("all sites failed"),
                         std::runtime_error);
}
