#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "bel/harness.hpp"
#include "bel/json_io.hpp"
#include "bel/rng.hpp"

namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_fit(const std::string& experiment, const std::string& method, std::uint64_t seed,
            const std::string& out_dir, const std::string& config_path,
            const std::string& data_path) {
    fs::create_directories(out_dir);
    bel::ExperimentSpec spec = bel::default_spec(experiment);
    if (!data_path.empty()) spec.data_path = data_path;
    if (!config_path.empty()) {
        const std::string text = read_file(config_path);
        spec.ep_cfg = bel::ep_config_from_json(text, spec.ep_cfg);
        spec.mh_cfg = bel::chain_config_from_json(text, "mh", spec.mh_cfg);
        spec.hmc_cfg = bel::chain_config_from_json(text, "hmc", spec.hmc_cfg);
        spec.vb_cfg = bel::vb_config_from_json(text, spec.vb_cfg);
        if (text.find("smooth_quantile") != std::string::npos)
            spec.smooth_quantile = nlohmann::json::parse(text).value("smooth_quantile", true);
    }

    const auto targets = bel::build_targets(experiment, bel::derive_seed(seed, 1), spec.data_path);
    const bel::Target& grad_target = targets.gradient_target();
    const auto out = [&](const std::string& name) { return (fs::path(out_dir) / name).string(); };

    if (method == "laplace") {
        const auto lap = bel::map_newton(grad_target);
        bel::save_laplace_json(lap, out("laplace.json"));
        std::cout << "laplace: converged=" << lap.converged << " iters=" << lap.newton_iters
                  << " seconds=" << lap.seconds << "\n";
    } else if (method == "epel") {
        bel::ep::EpConfig cfg = spec.ep_cfg;
        cfg.seed = seed;
        const auto lap = bel::map_newton(grad_target);
        const bel::Target& run_target =
            spec.smooth_quantile ? grad_target : targets.primary;
        auto [approx, trace] = bel::ep::run(run_target, cfg, lap);
        bel::save_gaussian_json(approx, out("epel_approx.json"));
        bel::save_ep_trace_jsonl(trace, out("epel_trace.jsonl"));
        std::cout << "epel: cycles=" << trace.size()
                  << " final_max_update=" << (trace.empty() ? 0.0 : trace.back().max_update)
                  << "\n";
    } else if (method == "vb") {
        bel::VbConfig cfg = spec.vb_cfg;
        cfg.seed = seed;
        auto [approx, trace] = bel::vb_run(grad_target, cfg, bel::map_newton(grad_target));
        bel::save_gaussian_json(approx, out("vb_approx.json"));
        bel::save_vb_trace_jsonl(trace, out("vb_trace.jsonl"));
        std::cout << "vb: steps=" << trace.size() << "\n";
    } else if (method == "mh" || method == "hmc") {
        bel::ChainConfig cfg = method == "mh" ? spec.mh_cfg : spec.hmc_cfg;
        cfg.seed = seed;
        const Eigen::VectorXd start = bel::map_newton(grad_target).mode;
        const bel::SampleMatrix chain = method == "mh"
                                            ? bel::mh_run(targets.primary, cfg, start)
                                            : bel::hmc_run(grad_target, cfg, start);
        bel::save_chain_csv(chain, cfg.burn_in, out(method + "_chain.csv"));
        std::cout << method << ": draws=" << chain.draws.rows()
                  << " accept_rate=" << chain.accept_rate << " seconds=" << chain.seconds << "\n";
    } else {
        throw std::runtime_error("unknown method '" + method + "'");
    }
    return 0;
}

int run_gold(const std::string& experiment, const std::string& method, int draws,
             std::uint64_t seed, const std::string& out_file, const std::string& data_path) {
    bel::ExperimentSpec spec = bel::default_spec(experiment);
    if (!data_path.empty()) spec.data_path = data_path;
    const auto targets = bel::build_targets(experiment, bel::derive_seed(seed, 1), spec.data_path);
    bel::ChainConfig cfg = method == "mh" ? spec.mh_cfg : spec.hmc_cfg;
    cfg.seed = seed;
    cfg.draws = draws;
    const Eigen::VectorXd start = bel::map_newton(targets.gradient_target()).mode;
    bel::SampleMatrix chain;
    if (method == "mh") {
        chain = bel::mh_run(targets.primary, cfg, start);
    } else if (method == "hmc") {
        chain = bel::hmc_run(targets.primary.model.smooth ? targets.primary
                                                          : targets.gradient_target(),
                             cfg, start);
    } else {
        throw std::runtime_error("gold method must be mh or hmc");
    }
    bel::save_chain_csv(chain, cfg.burn_in, out_file);
    std::cout << "gold: method=" << method << " draws=" << chain.draws.rows()
              << " accept_rate=" << chain.accept_rate << " seconds=" << chain.seconds << "\n";
    return 0;
}

int run_nbp(const std::string& a_path, const std::string& b_path, double quantile, int reps,
            int max_pool, bool standardize, int threshold) {
    bel::SampleMatrix a = bel::load_chain_csv(a_path);
    bel::SampleMatrix b = bel::load_chain_csv(b_path);
    const int pool = std::min<int>({max_pool, static_cast<int>(a.draws.rows()),
                                    static_cast<int>(b.draws.rows())});
    a = bel::thin_and_pool(a, 0, pool);
    b = bel::thin_and_pool(b, 0, pool);
    const auto res = bel::cross_match(a, b, quantile, reps, 2024, threshold, standardize);
    std::cout << "{\"cross_count\": " << res.cross_count << ", \"total_pairs\": " << res.total_pairs
              << ", \"threshold\": " << res.threshold << ", \"pass\": " << (res.pass ? "true" : "false")
              << "}\n";
    return 0;
}

int run_experiment_cmd(const std::string& spec_path, const std::string& out_dir, bool paper_scale) {
    bel::ExperimentSpec spec = bel::spec_from_json_file(spec_path);
    if (paper_scale) bel::apply_paper_scale(spec);
    fs::create_directories(out_dir);
    const auto rows = bel::run_experiment(spec);
    const auto out = [&](const std::string& name) { return (fs::path(out_dir) / name).string(); };
    bel::save_results_csv(rows, out("results.csv"));
    bel::save_summary_csv(bel::summarize(rows), out("summary.csv"));
    bel::save_manifest_json(spec, out("manifest.json"));
    int evaluated = 0;
    for (const auto& r : rows) evaluated += r.nbp_count >= 0;
    std::cout << "experiment: rows=" << rows.size() << " evaluated=" << evaluated << " -> "
              << out_dir << "\n";
    return 0;
}

int run_plot(const std::string& in_dir, const std::string& out_file, int threshold) {
    const auto summary_path = (fs::path(in_dir) / "summary.csv").string();
    const auto rows = bel::load_summary_csv(summary_path);
    bel::plot_summary_svg(rows, threshold, out_file);
    std::cout << "plot: " << rows.size() << " summary rows -> " << out_file << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian empirical likelihood posteriors: EP, Laplace, VB, HMC, MH, and the cross-match metric"};
    app.require_subcommand(1);

    std::string experiment, method, out_path, config_path, data_path, a_path, b_path, spec_path;
    std::uint64_t seed = 0;
    int draws = 1000000, reps = 100000, max_pool = 1000, threshold = -1;
    double quantile = 0.05;
    bool standardize = false, paper_scale = false;

    auto* fit = app.add_subcommand("fit", "Fit one method on one experiment");
    fit->add_option("--experiment", experiment, "linreg2|linreg10|quantile|kyphosis|gee")->required();
    fit->add_option("--method", method, "epel|laplace|vb|hmc|mh")->required();
    fit->add_option("--seed", seed, "random seed");
    fit->add_option("--out", out_path, "output directory")->required();
    fit->add_option("--config", config_path, "JSON config overrides (ep/mh/hmc/vb sections)");
    fit->add_option("--data", data_path, "kyphosis CSV path");

    auto* gold = app.add_subcommand("gold", "Run a gold-standard chain");
    gold->add_option("--experiment", experiment)->required();
    gold->add_option("--method", method, "mh|hmc")->required();
    gold->add_option("--draws", draws, "chain length");
    gold->add_option("--seed", seed);
    gold->add_option("--out", out_path, "output CSV file")->required();
    gold->add_option("--data", data_path);

    auto* nbp = app.add_subcommand("nbp", "Cross-match two sample CSVs");
    nbp->add_option("--a", a_path)->required();
    nbp->add_option("--b", b_path)->required();
    nbp->add_option("--quantile", quantile, "null quantile for the threshold");
    nbp->add_option("--reps", reps, "null simulation replications");
    nbp->add_option("--max-pool", max_pool, "thin each sample to at most this many rows");
    nbp->add_option("--threshold", threshold, "skip the null simulation and use this cut-off");
    nbp->add_flag("--standardize", standardize, "standardize pooled coordinates before matching");

    auto* exp = app.add_subcommand("experiment", "Run the full cost-accuracy protocol");
    exp->add_option("--spec", spec_path, "experiment spec JSON")->required();
    exp->add_option("--out", out_path, "output directory")->required();
    exp->add_flag("--paper-scale", paper_scale, "50 reps and full-length gold standards");

    auto* plot = app.add_subcommand("plot", "Render summary.csv as an SVG chart");
    plot->add_option("--in", a_path, "experiment output directory")->required();
    plot->add_option("--out", out_path, "SVG file")->required();
    plot->add_option("--threshold", threshold, "threshold line (default 474)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*fit) return run_fit(experiment, method, seed, out_path, config_path, data_path);
        if (*gold) return run_gold(experiment, method, draws, seed, out_path, data_path);
        if (*nbp) return run_nbp(a_path, b_path, quantile, reps, max_pool, standardize, threshold);
        if (*exp) return run_experiment_cmd(spec_path, out_path, paper_scale);
        if (*plot) return run_plot(a_path, out_path, threshold < 0 ? 474 : threshold);
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
    return 0;
}
