#include "bel/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "bel/json_io.hpp"
#include "bel/rng.hpp"

namespace bel {

namespace {

using nlohmann::json;

constexpr const char* kVersion = "bel 0.1.0";

int method_id(const std::string& method) {
    if (method == "epel") return 1;
    if (method == "laplace") return 2;
    if (method == "vb") return 3;
    if (method == "hmc") return 4;
    if (method == "mh") return 5;
    throw std::invalid_argument("unknown method '" + method + "'");
}

// State captured at one checkpoint; either a Gaussian approximation or a
// cumulative chain length.
struct Snapshot {
    double checkpoint = 0.0;
    std::optional<NaturalGaussian> gauss;
    int chain_upto = -1;
    std::string extra;
};

struct MethodOutput {
    std::vector<Snapshot> snaps;
    std::optional<SampleMatrix> chain;
    int chain_burn_in = 0;
    std::string skip_reason;
};

struct Driver {
    std::function<void()> init;
    std::function<void()> step;
    std::function<bool()> done;
    std::function<Snapshot(double)> capture;
    std::function<void(MethodOutput&)> finish;
};

Driver laplace_driver(const Target& target, std::shared_ptr<LaplaceResult> lap) {
    Driver d;
    d.init = [] {};
    d.step = [&target, lap] { *lap = map_newton(target); };
    d.done = [lap] { return lap->converged || lap->newton_iters > 0; };
    d.capture = [lap](double ck) {
        Snapshot s;
        s.checkpoint = ck;
        if (lap->approx.dim() > 0) {
            s.gauss = lap->approx;
            s.extra = "iters=" + std::to_string(lap->newton_iters);
        } else {
            s.extra = "laplace not yet computed";
        }
        return s;
    };
    d.finish = [](MethodOutput&) {};
    return d;
}

Driver epel_driver(const Target& run_target, const Target& init_target, const ep::EpConfig& cfg,
                   std::shared_ptr<ep::Runner>& runner) {
    Driver d;
    d.init = [&run_target, &init_target, cfg, &runner] {
        ep::EpConfig c = cfg;
        if (!run_target.model.smooth) c.is_only = true;
        c.validate(run_target.data.n(), run_target.p());
        const LaplaceResult lap = map_newton(init_target);
        runner = std::make_shared<ep::Runner>(ep::build_sites(run_target, c.num_sites),
                                              ep::init_from_laplace(lap, c.num_sites), c);
    };
    d.step = [&runner] { runner->cycle(); };
    d.done = [&runner] { return runner && runner->done(); };
    d.capture = [&runner](double ck) {
        Snapshot s;
        s.checkpoint = ck;
        s.gauss = runner->state().global;
        s.extra = "cycles=" + std::to_string(runner->state().cycle);
        return s;
    };
    d.finish = [](MethodOutput&) {};
    return d;
}

Driver vb_driver(const Target& target, const VbConfig& cfg, std::shared_ptr<VbOptimizer>& opt) {
    Driver d;
    d.init = [&target, cfg, &opt] {
        const LaplaceResult lap = map_newton(target);
        opt = std::make_shared<VbOptimizer>(target, cfg, lap);
    };
    d.step = [&opt] { opt->step(50); };
    d.done = [&opt] { return opt && opt->done(); };
    d.capture = [&opt](double ck) {
        Snapshot s;
        s.checkpoint = ck;
        s.gauss = opt->approx();
        s.extra = "steps=" + std::to_string(opt->steps_done());
        return s;
    };
    d.finish = [](MethodOutput&) {};
    return d;
}

template <typename Sampler>
Driver chain_driver(const Target& target, const Target& start_target, const ChainConfig& cfg,
                    int step_chunk, std::shared_ptr<Sampler>& sampler) {
    Driver d;
    d.init = [&target, &start_target, cfg, &sampler] {
        const Eigen::VectorXd start = map_newton(start_target).mode;
        sampler = std::make_shared<Sampler>(target, cfg, start);
    };
    d.step = [&sampler, step_chunk] { sampler->step(step_chunk); };
    d.done = [&sampler, cfg] { return sampler && sampler->drawn() >= cfg.draws; };
    d.capture = [&sampler](double ck) {
        Snapshot s;
        s.checkpoint = ck;
        s.chain_upto = sampler->drawn();
        s.extra = "draws=" + std::to_string(sampler->drawn());
        return s;
    };
    d.finish = [&sampler, cfg](MethodOutput& out) {
        out.chain = sampler->result();
        out.chain_burn_in = cfg.burn_in;
    };
    return d;
}

MethodOutput run_method(const std::string& method, const ExperimentSpec& spec,
                        const ExperimentTargets& targets, int rep, const Clock& clock) {
    MethodOutput out;
    const bool nonsmooth_quantile = spec.name == "quantile" && !spec.smooth_quantile;
    if ((method == "hmc" || method == "vb") && nonsmooth_quantile) {
        out.skip_reason = "skipped: non-smooth quantile target without smoothing";
        for (double ck : spec.checkpoint_schedule) {
            Snapshot s;
            s.checkpoint = ck;
            s.extra = out.skip_reason;
            out.snaps.push_back(std::move(s));
        }
        return out;
    }

    const std::uint64_t seed = derive_seed(spec.master_seed, static_cast<std::uint64_t>(rep),
                                           static_cast<std::uint64_t>(10 + method_id(method)));

    // Which target the method itself uses: gradient-based methods take the
    // smoothed surrogate where one exists; mh always samples the exact target;
    // epel follows the smooth_quantile switch.
    const Target& grad_target = targets.gradient_target();
    const Target& mh_target = targets.primary;
    const Target& epel_target = nonsmooth_quantile ? targets.primary : grad_target;

    std::shared_ptr<LaplaceResult> lap = std::make_shared<LaplaceResult>();
    std::shared_ptr<ep::Runner> ep_runner;
    std::shared_ptr<VbOptimizer> vb_opt;
    std::shared_ptr<MhSampler> mh_sampler;
    std::shared_ptr<HmcSampler> hmc_sampler;

    Driver driver;
    if (method == "laplace") {
        driver = laplace_driver(grad_target, lap);
    } else if (method == "epel") {
        ep::EpConfig cfg = spec.ep_cfg;
        cfg.seed = seed;
        driver = epel_driver(epel_target, grad_target, cfg, ep_runner);
    } else if (method == "vb") {
        VbConfig cfg = spec.vb_cfg;
        cfg.seed = seed;
        driver = vb_driver(grad_target, cfg, vb_opt);
    } else if (method == "mh") {
        ChainConfig cfg = spec.mh_cfg;
        cfg.seed = seed;
        cfg.draws = std::max(cfg.draws, 10000000);  // the budget is the binding cap
        driver = chain_driver(mh_target, grad_target, cfg, 500, mh_sampler);
    } else if (method == "hmc") {
        ChainConfig cfg = spec.hmc_cfg;
        cfg.seed = seed;
        cfg.draws = std::max(cfg.draws, 10000000);
        driver = chain_driver(grad_target, grad_target, cfg, 20, hmc_sampler);
    } else {
        throw std::invalid_argument("unknown method '" + method + "'");
    }

    double used = 0.0;
    auto timed = [&](const std::function<void()>& fn) {
        const double t0 = clock();
        fn();
        used += clock() - t0;
    };

    const auto& grid = spec.checkpoint_schedule;
    try {
        timed(driver.init);
        std::size_t ck = 0;
        while (ck < grid.size()) {
            if (used >= grid[ck]) {
                out.snaps.push_back(driver.capture(grid[ck]));
                ++ck;
                continue;
            }
            if (driver.done() || used >= spec.budget_seconds) break;
            timed(driver.step);
        }
        for (; ck < grid.size(); ++ck) out.snaps.push_back(driver.capture(grid[ck]));
        driver.finish(out);
    } catch (const std::exception& err) {
        out.skip_reason = std::string("skipped: ") + err.what();
        out.snaps.clear();
        for (double c : grid) {
            Snapshot s;
            s.checkpoint = c;
            s.extra = out.skip_reason;
            out.snaps.push_back(std::move(s));
        }
    }
    return out;
}

SampleMatrix build_gold(const ExperimentSpec& spec, const ExperimentTargets& targets, int rep) {
    const std::uint64_t seed =
        derive_seed(spec.master_seed, static_cast<std::uint64_t>(rep), 2);
    const Eigen::VectorXd start = map_newton(targets.gradient_target()).mode;
    SampleMatrix chain;
    int burn_in = 0;
    if (spec.gold.method == "mh") {
        ChainConfig cfg = spec.mh_cfg;
        cfg.seed = seed;
        cfg.draws = spec.gold.draws;
        chain = mh_run(targets.primary, cfg, start);
        burn_in = cfg.burn_in;
    } else if (spec.gold.method == "hmc") {
        if (!targets.primary.model.smooth)
            throw std::invalid_argument("gold: hmc requires a smooth target; use mh");
        ChainConfig cfg = spec.hmc_cfg;
        cfg.seed = seed;
        cfg.draws = spec.gold.draws;
        chain = hmc_run(targets.primary, cfg, start);
        burn_in = cfg.burn_in;
    } else {
        throw std::invalid_argument("gold: unknown method '" + spec.gold.method + "'");
    }
    return thin_and_pool(chain, burn_in, spec.nbp_pool);
}

}  // namespace

Clock steady_clock_seconds() {
    return [] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
            .count();
    };
}

void ExperimentSpec::validate() const {
    static const std::set<std::string> names = {"linreg2", "linreg10", "quantile", "kyphosis", "gee"};
    if (!names.count(name)) throw std::invalid_argument("ExperimentSpec: unknown experiment '" + name + "'");
    if (reps < 1) throw std::invalid_argument("ExperimentSpec: reps must be >= 1");
    if (methods.empty()) throw std::invalid_argument("ExperimentSpec: no methods selected");
    for (const auto& m : methods) method_id(m);
    if (checkpoint_schedule.empty())
        throw std::invalid_argument("ExperimentSpec: empty checkpoint schedule");
    for (std::size_t i = 1; i < checkpoint_schedule.size(); ++i)
        if (!(checkpoint_schedule[i] > checkpoint_schedule[i - 1]))
            throw std::invalid_argument("ExperimentSpec: checkpoints must increase");
    if (nbp_pool < 1) throw std::invalid_argument("ExperimentSpec: nbp_pool must be positive");
    if (gold.method != "mh" && gold.method != "hmc")
        throw std::invalid_argument("ExperimentSpec: gold method must be mh or hmc");
}

ExperimentTargets build_targets(const std::string& name, std::uint64_t data_seed,
                                const std::string& data_path) {
    ExperimentTargets t;
    if (name == "linreg2") {
        t.primary = make_target(linreg_model(2), generate("linreg2", data_seed));
    } else if (name == "linreg10") {
        t.primary = make_target(linreg_model(10), generate("linreg10", data_seed));
    } else if (name == "quantile") {
        Dataset data = generate("quantile", data_seed);
        t.primary = make_target(quantile_model(0.7, 0.1, false), data);
        t.surrogate = make_target(quantile_model(0.7, 0.1, true), std::move(data));
    } else if (name == "kyphosis") {
        t.primary = make_target(logistic_model(), load_kyphosis(data_path));
    } else if (name == "gee") {
        t.primary = make_target(gee_model(), generate("gee", data_seed));
    } else {
        throw std::invalid_argument("build_targets: unknown experiment '" + name + "'");
    }
    return t;
}

ExperimentSpec default_spec(const std::string& name) {
    ExperimentSpec spec;
    spec.name = name;
    spec.ep_cfg.num_sites = (name == "kyphosis") ? 4 : 6;
    spec.mh_cfg.shrinkage = 0.7;
    if (name == "gee") spec.mh_cfg.shrinkage = 0.3;
    if (name == "linreg10") spec.mh_cfg.shrinkage = 0.5;
    spec.gold = {"mh", 1000000};
    spec.validate();
    return spec;
}

void apply_paper_scale(ExperimentSpec& spec) {
    spec.reps = 50;
    spec.gold.draws = spec.gold.method == "hmc" ? 2000000 : 10000000;
}

std::vector<ResultRow> run_experiment(const ExperimentSpec& spec, const Clock& clock) {
    spec.validate();
    std::mt19937_64 null_rng(derive_seed(spec.master_seed, 0xA11, 0));
    const int threshold =
        null_quantile(spec.nbp_pool, spec.nbp_quantile, spec.nbp_reps, null_rng);

    std::vector<ResultRow> rows;
    for (int rep = 0; rep < spec.reps; ++rep) {
        const ExperimentTargets targets = build_targets(
            spec.name, derive_seed(spec.master_seed, static_cast<std::uint64_t>(rep), 1),
            spec.data_path);
        const SampleMatrix gold = build_gold(spec, targets, rep);

        for (const auto& method : spec.methods) {
            MethodOutput out = run_method(method, spec, targets, rep, clock);
            for (std::size_t k = 0; k < out.snaps.size(); ++k) {
                const Snapshot& snap = out.snaps[k];
                ResultRow row;
                row.experiment = spec.name;
                row.method = method;
                row.rep = rep;
                row.checkpoint_seconds = snap.checkpoint;
                row.extra = snap.extra;

                if (snap.gauss && !snap.gauss->proper()) {
                    row.extra = snap.extra + ";improper approximation";
                } else if (snap.gauss) {
                    std::mt19937_64 draw_rng(derive_seed(
                        derive_seed(spec.master_seed, static_cast<std::uint64_t>(rep), 3),
                        static_cast<std::uint64_t>(method_id(method)), k));
                    SampleMatrix approx_draws;
                    approx_draws.draws = sample(*snap.gauss, spec.nbp_pool, draw_rng);
                    const CrossMatchResult cm =
                        cross_match(gold, approx_draws, spec.nbp_quantile, spec.nbp_reps,
                                    /*seed=*/0, threshold);
                    row.nbp_count = cm.cross_count;
                    row.pass = cm.pass;
                } else if (snap.chain_upto >= 0 && out.chain) {
                    const int k_draws = snap.chain_upto;
                    if (k_draws >= out.chain_burn_in + spec.nbp_pool) {
                        SampleMatrix upto;
                        upto.draws = out.chain->draws.topRows(k_draws);
                        const SampleMatrix thinned =
                            thin_and_pool(upto, out.chain_burn_in, spec.nbp_pool);
                        const CrossMatchResult cm =
                            cross_match(gold, thinned, spec.nbp_quantile, spec.nbp_reps,
                                        /*seed=*/0, threshold);
                        row.nbp_count = cm.cross_count;
                        row.pass = cm.pass;
                    } else {
                        row.extra = snap.extra + ";insufficient draws";
                    }
                }
                rows.push_back(std::move(row));
            }
        }
    }
    return rows;
}

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
    if (rows.empty()) throw std::invalid_argument("summarize: no rows");
    std::map<std::pair<std::string, double>, std::vector<double>> groups;
    for (const auto& r : rows)
        if (r.nbp_count >= 0)
            groups[{r.method, r.checkpoint_seconds}].push_back(static_cast<double>(r.nbp_count));

    auto order_stat = [](std::vector<double>& v, double q) {
        const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(v.size() - 1)));
        return v[idx];
    };

    std::vector<SummaryRow> out;
    for (auto& [key, values] : groups) {
        std::sort(values.begin(), values.end());
        SummaryRow s;
        s.method = key.first;
        s.checkpoint_seconds = key.second;
        const std::size_t n = values.size();
        s.median = (n % 2 == 1) ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
        s.q25 = order_stat(values, 0.25);
        s.q75 = order_stat(values, 0.75);
        s.count = static_cast<int>(n);
        out.push_back(std::move(s));
    }
    return out;
}

void save_results_csv(const std::vector<ResultRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_results_csv: cannot open " + path);
    out << "experiment,method,rep,checkpoint_seconds,nbp_count,pass,extra\n";
    out.precision(17);
    for (const auto& r : rows)
        out << r.experiment << ',' << r.method << ',' << r.rep << ',' << r.checkpoint_seconds << ','
            << r.nbp_count << ',' << (r.pass ? 1 : 0) << ',' << r.extra << '\n';
}

std::vector<ResultRow> load_results_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_results_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_results_csv: empty file");
    std::vector<ResultRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        ResultRow r;
        std::string field;
        std::getline(ss, r.experiment, ',');
        std::getline(ss, r.method, ',');
        std::getline(ss, field, ',');
        r.rep = std::stoi(field);
        std::getline(ss, field, ',');
        r.checkpoint_seconds = std::stod(field);
        std::getline(ss, field, ',');
        r.nbp_count = std::stoi(field);
        std::getline(ss, field, ',');
        r.pass = field == "1";
        std::getline(ss, r.extra);
        rows.push_back(std::move(r));
    }
    return rows;
}

void save_summary_csv(const std::vector<SummaryRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_summary_csv: cannot open " + path);
    out << "method,checkpoint_seconds,median,q25,q75,count\n";
    out.precision(17);
    for (const auto& r : rows)
        out << r.method << ',' << r.checkpoint_seconds << ',' << r.median << ',' << r.q25 << ','
            << r.q75 << ',' << r.count << '\n';
}

std::vector<SummaryRow> load_summary_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_summary_csv: cannot open " + path);
    std::string line;
    std::getline(in, line);
    std::vector<SummaryRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        SummaryRow r;
        std::string field;
        std::getline(ss, r.method, ',');
        std::getline(ss, field, ',');
        r.checkpoint_seconds = std::stod(field);
        std::getline(ss, field, ',');
        r.median = std::stod(field);
        std::getline(ss, field, ',');
        r.q25 = std::stod(field);
        std::getline(ss, field, ',');
        r.q75 = std::stod(field);
        std::getline(ss, field, ',');
        r.count = std::stoi(field);
        rows.push_back(std::move(r));
    }
    return rows;
}

namespace {

json spec_to_json(const ExperimentSpec& spec) {
    json j;
    j["name"] = spec.name;
    j["methods"] = spec.methods;
    j["reps"] = spec.reps;
    j["budget_seconds"] = spec.budget_seconds;
    j["checkpoint_schedule"] = spec.checkpoint_schedule;
    j["gold"] = {{"method", spec.gold.method}, {"draws", spec.gold.draws}};
    j["master_seed"] = spec.master_seed;
    j["smooth_quantile"] = spec.smooth_quantile;
    j["data_path"] = spec.data_path;
    j["nbp_pool"] = spec.nbp_pool;
    j["nbp_reps"] = spec.nbp_reps;
    j["nbp_quantile"] = spec.nbp_quantile;
    j["ep"] = {{"num_sites", spec.ep_cfg.num_sites},
               {"damping", spec.ep_cfg.damping},
               {"warmup_cycles", spec.ep_cfg.warmup_cycles},
               {"is_samples", spec.ep_cfg.is_samples},
               {"max_cycles", spec.ep_cfg.max_cycles},
               {"convergence_tol", spec.ep_cfg.convergence_tol},
               {"ess_floor", spec.ep_cfg.ess_floor}};
    j["mh"] = {{"draws", spec.mh_cfg.draws},
               {"burn_in", spec.mh_cfg.burn_in},
               {"shrinkage", spec.mh_cfg.shrinkage},
               {"prelim_scale", spec.mh_cfg.prelim_scale},
               {"prelim_draws", spec.mh_cfg.prelim_draws}};
    j["hmc"] = {{"draws", spec.hmc_cfg.draws},
                {"burn_in", spec.hmc_cfg.burn_in},
                {"step_size", spec.hmc_cfg.step_size},
                {"n_leapfrog", spec.hmc_cfg.n_leapfrog}};
    j["vb"] = {{"learning_rate", spec.vb_cfg.learning_rate},
               {"steps", spec.vb_cfg.steps},
               {"mc_samples", spec.vb_cfg.mc_samples},
               {"a_n", spec.vb_cfg.a_n}};
    return j;
}

}  // namespace

void save_manifest_json(const ExperimentSpec& spec, const std::string& path) {
    json j;
    j["version"] = kVersion;
    j["spec"] = spec_to_json(spec);
    json seeds = json::array();
    for (int rep = 0; rep < spec.reps; ++rep) {
        json row;
        row["rep"] = rep;
        row["data_seed"] = derive_seed(spec.master_seed, static_cast<std::uint64_t>(rep), 1);
        row["gold_seed"] = derive_seed(spec.master_seed, static_cast<std::uint64_t>(rep), 2);
        json per_method;
        for (const auto& m : spec.methods)
            per_method[m] = derive_seed(spec.master_seed, static_cast<std::uint64_t>(rep),
                                        static_cast<std::uint64_t>(10 + method_id(m)));
        row["method_seeds"] = std::move(per_method);
        seeds.push_back(std::move(row));
    }
    j["seeds"] = std::move(seeds);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_manifest_json: cannot open " + path);
    out << j.dump(2) << '\n';
}

ExperimentSpec spec_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("spec_from_json_file: cannot open " + path);
    json j;
    in >> j;
    ExperimentSpec spec = default_spec(j.at("name").get<std::string>());
    if (j.contains("methods")) spec.methods = j["methods"].get<std::vector<std::string>>();
    spec.reps = j.value("reps", spec.reps);
    spec.budget_seconds = j.value("budget_seconds", spec.budget_seconds);
    if (j.contains("checkpoint_schedule"))
        spec.checkpoint_schedule = j["checkpoint_schedule"].get<std::vector<double>>();
    if (j.contains("gold")) {
        spec.gold.method = j["gold"].value("method", spec.gold.method);
        spec.gold.draws = j["gold"].value("draws", spec.gold.draws);
    }
    spec.master_seed = j.value("master_seed", spec.master_seed);
    spec.smooth_quantile = j.value("smooth_quantile", spec.smooth_quantile);
    spec.data_path = j.value("data_path", spec.data_path);
    spec.nbp_pool = j.value("nbp_pool", spec.nbp_pool);
    spec.nbp_reps = j.value("nbp_reps", spec.nbp_reps);
    spec.nbp_quantile = j.value("nbp_quantile", spec.nbp_quantile);

    const std::string text = j.dump();
    spec.ep_cfg = ep_config_from_json(text, spec.ep_cfg);
    spec.mh_cfg = chain_config_from_json(text, "mh", spec.mh_cfg);
    spec.hmc_cfg = chain_config_from_json(text, "hmc", spec.hmc_cfg);
    spec.vb_cfg = vb_config_from_json(text, spec.vb_cfg);
    spec.validate();
    return spec;
}

void plot_summary_svg(const std::vector<SummaryRow>& rows, int threshold, const std::string& path) {
    if (rows.empty()) throw std::invalid_argument("plot_summary_svg: no rows");
    const double width = 860, height = 540;
    const double ml = 70, mr = 180, mt = 30, mb = 60;

    double x_lo = 1e300, x_hi = -1e300, y_hi = static_cast<double>(threshold);
    std::vector<std::string> methods;
    for (const auto& r : rows) {
        x_lo = std::min(x_lo, r.checkpoint_seconds);
        x_hi = std::max(x_hi, r.checkpoint_seconds);
        y_hi = std::max(y_hi, r.q75);
        if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
            methods.push_back(r.method);
    }
    y_hi *= 1.08;
    const double lx_lo = std::log10(std::max(x_lo, 1e-3));
    const double lx_hi = std::log10(std::max(x_hi, x_lo * 1.01));

    auto px = [&](double x) {
        const double t = (std::log10(std::max(x, 1e-3)) - lx_lo) / std::max(lx_hi - lx_lo, 1e-12);
        return ml + t * (width - ml - mr);
    };
    auto py = [&](double y) { return height - mb - (y / y_hi) * (height - mt - mb); };

    static const std::vector<std::string> palette = {"#1f77b4", "#d62728", "#2ca02c",
                                                     "#9467bd", "#ff7f0e", "#8c564b"};
    std::ostringstream svg;
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
        << "' viewBox='0 0 " << width << ' ' << height << "'>\n"
        << "<rect width='100%' height='100%' fill='white'/>\n";

    // Axes.
    svg << "<line x1='" << ml << "' y1='" << height - mb << "' x2='" << width - mr << "' y2='"
        << height - mb << "' stroke='black'/>\n"
        << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << height - mb
        << "' stroke='black'/>\n";
    for (double tick = std::ceil(lx_lo); tick <= lx_hi + 1e-9; tick += 1.0) {
        const double x = px(std::pow(10.0, tick));
        svg << "<line x1='" << x << "' y1='" << height - mb << "' x2='" << x << "' y2='"
            << height - mb + 5 << "' stroke='black'/>\n"
            << "<text x='" << x << "' y='" << height - mb + 20
            << "' font-size='12' text-anchor='middle'>" << std::pow(10.0, tick) << "</text>\n";
    }
    for (int k = 0; k <= 5; ++k) {
        const double y = y_hi * k / 5.0;
        svg << "<line x1='" << ml - 5 << "' y1='" << py(y) << "' x2='" << ml << "' y2='" << py(y)
            << "' stroke='black'/>\n"
            << "<text x='" << ml - 9 << "' y='" << py(y) + 4
            << "' font-size='12' text-anchor='end'>" << static_cast<int>(y) << "</text>\n";
    }
    svg << "<text x='" << (ml + width - mr) / 2 << "' y='" << height - 15
        << "' font-size='13' text-anchor='middle'>seconds</text>\n"
        << "<text x='18' y='" << (mt + height - mb) / 2
        << "' font-size='13' text-anchor='middle' transform='rotate(-90 18 "
        << (mt + height - mb) / 2 << ")'>NBP count</text>\n";

    // Threshold line.
    svg << "<line x1='" << ml << "' y1='" << py(threshold) << "' x2='" << width - mr << "' y2='"
        << py(threshold) << "' stroke='black' stroke-dasharray='6,4'/>\n"
        << "<text x='" << width - mr + 6 << "' y='" << py(threshold) + 4
        << "' font-size='12'>threshold " << threshold << "</text>\n";

    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        const std::string& method = methods[mi];
        const std::string& color = palette[mi % palette.size()];
        std::vector<SummaryRow> pts;
        for (const auto& r : rows)
            if (r.method == method) pts.push_back(r);
        std::sort(pts.begin(), pts.end(), [](const SummaryRow& a, const SummaryRow& b) {
            return a.checkpoint_seconds < b.checkpoint_seconds;
        });
        if (pts.empty()) continue;

        // Interquartile band.
        std::ostringstream poly;
        for (const auto& r : pts) poly << px(r.checkpoint_seconds) << ',' << py(r.q75) << ' ';
        for (auto it = pts.rbegin(); it != pts.rend(); ++it)
            poly << px(it->checkpoint_seconds) << ',' << py(it->q25) << ' ';
        svg << "<polygon points='" << poly.str() << "' fill='" << color
            << "' fill-opacity='0.15' stroke='none'/>\n";

        std::ostringstream line;
        for (const auto& r : pts) line << px(r.checkpoint_seconds) << ',' << py(r.median) << ' ';
        svg << "<polyline points='" << line.str() << "' fill='none' stroke='" << color
            << "' stroke-width='2'/>\n";
        for (const auto& r : pts)
            svg << "<circle cx='" << px(r.checkpoint_seconds) << "' cy='" << py(r.median)
                << "' r='3' fill='" << color << "'/>\n";

        svg << "<rect x='" << width - mr + 6 << "' y='" << mt + 18 * mi << "' width='12' height='12' fill='"
            << color << "'/>\n"
            << "<text x='" << width - mr + 24 << "' y='" << mt + 18 * mi + 10
            << "' font-size='13'>" << method << "</text>\n";
    }
    svg << "</svg>\n";

    std::ofstream out(path);
    if (!out) throw std::runtime_error("plot_summary_svg: cannot open " + path);
    out << svg.str();
}

}  // namespace bel
