#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bel/ep.hpp"
#include "bel/nbp.hpp"
#include "bel/samplers.hpp"
#include "bel/vb.hpp"

namespace bel {

struct GoldSpec {
    std::string method = "mh";  // mh | hmc
    int draws = 1000000;
};

/// One experiment: data, methods, repetition count, wall-clock checkpoint
/// grid, and the gold-standard recipe.  Per-method configs start from the
/// experiment defaults and may be overridden from JSON.
struct ExperimentSpec {
    std::string name;  // linreg2 | linreg10 | quantile | kyphosis | gee
    std::vector<std::string> methods = {"epel", "laplace", "vb", "hmc", "mh"};
    int reps = 10;
    double budget_seconds = 120.0;
    std::vector<double> checkpoint_schedule = {0.5, 1, 2, 5, 10, 20, 50, 100};
    GoldSpec gold;
    std::uint64_t master_seed = 0;
    bool smooth_quantile = true;  // false: EPEL runs IS-only on the exact score
    std::string data_path = "data/kyphosis.csv";
    int nbp_pool = 1000;
    int nbp_reps = 100000;
    double nbp_quantile = 0.05;

    ep::EpConfig ep_cfg;
    ChainConfig mh_cfg;
    ChainConfig hmc_cfg;
    VbConfig vb_cfg;

    void validate() const;
};

/// Experiment defaults from the desk-scale protocol: D = 6 sites (4 for
/// kyphosis), damping 0.1, 50 warm-up cycles, 5000 IS samples, MH shrinkage
/// 0.7 (0.3 for gee, 0.5 for linreg10), HMC step 0.01 with 50 integration
/// steps, VB learning rate 1e-3, MH gold standard of 1e6 draws.
ExperimentSpec default_spec(const std::string& name);

/// Full-scale protocol knobs behind --paper-scale: 50 repetitions and a
/// 1e7-draw MH (or 2e6-draw HMC) gold standard.
void apply_paper_scale(ExperimentSpec& spec);

struct ResultRow {
    std::string experiment;
    std::string method;
    int rep = 0;
    double checkpoint_seconds = 0.0;
    int nbp_count = -1;  // -1 marks a skipped or unavailable evaluation
    bool pass = false;
    std::string extra;
};

struct SummaryRow {
    std::string method;
    double checkpoint_seconds = 0.0;
    double median = 0.0;
    double q25 = 0.0;
    double q75 = 0.0;
    int count = 0;
};

/// Injectable clock (seconds); tests drive a deterministic one.
using Clock = std::function<double()>;
Clock steady_clock_seconds();

/// Full protocol: per repetition, build the gold standard once, then run each
/// method under the wall-clock budget, snapshot its approximation at every
/// checkpoint, and score each snapshot with the cross-match count against the
/// gold draws.  Reported method seconds cover method work only; gold-standard
/// construction and NBP evaluation run outside the timed region.  Rows are
/// emitted for every (method, rep, checkpoint).
std::vector<ResultRow> run_experiment(const ExperimentSpec& spec, const Clock& clock = steady_clock_seconds());

/// Per (method, checkpoint) median and 0.25/0.75 quantiles of the NBP count
/// (lower-order-statistic convention; even medians average the middle pair).
/// Skipped rows are excluded; count reports the rows used.
std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows);

void save_results_csv(const std::vector<ResultRow>& rows, const std::string& path);
std::vector<ResultRow> load_results_csv(const std::string& path);
void save_summary_csv(const std::vector<SummaryRow>& rows, const std::string& path);
std::vector<SummaryRow> load_summary_csv(const std::string& path);
void save_manifest_json(const ExperimentSpec& spec, const std::string& path);

ExperimentSpec spec_from_json_file(const std::string& path);

/// SVG line chart of the summary: median NBP per method over the checkpoint
/// grid with shaded interquartile bands and a dashed threshold line.
void plot_summary_svg(const std::vector<SummaryRow>& rows, int threshold, const std::string& path);

/// Targets for an experiment; the quantile experiment carries both the exact
/// (non-smooth) target and the smoothed surrogate.
struct ExperimentTargets {
    Target primary;                    // what mh and the gold standard sample
    std::optional<Target> surrogate;   // smoothed quantile target when distinct
    const Target& gradient_target() const { return surrogate ? *surrogate : primary; }
};
ExperimentTargets build_targets(const std::string& name, std::uint64_t data_seed,
                                const std::string& data_path);

}  // namespace bel
