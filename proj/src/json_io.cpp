#include "bel/json_io.hpp"

#include <json.hpp>

#include <fstream>
#include <stdexcept>

namespace bel {

namespace {

using nlohmann::json;

json vec_to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

json mat_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::VectorXd vec_from_json(const json& a) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
    return v;
}

Eigen::MatrixXd mat_from_json(const json& rows) {
    const auto r = static_cast<Eigen::Index>(rows.size());
    if (r == 0) return {};
    const auto c = static_cast<Eigen::Index>(rows[0].size());
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        const auto& row = rows[static_cast<std::size_t>(i)];
        if (static_cast<Eigen::Index>(row.size()) != c)
            throw std::runtime_error("gaussian_from_json: ragged Q matrix");
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = row[static_cast<std::size_t>(j)].get<double>();
    }
    return m;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << text;
}

}  // namespace

std::string gaussian_to_json(const NaturalGaussian& g) {
    json j;
    j["r"] = vec_to_json(g.r);
    j["Q"] = mat_to_json(g.Q);
    return j.dump(2);
}

NaturalGaussian gaussian_from_json(const std::string& text) {
    const json j = json::parse(text);
    return NaturalGaussian(vec_from_json(j.at("r")), mat_from_json(j.at("Q")));
}

void save_gaussian_json(const NaturalGaussian& g, const std::string& path) {
    write_file(path, gaussian_to_json(g) + "\n");
}

NaturalGaussian load_gaussian_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return gaussian_from_json(text);
}

std::string laplace_to_json(const LaplaceResult& lap) {
    json j;
    j["mode"] = vec_to_json(lap.mode);
    j["r"] = vec_to_json(lap.approx.r);
    j["Q"] = mat_to_json(lap.approx.Q);
    j["converged"] = lap.converged;
    j["iters"] = lap.newton_iters;
    j["seconds"] = lap.seconds;
    return j.dump(2);
}

void save_laplace_json(const LaplaceResult& lap, const std::string& path) {
    write_file(path, laplace_to_json(lap) + "\n");
}

void save_ep_trace_jsonl(const ep::EpTrace& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& rec : trace) {
        json j;
        j["cycle"] = rec.cycle;
        j["max_update"] = rec.max_update;
        json ess = json::array();
        for (double e : rec.site_ess) {
            if (std::isfinite(e))
                ess.push_back(e);
            else
                ess.push_back(nullptr);
        }
        j["site_ess"] = std::move(ess);
        j["alpha_used"] = rec.alpha_used;
        j["seconds"] = rec.seconds;
        out << j.dump() << '\n';
    }
}

void save_vb_trace_jsonl(const VbTrace& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& rec : trace) {
        json j;
        j["step"] = rec.step;
        if (std::isfinite(rec.elbo_estimate))
            j["elbo_estimate"] = rec.elbo_estimate;
        else
            j["elbo_estimate"] = nullptr;
        j["seconds"] = rec.seconds;
        out << j.dump() << '\n';
    }
}

ep::EpConfig ep_config_from_json(const std::string& text, const ep::EpConfig& defaults) {
    ep::EpConfig cfg = defaults;
    const json root = json::parse(text);
    if (!root.contains("ep")) return cfg;
    const json& j = root.at("ep");
    cfg.num_sites = j.value("num_sites", cfg.num_sites);
    cfg.damping = j.value("damping", cfg.damping);
    cfg.warmup_cycles = j.value("warmup_cycles", cfg.warmup_cycles);
    cfg.is_samples = j.value("is_samples", cfg.is_samples);
    cfg.max_cycles = j.value("max_cycles", cfg.max_cycles);
    cfg.convergence_tol = j.value("convergence_tol", cfg.convergence_tol);
    cfg.ess_floor = j.value("ess_floor", cfg.ess_floor);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.is_only = j.value("is_only", cfg.is_only);
    return cfg;
}

ChainConfig chain_config_from_json(const std::string& text, const std::string& section,
                                   const ChainConfig& defaults) {
    ChainConfig cfg = defaults;
    const json root = json::parse(text);
    if (!root.contains(section)) return cfg;
    const json& j = root.at(section);
    cfg.draws = j.value("draws", cfg.draws);
    cfg.burn_in = j.value("burn_in", cfg.burn_in);
    cfg.step_size = j.value("step_size", cfg.step_size);
    cfg.n_leapfrog = j.value("n_leapfrog", cfg.n_leapfrog);
    cfg.shrinkage = j.value("shrinkage", cfg.shrinkage);
    cfg.prelim_scale = j.value("prelim_scale", cfg.prelim_scale);
    cfg.prelim_draws = j.value("prelim_draws", cfg.prelim_draws);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("mass")) cfg.mass = mat_from_json(j.at("mass"));
    if (j.contains("proposal_cov")) cfg.proposal_cov = mat_from_json(j.at("proposal_cov"));
    return cfg;
}

VbConfig vb_config_from_json(const std::string& text, const VbConfig& defaults) {
    VbConfig cfg = defaults;
    const json root = json::parse(text);
    if (!root.contains("vb")) return cfg;
    const json& j = root.at("vb");
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.steps = j.value("steps", cfg.steps);
    cfg.mc_samples = j.value("mc_samples", cfg.mc_samples);
    cfg.a_n = j.value("a_n", cfg.a_n);
    cfg.seed = j.value("seed", cfg.seed);
    return cfg;
}

}  // namespace bel
