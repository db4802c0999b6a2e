#include "bel/models.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "bel/rng.hpp"

namespace bel {

double expit(double t) {
    if (t >= 0.0) {
        const double e = std::exp(-t);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(t);
    return e / (1.0 + e);
}

double quantile_score(double tau, double u) {
    if (u < 0.0) return 1.0 - tau;
    if (u > 0.0) return -tau;
    return 0.0;
}

double quantile_score_smooth(double tau, double epsilon, double u) {
    return expit(-u / epsilon) - tau;
}

ConstraintModel linreg_model(int p) {
    if (p < 1) throw std::invalid_argument("linreg_model: p must be >= 1");
    ConstraintModel m;
    m.name = "linreg" + std::to_string(p);
    m.K = p;
    m.p = p;
    m.smooth = true;
    m.h = [p](const Eigen::VectorXd& z, const Eigen::VectorXd& theta) -> Eigen::VectorXd {
        const double y = z[0];
        const auto x = z.segment(1, p);
        return x * (y - x.dot(theta));
    };
    m.jac = [p](const Eigen::VectorXd& z, const Eigen::VectorXd&) -> Eigen::MatrixXd {
        const auto x = z.segment(1, p);
        return -x * x.transpose();
    };
    return m;
}

ConstraintModel logistic_model() {
    constexpr int p = 4;
    ConstraintModel m;
    m.name = "logistic";
    m.K = p;
    m.p = p;
    m.smooth = true;
    m.h = [](const Eigen::VectorXd& z, const Eigen::VectorXd& theta) -> Eigen::VectorXd {
        const double y = z[0];
        const auto x = z.segment(1, p);
        return x * (y - expit(x.dot(theta)));
    };
    m.jac = [](const Eigen::VectorXd& z, const Eigen::VectorXd& theta) -> Eigen::MatrixXd {
        const auto x = z.segment(1, p);
        const double mu = expit(x.dot(theta));
        return -(mu * (1.0 - mu)) * (x * x.transpose());
    };
    return m;
}

ConstraintModel quantile_model(double tau, double epsilon_rho, bool smooth) {
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("quantile_model: tau must lie in (0,1)");
    if (smooth && !(epsilon_rho > 0.0))
        throw std::invalid_argument("quantile_model: epsilon_rho must be positive for the smooth variant");
    constexpr int p = 2;
    ConstraintModel m;
    m.name = smooth ? "quantile_smooth" : "quantile";
    m.K = p;
    m.p = p;
    m.smooth = smooth;
    if (smooth) {
        m.h = [tau, epsilon_rho](const Eigen::VectorXd& z, const Eigen::VectorXd& theta) -> Eigen::VectorXd {
            const auto x = z.segment(1, p);
            const double u = z[0] - x.dot(theta);
            return quantile_score_smooth(tau, epsilon_rho, u) * x;
        };
        m.jac = [epsilon_rho](const Eigen::VectorXd& z, const Eigen::VectorXd& theta) -> Eigen::MatrixXd {
            const auto x = z.segment(1, p);
            const double u = z[0] - x.dot(theta);
            const double s = expit(-u / epsilon_rho);
            // d/dtheta [expit(-u/eps)] = expit'(-u/eps)/eps * x
            return (s * (1.0 - s) / epsilon_rho) * (x * x.transpose());
        };
    } else {
        m.h = [tau](const Eigen::VectorXd& z, const Eigen::VectorXd& theta) -> Eigen::VectorXd {
            const auto x = z.segment(1, p);
            const double u = z[0] - x.dot(theta);
            return quantile_score(tau, u) * x;
        };
        m.jac = [](const Eigen::VectorXd&, const Eigen::VectorXd&) -> Eigen::MatrixXd {
            throw std::runtime_error("quantile_model: non-differentiable model");
        };
    }
    return m;
}

namespace {
constexpr int kGeeP = 5;

Eigen::Matrix<double, kGeeP, 2> gee_design(const Eigen::VectorXd& z) {
    Eigen::Matrix<double, kGeeP, 2> x;
    x.col(0) = z.segment<kGeeP>(2);
    x.col(1) = z.segment<kGeeP>(2 + kGeeP);
    return x;
}
}  // namespace

ConstraintModel gee_model() {
    ConstraintModel m;
    m.name = "gee";
    m.K = 2 * kGeeP;
    m.p = kGeeP;
    m.smooth = true;
    Eigen::Matrix2d m2;
    m2 << 1.0, 0.7, 0.7, 1.0;
    m.h = [m2](const Eigen::VectorXd& z, const Eigen::VectorXd& theta) -> Eigen::VectorXd {
        const Eigen::Vector2d y = z.segment<2>(0);
        const auto x = gee_design(z);
        const Eigen::Vector2d e = y - x.transpose() * theta;
        Eigen::VectorXd out(2 * kGeeP);
        out.segment<kGeeP>(0) = x * e;
        out.segment<kGeeP>(kGeeP) = x * (m2 * e);
        return out;
    };
    m.jac = [m2](const Eigen::VectorXd& z, const Eigen::VectorXd&) -> Eigen::MatrixXd {
        const auto x = gee_design(z);
        Eigen::MatrixXd out(2 * kGeeP, kGeeP);
        out.topRows<kGeeP>() = -x * x.transpose();
        out.bottomRows<kGeeP>() = -x * (m2 * x.transpose());
        return out;
    };
    return m;
}

namespace {

Dataset generate_linreg(int p, std::uint64_t seed, const std::string& name) {
    const int n = 100;
    Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(p);
    if (p == 2) {
        theta0 << 0.5, 1.0;
    } else {
        theta0.head(5) << 0.5, 1.0, 0.5, -1.0, 0.5;
    }
    std::mt19937_64 rng = make_rng(seed);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd obs(n, 1 + p);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd x(p);
        x[0] = 1.0;
        for (int j = 1; j < p; ++j) x[j] = nd(rng);
        const double y = x.dot(theta0) + nd(rng);
        obs(i, 0) = y;
        obs.row(i).segment(1, p) = x.transpose();
    }
    Dataset d;
    d.observations = std::move(obs);
    d.meta = {name, seed, theta0};
    return d;
}

Dataset generate_gee(std::uint64_t seed) {
    const int n = 50;
    const int p = 5;
    Eigen::VectorXd theta0(p);
    theta0 << 3.0, 1.5, 0.0, 0.0, 2.0;

    Eigen::MatrixXd sigma(p, p);
    for (int k = 0; k < p; ++k)
        for (int l = 0; l < p; ++l) sigma(k, l) = std::pow(0.5, std::abs(k - l));
    const Eigen::MatrixXd lx = sigma.llt().matrixL();

    Eigen::Matrix2d corr;
    corr << 1.0, 0.7, 0.7, 1.0;
    const Eigen::Matrix2d le = corr.llt().matrixL();

    std::mt19937_64 rng = make_rng(seed);
    std::normal_distribution<double> nd;
    auto draw = [&](int len) {
        Eigen::VectorXd v(len);
        for (int j = 0; j < len; ++j) v[j] = nd(rng);
        return v;
    };

    Eigen::MatrixXd obs(n, 2 + 2 * p);
    for (int i = 0; i < n; ++i) {
        Eigen::Matrix<double, 5, 2> x;
        x.col(0) = lx * draw(p);
        x.col(1) = lx * draw(p);
        const Eigen::Vector2d eps = le * Eigen::Vector2d(draw(2));
        const Eigen::Vector2d y = x.transpose() * theta0 + eps;
        obs(i, 0) = y[0];
        obs(i, 1) = y[1];
        obs.row(i).segment(2, p) = x.col(0).transpose();
        obs.row(i).segment(2 + p, p) = x.col(1).transpose();
    }
    Dataset d;
    d.observations = std::move(obs);
    d.meta = {"gee", seed, theta0};
    return d;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) {
        while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
        while (!field.empty() && field.front() == ' ') field.erase(field.begin());
        out.push_back(field);
    }
    return out;
}

}  // namespace

Dataset generate(const std::string& spec, std::uint64_t seed) {
    if (spec == "linreg2") return generate_linreg(2, seed, "linreg2");
    if (spec == "linreg10") return generate_linreg(10, seed, "linreg10");
    if (spec == "quantile") {
        Dataset d = generate_linreg(2, seed, "quantile");
        return d;
    }
    if (spec == "gee") return generate_gee(seed);
    throw std::invalid_argument("generate: unknown experiment spec '" + spec + "'");
}

Dataset load_kyphosis(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_kyphosis: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_kyphosis: empty file");
    const auto header = split_csv_line(line);
    const std::vector<std::string> expected = {"Kyphosis", "Age", "Number", "Start"};
    if (std::vector<std::string>(header.begin(), header.end()) != expected)
        throw std::runtime_error("load_kyphosis: unexpected column set");

    std::vector<double> y;
    std::vector<Eigen::Vector3d> covs;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 4) throw std::runtime_error("load_kyphosis: malformed row");
        double resp;
        if (f[0] == "present") {
            resp = 1.0;
        } else if (f[0] == "absent") {
            resp = 0.0;
        } else {
            throw std::runtime_error("load_kyphosis: unknown response value '" + f[0] + "'");
        }
        Eigen::Vector3d c;
        try {
            c << std::stod(f[1]), std::stod(f[2]), std::stod(f[3]);
        } catch (const std::exception&) {
            throw std::runtime_error("load_kyphosis: non-numeric covariate");
        }
        y.push_back(resp);
        covs.push_back(c);
    }

    const Eigen::Index n = static_cast<Eigen::Index>(y.size());
    if (n != 81) throw std::runtime_error("load_kyphosis: expected 81 rows");

    Eigen::MatrixXd raw(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) raw.row(i) = covs[static_cast<std::size_t>(i)].transpose();

    // Column checksums of the canonical rpart kyphosis data.
    const Eigen::Vector3d sums = raw.colwise().sum();
    const Eigen::Vector3d expected_sums(6776.0, 328.0, 931.0);
    if ((sums - expected_sums).cwiseAbs().maxCoeff() > 1e-6)
        throw std::runtime_error("load_kyphosis: column checksum mismatch, data corrupted");

    Eigen::MatrixXd obs(n, 5);
    for (Eigen::Index i = 0; i < n; ++i) {
        obs(i, 0) = y[static_cast<std::size_t>(i)];
        obs(i, 1) = 1.0;
    }
    for (int j = 0; j < 3; ++j) {
        const double mean = raw.col(j).mean();
        const double sd = std::sqrt((raw.col(j).array() - mean).square().sum() / static_cast<double>(n - 1));
        obs.col(2 + j) = (raw.col(j).array() - mean) / sd;
    }

    Dataset d;
    d.observations = std::move(obs);
    d.meta = {"kyphosis", 0, std::nullopt};
    return d;
}

void save_dataset_csv(const Dataset& data, int n_responses, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_dataset_csv: cannot open " + path);
    const Eigen::Index width = data.observations.cols();
    for (Eigen::Index j = 0; j < width; ++j) {
        if (j) out << ',';
        if (j < n_responses)
            out << "y_" << (j + 1);
        else
            out << "x_" << (j - n_responses + 1);
    }
    out << '\n';
    out.precision(17);
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        for (Eigen::Index j = 0; j < width; ++j) {
            if (j) out << ',';
            out << data.observations(i, j);
        }
        out << '\n';
    }
}

Dataset load_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_dataset_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_dataset_csv: empty file");
    const auto header = split_csv_line(line);
    const Eigen::Index width = static_cast<Eigen::Index>(header.size());
    std::vector<Eigen::VectorXd> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (static_cast<Eigen::Index>(f.size()) != width)
            throw std::runtime_error("load_dataset_csv: ragged row");
        Eigen::VectorXd v(width);
        for (Eigen::Index j = 0; j < width; ++j) v[j] = std::stod(f[static_cast<std::size_t>(j)]);
        rows.push_back(std::move(v));
    }
    if (rows.empty()) throw std::runtime_error("load_dataset_csv: no observations");
    Eigen::MatrixXd obs(static_cast<Eigen::Index>(rows.size()), width);
    for (Eigen::Index i = 0; i < obs.rows(); ++i) obs.row(i) = rows[static_cast<std::size_t>(i)].transpose();
    if (!obs.allFinite()) throw std::runtime_error("load_dataset_csv: non-finite entries");
    Dataset d;
    d.observations = std::move(obs);
    d.meta = {"csv:" + path, 0, std::nullopt};
    return d;
}

}  // namespace bel
