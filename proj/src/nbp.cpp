#include "bel/nbp.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <stdexcept>

namespace bel {

namespace {

// Dense primal-dual blossom algorithm for maximum-weight matching on a
// complete graph with positive integer weights (duals stay integral because
// edge deltas are tracked on a doubled scale).  With every weight strictly
// positive and an even vertex count the maximum-weight matching is perfect.
class WeightedBlossom {
  public:
    explicit WeightedBlossom(const std::vector<std::vector<long long>>& weights)
        : n_(static_cast<int>(weights.size())), cap_(n_ + n_ / 2 + 2) {
        g_u_.assign(static_cast<std::size_t>(cap_) * cap_, 0);
        g_v_.assign(static_cast<std::size_t>(cap_) * cap_, 0);
        g_w_.assign(static_cast<std::size_t>(cap_) * cap_, 0);
        lab_.assign(cap_, 0);
        match_.assign(cap_, 0);
        slack_.assign(cap_, 0);
        st_.assign(cap_, 0);
        pa_.assign(cap_, 0);
        s_.assign(cap_, -1);
        vis_.assign(cap_, 0);
        flower_.assign(cap_, {});
        flower_from_.assign(static_cast<std::size_t>(cap_) * (n_ + 1), 0);
        for (int u = 1; u <= n_; ++u)
            for (int v = 1; v <= n_; ++v) {
                at(g_u_, u, v) = u;
                at(g_v_, u, v) = v;
                at(g_w_, u, v) = weights[static_cast<std::size_t>(u - 1)][static_cast<std::size_t>(v - 1)];
            }
    }

    // Pairs are returned on 0-based original indices.
    std::vector<std::pair<int, int>> solve() {
        std::fill(match_.begin(), match_.end(), 0);
        n_x_ = n_;
        for (int u = 0; u <= n_; ++u) {
            st_[u] = u;
            flower_[u].clear();
        }
        long long w_max = 0;
        for (int u = 1; u <= n_; ++u)
            for (int v = 1; v <= n_; ++v) {
                ff(u, v) = (u == v ? u : 0);
                w_max = std::max(w_max, at(g_w_, u, v));
            }
        for (int u = 1; u <= n_; ++u) lab_[u] = w_max;
        while (grow()) {
        }
        std::vector<std::pair<int, int>> pairs;
        for (int u = 1; u <= n_; ++u)
            if (match_[u] && match_[u] < u) pairs.emplace_back(match_[u] - 1, u - 1);
        return pairs;
    }

  private:
    long long e_delta(int eu, int ev) const {  // on the doubled dual scale
        return lab_[eu] + lab_[ev] - at(g_w_, eu, ev) * 2;
    }

    void update_slack(int u, int x) {
        if (!slack_[x] || e_delta(at(g_u_, u, x), at(g_v_, u, x)) < e_delta(at(g_u_, slack_[x], x), at(g_v_, slack_[x], x)))
            slack_[x] = u;
    }

    void set_slack(int x) {
        slack_[x] = 0;
        for (int u = 1; u <= n_; ++u)
            if (at(g_w_, u, x) > 0 && st_[u] != x && s_[st_[u]] == 0) update_slack(u, x);
    }

    void q_push(int x) {
        if (x <= n_) {
            q_.push_back(x);
        } else {
            for (int i : flower_[x]) q_push(i);
        }
    }

    void set_st(int x, int b) {
        st_[x] = b;
        if (x > n_)
            for (int i : flower_[x]) set_st(i, b);
    }

    int get_pr(int b, int xr) {
        auto& f = flower_[b];
        const int pr = static_cast<int>(std::find(f.begin(), f.end(), xr) - f.begin());
        if (pr % 2 == 1) {
            std::reverse(f.begin() + 1, f.end());
            return static_cast<int>(f.size()) - pr;
        }
        return pr;
    }

    void set_match(int u, int v) {
        match_[u] = at(g_v_, u, v);
        if (u <= n_) return;
        const int eu = at(g_u_, u, v);
        const int xr = ff(u, eu);
        const int pr = get_pr(u, xr);
        auto& f = flower_[u];
        for (int i = 0; i < pr; ++i) set_match(f[static_cast<std::size_t>(i)], f[static_cast<std::size_t>(i ^ 1)]);
        set_match(xr, v);
        std::rotate(f.begin(), f.begin() + pr, f.end());
    }

    void augment(int u, int v) {
        while (true) {
            const int xnv = st_[match_[u]];
            set_match(u, v);
            if (!xnv) return;
            set_match(xnv, st_[pa_[xnv]]);
            u = st_[pa_[xnv]];
            v = xnv;
        }
    }

    int get_lca(int u, int v) {
        for (++timer_; u || v; std::swap(u, v)) {
            if (u == 0) continue;
            if (vis_[u] == timer_) return u;
            vis_[u] = timer_;
            u = st_[match_[u]];
            if (u) u = st_[pa_[u]];
        }
        return 0;
    }

    void add_blossom(int u, int lca, int v) {
        int b = n_ + 1;
        while (b <= n_x_ && st_[b]) ++b;
        if (b > n_x_) ++n_x_;
        lab_[b] = 0;
        s_[b] = 0;
        match_[b] = match_[lca];
        flower_[b].clear();
        flower_[b].push_back(lca);
        for (int x = u, y; x != lca; x = st_[pa_[y]]) {
            flower_[b].push_back(x);
            flower_[b].push_back(y = st_[match_[x]]);
            q_push(y);
        }
        std::reverse(flower_[b].begin() + 1, flower_[b].end());
        for (int x = v, y; x != lca; x = st_[pa_[y]]) {
            flower_[b].push_back(x);
            flower_[b].push_back(y = st_[match_[x]]);
            q_push(y);
        }
        set_st(b, b);
        for (int x = 1; x <= n_x_; ++x) at(g_w_, b, x) = at(g_w_, x, b) = 0;
        for (int x = 1; x <= n_; ++x) ff(b, x) = 0;
        for (int xs : flower_[b]) {
            for (int x = 1; x <= n_x_; ++x)
                if (at(g_w_, b, x) == 0 || e_delta(at(g_u_, xs, x), at(g_v_, xs, x)) < e_delta(at(g_u_, b, x), at(g_v_, b, x))) {
                    at(g_u_, b, x) = at(g_u_, xs, x);
                    at(g_v_, b, x) = at(g_v_, xs, x);
                    at(g_w_, b, x) = at(g_w_, xs, x);
                    at(g_u_, x, b) = at(g_u_, x, xs);
                    at(g_v_, x, b) = at(g_v_, x, xs);
                    at(g_w_, x, b) = at(g_w_, x, xs);
                }
            for (int x = 1; x <= n_; ++x)
                if (ff(xs, x)) ff(b, x) = xs;
        }
        set_slack(b);
    }

    void expand_blossom(int b) {
        for (int i : flower_[b]) set_st(i, i);
        const int xr = ff(b, at(g_u_, b, pa_[b]));
        const int pr = get_pr(b, xr);
        for (int i = 0; i < pr; i += 2) {
            const int xs = flower_[b][static_cast<std::size_t>(i)];
            const int xns = flower_[b][static_cast<std::size_t>(i + 1)];
            pa_[xs] = at(g_u_, xns, xs);
            s_[xs] = 1;
            s_[xns] = 0;
            slack_[xs] = 0;
            set_slack(xns);
            q_push(xns);
        }
        s_[xr] = 1;
        pa_[xr] = pa_[b];
        for (std::size_t i = static_cast<std::size_t>(pr) + 1; i < flower_[b].size(); ++i) {
            const int xs = flower_[b][i];
            s_[xs] = -1;
            set_slack(xs);
        }
        st_[b] = 0;
        flower_[b].clear();
    }

    bool on_found_edge(int eu, int ev) {
        const int u = st_[eu];
        const int v = st_[ev];
        if (s_[v] == -1) {
            pa_[v] = eu;
            s_[v] = 1;
            const int nu = st_[match_[v]];
            slack_[v] = slack_[nu] = 0;
            s_[nu] = 0;
            q_push(nu);
        } else if (s_[v] == 0) {
            const int lca = get_lca(u, v);
            if (!lca) {
                augment(u, v);
                augment(v, u);
                return true;
            }
            add_blossom(u, lca, v);
        }
        return false;
    }

    bool grow() {
        std::fill(s_.begin(), s_.begin() + n_x_ + 1, -1);
        std::fill(slack_.begin(), slack_.begin() + n_x_ + 1, 0);
        q_.clear();
        for (int x = 1; x <= n_x_; ++x)
            if (st_[x] == x && !match_[x]) {
                pa_[x] = 0;
                s_[x] = 0;
                q_push(x);
            }
        if (q_.empty()) return false;
        while (true) {
            while (!q_.empty()) {
                const int u = q_.front();
                q_.pop_front();
                if (s_[st_[u]] == 1) continue;
                int stu = st_[u];
                const long long lu = lab_[u];
                const long long* wrow = &g_w_[static_cast<std::size_t>(u) * cap_];
                for (int v = 1; v <= n_; ++v)
                    if (wrow[v] > 0 && stu != st_[v]) {
                        if (lu + lab_[v] - wrow[v] * 2 == 0) {
                            if (on_found_edge(u, v)) return true;
                            stu = st_[u];  // a freshly formed blossom may contain u
                        } else {
                            update_slack(u, st_[v]);
                        }
                    }
            }
            long long d = std::numeric_limits<long long>::max();
            for (int b = n_ + 1; b <= n_x_; ++b)
                if (st_[b] == b && s_[b] == 1) d = std::min(d, lab_[b] / 2);
            for (int x = 1; x <= n_x_; ++x)
                if (st_[x] == x && slack_[x]) {
                    const long long delta = e_delta(at(g_u_, slack_[x], x), at(g_v_, slack_[x], x));
                    if (s_[x] == -1)
                        d = std::min(d, delta);
                    else if (s_[x] == 0)
                        d = std::min(d, delta / 2);
                }
            for (int u = 1; u <= n_; ++u) {
                if (s_[st_[u]] == 0) {
                    if (lab_[u] <= d) return false;
                    lab_[u] -= d;
                } else if (s_[st_[u]] == 1) {
                    lab_[u] += d;
                }
            }
            for (int b = n_ + 1; b <= n_x_; ++b)
                if (st_[b] == b) {
                    if (s_[b] == 0)
                        lab_[b] += d * 2;
                    else if (s_[b] == 1)
                        lab_[b] -= d * 2;
                }
            q_.clear();
            for (int x = 1; x <= n_x_; ++x)
                if (st_[x] == x && slack_[x] && st_[slack_[x]] != x &&
                    e_delta(at(g_u_, slack_[x], x), at(g_v_, slack_[x], x)) == 0)
                    if (on_found_edge(at(g_u_, slack_[x], x), at(g_v_, slack_[x], x))) return true;
            for (int b = n_ + 1; b <= n_x_; ++b)
                if (st_[b] == b && s_[b] == 1 && lab_[b] == 0) expand_blossom(b);
        }
    }

    int n_, cap_, n_x_ = 0, timer_ = 0;
    std::vector<int> g_u_, g_v_;
    std::vector<long long> g_w_;
    std::vector<long long> lab_;
    std::vector<int> match_, slack_, st_, pa_, s_, vis_;
    std::vector<std::vector<int>> flower_;
    std::vector<int> flower_from_;
    std::deque<int> q_;

    template <typename T>
    T& at(std::vector<T>& m, int r, int c) {
        return m[static_cast<std::size_t>(r) * cap_ + c];
    }
    template <typename T>
    const T& at(const std::vector<T>& m, int r, int c) const {
        return m[static_cast<std::size_t>(r) * cap_ + c];
    }
    int& ff(int b, int x) { return flower_from_[static_cast<std::size_t>(b) * (n_ + 1) + x]; }
};

}  // namespace

std::vector<std::pair<int, int>> min_weight_perfect_matching(const Eigen::MatrixXd& points) {
    const int m = static_cast<int>(points.rows());
    if (m % 2 != 0) throw std::invalid_argument("min_weight_perfect_matching: odd point count");
    if (m == 0) return {};

    // Pairwise Euclidean distances, then positive integer maximization
    // weights w = 1 + round((d_max - d) * scale).  Every perfect matching has
    // exactly m/2 pairs, so maximizing the flipped weights minimizes the
    // total distance; quantization is ~2^-30 relative.
    Eigen::MatrixXd dist(m, m);
    for (int i = 0; i < m; ++i) {
        dist(i, i) = 0.0;
        for (int j = i + 1; j < m; ++j) {
            const double d = (points.row(i) - points.row(j)).norm();
            dist(i, j) = d;
            dist(j, i) = d;
        }
    }
    const double d_max = dist.maxCoeff();
    const double scale = static_cast<double>(1LL << 30) / std::max(d_max, 1e-300);
    std::vector<std::vector<long long>> w(static_cast<std::size_t>(m),
                                          std::vector<long long>(static_cast<std::size_t>(m), 0));
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            if (i != j)
                w[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                    1 + static_cast<long long>(std::llround((d_max - dist(i, j)) * scale));

    WeightedBlossom solver(w);
    auto pairs = solver.solve();
    if (static_cast<int>(pairs.size()) != m / 2)
        throw std::runtime_error("min_weight_perfect_matching: matching is not perfect");
    return pairs;
}

int null_quantile(int pairs, double q, int reps, std::mt19937_64& rng) {
    if (pairs < 1) throw std::invalid_argument("null_quantile: need at least one pair");
    if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("null_quantile: q must lie in (0,1)");
    if (reps < 1000) throw std::invalid_argument("null_quantile: fewer than 1000 reps is below the noise floor");

    std::vector<int> labels(static_cast<std::size_t>(2 * pairs), 0);
    for (int i = 0; i < pairs; ++i) labels[static_cast<std::size_t>(i)] = 1;
    std::vector<int> counts(static_cast<std::size_t>(reps));
    for (int r = 0; r < reps; ++r) {
        std::shuffle(labels.begin(), labels.end(), rng);
        int cross = 0;
        for (int i = 0; i < pairs; ++i)
            cross += labels[static_cast<std::size_t>(2 * i)] != labels[static_cast<std::size_t>(2 * i + 1)];
        counts[static_cast<std::size_t>(r)] = cross;
    }
    std::sort(counts.begin(), counts.end());
    const auto idx = static_cast<std::size_t>(
        std::min<double>(reps - 1, std::max(0.0, std::floor(q * reps))));
    return counts[idx];
}

CrossMatchResult cross_match(const SampleMatrix& a, const SampleMatrix& b, double quantile,
                             int reps, std::uint64_t seed, int threshold_override,
                             bool standardize) {
    const Eigen::Index pairs = a.draws.rows();
    if (pairs != b.draws.rows())
        throw std::invalid_argument("cross_match: samples must have equal counts");
    if (a.draws.cols() != b.draws.cols())
        throw std::invalid_argument("cross_match: samples must have equal dimension");
    if (pairs < 1) throw std::invalid_argument("cross_match: empty samples");

    const Eigen::Index m = 2 * pairs;
    Eigen::MatrixXd pool(m, a.draws.cols());
    pool.topRows(pairs) = a.draws;
    pool.bottomRows(pairs) = b.draws;
    if (standardize) {
        for (Eigen::Index j = 0; j < pool.cols(); ++j) {
            const double mean = pool.col(j).mean();
            const double sd =
                std::sqrt((pool.col(j).array() - mean).square().sum() / static_cast<double>(m - 1));
            if (sd > 0.0) pool.col(j) = (pool.col(j).array() - mean) / sd;
        }
    }

    // Canonical point order makes the result independent of argument order.
    std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) {
        for (Eigen::Index j = 0; j < pool.cols(); ++j) {
            if (pool(x, j) < pool(y, j)) return true;
            if (pool(x, j) > pool(y, j)) return false;
        }
        return x < y;
    });
    Eigen::MatrixXd sorted(m, pool.cols());
    for (Eigen::Index i = 0; i < m; ++i) sorted.row(i) = pool.row(order[static_cast<std::size_t>(i)]);

    const auto matched = min_weight_perfect_matching(sorted);

    CrossMatchResult out;
    out.total_pairs = static_cast<int>(pairs);
    for (const auto& [x, y] : matched) {
        const auto px = static_cast<int>(order[static_cast<std::size_t>(x)]);
        const auto py = static_cast<int>(order[static_cast<std::size_t>(y)]);
        out.matching.emplace_back(std::min(px, py), std::max(px, py));
        const bool ax = px < pairs;
        const bool ay = py < pairs;
        if (ax != ay) ++out.cross_count;
    }
    std::sort(out.matching.begin(), out.matching.end());

    if (threshold_override >= 0) {
        out.threshold = threshold_override;
    } else {
        std::mt19937_64 rng(seed);
        out.threshold = null_quantile(static_cast<int>(pairs), quantile, reps, rng);
    }
    out.pass = out.cross_count >= out.threshold;
    return out;
}

}  // namespace bel
