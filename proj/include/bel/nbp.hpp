#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "bel/samplers.hpp"

namespace bel {

struct CrossMatchResult {
    int cross_count = 0;
    int total_pairs = 0;
    int threshold = 0;
    bool pass = false;
    std::vector<std::pair<int, int>> matching;  // indices into the pooled array
};

/// Exact minimum-total-distance perfect matching of an even point set
/// (blossom primal-dual on the complete graph, O(N^3)).  Distances are
/// Euclidean; weights are scaled to integers internally so the duals stay
/// exact.  Throws on an odd point count.
std::vector<std::pair<int, int>> min_weight_perfect_matching(const Eigen::MatrixXd& points);

/// Cross-match statistic: pool the two equally sized samples, match the
/// pooled points, and count pairs with one member from each source.  The
/// pass threshold is the lower q-quantile of the exact null distribution,
/// estimated by label simulation (or supplied directly).
CrossMatchResult cross_match(const SampleMatrix& a, const SampleMatrix& b, double quantile = 0.05,
                             int reps = 100000, std::uint64_t seed = 2024,
                             int threshold_override = -1, bool standardize = false);

/// Lower empirical q-quantile of the null cross-match count: N pairs from a
/// random 2-coloring of 2N matched points, N of each color.  The matching
/// itself is label-independent, so no geometry enters.  reps < 1000 is
/// rejected as below the noise floor.
int null_quantile(int pairs, double q, int reps, std::mt19937_64& rng);

}  // namespace bel
