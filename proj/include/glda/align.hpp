#pragma once

// Label-switching repair: match the components of a draw to a reference set
// by optimal assignment on squared distances between means.

#include <Eigen/Dense>

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

#include "glda/errors.hpp"

namespace glda {

/// perm[i] is the candidate component that lands in reference slot i.
using Permutation = std::vector<int>;

namespace detail {

/// Minimum-cost perfect matching on a square cost matrix (Kuhn-Munkres with
/// potentials, O(K^3)). Returns row -> column.
inline Permutation hungarian(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> match(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = match[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    Permutation out(n, 0);
    for (int j = 1; j <= n; ++j) out[match[j] - 1] = j - 1;
    return out;
}

inline Permutation exhaustive_assignment(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    Permutation perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Permutation best = perm;
    double best_cost = std::numeric_limits<double>::infinity();
    do {
        double c = 0.0;
        for (int i = 0; i < n; ++i) c += cost(i, perm[i]);
        // Lexicographic order plus strict comparison: the first optimum wins.
        if (c < best_cost) {
            best_cost = c;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

} // namespace detail

inline Eigen::MatrixXd squared_distance_cost(const std::vector<Eigen::VectorXd>& reference,
                                             const std::vector<Eigen::VectorXd>& candidate) {
    const int K = static_cast<int>(reference.size());
    Eigen::MatrixXd cost(K, K);
    for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j) cost(i, j) = (reference[i] - candidate[j]).squaredNorm();
    return cost;
}

/// Permutation minimizing the total squared distance between reference
/// means and permuted candidate means. Exhaustive for K <= 6, Hungarian above.
inline Permutation align_labels(const std::vector<Eigen::VectorXd>& reference,
                                const std::vector<Eigen::VectorXd>& candidate) {
    if (reference.size() != candidate.size())
        throw ValidationError("align_labels: component counts differ (" + std::to_string(reference.size()) + " vs " +
                              std::to_string(candidate.size()) + ")");
    if (reference.empty()) throw ValidationError("align_labels: no components");
    for (std::size_t k = 0; k < reference.size(); ++k)
        if (reference[k].size() != reference[0].size() || candidate[k].size() != reference[0].size())
            throw ValidationError("align_labels: mean dimensions differ");
    const Eigen::MatrixXd cost = squared_distance_cost(reference, candidate);
    return reference.size() <= 6 ? detail::exhaustive_assignment(cost) : detail::hungarian(cost);
}

template <typename T>
std::vector<T> apply_permutation(const std::vector<T>& items, const Permutation& perm) {
    std::vector<T> out;
    out.reserve(perm.size());
    for (int p : perm) out.push_back(items[p]);
    return out;
}

/// Reorders the columns of an (M x K) weight matrix.
inline Eigen::MatrixXd permute_columns(const Eigen::MatrixXd& m, const Permutation& perm) {
    Eigen::MatrixXd out(m.rows(), m.cols());
    for (std::size_t i = 0; i < perm.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = m.col(perm[i]);
    return out;
}

} // namespace glda
