#pragma once

#include <Eigen/Dense>

#include <limits>
#include <random>
#include <vector>

#include "glda/errors.hpp"
#include "glda/random.hpp"

namespace glda {

/// k-means++ seeding: rows of X chosen with probability proportional to the
/// squared distance to the nearest center picked so far.
inline std::vector<Eigen::VectorXd> kmeanspp_centers(const Eigen::MatrixXd& X, int K, Rng& rng) {
    const Eigen::Index N = X.rows();
    if (K < 1 || N < K) throw ValidationError("k-means++: need at least K observations");
    std::vector<Eigen::VectorXd> centers;
    centers.reserve(K);
    std::uniform_int_distribution<Eigen::Index> pick(0, N - 1);
    centers.push_back(X.row(pick(rng)).transpose());
    Eigen::VectorXd d2 = (X.rowwise() - centers[0].transpose()).rowwise().squaredNorm();
    for (int k = 1; k < K; ++k) {
        const double total = d2.sum();
        Eigen::Index chosen = 0;
        if (total > 0.0) {
            const double target = std::uniform_real_distribution<double>(0.0, total)(rng);
            double acc = 0.0;
            chosen = N - 1;
            for (Eigen::Index n = 0; n < N; ++n) {
                acc += d2[n];
                if (target < acc && d2[n] > 0.0) {
                    chosen = n;
                    break;
                }
            }
        } else {
            chosen = pick(rng);
        }
        centers.push_back(X.row(chosen).transpose());
        d2 = d2.cwiseMin((X.rowwise() - centers.back().transpose()).rowwise().squaredNorm());
    }
    return centers;
}

inline std::vector<int> nearest_center(const Eigen::MatrixXd& X, const std::vector<Eigen::VectorXd>& centers) {
    std::vector<int> labels(X.rows(), 0);
    for (Eigen::Index n = 0; n < X.rows(); ++n) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < centers.size(); ++k) {
            const double d = (X.row(n).transpose() - centers[k]).squaredNorm();
            if (d < best) {
                best = d;
                labels[n] = static_cast<int>(k);
            }
        }
    }
    return labels;
}

/// Lloyd iterations from k-means++ seeds; returns hard labels.
inline std::vector<int> kmeans_labels(const Eigen::MatrixXd& X, int K, Rng& rng, int max_iters = 25) {
    auto centers = kmeanspp_centers(X, K, rng);
    auto labels = nearest_center(X, centers);
    for (int it = 0; it < max_iters; ++it) {
        std::vector<int> counts(K, 0);
        std::vector<Eigen::VectorXd> sums(K, Eigen::VectorXd::Zero(X.cols()));
        for (Eigen::Index n = 0; n < X.rows(); ++n) {
            ++counts[labels[n]];
            sums[labels[n]] += X.row(n).transpose();
        }
        for (int k = 0; k < K; ++k)
            if (counts[k] > 0) centers[k] = sums[k] / counts[k];
        auto next = nearest_center(X, centers);
        if (next == labels) break;
        labels = std::move(next);
    }
    return labels;
}

} // namespace glda
