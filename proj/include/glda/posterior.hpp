#pragma once

// Per-observation membership probabilities
//   P(z_n = k | x_n) = theta_{m,k} N(x_n | mu_k, Sigma_k) / sum_j theta_{m,j} N(x_n | mu_j, Sigma_j)
// and the per-subject state series built from their argmax labels.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "glda/distributions.hpp"
#include "glda/types.hpp"

namespace glda {

namespace detail {

/// Shared by GLDA and GMM assignment: row m of `log_weights` holds the log
/// mixture weights used for subject m's observations.
inline AssignmentTrace assign_with_log_weights(const CohortDataset& data, const Eigen::MatrixXd& log_weights,
                                               const std::vector<Gaussian>& components) {
    const int N = data.n_obs();
    const int K = static_cast<int>(components.size());
    if (K < 1) throw ValidationError("assignment: no components");
    if (log_weights.rows() != data.n_subjects() || log_weights.cols() != K)
        throw ValidationError("assignment: weight matrix must be M x K");
    for (const auto& c : components)
        if (c.dim() != data.n_vars())
            throw ValidationError("assignment: component dimension " + std::to_string(c.dim()) +
                                  " does not match data dimension " + std::to_string(data.n_vars()));
    AssignmentTrace out;
    out.responsibilities.resize(N, K);
    out.labels.resize(N);
    out.subject = data.subject;
    out.timestamp = data.timestamp;
    out.subject_ids = data.subject_ids;
    out.out_of_sample.assign(data.n_subjects(), false);
    Eigen::VectorXd scores(K);
    for (int n = 0; n < N; ++n) {
        const auto x = data.values.row(n).transpose();
        const int m = data.subject[n];
        for (int k = 0; k < K; ++k) {
            const double lw = log_weights(m, k);
            // Zero-weight components get zero responsibility even at their mode.
            scores[k] = lw == -std::numeric_limits<double>::infinity() ? lw : lw + components[k].log_pdf(x);
        }
        const double total = log_sum_exp(scores);
        if (!std::isfinite(total))
            throw NumericalError("assignment: observation " + std::to_string(n) + " has no finite membership score");
        int best = 0;
        for (int k = 0; k < K; ++k) {
            out.responsibilities(n, k) = std::exp(scores[k] - total);
            if (out.responsibilities(n, k) > out.responsibilities(n, best)) best = k;
        }
        out.labels[n] = best;
    }
    return out;
}

} // namespace detail

/// Membership under fitted per-subject weights. Subjects of `data` that have
/// no row in `params` use the symmetric prior mean 1/K and are flagged in
/// `out_of_sample`.
inline AssignmentTrace glda_membership(const CohortDataset& data, const GldaParams& params) {
    const int K = params.n_components();
    const int M = data.n_subjects();
    Eigen::MatrixXd log_weights(M, K);
    std::vector<bool> oos(M, false);
    std::unordered_map<std::string, int> row_of;
    if (params.subject_ids.empty()) {
        if (params.theta.rows() != M) throw ValidationError("membership: theta rows do not match subject count");
        for (int m = 0; m < M; ++m) row_of[data.subject_ids[m]] = m;
    } else {
        for (int r = 0; r < static_cast<int>(params.subject_ids.size()); ++r) row_of[params.subject_ids[r]] = r;
    }
    if (params.theta.cols() != K) throw ValidationError("membership: theta columns do not match K");
    for (int m = 0; m < M; ++m) {
        const auto it = row_of.find(data.subject_ids[m]);
        if (it == row_of.end()) {
            log_weights.row(m).setConstant(-std::log(static_cast<double>(K)));
            oos[m] = true;
        } else {
            log_weights.row(m) = params.theta.row(it->second).array().log();
        }
    }
    AssignmentTrace out = detail::assign_with_log_weights(data, log_weights, params.components);
    out.out_of_sample = std::move(oos);
    return out;
}

struct StatePoint {
    std::optional<Timestamp> timestamp;
    int row = 0; // observation index in the cohort
    int label = 0;
};

/// A subject's hard labels in time order; ties keep input order.
inline std::vector<StatePoint> state_series(const AssignmentTrace& trace, int subject) {
    std::vector<StatePoint> out;
    for (int n = 0; n < trace.n_obs(); ++n) {
        if (trace.subject[n] != subject) continue;
        if (static_cast<int>(trace.timestamp.size()) <= n || !trace.timestamp[n])
            throw ValidationError("state series: observation " + std::to_string(n) +
                                  " has no timestamp; use state_series_by_index for timestamp-free data");
        out.push_back({trace.timestamp[n], n, trace.labels[n]});
    }
    if (out.empty()) throw ValidationError("state series: subject " + std::to_string(subject) + " has no observations");
    std::stable_sort(out.begin(), out.end(),
                     [](const StatePoint& a, const StatePoint& b) { return *a.timestamp < *b.timestamp; });
    return out;
}

/// Timestamp-free variant: the subject's labels in input order.
inline std::vector<StatePoint> state_series_by_index(const AssignmentTrace& trace, int subject) {
    std::vector<StatePoint> out;
    for (int n = 0; n < trace.n_obs(); ++n)
        if (trace.subject[n] == subject)
            out.push_back({trace.timestamp.size() > static_cast<std::size_t>(n) ? trace.timestamp[n] : std::nullopt, n,
                           trace.labels[n]});
    if (out.empty()) throw ValidationError("state series: subject " + std::to_string(subject) + " has no observations");
    return out;
}

} // namespace glda
