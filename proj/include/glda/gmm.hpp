#pragma once

// Baseline global Gaussian mixture: maximum-likelihood EM on the pooled
// observations with k-means++ restarts, hard assignment, and each subject's
// realized class proportions.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <optional>
#include <vector>

#include "glda/distributions.hpp"
#include "glda/glda.hpp"
#include "glda/kmeans.hpp"
#include "glda/posterior.hpp"
#include "glda/random.hpp"
#include "glda/types.hpp"

namespace glda {

struct GmmFitConfig {
    int K = 3;
    int max_iters = 500;
    double tol = 1e-7; // relative log-likelihood improvement
    int n_restarts = 8;
    std::uint64_t seed = 0;
    double reg_covar = 1e-6;

    void validate() const {
        if (K < 1) throw ValidationError("gmm: K must be at least 1");
        if (max_iters < 1) throw ValidationError("gmm: max_iters must be positive");
        if (!(tol > 0.0)) throw ValidationError("gmm: tol must be positive");
        if (n_restarts < 1) throw ValidationError("gmm: n_restarts must be positive");
        if (!(reg_covar >= 0.0)) throw ValidationError("gmm: reg_covar must be non-negative");
    }
};

struct GmmFit {
    GmmParams params;
    double log_likelihood = -std::numeric_limits<double>::infinity();
    std::vector<double> trace; // log-likelihood before each M-step, last entry at the returned params
    int iterations = 0;
    bool converged = false;
    bool collapsed = false;
    int best_restart = -1;
    int collapsed_restarts = 0;
};

namespace detail {

// N x K matrix of log theta_k + log N(x_n | mu_k, Sigma_k).
inline Eigen::MatrixXd gmm_log_scores(const Eigen::MatrixXd& X, const GmmParams& p) {
    const int K = p.n_components();
    Eigen::MatrixXd scores(X.rows(), K);
    for (int k = 0; k < K; ++k) {
        const auto& c = p.components[k];
        const Eigen::MatrixXd centered = (X.rowwise() - c.mean().transpose()).transpose();
        const Eigen::MatrixXd z = c.chol().matrixL().solve(centered);
        scores.col(k) = (-0.5 * (c.dim() * kLog2Pi + c.log_det() + z.colwise().squaredNorm().array())).matrix().transpose();
        scores.col(k).array() += std::log(p.theta[k]);
    }
    return scores;
}

} // namespace detail

inline GmmParams gmm_initial_params(const Eigen::MatrixXd& X, int K, double reg_covar, Rng& rng) {
    const Eigen::RowVectorXd mean = X.colwise().mean();
    const Eigen::MatrixXd centered = X.rowwise() - mean;
    Eigen::MatrixXd pooled = centered.transpose() * centered / static_cast<double>(X.rows());
    pooled.diagonal().array() += reg_covar;
    GmmParams p;
    p.theta = Eigen::VectorXd::Constant(K, 1.0 / K);
    for (const auto& center : kmeanspp_centers(X, K, rng)) p.components.emplace_back(center, pooled);
    return p;
}

/// EM from given starting parameters. A component whose weight drops below
/// 1 / (10 N) marks the run as collapsed and stops it.
inline GmmFit gmm_em_from(const Eigen::MatrixXd& X, GmmParams params, const GmmFitConfig& cfg) {
    const int K = params.n_components();
    const double N = static_cast<double>(X.rows());
    GmmFit fit;
    for (int it = 0;; ++it) {
        const Eigen::MatrixXd scores = detail::gmm_log_scores(X, params);
        Eigen::VectorXd row_lse(X.rows());
        for (Eigen::Index n = 0; n < X.rows(); ++n) row_lse[n] = log_sum_exp(scores.row(n));
        const double ll = row_lse.sum();
        fit.trace.push_back(ll);
        fit.iterations = it;
        if (it > 0) {
            const double prev = fit.trace[fit.trace.size() - 2];
            if ((ll - prev) / std::abs(prev) < cfg.tol) {
                fit.converged = true;
                break;
            }
        }
        if (it == cfg.max_iters) break;
        const Eigen::MatrixXd resp = (scores.colwise() - row_lse).array().exp();
        const Eigen::VectorXd nk = resp.colwise().sum().transpose();
        GmmParams next;
        next.theta = nk / N;
        for (int k = 0; k < K; ++k) {
            if (next.theta[k] < 1.0 / (10.0 * N)) {
                fit.collapsed = true;
                return fit;
            }
            const Eigen::VectorXd mu = X.transpose() * resp.col(k) / nk[k];
            const Eigen::MatrixXd centered = X.rowwise() - mu.transpose();
            Eigen::MatrixXd cov = centered.transpose() * resp.col(k).asDiagonal() * centered / nk[k];
            cov = 0.5 * (cov + cov.transpose());
            cov.diagonal().array() += cfg.reg_covar;
            try {
                next.components.emplace_back(mu, cov, k);
            } catch (const NumericalError&) {
                fit.collapsed = true;
                return fit;
            }
        }
        params = std::move(next);
    }
    fit.log_likelihood = fit.trace.back();
    fit.params = std::move(params);
    return fit;
}

/// Best of `n_restarts` EM runs by final log-likelihood (lowest restart index
/// on ties). Restarts run concurrently with independent streams.
inline GmmFit gmm_fit(const CohortDataset& data, const GmmFitConfig& cfg) {
    cfg.validate();
    data.validate();
    if (data.n_obs() < cfg.K)
        throw ValidationError("gmm: fewer observations (" + std::to_string(data.n_obs()) + ") than components (" +
                              std::to_string(cfg.K) + ")");
    const Eigen::MatrixXd& X = data.values;
    auto run = [&X, &cfg](int r) {
        Rng rng = make_stream(cfg.seed, stream::gmm_restart + static_cast<std::uint64_t>(r));
        try {
            return gmm_em_from(X, gmm_initial_params(X, cfg.K, cfg.reg_covar, rng), cfg);
        } catch (const NumericalError&) {
            GmmFit failed;
            failed.collapsed = true;
            return failed;
        }
    };
    std::vector<std::future<GmmFit>> futures;
    for (int r = 0; r < cfg.n_restarts; ++r) futures.push_back(std::async(std::launch::async, run, r));
    GmmFit best;
    int collapsed = 0;
    for (int r = 0; r < cfg.n_restarts; ++r) {
        GmmFit f = futures[r].get();
        if (f.collapsed) {
            ++collapsed;
            continue;
        }
        if (best.best_restart < 0 || f.log_likelihood > best.log_likelihood) {
            best = std::move(f);
            best.best_restart = r;
        }
    }
    if (best.best_restart < 0)
        throw NumericalError("gmm: all " + std::to_string(cfg.n_restarts) + " restarts collapsed");
    best.collapsed_restarts = collapsed;
    return best;
}

/// Bayesian alternative to EM: the collapsed Gibbs sampler run with every
/// observation pooled into a single group, so one weight vector is shared.
inline GmmParams gmm_fit_gibbs(const CohortDataset& data, const GldaFitConfig& cfg) {
    CohortDataset pooled = data;
    pooled.subject_ids = {"pooled"};
    pooled.subject.assign(data.n_obs(), 0);
    const GldaPosterior post = glda_fit(pooled, cfg);
    GmmParams out;
    out.theta = post.params.theta.row(0).transpose();
    out.components = post.params.components;
    return out;
}

inline AssignmentTrace gmm_hard_assign(const CohortDataset& data, const GmmParams& params) {
    const int K = params.n_components();
    if (params.theta.size() != K) throw ValidationError("gmm assign: theta length does not match K");
    const Eigen::RowVectorXd log_theta = params.theta.array().log().transpose();
    const Eigen::MatrixXd log_weights = log_theta.replicate(data.n_subjects(), 1);
    return detail::assign_with_log_weights(data, log_weights, params.components);
}

/// Fraction of each subject's observations carrying each hard label.
inline Eigen::MatrixXd realized_proportions(const AssignmentTrace& trace, int M, int K) {
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(M, K);
    for (int n = 0; n < trace.n_obs(); ++n) {
        const int m = trace.subject[n];
        const int k = trace.labels[n];
        if (m < 0 || m >= M || k < 0 || k >= K) throw ValidationError("realized proportions: label or subject out of range");
        counts(m, k) += 1.0;
    }
    for (int m = 0; m < M; ++m) {
        const double total = counts.row(m).sum();
        if (total == 0.0) throw ValidationError("realized proportions: subject " + std::to_string(m) + " has no observations");
        counts.row(m) /= total;
    }
    return counts;
}

/// Same as realized_proportions but averaging responsibilities instead of counting labels.
inline Eigen::MatrixXd soft_proportions(const AssignmentTrace& trace, int M, int K) {
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(M, K);
    Eigen::VectorXd sizes = Eigen::VectorXd::Zero(M);
    for (int n = 0; n < trace.n_obs(); ++n) {
        sums.row(trace.subject[n]) += trace.responsibilities.row(n);
        sizes[trace.subject[n]] += 1.0;
    }
    for (int m = 0; m < M; ++m) {
        if (sizes[m] == 0.0) throw ValidationError("soft proportions: subject " + std::to_string(m) + " has no observations");
        sums.row(m) /= sizes[m];
    }
    return sums;
}

} // namespace glda
