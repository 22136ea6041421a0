#pragma once

// Conjugate Normal-Inverse-Wishart updates and the Student-t posterior
// predictive used by the collapsed sampler.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

#include "glda/distributions.hpp"
#include "glda/types.hpp"

namespace glda {

/// Added to posterior scale matrices before factorization; tiny clusters can
/// make the scatter rank-deficient.
inline constexpr double kScatterJitter = 1e-9;

/// Count, sum and sum of outer products of the observations in one component.
struct NiwStats {
    int count = 0;
    Eigen::VectorXd sum;
    Eigen::MatrixXd outer;

    NiwStats() = default;
    explicit NiwStats(int V) : sum(Eigen::VectorXd::Zero(V)), outer(Eigen::MatrixXd::Zero(V, V)) {}

    template <typename Derived>
    void add(const Eigen::MatrixBase<Derived>& x) {
        ++count;
        sum += x;
        outer.noalias() += x * x.transpose();
    }

    template <typename Derived>
    void remove(const Eigen::MatrixBase<Derived>& x) {
        --count;
        sum -= x;
        outer.noalias() -= x * x.transpose();
    }
};

/// Batch conjugate update from sufficient statistics.
inline Niw niw_posterior(const Niw& prior, const NiwStats& stats) {
    if (stats.count == 0) return prior;
    const double n = stats.count;
    const Eigen::VectorXd mean = stats.sum / n;
    const Eigen::MatrixXd scatter = stats.outer - n * mean * mean.transpose();
    const Eigen::VectorXd diff = mean - prior.mu0;
    Niw post;
    post.lambda = prior.lambda + n;
    post.nu = prior.nu + n;
    post.mu0 = (prior.lambda * prior.mu0 + stats.sum) / post.lambda;
    post.psi = prior.psi + scatter + (prior.lambda * n / post.lambda) * diff * diff.transpose();
    post.psi = 0.5 * (post.psi + post.psi.transpose());
    return post;
}

/// Posterior after absorbing a single observation.
inline Niw niw_update_one(const Niw& current, const Eigen::VectorXd& x) {
    Niw post;
    post.lambda = current.lambda + 1.0;
    post.nu = current.nu + 1.0;
    post.mu0 = (current.lambda * current.mu0 + x) / post.lambda;
    const Eigen::VectorXd diff = x - current.mu0;
    post.psi = current.psi + (current.lambda / post.lambda) * diff * diff.transpose();
    return post;
}

/// Multivariate Student-t posterior predictive of an NIW posterior:
/// df = nu - V + 1, scale = psi (lambda + 1) / (lambda df).
class NiwPredictive {
public:
    NiwPredictive() = default;

    explicit NiwPredictive(const Niw& post, int component = -1) {
        const int V = post.dim();
        df_ = post.nu - V + 1.0;
        loc_ = post.mu0;
        Eigen::MatrixXd psi = post.psi;
        psi.diagonal().array() += kScatterJitter;
        Eigen::LLT<Eigen::MatrixXd> llt(psi);
        if (llt.info() != Eigen::Success)
            throw NumericalError("posterior scale matrix is not positive-definite", component);
        const double scale = (post.lambda + 1.0) / (post.lambda * df_);
        chol_ = llt.matrixL();
        chol_ *= std::sqrt(scale);
        const double log_det = 2.0 * chol_.diagonal().array().log().sum();
        log_norm_ = std::lgamma(0.5 * (df_ + V)) - std::lgamma(0.5 * df_) - 0.5 * V * std::log(df_ * std::numbers::pi) -
                    0.5 * log_det;
    }

    template <typename Derived>
    [[nodiscard]] double log_pdf(const Eigen::MatrixBase<Derived>& x) const {
        const Eigen::VectorXd z = chol_.triangularView<Eigen::Lower>().solve((x - loc_).eval());
        return log_norm_ - 0.5 * (df_ + loc_.size()) * std::log1p(z.squaredNorm() / df_);
    }

    [[nodiscard]] double df() const { return df_; }
    [[nodiscard]] const Eigen::VectorXd& loc() const { return loc_; }
    [[nodiscard]] const Eigen::MatrixXd& scale_chol() const { return chol_; }

private:
    Eigen::VectorXd loc_;
    Eigen::MatrixXd chol_;
    double df_ = 1.0;
    double log_norm_ = 0.0;
};

} // namespace glda
