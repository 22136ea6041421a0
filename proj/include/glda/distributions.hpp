#pragma once

// Elementary densities and samplers shared by inference and generation.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "glda/errors.hpp"
#include "glda/random.hpp"
#include "glda/types.hpp"

namespace glda {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

template <typename Derived>
double log_sum_exp(const Eigen::DenseBase<Derived>& v) {
    const double hi = v.maxCoeff();
    if (hi == -std::numeric_limits<double>::infinity()) return hi;
    return hi + std::log((v.derived().array() - hi).exp().sum());
}

/// log N(x | mu, sigma) through a Cholesky factorization of sigma.
inline double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                         int component = -1) {
    if (x.size() != mu.size()) throw ValidationError("mvn_logpdf: x and mu differ in length");
    return Gaussian(mu, sigma, component).log_pdf(x);
}

/// log of the multivariate gamma function Gamma_V(a).
inline double log_multigamma(double a, int V) {
    double out = 0.25 * V * (V - 1) * std::log(std::numbers::pi);
    for (int j = 0; j < V; ++j) out += std::lgamma(a - 0.5 * j);
    return out;
}

inline double dirichlet_logpdf(const Eigen::VectorXd& theta, const Eigen::VectorXd& alpha) {
    if (theta.size() != alpha.size()) throw ValidationError("dirichlet_logpdf: size mismatch");
    double out = std::lgamma(alpha.sum());
    for (Eigen::Index k = 0; k < alpha.size(); ++k) {
        out -= std::lgamma(alpha[k]);
        if (alpha[k] != 1.0) out += (alpha[k] - 1.0) * std::log(theta[k]);
    }
    return out;
}

/// log IW(sigma | nu, psi) with density proportional to
/// |sigma|^{-(nu+V+1)/2} exp(-tr(psi sigma^{-1}) / 2).
inline double inverse_wishart_logpdf(const Eigen::MatrixXd& sigma, double nu, const Eigen::MatrixXd& psi) {
    const int V = static_cast<int>(psi.rows());
    const Gaussian s(Eigen::VectorXd::Zero(V), sigma);
    const Gaussian p(Eigen::VectorXd::Zero(V), psi);
    const Eigen::MatrixXd sigma_inv_psi = s.chol().solve(psi);
    return 0.5 * nu * p.log_det() - 0.5 * nu * V * std::numbers::ln2 - log_multigamma(0.5 * nu, V) -
           0.5 * (nu + V + 1.0) * s.log_det() - 0.5 * sigma_inv_psi.trace();
}

inline double niw_logpdf(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, const Niw& niw) {
    return mvn_logpdf(mu, niw.mu0, sigma / niw.lambda) + inverse_wishart_logpdf(sigma, niw.nu, niw.psi);
}

/// Multivariate Student-t log-density with `df` degrees of freedom and scale
/// matrix given by its lower Cholesky factor.
inline double student_t_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& loc, const Eigen::MatrixXd& scale_chol,
                               double df) {
    const int V = static_cast<int>(loc.size());
    const Eigen::VectorXd z = scale_chol.triangularView<Eigen::Lower>().solve(x - loc);
    const double log_det = 2.0 * scale_chol.diagonal().array().log().sum();
    return std::lgamma(0.5 * (df + V)) - std::lgamma(0.5 * df) - 0.5 * V * std::log(df * std::numbers::pi) -
           0.5 * log_det - 0.5 * (df + V) * std::log1p(z.squaredNorm() / df);
}

namespace detail {

inline double uniform_open(Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double v = 0.0;
    while (v == 0.0) v = u(rng);
    return v;
}

// log of a Gamma(shape, 1) draw. Shapes below one use
// Gamma(a) = Gamma(a + 1) * U^{1/a}, taken in log space so tiny shapes
// do not underflow to zero.
inline double log_gamma_draw(double shape, Rng& rng) {
    if (shape >= 1.0) {
        std::gamma_distribution<double> g(shape, 1.0);
        double v = 0.0;
        while (v == 0.0) v = g(rng);
        return std::log(v);
    }
    std::gamma_distribution<double> g(shape + 1.0, 1.0);
    double v = 0.0;
    while (v == 0.0) v = g(rng);
    return std::log(v) + std::log(uniform_open(rng)) / shape;
}

} // namespace detail

/// A point on the K-simplex from K gamma draws normalized by their sum.
inline Eigen::VectorXd dirichlet_sample(const Eigen::VectorXd& alpha, Rng& rng) {
    const Eigen::Index K = alpha.size();
    if (K < 1) throw ValidationError("dirichlet_sample: empty concentration vector");
    for (Eigen::Index k = 0; k < K; ++k)
        if (!(alpha[k] > 0.0) || !std::isfinite(alpha[k]))
            throw ValidationError("dirichlet_sample: concentrations must be positive and finite");
    if (K == 1) return Eigen::VectorXd::Ones(1);
    Eigen::VectorXd logs(K);
    for (Eigen::Index k = 0; k < K; ++k) logs[k] = detail::log_gamma_draw(alpha[k], rng);
    Eigen::VectorXd w = (logs.array() - logs.maxCoeff()).exp();
    return w / w.sum();
}

/// Sigma ~ IW(nu, psi) by the Bartlett decomposition: with psi = L L^T and
/// A the Bartlett factor of a W(nu, I) draw, Sigma = (L A^{-T}) (L A^{-T})^T.
inline Eigen::MatrixXd inverse_wishart_sample(double nu, const Eigen::MatrixXd& psi, Rng& rng) {
    const int V = static_cast<int>(psi.rows());
    Eigen::LLT<Eigen::MatrixXd> llt(psi);
    if (llt.info() != Eigen::Success) throw ValidationError("inverse_wishart_sample: psi is not positive-definite");
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(V, V);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int i = 0; i < V; ++i) {
        std::chi_squared_distribution<double> chi2(nu - i);
        A(i, i) = std::sqrt(chi2(rng));
        for (int j = 0; j < i; ++j) A(i, j) = normal(rng);
    }
    // A^{-T} is upper triangular.
    const Eigen::MatrixXd a_inv_t =
        A.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(V, V)).transpose();
    const Eigen::MatrixXd m = llt.matrixL() * a_inv_t;
    Eigen::MatrixXd sigma = m * m.transpose();
    return 0.5 * (sigma + sigma.transpose());
}

struct NiwDraw {
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;
};

/// Sigma ~ IW(nu, psi), then mu ~ N(mu0, Sigma / lambda).
inline NiwDraw niw_sample(const Niw& niw, Rng& rng) {
    niw.validate();
    const int V = niw.dim();
    NiwDraw out;
    out.sigma = inverse_wishart_sample(niw.nu, niw.psi, rng);
    Eigen::LLT<Eigen::MatrixXd> llt(out.sigma);
    if (llt.info() != Eigen::Success) throw NumericalError("niw_sample: drawn covariance is not positive-definite");
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd z(V);
    for (int v = 0; v < V; ++v) z[v] = normal(rng);
    out.mu = niw.mu0 + llt.matrixL() * z / std::sqrt(niw.lambda);
    return out;
}

/// Index k drawn with probability proportional to exp(log_weights[k]).
inline int categorical_sample(const Eigen::VectorXd& log_weights, Rng& rng) {
    const Eigen::Index K = log_weights.size();
    if (K < 1) throw ValidationError("categorical_sample: empty weight vector");
    double hi = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < K; ++k) {
        if (std::isnan(log_weights[k]) || log_weights[k] == std::numeric_limits<double>::infinity())
            throw NumericalError("categorical_sample: NaN or +inf log-weight");
        hi = std::max(hi, log_weights[k]);
    }
    if (hi == -std::numeric_limits<double>::infinity())
        throw NumericalError("categorical_sample: all log-weights are -inf");
    const Eigen::VectorXd w = (log_weights.array() - hi).exp();
    const double target = std::uniform_real_distribution<double>(0.0, 1.0)(rng) * w.sum();
    double acc = 0.0;
    int last = 0;
    for (Eigen::Index k = 0; k < K; ++k) {
        if (w[k] <= 0.0) continue;
        acc += w[k];
        last = static_cast<int>(k);
        if (target < acc) return last;
    }
    return last;
}

} // namespace glda
