#pragma once

// Synthetic cohorts sampled from the GLDA and GMM generative processes, with
// ground truth returned alongside the data.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "glda/distributions.hpp"
#include "glda/random.hpp"
#include "glda/types.hpp"

namespace glda {

/// outcome = intercept + coefficients . theta_m + N(0, noise_sd^2)
struct OutcomeRule {
    std::string name = "outcome";
    Eigen::VectorXd coefficients;
    double intercept = 0.0;
    double noise_sd = 4.0;

    /// 40 * theta_{m,0} + N(0, 4^2).
    static OutcomeRule first_class(int K, std::string name = "outcome", double coefficient = 40.0, double noise_sd = 4.0) {
        OutcomeRule r;
        r.name = std::move(name);
        r.coefficients = Eigen::VectorXd::Zero(K);
        r.coefficients[0] = coefficient;
        r.noise_sd = noise_sd;
        return r;
    }
};

struct SynthConfig {
    int M = 45;
    int K = 3;
    int V = 4;
    std::vector<int> obs_per_subject{120}; // one entry for all subjects, or one per subject
    double alpha = 1.0;                    // small: heterogeneous subjects; large: near-identical subjects
    double mean_separation = 4.0;
    double covariance_scale = 1.0;
    std::vector<OutcomeRule> outcome_rules;
    std::uint64_t seed = 0;
    bool niw_means = false;            // draw (mu_k, Sigma_k) from the NIW prior instead of placing them
    std::optional<PriorConfig> prior;  // for niw_means; PriorConfig::defaults(V) when empty
    std::int64_t start_time = 1444262400; // 2015-10-08T00:00:00Z
    std::int64_t interval_seconds = 21600;

    [[nodiscard]] int obs_for(int m) const { return obs_per_subject.size() == 1 ? obs_per_subject[0] : obs_per_subject[m]; }

    void validate() const {
        if (M < 1 || K < 1 || V < 1) throw ValidationError("synth: M, K and V must be positive");
        if (obs_per_subject.size() != 1 && static_cast<int>(obs_per_subject.size()) != M)
            throw ValidationError("synth: obs_per_subject must have 1 or M entries");
        for (int n : obs_per_subject)
            if (n < 1) throw ValidationError("synth: observation counts must be positive");
        if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ValidationError("synth: alpha must be positive");
        if (!(mean_separation >= 0.0)) throw ValidationError("synth: mean_separation must be non-negative");
        if (!(covariance_scale > 0.0)) throw ValidationError("synth: covariance_scale must be positive");
        if (!niw_means && K > 2 * V)
            throw ValidationError("synth: placed means need K <= 2V (got K=" + std::to_string(K) + ", V=" +
                                  std::to_string(V) + "); use NIW-drawn means instead");
        for (const auto& r : outcome_rules) {
            if (r.coefficients.size() != K) throw ValidationError("synth: outcome rule '" + r.name + "' needs K coefficients");
            if (!(r.noise_sd >= 0.0)) throw ValidationError("synth: outcome noise sd must be non-negative");
        }
        if (prior) prior->validate();
    }
};

/// Component k sits at separation * d_k, where d_k = e_k for k < V and
/// d_k = -e_{k-V} for V <= k < 2V.
inline std::vector<Eigen::VectorXd> placed_means(int K, int V, double separation) {
    std::vector<Eigen::VectorXd> out;
    for (int k = 0; k < K; ++k) {
        Eigen::VectorXd mu = Eigen::VectorXd::Zero(V);
        mu[k % V] = k < V ? separation : -separation;
        out.push_back(std::move(mu));
    }
    return out;
}

struct SynthGlda {
    CohortDataset data;
    GldaParams truth;
    std::vector<int> labels;
    std::optional<OutcomeTable> outcomes;
};

struct SynthGmm {
    CohortDataset data;
    GmmParams truth;
    std::vector<int> labels;
};

namespace detail {

inline std::vector<Gaussian> synth_components(const SynthConfig& cfg, Rng& rng) {
    std::vector<Gaussian> comps;
    if (cfg.niw_means) {
        const PriorConfig prior = cfg.prior.value_or(PriorConfig::defaults(cfg.V));
        for (int k = 0; k < cfg.K; ++k) {
            const NiwDraw d = niw_sample(prior.niw, rng);
            comps.emplace_back(d.mu, d.sigma, k);
        }
        return comps;
    }
    const Eigen::MatrixXd cov = cfg.covariance_scale * Eigen::MatrixXd::Identity(cfg.V, cfg.V);
    for (auto& mu : placed_means(cfg.K, cfg.V, cfg.mean_separation)) comps.emplace_back(std::move(mu), cov);
    return comps;
}

inline std::string synth_subject_id(int m, int M) {
    std::string digits = std::to_string(m + 1);
    const std::size_t width = std::max<std::size_t>(3, std::to_string(M).size());
    if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
    return "S" + digits;
}

// Draws labels and values for every subject given its weight row.
inline void synth_observations(const SynthConfig& cfg, const Eigen::MatrixXd& theta, const std::vector<Gaussian>& comps,
                               CohortDataset& data, std::vector<int>& labels) {
    int N = 0;
    for (int m = 0; m < cfg.M; ++m) N += cfg.obs_for(m);
    data.values.resize(N, cfg.V);
    data.subject.reserve(N);
    data.timestamp.reserve(N);
    labels.reserve(N);
    for (int m = 0; m < cfg.M; ++m) data.subject_ids.push_back(synth_subject_id(m, cfg.M));
    for (int v = 0; v < cfg.V; ++v) data.variable_names.push_back("v" + std::to_string(v + 1));
    int n = 0;
    for (int m = 0; m < cfg.M; ++m) {
        Rng rng = make_stream(cfg.seed, stream::synth_subject + static_cast<std::uint64_t>(m));
        std::normal_distribution<double> normal(0.0, 1.0);
        const Eigen::VectorXd log_theta = theta.row(m).transpose().array().log();
        for (int i = 0; i < cfg.obs_for(m); ++i, ++n) {
            const int z = categorical_sample(log_theta, rng);
            Eigen::VectorXd eps(cfg.V);
            for (int v = 0; v < cfg.V; ++v) eps[v] = normal(rng);
            data.values.row(n) = (comps[z].mean() + comps[z].chol().matrixL() * eps).transpose();
            data.subject.push_back(m);
            const std::int64_t secs = cfg.start_time + static_cast<std::int64_t>(i) * cfg.interval_seconds;
            data.timestamp.push_back(Timestamp{secs * 1000000, std::to_string(secs)});
            labels.push_back(z);
        }
    }
}

} // namespace detail

/// theta_m ~ Dirichlet(alpha), z ~ Categorical(theta_m), x ~ N(mu_z, Sigma_z),
/// plus outcomes from `outcome_rules` applied to the true theta rows.
inline SynthGlda generate_glda(const SynthConfig& cfg) {
    cfg.validate();
    Rng global = make_stream(cfg.seed, stream::synth_global);
    SynthGlda out;
    out.truth.components = detail::synth_components(cfg, global);
    out.truth.theta.resize(cfg.M, cfg.K);
    const Eigen::VectorXd conc = Eigen::VectorXd::Constant(cfg.K, cfg.alpha);
    for (int m = 0; m < cfg.M; ++m) {
        Rng rng = make_stream(cfg.seed, stream::synth_weights + static_cast<std::uint64_t>(m));
        out.truth.theta.row(m) = dirichlet_sample(conc, rng).transpose();
    }
    detail::synth_observations(cfg, out.truth.theta, out.truth.components, out.data, out.labels);
    out.truth.subject_ids = out.data.subject_ids;
    if (!cfg.outcome_rules.empty()) {
        Rng rng = make_stream(cfg.seed, stream::synth_outcome);
        std::normal_distribution<double> normal(0.0, 1.0);
        OutcomeTable o;
        o.subject_ids = out.data.subject_ids;
        for (const auto& r : cfg.outcome_rules) o.outcome_names.push_back(r.name);
        o.values.resize(cfg.M, static_cast<Eigen::Index>(cfg.outcome_rules.size()));
        for (int m = 0; m < cfg.M; ++m)
            for (std::size_t j = 0; j < cfg.outcome_rules.size(); ++j) {
                const auto& r = cfg.outcome_rules[j];
                o.values(m, static_cast<Eigen::Index>(j)) =
                    r.intercept + out.truth.theta.row(m).dot(r.coefficients.transpose()) + r.noise_sd * normal(rng);
            }
        out.outcomes = std::move(o);
    }
    return out;
}

/// One global theta ~ Dirichlet(alpha) shared by every subject.
inline SynthGmm generate_gmm(const SynthConfig& cfg) {
    cfg.validate();
    Rng global = make_stream(cfg.seed, stream::synth_global);
    SynthGmm out;
    out.truth.components = detail::synth_components(cfg, global);
    out.truth.theta = dirichlet_sample(Eigen::VectorXd::Constant(cfg.K, cfg.alpha), global);
    const Eigen::MatrixXd theta = out.truth.theta.transpose().replicate(cfg.M, 1);
    detail::synth_observations(cfg, theta, out.truth.components, out.data, out.labels);
    return out;
}

} // namespace glda
