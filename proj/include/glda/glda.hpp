#pragma once

// Gaussian LDA: each subject m has its own weights theta_m ~ Dirichlet(alpha)
// over K Gaussian components shared by the whole cohort. Fitted by collapsed
// Gibbs sampling over the per-observation labels; theta and the component
// parameters are drawn from their conjugate conditionals after every sweep
// and averaged over the retained iterations.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <future>
#include <optional>
#include <string>
#include <vector>

#include "glda/align.hpp"
#include "glda/diagnostics.hpp"
#include "glda/distributions.hpp"
#include "glda/kmeans.hpp"
#include "glda/niw.hpp"
#include "glda/random.hpp"
#include "glda/types.hpp"

namespace glda {

struct GldaFitConfig {
    int K = 3;
    int n_iters = 1000;
    int n_warmup = 200;
    int n_chains = 2;
    std::uint64_t seed = 0;
    std::optional<PriorConfig> prior; // PriorConfig::defaults(V) when empty
    bool keep_traces = true;

    void validate() const {
        if (K < 1) throw ValidationError("glda: K must be at least 1");
        if (n_iters < 1) throw ValidationError("glda: n_iters must be positive");
        if (n_warmup < 0 || n_warmup >= n_iters) throw ValidationError("glda: n_warmup must lie in [0, n_iters)");
        if (n_chains < 1) throw ValidationError("glda: n_chains must be positive");
    }
};

/// Retained draws of one chain, already aligned to the reference labelling.
struct GldaChain {
    std::vector<Eigen::MatrixXd> theta;
    std::vector<std::vector<Eigen::VectorXd>> mu;
    std::vector<std::vector<Eigen::MatrixXd>> sigma;
    std::vector<double> log_density; // every iteration, warmup included
    std::vector<int> final_labels;   // in the chain's own (unaligned) labelling
};

struct RhatEntry {
    std::string name;
    double value = 1.0;
};

struct GldaDiagnostics {
    std::vector<RhatEntry> rhat;
    double max_rhat = 1.0;
};

struct GldaPosterior {
    GldaParams params; // posterior means
    PriorConfig prior;
    GldaFitConfig config;
    std::vector<GldaChain> chains;
    GldaDiagnostics diagnostics;
    std::vector<std::string> warnings;
};

/// log p(theta) + log p(mu, Sigma) + log p(z | theta) + log p(x | z, mu, Sigma).
inline double glda_joint_logdensity(const CohortDataset& data, const std::vector<int>& labels,
                                    const GldaParams& params, const PriorConfig& prior) {
    const int K = params.n_components();
    const int M = data.n_subjects();
    if (static_cast<int>(labels.size()) != data.n_obs()) throw ValidationError("joint density: label count != N");
    if (params.theta.rows() != M || params.theta.cols() != K)
        throw ValidationError("joint density: theta must be M x K");
    if (params.n_vars() != data.n_vars() || prior.niw.dim() != data.n_vars())
        throw ValidationError("joint density: dimension mismatch");
    const Eigen::VectorXd alpha = Eigen::VectorXd::Constant(K, prior.alpha);
    double out = 0.0;
    for (int m = 0; m < M; ++m) out += dirichlet_logpdf(params.theta.row(m).transpose(), alpha);
    for (int k = 0; k < K; ++k) {
        const auto& c = params.components[k];
        out += niw_logpdf(c.mean(), c.cov(), prior.niw);
    }
    for (int n = 0; n < data.n_obs(); ++n) {
        const int z = labels[n];
        if (z < 0 || z >= K) throw ValidationError("joint density: label out of range");
        out += std::log(params.theta(data.subject[n], z)) + params.components[z].log_pdf(data.values.row(n).transpose());
    }
    return out;
}

/// Mutable state of one collapsed Gibbs chain: labels, per-subject label
/// counts and per-component sufficient statistics with cached predictives.
class GldaGibbsState {
public:
    GldaGibbsState(const CohortDataset& data, int K, PriorConfig prior, std::vector<int> labels)
        : data_(data), K_(K), prior_(std::move(prior)), labels_(std::move(labels)) {
        if (static_cast<int>(labels_.size()) != data_.n_obs()) throw ValidationError("gibbs state: label count != N");
        for (int z : labels_)
            if (z < 0 || z >= K_) throw ValidationError("gibbs state: label out of range");
        rebuild();
    }

    [[nodiscard]] int n_components() const { return K_; }
    [[nodiscard]] const std::vector<int>& labels() const { return labels_; }
    [[nodiscard]] const Eigen::MatrixXi& counts() const { return counts_; }
    [[nodiscard]] const NiwStats& stats(int k) const { return stats_[k]; }
    [[nodiscard]] const PriorConfig& prior() const { return prior_; }

    /// log p(z_n = k | z_{-n}, x) for every k, normalized.
    [[nodiscard]] Eigen::VectorXd conditional_log_probs(int n) const {
        NiwPredictive removed;
        Eigen::VectorXd lp = unnormalized_conditional(n, removed);
        return lp.array() - log_sum_exp(lp);
    }

    /// One systematic-scan pass over all observations in input order.
    void sweep(Rng& rng) {
        const int N = data_.n_obs();
        NiwPredictive removed;
        for (int n = 0; n < N; ++n) {
            const Eigen::VectorXd lp = unnormalized_conditional(n, removed);
            const int k_new = categorical_sample(lp, rng);
            const int k_old = labels_[n];
            if (k_new == k_old) continue;
            const auto x = data_.values.row(n).transpose();
            const int m = data_.subject[n];
            stats_[k_old].remove(x);
            predictive_[k_old] = std::move(removed);
            --counts_(m, k_old);
            stats_[k_new].add(x);
            predictive_[k_new] = NiwPredictive(niw_posterior(prior_.niw, stats_[k_new]), k_new);
            ++counts_(m, k_new);
            labels_[n] = k_new;
        }
        // Running sums drift under repeated add/remove; start each sweep exact.
        rebuild();
    }

    /// theta_m ~ Dirichlet(alpha + counts_m), (mu_k, Sigma_k) ~ NIW posterior.
    [[nodiscard]] GldaParams draw_params(Rng& rng) const {
        const int M = data_.n_subjects();
        GldaParams out;
        out.subject_ids = data_.subject_ids;
        out.theta.resize(M, K_);
        for (int m = 0; m < M; ++m) {
            const Eigen::VectorXd conc = counts_.row(m).transpose().cast<double>().array() + prior_.alpha;
            out.theta.row(m) = dirichlet_sample(conc, rng).transpose();
        }
        out.components.reserve(K_);
        for (int k = 0; k < K_; ++k) {
            const NiwDraw d = niw_sample(niw_posterior(prior_.niw, stats_[k]), rng);
            out.components.emplace_back(d.mu, d.sigma, k);
        }
        return out;
    }

private:
    void rebuild() {
        const int V = data_.n_vars();
        counts_ = Eigen::MatrixXi::Zero(data_.n_subjects(), K_);
        stats_.assign(K_, NiwStats(V));
        for (int n = 0; n < data_.n_obs(); ++n) {
            stats_[labels_[n]].add(data_.values.row(n).transpose());
            ++counts_(data_.subject[n], labels_[n]);
        }
        predictive_.clear();
        for (int k = 0; k < K_; ++k) predictive_.emplace_back(niw_posterior(prior_.niw, stats_[k]), k);
    }

    // Unnormalized collapsed conditional with observation n held out; the
    // predictive of n's current component without n is returned through
    // `removed` so the caller can reuse it.
    Eigen::VectorXd unnormalized_conditional(int n, NiwPredictive& removed) const {
        const auto x = data_.values.row(n).transpose();
        const int m = data_.subject[n];
        const int k_old = labels_[n];
        NiwStats held_out = stats_[k_old];
        held_out.remove(x);
        removed = NiwPredictive(niw_posterior(prior_.niw, held_out), k_old);
        Eigen::VectorXd lp(K_);
        for (int k = 0; k < K_; ++k) {
            const double count = counts_(m, k) - (k == k_old ? 1 : 0);
            const NiwPredictive& pred = (k == k_old) ? removed : predictive_[k];
            lp[k] = std::log(count + prior_.alpha) + pred.log_pdf(x);
        }
        return lp;
    }

    const CohortDataset& data_;
    int K_;
    PriorConfig prior_;
    std::vector<int> labels_;
    Eigen::MatrixXi counts_;
    std::vector<NiwStats> stats_;
    std::vector<NiwPredictive> predictive_;
};

namespace detail {

struct RawChain {
    std::vector<GldaParams> draws; // retained, unaligned
    std::vector<Eigen::VectorXd> reference_means;
    std::vector<double> log_density;
    std::vector<int> final_labels;
};

inline RawChain run_glda_chain(const CohortDataset& data, const GldaFitConfig& cfg, const PriorConfig& prior,
                               int chain) {
    Rng rng = make_stream(cfg.seed, stream::glda_chain + static_cast<std::uint64_t>(chain));
    long iteration = -1;
    try {
        GldaGibbsState state(data, cfg.K, prior, kmeans_labels(data.values, cfg.K, rng));
        RawChain out;
        out.log_density.reserve(cfg.n_iters);
        const int reference_iter = cfg.n_warmup > 0 ? cfg.n_warmup - 1 : 0;
        for (iteration = 0; iteration < cfg.n_iters; ++iteration) {
            state.sweep(rng);
            GldaParams draw = state.draw_params(rng);
            out.log_density.push_back(glda_joint_logdensity(data, state.labels(), draw, prior));
            if (iteration == reference_iter)
                for (const auto& c : draw.components) out.reference_means.push_back(c.mean());
            if (iteration >= cfg.n_warmup) out.draws.push_back(std::move(draw));
        }
        out.final_labels = state.labels();
        return out;
    } catch (const NumericalError& e) {
        throw NumericalError("chain " + std::to_string(chain) + ": " + e.message(), e.component(), iteration);
    }
}

} // namespace detail

/// Fits GLDA by collapsed Gibbs sampling. Chains run concurrently with
/// independent streams; results are bit-identical for a fixed seed.
inline GldaPosterior glda_fit(const CohortDataset& data, const GldaFitConfig& config) {
    config.validate();
    data.validate();
    const int K = config.K;
    const int V = data.n_vars();
    const int M = data.n_subjects();
    if (data.n_obs() < K) throw ValidationError("glda: fewer observations (" + std::to_string(data.n_obs()) +
                                                ") than components (" + std::to_string(K) + ")");
    GldaPosterior post;
    post.config = config;
    post.prior = config.prior.value_or(PriorConfig::defaults(V));
    post.prior.validate();
    if (post.prior.niw.dim() != V) throw ValidationError("glda: prior dimension does not match data");

    const Eigen::RowVectorXd mean = data.values.colwise().mean();
    const Eigen::RowVectorXd sd =
        ((data.values.rowwise() - mean).array().square().colwise().sum() / std::max(1, data.n_obs() - 1)).sqrt();
    for (int v = 0; v < V; ++v)
        if (std::abs(sd[v] - 1.0) > 0.5)
            post.warnings.push_back("variable '" + (data.variable_names.empty() ? std::to_string(v) : data.variable_names[v]) +
                                    "' has global sd " + std::to_string(sd[v]) + "; data may not be standardized");

    std::vector<std::future<detail::RawChain>> futures;
    for (int c = 0; c < config.n_chains; ++c)
        futures.push_back(std::async(std::launch::async, detail::run_glda_chain, std::cref(data), std::cref(config),
                                     std::cref(post.prior), c));
    std::vector<detail::RawChain> raw;
    for (auto& f : futures) raw.push_back(f.get());

    const auto& reference = raw.front().reference_means;
    Eigen::MatrixXd theta_sum = Eigen::MatrixXd::Zero(M, K);
    std::vector<Eigen::VectorXd> mu_sum(K, Eigen::VectorXd::Zero(V));
    std::vector<Eigen::MatrixXd> sigma_sum(K, Eigen::MatrixXd::Zero(V, V));
    std::size_t total = 0;
    for (auto& rc : raw) {
        GldaChain chain;
        chain.log_density = std::move(rc.log_density);
        chain.final_labels = std::move(rc.final_labels);
        for (const auto& draw : rc.draws) {
            std::vector<Eigen::VectorXd> means;
            std::vector<Eigen::MatrixXd> covs;
            for (const auto& c : draw.components) {
                means.push_back(c.mean());
                covs.push_back(c.cov());
            }
            const Permutation perm = align_labels(reference, means);
            Eigen::MatrixXd theta = permute_columns(draw.theta, perm);
            means = apply_permutation(means, perm);
            covs = apply_permutation(covs, perm);
            theta_sum += theta;
            for (int k = 0; k < K; ++k) {
                mu_sum[k] += means[k];
                sigma_sum[k] += covs[k];
            }
            ++total;
            chain.theta.push_back(std::move(theta));
            chain.mu.push_back(std::move(means));
            chain.sigma.push_back(std::move(covs));
        }
        post.chains.push_back(std::move(chain));
    }

    const double t = static_cast<double>(total);
    post.params.subject_ids = data.subject_ids;
    post.params.theta = theta_sum / t;
    for (int k = 0; k < K; ++k) {
        Eigen::MatrixXd cov = sigma_sum[k] / t;
        cov = 0.5 * (cov + cov.transpose());
        post.params.components.emplace_back(mu_sum[k] / t, cov, k);
    }

    // Split-R-hat for every retained scalar.
    auto add_rhat = [&](const std::string& name, auto&& pick) {
        std::vector<std::vector<double>> series;
        for (const auto& ch : post.chains) {
            std::vector<double> s;
            s.reserve(ch.theta.size());
            for (std::size_t i = 0; i < ch.theta.size(); ++i) s.push_back(pick(ch, i));
            series.push_back(std::move(s));
        }
        const double r = split_rhat(series);
        post.diagnostics.rhat.push_back({name, r});
        if (std::isfinite(r) && r > post.diagnostics.max_rhat) post.diagnostics.max_rhat = r;
        if (!std::isfinite(r) && !std::isnan(r)) post.diagnostics.max_rhat = r;
    };
    for (int m = 0; m < M; ++m)
        for (int k = 0; k < K; ++k)
            add_rhat("theta[" + data.subject_ids[m] + "][" + std::to_string(k) + "]",
                     [m, k](const GldaChain& ch, std::size_t i) { return ch.theta[i](m, k); });
    for (int k = 0; k < K; ++k)
        for (int v = 0; v < V; ++v)
            add_rhat("mu[" + std::to_string(k) + "][" + std::to_string(v) + "]",
                     [k, v](const GldaChain& ch, std::size_t i) { return ch.mu[i][k][v]; });
    for (int k = 0; k < K; ++k)
        for (int a = 0; a < V; ++a)
            for (int b = a; b < V; ++b)
                add_rhat("sigma[" + std::to_string(k) + "][" + std::to_string(a) + "][" + std::to_string(b) + "]",
                         [k, a, b](const GldaChain& ch, std::size_t i) { return ch.sigma[i][k](a, b); });

    if (!config.keep_traces)
        for (auto& ch : post.chains) {
            ch.theta.clear();
            ch.mu.clear();
            ch.sigma.clear();
        }
    return post;
}

} // namespace glda
