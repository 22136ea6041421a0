#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <compare>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "glda/errors.hpp"

namespace glda {

/// An observation instant. Ordering uses the parsed value; the original text
/// is kept so outputs reproduce the input verbatim.
struct Timestamp {
    std::int64_t micros = 0; // since the Unix epoch, UTC
    std::string text;

    friend bool operator==(const Timestamp& a, const Timestamp& b) { return a.micros == b.micros; }
    friend auto operator<=>(const Timestamp& a, const Timestamp& b) { return a.micros <=> b.micros; }
};

/// Repeated multivariate observations grouped by subject.
///
/// Row n of `values` belongs to subject `subject[n]`; subject indices are
/// dense in [0, M) and `subject_ids[m]` is the identifier seen in the input.
struct CohortDataset {
    std::vector<std::string> subject_ids;
    std::vector<std::string> variable_names;
    std::vector<int> subject;
    std::vector<std::optional<Timestamp>> timestamp;
    Eigen::MatrixXd values; // N x V

    [[nodiscard]] int n_subjects() const { return static_cast<int>(subject_ids.size()); }
    [[nodiscard]] int n_vars() const { return static_cast<int>(values.cols()); }
    [[nodiscard]] int n_obs() const { return static_cast<int>(values.rows()); }

    [[nodiscard]] bool has_timestamps() const {
        if (timestamp.empty()) return false;
        for (const auto& t : timestamp)
            if (!t) return false;
        return true;
    }

    /// Row indices of each subject, in input order.
    [[nodiscard]] std::vector<std::vector<int>> rows_by_subject() const {
        std::vector<std::vector<int>> rows(subject_ids.size());
        for (int n = 0; n < n_obs(); ++n) rows[subject[n]].push_back(n);
        return rows;
    }

    [[nodiscard]] std::vector<int> subject_sizes() const {
        std::vector<int> sizes(subject_ids.size(), 0);
        for (int s : subject) ++sizes[s];
        return sizes;
    }

    void validate() const {
        const int M = n_subjects();
        if (M < 1) throw ValidationError("cohort has no subjects");
        if (n_vars() < 1) throw ValidationError("cohort has no variables");
        if (n_obs() < 1) throw ValidationError("cohort has no observations");
        if (static_cast<int>(subject.size()) != n_obs())
            throw ValidationError("cohort: subject index count does not match observation count");
        if (!timestamp.empty() && static_cast<int>(timestamp.size()) != n_obs())
            throw ValidationError("cohort: timestamp count does not match observation count");
        if (!variable_names.empty() && static_cast<int>(variable_names.size()) != n_vars())
            throw ValidationError("cohort: variable name count does not match value columns");
        std::vector<int> sizes(M, 0);
        for (int n = 0; n < n_obs(); ++n) {
            if (subject[n] < 0 || subject[n] >= M)
                throw ValidationError("cohort: observation " + std::to_string(n) + " has subject index out of range");
            ++sizes[subject[n]];
        }
        for (int m = 0; m < M; ++m)
            if (sizes[m] == 0) throw ValidationError("cohort: subject '" + subject_ids[m] + "' has no observations");
        if (!values.allFinite()) throw ValidationError("cohort: non-finite values");
    }
};

/// Normal-Inverse-Wishart parameters: Sigma ~ IW(nu, psi), mu | Sigma ~ N(mu0, Sigma / lambda).
struct Niw {
    Eigen::VectorXd mu0;
    double lambda = 1.0;
    double nu = 0.0;
    Eigen::MatrixXd psi;

    [[nodiscard]] int dim() const { return static_cast<int>(mu0.size()); }

    void validate() const {
        const int V = dim();
        if (V < 1) throw ValidationError("NIW prior: empty mean vector");
        if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ValidationError("NIW prior: lambda must be positive");
        if (!(nu > V - 1.0) || !std::isfinite(nu)) throw ValidationError("NIW prior: nu must exceed V - 1");
        if (psi.rows() != V || psi.cols() != V) throw ValidationError("NIW prior: psi must be V x V");
        if (!psi.isApprox(psi.transpose(), 1e-12)) throw ValidationError("NIW prior: psi must be symmetric");
        Eigen::LLT<Eigen::MatrixXd> llt(psi);
        if (llt.info() != Eigen::Success) throw ValidationError("NIW prior: psi is not positive-definite");
    }
};

struct PriorConfig {
    double alpha = 1.0; // symmetric Dirichlet concentration
    Niw niw;

    /// Neutral defaults: alpha 1, mu0 0, lambda 1, nu V + 2, psi identity.
    static PriorConfig defaults(int V) {
        PriorConfig p;
        p.alpha = 1.0;
        p.niw.mu0 = Eigen::VectorXd::Zero(V);
        p.niw.lambda = 1.0;
        p.niw.nu = V + 2.0;
        p.niw.psi = Eigen::MatrixXd::Identity(V, V);
        return p;
    }

    void validate() const {
        if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ValidationError("prior: alpha must be positive");
        niw.validate();
    }
};

/// Gaussian component with its covariance factorized once at construction.
class Gaussian {
public:
    Gaussian() = default;

    Gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov, int component = -1)
        : mean_(std::move(mean)), cov_(std::move(cov)) {
        if (cov_.rows() != mean_.size() || cov_.cols() != mean_.size())
            throw ValidationError("gaussian: covariance shape does not match mean");
        chol_.compute(cov_);
        if (chol_.info() != Eigen::Success)
            throw NumericalError("covariance is not positive-definite", component);
        const auto diag = chol_.matrixLLT().diagonal();
        if ((diag.array() <= 0.0).any() || !diag.allFinite())
            throw NumericalError("covariance is not positive-definite", component);
        log_det_ = 2.0 * diag.array().log().sum();
    }

    [[nodiscard]] int dim() const { return static_cast<int>(mean_.size()); }
    [[nodiscard]] const Eigen::VectorXd& mean() const { return mean_; }
    [[nodiscard]] const Eigen::MatrixXd& cov() const { return cov_; }
    [[nodiscard]] const Eigen::LLT<Eigen::MatrixXd>& chol() const { return chol_; }
    [[nodiscard]] double log_det() const { return log_det_; }

    template <typename Derived>
    [[nodiscard]] double log_pdf(const Eigen::MatrixBase<Derived>& x) const {
        const Eigen::VectorXd z = chol_.matrixL().solve((x - mean_).eval());
        return -0.5 * (dim() * std::log(2.0 * std::numbers::pi) + log_det_ + z.squaredNorm());
    }

private:
    Eigen::VectorXd mean_;
    Eigen::MatrixXd cov_;
    Eigen::LLT<Eigen::MatrixXd> chol_;
    double log_det_ = 0.0;
};

namespace detail {

inline void check_simplex_row(const Eigen::Ref<const Eigen::RowVectorXd>& row, const std::string& what) {
    if ((row.array() < 0.0).any() || !row.allFinite()) throw ValidationError(what + ": negative or non-finite weight");
    if (std::abs(row.sum() - 1.0) > 1e-9) throw ValidationError(what + ": weights do not sum to 1");
}

inline void check_components(const std::vector<Gaussian>& components) {
    if (components.empty()) throw ValidationError("no components");
    const int V = components.front().dim();
    for (const auto& c : components)
        if (c.dim() != V) throw ValidationError("components have inconsistent dimensions");
}

} // namespace detail

/// Per-subject weights over globally shared Gaussian components.
struct GldaParams {
    std::vector<std::string> subject_ids; // row labels of theta
    Eigen::MatrixXd theta;                // M x K
    std::vector<Gaussian> components;     // K

    [[nodiscard]] int n_components() const { return static_cast<int>(components.size()); }
    [[nodiscard]] int n_vars() const { return components.empty() ? 0 : components.front().dim(); }
    [[nodiscard]] int n_subjects() const { return static_cast<int>(theta.rows()); }

    void validate() const {
        detail::check_components(components);
        if (theta.cols() != n_components()) throw ValidationError("glda params: theta has wrong column count");
        if (!subject_ids.empty() && static_cast<int>(subject_ids.size()) != theta.rows())
            throw ValidationError("glda params: subject id count does not match theta rows");
        for (int m = 0; m < theta.rows(); ++m) detail::check_simplex_row(theta.row(m), "glda params theta row " + std::to_string(m));
    }
};

/// One global weight vector over Gaussian components.
struct GmmParams {
    Eigen::VectorXd theta;            // K
    std::vector<Gaussian> components; // K

    [[nodiscard]] int n_components() const { return static_cast<int>(components.size()); }
    [[nodiscard]] int n_vars() const { return components.empty() ? 0 : components.front().dim(); }

    void validate() const {
        detail::check_components(components);
        if (theta.size() != n_components()) throw ValidationError("gmm params: theta has wrong length");
        detail::check_simplex_row(theta.transpose(), "gmm params theta");
    }
};

/// Per-observation posterior membership and hard labels.
struct AssignmentTrace {
    Eigen::MatrixXd responsibilities; // N x K
    std::vector<int> labels;
    std::vector<int> subject;
    std::vector<std::optional<Timestamp>> timestamp;
    std::vector<std::string> subject_ids;
    std::vector<bool> out_of_sample; // per subject; true when no fitted weights existed

    [[nodiscard]] int n_obs() const { return static_cast<int>(responsibilities.rows()); }
    [[nodiscard]] int n_components() const { return static_cast<int>(responsibilities.cols()); }
};

/// Subject-level outcome scores. Missing cells are NaN.
struct OutcomeTable {
    std::vector<std::string> outcome_names;
    std::vector<std::string> subject_ids;
    Eigen::MatrixXd values; // subjects x outcomes
    std::vector<std::string> warnings;

    [[nodiscard]] int n_subjects() const { return static_cast<int>(subject_ids.size()); }
    [[nodiscard]] int n_outcomes() const { return static_cast<int>(outcome_names.size()); }
};

} // namespace glda
