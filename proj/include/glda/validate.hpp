#pragma once

// Outcome validation: univariate OLS of each subject-level outcome on each
// class weight (or realized proportion), and the side-by-side comparison of
// two models' regression grids.

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "glda/align.hpp"
#include "glda/stats.hpp"
#include "glda/types.hpp"

namespace glda {

struct RegressionResult {
    std::string outcome;
    std::string model;
    int class_index = 0;
    int n = 0;
    double slope = 0.0;
    double intercept = 0.0;
    double t_stat = 0.0;
    double p_value = 1.0;
    double r2 = 0.0;
    double r2_adj = 0.0;
    std::string band;
};

/// "**" below 0.01, "*" below 0.05, "." below 0.1, otherwise empty.
inline std::string significance_band(double p) {
    if (p < 0.01) return "**";
    if (p < 0.05) return "*";
    if (p < 0.1) return ".";
    return "";
}

/// Closed-form simple regression y = intercept + slope x with a two-sided
/// t-test on the slope (n - 2 degrees of freedom).
inline RegressionResult ols_univariate(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    if (x.size() != y.size()) throw ValidationError("ols: x and y differ in length");
    const Eigen::Index n = x.size();
    if (n < 3) throw ValidationError("ols: need at least 3 observations, got " + std::to_string(n));
    const double xbar = x.mean();
    const double ybar = y.mean();
    const Eigen::ArrayXd dx = x.array() - xbar;
    const Eigen::ArrayXd dy = y.array() - ybar;
    const double sxx = dx.square().sum();
    if (!(sxx > 0.0) || sxx <= 1e-28 * (x.array().square().sum() + 1.0))
        throw ValidationError("ols: degenerate predictor (constant x)");
    const double sst = dy.square().sum();
    if (!(sst > 0.0)) throw ValidationError("ols: degenerate outcome (constant y)");
    RegressionResult r;
    r.n = static_cast<int>(n);
    r.slope = (dx * dy).sum() / sxx;
    r.intercept = ybar - r.slope * xbar;
    const double sse = (y.array() - r.intercept - r.slope * x.array()).square().sum();
    const double df = static_cast<double>(n) - 2.0;
    r.r2 = 1.0 - sse / sst;
    r.r2_adj = 1.0 - (1.0 - r.r2) * (static_cast<double>(n) - 1.0) / df;
    if (sse == 0.0) {
        r.t_stat = std::copysign(std::numeric_limits<double>::infinity(), r.slope);
        r.p_value = 0.0;
    } else {
        r.t_stat = r.slope / std::sqrt(sse / df / sxx);
        r.p_value = student_t_two_sided_p(r.t_stat, df);
    }
    r.band = significance_band(r.p_value);
    return r;
}

/// Subject-level predictors: one row per subject, one column per class.
struct SubjectWeights {
    std::vector<std::string> subject_ids;
    Eigen::MatrixXd weights; // M x K
};

/// One regression per (class, outcome) pair, ordered class-major. Subjects
/// missing from either table, or missing that outcome, are left out of that
/// pair only. No multiple-comparison correction is applied.
inline std::vector<RegressionResult> validate_weights(const SubjectWeights& w, const OutcomeTable& outcomes,
                                                      const std::string& model) {
    if (static_cast<Eigen::Index>(w.subject_ids.size()) != w.weights.rows())
        throw ValidationError("validate: subject id count does not match weight rows");
    std::unordered_map<std::string, int> outcome_row;
    for (int i = 0; i < outcomes.n_subjects(); ++i) outcome_row[outcomes.subject_ids[i]] = i;
    std::vector<std::pair<int, int>> overlap; // (weight row, outcome row)
    for (int m = 0; m < static_cast<int>(w.subject_ids.size()); ++m) {
        const auto it = outcome_row.find(w.subject_ids[m]);
        if (it != outcome_row.end()) overlap.emplace_back(m, it->second);
    }
    if (overlap.size() < 3)
        throw ValidationError("validate: only " + std::to_string(overlap.size()) +
                              " subjects appear in both the weights and the outcome table; need at least 3");
    std::vector<RegressionResult> out;
    for (int k = 0; k < w.weights.cols(); ++k) {
        for (int j = 0; j < outcomes.n_outcomes(); ++j) {
            std::vector<double> xs, ys;
            for (const auto& [m, i] : overlap) {
                const double yv = outcomes.values(i, j);
                if (std::isnan(yv)) continue;
                xs.push_back(w.weights(m, k));
                ys.push_back(yv);
            }
            RegressionResult r = ols_univariate(Eigen::Map<const Eigen::VectorXd>(xs.data(), xs.size()),
                                                Eigen::Map<const Eigen::VectorXd>(ys.data(), ys.size()));
            r.outcome = outcomes.outcome_names[j];
            r.model = model;
            r.class_index = k;
            out.push_back(std::move(r));
        }
    }
    return out;
}

/// A model's regression grid together with the component means used to
/// match its classes against another model's.
struct ModelValidation {
    std::string model;
    std::vector<Eigen::VectorXd> means;
    std::vector<RegressionResult> results; // class-major, as from validate_weights
};

struct ComparisonCell {
    int class_index = 0; // in the first model's labelling
    std::string outcome;
    RegressionResult first;
    RegressionResult second;
    std::string winner; // model name with the lower p-value, or "tie"
};

struct ComparisonReport {
    std::string first_model;
    std::string second_model;
    int K = 0;
    std::vector<std::string> outcomes;
    Permutation second_for_first; // second-model class matched to each first-model class
    std::vector<ComparisonCell> cells;
};

/// Side-by-side grid after matching the second model's classes to the
/// first's by nearest component means.
inline ComparisonReport compare_models(const ModelValidation& first, const ModelValidation& second) {
    const int K = static_cast<int>(first.means.size());
    if (static_cast<int>(second.means.size()) != K)
        throw ValidationError("compare: models have different K (" + std::to_string(K) + " vs " +
                              std::to_string(second.means.size()) + ")");
    ComparisonReport rep;
    rep.first_model = first.model;
    rep.second_model = second.model;
    rep.K = K;
    rep.second_for_first = align_labels(first.means, second.means);
    for (const auto& r : first.results)
        if (r.class_index == 0) rep.outcomes.push_back(r.outcome);
    auto find = [](const ModelValidation& mv, int k, const std::string& outcome) -> const RegressionResult& {
        for (const auto& r : mv.results)
            if (r.class_index == k && r.outcome == outcome) return r;
        throw ValidationError("compare: " + mv.model + " has no result for class " + std::to_string(k) + ", outcome '" +
                              outcome + "'");
    };
    for (int k = 0; k < K; ++k) {
        for (const auto& o : rep.outcomes) {
            ComparisonCell cell;
            cell.class_index = k;
            cell.outcome = o;
            cell.first = find(first, k, o);
            cell.second = find(second, rep.second_for_first[k], o);
            if (cell.first.p_value < cell.second.p_value)
                cell.winner = first.model;
            else if (cell.second.p_value < cell.first.p_value)
                cell.winner = second.model;
            else
                cell.winner = "tie";
            rep.cells.push_back(std::move(cell));
        }
    }
    return rep;
}

// Text rendering. The same formatters are used to check the text report
// against the JSON one.

inline std::string format_p(double p) {
    char buf[32];
    if (p >= 0.001)
        std::snprintf(buf, sizeof buf, "%.3f", p);
    else
        std::snprintf(buf, sizeof buf, "%.2e", p);
    return buf;
}

inline std::string format_pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * v);
    return buf;
}

namespace detail {

inline std::string pad(std::string s, std::size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
}

inline std::string cell_text(const RegressionResult& r) {
    return pad(format_p(r.p_value) + r.band, 12) + pad(format_pct(r.r2_adj), 9);
}

} // namespace detail

/// Rows are classes, column pairs are (p, adjusted R^2) per outcome.
inline std::string render_grid(const std::vector<RegressionResult>& results) {
    std::vector<std::string> outcomes;
    int K = 0;
    for (const auto& r : results) {
        if (r.class_index == 0) outcomes.push_back(r.outcome);
        K = std::max(K, r.class_index + 1);
    }
    std::ostringstream os;
    os << detail::pad("model", 8) << detail::pad("class", 7);
    for (const auto& o : outcomes) os << detail::pad(o + " p", 12) << detail::pad("adj.r2", 9);
    os << '\n';
    for (int k = 0; k < K; ++k) {
        std::string model;
        for (const auto& r : results)
            if (r.class_index == k) model = r.model;
        os << detail::pad(model, 8) << detail::pad(std::to_string(k), 7);
        for (const auto& o : outcomes)
            for (const auto& r : results)
                if (r.class_index == k && r.outcome == o) os << detail::cell_text(r);
        os << '\n';
    }
    os << "bands: ** p<0.01, * p<0.05, . p<0.1; raw per-pair p-values, no multiple-comparison correction\n";
    return os.str();
}

inline std::string render_comparison(const ComparisonReport& rep) {
    std::ostringstream os;
    os << detail::pad("model", 8) << detail::pad("class", 7);
    for (const auto& o : rep.outcomes) os << detail::pad(o + " p", 12) << detail::pad("adj.r2", 9);
    os << '\n';
    for (int which = 0; which < 2; ++which) {
        for (int k = 0; k < rep.K; ++k) {
            const std::string& model = which == 0 ? rep.first_model : rep.second_model;
            const int shown = which == 0 ? k : rep.second_for_first[k];
            os << detail::pad(model, 8) << detail::pad(std::to_string(shown), 7);
            for (const auto& c : rep.cells)
                if (c.class_index == k) os << detail::cell_text(which == 0 ? c.first : c.second);
            os << '\n';
        }
    }
    os << "winner per cell (lower p):\n";
    for (const auto& c : rep.cells)
        os << "  " << rep.first_model << " class " << c.class_index << " vs " << rep.second_model << " class "
           << rep.second_for_first[c.class_index] << ", " << c.outcome << ": " << c.winner << '\n';
    os << "bands: ** p<0.01, * p<0.05, . p<0.1; raw per-pair p-values, no multiple-comparison correction\n";
    return os.str();
}

} // namespace glda
