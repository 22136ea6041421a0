#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "glda/random.hpp"
#include "glda/types.hpp"

namespace testing_support {

inline glda::CohortDataset make_cohort(const std::vector<int>& subject, const Eigen::MatrixXd& values, int M) {
    glda::CohortDataset d;
    for (int m = 0; m < M; ++m) d.subject_ids.push_back("P" + std::to_string(m));
    for (int v = 0; v < values.cols(); ++v) d.variable_names.push_back("x" + std::to_string(v));
    d.subject = subject;
    d.values = values;
    return d;
}

inline Eigen::MatrixXd random_spd(int V, glda::Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd A(V, V);
    for (int i = 0; i < V; ++i)
        for (int j = 0; j < V; ++j) A(i, j) = normal(rng);
    return A * A.transpose() + V * Eigen::MatrixXd::Identity(V, V);
}

inline Eigen::VectorXd random_vector(int V, glda::Rng& rng, double sd = 1.0) {
    std::normal_distribution<double> normal(0.0, sd);
    Eigen::VectorXd v(V);
    for (int i = 0; i < V; ++i) v[i] = normal(rng);
    return v;
}

inline double sample_mean(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

inline double sample_sd(const std::vector<double>& xs) {
    const double m = sample_mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

// One-sample Kolmogorov-Smirnov statistic against a CDF.
template <typename Cdf>
double ks_statistic(std::vector<double> xs, Cdf cdf) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = cdf(xs[i]);
        d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
    }
    return d;
}

// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
    }
    return d;
}

// Asymptotic critical value of the KS statistic at level 0.01.
inline double ks_critical_01(double n) { return 1.628 / std::sqrt(n); }

inline double ks_two_sample_critical_01(double n, double m) { return 1.628 * std::sqrt((n + m) / (n * m)); }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

} // namespace testing_support
