#pragma once

#include <cmath>
#include <limits>
#include <vector>

namespace glda {

/// Split-R-hat of one scalar across chains: each chain is cut into two
/// halves, then the between/within variance ratio is formed over all halves.
/// A quantity that never varies reports 1.
inline double split_rhat(const std::vector<std::vector<double>>& chains) {
    std::vector<std::vector<double>> halves;
    for (const auto& c : chains) {
        const std::size_t half = c.size() / 2;
        if (half < 2) return std::numeric_limits<double>::quiet_NaN();
        halves.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
        halves.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
    }
    const std::size_t n = halves.front().size();
    for (const auto& h : halves)
        if (h.size() != n) return std::numeric_limits<double>::quiet_NaN();
    const double m = static_cast<double>(halves.size());
    std::vector<double> means;
    double within = 0.0;
    for (const auto& h : halves) {
        double mean = 0.0;
        for (double x : h) mean += x;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (double x : h) var += (x - mean) * (x - mean);
        within += var / static_cast<double>(n - 1);
        means.push_back(mean);
    }
    within /= m;
    double grand = 0.0;
    for (double mu : means) grand += mu;
    grand /= m;
    double between = 0.0;
    for (double mu : means) between += (mu - grand) * (mu - grand);
    between *= static_cast<double>(n) / (m - 1.0);
    if (within <= 0.0) return between <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    const double var_plus = (static_cast<double>(n) - 1.0) / static_cast<double>(n) * within + between / static_cast<double>(n);
    return std::sqrt(var_plus / within);
}

} // namespace glda
