/// @file diagnostics.hpp Effective sample size and posterior quantile summaries.
#pragma once

#include "numeric.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace vjump
{

/// @brief Effective sample size by Geyer's initial monotone sequence estimator.
///
/// Sums of adjacent autocorrelation pairs are accumulated until the first non-positive pair, with each
/// pair capped by its predecessor. A constant chain has ESS 1.
inline double ess(std::span<const double> chain)
{
    const std::size_t n = chain.size();
    if (n < 2)
        return static_cast<double>(n);
    double mean = 0.0;
    for (double x : chain)
        mean += x;
    mean /= static_cast<double>(n);
    std::vector<double> centred(n);
    for (std::size_t i = 0; i < n; ++i)
        centred[i] = chain[i] - mean;

    auto autocov = [&](std::size_t lag) {
        double s = 0.0;
        for (std::size_t i = 0; i + lag < n; ++i)
            s += centred[i] * centred[i + lag];
        return s / static_cast<double>(n);
    };
    const double c0 = autocov(0);
    if (!(c0 > 1e-300 * (1.0 + mean * mean)))
        return 1.0;

    double tau = -1.0;
    double prev_pair = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
        double pair = (autocov(2 * k) + autocov(2 * k + 1)) / c0;
        if (!(pair > 0.0))
            break;
        pair = std::min(pair, prev_pair);
        prev_pair = pair;
        tau += 2.0 * pair;
    }
    return std::max(1.0, static_cast<double>(n) / std::max(tau, 1e-12));
}

/// ESS of several chains of one quantity, taken as the sum of the per-chain values.
inline double combined_ess(const std::vector<std::vector<double>>& chains)
{
    double total = 0.0;
    for (const auto& c : chains)
        total += ess(c);
    return total;
}

/// Sample quantile with linear interpolation between order statistics (Hyndman-Fan type 7).
inline double quantile_sorted(std::span<const double> sorted, double p)
{
    if (sorted.empty())
        throw std::invalid_argument("quantile of an empty sample");
    if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("quantile level must lie in [0, 1]");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::vector<double> values, double p)
{
    std::sort(values.begin(), values.end());
    return quantile_sorted(values, p);
}

inline constexpr std::array<double, 5> quantile_levels{0.025, 0.25, 0.5, 0.75, 0.975};
inline constexpr std::array<const char*, 6> summary_columns{"lambda", "kappa", "sigma", "rho", "varsigma", "N"};

/// Posterior quantiles: rows are quantile_levels, columns are summary_columns.
struct QuantileTable
{
    std::array<std::array<double, 6>, 5> values{};
};

/// Builds the quantile table from per-column samples (pooled over chains).
inline QuantileTable quantile_table(const std::array<std::vector<double>, 6>& columns)
{
    QuantileTable t;
    for (std::size_t c = 0; c < columns.size(); ++c) {
        std::vector<double> sorted = columns[c];
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t r = 0; r < quantile_levels.size(); ++r)
            t.values[r][c] = quantile_sorted(sorted, quantile_levels[r]);
    }
    return t;
}

} // namespace vjump
