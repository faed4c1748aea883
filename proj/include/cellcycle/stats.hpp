#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "errors.hpp"

namespace cellcycle {

/// Two-sided one-sample Kolmogorov-Smirnov statistic sup |F_n - F|.
inline double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
    if (samples.empty()) throw EmptySample("ks_statistic: no samples");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t k = 0; k < samples.size(); ++k) {
        const double F = cdf(samples[k]);
        d = std::max({d, (k + 1) / n - F, F - k / n});
    }
    return d;
}

/// Asymptotic critical value c(alpha)/sqrt(n), c(alpha) = sqrt(-ln(alpha/2)/2)
/// (1.358 at alpha = 0.05, 1.628 at 0.01).
inline double ks_critical(std::size_t n, double alpha = 0.05) {
    return std::sqrt(-0.5 * std::log(alpha / 2.0)) / std::sqrt(static_cast<double>(n));
}

} // namespace cellcycle
