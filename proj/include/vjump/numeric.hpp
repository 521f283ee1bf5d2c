/// @file numeric.hpp Shared numeric helpers: constants, log-Bessel, angle wrapping, error types.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vjump
{

using Vec2 = Eigen::Vector2d;

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;
inline constexpr double log_two_pi = 1.8378770664093454835606594728112;
inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

/// Malformed or inconsistent input data (CLI exit code 2).
class DataError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// A linear-algebra step could not be carried out reliably (CLI exit code 3).
class NumericalError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Wraps an angle into [-pi, pi).
inline double wrap_angle(double theta)
{
    double w = std::fmod(theta + pi, two_pi);
    if (w < 0.0)
        w += two_pi;
    return w - pi;
}

namespace detail
{
// log(I_0(x) e^{-x}) from the Hankel expansion; accurate to double precision for x >= 30.
inline double log_bessel_i0_asymptotic_scaled(double x)
{
    double term = 1.0;
    double sum = 1.0;
    for (int k = 1; k < 30; ++k) {
        const double odd = 2.0 * k - 1.0;
        term *= odd * odd / (8.0 * k * x);
        sum += term;
        if (term < 1e-17 * sum)
            break;
    }
    return -0.5 * std::log(two_pi * x) + std::log(sum);
}

inline constexpr double bessel_switch_point = 30.0;
} // namespace detail

/// @brief log I_0(x), the log of the zeroth-order modified Bessel function of the first kind.
///
/// Below the switch point the standard library evaluation is used directly. Above it the
/// Hankel asymptotic expansion
/// \f[ I_0(x) \sim \frac{e^x}{\sqrt{2\pi x}} \sum_k \frac{((2k-1)!!)^2}{k!\,(8x)^k} \f]
/// is summed in log space, which stays finite for arguments far beyond the overflow of I_0.
inline double log_bessel_i0(double x)
{
    x = std::abs(x);
    if (x < detail::bessel_switch_point)
        return std::log(std::cyl_bessel_i(0.0, x));
    return x + detail::log_bessel_i0_asymptotic_scaled(x);
}

/// log I_0(x) - |x|; avoids the cancellation in densities that pair I_0 with a Gaussian exponent.
inline double log_bessel_i0_scaled(double x)
{
    x = std::abs(x);
    if (x < detail::bessel_switch_point)
        return std::log(std::cyl_bessel_i(0.0, x)) - x;
    return detail::log_bessel_i0_asymptotic_scaled(x);
}

inline double log_sum_exp(double a, double b)
{
    if (a == neg_inf)
        return b;
    if (b == neg_inf)
        return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double log_factorial(int n)
{
    return std::lgamma(static_cast<double>(n) + 1.0);
}

/// Standard normal CDF.
inline double normal_cdf(double z)
{
    return 0.5 * std::erfc(-z / std::numbers::sqrt2);
}

/// log of the standard normal upper tail, accurate far into the tail.
inline double log_normal_upper_tail(double z)
{
    if (z < 35.0)
        return std::log(0.5 * std::erfc(z / std::numbers::sqrt2));
    // Mills-ratio expansion
    const double z2 = z * z;
    const double series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2) + 105.0 / (z2 * z2 * z2 * z2);
    return -0.5 * z2 - std::log(z) - 0.5 * log_two_pi + std::log(series);
}

inline double median(std::span<const double> values)
{
    if (values.empty())
        throw std::invalid_argument("median of empty sequence");
    std::vector<double> v(values.begin(), values.end());
    const auto mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) {
        const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
        m = 0.5 * (m + lower);
    }
    return m;
}

} // namespace vjump
