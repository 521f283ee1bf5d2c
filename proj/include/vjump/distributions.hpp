/// @file distributions.hpp Densities and samplers for turning angles, speeds and parameter priors.
#pragma once

#include "numeric.hpp"
#include "params.hpp"

#include <cmath>
#include <optional>
#include <random>
#include <stdexcept>

namespace vjump
{

// ---------------------------------------------------------------------------
// Turning angles
// ---------------------------------------------------------------------------

/// Zero-mean von Mises distribution of turning angles.
struct VonMises
{
    double kappa = 0.0;
};

inline double von_mises_logpdf(double theta, double kappa)
{
    if (!(kappa >= 0.0))
        throw std::domain_error("von Mises concentration must be non-negative");
    return kappa * std::cos(theta) - log_two_pi - log_bessel_i0(kappa);
}

/// @brief Draws a zero-mean von Mises angle in (-pi, pi] by the Best-Fisher rejection method.
///
/// The wrapped-Cauchy envelope gives an acceptance rate above 0.65 for every kappa.
template <class Rng>
double von_mises_sample(double kappa, Rng& rng)
{
    if (!(kappa >= 0.0))
        throw std::domain_error("von Mises concentration must be non-negative");
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    if (kappa < 1e-8)
        return pi * (2.0 * unif(rng) - 1.0);

    const double tau = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
    const double rho = (tau - std::sqrt(2.0 * tau)) / (2.0 * kappa);
    const double r = (1.0 + rho * rho) / (2.0 * rho);

    for (;;) {
        const double u1 = unif(rng);
        const double u2 = unif(rng);
        const double z = std::cos(pi * u1);
        const double f = (1.0 + r * z) / (r + z);
        const double c = kappa * (r - f);
        if (c * (2.0 - c) - u2 > 0.0 || std::log(c / u2) + 1.0 - c >= 0.0) {
            const double angle = std::acos(std::clamp(f, -1.0, 1.0));
            return unif(rng) < 0.5 ? -angle : angle;
        }
    }
}

// ---------------------------------------------------------------------------
// Speeds
// ---------------------------------------------------------------------------

inline double rayleigh_logpdf(double s, double sigma)
{
    if (!(sigma > 0.0))
        throw std::domain_error("Rayleigh scale must be positive");
    if (s < 0.0)
        return neg_inf;
    return std::log(s) - 2.0 * std::log(sigma) - s * s / (2.0 * sigma * sigma);
}

template <class Rng>
double rayleigh_sample(double sigma, Rng& rng)
{
    if (!(sigma > 0.0))
        throw std::domain_error("Rayleigh scale must be positive");
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    return sigma * std::sqrt(-2.0 * std::log1p(-unif(rng)));
}

/// Conditional law of the next speed given the previous one under the correlated
/// bivariate Rayleigh model: Rice with scale sqrt(sigma^2 (1 - rho^2)) and
/// non-centrality rho * s_prev.
class RiceSpeedKernel
{
public:
    RiceSpeedKernel(double sigma, double rho) : sigma_(sigma), rho_(rho)
    {
        if (!(sigma > 0.0))
            throw std::domain_error("speed scale sigma must be positive");
        if (!(rho >= 0.0 && rho < 1.0))
            throw std::domain_error("speed correlation rho must lie in [0, 1)");
        cond_var_ = sigma * sigma * (1.0 - rho * rho);
    }

    double sigma() const { return sigma_; }
    double rho() const { return rho_; }
    /// sigma^2 (1 - rho^2)
    double conditional_variance() const { return cond_var_; }

private:
    double sigma_;
    double rho_;
    double cond_var_;
};

inline double rice_logpdf(double s_next, double s_prev, const RiceSpeedKernel& kernel)
{
    if (s_next < 0.0 || s_prev < 0.0)
        return neg_inf;
    const double v = kernel.conditional_variance();
    const double centre = s_prev * kernel.rho();
    const double diff = s_next - centre;
    return std::log(s_next) - std::log(v) - diff * diff / (2.0 * v) + log_bessel_i0_scaled(s_next * centre / v);
}

/// Rice draw as the norm of a bivariate normal centred at (rho * s_prev, 0).
template <class Rng>
double rice_sample(double s_prev, const RiceSpeedKernel& kernel, Rng& rng)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sd = std::sqrt(kernel.conditional_variance());
    const double a = kernel.rho() * s_prev + sd * normal(rng);
    const double b = sd * normal(rng);
    return std::hypot(a, b);
}

/// Joint density of two successive speeds; symmetric, with Rayleigh(sigma) marginals.
inline double bivariate_rayleigh_logpdf(double s_i, double s_next, const RiceSpeedKernel& kernel)
{
    if (s_i < 0.0 || s_next < 0.0)
        return neg_inf;
    const double v = kernel.conditional_variance();
    const double sigma2 = kernel.sigma() * kernel.sigma();
    const double arg = kernel.rho() * s_i * s_next / v;
    return std::log(s_i) + std::log(s_next) - std::log(sigma2) - std::log(v) -
           (s_i * s_i + s_next * s_next) / (2.0 * v) + arg + log_bessel_i0_scaled(arg);
}

// ---------------------------------------------------------------------------
// Priors
// ---------------------------------------------------------------------------

/// Normal(mode, scale^2) truncated to (0, inf); normalising constant included.
struct TruncatedNormalPrior
{
    double mode = 0.0;
    double scale = 1.0;

    void validate() const
    {
        if (!(scale > 0.0) || !std::isfinite(mode))
            throw std::invalid_argument("truncated-normal prior needs a finite mode and positive scale");
    }

    double logpdf(double x) const
    {
        if (!(x > 0.0))
            return neg_inf;
        const double z = (x - mode) / scale;
        return -0.5 * z * z - std::log(scale) - 0.5 * log_two_pi - log_normal_upper_tail(-mode / scale);
    }

    template <class Rng>
    double sample(Rng& rng) const
    {
        const double lower = -mode / scale; // truncation point in standard units
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        if (lower < 0.5) {
            std::normal_distribution<double> normal(0.0, 1.0);
            for (;;) {
                const double z = normal(rng);
                if (z > lower)
                    return mode + scale * z;
            }
        }
        // Exponential proposal for a far tail (Robert 1995).
        const double alpha = 0.5 * (lower + std::sqrt(lower * lower + 4.0));
        for (;;) {
            const double z = lower - std::log1p(-unif(rng)) / alpha;
            if (unif(rng) <= std::exp(-0.5 * (z - alpha) * (z - alpha)))
                return mode + scale * z;
        }
    }
};

/// @brief Bessel-exponential prior on the von Mises concentration, p(kappa) ∝ I_0(kappa)^{-a} exp(-b kappa).
///
/// Evaluated without its normalising constant, which has no closed form. The constant depends only on
/// the fixed hyperparameters, so it cancels in every Metropolis-Hastings ratio; nothing in this library
/// compares the value against a normalised density.
struct BesselExponentialPrior
{
    double a = 1.0;
    double b = -0.5;

    void validate() const
    {
        // log p ~ -(a + b) kappa + (a / 2) log kappa for large kappa
        if (!(a + b > 0.0))
            throw std::invalid_argument("Bessel-exponential prior is not normalisable unless a + b > 0");
    }

    double logpdf_unnormalized(double kappa) const
    {
        if (!(kappa >= 0.0) || !std::isfinite(kappa))
            return neg_inf;
        return -a * log_bessel_i0(kappa) - b * kappa;
    }
};

struct BetaPrior
{
    double alpha = 1.0;
    double beta = 1.2;

    void validate() const
    {
        if (!(alpha > 0.0 && beta > 0.0))
            throw std::invalid_argument("Beta prior parameters must be positive");
    }

    double logpdf(double x) const
    {
        if (!(x >= 0.0 && x < 1.0))
            return neg_inf;
        double lp = std::lgamma(alpha + beta) - std::lgamma(alpha) - std::lgamma(beta);
        if (alpha != 1.0)
            lp += (alpha - 1.0) * std::log(x);
        if (beta != 1.0)
            lp += (beta - 1.0) * std::log1p(-x);
        return lp;
    }

    double mean() const { return alpha / (alpha + beta); }

    template <class Rng>
    double sample(Rng& rng) const
    {
        std::gamma_distribution<double> ga(alpha, 1.0);
        std::gamma_distribution<double> gb(beta, 1.0);
        const double x = ga(rng);
        const double y = gb(rng);
        return x / (x + y);
    }
};

/// Priors on all model parameters. An empty varsigma prior means the error SD is held fixed.
struct PriorSet
{
    TruncatedNormalPrior lambda{0.0, 1.0};
    TruncatedNormalPrior sigma{0.5, 0.5};
    std::optional<TruncatedNormalPrior> varsigma = TruncatedNormalPrior{0.0, 1.0};
    BesselExponentialPrior kappa{1.0, -0.5};
    BetaPrior rho{1.0, 1.2};

    void validate() const
    {
        lambda.validate();
        sigma.validate();
        if (varsigma)
            varsigma->validate();
        kappa.validate();
        rho.validate();
    }
};

/// Sum of the component log-priors (kappa term unnormalised).
inline double prior_logpdf(const ModelParams& params, const PriorSet& priors)
{
    double lp = priors.lambda.logpdf(params.lambda) + priors.sigma.logpdf(params.sigma) +
                priors.kappa.logpdf_unnormalized(params.kappa) + priors.rho.logpdf(params.rho);
    if (priors.varsigma)
        lp += priors.varsigma->logpdf(params.varsigma);
    return std::isnan(lp) ? neg_inf : lp;
}

} // namespace vjump
