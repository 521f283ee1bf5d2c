#include <vjump/distributions.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace vjump;

namespace
{

double rice_pdf(double s, double s_prev, double sigma, double rho)
{
    return std::exp(rice_logpdf(s, s_prev, RiceSpeedKernel(sigma, rho)));
}

} // namespace

TEST(VonMises, UniformWhenConcentrationIsZero)
{
    EXPECT_NEAR(von_mises_logpdf(1.234, 0.0), -std::log(2.0 * std::numbers::pi), 1e-12);
    EXPECT_NEAR(von_mises_logpdf(1.234, 0.0), -1.837877, 1e-6);
}

TEST(VonMises, Symmetric)
{
    EXPECT_DOUBLE_EQ(von_mises_logpdf(0.7, 2.0), von_mises_logpdf(-0.7, 2.0));
}

TEST(VonMises, MatchesBesselOracleAtZero)
{
    const double expected = 2.0 - std::log(2.0 * std::numbers::pi * oracle::bessel_i0(2.0));
    EXPECT_NEAR(von_mises_logpdf(0.0, 2.0), expected, 1e-12);
}

TEST(VonMises, NegativeConcentrationThrows)
{
    EXPECT_THROW(von_mises_logpdf(0.0, -0.1), std::domain_error);
}

TEST(VonMises, IntegratesToOne)
{
    for (double kappa : {0.0, 0.3, 2.0, 15.0, 200.0}) {
        const double total =
            oracle::integrate([&](double t) { return std::exp(von_mises_logpdf(t, kappa)); }, -std::numbers::pi,
                              std::numbers::pi);
        EXPECT_NEAR(total, 1.0, 1e-6) << "kappa " << kappa;
    }
}

TEST(VonMises, SamplerMatchesQuadratureCdf)
{
    std::mt19937_64 rng(11);
    for (double kappa : {0.0, 0.8, 5.0}) {
        std::vector<double> xs(100000);
        for (auto& x : xs)
            x = von_mises_sample(kappa, rng);
        const oracle::TabulatedDistribution ref([&](double t) { return std::exp(von_mises_logpdf(t, kappa)); },
                                                -std::numbers::pi, std::numbers::pi);
        EXPECT_LT(oracle::ks_distance(xs, [&](double x) { return ref.cdf(x); }), 0.01) << "kappa " << kappa;
    }
}

TEST(LogBessel, AgreesWithBoostAndStaysFinite)
{
    for (double x : {0.0, 1e-3, 0.5, 3.0, 29.9, 30.1, 100.0, 600.0})
        EXPECT_NEAR(log_bessel_i0(x), std::log(oracle::bessel_i0(x)), 1e-12 * std::max(1.0, x)) << x;
    for (double x : {1e3, 1e5, 1e6}) {
        EXPECT_TRUE(std::isfinite(log_bessel_i0(x)));
        EXPECT_TRUE(std::isfinite(log_bessel_i0_scaled(x)));
        const double hankel = 1.0 + 1.0 / (8.0 * x) + 9.0 / (128.0 * x * x);
        EXPECT_NEAR(log_bessel_i0_scaled(x), -0.5 * std::log(2.0 * std::numbers::pi * x) + std::log(hankel), 1e-9);
    }
}

TEST(Rayleigh, ClosedFormMedian)
{
    const double sigma = 0.7;
    const double median = sigma * std::sqrt(2.0 * std::log(2.0));
    const double mass = oracle::integrate([&](double s) { return std::exp(rayleigh_logpdf(s, sigma)); }, 0.0, median);
    EXPECT_NEAR(mass, 0.5, 1e-10);
}

TEST(Rayleigh, IntegratesToOne)
{
    const double total = oracle::integrate_to_inf([](double s) { return std::exp(rayleigh_logpdf(s, 0.3)); });
    EXPECT_NEAR(total, 1.0, 1e-8);
}

TEST(Rayleigh, SampleMeanAndDistribution)
{
    std::mt19937_64 rng(3);
    const double sigma = 1.3;
    const int n = 1000000;
    std::vector<double> xs(n);
    double sum = 0.0;
    double sum2 = 0.0;
    for (auto& x : xs) {
        x = rayleigh_sample(sigma, rng);
        sum += x;
        sum2 += x * x;
    }
    const double mean = sum / n;
    const double sd = std::sqrt(sum2 / n - mean * mean);
    EXPECT_NEAR(mean, sigma * std::sqrt(std::numbers::pi / 2.0), 3.0 * sd / std::sqrt(n));
    xs.resize(100000);
    EXPECT_LT(oracle::ks_distance(xs, [&](double s) { return oracle::rayleigh_cdf(s, sigma); }), 0.01);
}

TEST(Rayleigh, DomainHandling)
{
    EXPECT_EQ(rayleigh_logpdf(-0.1, 1.0), neg_inf);
    EXPECT_THROW(rayleigh_logpdf(0.1, 0.0), std::domain_error);
}

TEST(Rice, ReducesToRayleighWithoutCorrelation)
{
    for (double prev : {0.0, 0.4, 3.0})
        for (double s : {0.05, 0.3, 1.1})
            EXPECT_NEAR(rice_logpdf(s, prev, RiceSpeedKernel(0.3, 0.0)), rayleigh_logpdf(s, 0.3), 1e-12);
}

TEST(Rice, IntegratesToOne)
{
    const double total = oracle::integrate_to_inf([](double s) { return rice_pdf(s, 0.4, 0.3, 0.25); });
    EXPECT_NEAR(total, 1.0, 1e-6);
    const double strong = oracle::integrate_to_inf([](double s) { return rice_pdf(s, 2.0, 0.3, 0.95); });
    EXPECT_NEAR(strong, 1.0, 1e-6);
}

TEST(Rice, FiniteForLargeArguments)
{
    const RiceSpeedKernel k(0.01, 0.9);
    EXPECT_TRUE(std::isfinite(rice_logpdf(50.0, 50.0, k)));
}

TEST(Rice, DegenerateCorrelationThrows)
{
    EXPECT_THROW(RiceSpeedKernel(0.3, 1.0), std::domain_error);
}

TEST(Rice, SamplerMatchesQuadratureCdf)
{
    std::mt19937_64 rng(5);
    const RiceSpeedKernel k(0.3, 0.6);
    std::vector<double> xs(100000);
    for (auto& x : xs)
        x = rice_sample(0.5, k, rng);
    const oracle::TabulatedDistribution ref([](double s) { return rice_pdf(s, 0.5, 0.3, 0.6); }, 0.0, 3.0);
    EXPECT_LT(oracle::ks_distance(xs, [&](double x) { return ref.cdf(x); }), 0.01);
}

TEST(Rice, ChainPreservesRayleighMarginal)
{
    std::mt19937_64 rng(8);
    const double sigma = 0.3;
    const RiceSpeedKernel k(sigma, 0.7);
    std::vector<double> xs(100000);
    for (auto& x : xs) {
        double s = rayleigh_sample(sigma, rng);
        for (int i = 0; i < 50; ++i)
            s = rice_sample(s, k, rng);
        x = s;
    }
    EXPECT_LT(oracle::ks_distance(xs, [&](double s) { return oracle::rayleigh_cdf(s, sigma); }), 0.01);
}

TEST(BivariateRayleigh, FactorisesIntoMarginalAndConditional)
{
    const RiceSpeedKernel k(0.3, 0.25);
    EXPECT_NEAR(bivariate_rayleigh_logpdf(0.2, 0.5, k), rayleigh_logpdf(0.2, 0.3) + rice_logpdf(0.5, 0.2, k), 1e-12);
}

TEST(BivariateRayleigh, Symmetric)
{
    const RiceSpeedKernel k(0.3, 0.25);
    EXPECT_NEAR(bivariate_rayleigh_logpdf(0.1, 0.7, k), bivariate_rayleigh_logpdf(0.7, 0.1, k), 1e-13);
}

TEST(BivariateRayleigh, MarginalIsRayleigh)
{
    const RiceSpeedKernel k(0.3, 0.25);
    for (double a : {0.05, 0.3, 0.8}) {
        const double marg =
            oracle::integrate_to_inf([&](double b) { return std::exp(bivariate_rayleigh_logpdf(a, b, k)); });
        EXPECT_NEAR(marg, std::exp(rayleigh_logpdf(a, 0.3)), 1e-6);
    }
}

TEST(BivariateRayleigh, IndependentWithoutCorrelation)
{
    const RiceSpeedKernel k(0.3, 0.0);
    EXPECT_NEAR(bivariate_rayleigh_logpdf(0.2, 0.5, k), rayleigh_logpdf(0.2, 0.3) + rayleigh_logpdf(0.5, 0.3), 1e-12);
}

TEST(BivariateRayleigh, IntegratesToOne)
{
    const RiceSpeedKernel k(0.3, 0.5);
    const double total = oracle::integrate_to_inf([&](double a) {
        return oracle::integrate_to_inf([&](double b) { return std::exp(bivariate_rayleigh_logpdf(a, b, k)); });
    });
    EXPECT_NEAR(total, 1.0, 1e-6);
}

TEST(Priors, DefaultHyperparameters)
{
    const PriorSet p;
    EXPECT_DOUBLE_EQ(p.kappa.a, 1.0);
    EXPECT_DOUBLE_EQ(p.kappa.b, -0.5);
    EXPECT_DOUBLE_EQ(p.rho.alpha, 1.0);
    EXPECT_DOUBLE_EQ(p.rho.beta, 1.2);
}

TEST(Priors, RhoOutsideUnitIntervalHasZeroDensity)
{
    const PriorSet p;
    ModelParams m{1.0, 1.0, 1.0, 1.0, 0.5};
    EXPECT_EQ(prior_logpdf(m, p), neg_inf);
    m.rho = -0.1;
    EXPECT_EQ(prior_logpdf(m, p), neg_inf);
}

TEST(Priors, FarTailNormalisation)
{
    for (double z : {4.0, 6.0, 10.0, 20.0, 40.0}) {
        const boost::math::normal_distribution<double> n(0.0, 1.0);
        const double expected = std::log(boost::math::cdf(boost::math::complement(n, z)));
        EXPECT_NEAR(log_normal_upper_tail(z), expected, 1e-9 * std::abs(expected)) << z;
    }
}

TEST(Priors, HalfNormalRatioIdentity)
{
    const TruncatedNormalPrior prior{0.0, 0.7};
    const double a = 0.3;
    const double b = 1.1;
    EXPECT_NEAR(prior.logpdf(a) - prior.logpdf(b), (b * b - a * a) / (2.0 * 0.7 * 0.7), 1e-12);
}

TEST(Priors, TruncatedNormalNormalisedAndSampled)
{
    std::mt19937_64 rng(2);
    for (auto prior : {TruncatedNormalPrior{0.5, 0.5}, TruncatedNormalPrior{0.0, 1.0}, TruncatedNormalPrior{-3.0, 0.5}}) {
        const double total = oracle::integrate_to_inf([&](double x) { return std::exp(prior.logpdf(x)); });
        EXPECT_NEAR(total, 1.0, 1e-6);
        std::vector<double> xs(100000);
        for (auto& x : xs)
            x = prior.sample(rng);
        EXPECT_LT(oracle::ks_distance(xs, [&](double x) { return oracle::truncated_normal_cdf(x, prior.mode, prior.scale); }),
                  0.01);
    }
}

TEST(Priors, BetaNormalisedAndSampled)
{
    std::mt19937_64 rng(4);
    const BetaPrior prior{1.0, 1.2};
    EXPECT_NEAR(oracle::integrate([&](double x) { return std::exp(prior.logpdf(x)); }, 0.0, 1.0), 1.0, 1e-8);
    std::vector<double> xs(100000);
    for (auto& x : xs)
        x = prior.sample(rng);
    EXPECT_LT(oracle::ks_distance(xs, [](double x) { return oracle::beta_cdf(x, 1.0, 1.2); }), 0.01);
}

TEST(Priors, BesselExponentialNormalisability)
{
    EXPECT_NO_THROW((BesselExponentialPrior{1.0, -0.5}.validate()));
    EXPECT_THROW((BesselExponentialPrior{0.5, -0.5}.validate()), std::invalid_argument);
    const BesselExponentialPrior prior{1.0, -0.5};
    const double total = oracle::integrate_to_inf([&](double k) { return std::exp(prior.logpdf_unnormalized(k)); });
    EXPECT_TRUE(std::isfinite(total));
    EXPECT_GT(total, 0.0);
}
