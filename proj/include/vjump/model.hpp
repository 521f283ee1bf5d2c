/// @file model.hpp Velocity-jump trajectories: representation, simulation, path density and likelihood.
#pragma once

#include "distributions.hpp"
#include "numeric.hpp"
#include "params.hpp"

#include <algorithm>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace vjump
{

/// @brief Piecewise-linear latent path.
///
/// Velocity `velocities[i]` applies on [t_i, t_{i+1}) where t_0 = `t0`, t_i = `turn_times[i-1]`
/// for 1 <= i <= N and t_{N+1} = `t_end`. Locations are derived from `x0` by integration, so
/// polar quantities and turn locations are computed on demand.
struct Trajectory
{
    double t0 = 0.0;
    double t_end = 1.0;
    Vec2 x0 = Vec2::Zero();
    std::vector<double> turn_times;
    std::vector<Vec2> velocities{Vec2::Zero()};

    std::size_t num_turns() const { return turn_times.size(); }

    /// Time of event i, with event 0 the start and event N+1 the end.
    double event_time(std::size_t i) const
    {
        if (i == 0)
            return t0;
        if (i > turn_times.size())
            return t_end;
        return turn_times[i - 1];
    }

    /// Locations at t0 and at each turn (N+1 entries); the end location is appended when `with_end`.
    std::vector<Vec2> event_locations(bool with_end = false) const
    {
        std::vector<Vec2> locs;
        locs.reserve(turn_times.size() + 2);
        Vec2 x = x0;
        locs.push_back(x);
        for (std::size_t i = 0; i < turn_times.size(); ++i) {
            x += (turn_times[i] - event_time(i)) * velocities[i];
            locs.push_back(x);
        }
        if (with_end)
            locs.push_back(x + (t_end - event_time(turn_times.size())) * velocities.back());
        return locs;
    }

    /// Index of the segment whose velocity applies at time t (the later segment at a turn time).
    std::size_t segment_at(double t) const
    {
        return static_cast<std::size_t>(std::upper_bound(turn_times.begin(), turn_times.end(), t) -
                                        turn_times.begin());
    }

    /// Throws std::invalid_argument describing the first violated invariant.
    void validate() const
    {
        if (!(t_end > t0))
            throw std::invalid_argument("trajectory end must follow its start");
        if (velocities.size() != turn_times.size() + 1)
            throw std::invalid_argument("trajectory needs exactly one more velocity than turns");
        double prev = t0;
        for (double t : turn_times) {
            if (!(t > prev))
                throw std::invalid_argument("turn times must be strictly increasing inside (t0, t_end)");
            prev = t;
        }
        if (!(t_end > prev))
            throw std::invalid_argument("turn times must lie before t_end");
        for (const auto& v : velocities)
            if (!v.allFinite())
                throw std::invalid_argument("trajectory velocities must be finite");
        if (!x0.allFinite())
            throw std::invalid_argument("trajectory start location must be finite");
    }
};

/// Unit conversion between the data as supplied and the internal working scale.
struct ScaleFactors
{
    double time = 1.0;     ///< original time units per working time unit
    double distance = 1.0; ///< original distance units per working distance unit
};

/// Time-ordered location observations.
struct Dataset
{
    std::vector<double> times;
    std::vector<Vec2> locations;
    ScaleFactors scale; ///< factors that map these values back to the original units

    /// Number of inter-observation intervals, n.
    std::size_t num_intervals() const { return times.empty() ? 0 : times.size() - 1; }

    void validate() const
    {
        if (times.size() != locations.size())
            throw DataError("observation times and locations differ in length");
        if (times.size() < 2)
            throw DataError("at least two observations are required");
        for (std::size_t k = 0; k < times.size(); ++k) {
            if (!std::isfinite(times[k]) || !locations[k].allFinite())
                throw DataError("observation " + std::to_string(k) + " is not finite");
            if (k > 0 && !(times[k] > times[k - 1]))
                throw DataError("observation times must be strictly increasing (observation " + std::to_string(k) +
                                ")");
        }
    }
};

// ---------------------------------------------------------------------------
// Deterministic path evaluation
// ---------------------------------------------------------------------------

inline Vec2 interpolate(const Trajectory& traj, double t)
{
    if (!(t >= traj.t0 && t <= traj.t_end))
        throw std::domain_error("interpolation time lies outside the trajectory");
    Vec2 x = traj.x0;
    const std::size_t seg = std::min(traj.segment_at(t), traj.turn_times.size());
    for (std::size_t i = 0; i < seg; ++i)
        x += (traj.turn_times[i] - traj.event_time(i)) * traj.velocities[i];
    return x + (t - traj.event_time(seg)) * traj.velocities[seg];
}

/// Locations at a sorted list of times, in one pass over the segments.
inline std::vector<Vec2> interpolate_sorted(const Trajectory& traj, std::span<const double> times)
{
    std::vector<Vec2> out;
    out.reserve(times.size());
    std::size_t seg = 0;
    Vec2 seg_start = traj.x0;
    for (double t : times) {
        if (!(t >= traj.t0 && t <= traj.t_end))
            throw std::domain_error("interpolation time lies outside the trajectory");
        while (seg < traj.turn_times.size() && traj.turn_times[seg] <= t) {
            seg_start += (traj.turn_times[seg] - traj.event_time(seg)) * traj.velocities[seg];
            ++seg;
        }
        out.push_back(seg_start + (t - traj.event_time(seg)) * traj.velocities[seg]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Densities
// ---------------------------------------------------------------------------

/// Density of a velocity under the stationary law N(0, sigma^2 I_2).
inline double stationary_velocity_logpdf(const Vec2& v, double sigma)
{
    const double s2 = sigma * sigma;
    return -std::log(two_pi * s2) - v.squaredNorm() / (2.0 * s2);
}

/// @brief Cartesian density of the next velocity given the previous one.
///
/// Combines the von Mises turn, the Rice speed transition and the polar-to-Cartesian
/// Jacobian 1/|v_next|. Zero speed is a singular point and has density zero.
inline double velocity_transition_logpdf(const Vec2& v_next, const Vec2& v_prev, const ModelParams& params)
{
    const double s_next = v_next.norm();
    if (!(s_next > 0.0))
        return neg_inf;
    const double s_prev = v_prev.norm();
    const double turn = wrap_angle(std::atan2(v_next.y(), v_next.x()) - std::atan2(v_prev.y(), v_prev.x()));
    const RiceSpeedKernel kernel(params.sigma, params.rho);
    return von_mises_logpdf(turn, params.kappa) + rice_logpdf(s_next, s_prev, kernel) - std::log(s_next);
}

/// Log density of a sequence of velocities: the first transitions from `anchor` when given,
/// otherwise it carries the stationary density.
inline double velocity_chain_logdensity(std::span<const Vec2> velocities, const std::optional<Vec2>& anchor,
                                        const ModelParams& params)
{
    if (velocities.empty())
        return 0.0;
    double lp = 0.0;
    if (anchor)
        lp += velocity_transition_logpdf(velocities[0], *anchor, params);
    else if (velocities[0].squaredNorm() > 0.0)
        lp += stationary_velocity_logpdf(velocities[0], params.sigma);
    else
        return neg_inf;
    for (std::size_t i = 1; i < velocities.size(); ++i) {
        lp += velocity_transition_logpdf(velocities[i], velocities[i - 1], params);
        if (lp == neg_inf)
            return lp;
    }
    return lp;
}

/// Poisson-process density of `num_events` events on a window of length `duration`.
inline double event_times_logdensity(std::size_t num_events, double duration, double lambda)
{
    if (num_events == 0)
        return -lambda * duration;
    return static_cast<double>(num_events) * std::log(lambda) - lambda * duration;
}

/// log p(T) + log p(V | T) for the whole path.
inline double path_logdensity(const Trajectory& traj, const ModelParams& params,
                              const std::optional<Vec2>& v_anchor = std::nullopt)
{
    return event_times_logdensity(traj.num_turns(), traj.t_end - traj.t0, params.lambda) +
           velocity_chain_logdensity(traj.velocities, v_anchor, params);
}

inline double gaussian_obs_logpdf(const Vec2& residual, double varsigma)
{
    const double v = varsigma * varsigma;
    return -std::log(two_pi * v) - residual.squaredNorm() / (2.0 * v);
}

/// Gaussian observation log-likelihood over observations [first, last).
inline double observation_loglik(const Trajectory& traj, const Dataset& ds, double varsigma, std::size_t first,
                                 std::size_t last)
{
    if (!(varsigma > 0.0))
        throw std::domain_error("observation error SD must be positive");
    const std::span<const double> times(ds.times.data() + first, last - first);
    const auto fitted = interpolate_sorted(traj, times);
    double ll = 0.0;
    for (std::size_t k = first; k < last; ++k)
        ll += gaussian_obs_logpdf(ds.locations[k] - fitted[k - first], varsigma);
    return ll;
}

inline double observation_loglik(const Trajectory& traj, const Dataset& ds, double varsigma)
{
    return observation_loglik(traj, ds, varsigma, 0, ds.times.size());
}

// ---------------------------------------------------------------------------
// Forward simulation
// ---------------------------------------------------------------------------

/// Optional fixed start for a simulation.
struct InitialState
{
    Vec2 x0 = Vec2::Zero();
    Vec2 v0 = Vec2::Zero();
};

template <class Rng>
Trajectory simulate(const ModelParams& params, double t0, double t_end, const std::optional<InitialState>& init,
                    Rng& rng)
{
    if (!(t_end > t0))
        throw std::invalid_argument("simulation horizon must be positive");
    if (!(params.lambda >= 0.0) || !(params.sigma > 0.0) || !(params.kappa >= 0.0) ||
        !(params.rho >= 0.0 && params.rho < 1.0))
        throw std::domain_error("simulation parameters outside their domain");

    Trajectory traj;
    traj.t0 = t0;
    traj.t_end = t_end;
    traj.velocities.clear();

    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double bearing = 0.0;
    double speed = 0.0;
    if (init) {
        traj.x0 = init->x0;
        bearing = std::atan2(init->v0.y(), init->v0.x());
        speed = init->v0.norm();
    } else {
        traj.x0 = Vec2::Zero();
        bearing = two_pi * unif(rng);
        speed = rayleigh_sample(params.sigma, rng);
    }
    traj.velocities.push_back(speed * Vec2(std::cos(bearing), std::sin(bearing)));

    if (params.lambda > 0.0) {
        std::exponential_distribution<double> gap(params.lambda);
        const RiceSpeedKernel kernel(params.sigma, params.rho);
        for (double t = t0 + gap(rng); t < t_end; t += gap(rng)) {
            traj.turn_times.push_back(t);
            bearing += von_mises_sample(params.kappa, rng);
            speed = rice_sample(speed, kernel, rng);
            traj.velocities.push_back(speed * Vec2(std::cos(bearing), std::sin(bearing)));
        }
    }
    return traj;
}

/// Noisy observations of a trajectory at the given (sorted) times.
template <class Rng>
Dataset observe(const Trajectory& traj, std::span<const double> times, double varsigma, Rng& rng)
{
    if (!(varsigma >= 0.0))
        throw std::domain_error("observation error SD must be non-negative");
    Dataset ds;
    ds.times.assign(times.begin(), times.end());
    ds.locations = interpolate_sorted(traj, times);
    if (varsigma > 0.0) {
        std::normal_distribution<double> noise(0.0, varsigma);
        for (auto& x : ds.locations) {
            const double ex = noise(rng);
            const double ey = noise(rng);
            x += Vec2(ex, ey);
        }
    }
    return ds;
}

} // namespace vjump
