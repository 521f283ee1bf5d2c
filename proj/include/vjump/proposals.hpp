/// @file proposals.hpp Window selection, tally and event-time kernels, and the Gaussian velocity proposal.
#pragma once

#include "gaussian.hpp"
#include "geometry.hpp"
#include "model.hpp"
#include "numeric.hpp"
#include "params.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace vjump
{

enum class TallyProposalKind
{
    FixedKeepTimes,
    FixedResampleTimes,
    Uniform,
    Poisson,
    RandomWalk,
};

inline const char* to_string(TallyProposalKind kind)
{
    switch (kind) {
    case TallyProposalKind::FixedKeepTimes: return "fixed_keep";
    case TallyProposalKind::FixedResampleTimes: return "fixed_resample";
    case TallyProposalKind::Uniform: return "uniform";
    case TallyProposalKind::Poisson: return "poisson";
    case TallyProposalKind::RandomWalk: return "random_walk";
    }
    return "unknown";
}

inline constexpr std::size_t num_proposal_kinds = 5;

/// @brief Distribution of the number of interior events L in a window.
///
/// When the trajectory has only N events, L is clamped: values at or above N collapse onto N.
struct LengthDistribution
{
    std::vector<double> pmf{1.0}; ///< pmf[L]

    static LengthDistribution uniform(int lo, int hi)
    {
        if (lo < 0 || hi < lo)
            throw std::invalid_argument("window length range must satisfy 0 <= lo <= hi");
        LengthDistribution d;
        d.pmf.assign(static_cast<std::size_t>(hi) + 1, 0.0);
        for (int l = lo; l <= hi; ++l)
            d.pmf[static_cast<std::size_t>(l)] = 1.0 / static_cast<double>(hi - lo + 1);
        return d;
    }

    static LengthDistribution binomial(int n, double p)
    {
        if (n < 0 || !(p >= 0.0 && p <= 1.0))
            throw std::invalid_argument("binomial window length needs n >= 0 and p in [0, 1]");
        LengthDistribution d;
        d.pmf.assign(static_cast<std::size_t>(n) + 1, 0.0);
        for (int k = 0; k <= n; ++k) {
            const double logc = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
            double lp = logc;
            if (k > 0)
                lp += k * std::log(p);
            if (n - k > 0)
                lp += (n - k) * std::log1p(-p);
            d.pmf[static_cast<std::size_t>(k)] = std::exp(lp);
        }
        return d;
    }

    /// Probability of L after clamping to at most `num_events`.
    double effective(std::size_t length, std::size_t num_events) const
    {
        if (length > num_events)
            return 0.0;
        if (length < num_events)
            return length < pmf.size() ? pmf[length] : 0.0;
        double tail = 0.0;
        for (std::size_t l = num_events; l < pmf.size(); ++l)
            tail += pmf[l];
        return tail;
    }

    template <class Rng>
    std::size_t sample(std::size_t num_events, Rng& rng) const
    {
        std::discrete_distribution<std::size_t> draw(pmf.begin(), pmf.end());
        return std::min(draw(rng), num_events);
    }
};

/// Tuning constants of the trajectory proposals (scaled units).
struct ProposalSettings
{
    /// Mixture weights of Fixed, Uniform, Poisson and RandomWalk.
    std::array<double, 4> kind_weights{0.25, 0.25, 0.25, 0.25};
    double fixed_resample_prob = 0.5;
    LengthDistribution fixed_keep_lengths = LengthDistribution::uniform(1, 30);
    LengthDistribution fixed_resample_lengths = LengthDistribution::uniform(1, 7);
    LengthDistribution uniform_lengths = LengthDistribution::uniform(1, 2);
    LengthDistribution poisson_lengths = LengthDistribution::binomial(9, 0.2);
    LengthDistribution random_walk_lengths = LengthDistribution::binomial(9, 0.2);
    double p_up = 1.0 / 3.0;
    double p_down = 1.0 / 3.0;
    double gamma = 0.0;             ///< AR(1) correlation of pre-proposal velocities
    double tau = 0.05;              ///< constructive half-width
    double constructive_prob = 0.5; ///< weight of the constructive component when the pattern matches
    double join_tolerance = 3.0;    ///< join agreement tolerance in units of varsigma / sigma
    double velocity_step = 0.1;     ///< fixed-times random walk SD in units of sigma
    double x0_step = 0.5;           ///< fixed-times random walk SD of a latent start, in units of varsigma
    double x0_spread = 2.0;         ///< pre-proposal SD of a latent start, in units of varsigma
    double eigen_floor = default_eigen_floor;

    const LengthDistribution& lengths(TallyProposalKind kind) const
    {
        switch (kind) {
        case TallyProposalKind::FixedKeepTimes: return fixed_keep_lengths;
        case TallyProposalKind::FixedResampleTimes: return fixed_resample_lengths;
        case TallyProposalKind::Uniform: return uniform_lengths;
        case TallyProposalKind::Poisson: return poisson_lengths;
        case TallyProposalKind::RandomWalk: break;
        }
        return random_walk_lengths;
    }

    void validate() const
    {
        double total = 0.0;
        for (double w : kind_weights) {
            if (!(w >= 0.0))
                throw std::invalid_argument("proposal kind weights must be non-negative");
            total += w;
        }
        if (!(total > 0.0))
            throw std::invalid_argument("at least one proposal kind needs positive weight");
        if (!(fixed_resample_prob >= 0.0 && fixed_resample_prob <= 1.0))
            throw std::invalid_argument("fixed_resample_prob must lie in [0, 1]");
        if (!(p_up > 0.0 && p_down > 0.0 && p_up + p_down <= 1.0))
            throw std::invalid_argument("random-walk tally needs p_up, p_down > 0 with p_up + p_down <= 1");
        if (!(gamma > -1.0 && gamma < 1.0))
            throw std::invalid_argument("gamma must lie in (-1, 1)");
        if (!(tau > 0.0) || !(constructive_prob >= 0.0 && constructive_prob <= 1.0))
            throw std::invalid_argument("constructive proposals need tau > 0 and a probability in [0, 1]");
        if (!(velocity_step >= 0.0 && x0_step >= 0.0 && x0_spread > 0.0 && join_tolerance > 0.0))
            throw std::invalid_argument("proposal step sizes must be non-negative");
    }
};

// ---------------------------------------------------------------------------
// Windows
// ---------------------------------------------------------------------------

/// Which windows a selection may return.
enum class WindowMode
{
    Any,   ///< uniform over all windows with the sampled L
    Start, ///< the window must begin at the first observation
    End,   ///< the window must finish at the last observation
};

/// Event-index pair chosen by select_window, with its selection probability.
struct WindowChoice
{
    std::size_t begin_event = 0;
    std::size_t end_event = 1;
    double log_prob = 0.0;
};

/// Log-probability that a selection in `mode` returns one particular window with `length` interior events.
inline double window_log_probability(const LengthDistribution& dist, WindowMode mode, std::size_t num_events,
                                     std::size_t length)
{
    const double p = dist.effective(length, num_events);
    if (!(p > 0.0))
        return neg_inf;
    double lp = std::log(p);
    if (mode == WindowMode::Any)
        lp -= std::log(static_cast<double>(num_events - length + 1));
    return lp;
}

template <class Rng>
WindowChoice select_window(const Trajectory& traj, const LengthDistribution& dist, WindowMode mode, Rng& rng)
{
    const std::size_t n_events = traj.num_turns();
    const std::size_t length = dist.sample(n_events, rng);
    std::size_t begin = 0;
    switch (mode) {
    case WindowMode::Any: {
        std::uniform_int_distribution<std::size_t> pick(0, n_events - length);
        begin = pick(rng);
        break;
    }
    case WindowMode::Start: begin = 0; break;
    case WindowMode::End: begin = n_events - length; break;
    }
    return {begin, begin + length + 1, window_log_probability(dist, mode, n_events, length)};
}

/// @brief A stretch (t_B, t_E) of the trajectory between two events, with its fixed surroundings.
///
/// At the data start x_B is latent and there is no incoming velocity; at the data end there is no
/// x_E constraint and no outgoing velocity.
struct Window
{
    std::size_t begin_event = 0;
    std::size_t end_event = 1;
    double t_begin = 0.0;
    double t_end = 1.0;
    bool at_start = false;
    bool at_end = false;
    Vec2 x_begin = Vec2::Zero();
    Vec2 x_end = Vec2::Zero();
    std::optional<Vec2> v_before; ///< velocity arriving at t_B
    std::optional<Vec2> v_after;  ///< velocity leaving t_E
    std::size_t obs_first = 0;    ///< observations [obs_first, obs_last) enter the window likelihood
    std::size_t obs_last = 0;
    std::vector<double> bounds;   ///< t_B, the observation times strictly inside, t_E
    std::vector<Vec2> bound_anchors;

    std::size_t num_intervals() const { return bounds.size() - 1; }

    std::vector<double> interval_lengths() const
    {
        std::vector<double> out(num_intervals());
        for (std::size_t j = 0; j < out.size(); ++j)
            out[j] = bounds[j + 1] - bounds[j];
        return out;
    }
};

inline Window make_window(const Trajectory& traj, const Dataset& ds, std::size_t begin_event, std::size_t end_event)
{
    const std::size_t n_events = traj.num_turns();
    if (!(begin_event < end_event && end_event <= n_events + 1))
        throw std::invalid_argument("window events must satisfy B < E <= N + 1");
    Window w;
    w.begin_event = begin_event;
    w.end_event = end_event;
    w.t_begin = traj.event_time(begin_event);
    w.t_end = traj.event_time(end_event);
    w.at_start = begin_event == 0;
    w.at_end = end_event == n_events + 1;

    const auto locs = traj.event_locations(true);
    w.x_begin = locs[begin_event];
    w.x_end = locs[end_event];
    if (!w.at_start)
        w.v_before = traj.velocities[begin_event - 1];
    if (!w.at_end)
        w.v_after = traj.velocities[end_event];

    const auto first_inside = static_cast<std::size_t>(
        std::upper_bound(ds.times.begin(), ds.times.end(), w.t_begin) - ds.times.begin());
    const auto past_inside = static_cast<std::size_t>(
        std::lower_bound(ds.times.begin(), ds.times.end(), w.t_end) - ds.times.begin());
    w.obs_first = w.at_start ? 0 : first_inside;
    w.obs_last = w.at_end ? ds.times.size() : past_inside;

    w.bounds.push_back(w.t_begin);
    w.bound_anchors.push_back(w.at_start ? ds.locations.front() : w.x_begin);
    for (std::size_t k = first_inside; k < past_inside; ++k) {
        w.bounds.push_back(ds.times[k]);
        w.bound_anchors.push_back(ds.locations[k]);
    }
    w.bounds.push_back(w.t_end);
    w.bound_anchors.push_back(w.at_end ? ds.locations.back() : w.x_end);
    return w;
}

/// Latent content of a window: interior turn times, the velocities on the L+1 pieces, and the start location.
struct WindowPath
{
    std::vector<double> turn_times;
    std::vector<Vec2> velocities;
    Vec2 x_begin = Vec2::Zero();
};

inline WindowPath extract_window_path(const Trajectory& traj, const Window& w)
{
    WindowPath p;
    p.turn_times.assign(traj.turn_times.begin() + static_cast<std::ptrdiff_t>(w.begin_event),
                        traj.turn_times.begin() + static_cast<std::ptrdiff_t>(w.end_event - 1));
    p.velocities.assign(traj.velocities.begin() + static_cast<std::ptrdiff_t>(w.begin_event),
                        traj.velocities.begin() + static_cast<std::ptrdiff_t>(w.end_event));
    p.x_begin = w.x_begin;
    return p;
}

/// Replaces the window content; only a window at the data start moves x0.
inline Trajectory splice(const Trajectory& traj, const Window& w, const WindowPath& path)
{
    if (path.velocities.size() != path.turn_times.size() + 1)
        throw std::invalid_argument("window path needs one more velocity than turns");
    Trajectory out;
    out.t0 = traj.t0;
    out.t_end = traj.t_end;
    out.x0 = w.at_start ? path.x_begin : traj.x0;
    out.velocities.clear();
    const auto b = static_cast<std::ptrdiff_t>(w.begin_event);
    const auto e = static_cast<std::ptrdiff_t>(w.end_event);
    out.turn_times.reserve(traj.turn_times.size() - (w.end_event - w.begin_event - 1) + path.turn_times.size());
    out.turn_times.insert(out.turn_times.end(), traj.turn_times.begin(), traj.turn_times.begin() + b);
    out.turn_times.insert(out.turn_times.end(), path.turn_times.begin(), path.turn_times.end());
    out.turn_times.insert(out.turn_times.end(), traj.turn_times.begin() + e - 1, traj.turn_times.end());
    out.velocities.insert(out.velocities.end(), traj.velocities.begin(), traj.velocities.begin() + b);
    out.velocities.insert(out.velocities.end(), path.velocities.begin(), path.velocities.end());
    out.velocities.insert(out.velocities.end(), traj.velocities.begin() + e, traj.velocities.end());
    return out;
}

/// Counts of the given (sorted, interior) times per window interval.
inline Tally tally_of(const Window& w, std::span<const double> times)
{
    Tally m(w.num_intervals(), 0);
    std::size_t j = 0;
    for (double t : times) {
        while (j + 1 < w.num_intervals() && t >= w.bounds[j + 1])
            ++j;
        ++m[j];
    }
    return m;
}

// ---------------------------------------------------------------------------
// Tally kernels
// ---------------------------------------------------------------------------

struct TallyProposal
{
    Tally tally;
    double log_forward = 0.0; ///< log q_M(M' | M)
    double log_reverse = 0.0; ///< log q_M(M | M')
};

inline double poisson_log_pmf(int k, double mean)
{
    if (k < 0)
        return neg_inf;
    if (mean <= 0.0)
        return k == 0 ? 0.0 : neg_inf;
    return k * std::log(mean) - mean - std::lgamma(k + 1.0);
}

/// log q_M(to | from) for one kind; `lengths` are the window interval lengths.
inline double tally_log_kernel(TallyProposalKind kind, const Tally& from, const Tally& to,
                               std::span<const double> lengths, double lambda, const ProposalSettings& settings)
{
    if (from.size() != to.size() || from.size() != lengths.size())
        throw std::invalid_argument("tally kernel arguments differ in length");
    switch (kind) {
    case TallyProposalKind::FixedKeepTimes:
    case TallyProposalKind::FixedResampleTimes: return from == to ? 0.0 : neg_inf;
    case TallyProposalKind::Uniform: {
        int total_from = 0;
        int total_to = 0;
        double total_len = 0.0;
        for (std::size_t j = 0; j < from.size(); ++j) {
            total_from += from[j];
            total_to += to[j];
            total_len += lengths[j];
        }
        if (total_from != total_to)
            return neg_inf;
        double lp = std::lgamma(total_to + 1.0);
        for (std::size_t j = 0; j < to.size(); ++j) {
            if (to[j] < 0)
                return neg_inf;
            lp -= std::lgamma(to[j] + 1.0);
            if (to[j] > 0)
                lp += to[j] * std::log(lengths[j] / total_len);
        }
        return lp;
    }
    case TallyProposalKind::Poisson: {
        double lp = 0.0;
        for (std::size_t j = 0; j < to.size(); ++j)
            lp += poisson_log_pmf(to[j], lambda * lengths[j]);
        return lp;
    }
    case TallyProposalKind::RandomWalk: {
        const double stay = 1.0 - settings.p_up - settings.p_down;
        double lp = 0.0;
        for (std::size_t j = 0; j < to.size(); ++j) {
            const int d = to[j] - from[j];
            double p = 0.0;
            if (d == 1)
                p = settings.p_up;
            else if (d == -1)
                p = settings.p_down;
            else if (d == 0)
                p = from[j] == 0 ? stay + settings.p_down : stay;
            if (!(p > 0.0))
                return neg_inf;
            lp += std::log(p);
        }
        return lp;
    }
    }
    return neg_inf;
}

template <class Rng>
TallyProposal propose_tally(TallyProposalKind kind, const Tally& current, std::span<const double> lengths,
                            double lambda, const ProposalSettings& settings, Rng& rng)
{
    TallyProposal out;
    out.tally = current;
    switch (kind) {
    case TallyProposalKind::FixedKeepTimes:
    case TallyProposalKind::FixedResampleTimes: break;
    case TallyProposalKind::Uniform: {
        int remaining = 0;
        double remaining_len = 0.0;
        for (std::size_t j = 0; j < current.size(); ++j) {
            remaining += current[j];
            remaining_len += lengths[j];
        }
        for (std::size_t j = 0; j < current.size(); ++j) {
            int draw = remaining;
            if (j + 1 < current.size() && remaining > 0) {
                const double p = std::clamp(lengths[j] / remaining_len, 0.0, 1.0);
                std::binomial_distribution<int> binom(remaining, p);
                draw = binom(rng);
            }
            out.tally[j] = draw;
            remaining -= draw;
            remaining_len -= lengths[j];
        }
        break;
    }
    case TallyProposalKind::Poisson:
        for (std::size_t j = 0; j < current.size(); ++j) {
            const double mean = lambda * lengths[j];
            if (mean > 0.0) {
                std::poisson_distribution<int> pois(mean);
                out.tally[j] = pois(rng);
            } else {
                out.tally[j] = 0;
            }
        }
        break;
    case TallyProposalKind::RandomWalk: {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (std::size_t j = 0; j < current.size(); ++j) {
            const double u = unif(rng);
            if (u < settings.p_up)
                out.tally[j] = current[j] + 1;
            else if (u < settings.p_up + settings.p_down)
                out.tally[j] = std::max(current[j] - 1, 0);
        }
        break;
    }
    }
    out.log_forward = tally_log_kernel(kind, current, out.tally, lengths, lambda, settings);
    out.log_reverse = tally_log_kernel(kind, out.tally, current, lengths, lambda, settings);
    return out;
}

// ---------------------------------------------------------------------------
// Event times
// ---------------------------------------------------------------------------

/// @brief Event-time proposal on a window: order statistics of uniforms per interval, mixed with a
/// narrow uniform around the join time for an isolated single event between two event-free intervals.
struct EventTimeKernel
{
    std::vector<double> bounds;
    std::vector<std::optional<double>> targets; ///< join time per interval where one exists
    double constructive_prob = 0.0;
    double tau = 0.05;

    bool constructive_applies(const Tally& m, std::size_t j) const
    {
        return constructive_prob > 0.0 && m[j] == 1 && j > 0 && j + 1 < m.size() && m[j - 1] == 0 &&
               m[j + 1] == 0 && targets[j].has_value();
    }

    /// Intersection of (t* - tau, t* + tau) with interval j.
    std::pair<double, double> constructive_support(std::size_t j) const
    {
        const double t_star = *targets[j];
        return {std::max(bounds[j], t_star - tau), std::min(bounds[j + 1], t_star + tau)};
    }

    template <class Rng>
    std::vector<double> sample(const Tally& m, Rng& rng) const
    {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::vector<double> times;
        for (std::size_t j = 0; j < m.size(); ++j) {
            const double a = bounds[j];
            const double b = bounds[j + 1];
            if (constructive_applies(m, j) && unif(rng) < constructive_prob) {
                const auto [lo, hi] = constructive_support(j);
                times.push_back(lo + (hi - lo) * unif(rng));
                continue;
            }
            const std::size_t start = times.size();
            for (int i = 0; i < m[j]; ++i)
                times.push_back(a + (b - a) * unif(rng));
            std::sort(times.begin() + static_cast<std::ptrdiff_t>(start), times.end());
        }
        return times;
    }

    /// log q_T(times | m); minus infinity for times outside their intervals or out of order.
    double log_density(std::span<const double> times, const Tally& m) const
    {
        double lp = 0.0;
        std::size_t idx = 0;
        for (std::size_t j = 0; j < m.size(); ++j) {
            const double a = bounds[j];
            const double b = bounds[j + 1];
            const double len = b - a;
            double prev = a;
            for (int i = 0; i < m[j]; ++i, ++idx) {
                if (idx >= times.size())
                    return neg_inf;
                const double t = times[idx];
                if (!(t > prev && t < b))
                    return neg_inf;
                prev = t;
            }
            if (m[j] == 0)
                continue;
            if (constructive_applies(m, j)) {
                const double t = times[idx - 1];
                const auto [lo, hi] = constructive_support(j);
                double dens = (1.0 - constructive_prob) / len;
                if (t > lo && t < hi)
                    dens += constructive_prob / (hi - lo);
                lp += std::log(dens);
            } else {
                lp += std::lgamma(m[j] + 1.0) - m[j] * std::log(len);
            }
        }
        return idx == times.size() ? lp : neg_inf;
    }
};

/// Join times from the straight lines implied by event-free neighbouring intervals.
inline EventTimeKernel make_event_time_kernel(const Window& w, const ModelParams& params,
                                              const ProposalSettings& settings)
{
    EventTimeKernel k;
    k.bounds = w.bounds;
    k.tau = settings.tau;
    k.constructive_prob = settings.constructive_prob;
    const std::size_t m = w.num_intervals();
    k.targets.assign(m, std::nullopt);
    if (settings.constructive_prob <= 0.0)
        return k;
    const double tol = std::max(settings.join_tolerance * params.varsigma / params.sigma, 1e-9);
    const auto& b = w.bounds;
    const auto& x = w.bound_anchors;
    for (std::size_t j = 1; j + 1 < m; ++j) {
        const Vec2 v_pre = (x[j] - x[j - 1]) / (b[j] - b[j - 1]);
        const Vec2 v_post = (x[j + 2] - x[j + 1]) / (b[j + 2] - b[j + 1]);
        k.targets[j] = join_time({b[j], x[j]}, v_pre, {b[j + 1], x[j + 1]}, v_post, {b[j], b[j + 1]}, tol);
    }
    return k;
}

// ---------------------------------------------------------------------------
// Gaussian velocity proposal
// ---------------------------------------------------------------------------

/// Correlation matrix of a stationary AR(1) process, C_ij = gamma^|i-j|.
inline MatrixXd ar1_correlation(Index dim, double gamma)
{
    MatrixXd c(dim, dim);
    for (Index i = 0; i < dim; ++i)
        for (Index j = 0; j < dim; ++j)
            c(i, j) = i == j ? 1.0 : std::pow(gamma, static_cast<double>(std::abs(i - j)));
    return c;
}

/// Pre-proposal over one coordinate of `dim` successive velocities: N(mean 1, sigma^2 C).
inline GaussianSpec ar1_preproposal(Index dim, double mean, double sigma, double gamma)
{
    if (!(gamma > -1.0 && gamma < 1.0))
        throw std::domain_error("AR(1) correlation must lie in (-1, 1)");
    return GaussianSpec(VectorXd::Constant(dim, mean), sigma * sigma * ar1_correlation(dim, gamma));
}

/// @brief Linear-Gaussian model of one window given proposed turn times.
///
/// Unknowns per coordinate are U = ([x_B at the data start], w_0..w_L, [v_E unless at the data end]),
/// a priori N(mu, Sigma). Conditioned quantities are Z = A U + c + eps: the observations inside the window
/// (noise varsigma^2), then x_E and v_E with no noise when the window ends at an event.
class WindowSystem
{
public:
    WindowSystem(const Window& w, std::span<const double> turn_times, const Dataset& ds, const ModelParams& params,
                 const ProposalSettings& settings)
        : at_start_(w.at_start), at_end_(w.at_end), x_begin_(w.x_begin), x_end_(w.x_end)
    {
        times_.push_back(w.t_begin);
        times_.insert(times_.end(), turn_times.begin(), turn_times.end());
        times_.push_back(w.t_end);
        num_velocities_ = static_cast<Index>(turn_times.size()) + 1;
        vel_offset_ = at_start_ ? 1 : 0;
        dim_ = vel_offset_ + num_velocities_ + (at_end_ ? 0 : 1);

        // Pre-proposal.
        const Index ar_dim = num_velocities_ + (at_end_ ? 0 : 1);
        const MatrixXd ar = params.sigma * params.sigma * ar1_correlation(ar_dim, settings.gamma);
        prior_cov_ = MatrixXd::Zero(dim_, dim_);
        prior_cov_.block(vel_offset_, vel_offset_, ar_dim, ar_dim) = ar;
        for (int c = 0; c < 2; ++c) {
            prior_mean_[c] = VectorXd::Zero(dim_);
            const double v0 = w.v_before ? (*w.v_before)[c] : 0.0;
            prior_mean_[c].segment(vel_offset_, ar_dim).setConstant(v0);
        }
        if (at_start_) {
            const double sd = settings.x0_spread * params.varsigma;
            prior_cov_(0, 0) = sd * sd;
            for (int c = 0; c < 2; ++c)
                prior_mean_[c][0] = ds.locations.front()[c];
        }

        // Conditioned rows.
        const Index n_obs = static_cast<Index>(w.obs_last - w.obs_first);
        rows_ = n_obs + (at_end_ ? 0 : 2);
        design_ = MatrixXd::Zero(rows_, dim_);
        noise_ = VectorXd::Zero(rows_);
        for (int c = 0; c < 2; ++c) {
            offset_[c] = VectorXd::Zero(rows_);
            observed_[c] = VectorXd::Zero(rows_);
        }
        for (Index r = 0; r < n_obs; ++r) {
            const std::size_t k = w.obs_first + static_cast<std::size_t>(r);
            fill_position_row(r, ds.times[k]);
            noise_[r] = params.varsigma * params.varsigma;
            for (int c = 0; c < 2; ++c)
                observed_[c][r] = ds.locations[k][c];
        }
        if (!at_end_) {
            fill_position_row(n_obs, w.t_end);
            design_(n_obs + 1, dim_ - 1) = 1.0;
            for (int c = 0; c < 2; ++c) {
                observed_[c][n_obs] = w.x_end[c];
                observed_[c][n_obs + 1] = (*w.v_after)[c];
            }
        }

        // Joint covariance of (U, Z) and the conditioner on Z.
        const Index total = dim_ + rows_;
        MatrixXd joint(total, total);
        const MatrixXd cross = design_ * prior_cov_;
        joint.topLeftCorner(dim_, dim_) = prior_cov_;
        joint.bottomLeftCorner(rows_, dim_) = cross;
        joint.topRightCorner(dim_, rows_) = cross.transpose();
        MatrixXd s = cross * design_.transpose();
        s.diagonal() += noise_;
        joint.bottomRightCorner(rows_, rows_) = s;
        std::vector<Index> free_idx(static_cast<std::size_t>(dim_));
        std::vector<Index> obs_idx(static_cast<std::size_t>(rows_));
        for (Index i = 0; i < dim_; ++i)
            free_idx[static_cast<std::size_t>(i)] = i;
        for (Index i = 0; i < rows_; ++i)
            obs_idx[static_cast<std::size_t>(i)] = dim_ + i;
        conditioner_.emplace(joint, free_idx, obs_idx, settings.eigen_floor);
        eigen_floor_ = settings.eigen_floor;
        prior_llt_.compute(prior_cov_);
    }

    bool valid() const { return conditioner_->valid() && prior_llt_.info() == Eigen::Success; }
    bool floored() const { return conditioner_->floored(); }
    Index dim() const { return dim_; }
    Index num_rows() const { return rows_; }
    const MatrixXd& design() const { return design_; }
    const MatrixXd& prior_covariance() const { return prior_cov_; }
    const VectorXd& prior_mean(int c) const { return prior_mean_[c]; }
    const VectorXd& noise_variances() const { return noise_; }
    const VectorXd& observed(int c) const { return observed_[c]; }
    const VectorXd& offset(int c) const { return offset_[c]; }

    /// Joint Gaussian of (U, Z) for one coordinate.
    GaussianSpec joint(int c) const
    {
        const Index total = dim_ + rows_;
        VectorXd mean(total);
        mean.head(dim_) = prior_mean_[c];
        mean.tail(rows_) = design_ * prior_mean_[c] + offset_[c];
        MatrixXd cov(total, total);
        const MatrixXd cross = design_ * prior_cov_;
        cov.topLeftCorner(dim_, dim_) = prior_cov_;
        cov.bottomLeftCorner(rows_, dim_) = cross;
        cov.topRightCorner(dim_, rows_) = cross.transpose();
        MatrixXd s = cross * design_.transpose();
        s.diagonal() += noise_;
        cov.bottomRightCorner(rows_, rows_) = s;
        return GaussianSpec(std::move(mean), std::move(cov), eigen_floor_);
    }

    /// Conditional mean of U given Z and log p~(Z) for one coordinate.
    GaussianConditioner::Result condition_on_data(int c) const
    {
        VectorXd jm(dim_ + rows_);
        jm.head(dim_) = prior_mean_[c];
        jm.tail(rows_) = design_ * prior_mean_[c] + offset_[c];
        return conditioner_->apply(jm, observed_[c]);
    }

    /// Conditional law of U given Z for one coordinate, with log p~(Z).
    ConditionedGaussian conditional(int c) const
    {
        auto r = condition_on_data(c);
        return {GaussianSpec(std::move(r.mean), conditioner_->conditional_covariance(), eigen_floor_,
                             conditioner_->free_scale()),
                r.log_evidence};
    }

    /// log p~(Z) summed over both coordinates.
    double log_evidence() const { return condition_on_data(0).log_evidence + condition_on_data(1).log_evidence; }

    /// log q~(U) summed over both coordinates.
    double log_preproposal(const std::array<VectorXd, 2>& u) const
    {
        double lp = 0.0;
        const auto& l = prior_llt_.matrixL();
        const double logdet = 2.0 * l.toDenseMatrix().diagonal().array().log().sum();
        for (int c = 0; c < 2; ++c) {
            const VectorXd z = l.solve(u[c] - prior_mean_[c]);
            lp += -0.5 * (static_cast<double>(dim_) * log_two_pi + logdet + z.squaredNorm());
        }
        return lp;
    }

    /// Packs a window path into the unknown vectors (v_E taken from the window).
    std::array<VectorXd, 2> pack(const WindowPath& path, const Window& w) const
    {
        std::array<VectorXd, 2> u{VectorXd(dim_), VectorXd(dim_)};
        for (int c = 0; c < 2; ++c) {
            if (at_start_)
                u[c][0] = path.x_begin[c];
            for (Index i = 0; i < num_velocities_; ++i)
                u[c][vel_offset_ + i] = path.velocities[static_cast<std::size_t>(i)][c];
            if (!at_end_)
                u[c][dim_ - 1] = (*w.v_after)[c];
        }
        return u;
    }

    /// Draws U from its conditional law and snaps the exact constraints (v_E and x_E).
    template <class Rng>
    WindowPath sample(const Window& w, Rng& rng) const
    {
        WindowPath path;
        path.turn_times.assign(times_.begin() + 1, times_.end() - 1);
        path.velocities.assign(static_cast<std::size_t>(num_velocities_), Vec2::Zero());
        path.x_begin = x_begin_;
        const GaussianSpec spec_x = conditional(0).conditional;
        spec_x.decomposition();
        const std::array<GaussianSpec, 2> specs{spec_x, spec_x.with_mean(condition_on_data(1).mean)};
        for (int c = 0; c < 2; ++c) {
            const VectorXd u = specs[static_cast<std::size_t>(c)].sample(rng);
            if (at_start_)
                path.x_begin[c] = u[0];
            for (Index i = 0; i < num_velocities_; ++i)
                path.velocities[static_cast<std::size_t>(i)][c] = u[vel_offset_ + i];
        }
        if (!at_end_) {
            // Restore x_E exactly through the last velocity.
            Vec2 x = path.x_begin;
            for (Index i = 0; i + 1 < num_velocities_; ++i)
                x += (times_[static_cast<std::size_t>(i) + 1] - times_[static_cast<std::size_t>(i)]) *
                     path.velocities[static_cast<std::size_t>(i)];
            const double last = times_.back() - times_[times_.size() - 2];
            path.velocities.back() = (w.x_end - x) / last;
        }
        return path;
    }

private:
    void fill_position_row(Index r, double t)
    {
        if (at_start_)
            design_(r, 0) = 1.0;
        else
            for (int c = 0; c < 2; ++c)
                offset_[c][r] = x_begin_[c];
        for (Index i = 0; i < num_velocities_; ++i) {
            const double lo = times_[static_cast<std::size_t>(i)];
            const double hi = times_[static_cast<std::size_t>(i) + 1];
            const double overlap = std::min(t, hi) - lo;
            if (overlap > 0.0)
                design_(r, vel_offset_ + i) = overlap;
        }
    }

    bool at_start_;
    bool at_end_;
    Vec2 x_begin_;
    Vec2 x_end_;
    std::vector<double> times_;
    Index num_velocities_ = 1;
    Index vel_offset_ = 0;
    Index dim_ = 0;
    Index rows_ = 0;
    MatrixXd prior_cov_;
    std::array<VectorXd, 2> prior_mean_;
    MatrixXd design_;
    VectorXd noise_;
    std::array<VectorXd, 2> offset_;
    std::array<VectorXd, 2> observed_;
    std::optional<GaussianConditioner> conditioner_;
    Eigen::LLT<MatrixXd> prior_llt_;
    double eigen_floor_ = default_eigen_floor;
};

} // namespace vjump
