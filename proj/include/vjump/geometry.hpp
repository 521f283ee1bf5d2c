/// @file geometry.hpp Collinearity, minimal tallies, initial reconstruction and join times.
#pragma once

#include "model.hpp"
#include "numeric.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

namespace vjump
{

/// Turn counts per inter-observation interval.
using Tally = std::vector<int>;

/// Observations start..end (inclusive) consistent with one constant-velocity segment.
struct CollinearRun
{
    std::size_t start = 0;
    std::size_t end = 0;

    std::size_t length() const { return end - start + 1; }
    bool operator==(const CollinearRun&) const = default;
};

/// A timed point in the plane.
struct Anchor
{
    double t = 0.0;
    Vec2 x = Vec2::Zero();
};

inline double mean_empirical_speed(const Dataset& ds)
{
    double total = 0.0;
    for (std::size_t k = 1; k < ds.times.size(); ++k)
        total += (ds.locations[k] - ds.locations[k - 1]).norm() / (ds.times[k] - ds.times[k - 1]);
    return total / static_cast<double>(ds.num_intervals());
}

inline double median_interval(const Dataset& ds)
{
    std::vector<double> gaps;
    gaps.reserve(ds.num_intervals());
    for (std::size_t k = 1; k < ds.times.size(); ++k)
        gaps.push_back(ds.times[k] - ds.times[k - 1]);
    return median(gaps);
}

/// 0.1 x mean empirical speed x median observation interval.
inline double collinearity_threshold(const Dataset& ds)
{
    return 0.1 * mean_empirical_speed(ds) * median_interval(ds);
}

namespace detail
{
inline bool is_collinear(const Dataset& ds, std::size_t first, std::size_t last, double threshold)
{
    const double span = ds.times[last] - ds.times[first];
    const Vec2 delta = ds.locations[last] - ds.locations[first];
    for (std::size_t k = first + 1; k < last; ++k) {
        const Vec2 predicted = ds.locations[first] + ((ds.times[k] - ds.times[first]) / span) * delta;
        const Vec2 dev = (ds.locations[k] - predicted).cwiseAbs();
        if (!(dev.x() < threshold && dev.y() < threshold))
            return false;
    }
    return true;
}
} // namespace detail

/// Maximal runs of three or more observations that deviate from the constant-velocity line between
/// the run's endpoints by less than `threshold` in each coordinate. Runs are grown left to right and
/// never share an observation; an earlier run keeps a contested point.
inline std::vector<CollinearRun> detect_collinear_runs(const Dataset& ds, double threshold)
{
    if (!(threshold > 0.0))
        throw std::invalid_argument("collinearity threshold must be positive");
    std::vector<CollinearRun> runs;
    const std::size_t count = ds.times.size();
    std::size_t i = 0;
    while (i + 2 < count) {
        std::size_t j = i + 1;
        while (j + 1 < count && detail::is_collinear(ds, i, j + 1, threshold))
            ++j;
        if (j >= i + 2) {
            runs.push_back({i, j});
            i = j + 1;
        } else {
            ++i;
        }
    }
    return runs;
}

/// @brief Time at which a path along the line through `pre` with velocity `v_pre` can turn onto the
/// line through `post` with velocity `v_post`.
///
/// Each coordinate gives its own crossing time; they must agree within `tolerance` (time units) and
/// the combined least-squares time must fall inside the open `interval`. A coordinate with equal
/// velocities on both lines defers to the other one. When both do, the lines are either the same line
/// (any time works and the interval midpoint is returned) or parallel and distinct (no join).
inline std::optional<double> join_time(const Anchor& pre, const Vec2& v_pre, const Anchor& post, const Vec2& v_post,
                                       std::pair<double, double> interval, double tolerance)
{
    const auto [t_a, t_b] = interval;
    if (!(t_a < t_b))
        throw std::invalid_argument("join interval must be non-empty");

    const Vec2 dv = v_pre - v_post;
    const Vec2 rhs = (post.x - post.t * v_post) - (pre.x - pre.t * v_pre);
    const double speed_scale = std::max({v_pre.norm(), v_post.norm(), 1e-300});
    const double degenerate = 1e-12 * speed_scale;

    double num = 0.0;
    double den = 0.0;
    std::optional<double> first_solution;
    for (int c = 0; c < 2; ++c) {
        if (std::abs(dv[c]) <= degenerate) {
            if (std::abs(rhs[c]) > tolerance * speed_scale)
                return std::nullopt;
            continue;
        }
        const double t_c = rhs[c] / dv[c];
        if (first_solution && std::abs(*first_solution - t_c) > tolerance)
            return std::nullopt;
        if (!first_solution)
            first_solution = t_c;
        num += dv[c] * rhs[c];
        den += dv[c] * dv[c];
    }
    const double t_star = den > 0.0 ? num / den : 0.5 * (t_a + t_b);
    if (!(t_star > t_a && t_star < t_b))
        return std::nullopt;
    return t_star;
}

// ---------------------------------------------------------------------------
// Minimal tallies
// ---------------------------------------------------------------------------

enum class IntervalRole
{
    Free,      ///< no structural constraint
    Collinear, ///< inside a collinear run: no turns
    Bridge,    ///< single gap between two runs that one turn can link
};

/// Per-interval structure derived from collinearity, used to build minimal tallies.
struct TallyLayout
{
    std::vector<IntervalRole> roles;
    std::vector<double> bridge_times; ///< join time for Bridge intervals, NaN elsewhere

    static TallyLayout generic(std::size_t num_intervals)
    {
        return {std::vector<IntervalRole>(num_intervals, IntervalRole::Free),
                std::vector<double>(num_intervals, std::nan(""))};
    }

    std::size_t size() const { return roles.size(); }
};

/// Builds the layout: collinear runs are tally-0, and a lone gap between adjacent runs becomes a
/// bridge when the two run lines meet inside it (`join_tolerance` in time units).
inline TallyLayout tally_layout(const Dataset& ds, double threshold, double join_tolerance)
{
    TallyLayout layout = TallyLayout::generic(ds.num_intervals());
    const auto runs = detect_collinear_runs(ds, threshold);
    for (const auto& run : runs)
        for (std::size_t j = run.start; j < run.end; ++j)
            layout.roles[j] = IntervalRole::Collinear;

    auto run_velocity = [&](const CollinearRun& r) {
        return Vec2((ds.locations[r.end] - ds.locations[r.start]) / (ds.times[r.end] - ds.times[r.start]));
    };
    for (std::size_t r = 1; r < runs.size(); ++r) {
        const auto& a = runs[r - 1];
        const auto& b = runs[r];
        if (b.start != a.end + 1)
            continue;
        const auto t_star = join_time({ds.times[a.end], ds.locations[a.end]}, run_velocity(a),
                                      {ds.times[b.start], ds.locations[b.start]}, run_velocity(b),
                                      {ds.times[a.end], ds.times[b.start]}, join_tolerance);
        if (t_star) {
            layout.roles[a.end] = IntervalRole::Bridge;
            layout.bridge_times[a.end] = *t_star;
        }
    }
    return layout;
}

namespace detail
{
/// One element of the compressed interval sequence: a free interval or a whole collinear run.
struct CompressedElement
{
    std::size_t first_interval;
    std::size_t last_interval; // inclusive
    bool forced_zero;
};

/// Compressed pieces separated by bridges.
inline std::vector<std::vector<CompressedElement>> compressed_pieces(const TallyLayout& layout)
{
    std::vector<std::vector<CompressedElement>> pieces(1);
    const std::size_t n = layout.size();
    std::size_t j = 0;
    while (j < n) {
        switch (layout.roles[j]) {
        case IntervalRole::Bridge:
            pieces.emplace_back();
            ++j;
            break;
        case IntervalRole::Collinear: {
            std::size_t k = j;
            while (k + 1 < n && layout.roles[k + 1] == IntervalRole::Collinear)
                ++k;
            pieces.back().push_back({j, k, true});
            j = k + 1;
            break;
        }
        case IntervalRole::Free:
            pieces.back().push_back({j, j, false});
            ++j;
            break;
        }
    }
    std::erase_if(pieces, [](const auto& p) { return p.empty(); });
    return pieces;
}
} // namespace detail

/// Fewest turns that let a path pass exactly through every observation of a layout.
inline int count_minimal_turns(const TallyLayout& layout)
{
    if (layout.size() == 0)
        throw std::invalid_argument("a tally needs at least one interval");
    int turns = 0;
    for (const auto& piece : detail::compressed_pieces(layout))
        turns += static_cast<int>(piece.size()) - 1;
    turns += static_cast<int>(std::count(layout.roles.begin(), layout.roles.end(), IntervalRole::Bridge));
    return turns;
}

inline int count_minimal_turns(std::size_t num_intervals)
{
    return count_minimal_turns(TallyLayout::generic(num_intervals));
}

/// @brief True when a tally with no collinearity is minimal: the entries other than 1 read 0, 2, 0, ..., 2, 0.
inline bool is_minimal_pattern(const Tally& tally)
{
    int expected = 0;
    bool any = false;
    for (int m : tally) {
        if (m == 1)
            continue;
        if (m != expected)
            return false;
        any = true;
        expected = 2 - expected;
    }
    return any && expected == 2;
}

/// @brief Uniform draw from the minimal tallies of a layout.
///
/// Within each piece the positions of the non-1 entries form an odd-sized subset whose members alternate
/// 0, 2, 0, ...; collinear runs must take a 0. A small counting recursion gives exact uniform sampling
/// over the admissible subsets. Bridges carry one turn each.
template <class Rng>
Tally sample_minimal_tally(const TallyLayout& layout, Rng& rng)
{
    if (layout.size() == 0)
        throw std::invalid_argument("a tally needs at least one interval");
    Tally tally(layout.size(), 0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    for (std::size_t j = 0; j < layout.size(); ++j)
        if (layout.roles[j] == IntervalRole::Bridge)
            tally[j] = 1;

    for (const auto& piece : detail::compressed_pieces(layout)) {
        const std::size_t m = piece.size();
        // ways[i][p]: completions of positions i.. given the parity p of elements chosen so far,
        // ending with an odd total; doubles avoid overflow for long pieces.
        std::vector<std::array<double, 2>> ways(m + 1);
        ways[m] = {0.0, 1.0};
        for (std::size_t i = m; i-- > 0;) {
            for (int p = 0; p < 2; ++p) {
                const double take = (!piece[i].forced_zero || p == 0) ? ways[i + 1][1 - p] : 0.0;
                const double skip = piece[i].forced_zero ? 0.0 : ways[i + 1][p];
                ways[i][p] = take + skip;
            }
        }
        int parity = 0;
        for (std::size_t i = 0; i < m; ++i) {
            const double take = (!piece[i].forced_zero || parity == 0) ? ways[i + 1][1 - parity] : 0.0;
            const double total = ways[i][parity];
            const bool chosen = unif(rng) * total < take;
            const int value = chosen ? (parity == 0 ? 0 : 2) : 1;
            for (std::size_t j = piece[i].first_interval; j <= piece[i].last_interval; ++j)
                tally[j] = value;
            if (chosen)
                parity = 1 - parity;
        }
    }
    return tally;
}

template <class Rng>
Tally sample_minimal_tally(std::size_t num_intervals, Rng& rng)
{
    return sample_minimal_tally(TallyLayout::generic(num_intervals), rng);
}

// ---------------------------------------------------------------------------
// Initial reconstruction
// ---------------------------------------------------------------------------

/// @brief Builds a trajectory with the given tally that passes through the observations.
///
/// Turn times are stratified within their intervals: the i-th of m turns is uniform on the i-th of m
/// equal sub-intervals (bridges use their join time). Velocities solve the linear system that pins the
/// path to observation 0 and to every observation that is not interior to a collinear run; collinear
/// interiors are then within the collinearity threshold by construction. The system is square for
/// minimal tallies without bridges, so the fit is exact up to rounding.
///
/// Of `candidates` valid draws the one with the smallest peak speed is returned, since nearly
/// coincident turns otherwise give short segments with extreme speeds.
template <class Rng>
Trajectory initial_trajectory(const Dataset& ds, const TallyLayout& layout, const Tally& tally, Rng& rng,
                              int max_attempts = 100, int candidates = 16)
{
    const std::size_t n = ds.num_intervals();
    if (tally.size() != n || layout.size() != n)
        throw std::invalid_argument("tally and layout must have one entry per observation interval");

    // Observations that constrain the fit.
    std::vector<std::size_t> pinned;
    for (std::size_t k = 1; k <= n; ++k) {
        const bool interior_of_run = layout.roles[k - 1] == IntervalRole::Collinear && k < n &&
                                     layout.roles[k] == IntervalRole::Collinear;
        if (!interior_of_run)
            pinned.push_back(k);
    }

    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::optional<Trajectory> best;
    double best_peak = std::numeric_limits<double>::infinity();
    int found = 0;
    for (int attempt = 0; attempt < max_attempts && found < candidates; ++attempt) {
        Trajectory traj;
        traj.t0 = ds.times.front();
        traj.t_end = ds.times.back();
        traj.x0 = ds.locations.front();

        bool degenerate = false;
        for (std::size_t j = 0; j < n; ++j) {
            const double a = ds.times[j];
            const double b = ds.times[j + 1];
            if (tally[j] < 0)
                throw std::invalid_argument("tally entries must be non-negative");
            std::vector<double> local;
            if (layout.roles[j] == IntervalRole::Bridge && tally[j] == 1) {
                local.push_back(layout.bridge_times[j]);
            } else {
                const double width = (b - a) / tally[j];
                for (int i = 0; i < tally[j]; ++i)
                    local.push_back(a + width * (i + unif(rng)));
            }
            for (double t : local) {
                if (!(t > a && t < b) || (!traj.turn_times.empty() && !(t > traj.turn_times.back())))
                    degenerate = true;
                traj.turn_times.push_back(t);
            }
        }
        if (degenerate)
            continue;

        const std::size_t segments = traj.turn_times.size() + 1;
        Eigen::MatrixXd design = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(pinned.size()),
                                                       static_cast<Eigen::Index>(segments));
        Eigen::MatrixXd rhs(static_cast<Eigen::Index>(pinned.size()), 2);
        std::size_t prev = 0;
        for (std::size_t r = 0; r < pinned.size(); ++r) {
            const double lo = ds.times[prev];
            const double hi = ds.times[pinned[r]];
            for (std::size_t s = 0; s < segments; ++s) {
                const double seg_lo = traj.event_time(s);
                const double seg_hi = traj.event_time(s + 1);
                const double overlap = std::min(hi, seg_hi) - std::max(lo, seg_lo);
                if (overlap > 0.0)
                    design(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(s)) = overlap;
            }
            const Vec2 delta = ds.locations[pinned[r]] - ds.locations[prev];
            rhs.row(static_cast<Eigen::Index>(r)) = delta.transpose();
            prev = pinned[r];
        }

        const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(design);
        if (cod.rank() < std::min(design.rows(), design.cols()))
            continue;
        const Eigen::MatrixXd solution = cod.solve(rhs);

        traj.velocities.clear();
        bool ok = solution.allFinite();
        for (Eigen::Index s = 0; s < solution.rows() && ok; ++s) {
            traj.velocities.emplace_back(solution(s, 0), solution(s, 1));
            ok = traj.velocities.back().squaredNorm() > 0.0;
        }
        if (!ok)
            continue;
        double peak = 0.0;
        for (const Vec2& v : traj.velocities)
            peak = std::max(peak, v.norm());
        ++found;
        if (peak < best_peak) {
            best_peak = peak;
            best = std::move(traj);
        }
    }
    if (!best)
        throw NumericalError("could not build an initial trajectory for the sampled tally");
    return *best;
}

} // namespace vjump
