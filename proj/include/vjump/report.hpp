/// @file report.hpp Posterior summaries and SVG plots of observations with reconstructed trajectories.
#pragma once

#include "diagnostics.hpp"
#include "io.hpp"
#include "model.hpp"
#include "sampler.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace vjump
{

/// Per-column samples (lambda, kappa, sigma, rho, varsigma, N) of one chain.
inline std::array<std::vector<double>, 6> chain_columns(const std::vector<ChainRecord>& records)
{
    std::array<std::vector<double>, 6> cols;
    for (const auto& r : records) {
        cols[0].push_back(r.params.lambda);
        cols[1].push_back(r.params.kappa);
        cols[2].push_back(r.params.sigma);
        cols[3].push_back(r.params.rho);
        cols[4].push_back(r.params.varsigma);
        cols[5].push_back(static_cast<double>(r.num_turns));
    }
    return cols;
}

/// Summary of a set of chains: pooled quantiles and combined ESS per column.
struct PosteriorSummary
{
    QuantileTable quantiles;
    std::array<double, 6> ess{};
};

inline PosteriorSummary summarize(const std::vector<std::vector<ChainRecord>>& chains)
{
    PosteriorSummary s;
    std::array<std::vector<double>, 6> pooled;
    std::array<std::vector<std::vector<double>>, 6> per_chain;
    for (const auto& records : chains) {
        const auto cols = chain_columns(records);
        for (std::size_t c = 0; c < 6; ++c) {
            pooled[c].insert(pooled[c].end(), cols[c].begin(), cols[c].end());
            per_chain[c].push_back(cols[c]);
        }
    }
    s.quantiles = quantile_table(pooled);
    for (std::size_t c = 0; c < 6; ++c)
        s.ess[c] = combined_ess(per_chain[c]);
    return s;
}

inline void write_quantiles(std::ostream& out, const QuantileTable& t)
{
    out << std::setprecision(10) << "quantile";
    for (const char* name : summary_columns)
        out << ',' << name;
    out << '\n';
    for (std::size_t r = 0; r < quantile_levels.size(); ++r) {
        out << quantile_levels[r] * 100.0 << '%';
        for (double v : t.values[r])
            out << ',' << v;
        out << '\n';
    }
}

inline void write_ess(std::ostream& out, const std::array<double, 6>& ess_values)
{
    out << std::setprecision(10) << "quantity,ess\n";
    for (std::size_t c = 0; c < 6; ++c)
        out << summary_columns[c] << ',' << ess_values[c] << '\n';
}

/// Acceptance rates of every update type, one line each.
inline void write_acceptance(std::ostream& out, const std::vector<ChainState>& states)
{
    out << std::setprecision(6) << "chain,update,proposed,accepted,rate\n";
    for (std::size_t c = 0; c < states.size(); ++c) {
        const auto& s = states[c];
        for (std::size_t k = 0; k < num_proposal_kinds; ++k)
            out << c << ",trajectory_" << to_string(static_cast<TallyProposalKind>(k)) << ',' << s.kinds[k].proposed
                << ',' << s.kinds[k].accepted << ',' << s.kinds[k].rate() << '\n';
        out << c << ",endpoint," << s.endpoint.proposed << ',' << s.endpoint.accepted << ',' << s.endpoint.rate()
            << '\n';
        for (std::size_t k = 0; k < 5; ++k)
            out << c << ",parameter_" << parameter_names[k] << ',' << s.parameters[k].proposed << ','
                << s.parameters[k].accepted << ',' << s.parameters[k].rate() << '\n';
        out << c << ",numerical_rejections," << s.numeric.rejected_updates << ",0,0\n";
        out << c << ",floored_conditionings," << s.numeric.floored_eigenvalues << ",0,0\n";
    }
}

// ---------------------------------------------------------------------------
// SVG
// ---------------------------------------------------------------------------

struct PlotOptions
{
    double width = 800.0;
    double height = 800.0;
    double margin = 20.0;
    std::optional<double> from; ///< close-up: first time shown
    std::optional<double> to;   ///< close-up: last time shown
};

namespace detail
{

/// Path of a trajectory restricted to [lo, hi]: start, turns inside, end.
inline std::vector<std::pair<double, Vec2>> clipped_path(const Trajectory& tr, double lo, double hi)
{
    std::vector<std::pair<double, Vec2>> pts;
    lo = std::max(lo, tr.t0);
    hi = std::min(hi, tr.t_end);
    if (!(hi >= lo))
        return pts;
    pts.emplace_back(lo, interpolate(tr, lo));
    for (double t : tr.turn_times)
        if (t > lo && t < hi)
            pts.emplace_back(t, interpolate(tr, t));
    pts.emplace_back(hi, interpolate(tr, hi));
    return pts;
}

} // namespace detail

/// @brief SVG of the observations (crosses joined in time order) with reconstructed trajectories
/// (class "trajectory") and their turns (grey circles).
inline std::string svg_plot(const Dataset& ds, const std::vector<Trajectory>& trajs, const PlotOptions& opt = {})
{
    const double lo = opt.from.value_or(-std::numeric_limits<double>::infinity());
    const double hi = opt.to.value_or(std::numeric_limits<double>::infinity());

    std::vector<std::size_t> shown;
    for (std::size_t k = 0; k < ds.times.size(); ++k)
        if (ds.times[k] >= lo && ds.times[k] <= hi)
            shown.push_back(k);
    std::vector<std::vector<std::pair<double, Vec2>>> paths;
    for (const auto& tr : trajs)
        paths.push_back(detail::clipped_path(tr, lo, hi));

    Vec2 min_c = Vec2::Constant(std::numeric_limits<double>::infinity());
    Vec2 max_c = -min_c;
    auto extend = [&](const Vec2& p) {
        min_c = min_c.cwiseMin(p);
        max_c = max_c.cwiseMax(p);
    };
    for (std::size_t k : shown)
        extend(ds.locations[k]);
    for (const auto& p : paths)
        for (const auto& [t, x] : p)
            extend(x);
    if (!min_c.allFinite()) {
        min_c = Vec2::Zero();
        max_c = Vec2::Ones();
    }
    const double span = std::max({max_c.x() - min_c.x(), max_c.y() - min_c.y(), 1e-12});
    const double usable = std::min(opt.width, opt.height) - 2.0 * opt.margin;
    auto px = [&](const Vec2& p) {
        return Vec2(opt.margin + (p.x() - min_c.x()) / span * usable,
                    opt.height - opt.margin - (p.y() - min_c.y()) / span * usable);
    };

    std::ostringstream svg;
    svg << std::setprecision(7);
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\"" << opt.height
        << "\" viewBox=\"0 0 " << opt.width << ' ' << opt.height << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<g fill=\"none\" stroke=\"grey\" stroke-opacity=\"0.3\" stroke-width=\"0.8\">\n";
    for (const auto& p : paths) {
        svg << "<polyline class=\"trajectory\" points=\"";
        for (const auto& [t, x] : p) {
            const Vec2 q = px(x);
            svg << q.x() << ',' << q.y() << ' ';
        }
        svg << "\"/>\n";
    }
    svg << "</g>\n<g fill=\"none\" stroke=\"grey\" stroke-opacity=\"0.5\">\n";
    for (const auto& p : paths)
        for (std::size_t i = 1; i + 1 < p.size(); ++i) {
            const Vec2 q = px(p[i].second);
            svg << "<circle class=\"turn\" cx=\"" << q.x() << "\" cy=\"" << q.y() << "\" r=\"2.5\"/>\n";
        }
    svg << "</g>\n<g stroke=\"black\" stroke-width=\"1.2\" fill=\"none\">\n";
    svg << "<polyline class=\"observations\" points=\"";
    for (std::size_t k : shown) {
        const Vec2 q = px(ds.locations[k]);
        svg << q.x() << ',' << q.y() << ' ';
    }
    svg << "\"/>\n";
    for (std::size_t k : shown) {
        const Vec2 q = px(ds.locations[k]);
        svg << "<path class=\"observation\" d=\"M" << q.x() - 4 << ',' << q.y() - 4 << " L" << q.x() + 4 << ','
            << q.y() + 4 << " M" << q.x() - 4 << ',' << q.y() + 4 << " L" << q.x() + 4 << ',' << q.y() - 4
            << "\"/>\n";
    }
    svg << "</g>\n</svg>\n";
    return svg.str();
}

inline void write_text(const std::string& path, const std::string& text)
{
    auto f = detail::open_output(path);
    f << text;
}

} // namespace vjump
