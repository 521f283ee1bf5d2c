/// @file sampler.hpp Metropolis-Hastings engine: trajectory, endpoint and parameter updates, chains.
#pragma once

#include "distributions.hpp"
#include "gaussian.hpp"
#include "geometry.hpp"
#include "model.hpp"
#include "numeric.hpp"
#include "params.hpp"
#include "proposals.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <thread>
#include <vector>

namespace vjump
{

inline constexpr std::array<const char*, 5> parameter_names{"lambda", "kappa", "sigma", "rho", "varsigma"};

/// Random-walk step sizes for the parameters (scaled units).
struct ParameterSteps
{
    double lambda = 0.1;
    double kappa = 0.2;
    double sigma = 0.05;
    double rho = 0.05;
    double varsigma = 0.1;
};

/// @brief Everything that controls a run. All quantities are in scaled units.
struct RunConfig
{
    long iterations = 200000;
    long burn_in = 50000;
    int chains = 2;
    long thin = 1;                  ///< keep every thin-th post-burn-in iteration
    int trajectory_samples = 100;   ///< total over chains
    std::uint64_t seed = 1;
    ProposalSettings proposals;
    PriorSet priors;
    ParameterSteps steps;
    bool error_free = false;
    double fixed_varsigma = 0.004;  ///< used when error_free
    double varsigma_upper = 0.5;    ///< upper bound of varsigma used by the initialiser
    double endpoint_update_prob = 0.0;
    bool update_parameters = true;
    bool update_trajectory = true;
    bool parallel = true;

    void validate() const
    {
        if (!(iterations > burn_in && burn_in >= 0))
            throw std::invalid_argument("iterations must exceed burn_in, and burn_in must be non-negative");
        if (chains < 1 || thin < 1 || trajectory_samples < 0)
            throw std::invalid_argument("chains and thin must be positive, trajectory_samples non-negative");
        if (!(endpoint_update_prob >= 0.0 && endpoint_update_prob <= 1.0))
            throw std::invalid_argument("endpoint_update_prob must lie in [0, 1]");
        if (error_free && !(fixed_varsigma > 0.0))
            throw std::invalid_argument("error-free mode needs a positive fixed varsigma");
        if (!(varsigma_upper > 0.0))
            throw std::invalid_argument("varsigma_upper must be positive");
        if (!(steps.lambda >= 0.0 && steps.kappa >= 0.0 && steps.sigma >= 0.0 && steps.rho >= 0.0 &&
              steps.varsigma >= 0.0))
            throw std::invalid_argument("parameter steps must be non-negative");
        proposals.validate();
        if (!error_free && !priors.varsigma)
            throw std::invalid_argument("a varsigma prior is required unless varsigma is fixed");
        priors.validate();
    }
};

struct AcceptanceCounter
{
    long proposed = 0;
    long accepted = 0;

    double rate() const { return proposed > 0 ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0; }
};

/// Per-chain MCMC state.
struct ChainState
{
    Trajectory trajectory;
    ModelParams params;
    long iteration = 0;
    std::array<AcceptanceCounter, num_proposal_kinds> kinds{};
    AcceptanceCounter endpoint;
    std::array<AcceptanceCounter, 5> parameters{};
    NumericDiagnostics numeric;
    std::mt19937_64 rng;
};

/// Unnormalised log posterior (x0 carries a flat prior).
inline double log_posterior(const Trajectory& traj, const ModelParams& params, const Dataset& ds,
                            const PriorSet& priors)
{
    const double lp = prior_logpdf(params, priors);
    if (lp == neg_inf)
        return lp;
    return lp + path_logdensity(traj, params) + observation_loglik(traj, ds, params.varsigma);
}

// ---------------------------------------------------------------------------
// Trajectory moves
// ---------------------------------------------------------------------------

/// log p(T) + log p(V | T) for the window, including the transition onto v_E.
inline double window_path_logdensity(const Window& w, const WindowPath& path, const ModelParams& params)
{
    double lp = event_times_logdensity(path.turn_times.size(), w.t_end - w.t_begin, params.lambda) +
                velocity_chain_logdensity(path.velocities, w.v_before, params);
    if (w.v_after && lp > neg_inf)
        lp += velocity_transition_logpdf(*w.v_after, path.velocities.back(), params);
    return lp;
}

/// @brief One side of the Hastings ratio:
/// log q_T(T | M) + log q~(U) - log p(T) - log p(V | T) - log p~(Z | T).
///
/// The observation likelihood of the window cancels against the conditioning step and never appears.
inline double hastings_side(const WindowSystem& sys, const Window& w, const WindowPath& path, const Tally& m,
                            const EventTimeKernel& times, const ModelParams& params)
{
    const double target = window_path_logdensity(w, path, params);
    if (target == neg_inf)
        return std::numeric_limits<double>::infinity();
    return times.log_density(path.turn_times, m) + sys.log_preproposal(sys.pack(path, w)) - target -
           sys.log_evidence();
}

namespace detail
{

inline std::optional<double> move_ratio(const Dataset& ds, const ModelParams& params,
                                        const ProposalSettings& settings, const Trajectory& traj, const Window& w,
                                        TallyProposalKind kind, WindowMode mode, const EventTimeKernel& times,
                                        const WindowPath& proposed, const WindowSystem& sys_prop,
                                        NumericDiagnostics* diag)
{
    const WindowPath current = extract_window_path(traj, w);
    const WindowSystem sys_cur(w, current.turn_times, ds, params, settings);
    if (!sys_cur.valid() || !sys_prop.valid()) {
        if (diag)
            ++diag->rejected_updates;
        return std::nullopt;
    }
    if (diag && (sys_cur.floored() || sys_prop.floored()))
        ++diag->floored_eigenvalues;

    const Tally m_cur = tally_of(w, current.turn_times);
    const Tally m_prop = tally_of(w, proposed.turn_times);
    const auto lengths = w.interval_lengths();
    const double q_fwd = tally_log_kernel(kind, m_cur, m_prop, lengths, params.lambda, settings);
    const double q_rev = tally_log_kernel(kind, m_prop, m_cur, lengths, params.lambda, settings);
    if (q_fwd == neg_inf || q_rev == neg_inf)
        return neg_inf;

    const std::size_t n_cur = traj.num_turns();
    const std::size_t l_cur = current.turn_times.size();
    const std::size_t l_prop = proposed.turn_times.size();
    const std::size_t n_prop = n_cur - l_cur + l_prop;
    const auto& dist = settings.lengths(kind);
    const double sel_fwd = window_log_probability(dist, mode, n_cur, l_cur);
    const double sel_rev = window_log_probability(dist, mode, n_prop, l_prop);
    if (sel_rev == neg_inf)
        return neg_inf;

    const double side_cur = hastings_side(sys_cur, w, current, m_cur, times, params);
    const double side_prop = hastings_side(sys_prop, w, proposed, m_prop, times, params);
    const double h = side_cur - side_prop + (q_rev - q_fwd) + (sel_rev - sel_fwd);
    return std::isnan(h) ? neg_inf : h;
}

} // namespace detail

/// @brief Log Hastings ratio for replacing the content of window (B, E) by `proposed`.
///
/// Pure in its inputs, so the reverse move (same kind and mode, window (B, B + L' + 1) of the spliced
/// trajectory, proposing the old content) can be evaluated for a reversibility check.
inline std::optional<double> log_move_ratio(const Dataset& ds, const ModelParams& params,
                                            const ProposalSettings& settings, const Trajectory& traj,
                                            std::size_t begin_event, std::size_t end_event, TallyProposalKind kind,
                                            WindowMode mode, const WindowPath& proposed,
                                            NumericDiagnostics* diag = nullptr)
{
    const Window w = make_window(traj, ds, begin_event, end_event);
    const EventTimeKernel times = make_event_time_kernel(w, params, settings);
    const WindowSystem sys_prop(w, proposed.turn_times, ds, params, settings);
    return detail::move_ratio(ds, params, settings, traj, w, kind, mode, times, proposed, sys_prop, diag);
}

/// Result of drawing a dimension-changing proposal.
struct MoveProposal
{
    Window window;
    TallyProposalKind kind = TallyProposalKind::FixedResampleTimes;
    WindowPath path;
    std::optional<double> log_ratio; ///< empty after a numerical failure
};

template <class Rng>
MoveProposal propose_move(const Dataset& ds, const ModelParams& params, const ProposalSettings& settings,
                          const Trajectory& traj, TallyProposalKind kind, WindowMode mode, Rng& rng,
                          NumericDiagnostics* diag = nullptr)
{
    const WindowChoice choice = select_window(traj, settings.lengths(kind), mode, rng);
    MoveProposal mp{make_window(traj, ds, choice.begin_event, choice.end_event), kind, {}, std::nullopt};
    const WindowPath current = extract_window_path(traj, mp.window);
    const Tally m = tally_of(mp.window, current.turn_times);
    const auto lengths = mp.window.interval_lengths();
    const TallyProposal tp = propose_tally(kind, m, lengths, params.lambda, settings, rng);
    const EventTimeKernel times = make_event_time_kernel(mp.window, params, settings);
    const auto new_times = times.sample(tp.tally, rng);
    const WindowSystem sys(mp.window, new_times, ds, params, settings);
    if (!sys.valid()) {
        if (diag)
            ++diag->rejected_updates;
        mp.path.turn_times = new_times;
        return mp;
    }
    mp.path = sys.sample(mp.window, rng);
    mp.log_ratio = detail::move_ratio(ds, params, settings, traj, mp.window, kind, mode, times, mp.path, sys, diag);
    return mp;
}

/// @brief Random-walk update of the velocities (and a latent start) of a window with its times kept.
///
/// The Gaussian step is projected orthogonally onto the constraint x_B + sum_j gap_j w_j = x_E (when the
/// window ends at an event), which keeps the proposal symmetric on the constraint surface.
template <class Rng>
bool fixed_velocity_update(ChainState& state, const Dataset& ds, const Window& w, const ProposalSettings& settings,
                           Rng& rng)
{
    const WindowPath current = extract_window_path(state.trajectory, w);
    const std::size_t nv = current.velocities.size();
    const std::size_t dim = nv + (w.at_start ? 1 : 0);
    const std::size_t off = w.at_start ? 1 : 0;

    VectorXd scale(static_cast<Index>(dim));
    VectorXd b(static_cast<Index>(dim));
    if (w.at_start) {
        scale[0] = settings.x0_step * state.params.varsigma;
        b[0] = 1.0;
    }
    for (std::size_t i = 0; i < nv; ++i) {
        const double lo = i == 0 ? w.t_begin : current.turn_times[i - 1];
        const double hi = i + 1 == nv ? w.t_end : current.turn_times[i];
        scale[static_cast<Index>(off + i)] = settings.velocity_step * state.params.sigma;
        b[static_cast<Index>(off + i)] = hi - lo;
    }

    std::normal_distribution<double> normal(0.0, 1.0);
    WindowPath proposed = current;
    for (int c = 0; c < 2; ++c) {
        VectorXd delta(static_cast<Index>(dim));
        for (Index i = 0; i < delta.size(); ++i)
            delta[i] = scale[i] * normal(rng);
        if (!w.at_end)
            delta -= b * (b.dot(delta) / b.squaredNorm());
        if (w.at_start)
            proposed.x_begin[c] += delta[0];
        for (std::size_t i = 0; i < nv; ++i)
            proposed.velocities[i][c] += delta[static_cast<Index>(off + i)];
    }

    const Trajectory candidate = splice(state.trajectory, w, proposed);
    const double varsigma = state.params.varsigma;
    const double lp_new = window_path_logdensity(w, proposed, state.params) +
                          observation_loglik(candidate, ds, varsigma, w.obs_first, w.obs_last);
    const double lp_old = window_path_logdensity(w, current, state.params) +
                          observation_loglik(state.trajectory, ds, varsigma, w.obs_first, w.obs_last);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double log_h = lp_new - lp_old;
    if (!std::isnan(log_h) && (log_h >= 0.0 || std::log(unif(rng)) < log_h)) {
        state.trajectory = candidate;
        return true;
    }
    return false;
}

/// Picks a proposal kind from the mixture; Fixed splits into keep/resample.
template <class Rng>
TallyProposalKind draw_proposal_kind(const ProposalSettings& settings, Rng& rng)
{
    std::discrete_distribution<int> pick(settings.kind_weights.begin(), settings.kind_weights.end());
    switch (pick(rng)) {
    case 0: {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        return unif(rng) < settings.fixed_resample_prob ? TallyProposalKind::FixedResampleTimes
                                                        : TallyProposalKind::FixedKeepTimes;
    }
    case 1: return TallyProposalKind::Uniform;
    case 2: return TallyProposalKind::Poisson;
    default: return TallyProposalKind::RandomWalk;
    }
}

/// One trajectory update: kind, window, proposal and accept/reject.
template <class Rng>
bool trajectory_update(ChainState& state, const Dataset& ds, const ProposalSettings& settings, WindowMode mode,
                       Rng& rng)
{
    const TallyProposalKind kind = draw_proposal_kind(settings, rng);
    auto& counter = state.kinds[static_cast<std::size_t>(kind)];
    ++counter.proposed;

    if (kind == TallyProposalKind::FixedKeepTimes) {
        const WindowChoice choice = select_window(state.trajectory, settings.lengths(kind), mode, rng);
        const Window w = make_window(state.trajectory, ds, choice.begin_event, choice.end_event);
        const bool ok = fixed_velocity_update(state, ds, w, settings, rng);
        counter.accepted += ok ? 1 : 0;
        return ok;
    }

    const MoveProposal mp = propose_move(ds, state.params, settings, state.trajectory, kind, mode, rng, &state.numeric);
    if (!mp.log_ratio)
        return false;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double log_h = *mp.log_ratio;
    if (log_h >= 0.0 || std::log(unif(rng)) < log_h) {
        state.trajectory = splice(state.trajectory, mp.window, mp.path);
        ++counter.accepted;
        return true;
    }
    return false;
}

/// Trajectory update restricted to windows that touch the first (`at_start`) or last observation.
template <class Rng>
bool endpoint_update(ChainState& state, const Dataset& ds, const ProposalSettings& settings, bool at_start, Rng& rng)
{
    ++state.endpoint.proposed;
    const bool ok = trajectory_update(state, ds, settings, at_start ? WindowMode::Start : WindowMode::End, rng);
    state.endpoint.accepted += ok ? 1 : 0;
    return ok;
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// One-at-a-time Gaussian random-walk sweep over (lambda, kappa, sigma, rho[, varsigma]).
template <class Rng>
void parameter_update(ChainState& state, const Dataset& ds, const RunConfig& config, Rng& rng)
{
    const Trajectory& traj = state.trajectory;
    const PriorSet& priors = config.priors;
    const double duration = traj.t_end - traj.t0;
    const auto n_turns = static_cast<double>(traj.num_turns());

    double rss = 0.0;
    if (!config.error_free) {
        const auto fitted = interpolate_sorted(traj, ds.times);
        for (std::size_t k = 0; k < fitted.size(); ++k)
            rss += (ds.locations[k] - fitted[k]).squaredNorm();
    }
    const auto n_obs = static_cast<double>(ds.times.size());

    auto conditional = [&](const ModelParams& p, int which) {
        if (!p.in_support())
            return neg_inf;
        switch (which) {
        case 0: return priors.lambda.logpdf(p.lambda) + n_turns * std::log(p.lambda) - p.lambda * duration;
        case 1: return priors.kappa.logpdf_unnormalized(p.kappa) + velocity_chain_logdensity(traj.velocities, {}, p);
        case 2: return priors.sigma.logpdf(p.sigma) + velocity_chain_logdensity(traj.velocities, {}, p);
        case 3: return priors.rho.logpdf(p.rho) + velocity_chain_logdensity(traj.velocities, {}, p);
        default:
            return priors.varsigma->logpdf(p.varsigma) - n_obs * std::log(two_pi * p.varsigma * p.varsigma) -
                   rss / (2.0 * p.varsigma * p.varsigma);
        }
    };

    const std::array<double, 5> steps{config.steps.lambda, config.steps.kappa, config.steps.sigma, config.steps.rho,
                                      config.steps.varsigma};
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const int count = config.error_free ? 4 : 5;
    for (int which = 0; which < count; ++which) {
        ModelParams prop = state.params;
        double* slot = which == 0 ? &prop.lambda
                       : which == 1 ? &prop.kappa
                       : which == 2 ? &prop.sigma
                       : which == 3 ? &prop.rho
                                    : &prop.varsigma;
        *slot += steps[static_cast<std::size_t>(which)] * normal(rng);
        auto& counter = state.parameters[static_cast<std::size_t>(which)];
        ++counter.proposed;
        const double lp_new = conditional(prop, which);
        if (lp_new == neg_inf)
            continue;
        const double log_h = lp_new - conditional(state.params, which);
        if (log_h >= 0.0 || std::log(unif(rng)) < log_h) {
            state.params = prop;
            ++counter.accepted;
        }
    }
}

/// One iteration: a trajectory update (possibly an endpoint update) and a parameter sweep.
template <class Rng>
void mcmc_step(ChainState& state, const Dataset& ds, const RunConfig& config, Rng& rng)
{
    if (config.update_trajectory) {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        if (config.endpoint_update_prob > 0.0 && unif(rng) < config.endpoint_update_prob)
            endpoint_update(state, ds, config.proposals, unif(rng) < 0.5, rng);
        else
            trajectory_update(state, ds, config.proposals, WindowMode::Any, rng);
    }
    if (config.update_parameters)
        parameter_update(state, ds, config, rng);
    ++state.iteration;
}

// ---------------------------------------------------------------------------
// Initialisation and runs
// ---------------------------------------------------------------------------

/// Approximate turn rate from minimal reconstructions at a given error SD (threshold widened by 2 varsigma).
inline double minimal_turn_rate(const Dataset& ds, double varsigma, double speed, const ProposalSettings& settings)
{
    const double threshold = collinearity_threshold(ds) + 2.0 * varsigma;
    const double tol = std::max(settings.join_tolerance * varsigma / speed, 1e-9);
    const auto layout = tally_layout(ds, threshold, tol);
    const double span = ds.times.back() - ds.times.front();
    return std::max(static_cast<double>(count_minimal_turns(layout)), 0.5) / span;
}

/// Range of the rate estimate over a grid of error SDs from 0 to `upper`.
inline std::pair<double, double> lambda_init_range(const Dataset& ds, double upper, double speed,
                                                   const ProposalSettings& settings, int grid = 11)
{
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (int g = 0; g < grid; ++g) {
        const double v = upper * static_cast<double>(g) / static_cast<double>(grid - 1);
        const double r = minimal_turn_rate(ds, v, speed, settings);
        lo = std::min(lo, r);
        hi = std::max(hi, r);
    }
    return {lo, hi};
}

/// Initial parameters for chain `which` of `config.chains`: lambda spread from the maximum to the minimum estimate.
inline ModelParams initial_parameters(const Dataset& ds, const RunConfig& config, int which)
{
    ModelParams p;
    p.sigma = mean_empirical_speed(ds);
    if (!(p.sigma > 0.0))
        throw DataError("observations show no movement; the speed scale cannot be initialised");
    p.kappa = 2.0;
    p.rho = config.priors.rho.mean();
    p.varsigma = config.error_free ? config.fixed_varsigma : 0.5 * config.varsigma_upper;
    const auto [lo, hi] = lambda_init_range(ds, config.varsigma_upper, p.sigma, config.proposals);
    const double frac = config.chains > 1 ? static_cast<double>(which) / static_cast<double>(config.chains - 1) : 0.0;
    p.lambda = hi - (hi - lo) * frac;
    return p;
}

/// Minimal-tally reconstruction through the observations.
template <class Rng>
Trajectory initial_reconstruction(const Dataset& ds, const ModelParams& p, const ProposalSettings& settings, Rng& rng)
{
    const double threshold = collinearity_threshold(ds) + 2.0 * p.varsigma;
    const double tol = std::max(settings.join_tolerance * p.varsigma / p.sigma, 1e-9);
    const auto layout = tally_layout(ds, threshold, tol);
    const Tally tally = sample_minimal_tally(layout, rng);
    return initial_trajectory(ds, layout, tally, rng);
}

inline std::mt19937_64 chain_rng(std::uint64_t seed, int chain)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(chain)};
    return std::mt19937_64(seq);
}

inline ChainState initialize_chain(const Dataset& ds, const RunConfig& config, int which)
{
    ChainState s;
    s.rng = chain_rng(config.seed, which);
    s.params = initial_parameters(ds, config, which);
    s.trajectory = initial_reconstruction(ds, s.params, config.proposals, s.rng);
    return s;
}

/// One recorded iteration.
struct ChainRecord
{
    long iteration = 0;
    ModelParams params;
    std::size_t num_turns = 0;
    double log_posterior = 0.0;
};

struct ChainResult
{
    std::vector<ChainRecord> records;
    std::vector<Trajectory> trajectories;
    ChainState final_state;
};

/// Iterations at which trajectories are stored: `count` evenly spaced post-burn-in iterations.
inline std::vector<long> trajectory_sample_points(long burn_in, long iterations, int count)
{
    std::vector<long> pts;
    const long span = iterations - burn_in;
    for (int i = 0; i < count; ++i)
        pts.push_back(burn_in + (span * (i + 1)) / count - 1);
    return pts;
}

inline ChainResult run_chain(const Dataset& ds, const RunConfig& config, ChainState state, int trajectory_count)
{
    ChainResult out;
    const auto sample_at = trajectory_sample_points(config.burn_in, config.iterations, trajectory_count);
    std::size_t next_sample = 0;
    out.records.reserve(static_cast<std::size_t>((config.iterations - config.burn_in) / config.thin + 1));
    for (long it = 0; it < config.iterations; ++it) {
        mcmc_step(state, ds, config, state.rng);
        if (it >= config.burn_in && (it - config.burn_in) % config.thin == 0)
            out.records.push_back({it, state.params, state.trajectory.num_turns(),
                                   log_posterior(state.trajectory, state.params, ds, config.priors)});
        while (next_sample < sample_at.size() && sample_at[next_sample] == it) {
            out.trajectories.push_back(state.trajectory);
            ++next_sample;
        }
    }
    out.final_state = std::move(state);
    return out;
}

/// Runs all chains (in parallel threads when enabled); results are independent of threading.
inline std::vector<ChainResult> run(const Dataset& ds, const RunConfig& config)
{
    config.validate();
    ds.validate();
    std::vector<ChainState> starts;
    for (int c = 0; c < config.chains; ++c)
        starts.push_back(initialize_chain(ds, config, c));

    std::vector<ChainResult> results(static_cast<std::size_t>(config.chains));
    auto per_chain = [&](int c) {
        const int base = config.trajectory_samples / config.chains;
        const int extra = c < config.trajectory_samples % config.chains ? 1 : 0;
        return base + extra;
    };
    if (config.parallel && config.chains > 1) {
        std::vector<std::exception_ptr> errors(results.size());
        std::vector<std::thread> threads;
        for (int c = 0; c < config.chains; ++c)
            threads.emplace_back([&, c] {
                try {
                    results[static_cast<std::size_t>(c)] =
                        run_chain(ds, config, std::move(starts[static_cast<std::size_t>(c)]), per_chain(c));
                } catch (...) {
                    errors[static_cast<std::size_t>(c)] = std::current_exception();
                }
            });
        for (auto& t : threads)
            t.join();
        for (const auto& e : errors)
            if (e)
                std::rethrow_exception(e);
    } else {
        for (int c = 0; c < config.chains; ++c)
            results[static_cast<std::size_t>(c)] =
                run_chain(ds, config, std::move(starts[static_cast<std::size_t>(c)]), per_chain(c));
    }
    return results;
}

} // namespace vjump
