/// @file io.hpp CSV ingestion and output, unit scaling, and the key = value run configuration.
#pragma once

#include "distributions.hpp"
#include "geometry.hpp"
#include "model.hpp"
#include "numeric.hpp"
#include "sampler.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace vjump
{

// ---------------------------------------------------------------------------
// CSV helpers
// ---------------------------------------------------------------------------

namespace detail
{

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ','))
        out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    return out;
}

/// Parses a whole cell as a double; returns false on trailing junk or overflow.
inline bool parse_double(const std::string& s, double& out)
{
    if (s.empty())
        return false;
    char* end = nullptr;
    errno = 0;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size() && errno != ERANGE;
}

inline std::ofstream open_output(const std::string& path)
{
    std::ofstream f(path);
    if (!f)
        throw std::runtime_error("cannot open " + path + " for writing");
    f << std::setprecision(17);
    return f;
}

inline std::ifstream open_input(const std::string& path)
{
    std::ifstream f(path);
    if (!f)
        throw DataError("cannot open " + path);
    return f;
}

} // namespace detail

/// @brief Reads observations from a CSV with header `t,x,y`.
///
/// Throws DataError naming the offending line for malformed, non-finite or non-increasing rows.
inline Dataset read_dataset(std::istream& in, const std::string& name = "input")
{
    std::string line;
    std::size_t line_no = 0;
    bool header = false;
    Dataset ds;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty())
            continue;
        const auto cells = detail::split_csv(line);
        if (!header) {
            if (cells.size() != 3 || cells[0] != "t" || cells[1] != "x" || cells[2] != "y")
                throw DataError(name + " line " + std::to_string(line_no) + ": expected header t,x,y");
            header = true;
            continue;
        }
        if (cells.size() != 3)
            throw DataError(name + " line " + std::to_string(line_no) + ": expected 3 columns, found " +
                            std::to_string(cells.size()));
        double v[3];
        for (int i = 0; i < 3; ++i) {
            if (!detail::parse_double(cells[static_cast<std::size_t>(i)], v[i]))
                throw DataError(name + " line " + std::to_string(line_no) + ": cannot parse '" +
                                cells[static_cast<std::size_t>(i)] + "' as a number");
            if (!std::isfinite(v[i]))
                throw DataError(name + " line " + std::to_string(line_no) + ": non-finite value");
        }
        if (!ds.times.empty() && !(v[0] > ds.times.back()))
            throw DataError(name + " line " + std::to_string(line_no) + ": time " + cells[0] +
                            " does not increase on the previous row");
        ds.times.push_back(v[0]);
        ds.locations.emplace_back(v[1], v[2]);
    }
    if (!header)
        throw DataError(name + ": empty file");
    if (ds.times.size() < 2)
        throw DataError(name + ": at least two observations are required");
    return ds;
}

inline Dataset ingest(const std::string& path)
{
    auto f = detail::open_input(path);
    return read_dataset(f, path);
}

inline void write_dataset(const std::string& path, const Dataset& ds)
{
    auto f = detail::open_output(path);
    f << "t,x,y\n";
    for (std::size_t k = 0; k < ds.times.size(); ++k)
        f << ds.times[k] << ',' << ds.locations[k].x() << ',' << ds.locations[k].y() << '\n';
}

// ---------------------------------------------------------------------------
// Scaling
// ---------------------------------------------------------------------------

/// Divides times by the median interval and distances by (mean empirical speed x median interval).
inline Dataset scale(const Dataset& ds)
{
    ds.validate();
    const double tf = median_interval(ds);
    const double df = mean_empirical_speed(ds) * tf;
    if (!(df > 0.0))
        throw DataError("observations show no movement, so the data cannot be scaled");
    Dataset out;
    out.scale = {tf, df};
    out.times.reserve(ds.times.size());
    for (std::size_t k = 0; k < ds.times.size(); ++k) {
        out.times.push_back(ds.times[k] / tf);
        out.locations.push_back(ds.locations[k] / df);
    }
    return out;
}

inline Dataset unscale(const Dataset& ds)
{
    Dataset out;
    for (std::size_t k = 0; k < ds.times.size(); ++k) {
        out.times.push_back(ds.times[k] * ds.scale.time);
        out.locations.push_back(ds.locations[k] * ds.scale.distance);
    }
    return out;
}

inline ModelParams unscale(const ModelParams& p, const ScaleFactors& f)
{
    ModelParams out = p;
    out.lambda = p.lambda / f.time;
    out.sigma = p.sigma * f.distance / f.time;
    out.varsigma = p.varsigma * f.distance;
    return out;
}

inline ModelParams scale(const ModelParams& p, const ScaleFactors& f)
{
    ModelParams out = p;
    out.lambda = p.lambda * f.time;
    out.sigma = p.sigma * f.time / f.distance;
    out.varsigma = p.varsigma / f.distance;
    return out;
}

inline Trajectory unscale(const Trajectory& traj, const ScaleFactors& f)
{
    Trajectory out;
    out.t0 = traj.t0 * f.time;
    out.t_end = traj.t_end * f.time;
    out.x0 = traj.x0 * f.distance;
    out.velocities.clear();
    for (double t : traj.turn_times)
        out.turn_times.push_back(t * f.time);
    for (const auto& v : traj.velocities)
        out.velocities.push_back(v * (f.distance / f.time));
    return out;
}

/// Priors given in data units mapped to the scaled problem.
inline PriorSet scale(const PriorSet& priors, const ScaleFactors& f)
{
    PriorSet out = priors;
    out.lambda = {priors.lambda.mode * f.time, priors.lambda.scale * f.time};
    const double speed = f.time / f.distance;
    out.sigma = {priors.sigma.mode * speed, priors.sigma.scale * speed};
    if (priors.varsigma)
        out.varsigma = TruncatedNormalPrior{priors.varsigma->mode / f.distance, priors.varsigma->scale / f.distance};
    return out;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// @brief Fit settings as written in a config file (data units where a unit applies).
///
/// Defaults suit GPS fixes a few minutes apart (metres, seconds): lambda prior half-normal with scale 1/300, sigma prior
/// mode = scale = 1/2, varsigma prior half-normal with scale 10 and upper bound 25.
struct FitConfig
{
    RunConfig run;
    PriorSet priors{{0.0, 1.0 / 300.0}, {0.5, 0.5}, TruncatedNormalPrior{0.0, 10.0}, {1.0, -0.5}, {1.0, 1.2}};
    double varsigma_upper = 25.0;
    double fixed_varsigma = 0.2;
    double step_fraction = 0.3; ///< lambda, sigma and varsigma steps as a fraction of their prior scale

    /// RunConfig for the scaled problem.
    RunConfig scaled(const ScaleFactors& f) const
    {
        RunConfig rc = run;
        rc.priors = scale(priors, f);
        if (rc.error_free)
            rc.priors.varsigma.reset();
        rc.varsigma_upper = varsigma_upper / f.distance;
        rc.fixed_varsigma = fixed_varsigma / f.distance;
        rc.steps.lambda = step_fraction * rc.priors.lambda.scale;
        rc.steps.sigma = step_fraction * rc.priors.sigma.scale;
        rc.steps.varsigma = rc.priors.varsigma ? step_fraction * rc.priors.varsigma->scale : 0.0;
        return rc;
    }
};

namespace detail
{

struct ConfigKey
{
    const char* name;
    void (*apply)(FitConfig&, double);
};

inline long as_count(double v, const char* key)
{
    if (!(v >= 0.0) || v != std::floor(v) || v > 9e15)
        throw std::invalid_argument(std::string(key) + " must be a non-negative integer");
    return static_cast<long>(v);
}

inline const std::vector<ConfigKey>& config_keys()
{
    static const std::vector<ConfigKey> keys{
        {"iterations", [](FitConfig& c, double v) { c.run.iterations = as_count(v, "iterations"); }},
        {"burn_in", [](FitConfig& c, double v) { c.run.burn_in = as_count(v, "burn_in"); }},
        {"chains", [](FitConfig& c, double v) { c.run.chains = static_cast<int>(as_count(v, "chains")); }},
        {"thin", [](FitConfig& c, double v) { c.run.thin = as_count(v, "thin"); }},
        {"trajectory_samples",
         [](FitConfig& c, double v) { c.run.trajectory_samples = static_cast<int>(as_count(v, "trajectory_samples")); }},
        {"error_free", [](FitConfig& c, double v) { c.run.error_free = v != 0.0; }},
        {"parallel", [](FitConfig& c, double v) { c.run.parallel = v != 0.0; }},
        {"fixed_varsigma", [](FitConfig& c, double v) { c.fixed_varsigma = v; }},
        {"varsigma_upper", [](FitConfig& c, double v) { c.varsigma_upper = v; }},
        {"endpoint_update_prob", [](FitConfig& c, double v) { c.run.endpoint_update_prob = v; }},
        {"weight_fixed", [](FitConfig& c, double v) { c.run.proposals.kind_weights[0] = v; }},
        {"weight_uniform", [](FitConfig& c, double v) { c.run.proposals.kind_weights[1] = v; }},
        {"weight_poisson", [](FitConfig& c, double v) { c.run.proposals.kind_weights[2] = v; }},
        {"weight_random_walk", [](FitConfig& c, double v) { c.run.proposals.kind_weights[3] = v; }},
        {"fixed_resample_prob", [](FitConfig& c, double v) { c.run.proposals.fixed_resample_prob = v; }},
        {"p_up", [](FitConfig& c, double v) { c.run.proposals.p_up = v; }},
        {"p_down", [](FitConfig& c, double v) { c.run.proposals.p_down = v; }},
        {"gamma", [](FitConfig& c, double v) { c.run.proposals.gamma = v; }},
        {"tau", [](FitConfig& c, double v) { c.run.proposals.tau = v; }},
        {"constructive_prob", [](FitConfig& c, double v) { c.run.proposals.constructive_prob = v; }},
        {"join_tolerance", [](FitConfig& c, double v) { c.run.proposals.join_tolerance = v; }},
        {"velocity_step", [](FitConfig& c, double v) { c.run.proposals.velocity_step = v; }},
        {"x0_step", [](FitConfig& c, double v) { c.run.proposals.x0_step = v; }},
        {"x0_spread", [](FitConfig& c, double v) { c.run.proposals.x0_spread = v; }},
        {"eigen_floor", [](FitConfig& c, double v) { c.run.proposals.eigen_floor = v; }},
        {"step_fraction", [](FitConfig& c, double v) { c.step_fraction = v; }},
        {"step_kappa", [](FitConfig& c, double v) { c.run.steps.kappa = v; }},
        {"step_rho", [](FitConfig& c, double v) { c.run.steps.rho = v; }},
        {"prior_lambda_mode", [](FitConfig& c, double v) { c.priors.lambda.mode = v; }},
        {"prior_lambda_scale", [](FitConfig& c, double v) { c.priors.lambda.scale = v; }},
        {"prior_sigma_mode", [](FitConfig& c, double v) { c.priors.sigma.mode = v; }},
        {"prior_sigma_scale", [](FitConfig& c, double v) { c.priors.sigma.scale = v; }},
        {"prior_varsigma_mode", [](FitConfig& c, double v) { c.priors.varsigma->mode = v; }},
        {"prior_varsigma_scale", [](FitConfig& c, double v) { c.priors.varsigma->scale = v; }},
        {"prior_kappa_a", [](FitConfig& c, double v) { c.priors.kappa.a = v; }},
        {"prior_kappa_b", [](FitConfig& c, double v) { c.priors.kappa.b = v; }},
        {"prior_rho_alpha", [](FitConfig& c, double v) { c.priors.rho.alpha = v; }},
        {"prior_rho_beta", [](FitConfig& c, double v) { c.priors.rho.beta = v; }},
    };
    return keys;
}

} // namespace detail

inline std::string valid_config_keys()
{
    std::string s;
    for (const auto& k : detail::config_keys()) {
        if (!s.empty())
            s += ", ";
        s += k.name;
    }
    return s;
}

/// Parses `key = value` lines (`#` starts a comment). Throws std::invalid_argument on unknown keys or bad values.
inline FitConfig parse_config(std::istream& in, FitConfig cfg = {})
{
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = detail::trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string text = detail::trim(line.substr(eq + 1));
        const auto& keys = detail::config_keys();
        const auto it = std::find_if(keys.begin(), keys.end(), [&](const auto& k) { return key == k.name; });
        if (it == keys.end())
            throw std::invalid_argument("config line " + std::to_string(line_no) + ": unknown key '" + key +
                                        "'; valid keys are: " + valid_config_keys());
        double value = 0.0;
        if (text == "true")
            value = 1.0;
        else if (text == "false")
            value = 0.0;
        else if (!detail::parse_double(text, value) || !std::isfinite(value))
            throw std::invalid_argument("config line " + std::to_string(line_no) + ": bad value '" + text +
                                        "' for " + key);
        it->apply(cfg, value);
    }
    return cfg;
}

inline FitConfig load_config(const std::string& path, FitConfig cfg = {})
{
    std::ifstream f(path);
    if (!f)
        throw std::invalid_argument("cannot open config file " + path);
    return parse_config(f, std::move(cfg));
}

// ---------------------------------------------------------------------------
// Chains and trajectory samples
// ---------------------------------------------------------------------------

/// Writes one chain in data units: iteration, lambda, kappa, sigma, rho, varsigma, N, log_posterior.
inline void write_chain(const std::string& path, const std::vector<ChainRecord>& records, const ScaleFactors& f)
{
    auto out = detail::open_output(path);
    out << "iteration,lambda,kappa,sigma,rho,varsigma,N,log_posterior\n";
    for (const auto& r : records) {
        const ModelParams p = unscale(r.params, f);
        out << r.iteration << ',' << p.lambda << ',' << p.kappa << ',' << p.sigma << ',' << p.rho << ','
            << p.varsigma << ',' << r.num_turns << ',' << r.log_posterior << '\n';
    }
}

inline std::vector<ChainRecord> read_chain(const std::string& path)
{
    auto in = detail::open_input(path);
    std::string line;
    std::size_t line_no = 0;
    std::vector<ChainRecord> records;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 || detail::trim(line).empty())
            continue;
        const auto cells = detail::split_csv(line);
        if (cells.size() != 8)
            throw DataError(path + " line " + std::to_string(line_no) + ": expected 8 columns");
        double v[8];
        for (int i = 0; i < 8; ++i)
            if (!detail::parse_double(cells[static_cast<std::size_t>(i)], v[i]))
                throw DataError(path + " line " + std::to_string(line_no) + ": cannot parse '" +
                                cells[static_cast<std::size_t>(i)] + "'");
        ChainRecord r;
        r.iteration = static_cast<long>(v[0]);
        r.params = {v[1], v[2], v[3], v[4], v[5]};
        r.num_turns = static_cast<std::size_t>(v[6]);
        r.log_posterior = v[7];
        records.push_back(r);
    }
    return records;
}

/// Trajectory samples, one row per event (start, turns, end): sample, t, x, y, vx, vy.
/// The end row repeats the last velocity.
inline void write_trajectories(const std::string& path, const std::vector<Trajectory>& trajs)
{
    auto out = detail::open_output(path);
    out << "sample,t,x,y,vx,vy\n";
    for (std::size_t s = 0; s < trajs.size(); ++s) {
        const auto& tr = trajs[s];
        const auto locs = tr.event_locations(true);
        for (std::size_t i = 0; i < locs.size(); ++i) {
            const Vec2& v = tr.velocities[std::min(i, tr.velocities.size() - 1)];
            out << s << ',' << tr.event_time(i) << ',' << locs[i].x() << ',' << locs[i].y() << ',' << v.x() << ','
                << v.y() << '\n';
        }
    }
}

inline std::vector<Trajectory> read_trajectories(const std::string& path)
{
    auto in = detail::open_input(path);
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::vector<std::array<double, 5>>> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 || detail::trim(line).empty())
            continue;
        const auto cells = detail::split_csv(line);
        if (cells.size() != 6)
            throw DataError(path + " line " + std::to_string(line_no) + ": expected 6 columns");
        double v[6];
        for (int i = 0; i < 6; ++i)
            if (!detail::parse_double(cells[static_cast<std::size_t>(i)], v[i]))
                throw DataError(path + " line " + std::to_string(line_no) + ": cannot parse '" +
                                cells[static_cast<std::size_t>(i)] + "'");
        const auto id = static_cast<std::size_t>(v[0]);
        if (id >= rows.size())
            rows.resize(id + 1);
        rows[id].push_back({v[1], v[2], v[3], v[4], v[5]});
    }
    std::vector<Trajectory> out;
    for (const auto& r : rows) {
        if (r.size() < 2)
            throw DataError(path + ": every sample needs at least a start and an end row");
        Trajectory tr;
        tr.t0 = r.front()[0];
        tr.t_end = r.back()[0];
        tr.x0 = Vec2(r.front()[1], r.front()[2]);
        tr.velocities.clear();
        for (std::size_t i = 0; i + 1 < r.size(); ++i) {
            if (i > 0)
                tr.turn_times.push_back(r[i][0]);
            tr.velocities.emplace_back(r[i][3], r[i][4]);
        }
        out.push_back(std::move(tr));
    }
    return out;
}

} // namespace vjump
