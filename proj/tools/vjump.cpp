// Command-line front end: simulate, fit, init, diagnose and plot.

#include <vjump/vjump.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <string>

namespace fs = std::filesystem;
using namespace vjump;

namespace
{

enum ExitCode
{
    ok = 0,
    usage = 1,
    data_error = 2,
    numerical_failure = 3,
};

struct SimulateArgs
{
    ModelParams params{0.004, 0.8, 0.3, 0.25, 12.0};
    int n_obs = 100;
    double interval = 120.0;
    std::uint64_t seed = 0;
    std::string out = "observations.csv";
    std::string trajectory_out = "trajectory.csv";
};

struct FitArgs
{
    std::string data;
    std::string config;
    std::uint64_t seed = 0;
    std::string out_dir = "fit";
    bool error_free = false;
    std::optional<long> iterations;
    std::optional<long> burn_in;
};

struct PlotArgs
{
    std::string data;
    std::string samples;
    std::string out = "plot.svg";
    std::optional<double> from;
    std::optional<double> to;
    int count = 100;
};

int do_simulate(const SimulateArgs& a)
{
    if (a.n_obs < 2 || !(a.interval > 0.0))
        throw std::invalid_argument("--n-obs must be at least 2 and --interval positive");
    std::seed_seq seq{static_cast<std::uint32_t>(a.seed & 0xffffffffu), static_cast<std::uint32_t>(a.seed >> 32)};
    std::mt19937_64 rng(seq);
    const double t_end = a.interval * (a.n_obs - 1);
    const Trajectory traj = simulate(a.params, 0.0, t_end, std::nullopt, rng);
    std::vector<double> times;
    for (int k = 0; k < a.n_obs; ++k)
        times.push_back(a.interval * k);
    const Dataset ds = observe(traj, times, a.params.varsigma, rng);
    write_dataset(a.out, ds);
    write_trajectories(a.trajectory_out, {traj});
    std::cout << "simulated " << traj.num_turns() << " turns; observations written to " << a.out << '\n';
    return ok;
}

FitConfig load_fit_config(const FitArgs& a)
{
    FitConfig cfg = a.config.empty() ? FitConfig{} : load_config(a.config);
    cfg.run.seed = a.seed;
    if (a.error_free)
        cfg.run.error_free = true;
    if (a.iterations)
        cfg.run.iterations = *a.iterations;
    if (a.burn_in)
        cfg.run.burn_in = *a.burn_in;
    return cfg;
}

int do_fit(const FitArgs& a)
{
    const Dataset raw = ingest(a.data);
    const FitConfig cfg = load_fit_config(a);
    const Dataset ds = scale(raw);
    const RunConfig rc = cfg.scaled(ds.scale);
    const auto results = run(ds, rc);

    fs::create_directories(a.out_dir);
    std::vector<std::vector<ChainRecord>> chains;
    std::vector<Trajectory> samples;
    std::vector<ChainState> states;
    for (std::size_t c = 0; c < results.size(); ++c) {
        write_chain((fs::path(a.out_dir) / ("chain_" + std::to_string(c + 1) + ".csv")).string(), results[c].records,
                    ds.scale);
        chains.push_back(results[c].records);
        for (const auto& tr : results[c].trajectories)
            samples.push_back(unscale(tr, ds.scale));
        states.push_back(results[c].final_state);
    }
    // Records hold scaled parameters; summaries are reported in data units.
    for (auto& records : chains)
        for (auto& r : records)
            r.params = unscale(r.params, ds.scale);
    const auto summary = summarize(chains);

    write_trajectories((fs::path(a.out_dir) / "trajectories.csv").string(), samples);
    std::ostringstream q, e, acc;
    write_quantiles(q, summary.quantiles);
    write_ess(e, summary.ess);
    write_acceptance(acc, states);
    write_text((fs::path(a.out_dir) / "quantiles.csv").string(), q.str());
    write_text((fs::path(a.out_dir) / "ess.csv").string(), e.str());
    write_text((fs::path(a.out_dir) / "acceptance.csv").string(), acc.str());
    write_text((fs::path(a.out_dir) / "plot.svg").string(), svg_plot(raw, samples));
    std::cout << q.str() << '\n' << e.str();
    return ok;
}

int do_init(const FitArgs& a, const std::string& out)
{
    const Dataset raw = ingest(a.data);
    const FitConfig cfg = load_fit_config(a);
    const Dataset ds = scale(raw);
    const RunConfig rc = cfg.scaled(ds.scale);
    rc.validate();
    const ChainState s = initialize_chain(ds, rc, 0);
    write_trajectories(out, {unscale(s.trajectory, ds.scale)});
    const ModelParams p = unscale(s.params, ds.scale);
    std::cout << "turns " << s.trajectory.num_turns() << "\nlambda " << p.lambda << "\nkappa " << p.kappa
              << "\nsigma " << p.sigma << "\nrho " << p.rho << "\nvarsigma " << p.varsigma << '\n';
    return ok;
}

int do_diagnose(const std::string& dir)
{
    if (!fs::is_directory(dir))
        throw DataError("no such directory " + dir);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (name.rfind("chain_", 0) == 0 && entry.path().extension() == ".csv")
            files.push_back(entry.path());
    }
    if (files.empty())
        throw DataError("no chain_*.csv files in " + dir);
    std::sort(files.begin(), files.end());
    std::vector<std::vector<ChainRecord>> chains;
    for (const auto& f : files)
        chains.push_back(read_chain(f.string()));
    const auto summary = summarize(chains);
    write_quantiles(std::cout, summary.quantiles);
    std::cout << '\n';
    write_ess(std::cout, summary.ess);
    const fs::path acc = fs::path(dir) / "acceptance.csv";
    if (fs::exists(acc)) {
        std::ifstream f(acc);
        std::cout << '\n' << f.rdbuf();
    }
    return ok;
}

int do_plot(const PlotArgs& a)
{
    const Dataset ds = ingest(a.data);
    auto trajs = read_trajectories(a.samples);
    if (a.count >= 0 && trajs.size() > static_cast<std::size_t>(a.count))
        trajs.resize(static_cast<std::size_t>(a.count));
    PlotOptions opt;
    opt.from = a.from;
    opt.to = a.to;
    write_text(a.out, svg_plot(ds, trajs, opt));
    return ok;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Velocity-jump movement model: simulation and reversible-jump MCMC"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* cmd_sim = app.add_subcommand("simulate", "simulate a trajectory and noisy observations");
    cmd_sim->add_option("--lambda", sim.params.lambda, "turn rate")->capture_default_str();
    cmd_sim->add_option("--kappa", sim.params.kappa, "turn concentration")->capture_default_str();
    cmd_sim->add_option("--sigma", sim.params.sigma, "speed scale")->capture_default_str();
    cmd_sim->add_option("--rho", sim.params.rho, "speed correlation")->capture_default_str();
    cmd_sim->add_option("--varsigma", sim.params.varsigma, "observation error SD")->capture_default_str();
    cmd_sim->add_option("--n-obs", sim.n_obs, "number of observations")->capture_default_str();
    cmd_sim->add_option("--interval", sim.interval, "time between observations")->capture_default_str();
    cmd_sim->add_option("--seed", sim.seed, "random seed")->required();
    cmd_sim->add_option("--out", sim.out, "observations CSV")->capture_default_str();
    cmd_sim->add_option("--trajectory-out", sim.trajectory_out, "true trajectory CSV")->capture_default_str();

    FitArgs fit;
    auto* cmd_fit = app.add_subcommand("fit", "run the MCMC sampler on observations");
    cmd_fit->add_option("--data", fit.data, "observations CSV (t,x,y)")->required();
    cmd_fit->add_option("--config", fit.config, "key = value configuration file");
    cmd_fit->add_option("--seed", fit.seed, "random seed")->required();
    cmd_fit->add_option("--out-dir", fit.out_dir, "output directory")->capture_default_str();
    cmd_fit->add_flag("--error-free", fit.error_free, "hold varsigma fixed at a small value");
    cmd_fit->add_option("--iterations", fit.iterations, "override iterations");
    cmd_fit->add_option("--burn-in", fit.burn_in, "override burn-in");

    FitArgs init;
    std::string init_out = "initial.csv";
    auto* cmd_init = app.add_subcommand("init", "write the initial reconstruction");
    cmd_init->add_option("--data", init.data, "observations CSV (t,x,y)")->required();
    cmd_init->add_option("--config", init.config, "key = value configuration file");
    cmd_init->add_option("--seed", init.seed, "random seed")->required();
    cmd_init->add_flag("--error-free", init.error_free, "hold varsigma fixed at a small value");
    cmd_init->add_option("--out", init_out, "trajectory CSV")->capture_default_str();

    std::string diag_dir;
    auto* cmd_diag = app.add_subcommand("diagnose", "ESS and quantiles from saved chains");
    cmd_diag->add_option("--dir", diag_dir, "directory holding chain_*.csv")->required();

    PlotArgs plot;
    auto* cmd_plot = app.add_subcommand("plot", "SVG of observations and trajectory samples");
    cmd_plot->add_option("--data", plot.data, "observations CSV (t,x,y)")->required();
    cmd_plot->add_option("--samples", plot.samples, "trajectory samples CSV")->required();
    cmd_plot->add_option("--out", plot.out, "SVG file")->capture_default_str();
    cmd_plot->add_option("--from", plot.from, "close-up start time");
    cmd_plot->add_option("--to", plot.to, "close-up end time");
    cmd_plot->add_option("--count", plot.count, "maximum trajectories drawn")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : usage;
    }

    try {
        if (*cmd_sim)
            return do_simulate(sim);
        if (*cmd_fit)
            return do_fit(fit);
        if (*cmd_init)
            return do_init(init, init_out);
        if (*cmd_diag)
            return do_diagnose(diag_dir);
        if (*cmd_plot)
            return do_plot(plot);
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return data_error;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return numerical_failure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return usage;
    }
    return usage;
}
