#include "aclab/experiments.hpp"
#include "aclab/verify.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>

namespace fs = std::filesystem;
using namespace aclab;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kInvalid = 2;
constexpr int kVerdict = 3;

struct Globals {
    std::uint64_t seed = 0;
    std::string out_dir;
    int workers = 1;
    std::string schedule;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* out_opt = nullptr;
    CLI::Option* workers_opt = nullptr;
    CLI::Option* schedule_opt = nullptr;
};

struct MdpChoice {
    std::string path;
    std::string fixture = "chainmdp";
    double gamma = -1.0;

    void attach(CLI::App* cmd) {
        auto* p = cmd->add_option("--mdp", path, "MDP spec file");
        auto* f = cmd->add_option("--fixture", fixture, "chainmdp | single_state | constant_reward")
                      ->check(CLI::IsMember({"chainmdp", "single_state", "constant_reward"}));
        p->excludes(f);
        cmd->add_option("--gamma", gamma, "discount for a fixture");
    }

    MdpSpec load() const {
        if (!path.empty())
            return io::load_mdp(path);
        exp::MdpSource src;
        src.fixture = fixture;
        if (gamma >= 0.0)
            src.gamma = gamma;
        return exp::resolve_mdp(src);
    }
};

fs::path out_dir(const Globals& g, const char* fallback) {
    return g.out_opt->count() ? fs::path(g.out_dir) : fs::path(fallback);
}

RateSchedule schedule_of(const Globals& g) {
    return g.schedule_opt->count() ? exp::parse_schedule(g.schedule) : RateSchedule::standard();
}

/// Uniform grid of n+1 points on [0, T].
std::vector<double> even_grid(double T, int n) {
    std::vector<double> ts;
    for (int i = 0; i <= n; ++i)
        ts.push_back(T * i / n);
    return ts;
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

void print_ergodicity(const char* label, const ErgodicityReport& r) {
    std::cout << label << ": irreducible=" << bool_text(r.irreducible) << " aperiodic=" << bool_text(r.aperiodic)
              << " period=" << r.period << " classes=" << r.n_communicating_classes << "\n";
}

void print_ergodicity_all(const MdpSpec& spec) {
    const PolicyTable uniform = softmax_policy(ThetaTable::Zero(spec.n_states, spec.n_actions));
    print_ergodicity("uniform-policy chain", check_ergodicity(state_kernel(spec, uniform)));
    print_ergodicity("restart chain", check_ergodicity(restart_kernel(spec)));
}

int guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kInvalid;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kInvalid;
    } catch (const exp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "argument error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tabular actor-critic lab: exact solvers, online runs, limit ODE and experiments"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    g.seed_opt = app.add_option("--seed", g.seed, "base random seed");
    g.out_opt = app.add_option("--out-dir", g.out_dir, "output directory");
    g.workers_opt = app.add_option("--workers", g.workers, "worker threads")->check(CLI::PositiveNumber);
    g.schedule_opt = app.add_option("--schedule", g.schedule, "paper | constant:zeta,eta");

    std::function<int()> action;

    auto* validate = app.add_subcommand("validate", "check an MDP spec file");
    std::string validate_path;
    validate->add_option("file", validate_path)->required();
    validate->callback([&] {
        action = [&] {
            const MdpSpec spec = io::load_mdp(validate_path);
            std::cout << "valid: " << spec.n_states << " states, " << spec.n_actions
                      << " actions, gamma=" << io::fmt(spec.gamma) << "\n"
                      << "hash: " << io::content_hash(spec) << "\n";
            print_ergodicity_all(spec);
            return kOk;
        };
    });

    auto* gen = app.add_subcommand("gen-mdp", "write a random MDP spec file");
    long long gen_states = 2, gen_actions = 2;
    double gen_gamma = 0.9, gen_min_prob = 0.01;
    std::string gen_output;
    gen->add_option("--states", gen_states);
    gen->add_option("--actions", gen_actions);
    gen->add_option("--gamma", gen_gamma);
    gen->add_option("--min-prob", gen_min_prob);
    gen->add_option("-o,--output", gen_output, "file to write (default <out-dir>/mdp.json)");
    gen->callback([&] {
        action = [&] {
            if (gen_states < 1 || gen_actions < 1)
                throw std::invalid_argument("--states and --actions must be at least 1");
            const MdpSpec spec = random_mdp(gen_states, gen_actions, gen_gamma, g.seed, gen_min_prob);
            const fs::path path = gen_output.empty() ? out_dir(g, "out") / "mdp.json" : fs::path(gen_output);
            io::save_mdp(path, spec);
            std::cout << path.string() << "\n" << "hash: " << io::content_hash(spec) << "\n";
            print_ergodicity_all(spec);
            return kOk;
        };
    });

    auto* sim = app.add_subcommand("simulate", "run the online actor-critic and write its trajectory");
    MdpChoice sim_mdp;
    sim_mdp.attach(sim);
    long long sim_n = 1000;
    double sim_t = 1.0, sim_alpha = 1.0;
    int sim_points = 20;
    std::vector<double> sim_checkpoints;
    bool sim_frozen = false;
    sim->add_option("-N", sim_n, "time-rescaling parameter");
    sim->add_option("-T", sim_t, "horizon in rescaled time");
    sim->add_option("--alpha", sim_alpha);
    sim->add_option("--points", sim_points, "evenly spaced checkpoints when --checkpoints is absent");
    sim->add_option("--checkpoints", sim_checkpoints)->delimiter(',');
    sim->add_flag("--freeze", sim_frozen, "keep theta and Q fixed");
    sim->callback([&] {
        action = [&] {
            const MdpSpec spec = sim_mdp.load();
            AcConfig c = default_config(spec);
            c.N = sim_n;
            c.T = sim_t;
            c.alpha = sim_alpha;
            c.seed = g.seed;
            c.schedule = schedule_of(g);
            c.freeze_updates = sim_frozen;
            c.checkpoint_times = sim_checkpoints.empty() ? even_grid(sim_t, std::max(1, sim_points)) : sim_checkpoints;
            const auto traj = run(spec, c);
            const fs::path dir = out_dir(g, "out/simulate");
            io::write_file(dir / "trajectory.csv", io::online_trajectory_csv(traj));
            io::write_file(dir / "trajectory.json", io::online_trajectory_metadata(spec, c, traj).dump(2) + "\n");
            std::cout << (dir / "trajectory.csv").string() << "\n";
            return kOk;
        };
    });

    auto* ode = app.add_subcommand("ode", "integrate the limit ODE and write its trajectory");
    MdpChoice ode_mdp;
    ode_mdp.attach(ode);
    double ode_t = 100.0, ode_h = 0.01, ode_alpha = 1.0;
    int ode_points = 20;
    std::vector<double> ode_checkpoints;
    std::string ode_sigma = "mass_one";
    ode->add_option("-T", ode_t);
    ode->add_option("--step", ode_h, "RK4 step h");
    ode->add_option("--alpha", ode_alpha);
    ode->add_option("--points", ode_points, "evenly spaced checkpoints when --checkpoints is absent");
    ode->add_option("--checkpoints", ode_checkpoints)->delimiter(',');
    ode->add_option("--sigma", ode_sigma)->check(CLI::IsMember({"mass_one", "unnormalized"}));
    ode->callback([&] {
        action = [&] {
            const MdpSpec spec = ode_mdp.load();
            OdeOptions opt;
            opt.alpha = ode_alpha;
            opt.schedule = schedule_of(g);
            opt.sigma = ode_sigma == "mass_one" ? SigmaNormalization::MassOne : SigmaNormalization::Unnormalized;
            const auto times = ode_checkpoints.empty() ? even_grid(ode_t, std::max(1, ode_points)) : ode_checkpoints;
            const auto traj = integrate(spec, ThetaTable::Zero(spec.n_states, spec.n_actions),
                                        CriticTable::Zero(spec.n_states, spec.n_actions), ode_t, ode_h, times, opt);
            const fs::path dir = out_dir(g, "out/ode");
            io::write_file(dir / "ode.csv", io::ode_trajectory_csv(traj));
            io::write_file(dir / "ode.json", io::ode_trajectory_metadata(spec, ode_t, ode_h, opt, traj).dump(2) + "\n");
            std::cout << (dir / "ode.csv").string() << "\n";
            return kOk;
        };
    });

    auto* expc = app.add_subcommand("exp", "run an experiment and write config.json, raw.csv, report.json");
    std::string exp_id, exp_config;
    expc->add_option("experiment", exp_id)->required()->check(CLI::IsMember(exp::experiment_ids()));
    expc->add_option("--config", exp_config, "experiment config JSON (defaults when absent)");
    expc->callback([&] {
        action = [&] {
            exp::ExperimentConfig c =
                exp_config.empty() ? exp::default_experiment(exp_id) : exp::load_experiment(exp_config, exp_id);
            if (g.seed_opt->count() && !c.seeds.empty())
                c.seeds = exp::seed_range(g.seed, c.seeds.size());
            if (g.out_opt->count())
                c.out_dir = g.out_dir;
            if (g.workers_opt->count())
                c.workers = g.workers;
            if (g.schedule_opt->count())
                c.schedule = exp::parse_schedule(g.schedule);
            exp::validate_experiment(c);
            const auto res = exp::run_experiment(c);
            exp::write_outputs(res);
            const auto& r = res.report;
            std::cout << r.experiment << ": " << r.quantity << "\n";
            for (const auto& p : r.points)
                std::cout << "  " << io::fmt(p.key) << "  mean=" << io::fmt(p.mean) << " std=" << io::fmt(p.std)
                          << " n=" << p.count << "\n";
            for (const auto& [name, v] : r.fits)
                std::cout << "  fit " << name << " = " << io::fmt(v) << "\n";
            for (const auto& v : r.verdicts)
                std::cout << (v.passed ? "PASS " : "FAIL ") << v.name << ": " << v.detail << "\n";
            std::cout << "output: " << c.out_dir.string() << "\n";
            return r.passed() ? kOk : kVerdict;
        };
    });

    auto* ver = app.add_subcommand("verify", "run the registered property checks");
    std::string filter;
    ver->add_option("--filter", filter, "run only properties whose name contains this text");
    ver->callback([&] {
        action = [&] {
            const auto rep = verify::run_properties(filter, g.seed);
            for (const auto& r : rep.results)
                std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
            std::cout << rep.results.size() << " properties checked\n";
            if (rep.results.empty()) {
                std::cerr << "no property matches \"" << filter << "\"\n";
                return kUsage;
            }
            return rep.all_passed() ? kOk : kVerdict;
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }
    return action ? guarded(action) : kUsage;
}
