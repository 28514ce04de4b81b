#include "dlq/cli/app.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "dlq/errors.hpp"
#include "dlq/markowitz.hpp"

namespace dlq::cli {

namespace {

using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void write_json(const std::filesystem::path& file, const json& j) {
    std::ofstream f(file);
    if (!f) throw ParameterError("cannot open " + file.string() + " for writing");
    f << j.dump(2) << '\n';
}

/// Collects output names and writes the manifest plus the effective config.
class OutputDir {
public:
    OutputDir(const RunConfig& cfg, std::string command) : cfg_(cfg), command_(std::move(command)) {
        std::filesystem::create_directories(cfg.out_dir);
    }

    std::filesystem::path file(const std::string& name) {
        outputs_.push_back(name);
        return cfg_.out_dir / name;
    }

    void finish() {
        const std::string ini = to_ini(cfg_);
        {
            std::ofstream f(cfg_.out_dir / "config.effective.ini");
            if (!f) throw ParameterError("cannot write config.effective.ini");
            f << ini;
        }
        json manifest = {
            {"tool", "dlq"},
            {"version", kVersion},
            {"command", command_},
            {"problem", to_string(cfg_.kind)},
            {"config", "config.effective.ini"},
            {"config_hash", "fnv1a64:" + hex64(fnv1a64(ini))},
            {"seed", cfg_.sim.master_seed},
            {"outputs", outputs_},
        };
        write_json(cfg_.out_dir / "manifest.json", manifest);
    }

private:
    const RunConfig& cfg_;
    std::string command_;
    std::vector<std::string> outputs_;
};

ModelParams effective_model(const RunConfig& cfg) {
    switch (cfg.kind) {
        case ProblemKind::Single: return cfg.model;
        case ProblemKind::Markowitz: return cfg.market.model();
        default: return cfg.two_asset.effective_model();
    }
}

bool is_two_asset(const RunConfig& cfg) {
    return cfg.kind == ProblemKind::TwoAsset || cfg.kind == ProblemKind::Markowitz2;
}

bool is_market(const RunConfig& cfg) {
    return cfg.kind == ProblemKind::Markowitz || cfg.kind == ProblemKind::Markowitz2;
}

SolveResult solve_for(const RunConfig& cfg) {
    const GridSpec spec = cfg.grid_spec();
    if (is_two_asset(cfg)) {
        return solve_two_asset(cfg.two_asset, spec, cfg.solver);
    }
    return solve_single(effective_model(cfg), spec, cfg.solver);
}

json diagnostics_json(const RunConfig& cfg, const SolveResult& result) {
    const GridSpec& spec = result.grid.spec();
    const SolveDiagnostics& d = result.diagnostics;
    const ResidualReport res = residual_report(result.grid);
    json slices = json::array();
    for (const SliceDiagnostics& s : d.slices) {
        json hist = json::array();
        for (double r : s.residual_history) hist.push_back(finite_or_null(r));
        slices.push_back({
            {"slice", s.slice},
            {"t_lo", spec.t(s.lo)},
            {"t_hi", spec.t(s.hi)},
            {"iterations", s.iterations},
            {"bisections", s.bisections},
            {"residual", finite_or_null(s.residual)},
            {"min_p11", finite_or_null(s.min_p11)},
            {"lower_bound", finite_or_null(s.lower_bound)},
            {"residual_history", hist},
        });
    }
    return {
        {"problem", to_string(cfg.kind)},
        {"grid",
         {{"m", spec.m}, {"h", spec.h}, {"n_t", spec.n_t}, {"d", spec.d}, {"T", spec.T},
          {"T_requested", spec.T_requested}, {"snapped", spec.snapped}}},
        {"b", result.grid.params().b},
        {"sigma", result.grid.params().sigma},
        {"undelayed_rate", result.grid.undelayed_rate()},
        {"tol", d.tol},
        {"positivity_floor", d.positivity_floor},
        {"positivity_ok", d.positivity_ok},
        {"sufficient_holds", d.sufficient_holds},
        {"p11_at_0", result.grid.p11(0)},
        {"min_p11", finite_or_null(d.min_p11)},
        {"min_p2hat2", finite_or_null(d.min_p2hat2)},
        {"slices", slices},
        {"residuals",
         {{"p11", res.p11}, {"p12", res.p12}, {"p22", res.p22}, {"boundary12", res.boundary12},
          {"boundary22", res.boundary22}, {"terminal", res.terminal}}},
    };
}

void write_kernels(const KernelGrid& grid, OutputDir& dir) {
    for (KernelId k : {KernelId::P11, KernelId::P12, KernelId::P2hat2, KernelId::P22}) {
        export_csv(grid, k, dir.file(kernel_file_name(k)));
    }
}

json stats_json(const MCStats& s) {
    return {{"mean", s.mean}, {"variance", s.variance}, {"std_error", s.std_error}, {"n_paths", s.n_paths}};
}

json error_json(const std::string& kind, const std::string& message) {
    return {{"error", {{"kind", kind}, {"message", message}}}};
}

}  // namespace

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConvergenceError*>(&e) || dynamic_cast<const PositivityError*>(&e) ||
        dynamic_cast<const DegenerateFrontierError*>(&e)) {
        return kExitSolver;
    }
    if (dynamic_cast<const SimulationError*>(&e) || dynamic_cast<const DegeneracyError*>(&e)) {
        return kExitSimulation;
    }
    return kExitConfig;
}

int cmd_check(const RunConfig& cfg, std::ostream& out) {
    const ModelParams params = effective_model(cfg);
    const FeasibilityReport report = feasibility(params);
    json j = {
        {"problem", to_string(cfg.kind)},
        {"b", params.b},
        {"sigma", params.sigma},
        {"d", params.d},
        {"T", params.T},
        {"cap", default_feasibility_cap(params)},
        {"a_seq", report.a_seq},
        {"n_cal", report.n_cal},
        {"exceeds_cap", report.exceeds_cap},
        {"sufficient_holds", report.sufficient_holds},
        {"margin", finite_or_null(report.margin)},
    };
    out << j.dump(2) << '\n';
    return report.sufficient_holds ? kExitOk : kExitAdvisory;
}

int cmd_solve(const RunConfig& cfg, std::ostream& out) {
    const SolveResult result = solve_for(cfg);
    OutputDir dir(cfg, "solve");
    write_kernels(result.grid, dir);
    const json diag = diagnostics_json(cfg, result);
    write_json(dir.file("diagnostics.json"), diag);
    dir.finish();
    out << json{{"p11_at_0", result.grid.p11(0)},
                {"positivity_ok", result.diagnostics.positivity_ok},
                {"sufficient_holds", result.diagnostics.sufficient_holds},
                {"out", cfg.out_dir.string()}}
               .dump(2)
        << '\n';
    return kExitOk;
}

int cmd_simulate(const RunConfig& cfg, std::ostream& out) {
    const SolveResult result = solve_for(cfg);
    const KernelGrid& grid = result.grid;
    const InitialSegment gamma = cfg.initial_segment(grid.spec().m);
    SimConfig sim = cfg.sim;
    sim.h_sim = grid.spec().h;

    double xi = cfg.xi;
    if (is_market(cfg)) {
        xi = eta_star(grid, cfg.market.x0, cfg.market.c, gamma).xi_star;
    }
    SimConfig exported = sim;
    exported.n_paths = std::min(sim.n_paths, cfg.export_paths);

    std::vector<double> terminal;
    OutputDir dir(cfg, "simulate");
    if (is_two_asset(cfg)) {
        terminal = simulate_two_asset_terminal(grid, cfg.two_asset, gamma, sim, xi);
        if (exported.n_paths > 0) {
            const auto paths = simulate_two_asset(grid, cfg.two_asset, gamma, exported, xi);
            export_paths_csv(std::span<const TwoAssetPath>(paths), dir.file("paths.csv"));
        }
    } else {
        const Strategy strategy = optimal_strategy(grid, xi);
        terminal = simulate_terminal(grid, gamma, sim, strategy);
        if (exported.n_paths > 0) {
            const auto paths = simulate(grid, gamma, exported, strategy);
            export_paths_csv(std::span<const SimulatedPath>(paths), dir.file("paths.csv"));
        }
    }

    std::vector<double> cost(terminal.size());
    for (std::size_t i = 0; i < terminal.size(); ++i) {
        cost[i] = (terminal[i] - xi) * (terminal[i] - xi);
    }
    const MCStats xs = mc_stats(terminal);
    json stats = stats_json(xs);
    stats["seed"] = sim.master_seed;
    stats["functional"] = "X_T";
    stats["xi"] = xi;
    stats["zero_noise"] = sim.zero_noise;
    stats["cost"] = stats_json(mc_stats(cost));
    stats["value"] = value_of(grid, sim.x0 - xi, gamma);
    write_json(dir.file("stats.json"), stats);
    dir.finish();
    out << stats.dump(2) << '\n';
    return kExitOk;
}

int cmd_frontier(const RunConfig& cfg, std::ostream& out) {
    if (!is_market(cfg)) {
        throw ConfigError("frontier needs problem kind markowitz or markowitz2");
    }
    const SolveResult result = solve_for(cfg);
    const InitialSegment gamma = cfg.initial_segment(result.grid.spec().m);
    std::vector<double> c_list = cfg.c_list;
    if (c_list.empty()) c_list.push_back(cfg.market.c);

    const std::vector<FrontierPoint> points =
        is_two_asset(cfg) ? two_asset_frontier(result.grid, cfg.market.x0, gamma, c_list)
                          : frontier(result.grid, cfg.market.x0, gamma, c_list);
    OutputDir dir(cfg, "frontier");
    export_frontier_csv(points, dir.file("frontier.csv"));
    dir.finish();

    json rows = json::array();
    for (const FrontierPoint& p : points) {
        rows.push_back({{"c", p.c}, {"eta_star", p.eta_star}, {"xi_star", p.xi_star}, {"variance", p.variance}});
    }
    out << json{{"p11_at_0", result.grid.p11(0)}, {"points", rows}}.dump(2) << '\n';
    return kExitOk;
}

int cmd_compare(const RunConfig& cfg, const std::string& path_a, const std::string& path_b,
                std::ostream& out) {
    const GridSpec spec = cfg.grid_spec();
    const std::filesystem::path a(path_a);
    const std::filesystem::path b(path_b);
    std::vector<std::pair<std::filesystem::path, std::filesystem::path>> pairs;
    if (std::filesystem::is_directory(a) && std::filesystem::is_directory(b)) {
        for (KernelId k : {KernelId::P11, KernelId::P12, KernelId::P2hat2, KernelId::P22}) {
            const std::string name = kernel_file_name(k);
            if (std::filesystem::exists(a / name) && std::filesystem::exists(b / name)) {
                pairs.emplace_back(a / name, b / name);
            }
        }
        if (pairs.empty()) {
            throw ConfigError("no kernel CSV present in both " + path_a + " and " + path_b);
        }
    } else if (std::filesystem::is_regular_file(a) && std::filesystem::is_regular_file(b)) {
        pairs.emplace_back(a, b);
    } else {
        throw ConfigError("compare needs two kernel CSV files or two directories");
    }

    json kernels = json::object();
    double overall = 0.0;
    for (const auto& [fa, fb] : pairs) {
        const KernelTable ta = import_csv(fa, spec);
        const KernelTable tb = import_csv(fb, spec);
        if (ta.which != tb.which) {
            throw ConfigError("kernel mismatch: " + fa.string() + " vs " + fb.string());
        }
        const MaxDiff diff = max_abs_diff(ta, tb);
        overall = std::max(overall, diff.value);
        kernels[std::string(kernel_name(ta.which))] = {
            {"max_abs_diff", diff.value}, {"t", diff.t}, {"s", diff.s}, {"r", diff.r},
            {"n_common", diff.n_common}};
    }
    const json report = {{"a", path_a}, {"b", path_b}, {"kernels", kernels}, {"max_abs_diff", overall}};
    OutputDir dir(cfg, "compare");
    write_json(dir.file("compare.json"), report);
    dir.finish();
    out << report.dump(2) << '\n';
    return kExitOk;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Delayed linear-quadratic control: Riccati kernels, simulation, mean-variance frontier",
                 "dlq"};
    app.fallthrough();
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    int m = 0;
    int paths = 0;
    bool test_mode = false;
    app.add_option("--config", config_path, "Run configuration file");
    auto* out_opt = app.add_option("--out", out_dir, "Output directory");
    auto* seed_opt = app.add_option("--seed", seed, "Master seed for the simulation");
    auto* m_opt = app.add_option("--m", m, "Grid steps per delay")->check(CLI::PositiveNumber);
    auto* paths_opt = app.add_option("--paths", paths, "Number of Monte Carlo paths")->check(CLI::PositiveNumber);
    app.add_flag("--test-mode", test_mode, "Zero-noise simulation");

    auto* check = app.add_subcommand("check", "Sufficient condition for well-posedness (exit 2 if it fails)");
    auto* solve = app.add_subcommand("solve", "Solve the Riccati kernels and export them");
    auto* simulate_cmd = app.add_subcommand("simulate", "Monte Carlo under the optimal feedback");
    auto* frontier_cmd = app.add_subcommand("frontier", "Mean-variance frontier");
    auto* compare = app.add_subcommand("compare", "Max-abs difference of two kernel exports");
    std::string path_a;
    std::string path_b;
    compare->add_option("a", path_a, "Kernel CSV or output directory")->required();
    compare->add_option("b", path_b, "Kernel CSV or output directory")->required();

    std::vector<const char*> argv;
    argv.push_back("dlq");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << error_json("usage", e.what()).dump() << '\n';
        return kExitConfig;
    }

    try {
        if (config_path.empty()) {
            throw ConfigError("--config is required");
        }
        RunConfig cfg = load_config(config_path);
        if (*out_opt) cfg.out_dir = out_dir;
        if (*seed_opt) cfg.sim.master_seed = seed;
        if (*m_opt) {
            cfg.m = m;
            cfg.h.reset();
        }
        if (*paths_opt) cfg.sim.n_paths = paths;
        if (test_mode) cfg.sim.zero_noise = true;

        if (check->parsed()) return cmd_check(cfg, out);
        if (solve->parsed()) return cmd_solve(cfg, out);
        if (simulate_cmd->parsed()) return cmd_simulate(cfg, out);
        if (frontier_cmd->parsed()) return cmd_frontier(cfg, out);
        if (compare->parsed()) return cmd_compare(cfg, path_a, path_b, out);
        return kExitConfig;
    } catch (const Error& e) {
        json j = error_json(e.kind(), e.what());
        if (const auto* c = dynamic_cast<const ConvergenceError*>(&e)) {
            j["error"]["slice"] = c->slice();
            j["error"]["residual"] = finite_or_null(c->residual());
        } else if (const auto* p = dynamic_cast<const PositivityError*>(&e)) {
            j["error"]["slice"] = p->slice();
        } else if (const auto* s = dynamic_cast<const SimulationError*>(&e)) {
            j["error"]["path"] = s->path();
            j["error"]["step"] = s->step();
        }
        err << j.dump() << '\n';
        return exit_code_for(e);
    } catch (const std::exception& e) {
        err << error_json("io", e.what()).dump() << '\n';
        return kExitConfig;
    }
}

}  // namespace dlq::cli
