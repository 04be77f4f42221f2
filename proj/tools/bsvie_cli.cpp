// Command-line front end: seeded, reproducible runs of the solvers with
// CSV/JSON artifacts. Exit codes: 0 success, 1 error, 2 verdict failure
// (a mathematical check violated beyond tolerance).

#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "bsvie/comparison.hpp"
#include "bsvie/config.hpp"
#include "bsvie/linear.hpp"
#include "bsvie/parallel.hpp"
#include "bsvie/report.hpp"
#include "bsvie/risk.hpp"
#include "bsvie/semimartingale.hpp"
#include "bsvie/solver.hpp"

namespace {

using namespace bsvie;
using nlohmann::json;

constexpr int kOk = 0;
constexpr int kError = 1;
constexpr int kVerdictFailure = 2;

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> paths;
    std::string out;
    int threads = 0;
};

struct RunContext {
    ScenarioConfig cfg;
    std::string out_dir;
    Subcommand cmd;
    std::vector<std::string> artifacts;

    std::string path(const std::string& name) {
        artifacts.push_back(name);
        return join_path(out_dir, name);
    }

    json header() const {
        json j;
        j["command"] = subcommand_name(cmd);
        j["config_hash"] = cfg.config_hash;
        j["seed"] = cfg.seed;
        j["n_paths"] = cfg.n_paths;
        return j;
    }

    void write_run_report(json extra = json::object()) {
        json j = header();
        j["artifacts"] = artifacts;
        j["timestamp"] = timestamp_now();
        for (auto& [k, v] : extra.items()) {
            j[k] = v;
        }
        write_json_file(join_path(out_dir, "run.json"), j);
    }
};

RunContext make_context(const CommonArgs& args, Subcommand cmd) {
    if (args.threads > 0) {
        set_max_threads(args.threads);
    }
    RunContext ctx;
    ctx.cmd = cmd;
    ctx.cfg = load_scenario_file(args.config_path, cmd);
    if (args.seed) {
        ctx.cfg.seed = *args.seed;
    }
    if (args.paths) {
        ctx.cfg.n_paths = *args.paths;
    }
    ctx.out_dir = !args.out.empty() ? args.out : ctx.cfg.out_dir;
    if (ctx.out_dir.empty()) {
        if (const char* env = std::getenv("BSVIE_OUT_DIR")) {
            ctx.out_dir = env;
        } else {
            ctx.out_dir = ".";
        }
    }
    ensure_directory(ctx.out_dir);
    return ctx;
}

PathBundle make_bundle(const ScenarioConfig& cfg) {
    return simulate_paths(cfg.grid, cfg.jumps, cfg.diffusion, cfg.n_paths, cfg.seed);
}

void audit_driver(const ScenarioConfig& cfg, const Driver& driver) {
    if (!cfg.probe_driver) {
        return;
    }
    auto probe = driver.probe_lipschitz();
    if (!probe.pass) {
        std::ostringstream os;
        os << "driver failed its Lipschitz audit: estimate " << probe.estimate
           << " exceeds the declared constant " << driver.lipschitz_c << " (" << probe.worst_pair
           << ")";
        throw Error(os.str());
    }
}

json node_table(const std::vector<NodeEstimate>& nodes, const TimeGrid& grid) {
    json rows = json::array();
    for (std::size_t j = 0; j < nodes.size(); ++j) {
        json row;
        row["t"] = grid.node(static_cast<int>(j));
        row["mean"] = nodes[j].mean;
        row["stderr"] = nodes[j].std_error;
        rows.push_back(row);
    }
    return rows;
}

int run_solve(const CommonArgs& args) {
    RunContext ctx = make_context(args, Subcommand::Solve);
    const ScenarioConfig& cfg = ctx.cfg;
    audit_driver(cfg, *cfg.driver);

    PathBundle bundle = make_bundle(cfg);
    auto set = std::make_shared<RegressionSet>(bundle, cfg.basis);
    SolutionSurface surface =
        solve(*cfg.driver, *cfg.psi, cfg.sign, bundle, set, cfg.solver_options);

    const int steps = cfg.grid.steps;
    const int m = surface.n_weights;
    {
        CsvWriter csv(ctx.path("surface.csv"));
        csv.field("i").field("j").field("t").field("s").field("Y").field("Z");
        for (int mm = 0; mm < m; ++mm) {
            csv.field("K_" + std::to_string(mm + 1));
        }
        csv.end_row();
        std::vector<double> zv(bundle.n_paths);
        for (int i = 0; i <= steps; ++i) {
            for (int j = i; j <= steps; ++j) {
                csv.field(static_cast<double>(i)).field(static_cast<double>(j));
                csv.field(cfg.grid.node(i)).field(cfg.grid.node(j));
                if (i == j) {
                    csv.field(surface.y_nodes[i].mean);
                } else {
                    csv.empty_field();
                }
                if (j < steps) {
                    zv = surface.z_values(i, j);
                    double zm = 0.0;
                    for (double v : zv) {
                        zm += v;
                    }
                    csv.field(zm / bundle.n_paths);
                    for (int mm = 0; mm < m; ++mm) {
                        auto kv = surface.k_values(i, j, mm);
                        double km = 0.0;
                        for (double v : kv) {
                            km += v;
                        }
                        csv.field(km / bundle.n_paths);
                    }
                } else {
                    csv.empty_field();
                    for (int mm = 0; mm < m; ++mm) {
                        csv.empty_field();
                    }
                }
                csv.end_row();
            }
        }
    }
    {
        json conv;
        conv["picard_iterations"] = surface.picard_iterations;
        conv["picard_history"] = surface.picard_history;
        conv["norms"] = {{"Y", surface.norm_y}, {"Z", surface.norm_z}, {"K", surface.norm_k}};
        conv["nodes"] = node_table(surface.y_nodes, cfg.grid);
        write_json_file(ctx.path("convergence.json"), conv);
    }
    ctx.write_run_report();
    std::cout << "Y(0) = " << format_number(surface.y_nodes[0].mean) << " (stderr "
              << format_number(surface.y_nodes[0].std_error) << ", picard "
              << surface.picard_iterations << ")\n";
    return kOk;
}

int run_solve_linear(const CommonArgs& args) {
    RunContext ctx = make_context(args, Subcommand::SolveLinear);
    const ScenarioConfig& cfg = ctx.cfg;

    PathBundle bundle = make_bundle(cfg);
    RegressionSet set(bundle, cfg.basis);
    LinearProblem prob;
    prob.kernel = cfg.linear->kernel;
    prob.coeffs = cfg.linear->coeffs;
    prob.psi = *cfg.psi;
    prob.sign = cfg.linear->sign;
    prob.resolvent_tol = cfg.linear->resolvent_tol;
    LinearSolution sol = solve_linear(prob, bundle, set, cfg.denominator);

    {
        CsvWriter csv(ctx.path("linear.csv"));
        csv.field("t").field("Y_mean_at_x0").field("stderr");
        csv.end_row();
        for (int i = 0; i <= cfg.grid.steps; ++i) {
            csv.field(cfg.grid.node(i)).field(sol.nodes[i].at_x0).field(sol.nodes[i].std_error);
            csv.end_row();
        }
    }
    {
        json coef;
        coef["resolvent_order"] = sol.resolvent_order;
        coef["resolvent_tail"] = sol.resolvent_tail;
        json per_node = json::array();
        for (int i = 0; i <= cfg.grid.steps; ++i) {
            json row;
            row["t"] = cfg.grid.node(i);
            row["numerator"] = sol.numerator_coef[i];
            row["denominator"] = sol.denominator_coef[i];
            per_node.push_back(row);
        }
        coef["nodes"] = per_node;
        write_json_file(ctx.path("coefficients.json"), coef);
    }
    ctx.write_run_report();
    std::cout << "Y(0) = " << format_number(sol.nodes[0].mean) << " (stderr "
              << format_number(sol.nodes[0].std_error) << ")\n";
    return kOk;
}

int run_kernel(const CommonArgs& args) {
    RunContext ctx = make_context(args, Subcommand::Kernel);
    const ScenarioConfig& cfg = ctx.cfg;
    if (!cfg.linear || !cfg.linear->kernel) {
        throw Error("kernel runs need linear.alpha_expr");
    }
    ResolventTable table = resolvent(*cfg.linear->kernel, cfg.grid, cfg.linear->resolvent_tol);
    {
        CsvWriter csv(ctx.path("kernel.csv"));
        csv.field("t").field("r").field("phi").field("n_max").field("tail_bound");
        csv.end_row();
        for (int i = 0; i <= cfg.grid.steps; ++i) {
            for (int j = i; j <= cfg.grid.steps; ++j) {
                csv.field(cfg.grid.node(i)).field(cfg.grid.node(j)).field(table.phi.at(i, j));
                csv.field(static_cast<double>(table.n_max)).field(table.tail_bound);
                csv.end_row();
            }
        }
    }
    ctx.write_run_report({{"n_max", table.n_max}, {"tail_bound", table.tail_bound}});
    std::cout << "resolvent truncated at order " << table.n_max << " (tail bound "
              << format_number(table.tail_bound) << ")\n";
    return kOk;
}

int run_risk(const CommonArgs& args) {
    RunContext ctx = make_context(args, Subcommand::Risk);
    const ScenarioConfig& cfg = ctx.cfg;
    audit_driver(cfg, *cfg.driver);

    PathBundle bundle = make_bundle(cfg);
    auto set = std::make_shared<RegressionSet>(bundle, cfg.basis);
    RiskSpec spec{*cfg.driver, true, *cfg.psi};
    RiskValues values = rho(spec, bundle, set, cfg.solver_options);
    {
        CsvWriter csv(ctx.path("risk.csv"));
        csv.field("t").field("rho").field("stderr");
        csv.end_row();
        for (int i = 0; i <= cfg.grid.steps; ++i) {
            csv.field(cfg.grid.node(i)).field(values.rho[i].mean).field(values.rho[i].std_error);
            csv.end_row();
        }
    }
    ctx.write_run_report();
    std::cout << "rho(0) = " << format_number(values.rho[0].mean) << " (stderr "
              << format_number(values.rho[0].std_error) << ")\n";
    return kOk;
}

int run_axioms(const CommonArgs& args) {
    RunContext ctx = make_context(args, Subcommand::Axioms);
    const ScenarioConfig& cfg = ctx.cfg;
    audit_driver(cfg, *cfg.driver);

    PathBundle bundle = make_bundle(cfg);
    auto set = std::make_shared<RegressionSet>(bundle, cfg.basis);
    RiskSpec spec{*cfg.driver, true, *cfg.psi};
    AxiomInputs inputs;
    inputs.psi1 = cfg.axioms->psi1;
    inputs.psi2 = cfg.axioms->psi2;
    inputs.shift = cfg.axioms->shift;
    inputs.lambdas = cfg.axioms->lambdas;
    inputs.monotonicity_bump = cfg.axioms->mono_bump;
    inputs.past_node = cfg.axioms->past_node;

    RiskReport report = axiom_suite(spec, inputs, bundle, set, cfg.solver_options);
    {
        json j;
        json verdicts = json::array();
        for (const auto& v : report.verdicts) {
            json row;
            row["axiom"] = v.axiom;
            row["verdict"] = v.pass ? "pass" : "fail";
            row["worst_margin"] = v.worst_margin;
            row["node"] = v.node;
            row["stderr"] = v.std_error;
            verdicts.push_back(row);
        }
        j["axioms"] = verdicts;
        j["rho"] = node_table(report.rho_base, cfg.grid);
        write_json_file(ctx.path("axioms.json"), j);
    }
    const bool pass = report.all_pass();
    ctx.write_run_report({{"all_pass", pass}});
    for (const auto& v : report.verdicts) {
        std::cout << (v.pass ? "pass " : "FAIL ") << v.axiom << " (worst margin "
                  << format_number(v.worst_margin) << ")\n";
    }
    return pass ? kOk : kVerdictFailure;
}

int run_compare(const CommonArgs& args) {
    RunContext ctx = make_context(args, Subcommand::Compare);
    const ScenarioConfig& cfg = ctx.cfg;

    ComparisonInstance inst;
    inst.g1 = cfg.compare->driver1;
    inst.g2 = cfg.compare->driver2;
    inst.psi1 = cfg.compare->psi1;
    inst.psi2 = cfg.compare->psi2;
    inst.certificate = cfg.compare->certificate;
    inst.orientation = cfg.compare->orientation;
    inst.validate();
    if (cfg.probe_driver) {
        audit_driver(cfg, inst.g1);
        audit_driver(cfg, inst.g2);
    }

    PathBundle bundle = make_bundle(cfg);
    auto set = std::make_shared<RegressionSet>(bundle, cfg.basis);
    SolutionSurface s1 = solve(inst.g1, inst.psi1, inst.sign(), bundle, set, cfg.solver_options);
    SolutionSurface s2 = solve(inst.g2, inst.psi2, inst.sign(), bundle, set, cfg.solver_options);
    HypothesisReport hypotheses = check_hypotheses(inst, s1, s2, bundle, 1024);
    OrderingVerdict ordering = verify_ordering(s1, s2);

    {
        json j;
        json conds = json::array();
        for (const auto& v : hypotheses.verdicts) {
            json row;
            row["condition"] = v.condition;
            row["verdict"] = v.pass ? "pass" : "fail";
            row["worst_margin"] = v.worst_margin;
            row["worst_point"] = v.worst_point;
            conds.push_back(row);
        }
        j["hypotheses"] = conds;
        json ord;
        ord["verdict"] = ordering.pass ? "pass" : "fail";
        ord["violating_nodes"] = ordering.violating_nodes;
        ord["difference"] = ordering.difference;
        ord["combined_stderr"] = ordering.combined_se;
        j["ordering"] = ord;
        write_json_file(ctx.path("compare.json"), j);
    }
    const bool pass = hypotheses.all_pass() && ordering.pass;
    ctx.write_run_report({{"all_pass", pass}});
    for (const auto& v : hypotheses.verdicts) {
        std::cout << (v.pass ? "pass " : "FAIL ") << v.condition << " (worst margin "
                  << format_number(v.worst_margin) << ")\n";
    }
    std::cout << (ordering.pass ? "pass " : "FAIL ") << "ordering Y1 >= Y2\n";
    return pass ? kOk : kVerdictFailure;
}

int run_semimartingale(const CommonArgs& args) {
    RunContext ctx = make_context(args, Subcommand::Semimartingale);
    const ScenarioConfig& cfg = ctx.cfg;
    const SemimartingaleSpec& spec = *cfg.semimartingale;

    PathBundle bundle = make_bundle(cfg);
    auto set = std::make_shared<RegressionSet>(bundle, cfg.basis);

    IdentityCheck identity;
    std::vector<double> constructed;
    int extrapolations = 0;
    if (spec.type == 1) {
        auto result = type1({spec.f1, spec.f2}, bundle, set);
        identity = result.identity;
        constructed = result.constructed.y;
    } else if (spec.type == 2) {
        auto result = type2(spec.f, bundle, set, spec.x_points);
        identity = result.identity;
        constructed = result.constructed.y;
        extrapolations = result.family.extrapolations;
    } else {
        auto result = type3(spec.f, spec.g3, bundle, set, spec.x_points, 3.0, cfg.solver_options);
        identity = result.identity;
        constructed = result.interpolated.y;
        extrapolations = result.family.extrapolations;
    }

    DecompositionSample sample{&bundle, constructed};
    DecompositionReport decomposition = decomposition_check({&sample, 1}, cfg.basis);
    {
        json j;
        j["type"] = spec.type;
        j["identity_pass"] = identity.pass;
        j["difference"] = identity.difference;
        j["combined_stderr"] = identity.combined_se;
        j["violating_nodes"] = identity.violating_nodes;
        j["extrapolations"] = extrapolations;
        write_json_file(ctx.path("identity.json"), j);
    }
    {
        CsvWriter csv(ctx.path("decomposition.csv"));
        csv.field("N").field("rms_residual").field("drift_component").field("martingale_component");
        csv.end_row();
        csv.field(static_cast<double>(cfg.grid.steps))
            .field(decomposition.rms_residual[0])
            .field(decomposition.drift_component[0])
            .field(decomposition.martingale_component[0]);
        csv.end_row();
    }
    ctx.write_run_report({{"identity_pass", identity.pass}});
    std::cout << (identity.pass ? "pass " : "FAIL ") << "uniqueness identity (type " << spec.type
              << ")\n";
    return identity.pass ? kOk : kVerdictFailure;
}

int run_oracle(const CommonArgs& args) {
    RunContext ctx = make_context(args, Subcommand::Oracle);
    const ScenarioConfig& cfg = ctx.cfg;
    audit_driver(cfg, *cfg.driver);
    OracleResult result =
        nested_mc_oracle(*cfg.driver, *cfg.psi, cfg.sign, cfg.grid, cfg.jumps, cfg.diffusion,
                         cfg.oracle->branching, cfg.oracle->replications, cfg.seed,
                         cfg.solver_options);
    json j;
    j["y0"] = result.y0;
    j["stderr"] = result.std_error;
    j["replications"] = result.replications;
    write_json_file(ctx.path("oracle.json"), j);
    ctx.write_run_report();
    std::cout << "oracle Y(0) = " << format_number(result.y0) << " (stderr "
              << format_number(result.std_error) << ")\n";
    return kOk;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("config", args.config_path, "scenario configuration file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", args.seed, "override mc.seed");
    cmd->add_option("--paths", args.paths, "override mc.n_paths");
    cmd->add_option("--out", args.out, "output directory");
    cmd->add_option("--threads", args.threads, "cap worker threads");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"backward stochastic Volterra equation toolkit"};
    app.require_subcommand(1);

    CommonArgs args;
    int (*handler)(const CommonArgs&) = nullptr;

    auto wire = [&](const char* name, const char* help, int (*fn)(const CommonArgs&)) {
        CLI::App* cmd = app.add_subcommand(name, help);
        add_common(cmd, args);
        cmd->callback([&handler, fn] { handler = fn; });
        return cmd;
    };

    wire("solve", "general nonlinear backward solve", run_solve);
    wire("solve-linear", "closed-formula linear solve", run_solve_linear);
    wire("kernel", "resolvent kernel table", run_kernel);
    wire("risk", "dynamic risk values", run_risk);
    wire("axioms", "risk-measure axiom suite", run_axioms);
    wire("compare", "comparison-theorem verification", run_compare);
    wire("semimartingale", "semimartingale constructions", run_semimartingale);
    wire("oracle", "nested Monte Carlo oracle", run_oracle);

    CLI11_PARSE(app, argc, argv);

    try {
        return handler(args);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kError;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kError;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kError;
    }
}
