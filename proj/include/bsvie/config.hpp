#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bsvie/comparison.hpp"
#include "bsvie/linear.hpp"
#include "bsvie/risk.hpp"
#include "bsvie/semimartingale.hpp"
#include "bsvie/solver.hpp"

namespace bsvie {

/// Parsed structured-text value tree: sections of key = value pairs and
/// nested sections; values are numbers, quoted strings, booleans or flat
/// lists thereof.
struct ConfigEntry {
    enum class Kind { Number, String, Bool, List, Section };
    Kind kind = Kind::Section;
    double number = 0.0;
    std::string text;
    bool flag = false;
    std::vector<ConfigEntry> list;
    std::vector<std::pair<std::string, ConfigEntry>> children;
    int line = 0;

    const ConfigEntry* find(const std::string& key) const {
        for (const auto& [k, v] : children) {
            if (k == key) {
                return &v;
            }
        }
        return nullptr;
    }
};

/// Parses the scenario text; throws ConfigError on malformed syntax.
ConfigEntry parse_config_text(const std::string& text);

enum class Subcommand { Solve, SolveLinear, Kernel, Risk, Axioms, Compare, Semimartingale, Oracle };

const char* subcommand_name(Subcommand cmd);

struct LinearSpec {
    std::optional<VolterraKernel> kernel;
    GirsanovCoefficients coeffs;
    int sign = 1;
    double resolvent_tol = 1e-8;
};

struct AxiomsSpec {
    TerminalProcess psi1, psi2;
    double shift = 1.0;
    std::vector<double> lambdas = {0.25, 0.5, 0.75};
    dsl::Expression mono_bump;
    int past_node = -1;
};

struct CompareSpec {
    Orientation orientation = Orientation::YIndependent;
    Driver driver1, driver2;
    TerminalProcess psi1, psi2;
    GirsanovCoefficients certificate;
};

struct SemimartingaleSpec {
    int type = 1;
    dsl::Expression f1, f2; // type 1
    dsl::Expression f;      // types 2, 3
    dsl::Expression g3;     // type 3
    int x_points = 21;
};

struct OracleSpec {
    int branching = 32;
    int replications = 64;
};

/// Fully validated scenario: schema violations are collected exhaustively
/// and reported in one ConfigError.
struct ScenarioConfig {
    int schema_version = 1;
    TimeGrid grid;
    JumpModel jumps;
    DiffusionModel diffusion;
    int n_paths = 1000;
    std::uint64_t seed = 1;

    std::optional<Driver> driver;
    std::optional<LinearSpec> linear;
    std::optional<TerminalProcess> psi;

    PolynomialBasis basis;
    SolverOptions solver_options;
    DenominatorMode denominator = DenominatorMode::Regressed;
    int sign = 1;
    bool probe_driver = true;

    std::optional<AxiomsSpec> axioms;
    std::optional<CompareSpec> compare;
    std::optional<SemimartingaleSpec> semimartingale;
    std::optional<OracleSpec> oracle;

    std::string out_dir;
    std::string config_hash;
};

ScenarioConfig load_scenario(const std::string& text, Subcommand cmd);
ScenarioConfig load_scenario_file(const std::string& path, Subcommand cmd);

/// FNV-1a hash of the raw configuration bytes, hex-encoded.
std::string config_hash_hex(const std::string& text);

} // namespace bsvie
