#pragma once

#include "sirbif/codim2.hpp"
#include "sirbif/cycles.hpp"
#include "sirbif/odeflow.hpp"

#include <json.hpp>

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sirbif::cli {

using json = nlohmann::json;
using model::ParamId;
using model::Params;

/// Disease-free threshold in gamma (R0 = 1 at the reference rates) and the
/// rho at which the fold curve meets I = 0 there; lower corner of the default
/// diagram window.
inline constexpr double gamma0 = 4969.0 / 31000.0;
inline constexpr double rho0 = 29791.0 / 1e8;

/// Invalid configuration or command line (exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    Params params;
    std::optional<std::string> preset;
    std::string name;  // output file stem; empty selects a per-command default
    std::string out_dir;
    std::optional<ParamId> active;
    std::optional<std::pair<double, double>> range;  // sweep: from first to second
    std::pair<double, double> gamma_window{gamma0, 0.42};
    std::pair<double, double> rho_window{rho0, 0.27};
    odeflow::Window portrait_window;
    std::size_t nx = 24, ny = 24;
    double budget = 10000.0;
    unsigned threads = 0;
    int cycle_slices = 24;  // frozen-parameter slices per axis for HOM/LPC samples
    double newton_tol = 1e-10;
    double h0 = 1e-3;
    double hmax = 1e-2;
    double integrator_rel = 1e-9;
    double integrator_abs = 1e-9;
    double shooting_tol = 1e-9;
    std::vector<std::pair<double, double>> seeds;  // (gamma, rho)
};

/// The published configuration schema (draft-07 subset).
const json& config_schema();

/// Checks a document against a schema using the keywords type, enum,
/// properties, required, additionalProperties, items, minItems, maxItems,
/// minimum, maximum, exclusiveMinimum, exclusiveMaximum and minLength.
/// Returns one message per violation, each prefixed with its JSON pointer.
std::vector<std::string> validate_schema(const json& doc, const json& schema);

/// Validates against config_schema and builds a RunConfig. Precedence:
/// built-in defaults, then the preset, then explicit keys. Throws ConfigError.
RunConfig load_config(const json& doc);

/// Output directory when the config gives none: $SIRBIF_OUT_DIR, else "out".
std::string default_out_dir();

struct ExpectedScenario {
    int endemic = 0;
    std::vector<cycles::CycleStability> cycles;  // inner to outer
    bool homoclinic = false;
    std::vector<std::string> attractors;  // sorted: "cycle", "e0", "e1"
};

struct Preset {
    std::string id;
    double gamma = 0.0;
    double rho = 0.0;
    ExpectedScenario expected;
    std::string summary;
    odeflow::Window window;
};

const std::vector<Preset>& presets();
const Preset& find_preset(const std::string& id);  // throws ConfigError

struct ScenarioSummary {
    std::vector<model::EquilibriumPoint> endemic;
    model::EquilibriumPoint disease_free;
    cycles::CycleCensus census;
    std::vector<std::string> attractors;  // from equilibrium and cycle stability
};

ScenarioSummary summarize_scenario(const Params& p, const cycles::CensusOptions& opt = {});
/// Empty when the summary matches; otherwise the mismatching fields.
std::string compare_scenario(const ScenarioSummary& s, const ExpectedScenario& e);

struct SweepEvent {
    double value = 0.0;  // active parameter
    contin::SpecialPoint point;
};

struct SweepResult {
    ParamId active = ParamId::Rho;
    double frozen = 0.0;
    std::pair<double, double> range;
    std::vector<SweepEvent> events;  // strictly monotone from range.first to range.second
    std::vector<contin::Branch> equilibria;
    std::vector<cycles::CycleBranch> cycles;
    std::vector<std::string> warnings;
};

/// Equilibrium continuation over the range, Hopf-born cycle continuation from
/// each HB, and the LP/BP/HB/LPC/HOM events ordered along the sweep.
SweepResult run_sweep(const Params& p, ParamId active, std::pair<double, double> range, const RunConfig& cfg = {});

struct MarkedPoint {
    std::string label;  // BT1, BT2, GH1, ...
    contin::SpecialPoint point;
};

struct DiagramResult {
    std::optional<codim2::Codim2Curve> fold, hopf;
    std::vector<contin::SpecialPoint> homoclinic, lpc;  // sampled on parameter slices
    std::vector<MarkedPoint> markers;
    std::vector<std::string> failures;
};

DiagramResult compute_diagram(const RunConfig& cfg);

/// Commands: each writes its files under cfg.out_dir and returns the report.
json cmd_equilibria(const RunConfig& cfg);
json cmd_diagram(const RunConfig& cfg);
json cmd_portrait(const RunConfig& cfg);
json cmd_sweep(const RunConfig& cfg);
json presets_json();

/// Full command-line entry point; returns the process exit code: 0, 2 for
/// configuration errors, 3 for solver or output failures.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Formatting shared by all outputs: 9 significant digits.
std::string fmt9(double v);
/// Writes through a temporary file in the same directory and renames it.
void write_atomic(const std::string& path, const std::string& content);

}  // namespace sirbif::cli
