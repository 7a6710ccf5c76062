// scenario.hpp — batch front end: scenario configuration, dispatch to the
// simulation modules, and CSV/JSON persistence.  Result files embed the full
// config that produced them and are byte-stable for identical inputs.

#pragma once

#include "cpt/system.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cpt {

using Json = nlohmann::ordered_json;

enum class ScenarioKind { spectrum, evolve, contrast, reciprocity, sweep, mc, figure_preset };
enum class OutputFormat { csv, json };

std::string to_string(ScenarioKind kind);
std::string to_string(OutputFormat format);

/// Config error carrying the offending field path (e.g. "sweep.parameter").
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& message)
        : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

struct TimeGrid {
    double t_final = 8.0;
    double dt_out = 0.01;
};

struct SweepSpec {
    std::string parameter;        // j_over_kappa | e_over_kappa | delta_over_kappa
    std::vector<double> values;
};

struct OutputSpec {
    std::string path;
    OutputFormat format = OutputFormat::csv;
};

struct McSpec {
    int n_traj = 2000;
    double dt = 1e-3;
    int record_stride = 20;
};

struct SaturationSpec {
    double i_sat = 0.0;  // 0 disables the diagnostic
    double threshold = 0.1;
};

struct ScenarioConfig {
    SystemParams system{.n_pairs = 3, .kappa = 1.0};
    ScenarioKind scenario = ScenarioKind::spectrum;
    std::string preset;  // fig2 | fig3 | fig4 | fig5a | fig5b | fig6
    TimeGrid time_grid{};
    std::optional<SweepSpec> sweep;
    OutputSpec output{};
    std::optional<std::uint64_t> seed;
    int contrast_site_i = 0;
    int contrast_site_j = 1;
    int recip_site_fwd = 0;
    int recip_site_bwd = -1;  // -1 resolves to the last loss site (N-1)
    McSpec mc{};
    std::vector<double> snapshot_times = {10.0, 20.0};
    SaturationSpec saturation{};
    double spectrum_tol = 0.0;  // 0 resolves to 1e-8 * max(kappa, J)
    int threads = 0;            // 0 = hardware concurrency

    void validate() const;  // throws ConfigError
};

Json config_to_json(const ScenarioConfig& config);
/// Strict parse: unknown keys raise ConfigError naming the key.
ScenarioConfig config_from_json(const Json& j);

/// Default configuration for a named figure preset (fig2..fig6).
ScenarioConfig preset_config(const std::string& name);

struct ScenarioResult {
    Json config;                            // full echo of the producing config
    std::vector<std::string> column_names;
    std::vector<std::vector<double>> columns;  // NaN marks an undefined cell
    Json metadata;                          // regime, exceptional points, version, notes
    double wall_time_seconds = 0.0;         // informational; kept out of emitted files
};

ScenarioResult run_scenario(const ScenarioConfig& config);

/// CSV: '#' comment lines with version/config/metadata, then a header row and
/// one row per point, floats with 12 significant digits, undefined cells empty.
std::string to_csv(const ScenarioResult& result);
/// JSON: single document {config, columns, metadata}; undefined cells null.
std::string to_json_text(const ScenarioResult& result);

/// Writes the result to output.path in the requested format.
void emit(const ScenarioResult& result, const OutputSpec& output);

}  // namespace cpt
