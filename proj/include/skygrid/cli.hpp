#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "skygrid/coalescent.hpp"
#include "skygrid/config.hpp"
#include "skygrid/genealogy.hpp"
#include "skygrid/prior_glm.hpp"
#include "skygrid/summary.hpp"

namespace skygrid {

/// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumerical = 4,
};

struct CommandOptions {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  /// Extra trace files for `summarize`, in addition to the config's list.
  std::vector<std::filesystem::path> traces;
};

/// Genealogies, grid and covariates assembled from a config.
struct InferenceInputs {
  std::vector<Genealogy> trees;
  GridSpec grid{{1.0}};
  CovariateMatrix covariates;
};

InferenceInputs load_inference_inputs(const RunConfig& config);

/// Writes trajectory_summary.csv, effect_sizes.csv, diagnostics.csv and
/// plot_data.csv. `manifest` supplies the time axis and covariate overlays;
/// without it only interval indices are reported.
void write_summaries(const std::vector<TraceTable>& traces, const nlohmann::json* manifest,
                     const std::filesystem::path& out_dir, double burnin, bool log10_column);

// These throw ConfigError / DataError / NumericalError on failure.
void cmd_infer(const RunConfig& config);
void cmd_simulate(const RunConfig& config);
void cmd_summarize(const RunConfig& config, const std::vector<std::filesystem::path>& extra_traces = {});

/// Loads the config, applies overrides, runs the subcommand and maps failures
/// to exit codes, printing a JSON error record to stderr (and error.json in the
/// output directory when one is known).
int run_command(const std::string& name, const CommandOptions& options);

}  // namespace skygrid
