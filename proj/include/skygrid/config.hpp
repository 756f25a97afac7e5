#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "skygrid/genealogy.hpp"
#include "skygrid/prior_glm.hpp"
#include "skygrid/sampler.hpp"
#include "skygrid/simulator.hpp"

namespace skygrid {

enum class GridMode { kUniform, kCovariates };

struct SimulateSettings {
  int replicates = 1;
  int loci = 1;
  std::vector<SamplingEvent> schedule;
  std::size_t grid_points = 0;
  double cutoff = 0.0;
  /// GMRF noise precision; +inf (the default) means no noise.
  double tau = std::numeric_limits<double>::infinity();
  std::vector<double> beta;
  std::vector<double> log_sizes;
  double level = 0.0;
  double increment_sd = 1.0;
  /// Trailing covariate rows written as missing.
  int missing_tail = 0;
  /// Chain settings written into each replicate's inference config.
  std::uint64_t infer_iterations = 20000;
  std::uint64_t infer_thinning = 10;
};

/// Parsed run configuration. Relative paths are resolved against the
/// directory of the config file.
struct RunConfig {
  std::string text;
  std::filesystem::path base_dir;

  // [input]
  std::vector<std::filesystem::path> trees;
  std::optional<std::filesystem::path> tip_dates;
  DateConvention date_convention = DateConvention::kBackward;
  std::optional<char> tip_date_delimiter;
  std::optional<double> most_recent_date;
  std::optional<std::filesystem::path> covariates;

  // [grid]
  GridMode grid_mode = GridMode::kUniform;
  std::size_t grid_points = 0;
  double cutoff = 0.0;

  // [covariates] and [transforms]
  CovariateOptions covariate_options;
  MissingPolicy missing_policy = MissingPolicy::kRandomWalk;
  bool glm = true;

  // [prior]
  HyperParams hyper;
  double beta_mean = 0.0;
  double beta_variance = 100.0;

  // [mcmc]
  ChainConfig chain;
  int chains = 1;
  double burnin = 0.1;

  // [output]
  std::filesystem::path out_dir = ".";
  std::optional<double> calendar_anchor;
  bool log10_column = false;

  // [simulate]
  SimulateSettings simulate;

  // [summarize]
  std::vector<std::filesystem::path> summarize_traces;
  std::optional<std::filesystem::path> summarize_manifest;

  /// Stable hash of the config text and any overrides.
  std::string fingerprint(std::optional<std::uint64_t> seed_override = std::nullopt) const;
};

/// Parses INI-style text with sections. Unknown sections or keys are rejected.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".");
RunConfig load_config(const std::filesystem::path& path);

}  // namespace skygrid
