#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "skygrid/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"skygrid: effective population size trajectories from dated genealogies"};
  app.require_subcommand(1);

  skygrid::CommandOptions options;
  std::uint64_t seed = 0;
  std::string out;
  std::vector<std::string> traces;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", options.config, "run configuration file")->required();
    sub->add_option("--seed", seed, "override the configured seed");
    sub->add_option("--out", out, "output directory");
  };
  auto* infer = app.add_subcommand("infer", "run MCMC on genealogies (and covariates)");
  auto* simulate = app.add_subcommand("simulate", "simulate genealogies, covariates and a truth file");
  auto* summarize = app.add_subcommand("summarize", "merge traces and write summaries");
  add_common(infer);
  add_common(simulate);
  add_common(summarize);
  summarize->add_option("traces", traces, "additional trace CSV files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : skygrid::kExitConfig;
  }

  auto* sub = app.get_subcommands().front();
  if (sub->count("--seed")) options.seed = seed;
  if (!out.empty()) options.out = out;
  for (const auto& t : traces) options.traces.emplace_back(t);
  return skygrid::run_command(sub->get_name(), options);
}
