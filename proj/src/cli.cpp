#include "skygrid/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <iostream>
#include <sstream>

#include "skygrid/io_util.hpp"
#include "skygrid/sampler.hpp"
#include "skygrid/simulator.hpp"

namespace skygrid {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string padded(int value) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d", value);
  return buf;
}

// Finite doubles as numbers; anything else as null.
json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

TipDateOptions tip_date_options(const RunConfig& config, const std::vector<std::string>& tree_texts) {
  TipDateOptions dates;
  dates.convention = config.date_convention;
  dates.label_delimiter = config.tip_date_delimiter;
  if (config.tip_dates) dates.table = read_tip_date_table(config.tip_dates->string());
  if (config.date_convention == DateConvention::kCalendar) {
    if (config.most_recent_date) {
      dates.anchor = config.most_recent_date;
    } else {
      // Loci share one time axis: anchor at the most recent date over all trees.
      std::optional<double> anchor;
      for (const auto& text : tree_texts) {
        for (double d : declared_tip_dates(text, dates)) anchor = anchor ? std::max(*anchor, d) : d;
      }
      if (!anchor) throw ConfigError("calendar dates requested but no tip dates were found");
      dates.anchor = anchor;
    }
  }
  return dates;
}

}  // namespace

InferenceInputs load_inference_inputs(const RunConfig& config) {
  if (config.trees.empty()) throw ConfigError("config [input] trees: at least one tree file is required");
  std::vector<std::string> texts;
  for (const auto& p : config.trees) texts.push_back(read_text_file(p.string()));
  const auto dates = tip_date_options(config, texts);

  InferenceInputs in;
  for (std::size_t f = 0; f < texts.size(); ++f) {
    const std::string prefix = config.trees[f].stem().string() + ":locus";
    for (auto& g : parse_genealogies(texts[f], dates, prefix)) in.trees.push_back(std::move(g));
  }

  std::optional<CovariateTable> table;
  if (config.covariates) table = read_covariate_csv(config.covariates->string());

  if (config.grid_mode == GridMode::kCovariates) {
    if (!table) throw ConfigError("config [grid] mode = covariates requires [input] covariates");
    if (table->times.size() < 2) throw DataError("covariates: need at least two rows to define a grid");
    std::vector<double> points(table->times.begin(), table->times.end() - 1);
    in.grid = GridSpec(std::move(points));
  } else {
    if (config.grid_points == 0 || !(config.cutoff > 0.0)) {
      throw ConfigError("config [grid]: uniform grids need points >= 1 and cutoff > 0");
    }
    in.grid = GridSpec::uniform(config.grid_points, config.cutoff);
  }

  const auto intervals = static_cast<Eigen::Index>(in.grid.num_intervals());
  if (table) {
    if (table->values.rows() != intervals) {
      throw DataError("covariates: " + std::to_string(table->values.rows()) + " rows but the grid has " +
                      std::to_string(intervals) + " intervals");
    }
    in.covariates = CovariateMatrix::prepare(*table, config.covariate_options);
  } else {
    if (config.covariate_options.intercept) {
      throw ConfigError("config [covariates] intercept requires a covariate file");
    }
    in.covariates = CovariateMatrix::none(intervals);
  }
  return in;
}

namespace {

json kernel_json(const KernelCounters& k) {
  return {{"attempts", k.attempts},
          {"accepts", k.accepts},
          {"failures", k.failures},
          {"rate", k.attempts ? static_cast<double>(k.accepts) / static_cast<double>(k.attempts) : 0.0}};
}

std::string csv_join(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    out += fields[i];
  }
  out.push_back('\n');
  return out;
}

std::vector<std::vector<double>> chains_of(const std::vector<TraceTable>& traces, const std::string& column) {
  std::vector<std::vector<double>> out;
  for (const auto& t : traces) out.push_back(t.column(column));
  return out;
}

}  // namespace

void write_summaries(const std::vector<TraceTable>& traces, const json* manifest, const fs::path& out_dir,
                     double burnin, bool log10_column) {
  if (traces.empty()) throw DataError("summarize: at least one trace is required");
  for (const auto& t : traces) {
    if (t.header != traces.front().header) throw DataError("summarize: incompatible trace headers");
  }
  std::vector<TraceTable> kept;
  for (const auto& t : traces) kept.push_back(t.after_burnin(burnin));
  if (std::all_of(kept.begin(), kept.end(), [](const auto& t) { return t.rows.empty(); })) {
    throw DataError("summarize: no samples remain after burn-in");
  }
  kept.erase(std::remove_if(kept.begin(), kept.end(), [](const auto& t) { return t.rows.empty(); }), kept.end());
  ensure_dir(out_dir);

  const auto& header = kept.front().header;
  std::vector<std::string> gamma_cols;
  std::vector<std::string> beta_cols;
  for (const auto& h : header) {
    if (h.rfind("state.gamma.", 0) == 0) gamma_cols.push_back(h);
    if (h.rfind("state.beta.", 0) == 0) beta_cols.push_back(h);
  }

  std::vector<double> grid;
  std::optional<double> anchor;
  double horizon = 0.0;
  if (manifest) {
    grid = manifest->at("grid").get<std::vector<double>>();
    if (manifest->contains("calendar_anchor") && !manifest->at("calendar_anchor").is_null()) {
      anchor = manifest->at("calendar_anchor").get<double>();
    }
    horizon = manifest->value("data_horizon", 0.0);
    if (grid.size() + 1 != gamma_cols.size()) throw DataError("summarize: manifest grid does not match trace");
  }
  auto start_of = [&](std::size_t k) { return k == 0 ? 0.0 : grid[k - 1]; };
  auto end_of = [&](std::size_t k) {
    if (k < grid.size()) return grid[k];
    return std::max(grid.back(), horizon);
  };

  // Trajectory.
  std::vector<ColumnSummary> gamma_summaries;
  {
    std::vector<std::string> h{"interval"};
    if (manifest) {
      h.insert(h.end(), {"time_start", "time_end"});
      if (anchor) h.insert(h.end(), {"year_start", "year_end"});
    }
    h.insert(h.end(), {"mean", "median", "lower", "upper", "sd", "ess", "rhat"});
    if (log10_column) h.insert(h.end(), {"mean_log10", "lower_log10", "upper_log10"});
    std::string out = csv_join(h);
    for (std::size_t k = 0; k < gamma_cols.size(); ++k) {
      const auto s = summarize_column(chains_of(kept, gamma_cols[k]));
      gamma_summaries.push_back(s);
      std::vector<std::string> row{std::to_string(k + 1)};
      if (manifest) {
        row.push_back(format_double(start_of(k)));
        row.push_back(k < grid.size() ? format_double(end_of(k)) : "inf");
        if (anchor) {
          row.push_back(format_double(*anchor - start_of(k)));
          row.push_back(k < grid.size() ? format_double(*anchor - end_of(k)) : "-inf");
        }
      }
      for (double v : {s.mean, s.median, s.lower, s.upper, s.sd, s.ess, s.rhat}) row.push_back(format_double(v));
      if (log10_column) {
        for (double v : {s.mean, s.lower, s.upper}) row.push_back(format_double(v / std::log(10.0)));
      }
      out += csv_join(row);
    }
    write_text_file((out_dir / "trajectory_summary.csv").string(), out);
  }

  // Effect sizes.
  {
    std::string out = csv_join({"covariate", "mean", "median", "lower", "upper", "sd", "ess", "rhat"});
    for (const auto& col : beta_cols) {
      const auto s = summarize_column(chains_of(kept, col));
      std::vector<std::string> row{col.substr(std::string("state.beta.").size())};
      for (double v : {s.mean, s.median, s.lower, s.upper, s.sd, s.ess, s.rhat}) row.push_back(format_double(v));
      out += csv_join(row);
    }
    write_text_file((out_dir / "effect_sizes.csv").string(), out);
  }

  // Convergence diagnostics for every sampled quantity.
  {
    std::string out = csv_join({"parameter", "mean", "ess", "rhat"});
    for (const auto& col : header) {
      if (col == "iteration") continue;
      const auto s = summarize_column(chains_of(kept, col));
      out += csv_join({col, format_double(s.mean), format_double(s.ess), format_double(s.rhat)});
    }
    write_text_file((out_dir / "diagnostics.csv").string(), out);
  }

  // Step-function plot data with covariate overlays.
  {
    std::vector<std::string> labels;
    std::vector<std::vector<json>> values;
    if (manifest && manifest->contains("covariates")) {
      const auto& cov = manifest->at("covariates");
      labels = cov.at("labels").get<std::vector<std::string>>();
      for (const auto& row : cov.at("values")) values.push_back(row.get<std::vector<json>>());
    }
    std::vector<std::string> h{"interval", "time"};
    if (anchor) h.push_back("year");
    h.insert(h.end(), {"mean", "lower", "upper"});
    for (const auto& l : labels) h.push_back("covariate." + l);
    std::string out = csv_join(h);
    for (std::size_t k = 0; k < gamma_summaries.size(); ++k) {
      const auto& s = gamma_summaries[k];
      const std::vector<double> times =
          manifest ? std::vector<double>{start_of(k), end_of(k)} : std::vector<double>{double(k), double(k + 1)};
      for (double t : times) {
        std::vector<std::string> row{std::to_string(k + 1), format_double(t)};
        if (anchor) row.push_back(format_double(*anchor - t));
        for (double v : {s.mean, s.lower, s.upper}) row.push_back(format_double(v));
        for (std::size_t j = 0; j < labels.size(); ++j) {
          const auto& cell = k < values.size() ? values[k][j] : json(nullptr);
          row.push_back(cell.is_null() ? "" : format_double(cell.get<double>()));
        }
        out += csv_join(row);
      }
    }
    write_text_file((out_dir / "plot_data.csv").string(), out);
  }
}

void cmd_infer(const RunConfig& config) {
  const auto inputs = load_inference_inputs(config);
  std::vector<EventTimeline> timelines;
  double horizon = 0.0;
  for (const auto& g : inputs.trees) {
    timelines.push_back(event_timeline(g));
    horizon = std::max(horizon, g.root_time());
  }
  auto stats = compute_sufficient_statistics(timelines, inputs.grid);
  const Eigen::Index p = inputs.covariates.cols();
  BetaPrior beta_prior{Eigen::VectorXd::Constant(p, config.beta_mean), Eigen::VectorXd::Constant(p, config.beta_variance)};
  Model model = Model::make(std::move(stats), inputs.covariates, config.hyper, beta_prior);
  model.missing_policy = config.missing_policy;
  model.glm_enabled = config.glm;
  model.validate();

  // Chains run concurrently on isolated streams.
  std::vector<std::future<Trace>> futures;
  for (int c = 0; c < config.chains; ++c) {
    ChainConfig cc = config.chain;
    cc.stream = static_cast<std::uint64_t>(c);
    futures.push_back(std::async(std::launch::async, [cc, &model] { return run_chain(cc, model); }));
  }
  std::vector<Trace> traces;
  for (auto& f : futures) traces.push_back(f.get());

  ensure_dir(config.out_dir);
  const std::vector<std::string> beta_labels = model.uses_glm() ? model.covariates.labels() : std::vector<std::string>{};
  const std::string fingerprint = config.fingerprint();

  json manifest;
  manifest["tool"] = "skygrid";
  manifest["seed"] = config.chain.seed;
  manifest["config_hash"] = fingerprint;
  manifest["iterations"] = config.chain.iterations;
  manifest["thinning"] = config.chain.thinning;
  manifest["burnin"] = config.burnin;
  manifest["grid"] = inputs.grid.points();
  manifest["intervals"] = inputs.grid.num_intervals();
  manifest["loci"] = inputs.trees.size();
  manifest["data_horizon"] = horizon;
  manifest["calendar_anchor"] = config.calendar_anchor ? json(*config.calendar_anchor) : json(nullptr);
  manifest["glm"] = model.uses_glm();
  if (p > 0) {
    json cov;
    cov["labels"] = inputs.covariates.labels();
    std::vector<std::string> transforms;
    for (auto t : inputs.covariates.transforms()) transforms.push_back(transform_name(t));
    cov["transforms"] = transforms;
    json rows = json::array();
    for (Eigen::Index i = 0; i < inputs.covariates.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index j = 0; j < p; ++j) row.push_back(number_or_null(inputs.covariates.observed()(i, j)));
      rows.push_back(row);
    }
    cov["values"] = rows;
    manifest["covariates"] = cov;
  }

  std::vector<TraceTable> tables;
  json chain_records = json::array();
  for (std::size_t c = 0; c < traces.size(); ++c) {
    const std::string name = "trace_chain" + std::to_string(c + 1) + ".csv";
    const std::string csv = format_trace_csv(traces[c], beta_labels);
    write_text_file((config.out_dir / name).string(), csv);
    tables.push_back(parse_trace_csv(csv, name));
    chain_records.push_back({{"trace", name},
                             {"stream", traces[c].stream},
                             {"samples", traces[c].samples.size()},
                             {"block", kernel_json(traces[c].block)},
                             {"beta", kernel_json(traces[c].beta)},
                             {"covariates", kernel_json(traces[c].covariates)}});
  }
  manifest["chains"] = chain_records;
  write_text_file((config.out_dir / "manifest.json").string(), manifest.dump(2) + "\n");

  if (config.chain.iterations / config.chain.thinning > 0) {
    write_summaries(tables, &manifest, config.out_dir, config.burnin, config.log10_column);
  }
}

void cmd_simulate(const RunConfig& config) {
  const auto& s = config.simulate;
  if (s.grid_points == 0 || !(s.cutoff > 0.0)) {
    throw ConfigError("config [simulate]: grid_points >= 1 and cutoff > 0 are required");
  }
  if (s.schedule.empty()) throw ConfigError("config [simulate] sampling: at least one time:count pair required");
  if (s.replicates < 1) throw ConfigError("config [simulate] replicates: must be at least 1");
  const GridSpec grid = GridSpec::uniform(s.grid_points, s.cutoff);
  const auto intervals = static_cast<Eigen::Index>(grid.num_intervals());
  if (!s.log_sizes.empty() && static_cast<Eigen::Index>(s.log_sizes.size()) != intervals) {
    throw ConfigError("config [simulate] log_sizes: need one value per grid interval");
  }
  if (!s.beta.empty() && !s.log_sizes.empty()) {
    throw ConfigError("config [simulate]: give either beta (generative recipe) or log_sizes, not both");
  }
  if (s.missing_tail < 0 || s.missing_tail >= intervals) {
    throw ConfigError("config [simulate] missing_tail: must leave at least one observed row");
  }
  ensure_dir(config.out_dir);

  for (int r = 1; r <= s.replicates; ++r) {
    Rng traj_rng = make_rng(config.chain.seed, 2 * static_cast<std::uint64_t>(r));
    Eigen::VectorXd log_sizes;
    Eigen::VectorXd noise = Eigen::VectorXd::Zero(intervals);
    std::optional<CovariateMatrix> covariates;
    if (!s.beta.empty()) {
      const Eigen::VectorXd beta = Eigen::Map<const Eigen::VectorXd>(s.beta.data(), static_cast<Eigen::Index>(s.beta.size()));
      auto sim = simulate_trajectory_and_covariates(grid, beta, s.tau, traj_rng, s.level, s.increment_sd);
      log_sizes = sim.log_sizes;
      noise = sim.noise;
      covariates = sim.covariates;
    } else if (!s.log_sizes.empty()) {
      log_sizes = Eigen::Map<const Eigen::VectorXd>(s.log_sizes.data(), intervals);
    } else {
      if (std::isfinite(s.tau)) {
        std::normal_distribution<double> normal;
        for (Eigen::Index i = 1; i < intervals; ++i) noise[i] = noise[i - 1] + normal(traj_rng) / std::sqrt(s.tau);
      }
      log_sizes = noise.array() + s.level;
    }

    SimulationPlan plan;
    plan.schedule = s.schedule;
    plan.grid = grid;
    plan.log_sizes = log_sizes;
    plan.loci = s.loci;
    plan.replicates = s.replicates;
    plan.seed = config.chain.seed;
    // Tree streams are odd, trajectory streams even.
    Rng tree_rng = make_rng(config.chain.seed, 2 * static_cast<std::uint64_t>(r) + 1);
    plan.validate();

    const fs::path dir = config.out_dir / ("replicate_" + padded(r));
    ensure_dir(dir);
    std::string trees;
    std::string dates = "# tip_id\tbackward_time\n";
    for (int l = 1; l <= s.loci; ++l) {
      const auto g = simulate_genealogy(plan.schedule, grid, log_sizes, tree_rng,
                                        "L" + std::to_string(l) + "_t", "locus" + std::to_string(l));
      trees += emit_newick(g) + "\n";
      for (const auto& nd : g.nodes()) {
        if (nd.is_tip()) dates += nd.label + "\t" + format_double(nd.time) + "\n";
      }
    }
    write_text_file((dir / "trees.nwk").string(), trees);
    write_text_file((dir / "tip_dates.tsv").string(), dates);

    json truth;
    truth["replicate"] = r;
    truth["seed"] = config.chain.seed;
    truth["grid"] = grid.points();
    truth["log_sizes"] = std::vector<double>(log_sizes.data(), log_sizes.data() + log_sizes.size());
    truth["noise"] = std::vector<double>(noise.data(), noise.data() + noise.size());
    truth["beta"] = s.beta;
    truth["tau"] = number_or_null(s.tau);
    truth["level"] = s.level;

    std::ostringstream ini;
    ini << "# generated by skygrid simulate\n[input]\ntrees = trees.nwk\ntip_dates = tip_dates.tsv\n"
        << "date_format = backward\n";
    if (covariates) {
      const auto& z = covariates->observed();
      std::string csv = "time";
      for (const auto& l : covariates->labels()) csv += "," + l;
      csv += "\n";
      const double spacing = s.grid_points > 1 ? grid.points()[1] - grid.points()[0] : grid.points()[0];
      json zrows = json::array();
      for (Eigen::Index i = 0; i < intervals; ++i) {
        const double t = i < intervals - 1 ? grid.points()[static_cast<std::size_t>(i)] : grid.points().back() + spacing;
        csv += format_double(t);
        json zrow = json::array();
        for (Eigen::Index j = 0; j < z.cols(); ++j) {
          const bool hide = i >= intervals - s.missing_tail;
          csv += "," + (hide ? std::string() : format_double(z(i, j)));
          zrow.push_back(z(i, j));
        }
        csv += "\n";
        zrows.push_back(zrow);
      }
      write_text_file((dir / "covariates.csv").string(), csv);
      truth["covariates"] = {{"labels", covariates->labels()}, {"values", zrows}};
      ini << "covariates = covariates.csv\n[grid]\nmode = covariates\n";
    } else {
      ini << "[grid]\nmode = uniform\npoints = " << s.grid_points << "\ncutoff = " << format_double(s.cutoff) << "\n";
    }
    ini << "[mcmc]\niterations = " << s.infer_iterations << "\nthinning = " << s.infer_thinning
        << "\nseed = " << config.chain.seed + static_cast<std::uint64_t>(r) << "\n[output]\ndir = inference\n";
    write_text_file((dir / "truth.json").string(), truth.dump(2) + "\n");
    write_text_file((dir / "infer.ini").string(), ini.str());
  }
}

void cmd_summarize(const RunConfig& config, const std::vector<fs::path>& extra_traces) {
  std::vector<fs::path> paths = config.summarize_traces;
  paths.insert(paths.end(), extra_traces.begin(), extra_traces.end());
  if (paths.empty()) throw ConfigError("summarize: no trace files given");
  std::vector<TraceTable> traces;
  for (const auto& p : paths) traces.push_back(read_trace_csv(p.string()));

  std::optional<json> manifest;
  fs::path manifest_path = config.summarize_manifest.value_or(paths.front().parent_path() / "manifest.json");
  if (config.summarize_manifest || fs::exists(manifest_path)) {
    try {
      manifest = json::parse(read_text_file(manifest_path.string()));
    } catch (const json::exception& e) {
      throw DataError("summarize: cannot read manifest '" + manifest_path.string() + "': " + e.what());
    }
  }
  write_summaries(traces, manifest ? &*manifest : nullptr, config.out_dir, config.burnin, config.log10_column);
}

int run_command(const std::string& name, const CommandOptions& options) {
  std::optional<fs::path> out = options.out;
  auto report = [&](int code, const std::string& kind, const std::string& message) {
    json record = {{"error", {{"command", name}, {"kind", kind}, {"message", message}, {"exit_code", code}}}};
    std::cerr << record.dump() << std::endl;
    if (out) {
      std::error_code ec;
      fs::create_directories(*out, ec);
      if (!ec) {
        try {
          write_text_file((*out / "error.json").string(), record.dump(2) + "\n");
        } catch (const std::exception&) {
        }
      }
    }
    return code;
  };
  try {
    RunConfig config = load_config(options.config);
    if (options.seed) config.chain.seed = *options.seed;
    if (options.out) config.out_dir = *options.out;
    out = config.out_dir;
    if (options.seed) config.text += "\nseed-override=" + std::to_string(*options.seed);
    if (name == "infer") cmd_infer(config);
    else if (name == "simulate") cmd_simulate(config);
    else if (name == "summarize") cmd_summarize(config, options.traces);
    else throw ConfigError("unknown command '" + name + "'");
    return kExitOk;
  } catch (const ConfigError& e) {
    return report(kExitConfig, "config", e.what());
  } catch (const DataError& e) {
    return report(kExitData, "data", e.what());
  } catch (const fs::filesystem_error& e) {
    return report(kExitData, "io", e.what());
  } catch (const NumericalError& e) {
    return report(kExitNumerical, "numerical", e.what());
  } catch (const json::exception& e) {
    return report(kExitData, "data", e.what());
  } catch (const std::exception& e) {
    return report(kExitNumerical, "internal", e.what());
  }
}

}  // namespace skygrid
