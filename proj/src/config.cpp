#include "skygrid/config.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "skygrid/io_util.hpp"

namespace skygrid {

namespace {

using Section = std::map<std::string, std::string>;

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s{
      {"input", {"trees", "tip_dates", "date_format", "tip_date_delimiter", "most_recent_date", "covariates"}},
      {"grid", {"mode", "points", "cutoff"}},
      {"covariates", {"standardize", "intercept", "missing_prior", "glm"}},
      {"prior", {"tau_shape", "tau_rate", "kappa_shape", "kappa_rate", "beta_mean", "beta_variance"}},
      {"mcmc",
       {"iterations", "thinning", "seed", "chains", "tau_tuning", "newton_tolerance",
        "newton_max_iterations", "weight_block", "weight_beta", "weight_covariates", "burnin", "fix_tau",
        "validate_caches"}},
      {"output", {"dir", "calendar_anchor", "log10"}},
      {"simulate",
       {"replicates", "loci", "sampling", "grid_points", "cutoff", "tau", "beta", "log_sizes", "level",
        "increment_sd", "missing_tail", "seed", "infer_iterations", "infer_thinning"}},
      {"summarize", {"traces", "manifest", "burnin"}},
  };
  return s;
}

class Reader {
 public:
  Reader(const std::string& section, const Section& values) : section_(section), values_(values) {}

  std::optional<std::string> str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return std::string(trim(it->second));
  }

  std::optional<double> real(const std::string& key) const {
    const auto s = str(key);
    if (!s) return std::nullopt;
    if (*s == "inf" || *s == "infinity") return std::numeric_limits<double>::infinity();
    const auto v = parse_double(*s);
    if (!v || std::isnan(*v)) fail(key, "expected a number");
    return v;
  }

  std::optional<std::uint64_t> count(const std::string& key) const {
    const auto v = real(key);
    if (!v) return std::nullopt;
    if (*v < 0.0 || *v != std::floor(*v) || *v > 9.0e18) fail(key, "expected a nonnegative integer");
    return static_cast<std::uint64_t>(*v);
  }

  std::optional<bool> flag(const std::string& key) const {
    const auto s = str(key);
    if (!s) return std::nullopt;
    if (*s == "true" || *s == "yes" || *s == "1" || *s == "on") return true;
    if (*s == "false" || *s == "no" || *s == "0" || *s == "off") return false;
    fail(key, "expected true or false");
  }

  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    const auto s = str(key);
    if (!s || s->empty()) return out;
    for (const auto& item : split(*s, ',')) {
      const auto t = trim(item);
      if (!t.empty()) out.emplace_back(t);
    }
    return out;
  }

  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : list(key)) {
      const auto v = parse_double(item);
      if (!v) fail(key, "expected a comma-separated list of numbers");
      out.push_back(*v);
    }
    return out;
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError("config [" + section_ + "] " + key + ": " + what);
  }

 private:
  std::string section_;
  const Section& values_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

std::string RunConfig::fingerprint(std::optional<std::uint64_t> seed_override) const {
  std::string material = text;
  if (seed_override) material += "\nseed-override=" + std::to_string(*seed_override);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(material)));
  return buf;
}

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
  }

  std::map<std::string, Section> sections;
  std::map<std::string, CovariateTransform> transforms;
  for (const auto& [name, body] : tree) {
    if (body.empty()) throw ConfigError("config: key '" + name + "' outside of any section");
    Section values;
    for (const auto& [key, value] : body) values[key] = value.data();
    if (name == "transforms") {
      for (const auto& [key, value] : values) transforms[key] = parse_transform(std::string(trim(value)));
      continue;
    }
    const auto known = schema().find(name);
    if (known == schema().end()) throw ConfigError("config: unknown section [" + name + "]");
    for (const auto& [key, _] : values) {
      if (!known->second.count(key)) throw ConfigError("config: unknown key '" + key + "' in [" + name + "]");
    }
    sections[name] = std::move(values);
  }
  auto section = [&](const std::string& name) { return Reader(name, sections[name]); };

  RunConfig c;
  c.text = text;
  c.base_dir = base_dir;

  const auto input = section("input");
  for (const auto& p : input.list("trees")) c.trees.push_back(resolve(base_dir, p));
  if (auto p = input.str("tip_dates")) c.tip_dates = resolve(base_dir, *p);
  if (auto f = input.str("date_format")) {
    if (*f == "backward") c.date_convention = DateConvention::kBackward;
    else if (*f == "calendar") c.date_convention = DateConvention::kCalendar;
    else input.fail("date_format", "expected 'backward' or 'calendar'");
  }
  if (auto d = input.str("tip_date_delimiter")) {
    if (d->size() != 1) input.fail("tip_date_delimiter", "expected a single character");
    c.tip_date_delimiter = (*d)[0];
  }
  c.most_recent_date = input.real("most_recent_date");
  if (auto p = input.str("covariates")) c.covariates = resolve(base_dir, *p);

  const auto grid = section("grid");
  if (auto m = grid.str("mode")) {
    if (*m == "uniform") c.grid_mode = GridMode::kUniform;
    else if (*m == "covariates") c.grid_mode = GridMode::kCovariates;
    else grid.fail("mode", "expected 'uniform' or 'covariates'");
  }
  c.grid_points = grid.count("points").value_or(0);
  c.cutoff = grid.real("cutoff").value_or(0.0);

  const auto cov = section("covariates");
  c.covariate_options.transforms = std::move(transforms);
  c.covariate_options.standardize = cov.flag("standardize").value_or(false);
  c.covariate_options.intercept = cov.flag("intercept").value_or(false);
  c.glm = cov.flag("glm").value_or(true);
  if (auto m = cov.str("missing_prior")) {
    if (*m == "random_walk") c.missing_policy = MissingPolicy::kRandomWalk;
    else if (*m == "uniform") c.missing_policy = MissingPolicy::kUniform;
    else cov.fail("missing_prior", "expected 'random_walk' or 'uniform'");
  }

  const auto prior = section("prior");
  c.hyper.tau_shape = prior.real("tau_shape").value_or(c.hyper.tau_shape);
  c.hyper.tau_rate = prior.real("tau_rate").value_or(c.hyper.tau_rate);
  c.hyper.kappa_shape = prior.real("kappa_shape").value_or(c.hyper.kappa_shape);
  c.hyper.kappa_rate = prior.real("kappa_rate").value_or(c.hyper.kappa_rate);
  c.beta_mean = prior.real("beta_mean").value_or(c.beta_mean);
  c.beta_variance = prior.real("beta_variance").value_or(c.beta_variance);

  const auto mcmc = section("mcmc");
  c.chain.iterations = mcmc.count("iterations").value_or(c.chain.iterations);
  c.chain.thinning = mcmc.count("thinning").value_or(c.chain.thinning);
  c.chain.seed = mcmc.count("seed").value_or(c.chain.seed);
  c.chains = static_cast<int>(mcmc.count("chains").value_or(1));
  c.hyper.tau_tuning = mcmc.real("tau_tuning").value_or(c.hyper.tau_tuning);
  c.chain.block.newton.tolerance = mcmc.real("newton_tolerance").value_or(c.chain.block.newton.tolerance);
  c.chain.block.newton.max_iterations =
      static_cast<int>(mcmc.count("newton_max_iterations").value_or(static_cast<std::uint64_t>(c.chain.block.newton.max_iterations)));
  c.chain.weights.block = static_cast<int>(mcmc.count("weight_block").value_or(1));
  c.chain.weights.beta = static_cast<int>(mcmc.count("weight_beta").value_or(1));
  c.chain.weights.covariates = static_cast<int>(mcmc.count("weight_covariates").value_or(1));
  c.chain.block.fix_tau = mcmc.flag("fix_tau").value_or(false);
  c.chain.validate_caches = mcmc.flag("validate_caches").value_or(false);
  c.burnin = mcmc.real("burnin").value_or(c.burnin);

  const auto output = section("output");
  if (auto d = output.str("dir")) c.out_dir = resolve(base_dir, *d);
  c.calendar_anchor = output.real("calendar_anchor");
  c.log10_column = output.flag("log10").value_or(false);

  const auto sim = section("simulate");
  auto& s = c.simulate;
  s.replicates = static_cast<int>(sim.count("replicates").value_or(1));
  s.loci = static_cast<int>(sim.count("loci").value_or(1));
  for (const auto& item : sim.list("sampling")) {
    const auto parts = split(item, ':');
    const auto t = parts.size() == 2 ? parse_double(parts[0]) : std::nullopt;
    const auto n = parts.size() == 2 ? parse_double(parts[1]) : std::nullopt;
    if (!t || !n || *n < 0 || *n != std::floor(*n)) sim.fail("sampling", "expected time:count pairs");
    s.schedule.push_back({*t, static_cast<int>(*n)});
  }
  s.grid_points = sim.count("grid_points").value_or(0);
  s.cutoff = sim.real("cutoff").value_or(0.0);
  s.tau = sim.real("tau").value_or(s.tau);
  s.beta = sim.reals("beta");
  s.log_sizes = sim.reals("log_sizes");
  s.level = sim.real("level").value_or(0.0);
  s.increment_sd = sim.real("increment_sd").value_or(1.0);
  s.missing_tail = static_cast<int>(sim.count("missing_tail").value_or(0));
  s.infer_iterations = sim.count("infer_iterations").value_or(s.infer_iterations);
  s.infer_thinning = sim.count("infer_thinning").value_or(s.infer_thinning);
  if (auto seed = sim.count("seed")) c.chain.seed = *seed;

  const auto summ = section("summarize");
  for (const auto& p : summ.list("traces")) c.summarize_traces.push_back(resolve(base_dir, p));
  if (auto p = summ.str("manifest")) c.summarize_manifest = resolve(base_dir, *p);
  if (auto b = summ.real("burnin")) c.burnin = *b;

  if (c.chains < 1) throw ConfigError("config [mcmc] chains: must be at least 1");
  if (!(c.burnin >= 0.0 && c.burnin < 1.0)) throw ConfigError("config: burnin must be in [0, 1)");
  if (!(c.beta_variance > 0.0)) throw ConfigError("config [prior] beta_variance: must be positive");
  c.hyper.validate();
  c.chain.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path.string());
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text, path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

}  // namespace skygrid
