#include "skygrid/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace skygrid {

void SimulationPlan::validate() const {
  int tips = 0;
  for (const auto& s : schedule) {
    if (s.count < 0 || !(s.time >= 0.0) || !std::isfinite(s.time)) {
      throw ConfigError("simulation: invalid sampling event");
    }
    tips += s.count;
  }
  if (tips < 2) throw ConfigError("simulation: at least two tips are required");
  if (log_sizes.size() != static_cast<Eigen::Index>(grid.num_intervals())) {
    throw ConfigError("simulation: trajectory length must equal the number of grid intervals");
  }
  if (!log_sizes.allFinite()) throw ConfigError("simulation: trajectory must be finite");
  if (loci < 1 || replicates < 0) throw ConfigError("simulation: loci >= 1 and replicates >= 0 required");
}

Genealogy simulate_genealogy(const std::vector<SamplingEvent>& schedule, const GridSpec& grid,
                             const Eigen::VectorXd& log_sizes, Rng& rng,
                             const std::string& label_prefix, std::string locus) {
  if (log_sizes.size() != static_cast<Eigen::Index>(grid.num_intervals())) {
    throw std::invalid_argument("simulate_genealogy: trajectory does not match grid");
  }
  // Merge equal sampling times, oldest last.
  std::map<double, int> merged;
  for (const auto& s : schedule) {
    if (s.count > 0) merged[s.time] += s.count;
  }
  std::vector<SamplingEvent> samples;
  for (const auto& [t, c] : merged) samples.push_back({t, c});

  std::vector<TreeNode> nodes;
  std::vector<int> active;
  std::size_t next_sample = 0;
  auto add_samples = [&](const SamplingEvent& s) {
    for (int i = 0; i < s.count; ++i) {
      active.push_back(static_cast<int>(nodes.size()));
      nodes.push_back({label_prefix + std::to_string(nodes.size() + 1), s.time, -1, -1, -1});
    }
  };

  std::exponential_distribution<double> exp1(1.0);
  double t = samples.front().time;
  add_samples(samples[next_sample++]);
  while (next_sample < samples.size() || active.size() > 1) {
    const double next_time =
        next_sample < samples.size() ? samples[next_sample].time : std::numeric_limits<double>::infinity();
    if (active.size() < 2) {
      t = next_time;
      add_samples(samples[next_sample++]);
      continue;
    }
    const double v = static_cast<double>(active.size());
    double remaining = exp1(rng);
    bool coalesced = false;
    while (t < next_time) {
      // Interval holding the instant just after t, so every piece has positive length.
      const auto k = static_cast<std::size_t>(
          std::upper_bound(grid.points().begin(), grid.points().end(), t) - grid.points().begin());
      const double end = std::min(grid.interval_end(k), next_time);
      const double rate = 0.5 * v * (v - 1.0) * std::exp(-log_sizes[static_cast<Eigen::Index>(k)]);
      if (remaining <= rate * (end - t)) {
        t += remaining / rate;
        coalesced = true;
        break;
      }
      remaining -= rate * (end - t);
      t = end;
    }
    if (!coalesced) {
      t = next_time;
      add_samples(samples[next_sample++]);
      continue;
    }
    std::uniform_int_distribution<std::size_t> pick(0, active.size() - 1);
    const std::size_t a = pick(rng);
    std::size_t b = pick(rng);
    while (b == a) b = pick(rng);
    const int parent = static_cast<int>(nodes.size());
    nodes.push_back({"", t, -1, active[a], active[b]});
    nodes[static_cast<std::size_t>(active[a])].parent = parent;
    nodes[static_cast<std::size_t>(active[b])].parent = parent;
    active[std::min(a, b)] = parent;
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(std::max(a, b)));
  }
  return Genealogy(std::move(nodes), active.front(), std::move(locus));
}

std::vector<Genealogy> simulate_replicate(const SimulationPlan& plan, int replicate) {
  plan.validate();
  Rng rng = make_rng(plan.seed, static_cast<std::uint64_t>(replicate));
  std::vector<Genealogy> out;
  out.reserve(static_cast<std::size_t>(plan.loci));
  for (int l = 0; l < plan.loci; ++l) {
    const std::string locus = "locus" + std::to_string(l + 1);
    out.push_back(simulate_genealogy(plan.schedule, plan.grid, plan.log_sizes, rng,
                                     "L" + std::to_string(l + 1) + "_t", locus));
  }
  return out;
}

SimulatedTrajectory simulate_trajectory_and_covariates(const GridSpec& grid, const Eigen::VectorXd& beta,
                                                       double tau, Rng& rng, double level,
                                                       double increment_sd) {
  if (beta.size() < 1) throw std::invalid_argument("simulate covariates: need at least one covariate");
  if (!(tau > 0.0)) throw std::invalid_argument("simulate covariates: tau must be positive");
  const auto n = static_cast<Eigen::Index>(grid.num_intervals());
  std::normal_distribution<double> normal;
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(n, beta.size());
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    for (Eigen::Index i = 1; i < n; ++i) z(i, j) = z(i - 1, j) + increment_sd * normal(rng);
  }
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  if (std::isfinite(tau)) {
    const double sd = 1.0 / std::sqrt(tau);
    for (Eigen::Index i = 1; i < n; ++i) w[i] = w[i - 1] + sd * normal(rng);
  }
  std::vector<std::string> labels;
  for (Eigen::Index j = 0; j < beta.size(); ++j) labels.push_back("z" + std::to_string(j + 1));
  SimulatedTrajectory out;
  out.log_sizes = (z * beta + w).array() + level;
  out.noise = w;
  out.covariates = CovariateMatrix(z, std::move(labels));
  return out;
}

}  // namespace skygrid
