#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "skygrid/coalescent.hpp"
#include "skygrid/genealogy.hpp"
#include "skygrid/prior_glm.hpp"
#include "skygrid/sampler.hpp"

namespace skygrid {

/// `count` tips sampled at backward time `time`.
struct SamplingEvent {
  double time = 0.0;
  int count = 0;
};

struct SimulationPlan {
  std::vector<SamplingEvent> schedule;
  GridSpec grid{{1.0}};
  Eigen::VectorXd log_sizes;  // true trajectory, one entry per interval
  int loci = 1;
  int replicates = 1;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Coalescent genealogy under the piecewise-constant trajectory. Waiting times
/// are drawn piece by piece: with v lineages and size theta the rate is
/// v(v-1)/(2 theta) until the next grid point or sampling time.
Genealogy simulate_genealogy(const std::vector<SamplingEvent>& schedule, const GridSpec& grid,
                             const Eigen::VectorXd& log_sizes, Rng& rng,
                             const std::string& label_prefix = "t", std::string locus = {});

/// All loci of one replicate, drawn from the replicate's own stream.
std::vector<Genealogy> simulate_replicate(const SimulationPlan& plan, int replicate);

struct SimulatedTrajectory {
  Eigen::VectorXd log_sizes;
  Eigen::VectorXd noise;  // w = gamma - Z beta (first entry pinned at 0)
  CovariateMatrix covariates;
};

/// Z: each column a random walk from 0 with N(0, increment_sd^2) steps.
/// gamma = level + Z beta + w with w_1 = 0 and N(0, 1/tau) increments.
/// tau = +inf gives w = 0.
SimulatedTrajectory simulate_trajectory_and_covariates(const GridSpec& grid, const Eigen::VectorXd& beta,
                                                       double tau, Rng& rng, double level = 0.0,
                                                       double increment_sd = 1.0);

}  // namespace skygrid
