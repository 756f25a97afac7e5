#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "skygrid/genealogy.hpp"

namespace skygrid {

/// Grid points x_1 <= ... <= x_M in backward time. They split history into
/// M+1 intervals [0, x_1], (x_1, x_2], ..., (x_M, inf). A point lying exactly on
/// a grid point belongs to the younger interval.
class GridSpec {
 public:
  explicit GridSpec(std::vector<double> points);

  /// M points evenly spaced on (0, cutoff], the last one at cutoff.
  static GridSpec uniform(std::size_t num_points, double cutoff);

  const std::vector<double>& points() const { return points_; }
  std::size_t num_points() const { return points_.size(); }
  std::size_t num_intervals() const { return points_.size() + 1; }

  /// 0-based interval index holding time t (younger interval on ties).
  std::size_t interval_of(double t) const;
  double interval_start(std::size_t k) const { return k == 0 ? 0.0 : points_[k - 1]; }
  /// +inf for the terminal interval.
  double interval_end(std::size_t k) const;

 private:
  std::vector<double> points_;
};

/// Per-locus contribution; zero outside [first_interval, last_interval].
struct LocusStatistics {
  std::vector<int> counts;
  std::vector<double> lineage_time;
  std::size_t first_interval = 0;
  std::size_t last_interval = 0;
};

/// Coalescent counts c_k and weighted lineage-pair times SS_k per grid interval,
/// summed over loci. Together they determine the log-likelihood exactly.
struct SufficientStatistics {
  Eigen::VectorXd counts;
  Eigen::VectorXd lineage_time;
  std::vector<LocusStatistics> loci;

  std::size_t num_intervals() const { return static_cast<std::size_t>(counts.size()); }

  /// Aggregates only, without per-locus detail (for tests and toy models).
  static SufficientStatistics from_totals(Eigen::VectorXd counts, Eigen::VectorXd lineage_time);
};

SufficientStatistics compute_sufficient_statistics(const std::vector<EventTimeline>& timelines,
                                                   const GridSpec& grid);

/// log P(g | gamma) = sum_k (-gamma_k c_k - SS_k exp(-gamma_k)).
double log_likelihood(const SufficientStatistics& stats, const Eigen::VectorXd& log_sizes);

struct LikelihoodDerivatives {
  Eigen::VectorXd gradient;
  /// Diagonal of the Hessian; the likelihood Hessian is diagonal.
  Eigen::VectorXd curvature;
};

LikelihoodDerivatives log_likelihood_derivatives(const SufficientStatistics& stats,
                                                 const Eigen::VectorXd& log_sizes);

}  // namespace skygrid
