#include "skygrid/coalescent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "skygrid/errors.hpp"

namespace skygrid {

GridSpec::GridSpec(std::vector<double> points) : points_(std::move(points)) {
  if (points_.empty()) throw DataError("grid: at least one grid point is required");
  if (!(points_.front() > 0.0)) throw DataError("grid: first grid point must be strictly positive");
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!std::isfinite(points_[i])) throw DataError("grid: non-finite grid point");
    if (i > 0 && points_[i] < points_[i - 1]) throw DataError("grid: points must be nondecreasing");
  }
}

GridSpec GridSpec::uniform(std::size_t num_points, double cutoff) {
  if (num_points == 0) throw DataError("grid: M must be positive");
  if (!(cutoff > 0.0)) throw DataError("grid: cutoff must be positive");
  std::vector<double> pts(num_points);
  for (std::size_t k = 0; k < num_points; ++k) {
    pts[k] = cutoff * static_cast<double>(k + 1) / static_cast<double>(num_points);
  }
  pts.back() = cutoff;
  return GridSpec(std::move(pts));
}

std::size_t GridSpec::interval_of(double t) const {
  return static_cast<std::size_t>(std::lower_bound(points_.begin(), points_.end(), t) -
                                  points_.begin());
}

double GridSpec::interval_end(std::size_t k) const {
  return k < points_.size() ? points_[k] : std::numeric_limits<double>::infinity();
}

SufficientStatistics SufficientStatistics::from_totals(Eigen::VectorXd counts,
                                                       Eigen::VectorXd lineage_time) {
  if (counts.size() != lineage_time.size() || counts.size() == 0) {
    throw DataError("sufficient statistics: dimension mismatch");
  }
  SufficientStatistics out;
  out.counts = std::move(counts);
  out.lineage_time = std::move(lineage_time);
  return out;
}

namespace {

LocusStatistics locus_statistics(const EventTimeline& timeline, const GridSpec& grid) {
  const std::size_t intervals = grid.num_intervals();
  std::vector<long double> ss(intervals, 0.0L);
  LocusStatistics out;
  out.counts.assign(intervals, 0);

  const auto& events = timeline.events();
  for (std::size_t j = 0; j < events.size(); ++j) {
    if (events[j].kind == EventKind::kCoalescent) ++out.counts[grid.interval_of(events[j].time)];
    if (j + 1 == events.size()) break;
    const int v = events[j].lineages_after;
    const double a = events[j].time;
    const double b = events[j + 1].time;
    if (v < 2 || !(b > a)) continue;
    const long double pairs = 0.5L * v * (v - 1);
    // Split [a, b] at the grid points it straddles; each piece lands in the
    // interval holding its right end.
    double lo = a;
    for (std::size_t k = grid.interval_of(a); lo < b; ++k) {
      const double hi = std::min(b, grid.interval_end(k));
      if (hi > lo) ss[k] += pairs * (static_cast<long double>(hi) - lo);
      lo = hi;
    }
  }

  out.lineage_time.resize(intervals);
  for (std::size_t k = 0; k < intervals; ++k) out.lineage_time[k] = static_cast<double>(ss[k]);
  const double t0 = timeline.first_time();
  out.first_interval = static_cast<std::size_t>(
      std::upper_bound(grid.points().begin(), grid.points().end(), t0) - grid.points().begin());
  out.last_interval = grid.interval_of(timeline.last_time());
  return out;
}

}  // namespace

SufficientStatistics compute_sufficient_statistics(const std::vector<EventTimeline>& timelines,
                                                   const GridSpec& grid) {
  if (timelines.empty()) throw DataError("sufficient statistics: no genealogies supplied");
  const auto intervals = static_cast<Eigen::Index>(grid.num_intervals());
  SufficientStatistics out;
  out.counts = Eigen::VectorXd::Zero(intervals);
  std::vector<long double> total(static_cast<std::size_t>(intervals), 0.0L);
  for (const auto& tl : timelines) {
    auto locus = locus_statistics(tl, grid);
    for (Eigen::Index k = 0; k < intervals; ++k) {
      const auto uk = static_cast<std::size_t>(k);
      out.counts[k] += locus.counts[uk];
      total[uk] += locus.lineage_time[uk];
    }
    out.loci.push_back(std::move(locus));
  }
  out.lineage_time.resize(intervals);
  for (Eigen::Index k = 0; k < intervals; ++k) {
    out.lineage_time[k] = static_cast<double>(total[static_cast<std::size_t>(k)]);
  }
  return out;
}

namespace {

void check_dims(const SufficientStatistics& stats, const Eigen::VectorXd& log_sizes) {
  if (log_sizes.size() != stats.counts.size()) {
    throw DataError("likelihood: trajectory has " + std::to_string(log_sizes.size()) +
                    " entries but statistics have " + std::to_string(stats.counts.size()));
  }
}

// SS_k exp(-gamma_k), with empty intervals contributing exactly 0.
Eigen::VectorXd scaled_lineage_time(const SufficientStatistics& stats,
                                    const Eigen::VectorXd& log_sizes) {
  Eigen::VectorXd out(log_sizes.size());
  for (Eigen::Index k = 0; k < log_sizes.size(); ++k) {
    const double ss = stats.lineage_time[k];
    out[k] = ss == 0.0 ? 0.0 : ss * std::exp(-log_sizes[k]);
  }
  return out;
}

}  // namespace

double log_likelihood(const SufficientStatistics& stats, const Eigen::VectorXd& log_sizes) {
  check_dims(stats, log_sizes);
  double total = 0.0;
  for (Eigen::Index k = 0; k < log_sizes.size(); ++k) {
    if (stats.counts[k] != 0.0) total -= log_sizes[k] * stats.counts[k];
  }
  return total - scaled_lineage_time(stats, log_sizes).sum();
}

LikelihoodDerivatives log_likelihood_derivatives(const SufficientStatistics& stats,
                                                 const Eigen::VectorXd& log_sizes) {
  check_dims(stats, log_sizes);
  const Eigen::VectorXd scaled = scaled_lineage_time(stats, log_sizes);
  return {scaled - stats.counts, -scaled};
}

}  // namespace skygrid
