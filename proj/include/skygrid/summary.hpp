#pragma once

#include <string>
#include <vector>

#include "skygrid/sampler.hpp"

namespace skygrid {

/// Inverse-ECDF quantile: the smallest sample x with F(x) >= p.
double quantile(std::vector<double> values, double p);

/// Geyer initial-monotone-sequence estimate for one chain.
double effective_sample_size(const std::vector<double>& chain);

/// Split-chain potential scale reduction over one or more chains.
double split_rhat(const std::vector<std::vector<double>>& chains);

struct ColumnSummary {
  double mean = 0.0;
  double sd = 0.0;
  double median = 0.0;
  double lower = 0.0;  // 2.5%
  double upper = 0.0;  // 97.5%
  double ess = 0.0;
  double rhat = 1.0;
};

ColumnSummary summarize_column(const std::vector<std::vector<double>>& chains);

/// Monte Carlo standard error of the mean, from the ESS.
double mc_standard_error(const std::vector<double>& chain);

/// Header + numeric rows of a trace CSV.
struct TraceTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column_index(const std::string& name) const;
  std::vector<double> column(const std::string& name) const;
  /// Drops the leading fraction of rows.
  TraceTable after_burnin(double fraction) const;
};

std::vector<std::string> trace_header(const Trace& trace, const std::vector<std::string>& beta_labels);
std::string format_trace_csv(const Trace& trace, const std::vector<std::string>& beta_labels);
TraceTable parse_trace_csv(const std::string& text, const std::string& source = "trace");
TraceTable read_trace_csv(const std::string& path);

}  // namespace skygrid
