#include "skygrid/summary.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "skygrid/io_util.hpp"

namespace skygrid {

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile: no values");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile: p outside [0, 1]");
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil(p * n - 1e-12));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

double effective_sample_size(const std::vector<double>& chain) {
  const std::size_t n = chain.size();
  if (n < 4) return static_cast<double>(n);
  const double mean = std::accumulate(chain.begin(), chain.end(), 0.0) / static_cast<double>(n);
  std::vector<double> c(chain.size());
  for (std::size_t i = 0; i < n; ++i) c[i] = chain[i] - mean;
  const double var0 = std::inner_product(c.begin(), c.end(), c.begin(), 0.0) / static_cast<double>(n);
  if (!(var0 > 0.0)) return static_cast<double>(n);
  auto rho = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += c[i] * c[i + lag];
    return s / static_cast<double>(n) / var0;
  };
  // Sum of paired autocorrelations while positive and non-increasing.
  double tau = -1.0;
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
    double pair = rho(2 * m) + rho(2 * m + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, previous);
    previous = pair;
    tau += 2.0 * pair;
  }
  tau = std::max(tau, 1.0 / std::log10(static_cast<double>(n)));
  return static_cast<double>(n) / tau;
}

double mc_standard_error(const std::vector<double>& chain) {
  const auto n = static_cast<double>(chain.size());
  const double mean = std::accumulate(chain.begin(), chain.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : chain) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / std::max(1.0, n - 1.0));
  return sd / std::sqrt(effective_sample_size(chain));
}

double split_rhat(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> halves;
  for (const auto& c : chains) {
    const std::size_t h = c.size() / 2;
    if (h < 2) continue;
    halves.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(h));
    halves.emplace_back(c.end() - static_cast<std::ptrdiff_t>(h), c.end());
  }
  if (halves.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const auto m = static_cast<double>(halves.size());
  const auto len = static_cast<double>(halves.front().size());
  std::vector<double> means;
  double within = 0.0;
  for (const auto& h : halves) {
    const double mu = std::accumulate(h.begin(), h.end(), 0.0) / len;
    means.push_back(mu);
    double s = 0.0;
    for (double x : h) s += (x - mu) * (x - mu);
    within += s / (len - 1.0);
  }
  within /= m;
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / m;
  double between = 0.0;
  for (double mu : means) between += (mu - grand) * (mu - grand);
  between *= len / (m - 1.0);
  if (!(within > 0.0)) return between > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  const double var_plus = (len - 1.0) / len * within + between / len;
  return std::sqrt(var_plus / within);
}

ColumnSummary summarize_column(const std::vector<std::vector<double>>& chains) {
  std::vector<double> all;
  ColumnSummary s;
  for (const auto& c : chains) {
    all.insert(all.end(), c.begin(), c.end());
    s.ess += effective_sample_size(c);
  }
  if (all.empty()) throw DataError("summary: no samples");
  const auto n = static_cast<double>(all.size());
  s.mean = std::accumulate(all.begin(), all.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : all) ss += (x - s.mean) * (x - s.mean);
  s.sd = all.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  s.median = quantile(all, 0.5);
  s.lower = quantile(all, 0.025);
  s.upper = quantile(all, 0.975);
  s.rhat = split_rhat(chains);
  return s;
}

std::size_t TraceTable::column_index(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw DataError("trace: no column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

std::vector<double> TraceTable::column(const std::string& name) const {
  const auto j = column_index(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[j]);
  return out;
}

TraceTable TraceTable::after_burnin(double fraction) const {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("burn-in fraction must be in [0, 1)");
  TraceTable out;
  out.header = header;
  const auto skip = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(rows.size())));
  out.rows.assign(rows.begin() + static_cast<std::ptrdiff_t>(skip), rows.end());
  return out;
}

std::vector<std::string> trace_header(const Trace& trace, const std::vector<std::string>& beta_labels) {
  std::vector<std::string> h{"iteration", "log_posterior", "log_likelihood", "state.tau", "state.kappa"};
  for (Eigen::Index k = 0; k < trace.initial.log_sizes.size(); ++k) {
    h.push_back("state.gamma." + std::to_string(k + 1));
  }
  for (const auto& l : beta_labels) h.push_back("state.beta." + l);
  return h;
}

std::string format_trace_csv(const Trace& trace, const std::vector<std::string>& beta_labels) {
  if (static_cast<Eigen::Index>(beta_labels.size()) != trace.initial.beta.size()) {
    throw std::invalid_argument("trace: beta labels do not match coefficients");
  }
  std::ostringstream out;
  const auto header = trace_header(trace, beta_labels);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& s : trace.samples) {
    out << s.iteration << ',' << format_double(s.log_posterior) << ',' << format_double(s.log_likelihood)
        << ',' << format_double(s.tau) << ',' << format_double(s.kappa);
    for (Eigen::Index k = 0; k < s.log_sizes.size(); ++k) out << ',' << format_double(s.log_sizes[k]);
    for (Eigen::Index k = 0; k < s.beta.size(); ++k) out << ',' << format_double(s.beta[k]);
    out << '\n';
  }
  return out.str();
}

TraceTable parse_trace_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  TraceTable t;
  if (!std::getline(in, line)) throw DataError(source + ": empty trace");
  for (const auto& h : split(trim(line), ',')) t.header.emplace_back(trim(h));
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(trim(line), ',');
    if (fields.size() != t.header.size()) {
      throw DataError(source + ":" + std::to_string(line_no) + ": wrong field count");
    }
    std::vector<double> row;
    for (const auto& f : fields) {
      const auto v = parse_double(f);
      if (!v) throw DataError(source + ":" + std::to_string(line_no) + ": invalid number '" + f + "'");
      row.push_back(*v);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

TraceTable read_trace_csv(const std::string& path) { return parse_trace_csv(read_text_file(path), path); }

}  // namespace skygrid
