#include "skygrid/prior_glm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "skygrid/io_util.hpp"

namespace skygrid {

SymTridiagonal random_walk_structure(Eigen::Index n) {
  if (n <= 0) throw std::invalid_argument("random walk structure: dimension must be positive");
  if (n == 1) return {Eigen::VectorXd::Zero(1), Eigen::VectorXd()};
  Eigen::VectorXd d = Eigen::VectorXd::Constant(n, 2.0);
  d[0] = 1.0;
  d[n - 1] = 1.0;
  return {d, Eigen::VectorXd::Constant(n - 1, -1.0)};
}

CovariateTransform parse_transform(const std::string& name) {
  if (name == "identity" || name == "none") return CovariateTransform::kIdentity;
  if (name == "log") return CovariateTransform::kLog;
  if (name == "log1p" || name == "log(x+1)") return CovariateTransform::kLog1p;
  throw ConfigError("unknown covariate transform '" + name + "'");
}

std::string transform_name(CovariateTransform t) {
  switch (t) {
    case CovariateTransform::kIdentity: return "identity";
    case CovariateTransform::kLog: return "log";
    case CovariateTransform::kLog1p: return "log1p";
  }
  return "identity";
}

CovariateTable read_covariate_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open covariate file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty covariate file");
  CovariateTable table;
  const auto header = split(trim(line), ',');
  if (header.size() < 2) throw DataError(path + ": need a time column and at least one covariate");
  for (std::size_t j = 1; j < header.size(); ++j) table.labels.emplace_back(trim(header[j]));

  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != header.size()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields");
    }
    const auto t = parse_double(fields[0]);
    if (!t) throw DataError(path + ":" + std::to_string(line_no) + ": invalid time");
    if (!table.times.empty() && *t <= table.times.back()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": times must increase");
    }
    table.times.push_back(*t);
    std::vector<double> row;
    for (std::size_t j = 1; j < fields.size(); ++j) {
      const auto cell = trim(fields[j]);
      if (cell.empty() || cell == "NA" || cell == "na" || cell == "NaN" || cell == "nan") {
        row.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      const auto v = parse_double(cell);
      if (!v) throw DataError(path + ":" + std::to_string(line_no) + ": invalid value '" + std::string(cell) + "'");
      row.push_back(*v);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(path + ": no covariate rows");
  table.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(table.labels.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return table;
}

CovariateMatrix::CovariateMatrix(Eigen::MatrixXd observed, std::vector<std::string> labels,
                                 std::vector<CovariateTransform> transforms)
    : rows_(observed.rows()),
      observed_(std::move(observed)),
      labels_(std::move(labels)),
      transforms_(std::move(transforms)) {
  if (static_cast<Eigen::Index>(labels_.size()) != observed_.cols()) {
    throw DataError("covariates: label count does not match column count");
  }
  if (transforms_.empty()) transforms_.assign(labels_.size(), CovariateTransform::kIdentity);
  for (Eigen::Index j = 0; j < cols(); ++j) {
    bool any = false;
    for (Eigen::Index i = 0; i < rows_; ++i) {
      const double v = observed_(i, j);
      if (std::isinf(v)) throw DataError("covariates: non-finite value in column '" + labels_[static_cast<std::size_t>(j)] + "'");
      any = any || !std::isnan(v);
    }
    if (!any) throw DataError("covariates: column '" + labels_[static_cast<std::size_t>(j)] + "' has no observed values");
  }
}

CovariateMatrix CovariateMatrix::none(Eigen::Index rows) {
  CovariateMatrix out(Eigen::MatrixXd(rows, 0), {});
  return out;
}

CovariateMatrix CovariateMatrix::prepare(const CovariateTable& table, const CovariateOptions& options) {
  Eigen::MatrixXd values = table.values;
  std::vector<CovariateTransform> transforms;
  for (const auto& [name, _] : options.transforms) {
    if (std::find(table.labels.begin(), table.labels.end(), name) == table.labels.end()) {
      throw ConfigError("transform declared for unknown covariate '" + name + "'");
    }
  }
  for (Eigen::Index j = 0; j < values.cols(); ++j) {
    const auto& label = table.labels[static_cast<std::size_t>(j)];
    const auto it = options.transforms.find(label);
    const auto t = it == options.transforms.end() ? CovariateTransform::kIdentity : it->second;
    transforms.push_back(t);
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
      double& v = values(i, j);
      if (std::isnan(v)) continue;
      if (t == CovariateTransform::kLog) {
        if (!(v > 0.0)) throw DataError("covariate '" + label + "': log transform of non-positive value");
        v = std::log(v);
      } else if (t == CovariateTransform::kLog1p) {
        if (!(v > -1.0)) throw DataError("covariate '" + label + "': log(x+1) transform of value <= -1");
        v = std::log1p(v);
      }
    }
    if (options.standardize) {
      double sum = 0.0;
      double sq = 0.0;
      int n = 0;
      for (Eigen::Index i = 0; i < values.rows(); ++i) {
        if (std::isnan(values(i, j))) continue;
        sum += values(i, j);
        sq += values(i, j) * values(i, j);
        ++n;
      }
      if (n > 0) {
        const double mean = sum / n;
        const double var = n > 1 ? (sq - n * mean * mean) / (n - 1) : 0.0;
        const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
        for (Eigen::Index i = 0; i < values.rows(); ++i) {
          if (!std::isnan(values(i, j))) values(i, j) = (values(i, j) - mean) / sd;
        }
      }
    }
  }
  auto labels = table.labels;
  if (options.intercept) {
    Eigen::MatrixXd with(values.rows(), values.cols() + 1);
    with.col(0).setOnes();
    with.rightCols(values.cols()) = values;
    values = std::move(with);
    labels.insert(labels.begin(), "intercept");
    transforms.insert(transforms.begin(), CovariateTransform::kIdentity);
  }
  return CovariateMatrix(std::move(values), std::move(labels), std::move(transforms));
}

bool CovariateMatrix::has_missing() const { return observed_.array().isNaN().any(); }

std::vector<Eigen::Index> CovariateMatrix::missing_rows(Eigen::Index col) const {
  std::vector<Eigen::Index> out;
  for (Eigen::Index i = 0; i < rows_; ++i) {
    if (is_missing(i, col)) out.push_back(i);
  }
  return out;
}

std::vector<Eigen::Index> CovariateMatrix::columns_with_missing() const {
  std::vector<Eigen::Index> out;
  for (Eigen::Index j = 0; j < cols(); ++j) {
    if (observed_.col(j).array().isNaN().any()) out.push_back(j);
  }
  return out;
}

Eigen::MatrixXd CovariateMatrix::initial_fill() const {
  Eigen::MatrixXd z = observed_;
  for (Eigen::Index j = 0; j < cols(); ++j) {
    Eigen::Index first = 0;
    while (std::isnan(z(first, j))) ++first;
    for (Eigen::Index i = 0; i < first; ++i) z(i, j) = z(first, j);
    for (Eigen::Index i = first + 1; i < rows_; ++i) {
      if (std::isnan(z(i, j))) z(i, j) = z(i - 1, j);
    }
  }
  return z;
}

BetaPrior BetaPrior::diffuse(Eigen::Index p, double variance) {
  return {Eigen::VectorXd::Zero(p), Eigen::VectorXd::Constant(p, variance)};
}

void BetaPrior::validate(Eigen::Index p) const {
  if (mean.size() != p || variance.size() != p) throw ConfigError("beta prior: dimension mismatch");
  if (!(variance.array() > 0.0).all()) throw ConfigError("beta prior: variances must be positive");
}

void HyperParams::validate() const {
  if (!(tau_shape > 0.0 && tau_rate > 0.0)) throw ConfigError("tau prior shape and rate must be positive");
  if (!(kappa_shape > 0.0 && kappa_rate > 0.0)) throw ConfigError("kappa prior shape and rate must be positive");
  if (!(tau_tuning > 1.0)) throw ConfigError("tau proposal tuning F must exceed 1");
}

double gmrf_log_prior(const Eigen::VectorXd& log_sizes, const Eigen::VectorXd& covariate_effect,
                      double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("gmrf prior: tau must be positive");
  if (covariate_effect.size() != log_sizes.size()) {
    throw std::invalid_argument("gmrf prior: dimension mismatch");
  }
  const auto q = random_walk_structure(log_sizes.size());
  const double rank = static_cast<double>(log_sizes.size() - 1);
  return 0.5 * rank * std::log(tau) - 0.5 * tau * q.quadratic_form(log_sizes - covariate_effect);
}

double gmrf_log_prior(const Eigen::VectorXd& log_sizes, const Eigen::MatrixXd& z,
                      const Eigen::VectorXd& beta, double tau) {
  if (z.rows() != log_sizes.size() || z.cols() != beta.size()) {
    throw std::invalid_argument("gmrf prior: dimension mismatch");
  }
  return gmrf_log_prior(log_sizes, Eigen::VectorXd(z * beta), tau);
}

NormalParams full_conditional_component(std::size_t i, const Eigen::VectorXd& log_sizes,
                                        const Eigen::VectorXd& covariate_effect, double tau) {
  const auto n = static_cast<std::size_t>(log_sizes.size());
  if (n < 2 || i >= n) throw std::invalid_argument("full conditional: index out of range");
  if (!(tau > 0.0)) throw std::invalid_argument("full conditional: tau must be positive");
  const auto& g = log_sizes;
  const auto& zb = covariate_effect;
  const auto k = static_cast<Eigen::Index>(i);
  if (i == 0) return {zb[0] - zb[1] + g[1], 1.0 / tau};
  if (i == n - 1) return {zb[k] - zb[k - 1] + g[k - 1], 1.0 / tau};
  return {zb[k] + 0.5 * (g[k - 1] + g[k + 1] - zb[k - 1] - zb[k + 1]), 0.5 / tau};
}

DenseGaussian beta_full_conditional(const Eigen::VectorXd& log_sizes, const Eigen::MatrixXd& z,
                                    double tau, const BetaPrior& prior) {
  prior.validate(z.cols());
  if (z.rows() != log_sizes.size()) throw std::invalid_argument("beta conditional: dimension mismatch");
  if (tau < 0.0) throw std::invalid_argument("beta conditional: tau must be nonnegative");
  const auto q = random_walk_structure(z.rows());
  Eigen::MatrixXd qz(z.rows(), z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) qz.col(j) = q.multiply(z.col(j));
  const Eigen::VectorXd prior_precision = prior.variance.cwiseInverse();
  Eigen::MatrixXd precision = tau * (z.transpose() * qz);
  precision.diagonal() += prior_precision;
  const Eigen::VectorXd rhs =
      tau * (qz.transpose() * log_sizes) + prior_precision.cwiseProduct(prior.mean);
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) throw NumericalError("beta conditional: singular precision");
  return {llt.solve(rhs), precision};
}

TridiagonalGaussian missing_conditional(const Eigen::VectorXd& column, double kappa) {
  if (!(kappa > 0.0)) throw std::invalid_argument("missing conditional: kappa must be positive");
  std::vector<Eigen::Index> missing;
  for (Eigen::Index i = 0; i < column.size(); ++i) {
    if (std::isnan(column[i])) missing.push_back(i);
  }
  if (missing.size() == static_cast<std::size_t>(column.size())) {
    throw DataError("missing conditional: column has no observed values");
  }
  if (missing.empty()) return {Eigen::VectorXd(), SymTridiagonal(Eigen::VectorXd(), Eigen::VectorXd())};
  const auto r = random_walk_structure(column.size());
  const auto block = r.submatrix(missing);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(missing.size()));
  for (std::size_t a = 0; a < missing.size(); ++a) {
    const Eigen::Index i = missing[a];
    if (i > 0 && !std::isnan(column[i - 1])) rhs[static_cast<Eigen::Index>(a)] -= r.off[i - 1] * column[i - 1];
    if (i + 1 < column.size() && !std::isnan(column[i + 1])) {
      rhs[static_cast<Eigen::Index>(a)] -= r.off[i] * column[i + 1];
    }
  }
  TridiagonalCholesky chol(block);
  return {chol.solve(rhs), block.scaled(kappa)};
}

TridiagonalGaussian missing_conditional_trailing(const Eigen::VectorXd& column, double kappa) {
  if (!(kappa > 0.0)) throw std::invalid_argument("missing conditional: kappa must be positive");
  const Eigen::Index n = column.size();
  Eigen::Index observed = 0;
  while (observed < n && !std::isnan(column[observed])) ++observed;
  if (observed == 0) throw DataError("missing conditional: column has no observed values");
  for (Eigen::Index i = observed; i < n; ++i) {
    if (!std::isnan(column[i])) {
      throw DataError("missing conditional: missing cells are not a trailing block");
    }
  }
  std::vector<Eigen::Index> missing;
  for (Eigen::Index i = observed; i < n; ++i) missing.push_back(i);
  const auto p22 = random_walk_structure(n).submatrix(missing);
  return {Eigen::VectorXd::Constant(n - observed, column[observed - 1]), p22.scaled(kappa)};
}

}  // namespace skygrid
