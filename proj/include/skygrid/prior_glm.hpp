#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "skygrid/errors.hpp"
#include "skygrid/tridiagonal.hpp"

namespace skygrid {

/// First-order random-walk structure matrix on n points: tridiagonal, -1 off
/// the diagonal, 1 at both ends and 2 in between. Rows sum to zero; the
/// constant vector spans the null space. Serves as both the GMRF precision Q
/// and the covariate random-walk precision. For n == 1 it is [0].
SymTridiagonal random_walk_structure(Eigen::Index n);

enum class CovariateTransform { kIdentity, kLog, kLog1p };

CovariateTransform parse_transform(const std::string& name);
std::string transform_name(CovariateTransform t);

/// Covariate table as read from CSV: one row per measurement time, NaN for
/// missing cells, before any transformation.
struct CovariateTable {
  std::vector<double> times;
  std::vector<std::string> labels;
  Eigen::MatrixXd values;
};

/// Header: time column then one column per covariate. Empty or "NA" cells are missing.
CovariateTable read_covariate_csv(const std::string& path);

struct CovariateOptions {
  std::map<std::string, CovariateTransform> transforms;
  bool standardize = false;
  bool intercept = false;
};

/// The (M+1) x P design matrix Z. Row k belongs to trajectory interval k.
/// Missing cells are flagged in the mask and hold NaN in `observed()`.
class CovariateMatrix {
 public:
  CovariateMatrix() = default;
  CovariateMatrix(Eigen::MatrixXd observed, std::vector<std::string> labels,
                  std::vector<CovariateTransform> transforms = {});

  /// A matrix with no columns for a trajectory of `rows` intervals.
  static CovariateMatrix none(Eigen::Index rows);

  /// Applies per-column transforms, optional standardization and intercept.
  static CovariateMatrix prepare(const CovariateTable& table, const CovariateOptions& options);

  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return observed_.cols(); }
  const Eigen::MatrixXd& observed() const { return observed_; }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<CovariateTransform>& transforms() const { return transforms_; }

  bool is_missing(Eigen::Index row, Eigen::Index col) const { return std::isnan(observed_(row, col)); }
  bool has_missing() const;
  std::vector<Eigen::Index> missing_rows(Eigen::Index col) const;
  std::vector<Eigen::Index> columns_with_missing() const;

  /// Fills missing cells by carrying the nearest earlier observation forward
  /// (or the first observation backward for a leading gap).
  Eigen::MatrixXd initial_fill() const;

 private:
  Eigen::Index rows_ = 0;
  Eigen::MatrixXd observed_;
  std::vector<std::string> labels_;
  std::vector<CovariateTransform> transforms_;
};

/// Gaussian prior N(mean, diag(variance)) on the effect sizes.
struct BetaPrior {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;

  static BetaPrior diffuse(Eigen::Index p, double variance = 100.0);
  void validate(Eigen::Index p) const;
};

struct HyperParams {
  double tau_shape = 0.001;
  double tau_rate = 0.001;
  double kappa_shape = 0.001;
  double kappa_rate = 0.001;
  /// Scale-proposal tuning F > 1.
  double tau_tuning = 1.5;

  void validate() const;
};

/// log of tau^{M/2} exp(-tau/2 (gamma - Z beta)' Q (gamma - Z beta)), with M = rank(Q).
double gmrf_log_prior(const Eigen::VectorXd& log_sizes, const Eigen::VectorXd& covariate_effect,
                      double tau);
double gmrf_log_prior(const Eigen::VectorXd& log_sizes, const Eigen::MatrixXd& z,
                      const Eigen::VectorXd& beta, double tau);

struct NormalParams {
  double mean = 0.0;
  double variance = 1.0;
};

/// Full conditional of gamma_i (0-based) given the rest under the GMRF-GLM prior.
NormalParams full_conditional_component(std::size_t i, const Eigen::VectorXd& log_sizes,
                                        const Eigen::VectorXd& covariate_effect, double tau);

/// Dense Gaussian in precision form.
struct DenseGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd precision;

  template <class Rng>
  Eigen::VectorXd sample(Rng& rng) const {
    Eigen::LLT<Eigen::MatrixXd> llt(precision);
    if (llt.info() != Eigen::Success) throw NumericalError("gaussian: precision is not positive definite");
    std::normal_distribution<double> normal;
    Eigen::VectorXd z(mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
    return mean + llt.matrixU().solve(z);
  }
};

/// Conjugate conditional of beta: precision tau Z'QZ + V^{-1}, mean solving
/// precision * m = tau Z'Q gamma + V^{-1} mu.
DenseGaussian beta_full_conditional(const Eigen::VectorXd& log_sizes, const Eigen::MatrixXd& z,
                                    double tau, const BetaPrior& prior);

/// Conditional of the missing cells of one covariate column given its observed
/// cells under the random walk with precision kappa. `column` holds NaN at
/// missing rows. Any missing pattern is handled by conditioning the joint
/// random-walk Gaussian.
TridiagonalGaussian missing_conditional(const Eigen::VectorXd& column, double kappa);

/// Closed form for the trailing-block layout (observed rows 0..K, missing
/// K+1..M): mean Z_K in every entry, precision kappa * P22. Rejects any other pattern.
TridiagonalGaussian missing_conditional_trailing(const Eigen::VectorXd& column, double kappa);

}  // namespace skygrid
