#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "skygrid/errors.hpp"

namespace skygrid {

/// Symmetric tridiagonal matrix stored as its diagonal and first off-diagonal.
struct SymTridiagonal {
  Eigen::VectorXd diag;
  Eigen::VectorXd off;  // size n-1 (empty when n <= 1)

  SymTridiagonal() = default;
  SymTridiagonal(Eigen::VectorXd d, Eigen::VectorXd o) : diag(std::move(d)), off(std::move(o)) {
    if (diag.size() > 0 && off.size() != diag.size() - 1) {
      throw NumericalError("tridiagonal: off-diagonal has wrong length");
    }
  }

  Eigen::Index size() const { return diag.size(); }

  Eigen::VectorXd multiply(const Eigen::VectorXd& x) const {
    Eigen::VectorXd y = diag.cwiseProduct(x);
    for (Eigen::Index i = 0; i + 1 < size(); ++i) {
      y[i] += off[i] * x[i + 1];
      y[i + 1] += off[i] * x[i];
    }
    return y;
  }

  double quadratic_form(const Eigen::VectorXd& x) const { return x.dot(multiply(x)); }

  SymTridiagonal scaled(double s) const { return {diag * s, off * s}; }

  SymTridiagonal plus_diagonal(const Eigen::VectorXd& d) const { return {diag + d, off}; }

  /// Principal submatrix on sorted indices. Still tridiagonal: entries between
  /// non-adjacent original indices are zero.
  SymTridiagonal submatrix(const std::vector<Eigen::Index>& idx) const {
    const auto n = static_cast<Eigen::Index>(idx.size());
    Eigen::VectorXd d(n);
    Eigen::VectorXd o(n > 0 ? n - 1 : 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      d[i] = diag[idx[static_cast<std::size_t>(i)]];
      if (i + 1 < n) {
        const auto a = idx[static_cast<std::size_t>(i)];
        const auto b = idx[static_cast<std::size_t>(i + 1)];
        o[i] = b == a + 1 ? off[a] : 0.0;
      }
    }
    return {d, o};
  }

  Eigen::MatrixXd dense() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(size(), size());
    m.diagonal() = diag;
    for (Eigen::Index i = 0; i + 1 < size(); ++i) m(i, i + 1) = m(i + 1, i) = off[i];
    return m;
  }
};

/// Cholesky factor L (lower bidiagonal) of a positive-definite tridiagonal
/// matrix, A = L L'. Every operation is linear in the dimension.
class TridiagonalCholesky {
 public:
  explicit TridiagonalCholesky(const SymTridiagonal& a) : diag_(a.size()), sub_(a.off.size()) {
    const Eigen::Index n = a.size();
    if (n == 0) throw NumericalError("tridiagonal cholesky: empty matrix");
    double pivot = a.diag[0];
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(pivot > 0.0) || !std::isfinite(pivot)) {
        throw NumericalError("tridiagonal cholesky: matrix is not positive definite");
      }
      diag_[i] = std::sqrt(pivot);
      if (i + 1 < n) {
        sub_[i] = a.off[i] / diag_[i];
        pivot = a.diag[i + 1] - sub_[i] * sub_[i];
      }
    }
  }

  Eigen::Index size() const { return diag_.size(); }

  double log_determinant() const { return 2.0 * diag_.array().log().sum(); }

  /// Solves L y = b.
  Eigen::VectorXd solve_lower(const Eigen::VectorXd& b) const {
    Eigen::VectorXd y(size());
    y[0] = b[0] / diag_[0];
    for (Eigen::Index i = 1; i < size(); ++i) y[i] = (b[i] - sub_[i - 1] * y[i - 1]) / diag_[i];
    return y;
  }

  /// Solves L' x = y.
  Eigen::VectorXd solve_upper(const Eigen::VectorXd& y) const {
    const Eigen::Index n = size();
    Eigen::VectorXd x(n);
    x[n - 1] = y[n - 1] / diag_[n - 1];
    for (Eigen::Index i = n - 2; i >= 0; --i) x[i] = (y[i] - sub_[i] * x[i + 1]) / diag_[i];
    return x;
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const { return solve_upper(solve_lower(b)); }

  /// Draw from N(mean, A^{-1}): mean + L'^{-1} z with z standard normal.
  template <class Rng>
  Eigen::VectorXd sample(const Eigen::VectorXd& mean, Rng& rng) const {
    std::normal_distribution<double> normal;
    Eigen::VectorXd z(size());
    for (Eigen::Index i = 0; i < size(); ++i) z[i] = normal(rng);
    return mean + solve_upper(z);
  }

 private:
  Eigen::VectorXd diag_;
  Eigen::VectorXd sub_;
};

/// Gaussian in canonical form with tridiagonal precision.
struct TridiagonalGaussian {
  Eigen::VectorXd mean;
  SymTridiagonal precision;

  double log_density(const Eigen::VectorXd& x) const {
    return log_density(x, TridiagonalCholesky(precision));
  }

  double log_density(const Eigen::VectorXd& x, const TridiagonalCholesky& chol) const {
    const Eigen::VectorXd d = x - mean;
    return 0.5 * chol.log_determinant() -
           0.5 * static_cast<double>(d.size()) * std::log(2.0 * std::numbers::pi) -
           0.5 * precision.quadratic_form(d);
  }

  template <class Rng>
  Eigen::VectorXd sample(Rng& rng) const {
    return TridiagonalCholesky(precision).sample(mean, rng);
  }
};

}  // namespace skygrid
