#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "skygrid/coalescent.hpp"
#include "skygrid/prior_glm.hpp"
#include "skygrid/tridiagonal.hpp"

namespace skygrid {

using Rng = std::mt19937_64;

/// Seeds a chain's generator from the run seed and a stream index.
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

enum class MissingPolicy { kRandomWalk, kUniform };

/// Everything the sampler conditions on: data summaries, covariates, priors.
struct Model {
  SufficientStatistics stats;
  CovariateMatrix covariates;
  HyperParams hyper;
  BetaPrior beta_prior;
  MissingPolicy missing_policy = MissingPolicy::kRandomWalk;
  /// Per-column [low, high] for the uniform missing-cell prior.
  std::vector<std::pair<double, double>> uniform_bounds;
  /// When false the beta machinery is bypassed entirely (Z beta == 0).
  bool glm_enabled = true;

  Eigen::Index intervals() const { return static_cast<Eigen::Index>(stats.num_intervals()); }
  bool uses_glm() const { return glm_enabled && covariates.cols() > 0; }
  bool imputes() const { return uses_glm() && covariates.has_missing(); }
  void validate() const;

  /// Builds a model, filling in uniform bounds from observed ranges when needed.
  static Model make(SufficientStatistics stats, CovariateMatrix covariates,
                    HyperParams hyper = {}, std::optional<BetaPrior> beta_prior = std::nullopt);
};

struct ChainState {
  Eigen::VectorXd log_sizes;
  double tau = 1.0;
  Eigen::VectorXd beta;
  /// Fully instantiated design matrix (observed cells plus current imputations).
  Eigen::MatrixXd z;
  double kappa = 1.0;

  double log_likelihood = 0.0;
  double log_gmrf_prior = 0.0;

  Eigen::VectorXd covariate_effect() const;
};

ChainState initial_state(const Model& model);
void refresh_caches(ChainState& state, const Model& model);
/// Throws NumericalError when the cached terms disagree with fresh evaluation.
void check_caches(const ChainState& state, const Model& model);
double log_posterior(const ChainState& state, const Model& model);

// -- tau scale proposal -----------------------------------------------------

struct TauProposal {
  double tau = 0.0;
  double scale = 1.0;
  /// log q(tau | tau*) - log q(tau* | tau).
  double log_correction = 0.0;
};

/// Hastings term for a multiplicative move by f under the f + 1/f density: -log f.
double tau_log_correction(double scale);
/// CDF of the scale density proportional to f + 1/f on [1/F, F].
double tau_scale_cdf(double f, double tuning);
double draw_tau_scale(double tuning, Rng& rng);
TauProposal propose_tau(double tau, double tuning, Rng& rng);

// -- gamma full conditional --------------------------------------------------

/// f(gamma) = -tau/2 gamma'Q gamma + (Z beta)' tau Q gamma - sum_k (gamma_k c_k + SS_k e^{-gamma_k}),
/// the log full conditional of gamma up to a constant.
class ConditionalObjective {
 public:
  ConditionalObjective(const SufficientStatistics& stats, Eigen::VectorXd covariate_effect, double tau);

  double value(const Eigen::VectorXd& g) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& g) const;
  /// -d2f = tau Q + diag(SS_k e^{-gamma_k}).
  SymTridiagonal negative_hessian(const Eigen::VectorXd& g) const;

  double tau() const { return tau_; }
  const SufficientStatistics& stats() const { return stats_; }
  const Eigen::VectorXd& prior_shift() const { return q_zbeta_; }

 private:
  const SufficientStatistics& stats_;
  SymTridiagonal q_;
  double tau_;
  Eigen::VectorXd q_zbeta_;  // tau Q Z beta
};

struct NewtonOptions {
  int max_iterations = 25;
  double tolerance = 1e-8;
  int max_halvings = 40;
};

struct NewtonResult {
  Eigen::VectorXd mode;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
};

NewtonResult newton_raphson_mode(const Eigen::VectorXd& start, const SufficientStatistics& stats,
                                 const Eigen::VectorXd& covariate_effect, double tau,
                                 const NewtonOptions& options = {});

/// Second-order Gaussian approximation of the gamma full conditional, from a
/// Taylor expansion of each likelihood term about `center`.
class GaussianProposal {
 public:
  GaussianProposal(Eigen::VectorXd center, SymTridiagonal precision, Eigen::VectorXd linear);

  const Eigen::VectorXd& center() const { return center_; }
  const SymTridiagonal& precision() const { return precision_; }
  const Eigen::VectorXd& linear() const { return linear_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  double log_normalizer() const { return log_normalizer_; }

  /// Normalized log density: log_normalizer - x'Px/2 + linear'x.
  double log_density(const Eigen::VectorXd& x) const;
  Eigen::VectorXd sample(Rng& rng) const { return chol_.sample(mean_, rng); }

 private:
  Eigen::VectorXd center_;
  SymTridiagonal precision_;
  Eigen::VectorXd linear_;
  TridiagonalCholesky chol_;
  Eigen::VectorXd mean_;
  double log_normalizer_ = 0.0;
};

GaussianProposal gaussian_approx(const Eigen::VectorXd& center, const SufficientStatistics& stats,
                                 const Eigen::VectorXd& covariate_effect, double tau);

/// log P(gamma, tau | g, Z, beta) up to a constant.
double log_block_target(const Eigen::VectorXd& log_sizes, double tau, const ChainState& state,
                        const Model& model);

/// Full MH log acceptance ratio for moving (gamma, tau) to the candidate,
/// building the forward and reverse Gaussian proposals.
double block_log_acceptance(const ChainState& state, const Model& model, double tau_star,
                            const Eigen::VectorXd& gamma_star, double log_correction,
                            const NewtonOptions& options = {});

struct KernelCounters {
  std::uint64_t attempts = 0;
  std::uint64_t accepts = 0;
  std::uint64_t failures = 0;
};

struct BlockOptions {
  NewtonOptions newton;
  bool fix_tau = false;
};

/// Joint (tau, gamma) Metropolis-Hastings update. Numerical failures reject.
bool block_update(ChainState& state, const Model& model, Rng& rng, const BlockOptions& options,
                  KernelCounters* counters = nullptr);

/// Exact Gibbs draw of beta from its conjugate Gaussian conditional.
void gibbs_update_beta(ChainState& state, const Model& model, Rng& rng);

/// Full conditional of the missing cells of column `col` given everything else
/// (random-walk policy): precision kappa R_mm + tau beta_j^2 Q_mm.
TridiagonalGaussian covariate_full_conditional(const ChainState& state, const Model& model,
                                               Eigen::Index col);

/// Log joint density of the terms that involve Z^mis and kappa:
/// GMRF-GLM prior on gamma, random walk on imputed columns, kappa prior.
double log_covariate_joint(const ChainState& state, const Model& model);

/// Gibbs draw of Z^mis column by column, then the conjugate kappa draw.
void update_covariate_model(ChainState& state, const Model& model, Rng& rng);

// -- chain orchestration -----------------------------------------------------

struct KernelWeights {
  int block = 1;
  int beta = 1;
  int covariates = 1;
};

struct ChainConfig {
  std::uint64_t iterations = 1'000'000;
  std::uint64_t thinning = 100;
  std::uint64_t seed = 1;
  std::uint64_t stream = 0;
  KernelWeights weights;
  BlockOptions block;
  bool validate_caches = false;

  void validate() const;
};

struct TraceSample {
  std::uint64_t iteration = 0;
  double log_posterior = 0.0;
  double log_likelihood = 0.0;
  double tau = 0.0;
  double kappa = 0.0;
  Eigen::VectorXd log_sizes;
  Eigen::VectorXd beta;
};

struct Trace {
  TraceSample initial;
  std::vector<TraceSample> samples;
  KernelCounters block;
  KernelCounters beta;
  KernelCounters covariates;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::string fingerprint;
};

TraceSample snapshot(const ChainState& state, const Model& model, std::uint64_t iteration);

Trace run_chain(const ChainConfig& config, const Model& model,
                std::optional<ChainState> start = std::nullopt);

}  // namespace skygrid
