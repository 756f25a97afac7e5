#include "skygrid/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>

namespace skygrid {

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

void Model::validate() const {
  if (intervals() < 1) throw DataError("model: no trajectory intervals");
  if (stats.lineage_time.size() != intervals()) throw DataError("model: malformed statistics");
  if (covariates.cols() > 0 && covariates.rows() != intervals()) {
    throw DataError("model: covariate rows (" + std::to_string(covariates.rows()) +
                    ") must match trajectory intervals (" + std::to_string(intervals()) + ")");
  }
  hyper.validate();
  beta_prior.validate(covariates.cols());
  if (missing_policy == MissingPolicy::kUniform &&
      static_cast<Eigen::Index>(uniform_bounds.size()) != covariates.cols()) {
    throw ConfigError("model: uniform missing-value bounds needed for every covariate");
  }
  for (const auto& [lo, hi] : uniform_bounds) {
    if (!(lo < hi)) throw ConfigError("model: uniform bounds must satisfy low < high");
  }
}

Model Model::make(SufficientStatistics stats, CovariateMatrix covariates, HyperParams hyper,
                  std::optional<BetaPrior> beta_prior) {
  Model m;
  if (covariates.rows() == 0) covariates = CovariateMatrix::none(static_cast<Eigen::Index>(stats.num_intervals()));
  m.beta_prior = beta_prior.value_or(BetaPrior::diffuse(covariates.cols()));
  m.stats = std::move(stats);
  m.covariates = std::move(covariates);
  m.hyper = hyper;
  for (Eigen::Index j = 0; j < m.covariates.cols(); ++j) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (Eigen::Index i = 0; i < m.covariates.rows(); ++i) {
      const double v = m.covariates.observed()(i, j);
      if (std::isnan(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (!(lo < hi)) {
      lo -= 1.0;
      hi += 1.0;
    }
    m.uniform_bounds.emplace_back(lo, hi);
  }
  return m;
}

Eigen::VectorXd ChainState::covariate_effect() const {
  if (z.cols() == 0 || beta.size() == 0) return Eigen::VectorXd::Zero(log_sizes.size());
  return z * beta;
}

void refresh_caches(ChainState& state, const Model& model) {
  state.log_likelihood = log_likelihood(model.stats, state.log_sizes);
  state.log_gmrf_prior = gmrf_log_prior(state.log_sizes, state.covariate_effect(), state.tau);
}

void check_caches(const ChainState& state, const Model& model) {
  const double ll = log_likelihood(model.stats, state.log_sizes);
  const double lp = gmrf_log_prior(state.log_sizes, state.covariate_effect(), state.tau);
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)); };
  if (!close(state.log_likelihood, ll) || !close(state.log_gmrf_prior, lp)) {
    throw NumericalError("chain state: cached log densities are stale");
  }
}

ChainState initial_state(const Model& model) {
  model.validate();
  ChainState s;
  const double c = model.stats.counts.sum();
  const double ss = model.stats.lineage_time.sum();
  const double level = c > 0.0 && ss > 0.0 ? std::log(ss / c) : 0.0;
  s.log_sizes = Eigen::VectorXd::Constant(model.intervals(), level);
  s.tau = 1.0;
  s.kappa = 1.0;
  if (model.uses_glm()) {
    s.beta = model.beta_prior.mean;
    s.z = model.covariates.initial_fill();
  } else {
    s.beta = Eigen::VectorXd();
    s.z = Eigen::MatrixXd(model.intervals(), 0);
  }
  try {
    s.log_sizes = newton_raphson_mode(s.log_sizes, model.stats, s.covariate_effect(), s.tau).mode;
  } catch (const NumericalError&) {
    // keep the constant start
  }
  refresh_caches(s, model);
  return s;
}

namespace {

double log_gamma_kernel(double x, double shape, double rate) {
  return (shape - 1.0) * std::log(x) - rate * x;
}

}  // namespace

double log_covariate_joint(const ChainState& state, const Model& model) {
  double total = gmrf_log_prior(state.log_sizes, state.covariate_effect(), state.tau);
  if (model.imputes() && model.missing_policy == MissingPolicy::kRandomWalk) {
    const auto r = random_walk_structure(model.intervals());
    const double rank = static_cast<double>(model.intervals() - 1);
    for (Eigen::Index j : model.covariates.columns_with_missing()) {
      total += 0.5 * rank * std::log(state.kappa) -
               0.5 * state.kappa * r.quadratic_form(state.z.col(j));
    }
    total += log_gamma_kernel(state.kappa, model.hyper.kappa_shape, model.hyper.kappa_rate);
  }
  return total;
}

double log_posterior(const ChainState& state, const Model& model) {
  double lp = state.log_likelihood +
              log_gamma_kernel(state.tau, model.hyper.tau_shape, model.hyper.tau_rate);
  if (model.uses_glm()) {
    lp -= 0.5 * ((state.beta - model.beta_prior.mean).array().square() /
                 model.beta_prior.variance.array())
                    .sum();
  }
  if (model.imputes() && model.missing_policy == MissingPolicy::kRandomWalk) {
    lp += log_covariate_joint(state, model);
  } else {
    lp += state.log_gmrf_prior;
  }
  return lp;
}

// -- tau proposal ------------------------------------------------------------

double tau_log_correction(double scale) { return -std::log(scale); }

double tau_scale_cdf(double f, double tuning) {
  const double lo = 1.0 / tuning;
  if (f <= lo) return 0.0;
  if (f >= tuning) return 1.0;
  const double norm = 0.5 * (tuning * tuning - lo * lo) + 2.0 * std::log(tuning);
  return (0.5 * (f * f - lo * lo) + std::log(f) + std::log(tuning)) / norm;
}

double draw_tau_scale(double tuning, Rng& rng) {
  if (!(tuning > 1.0)) throw std::invalid_argument("tau proposal: tuning F must exceed 1");
  // f + 1/f is a mixture of a density proportional to f and a log-uniform one.
  const double lo2 = 1.0 / (tuning * tuning);
  const double linear_mass = 0.5 * (tuning * tuning - lo2);
  const double log_mass = 2.0 * std::log(tuning);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double pick = unif(rng);
  const double u = unif(rng);
  if (pick * (linear_mass + log_mass) < linear_mass) {
    return std::sqrt(lo2 + u * (tuning * tuning - lo2));
  }
  return std::pow(tuning, 2.0 * u - 1.0);
}

TauProposal propose_tau(double tau, double tuning, Rng& rng) {
  const double f = draw_tau_scale(tuning, rng);
  return {tau * f, f, tau_log_correction(f)};
}

// -- gamma conditional ---------------------------------------------------------

ConditionalObjective::ConditionalObjective(const SufficientStatistics& stats,
                                           Eigen::VectorXd covariate_effect, double tau)
    : stats_(stats), q_(random_walk_structure(static_cast<Eigen::Index>(stats.num_intervals()))), tau_(tau) {
  if (tau < 0.0) throw std::invalid_argument("objective: tau must be nonnegative");
  if (covariate_effect.size() != q_.size()) throw std::invalid_argument("objective: dimension mismatch");
  q_zbeta_ = tau * q_.multiply(covariate_effect);
}

double ConditionalObjective::value(const Eigen::VectorXd& g) const {
  return -0.5 * tau_ * q_.quadratic_form(g) + q_zbeta_.dot(g) + log_likelihood(stats_, g);
}

Eigen::VectorXd ConditionalObjective::gradient(const Eigen::VectorXd& g) const {
  return -tau_ * q_.multiply(g) + q_zbeta_ + log_likelihood_derivatives(stats_, g).gradient;
}

SymTridiagonal ConditionalObjective::negative_hessian(const Eigen::VectorXd& g) const {
  return q_.scaled(tau_).plus_diagonal(-log_likelihood_derivatives(stats_, g).curvature);
}

NewtonResult newton_raphson_mode(const Eigen::VectorXd& start, const SufficientStatistics& stats,
                                 const Eigen::VectorXd& covariate_effect, double tau,
                                 const NewtonOptions& options) {
  if (!start.allFinite()) throw NumericalError("newton: non-finite starting point");
  const ConditionalObjective f(stats, covariate_effect, tau);
  NewtonResult out;
  out.mode = start;
  double value = f.value(out.mode);
  if (!std::isfinite(value)) throw NumericalError("newton: objective not finite at start");
  Eigen::VectorXd grad = f.gradient(out.mode);
  for (;;) {
    out.gradient_norm = grad.lpNorm<Eigen::Infinity>();
    if (out.gradient_norm < options.tolerance) {
      out.converged = true;
      break;
    }
    if (out.iterations >= options.max_iterations) break;
    ++out.iterations;
    const Eigen::VectorXd step = TridiagonalCholesky(f.negative_hessian(out.mode)).solve(grad);
    double t = 1.0;
    int halvings = 0;
    for (;;) {
      const Eigen::VectorXd candidate = out.mode + t * step;
      const double cv = f.value(candidate);
      if (std::isfinite(cv) && cv >= value - 1e-12 * (1.0 + std::abs(value))) {
        out.mode = candidate;
        value = cv;
        break;
      }
      if (++halvings > options.max_halvings) throw NumericalError("newton: step halving exhausted");
      t *= 0.5;
    }
    grad = f.gradient(out.mode);
  }
  return out;
}

GaussianProposal::GaussianProposal(Eigen::VectorXd center, SymTridiagonal precision,
                                   Eigen::VectorXd linear)
    : center_(std::move(center)),
      precision_(std::move(precision)),
      linear_(std::move(linear)),
      chol_(precision_),
      mean_(chol_.solve(linear_)) {
  log_normalizer_ = 0.5 * chol_.log_determinant() -
                    0.5 * static_cast<double>(mean_.size()) * std::log(2.0 * std::numbers::pi) -
                    0.5 * mean_.dot(linear_);
}

double GaussianProposal::log_density(const Eigen::VectorXd& x) const {
  return log_normalizer_ - 0.5 * precision_.quadratic_form(x) + linear_.dot(x);
}

GaussianProposal gaussian_approx(const Eigen::VectorXd& center, const SufficientStatistics& stats,
                                 const Eigen::VectorXd& covariate_effect, double tau) {
  if (!center.allFinite()) throw NumericalError("gaussian approximation: non-finite center");
  const ConditionalObjective f(stats, covariate_effect, tau);
  const auto lik = log_likelihood_derivatives(stats, center);
  const Eigen::VectorXd e = -lik.curvature;  // SS_k exp(-center_k)
  Eigen::VectorXd linear = f.prior_shift() - (stats.counts - e - e.cwiseProduct(center));
  SymTridiagonal precision = f.negative_hessian(center);
  try {
    return GaussianProposal(center, std::move(precision), std::move(linear));
  } catch (const NumericalError&) {
    throw NumericalError("gaussian approximation: precision is not positive definite "
                         "(no lineage time in a stretch the prior cannot pin down)");
  }
}

double log_block_target(const Eigen::VectorXd& log_sizes, double tau, const ChainState& state,
                        const Model& model) {
  return log_likelihood(model.stats, log_sizes) +
         gmrf_log_prior(log_sizes, state.covariate_effect(), tau) +
         log_gamma_kernel(tau, model.hyper.tau_shape, model.hyper.tau_rate);
}

namespace {

GaussianProposal approximation_from(const Eigen::VectorXd& start, double tau, const Model& model,
                                    const Eigen::VectorXd& zbeta, const NewtonOptions& options) {
  const auto nr = newton_raphson_mode(start, model.stats, zbeta, tau, options);
  return gaussian_approx(nr.mode, model.stats, zbeta, tau);
}

double acceptance_given_forward(const ChainState& state, const Model& model, double tau_star,
                                const Eigen::VectorXd& gamma_star, double log_correction,
                                const GaussianProposal& forward, const NewtonOptions& options) {
  const Eigen::VectorXd zbeta = state.covariate_effect();
  const auto reverse = approximation_from(gamma_star, state.tau, model, zbeta, options);
  return log_block_target(gamma_star, tau_star, state, model) -
         log_block_target(state.log_sizes, state.tau, state, model) +
         reverse.log_density(state.log_sizes) - forward.log_density(gamma_star) + log_correction;
}

}  // namespace

double block_log_acceptance(const ChainState& state, const Model& model, double tau_star,
                            const Eigen::VectorXd& gamma_star, double log_correction,
                            const NewtonOptions& options) {
  const auto forward =
      approximation_from(state.log_sizes, tau_star, model, state.covariate_effect(), options);
  return acceptance_given_forward(state, model, tau_star, gamma_star, log_correction, forward, options);
}

bool block_update(ChainState& state, const Model& model, Rng& rng, const BlockOptions& options,
                  KernelCounters* counters) {
  if (counters) ++counters->attempts;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  try {
    const TauProposal tp = options.fix_tau ? TauProposal{state.tau, 1.0, 0.0}
                                           : propose_tau(state.tau, model.hyper.tau_tuning, rng);
    const auto forward = approximation_from(state.log_sizes, tp.tau, model,
                                            state.covariate_effect(), options.newton);
    const Eigen::VectorXd gamma_star = forward.sample(rng);
    const double log_alpha = acceptance_given_forward(state, model, tp.tau, gamma_star,
                                                      tp.log_correction, forward, options.newton);
    if (std::isnan(log_alpha)) throw NumericalError("block update: acceptance ratio is NaN");
    if (std::log(unif(rng)) < log_alpha) {
      state.log_sizes = gamma_star;
      state.tau = tp.tau;
      refresh_caches(state, model);
      if (counters) ++counters->accepts;
      return true;
    }
  } catch (const NumericalError&) {
    if (counters) ++counters->failures;
  }
  return false;
}

void gibbs_update_beta(ChainState& state, const Model& model, Rng& rng) {
  if (!model.uses_glm()) return;
  const auto cond = beta_full_conditional(state.log_sizes, state.z, state.tau, model.beta_prior);
  state.beta = cond.sample(rng);
  state.log_gmrf_prior = gmrf_log_prior(state.log_sizes, state.covariate_effect(), state.tau);
}

namespace {

// gamma - Z beta with column `col`'s missing cells removed from Z beta.
Eigen::VectorXd residual_without_missing(const ChainState& state, const Model& model, Eigen::Index col) {
  Eigen::VectorXd base = state.log_sizes - state.covariate_effect();
  for (Eigen::Index i : model.covariates.missing_rows(col)) base[i] += state.beta[col] * state.z(i, col);
  return base;
}

double draw_truncated_normal(double mean, double sd, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (!std::isfinite(mean) || !(sd > 0.0) || !std::isfinite(sd)) return lo + (hi - lo) * unif(rng);
  const boost::math::normal_distribution<double> n(mean, sd);
  // Work in the upper tail when it is the more accurate side.
  const bool flip = mean < lo;
  const double pa = flip ? boost::math::cdf(boost::math::complement(n, hi)) : boost::math::cdf(n, lo);
  const double pb = flip ? boost::math::cdf(boost::math::complement(n, lo)) : boost::math::cdf(n, hi);
  if (!(pb > pa)) return std::clamp(mean, lo, hi);
  const double p = pa + (pb - pa) * unif(rng);
  const double x = flip ? boost::math::quantile(boost::math::complement(n, p)) : boost::math::quantile(n, p);
  return std::clamp(x, lo, hi);
}

}  // namespace

TridiagonalGaussian covariate_full_conditional(const ChainState& state, const Model& model,
                                               Eigen::Index col) {
  const auto rows = model.covariates.missing_rows(col);
  if (rows.empty()) throw std::invalid_argument("covariate conditional: column has no missing cells");
  const auto r = random_walk_structure(model.intervals());
  const double b = state.beta[col];
  const SymTridiagonal block = r.submatrix(rows);
  const SymTridiagonal precision{block.diag * (state.kappa + state.tau * b * b),
                                 block.off * (state.kappa + state.tau * b * b)};

  const Eigen::VectorXd q_base = r.multiply(residual_without_missing(state, model, col));
  Eigen::VectorXd observed_part = model.covariates.observed().col(col);
  for (Eigen::Index i : rows) observed_part[i] = 0.0;
  const Eigen::VectorXd r_obs = r.multiply(observed_part);

  Eigen::VectorXd linear(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t a = 0; a < rows.size(); ++a) {
    linear[static_cast<Eigen::Index>(a)] = state.tau * b * q_base[rows[a]] - state.kappa * r_obs[rows[a]];
  }
  TridiagonalCholesky chol(precision);
  return {chol.solve(linear), precision};
}

void update_covariate_model(ChainState& state, const Model& model, Rng& rng) {
  if (!model.imputes()) return;
  const auto columns = model.covariates.columns_with_missing();
  if (model.missing_policy == MissingPolicy::kRandomWalk) {
    for (Eigen::Index j : columns) {
      const auto cond = covariate_full_conditional(state, model, j);
      const Eigen::VectorXd draw = cond.sample(rng);
      const auto rows = model.covariates.missing_rows(j);
      for (std::size_t a = 0; a < rows.size(); ++a) state.z(rows[a], j) = draw[static_cast<Eigen::Index>(a)];
    }
    const auto r = random_walk_structure(model.intervals());
    double sq = 0.0;
    for (Eigen::Index j : columns) sq += r.quadratic_form(state.z.col(j));
    const double shape = model.hyper.kappa_shape +
                         0.5 * static_cast<double>(columns.size()) * static_cast<double>(model.intervals() - 1);
    const double rate = model.hyper.kappa_rate + 0.5 * sq;
    std::gamma_distribution<double> gamma(shape, 1.0 / rate);
    state.kappa = std::max(gamma(rng), std::numeric_limits<double>::min());
  } else {
    const auto q = random_walk_structure(model.intervals());
    for (Eigen::Index j : columns) {
      const double b = state.beta[j];
      const auto [lo, hi] = model.uniform_bounds[static_cast<std::size_t>(j)];
      for (Eigen::Index i : model.covariates.missing_rows(j)) {
        Eigen::VectorXd base = state.log_sizes - state.covariate_effect();
        base[i] += b * state.z(i, j);
        const double precision = state.tau * b * b * q.diag[i];
        const double mean = precision > 0.0 ? state.tau * b * q.multiply(base)[i] / precision : 0.0;
        state.z(i, j) = precision > 0.0 ? draw_truncated_normal(mean, 1.0 / std::sqrt(precision), lo, hi, rng)
                                        : std::uniform_real_distribution<double>(lo, hi)(rng);
      }
    }
  }
  state.log_gmrf_prior = gmrf_log_prior(state.log_sizes, state.covariate_effect(), state.tau);
}

// -- chain -------------------------------------------------------------------------

void ChainConfig::validate() const {
  if (thinning == 0) throw ConfigError("mcmc: thinning must be at least 1");
  if (weights.block < 0 || weights.beta < 0 || weights.covariates < 0) {
    throw ConfigError("mcmc: kernel weights must be nonnegative");
  }
  if (block.newton.max_iterations < 1 || !(block.newton.tolerance > 0.0)) {
    throw ConfigError("mcmc: invalid Newton-Raphson settings");
  }
}

TraceSample snapshot(const ChainState& state, const Model& model, std::uint64_t iteration) {
  return {iteration, log_posterior(state, model), state.log_likelihood, state.tau, state.kappa,
          state.log_sizes, state.beta};
}

Trace run_chain(const ChainConfig& config, const Model& model, std::optional<ChainState> start) {
  config.validate();
  model.validate();
  ChainState state = start ? std::move(*start) : initial_state(model);
  refresh_caches(state, model);
  Rng rng = make_rng(config.seed, config.stream);

  Trace trace;
  trace.seed = config.seed;
  trace.stream = config.stream;
  trace.initial = snapshot(state, model, 0);
  trace.samples.reserve(static_cast<std::size_t>(config.iterations / config.thinning));

  for (std::uint64_t it = 0; it < config.iterations; ++it) {
    for (int k = 0; k < config.weights.block; ++k) block_update(state, model, rng, config.block, &trace.block);
    if (model.uses_glm()) {
      for (int k = 0; k < config.weights.beta; ++k) {
        gibbs_update_beta(state, model, rng);
        ++trace.beta.attempts;
        ++trace.beta.accepts;
      }
    }
    if (model.imputes()) {
      for (int k = 0; k < config.weights.covariates; ++k) {
        update_covariate_model(state, model, rng);
        ++trace.covariates.attempts;
        ++trace.covariates.accepts;
      }
    }
    if (config.validate_caches) check_caches(state, model);
    if ((it + 1) % config.thinning == 0) trace.samples.push_back(snapshot(state, model, it + 1));
  }
  return trace;
}

}  // namespace skygrid
