#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "skygrid/coalescent.hpp"
#include "skygrid/genealogy.hpp"
#include "skygrid/prior_glm.hpp"
#include "skygrid/sampler.hpp"
#include "skygrid/simulator.hpp"

namespace py = pybind11;
using namespace skygrid;

namespace {

TipDateOptions make_dates(const std::map<std::string, double>& dates, const std::string& convention,
                          std::optional<char> delimiter) {
  TipDateOptions o;
  o.table = dates;
  o.label_delimiter = delimiter;
  if (convention == "calendar") o.convention = DateConvention::kCalendar;
  else if (convention != "backward") throw py::value_error("convention must be 'backward' or 'calendar'");
  return o;
}

SufficientStatistics stats_from(const Eigen::VectorXd& counts, const Eigen::VectorXd& lineage_time) {
  return SufficientStatistics::from_totals(counts, lineage_time);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Skygrid coalescent inference with a GMRF-GLM prior on log effective population size";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<Genealogy>(m, "Genealogy")
      .def_property_readonly("tip_count", &Genealogy::tip_count)
      .def_property_readonly("root_time", &Genealogy::root_time)
      .def_property_readonly("locus", &Genealogy::locus)
      .def("tip_times", &Genealogy::tip_times)
      .def("coalescent_times", &Genealogy::coalescent_times)
      .def("to_newick", [](const Genealogy& g) { return emit_newick(g); });

  m.def("parse_genealogy",
        [](const std::string& text, const std::map<std::string, double>& dates, const std::string& convention,
           std::optional<char> delimiter) { return parse_genealogy(text, make_dates(dates, convention, delimiter)); },
        py::arg("newick"), py::arg("dates") = std::map<std::string, double>{}, py::arg("convention") = "backward",
        py::arg("delimiter") = py::none());

  m.def("event_timeline", [](const Genealogy& g) {
    std::vector<std::tuple<double, std::string, int>> out;
    for (const auto& e : event_timeline(g).events()) {
      out.emplace_back(e.time, e.kind == EventKind::kSampling ? "sampling" : "coalescent", e.lineages_after);
    }
    return out;
  });

  py::class_<GridSpec>(m, "GridSpec")
      .def(py::init<std::vector<double>>())
      .def_static("uniform", &GridSpec::uniform, py::arg("points"), py::arg("cutoff"))
      .def_property_readonly("points", &GridSpec::points)
      .def_property_readonly("num_intervals", &GridSpec::num_intervals);

  m.def("compute_sufficient_statistics", [](const std::vector<Genealogy>& trees, const GridSpec& grid) {
    std::vector<EventTimeline> tl;
    for (const auto& g : trees) tl.push_back(event_timeline(g));
    const auto s = compute_sufficient_statistics(tl, grid);
    return py::make_tuple(s.counts, s.lineage_time);
  });

  m.def("log_likelihood",
        [](const Eigen::VectorXd& c, const Eigen::VectorXd& ss, const Eigen::VectorXd& g) {
          return log_likelihood(stats_from(c, ss), g);
        },
        py::arg("counts"), py::arg("lineage_time"), py::arg("log_sizes"));

  m.def("log_likelihood_derivatives",
        [](const Eigen::VectorXd& c, const Eigen::VectorXd& ss, const Eigen::VectorXd& g) {
          const auto d = log_likelihood_derivatives(stats_from(c, ss), g);
          return py::make_tuple(d.gradient, d.curvature);
        },
        py::arg("counts"), py::arg("lineage_time"), py::arg("log_sizes"));

  m.def("gmrf_log_prior",
        [](const Eigen::VectorXd& g, const Eigen::MatrixXd& z, const Eigen::VectorXd& beta, double tau) {
          return gmrf_log_prior(g, z, beta, tau);
        },
        py::arg("log_sizes"), py::arg("z"), py::arg("beta"), py::arg("tau"));

  m.def("full_conditional_component",
        [](std::size_t i, const Eigen::VectorXd& g, const Eigen::VectorXd& zbeta, double tau) {
          const auto p = full_conditional_component(i, g, zbeta, tau);
          return py::make_tuple(p.mean, p.variance);
        },
        py::arg("index"), py::arg("log_sizes"), py::arg("covariate_effect"), py::arg("tau"));

  m.def("missing_conditional",
        [](const Eigen::VectorXd& column, double kappa) {
          const auto g = missing_conditional(column, kappa);
          return py::make_tuple(g.mean, Eigen::MatrixXd(g.precision.dense()));
        },
        py::arg("column"), py::arg("kappa"));

  m.def("tau_scale_cdf", &tau_scale_cdf, py::arg("f"), py::arg("tuning"));

  m.def("newton_raphson_mode",
        [](const Eigen::VectorXd& start, const Eigen::VectorXd& c, const Eigen::VectorXd& ss,
           const Eigen::VectorXd& zbeta, double tau) {
          const auto r = newton_raphson_mode(start, stats_from(c, ss), zbeta, tau);
          return py::make_tuple(r.mode, r.converged);
        },
        py::arg("start"), py::arg("counts"), py::arg("lineage_time"), py::arg("covariate_effect"), py::arg("tau"));

  m.def("run_chain",
        [](const Eigen::VectorXd& c, const Eigen::VectorXd& ss, std::optional<Eigen::MatrixXd> z,
           std::uint64_t iterations, std::uint64_t thinning, std::uint64_t seed) {
          auto stats = stats_from(c, ss);
          CovariateMatrix cov = CovariateMatrix::none(c.size());
          if (z) {
            std::vector<std::string> labels;
            for (Eigen::Index j = 0; j < z->cols(); ++j) labels.push_back("z" + std::to_string(j + 1));
            cov = CovariateMatrix(*z, labels);
          }
          const Model model = Model::make(std::move(stats), cov);
          ChainConfig cfg;
          cfg.iterations = iterations;
          cfg.thinning = thinning;
          cfg.seed = seed;
          Trace trace;
          {
            py::gil_scoped_release release;
            trace = run_chain(cfg, model);
          }
          const auto n = static_cast<Eigen::Index>(trace.samples.size());
          Eigen::MatrixXd gamma(n, c.size());
          Eigen::MatrixXd beta(n, model.uses_glm() ? model.covariates.cols() : 0);
          Eigen::VectorXd tau(n);
          Eigen::VectorXd lp(n);
          for (Eigen::Index i = 0; i < n; ++i) {
            const auto& s = trace.samples[static_cast<std::size_t>(i)];
            gamma.row(i) = s.log_sizes.transpose();
            if (beta.cols() > 0) beta.row(i) = s.beta.transpose();
            tau[i] = s.tau;
            lp[i] = s.log_posterior;
          }
          py::dict out;
          out["log_sizes"] = gamma;
          out["beta"] = beta;
          out["tau"] = tau;
          out["log_posterior"] = lp;
          out["block_acceptance"] =
              trace.block.attempts ? double(trace.block.accepts) / double(trace.block.attempts) : 0.0;
          return out;
        },
        py::arg("counts"), py::arg("lineage_time"), py::arg("z") = py::none(), py::arg("iterations") = 1000,
        py::arg("thinning") = 10, py::arg("seed") = 1);

  m.def("simulate_genealogy",
        [](const std::vector<std::pair<double, int>>& schedule, const GridSpec& grid, const Eigen::VectorXd& log_sizes,
           std::uint64_t seed) {
          std::vector<SamplingEvent> events;
          for (const auto& [t, n] : schedule) events.push_back({t, n});
          Rng rng = make_rng(seed);
          return simulate_genealogy(events, grid, log_sizes, rng);
        },
        py::arg("schedule"), py::arg("grid"), py::arg("log_sizes"), py::arg("seed") = 1);

  m.def("simulate_trajectory_and_covariates",
        [](const GridSpec& grid, const Eigen::VectorXd& beta, double tau, std::uint64_t seed) {
          Rng rng = make_rng(seed);
          const auto s = simulate_trajectory_and_covariates(grid, beta, tau, rng);
          return py::make_tuple(s.log_sizes, Eigen::MatrixXd(s.covariates.observed()));
        },
        py::arg("grid"), py::arg("beta"), py::arg("tau"), py::arg("seed") = 1);
}
