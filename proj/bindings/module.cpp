#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "emus/error_analysis.hpp"
#include "emus/experiments.hpp"
#include "emus/marginals.hpp"
#include "emus/mixture.hpp"
#include "emus/numerics.hpp"

namespace py = pybind11;
using namespace emus;

namespace {

std::vector<double> as_point(const std::vector<double>& x) { return x; }

Observable make_observable(const py::object& g) {
  if (g.is_none())
    return [](std::span<const double>) { return 1.0; };
  py::function fn = g.cast<py::function>();
  return [fn](std::span<const double> x) {
    py::gil_scoped_acquire gil;
    return fn(std::vector<double>(x.begin(), x.end())).cast<double>();
  };
}

py::array_t<double> states_array(const Trajectory& t) {
  py::array_t<double> out({static_cast<py::ssize_t>(t.size()),
                           static_cast<py::ssize_t>(t.dim())});
  std::copy(t.raw().begin(), t.raw().end(), out.mutable_data());
  return out;
}

py::dict stats_dict(const StratumStats& s) {
  py::dict d;
  d["stratum"] = s.stratum;
  d["count"] = s.count;
  d["observed"] = s.observed;
  d["overlap_row"] = Eigen::VectorXd(s.overlap_row);
  d["mean_g_star"] = s.mean_g_star;
  d["mean_one_star"] = s.mean_one_star;
  return d;
}

}  // namespace

PYBIND11_MODULE(_emus, m) {
  m.doc() = "Stratified MCMC estimation: bias families, samplers, the eigenvector "
            "estimator and its error analysis";

  // ------------------------------------------------------------------ bias
  py::class_<BiasSet, std::shared_ptr<BiasSet>>(m, "BiasSet")
      .def_property_readonly("size", &BiasSet::size)
      .def_property_readonly("dim", &BiasSet::dim)
      .def_property_readonly("partition_of_unity", &BiasSet::partition_of_unity)
      .def("in_domain", [](const BiasSet& b, std::vector<double> x) { return b.in_domain(x); })
      .def("evaluate",
           [](const BiasSet& b, std::vector<double> x) {
             return b.evaluate(std::span<const double>(x.data(), x.size()));
           })
      .def("value",
           [](const BiasSet& b, int i, std::vector<double> x) { return b.value(i, x); })
      .def("support",
           [](const BiasSet& b, int i) {
             auto box = b.support(i);
             std::vector<std::pair<double, double>> out;
             for (auto& ax : box.axes) out.emplace_back(ax.lo, ax.hi);
             return out;
           })
      .def("to_json", [](const BiasSet& b) { return bias_to_json(b).dump(); });

  m.def("bias_from_json", [](const std::string& text) {
    return std::shared_ptr<BiasSet>(bias_from_json(nlohmann::json::parse(text)));
  });

  m.def(
      "indicator_grid",
      [](int dim, int resolution, bool periodic, std::vector<double> lo,
         std::vector<double> hi) -> std::shared_ptr<BiasSet> {
        return std::make_shared<IndicatorGrid>(dim, resolution, periodic, std::move(lo),
                                               std::move(hi));
      },
      py::arg("dim"), py::arg("resolution"), py::arg("periodic") = false,
      py::arg("lo") = std::vector<double>{}, py::arg("hi") = std::vector<double>{});
  m.def(
      "tail_family",
      [](double threshold, int resolution) -> std::shared_ptr<BiasSet> {
        return std::make_shared<TailFamily>(threshold, resolution);
      },
      py::arg("threshold"), py::arg("resolution"));
  m.def(
      "make_tail_family",
      [](double threshold, const py::function& dV) -> std::shared_ptr<BiasSet> {
        auto fam = make_tail_family(threshold, [&dV](double x) {
          return dV(x).cast<double>();
        });
        return std::make_shared<TailFamily>(fam);
      },
      py::arg("threshold"), py::arg("potential_derivative"));
  m.def(
      "bilinear_grid",
      [](std::vector<double> lo, std::vector<double> hi,
         std::vector<int> nodes) -> std::shared_ptr<BiasSet> {
        return std::make_shared<BilinearGrid>(std::move(lo), std::move(hi), std::move(nodes));
      },
      py::arg("lo"), py::arg("hi"), py::arg("nodes"));
  m.def(
      "composed_bias",
      [](std::shared_ptr<BiasSet> inner, const std::string& cv_name) -> std::shared_ptr<BiasSet> {
        return std::make_shared<ComposedBias>(std::move(inner), cv_from_name(cv_name));
      },
      py::arg("inner"), py::arg("cv_name"));
  m.def(
      "subset_bias",
      [](std::shared_ptr<BiasSet> inner, std::vector<int> keep) -> std::shared_ptr<BiasSet> {
        return std::make_shared<SubsetBias>(std::move(inner), std::move(keep));
      },
      py::arg("inner"), py::arg("keep"));

  m.def("check_irreducibility", [](const BiasSet& bias) {
    auto rep = check_irreducibility(bias);
    return py::make_tuple(rep.irreducible, rep.witness);
  });
  m.def("check_irreducibility_samples",
        [](const BiasSet& bias, const std::vector<std::vector<std::vector<double>>>& samples) {
          auto rep = check_irreducibility(bias, samples);
          return py::make_tuple(rep.irreducible, rep.witness);
        });

  // --------------------------------------------------------------- targets
  py::class_<TargetModel>(m, "TargetModel")
      .def_property_readonly("dim", [](const TargetModel& t) { return t.dim; })
      .def("log_density",
           [](const TargetModel& t, std::vector<double> x) { return t.log_density(x); });
  m.def("gaussian_target", &gaussian_target, py::arg("mean") = 0.0, py::arg("sd") = 1.0,
        py::arg("dim") = 1);
  m.def("exp_halfline_target", &exp_halfline_target);
  m.def("periodic_cosine_target", &periodic_cosine_target, py::arg("beta"),
        py::arg("wells") = 2);
  m.def("flat_target", &flat_target, py::arg("lo"), py::arg("hi"));
  m.def("barrier_channels_target", &barrier_channels_target);

  // -------------------------------------------------------------- samplers
  py::class_<Trajectory>(m, "Trajectory")
      .def_property_readonly("states", &states_array)
      .def_property_readonly("stratum", [](const Trajectory& t) { return t.stratum; })
      .def_property_readonly("acceptance",
                             [](const Trajectory& t) { return t.info.acceptance; })
      .def_property_readonly("seed", [](const Trajectory& t) { return t.info.seed; })
      .def("save", &Trajectory::save)
      .def_static("load", &Trajectory::load);

  m.def(
      "rwm_chain",
      [](const TargetModel& target, std::shared_ptr<BiasSet> bias, int stratum,
         std::vector<double> x0, std::uint64_t steps, std::uint64_t burn_in, int thin,
         std::uint64_t seed, double step) {
        ChainConfig cfg{steps, burn_in, thin, seed};
        return rwm_chain(target, bias.get(), stratum, as_point(x0), cfg, step);
      },
      py::arg("target"), py::arg("bias") = nullptr, py::arg("stratum") = 0, py::arg("x0"),
      py::arg("steps"), py::arg("burn_in") = 0, py::arg("thin") = 1, py::arg("seed") = 1,
      py::arg("step") = 0.5);
  m.def(
      "langevin_chain",
      [](const TargetModel& target, std::shared_ptr<BiasSet> bias, int stratum,
         std::vector<double> x0, std::uint64_t steps, std::uint64_t burn_in, int thin,
         std::uint64_t seed, double dt, bool reflected) {
        ChainConfig cfg{steps, burn_in, thin, seed};
        return langevin_chain(target, bias.get(), stratum, as_point(x0), cfg, dt, reflected);
      },
      py::arg("target"), py::arg("bias") = nullptr, py::arg("stratum") = 0, py::arg("x0"),
      py::arg("steps"), py::arg("burn_in") = 0, py::arg("thin") = 1, py::arg("seed") = 1,
      py::arg("dt") = 1e-3, py::arg("reflected") = false);
  m.def(
      "ensemble_chain",
      [](const TargetModel& target, std::shared_ptr<BiasSet> bias, int stratum,
         std::vector<std::vector<double>> walkers, std::uint64_t sweeps, std::uint64_t burn_in,
         int thin, std::uint64_t seed, double stretch) {
        ChainConfig cfg{sweeps, burn_in, thin, seed};
        return ensemble_chain(target, bias.get(), stratum, walkers, cfg, stretch);
      },
      py::arg("target"), py::arg("bias") = nullptr, py::arg("stratum") = 0, py::arg("walkers"),
      py::arg("sweeps"), py::arg("burn_in") = 0, py::arg("thin") = 1, py::arg("seed") = 1,
      py::arg("stretch") = 2.0);
  m.def(
      "iid_chain",
      [](double c1, double c2, double lo, double hi, std::uint64_t n, std::uint64_t seed) {
        return iid_chain({c1, c2}, {lo, hi}, n, seed);
      },
      py::arg("c1"), py::arg("c2"), py::arg("lo"), py::arg("hi"), py::arg("n"),
      py::arg("seed") = 1);
  m.def(
      "iid_stratum_chain",
      [](double c1, double c2, const BiasSet& bias, int stratum, std::uint64_t n,
         std::uint64_t seed) { return iid_stratum_chain({c1, c2}, bias, stratum, n, seed); },
      py::arg("c1"), py::arg("c2"), py::arg("bias"), py::arg("stratum"), py::arg("n"),
      py::arg("seed") = 1);

  // ------------------------------------------------------------- estimator
  py::class_<StratumStats>(m, "StratumStats")
      .def_property_readonly("summary", &stats_dict);
  py::class_<OverlapMatrix>(m, "OverlapMatrix")
      .def_property_readonly("F", [](const OverlapMatrix& o) { return o.F; })
      .def_property_readonly("partition_of_unity",
                             [](const OverlapMatrix& o) { return o.partition_of_unity; });
  py::class_<WeightVector>(m, "WeightVector")
      .def_property_readonly("z", [](const WeightVector& w) { return w.z; })
      .def_property_readonly("residual", [](const WeightVector& w) { return w.residual; });

  m.def(
      "accumulate",
      [](const Trajectory& traj, const BiasSet& bias, const py::object& g) {
        return accumulate(traj, bias, make_observable(g));
      },
      py::arg("trajectory"), py::arg("bias"), py::arg("g") = py::none());
  m.def("build_overlap", &build_overlap, py::arg("stats"), py::arg("partition_of_unity"));
  m.def("stationary_vector",
        [](const Eigen::MatrixXd& F, bool pou) { return stationary_vector({F, pou}); },
        py::arg("F"), py::arg("partition_of_unity") = true);
  m.def("emus_estimate", &emus_estimate, py::arg("stats"), py::arg("weights"));
  m.def(
      "iterative_emus",
      [](const std::vector<StratumStats>& stats, Eigen::VectorXd z0, double tol, int max_iter) {
        auto res = iterative_emus(stats, std::move(z0), tol, max_iter);
        return py::make_tuple(res.weights, res.iterations);
      },
      py::arg("stats"), py::arg("z0"), py::arg("tol") = 1e-8, py::arg("max_iter") = 100);

  // -------------------------------------------------------- error analysis
  m.def("group_inverse",
        [](const Eigen::MatrixXd& F) { return group_inverse({F, true}); }, py::arg("F"));
  m.def(
      "integrated_autocov",
      [](const std::vector<double>& series, double window_factor) {
        auto r = integrated_autocov(series, window_factor);
        return py::make_tuple(r.value, r.window, r.reliable);
      },
      py::arg("series"), py::arg("window_factor") = 5.0);
  m.def("hitting_probabilities",
        [](const Eigen::MatrixXd& F) { return hitting_probabilities({F, true}); }, py::arg("F"));
  m.def(
      "log_weight_derivatives",
      [](const Eigen::MatrixXd& F) {
        auto d = log_weight_derivatives({F, true});
        const int L = d.size();
        std::vector<Eigen::MatrixXd> out(L, Eigen::MatrixXd::Zero(L, L));
        for (int k = 0; k < L; ++k)
          for (int i = 0; i < L; ++i)
            for (int j = 0; j < L; ++j)
              if (i != j) out[k](i, j) = d(k, i, j);
        return out;
      },
      py::arg("F"));

  // -------------------------------------------------------------- mixture
  auto mix = m.def_submodule("mixture", "hierarchical Gaussian-mixture posterior");
  py::class_<mixture::Dataset>(mix, "Dataset")
      .def_static("from_values", &mixture::Dataset::from_values)
      .def_property_readonly("n", &mixture::Dataset::size)
      .def_property_readonly("mean", [](const mixture::Dataset& d) { return d.mean; })
      .def_property_readonly("range", [](const mixture::Dataset& d) { return d.range; })
      .def_property_readonly("values", [](const mixture::Dataset& d) { return d.y; });
  mix.def("ingest_csv", &mixture::ingest_csv, py::arg("path"));
  mix.def(
      "log_posterior",
      [](std::vector<double> mu, std::vector<double> lambda, std::vector<double> q, double beta,
         const mixture::Dataset& data, bool enforce_ordering) {
        mixture::MixtureParams p;
        p.mu = Eigen::Map<Eigen::VectorXd>(mu.data(), mu.size());
        p.lambda = Eigen::Map<Eigen::VectorXd>(lambda.data(), lambda.size());
        p.q = Eigen::Map<Eigen::VectorXd>(q.data(), q.size());
        p.beta = beta;
        auto hp = mixture::Hyperparameters::standard(data);
        auto ld = mixture::log_posterior(p, data, hp, static_cast<int>(mu.size()),
                                         enforce_ordering);
        return py::make_tuple(ld.value, static_cast<int>(ld.flag));
      },
      py::arg("mu"), py::arg("lambda"), py::arg("q"), py::arg("beta"), py::arg("data"),
      py::arg("enforce_ordering") = true);
  mix.def(
      "unboundedness_check",
      [](const mixture::Dataset& data, int K, double g, double alpha) {
        auto rep = mixture::unboundedness_check(data, K, g, alpha);
        return py::make_tuple(rep.unbounded, rep.datum, rep.frequency, rep.threshold);
      },
      py::arg("data"), py::arg("K"), py::arg("g") = 0.2, py::arg("alpha") = 2.0);
  mix.def("sample_mixture_data",
          [](int n, std::vector<double> means, std::vector<double> sds,
             std::vector<double> weights, std::uint64_t seed) {
            return mixture::sample_mixture_data(n, means, sds, weights, seed);
          },
          py::arg("n"), py::arg("means"), py::arg("sds"), py::arg("weights"),
          py::arg("seed") = 1);
  mix.def("posterior_target", &mixture::posterior_target, py::arg("data"), py::arg("K"));

  // ------------------------------------------------------------ experiments
  m.def(
      "run_tail_study",
      [](double threshold, const std::string& potential, std::uint64_t samples_per_stratum,
         std::uint64_t seed) {
        TailStudy study;
        study.threshold = threshold;
        study.potential = potential;
        study.samples_per_stratum = samples_per_stratum;
        study.seed = seed;
        auto res = run_tail_study(study);
        py::dict d;
        d["estimate"] = res.estimate;
        d["exact"] = res.exact;
        d["rel_std_error"] = res.rel_std_error;
        d["strata"] = res.strata;
        d["weights"] = res.weights.z;
        d["overlap"] = res.overlap.F;
        return d;
      },
      py::arg("threshold") = 20.0, py::arg("potential") = "linear",
      py::arg("samples_per_stratum") = 10000, py::arg("seed") = 1);
  m.def(
      "run_lowtemp_study",
      [](double beta, std::uint64_t total_steps, std::uint64_t seed) {
        LowTempStudy study;
        study.beta = beta;
        study.total_steps = total_steps;
        study.seed = seed;
        auto res = run_lowtemp_study(study);
        py::dict d;
        d["estimate"] = res.estimate;
        d["oracle"] = res.oracle;
        d["rel_error"] = res.rel_error;
        d["std_error"] = res.std_error;
        d["restricted"] = res.restricted;
        d["skipped"] = res.skipped;
        return d;
      },
      py::arg("beta") = 5.0, py::arg("total_steps") = 1000000, py::arg("seed") = 1);
}
