#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hlmi/diagnostics.hpp"
#include "hlmi/errors.hpp"
#include "hlmi/gibbs.hpp"
#include "hlmi/io.hpp"
#include "hlmi/reference_ml.hpp"
#include "hlmi/simulation.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace hlmi;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using IntMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Long-format columns (one row per observation) grouped into clusters in
// order of first appearance. NaN marks a missing real, -1 a missing level.
Dataset rows_to_dataset(const std::vector<std::string>& cluster, const Eigen::VectorXd& y, const RowMatrix& c,
                        const IntMatrix& d, const RowMatrix& x) {
  const auto n = static_cast<Eigen::Index>(cluster.size());
  if (y.size() != n || c.rows() != n || d.rows() != n || x.rows() != n) {
    throw InputError("cluster, y, C, D and X must have the same number of rows");
  }
  Dataset data;
  std::map<std::string, std::size_t> index;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& id = cluster[static_cast<std::size_t>(i)];
    auto [it, fresh] = index.try_emplace(id, data.clusters.size());
    if (fresh) {
      Cluster cl;
      cl.id = id;
      cl.c = Eigen::VectorXd::Constant(c.cols(), std::nan(""));
      cl.c_missing.assign(static_cast<std::size_t>(c.cols()), true);
      cl.d.assign(static_cast<std::size_t>(d.cols()), -1);
      cl.d_missing.assign(static_cast<std::size_t>(d.cols()), true);
      cl.x.resize(0, x.cols());
      data.clusters.push_back(cl);
    }
    Cluster& cl = data.clusters[it->second];
    for (Eigen::Index k = 0; k < c.cols(); ++k) {
      const double v = c(i, k);
      if (std::isnan(v)) continue;
      const auto ku = static_cast<std::size_t>(k);
      if (!cl.c_missing[ku] && cl.c[k] != v) {
        throw InputError("cluster '" + id + "': C column " + std::to_string(k) + " differs within the cluster");
      }
      cl.c[k] = v;
      cl.c_missing[ku] = false;
    }
    for (Eigen::Index k = 0; k < d.cols(); ++k) {
      const int v = d(i, k);
      if (v < 0) continue;
      const auto ku = static_cast<std::size_t>(k);
      if (!cl.d_missing[ku] && cl.d[ku] != v) {
        throw InputError("cluster '" + id + "': D column " + std::to_string(k) + " differs within the cluster");
      }
      cl.d[ku] = v;
      cl.d_missing[ku] = false;
    }
    cl.y.push_back(y[i]);
    cl.y_missing.push_back(std::isnan(y[i]));
    cl.x.conservativeResize(cl.x.rows() + 1, Eigen::NoChange);
    cl.x.row(cl.x.rows() - 1) = x.row(i);
  }
  return data;
}

ModelSpec make_spec(Eigen::Index p, const std::vector<int>& levels, Eigen::Index x_dim,
                    const std::vector<std::pair<int, int>>& interactions) {
  ModelSpec spec;
  spec.p = static_cast<int>(p);
  spec.q = static_cast<int>(levels.size());
  spec.levels = levels;
  spec.x_dim = static_cast<int>(x_dim);
  spec.interaction.assign(static_cast<std::size_t>(p), std::vector<bool>(levels.size(), false));
  for (const auto& [k, l] : interactions) {
    if (k < 0 || k >= p || l < 0 || l >= static_cast<int>(levels.size())) {
      throw InputError("interaction index out of range");
    }
    spec.interaction[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)] = true;
  }
  spec.validate();
  return spec;
}

py::dict fit(const std::vector<std::string>& cluster, const Eigen::VectorXd& y, const RowMatrix& c,
             const IntMatrix& d, const std::vector<int>& levels, std::optional<RowMatrix> x,
             const std::vector<std::pair<int, int>>& interactions, int burn_in, int post_burn, int chains,
             std::uint64_t seed, int threads, int thin) {
  const RowMatrix xm = x.value_or(RowMatrix(y.size(), 0));
  const ModelSpec spec = make_spec(c.cols(), levels, xm.cols(), interactions);
  const Dataset data = rows_to_dataset(cluster, y, c, d, xm);
  SamplerConfig cfg;
  cfg.burn_in = burn_in;
  cfg.post_burn = post_burn;
  cfg.n_chains = chains;
  cfg.seed = seed;
  cfg.threads = threads;
  cfg.thin = thin;
  ChainStore store;
  {
    py::gil_scoped_release release;
    store = GibbsSampler(spec, data).run(cfg);
  }
  const auto rows = summarize(store);
  const auto k = static_cast<py::ssize_t>(store.n_params());
  const auto records = static_cast<py::ssize_t>(store.chains.front().draws.rows());
  py::array_t<double> draws({static_cast<py::ssize_t>(store.chains.size()), records, k});
  auto out = draws.mutable_unchecked<3>();
  for (py::ssize_t ch = 0; ch < draws.shape(0); ++ch)
    for (py::ssize_t r = 0; r < records; ++r)
      for (py::ssize_t j = 0; j < k; ++j) out(ch, r, j) = store.chains[static_cast<std::size_t>(ch)].draws(r, j);
  Eigen::VectorXd mean(k), sd(k), lo(k), hi(k), r_hat(k);
  for (py::ssize_t j = 0; j < k; ++j) {
    const auto& row = rows[static_cast<std::size_t>(j)];
    mean[j] = row.mean;
    sd[j] = row.sd;
    lo[j] = row.ci_lo;
    hi[j] = row.ci_hi;
    r_hat[j] = row.psrf;
  }
  return py::dict("names"_a = store.names, "mean"_a = mean, "sd"_a = sd, "ci_lo"_a = lo, "ci_hi"_a = hi,
                  "psrf"_a = r_hat, "draws"_a = draws);
}

py::dict fit_ml_rows(const std::vector<std::string>& cluster, const Eigen::VectorXd& y, const RowMatrix& c,
                     const IntMatrix& d, const std::vector<int>& levels, std::optional<RowMatrix> x,
                     const std::vector<std::pair<int, int>>& interactions) {
  const RowMatrix xm = x.value_or(RowMatrix(y.size(), 0));
  const ModelSpec spec = make_spec(c.cols(), levels, xm.cols(), interactions);
  const MlFit f = fit_ml(rows_to_dataset(cluster, y, c, d, xm), spec);
  return py::dict("names"_a = spec.beta_names(), "beta"_a = f.beta_hat, "se"_a = f.se_beta, "tau"_a = f.tau_hat,
                  "sigma2"_a = f.sigma2_hat, "loglik"_a = f.loglik, "converged"_a = f.converged);
}

py::dict dataset_columns(const Dataset& data) {
  std::vector<std::string> cluster;
  std::vector<double> y, c1, c2, d;
  for (const auto& cl : data.clusters) {
    for (std::size_t i = 0; i < cl.size(); ++i) {
      cluster.push_back(cl.id);
      y.push_back(cl.y_missing[i] ? std::nan("") : cl.y[i]);
      c1.push_back(cl.c_missing[0] ? std::nan("") : cl.c[0]);
      c2.push_back(cl.c[1]);
      d.push_back(cl.d_missing[0] ? std::nan("") : cl.d[0]);
    }
  }
  return py::dict("cluster"_a = cluster, "y"_a = py::array(py::cast(y)), "C1"_a = py::array(py::cast(c1)),
                  "C2"_a = py::array(py::cast(c2)), "D"_a = py::array(py::cast(d)));
}

py::dict simulate(const std::string& mechanism, int clusters, int cluster_size, std::uint64_t seed, int replication,
                  bool ampute) {
  SimScenario sc;
  sc.mechanism = mechanism_from_string(mechanism);
  sc.n_clusters = clusters;
  sc.cluster_size = cluster_size;
  sc.seed = seed;
  sc.ampute = ampute;
  sc.replications = replication + 1;
  sc.validate();
  const SimulatedData sim = generate_replication(sc, replication);
  return py::dict("complete"_a = dataset_columns(sim.complete), "observed"_a = dataset_columns(sim.observed));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Gibbs-sampler imputation for random-intercept models";
  m.attr("__version__") = kVersion;

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def("simulate", &simulate, "Complete and amputed data of one study replication.",
        "mechanism"_a = "general-location", "clusters"_a = 200, "cluster_size"_a = 4, "seed"_a = 1,
        "replication"_a = 0, "ampute"_a = true);

  m.def("fit", &fit,
        "Run the Gibbs sampler on long-format rows. C holds cluster-level reals (NaN missing), D "
        "cluster-level level codes (-1 missing), X level-1 covariates.",
        "cluster"_a, "y"_a, "C"_a, "D"_a, "levels"_a, "X"_a = py::none(), "interactions"_a = std::vector<std::pair<int, int>>{},
        "burn_in"_a = 2500, "post_burn"_a = 2500, "chains"_a = 2, "seed"_a = 0, "threads"_a = 1, "thin"_a = 1);

  m.def("fit_ml", &fit_ml_rows, "Complete-data maximum likelihood fit.", "cluster"_a, "y"_a, "C"_a, "D"_a,
        "levels"_a, "X"_a = py::none(), "interactions"_a = std::vector<std::pair<int, int>>{});

  m.def("psrf", &psrf, "Potential scale reduction factor of equal-length chains.", "chains"_a);
  m.def(
      "percentile",
      [](const std::vector<double>& v, double prob) { return percentile(v, prob); },
      "Linear-interpolation percentile, prob in [0, 1].", "values"_a, "prob"_a);
}
