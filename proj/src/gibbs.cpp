#include "hlmi/gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <stdexcept>
#include <thread>

#include "hlmi/errors.hpp"
#include "hlmi/posteriors.hpp"

namespace hlmi {

void SamplerConfig::validate() const {
  if (burn_in < 0) throw InputError("burn_in must be >= 0");
  if (post_burn < 1 || n_chains < 1 || thin < 1 || threads < 1) {
    throw InputError("post_burn, chains, thin and threads must all be >= 1");
  }
  if (thin > post_burn) throw InputError("thin must not exceed post_burn");
  if (fixed_tau && !(*fixed_tau > 0.0)) throw InputError("fixed tau must be positive");
}

std::size_t ChainStore::index_of(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return static_cast<std::size_t>(it - names.begin());
}

std::vector<Eigen::VectorXd> ChainStore::series(std::size_t param) const {
  std::vector<Eigen::VectorXd> out;
  for (const auto& ch : chains) out.emplace_back(ch.draws.col(static_cast<Eigen::Index>(param)));
  return out;
}

std::vector<std::string> parameter_names(const ModelSpec& spec) {
  std::vector<std::string> names;
  for (const auto& b : spec.beta_names()) names.push_back("beta[" + b + "]");
  names.emplace_back("tau");
  names.emplace_back("sigma2");
  for (const auto& a : spec.alpha_names()) names.push_back("alpha[" + a + "]");
  for (int i = 0; i < spec.p; ++i) {
    for (int j = i; j < spec.p; ++j) names.push_back("T[" + spec.c_names[i] + "," + spec.c_names[j] + "]");
  }
  if (spec.q > 0) {
    CellCodec codec(spec.levels);
    for (int cell = 0; cell < spec.n_cells(); ++cell) {
      const auto d = codec.decode(cell);
      std::string label;
      for (int k = 0; k < spec.q; ++k) {
        label += (k ? "," : "") + spec.d_names[k] + "=" + spec.level_labels[k][d[k]];
      }
      names.push_back("pi[" + label + "]");
    }
  }
  return names;
}

Eigen::VectorXd flatten_parameters(const ParamState& state, const ModelSpec& spec) {
  const int nt = spec.p * (spec.p + 1) / 2;
  const int npi = spec.q > 0 ? spec.n_cells() : 0;
  Eigen::VectorXd out(state.beta.size() + 2 + state.alpha.size() + nt + npi);
  Eigen::Index pos = 0;
  out.segment(pos, state.beta.size()) = state.beta;
  pos += state.beta.size();
  out[pos++] = state.tau;
  out[pos++] = state.sigma2;
  out.segment(pos, state.alpha.size()) = state.alpha;
  pos += state.alpha.size();
  for (int i = 0; i < spec.p; ++i) {
    for (int j = i; j < spec.p; ++j) out[pos++] = state.t(i, j);
  }
  if (npi > 0) out.segment(pos, npi) = state.pi;
  return out;
}

GibbsSampler::GibbsSampler(ModelSpec spec, Dataset data)
    : spec_(std::move(spec)), data_(std::move(data)), codec_(spec_.levels) {
  if (spec_.p < 1) throw InputError("the sampler needs at least one continuous covariate (p >= 1)");
  data_.validate(spec_);
  priors_ = resolve_priors(spec_, data_);
}

GibbsSampler::GibbsSampler(ModelSpec spec, Dataset data, ResolvedPriors priors)
    : spec_(std::move(spec)), data_(std::move(data)), priors_(std::move(priors)), codec_(spec_.levels) {
  if (spec_.p < 1) throw InputError("the sampler needs at least one continuous covariate (p >= 1)");
  data_.validate(spec_);
  if (priors_.iw_scale.rows() != spec_.p || static_cast<int>(priors_.dirichlet.size()) != spec_.n_cells()) {
    throw InputError("resolved priors do not match the model dimensions");
  }
}

namespace {

constexpr int kInitAttempts = 200;

// Same acceptance test as the regression-coefficient step.
bool completed_design_full_rank(const ModelSpec& spec, const Dataset& data, const ParamState& s) {
  const int k = spec.beta_dim();
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(k, k);
  Eigen::VectorXd row(k);
  for (std::size_t j = 0; j < data.n_clusters(); ++j) {
    const auto& cl = data.clusters[j];
    const Eigen::VectorXd dummies = dummy_code(s.d[j], spec);
    for (std::size_t i = 0; i < cl.size(); ++i) {
      fill_design_row(s.c[j], dummies, cl.x.row(static_cast<Eigen::Index>(i)), spec, row);
      gram.selfadjointView<Eigen::Lower>().rankUpdate(row);
    }
  }
  gram = gram.selfadjointView<Eigen::Lower>();
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  return llt.info() == Eigen::Success && llt.rcond() >= 1e-13;
}

}  // namespace

ParamState GibbsSampler::init_state(Rng& rng, int chain_index) const {
  const auto& cls = data_.clusters;
  const std::size_t nj = cls.size();
  const int p = spec_.p;
  const int q = spec_.q;
  ParamState s;

  // Observed outcome moments.
  double y_sum = 0.0, y_sq = 0.0;
  std::size_t y_n = 0;
  for (const auto& cl : cls) {
    for (std::size_t i = 0; i < cl.size(); ++i) {
      if (cl.y_missing[i]) continue;
      y_sum += cl.y[i];
      y_sq += cl.y[i] * cl.y[i];
      ++y_n;
    }
  }
  if (y_n == 0) throw InputError("init_state: no observed outcome");
  const double y_mean = y_sum / static_cast<double>(y_n);
  double y_var = y_n > 1 ? (y_sq - static_cast<double>(y_n) * y_mean * y_mean) / static_cast<double>(y_n - 1) : 0.0;
  if (!(y_var > 0.0)) y_var = 2.0;

  // Observed means of C; variables never observed start at 0.
  Eigen::VectorXd c_mean = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd c_sd = Eigen::VectorXd::Ones(p);
  for (int k = 0; k < p; ++k) {
    double sum = 0.0;
    int n = 0;
    for (const auto& cl : cls) {
      if (!cl.c_missing[k]) {
        sum += cl.c[k];
        ++n;
      }
    }
    if (n > 0) c_mean[k] = sum / n;
    double ss = 0.0;
    for (const auto& cl : cls) {
      if (!cl.c_missing[k]) ss += (cl.c[k] - c_mean[k]) * (cl.c[k] - c_mean[k]);
    }
    c_sd[k] = n > 1 ? std::sqrt(ss / (n - 1)) : 1.0;
  }

  // Observed marginal level frequencies of each D (uniform when never observed).
  std::vector<std::vector<double>> d_freq(q);
  for (int k = 0; k < q; ++k) {
    d_freq[k].assign(spec_.levels[k], 0.0);
    double total = 0.0;
    for (const auto& cl : cls) {
      if (!cl.d_missing[k]) {
        d_freq[k][cl.d[k]] += 1.0;
        total += 1.0;
      }
    }
    for (double& f : d_freq[k]) f = total > 0.0 ? f / total : 1.0 / spec_.levels[k];
  }

  s.y.resize(nj);
  s.c.resize(nj);
  s.d.resize(nj);
  s.cell.resize(nj);
  // Missing C start at the observed mean and missing D at a draw from the
  // observed frequencies. A start whose completed design is singular (say,
  // every imputed D at the same level when one level is barely observed) is
  // redrawn, with C now jittered by one observed SD.
  for (int attempt = 0; attempt < kInitAttempts; ++attempt) {
    for (std::size_t j = 0; j < nj; ++j) {
      const auto& cl = cls[j];
      s.y[j] = cl.y;
      for (std::size_t i = 0; i < cl.size(); ++i) if (cl.y_missing[i]) s.y[j][i] = y_mean;
      s.c[j] = cl.c;
      for (int k = 0; k < p; ++k) {
        if (cl.c_missing[k]) s.c[j][k] = c_mean[k] + (attempt > 0 ? c_sd[k] * rng.standard_normal() : 0.0);
      }
      s.d[j] = cl.d;
      for (int k = 0; k < q; ++k) {
        if (cl.d_missing[k]) s.d[j][k] = static_cast<int>(sample_categorical(d_freq[k], rng));
      }
      s.cell[j] = codec_.encode(s.d[j]);
    }
    if (completed_design_full_rank(spec_, data_, s)) break;
  }

  s.beta = Eigen::VectorXd::Zero(spec_.beta_dim());
  s.beta[0] = y_mean;
  s.tau = 0.5 * y_var;
  s.sigma2 = 0.5 * y_var;
  s.u = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nj));

  s.alpha = Eigen::VectorXd::Zero(spec_.alpha_dim());
  for (int k = 0; k < p; ++k) s.alpha[k * spec_.alpha_block()] = c_mean[k];

  // Complete-case covariance of C, identity with fewer than p + 2 complete cases.
  s.t = Eigen::MatrixXd::Identity(p, p);
  {
    std::vector<const Eigen::VectorXd*> complete;
    for (const auto& cl : cls) {
      if (std::none_of(cl.c_missing.begin(), cl.c_missing.end(), [](bool m) { return m; })) complete.push_back(&cl.c);
    }
    if (static_cast<int>(complete.size()) >= p + 2) {
      Eigen::VectorXd m = Eigen::VectorXd::Zero(p);
      for (const auto* c : complete) m += *c;
      m /= static_cast<double>(complete.size());
      Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(p, p);
      for (const auto* c : complete) cov += (*c - m) * (*c - m).transpose();
      cov /= static_cast<double>(complete.size() - 1);
      if (Eigen::LLT<Eigen::MatrixXd>(cov).info() == Eigen::Success) s.t = cov;
    }
  }

  // Cell probabilities: current cells smoothed by the Dirichlet prior.
  const auto post = pi_full_conditional(s.cell, priors_);
  s.pi = Eigen::Map<const Eigen::VectorXd>(post.data(), static_cast<Eigen::Index>(post.size()));
  s.pi /= s.pi.sum();

  if (chain_index > 0) {
    auto jitter = [&rng] { return rng.uniform() - 0.5; };
    const double y_sd = std::sqrt(y_var);
    for (Eigen::Index i = 0; i < s.beta.size(); ++i) {
      s.beta[i] = s.beta[i] * (1.0 + jitter()) + jitter() * y_sd;
    }
    s.tau *= std::exp(jitter());
    s.sigma2 *= std::exp(jitter());
  }
  if (fixed_tau_) s.tau = *fixed_tau_;
  return s;
}

namespace {

[[noreturn]] void rethrow_with(const std::string& where) {
  try {
    throw;
  } catch (const RankDeficientError& e) {
    throw RankDeficientError(where + ": " + e.what(), e.columns());
  } catch (const NumericalError& e) {
    throw NumericalError(where + ": " + e.what());
  } catch (const DomainError& e) {
    throw NumericalError(where + ": " + e.what());
  }
}

}  // namespace

void GibbsSampler::sweep(ParamState& s, Rng& rng) const {
  const auto& cls = data_.clusters;
  const std::size_t nj = cls.size();

  // Step 1: random effects.
  try {
    for (std::size_t j = 0; j < nj; ++j) {
      const Eigen::VectorXd eta = linear_predictor(s.c[j], s.d[j], cls[j].x, s.beta, spec_);
      double resid = 0.0;
      for (std::size_t i = 0; i < cls[j].size(); ++i) resid += s.y[j][i] - eta[static_cast<Eigen::Index>(i)];
      const auto u = u_full_conditional(resid, cls[j].size(), s.sigma2, s.tau);
      s.u[static_cast<Eigen::Index>(j)] = sample_normal(u.mean, u.variance, rng);
    }
  } catch (...) {
    rethrow_with("random-effect step");
  }

  // Step 2: level-2 variance.
  if (fixed_tau_) {
    s.tau = *fixed_tau_;
  } else {
    const auto ig = tau_full_conditional(std::span<const double>(s.u.data(), static_cast<std::size_t>(s.u.size())), priors_);
    s.tau = sample_inverse_gamma(ig.shape, ig.scale_of_reciprocal, rng);
  }

  // Step 3: regression coefficients.
  try {
    const auto b = beta_full_conditional(spec_, data_, s);
    s.beta = sample_mvnormal(b.mean, SpdMatrix(b.cov), rng);
  } catch (...) {
    rethrow_with("regression-coefficient step");
  }

  // Step 4: level-1 variance.
  {
    const auto ig = sigma2_full_conditional(sum_sq_residuals(spec_, data_, s), data_.n_obs(), priors_);
    s.sigma2 = sample_inverse_gamma(ig.shape, ig.scale_of_reciprocal, rng);
  }

  // Step 5: missing outcomes.
  for (std::size_t j = 0; j < nj; ++j) {
    for (std::size_t i = 0; i < cls[j].size(); ++i) {
      if (cls[j].y_missing[i]) s.y[j][i] = impute_y(spec_, cls[j], j, i, s, rng);
    }
  }

  // Steps 6-7: covariate model.
  try {
    const auto a = alpha_full_conditional(spec_, s.c, s.d, s.t);
    s.alpha = sample_mvnormal(a.mean, SpdMatrix(a.cov), rng);
    const auto iw = t_full_conditional(spec_, s.c, s.d, s.alpha, priors_);
    s.t = sample_inverse_wishart(iw.dof, SpdMatrix(iw.scale_inverse), rng).matrix();
  } catch (...) {
    rethrow_with("covariate-model step");
  }

  // Step 8: cell probabilities.
  if (spec_.q > 0) {
    const auto a = pi_full_conditional(s.cell, priors_);
    s.pi = sample_dirichlet(a, rng);
  }

  const SpdMatrix t(s.t);

  // Step 9: missing continuous covariates, k = 1..p in order.
  for (std::size_t j = 0; j < nj; ++j) {
    const auto& cl = cls[j];
    for (int k = 0; k < spec_.p; ++k) {
      if (!cl.c_missing[k]) continue;
      try {
        const auto moments = conditional_c_moments(k, s.c[j], s.d[j], s.alpha, s.t, spec_);
        const auto split = split_mean_for_ck(k, s.c[j], s.d[j], cl.x, s.beta, s.u[static_cast<Eigen::Index>(j)], spec_);
        const auto post = c_full_conditional(moments, split, s.y[j], s.sigma2);
        s.c[j][k] = sample_normal(post.mean, post.variance(), rng);
      } catch (...) {
        rethrow_with("continuous-covariate step, cluster '" + cl.id + "', " + spec_.c_names[k]);
      }
    }
  }

  // Step 10: missing categorical covariates via the admissible cells.
  for (std::size_t j = 0; j < nj; ++j) {
    const auto& cl = cls[j];
    if (std::none_of(cl.d_missing.begin(), cl.d_missing.end(), [](bool m) { return m; })) continue;
    try {
      const auto post = d_cell_posterior(spec_, codec_, cl, j, s, t);
      const int cell = post.cells[sample_categorical(post.probs, rng)];
      s.cell[j] = cell;
      s.d[j] = codec_.decode(cell);
    } catch (...) {
      rethrow_with("categorical-covariate step, cluster '" + cl.id + "'");
    }
  }
}

std::vector<std::string> GibbsSampler::latent_names() const {
  std::vector<std::string> names;
  for (const auto& cl : data_.clusters) names.push_back("u[" + cl.id + "]");
  for (const auto& cl : data_.clusters) {
    for (std::size_t i = 0; i < cl.size(); ++i) {
      if (cl.y_missing[i]) names.push_back("y[" + cl.id + "," + std::to_string(i + 1) + "]");
    }
    for (int k = 0; k < spec_.p; ++k) {
      if (cl.c_missing[k]) names.push_back(spec_.c_names[k] + "[" + cl.id + "]");
    }
    for (int k = 0; k < spec_.q; ++k) {
      if (cl.d_missing[k]) names.push_back(spec_.d_names[k] + "[" + cl.id + "]");
    }
  }
  return names;
}

Eigen::VectorXd GibbsSampler::flatten_latent(const ParamState& s) const {
  std::vector<double> v(s.u.data(), s.u.data() + s.u.size());
  for (std::size_t j = 0; j < data_.n_clusters(); ++j) {
    const auto& cl = data_.clusters[j];
    for (std::size_t i = 0; i < cl.size(); ++i) if (cl.y_missing[i]) v.push_back(s.y[j][i]);
    for (int k = 0; k < spec_.p; ++k) if (cl.c_missing[k]) v.push_back(s.c[j][k]);
    for (int k = 0; k < spec_.q; ++k) if (cl.d_missing[k]) v.push_back(s.d[j][k]);
  }
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Chain GibbsSampler::run_chain(const SamplerConfig& config, int chain_index) const {
  Rng rng(config.seed, config.stream_base + static_cast<std::uint64_t>(chain_index));
  ParamState s = init_state(rng, chain_index);
  const int records = config.post_burn / config.thin;
  const auto n_par = static_cast<Eigen::Index>(parameter_names(spec_).size());
  Chain chain;
  chain.draws.resize(records, n_par);
  if (config.store_latent) chain.latent.resize(records, static_cast<Eigen::Index>(latent_names().size()));
  const int total = config.burn_in + config.post_burn;
  int r = 0;
  for (int it = 1; it <= total; ++it) {
    try {
      sweep(s, rng);
    } catch (const RankDeficientError& e) {
      throw RankDeficientError("chain " + std::to_string(chain_index) + ", iteration " + std::to_string(it) + ": " +
                                   e.what(),
                               e.columns());
    } catch (const NumericalError& e) {
      throw NumericalError("chain " + std::to_string(chain_index) + ", iteration " + std::to_string(it) + ": " +
                           e.what());
    }
    const int post = it - config.burn_in;
    if (post > 0 && post % config.thin == 0 && r < records) {
      chain.draws.row(r) = flatten_parameters(s, spec_);
      if (config.store_latent) chain.latent.row(r) = flatten_latent(s);
      ++r;
    }
  }
  return chain;
}

ChainStore GibbsSampler::run(const SamplerConfig& config) const {
  config.validate();
  GibbsSampler local = *this;
  if (config.fixed_tau) local.set_fixed_tau(config.fixed_tau);

  ChainStore store;
  store.names = parameter_names(spec_);
  if (config.store_latent) store.latent_names = latent_names();
  store.chains.resize(static_cast<std::size_t>(config.n_chains));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(config.n_chains));

  auto work = [&](int c) {
    try {
      store.chains[static_cast<std::size_t>(c)] = local.run_chain(config, c);
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  };
  const int workers = std::min(config.threads, config.n_chains);
  if (workers <= 1) {
    for (int c = 0; c < config.n_chains; ++c) work(c);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int c = w; c < config.n_chains; c += workers) work(c);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return store;
}

ParamState init_state(const Dataset& data, const ModelSpec& spec, Rng& rng) {
  return GibbsSampler(spec, data).init_state(rng);
}

void sweep(ParamState& state, const Dataset& data, const ModelSpec& spec, Rng& rng) {
  GibbsSampler(spec, data).sweep(state, rng);
}

ChainStore run(const Dataset& data, const ModelSpec& spec, const SamplerConfig& config) {
  return GibbsSampler(spec, data).run(config);
}

}  // namespace hlmi
