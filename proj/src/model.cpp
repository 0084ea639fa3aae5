#include "hlmi/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hlmi/errors.hpp"

namespace hlmi {

void ModelSpec::validate() {
  if (p < 0 || q < 0 || x_dim < 0) throw InputError("negative model dimension");
  if (static_cast<int>(levels.size()) != q) {
    throw InputError("levels has " + std::to_string(levels.size()) + " entries, expected q = " +
                     std::to_string(q));
  }
  for (int k = 0; k < q; ++k) {
    if (levels[k] < 2) throw InputError("categorical variable " + std::to_string(k) + " has fewer than 2 levels");
  }
  if (interaction.empty()) interaction.assign(p, std::vector<bool>(q, false));
  if (static_cast<int>(interaction.size()) != p) throw InputError("interaction mask must have p rows");
  for (const auto& row : interaction) {
    if (static_cast<int>(row.size()) != q) throw InputError("interaction mask must have q columns");
  }

  auto fill_names = [](std::vector<std::string>& names, int n, const std::string& stem,
                       const char* what) {
    if (names.empty()) {
      for (int i = 0; i < n; ++i) names.push_back(stem + std::to_string(i + 1));
    } else if (static_cast<int>(names.size()) != n) {
      throw InputError(std::string("wrong number of ") + what + " names");
    }
  };
  fill_names(c_names, p, "C", "continuous covariate");
  if (q == 1 && d_names.empty()) d_names.push_back("D");
  fill_names(d_names, q, "D", "categorical covariate");
  fill_names(x_names, x_dim, "X", "level-1 covariate");
  if (level_labels.empty()) {
    for (int k = 0; k < q; ++k) {
      std::vector<std::string> labels;
      for (int l = 0; l < levels[k]; ++l) labels.push_back(std::to_string(l));
      level_labels.push_back(std::move(labels));
    }
  }
  if (static_cast<int>(level_labels.size()) != q) throw InputError("level_labels must have q entries");
  for (int k = 0; k < q; ++k) {
    if (static_cast<int>(level_labels[k].size()) != levels[k]) {
      throw InputError("level labels of " + d_names[k] + " do not match its level count");
    }
  }

  if (priors.iw_dof && !(*priors.iw_dof > p + 1.0)) throw InputError("iw_dof must exceed p + 1");
  if (priors.iw_scale && (priors.iw_scale->rows() != p || priors.iw_scale->cols() != p)) {
    throw InputError("iw_scale must be p x p");
  }
  if (priors.dirichlet && static_cast<int>(priors.dirichlet->size()) != n_cells()) {
    throw InputError("dirichlet prior must have one entry per cell");
  }
  if (!(priors.ig_shape > 0.0) || !(priors.ig_scale > 0.0)) {
    throw InputError("inverse-gamma hyperparameters must be positive");
  }
}

int ModelSpec::n_cells() const {
  int n = 1;
  for (int l : levels) n *= l;
  return n;
}

int ModelSpec::n_dummies() const {
  int n = 0;
  for (int l : levels) n += l - 1;
  return n;
}

int ModelSpec::dummy_offset(int k) const {
  int off = 0;
  for (int i = 0; i < k; ++i) off += levels[i] - 1;
  return off;
}

std::vector<InteractionTerm> ModelSpec::interaction_terms() const {
  // Kronecker order of D^T (x) C^T: dummies outer, continuous inner.
  std::vector<InteractionTerm> terms;
  for (int k = 0; k < q; ++k) {
    for (int l = 1; l < levels[k]; ++l) {
      const int dummy = dummy_offset(k) + l - 1;
      for (int c = 0; c < p; ++c) {
        if (interaction[c][k]) terms.push_back({dummy, k, l, c});
      }
    }
  }
  return terms;
}

int ModelSpec::beta_dim() const {
  return beta_cd_offset() + static_cast<int>(interaction_terms().size());
}

std::vector<std::string> ModelSpec::dummy_names() const {
  std::vector<std::string> names;
  for (int k = 0; k < q; ++k) {
    for (int l = 1; l < levels[k]; ++l) names.push_back(d_names[k] + "=" + level_labels[k][l]);
  }
  return names;
}

std::vector<std::string> ModelSpec::beta_names() const {
  std::vector<std::string> names{"(Intercept)"};
  for (const auto& n : c_names) names.push_back(n);
  const auto dummies = dummy_names();
  for (const auto& n : dummies) names.push_back(n);
  for (const auto& n : x_names) names.push_back(n);
  for (const auto& t : interaction_terms()) names.push_back(c_names[t.continuous] + ":" + dummies[t.dummy]);
  return names;
}

std::vector<std::string> ModelSpec::alpha_names() const {
  std::vector<std::string> names;
  const auto dummies = dummy_names();
  for (const auto& c : c_names) {
    names.push_back(c + "~(Intercept)");
    for (const auto& d : dummies) names.push_back(c + "~" + d);
  }
  return names;
}

CellCodec::CellCodec(std::vector<int> levels) : levels_(std::move(levels)), strides_(levels_.size()) {
  n_cells_ = 1;
  for (std::size_t k = levels_.size(); k-- > 0;) {
    if (levels_[k] < 1) throw DomainError("CellCodec: level counts must be positive");
    strides_[k] = n_cells_;
    n_cells_ *= levels_[k];
  }
}

int CellCodec::encode(std::span<const int> d) const {
  if (d.size() != levels_.size()) throw DomainError("encode_cell: wrong number of categorical values");
  int cell = 0;
  for (std::size_t k = 0; k < d.size(); ++k) {
    if (d[k] < 0 || d[k] >= levels_[k]) {
      throw DomainError("encode_cell: level " + std::to_string(d[k]) + " out of range for variable " +
                        std::to_string(k));
    }
    cell += d[k] * strides_[k];
  }
  return cell;
}

std::vector<int> CellCodec::decode(int cell) const {
  if (cell < 0 || cell >= n_cells_) throw DomainError("decode_cell: cell index out of range");
  std::vector<int> d(levels_.size());
  for (std::size_t k = 0; k < levels_.size(); ++k) {
    d[k] = (cell / strides_[k]) % levels_[k];
  }
  return d;
}

std::vector<int> CellCodec::admissible(std::span<const int> d, const std::vector<bool>& missing) const {
  if (d.size() != levels_.size() || missing.size() != levels_.size()) {
    throw DomainError("admissible_cells: wrong number of categorical values");
  }
  int base = 0;
  std::vector<std::size_t> free;
  for (std::size_t k = 0; k < d.size(); ++k) {
    if (missing[k]) {
      free.push_back(k);
    } else {
      if (d[k] < 0 || d[k] >= levels_[k]) throw DomainError("admissible_cells: observed level out of range");
      base += d[k] * strides_[k];
    }
  }
  std::vector<int> cells{base};
  for (std::size_t k : free) {
    std::vector<int> next;
    next.reserve(cells.size() * static_cast<std::size_t>(levels_[k]));
    for (int c : cells) {
      for (int l = 0; l < levels_[k]; ++l) next.push_back(c + l * strides_[k]);
    }
    cells = std::move(next);
  }
  std::sort(cells.begin(), cells.end());
  return cells;
}

int encode_cell(std::span<const int> d, const ModelSpec& spec) { return CellCodec(spec.levels).encode(d); }

std::vector<int> admissible_cells(std::span<const int> d, const std::vector<bool>& missing,
                                  const ModelSpec& spec) {
  return CellCodec(spec.levels).admissible(d, missing);
}

std::size_t Dataset::n_obs() const {
  std::size_t n = 0;
  for (const auto& c : clusters) n += c.size();
  return n;
}

std::size_t Dataset::n_observed_y() const {
  std::size_t n = 0;
  for (const auto& c : clusters) {
    for (bool m : c.y_missing) n += m ? 0 : 1;
  }
  return n;
}

bool Dataset::complete() const {
  for (const auto& c : clusters) {
    for (bool m : c.y_missing) if (m) return false;
    for (bool m : c.c_missing) if (m) return false;
    for (bool m : c.d_missing) if (m) return false;
  }
  return true;
}

void Dataset::validate(const ModelSpec& spec) const {
  if (clusters.empty()) throw InputError("dataset has no clusters");
  for (const auto& cl : clusters) {
    const std::string where = "cluster '" + cl.id + "'";
    if (cl.y.empty()) throw InputError(where + " has no observations");
    if (cl.y_missing.size() != cl.y.size()) throw InputError(where + ": y mask size mismatch");
    if (cl.x.rows() != static_cast<Eigen::Index>(cl.y.size()) || cl.x.cols() != spec.x_dim) {
      throw InputError(where + ": level-1 covariate matrix has wrong shape");
    }
    if (!cl.x.allFinite()) throw InputError(where + ": level-1 covariates must be fully observed");
    if (cl.c.size() != spec.p || static_cast<int>(cl.c_missing.size()) != spec.p) {
      throw InputError(where + ": wrong number of continuous covariates");
    }
    if (static_cast<int>(cl.d.size()) != spec.q || static_cast<int>(cl.d_missing.size()) != spec.q) {
      throw InputError(where + ": wrong number of categorical covariates");
    }
    for (std::size_t i = 0; i < cl.y.size(); ++i) {
      if (!cl.y_missing[i] && !std::isfinite(cl.y[i])) throw InputError(where + ": non-finite observed y");
    }
    for (int k = 0; k < spec.p; ++k) {
      if (!cl.c_missing[k] && !std::isfinite(cl.c[k])) throw InputError(where + ": non-finite observed C");
    }
    for (int k = 0; k < spec.q; ++k) {
      if (!cl.d_missing[k] && (cl.d[k] < 0 || cl.d[k] >= spec.levels[k])) {
        throw InputError(where + ": level of " + spec.d_names[k] + " out of range");
      }
    }
  }
  if (n_observed_y() == 0) throw InputError("dataset has no observed outcome");
}

Eigen::VectorXd dummy_code(std::span<const int> d, const ModelSpec& spec) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(spec.n_dummies());
  for (int k = 0; k < spec.q; ++k) {
    if (d[k] > 0) out[spec.dummy_offset(k) + d[k] - 1] = 1.0;
  }
  return out;
}

void fill_design_row(const Eigen::VectorXd& c, const Eigen::VectorXd& dummies,
                     const Eigen::Ref<const Eigen::RowVectorXd>& x, const ModelSpec& spec,
                     Eigen::Ref<Eigen::VectorXd> row) {
  row[0] = 1.0;
  row.segment(spec.beta_c_offset(), spec.p) = c;
  row.segment(spec.beta_d_offset(), dummies.size()) = dummies;
  row.segment(spec.beta_x_offset(), spec.x_dim) = x.transpose();
  int col = spec.beta_cd_offset();
  for (const auto& t : spec.interaction_terms()) row[col++] = dummies[t.dummy] * c[t.continuous];
}

Eigen::VectorXd build_design_row(const Eigen::VectorXd& c, std::span<const int> d,
                                 const Eigen::VectorXd& x, const ModelSpec& spec) {
  Eigen::VectorXd row(spec.beta_dim());
  fill_design_row(c, dummy_code(d, spec), x.transpose(), spec, row);
  return row;
}

Eigen::MatrixXd interaction_matrix(const Eigen::VectorXd& beta, const ModelSpec& spec) {
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(spec.p, spec.n_dummies());
  int col = spec.beta_cd_offset();
  for (const auto& t : spec.interaction_terms()) b(t.continuous, t.dummy) = beta[col++];
  return b;
}

Eigen::VectorXd covariate_mean(std::span<const int> d, const Eigen::VectorXd& alpha,
                               const ModelSpec& spec) {
  const int m = spec.alpha_block();
  Eigen::VectorXd r(m);
  r[0] = 1.0;
  r.tail(m - 1) = dummy_code(d, spec);
  Eigen::VectorXd mean(spec.p);
  for (int k = 0; k < spec.p; ++k) mean[k] = r.dot(alpha.segment(k * m, m));
  return mean;
}

Eigen::MatrixXd covariate_design(std::span<const int> d, const ModelSpec& spec) {
  const int m = spec.alpha_block();
  Eigen::RowVectorXd r(m);
  r[0] = 1.0;
  r.tail(m - 1) = dummy_code(d, spec).transpose();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(spec.p, spec.alpha_dim());
  for (int k = 0; k < spec.p; ++k) w.block(k, k * m, 1, m) = r;
  return w;
}

void ParamState::check(const ModelSpec& spec) const {
  if (beta.size() != spec.beta_dim()) throw DomainError("state: beta has wrong length");
  if (alpha.size() != spec.alpha_dim()) throw DomainError("state: alpha has wrong length");
  if (!(tau > 0.0) || !(sigma2 > 0.0)) throw DomainError("state: variances must be positive");
  if (pi.size() != spec.n_cells() || (pi.array() < 0.0).any() || std::abs(pi.sum() - 1.0) > 1e-9) {
    throw DomainError("state: pi is not on the simplex");
  }
  SpdMatrix check_t(t);
  (void)check_t;
}

ResolvedPriors resolve_priors(const ModelSpec& spec, const Dataset& data) {
  ResolvedPriors r;
  r.ig_shape = spec.priors.ig_shape;
  r.ig_scale = spec.priors.ig_scale;
  r.iw_dof = spec.priors.iw_dof.value_or(spec.p + 2.0);
  r.dirichlet = spec.priors.dirichlet.value_or(std::vector<double>(spec.n_cells(), 1.0));
  if (spec.priors.iw_scale) {
    r.iw_scale = *spec.priors.iw_scale;
  } else {
    std::vector<const Eigen::VectorXd*> complete;
    for (const auto& cl : data.clusters) {
      bool ok = true;
      for (bool m : cl.c_missing) ok = ok && !m;
      if (ok) complete.push_back(&cl.c);
    }
    r.iw_scale = Eigen::MatrixXd::Identity(spec.p, spec.p);
    if (static_cast<int>(complete.size()) >= spec.p + 2) {
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(spec.p);
      for (const auto* c : complete) mean += *c;
      mean /= static_cast<double>(complete.size());
      Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(spec.p, spec.p);
      for (const auto* c : complete) cov += (*c - mean) * (*c - mean).transpose();
      cov /= static_cast<double>(complete.size() - 1);
      if (Eigen::LLT<Eigen::MatrixXd>(cov).info() == Eigen::Success) r.iw_scale = cov;
    }
  }
  SpdMatrix validated(r.iw_scale);
  (void)validated;
  return r;
}

}  // namespace hlmi
