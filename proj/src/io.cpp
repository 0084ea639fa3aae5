#include "hlmi/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>

#include "hlmi/errors.hpp"

namespace hlmi {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else {
      field += ch;
    }
  }
  out.push_back(std::move(field));
  return out;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

bool parse_number(const std::string& text, double& out) {
  const char* first = text.data();
  const char* last = first + text.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last && first != last;
}

void emit_header(std::ostringstream& os, const std::vector<std::string>& header) {
  for (const auto& line : header) os << "# " << line << '\n';
}

// Non-finite doubles are stored as strings so they survive a JSON round trip.
json encode_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double decode_double(const json& j) {
  if (j.is_number()) return j.get<double>();
  const std::string s = j.get<std::string>();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return kNaN;
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& section) {
  if (!j.is_object()) throw InputError("config section '" + section + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw InputError("unknown key '" + key + "' in config section '" + section + "'");
  }
}

std::vector<std::string> string_list(const json& j, const std::string& what) {
  if (!j.is_array()) throw InputError(what + " must be a list of strings");
  std::vector<std::string> out;
  for (const auto& e : j) out.push_back(e.get<std::string>());
  return out;
}

MarCoefficients parse_mar_triplet(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw InputError("mar." + what + " must be [c0, c1, delta]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

ModelSpec model_spec_from_schema(const CsvSchema& schema,
                                 const std::vector<std::pair<std::string, std::string>>& interactions) {
  ModelSpec spec;
  spec.p = static_cast<int>(schema.continuous.size());
  spec.q = static_cast<int>(schema.categorical.size());
  spec.x_dim = static_cast<int>(schema.level1.size());
  spec.c_names = schema.continuous;
  spec.x_names = schema.level1;
  for (const auto& cat : schema.categorical) {
    if (cat.levels.size() < 2) throw InputError("categorical column '" + cat.name + "' needs at least 2 levels");
    spec.d_names.push_back(cat.name);
    spec.levels.push_back(static_cast<int>(cat.levels.size()));
    spec.level_labels.push_back(cat.levels);
  }
  spec.interaction.assign(static_cast<std::size_t>(spec.p), std::vector<bool>(static_cast<std::size_t>(spec.q), false));
  for (const auto& [c, d] : interactions) {
    const auto ci = std::find(spec.c_names.begin(), spec.c_names.end(), c);
    const auto di = std::find(spec.d_names.begin(), spec.d_names.end(), d);
    if (ci == spec.c_names.end()) throw InputError("interaction names unknown continuous covariate '" + c + "'");
    if (di == spec.d_names.end()) throw InputError("interaction names unknown categorical covariate '" + d + "'");
    spec.interaction[static_cast<std::size_t>(ci - spec.c_names.begin())]
                    [static_cast<std::size_t>(di - spec.d_names.begin())] = true;
  }
  spec.validate();
  return spec;
}

Dataset load_csv(const fs::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());

  std::string line;
  std::vector<std::string> header;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    header = split_csv_line(line);
    break;
  }
  if (header.empty()) throw InputError(path.string() + ": empty file");
  for (auto& h : header) h = trim(h);

  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw InputError(path.string() + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t col_cluster = column(schema.cluster);
  const std::size_t col_y = column(schema.outcome);
  std::vector<std::size_t> col_c, col_d, col_x;
  for (const auto& n : schema.continuous) col_c.push_back(column(n));
  for (const auto& cat : schema.categorical) col_d.push_back(column(cat.name));
  for (const auto& n : schema.level1) col_x.push_back(column(n));

  const std::size_t p = col_c.size();
  const std::size_t q = col_d.size();
  const std::size_t xd = col_x.size();

  struct Pending {
    Cluster cl;
    std::vector<std::vector<double>> x_rows;
  };
  std::vector<Pending> pending;
  std::unordered_map<std::string, std::size_t> index;

  auto where = [&](const std::string& col) {
    return path.string() + ":" + std::to_string(line_no) + ": column '" + col + "'";
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " fields, found " + std::to_string(fields.size()));
    }
    for (auto& f : fields) f = trim(f);

    const std::string& id = fields[col_cluster];
    if (id.empty() || id == schema.missing_token) throw InputError(where(schema.cluster) + ": missing cluster id");
    auto [it, inserted] = index.try_emplace(id, pending.size());
    if (inserted) {
      Pending pc;
      pc.cl.id = id;
      pc.cl.c = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(p), kNaN);
      pc.cl.c_missing.assign(p, true);
      pc.cl.d.assign(q, -1);
      pc.cl.d_missing.assign(q, true);
      pending.push_back(std::move(pc));
    }
    Pending& pc = pending[it->second];
    Cluster& cl = pc.cl;

    const std::string& yv = fields[col_y];
    double y = kNaN;
    if (yv == schema.missing_token) {
      cl.y_missing.push_back(true);
    } else if (parse_number(yv, y)) {
      cl.y_missing.push_back(false);
    } else {
      throw InputError(where(schema.outcome) + ": not a number: '" + yv + "'");
    }
    cl.y.push_back(y);

    for (std::size_t k = 0; k < p; ++k) {
      const std::string& v = fields[col_c[k]];
      if (v == schema.missing_token) continue;
      double value;
      if (!parse_number(v, value)) throw InputError(where(schema.continuous[k]) + ": not a number: '" + v + "'");
      const auto kk = static_cast<Eigen::Index>(k);
      if (cl.c_missing[k]) {
        cl.c[kk] = value;
        cl.c_missing[k] = false;
      } else if (cl.c[kk] != value) {
        throw InputError("cluster '" + id + "': column '" + schema.continuous[k] +
                         "' is not constant within the cluster (line " + std::to_string(line_no) + ")");
      }
    }
    for (std::size_t k = 0; k < q; ++k) {
      const std::string& v = fields[col_d[k]];
      if (v == schema.missing_token) continue;
      const auto& labels = schema.categorical[k].levels;
      const auto li = std::find(labels.begin(), labels.end(), v);
      if (li == labels.end()) {
        throw InputError(where(schema.categorical[k].name) + ": unknown category label '" + v + "'");
      }
      const int level = static_cast<int>(li - labels.begin());
      if (cl.d_missing[k]) {
        cl.d[k] = level;
        cl.d_missing[k] = false;
      } else if (cl.d[k] != level) {
        throw InputError("cluster '" + id + "': column '" + schema.categorical[k].name +
                         "' is not constant within the cluster (line " + std::to_string(line_no) + ")");
      }
    }
    std::vector<double> xr(xd);
    for (std::size_t k = 0; k < xd; ++k) {
      const std::string& v = fields[col_x[k]];
      if (!parse_number(v, xr[k])) {
        throw InputError(where(schema.level1[k]) + ": level-1 covariates must be observed numbers, got '" + v + "'");
      }
    }
    pc.x_rows.push_back(std::move(xr));
  }
  if (pending.empty()) throw InputError(path.string() + ": no data rows");

  Dataset data;
  data.clusters.reserve(pending.size());
  for (auto& pc : pending) {
    const auto n = static_cast<Eigen::Index>(pc.x_rows.size());
    pc.cl.x.resize(n, static_cast<Eigen::Index>(xd));
    for (Eigen::Index i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < xd; ++k) pc.cl.x(i, static_cast<Eigen::Index>(k)) = pc.x_rows[static_cast<std::size_t>(i)][k];
    }
    data.clusters.push_back(std::move(pc.cl));
  }
  return data;
}

std::string dataset_to_csv(const Dataset& data, const ModelSpec& spec, const CsvSchema& schema,
                           const std::vector<std::string>& header) {
  if (static_cast<int>(schema.continuous.size()) != spec.p || static_cast<int>(schema.categorical.size()) != spec.q ||
      static_cast<int>(schema.level1.size()) != spec.x_dim) {
    throw InputError("dataset_to_csv: schema does not match the model dimensions");
  }
  std::ostringstream os;
  emit_header(os, header);
  os << quote_if_needed(schema.cluster) << ',' << quote_if_needed(schema.outcome);
  for (const auto& n : schema.continuous) os << ',' << quote_if_needed(n);
  for (const auto& c : schema.categorical) os << ',' << quote_if_needed(c.name);
  for (const auto& n : schema.level1) os << ',' << quote_if_needed(n);
  os << '\n';
  for (const auto& cl : data.clusters) {
    for (std::size_t i = 0; i < cl.size(); ++i) {
      os << quote_if_needed(cl.id) << ',' << (cl.y_missing[i] ? schema.missing_token : format_double(cl.y[i]));
      for (int k = 0; k < spec.p; ++k) {
        os << ',' << (cl.c_missing[static_cast<std::size_t>(k)] ? schema.missing_token : format_double(cl.c[k]));
      }
      for (int k = 0; k < spec.q; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        os << ',' << (cl.d_missing[kk] ? schema.missing_token
                                       : quote_if_needed(schema.categorical[kk].levels[static_cast<std::size_t>(cl.d[kk])]));
      }
      for (int k = 0; k < spec.x_dim; ++k) os << ',' << format_double(cl.x(static_cast<Eigen::Index>(i), k));
      os << '\n';
    }
  }
  return os.str();
}

std::map<std::string, double> center_covariates(Dataset& data, const ModelSpec& spec,
                                                const std::vector<std::string>& names) {
  std::map<std::string, double> means;
  for (const auto& name : names) {
    const auto ci = std::find(spec.c_names.begin(), spec.c_names.end(), name);
    const auto xi = std::find(spec.x_names.begin(), spec.x_names.end(), name);
    double sum = 0.0;
    double n = 0.0;
    if (ci != spec.c_names.end()) {
      const auto k = ci - spec.c_names.begin();
      for (const auto& cl : data.clusters) {
        if (cl.c_missing[static_cast<std::size_t>(k)]) continue;
        sum += cl.c[k];
        n += 1.0;
      }
      if (n == 0.0) throw InputError("cannot center '" + name + "': no observed values");
      const double m = sum / n;
      for (auto& cl : data.clusters) {
        if (!cl.c_missing[static_cast<std::size_t>(k)]) cl.c[k] -= m;
      }
      means[name] = m;
    } else if (xi != spec.x_names.end()) {
      const auto k = xi - spec.x_names.begin();
      for (const auto& cl : data.clusters) {
        sum += cl.x.col(k).sum();
        n += static_cast<double>(cl.x.rows());
      }
      const double m = sum / n;
      for (auto& cl : data.clusters) cl.x.col(k).array() -= m;
      means[name] = m;
    } else {
      throw InputError("cannot center '" + name + "': not a continuous covariate");
    }
  }
  return means;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string digest_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string file_digest(const fs::path& path) { return digest_hex(read_file(path)); }

void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw InputError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

json RunManifest::to_json() const {
  json j;
  j["command"] = command;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["version"] = version;
  j["wall_time_seconds"] = wall_time_seconds;
  j["input_digests"] = input_digests;
  return j;
}

std::vector<std::string> RunManifest::header_lines() const {
  std::vector<std::string> lines{"command: " + command, "config_hash: " + config_hash,
                                 "seed: " + std::to_string(seed), "version: " + version};
  for (const auto& [name, digest] : input_digests) lines.push_back("input: " + name + " fnv1a64=" + digest);
  return lines;
}

std::string summary_to_csv(const std::vector<SummaryRow>& rows, const std::vector<std::string>& header) {
  std::ostringstream os;
  emit_header(os, header);
  os << "parameter,estimate,se,ci_2.5,ci_97.5,psrf,psrf_gt_1.1\n";
  for (const auto& r : rows) {
    os << quote_if_needed(r.name) << ',' << format_double(r.mean) << ',' << format_double(r.sd) << ','
       << format_double(r.ci_lo) << ',' << format_double(r.ci_hi) << ',' << format_double(r.psrf) << ','
       << (std::isnan(r.psrf) ? "NA" : (r.psrf > 1.1 ? "1" : "0")) << '\n';
  }
  return os.str();
}

std::string chains_to_csv(const ChainStore& store, const std::vector<std::string>& header) {
  std::ostringstream os;
  emit_header(os, header);
  os << "chain,iteration";
  for (const auto& n : store.names) os << ',' << quote_if_needed(n);
  os << '\n';
  for (std::size_t c = 0; c < store.chains.size(); ++c) {
    const auto& d = store.chains[c].draws;
    for (Eigen::Index t = 0; t < d.rows(); ++t) {
      os << c + 1 << ',' << t + 1;
      for (Eigen::Index k = 0; k < d.cols(); ++k) os << ',' << format_double(d(t, k));
      os << '\n';
    }
  }
  return os.str();
}

ChainStore chains_from_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    header = split_csv_line(line);
    break;
  }
  if (header.size() < 3 || header[0] != "chain" || header[1] != "iteration") {
    throw InputError(path.string() + ": not a chains file (expected chain,iteration,... header)");
  }
  ChainStore store;
  store.names.assign(header.begin() + 2, header.end());
  const std::size_t k = store.names.size();
  std::map<long, std::vector<std::vector<double>>> rows;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_csv_line(line);
    if (f.size() != k + 2) throw InputError(path.string() + ": ragged row in chains file");
    double chain;
    if (!parse_number(f[0], chain)) throw InputError(path.string() + ": bad chain index '" + f[0] + "'");
    std::vector<double> v(k);
    for (std::size_t i = 0; i < k; ++i) {
      if (f[i + 2] == "NA") {
        v[i] = kNaN;
      } else if (!parse_number(f[i + 2], v[i])) {
        throw InputError(path.string() + ": not a number: '" + f[i + 2] + "'");
      }
    }
    rows[static_cast<long>(chain)].push_back(std::move(v));
  }
  if (rows.empty()) throw InputError(path.string() + ": no draws");
  for (auto& [_, r] : rows) {
    Chain ch;
    ch.draws.resize(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(k));
    for (std::size_t t = 0; t < r.size(); ++t) {
      for (std::size_t i = 0; i < k; ++i) ch.draws(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = r[t][i];
    }
    store.chains.push_back(std::move(ch));
  }
  return store;
}

std::string metrics_to_csv(const MetricsTable& table, const std::vector<std::string>& header) {
  auto fixed = [](double v, int digits) {
    if (std::isnan(v)) return std::string("NA");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return std::string(buf);
  };
  std::ostringstream os;
  emit_header(os, header);
  os << "# estimator: " << table.estimator << '\n';
  os << "parameter,%Bias(ASE),ESE,Coverage,truth,pct_bias,pct_bias_mcse,ase,ese,coverage,n\n";
  for (const auto& r : table.rows) {
    os << quote_if_needed(r.label) << ',' << quote_if_needed(fixed(r.pct_bias, 1) + " (" + fixed(r.ase, 3) + ")") << ','
       << fixed(r.ese, 3) << ',' << fixed(r.coverage, 3) << ',' << format_double(r.truth) << ','
       << format_double(r.pct_bias) << ',' << format_double(r.pct_bias_mcse) << ',' << format_double(r.ase) << ','
       << format_double(r.ese) << ',' << format_double(r.coverage) << ',' << r.n << '\n';
  }
  return os.str();
}

std::string replications_to_csv(const std::vector<ReplicationResult>& reps, const std::vector<StudyParameter>& params,
                                 const std::vector<std::string>& header) {
  std::ostringstream os;
  emit_header(os, header);
  os << "replication,ok,estimator,parameter,estimate,se,ci_lo,ci_hi,psrf_pass_fraction,max_psrf,"
        "missing_y,missing_c1,missing_d,error\n";
  std::vector<const ReplicationResult*> sorted;
  for (const auto& r : reps) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) { return a->index < b->index; });
  for (const auto* r : sorted) {
    auto tail = [&] {
      std::string s = format_double(r->psrf_pass_fraction) + ',' + format_double(r->max_psrf);
      for (std::size_t i = 0; i < 3; ++i) {
        s += ',' + (i < r->missing_rates.size() ? format_double(r->missing_rates[i]) : std::string("NA"));
      }
      return s + ',' + quote_if_needed(r->error);
    };
    if (!r->ok) {
      os << r->index << ",0,NA,NA,NA,NA,NA,NA," << tail() << '\n';
      continue;
    }
    for (const auto* est : {&r->cdml, &r->gibbs}) {
      const char* name = est == &r->cdml ? "cdml" : "gibbs";
      for (std::size_t k = 0; k < params.size() && k < est->size(); ++k) {
        const auto& e = (*est)[k];
        os << r->index << ",1," << name << ',' << quote_if_needed(params[k].label) << ',' << format_double(e.estimate)
           << ',' << format_double(e.se) << ',' << format_double(e.ci_lo) << ',' << format_double(e.ci_hi) << ','
           << tail() << '\n';
      }
    }
  }
  return os.str();
}

json replication_to_json(const ReplicationResult& r) {
  auto estimates = [](const std::vector<ParameterEstimate>& v) {
    json a = json::array();
    for (const auto& e : v) {
      a.push_back({encode_double(e.estimate), encode_double(e.se), encode_double(e.ci_lo), encode_double(e.ci_hi)});
    }
    return a;
  };
  json j;
  j["index"] = r.index;
  j["ok"] = r.ok;
  j["error"] = r.error;
  j["cdml"] = estimates(r.cdml);
  j["gibbs"] = estimates(r.gibbs);
  j["psrf_pass_fraction"] = encode_double(r.psrf_pass_fraction);
  j["max_psrf"] = encode_double(r.max_psrf);
  json rates = json::array();
  for (double v : r.missing_rates) rates.push_back(encode_double(v));
  j["missing_rates"] = rates;
  return j;
}

ReplicationResult replication_from_json(const json& j) {
  auto estimates = [](const json& a) {
    std::vector<ParameterEstimate> v;
    for (const auto& e : a) {
      v.push_back({decode_double(e.at(0)), decode_double(e.at(1)), decode_double(e.at(2)), decode_double(e.at(3))});
    }
    return v;
  };
  ReplicationResult r;
  r.index = j.at("index").get<int>();
  r.ok = j.at("ok").get<bool>();
  r.error = j.at("error").get<std::string>();
  r.cdml = estimates(j.at("cdml"));
  r.gibbs = estimates(j.at("gibbs"));
  r.psrf_pass_fraction = decode_double(j.at("psrf_pass_fraction"));
  r.max_psrf = decode_double(j.at("max_psrf"));
  for (const auto& v : j.at("missing_rates")) r.missing_rates.push_back(decode_double(v));
  return r;
}

DirectoryReplicationCache::DirectoryReplicationCache(fs::path dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_);
}

fs::path DirectoryReplicationCache::file_for(int index) const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "rep_%05d.json", index);
  return dir_ / buf;
}

std::optional<ReplicationResult> DirectoryReplicationCache::load(int index) {
  const fs::path f = file_for(index);
  if (!fs::exists(f)) return std::nullopt;
  try {
    ReplicationResult r = replication_from_json(json::parse(read_file(f)));
    if (r.index != index) return std::nullopt;
    return r;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void DirectoryReplicationCache::save(const ReplicationResult& result) {
  write_file_atomic(file_for(result.index), replication_to_json(result).dump() + "\n");
}

SamplerConfig parse_sampler(const json& j, SamplerConfig cfg) {
  try {
    check_keys(j, {"burn_in", "post_burn", "chains", "thin", "seed", "threads", "store_latent", "fixed_tau"},
               "sampler");
    if (j.contains("burn_in")) cfg.burn_in = j["burn_in"].get<int>();
    if (j.contains("post_burn")) cfg.post_burn = j["post_burn"].get<int>();
    if (j.contains("chains")) cfg.n_chains = j["chains"].get<int>();
    if (j.contains("thin")) cfg.thin = j["thin"].get<int>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("threads")) cfg.threads = j["threads"].get<int>();
    if (j.contains("store_latent")) cfg.store_latent = j["store_latent"].get<bool>();
    if (j.contains("fixed_tau")) cfg.fixed_tau = j["fixed_tau"].get<double>();
  } catch (const json::exception& e) {
    throw InputError(std::string("sampler config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

FitConfig parse_fit_config(const json& j, const fs::path& base_dir) {
  FitConfig cfg;
  try {
    check_keys(j, {"data", "model", "sampler"}, "root");
    if (!j.contains("data")) throw InputError("config needs a 'data' section");
    const json& d = j["data"];
    check_keys(d, {"path", "cluster", "outcome", "missing_token", "continuous", "categorical", "level1"}, "data");
    if (!d.contains("path")) throw InputError("data.path is required");
    fs::path p = d["path"].get<std::string>();
    cfg.data_path = p.is_absolute() ? p : base_dir / p;
    if (d.contains("cluster")) cfg.schema.cluster = d["cluster"].get<std::string>();
    if (d.contains("outcome")) cfg.schema.outcome = d["outcome"].get<std::string>();
    if (d.contains("missing_token")) cfg.schema.missing_token = d["missing_token"].get<std::string>();
    if (d.contains("continuous")) cfg.schema.continuous = string_list(d["continuous"], "data.continuous");
    if (d.contains("level1")) cfg.schema.level1 = string_list(d["level1"], "data.level1");
    if (d.contains("categorical")) {
      for (const auto& c : d["categorical"]) {
        check_keys(c, {"name", "levels"}, "data.categorical");
        cfg.schema.categorical.push_back({c.at("name").get<std::string>(), string_list(c.at("levels"), "levels")});
      }
    }
    if (j.contains("model")) {
      const json& m = j["model"];
      check_keys(m, {"interactions", "center", "priors"}, "model");
      if (m.contains("interactions")) {
        for (const auto& pair : m["interactions"]) {
          if (!pair.is_array() || pair.size() != 2) {
            throw InputError("model.interactions entries must be [continuous, categorical]");
          }
          cfg.interactions.emplace_back(pair[0].get<std::string>(), pair[1].get<std::string>());
        }
      }
      if (m.contains("center")) cfg.center = string_list(m["center"], "model.center");
      if (m.contains("priors")) {
        const json& pr = m["priors"];
        check_keys(pr, {"ig_shape", "ig_scale", "iw_dof", "iw_scale", "dirichlet"}, "model.priors");
        if (pr.contains("ig_shape")) cfg.priors.ig_shape = pr["ig_shape"].get<double>();
        if (pr.contains("ig_scale")) cfg.priors.ig_scale = pr["ig_scale"].get<double>();
        if (pr.contains("iw_dof")) cfg.priors.iw_dof = pr["iw_dof"].get<double>();
        if (pr.contains("dirichlet")) cfg.priors.dirichlet = pr["dirichlet"].get<std::vector<double>>();
        if (pr.contains("iw_scale")) {
          const auto rows = pr["iw_scale"].get<std::vector<std::vector<double>>>();
          Eigen::MatrixXd s(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
          for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != rows.size()) throw InputError("model.priors.iw_scale must be square");
            for (std::size_t c = 0; c < rows.size(); ++c) {
              s(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
            }
          }
          cfg.priors.iw_scale = s;
        }
      }
    }
    if (j.contains("sampler")) {
      json s = j["sampler"];
      if (s.contains("save_chains")) {
        cfg.save_chains = s["save_chains"].get<bool>();
        s.erase("save_chains");
      }
      cfg.sampler = parse_sampler(s, cfg.sampler);
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("fit config: ") + e.what());
  }
  cfg.sampler.validate();
  return cfg;
}

SimScenario parse_scenario(const json& j) {
  SimScenario sc;
  try {
    check_keys(j, {"mechanism", "clusters", "cluster_size", "replications", "seed", "ampute", "p_d", "kappa", "truth",
                   "mar", "sampler"},
               "scenario");
    if (j.contains("mechanism")) sc.mechanism = mechanism_from_string(j["mechanism"].get<std::string>());
    if (j.contains("clusters")) sc.n_clusters = j["clusters"].get<int>();
    if (j.contains("cluster_size")) sc.cluster_size = j["cluster_size"].get<int>();
    if (j.contains("replications")) sc.replications = j["replications"].get<int>();
    if (j.contains("seed")) sc.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("ampute")) sc.ampute = j["ampute"].get<bool>();
    if (j.contains("p_d")) sc.p_d = j["p_d"].get<double>();
    if (j.contains("kappa")) sc.kappa = j["kappa"].get<double>();
    if (j.contains("truth")) {
      const json& t = j["truth"];
      check_keys(t, {"beta", "tau", "sigma2"}, "truth");
      if (t.contains("beta")) {
        const auto b = t["beta"].get<std::vector<double>>();
        sc.truth.beta = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
      }
      if (t.contains("tau")) sc.truth.tau = t["tau"].get<double>();
      if (t.contains("sigma2")) sc.truth.sigma2 = t["sigma2"].get<double>();
    }
    if (j.contains("mar")) {
      const json& m = j["mar"];
      check_keys(m, {"y", "c1", "d"}, "mar");
      if (m.contains("y")) sc.mar.y = parse_mar_triplet(m["y"], "y");
      if (m.contains("c1")) sc.mar.c1 = parse_mar_triplet(m["c1"], "c1");
      if (m.contains("d")) sc.mar.d = parse_mar_triplet(m["d"], "d");
    }
    if (j.contains("sampler")) sc.sampler = parse_sampler(j["sampler"], sc.sampler);
  } catch (const json::exception& e) {
    throw InputError(std::string("scenario config: ") + e.what());
  }
  sc.validate();
  return sc;
}

CsvSchema simulation_schema() {
  CsvSchema s;
  s.cluster = "cluster";
  s.outcome = "y";
  s.continuous = {"C1", "C2"};
  s.categorical = {{"D", {"0", "1"}}};
  return s;
}

}  // namespace hlmi
