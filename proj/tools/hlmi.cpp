// hlmi: fit, simulate, benchmark and diagnose from the command line.
//
// Exit codes: 0 success, 2 input/config error, 3 numerical failure,
// 4 finished with a convergence warning (some PSRF > 1.1).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "hlmi/diagnostics.hpp"
#include "hlmi/errors.hpp"
#include "hlmi/gibbs.hpp"
#include "hlmi/io.hpp"
#include "hlmi/simulation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hlmi;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitConvergence = 4;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> chains;
  std::optional<int> burn;
  std::optional<int> post;
  std::optional<int> threads;
  std::string out_dir = ".";
};

void add_common(CLI::App* cmd, CommonFlags& f, bool needs_config = true) {
  auto* opt = cmd->add_option("--config", f.config, "JSON configuration file");
  if (needs_config) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "Random seed (overrides the config)");
  cmd->add_option("--chains", f.chains, "Number of chains")->check(CLI::PositiveNumber);
  cmd->add_option("--burn", f.burn, "Burn-in iterations")->check(CLI::NonNegativeNumber);
  cmd->add_option("--post", f.post, "Post-burn-in iterations")->check(CLI::PositiveNumber);
  cmd->add_option("--threads", f.threads, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--out-dir", f.out_dir, "Output directory");
}

json read_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw InputError(path + ": " + e.what());
  }
}

// Folds command-line overrides into the sampler section so the config hash
// reflects what actually ran.
void apply_sampler_overrides(json& sampler, const CommonFlags& f) {
  if (!sampler.is_object()) sampler = json::object();
  if (f.seed) sampler["seed"] = *f.seed;
  if (f.chains) sampler["chains"] = *f.chains;
  if (f.burn) sampler["burn_in"] = *f.burn;
  if (f.post) sampler["post_burn"] = *f.post;
}

void write_manifest(const fs::path& dir, RunManifest m, std::chrono::steady_clock::time_point start) {
  m.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_file_atomic(dir / "manifest.json", m.to_json().dump(2) + "\n");
}

void print_summary(const std::vector<SummaryRow>& rows) {
  std::printf("%-28s %12s %10s %12s %12s %7s\n", "parameter", "estimate", "se", "2.5%", "97.5%", "psrf");
  for (const auto& r : rows) {
    std::printf("%-28s %12.4f %10.4f %12.4f %12.4f %7.3f%s\n", r.name.c_str(), r.mean, r.sd, r.ci_lo, r.ci_hi, r.psrf,
                r.psrf > 1.1 ? "  *" : "");
  }
}

int count_psrf_warnings(const std::vector<SummaryRow>& rows) {
  int n = 0;
  for (const auto& r : rows) n += r.psrf > 1.1 ? 1 : 0;
  return n;
}

int cmd_fit(const CommonFlags& f) {
  const auto start = std::chrono::steady_clock::now();
  json cfg_json = read_json(f.config);
  apply_sampler_overrides(cfg_json["sampler"], f);
  FitConfig cfg = parse_fit_config(cfg_json, fs::path(f.config).parent_path());
  const int threads = f.threads.value_or(cfg.sampler.threads);
  cfg.sampler.threads = threads;

  ModelSpec spec = model_spec_from_schema(cfg.schema, cfg.interactions);
  spec.priors = cfg.priors;
  spec.validate();
  Dataset data = load_csv(cfg.data_path, cfg.schema);
  const auto means = center_covariates(data, spec, cfg.center);

  RunManifest manifest;
  manifest.command = "fit";
  manifest.config_hash = digest_hex(cfg_json.dump());
  manifest.seed = cfg.sampler.seed;
  manifest.input_digests["config"] = file_digest(f.config);
  manifest.input_digests["data"] = file_digest(cfg.data_path);
  auto header = manifest.header_lines();
  for (const auto& [name, m] : means) header.push_back("centered: " + name + " at " + format_double(m));

  const GibbsSampler sampler(spec, data);
  const ChainStore store = sampler.run(cfg.sampler);
  const auto rows = summarize(store);

  const fs::path out = f.out_dir;
  write_file_atomic(out / "summary.csv", summary_to_csv(rows, header));
  if (cfg.save_chains) write_file_atomic(out / "chains.csv", chains_to_csv(store, header));
  write_manifest(out, manifest, start);

  print_summary(rows);
  const int warn = count_psrf_warnings(rows);
  if (warn > 0) {
    std::fprintf(stderr, "warning: %d parameter(s) have PSRF > 1.1; consider longer chains\n", warn);
    return kExitConvergence;
  }
  return 0;
}

int cmd_simulate(const CommonFlags& f, int replication) {
  const auto start = std::chrono::steady_clock::now();
  json cfg_json = read_json(f.config);
  if (f.seed) cfg_json["seed"] = *f.seed;
  const SimScenario sc = parse_scenario(cfg_json);
  if (replication < 0 || replication >= sc.replications) throw InputError("--replication out of range");

  RunManifest manifest;
  manifest.command = "simulate replication " + std::to_string(replication);
  manifest.config_hash = digest_hex(cfg_json.dump());
  manifest.seed = sc.seed;
  manifest.input_digests["config"] = file_digest(f.config);

  const SimulatedData sim = generate_replication(sc, replication);
  const ModelSpec spec = simulation_model_spec();
  const CsvSchema schema = simulation_schema();
  const fs::path out = f.out_dir;
  auto header = manifest.header_lines();
  header.push_back("mechanism: " + to_string(sc.mechanism));
  write_file_atomic(out / "complete.csv", dataset_to_csv(sim.complete, spec, schema, header));
  write_file_atomic(out / "amputed.csv", dataset_to_csv(sim.observed, spec, schema, header));
  write_manifest(out, manifest, start);
  std::printf("wrote %zu rows in %zu clusters to %s\n", sim.complete.n_obs(), sim.complete.n_clusters(),
              out.string().c_str());
  return 0;
}

void print_metrics(const MetricsTable& t) {
  std::printf("\n%s\n%-18s %16s %8s %9s\n", t.estimator.c_str(), "parameter", "%Bias (ASE)", "ESE", "Coverage");
  for (const auto& r : t.rows) {
    char cell[64], cover[16];
    if (std::isnan(r.ase)) {
      std::snprintf(cell, sizeof cell, "%.1f (-)", r.pct_bias);
    } else {
      std::snprintf(cell, sizeof cell, "%.1f (%.3f)", r.pct_bias, r.ase);
    }
    if (std::isnan(r.coverage)) {
      std::snprintf(cover, sizeof cover, "-");
    } else {
      std::snprintf(cover, sizeof cover, "%.3f", r.coverage);
    }
    std::printf("%-18s %16s %8.3f %9s\n", r.label.c_str(), cell, r.ese, cover);
  }
}

int cmd_benchmark(const CommonFlags& f, std::optional<int> replications, bool fresh) {
  const auto start = std::chrono::steady_clock::now();
  json cfg_json = read_json(f.config);
  if (f.seed) cfg_json["seed"] = *f.seed;
  if (replications) cfg_json["replications"] = *replications;
  if (f.chains || f.burn || f.post) apply_sampler_overrides(cfg_json["sampler"], f);
  const SimScenario sc = parse_scenario(cfg_json);
  const int threads = f.threads.value_or(1);

  const std::string hash = digest_hex(cfg_json.dump());
  const fs::path out = f.out_dir;
  const fs::path ckpt = out / "checkpoints";
  if (fresh && fs::exists(ckpt)) fs::remove_all(ckpt);
  fs::create_directories(ckpt);
  const fs::path tag = ckpt / "config_hash";
  if (fs::exists(tag) && read_file(tag) != hash + "\n") {
    throw InputError(ckpt.string() + " holds checkpoints of a different configuration; use --fresh");
  }
  write_file_atomic(tag, hash + "\n");
  DirectoryReplicationCache cache(ckpt);

  const StudyResult res = run_study(sc, threads, &cache);

  RunManifest manifest;
  manifest.command = "benchmark";
  manifest.config_hash = hash;
  manifest.seed = sc.seed;
  manifest.input_digests["config"] = file_digest(f.config);
  auto header = manifest.header_lines();
  header.push_back("mechanism: " + to_string(sc.mechanism));
  header.push_back("failed_replications: " + std::to_string(res.n_failed));

  write_file_atomic(out / "metrics_cdml.csv", metrics_to_csv(res.cdml, header));
  write_file_atomic(out / "metrics_gibbs.csv", metrics_to_csv(res.gibbs, header));
  write_file_atomic(out / "replications.csv",
                    replications_to_csv(res.replications, study_parameters(sc.truth), header));
  write_manifest(out, manifest, start);

  print_metrics(res.cdml);
  print_metrics(res.gibbs);
  int unconverged = 0;
  for (const auto& r : res.replications) unconverged += (r.ok && r.psrf_pass_fraction < 0.95) ? 1 : 0;
  if (res.n_failed > 0) std::fprintf(stderr, "note: %d replication(s) failed and were excluded\n", res.n_failed);
  if (unconverged > 0) {
    std::fprintf(stderr, "warning: %d replication(s) have more than 5%% of parameters with PSRF > 1.1\n", unconverged);
    return kExitConvergence;
  }
  return 0;
}

int cmd_diagnose(const std::string& chains_path, const std::string& out_dir) {
  const auto start = std::chrono::steady_clock::now();
  const ChainStore store = chains_from_csv(chains_path);
  const auto rows = summarize(store);
  RunManifest manifest;
  manifest.command = "diagnose";
  manifest.config_hash = digest_hex("");
  manifest.input_digests["chains"] = file_digest(chains_path);
  const fs::path out = out_dir;
  write_file_atomic(out / "summary.csv", summary_to_csv(rows, manifest.header_lines()));
  write_manifest(out, manifest, start);
  print_summary(rows);
  const int warn = count_psrf_warnings(rows);
  if (warn > 0) {
    std::fprintf(stderr, "warning: %d parameter(s) have PSRF > 1.1\n", warn);
    return kExitConvergence;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gibbs-sampler imputation for random-intercept models with missing covariates"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  CommonFlags fit_flags, sim_flags, bench_flags;
  auto* fit = app.add_subcommand("fit", "Fit a model to a CSV dataset");
  add_common(fit, fit_flags);

  int replication = 0;
  auto* sim = app.add_subcommand("simulate", "Write a complete and an amputed simulated dataset");
  add_common(sim, sim_flags);
  sim->add_option("--replication", replication, "Replication index whose data to write");

  std::optional<int> reps;
  bool fresh = false;
  auto* bench = app.add_subcommand("benchmark", "Run the Monte Carlo study");
  add_common(bench, bench_flags);
  bench->add_option("--replications", reps, "Override the number of replications")->check(CLI::PositiveNumber);
  bench->add_flag("--fresh", fresh, "Discard existing checkpoints");

  std::string chains_path;
  std::string diag_out = ".";
  auto* diag = app.add_subcommand("diagnose", "Summaries and PSRF from a chains.csv file");
  diag->add_option("--chains", chains_path, "chains.csv written by fit")->required()->check(CLI::ExistingFile);
  diag->add_option("--out-dir", diag_out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fit) return cmd_fit(fit_flags);
    if (*sim) return cmd_simulate(sim_flags, replication);
    if (*bench) return cmd_benchmark(bench_flags, reps, fresh);
    if (*diag) return cmd_diagnose(chains_path, diag_out);
  } catch (const InputError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitInput;
  } catch (const RankDeficientError& e) {
    std::string cols;
    for (const auto& c : e.columns()) cols += (cols.empty() ? "" : ", ") + c;
    std::fprintf(stderr, "numerical failure: %s [columns: %s]\n", e.what(), cols.c_str());
    return kExitNumerical;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumerical;
  } catch (const DomainError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitInput;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitInput;
  }
  return 0;
}
