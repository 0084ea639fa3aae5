#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hlmi/diagnostics.hpp"
#include "hlmi/gibbs.hpp"
#include "hlmi/model.hpp"
#include "hlmi/simulation.hpp"

namespace hlmi {

inline constexpr const char* kVersion = "0.3.0";

struct CategoricalColumn {
  std::string name;
  std::vector<std::string> levels;  // declared order; the first is the reference
};

/// Column roles of a long-format CSV (one row per level-1 observation).
struct CsvSchema {
  std::string cluster = "cluster";
  std::string outcome = "y";
  std::vector<std::string> continuous;
  std::vector<CategoricalColumn> categorical;
  std::vector<std::string> level1;
  std::string missing_token = "NA";
};

/// ModelSpec whose names, levels and dimensions follow the schema.
/// `interactions` lists (continuous, categorical) pairs that get free terms.
ModelSpec model_spec_from_schema(const CsvSchema& schema,
                                 const std::vector<std::pair<std::string, std::string>>& interactions);

/// Reads a CSV. Lines starting with '#' are comments. Rows are grouped by the
/// cluster column in order of first appearance. Cluster-level columns must be
/// constant over their non-missing entries within a cluster.
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema);

/// Writes `data` in the long format read by load_csv. `header` lines are
/// emitted first, each prefixed with "# ".
std::string dataset_to_csv(const Dataset& data, const ModelSpec& spec, const CsvSchema& schema,
                           const std::vector<std::string>& header = {});

/// Subtracts the mean of the observed values from each named covariate
/// (continuous cluster-level or level-1). Returns the means removed.
std::map<std::string, double> center_covariates(Dataset& data, const ModelSpec& spec,
                                                const std::vector<std::string>& names);

/// Shortest decimal text that parses back to the same double; "NA" for NaN.
std::string format_double(double v);

/// FNV-1a 64-bit digest, as 16 hex digits.
std::string digest_hex(std::string_view bytes);
std::string file_digest(const std::filesystem::path& path);

/// Writes to a temporary sibling, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string version = kVersion;
  double wall_time_seconds = 0.0;
  std::map<std::string, std::string> input_digests;

  nlohmann::json to_json() const;
  /// Deterministic lines embedded at the top of every CSV output (no wall time).
  std::vector<std::string> header_lines() const;
};

std::string summary_to_csv(const std::vector<SummaryRow>& rows, const std::vector<std::string>& header = {});
std::string chains_to_csv(const ChainStore& store, const std::vector<std::string>& header = {});
ChainStore chains_from_csv(const std::filesystem::path& path);

std::string metrics_to_csv(const MetricsTable& table, const std::vector<std::string>& header = {});
std::string replications_to_csv(const std::vector<ReplicationResult>& reps, const std::vector<StudyParameter>& params,
                                 const std::vector<std::string>& header = {});

nlohmann::json replication_to_json(const ReplicationResult& r);
ReplicationResult replication_from_json(const nlohmann::json& j);

/// Checkpoints each finished replication as <dir>/rep_NNNNN.json.
class DirectoryReplicationCache : public ReplicationCache {
 public:
  explicit DirectoryReplicationCache(std::filesystem::path dir);
  std::optional<ReplicationResult> load(int index) override;
  void save(const ReplicationResult& result) override;

 private:
  std::filesystem::path file_for(int index) const;
  std::filesystem::path dir_;
};

/// Parsed `fit` configuration.
struct FitConfig {
  std::filesystem::path data_path;
  CsvSchema schema;
  std::vector<std::pair<std::string, std::string>> interactions;
  std::vector<std::string> center;
  PriorSpec priors;
  SamplerConfig sampler;
  bool save_chains = true;
};

FitConfig parse_fit_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
SimScenario parse_scenario(const nlohmann::json& j);
SamplerConfig parse_sampler(const nlohmann::json& j, SamplerConfig defaults);

/// Schema of files written by the simulate command.
CsvSchema simulation_schema();

}  // namespace hlmi
