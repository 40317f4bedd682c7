#ifndef PSCBM_PIPELINE_H_
#define PSCBM_PIPELINE_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pscbm/data_model.h"
#include "pscbm/error.h"
#include "pscbm/metrics.h"

namespace pscbm {

inline constexpr std::string_view kToolVersion = "pscbm 1.0.0";

// Input files. Relative paths are resolved against the config file's
// directory; the *_features files default to the matching *_images file
// and feed the bottleneck, while *_images feed the affinity computations.
struct InputPaths {
  std::string concepts;
  std::string concept_embeddings;
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
  std::string train_features;
  std::string test_features;
  std::string merge_subset;  // optional row index file for merging
};

struct RunConfig {
  PipelineConfig params;
  InputPaths inputs;
  std::filesystem::path base_dir;
  std::filesystem::path out_dir = "pscbm_out";
  unsigned threads = 1;
  std::size_t explain_top_k = 5;
  std::size_t explain_samples = 5;
  bool dump_affinity = false;
  bool record_timing = false;

  std::filesystem::path resolve(const std::string& p) const;
  void validate() const;
};

RunConfig parse_run_config(std::string_view json_text, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

// Echo of the hyperparameters (no paths), stable key order.
std::string params_json(const PipelineConfig& params);
// Echo of everything except out_dir, base_dir and threads, which do not
// affect results.
std::string run_config_json(const RunConfig& cfg);

// Raised by a pipeline stage; keeps the underlying error code.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause)
      : Error(cause.code(), stage + ": " + cause.what()), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// Stand-alone stages. Each reads its inputs (and earlier stage outputs)
// from disk and writes its artifacts into cfg.out_dir.
void stage_affinity(const RunConfig& cfg);
void stage_pscs(const RunConfig& cfg);
void stage_train_cbl(const RunConfig& cfg);
void stage_train_fcl(const RunConfig& cfg);
EvalReport stage_eval(const RunConfig& cfg);
void stage_explain(const RunConfig& cfg);
void stage_concept_map(const RunConfig& cfg);

struct PipelineResult {
  EvalReport report;
  std::size_t concepts_loaded = 0;
  std::size_t concepts_filtered = 0;
  std::size_t concepts_merged = 0;
  std::size_t concepts_final = 0;
};

// affinity dump (optional) -> pscs -> train-cbl -> train-fcl -> eval ->
// explain -> concept-map, then manifest.json. Errors surface as StageError.
PipelineResult run_pipeline(const RunConfig& cfg);

enum class SweepParameter { kKExclusive, kTauConf, kTauMerge };
SweepParameter parse_sweep_parameter(std::string_view name);
std::string_view to_string(SweepParameter p);

struct SweepRow {
  std::string value;
  EvalReport report;
};

// Re-runs the pipeline per value under out_dir/sweep/<param>=<value> and
// writes out_dir/sweep_<param>.csv with rows (value, acc, num_concepts, cea).
std::vector<SweepRow> run_sweep(const RunConfig& cfg, SweepParameter param,
                                const std::vector<std::string>& values);
std::string sweep_csv(SweepParameter param, const std::vector<SweepRow>& rows);

// Sorted uniform subsample of round(fraction * n) (at least 1) row indices
// from a partial Fisher-Yates under SplitMix64(seed).
std::vector<std::size_t> subsample_indices(std::size_t n, double fraction,
                                           std::uint64_t seed);
std::vector<std::size_t> load_indices(const std::filesystem::path& path);
void save_indices(const std::vector<std::size_t>& idx, const std::filesystem::path& path);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_file(const std::filesystem::path& path);

// Exit code for an error: 1 validation, 2 runtime, 3 I/O or input format.
int exit_code_for(ErrorCode code);

}  // namespace pscbm

#endif  // PSCBM_PIPELINE_H_
