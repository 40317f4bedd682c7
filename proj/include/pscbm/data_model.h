#ifndef PSCBM_DATA_MODEL_H_
#define PSCBM_DATA_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pscbm/matrix.h"

namespace pscbm {

using ClassIndex = std::uint32_t;

// Feature vectors (image or concept text embeddings), one per row.
class EmbeddingMatrix {
 public:
  // Rejects zero dimensions, size mismatch and non-finite entries.
  explicit EmbeddingMatrix(Matrix values);

  std::size_t rows() const { return values_.rows(); }
  std::size_t cols() const { return values_.cols(); }
  bool normalized() const { return normalized_; }
  const Matrix& values() const { return values_; }
  std::span<const double> row(std::size_t r) const { return values_.row(r); }

  EmbeddingMatrix select_rows(std::span<const std::size_t> idx) const;

  friend EmbeddingMatrix normalize_rows(const EmbeddingMatrix& m);

 private:
  Matrix values_;
  bool normalized_ = false;
};

// Scales every row to unit L2 norm. Throws on an all-zero row.
EmbeddingMatrix normalize_rows(const EmbeddingMatrix& m);

// EMB1 binary format: "PSCB", u32 version (1), u32 rows, u32 cols, then
// rows*cols little-endian binary32 values, row-major.
EmbeddingMatrix load_embeddings(const std::filesystem::path& path);
EmbeddingMatrix parse_embeddings(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_embeddings(const EmbeddingMatrix& m);
void save_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path);

struct ConceptEntry {
  std::string text;
  std::vector<ClassIndex> classes;  // sorted, unique
  std::size_t embedding_row = 0;
  std::vector<std::string> aliases;

  bool operator==(const ConceptEntry&) const = default;
};

// Ordered concept list with per-concept class sets.
class ConceptBank {
 public:
  ConceptBank() = default;
  // Validates text uniqueness (case-folded, trimmed), non-empty texts and
  // class ranges; sorts and dedups each class list.
  ConceptBank(std::size_t num_classes, std::vector<ConceptEntry> concepts);

  std::size_t num_classes() const { return num_classes_; }
  std::size_t size() const { return concepts_.size(); }
  bool empty() const { return concepts_.empty(); }
  const ConceptEntry& operator[](std::size_t j) const { return concepts_[j]; }
  const std::vector<ConceptEntry>& concepts() const { return concepts_; }

  bool has_aliases() const;
  std::vector<std::size_t> embedding_rows() const;

  bool operator==(const ConceptBank&) const = default;

 private:
  std::size_t num_classes_ = 0;
  std::vector<ConceptEntry> concepts_;
};

// Dedup key: ASCII-lowercased text with surrounding whitespace removed.
std::string concept_key(std::string_view text);

// Reads {"num_classes": l, "concepts": [{"text", "classes"}, ...]}.
// Records sharing a key collapse into the first one with the union of
// classes. embedding_row defaults to the record's position in the array.
ConceptBank load_concepts(const std::filesystem::path& path);
ConceptBank parse_concepts(std::string_view json_text);
std::string serialize_concepts(const ConceptBank& bank);
void save_concepts(const ConceptBank& bank, const std::filesystem::path& path);

// Rows of `texts` addressed by the bank's embedding_row fields, in bank order.
EmbeddingMatrix concept_embeddings(const ConceptBank& bank,
                                   const EmbeddingMatrix& texts);

class LabelVector {
 public:
  LabelVector() = default;
  LabelVector(std::vector<ClassIndex> labels, std::size_t num_classes);

  std::size_t size() const { return labels_.size(); }
  std::size_t num_classes() const { return num_classes_; }
  ClassIndex operator[](std::size_t i) const { return labels_[i]; }
  const std::vector<ClassIndex>& labels() const { return labels_; }

  LabelVector select(std::span<const std::size_t> idx) const;
  // Row indices of each class, ascending.
  std::vector<std::vector<std::size_t>> members_by_class() const;

  bool operator==(const LabelVector&) const = default;

 private:
  std::vector<ClassIndex> labels_;
  std::size_t num_classes_ = 0;
};

// One decimal class index per line.
LabelVector load_labels(const std::filesystem::path& path, std::size_t num_classes);
void save_labels(const LabelVector& labels, const std::filesystem::path& path);

struct LabeledDataset {
  LabeledDataset(EmbeddingMatrix images, BinaryMatrix concept_labels,
                 LabelVector class_labels);

  EmbeddingMatrix image_embeddings;
  BinaryMatrix concept_labels;
  LabelVector class_labels;
};

// Concept label matrix as CSV: one row per image, comma-separated 0/1.
BinaryMatrix load_concept_labels(const std::filesystem::path& path);
void save_concept_labels(const BinaryMatrix& s, const std::filesystem::path& path);

enum class StrategyMode { kIndependent, kPartiallyShared, kGloballyShared };

std::string_view to_string(StrategyMode mode);
StrategyMode parse_strategy(std::string_view name);

struct CblConfig {
  std::size_t batch_size = 32;
  std::size_t max_steps = 2000;
  double learning_rate = 5e-4;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t log_every = 100;
};

struct FclConfig {
  std::size_t batch_size = 256;
  std::size_t max_iterations = 10000;
  double lambda = 7e-4;
  double alpha = 0.99;
  double step_size = 0.0;  // 0 selects 1 / (3 L)
  double tolerance = 1e-7;
};

struct PipelineConfig {
  double tau_conf = 0.20;
  double tau_merge = 0.9996;
  std::size_t k_exclusive = 1;
  double beta = 0.25;
  std::uint64_t seed = 0;
  StrategyMode strategy = StrategyMode::kPartiallyShared;
  CblConfig cbl;
  FclConfig fcl;

  // Throws Error(kInvalidArgument) naming the offending field.
  void validate() const;
};

// Reads a whole file; throws Error(kIo) if it cannot be opened.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
std::string read_file_text(const std::filesystem::path& path);
void write_file_text(const std::filesystem::path& path, std::string_view text);

}  // namespace pscbm

#endif  // PSCBM_DATA_MODEL_H_
