#ifndef PSCBM_AFFINITY_H_
#define PSCBM_AFFINITY_H_

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>

#include "pscbm/data_model.h"
#include "pscbm/matrix.h"

namespace pscbm {

// n x m cosine similarities between image rows and concept rows.
class AffinityMatrix {
 public:
  AffinityMatrix() = default;
  // Rejects non-finite entries and entries outside [-1 - 1e-9, 1 + 1e-9].
  explicit AffinityMatrix(Matrix values);

  std::size_t num_images() const { return values_.rows(); }
  std::size_t num_concepts() const { return values_.cols(); }
  double operator()(std::size_t i, std::size_t j) const { return values_(i, j); }
  const Matrix& values() const { return values_; }

  AffinityMatrix select_images(std::span<const std::size_t> rows) const;
  AffinityMatrix select_concepts(std::span<const std::size_t> cols) const;

 private:
  Matrix values_;
};

// A[i][j] = <images_i, texts_j>. Both inputs must be row-normalized with
// equal widths. Each entry is a single sequential dot product, so the
// result does not depend on `threads`.
AffinityMatrix compute_affinity(const EmbeddingMatrix& images,
                                const EmbeddingMatrix& texts, unsigned threads = 1);

// Affinity against the bank's concepts (gathering rows via embedding_row).
AffinityMatrix bank_affinity(const EmbeddingMatrix& images, const EmbeddingMatrix& texts,
                             const ConceptBank& bank, unsigned threads = 1);

// Per-(concept, class) filtering statistic.
class ClassScoreTable {
 public:
  void set(std::size_t concept_index, ClassIndex y, double score) {
    scores_[{concept_index, y}] = score;
  }
  std::optional<double> find(std::size_t concept_index, ClassIndex y) const;
  // Throws if the pair is missing.
  double at(std::size_t concept_index, ClassIndex y) const;
  std::size_t size() const { return scores_.size(); }
  const std::map<std::pair<std::size_t, ClassIndex>, double>& entries() const {
    return scores_;
  }

 private:
  std::map<std::pair<std::size_t, ClassIndex>, double> scores_;
};

inline constexpr std::size_t kTopAlignmentCount = 4;

// score(j, y) = mean of the largest min(4, |class y|) values of A[., j]
// over images of class y, for every y in C_j.
ClassScoreTable class_scores(const AffinityMatrix& a, const ConceptBank& bank,
                             const LabelVector& labels);

// Debug dump: header of concept texts, then one row per image.
std::string affinity_csv(const AffinityMatrix& a, const ConceptBank& bank);

}  // namespace pscbm

#endif  // PSCBM_AFFINITY_H_
