#ifndef PSCBM_PSCS_H_
#define PSCBM_PSCS_H_

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pscbm/affinity.h"
#include "pscbm/data_model.h"
#include "pscbm/matrix.h"

namespace pscbm {

// Keeps, for each concept, the classes whose score strictly exceeds
// tau_conf. Concepts left with no class are dropped; order is preserved.
ConceptBank filter_concepts(const ConceptBank& bank, const ClassScoreTable& scores,
                            double tau_conf);

// Cosine similarity between affinity columns (m x m, symmetric).
// Throws if a column is identically zero.
Matrix concept_correlation(const AffinityMatrix& a, unsigned threads = 1);

struct MergeStats {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  std::size_t pairs = 0;
};

struct MergeReport {
  // Surviving input indices, in the order they were selected.
  std::vector<std::size_t> kept;
  // Removed input index -> the survivor that absorbed it.
  std::map<std::size_t, std::size_t> merged_into;
  // Q over all (removed, survivor) pairs; zeros when nothing merged.
  MergeStats q_stats;
};

struct MergeResult {
  ConceptBank bank;
  MergeReport report;
};

// Greedy merge over a fixed correlation matrix Q:
//   while concepts remain:
//     S_j = { i remaining : Q[i][j] > tau_merge } for each remaining j
//     c = argmax_j |S_j| (lowest index on ties)
//     emit c; remove {c} and S_c
// The survivor keeps its text and embedding row, takes the union of the
// absorbed class sets, and lists absorbed texts (and their aliases) as aliases.
MergeResult merge_concepts(const ConceptBank& bank, const Matrix& q, double tau_merge);

// Among single-class concepts, keeps at most k per class ranked by
// score(j, y) descending (lowest index on ties). Multi-class concepts pass
// through. scores must be indexed against `bank`.
ConceptBank prune_exclusive(const ConceptBank& bank, const ClassScoreTable& scores,
                            std::size_t k);

// Expands every (concept, class) pair of a multi-class concept into its own
// single-class entry, emulating per-class concept generation. Single-class
// concepts keep their text; copies are named "<text> [class <y>]".
ConceptBank split_by_class(const ConceptBank& bank);

// Concept label matrix s (n x |bank|). `a` must have one column per bank
// concept.
//   PartiallyShared: s = 1 iff y_i in C_j and A[i][j] > tau_conf
//   GloballyShared:  s = 1 iff A[i][j] > tau_conf
//   Independent:     s = 1 iff C_j = {y_i} and A[i][j] > tau_conf;
//                    requires a bank without merges or multi-class concepts
BinaryMatrix label_concepts(const LabelVector& labels, const ConceptBank& bank,
                            const AffinityMatrix& a, double tau_conf, StrategyMode mode);

LabeledDataset label_dataset(const EmbeddingMatrix& images, const LabelVector& labels,
                             const ConceptBank& bank, const AffinityMatrix& a,
                             double tau_conf, StrategyMode mode);

std::string merge_report_json(const MergeReport& report, const ConceptBank& input);

}  // namespace pscbm

#endif  // PSCBM_PSCS_H_
