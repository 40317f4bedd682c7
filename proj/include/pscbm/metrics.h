#ifndef PSCBM_METRICS_H_
#define PSCBM_METRICS_H_

#include <cstddef>
#include <string>
#include <vector>

#include "pscbm/affinity.h"
#include "pscbm/data_model.h"

namespace pscbm {

struct EvalReport {
  double acc = 0.0;
  std::size_t num_concepts = 0;
  std::size_t num_classes = 0;
  std::size_t k = 0;
  double beta = 0.0;
  double cea = 0.0;
  double alignment_score = 0.0;
};

// Fraction of positions where pred and truth agree.
double accuracy(const LabelVector& pred, const LabelVector& truth);

// k = max(2, ceil(log2 l)).
std::size_t cea_base(std::size_t num_classes);

// Concept-efficient accuracy: acc / max(1, (log_k m)^beta).
double cea(double acc, std::size_t num_concepts, std::size_t num_classes, double beta);

// Per class y: mean of A[i][j] over images i of class y and concepts j with
// y in C_j. Returns the unweighted mean over classes that have at least one
// concept (and one image).
double alignment_score(const AffinityMatrix& a, const ConceptBank& bank,
                       const LabelVector& labels);

EvalReport make_report(double acc, std::size_t num_concepts, std::size_t num_classes,
                       double beta, double alignment);

std::string eval_report_json(const EvalReport& report);

// CSV with header "method,acc,num_concepts,cea".
std::string eval_table_csv(const std::vector<std::pair<std::string, EvalReport>>& rows);

}  // namespace pscbm

#endif  // PSCBM_METRICS_H_
