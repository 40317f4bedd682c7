#ifndef PSCBM_EXPLAIN_H_
#define PSCBM_EXPLAIN_H_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pscbm/data_model.h"
#include "pscbm/training.h"

namespace pscbm {

struct Contribution {
  std::size_t concept_index;
  std::string text;
  double activation;  // normalized concept logit
  double weight;      // W_F[predicted][concept_index]
  double value;       // activation * weight
};

struct Explanation {
  std::size_t predicted_class = 0;
  double logit = 0.0;  // bias + sum of all contributions, in concept order
  double bias = 0.0;
  std::size_t top_k = 0;
  // Every concept, ordered by |value| descending (lowest index on ties).
  std::vector<Contribution> ranked;
  // Sum of values beyond the first top_k entries.
  double other_sum = 0.0;
};

inline constexpr std::size_t kDefaultTopK = 5;

// Explains the model's prediction for one embedding row.
Explanation explain_prediction(const TrainedModel& model, std::span<const double> embedding,
                               std::size_t top_k = kDefaultTopK);

std::string explanations_json(const std::vector<Explanation>& explanations);
// Text bars for the top-k entries plus the remainder.
std::string render_explanation(const Explanation& e);

struct ConceptClassMap {
  struct Node {
    std::string text;
    std::vector<ClassIndex> classes;
    bool exclusive;
  };
  std::size_t num_classes = 0;
  std::vector<Node> concepts;
};

ConceptClassMap export_concept_map(const ConceptBank& bank);
std::string concept_map_json(const ConceptClassMap& map);
std::string concept_map_dot(const ConceptClassMap& map);

}  // namespace pscbm

#endif  // PSCBM_EXPLAIN_H_
