#ifndef PSCBM_EXEMPLARS_H_
#define PSCBM_EXEMPLARS_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pscbm/data_model.h"

namespace pscbm {

// Few-shot exemplar image rows per class, in selection order.
struct ExemplarSet {
  std::vector<std::vector<std::size_t>> per_class;
  std::size_t shots = 0;

  bool operator==(const ExemplarSet&) const = default;
};

enum class ExemplarMode { kFarthestPoint, kRandom };

// Farthest-point sampling under cosine distance 1 - <a, b>. For each class
// the first pick is uniform over the class (stream derive_stream(seed, y));
// every further pick maximizes the minimum distance to the picks so far,
// ties going to the lowest row index.
ExemplarSet select_exemplars_fps(const EmbeddingMatrix& images, const LabelVector& labels,
                                 std::size_t shots, std::uint64_t seed);

// Uniform sampling without replacement: partial Fisher-Yates over the
// class's ascending row list using derive_stream(seed, y).
ExemplarSet select_exemplars_random(const EmbeddingMatrix& images,
                                    const LabelVector& labels, std::size_t shots,
                                    std::uint64_t seed);

// {"<class>": [rows...], ...}
std::string exemplars_json(const ExemplarSet& set);

}  // namespace pscbm

#endif  // PSCBM_EXEMPLARS_H_
