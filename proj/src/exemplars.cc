#include "pscbm/exemplars.h"

#include <limits>

#include "json.hpp"
#include "pscbm/error.h"
#include "pscbm/rng.h"

namespace pscbm {

namespace {

std::vector<std::vector<std::size_t>> checked_members(const EmbeddingMatrix& images,
                                                      const LabelVector& labels,
                                                      std::size_t shots) {
  if (shots == 0) throw invalid_argument("exemplar selection: shots must be >= 1");
  if (images.rows() != labels.size()) {
    throw invalid_argument("exemplar selection: " + std::to_string(images.rows()) +
                           " images but " + std::to_string(labels.size()) + " labels");
  }
  auto members = labels.members_by_class();
  for (std::size_t y = 0; y < members.size(); ++y) {
    if (members[y].empty()) {
      throw invalid_argument("exemplar selection: class " + std::to_string(y) +
                             " has no images");
    }
  }
  return members;
}

}  // namespace

ExemplarSet select_exemplars_fps(const EmbeddingMatrix& images, const LabelVector& labels,
                                 std::size_t shots, std::uint64_t seed) {
  if (!images.normalized()) {
    throw invalid_argument("exemplar selection: embeddings must be row-normalized");
  }
  const auto members = checked_members(images, labels, shots);
  ExemplarSet out{{}, shots};
  out.per_class.resize(members.size());
  for (std::size_t y = 0; y < members.size(); ++y) {
    const auto& rows = members[y];
    const std::size_t take = std::min(shots, rows.size());
    SplitMix64 rng = derive_stream(seed, y);

    std::vector<bool> chosen(rows.size(), false);
    std::vector<double> min_dist(rows.size(), std::numeric_limits<double>::infinity());
    std::size_t pick = static_cast<std::size_t>(rng.uniform_below(rows.size()));
    auto& selected = out.per_class[y];
    for (;;) {
      chosen[pick] = true;
      selected.push_back(rows[pick]);
      if (selected.size() == take) break;
      const auto anchor = images.row(rows[pick]);
      std::size_t best = rows.size();
      double best_dist = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < rows.size(); ++k) {
        if (chosen[k]) continue;
        min_dist[k] = std::min(min_dist[k], 1.0 - dot(images.row(rows[k]), anchor));
        if (min_dist[k] > best_dist) {
          best_dist = min_dist[k];
          best = k;
        }
      }
      pick = best;
    }
  }
  return out;
}

ExemplarSet select_exemplars_random(const EmbeddingMatrix& images,
                                    const LabelVector& labels, std::size_t shots,
                                    std::uint64_t seed) {
  auto members = checked_members(images, labels, shots);
  ExemplarSet out{{}, shots};
  out.per_class.resize(members.size());
  for (std::size_t y = 0; y < members.size(); ++y) {
    auto& rows = members[y];
    const std::size_t take = std::min(shots, rows.size());
    SplitMix64 rng = derive_stream(seed, y);
    partial_shuffle(std::span<std::size_t>(rows), take, rng);
    out.per_class[y].assign(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return out;
}

std::string exemplars_json(const ExemplarSet& set) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::object();
  for (std::size_t y = 0; y < set.per_class.size(); ++y) {
    doc[std::to_string(y)] = set.per_class[y];
  }
  return doc.dump(2) + "\n";
}

}  // namespace pscbm
