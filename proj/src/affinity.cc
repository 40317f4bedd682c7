#include "pscbm/affinity.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <vector>

#include "pscbm/error.h"

namespace pscbm {

namespace {
constexpr double kRangeSlack = 1e-9;
constexpr std::size_t kRowTile = 64;
}  // namespace

AffinityMatrix::AffinityMatrix(Matrix values) : values_(std::move(values)) {
  for (std::size_t i = 0; i < values_.rows(); ++i) {
    for (std::size_t j = 0; j < values_.cols(); ++j) {
      const double v = values_(i, j);
      if (!std::isfinite(v) || v < -1.0 - kRangeSlack || v > 1.0 + kRangeSlack) {
        throw Error(ErrorCode::kNumeric, "affinity entry (" + std::to_string(i) + ", " +
                                             std::to_string(j) + ") = " +
                                             std::to_string(v) + " outside [-1, 1]");
      }
    }
  }
}

AffinityMatrix AffinityMatrix::select_images(std::span<const std::size_t> rows) const {
  return AffinityMatrix(values_.select_rows(rows));
}

AffinityMatrix AffinityMatrix::select_concepts(std::span<const std::size_t> cols) const {
  return AffinityMatrix(values_.select_cols(cols));
}

AffinityMatrix compute_affinity(const EmbeddingMatrix& images,
                                const EmbeddingMatrix& texts, unsigned threads) {
  if (images.cols() != texts.cols()) {
    throw invalid_argument("affinity: image dimension " + std::to_string(images.cols()) +
                           " != text dimension " + std::to_string(texts.cols()));
  }
  if (!images.normalized() || !texts.normalized()) {
    throw invalid_argument("affinity: inputs must be row-normalized");
  }
  Matrix out(images.rows(), texts.rows());
  parallel_tiles(images.rows(), kRowTile, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t j = 0; j < texts.rows(); ++j) {
        out(i, j) = dot(images.row(i), texts.row(j));
      }
    }
  });
  return AffinityMatrix(std::move(out));
}

AffinityMatrix bank_affinity(const EmbeddingMatrix& images, const EmbeddingMatrix& texts,
                             const ConceptBank& bank, unsigned threads) {
  if (bank.empty()) {
    throw invalid_argument("affinity: concept bank is empty");
  }
  return compute_affinity(images, concept_embeddings(bank, texts), threads);
}

std::optional<double> ClassScoreTable::find(std::size_t concept_index, ClassIndex y) const {
  if (auto it = scores_.find({concept_index, y}); it != scores_.end()) return it->second;
  return std::nullopt;
}

double ClassScoreTable::at(std::size_t concept_index, ClassIndex y) const {
  if (auto s = find(concept_index, y)) return *s;
  throw invalid_argument("no class score for concept " + std::to_string(concept_index) +
                         ", class " + std::to_string(y));
}

ClassScoreTable class_scores(const AffinityMatrix& a, const ConceptBank& bank,
                             const LabelVector& labels) {
  if (a.num_concepts() != bank.size()) {
    throw invalid_argument("class_scores: affinity has " +
                           std::to_string(a.num_concepts()) + " columns, bank has " +
                           std::to_string(bank.size()) + " concepts");
  }
  if (a.num_images() != labels.size()) {
    throw invalid_argument("class_scores: affinity has " + std::to_string(a.num_images()) +
                           " rows, labels have " + std::to_string(labels.size()));
  }
  if (bank.num_classes() != labels.num_classes()) {
    throw invalid_argument("class_scores: bank and labels disagree on the class count");
  }
  const auto members = labels.members_by_class();
  ClassScoreTable table;
  std::vector<double> values;
  for (std::size_t j = 0; j < bank.size(); ++j) {
    for (ClassIndex y : bank[j].classes) {
      const auto& rows = members[y];
      if (rows.empty()) {
        throw invalid_argument("class " + std::to_string(y) +
                               " has no images but is referenced by concept '" +
                               bank[j].text + "'");
      }
      values.clear();
      for (std::size_t i : rows) values.push_back(a(i, j));
      const std::size_t top = std::min(kTopAlignmentCount, values.size());
      std::partial_sort(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(top),
                        values.end(), std::greater<>());
      double sum = 0.0;
      for (std::size_t k = 0; k < top; ++k) sum += values[k];
      table.set(j, y, sum / static_cast<double>(top));
    }
  }
  return table;
}

std::string affinity_csv(const AffinityMatrix& a, const ConceptBank& bank) {
  std::ostringstream out;
  out.precision(17);
  auto quote = [](const std::string& s) {
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  };
  for (std::size_t j = 0; j < bank.size(); ++j) {
    if (j) out << ',';
    out << quote(bank[j].text);
  }
  out << '\n';
  for (std::size_t i = 0; i < a.num_images(); ++i) {
    for (std::size_t j = 0; j < a.num_concepts(); ++j) {
      if (j) out << ',';
      out << a(i, j);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace pscbm
