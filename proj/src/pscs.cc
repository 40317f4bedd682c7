#include "pscbm/pscs.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"
#include "pscbm/error.h"

namespace pscbm {

ConceptBank filter_concepts(const ConceptBank& bank, const ClassScoreTable& scores,
                            double tau_conf) {
  std::vector<ConceptEntry> kept;
  for (std::size_t j = 0; j < bank.size(); ++j) {
    ConceptEntry entry = bank[j];
    entry.classes.clear();
    for (ClassIndex y : bank[j].classes) {
      if (scores.at(j, y) > tau_conf) entry.classes.push_back(y);
    }
    if (!entry.classes.empty()) kept.push_back(std::move(entry));
  }
  return ConceptBank(bank.num_classes(), std::move(kept));
}

Matrix concept_correlation(const AffinityMatrix& a, unsigned threads) {
  const std::size_t m = a.num_concepts();
  const std::size_t n = a.num_images();
  // Column-major copy so each correlation is a contiguous dot product.
  Matrix cols(m, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) cols(j, i) = a(i, j);
  }
  std::vector<double> norms(m);
  for (std::size_t j = 0; j < m; ++j) {
    norms[j] = std::sqrt(dot(cols.row(j), cols.row(j)));
    if (norms[j] == 0.0) {
      throw invalid_argument("concept_correlation: affinity column " + std::to_string(j) +
                             " is all zero");
    }
  }
  Matrix q(m, m);
  parallel_tiles(m, 16, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      q(i, i) = 1.0;
      for (std::size_t j = i + 1; j < m; ++j) {
        q(i, j) = dot(cols.row(i), cols.row(j)) / (norms[i] * norms[j]);
      }
    }
  });
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < i; ++j) q(i, j) = q(j, i);
  }
  return q;
}

MergeResult merge_concepts(const ConceptBank& bank, const Matrix& q, double tau_merge) {
  const std::size_t m = bank.size();
  if (q.rows() != m || q.cols() != m) {
    throw invalid_argument("merge_concepts: Q is " + std::to_string(q.rows()) + "x" +
                           std::to_string(q.cols()) + " but the bank has " +
                           std::to_string(m) + " concepts");
  }
  std::vector<bool> remaining(m, true);
  std::size_t left = m;
  MergeReport report;
  std::vector<ConceptEntry> survivors;
  double q_sum = 0.0;
  report.q_stats.min = std::numeric_limits<double>::infinity();
  report.q_stats.max = -std::numeric_limits<double>::infinity();

  while (left > 0) {
    std::size_t best = m;
    std::size_t best_size = 0;
    for (std::size_t j = 0; j < m; ++j) {
      if (!remaining[j]) continue;
      std::size_t size = 0;
      for (std::size_t i = 0; i < m; ++i) {
        if (remaining[i] && q(i, j) > tau_merge) ++size;
      }
      if (best == m || size > best_size) {
        best = j;
        best_size = size;
      }
    }

    ConceptEntry merged = bank[best];
    remaining[best] = false;
    --left;
    for (std::size_t i = 0; i < m; ++i) {
      if (!remaining[i] || q(i, best) <= tau_merge) continue;
      remaining[i] = false;
      --left;
      report.merged_into[i] = best;
      const double qi = q(i, best);
      report.q_stats.min = std::min(report.q_stats.min, qi);
      report.q_stats.max = std::max(report.q_stats.max, qi);
      q_sum += qi;
      ++report.q_stats.pairs;
      merged.classes.insert(merged.classes.end(), bank[i].classes.begin(),
                            bank[i].classes.end());
      merged.aliases.push_back(bank[i].text);
      merged.aliases.insert(merged.aliases.end(), bank[i].aliases.begin(),
                            bank[i].aliases.end());
    }
    report.kept.push_back(best);
    survivors.push_back(std::move(merged));
  }

  if (report.q_stats.pairs == 0) {
    report.q_stats = MergeStats{};
  } else {
    report.q_stats.mean = q_sum / static_cast<double>(report.q_stats.pairs);
  }
  return {ConceptBank(bank.num_classes(), std::move(survivors)), std::move(report)};
}

ConceptBank prune_exclusive(const ConceptBank& bank, const ClassScoreTable& scores,
                            std::size_t k) {
  std::vector<std::vector<std::size_t>> exclusive(bank.num_classes());
  for (std::size_t j = 0; j < bank.size(); ++j) {
    if (bank[j].classes.size() == 1) exclusive[bank[j].classes.front()].push_back(j);
  }
  std::vector<bool> keep(bank.size(), true);
  for (std::size_t y = 0; y < exclusive.size(); ++y) {
    auto& list = exclusive[y];
    if (list.size() <= k) continue;
    const auto cls = static_cast<ClassIndex>(y);
    std::stable_sort(list.begin(), list.end(), [&](std::size_t a, std::size_t b) {
      return scores.at(a, cls) > scores.at(b, cls);
    });
    for (std::size_t r = k; r < list.size(); ++r) keep[list[r]] = false;
  }
  std::vector<ConceptEntry> out;
  for (std::size_t j = 0; j < bank.size(); ++j) {
    if (keep[j]) out.push_back(bank[j]);
  }
  return ConceptBank(bank.num_classes(), std::move(out));
}

ConceptBank split_by_class(const ConceptBank& bank) {
  std::vector<ConceptEntry> out;
  for (const auto& c : bank.concepts()) {
    if (c.classes.size() <= 1) {
      out.push_back(c);
      continue;
    }
    for (ClassIndex y : c.classes) {
      ConceptEntry copy = c;
      copy.text = c.text + " [class " + std::to_string(y) + "]";
      copy.classes = {y};
      out.push_back(std::move(copy));
    }
  }
  return ConceptBank(bank.num_classes(), std::move(out));
}

BinaryMatrix label_concepts(const LabelVector& labels, const ConceptBank& bank,
                            const AffinityMatrix& a, double tau_conf, StrategyMode mode) {
  if (a.num_images() != labels.size() || a.num_concepts() != bank.size()) {
    throw invalid_argument("label_concepts: affinity is " +
                           std::to_string(a.num_images()) + "x" +
                           std::to_string(a.num_concepts()) + ", expected " +
                           std::to_string(labels.size()) + "x" +
                           std::to_string(bank.size()));
  }
  if (mode == StrategyMode::kIndependent) {
    if (bank.has_aliases()) {
      throw invalid_argument("independent labeling requires an unmerged concept bank");
    }
    for (const auto& c : bank.concepts()) {
      if (c.classes.size() != 1) {
        throw invalid_argument("independent labeling requires single-class concepts; '" +
                               c.text + "' has " + std::to_string(c.classes.size()));
      }
    }
  }
  BinaryMatrix s(labels.size(), bank.size());
  for (std::size_t j = 0; j < bank.size(); ++j) {
    const auto& classes = bank[j].classes;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (!(a(i, j) > tau_conf)) continue;
      bool on = false;
      switch (mode) {
        case StrategyMode::kGloballyShared:
          on = true;
          break;
        case StrategyMode::kPartiallyShared:
          on = std::binary_search(classes.begin(), classes.end(), labels[i]);
          break;
        case StrategyMode::kIndependent:
          on = classes.front() == labels[i];
          break;
      }
      s.set(i, j, on);
    }
  }
  return s;
}

LabeledDataset label_dataset(const EmbeddingMatrix& images, const LabelVector& labels,
                             const ConceptBank& bank, const AffinityMatrix& a,
                             double tau_conf, StrategyMode mode) {
  return LabeledDataset(images, label_concepts(labels, bank, a, tau_conf, mode), labels);
}

std::string merge_report_json(const MergeReport& report, const ConceptBank& input) {
  using ojson = nlohmann::ordered_json;
  ojson kept = ojson::array();
  for (std::size_t j : report.kept) {
    kept.push_back({{"index", j}, {"text", input[j].text}});
  }
  ojson merged = ojson::array();
  for (const auto& [from, to] : report.merged_into) {
    merged.push_back({{"removed", from},
                      {"removed_text", input[from].text},
                      {"survivor", to},
                      {"survivor_text", input[to].text}});
  }
  ojson doc;
  doc["input_concepts"] = input.size();
  doc["kept"] = std::move(kept);
  doc["merged_into"] = std::move(merged);
  doc["q_stats"] = {{"pairs", report.q_stats.pairs},
                    {"min", report.q_stats.min},
                    {"max", report.q_stats.max},
                    {"mean", report.q_stats.mean}};
  return doc.dump(2) + "\n";
}

}  // namespace pscbm
