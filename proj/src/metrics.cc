#include "pscbm/metrics.h"

#include <bit>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "pscbm/error.h"

namespace pscbm {

double accuracy(const LabelVector& pred, const LabelVector& truth) {
  if (pred.size() != truth.size()) {
    throw invalid_argument("accuracy: " + std::to_string(pred.size()) +
                           " predictions vs " + std::to_string(truth.size()) + " labels");
  }
  if (pred.size() == 0) throw invalid_argument("accuracy: empty label vectors");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

std::size_t cea_base(std::size_t num_classes) {
  // ceil(log2 l) == bit width of (l - 1) for l >= 1.
  const auto bits = static_cast<std::size_t>(std::bit_width(num_classes - 1));
  return std::max<std::size_t>(2, bits);
}

double cea(double acc, std::size_t num_concepts, std::size_t num_classes, double beta) {
  if (!(acc >= 0.0 && acc <= 1.0)) {
    throw invalid_argument("cea: accuracy must be in [0, 1]");
  }
  if (num_concepts < 1) throw invalid_argument("cea: need at least one concept");
  if (num_classes < 2) throw invalid_argument("cea: need at least two classes");
  if (!(beta >= 0.0) || !std::isfinite(beta)) {
    throw invalid_argument("cea: beta must be finite and >= 0");
  }
  const double k = static_cast<double>(cea_base(num_classes));
  const double log_k_m = std::log(static_cast<double>(num_concepts)) / std::log(k);
  const double denom = std::max(1.0, std::pow(log_k_m, beta));
  return acc / denom;
}

double alignment_score(const AffinityMatrix& a, const ConceptBank& bank,
                       const LabelVector& labels) {
  if (a.num_concepts() != bank.size() || a.num_images() != labels.size()) {
    throw invalid_argument("alignment_score: affinity shape does not match bank/labels");
  }
  const auto members = labels.members_by_class();
  std::vector<std::vector<std::size_t>> concepts_of(bank.num_classes());
  for (std::size_t j = 0; j < bank.size(); ++j) {
    for (ClassIndex y : bank[j].classes) concepts_of[y].push_back(j);
  }
  double total = 0.0;
  std::size_t classes = 0;
  for (std::size_t y = 0; y < concepts_of.size(); ++y) {
    if (concepts_of[y].empty() || members[y].empty()) continue;
    double sum = 0.0;
    for (std::size_t i : members[y]) {
      for (std::size_t j : concepts_of[y]) sum += a(i, j);
    }
    total += sum / static_cast<double>(members[y].size() * concepts_of[y].size());
    ++classes;
  }
  if (classes == 0) {
    throw invalid_argument("alignment_score: no class has both images and concepts");
  }
  return total / static_cast<double>(classes);
}

EvalReport make_report(double acc, std::size_t num_concepts, std::size_t num_classes,
                       double beta, double alignment) {
  return EvalReport{acc,
                    num_concepts,
                    num_classes,
                    cea_base(num_classes),
                    beta,
                    cea(acc, num_concepts, num_classes, beta),
                    alignment};
}

std::string eval_report_json(const EvalReport& r) {
  nlohmann::ordered_json doc;
  doc["acc"] = r.acc;
  doc["num_concepts"] = r.num_concepts;
  doc["num_classes"] = r.num_classes;
  doc["k"] = r.k;
  doc["beta"] = r.beta;
  doc["cea"] = r.cea;
  doc["alignment_score"] = r.alignment_score;
  return doc.dump(2) + "\n";
}

std::string eval_table_csv(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "method,acc,num_concepts,cea\n";
  for (const auto& [name, r] : rows) {
    out << name << ',' << r.acc << ',' << r.num_concepts << ',' << r.cea << '\n';
  }
  return out.str();
}

}  // namespace pscbm
