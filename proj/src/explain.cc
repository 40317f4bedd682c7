#include "pscbm/explain.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "pscbm/error.h"

namespace pscbm {

using ojson = nlohmann::ordered_json;

Explanation explain_prediction(const TrainedModel& model, std::span<const double> embedding,
                               std::size_t top_k) {
  if (top_k == 0) throw invalid_argument("explain: top_k must be >= 1");
  if (embedding.size() != model.head.input_dim()) {
    throw invalid_argument("explain: embedding has " + std::to_string(embedding.size()) +
                           " values, model expects " +
                           std::to_string(model.head.input_dim()));
  }
  const std::size_t m = model.head.num_outputs();
  const auto& clf = model.classifier;

  std::vector<double> h(m);
  for (std::size_t j = 0; j < m; ++j) {
    const double z = dot(model.head.weights.row(j), embedding) + model.head.bias[j];
    h[j] = (z - model.stats.mean[j]) / model.stats.stddev[j];
  }

  Explanation e;
  e.logit = class_logit(clf, h, 0);
  for (std::size_t c = 1; c < clf.num_classes(); ++c) {
    const double v = class_logit(clf, h, c);
    if (v > e.logit) {
      e.logit = v;
      e.predicted_class = c;
    }
  }
  e.bias = clf.bias[e.predicted_class];
  e.top_k = top_k;

  const auto w = clf.weights.row(e.predicted_class);
  e.ranked.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    e.ranked.push_back({j, model.concept_texts.at(j), h[j], w[j], h[j] * w[j]});
  }
  std::stable_sort(e.ranked.begin(), e.ranked.end(),
                   [](const Contribution& a, const Contribution& b) {
                     return std::abs(a.value) > std::abs(b.value);
                   });
  for (std::size_t r = top_k; r < e.ranked.size(); ++r) e.other_sum += e.ranked[r].value;
  return e;
}

std::string explanations_json(const std::vector<Explanation>& explanations) {
  ojson doc = ojson::array();
  for (const auto& e : explanations) {
    ojson top = ojson::array();
    for (std::size_t r = 0; r < std::min(e.top_k, e.ranked.size()); ++r) {
      const auto& c = e.ranked[r];
      top.push_back({{"concept", c.text},
                     {"index", c.concept_index},
                     {"activation", c.activation},
                     {"weight", c.weight},
                     {"contribution", c.value}});
    }
    doc.push_back({{"predicted_class", e.predicted_class},
                   {"logit", e.logit},
                   {"bias", e.bias},
                   {"top_k", std::move(top)},
                   {"sum_of_other_concepts", e.other_sum}});
  }
  return doc.dump(2) + "\n";
}

std::string render_explanation(const Explanation& e) {
  constexpr int kWidth = 30;
  const std::size_t shown = std::min(e.top_k, e.ranked.size());
  double scale = std::abs(e.other_sum);
  for (std::size_t r = 0; r < shown; ++r) scale = std::max(scale, std::abs(e.ranked[r].value));
  auto bar = [&](double v) {
    const int len = scale > 0 ? static_cast<int>(std::lround(std::abs(v) / scale * kWidth)) : 0;
    return std::string(static_cast<std::size_t>(len), v < 0 ? '-' : '#');
  };
  std::ostringstream out;
  out.precision(4);
  out << "predicted class " << e.predicted_class << " (logit " << e.logit << ", bias "
      << e.bias << ")\n";
  for (std::size_t r = 0; r < shown; ++r) {
    const auto& c = e.ranked[r];
    out << "  " << bar(c.value) << ' ' << c.value << "  " << c.text << '\n';
  }
  if (shown < e.ranked.size()) {
    out << "  " << bar(e.other_sum) << ' ' << e.other_sum << "  sum of other concepts\n";
  }
  return out.str();
}

ConceptClassMap export_concept_map(const ConceptBank& bank) {
  ConceptClassMap map;
  map.num_classes = bank.num_classes();
  for (const auto& c : bank.concepts()) {
    map.concepts.push_back({c.text, c.classes, c.classes.size() == 1});
  }
  return map;
}

std::string concept_map_json(const ConceptClassMap& map) {
  ojson concepts = ojson::array();
  for (const auto& node : map.concepts) {
    concepts.push_back(
        {{"text", node.text}, {"classes", node.classes}, {"exclusive", node.exclusive}});
  }
  ojson doc;
  doc["num_classes"] = map.num_classes;
  doc["concepts"] = std::move(concepts);
  return doc.dump(2) + "\n";
}

std::string concept_map_dot(const ConceptClassMap& map) {
  auto escape = [](const std::string& s) {
    std::string out;
    for (char c : s) {
      if (c == '"' || c == '\\') out += '\\';
      out += c;
    }
    return out;
  };
  std::ostringstream out;
  out << "graph concept_class_map {\n  rankdir=LR;\n";
  for (std::size_t y = 0; y < map.num_classes; ++y) {
    out << "  class" << y << " [shape=box, label=\"class " << y << "\"];\n";
  }
  for (std::size_t j = 0; j < map.concepts.size(); ++j) {
    const auto& node = map.concepts[j];
    out << "  concept" << j << " [shape=ellipse, style="
        << (node.exclusive ? "solid" : "filled") << ", label=\"" << escape(node.text)
        << "\"];\n";
    for (ClassIndex y : node.classes) out << "  concept" << j << " -- class" << y << ";\n";
  }
  out << "}\n";
  return out.str();
}

}  // namespace pscbm
