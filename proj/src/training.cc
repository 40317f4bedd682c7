#include "pscbm/training.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "pscbm/error.h"
#include "pscbm/rng.h"

namespace pscbm {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

std::size_t SparseClassifier::nnz() const {
  return static_cast<std::size_t>(std::count_if(weights.data().begin(), weights.data().end(),
                                                [](double w) { return std::abs(w) > 0.0; }));
}

std::string training_log_csv(const TrainingLog& log) {
  std::ostringstream out;
  out.precision(17);
  out << "step,loss\n";
  for (const auto& p : log) out << p.step << ',' << p.loss << '\n';
  return out.str();
}

namespace {

// log(1 + exp(-|z|)) + max(z, 0) - z * s
double bce_with_logit(double z, double s) {
  return std::max(z, 0.0) - z * s + std::log1p(std::exp(-std::abs(z)));
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_dims(const LinearHead& head, const Matrix& inputs, const BinaryMatrix& targets) {
  if (head.input_dim() != inputs.cols() || head.num_outputs() != targets.cols() ||
      head.bias.size() != head.num_outputs() || inputs.rows() != targets.rows()) {
    throw invalid_argument("cbl: inconsistent head / input / target dimensions");
  }
}

}  // namespace

double cbl_loss(const LinearHead& head, const Matrix& inputs, const BinaryMatrix& targets,
                std::span<const std::size_t> rows, LinearHead* grad) {
  check_dims(head, inputs, targets);
  const std::size_t m = head.num_outputs();
  const std::size_t d = head.input_dim();
  if (grad) {
    grad->weights = Matrix(m, d);
    grad->bias.assign(m, 0.0);
  }
  if (rows.empty() || m == 0) return 0.0;
  const double scale = 1.0 / static_cast<double>(rows.size() * m);
  double total = 0.0;
  for (std::size_t i : rows) {
    const auto x = inputs.row(i);
    for (std::size_t j = 0; j < m; ++j) {
      const double z = dot(head.weights.row(j), x) + head.bias[j];
      const double s = targets(i, j);
      total += bce_with_logit(z, s);
      if (grad) {
        const double r = (sigmoid(z) - s) * scale;
        auto gw = grad->weights.row(j);
        for (std::size_t k = 0; k < d; ++k) gw[k] += r * x[k];
        grad->bias[j] += r;
      }
    }
  }
  return total * scale;
}

LinearHead train_cbl(const LabeledDataset& data, const PipelineConfig& cfg,
                     TrainingLog* log) {
  cfg.validate();
  const Matrix& x = data.image_embeddings.values();
  const BinaryMatrix& s = data.concept_labels;
  const std::size_t n = x.rows();
  const std::size_t m = s.cols();
  const std::size_t d = x.cols();
  if (n == 0) throw invalid_argument("train_cbl: empty dataset");

  LinearHead head{Matrix(m, d), std::vector<double>(m, 0.0)};
  if (m == 0) return head;

  const auto& opt = cfg.cbl;
  Matrix m_w(m, d), v_w(m, d);
  std::vector<double> m_b(m, 0.0), v_b(m, 0.0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  SplitMix64 rng(cfg.seed);
  const std::size_t batch = std::min(opt.batch_size, n);
  std::size_t cursor = n;  // forces a shuffle before the first batch

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  if (log) log->push_back({0, cbl_loss(head, x, s, all)});

  double pow1 = 1.0, pow2 = 1.0;
  LinearHead grad;
  for (std::size_t step = 1; step <= opt.max_steps; ++step) {
    if (cursor + batch > n) {
      partial_shuffle(std::span<std::size_t>(order), n, rng);
      cursor = 0;
    }
    std::span<const std::size_t> rows(order.data() + cursor, batch);
    cursor += batch;

    const double loss = cbl_loss(head, x, s, rows, &grad);
    if (!std::isfinite(loss)) {
      throw Error(ErrorCode::kNumeric,
                  "train_cbl: non-finite loss at step " + std::to_string(step));
    }
    pow1 *= opt.beta1;
    pow2 *= opt.beta2;
    const double c1 = 1.0 / (1.0 - pow1);
    const double c2 = 1.0 / (1.0 - pow2);
    const double decay = 1.0 - opt.learning_rate * opt.weight_decay;
    auto adam = [&](double& param, double g, double& mom, double& vel) {
      mom = opt.beta1 * mom + (1.0 - opt.beta1) * g;
      vel = opt.beta2 * vel + (1.0 - opt.beta2) * g * g;
      param -= opt.learning_rate * (mom * c1) / (std::sqrt(vel * c2) + opt.epsilon);
    };
    auto& w = head.weights.data();
    const auto& gw = grad.weights.data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      w[k] *= decay;
      adam(w[k], gw[k], m_w.data()[k], v_w.data()[k]);
    }
    for (std::size_t j = 0; j < m; ++j) adam(head.bias[j], grad.bias[j], m_b[j], v_b[j]);

    if (log && (step % std::max<std::size_t>(opt.log_every, 1) == 0 ||
                step == opt.max_steps)) {
      log->push_back({step, cbl_loss(head, x, s, all)});
    }
  }
  return head;
}

Matrix concept_logits(const LinearHead& head, const EmbeddingMatrix& inputs) {
  if (inputs.cols() != head.input_dim()) {
    throw invalid_argument("concept_logits: embedding dimension " +
                           std::to_string(inputs.cols()) + " != head input " +
                           std::to_string(head.input_dim()));
  }
  Matrix out(inputs.rows(), head.num_outputs());
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    for (std::size_t j = 0; j < head.num_outputs(); ++j) {
      out(i, j) = dot(head.weights.row(j), inputs.row(i)) + head.bias[j];
    }
  }
  return out;
}

NormStats fit_norm_stats(const Matrix& logits) {
  const std::size_t n = logits.rows();
  const std::size_t m = logits.cols();
  if (n == 0) throw invalid_argument("fit_norm_stats: no rows");
  NormStats stats{std::vector<double>(m, 0.0), std::vector<double>(m, 0.0)};
  for (std::size_t j = 0; j < m; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += logits(i, j);
    const double mu = sum / static_cast<double>(n);
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dv = logits(i, j) - mu;
      sq += dv * dv;
    }
    stats.mean[j] = mu;
    stats.stddev[j] = std::max(std::sqrt(sq / static_cast<double>(n)), kMinStddev);
  }
  return stats;
}

NormStats fit_norm_stats(const LinearHead& head, const LabeledDataset& data) {
  return fit_norm_stats(concept_logits(head, data.image_embeddings));
}

Matrix normalize_logits(const Matrix& logits, const NormStats& stats) {
  if (stats.mean.size() != logits.cols() || stats.stddev.size() != logits.cols()) {
    throw invalid_argument("normalize_logits: stats do not match the logit width");
  }
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    for (std::size_t j = 0; j < logits.cols(); ++j) {
      out(i, j) = (logits(i, j) - stats.mean[j]) / stats.stddev[j];
    }
  }
  return out;
}

// ------------------------------------------------------------------ FCL

namespace {

void check_fcl_dims(const SparseClassifier& clf, const Matrix& features,
                    const LabelVector& labels) {
  if (clf.num_concepts() != features.cols() || clf.num_classes() != labels.num_classes() ||
      clf.bias.size() != clf.num_classes() || features.rows() != labels.size()) {
    throw invalid_argument("fcl: inconsistent classifier / feature / label dimensions");
  }
}

// Softmax probabilities minus the one-hot target; returns the sample's CE.
double residual(const SparseClassifier& clf, std::span<const double> x, ClassIndex y,
                std::span<double> out) {
  const std::size_t l = clf.num_classes();
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < l; ++c) {
    out[c] = class_logit(clf, x, c);
    top = std::max(top, out[c]);
  }
  double z = 0.0;
  for (std::size_t c = 0; c < l; ++c) z += std::exp(out[c] - top);
  const double log_z = top + std::log(z);
  const double ce = log_z - out[y];
  for (std::size_t c = 0; c < l; ++c) out[c] = std::exp(out[c] - log_z);
  out[y] -= 1.0;
  return ce;
}

double elastic_penalty(const Matrix& w, double lambda, double alpha) {
  double l2 = 0.0, l1 = 0.0;
  for (double v : w.data()) {
    l2 += v * v;
    l1 += std::abs(v);
  }
  return lambda * ((1.0 - alpha) * l2 + alpha * l1);
}

// The softmax loss does not change when the same value is added to every
// class's weight on a concept, so each column of W can be moved to the
// shift v that minimizes (1 - alpha) sum (w_c - v)^2 + alpha sum |w_c - v|
// without touching the data term. Returns that v; for alpha = 1 the
// minimizers form the median interval and the point nearest 0 is taken.
double penalty_shift(std::vector<double>& u, double alpha) {
  std::sort(u.begin(), u.end());
  const std::size_t l = u.size();
  if (alpha >= 1.0) return std::clamp(0.0, u[(l - 1) / 2], u[l / 2]);
  const double n = static_cast<double>(l);
  const double sum = std::accumulate(u.begin(), u.end(), 0.0);
  const double q = 2.0 * (1.0 - alpha);
  auto f = [&](double v) {
    double acc = 0.0;
    for (double w : u) acc += (1.0 - alpha) * (w - v) * (w - v) + alpha * std::abs(w - v);
    return acc;
  };
  // Stationary point inside the open interval with k values below it.
  double best = 0.0;
  double best_f = f(0.0);
  for (std::size_t k = 0; k <= l; ++k) {
    const double v = (q * sum - alpha * (2.0 * static_cast<double>(k) - n)) / (q * n);
    const double lo = k == 0 ? -std::numeric_limits<double>::infinity() : u[k - 1];
    const double hi = k == l ? std::numeric_limits<double>::infinity() : u[k];
    if (v > lo && v < hi) return v;
  }
  // Otherwise the minimum sits on a breakpoint.
  for (std::size_t k = 0; k < l; ++k) {
    const double fk = f(u[k]);
    if (fk < best_f) {
      best_f = fk;
      best = u[k];
    }
  }
  return best;
}

void recenter_columns(Matrix& w, double alpha, std::vector<double>& scratch) {
  const std::size_t l = w.rows();
  if (l < 2) return;
  scratch.resize(l);
  for (std::size_t j = 0; j < w.cols(); ++j) {
    for (std::size_t c = 0; c < l; ++c) scratch[c] = w(c, j);
    const double v = penalty_shift(scratch, alpha);
    if (v == 0.0) continue;
    for (std::size_t c = 0; c < l; ++c) w(c, j) -= v;
  }
}

}  // namespace

double class_logit(const SparseClassifier& clf, std::span<const double> normalized,
                   std::size_t cls) {
  double v = clf.bias[cls];
  const auto w = clf.weights.row(cls);
  for (std::size_t j = 0; j < normalized.size(); ++j) v += normalized[j] * w[j];
  return v;
}

FclObjective fcl_objective(const SparseClassifier& clf, const Matrix& features,
                           const LabelVector& labels, double lambda, double alpha) {
  check_fcl_dims(clf, features, labels);
  std::vector<double> r(clf.num_classes());
  double ce = 0.0;
  for (std::size_t i = 0; i < features.rows(); ++i) {
    ce += residual(clf, features.row(i), labels[i], r);
  }
  return {ce / static_cast<double>(features.rows()),
          elastic_penalty(clf.weights, lambda, alpha)};
}

void fcl_loss_gradient(const SparseClassifier& clf, const Matrix& features,
                       const LabelVector& labels, Matrix& grad_w,
                       std::vector<double>& grad_b) {
  check_fcl_dims(clf, features, labels);
  const std::size_t l = clf.num_classes();
  const std::size_t m = clf.num_concepts();
  const std::size_t n = features.rows();
  grad_w = Matrix(l, m);
  grad_b.assign(l, 0.0);
  std::vector<double> r(l);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = features.row(i);
    residual(clf, x, labels[i], r);
    for (std::size_t c = 0; c < l; ++c) {
      auto g = grad_w.row(c);
      for (std::size_t j = 0; j < m; ++j) g[j] += r[c] * x[j];
      grad_b[c] += r[c];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (double& g : grad_w.data()) g *= inv_n;
  for (double& g : grad_b) g *= inv_n;
}

double fcl_kkt_residual(const SparseClassifier& clf, const Matrix& features,
                        const LabelVector& labels, double lambda, double alpha) {
  Matrix gw;
  std::vector<double> gb;
  fcl_loss_gradient(clf, features, labels, gw, gb);
  double worst = 0.0;
  const auto& w = clf.weights.data();
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double g = gw.data()[k];
    double v;
    if (w[k] != 0.0) {
      v = std::abs(g + 2.0 * lambda * (1.0 - alpha) * w[k] +
                   lambda * alpha * (w[k] > 0 ? 1.0 : -1.0));
    } else {
      v = std::max(0.0, std::abs(g) - lambda * alpha);
    }
    worst = std::max(worst, v);
  }
  for (double g : gb) worst = std::max(worst, std::abs(g));
  return worst;
}

double fcl_default_step(const Matrix& features) {
  double max_sq = 0.0;
  for (std::size_t i = 0; i < features.rows(); ++i) {
    max_sq = std::max(max_sq, dot(features.row(i), features.row(i)));
  }
  const double lipschitz = 0.5 * (max_sq + 1.0);
  return 1.0 / (3.0 * lipschitz);
}

SparseClassifier train_fcl(const Matrix& features, const LabelVector& labels,
                           const PipelineConfig& cfg, TrainingLog* log) {
  cfg.validate();
  const auto& opt = cfg.fcl;
  const std::size_t n = features.rows();
  const std::size_t m = features.cols();
  const std::size_t l = labels.num_classes();
  if (n == 0) throw invalid_argument("train_fcl: empty dataset");
  if (labels.size() != n) {
    throw invalid_argument("train_fcl: " + std::to_string(n) + " feature rows but " +
                           std::to_string(labels.size()) + " labels");
  }

  SparseClassifier clf{Matrix(l, m), std::vector<double>(l, 0.0)};
  const double step = opt.step_size > 0.0 ? opt.step_size : fcl_default_step(features);
  const double threshold = step * opt.lambda * opt.alpha;
  const double shrink = 1.0 / (1.0 + 2.0 * step * opt.lambda * (1.0 - opt.alpha));

  // Gradient table: residual r_i (length l) per sample, plus its running
  // average expressed as a full gradient.
  Matrix table(n, l);
  Matrix avg_w(l, m);
  std::vector<double> avg_b(l, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    residual(clf, features.row(i), labels[i], table.row(i));
    const auto x = features.row(i);
    for (std::size_t c = 0; c < l; ++c) {
      const double r = table(i, c);
      auto a = avg_w.row(c);
      for (std::size_t j = 0; j < m; ++j) a[j] += r * x[j];
      avg_b[c] += r;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (double& v : avg_w.data()) v *= inv_n;
  for (double& v : avg_b) v *= inv_n;

  auto objective = [&] {
    const double f = fcl_objective(clf, features, labels, opt.lambda, opt.alpha).total();
    if (!std::isfinite(f)) {
      throw Error(ErrorCode::kNumeric, "train_fcl: non-finite objective");
    }
    return f;
  };
  if (log) log->push_back({0, objective()});

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  SplitMix64 rng(cfg.seed);
  const std::size_t batch = std::min(opt.batch_size, n);
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  std::size_t cursor = n;

  Matrix delta_w(l, m);
  std::vector<double> delta_b(l);
  std::vector<double> fresh(l);
  std::vector<double> scratch;
  for (std::size_t it = 1; it <= opt.max_iterations; ++it) {
    if (cursor >= n) {
      partial_shuffle(std::span<std::size_t>(order), n, rng);
      cursor = 0;
    }
    const std::size_t take = std::min(batch, n - cursor);
    std::fill(delta_w.data().begin(), delta_w.data().end(), 0.0);
    std::fill(delta_b.begin(), delta_b.end(), 0.0);
    for (std::size_t t = 0; t < take; ++t) {
      const std::size_t i = order[cursor + t];
      const auto x = features.row(i);
      residual(clf, x, labels[i], fresh);
      auto old = table.row(i);
      for (std::size_t c = 0; c < l; ++c) {
        const double dr = fresh[c] - old[c];
        old[c] = fresh[c];
        if (dr == 0.0) continue;
        auto dw = delta_w.row(c);
        for (std::size_t j = 0; j < m; ++j) dw[j] += dr * x[j];
        delta_b[c] += dr;
      }
    }
    cursor += take;

    // Variance-reduced estimate uses the table average before refresh.
    const double inv_b = 1.0 / static_cast<double>(take);
    auto& w = clf.weights.data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double g = delta_w.data()[k] * inv_b + avg_w.data()[k];
      const double v = w[k] - step * g;
      const double soft = std::abs(v) > threshold ? v - std::copysign(threshold, v) : 0.0;
      w[k] = soft * shrink;
      avg_w.data()[k] += delta_w.data()[k] * inv_n;
    }
    for (std::size_t c = 0; c < l; ++c) {
      clf.bias[c] -= step * (delta_b[c] * inv_b + avg_b[c]);
      avg_b[c] += delta_b[c] * inv_n;
    }
    if (opt.lambda > 0.0) recenter_columns(clf.weights, opt.alpha, scratch);

    const bool epoch_end = it % steps_per_epoch == 0;
    if (epoch_end || it == opt.max_iterations) {
      const double f = objective();
      if (log) log->push_back({it, f});
      if (fcl_kkt_residual(clf, features, labels, opt.lambda, opt.alpha) < opt.tolerance) {
        break;
      }
    }
  }
  return clf;
}

// --------------------------------------------------------------- predict

Matrix normalized_activations(const TrainedModel& model, const EmbeddingMatrix& inputs) {
  return normalize_logits(concept_logits(model.head, inputs), model.stats);
}

LabelVector predict(const LinearHead& head, const NormStats& stats,
                    const SparseClassifier& clf, const EmbeddingMatrix& inputs) {
  const Matrix h = normalize_logits(concept_logits(head, inputs), stats);
  if (clf.num_concepts() != h.cols()) {
    throw invalid_argument("predict: classifier expects " +
                           std::to_string(clf.num_concepts()) + " concepts, head gives " +
                           std::to_string(h.cols()));
  }
  std::vector<ClassIndex> out(inputs.rows());
  for (std::size_t i = 0; i < h.rows(); ++i) {
    std::size_t best = 0;
    double best_v = class_logit(clf, h.row(i), 0);
    for (std::size_t c = 1; c < clf.num_classes(); ++c) {
      const double v = class_logit(clf, h.row(i), c);
      if (v > best_v) {
        best_v = v;
        best = c;
      }
    }
    out[i] = static_cast<ClassIndex>(best);
  }
  return LabelVector(std::move(out), clf.num_classes());
}

LabelVector predict(const TrainedModel& model, const EmbeddingMatrix& inputs) {
  return predict(model.head, model.stats, model.classifier, inputs);
}

// ------------------------------------------------------------- model I/O

std::string encode_doubles(std::span<const double> values) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(values.size() * 16);
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      const auto byte = static_cast<unsigned>((bits >> (8 * b)) & 0xFF);
      out += kDigits[byte >> 4];
      out += kDigits[byte & 0xF];
    }
  }
  return out;
}

std::vector<double> decode_doubles(std::string_view hex) {
  if (hex.size() % 16 != 0) {
    throw Error(ErrorCode::kFormat, "float64 blob length is not a multiple of 16");
  }
  auto nibble = [](char c) -> unsigned {
    if (c >= '0' && c <= '9') return static_cast<unsigned>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<unsigned>(c - 'a' + 10);
    if (c >= 'A' && c <= 'F') return static_cast<unsigned>(c - 'A' + 10);
    throw Error(ErrorCode::kFormat, "invalid hex digit in float64 blob");
  };
  std::vector<double> out(hex.size() / 16);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      const std::size_t p = k * 16 + static_cast<std::size_t>(b) * 2;
      const std::uint64_t byte = (nibble(hex[p]) << 4) | nibble(hex[p + 1]);
      bits |= byte << (8 * b);
    }
    out[k] = std::bit_cast<double>(bits);
    if (!std::isfinite(out[k])) {
      throw Error(ErrorCode::kFormat, "non-finite value in float64 blob");
    }
  }
  return out;
}

namespace {

ojson head_object(const LinearHead& head) {
  ojson o;
  o["rows"] = head.weights.rows();
  o["cols"] = head.weights.cols();
  o["weights"] = encode_doubles(head.weights.data());
  o["bias"] = encode_doubles(head.bias);
  return o;
}

template <typename T>
T get_field(const json& obj, const char* key) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw Error(ErrorCode::kFormat, std::string("model JSON: missing '") + key + "'");
  }
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat,
                std::string("model JSON: bad '") + key + "': " + e.what());
  }
}

std::vector<double> blob(const json& obj, const char* key, std::size_t expected) {
  auto v = decode_doubles(get_field<std::string>(obj, key));
  if (v.size() != expected) {
    throw Error(ErrorCode::kFormat, std::string("model JSON: '") + key + "' holds " +
                                        std::to_string(v.size()) + " values, expected " +
                                        std::to_string(expected));
  }
  return v;
}

LinearHead head_from(const json& o) {
  const auto rows = get_field<std::size_t>(o, "rows");
  const auto cols = get_field<std::size_t>(o, "cols");
  return LinearHead{Matrix(rows, cols, blob(o, "weights", rows * cols)),
                    blob(o, "bias", rows)};
}

json parse_json(std::string_view text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kFormat, std::string(what) + ": " + e.what());
  }
}

}  // namespace

std::string head_json(const LinearHead& head) {
  ojson doc;
  doc["format"] = "pscbm-cbl";
  doc["version"] = 1;
  doc["head"] = head_object(head);
  return doc.dump(2) + "\n";
}

LinearHead parse_head_json(std::string_view text) {
  const json doc = parse_json(text, "CBL head JSON");
  return head_from(get_field<json>(doc, "head"));
}

std::string model_json(const TrainedModel& model, const std::string& config_json) {
  ojson doc;
  doc["format"] = "pscbm-model";
  doc["version"] = 1;
  doc["dims"] = {{"embedding_dim", model.head.input_dim()},
                 {"num_concepts", model.head.num_outputs()},
                 {"num_classes", model.classifier.num_classes()}};
  doc["config"] = config_json.empty() ? ojson::object() : ojson::parse(config_json);
  doc["concepts"] = model.concept_texts;
  doc["cbl"] = head_object(model.head);
  doc["norm"] = {{"mean", encode_doubles(model.stats.mean)},
                 {"stddev", encode_doubles(model.stats.stddev)}};
  doc["fcl"] = {{"rows", model.classifier.weights.rows()},
                {"cols", model.classifier.weights.cols()},
                {"weights", encode_doubles(model.classifier.weights.data())},
                {"bias", encode_doubles(model.classifier.bias)},
                {"nnz", model.classifier.nnz()}};
  return doc.dump(2) + "\n";
}

TrainedModel parse_model_json(std::string_view text) {
  const json doc = parse_json(text, "model JSON");
  TrainedModel model;
  model.head = head_from(get_field<json>(doc, "cbl"));
  const std::size_t m = model.head.num_outputs();
  const json norm = get_field<json>(doc, "norm");
  model.stats = NormStats{blob(norm, "mean", m), blob(norm, "stddev", m)};
  const json fcl = get_field<json>(doc, "fcl");
  const auto l = get_field<std::size_t>(fcl, "rows");
  if (get_field<std::size_t>(fcl, "cols") != m) {
    throw Error(ErrorCode::kFormat, "model JSON: classifier width does not match the CBL");
  }
  model.classifier = SparseClassifier{Matrix(l, m, blob(fcl, "weights", l * m)),
                                      blob(fcl, "bias", l)};
  if (get_field<std::size_t>(fcl, "nnz") != model.classifier.nnz()) {
    throw Error(ErrorCode::kFormat, "model JSON: nnz does not match the weights");
  }
  model.concept_texts = get_field<std::vector<std::string>>(doc, "concepts");
  if (model.concept_texts.size() != m) {
    throw Error(ErrorCode::kFormat, "model JSON: concept list does not match the CBL");
  }
  return model;
}

}  // namespace pscbm
