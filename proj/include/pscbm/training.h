#ifndef PSCBM_TRAINING_H_
#define PSCBM_TRAINING_H_

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pscbm/data_model.h"
#include "pscbm/matrix.h"

namespace pscbm {

// Concept bottleneck layer g(z) = W z + b, W is (concepts x embedding_dim).
struct LinearHead {
  Matrix weights;
  std::vector<double> bias;

  std::size_t num_outputs() const { return weights.rows(); }
  std::size_t input_dim() const { return weights.cols(); }
  bool operator==(const LinearHead&) const = default;
};

// Per-concept logit mean and population standard deviation.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // floored at kMinStddev

  bool operator==(const NormStats&) const = default;
};

inline constexpr double kMinStddev = 1e-8;

// Final layer f(h) = W_F h + b_F, W_F is (classes x concepts).
struct SparseClassifier {
  Matrix weights;
  std::vector<double> bias;

  std::size_t num_classes() const { return weights.rows(); }
  std::size_t num_concepts() const { return weights.cols(); }
  // Entries with |w| > 0.
  std::size_t nnz() const;
  bool operator==(const SparseClassifier&) const = default;
};

struct TrainedModel {
  LinearHead head;
  NormStats stats;
  SparseClassifier classifier;
  std::vector<std::string> concept_texts;

  bool operator==(const TrainedModel&) const = default;
};

struct LossPoint {
  std::size_t step;
  double loss;
};
using TrainingLog = std::vector<LossPoint>;

std::string training_log_csv(const TrainingLog& log);

// ------------------------------------------------------------------ CBL

// Mean over rows x concepts of sigmoid binary cross-entropy for the listed
// rows. If grad is non-null it receives d(loss)/d(W, b).
double cbl_loss(const LinearHead& head, const Matrix& inputs, const BinaryMatrix& targets,
                std::span<const std::size_t> rows, LinearHead* grad = nullptr);

// Minibatch AdamW on the mean BCE: zero init, reshuffles each epoch with
// SplitMix64(seed), decoupled weight decay on W only, exactly
// cfg.cbl.max_steps steps. Throws Error(kNumeric) naming the step if the
// batch loss becomes non-finite.
LinearHead train_cbl(const LabeledDataset& data, const PipelineConfig& cfg,
                     TrainingLog* log = nullptr);

// n x concepts matrix of g(z).
Matrix concept_logits(const LinearHead& head, const EmbeddingMatrix& inputs);

NormStats fit_norm_stats(const Matrix& logits);
NormStats fit_norm_stats(const LinearHead& head, const LabeledDataset& data);

// (logit - mean) / stddev, column-wise.
Matrix normalize_logits(const Matrix& logits, const NormStats& stats);

// ------------------------------------------------------------------ FCL

struct FclObjective {
  double loss = 0.0;     // mean softmax cross-entropy
  double penalty = 0.0;  // lambda * [(1 - alpha) ||W||_2^2 + alpha ||W||_1]
  double total() const { return loss + penalty; }
};

FclObjective fcl_objective(const SparseClassifier& clf, const Matrix& features,
                           const LabelVector& labels, double lambda, double alpha);

// Full-batch gradient of the mean cross-entropy.
void fcl_loss_gradient(const SparseClassifier& clf, const Matrix& features,
                       const LabelVector& labels, Matrix& grad_w,
                       std::vector<double>& grad_b);

// Largest first-order optimality violation over all weights and biases:
//   w != 0: |g + 2 lambda (1 - alpha) w + lambda alpha sign(w)|
//   w == 0: max(0, |g| - lambda alpha)
//   bias:   |g_b|
double fcl_kkt_residual(const SparseClassifier& clf, const Matrix& features,
                        const LabelVector& labels, double lambda, double alpha);

// Step size 1 / (3 L) with L = (max_i ||x_i||^2 + 1) / 2, the per-sample
// smoothness bound of softmax cross-entropy including the bias column.
double fcl_default_step(const Matrix& features);

// Proximal SAGA (stored per-sample residual table, minibatches from a
// reshuffled order) on mean cross-entropy + lambda R_alpha(W). The prox of
// the elastic net is soft-threshold by step * lambda * alpha followed by
// scaling with 1 / (1 + 2 step lambda (1 - alpha)); the bias is not
// penalized. After each prox step every weight column is shifted by the
// common offset that minimizes its penalty, which leaves the softmax loss
// unchanged (rows of W_F are only identified up to such a shift). Stops after fcl.max_iterations minibatch steps or once the
// KKT residual (checked every epoch) drops below fcl.tolerance.
SparseClassifier train_fcl(const Matrix& features, const LabelVector& labels,
                           const PipelineConfig& cfg, TrainingLog* log = nullptr);

// --------------------------------------------------------------- predict

// b_F[c] + sum_j h[j] * W_F[c][j], summed in concept order.
double class_logit(const SparseClassifier& clf, std::span<const double> normalized,
                   std::size_t cls);

// argmax_c of f(normalize(g(z))), lowest class on ties.
LabelVector predict(const LinearHead& head, const NormStats& stats,
                    const SparseClassifier& clf, const EmbeddingMatrix& inputs);
LabelVector predict(const TrainedModel& model, const EmbeddingMatrix& inputs);

// Normalized concept activations for every row.
Matrix normalized_activations(const TrainedModel& model, const EmbeddingMatrix& inputs);

// ------------------------------------------------------------- model I/O

// Row-major float64 blobs are stored as lowercase hex of their
// little-endian bytes.
std::string encode_doubles(std::span<const double> values);
std::vector<double> decode_doubles(std::string_view hex);

std::string head_json(const LinearHead& head);
LinearHead parse_head_json(std::string_view text);

// config_json is embedded verbatim as the "config" member.
std::string model_json(const TrainedModel& model, const std::string& config_json);
TrainedModel parse_model_json(std::string_view text);

}  // namespace pscbm

#endif  // PSCBM_TRAINING_H_
