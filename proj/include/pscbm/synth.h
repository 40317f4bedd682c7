#ifndef PSCBM_SYNTH_H_
#define PSCBM_SYNTH_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "pscbm/data_model.h"
#include "pscbm/matrix.h"

namespace pscbm {

// Parameters of a synthetic concept-generative classification task.
struct SynthSpec {
  std::size_t num_classes = 10;
  std::size_t concepts_shared = 6;
  std::size_t exclusive_per_class = 2;
  // Shared concepts drawn per class; 0 means concepts_shared / 2 (min 1).
  std::size_t shared_per_class = 0;
  // Extra texts per ground-truth concept that reuse its embedding.
  std::size_t duplicate_copies = 0;
  std::size_t dim = 32;
  std::size_t n_per_class = 100;
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;

  std::size_t effective_shared_per_class() const;
  void validate() const;
};

// Ground truth shared by every split drawn from one spec.
struct SynthWorld {
  SynthSpec spec;
  Matrix basis;  // one orthonormal row per ground-truth concept
  // Ground-truth concept ids (rows of basis) per class.
  std::vector<std::vector<std::size_t>> class_concepts;
  ConceptBank bank;
  // Ground-truth concept id of each bank entry.
  std::vector<std::size_t> bank_concept;
  EmbeddingMatrix texts;  // row j embeds bank entry j
};

struct SynthSplit {
  EmbeddingMatrix images;
  LabelVector labels;
};

// Structure stream is derive_stream(seed, 0): basis by Gram-Schmidt of
// Gaussian vectors (ground-truth concepts are shared ones first, then
// exclusive ones class by class), then each class draws its shared subset
// by partial Fisher-Yates. Shared concepts no class drew are dropped.
SynthWorld generate_world(const SynthSpec& spec);

// Images of class y: normalize(mean of y's basis rows + sigma * N(0, I)),
// class-major order, drawn from derive_stream(seed, 1 + split).
SynthSplit sample_split(const SynthWorld& world, std::size_t n_per_class,
                        std::uint64_t split);

struct SynthData {
  EmbeddingMatrix images;
  EmbeddingMatrix texts;
  ConceptBank bank;
  LabelVector labels;
};

SynthData generate(const SynthSpec& spec);

// Writes concepts.json, concept_embeddings.emb, {train,test}_images.emb,
// {train,test}_labels.txt and a pipeline config.json into dir.
void write_synth_dataset(const SynthWorld& world, std::size_t n_train_per_class,
                         std::size_t n_test_per_class, const std::filesystem::path& dir);

}  // namespace pscbm

#endif  // PSCBM_SYNTH_H_
