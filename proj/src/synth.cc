#include "pscbm/synth.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "pscbm/error.h"
#include "pscbm/rng.h"

namespace pscbm {

std::size_t SynthSpec::effective_shared_per_class() const {
  if (shared_per_class > 0) return shared_per_class;
  return concepts_shared == 0 ? 0 : std::max<std::size_t>(1, concepts_shared / 2);
}

void SynthSpec::validate() const {
  const std::size_t total = concepts_shared + num_classes * exclusive_per_class;
  if (num_classes < 2) throw invalid_argument("synth: need at least 2 classes");
  if (total == 0) throw invalid_argument("synth: no ground-truth concepts");
  if (dim < total) {
    throw invalid_argument("synth: dim " + std::to_string(dim) + " is smaller than the " +
                           std::to_string(total) + " ground-truth concepts");
  }
  if (n_per_class < 1) throw invalid_argument("synth: n_per_class must be >= 1");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw invalid_argument("synth: noise_sigma must be finite and >= 0");
  }
  if (effective_shared_per_class() > concepts_shared) {
    throw invalid_argument("synth: shared_per_class exceeds concepts_shared");
  }
  if (exclusive_per_class == 0 && effective_shared_per_class() == 0) {
    throw invalid_argument("synth: classes would have no concepts");
  }
}

namespace {

Matrix orthonormal_rows(std::size_t count, std::size_t dim, SplitMix64& rng) {
  Matrix basis(count, dim);
  for (std::size_t r = 0; r < count; ++r) {
    auto row = basis.row(r);
    for (;;) {
      for (double& v : row) v = rng.normal();
      // Two passes of modified Gram-Schmidt.
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t q = 0; q < r; ++q) {
          const auto prev = basis.row(q);
          const double proj = dot(row, prev);
          for (std::size_t k = 0; k < dim; ++k) row[k] -= proj * prev[k];
        }
      }
      const double norm = std::sqrt(dot(row, row));
      if (norm > 1e-6) {
        for (double& v : row) v /= norm;
        break;
      }
    }
  }
  return basis;
}

}  // namespace

SynthWorld generate_world(const SynthSpec& spec) {
  spec.validate();
  SplitMix64 rng = derive_stream(spec.seed, 0);
  const std::size_t l = spec.num_classes;
  const std::size_t total = spec.concepts_shared + l * spec.exclusive_per_class;
  Matrix basis = orthonormal_rows(total, spec.dim, rng);

  std::vector<std::vector<std::size_t>> class_concepts(l);
  std::vector<std::vector<ClassIndex>> owners(total);
  const std::size_t per_class = spec.effective_shared_per_class();
  for (std::size_t y = 0; y < l; ++y) {
    std::vector<std::size_t> pool(spec.concepts_shared);
    std::iota(pool.begin(), pool.end(), 0);
    partial_shuffle(std::span<std::size_t>(pool), per_class, rng);
    pool.resize(per_class);
    std::sort(pool.begin(), pool.end());
    for (std::size_t g : pool) {
      class_concepts[y].push_back(g);
      owners[g].push_back(static_cast<ClassIndex>(y));
    }
    for (std::size_t e = 0; e < spec.exclusive_per_class; ++e) {
      const std::size_t g = spec.concepts_shared + y * spec.exclusive_per_class + e;
      class_concepts[y].push_back(g);
      owners[g].push_back(static_cast<ClassIndex>(y));
    }
  }

  std::vector<ConceptEntry> entries;
  std::vector<std::size_t> bank_concept;
  auto add = [&](std::size_t g, const std::string& text) {
    for (std::size_t v = 0; v <= spec.duplicate_copies; ++v) {
      std::string t = v == 0 ? text : text + " (variant " + std::to_string(v) + ")";
      entries.push_back(ConceptEntry{std::move(t), owners[g], entries.size(), {}});
      bank_concept.push_back(g);
    }
  };
  for (std::size_t g = 0; g < spec.concepts_shared; ++g) {
    if (!owners[g].empty()) add(g, "shared concept " + std::to_string(g));
  }
  for (std::size_t y = 0; y < l; ++y) {
    for (std::size_t e = 0; e < spec.exclusive_per_class; ++e) {
      add(spec.concepts_shared + y * spec.exclusive_per_class + e,
          "class " + std::to_string(y) + " exclusive concept " + std::to_string(e));
    }
  }
  Matrix texts(entries.size(), spec.dim);
  for (std::size_t j = 0; j < entries.size(); ++j) {
    std::copy_n(basis.row(bank_concept[j]).begin(), spec.dim, texts.row(j).begin());
  }
  return SynthWorld{spec,
                    std::move(basis),
                    std::move(class_concepts),
                    ConceptBank(l, std::move(entries)),
                    std::move(bank_concept),
                    normalize_rows(EmbeddingMatrix(std::move(texts)))};
}

SynthSplit sample_split(const SynthWorld& world, std::size_t n_per_class,
                        std::uint64_t split) {
  if (n_per_class < 1) throw invalid_argument("synth: n_per_class must be >= 1");
  const auto& spec = world.spec;
  SplitMix64 rng = derive_stream(spec.seed, 1 + split);
  const std::size_t l = spec.num_classes;
  Matrix images(l * n_per_class, spec.dim);
  std::vector<ClassIndex> labels;
  labels.reserve(l * n_per_class);
  for (std::size_t y = 0; y < l; ++y) {
    const auto& concepts = world.class_concepts[y];
    const double inv = 1.0 / static_cast<double>(concepts.size());
    for (std::size_t s = 0; s < n_per_class; ++s) {
      auto row = images.row(labels.size());
      for (std::size_t g : concepts) {
        const auto b = world.basis.row(g);
        for (std::size_t k = 0; k < spec.dim; ++k) row[k] += b[k] * inv;
      }
      for (double& v : row) v += spec.noise_sigma * rng.normal();
      labels.push_back(static_cast<ClassIndex>(y));
    }
  }
  return SynthSplit{normalize_rows(EmbeddingMatrix(std::move(images))),
                    LabelVector(std::move(labels), l)};
}

SynthData generate(const SynthSpec& spec) {
  SynthWorld world = generate_world(spec);
  SynthSplit split = sample_split(world, spec.n_per_class, 0);
  return SynthData{std::move(split.images), world.texts, world.bank, std::move(split.labels)};
}

void write_synth_dataset(const SynthWorld& world, std::size_t n_train_per_class,
                         std::size_t n_test_per_class, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const SynthSplit train = sample_split(world, n_train_per_class, 0);
  const SynthSplit test = sample_split(world, n_test_per_class, 1);
  save_concepts(world.bank, dir / "concepts.json");
  save_embeddings(world.texts, dir / "concept_embeddings.emb");
  save_embeddings(train.images, dir / "train_images.emb");
  save_labels(train.labels, dir / "train_labels.txt");
  save_embeddings(test.images, dir / "test_images.emb");
  save_labels(test.labels, dir / "test_labels.txt");

  nlohmann::ordered_json cfg;
  cfg["inputs"] = {{"concepts", "concepts.json"},
                   {"concept_embeddings", "concept_embeddings.emb"},
                   {"train_images", "train_images.emb"},
                   {"train_labels", "train_labels.txt"},
                   {"test_images", "test_images.emb"},
                   {"test_labels", "test_labels.txt"}};
  cfg["seed"] = world.spec.seed;
  write_file_text(dir / "config.json", cfg.dump(2) + "\n");
}

}  // namespace pscbm
