#include "pscbm/pipeline.h"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <sstream>

#include "json.hpp"
#include "pscbm/affinity.h"
#include "pscbm/explain.h"
#include "pscbm/pscs.h"
#include "pscbm/rng.h"
#include "pscbm/training.h"

namespace pscbm {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

constexpr const char* kLoadedBank = "concepts_loaded.json";
constexpr const char* kFilteredBank = "concepts_filtered.json";
constexpr const char* kMergedBank = "concepts_merged.json";
constexpr const char* kFinalBank = "concepts_final.json";
constexpr const char* kMergeReport = "merge_report.json";
constexpr const char* kConceptLabels = "concept_labels.csv";
constexpr const char* kCblHead = "cbl_head.json";
constexpr const char* kCblLog = "cbl_log.csv";
constexpr const char* kModel = "model.json";
constexpr const char* kFclLog = "fcl_log.csv";
constexpr const char* kEval = "eval.json";
constexpr const char* kEvalTable = "eval_table.csv";
constexpr const char* kPredictions = "predictions.txt";
constexpr const char* kExplanations = "explanations.json";
constexpr const char* kExplanationsText = "explanations.txt";
constexpr const char* kConceptMap = "concept_map.json";
constexpr const char* kConceptMapDot = "concept_map.dot";
constexpr const char* kAffinityCsv = "affinity.csv";
constexpr const char* kManifest = "manifest.json";

Error config_error(const std::string& what) {
  return Error(ErrorCode::kInvalidArgument, "config: " + what);
}

template <typename T>
void read_field(const json& obj, const char* key, T& out, const std::string& scope) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw config_error("bad value for '" + scope + key + "': " + e.what());
  }
}

void reject_unknown(const json& obj, std::initializer_list<const char*> known,
                    const std::string& scope) {
  if (!obj.is_object()) throw config_error("'" + scope + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::none_of(known.begin(), known.end(),
                     [&](const char* k) { return key == k; })) {
      throw config_error("unknown key '" + scope + key + "'");
    }
  }
}

}  // namespace

// ---------------------------------------------------------------- config

fs::path RunConfig::resolve(const std::string& p) const {
  const fs::path path(p);
  return path.is_absolute() ? path : base_dir / path;
}

void RunConfig::validate() const {
  params.validate();
  auto need = [](const std::string& v, const char* name) {
    if (v.empty()) throw config_error(std::string("inputs.") + name + " is required");
  };
  need(inputs.concepts, "concepts");
  need(inputs.concept_embeddings, "concept_embeddings");
  need(inputs.train_images, "train_images");
  need(inputs.train_labels, "train_labels");
  need(inputs.test_images, "test_images");
  need(inputs.test_labels, "test_labels");
  if (explain_top_k < 1) throw config_error("explain.top_k must be >= 1");
  if (threads < 1) throw config_error("threads must be >= 1");
}

RunConfig parse_run_config(std::string_view json_text, const fs::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw config_error(e.what());
  }
  reject_unknown(doc,
                 {"inputs", "tau_conf", "tau_merge", "k_exclusive", "beta", "seed",
                  "strategy", "cbl", "fcl", "explain", "threads", "out_dir",
                  "dump_affinity", "record_timing"},
                 "");
  RunConfig cfg;
  cfg.base_dir = base_dir;
  auto& p = cfg.params;
  read_field(doc, "tau_conf", p.tau_conf, "");
  read_field(doc, "tau_merge", p.tau_merge, "");
  read_field(doc, "k_exclusive", p.k_exclusive, "");
  read_field(doc, "beta", p.beta, "");
  read_field(doc, "seed", p.seed, "");
  if (doc.contains("strategy")) {
    std::string name;
    read_field(doc, "strategy", name, "");
    p.strategy = parse_strategy(name);
  }
  if (doc.contains("cbl")) {
    const json& c = doc["cbl"];
    reject_unknown(c,
                   {"batch_size", "max_steps", "learning_rate", "weight_decay", "beta1",
                    "beta2", "epsilon", "log_every"},
                   "cbl.");
    read_field(c, "batch_size", p.cbl.batch_size, "cbl.");
    read_field(c, "max_steps", p.cbl.max_steps, "cbl.");
    read_field(c, "learning_rate", p.cbl.learning_rate, "cbl.");
    read_field(c, "weight_decay", p.cbl.weight_decay, "cbl.");
    read_field(c, "beta1", p.cbl.beta1, "cbl.");
    read_field(c, "beta2", p.cbl.beta2, "cbl.");
    read_field(c, "epsilon", p.cbl.epsilon, "cbl.");
    read_field(c, "log_every", p.cbl.log_every, "cbl.");
  }
  if (doc.contains("fcl")) {
    const json& f = doc["fcl"];
    reject_unknown(f,
                   {"batch_size", "max_iterations", "lambda", "alpha", "step_size",
                    "tolerance"},
                   "fcl.");
    read_field(f, "batch_size", p.fcl.batch_size, "fcl.");
    read_field(f, "max_iterations", p.fcl.max_iterations, "fcl.");
    read_field(f, "lambda", p.fcl.lambda, "fcl.");
    read_field(f, "alpha", p.fcl.alpha, "fcl.");
    read_field(f, "step_size", p.fcl.step_size, "fcl.");
    read_field(f, "tolerance", p.fcl.tolerance, "fcl.");
  }
  if (doc.contains("explain")) {
    const json& e = doc["explain"];
    reject_unknown(e, {"top_k", "samples"}, "explain.");
    read_field(e, "top_k", cfg.explain_top_k, "explain.");
    read_field(e, "samples", cfg.explain_samples, "explain.");
  }
  if (doc.contains("inputs")) {
    const json& in = doc["inputs"];
    reject_unknown(in,
                   {"concepts", "concept_embeddings", "train_images", "train_labels",
                    "test_images", "test_labels", "train_features", "test_features",
                    "merge_subset"},
                   "inputs.");
    auto& i = cfg.inputs;
    read_field(in, "concepts", i.concepts, "inputs.");
    read_field(in, "concept_embeddings", i.concept_embeddings, "inputs.");
    read_field(in, "train_images", i.train_images, "inputs.");
    read_field(in, "train_labels", i.train_labels, "inputs.");
    read_field(in, "test_images", i.test_images, "inputs.");
    read_field(in, "test_labels", i.test_labels, "inputs.");
    read_field(in, "train_features", i.train_features, "inputs.");
    read_field(in, "test_features", i.test_features, "inputs.");
    read_field(in, "merge_subset", i.merge_subset, "inputs.");
  }
  read_field(doc, "threads", cfg.threads, "");
  std::string out_dir;
  read_field(doc, "out_dir", out_dir, "");
  if (!out_dir.empty()) cfg.out_dir = cfg.resolve(out_dir);
  read_field(doc, "dump_affinity", cfg.dump_affinity, "");
  read_field(doc, "record_timing", cfg.record_timing, "");
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  return parse_run_config(read_file_text(path), path.parent_path());
}

namespace {

ojson params_object(const PipelineConfig& p) {
  ojson o;
  o["tau_conf"] = p.tau_conf;
  o["tau_merge"] = p.tau_merge;
  o["k_exclusive"] = p.k_exclusive;
  o["beta"] = p.beta;
  o["seed"] = p.seed;
  o["strategy"] = to_string(p.strategy);
  o["cbl"] = {{"batch_size", p.cbl.batch_size},     {"max_steps", p.cbl.max_steps},
              {"learning_rate", p.cbl.learning_rate}, {"weight_decay", p.cbl.weight_decay},
              {"beta1", p.cbl.beta1},               {"beta2", p.cbl.beta2},
              {"epsilon", p.cbl.epsilon},           {"log_every", p.cbl.log_every}};
  o["fcl"] = {{"batch_size", p.fcl.batch_size}, {"max_iterations", p.fcl.max_iterations},
              {"lambda", p.fcl.lambda},         {"alpha", p.fcl.alpha},
              {"step_size", p.fcl.step_size},   {"tolerance", p.fcl.tolerance}};
  return o;
}

}  // namespace

std::string params_json(const PipelineConfig& params) { return params_object(params).dump(); }

std::string run_config_json(const RunConfig& cfg) {
  ojson o = params_object(cfg.params);
  const auto& i = cfg.inputs;
  ojson inputs;
  inputs["concepts"] = i.concepts;
  inputs["concept_embeddings"] = i.concept_embeddings;
  inputs["train_images"] = i.train_images;
  inputs["train_labels"] = i.train_labels;
  inputs["test_images"] = i.test_images;
  inputs["test_labels"] = i.test_labels;
  if (!i.train_features.empty()) inputs["train_features"] = i.train_features;
  if (!i.test_features.empty()) inputs["test_features"] = i.test_features;
  if (!i.merge_subset.empty()) inputs["merge_subset"] = i.merge_subset;
  o["inputs"] = std::move(inputs);
  o["explain"] = {{"top_k", cfg.explain_top_k}, {"samples", cfg.explain_samples}};
  o["dump_affinity"] = cfg.dump_affinity;
  o["record_timing"] = cfg.record_timing;
  return o.dump(2) + "\n";
}

// ---------------------------------------------------------------- stages

namespace {

struct TrainInputs {
  ConceptBank bank;
  EmbeddingMatrix texts;
  EmbeddingMatrix images;
  LabelVector labels;
};

TrainInputs load_train_inputs(const RunConfig& cfg) {
  ConceptBank bank = load_concepts(cfg.resolve(cfg.inputs.concepts));
  EmbeddingMatrix texts =
      normalize_rows(load_embeddings(cfg.resolve(cfg.inputs.concept_embeddings)));
  EmbeddingMatrix images = normalize_rows(load_embeddings(cfg.resolve(cfg.inputs.train_images)));
  LabelVector labels = load_labels(cfg.resolve(cfg.inputs.train_labels), bank.num_classes());
  if (images.rows() != labels.size()) {
    throw Error(ErrorCode::kFormat, "train_images has " + std::to_string(images.rows()) +
                                        " rows but train_labels has " +
                                        std::to_string(labels.size()));
  }
  return {std::move(bank), std::move(texts), std::move(images), std::move(labels)};
}

EmbeddingMatrix load_features(const RunConfig& cfg, bool train) {
  const std::string& features = train ? cfg.inputs.train_features : cfg.inputs.test_features;
  const std::string& images = train ? cfg.inputs.train_images : cfg.inputs.test_images;
  return load_embeddings(cfg.resolve(features.empty() ? images : features));
}

std::size_t final_num_classes(const RunConfig& cfg) {
  return load_concepts(cfg.out_dir / kFinalBank).num_classes();
}

void ensure_out_dir(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) {
    throw Error(ErrorCode::kIo,
                "cannot create output directory " + cfg.out_dir.string() + ": " + ec.message());
  }
}

template <typename F>
auto run_stage(const char* name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e);
  } catch (const fs::filesystem_error& e) {
    throw StageError(name, Error(ErrorCode::kIo, e.what()));
  } catch (const std::exception& e) {
    throw StageError(name, Error(ErrorCode::kRuntime, e.what()));
  }
}

}  // namespace

void stage_affinity(const RunConfig& cfg) {
  run_stage("affinity", [&] {
    cfg.validate();
    ensure_out_dir(cfg);
    const TrainInputs in = load_train_inputs(cfg);
    const AffinityMatrix a = bank_affinity(in.images, in.texts, in.bank, cfg.threads);
    write_file_text(cfg.out_dir / kAffinityCsv, affinity_csv(a, in.bank));
  });
}

void stage_pscs(const RunConfig& cfg) {
  run_stage("pscs", [&] {
    cfg.validate();
    ensure_out_dir(cfg);
    const auto& p = cfg.params;
    const TrainInputs in = load_train_inputs(cfg);
    save_concepts(in.bank, cfg.out_dir / kLoadedBank);

    const AffinityMatrix a = bank_affinity(in.images, in.texts, in.bank, cfg.threads);
    const ConceptBank filtered =
        filter_concepts(in.bank, class_scores(a, in.bank, in.labels), p.tau_conf);
    if (filtered.empty()) {
      throw Error(ErrorCode::kRuntime, "no concept passed filtering at tau_conf = " +
                                           std::to_string(p.tau_conf));
    }
    save_concepts(filtered, cfg.out_dir / kFilteredBank);

    ConceptBank merged;
    ConceptBank final_bank;
    MergeReport report;
    if (p.strategy == StrategyMode::kIndependent) {
      merged = filtered;
      for (std::size_t j = 0; j < filtered.size(); ++j) report.kept.push_back(j);
      final_bank = split_by_class(filtered);
    } else {
      EmbeddingMatrix merge_images = in.images;
      if (!cfg.inputs.merge_subset.empty()) {
        const auto rows = load_indices(cfg.resolve(cfg.inputs.merge_subset));
        for (std::size_t r : rows) {
          if (r >= in.images.rows()) {
            throw Error(ErrorCode::kFormat, "merge_subset index " + std::to_string(r) +
                                                " out of range");
          }
        }
        merge_images = in.images.select_rows(rows);
      }
      const Matrix q =
          concept_correlation(bank_affinity(merge_images, in.texts, filtered, cfg.threads),
                              cfg.threads);
      MergeResult result = merge_concepts(filtered, q, p.tau_merge);
      merged = std::move(result.bank);
      report = std::move(result.report);
      const AffinityMatrix merged_a = bank_affinity(in.images, in.texts, merged, cfg.threads);
      final_bank = prune_exclusive(merged, class_scores(merged_a, merged, in.labels),
                                   p.k_exclusive);
    }
    if (final_bank.empty()) {
      throw Error(ErrorCode::kRuntime, "no concept left after merging and pruning");
    }
    save_concepts(merged, cfg.out_dir / kMergedBank);
    write_file_text(cfg.out_dir / kMergeReport, merge_report_json(report, filtered));
    save_concepts(final_bank, cfg.out_dir / kFinalBank);

    const AffinityMatrix final_a = bank_affinity(in.images, in.texts, final_bank, cfg.threads);
    save_concept_labels(label_concepts(in.labels, final_bank, final_a, p.tau_conf, p.strategy),
                        cfg.out_dir / kConceptLabels);
  });
}

void stage_train_cbl(const RunConfig& cfg) {
  run_stage("train-cbl", [&] {
    cfg.validate();
    ensure_out_dir(cfg);
    const std::size_t l = final_num_classes(cfg);
    EmbeddingMatrix features = load_features(cfg, true);
    LabelVector labels = load_labels(cfg.resolve(cfg.inputs.train_labels), l);
    BinaryMatrix s = load_concept_labels(cfg.out_dir / kConceptLabels);
    const LabeledDataset data(std::move(features), std::move(s), std::move(labels));
    TrainingLog log;
    const LinearHead head = train_cbl(data, cfg.params, &log);
    write_file_text(cfg.out_dir / kCblHead, head_json(head));
    write_file_text(cfg.out_dir / kCblLog, training_log_csv(log));
  });
}

void stage_train_fcl(const RunConfig& cfg) {
  run_stage("train-fcl", [&] {
    cfg.validate();
    ensure_out_dir(cfg);
    const ConceptBank bank = load_concepts(cfg.out_dir / kFinalBank);
    const LinearHead head = parse_head_json(read_file_text(cfg.out_dir / kCblHead));
    if (head.num_outputs() != bank.size()) {
      throw Error(ErrorCode::kFormat, "CBL head has " + std::to_string(head.num_outputs()) +
                                          " outputs but the final bank has " +
                                          std::to_string(bank.size()) + " concepts");
    }
    const EmbeddingMatrix features = load_features(cfg, true);
    const LabelVector labels = load_labels(cfg.resolve(cfg.inputs.train_labels),
                                           bank.num_classes());
    const Matrix logits = concept_logits(head, features);
    TrainedModel model;
    model.head = head;
    model.stats = fit_norm_stats(logits);
    TrainingLog log;
    model.classifier = train_fcl(normalize_logits(logits, model.stats), labels, cfg.params, &log);
    for (const auto& c : bank.concepts()) model.concept_texts.push_back(c.text);
    write_file_text(cfg.out_dir / kModel, model_json(model, params_json(cfg.params)));
    write_file_text(cfg.out_dir / kFclLog, training_log_csv(log));
  });
}

EvalReport stage_eval(const RunConfig& cfg) {
  return run_stage("eval", [&] {
    cfg.validate();
    ensure_out_dir(cfg);
    const ConceptBank bank = load_concepts(cfg.out_dir / kFinalBank);
    const TrainedModel model = parse_model_json(read_file_text(cfg.out_dir / kModel));
    const EmbeddingMatrix features = load_features(cfg, false);
    const LabelVector truth = load_labels(cfg.resolve(cfg.inputs.test_labels),
                                          bank.num_classes());
    if (features.rows() != truth.size()) {
      throw Error(ErrorCode::kFormat, "test features and test labels disagree on row count");
    }
    const LabelVector pred = predict(model, features);
    const EmbeddingMatrix texts =
        normalize_rows(load_embeddings(cfg.resolve(cfg.inputs.concept_embeddings)));
    const EmbeddingMatrix images =
        normalize_rows(load_embeddings(cfg.resolve(cfg.inputs.test_images)));
    if (images.rows() != truth.size()) {
      throw Error(ErrorCode::kFormat, "test images and test labels disagree on row count");
    }
    const double alignment =
        alignment_score(bank_affinity(images, texts, bank, cfg.threads), bank, truth);
    const EvalReport report = make_report(accuracy(pred, truth), bank.size(),
                                          bank.num_classes(), cfg.params.beta, alignment);
    write_file_text(cfg.out_dir / kEval, eval_report_json(report));
    write_file_text(cfg.out_dir / kEvalTable,
                    eval_table_csv({{std::string(to_string(cfg.params.strategy)), report}}));
    save_labels(pred, cfg.out_dir / kPredictions);
    return report;
  });
}

void stage_explain(const RunConfig& cfg) {
  run_stage("explain", [&] {
    cfg.validate();
    ensure_out_dir(cfg);
    const TrainedModel model = parse_model_json(read_file_text(cfg.out_dir / kModel));
    const EmbeddingMatrix features = load_features(cfg, false);
    std::vector<Explanation> out;
    std::string text;
    const std::size_t count = std::min(cfg.explain_samples, features.rows());
    for (std::size_t i = 0; i < count; ++i) {
      out.push_back(explain_prediction(model, features.row(i), cfg.explain_top_k));
      text += "sample " + std::to_string(i) + ": " + render_explanation(out.back());
    }
    write_file_text(cfg.out_dir / kExplanations, explanations_json(out));
    write_file_text(cfg.out_dir / kExplanationsText, text);
  });
}

void stage_concept_map(const RunConfig& cfg) {
  run_stage("concept-map", [&] {
    ensure_out_dir(cfg);
    const ConceptClassMap map = export_concept_map(load_concepts(cfg.out_dir / kFinalBank));
    write_file_text(cfg.out_dir / kConceptMap, concept_map_json(map));
    write_file_text(cfg.out_dir / kConceptMapDot, concept_map_dot(map));
  });
}

PipelineResult run_pipeline(const RunConfig& cfg) {
  run_stage("config", [&] { cfg.validate(); });
  using clock = std::chrono::steady_clock;
  std::vector<std::pair<std::string, double>> timing;
  auto timed = [&](const char* name, auto&& fn) {
    const auto start = clock::now();
    fn();
    timing.emplace_back(name, std::chrono::duration<double>(clock::now() - start).count());
  };

  PipelineResult result;
  if (cfg.dump_affinity) timed("affinity", [&] { stage_affinity(cfg); });
  timed("pscs", [&] { stage_pscs(cfg); });
  timed("train-cbl", [&] { stage_train_cbl(cfg); });
  timed("train-fcl", [&] { stage_train_fcl(cfg); });
  timed("eval", [&] { result.report = stage_eval(cfg); });
  timed("explain", [&] { stage_explain(cfg); });
  timed("concept-map", [&] { stage_concept_map(cfg); });

  run_stage("manifest", [&] {
    result.concepts_loaded = load_concepts(cfg.out_dir / kLoadedBank).size();
    result.concepts_filtered = load_concepts(cfg.out_dir / kFilteredBank).size();
    result.concepts_merged = load_concepts(cfg.out_dir / kMergedBank).size();
    result.concepts_final = load_concepts(cfg.out_dir / kFinalBank).size();

    ojson manifest;
    manifest["tool"] = kToolVersion;
    manifest["config"] = ojson::parse(run_config_json(cfg));
    ojson inputs;
    auto hash_input = [&](const char* name, const std::string& p) {
      if (!p.empty()) inputs[name] = sha256_file(cfg.resolve(p));
    };
    const auto& i = cfg.inputs;
    hash_input("concepts", i.concepts);
    hash_input("concept_embeddings", i.concept_embeddings);
    hash_input("train_images", i.train_images);
    hash_input("train_labels", i.train_labels);
    hash_input("test_images", i.test_images);
    hash_input("test_labels", i.test_labels);
    hash_input("train_features", i.train_features);
    hash_input("test_features", i.test_features);
    hash_input("merge_subset", i.merge_subset);
    manifest["inputs"] = std::move(inputs);

    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(cfg.out_dir)) {
      const std::string name = entry.path().filename().string();
      if (entry.is_regular_file() && name != kManifest) names.push_back(name);
    }
    std::sort(names.begin(), names.end());
    ojson outputs = ojson::array();
    for (const auto& name : names) {
      outputs.push_back({{"file", name}, {"sha256", sha256_file(cfg.out_dir / name)}});
    }
    manifest["outputs"] = std::move(outputs);
    manifest["concept_counts"] = {{"loaded", result.concepts_loaded},
                                  {"filtered", result.concepts_filtered},
                                  {"merged", result.concepts_merged},
                                  {"final", result.concepts_final}};
    if (cfg.record_timing) {
      ojson t;
      for (const auto& [name, seconds] : timing) t[name] = seconds;
      manifest["timing_seconds"] = std::move(t);
    }
    write_file_text(cfg.out_dir / kManifest, manifest.dump(2) + "\n");
  });
  return result;
}

// ----------------------------------------------------------------- sweep

SweepParameter parse_sweep_parameter(std::string_view name) {
  if (name == "k_exclusive") return SweepParameter::kKExclusive;
  if (name == "tau_conf") return SweepParameter::kTauConf;
  if (name == "tau_merge") return SweepParameter::kTauMerge;
  throw invalid_argument("unknown sweep parameter '" + std::string(name) +
                         "' (expected k_exclusive, tau_conf or tau_merge)");
}

std::string_view to_string(SweepParameter p) {
  switch (p) {
    case SweepParameter::kKExclusive:
      return "k_exclusive";
    case SweepParameter::kTauConf:
      return "tau_conf";
    case SweepParameter::kTauMerge:
      return "tau_merge";
  }
  return "unknown";
}

namespace {

void apply_sweep_value(PipelineConfig& p, SweepParameter param, const std::string& value) {
  std::size_t used = 0;
  try {
    if (param == SweepParameter::kKExclusive) {
      if (!value.empty() && value.front() == '-') throw std::invalid_argument("negative");
      p.k_exclusive = std::stoul(value, &used);
    } else {
      const double v = std::stod(value, &used);
      (param == SweepParameter::kTauConf ? p.tau_conf : p.tau_merge) = v;
    }
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) {
    throw invalid_argument("bad sweep value '" + value + "' for " +
                           std::string(to_string(param)));
  }
}

}  // namespace

std::vector<SweepRow> run_sweep(const RunConfig& cfg, SweepParameter param,
                                const std::vector<std::string>& values) {
  if (values.empty()) throw invalid_argument("sweep: no values given");
  std::vector<RunConfig> runs;
  for (const auto& v : values) {
    RunConfig run = cfg;
    apply_sweep_value(run.params, param, v);
    run.out_dir = cfg.out_dir / "sweep" / (std::string(to_string(param)) + "=" + v);
    run_stage("config", [&] { run.validate(); });
    runs.push_back(std::move(run));
  }
  std::vector<SweepRow> rows;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    rows.push_back({values[k], run_pipeline(runs[k]).report});
  }
  run_stage("sweep", [&] {
    ensure_out_dir(cfg);
    write_file_text(cfg.out_dir / ("sweep_" + std::string(to_string(param)) + ".csv"),
                    sweep_csv(param, rows));
  });
  return rows;
}

std::string sweep_csv(SweepParameter param, const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << to_string(param) << ",acc,num_concepts,cea\n";
  for (const auto& r : rows) {
    out << r.value << ',' << r.report.acc << ',' << r.report.num_concepts << ','
        << r.report.cea << '\n';
  }
  return out.str();
}

// ------------------------------------------------------------- subsample

std::vector<std::size_t> subsample_indices(std::size_t n, double fraction,
                                           std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw invalid_argument("subsample: fraction must be in (0, 1], got " +
                           std::to_string(fraction));
  }
  if (n == 0) throw invalid_argument("subsample: no rows to sample from");
  const auto count = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))), 1, n);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  SplitMix64 rng(seed);
  partial_shuffle(std::span<std::size_t>(idx), count, rng);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<std::size_t> load_indices(const fs::path& path) {
  std::istringstream in(read_file_text(path));
  std::vector<std::size_t> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(line, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != line.size() || line.front() == '-') {
      throw Error(ErrorCode::kFormat, path.string() + ": bad index '" + line + "'");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

void save_indices(const std::vector<std::size_t>& idx, const fs::path& path) {
  std::string out;
  for (std::size_t i : idx) out += std::to_string(i) + "\n";
  write_file_text(path, out);
}

// ---------------------------------------------------------------- hashing

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::kRuntime, "SHA-256 computation failed");
  }
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int k = 0; k < len; ++k) {
    hex += kDigits[digest[k] >> 4];
    hex += kDigits[digest[k] & 0xF];
  }
  return hex;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file_bytes(path)); }

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
      return 1;
    case ErrorCode::kIo:
    case ErrorCode::kFormat:
      return 3;
    case ErrorCode::kNumeric:
    case ErrorCode::kRuntime:
      return 2;
  }
  return 2;
}

}  // namespace pscbm
