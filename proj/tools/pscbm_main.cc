// Command-line driver for the PS-CBM pipeline stages.

#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pscbm/data_model.h"
#include "pscbm/error.h"
#include "pscbm/exemplars.h"
#include "pscbm/pipeline.h"
#include "pscbm/synth.h"

namespace {

using namespace pscbm;

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string out_dir;
  std::optional<double> tau_conf;
  std::optional<double> tau_merge;
  std::optional<std::size_t> k_exclusive;
  std::optional<double> beta;
  std::string strategy;
};

RunConfig resolve_config(const GlobalFlags& g) {
  if (g.config.empty()) throw invalid_argument("--config is required for this command");
  RunConfig cfg = load_run_config(g.config);
  if (g.seed) cfg.params.seed = *g.seed;
  if (g.threads) cfg.threads = *g.threads;
  if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
  if (g.tau_conf) cfg.params.tau_conf = *g.tau_conf;
  if (g.tau_merge) cfg.params.tau_merge = *g.tau_merge;
  if (g.k_exclusive) cfg.params.k_exclusive = *g.k_exclusive;
  if (g.beta) cfg.params.beta = *g.beta;
  if (!g.strategy.empty()) cfg.params.strategy = parse_strategy(g.strategy);
  cfg.validate();
  return cfg;
}

std::vector<std::string> split_values(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  for (const auto& item : raw) {
    std::stringstream ss(item);
    std::string token;
    while (std::getline(ss, token, ',')) {
      if (!token.empty()) out.push_back(token);
    }
  }
  return out;
}

void print_report(const EvalReport& r) {
  std::cout << "acc=" << r.acc << " concepts=" << r.num_concepts << " cea=" << r.cea
            << " alignment=" << r.alignment_score << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Partially shared concept bottleneck models on precomputed embeddings"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  GlobalFlags g;
  app.add_option("--config", g.config, "Pipeline config JSON");
  app.add_option("--seed", g.seed, "Override the config seed");
  app.add_option("--threads", g.threads, "Worker threads for affinity computations");
  app.add_option("--out-dir", g.out_dir, "Output directory (overrides config)");
  app.add_option("--tau-conf", g.tau_conf, "Override tau_conf");
  app.add_option("--tau-merge", g.tau_merge, "Override tau_merge");
  app.add_option("--k-exclusive", g.k_exclusive, "Override k_exclusive");
  app.add_option("--beta", g.beta, "Override the CEA beta");
  app.add_option("--strategy", g.strategy,
                 "independent | partially_shared | globally_shared");

  auto config_command = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    sub->fallthrough();
    return sub;
  };

  auto* pipeline = config_command("pipeline", "Run every stage and write a manifest");
  auto* affinity = config_command("affinity", "Dump the image-concept affinity matrix as CSV");
  auto* pscs = config_command("pscs", "Filter, merge, prune and label concepts");
  auto* train_cbl = config_command("train-cbl", "Train the concept bottleneck layer");
  auto* train_fcl = config_command("train-fcl", "Train the sparse final classifier");
  auto* eval = config_command("eval", "Evaluate ACC, CEA and alignment on the test split");
  auto* explain = config_command("explain", "Explain predictions on test samples");
  auto* concept_map = config_command("concept-map", "Export the concept-class map");

  auto* exemplars = config_command("select-exemplars", "Pick few-shot exemplars per class");
  std::size_t shots = 4;
  std::string exemplar_mode = "fps";
  exemplars->add_option("--shots", shots, "Exemplars per class")->capture_default_str();
  exemplars->add_option("--mode", exemplar_mode, "fps | random")->capture_default_str();

  auto* sweep = config_command("sweep", "Re-run the pipeline over parameter values");
  std::string sweep_param;
  std::vector<std::string> sweep_values;
  sweep->add_option("--param", sweep_param, "k_exclusive | tau_conf | tau_merge")
      ->required();
  sweep->add_option("--values", sweep_values, "Comma-separated values")->required();

  auto* subsample = config_command("subsample", "Write a seeded row subsample index file");
  double fraction = 0.1;
  std::size_t rows = 0;
  std::string subsample_images;
  std::string subsample_output;
  subsample->add_option("--fraction", fraction, "Fraction of rows in (0, 1]")
      ->capture_default_str();
  subsample->add_option("--rows", rows, "Number of rows to sample from");
  subsample->add_option("--images", subsample_images, "EMB1 file whose rows are sampled");
  subsample->add_option("--output", subsample_output, "Index file to write");

  auto* synth = config_command("synth", "Generate a synthetic dataset and config");
  SynthSpec spec;
  std::size_t n_test = 50;
  synth->add_option("--classes", spec.num_classes)->capture_default_str();
  synth->add_option("--shared", spec.concepts_shared)->capture_default_str();
  synth->add_option("--exclusive", spec.exclusive_per_class)->capture_default_str();
  synth->add_option("--shared-per-class", spec.shared_per_class)->capture_default_str();
  synth->add_option("--duplicates", spec.duplicate_copies)->capture_default_str();
  synth->add_option("--dim", spec.dim)->capture_default_str();
  synth->add_option("--n-train", spec.n_per_class, "Training images per class")
      ->capture_default_str();
  synth->add_option("--n-test", n_test, "Test images per class")->capture_default_str();
  synth->add_option("--noise", spec.noise_sigma)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  std::string stage = "cli";
  try {
    if (pipeline->parsed()) {
      const RunConfig cfg = resolve_config(g);
      print_report(run_pipeline(cfg).report);
    } else if (affinity->parsed()) {
      stage_affinity(resolve_config(g));
    } else if (pscs->parsed()) {
      stage_pscs(resolve_config(g));
    } else if (train_cbl->parsed()) {
      stage_train_cbl(resolve_config(g));
    } else if (train_fcl->parsed()) {
      stage_train_fcl(resolve_config(g));
    } else if (eval->parsed()) {
      print_report(stage_eval(resolve_config(g)));
    } else if (explain->parsed()) {
      stage_explain(resolve_config(g));
    } else if (concept_map->parsed()) {
      stage_concept_map(resolve_config(g));
    } else if (exemplars->parsed()) {
      stage = "select-exemplars";
      const RunConfig cfg = resolve_config(g);
      const ConceptBank bank = load_concepts(cfg.resolve(cfg.inputs.concepts));
      const EmbeddingMatrix images =
          normalize_rows(load_embeddings(cfg.resolve(cfg.inputs.train_images)));
      const LabelVector labels =
          load_labels(cfg.resolve(cfg.inputs.train_labels), bank.num_classes());
      ExemplarSet set;
      if (exemplar_mode == "fps") {
        set = select_exemplars_fps(images, labels, shots, cfg.params.seed);
      } else if (exemplar_mode == "random") {
        set = select_exemplars_random(images, labels, shots, cfg.params.seed);
      } else {
        throw invalid_argument("--mode must be fps or random");
      }
      std::filesystem::create_directories(cfg.out_dir);
      write_file_text(cfg.out_dir / "exemplars.json", exemplars_json(set));
    } else if (sweep->parsed()) {
      const RunConfig cfg = resolve_config(g);
      const auto param = parse_sweep_parameter(sweep_param);
      const auto rows_out = run_sweep(cfg, param, split_values(sweep_values));
      std::cout << sweep_csv(param, rows_out);
    } else if (subsample->parsed()) {
      stage = "subsample";
      std::size_t n = rows;
      if (!subsample_images.empty()) n = load_embeddings(subsample_images).rows();
      if (n == 0) throw invalid_argument("subsample: give --rows or --images");
      const std::uint64_t seed = g.seed.value_or(0);
      std::filesystem::path out = subsample_output;
      if (out.empty()) {
        out = std::filesystem::path(g.out_dir.empty() ? "." : g.out_dir) / "subsample.txt";
      }
      if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
      save_indices(subsample_indices(n, fraction, seed), out);
    } else if (synth->parsed()) {
      stage = "synth";
      spec.seed = g.seed.value_or(0);
      if (g.out_dir.empty()) throw invalid_argument("synth: --out-dir is required");
      write_synth_dataset(generate_world(spec), spec.n_per_class, n_test, g.out_dir);
    }
  } catch (const StageError& e) {
    std::cerr << "error [" << e.stage() << "]: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const Error& e) {
    std::cerr << "error [" << stage << "]: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error [" << stage << "]: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error [" << stage << "]: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
