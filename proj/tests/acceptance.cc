// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Every check runs on seeded synthetic inputs.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.h"
#include "pscbm/affinity.h"
#include "pscbm/error.h"
#include "pscbm/metrics.h"
#include "pscbm/pipeline.h"
#include "pscbm/pscs.h"
#include "pscbm/synth.h"
#include "pscbm/training.h"

namespace {

namespace fs = std::filesystem;
using namespace pscbm;
using pscbm::testing::Grid;
using pscbm::testing::Random;

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void fail(Outcome& o, const std::string& why) {
  if (o.pass) o.detail = why;
  o.pass = false;
}

Grid to_grid(const Matrix& m) {
  Grid g(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) g[i][j] = m(i, j);
  }
  return g;
}

std::map<std::string, std::string> read_dir(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) {
      files[fs::relative(e.path(), dir).string()] = pscbm::testing::slurp(e.path());
    }
  }
  return files;
}

// ------------------------------------------------------------------ CEA

Outcome cea_formula() {
  Outcome o;
  Random rnd(2024);
  double worst = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t l = 3 + rnd.index(998);
    const std::size_t k = cea_base(l);
    const std::size_t m = k + rnd.index(10001 - k);
    const double acc = rnd.uniform(0, 1);
    const double beta = rnd.uniform(0, 2);
    const long double want = pscbm::testing::oracle_cea(acc, m, l, beta);
    const double got = cea(acc, m, l, beta);
    const double rel = want == 0 ? std::abs(got) : std::abs(static_cast<double>((got - want) / want));
    worst = std::max(worst, rel);
  }
  if (worst > 1e-10) fail(o, "relative error " + fmt("%.3g", worst));

  for (std::size_t l : {3u, 10u, 50u, 200u, 1000u}) {
    const std::size_t k = cea_base(l);
    for (double beta : {0.1, 0.25, 0.5, 1.0}) {
      for (double acc : {0.0, 0.3, 0.898, 1.0}) {
        if (cea(acc, k, l, beta) != acc) fail(o, "cea at m = k differs from acc");
      }
      double prev_m = 2;
      for (std::size_t m = k; m <= 10000; m += 1 + m / 7) {
        const double v = cea(0.8, m, l, beta);
        if (v > prev_m) fail(o, "cea increased with m");
        prev_m = v;
        double prev_acc = -1;
        for (int step = 0; step <= 20; ++step) {
          const double w = cea(step / 20.0, m, l, beta);
          if (w < prev_acc) fail(o, "cea decreased with acc");
          prev_acc = w;
        }
      }
    }
  }
  if (o.pass) o.detail = "max rel err " + fmt("%.2g", worst);
  return o;
}

// -------------------------------------------------------------- merging

Outcome merge_equivalence() {
  Outcome o;
  Random rnd(77);
  const double taus[] = {0.5, 0.9996, 0.9999, 1.0 + 1e-12};
  const double jitter[] = {0.0, 1e-6, 1e-4, 1e-3, 1e-2, 0.1};
  double q_err = 0;
  std::size_t merged_total = 0;
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = 2 + rnd.index(63);
    const std::size_t m = 1 + rnd.index(12);
    const double tau = taus[t % 4];
    Matrix a(n, m);
    for (std::size_t j = 0; j < m; ++j) {
      // Planted near-duplicates: copy an earlier column with small jitter.
      const bool copy = j > 0 && rnd.index(2) == 0;
      const std::size_t src = copy ? rnd.index(j) : 0;
      const double eps = jitter[rnd.index(6)];
      for (std::size_t i = 0; i < n; ++i) {
        const double v = copy ? a(i, src) + eps * rnd.normal() : rnd.uniform(-0.2, 0.9);
        a(i, j) = std::clamp(v, -1.0, 1.0);
      }
    }
    std::vector<ConceptEntry> entries;
    for (std::size_t j = 0; j < m; ++j) {
      entries.push_back({"c" + std::to_string(j), {static_cast<ClassIndex>(j % 3)}, j, {}});
    }
    const ConceptBank bank(3, entries);
    const AffinityMatrix am(a);

    const Matrix q = concept_correlation(am);
    const Grid oq = pscbm::testing::oracle_correlation(to_grid(a));
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) q_err = std::max(q_err, std::abs(q(i, j) - oq[i][j]));
    }
    const MergeResult got = merge_concepts(bank, q, tau);
    merged_total += got.report.merged_into.size();
    // Once on the library's Q (pure loop equivalence), once end to end
    // from the oracle's own Q.
    for (const Grid& grid : {to_grid(q), oq}) {
      const auto want = pscbm::testing::oracle_merge(grid, tau);
      if (got.report.kept != want.selected || got.report.merged_into != want.merged_into) {
        fail(o, "instance " + std::to_string(t) + " differs (tau " + fmt("%.12g", tau) + ")");
      }
    }
  }
  if (q_err > 1e-14) fail(o, "correlation differs by " + fmt("%.3g", q_err));
  if (o.pass) {
    o.detail = std::to_string(merged_total) + " merges, max |dQ| " + fmt("%.2g", q_err);
  }
  return o;
}

// ------------------------------------------------ filtering and labeling

Outcome filter_and_label_equivalence() {
  Outcome o;
  Random rnd(314);
  std::size_t pairs_total = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t l = 2 + rnd.index(4);
    const std::size_t n = l + rnd.index(24);
    const std::size_t m = 1 + rnd.index(10);
    std::vector<ClassIndex> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<ClassIndex>(i < l ? i : rnd.index(l));
    }
    const LabelVector labels(y, l);
    // Dyadic values keep the sums exact, so ties at the threshold are real.
    Matrix a(n, m);
    for (double& v : a.data()) v = static_cast<double>(rnd.index(129)) / 64.0 - 1.0;
    std::vector<ConceptEntry> entries;
    for (std::size_t j = 0; j < m; ++j) {
      std::vector<ClassIndex> cs;
      for (ClassIndex c = 0; c < l; ++c) {
        if (rnd.index(2)) cs.push_back(c);
      }
      if (cs.empty()) cs.push_back(static_cast<ClassIndex>(rnd.index(l)));
      entries.push_back({"c" + std::to_string(j), cs, j, {}});
    }
    const ConceptBank bank(l, entries);
    const double tau = static_cast<double>(rnd.index(65)) / 64.0 - 0.5;
    const AffinityMatrix am(a);

    const ConceptBank kept = filter_concepts(bank, class_scores(am, bank, labels), tau);

    std::vector<std::pair<std::size_t, std::vector<ClassIndex>>> want;
    for (std::size_t j = 0; j < m; ++j) {
      std::vector<ClassIndex> keep;
      for (ClassIndex c : bank[j].classes) {
        std::vector<double> vals;
        for (std::size_t i = 0; i < n; ++i) {
          if (y[i] == c) vals.push_back(a(i, j));
        }
        if (pscbm::testing::oracle_top4_mean(vals) > tau) keep.push_back(c);
      }
      if (!keep.empty()) want.push_back({j, keep});
    }
    bool same = kept.size() == want.size();
    for (std::size_t k = 0; same && k < want.size(); ++k) {
      same = kept[k].embedding_row == want[k].first && kept[k].classes == want[k].second;
      pairs_total += want[k].second.size();
    }
    if (!same) {
      fail(o, "retained pairs differ in instance " + std::to_string(t));
      continue;
    }
    if (kept.empty()) continue;

    const AffinityMatrix ak = am.select_concepts(kept.embedding_rows());
    for (StrategyMode mode : {StrategyMode::kPartiallyShared, StrategyMode::kGloballyShared}) {
      const BinaryMatrix s = label_concepts(labels, kept, ak, tau, mode);
      BinaryMatrix w(n, kept.size());
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < kept.size(); ++j) {
          bool in_class = mode == StrategyMode::kGloballyShared;
          for (ClassIndex c : kept[j].classes) in_class = in_class || c == y[i];
          w.set(i, j, in_class && a(i, kept[j].embedding_row) > tau);
        }
      }
      if (!(s == w)) fail(o, "labels differ in instance " + std::to_string(t));
    }
  }
  if (o.pass) o.detail = std::to_string(pairs_total) + " retained pairs";
  return o;
}

// ------------------------------------------------------------------ CBL

Outcome cbl_gradient() {
  Outcome o;
  Random rnd(99);
  double worst_elem = 0, worst_norm = 0;
  for (int point = 0; point < 10; ++point) {
    const std::size_t n = 16, d = 5, m = 4;
    Matrix x(n, d);
    for (double& v : x.data()) v = rnd.normal();
    BinaryMatrix s(n, m);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) s.set(i, j, rnd.index(2) == 1);
    }
    LinearHead h{Matrix(m, d), std::vector<double>(m)};
    for (double& v : h.weights.data()) v = 0.5 * rnd.normal();
    for (double& v : h.bias) v = 0.5 * rnd.normal();
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), 0);
    LinearHead grad;
    cbl_loss(h, x, s, rows, &grad);

    const double step = 1e-6;
    double diff2 = 0, ref2 = 0;
    auto probe = [&](double& param, double analytic) {
      const double keep = param;
      param = keep + step;
      const double up = cbl_loss(h, x, s, rows);
      param = keep - step;
      const double down = cbl_loss(h, x, s, rows);
      param = keep;
      const double numeric = (up - down) / (2 * step);
      const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
      worst_elem = std::max(worst_elem, std::abs(analytic - numeric) / scale);
      diff2 += (analytic - numeric) * (analytic - numeric);
      ref2 += std::max(analytic * analytic, numeric * numeric);
    };
    for (std::size_t k = 0; k < h.weights.data().size(); ++k) {
      probe(h.weights.data()[k], grad.weights.data()[k]);
    }
    for (std::size_t k = 0; k < m; ++k) probe(h.bias[k], grad.bias[k]);
    worst_norm = std::max(worst_norm, std::sqrt(diff2 / ref2));
  }
  if (worst_elem >= 1e-6) fail(o, "entrywise relative error " + fmt("%.3g", worst_elem));
  if (worst_norm >= 1e-6) fail(o, "norm-wise relative error " + fmt("%.3g", worst_norm));
  if (o.pass) {
    o.detail = "max rel err " + fmt("%.2g", worst_elem) + " entrywise, " +
               fmt("%.2g", worst_norm) + " norm-wise";
  }
  return o;
}

// ------------------------------------------------------------------ FCL

struct FclProblem {
  Matrix x;
  LabelVector y;
};

// Overlapping Gaussian clusters, standardized per column (as the pipeline
// standardizes concept logits). Not separable, so lambda = 0 has a minimizer.
FclProblem fcl_problem(std::uint64_t seed, std::size_t n, std::size_t m, std::size_t l) {
  Random rnd(seed);
  Matrix centers(l, m);
  for (double& v : centers.data()) v = rnd.normal();
  Matrix x(n, m);
  std::vector<ClassIndex> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<ClassIndex>(i % l);
    for (std::size_t j = 0; j < m; ++j) x(i, j) = centers(y[i], j) + 1.5 * rnd.normal();
  }
  for (std::size_t j = 0; j < m; ++j) {
    double mean = 0, var = 0;
    for (std::size_t i = 0; i < n; ++i) mean += x(i, j) / n;
    for (std::size_t i = 0; i < n; ++i) var += (x(i, j) - mean) * (x(i, j) - mean) / n;
    for (std::size_t i = 0; i < n; ++i) x(i, j) = (x(i, j) - mean) / std::sqrt(var);
  }
  return {x, LabelVector(y, l)};
}

double oracle_ce(const Matrix& w, const std::vector<double>& b, const FclProblem& p,
                 Matrix& gw, std::vector<double>& gb) {
  const std::size_t l = w.rows(), m = w.cols(), n = p.x.rows();
  gw = Matrix(l, m);
  gb.assign(l, 0.0);
  double total = 0;
  std::vector<double> z(l);
  for (std::size_t i = 0; i < n; ++i) {
    double zmax = -1e300;
    for (std::size_t c = 0; c < l; ++c) {
      z[c] = b[c];
      for (std::size_t j = 0; j < m; ++j) z[c] += w(c, j) * p.x(i, j);
      zmax = std::max(zmax, z[c]);
    }
    double se = 0;
    for (std::size_t c = 0; c < l; ++c) se += std::exp(z[c] - zmax);
    total += zmax + std::log(se) - z[p.y[i]];
    for (std::size_t c = 0; c < l; ++c) {
      const double r = std::exp(z[c] - zmax) / se - (c == p.y[i] ? 1.0 : 0.0);
      gb[c] += r / n;
      for (std::size_t j = 0; j < m; ++j) gw(c, j) += r * p.x(i, j) / n;
    }
  }
  return total / n;
}

// First-order optimality of the elastic-net problem, from the oracle gradient.
double oracle_kkt(const SparseClassifier& clf, const FclProblem& p, double lambda,
                  double alpha) {
  Matrix gw;
  std::vector<double> gb;
  oracle_ce(clf.weights, clf.bias, p, gw, gb);
  double worst = 0;
  for (std::size_t k = 0; k < gw.data().size(); ++k) {
    const double w = clf.weights.data()[k], g = gw.data()[k];
    worst = std::max(worst, w != 0 ? std::abs(g + 2 * lambda * (1 - alpha) * w +
                                              lambda * alpha * (w > 0 ? 1 : -1))
                                   : std::max(0.0, std::abs(g) - lambda * alpha));
  }
  for (double g : gb) worst = std::max(worst, std::abs(g));
  return worst;
}

double gd_optimum(const FclProblem& p, std::size_t l, std::size_t m) {
  Matrix w(l, m), gw;
  std::vector<double> b(l, 0.0), gb;
  double smooth = 0;
  for (std::size_t i = 0; i < p.x.rows(); ++i) {
    double s = 1;
    for (std::size_t j = 0; j < m; ++j) s += p.x(i, j) * p.x(i, j);
    smooth = std::max(smooth, s);
  }
  const double step = 1.0 / smooth;
  double f = 0;
  for (int it = 0; it < 200000; ++it) {
    f = oracle_ce(w, b, p, gw, gb);
    double g2 = 0;
    for (double g : gw.data()) g2 += g * g;
    for (double g : gb) g2 += g * g;
    if (g2 < 1e-22) break;
    for (std::size_t k = 0; k < w.data().size(); ++k) w.data()[k] -= step * gw.data()[k];
    for (std::size_t c = 0; c < l; ++c) b[c] -= step * gb[c];
  }
  return f;
}

PipelineConfig fcl_cfg(double lambda, double alpha) {
  PipelineConfig cfg;
  cfg.fcl.lambda = lambda;
  cfg.fcl.alpha = alpha;
  cfg.fcl.batch_size = 16;
  cfg.fcl.max_iterations = 50000;
  cfg.fcl.tolerance = 1e-7;
  return cfg;
}

Outcome fcl_solver() {
  Outcome o;
  const auto p = fcl_problem(4, 300, 8, 3);
  const auto clf = train_fcl(p.x, p.y, fcl_cfg(7e-4, 0.99));
  const double kkt = oracle_kkt(clf, p, 7e-4, 0.99);
  if (kkt > 1e-5) fail(o, "KKT residual " + fmt("%.3g", kkt));

  const auto q = fcl_problem(3, 60, 8, 3);
  auto cfg0 = fcl_cfg(0.0, 0.5);
  cfg0.fcl.tolerance = 1e-9;
  cfg0.fcl.max_iterations = 200000;
  const auto clf0 = train_fcl(q.x, q.y, cfg0);
  Matrix gw;
  std::vector<double> gb;
  const double gap = std::abs(oracle_ce(clf0.weights, clf0.bias, q, gw, gb) - gd_optimum(q, 3, 8));
  if (gap > 1e-6) fail(o, "lambda = 0 objective gap " + fmt("%.3g", gap));

  const auto big = train_fcl(p.x, p.y, fcl_cfg(1e6, 1.0));
  for (double v : big.weights.data()) {
    if (v != 0.0) fail(o, "nonzero weight at lambda = 1e6");
  }
  if (o.pass) {
    o.detail = "KKT " + fmt("%.2g", kkt) + ", lambda=0 gap " + fmt("%.2g", gap) +
               ", nnz at 1e6 = " + std::to_string(big.nnz());
  }
  return o;
}

// ------------------------------------------------------------ pipelines

RunConfig synth_run(const std::string& name, const SynthSpec& spec, std::size_t n_train,
                    std::size_t n_test) {
  const fs::path dir = pscbm::testing::temp_dir("acceptance_" + name);
  write_synth_dataset(generate_world(spec), n_train, n_test, dir / "data");
  RunConfig cfg = load_run_config(dir / "data" / "config.json");
  cfg.out_dir = dir / "out";
  cfg.threads = 1;
  return cfg;
}

Outcome end_to_end() {
  Outcome o;
  SynthSpec spec;  // 10 classes, 6 shared, 2 exclusive per class, sigma 0.05
  spec.seed = 11;
  const RunConfig ps = synth_run("e2e", spec, 100, 50);
  RunConfig ind = ps, gs = ps;
  ind.params.strategy = StrategyMode::kIndependent;
  ind.out_dir = ps.out_dir.parent_path() / "independent";
  gs.params.strategy = StrategyMode::kGloballyShared;
  gs.out_dir = ps.out_dir.parent_path() / "global";

  const auto rp = run_pipeline(ps);
  const auto ri = run_pipeline(ind);
  run_pipeline(gs);
  if (rp.report.acc < 0.95) fail(o, "ACC " + fmt("%.4f", rp.report.acc));
  if (!(rp.concepts_final < ri.concepts_final)) {
    fail(o, "concept count " + std::to_string(rp.concepts_final) + " vs independent " +
                std::to_string(ri.concepts_final));
  }
  const BinaryMatrix sp = load_concept_labels(ps.out_dir / "concept_labels.csv");
  const BinaryMatrix sg = load_concept_labels(gs.out_dir / "concept_labels.csv");
  if (sp.rows() != sg.rows() || sp.cols() != sg.cols()) {
    fail(o, "label matrices differ in shape");
  } else {
    for (std::size_t i = 0; i < sp.rows(); ++i) {
      for (std::size_t j = 0; j < sp.cols(); ++j) {
        if (sp(i, j) > sg(i, j)) fail(o, "partially-shared label exceeds globally-shared");
      }
    }
  }
  if (o.pass) {
    o.detail = "ACC " + fmt("%.4f", rp.report.acc) + ", concepts " +
               std::to_string(rp.concepts_final) + " vs independent " +
               std::to_string(ri.concepts_final) + ", labels " +
               std::to_string(sp.count_ones()) + " <= " + std::to_string(sg.count_ones());
  }
  return o;
}

Outcome k_sweep() {
  Outcome o;
  SynthSpec spec;
  spec.num_classes = 10;
  spec.concepts_shared = 4;
  spec.shared_per_class = 1;
  spec.exclusive_per_class = 4;
  spec.duplicate_copies = 1;
  spec.dim = 64;
  spec.seed = 3;
  const RunConfig cfg = synth_run("k_sweep", spec, 100, 50);
  std::vector<std::string> values;
  for (int k = 0; k <= 8; ++k) values.push_back(std::to_string(k));
  const auto rows = run_sweep(cfg, SweepParameter::kKExclusive, values);
  if (!(rows[1].report.acc > rows[0].report.acc)) {
    fail(o, "ACC(1) " + fmt("%.4f", rows[1].report.acc) + " <= ACC(0) " +
                fmt("%.4f", rows[0].report.acc));
  }
  for (std::size_t k = 3; k < rows.size(); ++k) {
    if (rows[k].report.cea > rows[k - 1].report.cea) {
      fail(o, "CEA rises from K=" + std::to_string(k - 1) + " to K=" + std::to_string(k));
    }
  }
  std::ostringstream d;
  d << "ACC(0) " << fmt("%.3f", rows[0].report.acc) << ", ACC(1) "
    << fmt("%.3f", rows[1].report.acc) << ", CEA";
  for (std::size_t k = 2; k < rows.size(); ++k) d << " " << fmt("%.3f", rows[k].report.cea);
  if (o.pass) o.detail = d.str();
  return o;
}

Outcome determinism() {
  Outcome o;
  SynthSpec spec;
  spec.seed = 21;
  const RunConfig a = synth_run("determinism", spec, 100, 50);
  RunConfig b = a;
  b.out_dir = a.out_dir.parent_path() / "out2";
  run_pipeline(a);
  run_pipeline(b);
  const auto fa = read_dir(a.out_dir);
  const auto fb = read_dir(b.out_dir);
  if (fa != fb) fail(o, "output directories differ");
  if (sha256_file(a.out_dir / "manifest.json") != sha256_file(b.out_dir / "manifest.json")) {
    fail(o, "manifests differ");
  }
  if (o.pass) o.detail = std::to_string(fa.size()) + " files identical";
  return o;
}

struct Criterion {
  const char* name;
  double budget_s;  // 0 = no runtime bound
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"cea_formula", 1, cea_formula},
      {"merge_oracle_equivalence", 5, merge_equivalence},
      {"filter_label_brute_force", 0, filter_and_label_equivalence},
      {"cbl_gradient_check", 0, cbl_gradient},
      {"fcl_solver", 30, fcl_solver},
      {"end_to_end_synthetic", 60, end_to_end},
      {"k_sweep_shape", 0, k_sweep},
      {"determinism", 0, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.budget_s > 0 && secs >= c.budget_s) {
      fail(o, "took " + fmt("%.2f", secs) + " s, limit " + fmt("%.0f", c.budget_s) + " s");
    }
    std::printf("%s %-26s %.2fs  %s\n", o.pass ? "PASS" : "FAIL", c.name, secs, o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
