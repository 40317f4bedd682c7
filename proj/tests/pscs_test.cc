#include "pscbm/pscs.h"

#include <cmath>

#include "gtest/gtest.h"
#include "oracles.h"
#include "pscbm/error.h"

namespace pscbm {
namespace {

using testing::Grid;
using testing::oracle_correlation;
using testing::oracle_merge;
using testing::Random;

ConceptBank bank_of(std::size_t l, std::vector<std::vector<ClassIndex>> classes) {
  std::vector<ConceptEntry> entries;
  for (std::size_t j = 0; j < classes.size(); ++j) {
    entries.push_back({"concept " + std::to_string(j), classes[j], j, {}});
  }
  return ConceptBank(l, entries);
}

Matrix to_matrix(const Grid& g) {
  Matrix m(g.size(), g.empty() ? 0 : g[0].size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t j = 0; j < g[i].size(); ++j) m(i, j) = g[i][j];
  }
  return m;
}

std::vector<std::size_t> iota_vec(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

TEST(FilterTest, StrictThresholdAndTotalRejection) {
  const auto bank = bank_of(2, {{0, 1}, {1}});
  ClassScoreTable t;
  t.set(0, 0, 0.35);
  t.set(0, 1, 0.20);
  t.set(1, 1, 0.10);
  const auto kept = filter_concepts(bank, t, 0.20);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].text, "concept 0");
  EXPECT_EQ(kept[0].classes, std::vector<ClassIndex>{0});
  EXPECT_TRUE(filter_concepts(bank, t, 0.35).empty());
}

TEST(CorrelationTest, HandCases) {
  const AffinityMatrix a(Matrix(3, 4, {1, 1, 1, 1,   //
                                       0, 1, 0, 1,   //
                                       0, 0, 0, 0.5}));
  const Matrix q = concept_correlation(a);
  EXPECT_EQ(q(0, 2), 1.0);               // identical columns
  EXPECT_NEAR(q(0, 1), 1 / std::sqrt(2.0), 1e-15);  // (1,1) vs (1,0)
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(q(i, i), 1.0);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(q(i, j), q(j, i));
  }
  const AffinityMatrix orth(Matrix(3, 2, {1, 0, 0, 1, 0, 0}));
  EXPECT_EQ(concept_correlation(orth)(0, 1), 0.0);
  EXPECT_THROW(concept_correlation(AffinityMatrix(Matrix(2, 2, {1, 0, 1, 0}))), Error);
}

TEST(CorrelationTest, MatchesOracleAndThreadCount) {
  Random rnd(12);
  Grid g(30, std::vector<double>(7));
  for (auto& row : g) {
    for (double& v : row) v = rnd.uniform(-1, 1);
  }
  const AffinityMatrix a(to_matrix(g));
  const Grid oq = oracle_correlation(g);
  const Matrix q = concept_correlation(a, 1);
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = 0; j < 7; ++j) {
      if (i != j) EXPECT_NEAR(q(i, j), oq[i][j], 1e-14);
    }
  }
  EXPECT_EQ(concept_correlation(a, 4), q);
}

TEST(MergeTest, IdentityThresholdKeepsEverything) {
  const auto bank = bank_of(3, {{0}, {1}, {2}, {0, 1}});
  const Matrix q(4, 4, 1.0);
  for (double tau : {1.0, 1.5}) {
    const auto r = merge_concepts(bank, q, tau);
    EXPECT_EQ(r.bank, bank);
    EXPECT_EQ(r.report.kept, iota_vec(4));
    EXPECT_TRUE(r.report.merged_into.empty());
  }
}

TEST(MergeTest, TotalCollapse) {
  const auto bank = bank_of(3, {{2}, {1}, {0}});
  const auto r = merge_concepts(bank, Matrix(3, 3, 1.0), 0.5);
  ASSERT_EQ(r.bank.size(), 1u);
  EXPECT_EQ(r.bank[0].text, "concept 0");
  EXPECT_EQ(r.bank[0].classes, (std::vector<ClassIndex>{0, 1, 2}));
  EXPECT_EQ(r.bank[0].aliases, (std::vector<std::string>{"concept 1", "concept 2"}));
  EXPECT_EQ(r.report.kept, std::vector<std::size_t>{0});
}

TEST(MergeTest, FourConceptExample) {
  const auto bank = bank_of(4, {{0}, {1}, {2}, {3}});
  Matrix q(4, 4, 0.5);
  for (std::size_t i = 0; i < 4; ++i) q(i, i) = 1.0;
  q(0, 1) = q(1, 0) = 0.9997;
  q(2, 3) = q(3, 2) = 0.9998;
  const auto r = merge_concepts(bank, q, 0.9996);
  EXPECT_EQ(r.report.kept, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(r.report.merged_into, (std::map<std::size_t, std::size_t>{{1, 0}, {3, 2}}));
  EXPECT_EQ(r.bank[0].classes, (std::vector<ClassIndex>{0, 1}));
  EXPECT_EQ(r.bank[1].classes, (std::vector<ClassIndex>{2, 3}));
  EXPECT_EQ(r.bank[1].embedding_row, 2u);
  EXPECT_EQ(r.report.q_stats.pairs, 2u);
  EXPECT_DOUBLE_EQ(r.report.q_stats.min, 0.9997);
  EXPECT_DOUBLE_EQ(r.report.q_stats.max, 0.9998);
}

// Random affinity matrix with planted near-duplicate columns.
Grid planted_affinity(Random& rnd, std::size_t n, std::size_t m) {
  Grid a(n, std::vector<double>(m));
  for (std::size_t j = 0; j < m; ++j) {
    const bool copy = j > 0 && rnd.index(2) == 0;
    const std::size_t src = copy ? rnd.index(j) : j;
    const double eps = std::pow(10.0, -1.0 - static_cast<double>(rnd.index(4)));
    for (std::size_t i = 0; i < n; ++i) {
      a[i][j] = copy ? a[i][src] + eps * rnd.uniform(-1, 1) : rnd.uniform(0.05, 0.4);
      a[i][j] = std::clamp(a[i][j], -1.0, 1.0);
    }
  }
  return a;
}

TEST(MergeTest, MatchesLiteralOracleAndInheritsClasses) {
  Random rnd(99);
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t n = 2 + rnd.index(63);
    const std::size_t m = 1 + rnd.index(12);
    const std::size_t l = 2 + rnd.index(5);
    const Grid g = planted_affinity(rnd, n, m);
    std::vector<std::vector<ClassIndex>> classes(m);
    for (auto& cs : classes) cs.push_back(static_cast<ClassIndex>(rnd.index(l)));
    const auto bank = bank_of(l, classes);
    const Matrix q = concept_correlation(AffinityMatrix(to_matrix(g)));
    Grid qg(m, std::vector<double>(m));
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) qg[i][j] = q(i, j);
    }
    for (double tau : {0.5, 0.9996, 0.9999, 1.0 + 1e-12}) {
      const auto r = merge_concepts(bank, q, tau);
      const auto o = oracle_merge(qg, tau);
      ASSERT_EQ(r.report.kept, o.selected);
      ASSERT_EQ(r.report.merged_into, o.merged_into);
      ASSERT_LE(r.bank.size(), bank.size());
      ASSERT_EQ(r.bank.size() == bank.size(), r.report.merged_into.empty());
      for (const auto& [removed, survivor] : r.report.merged_into) {
        const auto pos = std::find(r.report.kept.begin(), r.report.kept.end(), survivor) -
                         r.report.kept.begin();
        const auto& cs = r.bank[static_cast<std::size_t>(pos)].classes;
        for (ClassIndex c : bank[removed].classes) {
          ASSERT_TRUE(std::binary_search(cs.begin(), cs.end(), c));
        }
      }
    }
  }
}

TEST(MergeTest, RaisingTauNeverShrinksTheSurvivorSet) {
  Random rnd(5);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t m = 2 + rnd.index(11);
    const Grid g = planted_affinity(rnd, 20, m);
    const Matrix q = concept_correlation(AffinityMatrix(to_matrix(g)));
    const auto bank = bank_of(2, std::vector<std::vector<ClassIndex>>(m, {0}));
    std::size_t previous = 0;
    for (double tau : {0.9996, 0.9997, 0.9998, 0.9999}) {
      const std::size_t count = merge_concepts(bank, q, tau).bank.size();
      EXPECT_GE(count, previous) << "tau " << tau;
      previous = count;
    }
  }
}

TEST(PruneTest, Cases) {
  const auto bank = bank_of(2, {{0}, {0, 1}, {0}, {0}, {1}});
  ClassScoreTable t;
  t.set(0, 0, 0.4);
  t.set(1, 0, 0.9);
  t.set(1, 1, 0.9);
  t.set(2, 0, 0.5);
  t.set(3, 0, 0.3);
  t.set(4, 1, 0.6);

  const auto k0 = prune_exclusive(bank, t, 0);
  ASSERT_EQ(k0.size(), 1u);
  EXPECT_EQ(k0[0].text, "concept 1");

  const auto k1 = prune_exclusive(bank, t, 1);
  ASSERT_EQ(k1.size(), 3u);
  EXPECT_EQ(k1[0].text, "concept 1");
  EXPECT_EQ(k1[1].text, "concept 2");
  EXPECT_EQ(k1[2].text, "concept 4");

  EXPECT_EQ(prune_exclusive(bank, t, 3), bank);
  EXPECT_EQ(prune_exclusive(bank, t, 100), bank);
}

TEST(PruneTest, TiesGoToTheLowerIndex) {
  const auto bank = bank_of(2, {{1}, {1}, {1}});
  ClassScoreTable t;
  for (std::size_t j = 0; j < 3; ++j) t.set(j, 1, 0.5);
  const auto k2 = prune_exclusive(bank, t, 2);
  ASSERT_EQ(k2.size(), 2u);
  EXPECT_EQ(k2[0].text, "concept 0");
  EXPECT_EQ(k2[1].text, "concept 1");
}

TEST(LabelTest, DefinitionCases) {
  const auto bank = bank_of(2, {{0}});
  const LabelVector labels({0, 1, 0}, 2);
  const AffinityMatrix a(Matrix(3, 1, {0.25, 0.99, 0.20}));
  const auto ps = label_concepts(labels, bank, a, 0.20, StrategyMode::kPartiallyShared);
  EXPECT_EQ(ps(0, 0), 1);  // in class, above threshold
  EXPECT_EQ(ps(1, 0), 0);  // class gate
  EXPECT_EQ(ps(2, 0), 0);  // strict boundary
  const auto gs = label_concepts(labels, bank, a, 0.20, StrategyMode::kGloballyShared);
  EXPECT_EQ(gs(1, 0), 1);
  EXPECT_EQ(gs(2, 0), 0);
  EXPECT_EQ(label_concepts(labels, bank, a, 0.20, StrategyMode::kIndependent), ps);
}

TEST(LabelTest, IndependentModeRejectsSharedOrMergedBanks) {
  const LabelVector labels({0, 1}, 2);
  const AffinityMatrix a(Matrix(2, 1, {0.5, 0.5}));
  EXPECT_THROW(label_concepts(labels, bank_of(2, {{0, 1}}), a, 0.2, StrategyMode::kIndependent),
               Error);
  const ConceptBank merged(2, {{"x", {0}, 0, {"y"}}});
  EXPECT_THROW(label_concepts(labels, merged, a, 0.2, StrategyMode::kIndependent), Error);
}

TEST(LabelTest, BruteForceAndPartialBelowGlobal) {
  Random rnd(31);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t l = 2 + rnd.index(4);
    const std::size_t n = 1 + rnd.index(40);
    const std::size_t m = 1 + rnd.index(8);
    std::vector<std::vector<ClassIndex>> classes(m);
    for (auto& cs : classes) {
      for (std::size_t c = 0; c < l; ++c) {
        if (rnd.index(3) == 0) cs.push_back(static_cast<ClassIndex>(c));
      }
      if (cs.empty()) cs.push_back(static_cast<ClassIndex>(rnd.index(l)));
    }
    const auto bank = bank_of(l, classes);
    std::vector<ClassIndex> y(n);
    for (auto& v : y) v = static_cast<ClassIndex>(rnd.index(l));
    Matrix vals(n, m);
    for (double& v : vals.data()) v = std::round(rnd.uniform(0, 0.4) * 20) / 20;
    const double tau = 0.05 * static_cast<double>(rnd.index(7));
    const LabelVector labels(y, l);
    const AffinityMatrix a(vals);
    const auto ps = label_concepts(labels, bank, a, tau, StrategyMode::kPartiallyShared);
    const auto gs = label_concepts(labels, bank, a, tau, StrategyMode::kGloballyShared);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        bool in = false;
        for (ClassIndex c : classes[j]) in = in || c == y[i];
        ASSERT_EQ(ps(i, j), (in && vals(i, j) > tau) ? 1 : 0);
        ASSERT_EQ(gs(i, j), vals(i, j) > tau ? 1 : 0);
        ASSERT_LE(ps(i, j), gs(i, j));
      }
    }
  }
}

TEST(SplitByClassTest, ExpandsMultiClassConcepts) {
  const auto split = split_by_class(bank_of(3, {{1}, {0, 2}}));
  ASSERT_EQ(split.size(), 3u);
  EXPECT_EQ(split[0].text, "concept 0");
  EXPECT_EQ(split[1].text, "concept 1 [class 0]");
  EXPECT_EQ(split[2].classes, std::vector<ClassIndex>{2});
  EXPECT_EQ(split[2].embedding_row, 1u);
}

}  // namespace
}  // namespace pscbm
