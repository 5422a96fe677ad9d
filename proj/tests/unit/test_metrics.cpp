#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "mifair/metrics.hpp"
#include "mifair/verify.hpp"

using namespace mifair;
using testutil::hard_pred;
using testutil::tiny_dataset;

namespace {

// Oracle for I(group; benefit | mask) built from per-row benefit vectors by
// explicit counting into nested vectors, then the brute-force MI.
double oracle_mi(const std::vector<int>& groups, std::size_t num_groups, const Matrix& benefit,
                 const std::vector<bool>& mask) {
  std::vector<std::vector<double>> cells(num_groups, std::vector<double>(static_cast<std::size_t>(benefit.cols()), 0.0));
  double n = 0.0;
  for (std::size_t d = 0; d < groups.size(); ++d) {
    if (!mask[d]) continue;
    n += 1.0;
    for (Eigen::Index b = 0; b < benefit.cols(); ++b)
      cells[static_cast<std::size_t>(groups[d])][static_cast<std::size_t>(b)] += benefit(static_cast<Eigen::Index>(d), b);
  }
  for (auto& r : cells)
    for (auto& c : r) c /= n;
  return verify::mi_bruteforce(cells);
}

double oracle_iota(Notion n, const std::vector<int>& groups, std::size_t num_groups, const std::vector<int>& labels,
                   const Matrix& probs) {
  const std::size_t rows = labels.size();
  std::vector<bool> all(rows, true), pos(rows), neg(rows);
  for (std::size_t d = 0; d < rows; ++d) {
    pos[d] = labels[d] == 1;
    neg[d] = labels[d] != 1;
  }
  switch (n) {
    case Notion::SP: return oracle_mi(groups, num_groups, probs, all);
    case Notion::EO: return oracle_mi(groups, num_groups, probs, pos);
    case Notion::PE: return oracle_mi(groups, num_groups, probs, neg);
    case Notion::EOdds: return oracle_mi(groups, num_groups, probs, neg) + oracle_mi(groups, num_groups, probs, pos);
    case Notion::OAE: {
      Matrix b(static_cast<Eigen::Index>(rows), 2);
      for (std::size_t d = 0; d < rows; ++d) {
        const double c = probs(static_cast<Eigen::Index>(d), labels[d]);
        b(static_cast<Eigen::Index>(d), 0) = 1.0 - c;
        b(static_cast<Eigen::Index>(d), 1) = c;
      }
      return oracle_mi(groups, num_groups, b, all);
    }
  }
  return 0.0;
}

}  // namespace

TEST_CASE("notion names round-trip") {
  for (Notion n : kAllNotions) CHECK(parse_notion(notion_name(n)) == n);
  CHECK_FALSE(parse_notion("XYZ").has_value());
}

TEST_CASE("Prediction validates rows and takes the lowest argmax") {
  Matrix p(2, 2);
  p << 0.5, 0.5, 0.3, 0.7;
  Prediction pred(p);
  CHECK(pred.hard() == std::vector<int>{0, 1});
  Matrix bad(1, 2);
  bad << 0.6, 0.6;
  CHECK_ERROR_KIND(Prediction(bad), ErrorKind::value);
  CHECK_ERROR_KIND(Prediction(Matrix::Constant(2, 1, 1.0)), ErrorKind::shape);
}

TEST_CASE("benefit_distribution per notion") {
  Matrix p(4, 2);
  p << 0.9, 0.1, 0.2, 0.8, 0.6, 0.4, 0.3, 0.7;
  Prediction pred(p);
  const std::vector<int> y{0, 1, 1, 0};

  auto sp = benefit_distribution({Notion::SP}, pred, y);
  CHECK(sp.probs == p);
  CHECK(sp.mask == std::vector<bool>(4, true));

  auto eo = benefit_distribution({Notion::EO}, pred, y);
  CHECK(eo.mask == std::vector<bool>{false, true, true, false});
  auto pe = benefit_distribution({Notion::PE}, pred, y);
  CHECK(pe.mask == std::vector<bool>{true, false, false, true});

  auto oae = benefit_distribution({Notion::OAE}, pred, y);
  CHECK(oae.probs(0, 1) == doctest::Approx(0.9));
  CHECK(oae.probs(1, 1) == doctest::Approx(0.8));
  CHECK(oae.probs(2, 1) == doctest::Approx(0.4));
  CHECK(oae.probs(3, 0) == doctest::Approx(0.7));

  CHECK_ERROR_KIND(benefit_distribution({Notion::EOdds}, pred, y), ErrorKind::config);
  auto parts = benefit_components({Notion::EOdds, 0.5, 2.0}, pred, y);
  REQUIRE(parts.size() == 2);
  CHECK(parts[0].weight == 0.5);
  CHECK(parts[0].mask == pe.mask);
  CHECK(parts[1].weight == 2.0);
  CHECK(parts[1].mask == eo.mask);
}

TEST_CASE("separation notions need a class index for multiclass labels") {
  Prediction pred = hard_pred({0, 1, 2}, 3);
  const std::vector<int> y{0, 1, 2};
  CHECK_ERROR_KIND(benefit_distribution({Notion::EO}, pred, y), ErrorKind::config);
  CHECK_ERROR_KIND(benefit_distribution({Notion::PE}, pred, y), ErrorKind::config);
  FairnessNotion eo{Notion::EO};
  eo.class_index = 2;
  CHECK(benefit_distribution(eo, pred, y).mask == std::vector<bool>{false, false, true});
  eo.class_index = 3;
  CHECK_ERROR_KIND(benefit_distribution(eo, pred, y), ErrorKind::config);
  CHECK_NOTHROW(benefit_distribution({Notion::SP}, pred, y));
}

TEST_CASE("iota is zero when every row has the same benefit distribution") {
  std::vector<int> g{0, 1, 2, 0, 1, 2}, y{0, 1, 0, 1, 0, 1};
  auto ds = tiny_dataset(g, y, 3);
  Matrix p(6, 2);
  for (int r = 0; r < 6; ++r) p.row(r) << 0.35, 0.65;
  for (Notion n : kAllNotions) CHECK(iota({n}, ds, Prediction(p)).raw == 0.0);
}

TEST_CASE("iota agrees with the counting oracle on random instances") {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 40; ++t) {
    const std::size_t groups = 2 + static_cast<std::size_t>(t % 4);
    const std::size_t rows = 30 + static_cast<std::size_t>(t);
    std::uniform_int_distribution<int> gd(0, static_cast<int>(groups) - 1), yd(0, 1);
    std::vector<int> g(rows), y(rows);
    for (std::size_t d = 0; d < rows; ++d) {
      g[d] = gd(rng);
      y[d] = yd(rng);
    }
    y[0] = 0;
    y[1] = 1;
    auto ds = tiny_dataset(g, y, groups);
    auto idx = enumerate_subgroups(ds);
    Matrix p = testutil::random_probs(rng, rows, 2);
    for (Notion n : kAllNotions) {
      const double got = iota({n}, ds, Prediction(p)).raw;
      // Group ids in the oracle are raw codes; MI is invariant to relabeling
      // and unobserved codes only add empty rows.
      const double want = oracle_iota(n, g, groups, y, p);
      CHECK(got == doctest::Approx(want).epsilon(1e-12));
      CHECK(got >= 0.0);
    }
    (void)idx;
  }
}

TEST_CASE("EOdds equals the PE term plus the EO term") {
  std::mt19937_64 rng(5);
  std::vector<int> g, y;
  for (int d = 0; d < 60; ++d) {
    g.push_back(d % 3);
    y.push_back((d / 3) % 2);
  }
  auto ds = tiny_dataset(g, y, 3);
  Prediction pred(testutil::random_probs(rng, 60, 2));
  const double pe = iota({Notion::PE}, ds, pred).raw, eo = iota({Notion::EO}, ds, pred).raw;
  CHECK(iota({Notion::EOdds}, ds, pred).raw == doctest::Approx(pe + eo).epsilon(1e-14));
  CHECK(iota({Notion::EOdds, 0.3, 1.7}, ds, pred).raw == doctest::Approx(0.3 * pe + 1.7 * eo).epsilon(1e-14));
}

TEST_CASE("normalized iota lies in [0, 1]") {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 20; ++t) {
    std::vector<int> g, y;
    for (int d = 0; d < 50; ++d) {
      g.push_back(d % 4);
      y.push_back((d / 4) % 2);
    }
    auto ds = tiny_dataset(g, y, 4);
    Prediction pred(testutil::random_probs(rng, 50, 2));
    for (Notion n : kAllNotions) {
      FairnessNotion fn{n};
      fn.normalize = true;
      auto v = iota(fn, ds, pred);
      REQUIRE(v.normalized.has_value());
      CHECK(*v.normalized >= 0.0);
      CHECK(*v.normalized <= 1.0);
    }
  }
  // Perfect dependence between group and prediction saturates the ratio for SP.
  auto ds = tiny_dataset({0, 1, 0, 1}, {0, 1, 1, 0}, 2);
  FairnessNotion sp{Notion::SP};
  sp.normalize = true;
  CHECK(*iota(sp, ds, hard_pred({0, 1, 0, 1})).normalized == doctest::Approx(1.0));
}

TEST_CASE("iota_per_class conditions on each label") {
  auto ds = tiny_dataset({0, 1, 0, 1, 0, 1}, {0, 0, 1, 1, 2, 2}, 2, 3);
  auto idx = enumerate_subgroups(ds);
  auto per = iota_per_class(idx, ds.labels(), hard_pred({0, 1, 1, 1, 2, 2}, 3));
  REQUIRE(per.size() == 3);
  CHECK(*per[0] == doctest::Approx(std::log(2.0)));
  CHECK(*per[1] == 0.0);
  CHECK(*per[2] == 0.0);
}

TEST_CASE("pairwise differences") {
  // Group 0: 6 of 10 positive predictions, group 1: 3 of 10.
  std::vector<int> g, y, yhat;
  for (int d = 0; d < 20; ++d) {
    g.push_back(d < 10 ? 0 : 1);
    const int k = d % 10;
    yhat.push_back(d < 10 ? (k < 6) : (k < 3));
    y.push_back(k % 2);
  }
  auto ds = tiny_dataset(g, y, 2);
  auto idx = enumerate_subgroups(ds);
  auto spd = pairwise_baseline(PairwiseKind::SPD, idx, y, hard_pred(yhat));
  CHECK(*spd.at(0, 1) == doctest::Approx(0.3));
  CHECK(*spd.at(1, 0) == doctest::Approx(-0.3));
  CHECK(spd.max_abs() == doctest::Approx(0.3));
  CHECK(ddp(idx, hard_pred(yhat)) == doctest::Approx(0.3));

  SUBCASE("DDP example: rates 0.8 and 0.2") {
    std::vector<int> h;
    for (int d = 0; d < 20; ++d) h.push_back(d < 10 ? (d % 10 < 8) : (d % 10 < 2));
    CHECK(ddp(idx, hard_pred(h)) == doctest::Approx(0.6));
  }
}

TEST_CASE("pairwise table on 8 groups is antisymmetric with 56 entries") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> bit(0, 1);
  std::vector<int> g, y, yhat;
  for (int d = 0; d < 400; ++d) {
    g.push_back(d % 8);
    y.push_back(bit(rng));
    yhat.push_back(bit(rng));
  }
  auto ds = tiny_dataset(g, y, 8);
  auto idx = enumerate_subgroups(ds);
  for (PairwiseKind k : kAllPairwise) {
    auto t = pairwise_baseline(k, idx, y, hard_pred(yhat));
    CHECK(t.entries.size() == 56);
    for (const auto& e : t.entries) {
      REQUIRE(e.value.has_value());
      CHECK(*e.value == -*t.at(e.b, e.a));
    }
  }
}

TEST_CASE("pairwise entries are undefined when a group lacks relevant rows") {
  // Group 1 has no positive labels, so its true positive rate is undefined.
  auto ds = tiny_dataset({0, 0, 1, 1}, {1, 0, 0, 0}, 2);
  auto idx = enumerate_subgroups(ds);
  auto eod = pairwise_baseline(PairwiseKind::EOD, idx, ds.labels(), hard_pred({1, 0, 1, 0}));
  CHECK_FALSE(eod.at(0, 1).has_value());
  CHECK_FALSE(eod.rates[1].has_value());
  CHECK(eod.max_abs() == 0.0);
  MetricsReport r = assess(ds, hard_pred({1, 0, 1, 0}));
  CHECK(report_csv(r).find("EOD,g=0,g=1,NA") != std::string::npos);
  CHECK(r.find_iota(Notion::EO)->value.has_value());
}

TEST_CASE("accuracies") {
  // Group 0 has 9/10 correct, group 1 has 5/10.
  std::vector<int> g, y, yhat;
  for (int d = 0; d < 20; ++d) {
    g.push_back(d < 10 ? 0 : 1);
    y.push_back(1);
    yhat.push_back(d < 10 ? (d < 9) : (d < 15));
  }
  auto ds = tiny_dataset(g, y, 2);
  auto idx = enumerate_subgroups(ds);
  auto acc = accuracies(idx, y, hard_pred(yhat));
  CHECK(acc.mean == doctest::Approx(0.7));
  CHECK(acc.weighted == doctest::Approx(0.7));
  auto oae = pairwise_baseline(PairwiseKind::OAE, idx, y, hard_pred(yhat));
  CHECK(*oae.rates[0] == doctest::Approx(0.9));
  CHECK(*oae.rates[1] == doctest::Approx(0.5));
  CHECK(*oae.at(0, 1) == doctest::Approx(0.4));

  SUBCASE("unequal group sizes separate mean and weighted accuracy") {
    auto small = tiny_dataset({0, 0, 0, 1}, {1, 1, 1, 1}, 2);
    auto a = accuracies(enumerate_subgroups(small), small.labels(), hard_pred({1, 1, 1, 0}));
    CHECK(a.mean == doctest::Approx(0.75));
    CHECK(a.weighted == doctest::Approx(0.5));
  }
}

TEST_CASE("assess report layout and the threshold verdict") {
  auto w = verify::equivalence_witness(Notion::SP, 3, 2, 4);
  auto r = assess(w.data, w.pred);
  CHECK(r.group_labels.size() == 3);
  CHECK(r.iotas.size() == 5);
  CHECK(r.tables.size() == 4);
  CHECK(r.find_iota(Notion::SP)->value->raw <= 1e-12);
  const std::string csv = report_csv(r);
  CHECK(csv.rfind("metric,group_a,group_b,value\ncount,g=0,,", 0) == 0);
  CHECK(csv.find("\niota_SP,,,") != std::string::npos);
  CHECK(csv.find("\nACC_mean,,,") != std::string::npos);
  CHECK(csv.find("\nDDP,,,") != std::string::npos);
  const Notion sp[] = {Notion::SP};
  CHECK(within_threshold(r, sp, 0.2));
  CHECK(within_threshold(r, sp, 0.0));

  auto odd = verify::perturb(w, verify::perturbable_rows(w).front());
  auto r2 = assess(w.data, odd);
  CHECK(r2.find_iota(Notion::SP)->value->raw > 0.0);
  CHECK_FALSE(within_threshold(r2, sp, 0.0));
}

TEST_CASE("assess skips binary-only baselines for multiclass labels") {
  auto ds = tiny_dataset({0, 1, 0, 1, 0, 1}, {0, 0, 1, 1, 2, 2}, 2, 3);
  AssessOptions opts;
  opts.class_index = 1;
  auto r = assess(ds, hard_pred({0, 1, 1, 1, 2, 2}, 3), opts);
  CHECK(r.tables.size() == 1);
  CHECK(r.tables[0].kind == PairwiseKind::OAE);
  CHECK_FALSE(r.ddp.has_value());
  CHECK(r.find_iota(Notion::EO)->value.has_value());

  auto no_index = assess(ds, hard_pred({0, 1, 1, 1, 2, 2}, 3));
  CHECK_FALSE(no_index.find_iota(Notion::EO)->value.has_value());
  CHECK(no_index.find_iota(Notion::SP)->value.has_value());
}

TEST_CASE("assess rejects misaligned predictions") {
  auto ds = tiny_dataset({0, 1, 0}, {0, 1, 1}, 2);
  CHECK_ERROR_KIND(assess(ds, hard_pred({0, 1})), ErrorKind::shape);
  CHECK_ERROR_KIND(assess(ds, hard_pred({0, 1, 2}, 3)), ErrorKind::shape);
}
