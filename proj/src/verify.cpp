#include "mifair/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "io_util.hpp"
#include "mifair/error.hpp"
#include "mifair/estimation.hpp"
#include "mifair/model.hpp"
#include "mifair/training.hpp"

namespace mifair::verify {

OracleResult compare(double oracle, double target, double abs_tolerance) {
  OracleResult r;
  r.oracle = oracle;
  r.target = target;
  r.abs_error = std::abs(oracle - target);
  r.rel_error = r.abs_error / std::max({std::abs(oracle), std::abs(target), 1e-300});
  r.tolerance = abs_tolerance;
  r.pass = std::isfinite(r.abs_error) && r.abs_error <= abs_tolerance;
  return r;
}

double mi_bruteforce(const std::vector<std::vector<double>>& cells) {
  const std::size_t rows = cells.size();
  const std::size_t cols = rows ? cells[0].size() : 0;
  std::vector<long double> row_sum(rows, 0.0L), col_sum(cols, 0.0L);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      row_sum[i] += cells[i][j];
      col_sum[j] += cells[i][j];
    }
  long double total = 0.0L;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      const long double p = cells[i][j];
      if (p == 0.0L || row_sum[i] == 0.0L || col_sum[j] == 0.0L) continue;
      total += p * std::log(p / (row_sum[i] * col_sum[j]));
    }
  return static_cast<double>(total);
}

FiniteDiff finite_diff(const std::function<double(std::span<const double>)>& objective, std::span<const double> x,
                       double step) {
  if (!(step > 0.0)) throw Error(ErrorKind::config, "finite-difference step must be positive");
  FiniteDiff out;
  std::vector<double> probe(x.begin(), x.end());
  out.gradient.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double up = objective(probe);
    probe[i] = x[i] - step;
    const double down = objective(probe);
    probe[i] = x[i];
    out.gradient[i] = (up - down) / (2.0 * step);
    if (!std::isfinite(up) || !std::isfinite(down)) out.flagged.push_back(i);
  }
  return out;
}

GradientCheck check_gradient(const std::function<double(std::span<const double>)>& objective,
                             std::span<const double> x, std::span<const double> analytic, double tolerance,
                             double step, double floor) {
  if (analytic.size() != x.size()) throw Error(ErrorKind::shape, "analytic gradient length differs from x");
  auto rel = [&](double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor}); };
  GradientCheck out;
  const auto fd = finite_diff(objective, x, step);
  for (std::size_t i = 0; i < x.size(); ++i) {
    double err = rel(analytic[i], fd.gradient[i]);
    if (!(err <= tolerance)) {
      // Retry one coordinate before declaring failure: central difference at
      // half the step (less truncation), then a five-point stencil at ten
      // times the step (less rounding noise on small entries).
      std::vector<double> probe(x.begin(), x.end());
      auto at = [&](double offset) {
        probe[i] = x[i] + offset;
        const double v = objective(probe);
        probe[i] = x[i];
        return v;
      };
      const double h = 0.5 * step;
      err = std::min(err, rel(analytic[i], (at(h) - at(-h)) / (2.0 * h)));
      const double w = 10.0 * step;
      const double five = (at(-2 * w) - 8 * at(-w) + 8 * at(w) - at(2 * w)) / (12.0 * w);
      err = std::min(err, rel(analytic[i], five));
    }
    if (!std::isfinite(err)) err = std::numeric_limits<double>::infinity();
    if (err > out.max_rel_error) {
      out.max_rel_error = err;
      out.worst_coordinate = i;
    }
    if (!(err <= tolerance)) out.failed.push_back(i);
  }
  for (auto i : fd.flagged)
    if (std::find(out.failed.begin(), out.failed.end(), i) == out.failed.end()) out.failed.push_back(i);
  out.pass = out.failed.empty();
  return out;
}

namespace {

struct Row {
  int group;
  int label;
  int pred;
};

Dataset witness_dataset(const std::vector<Row>& rows, std::size_t num_groups, std::size_t num_classes,
                        std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix x(static_cast<Eigen::Index>(rows.size()), 2);
  std::vector<int> codes, labels;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    x(static_cast<Eigen::Index>(r), 0) = gauss(rng);
    x(static_cast<Eigen::Index>(r), 1) = gauss(rng);
    codes.push_back(rows[r].group);
    labels.push_back(rows[r].label);
  }
  SensitiveAttribute attr{"g", {}};
  for (std::size_t g = 0; g < num_groups; ++g) attr.categories.push_back(std::to_string(g));
  std::vector<std::string> classes;
  for (std::size_t c = 0; c < num_classes; ++c) classes.push_back(std::to_string(c));
  return Dataset(std::move(x), {"w0", "w1"}, {0, 1}, std::move(codes), {attr}, std::move(labels), std::move(classes));
}

}  // namespace

Witness equivalence_witness(Notion notion, std::size_t num_groups, std::size_t num_classes, std::uint64_t seed,
                            std::size_t rows_per_group) {
  if (num_groups < 2 || num_classes < 2)
    throw Error(ErrorKind::config, "witnesses need at least 2 groups and 2 classes");
  std::mt19937_64 rng(seed);
  const int classes = static_cast<int>(num_classes);
  const int target = 1;
  auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto other_than = [&](int c) { return (c + uniform_int(1, classes - 1)) % classes; };

  // Shared blocks: the conditioned part of every group is an integer number
  // of copies of the same (label, prediction) pattern. label = -1 means
  // "draw a fresh label".
  std::vector<std::pair<int, int>> positive_block, negative_block, free_block;
  switch (notion) {
    case Notion::SP:
      for (int j = 0; j < 2 * classes; ++j) positive_block.emplace_back(-1, j % classes);
      break;
    case Notion::EO:
    case Notion::PE:
    case Notion::EOdds:
      for (int j = 0; j < classes; ++j) positive_block.emplace_back(target, j);
      for (int l = 0; l < classes; ++l)
        if (l != target)
          for (int j = 0; j < classes; ++j) negative_block.emplace_back(l, j);
      break;
    case Notion::OAE:
      // Correct, correct, correct, wrong: accuracy 3/4 in every group.
      for (int j = 0; j < 4; ++j) positive_block.emplace_back(-1, j < 3 ? 1 : 0);
      break;
  }
  if (notion == Notion::PE) std::swap(positive_block, negative_block);

  Witness w;
  w.notion = notion;
  w.class_index = target;
  w.block_rows = positive_block.size();
  w.requested_rows = rows_per_group;
  auto copies = [&](std::size_t block) -> std::size_t {
    if (rows_per_group == 0) return static_cast<std::size_t>(uniform_int(1, 3));
    std::size_t k = (rows_per_group + block - 1) / block;
    if (k * block != rows_per_group) w.adjusted = true;
    return k;
  };

  std::vector<Row> rows;
  for (std::size_t g = 0; g < num_groups; ++g) {
    const int grp = static_cast<int>(g);
    const std::size_t k = copies(positive_block.size());
    w.pattern_rows.push_back(k * positive_block.size());
    for (std::size_t c = 0; c < k; ++c)
      for (auto [label, pred] : positive_block) {
        if (notion == Notion::OAE) {
          int y = uniform_int(0, classes - 1);
          rows.push_back({grp, y, pred == 1 ? y : other_than(y)});
        } else {
          rows.push_back({grp, label < 0 ? uniform_int(0, classes - 1) : label, pred});
        }
      }
    if (notion == Notion::EOdds) {
      const std::size_t k0 = copies(negative_block.size());
      for (std::size_t c = 0; c < k0; ++c)
        for (auto [label, pred] : negative_block) rows.push_back({grp, label, pred});
    } else if (notion == Notion::EO || notion == Notion::PE) {
      // Unconstrained rows outside the condition, different in every group.
      const int extra = uniform_int(1, 3);
      for (int e = 0; e < extra; ++e) {
        int y = notion == Notion::EO ? other_than(target) : target;
        rows.push_back({grp, y, uniform_int(0, classes - 1)});
      }
    }
  }
  (void)free_block;

  std::vector<int> preds;
  for (const auto& r : rows) preds.push_back(r.pred);
  w.data = witness_dataset(rows, num_groups, num_classes, rng);
  w.pred = Prediction::one_hot(preds, num_classes);
  return w;
}

std::vector<std::size_t> perturbable_rows(const Witness& w) {
  std::vector<std::size_t> out;
  const auto& y = w.data.labels();
  for (std::size_t d = 0; d < y.size(); ++d) {
    bool relevant = true;
    if (w.notion == Notion::EO) relevant = y[d] == w.class_index;
    if (w.notion == Notion::PE) relevant = y[d] != w.class_index;
    if (relevant) out.push_back(d);
  }
  return out;
}

Prediction perturb(const Witness& w, std::size_t row) {
  std::vector<int> preds = w.pred.hard();
  const int classes = static_cast<int>(w.pred.num_classes());
  const int y = w.data.labels().at(row);
  if (w.notion == Notion::OAE)
    preds[row] = preds[row] == y ? (y + 1) % classes : y;
  else
    preds[row] = (preds[row] + 1) % classes;
  return Prediction::one_hot(preds, w.pred.num_classes());
}

namespace {

// Largest difference between groups of P(B = b | A = a, condition) over hard
// benefit values; the classical gap, generalised to any class count.
double max_conditional_gap(const Witness& w, const Prediction& pred) {
  const auto groups = enumerate_subgroups(w.data);
  const auto& y = w.data.labels();
  const int classes = static_cast<int>(pred.num_classes());
  std::vector<std::vector<bool>> conditions;
  std::vector<bool> all(y.size(), true), pos(y.size()), neg(y.size());
  for (std::size_t d = 0; d < y.size(); ++d) {
    pos[d] = y[d] == w.class_index;
    neg[d] = !pos[d];
  }
  switch (w.notion) {
    case Notion::SP:
    case Notion::OAE: conditions = {all}; break;
    case Notion::EO: conditions = {pos}; break;
    case Notion::PE: conditions = {neg}; break;
    case Notion::EOdds: conditions = {pos, neg}; break;
  }
  const int benefits = w.notion == Notion::OAE ? 2 : classes;
  double gap = 0.0;
  for (const auto& mask : conditions) {
    std::vector<std::vector<double>> tally(groups.size(), std::vector<double>(static_cast<std::size_t>(benefits), 0.0));
    std::vector<double> totals(groups.size(), 0.0);
    for (std::size_t d = 0; d < y.size(); ++d) {
      if (!mask[d]) continue;
      const int b = w.notion == Notion::OAE ? (pred.hard()[d] == y[d] ? 1 : 0) : pred.hard()[d];
      tally[static_cast<std::size_t>(groups.row_group[d])][static_cast<std::size_t>(b)] += 1.0;
      totals[static_cast<std::size_t>(groups.row_group[d])] += 1.0;
    }
    for (std::size_t a = 0; a < groups.size(); ++a)
      for (std::size_t c = a + 1; c < groups.size(); ++c) {
        if (totals[a] == 0.0 || totals[c] == 0.0) continue;
        for (int b = 0; b < benefits; ++b)
          gap = std::max(gap, std::abs(tally[a][static_cast<std::size_t>(b)] / totals[a] -
                                       tally[c][static_cast<std::size_t>(b)] / totals[c]));
      }
  }
  return gap;
}

std::string fmt(double v) { return detail::format_double(v); }

void note(Battery& b, const std::string& message) {
  ++b.failures;
  if (b.messages.size() < 8) b.messages.push_back(message);
}

}  // namespace

Battery mi_agreement_battery(std::uint64_t seed, std::size_t tables) {
  Battery b{"mi-agreement", 0, 0, 0.0, 1e-12, {}};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> rows_dist(1, 8), cols_dist(1, 4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double shapes[] = {0.3, 1.0, 3.0};
  for (std::size_t t = 0; t < tables; ++t) {
    const int rows = rows_dist(rng), cols = cols_dist(rng);
    std::gamma_distribution<double> gamma(shapes[t % 3], 1.0);
    const bool sparse = unit(rng) < 0.25;
    std::vector<std::vector<double>> cells(static_cast<std::size_t>(rows), std::vector<double>(static_cast<std::size_t>(cols)));
    double total = 0.0;
    for (auto& row : cells)
      for (auto& c : row) {
        c = (sparse && unit(rng) < 0.4) ? 0.0 : gamma(rng);
        total += c;
      }
    if (total == 0.0) {
      cells[0][0] = 1.0;
      total = 1.0;
    }
    EmpiricalJoint j;
    j.joint.resize(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        cells[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] /= total;
        j.joint(r, c) = cells[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      }
    j.group_marginal = j.joint.rowwise().sum();
    j.benefit_marginal = j.joint.colwise().sum().transpose();
    j.effective_count = 1.0;
    const auto cmp = compare(mi_bruteforce(cells), mutual_information(j), b.tolerance);
    ++b.checks;
    b.worst = std::max(b.worst, cmp.abs_error);
    if (!cmp.pass)
      note(b, "table " + std::to_string(t) + " (" + std::to_string(rows) + "x" + std::to_string(cols) +
                  "): oracle " + fmt(cmp.oracle) + " vs " + fmt(cmp.target));
  }
  return b;
}

namespace {

struct SmallInstance {
  Matrix features;
  std::vector<int> labels;
  std::vector<int> groups;
  std::size_t num_groups = 0;
  std::size_t num_classes = 0;
};

SmallInstance small_instance(std::mt19937_64& rng, std::size_t max_rows, std::size_t max_features,
                             std::size_t min_rows) {
  SmallInstance s;
  std::uniform_int_distribution<std::size_t> rows_dist(min_rows, max_rows), feat_dist(2, max_features);
  s.num_classes = std::uniform_int_distribution<std::size_t>(2, 3)(rng);
  s.num_groups = std::uniform_int_distribution<std::size_t>(2, 4)(rng);
  const std::size_t rows = std::max(rows_dist(rng), s.num_classes + s.num_groups);
  s.features.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(feat_dist(rng)));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (Eigen::Index i = 0; i < s.features.size(); ++i) s.features.data()[i] = gauss(rng);
  std::uniform_int_distribution<int> cls(0, static_cast<int>(s.num_classes) - 1), grp(0, static_cast<int>(s.num_groups) - 1);
  for (std::size_t d = 0; d < rows; ++d) {
    // Every class and group appears at least once.
    s.labels.push_back(d < s.num_classes ? static_cast<int>(d) : cls(rng));
    s.groups.push_back(d < s.num_groups ? static_cast<int>(d) : grp(rng));
  }
  std::shuffle(s.groups.begin(), s.groups.end(), rng);
  return s;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    auto e = (logits.row(r).array() - logits.row(r).maxCoeff()).exp();
    p.row(r) = e / e.sum();
  }
  return p;
}

double min_abs_preactivation(const ModelParams& params, const Matrix& features) {
  double m = std::numeric_limits<double>::infinity();
  Matrix a = features;
  for (std::size_t l = 0; l + 1 < params.layers.size(); ++l) {
    Matrix z = (a * params.layers[l].weight).rowwise() + params.layers[l].bias.transpose();
    m = std::min(m, z.cwiseAbs().minCoeff());
    a = z.cwiseMax(0.0);
  }
  return m;
}

FairnessNotion notion_for(Notion n, std::size_t classes) {
  FairnessNotion f;
  f.tag = n;
  if (classes > 2) f.class_index = 1;
  if (n == Notion::EOdds) {
    f.lambda0 = 0.7;
    f.lambda1 = 1.3;
  }
  return f;
}

}  // namespace

Battery regularizer_gradient_battery(std::uint64_t seed, std::size_t instances) {
  Battery b{"regularizer-gradient", 0, 0, 0.0, 1e-6, {}};
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < instances; ++i) {
    auto inst = small_instance(rng, 40, 2, 40);
    std::normal_distribution<double> gauss(0.0, 1.5);
    Matrix logits(inst.features.rows(), static_cast<Eigen::Index>(inst.num_classes));
    for (Eigen::Index k = 0; k < logits.size(); ++k) logits.data()[k] = gauss(rng);
    for (Notion n : kAllNotions) {
      const auto notion = notion_for(n, inst.num_classes);
      const Matrix p = softmax_rows(logits);
      const auto reg = regularizer(notion, inst.groups, inst.num_groups, inst.labels, p);
      // Chain through the softmax: dz = p * (g - <p, g>).
      std::vector<double> analytic;
      for (Eigen::Index r = 0; r < p.rows(); ++r) {
        const double inner = p.row(r).dot(reg.grad.row(r));
        for (Eigen::Index c = 0; c < p.cols(); ++c) analytic.push_back(p(r, c) * (reg.grad(r, c) - inner));
      }
      std::vector<double> x(logits.data(), logits.data() + logits.size());
      auto objective = [&](std::span<const double> z) {
        Matrix l = Eigen::Map<const Matrix>(z.data(), logits.rows(), logits.cols());
        return regularizer(notion, inst.groups, inst.num_groups, inst.labels, softmax_rows(l)).value;
      };
      // Entries go down to ~1e-5; at step 1e-5 cancellation noise in the MI
      // sum alone is ~1e-6 relative, so this battery differences at 1e-4.
      const auto check = check_gradient(objective, x, analytic, b.tolerance, 1e-4, 1e-6);
      ++b.checks;
      b.worst = std::max(b.worst, check.max_rel_error);
      if (!check.pass)
        note(b, "instance " + std::to_string(i) + " " + std::string(notion_name(n)) + ": max rel err " +
                    fmt(check.max_rel_error));
    }
  }
  return b;
}

Battery objective_gradient_battery(std::uint64_t seed, std::size_t instances) {
  Battery b{"objective-gradient", 0, 0, 0.0, 1e-4, {}};
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < instances; ++i) {
    auto inst = small_instance(rng, 10, 8, 4);
    std::vector<std::size_t> sizes{static_cast<std::size_t>(inst.features.cols())};
    if (i % 3 == 1) sizes.push_back(4);
    if (i % 3 == 2) {
      sizes.push_back(5);
      sizes.push_back(3);
    }
    sizes.push_back(inst.num_classes);
    // Redraw weights until no hidden unit sits near its ReLU kink, where the
    // central difference straddles the non-differentiable point.
    auto params0 = init_model(sizes, seed + i);
    for (std::uint64_t k = 1; k < 100 && min_abs_preactivation(params0, inst.features) < 1e-3; ++k)
      params0 = init_model(sizes, seed + i + k * 1000003);
    const double eta = std::uniform_real_distribution<double>(0.5, 5.0)(rng);
    for (Notion n : kAllNotions) {
      const auto notion = notion_for(n, inst.num_classes);
      const auto pass = forward_pass(params0, inst.features);
      Upstream up;
      up.prob_gradient = eta * regularizer(notion, inst.groups, inst.num_groups, inst.labels, pass.probs).grad;
      const auto analytic = backward(params0, pass, inst.labels, up).flatten();
      const auto x = params0.flatten();
      auto objective = [&](std::span<const double> theta) {
        ModelParams p;
        p.sizes = sizes;
        p.assign(theta);
        const Matrix probs = forward(p, inst.features);
        return cross_entropy(probs, inst.labels) +
               eta * regularizer(notion, inst.groups, inst.num_groups, inst.labels, probs).value;
      };
      const auto check = check_gradient(objective, x, analytic, b.tolerance, 1e-5, 1e-6);
      ++b.checks;
      b.worst = std::max(b.worst, check.max_rel_error);
      if (!check.pass)
        note(b, "instance " + std::to_string(i) + " " + std::string(notion_name(n)) + ": max rel err " +
                    fmt(check.max_rel_error) + " at coordinate " + std::to_string(check.worst_coordinate));
    }
  }
  return b;
}

Battery equivalence_battery(std::uint64_t seed) {
  Battery b{"equivalence", 0, 0, 0.0, 1e-12, {}};
  const std::pair<std::size_t, std::size_t> shapes[] = {{2, 2}, {4, 2}, {8, 2}, {3, 3}};
  for (Notion n : kAllNotions)
    for (auto [groups, classes] : shapes)
      for (std::uint64_t s = 0; s < 3; ++s) {
        const auto w = equivalence_witness(n, groups, classes, seed + s * 7919 + groups * 31 + classes);
        const auto idx = enumerate_subgroups(w.data);
        FairnessNotion notion{n, 1.0, 1.0, false, w.class_index};
        const std::string tag = std::string(notion_name(n)) + " |G|=" + std::to_string(groups) +
                                " C=" + std::to_string(classes) + " seed " + std::to_string(s);
        const double value = iota(notion, idx, w.data.labels(), w.pred).raw;
        const double gap = max_conditional_gap(w, w.pred);
        double baseline_gap = 0.0;
        for (PairwiseKind k : baselines_for(n))
          if (classes == 2 || k == PairwiseKind::OAE)
            baseline_gap = std::max(baseline_gap, pairwise_baseline(k, idx, w.data.labels(), w.pred).max_abs());
        ++b.checks;
        b.worst = std::max({b.worst, std::abs(value), gap, baseline_gap});
        if (!(std::abs(value) <= 1e-12) || gap > 1e-12 || baseline_gap > 1e-12)
          note(b, tag + ": witness iota " + fmt(value) + ", gap " + fmt(std::max(gap, baseline_gap)));

        const auto rows = perturbable_rows(w);
        for (std::size_t k = 0; k < rows.size(); k += std::max<std::size_t>(1, rows.size() / 6)) {
          const auto moved = perturb(w, rows[k]);
          const double perturbed = iota(notion, idx, w.data.labels(), moved).raw;
          ++b.checks;
          if (!(perturbed > 1e-9) || !(max_conditional_gap(w, moved) > 0.0))
            note(b, tag + ": perturbing row " + std::to_string(rows[k]) + " left iota at " + fmt(perturbed));
        }
      }
  return b;
}

bool Summary::pass() const noexcept {
  return !batteries.empty() && std::all_of(batteries.begin(), batteries.end(), [](const Battery& b) { return b.pass(); });
}

std::string Summary::text() const {
  std::ostringstream out;
  for (const auto& b : batteries) {
    out << (b.pass() ? "PASS " : "FAIL ") << b.name << " checks=" << b.checks << " failures=" << b.failures
        << " worst=" << fmt(b.worst) << " tolerance=" << fmt(b.tolerance) << '\n';
    for (const auto& m : b.messages) out << "  - " << m << '\n';
  }
  out << (pass() ? "selfcheck: all batteries passed\n" : "selfcheck: FAILED\n");
  return out.str();
}

Summary run_selfcheck(std::uint64_t seed) {
  Summary s;
  s.batteries.push_back(mi_agreement_battery(seed));
  s.batteries.push_back(regularizer_gradient_battery(seed + 1));
  s.batteries.push_back(objective_gradient_battery(seed + 2));
  s.batteries.push_back(equivalence_battery(seed + 3));
  return s;
}

}  // namespace mifair::verify
