#include "mifair/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "io_util.hpp"
#include "mifair/error.hpp"
#include "mifair/estimation.hpp"

namespace mifair {

namespace {

constexpr double kEntropyFloor = 1e-12;

int resolve_class_index(const FairnessNotion& notion, std::size_t num_classes) {
  if (num_classes == 2 && !notion.class_index) return 1;
  if (!notion.class_index)
    throw Error(ErrorKind::config, std::string(notion_name(notion.tag)) + " with " + std::to_string(num_classes) +
                                       " classes needs an explicit class index");
  int c = *notion.class_index;
  if (c < 0 || static_cast<std::size_t>(c) >= num_classes)
    throw Error(ErrorKind::config, "class index " + std::to_string(c) + " out of range");
  return c;
}

void check_aligned(const Prediction& pred, std::span<const int> labels) {
  if (pred.rows() != labels.size()) throw Error(ErrorKind::shape, "predictions and labels are not row-aligned");
}

BenefitComponent conditioned(const Prediction& pred, std::span<const int> labels, int c, bool equal,
                             double weight) {
  BenefitComponent out;
  out.weight = weight;
  out.probs = pred.probs();
  out.mask.resize(labels.size());
  for (std::size_t d = 0; d < labels.size(); ++d) out.mask[d] = equal ? labels[d] == c : labels[d] != c;
  out.condition = (equal ? "Y=" : "Y!=") + std::to_string(c);
  return out;
}

}  // namespace

std::string_view notion_name(Notion notion) noexcept {
  switch (notion) {
    case Notion::SP: return "SP";
    case Notion::EO: return "EO";
    case Notion::PE: return "PE";
    case Notion::EOdds: return "EOdds";
    case Notion::OAE: return "OAE";
  }
  return "?";
}

std::optional<Notion> parse_notion(std::string_view name) noexcept {
  for (Notion n : kAllNotions)
    if (notion_name(n) == name) return n;
  return std::nullopt;
}

void FairnessNotion::validate() const {
  if (tag == Notion::EOdds && !(lambda0 > 0.0 && lambda1 > 0.0))
    throw Error(ErrorKind::config, "EOdds weights must both be positive");
  if (class_index && *class_index < 0) throw Error(ErrorKind::config, "class index must be non-negative");
}

Prediction::Prediction(Matrix probs) : probs_(std::move(probs)) {
  if (probs_.cols() < 2) throw Error(ErrorKind::shape, "predictions need at least 2 classes");
  hard_.resize(static_cast<std::size_t>(probs_.rows()));
  for (Eigen::Index r = 0; r < probs_.rows(); ++r) {
    auto row = probs_.row(r);
    if (!row.allFinite() || std::abs(row.sum() - 1.0) > 1e-6 || row.minCoeff() < 0.0)
      throw Error(ErrorKind::value, "prediction row " + std::to_string(r) + " is not a probability distribution");
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;
    hard_[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
}

Prediction Prediction::one_hot(std::span<const int> classes, std::size_t num_classes) {
  Matrix p = Matrix::Zero(static_cast<Eigen::Index>(classes.size()), static_cast<Eigen::Index>(num_classes));
  for (std::size_t d = 0; d < classes.size(); ++d) {
    if (classes[d] < 0 || static_cast<std::size_t>(classes[d]) >= num_classes)
      throw Error(ErrorKind::value, "class code out of range at row " + std::to_string(d));
    p(static_cast<Eigen::Index>(d), classes[d]) = 1.0;
  }
  return Prediction(std::move(p));
}

Prediction Prediction::hardened() const { return one_hot(hard_, num_classes()); }

std::vector<BenefitComponent> benefit_components(const FairnessNotion& notion, const Prediction& pred,
                                                 std::span<const int> labels) {
  notion.validate();
  check_aligned(pred, labels);
  std::vector<BenefitComponent> out;
  switch (notion.tag) {
    case Notion::SP: {
      BenefitComponent c;
      c.probs = pred.probs();
      c.mask.assign(labels.size(), true);
      out.push_back(std::move(c));
      break;
    }
    case Notion::EO:
      out.push_back(conditioned(pred, labels, resolve_class_index(notion, pred.num_classes()), true, 1.0));
      break;
    case Notion::PE:
      out.push_back(conditioned(pred, labels, resolve_class_index(notion, pred.num_classes()), false, 1.0));
      break;
    case Notion::EOdds: {
      int c = resolve_class_index(notion, pred.num_classes());
      out.push_back(conditioned(pred, labels, c, false, notion.lambda0));
      out.push_back(conditioned(pred, labels, c, true, notion.lambda1));
      break;
    }
    case Notion::OAE: {
      BenefitComponent c;
      c.probs.resize(static_cast<Eigen::Index>(labels.size()), 2);
      for (std::size_t d = 0; d < labels.size(); ++d) {
        if (labels[d] < 0 || static_cast<std::size_t>(labels[d]) >= pred.num_classes())
          throw Error(ErrorKind::value, "label out of range at row " + std::to_string(d));
        double correct = pred.probs()(static_cast<Eigen::Index>(d), labels[d]);
        c.probs(static_cast<Eigen::Index>(d), 1) = correct;
        c.probs(static_cast<Eigen::Index>(d), 0) = 1.0 - correct;
      }
      c.mask.assign(labels.size(), true);
      out.push_back(std::move(c));
      break;
    }
  }
  return out;
}

BenefitComponent benefit_distribution(const FairnessNotion& notion, const Prediction& pred,
                                      std::span<const int> labels) {
  if (notion.tag == Notion::EOdds)
    throw Error(ErrorKind::config, "EOdds has two benefit terms; use benefit_components");
  return std::move(benefit_components(notion, pred, labels).front());
}

IotaValue iota(const FairnessNotion& notion, const SubgroupIndex& groups, std::span<const int> labels,
               const Prediction& pred) {
  if (groups.row_group.size() != labels.size()) throw Error(ErrorKind::shape, "subgroup index is not row-aligned");
  IotaValue out;
  double normalized = 0.0, weights = 0.0;
  bool normalizable = true;
  for (const auto& comp : benefit_components(notion, pred, labels)) {
    std::vector<int> ids;
    std::vector<Eigen::Index> keep;
    for (std::size_t d = 0; d < comp.mask.size(); ++d)
      if (comp.mask[d]) {
        ids.push_back(groups.row_group[d]);
        keep.push_back(static_cast<Eigen::Index>(d));
      }
    if (ids.empty())
      throw Error(ErrorKind::empty_condition, std::string(notion_name(notion.tag)) + ": no rows with " + comp.condition);
    Matrix rows(static_cast<Eigen::Index>(keep.size()), comp.probs.cols());
    for (std::size_t i = 0; i < keep.size(); ++i) rows.row(static_cast<Eigen::Index>(i)) = comp.probs.row(keep[i]);
    auto joint = joint_soft(ids, rows, groups.size());
    double mi = mutual_information(joint);
    out.raw += comp.weight * mi;
    if (notion.normalize) {
      double h = entropy(joint.benefit_marginal);
      if (h > kEntropyFloor) {
        normalized += comp.weight * mi / h;
        weights += comp.weight;
      } else {
        normalizable = false;
      }
    }
  }
  if (notion.normalize && normalizable && weights > 0.0) out.normalized = normalized / weights;
  return out;
}

IotaValue iota(const FairnessNotion& notion, const Dataset& ds, const Prediction& pred) {
  return iota(notion, enumerate_subgroups(ds), ds.labels(), pred);
}

std::vector<std::optional<double>> iota_per_class(const SubgroupIndex& groups, std::span<const int> labels,
                                                  const Prediction& pred) {
  check_aligned(pred, labels);
  std::vector<std::optional<double>> out;
  for (std::size_t c = 0; c < pred.num_classes(); ++c) {
    std::vector<bool> mask(labels.size());
    bool any = false;
    for (std::size_t d = 0; d < labels.size(); ++d) {
      mask[d] = labels[d] == static_cast<int>(c);
      any = any || mask[d];
    }
    if (!any) {
      out.emplace_back();
      continue;
    }
    out.emplace_back(conditional_mi(groups.row_group, pred.probs(), mask, groups.size()));
  }
  return out;
}

std::string_view pairwise_name(PairwiseKind kind) noexcept {
  switch (kind) {
    case PairwiseKind::SPD: return "SPD";
    case PairwiseKind::EOD: return "EOD";
    case PairwiseKind::PED: return "PED";
    case PairwiseKind::OAE: return "OAE";
  }
  return "?";
}

std::optional<double> PairwiseTable::at(std::size_t a, std::size_t b) const {
  for (const auto& e : entries)
    if (e.a == a && e.b == b) return e.value;
  return std::nullopt;
}

double PairwiseTable::max_abs() const {
  double m = 0.0;
  for (const auto& e : entries)
    if (e.value) m = std::max(m, std::abs(*e.value));
  return m;
}

PairwiseTable pairwise_baseline(PairwiseKind kind, const SubgroupIndex& groups, std::span<const int> labels,
                                const Prediction& pred) {
  check_aligned(pred, labels);
  if (kind != PairwiseKind::OAE && pred.num_classes() != 2)
    throw Error(ErrorKind::config, std::string(pairwise_name(kind)) + " needs a binary prediction task");
  const std::size_t g = groups.size();
  std::vector<double> hits(g, 0.0), totals(g, 0.0);
  const auto& hard = pred.hard();
  for (std::size_t d = 0; d < labels.size(); ++d) {
    const auto grp = static_cast<std::size_t>(groups.row_group[d]);
    switch (kind) {
      case PairwiseKind::SPD:
        totals[grp] += 1.0;
        hits[grp] += hard[d] == 1 ? 1.0 : 0.0;
        break;
      case PairwiseKind::EOD:
        if (labels[d] == 1) {
          totals[grp] += 1.0;
          hits[grp] += hard[d] == 1 ? 1.0 : 0.0;
        }
        break;
      case PairwiseKind::PED:
        if (labels[d] == 0) {
          totals[grp] += 1.0;
          hits[grp] += hard[d] == 1 ? 1.0 : 0.0;
        }
        break;
      case PairwiseKind::OAE:
        totals[grp] += 1.0;
        hits[grp] += hard[d] == labels[d] ? 1.0 : 0.0;
        break;
    }
  }
  PairwiseTable table;
  table.kind = kind;
  for (std::size_t i = 0; i < g; ++i)
    table.rates.push_back(totals[i] > 0.0 ? std::optional<double>(hits[i] / totals[i]) : std::nullopt);
  for (std::size_t a = 0; a < g; ++a)
    for (std::size_t b = 0; b < g; ++b) {
      if (a == b) continue;
      PairwiseEntry e{a, b, std::nullopt};
      if (table.rates[a] && table.rates[b]) e.value = *table.rates[a] - *table.rates[b];
      table.entries.push_back(e);
    }
  return table;
}

double ddp(const SubgroupIndex& groups, const Prediction& pred) {
  if (pred.num_classes() != 2) throw Error(ErrorKind::config, "DDP needs a binary prediction task");
  if (groups.row_group.size() != pred.rows()) throw Error(ErrorKind::shape, "subgroup index is not row-aligned");
  std::vector<double> pos(groups.size(), 0.0), tot(groups.size(), 0.0);
  double all_pos = 0.0;
  for (std::size_t d = 0; d < pred.rows(); ++d) {
    const auto grp = static_cast<std::size_t>(groups.row_group[d]);
    tot[grp] += 1.0;
    if (pred.hard()[d] == 1) {
      pos[grp] += 1.0;
      all_pos += 1.0;
    }
  }
  const double overall = all_pos / static_cast<double>(pred.rows());
  double sum = 0.0;
  for (std::size_t i = 0; i < groups.size(); ++i)
    if (tot[i] > 0.0) sum += std::abs(pos[i] / tot[i] - overall);
  return sum;
}

Accuracies accuracies(const SubgroupIndex& groups, std::span<const int> labels, const Prediction& pred) {
  check_aligned(pred, labels);
  if (labels.empty()) throw Error(ErrorKind::empty_data, "no rows to score");
  std::vector<double> hit(groups.size(), 0.0), tot(groups.size(), 0.0);
  double all = 0.0;
  for (std::size_t d = 0; d < labels.size(); ++d) {
    const auto grp = static_cast<std::size_t>(groups.row_group[d]);
    tot[grp] += 1.0;
    if (pred.hard()[d] == labels[d]) {
      hit[grp] += 1.0;
      all += 1.0;
    }
  }
  Accuracies acc;
  acc.mean = all / static_cast<double>(labels.size());
  double sum = 0.0;
  std::size_t observed = 0;
  for (std::size_t i = 0; i < groups.size(); ++i)
    if (tot[i] > 0.0) {
      sum += hit[i] / tot[i];
      ++observed;
    }
  acc.weighted = observed ? sum / static_cast<double>(observed) : 0.0;
  return acc;
}

const PairwiseTable* MetricsReport::table(PairwiseKind kind) const {
  for (const auto& t : tables)
    if (t.kind == kind) return &t;
  return nullptr;
}

const IotaRecord* MetricsReport::find_iota(Notion notion) const {
  for (const auto& r : iotas)
    if (r.notion == notion) return &r;
  return nullptr;
}

MetricsReport assess(const Dataset& ds, const Prediction& pred, const AssessOptions& options) {
  if (pred.rows() != ds.rows())
    throw Error(ErrorKind::shape, "prediction rows (" + std::to_string(pred.rows()) + ") do not match data rows (" +
                                      std::to_string(ds.rows()) + ")");
  if (pred.num_classes() != ds.num_classes())
    throw Error(ErrorKind::shape, "prediction class count does not match the label's class list");
  const auto groups = enumerate_subgroups(ds);
  MetricsReport report;
  report.group_labels = groups.labels;
  report.group_counts = groups.counts;

  const Prediction scored = options.hard ? pred.hardened() : pred;
  for (Notion n : options.notions) {
    FairnessNotion notion{n, options.lambda0, options.lambda1, options.normalize, options.class_index};
    IotaRecord rec{n, std::nullopt};
    try {
      rec.value = iota(notion, groups, ds.labels(), scored);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::empty_condition && e.kind() != ErrorKind::config) throw;
    }
    report.iotas.push_back(rec);
  }

  const bool binary = ds.num_classes() == 2;
  for (PairwiseKind k : kAllPairwise)
    if (binary || k == PairwiseKind::OAE) report.tables.push_back(pairwise_baseline(k, groups, ds.labels(), pred));
  if (binary) report.ddp = ddp(groups, pred);
  auto acc = accuracies(groups, ds.labels(), pred);
  report.acc_mean = acc.mean;
  report.acc_weighted = acc.weighted;
  return report;
}

std::vector<PairwiseKind> baselines_for(Notion notion) {
  switch (notion) {
    case Notion::SP: return {PairwiseKind::SPD};
    case Notion::EO: return {PairwiseKind::EOD};
    case Notion::PE: return {PairwiseKind::PED};
    case Notion::EOdds: return {PairwiseKind::EOD, PairwiseKind::PED};
    case Notion::OAE: return {PairwiseKind::OAE};
  }
  return {};
}

bool within_threshold(const MetricsReport& report, std::span<const Notion> notions, double threshold) {
  std::vector<const PairwiseTable*> chosen;
  for (Notion n : notions)
    for (PairwiseKind k : baselines_for(n))
      if (const auto* t = report.table(k); t && std::find(chosen.begin(), chosen.end(), t) == chosen.end())
        chosen.push_back(t);
  if (chosen.empty())
    for (const auto& t : report.tables) chosen.push_back(&t);
  for (const auto* t : chosen)
    if (t->max_abs() > threshold) return false;
  return true;
}

std::string report_csv(const MetricsReport& report) {
  using detail::csv_cell;
  using detail::format_double;
  using detail::format_optional;
  std::ostringstream out;
  out << "metric,group_a,group_b,value\n";
  for (std::size_t g = 0; g < report.group_labels.size(); ++g)
    out << "count," << csv_cell(report.group_labels[g]) << ",," << report.group_counts[g] << '\n';
  for (const auto& rec : report.iotas) {
    const std::string name = "iota_" + std::string(notion_name(rec.notion));
    out << name << ",,," << format_optional(rec.value ? std::optional<double>(rec.value->raw) : std::nullopt) << '\n';
    if (rec.value && rec.value->normalized) out << name << "_normalized,,," << format_double(*rec.value->normalized) << '\n';
  }
  out << "ACC_mean,,," << format_double(report.acc_mean) << '\n';
  out << "ACC_weighted,,," << format_double(report.acc_weighted) << '\n';
  if (report.ddp) out << "DDP,,," << format_double(*report.ddp) << '\n';
  for (const auto& t : report.tables)
    for (const auto& e : t.entries)
      out << pairwise_name(t.kind) << ',' << csv_cell(report.group_labels[e.a]) << ','
          << csv_cell(report.group_labels[e.b]) << ',' << format_optional(e.value) << '\n';
  return out.str();
}

void write_report(const MetricsReport& report, const std::filesystem::path& path) {
  detail::write_text_file(path, report_csv(report));
}

}  // namespace mifair
