#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mifair/data.hpp"

namespace mifair {

enum class Notion { SP, EO, PE, EOdds, OAE };

std::string_view notion_name(Notion notion) noexcept;
std::optional<Notion> parse_notion(std::string_view name) noexcept;
inline constexpr Notion kAllNotions[] = {Notion::SP, Notion::EO, Notion::PE, Notion::EOdds, Notion::OAE};

struct FairnessNotion {
  Notion tag = Notion::SP;
  double lambda0 = 1.0;  // EOdds weight on the Y != c part
  double lambda1 = 1.0;  // EOdds weight on the Y == c part
  bool normalize = false;
  // Class the separation notions condition on. Defaults to 1 for binary labels
  // and is required when there are more than two classes.
  std::optional<int> class_index;

  void validate() const;
};

/// Per-row class probabilities and their argmax (lowest index wins ties).
class Prediction {
 public:
  Prediction() = default;
  explicit Prediction(Matrix probs);
  static Prediction one_hot(std::span<const int> classes, std::size_t num_classes);

  std::size_t rows() const noexcept { return static_cast<std::size_t>(probs_.rows()); }
  std::size_t num_classes() const noexcept { return static_cast<std::size_t>(probs_.cols()); }
  const Matrix& probs() const noexcept { return probs_; }
  const std::vector<int>& hard() const noexcept { return hard_; }
  /// Degenerate copy whose rows are the one-hot argmax labels.
  Prediction hardened() const;

 private:
  Matrix probs_;
  std::vector<int> hard_;
};

/// One MI term of a notion: weight * I(A; B | mask).
struct BenefitComponent {
  double weight = 1.0;
  Matrix probs;            // per-row distribution over the benefit values
  std::vector<bool> mask;  // rows entering the estimate
  std::string condition;   // human-readable conditioning event, empty if none
};

/// Decomposes a notion into its benefit terms. SP/EO/PE/OAE yield one term,
/// EOdds yields the Y != c term followed by the Y == c term.
std::vector<BenefitComponent> benefit_components(const FairnessNotion& notion, const Prediction& pred,
                                                 std::span<const int> labels);

/// Single-term notions only; EOdds throws Error(config).
BenefitComponent benefit_distribution(const FairnessNotion& notion, const Prediction& pred,
                                      std::span<const int> labels);

struct IotaValue {
  double raw = 0.0;
  std::optional<double> normalized;
};

IotaValue iota(const FairnessNotion& notion, const SubgroupIndex& groups, std::span<const int> labels,
               const Prediction& pred);
IotaValue iota(const FairnessNotion& notion, const Dataset& ds, const Prediction& pred);

/// I(A; B | Y = c) for every class c, the "equal across all classes" reading
/// of the separation notions for multiclass labels. Classes with no rows
/// come back empty.
std::vector<std::optional<double>> iota_per_class(const SubgroupIndex& groups, std::span<const int> labels,
                                                  const Prediction& pred);

/// SPD/EOD/PED use the positive class 1; PED is the predictive-equality
/// (false positive rate) difference. OAE differences accuracies.
enum class PairwiseKind { SPD, EOD, PED, OAE };
std::string_view pairwise_name(PairwiseKind kind) noexcept;
inline constexpr PairwiseKind kAllPairwise[] = {PairwiseKind::SPD, PairwiseKind::EOD, PairwiseKind::PED,
                                                PairwiseKind::OAE};

struct PairwiseEntry {
  std::size_t a = 0;
  std::size_t b = 0;
  std::optional<double> value;  // empty when either group lacks relevant rows
};

struct PairwiseTable {
  PairwiseKind kind = PairwiseKind::SPD;
  std::vector<std::optional<double>> rates;  // per-group conditional rate
  std::vector<PairwiseEntry> entries;        // every ordered pair a != b, row-major

  std::optional<double> at(std::size_t a, std::size_t b) const;
  /// Largest |value| among defined entries (0 when none are defined).
  double max_abs() const;
};

PairwiseTable pairwise_baseline(PairwiseKind kind, const SubgroupIndex& groups, std::span<const int> labels,
                                const Prediction& pred);

double ddp(const SubgroupIndex& groups, const Prediction& pred);

struct Accuracies {
  double mean = 0.0;
  double weighted = 0.0;
};
Accuracies accuracies(const SubgroupIndex& groups, std::span<const int> labels, const Prediction& pred);

struct IotaRecord {
  Notion notion;
  std::optional<IotaValue> value;  // empty when the condition set was empty
};

struct MetricsReport {
  std::vector<std::string> group_labels;
  std::vector<std::size_t> group_counts;
  std::vector<IotaRecord> iotas;
  std::vector<PairwiseTable> tables;
  std::optional<double> ddp;
  double acc_mean = 0.0;
  double acc_weighted = 0.0;

  const PairwiseTable* table(PairwiseKind kind) const;
  const IotaRecord* find_iota(Notion notion) const;
};

struct AssessOptions {
  std::vector<Notion> notions{std::begin(kAllNotions), std::end(kAllNotions)};
  bool normalize = false;
  bool hard = false;  // evaluate iota on one-hot argmax rows
  double lambda0 = 1.0;
  double lambda1 = 1.0;
  std::optional<int> class_index;
};

/// Full metric battery. Binary-only quantities (SPD/EOD/PED/DDP) are skipped
/// for multiclass labels.
MetricsReport assess(const Dataset& ds, const Prediction& pred, const AssessOptions& options = {});

/// Pairwise tables that witness each notion: SP->SPD, EO->EOD, PE->PED,
/// EOdds->EOD+PED, OAE->OAE.
std::vector<PairwiseKind> baselines_for(Notion notion);

/// True when every defined entry of the tables matching `notions` satisfies
/// |value| <= threshold. Falls back to all tables when none match.
bool within_threshold(const MetricsReport& report, std::span<const Notion> notions, double threshold);

/// Flat records: metric,group_a,group_b,value ("NA" for undefined).
std::string report_csv(const MetricsReport& report);
void write_report(const MetricsReport& report, const std::filesystem::path& path);

}  // namespace mifair
