#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mifair/data.hpp"
#include "mifair/metrics.hpp"
#include "mifair/training.hpp"

namespace mifair {

/// Learning-rate schedule used for one grid value instead of the base one.
struct EtaOverride {
  double eta = 0.0;
  std::vector<LrStep> lr_schedule;
};

struct SweepConfig {
  TrainConfig base;
  std::vector<double> etas;  // eta = 0 is added when missing
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  double threshold = 0.2;
  AssessOptions assess;
  std::size_t jobs = 0;  // 0 = MIFAIR_JOBS or hardware concurrency
  std::vector<EtaOverride> overrides;

  void validate() const;
  /// Sorted, deduplicated grid starting at 0.
  std::vector<double> grid() const;
  TrainConfig trial_config(double eta, std::uint64_t seed) const;
};

/// `points` values 10^lo .. 10^hi, evenly spaced in log10.
std::vector<double> log_grid(double log10_lo, double log10_hi, std::size_t points);

struct Trial {
  double eta = 0.0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  std::optional<MetricsReport> report;
  double final_loss = 0.0;
  double final_iota = 0.0;  // training-set regularizer value at the last epoch
};

/// One named scalar per trial; ordering is the column order of the outputs.
struct MetricColumn {
  std::string name;
  std::vector<std::optional<double>> values;  // one per trial, nullopt when undefined or failed
};

struct Aggregate {
  double eta = 0.0;
  std::size_t ok = 0;
  std::size_t failed = 0;
  std::vector<std::optional<double>> mean;    // per column
  std::vector<std::optional<double>> stddev;  // sample standard deviation, 0 for one value
};

struct Crossing {
  PairwiseKind kind = PairwiseKind::SPD;
  std::optional<double> eta;  // smallest grid eta whose per-pair means all satisfy |x| <= s
  std::size_t pairs = 0;      // pairs with a defined mean at that eta
};

struct SweepReport {
  SweepConfig config;
  std::vector<double> grid;
  std::vector<Trial> trials;  // grid-major, seeds in config order
  std::vector<MetricColumn> columns;
  std::vector<Aggregate> aggregates;  // one per grid value
  std::vector<Crossing> crossings;
  std::vector<std::string> group_labels;
  std::vector<std::size_t> group_counts;

  std::size_t failures() const;
  /// Index into `columns`, or -1.
  int column(const std::string& name) const;
  /// Per-eta mean of a column; nullopt where undefined.
  std::optional<double> mean_at(std::size_t grid_index, const std::string& name) const;
};

/// Column name used for a pairwise entry, e.g. "SPD[race=White|sex=Male;race=Non-White|sex=Male]".
std::string pair_column(PairwiseKind kind, const std::string& a, const std::string& b);

/// Runs |grid| x |seeds| trainings on fixed splits, evaluating on `eval`.
/// Failed trials are recorded and excluded from the aggregates.
SweepReport sweep(const SweepConfig& config, const Dataset& train_set, const Dataset& eval_set);

/// Recomputes columns, aggregates and crossings from `report.trials`.
void aggregate(SweepReport& report);

struct SweepFiles {
  std::filesystem::path trials, aggregates, summary;
};

/// trials.csv, aggregates.csv and summary.txt in `out_dir`.
SweepFiles emit_report(const SweepReport& report, const std::filesystem::path& out_dir);
std::string summary_text(const SweepReport& report);

/// Train (and optional eval) splits with encoding fitted on the train side.
struct PreparedData {
  Dataset train;
  Dataset test;
  Encoder encoder;
  std::size_t dropped_rows = 0;
};

struct RunConfig;
PreparedData prepare_data(const RunConfig& config);

/// trace.csv with one row per epoch.
std::string trace_csv(const TrainTrace& trace);

/// Worker count from an explicit request, MIFAIR_JOBS, or the hardware.
std::size_t resolve_jobs(std::size_t requested);

}  // namespace mifair
