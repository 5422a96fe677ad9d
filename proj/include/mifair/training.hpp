#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mifair/data.hpp"
#include "mifair/error.hpp"
#include "mifair/metrics.hpp"
#include "mifair/model.hpp"

namespace mifair {

enum class CoveragePolicy { error, skip };

struct LrStep {
  std::size_t epoch = 0;  // first epoch this rate applies to
  double rate = 0.1;
};

struct TrainConfig {
  FairnessNotion notion;
  double eta = 0.0;
  std::size_t epochs = 500;
  std::size_t batch_size = 0;  // 0 = full batch
  // Piecewise-constant schedule. Empty selects 0.1 for eta < 1, else 0.01.
  std::vector<LrStep> lr_schedule;
  double momentum = 0.8;
  double weight_decay = 0.1;  // L2 on weights, not biases
  std::uint64_t seed = 0;
  CoveragePolicy coverage = CoveragePolicy::skip;
  std::vector<std::size_t> hidden{16};
  bool evaluate_each_epoch = true;

  void validate() const;
  double learning_rate(std::size_t epoch) const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;       // mean cross-entropy
  double iota = 0.0;       // plug-in regularizer value
  double objective = 0.0;  // loss + eta * iota + decay/2 * |W|^2
  double train_acc = 0.0;
  std::optional<double> eval_acc;
  std::size_t skipped_steps = 0;  // regularizer steps dropped by the coverage policy
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
  std::optional<MetricsReport> final_report;
  std::vector<std::string> warnings;
};

/// Thrown when the objective stops being finite; carries the partial trace.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, TrainTrace trace)
      : Error(ErrorKind::divergence, what), trace_(std::move(trace)) {}
  const TrainTrace& trace() const noexcept { return trace_; }

 private:
  TrainTrace trace_;
};

struct RegularizerValue {
  double value = 0.0;
  Matrix grad;  // d value / d probs, same shape as probs
};

/// Plug-in MI of the notion's benefit variable over a batch and its exact
/// gradient w.r.t. the class probabilities. Group memberships are constants.
/// Throws Error(empty_condition) when a conditioned term selects no rows.
RegularizerValue regularizer(const FairnessNotion& notion, std::span<const int> group_ids, std::size_t num_groups,
                             std::span<const int> labels, const Matrix& probs);

struct TrainResult {
  ModelParams params;
  TrainTrace trace;
};

/// SGD with momentum on cross-entropy + eta * iota. `eval` may be null.
TrainResult train(const Dataset& train_set, const Dataset* eval_set, const TrainConfig& config);

/// loss + eta * iota + decay/2 * |W|^2 on a full dataset.
double composite_objective(const ModelParams& params, const Dataset& ds, const TrainConfig& config);

}  // namespace mifair
