#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mifair/data.hpp"
#include "mifair/metrics.hpp"

namespace mifair::verify {

/// Oracle value vs. implementation value under a stated tolerance.
struct OracleResult {
  double oracle = 0.0;
  double target = 0.0;
  double abs_error = 0.0;
  double rel_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

OracleResult compare(double oracle, double target, double abs_tolerance);

/// Reference MI by direct double loop in long double. Shares no code with
/// the estimation module.
double mi_bruteforce(const std::vector<std::vector<double>>& cells);

struct FiniteDiff {
  std::vector<double> gradient;
  std::vector<std::size_t> flagged;  // coordinates where the objective was not finite
};

/// Central differences, one coordinate at a time.
FiniteDiff finite_diff(const std::function<double(std::span<const double>)>& objective, std::span<const double> x,
                       double step = 1e-5);

struct GradientCheck {
  double max_rel_error = 0.0;
  std::size_t worst_coordinate = 0;
  std::vector<std::size_t> failed;
  bool pass = false;
};

/// Relative error |a - n| / max(|a|, |n|, floor) per coordinate. A failing
/// coordinate is retried with half the step and with a five-point stencil at
/// ten times the step before it counts as failed.
GradientCheck check_gradient(const std::function<double(std::span<const double>)>& objective,
                             std::span<const double> x, std::span<const double> analytic, double tolerance,
                             double step = 1e-5, double floor = 1e-6);

/// Dataset plus one-hot predictions whose per-group conditional
/// distributions agree exactly for the requested notion.
struct Witness {
  Dataset data;
  Prediction pred;
  Notion notion = Notion::SP;
  int class_index = 1;
  std::size_t block_rows = 0;            // rows of the shared pattern per block
  std::size_t requested_rows = 0;        // pattern rows per group asked for (0 = seeded)
  std::vector<std::size_t> pattern_rows; // pattern rows actually used, per group
  bool adjusted = false;                 // request rounded up to a whole number of blocks
};

/// `rows_per_group` = 0 draws 1-3 blocks per group from the seed; otherwise
/// it is rounded up to a multiple of the block size.
Witness equivalence_witness(Notion notion, std::size_t num_groups, std::size_t num_classes, std::uint64_t seed,
                            std::size_t rows_per_group = 0);

/// Rows whose prediction enters the notion's benefit.
std::vector<std::size_t> perturbable_rows(const Witness& w);
/// Copy of the witness predictions with row `row` changed so its benefit changes.
Prediction perturb(const Witness& w, std::size_t row);

struct Battery {
  std::string name;
  std::size_t checks = 0;
  std::size_t failures = 0;
  double worst = 0.0;
  double tolerance = 0.0;
  std::vector<std::string> messages;

  bool pass() const noexcept { return checks > 0 && failures == 0; }
};

struct Summary {
  std::vector<Battery> batteries;

  bool pass() const noexcept;
  std::string text() const;
};

/// MI agreement, regularizer and composite-objective gradients, and the
/// zero-MI equivalence witnesses.
Summary run_selfcheck(std::uint64_t seed = 20240601);

Battery mi_agreement_battery(std::uint64_t seed, std::size_t tables = 500);
Battery regularizer_gradient_battery(std::uint64_t seed, std::size_t instances = 20);
Battery objective_gradient_battery(std::uint64_t seed, std::size_t instances = 20);
Battery equivalence_battery(std::uint64_t seed);

}  // namespace mifair::verify
