#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mifair/data.hpp"

namespace mifair {

/// Plug-in distribution over (subgroup, benefit) cells.
struct EmpiricalJoint {
  Matrix joint;          // |G| x |B|
  Vector group_marginal;    // row sums
  Vector benefit_marginal;  // column sums
  double effective_count = 0.0;

  std::size_t num_groups() const noexcept { return static_cast<std::size_t>(joint.rows()); }
  std::size_t num_benefits() const noexcept { return static_cast<std::size_t>(joint.cols()); }

  /// Additive smoothing: every cell gets `epsilon` mass before renormalising.
  /// Off by default everywhere; it biases the estimator.
  EmpiricalJoint smoothed(double epsilon) const;
};

/// Tallies hard benefit codes. `num_groups` fixes the table height so groups
/// absent from the rows still occupy (empty) rows.
EmpiricalJoint joint_hard(std::span<const int> group_ids, std::span<const int> benefit,
                          std::size_t num_groups, std::size_t num_benefit_values);

/// Soft tallies: joint(a, b) = (1/M) sum_d 1{a_d = a} p_d(b).
EmpiricalJoint joint_soft(std::span<const int> group_ids, const Matrix& benefit_probs,
                          std::size_t num_groups);

/// Mutual information in nats with 0 log 0 = 0; tiny negative round-off is
/// clamped to zero.
double mutual_information(const EmpiricalJoint& j);

/// Shannon entropy in nats.
double entropy(std::span<const double> distribution);
double entropy(const Vector& distribution);

/// MI of the soft joint over the rows selected by `condition_mask`.
/// Throws Error(empty_condition) when the mask selects nothing.
double conditional_mi(std::span<const int> group_ids, const Matrix& benefit_probs,
                      const std::vector<bool>& condition_mask, std::size_t num_groups);

}  // namespace mifair
