#include "mifair/estimation.hpp"

#include <cmath>
#include <string>

#include "mifair/error.hpp"

namespace mifair {

namespace {

constexpr double kNegativeClamp = 1e-12;

void check_groups(std::span<const int> group_ids, std::size_t num_groups) {
  for (std::size_t d = 0; d < group_ids.size(); ++d)
    if (group_ids[d] < 0 || static_cast<std::size_t>(group_ids[d]) >= num_groups)
      throw Error(ErrorKind::value, "group id out of range at row " + std::to_string(d));
}

void finish(EmpiricalJoint& j, double rows) {
  j.joint /= rows;
  j.group_marginal = j.joint.rowwise().sum();
  j.benefit_marginal = j.joint.colwise().sum().transpose();
  j.effective_count = rows;
}

}  // namespace

EmpiricalJoint EmpiricalJoint::smoothed(double epsilon) const {
  if (!(epsilon >= 0.0)) throw Error(ErrorKind::config, "smoothing epsilon must be non-negative");
  EmpiricalJoint out = *this;
  const double total = 1.0 + epsilon * static_cast<double>(joint.size());
  out.joint = (joint.array() + epsilon) / total;
  out.group_marginal = out.joint.rowwise().sum();
  out.benefit_marginal = out.joint.colwise().sum().transpose();
  return out;
}

EmpiricalJoint joint_hard(std::span<const int> group_ids, std::span<const int> benefit,
                          std::size_t num_groups, std::size_t num_benefit_values) {
  if (group_ids.empty()) throw Error(ErrorKind::empty_data, "cannot build a joint from zero rows");
  if (group_ids.size() != benefit.size())
    throw Error(ErrorKind::shape, "group ids and benefit codes differ in length");
  check_groups(group_ids, num_groups);
  EmpiricalJoint j;
  j.joint = Matrix::Zero(static_cast<Eigen::Index>(num_groups), static_cast<Eigen::Index>(num_benefit_values));
  for (std::size_t d = 0; d < group_ids.size(); ++d) {
    if (benefit[d] < 0 || static_cast<std::size_t>(benefit[d]) >= num_benefit_values)
      throw Error(ErrorKind::value, "benefit code out of range at row " + std::to_string(d));
    j.joint(group_ids[d], benefit[d]) += 1.0;
  }
  finish(j, static_cast<double>(group_ids.size()));
  return j;
}

EmpiricalJoint joint_soft(std::span<const int> group_ids, const Matrix& benefit_probs,
                          std::size_t num_groups) {
  if (group_ids.empty()) throw Error(ErrorKind::empty_data, "cannot build a joint from zero rows");
  if (group_ids.size() != static_cast<std::size_t>(benefit_probs.rows()))
    throw Error(ErrorKind::shape, "group ids and benefit rows differ in length");
  check_groups(group_ids, num_groups);
  EmpiricalJoint j;
  j.joint = Matrix::Zero(static_cast<Eigen::Index>(num_groups), benefit_probs.cols());
  for (std::size_t d = 0; d < group_ids.size(); ++d) {
    auto row = benefit_probs.row(static_cast<Eigen::Index>(d));
    double sum = row.sum();
    if (!(std::abs(sum - 1.0) <= 1e-6) || !(row.minCoeff() >= 0.0) || !(row.maxCoeff() <= 1.0))
      throw Error(ErrorKind::value, "benefit probabilities at row " + std::to_string(d) + " are not a distribution");
    j.joint.row(group_ids[d]) += row;
  }
  finish(j, static_cast<double>(group_ids.size()));
  return j;
}

double mutual_information(const EmpiricalJoint& j) {
  double mi = 0.0;
  for (Eigen::Index a = 0; a < j.joint.rows(); ++a) {
    const double pa = j.group_marginal[a];
    if (pa <= 0.0) continue;
    for (Eigen::Index b = 0; b < j.joint.cols(); ++b) {
      const double pab = j.joint(a, b);
      const double pb = j.benefit_marginal[b];
      if (pab <= 0.0 || pb <= 0.0) continue;
      mi += pab * std::log(pab / (pa * pb));
    }
  }
#ifdef MIFAIR_FAULT_MI_SIGN
  mi = -mi;
#endif
  if (mi < 0.0 && mi > -kNegativeClamp) mi = 0.0;
  return mi;
}

double entropy(std::span<const double> distribution) {
  double h = 0.0;
  for (double p : distribution)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

double entropy(const Vector& distribution) {
  return entropy(std::span<const double>(distribution.data(), static_cast<std::size_t>(distribution.size())));
}

double conditional_mi(std::span<const int> group_ids, const Matrix& benefit_probs,
                      const std::vector<bool>& condition_mask, std::size_t num_groups) {
  if (condition_mask.size() != group_ids.size() || group_ids.size() != static_cast<std::size_t>(benefit_probs.rows()))
    throw Error(ErrorKind::shape, "condition mask is not aligned with the rows");
  std::vector<int> ids;
  std::vector<Eigen::Index> keep;
  for (std::size_t d = 0; d < condition_mask.size(); ++d)
    if (condition_mask[d]) {
      ids.push_back(group_ids[d]);
      keep.push_back(static_cast<Eigen::Index>(d));
    }
  if (ids.empty()) throw Error(ErrorKind::empty_condition, "condition selects no rows");
  Matrix selected(static_cast<Eigen::Index>(keep.size()), benefit_probs.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) selected.row(static_cast<Eigen::Index>(i)) = benefit_probs.row(keep[i]);
  return mutual_information(joint_soft(ids, selected, num_groups));
}

}  // namespace mifair
