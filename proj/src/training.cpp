#include "mifair/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "mifair/estimation.hpp"

namespace mifair {

void TrainConfig::validate() const {
  notion.validate();
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw Error(ErrorKind::config, "eta must be a finite value >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorKind::config, "momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw Error(ErrorKind::config, "weight decay must be >= 0");
  if (epochs == 0) throw Error(ErrorKind::config, "epochs must be at least 1");
  for (auto h : hidden)
    if (h == 0) throw Error(ErrorKind::config, "hidden layer sizes must be at least 1");
  for (std::size_t i = 0; i < lr_schedule.size(); ++i) {
    if (!(lr_schedule[i].rate > 0.0)) throw Error(ErrorKind::config, "learning rates must be positive");
    if (i > 0 && lr_schedule[i].epoch <= lr_schedule[i - 1].epoch)
      throw Error(ErrorKind::config, "learning-rate schedule epochs must increase");
  }
}

double TrainConfig::learning_rate(std::size_t epoch) const {
  if (lr_schedule.empty()) return eta < 1.0 ? 1e-1 : 1e-2;
  double rate = lr_schedule.front().rate;
  for (const auto& step : lr_schedule)
    if (step.epoch <= epoch) rate = step.rate;
  return rate;
}

RegularizerValue regularizer(const FairnessNotion& notion, std::span<const int> group_ids, std::size_t num_groups,
                             std::span<const int> labels, const Matrix& probs) {
  if (group_ids.size() != labels.size() || labels.size() != static_cast<std::size_t>(probs.rows()))
    throw Error(ErrorKind::shape, "regularizer inputs are not row-aligned");
  if (labels.empty()) throw Error(ErrorKind::empty_data, "regularizer called on an empty batch");
  const Prediction pred(probs);
  RegularizerValue out;
  out.grad = Matrix::Zero(probs.rows(), probs.cols());

  for (const auto& comp : benefit_components(notion, pred, labels)) {
    std::vector<int> ids;
    std::vector<Eigen::Index> rows;
    for (std::size_t d = 0; d < comp.mask.size(); ++d)
      if (comp.mask[d]) {
        ids.push_back(group_ids[d]);
        rows.push_back(static_cast<Eigen::Index>(d));
      }
    if (ids.empty())
      throw Error(ErrorKind::empty_condition, std::string(notion_name(notion.tag)) + " batch has no rows with " +
                                                  comp.condition);
    Matrix selected(static_cast<Eigen::Index>(rows.size()), comp.probs.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) selected.row(static_cast<Eigen::Index>(i)) = comp.probs.row(rows[i]);
    // A constant group attribute carries no information.
    if (num_groups <= 1) continue;
    const auto joint = joint_soft(ids, selected, num_groups);
    out.value += comp.weight * mutual_information(joint);

    // dI/dq_d(b) = (1/M) log(P(a_d, b) / P(b)); the group marginal is fixed
    // and the +1 terms from P log P and P_B log P_B cancel.
    Matrix log_ratio = Matrix::Zero(joint.joint.rows(), joint.joint.cols());
    for (Eigen::Index a = 0; a < joint.joint.rows(); ++a)
      for (Eigen::Index b = 0; b < joint.joint.cols(); ++b)
        if (joint.joint(a, b) > 0.0) log_ratio(a, b) = std::log(joint.joint(a, b) / joint.benefit_marginal[b]);
    const double scale = comp.weight / static_cast<double>(rows.size());

    for (std::size_t i = 0; i < rows.size(); ++i) {
      const Eigen::Index d = rows[i];
      auto g = log_ratio.row(ids[i]);
      if (notion.tag == Notion::OAE) {
        // q(1) = p(y_d), q(0) = 1 - p(y_d)
        out.grad(d, labels[static_cast<std::size_t>(d)]) += scale * (g[1] - g[0]);
      } else {
        out.grad.row(d) += scale * g;
      }
    }
  }
  return out;
}

namespace {

double weight_norm_sq(const ModelParams& params) {
  double s = 0.0;
  for (const auto& layer : params.layers) s += layer.weight.squaredNorm();
  return s;
}

double hard_accuracy(const Matrix& probs, std::span<const int> labels) {
  std::size_t hit = 0;
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < probs.cols(); ++c)
      if (probs(r, c) > probs(r, best)) best = c;
    hit += best == labels[static_cast<std::size_t>(r)];
  }
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

struct Batch {
  Matrix features;
  std::vector<int> labels;
  std::vector<int> groups;
};

}  // namespace

double composite_objective(const ModelParams& params, const Dataset& ds, const TrainConfig& config) {
  const auto groups = enumerate_subgroups(ds);
  const Matrix probs = forward(params, ds.features());
  double obj = cross_entropy(probs, ds.labels()) + 0.5 * config.weight_decay * weight_norm_sq(params);
  if (config.eta > 0.0)
    obj += config.eta * regularizer(config.notion, groups.row_group, groups.size(), ds.labels(), probs).value;
  return obj;
}

TrainResult train(const Dataset& train_set, const Dataset* eval_set, const TrainConfig& config) {
  config.validate();
  if (eval_set && (eval_set->num_features() != train_set.num_features() ||
                   eval_set->num_classes() != train_set.num_classes()))
    throw Error(ErrorKind::schema, "evaluation data is not schema-compatible with the training data");

  const auto groups = enumerate_subgroups(train_set);
  std::vector<std::size_t> sizes{train_set.num_features()};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(train_set.num_classes());

  TrainResult result;
  result.params = init_model(sizes, config.seed);
  ModelParams& params = result.params;
  std::vector<Layer> velocity;
  for (const auto& layer : params.layers)
    velocity.push_back({Matrix::Zero(layer.weight.rows(), layer.weight.cols()), Vector::Zero(layer.bias.size())});

  const std::size_t n = train_set.rows();
  const bool full_batch = config.batch_size == 0 || config.batch_size >= n;
  const std::size_t batch_size = full_batch ? n : config.batch_size;
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  auto make_batch = [&](std::size_t begin, std::size_t end) {
    Batch b;
    b.features.resize(static_cast<Eigen::Index>(end - begin), train_set.features().cols());
    for (std::size_t i = begin; i < end; ++i) {
      b.features.row(static_cast<Eigen::Index>(i - begin)) = train_set.features().row(static_cast<Eigen::Index>(order[i]));
      b.labels.push_back(train_set.labels()[order[i]]);
      b.groups.push_back(groups.row_group[order[i]]);
    }
    return b;
  };
  Batch full;
  if (full_batch) full = Batch{train_set.features(), train_set.labels(), groups.row_group};

  std::size_t total_skipped = 0;
  std::string last_skip_reason;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.learning_rate(epoch);
    if (!full_batch) std::shuffle(order.begin(), order.end(), rng);

    EpochRecord rec;
    rec.epoch = epoch;
    double loss_sum = 0.0, iota_sum = 0.0, acc_sum = 0.0, objective_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t begin = 0; begin < n; begin += batch_size) {
      const std::size_t end = std::min(n, begin + batch_size);
      Batch local;
      if (!full_batch) local = make_batch(begin, end);
      const Batch& batch = full_batch ? full : local;

      const auto pass = forward_pass(params, batch.features);
      if (!pass.probs.allFinite()) {
        rec.loss = rec.iota = rec.objective = std::numeric_limits<double>::quiet_NaN();
        result.trace.epochs.push_back(rec);
        throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + " (non-finite predictions)",
                               result.trace);
      }
      const double loss = cross_entropy(pass.probs, batch.labels);
      Upstream upstream;
      double iota_value = 0.0;
      const bool regularized = config.eta > 0.0;
      std::string skip_reason;
      if (regularized && !full_batch) {
        std::set<int> present(batch.groups.begin(), batch.groups.end());
        for (std::size_t g = 0; g < groups.size() && skip_reason.empty(); ++g)
          if (!present.count(static_cast<int>(g))) skip_reason = "batch lacks subgroup " + groups.labels[g];
      }
      if (skip_reason.empty()) {
        // Also evaluated at eta = 0 so vanilla traces carry the plug-in value.
        try {
          auto reg = regularizer(config.notion, batch.groups, groups.size(), batch.labels, pass.probs);
          iota_value = reg.value;
          if (regularized) upstream.prob_gradient = config.eta * reg.grad;
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::empty_condition) throw;
          if (regularized) skip_reason = e.what();
        }
      }
      if (!skip_reason.empty()) {
        if (config.coverage == CoveragePolicy::error) throw Error(ErrorKind::coverage, skip_reason);
        ++rec.skipped_steps;
        last_skip_reason = skip_reason;
      }
      loss_sum += loss;
      iota_sum += iota_value;
      objective_sum += loss + config.eta * iota_value + 0.5 * config.weight_decay * weight_norm_sq(params);
      acc_sum += hard_accuracy(pass.probs, batch.labels);
      ++steps;

      if (!std::isfinite(loss) || !std::isfinite(iota_value)) {
        rec.loss = loss;
        rec.iota = iota_value;
        rec.objective = loss + config.eta * iota_value;
        result.trace.epochs.push_back(rec);
        throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + " (non-finite objective)",
                               result.trace);
      }

      auto grads = backward(params, pass, batch.labels, upstream);
      for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto& layer = params.layers[l];
        grads.layers[l].weight += config.weight_decay * layer.weight;
        velocity[l].weight = config.momentum * velocity[l].weight + grads.layers[l].weight;
        velocity[l].bias = config.momentum * velocity[l].bias + grads.layers[l].bias;
        layer.weight -= lr * velocity[l].weight;
        layer.bias -= lr * velocity[l].bias;
      }
    }
    rec.loss = loss_sum / static_cast<double>(steps);
    rec.iota = iota_sum / static_cast<double>(steps);
    rec.train_acc = acc_sum / static_cast<double>(steps);
    rec.objective = objective_sum / static_cast<double>(steps);
    total_skipped += rec.skipped_steps;
    if (!params.all_finite()) {
      rec.objective = std::numeric_limits<double>::quiet_NaN();
      result.trace.epochs.push_back(rec);
      throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + " (non-finite parameters)",
                             result.trace);
    }
    if (eval_set && config.evaluate_each_epoch)
      rec.eval_acc = hard_accuracy(forward(params, eval_set->features()), eval_set->labels());
    result.trace.epochs.push_back(rec);
  }
  if (total_skipped > 0)
    result.trace.warnings.push_back("regularizer skipped in " + std::to_string(total_skipped) +
                                    " steps; last reason: " + last_skip_reason);

  const Dataset& scored = eval_set ? *eval_set : train_set;
  Prediction pred(forward(params, scored.features()));
  AssessOptions opts;
  opts.lambda0 = config.notion.lambda0;
  opts.lambda1 = config.notion.lambda1;
  opts.class_index = config.notion.class_index;
  opts.normalize = config.notion.normalize;
  result.trace.final_report = assess(scored, pred, opts);
  return result;
}

}  // namespace mifair
