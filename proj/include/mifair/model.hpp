#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mifair/data.hpp"

namespace mifair {

struct Layer {
  Matrix weight;  // fan_in x fan_out
  Vector bias;    // fan_out
};

/// Feed-forward softmax classifier: affine+ReLU hidden layers, affine+softmax
/// output. sizes = {inputs, hidden..., classes}; no hidden layer is logistic
/// regression.
struct ModelParams {
  std::vector<std::size_t> sizes;
  std::vector<Layer> layers;

  std::size_t parameter_count() const;
  std::vector<double> flatten() const;
  /// Inverse of flatten(); sizes must already be set.
  void assign(std::span<const double> flat);
  bool all_finite() const;
};

/// Same shapes as the owning ModelParams.
struct Gradients {
  std::vector<Layer> layers;

  std::vector<double> flatten() const;
};

/// Weights ~ N(0, 1/fan_in), zero biases.
ModelParams init_model(const std::vector<std::size_t>& sizes, std::uint64_t seed);

struct ForwardPass {
  std::vector<Matrix> activations;  // inputs followed by each hidden ReLU output
  Matrix logits;
  Matrix probs;
};

ForwardPass forward_pass(const ModelParams& params, const Matrix& features);
/// Softmax output rows.
Matrix forward(const ModelParams& params, const Matrix& features);

/// Extra terms entering the backward pass.
struct Upstream {
  // Per-row cross-entropy weights; empty means 1/N each (mean loss).
  std::vector<double> row_weights;
  // Gradient of an additional objective term w.r.t. the output probabilities.
  std::optional<Matrix> prob_gradient;
};

/// Weighted cross-entropy, log floored at 1e-12 inside the log.
double cross_entropy(const Matrix& probs, std::span<const int> labels, std::span<const double> row_weights = {});

/// Gradient of cross_entropy + (term whose prob-gradient is in `upstream`).
Gradients backward(const ModelParams& params, const ForwardPass& pass, std::span<const int> labels,
                   const Upstream& upstream = {});
Gradients backward(const ModelParams& params, const Matrix& features, std::span<const int> labels,
                   const Upstream& upstream = {});

/// Text checkpoint: magic line, sizes, one metadata line, then every
/// parameter in flatten() order at round-trip precision.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const std::string& metadata = {});
struct Checkpoint {
  ModelParams params;
  std::string metadata;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_text(const ModelParams& params, const std::string& metadata = {});

}  // namespace mifair
