#include "mifair/model.hpp"

#include <charconv>
#include <cmath>
#include <random>
#include <sstream>

#include "io_util.hpp"
#include "mifair/error.hpp"

namespace mifair {

namespace {

constexpr double kLogFloor = 1e-12;
constexpr const char* kCheckpointMagic = "mifair-checkpoint 1";

void check_sizes(const std::vector<std::size_t>& sizes) {
  if (sizes.size() < 2) throw Error(ErrorKind::config, "a model needs at least input and output sizes");
  for (auto s : sizes)
    if (s < 1) throw Error(ErrorKind::config, "layer sizes must be at least 1");
  if (sizes.back() < 2) throw Error(ErrorKind::config, "the output layer needs at least 2 classes");
}

}  // namespace

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) n += sizes[l] * sizes[l + 1] + sizes[l + 1];
  return n;
}

std::vector<double> ModelParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& layer : layers) {
    flat.insert(flat.end(), layer.weight.data(), layer.weight.data() + layer.weight.size());
    flat.insert(flat.end(), layer.bias.data(), layer.bias.data() + layer.bias.size());
  }
  return flat;
}

void ModelParams::assign(std::span<const double> flat) {
  check_sizes(sizes);
  if (flat.size() != parameter_count())
    throw Error(ErrorKind::shape, "flat parameter vector has " + std::to_string(flat.size()) + " entries, expected " +
                                      std::to_string(parameter_count()));
  layers.resize(sizes.size() - 1);
  std::size_t at = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    auto in = static_cast<Eigen::Index>(sizes[l]);
    auto out = static_cast<Eigen::Index>(sizes[l + 1]);
    layers[l].weight = Eigen::Map<const Matrix>(flat.data() + at, in, out);
    at += sizes[l] * sizes[l + 1];
    layers[l].bias = Eigen::Map<const Vector>(flat.data() + at, out);
    at += sizes[l + 1];
  }
}

bool ModelParams::all_finite() const {
  for (const auto& layer : layers)
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
  return true;
}

std::vector<double> Gradients::flatten() const {
  std::vector<double> flat;
  for (const auto& layer : layers) {
    flat.insert(flat.end(), layer.weight.data(), layer.weight.data() + layer.weight.size());
    flat.insert(flat.end(), layer.bias.data(), layer.bias.data() + layer.bias.size());
  }
  return flat;
}

ModelParams init_model(const std::vector<std::size_t>& sizes, std::uint64_t seed) {
  check_sizes(sizes);
  ModelParams params;
  params.sizes = sizes;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(sizes[l])));
    Layer layer;
    layer.weight.resize(static_cast<Eigen::Index>(sizes[l]), static_cast<Eigen::Index>(sizes[l + 1]));
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = gauss(rng);
    layer.bias = Vector::Zero(static_cast<Eigen::Index>(sizes[l + 1]));
    params.layers.push_back(std::move(layer));
  }
  return params;
}

ForwardPass forward_pass(const ModelParams& params, const Matrix& features) {
  if (params.layers.empty() || static_cast<std::size_t>(features.cols()) != params.sizes.front())
    throw Error(ErrorKind::shape, "feature width " + std::to_string(features.cols()) + " does not match model input " +
                                      std::to_string(params.sizes.empty() ? 0 : params.sizes.front()));
  if (!features.allFinite()) throw Error(ErrorKind::value, "non-finite model input");
  ForwardPass pass;
  pass.activations.push_back(features);
  for (std::size_t l = 0; l + 1 < params.layers.size(); ++l) {
    Matrix z = pass.activations.back() * params.layers[l].weight;
    z.rowwise() += params.layers[l].bias.transpose();
    pass.activations.push_back(z.cwiseMax(0.0));
  }
  pass.logits = pass.activations.back() * params.layers.back().weight;
  pass.logits.rowwise() += params.layers.back().bias.transpose();
  pass.probs.resize(pass.logits.rows(), pass.logits.cols());
  for (Eigen::Index r = 0; r < pass.logits.rows(); ++r) {
    auto e = (pass.logits.row(r).array() - pass.logits.row(r).maxCoeff()).exp();
    pass.probs.row(r) = e / e.sum();
  }
  return pass;
}

Matrix forward(const ModelParams& params, const Matrix& features) { return forward_pass(params, features).probs; }

double cross_entropy(const Matrix& probs, std::span<const int> labels, std::span<const double> row_weights) {
  if (static_cast<std::size_t>(probs.rows()) != labels.size())
    throw Error(ErrorKind::shape, "probabilities and labels differ in length");
  if (!row_weights.empty() && row_weights.size() != labels.size())
    throw Error(ErrorKind::shape, "row weights differ in length from labels");
  const double uniform = 1.0 / static_cast<double>(labels.size());
  double loss = 0.0;
  for (std::size_t d = 0; d < labels.size(); ++d) {
    double w = row_weights.empty() ? uniform : row_weights[d];
    loss -= w * std::log(std::max(probs(static_cast<Eigen::Index>(d), labels[d]), kLogFloor));
  }
  return loss;
}

Gradients backward(const ModelParams& params, const ForwardPass& pass, std::span<const int> labels,
                   const Upstream& upstream) {
  const Matrix& p = pass.probs;
  const auto n = p.rows();
  if (static_cast<std::size_t>(n) != labels.size()) throw Error(ErrorKind::shape, "labels do not match the batch");
  if (!upstream.row_weights.empty() && upstream.row_weights.size() != labels.size())
    throw Error(ErrorKind::shape, "row weights do not match the batch");
  if (upstream.prob_gradient && (upstream.prob_gradient->rows() != n || upstream.prob_gradient->cols() != p.cols()))
    throw Error(ErrorKind::shape, "probability gradient does not match the output shape");

  // d(loss)/d(logits). Cross-entropy in closed form; the extra term goes
  // through the softmax Jacobian: dz = p * (g - <p, g>).
  Matrix delta = Matrix::Zero(n, p.cols());
  const double uniform = 1.0 / static_cast<double>(n);
  for (Eigen::Index d = 0; d < n; ++d) {
    const int y = labels[static_cast<std::size_t>(d)];
    if (y < 0 || y >= p.cols()) throw Error(ErrorKind::value, "label out of range at row " + std::to_string(d));
    if (p(d, y) > kLogFloor) {
      double w = upstream.row_weights.empty() ? uniform : upstream.row_weights[static_cast<std::size_t>(d)];
      delta.row(d) = w * p.row(d);
      delta(d, y) -= w;
    }
  }
  if (upstream.prob_gradient) {
    const Matrix& g = *upstream.prob_gradient;
    for (Eigen::Index d = 0; d < n; ++d) {
      double inner = p.row(d).dot(g.row(d));
      delta.row(d).array() += p.row(d).array() * (g.row(d).array() - inner);
    }
  }

  Gradients grads;
  grads.layers.resize(params.layers.size());
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const Matrix& input = pass.activations[l];
    grads.layers[l].weight = input.transpose() * delta;
    grads.layers[l].bias = delta.colwise().sum().transpose();
    if (l > 0) {
      Matrix upstream_act = delta * params.layers[l].weight.transpose();
      delta = (input.array() > 0.0).select(upstream_act, 0.0);
    }
  }
  return grads;
}

Gradients backward(const ModelParams& params, const Matrix& features, std::span<const int> labels,
                   const Upstream& upstream) {
  return backward(params, forward_pass(params, features), labels, upstream);
}

std::string checkpoint_text(const ModelParams& params, const std::string& metadata) {
  if (metadata.find('\n') != std::string::npos)
    throw Error(ErrorKind::value, "checkpoint metadata must be a single line");
  std::ostringstream out;
  out << kCheckpointMagic << '\n' << "sizes";
  for (auto s : params.sizes) out << ' ' << s;
  out << '\n' << "metadata " << metadata << '\n';
  const auto flat = params.flatten();
  out << "params " << flat.size() << '\n';
  for (double v : flat) out << detail::format_double(v) << '\n';
  return out.str();
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const std::string& metadata) {
  detail::write_text_file(path, checkpoint_text(params, metadata));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::istringstream in(detail::read_text_file(path));
  auto bad = [&](const std::string& why) {
    return Error(ErrorKind::value, "malformed checkpoint '" + path.string() + "': " + why);
  };
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) throw bad("unknown header");
  Checkpoint ck;
  if (!std::getline(in, line) || line.rfind("sizes", 0) != 0) throw bad("missing sizes");
  {
    std::istringstream sizes(line.substr(5));
    std::size_t s;
    while (sizes >> s) ck.params.sizes.push_back(s);
  }
  if (!std::getline(in, line) || line.rfind("metadata", 0) != 0) throw bad("missing metadata");
  ck.metadata = line.size() > 9 ? line.substr(9) : std::string();
  if (!std::getline(in, line) || line.rfind("params ", 0) != 0) throw bad("missing parameter count");
  const auto count = std::stoul(line.substr(7));
  std::vector<double> flat;
  flat.reserve(count);
  while (flat.size() < count && std::getline(in, line)) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
    if (ec != std::errc()) throw bad("unparsable parameter at entry " + std::to_string(flat.size()));
    flat.push_back(v);
  }
  if (flat.size() != count) throw bad("truncated parameter list");
  ck.params.assign(flat);
  if (!ck.params.all_finite()) throw bad("non-finite parameters");
  return ck;
}

}  // namespace mifair
