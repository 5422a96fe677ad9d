#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "mifair/model.hpp"
#include "mifair/verify.hpp"

using namespace mifair;
using testutil::TempDir;

namespace {

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = n(rng);
  return m;
}

std::vector<int> random_labels(std::mt19937_64& rng, std::size_t rows, int classes) {
  std::uniform_int_distribution<int> d(0, classes - 1);
  std::vector<int> y(rows);
  for (auto& v : y) v = d(rng);
  return y;
}

}  // namespace

TEST_CASE("init_model shapes, determinism and scale") {
  auto a = init_model({3, 2}, 7), b = init_model({3, 2}, 7), c = init_model({3, 2}, 8);
  CHECK(a.parameter_count() == 8);
  CHECK(a.flatten() == b.flatten());
  CHECK(a.flatten() != c.flatten());
  CHECK(a.layers[0].bias.isZero());

  auto big = init_model({400, 300, 2}, 1);
  const auto& w = big.layers[0].weight;
  const double sd = std::sqrt(w.array().square().mean());
  CHECK(sd == doctest::Approx(1.0 / std::sqrt(400.0)).epsilon(0.2));
  const double sd2 = std::sqrt(big.layers[1].weight.array().square().mean());
  CHECK(sd2 == doctest::Approx(1.0 / std::sqrt(300.0)).epsilon(0.2));

  CHECK_ERROR_KIND(init_model({3}, 0), ErrorKind::config);
  CHECK_ERROR_KIND(init_model({3, 1}, 0), ErrorKind::config);
  CHECK_ERROR_KIND(init_model({3, 0, 2}, 0), ErrorKind::config);
}

TEST_CASE("flatten and assign are inverse") {
  auto m = init_model({4, 5, 3, 3}, 2);
  auto flat = m.flatten();
  CHECK(flat.size() == m.parameter_count());
  ModelParams copy;
  copy.sizes = m.sizes;
  copy.assign(flat);
  CHECK(copy.flatten() == flat);
  CHECK_ERROR_KIND(copy.assign(std::vector<double>(3)), ErrorKind::shape);
}

TEST_CASE("forward on fixed weights") {
  auto m = init_model({2, 2}, 0);
  m.layers[0].weight.setZero();
  Matrix x(1, 2);
  x << 0.3, -1.2;
  Matrix p = forward(m, x);
  CHECK(p(0, 0) == doctest::Approx(0.5));
  CHECK(p(0, 1) == doctest::Approx(0.5));

  m.layers[0].bias << std::log(3.0), 0.0;
  p = forward(m, x);
  CHECK(p(0, 0) == doctest::Approx(0.75));
  CHECK(p(0, 1) == doctest::Approx(0.25));
}

TEST_CASE("forward rows are distributions, even for extreme inputs") {
  std::mt19937_64 rng(3);
  auto m = init_model({5, 8, 4}, 3);
  Matrix x = random_matrix(rng, 50, 5) * 100.0;
  Matrix p = forward(m, x);
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    CHECK(p.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p.row(r).minCoeff() >= 0.0);
  }
  CHECK(p.allFinite());
}

TEST_CASE("forward input errors") {
  auto m = init_model({2, 2}, 0);
  CHECK_ERROR_KIND(forward(m, Matrix::Zero(3, 4)), ErrorKind::shape);
  Matrix x = Matrix::Zero(2, 2);
  x(1, 0) = std::nan("");
  CHECK_ERROR_KIND(forward(m, x), ErrorKind::value);
  x(1, 0) = INFINITY;
  CHECK_ERROR_KIND(forward(m, x), ErrorKind::value);
}

TEST_CASE("cross_entropy") {
  Matrix p(2, 2);
  p << 0.75, 0.25, 0.5, 0.5;
  const std::vector<int> y{0, 1};
  CHECK(cross_entropy(p, y) == doctest::Approx(-(std::log(0.75) + std::log(0.5)) / 2));
  const std::vector<double> w{1.0, 0.0};
  CHECK(cross_entropy(p, y, w) == doctest::Approx(-std::log(0.75)));
  Matrix zero(1, 2);
  zero << 1.0, 0.0;
  CHECK(cross_entropy(zero, std::vector<int>{1}) == doctest::Approx(-std::log(1e-12)));
  CHECK_ERROR_KIND(cross_entropy(p, std::vector<int>{0}), ErrorKind::shape);
}

TEST_CASE("backward matches finite differences on the cross-entropy") {
  std::mt19937_64 rng(11);
  const std::vector<std::vector<std::size_t>> archs{{4, 3}, {4, 6, 3}, {4, 5, 4, 2}};
  for (const auto& sizes : archs) {
    auto m = init_model(sizes, 5);
    for (auto& l : m.layers) l.bias = random_matrix(rng, 1, l.bias.size()).transpose() * 0.1;
    Matrix x = random_matrix(rng, 12, 4);
    auto y = random_labels(rng, 12, static_cast<int>(sizes.back()));
    auto objective = [&](std::span<const double> flat) {
      ModelParams q;
      q.sizes = m.sizes;
      q.assign(flat);
      return cross_entropy(forward(q, x), y);
    };
    auto analytic = backward(m, x, y).flatten();
    auto check = verify::check_gradient(objective, m.flatten(), analytic, 1e-5);
    CHECK_MESSAGE(check.pass, "worst rel error " << check.max_rel_error);
  }
}

TEST_CASE("backward matches finite differences with an extra probability term") {
  std::mt19937_64 rng(12);
  auto m = init_model({3, 4, 3}, 9);
  Matrix x = random_matrix(rng, 10, 3);
  auto y = random_labels(rng, 10, 3);
  Matrix c = random_matrix(rng, 10, 3);
  // Extra term sum(c .* p^2) with probability gradient 2 c .* p.
  auto objective = [&](std::span<const double> flat) {
    ModelParams q;
    q.sizes = m.sizes;
    q.assign(flat);
    Matrix p = forward(q, x);
    return cross_entropy(p, y) + (c.array() * p.array().square()).sum();
  };
  Upstream up;
  up.prob_gradient = Matrix(2.0 * c.array() * forward(m, x).array());
  auto analytic = backward(m, x, y, up).flatten();
  auto check = verify::check_gradient(objective, m.flatten(), analytic, 1e-4);
  CHECK_MESSAGE(check.pass, "worst rel error " << check.max_rel_error);
}

TEST_CASE("balanced batch at uniform output gives zero bias gradient") {
  auto m = init_model({2, 2}, 0);
  m.layers[0].weight.setZero();
  Matrix x = Matrix::Ones(4, 2);
  auto g = backward(m, x, std::vector<int>{0, 1, 0, 1});
  CHECK(g.layers[0].bias.cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("checkpoint round trip is exact") {
  TempDir dir("model");
  auto m = init_model({6, 4, 3}, 21);
  save_checkpoint(dir / "m.ckpt", m, R"({"notion":"SP"})");
  auto ck = load_checkpoint(dir / "m.ckpt");
  CHECK(ck.params.sizes == m.sizes);
  CHECK(ck.params.flatten() == m.flatten());
  CHECK(ck.metadata == R"({"notion":"SP"})");
  CHECK(checkpoint_text(ck.params, ck.metadata) == testutil::read_file(dir / "m.ckpt"));
  CHECK_ERROR_KIND(checkpoint_text(m, "a\nb"), ErrorKind::value);
}

TEST_CASE("malformed checkpoints are rejected") {
  TempDir dir("model");
  auto m = init_model({2, 2}, 1);
  const std::string good = checkpoint_text(m);
  auto load_text = [&](const std::string& text) {
    testutil::write_file(dir / "bad.ckpt", text);
    return load_checkpoint(dir / "bad.ckpt");
  };
  CHECK_ERROR_KIND(load_text("not a checkpoint\n"), ErrorKind::value);
  CHECK_ERROR_KIND(load_text(good.substr(0, good.rfind('\n', good.size() - 2) + 1)), ErrorKind::value);
  std::string garbled = good;
  garbled.replace(garbled.rfind('\n', garbled.size() - 2) + 1, 3, "abc");
  CHECK_ERROR_KIND(load_text(garbled), ErrorKind::value);
  CHECK_ERROR_KIND(load_checkpoint(dir / "absent.ckpt"), ErrorKind::io);
}
