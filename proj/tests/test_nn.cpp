#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>

#include "support.hpp"
#include "tnd/container.hpp"
#include "tnd/errors.hpp"
#include "tnd/nn.hpp"

using namespace tnd;

namespace {

Network identity_dense() {
  Network net({3}, {LayerSpec::dense(3, 3)});
  Tensor w({3, 3});
  for (std::size_t i = 0; i < 3; ++i) w[i * 3 + i] = 1.0;
  net.set_parameters(0, w, Tensor({3}));
  return net;
}

double central_difference(const Network& net, const Tensor& x, const ScalarHead& head, std::size_t i, double h) {
  auto value_at = [&](double delta) {
    Tensor y = x;
    y[i] += delta;
    const ForwardTrace t = forward(net, y);
    return head(t.logits.values(), t.representation.values()).value;
  };
  return (value_at(h) - value_at(-h)) / (2.0 * h);
}

}  // namespace

TEST_CASE("identity dense layer passes the input through") {
  const Network net = identity_dense();
  const ForwardTrace t = forward(net, Tensor::vector({1, 2, 3}));
  CHECK(t.logits == Tensor::vector({1, 2, 3}));
  CHECK(net.penultimate_dim() == 3);

  const InputGradient g = input_gradient(net, Tensor::vector({1, 2, 3}), heads::logit(1));
  CHECK(g.gradient == Tensor::vector({0, 1, 0}));
}

TEST_CASE("softmax of any model's logits is a probability vector") {
  const Network net = test::toy_cnn(3);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto p = softmax(forward(net, test::uniform_tensor(net.input_shape(), 0, 255, s)).logits.values());
    double sum = 0.0;
    for (double v : p) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("two-conv model on a zero image yields the chained biases") {
  // valid convolutions keep every spatial position identical on a constant input
  const Shape in{1, 10, 10};
  Network net(in, {LayerSpec::conv2d(1, 2, 3, Padding::valid), LayerSpec::relu(), LayerSpec::max_pool(),
                   LayerSpec::conv2d(2, 2, 3, Padding::valid), LayerSpec::relu(), LayerSpec::max_pool(),
                   LayerSpec::flatten(), LayerSpec::dense(2, 3)});
  const std::vector<double> b1{0.5, -0.25};
  Tensor w2 = test::uniform_tensor({2, 2, 3, 3}, -1, 1, 7);
  const std::vector<double> b2{0.1, 0.3};
  const Tensor w3 = test::uniform_tensor({3, 2}, -1, 1, 8);
  const std::vector<double> b3{0.2, -0.4, 0.7};
  net.set_parameters(0, test::uniform_tensor({2, 1, 3, 3}, -1, 1, 6), Tensor({2}, b1));
  net.set_parameters(3, w2, Tensor({2}, b2));
  net.set_parameters(7, w3, Tensor({3}, b3));

  std::vector<double> h1{std::max(b1[0], 0.0), std::max(b1[1], 0.0)};
  std::vector<double> h2(2);
  for (std::size_t o = 0; o < 2; ++o) {
    double acc = b2[o];
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t k = 0; k < 9; ++k) acc += w2[(o * 2 + c) * 9 + k] * h1[c];
    }
    h2[o] = std::max(acc, 0.0);
  }
  const Tensor logits = forward(net, Tensor(in)).logits;
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(logits[j] == doctest::Approx(b3[j] + w3[j * 2] * h2[0] + w3[j * 2 + 1] * h2[1]).epsilon(1e-12));
  }
}

TEST_CASE("sum of representation on a linear model is W^T 1") {
  Network net({1, 1, 4}, {LayerSpec::flatten(), LayerSpec::dense(4, 3), LayerSpec::dense(3, 2)});
  const Tensor w1 = test::uniform_tensor({3, 4}, -1, 1, 11);
  net.set_parameters(1, w1, test::uniform_tensor({3}, -1, 1, 12));
  net.set_parameters(2, test::uniform_tensor({2, 3}, -1, 1, 13), Tensor({2}));
  const InputGradient g = input_gradient(net, test::uniform_tensor({1, 1, 4}, 0, 1, 14), heads::sum_representation());
  for (std::size_t i = 0; i < 4; ++i) {
    double expected = 0.0;
    for (std::size_t r = 0; r < 3; ++r) expected += w1[r * 4 + i];
    CHECK(g.gradient[i] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("input gradient matches central differences") {
  const double h = 1e-3;
  for (std::uint64_t s = 0; s < 4; ++s) {
    const Network net = test::toy_cnn(100 + s);
    const Tensor x = test::uniform_tensor(net.input_shape(), 0, 255, 200 + s);
    const std::vector<ScalarHead> hs{heads::logit(1), heads::cw_targeted(2, 0.0), heads::cw_untargeted(0, 0.0),
                                     heads::weighted_activation(std::vector<double>(6, 1.0 / 6.0))};
    for (const auto& head : hs) {
      const InputGradient g = input_gradient(net, x, head);
      double scale = 0.0;
      for (double v : g.gradient.values()) scale = std::max(scale, std::abs(v));
      for (std::size_t i = 0; i < x.size(); i += 7) {
        const double fd = central_difference(net, x, head, i, h);
        CHECK(std::abs(fd - g.gradient[i]) <= 1e-4 * std::max(scale, 1e-12) + 1e-9);
      }
    }
  }
}

TEST_CASE("forward rejects a mismatched input shape") {
  const Network net = test::toy_cnn(1);
  CHECK_THROWS_AS(forward(net, Tensor({2, 7, 8})), ShapeError);
  CHECK_THROWS_AS(Network({3}, {LayerSpec::dense(4, 2)}), ShapeError);
}

TEST_CASE("forward is pure") {
  const Network net = test::toy_cnn(5);
  const Tensor x = test::uniform_tensor(net.input_shape(), 0, 255, 1);
  CHECK(forward(net, x).logits == forward(net, x).logits);
}

TEST_CASE("training separates two blobs and is deterministic") {
  const std::size_t n = 200;
  Tensor images({n, 1, 1, 2});
  std::vector<int> labels(n);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0.0, 0.3);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(i % 2);
    const double c = labels[i] == 0 ? -2.0 : 2.0;
    images[i * 2] = c + noise(rng);
    images[i * 2 + 1] = -c + noise(rng);
  }
  const Network init = Network::initialized({1, 1, 2}, {LayerSpec::flatten(), LayerSpec::dense(2, 2)}, 9);
  const TrainConfig cfg{.epochs = 5, .batch_size = 16, .learning_rate = 0.05, .momentum = 0.9, .seed = 4};
  const TrainResult a = train(init, images, labels, cfg);
  const TrainResult b = train(init, images, labels, cfg);
  CHECK(accuracy(a.network, images, labels) >= 0.99);
  CHECK(a.network == b.network);

  TrainConfig none = cfg;
  none.epochs = 0;
  CHECK(train(init, images, labels, none).network == init);
}

TEST_CASE("training rejects labels outside [0, K)") {
  const Network init = Network::initialized({1, 1, 2}, {LayerSpec::flatten(), LayerSpec::dense(2, 2)}, 9);
  const std::vector<int> labels{0, 2};
  CHECK_THROWS_AS(train(init, Tensor({2, 1, 1, 2}), labels, TrainConfig{}), DataError);
}

TEST_CASE("model files round-trip and report distinct errors") {
  test::TempDir dir("nn");
  ModelBundle b;
  b.model_id = "m";
  b.network = test::toy_cnn(21);
  b.provenance.attacks.push_back({TriggerParams{TriggerShape::cross, 1, 1, 3, {10, 20, 30}}, 2});
  b.provenance.poison_ratio = 0.1;
  b.test_accuracy = 0.9;
  const auto path = dir / "m.tscp";
  save_model(path, b);
  CHECK(load_model(path) == b);

  std::string bytes = read_text(path);
  {
    std::string bad = bytes;
    bad[0] = 'X';
    write_text_atomic(dir / "magic.tscp", bad);
    CHECK_THROWS_AS(load_model(dir / "magic.tscp"), FormatError);
  }
  {
    std::string newer = bytes;
    newer[4] = static_cast<char>(kContainerVersion + 1);
    write_text_atomic(dir / "newer.tscp", newer);
    CHECK_THROWS_AS(load_model(dir / "newer.tscp"), VersionError);
  }
  {
    write_text_atomic(dir / "short.tscp", bytes.substr(0, bytes.size() - 9));
    CHECK_THROWS_AS(load_model(dir / "short.tscp"), TruncatedError);
  }
  CHECK(exit_code(ErrorKind::format) == 2);
  CHECK(exit_code(ErrorKind::numerical) == 3);
  CHECK(exit_code(ErrorKind::usage) == 1);
}
