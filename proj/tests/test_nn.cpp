#include <doctest.h>

#include <cmath>

#include "heintfl/dataset.hpp"
#include "heintfl/nn.hpp"
#include "heintfl/rng.hpp"
#include "testutil/finite_diff.hpp"

using namespace heintfl;

namespace {

Tensor batch_from(const std::vector<data::LabeledImage>& imgs, const std::vector<int>& shape) {
  std::vector<int> bshape{static_cast<int>(imgs.size())};
  bshape.insert(bshape.end(), shape.begin(), shape.end());
  Tensor batch = Tensor::zeros(bshape);
  const auto n = imgs[0].pixels.values.size();
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    std::copy(imgs[i].pixels.values.begin(), imgs[i].pixels.values.end(),
              batch.values.begin() + static_cast<std::int64_t>(i * n));
  }
  return batch;
}

std::vector<int> labels_from(const std::vector<data::LabeledImage>& imgs) {
  std::vector<int> out;
  for (const auto& img : imgs) out.push_back(img.label);
  return out;
}

}  // namespace

TEST_CASE("init_params is deterministic and counts parameters") {
  const auto spec = nn::mlp({4}, {3}, 2);
  const auto a = nn::init_params(spec, 7);
  const auto b = nn::init_params(spec, 7);
  CHECK(a.flat == b.flat);  // bitwise identical

  // dense 4->3 (12+3) + dense 3->2 (6+2)
  CHECK(a.flat.size() == 23);
  CHECK(nn::param_count(spec) == 23);

  const auto c = nn::init_params(spec, 8);
  CHECK(a.flat != c.flat);

  // biases zero, weights within the expected bound
  const auto layout = a.layout;
  REQUIRE(layout.size() == 4);
  for (std::int64_t i = 0; i < layout[1].length; ++i) {
    CHECK(a.flat[static_cast<std::size_t>(layout[1].offset + i)] == 0.0);
  }
  const double bound = std::sqrt(6.0 / (4 + 3));
  for (std::int64_t i = 0; i < layout[0].length; ++i) {
    CHECK(std::abs(a.flat[static_cast<std::size_t>(layout[0].offset + i)]) <= bound);
  }
}

TEST_CASE("layout covers the flat vector contiguously") {
  const auto spec = nn::toy_cnn(1, 8, 8, 4);
  const auto params = nn::init_params(spec, 3);
  std::int64_t expected_offset = 0;
  for (const auto& block : params.layout) {
    CHECK(block.offset == expected_offset);
    CHECK(block.length == Tensor::element_count(block.shape));
    expected_offset += block.length;
  }
  CHECK(expected_offset == static_cast<std::int64_t>(params.flat.size()));
}

TEST_CASE("unflatten/flatten round-trips parameters") {
  const auto spec = nn::toy_cnn(1, 8, 8, 4);
  auto params = nn::init_params(spec, 3);
  const auto original = params.flat;
  for (const auto& block : params.layout) {
    const Tensor t = nn::unflatten_block(params.flat, block);
    nn::flatten_block(t, block, params.flat);
  }
  CHECK(params.flat == original);
}

TEST_CASE("invalid specs are rejected") {
  nn::ModelSpec spec;
  spec.input_shape = {4};
  spec.num_classes = 2;
  spec.layers = {nn::DenseLayer{5, 2}};  // input size mismatch
  CHECK_THROWS_AS(nn::validate_spec(spec), std::invalid_argument);

  spec.layers = {nn::DenseLayer{4, 3}};  // output != num_classes
  CHECK_THROWS_AS(nn::validate_spec(spec), std::invalid_argument);

  spec.layers = {nn::DenseLayer{4, 2}, nn::ActivationLayer{nn::Activation::kTanh}};
  CHECK_THROWS_AS(nn::validate_spec(spec), std::invalid_argument);  // must end in dense

  spec.layers = {nn::DenseLayer{4, 2}, nn::ActivationLayer{nn::Activation::kSoftmaxOutput}};
  CHECK_NOTHROW(nn::validate_spec(spec));  // explicit output marker is fine
}

TEST_CASE("zero-weight dense net maps any input to zero logits") {
  const auto spec = nn::mlp({3}, {}, 2);
  nn::ModelParams params;
  params.layout = nn::make_layout(spec);
  params.flat.assign(8, 0.0);
  Tensor batch{{2, 3}, {0.3, -1.2, 4.0, 0.0, 2.0, -0.5}};
  const auto logits = nn::forward(spec, params, batch);
  for (double v : logits.values) CHECK(v == 0.0);
}

TEST_CASE("1x1 dense layer is plain multiplication") {
  nn::ModelSpec spec;
  spec.input_shape = {1};
  spec.num_classes = 2;
  spec.layers = {nn::DenseLayer{1, 2}};
  nn::ModelParams params;
  params.layout = nn::make_layout(spec);
  params.flat = {2.0, 0.0, 0.0, 0.0};  // weights (2,1), biases (2)
  const auto logits = nn::forward(spec, params, Tensor{{1, 1}, {3.0}});
  CHECK(logits.values[0] == doctest::Approx(6.0));
  CHECK(logits.values[1] == doctest::Approx(0.0));
}

TEST_CASE("2-layer MLP forward equals hand-computed matrix product") {
  // fixed tiny weights, one sample, computed by hand with tanh hidden
  nn::ModelSpec spec;
  spec.input_shape = {2};
  spec.num_classes = 2;
  spec.layers = {nn::DenseLayer{2, 2}, nn::ActivationLayer{nn::Activation::kTanh},
                 nn::DenseLayer{2, 2}};
  nn::ModelParams params;
  params.layout = nn::make_layout(spec);
  // W1 = [[0.5, -1.0], [0.25, 0.75]], b1 = [0.1, -0.2]
  // W2 = [[1.0, 2.0], [-0.5, 0.0]], b2 = [0.0, 0.3]
  params.flat = {0.5, -1.0, 0.25, 0.75, 0.1, -0.2, 1.0, 2.0, -0.5, 0.0, 0.0, 0.3};
  const double x0 = 0.6, x1 = -0.4;
  const double h0 = std::tanh(0.5 * x0 + (-1.0) * x1 + 0.1);
  const double h1 = std::tanh(0.25 * x0 + 0.75 * x1 + (-0.2));
  const double z0 = 1.0 * h0 + 2.0 * h1;
  const double z1 = -0.5 * h0 + 0.0 * h1 + 0.3;

  const auto logits = nn::forward(spec, params, Tensor{{1, 2}, {x0, x1}});
  CHECK(logits.values[0] == doctest::Approx(z0).epsilon(1e-12));
  CHECK(logits.values[1] == doctest::Approx(z1).epsilon(1e-12));
}

TEST_CASE("random 2-layer MLP agrees with an independent matrix-arithmetic oracle") {
  const auto spec = nn::mlp({5}, {4}, 3);
  const auto params = nn::init_params(spec, 21);
  Rng rng(99);
  Tensor batch = Tensor::zeros({3, 5});
  for (auto& v : batch.values) v = rng.uniform(-1, 1);

  const auto logits = nn::forward(spec, params, batch);

  // independent straight-line computation from the layout blocks
  const auto& f = params.flat;
  const auto& L = params.layout;
  for (int s = 0; s < 3; ++s) {
    double hidden[4];
    for (int o = 0; o < 4; ++o) {
      double acc = f[static_cast<std::size_t>(L[1].offset + o)];
      for (int i = 0; i < 5; ++i) {
        acc += f[static_cast<std::size_t>(L[0].offset + o * 5 + i)] * batch.values[s * 5 + i];
      }
      hidden[o] = std::tanh(acc);
    }
    for (int k = 0; k < 3; ++k) {
      double acc = f[static_cast<std::size_t>(L[3].offset + k)];
      for (int o = 0; o < 4; ++o) {
        acc += f[static_cast<std::size_t>(L[2].offset + k * 4 + o)] * hidden[o];
      }
      CHECK(logits.values[static_cast<std::size_t>(s * 3 + k)] ==
            doctest::Approx(acc).epsilon(1e-12));
    }
  }
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(5);
  Tensor logits = Tensor::zeros({16, 7});
  for (auto& v : logits.values) v = rng.uniform(-20, 20);
  const auto probs = nn::softmax(logits);
  for (int s = 0; s < 16; ++s) {
    double sum = 0;
    for (int k = 0; k < 7; ++k) sum += probs.values[static_cast<std::size_t>(s * 7 + k)];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("uniform logits lose ln K") {
  const auto spec = nn::mlp({3}, {}, 5);
  nn::ModelParams params;
  params.layout = nn::make_layout(spec);
  params.flat.assign(20, 0.0);  // all-zero -> uniform logits
  nn::ForwardCache cache;
  nn::forward(spec, params, Tensor{{2, 3}, {1, 2, 3, 4, 5, 6}}, &cache);
  nn::Gradient grad;
  const double loss = nn::backward(spec, params, cache, {0, 3}, grad);
  CHECK(loss == doctest::Approx(std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("label out of range throws") {
  const auto spec = nn::mlp({3}, {}, 2);
  const auto params = nn::init_params(spec, 1);
  nn::ForwardCache cache;
  nn::forward(spec, params, Tensor{{1, 3}, {1, 2, 3}}, &cache);
  nn::Gradient grad;
  CHECK_THROWS_AS(nn::backward(spec, params, cache, {2}, grad), std::out_of_range);
}

TEST_CASE("analytic gradients match central finite differences on an MLP") {
  const auto spec = nn::mlp({6}, {5}, 3);
  const auto params = nn::init_params(spec, 13);
  Rng rng(17);
  Tensor batch = Tensor::zeros({8, 6});
  for (auto& v : batch.values) v = rng.uniform();
  std::vector<int> labels;
  for (int i = 0; i < 8; ++i) labels.push_back(static_cast<int>(rng.below(3)));

  nn::ForwardCache cache;
  nn::forward(spec, params, batch, &cache);
  nn::Gradient grad;
  nn::backward(spec, params, cache, labels, grad);

  const auto res = fdcheck::check_param_gradient(spec, params, batch, labels, grad.flat);
  CHECK(res.max_rel_error < 1e-4);

  REQUIRE(grad.input_grad.has_value());
  const auto ires = fdcheck::check_input_gradient(spec, params, batch, labels, *grad.input_grad);
  CHECK(ires.max_rel_error < 1e-4);
}

TEST_CASE("analytic gradients match finite differences on every layer kind") {
  // conv + pool + dense + all three activations in one network
  nn::ModelSpec spec;
  spec.input_shape = {2, 6, 6};
  spec.num_classes = 3;
  spec.layers = {
      nn::Conv2dLayer{2, 3, 3},  nn::ActivationLayer{nn::Activation::kRelu},
      nn::AvgPool2dLayer{2},     nn::DenseLayer{3 * 2 * 2, 5},
      nn::ActivationLayer{nn::Activation::kSigmoid}, nn::DenseLayer{5, 3},
  };
  // seed chosen so every relu preactivation sits >= 0.05 from the kink,
  // keeping the central differences on one linear piece
  const auto params = nn::init_params(spec, 1);
  Rng rng(123);
  Tensor batch = Tensor::zeros({4, 2, 6, 6});
  for (auto& v : batch.values) v = rng.uniform();
  std::vector<int> labels{0, 1, 2, 1};

  nn::ForwardCache cache;
  nn::forward(spec, params, batch, &cache);
  nn::Gradient grad;
  nn::backward(spec, params, cache, labels, grad);

  const auto res = fdcheck::check_param_gradient(spec, params, batch, labels, grad.flat);
  CHECK(res.max_rel_error < 1e-4);
  const auto ires = fdcheck::check_input_gradient(spec, params, batch, labels, *grad.input_grad);
  CHECK(ires.max_rel_error < 1e-4);
}

TEST_CASE("soft-label backward matches hard labels on one-hot distributions") {
  const auto spec = nn::toy_cnn(1, 8, 8, 4);
  const auto params = nn::init_params(spec, 77);
  const auto imgs = data::make_toy_dataset(4, 2, 8, 3);
  const auto batch = batch_from(imgs, {1, 8, 8});
  const auto labels = labels_from(imgs);

  nn::ForwardCache cache;
  nn::forward(spec, params, batch, &cache);
  nn::Gradient hard, soft;
  const double hard_loss = nn::backward(spec, params, cache, labels, hard);

  Tensor onehot = Tensor::zeros({static_cast<int>(labels.size()), 4});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    onehot.values[i * 4 + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  const double soft_loss = nn::backward_soft(spec, params, cache, onehot, soft);
  CHECK(hard_loss == doctest::Approx(soft_loss).epsilon(1e-12));
  for (std::size_t i = 0; i < hard.flat.size(); ++i) {
    CHECK(hard.flat[i] == doctest::Approx(soft.flat[i]).epsilon(1e-12));
  }
}

TEST_CASE("sgd_step arithmetic") {
  nn::ModelParams params;
  params.flat = {1.0, 2.0};
  nn::Gradient grad;
  grad.flat = {1.0, -1.0};
  const auto next = nn::sgd_step(params, grad, 0.5);
  CHECK(next.flat[0] == doctest::Approx(0.5));
  CHECK(next.flat[1] == doctest::Approx(2.5));

  nn::Gradient zero;
  zero.flat = {0.0, 0.0};
  const auto same = nn::sgd_step(params, zero, 0.1);
  CHECK(same.flat == params.flat);

  // two steps at lr equal one step at 2*lr for a constant gradient
  const auto two = nn::sgd_step(nn::sgd_step(params, grad, 0.1), grad, 0.1);
  const auto one = nn::sgd_step(params, grad, 0.2);
  CHECK(two.flat[0] == doctest::Approx(one.flat[0]).epsilon(1e-15));
  CHECK(two.flat[1] == doctest::Approx(one.flat[1]).epsilon(1e-15));

  nn::Gradient bad;
  bad.flat = {1.0};
  CHECK_THROWS_AS(nn::sgd_step(params, bad, 0.1), std::invalid_argument);
}

TEST_CASE("train_local: zero epochs is the identity") {
  const auto spec = nn::toy_cnn(1, 8, 8, 4);
  const auto params = nn::init_params(spec, 2);
  const auto imgs = data::make_toy_dataset(4, 4, 8, 9);
  const auto out = nn::train_local(spec, params, imgs, {0, 8, 0.1}, 5);
  CHECK(out.flat == params.flat);
  CHECK_THROWS_AS(nn::train_local(spec, params, {}, {1, 8, 0.1}, 5), std::invalid_argument);
}

TEST_CASE("train_local: one sample one step equals forward/backward/sgd composition") {
  const auto spec = nn::toy_cnn(1, 8, 8, 4);
  const auto params = nn::init_params(spec, 2);
  const auto imgs = data::make_toy_dataset(4, 1, 8, 9);
  const std::vector<data::LabeledImage> one{imgs[2]};

  const auto trained = nn::train_local(spec, params, one, {1, 1, 0.1}, 5);

  Tensor batch = Tensor::zeros({1, 1, 8, 8});
  batch.values = one[0].pixels.values;
  nn::ForwardCache cache;
  nn::forward(spec, params, batch, &cache);
  nn::Gradient grad;
  nn::backward(spec, params, cache, {one[0].label}, grad);
  const auto manual = nn::sgd_step(params, grad, 0.1);
  CHECK(trained.flat == manual.flat);
}

TEST_CASE("train_local is deterministic and reduces loss on a toy set") {
  const auto spec = nn::toy_cnn(1, 8, 8, 4);
  const auto params = nn::init_params(spec, 4);
  const auto imgs = data::make_toy_dataset(4, 8, 8, 11);  // 32 samples

  const double initial = nn::evaluate_loss(spec, params, imgs);
  const auto a = nn::train_local(spec, params, imgs, {50, 8, 0.05}, 6);
  const auto b = nn::train_local(spec, params, imgs, {50, 8, 0.05}, 6);
  CHECK(a.flat == b.flat);

  const double after = nn::evaluate_loss(spec, a, imgs);
  CHECK(after < initial);
}
