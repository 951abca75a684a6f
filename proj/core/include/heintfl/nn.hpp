#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "heintfl/labeled_image.hpp"
#include "heintfl/tensor.hpp"

namespace heintfl::nn {

enum class Activation { kTanh, kRelu, kSigmoid, kSoftmaxOutput };

struct DenseLayer {
  int in = 0;
  int out = 0;
};

// Valid (no padding), stride-1 square convolution.
struct Conv2dLayer {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 0;
};

// Non-overlapping average pooling; stride equals window.
struct AvgPool2dLayer {
  int window = 2;
};

struct ActivationLayer {
  Activation fn = Activation::kTanh;
};

using Layer = std::variant<DenseLayer, Conv2dLayer, AvgPool2dLayer, ActivationLayer>;

// Network description. Shapes must compose from input_shape to a final dense
// layer with num_classes outputs; the softmax output stage lives in the loss
// (an explicit softmax-output activation marker is allowed only at the end).
struct ModelSpec {
  std::vector<int> input_shape;  // {C,H,W} for images, {D} for flat features
  int num_classes = 0;
  std::vector<Layer> layers;
};

// Throws std::invalid_argument when shapes do not compose or the output layer
// is missing/misplaced. Returns the per-layer output shapes on success.
std::vector<std::vector<int>> validate_spec(const ModelSpec& spec);

// One contiguous slice of the flat parameter vector (a layer's weights or
// biases), with its logical shape.
struct ParamBlock {
  int layer = 0;
  std::int64_t offset = 0;
  std::int64_t length = 0;
  std::vector<int> shape;
};

struct ModelParams {
  std::vector<double> flat;
  std::vector<ParamBlock> layout;
};

std::vector<ParamBlock> make_layout(const ModelSpec& spec);
std::int64_t param_count(const ModelSpec& spec);

// Views a layout block of a flat vector as a Tensor (copying), and writes a
// tensor back into the block. Round-trips exactly.
Tensor unflatten_block(const std::vector<double>& flat, const ParamBlock& block);
void flatten_block(const Tensor& t, const ParamBlock& block, std::vector<double>& flat);

struct Gradient {
  std::vector<double> flat;
  std::optional<Tensor> input_grad;
};

// Glorot-uniform weights in [-b, b] with b = sqrt(6/(fan_in+fan_out)), zero
// biases; bitwise deterministic per (spec, seed).
ModelParams init_params(const ModelSpec& spec, std::uint64_t seed);

// Activations recorded by forward for the matching backward call.
// acts[0] is the input batch, acts[i+1] the output of layer i.
struct ForwardCache {
  std::vector<Tensor> acts;
};

// batch shape is {B, input_shape...}; logits come back as {B, num_classes}.
Tensor forward(const ModelSpec& spec, const ModelParams& params, const Tensor& batch,
               ForwardCache* cache = nullptr);

// Row-wise softmax of a {B,K} logits tensor.
Tensor softmax(const Tensor& logits);

// Mean cross-entropy over the batch; fills the parameter gradient and the
// gradient w.r.t. the input batch.
double backward(const ModelSpec& spec, const ModelParams& params, const ForwardCache& cache,
                const std::vector<int>& labels, Gradient& grad);

// Same, with a soft {B,K} label distribution per sample (rows sum to 1).
double backward_soft(const ModelSpec& spec, const ModelParams& params,
                     const ForwardCache& cache, const Tensor& label_probs, Gradient& grad);

ModelParams sgd_step(const ModelParams& params, const Gradient& grad, double lr);

struct TrainOptions {
  int epochs = 1;
  int batch_size = 32;
  double lr = 0.01;
};

// Seeded mini-batch SGD over the dataset; deterministic per seed.
ModelParams train_local(const ModelSpec& spec, const ModelParams& params,
                        const std::vector<data::LabeledImage>& dataset,
                        const TrainOptions& opts, std::uint64_t seed);

// Fraction of samples whose argmax logit matches the label, in [0,1].
double evaluate_accuracy(const ModelSpec& spec, const ModelParams& params,
                         const std::vector<data::LabeledImage>& dataset);

// Mean cross-entropy loss over the dataset.
double evaluate_loss(const ModelSpec& spec, const ModelParams& params,
                     const std::vector<data::LabeledImage>& dataset);

// Stock architectures.
// lenet_lite: conv(5,6)-pool2-conv(5,16)-pool2-dense(120)-dense(84)-dense(K),
// tanh activations; needs at least 14x14 inputs (32x32 for the classic shape).
ModelSpec lenet_lite(int in_channels, int height, int width, int num_classes,
                     Activation act = Activation::kTanh);
// toy_cnn: conv(3,4)-pool2-dense(32)-dense(K); fits 8x8 desk-scale images.
ModelSpec toy_cnn(int in_channels, int height, int width, int num_classes,
                  Activation act = Activation::kTanh);
ModelSpec mlp(const std::vector<int>& input_shape, const std::vector<int>& hidden,
              int num_classes, Activation act = Activation::kTanh);

// Named lookup used by configs: "lenet", "toy-cnn", "mlp" (hidden sizes twice
// the input edge), or "mlp:h1,h2,...".
ModelSpec model_spec_by_name(const std::string& name, const std::vector<int>& input_shape,
                             int num_classes);

}  // namespace heintfl::nn
