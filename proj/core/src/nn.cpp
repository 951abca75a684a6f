#include "heintfl/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "heintfl/rng.hpp"

namespace heintfl::nn {

namespace {

std::int64_t product(const std::vector<int>& dims) {
  std::int64_t n = 1;
  for (int d : dims) n *= d;
  return n;
}

[[noreturn]] void spec_error(int layer, const std::string& what) {
  throw std::invalid_argument("ModelSpec: layer " + std::to_string(layer) + ": " + what);
}

}  // namespace

std::vector<std::vector<int>> validate_spec(const ModelSpec& spec) {
  if (spec.input_shape.empty()) throw std::invalid_argument("ModelSpec: empty input shape");
  for (int d : spec.input_shape) {
    if (d <= 0) throw std::invalid_argument("ModelSpec: non-positive input dimension");
  }
  if (spec.num_classes < 2) throw std::invalid_argument("ModelSpec: need at least 2 classes");
  if (spec.layers.empty()) throw std::invalid_argument("ModelSpec: no layers");

  std::vector<std::vector<int>> shapes;
  std::vector<int> cur = spec.input_shape;
  int last_dense = -1;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const Layer& layer = spec.layers[l];
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      if (d->in <= 0 || d->out <= 0) spec_error(static_cast<int>(l), "non-positive dense dims");
      if (product(cur) != d->in) spec_error(static_cast<int>(l), "dense input size mismatch");
      cur = {d->out};
      last_dense = static_cast<int>(l);
    } else if (const auto* c = std::get_if<Conv2dLayer>(&layer)) {
      if (cur.size() != 3) spec_error(static_cast<int>(l), "conv2d needs (C,H,W) input");
      if (c->kernel <= 0 || c->out_channels <= 0) {
        spec_error(static_cast<int>(l), "non-positive conv dims");
      }
      if (cur[0] != c->in_channels) spec_error(static_cast<int>(l), "conv channel mismatch");
      if (cur[1] < c->kernel || cur[2] < c->kernel) {
        spec_error(static_cast<int>(l), "input smaller than kernel");
      }
      cur = {c->out_channels, cur[1] - c->kernel + 1, cur[2] - c->kernel + 1};
    } else if (const auto* p = std::get_if<AvgPool2dLayer>(&layer)) {
      if (cur.size() != 3) spec_error(static_cast<int>(l), "avgpool2d needs (C,H,W) input");
      if (p->window <= 0) spec_error(static_cast<int>(l), "non-positive pool window");
      if (cur[1] % p->window != 0 || cur[2] % p->window != 0) {
        spec_error(static_cast<int>(l), "pool window does not divide input");
      }
      cur = {cur[0], cur[1] / p->window, cur[2] / p->window};
    } else {
      const auto& a = std::get<ActivationLayer>(layer);
      if (a.fn == Activation::kSoftmaxOutput && l + 1 != spec.layers.size()) {
        spec_error(static_cast<int>(l), "softmax-output must be the final layer");
      }
    }
    shapes.push_back(cur);
  }
  // The output layer is the final dense; an optional trailing softmax-output
  // marker is the only thing allowed after it.
  std::size_t last = spec.layers.size() - 1;
  if (const auto* a = std::get_if<ActivationLayer>(&spec.layers[last])) {
    if (a->fn != Activation::kSoftmaxOutput) {
      throw std::invalid_argument("ModelSpec: network must end in the output dense layer");
    }
    if (last == 0) throw std::invalid_argument("ModelSpec: softmax-output needs a dense before it");
    last -= 1;
  }
  if (!std::holds_alternative<DenseLayer>(spec.layers[last]) ||
      last_dense != static_cast<int>(last)) {
    throw std::invalid_argument("ModelSpec: network must end in the output dense layer");
  }
  if (cur.size() != 1 || cur[0] != spec.num_classes) {
    throw std::invalid_argument("ModelSpec: output size must equal num_classes");
  }
  return shapes;
}

std::vector<ParamBlock> make_layout(const ModelSpec& spec) {
  validate_spec(spec);
  std::vector<ParamBlock> layout;
  std::int64_t offset = 0;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    if (const auto* d = std::get_if<DenseLayer>(&spec.layers[l])) {
      std::int64_t w = static_cast<std::int64_t>(d->out) * d->in;
      layout.push_back({static_cast<int>(l), offset, w, {d->out, d->in}});
      offset += w;
      layout.push_back({static_cast<int>(l), offset, d->out, {d->out}});
      offset += d->out;
    } else if (const auto* c = std::get_if<Conv2dLayer>(&spec.layers[l])) {
      std::int64_t w =
          static_cast<std::int64_t>(c->out_channels) * c->in_channels * c->kernel * c->kernel;
      layout.push_back(
          {static_cast<int>(l), offset, w, {c->out_channels, c->in_channels, c->kernel, c->kernel}});
      offset += w;
      layout.push_back({static_cast<int>(l), offset, c->out_channels, {c->out_channels}});
      offset += c->out_channels;
    }
  }
  return layout;
}

std::int64_t param_count(const ModelSpec& spec) {
  std::int64_t n = 0;
  for (const auto& b : make_layout(spec)) n += b.length;
  return n;
}

Tensor unflatten_block(const std::vector<double>& flat, const ParamBlock& block) {
  Tensor t;
  t.shape = block.shape;
  t.values.assign(flat.begin() + block.offset, flat.begin() + block.offset + block.length);
  return t;
}

void flatten_block(const Tensor& t, const ParamBlock& block, std::vector<double>& flat) {
  if (static_cast<std::int64_t>(t.values.size()) != block.length) {
    throw std::invalid_argument("flatten_block: size mismatch");
  }
  std::copy(t.values.begin(), t.values.end(), flat.begin() + block.offset);
}

ModelParams init_params(const ModelSpec& spec, std::uint64_t seed) {
  ModelParams params;
  params.layout = make_layout(spec);
  std::int64_t total = 0;
  for (const auto& b : params.layout) total += b.length;
  params.flat.assign(static_cast<std::size_t>(total), 0.0);

  Rng rng(derive_seed(seed, "nn-init"));
  for (std::size_t bi = 0; bi + 1 < params.layout.size(); bi += 2) {
    const ParamBlock& weights = params.layout[bi];
    const Layer& layer = spec.layers[static_cast<std::size_t>(weights.layer)];
    double fan_in = 0, fan_out = 0;
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      fan_in = d->in;
      fan_out = d->out;
    } else {
      const auto& c = std::get<Conv2dLayer>(layer);
      fan_in = static_cast<double>(c.in_channels) * c.kernel * c.kernel;
      fan_out = static_cast<double>(c.out_channels) * c.kernel * c.kernel;
    }
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (std::int64_t i = 0; i < weights.length; ++i) {
      params.flat[static_cast<std::size_t>(weights.offset + i)] = rng.uniform(-bound, bound);
    }
    // biases (the following block) stay zero
  }
  return params;
}

namespace {

struct Shape4 {
  int b, c, h, w;
};

Shape4 as_bchw(const Tensor& t) {
  if (t.shape.size() != 4) throw std::invalid_argument("expected (B,C,H,W) tensor");
  return {t.shape[0], t.shape[1], t.shape[2], t.shape[3]};
}

Tensor dense_forward(const DenseLayer& d, const double* w, const double* b, const Tensor& x) {
  const int batch = x.shape[0];
  Tensor y = Tensor::zeros({batch, d.out});
  const std::int64_t in = d.in;
  for (int s = 0; s < batch; ++s) {
    const double* xs = x.values.data() + s * in;
    double* ys = y.values.data() + static_cast<std::int64_t>(s) * d.out;
    for (int o = 0; o < d.out; ++o) {
      const double* wo = w + static_cast<std::int64_t>(o) * in;
      double acc = b[o];
      for (std::int64_t i = 0; i < in; ++i) acc += wo[i] * xs[i];
      ys[o] = acc;
    }
  }
  return y;
}

void dense_backward(const DenseLayer& d, const double* w, const Tensor& x, const Tensor& dy,
                    double* dw, double* db, Tensor& dx) {
  const int batch = x.shape[0];
  const std::int64_t in = d.in;
  for (int s = 0; s < batch; ++s) {
    const double* xs = x.values.data() + s * in;
    const double* dys = dy.values.data() + static_cast<std::int64_t>(s) * d.out;
    double* dxs = dx.values.data() + s * in;
    for (int o = 0; o < d.out; ++o) {
      const double g = dys[o];
      if (g == 0.0) continue;
      const double* wo = w + static_cast<std::int64_t>(o) * in;
      double* dwo = dw + static_cast<std::int64_t>(o) * in;
      db[o] += g;
      for (std::int64_t i = 0; i < in; ++i) {
        dwo[i] += g * xs[i];
        dxs[i] += g * wo[i];
      }
    }
  }
}

Tensor conv_forward(const Conv2dLayer& c, const double* w, const double* b, const Tensor& x) {
  const auto [batch, ic, h, wdt] = as_bchw(x);
  const int k = c.kernel, oh = h - k + 1, ow = wdt - k + 1, oc = c.out_channels;
  Tensor y = Tensor::zeros({batch, oc, oh, ow});
  for (int s = 0; s < batch; ++s) {
    const double* xs = x.values.data() + static_cast<std::int64_t>(s) * ic * h * wdt;
    double* ys = y.values.data() + static_cast<std::int64_t>(s) * oc * oh * ow;
    for (int o = 0; o < oc; ++o) {
      const double* wo = w + static_cast<std::int64_t>(o) * ic * k * k;
      double* yo = ys + static_cast<std::int64_t>(o) * oh * ow;
      for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j) {
          double acc = b[o];
          for (int ci = 0; ci < ic; ++ci) {
            const double* xc = xs + static_cast<std::int64_t>(ci) * h * wdt;
            const double* wc = wo + static_cast<std::int64_t>(ci) * k * k;
            for (int u = 0; u < k; ++u) {
              const double* xrow = xc + static_cast<std::int64_t>(i + u) * wdt + j;
              const double* wrow = wc + static_cast<std::int64_t>(u) * k;
              for (int v = 0; v < k; ++v) acc += wrow[v] * xrow[v];
            }
          }
          yo[static_cast<std::int64_t>(i) * ow + j] = acc;
        }
      }
    }
  }
  return y;
}

void conv_backward(const Conv2dLayer& c, const double* w, const Tensor& x, const Tensor& dy,
                   double* dw, double* db, Tensor& dx) {
  const auto [batch, ic, h, wdt] = as_bchw(x);
  const int k = c.kernel, oh = h - k + 1, ow = wdt - k + 1, oc = c.out_channels;
  for (int s = 0; s < batch; ++s) {
    const double* xs = x.values.data() + static_cast<std::int64_t>(s) * ic * h * wdt;
    const double* dys = dy.values.data() + static_cast<std::int64_t>(s) * oc * oh * ow;
    double* dxs = dx.values.data() + static_cast<std::int64_t>(s) * ic * h * wdt;
    for (int o = 0; o < oc; ++o) {
      const double* wo = w + static_cast<std::int64_t>(o) * ic * k * k;
      double* dwo = dw + static_cast<std::int64_t>(o) * ic * k * k;
      const double* dyo = dys + static_cast<std::int64_t>(o) * oh * ow;
      for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j) {
          const double g = dyo[static_cast<std::int64_t>(i) * ow + j];
          if (g == 0.0) continue;
          db[o] += g;
          for (int ci = 0; ci < ic; ++ci) {
            const double* xc = xs + static_cast<std::int64_t>(ci) * h * wdt;
            double* dxc = dxs + static_cast<std::int64_t>(ci) * h * wdt;
            const double* wc = wo + static_cast<std::int64_t>(ci) * k * k;
            double* dwc = dwo + static_cast<std::int64_t>(ci) * k * k;
            for (int u = 0; u < k; ++u) {
              const std::int64_t row = static_cast<std::int64_t>(i + u) * wdt + j;
              for (int v = 0; v < k; ++v) {
                dwc[static_cast<std::int64_t>(u) * k + v] += g * xc[row + v];
                dxc[row + v] += g * wc[static_cast<std::int64_t>(u) * k + v];
              }
            }
          }
        }
      }
    }
  }
}

Tensor pool_forward(const AvgPool2dLayer& p, const Tensor& x) {
  const auto [batch, ch, h, wdt] = as_bchw(x);
  const int oh = h / p.window, ow = wdt / p.window;
  const double inv = 1.0 / (static_cast<double>(p.window) * p.window);
  Tensor y = Tensor::zeros({batch, ch, oh, ow});
  for (int s = 0; s < batch; ++s) {
    for (int c = 0; c < ch; ++c) {
      const double* xc =
          x.values.data() + (static_cast<std::int64_t>(s) * ch + c) * h * wdt;
      double* yc = y.values.data() + (static_cast<std::int64_t>(s) * ch + c) * oh * ow;
      for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j) {
          double acc = 0.0;
          for (int u = 0; u < p.window; ++u) {
            const double* row = xc + static_cast<std::int64_t>(i * p.window + u) * wdt + j * p.window;
            for (int v = 0; v < p.window; ++v) acc += row[v];
          }
          yc[static_cast<std::int64_t>(i) * ow + j] = acc * inv;
        }
      }
    }
  }
  return y;
}

void pool_backward(const AvgPool2dLayer& p, const Tensor& x, const Tensor& dy, Tensor& dx) {
  const auto [batch, ch, h, wdt] = as_bchw(x);
  const int oh = h / p.window, ow = wdt / p.window;
  const double inv = 1.0 / (static_cast<double>(p.window) * p.window);
  for (int s = 0; s < batch; ++s) {
    for (int c = 0; c < ch; ++c) {
      const double* dyc = dy.values.data() + (static_cast<std::int64_t>(s) * ch + c) * oh * ow;
      double* dxc = dx.values.data() + (static_cast<std::int64_t>(s) * ch + c) * h * wdt;
      for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j) {
          const double g = dyc[static_cast<std::int64_t>(i) * ow + j] * inv;
          for (int u = 0; u < p.window; ++u) {
            double* row = dxc + static_cast<std::int64_t>(i * p.window + u) * wdt + j * p.window;
            for (int v = 0; v < p.window; ++v) row[v] += g;
          }
        }
      }
    }
  }
}

Tensor activation_forward(const ActivationLayer& a, const Tensor& x) {
  Tensor y = x;
  switch (a.fn) {
    case Activation::kTanh:
      for (auto& v : y.values) v = std::tanh(v);
      break;
    case Activation::kRelu:
      for (auto& v : y.values) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::kSigmoid:
      for (auto& v : y.values) v = 1.0 / (1.0 + std::exp(-v));
      break;
    case Activation::kSoftmaxOutput:
      // identity pass-through; the loss applies softmax
      break;
  }
  return y;
}

void activation_backward(const ActivationLayer& a, const Tensor& x, const Tensor& y,
                         const Tensor& dy, Tensor& dx) {
  const std::size_t n = x.values.size();
  switch (a.fn) {
    case Activation::kTanh:
      for (std::size_t i = 0; i < n; ++i) {
        dx.values[i] = dy.values[i] * (1.0 - y.values[i] * y.values[i]);
      }
      break;
    case Activation::kRelu:
      for (std::size_t i = 0; i < n; ++i) {
        dx.values[i] = x.values[i] > 0.0 ? dy.values[i] : 0.0;
      }
      break;
    case Activation::kSigmoid:
      for (std::size_t i = 0; i < n; ++i) {
        dx.values[i] = dy.values[i] * y.values[i] * (1.0 - y.values[i]);
      }
      break;
    case Activation::kSoftmaxOutput:
      dx.values = dy.values;
      break;
  }
}

// Per-layer parameter block offsets into the flat vector, by layer index.
struct BlockOffsets {
  std::int64_t weights = -1;
  std::int64_t bias = -1;
};

std::vector<BlockOffsets> offsets_by_layer(const ModelSpec& spec, const ModelParams& params) {
  std::vector<BlockOffsets> out(spec.layers.size());
  for (std::size_t i = 0; i + 1 < params.layout.size(); i += 2) {
    out[static_cast<std::size_t>(params.layout[i].layer)] = {params.layout[i].offset,
                                                             params.layout[i + 1].offset};
  }
  return out;
}

double loss_and_dlogits(const Tensor& logits, const std::vector<int>* labels,
                        const Tensor* label_probs, Tensor& dlogits) {
  const int batch = logits.shape[0];
  const int k = logits.shape[1];
  dlogits = Tensor::zeros(logits.shape);
  double loss = 0.0;
  for (int s = 0; s < batch; ++s) {
    const double* z = logits.values.data() + static_cast<std::int64_t>(s) * k;
    double* dz = dlogits.values.data() + static_cast<std::int64_t>(s) * k;
    double zmax = z[0];
    for (int i = 1; i < k; ++i) zmax = std::max(zmax, z[i]);
    double denom = 0.0;
    for (int i = 0; i < k; ++i) denom += std::exp(z[i] - zmax);
    const double lse = zmax + std::log(denom);
    if (labels) {
      const int y = (*labels)[static_cast<std::size_t>(s)];
      if (y < 0 || y >= k) throw std::out_of_range("backward: label out of class range");
      loss += lse - z[y];
      for (int i = 0; i < k; ++i) {
        dz[i] = std::exp(z[i] - zmax) / denom - (i == y ? 1.0 : 0.0);
      }
    } else {
      const double* y = label_probs->values.data() + static_cast<std::int64_t>(s) * k;
      for (int i = 0; i < k; ++i) {
        loss += y[i] * (lse - z[i]);
        dz[i] = std::exp(z[i] - zmax) / denom - y[i];
      }
    }
    for (int i = 0; i < k; ++i) dz[i] /= batch;
  }
  return loss / batch;
}

double backward_impl(const ModelSpec& spec, const ModelParams& params, const ForwardCache& cache,
                     const std::vector<int>* labels, const Tensor* label_probs, Gradient& grad) {
  if (cache.acts.size() != spec.layers.size() + 1) {
    throw std::invalid_argument("backward: cache does not match spec");
  }
  grad.flat.assign(params.flat.size(), 0.0);
  const auto offs = offsets_by_layer(spec, params);

  Tensor delta;
  const double loss = loss_and_dlogits(cache.acts.back(), labels, label_probs, delta);

  for (std::size_t li = spec.layers.size(); li-- > 0;) {
    const Tensor& x = cache.acts[li];
    const Tensor& y = cache.acts[li + 1];
    Tensor dx = Tensor::zeros(x.shape);
    if (const auto* d = std::get_if<DenseLayer>(&spec.layers[li])) {
      // dense consumes a flattened view of x
      Tensor xf = x;
      xf.shape = {x.shape[0], d->in};
      Tensor dxf = Tensor::zeros(xf.shape);
      dense_backward(*d, params.flat.data() + offs[li].weights, xf, delta,
                     grad.flat.data() + offs[li].weights, grad.flat.data() + offs[li].bias, dxf);
      dx.values = std::move(dxf.values);
    } else if (const auto* c = std::get_if<Conv2dLayer>(&spec.layers[li])) {
      conv_backward(*c, params.flat.data() + offs[li].weights, x, delta,
                    grad.flat.data() + offs[li].weights, grad.flat.data() + offs[li].bias, dx);
    } else if (const auto* p = std::get_if<AvgPool2dLayer>(&spec.layers[li])) {
      pool_backward(*p, x, delta, dx);
    } else {
      activation_backward(std::get<ActivationLayer>(spec.layers[li]), x, y, delta, dx);
    }
    delta = std::move(dx);
  }
  grad.input_grad = std::move(delta);
  return loss;
}

}  // namespace

Tensor forward(const ModelSpec& spec, const ModelParams& params, const Tensor& batch,
               ForwardCache* cache) {
  validate_spec(spec);
  if (batch.shape.size() != spec.input_shape.size() + 1 ||
      !std::equal(spec.input_shape.begin(), spec.input_shape.end(), batch.shape.begin() + 1)) {
    throw std::invalid_argument("forward: batch shape does not match spec input");
  }
  if (static_cast<std::int64_t>(params.flat.size()) != param_count(spec)) {
    throw std::invalid_argument("forward: parameter count mismatch");
  }
  const auto offs = offsets_by_layer(spec, params);

  if (cache) {
    cache->acts.clear();
    cache->acts.reserve(spec.layers.size() + 1);
    cache->acts.push_back(batch);
  }
  Tensor cur = batch;
  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    if (const auto* d = std::get_if<DenseLayer>(&spec.layers[li])) {
      Tensor flat = cur;
      flat.shape = {cur.shape[0], d->in};
      cur = dense_forward(*d, params.flat.data() + offs[li].weights,
                          params.flat.data() + offs[li].bias, flat);
    } else if (const auto* c = std::get_if<Conv2dLayer>(&spec.layers[li])) {
      cur = conv_forward(*c, params.flat.data() + offs[li].weights,
                         params.flat.data() + offs[li].bias, cur);
    } else if (const auto* p = std::get_if<AvgPool2dLayer>(&spec.layers[li])) {
      cur = pool_forward(*p, cur);
    } else {
      cur = activation_forward(std::get<ActivationLayer>(spec.layers[li]), cur);
    }
    if (cache) cache->acts.push_back(cur);
  }
  return cur;
}

Tensor softmax(const Tensor& logits) {
  if (logits.shape.size() != 2) throw std::invalid_argument("softmax: expected (B,K) logits");
  Tensor probs = Tensor::zeros(logits.shape);
  const int batch = logits.shape[0], k = logits.shape[1];
  for (int s = 0; s < batch; ++s) {
    const double* z = logits.values.data() + static_cast<std::int64_t>(s) * k;
    double* p = probs.values.data() + static_cast<std::int64_t>(s) * k;
    double zmax = z[0];
    for (int i = 1; i < k; ++i) zmax = std::max(zmax, z[i]);
    double denom = 0.0;
    for (int i = 0; i < k; ++i) {
      p[i] = std::exp(z[i] - zmax);
      denom += p[i];
    }
    for (int i = 0; i < k; ++i) p[i] /= denom;
  }
  return probs;
}

double backward(const ModelSpec& spec, const ModelParams& params, const ForwardCache& cache,
                const std::vector<int>& labels, Gradient& grad) {
  if (static_cast<int>(labels.size()) != cache.acts.back().shape[0]) {
    throw std::invalid_argument("backward: label count does not match batch");
  }
  return backward_impl(spec, params, cache, &labels, nullptr, grad);
}

double backward_soft(const ModelSpec& spec, const ModelParams& params, const ForwardCache& cache,
                     const Tensor& label_probs, Gradient& grad) {
  if (label_probs.shape != cache.acts.back().shape) {
    throw std::invalid_argument("backward_soft: label tensor shape mismatch");
  }
  return backward_impl(spec, params, cache, nullptr, &label_probs, grad);
}

ModelParams sgd_step(const ModelParams& params, const Gradient& grad, double lr) {
  if (grad.flat.size() != params.flat.size()) {
    throw std::invalid_argument("sgd_step: gradient length mismatch");
  }
  if (!(lr > 0.0)) throw std::invalid_argument("sgd_step: lr must be positive");
  ModelParams next = params;
  for (std::size_t i = 0; i < next.flat.size(); ++i) {
    next.flat[i] -= lr * grad.flat[i];
  }
  return next;
}

ModelParams train_local(const ModelSpec& spec, const ModelParams& params,
                        const std::vector<data::LabeledImage>& dataset, const TrainOptions& opts,
                        std::uint64_t seed) {
  if (dataset.empty()) throw std::invalid_argument("train_local: empty dataset");
  if (opts.batch_size < 1) throw std::invalid_argument("train_local: batch_size must be >= 1");

  ModelParams cur = params;
  const std::int64_t sample_size = Tensor::element_count(spec.input_shape);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(seed, "epoch-shuffle", static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const std::size_t count = std::min<std::size_t>(opts.batch_size, order.size() - start);
      std::vector<int> bshape;
      bshape.push_back(static_cast<int>(count));
      bshape.insert(bshape.end(), spec.input_shape.begin(), spec.input_shape.end());
      Tensor batch = Tensor::zeros(bshape);
      std::vector<int> labels(count);
      for (std::size_t i = 0; i < count; ++i) {
        const auto& img = dataset[order[start + i]];
        if (static_cast<std::int64_t>(img.pixels.values.size()) != sample_size) {
          throw std::invalid_argument("train_local: sample shape does not match spec");
        }
        std::copy(img.pixels.values.begin(), img.pixels.values.end(),
                  batch.values.begin() + static_cast<std::int64_t>(i) * sample_size);
        labels[i] = img.label;
      }
      ForwardCache cache;
      forward(spec, cur, batch, &cache);
      Gradient grad;
      backward(spec, cur, cache, labels, grad);
      cur = sgd_step(cur, grad, opts.lr);
    }
  }
  return cur;
}

double evaluate_accuracy(const ModelSpec& spec, const ModelParams& params,
                         const std::vector<data::LabeledImage>& dataset) {
  if (dataset.empty()) throw std::invalid_argument("evaluate_accuracy: empty dataset");
  const std::int64_t sample_size = Tensor::element_count(spec.input_shape);
  const std::size_t chunk = 256;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < dataset.size(); start += chunk) {
    const std::size_t count = std::min(chunk, dataset.size() - start);
    std::vector<int> bshape{static_cast<int>(count)};
    bshape.insert(bshape.end(), spec.input_shape.begin(), spec.input_shape.end());
    Tensor batch = Tensor::zeros(bshape);
    for (std::size_t i = 0; i < count; ++i) {
      std::copy(dataset[start + i].pixels.values.begin(), dataset[start + i].pixels.values.end(),
                batch.values.begin() + static_cast<std::int64_t>(i) * sample_size);
    }
    const Tensor logits = forward(spec, params, batch);
    for (std::size_t i = 0; i < count; ++i) {
      const double* z = logits.values.data() + static_cast<std::int64_t>(i) * spec.num_classes;
      int arg = 0;
      for (int k = 1; k < spec.num_classes; ++k) {
        if (z[k] > z[arg]) arg = k;
      }
      if (arg == dataset[start + i].label) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

double evaluate_loss(const ModelSpec& spec, const ModelParams& params,
                     const std::vector<data::LabeledImage>& dataset) {
  if (dataset.empty()) throw std::invalid_argument("evaluate_loss: empty dataset");
  const std::int64_t sample_size = Tensor::element_count(spec.input_shape);
  double total = 0.0;
  const std::size_t chunk = 256;
  for (std::size_t start = 0; start < dataset.size(); start += chunk) {
    const std::size_t count = std::min(chunk, dataset.size() - start);
    std::vector<int> bshape{static_cast<int>(count)};
    bshape.insert(bshape.end(), spec.input_shape.begin(), spec.input_shape.end());
    Tensor batch = Tensor::zeros(bshape);
    std::vector<int> labels(count);
    for (std::size_t i = 0; i < count; ++i) {
      std::copy(dataset[start + i].pixels.values.begin(), dataset[start + i].pixels.values.end(),
                batch.values.begin() + static_cast<std::int64_t>(i) * sample_size);
      labels[i] = dataset[start + i].label;
    }
    ForwardCache cache;
    forward(spec, params, batch, &cache);
    Gradient grad;
    total += backward(spec, params, cache, labels, grad) * static_cast<double>(count);
  }
  return total / static_cast<double>(dataset.size());
}

ModelSpec lenet_lite(int in_channels, int height, int width, int num_classes, Activation act) {
  ModelSpec spec;
  spec.input_shape = {in_channels, height, width};
  spec.num_classes = num_classes;
  const int h1 = height - 4, w1 = width - 4;          // conv 5x5
  const int h2 = h1 / 2, w2 = w1 / 2;                 // pool 2
  const int h3 = h2 - 4, w3 = w2 - 4;                 // conv 5x5
  const int h4 = h3 / 2, w4 = w3 / 2;                 // pool 2
  spec.layers = {
      Conv2dLayer{in_channels, 6, 5}, ActivationLayer{act}, AvgPool2dLayer{2},
      Conv2dLayer{6, 16, 5},          ActivationLayer{act}, AvgPool2dLayer{2},
      DenseLayer{16 * h4 * w4, 120},  ActivationLayer{act},
      DenseLayer{120, 84},            ActivationLayer{act},
      DenseLayer{84, num_classes},
  };
  validate_spec(spec);
  return spec;
}

ModelSpec toy_cnn(int in_channels, int height, int width, int num_classes, Activation act) {
  ModelSpec spec;
  spec.input_shape = {in_channels, height, width};
  spec.num_classes = num_classes;
  const int h1 = height - 2, w1 = width - 2;  // conv 3x3
  const int h2 = h1 / 2, w2 = w1 / 2;         // pool 2
  spec.layers = {
      Conv2dLayer{in_channels, 4, 3}, ActivationLayer{act}, AvgPool2dLayer{2},
      DenseLayer{4 * h2 * w2, 32},    ActivationLayer{act},
      DenseLayer{32, num_classes},
  };
  validate_spec(spec);
  return spec;
}

ModelSpec mlp(const std::vector<int>& input_shape, const std::vector<int>& hidden,
              int num_classes, Activation act) {
  ModelSpec spec;
  spec.input_shape = input_shape;
  spec.num_classes = num_classes;
  int in = static_cast<int>(Tensor::element_count(input_shape));
  for (int h : hidden) {
    spec.layers.push_back(DenseLayer{in, h});
    spec.layers.push_back(ActivationLayer{act});
    in = h;
  }
  spec.layers.push_back(DenseLayer{in, num_classes});
  validate_spec(spec);
  return spec;
}

ModelSpec model_spec_by_name(const std::string& name, const std::vector<int>& input_shape,
                             int num_classes) {
  auto need_image = [&](const char* who) {
    if (input_shape.size() != 3) {
      throw std::invalid_argument(std::string(who) + " needs a (C,H,W) input shape");
    }
  };
  if (name == "lenet") {
    need_image("lenet");
    return lenet_lite(input_shape[0], input_shape[1], input_shape[2], num_classes);
  }
  if (name == "toy-cnn") {
    need_image("toy-cnn");
    return toy_cnn(input_shape[0], input_shape[1], input_shape[2], num_classes);
  }
  if (name == "mlp") {
    const int edge = input_shape.size() == 3 ? input_shape[1] : input_shape[0];
    return mlp(input_shape, {2 * edge}, num_classes);
  }
  if (name.rfind("mlp:", 0) == 0) {
    std::vector<int> hidden;
    std::stringstream ss(name.substr(4));
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      const int h = std::stoi(tok);
      if (h <= 0) throw std::invalid_argument("mlp hidden sizes must be positive");
      hidden.push_back(h);
    }
    return mlp(input_shape, hidden, num_classes);
  }
  throw std::invalid_argument("unknown model spec name: " + name);
}

}  // namespace heintfl::nn
