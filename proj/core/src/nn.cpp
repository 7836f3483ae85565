#include "tnd/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tnd/errors.hpp"

namespace tnd {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d:
      return "conv2d";
    case LayerKind::relu:
      return "relu";
    case LayerKind::max_pool:
      return "max_pool";
    case LayerKind::flatten:
      return "flatten";
    case LayerKind::dense:
      return "dense";
  }
  return "relu";
}

LayerKind layer_kind_from_string(const std::string& name) {
  if (name == "conv2d") return LayerKind::conv2d;
  if (name == "relu") return LayerKind::relu;
  if (name == "max_pool") return LayerKind::max_pool;
  if (name == "flatten") return LayerKind::flatten;
  if (name == "dense") return LayerKind::dense;
  throw FormatError("unknown layer kind '" + name + "'");
}

LayerSpec LayerSpec::conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, Padding padding,
                            double input_scale) {
  LayerSpec s;
  s.kind = LayerKind::conv2d;
  s.in_channels = in_channels;
  s.out_channels = out_channels;
  s.kernel = kernel;
  s.padding = padding;
  s.input_scale = input_scale;
  return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::max_pool() {
  LayerSpec s;
  s.kind = LayerKind::max_pool;
  return s;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec s;
  s.kind = LayerKind::flatten;
  return s;
}

LayerSpec LayerSpec::dense(std::size_t in_features, std::size_t out_features, double input_scale) {
  LayerSpec s;
  s.kind = LayerKind::dense;
  s.in_features = in_features;
  s.out_features = out_features;
  s.input_scale = input_scale;
  return s;
}

namespace {

std::string layer_label(std::size_t index, const LayerSpec& spec) {
  return "layer " + std::to_string(index) + " (" + to_string(spec.kind) + ")";
}

std::size_t conv_pad(const LayerSpec& s) { return s.padding == Padding::same ? s.kernel / 2 : 0; }

Shape output_shape_of(std::size_t index, const LayerSpec& s, const Shape& in) {
  switch (s.kind) {
    case LayerKind::conv2d: {
      if (in.size() != 3 || in[0] != s.in_channels) {
        throw ShapeError(layer_label(index, s) + " expects " + std::to_string(s.in_channels) +
                         " input channels, got " + shape_string(in));
      }
      if (s.kernel == 0 || (s.padding == Padding::same && s.kernel % 2 == 0)) {
        throw ShapeError(layer_label(index, s) + " needs a positive (odd for same padding) kernel");
      }
      const std::size_t pad = conv_pad(s);
      if (in[1] + 2 * pad < s.kernel || in[2] + 2 * pad < s.kernel) {
        throw ShapeError(layer_label(index, s) + " kernel larger than input " + shape_string(in));
      }
      return {s.out_channels, in[1] + 2 * pad - s.kernel + 1, in[2] + 2 * pad - s.kernel + 1};
    }
    case LayerKind::relu:
      return in;
    case LayerKind::max_pool:
      if (in.size() != 3 || in[1] < 2 || in[2] < 2) {
        throw ShapeError(layer_label(index, s) + " needs a (C, H>=2, W>=2) input, got " + shape_string(in));
      }
      return {in[0], in[1] / 2, in[2] / 2};
    case LayerKind::flatten:
      return {shape_volume(in)};
    case LayerKind::dense:
      if (in.size() != 1 || in[0] != s.in_features) {
        throw ShapeError(layer_label(index, s) + " expects " + std::to_string(s.in_features) + " features, got " +
                         shape_string(in));
      }
      return {s.out_features};
  }
  return in;
}

void conv_forward(const Layer& layer, const Tensor& in, Tensor& out) {
  const auto& s = layer.spec;
  const std::size_t C = in.shape()[0], H = in.shape()[1], W = in.shape()[2];
  const std::size_t OH = out.shape()[1], OW = out.shape()[2];
  const std::size_t K = s.kernel, pad = conv_pad(s);
  const double* w = layer.weight.data();
  for (std::size_t oc = 0; oc < s.out_channels; ++oc) {
    double* o = out.data() + oc * OH * OW;
    std::fill(o, o + OH * OW, layer.bias[oc]);
    for (std::size_t ic = 0; ic < C; ++ic) {
      const double* src = in.data() + ic * H * W;
      for (std::size_t ky = 0; ky < K; ++ky) {
        for (std::size_t kx = 0; kx < K; ++kx) {
          const double wv = w[((oc * C + ic) * K + ky) * K + kx] * s.input_scale;
          const std::size_t ox0 = kx < pad ? pad - kx : 0;
          const std::size_t ox1 = std::min(OW, W + pad - kx);
          for (std::size_t oy = 0; oy < OH; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
            const std::ptrdiff_t base = iy * static_cast<std::ptrdiff_t>(W) + static_cast<std::ptrdiff_t>(kx) -
                                        static_cast<std::ptrdiff_t>(pad);
            double* orow = o + oy * OW;
            for (std::size_t ox = ox0; ox < ox1; ++ox) orow[ox] += wv * src[base + static_cast<std::ptrdiff_t>(ox)];
          }
        }
      }
    }
  }
}

void conv_backward(const Layer& layer, const Tensor& in, std::span<const double> dout, Tensor* din, Tensor* dweight,
                   Tensor* dbias) {
  const auto& s = layer.spec;
  const std::size_t C = in.shape()[0], H = in.shape()[1], W = in.shape()[2];
  const std::size_t OH = layer.output_shape[1], OW = layer.output_shape[2];
  const std::size_t K = s.kernel, pad = conv_pad(s);
  const double* w = layer.weight.data();
  for (std::size_t oc = 0; oc < s.out_channels; ++oc) {
    const double* g = dout.data() + oc * OH * OW;
    if (dbias) {
      double acc = 0.0;
      for (std::size_t i = 0; i < OH * OW; ++i) acc += g[i];
      (*dbias)[oc] += acc;
    }
    for (std::size_t ic = 0; ic < C; ++ic) {
      const double* src = in.data() + ic * H * W;
      double* dsrc = din ? din->data() + ic * H * W : nullptr;
      for (std::size_t ky = 0; ky < K; ++ky) {
        for (std::size_t kx = 0; kx < K; ++kx) {
          const std::size_t widx = ((oc * C + ic) * K + ky) * K + kx;
          const double wv = w[widx] * s.input_scale;
          const std::size_t ox0 = kx < pad ? pad - kx : 0;
          const std::size_t ox1 = std::min(OW, W + pad - kx);
          double acc = 0.0;
          for (std::size_t oy = 0; oy < OH; ++oy) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
            const std::ptrdiff_t base = iy * static_cast<std::ptrdiff_t>(W) + static_cast<std::ptrdiff_t>(kx) -
                                        static_cast<std::ptrdiff_t>(pad);
            const double* grow = g + oy * OW;
            if (dsrc) {
              for (std::size_t ox = ox0; ox < ox1; ++ox) dsrc[base + static_cast<std::ptrdiff_t>(ox)] += wv * grow[ox];
            }
            if (dweight) {
              for (std::size_t ox = ox0; ox < ox1; ++ox) acc += grow[ox] * src[base + static_cast<std::ptrdiff_t>(ox)];
            }
          }
          if (dweight) (*dweight)[widx] += acc * s.input_scale;
        }
      }
    }
  }
}

void pool_forward(const Tensor& in, Tensor& out) {
  const std::size_t C = in.shape()[0], H = in.shape()[1], W = in.shape()[2];
  const std::size_t OH = H / 2, OW = W / 2;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t oy = 0; oy < OH; ++oy) {
      for (std::size_t ox = 0; ox < OW; ++ox) {
        const double* p = in.data() + (c * H + 2 * oy) * W + 2 * ox;
        out[(c * OH + oy) * OW + ox] = std::max(std::max(p[0], p[1]), std::max(p[W], p[W + 1]));
      }
    }
  }
}

void pool_backward(const Tensor& in, std::span<const double> dout, Tensor& din) {
  const std::size_t C = in.shape()[0], H = in.shape()[1], W = in.shape()[2];
  const std::size_t OH = H / 2, OW = W / 2;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t oy = 0; oy < OH; ++oy) {
      for (std::size_t ox = 0; ox < OW; ++ox) {
        const std::size_t base = (c * H + 2 * oy) * W + 2 * ox;
        const std::size_t cand[4] = {base, base + 1, base + W, base + W + 1};
        std::size_t best = cand[0];
        for (std::size_t k = 1; k < 4; ++k) {
          if (in[cand[k]] > in[best]) best = cand[k];
        }
        din[best] += dout[(c * OH + oy) * OW + ox];
      }
    }
  }
}

void dense_forward(const Layer& layer, const Tensor& in, Tensor& out) {
  const std::size_t I = layer.spec.in_features, O = layer.spec.out_features;
  const double* w = layer.weight.data();
  for (std::size_t o = 0; o < O; ++o) {
    double acc = 0.0;
    const double* row = w + o * I;
    for (std::size_t i = 0; i < I; ++i) acc += row[i] * in[i];
    out[o] = layer.bias[o] + acc * layer.spec.input_scale;
  }
}

void dense_backward(const Layer& layer, const Tensor& in, std::span<const double> dout, Tensor* din, Tensor* dweight,
                    Tensor* dbias) {
  const std::size_t I = layer.spec.in_features, O = layer.spec.out_features;
  const double scale = layer.spec.input_scale;
  const double* w = layer.weight.data();
  for (std::size_t o = 0; o < O; ++o) {
    const double g = dout[o];
    if (dbias) (*dbias)[o] += g;
    if (g == 0.0) continue;
    if (din) {
      const double gs = g * scale;
      const double* row = w + o * I;
      double* d = din->data();
      for (std::size_t i = 0; i < I; ++i) d[i] += gs * row[i];
    }
    if (dweight) {
      const double gs = g * scale;
      double* drow = dweight->data() + o * I;
      for (std::size_t i = 0; i < I; ++i) drow[i] += gs * in[i];
    }
  }
}

}  // namespace

Network::Network(Shape input_shape, const std::vector<LayerSpec>& specs) : input_shape_(std::move(input_shape)) {
  if (specs.empty()) throw ShapeError("network needs at least one layer");
  Shape current = input_shape_;
  layers_.reserve(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    Layer layer;
    layer.spec = specs[i];
    layer.input_shape = current;
    layer.output_shape = output_shape_of(i, specs[i], current);
    if (specs[i].kind == LayerKind::conv2d) {
      layer.weight = Tensor({specs[i].out_channels, specs[i].in_channels, specs[i].kernel, specs[i].kernel});
      layer.bias = Tensor({specs[i].out_channels});
    } else if (specs[i].kind == LayerKind::dense) {
      layer.weight = Tensor({specs[i].out_features, specs[i].in_features});
      layer.bias = Tensor({specs[i].out_features});
    }
    current = layer.output_shape;
    layers_.push_back(std::move(layer));
  }
  if (current.size() != 1) throw ShapeError("network output must be a logit vector, got " + shape_string(current));
  num_classes_ = current[0];
  auto last_dense = std::find_if(layers_.rbegin(), layers_.rend(),
                                 [](const Layer& l) { return l.spec.kind == LayerKind::dense; });
  if (last_dense == layers_.rend()) throw ShapeError("network needs a final fully-connected layer");
  representation_layer_ = static_cast<std::size_t>(layers_.rend() - last_dense) - 1;
  for (std::size_t i = representation_layer_ + 1; i < layers_.size(); ++i) {
    if (layers_[i].spec.kind != LayerKind::relu) {
      throw ShapeError(layer_label(i, layers_[i].spec) + " follows the final fully-connected layer");
    }
  }
  penultimate_dim_ = layers_[representation_layer_].spec.in_features;
}

Network Network::initialized(Shape input_shape, const std::vector<LayerSpec>& specs, std::uint64_t seed) {
  Network net(std::move(input_shape), specs);
  std::mt19937_64 rng(seed);
  for (auto& layer : net.layers_) {
    if (!layer.spec.has_parameters()) continue;
    const std::size_t fan_in = layer.weight.size() / layer.weight.shape()[0];
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (double& v : layer.weight.values()) v = dist(rng);
  }
  return net;
}

std::size_t Network::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

void Network::set_parameters(std::size_t index, Tensor weight, Tensor bias) {
  if (index >= layers_.size()) throw ShapeError("set_parameters: layer index out of range");
  Layer& layer = layers_[index];
  if (weight.shape() != layer.weight.shape() || bias.shape() != layer.bias.shape()) {
    throw ShapeError(layer_label(index, layer.spec) + " parameter shape mismatch: got " + shape_string(weight.shape()) +
                     "/" + shape_string(bias.shape()) + ", expected " + shape_string(layer.weight.shape()) + "/" +
                     shape_string(layer.bias.shape()));
  }
  layer.weight = std::move(weight);
  layer.bias = std::move(bias);
}

std::vector<LayerSpec> desk_cnn_layers(const Shape& input_shape, std::size_t num_classes, std::size_t conv1,
                                       std::size_t conv2, std::size_t hidden) {
  if (input_shape.size() != 3) throw ShapeError("desk CNN expects a (C, H, W) input");
  const std::size_t flat = conv2 * (input_shape[1] / 4) * (input_shape[2] / 4);
  std::vector<LayerSpec> layers{LayerSpec::conv2d(input_shape[0], conv1, 3, Padding::same, 1.0 / 255.0),
                                LayerSpec::relu(),
                                LayerSpec::max_pool(),
                                LayerSpec::conv2d(conv1, conv2, 3, Padding::same),
                                LayerSpec::relu(),
                                LayerSpec::max_pool(),
                                LayerSpec::flatten()};
  if (hidden > 0) {
    layers.push_back(LayerSpec::dense(flat, hidden));
    layers.push_back(LayerSpec::relu());
  }
  layers.push_back(LayerSpec::dense(hidden > 0 ? hidden : flat, num_classes));
  return layers;
}

ForwardTrace forward(const Network& net, const Tensor& x) {
  if (x.shape() != net.input_shape()) {
    throw ShapeError("input shape " + shape_string(x.shape()) + " does not match layer 0 input " +
                     shape_string(net.input_shape()));
  }
  const auto& layers = net.layers();
  ForwardTrace trace;
  trace.activations.reserve(layers.size() + 1);
  trace.activations.push_back(x);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& layer = layers[i];
    const Tensor& in = trace.activations.back();
    Tensor out(layer.output_shape);
    switch (layer.spec.kind) {
      case LayerKind::conv2d:
        conv_forward(layer, in, out);
        break;
      case LayerKind::relu:
        for (std::size_t j = 0; j < in.size(); ++j) out[j] = in[j] > 0.0 ? in[j] : 0.0;
        break;
      case LayerKind::max_pool:
        pool_forward(in, out);
        break;
      case LayerKind::flatten:
        std::copy(in.data(), in.data() + in.size(), out.data());
        break;
      case LayerKind::dense:
        dense_forward(layer, in, out);
        break;
    }
    trace.activations.push_back(std::move(out));
  }
  trace.logits = trace.activations.back();
  if (!trace.logits.all_finite()) throw NumericalError("forward produced non-finite logits");
  trace.representation = trace.activations[net.representation_layer()];
  return trace;
}

Tensor predict_logits(const Network& net, const Tensor& x) { return forward(net, x).logits; }

std::size_t predict(const Network& net, const Tensor& x) { return argmax(predict_logits(net, x).values()); }

ParameterGradients ParameterGradients::zeros_like(const Network& net) {
  ParameterGradients g;
  for (const auto& l : net.layers()) {
    g.weight.emplace_back(l.weight.shape());
    g.bias.emplace_back(l.bias.shape());
  }
  return g;
}

Tensor backward(const Network& net, const ForwardTrace& trace, std::span<const double> d_logits,
                std::span<const double> d_representation, ParameterGradients* grads, bool need_input_gradient) {
  const auto& layers = net.layers();
  if (d_logits.size() != net.num_classes()) throw ShapeError("backward: logit seed has wrong length");
  if (!d_representation.empty() && d_representation.size() != net.penultimate_dim()) {
    throw ShapeError("backward: representation seed has wrong length");
  }
  Tensor grad(trace.activations.back().shape(), std::vector<double>(d_logits.begin(), d_logits.end()));
  for (std::size_t i = layers.size(); i-- > 0;) {
    const Layer& layer = layers[i];
    const Tensor& in = trace.activations[i];
    const bool want_din = i > 0 || need_input_gradient;
    if (!want_din && !layer.spec.has_parameters()) return {};
    Tensor din;
    if (want_din) din = Tensor(layer.input_shape);
    Tensor* dw = grads ? &grads->weight[i] : nullptr;
    Tensor* db = grads ? &grads->bias[i] : nullptr;
    switch (layer.spec.kind) {
      case LayerKind::conv2d:
        conv_backward(layer, in, grad.values(), want_din ? &din : nullptr, dw, db);
        break;
      case LayerKind::relu:
        for (std::size_t j = 0; j < in.size(); ++j) din[j] = in[j] > 0.0 ? grad[j] : 0.0;
        break;
      case LayerKind::max_pool:
        pool_backward(in, grad.values(), din);
        break;
      case LayerKind::flatten:
        std::copy(grad.data(), grad.data() + grad.size(), din.data());
        break;
      case LayerKind::dense:
        dense_backward(layer, in, grad.values(), want_din ? &din : nullptr, dw, db);
        break;
    }
    if (!want_din) return {};
    if (i == net.representation_layer() && !d_representation.empty()) {
      for (std::size_t j = 0; j < d_representation.size(); ++j) din[j] += d_representation[j];
    }
    if (!din.all_finite()) throw NumericalError("non-finite gradient at " + layer_label(i, layer.spec));
    grad = std::move(din);
  }
  return grad;
}

InputGradient input_gradient(const Network& net, const Tensor& x, const ScalarHead& head) {
  InputGradient out;
  out.trace = forward(net, x);
  HeadValue hv = head(out.trace.logits.values(), out.trace.representation.values());
  if (hv.d_logits.empty()) hv.d_logits.assign(net.num_classes(), 0.0);
  out.value = hv.value;
  out.gradient = backward(net, out.trace, hv.d_logits, hv.d_representation);
  return out;
}

namespace heads {

ScalarHead logit(std::size_t index) {
  return [index](std::span<const double> logits, std::span<const double>) {
    HeadValue hv;
    hv.value = logits[index];
    hv.d_logits.assign(logits.size(), 0.0);
    hv.d_logits[index] = 1.0;
    return hv;
  };
}

ScalarHead weighted_activation(std::vector<double> weights) {
  return [weights = std::move(weights)](std::span<const double> logits, std::span<const double> repr) {
    HeadValue hv;
    hv.value = dot(weights, repr);
    hv.d_logits.assign(logits.size(), 0.0);
    hv.d_representation = weights;
    return hv;
  };
}

ScalarHead sum_representation() {
  return [](std::span<const double> logits, std::span<const double> repr) {
    HeadValue hv;
    hv.value = std::accumulate(repr.begin(), repr.end(), 0.0);
    hv.d_logits.assign(logits.size(), 0.0);
    hv.d_representation.assign(repr.size(), 1.0);
    return hv;
  };
}

namespace {
// First index of the largest logit excluding `skip`.
std::size_t best_other(std::span<const double> logits, std::size_t skip) {
  std::size_t best = skip == 0 ? 1 : 0;
  for (std::size_t t = 0; t < logits.size(); ++t) {
    if (t != skip && logits[t] > logits[best]) best = t;
  }
  return best;
}
}  // namespace

ScalarHead cw_targeted(std::size_t target, double tau) {
  return [target, tau](std::span<const double> logits, std::span<const double>) {
    HeadValue hv;
    hv.d_logits.assign(logits.size(), 0.0);
    const std::size_t other = best_other(logits, target);
    const double margin = logits[other] - logits[target];
    if (margin > -tau) {
      hv.value = margin;
      hv.d_logits[other] = 1.0;
      hv.d_logits[target] = -1.0;
    } else {
      hv.value = -tau;
    }
    return hv;
  };
}

ScalarHead cw_untargeted(std::size_t label, double tau) {
  return [label, tau](std::span<const double> logits, std::span<const double>) {
    HeadValue hv;
    hv.d_logits.assign(logits.size(), 0.0);
    const std::size_t other = best_other(logits, label);
    const double margin = logits[label] - logits[other];
    if (margin > -tau) {
      hv.value = margin;
      hv.d_logits[label] = 1.0;
      hv.d_logits[other] = -1.0;
    } else {
      hv.value = -tau;
    }
    return hv;
  };
}

}  // namespace heads

Tensor sample(const Tensor& batch, std::size_t i) {
  if (batch.rank() < 2 || i >= batch.shape()[0]) throw ShapeError("sample index out of range");
  Shape inner(batch.shape().begin() + 1, batch.shape().end());
  const std::size_t n = shape_volume(inner);
  return Tensor(std::move(inner), std::vector<double>(batch.data() + i * n, batch.data() + (i + 1) * n));
}

double accuracy(const Network& net, const Tensor& images, std::span<const int> labels) {
  if (labels.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (static_cast<int>(predict(net, sample(images, i))) == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

TrainResult train(const Network& initial, const Tensor& images, std::span<const int> labels, const TrainConfig& cfg) {
  const std::size_t n = labels.size();
  if (images.rank() != 4 || images.shape()[0] != n) throw ShapeError("train: images must be (N, C, H, W) with N labels");
  const int K = static_cast<int>(initial.num_classes());
  for (int y : labels) {
    if (y < 0 || y >= K) throw DataError("train: label " + std::to_string(y) + " outside [0, K)");
  }
  if (cfg.batch_size == 0) throw UsageError("train: batch size must be positive");

  TrainResult result{initial, 0.0, 0.0};
  if (cfg.epochs == 0 || n == 0) {
    result.train_accuracy = accuracy(initial, images, labels);
    return result;
  }

  Network& net = result.network;
  std::vector<Tensor> velocity_w, velocity_b;
  for (const auto& l : net.layers()) {
    velocity_w.emplace_back(l.weight.shape());
    velocity_b.emplace_back(l.bias.shape());
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      auto grads = ParameterGradients::zeros_like(net);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        ForwardTrace trace = forward(net, sample(images, idx));
        std::vector<double> p = softmax(trace.logits.values());
        const auto y = static_cast<std::size_t>(labels[idx]);
        epoch_loss += -std::log(std::max(p[y], 1e-300));
        if (argmax(trace.logits.values()) == y) ++correct;
        p[y] -= 1.0;
        backward(net, trace, p, {}, &grads, false);
      }
      if (!std::isfinite(epoch_loss)) {
        throw NumericalError("training diverged in epoch " + std::to_string(epoch) +
                             " (non-finite loss); try a smaller learning rate");
      }
      const double step = cfg.learning_rate / static_cast<double>(end - start);
      for (std::size_t i = 0; i < net.layers().size(); ++i) {
        const Layer& layer = net.layers()[i];
        if (!layer.spec.has_parameters()) continue;
        Tensor w = layer.weight;
        Tensor bias = layer.bias;
        for (std::size_t j = 0; j < w.size(); ++j) {
          velocity_w[i][j] = cfg.momentum * velocity_w[i][j] - step * grads.weight[i][j];
          w[j] += velocity_w[i][j];
        }
        for (std::size_t j = 0; j < bias.size(); ++j) {
          velocity_b[i][j] = cfg.momentum * velocity_b[i][j] - step * grads.bias[i][j];
          bias[j] += velocity_b[i][j];
        }
        if (!w.all_finite() || !bias.all_finite()) {
          throw NumericalError("training diverged in epoch " + std::to_string(epoch) +
                               " (non-finite weights); try a smaller learning rate");
        }
        net.set_parameters(i, std::move(w), std::move(bias));
      }
    }
    result.final_loss = epoch_loss / static_cast<double>(n);
    result.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
  }
  return result;
}

std::vector<int> Provenance::target_labels() const {
  std::vector<int> out;
  for (const auto& a : attacks) {
    if (std::find(out.begin(), out.end(), a.target_label) == out.end()) out.push_back(a.target_label);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace tnd
