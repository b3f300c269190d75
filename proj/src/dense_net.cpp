#include "driftforge/dense_net.hpp"

#include <algorithm>
#include <cmath>

#include "driftforge/errors.hpp"

namespace driftforge {

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "identity") return Activation::identity;
  throw ValidationError("unknown activation: " + s);
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::identity: return "identity";
  }
  return "?";
}

DenseNet make_net(const std::vector<LayerSpec>& layers, Rng& rng) {
  if (layers.empty()) throw ValidationError("make_net: no layers");
  DenseNet net;
  net.layers = layers;
  std::size_t total = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& spec = layers[l];
    if (spec.in < 1 || spec.out < 1)
      throw ValidationError("make_net: layer sizes must be >= 1");
    if (l > 0 && spec.in != layers[l - 1].out)
      throw ValidationError("make_net: layer dimensions do not chain");
    net.offsets.push_back(total);
    total += static_cast<std::size_t>(spec.out) * spec.in + spec.out;
  }
  net.params.assign(total, 0.0);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& spec = layers[l];
    const double limit =
        spec.act == Activation::relu
            ? std::sqrt(6.0 / spec.in)
            : std::sqrt(6.0 / (spec.in + spec.out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    double* w = net.params.data() + net.offsets[l];
    for (int k = 0; k < spec.out * spec.in; ++k) w[k] = dist(rng);
  }
  return net;
}

void zero_layer(DenseNet& net, std::size_t layer_index) {
  if (layer_index >= net.layers.size())
    throw ValidationError("zero_layer: no such layer");
  const auto& spec = net.layers[layer_index];
  const std::size_t n = static_cast<std::size_t>(spec.out) * spec.in + spec.out;
  std::fill_n(net.params.begin() +
                  static_cast<std::ptrdiff_t>(net.offsets[layer_index]),
              n, 0.0);
}

std::vector<double> forward(const DenseNet& net, std::span<const double> x,
                            ForwardTrace* trace) {
  if (static_cast<int>(x.size()) != net.input_size())
    throw ValidationError("forward: input size mismatch");
  std::vector<double> cur(x.begin(), x.end());
  if (trace) {
    trace->acts.clear();
    trace->acts.push_back(cur);
  }
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& spec = net.layers[l];
    const double* w = net.params.data() + net.offsets[l];
    const double* b = w + static_cast<std::size_t>(spec.out) * spec.in;
    std::vector<double> next(static_cast<std::size_t>(spec.out));
    for (int o = 0; o < spec.out; ++o) {
      double acc = b[o];
      const double* row = w + static_cast<std::size_t>(o) * spec.in;
      for (int i = 0; i < spec.in; ++i) acc += row[i] * cur[i];
      switch (spec.act) {
        case Activation::relu: acc = acc > 0.0 ? acc : 0.0; break;
        case Activation::sigmoid: acc = 1.0 / (1.0 + std::exp(-acc)); break;
        case Activation::identity: break;
      }
      next[static_cast<std::size_t>(o)] = acc;
    }
    cur = std::move(next);
    if (trace) trace->acts.push_back(cur);
  }
  return cur;
}

std::vector<double> backward(const DenseNet& net, const ForwardTrace& trace,
                             std::span<const double> upstream,
                             std::span<double> grad) {
  if (trace.acts.size() != net.layers.size() + 1)
    throw ValidationError("backward: trace does not match net");
  if (static_cast<int>(upstream.size()) != net.output_size())
    throw ValidationError("backward: upstream size mismatch");
  if (grad.size() != net.param_count())
    throw ValidationError("backward: grad buffer size mismatch");

  std::vector<double> delta(upstream.begin(), upstream.end());
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const auto& spec = net.layers[li];
    const auto& y = trace.acts[li + 1];
    const auto& x = trace.acts[li];
    // fold the activation derivative into delta; relu keeps subgradient 0 at 0
    for (int o = 0; o < spec.out; ++o) {
      const double yo = y[static_cast<std::size_t>(o)];
      switch (spec.act) {
        case Activation::relu:
          if (!(yo > 0.0)) delta[static_cast<std::size_t>(o)] = 0.0;
          break;
        case Activation::sigmoid:
          delta[static_cast<std::size_t>(o)] *= yo * (1.0 - yo);
          break;
        case Activation::identity: break;
      }
    }
    const double* w = net.params.data() + net.offsets[li];
    double* gw = grad.data() + net.offsets[li];
    double* gb = gw + static_cast<std::size_t>(spec.out) * spec.in;
    std::vector<double> prev(static_cast<std::size_t>(spec.in), 0.0);
    for (int o = 0; o < spec.out; ++o) {
      const double d = delta[static_cast<std::size_t>(o)];
      if (d == 0.0) continue;
      const double* row = w + static_cast<std::size_t>(o) * spec.in;
      double* grow = gw + static_cast<std::size_t>(o) * spec.in;
      for (int i = 0; i < spec.in; ++i) {
        grow[i] += d * x[static_cast<std::size_t>(i)];
        prev[static_cast<std::size_t>(i)] += d * row[i];
      }
      gb[o] += d;
    }
    delta = std::move(prev);
  }
  return delta;
}

AdamState make_adam(std::size_t n_params, double lr) {
  AdamState st;
  st.m.assign(n_params, 0.0);
  st.v.assign(n_params, 0.0);
  st.lr = lr;
  return st;
}

void adam_step(std::span<double> params, std::span<const double> grads,
               AdamState& st) {
  if (params.size() != grads.size() || params.size() != st.m.size())
    throw ValidationError("adam_step: size mismatch");
  st.t += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g * g;
    const double mhat = st.m[i] / bc1;
    const double vhat = st.v[i] / bc2;
    params[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
  }
}

namespace {
constexpr double kBceClamp = 1e-7;

double clamp_prob(double yhat) {
  return std::clamp(yhat, kBceClamp, 1.0 - kBceClamp);
}
}  // namespace

double bce(double y, double yhat) {
  const double p = clamp_prob(yhat);
  return (y - 1.0) * std::log(1.0 - p) - y * std::log(p);
}

double bce_grad(double y, double yhat) {
  const double p = clamp_prob(yhat);
  return (1.0 - y) / (1.0 - p) - y / p;
}

}  // namespace driftforge
