#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "driftforge/rng.hpp"

namespace driftforge {

enum class Activation { relu, sigmoid, identity };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

struct LayerSpec {
  int in = 0;
  int out = 0;
  Activation act = Activation::identity;
};

// Flat parameter storage: per layer, the out-by-in weight matrix (row major)
// followed by the bias vector.
struct DenseNet {
  std::vector<LayerSpec> layers;
  std::vector<double> params;
  std::vector<std::size_t> offsets;

  int input_size() const { return layers.empty() ? 0 : layers.front().in; }
  int output_size() const { return layers.empty() ? 0 : layers.back().out; }
  std::size_t param_count() const { return params.size(); }
};

// He-uniform weights on relu layers, Glorot-uniform elsewhere, zero biases.
DenseNet make_net(const std::vector<LayerSpec>& layers, Rng& rng);

// Zeroes one layer's weights and bias (used to start residual heads as the
// identity map).
void zero_layer(DenseNet& net, std::size_t layer_index);

// Post-activation values per layer; acts[0] is the input. Enough to run the
// backward pass for every activation used here.
struct ForwardTrace {
  std::vector<std::vector<double>> acts;
};

std::vector<double> forward(const DenseNet& net, std::span<const double> x,
                            ForwardTrace* trace = nullptr);

// Accumulates parameter gradients into grad (size param_count) and returns
// the gradient with respect to the input vector.
std::vector<double> backward(const DenseNet& net, const ForwardTrace& trace,
                             std::span<const double> upstream,
                             std::span<double> grad);

struct AdamState {
  std::vector<double> m, v;
  long long t = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdamState make_adam(std::size_t n_params, double lr);
void adam_step(std::span<double> params, std::span<const double> grads,
               AdamState& st);

// Binary cross-entropy with the prediction clamped to [1e-7, 1 - 1e-7].
double bce(double y, double yhat);
double bce_grad(double y, double yhat);  // d bce / d yhat at the clamped value

}  // namespace driftforge
