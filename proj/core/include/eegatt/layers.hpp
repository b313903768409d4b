// Small reusable layer pieces shared by the model and the attention blocks.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "eegatt/rng.hpp"
#include "eegatt/tape.hpp"

namespace eegatt {

inline Tensor<double> uniform_fan_in(std::vector<int64_t> shape, int64_t fan_in, SplitMix64& rng) {
  Tensor<double> t(std::move(shape));
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

// Uniform fan-in init, the conventional default for convs and linears.
template <typename S>
Param<S> make_param(const std::string& name, std::vector<int64_t> shape, int64_t fan_in, SplitMix64& rng) {
  return Param<S>(name, uniform_fan_in(std::move(shape), fan_in, rng).template cast<S>());
}

template <typename S>
Param<S> const_param(const std::string& name, std::vector<int64_t> shape, double value) {
  return Param<S>(name, Tensor<S>(std::move(shape), static_cast<S>(value)));
}

template <typename S>
int apply_channel_gate(Tape<S>& t, int x, int gate) {  // gate [B,C] over [B,C,T]
  const auto& xs = t.value(x).shape;
  return t.mul(x, t.reshape(gate, {xs[0], xs[1], 1}));
}

template <typename S>
int apply_time_gate(Tape<S>& t, int x, int gate) {  // gate [B,T] over [B,C,T]
  const auto& xs = t.value(x).shape;
  return t.mul(x, t.reshape(gate, {xs[0], 1, xs[2]}));
}

// The SE excitation: W2 relu(W1 s), no biases (keeps the 2C^2/r ledger exact).
template <typename S>
struct BottleneckMlp {
  Param<S> w1, w2;

  BottleneckMlp(int channels, int reduced, SplitMix64& rng, const std::string& prefix = "mlp")
      : w1(make_param<S>(prefix + ".w1", {reduced, channels}, channels, rng)),
        w2(make_param<S>(prefix + ".w2", {channels, reduced}, reduced, rng)) {}

  int forward(Tape<S>& t, int s) {
    int h = t.relu(t.linear(s, t.param(w1), -1));
    return t.linear(h, t.param(w2), -1);
  }
};

// Feature normalization with affine parameters and running statistics.
// `features` may cover groups of consecutive channels (see Tape::batchnorm).
template <typename S>
struct NormLayer {
  Param<S> gamma, beta;
  BatchNormState<S> state;
  int features;

  NormLayer(int f, const std::string& prefix)
      : gamma(const_param<S>(prefix + ".gamma", {f}, 1.0)),
        beta(const_param<S>(prefix + ".beta", {f}, 0.0)),
        features(f) {
    state.running_mean = Tensor<S>({f}, S(0));
    state.running_var = Tensor<S>({f}, S(1));
  }

  int forward(Tape<S>& t, int x, RunMode mode) {
    return t.batchnorm(x, t.param(gamma), t.param(beta), state, features, mode);
  }

  void append_params(std::vector<Param<S>*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
  void append_state(std::vector<std::pair<std::string, Tensor<S>*>>& out, const std::string& prefix) {
    out.emplace_back(prefix + ".running_mean", &state.running_mean);
    out.emplace_back(prefix + ".running_var", &state.running_var);
  }
};

}  // namespace eegatt
