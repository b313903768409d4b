// The BaseNet decoder: a compact temporal/spatial convolutional stem, a 1x1
// channel projection, a depthwise separable convolution, and a linear
// classifier, with one optional attention block at a fixed insertion point
// between the separable convolution's nonlinearity and the second pooling
// layer.

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "eegatt/attention.hpp"
#include "eegatt/layers.hpp"
#include "eegatt/tape.hpp"

namespace eegatt {

struct BaseNetConfig {
  int in_channels = 22;   // EEG sensors
  int n_samples = 1000;   // time points per trial
  int n_classes = 4;
  int temporal_filters = 40;        // F1, shared temporal filter bank
  int temporal_kernel = 25;
  int spatial_depth_multiplier = 1; // outputs per temporal filter in the spatial conv
  int projected_channels = 16;      // feature channels after the 1x1 projection
  int separable_kernel = 16;
  int pool1_size = 75;
  int pool1_stride = 15;
  int pool2_size = 8;
  int pool2_stride = 8;
  double dropout = 0.5;
  AttentionSpec attention;

  // Time length at the attention insertion point (after pool1; the separable
  // convolution is same-padded). 62 for the 1000-sample reference config.
  int attention_time() const;
  int pool2_out() const;
  int classifier_inputs() const;
  // Throws with the computed length chain if any stage collapses.
  void validate() const;
};

struct ParamCounts {
  int64_t trainable = 0;
  int64_t total = 0;  // trainable + fixed buffers (e.g. DCT bases)
};

template <typename S>
class BaseNet {
 public:
  BaseNet(const BaseNetConfig& cfg, uint64_t seed);
  BaseNet(const BaseNet& other);
  BaseNet& operator=(const BaseNet& other);
  BaseNet(BaseNet&&) noexcept = default;
  BaseNet& operator=(BaseNet&&) noexcept = default;

  // x: [B, in_channels, n_samples] -> logits [B, n_classes].
  // dropout_key seeds the dropout masks of this forward pass (train mode).
  int forward(Tape<S>& tape, int x, RunMode mode, uint64_t dropout_key = 0);

  std::vector<Param<S>*> params();
  // Every persistent tensor by name: parameters, norm running statistics and
  // fixed buffers. Order and names are stable; this is the checkpoint layout.
  std::vector<std::pair<std::string, Tensor<S>*>> named_tensors();
  ParamCounts param_count();
  void zero_grad();

  // Swaps the attention block, leaving all other weights untouched.
  void set_attention(const AttentionSpec& spec, uint64_t seed);
  AttentionBlock<S>* attention() { return attention_.get(); }
  const BaseNetConfig& config() const { return cfg_; }

 private:
  BaseNetConfig cfg_;
  Param<S> temporal_w_;
  NormLayer<S> bn1_;
  Param<S> spatial_w_;
  NormLayer<S> bn2_;
  Param<S> proj_w_, proj_b_;
  Param<S> depthwise_w_;
  Param<S> pointwise_w_;
  NormLayer<S> bn3_;
  std::unique_ptr<AttentionBlock<S>> attention_;
  Param<S> fc_w_, fc_b_;
};

// Builds a model from a validated config ("build" in the module contract).
template <typename S>
BaseNet<S> build_basenet(const BaseNetConfig& cfg, uint64_t seed) {
  return BaseNet<S>(cfg, seed);
}

// Returns a copy of `model` with the attention block replaced (or removed
// with kind none). All non-attention weights are preserved.
template <typename S>
BaseNet<S> attach_attention(const BaseNet<S>& model, const AttentionSpec& spec, uint64_t seed) {
  BaseNet<S> out(model);
  out.set_attention(spec, seed);
  return out;
}

extern template class BaseNet<float>;
extern template class BaseNet<double>;

}  // namespace eegatt
