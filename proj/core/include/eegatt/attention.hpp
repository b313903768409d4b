// Channel-attention (and channel+temporal) blocks over [B,C,T] feature maps.
//
// Each block is shape preserving: it computes a gate a(x) from the input and
// returns a(x) (x) x. All blocks share the gate grammar of a squeeze step
// (per-channel statistic over time) and an excitation step (statistic ->
// gate), differing in what they squeeze and how they excite.

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "eegatt/tape.hpp"

namespace eegatt {

enum class AttentionKind {
  kNone,
  kSe,            // sigmoid(W2 relu(W1 GAP(x)))
  kSeL2,          // SE with the GAP squeeze replaced by an l2 squeeze
  kGsop,          // second-order: 1x1 conv -> covariance -> row conv -> FC
  kFca,           // fixed DCT-basis squeeze -> SE excitation
  kEncNet,        // soft-assignment to learnable codewords
  kEca,           // 1D conv across the channel axis of GAP(x), k parameters
  kGeThetaMinus,  // parameter-free: sigmoid(GAP(x))
  kGeTheta,       // depthwise global gather conv + norm
  kGeThetaPlus,   // gather + norm + bottleneck MLP
  kGct,           // gated channel transformation, l2 embedding, 1+tanh gate
  kGctGap,        // GCT with a GAP embedding
  kSrm,           // per-channel style (mean, std) -> channel-wise FC -> norm
  kSrmCross,      // SRM with the CFC replaced by a bottleneck MLP
  kCbam,          // sequential channel gate then temporal gate
  kCat,           // collaborative channel + temporal attention
  kCatLite,       // CAT channel path only, gate applied without sigmoid
};

const char* attention_kind_name(AttentionKind k);
AttentionKind attention_kind_from_name(const std::string& name);  // throws listing valid kinds
std::vector<AttentionKind> all_attention_kinds();                 // the 16 real kinds, no kNone

struct AttentionSpec {
  AttentionKind kind = AttentionKind::kNone;
  int r = 4;          // reduction rate of bottleneck MLPs
  int k = 0;          // conv kernel size; 0 = per-kind default (ECA 9, CBAM 15, CAT 3)
  std::string extent = "global";
  int codewords = 0;  // EncNet; 0 = number of classes
  std::vector<int> dct_frequency_indices = {0};

  int resolved_k() const;
  int resolved_codewords(int n_classes) const;
  // Throws std::invalid_argument naming the offending field/dimension.
  void validate(int channels, int time, int n_classes) const;
  // Human-readable tag such as "se(r=4)" used in reports.
  std::string label() const;
};

template <typename S>
class AttentionBlock {
 public:
  virtual ~AttentionBlock() = default;
  virtual int forward(Tape<S>& tape, int x, RunMode mode) = 0;
  virtual std::vector<Param<S>*> params() = 0;
  // Mutable persistent state (norm running statistics), name -> tensor.
  virtual std::vector<std::pair<std::string, Tensor<S>*>> state_tensors() { return {}; }
  // Fixed non-trainable buffers (e.g. DCT bases).
  virtual std::vector<std::pair<std::string, Tensor<S>*>> buffers() { return {}; }
  virtual std::unique_ptr<AttentionBlock<S>> clone() const = 0;
  const AttentionSpec& spec() const { return spec_; }

  int64_t trainable_count() {
    int64_t n = 0;
    for (auto* p : params()) n += p->numel();
    return n;
  }
  int64_t buffer_count() {
    int64_t n = 0;
    for (auto& [name, t] : buffers()) n += t->numel();
    return n;
  }

 protected:
  explicit AttentionBlock(AttentionSpec spec) : spec_(std::move(spec)) {}
  AttentionSpec spec_;
};

// Builds a block for feature maps of shape [B, channels, time]. The spec is
// validated first; seed drives weight initialization.
template <typename S>
std::unique_ptr<AttentionBlock<S>> make_attention(const AttentionSpec& spec, int channels, int time,
                                                  int n_classes, uint64_t seed);

extern template std::unique_ptr<AttentionBlock<float>> make_attention<float>(const AttentionSpec&, int, int,
                                                                             int, uint64_t);
extern template std::unique_ptr<AttentionBlock<double>> make_attention<double>(const AttentionSpec&, int, int,
                                                                               int, uint64_t);

}  // namespace eegatt
