// Reverse-mode differentiation tape.
//
// A Tape records every forward operation as a node holding its output value.
// backward(loss) sweeps the node list in reverse creation order (which is a
// reverse topological order by construction), visits each node exactly once,
// and accumulates gradients into every reachable node that requires them.
// Gradients of bound parameters are added into Param::grad, so repeated
// backward passes accumulate additively.
//
// Tensors are rank <= 4. Binary elementwise ops broadcast numpy-style
// (right-aligned, an axis must match or be 1) — that is the only
// broadcasting the models here need.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eegatt/tensor.hpp"

namespace eegatt {

enum class Pad { kSame, kValid };
enum class RunMode { kTrain, kEval };

template <typename S>
struct BatchNormState {
  Tensor<S> running_mean;  // [features]
  Tensor<S> running_var;   // [features]
};

// A named trainable value with its gradient accumulator.
template <typename S>
struct Param {
  std::string name;
  Tensor<S> value;
  Tensor<S> grad;

  Param() = default;
  Param(std::string n, Tensor<S> v) : name(std::move(n)), value(std::move(v)), grad(value.shape) {}
  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), S(0)); }
  int64_t numel() const { return value.numel(); }
};

enum class OpK : uint8_t {
  kLeaf,
  kReshape,
  kPermute,
  kConcat,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kScale,
  kAddScalar,
  kRelu,
  kElu,
  kSigmoid,
  kTanh,
  kExp,
  kLog,
  kSqrt,
  kSquare,
  kConv1d,
  kLinear,
  kBatchNorm,
  kAvgPool,
  kDropout,
  kSum,
  kMean,
  kMax,
  kSoftmax,
  kLogSoftmax,
  kSumAll,
  kCov,
  kCrossEntropy,
};

template <typename S>
class Tape {
 public:
  // Leaves.
  int input(const Tensor<S>& v, bool requires_grad = false);
  int param(Param<S>& p);
  int constant(const Tensor<S>& v) { return input(v, false); }

  // Elementwise (broadcasting) binary ops.
  int add(int a, int b) { return binary(OpK::kAdd, a, b); }
  int sub(int a, int b) { return binary(OpK::kSub, a, b); }
  int mul(int a, int b) { return binary(OpK::kMul, a, b); }
  int divide(int a, int b) { return binary(OpK::kDiv, a, b); }

  // Elementwise scalar / unary ops.
  int scale(int a, double c);
  int add_scalar(int a, double c);
  int relu(int a) { return unary(OpK::kRelu, a); }
  int elu(int a) { return unary(OpK::kElu, a); }
  int sigmoid(int a) { return unary(OpK::kSigmoid, a); }
  int tanh_op(int a) { return unary(OpK::kTanh, a); }
  int exp_op(int a) { return unary(OpK::kExp, a); }
  int log_op(int a) { return unary(OpK::kLog, a); }
  int sqrt_op(int a) { return unary(OpK::kSqrt, a); }
  int square(int a) { return unary(OpK::kSquare, a); }

  // Structure.
  int reshape(int a, std::vector<int64_t> shape);
  int permute(int a, std::vector<int> axes);
  int concat(int a, int b, int axis);

  // conv1d over the last axis. x:[B,Cin,T], w:[Cout,Cin/groups,K], bias:[Cout] or -1.
  // Same padding keeps T (zero pad, extra sample on the right for even K);
  // valid padding requires T >= K and yields T-K+1.
  int conv1d(int x, int w, int bias, int groups, Pad pad);

  // x:[B,M], w:[N,M], bias:[N] or -1 -> [B,N].
  int linear(int x, int w, int bias);

  // x:[B,N] or [B,N*G,T] with `features` N normalized over everything but the
  // feature axis. Train mode uses batch statistics and updates `state` with
  // `momentum` (unbiased variance in the running buffer, biased for
  // normalization). Eval mode reads `state`.
  int batchnorm(int x, int gamma, int beta, BatchNormState<S>& state, int features, RunMode mode,
                double momentum = 0.1, double eps = 1e-5);

  // Valid-mode average pooling over the last axis of [B,C,T].
  int avg_pool_time(int x, int size, int stride);

  // Inverted dropout; identity in eval mode. The mask is a pure function of
  // (key, element index), recomputed in backward.
  int dropout(int x, double p, uint64_t key, RunMode mode);

  // Reductions along one axis (axis removed from the shape).
  int sum_axis(int a, int axis) { return reduce(OpK::kSum, a, axis); }
  int mean_axis(int a, int axis) { return reduce(OpK::kMean, a, axis); }
  // Ties route the gradient to the lowest index.
  int max_axis(int a, int axis) { return reduce(OpK::kMax, a, axis); }

  int softmax(int a, int axis);
  int log_softmax(int a, int axis);

  int sum_all(int a);

  // x:[B,C,T] -> [B,C,C], sample covariance with the T-1 divisor. T >= 2.
  int covariance(int x);

  // Mean negative log-likelihood of softmax(logits) at the labels.
  int cross_entropy(int logits, const std::vector<int>& labels);

  void backward(int loss_id);

  const Tensor<S>& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  // Valid after backward; zero tensor if the node was unreachable.
  Tensor<S> grad(int id) const;
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    OpK op = OpK::kLeaf;
    int a = -1, b = -1, c = -1;
    bool requires_grad = false;
    Tensor<S> value;
    Tensor<S> grad;
    bool grad_live = false;
    int i0 = 0, i1 = 0;           // groups/axis/size/features...
    double d0 = 0.0, d1 = 0.0;    // scalar c, p, momentum, eps
    uint64_t key = 0;
    Pad pad = Pad::kValid;
    RunMode mode = RunMode::kEval;
    std::vector<int64_t> iv;      // permute axes, argmax, labels, input shape
    std::vector<double> dv;       // saved statistics (batchnorm mean/invstd, softmax probs)
    BatchNormState<S>* bn = nullptr;
    Param<S>* bound = nullptr;
  };

  int push(Node n);
  int binary(OpK op, int a, int b);
  int unary(OpK op, int a);
  int reduce(OpK op, int a, int axis);
  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
  Tensor<S>& grad_buf(int id);
  void backward_node(int id);

  std::vector<Node> nodes_;
};

// --- spec-level reductions over [B,C,T] ---

enum class TimeStat { kMean, kMax, kStd, kL2, kEntropy };
enum class ChannelStat { kMean, kMax, kEntropy };

// [B,C,T] -> [B,C]. std is the population convention (divide by T);
// entropy is -sum p log p with p = softmax over time.
template <typename S>
int reduce_time(Tape<S>& t, int x, TimeStat stat);

// [B,C,T] -> [B,T].
template <typename S>
int reduce_channels(Tape<S>& t, int x, ChannelStat stat);

extern template class Tape<float>;
extern template class Tape<double>;
extern template int reduce_time<float>(Tape<float>&, int, TimeStat);
extern template int reduce_time<double>(Tape<double>&, int, TimeStat);
extern template int reduce_channels<float>(Tape<float>&, int, ChannelStat);
extern template int reduce_channels<double>(Tape<double>&, int, ChannelStat);

}  // namespace eegatt
