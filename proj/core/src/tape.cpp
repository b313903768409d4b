#include "eegatt/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "eegatt/rng.hpp"

namespace eegatt {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// Pads a shape on the left with 1s to rank 4.
void pad4(const std::vector<int64_t>& shape, int64_t out[4]) {
  out[0] = out[1] = out[2] = out[3] = 1;
  int off = 4 - static_cast<int>(shape.size());
  for (size_t i = 0; i < shape.size(); ++i) out[off + static_cast<int>(i)] = shape[i];
}

std::vector<int64_t> broadcast_shape(const std::vector<int64_t>& a, const std::vector<int64_t>& b,
                                     const char* opname) {
  int64_t da[4], db[4];
  pad4(a, da);
  pad4(b, db);
  int rank = static_cast<int>(std::max(a.size(), b.size()));
  std::vector<int64_t> out(static_cast<size_t>(rank));
  for (int i = 0; i < 4; ++i) {
    if (da[i] != db[i] && da[i] != 1 && db[i] != 1)
      throw std::invalid_argument(std::string(opname) + ": axis " + std::to_string(i - (4 - rank)) +
                                  " mismatch between " + shape_str(a) + " and " + shape_str(b));
    int64_t d = std::max(da[i], db[i]);
    int idx = i - (4 - rank);
    if (idx >= 0) out[static_cast<size_t>(idx)] = d;
  }
  return out;
}

// Decomposes `shape` around `axis` as [outer, n, inner].
struct AxisSplit {
  int64_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_axis(const std::vector<int64_t>& shape, int axis) {
  AxisSplit s;
  s.n = shape[static_cast<size_t>(axis)];
  for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<size_t>(i)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

std::vector<int64_t> drop_axis(const std::vector<int64_t>& shape, int axis) {
  std::vector<int64_t> out;
  for (int i = 0; i < static_cast<int>(shape.size()); ++i)
    if (i != axis) out.push_back(shape[static_cast<size_t>(i)]);
  if (out.empty()) out.push_back(1);
  return out;
}

}  // namespace

template <typename S>
int Tape<S>::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

template <typename S>
Tensor<S>& Tape<S>::grad_buf(int id) {
  Node& n = node(id);
  if (!n.grad_live) {
    n.grad = Tensor<S>(n.value.shape);
    n.grad_live = true;
  }
  return n.grad;
}

template <typename S>
Tensor<S> Tape<S>::grad(int id) const {
  const Node& n = node(id);
  if (n.grad_live) return n.grad;
  return Tensor<S>(n.value.shape);
}

template <typename S>
int Tape<S>::input(const Tensor<S>& v, bool requires_grad) {
  Node n;
  n.op = OpK::kLeaf;
  n.value = v;
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

template <typename S>
int Tape<S>::param(Param<S>& p) {
  Node n;
  n.op = OpK::kLeaf;
  n.value = p.value;
  n.requires_grad = true;
  n.bound = &p;
  return push(std::move(n));
}

// --- binary elementwise with broadcasting ---

template <typename S>
int Tape<S>::binary(OpK op, int a, int b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  const char* name = op == OpK::kAdd   ? "add"
                     : op == OpK::kSub ? "sub"
                     : op == OpK::kMul ? "mul"
                                       : "div";
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.requires_grad = na.requires_grad || nb.requires_grad;
  n.value = Tensor<S>(broadcast_shape(na.value.shape, nb.value.shape, name));

  int64_t od[4];
  pad4(n.value.shape, od);
  Strides4 sa = strides_for(na.value.shape, od);
  Strides4 sb = strides_for(nb.value.shape, od);
  const S* pa = na.value.data.data();
  const S* pb = nb.value.data.data();
  S* po = n.value.data.data();
  int64_t idx = 0;
  for (int64_t i0 = 0; i0 < od[0]; ++i0)
    for (int64_t i1 = 0; i1 < od[1]; ++i1)
      for (int64_t i2 = 0; i2 < od[2]; ++i2) {
        int64_t base_a = i0 * sa.str[0] + i1 * sa.str[1] + i2 * sa.str[2];
        int64_t base_b = i0 * sb.str[0] + i1 * sb.str[1] + i2 * sb.str[2];
        for (int64_t i3 = 0; i3 < od[3]; ++i3, ++idx) {
          S va = pa[base_a + i3 * sa.str[3]];
          S vb = pb[base_b + i3 * sb.str[3]];
          switch (op) {
            case OpK::kAdd: po[idx] = va + vb; break;
            case OpK::kSub: po[idx] = va - vb; break;
            case OpK::kMul: po[idx] = va * vb; break;
            default: po[idx] = va / vb; break;
          }
        }
      }
  return push(std::move(n));
}

template <typename S>
int Tape<S>::scale(int a, double c) {
  Node n;
  n.op = OpK::kScale;
  n.a = a;
  n.d0 = c;
  n.requires_grad = node(a).requires_grad;
  n.value = node(a).value;
  for (S& v : n.value.data) v = static_cast<S>(v * static_cast<S>(c));
  return push(std::move(n));
}

template <typename S>
int Tape<S>::add_scalar(int a, double c) {
  Node n;
  n.op = OpK::kAddScalar;
  n.a = a;
  n.d0 = c;
  n.requires_grad = node(a).requires_grad;
  n.value = node(a).value;
  for (S& v : n.value.data) v = static_cast<S>(v + static_cast<S>(c));
  return push(std::move(n));
}

template <typename S>
int Tape<S>::unary(OpK op, int a) {
  Node n;
  n.op = op;
  n.a = a;
  n.requires_grad = node(a).requires_grad;
  n.value = node(a).value;
  for (S& v : n.value.data) {
    double x = static_cast<double>(v);
    double y;
    switch (op) {
      case OpK::kRelu: y = x > 0 ? x : 0; break;
      case OpK::kElu: y = x > 0 ? x : std::expm1(x); break;
      case OpK::kSigmoid: y = 1.0 / (1.0 + std::exp(-x)); break;
      case OpK::kTanh: y = std::tanh(x); break;
      case OpK::kExp: y = std::exp(x); break;
      case OpK::kLog: y = std::log(x); break;
      case OpK::kSqrt: y = std::sqrt(x); break;
      case OpK::kSquare: y = x * x; break;
      default: throw std::logic_error("unary: bad op");
    }
    v = static_cast<S>(y);
  }
  return push(std::move(n));
}

// --- structure ---

template <typename S>
int Tape<S>::reshape(int a, std::vector<int64_t> shape) {
  const Node& na = node(a);
  require(numel_of(shape) == na.value.numel(),
          "reshape: cannot view " + shape_str(na.value.shape) + " as " + shape_str(shape));
  Node n;
  n.op = OpK::kReshape;
  n.a = a;
  n.requires_grad = na.requires_grad;
  n.value = Tensor<S>(std::move(shape), na.value.data);
  return push(std::move(n));
}

template <typename S>
int Tape<S>::permute(int a, std::vector<int> axes) {
  const Node& na = node(a);
  int rank = na.value.rank();
  require(static_cast<int>(axes.size()) == rank, "permute: axes rank mismatch");
  std::vector<int64_t> oshape(static_cast<size_t>(rank));
  for (int i = 0; i < rank; ++i) oshape[static_cast<size_t>(i)] = na.value.shape[static_cast<size_t>(axes[static_cast<size_t>(i)])];

  Node n;
  n.op = OpK::kPermute;
  n.a = a;
  n.requires_grad = na.requires_grad;
  n.value = Tensor<S>(oshape);
  n.iv.assign(axes.begin(), axes.end());

  int64_t id[4], sdim[4];
  pad4(na.value.shape, sdim);
  pad4(oshape, id);
  // Source strides, then reorder into output axis order.
  int64_t sstr[4] = {0, 0, 0, 0};
  {
    int off = 4 - rank;
    int64_t run = 1;
    for (int i = 3; i >= off; --i) {
      sstr[i] = run;
      run *= sdim[i];
    }
  }
  int off = 4 - rank;
  int64_t ostr_src[4] = {0, 0, 0, 0};  // stride in source for each output axis
  for (int i = 0; i < rank; ++i) ostr_src[off + i] = sstr[off + axes[static_cast<size_t>(i)]];
  const S* src = na.value.data.data();
  S* dst = n.value.data.data();
  int64_t idx = 0;
  for (int64_t i0 = 0; i0 < id[0]; ++i0)
    for (int64_t i1 = 0; i1 < id[1]; ++i1)
      for (int64_t i2 = 0; i2 < id[2]; ++i2)
        for (int64_t i3 = 0; i3 < id[3]; ++i3, ++idx)
          dst[idx] = src[i0 * ostr_src[0] + i1 * ostr_src[1] + i2 * ostr_src[2] + i3 * ostr_src[3]];
  return push(std::move(n));
}

template <typename S>
int Tape<S>::concat(int a, int b, int axis) {
  const Node& na = node(a);
  const Node& nb = node(b);
  require(na.value.rank() == nb.value.rank(), "concat: rank mismatch");
  int rank = na.value.rank();
  require(axis >= 0 && axis < rank, "concat: bad axis");
  for (int i = 0; i < rank; ++i)
    if (i != axis)
      require(na.value.shape[static_cast<size_t>(i)] == nb.value.shape[static_cast<size_t>(i)],
              "concat: axis " + std::to_string(i) + " mismatch between " + shape_str(na.value.shape) +
                  " and " + shape_str(nb.value.shape));

  std::vector<int64_t> oshape = na.value.shape;
  oshape[static_cast<size_t>(axis)] += nb.value.shape[static_cast<size_t>(axis)];
  Node n;
  n.op = OpK::kConcat;
  n.a = a;
  n.b = b;
  n.i0 = axis;
  n.requires_grad = na.requires_grad || nb.requires_grad;
  n.value = Tensor<S>(oshape);

  AxisSplit sa = split_axis(na.value.shape, axis);
  AxisSplit sb = split_axis(nb.value.shape, axis);
  const S* pa = na.value.data.data();
  const S* pb = nb.value.data.data();
  S* po = n.value.data.data();
  int64_t block = (sa.n + sb.n) * sa.inner;
  for (int64_t o = 0; o < sa.outer; ++o) {
    std::memcpy(po + o * block, pa + o * sa.n * sa.inner, sizeof(S) * static_cast<size_t>(sa.n * sa.inner));
    std::memcpy(po + o * block + sa.n * sa.inner, pb + o * sb.n * sb.inner,
                sizeof(S) * static_cast<size_t>(sb.n * sb.inner));
  }
  return push(std::move(n));
}

// --- conv1d ---

template <typename S>
int Tape<S>::conv1d(int x, int w, int bias, int groups, Pad pad) {
  const Node& nx = node(x);
  const Node& nw = node(w);
  require(nx.value.rank() == 3, "conv1d: input must be [B,C,T], got " + shape_str(nx.value.shape));
  require(nw.value.rank() == 3, "conv1d: weight must be [Cout,Cin/g,K], got " + shape_str(nw.value.shape));
  int64_t B = nx.value.shape[0], Cin = nx.value.shape[1], T = nx.value.shape[2];
  int64_t Cout = nw.value.shape[0], Cg = nw.value.shape[1], K = nw.value.shape[2];
  require(groups >= 1 && Cin % groups == 0,
          "conv1d: input channels " + std::to_string(Cin) + " not divisible by groups " + std::to_string(groups));
  require(Cout % groups == 0,
          "conv1d: output channels " + std::to_string(Cout) + " not divisible by groups " + std::to_string(groups));
  require(Cg == Cin / groups, "conv1d: weight channel dim " + std::to_string(Cg) + " != Cin/groups = " +
                                  std::to_string(Cin / groups));
  require(K >= 1, "conv1d: kernel size must be >= 1");
  if (pad == Pad::kValid)
    require(T >= K, "conv1d: valid padding needs T >= K, got T=" + std::to_string(T) + " K=" + std::to_string(K));
  if (bias >= 0)
    require(node(bias).value.rank() == 1 && node(bias).value.shape[0] == Cout,
            "conv1d: bias must be [Cout]=" + std::to_string(Cout) + ", got " + shape_str(node(bias).value.shape));

  int64_t padl = (pad == Pad::kSame) ? (K - 1) / 2 : 0;
  int64_t To = (pad == Pad::kSame) ? T : T - K + 1;

  Node n;
  n.op = OpK::kConv1d;
  n.a = x;
  n.b = w;
  n.c = bias;
  n.i0 = groups;
  n.pad = pad;
  n.requires_grad = nx.requires_grad || nw.requires_grad || (bias >= 0 && node(bias).requires_grad);
  n.value = Tensor<S>({B, Cout, To});

  int64_t ocg = Cout / groups;
  const S* px = nx.value.data.data();
  const S* pw = nw.value.data.data();
  S* po = n.value.data.data();
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t oc = 0; oc < Cout; ++oc) {
      int64_t g = oc / ocg;
      S* yrow = po + (b * Cout + oc) * To;
      if (bias >= 0) {
        S bv = node(bias).value.data[static_cast<size_t>(oc)];
        for (int64_t t = 0; t < To; ++t) yrow[t] = bv;
      }
      for (int64_t ic = 0; ic < Cg; ++ic) {
        const S* xrow = px + (b * Cin + g * Cg + ic) * T;
        const S* wrow = pw + (oc * Cg + ic) * K;
        for (int64_t k = 0; k < K; ++k) {
          S wv = wrow[k];
          int64_t shift = k - padl;  // x index = t + shift
          int64_t lo = std::max<int64_t>(0, -shift);
          int64_t hi = std::min<int64_t>(To, T - shift);
          const S* xs = xrow + shift;
          for (int64_t t = lo; t < hi; ++t) yrow[t] += wv * xs[t];
        }
      }
    }
  }
  return push(std::move(n));
}

// --- linear ---

template <typename S>
int Tape<S>::linear(int x, int w, int bias) {
  const Node& nx = node(x);
  const Node& nw = node(w);
  require(nx.value.rank() == 2, "linear: input must be [B,M], got " + shape_str(nx.value.shape));
  require(nw.value.rank() == 2, "linear: weight must be [N,M], got " + shape_str(nw.value.shape));
  int64_t B = nx.value.shape[0], M = nx.value.shape[1], N = nw.value.shape[0];
  require(nw.value.shape[1] == M, "linear: weight inner dim " + std::to_string(nw.value.shape[1]) +
                                      " != input features " + std::to_string(M));
  if (bias >= 0)
    require(node(bias).value.rank() == 1 && node(bias).value.shape[0] == N,
            "linear: bias must be [N]=" + std::to_string(N));

  Node n;
  n.op = OpK::kLinear;
  n.a = x;
  n.b = w;
  n.c = bias;
  n.requires_grad = nx.requires_grad || nw.requires_grad || (bias >= 0 && node(bias).requires_grad);
  n.value = Tensor<S>({B, N});
  const S* px = nx.value.data.data();
  const S* pw = nw.value.data.data();
  S* po = n.value.data.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t r = 0; r < N; ++r) {
      S acc = bias >= 0 ? node(bias).value.data[static_cast<size_t>(r)] : S(0);
      const S* xr = px + b * M;
      const S* wr = pw + r * M;
      for (int64_t m = 0; m < M; ++m) acc += xr[m] * wr[m];
      po[b * N + r] = acc;
    }
  return push(std::move(n));
}

// --- batchnorm ---

template <typename S>
int Tape<S>::batchnorm(int x, int gamma, int beta, BatchNormState<S>& state, int features, RunMode mode,
                       double momentum, double eps) {
  const Node& nx = node(x);
  require(nx.value.rank() == 2 || nx.value.rank() == 3,
          "batchnorm: input must be [B,N] or [B,N*G,T], got " + shape_str(nx.value.shape));
  int64_t B = nx.value.shape[0];
  int64_t C = nx.value.shape[1];
  int64_t T = nx.value.rank() == 3 ? nx.value.shape[2] : 1;
  require(C % features == 0, "batchnorm: channel dim " + std::to_string(C) + " not divisible by features " +
                                 std::to_string(features));
  int64_t G = C / features;
  require(node(gamma).value.numel() == features && node(beta).value.numel() == features,
          "batchnorm: affine params must have length features=" + std::to_string(features));
  require(state.running_mean.numel() == features && state.running_var.numel() == features,
          "batchnorm: running stats must have length features=" + std::to_string(features));

  Node n;
  n.op = OpK::kBatchNorm;
  n.a = x;
  n.b = gamma;
  n.c = beta;
  n.i0 = features;
  n.mode = mode;
  n.d0 = momentum;
  n.d1 = eps;
  n.bn = &state;
  n.requires_grad = nx.requires_grad || node(gamma).requires_grad || node(beta).requires_grad;
  n.value = Tensor<S>(nx.value.shape);
  n.dv.resize(static_cast<size_t>(2 * features));  // mean, invstd per feature

  int64_t cnt = B * G * T;
  const S* px = nx.value.data.data();
  S* po = n.value.data.data();
  const S* pg = node(gamma).value.data.data();
  const S* pb = node(beta).value.data.data();

  for (int64_t f = 0; f < features; ++f) {
    double mean, var;
    if (mode == RunMode::kTrain) {
      double sum = 0.0;
      for (int64_t b = 0; b < B; ++b)
        for (int64_t g = 0; g < G; ++g) {
          const S* row = px + ((b * C) + f * G + g) * T;
          for (int64_t t = 0; t < T; ++t) sum += static_cast<double>(row[t]);
        }
      mean = sum / static_cast<double>(cnt);
      double sq = 0.0;
      for (int64_t b = 0; b < B; ++b)
        for (int64_t g = 0; g < G; ++g) {
          const S* row = px + ((b * C) + f * G + g) * T;
          for (int64_t t = 0; t < T; ++t) {
            double d = static_cast<double>(row[t]) - mean;
            sq += d * d;
          }
        }
      var = sq / static_cast<double>(cnt);  // biased, used for normalization
      double var_unbiased = cnt > 1 ? sq / static_cast<double>(cnt - 1) : var;
      auto& rm = state.running_mean.data[static_cast<size_t>(f)];
      auto& rv = state.running_var.data[static_cast<size_t>(f)];
      rm = static_cast<S>((1.0 - momentum) * static_cast<double>(rm) + momentum * mean);
      rv = static_cast<S>((1.0 - momentum) * static_cast<double>(rv) + momentum * var_unbiased);
    } else {
      mean = static_cast<double>(state.running_mean.data[static_cast<size_t>(f)]);
      var = static_cast<double>(state.running_var.data[static_cast<size_t>(f)]);
    }
    double invstd = 1.0 / std::sqrt(var + eps);
    n.dv[static_cast<size_t>(2 * f)] = mean;
    n.dv[static_cast<size_t>(2 * f + 1)] = invstd;
    double gamma_f = static_cast<double>(pg[f]);
    double beta_f = static_cast<double>(pb[f]);
    for (int64_t b = 0; b < B; ++b)
      for (int64_t g = 0; g < G; ++g) {
        const S* row = px + ((b * C) + f * G + g) * T;
        S* orow = po + ((b * C) + f * G + g) * T;
        for (int64_t t = 0; t < T; ++t)
          orow[t] = static_cast<S>((static_cast<double>(row[t]) - mean) * invstd * gamma_f + beta_f);
      }
  }
  return push(std::move(n));
}

// --- pooling / dropout ---

template <typename S>
int Tape<S>::avg_pool_time(int x, int size, int stride) {
  const Node& nx = node(x);
  require(nx.value.rank() == 3, "avg_pool_time: input must be [B,C,T], got " + shape_str(nx.value.shape));
  int64_t B = nx.value.shape[0], C = nx.value.shape[1], T = nx.value.shape[2];
  require(size >= 1 && stride >= 1, "avg_pool_time: size and stride must be >= 1");
  require(size <= T, "avg_pool_time: pool size " + std::to_string(size) + " exceeds time length " +
                         std::to_string(T));
  int64_t To = (T - size) / stride + 1;

  Node n;
  n.op = OpK::kAvgPool;
  n.a = x;
  n.i0 = size;
  n.i1 = stride;
  n.requires_grad = nx.requires_grad;
  n.value = Tensor<S>({B, C, To});
  const S* px = nx.value.data.data();
  S* po = n.value.data.data();
  double inv = 1.0 / static_cast<double>(size);
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const S* row = px + bc * T;
    S* orow = po + bc * To;
    for (int64_t o = 0; o < To; ++o) {
      double acc = 0.0;
      const S* win = row + o * stride;
      for (int64_t k = 0; k < size; ++k) acc += static_cast<double>(win[k]);
      orow[o] = static_cast<S>(acc * inv);
    }
  }
  return push(std::move(n));
}

template <typename S>
int Tape<S>::dropout(int x, double p, uint64_t key, RunMode mode) {
  const Node& nx = node(x);
  require(p >= 0.0 && p < 1.0, "dropout: p must be in [0,1), got " + std::to_string(p));
  Node n;
  n.op = OpK::kDropout;
  n.a = x;
  n.d0 = p;
  n.key = key;
  n.mode = mode;
  n.requires_grad = nx.requires_grad;
  n.value = nx.value;
  if (mode == RunMode::kTrain && p > 0.0) {
    double keep = 1.0 / (1.0 - p);
    for (size_t i = 0; i < n.value.data.size(); ++i)
      n.value.data[i] = keyed_uniform(key, i) < p ? S(0) : static_cast<S>(n.value.data[i] * keep);
  }
  return push(std::move(n));
}

// --- reductions ---

template <typename S>
int Tape<S>::reduce(OpK op, int a, int axis) {
  const Node& na = node(a);
  require(axis >= 0 && axis < na.value.rank(), "reduce: bad axis " + std::to_string(axis) + " for shape " +
                                                   shape_str(na.value.shape));
  AxisSplit sp = split_axis(na.value.shape, axis);
  Node n;
  n.op = op;
  n.a = a;
  n.i0 = axis;
  n.requires_grad = na.requires_grad;
  n.value = Tensor<S>(drop_axis(na.value.shape, axis));
  const S* px = na.value.data.data();
  S* po = n.value.data.data();
  if (op == OpK::kMax) n.iv.resize(static_cast<size_t>(sp.outer * sp.inner));
  for (int64_t o = 0; o < sp.outer; ++o)
    for (int64_t i = 0; i < sp.inner; ++i) {
      const S* base = px + o * sp.n * sp.inner + i;
      if (op == OpK::kMax) {
        int64_t arg = 0;
        S best = base[0];
        for (int64_t j = 1; j < sp.n; ++j) {
          S v = base[j * sp.inner];
          if (v > best) {  // strict: ties keep the lowest index
            best = v;
            arg = j;
          }
        }
        po[o * sp.inner + i] = best;
        n.iv[static_cast<size_t>(o * sp.inner + i)] = arg;
      } else {
        double acc = 0.0;
        for (int64_t j = 0; j < sp.n; ++j) acc += static_cast<double>(base[j * sp.inner]);
        if (op == OpK::kMean) acc /= static_cast<double>(sp.n);
        po[o * sp.inner + i] = static_cast<S>(acc);
      }
    }
  return push(std::move(n));
}

template <typename S>
int Tape<S>::softmax(int a, int axis) {
  const Node& na = node(a);
  require(axis >= 0 && axis < na.value.rank(), "softmax: bad axis");
  AxisSplit sp = split_axis(na.value.shape, axis);
  Node n;
  n.op = OpK::kSoftmax;
  n.a = a;
  n.i0 = axis;
  n.requires_grad = na.requires_grad;
  n.value = Tensor<S>(na.value.shape);
  const S* px = na.value.data.data();
  S* po = n.value.data.data();
  for (int64_t o = 0; o < sp.outer; ++o)
    for (int64_t i = 0; i < sp.inner; ++i) {
      const S* base = px + o * sp.n * sp.inner + i;
      S* obase = po + o * sp.n * sp.inner + i;
      double mx = static_cast<double>(base[0]);
      for (int64_t j = 1; j < sp.n; ++j) mx = std::max(mx, static_cast<double>(base[j * sp.inner]));
      double z = 0.0;
      for (int64_t j = 0; j < sp.n; ++j) z += std::exp(static_cast<double>(base[j * sp.inner]) - mx);
      for (int64_t j = 0; j < sp.n; ++j)
        obase[j * sp.inner] = static_cast<S>(std::exp(static_cast<double>(base[j * sp.inner]) - mx) / z);
    }
  return push(std::move(n));
}

template <typename S>
int Tape<S>::log_softmax(int a, int axis) {
  const Node& na = node(a);
  require(axis >= 0 && axis < na.value.rank(), "log_softmax: bad axis");
  AxisSplit sp = split_axis(na.value.shape, axis);
  Node n;
  n.op = OpK::kLogSoftmax;
  n.a = a;
  n.i0 = axis;
  n.requires_grad = na.requires_grad;
  n.value = Tensor<S>(na.value.shape);
  const S* px = na.value.data.data();
  S* po = n.value.data.data();
  for (int64_t o = 0; o < sp.outer; ++o)
    for (int64_t i = 0; i < sp.inner; ++i) {
      const S* base = px + o * sp.n * sp.inner + i;
      S* obase = po + o * sp.n * sp.inner + i;
      double mx = static_cast<double>(base[0]);
      for (int64_t j = 1; j < sp.n; ++j) mx = std::max(mx, static_cast<double>(base[j * sp.inner]));
      double z = 0.0;
      for (int64_t j = 0; j < sp.n; ++j) z += std::exp(static_cast<double>(base[j * sp.inner]) - mx);
      double lz = std::log(z) + mx;
      for (int64_t j = 0; j < sp.n; ++j)
        obase[j * sp.inner] = static_cast<S>(static_cast<double>(base[j * sp.inner]) - lz);
    }
  return push(std::move(n));
}

template <typename S>
int Tape<S>::sum_all(int a) {
  const Node& na = node(a);
  Node n;
  n.op = OpK::kSumAll;
  n.a = a;
  n.requires_grad = na.requires_grad;
  n.value = Tensor<S>({1});
  double acc = 0.0;
  for (S v : na.value.data) acc += static_cast<double>(v);
  n.value.data[0] = static_cast<S>(acc);
  return push(std::move(n));
}

template <typename S>
int Tape<S>::covariance(int x) {
  const Node& nx = node(x);
  require(nx.value.rank() == 3, "covariance: input must be [B,C,T], got " + shape_str(nx.value.shape));
  int64_t B = nx.value.shape[0], C = nx.value.shape[1], T = nx.value.shape[2];
  require(T >= 2, "covariance: needs T >= 2, got T=" + std::to_string(T));
  Node n;
  n.op = OpK::kCov;
  n.a = x;
  n.requires_grad = nx.requires_grad;
  n.value = Tensor<S>({B, C, C});
  const S* px = nx.value.data.data();
  S* po = n.value.data.data();
  std::vector<double> centered(static_cast<size_t>(C * T));
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t c = 0; c < C; ++c) {
      const S* row = px + (b * C + c) * T;
      double m = 0.0;
      for (int64_t t = 0; t < T; ++t) m += static_cast<double>(row[t]);
      m /= static_cast<double>(T);
      for (int64_t t = 0; t < T; ++t) centered[static_cast<size_t>(c * T + t)] = static_cast<double>(row[t]) - m;
    }
    double inv = 1.0 / static_cast<double>(T - 1);
    for (int64_t i = 0; i < C; ++i)
      for (int64_t j = i; j < C; ++j) {
        double acc = 0.0;
        for (int64_t t = 0; t < T; ++t)
          acc += centered[static_cast<size_t>(i * T + t)] * centered[static_cast<size_t>(j * T + t)];
        S v = static_cast<S>(acc * inv);
        po[(b * C + i) * C + j] = v;
        po[(b * C + j) * C + i] = v;
      }
  }
  return push(std::move(n));
}

template <typename S>
int Tape<S>::cross_entropy(int logits, const std::vector<int>& labels) {
  const Node& nl = node(logits);
  require(nl.value.rank() == 2, "cross_entropy: logits must be [B,K], got " + shape_str(nl.value.shape));
  int64_t B = nl.value.shape[0], K = nl.value.shape[1];
  require(static_cast<int64_t>(labels.size()) == B,
          "cross_entropy: got " + std::to_string(labels.size()) + " labels for batch " + std::to_string(B));
  for (int v : labels)
    require(v >= 0 && v < K, "cross_entropy: label " + std::to_string(v) + " out of range [0," +
                                 std::to_string(K) + ")");
  Node n;
  n.op = OpK::kCrossEntropy;
  n.a = logits;
  n.requires_grad = nl.requires_grad;
  n.value = Tensor<S>({1});
  n.iv.assign(labels.begin(), labels.end());
  n.dv.resize(static_cast<size_t>(B * K));  // softmax probabilities
  const S* pl = nl.value.data.data();
  double loss = 0.0;
  for (int64_t b = 0; b < B; ++b) {
    const S* row = pl + b * K;
    double mx = static_cast<double>(row[0]);
    for (int64_t k = 1; k < K; ++k) mx = std::max(mx, static_cast<double>(row[k]));
    double z = 0.0;
    for (int64_t k = 0; k < K; ++k) z += std::exp(static_cast<double>(row[k]) - mx);
    double lz = std::log(z) + mx;
    for (int64_t k = 0; k < K; ++k)
      n.dv[static_cast<size_t>(b * K + k)] = std::exp(static_cast<double>(row[k]) - lz);
    loss += lz - static_cast<double>(row[labels[static_cast<size_t>(b)]]);
  }
  n.value.data[0] = static_cast<S>(loss / static_cast<double>(B));
  return push(std::move(n));
}

// --- backward ---

template <typename S>
void Tape<S>::backward(int loss_id) {
  require(loss_id >= 0 && loss_id < static_cast<int>(nodes_.size()), "backward: bad node id");
  Node& loss = node(loss_id);
  require(loss.value.numel() == 1, "backward: loss must be scalar, got " + shape_str(loss.value.shape));
  require(loss.requires_grad, "backward: loss does not require grad");

  for (Node& n : nodes_) n.grad_live = false;
  grad_buf(loss_id).data[0] = S(1);

  for (int id = loss_id; id >= 0; --id) {
    Node& n = node(id);
    if (!n.requires_grad || !n.grad_live) continue;
    backward_node(id);
  }
  for (Node& n : nodes_) {
    if (n.bound != nullptr && n.grad_live) {
      for (size_t i = 0; i < n.grad.data.size(); ++i) n.bound->grad.data[i] += n.grad.data[i];
    }
  }
}

template <typename S>
void Tape<S>::backward_node(int id) {
  Node& n = node(id);
  const Tensor<S>& g = n.grad;

  auto wants = [&](int in) { return in >= 0 && node(in).requires_grad; };

  switch (n.op) {
    case OpK::kLeaf:
      break;

    case OpK::kReshape: {
      if (!wants(n.a)) break;
      Tensor<S>& ga = grad_buf(n.a);
      for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
      break;
    }

    case OpK::kPermute: {
      if (!wants(n.a)) break;
      Tensor<S>& ga = grad_buf(n.a);
      const Node& na = node(n.a);
      int rank = na.value.rank();
      int64_t id4[4], sdim[4];
      pad4(n.value.shape, id4);
      pad4(na.value.shape, sdim);
      int64_t sstr[4] = {0, 0, 0, 0};
      {
        int off = 4 - rank;
        int64_t run = 1;
        for (int i = 3; i >= off; --i) {
          sstr[i] = run;
          run *= sdim[i];
        }
      }
      int off = 4 - rank;
      int64_t ostr_src[4] = {0, 0, 0, 0};
      for (int i = 0; i < rank; ++i) ostr_src[off + i] = sstr[off + n.iv[static_cast<size_t>(i)]];
      const S* gs = g.data.data();
      S* gd = ga.data.data();
      int64_t idx = 0;
      for (int64_t i0 = 0; i0 < id4[0]; ++i0)
        for (int64_t i1 = 0; i1 < id4[1]; ++i1)
          for (int64_t i2 = 0; i2 < id4[2]; ++i2)
            for (int64_t i3 = 0; i3 < id4[3]; ++i3, ++idx)
              gd[i0 * ostr_src[0] + i1 * ostr_src[1] + i2 * ostr_src[2] + i3 * ostr_src[3]] += gs[idx];
      break;
    }

    case OpK::kConcat: {
      const Node& na = node(n.a);
      const Node& nb = node(n.b);
      AxisSplit sa = split_axis(na.value.shape, n.i0);
      AxisSplit sb = split_axis(nb.value.shape, n.i0);
      int64_t block = (sa.n + sb.n) * sa.inner;
      const S* gs = g.data.data();
      if (wants(n.a)) {
        Tensor<S>& ga = grad_buf(n.a);
        for (int64_t o = 0; o < sa.outer; ++o)
          for (int64_t i = 0; i < sa.n * sa.inner; ++i) ga.data[static_cast<size_t>(o * sa.n * sa.inner + i)] += gs[o * block + i];
      }
      if (wants(n.b)) {
        Tensor<S>& gb = grad_buf(n.b);
        for (int64_t o = 0; o < sb.outer; ++o)
          for (int64_t i = 0; i < sb.n * sb.inner; ++i)
            gb.data[static_cast<size_t>(o * sb.n * sb.inner + i)] += gs[o * block + sa.n * sa.inner + i];
      }
      break;
    }

    case OpK::kAdd:
    case OpK::kSub:
    case OpK::kMul:
    case OpK::kDiv: {
      const Node& na = node(n.a);
      const Node& nb = node(n.b);
      int64_t od[4];
      pad4(n.value.shape, od);
      Strides4 sa = strides_for(na.value.shape, od);
      Strides4 sb = strides_for(nb.value.shape, od);
      const S* pa = na.value.data.data();
      const S* pb = nb.value.data.data();
      const S* gs = g.data.data();
      S* gav = wants(n.a) ? grad_buf(n.a).data.data() : nullptr;
      S* gbv = wants(n.b) ? grad_buf(n.b).data.data() : nullptr;
      int64_t idx = 0;
      for (int64_t i0 = 0; i0 < od[0]; ++i0)
        for (int64_t i1 = 0; i1 < od[1]; ++i1)
          for (int64_t i2 = 0; i2 < od[2]; ++i2) {
            int64_t base_a = i0 * sa.str[0] + i1 * sa.str[1] + i2 * sa.str[2];
            int64_t base_b = i0 * sb.str[0] + i1 * sb.str[1] + i2 * sb.str[2];
            for (int64_t i3 = 0; i3 < od[3]; ++i3, ++idx) {
              int64_t ia = base_a + i3 * sa.str[3];
              int64_t ib = base_b + i3 * sb.str[3];
              S gv = gs[idx];
              switch (n.op) {
                case OpK::kAdd:
                  if (gav) gav[ia] += gv;
                  if (gbv) gbv[ib] += gv;
                  break;
                case OpK::kSub:
                  if (gav) gav[ia] += gv;
                  if (gbv) gbv[ib] -= gv;
                  break;
                case OpK::kMul:
                  if (gav) gav[ia] += gv * pb[ib];
                  if (gbv) gbv[ib] += gv * pa[ia];
                  break;
                default: {  // div
                  S bv = pb[ib];
                  if (gav) gav[ia] += gv / bv;
                  if (gbv) gbv[ib] -= gv * pa[ia] / (bv * bv);
                  break;
                }
              }
            }
          }
      break;
    }

    case OpK::kScale: {
      if (!wants(n.a)) break;
      Tensor<S>& ga = grad_buf(n.a);
      S c = static_cast<S>(n.d0);
      for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * c;
      break;
    }

    case OpK::kAddScalar: {
      if (!wants(n.a)) break;
      Tensor<S>& ga = grad_buf(n.a);
      for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
      break;
    }

    case OpK::kRelu:
    case OpK::kElu:
    case OpK::kSigmoid:
    case OpK::kTanh:
    case OpK::kExp:
    case OpK::kLog:
    case OpK::kSqrt:
    case OpK::kSquare: {
      if (!wants(n.a)) break;
      Tensor<S>& ga = grad_buf(n.a);
      const Tensor<S>& x = node(n.a).value;
      const Tensor<S>& y = n.value;
      for (size_t i = 0; i < g.data.size(); ++i) {
        double xv = static_cast<double>(x.data[i]);
        double yv = static_cast<double>(y.data[i]);
        double d;
        switch (n.op) {
          case OpK::kRelu: d = xv > 0 ? 1.0 : 0.0; break;
          case OpK::kElu: d = xv > 0 ? 1.0 : yv + 1.0; break;
          case OpK::kSigmoid: d = yv * (1.0 - yv); break;
          case OpK::kTanh: d = 1.0 - yv * yv; break;
          case OpK::kExp: d = yv; break;
          case OpK::kLog: d = 1.0 / xv; break;
          case OpK::kSqrt: d = yv > 0 ? 0.5 / yv : 0.0; break;  // subgradient 0 at 0
          default: d = 2.0 * xv; break;                          // square
        }
        ga.data[i] += static_cast<S>(static_cast<double>(g.data[i]) * d);
      }
      break;
    }

    case OpK::kConv1d: {
      const Node& nx = node(n.a);
      const Node& nw = node(n.b);
      int64_t B = nx.value.shape[0], Cin = nx.value.shape[1], T = nx.value.shape[2];
      int64_t Cout = nw.value.shape[0], Cg = nw.value.shape[1], K = nw.value.shape[2];
      int64_t To = n.value.shape[2];
      int64_t padl = (n.pad == Pad::kSame) ? (K - 1) / 2 : 0;
      int64_t ocg = Cout / n.i0;
      const S* gs = g.data.data();
      const S* px = nx.value.data.data();
      const S* pw = nw.value.data.data();
      S* gx = wants(n.a) ? grad_buf(n.a).data.data() : nullptr;
      S* gw = wants(n.b) ? grad_buf(n.b).data.data() : nullptr;
      for (int64_t b = 0; b < B; ++b)
        for (int64_t oc = 0; oc < Cout; ++oc) {
          int64_t grp = oc / ocg;
          const S* grow = gs + (b * Cout + oc) * To;
          for (int64_t ic = 0; ic < Cg; ++ic) {
            const S* xrow = px + (b * Cin + grp * Cg + ic) * T;
            S* gxrow = gx ? gx + (b * Cin + grp * Cg + ic) * T : nullptr;
            const S* wrow = pw + (oc * Cg + ic) * K;
            S* gwrow = gw ? gw + (oc * Cg + ic) * K : nullptr;
            for (int64_t k = 0; k < K; ++k) {
              int64_t shift = k - padl;
              int64_t lo = std::max<int64_t>(0, -shift);
              int64_t hi = std::min<int64_t>(To, T - shift);
              if (gxrow) {
                S wv = wrow[k];
                S* xs = gxrow + shift;
                for (int64_t t = lo; t < hi; ++t) xs[t] += wv * grow[t];
              }
              if (gwrow) {
                double acc = 0.0;
                const S* xs = xrow + shift;
                for (int64_t t = lo; t < hi; ++t) acc += static_cast<double>(xs[t]) * static_cast<double>(grow[t]);
                gwrow[k] += static_cast<S>(acc);
              }
            }
          }
        }
      if (n.c >= 0 && wants(n.c)) {
        S* gb = grad_buf(n.c).data.data();
        for (int64_t b = 0; b < B; ++b)
          for (int64_t oc = 0; oc < Cout; ++oc) {
            const S* grow = gs + (b * Cout + oc) * To;
            double acc = 0.0;
            for (int64_t t = 0; t < To; ++t) acc += static_cast<double>(grow[t]);
            gb[oc] += static_cast<S>(acc);
          }
      }
      break;
    }

    case OpK::kLinear: {
      const Node& nx = node(n.a);
      const Node& nw = node(n.b);
      int64_t B = nx.value.shape[0], M = nx.value.shape[1], N = nw.value.shape[0];
      const S* gs = g.data.data();
      const S* px = nx.value.data.data();
      const S* pw = nw.value.data.data();
      if (wants(n.a)) {
        S* gx = grad_buf(n.a).data.data();
        for (int64_t b = 0; b < B; ++b)
          for (int64_t r = 0; r < N; ++r) {
            S gv = gs[b * N + r];
            const S* wr = pw + r * M;
            S* xr = gx + b * M;
            for (int64_t m = 0; m < M; ++m) xr[m] += gv * wr[m];
          }
      }
      if (wants(n.b)) {
        S* gw = grad_buf(n.b).data.data();
        for (int64_t b = 0; b < B; ++b)
          for (int64_t r = 0; r < N; ++r) {
            S gv = gs[b * N + r];
            const S* xr = px + b * M;
            S* wr = gw + r * M;
            for (int64_t m = 0; m < M; ++m) wr[m] += gv * xr[m];
          }
      }
      if (n.c >= 0 && wants(n.c)) {
        S* gb = grad_buf(n.c).data.data();
        for (int64_t b = 0; b < B; ++b)
          for (int64_t r = 0; r < N; ++r) gb[r] += gs[b * N + r];
      }
      break;
    }

    case OpK::kBatchNorm: {
      const Node& nx = node(n.a);
      int64_t B = nx.value.shape[0];
      int64_t C = nx.value.shape[1];
      int64_t T = nx.value.rank() == 3 ? nx.value.shape[2] : 1;
      int64_t F = n.i0;
      int64_t G = C / F;
      int64_t cnt = B * G * T;
      const S* px = nx.value.data.data();
      const S* gs = g.data.data();
      const S* pg = node(n.b).value.data.data();
      S* gx = wants(n.a) ? grad_buf(n.a).data.data() : nullptr;
      S* gg = wants(n.b) ? grad_buf(n.b).data.data() : nullptr;
      S* gb = wants(n.c) ? grad_buf(n.c).data.data() : nullptr;
      for (int64_t f = 0; f < F; ++f) {
        double mean = n.dv[static_cast<size_t>(2 * f)];
        double invstd = n.dv[static_cast<size_t>(2 * f + 1)];
        double gamma_f = static_cast<double>(pg[f]);
        double sum_g = 0.0, sum_gx = 0.0;  // sums of dy and dy*xhat
        for (int64_t b = 0; b < B; ++b)
          for (int64_t gi = 0; gi < G; ++gi) {
            int64_t off = ((b * C) + f * G + gi) * T;
            for (int64_t t = 0; t < T; ++t) {
              double gy = static_cast<double>(gs[off + t]);
              double xh = (static_cast<double>(px[off + t]) - mean) * invstd;
              sum_g += gy;
              sum_gx += gy * xh;
            }
          }
        if (gg) gg[f] += static_cast<S>(sum_gx);
        if (gb) gb[f] += static_cast<S>(sum_g);
        if (gx) {
          if (n.mode == RunMode::kTrain) {
            double inv_cnt = 1.0 / static_cast<double>(cnt);
            for (int64_t b = 0; b < B; ++b)
              for (int64_t gi = 0; gi < G; ++gi) {
                int64_t off = ((b * C) + f * G + gi) * T;
                for (int64_t t = 0; t < T; ++t) {
                  double gy = static_cast<double>(gs[off + t]);
                  double xh = (static_cast<double>(px[off + t]) - mean) * invstd;
                  double d = gamma_f * invstd * (gy - inv_cnt * sum_g - inv_cnt * xh * sum_gx);
                  gx[off + t] += static_cast<S>(d);
                }
              }
          } else {
            double d = gamma_f * invstd;
            for (int64_t b = 0; b < B; ++b)
              for (int64_t gi = 0; gi < G; ++gi) {
                int64_t off = ((b * C) + f * G + gi) * T;
                for (int64_t t = 0; t < T; ++t) gx[off + t] += static_cast<S>(static_cast<double>(gs[off + t]) * d);
              }
          }
        }
      }
      break;
    }

    case OpK::kAvgPool: {
      if (!wants(n.a)) break;
      const Node& nx = node(n.a);
      int64_t B = nx.value.shape[0], C = nx.value.shape[1], T = nx.value.shape[2];
      int64_t To = n.value.shape[2];
      int64_t size = n.i0, stride = n.i1;
      double inv = 1.0 / static_cast<double>(size);
      const S* gs = g.data.data();
      S* gx = grad_buf(n.a).data.data();
      for (int64_t bc = 0; bc < B * C; ++bc) {
        const S* grow = gs + bc * To;
        S* xrow = gx + bc * T;
        for (int64_t o = 0; o < To; ++o) {
          S gv = static_cast<S>(static_cast<double>(grow[o]) * inv);
          S* win = xrow + o * stride;
          for (int64_t k = 0; k < size; ++k) win[k] += gv;
        }
      }
      break;
    }

    case OpK::kDropout: {
      if (!wants(n.a)) break;
      Tensor<S>& ga = grad_buf(n.a);
      if (n.mode == RunMode::kTrain && n.d0 > 0.0) {
        double keep = 1.0 / (1.0 - n.d0);
        for (size_t i = 0; i < g.data.size(); ++i)
          ga.data[i] += keyed_uniform(n.key, i) < n.d0 ? S(0) : static_cast<S>(g.data[i] * keep);
      } else {
        for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
      }
      break;
    }

    case OpK::kSum:
    case OpK::kMean:
    case OpK::kMax: {
      if (!wants(n.a)) break;
      const Node& na = node(n.a);
      AxisSplit sp = split_axis(na.value.shape, n.i0);
      const S* gs = g.data.data();
      S* gx = grad_buf(n.a).data.data();
      for (int64_t o = 0; o < sp.outer; ++o)
        for (int64_t i = 0; i < sp.inner; ++i) {
          S gv = gs[o * sp.inner + i];
          S* base = gx + o * sp.n * sp.inner + i;
          if (n.op == OpK::kMax) {
            base[n.iv[static_cast<size_t>(o * sp.inner + i)] * sp.inner] += gv;
          } else {
            S d = n.op == OpK::kMean ? static_cast<S>(static_cast<double>(gv) / static_cast<double>(sp.n)) : gv;
            for (int64_t j = 0; j < sp.n; ++j) base[j * sp.inner] += d;
          }
        }
      break;
    }

    case OpK::kSoftmax: {
      if (!wants(n.a)) break;
      const Node& na = node(n.a);
      AxisSplit sp = split_axis(na.value.shape, n.i0);
      const S* gs = g.data.data();
      const S* y = n.value.data.data();
      S* gx = grad_buf(n.a).data.data();
      for (int64_t o = 0; o < sp.outer; ++o)
        for (int64_t i = 0; i < sp.inner; ++i) {
          int64_t base = o * sp.n * sp.inner + i;
          double dot = 0.0;
          for (int64_t j = 0; j < sp.n; ++j)
            dot += static_cast<double>(gs[base + j * sp.inner]) * static_cast<double>(y[base + j * sp.inner]);
          for (int64_t j = 0; j < sp.n; ++j) {
            double yv = static_cast<double>(y[base + j * sp.inner]);
            gx[base + j * sp.inner] += static_cast<S>(yv * (static_cast<double>(gs[base + j * sp.inner]) - dot));
          }
        }
      break;
    }

    case OpK::kLogSoftmax: {
      if (!wants(n.a)) break;
      const Node& na = node(n.a);
      AxisSplit sp = split_axis(na.value.shape, n.i0);
      const S* gs = g.data.data();
      const S* y = n.value.data.data();
      S* gx = grad_buf(n.a).data.data();
      for (int64_t o = 0; o < sp.outer; ++o)
        for (int64_t i = 0; i < sp.inner; ++i) {
          int64_t base = o * sp.n * sp.inner + i;
          double gsum = 0.0;
          for (int64_t j = 0; j < sp.n; ++j) gsum += static_cast<double>(gs[base + j * sp.inner]);
          for (int64_t j = 0; j < sp.n; ++j) {
            double p = std::exp(static_cast<double>(y[base + j * sp.inner]));
            gx[base + j * sp.inner] += static_cast<S>(static_cast<double>(gs[base + j * sp.inner]) - p * gsum);
          }
        }
      break;
    }

    case OpK::kSumAll: {
      if (!wants(n.a)) break;
      Tensor<S>& ga = grad_buf(n.a);
      S gv = g.data[0];
      for (S& v : ga.data) v += gv;
      break;
    }

    case OpK::kCov: {
      if (!wants(n.a)) break;
      const Node& nx = node(n.a);
      int64_t B = nx.value.shape[0], C = nx.value.shape[1], T = nx.value.shape[2];
      const S* px = nx.value.data.data();
      const S* gs = g.data.data();
      S* gx = grad_buf(n.a).data.data();
      double inv = 1.0 / static_cast<double>(T - 1);
      std::vector<double> centered(static_cast<size_t>(C * T));
      std::vector<double> dxm(static_cast<size_t>(C * T));
      for (int64_t b = 0; b < B; ++b) {
        for (int64_t c = 0; c < C; ++c) {
          const S* row = px + (b * C + c) * T;
          double m = 0.0;
          for (int64_t t = 0; t < T; ++t) m += static_cast<double>(row[t]);
          m /= static_cast<double>(T);
          for (int64_t t = 0; t < T; ++t) centered[static_cast<size_t>(c * T + t)] = static_cast<double>(row[t]) - m;
        }
        // dxm = (G + G^T) xm / (T-1), then remove the per-row mean.
        for (int64_t i = 0; i < C; ++i)
          for (int64_t t = 0; t < T; ++t) {
            double acc = 0.0;
            for (int64_t j = 0; j < C; ++j) {
              double gsym = static_cast<double>(gs[(b * C + i) * C + j]) + static_cast<double>(gs[(b * C + j) * C + i]);
              acc += gsym * centered[static_cast<size_t>(j * T + t)];
            }
            dxm[static_cast<size_t>(i * T + t)] = acc * inv;
          }
        for (int64_t i = 0; i < C; ++i) {
          double m = 0.0;
          for (int64_t t = 0; t < T; ++t) m += dxm[static_cast<size_t>(i * T + t)];
          m /= static_cast<double>(T);
          for (int64_t t = 0; t < T; ++t)
            gx[(b * C + i) * T + t] += static_cast<S>(dxm[static_cast<size_t>(i * T + t)] - m);
        }
      }
      break;
    }

    case OpK::kCrossEntropy: {
      if (!wants(n.a)) break;
      const Node& nl = node(n.a);
      int64_t B = nl.value.shape[0], K = nl.value.shape[1];
      double gv = static_cast<double>(g.data[0]) / static_cast<double>(B);
      S* gx = grad_buf(n.a).data.data();
      for (int64_t b = 0; b < B; ++b)
        for (int64_t k = 0; k < K; ++k) {
          double p = n.dv[static_cast<size_t>(b * K + k)];
          double onehot = (k == n.iv[static_cast<size_t>(b)]) ? 1.0 : 0.0;
          gx[b * K + k] += static_cast<S>(gv * (p - onehot));
        }
      break;
    }
  }
}

// --- spec-level reductions ---

template <typename S>
int reduce_time(Tape<S>& t, int x, TimeStat stat) {
  const auto& shape = t.value(x).shape;
  if (shape.size() != 3) throw std::invalid_argument("reduce_time: input must be [B,C,T], got " + shape_str(shape));
  int64_t B = shape[0], C = shape[1], T = shape[2];
  switch (stat) {
    case TimeStat::kMean:
      return t.mean_axis(x, 2);
    case TimeStat::kMax:
      return t.max_axis(x, 2);
    case TimeStat::kL2:
      return t.sqrt_op(t.sum_axis(t.square(x), 2));
    case TimeStat::kStd: {
      // Population convention: sqrt(mean((x - mean)^2)).
      int m = t.reshape(t.mean_axis(x, 2), {B, C, 1});
      int d = t.sub(x, m);
      return t.sqrt_op(t.mean_axis(t.square(d), 2));
    }
    case TimeStat::kEntropy: {
      int p = t.softmax(x, 2);
      int lp = t.log_softmax(x, 2);
      return t.scale(t.sum_axis(t.mul(p, lp), 2), -1.0);
    }
  }
  throw std::invalid_argument("reduce_time: unknown stat");
}

template <typename S>
int reduce_channels(Tape<S>& t, int x, ChannelStat stat) {
  const auto& shape = t.value(x).shape;
  if (shape.size() != 3)
    throw std::invalid_argument("reduce_channels: input must be [B,C,T], got " + shape_str(shape));
  switch (stat) {
    case ChannelStat::kMean:
      return t.mean_axis(x, 1);
    case ChannelStat::kMax:
      return t.max_axis(x, 1);
    case ChannelStat::kEntropy: {
      int p = t.softmax(x, 1);
      int lp = t.log_softmax(x, 1);
      return t.scale(t.sum_axis(t.mul(p, lp), 1), -1.0);
    }
  }
  throw std::invalid_argument("reduce_channels: unknown stat");
}

template class Tape<float>;
template class Tape<double>;
template int reduce_time<float>(Tape<float>&, int, TimeStat);
template int reduce_time<double>(Tape<double>&, int, TimeStat);
template int reduce_channels<float>(Tape<float>&, int, ChannelStat);
template int reduce_channels<double>(Tape<double>&, int, ChannelStat);

}  // namespace eegatt
