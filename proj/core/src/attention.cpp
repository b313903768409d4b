#include "eegatt/attention.hpp"

#include <cmath>
#include <stdexcept>

#include "eegatt/layers.hpp"
#include "eegatt/rng.hpp"

namespace eegatt {

namespace {

constexpr double kPi = 3.14159265358979323846;

// --- SE / SE-l2 ---

template <typename S>
class SeBlock final : public AttentionBlock<S> {
 public:
  SeBlock(AttentionSpec spec, int channels, SplitMix64 rng)
      : AttentionBlock<S>(std::move(spec)), mlp_(channels, channels / this->spec_.r, rng) {}

  int forward(Tape<S>& t, int x, RunMode) override {
    TimeStat squeeze = this->spec_.kind == AttentionKind::kSeL2 ? TimeStat::kL2 : TimeStat::kMean;
    int s = reduce_time(t, x, squeeze);
    int g = t.sigmoid(mlp_.forward(t, s));
    return apply_channel_gate(t, x, g);
  }
  std::vector<Param<S>*> params() override { return {&mlp_.w1, &mlp_.w2}; }
  std::unique_ptr<AttentionBlock<S>> clone() const override { return std::make_unique<SeBlock>(*this); }

 private:
  BottleneckMlp<S> mlp_;
};

// --- GSoP ---
//
// 1x1 conv to C' channels, per-item covariance, row-wise conv collapsing each
// covariance row to a scalar (C' weights + bias per row), FC back to C.

template <typename S>
class GsopBlock final : public AttentionBlock<S> {
 public:
  GsopBlock(AttentionSpec spec, int channels, SplitMix64 rng)
      : AttentionBlock<S>(std::move(spec)),
        reduced_(channels / this->spec_.r),
        conv_w_(make_param<S>("conv.weight", {reduced_, channels, 1}, channels, rng)),
        conv_b_(make_param<S>("conv.bias", {reduced_}, channels, rng)),
        row_w_(make_param<S>("row_conv.weight", {reduced_, reduced_}, reduced_, rng)),
        row_b_(make_param<S>("row_conv.bias", {reduced_}, reduced_, rng)),
        fc_w_(make_param<S>("fc.weight", {channels, reduced_}, reduced_, rng)),
        fc_b_(make_param<S>("fc.bias", {channels}, reduced_, rng)) {}

  int forward(Tape<S>& t, int x, RunMode) override {
    int z = t.conv1d(x, t.param(conv_w_), t.param(conv_b_), 1, Pad::kValid);
    int v = t.covariance(z);  // [B,C',C']
    int rw = t.sum_axis(t.mul(v, t.reshape(t.param(row_w_), {1, reduced_, reduced_})), 2);
    rw = t.add(rw, t.reshape(t.param(row_b_), {1, reduced_}));
    int g = t.sigmoid(t.linear(rw, t.param(fc_w_), t.param(fc_b_)));
    return apply_channel_gate(t, x, g);
  }
  std::vector<Param<S>*> params() override {
    return {&conv_w_, &conv_b_, &row_w_, &row_b_, &fc_w_, &fc_b_};
  }
  std::unique_ptr<AttentionBlock<S>> clone() const override { return std::make_unique<GsopBlock>(*this); }

 private:
  int64_t reduced_;
  Param<S> conv_w_, conv_b_, row_w_, row_b_, fc_w_, fc_b_;
};

// --- FCA ---
//
// Channels are split into one group per requested frequency index; each
// group's channels are reduced over time against a fixed DCT-II basis
// cos(pi*u*(t+0.5)/T). Index 0 gives an all-ones basis, i.e. T * GAP.

template <typename S>
class FcaBlock final : public AttentionBlock<S> {
 public:
  FcaBlock(AttentionSpec spec, int channels, int time, SplitMix64 rng)
      : AttentionBlock<S>(std::move(spec)), mlp_(channels, channels / this->spec_.r, rng) {
    const auto& idx = this->spec_.dct_frequency_indices;
    int n_groups = static_cast<int>(idx.size());
    int group_c = channels / n_groups;
    dct_ = Tensor<S>({channels, time});
    for (int c = 0; c < channels; ++c) {
      int u = idx[static_cast<size_t>(c / group_c)];
      for (int tt = 0; tt < time; ++tt)
        dct_.data[static_cast<size_t>(c * time + tt)] =
            static_cast<S>(std::cos(kPi * static_cast<double>(u) * (static_cast<double>(tt) + 0.5) /
                                    static_cast<double>(time)));
    }
  }

  int forward(Tape<S>& t, int x, RunMode) override {
    const auto& xs = t.value(x).shape;
    int basis = t.constant(dct_);
    int s = t.sum_axis(t.mul(x, t.reshape(basis, {1, xs[1], xs[2]})), 2);
    int g = t.sigmoid(mlp_.forward(t, s));
    return apply_channel_gate(t, x, g);
  }
  std::vector<Param<S>*> params() override { return {&mlp_.w1, &mlp_.w2}; }
  std::vector<std::pair<std::string, Tensor<S>*>> buffers() override { return {{"dct_basis", &dct_}}; }
  std::unique_ptr<AttentionBlock<S>> clone() const override { return std::make_unique<FcaBlock>(*this); }

 private:
  BottleneckMlp<S> mlp_;
  Tensor<S> dct_;
};

// --- EncNet ---
//
// Treats the T time samples as vectors in R^C, soft-assigns each to K
// learnable codewords d_k with smoothing s_k, and aggregates the weighted
// residuals: e_ik = softmax_k(-s_k ||x_i - d_k||^2) (x_i - d_k),
// e_k = sum_i e_ik, e = sum_k relu(norm(e_k)). Gate = sigmoid(FC(e)).

template <typename S>
class EncNetBlock final : public AttentionBlock<S> {
 public:
  EncNetBlock(AttentionSpec spec, int channels, int n_classes, SplitMix64 rng)
      : AttentionBlock<S>(std::move(spec)),
        k_(this->spec_.resolved_codewords(n_classes)),
        codewords_(make_param<S>("codewords", {k_, channels}, k_ * channels, rng)),
        smoothing_(const_param<S>("smoothing", {k_}, 0.0)),
        norm_(static_cast<int>(k_), "norm"),
        fc_w_(make_param<S>("fc.weight", {channels, channels}, channels, rng)),
        fc_b_(make_param<S>("fc.bias", {channels}, channels, rng)) {}

  int forward(Tape<S>& t, int x, RunMode mode) override {
    const auto& xs = t.value(x).shape;
    int64_t B = xs[0], C = xs[1], T = xs[2];
    int xi = t.reshape(t.permute(x, {0, 2, 1}), {B, T, 1, C});
    int d = t.reshape(t.param(codewords_), {1, 1, k_, C});
    int res = t.sub(xi, d);                                            // [B,T,K,C]
    int dist = t.sum_axis(t.square(res), 3);                           // [B,T,K]
    int scaled = t.scale(t.mul(dist, t.reshape(t.param(smoothing_), {1, 1, k_})), -1.0);
    int w = t.softmax(scaled, 2);                                      // [B,T,K]
    int wres = t.mul(res, t.reshape(w, {B, T, k_, 1}));                // [B,T,K,C]
    int ek = t.sum_axis(wres, 1);                                      // [B,K,C]
    int e = t.sum_axis(t.relu(norm_.forward(t, ek, mode)), 1);         // [B,C]
    int g = t.sigmoid(t.linear(e, t.param(fc_w_), t.param(fc_b_)));
    return apply_channel_gate(t, x, g);
  }
  std::vector<Param<S>*> params() override {
    std::vector<Param<S>*> out{&codewords_, &smoothing_};
    norm_.append_params(out);
    out.push_back(&fc_w_);
    out.push_back(&fc_b_);
    return out;
  }
  std::vector<std::pair<std::string, Tensor<S>*>> state_tensors() override {
    std::vector<std::pair<std::string, Tensor<S>*>> out;
    norm_.append_state(out, "norm");
    return out;
  }
  std::unique_ptr<AttentionBlock<S>> clone() const override { return std::make_unique<EncNetBlock>(*this); }

 private:
  int64_t k_;
  Param<S> codewords_, smoothing_;
  NormLayer<S> norm_;
  Param<S> fc_w_, fc_b_;
};

// --- ECA ---

template <typename S>
class EcaBlock final : public AttentionBlock<S> {
 public:
  EcaBlock(AttentionSpec spec, SplitMix64 rng)
      : AttentionBlock<S>(std::move(spec)),
        kernel_(make_param<S>("conv.weight", {1, 1, this->spec_.resolved_k()}, this->spec_.resolved_k(), rng)) {}

  int forward(Tape<S>& t, int x, RunMode) override {
    const auto& xs = t.value(x).shape;
    int s = t.reshape(t.mean_axis(x, 2), {xs[0], 1, xs[1]});
    int c = t.conv1d(s, t.param(kernel_), -1, 1, Pad::kSame);
    int g = t.sigmoid(t.reshape(c, {xs[0], xs[1]}));
    return apply_channel_gate(t, x, g);
  }
  std::vector<Param<S>*> params() override { return {&kernel_}; }
  std::unique_ptr<AttentionBlock<S>> clone() const override { return std::make_unique<EcaBlock>(*this); }

 private:
  Param<S> kernel_;
};

// --- GE (theta-, theta, theta+) ---
//
// Global extent: the gather is a depthwise convolution whose kernel spans the
// whole sequence, followed by a per-channel norm. theta- drops all parameters
// and gates on sigmoid(GAP(x)); theta+ adds a bottleneck MLP after the norm.

template <typename S>
class GeBlock final : public AttentionBlock<S> {
 public:
  GeBlock(AttentionSpec spec, int channels, int time, SplitMix64 rng) : AttentionBlock<S>(std::move(spec)) {
    if (this->spec_.kind != AttentionKind::kGeThetaMinus) {
      gather_.emplace(make_param<S>("gather.weight", {channels, 1, time}, time, rng));
      norm_.emplace(channels, "norm");
    }
    if (this->spec_.kind == AttentionKind::kGeThetaPlus)
      mlp_.emplace(channels, channels / this->spec_.r, rng);
  }

  int forward(Tape<S>& t, int x, RunMode mode) override {
    const auto& xs = t.value(x).shape;
    int pre;
    if (this->spec_.kind == AttentionKind::kGeThetaMinus) {
      pre = t.mean_axis(x, 2);
    } else {
      int gathered = t.conv1d(x, t.param(*gather_), -1, static_cast<int>(xs[1]), Pad::kValid);
      pre = norm_->forward(t, t.reshape(gathered, {xs[0], xs[1]}), mode);
      if (mlp_) pre = mlp_->forward(t, pre);
    }
    return apply_channel_gate(t, x, t.sigmoid(pre));
  }
  std::vector<Param<S>*> params() override {
    std::vector<Param<S>*> out;
    if (gather_) out.push_back(&*gather_);
    if (norm_) norm_->append_params(out);
    if (mlp_) {
      out.push_back(&mlp_->w1);
      out.push_back(&mlp_->w2);
    }
    return out;
  }
  std::vector<std::pair<std::string, Tensor<S>*>> state_tensors() override {
    std::vector<std::pair<std::string, Tensor<S>*>> out;
    if (norm_) norm_->append_state(out, "norm");
    return out;
  }
  std::unique_ptr<AttentionBlock<S>> clone() const override { return std::make_unique<GeBlock>(*this); }

 private:
  std::optional<Param<S>> gather_;
  std::optional<NormLayer<S>> norm_;
  std::optional<BottleneckMlp<S>> mlp_;
};

// --- GCT / GCT-GAP ---
//
// s_c = alpha_c * embed(x_c); shat_c = sqrt(C) s_c / sqrt(sum_c s_c^2 + eps);
// gate = 1 + tanh(gamma shat + beta). Init alpha=1, gamma=beta=0 makes the
// block an exact identity.

template <typename S>
class GctBlock final : public AttentionBlock<S> {
 public:
  GctBlock(AttentionSpec spec, int channels)
      : AttentionBlock<S>(std::move(spec)),
        alpha_(const_param<S>("alpha", {channels}, 1.0)),
        gamma_(const_param<S>("gamma", {channels}, 0.0)),
        beta_(const_param<S>("beta", {channels}, 0.0)) {}

  int forward(Tape<S>& t, int x, RunMode) override {
    const auto& xs = t.value(x).shape;
    int64_t C = xs[1];
    TimeStat embed = this->spec_.kind == AttentionKind::kGctGap ? TimeStat::kMean : TimeStat::kL2;
    int s = t.mul(reduce_time(t, x, embed), t.reshape(t.param(alpha_), {1, C}));
    int denom = t.sqrt_op(t.add_scalar(t.sum_axis(t.square(s), 1), kEps));
    int shat = t.divide(t.scale(s, std::sqrt(static_cast<double>(C))), t.reshape(denom, {xs[0], 1}));
    int pre = t.add(t.mul(shat, t.reshape(t.param(gamma_), {1, C})), t.reshape(t.param(beta_), {1, C}));
    int gate = t.add_scalar(t.tanh_op(pre), 1.0);
    return apply_channel_gate(t, x, gate);
  }
  std::vector<Param<S>*> params() override { return {&alpha_, &gamma_, &beta_}; }
  std::unique_ptr<AttentionBlock<S>> clone() const override { return std::make_unique<GctBlock>(*this); }

  static constexpr double kEps = 1e-5;

 private:
  Param<S> alpha_, gamma_, beta_;
};

// --- SRM / SRM-cross ---
//
// Style pooling concatenates per-channel mean and population std. The
// channel-wise FC combines the two styles with per-channel weights (no
// cross-channel flow); the cross variant flattens all styles through a
// bottleneck MLP instead. Both feed a norm and a sigmoid.

template <typename S>
class SrmBlock final : public AttentionBlock<S> {
 public:
  SrmBlock(AttentionSpec spec, int channels, SplitMix64 rng)
      : AttentionBlock<S>(std::move(spec)), channels_(channels), norm_(channels, "norm") {
    if (this->spec_.kind == AttentionKind::kSrm) {
      cfc_.emplace(make_param<S>("cfc.weight", {2, channels}, 2, rng));
    } else {
      int hidden = 2 * channels / this->spec_.r;
      w1_.emplace(make_param<S>("mlp.w1", {hidden, 2 * channels}, 2 * channels, rng));
      w2_.emplace(make_param<S>("mlp.w2", {channels, hidden}, hidden, rng));
    }
  }

  int forward(Tape<S>& t, int x, RunMode mode) override {
    const auto& xs = t.value(x).shape;
    int64_t B = xs[0], C = xs[1];
    int mu = reduce_time(t, x, TimeStat::kMean);
    int sd = reduce_time(t, x, TimeStat::kStd);
    int z;
    if (cfc_) {
      int style = t.concat(t.reshape(mu, {B, 1, C}), t.reshape(sd, {B, 1, C}), 1);  // [B,2,C]
      z = t.sum_axis(t.mul(style, t.reshape(t.param(*cfc_), {1, 2, C})), 1);
    } else {
      int style = t.concat(mu, sd, 1);  // [B,2C]
      z = t.linear(t.relu(t.linear(style, t.param(*w1_), -1)), t.param(*w2_), -1);
    }
    int g = t.sigmoid(norm_.forward(t, z, mode));
    return apply_channel_gate(t, x, g);
  }
  std::vector<Param<S>*> params() override {
    std::vector<Param<S>*> out;
    if (cfc_) out.push_back(&*cfc_);
    if (w1_) {
      out.push_back(&*w1_);
      out.push_back(&*w2_);
    }
    norm_.append_params(out);
    return out;
  }
  std::vector<std::pair<std::string, Tensor<S>*>> state_tensors() override {
    std::vector<std::pair<std::string, Tensor<S>*>> out;
    norm_.append_state(out, "norm");
    return out;
  }
  std::unique_ptr<AttentionBlock<S>> clone() const override { return std::make_unique<SrmBlock>(*this); }

 private:
  int channels_;
  std::optional<Param<S>> cfc_, w1_, w2_;
  NormLayer<S> norm_;
};

// --- CBAM ---
//
// a_ch = sigmoid(MLP(GAP) + MLP(GMP)) gates the input first; the temporal
// gate convolves the stacked [channel-mean; channel-max] maps of the gated
// input and gates it again.

template <typename S>
class CbamBlock final : public AttentionBlock<S> {
 public:
  CbamBlock(AttentionSpec spec, int channels, SplitMix64 rng)
      : AttentionBlock<S>(std::move(spec)),
        mlp_(channels, channels / this->spec_.r, rng),
        conv_w_(make_param<S>("temporal_conv.weight", {1, 2, this->spec_.resolved_k()},
                              2 * this->spec_.resolved_k(), rng)),
        conv_b_(make_param<S>("temporal_conv.bias", {1}, 2 * this->spec_.resolved_k(), rng)) {}

  int forward(Tape<S>& t, int x, RunMode) override {
    const auto& xs = t.value(x).shape;
    int64_t B = xs[0], T = xs[2];
    int ga = mlp_.forward(t, reduce_time(t, x, TimeStat::kMean));
    int gm = mlp_.forward(t, reduce_time(t, x, TimeStat::kMax));
    int ach = t.sigmoid(t.add(ga, gm));
    int gated = apply_channel_gate(t, x, ach);
    int ma = t.reshape(reduce_channels(t, gated, ChannelStat::kMean), {B, 1, T});
    int mm = t.reshape(reduce_channels(t, gated, ChannelStat::kMax), {B, 1, T});
    int f = t.concat(ma, mm, 1);  // [B,2,T]
    int tmap = t.reshape(t.conv1d(f, t.param(conv_w_), t.param(conv_b_), 1, Pad::kSame), {B, T});
    return apply_time_gate(t, gated, t.sigmoid(tmap));
  }
  std::vector<Param<S>*> params() override { return {&mlp_.w1, &mlp_.w2, &conv_w_, &conv_b_}; }
  std::unique_ptr<AttentionBlock<S>> clone() const override { return std::make_unique<CbamBlock>(*this); }

 private:
  BottleneckMlp<S> mlp_;
  Param<S> conv_w_, conv_b_;
};

// --- CAT / CATLite ---
//
// Channel path: C'_A = Ca MLP(GAP) + Cb MLP(GMP) + Cg MLP(GEP) with a shared
// MLP and scalar collaboration weights. Temporal path: the same weighted sum
// of channel-reduced maps, convolved over time. Full CAT gates with
// sigmoid(Cw C'_A) + sigmoid(Tw T'_A); CATLite applies a(x) = C'_A directly.

template <typename S>
class CatBlock final : public AttentionBlock<S> {
 public:
  CatBlock(AttentionSpec spec, int channels, SplitMix64 rng)
      : AttentionBlock<S>(std::move(spec)),
        lite_(this->spec_.kind == AttentionKind::kCatLite),
        mlp_(channels, channels / this->spec_.r, rng),
        c_alpha_(const_param<S>("c_alpha", {1}, 1.0)),
        c_beta_(const_param<S>("c_beta", {1}, 1.0)),
        c_gamma_(const_param<S>("c_gamma", {1}, 1.0)) {
    if (!lite_) {
      int k = this->spec_.resolved_k();
      conv_w_.emplace(make_param<S>("temporal_conv.weight", {1, 1, k}, k, rng));
      conv_b_.emplace(make_param<S>("temporal_conv.bias", {1}, k, rng));
      t_alpha_.emplace(const_param<S>("t_alpha", {1}, 1.0));
      t_beta_.emplace(const_param<S>("t_beta", {1}, 1.0));
      t_gamma_.emplace(const_param<S>("t_gamma", {1}, 1.0));
      c_w_.emplace(const_param<S>("c_w", {1}, 1.0));
      t_w_.emplace(const_param<S>("t_w", {1}, 1.0));
    }
  }

  int forward(Tape<S>& t, int x, RunMode) override {
    const auto& xs = t.value(x).shape;
    int64_t B = xs[0], C = xs[1], T = xs[2];
    auto weigh = [&](int v, Param<S>& w) { return t.mul(v, t.reshape(t.param(w), {1, 1})); };
    int ca = weigh(mlp_.forward(t, reduce_time(t, x, TimeStat::kMean)), c_alpha_);
    int cb = weigh(mlp_.forward(t, reduce_time(t, x, TimeStat::kMax)), c_beta_);
    int cg = weigh(mlp_.forward(t, reduce_time(t, x, TimeStat::kEntropy)), c_gamma_);
    int channel_map = t.add(t.add(ca, cb), cg);  // [B,C]
    if (lite_) return apply_channel_gate(t, x, channel_map);

    int ta = weigh(reduce_channels(t, x, ChannelStat::kMean), *t_alpha_);
    int tb = weigh(reduce_channels(t, x, ChannelStat::kMax), *t_beta_);
    int tg = weigh(reduce_channels(t, x, ChannelStat::kEntropy), *t_gamma_);
    int m = t.reshape(t.add(t.add(ta, tb), tg), {B, 1, T});
    int time_map = t.reshape(t.conv1d(m, t.param(*conv_w_), t.param(*conv_b_), 1, Pad::kSame), {B, T});

    int gc = t.reshape(t.sigmoid(t.mul(channel_map, t.reshape(t.param(*c_w_), {1, 1}))), {B, C, 1});
    int gt = t.reshape(t.sigmoid(t.mul(time_map, t.reshape(t.param(*t_w_), {1, 1}))), {B, 1, T});
    return t.mul(x, t.add(gc, gt));
  }
  std::vector<Param<S>*> params() override {
    std::vector<Param<S>*> out{&mlp_.w1, &mlp_.w2, &c_alpha_, &c_beta_, &c_gamma_};
    if (!lite_) {
      out.push_back(&*t_alpha_);
      out.push_back(&*t_beta_);
      out.push_back(&*t_gamma_);
      out.push_back(&*c_w_);
      out.push_back(&*t_w_);
      out.push_back(&*conv_w_);
      out.push_back(&*conv_b_);
    }
    return out;
  }
  std::unique_ptr<AttentionBlock<S>> clone() const override { return std::make_unique<CatBlock>(*this); }

 private:
  bool lite_;
  BottleneckMlp<S> mlp_;
  Param<S> c_alpha_, c_beta_, c_gamma_;
  std::optional<Param<S>> t_alpha_, t_beta_, t_gamma_, c_w_, t_w_, conv_w_, conv_b_;
};

}  // namespace

// --- spec plumbing ---

const char* attention_kind_name(AttentionKind k) {
  switch (k) {
    case AttentionKind::kNone: return "none";
    case AttentionKind::kSe: return "se";
    case AttentionKind::kSeL2: return "se_l2";
    case AttentionKind::kGsop: return "gsop";
    case AttentionKind::kFca: return "fca";
    case AttentionKind::kEncNet: return "encnet";
    case AttentionKind::kEca: return "eca";
    case AttentionKind::kGeThetaMinus: return "ge_theta_minus";
    case AttentionKind::kGeTheta: return "ge_theta";
    case AttentionKind::kGeThetaPlus: return "ge_theta_plus";
    case AttentionKind::kGct: return "gct";
    case AttentionKind::kGctGap: return "gct_gap";
    case AttentionKind::kSrm: return "srm";
    case AttentionKind::kSrmCross: return "srm_cross";
    case AttentionKind::kCbam: return "cbam";
    case AttentionKind::kCat: return "cat";
    case AttentionKind::kCatLite: return "catlite";
  }
  return "?";
}

std::vector<AttentionKind> all_attention_kinds() {
  return {AttentionKind::kSe,      AttentionKind::kSeL2,        AttentionKind::kGsop,
          AttentionKind::kFca,     AttentionKind::kEncNet,      AttentionKind::kEca,
          AttentionKind::kGeThetaMinus, AttentionKind::kGeTheta, AttentionKind::kGeThetaPlus,
          AttentionKind::kGct,     AttentionKind::kGctGap,      AttentionKind::kSrm,
          AttentionKind::kSrmCross, AttentionKind::kCbam,       AttentionKind::kCat,
          AttentionKind::kCatLite};
}

AttentionKind attention_kind_from_name(const std::string& name) {
  if (name == "none") return AttentionKind::kNone;
  for (AttentionKind k : all_attention_kinds())
    if (name == attention_kind_name(k)) return k;
  std::string valid = "none";
  for (AttentionKind k : all_attention_kinds()) valid += std::string(", ") + attention_kind_name(k);
  throw std::invalid_argument("unknown attention kind '" + name + "'; valid kinds: " + valid);
}

int AttentionSpec::resolved_k() const {
  if (k > 0) return k;
  switch (kind) {
    case AttentionKind::kEca: return 9;
    case AttentionKind::kCbam: return 15;
    case AttentionKind::kCat: return 3;
    default: return 0;
  }
}

int AttentionSpec::resolved_codewords(int n_classes) const {
  return codewords > 0 ? codewords : n_classes;
}

namespace {
bool uses_reduction(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::kSe:
    case AttentionKind::kSeL2:
    case AttentionKind::kGsop:
    case AttentionKind::kFca:
    case AttentionKind::kGeThetaPlus:
    case AttentionKind::kCbam:
    case AttentionKind::kCat:
    case AttentionKind::kCatLite:
      return true;
    default:
      return false;
  }
}
bool uses_kernel(AttentionKind kind) {
  return kind == AttentionKind::kEca || kind == AttentionKind::kCbam || kind == AttentionKind::kCat;
}
}  // namespace

void AttentionSpec::validate(int channels, int time, int n_classes) const {
  const std::string tag = attention_kind_name(kind);
  if (kind == AttentionKind::kNone) return;
  if (uses_reduction(kind)) {
    if (r < 1) throw std::invalid_argument(tag + ": reduction rate r must be >= 1, got " + std::to_string(r));
    if (channels % r != 0)
      throw std::invalid_argument(tag + ": channels C=" + std::to_string(channels) +
                                  " not divisible by reduction rate r=" + std::to_string(r));
  }
  if (kind == AttentionKind::kSrmCross) {
    if (r < 1 || r > 2 * channels)
      throw std::invalid_argument(tag + ": reduction rate r=" + std::to_string(r) + " out of range (1.." +
                                  std::to_string(2 * channels) + ")");
    if ((2 * channels) % r != 0)
      throw std::invalid_argument(tag + ": style width 2C=" + std::to_string(2 * channels) +
                                  " not divisible by r=" + std::to_string(r));
  }
  if (uses_kernel(kind)) {
    int kk = resolved_k();
    if (kk < 1 || kk % 2 == 0)
      throw std::invalid_argument(tag + ": kernel size k must be odd and >= 1, got " + std::to_string(kk));
    if (kind == AttentionKind::kEca && kk > 2 * channels - 1)
      throw std::invalid_argument(tag + ": kernel size k=" + std::to_string(kk) + " exceeds 2C-1=" +
                                  std::to_string(2 * channels - 1));
  }
  if (kind == AttentionKind::kFca) {
    if (dct_frequency_indices.empty())
      throw std::invalid_argument(tag + ": dct_frequency_indices must not be empty");
    if (channels % static_cast<int>(dct_frequency_indices.size()) != 0)
      throw std::invalid_argument(tag + ": channels C=" + std::to_string(channels) +
                                  " not divisible by number of frequency groups " +
                                  std::to_string(dct_frequency_indices.size()));
    for (int u : dct_frequency_indices)
      if (u < 0 || u >= time)
        throw std::invalid_argument(tag + ": frequency index " + std::to_string(u) + " out of range [0," +
                                    std::to_string(time) + ")");
  }
  if (kind == AttentionKind::kEncNet && resolved_codewords(n_classes) < 1)
    throw std::invalid_argument(tag + ": needs at least one codeword");
  if ((kind == AttentionKind::kGeTheta || kind == AttentionKind::kGeThetaPlus) && extent != "global")
    throw std::invalid_argument(tag + ": only the global extent is supported, got '" + extent + "'");
  (void)time;
}

std::string AttentionSpec::label() const {
  std::string out = attention_kind_name(kind);
  if (kind == AttentionKind::kNone) return out;
  std::string args;
  if (uses_reduction(kind) || kind == AttentionKind::kSrmCross) args += "r=" + std::to_string(r);
  if (uses_kernel(kind)) args += (args.empty() ? "" : ",") + std::string("k=") + std::to_string(resolved_k());
  if (kind == AttentionKind::kEncNet && codewords > 0)
    args += (args.empty() ? "" : ",") + std::string("K=") + std::to_string(codewords);
  if (!args.empty()) out += "(" + args + ")";
  return out;
}

template <typename S>
std::unique_ptr<AttentionBlock<S>> make_attention(const AttentionSpec& spec, int channels, int time,
                                                  int n_classes, uint64_t seed) {
  spec.validate(channels, time, n_classes);
  SplitMix64 rng(mix_key(seed, 0xA77E17ull, static_cast<uint64_t>(spec.kind)));
  switch (spec.kind) {
    case AttentionKind::kNone:
      return nullptr;
    case AttentionKind::kSe:
    case AttentionKind::kSeL2:
      return std::make_unique<SeBlock<S>>(spec, channels, rng);
    case AttentionKind::kGsop:
      return std::make_unique<GsopBlock<S>>(spec, channels, rng);
    case AttentionKind::kFca:
      return std::make_unique<FcaBlock<S>>(spec, channels, time, rng);
    case AttentionKind::kEncNet:
      return std::make_unique<EncNetBlock<S>>(spec, channels, n_classes, rng);
    case AttentionKind::kEca:
      return std::make_unique<EcaBlock<S>>(spec, rng);
    case AttentionKind::kGeThetaMinus:
    case AttentionKind::kGeTheta:
    case AttentionKind::kGeThetaPlus:
      return std::make_unique<GeBlock<S>>(spec, channels, time, rng);
    case AttentionKind::kGct:
    case AttentionKind::kGctGap:
      return std::make_unique<GctBlock<S>>(spec, channels);
    case AttentionKind::kSrm:
    case AttentionKind::kSrmCross:
      return std::make_unique<SrmBlock<S>>(spec, channels, rng);
    case AttentionKind::kCbam:
      return std::make_unique<CbamBlock<S>>(spec, channels, rng);
    case AttentionKind::kCat:
    case AttentionKind::kCatLite:
      return std::make_unique<CatBlock<S>>(spec, channels, rng);
  }
  throw std::invalid_argument("make_attention: unknown kind");
}

template std::unique_ptr<AttentionBlock<float>> make_attention<float>(const AttentionSpec&, int, int, int,
                                                                      uint64_t);
template std::unique_ptr<AttentionBlock<double>> make_attention<double>(const AttentionSpec&, int, int, int,
                                                                        uint64_t);

}  // namespace eegatt
