// The detector backbone: patch embedding, four stages of dual-branch
// Lite-Conv-SSM blocks with patch merging in between, and a single-box-per-
// class detection head. Teacher and student share the architecture and differ
// only in widths.
#pragma once

#include "edgenav/ssm.hpp"

namespace edgenav {

struct ModelConfig {
  std::array<int64_t, 4> depths{2, 2, 4, 2};
  std::array<int64_t, 4> channels{32, 64, 128, 256};
  int64_t num_classes = 3;
  int64_t patch_size = 4;
  int64_t input_size = 224;
  int64_t d_state = 8;
  int64_t head_width = 456;

  void validate() const {
    for (int i = 0; i < 4; ++i) {
      if (depths[i] < 1) throw ConfigError("ModelConfig: depths must be positive");
      if (channels[i] % 2 != 0)
        throw ConfigError("ModelConfig: stage channels must be even, got " +
                          std::to_string(channels[i]) + " at stage " + std::to_string(i));
    }
    for (int i = 0; i < 3; ++i)
      if (channels[i + 1] != 2 * channels[i])
        throw ConfigError("ModelConfig: channels must double per stage (merge maps "
                          "4C->2C), got " + std::to_string(channels[i]) + " -> " +
                          std::to_string(channels[i + 1]));
    if (input_size % (patch_size * 8) != 0)
      throw ConfigError("ModelConfig: input_size " + std::to_string(input_size) +
                        " must be divisible by patch_size*8 = " +
                        std::to_string(patch_size * 8));
    if (num_classes < 1 || head_width < 1 || d_state < 1 || patch_size < 1)
      throw ConfigError("ModelConfig: sizes must be positive");
  }

  // Paper widths for the student; the teacher doubles every stage, with head
  // widths tuned to land the two parameter budgets.
  static ModelConfig student() { return {}; }
  static ModelConfig teacher() {
    ModelConfig cfg;
    cfg.channels = {64, 128, 256, 512};
    cfg.head_width = 875;
    return cfg;
  }
};

struct Detection {
  int class_id = 0;
  double confidence = 0.0;
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

// Dual-branch block: depthwise+pointwise convolutions on the first channel
// half, LiteSS2D on the second, fused by concatenation and channel shuffle.
template <typename T>
struct LiteConvSsmBlock {
  int64_t channels = 0;
  Conv2dLayer<T> conv_dw, conv_pw;
  LiteSS2D<T> ss2d;

  LiteConvSsmBlock() = default;
  LiteConvSsmBlock(int64_t c, int64_t d_state, Rng& rng)
      : channels(c),
        conv_dw(c / 2, c / 2, 3, 1, 1, c / 2, true, rng),
        conv_pw(c / 2, c / 2, 1, 1, 0, 1, true, rng),
        ss2d(c / 2, d_state, rng) {
    if (c % 2 != 0)
      throw ConfigError("LiteConvSsmBlock: channel count must be even, got " +
                        std::to_string(c));
  }

  TensorT<T> forward(const TensorT<T>& x) const {
    const int64_t half = channels / 2;
    TensorT<T> local = conv_pw.forward(silu(conv_dw.forward(narrow_channels(x, 0, half))));
    TensorT<T> global = ss2d.forward(narrow_channels(x, half, half));
    return channel_shuffle(concat_channels<T>({local, global}), 2);
  }

  void collect(const std::string& prefix, ParamMap<T>& pm) const {
    conv_dw.collect(prefix + ".conv_dw", pm);
    conv_pw.collect(prefix + ".conv_pw", pm);
    ss2d.collect(prefix + ".ss2d", pm);
  }
};

// 2x2 neighborhood concat (4C), norm, pointwise projection to 2C.
template <typename T>
struct PatchMerge {
  LayerNormLayer<T> norm;
  Conv2dLayer<T> proj;

  PatchMerge() = default;
  PatchMerge(int64_t c_in, Rng& rng)
      : norm(4 * c_in), proj(4 * c_in, 2 * c_in, 1, 1, 0, 1, true, rng) {}

  TensorT<T> forward(const TensorT<T>& x) const {
    return proj.forward(norm.forward(space_to_depth2(x)));
  }
  void collect(const std::string& prefix, ParamMap<T>& pm) const {
    norm.collect(prefix + ".norm", pm);
    proj.collect(prefix + ".proj", pm);
  }
};

// Depthwise + pointwise convolutions, mean pool, linear to n*(1+4) logits:
// per class (conf, tx1, ty1, tx2, ty2).
template <typename T>
struct DetectHead {
  int64_t num_classes = 0;
  Conv2dLayer<T> dw, pw;
  LinearLayer<T> fc;

  DetectHead() = default;
  DetectHead(int64_t c_in, int64_t width, int64_t n, Rng& rng)
      : num_classes(n),
        dw(c_in, c_in, 3, 1, 1, c_in, true, rng),
        pw(c_in, width, 1, 1, 0, 1, true, rng),
        fc(width, n * 5, true, rng) {}

  TensorT<T> forward(const TensorT<T>& feat) const {
    TensorT<T> x = silu(pw.forward(silu(dw.forward(feat))));
    TensorT<T> logits = fc.forward(reduce_mean_pool(x));
    return reshape(logits, {feat.dim(0), num_classes, 5});
  }
  void collect(const std::string& prefix, ParamMap<T>& pm) const {
    dw.collect(prefix + ".dw", pm);
    pw.collect(prefix + ".pw", pm);
    fc.collect(prefix + ".fc", pm);
  }
};

template <typename T>
struct DetectorModel {
  ModelConfig cfg;
  Conv2dLayer<T> patch_conv;
  LayerNormLayer<T> patch_norm;
  std::array<std::vector<LiteConvSsmBlock<T>>, 4> stages;
  std::array<PatchMerge<T>, 3> merges;
  DetectHead<T> head;

  DetectorModel() = default;
  DetectorModel(const ModelConfig& config, uint64_t seed) : cfg(config) {
    cfg.validate();
    Rng rng(derive_seed(seed, 17));
    patch_conv = Conv2dLayer<T>(3, cfg.channels[0], cfg.patch_size, cfg.patch_size, 0,
                                1, true, rng);
    patch_norm = LayerNormLayer<T>(cfg.channels[0]);
    for (int s = 0; s < 4; ++s)
      for (int64_t b = 0; b < cfg.depths[s]; ++b)
        stages[s].emplace_back(cfg.channels[s], cfg.d_state, rng);
    for (int s = 0; s < 3; ++s) merges[s] = PatchMerge<T>(cfg.channels[s], rng);
    head = DetectHead<T>(cfg.channels[3], cfg.head_width, cfg.num_classes, rng);
  }

  struct Output {
    TensorT<T> pred;         // [N, num_classes, 5]
    TensorT<T> stage3_feat;  // [N, channels[2], H3, W3], the distillation tap
  };

  // Non-overlapping patch embedding, then stage1..4 with merges in between.
  Output forward(const TensorT<T>& img) const {
    if (img.ndim() != 4 || img.dim(1) != 3 || img.dim(2) != cfg.input_size ||
        img.dim(3) != cfg.input_size)
      throw DimensionError("DetectorModel: expected input [N,3," +
                           std::to_string(cfg.input_size) + "," +
                           std::to_string(cfg.input_size) + "], got " +
                           shape_str(img.shape()));
    TensorT<T> x = patch_norm.forward(patch_conv.forward(img));
    Output out;
    for (int s = 0; s < 4; ++s) {
      for (const auto& blk : stages[s]) x = blk.forward(x);
      if (s == 2) out.stage3_feat = x;
      if (s < 3) x = merges[s].forward(x);
    }
    out.pred = head.forward(x);
    return out;
  }

  ParamMap<T> parameters() const {
    ParamMap<T> pm;
    patch_conv.collect("patch_embed.conv", pm);
    patch_norm.collect("patch_embed.norm", pm);
    for (int s = 0; s < 4; ++s)
      for (size_t b = 0; b < stages[s].size(); ++b)
        stages[s][b].collect("stage" + std::to_string(s + 1) + ".block" +
                             std::to_string(b), pm);
    for (int s = 0; s < 3; ++s) merges[s].collect("merge" + std::to_string(s + 1), pm);
    head.collect("head", pm);
    return pm;
  }
};

// ---------------------------------------------------------------------------
// Parameter / FLOP accounting (static analysis from the config alone)
// ---------------------------------------------------------------------------

inline int64_t conv_param_count(int64_t c_in, int64_t c_out, int64_t kh, int64_t kw,
                                int64_t groups, bool bias) {
  return c_out * (c_in / groups) * kh * kw + (bias ? c_out : 0);
}
inline int64_t conv_mac_count(int64_t c_in, int64_t c_out, int64_t kh, int64_t kw,
                              int64_t groups, int64_t ho, int64_t wo) {
  return c_out * (c_in / groups) * kh * kw * ho * wo;
}
inline int64_t linear_param_count(int64_t in, int64_t out, bool bias) {
  return out * in + (bias ? out : 0);
}
inline int64_t linear_mac_count(int64_t in, int64_t out, int64_t rows) {
  return rows * in * out;
}
// One scan direction: state decay + drive (2S) plus input injection (S) and
// output contraction (S) per (channel, step).
inline int64_t scan_mac_count(int64_t d_inner, int64_t len, int64_t d_state) {
  return d_inner * len * 4 * d_state;
}

struct CostReport {
  int64_t params = 0;
  int64_t flops = 0;  // 2 * MACs over conv/linear/scan for one forward
};

inline CostReport count_params_flops(const ModelConfig& cfg) {
  cfg.validate();
  int64_t params = 0, macs = 0;
  int64_t hw = cfg.input_size / cfg.patch_size;

  params += conv_param_count(3, cfg.channels[0], cfg.patch_size, cfg.patch_size, 1, true);
  macs += conv_mac_count(3, cfg.channels[0], cfg.patch_size, cfg.patch_size, 1, hw, hw);
  params += 2 * cfg.channels[0];  // embed norm

  for (int s = 0; s < 4; ++s) {
    const int64_t c = cfg.channels[s], half = c / 2, d = c;  // d_inner = 2*(c/2)
    const int64_t dtr = std::max<int64_t>(1, d / 16), st = cfg.d_state;
    const int64_t l = hw * hw;
    for (int64_t b = 0; b < cfg.depths[s]; ++b) {
      // conv branch
      params += conv_param_count(half, half, 3, 3, half, true);
      macs += conv_mac_count(half, half, 3, 3, half, hw, hw);
      params += conv_param_count(half, half, 1, 1, 1, true);
      macs += conv_mac_count(half, half, 1, 1, 1, hw, hw);
      // LiteSS2D
      params += conv_param_count(half, d, 1, 1, 1, true);
      macs += conv_mac_count(half, d, 1, 1, 1, hw, hw);
      params += conv_param_count(d, d, 1, 3, d, true) + conv_param_count(d, d, 3, 1, d, true);
      macs += conv_mac_count(d, d, 1, 3, d, hw, hw) + conv_mac_count(d, d, 3, 1, d, hw, hw);
      params += d * st + d;                      // a_log, d_skip
      params += linear_param_count(d, dtr + 2 * st, false);  // x_proj
      params += linear_param_count(dtr, d, true);            // dt_proj
      params += 2 * d;                                       // scan-merge norm
      params += conv_param_count(d, half, 1, 1, 1, true);
      macs += conv_mac_count(d, half, 1, 1, 1, hw, hw);
      // per-direction projections and the scan itself
      macs += 4 * (linear_mac_count(d, dtr + 2 * st, l) + linear_mac_count(dtr, d, l) +
                   scan_mac_count(d, l, st));
    }
    if (s < 3) {
      params += 2 * (4 * c);  // merge norm
      params += conv_param_count(4 * c, 2 * c, 1, 1, 1, true);
      hw /= 2;
      macs += conv_mac_count(4 * c, 2 * c, 1, 1, 1, hw, hw);
    }
  }

  const int64_t c3 = cfg.channels[3];
  params += conv_param_count(c3, c3, 3, 3, c3, true);
  macs += conv_mac_count(c3, c3, 3, 3, c3, hw, hw);
  params += conv_param_count(c3, cfg.head_width, 1, 1, 1, true);
  macs += conv_mac_count(c3, cfg.head_width, 1, 1, 1, hw, hw);
  params += linear_param_count(cfg.head_width, cfg.num_classes * 5, true);
  macs += linear_mac_count(cfg.head_width, cfg.num_classes * 5, 1);

  return {params, 2 * macs};
}

template <typename T>
CostReport count_params_flops(const DetectorModel<T>& model) {
  return count_params_flops(model.cfg);
}

}  // namespace edgenav
