#pragma once

#include <string>
#include <vector>

#include "vseg/ops.hpp"
#include "vseg/rng.hpp"

namespace vseg {

// Owns the trainable Vars of one network; nodes carry their names.
struct ParamStore {
    std::vector<Var> params;

    Var add(Tensor t, const std::string& name) {
        params.push_back(param(std::move(t), name));
        return params.back();
    }
    int64_t count() const {
        int64_t n = 0;
        for (const auto& p : params) n += p->value.numel();
        return n;
    }
};

// ---- layer building blocks ----

struct Conv2dLayer {
    Var w, b;
    int stride = 1, pad = 0;
    Var operator()(const Var& x) const { return conv2d(x, w, b, stride, pad); }
};

struct LinearLayer {
    Var w, b;
    Var operator()(const Var& x) const { return linear(x, w, b); }
};

// group standardization with learned per-channel affine; groups == C gives
// instance statistics
struct NormAffine {
    Var gamma, beta;
    int groups = 1;
    Var operator()(const Var& x) const {
        return channel_affine(group_standardize(x, groups, 1e-5), gamma, beta);
    }
};

// One switchable normalization site. Without a mask: instance normalization
// with a learned channelwise affine. With a mask: the same standardization,
// then a spatially-varying affine whose scale and shift come from convolutions
// over the mask (resampled to the feature resolution by nearest neighbor).
struct SspadeSite {
    NormAffine in_branch;  // mask-absent affine
    Conv2dLayer shared, gamma_head, beta_head;
    // branch counters for switch instrumentation, mutable state owned by the net
    Var operator()(const Var& x, const Tensor* mask, int* in_runs, int* spade_runs) const;
};

// ---- noise predictor ----

// U-Net encoder-decoder. widths[i] is the channel count of level i; level 0
// runs at full resolution, each deeper level at half the previous. Each level
// pushes three skip tensors on the way down and consumes them in reverse on
// the way up. Residual blocks are GN-Swish-Conv pairs with the timestep
// embedding added between the convs; self-attention follows every residual
// block of attn_level and sits between the two mid blocks.
class DenoiserNet {
  public:
    struct Config {
        std::vector<int> widths{64, 64, 128, 128, 256, 256};
        int attn_level = 4;  // 0-based level index
        int norm_groups = 32;
        int temb_dim = 256;
        bool use_temb = true;  // false: unconditional autoencoder variant
        int in_ch = 1;
        uint64_t init_seed = 1;
    };
    static Config paper();
    static Config tiny(uint64_t seed);

    explicit DenoiserNet(const Config& cfg);

    // x {N,in_ch,H,W} with H and W divisible by 2^(levels-1); t >= 0 per element
    Var forward(const Var& x, const std::vector<int>& t) const;

    const std::vector<Var>& params() const { return store_.params; }
    int64_t param_count() const { return store_.count(); }
    int levels() const { return static_cast<int>(cfg_.widths.size()); }
    const Config& config() const { return cfg_; }

  private:
    struct ResBlock {
        NormAffine gn1, gn2;
        Conv2dLayer conv1, conv2, shortcut;
        LinearLayer temb_proj;
        bool has_shortcut = false;
        bool has_temb = false;
    };
    struct AttnBlock {
        NormAffine gn;
        Conv2dLayer qkv, proj;
    };

    Var run_res(const ResBlock& rb, const Var& x, const Var& temb) const;
    Var run_attn(const AttnBlock& ab, const Var& x) const;

    Config cfg_;
    ParamStore store_;
    LinearLayer temb_fc1_, temb_fc2_;
    Conv2dLayer in_conv_;
    std::vector<Conv2dLayer> down_convs_;           // one per level > 0
    std::vector<std::vector<ResBlock>> down_res_;   // 2 per level
    std::vector<std::vector<AttnBlock>> down_attn_;  // attn_level only
    ResBlock mid_res1_, mid_res2_;
    AttnBlock mid_attn_;
    std::vector<std::vector<ResBlock>> up_res_;  // 3 per level
    std::vector<std::vector<AttnBlock>> up_attn_;
    std::vector<Conv2dLayer> up_convs_;  // upsample conv per level > 0
    NormAffine out_norm_;
    Conv2dLayer out_conv_;
};

// ---- generation module ----

// Encoder (7x7 conv, two stride-2 convs with plain instance normalization),
// four residual blocks whose normalization sites switch on the mask, two of
// them preceded by nearest upsampling, and a 7x7 output conv squashed by tanh.
class GeneratorNet {
  public:
    enum class Mode {
        switchable,    // mask presence picks the branch per call
        always_in,     // S-SPADE sites ignore masks entirely
        always_spade,  // sites demand a mask on every call
    };
    struct Config {
        int base = 64;       // encoder width; downs go to 2x and 4x
        int spade_hidden = 128;
        int in_ch = 2;       // noisy image + noise estimate, concatenated
        Mode mode = Mode::switchable;
        uint64_t init_seed = 2;
    };
    static Config paper();
    static Config tiny(uint64_t seed);

    explicit GeneratorNet(const Config& cfg);

    // latent {N,in_ch,H,W}; mask nullptr or {N,1,h,w} in {0,1}
    Var forward(const Var& latent, const Tensor* mask) const;

    const std::vector<Var>& params() const { return store_.params; }
    int64_t param_count() const { return store_.count(); }
    const Config& config() const { return cfg_; }

    // branch instrumentation for the most recent forward
    int last_in_branch_runs() const { return in_runs_; }
    int last_spade_branch_runs() const { return spade_runs_; }

  private:
    struct GenResBlock {
        Conv2dLayer conv1, conv2, shortcut;
        SspadeSite norm1, norm2;
        bool has_shortcut = false;
        bool upsample_first = false;
    };

    Var run_res(const GenResBlock& rb, const Var& x, const Tensor* mask) const;

    Config cfg_;
    ParamStore store_;
    Conv2dLayer in_conv_, down1_, down2_, out_conv_;
    std::vector<GenResBlock> blocks_;
    mutable int in_runs_ = 0, spade_runs_ = 0;
};

// ---- patch discriminator ----

// 70x70 receptive-field patch classifier: stride-2 4x4 convs to 8x base
// width, then two stride-1 4x4 convs; leaky ReLU slope 0.2, plain instance
// normalization on the middle layers, raw scores (least-squares objective).
class DiscriminatorNet {
  public:
    struct Config {
        int base = 64;
        int in_ch = 1;
        uint64_t init_seed = 3;
    };
    static Config paper();
    static Config tiny(uint64_t seed);

    explicit DiscriminatorNet(const Config& cfg);

    Var forward(const Var& x) const;

    const std::vector<Var>& params() const { return store_.params; }
    int64_t param_count() const { return store_.count(); }
    const Config& config() const { return cfg_; }

  private:
    Config cfg_;
    ParamStore store_;
    std::vector<Conv2dLayer> convs_;
};

// dim must be even; rows are [sin(t * f_0) ... sin(t * f_{d/2-1}), cos(...)]
// with frequencies log-spaced from 1 down to 1/10000.
Tensor sinusoidal_embedding(const std::vector<int>& t, int dim);

// Nearest-neighbor resample of a {N,1,h,w} mask batch to (H,W).
Tensor resize_mask_batch(const Tensor& mask, int H, int W);

}  // namespace vseg
