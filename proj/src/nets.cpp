#include "vseg/nets.hpp"

#include <cmath>

namespace vseg {

namespace {

// largest divisor of C not exceeding the requested group count
int pick_groups(int want, int C) {
    for (int g = std::min(want, C); g > 1; --g)
        if (C % g == 0) return g;
    return 1;
}

Tensor conv_weight(Rng& rng, int out, int in, int k, real stddev) {
    return Tensor::randn({out, in, k, k}, rng, stddev);
}

Conv2dLayer make_conv(ParamStore& ps, Rng& rng, const std::string& name, int in, int out, int k,
                      int stride, int pad, real stddev) {
    Conv2dLayer c;
    c.w = ps.add(conv_weight(rng, out, in, k, stddev), name + ".w");
    c.b = ps.add(Tensor::zeros({out}), name + ".b");
    c.stride = stride;
    c.pad = pad;
    return c;
}

// scale < 1 damps the residual-branch and output convolutions at init
Conv2dLayer make_conv_he(ParamStore& ps, Rng& rng, const std::string& name, int in, int out,
                         int k, int stride, int pad, real scale = 1.0) {
    const real stddev = scale * std::sqrt(2.0 / (static_cast<real>(in) * k * k));
    return make_conv(ps, rng, name, in, out, k, stride, pad, stddev);
}

constexpr real kResidualDamp = 0.1;

LinearLayer make_linear(ParamStore& ps, Rng& rng, const std::string& name, int in, int out) {
    LinearLayer l;
    l.w = ps.add(Tensor::randn({out, in}, rng, std::sqrt(2.0 / static_cast<real>(in))),
                 name + ".w");
    l.b = ps.add(Tensor::zeros({out}), name + ".b");
    return l;
}

NormAffine make_norm(ParamStore& ps, const std::string& name, int C, int groups) {
    NormAffine n;
    n.gamma = ps.add(Tensor::full({C}, 1.0), name + ".gamma");
    n.beta = ps.add(Tensor::zeros({C}), name + ".beta");
    n.groups = pick_groups(groups, C);
    return n;
}

// instance standardization without learned affine
Var plain_in(const Var& x) { return group_standardize(x, x->value.dim(1), 1e-5); }

constexpr real kGanInit = 0.02;

SspadeSite make_sspade(ParamStore& ps, Rng& rng, const std::string& name, int C, int hidden) {
    SspadeSite s;
    s.in_branch = make_norm(ps, name + ".in", C, C);  // per-channel affine
    s.shared = make_conv(ps, rng, name + ".shared", 1, hidden, 3, 1, 1, kGanInit);
    s.gamma_head = make_conv(ps, rng, name + ".gamma", hidden, C, 3, 1, 1, kGanInit);
    s.beta_head = make_conv(ps, rng, name + ".beta", hidden, C, 3, 1, 1, kGanInit);
    // identity-leaning modulation at initialization
    s.gamma_head.b->value.fill(1.0);
    return s;
}

}  // namespace

Tensor sinusoidal_embedding(const std::vector<int>& t, int dim) {
    check(dim >= 2 && dim % 2 == 0, "sinusoidal_embedding: dim must be even");
    const int N = static_cast<int>(t.size());
    const int half = dim / 2;
    Tensor emb({N, dim});
    for (int n = 0; n < N; ++n) {
        for (int i = 0; i < half; ++i) {
            const real freq =
                half > 1 ? std::exp(-std::log(10000.0) * static_cast<real>(i) / (half - 1))
                         : 1.0;
            const real arg = static_cast<real>(t[static_cast<size_t>(n)]) * freq;
            emb[static_cast<int64_t>(n) * dim + i] = std::sin(arg);
            emb[static_cast<int64_t>(n) * dim + half + i] = std::cos(arg);
        }
    }
    return emb;
}

Tensor resize_mask_batch(const Tensor& mask, int H, int W) {
    check_shape(mask.ndim() == 4 && mask.dim(1) == 1,
                "resize_mask_batch: expected {N,1,h,w}, got " + mask.shape_str());
    const int N = mask.dim(0), h = mask.dim(2), w = mask.dim(3);
    if (h == H && w == W) return mask;
    Tensor out({N, 1, H, W});
    for (int n = 0; n < N; ++n)
        for (int i = 0; i < H; ++i) {
            const int si = std::min(h - 1, static_cast<int>((i + 0.5) * h / H));
            for (int j = 0; j < W; ++j) {
                const int sj = std::min(w - 1, static_cast<int>((j + 0.5) * w / W));
                out.at4(n, 0, i, j) = mask.at4(n, 0, si, sj);
            }
        }
    return out;
}

Var SspadeSite::operator()(const Var& x, const Tensor* mask, int* in_runs,
                           int* spade_runs) const {
    Var xhat = group_standardize(x, x->value.dim(1), 1e-5);
    if (mask == nullptr) {
        ++(*in_runs);
        return channel_affine(xhat, in_branch.gamma, in_branch.beta);
    }
    ++(*spade_runs);
    const Tensor m = resize_mask_batch(*mask, x->value.dim(2), x->value.dim(3));
    Var hidden = relu(shared(leaf(m)));
    Var g = gamma_head(hidden);
    Var b = beta_head(hidden);
    return add(mul(xhat, g), b);
}

// ---- DenoiserNet ----

DenoiserNet::Config DenoiserNet::paper() { return Config{}; }

DenoiserNet::Config DenoiserNet::tiny(uint64_t seed) {
    Config c;
    c.widths = {4, 4, 4};
    c.attn_level = 2;
    c.norm_groups = 2;
    c.temb_dim = 16;
    c.init_seed = seed;
    return c;
}

DenoiserNet::DenoiserNet(const Config& cfg) : cfg_(cfg) {
    check(!cfg_.widths.empty(), "denoiser: need at least one level");
    check(cfg_.widths[0] % 2 == 0, "denoiser: base width must be even");
    Rng rng(cfg_.init_seed);
    const int L = levels();
    const int g = cfg_.norm_groups;

    auto make_res = [&](const std::string& name, int in, int out) {
        ResBlock rb;
        rb.gn1 = make_norm(store_, name + ".gn1", in, g);
        rb.conv1 = make_conv_he(store_, rng, name + ".conv1", in, out, 3, 1, 1);
        if (cfg_.use_temb) {
            rb.temb_proj = make_linear(store_, rng, name + ".temb", cfg_.temb_dim, out);
            rb.has_temb = true;
        }
        rb.gn2 = make_norm(store_, name + ".gn2", out, g);
        rb.conv2 = make_conv_he(store_, rng, name + ".conv2", out, out, 3, 1, 1, kResidualDamp);
        if (in != out) {
            rb.shortcut = make_conv_he(store_, rng, name + ".skip", in, out, 1, 1, 0);
            rb.has_shortcut = true;
        }
        return rb;
    };
    auto make_att = [&](const std::string& name, int C) {
        AttnBlock ab;
        ab.gn = make_norm(store_, name + ".gn", C, g);
        ab.qkv = make_conv_he(store_, rng, name + ".qkv", C, 3 * C, 1, 1, 0);
        ab.proj = make_conv_he(store_, rng, name + ".proj", C, C, 1, 1, 0, kResidualDamp);
        return ab;
    };

    if (cfg_.use_temb) {
        temb_fc1_ = make_linear(store_, rng, "temb.fc1", cfg_.widths[0], cfg_.temb_dim);
        temb_fc2_ = make_linear(store_, rng, "temb.fc2", cfg_.temb_dim, cfg_.temb_dim);
    }
    in_conv_ = make_conv_he(store_, rng, "in", cfg_.in_ch, cfg_.widths[0], 3, 1, 1);

    down_res_.resize(static_cast<size_t>(L));
    down_attn_.resize(static_cast<size_t>(L));
    up_res_.resize(static_cast<size_t>(L));
    up_attn_.resize(static_cast<size_t>(L));
    for (int l = 0; l < L; ++l) {
        const int w = cfg_.widths[static_cast<size_t>(l)];
        const std::string dn = "down" + std::to_string(l);
        if (l > 0)
            down_convs_.push_back(make_conv_he(store_, rng, dn + ".pool",
                                               cfg_.widths[static_cast<size_t>(l) - 1], w, 3, 2,
                                               1));
        for (int r = 0; r < 2; ++r) {
            down_res_[static_cast<size_t>(l)].push_back(
                make_res(dn + ".rb" + std::to_string(r), w, w));
            if (l == cfg_.attn_level)
                down_attn_[static_cast<size_t>(l)].push_back(
                    make_att(dn + ".sa" + std::to_string(r), w));
        }
    }
    const int wm = cfg_.widths.back();
    mid_res1_ = make_res("mid.rb0", wm, wm);
    mid_attn_ = make_att("mid.sa", wm);
    mid_res2_ = make_res("mid.rb1", wm, wm);
    for (int l = L - 1; l >= 0; --l) {
        const int w = cfg_.widths[static_cast<size_t>(l)];
        const std::string un = "up" + std::to_string(l);
        for (int r = 0; r < 3; ++r) {
            up_res_[static_cast<size_t>(l)].push_back(
                make_res(un + ".rb" + std::to_string(r), 2 * w, w));
            if (l == cfg_.attn_level)
                up_attn_[static_cast<size_t>(l)].push_back(
                    make_att(un + ".sa" + std::to_string(r), w));
        }
        if (l > 0)
            up_convs_.push_back(make_conv_he(store_, rng, un + ".unpool", w,
                                             cfg_.widths[static_cast<size_t>(l) - 1], 3, 1, 1));
    }
    out_norm_ = make_norm(store_, "out.gn", cfg_.widths[0], g);
    out_conv_ = make_conv_he(store_, rng, "out.conv", cfg_.widths[0], 1, 3, 1, 1, kResidualDamp);
}

Var DenoiserNet::run_res(const ResBlock& rb, const Var& x, const Var& temb) const {
    Var h = rb.conv1(swish(rb.gn1(x)));
    if (rb.has_temb) h = add_rowvec(h, rb.temb_proj(temb));
    h = rb.conv2(swish(rb.gn2(h)));
    const Var sc = rb.has_shortcut ? rb.shortcut(x) : x;
    return add(sc, h);
}

Var DenoiserNet::run_attn(const AttnBlock& ab, const Var& x) const {
    const int C = x->value.dim(1);
    Var h = ab.qkv(ab.gn(x));
    Var q = slice_ch(h, 0, C);
    Var k = slice_ch(h, C, 2 * C);
    Var v = slice_ch(h, 2 * C, 3 * C);
    return add(x, ab.proj(attention_single_head(q, k, v)));
}

Var DenoiserNet::forward(const Var& x, const std::vector<int>& t) const {
    check_shape(x->value.ndim() == 4 && x->value.dim(1) == cfg_.in_ch,
                "denoiser: bad input shape " + x->value.shape_str());
    const int L = levels();
    const int div = 1 << (L - 1);
    check_shape(x->value.dim(2) % div == 0 && x->value.dim(3) % div == 0,
                "denoiser: spatial dims must be divisible by " + std::to_string(div));
    check(static_cast<int>(t.size()) == x->value.dim(0),
          "denoiser: need one timestep per batch element");
    for (int tv : t) check(tv >= 0, "denoiser: negative timestep");

    Var temb;
    if (cfg_.use_temb) {
        Tensor sin = sinusoidal_embedding(t, cfg_.widths[0]);
        temb = temb_fc2_(swish(temb_fc1_(leaf(std::move(sin)))));
    }

    std::vector<Var> skips;
    Var h = in_conv_(x);
    for (int l = 0; l < L; ++l) {
        if (l > 0) h = down_convs_[static_cast<size_t>(l) - 1](h);
        skips.push_back(h);
        for (int r = 0; r < 2; ++r) {
            h = run_res(down_res_[static_cast<size_t>(l)][static_cast<size_t>(r)], h, temb);
            if (l == cfg_.attn_level)
                h = run_attn(down_attn_[static_cast<size_t>(l)][static_cast<size_t>(r)], h);
            skips.push_back(h);
        }
    }
    h = run_res(mid_res1_, h, temb);
    h = run_attn(mid_attn_, h);
    h = run_res(mid_res2_, h, temb);
    size_t upc = 0;
    for (int l = L - 1; l >= 0; --l) {
        for (int r = 0; r < 3; ++r) {
            h = concat_ch(h, skips.back());
            skips.pop_back();
            h = run_res(up_res_[static_cast<size_t>(l)][static_cast<size_t>(r)], h, temb);
            if (l == cfg_.attn_level)
                h = run_attn(up_attn_[static_cast<size_t>(l)][static_cast<size_t>(r)], h);
        }
        if (l > 0) h = up_convs_[upc++](upsample_nearest2(h));
    }
    return out_conv_(swish(out_norm_(h)));
}

// ---- GeneratorNet ----

GeneratorNet::Config GeneratorNet::paper() { return Config{}; }

GeneratorNet::Config GeneratorNet::tiny(uint64_t seed) {
    Config c;
    c.base = 2;
    c.spade_hidden = 2;
    c.init_seed = seed;
    return c;
}

GeneratorNet::GeneratorNet(const Config& cfg) : cfg_(cfg) {
    check(cfg_.base >= 1 && cfg_.spade_hidden >= 1 && cfg_.in_ch >= 1,
          "generator: bad config");
    Rng rng(cfg_.init_seed);
    const int b = cfg_.base;

    in_conv_ = make_conv(store_, rng, "in", cfg_.in_ch, b, 7, 1, 3, kGanInit);
    down1_ = make_conv(store_, rng, "down1", b, 2 * b, 3, 2, 1, kGanInit);
    down2_ = make_conv(store_, rng, "down2", 2 * b, 4 * b, 3, 2, 1, kGanInit);

    auto make_block = [&](const std::string& name, int in, int out, bool up) {
        GenResBlock rb;
        rb.upsample_first = up;
        rb.conv1 = make_conv(store_, rng, name + ".conv1", in, out, 3, 1, 1, kGanInit);
        rb.norm1 = make_sspade(store_, rng, name + ".sspade1", out, cfg_.spade_hidden);
        rb.conv2 = make_conv(store_, rng, name + ".conv2", out, out, 3, 1, 1, kGanInit);
        rb.norm2 = make_sspade(store_, rng, name + ".sspade2", out, cfg_.spade_hidden);
        if (in != out) {
            rb.shortcut = make_conv(store_, rng, name + ".skip", in, out, 1, 1, 0, kGanInit);
            rb.has_shortcut = true;
        }
        return rb;
    };
    blocks_.push_back(make_block("mid1", 4 * b, 4 * b, false));
    blocks_.push_back(make_block("mid2", 4 * b, 4 * b, false));
    blocks_.push_back(make_block("up1", 4 * b, 2 * b, true));
    blocks_.push_back(make_block("up2", 2 * b, b, true));

    out_conv_ = make_conv(store_, rng, "out", b, 1, 7, 1, 3, kGanInit);
}

Var GeneratorNet::run_res(const GenResBlock& rb, const Var& x, const Tensor* mask) const {
    const Var x0 = rb.upsample_first ? upsample_nearest2(x) : x;
    Var h = rb.norm1(relu(rb.conv1(x0)), mask, &in_runs_, &spade_runs_);
    h = rb.norm2(relu(rb.conv2(h)), mask, &in_runs_, &spade_runs_);
    const Var sc = rb.has_shortcut ? rb.shortcut(x0) : x0;
    return add(sc, h);
}

Var GeneratorNet::forward(const Var& latent, const Tensor* mask) const {
    check_shape(latent->value.ndim() == 4 && latent->value.dim(1) == cfg_.in_ch,
                "generator: bad input shape " + latent->value.shape_str());
    check_shape(latent->value.dim(2) % 4 == 0 && latent->value.dim(3) % 4 == 0,
                "generator: spatial dims must be divisible by 4");
    if (cfg_.mode == Mode::always_in) mask = nullptr;
    if (cfg_.mode == Mode::always_spade)
        check(mask != nullptr, "generator: this instance requires a mask");
    if (mask != nullptr) {
        check_shape(mask->ndim() == 4 && mask->dim(1) == 1 &&
                        mask->dim(0) == latent->value.dim(0),
                    "generator: mask shape " + mask->shape_str() +
                        " incompatible with input " + latent->value.shape_str());
    }
    in_runs_ = 0;
    spade_runs_ = 0;

    Var h = relu(plain_in(in_conv_(latent)));
    h = relu(plain_in(down1_(h)));
    h = relu(plain_in(down2_(h)));
    for (const auto& rb : blocks_) h = run_res(rb, h, mask);
    return tanh_op(out_conv_(h));
}

// ---- DiscriminatorNet ----

DiscriminatorNet::Config DiscriminatorNet::paper() { return Config{}; }

DiscriminatorNet::Config DiscriminatorNet::tiny(uint64_t seed) {
    Config c;
    c.base = 3;
    c.init_seed = seed;
    return c;
}

DiscriminatorNet::DiscriminatorNet(const Config& cfg) : cfg_(cfg) {
    check(cfg_.base >= 1, "discriminator: bad config");
    Rng rng(cfg_.init_seed);
    const int b = cfg_.base;
    convs_.push_back(make_conv(store_, rng, "c0", cfg_.in_ch, b, 4, 2, 1, kGanInit));
    convs_.push_back(make_conv(store_, rng, "c1", b, 2 * b, 4, 2, 1, kGanInit));
    convs_.push_back(make_conv(store_, rng, "c2", 2 * b, 4 * b, 4, 2, 1, kGanInit));
    convs_.push_back(make_conv(store_, rng, "c3", 4 * b, 8 * b, 4, 1, 1, kGanInit));
    convs_.push_back(make_conv(store_, rng, "c4", 8 * b, 1, 4, 1, 1, kGanInit));
}

Var DiscriminatorNet::forward(const Var& x) const {
    check_shape(x->value.ndim() == 4 && x->value.dim(1) == cfg_.in_ch,
                "discriminator: bad input shape " + x->value.shape_str());
    check_shape(x->value.dim(2) >= 32 && x->value.dim(3) >= 32,
                "discriminator: input must be at least 32x32");
    Var h = leaky_relu(convs_[0](x), 0.2);
    h = leaky_relu(plain_in(convs_[1](h)), 0.2);
    h = leaky_relu(plain_in(convs_[2](h)), 0.2);
    h = leaky_relu(plain_in(convs_[3](h)), 0.2);
    return convs_[4](h);
}

}  // namespace vseg
