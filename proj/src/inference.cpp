#include "vseg/inference.hpp"

#include <algorithm>
#include <memory>

#include "vseg/ops.hpp"

namespace vseg {

namespace {

// Smallest spatial granule every present network accepts.
int model_stride(const ModelBundle& b) {
    int s = 4;  // the generation module downsamples twice
    if (b.denoiser)
        s = std::max(s, 1 << (static_cast<int>(b.denoiser->config().widths.size()) - 1));
    return s;
}

// Mirror index without repeating the edge sample; period 2n-2.
int fold_reflect(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n - 2;
    i %= period;
    return i < n ? i : period - i;
}

}  // namespace

Tensor reflect_pad_to_multiple(const Tensor& x, int divisor) {
    check_shape(x.shape().size() == 4, "reflect_pad_to_multiple: want NCHW, got " + x.shape_str());
    check(divisor >= 1, "reflect_pad_to_multiple: divisor must be positive");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Hp = (H + divisor - 1) / divisor * divisor;
    const int Wp = (W + divisor - 1) / divisor * divisor;
    if (Hp == H && Wp == W) return x;
    Tensor out = Tensor::zeros({N, C, Hp, Wp});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < Hp; ++i) {
                const int si = fold_reflect(i, H);
                for (int j = 0; j < Wp; ++j)
                    out.at4(n, c, i, j) = x.at4(n, c, si, fold_reflect(j, W));
            }
    return out;
}

SegmentationResult segment(const ModelBundle& bundle, const Tensor& angiograms, int t_a,
                           real threshold, Rng* noise_rng, SegmentStats* stats) {
    check(angiograms.shape().size() == 4 && angiograms.dim(1) == 1,
          "segment: want a {N,1,H,W} batch, got " + angiograms.shape_str());
    check(threshold >= 0.0 && threshold <= 1.0, "segment: threshold must lie in [0, 1]");
    if (t_a < 0) fail<VsegError>("segment: t_a must be non-negative");
    if (bundle.denoiser) {
        if (t_a > bundle.schedule.T_a)
            fail<VsegError>("segment: t_a " + std::to_string(t_a) +
                            " exceeds the trained perturbation cap T_a=" +
                            std::to_string(bundle.schedule.T_a));
    } else if (t_a != 0) {
        fail<VsegError>("segment: model has no diffusion module, t_a must be 0");
    }
    if (t_a > 0 && noise_rng == nullptr)
        fail<VsegError>("segment: t_a > 0 draws noise and needs an rng");

    const int N = angiograms.dim(0), H = angiograms.dim(2), W = angiograms.dim(3);
    const Tensor xin = reflect_pad_to_multiple(angiograms, model_stride(bundle));

    Var latent;
    int denoiser_calls = 0;
    if (bundle.denoiser) {
        const std::vector<int> t(static_cast<size_t>(N), t_a);
        const Tensor noise =
            t_a > 0 ? Tensor::randn(xin.shape(), *noise_rng) : Tensor::zeros(xin.shape());
        Var xt = leaf(perturb(bundle.schedule, xin, t, noise));
        Var eps = bundle.denoiser->forward(xt, t);
        denoiser_calls = 1;
        latent = concat_ch(xt, eps);
    } else {
        latent = leaf(xin);
    }
    Var out = bundle.gen->forward(latent, nullptr);
    if (stats) {
        stats->denoiser_calls = denoiser_calls;
        stats->generator_calls = 1;
    }

    SegmentationResult r;
    r.t_a = t_a;
    r.threshold = threshold;
    r.soft = Tensor::zeros({N, 1, H, W});
    r.binary = Tensor::zeros({N, 1, H, W});
    for (int n = 0; n < N; ++n)
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j) {
                real s = 0.5 * (out->value.at4(n, 0, i, j) + 1.0);
                s = std::clamp(s, 0.0, 1.0);
                r.soft.at4(n, 0, i, j) = s;
                r.binary.at4(n, 0, i, j) = s >= threshold ? 1.0 : 0.0;
            }
    return r;
}

SegmentFn make_segment_fn(const ModelBundle& bundle, int t_a) {
    auto rng = std::make_shared<Rng>(derive_seed(0x5eedf00dull, static_cast<uint64_t>(t_a)));
    const ModelBundle* bp = &bundle;
    return [bp, t_a, rng](const Tensor& x) {
        return segment(*bp, x, t_a, 0.5, t_a > 0 ? rng.get() : nullptr).soft;
    };
}

SegmentationResult segment_patched(const ModelBundle* bundle, const Tensor& image, real threshold,
                                   const PatchFn& override_fn) {
    check(bundle != nullptr || static_cast<bool>(override_fn),
          "segment_patched: need a model or a patch function");
    check(threshold >= 0.0 && threshold <= 1.0, "segment_patched: threshold must lie in [0, 1]");
    PatchFn fn = override_fn;
    if (!fn) fn = [bundle](const Tensor& p) {
        // patches are flat [H,W]; segment wants an NCHW batch
        Tensor batch = Tensor::zeros({1, 1, p.dim(0), p.dim(1)});
        for (int64_t i = 0; i < p.numel(); ++i) batch[i] = p[i];
        Tensor soft4 = segment(*bundle, batch, 0, 0.5).soft;
        Tensor soft({p.dim(0), p.dim(1)});
        for (int64_t i = 0; i < soft.numel(); ++i) soft[i] = soft4[i];
        return soft;
    };

    std::vector<Tensor> patches = patch_retinal(image);
    std::vector<Tensor> soft_patches;
    soft_patches.reserve(patches.size());
    for (const Tensor& p : patches) {
        Tensor s = fn(p);
        check(s.shape() == p.shape(),
              "segment_patched: patch function changed the shape " + p.shape_str() + " -> " +
                  s.shape_str());
        soft_patches.push_back(std::move(s));
    }

    SegmentationResult r;
    r.t_a = 0;
    r.threshold = threshold;
    r.soft = stitch_patches(soft_patches);
    r.binary = Tensor::zeros(r.soft.shape());
    for (int64_t i = 0; i < r.soft.numel(); ++i) r.binary[i] = r.soft[i] >= threshold ? 1.0 : 0.0;
    return r;
}

}  // namespace vseg
