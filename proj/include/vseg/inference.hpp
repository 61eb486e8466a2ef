#pragma once

#include "vseg/training.hpp"

namespace vseg {

struct SegmentationResult {
    Tensor soft;    // [0,1], same shape as the input batch
    Tensor binary;  // {0,1}, soft >= threshold
    int t_a = 0;
    real threshold = 0.5;
};

// Forward-call counters, for asserting the one-step contract.
struct SegmentStats {
    int denoiser_calls = 0;
    int generator_calls = 0;
};

// One-step segmentation: perturb to t_a (t_a=0 adds no noise and needs no
// rng), one denoiser call, one generator call without a mask, remap the
// output to [0,1], threshold. Inputs whose sides are not divisible by the
// model stride are reflect-padded out and cropped back.
SegmentationResult segment(const ModelBundle& bundle, const Tensor& angiograms, int t_a = 0,
                           real threshold = 0.5, Rng* noise_rng = nullptr,
                           SegmentStats* stats = nullptr);

// Wraps a bundle as the evaluation-facing soft-mask function.
SegmentFn make_segment_fn(const ModelBundle& bundle, int t_a = 0);

// Per-patch soft-mask function for retinal stitching: [256,256] in and out.
// The default wraps segment().
using PatchFn = std::function<Tensor(const Tensor& patch)>;

// Resize a flat [H,W] image to 768, segment nine 256-pixel tiles, stitch them
// back; soft and binary come out as [768,768].
SegmentationResult segment_patched(const ModelBundle* bundle, const Tensor& image,
                                   real threshold = 0.5, const PatchFn& override_fn = {});

// Reflect-pad an {N,1,H,W} batch on the bottom/right to the next multiples of
// `divisor`; exposed for tests.
Tensor reflect_pad_to_multiple(const Tensor& x, int divisor);

}  // namespace vseg
