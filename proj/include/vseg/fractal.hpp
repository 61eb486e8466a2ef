#pragma once

#include <vector>

#include "vseg/rng.hpp"
#include "vseg/tensor.hpp"

namespace vseg {

// Settings for the branching-tree mask generator. The strokes are rectangles;
// each node of the tree spawns children rotated away from the parent
// direction, with geometrically decaying length. Every constant here is
// config-exposed.
struct FractalSpec {
    int canvas_size = 512;
    int thickness_lo = 15;  // pixels, closed interval, sampled per stroke
    int thickness_hi = 25;
    int branch_depth = 4;  // generations including the root stroke
    int branches_lo = 2;   // children per non-terminal node
    int branches_hi = 3;
    real rotation_lo_deg = 20.0;  // per-child deflection magnitude
    real rotation_hi_deg = 70.0;
    real scale_lo = 0.8;  // per-rectangle distortion scale
    real scale_hi = 1.2;
    real distort_rotation_deg = 15.0;  // per-rectangle distortion rotation bound
    real length_decay = 0.7;
    real root_length_frac = 0.4;  // root stroke length as a canvas fraction
    uint64_t seed = 0;
};

// A thick line segment, kept in center/angle form so distortion is a local
// transform.
struct Stroke {
    real cx, cy;
    real angle;  // radians
    real len;
    real thick;
};

// The undistorted stroke tree. Child strokes start where the parent ends, so
// the union of their rasters is one connected component.
std::vector<Stroke> build_stroke_tree(const FractalSpec& spec, Rng& rng);

// Covers pixel centers whose stroke-frame coordinates satisfy
// -len/2 <= u < len/2 and -thick/2 <= v < thick/2. The half-open rule makes an
// axis-aligned stroke of integer thickness k cover exactly k rows.
void rasterize_stroke(Tensor& mask, const Stroke& s);

// {0,1}-valued [H,W] raster of a stroke set.
Tensor rasterize_strokes(int canvas_size, const std::vector<Stroke>& strokes);

// Random scale of length and thickness plus a random rotation, both about the
// stroke's own center.
Stroke distort_stroke(const Stroke& s, const FractalSpec& spec, Rng& rng);

// Full pipeline: tree, per-rectangle distortion, binary raster.
// Streams: the tree is drawn from derive_seed(seed, 0); the distortion of
// rectangle i from derive_seed(seed, 0x10000 + i). Fixed seed gives an
// identical mask on every platform.
Tensor synthesize_fractal_mask(const FractalSpec& spec);

// Nearest-neighbor resample to target x target; source index is
// floor((i + 0.5) * size / target). Output stays binary.
Tensor resize_mask(const Tensor& mask, int target);

}  // namespace vseg
