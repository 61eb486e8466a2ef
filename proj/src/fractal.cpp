#include "vseg/fractal.hpp"

#include <cmath>

namespace vseg {

namespace {

constexpr real kPi = 3.14159265358979323846;

void validate(const FractalSpec& spec) {
    check(spec.canvas_size >= 8, "fractal: canvas too small");
    check(spec.thickness_lo <= spec.thickness_hi, "fractal: empty thickness range");
    check(spec.thickness_lo >= 1 && spec.thickness_hi <= spec.canvas_size / 4,
          "fractal: thickness range must lie in [1, canvas/4]");
    check(spec.branch_depth >= 1, "fractal: branch_depth must be >= 1");
    check(spec.branches_lo >= 1 && spec.branches_lo <= spec.branches_hi,
          "fractal: bad branches range");
    check(spec.scale_lo > 0.0 && spec.scale_lo <= spec.scale_hi, "fractal: bad scale range");
    check(spec.length_decay > 0.0 && spec.length_decay <= 1.0, "fractal: bad length decay");
}

}  // namespace

std::vector<Stroke> build_stroke_tree(const FractalSpec& spec, Rng& rng) {
    validate(spec);
    const real cs = static_cast<real>(spec.canvas_size);

    struct Pending {
        real x, y, dir, len;
        int depth;
    };
    std::vector<Pending> queue;

    // root: a border point, pointing inward
    const int side = static_cast<int>(rng.uniform_int(0, 3));
    const real along = rng.uniform(0.2, 0.8) * cs;
    real x0, y0, inward;
    switch (side) {
        case 0: x0 = along, y0 = 0.0, inward = kPi / 2.0; break;       // top, pointing down
        case 1: x0 = along, y0 = cs - 1.0, inward = -kPi / 2.0; break;  // bottom, pointing up
        case 2: x0 = 0.0, y0 = along, inward = 0.0; break;              // left, pointing right
        default: x0 = cs - 1.0, y0 = along, inward = kPi; break;        // right, pointing left
    }
    const real dir0 = inward + rng.uniform(-kPi / 6.0, kPi / 6.0);
    queue.push_back({x0, y0, dir0, spec.root_length_frac * cs, 1});

    // longest prefix of the segment that keeps the endpoint inside the canvas,
    // so branches never wander out and rasterize disconnected islands on
    // re-entry
    auto clip_len = [cs](real x, real y, real dir, real len) {
        real L = len;
        auto limit = [&L](real p, real d, real hi) {
            if (d > 1e-12)
                L = std::min(L, (hi - p) / d);
            else if (d < -1e-12)
                L = std::min(L, (1.0 - p) / d);
        };
        limit(x, std::cos(dir), cs - 2.0);
        limit(y, std::sin(dir), cs - 2.0);
        return std::max(L, 0.0);
    };

    std::vector<Stroke> strokes;
    while (!queue.empty()) {
        const Pending node = queue.front();
        queue.erase(queue.begin());

        const real thick = static_cast<real>(
            rng.uniform_int(spec.thickness_lo, spec.thickness_hi));
        const real len = clip_len(node.x, node.y, node.dir, node.len);
        const real ex = node.x + len * std::cos(node.dir);
        const real ey = node.y + len * std::sin(node.dir);
        strokes.push_back({(node.x + ex) / 2.0, (node.y + ey) / 2.0, node.dir, len, thick});

        if (node.depth >= spec.branch_depth) continue;
        const int kids = static_cast<int>(rng.uniform_int(spec.branches_lo, spec.branches_hi));
        for (int c = 0; c < kids; ++c) {
            const real mag =
                rng.uniform(spec.rotation_lo_deg, spec.rotation_hi_deg) * kPi / 180.0;
            const real sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
            queue.push_back(
                {ex, ey, node.dir + sign * mag, node.len * spec.length_decay, node.depth + 1});
        }
    }
    return strokes;
}

void rasterize_stroke(Tensor& mask, const Stroke& s) {
    const int H = mask.dim(0), W = mask.dim(1);
    const real c = std::cos(s.angle), sn = std::sin(s.angle);
    const real hl = s.len / 2.0, ht = s.thick / 2.0;
    // the stroke's bounding box, padded a pixel
    const real reach = hl * std::max(std::fabs(c), std::fabs(sn)) +
                       ht * std::max(std::fabs(sn), std::fabs(c)) + 1.0;
    const int xlo = std::max(0, static_cast<int>(std::floor(s.cx - reach)));
    const int xhi = std::min(W - 1, static_cast<int>(std::ceil(s.cx + reach)));
    const int ylo = std::max(0, static_cast<int>(std::floor(s.cy - reach)));
    const int yhi = std::min(H - 1, static_cast<int>(std::ceil(s.cy + reach)));
    for (int y = ylo; y <= yhi; ++y) {
        for (int x = xlo; x <= xhi; ++x) {
            const real dx = static_cast<real>(x) - s.cx;
            const real dy = static_cast<real>(y) - s.cy;
            const real u = dx * c + dy * sn;
            const real v = -dx * sn + dy * c;
            if (u >= -hl && u < hl && v >= -ht && v < ht)
                mask[static_cast<int64_t>(y) * W + x] = 1.0;
        }
    }
}

Tensor rasterize_strokes(int canvas_size, const std::vector<Stroke>& strokes) {
    Tensor mask = Tensor::zeros({canvas_size, canvas_size});
    for (const Stroke& s : strokes) rasterize_stroke(mask, s);
    return mask;
}

Stroke distort_stroke(const Stroke& s, const FractalSpec& spec, Rng& rng) {
    Stroke d = s;
    const real sc = rng.uniform(spec.scale_lo, spec.scale_hi);
    d.len *= sc;
    d.thick *= sc;
    d.angle += rng.uniform(-1.0, 1.0) * spec.distort_rotation_deg * kPi / 180.0;
    return d;
}

Tensor synthesize_fractal_mask(const FractalSpec& spec) {
    validate(spec);
    Rng tree_rng(derive_seed(spec.seed, 0));
    const std::vector<Stroke> tree = build_stroke_tree(spec, tree_rng);
    Tensor mask = Tensor::zeros({spec.canvas_size, spec.canvas_size});
    for (size_t i = 0; i < tree.size(); ++i) {
        Rng d_rng(derive_seed(spec.seed, 0x10000ull + i));
        rasterize_stroke(mask, distort_stroke(tree[i], spec, d_rng));
    }
    check(mask.sum() > 0.0, "fractal: synthesized an empty mask");
    return mask;
}

Tensor resize_mask(const Tensor& mask, int target) {
    check(target >= 8, "resize_mask: target too small");
    check_shape(mask.ndim() == 2, "resize_mask: expected [H,W]");
    const int H = mask.dim(0), W = mask.dim(1);
    Tensor out({target, target});
    for (int i = 0; i < target; ++i) {
        const int si = std::min(
            H - 1, static_cast<int>((static_cast<real>(i) + 0.5) * H / target));
        for (int j = 0; j < target; ++j) {
            const int sj = std::min(
                W - 1, static_cast<int>((static_cast<real>(j) + 0.5) * W / target));
            out[static_cast<int64_t>(i) * target + j] = mask[static_cast<int64_t>(si) * W + sj];
        }
    }
    return out;
}

}  // namespace vseg
