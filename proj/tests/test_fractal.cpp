#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <queue>

#include "oracles.hpp"
#include "vseg/fractal.hpp"

using namespace vseg;

namespace {

bool is_binary(const Tensor& m) {
    for (int64_t i = 0; i < m.numel(); ++i)
        if (m[i] != 0.0 && m[i] != 1.0) return false;
    return true;
}

int count_components_4conn(const Tensor& m) {
    const int H = m.dim(0), W = m.dim(1);
    std::vector<char> seen(static_cast<size_t>(H) * W, 0);
    int comps = 0;
    for (int sy = 0; sy < H; ++sy)
        for (int sx = 0; sx < W; ++sx) {
            if (m[static_cast<int64_t>(sy) * W + sx] == 0.0 ||
                seen[static_cast<size_t>(sy) * W + sx])
                continue;
            ++comps;
            std::queue<std::pair<int, int>> q;
            q.push({sy, sx});
            seen[static_cast<size_t>(sy) * W + sx] = 1;
            while (!q.empty()) {
                auto [y, x] = q.front();
                q.pop();
                const int dy[4] = {1, -1, 0, 0}, dx[4] = {0, 0, 1, -1};
                for (int d = 0; d < 4; ++d) {
                    const int ny = y + dy[d], nx = x + dx[d];
                    if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
                    if (m[static_cast<int64_t>(ny) * W + nx] == 0.0) continue;
                    if (seen[static_cast<size_t>(ny) * W + nx]) continue;
                    seen[static_cast<size_t>(ny) * W + nx] = 1;
                    q.push({ny, nx});
                }
            }
        }
    return comps;
}

// diameter of the largest disc of foreground pixels, by brute-force nearest
// background distance
real max_inscribed_diameter(const Tensor& m) {
    const int H = m.dim(0), W = m.dim(1);
    std::vector<std::pair<int, int>> bg;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            if (m[static_cast<int64_t>(y) * W + x] == 0.0) bg.push_back({y, x});
    real best = 0.0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            if (m[static_cast<int64_t>(y) * W + x] == 0.0) continue;
            real nearest = 1e30;
            for (auto [by, bx] : bg) {
                const real d2 = static_cast<real>((by - y)) * (by - y) +
                                static_cast<real>((bx - x)) * (bx - x);
                if (d2 < nearest) nearest = d2;
            }
            best = std::max(best, std::sqrt(nearest));
        }
    return 2.0 * best;
}

}  // namespace

TEST_CASE("stroke thickness sampling stays in the spec range") {
    for (uint64_t seed : {0ull, 7ull, 123ull, 99999ull}) {
        FractalSpec spec;
        spec.seed = seed;
        Rng rng(derive_seed(seed, 0));
        auto tree = build_stroke_tree(spec, rng);
        CHECK(tree.size() >= 1);
        for (const Stroke& s : tree) {
            CHECK(s.thick >= 15.0);
            CHECK(s.thick <= 25.0);
        }
    }
}

TEST_CASE("horizontal stroke of integer thickness covers exactly that many rows") {
    for (int k = 15; k <= 25; ++k) {
        Tensor m = Tensor::zeros({64, 200});
        Stroke s{100.0, 32.3, 0.0, 160.0, static_cast<real>(k)};
        rasterize_stroke(m, s);
        // count covered rows at several columns through the stroke interior
        for (int x : {40, 100, 150}) {
            int rows = 0;
            for (int y = 0; y < 64; ++y)
                if (m[static_cast<int64_t>(y) * 200 + x] == 1.0) ++rows;
            CHECK(rows == k);
        }
    }
}

TEST_CASE("isolated tree strokes measure their sampled width on the raster") {
    FractalSpec spec;
    spec.seed = 11;
    Rng rng(derive_seed(spec.seed, 0));
    auto tree = build_stroke_tree(spec, rng);
    int checked = 0;
    for (const Stroke& s : tree) {
        if (s.len < 2.0 * s.thick) continue;  // need an interior for the disc measure
        // rasterize alone, recentered on a private canvas
        Stroke local = s;
        local.cx = 64.0;
        local.cy = 64.0;
        Tensor m = Tensor::zeros({128, 128});
        rasterize_stroke(m, local);
        const real d = max_inscribed_diameter(m);
        CHECK(d >= s.thick - 1.6);
        CHECK(d <= s.thick + 1.6);
        CHECK(d >= 15.0 - 1.6);
        CHECK(d <= 25.0 + 1.6);
        if (++checked == 6) break;  // the disc oracle is quadratic, keep it cheap
    }
    CHECK(checked > 0);
}

TEST_CASE("same seed reproduces the identical mask") {
    FractalSpec spec;
    spec.seed = 42;
    Tensor a = synthesize_fractal_mask(spec);
    Tensor b = synthesize_fractal_mask(spec);
    CHECK(oracle::max_abs_diff(a, b) == 0.0);
    spec.seed = 43;
    Tensor c = synthesize_fractal_mask(spec);
    CHECK(oracle::max_abs_diff(a, c) > 0.0);
}

TEST_CASE("masks are binary with nonempty foreground") {
    for (uint64_t seed = 0; seed < 8; ++seed) {
        FractalSpec spec;
        spec.seed = seed;
        Tensor m = synthesize_fractal_mask(spec);
        CHECK(m.shape() == std::vector<int>{512, 512});
        CHECK(is_binary(m));
        CHECK(m.sum() > 0.0);
    }
}

TEST_CASE("undistorted stroke tree rasterizes to one connected component") {
    for (uint64_t seed = 0; seed < 6; ++seed) {
        FractalSpec spec;
        spec.seed = seed;
        Rng rng(derive_seed(seed, 0));
        auto tree = build_stroke_tree(spec, rng);
        Tensor m = rasterize_strokes(spec.canvas_size, tree);
        CHECK(count_components_4conn(m) == 1);
    }
}

TEST_CASE("foreground fraction stays inside the pinned regression band") {
    // measured over seeds 0..99 at authoring time: mean 0.105, sd 0.033,
    // extremes [0.022, 0.179]
    real mean = 0.0;
    const int n = 25;
    for (uint64_t seed = 0; seed < n; ++seed) {
        FractalSpec spec;
        spec.seed = seed;
        Tensor m = synthesize_fractal_mask(spec);
        const real frac = m.sum() / static_cast<real>(m.numel());
        CHECK(frac > 0.01);
        CHECK(frac < 0.25);
        mean += frac;
    }
    mean /= static_cast<real>(n);
    CHECK(mean > 0.07);
    CHECK(mean < 0.14);
}

TEST_CASE("spec validation rejects degenerate settings") {
    FractalSpec bad;
    bad.thickness_lo = 26;
    bad.thickness_hi = 25;
    CHECK_THROWS(synthesize_fractal_mask(bad));
    FractalSpec fat;
    fat.thickness_lo = 15;
    fat.thickness_hi = 200;  // > canvas/4
    CHECK_THROWS(synthesize_fractal_mask(fat));
    FractalSpec flat;
    flat.branch_depth = 0;
    CHECK_THROWS(synthesize_fractal_mask(flat));
}

TEST_CASE("resize_mask identity and all-ones cases") {
    FractalSpec spec;
    spec.seed = 3;
    Tensor m = synthesize_fractal_mask(spec);
    Tensor same = resize_mask(m, 512);
    CHECK(oracle::max_abs_diff(m, same) == 0.0);

    Tensor ones = Tensor::full({512, 512}, 1.0);
    Tensor half = resize_mask(ones, 256);
    CHECK(half.shape() == std::vector<int>{256, 256});
    for (int64_t i = 0; i < half.numel(); ++i) CHECK(half[i] == 1.0);
}

TEST_CASE("resize_mask follows the nearest neighbor index map") {
    FractalSpec spec;
    spec.seed = 9;
    Tensor m = synthesize_fractal_mask(spec);
    Tensor out = resize_mask(m, 256);
    CHECK(is_binary(out));
    for (int i = 0; i < 256; ++i)
        for (int j = 0; j < 256; ++j) {
            const int si = static_cast<int>((i + 0.5) * 512.0 / 256.0);
            const int sj = static_cast<int>((j + 0.5) * 512.0 / 256.0);
            CHECK(out[static_cast<int64_t>(i) * 256 + j] ==
                  m[static_cast<int64_t>(si) * 512 + sj]);
        }
    CHECK_THROWS(resize_mask(m, 4));
}
