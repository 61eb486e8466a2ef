#include "vseg/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "vseg/fractal.hpp"
#include "vseg/image.hpp"

namespace fs = std::filesystem;

namespace vseg {

namespace {

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

std::vector<std::string> list_split_dir(const fs::path& dir, bool required) {
    if (!fs::is_directory(dir)) {
        if (required) throw IoError("missing dataset directory " + dir.string());
        return {};
    }
    std::vector<std::string> files;
    const fs::path manifest = dir / "manifest.txt";
    if (fs::exists(manifest)) {
        std::ifstream in(manifest);
        std::string line;
        while (std::getline(in, line)) {
            while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
            if (line.empty()) continue;
            const fs::path p = dir / line;
            if (!fs::exists(p)) throw IoError("manifest entry not found: " + p.string());
            files.push_back(p.string());
        }
    } else {
        for (const auto& e : fs::directory_iterator(dir)) {
            if (e.is_regular_file() && e.path().extension() == ".png")
                files.push_back(e.path().string());
        }
        std::sort(files.begin(), files.end());
    }
    if (required && files.empty()) throw IoError("no images in " + dir.string());
    return files;
}

void pair_with_labels(const std::vector<std::string>& images, const fs::path& label_dir,
                      std::vector<std::string>& labels) {
    labels.clear();
    for (const auto& img : images) {
        const fs::path lbl = label_dir / fs::path(img).filename();
        if (!fs::exists(lbl)) throw IoError("missing label for " + img + ": " + lbl.string());
        labels.push_back(lbl.string());
    }
}

}  // namespace

DatasetLayout discover_layout(const std::string& root, bool need_train, bool need_eval) {
    DatasetLayout d;
    d.root = root;
    const fs::path r(root);
    if (!fs::is_directory(r)) throw IoError("dataset root not found: " + root);
    d.train_angiograms = list_split_dir(r / "train" / "angiograms", need_train);
    d.train_backgrounds = list_split_dir(r / "train" / "backgrounds", need_train);
    d.train_fractals = list_split_dir(r / "train" / "fractals", need_train);
    d.val_angiograms = list_split_dir(r / "val" / "angiograms", false);
    if (!d.val_angiograms.empty())
        pair_with_labels(d.val_angiograms, r / "val" / "labels", d.val_labels);
    d.test_angiograms = list_split_dir(r / "test" / "angiograms", need_eval);
    if (!d.test_angiograms.empty())
        pair_with_labels(d.test_angiograms, r / "test" / "labels", d.test_labels);
    return d;
}

Augment draw_augment(Rng& rng) {
    Augment a;
    a.hflip = rng.uniform() < 0.5;
    a.vflip = rng.uniform() < 0.5;
    a.rot90 = static_cast<int>(rng.uniform_int(0, 3));
    return a;
}

Tensor apply_augment(const Tensor& img, const Augment& a) {
    check_shape(img.ndim() == 2, "apply_augment: expected [H,W]");
    const int H = img.dim(0), W = img.dim(1);
    if (a.rot90 != 0) check_shape(H == W, "apply_augment: rot90 needs a square image");
    Tensor out = img;
    if (a.hflip) {
        Tensor t(out.shape());
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j)
                t[static_cast<int64_t>(i) * W + j] = out[static_cast<int64_t>(i) * W + (W - 1 - j)];
        out = std::move(t);
    }
    if (a.vflip) {
        Tensor t(out.shape());
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j)
                t[static_cast<int64_t>(i) * W + j] = out[static_cast<int64_t>(H - 1 - i) * W + j];
        out = std::move(t);
    }
    for (int k = 0; k < a.rot90; ++k) {
        // one quarter turn clockwise: out(i, j) = in(H-1-j, i)
        Tensor t(out.shape());
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j)
                t[static_cast<int64_t>(i) * W + j] = out[static_cast<int64_t>(H - 1 - j) * W + i];
        out = std::move(t);
    }
    return out;
}

namespace {

Tensor load_as(const std::string& path, int size, bool mask) {
    const GrayImage img = read_png_gray(path);
    if (mask) {
        Tensor t({img.h, img.w});
        for (int64_t i = 0; i < t.numel(); ++i)
            t[i] = img.px[static_cast<size_t>(i)] >= 128 ? 1.0 : 0.0;
        if (img.h == size && img.w == size) return t;
        return resize_nearest(t, size, size);
    }
    Tensor t = normalize_pm1(img);
    if (img.h == size && img.w == size) return t;
    return resize_bilinear(t, size, size);
}

void put_slice(Tensor& batch, int slot, const Tensor& img) {
    const int S = batch.dim(2);
    check_shape(img.dim(0) == S && img.dim(1) == S, "batch slice size mismatch");
    real* dst = batch.data() + static_cast<int64_t>(slot) * S * S;
    for (int64_t i = 0; i < static_cast<int64_t>(S) * S; ++i) dst[i] = img[i];
}

}  // namespace

BatchLoader::BatchLoader(const DatasetLayout& layout, int batch_size, int image_size,
                         uint64_t seed, bool augment)
    : layout_(layout),
      batch_size_(batch_size),
      image_size_(image_size),
      augment_(augment),
      rng_(seed) {
    check(batch_size >= 1, "BatchLoader: batch_size must be positive");
    check(image_size >= 8, "BatchLoader: image_size too small");
    check(!layout_.train_angiograms.empty() && !layout_.train_backgrounds.empty() &&
              !layout_.train_fractals.empty(),
          "BatchLoader: training split is incomplete");
    angio_cache_.resize(layout_.train_angiograms.size());
    bg_cache_.resize(layout_.train_backgrounds.size());
    fractal_cache_.resize(layout_.train_fractals.size());
}

const Tensor& BatchLoader::image_at(std::vector<Tensor>& cache,
                                    const std::vector<std::string>& files, size_t idx,
                                    bool mask) {
    if (cache[idx].empty()) cache[idx] = load_as(files[idx], image_size_, mask);
    return cache[idx];
}

TrainBatch BatchLoader::next() {
    TrainBatch b;
    b.angiograms = Tensor({batch_size_, 1, image_size_, image_size_});
    b.backgrounds = Tensor({batch_size_, 1, image_size_, image_size_});
    b.fractals = Tensor({batch_size_, 1, image_size_, image_size_});
    const auto& an = layout_.train_angiograms;
    const auto& bg = layout_.train_backgrounds;
    const auto& fr = layout_.train_fractals;
    last_angio_.clear();
    last_bg_.clear();
    last_fractal_.clear();
    for (int slot = 0; slot < batch_size_; ++slot) {
        const size_t ai = static_cast<size_t>(rng_.uniform_int(0, static_cast<int64_t>(an.size()) - 1));
        size_t bi = static_cast<size_t>(rng_.uniform_int(0, static_cast<int64_t>(bg.size()) - 1));
        int guard = 0;
        while (stem_of(bg[bi]) == stem_of(an[ai])) {
            if (++guard > 100)
                throw IoError("cannot draw a background independent of " + an[ai]);
            bi = static_cast<size_t>(rng_.uniform_int(0, static_cast<int64_t>(bg.size()) - 1));
        }
        const size_t fi = static_cast<size_t>(rng_.uniform_int(0, static_cast<int64_t>(fr.size()) - 1));
        last_angio_.push_back(ai);
        last_bg_.push_back(bi);
        last_fractal_.push_back(fi);

        Tensor a = image_at(angio_cache_, an, ai, false);
        Tensor g = image_at(bg_cache_, bg, bi, false);
        Tensor f = image_at(fractal_cache_, fr, fi, true);
        if (augment_) {
            a = apply_augment(a, draw_augment(rng_));
            g = apply_augment(g, draw_augment(rng_));
            f = apply_augment(f, draw_augment(rng_));
        }
        put_slice(b.angiograms, slot, a);
        put_slice(b.backgrounds, slot, g);
        put_slice(b.fractals, slot, f);
    }
    return b;
}

TrainBatch load_training_batch(const DatasetLayout& layout, int batch_size, int image_size,
                               Rng& rng) {
    BatchLoader loader(layout, batch_size, image_size, rng.next_u64());
    return loader.next();
}

namespace {

Tensor as_batch_of_one(Tensor plane) {
    const int H = plane.dim(0), W = plane.dim(1);
    Tensor out({1, 1, H, W});
    for (int64_t i = 0; i < plane.numel(); ++i) out[i] = plane[i];
    return out;
}

}  // namespace

Tensor load_image_pm1(const std::string& path, int size) {
    return as_batch_of_one(load_as(path, size, false));
}

Tensor load_mask_binary(const std::string& path, int size) {
    return as_batch_of_one(load_as(path, size, true));
}

std::vector<Tensor> patch_retinal(const Tensor& image) {
    Tensor big = resize_bilinear(image, 768, 768);
    std::vector<Tensor> patches;
    patches.reserve(9);
    for (int pr = 0; pr < 3; ++pr)
        for (int pc = 0; pc < 3; ++pc) {
            Tensor p({256, 256});
            for (int i = 0; i < 256; ++i)
                for (int j = 0; j < 256; ++j)
                    p[static_cast<int64_t>(i) * 256 + j] =
                        big[static_cast<int64_t>(pr * 256 + i) * 768 + (pc * 256 + j)];
            patches.push_back(std::move(p));
        }
    return patches;
}

Tensor stitch_patches(const std::vector<Tensor>& patches) {
    check(patches.size() == 9, "stitch_patches: need exactly 9 patches");
    for (const auto& p : patches)
        check_shape(p.ndim() == 2 && p.dim(0) == 256 && p.dim(1) == 256,
                    "stitch_patches: patches must be 256x256");
    Tensor out({768, 768});
    for (int pr = 0; pr < 3; ++pr)
        for (int pc = 0; pc < 3; ++pc) {
            const Tensor& p = patches[static_cast<size_t>(pr * 3 + pc)];
            for (int i = 0; i < 256; ++i)
                for (int j = 0; j < 256; ++j)
                    out[static_cast<int64_t>(pr * 256 + i) * 768 + (pc * 256 + j)] =
                        p[static_cast<int64_t>(i) * 256 + j];
        }
    return out;
}

Tensor corrupt_gaussian(const Tensor& img_pm1, real sigma, Rng& rng) {
    check(sigma >= 0.0, "corrupt_gaussian: sigma must be nonnegative");
    if (sigma == 0.0) return img_pm1;
    Tensor out(img_pm1.shape());
    for (int64_t i = 0; i < out.numel(); ++i) {
        real px = (img_pm1[i] + 1.0) / 2.0 * 255.0;
        px += sigma * rng.normal();
        px = std::min(255.0, std::max(0.0, px));
        out[i] = px / 255.0 * 2.0 - 1.0;
    }
    return out;
}

namespace {

constexpr int kSmokeSize = 64;

// smooth gradient plus a few soft blobs, on the unit intensity scale
Tensor smoke_background(Rng& rng) {
    Tensor img({kSmokeSize, kSmokeSize});
    const real base = rng.uniform(0.4, 0.6);
    const real gx = rng.uniform(-0.25, 0.25);
    const real gy = rng.uniform(-0.25, 0.25);
    struct Blob {
        real cx, cy, amp, s2;
    };
    std::vector<Blob> blobs;
    const int nb = static_cast<int>(rng.uniform_int(3, 6));
    for (int k = 0; k < nb; ++k)
        blobs.push_back({rng.uniform(0.0, 63.0), rng.uniform(0.0, 63.0),
                         rng.uniform(-0.15, 0.15),
                         std::pow(rng.uniform(5.0, 14.0), 2.0)});
    for (int y = 0; y < kSmokeSize; ++y)
        for (int x = 0; x < kSmokeSize; ++x) {
            real v = base + gx * (x / 63.0 - 0.5) + gy * (y / 63.0 - 0.5);
            for (const Blob& b : blobs) {
                const real d2 = (x - b.cx) * (x - b.cx) + (y - b.cy) * (y - b.cy);
                v += b.amp * std::exp(-d2 / (2.0 * b.s2));
            }
            img[static_cast<int64_t>(y) * kSmokeSize + x] = std::min(0.95, std::max(0.05, v));
        }
    return img;
}

Tensor smoke_mask(uint64_t seed) {
    FractalSpec spec;
    spec.canvas_size = kSmokeSize;
    spec.thickness_lo = 3;
    spec.thickness_hi = 7;
    spec.branch_depth = 3;
    spec.root_length_frac = 0.5;
    spec.seed = seed;
    return synthesize_fractal_mask(spec);
}

GrayImage to_png8(const Tensor& unit) {
    GrayImage img;
    img.h = unit.dim(0);
    img.w = unit.dim(1);
    img.px.resize(static_cast<size_t>(unit.numel()));
    for (int64_t i = 0; i < unit.numel(); ++i)
        img.px[static_cast<size_t>(i)] = static_cast<uint8_t>(
            std::lround(std::min(255.0, std::max(0.0, unit[i] * 255.0))));
    return img;
}

}  // namespace

void make_smoke_corpus(const std::string& dir, uint64_t seed) {
    const fs::path root(dir);
    for (const char* sub :
         {"train/angiograms", "train/backgrounds", "train/fractals", "val/angiograms",
          "val/labels", "test/angiograms", "test/labels"})
        fs::create_directories(root / sub);

    char name[64];
    // training backgrounds and fractal masks; streams are disjoint from the
    // ones used for angiogram construction below
    for (int i = 0; i < 16; ++i) {
        Rng rng(derive_seed(seed, 100 + static_cast<uint64_t>(i)));
        std::snprintf(name, sizeof(name), "bg_%03d.png", i);
        write_png_gray((root / "train/backgrounds" / name).string(),
                       to_png8(smoke_background(rng)));
    }
    for (int i = 0; i < 16; ++i) {
        std::snprintf(name, sizeof(name), "mask_%03d.png", i);
        write_png_gray((root / "train/fractals" / name).string(),
                       to_png8(smoke_mask(derive_seed(seed, 200 + static_cast<uint64_t>(i)))));
    }

    // angiograms: fresh background darkened along a fresh mask; the mask is
    // the ground truth for val/test splits
    auto make_pair = [&](uint64_t stream, const fs::path& img_dir, const fs::path& label_dir,
                         const char* prefix, int index) {
        Rng rng(derive_seed(seed, stream));
        Tensor bg = smoke_background(rng);
        Tensor mask = smoke_mask(derive_seed(seed, stream + 1));
        const real depth = rng.uniform(0.3, 0.4);
        Tensor ang(bg.shape());
        for (int64_t i = 0; i < ang.numel(); ++i)
            ang[i] = std::min(0.95, std::max(0.02, bg[i] - depth * mask[i]));
        std::snprintf(name, sizeof(name), "%s_%03d.png", prefix, index);
        write_png_gray((img_dir / name).string(), to_png8(ang));
        if (!label_dir.empty()) write_png_gray((label_dir / name).string(), to_png8(mask));
    };

    for (int i = 0; i < 16; ++i)
        make_pair(300 + 2 * static_cast<uint64_t>(i), root / "train/angiograms", fs::path(),
                  "ang", i);
    for (int i = 0; i < 4; ++i)
        make_pair(400 + 2 * static_cast<uint64_t>(i), root / "val/angiograms",
                  root / "val/labels", "val", i);
    for (int i = 0; i < 8; ++i)
        make_pair(500 + 2 * static_cast<uint64_t>(i), root / "test/angiograms",
                  root / "test/labels", "test", i);

    std::ofstream readme(root / "README.txt");
    readme << "Synthetic 64x64 smoke dataset.\n"
              "train/angiograms: backgrounds darkened along a fractal mask\n"
              "train/backgrounds, train/fractals: unpaired training pools\n"
              "val|test/angiograms + labels: held-out pairs; the label is the\n"
              "exact mask used to darken the angiogram.\n";
}

}  // namespace vseg
