#pragma once

#include <string>
#include <vector>

#include "vseg/rng.hpp"
#include "vseg/tensor.hpp"

namespace vseg {

// Resolved dataset file lists. Layout on disk:
//   root/train/angiograms/*.png   root/train/backgrounds/*.png
//   root/train/fractals/*.png
//   root/val/angiograms/*.png     root/val/labels/*.png
//   root/test/angiograms/*.png    root/test/labels/*.png
// If a split directory contains manifest.txt, only the files it lists are
// used (one name per line); otherwise the directory is scanned and sorted.
// Validation and test angiograms pair with labels by filename.
struct DatasetLayout {
    std::string root;
    std::vector<std::string> train_angiograms;
    std::vector<std::string> train_backgrounds;
    std::vector<std::string> train_fractals;
    std::vector<std::string> val_angiograms, val_labels;
    std::vector<std::string> test_angiograms, test_labels;
};

// need_train / need_eval select which splits must exist and be nonempty.
DatasetLayout discover_layout(const std::string& root, bool need_train, bool need_eval);

// One shared transform instance, applied identically to every array it is
// given: optional flips then rot90 quarter-turns.
struct Augment {
    bool hflip = false;
    bool vflip = false;
    int rot90 = 0;  // quarter turns, 0..3
};

Augment draw_augment(Rng& rng);
Tensor apply_augment(const Tensor& img, const Augment& a);  // [H,W], square for rot90

struct TrainBatch {
    Tensor angiograms;   // {B,1,S,S} in [-1,1]
    Tensor backgrounds;  // {B,1,S,S} in [-1,1]
    Tensor fractals;     // {B,1,S,S} in {0,1}
};

// Draws each batch slot independently and uniformly from the three training
// pools; a background whose filename matches the angiogram drawn for the same
// slot is redrawn, so a pair from one acquisition never trains together.
// Images resample bilinearly to size x size, masks by nearest neighbor.
// Decoded files are cached. The loader's only mutable state is its RNG, so
// saving the rng state is enough to resume the exact stream.
class BatchLoader {
  public:
    BatchLoader(const DatasetLayout& layout, int batch_size, int image_size, uint64_t seed,
                bool augment = true);

    TrainBatch next();

    Rng& rng() { return rng_; }
    const DatasetLayout& layout() const { return layout_; }
    int batch_size() const { return batch_size_; }
    int image_size() const { return image_size_; }

    // indices drawn by the most recent next(), for sampling diagnostics
    const std::vector<size_t>& last_angio_indices() const { return last_angio_; }
    const std::vector<size_t>& last_background_indices() const { return last_bg_; }
    const std::vector<size_t>& last_fractal_indices() const { return last_fractal_; }

  private:
    const Tensor& image_at(std::vector<Tensor>& cache, const std::vector<std::string>& files,
                           size_t idx, bool mask);

    DatasetLayout layout_;
    int batch_size_, image_size_;
    bool augment_;
    Rng rng_;
    std::vector<Tensor> angio_cache_, bg_cache_, fractal_cache_;
    std::vector<size_t> last_angio_, last_bg_, last_fractal_;
};

// Spec-level convenience: one independently sampled, augmented batch.
TrainBatch load_training_batch(const DatasetLayout& layout, int batch_size, int image_size,
                               Rng& rng);

// Single-file loads for the evaluation path, as {1,1,size,size} tensors.
Tensor load_image_pm1(const std::string& path, int size);
Tensor load_mask_binary(const std::string& path, int size);

// Full-resolution retinal image -> bilinear resize to 768 -> nine
// non-overlapping 256 x 256 tiles, row-major.
std::vector<Tensor> patch_retinal(const Tensor& image);
// Exact inverse of the tiling.
Tensor stitch_patches(const std::vector<Tensor>& patches);

// Additive Gaussian noise on the 0..255 intensity scale, clipped there, then
// mapped back to [-1,1]. sigma=0 is the identity.
Tensor corrupt_gaussian(const Tensor& img_pm1, real sigma, Rng& rng);

// Writes a 64 x 64 synthetic dataset under dir: training backgrounds (smooth
// gradients plus blob clutter), training fractal masks, and angiograms formed
// by darkening fresh backgrounds along fresh masks, with those masks saved as
// val/test labels.
void make_smoke_corpus(const std::string& dir, uint64_t seed);

}  // namespace vseg
