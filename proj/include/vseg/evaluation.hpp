#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vseg/tensor.hpp"

namespace vseg {

// Pixel confusion counts of a binary prediction against a binary reference.
struct Confusion {
    int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

Confusion confusion_counts(const Tensor& pred, const Tensor& gt);

struct Metrics {
    real iou = 0, dice = 0, precision = 0;
};

// IoU = TP/(TP+FP+FN), Dice = 2TP/(2TP+FP+FN), Precision = TP/(TP+FP).
// Degenerate conventions: both masks empty -> all 1; exactly one empty -> all 0.
Metrics metrics_from(const Confusion& c);
Metrics segmentation_metrics(const Tensor& pred, const Tensor& gt);

struct MetricRow {
    std::string id;
    std::string dataset;
    real sigma = 0;
    Metrics m;
};

// Mean and population standard deviation per metric.
struct MetricSummary {
    Metrics mean, sd;
    int count = 0;
};

MetricSummary summarize(const std::vector<MetricRow>& rows);

// Maps a batch of angiograms in [-1,1] to soft masks in [0,1]. The real
// implementation wraps a trained model; tests inject stubs.
using SegmentFn = std::function<Tensor(const Tensor& angiograms)>;

struct EvalOptions {
    real sigma = 0;          // corruption level on the 0..255 scale
    real threshold = 0.5;    // binarization of the soft mask
    int image_size = 64;     // images and labels are resampled to this size
    std::string dataset = "test";
    uint64_t noise_seed = 1234;  // corruption noise stream
};

// Segments every angiogram (after optional corruption) and scores it against
// the paired label. Paths come from a DatasetLayout split.
std::vector<MetricRow> evaluate_split(const SegmentFn& segment,
                                      const std::vector<std::string>& angiogram_paths,
                                      const std::vector<std::string>& label_paths,
                                      const EvalOptions& opt);

// Writes one CSV per dataset (id,dataset,sigma,iou,dice,precision), a summary
// CSV aggregated per (dataset, sigma), and one SVG line plot of each dataset's
// metrics against sigma. Returns the written file paths.
std::vector<std::string> emit_report(const std::vector<MetricRow>& rows,
                                     const std::string& out_dir);

}  // namespace vseg
