#include "vseg/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "vseg/data.hpp"

namespace fs = std::filesystem;

namespace vseg {

namespace {

void check_binary(const Tensor& t, const char* who) {
    for (int64_t i = 0; i < t.numel(); ++i)
        check(t[i] == 0.0 || t[i] == 1.0,
              std::string(who) + ": expected a binary mask, found " + std::to_string(t[i]));
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

std::string fmt(real v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

}  // namespace

Confusion confusion_counts(const Tensor& pred, const Tensor& gt) {
    check_shape(pred.shape() == gt.shape(), "confusion_counts: shape mismatch " +
                                                pred.shape_str() + " vs " + gt.shape_str());
    check_binary(pred, "confusion_counts(pred)");
    check_binary(gt, "confusion_counts(gt)");
    Confusion c;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        const bool p = pred[i] > 0.5, g = gt[i] > 0.5;
        if (p && g)
            ++c.tp;
        else if (p && !g)
            ++c.fp;
        else if (!p && g)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

Metrics metrics_from(const Confusion& c) {
    Metrics m;
    const int64_t pred_fg = c.tp + c.fp, gt_fg = c.tp + c.fn;
    if (pred_fg == 0 && gt_fg == 0) {
        m.iou = m.dice = m.precision = 1.0;
        return m;
    }
    if (pred_fg == 0 || gt_fg == 0) {
        m.iou = m.dice = m.precision = 0.0;
        return m;
    }
    m.iou = static_cast<real>(c.tp) / static_cast<real>(c.tp + c.fp + c.fn);
    m.dice = 2.0 * static_cast<real>(c.tp) / static_cast<real>(2 * c.tp + c.fp + c.fn);
    m.precision = static_cast<real>(c.tp) / static_cast<real>(pred_fg);
    return m;
}

Metrics segmentation_metrics(const Tensor& pred, const Tensor& gt) {
    return metrics_from(confusion_counts(pred, gt));
}

MetricSummary summarize(const std::vector<MetricRow>& rows) {
    check(!rows.empty(), "summarize: no rows");
    MetricSummary s;
    s.count = static_cast<int>(rows.size());
    for (const auto& r : rows) {
        s.mean.iou += r.m.iou;
        s.mean.dice += r.m.dice;
        s.mean.precision += r.m.precision;
    }
    const real n = static_cast<real>(s.count);
    s.mean.iou /= n;
    s.mean.dice /= n;
    s.mean.precision /= n;
    for (const auto& r : rows) {
        s.sd.iou += (r.m.iou - s.mean.iou) * (r.m.iou - s.mean.iou);
        s.sd.dice += (r.m.dice - s.mean.dice) * (r.m.dice - s.mean.dice);
        s.sd.precision += (r.m.precision - s.mean.precision) * (r.m.precision - s.mean.precision);
    }
    s.sd.iou = std::sqrt(s.sd.iou / n);
    s.sd.dice = std::sqrt(s.sd.dice / n);
    s.sd.precision = std::sqrt(s.sd.precision / n);
    return s;
}

std::vector<MetricRow> evaluate_split(const SegmentFn& segment,
                                      const std::vector<std::string>& angiogram_paths,
                                      const std::vector<std::string>& label_paths,
                                      const EvalOptions& opt) {
    check(static_cast<bool>(segment), "evaluate_split: no segmentation function");
    check(!angiogram_paths.empty(), "evaluate_split: empty split");
    check(angiogram_paths.size() == label_paths.size(),
          "evaluate_split: angiogram/label count mismatch");
    check(opt.sigma >= 0.0, "evaluate_split: negative sigma");

    std::vector<MetricRow> rows;
    rows.reserve(angiogram_paths.size());
    for (size_t i = 0; i < angiogram_paths.size(); ++i) {
        Tensor x = load_image_pm1(angiogram_paths[i], opt.image_size);
        if (opt.sigma > 0.0) {
            Rng noise(derive_seed(opt.noise_seed, static_cast<uint64_t>(i)));
            x = corrupt_gaussian(x, opt.sigma, noise);
        }
        Tensor soft = segment(x);
        check_shape(soft.shape() == x.shape(),
                    "evaluate_split: segmentation shape " + soft.shape_str() +
                        " does not match input " + x.shape_str());
        Tensor pred(soft.shape());
        for (int64_t j = 0; j < soft.numel(); ++j)
            pred[j] = soft[j] >= opt.threshold ? 1.0 : 0.0;
        Tensor gt = load_mask_binary(label_paths[i], opt.image_size);

        MetricRow r;
        r.id = stem_of(angiogram_paths[i]);
        r.dataset = opt.dataset;
        r.sigma = opt.sigma;
        r.m = segmentation_metrics(pred, gt);
        rows.push_back(std::move(r));
    }
    return rows;
}

namespace {

// Minimal line chart: one polyline per metric over the sigma axis.
std::string render_sigma_plot(const std::string& dataset,
                              const std::map<real, MetricSummary>& by_sigma) {
    const int W = 640, H = 400, ml = 60, mr = 20, mt = 30, mb = 50;
    const real plot_w = W - ml - mr, plot_h = H - mt - mb;
    real smin = by_sigma.begin()->first, smax = by_sigma.rbegin()->first;
    if (smax == smin) smax = smin + 1.0;
    auto X = [&](real s) { return ml + (s - smin) / (smax - smin) * plot_w; };
    auto Y = [&](real v) { return mt + (1.0 - v) * plot_h; };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    svg << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    svg << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
        << dataset << ": metrics vs corruption sigma</text>\n";
    for (int g = 0; g <= 4; ++g) {
        const real v = g / 4.0;
        svg << "<line x1=\"" << ml << "\" y1=\"" << Y(v) << "\" x2=\"" << W - mr << "\" y2=\""
            << Y(v) << "\" stroke=\"#ddd\"/>\n";
        svg << "<text x=\"" << ml - 8 << "\" y=\"" << Y(v) + 4
            << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(v) << "</text>\n";
    }
    const char* names[3] = {"iou", "dice", "precision"};
    const char* colors[3] = {"#d62728", "#1f77b4", "#2ca02c"};
    for (int k = 0; k < 3; ++k) {
        std::ostringstream pts;
        for (const auto& [s, sum] : by_sigma) {
            const real v = k == 0 ? sum.mean.iou : k == 1 ? sum.mean.dice : sum.mean.precision;
            pts << X(s) << "," << Y(v) << " ";
        }
        svg << "<polyline points=\"" << pts.str() << "\" fill=\"none\" stroke=\"" << colors[k]
            << "\" stroke-width=\"2\"/>\n";
        for (const auto& [s, sum] : by_sigma) {
            const real v = k == 0 ? sum.mean.iou : k == 1 ? sum.mean.dice : sum.mean.precision;
            svg << "<circle class=\"pt-" << names[k] << "\" cx=\"" << X(s) << "\" cy=\"" << Y(v)
                << "\" r=\"4\" fill=\"" << colors[k] << "\"/>\n";
        }
        svg << "<text x=\"" << ml + 10 + k * 90 << "\" y=\"" << H - 12
            << "\" font-size=\"12\" fill=\"" << colors[k] << "\">" << names[k] << "</text>\n";
    }
    for (const auto& [s, sum] : by_sigma) {
        svg << "<text x=\"" << X(s) << "\" y=\"" << H - mb + 18
            << "\" text-anchor=\"middle\" font-size=\"11\">" << fmt(s) << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

void write_file(const std::string& path, const std::string& content,
                std::vector<std::string>& written) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("emit_report: cannot write " + path);
    out << content;
    if (!out) throw IoError("emit_report: short write to " + path);
    written.push_back(path);
}

}  // namespace

std::vector<std::string> emit_report(const std::vector<MetricRow>& rows,
                                     const std::string& out_dir) {
    check(!rows.empty(), "emit_report: no rows");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("emit_report: cannot create " + out_dir + ": " + ec.message());

    std::map<std::string, std::vector<MetricRow>> by_dataset;
    for (const auto& r : rows) by_dataset[r.dataset].push_back(r);

    std::vector<std::string> written;
    std::ostringstream summary;
    summary << "dataset,sigma,n,iou_mean,iou_sd,dice_mean,dice_sd,precision_mean,precision_sd\n";

    for (const auto& [ds, ds_rows] : by_dataset) {
        std::ostringstream csv;
        csv << "id,dataset,sigma,iou,dice,precision\n";
        for (const auto& r : ds_rows)
            csv << r.id << ',' << r.dataset << ',' << fmt(r.sigma) << ',' << fmt(r.m.iou) << ','
                << fmt(r.m.dice) << ',' << fmt(r.m.precision) << '\n';
        write_file((fs::path(out_dir) / (ds + ".csv")).string(), csv.str(), written);

        std::map<real, std::vector<MetricRow>> by_sigma_rows;
        for (const auto& r : ds_rows) by_sigma_rows[r.sigma].push_back(r);
        std::map<real, MetricSummary> by_sigma;
        for (const auto& [s, rs] : by_sigma_rows) {
            MetricSummary sum = summarize(rs);
            by_sigma[s] = sum;
            summary << ds << ',' << fmt(s) << ',' << sum.count << ',' << fmt(sum.mean.iou) << ','
                    << fmt(sum.sd.iou) << ',' << fmt(sum.mean.dice) << ',' << fmt(sum.sd.dice)
                    << ',' << fmt(sum.mean.precision) << ',' << fmt(sum.sd.precision) << '\n';
        }
        write_file((fs::path(out_dir) / (ds + "_robustness.svg")).string(),
                   render_sigma_plot(ds, by_sigma), written);
    }
    write_file((fs::path(out_dir) / "summary.csv").string(), summary.str(), written);
    return written;
}

}  // namespace vseg
