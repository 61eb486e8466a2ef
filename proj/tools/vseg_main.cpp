// Single entry point: corpus synthesis, training, inference, evaluation,
// robustness sweeps, and the end-to-end smoke self-test.
//
// Exit codes: 0 success, 1 runtime failure, 2 argument/config error. Every
// failure also prints one JSON line on stderr so scripts can parse it.
//
// Config precedence, lowest to highest: built-in defaults, --config file,
// VSEG_* environment (VSEG_TRAIN__LR=1e-4 sets train.lr), --set overrides,
// then the dedicated flags (--seed, --out, ...). Unknown keys are an error.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "vseg/config.hpp"
#include "vseg/data.hpp"
#include "vseg/evaluation.hpp"
#include "vseg/fractal.hpp"
#include "vseg/image.hpp"
#include "vseg/inference.hpp"
#include "vseg/training.hpp"

namespace fs = std::filesystem;
using namespace vseg;

namespace {

struct GlobalArgs {
    std::string config_file;
    std::vector<std::string> sets;
    int64_t seed = -1;
    std::string out;
};

void add_common(CLI::App* cmd, GlobalArgs& g) {
    cmd->add_option("--config", g.config_file, "config file with dotted keys")
        ->check(CLI::ExistingFile);
    cmd->add_option("--set", g.sets, "config override KEY=VALUE (repeatable)");
    cmd->add_option("--seed", g.seed, "root random seed")->check(CLI::NonNegativeNumber);
    cmd->add_option("--out", g.out, "output directory");
}

Config resolve(const GlobalArgs& g) {
    Config c;
    if (!g.config_file.empty()) c.load_file(g.config_file);
    c.apply_env("VSEG_");
    for (const auto& kv : g.sets) c.apply_override(kv);
    if (g.seed >= 0) c.apply_override("seed=" + std::to_string(g.seed));
    if (!g.out.empty()) c.apply_override("out=" + g.out);
    return c;
}

std::string need_out(const Config& c, const char* cmd) {
    std::string out = c.get_string("out", "");
    if (out.empty()) fail<ConfigError>(std::string(cmd) + ": an output directory is required (--out)");
    return out;
}

void error_line(const std::string& cmd, const std::string& kind, const std::string& msg) {
    nlohmann::json j{{"error", kind}, {"command", cmd}, {"message", msg}};
    std::cerr << j.dump() << "\n";
}

template <typename F>
int guarded(const char* cmd, F&& f) {
    try {
        return f();
    } catch (const ConfigError& e) {
        error_line(cmd, "ConfigError", e.what());
        return 2;
    } catch (const CheckpointError& e) {
        error_line(cmd, "CheckpointError", e.what());
        return 1;
    } catch (const IoError& e) {
        error_line(cmd, "IoError", e.what());
        return 1;
    } catch (const ShapeError& e) {
        error_line(cmd, "ShapeError", e.what());
        return 1;
    } catch (const std::exception& e) {
        error_line(cmd, "RuntimeError", e.what());
        return 1;
    }
}

// [H,W] values in [0,1] -> 8-bit PNG
void save_unit_png(const std::string& path, const Tensor& t) {
    check_shape(t.ndim() == 2, "save_unit_png: want [H,W], got " + t.shape_str());
    GrayImage img;
    img.h = t.dim(0);
    img.w = t.dim(1);
    img.px.resize(static_cast<size_t>(t.numel()));
    for (int64_t i = 0; i < t.numel(); ++i) {
        real v = std::clamp(t[i], real(0), real(1));
        img.px[static_cast<size_t>(i)] = static_cast<uint8_t>(std::lround(v * 255.0));
    }
    write_png_gray(path, img);
}

// {1,1,H,W} -> [H,W]
Tensor chw_slice(const Tensor& t) {
    Tensor out({t.dim(2), t.dim(3)});
    std::copy(t.data(), t.data() + out.numel(), out.data());
    return out;
}

std::vector<double> csv_column(const std::string& path, int col) {
    std::ifstream in(path);
    if (!in) fail<IoError>("cannot open " + path);
    std::string line;
    std::getline(in, line);
    std::vector<double> vals;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        for (int i = 0; i <= col; ++i) std::getline(ss, cell, ',');
        vals.push_back(std::stod(cell));
    }
    return vals;
}

std::vector<std::string> png_files(const std::string& dir) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".png") files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    return files;
}

// ---------------------------------------------------------------- fractal

struct FractalArgs {
    int count = 0;
};

int cmd_fractal(const GlobalArgs& g, const FractalArgs& a) {
    Config c = resolve(g);
    const auto seed = static_cast<uint64_t>(c.get_int64("seed", 0));
    const std::string out = need_out(c, "fractal");
    FractalSpec spec;
    spec.canvas_size = c.get_int("fractal.canvas_size", spec.canvas_size);
    spec.thickness_lo = c.get_int("fractal.thickness_lo", spec.thickness_lo);
    spec.thickness_hi = c.get_int("fractal.thickness_hi", spec.thickness_hi);
    spec.branch_depth = c.get_int("fractal.branch_depth", spec.branch_depth);
    spec.branches_lo = c.get_int("fractal.branches_lo", spec.branches_lo);
    spec.branches_hi = c.get_int("fractal.branches_hi", spec.branches_hi);
    spec.rotation_lo_deg = c.get_real("fractal.rotation_lo_deg", spec.rotation_lo_deg);
    spec.rotation_hi_deg = c.get_real("fractal.rotation_hi_deg", spec.rotation_hi_deg);
    spec.scale_lo = c.get_real("fractal.scale_lo", spec.scale_lo);
    spec.scale_hi = c.get_real("fractal.scale_hi", spec.scale_hi);
    spec.distort_rotation_deg = c.get_real("fractal.distort_rotation_deg", spec.distort_rotation_deg);
    spec.length_decay = c.get_real("fractal.length_decay", spec.length_decay);
    spec.root_length_frac = c.get_real("fractal.root_length_frac", spec.root_length_frac);
    const int out_size = c.get_int("fractal.out_size", 0);
    c.require_all_consumed();

    fs::create_directories(out);
    for (int i = 0; i < a.count; ++i) {
        spec.seed = derive_seed(seed, static_cast<uint64_t>(i));
        Tensor m = synthesize_fractal_mask(spec);
        if (out_size > 0 && out_size != spec.canvas_size) m = resize_mask(m, out_size);
        char name[32];
        std::snprintf(name, sizeof(name), "fractal_%06d.png", i);
        save_unit_png(out + "/" + name, m);
    }
    std::printf("fractal: wrote %d masks under %s\n", a.count, out.c_str());
    return 0;
}

// ------------------------------------------------------------------ train

struct TrainArgs {
    std::string resume;
    int steps = 0;
};

int cmd_train(const GlobalArgs& g, const TrainArgs& a) {
    if (!a.resume.empty()) {
        Trainer tr = Trainer::load_checkpoint(a.resume);
        if (a.steps > 0) tr.set_run_budget(0, a.steps);
        const std::string out = tr.config().out;
        fs::create_directories(out);
        std::ofstream csv(out + "/train_log.csv", std::ios::app);
        if (!csv) fail<IoError>("train: cannot open " + out + "/train_log.csv");
        std::printf("train: resuming %s at step %d\n", a.resume.c_str(), tr.global_step());
        tr.run(&csv, &std::cout);
        std::printf("train: finished at step %d; best validation %.4f\n", tr.global_step(),
                    tr.best_val());
        return 0;
    }
    Config c = resolve(g);
    TrainConfig cfg = TrainConfig::from_config(c);
    c.require_all_consumed();
    if (a.steps > 0) cfg.max_steps = a.steps;
    Trainer tr(cfg);
    std::printf("train: %lld parameters, writing to %s\n",
                static_cast<long long>(tr.bundle().param_count()), cfg.out.c_str());
    fs::create_directories(cfg.out);
    std::ofstream csv(cfg.out + "/train_log.csv");
    if (!csv) fail<IoError>("train: cannot open " + cfg.out + "/train_log.csv");
    tr.run(&csv, &std::cout);
    std::printf("train: finished at step %d; best validation %.4f\n", tr.global_step(),
                tr.best_val());
    return 0;
}

// ---------------------------------------------------------------- segment

struct SegmentArgs {
    std::string ckpt, in_dir;
    real threshold = -1;
    int t_a = -1;
    bool patched = false;
};

int cmd_segment(const GlobalArgs& g, const SegmentArgs& a) {
    Config c = resolve(g);
    const auto seed = static_cast<uint64_t>(c.get_int64("seed", 0));
    const std::string out = need_out(c, "segment");
    c.require_all_consumed();

    Trainer tr = Trainer::load_checkpoint(a.ckpt);
    const real thr = a.threshold >= 0 ? a.threshold : tr.config().threshold;
    const int t_a = a.t_a >= 0 ? a.t_a : tr.config().t_a;
    if (a.patched && t_a > 0)
        fail<ConfigError>("segment: --patched runs the noise-free path, so --t-a must be 0");

    std::vector<std::string> files = png_files(a.in_dir);
    if (files.empty()) fail<IoError>("segment: no .png images under " + a.in_dir);
    fs::create_directories(out);

    Rng rng(derive_seed(seed, 31));
    for (const auto& f : files) {
        Tensor img = normalize_pm1(read_png_gray(f));
        SegmentationResult r;
        if (a.patched) {
            r = segment_patched(&tr.bundle(), img, thr);
        } else {
            Tensor x({1, 1, img.dim(0), img.dim(1)});
            std::copy(img.data(), img.data() + img.numel(), x.data());
            r = segment(tr.bundle(), x, t_a, thr, t_a > 0 ? &rng : nullptr);
            r.soft = chw_slice(r.soft);
            r.binary = chw_slice(r.binary);
        }
        const std::string stem = fs::path(f).stem().string();
        save_unit_png(out + "/" + stem + "_soft.png", r.soft);
        save_unit_png(out + "/" + stem + "_mask.png", r.binary);
    }
    std::printf("segment: wrote %zu mask pairs under %s\n", files.size(), out.c_str());
    return 0;
}

// ------------------------------------------------------- eval / robustness

struct EvalArgs {
    std::string ckpt, data, split = "test", dataset;
    real sigma = 0;
    real threshold = -1;
    int t_a = -1;
    int image_size = 0;
};

int run_eval(const GlobalArgs& g, const EvalArgs& a, const std::vector<real>& sigmas,
             const char* cmd) {
    Config c = resolve(g);
    const auto seed = static_cast<uint64_t>(c.get_int64("seed", 0));
    const std::string out = need_out(c, cmd);
    c.require_all_consumed();
    if (a.split != "test" && a.split != "val")
        fail<ConfigError>(std::string(cmd) + ": --split must be test or val");

    Trainer tr = Trainer::load_checkpoint(a.ckpt);
    EvalOptions opt;
    opt.threshold = a.threshold >= 0 ? a.threshold : tr.config().threshold;
    opt.image_size = a.image_size > 0 ? a.image_size : tr.config().image_size;
    opt.dataset = !a.dataset.empty() ? a.dataset : fs::path(a.data).filename().string();
    if (opt.dataset.empty()) opt.dataset = "data";
    const int t_a = a.t_a >= 0 ? a.t_a : tr.config().t_a;

    DatasetLayout lay = discover_layout(a.data, false, true);
    const auto& imgs = a.split == "val" ? lay.val_angiograms : lay.test_angiograms;
    const auto& gts = a.split == "val" ? lay.val_labels : lay.test_labels;

    SegmentFn fn = make_segment_fn(tr.bundle(), t_a);
    std::vector<MetricRow> rows;
    for (real s : sigmas) {
        opt.sigma = s;
        opt.noise_seed = derive_seed(seed, 100 + static_cast<uint64_t>(s));
        std::vector<MetricRow> part = evaluate_split(fn, imgs, gts, opt);
        MetricSummary sum = summarize(part);
        std::printf("%s %s sigma %g over %d images: iou %.4f dice %.4f precision %.4f\n",
                    opt.dataset.c_str(), a.split.c_str(), static_cast<double>(s), sum.count,
                    sum.mean.iou, sum.mean.dice, sum.mean.precision);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    for (const auto& f : emit_report(rows, out)) std::printf("wrote %s\n", f.c_str());
    return 0;
}

// ------------------------------------------------------------------ smoke

struct SmokeArgs {
    int steps = -1;
};

int cmd_smoke(const GlobalArgs& g, const SmokeArgs& a) {
    Config c = resolve(g);
    const std::string out = c.get_string("out", "smoke_run");
    TrainConfig cfg = smoke_train_config(out + "/data", out + "/run");
    if (c.has("seed")) cfg.seed = static_cast<uint64_t>(c.get_int64("seed", 1));
    c.require_all_consumed();
    if (a.steps >= 0) cfg.max_steps = a.steps;

    make_smoke_corpus(out + "/data", 7);
    std::printf("smoke: corpus under %s\n", (out + "/data").c_str());

    const bool trained = cfg.max_steps > 0;
    Trainer tr(cfg);
    double ma_first = 0, ma_last = 0;
    if (trained) {
        fs::create_directories(cfg.out);
        std::ofstream csv(cfg.out + "/train_log.csv");
        const auto t0 = std::chrono::steady_clock::now();
        tr.run(&csv, &std::cout);
        csv.close();
        const double mins =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
        const std::vector<double> tg = csv_column(cfg.out + "/train_log.csv", 5);
        const size_t w = std::min<size_t>(100, tg.size());
        ma_first = std::accumulate(tg.begin(), tg.begin() + w, 0.0) / w;
        ma_last = std::accumulate(tg.end() - w, tg.end(), 0.0) / w;
        std::printf("smoke: trained %zu steps in %.1f min\n", tg.size(), mins);
    } else {
        std::printf("smoke: training skipped (--steps 0), scoring the random init\n");
    }

    std::optional<Trainer> best;
    if (trained) best.emplace(Trainer::load_checkpoint(cfg.out + "/best.ckpt"));
    const ModelBundle& bundle = best ? best->bundle() : tr.bundle();

    DatasetLayout lay = discover_layout(out + "/data", true, true);
    std::vector<std::string> imgs = lay.val_angiograms, gts = lay.val_labels;
    imgs.insert(imgs.end(), lay.test_angiograms.begin(), lay.test_angiograms.end());
    gts.insert(gts.end(), lay.test_labels.begin(), lay.test_labels.end());

    EvalOptions opt;
    opt.image_size = cfg.image_size;
    opt.threshold = cfg.threshold;
    opt.dataset = "smoke";
    std::vector<MetricRow> rows = evaluate_split(make_segment_fn(bundle, cfg.t_a), imgs, gts, opt);
    const double dice = summarize(rows).mean.dice;
    emit_report(rows, out + "/report");

    fs::create_directories(out + "/masks");
    for (const auto& f : lay.test_angiograms) {
        Tensor img = load_image_pm1(f, cfg.image_size);
        SegmentationResult r = segment(bundle, img, cfg.t_a, cfg.threshold);
        const std::string stem = fs::path(f).stem().string();
        save_unit_png(out + "/masks/" + stem + "_soft.png", chw_slice(r.soft));
        save_unit_png(out + "/masks/" + stem + "_mask.png", chw_slice(r.binary));
    }

    const bool pass_ma = trained && ma_last <= 0.5 * ma_first;
    const bool pass_dice = dice >= 0.7;
    if (trained)
        std::printf("smoke: loss ma100 %.4f -> %.4f (fall %.1f%%)  [%s] (needs >= 50%%)\n",
                    ma_first, ma_last, 100.0 * (1.0 - ma_last / ma_first),
                    pass_ma ? "PASS" : "FAIL");
    else
        std::printf("smoke: loss fall not measured, training skipped  [FAIL]\n");
    std::printf("smoke: corpus dice %.4f over %zu images  [%s] (needs >= 0.7)\n", dice,
                rows.size(), pass_dice ? "PASS" : "FAIL");
    const bool ok = pass_ma && pass_dice;
    std::printf("smoke: %s\n", ok ? "PASS" : "FAIL");
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vessel segmentation via diffusion-adversarial self-supervision"};
    app.require_subcommand(1);

    GlobalArgs g_fr, g_tr, g_se, g_ev, g_ro, g_sm;

    auto* fr = app.add_subcommand("fractal", "synthesize branching binary masks");
    FractalArgs fa;
    fr->add_option("--count", fa.count, "number of masks to write")
        ->required()
        ->check(CLI::Range(1, 1 << 30));
    add_common(fr, g_fr);

    auto* tn = app.add_subcommand("train", "train a model from a config");
    TrainArgs ta;
    tn->add_option("--resume", ta.resume, "checkpoint to resume from")->check(CLI::ExistingFile);
    tn->add_option("--steps", ta.steps, "override the step budget")
        ->check(CLI::NonNegativeNumber);
    add_common(tn, g_tr);

    auto* se = app.add_subcommand("segment", "segment a directory of PNG images");
    SegmentArgs sa;
    se->add_option("--ckpt", sa.ckpt, "model checkpoint")->required()->check(CLI::ExistingFile);
    se->add_option("--in", sa.in_dir, "input image directory")
        ->required()
        ->check(CLI::ExistingDirectory);
    se->add_option("--threshold", sa.threshold, "binarization threshold")
        ->check(CLI::Range(0.0, 1.0));
    se->add_option("--t-a", sa.t_a, "perturbation step before segmenting")
        ->check(CLI::NonNegativeNumber);
    se->add_flag("--patched", sa.patched, "resize to 768 and segment nine 256-pixel tiles");
    add_common(se, g_se);

    auto* ev = app.add_subcommand("eval", "score a checkpoint against a labeled split");
    EvalArgs ea;
    ev->add_option("--ckpt", ea.ckpt, "model checkpoint")->required()->check(CLI::ExistingFile);
    ev->add_option("--data", ea.data, "dataset root")->required()->check(CLI::ExistingDirectory);
    ev->add_option("--sigma", ea.sigma, "gaussian corruption level, 0..255 scale")
        ->check(CLI::Range(0.0, 255.0));
    ev->add_option("--split", ea.split, "split to score: test or val");
    ev->add_option("--dataset", ea.dataset, "dataset name in the report");
    ev->add_option("--threshold", ea.threshold, "binarization threshold")
        ->check(CLI::Range(0.0, 1.0));
    ev->add_option("--t-a", ea.t_a, "perturbation step")->check(CLI::NonNegativeNumber);
    ev->add_option("--image-size", ea.image_size, "evaluation resolution")
        ->check(CLI::PositiveNumber);
    add_common(ev, g_ev);

    auto* ro = app.add_subcommand("robustness", "eval across sigma 0/10/25/50");
    EvalArgs ra;
    ro->add_option("--ckpt", ra.ckpt, "model checkpoint")->required()->check(CLI::ExistingFile);
    ro->add_option("--data", ra.data, "dataset root")->required()->check(CLI::ExistingDirectory);
    ro->add_option("--split", ra.split, "split to score: test or val");
    ro->add_option("--dataset", ra.dataset, "dataset name in the report");
    ro->add_option("--threshold", ra.threshold, "binarization threshold")
        ->check(CLI::Range(0.0, 1.0));
    ro->add_option("--t-a", ra.t_a, "perturbation step")->check(CLI::NonNegativeNumber);
    ro->add_option("--image-size", ra.image_size, "evaluation resolution")
        ->check(CLI::PositiveNumber);
    add_common(ro, g_ro);

    auto* sm = app.add_subcommand("smoke", "end-to-end self-test on a synthetic corpus");
    SmokeArgs sma;
    sm->add_option("--steps", sma.steps, "training steps (0 skips training)")
        ->check(CLI::NonNegativeNumber);
    add_common(sm, g_sm);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        if (rc == 0) return 0;
        error_line("usage", "UsageError", e.what());
        return 2;
    }

    if (fr->parsed()) return guarded("fractal", [&] { return cmd_fractal(g_fr, fa); });
    if (tn->parsed()) return guarded("train", [&] { return cmd_train(g_tr, ta); });
    if (se->parsed()) return guarded("segment", [&] { return cmd_segment(g_se, sa); });
    if (ev->parsed()) return guarded("eval", [&] { return run_eval(g_ev, ea, {ea.sigma}, "eval"); });
    if (ro->parsed())
        return guarded("robustness", [&] { return run_eval(g_ro, ra, {0, 10, 25, 50}, "robustness"); });
    if (sm->parsed()) return guarded("smoke", [&] { return cmd_smoke(g_sm, sma); });
    return 2;
}
