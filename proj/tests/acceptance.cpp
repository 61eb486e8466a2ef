// Acceptance gate: ten go/no-go checks over the whole pipeline, one pass/fail
// line each. Every check is seeded, so a passing build passes forever.
//
// The heavyweight check (6) trains the smoke recipe twice, with and without
// the cyclic loss, and takes roughly 25 minutes on one CPU core; checks 9 and
// 10 reuse its artifacts.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "vseg/data.hpp"
#include "vseg/evaluation.hpp"
#include "vseg/fractal.hpp"
#include "vseg/inference.hpp"
#include "vseg/losses.hpp"
#include "vseg/nets.hpp"
#include "vseg/schedule.hpp"
#include "vseg/training.hpp"

namespace fs = std::filesystem;
using namespace vseg;

namespace {

std::string g_ws;

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof(buf), f, ap);
    va_end(ap);
    return buf;
}

real max_abs_diff(const Tensor& a, const Tensor& b) {
    real m = 0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    return std::memcmp(a.data(), b.data(), sizeof(real) * static_cast<size_t>(a.numel())) == 0;
}

Tensor rand_t(std::vector<int> shape, Rng& rng, real sd = 1.0) {
    return Tensor::randn(std::move(shape), rng, sd);
}

Tensor rand_mask01(std::vector<int> shape, Rng& rng, real density = 0.5) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform() < density ? 1.0 : 0.0;
    return t;
}

Tensor to_pm1(const Tensor& mask01) {
    Tensor t = mask01;
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = 2.0 * t[i] - 1.0;
    return t;
}

Tensor clamp_pm1(Tensor t) {
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = std::clamp(t[i], real(-1), real(1));
    return t;
}

std::vector<double> csv_column(const std::string& path, int col) {
    std::ifstream in(path);
    check(in.good(), "cannot open " + path);
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

// ------------------------------------------------------------------------
// 1. forward-diffusion statistics

bool c1_diffusion_stats(std::string& d) {
    const NoiseSchedule s = build_linear_schedule(2000, 1e-6, 1e-2, 200);
    Rng rng(101);
    const int H = 16, W = 16, K = 20000;
    bool ok = true;
    double worst_z = 0, worst_verr = 0;
    for (int t : {1, 200, 2000}) {
        for (real c : {0.7, -0.3}) {
            Tensor x0 = Tensor::full({1, 1, H, W}, c);
            double sum = 0, sum2 = 0;
            for (int k = 0; k < K; ++k) {
                Tensor noise = Tensor::randn({1, 1, H, W}, rng);
                Tensor xt = perturb(s, x0, {t}, noise);
                for (int64_t i = 0; i < xt.numel(); ++i) {
                    sum += xt[i];
                    sum2 += xt[i] * xt[i];
                }
            }
            const double n = double(K) * H * W;
            const double mean = sum / n;
            const double var = sum2 / n - mean * mean;
            const double want_mean = s.sqrt_alpha_bar(t) * c;
            const double want_var = 1.0 - s.alpha_bars[static_cast<size_t>(t)];
            const double z = std::abs(mean - want_mean) / std::sqrt(want_var / n);
            const double verr = std::abs(var - want_var) / want_var;
            worst_z = std::max(worst_z, z);
            worst_verr = std::max(worst_verr, verr);
            if (z > 4.0 || verr > 0.05) ok = false;
        }
    }
    Tensor x0 = rand_t({2, 1, 8, 8}, rng);
    Tensor noise = rand_t({2, 1, 8, 8}, rng);
    const bool identity = bitwise_equal(perturb(s, x0, {0, 0}, noise), x0);
    if (!identity) ok = false;
    d = fmt("worst mean z %.2f (<=4), worst var err %.2f%% (<=5%%), t=0 %s", worst_z,
            100 * worst_verr, identity ? "bitwise identity" : "NOT identity");
    return ok;
}

// ------------------------------------------------------------------------
// 2. S-SPADE exactness

SspadeSite make_site(int C, int hidden, Rng& rng) {
    SspadeSite s;
    s.in_branch.gamma = param(Tensor::randn({C}, rng, 0.3), "g");
    s.in_branch.beta = param(Tensor::randn({C}, rng, 0.3), "b");
    s.in_branch.groups = C;
    auto conv = [&](int in, int out) {
        Conv2dLayer c;
        c.w = param(Tensor::randn({out, in, 3, 3}, rng, 0.2), "w");
        c.b = param(Tensor::randn({out}, rng, 0.2), "bb");
        c.stride = 1;
        c.pad = 1;
        return c;
    };
    s.shared = conv(1, hidden);
    s.gamma_head = conv(hidden, C);
    s.beta_head = conv(hidden, C);
    return s;
}

bool c2_sspade(std::string& d) {
    Rng rng(202);
    double worst = 0;
    for (int it = 0; it < 100; ++it) {
        const int N = 1 + static_cast<int>(rng.uniform_int(0, 2));
        const int C = 1 + static_cast<int>(rng.uniform_int(0, 4));
        const int H = 2 + static_cast<int>(rng.uniform_int(0, 6));
        const int W = 2 + static_cast<int>(rng.uniform_int(0, 6));
        SspadeSite site = make_site(C, 2, rng);
        Tensor x = rand_t({N, C, H, W}, rng);
        int in_runs = 0, spade_runs = 0;
        Var out = site(leaf(x), nullptr, &in_runs, &spade_runs);
        if (in_runs != 1 || spade_runs != 0) {
            d = "mask-absent call took the wrong branch";
            return false;
        }
        Tensor ref({N, C, H, W});
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                double m = 0, m2 = 0;
                for (int i = 0; i < H; ++i)
                    for (int j = 0; j < W; ++j) {
                        m += x.at4(n, c, i, j);
                        m2 += x.at4(n, c, i, j) * x.at4(n, c, i, j);
                    }
                m /= double(H) * W;
                m2 /= double(H) * W;
                const double sd = std::sqrt(m2 - m * m + 1e-5);
                const double g = site.in_branch.gamma->value[c];
                const double b = site.in_branch.beta->value[c];
                for (int i = 0; i < H; ++i)
                    for (int j = 0; j < W; ++j)
                        ref.at4(n, c, i, j) = g * (x.at4(n, c, i, j) - m) / sd + b;
            }
        worst = std::max(worst, max_abs_diff(out->value, ref));
    }

    SspadeSite site = make_site(3, 2, rng);
    site.gamma_head.w->value.fill(0.0);
    site.gamma_head.b->value.fill(1.0);
    site.beta_head.w->value.fill(0.0);
    site.beta_head.b->value.fill(0.0);
    Tensor x = rand_t({2, 3, 6, 6}, rng);
    Tensor mask = rand_mask01({2, 1, 6, 6}, rng);
    int in_runs = 0, spade_runs = 0;
    Var out = site(leaf(x), &mask, &in_runs, &spade_runs);
    const double id_dev = max_abs_diff(out->value, group_standardize(leaf(x), 3, 1e-5)->value);

    d = fmt("worst oracle deviation %.2e (<=1e-6) over 100 tensors, identity modulation %.2e",
            worst, id_dev);
    return worst <= 1e-6 && spade_runs == 1 && in_runs == 0 && id_dev <= 1e-9;
}

// ------------------------------------------------------------------------
// 3. gradients vs central finite differences

// Fraction of sampled coordinates whose analytic gradient matches a central
// finite difference within 1e-3 relative error.
double fd_fraction(const std::vector<Var>& pool, const std::function<Var()>& make_loss,
                   int samples, Rng& rng) {
    Var loss = make_loss();
    for (const auto& p : pool) p->clear_grad();
    backward(loss);

    int64_t total = 0;
    for (const auto& p : pool) total += p->value.numel();
    // Two step sizes per coordinate: the wide one is safe from roundoff but
    // sometimes straddles a relu kink, the narrow one is safe from kinks but
    // loses digits on coordinates with tiny gradients. A wrong analytic
    // gradient disagrees at every step size, so agreement at either counts.
    const real hs[2] = {1e-5, 3e-7};
    int ok = 0;
    for (int s = 0; s < samples; ++s) {
        int64_t g = rng.uniform_int(0, total - 1);
        size_t pi = 0;
        while (g >= pool[pi]->value.numel()) g -= pool[pi++]->value.numel();
        const Var& p = pool[pi];
        const real ana = p->has_grad() ? p->grad[g] : 0.0;
        const real orig = p->value[g];
        real best = 1e9;
        for (real h : hs) {
            p->value[g] = orig + h;
            const real lp = make_loss()->value[0];
            p->value[g] = orig - h;
            const real lm = make_loss()->value[0];
            p->value[g] = orig;
            const real num = (lp - lm) / (2 * h);
            best = std::min(best, std::abs(ana - num) /
                                      std::max({std::abs(ana), std::abs(num), real(1e-6)}));
        }
        if (best <= 1e-3) ++ok;
    }
    return double(ok) / samples;
}

bool c3_gradients(std::string& d) {
    Rng rng(303);
    const NoiseSchedule sched = build_linear_schedule(50, 1e-4, 2e-2, 10);
    DenoiserNet den(DenoiserNet::tiny(31));
    GeneratorNet gen(GeneratorNet::tiny(32));
    DiscriminatorNet ds(DiscriminatorNet::tiny(33));
    DiscriminatorNet da(DiscriminatorNet::tiny(34));

    // Freshly initialized nets hold exact relu kinks (zero biases, symmetric
    // affines), where a central difference measures the average of the two
    // one-sided slopes instead of the derivative. A small jitter moves every
    // pre-activation off those measure-zero points.
    Rng jrng(777);
    for (const auto* net :
         {&den.params(), &gen.params(), &ds.params(), &da.params()})
        for (const auto& p : *net)
            for (int64_t i = 0; i < p->value.numel(); ++i) p->value[i] += 1e-4 * jrng.normal();

    const int S = 32;
    const std::vector<int> t_a{3, 7}, t_b{20, 35}, t_c{2, 9};
    const Tensor x_a = rand_t({2, 1, S, S}, rng, 0.5);
    const Tensor bg = rand_t({2, 1, S, S}, rng, 0.5);
    const Tensor mask01 = rand_mask01({2, 1, S, S}, rng, 0.3);
    const Tensor mask_pm1 = to_pm1(mask01);
    const Tensor fake_seg = rand_t({2, 1, S, S}, rng, 0.5);
    const Tensor fake_ang = rand_t({2, 1, S, S}, rng, 0.5);
    const Tensor xt_a = perturb(sched, x_a, t_a, rand_t({2, 1, S, S}, rng));
    const Tensor xt_b = perturb(sched, bg, t_b, rand_t({2, 1, S, S}, rng));
    const Tensor noise_a = rand_t({2, 1, S, S}, rng);
    const Tensor noise_c = rand_t({2, 1, S, S}, rng);

    std::vector<real> ac, bc;
    for (int t : t_c) {
        ac.push_back(sched.sqrt_alpha_bar(t));
        bc.push_back(sched.sqrt_one_minus_alpha_bar(t));
    }

    auto pool_of = [](std::initializer_list<const std::vector<Var>*> nets) {
        std::vector<Var> pool;
        for (const auto* n : nets) pool.insert(pool.end(), n->begin(), n->end());
        return pool;
    };

    const auto l_diff = [&] { return diffusion_loss(den.forward(leaf(xt_a), t_a), leaf(noise_a)); };
    const auto l_adv_g = [&] {
        Var seg = gen.forward(concat_ch(leaf(xt_a), den.forward(leaf(xt_a), t_a)), nullptr);
        Var fake = gen.forward(concat_ch(leaf(xt_b), den.forward(leaf(xt_b), t_b)), &mask01);
        return adv_loss_generator(ds.forward(seg), da.forward(fake));
    };
    const auto l_adv_ds = [&] {
        return adv_loss_disc(ds.forward(leaf(mask_pm1)), ds.forward(leaf(fake_seg)));
    };
    const auto l_adv_da = [&] {
        return adv_loss_disc(da.forward(leaf(x_a)), da.forward(leaf(fake_ang)));
    };
    const auto recon_of = [&] {
        Var fake = gen.forward(concat_ch(leaf(xt_b), den.forward(leaf(xt_b), t_b)), &mask01);
        Var xt_cyc = scale_add_noise(fake, ac, noise_c, bc);
        return gen.forward(concat_ch(xt_cyc, den.forward(xt_cyc, t_c)), nullptr);
    };
    const auto l_cyc = [&] { return cyclic_loss(recon_of(), leaf(mask_pm1)); };
    const auto l_cyc_ce = [&] {
        return cyclic_loss_ce(scale(add_scalar(recon_of(), 1.0), 0.5), leaf(mask01));
    };

    struct Case {
        const char* name;
        std::vector<Var> pool;
        std::function<Var()> loss;
    };
    std::vector<Case> cases;
    cases.push_back({"diff", den.params(), l_diff});
    cases.push_back({"adv_g", pool_of({&den.params(), &gen.params(), &ds.params(), &da.params()}),
                     l_adv_g});
    cases.push_back({"adv_ds", ds.params(), l_adv_ds});
    cases.push_back({"adv_da", da.params(), l_adv_da});
    cases.push_back({"cyc", pool_of({&den.params(), &gen.params()}), l_cyc});
    cases.push_back({"cyc_ce", pool_of({&den.params(), &gen.params()}), l_cyc_ce});

    bool ok = true;
    std::string parts;
    for (const auto& c : cases) {
        const double frac = fd_fraction(c.pool, c.loss, 200, rng);
        if (frac < 0.95) ok = false;
        parts += fmt("%s %.1f%% ", c.name, 100 * frac);
    }
    d = parts + "(each needs >=95% of 200 coords within 1e-3)";
    return ok;
}

// ------------------------------------------------------------------------
// 4. alternating update isolation + gradient reach

TrainConfig tiny_cfg() {
    TrainConfig cfg;
    cfg.seed = 404;
    cfg.image_size = 32;
    cfg.batch = 1;
    cfg.T = 50;
    cfg.T_a = 10;
    cfg.widths = {4, 4};
    cfg.attn_level = 1;
    cfg.norm_groups = 2;
    cfg.temb_dim = 8;
    cfg.gen_base = 2;
    cfg.spade_hidden = 3;
    cfg.disc_base = 3;
    cfg.lr = 1e-3;
    cfg.data_root = "unused";
    return cfg;
}

std::vector<Tensor> snapshot(const std::vector<Var>& params) {
    std::vector<Tensor> out;
    for (const auto& p : params) out.push_back(p->value);
    return out;
}

bool all_equal(const std::vector<Tensor>& snap, const std::vector<Var>& params) {
    for (size_t i = 0; i < params.size(); ++i)
        if (!bitwise_equal(snap[i], params[i]->value)) return false;
    return true;
}

bool any_grad(const std::vector<Var>& params) {
    for (const auto& p : params)
        if (p->has_grad()) return true;
    return false;
}

void clear_all(const ModelBundle& b) {
    for (const auto& p : b.generator_side_params()) p->clear_grad();
    if (b.disc_s)
        for (const auto& p : b.disc_s->params()) p->clear_grad();
    if (b.disc_a)
        for (const auto& p : b.disc_a->params()) p->clear_grad();
}

bool c4_isolation(std::string& d) {
    const TrainConfig cfg = tiny_cfg();
    ModelBundle bundle = build_models(cfg);
    Rng rng(405);
    TrainBatch batch;
    batch.angiograms = clamp_pm1(rand_t({1, 1, 32, 32}, rng, 0.4));
    batch.backgrounds = clamp_pm1(rand_t({1, 1, 32, 32}, rng, 0.4));
    batch.fractals = rand_mask01({1, 1, 32, 32}, rng, 0.3);

    Adam opt_g(bundle.generator_side_params(), cfg.lr, cfg.adam_beta1, cfg.adam_beta2);
    Adam opt_ds(bundle.disc_s->params(), cfg.lr, cfg.adam_beta1, cfg.adam_beta2);
    Adam opt_da(bundle.disc_a->params(), cfg.lr, cfg.adam_beta1, cfg.adam_beta2);

    const auto ds0 = snapshot(bundle.disc_s->params());
    const auto da0 = snapshot(bundle.disc_a->params());
    const auto gen0 = snapshot(bundle.gen->params());

    GeneratorPass g = generator_pass(bundle, batch, cfg, rng);
    opt_g.zero_grad();
    backward(g.total_g);
    opt_g.step();
    const bool disc_frozen =
        all_equal(ds0, bundle.disc_s->params()) && all_equal(da0, bundle.disc_a->params());
    const bool gen_moved = !all_equal(gen0, bundle.gen->params());

    const auto gen1 = snapshot(bundle.gen->params());
    const auto den1 = snapshot(bundle.denoiser->params());
    DiscriminatorPass dp =
        discriminator_pass(bundle, batch, g.seg_a->value, g.fake_b->value, cfg);
    opt_ds.zero_grad();
    opt_da.zero_grad();
    backward(dp.total_d);
    opt_ds.step();
    opt_da.step();
    const bool gen_frozen = all_equal(gen1, bundle.gen->params()) &&
                            all_equal(den1, bundle.denoiser->params());
    const bool disc_moved = !all_equal(ds0, bundle.disc_s->params());

    // gradient reach, loss by loss; gradients accumulate, so every backward
    // needs a freshly built graph
    auto fresh_pass = [&] {
        clear_all(bundle);
        return generator_pass(bundle, batch, cfg, rng);
    };
    backward(fresh_pass().diff);
    const bool diff_reach = any_grad(bundle.denoiser->params()) &&
                            !any_grad(bundle.gen->params()) &&
                            !any_grad(bundle.disc_s->params());
    backward(fresh_pass().cyc);
    const bool cyc_reach = any_grad(bundle.denoiser->params()) &&
                           any_grad(bundle.gen->params()) && !any_grad(bundle.disc_s->params()) &&
                           !any_grad(bundle.disc_a->params());
    backward(fresh_pass().adv_g);
    const bool advg_reach =
        any_grad(bundle.denoiser->params()) && any_grad(bundle.gen->params());
    GeneratorPass g2 = fresh_pass();
    DiscriminatorPass dp2 =
        discriminator_pass(bundle, batch, g2.seg_a->value, g2.fake_b->value, cfg);
    clear_all(bundle);
    backward(dp2.adv_ds);
    const bool ds_reach = any_grad(bundle.disc_s->params()) &&
                          !any_grad(bundle.gen->params()) &&
                          !any_grad(bundle.denoiser->params()) &&
                          !any_grad(bundle.disc_a->params());

    d = fmt("disc frozen in G-step %d, gen moved %d, gen frozen in D-step %d, disc moved %d; "
            "reach diff %d cyc %d adv_g %d adv_ds %d",
            disc_frozen, gen_moved, gen_frozen, disc_moved, diff_reach, cyc_reach, advg_reach,
            ds_reach);
    return disc_frozen && gen_moved && gen_frozen && disc_moved && diff_reach && cyc_reach &&
           advg_reach && ds_reach;
}

// ------------------------------------------------------------------------
// 5. non-iterative inference

bool c5_one_step(std::string& d) {
    TrainConfig cfg = tiny_cfg();
    cfg.drop_ds = true;
    cfg.drop_da = true;
    const ModelBundle bundle = build_models(cfg);
    Rng rng(505);
    const Tensor x = clamp_pm1(rand_t({2, 1, 32, 32}, rng, 0.4));

    SegmentStats stats;
    const SegmentationResult a = segment(bundle, x, 0, 0.5, nullptr, &stats);
    const SegmentationResult b = segment(bundle, x, 0, 0.5, nullptr, nullptr);
    const bool deterministic = bitwise_equal(a.soft, b.soft) && bitwise_equal(a.binary, b.binary);
    d = fmt("denoiser calls %d (=1), generator calls %d (=1), repeat run %s", stats.denoiser_calls,
            stats.generator_calls, deterministic ? "bitwise identical" : "DIFFERS");
    return stats.denoiser_calls == 1 && stats.generator_calls == 1 && deterministic;
}

// ------------------------------------------------------------------------
// 6. smoke overfit (and 9/10 reuse its artifacts)

struct SmokeOutcome {
    bool ran = false;
    double ma_first = 0, ma_last = 0, dice = 0, dice_no_cyc = 0;
    double train_minutes = 0;
};
SmokeOutcome g_smoke;

double corpus_dice(const ModelBundle& bundle, const std::string& data_root, real sigma,
                   uint64_t noise_seed, int t_a) {
    DatasetLayout lay = discover_layout(data_root, true, true);
    std::vector<std::string> imgs = lay.val_angiograms, gts = lay.val_labels;
    imgs.insert(imgs.end(), lay.test_angiograms.begin(), lay.test_angiograms.end());
    gts.insert(gts.end(), lay.test_labels.begin(), lay.test_labels.end());
    EvalOptions opt;
    opt.image_size = 64;
    opt.sigma = sigma;
    opt.noise_seed = noise_seed;
    opt.dataset = "smoke";
    return summarize(evaluate_split(make_segment_fn(bundle, t_a), imgs, gts, opt)).mean.dice;
}

double train_smoke_once(const std::string& out_dir, bool no_cyclic) {
    TrainConfig cfg = smoke_train_config(g_ws + "/smoke/data", out_dir);
    cfg.no_cyclic = no_cyclic;
    fs::create_directories(out_dir);
    Trainer tr(cfg);
    std::ofstream csv(out_dir + "/train_log.csv");
    tr.run(&csv, nullptr);
    csv.close();
    Trainer best = Trainer::load_checkpoint(out_dir + "/best.ckpt");
    return corpus_dice(best.bundle(), g_ws + "/smoke/data", 0, 1234, 0);
}

bool c6_smoke_overfit(std::string& d) {
    const auto t0 = std::chrono::steady_clock::now();
    make_smoke_corpus(g_ws + "/smoke/data", 7);

    std::printf("     ... training the smoke recipe (1600 steps, ~13 min)\n");
    std::fflush(stdout);
    g_smoke.dice = train_smoke_once(g_ws + "/smoke/full", false);

    const std::vector<double> tg = csv_column(g_ws + "/smoke/full/train_log.csv", 5);
    const size_t w = std::min<size_t>(100, tg.size());
    g_smoke.ma_first = std::accumulate(tg.begin(), tg.begin() + w, 0.0) / w;
    g_smoke.ma_last = std::accumulate(tg.end() - w, tg.end(), 0.0) / w;

    std::printf("     ... training the no_cyclic ablation\n");
    std::fflush(stdout);
    g_smoke.dice_no_cyc = train_smoke_once(g_ws + "/smoke/no_cyc", true);
    g_smoke.ran = true;
    g_smoke.train_minutes =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;

    const bool fall_ok = g_smoke.ma_last <= 0.5 * g_smoke.ma_first;
    const bool dice_ok = g_smoke.dice >= 0.7;
    const bool abl_ok = g_smoke.dice_no_cyc < g_smoke.dice;
    d = fmt("ma100 %.3f -> %.3f (fall %.1f%%, needs >=50%%); corpus dice %.3f (needs >=0.7); "
            "no_cyclic dice %.3f (needs < full); %.1f min",
            g_smoke.ma_first, g_smoke.ma_last, 100 * (1 - g_smoke.ma_last / g_smoke.ma_first),
            g_smoke.dice, g_smoke.dice_no_cyc, g_smoke.train_minutes);
    return fall_ok && dice_ok && abl_ok;
}

// ------------------------------------------------------------------------
// 7. metric oracles

bool c7_metric_oracles(std::string& d) {
    Rng rng(707);
    double worst = 0, worst_id = 0;
    auto check_pair = [&](const Tensor& pred, const Tensor& gt) {
        int64_t tp = 0, fp = 0, fn = 0;
        for (int64_t i = 0; i < pred.numel(); ++i) {
            if (pred[i] == 1.0 && gt[i] == 1.0) ++tp;
            if (pred[i] == 1.0 && gt[i] == 0.0) ++fp;
            if (pred[i] == 0.0 && gt[i] == 1.0) ++fn;
        }
        const bool pred_empty = tp + fp == 0, gt_empty = tp + fn == 0;
        real iou, dice, prec;
        if (pred_empty && gt_empty) {
            iou = dice = prec = 1.0;
        } else if (pred_empty || gt_empty) {
            iou = dice = prec = 0.0;
        } else {
            iou = real(tp) / real(tp + fp + fn);
            dice = 2.0 * real(tp) / real(2 * tp + fp + fn);
            prec = real(tp) / real(tp + fp);
        }

        const Metrics m = segmentation_metrics(pred, gt);
        worst = std::max({worst, std::abs(m.iou - iou), std::abs(m.dice - dice),
                          std::abs(m.precision - prec)});
        worst_id = std::max(worst_id,
                            std::abs(m.dice - 2.0 * m.iou / (1.0 + m.iou)));
    };

    for (int it = 0; it < 1000; ++it) {
        const real dens_p = rng.uniform(), dens_g = rng.uniform();
        check_pair(rand_mask01({16, 16}, rng, dens_p), rand_mask01({16, 16}, rng, dens_g));
    }
    check_pair(Tensor::zeros({16, 16}), Tensor::zeros({16, 16}));
    check_pair(Tensor::zeros({16, 16}), Tensor::full({16, 16}, 1.0));
    check_pair(Tensor::full({16, 16}, 1.0), Tensor::zeros({16, 16}));

    d = fmt("worst oracle gap %.2e (exact), worst dice/iou identity gap %.2e (<=1e-9)", worst,
            worst_id);
    return worst == 0.0 && worst_id <= 1e-9;
}

// ------------------------------------------------------------------------
// 8. fractal contract

bool c8_fractal(std::string& d) {
    real lo = 1e9, hi = -1e9;
    for (int s = 0; s < 100; ++s) {
        FractalSpec spec;
        spec.seed = 1000 + static_cast<uint64_t>(s);
        Tensor m = synthesize_fractal_mask(spec);
        bool binary = true, any = false;
        for (int64_t i = 0; i < m.numel(); ++i) {
            if (m[i] != 0.0 && m[i] != 1.0) binary = false;
            if (m[i] == 1.0) any = true;
        }
        if (!binary || !any) {
            d = fmt("seed %llu: mask %s", (unsigned long long)spec.seed,
                    binary ? "is empty" : "is not binary");
            return false;
        }
        if (!bitwise_equal(m, synthesize_fractal_mask(spec))) {
            d = fmt("seed %llu: resynthesis differs", (unsigned long long)spec.seed);
            return false;
        }
        Rng tree_rng(derive_seed(spec.seed, 0));
        for (const Stroke& st : build_stroke_tree(spec, tree_rng)) {
            lo = std::min(lo, st.thick);
            hi = std::max(hi, st.thick);
        }
    }
    d = fmt("100 masks binary and reproducible; stroke widths span [%.0f, %.0f] px (within "
            "[15,25])",
            lo, hi);
    return lo >= 15.0 && hi <= 25.0;
}

// ------------------------------------------------------------------------
// 9. robustness plumbing

bool c9_robustness(std::string& d) {
    if (!fs::exists(g_ws + "/smoke/full/best.ckpt")) {
        d = "smoke checkpoint unavailable (criterion 6 did not produce one)";
        return false;
    }
    Trainer best = Trainer::load_checkpoint(g_ws + "/smoke/full/best.ckpt");
    std::string curve;
    double prev = 2.0;
    bool mono = true;
    for (real sigma : {0.0, 10.0, 25.0, 50.0}) {
        const double dice = corpus_dice(best.bundle(), g_ws + "/smoke/data", sigma, 4242, 0);
        curve += fmt("%g:%.3f ", sigma, dice);
        if (dice > prev) mono = false;
        prev = dice;
    }
    d = "dice by sigma " + curve + (mono ? "(monotone non-increasing)" : "(NOT monotone)");
    return mono;
}

// ------------------------------------------------------------------------
// 10. checkpoint round-trip

bool reports_equal(const LossReport& a, const LossReport& b) {
    return a.step == b.step && a.epoch == b.epoch && a.diff == b.diff && a.adv_g == b.adv_g &&
           a.cyc == b.cyc && a.total_g == b.total_g && a.adv_ds == b.adv_ds &&
           a.adv_da == b.adv_da && a.total_d == b.total_d &&
           a.diff_present == b.diff_present && a.adv_g_present == b.adv_g_present &&
           a.cyc_present == b.cyc_present && a.ds_present == b.ds_present &&
           a.da_present == b.da_present;
}

bool c10_roundtrip(std::string& d) {
    if (!fs::exists(g_ws + "/smoke/data/train/angiograms"))
        make_smoke_corpus(g_ws + "/smoke/data", 7);
    TrainConfig cfg = tiny_cfg();
    cfg.data_root = g_ws + "/smoke/data";
    cfg.out = g_ws + "/roundtrip";
    cfg.batch = 2;
    cfg.seed = 1010;

    Trainer tr(cfg);
    tr.step();
    tr.step();
    fs::create_directories(cfg.out);
    tr.save_checkpoint(cfg.out + "/state.ckpt");
    Trainer back = Trainer::load_checkpoint(cfg.out + "/state.ckpt");

    const LossReport a = tr.step();
    const LossReport b = back.step();
    const bool equal = reports_equal(a, b);
    d = fmt("next step after resume: total_g %.12f vs %.12f, total_d %.12f vs %.12f (%s)",
            a.total_g, b.total_g, a.total_d, b.total_d, equal ? "exact" : "DIFFER");
    return equal;
}

}  // namespace

int main() {
    g_ws = (fs::temp_directory_path() / "vseg_acceptance").string();
    fs::remove_all(g_ws);
    fs::create_directories(g_ws);

    struct Entry {
        int id;
        const char* name;
        bool (*fn)(std::string&);
    };
    const std::vector<Entry> entries = {
        {1, "forward-diffusion statistics", c1_diffusion_stats},
        {2, "switchable normalization exactness", c2_sspade},
        {3, "analytic gradients vs finite differences", c3_gradients},
        {4, "alternating update isolation and gradient reach", c4_isolation},
        {5, "one-step inference determinism", c5_one_step},
        {6, "smoke overfit: loss fall, corpus dice, cyclic ablation", c6_smoke_overfit},
        {7, "segmentation metric oracles", c7_metric_oracles},
        {8, "fractal mask contract", c8_fractal},
        {9, "noise robustness sweep", c9_robustness},
        {10, "checkpoint round-trip exactness", c10_roundtrip},
    };

    int passed = 0;
    for (const auto& e : entries) {
        const auto t0 = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = false;
        try {
            ok = e.fn(detail);
        } catch (const std::exception& ex) {
            detail = std::string("exception: ") + ex.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%2d] %-55s %s  (%.1fs)\n", e.id, e.name, ok ? "PASS" : "FAIL", secs);
        if (!detail.empty()) std::printf("     %s\n", detail.c_str());
        std::fflush(stdout);
        if (ok) ++passed;
    }
    std::printf("acceptance: %d/10 criteria passed\n", passed);
    return passed == 10 ? 0 : 1;
}
