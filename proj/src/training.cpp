#include "vseg/training.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <utility>

#include "json.hpp"
#include "vseg/inference.hpp"
#include "vseg/ops.hpp"

namespace vseg {

namespace {

using nlohmann::json;

// Differentiable forward perturbation: y = sqrt(abar_t)*x + sqrt(1-abar_t)*eps
// per batch element. t = 0 keeps x bitwise (coefficients 1 and 0).
Var perturb_var(const NoiseSchedule& s, const Var& x, const std::vector<int>& t,
                const Tensor& noise) {
    std::vector<real> a(t.size()), b(t.size());
    for (size_t i = 0; i < t.size(); ++i) {
        a[i] = s.sqrt_alpha_bar(t[i]);
        b[i] = s.sqrt_one_minus_alpha_bar(t[i]);
    }
    return scale_add_noise(x, a, noise, b);
}

Tensor to_pm1(const Tensor& mask01) {
    Tensor out = Tensor::zeros(mask01.shape());
    for (int64_t i = 0; i < mask01.numel(); ++i) out[i] = 2.0 * mask01[i] - 1.0;
    return out;
}

Var zero_scalar() { return leaf(Tensor::zeros({1})); }

void check_batch(const TrainBatch& batch) {
    check(batch.angiograms.shape().size() == 4 && batch.angiograms.dim(1) == 1,
          "train batch: angiograms must be {B,1,H,W}");
    check(batch.backgrounds.shape() == batch.angiograms.shape(),
          "train batch: backgrounds shape mismatch");
    check(batch.fractals.shape() == batch.angiograms.shape(),
          "train batch: fractals shape mismatch");
}

}  // namespace

// ---- config ----

TrainConfig TrainConfig::from_config(const Config& c) {
    TrainConfig t;
    t.seed = static_cast<uint64_t>(c.get_int64("seed", static_cast<int64_t>(t.seed)));
    t.out = c.get_string("out", t.out);

    t.data_root = c.get_string("data.root", t.data_root);
    t.image_size = c.get_int("data.image_size", t.image_size);
    t.batch = c.get_int("data.batch", t.batch);
    t.augment = c.get_bool("data.augment", t.augment);

    t.T = c.get_int("schedule.T", t.T);
    t.T_a = c.get_int("schedule.T_a", t.T_a);
    t.beta_start = c.get_real("schedule.beta_start", t.beta_start);
    t.beta_end = c.get_real("schedule.beta_end", t.beta_end);

    t.widths = c.get_int_list("model.widths", t.widths);
    t.attn_level = c.get_int("model.attn_level", t.attn_level);
    t.norm_groups = c.get_int("model.norm_groups", t.norm_groups);
    t.temb_dim = c.get_int("model.temb_dim", t.temb_dim);
    t.gen_base = c.get_int("model.gen_base", t.gen_base);
    t.spade_hidden = c.get_int("model.spade_hidden", t.spade_hidden);
    t.disc_base = c.get_int("model.disc_base", t.disc_base);

    t.lr = c.get_real("train.lr", t.lr);
    t.adam_beta1 = c.get_real("train.beta1", t.adam_beta1);
    t.adam_beta2 = c.get_real("train.beta2", t.adam_beta2);
    t.weights.alpha = c.get_real("train.alpha", t.weights.alpha);
    t.weights.beta = c.get_real("train.beta", t.weights.beta);
    t.epochs = c.get_int("train.epochs", t.epochs);
    t.max_steps = c.get_int("train.max_steps", t.max_steps);
    t.val_metric = c.get_string("train.val_metric", t.val_metric);

    t.reentry_t = c.get_int("cycle.reentry_t", t.reentry_t);

    t.no_diffusion_module = c.get_bool("ablation.no_diffusion_module", t.no_diffusion_module);
    t.no_sspade = c.get_bool("ablation.no_sspade", t.no_sspade);
    t.no_cyclic = c.get_bool("ablation.no_cyclic", t.no_cyclic);
    t.ce_for_l1 = c.get_bool("ablation.ce_for_l1", t.ce_for_l1);
    t.drop_ds = c.get_bool("ablation.drop_ds", t.drop_ds);
    t.drop_da = c.get_bool("ablation.drop_da", t.drop_da);
    t.autoencoder_latent = c.get_bool("ablation.autoencoder_latent", t.autoencoder_latent);
    t.no_background_inputs = c.get_bool("ablation.no_background_inputs", t.no_background_inputs);

    t.threshold = c.get_real("inference.threshold", t.threshold);
    t.t_a = c.get_int("inference.t_a", t.t_a);
    return t;
}

void TrainConfig::validate() const {
    auto bad = [](const std::string& m) { fail<ConfigError>("config: " + m); };
    if (image_size < 8) bad("data.image_size must be at least 8");
    if (batch < 1) bad("data.batch must be at least 1");
    if (T < 1) bad("schedule.T must be positive");
    if (T_a < 0 || T_a > T) bad("schedule.T_a must lie in [0, T]");
    if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end)
        bad("schedule betas must satisfy 0 < beta_start <= beta_end < 1");
    if (widths.empty()) bad("model.widths must not be empty");
    for (int w : widths)
        if (w < 1) bad("model.widths entries must be positive");
    if (widths[0] % 2 != 0) bad("model.widths[0] must be even (timestep embedding width)");
    if (attn_level < 0 || attn_level >= static_cast<int>(widths.size()))
        bad("model.attn_level out of range");
    if (norm_groups < 1) bad("model.norm_groups must be positive");
    if (temb_dim < 2 || temb_dim % 2 != 0) bad("model.temb_dim must be even and at least 2");
    if (gen_base < 1 || spade_hidden < 1 || disc_base < 1)
        bad("model widths must be positive");
    if (!(lr > 0.0)) bad("train.lr must be positive");
    if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0)
        bad("adam betas must lie in [0, 1)");
    if (!(weights.alpha >= 0.0) || !(weights.beta >= 0.0))
        bad("loss weights must be non-negative");
    if (epochs < 1) bad("train.epochs must be at least 1");
    if (max_steps < 0) bad("train.max_steps must be non-negative");
    if (reentry_t < -1 || reentry_t > T_a) bad("cycle.reentry_t must be -1 or in [0, T_a]");
    if (val_metric != "dice" && val_metric != "iou" && val_metric != "precision")
        bad("train.val_metric must be one of dice, iou, precision");
    if (no_diffusion_module && autoencoder_latent)
        bad("ablation.no_diffusion_module and ablation.autoencoder_latent are exclusive");
    if (threshold < 0.0 || threshold > 1.0) bad("inference.threshold must lie in [0, 1]");
    if (t_a < 0 || t_a > T_a) bad("inference.t_a must lie in [0, T_a]");
    const int stride =
        no_diffusion_module ? 4 : std::max(4, 1 << (static_cast<int>(widths.size()) - 1));
    if (image_size % stride != 0)
        bad("data.image_size must be divisible by the model stride " + std::to_string(stride));
    if ((!drop_ds || !drop_da) && image_size < 32)
        bad("discriminators need data.image_size >= 32");
}

std::string TrainConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["out"] = out;
    j["data_root"] = data_root;
    j["image_size"] = image_size;
    j["batch"] = batch;
    j["augment"] = augment;
    j["T"] = T;
    j["T_a"] = T_a;
    j["beta_start"] = beta_start;
    j["beta_end"] = beta_end;
    j["widths"] = widths;
    j["attn_level"] = attn_level;
    j["norm_groups"] = norm_groups;
    j["temb_dim"] = temb_dim;
    j["gen_base"] = gen_base;
    j["spade_hidden"] = spade_hidden;
    j["disc_base"] = disc_base;
    j["lr"] = lr;
    j["adam_beta1"] = adam_beta1;
    j["adam_beta2"] = adam_beta2;
    j["alpha"] = weights.alpha;
    j["beta"] = weights.beta;
    j["epochs"] = epochs;
    j["max_steps"] = max_steps;
    j["reentry_t"] = reentry_t;
    j["val_metric"] = val_metric;
    j["no_diffusion_module"] = no_diffusion_module;
    j["no_sspade"] = no_sspade;
    j["no_cyclic"] = no_cyclic;
    j["ce_for_l1"] = ce_for_l1;
    j["drop_ds"] = drop_ds;
    j["drop_da"] = drop_da;
    j["autoencoder_latent"] = autoencoder_latent;
    j["no_background_inputs"] = no_background_inputs;
    j["threshold"] = threshold;
    j["t_a"] = t_a;
    return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail<ConfigError>(std::string("invalid train config json: ") + e.what());
    }
    TrainConfig t;
    try {
        t.seed = j.value("seed", t.seed);
        t.out = j.value("out", t.out);
        t.data_root = j.value("data_root", t.data_root);
        t.image_size = j.value("image_size", t.image_size);
        t.batch = j.value("batch", t.batch);
        t.augment = j.value("augment", t.augment);
        t.T = j.value("T", t.T);
        t.T_a = j.value("T_a", t.T_a);
        t.beta_start = j.value("beta_start", t.beta_start);
        t.beta_end = j.value("beta_end", t.beta_end);
        t.widths = j.value("widths", t.widths);
        t.attn_level = j.value("attn_level", t.attn_level);
        t.norm_groups = j.value("norm_groups", t.norm_groups);
        t.temb_dim = j.value("temb_dim", t.temb_dim);
        t.gen_base = j.value("gen_base", t.gen_base);
        t.spade_hidden = j.value("spade_hidden", t.spade_hidden);
        t.disc_base = j.value("disc_base", t.disc_base);
        t.lr = j.value("lr", t.lr);
        t.adam_beta1 = j.value("adam_beta1", t.adam_beta1);
        t.adam_beta2 = j.value("adam_beta2", t.adam_beta2);
        t.weights.alpha = j.value("alpha", t.weights.alpha);
        t.weights.beta = j.value("beta", t.weights.beta);
        t.epochs = j.value("epochs", t.epochs);
        t.max_steps = j.value("max_steps", t.max_steps);
        t.reentry_t = j.value("reentry_t", t.reentry_t);
        t.val_metric = j.value("val_metric", t.val_metric);
        t.no_diffusion_module = j.value("no_diffusion_module", t.no_diffusion_module);
        t.no_sspade = j.value("no_sspade", t.no_sspade);
        t.no_cyclic = j.value("no_cyclic", t.no_cyclic);
        t.ce_for_l1 = j.value("ce_for_l1", t.ce_for_l1);
        t.drop_ds = j.value("drop_ds", t.drop_ds);
        t.drop_da = j.value("drop_da", t.drop_da);
        t.autoencoder_latent = j.value("autoencoder_latent", t.autoencoder_latent);
        t.no_background_inputs = j.value("no_background_inputs", t.no_background_inputs);
        t.threshold = j.value("threshold", t.threshold);
        t.t_a = j.value("t_a", t.t_a);
    } catch (const json::exception& e) {
        fail<ConfigError>(std::string("invalid train config json: ") + e.what());
    }
    return t;
}

// ---- model bundle ----

std::vector<Var> ModelBundle::generator_side_params() const {
    std::vector<Var> ps;
    auto add_all = [&ps](const std::vector<Var>& v) { ps.insert(ps.end(), v.begin(), v.end()); };
    if (denoiser) add_all(denoiser->params());
    if (gen) add_all(gen->params());
    if (gen_b) add_all(gen_b->params());
    return ps;
}

int64_t ModelBundle::param_count() const {
    int64_t n = 0;
    if (denoiser) n += denoiser->param_count();
    if (gen) n += gen->param_count();
    if (gen_b) n += gen_b->param_count();
    if (disc_s) n += disc_s->param_count();
    if (disc_a) n += disc_a->param_count();
    return n;
}

ModelBundle build_models(const TrainConfig& cfg) {
    cfg.validate();
    ModelBundle b;
    b.schedule = build_linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end, cfg.T_a);

    if (!cfg.no_diffusion_module) {
        DenoiserNet::Config dc;
        dc.widths = cfg.widths;
        dc.attn_level = cfg.attn_level;
        dc.norm_groups = cfg.norm_groups;
        dc.temb_dim = cfg.temb_dim;
        dc.use_temb = !cfg.autoencoder_latent;
        dc.in_ch = 1;
        dc.init_seed = derive_seed(cfg.seed, 11);
        b.denoiser = std::make_unique<DenoiserNet>(dc);
    }

    GeneratorNet::Config gc;
    gc.base = cfg.gen_base;
    gc.spade_hidden = cfg.spade_hidden;
    gc.in_ch = cfg.no_diffusion_module ? 1 : 2;
    gc.init_seed = derive_seed(cfg.seed, 12);
    if (cfg.no_sspade) {
        gc.mode = GeneratorNet::Mode::always_in;
        b.gen = std::make_unique<GeneratorNet>(gc);
        GeneratorNet::Config gc2 = gc;
        gc2.mode = GeneratorNet::Mode::always_spade;
        gc2.init_seed = derive_seed(cfg.seed, 15);
        b.gen_b = std::make_unique<GeneratorNet>(gc2);
    } else {
        gc.mode = GeneratorNet::Mode::switchable;
        b.gen = std::make_unique<GeneratorNet>(gc);
    }

    if (!cfg.drop_ds) {
        DiscriminatorNet::Config sc;
        sc.base = cfg.disc_base;
        sc.in_ch = 1;
        sc.init_seed = derive_seed(cfg.seed, 13);
        b.disc_s = std::make_unique<DiscriminatorNet>(sc);
    }
    if (!cfg.drop_da) {
        DiscriminatorNet::Config ac;
        ac.base = cfg.disc_base;
        ac.in_ch = 1;
        ac.init_seed = derive_seed(cfg.seed, 14);
        b.disc_a = std::make_unique<DiscriminatorNet>(ac);
    }
    return b;
}

// ---- training passes ----

GeneratorPass generator_pass(const ModelBundle& bundle, const TrainBatch& batch,
                             const TrainConfig& cfg, Rng& rng) {
    check_batch(batch);
    const int B = batch.angiograms.dim(0);
    GeneratorPass out;

    Var x0a = leaf(batch.angiograms);
    Var x0b = leaf(cfg.no_background_inputs ? batch.angiograms : batch.backgrounds);
    Tensor mask01 = batch.fractals;

    GeneratorNet& gen_a = *bundle.gen;
    GeneratorNet& gen_b = bundle.path_b_generator();

    // Latents. With a denoiser, each path concatenates the perturbed image
    // with the noise estimate; without one the raw image is the latent.
    Var latent_a, latent_b;
    if (bundle.denoiser) {
        std::vector<int> t_a = sample_timesteps(B, bundle.schedule.T_a, rng);
        Tensor noise_a = Tensor::randn(batch.angiograms.shape(), rng);
        Var xta = perturb_var(bundle.schedule, x0a, t_a, noise_a);
        Var eps_a = bundle.denoiser->forward(xta, t_a);
        latent_a = concat_ch(xta, eps_a);

        std::vector<int> t_b = sample_timesteps(B, bundle.schedule.T, rng);
        Tensor noise_b = Tensor::randn(batch.angiograms.shape(), rng);
        Var xtb = perturb_var(bundle.schedule, x0b, t_b, noise_b);
        Var eps_b = bundle.denoiser->forward(xtb, t_b);
        latent_b = concat_ch(xtb, eps_b);

        if (!cfg.autoencoder_latent) out.diff = diffusion_loss(eps_b, leaf(noise_b));
    } else {
        latent_a = x0a;
        latent_b = x0b;
    }
    if (!out.diff) out.diff = zero_scalar();

    out.seg_a = gen_a.forward(latent_a, nullptr);
    out.fake_b = gen_b.forward(latent_b, &mask01);

    // adversarial terms for whichever discriminators exist
    Var adv;
    if (bundle.disc_s) adv = adv_loss_generator_term(bundle.disc_s->forward(out.seg_a));
    if (bundle.disc_a) {
        Var term = adv_loss_generator_term(bundle.disc_a->forward(out.fake_b));
        adv = adv ? add(adv, term) : term;
    }
    out.adv_g = adv ? adv : zero_scalar();

    // cycle: the synthetic angiogram re-enters path A and must reproduce the
    // fractal layout that generated it
    if (!cfg.no_cyclic) {
        Var latent_c;
        if (bundle.denoiser) {
            std::vector<int> t_c = cfg.reentry_t >= 0
                                       ? std::vector<int>(static_cast<size_t>(B), cfg.reentry_t)
                                       : sample_timesteps(B, bundle.schedule.T_a, rng);
            Tensor noise_c = Tensor::randn(batch.angiograms.shape(), rng);
            Var xtc = perturb_var(bundle.schedule, out.fake_b, t_c, noise_c);
            Var eps_c = bundle.denoiser->forward(xtc, t_c);
            latent_c = concat_ch(xtc, eps_c);
        } else {
            latent_c = out.fake_b;
        }
        out.recon = gen_a.forward(latent_c, nullptr);
        if (cfg.ce_for_l1) {
            Var recon01 = scale(add_scalar(out.recon, 1.0), 0.5);
            out.cyc = cyclic_loss_ce(recon01, leaf(mask01));
        } else {
            out.cyc = cyclic_loss(out.recon, leaf(to_pm1(mask01)));
        }
    } else {
        out.cyc = zero_scalar();
    }

    out.total_g = total_generator_loss(out.diff, out.adv_g, out.cyc, cfg.weights);
    return out;
}

DiscriminatorPass discriminator_pass(const ModelBundle& bundle, const TrainBatch& batch,
                                     const Tensor& fake_seg, const Tensor& fake_ang,
                                     const TrainConfig& cfg) {
    (void)cfg;
    check_batch(batch);
    DiscriminatorPass d;
    if (bundle.disc_s) {
        Var real_scores = bundle.disc_s->forward(leaf(to_pm1(batch.fractals)));
        Var fake_scores = bundle.disc_s->forward(leaf(fake_seg));
        d.adv_ds = adv_loss_disc(real_scores, fake_scores);
    } else {
        d.adv_ds = zero_scalar();
    }
    if (bundle.disc_a) {
        Var real_scores = bundle.disc_a->forward(leaf(batch.angiograms));
        Var fake_scores = bundle.disc_a->forward(leaf(fake_ang));
        d.adv_da = adv_loss_disc(real_scores, fake_scores);
    } else {
        d.adv_da = zero_scalar();
    }
    d.total_d = total_discriminator_loss(d.adv_ds, d.adv_da);
    return d;
}

// ---- trainer ----

Trainer::Trainer(const TrainConfig& cfg) : cfg_(cfg), bundle_(build_models(cfg)) {
    rng_ = Rng(derive_seed(cfg_.seed, 22));
    opt_g_ = std::make_unique<Adam>(bundle_.generator_side_params(), cfg_.lr, cfg_.adam_beta1,
                                    cfg_.adam_beta2);
    if (bundle_.disc_s)
        opt_ds_ = std::make_unique<Adam>(bundle_.disc_s->params(), cfg_.lr, cfg_.adam_beta1,
                                         cfg_.adam_beta2);
    if (bundle_.disc_a)
        opt_da_ = std::make_unique<Adam>(bundle_.disc_a->params(), cfg_.lr, cfg_.adam_beta1,
                                         cfg_.adam_beta2);
}

void Trainer::ensure_loader() {
    if (loader_) return;
    if (cfg_.data_root.empty()) fail<ConfigError>("training: data.root is not set");
    DatasetLayout layout = discover_layout(cfg_.data_root, true, true);
    loader_ = std::make_unique<BatchLoader>(layout, cfg_.batch, cfg_.image_size,
                                            derive_seed(cfg_.seed, 21), cfg_.augment);
    if (pending_loader_rng_) {
        loader_->rng().restore(pending_rng_state_, pending_rng_cache_flag_, pending_rng_cache_);
        pending_loader_rng_ = false;
    }
}

int Trainer::steps_per_epoch() const {
    check(loader_ != nullptr, "steps_per_epoch: dataset not loaded yet");
    const int n = static_cast<int>(loader_->layout().train_angiograms.size());
    return std::max(1, n / cfg_.batch);
}

void Trainer::set_run_budget(int epochs, int max_steps) {
    if (epochs > 0) cfg_.epochs = epochs;
    if (max_steps > 0) cfg_.max_steps = max_steps;
}

TrainConfig smoke_train_config(const std::string& data_root, const std::string& out_dir) {
    TrainConfig cfg;
    cfg.seed = 1;
    cfg.data_root = data_root;
    cfg.out = out_dir;
    cfg.image_size = 64;
    cfg.batch = 2;
    // A low perturbation cap keeps the training inputs nearly clean, so test
    // noise beyond a few intensity levels lands outside what the model saw
    // and the robustness sweep degrades the way a full-scale run does.
    cfg.T_a = 20;
    cfg.widths = {8, 8, 16};
    cfg.attn_level = 2;
    cfg.norm_groups = 4;
    cfg.temb_dim = 32;
    cfg.gen_base = 8;
    cfg.spade_hidden = 8;
    cfg.disc_base = 8;
    cfg.lr = 5e-4;
    cfg.epochs = 1000;
    cfg.max_steps = 1600;
    return cfg;
}

LossReport Trainer::train_step(const TrainBatch& batch) {
    GeneratorPass g = generator_pass(bundle_, batch, cfg_, rng_);
    opt_g_->zero_grad();
    backward(g.total_g);
    opt_g_->step();

    // Discriminators score the generator outputs as constants, after the
    // generator update; stray gradients the generator backward deposited on
    // the discriminators are cleared before their own backward.
    DiscriminatorPass d = discriminator_pass(bundle_, batch, g.seg_a->value, g.fake_b->value, cfg_);
    if (opt_ds_) opt_ds_->zero_grad();
    if (opt_da_) opt_da_->zero_grad();
    backward(d.total_d);
    if (opt_ds_) opt_ds_->step();
    if (opt_da_) opt_da_->step();

    ++step_;
    LossReport r;
    r.step = step_;
    r.epoch = epoch_;
    r.diff_present = bundle_.denoiser != nullptr && !cfg_.autoencoder_latent;
    r.adv_g_present = bundle_.disc_s != nullptr || bundle_.disc_a != nullptr;
    r.cyc_present = !cfg_.no_cyclic;
    r.ds_present = bundle_.disc_s != nullptr;
    r.da_present = bundle_.disc_a != nullptr;
    r.diff = g.diff->value[0];
    r.adv_g = g.adv_g->value[0];
    r.cyc = g.cyc->value[0];
    r.total_g = g.total_g->value[0];
    r.adv_ds = d.adv_ds->value[0];
    r.adv_da = d.adv_da->value[0];
    r.total_d = d.total_d->value[0];
    return r;
}

LossReport Trainer::step() {
    ensure_loader();
    TrainBatch b = loader_->next();
    LossReport r = train_step(b);
    if (step_ % steps_per_epoch() == 0) ++epoch_;
    return r;
}

real Trainer::validate(const SegmentFn& segment_override) {
    ensure_loader();
    const DatasetLayout& layout = loader_->layout();
    SegmentFn fn = segment_override ? segment_override : make_segment_fn(bundle_, cfg_.t_a);
    EvalOptions opt;
    opt.sigma = 0;
    opt.threshold = cfg_.threshold;
    opt.image_size = cfg_.image_size;
    opt.dataset = "val";
    opt.noise_seed = derive_seed(cfg_.seed, 23);
    std::vector<MetricRow> rows = evaluate_split(fn, layout.val_angiograms, layout.val_labels, opt);
    MetricSummary s = summarize(rows);
    real v = s.mean.dice;
    if (cfg_.val_metric == "iou") v = s.mean.iou;
    if (cfg_.val_metric == "precision") v = s.mean.precision;
    if (v > best_val_) best_val_ = v;
    return v;
}

void Trainer::run(std::ostream* log_csv, std::ostream* progress) {
    ensure_loader();
    std::filesystem::create_directories(cfg_.out);
    const int spe = steps_per_epoch();
    const int64_t total = cfg_.max_steps > 0 ? cfg_.max_steps : static_cast<int64_t>(cfg_.epochs) * spe;
    if (log_csv && step_ == 0) *log_csv << LossReport::csv_header() << "\n";
    while (step_ < total) {
        const int epoch_before = epoch_;
        LossReport r = step();
        if (log_csv) *log_csv << r.csv_row() << "\n";
        const bool boundary = epoch_ != epoch_before || step_ >= total;
        if (boundary) {
            const real prev_best = best_val_;
            const real v = validate();
            const bool improved = v > prev_best;
            if (progress) {
                *progress << "epoch " << epoch_ << " step " << step_ << "/" << total << " total_g "
                          << r.total_g << " val_" << cfg_.val_metric << " " << v
                          << (improved ? "  (new best)" : "") << std::endl;
            }
            if (improved) save_checkpoint(cfg_.out + "/best.ckpt");
        }
    }
    save_checkpoint(cfg_.out + "/last.ckpt");
}

// ---- checkpointing ----

namespace {

constexpr char kCkptMagic[8] = {'V', 'S', 'E', 'G', 'C', 'K', 'P', '1'};
constexpr uint32_t kCkptVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_str(std::ostream& out, const std::string& s) {
    check(s.size() <= UINT16_MAX, "checkpoint: string too long");
    put(out, static_cast<uint16_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T take(std::istream& in) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) fail<CheckpointError>("checkpoint truncated");
    return v;
}

std::string take_str(std::istream& in) {
    const uint16_t n = take<uint16_t>(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) fail<CheckpointError>("checkpoint truncated");
    return s;
}

void put_raw(std::ostream& out, const Tensor& t) {
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * 8));
}

void take_raw(std::istream& in, Tensor& t) {
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * 8));
    if (!in) fail<CheckpointError>("checkpoint truncated");
}

std::vector<std::pair<std::string, const std::vector<Var>*>> net_table(const ModelBundle& b) {
    std::vector<std::pair<std::string, const std::vector<Var>*>> v;
    if (b.denoiser) v.emplace_back("denoiser", &b.denoiser->params());
    if (b.gen) v.emplace_back("gen", &b.gen->params());
    if (b.gen_b) v.emplace_back("gen_b", &b.gen_b->params());
    if (b.disc_s) v.emplace_back("disc_s", &b.disc_s->params());
    if (b.disc_a) v.emplace_back("disc_a", &b.disc_a->params());
    return v;
}

}  // namespace

struct TrainerIo {
    static void save(const Trainer& t, const std::string& path) {
        const std::string tmp = path + ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary);
            if (!out) fail<IoError>("cannot write checkpoint: " + tmp);
            out.write(kCkptMagic, 8);
            put(out, kCkptVersion);

            const std::string cfg = t.cfg_.to_json();
            put(out, static_cast<uint64_t>(cfg.size()));
            out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));

            auto nets = net_table(t.bundle_);
            put(out, static_cast<uint8_t>(nets.size()));
            for (const auto& [tag, params] : nets) {
                put_str(out, tag);
                put(out, static_cast<uint64_t>(params->size()));
                for (const Var& p : *params) {
                    put_str(out, p->name);
                    const auto& shape = p->value.shape();
                    put(out, static_cast<uint8_t>(shape.size()));
                    for (int d : shape) put(out, static_cast<int64_t>(d));
                    put_raw(out, p->value);
                }
            }

            std::vector<std::pair<std::string, const Adam*>> opts;
            if (t.opt_g_) opts.emplace_back("opt_g", t.opt_g_.get());
            if (t.opt_ds_) opts.emplace_back("opt_ds", t.opt_ds_.get());
            if (t.opt_da_) opts.emplace_back("opt_da", t.opt_da_.get());
            put(out, static_cast<uint8_t>(opts.size()));
            for (const auto& [tag, opt] : opts) {
                put_str(out, tag);
                put(out, static_cast<uint64_t>(opt->size()));
                for (size_t i = 0; i < opt->size(); ++i) {
                    put(out, static_cast<uint64_t>(opt->m_at(i).numel()));
                    put_raw(out, opt->m_at(i));
                    put_raw(out, opt->v_at(i));
                    put(out, opt->t_at(i));
                }
            }

            put(out, static_cast<int64_t>(t.epoch_));
            put(out, static_cast<int64_t>(t.step_));
            put(out, t.best_val_);

            put(out, t.rng_.state());
            put(out, static_cast<uint8_t>(t.rng_.has_cached_normal()));
            put(out, t.rng_.cached_normal());

            const bool has_loader_rng = t.loader_ != nullptr || t.pending_loader_rng_;
            put(out, static_cast<uint8_t>(has_loader_rng));
            if (has_loader_rng) {
                if (t.loader_) {
                    Rng& lr = t.loader_->rng();
                    put(out, lr.state());
                    put(out, static_cast<uint8_t>(lr.has_cached_normal()));
                    put(out, lr.cached_normal());
                } else {
                    put(out, t.pending_rng_state_);
                    put(out, static_cast<uint8_t>(t.pending_rng_cache_flag_));
                    put(out, t.pending_rng_cache_);
                }
            }
            out.flush();
            if (!out) fail<IoError>("write failed: " + tmp);
        }
        std::error_code ec;
        std::filesystem::rename(tmp, path, ec);
        if (ec) fail<IoError>("cannot move checkpoint into place: " + path + " (" + ec.message() + ")");
    }

    static Trainer load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) fail<CheckpointError>("cannot open checkpoint: " + path);
        char magic[8];
        in.read(magic, 8);
        if (!in || std::memcmp(magic, kCkptMagic, 8) != 0)
            fail<CheckpointError>("not a checkpoint file: " + path);
        const uint32_t ver = take<uint32_t>(in);
        if (ver != kCkptVersion)
            fail<CheckpointError>("checkpoint version " + std::to_string(ver) +
                                  "; this build reads version " + std::to_string(kCkptVersion));

        const uint64_t cfg_len = take<uint64_t>(in);
        std::string cfg_text(cfg_len, '\0');
        in.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len));
        if (!in) fail<CheckpointError>("checkpoint truncated");

        Trainer t(TrainConfig::from_json(cfg_text));

        auto nets = net_table(t.bundle_);
        const uint8_t n_nets = take<uint8_t>(in);
        if (n_nets != nets.size())
            fail<CheckpointError>("checkpoint holds " + std::to_string(int(n_nets)) +
                                  " networks, config builds " + std::to_string(nets.size()));
        for (size_t k = 0; k < n_nets; ++k) {
            const std::string tag = take_str(in);
            if (tag != nets[k].first)
                fail<CheckpointError>("checkpoint network '" + tag + "' does not match '" +
                                      nets[k].first + "'");
            const std::vector<Var>& params = *nets[k].second;
            const uint64_t n = take<uint64_t>(in);
            if (n != params.size())
                fail<CheckpointError>("checkpoint network '" + tag + "' parameter count mismatch");
            for (const Var& p : params) {
                const std::string name = take_str(in);
                if (name != p->name)
                    fail<CheckpointError>("checkpoint parameter '" + name + "' does not match '" +
                                          p->name + "'");
                const uint8_t ndim = take<uint8_t>(in);
                std::vector<int> shape(ndim);
                for (auto& d : shape) d = static_cast<int>(take<int64_t>(in));
                if (shape != p->value.shape())
                    fail<CheckpointError>("checkpoint parameter '" + name + "' shape mismatch");
                take_raw(in, p->value);
            }
        }

        const uint8_t n_opts = take<uint8_t>(in);
        for (size_t k = 0; k < n_opts; ++k) {
            const std::string tag = take_str(in);
            Adam* opt = tag == "opt_g"    ? t.opt_g_.get()
                        : tag == "opt_ds" ? t.opt_ds_.get()
                        : tag == "opt_da" ? t.opt_da_.get()
                                          : nullptr;
            if (!opt)
                fail<CheckpointError>("checkpoint optimizer '" + tag +
                                      "' does not exist under this config");
            const uint64_t n = take<uint64_t>(in);
            if (n != opt->size())
                fail<CheckpointError>("checkpoint optimizer '" + tag + "' size mismatch");
            for (size_t i = 0; i < n; ++i) {
                const uint64_t numel = take<uint64_t>(in);
                const Tensor& pv = opt->params()[i]->value;
                if (numel != static_cast<uint64_t>(pv.numel()))
                    fail<CheckpointError>("checkpoint optimizer '" + tag + "' moment size mismatch");
                Tensor m = Tensor::zeros(pv.shape());
                Tensor v = Tensor::zeros(pv.shape());
                take_raw(in, m);
                take_raw(in, v);
                const int64_t tt = take<int64_t>(in);
                opt->load_state(i, std::move(m), std::move(v), tt);
            }
        }

        t.epoch_ = static_cast<int>(take<int64_t>(in));
        t.step_ = static_cast<int>(take<int64_t>(in));
        t.best_val_ = take<real>(in);

        const uint64_t rs = take<uint64_t>(in);
        const uint8_t rc = take<uint8_t>(in);
        const real rv = take<real>(in);
        t.rng_.restore(rs, rc != 0, rv);

        const uint8_t has_loader_rng = take<uint8_t>(in);
        if (has_loader_rng) {
            t.pending_rng_state_ = take<uint64_t>(in);
            t.pending_rng_cache_flag_ = take<uint8_t>(in) != 0;
            t.pending_rng_cache_ = take<real>(in);
            t.pending_loader_rng_ = true;
        }
        return t;
    }
};

void Trainer::save_checkpoint(const std::string& path) const { TrainerIo::save(*this, path); }

Trainer Trainer::load_checkpoint(const std::string& path) { return TrainerIo::load(path); }

}  // namespace vseg
