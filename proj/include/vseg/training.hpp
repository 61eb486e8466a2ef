#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vseg/adam.hpp"
#include "vseg/config.hpp"
#include "vseg/data.hpp"
#include "vseg/evaluation.hpp"
#include "vseg/losses.hpp"
#include "vseg/nets.hpp"
#include "vseg/schedule.hpp"

namespace vseg {

// Fully resolved training recipe: data, schedule, model sizes, optimizer
// settings, and the ablation switches.
struct TrainConfig {
    uint64_t seed = 42;
    std::string out = "runs/default";

    std::string data_root;
    int image_size = 64;
    int batch = 2;
    bool augment = true;

    int T = 2000;
    int T_a = 200;
    real beta_start = 1e-6;
    real beta_end = 1e-2;

    std::vector<int> widths{64, 64, 128, 128, 256, 256};
    int attn_level = 4;
    int norm_groups = 32;
    int temb_dim = 256;
    int gen_base = 64;
    int spade_hidden = 128;
    int disc_base = 64;

    real lr = 5e-6;
    real adam_beta1 = 0.5;
    real adam_beta2 = 0.999;
    LossWeights weights;
    int epochs = 150;
    int max_steps = 0;   // 0: bounded by epochs only
    int reentry_t = -1;  // cycle re-entry step; -1 draws uniformly from [0, T_a]
    std::string val_metric = "dice";

    bool no_diffusion_module = false;
    bool no_sspade = false;
    bool no_cyclic = false;
    bool ce_for_l1 = false;
    bool drop_ds = false;
    bool drop_da = false;
    bool autoencoder_latent = false;
    bool no_background_inputs = false;

    real threshold = 0.5;
    int t_a = 0;

    static TrainConfig from_config(const Config& c);
    void validate() const;
    std::string to_json() const;
    static TrainConfig from_json(const std::string& text);
};

// The fixed recipe behind the smoke self-test: 64 x 64 synthetic corpus,
// three-level tiny networks, and a learning rate chosen so the run overfits
// the corpus within the step budget on a single CPU core.
TrainConfig smoke_train_config(const std::string& data_root, const std::string& out_dir);

// The four trainable networks plus the noise schedule. Ablations leave some
// slots empty: no_diffusion_module drops the denoiser, drop_ds/drop_da drop a
// discriminator, and no_sspade splits the generator into a mask-free path-A
// instance and a mask-driven path-B instance.
struct ModelBundle {
    NoiseSchedule schedule;
    std::unique_ptr<DenoiserNet> denoiser;
    std::unique_ptr<GeneratorNet> gen;    // path A; also path B unless gen_b exists
    std::unique_ptr<GeneratorNet> gen_b;  // only under no_sspade
    std::unique_ptr<DiscriminatorNet> disc_s;
    std::unique_ptr<DiscriminatorNet> disc_a;

    GeneratorNet& path_b_generator() const { return gen_b ? *gen_b : *gen; }
    std::vector<Var> generator_side_params() const;
    int64_t param_count() const;
};

// Materialize the networks for a config, wiring all ablation switches.
ModelBundle build_models(const TrainConfig& cfg);

// Graph handles of one generator-side pass, exposed so tests can inspect
// gradient flow before the optimizer consumes it.
struct GeneratorPass {
    Var seg_a;       // path A segmentation of the real angiogram
    Var fake_b;      // path B synthetic angiogram
    Var recon;       // cycle reconstruction of the fractal layout
    Var diff;        // scalar components (leaf zeros when ablated)
    Var adv_g;
    Var cyc;
    Var total_g;
};

GeneratorPass generator_pass(const ModelBundle& bundle, const TrainBatch& batch,
                             const TrainConfig& cfg, Rng& rng);

struct DiscriminatorPass {
    Var adv_ds;  // leaf zero when the discriminator is dropped
    Var adv_da;
    Var total_d;
};

// Scores fakes as constants: gradients stop at the provided tensors.
DiscriminatorPass discriminator_pass(const ModelBundle& bundle, const TrainBatch& batch,
                                     const Tensor& fake_seg, const Tensor& fake_ang,
                                     const TrainConfig& cfg);

class Trainer {
  public:
    explicit Trainer(const TrainConfig& cfg);

    LossReport step();                              // draw a batch and train on it
    LossReport train_step(const TrainBatch& batch);
    real validate(const SegmentFn& segment_override = {});

    void run(std::ostream* log_csv, std::ostream* progress);

    void save_checkpoint(const std::string& path) const;
    static Trainer load_checkpoint(const std::string& path);

    const TrainConfig& config() const { return cfg_; }
    const ModelBundle& bundle() const { return bundle_; }
    int epoch() const { return epoch_; }
    int global_step() const { return step_; }
    real best_val() const { return best_val_; }
    int steps_per_epoch() const;

    // Extends (or shrinks) the run() budget of a resumed trainer; zero keeps
    // the stored value.
    void set_run_budget(int epochs, int max_steps);

  private:
    // The loader touches the filesystem, so it is built on first use; a
    // checkpoint loaded only to run inference never needs the dataset.
    void ensure_loader();

    TrainConfig cfg_;
    ModelBundle bundle_;
    std::unique_ptr<BatchLoader> loader_;
    std::unique_ptr<Adam> opt_g_, opt_ds_, opt_da_;
    Rng rng_{0};
    int epoch_ = 0;
    int step_ = 0;
    real best_val_ = -1.0;

    // loader rng state restored from a checkpoint before the loader exists
    bool pending_loader_rng_ = false;
    uint64_t pending_rng_state_ = 0;
    bool pending_rng_cache_flag_ = false;
    real pending_rng_cache_ = 0.0;

    friend struct TrainerIo;
};

}  // namespace vseg
