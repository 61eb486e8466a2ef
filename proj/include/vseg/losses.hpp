#pragma once

#include <string>

#include "vseg/ops.hpp"

namespace vseg {

// Weights of the composite generator objective:
// total = diffusion + alpha * adversarial + beta * cyclic.
struct LossWeights {
    real alpha = 0.2;
    real beta = 5.0;
};

void validate_weights(const LossWeights& w);

// Per-step scalar summary, streamed to the training log. Ablations that
// remove a term clear its presence flag; absent terms render as empty CSV
// cells and are excluded from the totals.
struct LossReport {
    int step = 0;
    int epoch = 0;
    real diff = 0;
    real adv_g = 0;
    real cyc = 0;
    real total_g = 0;
    real adv_ds = 0;
    real adv_da = 0;
    real total_d = 0;
    bool diff_present = true;
    bool adv_g_present = true;
    bool cyc_present = true;
    bool ds_present = true;
    bool da_present = true;

    static std::string csv_header();
    std::string csv_row() const;
};

// Mean squared error between the predicted and the drawn noise.
Var diffusion_loss(const Var& predicted, const Var& truth);

// One generator-side least-squares term: mean((scores - 1)^2).
Var adv_loss_generator_term(const Var& score_fake);

// Least-squares objective pushing both fake-score maps toward 1.
// The two patch means are summed, not averaged.
Var adv_loss_generator(const Var& score_fake_seg, const Var& score_fake_ang);

// Least-squares discriminator objective: real scores toward 1, fake toward 0,
// each half-weighted. Used for both the mask and the image discriminator.
Var adv_loss_disc(const Var& score_real, const Var& score_fake);

// Mean absolute reconstruction error.
Var cyclic_loss(const Var& reconstructed, const Var& target);

// Binary cross-entropy variant; predictions live in [0,1] (epsilon-clamped
// inside), targets are binary.
Var cyclic_loss_ce(const Var& predicted, const Var& target);

// diff + alpha*adv + beta*cyc; rejects non-finite components.
Var total_generator_loss(const Var& diff, const Var& adv_g, const Var& cyc,
                         const LossWeights& w);

// Sum of the two discriminator objectives.
Var total_discriminator_loss(const Var& adv_ds, const Var& adv_da);

}  // namespace vseg
