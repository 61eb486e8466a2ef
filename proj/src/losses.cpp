#include "vseg/losses.hpp"

#include <cmath>
#include <sstream>

namespace vseg {

namespace {

constexpr real kCeClamp = 1e-7;

void check_same_shape(const Var& a, const Var& b, const char* who) {
    check_shape(a->value.shape() == b->value.shape(),
                std::string(who) + ": shape mismatch " + a->value.shape_str() + " vs " +
                    b->value.shape_str());
}

Var mean_sq_toward(const Var& scores, real target) {
    return mean_all(square_op(add_scalar(scores, -target)));
}

}  // namespace

void validate_weights(const LossWeights& w) {
    check(w.alpha >= 0.0 && w.beta >= 0.0, "loss weights must be non-negative");
}

std::string LossReport::csv_header() {
    return "step,epoch,diff,adv_g,cyc,total_g,adv_ds,adv_da,total_d";
}

std::string LossReport::csv_row() const {
    std::ostringstream os;
    os.precision(10);
    auto cell = [&](real v, bool present) {
        os << ',';
        if (present) os << v;
    };
    os << step << ',' << epoch;
    cell(diff, diff_present);
    cell(adv_g, adv_g_present);
    cell(cyc, cyc_present);
    cell(total_g, true);
    cell(adv_ds, ds_present);
    cell(adv_da, da_present);
    cell(total_d, true);
    return os.str();
}

Var diffusion_loss(const Var& predicted, const Var& truth) {
    check_same_shape(predicted, truth, "diffusion_loss");
    return mean_all(square_op(sub(predicted, truth)));
}

Var adv_loss_generator_term(const Var& score_fake) { return mean_sq_toward(score_fake, 1.0); }

Var adv_loss_generator(const Var& score_fake_seg, const Var& score_fake_ang) {
    return add(adv_loss_generator_term(score_fake_seg), adv_loss_generator_term(score_fake_ang));
}

Var adv_loss_disc(const Var& score_real, const Var& score_fake) {
    return add(scale(mean_sq_toward(score_real, 1.0), 0.5),
               scale(mean_sq_toward(score_fake, 0.0), 0.5));
}

Var cyclic_loss(const Var& reconstructed, const Var& target) {
    check_same_shape(reconstructed, target, "cyclic_loss");
    return mean_all(abs_op(sub(reconstructed, target)));
}

Var cyclic_loss_ce(const Var& predicted, const Var& target) {
    check_same_shape(predicted, target, "cyclic_loss_ce");
    check(predicted->value.min() >= -1e-9 && predicted->value.max() <= 1.0 + 1e-9,
          "cyclic_loss_ce: predictions must lie in [0,1]");
    check(target->value.min() >= 0.0 && target->value.max() <= 1.0,
          "cyclic_loss_ce: targets must lie in [0,1]");
    Var p = clamp_op(predicted, kCeClamp, 1.0 - kCeClamp);
    Var pos = mul(target, log_op(p));
    Var neg = mul(add_scalar(scale(target, -1.0), 1.0),
                  log_op(add_scalar(scale(p, -1.0), 1.0)));
    return scale(mean_all(add(pos, neg)), -1.0);
}

Var total_generator_loss(const Var& diff, const Var& adv_g, const Var& cyc,
                         const LossWeights& w) {
    validate_weights(w);
    check(std::isfinite(diff->value[0]) && std::isfinite(adv_g->value[0]) &&
              std::isfinite(cyc->value[0]),
          "total_generator_loss: non-finite component (diff=" +
              std::to_string(diff->value[0]) + " adv=" + std::to_string(adv_g->value[0]) +
              " cyc=" + std::to_string(cyc->value[0]) + ")");
    return add(diff, add(scale(adv_g, w.alpha), scale(cyc, w.beta)));
}

Var total_discriminator_loss(const Var& adv_ds, const Var& adv_da) {
    check(std::isfinite(adv_ds->value[0]) && std::isfinite(adv_da->value[0]),
          "total_discriminator_loss: non-finite component");
    return add(adv_ds, adv_da);
}

}  // namespace vseg
