#pragma once

#include <vector>

#include "vseg/rng.hpp"
#include "vseg/tensor.hpp"

namespace vseg {

// Variance schedule for the forward noising process. alpha_bars has T+1
// entries: alpha_bars[0] = 1 (empty product), alpha_bars[t] is the cumulative
// product of (1 - beta_s) for s = 1..t. Step 0 therefore reproduces the clean
// image exactly.
struct NoiseSchedule {
    std::vector<real> betas;       // T entries
    std::vector<real> alpha_bars;  // T+1 entries
    int T = 0;
    int T_a = 0;  // cap for the real-image perturbation path

    real sqrt_alpha_bar(int t) const { return std::sqrt(alpha_bars[static_cast<size_t>(t)]); }
    real sqrt_one_minus_alpha_bar(int t) const {
        return std::sqrt(1.0 - alpha_bars[static_cast<size_t>(t)]);
    }
};

// Endpoint-inclusive linear interpolation over T points, so betas.front() ==
// beta_start and betas.back() == beta_end. T_a = 0 builds a schedule with the
// real-image cap unused.
NoiseSchedule build_linear_schedule(int T, real beta_start, real beta_end, int T_a = 0);

// x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * noise, per batch
// element. Noise is injected, never drawn here.
Tensor perturb(const NoiseSchedule& s, const Tensor& x0, const std::vector<int>& t,
               const Tensor& noise);

// Uniform integers on [0, upper], one per batch element.
std::vector<int> sample_timesteps(int count, int upper, Rng& rng);

}  // namespace vseg
