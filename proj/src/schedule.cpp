#include "vseg/schedule.hpp"

namespace vseg {

NoiseSchedule build_linear_schedule(int T, real beta_start, real beta_end, int T_a) {
    check(T >= 1, "schedule: T must be positive");
    check(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
          "schedule: need 0 < beta_start <= beta_end < 1");
    check(T_a >= 0 && T_a < T, "schedule: need 0 <= T_a < T");
    NoiseSchedule s;
    s.T = T;
    s.T_a = T_a;
    s.betas.resize(static_cast<size_t>(T));
    if (T == 1) {
        s.betas[0] = beta_start;
    } else {
        for (int i = 0; i < T; ++i)
            s.betas[static_cast<size_t>(i)] =
                beta_start + (beta_end - beta_start) * static_cast<real>(i) /
                                 static_cast<real>(T - 1);
    }
    s.alpha_bars.resize(static_cast<size_t>(T) + 1);
    s.alpha_bars[0] = 1.0;
    for (int t = 1; t <= T; ++t)
        s.alpha_bars[static_cast<size_t>(t)] =
            s.alpha_bars[static_cast<size_t>(t) - 1] * (1.0 - s.betas[static_cast<size_t>(t) - 1]);
    return s;
}

Tensor perturb(const NoiseSchedule& s, const Tensor& x0, const std::vector<int>& t,
               const Tensor& noise) {
    check_shape(x0.ndim() == 4, "perturb: expected NCHW input, got " + x0.shape_str());
    check_shape(x0.same_shape(noise), "perturb: noise shape " + noise.shape_str() +
                                          " does not match input " + x0.shape_str());
    const int N = x0.dim(0);
    check(static_cast<int>(t.size()) == N, "perturb: need one timestep per batch element");
    const int64_t per = x0.numel() / N;
    Tensor out(x0.shape());
    for (int n = 0; n < N; ++n) {
        const int tn = t[static_cast<size_t>(n)];
        check(tn >= 0 && tn <= s.T, "perturb: timestep " + std::to_string(tn) +
                                        " outside [0, " + std::to_string(s.T) + "]");
        const real a = s.sqrt_alpha_bar(tn);
        const real b = s.sqrt_one_minus_alpha_bar(tn);
        const int64_t off = n * per;
        if (tn == 0) {
            // coefficient pair is exactly (1, 0); copy so the identity is bitwise
            for (int64_t i = 0; i < per; ++i) out[off + i] = x0[off + i];
        } else {
            for (int64_t i = 0; i < per; ++i) out[off + i] = a * x0[off + i] + b * noise[off + i];
        }
    }
    return out;
}

std::vector<int> sample_timesteps(int count, int upper, Rng& rng) {
    check(count >= 0 && upper >= 0, "sample_timesteps: negative argument");
    std::vector<int> t(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i)
        t[static_cast<size_t>(i)] = static_cast<int>(rng.uniform_int(0, upper));
    return t;
}

}  // namespace vseg
