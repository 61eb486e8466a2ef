#pragma once

#include <optional>

#include "vseg/autograd.hpp"

namespace vseg {

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var mul_const(const Var& a, const Tensor& c);
Var scale(const Var& a, real s);
Var add_scalar(const Var& a, real s);
Var relu(const Var& a);
Var leaky_relu(const Var& a, real slope);
Var swish(const Var& a);
Var tanh_op(const Var& a);
Var sigmoid_op(const Var& a);
Var abs_op(const Var& a);
Var square_op(const Var& a);
Var log_op(const Var& a);
Var clamp_op(const Var& a, real lo, real hi);

// y = a*x + b*noise with fixed coefficients; differentiable in x only.
// Coefficients are per batch element (x is NCHW, coefficient index is n).
Var scale_add_noise(const Var& x, const std::vector<real>& a, const Tensor& noise,
                    const std::vector<real>& b);

// ---- reductions ----
Var mean_all(const Var& a);  // -> shape {1}

// ---- linear algebra / conv ----
// x {N,Cin,H,W}, w {Cout,Cin,k,k}, b {Cout}
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
// x {N,D}, w {Dout,D}, b {Dout}
Var linear(const Var& x, const Var& w, const Var& b);

// ---- shape / resampling ----
Var upsample_nearest2(const Var& x);
Var concat_ch(const Var& a, const Var& b);
Var slice_ch(const Var& x, int from, int to);  // [from, to)

// ---- normalization ----
// Standardize per (sample, group): zero mean, unit variance over the group's
// channels and spatial extent, epsilon-guarded. groups == C gives instance
// statistics.
Var group_standardize(const Var& x, int groups, real eps);
// y[n,c,h,w] = x[n,c,h,w]*gamma[c] + beta[c]
Var channel_affine(const Var& x, const Var& gamma, const Var& beta);
// y[n,c,h,w] = x[n,c,h,w] + v[n,c]
Var add_rowvec(const Var& x, const Var& v);

// ---- attention ----
// Single-head dot-product attention over flattened spatial positions.
// q,k,v {N,C,H,W}; scores scaled by 1/sqrt(C).
Var attention_single_head(const Var& q, const Var& k, const Var& v);

}  // namespace vseg
