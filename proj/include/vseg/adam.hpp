#pragma once

#include <vector>

#include "vseg/autograd.hpp"

namespace vseg {

// Adam with per-parameter bias-correction counters. Parameters whose gradient
// was never touched in a step are skipped entirely, matching the usual
// convention, so freezing a network is just not backpropagating into it.
class Adam {
  public:
    Adam(std::vector<Var> params, real lr, real beta1, real beta2, real eps = 1e-8);

    void step();
    void zero_grad();

    real lr() const { return lr_; }
    void set_lr(real lr) { lr_ = lr; }

    const std::vector<Var>& params() const { return params_; }
    size_t size() const { return params_.size(); }
    const Tensor& m_at(size_t i) const { return m_[i]; }
    const Tensor& v_at(size_t i) const { return v_[i]; }
    int64_t t_at(size_t i) const { return t_[i]; }
    void load_state(size_t i, Tensor m, Tensor v, int64_t t);

  private:
    std::vector<Var> params_;
    real lr_, beta1_, beta2_, eps_;
    std::vector<Tensor> m_, v_;
    std::vector<int64_t> t_;
};

}  // namespace vseg
