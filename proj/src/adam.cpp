#include "vseg/adam.hpp"

#include <cmath>

namespace vseg {

Adam::Adam(std::vector<Var> params, real lr, real beta1, real beta2, real eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    t_.assign(params_.size(), 0);
    for (const auto& p : params_) {
        check(p->requires_grad, "Adam: parameter does not require grad");
        m_.push_back(Tensor::zeros(p->value.shape()));
        v_.push_back(Tensor::zeros(p->value.shape()));
    }
}

void Adam::step() {
    for (size_t i = 0; i < params_.size(); ++i) {
        Node& p = *params_[i];
        if (!p.has_grad()) continue;
        ++t_[i];
        const real bc1 = 1.0 - std::pow(beta1_, static_cast<real>(t_[i]));
        const real bc2 = 1.0 - std::pow(beta2_, static_cast<real>(t_[i]));
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        const int64_t n = p.value.numel();
        for (int64_t j = 0; j < n; ++j) {
            const real g = p.grad[j];
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
            p.value[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p->clear_grad();
}

void Adam::load_state(size_t i, Tensor m, Tensor v, int64_t t) {
    check(i < params_.size(), "Adam::load_state: index out of range");
    check_shape(m.same_shape(params_[i]->value) && v.same_shape(params_[i]->value),
                "Adam::load_state: moment shape mismatch for " + params_[i]->name);
    m_[i] = std::move(m);
    v_[i] = std::move(v);
    t_[i] = t;
}

}  // namespace vseg
