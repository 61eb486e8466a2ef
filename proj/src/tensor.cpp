#include "vseg/tensor.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace vseg {

int64_t numel_of(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        check_shape(d >= 0, "negative dimension");
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(numel_of(shape_)), 0.0);
}

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<int> shape, real v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

Tensor Tensor::scalar(real v) {
    Tensor t({1});
    t[0] = v;
    return t;
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, real stddev) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = stddev * rng.normal();
    return t;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << "]";
    return os.str();
}

void Tensor::fill(real v) {
    for (auto& x : data_) x = v;
}

real Tensor::min() const {
    real m = std::numeric_limits<real>::infinity();
    for (real x : data_) m = std::min(m, x);
    return m;
}

real Tensor::max() const {
    real m = -std::numeric_limits<real>::infinity();
    for (real x : data_) m = std::max(m, x);
    return m;
}

real Tensor::sum() const {
    real s = 0;
    for (real x : data_) s += x;
    return s;
}

real Tensor::mean() const { return numel() ? sum() / static_cast<real>(numel()) : 0.0; }

bool Tensor::all_finite() const {
    for (real x : data_)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace vseg
