#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vseg/common.hpp"
#include "vseg/rng.hpp"

namespace vseg {

// Dense row-major tensor. Image batches are NCHW.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, real v);
    static Tensor scalar(real v);
    static Tensor randn(std::vector<int> shape, Rng& rng, real stddev = 1.0);

    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    const std::vector<int>& shape() const { return shape_; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    real* data() { return data_.data(); }
    const real* data() const { return data_.data(); }
    real& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    real operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    real& at4(int n, int c, int h, int w) {
        return data_[((static_cast<int64_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    real at4(int n, int c, int h, int w) const {
        return data_[((static_cast<int64_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    std::string shape_str() const;

    void fill(real v);
    Tensor clone() const { return *this; }

    real min() const;
    real max() const;
    real sum() const;
    real mean() const;
    bool all_finite() const;

  private:
    std::vector<int> shape_;
    RealVec data_;
};

int64_t numel_of(const std::vector<int>& shape);

}  // namespace vseg
