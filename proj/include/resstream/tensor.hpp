#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace resstream {

/// Dense float32 tensor, row-major. Activations and images are CHW,
/// convolution weights are {out, in, kh, kw}.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape)
        : shape_(std::move(shape)), data_(checked_numel(shape_), 0.0f) {}
    Tensor(std::vector<int> shape, std::vector<float> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<int64_t>(data_.size()) != checked_numel(shape_))
            throw std::invalid_argument("Tensor: data size does not match shape");
    }

    static Tensor full(std::vector<int> shape, float value) {
        Tensor t(std::move(shape));
        for (auto& v : t.data_) v = value;
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& vec() { return data_; }
    const std::vector<float>& vec() const { return data_; }

    // CHW accessors.
    float& at(int c, int y, int x) {
        return data_[(static_cast<int64_t>(c) * shape_[1] + y) * shape_[2] + x];
    }
    float at(int c, int y, int x) const {
        return data_[(static_cast<int64_t>(c) * shape_[1] + y) * shape_[2] + x];
    }
    float* plane(int c) {
        return data_.data() + static_cast<int64_t>(c) * shape_[1] * shape_[2];
    }
    const float* plane(int c) const {
        return data_.data() + static_cast<int64_t>(c) * shape_[1] * shape_[2];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (float v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

private:
    static int64_t checked_numel(const std::vector<int>& shape) {
        int64_t n = 1;
        for (int d : shape) {
            if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    std::vector<int> shape_;
    std::vector<float> data_;
};

inline void add_inplace(Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("add_inplace: shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
    float* pa = a.data();
    const float* pb = b.data();
    for (int64_t i = 0, n = a.numel(); i < n; ++i) pa[i] += pb[i];
}

}  // namespace resstream
