#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kcascade {

using real_t = double;

/// Dense row-major real tensor. Shape is fixed at construction.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape, real_t fill = 0.0)
        : shape_(std::move(shape)) {
        std::int64_t n = 1;
        for (int d : shape_) {
            if (d <= 0) throw std::invalid_argument("Tensor: nonpositive dimension");
            n *= d;
        }
        data_.assign(static_cast<std::size_t>(n), fill);
    }

    Tensor(std::vector<int> shape, std::vector<real_t> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        std::int64_t n = 1;
        for (int d : shape_) {
            if (d <= 0) throw std::invalid_argument("Tensor: nonpositive dimension");
            n *= d;
        }
        if (static_cast<std::int64_t>(data_.size()) != n)
            throw std::invalid_argument("Tensor: data length does not match shape");
    }

    static Tensor scalar(real_t v) { return Tensor({1}, v); }

    static Tensor randn(std::vector<int> shape, std::mt19937_64& rng,
                        real_t stddev = 1.0) {
        Tensor t(std::move(shape));
        std::normal_distribution<real_t> dist(0.0, stddev);
        for (auto& v : t.data_) v = dist(rng);
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    int ndim() const { return static_cast<int>(shape_.size()); }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

    real_t* data() { return data_.data(); }
    const real_t* data() const { return data_.data(); }
    std::span<real_t> values() { return data_; }
    std::span<const real_t> values() const { return data_; }

    real_t& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    real_t operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

    bool requires_grad = false;

private:
    std::vector<int> shape_;
    std::vector<real_t> data_;
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    a.shape_str() + " vs " + b.shape_str());
}

inline real_t norm2(const Tensor& t) {
    real_t s = 0;
    for (real_t v : t.values()) s += v * v;
    return std::sqrt(s);
}

inline real_t dot(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "dot");
    real_t s = 0;
    for (std::int64_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace kcascade
