#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace lprune {

// Dense row-major float32 tensor. Reductions over its contents accumulate in
// double; see kernels.hpp.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;

    static int64_t count(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) {
            if (d < 0) throw std::runtime_error("tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) {
        Tensor t;
        t.data.assign(static_cast<size_t>(count(s)), 0.0f);
        t.shape = std::move(s);
        return t;
    }

    static Tensor full(std::vector<int> s, float v) {
        Tensor t = zeros(std::move(s));
        for (float& x : t.data) x = v;
        return t;
    }

    static Tensor from(std::vector<int> s, std::vector<float> values) {
        if (count(s) != static_cast<int64_t>(values.size()))
            throw std::runtime_error("tensor: value count does not match shape");
        Tensor t;
        t.shape = std::move(s);
        t.data = std::move(values);
        return t;
    }

    int64_t size() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }

    int dim(int i) const {
        if (i < 0 || i >= rank()) throw std::runtime_error("tensor: dim index out of range");
        return shape[static_cast<size_t>(i)];
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    bool all_finite() const {
        for (float x : data)
            if (!std::isfinite(x)) return false;
        return true;
    }

    void fill(float v) {
        for (float& x : data) x = v;
    }

    // flat accessors; callers do their own index arithmetic
    float* ptr() { return data.data(); }
    const float* ptr() const { return data.data(); }
};

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    out += ")";
    return out;
}

}  // namespace lprune
