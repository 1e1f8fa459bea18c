#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "pmdx/errors.hpp"

namespace pmdx {

// Dense row-major tensor of doubles. All training math runs in 64-bit;
// checkpoints quantize to float32 at the serialization boundary.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(count(shape), 0.0);
    }

    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<size_t>(count(shape)) != data.size())
            throw ShapeError("tensor data does not match shape");
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

    static Tensor scalar(double v) {
        Tensor t({1});
        t.data[0] = v;
        return t;
    }

    static Tensor vec(std::vector<double> d) {
        const int n = static_cast<int>(d.size());
        return Tensor({n}, std::move(d));
    }

    static int count(const std::vector<int>& s) {
        int n = 1;
        for (int k : s) {
            if (k < 0) throw ShapeError("negative dimension");
            n *= k;
        }
        return n;
    }

    int size() const { return static_cast<int>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    double& operator[](int i) { return data[static_cast<size_t>(i)]; }
    double operator[](int i) const { return data[static_cast<size_t>(i)]; }

    // 2-D access (row-major).
    double& at(int r, int c) { return data[static_cast<size_t>(r) * shape[1] + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * shape[1] + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double norm2() const {
        double s = 0.0;
        for (double v : data) s += v * v;
        return std::sqrt(s);
    }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(where) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

} // namespace pmdx
