#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace erlab {

// Dense row-major tensor of 64-bit floats. Rank 0 (scalar), 1 (row vector)
// and 2 (matrix) are the shapes the graph ops work with.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> values;
    bool requires_grad = false;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
        if (numel_of(shape) != values.size()) {
            throw std::invalid_argument("tensor: shape does not match value count");
        }
    }

    static size_t numel_of(const std::vector<int>& s) {
        size_t n = 1;
        for (int d : s) {
            if (d <= 0) throw std::invalid_argument("tensor: nonpositive dimension");
            n *= static_cast<size_t>(d);
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) {
        size_t n = numel_of(s);
        return Tensor(std::move(s), std::vector<double>(n, 0.0));
    }

    static Tensor full(std::vector<int> s, double v) {
        size_t n = numel_of(s);
        return Tensor(std::move(s), std::vector<double>(n, v));
    }

    static Tensor scalar(double v) { return Tensor({}, {v}); }

    size_t numel() const { return values.size(); }
    int rank() const { return static_cast<int>(shape.size()); }

    // rank<=2 view: scalars are 1x1, rank-1 vectors are 1xn row vectors
    int rows() const {
        if (shape.size() == 2) return shape[0];
        return 1;
    }
    int cols() const {
        if (shape.size() == 2) return shape[1];
        if (shape.size() == 1) return shape[0];
        return 1;
    }

    double& at(int r, int c) { return values[static_cast<size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return values[static_cast<size_t>(r) * cols() + c]; }

    double item() const {
        if (values.size() != 1) throw std::invalid_argument("tensor: item() on non-scalar");
        return values[0];
    }

    bool all_finite() const {
        for (double v : values) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::string s = "(";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + ")";
    }
};

}  // namespace erlab
