#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "spr/common.hpp"

namespace spr {

/// Dense n-dimensional array of doubles, row-major. The universal numeric
/// carrier for batches, weights and gradients.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(numel_of(shape), 0.0);
    }

    Tensor(std::vector<int> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        require(data.size() == numel_of(shape),
                "tensor shape/data mismatch: shape wants " +
                    std::to_string(numel_of(shape)) + " values, got " +
                    std::to_string(data.size()));
    }

    static std::size_t numel_of(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int e : s) {
            require(e > 0, "tensor extents must be positive");
            n *= static_cast<std::size_t>(e);
        }
        return n;
    }

    std::size_t numel() const { return data.size(); }
    int dim() const { return static_cast<int>(shape.size()); }

    double& at2(int i, int j) { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
    double at2(int i, int j) const { return data[static_cast<std::size_t>(i) * shape[1] + j]; }

    std::size_t idx4(int a, int b, int c, int d) const {
        return ((static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d;
    }
    double& at4(int a, int b, int c, int d) { return data[idx4(a, b, c, d)]; }
    double at4(int a, int b, int c, int d) const { return data[idx4(a, b, c, d)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    /// Shape as "AxBxC" for error messages.
    std::string shape_str() const {
        std::string s;
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s.empty() ? "scalar" : s;
    }
};

/// Throws if any entry is NaN/Inf. `where` names the producing op.
inline void ensure_finite(const Tensor& t, const std::string& where) {
    for (double v : t.data)
        if (!is_finite(v)) throw NumericError("non-finite value in " + where);
}

inline void ensure_finite(const std::vector<double>& v, const std::string& where) {
    for (double x : v)
        if (!is_finite(x)) throw NumericError("non-finite value in " + where);
}

}  // namespace spr
