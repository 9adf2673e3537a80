#pragma once

#include <cstddef>
#include <vector>

#include "habitus/common.hpp"

namespace habitus {

// Dense NCHW tensor of 64-bit reals.
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_, double fill = 0.0)
        : n(n_), c(c_), h(h_), w(w_), v(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

    std::size_t size() const { return v.size(); }
    std::size_t chw() const { return static_cast<std::size_t>(c) * h * w; }
    std::size_t hw() const { return static_cast<std::size_t>(h) * w; }

    double& at(int i, int k, int y, int x) {
        return v[((static_cast<std::size_t>(i) * c + k) * h + y) * w + x];
    }
    double at(int i, int k, int y, int x) const {
        return v[((static_cast<std::size_t>(i) * c + k) * h + y) * w + x];
    }
    double* plane(int i, int k) { return v.data() + (static_cast<std::size_t>(i) * c + k) * hw(); }
    const double* plane(int i, int k) const {
        return v.data() + (static_cast<std::size_t>(i) * c + k) * hw();
    }
    double* sample(int i) { return v.data() + static_cast<std::size_t>(i) * chw(); }
    const double* sample(int i) const { return v.data() + static_cast<std::size_t>(i) * chw(); }

    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
    void check_finite(const char* what) const;
};

// Per-sample class scores, row-major (n x k).
struct Logits {
    int n = 0, k = 0;
    std::vector<double> v;

    Logits() = default;
    Logits(int n_, int k_, double fill = 0.0)
        : n(n_), k(k_), v(static_cast<std::size_t>(n_) * k_, fill) {}
    double& at(int i, int j) { return v[static_cast<std::size_t>(i) * k + j]; }
    double at(int i, int j) const { return v[static_cast<std::size_t>(i) * k + j]; }
    const double* row(int i) const { return v.data() + static_cast<std::size_t>(i) * k; }
};

int argmax_row(const double* row, int k);  // ties resolved to the lowest index

}  // namespace habitus
