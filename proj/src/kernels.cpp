#include "habitus/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace habitus::kernels {

namespace {
std::atomic<bool> g_parallel{true};

constexpr int kColBlock = 256;  // columns of C touched per k sweep; keeps 4 C rows in L1
}  // namespace

void set_parallel(bool enabled) { g_parallel.store(enabled); }
bool parallel_enabled() { return g_parallel.load(); }

namespace {

// 4-row panel: C[i..i+r) += A[i..i+r) * B. Each C element is accumulated
// over k in ascending order, independent of blocking or thread count.
inline void gemm_panel(int rows, int N, int K, const double* A, int lda, const double* B,
                       int ldb, double* C, int ldc) {
    for (int jb = 0; jb < N; jb += kColBlock) {
        const int je = std::min(N, jb + kColBlock);
        if (rows == 4) {
            double* c0 = C;
            double* c1 = C + ldc;
            double* c2 = C + 2 * ldc;
            double* c3 = C + 3 * ldc;
            for (int k = 0; k < K; ++k) {
                const double a0 = A[k];
                const double a1 = A[lda + k];
                const double a2 = A[2 * lda + k];
                const double a3 = A[3 * lda + k];
                const double* b = B + static_cast<std::size_t>(k) * ldb;
                for (int j = jb; j < je; ++j) {
                    const double bj = b[j];
                    c0[j] += a0 * bj;
                    c1[j] += a1 * bj;
                    c2[j] += a2 * bj;
                    c3[j] += a3 * bj;
                }
            }
        } else {
            for (int r = 0; r < rows; ++r) {
                double* c = C + static_cast<std::size_t>(r) * ldc;
                for (int k = 0; k < K; ++k) {
                    const double a = A[static_cast<std::size_t>(r) * lda + k];
                    const double* b = B + static_cast<std::size_t>(k) * ldb;
                    for (int j = jb; j < je; ++j) c[j] += a * b[j];
                }
            }
        }
    }
}

}  // namespace

void gemm(int M, int N, int K, const double* A, int lda, const double* B, int ldb, double* C,
          int ldc, bool accumulate) {
    if (!accumulate) {
        for (int i = 0; i < M; ++i)
            std::memset(C + static_cast<std::size_t>(i) * ldc, 0, sizeof(double) * N);
    }
    const int panels = (M + 3) / 4;
#pragma omp parallel for schedule(static) if (parallel_enabled() && panels > 1)
    for (int p = 0; p < panels; ++p) {
        const int i = p * 4;
        const int rows = std::min(4, M - i);
        gemm_panel(rows, N, K, A + static_cast<std::size_t>(i) * lda, lda, B, ldb,
                   C + static_cast<std::size_t>(i) * ldc, ldc);
    }
}

void gemm_nt(int M, int N, int K, const double* A, int lda, const double* B, int ldb, double* C,
             int ldc, bool accumulate) {
#pragma omp parallel for schedule(static) if (parallel_enabled() && M > 1)
    for (int i = 0; i < M; ++i) {
        const double* a = A + static_cast<std::size_t>(i) * lda;
        double* c = C + static_cast<std::size_t>(i) * ldc;
        for (int j = 0; j < N; ++j) {
            const double* b = B + static_cast<std::size_t>(j) * ldb;
            double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
            int k = 0;
            for (; k + 4 <= K; k += 4) {
                s0 += a[k] * b[k];
                s1 += a[k + 1] * b[k + 1];
                s2 += a[k + 2] * b[k + 2];
                s3 += a[k + 3] * b[k + 3];
            }
            double s = (s0 + s1) + (s2 + s3);
            for (; k < K; ++k) s += a[k] * b[k];
            c[j] = accumulate ? c[j] + s : s;
        }
    }
}

void transpose(int M, int N, const double* src, double* dst) {
#pragma omp parallel for schedule(static) if (parallel_enabled() && M >= 64)
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < N; ++j)
            dst[static_cast<std::size_t>(j) * M + i] = src[static_cast<std::size_t>(i) * N + j];
}

namespace {

// im2col: cols is (in_c*k*k) x (out_h*out_w), rows ordered (ci, kh, kw).
void im2col(const Conv2dShape& s, const double* x, double* cols) {
    const int oh = s.out_h(), ow = s.out_w();
    const std::size_t plane = static_cast<std::size_t>(s.in_h) * s.in_w;
    std::size_t row = 0;
    for (int ci = 0; ci < s.in_c; ++ci) {
        for (int kh = 0; kh < s.kernel; ++kh) {
            for (int kw = 0; kw < s.kernel; ++kw, ++row) {
                double* dst = cols + row * (static_cast<std::size_t>(oh) * ow);
                const double* src = x + ci * plane;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * s.stride - s.pad + kh;
                    if (iy < 0 || iy >= s.in_h) {
                        std::memset(dst + static_cast<std::size_t>(oy) * ow, 0, sizeof(double) * ow);
                        continue;
                    }
                    const double* srow = src + static_cast<std::size_t>(iy) * s.in_w;
                    double* drow = dst + static_cast<std::size_t>(oy) * ow;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * s.stride - s.pad + kw;
                        drow[ox] = (ix >= 0 && ix < s.in_w) ? srow[ix] : 0.0;
                    }
                }
            }
        }
    }
}

struct Scratch {
    std::vector<double> cols;
    std::vector<double> cols_t;
    std::vector<double> w_t;
};

Scratch& scratch() {
    thread_local Scratch s;
    return s;
}

}  // namespace

void conv2d_forward(const Conv2dShape& s, int n, const double* x, const double* w,
                    const double* bias, double* y) {
    const int oh = s.out_h(), ow = s.out_w();
    const std::size_t in_sz = static_cast<std::size_t>(s.in_c) * s.in_h * s.in_w;
    const std::size_t out_sz = static_cast<std::size_t>(s.out_c) * oh * ow;
    const int K = s.in_c * s.kernel * s.kernel;

    if (s.kernel == 1 && s.stride == 1 && s.pad == 0) {
        // one thread per image; the inner gemm runs serially inside the
        // parallel region, so per-element arithmetic order is unchanged
#pragma omp parallel for schedule(static) if (parallel_enabled() && n > 1)
        for (int i = 0; i < n; ++i)
            gemm(s.out_c, oh * ow, K, w, K, x + i * in_sz, oh * ow, y + i * out_sz, oh * ow,
                 false);
    } else {
#pragma omp parallel for schedule(static) if (parallel_enabled() && n > 1)
        for (int i = 0; i < n; ++i) {
            auto& sc = scratch();
            sc.cols.resize(static_cast<std::size_t>(K) * oh * ow);
            im2col(s, x + i * in_sz, sc.cols.data());
            gemm(s.out_c, oh * ow, K, w, K, sc.cols.data(), oh * ow, y + i * out_sz, oh * ow,
                 false);
        }
    }
    if (bias) {
        const std::size_t hw = static_cast<std::size_t>(oh) * ow;
#pragma omp parallel for schedule(static) if (parallel_enabled() && n * s.out_c > 1)
        for (int ic = 0; ic < n * s.out_c; ++ic) {
            double* row = y + ic * hw;
            const double b = bias[ic % s.out_c];
            for (std::size_t j = 0; j < hw; ++j) row[j] += b;
        }
    }
}

void conv2d_forward_naive(const Conv2dShape& s, int n, const double* x, const double* w,
                          const double* bias, double* y) {
    const int oh = s.out_h(), ow = s.out_w();
    const std::size_t in_sz = static_cast<std::size_t>(s.in_c) * s.in_h * s.in_w;
    std::size_t idx = 0;
    for (int i = 0; i < n; ++i) {
        const double* xi = x + i * in_sz;
        for (int co = 0; co < s.out_c; ++co) {
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox, ++idx) {
                    double acc = bias ? bias[co] : 0.0;
                    for (int ci = 0; ci < s.in_c; ++ci) {
                        for (int kh = 0; kh < s.kernel; ++kh) {
                            const int iy = oy * s.stride - s.pad + kh;
                            if (iy < 0 || iy >= s.in_h) continue;
                            for (int kw = 0; kw < s.kernel; ++kw) {
                                const int ix = ox * s.stride - s.pad + kw;
                                if (ix < 0 || ix >= s.in_w) continue;
                                acc += xi[(static_cast<std::size_t>(ci) * s.in_h + iy) * s.in_w + ix] *
                                       w[((static_cast<std::size_t>(co) * s.in_c + ci) * s.kernel + kh) *
                                             s.kernel +
                                         kw];
                            }
                        }
                    }
                    y[idx] = acc;
                }
            }
        }
    }
}

namespace {

// scatter-add of dcols (in_c*k*k x out_h*out_w) back onto the input plane
void col2im(const Conv2dShape& s, const double* dcols, double* dx) {
    const int oh = s.out_h(), ow = s.out_w();
    std::size_t row = 0;
    for (int ci = 0; ci < s.in_c; ++ci) {
        double* dst = dx + static_cast<std::size_t>(ci) * s.in_h * s.in_w;
        for (int kh = 0; kh < s.kernel; ++kh) {
            for (int kw = 0; kw < s.kernel; ++kw, ++row) {
                const double* src = dcols + row * (static_cast<std::size_t>(oh) * ow);
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * s.stride - s.pad + kh;
                    if (iy < 0 || iy >= s.in_h) continue;
                    double* drow = dst + static_cast<std::size_t>(iy) * s.in_w;
                    const double* srow = src + static_cast<std::size_t>(oy) * ow;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * s.stride - s.pad + kw;
                        if (ix >= 0 && ix < s.in_w) drow[ix] += srow[ox];
                    }
                }
            }
        }
    }
}

}  // namespace

void conv2d_backward_data(const Conv2dShape& s, int n, const double* dy, const double* w,
                          double* dx) {
    const int oh = s.out_h(), ow = s.out_w();
    const int hw = oh * ow;
    const std::size_t in_sz = static_cast<std::size_t>(s.in_c) * s.in_h * s.in_w;
    const std::size_t out_sz = static_cast<std::size_t>(s.out_c) * hw;
    const int K = s.in_c * s.kernel * s.kernel;

    auto& sc = scratch();
    sc.w_t.resize(static_cast<std::size_t>(K) * s.out_c);
    transpose(s.out_c, K, w, sc.w_t.data());

    if (s.kernel == 1 && s.stride == 1 && s.pad == 0) {
#pragma omp parallel for schedule(static) if (parallel_enabled() && n > 1)
        for (int i = 0; i < n; ++i)
            gemm(s.in_c, hw, s.out_c, sc.w_t.data(), s.out_c, dy + i * out_sz, hw,
                 dx + i * in_sz, hw, false);
        return;
    }
    std::memset(dx, 0, sizeof(double) * in_sz * n);
#pragma omp parallel for schedule(static) if (parallel_enabled() && n > 1)
    for (int i = 0; i < n; ++i) {
        auto& tsc = scratch();
        tsc.cols.resize(static_cast<std::size_t>(K) * hw);
        gemm(K, hw, s.out_c, sc.w_t.data(), s.out_c, dy + i * out_sz, hw, tsc.cols.data(), hw,
             false);
        col2im(s, tsc.cols.data(), dx + i * in_sz);
    }
}

void conv2d_backward_weights(const Conv2dShape& s, int n, const double* dy, const double* x,
                             double* dw, double* dbias) {
    const int oh = s.out_h(), ow = s.out_w();
    const int hw = oh * ow;
    const std::size_t in_sz = static_cast<std::size_t>(s.in_c) * s.in_h * s.in_w;
    const std::size_t out_sz = static_cast<std::size_t>(s.out_c) * hw;
    const int K = s.in_c * s.kernel * s.kernel;

    auto& sc = scratch();

    // Images are reduced in ascending order; parallelism lives inside the
    // gemm, so the accumulation order per dw element never changes.
    for (int i = 0; i < n; ++i) {
        const double* cols = nullptr;
        if (s.kernel == 1 && s.stride == 1 && s.pad == 0) {
            cols = x + i * in_sz;
        } else {
            sc.cols.resize(static_cast<std::size_t>(K) * hw);
            im2col(s, x + i * in_sz, sc.cols.data());
            cols = sc.cols.data();
        }
        gemm_nt(s.out_c, K, hw, dy + i * out_sz, hw, cols, hw, dw, K, true);
    }
    if (dbias) {
#pragma omp parallel for schedule(static) if (parallel_enabled() && s.out_c > 1)
        for (int co = 0; co < s.out_c; ++co) {
            double acc = dbias[co];
            for (int i = 0; i < n; ++i) {
                const double* row = dy + i * out_sz + static_cast<std::size_t>(co) * hw;
                for (int j = 0; j < hw; ++j) acc += row[j];
            }
            dbias[co] = acc;
        }
    }
}

namespace {

inline int reflect101(int idx, int n) {
    if (n == 1) return 0;
    while (idx < 0 || idx >= n) {
        if (idx < 0) idx = -idx;
        if (idx >= n) idx = 2 * n - 2 - idx;
    }
    return idx;
}

}  // namespace

GrayImage gaussian_blur(const GrayImage& img, int kernel_size, double sigma) {
    if (kernel_size < 1 || kernel_size % 2 == 0)
        throw Error("kernels", "Gaussian kernel size must be odd and >= 1");
    const int r = kernel_size / 2;
    std::vector<double> k(kernel_size);
    double sum = 0.0;
    for (int i = 0; i < kernel_size; ++i) {
        const double d = i - r;
        k[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;

    GrayImage tmp(img.width, img.height);
#pragma omp parallel for schedule(static) if (parallel_enabled() && img.height > 1)
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double acc = 0.0;
            for (int t = -r; t <= r; ++t) acc += k[t + r] * img.at(y, reflect101(x + t, img.width));
            tmp.at(y, x) = acc;
        }
    }
    GrayImage out(img.width, img.height);
#pragma omp parallel for schedule(static) if (parallel_enabled() && img.height > 1)
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double acc = 0.0;
            for (int t = -r; t <= r; ++t) acc += k[t + r] * tmp.at(reflect101(y + t, img.height), x);
            out.at(y, x) = acc;
        }
    }
    return out;
}

namespace {

// 1-D squared distance transform of sampled function f (Felzenszwalb &
// Huttenlocher lower envelope of parabolas).
void dt1d(const double* f, int n, double* d, int* v, double* z) {
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
        double s;
        while (true) {
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
            if (s <= z[k]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

}  // namespace

GrayImage edt_squared(const MaskImage& mask, std::uint8_t zero_level) {
    const int w = mask.width, h = mask.height;
    const double inf = 1e18;
    GrayImage dist(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            dist.at(y, x) = ((mask.at(y, x) != 0) == (zero_level != 0)) ? 0.0 : inf;

#pragma omp parallel if (parallel_enabled() && (w > 1 || h > 1))
    {
        std::vector<double> f(std::max(w, h)), d(std::max(w, h));
        std::vector<int> v(std::max(w, h));
        std::vector<double> z(std::max(w, h) + 1);
#pragma omp for schedule(static)
        for (int x = 0; x < w; ++x) {  // columns
            for (int y = 0; y < h; ++y) f[y] = dist.at(y, x);
            dt1d(f.data(), h, d.data(), v.data(), z.data());
            for (int y = 0; y < h; ++y) dist.at(y, x) = d[y];
        }
#pragma omp for schedule(static)
        for (int y = 0; y < h; ++y) {  // rows
            for (int x = 0; x < w; ++x) f[x] = dist.at(y, x);
            dt1d(f.data(), w, d.data(), v.data(), z.data());
            for (int x = 0; x < w; ++x) dist.at(y, x) = d[x];
        }
    }
    return dist;
}

GrayImage bilinear_upsample(const GrayImage& src, int factor) {
    if (factor < 1) throw Error("kernels", "upsample factor must be >= 1");
    const int oh = src.height * factor, ow = src.width * factor;
    GrayImage out(ow, oh);
#pragma omp parallel for schedule(static) if (parallel_enabled() && oh > 1)
    for (int y = 0; y < oh; ++y) {
        const double sy = std::clamp((y + 0.5) / factor - 0.5, 0.0, src.height - 1.0);
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, src.height - 1);
        const double fy = sy - y0;
        for (int x = 0; x < ow; ++x) {
            const double sx = std::clamp((x + 0.5) / factor - 0.5, 0.0, src.width - 1.0);
            const int x0 = static_cast<int>(sx);
            const int x1 = std::min(x0 + 1, src.width - 1);
            const double fx = sx - x0;
            const double top = src.at(y0, x0) * (1.0 - fx) + src.at(y0, x1) * fx;
            const double bot = src.at(y1, x0) * (1.0 - fx) + src.at(y1, x1) * fx;
            out.at(y, x) = top * (1.0 - fy) + bot * fy;
        }
    }
    return out;
}

}  // namespace habitus::kernels
