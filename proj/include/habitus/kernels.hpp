#pragma once

#include <cstddef>
#include <vector>

#include "habitus/image.hpp"

// Data-parallel inner loops used across the project. Every kernel has one
// implementation whose parallel variant only changes which thread owns which
// output element; per-element arithmetic order is identical, so serial and
// parallel results are bit-equal. kernels::set_parallel(false) forces the
// serial path (used by tests and the benchmark).
namespace habitus::kernels {

void set_parallel(bool enabled);
bool parallel_enabled();

// C (+)= A * B, row-major. A is M x K (leading dim lda), B is K x N (ldb),
// C is M x N (ldc). Accumulation over k is strictly ascending per element.
void gemm(int M, int N, int K, const double* A, int lda, const double* B, int ldb,
          double* C, int ldc, bool accumulate);

// C (+)= A * B^T: C[i][j] accumulates sum_k A[i][k] * B[j][k] with a fixed
// 4-way unrolled summation order.
void gemm_nt(int M, int N, int K, const double* A, int lda, const double* B, int ldb,
             double* C, int ldc, bool accumulate);

// dst (N x M) = transpose of src (M x N), row-major.
void transpose(int M, int N, const double* src, double* dst);

struct Conv2dShape {
    int in_c = 0, in_h = 0, in_w = 0;
    int out_c = 0, kernel = 1, stride = 1, pad = 0;
    int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
    int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
};

// x: (n, in_c, in_h, in_w), w: (out_c, in_c, k, k), bias: out_c or null.
// y: (n, out_c, out_h, out_w).
void conv2d_forward(const Conv2dShape& s, int n, const double* x, const double* w,
                    const double* bias, double* y);
// Naive reference used by the test suite; same contract as conv2d_forward.
void conv2d_forward_naive(const Conv2dShape& s, int n, const double* x, const double* w,
                          const double* bias, double* y);

// dy -> dx (gradient w.r.t. input). dx is overwritten.
void conv2d_backward_data(const Conv2dShape& s, int n, const double* dy, const double* w,
                          double* dx);
// dy, x -> dw/dbias accumulated in place (caller zeroes them first when needed).
void conv2d_backward_weights(const Conv2dShape& s, int n, const double* dy, const double* x,
                             double* dw, double* dbias);

// Separable Gaussian blur, reflect-101 borders, kernel normalised to sum 1.
GrayImage gaussian_blur(const GrayImage& img, int kernel_size, double sigma);

// Exact squared Euclidean distance transform (Felzenszwalb-Huttenlocher).
// Distances are measured to the nearest pixel where `mask` equals
// `zero_level` (so zero_level=1 gives distance-to-foreground, used for
// dilation; zero_level=0 gives distance-to-background, used for edge bands).
GrayImage edt_squared(const MaskImage& mask, std::uint8_t zero_level);

// Bilinear upsampling with half-pixel centre mapping
// src = (dst + 0.5) / factor - 0.5, clamped to borders.
GrayImage bilinear_upsample(const GrayImage& src, int factor);

}  // namespace habitus::kernels
