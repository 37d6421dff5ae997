#pragma once

#include <cstdint>
#include <vector>

// Hot inner loops, parallelized with OpenMP across independent output rows.
// Each output element is owned by one thread and receives its contributions
// in an order fixed by the loop nest (reductions are split into a fixed set
// of lanes), so results are bit-identical for any thread count, including 1.
//
// kernels::serial holds the plain single-threaded reference for each kernel.
// Tests assert bitwise equality against it and tools/bench_kernels.cpp times
// the two side by side.

namespace lprune::kernels {

// out_len for a 1-d convolution; <= 0 means the configuration is invalid
inline int conv1d_out_len(int in_len, int kernel, int stride, int padding) {
    return (in_len + 2 * padding - kernel) / stride + 1;
}

// y[b, oc, ol] = sum_{ic, k} w[oc, ic, k] * x[b, ic, ol*stride - pad + k] (+ bias[oc])
void conv1d_forward(const float* x, int b, int in_ch, int in_len,
                    const float* w, const float* bias, int out_ch, int kernel,
                    int stride, int padding, float* y, int out_len);

// dx[b, ic, il] = sum_{oc, k : il = ol*stride - pad + k} w[oc, ic, k] * dy[b, oc, ol]
void conv1d_backward_input(const float* dy, int b, int in_ch, int in_len,
                           const float* w, int out_ch, int kernel, int stride,
                           int padding, float* dx, int out_len);

// dw[oc, ic, k] = sum_{b, ol} x[b, ic, ol*stride - pad + k] * dy[b, oc, ol]
// db[oc]        = sum_{b, ol} dy[b, oc, ol]           (db may be null)
void conv1d_backward_params(const float* x, const float* dy, int b, int in_ch,
                            int in_len, int out_ch, int kernel, int stride,
                            int padding, float* dw, float* db, int out_len);

// y[b, o] = sum_i w[o, i] * x[b, i] (+ bias[o])
void dense_forward(const float* x, int b, int in_dim, const float* w,
                   const float* bias, int out_dim, float* y);

// dx[b, i] = sum_o dy[b, o] * w[o, i]
void dense_backward_input(const float* dy, const float* w, int b, int in_dim,
                          int out_dim, float* dx);

// dw[o, i] = sum_b dy[b, o] * x[b, i];  db[o] = sum_b dy[b, o] (db may be null)
void dense_backward_params(const float* x, const float* dy, int b, int in_dim,
                           int out_dim, float* dw, float* db);

// k[i, j] = sum_d f[i, d] * f[j, d]; k is b x b, double precision, symmetric
void gram(const float* f, int b, int d, double* k);

namespace serial {

void conv1d_forward(const float* x, int b, int in_ch, int in_len,
                    const float* w, const float* bias, int out_ch, int kernel,
                    int stride, int padding, float* y, int out_len);
void conv1d_backward_input(const float* dy, int b, int in_ch, int in_len,
                           const float* w, int out_ch, int kernel, int stride,
                           int padding, float* dx, int out_len);
void conv1d_backward_params(const float* x, const float* dy, int b, int in_ch,
                            int in_len, int out_ch, int kernel, int stride,
                            int padding, float* dw, float* db, int out_len);
void dense_forward(const float* x, int b, int in_dim, const float* w,
                   const float* bias, int out_dim, float* y);
void dense_backward_input(const float* dy, const float* w, int b, int in_dim,
                          int out_dim, float* dx);
void dense_backward_params(const float* x, const float* dy, int b, int in_dim,
                           int out_dim, float* dw, float* db);
void gram(const float* f, int b, int d, double* k);

}  // namespace serial

}  // namespace lprune::kernels
