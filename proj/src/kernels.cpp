#include "lprune/kernels.hpp"

namespace lprune::kernels {

namespace {

// Fixed-order reduction helpers shared by the omp kernels and their serial
// twins: eight independent float lanes (four double lanes) that the compiler
// can keep in SIMD registers, combined in a fixed tree. The summation order
// depends only on n, never on the schedule.

inline float dot_f32(const float* a, const float* b, int n) {
    float l0 = 0, l1 = 0, l2 = 0, l3 = 0, l4 = 0, l5 = 0, l6 = 0, l7 = 0;
    int i = 0;
    for (; i + 8 <= n; i += 8) {
        l0 += a[i] * b[i];
        l1 += a[i + 1] * b[i + 1];
        l2 += a[i + 2] * b[i + 2];
        l3 += a[i + 3] * b[i + 3];
        l4 += a[i + 4] * b[i + 4];
        l5 += a[i + 5] * b[i + 5];
        l6 += a[i + 6] * b[i + 6];
        l7 += a[i + 7] * b[i + 7];
    }
    float tail = 0;
    for (; i < n; ++i) tail += a[i] * b[i];
    return (((l0 + l1) + (l2 + l3)) + ((l4 + l5) + (l6 + l7))) + tail;
}

// a is strided, b is contiguous
inline float dot_f32_strided(const float* a, int stride_a, const float* b, int n) {
    float l0 = 0, l1 = 0, l2 = 0, l3 = 0;
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        l0 += a[static_cast<int64_t>(i) * stride_a] * b[i];
        l1 += a[static_cast<int64_t>(i + 1) * stride_a] * b[i + 1];
        l2 += a[static_cast<int64_t>(i + 2) * stride_a] * b[i + 2];
        l3 += a[static_cast<int64_t>(i + 3) * stride_a] * b[i + 3];
    }
    float tail = 0;
    for (; i < n; ++i) tail += a[static_cast<int64_t>(i) * stride_a] * b[i];
    return ((l0 + l1) + (l2 + l3)) + tail;
}

inline double dot_f64(const float* a, const float* b, int n) {
    double l0 = 0, l1 = 0, l2 = 0, l3 = 0;
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        l0 += static_cast<double>(a[i]) * b[i];
        l1 += static_cast<double>(a[i + 1]) * b[i + 1];
        l2 += static_cast<double>(a[i + 2]) * b[i + 2];
        l3 += static_cast<double>(a[i + 3]) * b[i + 3];
    }
    double tail = 0;
    for (; i < n; ++i) tail += static_cast<double>(a[i]) * b[i];
    return ((l0 + l1) + (l2 + l3)) + tail;
}

inline double sum_f32(const float* a, int n) {
    double l0 = 0, l1 = 0, l2 = 0, l3 = 0;
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        l0 += a[i];
        l1 += a[i + 1];
        l2 += a[i + 2];
        l3 += a[i + 3];
    }
    double tail = 0;
    for (; i < n; ++i) tail += a[i];
    return ((l0 + l1) + (l2 + l3)) + tail;
}

// valid ol range for one kernel tap: 0 <= ol*stride + base < in_len
inline void tap_range(int base, int stride, int in_len, int out_len, int& lo, int& hi) {
    lo = base < 0 ? (-base + stride - 1) / stride : 0;
    const int last = in_len - 1 - base;
    hi = last < 0 ? lo : (last / stride + 1 < out_len ? last / stride + 1 : out_len);
    if (hi < lo) hi = lo;
}

// One (batch, out-channel) row of the forward convolution: accumulates the
// kernel taps into the output row in (ic, k) order.
inline void conv1d_forward_row(const float* x, int in_ch, int in_len, const float* w,
                               const float* bias, int kernel, int stride, int padding,
                               float* yr, int out_len) {
    const float bias_v = bias ? *bias : 0.0f;
    for (int ol = 0; ol < out_len; ++ol) yr[ol] = bias_v;
    for (int ic = 0; ic < in_ch; ++ic) {
        const float* xr = x + static_cast<int64_t>(ic) * in_len;
        const float* wr = w + static_cast<int64_t>(ic) * kernel;
        for (int k = 0; k < kernel; ++k) {
            const float wv = wr[k];
            const int base = k - padding;
            int lo, hi;
            tap_range(base, stride, in_len, out_len, lo, hi);
            const float* xk = xr + base;
            if (stride == 1) {
                for (int ol = lo; ol < hi; ++ol) yr[ol] += wv * xk[ol];
            } else {
                for (int ol = lo; ol < hi; ++ol) yr[ol] += wv * xk[static_cast<int64_t>(ol) * stride];
            }
        }
    }
}

// One (batch, in-channel) row of the input gradient: scatters every kernel
// tap of every out-channel back onto the input positions in (oc, k) order.
inline void conv1d_backward_input_row(const float* dy, int out_ch, int out_len, const float* w,
                                      int in_ch, int ic, int kernel, int stride, int padding,
                                      float* dxr, int in_len) {
    for (int il = 0; il < in_len; ++il) dxr[il] = 0.0f;
    for (int oc = 0; oc < out_ch; ++oc) {
        const float* dyr = dy + static_cast<int64_t>(oc) * out_len;
        const float* wr = w + (static_cast<int64_t>(oc) * in_ch + ic) * kernel;
        for (int k = 0; k < kernel; ++k) {
            const float wv = wr[k];
            const int base = k - padding;
            int lo, hi;
            tap_range(base, stride, in_len, out_len, lo, hi);
            float* dxk = dxr + base;
            if (stride == 1) {
                for (int ol = lo; ol < hi; ++ol) dxk[ol] += wv * dyr[ol];
            } else {
                for (int ol = lo; ol < hi; ++ol) dxk[static_cast<int64_t>(ol) * stride] += wv * dyr[ol];
            }
        }
    }
}

// All weight/bias gradients of one out-channel, accumulated per element in
// (n, ol-lane) order via the fixed-lane dot products.
inline void conv1d_backward_params_oc(const float* x, const float* dy, int b, int in_ch,
                                      int in_len, int out_ch, int oc, int kernel, int stride,
                                      int padding, float* dwoc, float* db, int out_len) {
    const int64_t row = static_cast<int64_t>(kernel) * in_ch;
    for (int64_t t = 0; t < row; ++t) dwoc[t] = 0.0f;
    double db_acc = 0.0;
    for (int n = 0; n < b; ++n) {
        const float* dyr = dy + (static_cast<int64_t>(n) * out_ch + oc) * out_len;
        for (int ic = 0; ic < in_ch; ++ic) {
            const float* xr = x + (static_cast<int64_t>(n) * in_ch + ic) * in_len;
            float* dwr = dwoc + static_cast<int64_t>(ic) * kernel;
            for (int k = 0; k < kernel; ++k) {
                const int base = k - padding;
                int lo, hi;
                tap_range(base, stride, in_len, out_len, lo, hi);
                if (hi <= lo) continue;
                const float part =
                    stride == 1 ? dot_f32(xr + base + lo, dyr + lo, hi - lo)
                                : dot_f32_strided(xr + base + static_cast<int64_t>(lo) * stride,
                                                  stride, dyr + lo, hi - lo);
                dwr[k] += part;
            }
        }
        if (db) db_acc += sum_f32(dyr, out_len);
    }
    if (db) db[oc] = static_cast<float>(db_acc);
}

}  // namespace

// ---- parallel versions ----
// Each pragma splits work across rows owned by exactly one thread; the row
// bodies are shared with the serial twins below.

void conv1d_forward(const float* x, int b, int in_ch, int in_len,
                    const float* w, const float* bias, int out_ch, int kernel,
                    int stride, int padding, float* y, int out_len) {
#pragma omp parallel for collapse(2)
    for (int n = 0; n < b; ++n) {
        for (int oc = 0; oc < out_ch; ++oc) {
            conv1d_forward_row(x + static_cast<int64_t>(n) * in_ch * in_len, in_ch, in_len,
                               w + static_cast<int64_t>(oc) * in_ch * kernel,
                               bias ? bias + oc : nullptr, kernel, stride, padding,
                               y + (static_cast<int64_t>(n) * out_ch + oc) * out_len, out_len);
        }
    }
}

void conv1d_backward_input(const float* dy, int b, int in_ch, int in_len,
                           const float* w, int out_ch, int kernel, int stride,
                           int padding, float* dx, int out_len) {
#pragma omp parallel for collapse(2)
    for (int n = 0; n < b; ++n) {
        for (int ic = 0; ic < in_ch; ++ic) {
            conv1d_backward_input_row(dy + static_cast<int64_t>(n) * out_ch * out_len, out_ch,
                                      out_len, w, in_ch, ic, kernel, stride, padding,
                                      dx + (static_cast<int64_t>(n) * in_ch + ic) * in_len,
                                      in_len);
        }
    }
}

void conv1d_backward_params(const float* x, const float* dy, int b, int in_ch,
                            int in_len, int out_ch, int kernel, int stride,
                            int padding, float* dw, float* db, int out_len) {
#pragma omp parallel for
    for (int oc = 0; oc < out_ch; ++oc) {
        conv1d_backward_params_oc(x, dy, b, in_ch, in_len, out_ch, oc, kernel, stride, padding,
                                  dw + static_cast<int64_t>(oc) * in_ch * kernel, db, out_len);
    }
}

void dense_forward(const float* x, int b, int in_dim, const float* w,
                   const float* bias, int out_dim, float* y) {
#pragma omp parallel for collapse(2)
    for (int n = 0; n < b; ++n) {
        for (int o = 0; o < out_dim; ++o) {
            const float acc = dot_f32(x + static_cast<int64_t>(n) * in_dim,
                                      w + static_cast<int64_t>(o) * in_dim, in_dim);
            y[static_cast<int64_t>(n) * out_dim + o] = bias ? acc + bias[o] : acc;
        }
    }
}

void dense_backward_input(const float* dy, const float* w, int b, int in_dim,
                          int out_dim, float* dx) {
#pragma omp parallel for
    for (int n = 0; n < b; ++n) {
        const float* dyr = dy + static_cast<int64_t>(n) * out_dim;
        float* dxr = dx + static_cast<int64_t>(n) * in_dim;
        for (int i = 0; i < in_dim; ++i) dxr[i] = 0.0f;
        for (int o = 0; o < out_dim; ++o) {
            const float dv = dyr[o];
            const float* wr = w + static_cast<int64_t>(o) * in_dim;
            for (int i = 0; i < in_dim; ++i) dxr[i] += dv * wr[i];
        }
    }
}

void dense_backward_params(const float* x, const float* dy, int b, int in_dim,
                           int out_dim, float* dw, float* db) {
#pragma omp parallel for
    for (int o = 0; o < out_dim; ++o) {
        float* dwr = dw + static_cast<int64_t>(o) * in_dim;
        for (int i = 0; i < in_dim; ++i) dwr[i] = 0.0f;
        double db_acc = 0.0;
        for (int n = 0; n < b; ++n) {
            const float dv = dy[static_cast<int64_t>(n) * out_dim + o];
            const float* xr = x + static_cast<int64_t>(n) * in_dim;
            for (int i = 0; i < in_dim; ++i) dwr[i] += dv * xr[i];
            db_acc += dv;
        }
        if (db) db[o] = static_cast<float>(db_acc);
    }
}

void gram(const float* f, int b, int d, double* k) {
#pragma omp parallel for schedule(dynamic, 8)
    for (int i = 0; i < b; ++i) {
        const float* fi = f + static_cast<int64_t>(i) * d;
        for (int j = i; j < b; ++j) {
            const double acc = dot_f64(fi, f + static_cast<int64_t>(j) * d, d);
            k[static_cast<int64_t>(i) * b + j] = acc;
            k[static_cast<int64_t>(j) * b + i] = acc;
        }
    }
}

// ---- serial reference ----

namespace serial {

void conv1d_forward(const float* x, int b, int in_ch, int in_len,
                    const float* w, const float* bias, int out_ch, int kernel,
                    int stride, int padding, float* y, int out_len) {
    for (int n = 0; n < b; ++n) {
        for (int oc = 0; oc < out_ch; ++oc) {
            conv1d_forward_row(x + static_cast<int64_t>(n) * in_ch * in_len, in_ch, in_len,
                               w + static_cast<int64_t>(oc) * in_ch * kernel,
                               bias ? bias + oc : nullptr, kernel, stride, padding,
                               y + (static_cast<int64_t>(n) * out_ch + oc) * out_len, out_len);
        }
    }
}

void conv1d_backward_input(const float* dy, int b, int in_ch, int in_len,
                           const float* w, int out_ch, int kernel, int stride,
                           int padding, float* dx, int out_len) {
    for (int n = 0; n < b; ++n) {
        for (int ic = 0; ic < in_ch; ++ic) {
            conv1d_backward_input_row(dy + static_cast<int64_t>(n) * out_ch * out_len, out_ch,
                                      out_len, w, in_ch, ic, kernel, stride, padding,
                                      dx + (static_cast<int64_t>(n) * in_ch + ic) * in_len,
                                      in_len);
        }
    }
}

void conv1d_backward_params(const float* x, const float* dy, int b, int in_ch,
                            int in_len, int out_ch, int kernel, int stride,
                            int padding, float* dw, float* db, int out_len) {
    for (int oc = 0; oc < out_ch; ++oc) {
        conv1d_backward_params_oc(x, dy, b, in_ch, in_len, out_ch, oc, kernel, stride, padding,
                                  dw + static_cast<int64_t>(oc) * in_ch * kernel, db, out_len);
    }
}

void dense_forward(const float* x, int b, int in_dim, const float* w,
                   const float* bias, int out_dim, float* y) {
    for (int n = 0; n < b; ++n) {
        for (int o = 0; o < out_dim; ++o) {
            const float acc = dot_f32(x + static_cast<int64_t>(n) * in_dim,
                                      w + static_cast<int64_t>(o) * in_dim, in_dim);
            y[static_cast<int64_t>(n) * out_dim + o] = bias ? acc + bias[o] : acc;
        }
    }
}

void dense_backward_input(const float* dy, const float* w, int b, int in_dim,
                          int out_dim, float* dx) {
    for (int n = 0; n < b; ++n) {
        const float* dyr = dy + static_cast<int64_t>(n) * out_dim;
        float* dxr = dx + static_cast<int64_t>(n) * in_dim;
        for (int i = 0; i < in_dim; ++i) dxr[i] = 0.0f;
        for (int o = 0; o < out_dim; ++o) {
            const float dv = dyr[o];
            const float* wr = w + static_cast<int64_t>(o) * in_dim;
            for (int i = 0; i < in_dim; ++i) dxr[i] += dv * wr[i];
        }
    }
}

void dense_backward_params(const float* x, const float* dy, int b, int in_dim,
                           int out_dim, float* dw, float* db) {
    for (int o = 0; o < out_dim; ++o) {
        float* dwr = dw + static_cast<int64_t>(o) * in_dim;
        for (int i = 0; i < in_dim; ++i) dwr[i] = 0.0f;
        double db_acc = 0.0;
        for (int n = 0; n < b; ++n) {
            const float dv = dy[static_cast<int64_t>(n) * out_dim + o];
            const float* xr = x + static_cast<int64_t>(n) * in_dim;
            for (int i = 0; i < in_dim; ++i) dwr[i] += dv * xr[i];
            db_acc += dv;
        }
        if (db) db[o] = static_cast<float>(db_acc);
    }
}

void gram(const float* f, int b, int d, double* k) {
    for (int i = 0; i < b; ++i) {
        const float* fi = f + static_cast<int64_t>(i) * d;
        for (int j = i; j < b; ++j) {
            const double acc = dot_f64(fi, f + static_cast<int64_t>(j) * d, d);
            k[static_cast<int64_t>(i) * b + j] = acc;
            k[static_cast<int64_t>(j) * b + i] = acc;
        }
    }
}

}  // namespace serial

}  // namespace lprune::kernels
