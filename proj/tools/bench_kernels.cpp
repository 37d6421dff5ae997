// Timing comparison of the OpenMP kernels against their serial twins.
// The twins compute each output element with the same loop order, so the
// outputs are checked for bitwise equality while we are at it.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "lprune/kernels.hpp"
#include "lprune/rng.hpp"

using lprune::Rng;
namespace k = lprune::kernels;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        auto t0 = std::chrono::steady_clock::now();
        fn();
        auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

std::vector<float> random_vec(size_t n, Rng& rng) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return v;
}

void report(const char* name, double serial_ms, double parallel_ms, bool bitwise) {
    std::printf("%-22s %10.2f %10.2f %8.2fx %9s\n", name, serial_ms, parallel_ms,
                serial_ms / parallel_ms, bitwise ? "yes" : "NO");
}

template <typename T>
bool same_bits(const std::vector<T>& a, const std::vector<T>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

}  // namespace

int main(int argc, char** argv) {
    int reps = 5;
    if (argc > 1) reps = std::max(1, std::atoi(argv[1]));

#ifdef _OPENMP
    std::printf("threads=%d reps=%d\n", omp_get_max_threads(), reps);
#else
    std::printf("threads=1 (no OpenMP) reps=%d\n", reps);
#endif
    std::printf("%-22s %10s %10s %9s %9s\n", "kernel", "serial ms", "omp ms", "speedup",
                "bitwise");

    Rng rng(7);

    // conv1d: batch 64, 32 -> 64 channels, length 256, kernel 3, stride 1, pad 1
    const int b = 64, ic = 32, oc = 64, len = 256, kk = 3, stride = 1, pad = 1;
    const int out_len = k::conv1d_out_len(len, kk, stride, pad);
    auto x = random_vec(static_cast<size_t>(b) * ic * len, rng);
    auto w = random_vec(static_cast<size_t>(oc) * ic * kk, rng);
    auto bias = random_vec(oc, rng);
    auto dy = random_vec(static_cast<size_t>(b) * oc * out_len, rng);

    std::vector<float> y_s(dy.size()), y_p(dy.size());
    double t_s = time_ms([&] { k::serial::conv1d_forward(x.data(), b, ic, len, w.data(), bias.data(), oc, kk, stride, pad, y_s.data(), out_len); }, reps);
    double t_p = time_ms([&] { k::conv1d_forward(x.data(), b, ic, len, w.data(), bias.data(), oc, kk, stride, pad, y_p.data(), out_len); }, reps);
    report("conv1d_forward", t_s, t_p, same_bits(y_s, y_p));

    std::vector<float> dx_s(x.size()), dx_p(x.size());
    t_s = time_ms([&] { k::serial::conv1d_backward_input(dy.data(), b, ic, len, w.data(), oc, kk, stride, pad, dx_s.data(), out_len); }, reps);
    t_p = time_ms([&] { k::conv1d_backward_input(dy.data(), b, ic, len, w.data(), oc, kk, stride, pad, dx_p.data(), out_len); }, reps);
    report("conv1d_backward_input", t_s, t_p, same_bits(dx_s, dx_p));

    std::vector<float> dw_s(w.size()), dw_p(w.size()), db_s(oc), db_p(oc);
    t_s = time_ms([&] { k::serial::conv1d_backward_params(x.data(), dy.data(), b, ic, len, oc, kk, stride, pad, dw_s.data(), db_s.data(), out_len); }, reps);
    t_p = time_ms([&] { k::conv1d_backward_params(x.data(), dy.data(), b, ic, len, oc, kk, stride, pad, dw_p.data(), db_p.data(), out_len); }, reps);
    report("conv1d_backward_params", t_s, t_p, same_bits(dw_s, dw_p) && same_bits(db_s, db_p));

    // dense: batch 256, 1024 -> 512
    const int db_n = 256, din = 1024, dout = 512;
    auto xd = random_vec(static_cast<size_t>(db_n) * din, rng);
    auto wd = random_vec(static_cast<size_t>(dout) * din, rng);
    auto bd = random_vec(dout, rng);
    std::vector<float> yd_s(static_cast<size_t>(db_n) * dout), yd_p(yd_s.size());
    t_s = time_ms([&] { k::serial::dense_forward(xd.data(), db_n, din, wd.data(), bd.data(), dout, yd_s.data()); }, reps);
    t_p = time_ms([&] { k::dense_forward(xd.data(), db_n, din, wd.data(), bd.data(), dout, yd_p.data()); }, reps);
    report("dense_forward", t_s, t_p, same_bits(yd_s, yd_p));

    // gram: 512 samples x 2048 features
    const int gb = 512, gd = 2048;
    auto f = random_vec(static_cast<size_t>(gb) * gd, rng);
    std::vector<double> k_s(static_cast<size_t>(gb) * gb), k_p(k_s.size());
    t_s = time_ms([&] { k::serial::gram(f.data(), gb, gd, k_s.data()); }, reps);
    t_p = time_ms([&] { k::gram(f.data(), gb, gd, k_p.data()); }, reps);
    report("gram", t_s, t_p, same_bits(k_s, k_p));

    return 0;
}
