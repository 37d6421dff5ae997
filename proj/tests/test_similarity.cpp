#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <omp.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <vector>

#include "lprune/model.hpp"
#include "lprune/rng.hpp"
#include "lprune/signal.hpp"
#include "lprune/similarity.hpp"

using namespace lprune;
using namespace lprune::similarity;
namespace fs = std::filesystem;

namespace {

std::vector<double> random_features(int b, int d, Rng& rng) {
    std::vector<double> f(static_cast<size_t>(b) * d);
    for (auto& x : f) x = rng.normal();
    return f;
}

GramMatrix gram_of(const std::vector<double>& f, int b, int d) {
    GramMatrix g;
    g.b = b;
    g.k.assign(static_cast<size_t>(b) * b, 0.0);
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < b; ++j) {
            double acc = 0.0;
            for (int m = 0; m < d; ++m)
                acc += f[static_cast<size_t>(i) * d + m] * f[static_cast<size_t>(j) * d + m];
            g.k[static_cast<size_t>(i) * b + j] = acc;
        }
    return g;
}

// The estimator written out term by term with explicit O(b^3) matrix
// products, sharing nothing with the implementation under test:
//   ( tr(Kt Lt) + (1^T Kt 1)(1^T Lt 1)/((b-1)(b-2)) - 2/(b-2) 1^T Kt Lt 1 )
//   / (b (b-3))
double hsic1_transcribed(std::vector<double> kt, std::vector<double> lt, int b) {
    std::vector<double> m(static_cast<size_t>(b) * b, 0.0);
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < b; ++j)
            for (int x = 0; x < b; ++x)
                m[static_cast<size_t>(i) * b + j] +=
                    kt[static_cast<size_t>(i) * b + x] * lt[static_cast<size_t>(x) * b + j];
    double trace = 0.0;
    for (int i = 0; i < b; ++i) trace += m[static_cast<size_t>(i) * b + i];
    double sum_k = 0.0, sum_l = 0.0, sum_m = 0.0;
    for (double v : kt) sum_k += v;
    for (double v : lt) sum_l += v;
    for (double v : m) sum_m += v;
    const double bb = b;
    return (trace + sum_k * sum_l / ((bb - 1.0) * (bb - 2.0)) - 2.0 * sum_m / (bb - 2.0)) /
           (bb * (bb - 3.0));
}

std::vector<double> zero_diagonal(const GramMatrix& g) {
    std::vector<double> kt = g.k;
    for (int i = 0; i < g.b; ++i) kt[static_cast<size_t>(i) * g.b + i] = 0.0;
    return kt;
}

// K (11^T - I) as a literal matrix product
std::vector<double> times_ones_minus_identity(const GramMatrix& g) {
    const int b = g.b;
    std::vector<double> ones_minus_i(static_cast<size_t>(b) * b, 1.0);
    for (int i = 0; i < b; ++i) ones_minus_i[static_cast<size_t>(i) * b + i] = 0.0;
    std::vector<double> kt(static_cast<size_t>(b) * b, 0.0);
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < b; ++j)
            for (int x = 0; x < b; ++x)
                kt[static_cast<size_t>(i) * b + j] +=
                    g.k[static_cast<size_t>(i) * b + x] * ones_minus_i[static_cast<size_t>(x) * b + j];
    return kt;
}

signal::SignalDataset tiny_dataset() {
    signal::GenOptions opt;
    opt.schemes = {signal::ModScheme::BPSK, signal::ModScheme::QPSK};
    opt.snrs_db = {12};
    opt.examples_per_class_per_snr = 30;
    opt.signal_length = 16;
    return signal::generate_dataset(opt, 17);
}

// two relu pass-through units: both emit the same activation, so every
// similarity entry must be 1
ModelGraph twin_relu_model() {
    ModelGraph m;
    Unit u0;
    u0.id = 0;
    u0.body.push_back(ReLU{});
    Unit u1;
    u1.id = 1;
    u1.body.push_back(ReLU{});
    m.units = {u0, u1};
    m.head.push_back(GlobalAvgPool1D{});
    m.head.push_back(Flatten{});
    m.head.push_back(make_dense(2, 2));
    m.num_classes = 2;
    return m;
}

std::vector<int> full_pool(const signal::SignalDataset& ds) {
    std::vector<int> pool(ds.examples.size());
    for (size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<int>(i);
    return pool;
}

}  // namespace

TEST_CASE("hsic1 agrees with the transcribed estimator on random gram pairs") {
    Rng rng(2024);
    int done = 0;
    for (int b = 4; b <= 8; ++b) {
        for (int rep = 0; rep < 4; ++rep) {
            const int d = 2 + static_cast<int>(rng.uniform_int(6));
            const GramMatrix k = gram_of(random_features(b, d, rng), b, d);
            const GramMatrix l = gram_of(random_features(b, d, rng), b, d);
            const double got = hsic1(k, l);
            const double want = hsic1_transcribed(zero_diagonal(k), zero_diagonal(l), b);
            CAPTURE(b);
            CAPTURE(rep);
            CHECK(std::abs(got - want) <= 1e-10);
            ++done;
        }
    }
    CHECK(done == 20);
}

TEST_CASE("the matrix-product diagonal rule matches its own transcription and differs from entrywise") {
    Rng rng(515);
    const int b = 6, d = 4;
    const GramMatrix k = gram_of(random_features(b, d, rng), b, d);
    const GramMatrix l = gram_of(random_features(b, d, rng), b, d);

    const double got = hsic1(k, l, DiagRule::MatrixProduct);
    const double want = hsic1_transcribed(times_ones_minus_identity(k), times_ones_minus_identity(l), b);
    CHECK(std::abs(got - want) <= 1e-10);

    // K (11^T - I) keeps a nonzero diagonal, so the two readings genuinely
    // disagree on generic grams
    const double entrywise = hsic1(k, l, DiagRule::ZeroDiagonal);
    CHECK(std::abs(got - entrywise) > 1e-6);
}

TEST_CASE("hsic1 of constant features is zero") {
    for (int b = 4; b <= 8; ++b) {
        const int d = 3;
        std::vector<double> f(static_cast<size_t>(b) * d, 1.0);
        const GramMatrix k = gram_of(f, b, d);
        CHECK(std::abs(hsic1(k, k)) <= 1e-12);
    }
}

TEST_CASE("hsic1 rejects undersized batches and mismatched grams") {
    Rng rng(4);
    const GramMatrix k3 = gram_of(random_features(3, 2, rng), 3, 2);
    CHECK_THROWS_AS(hsic1(k3, k3), std::runtime_error);
    const GramMatrix k4 = gram_of(random_features(4, 2, rng), 4, 2);
    const GramMatrix k5 = gram_of(random_features(5, 2, rng), 5, 2);
    CHECK_THROWS_AS(hsic1(k4, k5), std::runtime_error);
}

TEST_CASE("cka is 1 on itself, symmetric, and scale invariant") {
    Rng rng(88);
    const int b = 7, d = 5;
    const auto fa = random_features(b, d, rng);
    const auto fb = random_features(b, d, rng);
    const GramMatrix k = gram_of(fa, b, d);
    const GramMatrix l = gram_of(fb, b, d);

    CHECK(cka(k, k) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cka(k, l) == doctest::Approx(cka(l, k)).epsilon(1e-14));
    CHECK(cka(k, l) >= -1.0);
    CHECK(cka(k, l) <= 1.0);

    for (double c : {1e-3, 7.3, 1e3}) {
        auto scaled = fa;
        for (auto& x : scaled) x *= c;
        const GramMatrix ks = gram_of(scaled, b, d);
        CHECK(cka(ks, l) == doctest::Approx(cka(k, l)).epsilon(1e-10));
    }
}

TEST_CASE("cka is invariant to a right-orthogonal rotation of the features") {
    Rng rng(321);
    const int b = 6, d = 5;
    const auto fa = random_features(b, d, rng);
    const auto fb = random_features(b, d, rng);

    // Householder reflector Q = I - 2 v v^T / (v^T v), exactly orthogonal
    std::vector<double> v(d);
    for (auto& x : v) x = rng.normal();
    double vv = 0.0;
    for (double x : v) vv += x * x;
    std::vector<double> rotated(fa.size(), 0.0);
    for (int i = 0; i < b; ++i) {
        double proj = 0.0;
        for (int j = 0; j < d; ++j) proj += fa[static_cast<size_t>(i) * d + j] * v[static_cast<size_t>(j)];
        for (int j = 0; j < d; ++j)
            rotated[static_cast<size_t>(i) * d + j] =
                fa[static_cast<size_t>(i) * d + j] - 2.0 * proj * v[static_cast<size_t>(j)] / vv;
    }

    const double base = cka(gram_of(fa, b, d), gram_of(fb, b, d));
    const double rot = cka(gram_of(rotated, b, d), gram_of(fb, b, d));
    CHECK(rot == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("cka of independent features is near zero") {
    Rng rng(1001);
    const int b = 200, d = 8;
    const GramMatrix k = gram_of(random_features(b, d, rng), b, d);
    const GramMatrix l = gram_of(random_features(b, d, rng), b, d);
    CHECK(std::abs(cka(k, l)) < 0.1);
}

TEST_CASE("cka rejects degenerate features") {
    std::vector<double> f(static_cast<size_t>(5) * 3, 2.0);
    const GramMatrix k = gram_of(f, 5, 3);
    CHECK_THROWS_AS(cka(k, k), std::runtime_error);
}

TEST_CASE("cosine_of basics") {
    CHECK(cosine_of({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(0.0));
    CHECK(cosine_of({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}) == doctest::Approx(1.0));
    CHECK(cosine_of({1.0, 0.0}, {-2.0, 0.0}) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(cosine_of({1.0}, {1.0, 2.0}), std::runtime_error);
    CHECK_THROWS_AS(cosine_of({0.0, 0.0}, {1.0, 2.0}), std::runtime_error);

    CHECK(metric_from_name("cka") == Metric::CKA);
    CHECK(metric_from_name("cosine") == Metric::Cosine);
    CHECK(metric_name(Metric::Cosine) == "cosine");
    CHECK_THROWS_AS(metric_from_name("rbf"), std::runtime_error);
}

TEST_CASE("identical units score 1 across the whole matrix") {
    const auto ds = tiny_dataset();
    const ModelGraph m = twin_relu_model();
    SimilarityOptions opt;
    opt.samples_per_batch = 8;
    opt.num_batches = 2;
    opt.seed = 5;

    for (Metric metric : {Metric::CKA, Metric::Cosine}) {
        opt.metric = metric;
        const SimilarityResult res = similarity_matrix(m, ds, full_pool(ds), opt);
        REQUIRE(res.l == 2);
        for (double v : res.s) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(res.z[0] == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(res.z[1] == doctest::Approx(2.0).epsilon(1e-12));
    }
}

TEST_CASE("similarity entries are bounded and rows sum to z") {
    const auto ds = tiny_dataset();
    ModelGraph m;
    Unit u0;
    u0.id = 0;
    u0.body.push_back(make_conv1d(2, 3, 3, 1, 1));
    u0.body.push_back(ReLU{});
    Unit u1;
    u1.id = 1;
    u1.body.push_back(make_conv1d(3, 4, 3, 2, 1));
    u1.body.push_back(ReLU{});
    Unit u2;
    u2.id = 2;
    u2.body.push_back(make_conv1d(4, 4, 3, 1, 1));
    m.units = {u0, u1, u2};
    m.head.push_back(GlobalAvgPool1D{});
    m.head.push_back(Flatten{});
    m.head.push_back(make_dense(4, 2));
    m.num_classes = 2;
    Rng rng(9);
    kaiming_init_model(m, rng);

    SimilarityOptions opt;
    opt.samples_per_batch = 10;
    opt.num_batches = 3;
    opt.seed = 77;
    const SimilarityResult res = similarity_matrix(m, ds, full_pool(ds), opt);
    REQUIRE(res.l == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(res.s_at(i, i) == doctest::Approx(1.0).epsilon(1e-12));
        double row = 0.0;
        for (int j = 0; j < 3; ++j) {
            CHECK(res.s_at(i, j) >= -1.0);
            CHECK(res.s_at(i, j) <= 1.0);
            CHECK(res.s_at(i, j) == res.s_at(j, i));
            row += res.s_at(i, j);
        }
        CHECK(res.z[static_cast<size_t>(i)] == doctest::Approx(row).epsilon(1e-14));
    }
}

TEST_CASE("similarity_matrix is deterministic and thread-count independent") {
    const auto ds = tiny_dataset();
    ModelGraph m = twin_relu_model();
    SimilarityOptions opt;
    opt.samples_per_batch = 12;
    opt.num_batches = 2;
    opt.seed = 13;

    const int before = omp_get_max_threads();
    omp_set_num_threads(1);
    const SimilarityResult a = similarity_matrix(m, ds, full_pool(ds), opt);
    omp_set_num_threads(8);
    const SimilarityResult b = similarity_matrix(m, ds, full_pool(ds), opt);
    omp_set_num_threads(before);
    CHECK(std::memcmp(a.s.data(), b.s.data(), a.s.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(a.z.data(), b.z.data(), a.z.size() * sizeof(double)) == 0);

    // stratified draws are deterministic too
    opt.stratified = true;
    const SimilarityResult c = similarity_matrix(m, ds, full_pool(ds), opt);
    const SimilarityResult d = similarity_matrix(m, ds, full_pool(ds), opt);
    CHECK(std::memcmp(c.s.data(), d.s.data(), c.s.size() * sizeof(double)) == 0);
}

TEST_CASE("similarity_matrix validates its options") {
    const auto ds = tiny_dataset();
    const ModelGraph m = twin_relu_model();
    SimilarityOptions opt;
    opt.samples_per_batch = 3;
    CHECK_THROWS_AS(similarity_matrix(m, ds, full_pool(ds), opt), std::runtime_error);
    opt.samples_per_batch = 4;
    opt.num_batches = 0;
    CHECK_THROWS_AS(similarity_matrix(m, ds, full_pool(ds), opt), std::runtime_error);
    opt.num_batches = 1;
    const std::vector<int> small_pool = {0, 1, 2};
    CHECK_THROWS_AS(similarity_matrix(m, ds, small_pool, opt), std::runtime_error);
}

TEST_CASE("z column files round-trip exactly") {
    const std::vector<double> z = {1.25, -3.0625e-3, 17.0, 0.1};
    const fs::path path = fs::temp_directory_path() / "z_roundtrip.csv";
    fs::remove(path);
    save_z_csv(z, path.string());
    const std::vector<double> back = load_z_csv(path.string());
    REQUIRE(back.size() == z.size());
    for (size_t i = 0; i < z.size(); ++i) CHECK(back[i] == z[i]);
}
