#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <limits>
#include <utility>
#include <vector>

#include "lprune/model.hpp"
#include "lprune/presets.hpp"
#include "lprune/rng.hpp"
#include "lprune/train.hpp"

using namespace lprune;

namespace {

// two dense units and a dense head; no conv, optionally no relu so that
// every parameter provably receives gradient
ModelGraph dense_net(bool with_relu) {
    ModelGraph m;
    Unit u0;
    u0.id = 0;
    u0.body.push_back(make_dense(6, 8));
    if (with_relu) u0.body.push_back(ReLU{});
    Unit u1;
    u1.id = 1;
    u1.body.push_back(make_dense(8, 5));
    m.units = {u0, u1};
    m.head.push_back(make_dense(5, 3));
    m.num_classes = 3;
    return m;
}

ModelGraph conv_net() {
    ModelGraph m;
    Unit u0;
    u0.id = 0;
    u0.body.push_back(make_conv1d(2, 4, 3, 1, 1));
    u0.body.push_back(make_batchnorm(4));
    u0.body.push_back(ReLU{});
    Unit u1;
    u1.id = 1;
    u1.body.push_back(make_conv1d(4, 6, 3, 2, 1));
    u1.body.push_back(make_batchnorm(6));
    u1.body.push_back(ReLU{});
    m.units = {u0, u1};
    m.head.push_back(GlobalAvgPool1D{});
    m.head.push_back(Flatten{});
    m.head.push_back(make_dense(6, 4));
    m.num_classes = 4;
    return m;
}

ModelGraph residual_net() {
    ModelGraph m;
    Unit u0;
    u0.id = 0;
    u0.body.push_back(make_conv1d(2, 4, 3, 1, 1));
    u0.body.push_back(make_batchnorm(4));
    u0.body.push_back(ReLU{});
    Unit u1;
    u1.id = 1;
    u1.skip = SkipKind::Projection;
    u1.body.push_back(make_conv1d(4, 6, 3, 2, 1));
    u1.body.push_back(make_batchnorm(6));
    u1.body.push_back(ReLU{});
    u1.body.push_back(make_conv1d(6, 6, 3, 1, 1));
    u1.body.push_back(make_batchnorm(6));
    u1.projection = make_conv1d(4, 6, 1, 2, 0);
    Unit u2;
    u2.id = 2;
    u2.skip = SkipKind::Identity;
    u2.body.push_back(make_conv1d(6, 6, 3, 1, 1));
    u2.body.push_back(make_batchnorm(6));
    m.units = {u0, u1, u2};
    m.head.push_back(GlobalAvgPool1D{});
    m.head.push_back(Flatten{});
    m.head.push_back(make_dense(6, 3));
    m.num_classes = 3;
    return m;
}

Tensor random_batch(const ModelGraph& model, int b, int len, Rng& rng) {
    Tensor t = Tensor::zeros(model_input_shape(model, b, len));
    for (auto& x : t.data) x = static_cast<float>(rng.normal());
    return t;
}

std::vector<int> cycling_labels(int b, int num_classes) {
    std::vector<int> labels(b);
    for (int i = 0; i < b; ++i) labels[i] = i % num_classes;
    return labels;
}

std::vector<std::pair<Tensor*, Tensor*>> param_grad_pairs(ModelGraph& model, GradBuffers& grads) {
    std::vector<std::pair<Tensor*, Tensor*>> pairs;
    for_each_param(model, grads, [&](Tensor& p, Tensor& g) { pairs.emplace_back(&p, &g); });
    return pairs;
}

double central_difference(ModelGraph& model, const Tensor& batch, const std::vector<int>& labels,
                          Tensor& p, int64_t i, double h) {
    const float orig = p.data[i];
    p.data[i] = static_cast<float>(orig + h);
    const double lp = compute_loss(model, batch, labels);
    p.data[i] = static_cast<float>(orig - h);
    const double lm = compute_loss(model, batch, labels);
    p.data[i] = orig;
    return (lp - lm) / (2.0 * h);
}

// Central finite differences of compute_loss over every trainable scalar.
// The loss comes back as float, so each probe carries ~1e-7 of rounding;
// divided by 2h that sets the noise floor the absolute term absorbs. A probe
// whose step straddles a relu kink is biased at any fixed h, so a mismatch is
// retried at a smaller step: kink bias shrinks with h, a wrong gradient stays.
void check_gradients(ModelGraph& model, const Tensor& batch, const std::vector<int>& labels) {
    auto [loss, grads] = loss_gradients(model, batch, labels);
    CHECK(std::isfinite(loss));
    int checked = 0;
    for (auto [p, g] : param_grad_pairs(model, grads)) {
        REQUIRE(p->size() == g->size());
        for (int64_t i = 0; i < p->size(); ++i) {
            const double an = g->data[i];
            double fd = central_difference(model, batch, labels, *p, i, 3e-4);
            if (std::abs(fd - an) > 2e-2 * std::max(std::abs(fd), std::abs(an)) + 2e-3)
                fd = central_difference(model, batch, labels, *p, i, 1e-4);
            CAPTURE(checked);
            CAPTURE(fd);
            CAPTURE(an);
            CHECK(std::abs(fd - an) <= 2e-2 * std::max(std::abs(fd), std::abs(an)) + 2e-3);
            ++checked;
        }
    }
    CHECK(checked == count_params(model));
}

std::vector<float> snapshot_params(const ModelGraph& model) {
    std::vector<float> out;
    auto take = [&](const PrimitiveLayer& layer) {
        for (const Tensor* t : trainable_params(layer))
            out.insert(out.end(), t->data.begin(), t->data.end());
    };
    for (const Unit& u : model.units) {
        for (const auto& layer : u.body) take(layer);
        if (u.projection) take(*u.projection);
    }
    for (const auto& layer : model.head) take(layer);
    return out;
}

}  // namespace

TEST_CASE("analytic gradients match finite differences on a dense net") {
    ModelGraph m = dense_net(true);
    Rng rng(101);
    kaiming_init_model(m, rng);
    const Tensor batch = random_batch(m, 8, 0, rng);
    check_gradients(m, batch, cycling_labels(8, 3));
}

TEST_CASE("analytic gradients match finite differences on a conv/bn net") {
    ModelGraph m = conv_net();
    Rng rng(202);
    kaiming_init_model(m, rng);
    validate(m, 12);
    const Tensor batch = random_batch(m, 5, 12, rng);
    check_gradients(m, batch, cycling_labels(5, 4));
}

TEST_CASE("analytic gradients match finite differences on a residual net") {
    ModelGraph m = residual_net();
    Rng rng(303);
    kaiming_init_model(m, rng);
    validate(m, 12);
    const Tensor batch = random_batch(m, 5, 12, rng);
    check_gradients(m, batch, cycling_labels(5, 3));
}

TEST_CASE("initial loss sits near the uniform-prediction value") {
    ModelGraph m = make_preset("vgg8", 6);
    Rng rng(7);
    kaiming_init_model(m, rng);
    const Tensor batch = random_batch(m, 16, 128, rng);
    const float loss = compute_loss(m, batch, cycling_labels(16, 6));
    CHECK(std::abs(loss - std::log(6.0f)) < 0.5f);
}

TEST_CASE("a zero learning rate leaves every trainable parameter bit-identical") {
    ModelGraph m = conv_net();
    Rng rng(11);
    kaiming_init_model(m, rng);
    const Tensor batch = random_batch(m, 6, 12, rng);
    const auto before = snapshot_params(m);
    const float loss = backward_and_step(m, batch, cycling_labels(6, 4), 0.0f);
    CHECK(std::isfinite(loss));
    const auto after = snapshot_params(m);
    CHECK(std::memcmp(before.data(), after.data(), before.size() * sizeof(float)) == 0);

    // the step still refreshes batch-norm running statistics
    const auto& bn = std::get<BatchNorm1D>(m.units[0].body[1]);
    bool moved = false;
    for (float v : bn.running_mean.data)
        if (v != 0.0f) moved = true;
    CHECK(moved);
}

TEST_CASE("one real step moves every parameter of a relu-free net") {
    ModelGraph m = dense_net(false);
    Rng rng(13);
    kaiming_init_model(m, rng);
    const Tensor batch = random_batch(m, 8, 0, rng);
    const auto before = snapshot_params(m);
    backward_and_step(m, batch, cycling_labels(8, 3), 0.1f);
    const auto after = snapshot_params(m);
    REQUIRE(before.size() == static_cast<size_t>(count_params(m)));
    int64_t changed = 0;
    for (size_t i = 0; i < before.size(); ++i)
        if (before[i] != after[i]) ++changed;
    CHECK(changed == count_params(m));
}

TEST_CASE("training steps are deterministic") {
    ModelGraph a = residual_net();
    Rng rng(17);
    kaiming_init_model(a, rng);
    ModelGraph b = a;
    const Tensor batch = random_batch(a, 6, 12, rng);
    const auto labels = cycling_labels(6, 3);
    for (int step = 0; step < 3; ++step) {
        const float la = backward_and_step(a, batch, labels, 0.01f);
        const float lb = backward_and_step(b, batch, labels, 0.01f);
        CHECK(la == lb);
    }
    const auto pa = snapshot_params(a);
    const auto pb = snapshot_params(b);
    CHECK(std::memcmp(pa.data(), pb.data(), pa.size() * sizeof(float)) == 0);
}

TEST_CASE("backward_and_step rejects a diverged loss") {
    ModelGraph m = dense_net(false);
    Rng rng(19);
    kaiming_init_model(m, rng);
    auto& head = std::get<Dense>(m.head[0]);
    head.weight.data[0] = std::numeric_limits<float>::quiet_NaN();
    const Tensor batch = random_batch(m, 4, 0, rng);
    CHECK_THROWS_AS(backward_and_step(m, batch, cycling_labels(4, 3), 0.01f), std::runtime_error);
}

TEST_CASE("correct_count resolves argmax ties toward the lower class index") {
    ModelGraph m;
    m.head.push_back(make_dense(3, 3, false));
    m.num_classes = 3;
    auto& d = std::get<Dense>(m.head[0]);
    for (int i = 0; i < 3; ++i) d.weight.data[static_cast<size_t>(i) * 3 + i] = 1.0f;

    // logits equal at classes 0 and 2: the first max wins
    Tensor batch = Tensor::from({2, 3}, {1.0f, 0.0f, 1.0f, 0.0f, 2.0f, 0.0f});
    CHECK(correct_count(m, batch, {0, 1}) == 2);
    CHECK(correct_count(m, batch, {2, 1}) == 1);
}

TEST_CASE("running statistics blend batch statistics with momentum") {
    ModelGraph m;
    Unit u0;
    u0.id = 0;
    u0.body.push_back(make_batchnorm(2));
    m.units = {u0};
    m.head.push_back(GlobalAvgPool1D{});
    m.head.push_back(Flatten{});
    m.head.push_back(make_dense(2, 2));
    m.num_classes = 2;
    Rng rng(23);
    kaiming_init_model(m, rng);

    const int b = 3, len = 4;
    Tensor batch = random_batch(m, b, len, rng);
    backward_and_step(m, batch, cycling_labels(b, 2), 0.0f);

    const auto& bn = std::get<BatchNorm1D>(m.units[0].body[0]);
    const int n = b * len;
    for (int ch = 0; ch < 2; ++ch) {
        double mean = 0.0;
        for (int i = 0; i < b; ++i)
            for (int l = 0; l < len; ++l) mean += batch.data[(static_cast<size_t>(i) * 2 + ch) * len + l];
        mean /= n;
        double var = 0.0;
        for (int i = 0; i < b; ++i)
            for (int l = 0; l < len; ++l) {
                const double d = batch.data[(static_cast<size_t>(i) * 2 + ch) * len + l] - mean;
                var += d * d;
            }
        const double var_unbiased = var / (n - 1);
        CHECK(bn.running_mean.data[ch] == doctest::Approx(0.1 * mean).epsilon(1e-4));
        CHECK(bn.running_var.data[ch] == doctest::Approx(0.9 * 1.0 + 0.1 * var_unbiased).epsilon(1e-4));
    }
}

TEST_CASE("validate names the offending unit") {
    ModelGraph m = conv_net();
    std::get<Conv1D>(m.units[1].body[0]).in_ch = 5;  // unit 0 emits 4 channels
    std::get<Conv1D>(m.units[1].body[0]).weight = Tensor::zeros({6, 5, 3});
    try {
        validate(m, 12);
        FAIL("expected a shape error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("unit 1") != std::string::npos);
    }
}

TEST_CASE("forward_collect and forward_all_units agree") {
    ModelGraph m = residual_net();
    Rng rng(29);
    kaiming_init_model(m, rng);
    const Tensor batch = random_batch(m, 4, 12, rng);
    const auto all = forward_all_units(m, batch);
    REQUIRE(all.size() == m.units.size());
    for (size_t i = 0; i < all.size(); ++i) {
        const Tensor one = forward_collect(m, batch, static_cast<int>(i));
        REQUIRE(one.shape == all[i].shape);
        CHECK(std::memcmp(one.data.data(), all[i].data.data(), one.data.size() * sizeof(float)) == 0);
    }
}
