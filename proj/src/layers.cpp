#include "lprune/layers.hpp"

#include <stdexcept>

#include "lprune/kernels.hpp"

namespace lprune {

PrimitiveLayer make_dense(int in_dim, int out_dim, bool has_bias) {
    if (in_dim <= 0 || out_dim <= 0) throw std::runtime_error("dense: dimensions must be positive");
    Dense d;
    d.in_dim = in_dim;
    d.out_dim = out_dim;
    d.has_bias = has_bias;
    d.weight = Tensor::zeros({out_dim, in_dim});
    if (has_bias) d.bias = Tensor::zeros({out_dim});
    return d;
}

PrimitiveLayer make_conv1d(int in_ch, int out_ch, int kernel, int stride, int padding, bool has_bias) {
    if (in_ch <= 0 || out_ch <= 0 || kernel <= 0 || stride <= 0 || padding < 0)
        throw std::runtime_error("conv1d: bad hyperparameters");
    Conv1D c;
    c.in_ch = in_ch;
    c.out_ch = out_ch;
    c.kernel = kernel;
    c.stride = stride;
    c.padding = padding;
    c.has_bias = has_bias;
    c.weight = Tensor::zeros({out_ch, in_ch, kernel});
    if (has_bias) c.bias = Tensor::zeros({out_ch});
    return c;
}

PrimitiveLayer make_batchnorm(int channels, float eps, float momentum) {
    if (channels <= 0) throw std::runtime_error("batchnorm: channels must be positive");
    BatchNorm1D bn;
    bn.channels = channels;
    bn.eps = eps;
    bn.momentum = momentum;
    bn.gamma = Tensor::full({channels}, 1.0f);
    bn.beta = Tensor::zeros({channels});
    bn.running_mean = Tensor::zeros({channels});
    bn.running_var = Tensor::full({channels}, 1.0f);
    return bn;
}

const char* kind_name(const PrimitiveLayer& layer) {
    struct V {
        const char* operator()(const Dense&) const { return "Dense"; }
        const char* operator()(const Conv1D&) const { return "Conv1D"; }
        const char* operator()(const BatchNorm1D&) const { return "BatchNorm1D"; }
        const char* operator()(const ReLU&) const { return "ReLU"; }
        const char* operator()(const GlobalAvgPool1D&) const { return "GlobalAvgPool1D"; }
        const char* operator()(const Flatten&) const { return "Flatten"; }
    };
    return std::visit(V{}, layer);
}

std::vector<Tensor*> trainable_params(PrimitiveLayer& layer) {
    std::vector<Tensor*> out;
    if (auto* d = std::get_if<Dense>(&layer)) {
        out.push_back(&d->weight);
        if (d->has_bias) out.push_back(&d->bias);
    } else if (auto* c = std::get_if<Conv1D>(&layer)) {
        out.push_back(&c->weight);
        if (c->has_bias) out.push_back(&c->bias);
    } else if (auto* bn = std::get_if<BatchNorm1D>(&layer)) {
        out.push_back(&bn->gamma);
        out.push_back(&bn->beta);
    }
    return out;
}

std::vector<const Tensor*> trainable_params(const PrimitiveLayer& layer) {
    auto mut = trainable_params(const_cast<PrimitiveLayer&>(layer));
    return {mut.begin(), mut.end()};
}

std::vector<Tensor*> state_tensors(PrimitiveLayer& layer) {
    auto out = trainable_params(layer);
    if (auto* bn = std::get_if<BatchNorm1D>(&layer)) {
        out.push_back(&bn->running_mean);
        out.push_back(&bn->running_var);
    }
    return out;
}

std::vector<const Tensor*> state_tensors(const PrimitiveLayer& layer) {
    auto mut = state_tensors(const_cast<PrimitiveLayer&>(layer));
    return {mut.begin(), mut.end()};
}

int64_t param_count(const PrimitiveLayer& layer) {
    int64_t n = 0;
    for (const Tensor* t : trainable_params(layer)) n += t->size();
    return n;
}

void kaiming_init(PrimitiveLayer& layer, Rng& rng) {
    if (auto* d = std::get_if<Dense>(&layer)) {
        const double std = std::sqrt(2.0 / d->in_dim);
        for (float& w : d->weight.data) w = static_cast<float>(rng.normal(0.0, std));
        if (d->has_bias) d->bias.fill(0.0f);
    } else if (auto* c = std::get_if<Conv1D>(&layer)) {
        const double std = std::sqrt(2.0 / (static_cast<double>(c->in_ch) * c->kernel));
        for (float& w : c->weight.data) w = static_cast<float>(rng.normal(0.0, std));
        if (c->has_bias) c->bias.fill(0.0f);
    } else if (auto* bn = std::get_if<BatchNorm1D>(&layer)) {
        bn->gamma.fill(1.0f);
        bn->beta.fill(0.0f);
        bn->running_mean.fill(0.0f);
        bn->running_var.fill(1.0f);
    }
}

std::vector<int> output_shape(const PrimitiveLayer& layer, const std::vector<int>& in) {
    if (in.empty()) throw std::runtime_error("shape: missing batch dimension");
    const int b = in[0];
    if (const auto* d = std::get_if<Dense>(&layer)) {
        if (in.size() != 2 || in[1] != d->in_dim)
            throw std::runtime_error("Dense expects (batch, " + std::to_string(d->in_dim) +
                                     "), got " + shape_str(in));
        return {b, d->out_dim};
    }
    if (const auto* c = std::get_if<Conv1D>(&layer)) {
        if (in.size() != 3 || in[1] != c->in_ch)
            throw std::runtime_error("Conv1D expects (batch, " + std::to_string(c->in_ch) +
                                     ", len), got " + shape_str(in));
        const int ol = kernels::conv1d_out_len(in[2], c->kernel, c->stride, c->padding);
        if (ol <= 0)
            throw std::runtime_error("Conv1D output length not positive for input " + shape_str(in));
        return {b, c->out_ch, ol};
    }
    if (const auto* bn = std::get_if<BatchNorm1D>(&layer)) {
        if (in.size() != 3 || in[1] != bn->channels)
            throw std::runtime_error("BatchNorm1D expects (batch, " + std::to_string(bn->channels) +
                                     ", len), got " + shape_str(in));
        return in;
    }
    if (std::holds_alternative<ReLU>(layer)) return in;
    if (std::holds_alternative<GlobalAvgPool1D>(layer)) {
        if (in.size() != 3) throw std::runtime_error("GlobalAvgPool1D expects rank-3 input, got " + shape_str(in));
        return {b, in[1], 1};
    }
    // Flatten
    int64_t flat = 1;
    for (size_t i = 1; i < in.size(); ++i) flat *= in[i];
    return {b, static_cast<int>(flat)};
}

}  // namespace lprune
