#pragma once

#include <string>
#include <variant>
#include <vector>

#include "lprune/rng.hpp"
#include "lprune/tensor.hpp"

namespace lprune {

struct Dense {
    int in_dim = 0;
    int out_dim = 0;
    bool has_bias = true;
    Tensor weight;  // [out_dim, in_dim]
    Tensor bias;    // [out_dim]
};

struct Conv1D {
    int in_ch = 0;
    int out_ch = 0;
    int kernel = 1;
    int stride = 1;
    int padding = 0;
    bool has_bias = false;
    Tensor weight;  // [out_ch, in_ch, kernel]
    Tensor bias;    // [out_ch]
};

struct BatchNorm1D {
    int channels = 0;
    float eps = 1e-5f;
    float momentum = 0.1f;
    Tensor gamma;         // trainable scale
    Tensor beta;          // trainable shift
    Tensor running_mean;  // eval-mode statistics, refreshed while training
    Tensor running_var;
};

struct ReLU {};
struct GlobalAvgPool1D {};
struct Flatten {};

using PrimitiveLayer = std::variant<Dense, Conv1D, BatchNorm1D, ReLU, GlobalAvgPool1D, Flatten>;

PrimitiveLayer make_dense(int in_dim, int out_dim, bool has_bias = true);
PrimitiveLayer make_conv1d(int in_ch, int out_ch, int kernel, int stride = 1,
                           int padding = 0, bool has_bias = false);
PrimitiveLayer make_batchnorm(int channels, float eps = 1e-5f, float momentum = 0.1f);

const char* kind_name(const PrimitiveLayer& layer);

// Trainable tensors in fixed order (Dense: weight[, bias]; Conv1D likewise;
// BatchNorm1D: gamma, beta). Gradient buffers mirror this order.
std::vector<Tensor*> trainable_params(PrimitiveLayer& layer);
std::vector<const Tensor*> trainable_params(const PrimitiveLayer& layer);

// Trainable tensors plus running statistics, in serialization order.
std::vector<Tensor*> state_tensors(PrimitiveLayer& layer);
std::vector<const Tensor*> state_tensors(const PrimitiveLayer& layer);

int64_t param_count(const PrimitiveLayer& layer);

// weights ~ N(0, sqrt(2 / fan_in)), biases 0, BN scale 1 / shift 0 with
// neutral running stats. fan_in: Dense in_dim, Conv1D in_ch * kernel.
void kaiming_init(PrimitiveLayer& layer, Rng& rng);

// Output shape for a batch-leading input shape; throws on rank/size mismatch.
std::vector<int> output_shape(const PrimitiveLayer& layer, const std::vector<int>& in);

}  // namespace lprune
