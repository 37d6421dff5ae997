#pragma once

#include <optional>
#include <vector>

#include "lprune/layers.hpp"

namespace lprune {

enum class SkipKind { None, Identity, Projection };

// Pruning granule: a short layer chain with an optional residual connection.
// When skip != None the unit output is relu(body(x) + skip(x)).
struct Unit {
    int id = 0;
    std::vector<PrimitiveLayer> body;
    SkipKind skip = SkipKind::None;
    std::optional<PrimitiveLayer> projection;  // set iff skip == Projection
};

struct ModelGraph {
    std::vector<Unit> units;
    std::vector<PrimitiveLayer> head;  // classifier, never a pruning candidate
    int num_classes = 0;
    int in_channels = 2;
};

std::vector<int> unit_output_shape(const Unit& unit, const std::vector<int>& in);

// Default forward input shape: (batch, in_channels, signal_length), except for
// models whose first layer is Dense, which take (batch, in_dim).
std::vector<int> model_input_shape(const ModelGraph& model, int batch, int signal_length);

// Walks shapes through every unit and the head; throws naming the offending
// unit on any mismatch.
void validate(const ModelGraph& model, int signal_length);

// Trainable scalar count: weights + biases + BN affine pairs.
int64_t count_params(const ModelGraph& model);

// Per-example multiply-accumulates * 2, summed over Dense and Conv1D layers
// (projections included). Everything else counts zero.
int64_t count_flops(const ModelGraph& model, int signal_length);

// Eval-mode forward; BatchNorm uses running statistics.
Tensor forward(const ModelGraph& model, const Tensor& batch);

// Eval-mode forward returning the activation leaving unit `unit_index`.
Tensor forward_collect(const ModelGraph& model, const Tensor& batch, int unit_index);

// Eval-mode forward returning every unit's output activation in order.
std::vector<Tensor> forward_all_units(const ModelGraph& model, const Tensor& batch);

void kaiming_init_model(ModelGraph& model, Rng& rng);

int64_t unit_param_count(const Unit& unit);

}  // namespace lprune
