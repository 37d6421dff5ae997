#pragma once

// Shared forward/backward machinery behind model.hpp's eval entry points and
// train.hpp's training step. Not installed; internal to the library.

#include <vector>

#include "lprune/model.hpp"
#include "lprune/train.hpp"

namespace lprune::detail {

enum class Mode { Train, Eval };

struct LayerCtx {
    Tensor input;
    // BatchNorm caches (train mode): per-channel batch statistics
    std::vector<double> mean;
    std::vector<double> inv_std;
    Tensor xhat;
};

struct UnitCtx {
    std::vector<LayerCtx> body;
    LayerCtx proj;
    Tensor unit_input;
    Tensor pre_act;  // body(x) + skip(x) before the post-add relu
};

struct ForwardTrace {
    std::vector<UnitCtx> units;
    std::vector<LayerCtx> head;
};

// trace and unit_outputs may be null. unit_id is for error messages (-1: head).
Tensor apply_layer(const PrimitiveLayer& layer, const Tensor& x, Mode mode,
                   LayerCtx* ctx, int unit_id);

Tensor forward_model(const ModelGraph& model, const Tensor& batch, Mode mode,
                     ForwardTrace* trace, std::vector<Tensor>* unit_outputs);

// dout: gradient w.r.t. the logits. Fills grads; returns gradient w.r.t. the
// model input.
Tensor backward_model(const ModelGraph& model, const ForwardTrace& trace,
                      const Tensor& dout, Mode mode, GradBuffers& grads);

// Writes cached train-mode batch statistics into BN running stats.
void refresh_running_stats(ModelGraph& model, const ForwardTrace& trace);

}  // namespace lprune::detail
