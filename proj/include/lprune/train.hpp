#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "lprune/model.hpp"

namespace lprune {

struct TrainConfig {
    float learning_rate = 0.001f;
    int batch_size = 128;
    int epochs = 50;
    float lr_decay_factor = 0.8f;
    int lr_decay_every = 10;
    uint64_t seed = 0;
};

// lr for a 0-indexed epoch under stepwise decay
inline float lr_at_epoch(const TrainConfig& cfg, int epoch) {
    float lr = cfg.learning_rate;
    for (int i = 0; i < epoch / cfg.lr_decay_every; ++i) lr *= cfg.lr_decay_factor;
    return lr;
}

// Gradient tensors mirroring trainable_params() order for every layer.
struct GradBuffers {
    std::vector<std::vector<std::vector<Tensor>>> unit_body;  // [unit][layer][param]
    std::vector<std::vector<Tensor>> unit_proj;               // [unit][param]
    std::vector<std::vector<Tensor>> head;                    // [layer][param]

    static GradBuffers like(const ModelGraph& model);
};

// Visits (param, grad) pairs in a fixed order.
void for_each_param(ModelGraph& model, GradBuffers& grads,
                    const std::function<void(Tensor&, Tensor&)>& fn);

// Mean softmax cross-entropy of a train-mode forward (batch statistics, no
// running-stat update). Exists so finite-difference oracles can probe the
// exact quantity backward_and_step differentiates.
float compute_loss(const ModelGraph& model, const Tensor& batch, const std::vector<int>& labels);

// Loss plus its gradient for every trainable parameter (train-mode forward,
// no update, no running-stat refresh). The analytic side of the
// finite-difference checks against compute_loss.
std::pair<float, GradBuffers> loss_gradients(const ModelGraph& model, const Tensor& batch,
                                             const std::vector<int>& labels);

// One SGD step: train-mode forward, loss, full backward, parameter update,
// BN running-stat refresh. Returns the batch loss. Throws on non-finite loss.
float backward_and_step(ModelGraph& model, const Tensor& batch,
                        const std::vector<int>& labels, float lr);

// Reverse-mode gradients of dlogits . logits with respect to every trainable
// parameter. eval_mode selects BatchNorm's running-statistics path.
GradBuffers backward_from_logits(const ModelGraph& model, const Tensor& batch,
                                 const Tensor& dlogits, bool eval_mode);

// Correctly classified count (argmax logits vs labels), eval mode.
int correct_count(const ModelGraph& model, const Tensor& batch, const std::vector<int>& labels);

}  // namespace lprune
