#include "lprune/model.hpp"

#include <stdexcept>

namespace lprune {

namespace {

// First parametric layer of the whole graph decides the default input rank.
const PrimitiveLayer* first_layer(const ModelGraph& model) {
    for (const Unit& u : model.units)
        if (!u.body.empty()) return &u.body.front();
    if (!model.head.empty()) return &model.head.front();
    return nullptr;
}

}  // namespace

std::vector<int> unit_output_shape(const Unit& unit, const std::vector<int>& in) {
    std::vector<int> shape = in;
    for (const PrimitiveLayer& layer : unit.body) shape = output_shape(layer, shape);
    if (unit.skip != SkipKind::None) {
        std::vector<int> skip_shape = in;
        if (unit.skip == SkipKind::Projection) {
            if (!unit.projection) throw std::runtime_error("unit " + std::to_string(unit.id) + ": projection skip without projection layer");
            skip_shape = output_shape(*unit.projection, in);
        }
        if (skip_shape != shape)
            throw std::runtime_error("unit " + std::to_string(unit.id) + ": skip shape " + shape_str(skip_shape) +
                                     " does not match body output " + shape_str(shape));
    }
    return shape;
}

std::vector<int> model_input_shape(const ModelGraph& model, int batch, int signal_length) {
    if (const PrimitiveLayer* l = first_layer(model))
        if (const auto* d = std::get_if<Dense>(l)) return {batch, d->in_dim};
    return {batch, model.in_channels, signal_length};
}

void validate(const ModelGraph& model, int signal_length) {
    std::vector<int> shape = model_input_shape(model, 1, signal_length);
    for (size_t i = 0; i < model.units.size(); ++i) {
        const Unit& u = model.units[i];
        if (u.id != static_cast<int>(i))
            throw std::runtime_error("unit ids must be consecutive from 0; unit at position " +
                                     std::to_string(i) + " has id " + std::to_string(u.id));
        try {
            shape = unit_output_shape(u, shape);
        } catch (const std::exception& e) {
            throw std::runtime_error("unit " + std::to_string(u.id) + ": " + e.what());
        }
    }
    for (const PrimitiveLayer& layer : model.head) {
        try {
            shape = output_shape(layer, shape);
        } catch (const std::exception& e) {
            throw std::runtime_error(std::string("head: ") + e.what());
        }
    }
    if (model.num_classes > 0 && (shape.size() != 2 || shape[1] != model.num_classes))
        throw std::runtime_error("head output " + shape_str(shape) + " does not produce " +
                                 std::to_string(model.num_classes) + " logits");
}

int64_t unit_param_count(const Unit& unit) {
    int64_t n = 0;
    for (const PrimitiveLayer& layer : unit.body) n += param_count(layer);
    if (unit.projection) n += param_count(*unit.projection);
    return n;
}

int64_t count_params(const ModelGraph& model) {
    int64_t n = 0;
    for (const Unit& u : model.units) n += unit_param_count(u);
    for (const PrimitiveLayer& layer : model.head) n += param_count(layer);
    return n;
}

namespace {

int64_t layer_flops(const PrimitiveLayer& layer, std::vector<int>& shape) {
    int64_t flops = 0;
    if (const auto* d = std::get_if<Dense>(&layer)) {
        flops = 2ll * d->in_dim * d->out_dim;
    } else if (const auto* c = std::get_if<Conv1D>(&layer)) {
        const std::vector<int> out = output_shape(layer, shape);
        flops = 2ll * out[2] * c->out_ch * c->in_ch * c->kernel;
    }
    shape = output_shape(layer, shape);
    return flops;
}

}  // namespace

int64_t count_flops(const ModelGraph& model, int signal_length) {
    std::vector<int> shape = model_input_shape(model, 1, signal_length);
    int64_t flops = 0;
    for (const Unit& u : model.units) {
        std::vector<int> body_shape = shape;
        for (const PrimitiveLayer& layer : u.body) flops += layer_flops(layer, body_shape);
        if (u.projection) {
            std::vector<int> skip_shape = shape;
            flops += layer_flops(*u.projection, skip_shape);
        }
        shape = unit_output_shape(u, shape);
    }
    for (const PrimitiveLayer& layer : model.head) flops += layer_flops(layer, shape);
    return flops;
}

void kaiming_init_model(ModelGraph& model, Rng& rng) {
    for (Unit& u : model.units) {
        for (PrimitiveLayer& layer : u.body) kaiming_init(layer, rng);
        if (u.projection) kaiming_init(*u.projection, rng);
    }
    for (PrimitiveLayer& layer : model.head) kaiming_init(layer, rng);
}

}  // namespace lprune
