#include <cmath>
#include <stdexcept>

#include "engine_internal.hpp"
#include "lprune/kernels.hpp"

namespace lprune::detail {

namespace {

std::string unit_tag(int unit_id) {
    return unit_id < 0 ? std::string("head") : "unit " + std::to_string(unit_id);
}

Tensor bn_forward(const BatchNorm1D& bn, const Tensor& x, Mode mode, LayerCtx* ctx, int unit_id) {
    if (x.rank() != 3 || x.dim(1) != bn.channels)
        throw std::runtime_error(unit_tag(unit_id) + ": BatchNorm1D expects (batch, " +
                                 std::to_string(bn.channels) + ", len), got " + shape_str(x.shape));
    const int b = x.dim(0), c = x.dim(1), len = x.dim(2);
    Tensor y = Tensor::zeros(x.shape);
    if (mode == Mode::Eval) {
#pragma omp parallel for
        for (int ch = 0; ch < c; ++ch) {
            const float inv = 1.0f / std::sqrt(bn.running_var.data[ch] + bn.eps);
            const float g = bn.gamma.data[ch], m = bn.running_mean.data[ch], be = bn.beta.data[ch];
            for (int n = 0; n < b; ++n) {
                const int64_t off = (static_cast<int64_t>(n) * c + ch) * len;
                for (int l = 0; l < len; ++l) y.data[off + l] = g * (x.data[off + l] - m) * inv + be;
            }
        }
        return y;
    }
    // train mode: batch statistics, cached for backward
    if (!ctx) throw std::runtime_error("BatchNorm1D train-mode forward needs a trace");
    const int64_t n_per_ch = static_cast<int64_t>(b) * len;
    if (n_per_ch < 2) throw std::runtime_error(unit_tag(unit_id) + ": BatchNorm1D needs >= 2 values per channel");
    ctx->mean.assign(c, 0.0);
    ctx->inv_std.assign(c, 0.0);
    ctx->xhat = Tensor::zeros(x.shape);
#pragma omp parallel for
    for (int ch = 0; ch < c; ++ch) {
        double sum = 0.0;
        for (int n = 0; n < b; ++n) {
            const int64_t off = (static_cast<int64_t>(n) * c + ch) * len;
            for (int l = 0; l < len; ++l) sum += x.data[off + l];
        }
        const double mean = sum / static_cast<double>(n_per_ch);
        double sq = 0.0;
        for (int n = 0; n < b; ++n) {
            const int64_t off = (static_cast<int64_t>(n) * c + ch) * len;
            for (int l = 0; l < len; ++l) {
                const double d = x.data[off + l] - mean;
                sq += d * d;
            }
        }
        const double var = sq / static_cast<double>(n_per_ch);
        const double inv = 1.0 / std::sqrt(var + bn.eps);
        ctx->mean[ch] = mean;
        ctx->inv_std[ch] = inv;
        const float g = bn.gamma.data[ch], be = bn.beta.data[ch];
        for (int n = 0; n < b; ++n) {
            const int64_t off = (static_cast<int64_t>(n) * c + ch) * len;
            for (int l = 0; l < len; ++l) {
                const float xh = static_cast<float>((x.data[off + l] - mean) * inv);
                ctx->xhat.data[off + l] = xh;
                y.data[off + l] = g * xh + be;
            }
        }
    }
    return y;
}

}  // namespace

Tensor apply_layer(const PrimitiveLayer& layer, const Tensor& x, Mode mode,
                   LayerCtx* ctx, int unit_id) {
    if (ctx) ctx->input = x;
    if (const auto* d = std::get_if<Dense>(&layer)) {
        if (x.rank() != 2 || x.dim(1) != d->in_dim)
            throw std::runtime_error(unit_tag(unit_id) + ": Dense expects (batch, " +
                                     std::to_string(d->in_dim) + "), got " + shape_str(x.shape));
        Tensor y = Tensor::zeros({x.dim(0), d->out_dim});
        kernels::dense_forward(x.ptr(), x.dim(0), d->in_dim, d->weight.ptr(),
                               d->has_bias ? d->bias.ptr() : nullptr, d->out_dim, y.ptr());
        return y;
    }
    if (const auto* c = std::get_if<Conv1D>(&layer)) {
        if (x.rank() != 3 || x.dim(1) != c->in_ch)
            throw std::runtime_error(unit_tag(unit_id) + ": Conv1D expects (batch, " +
                                     std::to_string(c->in_ch) + ", len), got " + shape_str(x.shape));
        const int ol = kernels::conv1d_out_len(x.dim(2), c->kernel, c->stride, c->padding);
        if (ol <= 0)
            throw std::runtime_error(unit_tag(unit_id) + ": Conv1D output length not positive for input " +
                                     shape_str(x.shape));
        Tensor y = Tensor::zeros({x.dim(0), c->out_ch, ol});
        kernels::conv1d_forward(x.ptr(), x.dim(0), c->in_ch, x.dim(2), c->weight.ptr(),
                                c->has_bias ? c->bias.ptr() : nullptr, c->out_ch, c->kernel,
                                c->stride, c->padding, y.ptr(), ol);
        return y;
    }
    if (const auto* bn = std::get_if<BatchNorm1D>(&layer)) return bn_forward(*bn, x, mode, ctx, unit_id);
    if (std::holds_alternative<ReLU>(layer)) {
        Tensor y = x;
        for (float& v : y.data) v = v > 0.0f ? v : 0.0f;
        return y;
    }
    if (std::holds_alternative<GlobalAvgPool1D>(layer)) {
        if (x.rank() != 3)
            throw std::runtime_error(unit_tag(unit_id) + ": GlobalAvgPool1D expects rank-3 input, got " + shape_str(x.shape));
        const int b = x.dim(0), c = x.dim(1), len = x.dim(2);
        Tensor y = Tensor::zeros({b, c, 1});
        for (int n = 0; n < b; ++n)
            for (int ch = 0; ch < c; ++ch) {
                const int64_t off = (static_cast<int64_t>(n) * c + ch) * len;
                double acc = 0.0;
                for (int l = 0; l < len; ++l) acc += x.data[off + l];
                y.data[static_cast<int64_t>(n) * c + ch] = static_cast<float>(acc / len);
            }
        return y;
    }
    // Flatten
    Tensor y = x;
    int64_t flat = 1;
    for (int i = 1; i < x.rank(); ++i) flat *= x.dim(i);
    y.shape = {x.dim(0), static_cast<int>(flat)};
    return y;
}

namespace {

// Gradient of one layer given dy. Returns dx; writes parameter grads (if any)
// into `pgrads` following trainable_params() order.
Tensor backward_layer(const PrimitiveLayer& layer, const LayerCtx& ctx, const Tensor& dy,
                      Mode mode, std::vector<Tensor>* pgrads) {
    const Tensor& x = ctx.input;
    if (const auto* d = std::get_if<Dense>(&layer)) {
        Tensor dx = Tensor::zeros(x.shape);
        kernels::dense_backward_input(dy.ptr(), d->weight.ptr(), x.dim(0), d->in_dim, d->out_dim, dx.ptr());
        if (pgrads) {
            Tensor dw = Tensor::zeros(d->weight.shape);
            Tensor db = d->has_bias ? Tensor::zeros(d->bias.shape) : Tensor();
            kernels::dense_backward_params(x.ptr(), dy.ptr(), x.dim(0), d->in_dim, d->out_dim,
                                           dw.ptr(), d->has_bias ? db.ptr() : nullptr);
            pgrads->push_back(std::move(dw));
            if (d->has_bias) pgrads->push_back(std::move(db));
        }
        return dx;
    }
    if (const auto* c = std::get_if<Conv1D>(&layer)) {
        const int ol = dy.dim(2);
        Tensor dx = Tensor::zeros(x.shape);
        kernels::conv1d_backward_input(dy.ptr(), x.dim(0), c->in_ch, x.dim(2), c->weight.ptr(),
                                       c->out_ch, c->kernel, c->stride, c->padding, dx.ptr(), ol);
        if (pgrads) {
            Tensor dw = Tensor::zeros(c->weight.shape);
            Tensor db = c->has_bias ? Tensor::zeros(c->bias.shape) : Tensor();
            kernels::conv1d_backward_params(x.ptr(), dy.ptr(), x.dim(0), c->in_ch, x.dim(2),
                                            c->out_ch, c->kernel, c->stride, c->padding,
                                            dw.ptr(), c->has_bias ? db.ptr() : nullptr, ol);
            pgrads->push_back(std::move(dw));
            if (c->has_bias) pgrads->push_back(std::move(db));
        }
        return dx;
    }
    if (const auto* bn = std::get_if<BatchNorm1D>(&layer)) {
        const int b = x.dim(0), c = x.dim(1), len = x.dim(2);
        const int64_t n_per_ch = static_cast<int64_t>(b) * len;
        Tensor dx = Tensor::zeros(x.shape);
        Tensor dgamma = Tensor::zeros({c});
        Tensor dbeta = Tensor::zeros({c});
#pragma omp parallel for
        for (int ch = 0; ch < c; ++ch) {
            const double g = bn->gamma.data[ch];
            if (mode == Mode::Eval) {
                const double inv = 1.0 / std::sqrt(static_cast<double>(bn->running_var.data[ch]) + bn->eps);
                const double m = bn->running_mean.data[ch];
                double sg = 0.0, sb = 0.0;
                for (int n = 0; n < b; ++n) {
                    const int64_t off = (static_cast<int64_t>(n) * c + ch) * len;
                    for (int l = 0; l < len; ++l) {
                        const double dyv = dy.data[off + l];
                        sg += dyv * (x.data[off + l] - m) * inv;
                        sb += dyv;
                        dx.data[off + l] = static_cast<float>(dyv * g * inv);
                    }
                }
                dgamma.data[ch] = static_cast<float>(sg);
                dbeta.data[ch] = static_cast<float>(sb);
                continue;
            }
            const double inv = ctx.inv_std[ch];
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0, sg = 0.0, sb = 0.0;
            for (int n = 0; n < b; ++n) {
                const int64_t off = (static_cast<int64_t>(n) * c + ch) * len;
                for (int l = 0; l < len; ++l) {
                    const double dyv = dy.data[off + l];
                    const double xh = ctx.xhat.data[off + l];
                    sg += dyv * xh;
                    sb += dyv;
                    sum_dxhat += dyv * g;
                    sum_dxhat_xhat += dyv * g * xh;
                }
            }
            const double nn = static_cast<double>(n_per_ch);
            for (int n = 0; n < b; ++n) {
                const int64_t off = (static_cast<int64_t>(n) * c + ch) * len;
                for (int l = 0; l < len; ++l) {
                    const double dxhat = static_cast<double>(dy.data[off + l]) * g;
                    const double xh = ctx.xhat.data[off + l];
                    dx.data[off + l] = static_cast<float>(inv * (dxhat - sum_dxhat / nn - xh * sum_dxhat_xhat / nn));
                }
            }
            dgamma.data[ch] = static_cast<float>(sg);
            dbeta.data[ch] = static_cast<float>(sb);
        }
        if (pgrads) {
            pgrads->push_back(std::move(dgamma));
            pgrads->push_back(std::move(dbeta));
        }
        return dx;
    }
    if (std::holds_alternative<ReLU>(layer)) {
        Tensor dx = dy;
        for (int64_t i = 0; i < dx.size(); ++i)
            if (x.data[i] <= 0.0f) dx.data[i] = 0.0f;
        return dx;
    }
    if (std::holds_alternative<GlobalAvgPool1D>(layer)) {
        const int b = x.dim(0), c = x.dim(1), len = x.dim(2);
        Tensor dx = Tensor::zeros(x.shape);
        for (int n = 0; n < b; ++n)
            for (int ch = 0; ch < c; ++ch) {
                const float v = dy.data[static_cast<int64_t>(n) * c + ch] / static_cast<float>(len);
                const int64_t off = (static_cast<int64_t>(n) * c + ch) * len;
                for (int l = 0; l < len; ++l) dx.data[off + l] = v;
            }
        return dx;
    }
    // Flatten: reshape back
    Tensor dx = dy;
    dx.shape = x.shape;
    return dx;
}

Tensor add_tensors(const Tensor& a, const Tensor& b, int unit_id) {
    if (!a.same_shape(b))
        throw std::runtime_error("unit " + std::to_string(unit_id) + ": skip shape " + shape_str(b.shape) +
                                 " does not match body output " + shape_str(a.shape));
    Tensor out = a;
    for (int64_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
    return out;
}

}  // namespace

Tensor forward_model(const ModelGraph& model, const Tensor& batch, Mode mode,
                     ForwardTrace* trace, std::vector<Tensor>* unit_outputs) {
    if (trace) {
        trace->units.assign(model.units.size(), UnitCtx{});
        trace->head.assign(model.head.size(), LayerCtx{});
    }
    Tensor x = batch;
    for (size_t ui = 0; ui < model.units.size(); ++ui) {
        const Unit& u = model.units[ui];
        UnitCtx* uctx = trace ? &trace->units[ui] : nullptr;
        if (uctx) {
            uctx->unit_input = x;
            uctx->body.assign(u.body.size(), LayerCtx{});
        }
        Tensor h = x;
        for (size_t li = 0; li < u.body.size(); ++li)
            h = apply_layer(u.body[li], h, mode, uctx ? &uctx->body[li] : nullptr, u.id);
        if (u.skip != SkipKind::None) {
            Tensor s;
            if (u.skip == SkipKind::Identity) {
                s = x;
            } else {
                if (!u.projection)
                    throw std::runtime_error("unit " + std::to_string(u.id) + ": projection skip without projection layer");
                s = apply_layer(*u.projection, x, mode, uctx ? &uctx->proj : nullptr, u.id);
            }
            Tensor pre = add_tensors(h, s, u.id);
            if (uctx) uctx->pre_act = pre;
            for (float& v : pre.data) v = v > 0.0f ? v : 0.0f;
            h = std::move(pre);
        }
        x = std::move(h);
        if (unit_outputs) unit_outputs->push_back(x);
    }
    for (size_t li = 0; li < model.head.size(); ++li)
        x = apply_layer(model.head[li], x, mode, trace ? &trace->head[li] : nullptr, -1);
    return x;
}

Tensor backward_model(const ModelGraph& model, const ForwardTrace& trace,
                      const Tensor& dout, Mode mode, GradBuffers& grads) {
    Tensor dy = dout;
    for (int li = static_cast<int>(model.head.size()) - 1; li >= 0; --li) {
        grads.head[li].clear();
        dy = backward_layer(model.head[li], trace.head[li], dy, mode, &grads.head[li]);
    }
    for (int ui = static_cast<int>(model.units.size()) - 1; ui >= 0; --ui) {
        const Unit& u = model.units[ui];
        const UnitCtx& uctx = trace.units[ui];
        Tensor dbody;
        Tensor dskip;
        if (u.skip != SkipKind::None) {
            // through the post-add relu
            Tensor dpre = dy;
            for (int64_t i = 0; i < dpre.size(); ++i)
                if (uctx.pre_act.data[i] <= 0.0f) dpre.data[i] = 0.0f;
            dbody = dpre;
            if (u.skip == SkipKind::Identity) {
                dskip = std::move(dpre);
            } else {
                grads.unit_proj[ui].clear();
                dskip = backward_layer(*u.projection, uctx.proj, dpre, mode, &grads.unit_proj[ui]);
            }
        } else {
            dbody = std::move(dy);
        }
        for (int li = static_cast<int>(u.body.size()) - 1; li >= 0; --li) {
            grads.unit_body[ui][li].clear();
            dbody = backward_layer(u.body[li], uctx.body[li], dbody, mode, &grads.unit_body[ui][li]);
        }
        if (u.skip != SkipKind::None)
            dbody = add_tensors(dbody, dskip, u.id);
        dy = std::move(dbody);
    }
    return dy;
}

void refresh_running_stats(ModelGraph& model, const ForwardTrace& trace) {
    for (size_t ui = 0; ui < model.units.size(); ++ui) {
        Unit& u = model.units[ui];
        for (size_t li = 0; li < u.body.size(); ++li) {
            auto* bn = std::get_if<BatchNorm1D>(&u.body[li]);
            if (!bn) continue;
            const LayerCtx& ctx = trace.units[ui].body[li];
            if (ctx.mean.empty()) continue;
            const Tensor& x = ctx.input;
            const int64_t n = static_cast<int64_t>(x.dim(0)) * x.dim(2);
            const double bessel = n > 1 ? static_cast<double>(n) / static_cast<double>(n - 1) : 1.0;
            for (int ch = 0; ch < bn->channels; ++ch) {
                const double var_b = 1.0 / (ctx.inv_std[ch] * ctx.inv_std[ch]) - bn->eps;
                bn->running_mean.data[ch] = static_cast<float>((1.0 - bn->momentum) * bn->running_mean.data[ch] +
                                                               bn->momentum * ctx.mean[ch]);
                bn->running_var.data[ch] = static_cast<float>((1.0 - bn->momentum) * bn->running_var.data[ch] +
                                                              bn->momentum * var_b * bessel);
            }
        }
    }
}

}  // namespace lprune::detail

// ---- public entry points ----

namespace lprune {

Tensor forward(const ModelGraph& model, const Tensor& batch) {
    return detail::forward_model(model, batch, detail::Mode::Eval, nullptr, nullptr);
}

Tensor forward_collect(const ModelGraph& model, const Tensor& batch, int unit_index) {
    if (unit_index < 0 || unit_index >= static_cast<int>(model.units.size()))
        throw std::runtime_error("forward_collect: unit index " + std::to_string(unit_index) + " out of range");
    std::vector<Tensor> outs;
    detail::forward_model(model, batch, detail::Mode::Eval, nullptr, &outs);
    return std::move(outs[static_cast<size_t>(unit_index)]);
}

std::vector<Tensor> forward_all_units(const ModelGraph& model, const Tensor& batch) {
    std::vector<Tensor> outs;
    detail::forward_model(model, batch, detail::Mode::Eval, nullptr, &outs);
    return outs;
}

GradBuffers GradBuffers::like(const ModelGraph& model) {
    GradBuffers g;
    g.unit_body.resize(model.units.size());
    g.unit_proj.resize(model.units.size());
    for (size_t ui = 0; ui < model.units.size(); ++ui)
        g.unit_body[ui].resize(model.units[ui].body.size());
    g.head.resize(model.head.size());
    return g;
}

void for_each_param(ModelGraph& model, GradBuffers& grads,
                    const std::function<void(Tensor&, Tensor&)>& fn) {
    for (size_t ui = 0; ui < model.units.size(); ++ui) {
        Unit& u = model.units[ui];
        for (size_t li = 0; li < u.body.size(); ++li) {
            auto params = trainable_params(u.body[li]);
            auto& layer_grads = grads.unit_body[ui][li];
            for (size_t pi = 0; pi < params.size() && pi < layer_grads.size(); ++pi)
                fn(*params[pi], layer_grads[pi]);
        }
        if (u.projection) {
            auto params = trainable_params(*u.projection);
            for (size_t pi = 0; pi < params.size() && pi < grads.unit_proj[ui].size(); ++pi)
                fn(*params[pi], grads.unit_proj[ui][pi]);
        }
    }
    for (size_t li = 0; li < model.head.size(); ++li) {
        auto params = trainable_params(model.head[li]);
        for (size_t pi = 0; pi < params.size() && pi < grads.head[li].size(); ++pi)
            fn(*params[pi], grads.head[li][pi]);
    }
}

namespace {

// softmax cross-entropy; returns mean loss, fills dlogits (softmax - onehot)/b
double softmax_xent(const Tensor& logits, const std::vector<int>& labels, Tensor* dlogits) {
    const int b = logits.dim(0), c = logits.dim(1);
    if (static_cast<int>(labels.size()) != b)
        throw std::runtime_error("loss: label count " + std::to_string(labels.size()) +
                                 " does not match batch " + std::to_string(b));
    double total = 0.0;
    for (int n = 0; n < b; ++n) {
        const float* row = logits.ptr() + static_cast<int64_t>(n) * c;
        const int y = labels[static_cast<size_t>(n)];
        if (y < 0 || y >= c) throw std::runtime_error("loss: label " + std::to_string(y) + " out of range");
        float m = row[0];
        for (int i = 1; i < c; ++i) m = std::max(m, row[i]);
        double denom = 0.0;
        for (int i = 0; i < c; ++i) denom += std::exp(static_cast<double>(row[i]) - m);
        total += -(static_cast<double>(row[y]) - m - std::log(denom));
        if (dlogits) {
            for (int i = 0; i < c; ++i) {
                const double p = std::exp(static_cast<double>(row[i]) - m) / denom;
                dlogits->data[static_cast<int64_t>(n) * c + i] =
                    static_cast<float>((p - (i == y ? 1.0 : 0.0)) / b);
            }
        }
    }
    return total / b;
}

}  // namespace

float compute_loss(const ModelGraph& model, const Tensor& batch, const std::vector<int>& labels) {
    detail::ForwardTrace trace;
    Tensor logits = detail::forward_model(model, batch, detail::Mode::Train, &trace, nullptr);
    return static_cast<float>(softmax_xent(logits, labels, nullptr));
}

std::pair<float, GradBuffers> loss_gradients(const ModelGraph& model, const Tensor& batch,
                                             const std::vector<int>& labels) {
    detail::ForwardTrace trace;
    Tensor logits = detail::forward_model(model, batch, detail::Mode::Train, &trace, nullptr);
    Tensor dlogits = Tensor::zeros(logits.shape);
    const double loss = softmax_xent(logits, labels, &dlogits);
    GradBuffers grads = GradBuffers::like(model);
    detail::backward_model(model, trace, dlogits, detail::Mode::Train, grads);
    return {static_cast<float>(loss), std::move(grads)};
}

float backward_and_step(ModelGraph& model, const Tensor& batch,
                        const std::vector<int>& labels, float lr) {
    detail::ForwardTrace trace;
    Tensor logits = detail::forward_model(model, batch, detail::Mode::Train, &trace, nullptr);
    Tensor dlogits = Tensor::zeros(logits.shape);
    const double loss = softmax_xent(logits, labels, &dlogits);
    if (!std::isfinite(loss))
        throw std::runtime_error("training diverged: non-finite loss " + std::to_string(loss));
    GradBuffers grads = GradBuffers::like(model);
    detail::backward_model(model, trace, dlogits, detail::Mode::Train, grads);
    for_each_param(model, grads, [lr](Tensor& p, Tensor& g) {
        for (int64_t i = 0; i < p.size(); ++i) p.data[i] -= lr * g.data[i];
    });
    detail::refresh_running_stats(model, trace);
    return static_cast<float>(loss);
}

GradBuffers backward_from_logits(const ModelGraph& model, const Tensor& batch,
                                 const Tensor& dlogits, bool eval_mode) {
    const detail::Mode mode = eval_mode ? detail::Mode::Eval : detail::Mode::Train;
    detail::ForwardTrace trace;
    detail::forward_model(model, batch, mode, &trace, nullptr);
    GradBuffers grads = GradBuffers::like(model);
    detail::backward_model(model, trace, dlogits, mode, grads);
    return grads;
}

int correct_count(const ModelGraph& model, const Tensor& batch, const std::vector<int>& labels) {
    Tensor logits = forward(model, batch);
    const int b = logits.dim(0), c = logits.dim(1);
    int correct = 0;
    for (int n = 0; n < b; ++n) {
        const float* row = logits.ptr() + static_cast<int64_t>(n) * c;
        int arg = 0;
        for (int i = 1; i < c; ++i)
            if (row[i] > row[arg]) arg = i;
        if (arg == labels[static_cast<size_t>(n)]) ++correct;
    }
    return correct;
}

}  // namespace lprune
