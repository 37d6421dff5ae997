#include "lprune/rebuild.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "lprune/rng.hpp"

namespace lprune::rebuild {

namespace {

// input width of the first parametric body layer; empty for passthrough units
std::optional<int> first_param_in_width(const Unit& u) {
    for (const PrimitiveLayer& layer : u.body) {
        if (const auto* c = std::get_if<Conv1D>(&layer)) return c->in_ch;
        if (const auto* d = std::get_if<Dense>(&layer)) return d->in_dim;
    }
    return std::nullopt;
}

int width_out(const Unit& u, int in_width) {
    int w = in_width;
    for (const PrimitiveLayer& layer : u.body) {
        if (const auto* c = std::get_if<Conv1D>(&layer))
            w = c->out_ch;
        else if (const auto* d = std::get_if<Dense>(&layer))
            w = d->out_dim;
        else if (std::holds_alternative<Flatten>(layer))
            throw std::runtime_error("reassemble: unit " + std::to_string(u.id) +
                                     " contains Flatten; width is ambiguous");
    }
    return w;
}

int body_net_stride(const Unit& u) {
    int s = 1;
    for (const PrimitiveLayer& layer : u.body)
        if (const auto* c = std::get_if<Conv1D>(&layer)) s *= c->stride;
    return s;
}

// replace the first parametric layer with a fresh one taking new_in inputs;
// convs also multiply their stride by `inherit`
void rebuild_entry_layer(Unit& u, int new_in, int inherit, Rng& rng) {
    for (PrimitiveLayer& layer : u.body) {
        if (const auto* c = std::get_if<Conv1D>(&layer)) {
            PrimitiveLayer fresh = make_conv1d(new_in, c->out_ch, c->kernel,
                                               c->stride * inherit, c->padding, c->has_bias);
            kaiming_init(fresh, rng);
            layer = std::move(fresh);
            return;
        }
        if (const auto* d = std::get_if<Dense>(&layer)) {
            PrimitiveLayer fresh = make_dense(new_in, d->out_dim, d->has_bias);
            kaiming_init(fresh, rng);
            layer = std::move(fresh);
            return;
        }
    }
}

}  // namespace

PrunedModel reassemble(const ModelGraph& model, const std::vector<int>& retained_unit_ids,
                       uint64_t seed) {
    if (retained_unit_ids.empty()) throw std::runtime_error("reassemble: nothing retained");
    std::vector<bool> keep(model.units.size(), false);
    for (int id : retained_unit_ids) {
        if (id < 0 || id >= static_cast<int>(model.units.size()))
            throw std::runtime_error("reassemble: unit id " + std::to_string(id) + " out of range");
        keep[static_cast<size_t>(id)] = true;
    }

    PrunedModel out;
    out.model.num_classes = model.num_classes;
    out.model.in_channels = model.in_channels;
    out.model.head = model.head;

    Rng rng(mix_seed(seed, 0x7ea55e3bULL));
    int producer_width = model.in_channels;
    int pending_stride = 1;

    for (const Unit& src : model.units) {
        if (!keep[static_cast<size_t>(src.id)]) {
            pending_stride *= body_net_stride(src);
            continue;
        }
        Unit u = src;
        const std::optional<int> old_in = first_param_in_width(u);
        if (old_in.has_value() && (*old_in != producer_width || pending_stride > 1)) {
            rebuild_entry_layer(u, producer_width, pending_stride, rng);
            out.adapter_log.push_back({src.id, *old_in, producer_width});

            if (u.skip == SkipKind::Projection) {
                const auto* p = std::get_if<Conv1D>(&*u.projection);
                if (!p)
                    throw std::runtime_error("reassemble: unit " + std::to_string(src.id) +
                                             " has a non-conv projection");
                PrimitiveLayer fresh = make_conv1d(producer_width, p->out_ch, p->kernel,
                                                   p->stride * pending_stride, p->padding, p->has_bias);
                kaiming_init(fresh, rng);
                u.projection = std::move(fresh);
            } else if (u.skip == SkipKind::Identity) {
                const int body_w = width_out(u, producer_width);
                const int body_s = body_net_stride(u);
                if (body_w != producer_width || body_s != 1) {
                    // identity no longer type-checks; splice in a 1x1 projection
                    PrimitiveLayer fresh = make_conv1d(producer_width, body_w, 1, body_s, 0, false);
                    kaiming_init(fresh, rng);
                    u.skip = SkipKind::Projection;
                    u.projection = std::move(fresh);
                }
            }
        }
        producer_width = width_out(u, producer_width);
        pending_stride = 1;
        u.id = static_cast<int>(out.model.units.size());
        out.retained_source_ids.push_back(src.id);
        out.model.units.push_back(std::move(u));
    }

    // head entry width
    for (PrimitiveLayer& layer : out.model.head) {
        auto* d = std::get_if<Dense>(&layer);
        if (!d) continue;
        if (d->in_dim != producer_width) {
            PrimitiveLayer fresh = make_dense(producer_width, d->out_dim, d->has_bias);
            kaiming_init(fresh, rng);
            out.adapter_log.push_back({-1, d->in_dim, producer_width});
            layer = std::move(fresh);
        }
        break;
    }
    return out;
}

double evaluate_split(const ModelGraph& model, const signal::SignalDataset& ds,
                      const std::vector<int>& indices, int batch_size) {
    if (indices.empty()) throw std::runtime_error("evaluate_split: empty index list");
    const int n_batches = static_cast<int>((indices.size() + static_cast<size_t>(batch_size) - 1) / batch_size);
    int64_t correct = 0;
#pragma omp parallel for schedule(dynamic) reduction(+ : correct)
    for (int bi = 0; bi < n_batches; ++bi) {
        const size_t first = static_cast<size_t>(bi) * batch_size;
        const size_t count = std::min(static_cast<size_t>(batch_size), indices.size() - first);
        Tensor batch;
        std::vector<int> labels;
        signal::make_batch(ds, indices, first, count, batch, labels);
        correct += correct_count(model, batch, labels);
    }
    return static_cast<double>(correct) / static_cast<double>(indices.size());
}

FitResult fit(ModelGraph& model, const signal::SignalDataset& ds, const signal::Split& split,
              const TrainConfig& cfg, const EpochCallback& on_epoch) {
    if (split.train.empty()) throw std::runtime_error("fit: empty training split");
    if (cfg.batch_size < 2) throw std::runtime_error("fit: batch size must be >= 2");

    FitResult res;
    ModelGraph best_weights = model;
    std::vector<int> order = split.train;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const float lr = lr_at_epoch(cfg, epoch);
        Rng shuffle_rng(mix_seed(cfg.seed, 0xf17e9ac4ULL, static_cast<uint64_t>(epoch)));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

        double loss_sum = 0.0;
        int n_batches = 0;
        for (size_t first = 0; first < order.size(); first += static_cast<size_t>(cfg.batch_size)) {
            const size_t count = std::min(static_cast<size_t>(cfg.batch_size), order.size() - first);
            if (count < 2) break;  // BatchNorm needs more than one value per channel
            Tensor batch;
            std::vector<int> labels;
            signal::make_batch(ds, order, first, count, batch, labels);
            loss_sum += backward_and_step(model, batch, labels, lr);
            ++n_batches;
        }

        EpochStats st;
        st.epoch = epoch;
        st.lr = lr;
        st.train_loss = n_batches ? loss_sum / n_batches : 0.0;
        st.val_acc = split.val.empty() ? 0.0 : evaluate_split(model, ds, split.val);
        st.test_acc = split.test.empty() ? 0.0 : evaluate_split(model, ds, split.test);
        res.curve.push_back(st);
        if (on_epoch) on_epoch(st);

        if (st.val_acc > res.best_val_acc || res.best_epoch < 0) {
            res.best_val_acc = st.val_acc;
            res.best_epoch = epoch;
            res.final_test_acc = st.test_acc;
            best_weights = model;
        }
    }
    model = std::move(best_weights);
    return res;
}

FitResult train_from_scratch(const ModelGraph& architecture, const signal::SignalDataset& ds,
                             const signal::Split& split, const TrainConfig& cfg,
                             ModelGraph* trained, const EpochCallback& on_epoch) {
    ModelGraph fresh = architecture;
    Rng rng(mix_seed(cfg.seed, 0x5c9a7c31ULL));
    kaiming_init_model(fresh, rng);
    FitResult res = fit(fresh, ds, split, cfg, on_epoch);
    if (trained) *trained = std::move(fresh);
    return res;
}

PruneReport make_report(const std::string& model_name, const std::string& dataset_name,
                        double pruning_rate, double original_acc, double pruned_acc,
                        const ModelGraph& original, const ModelGraph& pruned, int signal_length) {
    PruneReport r;
    r.model_name = model_name;
    r.dataset_name = dataset_name;
    r.pruning_rate = pruning_rate;
    r.original_acc = original_acc;
    r.pruned_acc = pruned_acc;
    r.delta_acc = pruned_acc - original_acc;
    r.original_flops = count_flops(original, signal_length);
    r.pruned_flops = count_flops(pruned, signal_length);
    r.original_params = count_params(original);
    r.pruned_params = count_params(pruned);
    r.flops_pr = 100.0 * (1.0 - static_cast<double>(r.pruned_flops) / static_cast<double>(r.original_flops));
    r.params_pr = 100.0 * (1.0 - static_cast<double>(r.pruned_params) / static_cast<double>(r.original_params));
    return r;
}

void write_report_csv(const PruneReport& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "model,dataset,pr,original_acc,acc,delta_acc,delta_flops,delta_params,flops_pr,params_pr\n";
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%.2f,%.2f,%.2f,%.2f,%lld,%lld,%.2f,%.2f\n",
                  r.pruning_rate * 100.0, r.original_acc, r.pruned_acc, r.delta_acc,
                  static_cast<long long>(r.pruned_flops - r.original_flops),
                  static_cast<long long>(r.pruned_params - r.original_params),
                  r.flops_pr, r.params_pr);
    out << r.model_name << ',' << r.dataset_name << ',' << buf;
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace lprune::rebuild
