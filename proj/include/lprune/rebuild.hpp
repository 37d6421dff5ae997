#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lprune/model.hpp"
#include "lprune/signal.hpp"
#include "lprune/train.hpp"

namespace lprune::rebuild {

struct AdapterEntry {
    int unit_id = 0;  // source unit id; -1 for the head
    int old_in_dim = 0;
    int new_in_dim = 0;
};

struct PrunedModel {
    ModelGraph model;
    std::vector<int> retained_source_ids;  // original unit id per new unit
    std::vector<AdapterEntry> adapter_log;
};

// Drops every unit not named in `retained_unit_ids` (sorted ids into `model`)
// and repairs the seams: a retained unit whose producer changed gets its
// first parametric layer re-instantiated (kaiming, from `seed`) with the new
// input width, and inherits the cumulative stride of the units dropped in
// front of it so downstream temporal shapes are preserved. Projection skips
// are rebuilt alongside; an identity skip that no longer type-checks becomes
// a fresh 1x1 projection. The head's first Dense is rebuilt when the feature
// width entering it changed. Unit ids are renumbered 0..n-1.
PrunedModel reassemble(const ModelGraph& model, const std::vector<int>& retained_unit_ids,
                       uint64_t seed);

struct EpochStats {
    int epoch = 0;
    float lr = 0.0f;
    double train_loss = 0.0;
    double val_acc = 0.0;
    double test_acc = 0.0;
};

struct FitResult {
    std::vector<EpochStats> curve;
    double best_val_acc = 0.0;
    int best_epoch = -1;
    double final_test_acc = 0.0;  // test accuracy of the best-validation weights
};

// SGD over shuffled mini-batches with stepwise lr decay. Keeps the
// best-validation weights and restores them at the end. Deterministic for a
// fixed seed and thread count-independent. on_epoch, if set, is called after
// every epoch with its stats.
using EpochCallback = std::function<void(const EpochStats&)>;
FitResult fit(ModelGraph& model, const signal::SignalDataset& ds, const signal::Split& split,
              const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// accuracy over an index list, eval mode, batched
double evaluate_split(const ModelGraph& model, const signal::SignalDataset& ds,
                      const std::vector<int>& indices, int batch_size = 256);

// fit() on a kaiming re-initialized copy of the architecture (seeded from
// cfg.seed), for the fine-tune vs from-scratch comparison. The trained copy
// is written to *trained when given.
FitResult train_from_scratch(const ModelGraph& architecture, const signal::SignalDataset& ds,
                             const signal::Split& split, const TrainConfig& cfg,
                             ModelGraph* trained = nullptr,
                             const EpochCallback& on_epoch = {});

struct PruneReport {
    std::string model_name;
    std::string dataset_name;
    double pruning_rate = 0.0;     // requested, fraction
    double original_acc = 0.0;     // percent
    double pruned_acc = 0.0;       // percent
    double delta_acc = 0.0;        // points
    int64_t original_flops = 0;
    int64_t pruned_flops = 0;
    int64_t original_params = 0;
    int64_t pruned_params = 0;
    double flops_pr = 0.0;         // percent reduced
    double params_pr = 0.0;        // percent reduced
};

PruneReport make_report(const std::string& model_name, const std::string& dataset_name,
                        double pruning_rate, double original_acc, double pruned_acc,
                        const ModelGraph& original, const ModelGraph& pruned, int signal_length);

// header + one row, fixed formatting so identical runs emit identical bytes
void write_report_csv(const PruneReport& r, const std::string& path);

}  // namespace lprune::rebuild
