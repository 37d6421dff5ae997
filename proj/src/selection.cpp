#include "lprune/selection.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "lprune/rng.hpp"

namespace lprune::selection {

std::vector<LayerCombination> enumerate_combinations(int block_id, int block_size) {
    if (block_size < 1) throw std::runtime_error("enumerate_combinations: empty block");
    if (block_size > 20) throw std::runtime_error("enumerate_combinations: block larger than 20 units");
    std::vector<LayerCombination> out;
    out.reserve((1u << block_size) - 1);
    for (int size = 1; size <= block_size; ++size)
        for (uint32_t mask = 1; mask < (1u << block_size); ++mask)
            if (std::popcount(mask) == size)
                out.push_back({block_id, mask, size});
    return out;
}

std::vector<int> combination_unit_ids(const BlockRange& block, uint32_t mask) {
    std::vector<int> ids;
    for (int i = 0; i <= block.hi - block.lo; ++i)
        if (mask & (1u << i)) ids.push_back(block.lo + i);
    return ids;
}

ModelGraph simulate_reinit(const ModelGraph& model, const std::vector<int>& kept_unit_ids,
                           uint64_t seed) {
    ModelGraph out = model;
    Rng rng(seed);
    for (Unit& u : out.units) {
        if (std::find(kept_unit_ids.begin(), kept_unit_ids.end(), u.id) != kept_unit_ids.end())
            continue;
        for (PrimitiveLayer& layer : u.body) kaiming_init(layer, rng);
        if (u.projection) kaiming_init(*u.projection, rng);
    }
    return out;
}

ModelGraph synflow_network(const ModelGraph& model) {
    ModelGraph abs_model = model;
    for (Unit& u : abs_model.units) {
        for (PrimitiveLayer& layer : u.body)
            for (Tensor* t : trainable_params(layer))
                for (float& v : t->data) v = std::abs(v);
        if (u.projection)
            for (Tensor* t : trainable_params(*u.projection))
                for (float& v : t->data) v = std::abs(v);
    }
    for (PrimitiveLayer& layer : abs_model.head)
        for (Tensor* t : trainable_params(layer))
            for (float& v : t->data) v = std::abs(v);
    // neutral running stats so eval-mode BN is exactly the |scale| map
    auto neutralize = [](PrimitiveLayer& layer) {
        if (auto* bn = std::get_if<BatchNorm1D>(&layer)) {
            bn->running_mean.fill(0.0f);
            bn->running_var.fill(1.0f - bn->eps);
        }
    };
    for (Unit& u : abs_model.units) {
        for (PrimitiveLayer& layer : u.body) neutralize(layer);
        if (u.projection) neutralize(*u.projection);
    }
    for (PrimitiveLayer& layer : abs_model.head) neutralize(layer);
    return abs_model;
}

namespace {

double synflow_r(const ModelGraph& abs_model, int signal_length) {
    const std::vector<int> in_shape = model_input_shape(abs_model, 1, signal_length);
    Tensor ones = Tensor::full(in_shape, 1.0f);
    const Tensor logits = forward(abs_model, ones);
    double r = 0.0;
    for (float v : logits.data) r += v;
    return r;
}

}  // namespace

double synflow_score(const ModelGraph& model, int signal_length) {
    const ModelGraph abs_model = synflow_network(model);
    const double r = synflow_r(abs_model, signal_length);
    if (r <= 0.0) return -std::numeric_limits<double>::infinity();
    return std::log(r);
}

SynflowGrads synflow_gradients(const ModelGraph& abs_model, int signal_length) {
    const std::vector<int> in_shape = model_input_shape(abs_model, 1, signal_length);
    Tensor ones = Tensor::full(in_shape, 1.0f);
    const Tensor logits = forward(abs_model, ones);
    SynflowGrads out;
    for (float v : logits.data) out.r += v;
    Tensor dlogits = Tensor::full(logits.shape, 1.0f);
    out.grads = backward_from_logits(abs_model, ones, dlogits, /*eval_mode=*/true);
    return out;
}

ScoredCombination select_best(const ModelGraph& model, const BlockRange& block,
                              int signal_length, uint64_t seed,
                              std::vector<ScoredCombination>* all_scores) {
    const std::vector<LayerCombination> combos = enumerate_combinations(block.block_id, block.hi - block.lo + 1);
    std::vector<double> scores(combos.size(), 0.0);

    // embarrassingly parallel; each candidate builds its own model copy, and
    // scores land at their enumeration index so reduction order is fixed
#pragma omp parallel for schedule(dynamic)
    for (size_t ci = 0; ci < combos.size(); ++ci) {
        const LayerCombination& combo = combos[ci];
        const uint64_t cand_seed = mix_seed(seed, static_cast<uint64_t>(combo.block_id), combo.mask);
        const ModelGraph candidate = simulate_reinit(model, combination_unit_ids(block, combo.mask), cand_seed);
        scores[ci] = synflow_score(candidate, signal_length);
    }

    ScoredCombination best{combos[0], scores[0]};
    for (size_t ci = 1; ci < combos.size(); ++ci)
        if (scores[ci] >= best.score) best = {combos[ci], scores[ci]};
    if (all_scores) {
        all_scores->clear();
        for (size_t ci = 0; ci < combos.size(); ++ci) all_scores->push_back({combos[ci], scores[ci]});
    }
    return best;
}

SelectionPlan select_with_budget(const ModelGraph& model, const std::vector<BlockRange>& blocks,
                                 double pruning_rate, int signal_length, uint64_t seed) {
    if (pruning_rate <= 0.0 || pruning_rate >= 1.0)
        throw std::runtime_error("select_with_budget: pruning rate must lie in (0, 1)");
    if (blocks.empty()) throw std::runtime_error("select_with_budget: no blocks");
    const int l = static_cast<int>(model.units.size());
    const int budget = static_cast<int>(std::lround((1.0 - pruning_rate) * l));
    const int nb = static_cast<int>(blocks.size());
    if (budget < nb)
        throw std::runtime_error("select_with_budget: budget " + std::to_string(budget) +
                                 " cannot keep >= 1 unit in each of " + std::to_string(nb) + " blocks");

    // best combination per (block, retained count); >= keeps the later mask
    std::vector<std::vector<ScoredCombination>> best_at(static_cast<size_t>(nb));
    for (int b = 0; b < nb; ++b) {
        const int m = blocks[static_cast<size_t>(b)].hi - blocks[static_cast<size_t>(b)].lo + 1;
        std::vector<ScoredCombination> all;
        select_best(model, blocks[static_cast<size_t>(b)], signal_length, seed, &all);
        std::vector<ScoredCombination> by_count(static_cast<size_t>(m) + 1);
        std::vector<bool> seen(static_cast<size_t>(m) + 1, false);
        for (const ScoredCombination& sc : all) {
            const size_t c = static_cast<size_t>(sc.combo.size);
            if (!seen[c] || sc.score >= by_count[c].score) {
                by_count[c] = sc;
                seen[c] = true;
            }
        }
        best_at[static_cast<size_t>(b)] = std::move(by_count);
    }

    // dp over blocks: dp[b][t] = best total log score keeping t units in the
    // first b blocks; ties prefer the smaller count in the current block
    const double ninf = -std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> dp(static_cast<size_t>(nb) + 1,
                                        std::vector<double>(static_cast<size_t>(budget) + 1, ninf));
    std::vector<std::vector<int>> choice(static_cast<size_t>(nb) + 1,
                                         std::vector<int>(static_cast<size_t>(budget) + 1, 0));
    dp[0][0] = 0.0;
    for (int b = 0; b < nb; ++b) {
        const int m = blocks[static_cast<size_t>(b)].hi - blocks[static_cast<size_t>(b)].lo + 1;
        for (int total = 1; total <= budget; ++total) {
            // c ascending with a strict test: tied totals keep the smallest
            // retention count in this block
            for (int c = 1; c <= m && c <= total; ++c) {
                if (dp[static_cast<size_t>(b)][static_cast<size_t>(total - c)] == ninf) continue;
                const double cand = dp[static_cast<size_t>(b)][static_cast<size_t>(total - c)] +
                                    best_at[static_cast<size_t>(b)][static_cast<size_t>(c)].score;
                if (cand > dp[static_cast<size_t>(b + 1)][static_cast<size_t>(total)]) {
                    dp[static_cast<size_t>(b + 1)][static_cast<size_t>(total)] = cand;
                    choice[static_cast<size_t>(b + 1)][static_cast<size_t>(total)] = c;
                }
            }
        }
    }
    if (dp[static_cast<size_t>(nb)][static_cast<size_t>(budget)] == ninf)
        throw std::runtime_error("select_with_budget: no feasible retention for budget " + std::to_string(budget));

    SelectionPlan plan;
    plan.per_block.assign(static_cast<size_t>(nb), {});
    int t = budget;
    for (int b = nb; b >= 1; --b) {
        const int c = choice[static_cast<size_t>(b)][static_cast<size_t>(t)];
        plan.per_block[static_cast<size_t>(b - 1)] = best_at[static_cast<size_t>(b - 1)][static_cast<size_t>(c)];
        t -= c;
    }
    for (int b = 0; b < nb; ++b) {
        const std::vector<int> ids = combination_unit_ids(blocks[static_cast<size_t>(b)],
                                                          plan.per_block[static_cast<size_t>(b)].combo.mask);
        plan.retained_unit_ids.insert(plan.retained_unit_ids.end(), ids.begin(), ids.end());
    }
    std::sort(plan.retained_unit_ids.begin(), plan.retained_unit_ids.end());
    plan.achieved_pruning_rate = 1.0 - static_cast<double>(plan.retained_unit_ids.size()) / l;
    return plan;
}

}  // namespace lprune::selection
