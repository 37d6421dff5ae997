#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lprune/model.hpp"
#include "lprune/train.hpp"

namespace lprune::selection {

// Non-empty subset of a block's units, as a bitmask over positions within the
// block (bit i = block's i-th unit).
struct LayerCombination {
    int block_id = 0;
    uint32_t mask = 0;
    int size = 0;
};

// All 2^m - 1 non-empty masks for a block of m units, ordered by (popcount
// ascending, mask value ascending). m is guarded to 20.
std::vector<LayerCombination> enumerate_combinations(int block_id, int block_size);

// Copy of `model` where the units named in `kept_unit_ids` keep their trained
// weights and every other unit is re-initialized from the candidate's own
// stream (head untouched).
ModelGraph simulate_reinit(const ModelGraph& model, const std::vector<int>& kept_unit_ids,
                           uint64_t seed);

// Training-free saliency: R = 1^T f_|theta|(1) with every parameter replaced
// by its magnitude, an all-ones input, and BatchNorm reduced to |scale| with
// neutral running statistics. Returns log(R); -inf when R is 0 (ranked last).
double synflow_score(const ModelGraph& model, int signal_length);

// The |theta| copy synflow_score evaluates, exposed for gradient checks.
ModelGraph synflow_network(const ModelGraph& model);

// R itself plus per-parameter gradients dR/dtheta on the |theta| network.
struct SynflowGrads {
    double r = 0.0;
    GradBuffers grads;
};
SynflowGrads synflow_gradients(const ModelGraph& abs_model, int signal_length);

struct ScoredCombination {
    LayerCombination combo;
    double score = 0.0;  // log R
};

struct BlockRange {
    int block_id = 0;
    int lo = 0;  // first unit id in the block
    int hi = 0;  // last unit id, inclusive
};

// Scores every combination of one block (candidates run in parallel, each on
// a private copy; candidate seed = mix_seed(seed, block_id, mask)) and keeps
// the best under a >= update, so the latest tied candidate in enumeration
// order wins. Returns all scores too, in enumeration order.
ScoredCombination select_best(const ModelGraph& model, const BlockRange& block,
                              int signal_length, uint64_t seed,
                              std::vector<ScoredCombination>* all_scores = nullptr);

struct SelectionPlan {
    std::vector<ScoredCombination> per_block;  // chosen combination per block
    std::vector<int> retained_unit_ids;        // sorted
    double achieved_pruning_rate = 0.0;        // fraction of units removed
};

// Global pruning-rate search: retained budget = round((1 - rate) * l), every
// block keeps >= 1 unit, and the per-block retention counts maximizing the
// total log score are found by dynamic programming over blocks. Throws when
// the budget is smaller than the number of blocks.
SelectionPlan select_with_budget(const ModelGraph& model, const std::vector<BlockRange>& blocks,
                                 double pruning_rate, int signal_length, uint64_t seed);

std::vector<int> combination_unit_ids(const BlockRange& block, uint32_t mask);

}  // namespace lprune::selection
