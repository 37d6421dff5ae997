#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "lprune/train.hpp"

namespace lprune::cli {

struct ConfigError : std::runtime_error {
    int line;
    ConfigError(int line_, const std::string& msg)
        : std::runtime_error("config line " + std::to_string(line_) + ": " + msg), line(line_) {}
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg), line(0) {}
};

// Text config: `key = value` pairs under bracketed sections, `#` comments.
// Keys outside any section: seed, out_dir, arch. See README for the grammar
// and the full key list. Unknown sections or keys are errors.
struct PipelineConfig {
    uint64_t seed = 0;
    std::string out_dir = "out";
    std::string arch = "vgg8";
    std::string config_hash = "0";

    // [dataset]
    std::string dataset_path;  // defaults to <out_dir>/dataset.amrd
    std::string dataset_name = "amr";
    std::vector<std::string> schemes = {"bpsk", "qpsk", "8psk", "pam4", "qam16", "cpfsk"};
    std::vector<int> snrs_db = {10, 12, 14, 16, 18};
    int examples_per_class_per_snr = 100;
    int signal_length = 128;
    int sps = 8;
    double train_ratio = 0.6;
    double val_ratio = 0.2;
    double test_ratio = 0.2;

    // [train]
    TrainConfig train;

    // [similarity]
    std::string metric = "cka";
    int samples_per_batch = 500;
    int num_batches = 5;
    bool stratified = false;

    // [partition]
    int k = 3;
    std::string criterion = "sse";

    // [prune]
    double pruning_rate = 0.5;
    int finetune_epochs = 50;
    std::string select_mode = "budget";  // "budget" or "max_score"

    // [finetune]
    std::string finetune_checkpoint;  // defaults to <out_dir>/pruned_init.ckpt

    // [ablation]
    std::vector<std::string> ablation_metrics = {"cka", "cosine"};
    std::vector<int> ablation_k = {3, 4, 5, 6, 7};

    std::string resolved_dataset_path() const {
        return dataset_path.empty() ? out_dir + "/dataset.amrd" : dataset_path;
    }
    std::string resolved_finetune_checkpoint() const {
        return finetune_checkpoint.empty() ? out_dir + "/pruned_init.ckpt" : finetune_checkpoint;
    }
};

PipelineConfig parse_config_text(const std::string& text);
PipelineConfig parse_config_file(const std::string& path);

// FNV-1a over the raw config bytes, hex
std::string hash_bytes(const std::string& bytes);

}  // namespace lprune::cli
