#include "lprune/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace lprune::cli {

namespace {

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::vector<std::string> split_words(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream iss(s);
    std::string w;
    while (iss >> w) out.push_back(w);
    return out;
}

uint64_t to_u64(const std::string& key, const std::string& v, int line) {
    try {
        if (v.empty() || v[0] == '-') throw std::invalid_argument(v);
        size_t pos = 0;
        uint64_t r = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError(line, key + " expects an unsigned integer, got '" + v + "'");
    }
}

int to_int(const std::string& key, const std::string& v, int line) {
    try {
        size_t pos = 0;
        int r = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError(line, key + " expects an integer, got '" + v + "'");
    }
}

double to_double(const std::string& key, const std::string& v, int line) {
    try {
        size_t pos = 0;
        double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError(line, key + " expects a number, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v, int line) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(line, key + " expects true/false, got '" + v + "'");
}

std::vector<int> to_int_list(const std::string& key, const std::string& v, int line) {
    std::vector<int> out;
    for (const auto& w : split_words(v)) out.push_back(to_int(key, w, line));
    if (out.empty()) throw ConfigError(line, key + " expects at least one value");
    return out;
}

void apply(PipelineConfig& cfg, const std::string& section, const std::string& key,
           const std::string& value, int line) {
    if (section.empty()) {
        if (key == "seed") cfg.seed = to_u64(key, value, line);
        else if (key == "out_dir") cfg.out_dir = value;
        else if (key == "arch") cfg.arch = value;
        else throw ConfigError(line, "unknown key '" + key + "'");
        return;
    }
    if (section == "dataset") {
        if (key == "path") cfg.dataset_path = value;
        else if (key == "name") cfg.dataset_name = value;
        else if (key == "schemes") cfg.schemes = split_words(value);
        else if (key == "snr_db") cfg.snrs_db = to_int_list(key, value, line);
        else if (key == "examples_per_class_per_snr") cfg.examples_per_class_per_snr = to_int(key, value, line);
        else if (key == "signal_length") cfg.signal_length = to_int(key, value, line);
        else if (key == "samples_per_symbol") cfg.sps = to_int(key, value, line);
        else if (key == "train_ratio") cfg.train_ratio = to_double(key, value, line);
        else if (key == "val_ratio") cfg.val_ratio = to_double(key, value, line);
        else if (key == "test_ratio") cfg.test_ratio = to_double(key, value, line);
        else throw ConfigError(line, "unknown key 'dataset." + key + "'");
        return;
    }
    if (section == "train") {
        if (key == "learning_rate") cfg.train.learning_rate = to_double(key, value, line);
        else if (key == "batch_size") cfg.train.batch_size = to_int(key, value, line);
        else if (key == "epochs") cfg.train.epochs = to_int(key, value, line);
        else if (key == "lr_decay_factor") cfg.train.lr_decay_factor = to_double(key, value, line);
        else if (key == "lr_decay_every") cfg.train.lr_decay_every = to_int(key, value, line);
        else throw ConfigError(line, "unknown key 'train." + key + "'");
        return;
    }
    if (section == "similarity") {
        if (key == "metric") cfg.metric = value;
        else if (key == "samples_per_batch") cfg.samples_per_batch = to_int(key, value, line);
        else if (key == "num_batches") cfg.num_batches = to_int(key, value, line);
        else if (key == "stratified") cfg.stratified = to_bool(key, value, line);
        else throw ConfigError(line, "unknown key 'similarity." + key + "'");
        return;
    }
    if (section == "partition") {
        if (key == "k") cfg.k = to_int(key, value, line);
        else if (key == "criterion") cfg.criterion = value;
        else throw ConfigError(line, "unknown key 'partition." + key + "'");
        return;
    }
    if (section == "prune") {
        if (key == "pruning_rate") cfg.pruning_rate = to_double(key, value, line);
        else if (key == "finetune_epochs") cfg.finetune_epochs = to_int(key, value, line);
        else if (key == "select_mode") cfg.select_mode = value;
        else throw ConfigError(line, "unknown key 'prune." + key + "'");
        return;
    }
    if (section == "finetune") {
        if (key == "checkpoint") cfg.finetune_checkpoint = value;
        else throw ConfigError(line, "unknown key 'finetune." + key + "'");
        return;
    }
    if (section == "ablation") {
        if (key == "metrics") cfg.ablation_metrics = split_words(value);
        else if (key == "k_values") cfg.ablation_k = to_int_list(key, value, line);
        else throw ConfigError(line, "unknown key 'ablation." + key + "'");
        return;
    }
    throw ConfigError(line, "unknown section '[" + section + "]'");
}

void validate(const PipelineConfig& cfg) {
    if (cfg.schemes.empty()) throw ConfigError("dataset.schemes must not be empty");
    if (cfg.examples_per_class_per_snr < 1) throw ConfigError("dataset.examples_per_class_per_snr must be >= 1");
    if (cfg.signal_length < cfg.sps) throw ConfigError("dataset.signal_length must be >= samples_per_symbol");
    if (cfg.sps < 1) throw ConfigError("dataset.samples_per_symbol must be >= 1");
    double rs = cfg.train_ratio + cfg.val_ratio + cfg.test_ratio;
    if (std::abs(rs - 1.0) > 1e-9) throw ConfigError("dataset split ratios must sum to 1");
    if (cfg.train.learning_rate <= 0.0) throw ConfigError("train.learning_rate must be > 0");
    if (cfg.train.batch_size < 2) throw ConfigError("train.batch_size must be >= 2");
    if (cfg.train.epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (cfg.metric != "cka" && cfg.metric != "cosine")
        throw ConfigError("similarity.metric must be cka or cosine");
    if (cfg.samples_per_batch < 4) throw ConfigError("similarity.samples_per_batch must be >= 4");
    if (cfg.num_batches < 1) throw ConfigError("similarity.num_batches must be >= 1");
    if (cfg.k < 1) throw ConfigError("partition.k must be >= 1");
    if (cfg.criterion != "sse" && cfg.criterion != "sad")
        throw ConfigError("partition.criterion must be sse or sad");
    if (!(cfg.pruning_rate > 0.0 && cfg.pruning_rate < 1.0))
        throw ConfigError("prune.pruning_rate must be in (0, 1)");
    if (cfg.finetune_epochs < 1) throw ConfigError("prune.finetune_epochs must be >= 1");
    if (cfg.select_mode != "budget" && cfg.select_mode != "max_score")
        throw ConfigError("prune.select_mode must be budget or max_score");
    for (const auto& m : cfg.ablation_metrics)
        if (m != "cka" && m != "cosine")
            throw ConfigError("ablation.metrics must list only cka/cosine, got '" + m + "'");
    for (int k : cfg.ablation_k)
        if (k < 1) throw ConfigError("ablation.k_values must be >= 1");
}

}  // namespace

PipelineConfig parse_config_text(const std::string& text) {
    PipelineConfig cfg;
    std::istringstream iss(text);
    std::string raw;
    std::string section;
    int line = 0;
    while (std::getline(iss, raw)) {
        ++line;
        auto hash = raw.find('#');
        if (hash != std::string::npos) raw = raw.substr(0, hash);
        std::string s = trim(raw);
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw ConfigError(line, "unterminated section header");
            section = trim(s.substr(1, s.size() - 2));
            if (section.empty()) throw ConfigError(line, "empty section name");
            continue;
        }
        auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError(line, "expected key = value");
        std::string key = trim(s.substr(0, eq));
        std::string value = trim(s.substr(eq + 1));
        if (key.empty()) throw ConfigError(line, "empty key");
        if (value.empty()) throw ConfigError(line, "empty value for '" + key + "'");
        apply(cfg, section, key, value, line);
    }
    validate(cfg);
    cfg.config_hash = hash_bytes(text);
    return cfg;
}

PipelineConfig parse_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

std::string hash_bytes(const std::string& bytes) {
    uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return out;
}

}  // namespace lprune::cli
