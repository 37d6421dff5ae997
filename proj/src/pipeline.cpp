#include "lprune/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "lprune/checkpoint.hpp"
#include "lprune/model.hpp"
#include "lprune/partition.hpp"
#include "lprune/presets.hpp"
#include "lprune/rebuild.hpp"
#include "lprune/rng.hpp"
#include "lprune/selection.hpp"
#include "lprune/signal.hpp"
#include "lprune/similarity.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace lprune::cli {

using rebuild::EpochCallback;
using rebuild::EpochStats;
using rebuild::evaluate_split;
using rebuild::fit;
using rebuild::FitResult;
using rebuild::make_report;
using rebuild::reassemble;
using rebuild::train_from_scratch;
using rebuild::write_report_csv;

namespace {

// stage seed tags; every stage draws its randomness from its own stream so
// adding or reordering stages never shifts another stage's numbers
constexpr uint64_t kTagData = 1;
constexpr uint64_t kTagSplit = 2;
constexpr uint64_t kTagInit = 3;
constexpr uint64_t kTagTrain = 4;
constexpr uint64_t kTagSim = 5;
constexpr uint64_t kTagSelect = 6;
constexpr uint64_t kTagRebuild = 7;
constexpr uint64_t kTagFinetune = 8;
constexpr uint64_t kTagScratch = 9;

uint64_t stage_seed(const PipelineConfig& cfg, uint64_t tag) {
    return mix_seed(cfg.seed, 0x97c65a5fULL, tag);
}

class LogLine {
   public:
    explicit LogLine(const std::string& stage) { os_ << "stage=" << stage; }
    template <typename T>
    LogLine& kv(const std::string& key, const T& value) {
        os_ << ' ' << key << '=' << value;
        return *this;
    }
    ~LogLine() { std::cout << os_.str() << std::endl; }

   private:
    std::ostringstream os_;
};

std::string fmt_acc(double frac) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", frac);
    return buf;
}

void write_text_atomic(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << text;
    }
    fs::rename(tmp, path);
}

void write_json_file(const std::string& path, const json& j) {
    write_text_atomic(path, j.dump(2) + "\n");
}

json read_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    return j;
}

void record_stage(const PipelineConfig& cfg, const std::string& stage,
                  const std::vector<std::string>& artifacts) {
    const std::string path = cfg.out_dir + "/manifest.json";
    json m;
    if (fs::exists(path)) m = read_json_file(path);
    m["version"] = 1;
    json e;
    e["config_hash"] = cfg.config_hash;
    e["seed"] = cfg.seed;
    e["artifacts"] = artifacts;
    m["stages"][stage] = e;
    write_json_file(path, m);
}

signal::GenOptions gen_options(const PipelineConfig& cfg) {
    signal::GenOptions o;
    for (const auto& name : cfg.schemes) o.schemes.push_back(signal::scheme_from_name(name));
    o.snrs_db = cfg.snrs_db;
    o.examples_per_class_per_snr = cfg.examples_per_class_per_snr;
    o.signal_length = cfg.signal_length;
    o.sps = cfg.sps;
    return o;
}

signal::SignalDataset load_dataset_for(const PipelineConfig& cfg) {
    const std::string path = cfg.resolved_dataset_path();
    if (!fs::exists(path)) throw ConfigError("dataset not found at " + path + "; run gen-data first");
    return signal::load_dataset(path);
}

signal::Split make_split(const PipelineConfig& cfg, const signal::SignalDataset& ds) {
    return signal::split_dataset(ds, cfg.train_ratio, cfg.val_ratio, cfg.test_ratio,
                                 stage_seed(cfg, kTagSplit));
}

ModelGraph load_required_checkpoint(const std::string& path, const std::string& hint) {
    if (!fs::exists(path)) throw ConfigError(path + " not found; " + hint);
    return load_checkpoint(path);
}

ModelGraph load_baseline(const PipelineConfig& cfg) {
    return load_required_checkpoint(cfg.out_dir + "/baseline.ckpt", "run train first");
}

void write_curve_csv(const std::string& path, const std::vector<EpochStats>& curve) {
    std::ostringstream out;
    out << "epoch,lr,train_loss,val_acc,test_acc\n";
    char row[160];
    for (const auto& st : curve) {
        std::snprintf(row, sizeof(row), "%d,%.8g,%.8f,%.6f,%.6f\n", st.epoch,
                      static_cast<double>(st.lr), st.train_loss, st.val_acc, st.test_acc);
        out << row;
    }
    write_text_atomic(path, out.str());
}

EpochCallback log_epochs(const std::string& stage) {
    return [stage](const EpochStats& st) {
        LogLine(stage)
            .kv("epoch", st.epoch)
            .kv("lr", st.lr)
            .kv("train_loss", st.train_loss)
            .kv("val_acc", fmt_acc(st.val_acc))
            .kv("test_acc", fmt_acc(st.test_acc));
    };
}

std::vector<selection::BlockRange> blocks_from_segmentation(const partition::Segmentation& seg,
                                                            int l) {
    std::vector<selection::BlockRange> blocks;
    const auto ranges = seg.blocks(l);
    for (size_t b = 0; b < ranges.size(); ++b)
        blocks.push_back({static_cast<int>(b), ranges[b].first, ranges[b].second});
    return blocks;
}

std::string join_ids(const std::vector<int>& ids, char sep) {
    std::ostringstream os;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (i) os << sep;
        os << ids[i];
    }
    return os.str();
}

// per-block argmax with no cross-block budget
selection::SelectionPlan select_max_score(const ModelGraph& model,
                                          const std::vector<selection::BlockRange>& blocks,
                                          int signal_length, uint64_t seed) {
    selection::SelectionPlan plan;
    int total_units = 0;
    for (const auto& b : blocks) {
        auto best = selection::select_best(model, b, signal_length, seed);
        for (int id : selection::combination_unit_ids(b, best.combo.mask))
            plan.retained_unit_ids.push_back(id);
        plan.per_block.push_back(std::move(best));
        total_units += b.hi - b.lo + 1;
    }
    std::sort(plan.retained_unit_ids.begin(), plan.retained_unit_ids.end());
    plan.achieved_pruning_rate =
        1.0 - static_cast<double>(plan.retained_unit_ids.size()) / total_units;
    return plan;
}

selection::SelectionPlan run_selection(const PipelineConfig& cfg, const ModelGraph& model,
                                       const std::vector<selection::BlockRange>& blocks,
                                       int signal_length) {
    const uint64_t seed = stage_seed(cfg, kTagSelect);
    if (cfg.select_mode == "budget")
        return selection::select_with_budget(model, blocks, cfg.pruning_rate, signal_length, seed);
    return select_max_score(model, blocks, signal_length, seed);
}

}  // namespace

RunLock::RunLock(const std::string& out_dir) : path_(out_dir + "/.lock") {
    int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
        throw std::runtime_error("another run holds " + path_ +
                                 " (remove it if no run is active)");
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    ssize_t n = ::write(fd, pid.data(), pid.size());
    (void)n;
    ::close(fd);
}

RunLock::~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

void cmd_gen_data(const PipelineConfig& cfg) {
    const auto opt = gen_options(cfg);
    auto ds = signal::generate_dataset(opt, stage_seed(cfg, kTagData));
    const std::string path = cfg.resolved_dataset_path();
    signal::save_dataset(ds, path);
    LogLine("gen-data")
        .kv("classes", ds.num_classes)
        .kv("snr_levels", cfg.snrs_db.size())
        .kv("records", ds.examples.size())
        .kv("signal_length", ds.signal_length)
        .kv("path", path);
    record_stage(cfg, "gen-data", {path});
}

void cmd_train(const PipelineConfig& cfg) {
    auto ds = load_dataset_for(cfg);
    auto split = make_split(cfg, ds);
    auto model = make_preset(cfg.arch, ds.num_classes);
    Rng init_rng(stage_seed(cfg, kTagInit));
    kaiming_init_model(model, init_rng);

    TrainConfig tc = cfg.train;
    tc.seed = stage_seed(cfg, kTagTrain);
    auto res = fit(model, ds, split, tc, log_epochs("train"));

    const std::string ckpt = cfg.out_dir + "/baseline.ckpt";
    save_checkpoint(model, ckpt);
    write_curve_csv(cfg.out_dir + "/train_curve.csv", res.curve);

    json metrics;
    metrics["best_epoch"] = res.best_epoch;
    metrics["best_val_acc"] = res.best_val_acc;
    metrics["final_test_acc"] = res.final_test_acc;
    metrics["params"] = count_params(model);
    metrics["flops_per_example"] = count_flops(model, ds.signal_length);
    write_json_file(cfg.out_dir + "/train_metrics.json", metrics);

    LogLine("train")
        .kv("arch", cfg.arch)
        .kv("best_epoch", res.best_epoch)
        .kv("best_val_acc", fmt_acc(res.best_val_acc))
        .kv("test_acc", fmt_acc(res.final_test_acc))
        .kv("checkpoint", ckpt);
    record_stage(cfg, "train", {ckpt, "train_curve.csv", "train_metrics.json"});
}

void cmd_similarity(const PipelineConfig& cfg) {
    auto ds = load_dataset_for(cfg);
    auto split = make_split(cfg, ds);
    auto model = load_baseline(cfg);

    similarity::SimilarityOptions opt;
    opt.samples_per_batch = cfg.samples_per_batch;
    opt.num_batches = cfg.num_batches;
    opt.metric = similarity::metric_from_name(cfg.metric);
    opt.stratified = cfg.stratified;
    opt.seed = stage_seed(cfg, kTagSim);
    auto res = similarity::similarity_matrix(model, ds, split.train, opt);

    similarity::save_matrix_csv(res.s, res.l, res.l, cfg.out_dir + "/similarity_S.csv");
    similarity::save_z_csv(res.z, cfg.out_dir + "/similarity_z.csv");

    json meta;
    meta["metric"] = cfg.metric;
    meta["num_batches"] = cfg.num_batches;
    meta["samples_per_batch"] = cfg.samples_per_batch;
    meta["stratified"] = cfg.stratified;
    meta["units"] = res.l;
    write_json_file(cfg.out_dir + "/similarity_meta.json", meta);

    LogLine("similarity").kv("metric", cfg.metric).kv("units", res.l).kv("batches", cfg.num_batches);
    record_stage(cfg, "similarity",
                 {"similarity_S.csv", "similarity_z.csv", "similarity_meta.json"});
}

void cmd_partition(const PipelineConfig& cfg) {
    const std::string zpath = cfg.out_dir + "/similarity_z.csv";
    if (!fs::exists(zpath)) throw ConfigError(zpath + " not found; run similarity first");
    auto z = similarity::load_z_csv(zpath);
    if (cfg.k > static_cast<int>(z.size()))
        throw ConfigError("partition.k = " + std::to_string(cfg.k) + " exceeds the " +
                          std::to_string(z.size()) + " prunable units");

    auto seg = partition::fisher_segment(z, cfg.k, partition::criterion_from_name(cfg.criterion));
    const auto ranges = seg.blocks(static_cast<int>(z.size()));

    json j;
    j["k"] = cfg.k;
    j["criterion"] = cfg.criterion;
    j["cost"] = seg.cost;
    j["starts"] = seg.starts;
    json blocks = json::array();
    for (const auto& [lo, hi] : ranges) blocks.push_back({lo, hi});
    j["blocks"] = blocks;
    write_json_file(cfg.out_dir + "/partition.json", j);

    for (size_t b = 0; b < ranges.size(); ++b)
        LogLine("partition").kv("block", b).kv("lo", ranges[b].first).kv("hi", ranges[b].second);
    LogLine("partition").kv("k", cfg.k).kv("cost", seg.cost);
    record_stage(cfg, "partition", {"partition.json"});
}

namespace {

std::vector<selection::BlockRange> load_partition_blocks(const PipelineConfig& cfg) {
    const std::string path = cfg.out_dir + "/partition.json";
    if (!fs::exists(path)) throw ConfigError(path + " not found; run partition first");
    json j = read_json_file(path);
    std::vector<selection::BlockRange> blocks;
    int b = 0;
    for (const auto& pair : j.at("blocks"))
        blocks.push_back({b++, pair.at(0).get<int>(), pair.at(1).get<int>()});
    if (blocks.empty()) throw std::runtime_error(path + ": no blocks");
    return blocks;
}

void write_plan(const PipelineConfig& cfg, const selection::SelectionPlan& plan) {
    json j;
    j["mode"] = cfg.select_mode;
    j["pruning_rate"] = cfg.pruning_rate;
    j["achieved_pruning_rate"] = plan.achieved_pruning_rate;
    j["retained_unit_ids"] = plan.retained_unit_ids;
    json blocks = json::array();
    for (const auto& sc : plan.per_block) {
        json e;
        e["block_id"] = sc.combo.block_id;
        e["mask"] = sc.combo.mask;
        e["kept"] = sc.combo.size;
        e["score"] = sc.score;
        blocks.push_back(e);
    }
    j["per_block"] = blocks;
    write_json_file(cfg.out_dir + "/plan.json", j);
}

std::vector<int> load_plan_retained(const PipelineConfig& cfg) {
    const std::string path = cfg.out_dir + "/plan.json";
    if (!fs::exists(path)) throw ConfigError(path + " not found; run select first");
    json j = read_json_file(path);
    std::vector<int> ids = j.at("retained_unit_ids").get<std::vector<int>>();
    if (ids.empty()) throw std::runtime_error(path + ": empty retained set");
    return ids;
}

}  // namespace

void cmd_select(const PipelineConfig& cfg) {
    auto model = load_baseline(cfg);
    auto blocks = load_partition_blocks(cfg);
    auto plan = run_selection(cfg, model, blocks, cfg.signal_length);
    write_plan(cfg, plan);

    for (const auto& sc : plan.per_block)
        LogLine("select")
            .kv("block", sc.combo.block_id)
            .kv("mask", sc.combo.mask)
            .kv("kept", sc.combo.size)
            .kv("score", sc.score);
    LogLine("select")
        .kv("mode", cfg.select_mode)
        .kv("retained", join_ids(plan.retained_unit_ids, '|'))
        .kv("achieved_pruning_rate", fmt_acc(plan.achieved_pruning_rate));
    record_stage(cfg, "select", {"plan.json"});
}

void cmd_prune(const PipelineConfig& cfg) {
    // the stages below need the dataset and the trained baseline up front
    auto ds = load_dataset_for(cfg);
    auto split = make_split(cfg, ds);
    auto baseline = load_baseline(cfg);

    cmd_similarity(cfg);
    cmd_partition(cfg);
    cmd_select(cfg);

    auto retained = load_plan_retained(cfg);
    auto pruned = reassemble(baseline, retained, stage_seed(cfg, kTagRebuild));
    for (const auto& a : pruned.adapter_log)
        LogLine("rebuild").kv("unit", a.unit_id).kv("old_in", a.old_in_dim).kv("new_in", a.new_in_dim);
    save_checkpoint(pruned.model, cfg.out_dir + "/pruned_init.ckpt");

    const double baseline_acc = evaluate_split(baseline, ds, split.test);

    TrainConfig tc = cfg.train;
    tc.epochs = cfg.finetune_epochs;
    tc.seed = stage_seed(cfg, kTagFinetune);
    auto res = fit(pruned.model, ds, split, tc, log_epochs("finetune"));
    save_checkpoint(pruned.model, cfg.out_dir + "/pruned.ckpt");
    write_curve_csv(cfg.out_dir + "/finetune_curve.csv", res.curve);

    auto report = make_report(cfg.arch, cfg.dataset_name, cfg.pruning_rate, 100.0 * baseline_acc,
                              100.0 * res.final_test_acc, baseline, pruned.model,
                              ds.signal_length);
    write_report_csv(report, cfg.out_dir + "/report.csv");

    LogLine("prune")
        .kv("baseline_acc", fmt_acc(baseline_acc))
        .kv("pruned_acc", fmt_acc(res.final_test_acc))
        .kv("flops_pr", report.flops_pr)
        .kv("params_pr", report.params_pr);
    record_stage(cfg, "prune",
                 {"pruned_init.ckpt", "pruned.ckpt", "finetune_curve.csv", "report.csv"});
}

void cmd_finetune(const PipelineConfig& cfg, bool scratch) {
    auto ds = load_dataset_for(cfg);
    auto split = make_split(cfg, ds);
    auto model = load_required_checkpoint(cfg.resolved_finetune_checkpoint(),
                                          "run prune or pass finetune.checkpoint");

    TrainConfig tc = cfg.train;
    tc.epochs = cfg.finetune_epochs;
    FitResult res;
    std::string ckpt, curve;
    if (scratch) {
        tc.seed = stage_seed(cfg, kTagScratch);
        ModelGraph trained;
        res = train_from_scratch(model, ds, split, tc, &trained, log_epochs("scratch"));
        ckpt = cfg.out_dir + "/scratch.ckpt";
        curve = cfg.out_dir + "/scratch_curve.csv";
        save_checkpoint(trained, ckpt);
    } else {
        tc.seed = stage_seed(cfg, kTagFinetune);
        res = fit(model, ds, split, tc, log_epochs("finetune"));
        ckpt = cfg.out_dir + "/pruned.ckpt";
        curve = cfg.out_dir + "/finetune_curve.csv";
        save_checkpoint(model, ckpt);
    }
    write_curve_csv(curve, res.curve);
    LogLine(scratch ? "scratch" : "finetune")
        .kv("best_epoch", res.best_epoch)
        .kv("best_val_acc", fmt_acc(res.best_val_acc))
        .kv("test_acc", fmt_acc(res.final_test_acc))
        .kv("checkpoint", ckpt);
    record_stage(cfg, scratch ? "scratch" : "finetune", {ckpt, curve});
}

void cmd_report(const PipelineConfig& cfg) {
    auto ds = load_dataset_for(cfg);
    auto split = make_split(cfg, ds);
    auto baseline = load_baseline(cfg);
    auto pruned = load_required_checkpoint(cfg.out_dir + "/pruned.ckpt", "run prune first");

    const double orig = evaluate_split(baseline, ds, split.test);
    const double after = evaluate_split(pruned, ds, split.test);
    auto report = make_report(cfg.arch, cfg.dataset_name, cfg.pruning_rate, 100.0 * orig,
                              100.0 * after, baseline, pruned, ds.signal_length);
    write_report_csv(report, cfg.out_dir + "/report.csv");

    LogLine("report")
        .kv("original_acc", report.original_acc)
        .kv("pruned_acc", report.pruned_acc)
        .kv("delta_acc", report.delta_acc)
        .kv("flops_pr", report.flops_pr)
        .kv("params_pr", report.params_pr);
    record_stage(cfg, "report", {"report.csv"});
}

void cmd_ablate(const PipelineConfig& cfg) {
    auto ds = load_dataset_for(cfg);
    auto split = make_split(cfg, ds);
    auto model = load_baseline(cfg);

    std::ostringstream out;
    out << "metric,k,retained_units,num_retained,achieved_pruning_rate\n";
    for (const auto& metric : cfg.ablation_metrics) {
        similarity::SimilarityOptions opt;
        opt.samples_per_batch = cfg.samples_per_batch;
        opt.num_batches = cfg.num_batches;
        opt.metric = similarity::metric_from_name(metric);
        opt.stratified = cfg.stratified;
        opt.seed = stage_seed(cfg, kTagSim);
        auto res = similarity::similarity_matrix(model, ds, split.train, opt);

        for (int k : cfg.ablation_k) {
            if (k > res.l)
                throw ConfigError("ablation.k_values contains " + std::to_string(k) +
                                  " but the model has " + std::to_string(res.l) + " units");
            auto seg = partition::fisher_segment(res.z, k,
                                                 partition::criterion_from_name(cfg.criterion));
            auto blocks = blocks_from_segmentation(seg, res.l);
            // unconstrained per-block argmax: a fixed retention budget is not
            // feasible for every k in the sweep, and the sweep records
            // structure, not a pruning-rate target
            auto plan = select_max_score(model, blocks, ds.signal_length,
                                         stage_seed(cfg, kTagSelect));
            char row[256];
            std::snprintf(row, sizeof(row), "%s,%d,%s,%zu,%.6f\n", metric.c_str(), k,
                          join_ids(plan.retained_unit_ids, '|').c_str(),
                          plan.retained_unit_ids.size(), plan.achieved_pruning_rate);
            out << row;
            LogLine("ablate")
                .kv("metric", metric)
                .kv("k", k)
                .kv("retained", join_ids(plan.retained_unit_ids, '|'));
        }
    }
    write_text_atomic(cfg.out_dir + "/ablation.csv", out.str());
    record_stage(cfg, "ablate", {"ablation.csv"});
}

void run_command(const std::string& name, const PipelineConfig& cfg, bool scratch) {
    fs::create_directories(cfg.out_dir);
    RunLock lock(cfg.out_dir);
    if (name == "gen-data") cmd_gen_data(cfg);
    else if (name == "train") cmd_train(cfg);
    else if (name == "similarity") cmd_similarity(cfg);
    else if (name == "partition") cmd_partition(cfg);
    else if (name == "select") cmd_select(cfg);
    else if (name == "prune") cmd_prune(cfg);
    else if (name == "finetune") cmd_finetune(cfg, scratch);
    else if (name == "report") cmd_report(cfg);
    else if (name == "ablate") cmd_ablate(cfg);
    else throw ConfigError("unknown command '" + name + "'");
}

}  // namespace lprune::cli
