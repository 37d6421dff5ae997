#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <string>

#include "lprune/config.hpp"

using namespace lprune::cli;
using doctest::Contains;

namespace {

const char* kFullConfig =
    "# pipeline settings\n"
    "seed = 42\n"
    "out_dir = /tmp/run7\n"
    "arch = resnet10\n"
    "\n"
    "[dataset]\n"
    "path = /data/custom.amrd\n"
    "name = radio_mix\n"
    "schemes = bpsk qam16 cpfsk\n"
    "snr_db = 0 6 12\n"
    "examples_per_class_per_snr = 250\n"
    "signal_length = 256\n"
    "samples_per_symbol = 16\n"
    "train_ratio = 0.7\n"
    "val_ratio = 0.1\n"
    "test_ratio = 0.2\n"
    "\n"
    "[train]\n"
    "learning_rate = 0.005\n"
    "batch_size = 64\n"
    "epochs = 12\n"
    "lr_decay_factor = 0.5\n"
    "lr_decay_every = 4\n"
    "\n"
    "[similarity]\n"
    "metric = cosine\n"
    "samples_per_batch = 200   # per forward pass\n"
    "num_batches = 3\n"
    "stratified = true\n"
    "\n"
    "[partition]\n"
    "k = 5\n"
    "criterion = sad\n"
    "\n"
    "[prune]\n"
    "pruning_rate = 0.25\n"
    "finetune_epochs = 8\n"
    "select_mode = max_score\n"
    "\n"
    "[finetune]\n"
    "checkpoint = /tmp/run7/warm.ckpt\n"
    "\n"
    "[ablation]\n"
    "metrics = cka\n"
    "k_values = 2 3\n";

int error_line(const std::string& text) {
    try {
        parse_config_text(text);
    } catch (const ConfigError& e) {
        return e.line;
    }
    return -1;
}

}  // namespace

TEST_CASE("every key lands in its field") {
    const PipelineConfig cfg = parse_config_text(kFullConfig);
    CHECK(cfg.seed == 42);
    CHECK(cfg.out_dir == "/tmp/run7");
    CHECK(cfg.arch == "resnet10");
    CHECK(cfg.dataset_path == "/data/custom.amrd");
    CHECK(cfg.dataset_name == "radio_mix");
    CHECK(cfg.schemes == std::vector<std::string>{"bpsk", "qam16", "cpfsk"});
    CHECK(cfg.snrs_db == std::vector<int>{0, 6, 12});
    CHECK(cfg.examples_per_class_per_snr == 250);
    CHECK(cfg.signal_length == 256);
    CHECK(cfg.sps == 16);
    CHECK(cfg.train_ratio == 0.7);
    CHECK(cfg.val_ratio == 0.1);
    CHECK(cfg.test_ratio == 0.2);
    CHECK(cfg.train.learning_rate == doctest::Approx(0.005f));
    CHECK(cfg.train.batch_size == 64);
    CHECK(cfg.train.epochs == 12);
    CHECK(cfg.train.lr_decay_factor == doctest::Approx(0.5f));
    CHECK(cfg.train.lr_decay_every == 4);
    CHECK(cfg.metric == "cosine");
    CHECK(cfg.samples_per_batch == 200);
    CHECK(cfg.num_batches == 3);
    CHECK(cfg.stratified == true);
    CHECK(cfg.k == 5);
    CHECK(cfg.criterion == "sad");
    CHECK(cfg.pruning_rate == 0.25);
    CHECK(cfg.finetune_epochs == 8);
    CHECK(cfg.select_mode == "max_score");
    CHECK(cfg.finetune_checkpoint == "/tmp/run7/warm.ckpt");
    CHECK(cfg.ablation_metrics == std::vector<std::string>{"cka"});
    CHECK(cfg.ablation_k == std::vector<int>{2, 3});
    CHECK(cfg.config_hash == hash_bytes(kFullConfig));
}

TEST_CASE("an empty config is all defaults") {
    const PipelineConfig cfg = parse_config_text("");
    CHECK(cfg.seed == 0);
    CHECK(cfg.out_dir == "out");
    CHECK(cfg.arch == "vgg8");
    CHECK(cfg.schemes ==
          std::vector<std::string>{"bpsk", "qpsk", "8psk", "pam4", "qam16", "cpfsk"});
    CHECK(cfg.snrs_db == std::vector<int>{10, 12, 14, 16, 18});
    CHECK(cfg.examples_per_class_per_snr == 100);
    CHECK(cfg.signal_length == 128);
    CHECK(cfg.sps == 8);
    CHECK(cfg.train.batch_size == 128);
    CHECK(cfg.metric == "cka");
    CHECK(cfg.samples_per_batch == 500);
    CHECK(cfg.num_batches == 5);
    CHECK(cfg.stratified == false);
    CHECK(cfg.k == 3);
    CHECK(cfg.criterion == "sse");
    CHECK(cfg.pruning_rate == 0.5);
    CHECK(cfg.select_mode == "budget");
    CHECK(cfg.ablation_metrics == std::vector<std::string>{"cka", "cosine"});
    CHECK(cfg.ablation_k == std::vector<int>{3, 4, 5, 6, 7});
    CHECK(cfg.resolved_dataset_path() == "out/dataset.amrd");
    CHECK(cfg.resolved_finetune_checkpoint() == "out/pruned_init.ckpt");
}

TEST_CASE("resolved paths follow out_dir unless overridden") {
    PipelineConfig cfg = parse_config_text("out_dir = scratch\n");
    CHECK(cfg.resolved_dataset_path() == "scratch/dataset.amrd");
    CHECK(cfg.resolved_finetune_checkpoint() == "scratch/pruned_init.ckpt");
    cfg = parse_config_text(
        "out_dir = scratch\n[dataset]\npath = d.amrd\n[finetune]\ncheckpoint = w.ckpt\n");
    CHECK(cfg.resolved_dataset_path() == "d.amrd");
    CHECK(cfg.resolved_finetune_checkpoint() == "w.ckpt");
}

TEST_CASE("comments and blank lines are ignored") {
    const PipelineConfig cfg = parse_config_text(
        "\n   \n# only a comment\nseed = 9   # trailing\n\n[partition]\n  k = 4  \n");
    CHECK(cfg.seed == 9);
    CHECK(cfg.k == 4);
}

TEST_CASE("syntax errors name the line") {
    CHECK_THROWS_WITH_AS(parse_config_text("seed = 1\nbogus_key = 2\n"),
                         Contains("unknown key 'bogus_key'"), ConfigError);
    CHECK(error_line("seed = 1\nbogus_key = 2\n") == 2);

    CHECK_THROWS_WITH_AS(parse_config_text("[dataset]\nwidth = 3\n"),
                         Contains("unknown key 'dataset.width'"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[turbo]\nx = 1\n"),
                         Contains("unknown section '[turbo]'"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[dataset\n"), Contains("unterminated section"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[]\n"), Contains("empty section name"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("seed\n"), Contains("expected key = value"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("= 5\n"), Contains("empty key"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("seed =\n"), Contains("empty value for 'seed'"),
                         ConfigError);
    CHECK(error_line("\n\n\n[dataset]\nsignal_length = x\n") == 5);
    CHECK_THROWS_WITH_AS(parse_config_text("config line = 1\n"), Contains("unknown key"),
                         ConfigError);
}

TEST_CASE("typed values reject junk") {
    CHECK_THROWS_WITH_AS(parse_config_text("seed = -3\n"),
                         Contains("seed expects an unsigned integer, got '-3'"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[partition]\nk = 3.5\n"),
                         Contains("k expects an integer, got '3.5'"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[train]\nepochs = 5x\n"),
                         Contains("epochs expects an integer, got '5x'"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[train]\nlearning_rate = fast\n"),
                         Contains("learning_rate expects a number, got 'fast'"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[similarity]\nstratified = maybe\n"),
                         Contains("stratified expects true/false, got 'maybe'"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[dataset]\nsnr_db = 10 oops\n"),
                         Contains("snr_db expects an integer, got 'oops'"), ConfigError);
}

TEST_CASE("semantic validation catches bad combinations") {
    CHECK_THROWS_WITH_AS(parse_config_text("[dataset]\ntrain_ratio = 0.5\n"),
                         Contains("ratios must sum to 1"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[dataset]\nexamples_per_class_per_snr = 0\n"),
                         Contains("must be >= 1"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[dataset]\nsignal_length = 4\n"),
                         Contains("signal_length must be >= samples_per_symbol"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[dataset]\nsamples_per_symbol = 0\nsignal_length = 8\n"),
                         Contains("samples_per_symbol must be >= 1"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[train]\nlearning_rate = 0\n"),
                         Contains("learning_rate must be > 0"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[train]\nbatch_size = 1\n"),
                         Contains("batch_size must be >= 2"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[train]\nepochs = 0\n"),
                         Contains("epochs must be >= 1"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[similarity]\nmetric = rbf\n"),
                         Contains("metric must be cka or cosine"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[similarity]\nsamples_per_batch = 3\n"),
                         Contains("samples_per_batch must be >= 4"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[similarity]\nnum_batches = 0\n"),
                         Contains("num_batches must be >= 1"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[partition]\nk = 0\n"), Contains("k must be >= 1"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[partition]\ncriterion = mad\n"),
                         Contains("criterion must be sse or sad"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[prune]\npruning_rate = 0\n"),
                         Contains("pruning_rate must be in (0, 1)"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[prune]\npruning_rate = 1\n"),
                         Contains("pruning_rate must be in (0, 1)"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[prune]\nfinetune_epochs = 0\n"),
                         Contains("finetune_epochs must be >= 1"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[prune]\nselect_mode = greedy\n"),
                         Contains("select_mode must be budget or max_score"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[ablation]\nmetrics = cka rbf\n"),
                         Contains("ablation.metrics must list only cka/cosine, got 'rbf'"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[ablation]\nk_values = 3 0\n"),
                         Contains("ablation.k_values must be >= 1"), ConfigError);
    // validation errors carry no line
    CHECK(error_line("[prune]\npruning_rate = 0\n") == 0);
}

TEST_CASE("config files parse like inline text") {
    const auto path = std::filesystem::temp_directory_path() / "lprune_cfg_test.cfg";
    {
        std::ofstream out(path, std::ios::binary);
        out << kFullConfig;
    }
    const PipelineConfig from_file = parse_config_file(path.string());
    const PipelineConfig from_text = parse_config_text(kFullConfig);
    CHECK(from_file.config_hash == from_text.config_hash);
    CHECK(from_file.seed == from_text.seed);
    CHECK(from_file.snrs_db == from_text.snrs_db);
    std::filesystem::remove(path);

    CHECK_THROWS_WITH_AS(parse_config_file("/nonexistent/nope.cfg"),
                         Contains("cannot open config file"), ConfigError);
}

TEST_CASE("hashes are stable fnv-1a") {
    CHECK(hash_bytes("") == "cbf29ce484222325");
    CHECK(hash_bytes("a") == "af63dc4c8601ec8c");
    CHECK(hash_bytes("foobar") == "85944171f73967e8");
    CHECK(hash_bytes(kFullConfig) == hash_bytes(kFullConfig));
    CHECK(hash_bytes("a") != hash_bytes("b"));
}
