#include <iostream>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "lprune/config.hpp"
#include "lprune/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"layer pruning pipeline for RF modulation classifiers"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "pipeline config file")
        ->required()
        ->check(CLI::ExistingFile);
    uint64_t seed = 0;
    auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides the config)");
    std::string out_dir;
    auto* out_opt = app.add_option("--out", out_dir, "output directory (overrides the config)");
    int jobs = 0;
    app.add_option("--jobs", jobs, "worker thread count, 0 = runtime default")
        ->check(CLI::NonNegativeNumber);

    auto add = [&](const char* name, const char* desc) {
        auto* sub = app.add_subcommand(name, desc);
        sub->fallthrough();
        return sub;
    };
    add("gen-data", "synthesize the modulated-signal dataset");
    add("train", "train the baseline classifier");
    add("similarity", "compute the unit similarity matrix of the baseline");
    add("partition", "split units into contiguous blocks from the similarity row sums");
    add("select", "score retention candidates per block and pick the kept units");
    add("prune", "run similarity, partition, select, rebuild, finetune and report");
    auto* ft = add("finetune", "train a pruned checkpoint on the dataset");
    bool scratch = false;
    ft->add_flag("--scratch", scratch, "re-initialize and train from scratch instead");
    add("report", "evaluate baseline and pruned checkpoints and write report.csv");
    add("ablate", "sweep similarity metric and block count, record retained sets");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        auto cfg = lprune::cli::parse_config_file(config_path);
        if (seed_opt->count()) cfg.seed = seed;
        if (out_opt->count()) cfg.out_dir = out_dir;
#ifdef _OPENMP
        if (jobs > 0) omp_set_num_threads(jobs);
#endif
        const std::string sub = app.get_subcommands().front()->get_name();
        lprune::cli::run_command(sub, cfg, scratch);
        return 0;
    } catch (const lprune::cli::ConfigError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    }
}
