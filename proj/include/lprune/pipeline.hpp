#pragma once

#include <string>

#include "lprune/config.hpp"

namespace lprune::cli {

// Holds <out_dir>/.lock for the lifetime of the object; a second concurrent
// run against the same directory fails instead of clobbering artifacts.
class RunLock {
   public:
    explicit RunLock(const std::string& out_dir);
    ~RunLock();
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

   private:
    std::string path_;
};

void cmd_gen_data(const PipelineConfig& cfg);
void cmd_train(const PipelineConfig& cfg);
void cmd_similarity(const PipelineConfig& cfg);
void cmd_partition(const PipelineConfig& cfg);
void cmd_select(const PipelineConfig& cfg);
// similarity -> partition -> select -> reassemble -> finetune -> report
void cmd_prune(const PipelineConfig& cfg);
void cmd_finetune(const PipelineConfig& cfg, bool scratch);
void cmd_report(const PipelineConfig& cfg);
// metric x k sweep of the partition/selection stages, no training
void cmd_ablate(const PipelineConfig& cfg);

// Dispatch by subcommand name; takes the run lock, runs, updates
// <out_dir>/manifest.json. Throws ConfigError for bad input, std::runtime_error
// for runtime failures.
void run_command(const std::string& name, const PipelineConfig& cfg, bool scratch = false);

}  // namespace lprune::cli
