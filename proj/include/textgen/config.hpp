#pragma once

#include <cstdint>
#include <string>

#include "textgen/augment.hpp"
#include "textgen/gan.hpp"
#include "textgen/lm.hpp"
#include "textgen/optim.hpp"

namespace textgen {

struct StageToggles {
    bool train_lm = true;
    bool train_gan = true;
    bool synthesize = true;
    bool augment_finetune = true;
    bool compare = true;
};

// One seed per pipeline stage; stage-internal streams (init, batching,
// dropout, noise, ...) are derived from it by name. Every seed must be
// written in the config file — there are no entropy defaults.
struct ExperimentSeeds {
    uint64_t train_lm = 0;
    uint64_t train_gan = 0;
    uint64_t synthesize = 0;
    uint64_t augment_finetune = 0;
    uint64_t compare = 0;
};

struct EvalSettings {
    std::string model_file = "lm.ckpt";  // relative to the output directory
    std::string data = "holdout";        // holdout | train
};

struct CompareSettings {
    int baseline_layers = 2;
    int deep_layers = 4;
    int steps = 200;
};

// Everything a pipeline run needs, parsed from a sectioned key=value file.
// Relative paths resolve against the config file's own directory.
struct ExperimentConfig {
    std::string corpus_path;
    std::string out_dir = "out";
    LmConfig lm;  // vocab_size stays 0 until the corpus is tokenized
    OptimizerConfig lm_opt;
    int lm_steps = 500;
    double holdout_fraction = 0.1;
    GanConfig gan;  // vocab_size stays 0 until the corpus is tokenized
    int gan_steps = 500;
    AugmentPlan augment;
    OptimizerConfig finetune_opt;
    int finetune_steps = 300;
    EvalSettings eval;
    CompareSettings compare;
    ExperimentSeeds seeds;
    StageToggles stages;

    // Field sanity plus referenced-path resolution; reports every problem in
    // one message.
    void validate() const;
};

ExperimentConfig load_experiment_config(const std::string& path);

}  // namespace textgen
