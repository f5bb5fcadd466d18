#pragma once

#include <cstdint>
#include <string>

namespace textgen {

struct CliOptions {
    std::string command;      // train-lm | train-gan | synthesize | augment-finetune |
                              // eval | compare
    std::string config_path;
    std::string out_override;        // empty -> use the config's out_dir
    bool has_seed_override = false;  // when set, replaces every stage seed
    uint64_t seed_override = 0;
};

// Runs one pipeline stage; returns a process exit status (0 on success).
// Errors are reported on stderr.
int run(const CliOptions& opts);

}  // namespace textgen
