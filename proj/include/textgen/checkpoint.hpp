#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "textgen/gan.hpp"
#include "textgen/lm.hpp"

namespace textgen {

// On-disk container shared by LM and GAN checkpoints: magic, format version,
// a section tag, key=value config text, named shape-prefixed little-endian
// f64 blocks, and a trailing CRC-32 over everything before it.
struct CheckpointData {
    uint32_t version = 1;
    std::string section;  // "lm" or "gan"
    std::vector<std::pair<std::string, std::string>> config;
    std::vector<std::pair<std::string, Tensor>> blocks;
};

inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint_file(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint_file(const std::string& path);

// vocab_ref names the vocabulary file the model was trained against,
// stored alongside the config (resolved relative to the checkpoint by
// callers).
void save_lm_checkpoint(const std::string& path, const LmModel& model,
                        const std::string& vocab_ref);
LmModel load_lm_checkpoint(const std::string& path, std::string* vocab_ref = nullptr);

struct GanCheckpoint {
    GanConfig cfg;
    Generator gen;
    Discriminator disc;
};

void save_gan_checkpoint(const std::string& path, const Generator& gen,
                         const Discriminator& disc, const GanConfig& cfg);
GanCheckpoint load_gan_checkpoint(const std::string& path);

}  // namespace textgen
