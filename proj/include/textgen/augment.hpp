#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "textgen/dataset.hpp"
#include "textgen/gan.hpp"
#include "textgen/lm.hpp"
#include "textgen/optim.hpp"

namespace textgen {

// Knobs for one synthesis-and-merge pass.
struct AugmentPlan {
    int n_synthetic = 0;
    double tau = 0.3;  // forwarded to the hard sampler; argmax output is tau-invariant
    uint64_t seed = 0;
    uint64_t shuffle_seed = 0;

    void validate() const;
};

// n hard generator samples: each one-hot row becomes its token id, the id
// sequence is decoded to text and re-encoded, so every synthetic sequence is
// framed exactly like real encoded text. Deterministic given seed.
Dataset synthesize(const Generator& gen, const Vocab& vocab, int n, double tau, uint64_t seed);

// Multiset union with provenance tags preserved, in a seeded shuffled order.
// No deduplication, no mutation of the sequences.
Dataset merge(const Dataset& real, const Dataset& synthetic, uint64_t shuffle_seed);

// Same mechanics as train_lm, applied to an augmented dataset.
TrainingCurve finetune_augmented(LmModel& model, const Dataset& d_aug, const OptimizerConfig& opt,
                                 int steps, uint64_t seed);

// One row of the comparison table: a model depth trained on real data, with
// optional synthetic augmentation merged in first.
struct ComparePlan {
    std::string name;
    LmConfig lm;
    OptimizerConfig opt;
    int steps = 0;
    uint64_t init_seed = 0;
    uint64_t train_seed = 0;
    Dataset synthetic;  // empty -> plain training
    uint64_t shuffle_seed = 0;
};

struct CompareRow {
    std::string name;
    int layers = 0;
    double perplexity = 0.0;
    double accuracy = 0.0;  // fraction; rendered as percent
};

struct CompareReport {
    std::vector<CompareRow> rows;

    std::string to_csv() const;    // model,layers,perplexity,accuracy (percent)
    std::string to_table() const;  // aligned Model / Layers / Perplexity / Accuracy (%)
};

// Trains one model per plan and evaluates it on the held-out set. Failures
// are collected and re-thrown together, labeled by plan name.
CompareReport compare_configs(const Dataset& real, const Dataset& eval_set,
                              const std::vector<ComparePlan>& plans);

}  // namespace textgen
