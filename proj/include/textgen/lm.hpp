#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "textgen/dataset.hpp"
#include "textgen/optim.hpp"
#include "textgen/tensor.hpp"

namespace textgen {

struct LmConfig {
    int n_layer = 4;
    int n_head = 4;
    int d_model = 64;
    int d_ff = 256;
    int max_seq_len = 64;
    int vocab_size = 0;
    double dropout_rate = 0.0;

    int head_dim() const { return d_model / n_head; }
    void validate() const;
    bool operator==(const LmConfig&) const = default;
};

// Decoder-only causal transformer with learned positions, pre-norm blocks,
// and the output projection tied to the token embedding.
struct LmModel {
    struct Layer {
        Tensor ln1_g, ln1_b;
        Tensor wq, bq, wk, bk, wv, bv, wo, bo;
        Tensor ln2_g, ln2_b;
        Tensor w1, b1, w2, b2;
    };

    LmConfig cfg;
    Tensor tok_emb;  // [V, C], also the output projection
    Tensor pos_emb;  // [max_seq_len, C]
    std::vector<Layer> layers;
    Tensor lnf_g, lnf_b;

    static LmModel init(const LmConfig& cfg, Rng& rng);

    std::vector<Tensor> parameters() const;
    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    int64_t num_params() const;
};

// Logits [B, T, V]; position t only sees inputs at positions <= t.
Tensor lm_forward(const LmModel& model, const TokenBatch& batch, bool train = false,
                  Rng* dropout_rng = nullptr);

// Mean NLL over next-token targets, PAD targets excluded.
Tensor lm_loss(const LmModel& model, const TokenBatch& batch, bool train = false,
               Rng* dropout_rng = nullptr);

struct TrainingCurve {
    struct Row {
        int step;
        double loss;
        double lr;
    };
    std::vector<Row> rows;

    std::string to_csv() const;
    void save_csv(const std::string& path) const;
};

TrainingCurve train_lm(LmModel& model, const Dataset& corpus, const OptimizerConfig& opt,
                       int steps, uint64_t seed);

// Ancestral sampling; temperature <= 0 means greedy argmax. An empty prefix
// gets BOS injected. Stops at EOS or after max_new tokens.
TokenSequence generate(const LmModel& model, const TokenSequence& prefix, int max_new,
                       double temperature, uint64_t seed);

struct EvalStats {
    double nll_sum = 0.0;    // over non-PAD targets
    int64_t n_tokens = 0;    // non-PAD targets scored
    int64_t n_correct = 0;   // argmax hits over all targets
    int64_t n_positions = 0; // all targets
};

EvalStats evaluate(const LmModel& model, const Dataset& eval_set);

// exp(token-weighted mean NLL).
double perplexity(const LmModel& model, const Dataset& eval_set);

// Fraction of positions whose argmax logit is the true next token; ties
// resolve toward the lowest id.
double next_token_accuracy(const LmModel& model, const Dataset& eval_set);

}  // namespace textgen
