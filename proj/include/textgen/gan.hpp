#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "textgen/dataset.hpp"
#include "textgen/gumbel.hpp"
#include "textgen/optim.hpp"
#include "textgen/tensor.hpp"
#include "textgen/toy.hpp"

namespace textgen {

// How the generator discretizes its per-position distributions during
// training: soft relaxed samples, or straight-through hard one-hots.
enum class SampleMode { kSoft, kHard };

const char* sample_mode_name(SampleMode m);
SampleMode sample_mode_from_name(const std::string& name);

struct GanConfig {
    int noise_dim = 16;
    int seq_len = 3;  // generated length; keep <= the LM's max_seq_len
    int vocab_size = 0;
    int gen_hidden = 64;
    int disc_embed = 32;
    int disc_hidden = 64;
    int d_steps = 1;
    int g_steps = 1;
    SampleMode mode = SampleMode::kSoft;
    TemperatureSchedule tau;
    OptimizerConfig opt{1e-4, 0.5, 0.999, 1e-8, 0, 64};

    void validate() const;
};

// Feed-forward net z -> hidden -> hidden -> per-position vocabulary logits,
// emitting all seq_len positions at once.
struct Generator {
    int noise_dim = 0, seq_len = 0, vocab_size = 0, hidden = 0;
    Tensor w1, b1, w2, b2, w3, b3;

    static Generator init(const GanConfig& cfg, Rng& rng);
    std::vector<Tensor> parameters() const;
    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
};

// Scores token-distribution sequences [B x T x V]: each position takes a
// distribution-weighted average over its own embedding table, positions are
// mean-pooled, and a small MLP emits a real-vs-fake probability. One-hot rows
// (real data) and soft rows (relaxed samples) share this pathway.
struct Discriminator {
    int seq_len = 0, vocab_size = 0, embed_dim = 0, hidden = 0;
    Tensor embed;  // [T, V, E]: per-position tables
    Tensor w1, b1, w2, b2;

    static Discriminator init(const GanConfig& cfg, Rng& rng);
    std::vector<Tensor> parameters() const;
    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
};

// Raw per-position logits [B x T x V] before any sampling.
Tensor gen_logits(const Generator& gen, const Tensor& z);

// Gumbel-Softmax samples of the generator's distributions: rows sum to 1 in
// soft mode and are exact one-hots in hard mode.
Tensor gen_forward(const Generator& gen, const Tensor& z, double tau, SampleMode mode, Rng& rng);

// Probabilities [B], strictly inside (0,1) up to float rounding.
Tensor disc_forward(const Discriminator& disc, const Tensor& x);

// -mean log D(real) - mean log(1 - D(fake)); the fake batch is detached so no
// gradient reaches the generator. D outputs are clamped to [1e-7, 1-1e-7]
// before the logs.
Tensor disc_loss(const Discriminator& disc, const Tensor& real, const Tensor& fake);

// Non-saturating -mean log D(fake); gradient flows through the relaxation
// into the generator.
Tensor gen_loss(const Discriminator& disc, const Tensor& fake);

// batch_size sequences drawn with replacement, cropped or PAD-filled to t_g,
// encoded as exact one-hot rows [batch_size x t_g x vocab_size].
Tensor sample_real_onehots(const Dataset& ds, int t_g, int vocab_size, int batch_size, Rng& rng);

Tensor onehots_from_sequences(const std::vector<TokenSequence>& seqs, int t_g, int vocab_size);

struct GanCurve {
    struct Row {
        int step;
        double d_loss;
        double g_loss;
        double d_real_mean;
        double d_fake_mean;
        double tau;
    };
    std::vector<Row> rows;
    std::vector<std::string> warnings;  // e.g. suspected mode collapse

    std::string to_csv() const;
    void save_csv(const std::string& path) const;
};

// Alternating updates: d_steps discriminator steps then g_steps generator
// steps per iteration, with the temperature annealed by iteration index.
GanCurve train_gan(Generator& gen, Discriminator& disc, const Dataset& real_data,
                   const GanConfig& cfg, int steps, uint64_t seed);

// Tabulates n hard samples (Gumbel-max over the generator's logits) into an
// exactly normalized sequence distribution. Toy scale only.
ToyDistribution empirical_distribution(const Generator& gen, int n_samples, Rng& rng);

}  // namespace textgen
