#pragma once

#include <cstdint>
#include <vector>

#include "textgen/dataset.hpp"
#include "textgen/rng.hpp"

namespace textgen {

// Explicit categorical distribution over all length-seq_len sequences drawn
// from a vocab of size vocab_size: a full probability table, index = the
// sequence read as a base-vocab_size number. Small enough to enumerate, so
// divergences and optimal discriminators are exact.
struct ToyDistribution {
    int seq_len = 0;
    int vocab_size = 0;
    std::vector<double> probs;  // size vocab_size^seq_len

    int64_t table_size() const { return static_cast<int64_t>(probs.size()); }

    int64_t index_of(const std::vector<int>& seq) const;
    std::vector<int> seq_of(int64_t index) const;
    double prob(const std::vector<int>& seq) const { return probs[index_of(seq)]; }

    // Throws unless every entry is a finite non-negative and the table sums
    // to 1 within 1e-12.
    void validate() const;

    static ToyDistribution uniform(int seq_len, int vocab_size);
    // Normalizes arbitrary non-negative weights; the stored table sums to
    // exactly 1.0.
    static ToyDistribution from_weights(int seq_len, int vocab_size, std::vector<double> weights);
    static ToyDistribution from_counts(int seq_len, int vocab_size,
                                       const std::vector<int64_t>& counts);
    // Random table with independent uniform(0.01, 1) weights, normalized.
    static ToyDistribution random(int seq_len, int vocab_size, Rng& rng);
};

// One exact categorical draw from the table.
std::vector<int> sample_toy_sequence(const ToyDistribution& dist, Rng& rng);

// n i.i.d. draws as a Dataset of raw toy ids (no BOS/EOS framing).
Dataset sample_toy_dataset(const ToyDistribution& dist, int n, Rng& rng);

// Best-response discriminator p_data(x) / (p_data(x) + p_g(x)); 0/0 -> 0.5.
double optimal_discriminator(const ToyDistribution& p_data, const ToyDistribution& p_g,
                             const std::vector<int>& x);

// Jensen-Shannon divergence in nats: 0.5 KL(p||m) + 0.5 KL(q||m), m=(p+q)/2,
// with 0 log 0 := 0. Ranges over [0, ln 2].
double js_divergence(const ToyDistribution& p, const ToyDistribution& q);

// Minimax value at the best-response discriminator, computed two ways.
struct GanValue {
    double direct;  // E_data[log D*] + E_g[log(1 - D*)]
    double via_js;  // -ln 4 + 2 JS(p_data || p_g)
};

// Returns both routes; throws if they disagree beyond 1e-10.
GanValue value_at_optimal_d(const ToyDistribution& p_data, const ToyDistribution& p_g);

// Population discriminator loss -E_data[log d(x)] - E_g[log(1 - d(x))] for a
// per-sequence discriminator table d (indexed like the probability tables).
double population_disc_loss(const ToyDistribution& p_data, const ToyDistribution& p_g,
                            const std::vector<double>& d);

}  // namespace textgen
