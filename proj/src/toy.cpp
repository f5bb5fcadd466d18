#include "textgen/toy.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "textgen/error.hpp"

namespace textgen {

namespace {

int64_t checked_table_size(int seq_len, int vocab_size) {
    if (seq_len < 1 || vocab_size < 1)
        throw ParameterError("toy distribution needs seq_len >= 1 and vocab_size >= 1");
    int64_t n = 1;
    for (int i = 0; i < seq_len; ++i) {
        n *= vocab_size;
        if (n > (int64_t{1} << 24))
            throw ParameterError("toy table too large to enumerate");
    }
    return n;
}

// Rescales weights to a table whose plain left-to-right sum is exactly 1.0.
std::vector<double> normalize_exact(std::vector<double> w) {
    double total = 0.0;
    for (double v : w) {
        if (!(v >= 0.0) || !std::isfinite(v))
            throw ValidationError("toy weights must be finite and non-negative");
        total += v;
    }
    if (total <= 0.0) throw ValidationError("toy weights must not all be zero");
    for (double& v : w) v /= total;

    // Make the plain left-to-right sum land on 1.0 exactly: set the last
    // nonzero entry to the complement of its prefix sum. Trailing zeros add
    // nothing, and fl(p + fl(1 - p)) == 1.0 for p in [0, 1], so one pass
    // settles it whenever the prefix stays <= 1; otherwise rescale and retry.
    for (int iter = 0; iter < 32; ++iter) {
        double s = 0.0;
        for (double v : w) s += v;
        if (s == 1.0) return w;
        size_t last = w.size();
        while (last > 0 && w[last - 1] == 0.0) --last;
        double prefix = 0.0;
        for (size_t i = 0; i + 1 < last; ++i) prefix += w[i];
        if (prefix <= 1.0 && last > 0) {
            w[last - 1] = 1.0 - prefix;
        } else {
            for (double& v : w) v /= s;
        }
    }
    throw NumericError("toy table normalization failed to reach an exact sum");
}

}  // namespace

int64_t ToyDistribution::index_of(const std::vector<int>& seq) const {
    if (static_cast<int>(seq.size()) != seq_len)
        throw DimensionError("sequence length " + std::to_string(seq.size()) +
                             " != table seq_len " + std::to_string(seq_len));
    int64_t idx = 0;
    for (int id : seq) {
        if (id < 0 || id >= vocab_size)
            throw IndexError("toy sequence id " + std::to_string(id) + " outside vocab of " +
                             std::to_string(vocab_size));
        idx = idx * vocab_size + id;
    }
    return idx;
}

std::vector<int> ToyDistribution::seq_of(int64_t index) const {
    if (index < 0 || index >= table_size()) throw IndexError("toy table index out of range");
    std::vector<int> seq(static_cast<size_t>(seq_len));
    for (int i = seq_len - 1; i >= 0; --i) {
        seq[static_cast<size_t>(i)] = static_cast<int>(index % vocab_size);
        index /= vocab_size;
    }
    return seq;
}

void ToyDistribution::validate() const {
    if (table_size() != checked_table_size(seq_len, vocab_size))
        throw ValidationError("toy table size disagrees with seq_len and vocab_size");
    double total = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0) || !std::isfinite(p))
            throw ValidationError("toy probabilities must be finite and non-negative");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw ValidationError("toy probabilities sum to " + std::to_string(total) + ", not 1");
}

ToyDistribution ToyDistribution::uniform(int seq_len, int vocab_size) {
    const int64_t n = checked_table_size(seq_len, vocab_size);
    return from_weights(seq_len, vocab_size, std::vector<double>(static_cast<size_t>(n), 1.0));
}

ToyDistribution ToyDistribution::from_weights(int seq_len, int vocab_size,
                                              std::vector<double> weights) {
    const int64_t n = checked_table_size(seq_len, vocab_size);
    if (static_cast<int64_t>(weights.size()) != n)
        throw DimensionError("weight table has " + std::to_string(weights.size()) +
                             " entries, expected " + std::to_string(n));
    ToyDistribution d;
    d.seq_len = seq_len;
    d.vocab_size = vocab_size;
    d.probs = normalize_exact(std::move(weights));
    return d;
}

ToyDistribution ToyDistribution::from_counts(int seq_len, int vocab_size,
                                             const std::vector<int64_t>& counts) {
    std::vector<double> w(counts.size());
    for (size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] < 0) throw ValidationError("counts must be non-negative");
        w[i] = static_cast<double>(counts[i]);
    }
    return from_weights(seq_len, vocab_size, std::move(w));
}

ToyDistribution ToyDistribution::random(int seq_len, int vocab_size, Rng& rng) {
    const int64_t n = checked_table_size(seq_len, vocab_size);
    std::vector<double> w(static_cast<size_t>(n));
    for (auto& v : w) v = rng.uniform(0.01, 1.0);
    return from_weights(seq_len, vocab_size, std::move(w));
}

std::vector<int> sample_toy_sequence(const ToyDistribution& dist, Rng& rng) {
    dist.validate();
    const double u = rng.uniform();
    double cum = 0.0;
    int64_t pick = dist.table_size() - 1;
    for (int64_t i = 0; i < dist.table_size(); ++i) {
        cum += dist.probs[static_cast<size_t>(i)];
        if (u < cum) {
            pick = i;
            break;
        }
    }
    return dist.seq_of(pick);
}

Dataset sample_toy_dataset(const ToyDistribution& dist, int n, Rng& rng) {
    if (n < 1) throw ParameterError("sample count must be >= 1");
    dist.validate();
    Dataset ds;
    ds.vocab_size = dist.vocab_size;
    for (int i = 0; i < n; ++i)
        ds.push(TokenSequence{sample_toy_sequence(dist, rng)}, Provenance::kReal);
    return ds;
}

namespace {

void check_pair(const ToyDistribution& a, const ToyDistribution& b) {
    a.validate();
    b.validate();
    if (a.seq_len != b.seq_len || a.vocab_size != b.vocab_size)
        throw DimensionError("toy distributions cover different sequence spaces");
}

}  // namespace

double optimal_discriminator(const ToyDistribution& p_data, const ToyDistribution& p_g,
                             const std::vector<int>& x) {
    check_pair(p_data, p_g);
    const double p = p_data.prob(x);
    const double q = p_g.prob(x);
    if (p == 0.0 && q == 0.0) return 0.5;
    return p / (p + q);
}

double js_divergence(const ToyDistribution& p, const ToyDistribution& q) {
    check_pair(p, q);
    double js = 0.0;
    for (size_t i = 0; i < p.probs.size(); ++i) {
        const double pi = p.probs[i], qi = q.probs[i];
        const double mi = 0.5 * (pi + qi);
        if (pi > 0.0) js += 0.5 * pi * std::log(pi / mi);
        if (qi > 0.0) js += 0.5 * qi * std::log(qi / mi);
    }
    return js < 0.0 ? 0.0 : js;  // clip the tiny negative fp residue at p == q
}

GanValue value_at_optimal_d(const ToyDistribution& p_data, const ToyDistribution& p_g) {
    check_pair(p_data, p_g);
    double direct = 0.0;
    for (size_t i = 0; i < p_data.probs.size(); ++i) {
        const double p = p_data.probs[i], q = p_g.probs[i];
        if (p == 0.0 && q == 0.0) continue;
        const double d = p / (p + q);
        if (p > 0.0) direct += p * std::log(d);
        if (q > 0.0) direct += q * std::log(1.0 - d);
    }
    GanValue v{direct, -std::log(4.0) + 2.0 * js_divergence(p_data, p_g)};
    if (std::abs(v.direct - v.via_js) > 1e-10)
        throw ContractError("minimax value computations disagree: direct " +
                            std::to_string(v.direct) + " vs divergence form " +
                            std::to_string(v.via_js));
    return v;
}

double population_disc_loss(const ToyDistribution& p_data, const ToyDistribution& p_g,
                            const std::vector<double>& d) {
    check_pair(p_data, p_g);
    if (d.size() != p_data.probs.size())
        throw DimensionError("discriminator table size disagrees with distribution table");
    double loss = 0.0;
    for (size_t i = 0; i < d.size(); ++i) {
        if (!(d[i] > 0.0 && d[i] < 1.0))
            throw ParameterError("discriminator outputs must lie strictly inside (0,1)");
        if (p_data.probs[i] > 0.0) loss -= p_data.probs[i] * std::log(d[i]);
        if (p_g.probs[i] > 0.0) loss -= p_g.probs[i] * std::log(1.0 - d[i]);
    }
    return loss;
}

}  // namespace textgen
