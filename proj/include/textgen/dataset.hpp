#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "textgen/rng.hpp"
#include "textgen/vocab.hpp"

namespace textgen {

enum class Provenance : uint8_t { kReal, kSynthetic };

const char* provenance_name(Provenance p);
Provenance provenance_from_name(const std::string& name);

// A collection of token sequences with a per-sequence provenance tag.
// Sequences are stored unpadded; padding happens only when batching.
struct Dataset {
    std::vector<TokenSequence> seqs;
    std::vector<Provenance> tags;
    int vocab_size = 0;

    size_t size() const { return seqs.size(); }
    bool empty() const { return seqs.empty(); }
    void push(TokenSequence seq, Provenance tag);
    int64_t total_tokens() const;
};

// Encodes each line of text as [BOS, chars..., EOS], truncating the content
// so no sequence exceeds max_seq_len. Blank lines become [BOS, EOS].
Dataset encode_lines(const std::vector<std::string>& lines, const Vocab& vocab, int max_seq_len,
                     Provenance tag = Provenance::kReal);

std::vector<std::string> read_lines(const std::string& path);
std::string read_file(const std::string& path);

// One sequence per line; a sidecar <path>.prov file holds line-aligned tags.
void save_dataset(const Dataset& ds, const Vocab& vocab, const std::string& path);
Dataset load_dataset(const std::string& path, const Vocab& vocab, int max_seq_len);

// Deterministic split into (train, holdout) after a seeded shuffle of the
// line order. holdout_fraction of the sequences (at least one when the
// fraction is positive) goes to the second part.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double holdout_fraction,
                                          uint64_t seed);

// A batch of ids padded to a common length, row-major [b, t].
struct TokenBatch {
    int b = 0;
    int t = 0;
    std::vector<int> ids;

    int at(int row, int col) const { return ids[static_cast<size_t>(row) * t + col]; }
};

// Samples batch_size sequences with replacement and pads them with PAD to
// the longest one picked.
TokenBatch sample_batch(const Dataset& ds, int batch_size, Rng& rng);

TokenBatch batch_from_sequences(const std::vector<TokenSequence>& seqs);

}  // namespace textgen
