#include "textgen/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "textgen/error.hpp"

namespace textgen {

const char* provenance_name(Provenance p) {
    return p == Provenance::kReal ? "real" : "synthetic";
}

Provenance provenance_from_name(const std::string& name) {
    if (name == "real") return Provenance::kReal;
    if (name == "synthetic") return Provenance::kSynthetic;
    throw ValidationError("unknown provenance tag \"" + name + "\"");
}

void Dataset::push(TokenSequence seq, Provenance tag) {
    seqs.push_back(std::move(seq));
    tags.push_back(tag);
}

int64_t Dataset::total_tokens() const {
    int64_t n = 0;
    for (const auto& s : seqs) n += s.length();
    return n;
}

Dataset encode_lines(const std::vector<std::string>& lines, const Vocab& vocab, int max_seq_len,
                     Provenance tag) {
    if (max_seq_len < 2) {
        throw ValidationError("encode_lines: max_seq_len must be >= 2 to fit BOS and EOS");
    }
    Dataset ds;
    ds.vocab_size = vocab.size();
    for (const std::string& line : lines) {
        TokenSequence seq = vocab.encode(line);
        if (seq.length() > max_seq_len) {
            // keep the EOS: truncate content to max_seq_len - 2
            seq.ids.resize(static_cast<size_t>(max_seq_len) - 1);
            seq.ids.push_back(Vocab::kEos);
        }
        ds.push(std::move(seq), tag);
    }
    return ds;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

void save_dataset(const Dataset& ds, const Vocab& vocab, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    std::ofstream pf(path + ".prov", std::ios::binary);
    if (!pf) throw IoError("cannot write " + path + ".prov");
    for (size_t i = 0; i < ds.seqs.size(); ++i) {
        f << vocab.decode(ds.seqs[i]) << '\n';
        pf << provenance_name(ds.tags[i]) << '\n';
    }
    if (!f || !pf) throw IoError("failed while writing dataset " + path);
}

Dataset load_dataset(const std::string& path, const Vocab& vocab, int max_seq_len) {
    const std::vector<std::string> lines = read_lines(path);
    std::vector<std::string> tag_lines;
    {
        std::ifstream pf(path + ".prov", std::ios::binary);
        if (pf) {
            std::string line;
            while (std::getline(pf, line)) tag_lines.push_back(line);
            if (tag_lines.size() != lines.size()) {
                throw ValidationError("dataset " + path + ": provenance sidecar has " +
                                      std::to_string(tag_lines.size()) + " lines for " +
                                      std::to_string(lines.size()) + " sequences");
            }
        }
    }
    Dataset ds = encode_lines(lines, vocab, max_seq_len);
    for (size_t i = 0; i < tag_lines.size(); ++i) {
        ds.tags[i] = provenance_from_name(tag_lines[i]);
    }
    return ds;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double holdout_fraction,
                                          uint64_t seed) {
    if (holdout_fraction < 0.0 || holdout_fraction >= 1.0) {
        throw ValidationError("split_dataset: holdout_fraction must be in [0,1)");
    }
    std::vector<size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed, "dataset-split");
    for (size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(static_cast<int>(i)))]);
    }
    size_t n_holdout = static_cast<size_t>(holdout_fraction * static_cast<double>(ds.size()));
    if (holdout_fraction > 0.0 && n_holdout == 0 && ds.size() > 1) n_holdout = 1;
    Dataset train, holdout;
    train.vocab_size = holdout.vocab_size = ds.vocab_size;
    for (size_t i = 0; i < order.size(); ++i) {
        auto& dst = i < n_holdout ? holdout : train;
        dst.push(ds.seqs[order[i]], ds.tags[order[i]]);
    }
    return {std::move(train), std::move(holdout)};
}

TokenBatch sample_batch(const Dataset& ds, int batch_size, Rng& rng) {
    if (ds.empty()) throw ValidationError("sample_batch: dataset is empty");
    if (batch_size < 1) throw ParameterError("sample_batch: batch_size must be >= 1");
    std::vector<const TokenSequence*> picked;
    picked.reserve(static_cast<size_t>(batch_size));
    int max_t = 0;
    for (int i = 0; i < batch_size; ++i) {
        const auto& s = ds.seqs[static_cast<size_t>(rng.uniform_int(static_cast<int>(ds.size())))];
        max_t = std::max(max_t, s.length());
        picked.push_back(&s);
    }
    TokenBatch batch;
    batch.b = batch_size;
    batch.t = max_t;
    batch.ids.assign(static_cast<size_t>(batch_size) * max_t, Vocab::kPad);
    for (int i = 0; i < batch_size; ++i) {
        std::copy(picked[static_cast<size_t>(i)]->ids.begin(),
                  picked[static_cast<size_t>(i)]->ids.end(),
                  batch.ids.begin() + static_cast<size_t>(i) * max_t);
    }
    return batch;
}

TokenBatch batch_from_sequences(const std::vector<TokenSequence>& seqs) {
    if (seqs.empty()) throw ValidationError("batch_from_sequences: no sequences");
    int max_t = 0;
    for (const auto& s : seqs) max_t = std::max(max_t, s.length());
    TokenBatch batch;
    batch.b = static_cast<int>(seqs.size());
    batch.t = max_t;
    batch.ids.assign(static_cast<size_t>(batch.b) * max_t, Vocab::kPad);
    for (int i = 0; i < batch.b; ++i) {
        std::copy(seqs[static_cast<size_t>(i)].ids.begin(), seqs[static_cast<size_t>(i)].ids.end(),
                  batch.ids.begin() + static_cast<size_t>(i) * max_t);
    }
    return batch;
}

}  // namespace textgen
