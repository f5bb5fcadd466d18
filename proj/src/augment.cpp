#include "textgen/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "textgen/error.hpp"
#include "textgen/io_util.hpp"

namespace textgen {

void AugmentPlan::validate() const {
    std::string bad;
    auto flag = [&bad](const std::string& msg) {
        if (!bad.empty()) bad += "; ";
        bad += msg;
    };
    if (n_synthetic < 0) flag("n_synthetic must be >= 0");
    if (!(tau > 0.0)) flag("tau must be > 0");
    if (!bad.empty()) throw ConfigError("invalid AugmentPlan: " + bad);
}

Dataset synthesize(const Generator& gen, const Vocab& vocab, int n, double tau, uint64_t seed) {
    if (n < 0) throw ParameterError("sample count must be >= 0");
    if (!(tau > 0.0)) throw ParameterError("tau must be > 0");
    if (gen.vocab_size != vocab.size())
        throw ValidationError("generator emits " + std::to_string(gen.vocab_size) +
                              " token classes but the vocabulary has " +
                              std::to_string(vocab.size()));
    Dataset out;
    out.vocab_size = vocab.size();
    Rng rng(seed, "synthesize");
    const int v = gen.vocab_size;

    int done = 0;
    while (done < n) {
        const int b = std::min(256, n - done);
        Tensor z = Tensor::randn({b, gen.noise_dim}, rng);
        Tape scratch;
        Tensor logits;
        {
            Tape::Scope scope(scratch);
            logits = gen_logits(gen, z);
        }
        const double* data = logits.data().data();
        for (int i = 0; i < b; ++i) {
            TokenSequence raw;
            raw.ids.reserve(static_cast<size_t>(gen.seq_len));
            for (int t = 0; t < gen.seq_len; ++t) {
                const double* row = data + (static_cast<size_t>(i) * gen.seq_len + t) * v;
                // Hard sample = argmax of the tau-scaled Gumbel-perturbed
                // logits; the scaling never changes the argmax.
                int best = 0;
                double best_v = (row[0] + rng.gumbel()) / tau;
                for (int j = 1; j < v; ++j) {
                    const double val = (row[j] + rng.gumbel()) / tau;
                    if (val > best_v) {
                        best_v = val;
                        best = j;
                    }
                }
                raw.ids.push_back(best);
            }
            out.push(vocab.encode(vocab.decode(raw)), Provenance::kSynthetic);
        }
        done += b;
    }
    return out;
}

Dataset merge(const Dataset& real, const Dataset& synthetic, uint64_t shuffle_seed) {
    const bool synth_blank = synthetic.empty() && synthetic.vocab_size == 0;
    if (!synth_blank && real.vocab_size != synthetic.vocab_size)
        throw ValidationError("cannot merge datasets over different vocabularies (" +
                              std::to_string(real.vocab_size) + " vs " +
                              std::to_string(synthetic.vocab_size) + ")");
    Dataset merged;
    merged.vocab_size = real.vocab_size;
    merged.seqs.reserve(real.size() + synthetic.size());
    merged.tags.reserve(real.size() + synthetic.size());
    for (size_t i = 0; i < real.size(); ++i) merged.push(real.seqs[i], real.tags[i]);
    for (size_t i = 0; i < synthetic.size(); ++i) merged.push(synthetic.seqs[i], synthetic.tags[i]);

    Rng rng(shuffle_seed, "augment-merge");
    for (size_t i = merged.size(); i > 1; --i) {
        const size_t j = static_cast<size_t>(rng.uniform_int(static_cast<int>(i)));
        std::swap(merged.seqs[i - 1], merged.seqs[j]);
        std::swap(merged.tags[i - 1], merged.tags[j]);
    }
    return merged;
}

TrainingCurve finetune_augmented(LmModel& model, const Dataset& d_aug, const OptimizerConfig& opt,
                                 int steps, uint64_t seed) {
    return train_lm(model, d_aug, opt, steps, seed);
}

std::string CompareReport::to_csv() const {
    CsvWriter csv({"model", "layers", "perplexity", "accuracy"});
    for (const auto& r : rows)
        csv.add_row({r.name, std::to_string(r.layers), format_double(r.perplexity),
                     format_double(r.accuracy * 100.0)});
    return csv.str();
}

std::string CompareReport::to_table() const {
    std::vector<std::array<std::string, 4>> cells;
    cells.push_back({"Model", "Layers", "Perplexity", "Accuracy (%)"});
    for (const auto& r : rows) {
        char ppl[64], acc[64];
        std::snprintf(ppl, sizeof ppl, "%.2f", r.perplexity);
        std::snprintf(acc, sizeof acc, "%.1f", r.accuracy * 100.0);
        cells.push_back({r.name, std::to_string(r.layers), std::string(ppl), std::string(acc)});
    }
    std::array<size_t, 4> width{};
    for (const auto& row : cells)
        for (size_t c = 0; c < 4; ++c) width[c] = std::max(width[c], row[c].size());

    std::string out;
    for (size_t r = 0; r < cells.size(); ++r) {
        for (size_t c = 0; c < 4; ++c) {
            std::string cell = cells[r][c];
            cell.resize(width[c], ' ');
            out += cell;
            if (c + 1 < 4) out += "  ";
        }
        while (!out.empty() && out.back() == ' ') out.pop_back();
        out += '\n';
        if (r == 0) {
            std::string rule;
            for (size_t c = 0; c < 4; ++c) {
                rule += std::string(width[c], '-');
                if (c + 1 < 4) rule += "  ";
            }
            out += rule + '\n';
        }
    }
    return out;
}

CompareReport compare_configs(const Dataset& real, const Dataset& eval_set,
                              const std::vector<ComparePlan>& plans) {
    if (plans.empty()) throw InputError("comparison needs at least one plan");
    CompareReport report;
    std::string failures;
    for (const auto& plan : plans) {
        try {
            Rng init_rng(plan.init_seed, "lm-init");
            LmModel model = LmModel::init(plan.lm, init_rng);
            Dataset d_train = merge(real, plan.synthetic, plan.shuffle_seed);
            finetune_augmented(model, d_train, plan.opt, plan.steps, plan.train_seed);
            CompareRow row;
            row.name = plan.name;
            row.layers = plan.lm.n_layer;
            row.perplexity = perplexity(model, eval_set);
            row.accuracy = next_token_accuracy(model, eval_set);
            report.rows.push_back(std::move(row));
        } catch (const std::exception& e) {
            if (!failures.empty()) failures += "; ";
            failures += "plan '" + plan.name + "': " + e.what();
        }
    }
    if (!failures.empty()) throw TrainingError("comparison runs failed: " + failures);
    return report;
}

}  // namespace textgen
