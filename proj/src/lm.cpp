#include "textgen/lm.hpp"

#include <algorithm>
#include <cmath>

#include "textgen/error.hpp"
#include "textgen/io_util.hpp"

namespace textgen {

void LmConfig::validate() const {
    std::string bad;
    auto flag = [&bad](const std::string& msg) {
        if (!bad.empty()) bad += "; ";
        bad += msg;
    };
    if (n_layer < 1) flag("n_layer must be >= 1");
    if (n_head < 1) flag("n_head must be >= 1");
    if (d_model < 1) flag("d_model must be >= 1");
    if (n_head >= 1 && d_model >= 1 && d_model % n_head != 0)
        flag("d_model must be divisible by n_head");
    if (d_ff < 1) flag("d_ff must be >= 1");
    if (max_seq_len < 2) flag("max_seq_len must be >= 2");
    if (vocab_size <= Vocab::kReserved)
        flag("vocab_size must exceed the " + std::to_string(Vocab::kReserved) +
             " reserved ids");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) flag("dropout_rate must be in [0, 1)");
    if (!bad.empty()) throw ConfigError("invalid LmConfig: " + bad);
}

LmModel LmModel::init(const LmConfig& cfg, Rng& rng) {
    cfg.validate();
    LmModel m;
    m.cfg = cfg;
    const int c = cfg.d_model;
    const double base_std = 0.02;
    // Residual-branch projections are drawn tighter so depth does not blow up
    // the residual stream's variance at init.
    const double resid_std = base_std / std::sqrt(2.0 * cfg.n_layer);

    auto w = [&rng](Shape shape, double std) { return Tensor::randn(shape, rng, std, true); };
    auto zeros = [](Shape shape) { return Tensor::zeros(shape, true); };
    auto ones = [](Shape shape) {
        return Tensor::full(std::move(shape), 1.0, true);
    };

    m.tok_emb = w({cfg.vocab_size, c}, base_std);
    m.pos_emb = w({cfg.max_seq_len, c}, base_std);
    m.layers.resize(cfg.n_layer);
    for (auto& l : m.layers) {
        l.ln1_g = ones({c});
        l.ln1_b = zeros({c});
        l.wq = w({c, c}, base_std);
        l.bq = zeros({c});
        l.wk = w({c, c}, base_std);
        l.bk = zeros({c});
        l.wv = w({c, c}, base_std);
        l.bv = zeros({c});
        l.wo = w({c, c}, resid_std);
        l.bo = zeros({c});
        l.ln2_g = ones({c});
        l.ln2_b = zeros({c});
        l.w1 = w({c, cfg.d_ff}, base_std);
        l.b1 = zeros({cfg.d_ff});
        l.w2 = w({cfg.d_ff, c}, resid_std);
        l.b2 = zeros({c});
    }
    m.lnf_g = ones({c});
    m.lnf_b = zeros({c});
    return m;
}

std::vector<Tensor> LmModel::parameters() const {
    std::vector<Tensor> ps;
    for (auto& [name, t] : named_parameters()) ps.push_back(t);
    return ps;
}

std::vector<std::pair<std::string, Tensor>> LmModel::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> ps;
    ps.emplace_back("tok_emb", tok_emb);
    ps.emplace_back("pos_emb", pos_emb);
    for (size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        const std::string p = "layer" + std::to_string(i) + ".";
        ps.emplace_back(p + "ln1_g", l.ln1_g);
        ps.emplace_back(p + "ln1_b", l.ln1_b);
        ps.emplace_back(p + "wq", l.wq);
        ps.emplace_back(p + "bq", l.bq);
        ps.emplace_back(p + "wk", l.wk);
        ps.emplace_back(p + "bk", l.bk);
        ps.emplace_back(p + "wv", l.wv);
        ps.emplace_back(p + "bv", l.bv);
        ps.emplace_back(p + "wo", l.wo);
        ps.emplace_back(p + "bo", l.bo);
        ps.emplace_back(p + "ln2_g", l.ln2_g);
        ps.emplace_back(p + "ln2_b", l.ln2_b);
        ps.emplace_back(p + "w1", l.w1);
        ps.emplace_back(p + "b1", l.b1);
        ps.emplace_back(p + "w2", l.w2);
        ps.emplace_back(p + "b2", l.b2);
    }
    ps.emplace_back("lnf_g", lnf_g);
    ps.emplace_back("lnf_b", lnf_b);
    return ps;
}

int64_t LmModel::num_params() const {
    int64_t n = 0;
    for (const auto& p : parameters()) n += p.numel();
    return n;
}

Tensor lm_forward(const LmModel& model, const TokenBatch& batch, bool train, Rng* dropout_rng) {
    const LmConfig& cfg = model.cfg;
    const int b = batch.b, t = batch.t;
    if (b < 1 || t < 1 || static_cast<int64_t>(batch.ids.size()) != int64_t{1} * b * t)
        throw ContractError("token batch is empty or its id buffer disagrees with b*t");
    if (t > cfg.max_seq_len)
        throw LengthError("sequence length " + std::to_string(t) + " exceeds max_seq_len " +
                          std::to_string(cfg.max_seq_len));
    const bool drop = train && cfg.dropout_rate > 0.0;
    if (drop && dropout_rng == nullptr)
        throw ContractError("training-mode forward with dropout needs an rng");
    auto maybe_drop = [&](const Tensor& x) {
        return drop ? dropout(x, cfg.dropout_rate, *dropout_rng, true) : x;
    };

    const int c = cfg.d_model, h = cfg.n_head, hd = cfg.head_dim();

    std::vector<int> pos_ids(static_cast<size_t>(t));
    for (int i = 0; i < t; ++i) pos_ids[static_cast<size_t>(i)] = i;

    Tensor tok = embedding_lookup(model.tok_emb, batch.ids);         // [b*t, c]
    Tensor pos = embedding_lookup(model.pos_emb, pos_ids);           // [t, c]
    Tensor x = maybe_drop(add_bias(reshape(tok, {b, t, c}), pos));   // [b, t, c]

    for (const auto& l : model.layers) {
        // Attention sublayer.
        Tensor norm = reshape(layernorm(x, l.ln1_g, l.ln1_b), {b * t, c});
        Tensor q = add_bias(matmul(norm, l.wq), l.bq);
        Tensor k = add_bias(matmul(norm, l.wk), l.bk);
        Tensor v = add_bias(matmul(norm, l.wv), l.bv);
        auto heads = [&](const Tensor& m) {
            return reshape(permute(reshape(m, {b, t, h, hd}), {0, 2, 1, 3}), {b * h, t, hd});
        };
        Tensor qh = heads(q), kh = heads(k), vh = heads(v);
        Tensor scores = scale(matmul(qh, permute(kh, {0, 2, 1})), 1.0 / std::sqrt(double(hd)));
        Tensor att = maybe_drop(softmax(causal_mask(scores)));       // [b*h, t, t]
        Tensor ctx = matmul(att, vh);                                // [b*h, t, hd]
        ctx = reshape(permute(reshape(ctx, {b, h, t, hd}), {0, 2, 1, 3}), {b * t, c});
        Tensor att_out = add_bias(matmul(ctx, l.wo), l.bo);
        x = add(x, maybe_drop(reshape(att_out, {b, t, c})));

        // Feed-forward sublayer.
        Tensor norm2 = reshape(layernorm(x, l.ln2_g, l.ln2_b), {b * t, c});
        Tensor mid = gelu(add_bias(matmul(norm2, l.w1), l.b1));
        Tensor ff = add_bias(matmul(mid, l.w2), l.b2);
        x = add(x, maybe_drop(reshape(ff, {b, t, c})));
    }

    Tensor final = reshape(layernorm(x, model.lnf_g, model.lnf_b), {b * t, c});
    Tensor logits = matmul(final, permute(model.tok_emb, {1, 0}));   // tied projection
    return reshape(logits, {b, t, cfg.vocab_size});
}

Tensor lm_loss(const LmModel& model, const TokenBatch& batch, bool train, Rng* dropout_rng) {
    if (batch.t < 2) throw LengthError("next-token loss needs sequences of length >= 2");
    Tensor logits = lm_forward(model, batch, train, dropout_rng);
    const int b = batch.b, t = batch.t;
    Tensor flat = reshape(logits, {b * t, model.cfg.vocab_size});

    std::vector<int> targets(static_cast<size_t>(b) * t, Vocab::kPad);
    std::vector<uint8_t> keep(static_cast<size_t>(b) * t, 0);
    for (int r = 0; r < b; ++r) {
        for (int col = 0; col + 1 < t; ++col) {
            const int target = batch.at(r, col + 1);
            const size_t row = static_cast<size_t>(r) * t + col;
            targets[row] = target;
            keep[row] = target != Vocab::kPad ? 1 : 0;
        }
    }
    return cross_entropy_masked(flat, targets, keep);
}

std::string TrainingCurve::to_csv() const {
    CsvWriter csv({"step", "loss", "learning_rate"});
    for (const auto& r : rows)
        csv.add_row({std::to_string(r.step), format_double(r.loss), format_double(r.lr)});
    return csv.str();
}

void TrainingCurve::save_csv(const std::string& path) const { write_text_file(path, to_csv()); }

TrainingCurve train_lm(LmModel& model, const Dataset& corpus, const OptimizerConfig& opt,
                       int steps, uint64_t seed) {
    opt.validate();
    if (steps < 0) throw ParameterError("steps must be >= 0");
    if (corpus.empty()) throw InputError("training corpus is empty");
    if (corpus.vocab_size != model.cfg.vocab_size)
        throw ValidationError("corpus vocab size " + std::to_string(corpus.vocab_size) +
                              " != model vocab size " + std::to_string(model.cfg.vocab_size));

    Adam adam(model.parameters(), opt);
    Rng batch_rng(seed, "lm-batch");
    Rng drop_rng(seed, "lm-dropout");
    TrainingCurve curve;
    curve.rows.reserve(static_cast<size_t>(steps));

    for (int step = 0; step < steps; ++step) {
        Tape tape;
        Tape::Scope scope(tape);
        TokenBatch batch = sample_batch(corpus, opt.batch_size, batch_rng);
        Tensor loss = lm_loss(model, batch, true, &drop_rng);
        const double loss_v = loss.value();
        if (!std::isfinite(loss_v))
            throw TrainingError("loss diverged (non-finite) at step " + std::to_string(step + 1));
        const double lr = adam.current_lr();
        adam.zero_grad();
        tape.backward(loss);
        adam.step();
        curve.rows.push_back({step + 1, loss_v, lr});
    }
    return curve;
}

namespace {

// Index of the largest entry; first occurrence wins ties.
int argmax_row(const double* row, int n) {
    int best = 0;
    for (int i = 1; i < n; ++i)
        if (row[i] > row[best]) best = i;
    return best;
}

// log softmax(row)[idx], stabilized.
double log_prob_at(const double* row, int n, int idx) {
    double mx = row[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, row[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += std::exp(row[i] - mx);
    return row[idx] - mx - std::log(sum);
}

}  // namespace

TokenSequence generate(const LmModel& model, const TokenSequence& prefix, int max_new,
                       double temperature, uint64_t seed) {
    if (max_new < 0) throw ParameterError("max_new must be >= 0");
    const int v = model.cfg.vocab_size;
    std::vector<int> out = prefix.ids;
    if (out.empty()) out.push_back(Vocab::kBos);
    Rng rng(seed, "lm-generate");

    for (int i = 0; i < max_new; ++i) {
        const int win = std::min<int>(static_cast<int>(out.size()), model.cfg.max_seq_len);
        TokenBatch batch;
        batch.b = 1;
        batch.t = win;
        batch.ids.assign(out.end() - win, out.end());
        Tensor logits = lm_forward(model, batch);
        const double* row = logits.data().data() + static_cast<size_t>(win - 1) * v;

        int next;
        if (temperature <= 0.0) {
            next = argmax_row(row, v);
        } else {
            // Stabilized softmax over logits/temperature, then inverse CDF.
            double mx = row[0];
            for (int j = 1; j < v; ++j) mx = std::max(mx, row[j]);
            std::vector<double> p(static_cast<size_t>(v));
            double sum = 0.0;
            for (int j = 0; j < v; ++j) {
                p[static_cast<size_t>(j)] = std::exp((row[j] - mx) / temperature);
                sum += p[static_cast<size_t>(j)];
            }
            const double u = rng.uniform() * sum;
            double cum = 0.0;
            next = v - 1;
            for (int j = 0; j < v; ++j) {
                cum += p[static_cast<size_t>(j)];
                if (u < cum) {
                    next = j;
                    break;
                }
            }
        }
        out.push_back(next);
        if (next == Vocab::kEos) break;
    }
    return TokenSequence{std::move(out)};
}

EvalStats evaluate(const LmModel& model, const Dataset& eval_set) {
    if (eval_set.empty()) throw InputError("evaluation set is empty");
    if (eval_set.vocab_size != model.cfg.vocab_size)
        throw ValidationError("eval set vocab size " + std::to_string(eval_set.vocab_size) +
                              " != model vocab size " + std::to_string(model.cfg.vocab_size));
    const int v = model.cfg.vocab_size;
    EvalStats stats;
    for (const auto& seq : eval_set.seqs) {
        const int len = seq.length();
        if (len < 2) continue;
        TokenBatch batch;
        batch.b = 1;
        batch.t = len;
        batch.ids = seq.ids;
        Tensor logits = lm_forward(model, batch);
        const double* data = logits.data().data();
        for (int col = 0; col + 1 < len; ++col) {
            const int target = seq.ids[static_cast<size_t>(col) + 1];
            const double* row = data + static_cast<size_t>(col) * v;
            ++stats.n_positions;
            if (argmax_row(row, v) == target) ++stats.n_correct;
            if (target != Vocab::kPad) {
                stats.nll_sum -= log_prob_at(row, v, target);
                ++stats.n_tokens;
            }
        }
    }
    return stats;
}

double perplexity(const LmModel& model, const Dataset& eval_set) {
    EvalStats stats = evaluate(model, eval_set);
    if (stats.n_tokens == 0) throw InputError("evaluation set has no scoreable tokens");
    return std::exp(stats.nll_sum / static_cast<double>(stats.n_tokens));
}

double next_token_accuracy(const LmModel& model, const Dataset& eval_set) {
    EvalStats stats = evaluate(model, eval_set);
    if (stats.n_positions == 0) throw InputError("evaluation set has no positions to score");
    return static_cast<double>(stats.n_correct) / static_cast<double>(stats.n_positions);
}

}  // namespace textgen
