#include "textgen/gan.hpp"

#include <algorithm>
#include <cmath>

#include "textgen/error.hpp"
#include "textgen/io_util.hpp"

namespace textgen {

const char* sample_mode_name(SampleMode m) {
    return m == SampleMode::kSoft ? "soft" : "hard";
}

SampleMode sample_mode_from_name(const std::string& name) {
    if (name == "soft") return SampleMode::kSoft;
    if (name == "hard") return SampleMode::kHard;
    throw ConfigError("unknown sample mode '" + name + "' (want soft or hard)");
}

void GanConfig::validate() const {
    std::string bad;
    auto flag = [&bad](const std::string& msg) {
        if (!bad.empty()) bad += "; ";
        bad += msg;
    };
    if (noise_dim < 1) flag("noise_dim must be >= 1");
    if (seq_len < 1) flag("seq_len must be >= 1");
    if (vocab_size < 2) flag("vocab_size must be >= 2");
    if (gen_hidden < 1) flag("gen_hidden must be >= 1");
    if (disc_embed < 1) flag("disc_embed must be >= 1");
    if (disc_hidden < 1) flag("disc_hidden must be >= 1");
    if (d_steps < 0) flag("d_steps must be >= 0");
    if (g_steps < 0) flag("g_steps must be >= 0");
    if (!bad.empty()) throw ConfigError("invalid GanConfig: " + bad);
    tau.validate();
    opt.validate();
}

Generator Generator::init(const GanConfig& cfg, Rng& rng) {
    cfg.validate();
    Generator g;
    g.noise_dim = cfg.noise_dim;
    g.seq_len = cfg.seq_len;
    g.vocab_size = cfg.vocab_size;
    g.hidden = cfg.gen_hidden;
    const int out = cfg.seq_len * cfg.vocab_size;
    g.w1 = Tensor::randn({cfg.noise_dim, g.hidden}, rng, 1.0 / std::sqrt(double(cfg.noise_dim)),
                         true);
    g.b1 = Tensor::zeros({g.hidden}, true);
    g.w2 = Tensor::randn({g.hidden, g.hidden}, rng, 1.0 / std::sqrt(double(g.hidden)), true);
    g.b2 = Tensor::zeros({g.hidden}, true);
    g.w3 = Tensor::randn({g.hidden, out}, rng, 1.0 / std::sqrt(double(g.hidden)), true);
    g.b3 = Tensor::zeros({out}, true);
    return g;
}

std::vector<Tensor> Generator::parameters() const { return {w1, b1, w2, b2, w3, b3}; }

std::vector<std::pair<std::string, Tensor>> Generator::named_parameters() const {
    return {{"w1", w1}, {"b1", b1}, {"w2", w2}, {"b2", b2}, {"w3", w3}, {"b3", b3}};
}

Discriminator Discriminator::init(const GanConfig& cfg, Rng& rng) {
    cfg.validate();
    Discriminator d;
    d.seq_len = cfg.seq_len;
    d.vocab_size = cfg.vocab_size;
    d.embed_dim = cfg.disc_embed;
    d.hidden = cfg.disc_hidden;
    d.embed = Tensor::randn({cfg.seq_len, cfg.vocab_size, cfg.disc_embed}, rng, 1.0, true);
    d.w1 = Tensor::randn({cfg.disc_embed, d.hidden}, rng, 1.0 / std::sqrt(double(cfg.disc_embed)),
                         true);
    d.b1 = Tensor::zeros({d.hidden}, true);
    d.w2 = Tensor::randn({d.hidden, 1}, rng, 1.0 / std::sqrt(double(d.hidden)), true);
    d.b2 = Tensor::zeros({1}, true);
    return d;
}

std::vector<Tensor> Discriminator::parameters() const { return {embed, w1, b1, w2, b2}; }

std::vector<std::pair<std::string, Tensor>> Discriminator::named_parameters() const {
    return {{"embed", embed}, {"w1", w1}, {"b1", b1}, {"w2", w2}, {"b2", b2}};
}

Tensor gen_logits(const Generator& gen, const Tensor& z) {
    if (!z.defined() || z.rank() != 2 || z.dim(1) != gen.noise_dim)
        throw DimensionError("generator noise must be [batch x noise_dim]");
    for (double v : z.data())
        if (!std::isfinite(v)) throw NumericError("generator noise must be finite");
    const int b = z.dim(0);
    Tensor h = gelu(add_bias(matmul(z, gen.w1), gen.b1));
    h = gelu(add_bias(matmul(h, gen.w2), gen.b2));
    Tensor out = add_bias(matmul(h, gen.w3), gen.b3);
    return reshape(out, {b, gen.seq_len, gen.vocab_size});
}

Tensor gen_forward(const Generator& gen, const Tensor& z, double tau, SampleMode mode, Rng& rng) {
    Tensor logits = gen_logits(gen, z);
    if (mode == SampleMode::kHard) return gumbel_softmax_hard(logits, tau, rng).y;
    return gumbel_softmax(logits, tau, rng).y;
}

Tensor disc_forward(const Discriminator& disc, const Tensor& x) {
    if (!x.defined() || x.rank() != 3 || x.dim(1) != disc.seq_len ||
        x.dim(2) != disc.vocab_size)
        throw DimensionError("discriminator input must be [batch x " +
                             std::to_string(disc.seq_len) + " x " +
                             std::to_string(disc.vocab_size) + "]");
    const int b = x.dim(0);
    if (b < 1) throw ContractError("discriminator batch is empty");
    // Per-position distribution-weighted embedding, then mean-pool positions.
    Tensor by_pos = permute(x, {1, 0, 2});                    // [T, B, V]
    Tensor emb = permute(matmul(by_pos, disc.embed), {1, 0, 2});  // [B, T, E]
    Tensor pooled = mean_axis(emb, 1);                        // [B, E]
    Tensor h = gelu(add_bias(matmul(pooled, disc.w1), disc.b1));
    Tensor logit = add_bias(matmul(h, disc.w2), disc.b2);     // [B, 1]
    return reshape(sigmoid(logit), {b});
}

namespace {

constexpr double kDClamp = 1e-7;

void check_gan_batch(const Discriminator& disc, const Tensor& x, const char* what) {
    if (!x.defined() || x.rank() != 3)
        throw DimensionError(std::string(what) + " batch must be rank-3");
    if (x.dim(0) < 1) throw ContractError(std::string(what) + " batch is empty");
    if (x.dim(1) != disc.seq_len || x.dim(2) != disc.vocab_size)
        throw DimensionError(std::string(what) + " batch shape disagrees with discriminator");
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

Tensor disc_loss(const Discriminator& disc, const Tensor& real, const Tensor& fake) {
    check_gan_batch(disc, real, "real");
    check_gan_batch(disc, fake, "fake");
    Tensor d_real = clamp(disc_forward(disc, real), kDClamp, 1.0 - kDClamp);
    Tensor d_fake = clamp(disc_forward(disc, detach(fake)), kDClamp, 1.0 - kDClamp);
    Tensor term_real = mean_all(log(d_real));
    Tensor term_fake = mean_all(log(affine(d_fake, -1.0, 1.0)));
    return scale(add(term_real, term_fake), -1.0);
}

Tensor gen_loss(const Discriminator& disc, const Tensor& fake) {
    check_gan_batch(disc, fake, "fake");
    Tensor d_fake = clamp(disc_forward(disc, fake), kDClamp, 1.0 - kDClamp);
    return scale(mean_all(log(d_fake)), -1.0);
}

Tensor onehots_from_sequences(const std::vector<TokenSequence>& seqs, int t_g, int vocab_size) {
    if (seqs.empty()) throw ContractError("one-hot batch needs at least one sequence");
    if (t_g < 1 || vocab_size < 1) throw ParameterError("t_g and vocab_size must be >= 1");
    const int b = static_cast<int>(seqs.size());
    std::vector<double> data(static_cast<size_t>(b) * t_g * vocab_size, 0.0);
    for (int r = 0; r < b; ++r) {
        const auto& ids = seqs[static_cast<size_t>(r)].ids;
        for (int t = 0; t < t_g; ++t) {
            const int id = t < static_cast<int>(ids.size()) ? ids[static_cast<size_t>(t)]
                                                            : Vocab::kPad;
            if (id < 0 || id >= vocab_size)
                throw IndexError("token id " + std::to_string(id) + " outside vocab of " +
                                 std::to_string(vocab_size));
            data[(static_cast<size_t>(r) * t_g + t) * vocab_size + id] = 1.0;
        }
    }
    return Tensor::from_data({b, t_g, vocab_size}, std::move(data));
}

Tensor sample_real_onehots(const Dataset& ds, int t_g, int vocab_size, int batch_size, Rng& rng) {
    if (ds.empty()) throw InputError("real dataset is empty");
    if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
    std::vector<TokenSequence> picked;
    picked.reserve(static_cast<size_t>(batch_size));
    for (int i = 0; i < batch_size; ++i)
        picked.push_back(ds.seqs[static_cast<size_t>(rng.uniform_int(static_cast<int>(ds.size())))]);
    return onehots_from_sequences(picked, t_g, vocab_size);
}

std::string GanCurve::to_csv() const {
    CsvWriter csv({"step", "d_loss", "g_loss", "d_real_mean", "d_fake_mean", "tau"});
    for (const auto& r : rows)
        csv.add_row({std::to_string(r.step), format_double(r.d_loss), format_double(r.g_loss),
                     format_double(r.d_real_mean), format_double(r.d_fake_mean),
                     format_double(r.tau)});
    return csv.str();
}

void GanCurve::save_csv(const std::string& path) const { write_text_file(path, to_csv()); }

GanCurve train_gan(Generator& gen, Discriminator& disc, const Dataset& real_data,
                   const GanConfig& cfg, int steps, uint64_t seed) {
    cfg.validate();
    if (steps < 0) throw ParameterError("steps must be >= 0");
    GanCurve curve;
    if (steps == 0) return curve;
    if (real_data.empty()) throw InputError("gan training needs real sequences");
    if (real_data.vocab_size != cfg.vocab_size)
        throw ValidationError("real data vocab size " + std::to_string(real_data.vocab_size) +
                              " != gan vocab size " + std::to_string(cfg.vocab_size));
    if (gen.seq_len != cfg.seq_len || gen.vocab_size != cfg.vocab_size ||
        gen.noise_dim != cfg.noise_dim || disc.seq_len != cfg.seq_len ||
        disc.vocab_size != cfg.vocab_size)
        throw ContractError("generator/discriminator dimensions disagree with the config");

    Adam d_opt(disc.parameters(), cfg.opt);
    Adam g_opt(gen.parameters(), cfg.opt);
    Rng real_rng(seed, "gan-real");
    Rng noise_rng(seed, "gan-noise");
    Rng gumbel_rng(seed, "gan-gumbel");

    curve.rows.reserve(static_cast<size_t>(steps));
    int collapse_run = 0;
    bool collapse_warned = false;

    for (int step = 0; step < steps; ++step) {
        const double tau = anneal(cfg.tau, step);
        GanCurve::Row row{step + 1, 0.0, 0.0, 0.0, 0.0, tau};

        for (int k = 0; k < cfg.d_steps; ++k) {
            Tensor real = sample_real_onehots(real_data, cfg.seq_len, cfg.vocab_size,
                                              cfg.opt.batch_size, real_rng);
            Tensor z = Tensor::randn({cfg.opt.batch_size, cfg.noise_dim}, noise_rng);
            Tensor fake, loss;
            Tape tape;
            {
                Tape::Scope scope(tape);
                fake = gen_forward(gen, z, tau, cfg.mode, gumbel_rng);
                loss = disc_loss(disc, real, fake);
            }
            row.d_loss = loss.value();
            if (!std::isfinite(row.d_loss))
                throw TrainingError("discriminator loss diverged at step " +
                                    std::to_string(step + 1));
            d_opt.zero_grad();
            g_opt.zero_grad();
            tape.backward(loss);
            // Snapshot the pre-update scores this loss saw.
            row.d_real_mean = mean_of(disc_forward(disc, real).data());
            row.d_fake_mean = mean_of(disc_forward(disc, fake).data());
            d_opt.step();
        }

        for (int k = 0; k < cfg.g_steps; ++k) {
            Tensor z = Tensor::randn({cfg.opt.batch_size, cfg.noise_dim}, noise_rng);
            Tensor loss;
            Tape tape;
            {
                Tape::Scope scope(tape);
                Tensor fake = gen_forward(gen, z, tau, cfg.mode, gumbel_rng);
                loss = gen_loss(disc, fake);
            }
            row.g_loss = loss.value();
            if (!std::isfinite(row.g_loss))
                throw TrainingError("generator loss diverged at step " + std::to_string(step + 1));
            d_opt.zero_grad();
            g_opt.zero_grad();
            tape.backward(loss);
            g_opt.step();
        }

        curve.rows.push_back(row);
        if (cfg.d_steps > 0 && row.d_fake_mean < 0.001) {
            if (++collapse_run >= 200 && !collapse_warned) {
                curve.warnings.push_back(
                    "suspected mode collapse: mean D(fake) < 0.001 for 200 consecutive "
                    "iterations ending at step " +
                    std::to_string(step));
                collapse_warned = true;
            }
        } else {
            collapse_run = 0;
        }
    }
    return curve;
}

ToyDistribution empirical_distribution(const Generator& gen, int n_samples, Rng& rng) {
    if (n_samples <= 0) throw ValidationError("empirical distribution needs n_samples >= 1");
    int64_t table = 1;
    for (int i = 0; i < gen.seq_len; ++i) {
        table *= gen.vocab_size;
        if (table > (int64_t{1} << 24))
            throw ParameterError("sequence space too large to tabulate");
    }
    std::vector<int64_t> counts(static_cast<size_t>(table), 0);
    const int v = gen.vocab_size;

    // Hard samples reduce to Gumbel-max over the raw logits: the temperature
    // rescales but never reorders (u+g)/tau, so it is irrelevant here.
    int done = 0;
    while (done < n_samples) {
        const int b = std::min(256, n_samples - done);
        Tensor z = Tensor::randn({b, gen.noise_dim}, rng);
        Tape scratch;  // discard any recording if a caller's tape is active
        Tensor logits;
        {
            Tape::Scope scope(scratch);
            logits = gen_logits(gen, z);
        }
        const double* data = logits.data().data();
        for (int i = 0; i < b; ++i) {
            int64_t idx = 0;
            for (int t = 0; t < gen.seq_len; ++t) {
                const double* row = data + (static_cast<size_t>(i) * gen.seq_len + t) * v;
                int best = 0;
                double best_v = row[0] + rng.gumbel();
                for (int j = 1; j < v; ++j) {
                    const double val = row[j] + rng.gumbel();
                    if (val > best_v) {
                        best_v = val;
                        best = j;
                    }
                }
                idx = idx * v + best;
            }
            ++counts[static_cast<size_t>(idx)];
        }
        done += b;
    }
    return ToyDistribution::from_counts(gen.seq_len, gen.vocab_size, counts);
}

}  // namespace textgen
