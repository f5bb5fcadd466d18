#include "textgen/cli.hpp"

#include <cstdio>
#include <filesystem>

#include "textgen/augment.hpp"
#include "textgen/checkpoint.hpp"
#include "textgen/config.hpp"
#include "textgen/error.hpp"
#include "textgen/io_util.hpp"

namespace textgen {

namespace {

namespace fs = std::filesystem;

struct Stage {
    ExperimentConfig cfg;
    fs::path out;

    std::string path_of(const std::string& name) const { return (out / name).string(); }

    Vocab vocab() const { return Vocab::load(path_of("vocab.txt")); }

    Dataset load_split(const char* name, const Vocab& v) const {
        return load_dataset(path_of(name), v, cfg.lm.max_seq_len);
    }
};

int skip(const char* stage) {
    std::printf("stage %s is disabled in this config; skipping\n", stage);
    return 0;
}

int cmd_train_lm(Stage& s) {
    if (!s.cfg.stages.train_lm) return skip("train-lm");
    const std::string text = read_file(s.cfg.corpus_path);
    Vocab vocab = Vocab::build(text);
    vocab.save(s.path_of("vocab.txt"));

    s.cfg.lm.vocab_size = vocab.size();
    Dataset all = encode_lines(read_lines(s.cfg.corpus_path), vocab, s.cfg.lm.max_seq_len);
    auto [train, holdout] = split_dataset(all, s.cfg.holdout_fraction, s.cfg.seeds.train_lm);
    save_dataset(train, vocab, s.path_of("train.txt"));
    save_dataset(holdout, vocab, s.path_of("holdout.txt"));

    Rng init_rng(s.cfg.seeds.train_lm, "lm-init");
    LmModel model = LmModel::init(s.cfg.lm, init_rng);
    std::printf("training lm: %d layers, %lld parameters, %zu train sequences\n",
                s.cfg.lm.n_layer, static_cast<long long>(model.num_params()), train.size());
    TrainingCurve curve = train_lm(model, train, s.cfg.lm_opt, s.cfg.lm_steps,
                                   s.cfg.seeds.train_lm);
    curve.save_csv(s.path_of("lm_train.csv"));
    save_lm_checkpoint(s.path_of("lm.ckpt"), model, "vocab.txt");
    if (!curve.rows.empty())
        std::printf("lm loss: %.4f (step 0) -> %.4f (step %d)\n", curve.rows.front().loss,
                    curve.rows.back().loss, curve.rows.back().step);
    std::printf("wrote %s\n", s.path_of("lm.ckpt").c_str());
    return 0;
}

int cmd_train_gan(Stage& s) {
    if (!s.cfg.stages.train_gan) return skip("train-gan");
    Vocab vocab = s.vocab();
    Dataset train = s.load_split("train.txt", vocab);
    s.cfg.gan.vocab_size = vocab.size();

    Rng gen_rng(s.cfg.seeds.train_gan, "gan-gen-init");
    Rng disc_rng(s.cfg.seeds.train_gan, "gan-disc-init");
    Generator gen = Generator::init(s.cfg.gan, gen_rng);
    Discriminator disc = Discriminator::init(s.cfg.gan, disc_rng);
    std::printf("training gan: seq_len %d, vocab %d, %s mode, %d iterations\n",
                s.cfg.gan.seq_len, vocab.size(), sample_mode_name(s.cfg.gan.mode),
                s.cfg.gan_steps);
    GanCurve curve = train_gan(gen, disc, train, s.cfg.gan, s.cfg.gan_steps,
                               s.cfg.seeds.train_gan);
    curve.save_csv(s.path_of("gan_train.csv"));
    for (const auto& w : curve.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    save_gan_checkpoint(s.path_of("gan.ckpt"), gen, disc, s.cfg.gan);
    if (!curve.rows.empty())
        std::printf("final D(real) %.3f, D(fake) %.3f, tau %.3f\n",
                    curve.rows.back().d_real_mean, curve.rows.back().d_fake_mean,
                    curve.rows.back().tau);
    std::printf("wrote %s\n", s.path_of("gan.ckpt").c_str());
    return 0;
}

int cmd_synthesize(Stage& s) {
    if (!s.cfg.stages.synthesize) return skip("synthesize");
    Vocab vocab = s.vocab();
    GanCheckpoint gan = load_gan_checkpoint(s.path_of("gan.ckpt"));
    Dataset synth = synthesize(gan.gen, vocab, s.cfg.augment.n_synthetic, s.cfg.augment.tau,
                               s.cfg.augment.seed);
    save_dataset(synth, vocab, s.path_of("synthetic.txt"));
    std::printf("wrote %zu synthetic sequences to %s\n", synth.size(),
                s.path_of("synthetic.txt").c_str());
    return 0;
}

int cmd_augment_finetune(Stage& s) {
    if (!s.cfg.stages.augment_finetune) return skip("augment-finetune");
    Vocab vocab = s.vocab();
    Dataset train = s.load_split("train.txt", vocab);
    Dataset synth = s.load_split("synthetic.txt", vocab);
    LmModel model = load_lm_checkpoint(s.path_of("lm.ckpt"));
    Dataset merged = merge(train, synth, s.cfg.augment.shuffle_seed);
    std::printf("fine-tuning on %zu sequences (%zu real + %zu synthetic)\n", merged.size(),
                train.size(), synth.size());
    TrainingCurve curve = finetune_augmented(model, merged, s.cfg.finetune_opt,
                                             s.cfg.finetune_steps,
                                             s.cfg.seeds.augment_finetune);
    curve.save_csv(s.path_of("finetune.csv"));
    save_lm_checkpoint(s.path_of("lm_finetuned.ckpt"), model, "vocab.txt");
    if (!curve.rows.empty())
        std::printf("finetune loss: %.4f -> %.4f\n", curve.rows.front().loss,
                    curve.rows.back().loss);
    std::printf("wrote %s\n", s.path_of("lm_finetuned.ckpt").c_str());
    return 0;
}

int cmd_eval(Stage& s) {
    Vocab vocab = s.vocab();
    LmModel model = load_lm_checkpoint(s.path_of(s.cfg.eval.model_file));
    const char* which = s.cfg.eval.data == "train" ? "train.txt" : "holdout.txt";
    Dataset data = load_dataset(s.path_of(which), vocab, model.cfg.max_seq_len);
    EvalStats stats = evaluate(model, data);
    if (stats.n_tokens == 0) throw InputError("evaluation set has no scoreable tokens");
    const double ppl = std::exp(stats.nll_sum / static_cast<double>(stats.n_tokens));
    const double acc =
        static_cast<double>(stats.n_correct) / static_cast<double>(stats.n_positions);
    std::printf("perplexity %.4f\n", ppl);
    std::printf("accuracy %.4f\n", acc);
    return 0;
}

int cmd_compare(Stage& s) {
    if (!s.cfg.stages.compare) return skip("compare");
    Vocab vocab = s.vocab();
    Dataset train = s.load_split("train.txt", vocab);
    Dataset holdout = s.load_split("holdout.txt", vocab);
    Dataset synth = s.load_split("synthetic.txt", vocab);

    auto plan = [&](const std::string& name, int layers, Dataset synthetic) {
        ComparePlan p;
        p.name = name;
        p.lm = s.cfg.lm;
        p.lm.n_layer = layers;
        p.lm.vocab_size = vocab.size();
        p.opt = s.cfg.lm_opt;
        p.steps = s.cfg.compare.steps;
        p.init_seed = s.cfg.seeds.compare;
        p.train_seed = s.cfg.seeds.compare;
        p.synthetic = std::move(synthetic);
        p.shuffle_seed = s.cfg.seeds.compare;
        return p;
    };
    std::vector<ComparePlan> plans;
    plans.push_back(plan("base", s.cfg.compare.baseline_layers, Dataset{}));
    plans.push_back(plan("deep", s.cfg.compare.deep_layers, Dataset{}));
    plans.push_back(plan("deep+augmented", s.cfg.compare.deep_layers, synth));

    CompareReport report = compare_configs(train, holdout, plans);
    write_text_file(s.path_of("compare.csv"), report.to_csv());
    const std::string table = report.to_table();
    write_text_file(s.path_of("compare.txt"), table);
    std::fputs(table.c_str(), stdout);
    return 0;
}

}  // namespace

int run(const CliOptions& opts) {
    try {
        Stage s;
        s.cfg = load_experiment_config(opts.config_path);
        if (!opts.out_override.empty()) s.cfg.out_dir = opts.out_override;
        if (opts.has_seed_override) {
            s.cfg.seeds.train_lm = opts.seed_override;
            s.cfg.seeds.train_gan = opts.seed_override;
            s.cfg.seeds.synthesize = opts.seed_override;
            s.cfg.seeds.augment_finetune = opts.seed_override;
            s.cfg.seeds.compare = opts.seed_override;
            s.cfg.augment.seed = opts.seed_override;
            s.cfg.augment.shuffle_seed = opts.seed_override;
        }
        s.out = s.cfg.out_dir;
        fs::create_directories(s.out);

        if (opts.command == "train-lm") return cmd_train_lm(s);
        if (opts.command == "train-gan") return cmd_train_gan(s);
        if (opts.command == "synthesize") return cmd_synthesize(s);
        if (opts.command == "augment-finetune") return cmd_augment_finetune(s);
        if (opts.command == "eval") return cmd_eval(s);
        if (opts.command == "compare") return cmd_compare(s);
        std::fprintf(stderr, "error: unknown command '%s'\n", opts.command.c_str());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace textgen
