#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <doctest.h>

#include "textgen/config.hpp"
#include "textgen/error.hpp"

using namespace textgen;

namespace {

namespace fs = std::filesystem;

struct ConfigDir {
    fs::path dir;

    ConfigDir() {
        dir = fs::temp_directory_path() / "textgen_config_test";
        fs::create_directories(dir);
        std::ofstream corpus(dir / "corpus.txt");
        corpus << "hello world\nthe quick brown fox\n";
    }

    ~ConfigDir() { fs::remove_all(dir); }

    std::string write(const std::string& body) const {
        const fs::path p = dir / "exp.ini";
        std::ofstream f(p);
        f << body;
        return p.string();
    }
};

const char* kSeedsBlock =
    "[seeds]\n"
    "train_lm = 1\n"
    "train_gan = 2\n"
    "synthesize = 3\n"
    "augment_finetune = 4\n"
    "compare = 5\n";

std::string minimal_config() {
    return std::string("[paths]\ncorpus = corpus.txt\n") + kSeedsBlock;
}

}  // namespace

TEST_SUITE("config") {
    TEST_CASE("a minimal file loads with documented defaults") {
        ConfigDir cd;
        ExperimentConfig c = load_experiment_config(cd.write(minimal_config()));
        CHECK(c.corpus_path == (cd.dir / "corpus.txt").string());
        CHECK(c.out_dir == (cd.dir / "out").string());
        CHECK(c.lm.n_layer == 4);
        CHECK(c.lm.d_model == 64);
        CHECK(c.lm.vocab_size == 0);
        CHECK(c.lm_steps == 500);
        CHECK(c.lm_opt.lr == 3e-4);
        CHECK(c.holdout_fraction == 0.1);
        CHECK(c.gan.mode == SampleMode::kSoft);
        CHECK(c.gan.opt.lr == 1e-4);
        CHECK(c.gan.opt.beta1 == 0.5);
        CHECK(c.finetune_opt.lr == 1e-4);
        CHECK(c.finetune_opt.warmup_steps == 0);
        CHECK(c.eval.model_file == "lm.ckpt");
        CHECK(c.eval.data == "holdout");
        CHECK(c.compare.baseline_layers == 2);
        CHECK(c.compare.deep_layers == 4);
        CHECK(c.seeds.train_lm == 1);
        CHECK(c.seeds.compare == 5);
        CHECK(c.augment.seed == 3);
        CHECK(c.augment.shuffle_seed == 4);
        CHECK(c.stages.train_lm);
        CHECK(c.stages.compare);
    }

    TEST_CASE("explicit values override the defaults") {
        ConfigDir cd;
        const std::string body = std::string(
                                     "[paths]\n"
                                     "corpus = corpus.txt\n"
                                     "out_dir = results\n"
                                     "[lm]\n"
                                     "n_layer = 6\n"
                                     "d_model = 32\n"
                                     "n_head = 8\n"
                                     "dropout_rate = 0.25\n"
                                     "[lm_train]\n"
                                     "lr = 0.002\n"
                                     "steps = 42\n"
                                     "holdout_fraction = 0.2\n"
                                     "[gan]\n"
                                     "mode = hard\n"
                                     "tau_start = 2.0\n"
                                     "tau_end = 0.4\n"
                                     "batch_size = 128\n"
                                     "[augment]\n"
                                     "n_synthetic = 77\n"
                                     "[finetune]\n"
                                     "steps = 11\n"
                                     "[eval]\n"
                                     "data = train\n"
                                     "[compare]\n"
                                     "deep_layers = 6\n"
                                     "[stages]\n"
                                     "compare = false\n") +
                                 kSeedsBlock;
        ExperimentConfig c = load_experiment_config(cd.write(body));
        CHECK(c.out_dir == (cd.dir / "results").string());
        CHECK(c.lm.n_layer == 6);
        CHECK(c.lm.d_model == 32);
        CHECK(c.lm.n_head == 8);
        CHECK(c.lm.dropout_rate == 0.25);
        CHECK(c.lm_opt.lr == 0.002);
        CHECK(c.lm_steps == 42);
        CHECK(c.holdout_fraction == 0.2);
        CHECK(c.gan.mode == SampleMode::kHard);
        CHECK(c.gan.tau.tau_start == 2.0);
        CHECK(c.gan.tau.tau_end == 0.4);
        CHECK(c.gan.opt.batch_size == 128);
        CHECK(c.augment.n_synthetic == 77);
        CHECK(c.finetune_steps == 11);
        CHECK(c.eval.data == "train");
        CHECK(c.compare.deep_layers == 6);
        CHECK_FALSE(c.stages.compare);
        CHECK(c.stages.train_lm);
    }

    TEST_CASE("comments, blank lines, and spacing are tolerated") {
        ConfigDir cd;
        const std::string body = std::string(
                                     "# a comment\n"
                                     "\n"
                                     "[paths]\n"
                                     "; another comment\n"
                                     "  corpus   =   corpus.txt  \n") +
                                 kSeedsBlock;
        ExperimentConfig c = load_experiment_config(cd.write(body));
        CHECK(c.corpus_path == (cd.dir / "corpus.txt").string());
    }

    TEST_CASE("absolute paths pass through unresolved") {
        ConfigDir cd;
        const std::string abs = (cd.dir / "corpus.txt").string();
        ExperimentConfig c =
            load_experiment_config(cd.write(std::string("[paths]\ncorpus = ") + abs + "\n" +
                                            kSeedsBlock));
        CHECK(c.corpus_path == abs);
    }

    TEST_CASE("every malformed field is named in one error") {
        ConfigDir cd;
        const std::string body = std::string(
                                     "[paths]\n"
                                     "corpus = corpus.txt\n"
                                     "[lm]\n"
                                     "n_layer = banana\n"
                                     "d_model = 3.5\n"
                                     "[lm_train]\n"
                                     "lr = fast\n"
                                     "[gan]\n"
                                     "mode = warm\n"
                                     "[stages]\n"
                                     "compare = maybe\n") +
                                 kSeedsBlock;
        try {
            load_experiment_config(cd.write(body));
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("lm.n_layer") != std::string::npos);
            CHECK(msg.find("lm.d_model") != std::string::npos);
            CHECK(msg.find("lm_train.lr") != std::string::npos);
            CHECK(msg.find("gan.mode") != std::string::npos);
            CHECK(msg.find("stages.compare") != std::string::npos);
        }
    }

    TEST_CASE("missing seeds are reported individually") {
        ConfigDir cd;
        try {
            load_experiment_config(
                cd.write("[paths]\ncorpus = corpus.txt\n[seeds]\ntrain_lm = 1\n"));
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("seeds.train_gan") != std::string::npos);
            CHECK(msg.find("seeds.synthesize") != std::string::npos);
            CHECK(msg.find("seeds.augment_finetune") != std::string::npos);
            CHECK(msg.find("seeds.compare") != std::string::npos);
            CHECK(msg.find("seeds.train_lm") == std::string::npos);
        }
    }

    TEST_CASE("unknown sections and keys are flagged as likely typos") {
        ConfigDir cd;
        const std::string body = std::string(
                                     "[paths]\n"
                                     "corpus = corpus.txt\n"
                                     "typo_key = 3\n"
                                     "[lm]\n"
                                     "n_layers = 4\n"
                                     "[mystery]\n"
                                     "x = 1\n") +
                                 kSeedsBlock;
        try {
            load_experiment_config(cd.write(body));
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("paths.typo_key") != std::string::npos);
            CHECK(msg.find("lm.n_layers") != std::string::npos);
            CHECK(msg.find("[mystery]") != std::string::npos);
        }
    }

    TEST_CASE("structural problems are collected too") {
        ConfigDir cd;
        const std::string body = std::string(
                                     "orphan = 1\n"
                                     "[paths\n"
                                     "[paths]\n"
                                     "corpus = corpus.txt\n"
                                     "corpus = twice.txt\n"
                                     "just a line\n") +
                                 kSeedsBlock;
        try {
            load_experiment_config(cd.write(body));
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("outside any [section]") != std::string::npos);
            CHECK(msg.find("malformed section header") != std::string::npos);
            CHECK(msg.find("duplicate key paths.corpus") != std::string::npos);
            CHECK(msg.find("key = value") != std::string::npos);
        }
    }

    TEST_CASE("semantic validation names the offending fields") {
        ConfigDir cd;
        const std::string body = std::string(
                                     "[paths]\n"
                                     "corpus = nowhere.txt\n"
                                     "[lm]\n"
                                     "n_layer = 0\n"
                                     "[lm_train]\n"
                                     "holdout_fraction = 1.5\n"
                                     "[gan]\n"
                                     "seq_len = 200\n") +
                                 kSeedsBlock;
        try {
            load_experiment_config(cd.write(body));
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("corpus file not found") != std::string::npos);
            CHECK(msg.find("n_layer") != std::string::npos);
            CHECK(msg.find("holdout_fraction") != std::string::npos);
            CHECK(msg.find("seq_len") != std::string::npos);
        }
    }

    TEST_CASE("negative seeds are rejected") {
        ConfigDir cd;
        const std::string body =
            "[paths]\ncorpus = corpus.txt\n"
            "[seeds]\ntrain_lm = -1\ntrain_gan = 2\nsynthesize = 3\n"
            "augment_finetune = 4\ncompare = 5\n";
        try {
            load_experiment_config(cd.write(body));
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("seeds.train_lm") != std::string::npos);
        }
    }

    TEST_CASE("missing config files raise an io error") {
        CHECK_THROWS_AS(load_experiment_config("/no/such/config.ini"), IoError);
    }
}
