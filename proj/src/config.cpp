#include "textgen/config.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <vector>

#include "textgen/error.hpp"

namespace textgen {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// Sectioned key=value file with '#'/';' comment lines. Collects every
// problem instead of stopping at the first.
class ConfigReader {
   public:
    ConfigReader(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw IoError("cannot read config file " + path);
        std::string line, section;
        int lineno = 0;
        while (std::getline(f, line)) {
            ++lineno;
            const std::string t = trim(line);
            if (t.empty() || t[0] == '#' || t[0] == ';') continue;
            if (t.front() == '[') {
                if (t.back() != ']' || t.size() < 3) {
                    fail("line " + std::to_string(lineno) + ": malformed section header '" + t +
                         "'");
                    continue;
                }
                section = trim(t.substr(1, t.size() - 2));
                sections_.insert(section);
                continue;
            }
            const size_t eq = t.find('=');
            if (eq == std::string::npos) {
                fail("line " + std::to_string(lineno) + ": expected key = value, got '" + t + "'");
                continue;
            }
            if (section.empty()) {
                fail("line " + std::to_string(lineno) + ": key outside any [section]");
                continue;
            }
            const std::string key = trim(t.substr(0, eq));
            const std::string value = trim(t.substr(eq + 1));
            if (key.empty()) {
                fail("line " + std::to_string(lineno) + ": empty key");
                continue;
            }
            if (!values_.emplace(section + "." + key, value).second)
                fail("duplicate key " + section + "." + key);
        }
    }

    bool has(const std::string& section, const std::string& key) const {
        return values_.count(section + "." + key) > 0;
    }

    std::string get_str(const std::string& section, const std::string& key,
                        const std::string& fallback) {
        auto it = values_.find(section + "." + key);
        if (it == values_.end()) return fallback;
        used_.insert(it->first);
        return it->second;
    }

    int get_int(const std::string& section, const std::string& key, int fallback) {
        return parse<int>(section, key, fallback, "an integer", [](const std::string& s, size_t* i) {
            return std::stoi(s, i);
        });
    }

    uint64_t get_u64(const std::string& section, const std::string& key, uint64_t fallback) {
        return parse<uint64_t>(section, key, fallback, "a non-negative integer",
                               [](const std::string& s, size_t* i) {
                                   if (!s.empty() && s[0] == '-') throw std::invalid_argument(s);
                                   return static_cast<uint64_t>(std::stoull(s, i));
                               });
    }

    uint64_t require_u64(const std::string& section, const std::string& key) {
        if (!has(section, key)) {
            fail("missing required key " + section + "." + key +
                 " (every stage seed must be written out)");
            return 0;
        }
        return get_u64(section, key, 0);
    }

    double get_double(const std::string& section, const std::string& key, double fallback) {
        return parse<double>(section, key, fallback, "a number",
                             [](const std::string& s, size_t* i) { return std::stod(s, i); });
    }

    bool get_bool(const std::string& section, const std::string& key, bool fallback) {
        auto it = values_.find(section + "." + key);
        if (it == values_.end()) return fallback;
        used_.insert(it->first);
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        fail(it->first + " must be true or false, got '" + it->second + "'");
        return fallback;
    }

    void fail(const std::string& msg) { errors_.push_back(msg); }

    // Unused keys are almost always typos; surface them all.
    void finish(const std::set<std::string>& known_sections) {
        for (const auto& s : sections_)
            if (!known_sections.count(s)) fail("unknown section [" + s + "]");
        for (const auto& [k, v] : values_)
            if (!used_.count(k) && known_sections.count(k.substr(0, k.find('.'))))
                fail("unknown key " + k);
        if (!errors_.empty()) {
            std::string all = "config problems:";
            for (const auto& e : errors_) all += "\n  - " + e;
            throw ConfigError(all);
        }
    }

   private:
    template <typename T, typename F>
    T parse(const std::string& section, const std::string& key, T fallback, const char* want,
            F&& conv) {
        auto it = values_.find(section + "." + key);
        if (it == values_.end()) return fallback;
        used_.insert(it->first);
        try {
            size_t idx = 0;
            T v = conv(it->second, &idx);
            if (idx != it->second.size()) throw std::invalid_argument(it->second);
            return v;
        } catch (const std::exception&) {
            fail(it->first + " must be " + want + ", got '" + it->second + "'");
            return fallback;
        }
    }

    std::map<std::string, std::string> values_;
    std::set<std::string> sections_;
    std::set<std::string> used_;
    std::vector<std::string> errors_;
};

std::string resolve_against(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    if (path.is_absolute()) return path.string();
    return (base / path).lexically_normal().string();
}

}  // namespace

ExperimentConfig load_experiment_config(const std::string& path) {
    ConfigReader r(path);
    ExperimentConfig c;
    const std::filesystem::path base = std::filesystem::path(path).parent_path();

    c.corpus_path = r.get_str("paths", "corpus", "");
    if (c.corpus_path.empty())
        r.fail("missing required key paths.corpus");
    else
        c.corpus_path = resolve_against(base, c.corpus_path);
    c.out_dir = resolve_against(base, r.get_str("paths", "out_dir", "out"));

    c.lm.n_layer = r.get_int("lm", "n_layer", c.lm.n_layer);
    c.lm.n_head = r.get_int("lm", "n_head", c.lm.n_head);
    c.lm.d_model = r.get_int("lm", "d_model", c.lm.d_model);
    c.lm.d_ff = r.get_int("lm", "d_ff", c.lm.d_ff);
    c.lm.max_seq_len = r.get_int("lm", "max_seq_len", c.lm.max_seq_len);
    c.lm.dropout_rate = r.get_double("lm", "dropout_rate", c.lm.dropout_rate);

    c.lm_opt.lr = r.get_double("lm_train", "lr", c.lm_opt.lr);
    c.lm_opt.beta1 = r.get_double("lm_train", "beta1", c.lm_opt.beta1);
    c.lm_opt.beta2 = r.get_double("lm_train", "beta2", c.lm_opt.beta2);
    c.lm_opt.eps = r.get_double("lm_train", "eps", c.lm_opt.eps);
    c.lm_opt.warmup_steps = r.get_int("lm_train", "warmup_steps", c.lm_opt.warmup_steps);
    c.lm_opt.batch_size = r.get_int("lm_train", "batch_size", c.lm_opt.batch_size);
    c.lm_steps = r.get_int("lm_train", "steps", c.lm_steps);
    c.holdout_fraction = r.get_double("lm_train", "holdout_fraction", c.holdout_fraction);

    c.gan.noise_dim = r.get_int("gan", "noise_dim", c.gan.noise_dim);
    c.gan.seq_len = r.get_int("gan", "seq_len", c.gan.seq_len);
    c.gan.gen_hidden = r.get_int("gan", "gen_hidden", c.gan.gen_hidden);
    c.gan.disc_embed = r.get_int("gan", "disc_embed", c.gan.disc_embed);
    c.gan.disc_hidden = r.get_int("gan", "disc_hidden", c.gan.disc_hidden);
    c.gan.d_steps = r.get_int("gan", "d_steps", c.gan.d_steps);
    c.gan.g_steps = r.get_int("gan", "g_steps", c.gan.g_steps);
    const std::string mode = r.get_str("gan", "mode", sample_mode_name(c.gan.mode));
    try {
        c.gan.mode = sample_mode_from_name(mode);
    } catch (const ConfigError&) {
        r.fail("gan.mode must be soft or hard, got '" + mode + "'");
    }
    c.gan.tau.tau_start = r.get_double("gan", "tau_start", c.gan.tau.tau_start);
    c.gan.tau.tau_end = r.get_double("gan", "tau_end", c.gan.tau.tau_end);
    c.gan.tau.decay = r.get_double("gan", "tau_decay", c.gan.tau.decay);
    c.gan.opt.lr = r.get_double("gan", "lr", c.gan.opt.lr);
    c.gan.opt.beta1 = r.get_double("gan", "beta1", c.gan.opt.beta1);
    c.gan.opt.beta2 = r.get_double("gan", "beta2", c.gan.opt.beta2);
    c.gan.opt.eps = r.get_double("gan", "eps", c.gan.opt.eps);
    c.gan.opt.warmup_steps = r.get_int("gan", "warmup_steps", c.gan.opt.warmup_steps);
    c.gan.opt.batch_size = r.get_int("gan", "batch_size", c.gan.opt.batch_size);
    c.gan_steps = r.get_int("gan", "steps", c.gan_steps);

    c.augment.n_synthetic = r.get_int("augment", "n_synthetic", c.augment.n_synthetic);
    c.augment.tau = r.get_double("augment", "tau", c.augment.tau);

    c.finetune_opt.lr = r.get_double("finetune", "lr", 1e-4);
    c.finetune_opt.beta1 = r.get_double("finetune", "beta1", c.finetune_opt.beta1);
    c.finetune_opt.beta2 = r.get_double("finetune", "beta2", c.finetune_opt.beta2);
    c.finetune_opt.eps = r.get_double("finetune", "eps", c.finetune_opt.eps);
    c.finetune_opt.warmup_steps = r.get_int("finetune", "warmup_steps", 0);
    c.finetune_opt.batch_size = r.get_int("finetune", "batch_size", c.finetune_opt.batch_size);
    c.finetune_steps = r.get_int("finetune", "steps", c.finetune_steps);

    c.eval.model_file = r.get_str("eval", "model", c.eval.model_file);
    c.eval.data = r.get_str("eval", "data", c.eval.data);

    c.compare.baseline_layers = r.get_int("compare", "baseline_layers", c.compare.baseline_layers);
    c.compare.deep_layers = r.get_int("compare", "deep_layers", c.compare.deep_layers);
    c.compare.steps = r.get_int("compare", "steps", c.compare.steps);

    c.seeds.train_lm = r.require_u64("seeds", "train_lm");
    c.seeds.train_gan = r.require_u64("seeds", "train_gan");
    c.seeds.synthesize = r.require_u64("seeds", "synthesize");
    c.seeds.augment_finetune = r.require_u64("seeds", "augment_finetune");
    c.seeds.compare = r.require_u64("seeds", "compare");
    c.augment.seed = c.seeds.synthesize;
    c.augment.shuffle_seed = c.seeds.augment_finetune;

    c.stages.train_lm = r.get_bool("stages", "train_lm", true);
    c.stages.train_gan = r.get_bool("stages", "train_gan", true);
    c.stages.synthesize = r.get_bool("stages", "synthesize", true);
    c.stages.augment_finetune = r.get_bool("stages", "augment_finetune", true);
    c.stages.compare = r.get_bool("stages", "compare", true);

    r.finish({"paths", "lm", "lm_train", "gan", "augment", "finetune", "eval", "compare", "seeds",
              "stages"});
    c.validate();
    return c;
}

void ExperimentConfig::validate() const {
    std::vector<std::string> bad;
    auto check = [&bad](const char* label, auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            bad.push_back(std::string(label) + ": " + e.what());
        }
    };

    check("paths.corpus", [&] {
        if (!std::filesystem::exists(corpus_path))
            throw IoError("corpus file not found: " + corpus_path);
    });
    check("lm", [&] {
        LmConfig copy = lm;
        copy.vocab_size = Vocab::kReserved + 1;  // fixed at tokenization time
        copy.validate();
    });
    check("lm_train", [&] { lm_opt.validate(); });
    check("gan", [&] {
        GanConfig copy = gan;
        copy.vocab_size = Vocab::kReserved + 1;
        copy.validate();
    });
    check("finetune", [&] { finetune_opt.validate(); });
    check("augment", [&] { augment.validate(); });
    if (lm_steps < 0) bad.push_back("lm_train.steps must be >= 0");
    if (gan_steps < 0) bad.push_back("gan.steps must be >= 0");
    if (finetune_steps < 0) bad.push_back("finetune.steps must be >= 0");
    if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0))
        bad.push_back("lm_train.holdout_fraction must be in [0, 1)");
    if (gan.seq_len + 2 > lm.max_seq_len)
        bad.push_back("gan.seq_len + 2 must fit in lm.max_seq_len so re-encoded synthetic "
                      "sequences stay legal");
    if (compare.baseline_layers < 1) bad.push_back("compare.baseline_layers must be >= 1");
    if (compare.deep_layers < 1) bad.push_back("compare.deep_layers must be >= 1");
    if (compare.steps < 0) bad.push_back("compare.steps must be >= 0");
    if (eval.data != "holdout" && eval.data != "train")
        bad.push_back("eval.data must be holdout or train");
    if (eval.model_file.empty()) bad.push_back("eval.model must not be empty");

    if (!bad.empty()) {
        std::string all = "config problems:";
        for (const auto& e : bad) all += "\n  - " + e;
        throw ConfigError(all);
    }
}

}  // namespace textgen
