#include "textgen/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include "textgen/error.hpp"
#include "textgen/io_util.hpp"

namespace textgen {

namespace {

constexpr char kMagic[8] = {'T', 'X', 'G', 'C', 'K', 'P', 'T', '1'};

uint32_t crc32(const unsigned char* data, size_t n) {
    static const std::array<uint32_t, 256> table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1u) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    uint32_t c = 0xFFFFFFFFu;
    for (size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFFu] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

struct ByteWriter {
    std::string buf;

    void raw(const void* p, size_t n) { buf.append(static_cast<const char*>(p), n); }
    void u32(uint32_t v) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        raw(b, 4);
    }
    void u64(uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        raw(b, 8);
    }
    void f64(double d) {
        uint64_t bits;
        std::memcpy(&bits, &d, 8);
        u64(bits);
    }
    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
};

struct ByteReader {
    const unsigned char* p;
    size_t n;
    size_t off = 0;

    void need(size_t k) const {
        if (off + k > n) throw CorruptionError("checkpoint truncated");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[off + i]) << (8 * i);
        off += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[off + i]) << (8 * i);
        off += 8;
        return v;
    }
    double f64() {
        const uint64_t bits = u64();
        double d;
        std::memcpy(&d, &bits, 8);
        return d;
    }
    std::string str(size_t max_len = 1u << 20) {
        const uint32_t len = u32();
        if (len > max_len) throw CorruptionError("checkpoint string length implausible");
        need(len);
        std::string s(reinterpret_cast<const char*>(p + off), len);
        off += len;
        return s;
    }
};

}  // namespace

void save_checkpoint_file(const std::string& path, const CheckpointData& data) {
    ByteWriter w;
    w.raw(kMagic, 8);
    w.u32(data.version);
    w.str(data.section);
    std::string cfg_text;
    for (const auto& [k, v] : data.config) cfg_text += k + "=" + v + "\n";
    w.str(cfg_text);
    w.u32(static_cast<uint32_t>(data.blocks.size()));
    for (const auto& [name, t] : data.blocks) {
        w.str(name);
        w.u32(static_cast<uint32_t>(t.rank()));
        for (int i = 0; i < t.rank(); ++i) w.u32(static_cast<uint32_t>(t.dim(i)));
        w.u64(static_cast<uint64_t>(t.numel()));
        for (double d : t.data()) w.f64(d);
    }
    w.u32(crc32(reinterpret_cast<const unsigned char*>(w.buf.data()), w.buf.size()));
    write_text_file(path, w.buf);
}

CheckpointData load_checkpoint_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read checkpoint " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    if (bytes.size() < 8 + 4 + 4) throw CorruptionError("checkpoint truncated");
    const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
    const size_t body = bytes.size() - 4;
    uint32_t stored = 0;
    for (int i = 0; i < 4; ++i) stored |= static_cast<uint32_t>(raw[body + i]) << (8 * i);
    if (crc32(raw, body) != stored)
        throw CorruptionError("checkpoint checksum mismatch in " + path);
    if (std::memcmp(bytes.data(), kMagic, 8) != 0)
        throw CorruptionError("not a checkpoint file: " + path);

    ByteReader r{raw, body, 8};
    CheckpointData data;
    data.version = r.u32();
    if (data.version != kCheckpointVersion)
        throw CorruptionError("checkpoint format version " + std::to_string(data.version) +
                              " unsupported; this build reads version " +
                              std::to_string(kCheckpointVersion));
    data.section = r.str(64);
    const std::string cfg_text = r.str();
    size_t pos = 0;
    while (pos < cfg_text.size()) {
        size_t nl = cfg_text.find('\n', pos);
        if (nl == std::string::npos) nl = cfg_text.size();
        const std::string line = cfg_text.substr(pos, nl - pos);
        pos = nl + 1;
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw CorruptionError("malformed config line in checkpoint: " + line);
        data.config.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    const uint32_t n_blocks = r.u32();
    if (n_blocks > (1u << 16)) throw CorruptionError("checkpoint block count implausible");
    for (uint32_t i = 0; i < n_blocks; ++i) {
        const std::string name = r.str(4096);
        const uint32_t rank = r.u32();
        if (rank > 8) throw CorruptionError("checkpoint tensor rank implausible");
        Shape shape(rank);
        int64_t expect = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            shape[d] = static_cast<int>(r.u32());
            expect *= shape[d];
        }
        const uint64_t numel = r.u64();
        if (static_cast<int64_t>(numel) != expect)
            throw CorruptionError("checkpoint block '" + name + "' numel disagrees with shape");
        std::vector<double> vals(numel);
        for (auto& v : vals) v = r.f64();
        data.blocks.emplace_back(name, Tensor::from_data(std::move(shape), std::move(vals)));
    }
    if (r.off != body) throw CorruptionError("checkpoint has trailing bytes");
    return data;
}

namespace {

// Ordered config lookup helper shared by both typed loaders.
class ConfigMap {
   public:
    explicit ConfigMap(const std::vector<std::pair<std::string, std::string>>& kv) {
        for (const auto& [k, v] : kv) {
            if (!map_.emplace(k, v).second)
                throw CorruptionError("duplicate checkpoint config key: " + k);
        }
    }

    const std::string& get(const std::string& key) {
        auto it = map_.find(key);
        if (it == map_.end()) throw CorruptionError("checkpoint config missing key: " + key);
        used_.insert(key);
        return it->second;
    }
    int get_int(const std::string& key) {
        const std::string& s = get(key);
        try {
            size_t idx = 0;
            const int v = std::stoi(s, &idx);
            if (idx != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw CorruptionError("checkpoint config key " + key + " is not an integer: " + s);
        }
    }
    double get_double(const std::string& key) {
        const std::string& s = get(key);
        try {
            size_t idx = 0;
            const double v = std::stod(s, &idx);
            if (idx != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw CorruptionError("checkpoint config key " + key + " is not a number: " + s);
        }
    }
    void expect_all_used() const {
        for (const auto& [k, v] : map_)
            if (!used_.count(k))
                throw CorruptionError("unexpected checkpoint config key: " + k);
    }

   private:
    std::map<std::string, std::string> map_;
    std::set<std::string> used_;
};

void fill_params(std::vector<std::pair<std::string, Tensor>> params,
                 const std::vector<std::pair<std::string, Tensor>>& blocks,
                 const std::string& what) {
    if (params.size() != blocks.size())
        throw CorruptionError(what + " checkpoint holds " + std::to_string(blocks.size()) +
                              " tensors, expected " + std::to_string(params.size()));
    std::map<std::string, Tensor> by_name;
    for (auto& [name, t] : params) by_name.emplace(name, t);
    for (const auto& [name, src] : blocks) {
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw CorruptionError(what + " checkpoint has unknown tensor '" + name + "'");
        Tensor dst = it->second;
        if (src.shape() != dst.shape())
            throw CorruptionError(what + " checkpoint tensor '" + name + "' has shape " +
                                  shape_str(src.shape()) + ", expected " +
                                  shape_str(dst.shape()));
        dst.data() = src.data();
        by_name.erase(it);
    }
    if (!by_name.empty())
        throw CorruptionError(what + " checkpoint is missing tensor '" +
                              by_name.begin()->first + "'");
}

}  // namespace

void save_lm_checkpoint(const std::string& path, const LmModel& model,
                        const std::string& vocab_ref) {
    CheckpointData data;
    data.section = "lm";
    const LmConfig& c = model.cfg;
    data.config = {
        {"n_layer", std::to_string(c.n_layer)},
        {"n_head", std::to_string(c.n_head)},
        {"d_model", std::to_string(c.d_model)},
        {"d_ff", std::to_string(c.d_ff)},
        {"max_seq_len", std::to_string(c.max_seq_len)},
        {"vocab_size", std::to_string(c.vocab_size)},
        {"dropout_rate", format_double(c.dropout_rate)},
        {"vocab_file", vocab_ref},
    };
    data.blocks = model.named_parameters();
    save_checkpoint_file(path, data);
}

LmModel load_lm_checkpoint(const std::string& path, std::string* vocab_ref) {
    CheckpointData data = load_checkpoint_file(path);
    if (data.section != "lm")
        throw CorruptionError(path + " is a '" + data.section + "' checkpoint, expected 'lm'");
    ConfigMap cfg(data.config);
    LmConfig c;
    c.n_layer = cfg.get_int("n_layer");
    c.n_head = cfg.get_int("n_head");
    c.d_model = cfg.get_int("d_model");
    c.d_ff = cfg.get_int("d_ff");
    c.max_seq_len = cfg.get_int("max_seq_len");
    c.vocab_size = cfg.get_int("vocab_size");
    c.dropout_rate = cfg.get_double("dropout_rate");
    const std::string ref = cfg.get("vocab_file");
    cfg.expect_all_used();
    if (vocab_ref) *vocab_ref = ref;

    Rng scratch(0, "checkpoint-skeleton");
    LmModel model = LmModel::init(c, scratch);
    fill_params(model.named_parameters(), data.blocks, "lm");
    return model;
}

void save_gan_checkpoint(const std::string& path, const Generator& gen,
                         const Discriminator& disc, const GanConfig& cfg) {
    CheckpointData data;
    data.section = "gan";
    data.config = {
        {"noise_dim", std::to_string(cfg.noise_dim)},
        {"seq_len", std::to_string(cfg.seq_len)},
        {"vocab_size", std::to_string(cfg.vocab_size)},
        {"gen_hidden", std::to_string(cfg.gen_hidden)},
        {"disc_embed", std::to_string(cfg.disc_embed)},
        {"disc_hidden", std::to_string(cfg.disc_hidden)},
        {"d_steps", std::to_string(cfg.d_steps)},
        {"g_steps", std::to_string(cfg.g_steps)},
        {"mode", sample_mode_name(cfg.mode)},
        {"tau_start", format_double(cfg.tau.tau_start)},
        {"tau_end", format_double(cfg.tau.tau_end)},
        {"tau_decay", format_double(cfg.tau.decay)},
        {"lr", format_double(cfg.opt.lr)},
        {"beta1", format_double(cfg.opt.beta1)},
        {"beta2", format_double(cfg.opt.beta2)},
        {"eps", format_double(cfg.opt.eps)},
        {"warmup_steps", std::to_string(cfg.opt.warmup_steps)},
        {"batch_size", std::to_string(cfg.opt.batch_size)},
    };
    for (const auto& [name, t] : gen.named_parameters()) data.blocks.emplace_back("gen." + name, t);
    for (const auto& [name, t] : disc.named_parameters())
        data.blocks.emplace_back("disc." + name, t);
    save_checkpoint_file(path, data);
}

GanCheckpoint load_gan_checkpoint(const std::string& path) {
    CheckpointData data = load_checkpoint_file(path);
    if (data.section != "gan")
        throw CorruptionError(path + " is a '" + data.section + "' checkpoint, expected 'gan'");
    ConfigMap cfg(data.config);
    GanCheckpoint out;
    out.cfg.noise_dim = cfg.get_int("noise_dim");
    out.cfg.seq_len = cfg.get_int("seq_len");
    out.cfg.vocab_size = cfg.get_int("vocab_size");
    out.cfg.gen_hidden = cfg.get_int("gen_hidden");
    out.cfg.disc_embed = cfg.get_int("disc_embed");
    out.cfg.disc_hidden = cfg.get_int("disc_hidden");
    out.cfg.d_steps = cfg.get_int("d_steps");
    out.cfg.g_steps = cfg.get_int("g_steps");
    out.cfg.mode = sample_mode_from_name(cfg.get("mode"));
    out.cfg.tau.tau_start = cfg.get_double("tau_start");
    out.cfg.tau.tau_end = cfg.get_double("tau_end");
    out.cfg.tau.decay = cfg.get_double("tau_decay");
    out.cfg.opt.lr = cfg.get_double("lr");
    out.cfg.opt.beta1 = cfg.get_double("beta1");
    out.cfg.opt.beta2 = cfg.get_double("beta2");
    out.cfg.opt.eps = cfg.get_double("eps");
    out.cfg.opt.warmup_steps = cfg.get_int("warmup_steps");
    out.cfg.opt.batch_size = cfg.get_int("batch_size");
    cfg.expect_all_used();

    Rng scratch(0, "checkpoint-skeleton");
    out.gen = Generator::init(out.cfg, scratch);
    out.disc = Discriminator::init(out.cfg, scratch);
    std::vector<std::pair<std::string, Tensor>> params;
    for (const auto& [name, t] : out.gen.named_parameters())
        params.emplace_back("gen." + name, t);
    for (const auto& [name, t] : out.disc.named_parameters())
        params.emplace_back("disc." + name, t);
    fill_params(std::move(params), data.blocks, "gan");
    return out;
}

}  // namespace textgen
