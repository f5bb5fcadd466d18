#include "textgen/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "textgen/error.hpp"

namespace textgen {

namespace {

const char* kReservedNames[Vocab::kReserved] = {"<pad>", "<bos>", "<eos>", "<unk>"};

std::string escape_char(char c) {
    switch (c) {
        case '\\':
            return "\\\\";
        case '\n':
            return "\\n";
        case '\t':
            return "\\t";
        case '\r':
            return "\\r";
        default:
            return std::string(1, c);
    }
}

char unescape_token(const std::string& s, int line_no) {
    if (s.size() == 1) return s[0];
    if (s.size() == 2 && s[0] == '\\') {
        switch (s[1]) {
            case '\\':
                return '\\';
            case 'n':
                return '\n';
            case 't':
                return '\t';
            case 'r':
                return '\r';
            default:
                break;
        }
    }
    throw CorruptionError("vocab file line " + std::to_string(line_no) + ": bad token \"" + s +
                          "\"");
}

}  // namespace

Vocab Vocab::build(const std::string& corpus_text) {
    if (corpus_text.empty()) {
        throw InputError("build_vocab: corpus is empty");
    }
    std::set<char> distinct(corpus_text.begin(), corpus_text.end());
    // Line terminators delimit sequences; they are not content, and letting
    // them into the vocabulary would let generated text embed line breaks
    // that the one-sequence-per-line dataset format cannot carry.
    distinct.erase('\n');
    distinct.erase('\r');
    if (distinct.empty()) throw InputError("build_vocab: corpus has no printable characters");
    Vocab v;
    v.chars_.assign(distinct.begin(), distinct.end());
    for (size_t i = 0; i < v.chars_.size(); ++i) {
        v.char_to_id_[static_cast<unsigned char>(v.chars_[i])] = kReserved + static_cast<int>(i);
    }
    return v;
}

int Vocab::id_of(char c) const {
    const int id = char_to_id_[static_cast<unsigned char>(c)];
    return id < 0 ? kUnk : id;
}

std::string Vocab::token(int id) const {
    if (id < 0 || id >= size()) {
        throw IndexError("token: id " + std::to_string(id) + " out of range [0," +
                         std::to_string(size()) + ")");
    }
    if (id < kReserved) return kReservedNames[id];
    return std::string(1, chars_[static_cast<size_t>(id - kReserved)]);
}

TokenSequence Vocab::encode(const std::string& text) const {
    TokenSequence seq;
    seq.ids.reserve(text.size() + 2);
    seq.ids.push_back(kBos);
    for (char c : text) seq.ids.push_back(id_of(c));
    seq.ids.push_back(kEos);
    return seq;
}

std::string Vocab::decode(const TokenSequence& seq) const {
    std::string out;
    out.reserve(seq.ids.size());
    for (int id : seq.ids) {
        if (id < 0 || id >= size()) {
            throw IndexError("decode: id " + std::to_string(id) + " out of range [0," +
                             std::to_string(size()) + ")");
        }
        if (id < kReserved) continue;
        out.push_back(chars_[static_cast<size_t>(id - kReserved)]);
    }
    return out;
}

void Vocab::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write vocab file " + path);
    for (int id = 0; id < kReserved; ++id) f << kReservedNames[id] << '\n';
    for (char c : chars_) f << escape_char(c) << '\n';
    if (!f) throw IoError("failed while writing vocab file " + path);
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open vocab file " + path);
    Vocab v;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        if (line_no < kReserved) {
            if (line != kReservedNames[line_no]) {
                throw CorruptionError("vocab file " + path + ": line " + std::to_string(line_no) +
                                      " must be " + kReservedNames[line_no]);
            }
        } else {
            v.chars_.push_back(unescape_token(line, line_no));
        }
        ++line_no;
    }
    if (line_no < kReserved) {
        throw CorruptionError("vocab file " + path + ": missing reserved tokens");
    }
    if (!std::is_sorted(v.chars_.begin(), v.chars_.end()) ||
        std::adjacent_find(v.chars_.begin(), v.chars_.end()) != v.chars_.end()) {
        throw CorruptionError("vocab file " + path + ": tokens not sorted and distinct");
    }
    for (size_t i = 0; i < v.chars_.size(); ++i) {
        v.char_to_id_[static_cast<unsigned char>(v.chars_[i])] = kReserved + static_cast<int>(i);
    }
    return v;
}

}  // namespace textgen
