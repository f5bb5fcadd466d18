#pragma once

#include <array>
#include <string>
#include <vector>

namespace textgen {

// A token sequence is a list of vocabulary ids. Encoded text is framed as
// [BOS, content..., EOS]; PAD only ever follows the first EOS.
struct TokenSequence {
    std::vector<int> ids;

    int length() const { return static_cast<int>(ids.size()); }
    bool operator==(const TokenSequence&) const = default;
};

// Byte-level vocabulary: the distinct characters of a corpus in sorted order,
// behind four fixed reserved ids. Immutable once built.
class Vocab {
   public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;
    static constexpr int kReserved = 4;

    static Vocab build(const std::string& corpus_text);

    int size() const { return kReserved + static_cast<int>(chars_.size()); }

    // Id for a character; UNK when absent.
    int id_of(char c) const;

    // Printable token spelling: reserved names, or the character itself.
    std::string token(int id) const;

    bool is_reserved(int id) const { return id >= 0 && id < kReserved; }

    TokenSequence encode(const std::string& text) const;

    // Drops every reserved token and maps the rest back to characters.
    std::string decode(const TokenSequence& seq) const;

    // One token per line, line number = id. Non-printables are escaped.
    void save(const std::string& path) const;
    static Vocab load(const std::string& path);

    bool operator==(const Vocab& other) const { return chars_ == other.chars_; }

   private:
    Vocab() { char_to_id_.fill(-1); }

    std::vector<char> chars_;  // sorted distinct corpus characters; id = kReserved + index
    std::array<int, 256> char_to_id_;
};

}  // namespace textgen
