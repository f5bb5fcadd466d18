#pragma once

#include <charconv>
#include <fstream>
#include <string>
#include <vector>

#include "textgen/error.hpp"

namespace textgen {

// Shortest round-trip decimal form; stable across runs for byte-exact CSVs.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << content;
    if (!f) throw IoError("failed while writing " + path);
}

// Minimal CSV emitter; fields are assumed free of commas and newlines.
class CsvWriter {
   public:
    explicit CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

    void add_row(std::vector<std::string> row) { rows_.push_back(std::move(row)); }

    std::string str() const {
        std::string out = join(header_);
        for (const auto& r : rows_) out += join(r);
        return out;
    }

    void save(const std::string& path) const { write_text_file(path, str()); }

   private:
    static std::string join(const std::vector<std::string>& fields) {
        std::string line;
        for (size_t i = 0; i < fields.size(); ++i) {
            if (i > 0) line += ',';
            line += fields[i];
        }
        line += '\n';
        return line;
    }

    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

}  // namespace textgen
