#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tempo/errors.hpp"
#include "tempo/rng.hpp"

namespace tempo::io {

/// Shortest representation that round-trips a double exactly.
inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Write via a temp file + rename so readers never observe partial content.
inline void write_text_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw InputError("cannot open " + tmp + " for writing");
        os << content;
        if (!os) throw InputError("write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline uint64_t fnv1a_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("cannot open " + path);
    uint64_t h = 1469598103934665603ULL;
    char buf[1 << 14];
    while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
        const auto n = is.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
        if (!is) break;
    }
    return h;
}

/// Minimal CSV accumulator; all numbers formatted via fmt_double.
class CsvBuilder {
public:
    explicit CsvBuilder(std::vector<std::string> header) {
        append_row(header);
    }

    void append_row(const std::vector<std::string>& cells) {
        for (size_t i = 0; i < cells.size(); ++i) {
            if (i) text_ += ',';
            text_ += cells[i];
        }
        text_ += '\n';
    }

    const std::string& text() const { return text_; }

private:
    std::string text_;
};

} // namespace tempo::io
