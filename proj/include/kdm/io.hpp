#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "kdm/errors.hpp"

namespace kdm::io {

// Little-endian primitives over a byte buffer. Writers append; the Reader
// throws TruncatedError on any short read.

inline void put_u16(std::vector<uint8_t>& b, uint16_t v) {
    b.push_back(static_cast<uint8_t>(v & 0xFF));
    b.push_back(static_cast<uint8_t>((v >> 8) & 0xFF));
}

inline void put_u32(std::vector<uint8_t>& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xFF));
}

inline void put_u64(std::vector<uint8_t>& b, uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xFF));
}

inline void put_f32(std::vector<uint8_t>& b, float v) { put_u32(b, std::bit_cast<uint32_t>(v)); }
inline void put_f64(std::vector<uint8_t>& b, double v) { put_u64(b, std::bit_cast<uint64_t>(v)); }

class Reader {
public:
    Reader(const uint8_t* data, size_t size) : data_(data), size_(size) {}

    size_t remaining() const { return size_ - pos_; }

    const uint8_t* take(size_t n) {
        if (pos_ + n > size_) throw TruncatedError("file truncated");
        const uint8_t* p = data_ + pos_;
        pos_ += n;
        return p;
    }

    uint8_t u8() { return *take(1); }

    uint16_t u16() {
        const uint8_t* p = take(2);
        return static_cast<uint16_t>(p[0] | (p[1] << 8));
    }

    uint32_t u32() {
        const uint8_t* p = take(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
        return v;
    }

    uint64_t u64() {
        const uint8_t* p = take(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
        return v;
    }

    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }

private:
    const uint8_t* data_;
    size_t size_;
    size_t pos_ = 0;
};

inline std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw MissingInputError(path);
    f.seekg(0, std::ios::end);
    const std::streamoff n = f.tellg();
    f.seekg(0, std::ios::beg);
    std::vector<uint8_t> buf(static_cast<size_t>(n));
    if (n > 0) f.read(reinterpret_cast<char*>(buf.data()), n);
    if (!f) throw IoError("read failed: " + path);
    return buf;
}

inline void write_file(const std::string& path, const std::vector<uint8_t>& buf) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    if (!buf.empty()) f.write(reinterpret_cast<const char*>(buf.data()), buf.size());
    if (!f) throw IoError("write failed: " + path);
}

// Serialize key=value lines (one per entry, '\n'-terminated) as a
// length-prefixed UTF-8 trailer.
inline void put_kv_trailer(std::vector<uint8_t>& b,
                           const std::vector<std::pair<std::string, std::string>>& kv) {
    std::string text;
    for (const auto& [k, v] : kv) text += k + "=" + v + "\n";
    put_u32(b, static_cast<uint32_t>(text.size()));
    b.insert(b.end(), text.begin(), text.end());
}

inline std::vector<std::pair<std::string, std::string>> read_kv_trailer(Reader& r) {
    const uint32_t n = r.u32();
    const uint8_t* p = r.take(n);
    std::string text(reinterpret_cast<const char*>(p), n);
    std::vector<std::pair<std::string, std::string>> kv;
    size_t start = 0;
    while (start < text.size()) {
        size_t nl = text.find('\n', start);
        if (nl == std::string::npos) nl = text.size();
        const std::string line = text.substr(start, nl - start);
        start = nl + 1;
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) throw IoError("malformed metadata line: " + line);
        kv.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    return kv;
}

}  // namespace kdm::io
