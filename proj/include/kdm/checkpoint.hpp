#pragma once

#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "kdm/errors.hpp"
#include "kdm/io.hpp"
#include "kdm/matrix.hpp"

namespace kdm {

// --- KDMC container ---------------------------------------------------------
//
//   "KDMC" | version u8 (=1) | tensor count u32
//   per tensor: u16 name length + name | u32 rows | u32 cols | f64 LE data
//   trailer: u32 byte count + UTF-8 key=value lines
//
// Parameters are stored as 64-bit floats so a reload is bit-exact.

struct Checkpoint {
    std::vector<std::pair<std::string, Matrix>> tensors;
    std::vector<std::pair<std::string, std::string>> meta;

    const Matrix& tensor(const std::string& name) const {
        for (const auto& [n, m] : tensors)
            if (n == name) return m;
        throw IoError("checkpoint tensor not found: " + name);
    }

    std::string meta_value(const std::string& key) const {
        for (const auto& [k, v] : meta)
            if (k == key) return v;
        throw IoError("checkpoint metadata key not found: " + key);
    }

    bool has_meta(const std::string& key) const {
        for (const auto& [k, v] : meta)
            if (k == key) return true;
        return false;
    }
};

inline std::vector<uint8_t> encode_checkpoint(const Checkpoint& ck) {
    std::vector<uint8_t> b;
    b.insert(b.end(), {'K', 'D', 'M', 'C'});
    b.push_back(1);
    io::put_u32(b, static_cast<uint32_t>(ck.tensors.size()));
    for (const auto& [name, m] : ck.tensors) {
        if (!m.all_finite()) throw NonFiniteError("non-finite parameter tensor: " + name);
        io::put_u16(b, static_cast<uint16_t>(name.size()));
        b.insert(b.end(), name.begin(), name.end());
        io::put_u32(b, static_cast<uint32_t>(m.rows));
        io::put_u32(b, static_cast<uint32_t>(m.cols));
        for (double x : m.data) io::put_f64(b, x);
    }
    io::put_kv_trailer(b, ck.meta);
    return b;
}

inline Checkpoint decode_checkpoint(const std::vector<uint8_t>& buf) {
    io::Reader r(buf.data(), buf.size());
    const uint8_t* magic = r.take(4);
    if (std::memcmp(magic, "KDMC", 4) != 0) throw BadMagicError("bad magic, expected KDMC");
    const uint8_t version = r.u8();
    if (version != 1) throw VersionError("unsupported KDMC version " + std::to_string(version));
    Checkpoint ck;
    const uint32_t count = r.u32();
    for (uint32_t t = 0; t < count; ++t) {
        const uint16_t name_len = r.u16();
        const uint8_t* np = r.take(name_len);
        std::string name(reinterpret_cast<const char*>(np), name_len);
        const uint32_t rows = r.u32();
        const uint32_t cols = r.u32();
        Matrix m(static_cast<int>(rows), static_cast<int>(cols));
        for (auto& x : m.data) x = r.f64();
        if (!m.all_finite()) throw NonFiniteError("non-finite parameter tensor: " + name);
        ck.tensors.emplace_back(std::move(name), std::move(m));
    }
    ck.meta = io::read_kv_trailer(r);
    if (r.remaining() != 0) throw TruncatedError("trailing bytes after KDMC trailer");
    return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    io::write_file(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::string& path) {
    return decode_checkpoint(io::read_file(path));
}

}  // namespace kdm
