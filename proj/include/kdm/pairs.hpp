#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kdm/checkerboard.hpp"
#include "kdm/errors.hpp"
#include "kdm/io.hpp"
#include "kdm/rng.hpp"

namespace kdm {

// One harvested (noise, data) record. label is present only in conditional
// sets; outside-flagged pairs have a label slot but no valid cell.
struct NoisePair {
    Point x_t{0.0, 0.0};
    Point x_0{0.0, 0.0};
    std::optional<int> label;
    bool outside = false;

    bool operator==(const NoisePair& o) const {
        return x_t == o.x_t && x_0 == o.x_0 && label == o.label && outside == o.outside;
    }
};

struct PairMeta {
    std::string teacher_kind = "edm";
    uint32_t nfe = 10;
    uint64_t seed = 0;
    CheckerboardSpec data_spec;
    bool conditional = false;

    bool operator==(const PairMeta& o) const {
        return teacher_kind == o.teacher_kind && nfe == o.nfe && seed == o.seed &&
               data_spec == o.data_spec && conditional == o.conditional;
    }
};

struct PairSet {
    std::vector<NoisePair> pairs;
    PairMeta meta;

    size_t size() const { return pairs.size(); }
};

// --- KDMP container -------------------------------------------------------
//
//   "KDMP" | version u8 (=1) | conditional u8 | count u32
//   per record: xT.x xT.y x0.x x0.y as f32 LE, then u16 label iff conditional
//   (0xFFFF = outside)
//   trailer: u32 byte count + UTF-8 key=value lines
//
// Coordinates are narrowed to 32-bit floats on save; a save/load round trip
// is lossless after the first narrowing.

constexpr uint16_t kOutsideLabel = 0xFFFF;

inline std::vector<uint8_t> encode_pairs(const PairSet& set) {
    for (const auto& p : set.pairs) {
        if (!std::isfinite(p.x_t[0]) || !std::isfinite(p.x_t[1]) || !std::isfinite(p.x_0[0]) ||
            !std::isfinite(p.x_0[1]))
            throw NonFiniteError("pair set contains non-finite coordinates");
        if (set.meta.conditional != p.label.has_value() && !(set.meta.conditional && p.outside))
            throw ConfigError("pair labeling inconsistent with conditional flag");
    }
    std::vector<uint8_t> b;
    b.insert(b.end(), {'K', 'D', 'M', 'P'});
    b.push_back(1);
    b.push_back(set.meta.conditional ? 1 : 0);
    io::put_u32(b, static_cast<uint32_t>(set.pairs.size()));
    for (const auto& p : set.pairs) {
        io::put_f32(b, static_cast<float>(p.x_t[0]));
        io::put_f32(b, static_cast<float>(p.x_t[1]));
        io::put_f32(b, static_cast<float>(p.x_0[0]));
        io::put_f32(b, static_cast<float>(p.x_0[1]));
        if (set.meta.conditional) {
            const uint16_t lab =
                p.outside || !p.label ? kOutsideLabel : static_cast<uint16_t>(*p.label);
            io::put_u16(b, lab);
        }
    }
    std::ostringstream ext;
    ext << set.meta.data_spec.extent;
    io::put_kv_trailer(b, {{"teacher", set.meta.teacher_kind},
                           {"nfe", std::to_string(set.meta.nfe)},
                           {"seed", std::to_string(set.meta.seed)},
                           {"grid", std::to_string(set.meta.data_spec.grid)},
                           {"extent", ext.str()}});
    return b;
}

inline PairSet decode_pairs(const std::vector<uint8_t>& buf) {
    io::Reader r(buf.data(), buf.size());
    const uint8_t* magic = r.take(4);
    if (std::memcmp(magic, "KDMP", 4) != 0) throw BadMagicError("bad magic, expected KDMP");
    const uint8_t version = r.u8();
    if (version != 1) throw VersionError("unsupported KDMP version " + std::to_string(version));
    PairSet set;
    set.meta.conditional = r.u8() != 0;
    const uint32_t count = r.u32();
    set.pairs.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        NoisePair p;
        const float a = r.f32(), b2 = r.f32(), c = r.f32(), d = r.f32();
        if (!std::isfinite(a) || !std::isfinite(b2) || !std::isfinite(c) || !std::isfinite(d))
            throw NonFiniteError("non-finite coordinate in record " + std::to_string(i));
        p.x_t = {a, b2};
        p.x_0 = {c, d};
        if (set.meta.conditional) {
            const uint16_t lab = r.u16();
            if (lab == kOutsideLabel) {
                p.outside = true;
            } else {
                p.label = lab;
            }
        }
        set.pairs.push_back(p);
    }
    for (const auto& [k, v] : io::read_kv_trailer(r)) {
        if (k == "teacher") set.meta.teacher_kind = v;
        else if (k == "nfe") set.meta.nfe = static_cast<uint32_t>(std::stoul(v));
        else if (k == "seed") set.meta.seed = std::stoull(v);
        else if (k == "grid") set.meta.data_spec.grid = std::stoi(v);
        else if (k == "extent") set.meta.data_spec.extent = std::stod(v);
        else throw IoError("unknown metadata key: " + k);
    }
    if (r.remaining() != 0) throw TruncatedError("trailing bytes after KDMP trailer");
    return set;
}

inline void save_pairs(const PairSet& set, const std::string& path) {
    io::write_file(path, encode_pairs(set));
}

inline PairSet load_pairs(const std::string& path) { return decode_pairs(io::read_file(path)); }

// Seed-deterministic disjoint + exhaustive shuffle split.
inline std::pair<PairSet, PairSet> split(const PairSet& set, double train_fraction,
                                         uint64_t seed) {
    if (!(train_fraction > 0.0) || !(train_fraction < 1.0))
        throw ConfigError("split: train_fraction must be in (0, 1)");
    std::vector<size_t> idx(set.pairs.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(seed);
    rng.shuffle(idx);
    const size_t n_train = static_cast<size_t>(train_fraction * static_cast<double>(idx.size()));
    PairSet train, val;
    train.meta = set.meta;
    val.meta = set.meta;
    for (size_t i = 0; i < idx.size(); ++i)
        (i < n_train ? train : val).pairs.push_back(set.pairs[idx[i]]);
    return {std::move(train), std::move(val)};
}

// CSV export for plotting: header xT_x,xT_y,x0_x,x0_y,label. The label column
// is empty for unconditional sets and -1 for outside-flagged pairs.
inline void export_pairs_csv(const PairSet& set, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << "xT_x,xT_y,x0_x,x0_y,label\n";
    f.precision(9);
    for (const auto& p : set.pairs) {
        f << p.x_t[0] << ',' << p.x_t[1] << ',' << p.x_0[0] << ',' << p.x_0[1] << ',';
        if (set.meta.conditional) f << (p.outside || !p.label ? -1 : *p.label);
        f << '\n';
    }
    if (!f) throw IoError("write failed: " + path);
}

}  // namespace kdm
