#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "kdm/errors.hpp"

namespace kdm {

// Flat key=value run configuration with section-prefixed keys. Every key has
// a default; unknown keys are rejected. The defaults reproduce the
// acceptance-scale pipeline.
struct RunConfig {
    // data
    int data_grid = 4;
    double data_extent = 4.0;
    // teacher
    std::string teacher_kind = "edm";  // edm | fm
    double teacher_sigma_max = 10.0;
    double teacher_sigma_min = 0.002;
    double teacher_rho = 7.0;
    int teacher_iterations = 50000;
    int teacher_batch = 512;
    double teacher_lr = 3e-4;
    std::string teacher_hidden = "128,128,128";
    uint64_t teacher_seed = 1;
    // pairs
    int pairs_n = 50000;
    int pairs_nfe = 10;
    uint64_t pairs_seed = 2;
    bool pairs_conditional = false;
    // kdm
    int kdm_iterations = 30000;
    int kdm_batch = 256;
    double kdm_lr = 3e-4;
    double kdm_lambda_adv = 0.01;
    double kdm_noise_std = 0.4;
    int kdm_latent_dim = 64;
    bool kdm_conditional = false;
    std::string kdm_operator = "dense";  // dense | factorized
    bool kdm_use_rec = true;
    bool kdm_use_lat = true;
    bool kdm_use_pred = true;
    bool kdm_use_adv = true;
    bool kdm_rec_noise_free = false;
    std::string kdm_enc_hidden = "128,128";
    std::string kdm_dec_hidden = "128,128";
    std::string kdm_disc_hidden = "64,64";
    double kdm_train_fraction = 0.9;
    uint64_t kdm_seed = 3;
    // theory
    int theory_degrees = 5;
    int theory_samples = 4000;
    double theory_radius = 0.5;
    int theory_pairs = 10000;
    double theory_ridge = 1e-10;
    uint64_t theory_seed = 4;
    // eval
    int eval_k = 10;
    double eval_eps = 0.15;
    int eval_min_pts = 4;
    std::string eval_sigmas = "0,0.05,0.1,0.2,0.3,0.4,0.5,0.6";
    int eval_samples = 10000;
    int eval_sweep_points = 100;
    uint64_t eval_seed = 5;
    // paths / run
    std::string paths_workdir = "work";
    int threads = 1;
};

namespace detail {

inline std::string cfg_fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct ConfigEntry {
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: bad numeric value for " + key + ": '" + v + "'");
    }
}

inline long long parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const long long i = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer value for " + key + ": '" + v + "'");
    }
}

inline uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const uint64_t i = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer value for " + key + ": '" + v + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: bad boolean value for " + key + ": '" + v + "'");
}

inline const std::vector<ConfigEntry>& config_entries() {
    auto I = [](const std::string& key, int RunConfig::* f) {
        return ConfigEntry{key,
                           [f](const RunConfig& c) { return std::to_string(c.*f); },
                           [f, key](RunConfig& c, const std::string& v) {
                               c.*f = static_cast<int>(parse_int(key, v));
                           }};
    };
    auto D = [](const std::string& key, double RunConfig::* f) {
        return ConfigEntry{key,
                           [f](const RunConfig& c) { return cfg_fmt(c.*f); },
                           [f, key](RunConfig& c, const std::string& v) {
                               c.*f = parse_double(key, v);
                           }};
    };
    auto S = [](const std::string& key, std::string RunConfig::* f) {
        return ConfigEntry{key,
                           [f](const RunConfig& c) { return c.*f; },
                           [f](RunConfig& c, const std::string& v) { c.*f = v; }};
    };
    auto B = [](const std::string& key, bool RunConfig::* f) {
        return ConfigEntry{key,
                           [f](const RunConfig& c) { return std::string(c.*f ? "true" : "false"); },
                           [f, key](RunConfig& c, const std::string& v) {
                               c.*f = parse_bool(key, v);
                           }};
    };
    auto U = [](const std::string& key, uint64_t RunConfig::* f) {
        return ConfigEntry{key,
                           [f](const RunConfig& c) { return std::to_string(c.*f); },
                           [f, key](RunConfig& c, const std::string& v) {
                               c.*f = parse_u64(key, v);
                           }};
    };
    static const std::vector<ConfigEntry> entries = {
        I("data.grid", &RunConfig::data_grid),
        D("data.extent", &RunConfig::data_extent),
        S("teacher.kind", &RunConfig::teacher_kind),
        D("teacher.sigma_max", &RunConfig::teacher_sigma_max),
        D("teacher.sigma_min", &RunConfig::teacher_sigma_min),
        D("teacher.rho", &RunConfig::teacher_rho),
        I("teacher.iterations", &RunConfig::teacher_iterations),
        I("teacher.batch", &RunConfig::teacher_batch),
        D("teacher.lr", &RunConfig::teacher_lr),
        S("teacher.hidden", &RunConfig::teacher_hidden),
        U("teacher.seed", &RunConfig::teacher_seed),
        I("pairs.n", &RunConfig::pairs_n),
        I("pairs.nfe", &RunConfig::pairs_nfe),
        U("pairs.seed", &RunConfig::pairs_seed),
        B("pairs.conditional", &RunConfig::pairs_conditional),
        I("kdm.iterations", &RunConfig::kdm_iterations),
        I("kdm.batch", &RunConfig::kdm_batch),
        D("kdm.lr", &RunConfig::kdm_lr),
        D("kdm.lambda_adv", &RunConfig::kdm_lambda_adv),
        D("kdm.noise_std", &RunConfig::kdm_noise_std),
        I("kdm.latent_dim", &RunConfig::kdm_latent_dim),
        B("kdm.conditional", &RunConfig::kdm_conditional),
        S("kdm.operator", &RunConfig::kdm_operator),
        B("kdm.use_rec", &RunConfig::kdm_use_rec),
        B("kdm.use_lat", &RunConfig::kdm_use_lat),
        B("kdm.use_pred", &RunConfig::kdm_use_pred),
        B("kdm.use_adv", &RunConfig::kdm_use_adv),
        B("kdm.rec_noise_free", &RunConfig::kdm_rec_noise_free),
        S("kdm.enc_hidden", &RunConfig::kdm_enc_hidden),
        S("kdm.dec_hidden", &RunConfig::kdm_dec_hidden),
        S("kdm.disc_hidden", &RunConfig::kdm_disc_hidden),
        D("kdm.train_fraction", &RunConfig::kdm_train_fraction),
        U("kdm.seed", &RunConfig::kdm_seed),
        I("theory.degrees", &RunConfig::theory_degrees),
        I("theory.samples", &RunConfig::theory_samples),
        D("theory.radius", &RunConfig::theory_radius),
        I("theory.pairs", &RunConfig::theory_pairs),
        D("theory.ridge", &RunConfig::theory_ridge),
        U("theory.seed", &RunConfig::theory_seed),
        I("eval.k", &RunConfig::eval_k),
        D("eval.eps", &RunConfig::eval_eps),
        I("eval.min_pts", &RunConfig::eval_min_pts),
        S("eval.sigmas", &RunConfig::eval_sigmas),
        I("eval.samples", &RunConfig::eval_samples),
        I("eval.sweep_points", &RunConfig::eval_sweep_points),
        U("eval.seed", &RunConfig::eval_seed),
        S("paths.workdir", &RunConfig::paths_workdir),
        I("threads", &RunConfig::threads),
    };
    return entries;
}

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

}  // namespace detail

inline void config_set(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& e : detail::config_entries()) {
        if (e.key == key) {
            e.set(cfg, value);
            return;
        }
    }
    throw ConfigError("config: unknown key '" + key + "'");
}

// The effective (defaults-resolved) document, one key=value per line in the
// registry's fixed order. Re-parsing it reproduces the config exactly.
inline std::string config_serialize(const RunConfig& cfg) {
    std::string out;
    for (const auto& e : detail::config_entries()) out += e.key + "=" + e.get(cfg) + "\n";
    return out;
}

inline RunConfig config_parse_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        const size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) + " is not key=value: '" +
                              t + "'");
        config_set(cfg, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
    }
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw MissingInputError(path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return config_parse_text(ss.str());
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& csv) {
    std::vector<int> out;
    std::istringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ','))
        out.push_back(static_cast<int>(detail::parse_int(key, detail::trim(tok))));
    if (out.empty()) throw ConfigError("config: empty list for " + key);
    return out;
}

inline std::vector<double> parse_double_list(const std::string& key, const std::string& csv) {
    std::vector<double> out;
    std::istringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ','))
        out.push_back(detail::parse_double(key, detail::trim(tok)));
    if (out.empty()) throw ConfigError("config: empty list for " + key);
    return out;
}

// FNV-1a over the serialized lines whose keys start with any given prefix.
// Artifact filenames embed this, so a command finds exactly the inputs
// produced by the matching upstream configuration.
inline std::string config_hash(const RunConfig& cfg, const std::vector<std::string>& prefixes) {
    uint64_t h = 0xCBF29CE484222325ULL;
    auto feed = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001B3ULL;
        }
    };
    for (const auto& e : detail::config_entries()) {
        bool match = prefixes.empty();
        for (const auto& p : prefixes)
            if (e.key.rfind(p, 0) == 0) match = true;
        if (match) feed(e.key + "=" + e.get(cfg) + "\n");
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%012llx", static_cast<unsigned long long>(h & 0xFFFFFFFFFFFFULL));
    return buf;
}

}  // namespace kdm
