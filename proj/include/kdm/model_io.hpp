#pragma once

#include <cstdio>
#include <string>

#include "kdm/checkpoint.hpp"
#include "kdm/student.hpp"
#include "kdm/teacher.hpp"

namespace kdm {

namespace detail {

// Shortest decimal that round-trips a double.
inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void mlp_to_tensors(const Mlp& net, const std::string& prefix, Checkpoint& ck) {
    for (size_t l = 0; l < net.layers.size(); ++l) {
        ck.tensors.emplace_back(prefix + ".l" + std::to_string(l) + ".w", net.layers[l].w);
        ck.tensors.emplace_back(prefix + ".l" + std::to_string(l) + ".b", net.layers[l].b);
    }
}

inline Mlp mlp_from_tensors(const Checkpoint& ck, const std::string& prefix, int embed_dim) {
    Mlp net;
    net.embed_dim = embed_dim;
    for (size_t l = 0;; ++l) {
        const std::string base = prefix + ".l" + std::to_string(l);
        bool found = false;
        for (const auto& [n, m] : ck.tensors)
            if (n == base + ".w") found = true;
        if (!found) break;
        net.layers.push_back({ck.tensor(base + ".w"), ck.tensor(base + ".b")});
    }
    if (net.layers.empty()) throw IoError("checkpoint has no layers under " + prefix);
    return net;
}

}  // namespace detail

inline Checkpoint teacher_to_checkpoint(const Teacher& t) {
    Checkpoint ck;
    detail::mlp_to_tensors(t.net, "net", ck);
    ck.meta = {{"kind", "teacher"},
               {"teacher_kind", to_string(t.kind)},
               {"grid", std::to_string(t.data_spec.grid)},
               {"extent", detail::fmt_double(t.data_spec.extent)},
               {"sigma_min", detail::fmt_double(t.sigma_min)},
               {"sigma_max", detail::fmt_double(t.sigma_max)},
               {"rho", detail::fmt_double(t.rho)},
               {"embed_dim", std::to_string(t.embed_dim)}};
    return ck;
}

inline Teacher teacher_from_checkpoint(const Checkpoint& ck) {
    if (ck.meta_value("kind") != "teacher") throw IoError("checkpoint is not a teacher");
    Teacher t;
    t.kind = ck.meta_value("teacher_kind") == "fm" ? TeacherKind::fm : TeacherKind::edm;
    t.data_spec.grid = std::stoi(ck.meta_value("grid"));
    t.data_spec.extent = std::stod(ck.meta_value("extent"));
    t.sigma_min = std::stod(ck.meta_value("sigma_min"));
    t.sigma_max = std::stod(ck.meta_value("sigma_max"));
    t.rho = std::stod(ck.meta_value("rho"));
    t.embed_dim = std::stoi(ck.meta_value("embed_dim"));
    t.net = detail::mlp_from_tensors(ck, "net", t.embed_dim);
    return t;
}

inline Checkpoint kdm_to_checkpoint(const KdmModel& m, const Discriminator* disc = nullptr) {
    Checkpoint ck;
    detail::mlp_to_tensors(m.enc_clean, "enc_clean", ck);
    detail::mlp_to_tensors(m.enc_noisy, "enc_noisy", ck);
    std::string op_kind;
    if (const auto* dense = std::get_if<DenseKoopman>(&m.koopman)) {
        op_kind = "dense";
        ck.tensors.emplace_back("koopman.c", dense->c);
    } else {
        op_kind = "factorized";
        const auto& f = std::get<FactorizedKoopman>(m.koopman);
        ck.tensors.emplace_back("koopman.p_re", f.p_re);
        ck.tensors.emplace_back("koopman.p_im", f.p_im);
        ck.tensors.emplace_back("koopman.pinv_re", f.pinv_re);
        ck.tensors.emplace_back("koopman.pinv_im", f.pinv_im);
        ck.tensors.emplace_back("koopman.nu", f.nu);
        ck.tensors.emplace_back("koopman.theta", f.theta);
    }
    if (m.conditional) ck.tensors.emplace_back("control.c_mu", m.control);
    detail::mlp_to_tensors(m.dec, "dec", ck);
    if (disc) detail::mlp_to_tensors(disc->net, "disc", ck);
    ck.meta = {{"kind", "kdm"},
               {"latent_dim", std::to_string(m.latent_dim)},
               {"conditional", m.conditional ? "1" : "0"},
               {"n_classes", std::to_string(m.n_classes)},
               {"time_embed_dim", std::to_string(m.time_embed_dim)},
               {"operator", op_kind},
               {"has_disc", disc ? "1" : "0"}};
    return ck;
}

inline KdmModel kdm_from_checkpoint(const Checkpoint& ck, Discriminator* disc_out = nullptr) {
    if (ck.meta_value("kind") != "kdm") throw IoError("checkpoint is not a kdm model");
    KdmModel m;
    m.latent_dim = std::stoi(ck.meta_value("latent_dim"));
    m.conditional = ck.meta_value("conditional") == "1";
    m.n_classes = std::stoi(ck.meta_value("n_classes"));
    m.time_embed_dim = std::stoi(ck.meta_value("time_embed_dim"));
    const int embed = m.time_embed_dim + (m.conditional ? m.n_classes : 0);
    m.enc_clean = detail::mlp_from_tensors(ck, "enc_clean", embed);
    m.enc_noisy = detail::mlp_from_tensors(ck, "enc_noisy", embed);
    if (ck.meta_value("operator") == "dense") {
        m.koopman = DenseKoopman{ck.tensor("koopman.c")};
    } else {
        m.koopman = FactorizedKoopman{ck.tensor("koopman.p_re"),    ck.tensor("koopman.p_im"),
                                      ck.tensor("koopman.pinv_re"), ck.tensor("koopman.pinv_im"),
                                      ck.tensor("koopman.nu"),      ck.tensor("koopman.theta")};
    }
    if (m.conditional) m.control = ck.tensor("control.c_mu");
    m.dec = detail::mlp_from_tensors(ck, "dec", embed);
    if (disc_out && ck.has_meta("has_disc") && ck.meta_value("has_disc") == "1")
        disc_out->net = detail::mlp_from_tensors(ck, "disc", m.conditional ? m.n_classes : 0);
    return m;
}

}  // namespace kdm
