#pragma once

#include "ldqn/types.hpp"

#include <cstring>
#include <string>

namespace ldqn {

// The O(d) payload a worker sends per communication. `skipped` marks the
// curvature-guard path: no tuple was formed, alpha = beta = 0, q = 0, but
// delta_u and y are still valid and keep the master's ledgers consistent.
struct WorkerMessage {
    int worker_id = 0;
    Vector delta_u;
    Vector y;
    Vector q_tilde;
    double alpha = 0.0;
    double beta_tilde = 0.0;
    bool skipped = false;
};

namespace wire {

// Little-endian layout: u32 worker_id, u8 skipped, f64 alpha, f64 beta,
// then three length-prefixed (u64) f64 vectors delta_u, y, q.
inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

inline void put_vector(std::string& out, const Vector& v) {
    put_u64(out, static_cast<std::uint64_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) put_f64(out, v[i]);
}

inline std::uint64_t get_u64(const std::string& in, std::size_t& pos) {
    if (pos + 8 > in.size()) throw std::runtime_error("truncated message");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    pos += 8;
    return v;
}

inline double get_f64(const std::string& in, std::size_t& pos) {
    const std::uint64_t bits = get_u64(in, pos);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

inline Vector get_vector(const std::string& in, std::size_t& pos) {
    const auto n = get_u64(in, pos);
    Vector v(static_cast<Eigen::Index>(n));
    for (std::uint64_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = get_f64(in, pos);
    return v;
}

}  // namespace wire

inline std::string serialize(const WorkerMessage& m) {
    std::string out;
    wire::put_u64(out, static_cast<std::uint64_t>(m.worker_id));
    out.push_back(m.skipped ? 1 : 0);
    wire::put_f64(out, m.alpha);
    wire::put_f64(out, m.beta_tilde);
    wire::put_vector(out, m.delta_u);
    wire::put_vector(out, m.y);
    wire::put_vector(out, m.q_tilde);
    return out;
}

inline WorkerMessage deserialize(const std::string& in) {
    std::size_t pos = 0;
    WorkerMessage m;
    m.worker_id = static_cast<int>(wire::get_u64(in, pos));
    if (pos >= in.size()) throw std::runtime_error("truncated message");
    m.skipped = in[pos++] != 0;
    m.alpha = wire::get_f64(in, pos);
    m.beta_tilde = wire::get_f64(in, pos);
    m.delta_u = wire::get_vector(in, pos);
    m.y = wire::get_vector(in, pos);
    m.q_tilde = wire::get_vector(in, pos);
    return m;
}

}  // namespace ldqn
