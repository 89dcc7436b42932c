#pragma once

#include "ldqn/objectives.hpp"
#include "ldqn/types.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace ldqn {

struct Dataset {
    std::vector<SparseRow> rows;
    std::vector<double> labels;  // mapped to {-1, +1}
    int d = 0;
    std::size_t nnz = 0;
};

struct SynthConfig {
    std::size_t N = 0;
    int d = 0;
    double noise_sigma2 = 0.09;
    double sparsity = 0.0;  // fraction of entries zeroed across the whole matrix
    std::uint64_t seed = 0;
};

namespace detail {

inline void map_labels(std::vector<double>& labels, std::size_t line_of_first = 1) {
    std::set<double> distinct(labels.begin(), labels.end());
    auto is = [&](std::initializer_list<double> vals) {
        const std::set<double> allowed(vals);
        return std::includes(allowed.begin(), allowed.end(), distinct.begin(), distinct.end());
    };
    if (is({-1.0, 1.0})) return;
    if (is({0.0, 1.0})) {
        for (auto& b : labels) b = (b == 0.0) ? -1.0 : 1.0;
        return;
    }
    if (is({1.0, 2.0})) {
        for (auto& b : labels) b = (b == 1.0) ? -1.0 : 1.0;
        return;
    }
    throw parse_error(line_of_first, "labels must be {-1,+1}, {0,1}, or {1,2}");
}

}  // namespace detail

inline void normalize_features(Dataset& ds);

// LIBSVM text format: "label idx:val idx:val ..." with 1-based strictly
// increasing indices. Internally indices are stored 0-based.
inline Dataset parse_libsvm(std::istream& in, bool normalize = false) {
    Dataset ds;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        // strip comments and blank lines
        if (auto pos = line.find('#'); pos != std::string::npos) line.resize(pos);
        std::istringstream ls(line);
        double label;
        if (!(ls >> label)) continue;
        SparseRow row;
        std::string tok;
        std::int64_t prev = 0;
        while (ls >> tok) {
            const auto colon = tok.find(':');
            if (colon == std::string::npos) throw parse_error(line_no, "expected idx:val, got '" + tok + "'");
            std::int64_t idx;
            double val;
            try {
                idx = std::stoll(tok.substr(0, colon));
                val = std::stod(tok.substr(colon + 1));
            } catch (const std::exception&) {
                throw parse_error(line_no, "malformed token '" + tok + "'");
            }
            if (idx <= 0) throw index_error(line_no, "indices are 1-based, got " + std::to_string(idx));
            if (idx <= prev) throw parse_error(line_no, "indices must be strictly increasing");
            prev = idx;
            row.idx.push_back(static_cast<std::int32_t>(idx - 1));
            row.val.push_back(val);
            ds.d = std::max(ds.d, static_cast<int>(idx));
        }
        ds.nnz += row.nnz();
        ds.rows.push_back(std::move(row));
        ds.labels.push_back(label);
    }
    if (!ds.labels.empty()) detail::map_labels(ds.labels);
    if (normalize) normalize_features(ds);
    return ds;
}

// Min-max normalization of each feature's observed range to [0,1]. Implicit
// zeros count as observed values; features with a negative minimum therefore
// acquire explicit entries for former zeros.
inline void normalize_features(Dataset& ds) {
    std::vector<double> lo(ds.d, 0.0), hi(ds.d, 0.0);
    for (const auto& row : ds.rows)
        for (std::size_t k = 0; k < row.idx.size(); ++k) {
            lo[row.idx[k]] = std::min(lo[row.idx[k]], row.val[k]);
            hi[row.idx[k]] = std::max(hi[row.idx[k]], row.val[k]);
        }
    bool any_negative = std::any_of(lo.begin(), lo.end(), [](double v) { return v < 0.0; });
    auto scale = [&](int j, double v) {
        return (hi[j] > lo[j]) ? (v - lo[j]) / (hi[j] - lo[j]) : 0.0;
    };
    ds.nnz = 0;
    for (auto& row : ds.rows) {
        if (!any_negative) {
            for (std::size_t k = 0; k < row.idx.size(); ++k) row.val[k] = scale(row.idx[k], row.val[k]);
        } else {
            // rebuild densifying features whose zero no longer maps to zero
            SparseRow out;
            std::size_t k = 0;
            for (int j = 0; j < ds.d; ++j) {
                double v = 0.0;
                if (k < row.idx.size() && row.idx[k] == j) v = row.val[k++];
                const double t = scale(j, v);
                if (t != 0.0) {
                    out.idx.push_back(j);
                    out.val.push_back(t);
                }
            }
            row = std::move(out);
        }
        ds.nnz += row.nnz();
    }
}

// Loads a LIBSVM file from disk; ".gz" files are decompressed transparently.
Dataset load_libsvm_file(const std::string& path, bool normalize = false);

// Synthetic binary classification data: x ~ N(0, Sigma) with Sigma_ii = i^{-1.2},
// z = <x, 1> + xi with xi ~ N(0, noise_sigma2), label +1 with probability
// sigma(z). Sparsity zeroes a uniform fraction of all entries of the matrix.
inline Dataset generate_synthetic(const SynthConfig& cfg) {
    Dataset ds;
    ds.d = cfg.d;
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> sigma(cfg.d);
    for (int i = 0; i < cfg.d; ++i) sigma[i] = std::pow(static_cast<double>(i + 1), -0.6);  // sqrt(i^-1.2)
    const double noise_sd = std::sqrt(cfg.noise_sigma2);
    for (std::size_t s = 0; s < cfg.N; ++s) {
        SparseRow row;
        double z = 0.0;
        for (int i = 0; i < cfg.d; ++i) {
            double v = sigma[i] * gauss(rng);
            if (cfg.sparsity > 0.0 && unif(rng) < cfg.sparsity) v = 0.0;
            if (v != 0.0) {
                row.idx.push_back(i);
                row.val.push_back(v);
                z += v;
            }
        }
        z += noise_sd * gauss(rng);
        ds.labels.push_back(unif(rng) < logistic(z) ? 1.0 : -1.0);
        ds.nnz += row.nnz();
        ds.rows.push_back(std::move(row));
    }
    return ds;
}

// Random balanced split into n shards (sizes differ by at most one), each
// carrying the full regularizer lambda.
inline std::vector<Shard> partition(const Dataset& ds, int n, std::uint64_t seed, double lambda) {
    std::vector<std::size_t> perm(ds.rows.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Shard> shards(n);
    const std::size_t base = ds.rows.size() / static_cast<std::size_t>(n);
    const std::size_t extra = ds.rows.size() % static_cast<std::size_t>(n);
    std::size_t pos = 0;
    for (int i = 0; i < n; ++i) {
        Shard& sh = shards[i];
        sh.lambda = lambda;
        sh.dim = ds.d;
        const std::size_t count = base + (static_cast<std::size_t>(i) < extra ? 1 : 0);
        for (std::size_t k = 0; k < count; ++k, ++pos) {
            sh.rows.push_back(ds.rows[perm[pos]]);
            sh.labels.push_back(ds.labels[perm[pos]]);
        }
    }
    return shards;
}

inline Dataset load_libsvm_file(const std::string& path, bool normalize) {
    if (path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0) {
        gzFile gz = gzopen(path.c_str(), "rb");
        if (!gz) throw std::runtime_error("cannot open " + path);
        std::string text;
        char buf[1 << 16];
        int got;
        while ((got = gzread(gz, buf, sizeof(buf))) > 0) text.append(buf, static_cast<std::size_t>(got));
        gzclose(gz);
        std::istringstream in(text);
        return parse_libsvm(in, normalize);
    }
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return parse_libsvm(in, normalize);
}

}  // namespace ldqn
