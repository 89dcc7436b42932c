#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ldqn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Maximum dimension for which dense d x d objects (materialized estimates,
// Hessians, the DAve-QN baseline) are allowed. Configurable per call site.
inline constexpr int kDefaultDenseCap = 512;

struct curvature_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct degenerate_step : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct invalid_tuple : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct dimension_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct parse_error : std::runtime_error {
    parse_error(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_no(line) {}
    std::size_t line_no;
};

struct index_error : parse_error {
    using parse_error::parse_error;
};

struct insufficient_history : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct insufficient_epochs : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct not_positive_definite : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct incompatible_traces : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Sparse feature vector with strictly increasing 0-based indices.
struct SparseRow {
    std::vector<std::int32_t> idx;
    std::vector<double> val;

    double dot(const Vector& x) const {
        double s = 0.0;
        for (std::size_t k = 0; k < idx.size(); ++k) s += val[k] * x[idx[k]];
        return s;
    }

    // y += c * this
    void add_scaled(Vector& y, double c) const {
        for (std::size_t k = 0; k < idx.size(); ++k) y[idx[k]] += c * val[k];
    }

    double squared_norm() const {
        double s = 0.0;
        for (double v : val) s += v * v;
        return s;
    }

    std::size_t nnz() const { return idx.size(); }
};

}  // namespace ldqn
