#pragma once
// Shared numeric plumbing: small dense matrices, seeded rng streams,
// error categories mapped to CLI exit codes.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace bregkge {

// Thrown on bad configs / bad CLI arguments (exit code 2).
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown on unreadable or malformed data files (exit code 3).
struct data_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown when training or an oracle run diverges (exit code 4).
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown on out-of-domain numeric inputs (nonpositive probabilities etc).
struct domain_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Row-major dense matrix of doubles. Small worlds and embedding tables only;
// nothing here is tuned for BLAS-scale work.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {}

    double* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }
    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
    size_t size() const { return v.size(); }
    void fill(double x) { std::fill(v.begin(), v.end(), x); }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
    return m;
}

// splitmix64: used to derive independent rng streams from (seed, tags...).
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    h = splitmix64(h ^ c);
    return h;
}

// Deterministic sub-stream keyed by tags; parallel and serial execution draw
// from the same per-key stream, so batch order never changes results.
inline std::mt19937_64 make_stream(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    return std::mt19937_64(mix_seed(seed, a, b, c));
}

// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

// Probabilities are clamped here before any log.
inline constexpr double kProbEps = 1e-15;

inline double clamped_log(double p) { return std::log(p < kProbEps ? kProbEps : p); }

}  // namespace bregkge
