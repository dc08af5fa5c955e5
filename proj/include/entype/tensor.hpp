#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace entype {

using Vec = std::vector<double>;

/// Dense row-major matrix of doubles. Every trainable tensor is one of
/// these; a bias is a Matrix with cols == 1.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return a[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return a[r * cols + c]; }
    std::size_t size() const { return a.size(); }

    void zero() { std::fill(a.begin(), a.end(), 0.0); }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

// y = M x
inline Vec matvec(const Matrix& m, const Vec& x) {
    if (x.size() != m.cols) throw std::invalid_argument("matvec: shape mismatch");
    Vec y(m.rows, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* row = m.a.data() + r * m.cols;
        double s = 0.0;
        for (std::size_t c = 0; c < m.cols; ++c) s += row[c] * x[c];
        y[r] = s;
    }
    return y;
}

// y = M^T x
inline Vec matvec_t(const Matrix& m, const Vec& x) {
    if (x.size() != m.rows) throw std::invalid_argument("matvec_t: shape mismatch");
    Vec y(m.cols, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* row = m.a.data() + r * m.cols;
        const double xr = x[r];
        for (std::size_t c = 0; c < m.cols; ++c) y[c] += row[c] * xr;
    }
    return y;
}

// M += scale * u v^T
inline void add_outer(Matrix& m, const Vec& u, const Vec& v, double scale = 1.0) {
    if (u.size() != m.rows || v.size() != m.cols)
        throw std::invalid_argument("add_outer: shape mismatch");
    for (std::size_t r = 0; r < m.rows; ++r) {
        double* row = m.a.data() + r * m.cols;
        const double ur = scale * u[r];
        for (std::size_t c = 0; c < m.cols; ++c) row[c] += ur * v[c];
    }
}

inline double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// y += scale * x
inline void axpy(Vec& y, const Vec& x, double scale = 1.0) {
    if (x.size() != y.size()) throw std::invalid_argument("axpy: length mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += scale * x[i];
}

inline double norm2(const Vec& v) { return std::sqrt(dot(v, v)); }

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline bool all_finite(const Matrix& m) {
    for (double x : m.a)
        if (!std::isfinite(x)) return false;
    return true;
}

/// Seeded random source. All draws go through explicit integer-to-double
/// mappings so results do not depend on the standard library's
/// distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1)
    double unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + unit() * (hi - lo); }

    // uniform integer in [0, n)
    std::size_t below(std::size_t n) {
        if (n == 0) throw std::invalid_argument("Rng::below(0)");
        const std::uint64_t lim = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= lim);
        return static_cast<std::size_t>(x % n);
    }

    bool bernoulli(double p) { return unit() < p; }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

    /// Fill with i.i.d. U(-range, range). Values are rounded through
    /// float so freshly initialized parameters survive a float32
    /// checkpoint round trip bit-exactly.
    void fill_uniform(Matrix& m, double range) {
        for (double& x : m.a) x = static_cast<double>(static_cast<float>(uniform(-range, range)));
    }

private:
    std::mt19937_64 gen_;
};

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// Stable softmax with max subtraction. Input may be any finite scores.
inline Vec softmax(const Vec& scores) {
    if (scores.empty()) throw std::invalid_argument("softmax: empty input");
    double mx = scores[0];
    for (double s : scores) mx = std::max(mx, s);
    Vec out(scores.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - mx);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

}  // namespace entype
