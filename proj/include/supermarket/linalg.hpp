#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <vector>

#include "supermarket/errors.hpp"

// Dense real vector/matrix kernel: Kronecker and Hadamard operations,
// stationary vectors of tiny CTMC generators, and sub-generator inversion.
// Everything here is value-semantic and safe to call concurrently.

namespace supermarket {

// Centralized tolerances.
inline constexpr double kStructuralTol = 1e-9;   // descriptor validation
inline constexpr double kSolveTol = 1e-12;       // linear-solve residuals

struct Vector {
    std::vector<double> data;

    Vector() = default;
    explicit Vector(std::size_t n, double fill = 0.0) : data(n, fill) {}
    Vector(std::initializer_list<double> init) : data(init) {}

    std::size_t size() const { return data.size(); }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    double sum() const {
        double s = 0.0;
        for (double x : data) s += x;
        return s;
    }
    double max_abs() const {
        double m = 0.0;
        for (double x : data) m = std::max(m, std::fabs(x));
        return m;
    }

    static Vector ones(std::size_t n) { return Vector(n, 1.0); }
};

inline Vector operator+(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw StructuralError("vector size mismatch in +");
    Vector r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

inline Vector operator-(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw StructuralError("vector size mismatch in -");
    Vector r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

inline Vector operator*(double s, const Vector& v) {
    Vector r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) r[i] = s * v[i];
    return r;
}

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}
    Matrix(std::initializer_list<std::initializer_list<double>> init) {
        rows = init.size();
        cols = rows ? init.begin()->size() : 0;
        data.reserve(rows * cols);
        for (const auto& row : init) {
            if (row.size() != cols) throw StructuralError("ragged matrix initializer");
            for (double x : row) data.push_back(x);
        }
    }

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    bool square() const { return rows == cols; }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
    static Matrix from_row(const Vector& v) {
        Matrix m(1, v.size());
        m.data = v.data;
        return m;
    }
    static Matrix from_col(const Vector& v) {
        Matrix m(v.size(), 1);
        m.data = v.data;
        return m;
    }

    double max_abs() const {
        double m = 0.0;
        for (double x : data) m = std::max(m, std::fabs(x));
        return m;
    }
};

inline Matrix operator+(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw StructuralError("matrix shape mismatch in +");
    Matrix r(a.rows, a.cols);
    for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] = a.data[i] + b.data[i];
    return r;
}

inline Matrix operator-(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw StructuralError("matrix shape mismatch in -");
    Matrix r(a.rows, a.cols);
    for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] = a.data[i] - b.data[i];
    return r;
}

inline Matrix operator*(double s, const Matrix& m) {
    Matrix r(m.rows, m.cols);
    for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] = s * m.data[i];
    return r;
}

inline Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw StructuralError("matrix shape mismatch in *");
    Matrix r(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) r(i, j) += aik * b(k, j);
        }
    return r;
}

// row vector * matrix
inline Vector operator*(const Vector& v, const Matrix& m) {
    if (v.size() != m.rows) throw StructuralError("shape mismatch in vec*mat");
    Vector r(m.cols);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double vi = v[i];
        if (vi == 0.0) continue;
        for (std::size_t j = 0; j < m.cols; ++j) r[j] += vi * m(i, j);
    }
    return r;
}

// matrix * column vector
inline Vector operator*(const Matrix& m, const Vector& v) {
    if (m.cols != v.size()) throw StructuralError("shape mismatch in mat*vec");
    Vector r(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) s += m(i, j) * v[j];
        r[i] = s;
    }
    return r;
}

inline double dot(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw StructuralError("vector size mismatch in dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Kronecker product: block (i,j) of the result is a_{ij} * B.
inline Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix r(a.rows * b.rows, a.cols * b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) {
            const double aij = a(i, j);
            if (aij == 0.0) continue;
            for (std::size_t p = 0; p < b.rows; ++p)
                for (std::size_t q = 0; q < b.cols; ++q)
                    r(i * b.rows + p, j * b.cols + q) = aij * b(p, q);
        }
    return r;
}

// Kronecker product of two row vectors, flattened in lexicographic order.
inline Vector kron(const Vector& a, const Vector& b) {
    Vector r(a.size() * b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) r[i * b.size() + j] = a[i] * b[j];
    return r;
}

// Kronecker sum A ⊕ B = A⊗I + I⊗B. Convenience only; nothing downstream uses it.
inline Matrix kron_sum(const Matrix& a, const Matrix& b) {
    if (!a.square() || !b.square()) throw StructuralError("kron_sum needs square inputs");
    return kron(a, Matrix::identity(b.rows)) + kron(Matrix::identity(a.rows), b);
}

// Entrywise d-th power.
inline Vector hadamard_power(const Vector& v, unsigned d) {
    if (d < 1) throw DomainError("hadamard_power: d must be >= 1");
    Vector r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        r[i] = d == 1 ? v[i] : std::pow(v[i], static_cast<double>(d));
    return r;
}

// Entrywise d-th root; entries must be nonnegative.
inline Vector hadamard_root(const Vector& v, unsigned d) {
    if (d < 1) throw DomainError("hadamard_root: d must be >= 1");
    Vector r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] < 0.0)
            throw DomainError("hadamard_root: negative entry at index " + std::to_string(i));
        r[i] = d == 1 ? v[i] : std::pow(v[i], 1.0 / static_cast<double>(d));
    }
    return r;
}

namespace detail {

// Gaussian elimination with partial pivoting; solves A x = b in place.
// Returns false when A is numerically singular.
inline bool solve_inplace(Matrix a, Vector b, Vector& x) {
    const std::size_t n = a.rows;
    if (!a.square() || b.size() != n) throw StructuralError("solve: shape mismatch");
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        double best = std::fabs(a(col, col));
        for (std::size_t r = col + 1; r < n; ++r) {
            const double cand = std::fabs(a(r, col));
            if (cand > best) {
                best = cand;
                piv = r;
            }
        }
        if (best == 0.0) return false;
        if (piv != col) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a(piv, j), a(col, j));
            std::swap(b[piv], b[col]);
        }
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a(r, col) / a(col, col);
            if (f == 0.0) continue;
            for (std::size_t j = col; j < n; ++j) a(r, j) -= f * a(col, j);
            b[r] -= f * b[col];
        }
    }
    x = Vector(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t j = i + 1; j < n; ++j) s -= a(i, j) * x[j];
        x[i] = s / a(i, i);
    }
    return true;
}

// Strong connectivity of the positive off-diagonal pattern of Q.
inline bool strongly_connected(const Matrix& q) {
    const std::size_t n = q.rows;
    auto reach = [&](bool reverse) {
        std::vector<bool> seen(n, false);
        std::vector<std::size_t> stack{0};
        seen[0] = true;
        std::size_t count = 1;
        while (!stack.empty()) {
            const std::size_t u = stack.back();
            stack.pop_back();
            for (std::size_t v = 0; v < n; ++v) {
                if (v == u || seen[v]) continue;
                const double w = reverse ? q(v, u) : q(u, v);
                if (w > 0.0) {
                    seen[v] = true;
                    ++count;
                    stack.push_back(v);
                }
            }
        }
        return count == n;
    };
    return reach(false) && reach(true);
}

}  // namespace detail

// Stationary probability vector of an irreducible CTMC generator Q:
// x Q = 0, x e = 1, x > 0. Solved through the normal equations of the
// augmented system [Q | e], which is an exact small-system least-squares
// solve: x (Q Qᵀ + e eᵀ) = eᵀ.
inline Vector stationary_vector(const Matrix& q) {
    if (!q.square()) throw StructuralError("stationary_vector: matrix not square");
    const std::size_t n = q.rows;
    const double scale = std::max(1.0, q.max_abs());
    for (std::size_t i = 0; i < n; ++i) {
        double row_sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            row_sum += q(i, j);
            if (i != j && q(i, j) < -kStructuralTol * scale)
                throw ValidationError("stationary_vector: negative off-diagonal at row " +
                                      std::to_string(i) + ", col " + std::to_string(j));
        }
        if (std::fabs(row_sum) > kStructuralTol * scale)
            throw ValidationError("stationary_vector: nonzero row sum at row " +
                                  std::to_string(i));
    }
    if (n > 1 && !detail::strongly_connected(q))
        throw StructuralError("stationary_vector: generator is reducible");

    // M = Q Qᵀ + e eᵀ, symmetric positive definite for irreducible generators.
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 1.0;  // e eᵀ contribution
            for (std::size_t k = 0; k < n; ++k) s += q(i, k) * q(j, k);
            m(i, j) = s;
        }
    Vector x;
    if (!detail::solve_inplace(m, Vector::ones(n), x))
        throw NumericError("stationary_vector: singular normal equations");

    const Vector resid = x * q;
    if (resid.max_abs() > kSolveTol * scale)
        throw NumericError("stationary_vector: residual beyond tolerance");
    if (std::fabs(x.sum() - 1.0) > kSolveTol * n)
        throw NumericError("stationary_vector: normalization beyond tolerance");
    for (std::size_t i = 0; i < n; ++i)
        if (x[i] <= 0.0)
            throw NumericError("stationary_vector: nonpositive entry at index " +
                               std::to_string(i));
    return x;
}

// (-T)^{-1} for a PH sub-generator T. The result is entrywise nonnegative.
inline Matrix neg_inverse(const Matrix& t) {
    if (!t.square()) throw StructuralError("neg_inverse: matrix not square");
    const std::size_t n = t.rows;
    const double scale = std::max(1.0, t.max_abs());
    for (std::size_t i = 0; i < n; ++i) {
        if (t(i, i) >= 0.0)
            throw ValidationError("neg_inverse: nonnegative diagonal at row " +
                                  std::to_string(i));
        double row_sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            row_sum += t(i, j);
            if (i != j && t(i, j) < -kStructuralTol * scale)
                throw ValidationError("neg_inverse: negative off-diagonal at row " +
                                      std::to_string(i));
        }
        if (row_sum > kStructuralTol * scale)
            throw ValidationError("neg_inverse: positive row sum at row " + std::to_string(i));
    }

    // Gauss-Jordan on (-T) with partial pivoting.
    Matrix a = -1.0 * t;
    Matrix inv = Matrix::identity(n);
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        double best = std::fabs(a(col, col));
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::fabs(a(r, col)) > best) {
                best = std::fabs(a(r, col));
                piv = r;
            }
        if (best == 0.0) throw NumericError("neg_inverse: singular matrix");
        if (piv != col)
            for (std::size_t j = 0; j < n; ++j) {
                std::swap(a(piv, j), a(col, j));
                std::swap(inv(piv, j), inv(col, j));
            }
        const double p = a(col, col);
        for (std::size_t j = 0; j < n; ++j) {
            a(col, j) /= p;
            inv(col, j) /= p;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a(r, col);
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) {
                a(r, j) -= f * a(col, j);
                inv(r, j) -= f * inv(col, j);
            }
        }
    }

    // Residual check: (-T) * inv = I.
    const Matrix check = (-1.0 * t) * inv;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double want = i == j ? 1.0 : 0.0;
            if (std::fabs(check(i, j) - want) > kSolveTol * scale)
                throw NumericError("neg_inverse: inversion residual beyond tolerance");
        }
    for (double x : inv.data)
        if (x < -kSolveTol * scale) throw NumericError("neg_inverse: negative entry in result");
    return inv;
}

}  // namespace supermarket
