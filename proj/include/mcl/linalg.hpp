#pragma once

#include "mcl/error.hpp"
#include "mcl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace mcl {

/// Thin SVD: u is rows x r, s has r entries, vt is r x cols, with r = min(rows, cols).
struct SvdResult {
    Matrix u;
    std::vector<double> s;
    Matrix vt;
};

struct SymmetricEigen {
    std::vector<double> values;  // non-increasing
    Matrix vectors;              // eigenvectors stored as columns
};

namespace detail {

inline void require_finite(const Matrix& m) {
    for (double v : m.data())
        if (!std::isfinite(v)) throw Error(ErrorKind::numeric, "matrix contains non-finite entries");
}

// Flip column j of `cols` (and the matching row of `rows`, if given) so that the
// entry of largest magnitude is positive. Ties go to the lowest index.
inline void canonical_sign(Matrix& cols, std::size_t j, Matrix* rows) {
    std::size_t best = 0;
    double best_mag = -1.0;
    for (std::size_t i = 0; i < cols.rows(); ++i) {
        const double mag = std::abs(cols(i, j));
        if (mag > best_mag) {
            best_mag = mag;
            best = i;
        }
    }
    if (cols(best, j) < 0.0) {
        for (std::size_t i = 0; i < cols.rows(); ++i) cols(i, j) = -cols(i, j);
        if (rows)
            for (std::size_t c = 0; c < rows->cols(); ++c) (*rows)(j, c) = -(*rows)(j, c);
    }
}

// Replaces columns [from, n) of q with unit vectors orthogonal to every earlier column.
inline void complete_orthonormal_columns(Matrix& q, std::size_t from) {
    const std::size_t m = q.rows();
    std::size_t candidate = 0;
    for (std::size_t j = from; j < q.cols(); ++j) {
        for (;;) {
            if (candidate >= m) throw Error(ErrorKind::numeric, "cannot complete orthonormal basis");
            std::vector<double> v(m, 0.0);
            v[candidate++] = 1.0;
            for (int pass = 0; pass < 2; ++pass)
                for (std::size_t p = 0; p < j; ++p) {
                    double dot = 0.0;
                    for (std::size_t i = 0; i < m; ++i) dot += q(i, p) * v[i];
                    for (std::size_t i = 0; i < m; ++i) v[i] -= dot * q(i, p);
                }
            const double n = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
            if (n > 1e-6) {
                for (std::size_t i = 0; i < m; ++i) q(i, j) = v[i] / n;
                break;
            }
        }
    }
}

// One-sided Jacobi on a tall (rows >= cols) matrix.
inline SvdResult svd_tall(const Matrix& a) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    Matrix w = a;
    Matrix v = Matrix::identity(n);
    constexpr double tol = 1e-15;
    for (int sweep = 0; sweep < 100; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    alpha += w(i, p) * w(i, p);
                    beta += w(i, q) * w(i, q);
                    gamma += w(i, p) * w(i, q);
                }
                if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double wp = w(i, p), wq = w(i, q);
                    w(i, p) = c * wp - s * wq;
                    w(i, q) = s * wp + c * wq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = v(i, p), vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        if (!rotated) break;
    }

    std::vector<double> sv(n);
    for (std::size_t j = 0; j < n; ++j) {
        double ss = 0.0;
        for (std::size_t i = 0; i < m; ++i) ss += w(i, j) * w(i, j);
        sv[j] = std::sqrt(ss);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return sv[x] > sv[y]; });

    const double smax = n ? sv[order[0]] : 0.0;
    const double zero_tol = std::max(smax, 1.0) * 1e-13 * static_cast<double>(std::max(m, n));
    SvdResult r{Matrix(m, n), std::vector<double>(n), Matrix(n, n)};
    std::size_t nonzero = 0;
    for (std::size_t jj = 0; jj < n; ++jj) {
        const std::size_t j = order[jj];
        r.s[jj] = sv[j];
        if (sv[j] > zero_tol) {
            ++nonzero;
            for (std::size_t i = 0; i < m; ++i) r.u(i, jj) = w(i, j) / sv[j];
        }
        for (std::size_t i = 0; i < n; ++i) r.vt(jj, i) = v(i, j);
    }
    if (nonzero < n) complete_orthonormal_columns(r.u, nonzero);
    for (std::size_t j = 0; j < n; ++j) canonical_sign(r.u, j, &r.vt);
    return r;
}

}  // namespace detail

/// Singular value decomposition by one-sided Jacobi rotations. Singular values
/// are non-increasing; each left singular vector is signed so that its entry of
/// largest magnitude is positive.
inline SvdResult svd(const Matrix& a) {
    detail::require_finite(a);
    if (a.rows() >= a.cols()) return detail::svd_tall(a);
    // Wide case: A^T = V S U^T.
    SvdResult rt = detail::svd_tall(a.transpose());
    SvdResult r{rt.vt.transpose(), rt.s, rt.u.transpose()};
    for (std::size_t j = 0; j < r.s.size(); ++j) detail::canonical_sign(r.u, j, &r.vt);
    return r;
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
inline SymmetricEigen symmetric_eigen(const Matrix& sym) {
    detail::require_finite(sym);
    if (sym.rows() != sym.cols()) throw Error(ErrorKind::shape, "eigendecomposition needs a square matrix");
    const std::size_t n = sym.rows();
    Matrix a = sym;
    Matrix v = Matrix::identity(n);
    double total = 0.0;
    for (double x : a.data()) total += x * x;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += 2.0 * a(p, q) * a(p, q);
        if (off <= 1e-24 * total || off == 0.0) break;
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return a(x, x) > a(y, y); });
    SymmetricEigen e{std::vector<double>(n), Matrix(n, n)};
    for (std::size_t jj = 0; jj < n; ++jj) {
        e.values[jj] = a(order[jj], order[jj]);
        for (std::size_t k = 0; k < n; ++k) e.vectors(k, jj) = v(k, order[jj]);
        detail::canonical_sign(e.vectors, jj, nullptr);
    }
    return e;
}

}  // namespace mcl
