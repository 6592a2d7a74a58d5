#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>

#include "gma/fields.hpp"

namespace gma {

// Pointwise linear algebra for the tiny Hermitian matrices (n <= 3) that make
// up the metric fields. Matrices are row-major n x n, entry (i,j) = m[i*n+j].

inline constexpr double kJacobiOffDiagTol = 1e-13;

inline double herm_det(const Complex* m, int n) {
    switch (n) {
        case 1:
            return m[0].real();
        case 2:
            return m[0].real() * m[3].real() - std::norm(m[1]);
        case 3: {
            Complex d = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
                        m[2] * (m[3] * m[7] - m[4] * m[6]);
            return d.real();
        }
        default:
            throw std::invalid_argument("herm_det: n must be 1..3");
    }
}

// Inverse via the adjugate; out may not alias m.
inline void herm_inverse(const Complex* m, int n, Complex* out) {
    double det = herm_det(m, n);
    if (det == 0.0) throw std::invalid_argument("herm_inverse: singular matrix");
    switch (n) {
        case 1:
            out[0] = Complex(1.0 / det, 0.0);
            return;
        case 2:
            out[0] = m[3] / det;
            out[1] = -m[1] / det;
            out[2] = -m[2] / det;
            out[3] = m[0] / det;
            return;
        case 3:
            out[0] = (m[4] * m[8] - m[5] * m[7]) / det;
            out[1] = (m[2] * m[7] - m[1] * m[8]) / det;
            out[2] = (m[1] * m[5] - m[2] * m[4]) / det;
            out[3] = (m[5] * m[6] - m[3] * m[8]) / det;
            out[4] = (m[0] * m[8] - m[2] * m[6]) / det;
            out[5] = (m[2] * m[3] - m[0] * m[5]) / det;
            out[6] = (m[3] * m[7] - m[4] * m[6]) / det;
            out[7] = (m[1] * m[6] - m[0] * m[7]) / det;
            out[8] = (m[0] * m[4] - m[1] * m[3]) / det;
            return;
        default:
            throw std::invalid_argument("herm_inverse: n must be 1..3");
    }
}

namespace linalg_detail {

// A <- U^H A U and V <- V U restricted to the (p,q) plane, where U embeds the
// unitary 2x2 with columns (c0p, c1p) and (c0q, c1q).
inline void apply_plane_rotation(Complex* a, Complex* v, int n, int p, int q, Complex upp, Complex uqp,
                                 Complex upq, Complex uqq) {
    for (int i = 0; i < n; ++i) {  // A <- A U
        Complex aip = a[i * n + p], aiq = a[i * n + q];
        a[i * n + p] = aip * upp + aiq * uqp;
        a[i * n + q] = aip * upq + aiq * uqq;
    }
    for (int j = 0; j < n; ++j) {  // A <- U^H A
        Complex apj = a[p * n + j], aqj = a[q * n + j];
        a[p * n + j] = std::conj(upp) * apj + std::conj(uqp) * aqj;
        a[q * n + j] = std::conj(upq) * apj + std::conj(uqq) * aqj;
    }
    if (v != nullptr) {
        for (int i = 0; i < n; ++i) {
            Complex vip = v[i * n + p], viq = v[i * n + q];
            v[i * n + p] = vip * upp + viq * uqp;
            v[i * n + q] = vip * upq + viq * uqq;
        }
    }
}

}  // namespace linalg_detail

// Cyclic Jacobi eigen-decomposition of a Hermitian matrix. Eigenvalues are
// returned in descending order; if vectors != nullptr it receives the unit
// eigenvectors as columns (vectors[i*n+k] = component i of eigenvector k).
inline void herm_eigen(const Complex* m, int n, double* eigenvalues, Complex* vectors = nullptr) {
    std::array<Complex, 9> a{};
    std::array<Complex, 9> v{};
    for (int i = 0; i < n * n; ++i) a[static_cast<std::size_t>(i)] = m[i];
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i * n + i)] = Complex(1.0);

    double scale = 0.0;
    for (int i = 0; i < n * n; ++i) scale = std::max(scale, std::abs(a[static_cast<std::size_t>(i)]));
    if (scale > 0.0) {
        for (int sweep = 0; sweep < 60; ++sweep) {
            double off = 0.0;
            for (int p = 0; p < n; ++p)
                for (int q = p + 1; q < n; ++q) off = std::max(off, std::abs(a[static_cast<std::size_t>(p * n + q)]));
            if (off <= kJacobiOffDiagTol * scale) break;
            for (int p = 0; p < n; ++p) {
                for (int q = p + 1; q < n; ++q) {
                    Complex apq = a[static_cast<std::size_t>(p * n + q)];
                    if (std::abs(apq) <= kJacobiOffDiagTol * scale * 1e-2) continue;
                    double app = a[static_cast<std::size_t>(p * n + p)].real();
                    double aqq = a[static_cast<std::size_t>(q * n + q)].real();
                    double d = 0.5 * (app - aqq);
                    double rad = std::hypot(d, std::abs(apq));
                    // Eigenvectors of the 2x2 block [[app, apq],[conj(apq), aqq]]
                    // as (apq, lambda - app). Cancellation-free forms of
                    // lambda - app, using (hi - app)(lo - app) = -|apq|^2.
                    double hi_shift = (d > 0.0) ? std::norm(apq) / (rad + d) : rad - d;
                    double lo_shift = (d < 0.0) ? -std::norm(apq) / (rad - d) : -(rad + d);
                    auto column = [&](double shift, Complex& cp, Complex& cq) {
                        double nrm = std::sqrt(std::norm(apq) + shift * shift);
                        cp = apq / nrm;
                        cq = Complex(shift / nrm, 0.0);
                    };
                    Complex upp, uqp, upq, uqq;
                    column(hi_shift, upp, uqp);
                    column(lo_shift, upq, uqq);
                    linalg_detail::apply_plane_rotation(a.data(), v.data(), n, p, q, upp, uqp, upq, uqq);
                }
            }
        }
    }

    std::array<int, 3> order{0, 1, 2};
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (a[static_cast<std::size_t>(order[static_cast<std::size_t>(j)] * n +
                                           order[static_cast<std::size_t>(j)])]
                    .real() > a[static_cast<std::size_t>(order[static_cast<std::size_t>(i)] * n +
                                                         order[static_cast<std::size_t>(i)])]
                                  .real())
                std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    for (int k = 0; k < n; ++k) {
        int c = order[static_cast<std::size_t>(k)];
        eigenvalues[k] = a[static_cast<std::size_t>(c * n + c)].real();
        if (vectors != nullptr)
            for (int i = 0; i < n; ++i) vectors[i * n + k] = v[static_cast<std::size_t>(i * n + c)];
    }
}

// Eigenvalues only, descending. Closed forms for n <= 2, Jacobi for n = 3.
inline void herm_eigenvalues(const Complex* m, int n, double* eigenvalues) {
    switch (n) {
        case 1:
            eigenvalues[0] = m[0].real();
            return;
        case 2: {
            double mid = 0.5 * (m[0].real() + m[3].real());
            double rad = std::hypot(0.5 * (m[0].real() - m[3].real()), std::abs(m[1]));
            eigenvalues[0] = mid + rad;
            eigenvalues[1] = mid - rad;
            return;
        }
        case 3:
            herm_eigen(m, n, eigenvalues);
            return;
        default:
            throw std::invalid_argument("herm_eigenvalues: n must be 1..3");
    }
}

inline double herm_min_eigenvalue(const Complex* m, int n) {
    double ev[3];
    herm_eigenvalues(m, n, ev);
    return ev[n - 1];
}

// g^{-1/2} of a positive definite Hermitian matrix.
inline void herm_inv_sqrt(const Complex* g, int n, Complex* out) {
    double ev[3];
    std::array<Complex, 9> vec{};
    herm_eigen(g, n, ev, vec.data());
    for (int i = 0; i < n; ++i)
        if (ev[i] <= 0.0) throw std::invalid_argument("herm_inv_sqrt: matrix not positive definite");
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            Complex s(0.0);
            for (int k = 0; k < n; ++k)
                s += vec[static_cast<std::size_t>(i * n + k)] * std::conj(vec[static_cast<std::size_t>(j * n + k)]) /
                     std::sqrt(ev[k]);
            out[i * n + j] = s;
        }
}

// out = a * b for n x n complex matrices; out may not alias inputs.
inline void mat_mul(const Complex* a, const Complex* b, int n, Complex* out) {
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            Complex s(0.0);
            for (int k = 0; k < n; ++k) s += a[i * n + k] * b[k * n + j];
            out[i * n + j] = s;
        }
}

}  // namespace gma
