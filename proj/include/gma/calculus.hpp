#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "gma/fft.hpp"
#include "gma/fields.hpp"
#include "gma/grid.hpp"

namespace gma {

using Spectrum = std::vector<Complex>;

enum class DerivativeKind { Holomorphic, Antiholomorphic };

// Visit every DFT bin; bins[] holds per-axis bin indices, axis 0 fastest.
template <typename Fn>
inline void for_each_mode(const PeriodicGrid& grid, Fn&& fn) {
    const int axes = grid.axes();
    std::vector<int> bins(static_cast<std::size_t>(axes), 0);
    for (std::size_t p = 0; p < grid.size(); ++p) {
        fn(p, bins.data());
        for (int a = 0; a < axes; ++a) {
            if (++bins[static_cast<std::size_t>(a)] < grid.res(a)) break;
            bins[static_cast<std::size_t>(a)] = 0;
        }
    }
}

inline Spectrum spectrum_of(const ComplexScalarField& f) { return fft_forward(f.grid(), f.values()); }

inline ComplexScalarField field_from_spectrum(const PeriodicGrid& grid, const Spectrum& spec) {
    return ComplexScalarField(grid, fft_inverse(grid, spec), false);
}

// Fourier multiplier of d_i (holomorphic) or d_ibar on complex axis i:
// d_i = (d_x - i d_y)/2, d_ibar = (d_x + i d_y)/2. The Nyquist bin of an odd
// derivative is zeroed.
inline Complex complex_derivative_symbol(const PeriodicGrid& grid, const int* bins, int i,
                                         DerivativeKind kind) {
    const int ax = 2 * i, ay = 2 * i + 1;
    const int bx = bins[ax], by = bins[ay];
    const double mx = (2 * bx == grid.res(ax)) ? 0.0 : signed_mode(bx, grid.res(ax));
    const double my = (2 * by == grid.res(ay)) ? 0.0 : signed_mode(by, grid.res(ay));
    const double pi = std::numbers::pi;
    return kind == DerivativeKind::Holomorphic ? Complex(pi * my, pi * mx) : Complex(-pi * my, pi * mx);
}

// Fourier multiplier of d_i d_jbar. Off the diagonal this is the product of
// the two first-order symbols (each odd derivative drops its Nyquist bins);
// the diagonal d_i d_ibar = (d_x^2 + d_y^2)/4 is a pure even derivative and
// keeps them, so that no nonconstant mode is annihilated.
inline Complex second_derivative_symbol(const PeriodicGrid& grid, const int* bins, int i, int j) {
    if (i != j)
        return complex_derivative_symbol(grid, bins, i, DerivativeKind::Holomorphic) *
               complex_derivative_symbol(grid, bins, j, DerivativeKind::Antiholomorphic);
    const int ax = 2 * i, ay = 2 * i + 1;
    const double mx = signed_mode(bins[ax], grid.res(ax));
    const double my = signed_mode(bins[ay], grid.res(ay));
    const double pi = std::numbers::pi;
    return Complex(-pi * pi * (mx * mx + my * my), 0.0);
}

inline void apply_complex_derivative(const PeriodicGrid& grid, Spectrum& spec, int i, DerivativeKind kind) {
    for_each_mode(grid, [&](std::size_t p, const int* bins) {
        spec[p] *= complex_derivative_symbol(grid, bins, i, kind);
    });
}

// d_i f or d_ibar f by exact spectral differentiation; index is 0-based.
inline ComplexScalarField complex_derivative(const ComplexScalarField& f, int index, DerivativeKind kind) {
    if (index < 0 || index >= f.grid().dimension())
        throw std::invalid_argument("complex_derivative: index out of range");
    Spectrum spec = spectrum_of(f);
    apply_complex_derivative(f.grid(), spec, index, kind);
    return field_from_spectrum(f.grid(), spec);
}

// Complex Hessian u_{i jbar} of a real potential. Hermitian by construction:
// entry (j,i) is the conjugate of entry (i,j).
inline HermitianMatrixField complex_hessian(const ComplexScalarField& u) {
    u.require_real("complex_hessian");
    const PeriodicGrid& grid = u.grid();
    const int n = grid.dimension();
    HermitianMatrixField h(grid);
    Spectrum base = spectrum_of(u);
    Spectrum work(base.size());
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            for_each_mode(grid, [&](std::size_t p, const int* bins) {
                work[p] = base[p] * second_derivative_symbol(grid, bins, i, j);
            });
            std::vector<Complex> vals = fft_inverse(grid, work);
            for (std::size_t p = 0; p < grid.size(); ++p) {
                h.at(p, i, j) = vals[p];
                if (j != i) h.at(p, j, i) = std::conj(vals[p]);
                else h.at(p, i, i) = Complex(vals[p].real(), 0.0);  // real for real u
            }
        }
    }
    return h;
}

enum class ReduceMode { Mean, Sup, SupAbs, Min };

inline double reduce(const ComplexScalarField& f, ReduceMode mode) {
    if (mode != ReduceMode::Mean && mode != ReduceMode::SupAbs) f.require_real("reduce sup/min");
    switch (mode) {
        case ReduceMode::Mean: {
            // Kahan summation; the flat torus has unit volume so the mean is the integral.
            double sum = 0.0, comp = 0.0;
            for (const Complex& v : f.values()) {
                double y = v.real() - comp;
                double t = sum + y;
                comp = (t - sum) - y;
                sum = t;
            }
            return sum / static_cast<double>(f.size());
        }
        case ReduceMode::Sup: {
            double m = f[0].real();
            for (const Complex& v : f.values()) m = std::max(m, v.real());
            return m;
        }
        case ReduceMode::SupAbs:
            return f.max_abs();
        case ReduceMode::Min: {
            double m = f[0].real();
            for (const Complex& v : f.values()) m = std::min(m, v.real());
            return m;
        }
    }
    throw std::logic_error("reduce: unknown mode");
}

inline double mean(const ComplexScalarField& f) { return reduce(f, ReduceMode::Mean); }
inline double sup(const ComplexScalarField& f) { return reduce(f, ReduceMode::Sup); }
inline double sup_abs(const ComplexScalarField& f) { return reduce(f, ReduceMode::SupAbs); }

// L2 inner product against the flat volume form, <f,h> = mean(f*h).
inline double inner_product(const ComplexScalarField& f, const ComplexScalarField& h) {
    f.require_same_grid(h);
    double sum = 0.0, comp = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        double y = f[i].real() * h[i].real() - comp;
        double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    return sum / static_cast<double>(f.size());
}

// Opt-in 2/3-rule truncation: zero every mode with |k_a| > res_a/3 on some axis.
inline ComplexScalarField dealias_two_thirds(const ComplexScalarField& f) {
    const PeriodicGrid& grid = f.grid();
    Spectrum spec = spectrum_of(f);
    for_each_mode(grid, [&](std::size_t p, const int* bins) {
        for (int a = 0; a < grid.axes(); ++a) {
            if (3 * std::abs(signed_mode(bins[a], grid.res(a))) > grid.res(a)) {
                spec[p] = Complex(0.0);
                break;
            }
        }
    });
    ComplexScalarField out = field_from_spectrum(grid, spec);
    if (f.is_real()) out.flag_real();
    return out;
}

// Evaluate the trigonometric interpolant of resolved data at an arbitrary
// point of the torus.
inline Complex evaluate_interpolant(const PeriodicGrid& grid, const Spectrum& spec,
                                    std::span<const double> xi) {
    Complex v(0.0);
    const double two_pi = 2.0 * std::numbers::pi;
    for_each_mode(grid, [&](std::size_t p, const int* bins) {
        if (spec[p] == Complex(0.0)) return;
        double arg = 0.0;
        for (int a = 0; a < grid.axes(); ++a)
            arg += signed_mode(bins[a], grid.res(a)) * xi[static_cast<std::size_t>(a)];
        v += spec[p] * std::polar(1.0, two_pi * arg);
    });
    return v;
}

}  // namespace gma
