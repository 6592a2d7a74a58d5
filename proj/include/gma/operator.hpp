#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "gma/calculus.hpp"
#include "gma/fields.hpp"
#include "gma/linalg.hpp"
#include "gma/trig.hpp"

namespace gma {

// The data (M, g), a, F of the equation on a fixed grid.
struct ProblemData {
    PeriodicGrid grid;
    HermitianMatrixField g;
    OneFormField a;
    ComplexScalarField F;
    ComplexScalarField log_det_g;  // pointwise log det g, precomputed
    double g_min_eig = 0.0;
};

inline ProblemData make_problem(const PeriodicGrid& grid, HermitianMatrixField g, OneFormField a,
                                ComplexScalarField F) {
    if (g.grid() != grid || a.grid() != grid || F.grid() != grid)
        throw std::invalid_argument("make_problem: grid mismatch");
    F.require_real("make_problem: F");
    g.check_hermitian();
    const int n = grid.dimension();
    ComplexScalarField log_det_g(grid, true);
    double min_eig = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < grid.size(); ++p) {
        min_eig = std::min(min_eig, herm_min_eigenvalue(g.matrix(p), n));
        log_det_g[p] = Complex(std::log(herm_det(g.matrix(p), n)), 0.0);
    }
    if (min_eig <= 0.0) throw std::invalid_argument("make_problem: reference metric g not positive definite");
    return ProblemData{grid, std::move(g), std::move(a), std::move(F), std::move(log_det_g), min_eig};
}

inline ProblemData make_flat_problem(const PeriodicGrid& grid, OneFormField a, ComplexScalarField F) {
    return make_problem(grid, HermitianMatrixField::identity(grid), std::move(a), std::move(F));
}

// The perturbed metric gtilde and the pieces Newton needs at a given state.
// inverse stores the plain matrix inverse of the entry matrix (G^{-1})_{ij};
// the tensor g̃^{i jbar} is its (j,i) entry. log_det_ratio and inverse are
// populated only when min_eig > 0; a non-positive gtilde is reported through
// min_eig so that line searches can observe near-degeneracy.
struct OperatorOutput {
    HermitianMatrixField gtilde;
    ComplexScalarField log_det_ratio;
    HermitianMatrixField gtilde_inverse;
    double min_eig = 0.0;
    std::vector<ComplexScalarField> du;  // holomorphic derivatives d_i u

    bool positive() const { return min_eig > 0.0; }
    void require_positive(const char* what) const {
        if (!positive()) throw std::invalid_argument(std::string(what) + ": gtilde not positive definite");
    }
};

// gtilde_{i jbar} = g_{i jbar} + a_i u_jbar + a_jbar u_i + u_{i jbar}.
inline OperatorOutput assemble_gtilde(const ProblemData& p, const ComplexScalarField& u) {
    u.require_real("assemble_gtilde");
    if (u.grid() != p.grid) throw std::invalid_argument("assemble_gtilde: grid mismatch");
    const PeriodicGrid& grid = p.grid;
    const int n = grid.dimension();

    OperatorOutput out;
    out.du.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out.du.push_back(complex_derivative(u, i, DerivativeKind::Holomorphic));
    HermitianMatrixField hess = complex_hessian(u);

    out.gtilde = HermitianMatrixField(grid);
    for (std::size_t pt = 0; pt < grid.size(); ++pt) {
        for (int i = 0; i < n; ++i) {
            for (int j = i; j < n; ++j) {
                Complex ai = p.a.component(i)[pt];
                Complex aj = p.a.component(j)[pt];
                Complex ui = out.du[static_cast<std::size_t>(i)][pt];
                Complex uj = out.du[static_cast<std::size_t>(j)][pt];
                Complex e = p.g.at(pt, i, j) + ai * std::conj(uj) + std::conj(aj) * ui + hess.at(pt, i, j);
                if (i == j) {
                    out.gtilde.at(pt, i, i) = Complex(e.real(), 0.0);
                } else {
                    out.gtilde.at(pt, i, j) = e;
                    out.gtilde.at(pt, j, i) = std::conj(e);
                }
            }
        }
    }

    out.min_eig = std::numeric_limits<double>::infinity();
    for (std::size_t pt = 0; pt < grid.size(); ++pt)
        out.min_eig = std::min(out.min_eig, herm_min_eigenvalue(out.gtilde.matrix(pt), n));

    if (out.min_eig > 0.0) {
        out.log_det_ratio = ComplexScalarField(grid, true);
        out.gtilde_inverse = HermitianMatrixField(grid);
        for (std::size_t pt = 0; pt < grid.size(); ++pt) {
            out.log_det_ratio[pt] =
                Complex(std::log(herm_det(out.gtilde.matrix(pt), n)) - p.log_det_g[pt].real(), 0.0);
            herm_inverse(out.gtilde.matrix(pt), n, out.gtilde_inverse.matrix(pt));
        }
    }
    return out;
}

// r = log det gtilde - log det g - tF - b. Zero exactly when (u, b) solves
// the t-family equation.
inline ComplexScalarField ma_residual(const ProblemData& p, const OperatorOutput& op, double b, double t) {
    op.require_positive("ma_residual");
    ComplexScalarField r(p.grid, true);
    for (std::size_t pt = 0; pt < p.grid.size(); ++pt)
        r[pt] = Complex(op.log_det_ratio[pt].real() - t * p.F[pt].real() - b, 0.0);
    return r;
}

inline ComplexScalarField ma_residual(const ProblemData& p, const ComplexScalarField& u, double b, double t) {
    OperatorOutput op = assemble_gtilde(p, u);
    if (!op.positive())
        throw std::runtime_error("ma_residual: gtilde not positive definite (min_eig = " +
                                 std::to_string(op.min_eig) + ")");
    return ma_residual(p, op, b, t);
}

// Lv = g̃^{i jbar} (v_{i jbar} + a_i v_jbar + a_jbar v_i), the linearization
// of u -> log det gtilde(u) at the state producing op.
inline ComplexScalarField linearized_apply(const OperatorOutput& op, const OneFormField& a,
                                           const ComplexScalarField& v) {
    op.require_positive("linearized_apply");
    v.require_real("linearized_apply");
    const PeriodicGrid& grid = v.grid();
    const int n = grid.dimension();

    std::vector<ComplexScalarField> dv;
    dv.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) dv.push_back(complex_derivative(v, i, DerivativeKind::Holomorphic));
    HermitianMatrixField hess = complex_hessian(v);

    ComplexScalarField out(grid, true);
    for (std::size_t pt = 0; pt < grid.size(); ++pt) {
        Complex s(0.0);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                Complex ginv_ij = op.gtilde_inverse.at(pt, j, i);  // g̃^{i jbar}
                Complex ai = a.component(i)[pt];
                Complex aj = a.component(j)[pt];
                s += ginv_ij * (hess.at(pt, i, j) + ai * std::conj(dv[static_cast<std::size_t>(j)][pt]) +
                                std::conj(aj) * dv[static_cast<std::size_t>(i)][pt]);
            }
        }
        out[pt] = Complex(s.real(), 0.0);
    }
    return out;
}

// Adjoint of L in the flat-volume inner product <f,h> = mean(f h):
// L*w = d_jbar d_i (g̃^{i jbar} w) - d_i (g̃^{i jbar} a_jbar w) - d_jbar (g̃^{i jbar} a_i w).
inline ComplexScalarField linearized_adjoint_apply(const OperatorOutput& op, const OneFormField& a,
                                                   const ComplexScalarField& w) {
    op.require_positive("linearized_adjoint_apply");
    w.require_real("linearized_adjoint_apply");
    const PeriodicGrid& grid = w.grid();
    const int n = grid.dimension();

    std::vector<Complex> acc(grid.size(), Complex(0.0));
    std::vector<Complex> prod(grid.size());
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            // s = g̃^{i jbar} w
            for (std::size_t pt = 0; pt < grid.size(); ++pt)
                prod[pt] = op.gtilde_inverse.at(pt, j, i) * w[pt].real();
            Spectrum spec = fft_forward(grid, prod);
            Spectrum work(spec.size());
            for_each_mode(grid, [&](std::size_t pt, const int* bins) {
                work[pt] = spec[pt] * second_derivative_symbol(grid, bins, i, j);
            });
            std::vector<Complex> vals = fft_inverse(grid, work);
            for (std::size_t pt = 0; pt < grid.size(); ++pt) acc[pt] += vals[pt];

            // -d_i (s a_jbar)
            for (std::size_t pt = 0; pt < grid.size(); ++pt)
                prod[pt] = op.gtilde_inverse.at(pt, j, i) * w[pt].real() * std::conj(a.component(j)[pt]);
            spec = fft_forward(grid, prod);
            apply_complex_derivative(grid, spec, i, DerivativeKind::Holomorphic);
            vals = fft_inverse(grid, spec);
            for (std::size_t pt = 0; pt < grid.size(); ++pt) acc[pt] -= vals[pt];

            // -d_jbar (s a_i)
            for (std::size_t pt = 0; pt < grid.size(); ++pt)
                prod[pt] = op.gtilde_inverse.at(pt, j, i) * w[pt].real() * a.component(i)[pt];
            spec = fft_forward(grid, prod);
            apply_complex_derivative(grid, spec, j, DerivativeKind::Antiholomorphic);
            vals = fft_inverse(grid, spec);
            for (std::size_t pt = 0; pt < grid.size(); ++pt) acc[pt] -= vals[pt];
        }
    }

    ComplexScalarField out(grid, true);
    for (std::size_t pt = 0; pt < grid.size(); ++pt) out[pt] = Complex(acc[pt].real(), 0.0);
    return out;
}

// tr_{g̃} m = g̃^{i jbar} m_{i jbar}, pointwise real scalar field.
inline ComplexScalarField trace_against_inverse(const OperatorOutput& op, const HermitianMatrixField& m) {
    op.require_positive("trace_against_inverse");
    const PeriodicGrid& grid = m.grid();
    const int n = grid.dimension();
    ComplexScalarField out(grid, true);
    for (std::size_t pt = 0; pt < grid.size(); ++pt) {
        Complex s(0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) s += op.gtilde_inverse.at(pt, j, i) * m.at(pt, i, j);
        out[pt] = Complex(s.real(), 0.0);
    }
    return out;
}

}  // namespace gma
