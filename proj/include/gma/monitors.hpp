#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gma/calculus.hpp"
#include "gma/linalg.hpp"
#include "gma/operator.hpp"
#include "gma/solver.hpp"

namespace gma {

// The numerically observable quantities behind the a-priori estimates:
// sup|u|, K = sup|du|^2_g + 1, the largest eigenvalue of gtilde w.r.t. g,
// the Hessian/K ratio, the b-bound slack and the Aeppli defect.
struct EstimateReport {
    double sup_abs_u = 0.0;
    double grad_sup_sq = 0.0;
    double K = 1.0;
    double lambda1_max = 0.0;
    double hessian_sup = 0.0;
    double c2_ratio = 0.0;
    double b_bound_slack = 0.0;
    std::optional<double> aeppli_defect;
    double sup_F = 0.0;
};

inline constexpr double kHolomorphyTol = 1e-10;

// sup over i, j of sup|d_jbar a_i|; zero for holomorphic (on the torus,
// constant) forms.
inline double holomorphy_defect(const OneFormField& a) {
    double defect = 0.0;
    for (int i = 0; i < a.dimension(); ++i)
        for (int j = 0; j < a.dimension(); ++j) {
            ComplexScalarField d = complex_derivative(a.component(i), j, DerivativeKind::Antiholomorphic);
            defect = std::max(defect, sup_abs(d));
        }
    return defect;
}

// Sup-norm of (gtilde - g) - (d gamma_bar + dbar gamma) over all matrix
// entries, with gamma = -i (u a + du/2). Zero (to rounding) when a is
// holomorphic.
inline double aeppli_defect(const ProblemData& p, const ComplexScalarField& u) {
    u.require_real("aeppli_defect");
    double hol = holomorphy_defect(p.a);
    if (hol > kHolomorphyTol)
        throw std::invalid_argument("aeppli_defect: form a is not holomorphic (defect " +
                                    std::to_string(hol) + ")");
    const PeriodicGrid& grid = p.grid;
    const int n = grid.dimension();
    OperatorOutput op = assemble_gtilde(p, u);

    // gamma = gamma_a + gamma_u with gamma_a_i = -i u a_i and
    // gamma_u_i = -i u_i / 2. The gamma_u piece of d gamma_bar + dbar gamma is
    // (d_i u_jbar + d_jbar u_i)/2 = u_{i jbar}, evaluated through the library's
    // single discrete d_i d_jbar convention so the comparison is against the
    // same Hessian that enters gtilde.
    std::vector<ComplexScalarField> gamma_a;
    gamma_a.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        ComplexScalarField g_i(grid);
        for (std::size_t pt = 0; pt < grid.size(); ++pt)
            g_i[pt] = Complex(0.0, -1.0) * u[pt].real() * p.a.component(i)[pt];
        gamma_a.push_back(std::move(g_i));
    }
    HermitianMatrixField hess = complex_hessian(u);

    double defect = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            // coefficient of dz^i dzbar^j in (d gamma_bar + dbar gamma) is
            // d_i gamma_bar_jbar - d_jbar gamma_i; dividing by the sqrt(-1)
            // convention factor gives the Hermitian entry.
            ComplexScalarField d1 = complex_derivative(conj(gamma_a[static_cast<std::size_t>(j)]), i,
                                                       DerivativeKind::Holomorphic);
            ComplexScalarField d2 = complex_derivative(gamma_a[static_cast<std::size_t>(i)], j,
                                                       DerivativeKind::Antiholomorphic);
            for (std::size_t pt = 0; pt < grid.size(); ++pt) {
                Complex h_gamma = Complex(0.0, -1.0) * (d1[pt] - d2[pt]) + hess.at(pt, i, j);
                Complex diff = (op.gtilde.at(pt, i, j) - p.g.at(pt, i, j)) - h_gamma;
                defect = std::max(defect, std::abs(diff));
            }
        }
    }
    return defect;
}

inline EstimateReport estimate_report(const ProblemData& p, const Solution& sol) {
    const PeriodicGrid& grid = p.grid;
    const int n = grid.dimension();
    EstimateReport rep;

    rep.sup_abs_u = sup_abs(sol.u);
    rep.sup_F = sup_abs(p.F);
    rep.b_bound_slack = rep.sup_F - std::abs(sol.b);

    std::vector<ComplexScalarField> du;
    du.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) du.push_back(complex_derivative(sol.u, i, DerivativeKind::Holomorphic));
    HermitianMatrixField hess = complex_hessian(sol.u);
    OperatorOutput op = assemble_gtilde(p, sol.u);

    std::array<Complex, 9> ginv{}, gis{}, tmp{}, cmat{};
    double grad_max = 0.0, hess_max = 0.0, lambda1 = 0.0;
    for (std::size_t pt = 0; pt < grid.size(); ++pt) {
        herm_inverse(p.g.matrix(pt), n, ginv.data());
        // |du|^2_g = g^{i jbar} u_i u_jbar
        Complex grad2(0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                grad2 += ginv[static_cast<std::size_t>(j * n + i)] * du[static_cast<std::size_t>(i)][pt] *
                         std::conj(du[static_cast<std::size_t>(j)][pt]);
        grad_max = std::max(grad_max, grad2.real());

        herm_inv_sqrt(p.g.matrix(pt), n, gis.data());
        // |ddbar u|_g: Frobenius norm of g^{-1/2} Hess g^{-1/2}
        mat_mul(gis.data(), hess.matrix(pt), n, tmp.data());
        mat_mul(tmp.data(), gis.data(), n, cmat.data());
        double fro = 0.0;
        for (int e = 0; e < n * n; ++e) fro += std::norm(cmat[static_cast<std::size_t>(e)]);
        hess_max = std::max(hess_max, std::sqrt(fro));

        // largest eigenvalue of gtilde w.r.t. g
        mat_mul(gis.data(), op.gtilde.matrix(pt), n, tmp.data());
        mat_mul(tmp.data(), gis.data(), n, cmat.data());
        double ev[3];
        herm_eigenvalues(cmat.data(), n, ev);
        lambda1 = std::max(lambda1, ev[0]);
    }

    rep.grad_sup_sq = grad_max;
    rep.K = grad_max + 1.0;
    rep.hessian_sup = hess_max;
    rep.c2_ratio = hess_max / rep.K;
    rep.lambda1_max = lambda1;
    if (holomorphy_defect(p.a) <= kHolomorphyTol) rep.aeppli_defect = aeppli_defect(p, sol.u);
    return rep;
}

// Trigonometric interpolant of a Hermitian matrix field, for evaluating it
// (and its axis derivatives) off the grid.
class HermitianInterpolant {
  public:
    explicit HermitianInterpolant(const HermitianMatrixField& field)
        : grid_(field.grid()), n_(field.matrix_dim()) {
        spectra_.reserve(static_cast<std::size_t>(n_ * n_));
        std::vector<Complex> entry(grid_.size());
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j) {
                for (std::size_t pt = 0; pt < grid_.size(); ++pt) entry[pt] = field.at(pt, i, j);
                spectra_.push_back(fft_forward(grid_, entry));
            }
    }

    const PeriodicGrid& grid() const { return grid_; }
    int matrix_dim() const { return n_; }

    // Matrix at arbitrary coordinates, symmetrized against rounding.
    void evaluate(std::span<const double> xi, Complex* out) const {
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j)
                out[i * n_ + j] = evaluate_interpolant(grid_, spectra_[static_cast<std::size_t>(i * n_ + j)], xi);
        for (int i = 0; i < n_; ++i) {
            out[i * n_ + i] = Complex(out[i * n_ + i].real(), 0.0);
            for (int j = i + 1; j < n_; ++j) {
                Complex s = 0.5 * (out[i * n_ + j] + std::conj(out[j * n_ + i]));
                out[i * n_ + j] = s;
                out[j * n_ + i] = std::conj(s);
            }
        }
    }

    // Spectral derivative of the matrix along a real axis, at xi.
    void evaluate_derivative(std::span<const double> xi, int axis, Complex* out) const {
        const double two_pi = 2.0 * std::numbers::pi;
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j) {
                const Spectrum& spec = spectra_[static_cast<std::size_t>(i * n_ + j)];
                Complex v(0.0);
                for_each_mode(grid_, [&](std::size_t p, const int* bins) {
                    if (spec[p] == Complex(0.0)) return;
                    int m = signed_mode(bins[axis], grid_.res(axis));
                    if (2 * bins[axis] == grid_.res(axis)) m = 0;  // Nyquist, odd derivative
                    if (m == 0) return;
                    double arg = 0.0;
                    for (int a = 0; a < grid_.axes(); ++a)
                        arg += signed_mode(bins[a], grid_.res(a)) * xi[static_cast<std::size_t>(a)];
                    v += spec[p] * Complex(0.0, two_pi * m) * std::polar(1.0, two_pi * arg);
                });
                out[i * n_ + j] = v;
            }
    }

  private:
    PeriodicGrid grid_;
    int n_;
    std::vector<Spectrum> spectra_;
};

// First-order eigenvalue perturbation check: where the top eigenvalue is
// simple, its derivative along an axis equals V^H (d m) V for the unit top
// eigenvector V. measured_* are centered finite differences at steps h and
// h/2; their errors against the prediction should decay as O(h^2).
struct EigenDerivativeCheck {
    bool applicable = false;  // top eigenvalue simple at the point
    double gap = 0.0;
    double predicted = 0.0;
    double measured_h = 0.0;
    double measured_half = 0.0;
    double error_h = 0.0;
    double error_half = 0.0;
    double ratio = 0.0;  // error_h / error_half, ~4 for O(h^2)
};

inline EigenDerivativeCheck eigenvalue_derivative_check(const HermitianInterpolant& interp,
                                                        std::size_t point, int axis, double h = 0.01,
                                                        double gap_min = 1e-6) {
    const PeriodicGrid& grid = interp.grid();
    const int n = interp.matrix_dim();
    EigenDerivativeCheck chk;

    std::vector<double> xi = grid.coords(point);
    std::array<Complex, 9> m{}, dm{}, vec{};
    interp.evaluate(xi, m.data());
    double ev[3];
    herm_eigen(m.data(), n, ev, vec.data());
    chk.gap = (n == 1) ? std::numeric_limits<double>::infinity() : ev[0] - ev[1];
    if (chk.gap < gap_min) return chk;  // viscosity regime, skipped
    chk.applicable = true;

    interp.evaluate_derivative(xi, axis, dm.data());
    Complex pred(0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            pred += std::conj(vec[static_cast<std::size_t>(i * n)]) * dm[static_cast<std::size_t>(i * n + j)] *
                    vec[static_cast<std::size_t>(j * n)];
    chk.predicted = pred.real();

    auto lambda1_at = [&](double offset) {
        std::vector<double> x = xi;
        x[static_cast<std::size_t>(axis)] += offset;
        std::array<Complex, 9> mm{};
        interp.evaluate(x, mm.data());
        double e[3];
        herm_eigenvalues(mm.data(), n, e);
        return e[0];
    };
    chk.measured_h = (lambda1_at(h) - lambda1_at(-h)) / (2.0 * h);
    chk.measured_half = (lambda1_at(0.5 * h) - lambda1_at(-0.5 * h)) / h;
    chk.error_h = std::abs(chk.measured_h - chk.predicted);
    chk.error_half = std::abs(chk.measured_half - chk.predicted);
    chk.ratio = chk.error_half > 0.0 ? chk.error_h / chk.error_half
                                     : std::numeric_limits<double>::infinity();
    return chk;
}

inline EigenDerivativeCheck eigenvalue_derivative_check(const HermitianMatrixField& field, std::size_t point,
                                                        int axis, double h = 0.01, double gap_min = 1e-6) {
    return eigenvalue_derivative_check(HermitianInterpolant(field), point, axis, h, gap_min);
}

struct UniquenessTrial {
    bool converged = false;
    double u_distance = 0.0;
    double b_distance = 0.0;
    std::string note;
};

struct UniquenessReport {
    int trials = 0;
    int converged_trials = 0;
    double max_u_distance = 0.0;
    double max_b_distance = 0.0;
    double threshold = 0.0;  // 10 * newton_tol
    bool pass = false;
    std::vector<UniquenessTrial> detail;
};

// Re-solve with perturbed homotopy schedules and randomized admissible warm
// starts at t = 1; the solutions must coincide with the primary one. Trials
// are independent (per-trial seeds) and may run in parallel.
inline UniquenessReport uniqueness_probe(const ProblemData& p, const SolverConfig& cfg, int trials,
                                         std::uint64_t seed, const Solution* primary = nullptr,
                                         int threads = 1) {
    UniquenessReport rep;
    rep.trials = trials;
    rep.threshold = 10.0 * cfg.newton_tol;

    Solution base;
    if (primary == nullptr) {
        base = continuity_solve(p, cfg);
        primary = &base;
    }

    static constexpr int kSchedules[] = {3, 5, 7, 11, 13, 17, 19};
    auto run_trial = [&](int trial) {
        UniquenessTrial tr;
        std::mt19937_64 rng(seed + 0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(trial + 1));
        try {
            SolverConfig cfg_t = cfg;
            cfg_t.t_steps = kSchedules[static_cast<std::size_t>(trial) % std::size(kSchedules)];
            Solution sol = continuity_solve(p, cfg_t);

            // randomized admissible warm start at t = 1
            SolveState warm;
            warm.t = 1.0;
            warm.b = sol.b;
            warm.u = sol.u;
            warm.u -= mean(warm.u);
            double amp = 1e-3;
            for (int attempt = 0; attempt < 20; ++attempt) {
                TrigExpression noise = random_trig_expression(rng, p.grid.axes(), 1, 4, amp);
                ComplexScalarField u_try = warm.u;
                ComplexScalarField nf = sample_field(noise, p.grid);
                nf -= mean(nf);
                u_try += nf;
                if (assemble_gtilde(p, u_try).positive()) {
                    warm.u = std::move(u_try);
                    break;
                }
                amp *= 0.5;
            }
            NewtonOutcome fin = newton_solve_at_t(p, cfg, warm, 1.0);
            if (!fin.ok) {
                tr.note = "warm-start Newton failed: " + fin.message;
                return tr;
            }
            ComplexScalarField diff = normalize_sup(fin.state.u);
            diff -= primary->u;
            tr.u_distance = sup_abs(diff);
            tr.b_distance = std::abs(fin.state.b - primary->b);
            tr.converged = true;
        } catch (const SolverAbort& e) {
            tr.note = std::string("continuity re-solve aborted: ") + e.what();
        }
        return tr;
    };

    rep.detail.resize(static_cast<std::size_t>(trials));
    if (threads > 1) {
        std::vector<std::future<UniquenessTrial>> futures;
        futures.reserve(static_cast<std::size_t>(trials));
        for (int t = 0; t < trials; ++t)
            futures.push_back(std::async(std::launch::async, run_trial, t));
        for (int t = 0; t < trials; ++t) rep.detail[static_cast<std::size_t>(t)] = futures[static_cast<std::size_t>(t)].get();
    } else {
        for (int t = 0; t < trials; ++t) rep.detail[static_cast<std::size_t>(t)] = run_trial(t);
    }

    for (const UniquenessTrial& tr : rep.detail) {
        if (!tr.converged) continue;
        ++rep.converged_trials;
        rep.max_u_distance = std::max(rep.max_u_distance, tr.u_distance);
        rep.max_b_distance = std::max(rep.max_b_distance, tr.b_distance);
    }
    rep.pass = rep.converged_trials == rep.trials && rep.max_u_distance <= rep.threshold &&
               rep.max_b_distance <= rep.threshold;
    return rep;
}

}  // namespace gma
