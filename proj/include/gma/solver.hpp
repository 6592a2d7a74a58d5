#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gma/calculus.hpp"
#include "gma/operator.hpp"

namespace gma {

struct SolverConfig {
    int t_steps = 8;             // initial number of homotopy steps
    double newton_tol = 1e-11;   // residual sup-norm tolerance
    int max_newton = 40;         // per-t iteration cap
    double krylov_tol = 1e-12;   // linear solve relative residual
    int krylov_max = 600;        // linear iteration cap
    int krylov_restart = 60;     // GMRES restart length
    double eig_floor = 0.1;      // accepted steps keep this fraction of the positivity margin
    double damping_min = 1.0 / 1024.0;
    bool dealias = false;        // opt-in 2/3-rule truncation of the Newton residual
    bool secant_extrapolation = false;

    void validate() const {
        if (t_steps < 1 || newton_tol <= 0 || krylov_tol <= 0 || max_newton < 1 || krylov_max < 1 ||
            eig_floor <= 0 || damping_min <= 0 || damping_min > 1.0)
            throw std::invalid_argument("SolverConfig: invalid parameter");
    }
};

// One accepted state (u_t, b_t) along the continuity path. u is kept
// mean-zero during iteration; sup-normalization happens once at the end.
struct SolveState {
    double t = 0.0;
    ComplexScalarField u;
    double b = 0.0;
    double residual_norm = 0.0;
    double min_eig = 0.0;
    int newton_iters = 0;
};

struct TraceRecord {
    double t = 0.0;
    int newton_iter = 0;
    double residual_sup = 0.0;
    double min_eig = 0.0;
    double b = 0.0;
};

inline std::string format_trace(const std::vector<TraceRecord>& trace) {
    std::ostringstream os;
    os.precision(17);
    for (const TraceRecord& r : trace)
        os << r.t << ' ' << r.newton_iter << ' ' << r.residual_sup << ' ' << r.min_eig << ' ' << r.b << '\n';
    return os.str();
}

struct Solution {
    ComplexScalarField u;  // sup-normalized
    double b = 0.0;
    double final_residual = 0.0;
    double min_eig = 0.0;
    std::vector<SolveState> path;
    std::vector<TraceRecord> trace;
};

// Thrown when the homotopy step underflows; carries the last good state.
class SolverAbort : public std::runtime_error {
  public:
    SolverAbort(std::string why, SolveState last_good, std::vector<TraceRecord> trace)
        : std::runtime_error(std::move(why)), last_good_(std::move(last_good)), trace_(std::move(trace)) {}
    const SolveState& last_good() const { return last_good_; }
    const std::vector<TraceRecord>& trace() const { return trace_; }

  private:
    SolveState last_good_;
    std::vector<TraceRecord> trace_;
};

namespace solver_detail {

using RealVec = std::vector<double>;
using LinearOp = std::function<void(const RealVec&, RealVec&)>;

inline double dot(const RealVec& a, const RealVec& b) {
    double s = 0.0, c = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double y = a[i] * b[i] - c;
        double t = s + y;
        c = (t - s) - y;
        s = t;
    }
    return s;
}
inline double norm2(const RealVec& a) { return std::sqrt(dot(a, a)); }

inline double vec_mean(const RealVec& a) {
    double s = 0.0, c = 0.0;
    for (double v : a) {
        double y = v - c;
        double t = s + y;
        c = (t - s) - y;
        s = t;
    }
    return s / static_cast<double>(a.size());
}

struct GmresResult {
    bool converged = false;
    int iterations = 0;
    double relative_residual = 0.0;
};

// Left-preconditioned restarted GMRES. op and precond write into their
// second argument.
inline GmresResult gmres(const LinearOp& op, const LinearOp& precond, const RealVec& rhs, RealVec& x,
                         double tol, int max_iter, int restart) {
    const std::size_t N = rhs.size();
    x.assign(N, 0.0);
    RealVec mb(N), r(N), w(N), tmp(N);
    precond(rhs, mb);
    const double bnorm = norm2(mb);
    GmresResult res;
    if (bnorm == 0.0) {
        res.converged = true;
        return res;
    }

    int total = 0;
    while (total < max_iter) {
        // r = M^{-1}(rhs - A x)
        op(x, tmp);
        for (std::size_t i = 0; i < N; ++i) tmp[i] = rhs[i] - tmp[i];
        precond(tmp, r);
        double beta = norm2(r);
        res.relative_residual = beta / bnorm;
        if (res.relative_residual <= tol) {
            res.converged = true;
            res.iterations = total;
            return res;
        }

        const int m = std::min(restart, max_iter - total);
        std::vector<RealVec> V;
        V.reserve(static_cast<std::size_t>(m) + 1);
        std::vector<std::vector<double>> H(static_cast<std::size_t>(m) + 1,
                                           std::vector<double>(static_cast<std::size_t>(m), 0.0));
        std::vector<double> cs(static_cast<std::size_t>(m), 0.0), sn(static_cast<std::size_t>(m), 0.0),
            gamma(static_cast<std::size_t>(m) + 1, 0.0);
        V.push_back(r);
        for (double& v : V[0]) v /= beta;
        gamma[0] = beta;

        int k = 0;
        for (; k < m; ++k) {
            op(V[static_cast<std::size_t>(k)], tmp);
            precond(tmp, w);
            // modified Gram-Schmidt
            for (int i = 0; i <= k; ++i) {
                double h = dot(w, V[static_cast<std::size_t>(i)]);
                H[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = h;
                for (std::size_t j = 0; j < N; ++j) w[j] -= h * V[static_cast<std::size_t>(i)][j];
            }
            double h = norm2(w);
            H[static_cast<std::size_t>(k) + 1][static_cast<std::size_t>(k)] = h;
            // apply stored Givens rotations
            for (int i = 0; i < k; ++i) {
                double t = cs[static_cast<std::size_t>(i)] * H[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] +
                           sn[static_cast<std::size_t>(i)] * H[static_cast<std::size_t>(i) + 1][static_cast<std::size_t>(k)];
                H[static_cast<std::size_t>(i) + 1][static_cast<std::size_t>(k)] =
                    -sn[static_cast<std::size_t>(i)] * H[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] +
                    cs[static_cast<std::size_t>(i)] * H[static_cast<std::size_t>(i) + 1][static_cast<std::size_t>(k)];
                H[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = t;
            }
            double denom = std::hypot(H[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)], h);
            cs[static_cast<std::size_t>(k)] = H[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)] / denom;
            sn[static_cast<std::size_t>(k)] = h / denom;
            H[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)] = denom;
            gamma[static_cast<std::size_t>(k) + 1] = -sn[static_cast<std::size_t>(k)] * gamma[static_cast<std::size_t>(k)];
            gamma[static_cast<std::size_t>(k)] = cs[static_cast<std::size_t>(k)] * gamma[static_cast<std::size_t>(k)];
            ++total;
            res.relative_residual = std::abs(gamma[static_cast<std::size_t>(k) + 1]) / bnorm;
            if (h > 0.0) {
                V.push_back(w);
                for (double& v : V.back()) v /= h;
            }
            if (res.relative_residual <= tol || h == 0.0) {
                ++k;
                break;
            }
        }

        // back substitution and update
        std::vector<double> y(static_cast<std::size_t>(k), 0.0);
        for (int i = k - 1; i >= 0; --i) {
            double s = gamma[static_cast<std::size_t>(i)];
            for (int j = i + 1; j < k; ++j)
                s -= H[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] * y[static_cast<std::size_t>(j)];
            y[static_cast<std::size_t>(i)] = s / H[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)];
        }
        for (int i = 0; i < k; ++i)
            for (std::size_t j = 0; j < N; ++j) x[j] += y[static_cast<std::size_t>(i)] * V[static_cast<std::size_t>(i)][j];

        if (res.relative_residual <= tol) {
            res.converged = true;
            res.iterations = total;
            return res;
        }
    }
    res.iterations = total;
    return res;
}

// Inverse of the constant-coefficient Laplacian, diagonal in Fourier space;
// the zero mode is scaled by `zero_mode_sign` (the border direction).
inline LinearOp laplacian_preconditioner(const PeriodicGrid& grid, double zero_mode_sign) {
    // precompute the symbol once per grid
    auto symbol = std::make_shared<std::vector<double>>(grid.size());
    const double pi2 = std::numbers::pi * std::numbers::pi;
    for_each_mode(grid, [&](std::size_t p, const int* bins) {
        double k2 = 0.0;
        for (int a = 0; a < grid.axes(); ++a) {
            double m = signed_mode(bins[a], grid.res(a));
            k2 += m * m;
        }
        (*symbol)[p] = k2;
    });
    return [grid, symbol, pi2, zero_mode_sign](const RealVec& in, RealVec& out) {
        std::vector<Complex> buf(in.size());
        for (std::size_t i = 0; i < in.size(); ++i) buf[i] = Complex(in[i], 0.0);
        Spectrum spec = fft_forward(grid, buf);
        for (std::size_t p = 0; p < spec.size(); ++p) {
            double s = (*symbol)[p];
            spec[p] = (s == 0.0) ? spec[p] * zero_mode_sign : spec[p] / (-pi2 * s);
        }
        std::vector<Complex> vals = fft_inverse(grid, spec);
        out.resize(in.size());
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = vals[i].real();
    };
}

inline ComplexScalarField field_from(const PeriodicGrid& grid, const RealVec& v) {
    std::vector<Complex> c(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) c[i] = Complex(v[i], 0.0);
    return ComplexScalarField(grid, std::move(c), true);
}

}  // namespace solver_detail

struct KrylovResult {
    ComplexScalarField du;  // mean-zero
    double db = 0.0;
    bool converged = false;
    double relative_residual = 0.0;
    int iterations = 0;
};

// Solve the bordered system L du - db = rhs with mean(du) = 0. The unknown
// vector packs db into the mean component: x = du + db * 1.
inline KrylovResult krylov_solve(const OperatorOutput& op, const OneFormField& a,
                                 const ComplexScalarField& rhs, const SolverConfig& cfg) {
    op.require_positive("krylov_solve");
    rhs.require_real("krylov_solve");
    const PeriodicGrid& grid = rhs.grid();
    const std::size_t N = grid.size();

    solver_detail::LinearOp apply = [&](const solver_detail::RealVec& x, solver_detail::RealVec& y) {
        double db = solver_detail::vec_mean(x);
        solver_detail::RealVec du(N);
        for (std::size_t i = 0; i < N; ++i) du[i] = x[i] - db;
        ComplexScalarField lv = linearized_apply(op, a, solver_detail::field_from(grid, du));
        y.resize(N);
        for (std::size_t i = 0; i < N; ++i) y[i] = lv[i].real() - db;
    };
    solver_detail::LinearOp precond = solver_detail::laplacian_preconditioner(grid, -1.0);

    solver_detail::RealVec b(N), x;
    for (std::size_t i = 0; i < N; ++i) b[i] = rhs[i].real();
    solver_detail::GmresResult g =
        solver_detail::gmres(apply, precond, b, x, cfg.krylov_tol, cfg.krylov_max, cfg.krylov_restart);

    KrylovResult out;
    out.db = solver_detail::vec_mean(x);
    solver_detail::RealVec du(N);
    for (std::size_t i = 0; i < N; ++i) du[i] = x[i] - out.db;
    out.du = solver_detail::field_from(grid, du);
    out.converged = g.converged;
    out.relative_residual = g.relative_residual;
    out.iterations = g.iterations;
    return out;
}

struct NewtonOutcome {
    bool ok = false;
    SolveState state;
    std::string message;
};

// Damped Newton on the bordered unknown (u, b) at fixed homotopy parameter t.
// Backtracking halves the step until the positivity margin keeps at least
// eig_floor of its value and the residual decreases.
inline NewtonOutcome newton_solve_at_t(const ProblemData& p, const SolverConfig& cfg, const SolveState& warm,
                                       double t, std::vector<TraceRecord>* trace = nullptr) {
    cfg.validate();
    NewtonOutcome out;

    ComplexScalarField u = warm.u;
    u -= mean(u);  // mean-zero gauge
    double b = warm.b;

    OperatorOutput op = assemble_gtilde(p, u);
    if (!op.positive()) {
        out.message = "warm start not admissible (min_eig = " + std::to_string(op.min_eig) + ")";
        return out;
    }
    auto residual_of = [&](const OperatorOutput& o) {
        ComplexScalarField r = ma_residual(p, o, b, t);
        return cfg.dealias ? dealias_two_thirds(r) : r;
    };
    ComplexScalarField r = residual_of(op);
    double rn = sup_abs(r);
    int iters = 0;
    if (trace) trace->push_back({t, 0, rn, op.min_eig, b});

    while (rn > cfg.newton_tol) {
        if (iters >= cfg.max_newton) {
            out.message = "Newton iteration cap hit (residual " + std::to_string(rn) + ")";
            return out;
        }
        ComplexScalarField neg_r = r;
        neg_r *= -1.0;
        KrylovResult lin = krylov_solve(op, p.a, neg_r, cfg);
        if (!lin.converged) {
            out.message = "linear solve stalled (relative residual " +
                          std::to_string(lin.relative_residual) + ")";
            return out;
        }

        double lambda = 1.0;
        bool accepted = false;
        while (lambda >= cfg.damping_min) {
            ComplexScalarField u_try = u;
            {
                ComplexScalarField step = lin.du;
                step *= lambda;
                u_try += step;
            }
            double b_try = b + lambda * lin.db;
            OperatorOutput op_try = assemble_gtilde(p, u_try);
            if (op_try.min_eig >= cfg.eig_floor * op.min_eig && op_try.positive()) {
                double b_saved = b;
                b = b_try;
                ComplexScalarField r_try = residual_of(op_try);
                b = b_saved;
                double rn_try = sup_abs(r_try);
                if (rn_try < rn) {
                    u = std::move(u_try);
                    b = b_try;
                    op = std::move(op_try);
                    r = std::move(r_try);
                    rn = rn_try;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if (!accepted) {
            out.message = "line search failed below damping_min";
            return out;
        }
        ++iters;
        if (trace) trace->push_back({t, iters, rn, op.min_eig, b});
    }

    out.ok = true;
    out.state = SolveState{t, std::move(u), b, rn, op.min_eig, iters};
    return out;
}

// u - sup(u); idempotent (the grid maximum is subtracted exactly).
inline ComplexScalarField normalize_sup(const ComplexScalarField& u) {
    u.require_real("normalize_sup");
    ComplexScalarField out = u;
    out -= sup(u);
    return out;
}

// Continuity method: advance t from 0 to 1 with halve-on-failure /
// double-on-success step control, floor 2^-10 of the span.
inline Solution continuity_solve(const ProblemData& p, const SolverConfig& cfg) {
    cfg.validate();
    constexpr double kStepFloor = 1.0 / 1024.0;  // 2^-10 of the [0,1] span

    Solution sol;
    SolveState cur;
    cur.t = 0.0;
    cur.u = ComplexScalarField(p.grid, true);
    cur.b = 0.0;
    {
        OperatorOutput op0 = assemble_gtilde(p, cur.u);
        cur.min_eig = op0.min_eig;
        cur.residual_norm = sup_abs(ma_residual(p, op0, 0.0, 0.0));
    }
    sol.path.push_back(cur);

    std::optional<SolveState> prev;
    double dt = 1.0 / cfg.t_steps;
    int successes = 0;

    while (cur.t < 1.0) {
        double t_next = std::min(cur.t + dt, 1.0);
        SolveState warm = cur;
        if (cfg.secant_extrapolation && prev && cur.t > prev->t) {
            double factor = (t_next - cur.t) / (cur.t - prev->t);
            ComplexScalarField du = cur.u;
            du -= prev->u;
            du *= factor;
            ComplexScalarField u_ex = cur.u;
            u_ex += du;
            if (assemble_gtilde(p, u_ex).positive()) {
                warm.u = std::move(u_ex);
                warm.b = cur.b + factor * (cur.b - prev->b);
            }
        }

        NewtonOutcome step = newton_solve_at_t(p, cfg, warm, t_next, &sol.trace);
        if (step.ok) {
            prev = cur;
            cur = std::move(step.state);
            sol.path.push_back(cur);
            if (++successes >= 2) {
                dt = std::min(dt * 2.0, 1.0);
                successes = 0;
            }
        } else {
            dt *= 0.5;
            successes = 0;
            if (dt < kStepFloor)
                throw SolverAbort("continuity step underflow at t = " + std::to_string(cur.t) + ": " +
                                      step.message,
                                  cur, sol.trace);
        }
    }

    sol.u = normalize_sup(cur.u);
    sol.b = cur.b;
    sol.final_residual = cur.residual_norm;  // the residual sees only derivatives of u
    sol.min_eig = cur.min_eig;
    return sol;
}

struct KernelDensityResult {
    ComplexScalarField w;
    double defect = 0.0;  // sup|L* w| / sup|w|
    bool converged = false;
    int iterations = 0;
};

// Positive density w with mean(w) = 1 spanning the kernel of L*, computed by
// inverse iteration with shift 0; each step solves the bordered system
// L* y + beta = w_k with mean(y) = 1.
inline KernelDensityResult kernel_density(const OperatorOutput& op, const OneFormField& a,
                                          const SolverConfig& cfg = {}) {
    op.require_positive("kernel_density");
    const PeriodicGrid& grid = op.gtilde.grid();
    const std::size_t N = grid.size();

    solver_detail::LinearOp apply = [&](const solver_detail::RealVec& x, solver_detail::RealVec& y) {
        double beta = solver_detail::vec_mean(x);
        solver_detail::RealVec q(N);
        for (std::size_t i = 0; i < N; ++i) q[i] = x[i] - beta;
        ComplexScalarField lw = linearized_adjoint_apply(op, a, solver_detail::field_from(grid, q));
        y.resize(N);
        for (std::size_t i = 0; i < N; ++i) y[i] = lw[i].real() + beta;
    };
    solver_detail::LinearOp precond = solver_detail::laplacian_preconditioner(grid, 1.0);

    ComplexScalarField ones(grid, true);
    ones += 1.0;
    ComplexScalarField adj_of_one = linearized_adjoint_apply(op, a, ones);

    KernelDensityResult out;
    out.w = ones;
    double defect = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < 12; ++iter) {
        ComplexScalarField lw = linearized_adjoint_apply(op, a, out.w);
        double d = sup_abs(lw) / std::max(sup_abs(out.w), 1e-300);
        if (d <= 1e-8) {
            out.defect = d;
            out.converged = true;
            out.iterations = iter;
            return out;
        }
        if (d >= 0.5 * defect && iter > 1) break;  // stagnation
        defect = d;

        // rhs of the bordered system: w_k - L*(1)
        solver_detail::RealVec rhs(N), x;
        for (std::size_t i = 0; i < N; ++i) rhs[i] = out.w[i].real() - adj_of_one[i].real();
        solver_detail::GmresResult g =
            solver_detail::gmres(apply, precond, rhs, x, cfg.krylov_tol, cfg.krylov_max, cfg.krylov_restart);
        if (!g.converged && g.relative_residual > 1e-6) break;
        double beta = solver_detail::vec_mean(x);
        for (std::size_t i = 0; i < N; ++i) out.w[i] = Complex(x[i] - beta + 1.0, 0.0);
        out.iterations = iter + 1;
    }
    {
        ComplexScalarField lw = linearized_adjoint_apply(op, a, out.w);
        out.defect = sup_abs(lw) / std::max(sup_abs(out.w), 1e-300);
        out.converged = out.defect <= 1e-8;
    }
    return out;
}

}  // namespace gma
