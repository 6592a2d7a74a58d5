#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "gma/solver.hpp"
#include "gma/trig.hpp"
#include "test_helpers.hpp"

using namespace gma;
using Catch::Approx;

namespace {
constexpr double kPi = std::numbers::pi;

OneFormField constant_form(const PeriodicGrid& grid, std::vector<Complex> values) {
    std::vector<ComplexScalarField> comps;
    for (int i = 0; i < grid.dimension(); ++i) {
        ComplexScalarField c(grid);
        for (std::size_t p = 0; p < grid.size(); ++p) c[p] = values[static_cast<std::size_t>(i)];
        comps.push_back(std::move(c));
    }
    return OneFormField(grid, std::move(comps));
}

ProblemData flat_problem(const PeriodicGrid& grid, std::vector<Complex> a_const = {},
                         TrigExpression F = {}) {
    if (a_const.empty()) a_const.assign(static_cast<std::size_t>(grid.dimension()), Complex(0.0));
    if (F.empty()) F = TrigExpression::constant(0.0, grid.axes());
    return make_flat_problem(grid, constant_form(grid, std::move(a_const)), sample_field(F, grid));
}

ComplexScalarField cos_field(const PeriodicGrid& grid, double amp = 1.0) {
    TrigExpression e;
    std::vector<int> k(static_cast<std::size_t>(grid.axes()), 0);
    k[0] = 1;
    e.add(amp, k, TrigTerm::Phase::Cos);
    return sample_field(e, grid);
}

}  // namespace

TEST_CASE("krylov_solve at the flat state: cosine and constant right-hand sides") {
    PeriodicGrid grid(1, 32);
    ProblemData p = flat_problem(grid);
    OperatorOutput op = assemble_gtilde(p, ComplexScalarField(grid, true));
    SolverConfig cfg;

    SECTION("rhs = cos(2 pi x) gives du = -cos / pi^2, db = 0") {
        KrylovResult k = krylov_solve(op, p.a, cos_field(grid), cfg);
        REQUIRE(k.converged);
        CHECK(std::abs(k.db) < 1e-11);
        ComplexScalarField expect = cos_field(grid, -1.0 / (kPi * kPi));
        ComplexScalarField diff = k.du - expect;
        CHECK(sup_abs(diff) < 1e-11);
    }

    SECTION("rhs = 1 is orthogonal to the range of L: du = 0, db = -1") {
        ComplexScalarField one = sample_field(TrigExpression::constant(1.0, 2), grid);
        KrylovResult k = krylov_solve(op, p.a, one, cfg);
        REQUIRE(k.converged);
        CHECK(k.db == Approx(-1.0).margin(1e-11));
        CHECK(sup_abs(k.du) < 1e-11);
    }

    SECTION("mixed rhs splits into the two parts") {
        ComplexScalarField rhs = cos_field(grid);
        rhs += 1.0;
        KrylovResult k = krylov_solve(op, p.a, rhs, cfg);
        REQUIRE(k.converged);
        CHECK(k.db == Approx(-1.0).margin(1e-11));
        ComplexScalarField diff = k.du - cos_field(grid, -1.0 / (kPi * kPi));
        CHECK(sup_abs(diff) < 1e-10);
    }
}

TEST_CASE("krylov_solve substitution check on a random admissible state") {
    std::mt19937_64 rng(91);
    for (int n : {1, 2}) {
        PeriodicGrid grid(n, 8);
        ProblemData p = flat_problem(grid, std::vector<Complex>(static_cast<std::size_t>(n), Complex(0.2, -0.1)));
        ComplexScalarField u = sample_field(random_trig_expression(rng, 2 * n, 2, 3, 0.01), grid);
        OperatorOutput op = assemble_gtilde(p, u);
        while (!op.positive()) {
            u *= 0.5;
            op = assemble_gtilde(p, u);
        }

        ComplexScalarField rhs = sample_field(random_trig_expression(rng, 2 * n, 3, 3, 1.0), grid);
        SolverConfig cfg;
        KrylovResult k = krylov_solve(op, p.a, rhs, cfg);
        REQUIRE(k.converged);
        CHECK(std::abs(mean(k.du)) < 1e-12);

        ComplexScalarField lhs = linearized_apply(op, p.a, k.du);
        lhs -= k.db;
        ComplexScalarField diff = lhs - rhs;
        CHECK(sup_abs(diff) < 1e-9 * std::max(1.0, sup_abs(rhs)));
    }
}

TEST_CASE("newton_solve_at_t: t = 0 accepts the zero state without iterating") {
    PeriodicGrid grid(1, 16);
    TrigExpression Fe;
    Fe.add(0.8, {1, 0}, TrigTerm::Phase::Cos);
    ProblemData p = flat_problem(grid, {}, Fe);

    SolveState warm;
    warm.u = ComplexScalarField(grid, true);
    NewtonOutcome out = newton_solve_at_t(p, SolverConfig{}, warm, 0.0);
    REQUIRE(out.ok);
    CHECK(out.state.newton_iters == 0);
    CHECK(sup_abs(out.state.u) < 1e-14);
    CHECK(out.state.b == 0.0);
}

TEST_CASE("newton_solve_at_t: constant source is solved in one exact step, b = -c") {
    PeriodicGrid grid(1, 16);
    double c = 0.37;
    ProblemData p = flat_problem(grid, {Complex(0.1, 0.2)}, TrigExpression::constant(c, 2));

    SolveState warm;
    warm.u = ComplexScalarField(grid, true);
    std::vector<TraceRecord> trace;
    NewtonOutcome out = newton_solve_at_t(p, SolverConfig{}, warm, 1.0, &trace);
    REQUIRE(out.ok);
    CHECK(out.state.newton_iters == 1);
    CHECK(out.state.b == Approx(-c).margin(1e-12));
    CHECK(sup_abs(out.state.u) < 1e-11);
    REQUIRE(trace.size() == 2);  // iteration 0 snapshot + the accepted step
    CHECK(trace[0].residual_sup == Approx(c));
    CHECK(trace[1].residual_sup < 1e-11);
}

TEST_CASE("newton_solve_at_t converges quadratically near the solution") {
    PeriodicGrid grid(1, 32);
    TrigExpression Fe;
    Fe.add(0.3, {1, 0}, TrigTerm::Phase::Cos);
    ProblemData p = flat_problem(grid, {}, Fe);

    SolveState warm;
    warm.u = ComplexScalarField(grid, true);
    std::vector<TraceRecord> trace;
    SolverConfig cfg;
    cfg.newton_tol = 1e-13;
    NewtonOutcome out = newton_solve_at_t(p, cfg, warm, 1.0, &trace);
    REQUIRE(out.ok);
    CHECK(out.state.residual_norm <= cfg.newton_tol);
    // once the residual is below ~1e-2 each step should at least square it
    for (std::size_t i = 1; i + 1 < trace.size(); ++i)
        if (trace[i].residual_sup < 1e-2 && trace[i + 1].residual_sup > 1e-15)
            CHECK(trace[i + 1].residual_sup < 10.0 * trace[i].residual_sup * trace[i].residual_sup);
}

TEST_CASE("continuity_solve: F = 0 returns the trivial pair") {
    for (int n : {1, 2}) {
        PeriodicGrid grid(n, n == 1 ? 32 : 8);
        ProblemData p = flat_problem(grid, std::vector<Complex>(static_cast<std::size_t>(n), Complex(0.15, 0.1)));
        Solution sol = continuity_solve(p, SolverConfig{});
        CHECK(sup_abs(sol.u) <= 1e-10);
        CHECK(std::abs(sol.b) <= 1e-10);
        CHECK(sol.min_eig == Approx(1.0).margin(1e-9));
    }
}

TEST_CASE("continuity_solve: constant F = c gives u = 0 and b = -c") {
    PeriodicGrid grid(1, 16);
    double c = -0.42;
    ProblemData p = flat_problem(grid, {}, TrigExpression::constant(c, 2));
    Solution sol = continuity_solve(p, SolverConfig{});
    CHECK(sup_abs(sol.u) < 1e-10);
    CHECK(sol.b == Approx(-c).margin(1e-10));
}

TEST_CASE("continuity_solve on a nontrivial source: converged, normalized, b bounded") {
    PeriodicGrid grid(1, 32);
    TrigExpression Fe;
    Fe.add(0.5, {1, 0}, TrigTerm::Phase::Cos);
    Fe.add(0.2, {0, 2}, TrigTerm::Phase::Sin);
    ProblemData p = flat_problem(grid, {Complex(0.2, 0.1)}, Fe);

    SolverConfig cfg;
    Solution sol = continuity_solve(p, cfg);
    CHECK(sol.final_residual <= cfg.newton_tol);
    CHECK(sol.min_eig > 0.0);
    CHECK(sup(sol.u) == Approx(0.0).margin(1e-13));  // sup-normalized: max is 0
    CHECK(std::abs(sol.b) <= sup_abs(p.F) + 1e-8);
    // final residual also holds for the normalized representative
    ComplexScalarField r = ma_residual(p, sol.u, sol.b, 1.0);
    CHECK(sup_abs(r) <= 10.0 * cfg.newton_tol);
    // the path starts at t=0 and ends at t=1
    REQUIRE(sol.path.size() >= 2);
    CHECK(sol.path.front().t == 0.0);
    CHECK(sol.path.back().t == 1.0);
}

TEST_CASE("b stays within sup|F| across random sources") {
    std::mt19937_64 rng(4242);
    for (int rep = 0; rep < 5; ++rep) {
        PeriodicGrid grid(1, 32);
        ComplexScalarField F = sample_field(random_trig_expression(rng, 2, 3, 4, 0.4), grid);
        ProblemData p = make_flat_problem(grid, constant_form(grid, {Complex(0.1, -0.05)}), F);
        Solution sol = continuity_solve(p, SolverConfig{});
        CHECK(std::abs(sol.b) <= sup_abs(F) + 1e-8);
    }
}

TEST_CASE("residual is invariant under constant shifts of u") {
    PeriodicGrid grid(1, 16);
    TrigExpression Fe;
    Fe.add(0.3, {1, 0}, TrigTerm::Phase::Cos);
    ProblemData p = flat_problem(grid, {Complex(0.2, 0.0)}, Fe);
    ComplexScalarField u = cos_field(grid, 0.02);
    ComplexScalarField r1 = ma_residual(p, u, 0.1, 1.0);
    ComplexScalarField u_shift = u;
    u_shift += 5.0;
    ComplexScalarField r2 = ma_residual(p, u_shift, 0.1, 1.0);
    ComplexScalarField diff = r1 - r2;
    CHECK(sup_abs(diff) < 1e-12);
}

TEST_CASE("normalize_sup: max becomes zero and the map is idempotent") {
    PeriodicGrid grid(1, 16);
    ComplexScalarField u = cos_field(grid, 0.7);
    u += 3.0;
    ComplexScalarField n1 = normalize_sup(u);
    CHECK(sup(n1) == 0.0);  // exact: the grid max is subtracted
    ComplexScalarField n2 = normalize_sup(n1);
    for (std::size_t pt = 0; pt < grid.size(); ++pt) CHECK(n2[pt] == n1[pt]);
}

TEST_CASE("secant extrapolation reaches the same solution") {
    PeriodicGrid grid(1, 32);
    TrigExpression Fe;
    Fe.add(0.4, {1, 0}, TrigTerm::Phase::Cos);
    ProblemData p = flat_problem(grid, {}, Fe);

    SolverConfig plain;
    SolverConfig secant;
    secant.secant_extrapolation = true;
    Solution a = continuity_solve(p, plain);
    Solution b = continuity_solve(p, secant);
    ComplexScalarField diff = a.u - b.u;
    CHECK(sup_abs(diff) < 10.0 * plain.newton_tol);
    CHECK(std::abs(a.b - b.b) < 10.0 * plain.newton_tol);
}

TEST_CASE("continuity_solve aborts cleanly when Newton cannot make progress") {
    PeriodicGrid grid(1, 16);
    TrigExpression Fe;
    Fe.add(0.5, {1, 0}, TrigTerm::Phase::Cos);
    ProblemData p = flat_problem(grid, {}, Fe);

    SolverConfig cfg;
    cfg.max_newton = 1;  // any nonconstant source needs more than one step
    try {
        continuity_solve(p, cfg);
        FAIL("expected SolverAbort");
    } catch (const SolverAbort& e) {
        CHECK(e.last_good().t == 0.0);
        CHECK_FALSE(e.trace().empty());
        CHECK(std::string(e.what()).find("underflow") != std::string::npos);
    }
}

TEST_CASE("format_trace: one line per record, five columns") {
    std::vector<TraceRecord> tr{{0.5, 2, 1e-3, 0.9, -0.1}, {1.0, 0, 1e-12, 0.95, -0.2}};
    std::string s = format_trace(tr);
    CHECK(std::count(s.begin(), s.end(), '\n') == 2);
    std::istringstream is(s);
    std::string line;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        double x;
        int count = 0;
        while (ls >> x) ++count;
        CHECK(count == 5);
    }
}

TEST_CASE("kernel_density: flat state has the constant density") {
    PeriodicGrid grid(1, 16);
    ProblemData p = flat_problem(grid);
    OperatorOutput op = assemble_gtilde(p, ComplexScalarField(grid, true));
    KernelDensityResult k = kernel_density(op, p.a);
    REQUIRE(k.converged);
    CHECK(k.iterations == 0);
    for (std::size_t pt = 0; pt < grid.size(); ++pt) CHECK(k.w[pt].real() == Approx(1.0).margin(1e-12));
}

TEST_CASE("kernel_density on a curved state: normalized, positive, annihilated by L*") {
    std::mt19937_64 rng(2718);
    PeriodicGrid grid(1, 32);
    ProblemData p = flat_problem(grid, {Complex(0.3, -0.2)});
    ComplexScalarField u = sample_field(random_trig_expression(rng, 2, 2, 3, 0.01), grid);
    OperatorOutput op = assemble_gtilde(p, u);
    REQUIRE(op.positive());

    KernelDensityResult k = kernel_density(op, p.a);
    REQUIRE(k.converged);
    CHECK(k.defect <= 1e-8);
    CHECK(mean(k.w) == Approx(1.0).margin(1e-12));
    double wmin = k.w[0].real();
    for (std::size_t pt = 0; pt < grid.size(); ++pt) wmin = std::min(wmin, k.w[pt].real());
    CHECK(wmin > 0.0);

    // duality: the kernel density is orthogonal to the range of L
    for (int rep = 0; rep < 3; ++rep) {
        ComplexScalarField psi = sample_field(random_trig_expression(rng, 2, 2, 3, 1.0), grid);
        double ip = inner_product(linearized_apply(op, p.a, psi), k.w);
        CHECK(std::abs(ip) < 1e-7 * sup_abs(psi) * sup_abs(k.w));
    }
}

TEST_CASE("solver config validation rejects bad parameters") {
    SolverConfig cfg;
    cfg.t_steps = 0;
    CHECK_THROWS(cfg.validate());
    cfg = SolverConfig{};
    cfg.newton_tol = -1.0;
    CHECK_THROWS(cfg.validate());
    cfg = SolverConfig{};
    cfg.damping_min = 2.0;
    CHECK_THROWS(cfg.validate());
    CHECK_NOTHROW(SolverConfig{}.validate());
}
