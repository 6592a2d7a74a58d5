#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "gma/calculus.hpp"
#include "gma/operator.hpp"
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

// Random potential, rescaled until gtilde stays safely positive.
ComplexScalarField random_admissible_u(std::mt19937_64& rng, const ProblemData& p, double margin = 0.2) {
    TrigExpression e = random_trig_expression(rng, p.grid.axes(), 2, 4, 0.05);
    ComplexScalarField u = sample_field(e, p.grid);
    for (int i = 0; i < 30; ++i) {
        if (assemble_gtilde(p, u).min_eig > margin) return u;
        u *= 0.5;
    }
    return ComplexScalarField(p.grid, true);
}

ProblemData flat_problem(const PeriodicGrid& grid, std::vector<Complex> a_const = {},
                         TrigExpression F = {}) {
    if (a_const.empty()) a_const.assign(static_cast<std::size_t>(grid.dimension()), Complex(0.0));
    if (F.empty()) F = TrigExpression::constant(0.0, grid.axes());
    return make_flat_problem(grid, constant_form(grid, std::move(a_const)), sample_field(F, grid));
}

}  // namespace

TEST_CASE("assemble_gtilde: u = 0 reproduces g") {
    PeriodicGrid grid(2, 8);
    ProblemData p = flat_problem(grid, {Complex(0.3, 0.1), Complex(-0.2, 0.4)});
    ComplexScalarField u(grid, true);
    OperatorOutput op = assemble_gtilde(p, u);
    CHECK(op.min_eig == Approx(1.0));
    for (std::size_t pt = 0; pt < grid.size(); ++pt)
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                CHECK(std::abs(op.gtilde.at(pt, i, j) - p.g.at(pt, i, j)) < 1e-13);
    CHECK(sup_abs(op.log_det_ratio) < 1e-12);
}

TEST_CASE("assemble_gtilde n=1: closed form 1 - eps pi^2 cos and positivity threshold") {
    PeriodicGrid grid(1, 32);
    ProblemData p = flat_problem(grid);
    TrigExpression e;
    e.add(1.0, {1, 0}, TrigTerm::Phase::Cos);

    double eps_ok = 0.05;  // < 1/pi^2
    ComplexScalarField u = sample_field(e, grid);
    u *= eps_ok;
    OperatorOutput op = assemble_gtilde(p, u);
    CHECK(op.min_eig == Approx(1.0 - eps_ok * kPi * kPi).epsilon(1e-10));
    for (std::size_t pt = 0; pt < grid.size(); ++pt) {
        double x = static_cast<double>(grid.index_on_axis(pt, 0)) / 32.0;
        CHECK(op.gtilde.at(pt, 0, 0).real() ==
              Approx(1.0 - eps_ok * kPi * kPi * std::cos(2.0 * kPi * x)).margin(1e-12));
    }

    double eps_bad = 0.2;  // > 1/pi^2, degenerate somewhere
    ComplexScalarField u2 = sample_field(e, grid);
    u2 *= eps_bad;
    OperatorOutput op2 = assemble_gtilde(p, u2);
    CHECK(op2.min_eig < 0.0);
    CHECK_FALSE(op2.positive());
}

TEST_CASE("assemble_gtilde n=1 with constant real a matches the symbolic oracle") {
    PeriodicGrid grid(1, 32);
    double c = 0.3, eps = 0.02;
    ProblemData p = flat_problem(grid, {Complex(c, 0.0)});
    TrigExpression e;
    e.add(eps, {1, 0}, TrigTerm::Phase::Sin);
    ComplexScalarField u = sample_field(e, grid);
    OperatorOutput op = assemble_gtilde(p, u);
    // a_1 u_1bar + a_1bar u_1 = c d_x u = 2 pi c eps cos; hessian = -pi^2 eps sin
    for (std::size_t pt = 0; pt < grid.size(); ++pt) {
        double x = static_cast<double>(grid.index_on_axis(pt, 0)) / 32.0;
        double expected = 1.0 + 2.0 * kPi * c * eps * std::cos(2.0 * kPi * x) -
                          kPi * kPi * eps * std::sin(2.0 * kPi * x);
        CHECK(op.gtilde.at(pt, 0, 0).real() == Approx(expected).margin(1e-12));
    }
}

TEST_CASE("gtilde stays Hermitian for random admissible states") {
    std::mt19937_64 rng(2024);
    for (int n = 1; n <= 3; ++n) {
        PeriodicGrid grid(n, n == 3 ? 6 : 8);
        ProblemData p = flat_problem(grid, std::vector<Complex>(static_cast<std::size_t>(n), Complex(0.1, -0.2)));
        ComplexScalarField u = random_admissible_u(rng, p);
        OperatorOutput op = assemble_gtilde(p, u);
        REQUIRE(op.positive());
        CHECK(op.gtilde.hermitian_defect() < 1e-12);
        // inverse really inverts
        std::array<Complex, 9> prod{};
        for (std::size_t pt = 0; pt < grid.size(); pt += grid.size() / 7 + 1) {
            mat_mul(op.gtilde.matrix(pt), op.gtilde_inverse.matrix(pt), n, prod.data());
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    CHECK(std::abs(prod[static_cast<std::size_t>(i * n + j)] - (i == j ? 1.0 : 0.0)) < 1e-10);
        }
    }
}

TEST_CASE("ma_residual: u=0, b=0 gives -tF; constants cancel") {
    PeriodicGrid grid(1, 16);
    TrigExpression Fe;
    Fe.add(0.4, {1, 0}, TrigTerm::Phase::Cos);
    ProblemData p = flat_problem(grid, {}, Fe);
    ComplexScalarField u(grid, true);

    for (double t : {0.0, 0.5, 1.0}) {
        ComplexScalarField r = ma_residual(p, u, 0.0, t);
        ComplexScalarField expect = p.F;
        expect *= -t;
        ComplexScalarField diff = r - expect;
        CHECK(sup_abs(diff) < 1e-12);
    }

    ProblemData pc = flat_problem(grid, {}, TrigExpression::constant(0.7, 2));
    ComplexScalarField r = ma_residual(pc, u, -0.7, 1.0);
    CHECK(sup_abs(r) < 1e-13);
}

TEST_CASE("ma_residual vanishes for a manufactured source (independent log oracle)") {
    PeriodicGrid grid(1, 64);
    ProblemData p0 = flat_problem(grid);
    double eps = 0.05;
    TrigExpression e;
    e.add(eps, {1, 0}, TrigTerm::Phase::Cos);
    ComplexScalarField u = sample_field(e, grid);

    // F* = log(1 - eps pi^2 cos(2 pi x)) evaluated directly, not via the operator
    ComplexScalarField F_star(grid, true);
    for (std::size_t pt = 0; pt < grid.size(); ++pt) {
        double x = static_cast<double>(grid.index_on_axis(pt, 0)) / 64.0;
        F_star[pt] = Complex(std::log(1.0 - eps * kPi * kPi * std::cos(2.0 * kPi * x)), 0.0);
    }
    ProblemData p = make_flat_problem(grid, OneFormField(grid), F_star);
    ComplexScalarField r = ma_residual(p, u, 0.0, 1.0);
    CHECK(sup_abs(r) < 1e-10);
}

TEST_CASE("ma_residual reports degeneracy through min_eig") {
    PeriodicGrid grid(1, 16);
    ProblemData p = flat_problem(grid);
    TrigExpression e;
    e.add(0.2, {1, 0}, TrigTerm::Phase::Cos);
    ComplexScalarField u = sample_field(e, grid);
    CHECK_THROWS_WITH(ma_residual(p, u, 0.0, 1.0), Catch::Matchers::ContainsSubstring("min_eig"));
}

TEST_CASE("linearized_apply: constants are in the kernel; flat state gives the Laplacian") {
    PeriodicGrid grid(1, 32);
    ProblemData p = flat_problem(grid, {Complex(0.2, 0.3)});
    ComplexScalarField u(grid, true);
    OperatorOutput op = assemble_gtilde(p, u);

    ComplexScalarField c = sample_field(TrigExpression::constant(4.2, 2), grid);
    CHECK(sup_abs(linearized_apply(op, p.a, c)) < 1e-12);

    ProblemData p0 = flat_problem(grid);
    OperatorOutput op0 = assemble_gtilde(p0, u);
    TrigExpression e;
    e.add(1.0, {1, 0}, TrigTerm::Phase::Cos);
    ComplexScalarField v = sample_field(e, grid);
    ComplexScalarField lv = linearized_apply(op0, p0.a, v);
    for (std::size_t pt = 0; pt < grid.size(); ++pt) {
        double x = static_cast<double>(grid.index_on_axis(pt, 0)) / 32.0;
        CHECK(lv[pt].real() == Approx(-kPi * kPi * std::cos(2.0 * kPi * x)).margin(1e-10));
    }
}

TEST_CASE("linearized_apply is the Gateaux derivative of log det gtilde") {
    std::mt19937_64 rng(77);
    for (int n : {1, 2}) {
        PeriodicGrid grid(n, 8);
        ProblemData p = flat_problem(grid, std::vector<Complex>(static_cast<std::size_t>(n), Complex(0.15, -0.1)));
        ComplexScalarField u = random_admissible_u(rng, p);
        OperatorOutput op = assemble_gtilde(p, u);
        REQUIRE(op.positive());

        ComplexScalarField v = sample_field(random_trig_expression(rng, 2 * n, 2, 3, 0.5), grid);
        ComplexScalarField lv = linearized_apply(op, p.a, v);

        auto log_det_at = [&](double s) {
            ComplexScalarField us = u;
            ComplexScalarField sv = v;
            sv *= s;
            us += sv;
            OperatorOutput o = assemble_gtilde(p, us);
            REQUIRE(o.positive());
            return o.log_det_ratio;
        };
        auto centered_error = [&](double s) {
            ComplexScalarField d = log_det_at(s) - log_det_at(-s);
            d *= 1.0 / (2.0 * s);
            d -= lv;
            return sup_abs(d);
        };
        double e1 = centered_error(1e-3);
        double e2 = centered_error(5e-4);
        CHECK(e1 / e2 > 3.5);  // O(s^2)
        CHECK(e2 < 1e-2);
    }
}

TEST_CASE("trace identity: Lu = n - tr_gtilde(g)") {
    std::mt19937_64 rng(31337);
    for (int n = 1; n <= 3; ++n) {
        PeriodicGrid grid(n, n == 3 ? 6 : 8);
        ProblemData p = flat_problem(grid, std::vector<Complex>(static_cast<std::size_t>(n), Complex(0.2, 0.1)));
        for (int rep = 0; rep < 5; ++rep) {
            ComplexScalarField u = random_admissible_u(rng, p);
            OperatorOutput op = assemble_gtilde(p, u);
            REQUIRE(op.positive());
            ComplexScalarField lu = linearized_apply(op, p.a, u);
            ComplexScalarField tr = trace_against_inverse(op, p.g);
            double err = 0.0;
            for (std::size_t pt = 0; pt < grid.size(); ++pt)
                err = std::max(err, std::abs(lu[pt].real() - (n - tr[pt].real())));
            CHECK(err < 1e-9);
        }
    }
}

TEST_CASE("adjoint duality <Lv, w> = <v, L*w>") {
    std::mt19937_64 rng(555);
    for (int n : {1, 2}) {
        PeriodicGrid grid(n, 8);
        ProblemData p = flat_problem(grid, std::vector<Complex>(static_cast<std::size_t>(n), Complex(0.25, -0.15)));
        ComplexScalarField u = random_admissible_u(rng, p);
        OperatorOutput op = assemble_gtilde(p, u);
        REQUIRE(op.positive());
        for (int rep = 0; rep < 5; ++rep) {
            ComplexScalarField v = sample_field(random_trig_expression(rng, 2 * n, 2, 3, 1.0), grid);
            ComplexScalarField w = sample_field(random_trig_expression(rng, 2 * n, 2, 3, 1.0), grid);
            double lhs = inner_product(linearized_apply(op, p.a, v), w);
            double rhs = inner_product(v, linearized_adjoint_apply(op, p.a, w));
            double scale = std::max(1.0, sup_abs(v) * sup_abs(w));
            CHECK(std::abs(lhs - rhs) < 1e-10 * scale);
        }
    }
}

TEST_CASE("adjoint at the flat state is the Laplacian (self-adjoint case)") {
    PeriodicGrid grid(1, 32);
    ProblemData p = flat_problem(grid);
    ComplexScalarField u(grid, true);
    OperatorOutput op = assemble_gtilde(p, u);
    TrigExpression e;
    e.add(1.0, {2, 1}, TrigTerm::Phase::Sin);
    ComplexScalarField w = sample_field(e, grid);
    ComplexScalarField lw = linearized_adjoint_apply(op, p.a, w);
    ComplexScalarField lap = linearized_apply(op, p.a, w);  // L = Laplacian here
    ComplexScalarField diff = lw - lap;
    CHECK(sup_abs(diff) < 1e-10);
}

TEST_CASE("adjoint of the constant function matches direct assembly") {
    std::mt19937_64 rng(888);
    PeriodicGrid grid(2, 8);
    ProblemData p = flat_problem(grid);
    ComplexScalarField u = random_admissible_u(rng, p);
    OperatorOutput op = assemble_gtilde(p, u);
    REQUIRE(op.positive());

    ComplexScalarField ones = sample_field(TrigExpression::constant(1.0, 4), grid);
    ComplexScalarField lw = linearized_adjoint_apply(op, p.a, ones);

    // direct spectral evaluation of d_jbar d_i g̃^{i jbar}
    ComplexScalarField direct(grid);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            ComplexScalarField entry(grid);
            for (std::size_t pt = 0; pt < grid.size(); ++pt) entry[pt] = op.gtilde_inverse.at(pt, j, i);
            Spectrum spec = spectrum_of(entry);
            for_each_mode(grid, [&](std::size_t pt, const int* bins) {
                spec[pt] *= second_derivative_symbol(grid, bins, i, j);
            });
            direct += field_from_spectrum(grid, spec);
        }
    for (std::size_t pt = 0; pt < grid.size(); ++pt)
        CHECK(std::abs(lw[pt].real() - direct[pt].real()) < 1e-9);
}

TEST_CASE("make_problem validates its inputs") {
    PeriodicGrid grid(1, 8);
    HermitianMatrixField g(grid);  // zero matrix, not positive
    CHECK_THROWS(make_problem(grid, g, OneFormField(grid), ComplexScalarField(grid, true)));

    ComplexScalarField bad_F(grid);
    bad_F[0] = Complex(0.0, 1.0);
    CHECK_THROWS(make_flat_problem(grid, OneFormField(grid), bad_F));
}
