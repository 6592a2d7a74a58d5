#pragma once

#include <cmath>
#include <cstdlib>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gma/fields.hpp"
#include "gma/grid.hpp"

namespace gma {

// Real trigonometric polynomials: sum of amp * cos/sin(2*pi k.xi) terms.
// This is the input language for F, the form a, metric perturbations and
// manufactured potentials.
struct TrigTerm {
    enum class Phase { Cos, Sin };
    double amplitude = 0.0;
    std::vector<int> wavevector;  // length 2n, integer modes per real axis
    Phase phase = Phase::Cos;
};

class TrigExpression {
  public:
    TrigExpression() = default;
    explicit TrigExpression(std::vector<TrigTerm> terms) : terms_(std::move(terms)) {}

    static TrigExpression constant(double c, int axes) {
        TrigTerm t;
        t.amplitude = c;
        t.wavevector.assign(static_cast<std::size_t>(axes), 0);
        t.phase = TrigTerm::Phase::Cos;
        return TrigExpression({t});
    }

    const std::vector<TrigTerm>& terms() const { return terms_; }
    bool empty() const { return terms_.empty(); }

    TrigExpression& add(double amplitude, std::vector<int> wavevector, TrigTerm::Phase phase) {
        terms_.push_back({amplitude, std::move(wavevector), phase});
        return *this;
    }

    double evaluate(std::span<const double> xi) const {
        double v = 0.0;
        for (const TrigTerm& t : terms_) {
            if (t.wavevector.size() != xi.size())
                throw std::invalid_argument("TrigExpression: wavevector dimension mismatch");
            double arg = 0.0;
            for (std::size_t a = 0; a < xi.size(); ++a) arg += t.wavevector[a] * xi[a];
            arg *= 2.0 * std::numbers::pi;
            v += t.amplitude * (t.phase == TrigTerm::Phase::Cos ? std::cos(arg) : std::sin(arg));
        }
        return v;
    }

    // Sum of amplitudes of the zero-frequency cos terms (sin terms vanish there).
    double constant_term() const {
        double c = 0.0;
        for (const TrigTerm& t : terms_) {
            bool zero = true;
            for (int k : t.wavevector) zero = zero && (k == 0);
            if (zero && t.phase == TrigTerm::Phase::Cos) c += t.amplitude;
        }
        return c;
    }

    // Every wavevector component must satisfy |k_a| < res_a/2 so the term is
    // representable without aliasing on the grid.
    void check_resolvable(const PeriodicGrid& grid) const {
        for (const TrigTerm& t : terms_) {
            if (static_cast<int>(t.wavevector.size()) != grid.axes())
                throw std::invalid_argument("TrigExpression: term has wrong wavevector dimension");
            for (int a = 0; a < grid.axes(); ++a) {
                int k = t.wavevector[static_cast<std::size_t>(a)];
                if (2 * std::abs(k) >= grid.res(a))
                    throw std::invalid_argument(
                        "TrigExpression: unresolvable wavevector component k=" + std::to_string(k) +
                        " on axis " + std::to_string(a) + " (res " + std::to_string(grid.res(a)) + ")");
            }
        }
    }

  private:
    std::vector<TrigTerm> terms_;
};

// Random trig polynomial with wavenumbers in [-max_wavenumber, max_wavenumber]
// and term amplitudes in [-amplitude, amplitude].
template <typename Rng>
TrigExpression random_trig_expression(Rng& rng, int axes, int max_wavenumber, int terms, double amplitude) {
    std::uniform_int_distribution<int> kdist(-max_wavenumber, max_wavenumber);
    std::uniform_real_distribution<double> adist(-amplitude, amplitude);
    std::uniform_int_distribution<int> pdist(0, 1);
    TrigExpression expr;
    for (int t = 0; t < terms; ++t) {
        std::vector<int> k(static_cast<std::size_t>(axes));
        for (int a = 0; a < axes; ++a) k[static_cast<std::size_t>(a)] = kdist(rng);
        expr.add(adist(rng), std::move(k), pdist(rng) == 0 ? TrigTerm::Phase::Cos : TrigTerm::Phase::Sin);
    }
    return expr;
}

inline ComplexScalarField sample_field(const TrigExpression& expr, const PeriodicGrid& grid) {
    expr.check_resolvable(grid);
    ComplexScalarField f(grid, true);
    std::vector<double> xi(static_cast<std::size_t>(grid.axes()));
    for (std::size_t p = 0; p < grid.size(); ++p) {
        for (int a = 0; a < grid.axes(); ++a)
            xi[static_cast<std::size_t>(a)] = static_cast<double>(grid.index_on_axis(p, a)) / grid.res(a);
        f[p] = Complex(expr.evaluate(xi), 0.0);
    }
    return f;
}

}  // namespace gma
