#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "gma/grid.hpp"

namespace gma {

using Complex = std::complex<double>;

inline constexpr double kRealnessTol = 1e-12;
inline constexpr double kHermitianTol = 1e-12;

// Grid samples of a complex scalar. Fields flagged real must keep their
// imaginary parts below kRealnessTol * max|values|.
class ComplexScalarField {
  public:
    ComplexScalarField() = default;

    explicit ComplexScalarField(PeriodicGrid grid, bool real_flagged = false)
        : grid_(std::move(grid)), values_(grid_.size(), Complex(0.0)), real_(real_flagged) {}

    ComplexScalarField(PeriodicGrid grid, std::vector<Complex> values, bool real_flagged = false)
        : grid_(std::move(grid)), values_(std::move(values)), real_(real_flagged) {
        if (values_.size() != grid_.size())
            throw std::invalid_argument("ComplexScalarField: value count does not match grid");
        if (real_) check_realness();
    }

    const PeriodicGrid& grid() const { return grid_; }
    std::size_t size() const { return values_.size(); }
    bool is_real() const { return real_; }

    const std::vector<Complex>& values() const { return values_; }
    std::vector<Complex>& values() { return values_; }
    Complex operator[](std::size_t i) const { return values_[i]; }
    Complex& operator[](std::size_t i) { return values_[i]; }

    double max_abs() const {
        double m = 0.0;
        for (const Complex& v : values_) m = std::max(m, std::abs(v));
        return m;
    }

    double max_abs_imag() const {
        double m = 0.0;
        for (const Complex& v : values_) m = std::max(m, std::abs(v.imag()));
        return m;
    }

    void check_realness() const {
        double scale = max_abs();
        if (scale == 0.0) return;
        if (max_abs_imag() > kRealnessTol * scale)
            throw std::invalid_argument("field flagged real has imaginary part above tolerance");
    }

    // Flag as real after verifying the invariant; drops the residual imaginary parts.
    ComplexScalarField& flag_real() {
        check_realness();
        for (Complex& v : values_) v = Complex(v.real(), 0.0);
        real_ = true;
        return *this;
    }

    void require_real(const char* what) const {
        if (!real_) throw std::invalid_argument(std::string(what) + ": field must be real-flagged");
    }

    ComplexScalarField& operator+=(const ComplexScalarField& o) {
        require_same_grid(o);
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
        real_ = real_ && o.real_;
        return *this;
    }
    ComplexScalarField& operator-=(const ComplexScalarField& o) {
        require_same_grid(o);
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
        real_ = real_ && o.real_;
        return *this;
    }
    ComplexScalarField& operator*=(double s) {
        for (Complex& v : values_) v *= s;
        return *this;
    }
    ComplexScalarField& operator+=(double s) {
        for (Complex& v : values_) v += s;
        return *this;
    }
    ComplexScalarField& operator-=(double s) { return *this += -s; }

    friend ComplexScalarField operator+(ComplexScalarField a, const ComplexScalarField& b) { return a += b; }
    friend ComplexScalarField operator-(ComplexScalarField a, const ComplexScalarField& b) { return a -= b; }
    friend ComplexScalarField operator*(double s, ComplexScalarField a) { return a *= s; }

    void require_same_grid(const ComplexScalarField& o) const {
        if (grid_ != o.grid_) throw std::invalid_argument("field grids do not match");
    }

  private:
    PeriodicGrid grid_;
    std::vector<Complex> values_;
    bool real_ = false;
};

inline ComplexScalarField conj(const ComplexScalarField& f) {
    std::vector<Complex> v(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) v[i] = std::conj(f[i]);
    return ComplexScalarField(f.grid(), std::move(v), f.is_real());
}

// A (1,0)-form a = a_i dz^i, one scalar component field per complex axis.
class OneFormField {
  public:
    OneFormField() = default;

    OneFormField(PeriodicGrid grid, std::vector<ComplexScalarField> components)
        : grid_(std::move(grid)), components_(std::move(components)) {
        if (static_cast<int>(components_.size()) != grid_.dimension())
            throw std::invalid_argument("OneFormField: component count must equal n");
        for (const auto& c : components_)
            if (c.grid() != grid_) throw std::invalid_argument("OneFormField: component grid mismatch");
    }

    // Zero form.
    explicit OneFormField(PeriodicGrid grid)
        : OneFormField(grid, std::vector<ComplexScalarField>(
                                 static_cast<std::size_t>(grid.dimension()), ComplexScalarField(grid, true))) {}

    const PeriodicGrid& grid() const { return grid_; }
    int dimension() const { return grid_.dimension(); }
    const ComplexScalarField& component(int i) const { return components_[static_cast<std::size_t>(i)]; }
    ComplexScalarField& component(int i) { return components_[static_cast<std::size_t>(i)]; }

  private:
    PeriodicGrid grid_;
    std::vector<ComplexScalarField> components_;
};

// Pointwise n x n Hermitian matrices, n^2 complex entries per point,
// entry (i,j) holding m_{i jbar}.
class HermitianMatrixField {
  public:
    HermitianMatrixField() = default;

    explicit HermitianMatrixField(PeriodicGrid grid)
        : grid_(std::move(grid)),
          n_(grid_.dimension()),
          entries_(grid_.size() * static_cast<std::size_t>(n_ * n_), Complex(0.0)) {}

    HermitianMatrixField(PeriodicGrid grid, std::vector<Complex> entries)
        : grid_(std::move(grid)), n_(grid_.dimension()), entries_(std::move(entries)) {
        if (entries_.size() != grid_.size() * static_cast<std::size_t>(n_ * n_))
            throw std::invalid_argument("HermitianMatrixField: entry count mismatch");
    }

    const PeriodicGrid& grid() const { return grid_; }
    int matrix_dim() const { return n_; }
    std::size_t points() const { return grid_.size(); }

    Complex at(std::size_t point, int i, int j) const {
        return entries_[point * static_cast<std::size_t>(n_ * n_) + static_cast<std::size_t>(i * n_ + j)];
    }
    Complex& at(std::size_t point, int i, int j) {
        return entries_[point * static_cast<std::size_t>(n_ * n_) + static_cast<std::size_t>(i * n_ + j)];
    }
    const Complex* matrix(std::size_t point) const {
        return entries_.data() + point * static_cast<std::size_t>(n_ * n_);
    }
    Complex* matrix(std::size_t point) { return entries_.data() + point * static_cast<std::size_t>(n_ * n_); }

    const std::vector<Complex>& entries() const { return entries_; }
    std::vector<Complex>& entries() { return entries_; }

    double hermitian_defect() const {
        double defect = 0.0, scale = 0.0;
        for (std::size_t p = 0; p < points(); ++p)
            for (int i = 0; i < n_; ++i)
                for (int j = 0; j < n_; ++j) {
                    scale = std::max(scale, std::abs(at(p, i, j)));
                    defect = std::max(defect, std::abs(at(p, i, j) - std::conj(at(p, j, i))));
                }
        return scale > 0.0 ? defect / scale : 0.0;
    }

    void check_hermitian() const {
        if (hermitian_defect() > kHermitianTol)
            throw std::invalid_argument("HermitianMatrixField: Hermitian invariant violated");
    }

    // Identity metric field.
    static HermitianMatrixField identity(const PeriodicGrid& grid) {
        HermitianMatrixField m(grid);
        for (std::size_t p = 0; p < m.points(); ++p)
            for (int i = 0; i < grid.dimension(); ++i) m.at(p, i, i) = Complex(1.0);
        return m;
    }

  private:
    PeriodicGrid grid_;
    int n_ = 0;
    std::vector<Complex> entries_;
};

}  // namespace gma
