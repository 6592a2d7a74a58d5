#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace gma {

// Uniform periodic grid on the torus C^n/(Z^n + iZ^n), n = 1..3.
// Real axes are ordered (x_1, y_1, ..., x_n, y_n) with z_k = x_k + i y_k,
// period 1 per axis. Axis 0 (x_1) varies fastest in linear storage.
class PeriodicGrid {
  public:
    PeriodicGrid() = default;

    PeriodicGrid(int n, std::vector<int> res) : n_(n), res_(std::move(res)) {
        if (n_ < 1 || n_ > 3)
            throw std::invalid_argument("PeriodicGrid: complex dimension must be 1..3");
        if (static_cast<int>(res_.size()) != 2 * n_)
            throw std::invalid_argument("PeriodicGrid: need one resolution per real axis (2n)");
        for (int r : res_) {
            if (r < 4 || r % 2 != 0)
                throw std::invalid_argument("PeriodicGrid: resolution must be even and >= 4, got " +
                                            std::to_string(r));
        }
        strides_.resize(res_.size());
        std::size_t s = 1;
        for (std::size_t a = 0; a < res_.size(); ++a) {
            strides_[a] = s;
            s *= static_cast<std::size_t>(res_[a]);
        }
        size_ = s;
    }

    // Same resolution on every axis.
    PeriodicGrid(int n, int res) : PeriodicGrid(n, std::vector<int>(2 * static_cast<std::size_t>(n), res)) {}

    int dimension() const { return n_; }
    int axes() const { return 2 * n_; }
    int res(int axis) const { return res_[static_cast<std::size_t>(axis)]; }
    const std::vector<int>& res() const { return res_; }
    std::size_t size() const { return size_; }
    std::size_t stride(int axis) const { return strides_[static_cast<std::size_t>(axis)]; }

    int index_on_axis(std::size_t linear, int axis) const {
        return static_cast<int>((linear / strides_[static_cast<std::size_t>(axis)]) %
                                static_cast<std::size_t>(res_[static_cast<std::size_t>(axis)]));
    }

    // Coordinates xi in [0,1)^{2n} of a grid point.
    std::vector<double> coords(std::size_t linear) const {
        std::vector<double> xi(res_.size());
        for (int a = 0; a < axes(); ++a)
            xi[static_cast<std::size_t>(a)] =
                static_cast<double>(index_on_axis(linear, a)) / res_[static_cast<std::size_t>(a)];
        return xi;
    }

    bool operator==(const PeriodicGrid& o) const { return n_ == o.n_ && res_ == o.res_; }
    bool operator!=(const PeriodicGrid& o) const { return !(*this == o); }

  private:
    int n_ = 0;
    std::vector<int> res_;
    std::vector<std::size_t> strides_;
    std::size_t size_ = 0;
};

}  // namespace gma
