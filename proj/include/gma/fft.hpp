#pragma once

#include <fftw3.h>

#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "gma/grid.hpp"

namespace gma {
namespace fft_detail {

// One cached FFTW plan pair per grid shape. Execution copies through the
// planned buffer, so callers can pass ordinary std::vector storage.
class PlanEntry {
  public:
    explicit PlanEntry(const std::vector<int>& res) {
        std::size_t total = 1;
        for (int r : res) total *= static_cast<std::size_t>(r);
        total_ = total;
        buf_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * total));
        // FFTW is row-major with the last dimension contiguous; axis 0 of the
        // grid is the fastest-varying one, so the dims are reversed.
        std::vector<int> dims(res.rbegin(), res.rend());
        fwd_ = fftw_plan_dft(static_cast<int>(dims.size()), dims.data(), buf_, buf_, FFTW_FORWARD,
                             FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft(static_cast<int>(dims.size()), dims.data(), buf_, buf_, FFTW_BACKWARD,
                             FFTW_ESTIMATE);
    }
    ~PlanEntry() {
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
        fftw_free(buf_);
    }
    PlanEntry(const PlanEntry&) = delete;
    PlanEntry& operator=(const PlanEntry&) = delete;

    void execute(const std::complex<double>* in, std::complex<double>* out, bool forward) {
        std::lock_guard<std::mutex> lock(exec_mutex_);
        auto* b = reinterpret_cast<std::complex<double>*>(buf_);
        for (std::size_t i = 0; i < total_; ++i) b[i] = in[i];
        fftw_execute(forward ? fwd_ : bwd_);
        for (std::size_t i = 0; i < total_; ++i) out[i] = b[i];
    }

  private:
    fftw_complex* buf_ = nullptr;
    fftw_plan fwd_ = nullptr;
    fftw_plan bwd_ = nullptr;
    std::size_t total_ = 0;
    std::mutex exec_mutex_;
};

inline PlanEntry& plan_for(const std::vector<int>& res) {
    static std::mutex mutex;
    static std::map<std::vector<int>, std::unique_ptr<PlanEntry>> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(res);
    if (it == cache.end()) it = cache.emplace(res, std::make_unique<PlanEntry>(res)).first;
    return *it->second;
}

}  // namespace fft_detail

// Forward transform to normalized Fourier coefficients c_k, so that
// values[j] = sum_k c_k exp(2 pi i k . xi_j).
inline std::vector<std::complex<double>> fft_forward(const PeriodicGrid& grid,
                                                     const std::vector<std::complex<double>>& values) {
    std::vector<std::complex<double>> spec(values.size());
    fft_detail::plan_for(grid.res()).execute(values.data(), spec.data(), true);
    double inv = 1.0 / static_cast<double>(grid.size());
    for (auto& c : spec) c *= inv;
    return spec;
}

inline std::vector<std::complex<double>> fft_inverse(const PeriodicGrid& grid,
                                                     const std::vector<std::complex<double>>& spec) {
    std::vector<std::complex<double>> values(spec.size());
    fft_detail::plan_for(grid.res()).execute(spec.data(), values.data(), false);
    return values;
}

// Signed mode number of a DFT bin: k in (-res/2, res/2].
inline int signed_mode(int bin, int res) { return bin <= res / 2 ? bin : bin - res; }

}  // namespace gma
