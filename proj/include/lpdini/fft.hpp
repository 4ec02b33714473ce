#pragma once

// Thin RAII layer over FFTW for the real transforms used by the fast
// convolution path and the Fourier-decay profile.

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <vector>

namespace lpdini::fft {

namespace detail {

inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct PlanDeleter {
  void operator()(fftw_plan_s* p) const {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(p);
  }
};
using Plan = std::unique_ptr<fftw_plan_s, PlanDeleter>;

struct FreeDeleter {
  void operator()(void* p) const { fftw_free(p); }
};
template <class T>
using Buffer = std::unique_ptr<T[], FreeDeleter>;

template <class T>
Buffer<T> allocate(std::size_t n) {
  return Buffer<T>(static_cast<T*>(fftw_malloc(sizeof(T) * (n == 0 ? 1 : n))));
}

}  // namespace detail

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// Real-to-complex transform of length rows x cols (rows == 1 for 1D),
/// returning the FFTW half-spectrum of size rows x (cols/2 + 1).
inline std::vector<std::complex<double>> forward(const std::vector<double>& in,
                                                 std::size_t rows, std::size_t cols) {
  const std::size_t half = cols / 2 + 1;
  auto rin = detail::allocate<double>(rows * cols);
  auto cout = detail::allocate<fftw_complex>(rows * half);
  detail::Plan plan;
  {
    std::lock_guard lock(detail::planner_mutex());
    plan.reset(rows == 1
                   ? fftw_plan_dft_r2c_1d(static_cast<int>(cols), rin.get(), cout.get(),
                                          FFTW_ESTIMATE)
                   : fftw_plan_dft_r2c_2d(static_cast<int>(rows), static_cast<int>(cols),
                                          rin.get(), cout.get(), FFTW_ESTIMATE));
  }
  std::copy(in.begin(), in.end(), rin.get());
  fftw_execute(plan.get());
  std::vector<std::complex<double>> out(rows * half);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {cout[i][0], cout[i][1]};
  return out;
}

/// Inverse of `forward`, normalized so that backward(forward(x)) == x.
inline std::vector<double> backward(const std::vector<std::complex<double>>& in,
                                    std::size_t rows, std::size_t cols) {
  const std::size_t half = cols / 2 + 1;
  auto cin = detail::allocate<fftw_complex>(rows * half);
  auto rout = detail::allocate<double>(rows * cols);
  detail::Plan plan;
  {
    std::lock_guard lock(detail::planner_mutex());
    plan.reset(rows == 1
                   ? fftw_plan_dft_c2r_1d(static_cast<int>(cols), cin.get(), rout.get(),
                                          FFTW_ESTIMATE)
                   : fftw_plan_dft_c2r_2d(static_cast<int>(rows), static_cast<int>(cols),
                                          cin.get(), rout.get(), FFTW_ESTIMATE));
  }
  for (std::size_t i = 0; i < rows * half; ++i) {
    cin[i][0] = in[i].real();
    cin[i][1] = in[i].imag();
  }
  fftw_execute(plan.get());
  const double scale = 1.0 / static_cast<double>(rows * cols);
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = rout[i] * scale;
  return out;
}

/// Full linear convolution of two row-major arrays (1D when rows are 1).
/// Output shape is (ar + br - 1) x (ac + bc - 1).
inline std::vector<double> convolve(const std::vector<double>& a, std::size_t ar,
                                    std::size_t ac, const std::vector<double>& b,
                                    std::size_t br, std::size_t bc) {
  const std::size_t orows = ar + br - 1;
  const std::size_t ocols = ac + bc - 1;
  const std::size_t prows = orows == 1 ? 1 : next_pow2(orows);
  const std::size_t pcols = next_pow2(ocols);
  std::vector<double> pa(prows * pcols, 0.0), pb(prows * pcols, 0.0);
  for (std::size_t r = 0; r < ar; ++r)
    for (std::size_t c = 0; c < ac; ++c) pa[r * pcols + c] = a[r * ac + c];
  for (std::size_t r = 0; r < br; ++r)
    for (std::size_t c = 0; c < bc; ++c) pb[r * pcols + c] = b[r * bc + c];
  auto fa = forward(pa, prows, pcols);
  const auto fb = forward(pb, prows, pcols);
  for (std::size_t i = 0; i < fa.size(); ++i) fa[i] *= fb[i];
  const auto full = backward(fa, prows, pcols);
  std::vector<double> out(orows * ocols);
  for (std::size_t r = 0; r < orows; ++r)
    for (std::size_t c = 0; c < ocols; ++c) out[r * ocols + c] = full[r * pcols + c];
  return out;
}

}  // namespace lpdini::fft
