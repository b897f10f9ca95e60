#pragma once

#include <complex>
#include <cstddef>
#include <new>
#include <span>
#include <vector>

#include "sthc/volume.hpp"

namespace sthc {

using Complex = std::complex<double>;

namespace detail {
void* fft_alloc(std::size_t bytes);
void fft_free(void* p) noexcept;
}  // namespace detail

// Allocator handing out SIMD-aligned storage so FFT plans can run in place on
// vector data.
template <class T>
struct FftAllocator {
  using value_type = T;
  FftAllocator() = default;
  template <class U>
  FftAllocator(const FftAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(detail::fft_alloc(n * sizeof(T))); }
  void deallocate(T* p, std::size_t) noexcept { detail::fft_free(p); }
  template <class U>
  bool operator==(const FftAllocator<U>&) const noexcept { return true; }
};

using ComplexBuffer = std::vector<Complex, FftAllocator<Complex>>;
using RealBuffer = std::vector<double, FftAllocator<double>>;

// Full complex spatio-temporal spectrum. Bin (kh, kw, kt) holds spatial
// frequencies (kh, kw) and temporal frequency kt; bin 0 on every axis is DC.
class Spectrum3D {
 public:
  Spectrum3D() = default;
  explicit Spectrum3D(Extents grid, Complex fill = {0.0, 0.0});

  const Extents& grid() const { return grid_; }
  std::size_t size() const { return bins_.size(); }

  std::size_t index(std::size_t kh, std::size_t kw, std::size_t kt) const {
    return (kt * grid_.height + kh) * grid_.width + kw;
  }
  Complex& at(std::size_t kh, std::size_t kw, std::size_t kt) { return bins_[index(kh, kw, kt)]; }
  Complex at(std::size_t kh, std::size_t kw, std::size_t kt) const {
    return bins_[index(kh, kw, kt)];
  }

  std::span<Complex> bins() { return bins_; }
  std::span<const Complex> bins() const { return bins_; }

 private:
  Extents grid_{};
  ComplexBuffer bins_;
};

// Zero-pads a single-channel volume to `padded` and applies the 2D spatial
// and 1D temporal DFTs (unnormalized, negative exponent).
Spectrum3D forward_st_fft(const Volume& volume, const Extents& padded);

// Inverse of forward_st_fft (normalized by the grid size), cropped to `crop`
// starting at `offset`. Imaginary residuals above 1e-9 of the largest output
// magnitude raise NumericalConsistencyError.
Volume inverse_st_fft(const Spectrum3D& spectrum, const Extents& crop, const Extents& offset = {});

// Ground-truth cross-correlation Y[i,j,t] = sum W[m,n,tau,c] X[i+m,j+n,t+tau,c]
// over the valid range, as plain nested loops. Returns one channel.
Volume direct_conv3d(const Volume& volume, const Volume& kernel);

// Same result as direct_conv3d through the convolution theorem.
Volume fft_conv3d(const Volume& volume, const Volume& kernel);

// Smallest 2^a 3^b 5^c >= n.
std::size_t next_fast_size(std::size_t n);

// Reusable real-to-complex engine for one (input, kernel) shape pair. The
// grid is large enough that both the forward correlation (input with kernel)
// and the weight-gradient correlation (input with output map) are linear.
// Thread-safe: all methods are const and plans are shared read-only.
class SpectralConvolver {
 public:
  SpectralConvolver(const Extents& input, const Extents& kernel);

  const Extents& grid() const { return grid_; }
  const Extents& input() const { return input_; }
  const Extents& kernel() const { return kernel_; }
  const Extents& output() const { return output_; }
  std::size_t spectrum_size() const;

  // Half spectrum of `block` (extents `block_extents`) zero-padded onto the
  // grid; with `flip` the block is reversed along all three axes first.
  ComplexBuffer transform(std::span<const double> block, const Extents& block_extents,
                          bool flip) const;

  // Inverse transform of `spectrum` (consumed), cropped to `crop` at `offset`.
  void inverse(ComplexBuffer& spectrum, const Extents& offset, const Extents& crop,
               std::span<double> out) const;

  // Valid cross-correlation of the input with the kernel whose flipped
  // spectrum is `flipped_kernel`; writes output() values.
  void correlate(const ComplexBuffer& input, const ComplexBuffer& flipped_kernel,
                 std::span<double> out) const;

  // Valid cross-correlation of the input with an output-map-sized block,
  // i.e. the kernel-weight gradient; writes kernel() values.
  void weight_gradient(const ComplexBuffer& input, std::span<const double> output_grad,
                       std::span<double> out) const;

 private:
  Extents input_;
  Extents kernel_;
  Extents output_;
  Extents grid_;
};

}  // namespace sthc
