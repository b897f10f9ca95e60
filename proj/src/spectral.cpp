#include "sthc/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>
#include <tuple>

#include "sthc/errors.hpp"

namespace sthc {

namespace detail {

void* fft_alloc(std::size_t bytes) {
  void* p = fftw_malloc(std::max<std::size_t>(bytes, 1));
  if (p == nullptr) throw std::bad_alloc();
  return p;
}

void fft_free(void* p) noexcept { fftw_free(p); }

}  // namespace detail

namespace {

enum class PlanKind { r2c, c2r, c2c_forward, c2c_backward };

// FFTW's planner is not thread-safe; executing an existing plan on new arrays
// is. Plans are created once per (kind, grid) under a lock and kept for the
// lifetime of the process. FFTW_ESTIMATE keeps plan selection deterministic,
// so repeated runs produce bit-identical results.
fftw_plan cached_plan(PlanKind kind, const Extents& grid) {
  static std::mutex mutex;
  static std::map<std::tuple<int, std::size_t, std::size_t, std::size_t>, fftw_plan> plans;

  std::lock_guard lock(mutex);
  auto key = std::make_tuple(static_cast<int>(kind), grid.frames, grid.height, grid.width);
  if (auto it = plans.find(key); it != plans.end()) return it->second;

  const int n[3] = {static_cast<int>(grid.frames), static_cast<int>(grid.height),
                    static_cast<int>(grid.width)};
  const std::size_t real_count = grid.count();
  const std::size_t half_count = grid.frames * grid.height * (grid.width / 2 + 1);

  fftw_plan plan = nullptr;
  switch (kind) {
    case PlanKind::r2c: {
      RealBuffer in(real_count);
      ComplexBuffer out(half_count);
      plan = fftw_plan_dft_r2c(3, n, in.data(), reinterpret_cast<fftw_complex*>(out.data()),
                               FFTW_ESTIMATE);
      break;
    }
    case PlanKind::c2r: {
      ComplexBuffer in(half_count);
      RealBuffer out(real_count);
      plan = fftw_plan_dft_c2r(3, n, reinterpret_cast<fftw_complex*>(in.data()), out.data(),
                               FFTW_ESTIMATE);
      break;
    }
    case PlanKind::c2c_forward:
    case PlanKind::c2c_backward: {
      ComplexBuffer in(real_count);
      ComplexBuffer out(real_count);
      plan = fftw_plan_dft(3, n, reinterpret_cast<fftw_complex*>(in.data()),
                           reinterpret_cast<fftw_complex*>(out.data()),
                           kind == PlanKind::c2c_forward ? FFTW_FORWARD : FFTW_BACKWARD,
                           FFTW_ESTIMATE);
      break;
    }
  }
  if (plan == nullptr) throw Error("FFT planner failed");
  plans.emplace(key, plan);
  return plan;
}

fftw_complex* as_fftw(Complex* p) { return reinterpret_cast<fftw_complex*>(p); }

void require_single_channel(const Volume& v, const char* what) {
  if (v.channels() != 1) {
    throw DimensionError(std::string(what) + ": expected a single-channel volume");
  }
}

void require_crop(const Extents& grid, const Extents& crop, const Extents& offset) {
  if (offset.height + crop.height > grid.height || offset.width + crop.width > grid.width ||
      offset.frames + crop.frames > grid.frames) {
    throw DimensionError("crop region exceeds the spectrum grid");
  }
}

void require_conv_shapes(const Volume& volume, const Volume& kernel) {
  if (volume.channels() != kernel.channels()) {
    throw DimensionError("kernel and volume channel counts differ");
  }
  if (volume.channels() == 0 || kernel.extents().count() == 0) {
    throw DimensionError("empty kernel or volume");
  }
  (void)valid_extents(volume.extents(), kernel.extents());
}

}  // namespace

Spectrum3D::Spectrum3D(Extents grid, Complex fill) : grid_(grid), bins_(grid.count(), fill) {}

Spectrum3D forward_st_fft(const Volume& volume, const Extents& padded) {
  require_single_channel(volume, "forward_st_fft");
  const Extents& e = volume.extents();
  if (!fits_within(e, padded)) {
    throw DimensionError("padded shape is smaller than the volume");
  }
  ComplexBuffer in(padded.count(), Complex{});
  for (std::size_t t = 0; t < e.frames; ++t)
    for (std::size_t h = 0; h < e.height; ++h)
      for (std::size_t w = 0; w < e.width; ++w)
        in[(t * padded.height + h) * padded.width + w] = volume.at(h, w, t);

  Spectrum3D spectrum(padded);
  fftw_execute_dft(cached_plan(PlanKind::c2c_forward, padded), as_fftw(in.data()),
                   as_fftw(spectrum.bins().data()));
  return spectrum;
}

Volume inverse_st_fft(const Spectrum3D& spectrum, const Extents& crop, const Extents& offset) {
  const Extents& grid = spectrum.grid();
  require_crop(grid, crop, offset);

  // Out-of-place complex transforms leave their input untouched.
  ComplexBuffer out(grid.count());
  fftw_execute_dft(cached_plan(PlanKind::c2c_backward, grid),
                   as_fftw(const_cast<Complex*>(spectrum.bins().data())), as_fftw(out.data()));

  const double scale = 1.0 / static_cast<double>(grid.count());
  double grid_max = 0.0;
  double imag_max = 0.0;
  for (const Complex& z : out) {
    grid_max = std::max(grid_max, std::abs(z) * scale);
    imag_max = std::max(imag_max, std::abs(z.imag()) * scale);
  }
  if (imag_max > 1e-9 * grid_max) {
    std::ostringstream msg;
    msg << "inverse transform has imaginary residual " << imag_max << " against grid maximum "
        << grid_max << "; spectrum is not Hermitian";
    throw NumericalConsistencyError(msg.str());
  }

  Volume result(crop);
  for (std::size_t t = 0; t < crop.frames; ++t)
    for (std::size_t h = 0; h < crop.height; ++h)
      for (std::size_t w = 0; w < crop.width; ++w) {
        const std::size_t src =
            ((t + offset.frames) * grid.height + h + offset.height) * grid.width + w + offset.width;
        result.at(h, w, t) = out[src].real() * scale;
      }
  return result;
}

Volume direct_conv3d(const Volume& volume, const Volume& kernel) {
  require_conv_shapes(volume, kernel);
  const Extents& k = kernel.extents();
  const Extents out_e = valid_extents(volume.extents(), k);
  Volume out(out_e);
  for (std::size_t t = 0; t < out_e.frames; ++t)
    for (std::size_t i = 0; i < out_e.height; ++i)
      for (std::size_t j = 0; j < out_e.width; ++j) {
        double sum = 0.0;
        for (std::size_t c = 0; c < kernel.channels(); ++c)
          for (std::size_t tau = 0; tau < k.frames; ++tau)
            for (std::size_t m = 0; m < k.height; ++m)
              for (std::size_t n = 0; n < k.width; ++n)
                sum += kernel.at(m, n, tau, c) * volume.at(i + m, j + n, t + tau, c);
        out.at(i, j, t) = sum;
      }
  return out;
}

Volume fft_conv3d(const Volume& volume, const Volume& kernel) {
  require_conv_shapes(volume, kernel);
  SpectralConvolver conv(volume.extents(), kernel.extents());
  ComplexBuffer acc;
  for (std::size_t c = 0; c < volume.channels(); ++c) {
    ComplexBuffer x = conv.transform(volume.channel(c), volume.extents(), false);
    ComplexBuffer kf = conv.transform(kernel.channel(c), kernel.extents(), true);
    if (c == 0) {
      acc.assign(x.size(), Complex{});
    }
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += x[i] * kf[i];
  }
  Volume out(conv.output());
  const Extents offset{kernel.extents().height - 1, kernel.extents().width - 1,
                       kernel.extents().frames - 1};
  conv.inverse(acc, offset, conv.output(), out.values());
  return out;
}

std::size_t next_fast_size(std::size_t n) {
  for (std::size_t m = std::max<std::size_t>(n, 1);; ++m) {
    std::size_t r = m;
    for (std::size_t p : {2, 3, 5})
      while (r % p == 0) r /= p;
    if (r == 1) return m;
  }
}

SpectralConvolver::SpectralConvolver(const Extents& input, const Extents& kernel)
    : input_(input), kernel_(kernel), output_(valid_extents(input, kernel)) {
  auto axis = [](std::size_t in, std::size_t k, std::size_t out) {
    return next_fast_size(std::max(in + k - 1, in + out - 1));
  };
  grid_ = {axis(input.height, kernel.height, output_.height),
           axis(input.width, kernel.width, output_.width),
           axis(input.frames, kernel.frames, output_.frames)};
}

std::size_t SpectralConvolver::spectrum_size() const {
  return grid_.frames * grid_.height * (grid_.width / 2 + 1);
}

ComplexBuffer SpectralConvolver::transform(std::span<const double> block,
                                           const Extents& block_extents, bool flip) const {
  if (!fits_within(block_extents, grid_) || block.size() != block_extents.count()) {
    throw DimensionError("block does not fit the convolution grid");
  }
  RealBuffer padded(grid_.count(), 0.0);
  const Extents& b = block_extents;
  for (std::size_t t = 0; t < b.frames; ++t)
    for (std::size_t h = 0; h < b.height; ++h)
      for (std::size_t w = 0; w < b.width; ++w) {
        const double v = block[(t * b.height + h) * b.width + w];
        const std::size_t tt = flip ? b.frames - 1 - t : t;
        const std::size_t hh = flip ? b.height - 1 - h : h;
        const std::size_t ww = flip ? b.width - 1 - w : w;
        padded[(tt * grid_.height + hh) * grid_.width + ww] = v;
      }
  ComplexBuffer spectrum(spectrum_size());
  fftw_execute_dft_r2c(cached_plan(PlanKind::r2c, grid_), padded.data(), as_fftw(spectrum.data()));
  return spectrum;
}

void SpectralConvolver::inverse(ComplexBuffer& spectrum, const Extents& offset,
                                const Extents& crop, std::span<double> out) const {
  require_crop(grid_, crop, offset);
  if (spectrum.size() != spectrum_size() || out.size() != crop.count()) {
    throw DimensionError("inverse: buffer sizes do not match the grid");
  }
  RealBuffer real(grid_.count());
  fftw_execute_dft_c2r(cached_plan(PlanKind::c2r, grid_), as_fftw(spectrum.data()), real.data());
  const double scale = 1.0 / static_cast<double>(grid_.count());
  for (std::size_t t = 0; t < crop.frames; ++t)
    for (std::size_t h = 0; h < crop.height; ++h)
      for (std::size_t w = 0; w < crop.width; ++w) {
        const std::size_t src =
            ((t + offset.frames) * grid_.height + h + offset.height) * grid_.width + w + offset.width;
        out[(t * crop.height + h) * crop.width + w] = real[src] * scale;
      }
}

void SpectralConvolver::correlate(const ComplexBuffer& input, const ComplexBuffer& flipped_kernel,
                                  std::span<double> out) const {
  ComplexBuffer product(input.size());
  for (std::size_t i = 0; i < product.size(); ++i) product[i] = input[i] * flipped_kernel[i];
  inverse(product, {kernel_.height - 1, kernel_.width - 1, kernel_.frames - 1}, output_, out);
}

void SpectralConvolver::weight_gradient(const ComplexBuffer& input,
                                        std::span<const double> output_grad,
                                        std::span<double> out) const {
  ComplexBuffer product = transform(output_grad, output_, true);
  for (std::size_t i = 0; i < product.size(); ++i) product[i] *= input[i];
  inverse(product, {output_.height - 1, output_.width - 1, output_.frames - 1}, kernel_, out);
}

}  // namespace sthc
