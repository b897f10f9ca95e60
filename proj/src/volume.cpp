#include "sthc/volume.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sthc/errors.hpp"

namespace sthc {

Extents valid_extents(const Extents& input, const Extents& kernel) {
  if (!fits_within(kernel, input)) {
    std::ostringstream msg;
    msg << "kernel " << kernel.height << "x" << kernel.width << "x" << kernel.frames
        << " does not fit inside volume " << input.height << "x" << input.width << "x"
        << input.frames;
    throw DimensionError(msg.str());
  }
  return {input.height - kernel.height + 1, input.width - kernel.width + 1,
          input.frames - kernel.frames + 1};
}

bool fits_within(const Extents& inner, const Extents& outer) {
  return inner.height <= outer.height && inner.width <= outer.width &&
         inner.frames <= outer.frames;
}

Volume::Volume(Extents extents, std::size_t channels, double fill)
    : extents_(extents), channels_(channels), values_(extents.count() * channels, fill) {}

Volume::Volume(Extents extents, std::size_t channels, std::vector<double> values)
    : extents_(extents), channels_(channels), values_(std::move(values)) {
  if (values_.size() != extents_.count() * channels_) {
    throw DimensionError("volume value count does not match its extents");
  }
}

std::span<double> Volume::channel(std::size_t c) {
  return std::span<double>(values_).subspan(c * extents_.count(), extents_.count());
}

std::span<const double> Volume::channel(std::size_t c) const {
  return std::span<const double>(values_).subspan(c * extents_.count(), extents_.count());
}

double Volume::min() const {
  return values_.empty() ? 0.0 : *std::min_element(values_.begin(), values_.end());
}

double Volume::max() const {
  return values_.empty() ? 0.0 : *std::max_element(values_.begin(), values_.end());
}

double Volume::max_abs() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

VideoVolume::VideoVolume(Volume volume) : volume_(std::move(volume)) {
  const Extents& e = volume_.extents();
  if (e.height == 0 || e.width == 0 || e.frames == 0 || volume_.channels() == 0) {
    throw DimensionError("video volume dimensions must be strictly positive");
  }
  for (double v : volume_.values()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw EncodingError("video intensities must lie in [0, 1]");
    }
  }
}

Volume flip_kernel(const Volume& kernel) {
  const Extents& e = kernel.extents();
  Volume flipped(e, kernel.channels());
  for (std::size_t c = 0; c < kernel.channels(); ++c)
    for (std::size_t t = 0; t < e.frames; ++t)
      for (std::size_t h = 0; h < e.height; ++h)
        for (std::size_t w = 0; w < e.width; ++w)
          flipped.at(e.height - 1 - h, e.width - 1 - w, e.frames - 1 - t, c) = kernel.at(h, w, t, c);
  return flipped;
}

double relative_error(const Volume& a, const Volume& b) {
  if (a.extents() != b.extents() || a.channels() != b.channels()) {
    throw DimensionError("relative_error: shape mismatch");
  }
  double worst = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) {
    worst = std::max(worst, std::abs(av[i] - bv[i]) / std::max(1.0, std::abs(bv[i])));
  }
  return worst;
}

}  // namespace sthc
