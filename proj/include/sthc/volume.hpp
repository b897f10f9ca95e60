#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace sthc {

// Spatio-temporal extents of a single-channel block.
struct Extents {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t frames = 0;

  std::size_t count() const { return height * width * frames; }
  bool operator==(const Extents&) const = default;
};

// Valid (stride 1, no padding) output extents of a kernel slid over an input.
Extents valid_extents(const Extents& input, const Extents& kernel);
bool fits_within(const Extents& inner, const Extents& outer);

// Dense real grid of `channels` stacked H x W x T blocks. Storage order is
// channel, frame, row, column with the column index fastest; this matches the
// (k, c, t, h, w) order of the kernel bank file and the (k, t, h, w) flatten
// order of the classifier.
class Volume {
 public:
  Volume() = default;
  explicit Volume(Extents extents, std::size_t channels = 1, double fill = 0.0);
  Volume(Extents extents, std::size_t channels, std::vector<double> values);

  const Extents& extents() const { return extents_; }
  std::size_t channels() const { return channels_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::size_t index(std::size_t h, std::size_t w, std::size_t t, std::size_t c = 0) const {
    return ((c * extents_.frames + t) * extents_.height + h) * extents_.width + w;
  }
  double& at(std::size_t h, std::size_t w, std::size_t t, std::size_t c = 0) {
    return values_[index(h, w, t, c)];
  }
  double at(std::size_t h, std::size_t w, std::size_t t, std::size_t c = 0) const {
    return values_[index(h, w, t, c)];
  }

  std::span<double> channel(std::size_t c);
  std::span<const double> channel(std::size_t c) const;
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  double min() const;
  double max() const;
  double max_abs() const;

  bool operator==(const Volume&) const = default;

 private:
  Extents extents_{};
  std::size_t channels_ = 0;
  std::vector<double> values_;
};

// Non-negative intensity volume with every value in [0, 1].
class VideoVolume {
 public:
  VideoVolume() = default;
  // Throws DimensionError on empty extents and EncodingError on values
  // outside [0, 1].
  explicit VideoVolume(Volume volume);

  const Volume& volume() const { return volume_; }
  const Extents& extents() const { return volume_.extents(); }
  std::size_t channels() const { return volume_.channels(); }

  bool operator==(const VideoVolume&) const = default;

 private:
  Volume volume_;
};

// Signed K-channel feature maps; channel k is the output of kernel k.
using FeatureVolume = Volume;

struct KernelShape {
  std::size_t k_h = 0;
  std::size_t k_w = 0;
  std::size_t k_t = 0;
  std::size_t c_in = 1;

  Extents extents() const { return {k_h, k_w, k_t}; }
  std::size_t weights() const { return k_h * k_w * k_t * c_in; }
  bool operator==(const KernelShape&) const = default;
};

// Reverses a kernel along height, width and time (channels untouched).
Volume flip_kernel(const Volume& kernel);

// Largest elementwise |a - b| / max(1, |b|).
double relative_error(const Volume& a, const Volume& b);

}  // namespace sthc
