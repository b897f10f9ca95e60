#pragma once

#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sthc/kernel_set.hpp"
#include "sthc/spectral.hpp"
#include "sthc/volume.hpp"

namespace sthc {

// Non-fatal findings (bandwidth, decay) collected while simulating.
struct Warning {
  std::string code;
  std::string message;
};

struct Diagnostics {
  std::vector<Warning> warnings;

  void warn(std::string code, std::string message);
  bool has(std::string_view code) const;
};

enum class PulseMode { ideal, physical };

// Arrival times at the atomic medium. In CNN mode the second signal carries
// the kernels and the third the video; in event-recognition mode they are the
// query and the reference.
struct EchoTiming {
  double t_pulse = 0.0;
  double t_second = 1e-6;
  double t_third = 2e-6;
};

// Time of the stimulated echo, t_second + t_third - t_pulse. Throws
// TimingError unless t_pulse < t_second < t_third.
double echo_time(const EchoTiming& timing);

struct OpticalParams {
  PulseMode mode = PulseMode::ideal;
  double pulse_radius = 1.0;                                   // SLM pixels
  double ihb_bandwidth = 2.0 * std::numbers::pi * 1e8;         // rad/s
  double coherence_lifetime = std::numeric_limits<double>::infinity();  // s
  std::optional<int> slm_levels = 256;                         // nullopt: no quantization
  double flatness_min = 0.9;
  std::size_t guard_px = 4;
  EchoTiming timing{};

  // Ideal plane-wave pulse, no quantization, no decay.
  static OpticalParams ideal();
  void validate() const;
};

struct RecordingPulse {
  Volume field;         // SLM field on the grid, pulse in frame 0
  Spectrum3D spectrum;  // referenced to the pulse centre
  double flatness = 1.0;  // min |P| / max |P| over the grid
};

// ideal: spectrum identically 1. physical: a filled disc of pixels whose
// centres lie strictly within pulse_radius of the grid centre, one frame
// long; its DFT is taken about the disc centre so the echo is not displaced.
// A flatness below params.flatness_min adds a "bandwidth" warning.
RecordingPulse make_recording_pulse(const OpticalParams& params, const Extents& grid,
                                    Diagnostics* diagnostics = nullptr);

struct SignedKernelPair {
  Volume positive;
  Volume negative;
};

SignedKernelPair decompose_kernel(const Volume& kernel);

// Throws EncodingError if any value is negative or non-finite.
void require_slm_encodable(const Volume& field, std::string_view what);

// Snaps each value to the nearest of `levels` evenly spaced values over
// [0, max(field)].
Volume quantize_slm(const Volume& field, int levels);

struct GratingField {
  Spectrum3D field;
  double decay = 1.0;
};

// exp(-(t_third - t_second) / coherence_lifetime).
double grating_decay(const EchoTiming& timing, const OpticalParams& params);

// G = conj(P) * K * decay. Adds a "decay" warning when the storage interval
// exceeds five coherence lifetimes.
GratingField record_grating(const Spectrum3D& pulse, const Spectrum3D& kernel_spectrum,
                            const EchoTiming& timing, const OpticalParams& params,
                            Diagnostics* diagnostics = nullptr);

// Echo of a single-channel video off one grating, cropped to the valid
// region. The grating is expected to hold an already flipped kernel.
Volume diffract_and_readout(const VideoVolume& video, const GratingField& grating,
                            const KernelShape& kernel_shape);

struct PlaneExtents {
  std::size_t height = 0;
  std::size_t width = 0;
  bool operator==(const PlaneExtents&) const = default;
};

struct SlmTile {
  std::size_t channel = 0;  // 2k for K+, 2k+1 for K-
  std::size_t top = 0;
  std::size_t left = 0;
  PlaneExtents extents;
};

struct SlmFrameLayout {
  PlaneExtents canvas;
  PlaneExtents map;  // valid output-map extents each tile projects
  std::size_t guard_px = 0;
  std::vector<SlmTile> tiles;
};

// Row-major grid with K+ and K- of each kernel adjacent and pitch
// tile + map + guard per axis. Uses the largest column count that fits the
// canvas; throws LayoutCapacityError carrying the minimal canvas otherwise.
SlmFrameLayout plan_slm_layout(std::size_t num_kernels, PlaneExtents map, PlaneExtents tile,
                               std::size_t guard_px, PlaneExtents canvas);

// Smallest-area canvas that holds 2 * num_kernels tiles (ties: more columns).
PlaneExtents minimal_canvas(std::size_t num_kernels, PlaneExtents map, PlaneExtents tile,
                            std::size_t guard_px);

// Places tiles at an explicit pitch without any checks.
SlmFrameLayout grid_layout(std::size_t num_kernels, PlaneExtents map, PlaneExtents tile,
                           std::size_t guard_px, PlaneExtents canvas, std::size_t columns,
                           PlaneExtents pitch);

// Pairs of tiles whose expanded footprints (tile + map per axis) intersect.
std::vector<std::pair<std::size_t, std::size_t>> overlapping_tiles(const SlmFrameLayout& layout);

// Throws LayoutError on crosstalk or tiles outside the canvas.
void validate_layout(const SlmFrameLayout& layout);

// Passes iff 2*pi / frame_interval <= ihb_bandwidth; otherwise adds a
// "bandwidth" warning naming both numbers.
bool check_bandwidth(const VideoVolume& video, double frame_interval, const OpticalParams& params,
                     Diagnostics* diagnostics = nullptr);

// The STHC convolution stage: gratings for every K+ / K- channel are
// recorded once at construction and reused for each video.
class OpticalConvLayer {
 public:
  OpticalConvLayer(const KernelSet& kernels, const Extents& video_extents,
                   const OpticalParams& params, const SlmFrameLayout& layout,
                   Diagnostics* diagnostics = nullptr);

  std::size_t kernel_count() const { return biases_.size(); }
  const Extents& output_extents() const { return output_; }
  double decay() const { return decay_; }
  const RecordingPulse& pulse() const { return pulse_; }

  // Raw echo of optical channel `channel` (2k: K+, 2k+1: K-).
  Volume channel_output(const VideoVolume& video, std::size_t channel) const;
  // Positive minus negative channel per kernel, before bias and activation.
  FeatureVolume subtracted(const VideoVolume& video) const;
  // ReLU(subtracted + bias).
  FeatureVolume forward(const VideoVolume& video) const;

 private:
  Spectrum3D video_spectrum(const VideoVolume& video) const;
  Volume readout(const Spectrum3D& video_spectrum, std::size_t channel) const;

  KernelShape shape_;
  Extents video_;
  Extents output_;
  Extents grid_;
  RecordingPulse pulse_;
  double decay_ = 1.0;
  std::vector<GratingField> gratings_;
  std::vector<double> biases_;
};

FeatureVolume optical_conv_layer(const VideoVolume& video, const KernelSet& kernels,
                                 const OpticalParams& params, const SlmFrameLayout& layout,
                                 Diagnostics* diagnostics = nullptr);

// Layout planned on the minimal canvas for a kernel set applied to videos of
// the given extents.
SlmFrameLayout default_layout(const KernelSet& kernels, const Extents& video_extents,
                              std::size_t guard_px);

}  // namespace sthc
