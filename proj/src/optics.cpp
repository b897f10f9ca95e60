#include "sthc/optics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sthc/errors.hpp"

namespace sthc {

void Diagnostics::warn(std::string code, std::string message) {
  warnings.push_back({std::move(code), std::move(message)});
}

bool Diagnostics::has(std::string_view code) const {
  return std::any_of(warnings.begin(), warnings.end(),
                     [&](const Warning& w) { return w.code == code; });
}

double echo_time(const EchoTiming& timing) {
  if (!(timing.t_pulse < timing.t_second && timing.t_second < timing.t_third)) {
    std::ostringstream msg;
    msg << "signal order violated: need t_pulse < t_second < t_third, got " << timing.t_pulse
        << ", " << timing.t_second << ", " << timing.t_third;
    throw TimingError(msg.str());
  }
  return timing.t_second + timing.t_third - timing.t_pulse;
}

OpticalParams OpticalParams::ideal() {
  OpticalParams p;
  p.mode = PulseMode::ideal;
  p.slm_levels.reset();
  p.coherence_lifetime = std::numeric_limits<double>::infinity();
  return p;
}

void OpticalParams::validate() const {
  if (!(pulse_radius >= 1.0)) throw ParameterError("pulse_radius must be >= 1 pixel");
  if (!(ihb_bandwidth > 0.0)) throw ParameterError("ihb_bandwidth must be positive");
  if (!(coherence_lifetime > 0.0)) throw ParameterError("coherence_lifetime must be positive");
  if (slm_levels && *slm_levels < 2) throw ParameterError("slm_levels must be >= 2");
  if (!(flatness_min > 0.0 && flatness_min <= 1.0)) {
    throw ParameterError("flatness_min must lie in (0, 1]");
  }
  (void)echo_time(timing);
}

RecordingPulse make_recording_pulse(const OpticalParams& params, const Extents& grid,
                                    Diagnostics* diagnostics) {
  if (grid.count() == 0) throw DimensionError("pulse grid must be non-empty");
  const std::size_t ch = grid.height / 2;
  const std::size_t cw = grid.width / 2;

  RecordingPulse pulse;
  pulse.field = Volume(grid);
  if (params.mode == PulseMode::ideal) {
    pulse.field.at(ch, cw, 0) = 1.0;
    pulse.spectrum = Spectrum3D(grid, Complex{1.0, 0.0});
    pulse.flatness = 1.0;
    return pulse;
  }

  const double r = params.pulse_radius;
  if (!(r >= 1.0) || r > static_cast<double>(std::max(grid.height, grid.width))) {
    throw ParameterError("pulse_radius does not fit the SLM grid");
  }
  Volume centred(grid);
  for (std::size_t y = 0; y < grid.height; ++y)
    for (std::size_t x = 0; x < grid.width; ++x) {
      const double dy = static_cast<double>(y) - static_cast<double>(ch);
      const double dx = static_cast<double>(x) - static_cast<double>(cw);
      if (dy * dy + dx * dx < r * r) {
        pulse.field.at(y, x, 0) = 1.0;
        centred.at((y + grid.height - ch) % grid.height, (x + grid.width - cw) % grid.width, 0) = 1.0;
      }
    }
  require_slm_encodable(pulse.field, "recording pulse");
  pulse.spectrum = forward_st_fft(centred, grid);

  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (const Complex& z : pulse.spectrum.bins()) {
    lo = std::min(lo, std::abs(z));
    hi = std::max(hi, std::abs(z));
  }
  pulse.flatness = hi > 0.0 ? lo / hi : 0.0;
  if (pulse.flatness < params.flatness_min && diagnostics != nullptr) {
    std::ostringstream msg;
    msg << "recording pulse spectrum flatness " << pulse.flatness << " is below the minimum "
        << params.flatness_min << " (radius " << r << " px)";
    diagnostics->warn("bandwidth", msg.str());
  }
  return pulse;
}

SignedKernelPair decompose_kernel(const Volume& kernel) {
  SignedKernelPair pair{Volume(kernel.extents(), kernel.channels()),
                        Volume(kernel.extents(), kernel.channels())};
  auto src = kernel.values();
  auto pos = pair.positive.values();
  auto neg = pair.negative.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    pos[i] = std::max(src[i], 0.0);
    neg[i] = std::max(-src[i], 0.0);
  }
  return pair;
}

void require_slm_encodable(const Volume& field, std::string_view what) {
  for (double v : field.values()) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw EncodingError(std::string(what) +
                          " holds a negative or non-finite value; signed data must be "
                          "decomposed before SLM encoding");
    }
  }
}

Volume quantize_slm(const Volume& field, int levels) {
  if (levels < 2) throw ParameterError("quantization needs at least 2 levels");
  require_slm_encodable(field, "SLM field");
  const double top = field.max();
  if (top == 0.0) return field;
  const double steps = static_cast<double>(levels - 1);
  Volume out(field.extents(), field.channels());
  auto src = field.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double j = std::round(src[i] / top * steps);
    dst[i] = j >= steps ? top : j * top / steps;
  }
  return out;
}

double grating_decay(const EchoTiming& timing, const OpticalParams& params) {
  (void)echo_time(timing);
  if (std::isinf(params.coherence_lifetime)) return 1.0;
  return std::exp(-(timing.t_third - timing.t_second) / params.coherence_lifetime);
}

GratingField record_grating(const Spectrum3D& pulse, const Spectrum3D& kernel_spectrum,
                            const EchoTiming& timing, const OpticalParams& params,
                            Diagnostics* diagnostics) {
  if (pulse.grid() != kernel_spectrum.grid()) {
    throw DimensionError("pulse and kernel spectra live on different grids");
  }
  GratingField grating{Spectrum3D(pulse.grid()), grating_decay(timing, params)};
  const double interval = timing.t_third - timing.t_second;
  if (interval > 5.0 * params.coherence_lifetime && diagnostics != nullptr) {
    std::ostringstream msg;
    msg << "storage interval " << interval << " s exceeds five coherence lifetimes ("
        << params.coherence_lifetime << " s); grating decayed by " << grating.decay;
    diagnostics->warn("decay", msg.str());
  }
  auto p = pulse.bins();
  auto k = kernel_spectrum.bins();
  auto g = grating.field.bins();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::conj(p[i]) * k[i] * grating.decay;
  return grating;
}

namespace {

Extents grating_grid(const Extents& video, const KernelShape& shape) {
  return {video.height + shape.k_h - 1, video.width + shape.k_w - 1, video.frames + shape.k_t - 1};
}

Volume echo_readout(const Spectrum3D& video_spectrum, const GratingField& grating,
                    const KernelShape& shape, const Extents& output) {
  Spectrum3D echo(grating.field.grid());
  auto v = video_spectrum.bins();
  auto g = grating.field.bins();
  auto e = echo.bins();
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = v[i] * g[i];
  return inverse_st_fft(echo, output, {shape.k_h - 1, shape.k_w - 1, shape.k_t - 1});
}

}  // namespace

Volume diffract_and_readout(const VideoVolume& video, const GratingField& grating,
                            const KernelShape& kernel_shape) {
  if (video.channels() != 1) throw DimensionError("optical readout takes a single-channel video");
  const Extents output = valid_extents(video.extents(), kernel_shape.extents());
  const Extents grid = grating_grid(video.extents(), kernel_shape);
  if (grating.field.grid() != grid) {
    throw DimensionError("grating grid must equal video + kernel - 1 on every axis");
  }
  require_slm_encodable(video.volume(), "video");
  return echo_readout(forward_st_fft(video.volume(), grid), grating, kernel_shape, output);
}

namespace {

PlaneExtents footprint(PlaneExtents map, PlaneExtents tile) {
  return {tile.height + map.height, tile.width + map.width};
}

PlaneExtents canvas_for(std::size_t tiles, std::size_t columns, PlaneExtents foot,
                        std::size_t guard) {
  const std::size_t rows = (tiles + columns - 1) / columns;
  return {rows * foot.height + (rows - 1) * guard, columns * foot.width + (columns - 1) * guard};
}

}  // namespace

SlmFrameLayout grid_layout(std::size_t num_kernels, PlaneExtents map, PlaneExtents tile,
                           std::size_t guard_px, PlaneExtents canvas, std::size_t columns,
                           PlaneExtents pitch) {
  SlmFrameLayout layout{canvas, map, guard_px, {}};
  for (std::size_t i = 0; i < 2 * num_kernels; ++i) {
    layout.tiles.push_back({i, (i / columns) * pitch.height, (i % columns) * pitch.width, tile});
  }
  return layout;
}

PlaneExtents minimal_canvas(std::size_t num_kernels, PlaneExtents map, PlaneExtents tile,
                            std::size_t guard_px) {
  const std::size_t tiles = 2 * num_kernels;
  const PlaneExtents foot = footprint(map, tile);
  PlaneExtents best{};
  std::size_t best_area = 0;
  for (std::size_t columns = 1; columns <= tiles; ++columns) {
    const PlaneExtents c = canvas_for(tiles, columns, foot, guard_px);
    const std::size_t area = c.height * c.width;
    if (best_area == 0 || area <= best_area) {
      best = c;
      best_area = area;
    }
  }
  return best;
}

SlmFrameLayout plan_slm_layout(std::size_t num_kernels, PlaneExtents map, PlaneExtents tile,
                               std::size_t guard_px, PlaneExtents canvas) {
  if (num_kernels == 0) throw ParameterError("layout needs at least one kernel");
  if (tile.height == 0 || tile.width == 0) throw ParameterError("tile extents must be positive");
  const std::size_t tiles = 2 * num_kernels;
  const PlaneExtents foot = footprint(map, tile);
  for (std::size_t columns = tiles; columns >= 1; --columns) {
    const PlaneExtents need = canvas_for(tiles, columns, foot, guard_px);
    if (need.height <= canvas.height && need.width <= canvas.width) {
      const PlaneExtents pitch{foot.height + guard_px, foot.width + guard_px};
      SlmFrameLayout layout = grid_layout(num_kernels, map, tile, guard_px, canvas, columns, pitch);
      validate_layout(layout);
      return layout;
    }
  }
  const PlaneExtents min = minimal_canvas(num_kernels, map, tile, guard_px);
  std::ostringstream msg;
  msg << "canvas " << canvas.height << "x" << canvas.width << " cannot hold " << tiles
      << " tiles; minimum canvas is " << min.height << "x" << min.width;
  throw LayoutCapacityError(msg.str(), min.height, min.width);
}

std::vector<std::pair<std::size_t, std::size_t>> overlapping_tiles(const SlmFrameLayout& layout) {
  std::vector<std::pair<std::size_t, std::size_t>> hits;
  const auto& ts = layout.tiles;
  for (std::size_t a = 0; a < ts.size(); ++a)
    for (std::size_t b = a + 1; b < ts.size(); ++b) {
      const PlaneExtents fa = footprint(layout.map, ts[a].extents);
      const PlaneExtents fb = footprint(layout.map, ts[b].extents);
      const bool rows = ts[a].top < ts[b].top + fb.height && ts[b].top < ts[a].top + fa.height;
      const bool cols = ts[a].left < ts[b].left + fb.width && ts[b].left < ts[a].left + fa.width;
      if (rows && cols) hits.emplace_back(a, b);
    }
  return hits;
}

void validate_layout(const SlmFrameLayout& layout) {
  for (const SlmTile& t : layout.tiles) {
    if (t.top + t.extents.height > layout.canvas.height ||
        t.left + t.extents.width > layout.canvas.width) {
      std::ostringstream msg;
      msg << "tile for channel " << t.channel << " lies outside the " << layout.canvas.height
          << "x" << layout.canvas.width << " canvas";
      throw LayoutError(msg.str());
    }
  }
  const auto hits = overlapping_tiles(layout);
  if (!hits.empty()) {
    std::ostringstream msg;
    msg << "crosstalk: expanded tiles of channels " << layout.tiles[hits.front().first].channel
        << " and " << layout.tiles[hits.front().second].channel << " overlap (" << hits.size()
        << " overlapping pairs)";
    throw LayoutError(msg.str());
  }
}

bool check_bandwidth(const VideoVolume& video, double frame_interval, const OpticalParams& params,
                     Diagnostics* diagnostics) {
  if (!(frame_interval > 0.0)) throw ParameterError("frame_interval must be positive");
  const double sampling = 2.0 * std::numbers::pi / frame_interval;
  // Relative slack absorbs rounding when the two sides are equal by
  // construction (e.g. 2*pi / 10 ns against 2*pi * 100 MHz).
  const bool pass = sampling <= params.ihb_bandwidth * (1.0 + 1e-12);
  if (!pass && diagnostics != nullptr) {
    std::ostringstream msg;
    msg << "temporal sampling bandwidth " << sampling << " rad/s of a " << video.extents().frames
        << "-frame video exceeds the inhomogeneous broadening " << params.ihb_bandwidth
        << " rad/s";
    diagnostics->warn("bandwidth", msg.str());
  }
  return pass;
}

OpticalConvLayer::OpticalConvLayer(const KernelSet& kernels, const Extents& video_extents,
                                   const OpticalParams& params, const SlmFrameLayout& layout,
                                   Diagnostics* diagnostics)
    : shape_(kernels.shape), video_(video_extents) {
  params.validate();
  kernels.validate();
  if (shape_.c_in != 1) throw ParameterError("the optical layer encodes single-channel kernels");
  output_ = valid_extents(video_, shape_.extents());
  grid_ = grating_grid(video_, shape_);

  if (layout.tiles.size() != 2 * kernels.count()) {
    std::ostringstream msg;
    msg << "layout has " << layout.tiles.size() << " tiles, " << 2 * kernels.count()
        << " optical channels required";
    throw LayoutError(msg.str());
  }
  for (const SlmTile& t : layout.tiles) {
    if (t.extents.height != shape_.k_h || t.extents.width != shape_.k_w) {
      throw LayoutError("layout tile extents differ from the kernel extents");
    }
  }
  if (layout.map.height < output_.height || layout.map.width < output_.width) {
    throw LayoutError("layout reserves less room than the output maps need");
  }
  validate_layout(layout);

  pulse_ = make_recording_pulse(params, grid_, diagnostics);
  decay_ = grating_decay(params.timing, params);
  gratings_.reserve(2 * kernels.count());
  for (std::size_t k = 0; k < kernels.count(); ++k) {
    SignedKernelPair pair = decompose_kernel(flip_kernel(kernels.weights[k]));
    for (Volume* half : {&pair.positive, &pair.negative}) {
      if (params.slm_levels) *half = quantize_slm(*half, *params.slm_levels);
      require_slm_encodable(*half, "kernel half");
      gratings_.push_back(record_grating(pulse_.spectrum, forward_st_fft(*half, grid_),
                                         params.timing, params,
                                         gratings_.empty() ? diagnostics : nullptr));
    }
  }
  biases_ = kernels.biases;
}

Spectrum3D OpticalConvLayer::video_spectrum(const VideoVolume& video) const {
  if (video.extents() != video_ || video.channels() != 1) {
    throw DimensionError("video shape differs from the one the layer was built for");
  }
  require_slm_encodable(video.volume(), "video");
  return forward_st_fft(video.volume(), grid_);
}

Volume OpticalConvLayer::readout(const Spectrum3D& video_spectrum, std::size_t channel) const {
  return echo_readout(video_spectrum, gratings_.at(channel), shape_, output_);
}

Volume OpticalConvLayer::channel_output(const VideoVolume& video, std::size_t channel) const {
  return readout(video_spectrum(video), channel);
}

FeatureVolume OpticalConvLayer::subtracted(const VideoVolume& video) const {
  const Spectrum3D spectrum = video_spectrum(video);
  FeatureVolume out(output_, kernel_count());
  for (std::size_t k = 0; k < kernel_count(); ++k) {
    const Volume pos = readout(spectrum, 2 * k);
    const Volume neg = readout(spectrum, 2 * k + 1);
    auto dst = out.channel(k);
    auto p = pos.values();
    auto n = neg.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = p[i] - n[i];
  }
  return out;
}

FeatureVolume OpticalConvLayer::forward(const VideoVolume& video) const {
  FeatureVolume out = subtracted(video);
  for (std::size_t k = 0; k < kernel_count(); ++k)
    for (double& v : out.channel(k)) v = std::max(v + biases_[k], 0.0);
  return out;
}

FeatureVolume optical_conv_layer(const VideoVolume& video, const KernelSet& kernels,
                                 const OpticalParams& params, const SlmFrameLayout& layout,
                                 Diagnostics* diagnostics) {
  return OpticalConvLayer(kernels, video.extents(), params, layout, diagnostics).forward(video);
}

SlmFrameLayout default_layout(const KernelSet& kernels, const Extents& video_extents,
                              std::size_t guard_px) {
  const Extents out = valid_extents(video_extents, kernels.shape.extents());
  const PlaneExtents map{out.height, out.width};
  const PlaneExtents tile{kernels.shape.k_h, kernels.shape.k_w};
  return plan_slm_layout(kernels.count(), map, tile, guard_px,
                         minimal_canvas(kernels.count(), map, tile, guard_px));
}

}  // namespace sthc
