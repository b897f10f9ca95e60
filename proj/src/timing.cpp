#include "sthc/timing.hpp"

#include <algorithm>
#include <cmath>

#include "sthc/errors.hpp"

namespace sthc {

double frame_load_time(double ihb_bandwidth) {
  if (!(ihb_bandwidth > 0.0) || !std::isfinite(ihb_bandwidth)) {
    throw ParameterError("inhomogeneous broadening must be positive");
  }
  return 1.0 / ihb_bandwidth;
}

SegmentationPlan segmentation_plan(double t1, double t2, double t3) {
  if (!(t1 > 0.0) || !std::isfinite(t3)) throw ParameterError("durations must be positive and finite");
  if (!(t1 < t2)) throw ParameterError("infeasible overlap: query duration t1 must be shorter than t2");
  if (!(t2 <= t3)) throw ParameterError("segment duration t2 must not exceed the database t3");

  SegmentationPlan plan{t1, t2, t3, {}};
  const double step = t2 - t1;
  const double span = t3 - t2;
  std::size_t n = 1;
  if (span > 0.0) {
    // Ratios a few ulps above an integer are rounding noise, not a real gap.
    const double ratio = span / step;
    const double whole = std::round(ratio);
    const double segments = std::abs(ratio - whole) <= 1e-9 * std::max(1.0, whole) ? whole
                                                                                   : std::ceil(ratio);
    n = 1 + static_cast<std::size_t>(segments);
  }
  for (std::size_t i = 0; i + 1 < n; ++i) plan.segment_starts.push_back(static_cast<double>(i) * step);
  plan.segment_starts.push_back(n == 1 ? 0.0 : span);
  return plan;
}

ThroughputReport throughput_report(double device_fps, double digital_fps) {
  if (!(device_fps > 0.0) || !(digital_fps > 0.0)) {
    throw ParameterError("frame rates must be positive");
  }
  ThroughputReport r;
  r.device_fps = device_fps;
  r.digital_fps = digital_fps;
  r.speedup = device_fps / digital_fps;
  r.exceeds_two_orders = r.speedup > 100.0;
  return r;
}

ThroughputReport throughput_report(double device_fps, double digital_fps, double ihb_bandwidth) {
  ThroughputReport r = throughput_report(device_fps, digital_fps);
  r.frame_load_time = frame_load_time(ihb_bandwidth);
  return r;
}

}  // namespace sthc
