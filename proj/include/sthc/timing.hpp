#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace sthc {

// Minimum per-frame loading time set by the inhomogeneous broadening:
// 1 / ihb_bandwidth (rad/s).
double frame_load_time(double ihb_bandwidth);

// A database of duration t3 cut into segments of duration t2 that overlap by
// the query duration t1, so any query window lies wholly inside one segment.
struct SegmentationPlan {
  double t1 = 0.0;
  double t2 = 0.0;
  double t3 = 0.0;
  std::vector<double> segment_starts;

  std::size_t count() const { return segment_starts.size(); }
};

// Starts at 0, (t2 - t1), 2 (t2 - t1), ... with the last segment clamped to
// t3 - t2. Throws ParameterError unless 0 < t1 < t2 <= t3.
SegmentationPlan segmentation_plan(double t1, double t2, double t3);

struct ThroughputReport {
  std::optional<double> frame_load_time;
  double device_fps = 0.0;
  double digital_fps = 0.0;
  double speedup = 0.0;
  bool exceeds_two_orders = false;  // speedup > 100
};

ThroughputReport throughput_report(double device_fps, double digital_fps);
ThroughputReport throughput_report(double device_fps, double digital_fps, double ihb_bandwidth);

}  // namespace sthc
