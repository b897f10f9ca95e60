#pragma once

// Reference implementations that share no code with the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

#include "sthc/cnn.hpp"
#include "sthc/volume.hpp"

namespace oracle {

// Second, independently written loop nest for Y = sum W[m,n,tau] X[i+m,j+n,t+tau]
// on a flat [t][h][w] buffer. Output index runs over the valid region.
inline std::vector<double> correlate(const std::vector<double>& x, std::size_t xh, std::size_t xw,
                                     std::size_t xt, const std::vector<double>& k, std::size_t kh,
                                     std::size_t kw, std::size_t kt) {
  const std::size_t oh = xh - kh + 1, ow = xw - kw + 1, ot = xt - kt + 1;
  std::vector<double> y(oh * ow * ot, 0.0);
  for (std::size_t o = 0; o < y.size(); ++o) {
    const std::size_t t = o / (oh * ow);
    const std::size_t i = (o / ow) % oh;
    const std::size_t j = o % ow;
    long double acc = 0.0L;
    for (std::size_t q = 0; q < k.size(); ++q) {
      const std::size_t tau = q / (kh * kw);
      const std::size_t m = (q / kw) % kh;
      const std::size_t n = q % kw;
      acc += static_cast<long double>(k[q]) * x[((t + tau) * xh + (i + m)) * xw + (j + n)];
    }
    y[o] = static_cast<double>(acc);
  }
  return y;
}

inline sthc::Volume correlate(const sthc::Volume& x, const sthc::Volume& k) {
  const sthc::Extents xe = x.extents(), ke = k.extents();
  std::vector<double> xv(x.values().begin(), x.values().end());
  std::vector<double> kv(k.values().begin(), k.values().end());
  std::vector<double> y = correlate(xv, xe.height, xe.width, xe.frames, kv, ke.height, ke.width, ke.frames);
  return sthc::Volume({xe.height - ke.height + 1, xe.width - ke.width + 1, xe.frames - ke.frames + 1}, 1,
                      std::move(y));
}

inline sthc::Volume random_volume(std::mt19937_64& rng, sthc::Extents e, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  sthc::Volume v(e);
  for (double& x : v.values()) x = u(rng);
  return v;
}

// Does every window [q, q + t1] with 0 <= q <= t3 - t1 sit inside some
// segment? Sweeps q on a grid of step <= t1 / 100 plus every segment edge.
inline bool covers(const std::vector<double>& starts, double t1, double t2, double t3) {
  const double tol = 1e-9 * std::max(1.0, t3);
  for (double s : starts)
    if (s < -tol || s + t2 > t3 + tol) return false;
  std::vector<double> qs;
  const double span = t3 - t1;
  const std::size_t steps = static_cast<std::size_t>(std::ceil(span / (t1 / 100.0))) + 1;
  for (std::size_t i = 0; i <= steps; ++i) qs.push_back(span * static_cast<double>(i) / static_cast<double>(steps));
  for (double s : starts) {
    for (double q : {s, s + t2 - t1}) {
      for (double d : {-1e-7, 0.0, 1e-7}) {
        const double qq = q + d * t1;
        if (qq >= 0.0 && qq <= span) qs.push_back(qq);
      }
    }
  }
  for (double q : qs) {
    bool inside = false;
    for (double s : starts) {
      if (s <= q + tol && q + t1 <= s + t2 + tol) {
        inside = true;
        break;
      }
    }
    if (!inside) return false;
  }
  return true;
}

// Smallest N whose evenly spaced plan (starts k (t3 - t2) / (N - 1)) covers
// every window, found by trying N = 1, 2, ...
inline std::size_t minimal_uniform_count(double t1, double t2, double t3) {
  for (std::size_t n = 1;; ++n) {
    std::vector<double> starts;
    if (n == 1) {
      starts.push_back(0.0);
    } else {
      for (std::size_t k = 0; k < n; ++k)
        starts.push_back((t3 - t2) * static_cast<double>(k) / static_cast<double>(n - 1));
    }
    if (covers(starts, t1, t2, t3)) return n;
  }
}

// Mean cross-entropy through plain loops, for finite differences.
inline double loss(const sthc::Model& model, const std::vector<sthc::LabeledClip>& clips) {
  const sthc::KernelSet& ks = model.kernels;
  double total = 0.0;
  for (const sthc::LabeledClip& clip : clips) {
    std::vector<double> features;
    for (std::size_t k = 0; k < ks.count(); ++k) {
      const sthc::Volume y = correlate(clip.video.volume(), ks.weights[k]);
      for (double v : y.values()) features.push_back(std::max(v + ks.biases[k], 0.0));
    }
    const auto& h = model.head;
    std::vector<double> logits(h.num_classes);
    for (std::size_t c = 0; c < h.num_classes; ++c) {
      double z = h.bias[c];
      for (std::size_t i = 0; i < features.size(); ++i) z += h.weights[c * h.feature_length + i] * features[i];
      logits[c] = z;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double s = 0.0;
    for (double z : logits) s += std::exp(z - mx);
    total += -(logits[clip.label] - mx - std::log(s));
  }
  return total / static_cast<double>(clips.size());
}

// Central difference with step h for one parameter addressed by `param`.
inline double central_difference(sthc::Model& model, const std::vector<sthc::LabeledClip>& clips,
                                 double& param, double h) {
  const double saved = param;
  param = saved + h;
  const double up = loss(model, clips);
  param = saved - h;
  const double down = loss(model, clips);
  param = saved;
  return (up - down) / (2.0 * h);
}

}  // namespace oracle
