// Acceptance suite: one PASS/FAIL/SKIP line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "sthc/cnn.hpp"
#include "sthc/data_io.hpp"
#include "sthc/optics.hpp"
#include "sthc/spectral.hpp"
#include "sthc/timing.hpp"

using namespace sthc;

namespace {

enum class Outcome { pass, fail, skip };

struct Verdict {
  Outcome outcome;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Verdict oracle_equivalence() {
  const auto start = Clock::now();
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> hw(1, 8), t(1, 6), khw(1, 3), kt(1, 2);
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const Extents xe{hw(rng), hw(rng), t(rng)};
    const Extents ke{std::min(khw(rng), xe.height), std::min(khw(rng), xe.width), std::min(kt(rng), xe.frames)};
    const Volume x = oracle::random_volume(rng, xe, 0.0, 1.0);
    const Volume k = oracle::random_volume(rng, ke, -1.0, 1.0);
    worst = std::max(worst, relative_error(fft_conv3d(x, k), direct_conv3d(x, k)));
  }
  const double secs = seconds_since(start);
  const bool ok = worst <= 1e-9 && secs < 10.0;
  return {ok ? Outcome::pass : Outcome::fail, fmt("50 instances, max rel err %.3g, %.2f s", worst, secs)};
}

Verdict optical_parity() {
  const auto start = Clock::now();
  const Extents ve{60, 80, 16};
  const Model model = init_model(ModelConfig{}, ve, 2);
  const SyntheticDataset ds = synth_dataset(7, 1, ClipSpec{});
  const VideoVolume& video = ds.clips.front();
  const SlmFrameLayout layout = default_layout(model.kernels, ve, 4);
  const FeatureVolume optical = OpticalConvLayer(model.kernels, ve, OpticalParams::ideal(), layout).subtracted(video);
  const FeatureVolume digital = DigitalConvLayer(model.kernels, ve).pre_activation(video);
  const double err = relative_error(optical, digital);
  const double secs = seconds_since(start);
  const bool ok = err <= 1e-6 && secs < 60.0 && optical.extents() == Extents{31, 41, 9} && optical.channels() == 9;
  return {ok ? Outcome::pass : Outcome::fail,
          fmt("nine 30x40x8 kernels on 60x80x16, max rel err %.3g, %.2f s", err, secs)};
}

Verdict pseudo_negative() {
  std::mt19937_64 rng(3);
  double worst = 0.0;
  const Extents ve{10, 12, 6};
  for (int i = 0; i < 20; ++i) {
    const Volume x = oracle::random_volume(rng, ve, 0.0, 1.0);
    const Volume k = oracle::random_volume(rng, {3, 4, 2}, -1.0, 1.0);
    const SignedKernelPair pair = decompose_kernel(k);
    const Volume yp = direct_conv3d(x, pair.positive), yn = direct_conv3d(x, pair.negative);
    Volume diff(yp.extents());
    for (std::size_t j = 0; j < diff.size(); ++j) diff.values()[j] = yp.values()[j] - yn.values()[j];
    const Volume signed_out = direct_conv3d(x, k);
    worst = std::max(worst, relative_error(diff, signed_out));

    KernelSet ks{{3, 4, 2, 1}, {k}, {0.0}};
    const OpticalConvLayer layer(ks, ve, OpticalParams::ideal(), default_layout(ks, ve, 4));
    const VideoVolume video(x);
    const Volume op = layer.channel_output(video, 0), on = layer.channel_output(video, 1);
    Volume odiff(op.extents());
    for (std::size_t j = 0; j < odiff.size(); ++j) odiff.values()[j] = op.values()[j] - on.values()[j];
    worst = std::max(worst, relative_error(odiff, signed_out));
  }
  return {worst <= 1e-12 ? Outcome::pass : Outcome::fail,
          fmt("20 signed kernels, direct and optical channels, max rel err %.3g", worst)};
}

Verdict gradient_check() {
  std::mt19937_64 rng(4);
  std::vector<LabeledClip> clips;
  for (std::size_t i = 0; i < 4; ++i) clips.push_back({VideoVolume(oracle::random_volume(rng, {6, 6, 4}, 0.0, 1.0)), i % 2});
  Model model = init_model({2, {3, 3, 2, 1}, 2}, {6, 6, 4}, 5);
  model.kernels.biases = {0.05, -0.05};
  std::vector<std::size_t> batch(clips.size());
  std::iota(batch.begin(), batch.end(), 0);
  const Gradients g = compute_gradients(model, clips, batch);
  const double h = 1e-5;
  double worst = 0.0;
  auto track = [&](double analytic, double& param) {
    const double fd = oracle::central_difference(model, clips, param, h);
    worst = std::max(worst, std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-6}));
  };
  std::size_t n = 0;
  for (std::size_t k = 0; k < 2; ++k) {
    auto w = model.kernels.weights[k].values();
    for (std::size_t i = 0; i < w.size(); ++i, ++n) track(g.kernel_weights[k].values()[i], w[i]);
    track(g.kernel_biases[k], model.kernels.biases[k]);
    ++n;
  }
  for (std::size_t i = 0; i < model.head.weights.size(); ++i, ++n) track(g.head_weights[i], model.head.weights[i]);
  for (std::size_t c = 0; c < 2; ++c, ++n) track(g.head_bias[c], model.head.bias[c]);
  return {worst <= 1e-4 ? Outcome::pass : Outcome::fail,
          fmt("%zu parameters, max rel err %.3g", n, worst)};
}

Verdict synthetic_end_to_end() {
  const auto start = Clock::now();
  const SyntheticDataset ds = synth_dataset(7, 25, ClipSpec{});
  const auto train_set = labeled_clips(ds, Split::train);
  const auto val_set = labeled_clips(ds, Split::validation);
  const auto test_set = labeled_clips(ds, Split::test);

  const TrainResult full = train(train_set, val_set, ModelConfig{}, TrainConfig{});
  const auto digital_logits = predict_logits(full.model, test_set, EvalMode::digital);
  const auto hybrid_logits = predict_logits(full.model, test_set, EvalMode::hybrid, OpticalParams::ideal());
  std::size_t agree = 0, digital_hits = 0, hybrid_hits = 0;
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    const std::size_t d = argmax(digital_logits[i]), h = argmax(hybrid_logits[i]);
    agree += d == h ? 1 : 0;
    digital_hits += d == test_set[i].label ? 1 : 0;
    hybrid_hits += h == test_set[i].label ? 1 : 0;
  }
  const double n = static_cast<double>(test_set.size());
  const double digital_acc = digital_hits / n, hybrid_acc = hybrid_hits / n;

  ModelConfig single = ModelConfig{};
  single.kernel.k_t = 1;
  const TrainResult ablation = train(train_set, val_set, single, TrainConfig{});
  const double ablation_acc = evaluate(ablation.model, test_set, EvalMode::digital).accuracy;
  const double secs = seconds_since(start);

  const bool ok = digital_acc >= 0.90 && std::abs(hybrid_acc - digital_acc) <= 0.02 && agree == test_set.size() &&
                  ablation_acc < digital_acc && secs < 900.0;
  return {ok ? Outcome::pass : Outcome::fail,
          fmt("test acc digital %.4f, hybrid %.4f, argmax agreement %zu/%zu, k_t=1 ablation %.4f, %.0f s",
              digital_acc, hybrid_acc, agree, test_set.size(), ablation_acc, secs)};
}

Verdict timing_arithmetic() {
  const double load = frame_load_time(6.28e8);
  const ThroughputReport fast = throughput_report(125000, 400);
  const ThroughputReport slm = throughput_report(1666, 400);
  const bool ok = load >= 1.55e-9 && load <= 1.65e-9 && fast.speedup == 312.5 && fast.exceeds_two_orders &&
                  slm.speedup >= 4.1 && slm.speedup <= 4.2;
  return {ok ? Outcome::pass : Outcome::fail,
          fmt("load time %.4g s, speedups %.4g and %.4g", load, fast.speedup, slm.speedup)};
}

Verdict segmentation() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t covered = 0, minimal = 0;
  for (int i = 0; i < 200; ++i) {
    const double t1 = 0.05 + 5.0 * u(rng);
    const double t2 = t1 * (1.01 + 6.0 * u(rng));
    const double t3 = u(rng) < 0.1 ? t2 : t2 * (1.0 + 12.0 * u(rng));
    const SegmentationPlan plan = segmentation_plan(t1, t2, t3);
    covered += oracle::covers(plan.segment_starts, t1, t2, t3) ? 1 : 0;
    minimal += plan.count() == oracle::minimal_uniform_count(t1, t2, t3) ? 1 : 0;
  }
  return {covered == 200 && minimal == 200 ? Outcome::pass : Outcome::fail,
          fmt("200 triples, %zu covered, %zu minimal", covered, minimal)};
}

Verdict parameter_count() {
  const std::size_t three = param_count({7, 7, 7, 1}, 1), two = param_count({7, 7, 1, 1}, 1);
  return {three == 343 && two == 49 ? Outcome::pass : Outcome::fail, fmt("7x7x7 -> %zu, 7x7 -> %zu", three, two)};
}

Verdict kth_reproduction() {
  const char* path = std::getenv("STHC_KTH_MANIFEST");
  if (path == nullptr || *path == '\0') return {Outcome::skip, "set STHC_KTH_MANIFEST to a KTH manifest to run"};
  const DatasetManifest manifest = read_manifest(path);
  const SplitManifests parts = split_by_subject(manifest);
  const ClipSpec spec;
  const auto train_set = load_clips(parts.train, spec);
  const auto val_set = load_clips(parts.validation, spec);
  const auto test_set = load_clips(parts.test, spec);
  const TrainResult result = train(train_set, val_set, ModelConfig{}, TrainConfig{});
  const auto digital = predict_logits(result.model, test_set, EvalMode::digital);
  const auto hybrid = predict_logits(result.model, test_set, EvalMode::hybrid, OpticalParams::ideal());
  double worst = 0.0;
  std::size_t hits = 0, agree = 0;
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    for (std::size_t c = 0; c < digital[i].size(); ++c)
      worst = std::max(worst, std::abs(hybrid[i][c] - digital[i][c]) / std::max(1.0, std::abs(digital[i][c])));
    hits += argmax(hybrid[i]) == test_set[i].label ? 1 : 0;
    agree += argmax(hybrid[i]) == argmax(digital[i]) ? 1 : 0;
  }
  const double acc = static_cast<double>(hits) / static_cast<double>(test_set.size());
  const bool ok = worst <= 1e-6 && agree == test_set.size() && acc >= 0.35;
  return {ok ? Outcome::pass : Outcome::fail,
          fmt("split %zu/%zu/%zu, hybrid test acc %.4f (band 0.50-0.70 %s), logit rel err %.3g",
              train_set.size(), val_set.size(), test_set.size(), acc, acc >= 0.5 && acc <= 0.7 ? "met" : "missed", worst)};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Verdict()>> criteria[] = {
      {"oracle equivalence", oracle_equivalence},
      {"optical parity", optical_parity},
      {"pseudo-negative identity", pseudo_negative},
      {"gradient check", gradient_check},
      {"synthetic end-to-end", synthetic_end_to_end},
      {"timing arithmetic", timing_arithmetic},
      {"segmentation", segmentation},
      {"parameter count", parameter_count},
      {"KTH reproduction", kth_reproduction},
  };
  int failures = 0;
  int index = 1;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {Outcome::fail, std::string("exception: ") + e.what()};
    }
    const char* tag = v.outcome == Outcome::pass ? "PASS" : v.outcome == Outcome::skip ? "SKIP" : "FAIL";
    std::cout << tag << "  " << index++ << ". " << name << ": " << v.detail << std::endl;
    failures += v.outcome == Outcome::fail ? 1 : 0;
  }
  return failures == 0 ? 0 : 1;
}
