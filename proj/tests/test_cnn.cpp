#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "sthc/cnn.hpp"
#include "sthc/data_io.hpp"
#include "sthc/errors.hpp"

using namespace sthc;

namespace {

std::vector<LabeledClip> tiny_clips(std::uint64_t seed, std::size_t n, std::size_t classes) {
  std::mt19937_64 rng(seed);
  std::vector<LabeledClip> clips;
  for (std::size_t i = 0; i < n; ++i)
    clips.push_back({VideoVolume(oracle::random_volume(rng, {6, 6, 4}, 0.0, 1.0)), i % classes});
  return clips;
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

}  // namespace

TEST_CASE("analytic gradients match central differences on the tiny model") {
  const auto clips = tiny_clips(3, 4, 2);
  Model model = init_model({2, {3, 3, 2, 1}, 2}, {6, 6, 4}, 11);
  model.kernels.biases = {0.05, -0.02};
  std::vector<std::size_t> batch(clips.size());
  std::iota(batch.begin(), batch.end(), 0);
  const Gradients g = compute_gradients(model, clips, batch);
  CHECK(g.loss == doctest::Approx(oracle::loss(model, clips)).epsilon(1e-12));

  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t k = 0; k < model.kernels.count(); ++k) {
    auto w = model.kernels.weights[k].values();
    for (std::size_t i = 0; i < w.size(); ++i)
      worst = std::max(worst, rel(g.kernel_weights[k].values()[i], oracle::central_difference(model, clips, w[i], h)));
    worst = std::max(worst, rel(g.kernel_biases[k], oracle::central_difference(model, clips, model.kernels.biases[k], h)));
  }
  for (std::size_t i = 0; i < model.head.weights.size(); ++i)
    worst = std::max(worst, rel(g.head_weights[i], oracle::central_difference(model, clips, model.head.weights[i], h)));
  for (std::size_t c = 0; c < model.head.bias.size(); ++c)
    worst = std::max(worst, rel(g.head_bias[c], oracle::central_difference(model, clips, model.head.bias[c], h)));
  CHECK(worst <= 1e-4);
}

TEST_CASE("fresh 4-class model starts near the uniform baseline") {
  const SyntheticDataset ds = synth_dataset(7, 25, ClipSpec{});
  const auto clips = labeled_clips(ds, Split::train);
  const Model model = init_model(ModelConfig{}, ClipSpec{}.extents(), 0);
  CHECK(std::abs(mean_loss(model, clips) - std::log(4.0)) <= 0.2);
}

TEST_CASE("softmax, cross-entropy and argmax") {
  const std::vector<double> logits{1000.0, 1001.0, -5.0, 0.5};
  const auto p = softmax(logits);
  CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) <= 1e-12);
  CHECK(cross_entropy(logits, 1) >= 0.0);
  CHECK(std::isfinite(cross_entropy(logits, 2)));
  CHECK(argmax(std::vector<double>{0.3, 0.7, 0.7}) == 1);
  CHECK(argmax(std::vector<double>{2.0, 2.0}) == 0);
}

TEST_CASE("digital forward equals the loop oracle plus bias and ReLU") {
  std::mt19937_64 rng(21);
  KernelSet ks;
  ks.shape = {3, 2, 2, 1};
  for (int k = 0; k < 2; ++k) ks.weights.push_back(oracle::random_volume(rng, ks.shape.extents(), -1.0, 1.0));
  ks.biases = {0.1, -0.3};
  const VideoVolume video(oracle::random_volume(rng, {7, 6, 5}, 0.0, 1.0));
  const FeatureVolume f = DigitalConvLayer(ks, video.extents()).forward(video);
  for (std::size_t k = 0; k < 2; ++k) {
    const Volume ref = oracle::correlate(video.volume(), ks.weights[k]);
    for (std::size_t i = 0; i < ref.size(); ++i)
      CHECK(f.channel(k)[i] == doctest::Approx(std::max(ref.values()[i] + ks.biases[k], 0.0)).epsilon(1e-12));
  }
}

TEST_CASE("training is deterministic and logs every epoch") {
  const auto train_set = tiny_clips(1, 8, 2);
  const auto val_set = tiny_clips(2, 4, 2);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 3;
  cfg.seed = 9;
  const ModelConfig mc{2, {3, 3, 2, 1}, 2};
  const TrainResult a = train(train_set, val_set, mc, cfg);
  const TrainResult b = train(train_set, val_set, mc, cfg);
  CHECK(a.log.size() == 2);
  CHECK(a.model.kernels == b.model.kernels);
  CHECK(a.model.head == b.model.head);
  std::ostringstream la, lb;
  write_train_log(la, a.log);
  write_train_log(lb, b.log);
  CHECK(la.str() == lb.str());
  CHECK(la.str().rfind("epoch,train_loss,train_acc,val_acc\n", 0) == 0);
}

TEST_CASE("non-finite loss raises a divergence error") {
  auto train_set = tiny_clips(1, 4, 2);
  const auto val_set = tiny_clips(2, 2, 2);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.learning_rate = 1e200;
  cfg.batch_size = 2;
  CHECK_THROWS_AS(train(train_set, val_set, {2, {3, 3, 2, 1}, 2}, cfg), DivergenceError);
}

TEST_CASE("reports") {
  const std::vector<std::size_t> labels{0, 1, 2, 3, 1};
  const EvalReport perfect = make_report(labels, labels, 4);
  CHECK(perfect.accuracy == 1.0);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) CHECK(perfect.confusion[r][c] == (r == c ? (r == 1 ? 2u : 1u) : 0u));

  const std::vector<std::size_t> pred{2};
  const std::vector<std::size_t> truth{0};
  const EvalReport wrong = make_report(pred, truth, 4);
  CHECK(wrong.accuracy == 0.0);
  CHECK(wrong.confusion[0][2] == 1);

  const std::vector<std::size_t> p2{0, 1, 1, 3, 2};
  const EvalReport mixed = make_report(p2, labels, 4);
  std::size_t trace = 0;
  for (std::size_t c = 0; c < 4; ++c) trace += mixed.confusion[c][c];
  CHECK(mixed.accuracy == static_cast<double>(trace) / 5.0);
}

TEST_CASE("parameter counts") {
  CHECK(param_count({7, 7, 7, 1}, 1) == 343);
  CHECK(param_count({7, 7, 1, 1}, 1) == 49);
  CHECK(param_count({30, 40, 8, 1}, 9) == 86400);
  CHECK(feature_length({30, 40, 8, 1}, 9, {60, 80, 16}) == 9 * 31 * 41 * 9);
}

TEST_CASE("a zero learning rate leaves parameters unchanged") {
  const auto train_set = tiny_clips(1, 4, 2);
  const auto val_set = tiny_clips(2, 2, 2);
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 1;
  cfg.batch_size = 1;
  cfg.seed = 3;
  const ModelConfig mc{2, {3, 3, 2, 1}, 2};
  const TrainResult r = train(train_set, val_set, mc, cfg);
  const Model init = init_model(mc, {6, 6, 4}, 3);
  CHECK(r.model.kernels == init.kernels);
  CHECK(r.model.head == init.head);
}

TEST_CASE("digital forward pass") {
  std::mt19937_64 rng(8);
  const Extents ve{9, 8, 5};
  Model model = init_model({2, {3, 3, 2, 1}, 3}, ve, 1);
  const auto zero = forward_digital(model.kernels, model.head, VideoVolume(Volume(ve)));
  for (double z : zero) CHECK(z == 0.0);

  const VideoVolume video(oracle::random_volume(rng, ve, 0.0, 1.0));
  const VideoVolume copy = video;
  CHECK(forward_digital(model.kernels, model.head, video) == forward_digital(model.kernels, model.head, copy));

  model.kernels.biases = {0.1, -0.05};
  const auto logits = forward_digital(model.kernels, model.head, video);
  std::vector<double> features;
  for (std::size_t k = 0; k < 2; ++k) {
    const Volume y = direct_conv3d(video.volume(), model.kernels.weights[k]);
    for (double v : y.values()) features.push_back(std::max(v + model.kernels.biases[k], 0.0));
  }
  for (std::size_t c = 0; c < 3; ++c) {
    double z = model.head.bias[c];
    for (std::size_t i = 0; i < features.size(); ++i) z += model.head.weights[c * features.size() + i] * features[i];
    CHECK(std::abs(logits[c] - z) <= 1e-9 * std::max(1.0, std::abs(z)));
  }
}

TEST_CASE("digital and ideal hybrid evaluation agree") {
  std::mt19937_64 rng(10);
  const Extents ve{12, 10, 6};
  std::vector<LabeledClip> clips;
  for (std::size_t i = 0; i < 12; ++i) clips.push_back({VideoVolume(oracle::random_volume(rng, ve, 0.0, 1.0)), i % 4});
  const Model model = init_model({3, {4, 3, 3, 1}, 4}, ve, 6);
  const auto d = predict_logits(model, clips, EvalMode::digital);
  const auto h = predict_logits(model, clips, EvalMode::hybrid, OpticalParams::ideal());
  for (std::size_t i = 0; i < clips.size(); ++i)
    for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(h[i][c] - d[i][c]) <= 1e-6 * std::max(1.0, std::abs(d[i][c])));
  CHECK(evaluate(model, clips, EvalMode::digital) == evaluate(model, clips, EvalMode::hybrid, OpticalParams::ideal()));
}
