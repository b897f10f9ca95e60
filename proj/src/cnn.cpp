#include "sthc/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "sthc/errors.hpp"
#include "sthc/parallel.hpp"

namespace sthc {

namespace {

constexpr std::uint64_t kShuffleStream = 0x9E3779B97F4A7C15ULL;

void check_video(const VideoVolume& video, const Extents& extents, std::size_t channels) {
  if (video.extents() != extents || video.channels() != channels) {
    throw DimensionError("video shape does not match the model input");
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ParameterError("learning_rate must be a finite non-negative number");
  }
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
    throw ParameterError("Adam betas must lie in (0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ParameterError("adam_eps must be positive");
  if (batch_size == 0) throw ParameterError("batch_size must be positive");
  if (epochs == 0) throw ParameterError("epochs must be positive");
  if (!std::isfinite(input_offset)) throw ParameterError("input_offset must be finite");
}

std::size_t feature_length(const KernelShape& shape, std::size_t num_kernels,
                           const Extents& video) {
  return num_kernels * valid_extents(video, shape.extents()).count();
}

Model init_model(const ModelConfig& config, const Extents& video, std::uint64_t seed) {
  if (config.num_kernels == 0 || config.num_classes < 2 || config.kernel.weights() == 0) {
    throw ParameterError("model needs >= 1 kernel, >= 2 classes and a non-empty kernel");
  }
  std::mt19937_64 rng(seed);
  Model model;
  model.kernels.shape = config.kernel;
  const double conv_bound = std::sqrt(6.0 / static_cast<double>(config.kernel.weights()));
  std::uniform_real_distribution<double> conv_dist(-conv_bound, conv_bound);
  for (std::size_t k = 0; k < config.num_kernels; ++k) {
    Volume w(config.kernel.extents(), config.kernel.c_in);
    for (double& v : w.values()) v = conv_dist(rng);
    model.kernels.weights.push_back(std::move(w));
  }
  model.kernels.biases.assign(config.num_kernels, 0.0);

  ClassifierHead& head = model.head;
  head.num_classes = config.num_classes;
  head.feature_length = feature_length(config.kernel, config.num_kernels, video);
  const double fc_bound = std::sqrt(6.0 / static_cast<double>(head.feature_length));
  std::uniform_real_distribution<double> fc_dist(-fc_bound, fc_bound);
  head.weights.resize(head.num_classes * head.feature_length);
  for (double& v : head.weights) v = fc_dist(rng);
  head.bias.assign(head.num_classes, 0.0);
  return model;
}

DigitalConvLayer::DigitalConvLayer(const KernelSet& kernels, const Extents& video_extents)
    : conv_(video_extents, kernels.shape.extents()), shape_(kernels.shape), biases_(kernels.biases) {
  kernels.validate();
  for (const Volume& w : kernels.weights) {
    std::vector<ComplexBuffer> per_channel;
    for (std::size_t c = 0; c < shape_.c_in; ++c) {
      per_channel.push_back(conv_.transform(w.channel(c), shape_.extents(), true));
    }
    spectra_.push_back(std::move(per_channel));
  }
}

std::vector<ComplexBuffer> DigitalConvLayer::transform_input(const VideoVolume& video) const {
  check_video(video, conv_.input(), shape_.c_in);
  std::vector<ComplexBuffer> x;
  for (std::size_t c = 0; c < shape_.c_in; ++c) {
    x.push_back(conv_.transform(video.volume().channel(c), conv_.input(), false));
  }
  return x;
}

FeatureVolume DigitalConvLayer::pre_activation(const VideoVolume& video) const {
  return pre_activation(transform_input(video));
}

FeatureVolume DigitalConvLayer::pre_activation(const std::vector<ComplexBuffer>& x) const {
  if (x.size() != shape_.c_in) throw DimensionError("one input spectrum per channel required");
  FeatureVolume out(conv_.output(), spectra_.size());
  ComplexBuffer acc(conv_.spectrum_size());
  for (std::size_t k = 0; k < spectra_.size(); ++k) {
    std::fill(acc.begin(), acc.end(), Complex{});
    for (std::size_t c = 0; c < shape_.c_in; ++c)
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += x[c][i] * spectra_[k][c][i];
    conv_.inverse(acc, {shape_.k_h - 1, shape_.k_w - 1, shape_.k_t - 1}, conv_.output(),
                  out.channel(k));
  }
  return out;
}

FeatureVolume DigitalConvLayer::forward(const VideoVolume& video) const {
  FeatureVolume out = pre_activation(video);
  for (std::size_t k = 0; k < biases_.size(); ++k)
    for (double& v : out.channel(k)) v = std::max(v + biases_[k], 0.0);
  return out;
}

std::vector<double> classify(const ClassifierHead& head, const FeatureVolume& features) {
  head.validate();
  if (features.size() != head.feature_length) {
    throw DimensionError("flattened feature length does not match the classifier head");
  }
  auto f = features.values();
  std::vector<double> logits(head.num_classes);
  for (std::size_t c = 0; c < head.num_classes; ++c) {
    const double* row = head.weights.data() + c * head.feature_length;
    logits[c] = std::inner_product(f.begin(), f.end(), row, 0.0) + head.bias[c];
  }
  return logits;
}

std::vector<double> forward_digital(const KernelSet& kernels, const ClassifierHead& head,
                                    const VideoVolume& video) {
  return classify(head, DigitalConvLayer(kernels, video.extents()).forward(video));
}

std::vector<double> forward_hybrid(const KernelSet& kernels, const ClassifierHead& head,
                                   const VideoVolume& video, const OpticalParams& params,
                                   const SlmFrameLayout& layout, Diagnostics* diagnostics) {
  return classify(head, optical_conv_layer(video, kernels, params, layout, diagnostics));
}

std::vector<double> softmax(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += (p[i] = std::exp(logits[i] - top));
  for (double& v : p) v /= sum;
  return p;
}

double cross_entropy(std::span<const double> logits, std::size_t label) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - top);
  return top + std::log(sum) - logits[label];
}

std::size_t argmax(std::span<const double> logits) {
  return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

Gradients compute_gradients(const Model& model, std::span<const LabeledClip> clips,
                            std::span<const std::size_t> batch) {
  const KernelSet& ks = model.kernels;
  const ClassifierHead& head = model.head;
  if (batch.empty()) throw ParameterError("empty batch");
  const Extents input = clips[batch.front()].video.extents();
  const DigitalConvLayer layer(ks, input);
  const SpectralConvolver& conv = layer.convolver();
  const Extents out_e = conv.output();
  const std::size_t K = ks.count();
  const std::size_t C = head.num_classes;
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  struct SampleGrad {
    FeatureVolume features;
    std::vector<double> dlogits;
    std::vector<Volume> dw;
    std::vector<double> db;
    double loss = 0.0;
    bool correct = false;
  };
  std::vector<SampleGrad> slots(batch.size());

  parallel_for(batch.size(), [&](std::size_t s) {
    const LabeledClip& clip = clips[batch[s]];
    if (clip.label >= C) throw ParameterError("label outside the classifier range");
    SampleGrad& g = slots[s];

    const std::vector<ComplexBuffer> x = layer.transform_input(clip.video);
    g.features = layer.pre_activation(x);
    for (std::size_t k = 0; k < K; ++k)
      for (double& v : g.features.channel(k)) v = std::max(v + ks.biases[k], 0.0);

    const std::vector<double> logits = classify(head, g.features);
    g.loss = cross_entropy(logits, clip.label);
    g.correct = argmax(logits) == clip.label;
    g.dlogits = softmax(logits);
    g.dlogits[clip.label] -= 1.0;
    for (double& v : g.dlogits) v *= inv_batch;

    // dL/dz = (head^T dlogits) masked by the ReLU.
    const std::size_t F = head.feature_length;
    std::vector<double> dz(F, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
      const double d = g.dlogits[c];
      const double* row = head.weights.data() + c * F;
      for (std::size_t i = 0; i < F; ++i) dz[i] += d * row[i];
    }
    auto feat = g.features.values();
    for (std::size_t i = 0; i < F; ++i)
      if (feat[i] <= 0.0) dz[i] = 0.0;

    const std::size_t per_map = out_e.count();
    g.db.assign(K, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      std::span<const double> dzk(dz.data() + k * per_map, per_map);
      g.db[k] = std::accumulate(dzk.begin(), dzk.end(), 0.0);
      Volume dw(ks.shape.extents(), ks.shape.c_in);
      for (std::size_t c = 0; c < ks.shape.c_in; ++c) conv.weight_gradient(x[c], dzk, dw.channel(c));
      g.dw.push_back(std::move(dw));
    }
  });

  Gradients grads;
  grads.kernel_weights.assign(K, Volume(ks.shape.extents(), ks.shape.c_in));
  grads.kernel_biases.assign(K, 0.0);
  grads.head_weights.assign(head.weights.size(), 0.0);
  grads.head_bias.assign(C, 0.0);
  grads.mean_features.assign(head.feature_length, 0.0);
  for (const SampleGrad& g : slots) {
    auto feat = g.features.values();
    for (std::size_t i = 0; i < head.feature_length; ++i) grads.mean_features[i] += feat[i] * inv_batch;
    grads.loss += g.loss * inv_batch;
    grads.correct += g.correct ? 1 : 0;
    for (std::size_t k = 0; k < K; ++k) {
      auto dst = grads.kernel_weights[k].values();
      auto src = g.dw[k].values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      grads.kernel_biases[k] += g.db[k];
    }
    for (std::size_t c = 0; c < C; ++c) {
      const double d = g.dlogits[c];
      double* row = grads.head_weights.data() + c * head.feature_length;
      for (std::size_t i = 0; i < head.feature_length; ++i) row[i] += d * feat[i];
      grads.head_bias[c] += d;
    }
  }
  return grads;
}

double mean_loss(const Model& model, std::span<const LabeledClip> clips) {
  const auto logits = predict_logits(model, clips, EvalMode::digital);
  double sum = 0.0;
  for (std::size_t i = 0; i < clips.size(); ++i) sum += cross_entropy(logits[i], clips[i].label);
  return sum / static_cast<double>(clips.size());
}

namespace {

// Adam state for one flat parameter block.
struct AdamSlot {
  std::span<double> params;
  std::vector<double> m;
  std::vector<double> v;
};

class Adam {
 public:
  explicit Adam(const TrainConfig& config) : config_(config) {}

  void add(std::span<double> params) {
    slots_.push_back({params, std::vector<double>(params.size(), 0.0),
                      std::vector<double>(params.size(), 0.0)});
  }

  // grads[i] matches the i-th block passed to add().
  void step(const std::vector<std::span<const double>>& grads) {
    ++t_;
    const double b1 = config_.adam_beta1;
    const double b2 = config_.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t s = 0; s < slots_.size(); ++s) {
      AdamSlot& slot = slots_[s];
      const auto g = grads[s];
      for (std::size_t i = 0; i < slot.params.size(); ++i) {
        slot.m[i] = b1 * slot.m[i] + (1.0 - b1) * g[i];
        slot.v[i] = b2 * slot.v[i] + (1.0 - b2) * g[i] * g[i];
        const double mhat = slot.m[i] / c1;
        const double vhat = slot.v[i] / c2;
        slot.params[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.adam_eps);
      }
    }
  }

 private:
  TrainConfig config_;
  std::vector<AdamSlot> slots_;
  std::size_t t_ = 0;
};

}  // namespace

TrainResult train(std::span<const LabeledClip> train_set, std::span<const LabeledClip> val_set,
                  const ModelConfig& model_config, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  config.validate();
  if (train_set.empty() || val_set.empty()) {
    throw ParameterError("training and validation splits must be non-empty");
  }
  const Extents input = train_set.front().video.extents();
  Model model = init_model(model_config, input, config.seed);
  std::mt19937_64 shuffle_rng(config.seed ^ kShuffleStream);

  const double offset = config.input_offset;
  Adam adam(config);
  for (Volume& w : model.kernels.weights) adam.add(w.values());
  adam.add(model.kernels.biases);
  adam.add(model.head.weights);
  adam.add(model.head.bias);

  TrainResult result;
  result.model = model;
  double best_acc = -1.0;
  double best_loss = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::span<const std::size_t> batch(order.data() + start, end - start);
      const Gradients g = compute_gradients(model, train_set, batch);
      if (!std::isfinite(g.loss)) {
        std::ostringstream msg;
        msg << "training diverged: non-finite loss at epoch " << epoch << ", batch " << batch_index;
        throw DivergenceError(msg.str(), epoch, batch_index);
      }
      loss_sum += g.loss * static_cast<double>(batch.size());
      correct += g.correct;

      std::vector<Volume> shifted_grads = g.kernel_weights;
      for (std::size_t k = 0; k < shifted_grads.size(); ++k)
        for (double& v : shifted_grads[k].values()) v -= offset * g.kernel_biases[k];
      // Head weights step on centred features; the bias absorbs the shift.
      const std::size_t F = model.head.feature_length;
      std::vector<double> head_grads = g.head_weights;
      for (std::size_t c = 0; c < model.head.num_classes; ++c)
        for (std::size_t i = 0; i < F; ++i) head_grads[c * F + i] -= g.mean_features[i] * g.head_bias[c];
      const std::vector<Volume> kernels_before = model.kernels.weights;
      const std::vector<double> head_before = model.head.weights;

      std::vector<std::span<const double>> grads;
      for (const Volume& w : shifted_grads) grads.push_back(w.values());
      grads.push_back(g.kernel_biases);
      grads.push_back(head_grads);
      grads.push_back(g.head_bias);
      adam.step(grads);
      for (std::size_t c = 0; c < model.head.num_classes; ++c) {
        double shift = 0.0;
        for (std::size_t i = 0; i < F; ++i)
          shift += (model.head.weights[c * F + i] - head_before[c * F + i]) * g.mean_features[i];
        model.head.bias[c] -= shift;
      }
      for (std::size_t k = 0; k < model.kernels.count(); ++k) {
        auto after = model.kernels.weights[k].values();
        auto before = kernels_before[k].values();
        double shift = 0.0;
        for (std::size_t i = 0; i < after.size(); ++i) shift += after[i] - before[i];
        model.kernels.biases[k] -= offset * shift;
      }
    }

    EpochLog row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(order.size());
    row.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
    const auto val_logits = predict_logits(model, val_set, EvalMode::digital);
    std::size_t val_correct = 0;
    double val_loss = 0.0;
    for (std::size_t i = 0; i < val_set.size(); ++i) {
      val_correct += argmax(val_logits[i]) == val_set[i].label ? 1 : 0;
      val_loss += cross_entropy(val_logits[i], val_set[i].label);
    }
    row.val_acc = static_cast<double>(val_correct) / static_cast<double>(val_set.size());
    row.val_loss = val_loss / static_cast<double>(val_set.size());
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);

    if (row.val_acc > best_acc || (row.val_acc == best_acc && row.val_loss < best_loss)) {
      best_acc = row.val_acc;
      best_loss = row.val_loss;
      result.best_epoch = epoch;
      result.model = model;
    }
  }
  return result;
}

void write_train_log(std::ostream& out, std::span<const EpochLog> log) {
  out << "epoch,train_loss,train_acc,val_acc\n";
  out << std::setprecision(17);
  for (const EpochLog& row : log) {
    out << row.epoch << ',' << row.train_loss << ',' << row.train_acc << ',' << row.val_acc << '\n';
  }
}

EvalReport make_report(std::span<const std::size_t> predictions,
                       std::span<const std::size_t> labels, std::size_t num_classes) {
  if (predictions.size() != labels.size()) throw DimensionError("prediction/label count mismatch");
  if (labels.empty()) throw ParameterError("cannot report on an empty split");
  EvalReport report;
  report.predictions.assign(predictions.begin(), predictions.end());
  report.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes || predictions[i] >= num_classes) {
      throw ParameterError("class index outside the report range");
    }
    ++report.confusion[labels[i]][predictions[i]];
    hits += labels[i] == predictions[i] ? 1 : 0;
  }
  report.accuracy = static_cast<double>(hits) / static_cast<double>(labels.size());
  report.recall.assign(num_classes, 0.0);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const auto& row = report.confusion[c];
    const std::size_t total = std::accumulate(row.begin(), row.end(), std::size_t{0});
    if (total > 0) report.recall[c] = static_cast<double>(row[c]) / static_cast<double>(total);
  }
  return report;
}

std::vector<std::vector<double>> predict_logits(const Model& model,
                                                std::span<const LabeledClip> clips, EvalMode mode,
                                                const OpticalParams& params,
                                                const SlmFrameLayout* layout,
                                                Diagnostics* diagnostics) {
  std::vector<std::vector<double>> logits(clips.size());
  if (clips.empty()) return logits;
  const Extents input = clips.front().video.extents();
  if (mode == EvalMode::digital) {
    const DigitalConvLayer layer(model.kernels, input);
    parallel_for(clips.size(),
                 [&](std::size_t i) { logits[i] = classify(model.head, layer.forward(clips[i].video)); });
  } else {
    const SlmFrameLayout planned =
        layout != nullptr ? *layout : default_layout(model.kernels, input, params.guard_px);
    const OpticalConvLayer layer(model.kernels, input, params, planned, diagnostics);
    parallel_for(clips.size(),
                 [&](std::size_t i) { logits[i] = classify(model.head, layer.forward(clips[i].video)); });
  }
  return logits;
}

EvalReport evaluate(const Model& model, std::span<const LabeledClip> clips, EvalMode mode,
                    const OpticalParams& params, const SlmFrameLayout* layout,
                    Diagnostics* diagnostics) {
  const auto logits = predict_logits(model, clips, mode, params, layout, diagnostics);
  std::vector<std::size_t> predictions;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    predictions.push_back(argmax(logits[i]));
    labels.push_back(clips[i].label);
  }
  return make_report(predictions, labels, model.head.num_classes);
}

std::size_t param_count(const KernelShape& shape, std::size_t c_out) {
  if (shape.k_h == 0 || shape.k_w == 0 || shape.k_t == 0 || shape.c_in == 0 || c_out == 0) {
    throw ParameterError("param_count needs positive counts");
  }
  return c_out * shape.c_in * shape.k_h * shape.k_w * shape.k_t;
}

}  // namespace sthc
