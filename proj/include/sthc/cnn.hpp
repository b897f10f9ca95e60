#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "sthc/kernel_set.hpp"
#include "sthc/optics.hpp"
#include "sthc/spectral.hpp"
#include "sthc/volume.hpp"

namespace sthc {

struct ModelConfig {
  std::size_t num_kernels = 9;
  KernelShape kernel{30, 40, 8, 1};
  std::size_t num_classes = 4;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 8;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  // Adam steps the conv bias in coordinates b + input_offset * sum(W), the
  // same as training on inputs shifted by -input_offset. Head steps are taken
  // on batch-centred features likewise. The model itself is unchanged.
  double input_offset = 0.5;

  void validate() const;
};

// One 3D convolution layer followed by one fully connected layer.
struct Model {
  KernelSet kernels;
  ClassifierHead head;
};

struct LabeledClip {
  VideoVolume video;
  std::size_t label = 0;
};

// K * (H - k_h + 1)(W - k_w + 1)(T - k_t + 1).
std::size_t feature_length(const KernelShape& shape, std::size_t num_kernels,
                           const Extents& video);

// Weights uniform in +-sqrt(6 / fan_in) per layer from a generator seeded
// with `seed`; biases start at zero.
Model init_model(const ModelConfig& config, const Extents& video, std::uint64_t seed);

// Digital 3D convolution layer; kernel spectra are computed once.
class DigitalConvLayer {
 public:
  DigitalConvLayer(const KernelSet& kernels, const Extents& video_extents);

  const SpectralConvolver& convolver() const { return conv_; }
  // Per-channel half spectra of a video on the layer grid.
  std::vector<ComplexBuffer> transform_input(const VideoVolume& video) const;
  // conv3d(X, W_k) for every kernel, without bias.
  FeatureVolume pre_activation(const VideoVolume& video) const;
  FeatureVolume pre_activation(const std::vector<ComplexBuffer>& input_spectra) const;
  // ReLU(conv3d(X, W_k) + b_k).
  FeatureVolume forward(const VideoVolume& video) const;

 private:
  SpectralConvolver conv_;
  KernelShape shape_;
  std::vector<std::vector<ComplexBuffer>> spectra_;  // [kernel][channel], flipped
  std::vector<double> biases_;
};

// head * flatten(features) + bias, flattening in (k, t, h, w) order.
std::vector<double> classify(const ClassifierHead& head, const FeatureVolume& features);

std::vector<double> forward_digital(const KernelSet& kernels, const ClassifierHead& head,
                                    const VideoVolume& video);
std::vector<double> forward_hybrid(const KernelSet& kernels, const ClassifierHead& head,
                                   const VideoVolume& video, const OpticalParams& params,
                                   const SlmFrameLayout& layout,
                                   Diagnostics* diagnostics = nullptr);

std::vector<double> softmax(std::span<const double> logits);
// -log softmax(logits)[label], computed with log-sum-exp.
double cross_entropy(std::span<const double> logits, std::size_t label);
// Index of the largest logit; ties go to the lowest index.
std::size_t argmax(std::span<const double> logits);

// Gradients of the mean cross-entropy over a batch.
struct Gradients {
  std::vector<Volume> kernel_weights;
  std::vector<double> kernel_biases;
  std::vector<double> head_weights;
  std::vector<double> head_bias;
  std::vector<double> mean_features;  // batch mean of the flattened features
  double loss = 0.0;                  // mean cross-entropy
  std::size_t correct = 0;            // argmax hits in the batch
};

Gradients compute_gradients(const Model& model, std::span<const LabeledClip> clips,
                            std::span<const std::size_t> batch);
double mean_loss(const Model& model, std::span<const LabeledClip> clips);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  Model model;  // parameters from the selected epoch
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
};

// Adam on mean cross-entropy with seeded initialization and shuffling. The
// epoch with the best validation accuracy is kept (ties: lower validation
// loss, then earlier epoch). Throws DivergenceError on a non-finite loss.
TrainResult train(std::span<const LabeledClip> train_set, std::span<const LabeledClip> val_set,
                  const ModelConfig& model_config, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

// Columns: epoch,train_loss,train_acc,val_acc.
void write_train_log(std::ostream& out, std::span<const EpochLog> log);

enum class EvalMode { digital, hybrid };

struct EvalReport {
  double accuracy = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<double> recall;                       // 0 for classes without samples
  std::vector<std::size_t> predictions;

  bool operator==(const EvalReport&) const = default;
};

EvalReport make_report(std::span<const std::size_t> predictions,
                       std::span<const std::size_t> labels, std::size_t num_classes);

// Logits for every clip. Hybrid mode uses `layout` or, when null, the
// default layout for params.guard_px.
std::vector<std::vector<double>> predict_logits(const Model& model,
                                                std::span<const LabeledClip> clips, EvalMode mode,
                                                const OpticalParams& params = OpticalParams::ideal(),
                                                const SlmFrameLayout* layout = nullptr,
                                                Diagnostics* diagnostics = nullptr);

EvalReport evaluate(const Model& model, std::span<const LabeledClip> clips, EvalMode mode,
                    const OpticalParams& params = OpticalParams::ideal(),
                    const SlmFrameLayout* layout = nullptr, Diagnostics* diagnostics = nullptr);

// c_out * c_in * k_h * k_w * k_t weights (biases not included).
std::size_t param_count(const KernelShape& shape, std::size_t c_out);

}  // namespace sthc
