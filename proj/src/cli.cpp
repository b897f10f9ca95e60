#include "sthc/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "sthc/cnn.hpp"
#include "sthc/data_io.hpp"
#include "sthc/errors.hpp"
#include "sthc/kernel_set.hpp"
#include "sthc/optics.hpp"
#include "sthc/timing.hpp"

namespace sthc::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void add_clip_flags(CLI::App* app, ClipSpec& spec) {
  app->add_option("--frames", spec.frames, "Frames sampled per clip")->capture_default_str();
  app->add_option("--height", spec.height, "Frame height after resizing")->capture_default_str();
  app->add_option("--width", spec.width, "Frame width after resizing")->capture_default_str();
}

struct OpticsFlags {
  bool ideal = false;
  std::string pulse_mode = "ideal";
  double pulse_radius = 1.0;
  double ihb_bandwidth = 2.0 * std::numbers::pi * 1e8;
  std::string coherence_lifetime = "inf";
  std::string slm_levels = "256";
  double flatness_min = 0.9;
  std::size_t guard_px = 4;
  double t_pulse = 0.0;
  double t_second = 1e-6;
  double t_third = 2e-6;
  double frame_interval = 1e-8;
  std::size_t pitch_h = 0;
  std::size_t pitch_w = 0;
  std::size_t columns = 0;
  std::size_t canvas_h = 0;
  std::size_t canvas_w = 0;

  void add(CLI::App* app) {
    app->add_flag("--ideal", ideal, "Ideal optics: plane-wave pulse, no quantization, no decay");
    app->add_option("--pulse-mode", pulse_mode, "Recording pulse model")
        ->check(CLI::IsMember({"ideal", "physical"}))
        ->capture_default_str();
    app->add_option("--pulse-radius", pulse_radius, "Recording pulse radius (SLM px)")->capture_default_str();
    app->add_option("--ihb-bandwidth", ihb_bandwidth, "Inhomogeneous broadening (rad/s)")->capture_default_str();
    app->add_option("--coherence-lifetime", coherence_lifetime, "Grating coherence lifetime (s) or inf")
        ->capture_default_str();
    app->add_option("--slm-levels", slm_levels, "SLM quantization levels or 'off'")->capture_default_str();
    app->add_option("--flatness-min", flatness_min, "Minimum pulse spectrum flatness")->capture_default_str();
    app->add_option("--guard-px", guard_px, "Guard spacing between SLM tiles")->capture_default_str();
    app->add_option("--t-pulse", t_pulse, "Recording pulse arrival (s)")->capture_default_str();
    app->add_option("--t-second", t_second, "Kernel arrival (s)")->capture_default_str();
    app->add_option("--t-third", t_third, "Video arrival (s)")->capture_default_str();
    app->add_option("--frame-interval", frame_interval, "Video frame interval at the medium (s)")
        ->capture_default_str();
    app->add_option("--pitch-h", pitch_h, "Manual tile pitch (rows); skips the planner");
    app->add_option("--pitch-w", pitch_w, "Manual tile pitch (columns); skips the planner");
    app->add_option("--columns", columns, "Tiles per row for a manual layout");
    app->add_option("--canvas-h", canvas_h, "SLM canvas height");
    app->add_option("--canvas-w", canvas_w, "SLM canvas width");
  }

  OpticalParams params() const {
    if (ideal) {
      OpticalParams p = OpticalParams::ideal();
      p.guard_px = guard_px;
      p.ihb_bandwidth = ihb_bandwidth;
      return p;
    }
    OpticalParams p;
    p.mode = pulse_mode == "physical" ? PulseMode::physical : PulseMode::ideal;
    p.pulse_radius = pulse_radius;
    p.ihb_bandwidth = ihb_bandwidth;
    try {
      p.coherence_lifetime = std::stod(coherence_lifetime);
    } catch (const std::exception&) {
      throw ParameterError("--coherence-lifetime must be a number or inf");
    }
    if (slm_levels == "off") {
      p.slm_levels.reset();
    } else {
      try {
        p.slm_levels = std::stoi(slm_levels);
      } catch (const std::exception&) {
        throw ParameterError("--slm-levels must be an integer or 'off'");
      }
    }
    p.flatness_min = flatness_min;
    p.guard_px = guard_px;
    p.timing = {t_pulse, t_second, t_third};
    p.validate();
    return p;
  }

  SlmFrameLayout layout(const KernelSet& kernels, const Extents& video) const {
    const Extents out = valid_extents(video, kernels.shape.extents());
    const PlaneExtents map{out.height, out.width};
    const PlaneExtents tile{kernels.shape.k_h, kernels.shape.k_w};
    if (pitch_h > 0 || pitch_w > 0) {
      if (pitch_h == 0 || pitch_w == 0) throw ParameterError("--pitch-h and --pitch-w go together");
      const std::size_t tiles = 2 * kernels.count();
      const std::size_t cols = columns > 0 ? std::min(columns, tiles) : tiles;
      const std::size_t rows = (tiles + cols - 1) / cols;
      PlaneExtents canvas{canvas_h, canvas_w};
      if (canvas.height == 0) canvas.height = (rows - 1) * pitch_h + tile.height + map.height;
      if (canvas.width == 0) canvas.width = (cols - 1) * pitch_w + tile.width + map.width;
      return grid_layout(kernels.count(), map, tile, guard_px, canvas, cols, {pitch_h, pitch_w});
    }
    if (canvas_h > 0 || canvas_w > 0) {
      return plan_slm_layout(kernels.count(), map, tile, guard_px, {canvas_h, canvas_w});
    }
    return default_layout(kernels, video, guard_px);
  }
};

const std::vector<std::string>& vocabulary_for(const DatasetManifest& manifest) {
  for (const ManifestEntry& e : manifest.entries) {
    const auto& synth = synthetic_classes();
    if (std::find(synth.begin(), synth.end(), e.class_name) != synth.end()) return synth;
  }
  return kth_classes();
}

DatasetManifest select_split(const DatasetManifest& manifest, const std::string& split) {
  if (split == "all") {
    for (const ManifestEntry& e : manifest.entries) (void)split_of_subject(e.subject);
    return manifest;
  }
  SplitManifests parts = split_by_subject(manifest);
  if (split == "train") return parts.train;
  if (split == "validation") return parts.validation;
  return parts.test;
}

void write_feature_maps(const fs::path& dir, const std::string& clip_id, const FeatureVolume& maps) {
  const fs::path clip_dir = dir / clip_id;
  fs::create_directories(clip_dir);
  const Extents& e = maps.extents();
  for (std::size_t k = 0; k < maps.channels(); ++k) {
    auto values = maps.channel(k);
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it;
    const double range = *hi_it - lo;
    for (std::size_t t = 0; t < e.frames; ++t) {
      std::vector<std::uint8_t> pixels(e.height * e.width);
      for (std::size_t p = 0; p < pixels.size(); ++p) {
        const double v = values[t * pixels.size() + p];
        pixels[p] = range > 0.0 ? static_cast<std::uint8_t>(std::lround((v - lo) / range * 255.0)) : 0;
      }
      std::ostringstream name;
      name << "kernel" << std::setw(2) << std::setfill('0') << k << "_frame" << std::setw(3) << t
           << ".pgm";
      write_pgm(clip_dir / name.str(), e.height, e.width, pixels);
    }
  }
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::ios_base::failure("cannot write " + path.string());
  return out;
}

int cmd_synth(std::uint64_t seed, std::size_t per_class, const ClipSpec& spec, const fs::path& out_dir,
              std::ostream& out) {
  const SyntheticDataset ds = synth_dataset(seed, per_class, spec);
  write_dataset(ds, out_dir);
  out << "wrote " << ds.clips.size() << " clips and " << (out_dir / "manifest.tsv").string() << '\n';
  return kOk;
}

int cmd_train(const fs::path& manifest_path, const ClipSpec& spec, const ModelConfig& model_config,
              const TrainConfig& config, const fs::path& out_dir, std::ostream& out) {
  spec.validate();
  config.validate();
  const DatasetManifest manifest = read_manifest(manifest_path);
  const SplitManifests parts = split_by_subject(manifest);
  const std::vector<LabeledClip> train_set = load_clips(parts.train, spec);
  const std::vector<LabeledClip> val_set = load_clips(parts.validation, spec);
  if (train_set.empty() || val_set.empty()) {
    throw ParameterError("manifest yields an empty training or validation split");
  }
  out << "training on " << train_set.size() << " clips, validating on " << val_set.size() << '\n';
  const TrainResult result = train(train_set, val_set, model_config, config, [&](const EpochLog& row) {
    out << "epoch " << row.epoch << " loss " << row.train_loss << " train_acc " << row.train_acc
        << " val_acc " << row.val_acc << '\n';
  });

  fs::create_directories(out_dir);
  export_kernels(out_dir / "kernels.stkb", result.model.kernels);
  export_head(out_dir / "head.stfc", result.model.head);
  std::ofstream log = open_output(out_dir / "train_log.csv");
  write_train_log(log, result.log);
  out << "selected epoch " << result.best_epoch << "; wrote " << (out_dir / "kernels.stkb").string()
      << ", " << (out_dir / "head.stfc").string() << ", " << (out_dir / "train_log.csv").string()
      << '\n';
  return kOk;
}

struct EvalArgs {
  fs::path manifest;
  fs::path kernels;
  fs::path head;
  std::string mode = "digital";
  std::string split = "test";
  fs::path out_dir;
  fs::path dump_maps;
  std::size_t dump_count = 1;
  ClipSpec spec;
  OpticsFlags optics;
};

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
  args.spec.validate();
  const bool hybrid = args.mode == "hybrid";
  const OpticalParams params = args.optics.params();
  const DatasetManifest manifest = select_split(read_manifest(args.manifest), args.split);
  if (manifest.entries.empty()) throw ParameterError("split '" + args.split + "' is empty");
  Model model{import_kernels(args.kernels), import_head(args.head)};
  const Extents video = args.spec.extents();
  if (feature_length(model.kernels.shape, model.kernels.count(), video) != model.head.feature_length) {
    throw DimensionError("classifier head does not match the kernel bank and clip extents");
  }
  const std::vector<LabeledClip> clips = load_clips(manifest, args.spec);

  Diagnostics diagnostics;
  SlmFrameLayout layout;
  if (hybrid) {
    layout = args.optics.layout(model.kernels, video);
    check_bandwidth(clips.front().video, args.optics.frame_interval, params, &diagnostics);
  }
  const EvalReport report =
      evaluate(model, clips, hybrid ? EvalMode::hybrid : EvalMode::digital, params,
               hybrid ? &layout : nullptr, &diagnostics);
  for (const Warning& w : diagnostics.warnings) err << "warning (" << w.code << "): " << w.message << '\n';

  const auto& names = vocabulary_for(manifest);
  if (!args.out_dir.empty()) {
    fs::create_directories(args.out_dir);
    json doc;
    doc["mode"] = args.mode;
    doc["split"] = args.split;
    doc["num_samples"] = clips.size();
    doc["accuracy"] = report.accuracy;
    doc["class_names"] = names;
    doc["confusion_matrix"] = report.confusion;
    doc["recall"] = report.recall;
    json preds = json::array();
    for (std::size_t i = 0; i < clips.size(); ++i) {
      preds.push_back({{"id", manifest.entries[i].id},
                       {"label", names[clips[i].label]},
                       {"predicted", names[report.predictions[i]]}});
    }
    doc["predictions"] = preds;
    json warnings = json::array();
    for (const Warning& w : diagnostics.warnings) warnings.push_back({{"code", w.code}, {"message", w.message}});
    doc["warnings"] = warnings;
    std::ofstream rj = open_output(args.out_dir / "report.json");
    rj << doc.dump(2) << '\n';

    std::ofstream cm = open_output(args.out_dir / "confusion.csv");
    cm << "true\\predicted";
    for (const auto& n : names) cm << ',' << n;
    cm << '\n';
    for (std::size_t r = 0; r < report.confusion.size(); ++r) {
      cm << names[r];
      for (std::size_t v : report.confusion[r]) cm << ',' << v;
      cm << '\n';
    }
  }

  if (!args.dump_maps.empty()) {
    const std::size_t n = std::min(args.dump_count, clips.size());
    if (hybrid) {
      const OpticalConvLayer layer(model.kernels, video, params, layout);
      for (std::size_t i = 0; i < n; ++i)
        write_feature_maps(args.dump_maps, manifest.entries[i].id, layer.subtracted(clips[i].video));
    } else {
      const DigitalConvLayer layer(model.kernels, video);
      for (std::size_t i = 0; i < n; ++i)
        write_feature_maps(args.dump_maps, manifest.entries[i].id, layer.pre_activation(clips[i].video));
    }
  }

  std::ostringstream line;
  line << std::fixed << std::setprecision(6) << report.accuracy;
  out << "accuracy: " << line.str() << " (" << clips.size() << " clips)\n";
  return kOk;
}

struct PlanArgs {
  double t1 = 1.0;
  double t2 = 10.0;
  double t3 = 100.0;
  double bandwidth = 2.0 * std::numbers::pi * 1e8;
  double device_fps = 125000.0;
  double digital_fps = 400.0;
  fs::path out_file;
};

int cmd_plan(const PlanArgs& args, std::ostream& out) {
  const SegmentationPlan plan = segmentation_plan(args.t1, args.t2, args.t3);
  const ThroughputReport tp = throughput_report(args.device_fps, args.digital_fps, args.bandwidth);
  json doc;
  doc["ihb_bandwidth"] = args.bandwidth;
  doc["frame_load_time"] = *tp.frame_load_time;
  doc["segmentation"] = {{"t1", plan.t1},
                         {"t2", plan.t2},
                         {"t3", plan.t3},
                         {"count", plan.count()},
                         {"segment_starts", plan.segment_starts}};
  doc["throughput"] = {{"device_fps", tp.device_fps},
                       {"digital_fps", tp.digital_fps},
                       {"speedup", tp.speedup},
                       {"exceeds_two_orders_of_magnitude", tp.exceeds_two_orders}};
  const std::string text = doc.dump(2);
  out << text << '\n';
  if (!args.out_file.empty()) {
    std::ofstream f = open_output(args.out_file);
    f << text << '\n';
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spatio-temporal holographic correlator simulator for hybrid 3D CNNs", "sthc"};
  app.set_config("--config", "", "TOML-style configuration file; flags override its values");
  app.require_subcommand(1);

  // synth
  std::uint64_t synth_seed = 7;
  std::size_t per_class = 25;
  ClipSpec synth_spec;
  fs::path synth_out;
  CLI::App* synth = app.add_subcommand("synth", "Write the synthetic motion-direction dataset");
  synth->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();
  synth->add_option("--per-class", per_class, "Clips per class")->capture_default_str();
  synth->add_option("--out", synth_out, "Output directory")->required();
  add_clip_flags(synth, synth_spec);

  // train
  fs::path train_manifest;
  fs::path train_out;
  ClipSpec train_spec;
  ModelConfig model_config;
  TrainConfig train_config;
  CLI::App* train_cmd = app.add_subcommand("train", "Train the digital network");
  train_cmd->add_option("--manifest", train_manifest, "Dataset manifest")->required();
  train_cmd->add_option("--out", train_out, "Output directory")->required();
  add_clip_flags(train_cmd, train_spec);
  train_cmd->add_option("--kernels", model_config.num_kernels, "Number of 3D kernels")->capture_default_str();
  train_cmd->add_option("--kernel-h", model_config.kernel.k_h, "Kernel height")->capture_default_str();
  train_cmd->add_option("--kernel-w", model_config.kernel.k_w, "Kernel width")->capture_default_str();
  train_cmd->add_option("--kernel-t", model_config.kernel.k_t, "Kernel frames")->capture_default_str();
  train_cmd->add_option("--lr", train_config.learning_rate, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--beta1", train_config.adam_beta1, "Adam beta1")->capture_default_str();
  train_cmd->add_option("--beta2", train_config.adam_beta2, "Adam beta2")->capture_default_str();
  train_cmd->add_option("--eps", train_config.adam_eps, "Adam epsilon")->capture_default_str();
  train_cmd->add_option("--batch", train_config.batch_size, "Batch size")->capture_default_str();
  train_cmd->add_option("--epochs", train_config.epochs, "Epochs")->capture_default_str();
  train_cmd->add_option("--seed", train_config.seed, "Initialization and shuffling seed")->capture_default_str();

  // eval
  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a trained network digitally or through the optics");
  eval_cmd->add_option("--manifest", eval_args.manifest, "Dataset manifest")->required();
  eval_cmd->add_option("--kernels", eval_args.kernels, "Kernel bank file")->required();
  eval_cmd->add_option("--head", eval_args.head, "Classifier head file")->required();
  eval_cmd->add_option("--mode", eval_args.mode, "Convolution path")
      ->check(CLI::IsMember({"digital", "hybrid"}))
      ->capture_default_str();
  eval_cmd->add_option("--split", eval_args.split, "Subject split to evaluate")
      ->check(CLI::IsMember({"train", "validation", "test", "all"}))
      ->capture_default_str();
  eval_cmd->add_option("--out", eval_args.out_dir, "Directory for report.json and confusion.csv");
  eval_cmd->add_option("--dump-maps", eval_args.dump_maps, "Directory for feature-map PGM frames");
  eval_cmd->add_option("--dump-count", eval_args.dump_count, "Clips whose maps are dumped")->capture_default_str();
  add_clip_flags(eval_cmd, eval_args.spec);
  eval_args.optics.add(eval_cmd);

  // plan
  PlanArgs plan_args;
  CLI::App* plan_cmd = app.add_subcommand("plan", "Timing, throughput and database segmentation report");
  plan_cmd->add_option("--t1", plan_args.t1, "Query duration (s)")->capture_default_str();
  plan_cmd->add_option("--t2", plan_args.t2, "Segment duration within the coherence window (s)")
      ->capture_default_str();
  plan_cmd->add_option("--t3", plan_args.t3, "Database duration (s)")->capture_default_str();
  plan_cmd->add_option("--bandwidth", plan_args.bandwidth, "Inhomogeneous broadening (rad/s)")
      ->capture_default_str();
  plan_cmd->add_option("--device-fps", plan_args.device_fps, "Optical frame rate")->capture_default_str();
  plan_cmd->add_option("--digital-fps", plan_args.digital_fps, "Digital baseline frame rate")
      ->capture_default_str();
  plan_cmd->add_option("--out", plan_args.out_file, "Also write the JSON report here");

  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (*synth) return cmd_synth(synth_seed, per_class, synth_spec, synth_out, out);
    if (*train_cmd) return cmd_train(train_manifest, train_spec, model_config, train_config, train_out, out);
    if (*eval_cmd) return cmd_eval(eval_args, out, err);
    if (*plan_cmd) return cmd_plan(plan_args, out);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kDiverged;
  } catch (const LayoutError& e) {
    err << "error: " << e.what() << '\n';
    return kOpticsError;
  } catch (const EncodingError& e) {
    err << "error: " << e.what() << '\n';
    return kOpticsError;
  } catch (const TimingError& e) {
    err << "error: " << e.what() << '\n';
    return kOpticsError;
  } catch (const NumericalConsistencyError& e) {
    err << "error: " << e.what() << '\n';
    return kOpticsError;
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const ManifestError& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const IngestionError& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::ios_base::failure& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return kUsageError;
}

}  // namespace sthc::cli
