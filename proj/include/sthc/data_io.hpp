#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sthc/cnn.hpp"
#include "sthc/volume.hpp"

namespace sthc {

struct ClipSpec {
  std::size_t frames = 16;
  std::size_t height = 60;
  std::size_t width = 80;

  Extents extents() const { return {height, width, frames}; }
  void validate() const;
};

// Class vocabularies. KTH names also accept the "hand" prefixed spellings.
const std::vector<std::string>& kth_classes();
const std::vector<std::string>& synthetic_classes();
std::size_t class_index(std::string_view name);

struct ManifestEntry {
  std::string id;
  int subject = 0;
  std::string class_name;
  std::size_t label = 0;
  std::string frame_pattern;  // glob, relative to the manifest directory
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;
};

// One record per line: id, subject, class, frame pattern separated by tabs.
// Blank lines and lines starting with '#' are skipped.
DatasetManifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir);
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(std::ostream& out, const DatasetManifest& manifest);

enum class Split { train, validation, test };

// Subjects 1-12 train, 13-16 validation, 17-25 test.
Split split_of_subject(int subject);

struct SplitManifests {
  DatasetManifest train;
  DatasetManifest validation;
  DatasetManifest test;
};

SplitManifests split_by_subject(const DatasetManifest& manifest);

// round(i (N - 1) / (F - 1)) for i = 0 .. F-1.
std::vector<std::size_t> sample_frame_indices(std::size_t available, std::size_t wanted);

// 8- or 16-bit binary PGM (P5) or PPM (P6) raster.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  unsigned maxval = 255;
  std::vector<std::uint16_t> samples;  // row-major, channels interleaved
};

Image read_pnm(const std::filesystem::path& path);
// Writes an 8-bit P5 file.
void write_pgm(const std::filesystem::path& path, std::size_t height, std::size_t width,
               std::span<const std::uint8_t> pixels);

// Bilinear resampling with half-pixel centres and edge clamping.
std::vector<double> resize_bilinear(std::span<const double> src, std::size_t src_h,
                                    std::size_t src_w, std::size_t dst_h, std::size_t dst_w);

// Samples spec.frames frames uniformly, averages colour channels, resizes to
// the ClipSpec extents and scales by the file's maxval.
VideoVolume load_clip(const ManifestEntry& entry, const std::filesystem::path& base_dir,
                      const ClipSpec& spec);
std::vector<LabeledClip> load_clips(const DatasetManifest& manifest, const ClipSpec& spec);

struct SyntheticDataset {
  DatasetManifest manifest;
  std::vector<VideoVolume> clips;  // parallel to manifest.entries
};

// Four classes of a bright plaid of bars drifting up, down, left or right
// over a dark noisy background. Every frame has the same distribution in all
// classes; only the motion direction differs. Values are multiples of 1/255 so
// a PGM round trip is lossless.
SyntheticDataset synth_dataset(std::uint64_t seed, std::size_t per_class, const ClipSpec& spec);

// Writes clips/<id>/frame_NNN.pgm and manifest.tsv under out_dir.
void write_dataset(const SyntheticDataset& dataset, const std::filesystem::path& out_dir);

std::vector<LabeledClip> labeled_clips(const SyntheticDataset& dataset, Split split);

}  // namespace sthc
