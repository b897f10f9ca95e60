#include "sthc/data_io.hpp"

#include <glob.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "sthc/errors.hpp"
#include "sthc/parallel.hpp"

namespace sthc {

namespace fs = std::filesystem;

void ClipSpec::validate() const {
  if (frames == 0 || height == 0 || width == 0) {
    throw ParameterError("clip frames, height and width must be positive");
  }
}

const std::vector<std::string>& kth_classes() {
  static const std::vector<std::string> names{"clapping", "waving", "boxing", "running"};
  return names;
}

const std::vector<std::string>& synthetic_classes() {
  static const std::vector<std::string> names{"up", "down", "left", "right"};
  return names;
}

std::size_t class_index(std::string_view name) {
  if (name == "handclapping") return 0;
  if (name == "handwaving") return 1;
  for (const auto* names : {&kth_classes(), &synthetic_classes()}) {
    auto it = std::find(names->begin(), names->end(), name);
    if (it != names->end()) return static_cast<std::size_t>(it - names->begin());
  }
  throw ManifestError("unknown class '" + std::string(name) + "'");
}

DatasetManifest parse_manifest(std::istream& in, const fs::path& base_dir) {
  DatasetManifest manifest;
  manifest.base_dir = base_dir;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    auto fail = [&](const std::string& why) {
      throw ManifestError("manifest line " + std::to_string(line_no) + ": " + why);
    };
    if (fields.size() != 4) fail("expected 4 tab-separated fields");
    ManifestEntry entry;
    entry.id = fields[0];
    const std::string& subj = fields[1];
    auto [ptr, ec] = std::from_chars(subj.data(), subj.data() + subj.size(), entry.subject);
    if (ec != std::errc() || ptr != subj.data() + subj.size()) fail("subject is not an integer");
    entry.class_name = fields[2];
    try {
      entry.label = class_index(entry.class_name);
    } catch (const ManifestError& e) {
      fail(e.what());
    }
    entry.frame_pattern = fields[3];
    if (entry.id.empty() || entry.frame_pattern.empty()) fail("empty id or frame pattern");
    manifest.entries.push_back(std::move(entry));
  }
  return manifest;
}

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open manifest " + path.string());
  return parse_manifest(in, path.parent_path());
}

void write_manifest(std::ostream& out, const DatasetManifest& manifest) {
  for (const ManifestEntry& e : manifest.entries) {
    out << e.id << '\t' << e.subject << '\t' << e.class_name << '\t' << e.frame_pattern << '\n';
  }
}

Split split_of_subject(int subject) {
  if (subject < 1 || subject > 25) {
    throw ManifestError("subject id " + std::to_string(subject) + " outside 1-25");
  }
  if (subject <= 12) return Split::train;
  if (subject <= 16) return Split::validation;
  return Split::test;
}

SplitManifests split_by_subject(const DatasetManifest& manifest) {
  SplitManifests out;
  out.train.base_dir = out.validation.base_dir = out.test.base_dir = manifest.base_dir;
  for (const ManifestEntry& e : manifest.entries) {
    switch (split_of_subject(e.subject)) {
      case Split::train: out.train.entries.push_back(e); break;
      case Split::validation: out.validation.entries.push_back(e); break;
      case Split::test: out.test.entries.push_back(e); break;
    }
  }
  return out;
}

std::vector<std::size_t> sample_frame_indices(std::size_t available, std::size_t wanted) {
  if (wanted == 0) throw ParameterError("at least one frame must be sampled");
  if (available < wanted) {
    throw IngestionError("clip has " + std::to_string(available) + " frames, " +
                         std::to_string(wanted) + " required");
  }
  std::vector<std::size_t> idx(wanted, 0);
  if (wanted == 1) return idx;
  for (std::size_t i = 0; i < wanted; ++i) {
    idx[i] = static_cast<std::size_t>(std::llround(static_cast<double>(i * (available - 1)) /
                                                   static_cast<double>(wanted - 1)));
  }
  return idx;
}

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

}  // namespace

Image read_pnm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open frame " + path.string());
  auto fail = [&](const std::string& why) -> Image {
    throw IngestionError("undecodable frame " + path.string() + ": " + why);
  };
  const std::string magic = pnm_token(in);
  Image img;
  if (magic == "P5") {
    img.channels = 1;
  } else if (magic == "P6") {
    img.channels = 3;
  } else {
    return fail("not a binary PGM/PPM");
  }
  try {
    img.width = std::stoul(pnm_token(in));
    img.height = std::stoul(pnm_token(in));
    img.maxval = static_cast<unsigned>(std::stoul(pnm_token(in)));
  } catch (const std::exception&) {
    return fail("malformed header");
  }
  if (img.width == 0 || img.height == 0 || img.maxval == 0 || img.maxval > 65535) {
    return fail("invalid header values");
  }
  const std::size_t count = img.width * img.height * img.channels;
  const std::size_t bytes_per = img.maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(count * bytes_per);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) return fail("truncated pixel data");
  img.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    img.samples[i] = bytes_per == 1 ? raw[i]
                                    : static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
    if (img.samples[i] > img.maxval) return fail("sample exceeds maxval");
  }
  return img;
}

void write_pgm(const fs::path& path, std::size_t height, std::size_t width,
               std::span<const std::uint8_t> pixels) {
  if (pixels.size() != height * width) throw DimensionError("pixel count does not match extents");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::ios_base::failure("cannot write " + path.string());
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw std::ios_base::failure("write failed: " + path.string());
}

std::vector<double> resize_bilinear(std::span<const double> src, std::size_t src_h,
                                    std::size_t src_w, std::size_t dst_h, std::size_t dst_w) {
  if (src.size() != src_h * src_w || src_h == 0 || src_w == 0) {
    throw DimensionError("resize source does not match its extents");
  }
  auto coord = [](std::size_t dst, std::size_t src_n, std::size_t dst_n) {
    const double s = (static_cast<double>(dst) + 0.5) * static_cast<double>(src_n) /
                         static_cast<double>(dst_n) - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(src_n - 1));
  };
  std::vector<double> out(dst_h * dst_w);
  for (std::size_t y = 0; y < dst_h; ++y) {
    const double sy = coord(y, src_h, dst_h);
    const std::size_t y0 = static_cast<std::size_t>(sy);
    const std::size_t y1 = std::min(y0 + 1, src_h - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < dst_w; ++x) {
      const double sx = coord(x, src_w, dst_w);
      const std::size_t x0 = static_cast<std::size_t>(sx);
      const std::size_t x1 = std::min(x0 + 1, src_w - 1);
      const double fx = sx - static_cast<double>(x0);
      const double p00 = src[y0 * src_w + x0];
      const double p01 = src[y0 * src_w + x1];
      const double p10 = src[y1 * src_w + x0];
      const double p11 = src[y1 * src_w + x1];
      // Difference form keeps constant regions exactly constant.
      const double top = p00 + fx * (p01 - p00);
      const double bottom = p10 + fx * (p11 - p10);
      out[y * dst_w + x] = top + fy * (bottom - top);
    }
  }
  return out;
}

namespace {

std::vector<fs::path> expand_pattern(const fs::path& base_dir, const std::string& pattern) {
  const fs::path full = fs::path(pattern).is_absolute() ? fs::path(pattern) : base_dir / pattern;
  glob_t g{};
  const int rc = ::glob(full.c_str(), 0, nullptr, &g);
  std::vector<fs::path> paths;
  if (rc == 0) {
    for (std::size_t i = 0; i < g.gl_pathc; ++i) paths.emplace_back(g.gl_pathv[i]);
  }
  globfree(&g);
  if (rc != 0 && rc != GLOB_NOMATCH) throw IngestionError("cannot expand " + full.string());
  return paths;  // glob(3) returns matches sorted
}

}  // namespace

VideoVolume load_clip(const ManifestEntry& entry, const fs::path& base_dir, const ClipSpec& spec) {
  spec.validate();
  const std::vector<fs::path> frames = expand_pattern(base_dir, entry.frame_pattern);
  std::vector<std::size_t> picks;
  try {
    picks = sample_frame_indices(frames.size(), spec.frames);
  } catch (const IngestionError& e) {
    throw IngestionError("clip " + entry.id + ": " + e.what());
  }
  Volume volume(spec.extents());
  for (std::size_t t = 0; t < picks.size(); ++t) {
    const Image img = read_pnm(frames[picks[t]]);
    std::vector<double> gray(img.height * img.width);
    const double scale = static_cast<double>(img.maxval);
    for (std::size_t p = 0; p < gray.size(); ++p) {
      double sum = 0.0;
      for (std::size_t c = 0; c < img.channels; ++c) sum += img.samples[p * img.channels + c];
      gray[p] = sum / static_cast<double>(img.channels) / scale;
    }
    const std::vector<double> resized =
        resize_bilinear(gray, img.height, img.width, spec.height, spec.width);
    std::copy(resized.begin(), resized.end(),
              volume.values().begin() + static_cast<std::ptrdiff_t>(t * spec.height * spec.width));
  }
  return VideoVolume(std::move(volume));
}

std::vector<LabeledClip> load_clips(const DatasetManifest& manifest, const ClipSpec& spec) {
  std::vector<LabeledClip> clips(manifest.entries.size());
  parallel_for(clips.size(), [&](std::size_t i) {
    clips[i] = {load_clip(manifest.entries[i], manifest.base_dir, spec), manifest.entries[i].label};
  });
  return clips;
}

namespace {

// Anti-aliased coverage of a periodic bar of the given thickness.
double bar_coverage(double coord, double offset, double period, double thickness) {
  double u = std::fmod(coord - offset, period);
  if (u < 0.0) u += period;
  const double dist = std::abs(u - 0.5 * period);
  return std::clamp(0.5 * thickness + 0.5 - dist, 0.0, 1.0);
}

}  // namespace

SyntheticDataset synth_dataset(std::uint64_t seed, std::size_t per_class, const ClipSpec& spec) {
  if (per_class == 0) throw ParameterError("per_class must be at least 1");
  spec.validate();
  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  std::normal_distribution<double> noise(0.0, 1.0);

  SyntheticDataset ds;
  const auto& names = synthetic_classes();
  const double dirs[4][2] = {{-1.0, 0.0}, {1.0, 0.0}, {0.0, -1.0}, {0.0, 1.0}};  // (dy, dx)
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t label = 0; label < names.size(); ++label) {
      const double period = uniform(15.0, 17.0);
      const double thickness = uniform(3.0, 5.0);
      const double speed = uniform(2.0, 2.5);  // px per frame
      const double phase_y = uniform(0.0, period);
      const double phase_x = uniform(0.0, period);
      const double background = uniform(0.0, 0.05);
      const double foreground = uniform(0.8, 0.9);
      const double sigma = 0.03;

      Volume v(spec.extents());
      for (std::size_t t = 0; t < spec.frames; ++t) {
        const double oy = phase_y + dirs[label][0] * speed * static_cast<double>(t);
        const double ox = phase_x + dirs[label][1] * speed * static_cast<double>(t);
        for (std::size_t y = 0; y < spec.height; ++y)
          for (std::size_t x = 0; x < spec.width; ++x) {
            const double cover = std::max(bar_coverage(static_cast<double>(y), oy, period, thickness),
                                          bar_coverage(static_cast<double>(x), ox, period, thickness));
            const double value = background + (foreground - background) * cover + sigma * noise(rng);
            v.at(y, x, t) = std::round(std::clamp(value, 0.0, 1.0) * 255.0) / 255.0;
          }
      }

      ManifestEntry entry;
      std::ostringstream id;
      id << names[label] << '_' << std::setw(3) << std::setfill('0') << i;
      entry.id = id.str();
      entry.subject = static_cast<int>(i % 25) + 1;
      entry.class_name = names[label];
      entry.label = label;
      entry.frame_pattern = "clips/" + entry.id + "/frame_*.pgm";
      ds.manifest.entries.push_back(std::move(entry));
      ds.clips.emplace_back(std::move(v));
    }
  }
  return ds;
}

void write_dataset(const SyntheticDataset& dataset, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < dataset.clips.size(); ++i) {
    const ManifestEntry& e = dataset.manifest.entries[i];
    const Volume& v = dataset.clips[i].volume();
    const fs::path dir = out_dir / "clips" / e.id;
    fs::create_directories(dir);
    const Extents& ex = v.extents();
    std::vector<std::uint8_t> pixels(ex.height * ex.width);
    for (std::size_t t = 0; t < ex.frames; ++t) {
      for (std::size_t p = 0; p < pixels.size(); ++p) {
        pixels[p] = static_cast<std::uint8_t>(std::lround(v.values()[t * pixels.size() + p] * 255.0));
      }
      std::ostringstream name;
      name << "frame_" << std::setw(3) << std::setfill('0') << t << ".pgm";
      write_pgm(dir / name.str(), ex.height, ex.width, pixels);
    }
  }
  std::ofstream out(out_dir / "manifest.tsv");
  if (!out) throw std::ios_base::failure("cannot write " + (out_dir / "manifest.tsv").string());
  write_manifest(out, dataset.manifest);
  if (!out) throw std::ios_base::failure("manifest write failed");
}

std::vector<LabeledClip> labeled_clips(const SyntheticDataset& dataset, Split split) {
  std::vector<LabeledClip> out;
  for (std::size_t i = 0; i < dataset.clips.size(); ++i) {
    const ManifestEntry& e = dataset.manifest.entries[i];
    if (split_of_subject(e.subject) == split) out.push_back({dataset.clips[i], e.label});
  }
  return out;
}

}  // namespace sthc
