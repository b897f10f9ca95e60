#include "sthc/kernel_set.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "sthc/errors.hpp"

namespace sthc {

namespace {

constexpr std::size_t kMagicLength = 7;

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void read_exact(std::istream& in, unsigned char* dst, std::size_t n, const char* what) {
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw FormatError(std::string("truncated file while reading ") + what);
  }
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  read_exact(in, b, 4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in, const char* what) {
  unsigned char b[8];
  read_exact(in, b, 8, what);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

void check_magic(std::istream& in, const char* magic) {
  unsigned char b[kMagicLength];
  read_exact(in, b, kMagicLength, "magic");
  if (std::memcmp(b, magic, kMagicLength) != 0) {
    throw FormatError(std::string("bad magic string, expected ") + magic);
  }
}

void check_end(std::istream& in) {
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after payload");
  }
}

// Compares the remaining stream length to the payload the header promises,
// when the stream is seekable.
void check_payload(std::istream& in, std::size_t expected_bytes) {
  const auto pos = in.tellg();
  if (pos == std::streampos(-1)) return;
  in.seekg(0, std::ios::end);
  const auto end = in.tellg();
  in.seekg(pos);
  const auto remaining = static_cast<std::size_t>(end - pos);
  if (remaining < expected_bytes) {
    std::ostringstream msg;
    msg << "truncated file: payload has " << remaining << " bytes, header requires "
        << expected_bytes;
    throw FormatError(msg.str());
  }
}

std::uint32_t to_u32(std::size_t v) {
  if (v > UINT32_MAX) throw FormatError("count does not fit a 32-bit header field");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

void KernelSet::validate() const {
  if (weights.empty()) throw ParameterError("kernel set must hold at least one kernel");
  if (biases.size() != weights.size()) throw DimensionError("one bias per kernel required");
  for (const Volume& w : weights) {
    if (w.extents() != shape.extents() || w.channels() != shape.c_in) {
      throw DimensionError("kernel does not match the kernel-set shape");
    }
    for (double v : w.values())
      if (!std::isfinite(v)) throw ParameterError("kernel weights must be finite");
  }
  for (double b : biases)
    if (!std::isfinite(b)) throw ParameterError("kernel biases must be finite");
}

void ClassifierHead::validate() const {
  if (num_classes == 0 || feature_length == 0) {
    throw ParameterError("classifier head must have classes and features");
  }
  if (weights.size() != num_classes * feature_length || bias.size() != num_classes) {
    throw DimensionError("classifier head storage does not match its shape");
  }
}

std::size_t kernel_bank_size(std::size_t count, const KernelShape& shape) {
  return kMagicLength + 5 * 4 + 8 * (count * shape.weights() + count);
}

void write_kernel_bank(std::ostream& out, const KernelSet& kernels) {
  kernels.validate();
  out.write(kKernelBankMagic, kMagicLength);
  put_u32(out, to_u32(kernels.count()));
  put_u32(out, to_u32(kernels.shape.k_h));
  put_u32(out, to_u32(kernels.shape.k_w));
  put_u32(out, to_u32(kernels.shape.k_t));
  put_u32(out, to_u32(kernels.shape.c_in));
  for (const Volume& w : kernels.weights)
    for (double v : w.values()) put_f64(out, v);
  for (double b : kernels.biases) put_f64(out, b);
}

KernelSet read_kernel_bank(std::istream& in) {
  check_magic(in, kKernelBankMagic);
  const std::uint32_t count = get_u32(in, "header");
  KernelSet ks;
  ks.shape.k_h = get_u32(in, "header");
  ks.shape.k_w = get_u32(in, "header");
  ks.shape.k_t = get_u32(in, "header");
  ks.shape.c_in = get_u32(in, "header");
  if (count == 0 || ks.shape.weights() == 0) throw FormatError("kernel bank header has a zero count");
  check_payload(in, 8 * (std::size_t{count} * ks.shape.weights() + count));
  for (std::uint32_t k = 0; k < count; ++k) {
    Volume w(ks.shape.extents(), ks.shape.c_in);
    for (double& v : w.values()) v = get_f64(in, "kernel weights");
    ks.weights.push_back(std::move(w));
  }
  for (std::uint32_t k = 0; k < count; ++k) ks.biases.push_back(get_f64(in, "kernel biases"));
  check_end(in);
  return ks;
}

void export_kernels(const std::filesystem::path& path, const KernelSet& kernels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::ios_base::failure("cannot open " + path.string() + " for writing");
  write_kernel_bank(out, kernels);
  if (!out) throw std::ios_base::failure("write failed: " + path.string());
}

KernelSet import_kernels(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot open " + path.string());
  return read_kernel_bank(in);
}

void write_head(std::ostream& out, const ClassifierHead& head) {
  head.validate();
  out.write(kHeadMagic, kMagicLength);
  put_u32(out, to_u32(head.num_classes));
  put_u32(out, to_u32(head.feature_length));
  for (double v : head.weights) put_f64(out, v);
  for (double v : head.bias) put_f64(out, v);
}

ClassifierHead read_head(std::istream& in) {
  check_magic(in, kHeadMagic);
  ClassifierHead head;
  head.num_classes = get_u32(in, "header");
  head.feature_length = get_u32(in, "header");
  if (head.num_classes == 0 || head.feature_length == 0) {
    throw FormatError("head header has a zero count");
  }
  check_payload(in, 8 * (head.num_classes * head.feature_length + head.num_classes));
  head.weights.resize(head.num_classes * head.feature_length);
  for (double& v : head.weights) v = get_f64(in, "head weights");
  head.bias.resize(head.num_classes);
  for (double& v : head.bias) v = get_f64(in, "head biases");
  check_end(in);
  return head;
}

void export_head(const std::filesystem::path& path, const ClassifierHead& head) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::ios_base::failure("cannot open " + path.string() + " for writing");
  write_head(out, head);
  if (!out) throw std::ios_base::failure("write failed: " + path.string());
}

ClassifierHead import_head(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot open " + path.string());
  return read_head(in);
}

}  // namespace sthc
