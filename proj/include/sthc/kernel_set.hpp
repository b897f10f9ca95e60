#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "sthc/volume.hpp"

namespace sthc {

// K signed kernels of one shape with one bias each.
struct KernelSet {
  KernelShape shape;
  std::vector<Volume> weights;
  std::vector<double> biases;

  std::size_t count() const { return weights.size(); }
  // Throws DimensionError / ParameterError when counts, shapes or values
  // (non-finite) are inconsistent.
  void validate() const;
  bool operator==(const KernelSet&) const = default;
};

// Fully connected layer mapping the flattened (k, t, h, w) feature vector to
// class logits. Weights are row-major (class, feature).
struct ClassifierHead {
  std::size_t num_classes = 0;
  std::size_t feature_length = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  void validate() const;
  bool operator==(const ClassifierHead&) const = default;
};

// Kernel bank container: the 7-byte magic "STHCKB1", then K, k_h, k_w, k_t,
// c_in as little-endian u32, then all weights in (k, c, t, h, w) order and the
// K biases, each as a little-endian IEEE-754 double.
inline constexpr char kKernelBankMagic[] = "STHCKB1";
// Classifier head container: magic "STHCFC1", num_classes and feature_length
// as little-endian u32, then weights (class-major) and biases as doubles.
inline constexpr char kHeadMagic[] = "STHCFC1";

std::size_t kernel_bank_size(std::size_t count, const KernelShape& shape);

void write_kernel_bank(std::ostream& out, const KernelSet& kernels);
KernelSet read_kernel_bank(std::istream& in);
void export_kernels(const std::filesystem::path& path, const KernelSet& kernels);
KernelSet import_kernels(const std::filesystem::path& path);

void write_head(std::ostream& out, const ClassifierHead& head);
ClassifierHead read_head(std::istream& in);
void export_head(const std::filesystem::path& path, const ClassifierHead& head);
ClassifierHead import_head(const std::filesystem::path& path);

}  // namespace sthc
