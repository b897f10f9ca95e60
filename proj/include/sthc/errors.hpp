#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sthc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes that do not fit together (kernel larger than volume, grid mismatch).
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Inverse transform left an imaginary residual that a real signal cannot have.
class NumericalConsistencyError : public Error {
 public:
  using Error::Error;
};

// A signed or otherwise unrepresentable field reached the SLM encoder.
class EncodingError : public Error {
 public:
  using Error::Error;
};

class TimingError : public Error {
 public:
  using Error::Error;
};

// Overlapping expanded tiles (crosstalk) or tiles outside the canvas.
class LayoutError : public Error {
 public:
  using Error::Error;
};

class LayoutCapacityError : public LayoutError {
 public:
  LayoutCapacityError(const std::string& what, std::size_t min_height, std::size_t min_width)
      : LayoutError(what), min_height_(min_height), min_width_(min_width) {}
  std::size_t min_height() const { return min_height_; }
  std::size_t min_width() const { return min_width_; }

 private:
  std::size_t min_height_;
  std::size_t min_width_;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class IngestionError : public Error {
 public:
  using Error::Error;
};

class ManifestError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t epoch, std::size_t batch)
      : Error(what), epoch_(epoch), batch_(batch) {}
  std::size_t epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

}  // namespace sthc
