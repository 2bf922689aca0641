#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace introdistill {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Checked mode: when enabled, array construction rejects NaN/Inf payloads and
// numeric kernels validate their inputs. Off by default (hot training loops).
void set_checked_mode(bool on);
bool checked_mode();

struct CheckedModeGuard {
  explicit CheckedModeGuard(bool on) : prev_(checked_mode()) {
    set_checked_mode(on);
  }
  ~CheckedModeGuard() { set_checked_mode(prev_); }

 private:
  bool prev_;
};

// Dense row-major array of 64-bit floats. Contents are treated as immutable
// once handed to a tape; mutation is confined to construction sites and the
// optimizer update.
class NdArray {
 public:
  NdArray() = default;
  NdArray(Shape shape, std::vector<double> data);

  static NdArray zeros(Shape shape);
  static NdArray full(Shape shape, double value);
  static NdArray scalar(double value);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Scalar extraction; requires numel() == 1.
  double item() const;

  bool same_shape(const NdArray& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  // Same data, different shape tag; element count must be preserved.
  NdArray reshaped(Shape shape) const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace introdistill
