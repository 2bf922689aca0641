#include "introdistill/ndarray.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace introdistill {

namespace {
bool g_checked_mode = false;
}

void set_checked_mode(bool on) { g_checked_mode = on; }
bool checked_mode() { return g_checked_mode; }

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

NdArray::NdArray(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw std::invalid_argument("NdArray: data length " +
                                std::to_string(data_.size()) +
                                " does not match shape " + shape_str(shape_));
  }
  if (g_checked_mode && !all_finite()) {
    throw std::domain_error("NdArray: non-finite value in checked mode");
  }
}

NdArray NdArray::zeros(Shape shape) {
  std::size_t n = shape_numel(shape);
  return NdArray(std::move(shape), std::vector<double>(n, 0.0));
}

NdArray NdArray::full(Shape shape, double value) {
  std::size_t n = shape_numel(shape);
  return NdArray(std::move(shape), std::vector<double>(n, value));
}

NdArray NdArray::scalar(double value) { return NdArray({1}, {value}); }

double NdArray::item() const {
  if (numel() != 1) {
    throw std::logic_error("NdArray::item: array has " +
                           std::to_string(numel()) + " elements, expected 1");
  }
  return data_[0];
}

bool NdArray::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

NdArray NdArray::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw std::invalid_argument("NdArray::reshaped: cannot view " +
                                shape_str(shape_) + " as " + shape_str(shape));
  }
  return NdArray(std::move(shape), data_);
}

}  // namespace introdistill
