#include "gapgc/tensor.hpp"

#include <numeric>
#include <sstream>

#include "gapgc/error.hpp"

namespace gapgc {

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<double>>(std::move(values))) {
  std::size_t expect = 1;
  for (std::size_t d : shape_) expect *= d;
  if (expect != data_->size()) {
    throw ShapeError("tensor data length " + std::to_string(data_->size()) +
                     " does not match shape product " + std::to_string(expect));
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

std::vector<double>& Tensor::mutable_data() {
  if (data_.use_count() > 1) {
    data_ = std::make_shared<std::vector<double>>(*data_);
  }
  return *data_;
}

bool same_shape(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape();
}

std::string shape_string(const Tensor& t) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < t.shape().size(); ++i) {
    if (i) os << ",";
    os << t.shape()[i];
  }
  os << "]";
  return os.str();
}

}  // namespace gapgc
