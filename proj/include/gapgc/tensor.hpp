#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

namespace gapgc {

class Tape;

// Dense row-major double tensor. Data is shared between copies; call
// mutable_data() before writing in place. `node` is a handle into the tape
// that recorded the producing operation (-1 for constants/detached values).
class Tensor {
 public:
  Tensor() : data_(std::make_shared<std::vector<double>>()) {}

  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor scalar(double value) { return Tensor({1}, {value}); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_->size(); }

  // 2-D helpers; a rank-1 tensor behaves as a single column.
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return rank() >= 2 ? shape_[1] : 1; }

  const std::vector<double>& data() const { return *data_; }
  std::vector<double>& mutable_data();

  double value_at(std::size_t i) const { return (*data_)[i]; }
  double at(std::size_t r, std::size_t c) const { return (*data_)[r * cols() + c]; }

  bool requires_grad() const { return node >= 0; }

  int node = -1;
  const Tape* tape = nullptr;

 private:
  std::vector<std::size_t> shape_;
  std::shared_ptr<std::vector<double>> data_;
};

bool same_shape(const Tensor& a, const Tensor& b);
std::string shape_string(const Tensor& t);

// Value copy with no tape handle; gradients never flow through it.
inline Tensor detach(const Tensor& t) { return Tensor(t.shape(), t.data()); }

}  // namespace gapgc
