#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gapgc/tensor.hpp"

namespace gapgc {

enum class BnMode { train, eval, use_batch_stats };

// Batch-norm running statistics. Owned by the model, mutated only by the
// batchnorm op in train mode.
struct BnState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double eps = 1e-8;

  static BnState init(std::size_t channels) {
    BnState s;
    s.running_mean.assign(channels, 0.0);
    s.running_var.assign(channels, 1.0);
    return s;
  }
};

using GradMap = std::map<std::string, Tensor>;

// Reverse-mode tape, rebuilt per forward pass. Every op returns a fresh
// Tensor; if any input is tracked the op records a node whose backward
// closure scatters the upstream gradient into its inputs. Node order is the
// recording order, so a single reverse sweep visits each node exactly once.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers `value` as a named leaf. Leaves are the only tensors whose
  // gradients survive backward(); each name may be bound once per tape.
  Tensor leaf(const Tensor& value, const std::string& name);

  // Elementwise with broadcasting over a row [1,n], a column [m,1] or a
  // scalar [1] against an [m,n] left operand.
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double c);
  Tensor add_scalar(const Tensor& a, double c);

  Tensor relu(const Tensor& a);
  Tensor sigmoid(const Tensor& a);
  Tensor exp(const Tensor& a);
  Tensor log(const Tensor& a);
  Tensor softplus(const Tensor& a);
  // Elementwise -[p log p + (1-p) log(1-p)]; values at or beyond the
  // boundaries 0 and 1 map to 0 with zero gradient (the x log x limit).
  Tensor entropy_bernoulli(const Tensor& a);

  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor softmax_row(const Tensor& a);
  Tensor concat_cols(const Tensor& a, const Tensor& b);

  Tensor sum_all(const Tensor& a);
  Tensor mean_all(const Tensor& a);
  // axis 0 -> [1,n], axis 1 -> [m,1]
  Tensor sum_axis(const Tensor& a, int axis);
  Tensor mean_axis(const Tensor& a, int axis);

  Tensor index_select(const Tensor& a, const std::vector<int>& row_ids);
  Tensor segment_sum(const Tensor& a, const std::vector<int>& segments,
                     std::size_t num_segments);

  Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   BnState& state, BnMode mode, double momentum = 0.1);

  // Cosine similarity matrix [m,n] between rows of a [m,d] and b [n,d].
  // A zero-norm row is a NumericError (undefined direction).
  Tensor cosine_matrix(const Tensor& a, const Tensor& b);
  // Per-row cosine between a[k,:] and b[k,:]; zero-norm rows yield 0 with
  // zero gradient.
  Tensor cosine_rowwise(const Tensor& a, const Tensor& b);

  Tensor reshape(const Tensor& a, std::vector<std::size_t> shape);

  // d(loss)/d(leaf) for every registered leaf; leaves the loss does not
  // reach map to zero tensors. Deterministic: a fixed tape always produces
  // bitwise-identical gradients.
  GradMap backward(const Tensor& loss) const;

  std::size_t num_nodes() const { return nodes_.size(); }

  // Forward outputs are scanned for NaN/Inf when enabled (default).
  bool check_finite = true;

 private:
  friend class TapeProbe;
  using BackFn = std::function<void(const std::vector<double>& upstream,
                                    std::vector<std::vector<double>>& grads)>;

  struct Node {
    std::vector<std::size_t> out_shape;
    std::size_t out_size = 0;
    std::string leaf_name;  // nonempty iff leaf
    BackFn back;            // empty for leaves
  };

  Tensor record(std::vector<std::size_t> shape, std::vector<double> values,
                const std::vector<const Tensor*>& inputs, BackFn back,
                const char* op_name);
  void require_same_tape(const Tensor& t, const char* op_name) const;

  std::vector<Node> nodes_;
  std::map<std::string, int> leaf_nodes_;
};

}  // namespace gapgc
