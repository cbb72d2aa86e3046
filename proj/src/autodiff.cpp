#include "gapgc/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "gapgc/error.hpp"

namespace gapgc {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

// Broadcast of b against a's [m,n] layout.
enum class Bcast { same, row, col, scalar, invalid };

Bcast classify_broadcast(const Tensor& a, const Tensor& b) {
  if (same_shape(a, b)) return Bcast::same;
  if (b.size() == 1) return Bcast::scalar;
  if (a.rank() == 2 && b.rank() == 2) {
    if (b.shape()[0] == 1 && b.shape()[1] == a.shape()[1]) return Bcast::row;
    if (b.shape()[1] == 1 && b.shape()[0] == a.shape()[0]) return Bcast::col;
  }
  return Bcast::invalid;
}

double broadcast_value(const Tensor& b, Bcast kind, std::size_t i, std::size_t j) {
  switch (kind) {
    case Bcast::same:
      return b.data()[i * b.cols() + j];
    case Bcast::row:
      return b.data()[j];
    case Bcast::col:
      return b.data()[i];
    case Bcast::scalar:
      return b.data()[0];
    default:
      return 0.0;
  }
}

// Reduces an [m,n] gradient onto b's broadcast shape, accumulating in place.
void reduce_into(std::vector<double>& dst, const std::vector<double>& g,
                 Bcast kind, std::size_t m, std::size_t n) {
  switch (kind) {
    case Bcast::same:
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
      break;
    case Bcast::row:
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) dst[j] += g[i * n + j];
      break;
    case Bcast::col:
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) dst[i] += g[i * n + j];
      break;
    case Bcast::scalar:
      for (double v : g) dst[0] += v;
      break;
    default:
      break;
  }
}

std::vector<double>& grad_buffer(std::vector<std::vector<double>>& grads, int node,
                                 std::size_t size) {
  auto& buf = grads[static_cast<std::size_t>(node)];
  if (buf.empty()) buf.assign(size, 0.0);
  return buf;
}

}  // namespace

void Tape::require_same_tape(const Tensor& t, const char* op_name) const {
  if (t.node >= 0 && t.tape != this) {
    throw ContractError(std::string(op_name) + ": input tensor belongs to a different tape");
  }
}

Tensor Tape::record(std::vector<std::size_t> shape, std::vector<double> values,
                    const std::vector<const Tensor*>& inputs, BackFn back,
                    const char* op_name) {
  if (check_finite) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(values[i])) {
        throw NumericError(std::string(op_name) + ": non-finite output at flat index " +
                           std::to_string(i));
      }
    }
  }
  bool tracked = false;
  for (const Tensor* in : inputs) {
    require_same_tape(*in, op_name);
    if (in->node >= 0) tracked = true;
  }
  Tensor out(std::move(shape), std::move(values));
  if (tracked) {
    Node node;
    node.out_shape = out.shape();
    node.out_size = out.size();
    node.back = std::move(back);
    nodes_.push_back(std::move(node));
    out.node = static_cast<int>(nodes_.size()) - 1;
    out.tape = this;
  }
  return out;
}

Tensor Tape::leaf(const Tensor& value, const std::string& name) {
  if (name.empty()) throw ContractError("leaf: name must be nonempty");
  if (leaf_nodes_.count(name)) {
    throw ContractError("leaf: name already bound on this tape: " + name);
  }
  Node node;
  node.out_shape = value.shape();
  node.out_size = value.size();
  node.leaf_name = name;
  nodes_.push_back(std::move(node));
  Tensor out(value.shape(), value.data());
  out.node = static_cast<int>(nodes_.size()) - 1;
  out.tape = this;
  leaf_nodes_[name] = out.node;
  return out;
}

// ---- elementwise with broadcasting -----------------------------------------

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  const Bcast kind = classify_broadcast(a, b);
  if (kind == Bcast::invalid) {
    throw ShapeError("add: cannot broadcast " + shape_string(b) + " onto " + shape_string(a));
  }
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out[i * n + j] = a.data()[i * n + j] + broadcast_value(b, kind, i, j);
  Tensor ta = a, tb = b;
  return record(a.shape(), std::move(out), {&a, &b},
                [ta, tb, kind, m, n](const std::vector<double>& g,
                                     std::vector<std::vector<double>>& grads) {
                  if (ta.node >= 0) {
                    auto& da = grad_buffer(grads, ta.node, ta.size());
                    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
                  }
                  if (tb.node >= 0) {
                    auto& db = grad_buffer(grads, tb.node, tb.size());
                    reduce_into(db, g, kind, m, n);
                  }
                },
                "add");
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  const Bcast kind = classify_broadcast(a, b);
  if (kind == Bcast::invalid) {
    throw ShapeError("sub: cannot broadcast " + shape_string(b) + " onto " + shape_string(a));
  }
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out[i * n + j] = a.data()[i * n + j] - broadcast_value(b, kind, i, j);
  Tensor ta = a, tb = b;
  return record(a.shape(), std::move(out), {&a, &b},
                [ta, tb, kind, m, n](const std::vector<double>& g,
                                     std::vector<std::vector<double>>& grads) {
                  if (ta.node >= 0) {
                    auto& da = grad_buffer(grads, ta.node, ta.size());
                    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
                  }
                  if (tb.node >= 0) {
                    auto& db = grad_buffer(grads, tb.node, tb.size());
                    std::vector<double> neg(g.size());
                    for (std::size_t i = 0; i < g.size(); ++i) neg[i] = -g[i];
                    reduce_into(db, neg, kind, m, n);
                  }
                },
                "sub");
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  const Bcast kind = classify_broadcast(a, b);
  if (kind == Bcast::invalid) {
    throw ShapeError("mul: cannot broadcast " + shape_string(b) + " onto " + shape_string(a));
  }
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out[i * n + j] = a.data()[i * n + j] * broadcast_value(b, kind, i, j);
  Tensor ta = a, tb = b;
  return record(a.shape(), std::move(out), {&a, &b},
                [ta, tb, kind, m, n](const std::vector<double>& g,
                                     std::vector<std::vector<double>>& grads) {
                  if (ta.node >= 0) {
                    auto& da = grad_buffer(grads, ta.node, ta.size());
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < n; ++j)
                        da[i * n + j] += g[i * n + j] * broadcast_value(tb, kind, i, j);
                  }
                  if (tb.node >= 0) {
                    auto& db = grad_buffer(grads, tb.node, tb.size());
                    std::vector<double> ga(g.size());
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * ta.data()[i];
                    reduce_into(db, ga, kind, m, n);
                  }
                },
                "mul");
}

Tensor Tape::scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] * c;
  Tensor ta = a;
  return record(a.shape(), std::move(out), {&a},
                [ta, c](const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
                  auto& da = grad_buffer(grads, ta.node, ta.size());
                  for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * c;
                },
                "scale");
}

Tensor Tape::add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] + c;
  Tensor ta = a;
  return record(a.shape(), std::move(out), {&a},
                [ta](const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
                  auto& da = grad_buffer(grads, ta.node, ta.size());
                  for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
                },
                "add_scalar");
}

// ---- unary nonlinearities ---------------------------------------------------

Tensor Tape::relu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
  Tensor ta = a;
  return record(a.shape(), std::move(out), {&a},
                [ta](const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
                  auto& da = grad_buffer(grads, ta.node, ta.size());
                  for (std::size_t i = 0; i < g.size(); ++i)
                    if (ta.data()[i] > 0.0) da[i] += g[i];
                },
                "relu");
}

namespace {
double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Tensor Tape::sigmoid(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = stable_sigmoid(a.data()[i]);
  Tensor ta = a;
  std::vector<double> saved = out;
  return record(a.shape(), std::move(out), {&a},
                [ta, saved](const std::vector<double>& g,
                            std::vector<std::vector<double>>& grads) {
                  auto& da = grad_buffer(grads, ta.node, ta.size());
                  for (std::size_t i = 0; i < g.size(); ++i)
                    da[i] += g[i] * saved[i] * (1.0 - saved[i]);
                },
                "sigmoid");
}

Tensor Tape::exp(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::exp(a.data()[i]);
  Tensor ta = a;
  std::vector<double> saved = out;
  return record(a.shape(), std::move(out), {&a},
                [ta, saved](const std::vector<double>& g,
                            std::vector<std::vector<double>>& grads) {
                  auto& da = grad_buffer(grads, ta.node, ta.size());
                  for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * saved[i];
                },
                "exp");
}

Tensor Tape::log(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.data()[i] <= 0.0) {
      throw DomainError("log: input " + std::to_string(a.data()[i]) +
                        " at flat index " + std::to_string(i) + " is not positive");
    }
    out[i] = std::log(a.data()[i]);
  }
  Tensor ta = a;
  return record(a.shape(), std::move(out), {&a},
                [ta](const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
                  auto& da = grad_buffer(grads, ta.node, ta.size());
                  for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] / ta.data()[i];
                },
                "log");
}

Tensor Tape::softplus(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a.data()[i];
    out[i] = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  }
  Tensor ta = a;
  return record(a.shape(), std::move(out), {&a},
                [ta](const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
                  auto& da = grad_buffer(grads, ta.node, ta.size());
                  for (std::size_t i = 0; i < g.size(); ++i)
                    da[i] += g[i] * stable_sigmoid(ta.data()[i]);
                },
                "softplus");
}

Tensor Tape::entropy_bernoulli(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double p = a.data()[i];
    out[i] = (p <= 0.0 || p >= 1.0)
                 ? 0.0
                 : -(p * std::log(p) + (1.0 - p) * std::log1p(-p));
  }
  Tensor ta = a;
  return record(a.shape(), std::move(out), {&a},
                [ta](const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
                  auto& da = grad_buffer(grads, ta.node, ta.size());
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    const double p = ta.data()[i];
                    if (p > 0.0 && p < 1.0) da[i] += g[i] * (std::log1p(-p) - std::log(p));
                  }
                },
                "entropy_bernoulli");
}

// ---- matrix ops -------------------------------------------------------------

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul: incompatible shapes " + shape_string(a) + " x " +
                     shape_string(b));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n, 0.0);
  {
    CMapMat A(a.data().data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
    CMapMat B(b.data().data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
    MapMat C(out.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    C.noalias() = A * B;
  }
  Tensor ta = a, tb = b;
  return record({m, n}, std::move(out), {&a, &b},
                [ta, tb, m, k, n](const std::vector<double>& g,
                                  std::vector<std::vector<double>>& grads) {
                  CMapMat G(g.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
                  CMapMat A(ta.data().data(), static_cast<Eigen::Index>(m),
                            static_cast<Eigen::Index>(k));
                  CMapMat B(tb.data().data(), static_cast<Eigen::Index>(k),
                            static_cast<Eigen::Index>(n));
                  if (ta.node >= 0) {
                    auto& da = grad_buffer(grads, ta.node, ta.size());
                    MapMat DA(da.data(), static_cast<Eigen::Index>(m),
                              static_cast<Eigen::Index>(k));
                    DA.noalias() += G * B.transpose();
                  }
                  if (tb.node >= 0) {
                    auto& db = grad_buffer(grads, tb.node, tb.size());
                    MapMat DB(db.data(), static_cast<Eigen::Index>(k),
                              static_cast<Eigen::Index>(n));
                    DB.noalias() += A.transpose() * G;
                  }
                },
                "matmul");
}

Tensor Tape::softmax_row(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("softmax_row: expected rank-2, got " + shape_string(a));
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, a.data()[i * n + j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(a.data()[i * n + j] - mx);
      denom += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= denom;
  }
  Tensor ta = a;
  std::vector<double> saved = out;
  return record(a.shape(), std::move(out), {&a},
                [ta, saved, m, n](const std::vector<double>& g,
                                  std::vector<std::vector<double>>& grads) {
                  auto& da = grad_buffer(grads, ta.node, ta.size());
                  for (std::size_t i = 0; i < m; ++i) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * saved[i * n + j];
                    for (std::size_t j = 0; j < n; ++j)
                      da[i * n + j] += saved[i * n + j] * (g[i * n + j] - dot);
                  }
                },
                "softmax_row");
}

Tensor Tape::concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[0] != b.shape()[0]) {
    throw ShapeError("concat_cols: incompatible shapes " + shape_string(a) + " and " +
                     shape_string(b));
  }
  const std::size_t m = a.shape()[0], p = a.shape()[1], q = b.shape()[1];
  std::vector<double> out(m * (p + q));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < p; ++j) out[i * (p + q) + j] = a.data()[i * p + j];
    for (std::size_t j = 0; j < q; ++j) out[i * (p + q) + p + j] = b.data()[i * q + j];
  }
  Tensor ta = a, tb = b;
  return record({m, p + q}, std::move(out), {&a, &b},
                [ta, tb, m, p, q](const std::vector<double>& g,
                                  std::vector<std::vector<double>>& grads) {
                  if (ta.node >= 0) {
                    auto& da = grad_buffer(grads, ta.node, ta.size());
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < p; ++j)
                        da[i * p + j] += g[i * (p + q) + j];
                  }
                  if (tb.node >= 0) {
                    auto& db = grad_buffer(grads, tb.node, tb.size());
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < q; ++j)
                        db[i * q + j] += g[i * (p + q) + p + j];
                  }
                },
                "concat_cols");
}

// ---- reductions -------------------------------------------------------------

Tensor Tape::sum_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  Tensor ta = a;
  return record({1}, {s}, {&a},
                [ta](const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
                  auto& da = grad_buffer(grads, ta.node, ta.size());
                  for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[0];
                },
                "sum_all");
}

Tensor Tape::mean_all(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean_all: empty tensor");
  return scale(sum_all(a), 1.0 / static_cast<double>(a.size()));
}

Tensor Tape::sum_axis(const Tensor& a, int axis) {
  if (a.rank() != 2) throw ShapeError("sum_axis: expected rank-2, got " + shape_string(a));
  if (axis != 0 && axis != 1) throw ContractError("sum_axis: axis must be 0 or 1");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor ta = a;
  if (axis == 0) {
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[j] += a.data()[i * n + j];
    return record({1, n}, std::move(out), {&a},
                  [ta, m, n](const std::vector<double>& g,
                             std::vector<std::vector<double>>& grads) {
                    auto& da = grad_buffer(grads, ta.node, ta.size());
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < n; ++j) da[i * n + j] += g[j];
                  },
                  "sum_axis");
  }
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += a.data()[i * n + j];
  return record({m, 1}, std::move(out), {&a},
                [ta, m, n](const std::vector<double>& g,
                           std::vector<std::vector<double>>& grads) {
                  auto& da = grad_buffer(grads, ta.node, ta.size());
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) da[i * n + j] += g[i];
                },
                "sum_axis");
}

Tensor Tape::mean_axis(const Tensor& a, int axis) {
  if (a.rank() != 2) throw ShapeError("mean_axis: expected rank-2, got " + shape_string(a));
  const std::size_t len = axis == 0 ? a.shape()[0] : a.shape()[1];
  if (len == 0) throw ShapeError("mean_axis: reduced axis has length 0");
  return scale(sum_axis(a, axis), 1.0 / static_cast<double>(len));
}

// ---- gather / scatter -------------------------------------------------------

Tensor Tape::index_select(const Tensor& a, const std::vector<int>& row_ids) {
  const std::size_t rows = a.rows(), width = a.cols();
  for (std::size_t p = 0; p < row_ids.size(); ++p) {
    if (row_ids[p] < 0 || static_cast<std::size_t>(row_ids[p]) >= rows) {
      throw IndexError("index_select: row id " + std::to_string(row_ids[p]) +
                       " at position " + std::to_string(p) + " out of range [0," +
                       std::to_string(rows) + ")");
    }
  }
  std::vector<double> out(row_ids.size() * width);
  for (std::size_t p = 0; p < row_ids.size(); ++p) {
    const std::size_t src = static_cast<std::size_t>(row_ids[p]) * width;
    std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(src), width,
                out.begin() + static_cast<std::ptrdiff_t>(p * width));
  }
  std::vector<std::size_t> out_shape =
      a.rank() == 1 ? std::vector<std::size_t>{row_ids.size()}
                    : std::vector<std::size_t>{row_ids.size(), width};
  Tensor ta = a;
  return record(std::move(out_shape), std::move(out), {&a},
                [ta, row_ids, width](const std::vector<double>& g,
                                     std::vector<std::vector<double>>& grads) {
                  auto& da = grad_buffer(grads, ta.node, ta.size());
                  for (std::size_t p = 0; p < row_ids.size(); ++p) {
                    const std::size_t dst = static_cast<std::size_t>(row_ids[p]) * width;
                    for (std::size_t j = 0; j < width; ++j)
                      da[dst + j] += g[p * width + j];
                  }
                },
                "index_select");
}

Tensor Tape::segment_sum(const Tensor& a, const std::vector<int>& segments,
                         std::size_t num_segments) {
  const std::size_t rows = a.rows(), width = a.cols();
  if (segments.size() != rows) {
    throw ShapeError("segment_sum: segment vector length " + std::to_string(segments.size()) +
                     " does not match row count " + std::to_string(rows));
  }
  for (std::size_t p = 0; p < segments.size(); ++p) {
    if (segments[p] < 0 || static_cast<std::size_t>(segments[p]) >= num_segments) {
      throw IndexError("segment_sum: segment id " + std::to_string(segments[p]) +
                       " at position " + std::to_string(p) + " out of range [0," +
                       std::to_string(num_segments) + ")");
    }
  }
  std::vector<double> out(num_segments * width, 0.0);
  for (std::size_t p = 0; p < rows; ++p) {
    const std::size_t dst = static_cast<std::size_t>(segments[p]) * width;
    for (std::size_t j = 0; j < width; ++j) out[dst + j] += a.data()[p * width + j];
  }
  std::vector<std::size_t> out_shape =
      a.rank() == 1 ? std::vector<std::size_t>{num_segments}
                    : std::vector<std::size_t>{num_segments, width};
  Tensor ta = a;
  return record(std::move(out_shape), std::move(out), {&a},
                [ta, segments, width](const std::vector<double>& g,
                                      std::vector<std::vector<double>>& grads) {
                  auto& da = grad_buffer(grads, ta.node, ta.size());
                  for (std::size_t p = 0; p < segments.size(); ++p) {
                    const std::size_t src = static_cast<std::size_t>(segments[p]) * width;
                    for (std::size_t j = 0; j < width; ++j)
                      da[p * width + j] += g[src + j];
                  }
                },
                "segment_sum");
}

// ---- batch normalization ----------------------------------------------------

Tensor Tape::batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       BnState& state, BnMode mode, double momentum) {
  if (x.rank() != 2) throw ShapeError("batchnorm: expected rank-2 input, got " + shape_string(x));
  const std::size_t n = x.shape()[0], c = x.shape()[1];
  if (gamma.size() != c || beta.size() != c) {
    throw ShapeError("batchnorm: gamma/beta size must equal channel count " + std::to_string(c));
  }
  if (state.running_mean.size() != c || state.running_var.size() != c) {
    throw ShapeError("batchnorm: state channel count mismatch");
  }
  const bool batch_stats = mode != BnMode::eval;
  if (batch_stats && n < 2) {
    throw StatsError("batchnorm: batch statistics need at least 2 rows, got " +
                     std::to_string(n));
  }

  std::vector<double> mean(c, 0.0), var(c, 0.0);
  if (batch_stats) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) mean[j] += x.data()[i * c + j];
    for (std::size_t j = 0; j < c; ++j) mean[j] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        const double d = x.data()[i * c + j] - mean[j];
        var[j] += d * d;
      }
    for (std::size_t j = 0; j < c; ++j) var[j] /= static_cast<double>(n);
    if (mode == BnMode::train) {
      for (std::size_t j = 0; j < c; ++j) {
        state.running_mean[j] = (1.0 - momentum) * state.running_mean[j] + momentum * mean[j];
        state.running_var[j] = (1.0 - momentum) * state.running_var[j] + momentum * var[j];
      }
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }

  std::vector<double> inv_std(c);
  for (std::size_t j = 0; j < c; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + state.eps);

  std::vector<double> xhat(n * c), out(n * c);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (x.data()[i * c + j] - mean[j]) * inv_std[j];
      out[i * c + j] = gamma.data()[j] * xhat[i * c + j] + beta.data()[j];
    }

  Tensor tx = x, tg = gamma, tb = beta;
  return record(x.shape(), std::move(out), {&x, &gamma, &beta},
                [tx, tg, tb, xhat, inv_std, n, c, batch_stats](
                    const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
                  std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
                  for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < c; ++j) {
                      sum_g[j] += g[i * c + j];
                      sum_gx[j] += g[i * c + j] * xhat[i * c + j];
                    }
                  if (tg.node >= 0) {
                    auto& dg = grad_buffer(grads, tg.node, tg.size());
                    for (std::size_t j = 0; j < c; ++j) dg[j] += sum_gx[j];
                  }
                  if (tb.node >= 0) {
                    auto& db = grad_buffer(grads, tb.node, tb.size());
                    for (std::size_t j = 0; j < c; ++j) db[j] += sum_g[j];
                  }
                  if (tx.node >= 0) {
                    auto& dx = grad_buffer(grads, tx.node, tx.size());
                    const double inv_n = 1.0 / static_cast<double>(n);
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t j = 0; j < c; ++j) {
                        const double gij = g[i * c + j];
                        double t = gij;
                        if (batch_stats) {
                          t -= inv_n * sum_g[j] + xhat[i * c + j] * inv_n * sum_gx[j];
                        }
                        dx[i * c + j] += tg.data()[j] * inv_std[j] * t;
                      }
                  }
                },
                "batchnorm");
}

// ---- cosine similarity ------------------------------------------------------

namespace {
std::vector<double> row_norms(const Tensor& t) {
  const std::size_t m = t.rows(), d = t.cols();
  std::vector<double> norms(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double v = t.data()[i * d + j];
      s += v * v;
    }
    norms[i] = std::sqrt(s);
  }
  return norms;
}
}  // namespace

Tensor Tape::cosine_matrix(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[1]) {
    throw ShapeError("cosine_matrix: incompatible shapes " + shape_string(a) + " and " +
                     shape_string(b));
  }
  const std::size_t m = a.shape()[0], n = b.shape()[0], d = a.shape()[1];
  std::vector<double> na = row_norms(a), nb = row_norms(b);
  for (std::size_t i = 0; i < m; ++i)
    if (na[i] == 0.0)
      throw NumericError("cosine_matrix: zero-norm row " + std::to_string(i) +
                         " in left operand");
  for (std::size_t j = 0; j < n; ++j)
    if (nb[j] == 0.0)
      throw NumericError("cosine_matrix: zero-norm row " + std::to_string(j) +
                         " in right operand");

  std::vector<double> ahat(m * d), bhat(n * d);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < d; ++j) ahat[i * d + j] = a.data()[i * d + j] / na[i];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) bhat[i * d + j] = b.data()[i * d + j] / nb[i];

  std::vector<double> out(m * n, 0.0);
  {
    CMapMat A(ahat.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
    CMapMat B(bhat.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    MapMat C(out.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    C.noalias() = A * B.transpose();
  }
  Tensor ta = a, tb = b;
  std::vector<double> cos = out;
  return record({m, n}, std::move(out), {&a, &b},
                [ta, tb, ahat, bhat, na, nb, cos, m, n, d](
                    const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
                  CMapMat G(g.data(), static_cast<Eigen::Index>(m),
                            static_cast<Eigen::Index>(n));
                  CMapMat Ah(ahat.data(), static_cast<Eigen::Index>(m),
                             static_cast<Eigen::Index>(d));
                  CMapMat Bh(bhat.data(), static_cast<Eigen::Index>(n),
                             static_cast<Eigen::Index>(d));
                  CMapMat C(cos.data(), static_cast<Eigen::Index>(m),
                            static_cast<Eigen::Index>(n));
                  if (ta.node >= 0) {
                    auto& da = grad_buffer(grads, ta.node, ta.size());
                    MapMat DA(da.data(), static_cast<Eigen::Index>(m),
                              static_cast<Eigen::Index>(d));
                    RowMat gb = G * Bh;                                    // [m,d]
                    Eigen::VectorXd q = (G.array() * C.array()).rowwise().sum();
                    for (std::size_t i = 0; i < m; ++i)
                      DA.row(static_cast<Eigen::Index>(i)) +=
                          (gb.row(static_cast<Eigen::Index>(i)) -
                           q(static_cast<Eigen::Index>(i)) *
                               Ah.row(static_cast<Eigen::Index>(i))) /
                          na[i];
                  }
                  if (tb.node >= 0) {
                    auto& db = grad_buffer(grads, tb.node, tb.size());
                    MapMat DB(db.data(), static_cast<Eigen::Index>(n),
                              static_cast<Eigen::Index>(d));
                    RowMat ga = G.transpose() * Ah;                        // [n,d]
                    Eigen::VectorXd p = (G.array() * C.array()).colwise().sum();
                    for (std::size_t j = 0; j < n; ++j)
                      DB.row(static_cast<Eigen::Index>(j)) +=
                          (ga.row(static_cast<Eigen::Index>(j)) -
                           p(static_cast<Eigen::Index>(j)) *
                               Bh.row(static_cast<Eigen::Index>(j))) /
                          nb[j];
                  }
                },
                "cosine_matrix");
}

Tensor Tape::cosine_rowwise(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || !same_shape(a, b)) {
    throw ShapeError("cosine_rowwise: shapes must match, got " + shape_string(a) + " and " +
                     shape_string(b));
  }
  const std::size_t m = a.shape()[0], d = a.shape()[1];
  std::vector<double> na = row_norms(a), nb = row_norms(b);
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    if (na[i] == 0.0 || nb[i] == 0.0) continue;  // defined as 0
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) dot += a.data()[i * d + j] * b.data()[i * d + j];
    out[i] = dot / (na[i] * nb[i]);
  }
  Tensor ta = a, tb = b;
  std::vector<double> cos = out;
  return record({m}, std::move(out), {&a, &b},
                [ta, tb, na, nb, cos, m, d](const std::vector<double>& g,
                                            std::vector<std::vector<double>>& grads) {
                  for (std::size_t i = 0; i < m; ++i) {
                    if (na[i] == 0.0 || nb[i] == 0.0) continue;
                    for (std::size_t j = 0; j < d; ++j) {
                      const double ah = ta.data()[i * d + j] / na[i];
                      const double bh = tb.data()[i * d + j] / nb[i];
                      if (ta.node >= 0) {
                        auto& da = grad_buffer(grads, ta.node, ta.size());
                        da[i * d + j] += g[i] * (bh - cos[i] * ah) / na[i];
                      }
                      if (tb.node >= 0) {
                        auto& db = grad_buffer(grads, tb.node, tb.size());
                        db[i * d + j] += g[i] * (ah - cos[i] * bh) / nb[i];
                      }
                    }
                  }
                },
                "cosine_rowwise");
}

Tensor Tape::reshape(const Tensor& a, std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t dim : shape) n *= dim;
  if (n != a.size()) {
    throw ShapeError("reshape: size mismatch, " + shape_string(a) + " has " +
                     std::to_string(a.size()) + " elements");
  }
  Tensor ta = a;
  return record(std::move(shape), a.data(), {&a},
                [ta](const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
                  auto& da = grad_buffer(grads, ta.node, ta.size());
                  for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
                },
                "reshape");
}

// ---- backward ----------------------------------------------------------------

GradMap Tape::backward(const Tensor& loss) const {
  if (loss.node < 0) throw ContractError("backward: loss is detached from the tape");
  if (loss.tape != this) throw ContractError("backward: loss belongs to a different tape");
  if (loss.size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " + shape_string(loss));
  }

  std::vector<std::vector<double>> grads(nodes_.size());
  grads[static_cast<std::size_t>(loss.node)].assign(1, 1.0);

  for (std::size_t i = nodes_.size(); i-- > 0;) {
    const Node& node = nodes_[i];
    if (!node.back) continue;  // leaf
    const auto& g = grads[i];
    if (g.empty()) continue;  // unreached by the loss
    node.back(g, grads);
  }

  GradMap out;
  for (const auto& [name, idx] : leaf_nodes_) {
    const Node& node = nodes_[static_cast<std::size_t>(idx)];
    auto& buf = grads[static_cast<std::size_t>(idx)];
    if (buf.empty()) buf.assign(node.out_size, 0.0);
    out.emplace(name, Tensor(node.out_shape, std::move(buf)));
  }
  return out;
}

}  // namespace gapgc
