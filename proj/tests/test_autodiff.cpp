#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <functional>

#include "gapgc/autodiff.hpp"
#include "gapgc/error.hpp"
#include "gapgc/grad_check.hpp"
#include "gapgc/param_store.hpp"
#include "gapgc/rng.hpp"

using namespace gapgc;

namespace gapgc {
// Test-only access to Tape::record, used to plant a deliberately wrong
// gradient rule as a negative control for grad_check.
class TapeProbe {
 public:
  static Tensor wrong_square(Tape& tape, const Tensor& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x.data()[i] * x.data()[i];
    Tensor tx = x;
    return tape.record(x.shape(), std::move(out), {&x},
                       [tx](const std::vector<double>& g,
                            std::vector<std::vector<double>>& grads) {
                         auto& dx = grads[static_cast<std::size_t>(tx.node)];
                         if (dx.empty()) dx.assign(tx.size(), 0.0);
                         // wrong on purpose: d(x^2)/dx is 2x, not 3x
                         for (std::size_t i = 0; i < g.size(); ++i)
                           dx[i] += 3.0 * tx.data()[i] * g[i];
                       },
                       "wrong_square");
  }
};
}  // namespace gapgc

namespace {

Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double lo = -2.0,
                     double hi = 2.0) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

// Reduces `out` to a scalar through a fixed random weighting so the check is
// sensitive to every output component.
Tensor weighted_sum(Tape& tape, const Tensor& out, const Tensor& w) {
  return tape.sum_all(tape.mul(out, w));
}

GradCheckReport check_op(const std::function<Tensor(Tape&, const BoundParams&)>& op,
                         ParamStore& store, Rng& rng) {
  // Probe shape once to build the weighting tensor.
  Tensor w;
  {
    Tape tape;
    BoundParams params(tape, store);
    Tensor out = op(tape, params);
    w = random_tensor(rng, out.shape(), 0.5, 1.5);
  }
  auto fn = [&op, w](Tape& tape, const ParamStore& s) {
    BoundParams params(tape, s);
    return weighted_sum(tape, op(tape, params), w);
  };
  return grad_check(fn, store, 1e-5, 1e-4);
}

}  // namespace

TEST_CASE("sigmoid at zero: value 0.5, local gradient 0.25") {
  Tape tape;
  ParamStore store;
  store.add("x", Tensor::scalar(0.0), Partition::encoder);
  BoundParams params(tape, store);
  Tensor y = tape.sigmoid(params["x"]);
  CHECK(y.data()[0] == doctest::Approx(0.5).epsilon(1e-12));
  GradMap grads = tape.backward(tape.sum_all(y));
  CHECK(grads.at("x").data()[0] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("softmax_row on a constant row is uniform") {
  Tape tape;
  Tensor x({1, 3}, {2.7, 2.7, 2.7});
  Tensor y = tape.softmax_row(x);
  for (std::size_t j = 0; j < 3; ++j)
    CHECK(y.data()[j] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("cosine of a nonzero vector with itself is 1") {
  Tape tape;
  Tensor v({1, 4}, {0.3, -1.2, 2.0, 0.7});
  Tensor c = tape.cosine_matrix(v, v);
  CHECK(c.data()[0] == doctest::Approx(1.0).epsilon(1e-14));
  Tensor cr = tape.cosine_rowwise(v, v);
  CHECK(cr.data()[0] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("segment_sum hand example and empty-segment convention") {
  Tape tape;
  Tensor values({3, 1}, {1.0, 2.0, 3.0});
  Tensor out = tape.segment_sum(values, {0, 0, 1}, 2);
  REQUIRE(out.shape() == std::vector<std::size_t>{2, 1});
  CHECK(out.data()[0] == 3.0);
  CHECK(out.data()[1] == 3.0);

  Tensor out3 = tape.segment_sum(values, {0, 0, 2}, 3);
  CHECK(out3.data()[1] == 0.0);  // segment 1 has no members
}

TEST_CASE("segment_sum gradient hands each member the upstream row") {
  Tape tape;
  ParamStore store;
  store.add("v", Tensor({3, 2}, {1, 2, 3, 4, 5, 6}), Partition::encoder);
  BoundParams params(tape, store);
  Tensor out = tape.segment_sum(params["v"], {1, 0, 1}, 2);
  Tensor w({2, 2}, {10.0, 20.0, 30.0, 40.0});
  GradMap grads = tape.backward(tape.sum_all(tape.mul(out, w)));
  const Tensor& dv = grads.at("v");
  CHECK(dv.data() == std::vector<double>{30, 40, 10, 20, 30, 40});
}

TEST_CASE("loss = x*x at x=3 has gradient 6") {
  Tape tape;
  ParamStore store;
  store.add("x", Tensor::scalar(3.0), Partition::encoder);
  BoundParams params(tape, store);
  Tensor loss = tape.mul(params["x"], params["x"]);
  GradMap grads = tape.backward(loss);
  CHECK(grads.at("x").data()[0] == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("parameter the loss never touches gets an all-zero gradient") {
  Tape tape;
  ParamStore store;
  store.add("x", Tensor::scalar(3.0), Partition::encoder);
  store.add("unused", Tensor({2, 2}, {1, 2, 3, 4}), Partition::encoder);
  BoundParams params(tape, store);
  Tensor loss = tape.mul(params["x"], params["x"]);
  (void)params["unused"];
  GradMap grads = tape.backward(loss);
  CHECK(grads.at("unused").data() == std::vector<double>(4, 0.0));
  CHECK(grads.at("unused").shape() == std::vector<std::size_t>{2, 2});
}

TEST_CASE("gradient of a mean is 1/n per element") {
  Tape tape;
  ParamStore store;
  store.add("x", Tensor({2, 3}, {1, 2, 3, 4, 5, 6}), Partition::encoder);
  BoundParams params(tape, store);
  GradMap grads = tape.backward(tape.mean_all(params["x"]));
  for (double g : grads.at("x").data()) CHECK(g == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
}

TEST_CASE("grad_check passes on a quadratic form") {
  Rng rng(11);
  ParamStore store;
  store.add("x", random_tensor(rng, {4, 1}), Partition::encoder);
  Tensor A = random_tensor(rng, {4, 4});
  auto fn = [A](Tape& tape, const ParamStore& s) {
    BoundParams params(tape, s);
    Tensor ax = tape.matmul(A, params["x"]);
    return tape.sum_all(tape.mul(params["x"], ax));
  };
  GradCheckReport report = grad_check(fn, store, 1e-5, 1e-4);
  CHECK(report.passed);
  CHECK(report.max_rel_err <= 1e-4);
}

TEST_CASE("grad_check flags a deliberately wrong gradient rule") {
  ParamStore store;
  store.add("x", Tensor({3}, {0.5, -1.0, 2.0}), Partition::encoder);
  auto fn = [](Tape& tape, const ParamStore& s) {
    BoundParams params(tape, s);
    return tape.sum_all(TapeProbe::wrong_square(tape, params["x"]));
  };
  GradCheckReport report = grad_check(fn, store, 1e-5, 1e-4);
  CHECK_FALSE(report.passed);
  CHECK(report.max_rel_err > 0.1);
}

TEST_CASE("grad_check rejects a nondeterministic objective") {
  ParamStore store;
  store.add("x", Tensor::scalar(1.0), Partition::encoder);
  int calls = 0;
  auto fn = [&calls](Tape& tape, const ParamStore& s) {
    BoundParams params(tape, s);
    return tape.scale(params["x"], 1.0 + 0.001 * static_cast<double>(calls++));
  };
  CHECK_THROWS_AS(grad_check(fn, store), DeterminismError);
}

TEST_CASE("per-op gradient checks over random shapes up to 8") {
  Rng rng(2024);
  for (int trial = 0; trial < 4; ++trial) {
    const std::size_t m = 1 + rng.integer(8), n = 1 + rng.integer(8),
                      k = 1 + rng.integer(8);

    SUBCASE("") {}  // keep doctest happy about loop structure

    {  // add / sub / mul, same shape
      ParamStore store;
      store.add("a", random_tensor(rng, {m, n}), Partition::encoder);
      store.add("b", random_tensor(rng, {m, n}), Partition::encoder);
      auto rep = check_op(
          [](Tape& t, const BoundParams& p) {
            return t.mul(t.add(p["a"], p["b"]), t.sub(p["a"], p["b"]));
          },
          store, rng);
      CHECK(rep.passed);
    }
    {  // row / col / scalar broadcasting
      ParamStore store;
      store.add("a", random_tensor(rng, {m, n}), Partition::encoder);
      store.add("row", random_tensor(rng, {1, n}), Partition::encoder);
      store.add("col", random_tensor(rng, {m, 1}), Partition::encoder);
      store.add("s", random_tensor(rng, {1}), Partition::encoder);
      auto rep = check_op(
          [](Tape& t, const BoundParams& p) {
            Tensor x = t.add(p["a"], p["row"]);
            x = t.mul(x, p["col"]);
            x = t.sub(x, p["s"]);
            return t.mul(x, p["s"]);
          },
          store, rng);
      CHECK(rep.passed);
    }
    {  // matmul chain
      ParamStore store;
      store.add("a", random_tensor(rng, {m, k}), Partition::encoder);
      store.add("b", random_tensor(rng, {k, n}), Partition::encoder);
      auto rep = check_op(
          [](Tape& t, const BoundParams& p) { return t.matmul(p["a"], p["b"]); }, store,
          rng);
      CHECK(rep.passed);
    }
    {  // unary chain: sigmoid, exp, softplus, relu shifted off the kink
      ParamStore store;
      store.add("x", random_tensor(rng, {m, n}, 0.2, 1.8), Partition::encoder);
      auto rep = check_op(
          [](Tape& t, const BoundParams& p) {
            return t.relu(t.softplus(t.exp(t.sigmoid(p["x"]))));
          },
          store, rng);
      CHECK(rep.passed);
    }
    {  // log on strictly positive input
      ParamStore store;
      store.add("x", random_tensor(rng, {m, n}, 0.3, 3.0), Partition::encoder);
      auto rep = check_op([](Tape& t, const BoundParams& p) { return t.log(p["x"]); },
                          store, rng);
      CHECK(rep.passed);
    }
    {  // entropy_bernoulli away from the boundary
      ParamStore store;
      store.add("x", random_tensor(rng, {m, n}, 0.05, 0.95), Partition::encoder);
      auto rep = check_op(
          [](Tape& t, const BoundParams& p) { return t.entropy_bernoulli(p["x"]); },
          store, rng);
      CHECK(rep.passed);
    }
    {  // softmax_row
      ParamStore store;
      store.add("x", random_tensor(rng, {m, n}), Partition::encoder);
      auto rep =
          check_op([](Tape& t, const BoundParams& p) { return t.softmax_row(p["x"]); },
                   store, rng);
      CHECK(rep.passed);
    }
    {  // concat + axis reductions
      ParamStore store;
      store.add("a", random_tensor(rng, {m, n}), Partition::encoder);
      store.add("b", random_tensor(rng, {m, k}), Partition::encoder);
      auto rep = check_op(
          [](Tape& t, const BoundParams& p) {
            Tensor c = t.concat_cols(p["a"], p["b"]);
            return t.matmul(t.mean_axis(c, 1), t.sum_axis(c, 0));
          },
          store, rng);
      CHECK(rep.passed);
    }
    {  // index_select + segment_sum
      std::vector<int> ids, segs;
      const std::size_t rows = 6;
      for (std::size_t i = 0; i < rows; ++i) ids.push_back(static_cast<int>(rng.integer(m)));
      for (std::size_t i = 0; i < rows; ++i) segs.push_back(static_cast<int>(rng.integer(3)));
      ParamStore store;
      store.add("x", random_tensor(rng, {m, n}), Partition::encoder);
      auto rep = check_op(
          [ids, segs](Tape& t, const BoundParams& p) {
            return t.segment_sum(t.index_select(p["x"], ids), segs, 3);
          },
          store, rng);
      CHECK(rep.passed);
    }
    {  // batchnorm with batch statistics (no state mutation in this mode)
      const std::size_t rows = 2 + rng.integer(7);
      ParamStore store;
      store.add("x", random_tensor(rng, {rows, n}), Partition::encoder);
      store.add("gamma", random_tensor(rng, {1, n}, 0.5, 1.5), Partition::encoder);
      store.add("beta", random_tensor(rng, {1, n}), Partition::encoder);
      BnState state = BnState::init(n);
      auto rep = check_op(
          [&state](Tape& t, const BoundParams& p) {
            return t.batchnorm(p["x"], p["gamma"], p["beta"], state,
                               BnMode::use_batch_stats);
          },
          store, rng);
      CHECK(rep.passed);
    }
    {  // batchnorm in eval mode (running statistics)
      ParamStore store;
      store.add("x", random_tensor(rng, {m, n}), Partition::encoder);
      store.add("gamma", random_tensor(rng, {1, n}, 0.5, 1.5), Partition::encoder);
      store.add("beta", random_tensor(rng, {1, n}), Partition::encoder);
      BnState state = BnState::init(n);
      for (std::size_t j = 0; j < n; ++j) {
        state.running_mean[j] = rng.uniform(-1.0, 1.0);
        state.running_var[j] = rng.uniform(0.5, 2.0);
      }
      auto rep = check_op(
          [&state](Tape& t, const BoundParams& p) {
            return t.batchnorm(p["x"], p["gamma"], p["beta"], state, BnMode::eval);
          },
          store, rng);
      CHECK(rep.passed);
    }
    {  // cosine similarity matrix and rowwise
      ParamStore store;
      store.add("a", random_tensor(rng, {m, k}, 0.2, 2.0), Partition::encoder);
      store.add("b", random_tensor(rng, {m, k}, 0.2, 2.0), Partition::encoder);
      auto rep = check_op(
          [](Tape& t, const BoundParams& p) {
            return t.concat_cols(t.cosine_matrix(p["a"], p["b"]),
                                 t.reshape(t.cosine_rowwise(p["a"], p["b"]),
                                           {p["a"].shape()[0], 1}));
          },
          store, rng);
      CHECK(rep.passed);
    }
  }
}

TEST_CASE("entropy_bernoulli hand values and boundary convention") {
  Tape tape;
  Tensor h = tape.entropy_bernoulli(Tensor({5}, {0.5, 0.0, 1.0, -0.1, 1.3}));
  CHECK(h.data()[0] == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  for (std::size_t i = 1; i < 5; ++i) CHECK(h.data()[i] == 0.0);

  // boundary gradient is zero
  Tensor p = tape.leaf(Tensor({2}, {1.0, 0.0}), "p");
  GradMap grads = tape.backward(tape.sum_all(tape.entropy_bernoulli(p)));
  CHECK(grads.at("p").data()[0] == 0.0);
  CHECK(grads.at("p").data()[1] == 0.0);
}

TEST_CASE("segment_sum and gather are adjoint within 1e-10") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t rows = 1 + rng.integer(30);
    const std::size_t segs_n = 1 + rng.integer(8);
    const std::size_t width = 1 + rng.integer(6);
    std::vector<int> seg(rows);
    for (auto& s : seg) s = static_cast<int>(rng.integer(segs_n));

    Tensor x = random_tensor(rng, {rows, width});
    Tensor y = random_tensor(rng, {segs_n, width});

    Tape tape;
    Tensor ax = tape.segment_sum(x, seg, segs_n);      // A x
    Tensor aty = tape.index_select(y, seg);            // A^T y
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < ax.size(); ++i) lhs += ax.data()[i] * y.data()[i];
    for (std::size_t i = 0; i < aty.size(); ++i) rhs += aty.data()[i] * x.data()[i];
    CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));
  }
}

TEST_CASE("backward is bitwise deterministic") {
  Rng rng(99);
  ParamStore store;
  store.add("w1", random_tensor(rng, {5, 4}), Partition::encoder);
  store.add("w2", random_tensor(rng, {4, 3}), Partition::encoder);
  Tensor x = random_tensor(rng, {6, 5});

  auto run = [&](GradMap& out) {
    Tape tape;
    BoundParams params(tape, store);
    Tensor h = tape.relu(tape.matmul(x, params["w1"]));
    Tensor z = tape.softmax_row(tape.matmul(h, params["w2"]));
    out = tape.backward(tape.mean_all(z));
  };
  GradMap g1, g2;
  run(g1);
  run(g2);
  for (const auto& [name, grad] : g1) {
    const auto& other = g2.at(name).data();
    REQUIRE(grad.data().size() == other.size());
    CHECK(std::memcmp(grad.data().data(), other.data(),
                      other.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("batchnorm batch mode normalizes exactly and train mode updates state") {
  Rng rng(5);
  const std::size_t rows = 32, c = 4;
  Tensor x = random_tensor(rng, {rows, c}, -3.0, 5.0);
  Tensor gamma({1, c}, std::vector<double>(c, 1.0));
  Tensor beta({1, c}, std::vector<double>(c, 0.0));

  Tape tape;
  BnState state = BnState::init(c);
  Tensor y = tape.batchnorm(x, gamma, beta, state, BnMode::use_batch_stats);

  for (std::size_t j = 0; j < c; ++j) {
    double mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < rows; ++i) mean += y.data()[i * c + j];
    mean /= rows;
    for (std::size_t i = 0; i < rows; ++i) {
      const double d = y.data()[i * c + j] - mean;
      var += d * d;
    }
    var /= rows;
    CHECK(std::abs(mean) <= 1e-9);
    CHECK(std::abs(var - 1.0) <= 1e-6);
  }
  // use_batch_stats must not touch the running statistics
  CHECK(state.running_mean == std::vector<double>(c, 0.0));
  CHECK(state.running_var == std::vector<double>(c, 1.0));

  // train with momentum 1 replaces the running stats with the batch stats
  Tensor y2 = tape.batchnorm(x, gamma, beta, state, BnMode::train, 1.0);
  for (std::size_t j = 0; j < c; ++j) {
    double mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < rows; ++i) mean += x.data()[i * c + j];
    mean /= rows;
    for (std::size_t i = 0; i < rows; ++i) {
      const double d = x.data()[i * c + j] - mean;
      var += d * d;
    }
    var /= rows;
    CHECK(state.running_mean[j] == doctest::Approx(mean).epsilon(1e-12));
    CHECK(state.running_var[j] == doctest::Approx(var).epsilon(1e-12));
  }

  // eval mode now reproduces the batch-stat output
  Tensor y3 = tape.batchnorm(x, gamma, beta, state, BnMode::eval);
  for (std::size_t i = 0; i < y.size(); ++i)
    CHECK(y3.data()[i] == doctest::Approx(y.data()[i]).epsilon(1e-9));
}

TEST_CASE("error contracts") {
  Tape tape;
  Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b({3, 2}, {1, 2, 3, 4, 5, 6});

  SUBCASE("shape mismatch names both shapes") {
    try {
      tape.add(a, b);
      FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[2,3]") != std::string::npos);
      CHECK(msg.find("[3,2]") != std::string::npos);
    }
  }
  SUBCASE("matmul shape mismatch") {
    CHECK_THROWS_AS(tape.matmul(a, a), ShapeError);
  }
  SUBCASE("log of nonpositive input is a domain error") {
    Tensor neg({2}, {1.0, -0.5});
    CHECK_THROWS_AS(tape.log(neg), DomainError);
  }
  SUBCASE("out-of-range index names the offending position") {
    try {
      tape.index_select(a, {0, 5});
      FAIL("expected IndexError");
    } catch (const IndexError& e) {
      CHECK(std::string(e.what()).find("position 1") != std::string::npos);
    }
    try {
      tape.segment_sum(a, {0, 7}, 2);
      FAIL("expected IndexError");
    } catch (const IndexError& e) {
      CHECK(std::string(e.what()).find("position 1") != std::string::npos);
    }
  }
  SUBCASE("non-scalar or detached loss is a contract error") {
    ParamStore store;
    store.add("x", a, Partition::encoder);
    BoundParams params(tape, store);
    Tensor y = tape.relu(params["x"]);
    CHECK_THROWS_AS(tape.backward(y), ContractError);     // non-scalar
    CHECK_THROWS_AS(tape.backward(a), ContractError);     // detached
  }
  SUBCASE("duplicate leaf name is a contract error") {
    Tape t2;
    t2.leaf(a, "p");
    CHECK_THROWS_AS(t2.leaf(a, "p"), ContractError);
  }
  SUBCASE("batch statistics need at least two rows") {
    Tensor one({1, 3}, {1, 2, 3});
    Tensor gamma({1, 3}, {1, 1, 1});
    Tensor beta({1, 3}, {0, 0, 0});
    BnState state = BnState::init(3);
    CHECK_THROWS_AS(tape.batchnorm(one, gamma, beta, state, BnMode::train), StatsError);
    // eval mode is fine with a single row
    CHECK_NOTHROW(tape.batchnorm(one, gamma, beta, state, BnMode::eval));
  }
  SUBCASE("non-finite forward output is reported") {
    Tensor big({1}, {1000.0});
    CHECK_THROWS_AS(tape.exp(big), NumericError);
  }
  SUBCASE("zero-norm row in cosine_matrix is a numeric error") {
    Tensor z({2, 2}, {0, 0, 1, 1});
    CHECK_THROWS_AS(tape.cosine_matrix(z, z), NumericError);
    // rowwise variant defines the zero case as 0
    Tensor c = tape.cosine_rowwise(z, z);
    CHECK(c.data()[0] == 0.0);
    CHECK(c.data()[1] == doctest::Approx(1.0));
  }
  SUBCASE("tensors from another tape are rejected") {
    Tape t1, t2;
    Tensor x1 = t1.leaf(a, "x");
    CHECK_THROWS_AS(t2.relu(x1), ContractError);
  }
}

TEST_CASE("gumbel-style pipeline stays differentiable end to end") {
  // Composite smoke test shaped like the real objective: matmul -> bn ->
  // relu -> segment pooling -> projection -> cosine -> log-softmax loss.
  Rng rng(42);
  const std::size_t nodes = 10, f = 4, hid = 5, m = 3;
  std::vector<int> membership = {0, 0, 0, 1, 1, 1, 1, 2, 2, 2};

  ParamStore store;
  store.add("w", random_tensor(rng, {f, hid}), Partition::encoder);
  store.add("gamma", random_tensor(rng, {1, hid}, 0.8, 1.2), Partition::encoder);
  store.add("beta", random_tensor(rng, {1, hid}, -0.1, 0.1), Partition::encoder);
  store.add("proj", random_tensor(rng, {hid, hid}), Partition::projector);
  Tensor x = random_tensor(rng, {nodes, f});
  BnState state = BnState::init(hid);

  auto fn = [&](Tape& tape, const ParamStore& s) {
    BoundParams params(tape, s);
    Tensor h = tape.matmul(x, params["w"]);
    h = tape.batchnorm(h, params["gamma"], params["beta"], state, BnMode::use_batch_stats);
    h = tape.relu(h);
    Tensor pooled = tape.scale(tape.segment_sum(h, membership, m), 1.0 / 3.0);
    Tensor z = tape.matmul(pooled, params["proj"]);
    Tensor sims = tape.cosine_matrix(z, z);
    Tensor ex = tape.exp(sims);
    Tensor denom = tape.log(tape.sum_axis(ex, 1));
    return tape.mean_all(denom);
  };
  GradCheckReport report = grad_check(fn, store, 1e-5, 1e-4);
  CHECK(report.passed);
  CHECK(report.max_rel_err <= 1e-4);
}
