#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

#include "gapgc/engine.hpp"
#include "gapgc/error.hpp"
#include "gapgc/generator.hpp"

using namespace gapgc;

namespace {

// One small trained model shared by the adaptation tests; rebuilt lazily.
struct Fixture {
  GeneratedDataset data;
  ModelBundle bundle;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture x;
    x.data = generate_motif_ood_dataset(77, 160, ShiftProfile{});
    GinConfig cfg;
    cfg.num_layers = 2;
    cfg.hidden_dim = 8;
    cfg.feature_width = x.data.feature_width;
    cfg.task_count = x.data.task_count;
    x.bundle = init_model(cfg, 7);
    TrainOptions to;
    to.epochs = 4;
    to.batch_size = 32;
    to.seed = 7;
    offline_train(x.bundle, x.data.graphs, x.data.split.train, x.data.split.validation, to);
    return x;
  }();
  return f;
}

TTAConfig base_config(Method m) {
  TTAConfig c;
  c.method = m;
  c.lr = 1e-3;
  c.batch_size = 32;
  c.seed = 5;
  return c;
}

std::uint64_t all_model_checksums(const ModelBundle& b, Partition p) {
  return partition_checksum(b.params, p);
}

double mean_omega(ModelBundle& bundle, const GraphBatch& batch, AugmenterMode mode) {
  Tape tape;
  bundle.params.set_all_trainable(false);
  BoundParams bound(tape, bundle.params);
  Tensor omega = compute_edge_logits(tape, bound, bundle, batch, mode);
  double total = 0.0;
  for (double w : omega.data()) total += w;
  return total / static_cast<double>(omega.size());
}

}  // namespace

TEST_CASE("adam hand-checked first step and identity cases") {
  ParamStore store;
  store.add("p", Tensor({1}, {1.0}), Partition::encoder, true);

  SUBCASE("zero gradient, zero decay leaves the parameter alone") {
    Adam adam(0.1, 0.0);
    GradMap grads{{"p", Tensor({1}, {0.0})}};
    adam.step(store, {"p"}, grads);
    CHECK(store.at("p").value.data()[0] == 1.0);
  }
  SUBCASE("first step with g=1, lr=0.1 moves by ~0.1") {
    Adam adam(0.1, 0.0);
    GradMap grads{{"p", Tensor({1}, {1.0})}};
    adam.step(store, {"p"}, grads);
    CHECK(store.at("p").value.data()[0] == doctest::Approx(0.9).epsilon(1e-7));
  }
  SUBCASE("zero gradient with weight decay still shrinks the parameter") {
    Adam adam(0.01, 0.1);
    GradMap grads{{"p", Tensor({1}, {0.0})}};
    adam.step(store, {"p"}, grads);
    CHECK(store.at("p").value.data()[0] < 1.0);
  }
  SUBCASE("two instances with the same inputs take identical trajectories") {
    ParamStore a, b;
    a.add("p", Tensor({2}, {0.3, -0.4}), Partition::encoder, true);
    b.add("p", Tensor({2}, {0.3, -0.4}), Partition::encoder, true);
    Adam oa(0.05, 0.01), ob(0.05, 0.01);
    for (int i = 0; i < 20; ++i) {
      GradMap grads{{"p", Tensor({2}, {0.1 * i, -0.2})}};
      oa.step(a, {"p"}, grads);
      ob.step(b, {"p"}, grads);
    }
    CHECK(std::memcmp(a.at("p").value.data().data(), b.at("p").value.data().data(),
                      2 * sizeof(double)) == 0);
  }
  SUBCASE("missing or mis-shaped gradients are contract errors") {
    Adam adam(0.1, 0.0);
    GradMap empty;
    CHECK_THROWS_AS(adam.step(store, {"p"}, empty), ContractError);
    GradMap wrong{{"p", Tensor({2}, {1.0, 1.0})}};
    CHECK_THROWS_AS(adam.step(store, {"p"}, wrong), ContractError);
  }
}

TEST_CASE("global norm clip rescales only when above the threshold") {
  GradMap grads{{"a", Tensor({2}, {3.0, 0.0})}, {"b", Tensor({1}, {4.0})}};
  const double norm = clip_global_norm(grads, {"a", "b"}, 2.5);
  CHECK(norm == doctest::Approx(5.0));
  CHECK(grads.at("a").data()[0] == doctest::Approx(1.5));
  CHECK(grads.at("b").data()[0] == doctest::Approx(2.0));

  GradMap small{{"a", Tensor({1}, {0.3})}};
  clip_global_norm(small, {"a"}, 2.5);
  CHECK(small.at("a").data()[0] == 0.3);
}

TEST_CASE("binary entropy composite: ln 2 at p=1/2, ~0 when saturated") {
  Tape tape;
  CHECK(mean_binary_entropy(tape, Tensor({1, 1}, {0.0})).data()[0] ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(mean_binary_entropy(tape, Tensor({1, 1}, {30.0})).data()[0] < 1e-9);
  CHECK(mean_binary_entropy(tape, Tensor({1, 1}, {-30.0})).data()[0] < 1e-9);
  // diagnostic scalar version agrees
  Tensor logits({2, 2}, {0.3, -1.2, 2.0, 0.0});
  CHECK(mean_binary_entropy_value(logits) ==
        doctest::Approx(mean_binary_entropy(tape, logits).data()[0]).epsilon(1e-12));
}

TEST_CASE("offline training reduces the train loss and selects on validation") {
  const Fixture& f = fixture();
  ModelBundle bundle = init_model(f.bundle.config, 21);
  TrainOptions to;
  to.epochs = 3;
  to.batch_size = 32;
  to.seed = 21;
  TrainLog log = offline_train(bundle, f.data.graphs, f.data.split.train,
                               f.data.split.validation, to);
  REQUIRE(log.epoch_loss.size() == 3);
  CHECK(log.epoch_loss[0] < log.initial_loss);
  CHECK(log.val_auc.size() == 3);
  CHECK(log.best_epoch >= 1);
  // restored weights correspond to the best validation epoch
  const double restored = evaluate_auc(bundle, f.data.graphs, f.data.split.validation,
                                       32)
                              .mean;
  CHECK(restored == doctest::Approx(log.val_auc[log.best_epoch - 1]).epsilon(1e-12));
}

TEST_CASE("same training seed reproduces a bitwise-identical checkpoint") {
  const Fixture& f = fixture();
  auto train_once = [&](const std::string& path) {
    ModelBundle bundle = init_model(f.bundle.config, 3);
    TrainOptions to;
    to.epochs = 2;
    to.batch_size = 32;
    to.seed = 3;
    offline_train(bundle, f.data.graphs, f.data.split.train, f.data.split.validation, to);
    save_checkpoint(path, bundle);
  };
  const auto dir = std::filesystem::temp_directory_path();
  const std::string p1 = (dir / "gapgc_det_a.json").string();
  const std::string p2 = (dir / "gapgc_det_b.json").string();
  train_once(p1);
  train_once(p2);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("a diverging run aborts with a training error naming the step") {
  const Fixture& f = fixture();
  ModelBundle bundle = init_model(f.bundle.config, 4);
  TrainOptions to;
  to.epochs = 1;
  to.batch_size = 16;
  to.seed = 4;
  to.lr = 1e300;
  CHECK_THROWS_WITH_AS(
      offline_train(bundle, f.data.graphs, f.data.split.train, {}, to),
      doctest::Contains("epoch 1"), TrainingError);
}

TEST_CASE("tent reduces batch entropy and touches only bn affine parameters") {
  const Fixture& f = fixture();
  ModelBundle bundle = f.bundle;
  const auto& test_idx = f.data.split.test;

  // record every non-bn parameter before adaptation
  std::map<std::string, std::vector<double>> before;
  for (const auto& name : bundle.params.names()) before[name] = bundle.params.at(name).value.data();

  auto batch_entropy = [&](ModelBundle& b) {
    GraphBatch batch = batch_graphs(f.data.graphs, test_idx);
    Tape tape;
    b.params.set_all_trainable(false);
    BoundParams bound(tape, b.params);
    EncodeOptions eo;
    eo.bn_mode = BnMode::use_batch_stats;
    return mean_binary_entropy_value(forward_logits(tape, bound, b, batch, eo));
  };
  const double h0 = batch_entropy(bundle);

  TTAConfig config = base_config(Method::tent);
  config.batch_size = test_idx.size();  // one fixed batch
  config.phi_steps = 10;
  AdaptReport report = adapt_tent(bundle, f.data.graphs, test_idx, config);
  REQUIRE(report.steps.size() == 10);
  CHECK(batch_entropy(bundle) < h0);
  CHECK(report.steps.front().objective == doctest::Approx(h0).epsilon(1e-12));

  for (const auto& name : bundle.params.names()) {
    const auto& now = bundle.params.at(name).value.data();
    if (name.find(".bn.") != std::string::npos && name.rfind("enc.", 0) == 0) {
      continue;  // the only parameters allowed to move
    }
    CHECK(now == before.at(name));
  }
}

TEST_CASE("bn adaptation standardizes the adaptation batch exactly") {
  const Fixture& f = fixture();
  ModelBundle bundle = f.bundle;
  const auto& test_idx = f.data.split.test;
  TTAConfig config = base_config(Method::bn);
  adapt_bn(bundle, f.data.graphs, test_idx, config);

  // re-run the batch through the adapted stats and inspect pre-affine values
  GraphBatch batch = batch_graphs(f.data.graphs, test_idx);
  std::vector<Tensor> trace;
  Tape tape;
  bundle.params.set_all_trainable(false);
  BoundParams bound(tape, bundle.params);
  EncodeOptions eo;
  eo.bn_mode = BnMode::eval;
  eo.pre_bn_trace = &trace;
  encode_nodes(tape, bound, "enc", bundle.config, bundle.bn_states, batch,
               unit_edge_weights(batch), eo);
  REQUIRE(trace.size() == bundle.config.num_layers);
  for (std::size_t l = 0; l < trace.size(); ++l) {
    const Tensor& x = trace[l];
    const BnState& s = bundle.bn_states[l];
    const std::size_t n = x.shape()[0], c = x.shape()[1];
    for (std::size_t j = 0; j < c; ++j) {
      double mean = 0.0, var = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double z = (x.at(i, j) - s.running_mean[j]) / std::sqrt(s.running_var[j] + s.eps);
        mean += z;
        var += z * z;
      }
      mean /= static_cast<double>(n);
      var = var / static_cast<double>(n) - mean * mean;
      CHECK(std::abs(mean) <= 1e-6);
      CHECK(std::abs(var - 1.0) <= 1e-3);
    }
  }

  SUBCASE("rho = 1 keeps the statistics bitwise") {
    ModelBundle b2 = f.bundle;
    TTAConfig c2 = base_config(Method::bn);
    c2.bn_prior_rho = 1.0;
    adapt_bn(b2, f.data.graphs, test_idx, c2);
    for (std::size_t l = 0; l < b2.bn_states.size(); ++l) {
      CHECK(b2.bn_states[l].running_mean == f.bundle.bn_states[l].running_mean);
      CHECK(b2.bn_states[l].running_var == f.bundle.bn_states[l].running_var);
    }
  }
  SUBCASE("a single-node adaptation batch is a statistics error") {
    Graph g;
    g.num_nodes = 1;
    g.node_features = Tensor({1, 8}, {1, 0, 0, 0, 0, 0, 0.1, 0.2});
    g.labels = {0, 0};
    ModelBundle b3 = f.bundle;
    TTAConfig c3 = base_config(Method::bn);
    CHECK_THROWS_AS(adapt_bn(b3, {g}, {0}, c3), StatsError);
  }
}

TEST_CASE("shot loss pieces behave as documented") {
  SUBCASE("marginal entropy at batch-mean 1/2 is ln 2") {
    Tape tape;
    // two samples with opposite logits: mean prediction exactly 1/2
    Tensor logits({2, 1}, {1.7, -1.7});
    Tensor pbar = tape.mean_axis(tape.sigmoid(logits), 0);
    Tensor h = tape.mean_all(tape.entropy_bernoulli(pbar));
    CHECK(h.data()[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("diversity gradient pushes confident agreement toward balance") {
    Tape tape;
    Tensor logits = tape.leaf(Tensor({4, 1}, {3.0, 3.0, 3.0, 3.0}), "logits");
    Tensor neg_h_marg = tape.scale(
        tape.mean_all(tape.entropy_bernoulli(tape.mean_axis(tape.sigmoid(logits), 0))),
        -1.0);
    GradMap grads = tape.backward(neg_h_marg);
    for (double g : grads.at("logits").data()) CHECK(g > 0.0);  // descent lowers logits
  }
  SUBCASE("beta = 0 reduces the objective to information maximization") {
    const Fixture& f = fixture();
    ModelBundle bundle = f.bundle;
    const auto& test_idx = f.data.split.test;

    // hand-computed H_cond - H_marg on the first (whole-subset) batch
    GraphBatch batch = batch_graphs(f.data.graphs, test_idx);
    Tape tape;
    bundle.params.set_all_trainable(false);
    BoundParams bound(tape, bundle.params);
    EncodeOptions eo;
    eo.bn_mode = BnMode::use_batch_stats;
    Tensor logits = forward_logits(tape, bound, bundle, batch, eo);
    const double h_cond = mean_binary_entropy(tape, logits).data()[0];
    const double h_marg =
        tape.mean_all(tape.entropy_bernoulli(tape.mean_axis(tape.sigmoid(logits), 0)))
            .data()[0];

    TTAConfig config = base_config(Method::shot);
    config.shot_beta = 0.0;
    config.batch_size = test_idx.size();
    config.phi_steps = 1;
    AdaptReport report = adapt_shot(bundle, f.data.graphs, test_idx, config);
    REQUIRE(report.steps.size() == 1);
    CHECK(report.steps.front().objective ==
          doctest::Approx(h_cond - h_marg).epsilon(1e-12));
  }
}

TEST_CASE("a single phi descent step lowers the contrast loss at fixed noise") {
  const Fixture& f = fixture();
  ModelBundle bundle = f.bundle;
  init_augmenter(bundle, AugmenterMode::learnable, 5);

  TTAConfig config = base_config(Method::gapgc);
  config.use_gpps = false;  // fixed positive structure across the comparison
  std::vector<int> subset(f.data.split.test.begin(), f.data.split.test.begin() + 12);
  GraphBatch batch = batch_graphs(f.data.graphs, subset);

  Rng noise_rng(99);
  const auto delta = draw_gumbel_noise(noise_rng, batch.num_pairs());

  auto forward = [&](bool with_grads, GradMap* grads_out) {
    bundle.params.set_all_trainable(false);
    bundle.params.set_trainable(Partition::encoder, true);
    bundle.params.set_trainable(Partition::projector, true);
    Tape tape;
    BoundParams bound(tape, bundle.params);
    AugForward aug =
        build_augmentation(tape, bound, bundle, batch, AugmenterMode::learnable, 0.5, delta);
    ContrastForward c = build_contrast(tape, bound, bundle, batch, config, aug.ehat);
    if (with_grads) *grads_out = tape.backward(c.lhat);
    return c.lhat.data()[0];
  };

  GradMap grads;
  const double before = forward(true, &grads);
  Adam adam(1e-4, 0.0);
  adam.step(bundle.params, trainable_names(bundle.params), grads);
  const double after = forward(false, nullptr);
  CHECK(after < before);
}

TEST_CASE("a theta ascent step under large lambda raises the mean edge logit") {
  const Fixture& f = fixture();
  ModelBundle bundle = f.bundle;
  const auto& test_idx = f.data.split.test;
  GraphBatch batch = batch_graphs(f.data.graphs, test_idx);

  TTAConfig config = base_config(Method::gapgc);
  config.lambda = 50.0;
  config.batch_size = test_idx.size();
  config.theta_steps = 1;
  config.phi_steps = 0;

  init_augmenter(bundle, AugmenterMode::learnable, config.seed);
  const double before = mean_omega(bundle, batch, AugmenterMode::learnable);
  adapt_gapgc(bundle, f.data.graphs, test_idx, config);
  const double after = mean_omega(bundle, batch, AugmenterMode::learnable);
  CHECK(after > before);
}

TEST_CASE("the classifier stays bitwise frozen under every adaptation method") {
  const Fixture& f = fixture();
  const std::uint64_t clf0 = all_model_checksums(f.bundle, Partition::classifier);
  for (Method m : {Method::gapgc, Method::pf_gapgc, Method::tent, Method::bn, Method::shot}) {
    ModelBundle bundle = f.bundle;
    TTAConfig config = base_config(m);
    run_adaptation(bundle, f.data.graphs, f.data.split.test, config);
    CHECK(all_model_checksums(bundle, Partition::classifier) == clf0);
    // and the adapted model still scores sensibly
    const double auc = evaluate_auc(bundle, f.data.graphs, f.data.split.test, 32).mean;
    CHECK(auc >= 0.0);
    CHECK(auc <= 1.0);
  }
}

TEST_CASE("identical config and seed reproduce identical adaptation runs") {
  const Fixture& f = fixture();
  auto run = [&](AdaptReport* report) {
    ModelBundle bundle = f.bundle;
    TTAConfig config = base_config(Method::gapgc);
    config.tta_epochs = 2;
    *report = run_adaptation(bundle, f.data.graphs, f.data.split.test, config);
    return all_model_checksums(bundle, Partition::encoder);
  };
  AdaptReport r1, r2;
  const std::uint64_t c1 = run(&r1);
  const std::uint64_t c2 = run(&r2);
  CHECK(c1 == c2);
  REQUIRE(r1.steps.size() == r2.steps.size());
  for (std::size_t i = 0; i < r1.steps.size(); ++i) {
    CHECK(r1.steps[i].phase == r2.steps[i].phase);
    CHECK(r1.steps[i].loss_contrast == r2.steps[i].loss_contrast);
    CHECK(r1.steps[i].loss_edge == r2.steps[i].loss_edge);
    CHECK(r1.steps[i].objective == r2.steps[i].objective);
    CHECK(r1.steps[i].ehat_mean == r2.steps[i].ehat_mean);
  }
}

TEST_CASE("flags-off gapgc is plain self-positive InfoNCE over random drops") {
  const Fixture& f = fixture();
  ModelBundle bundle = f.bundle;
  TTAConfig config = base_config(Method::gapgc);
  config.use_ala = false;
  config.use_gpps = false;

  std::vector<int> subset(f.data.split.test.begin(), f.data.split.test.begin() + 10);
  GraphBatch batch = batch_graphs(f.data.graphs, subset);
  bundle.params.set_all_trainable(false);
  bundle.params.set_trainable(Partition::encoder, true);
  bundle.params.set_trainable(Partition::projector, true);

  Rng drop_a(123), drop_b(123);

  // engine path
  Tape tape_a;
  BoundParams bound_a(tape_a, bundle.params);
  Tensor mask_a = random_edge_drop(batch.num_pairs(), config.drop_keep_prob, drop_a);
  ContrastForward engine_side = build_contrast(tape_a, bound_a, bundle, batch, config, mask_a);

  // hand-written InfoNCE with each anchor's own augmentation as sole positive
  Tape tape_b;
  BoundParams bound_b(tape_b, bundle.params);
  Tensor mask_b = random_edge_drop(batch.num_pairs(), config.drop_keep_prob, drop_b);
  EncodeOptions eo;
  eo.bn_mode = BnMode::use_batch_stats;
  Tensor h = encode_nodes(tape_b, bound_b, "enc", bundle.config, bundle.bn_states, batch,
                          unit_edge_weights(batch), eo);
  Tensor pooled = mean_pool(tape_b, h, batch);
  Tensor z = project(tape_b, bound_b, pooled);
  classify(tape_b, bound_b, detach(pooled));  // same diagnostic call as the engine
  Tensor h_aug = encode_nodes(tape_b, bound_b, "enc", bundle.config, bundle.bn_states,
                              batch, mask_b, eo);
  Tensor z_aug = project(tape_b, bound_b, mean_pool(tape_b, h_aug, batch));
  PositiveSet self_only;
  self_only.positives.resize(subset.size());
  for (std::size_t i = 0; i < subset.size(); ++i) {
    self_only.positives[i] = {static_cast<int>(i)};
  }
  Tensor plain = contrastive_loss(tape_b, z, z_aug, self_only);

  CHECK(tape_a.num_nodes() == tape_b.num_nodes());
  CHECK(std::memcmp(engine_side.lhat.data().data(), plain.data().data(), sizeof(double)) == 0);
  for (const auto& p : engine_side.positives.positives) CHECK(p.size() == 1);
}

TEST_CASE("evaluation is independent of the evaluation batch size") {
  const Fixture& f = fixture();
  ModelBundle bundle = f.bundle;
  const AucResult a = evaluate_auc(bundle, f.data.graphs, f.data.split.test, 7);
  const AucResult b = evaluate_auc(bundle, f.data.graphs, f.data.split.test, 64);
  REQUIRE(a.per_task.size() == b.per_task.size());
  for (std::size_t t = 0; t < a.per_task.size(); ++t) {
    if (a.computed[t]) CHECK(a.per_task[t] == b.per_task[t]);
  }
}

TEST_CASE("empty adaptation split is a contract error") {
  const Fixture& f = fixture();
  ModelBundle bundle = f.bundle;
  for (Method m : {Method::gapgc, Method::tent, Method::bn, Method::shot}) {
    TTAConfig config = base_config(m);
    CHECK_THROWS_AS(run_adaptation(bundle, f.data.graphs, {}, config), ContractError);
  }
}
