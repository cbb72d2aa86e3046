#include "gapgc/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gapgc/error.hpp"

namespace gapgc {

std::string method_name(Method m) {
  switch (m) {
    case Method::none: return "none";
    case Method::gapgc: return "gapgc";
    case Method::pf_gapgc: return "pf_gapgc";
    case Method::tent: return "tent";
    case Method::bn: return "bn";
    case Method::shot: return "shot";
  }
  throw ConfigError("method_name: unknown method");
}

Method method_from_name(const std::string& name) {
  if (name == "none") return Method::none;
  if (name == "gapgc") return Method::gapgc;
  if (name == "pf_gapgc") return Method::pf_gapgc;
  if (name == "tent") return Method::tent;
  if (name == "bn") return Method::bn;
  if (name == "shot") return Method::shot;
  throw ConfigError("unknown adaptation method '" + name + "'");
}

void validate_tta_config(const TTAConfig& c) {
  if (c.lambda < 0.0) throw ConfigError("TTAConfig: lambda must be >= 0");
  if (c.gamma < 0.0 || c.gamma > 1.0) throw ConfigError("TTAConfig: gamma must lie in [0, 1]");
  if (c.tau_start <= 0.0 || c.tau_end <= 0.0) {
    throw ConfigError("TTAConfig: temperatures must stay positive");
  }
  if (c.lr <= 0.0) throw ConfigError("TTAConfig: lr must be positive");
  if (c.weight_decay < 0.0) throw ConfigError("TTAConfig: weight_decay must be >= 0");
  if (c.batch_size < 1) throw ConfigError("TTAConfig: batch_size must be >= 1");
  if (c.tta_epochs < 1) throw ConfigError("TTAConfig: tta_epochs must be >= 1");
  if (c.drop_keep_prob <= 0.0 || c.drop_keep_prob > 1.0) {
    throw ConfigError("TTAConfig: drop_keep_prob must lie in (0, 1]");
  }
  if (c.bn_prior_rho < 0.0 || c.bn_prior_rho > 1.0) {
    throw ConfigError("TTAConfig: bn_prior_rho must lie in [0, 1]");
  }
  if (c.shot_beta < 0.0) throw ConfigError("TTAConfig: shot_beta must be >= 0");
}

// ---- optimizer ---------------------------------------------------------------

Adam::Adam(double lr, double weight_decay, double beta1, double beta2, double eps)
    : lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(ParamStore& params, const std::vector<std::string>& names,
                const GradMap& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const std::string& name : names) {
    auto git = grads.find(name);
    if (git == grads.end()) throw ContractError("Adam: no gradient for parameter " + name);
    ParamEntry& entry = params.at(name);
    if (entry.value.size() != git->second.size()) {
      throw ContractError("Adam: gradient shape mismatch for " + name + ": " +
                          shape_string(entry.value) + " vs " + shape_string(git->second));
    }
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) {
      m.assign(entry.value.size(), 0.0);
      v.assign(entry.value.size(), 0.0);
    }
    auto& p = entry.value.mutable_data();
    const auto& g = git->second.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double geff = g[i] + wd_ * p[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * geff;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * geff * geff;
      p[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
    }
  }
}

double clip_global_norm(GradMap& grads, const std::vector<std::string>& names,
                        double max_norm) {
  double sq = 0.0;
  for (const std::string& name : names) {
    for (double x : grads.at(name).data()) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (const std::string& name : names) {
      for (double& x : grads.at(name).mutable_data()) x *= scale;
    }
  }
  return norm;
}

std::vector<std::string> trainable_names(const ParamStore& store) {
  std::vector<std::string> out;
  for (const auto& [name, entry] : store.entries()) {
    if (entry.trainable) out.push_back(name);
  }
  return out;
}

// ---- forward helpers ---------------------------------------------------------

namespace {

std::vector<std::vector<int>> chunk_indices(const std::vector<int>& indices,
                                            std::size_t batch_size) {
  std::vector<std::vector<int>> chunks;
  for (std::size_t i = 0; i < indices.size(); i += batch_size) {
    const std::size_t hi = std::min(indices.size(), i + batch_size);
    chunks.emplace_back(indices.begin() + i, indices.begin() + hi);
  }
  return chunks;
}

Tensor labels_to_tensor(const std::vector<PseudoLabel>& labels) {
  const std::size_t m = labels.size();
  const std::size_t t = m == 0 ? 0 : labels[0].size();
  std::vector<double> v;
  v.reserve(m * t);
  for (const PseudoLabel& l : labels) {
    for (int bit : l) v.push_back(static_cast<double>(bit));
  }
  return Tensor({m, t}, std::move(v));
}

double tensor_mean(const Tensor& t) {
  if (t.size() == 0) return 0.0;
  double total = 0.0;
  for (double x : t.data()) total += x;
  return total / static_cast<double>(t.size());
}

void check_record_finite(const StepRecord& r) {
  for (double x : {r.loss_contrast, r.loss_edge, r.objective, r.mean_entropy, r.ehat_mean}) {
    if (!std::isfinite(x)) {
      throw TrainingError("adaptation produced a non-finite report value at step " +
                          std::to_string(r.step) + " (" + r.phase + ")");
    }
  }
}

}  // namespace

Tensor forward_logits(Tape& tape, const BoundParams& params, ModelBundle& bundle,
                      const GraphBatch& batch, const EncodeOptions& opts) {
  Tensor h = encode_nodes(tape, params, "enc", bundle.config, bundle.bn_states, batch,
                          unit_edge_weights(batch), opts);
  return classify(tape, params, mean_pool(tape, h, batch));
}

Tensor masked_bce(Tape& tape, const Tensor& logits, const GraphBatch& batch) {
  double count = 0.0;
  for (double m : batch.label_mask.data()) count += m;
  if (count == 0.0) throw ContractError("masked_bce: batch has no observed label");
  Tensor per = tape.sub(tape.softplus(logits), tape.mul(logits, batch.labels));
  return tape.scale(tape.sum_all(tape.mul(per, batch.label_mask)), 1.0 / count);
}

Tensor mean_binary_entropy(Tape& tape, const Tensor& logits) {
  Tensor neg = tape.scale(logits, -1.0);
  Tensor h = tape.add(tape.mul(tape.sigmoid(logits), tape.softplus(neg)),
                      tape.mul(tape.sigmoid(neg), tape.softplus(logits)));
  return tape.mean_all(h);
}

double mean_binary_entropy_value(const Tensor& logits) {
  if (logits.size() == 0) return 0.0;
  double total = 0.0;
  for (double x : logits.data()) {
    const double sp_pos = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
    const double sp_neg = sp_pos - x;
    const double p = 1.0 / (1.0 + std::exp(-x));
    total += p * sp_neg + (1.0 - p) * sp_pos;
  }
  return total / static_cast<double>(logits.size());
}

// ---- offline training --------------------------------------------------------

TrainLog offline_train(ModelBundle& bundle, const std::vector<Graph>& graphs,
                       const std::vector<int>& train_idx, const std::vector<int>& val_idx,
                       const TrainOptions& opts) {
  if (train_idx.empty()) throw ContractError("offline_train: empty train split");
  if (opts.epochs < 1) throw ConfigError("offline_train: epochs must be >= 1");
  if (opts.lr <= 0.0) throw ConfigError("offline_train: lr must be positive");
  if (opts.batch_size < 1) throw ConfigError("offline_train: batch_size must be >= 1");

  bundle.params.set_all_trainable(false);
  bundle.params.set_trainable(Partition::encoder, true);
  bundle.params.set_trainable(Partition::classifier, true);
  const std::vector<std::string> names = trainable_names(bundle.params);

  Adam adam(opts.lr, opts.weight_decay);
  Rng shuffle_rng(mix_seed(opts.seed, 0x0FF1));
  Rng dropout_rng(mix_seed(opts.seed, 0xD20F));

  TrainLog log;
  {  // pre-training loss, measured without touching the running statistics
    double total = 0.0;
    std::size_t batches = 0;
    for (const auto& chunk : chunk_indices(train_idx, opts.batch_size)) {
      GraphBatch batch = batch_graphs(graphs, chunk);
      Tape tape;
      BoundParams bound(tape, bundle.params);
      EncodeOptions eo;
      eo.bn_mode = BnMode::use_batch_stats;
      total += masked_bce(tape, forward_logits(tape, bound, bundle, batch, eo), batch)
                   .data()[0];
      ++batches;
    }
    log.initial_loss = total / static_cast<double>(batches);
  }

  ModelBundle best = bundle;
  double best_auc = -std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
    std::vector<int> order = train_idx;
    shuffle_rng.shuffle(order);
    double epoch_total = 0.0;
    std::size_t batches = 0;
    for (const auto& chunk : chunk_indices(order, opts.batch_size)) {
      try {
        GraphBatch batch = batch_graphs(graphs, chunk);
        Tape tape;
        BoundParams bound(tape, bundle.params);
        EncodeOptions eo;
        eo.bn_mode = BnMode::train;
        if (bundle.config.dropout_rate > 0.0) eo.dropout_rng = &dropout_rng;
        Tensor loss = masked_bce(tape, forward_logits(tape, bound, bundle, batch, eo), batch);
        GradMap grads = tape.backward(loss);
        adam.step(bundle.params, names, grads);
        epoch_total += loss.data()[0];
        ++batches;
      } catch (const NumericError& e) {
        throw TrainingError("offline_train: non-finite value at epoch " +
                            std::to_string(epoch) + ", batch " + std::to_string(batches) +
                            ": " + e.what());
      }
    }
    log.epoch_loss.push_back(epoch_total / static_cast<double>(batches));

    if (!val_idx.empty()) {
      const double auc = evaluate_auc(bundle, graphs, val_idx, opts.batch_size).mean;
      log.val_auc.push_back(auc);
      if (auc > best_auc) {
        best_auc = auc;
        best = bundle;
        log.best_epoch = epoch;
      }
    }
  }
  if (!val_idx.empty()) bundle = best;
  bundle.params.set_all_trainable(true);
  return log;
}

// ---- adaptation building blocks ----------------------------------------------

AugForward build_augmentation(Tape& tape, const BoundParams& params, ModelBundle& bundle,
                              const GraphBatch& batch, AugmenterMode mode, double tau,
                              const std::vector<double>& delta) {
  AugForward f;
  f.omega = compute_edge_logits(tape, params, bundle, batch, mode, BnMode::use_batch_stats);
  f.ehat = gumbel_sigmoid(tape, f.omega, tau, delta);
  f.le = regularizer_le(tape, f.omega);
  return f;
}

ContrastForward build_contrast(Tape& tape, const BoundParams& params, ModelBundle& bundle,
                               const GraphBatch& batch, const TTAConfig& config,
                               const Tensor& aug_edge_weights) {
  const bool pf = config.method == Method::pf_gapgc;
  EncodeOptions eo;
  eo.bn_mode = BnMode::use_batch_stats;

  Tensor h = encode_nodes(tape, params, "enc", bundle.config, bundle.bn_states, batch,
                          unit_edge_weights(batch), eo);
  Tensor pooled = mean_pool(tape, h, batch);
  ContrastForward out;
  out.z = pf ? pooled : project(tape, params, pooled);
  out.logits = classify(tape, params, detach(pooled));

  Tensor h_aug = encode_nodes(tape, params, "enc", bundle.config, bundle.bn_states, batch,
                              aug_edge_weights, eo);
  Tensor pooled_aug = mean_pool(tape, h_aug, batch);
  out.z_aug = pf ? pooled_aug : project(tape, params, pooled_aug);

  std::vector<PseudoLabel> labels = pseudo_label(out.logits);
  if (config.use_gpps) {
    std::vector<PseudoLabel> aug_labels =
        config.anchor_label_from_augmented
            ? pseudo_label(classify(tape, params, detach(pooled_aug)))
            : labels;
    out.positives = select_positives(labels, aug_labels, config.gamma);
  } else {
    out.positives.positives.resize(batch.num_graphs());
    for (std::size_t i = 0; i < batch.num_graphs(); ++i) {
      out.positives.positives[i] = {static_cast<int>(i)};
    }
  }
  out.lhat = contrastive_loss(tape, out.z, out.z_aug, out.positives);
  return out;
}

// ---- GAPGC -------------------------------------------------------------------

namespace {

void set_theta_trainable(ParamStore& params, const TTAConfig& config) {
  params.set_all_trainable(false);
  if (!config.freeze_aug_encoder) params.set_trainable(Partition::aug_encoder, true);
  if (config.method == Method::gapgc) params.set_trainable(Partition::aug_scorer, true);
}

void set_phi_trainable(ParamStore& params, const TTAConfig& config) {
  params.set_all_trainable(false);
  params.set_trainable(Partition::encoder, true);
  if (config.method != Method::pf_gapgc) params.set_trainable(Partition::projector, true);
}

}  // namespace

AdaptReport adapt_gapgc(ModelBundle& bundle, const std::vector<Graph>& graphs,
                        const std::vector<int>& indices, const TTAConfig& config) {
  if (indices.empty()) throw ContractError("adapt_gapgc: empty adaptation split");
  validate_tta_config(config);
  if (config.method != Method::gapgc && config.method != Method::pf_gapgc) {
    throw ConfigError("adapt_gapgc: method must be gapgc or pf_gapgc");
  }
  const AugmenterMode mode = config.method == Method::pf_gapgc
                                 ? AugmenterMode::parameter_free
                                 : AugmenterMode::learnable;
  if (config.use_ala) {
    if (bundle.aug_bn_states.empty()) {
      init_augmenter(bundle, mode, config.seed, config.drop_keep_prob);
    } else if (mode == AugmenterMode::learnable && !bundle.params.contains("aug.scorer.w1")) {
      throw ContractError("adapt_gapgc: bundle's augmenter has no scorer (was it "
                          "initialized parameter-free?)");
    }
  }

  Rng gumbel_rng(mix_seed(config.seed, 0x6B01));
  Rng drop_rng(mix_seed(config.seed, 0xDD09));
  Adam adam_theta(config.lr, config.weight_decay);
  Adam adam_phi(config.lr, config.weight_decay);

  const auto chunks = chunk_indices(indices, config.batch_size);
  const std::size_t rounds = config.tta_epochs * chunks.size();
  AdaptReport report;
  std::size_t round = 0;
  std::size_t step_counter = 0;

  for (std::size_t epoch = 0; epoch < config.tta_epochs; ++epoch) {
    for (const auto& chunk : chunks) {
      const GraphBatch batch = batch_graphs(graphs, chunk);
      const double anneal =
          rounds > 1 ? static_cast<double>(round) / static_cast<double>(rounds - 1) : 0.0;
      const double tau = config.tau_start + (config.tau_end - config.tau_start) * anneal;

      if (config.use_ala) {
        set_theta_trainable(bundle.params, config);
        const std::vector<std::string> theta_names = trainable_names(bundle.params);
        for (std::size_t s = 0; !theta_names.empty() && s < config.theta_steps; ++s) {
          try {
            Tape tape;
            BoundParams bound(tape, bundle.params);
            const auto delta = draw_gumbel_noise(gumbel_rng, batch.num_pairs());
            AugForward aug = build_augmentation(tape, bound, bundle, batch, mode, tau, delta);
            ContrastForward c = build_contrast(tape, bound, bundle, batch, config, aug.ehat);
            Tensor objective = tape.add(c.lhat, tape.scale(aug.le, config.lambda));
            GradMap grads = tape.backward(tape.scale(objective, -1.0));
            clip_global_norm(grads, theta_names, 5.0);
            adam_theta.step(bundle.params, theta_names, grads);

            StepRecord r;
            r.step = step_counter++;
            r.phase = "theta";
            r.loss_contrast = c.lhat.data()[0];
            r.loss_edge = aug.le.data()[0];
            r.objective = objective.data()[0];
            r.mean_entropy = mean_binary_entropy_value(c.logits);
            r.ehat_mean = tensor_mean(aug.ehat);
            check_record_finite(r);
            report.steps.push_back(r);
          } catch (const NumericError& e) {
            throw TrainingError("adapt_gapgc: non-finite value in theta step " +
                                std::to_string(step_counter) + ": " + e.what());
          }
        }
      }

      set_phi_trainable(bundle.params, config);
      const std::vector<std::string> phi_names = trainable_names(bundle.params);
      for (std::size_t s = 0; s < config.phi_steps; ++s) {
        try {
          Tape tape;
          BoundParams bound(tape, bundle.params);
          Tensor weights;
          double le_value = 0.0;
          if (config.use_ala) {
            const auto delta = draw_gumbel_noise(gumbel_rng, batch.num_pairs());
            AugForward aug = build_augmentation(tape, bound, bundle, batch, mode, tau, delta);
            weights = aug.ehat;
            le_value = aug.le.data()[0];
          } else {
            weights = random_edge_drop(batch.num_pairs(), config.drop_keep_prob, drop_rng);
          }
          ContrastForward c = build_contrast(tape, bound, bundle, batch, config, weights);
          GradMap grads = tape.backward(c.lhat);
          adam_phi.step(bundle.params, phi_names, grads);

          StepRecord r;
          r.step = step_counter++;
          r.phase = "phi";
          r.loss_contrast = c.lhat.data()[0];
          r.loss_edge = le_value;
          r.objective = c.lhat.data()[0];
          r.mean_entropy = mean_binary_entropy_value(c.logits);
          r.ehat_mean = tensor_mean(weights);
          check_record_finite(r);
          report.steps.push_back(r);
        } catch (const NumericError& e) {
          throw TrainingError("adapt_gapgc: non-finite value in phi step " +
                              std::to_string(step_counter) + ": " + e.what());
        }
      }
      ++round;
    }
  }
  return report;
}

// ---- baselines ---------------------------------------------------------------

namespace {

// Shared loop shape for the gradient-based baselines.
template <typename LossFn>
AdaptReport entropy_style_adapt(ModelBundle& bundle, const std::vector<Graph>& graphs,
                                const std::vector<int>& indices, const TTAConfig& config,
                                const char* phase, LossFn&& make_loss) {
  if (indices.empty()) {
    throw ContractError(std::string("adapt_") + phase + ": empty adaptation split");
  }
  validate_tta_config(config);
  const std::vector<std::string> names = trainable_names(bundle.params);
  if (names.empty()) {
    throw ContractError(std::string("adapt_") + phase + ": nothing is trainable");
  }
  Adam adam(config.lr, config.weight_decay);
  AdaptReport report;
  std::size_t step_counter = 0;
  for (std::size_t epoch = 0; epoch < config.tta_epochs; ++epoch) {
    for (const auto& chunk : chunk_indices(indices, config.batch_size)) {
      const GraphBatch batch = batch_graphs(graphs, chunk);
      for (std::size_t s = 0; s < config.phi_steps; ++s) {
        try {
          Tape tape;
          BoundParams bound(tape, bundle.params);
          EncodeOptions eo;
          eo.bn_mode = BnMode::use_batch_stats;
          Tensor logits = forward_logits(tape, bound, bundle, batch, eo);
          Tensor loss = make_loss(tape, logits);
          GradMap grads = tape.backward(loss);
          adam.step(bundle.params, names, grads);

          StepRecord r;
          r.step = step_counter++;
          r.phase = phase;
          r.objective = loss.data()[0];
          r.mean_entropy = mean_binary_entropy_value(logits);
          check_record_finite(r);
          report.steps.push_back(r);
        } catch (const NumericError& e) {
          throw TrainingError(std::string("adapt_") + phase + ": non-finite value at step " +
                              std::to_string(step_counter) + ": " + e.what());
        }
      }
    }
  }
  return report;
}

}  // namespace

AdaptReport adapt_tent(ModelBundle& bundle, const std::vector<Graph>& graphs,
                       const std::vector<int>& indices, const TTAConfig& config) {
  bundle.params.set_all_trainable(false);
  for (const std::string& name : bundle.params.names(Partition::encoder)) {
    if (name.find(".bn.") != std::string::npos) bundle.params.at(name).trainable = true;
  }
  return entropy_style_adapt(bundle, graphs, indices, config, "tent",
                             [](Tape& tape, const Tensor& logits) {
                               return mean_binary_entropy(tape, logits);
                             });
}

AdaptReport adapt_shot(ModelBundle& bundle, const std::vector<Graph>& graphs,
                       const std::vector<int>& indices, const TTAConfig& config) {
  bundle.params.set_all_trainable(false);
  bundle.params.set_trainable(Partition::encoder, true);
  const double beta = config.shot_beta;
  return entropy_style_adapt(
      bundle, graphs, indices, config, "shot", [beta](Tape& tape, const Tensor& logits) {
        Tensor h_cond = mean_binary_entropy(tape, logits);
        Tensor pbar = tape.mean_axis(tape.sigmoid(logits), 0);
        Tensor h_marg = tape.mean_all(tape.entropy_bernoulli(pbar));
        Tensor yhat = labels_to_tensor(pseudo_label(detach(logits)));
        Tensor ce = tape.mean_all(tape.sub(tape.softplus(logits), tape.mul(logits, yhat)));
        return tape.add(tape.sub(h_cond, h_marg), tape.scale(ce, beta));
      });
}

void refresh_running_stats(ModelBundle& bundle, const std::vector<Graph>& graphs,
                           const std::vector<int>& indices, double rho) {
  if (indices.empty()) throw ContractError("refresh_running_stats: empty subset");
  if (rho < 0.0 || rho > 1.0) {
    throw ConfigError("refresh_running_stats: rho must lie in [0, 1]");
  }
  const GraphBatch batch = batch_graphs(graphs, indices);
  Tape tape;
  BoundParams bound(tape, bundle.params);
  EncodeOptions eo;
  eo.bn_mode = BnMode::train;
  eo.bn_momentum = 1.0 - rho;
  encode_nodes(tape, bound, "enc", bundle.config, bundle.bn_states, batch,
               unit_edge_weights(batch), eo);
}

void adapt_bn(ModelBundle& bundle, const std::vector<Graph>& graphs,
              const std::vector<int>& indices, const TTAConfig& config) {
  if (indices.empty()) throw ContractError("adapt_bn: empty adaptation split");
  validate_tta_config(config);
  refresh_running_stats(bundle, graphs, indices, config.bn_prior_rho);
}

AdaptReport run_adaptation(ModelBundle& bundle, const std::vector<Graph>& graphs,
                           const std::vector<int>& indices, const TTAConfig& config) {
  switch (config.method) {
    case Method::none:
      return {};
    case Method::gapgc:
    case Method::pf_gapgc: {
      AdaptReport r = adapt_gapgc(bundle, graphs, indices, config);
      refresh_running_stats(bundle, graphs, indices);
      return r;
    }
    case Method::tent: {
      AdaptReport r = adapt_tent(bundle, graphs, indices, config);
      refresh_running_stats(bundle, graphs, indices);
      return r;
    }
    case Method::shot: {
      AdaptReport r = adapt_shot(bundle, graphs, indices, config);
      refresh_running_stats(bundle, graphs, indices);
      return r;
    }
    case Method::bn:
      adapt_bn(bundle, graphs, indices, config);
      return {};
  }
  throw ConfigError("run_adaptation: unknown method");
}

AucResult evaluate_auc(ModelBundle& bundle, const std::vector<Graph>& graphs,
                       const std::vector<int>& indices, std::size_t batch_size) {
  if (indices.empty()) throw ContractError("evaluate_auc: empty split");
  if (batch_size < 1) throw ConfigError("evaluate_auc: batch_size must be >= 1");
  const std::size_t tasks = bundle.config.task_count;
  std::vector<double> scores, labels, mask;
  scores.reserve(indices.size() * tasks);
  labels.reserve(indices.size() * tasks);
  mask.reserve(indices.size() * tasks);
  for (const auto& chunk : chunk_indices(indices, batch_size)) {
    GraphBatch batch = batch_graphs(graphs, chunk);
    Tape tape;
    BoundParams bound(tape, bundle.params);
    EncodeOptions eo;  // eval mode: running statistics, batch-independent
    Tensor logits = forward_logits(tape, bound, bundle, batch, eo);
    scores.insert(scores.end(), logits.data().begin(), logits.data().end());
    labels.insert(labels.end(), batch.labels.data().begin(), batch.labels.data().end());
    mask.insert(mask.end(), batch.label_mask.data().begin(), batch.label_mask.data().end());
  }
  const std::size_t n = indices.size();
  return roc_auc_multitask(Tensor({n, tasks}, std::move(scores)),
                           Tensor({n, tasks}, std::move(labels)),
                           Tensor({n, tasks}, std::move(mask)));
}

}  // namespace gapgc
