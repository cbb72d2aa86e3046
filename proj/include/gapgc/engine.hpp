#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gapgc/augmenter.hpp"
#include "gapgc/graph.hpp"
#include "gapgc/loss.hpp"
#include "gapgc/metrics.hpp"
#include "gapgc/models.hpp"

namespace gapgc {

enum class Method { none, gapgc, pf_gapgc, tent, bn, shot };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

// Test-time adaptation settings. The min-max loop alternates theta_steps
// ascent steps on (L_hat + lambda * L_e) over the augmenter with phi_steps
// descent steps on L_hat over the encoder (+ projector); tau anneals
// linearly from tau_start to tau_end across batch rounds.
struct TTAConfig {
  Method method = Method::gapgc;
  double lambda = 1.0;
  double gamma = 0.8;
  double tau_start = 0.5;
  double tau_end = 0.1;
  double lr = 1e-3;
  double weight_decay = 0.0;
  std::size_t batch_size = 64;
  std::size_t tta_epochs = 1;
  std::size_t theta_steps = 1;
  std::size_t phi_steps = 1;
  std::uint64_t seed = 1;
  bool use_ala = true;    // false: random edge drops instead of the learned augmenter
  bool use_gpps = true;   // false: each anchor's positive set is only itself
  double shot_beta = 0.3;
  // Random-drop keep probability when use_ala is false; also the learned
  // augmenter's initial keep level (one augmentation-strength knob).
  double drop_keep_prob = 0.8;
  double bn_prior_rho = 0.0;    // stat blending for method bn: rho*old + (1-rho)*batch
  bool freeze_aug_encoder = false;  // restrict the ascent to the scorer MLP
  // When true, augmentation pseudo-labels come from the augmented forward
  // pass; by default both sides use the original graphs' labels.
  bool anchor_label_from_augmented = false;
};

void validate_tta_config(const TTAConfig& config);

struct StepRecord {
  std::size_t step = 0;
  std::string phase;           // "theta" | "phi" | "tent" | "shot"
  double loss_contrast = 0.0;  // L_hat (0 when the phase has none)
  double loss_edge = 0.0;      // mean omega (0 when no learned augmenter ran)
  double objective = 0.0;      // the value the phase optimizes
  double mean_entropy = 0.0;   // mean prediction entropy on the original graphs
  double ehat_mean = 0.0;      // mean edge keep weight of the augmented view
};

struct AdaptReport {
  std::vector<StepRecord> steps;
};

struct TrainOptions {
  std::size_t epochs = 20;
  double lr = 1e-3;
  double weight_decay = 0.0;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
};

struct TrainLog {
  double initial_loss = 0.0;         // train-split loss before any step
  std::vector<double> epoch_loss;    // mean batch loss per epoch
  std::vector<double> val_auc;       // after each epoch (empty without val split)
  std::size_t best_epoch = 0;        // 1-based; 0 = initialization
};

// Adam with L2 regularization folded into the gradient before the moment
// update; one shared step counter per instance.
class Adam {
 public:
  Adam(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  // Applies one update to every named parameter; grads must contain each name
  // with a matching shape.
  void step(ParamStore& params, const std::vector<std::string>& names,
            const GradMap& grads);

  std::size_t steps_taken() const { return t_; }

 private:
  double lr_, wd_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

// Scales all named gradients so their joint L2 norm is at most max_norm;
// returns the pre-clip norm.
double clip_global_norm(GradMap& grads, const std::vector<std::string>& names,
                        double max_norm);

// Names of currently trainable parameters, in store order.
std::vector<std::string> trainable_names(const ParamStore& store);

// encode -> mean pool -> classify with unit edge weights.
Tensor forward_logits(Tape& tape, const BoundParams& params, ModelBundle& bundle,
                      const GraphBatch& batch, const EncodeOptions& opts);

// Mean over present labels of softplus(x) - x*y (per-task sigmoid
// cross-entropy with missing-label masking).
Tensor masked_bce(Tape& tape, const Tensor& logits, const GraphBatch& batch);

// Mean elementwise binary entropy of sigmoid(logits), computed via the
// softplus identity so saturated logits stay finite.
Tensor mean_binary_entropy(Tape& tape, const Tensor& logits);

// Plain-value counterpart used for diagnostics.
double mean_binary_entropy_value(const Tensor& logits);

// Supervised pretraining with Adam on encoder + classifier (projector and
// augmenter stay at initialization), batch-norm in train mode. When a
// validation split is given the best-val-AUC epoch's weights are restored.
TrainLog offline_train(ModelBundle& bundle, const std::vector<Graph>& graphs,
                       const std::vector<int>& train_idx, const std::vector<int>& val_idx,
                       const TrainOptions& opts);

// One augmenter forward on the tape: logits omega, relaxed keep weights
// ehat = gumbel_sigmoid((omega + logit(delta)) / tau) and L_e = mean omega.
struct AugForward {
  Tensor omega;
  Tensor ehat;
  Tensor le;
};

AugForward build_augmentation(Tape& tape, const BoundParams& params, ModelBundle& bundle,
                              const GraphBatch& batch, AugmenterMode mode, double tau,
                              const std::vector<double>& delta);

// One contrastive forward: anchor embeddings from the original graphs, the
// augmented view under aug_edge_weights, pseudo-label positive selection and
// the group contrast loss. pf_gapgc bypasses the projector on both sides.
struct ContrastForward {
  Tensor z;
  Tensor z_aug;
  Tensor logits;  // original-graph logits (no gradient path; label source)
  Tensor lhat;
  PositiveSet positives;
};

ContrastForward build_contrast(Tape& tape, const BoundParams& params, ModelBundle& bundle,
                               const GraphBatch& batch, const TTAConfig& config,
                               const Tensor& aug_edge_weights);

// The alternating min-max adaptation loop over the adaptation stream.
AdaptReport adapt_gapgc(ModelBundle& bundle, const std::vector<Graph>& graphs,
                        const std::vector<int>& indices, const TTAConfig& config);

// Entropy minimization on batch-norm affine parameters only, batch stats.
AdaptReport adapt_tent(ModelBundle& bundle, const std::vector<Graph>& graphs,
                       const std::vector<int>& indices, const TTAConfig& config);

// Statistic substitution: running stats <- rho*old + (1-rho)*subset stats,
// computed over the whole adaptation subset in one pass. No gradient steps.
void adapt_bn(ModelBundle& bundle, const std::vector<Graph>& graphs,
              const std::vector<int>& indices, const TTAConfig& config);

// Information maximization (conditional entropy down, marginal entropy up)
// plus hard pseudo-label cross-entropy, on the encoder.
AdaptReport adapt_shot(ModelBundle& bundle, const std::vector<Graph>& graphs,
                       const std::vector<int>& indices, const TTAConfig& config);

// Replaces (rho-blends) the encoder's running batch-norm statistics with the
// subset's own statistics; the eval-preparation pass every adapting method
// finishes with.
void refresh_running_stats(ModelBundle& bundle, const std::vector<Graph>& graphs,
                           const std::vector<int>& indices, double rho = 0.0);

// Dispatch on config.method. Adapting methods end with a stats refresh over
// the adaptation subset; method none leaves the bundle untouched.
AdaptReport run_adaptation(ModelBundle& bundle, const std::vector<Graph>& graphs,
                           const std::vector<int>& indices, const TTAConfig& config);

// Frozen-model AUC over the given split (eval mode, running statistics).
AucResult evaluate_auc(ModelBundle& bundle, const std::vector<Graph>& graphs,
                       const std::vector<int>& indices, std::size_t batch_size);

}  // namespace gapgc
