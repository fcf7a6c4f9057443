#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "erlab/attribution.hpp"
#include "erlab/data.hpp"
#include "erlab/model.hpp"

namespace erlab {

enum class Technique { att, attr, ixg };
std::string technique_name(Technique t);
Technique parse_technique(const std::string& name);

enum class Objective { baseline, joint, expl_only, constrained };
std::string objective_name(Objective o);
Objective parse_objective(const std::string& name);

// Per-example supervision for the explanation loss. Att/AttR targets are the
// rationale mask normalised to sum to one; IxG targets keep the raw binary
// values.
struct ExplanationTarget {
    std::vector<double> values;
    bool sum_to_one = false;
};

// Throws on an all-zero mask for the sum-to-one techniques.
ExplanationTarget build_target(const std::vector<int>& rationale_mask, Technique technique);

// Mean absolute error between the attribution map and the target. Att/AttR
// scores are scaled by 100 and renormalised with a softmax first; IxG scores
// enter as-is. Differentiable through scores_var. Throws on length mismatch.
ad::Var explanation_loss(const AttributionMap& attr, const ExplanationTarget& target);

// ce + lambda * expl. Throws on negative lambda.
ad::Var joint_loss(const ad::Var& ce, const ad::Var& expl, double lambda);

// Lagrange multiplier state for constrained training. The multiplier climbs
// while the training explanation loss exceeds b_train and is clamped at
// zero, with an RMSprop-style second-moment normaliser on the ascent step
// (set adaptive = false for a plain step). The wide eps keeps the step
// proportional to the violation once it shrinks below that scale, so mu
// settles at the constraint floor instead of oscillating there.
struct DualState {
    double mu = 0.0;
    double b_train = 0.0;
    double dual_lr = 0.3;
    double second_moment = 0.0;
    double decay = 0.99;
    double eps = 1e-2;
    bool adaptive = true;
};

DualState dual_update(const DualState& state, double observed_expl);

struct TrainConfig {
    double lambda = 1.0;
    double learning_rate = 8e-3;
    int max_epochs = 12;
    int batch_size = 32;
    double warmup_fraction = 0.1;  // linear ramp over this share of steps
    bool lr_decay = true;          // linear decay to zero after warmup
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.98;
    double adam_eps = 1e-8;
    double dual_lr = 0.3;                 // constrained runs only
    bool dual_adaptive = true;            // RMSprop-normalised ascent step
    std::optional<double> b_train;        // required for constrained runs
};

struct CurvePoint {
    double ce = 0.0;
    double expl = 0.0;
    double total = 0.0;
    double mu = 0.0;
};

struct EpochCurves {
    CurvePoint train;
    CurvePoint val;
};

struct TrainResult {
    ModelConfig model_config;
    std::vector<EpochCurves> epochs;
    std::vector<std::vector<Tensor>> snapshots;  // parameters after each epoch
    std::vector<double> mu_trace;                // multiplier after every step
};

// Runs one training job. The objective picks the per-example loss graph:
//   baseline     ce                      (technique, if given, is measured only)
//   joint        ce + lambda * expl     (lambda = 0 builds the plain ce graph)
//   expl-only    expl
//   constrained  ce + mu * expl, with a dual ascent step on mu per batch
// Per-epoch train/val CE and explanation losses come from a full evaluation
// pass with the epoch's parameters. Deterministic given the seed: the seed
// drives initialisation and batch order through named substreams.
TrainResult train(const ModelConfig& model_config, const DataSplits& data, const Vocab& vocab,
                  Objective objective, std::optional<Technique> technique,
                  const TrainConfig& config, uint64_t seed);

// Mean CE and mean explanation loss of a model over one split (expl = 0
// when no technique is given). Forward-only.
std::pair<double, double> evaluate_losses(const Model& model, const Vocab& vocab,
                                          const std::vector<RationaleExample>& split,
                                          std::optional<Technique> technique);

struct Bounds {
    double b_train = 0.0;
    double b_val = 0.0;
};

// From explanation-only runs: b_val is the mean over runs of the minimum
// validation explanation loss, b_train is 1.5 times the mean over runs of
// the minimum training explanation loss. Throws when no runs are given.
Bounds set_bounds(const std::vector<TrainResult>& expl_only_runs);

struct SelectionRule {
    enum class Kind { min_avg_val_loss, min_val_ce_subject_to_bound };
    Kind kind = Kind::min_avg_val_loss;
    double slack = 1.1;
    double b_val = 0.0;  // used by the bound rule
};

// Epoch index of the checkpoint to keep. The average-loss rule takes the
// argmin of the recorded validation total; the bound rule takes the argmin
// of validation CE among epochs whose validation explanation loss is below
// slack * b_val and throws a "bound never met" error when no epoch
// qualifies.
size_t select_checkpoint(const TrainResult& result, const SelectionRule& rule);

// CSV with columns epoch,split,ce,expl,total,mu; one train and one val row
// per epoch, doubles written with round-trip precision.
void write_curves_csv(const std::string& path, const TrainResult& result);

}  // namespace erlab
