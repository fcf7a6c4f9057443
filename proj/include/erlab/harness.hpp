#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "erlab/data.hpp"
#include "erlab/metrics.hpp"
#include "erlab/model.hpp"
#include "erlab/training.hpp"

namespace erlab {

// The trainable approaches: the plain baseline, jointly regularised models
// per guided technique, constrained models per guided technique, and the
// explanation-only fits used to calibrate bounds.
enum class Approach {
    baseline,
    er_att,
    er_attr,
    er_ixg,
    erc_att,
    erc_attr,
    erc_ixg,
    expl_only_att,
    expl_only_attr,
    expl_only_ixg,
};

std::string approach_name(Approach a);
Approach parse_approach(const std::string& name);
Objective approach_objective(Approach a);
std::optional<Technique> approach_technique(Approach a);

std::vector<uint64_t> default_seeds();  // fifteen seeds, 1..15

struct ExperimentConfig {
    Approach approach = Approach::baseline;
    ModelConfig model;        // vocab_size is overwritten from the corpus
    std::string data_dir;     // loaded when set; otherwise synth is generated
    SyntheticSpec synth;
    TrainConfig training;
    std::vector<uint64_t> seeds = default_seeds();
    int retry_budget = 2;     // fresh seeds tried per failed constrained run
    std::optional<Bounds> bounds;  // computed from expl-only runs when absent
    int bound_seeds = 3;
    int faithfulness_sample = 128;  // examples per split, 0 = all
    std::string out_dir;      // empty = keep everything in memory
};

struct MetricAggregate {
    double mean = 0.0;
    double stdev = 0.0;  // sample standard deviation, 0 when count < 2
    int count = 0;
};

MetricAggregate aggregate(const std::vector<double>& values);

struct PlausibilityRow {
    std::string technique;
    int layer = -1;
    double auc = 0.0;
    double ap = 0.0;
    double recall = 0.0;
    int defined = 0;  // examples whose metrics were defined
};

struct FaithfulnessRow {
    std::string technique;  // top layer for att/attr
    double null_diff = 0.0;
    double norm_suff = 0.0;  // mean over the alpha grid, defined entries only
    double norm_comp = 0.0;
    int n = 0;
};

struct SplitScores {
    double f1 = 0.0;
    std::vector<PlausibilityRow> plausibility;
    std::vector<FaithfulnessRow> faithfulness;
};

struct SeedOutcome {
    uint64_t requested_seed = 0;
    uint64_t used_seed = 0;
    int retries = 0;
    bool failed = false;  // constrained bound never met within the budget
    size_t selected_epoch = 0;
    CurvePoint final_val;  // validation curve at the selected epoch
    std::map<std::string, SplitScores> splits;  // dev, test_id, test_ood
};

struct RunReport {
    std::string approach;
    std::vector<uint64_t> requested_seeds;
    std::optional<Bounds> bounds;
    std::vector<SeedOutcome> seeds;
    std::vector<CorrelationRecord> correlations;  // seed-to-seed map agreement
    std::map<std::string, MetricAggregate> aggregates;
};

// Keys like "dev/f1", "dev/auc/att1", "test_ood/faith/ixg/norm_comp",
// "val/ce"; failed seeds are excluded.
std::map<std::string, MetricAggregate> aggregate_outcomes(const std::vector<SeedOutcome>& seeds);

// Trains every seed of one approach, selects checkpoints, dumps attribution
// maps for all techniques on dev/test_id/test_ood, scores them, and
// aggregates. Constrained seeds whose bound is never met retry on fresh
// derived seeds up to the retry budget and are recorded as failed after
// that. With out_dir set, per-seed curves, checkpoints, dumps, and the
// report itself land on disk, byte-reproducible from the config.
RunReport run_experiment(const ExperimentConfig& config);

void write_report(const std::string& path, const RunReport& report);
RunReport read_report(const std::string& path);

// Attribution maps of one model over one split: attention and rollout maps
// for every layer plus input-times-gradient for the predicted class.
std::vector<DumpRecord> dump_attributions(const Model& model, const Vocab& vocab,
                                          const std::vector<RationaleExample>& split,
                                          const std::string& approach, uint64_t seed);

// F1, per-(technique, layer) plausibility against the rationales, and
// occlusion faithfulness for the top-layer/global techniques.
SplitScores score_split(const Model& model, const Vocab& vocab,
                        const std::vector<RationaleExample>& split,
                        const std::vector<DumpRecord>& dumps, int faithfulness_sample);

struct LambdaSweepRow {
    double lambda = 0.0;
    int seeds = 0;
    MetricAggregate train_ce, train_expl, val_ce, val_expl;  // final epoch
};

struct LambdaSweep {
    std::vector<LambdaSweepRow> rows;
    double bound_reference = 0.0;  // expl-only validation bound for the plots
};

// Joint training across the lambda grid, >= 5 seeds per point; the zero row
// is the baseline by construction. Rows report final-epoch losses.
LambdaSweep sweep_lambda(const ExperimentConfig& base, const std::vector<double>& grid);

void write_sweep_csv(const std::string& path, const LambdaSweep& sweep);

struct ScatterTable {
    std::vector<std::string> columns;  // seed, approach, predictors..., ood_f1
    struct Row {
        uint64_t seed = 0;
        std::string approach;
        std::vector<double> values;  // aligned with columns[2..]
    };
    std::vector<Row> rows;
    // Kendall tau-b of each predictor column against OOD F1; empty when the
    // column is constant.
    std::map<std::string, std::optional<double>> rank_correlations;
};

// Per-seed pairing of model-selection signals (dev F1, dev plausibility
// AUC per technique, OOD plausibility AUC per technique) with OOD F1.
ScatterTable emit_ood_scatter(const std::vector<RunReport>& reports);

void write_scatter_csv(const std::string& path, const ScatterTable& table);

struct EffectCell {
    std::string setup;     // joint | constrained
    std::string guidance;  // local | global
    std::vector<std::string> approaches;  // members present in the reports
    std::vector<std::string> missing;     // expected members that were absent
    // +, -, 0, or "?" when no member approach was available
    std::string f1_effect, guided_effect, non_guided_effect;
    double f1_delta = 0.0, guided_delta = 0.0, non_guided_delta = 0.0;
};

struct EffectTable {
    std::vector<EffectCell> cells;  // joint/local, joint/global, constr/local, constr/global
    bool baseline_present = false;
};

// Directional effect of each regularisation family against the baseline on
// OOD F1, guided-technique dev plausibility, and non-guided dev
// plausibility. A difference counts only when it clears margin_scale pooled
// standard deviations.
EffectTable summarize_effects(const std::vector<RunReport>& reports, double margin_scale = 1.0);

void write_effects_json(const std::string& path, const EffectTable& table);

}  // namespace erlab
