#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace erlab {

// Plausibility: agreement between attribution scores and a binary rationale
// mask. Metrics are reported on a 0..100 scale; cases where a metric is
// undefined (single-class mask, no positives) come back empty rather than
// as a sentinel number.

struct PlausibilityScores {
    std::optional<double> auc;
    std::optional<double> average_precision;
    std::optional<double> recall_at_k;
    int k_used = 0;
};

// ROC-AUC with 0.5 credit per tied pair, times 100. Empty when the mask has
// no positives or no negatives.
std::optional<double> auc_plausibility(const std::vector<double>& scores,
                                       const std::vector<int>& mask);

// AP = sum over descending-score thresholds of (R_n - R_{n-1}) * P_n, times
// 100. Ties are grouped per threshold so the result does not depend on the
// order of tied entries. Empty when the mask has no positives.
std::optional<double> average_precision(const std::vector<double>& scores,
                                        const std::vector<int>& mask);

// Fraction of annotated tokens ranked above position k in the descending
// score order (ties broken by position), times 100. k defaults to the
// number of annotated tokens. Empty when the mask has no positives.
std::optional<double> recall_at_k(const std::vector<double>& scores,
                                  const std::vector<int>& mask,
                                  std::optional<int> k = std::nullopt);

PlausibilityScores plausibility(const std::vector<double>& scores,
                                const std::vector<int>& mask,
                                std::optional<int> k = std::nullopt);

// Unweighted mean of per-class F1 over classes that occur in gold or
// predictions, times 100. Labels are {0,1}. Throws on empty input.
double f1_macro(const std::vector<int>& predictions, const std::vector<int>& gold);

// Kendall tau-b (tie corrected), computed by sorting plus merge-based
// inversion counting. Empty when either vector is constant.
std::optional<double> kendall_tau_b(const std::vector<double>& a,
                                    const std::vector<double>& b);

// ---------------------------------------------------------------------------
// faithfulness
// ---------------------------------------------------------------------------

// Classifier evaluated on a sequence of real-token ids (no CLS); returns a
// class distribution.
using PredictFn = std::function<std::vector<double>(const std::vector<int>&)>;

struct FaithfulnessScores {
    double null_diff = 0.0;
    std::vector<double> alpha_grid;
    std::vector<double> suff;  // raw per-alpha values behind the normalised ones
    std::vector<double> comp;
    std::vector<std::optional<double>> norm_suff;
    std::vector<std::optional<double>> norm_comp;
};

inline std::vector<double> default_alpha_grid() { return {0.01, 0.2, 0.4, 0.6, 0.8, 1.0}; }

// Occlusion-based faithfulness. For the predicted class:
//   null_diff  = max(0, p(full) - p(all tokens masked))
//   suff(a)    = 1 - max(0, p(full) - p(top ceil(a*len) tokens kept))
//   comp(a)    = max(0, p(full) - p(top ceil(a*len) tokens masked))
//   norm_suff  = clip((suff(a) - suff(0)) / (1 - suff(0)), 0, 1)
//   norm_comp  = clip(comp(a) / comp(1), 0, 1)
// Masking replaces a token id by mask_id in place. norm_suff entries are
// empty when 1 - suff(0) = 0; norm_comp entries when comp(1) = 0. With
// literal_suff_denominator the denominator is 1 - suff(a) instead of
// 1 - suff(0).
FaithfulnessScores faithfulness(const PredictFn& predict,
                                const std::vector<int>& real_ids,
                                const std::vector<double>& attr_scores,
                                const std::vector<double>& alpha_grid,
                                int mask_id,
                                bool literal_suff_denominator = false);

// ---------------------------------------------------------------------------
// cross-approach attribution correlation
// ---------------------------------------------------------------------------

// One attribution dump row: the scores one model version (approach, seed)
// assigns to one example under one technique/layer.
struct DumpRecord {
    std::string approach;
    uint64_t seed = 0;
    int example = 0;
    std::string technique;  // "att", "attr", "ixg"
    int layer = -1;         // -1 = final/global
    std::vector<double> scores;
};

struct CorrelationRecord {
    std::string technique;
    int layer = -1;
    std::string approach_a;
    std::string approach_b;
    std::vector<double> taus;  // per example, undefined taus skipped
    int skipped = 0;
    double mean_tau = 0.0;
};

// For every example present under both approaches, sample one model version
// (seed) per approach and correlate the two score vectors with Kendall
// tau-b. When the approaches coincide the two sampled seeds are forced
// distinct, so same-approach correlation measures seed-to-seed agreement.
// Throws if the (technique, layer) pair is absent from the dump.
CorrelationRecord correlate_across_approaches(const std::vector<DumpRecord>& dumps,
                                              const std::string& technique, int layer,
                                              const std::string& approach_a,
                                              const std::string& approach_b,
                                              uint64_t sampling_seed);

}  // namespace erlab
