#pragma once

#include <functional>
#include <string>
#include <vector>

#include "erlab/autodiff.hpp"
#include "erlab/model.hpp"

namespace erlab {

// Per-token relevance map over the real (non-CLS, non-PAD) tokens of one
// input. scores_var stays connected to the model graph so explanation
// losses built on it are differentiable; scores is a detached copy.
struct AttributionMap {
    std::string technique;  // "att", "attr", "ixg"
    int layer = -1;         // 0-based layer for att/attr, -1 = global
    ad::Var scores_var;     // (1, n_real)
    std::vector<double> scores;
    bool signed_scores = false;
};

// Head-averaged attention matrix of one layer, (seq, seq).
ad::Var head_average_attention(const ModelOutput& output, int layer);

// CLS attention row of one layer: head-averaged, CLS/PAD columns dropped,
// renormalised to sum 1. A row whose real-token mass vanishes falls back
// to the uniform map.
AttributionMap attention_attribution(const ModelOutput& output, int layer);

// Cumulative residual-mixed attention products R_l = (0.5 A_l + 0.5 I) R_{l-1},
// one matrix per layer; every R_l is row-stochastic.
std::vector<ad::Var> rollout_matrices(const ModelOutput& output);

// CLS row of R_{upto_layer}, CLS/PAD columns dropped and renormalised, with
// the same uniform fallback as attention_attribution.
AttributionMap rollout_attribution(const ModelOutput& output, int upto_layer);

// Per token: gradient of the target logit w.r.t. the embedded input, times
// the embedded input, summed over embedding dimensions, absolute value,
// L2-normalised over real tokens (all-zero maps stay all-zero).
AttributionMap input_x_gradient_from(const ModelOutput& output, int target_label);
AttributionMap input_x_gradient(const Model& model, const std::vector<int>& ids_with_cls,
                                int target_label);

// Gradient of loss_on_attr(final rollout map) w.r.t. the model parameters,
// computed without differentiating through the rollout recursion directly:
// the rollout is unrolled numerically, the loss adjoint is pulled back
// through the per-layer mixed matrices by explicit transposed products, and
// each layer contributes through its own attention subgraph. Serves as an
// independent check of end-to-end autodiff. With local_only only the top
// layer's contribution is kept (the recursive pullback is dropped), which
// is exact for a single layer and deliberately wrong for deeper models.
std::vector<Tensor> rollout_gradient_reference(
    const Model& model, const std::vector<int>& ids_with_cls,
    const std::function<ad::Var(const ad::Var& attr)>& loss_on_attr,
    bool local_only = false);

}  // namespace erlab
