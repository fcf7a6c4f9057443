#include "erlab/attribution.hpp"
#include "erlab/data.hpp"

#include <cmath>
#include <stdexcept>

namespace erlab {

using ad::Var;

namespace {

constexpr double kDegenerateMass = 1e-12;

std::vector<int> real_token_columns(const std::vector<int>& ids) {
    std::vector<int> keep;
    for (size_t i = 1; i < ids.size(); ++i) {
        if (ids[i] != kPadId) keep.push_back(static_cast<int>(i));
    }
    if (keep.empty()) {
        throw std::invalid_argument("attribution: input has no real tokens");
    }
    return keep;
}

// (1, seq) row -> (1, n_real) by keeping the selected columns
Var keep_columns(const Var& row, const std::vector<int>& cols) {
    return ad::transpose(ad::embedding_gather(ad::transpose(row), cols));
}

// normalise a nonnegative row to sum 1; near-zero mass becomes uniform
Var renormalise_or_uniform(const Var& row) {
    const int n = row.shape()[1];
    double mass = 0.0;
    for (double v : row.val().values) mass += v;
    if (mass < kDegenerateMass) {
        return Var::constant(Tensor::full({1, n}, 1.0 / n));
    }
    Var inv = ad::pow_const(ad::reshape(ad::row_sum(row), {}), -1.0);
    return ad::mul(row, ad::bcast_scalar(inv, {1, n}));
}

AttributionMap finish_map(std::string technique, int layer, Var scores_var) {
    AttributionMap map;
    map.technique = std::move(technique);
    map.layer = layer;
    map.scores = scores_var.val().values;
    map.scores_var = std::move(scores_var);
    return map;
}

void check_layer(const ModelOutput& output, int layer) {
    if (layer < 0 || layer >= static_cast<int>(output.attentions.size())) {
        throw std::invalid_argument("attribution: layer index out of range");
    }
}

}  // namespace

Var head_average_attention(const ModelOutput& output, int layer) {
    check_layer(output, layer);
    const auto& heads = output.attentions[layer];
    Var sum = heads[0];
    for (size_t h = 1; h < heads.size(); ++h) sum = ad::add(sum, heads[h]);
    return ad::scale(sum, 1.0 / static_cast<double>(heads.size()));
}

AttributionMap attention_attribution(const ModelOutput& output, int layer) {
    Var avg = head_average_attention(output, layer);
    Var cls_row = ad::slice(avg, 0, 1, 0, output.seq_len);
    Var kept = keep_columns(cls_row, real_token_columns(output.ids));
    return finish_map("att", layer, renormalise_or_uniform(kept));
}

std::vector<Var> rollout_matrices(const ModelOutput& output) {
    const int seq = output.seq_len;
    Tensor half_identity = Tensor::zeros({seq, seq});
    for (int i = 0; i < seq; ++i) half_identity.at(i, i) = 0.5;
    const Var mix = Var::constant(half_identity);

    std::vector<Var> rollout;
    for (size_t l = 0; l < output.attentions.size(); ++l) {
        Var mixed = ad::add(ad::scale(head_average_attention(output, static_cast<int>(l)), 0.5),
                            mix);
        rollout.push_back(rollout.empty() ? mixed : ad::matmul(mixed, rollout.back()));
    }
    return rollout;
}

AttributionMap rollout_attribution(const ModelOutput& output, int upto_layer) {
    check_layer(output, upto_layer);
    std::vector<Var> rollout = rollout_matrices(output);
    Var cls_row = ad::slice(rollout[upto_layer], 0, 1, 0, output.seq_len);
    Var kept = keep_columns(cls_row, real_token_columns(output.ids));
    return finish_map("attr", upto_layer, renormalise_or_uniform(kept));
}

AttributionMap input_x_gradient_from(const ModelOutput& output, int target_label) {
    if (target_label < 0 || target_label >= output.logits.shape()[1]) {
        throw std::invalid_argument("attribution: target label out of range");
    }
    Var logit = ad::reshape(ad::slice(output.logits, 0, 1, target_label, 1), {});
    Var grad = ad::gradient_vars(logit, {output.embedded})[0];
    Var raw = ad::transpose(ad::row_sum(ad::mul(output.embedded, grad)));  // (1, seq)
    Var kept = keep_columns(raw, real_token_columns(output.ids));
    return finish_map("ixg", -1, ad::l2_normalize(ad::abs_fn(kept)));
}

AttributionMap input_x_gradient(const Model& model, const std::vector<int>& ids,
                                int target_label) {
    const ModelOutput output = model.forward(ids);
    return input_x_gradient_from(output, target_label);
}

std::vector<Tensor> rollout_gradient_reference(
    const Model& model, const std::vector<int>& ids,
    const std::function<ad::Var(const ad::Var& attr)>& loss_on_attr,
    bool local_only) {
    const ModelOutput output = model.forward(ids);
    const int seq = output.seq_len;
    const int layers = static_cast<int>(output.attentions.size());
    const std::vector<int> keep = real_token_columns(ids);

    // differentiable per-layer mixed matrices, and their frozen values
    Tensor half_identity = Tensor::zeros({seq, seq});
    for (int i = 0; i < seq; ++i) half_identity.at(i, i) = 0.5;
    std::vector<Var> mixed_vars;
    std::vector<Var> mixed_const;
    for (int l = 0; l < layers; ++l) {
        Var m = ad::add(ad::scale(head_average_attention(output, l), 0.5),
                        Var::constant(half_identity));
        mixed_const.push_back(Var::constant(m.detached()));
        mixed_vars.push_back(std::move(m));
    }

    // numeric rollout prefix states R_0 = I, R_l = M_l R_{l-1}
    Tensor identity = Tensor::zeros({seq, seq});
    for (int i = 0; i < seq; ++i) identity.at(i, i) = 1.0;
    std::vector<Var> prefix{Var::constant(identity)};
    for (int l = 0; l < layers; ++l) {
        prefix.push_back(ad::matmul(mixed_const[l], prefix.back()));
    }

    // adjoint of the final rollout matrix under the loss, via a leaf graph
    // that repeats the CLS-row postprocessing
    Var leaf = Var::leaf(prefix[layers].detached());
    Var attr = renormalise_or_uniform(keep_columns(ad::slice(leaf, 0, 1, 0, seq), keep));
    Var adj_r = ad::gradient_vars(loss_on_attr(attr), {leaf})[0];

    // pull the adjoint back through the recursion; each layer's share is
    // adj(M_l) = adj(R_l) R_{l-1}^T, then adj(R_{l-1}) = M_l^T adj(R_l)
    std::vector<Tensor> grads;
    for (const Var& p : model.params()) grads.push_back(Tensor::zeros(p.shape()));
    for (int l = layers - 1; l >= 0; --l) {
        if (!local_only || l == layers - 1) {
            Var adj_m = ad::matmul(adj_r, ad::transpose(prefix[l]));
            Var contribution = ad::sum_all(ad::mul(Var::constant(adj_m.detached()),
                                                   mixed_vars[l]));
            std::vector<Tensor> layer_grads = ad::gradient(contribution, model.params());
            for (size_t i = 0; i < grads.size(); ++i) {
                for (size_t j = 0; j < grads[i].values.size(); ++j) {
                    grads[i].values[j] += layer_grads[i].values[j];
                }
            }
        }
        if (l > 0) adj_r = ad::matmul(ad::transpose(mixed_const[l]), adj_r);
    }
    return grads;
}

}  // namespace erlab
