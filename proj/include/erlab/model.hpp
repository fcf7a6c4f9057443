#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "erlab/autodiff.hpp"

namespace erlab {

struct ModelConfig {
    int num_layers = 2;
    int num_heads = 2;
    int d_model = 32;
    int d_ff = 64;
    int vocab_size = 0;  // must be set from the corpus
    int max_seq_len = 32;
    int num_classes = 2;
    uint64_t seed = 0;
};

// Everything the attribution engine needs from one evaluation: logits,
// per-layer per-head attention matrices (row-stochastic, seq x seq), the
// per-layer hidden states, and the embedded input the gradients are taken
// against. All of it stays connected to the parameter graph.
struct ModelOutput {
    ad::Var logits;  // (1, num_classes)
    std::vector<std::vector<ad::Var>> attentions;  // [layer][head]
    std::vector<ad::Var> hiddens;                  // [layer], post-block states
    ad::Var embedded;                              // (seq, d_model) token embeddings
    std::vector<int> ids;                          // input as given (CLS first)
    int seq_len = 0;
};

// Post-layernorm transformer encoder with learned positions and a
// tanh-pooled CLS classification head.
class Model {
public:
    static Model init(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }
    const std::vector<std::string>& param_names() const { return names_; }
    std::vector<ad::Var>& params() { return params_; }
    const std::vector<ad::Var>& params() const { return params_; }
    const ad::Var& param(const std::string& name) const;

    // ids must start with CLS; PAD positions (if any) are excluded from
    // attention through additive masking.
    ModelOutput forward(const std::vector<int>& ids_with_cls) const;

    std::vector<double> predict_proba(const std::vector<int>& ids_with_cls) const;
    int predict(const std::vector<int>& ids_with_cls) const;

    // parameter value snapshots, used for per-epoch checkpoints
    std::vector<Tensor> snapshot() const;
    void restore(const std::vector<Tensor>& values);

    void save(const std::string& path) const;
    static Model load(const std::string& path);

private:
    Model() = default;
    void register_param(const std::string& name, Tensor value);

    ModelConfig config_;
    std::vector<std::string> names_;
    std::vector<ad::Var> params_;
    std::unordered_map<std::string, size_t> index_;
};

}  // namespace erlab
