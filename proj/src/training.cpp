#include "erlab/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "erlab/rng.hpp"

namespace erlab {

std::string technique_name(Technique t) {
    switch (t) {
        case Technique::att: return "att";
        case Technique::attr: return "attr";
        case Technique::ixg: return "ixg";
    }
    throw std::logic_error("unknown technique");
}

Technique parse_technique(const std::string& name) {
    if (name == "att") return Technique::att;
    if (name == "attr") return Technique::attr;
    if (name == "ixg") return Technique::ixg;
    throw std::invalid_argument("unknown technique '" + name + "' (expected att, attr, or ixg)");
}

std::string objective_name(Objective o) {
    switch (o) {
        case Objective::baseline: return "baseline";
        case Objective::joint: return "joint";
        case Objective::expl_only: return "expl-only";
        case Objective::constrained: return "constrained";
    }
    throw std::logic_error("unknown objective");
}

Objective parse_objective(const std::string& name) {
    if (name == "baseline") return Objective::baseline;
    if (name == "joint") return Objective::joint;
    if (name == "expl-only") return Objective::expl_only;
    if (name == "constrained") return Objective::constrained;
    throw std::invalid_argument("unknown objective '" + name +
                                "' (expected baseline, joint, expl-only, or constrained)");
}

ExplanationTarget build_target(const std::vector<int>& rationale_mask, Technique technique) {
    ExplanationTarget target;
    target.sum_to_one = technique != Technique::ixg;
    target.values.reserve(rationale_mask.size());
    int ones = 0;
    for (int v : rationale_mask) {
        if (v != 0 && v != 1) throw std::invalid_argument("rationale mask must be binary");
        ones += v;
    }
    if (target.sum_to_one && ones == 0) {
        throw std::invalid_argument("all-zero rationale has no sum-to-one target");
    }
    for (int v : rationale_mask) {
        target.values.push_back(target.sum_to_one ? static_cast<double>(v) / ones
                                                  : static_cast<double>(v));
    }
    return target;
}

ad::Var explanation_loss(const AttributionMap& attr, const ExplanationTarget& target) {
    const auto n = static_cast<int>(target.values.size());
    if (attr.scores_var.shape() != std::vector<int>{1, n}) {
        throw std::invalid_argument("attribution/target length mismatch: map has " +
                                    attr.scores_var.val().shape_str() + ", target has " +
                                    std::to_string(n) + " entries");
    }
    ad::Var scores = attr.scores_var;
    if (target.sum_to_one) {
        scores = ad::softmax_rows(ad::scale(scores, 100.0));
    }
    Tensor t({1, n}, target.values);
    return ad::mean_abs_error(scores, ad::Var::constant(t));
}

ad::Var joint_loss(const ad::Var& ce, const ad::Var& expl, double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("lambda must be nonnegative");
    if (lambda == 0.0) return ce;
    return ad::add(ce, ad::scale(expl, lambda));
}

DualState dual_update(const DualState& state, double observed_expl) {
    DualState next = state;
    const double violation = observed_expl - state.b_train;
    double step;
    if (state.adaptive) {
        next.second_moment =
            state.decay * state.second_moment + (1.0 - state.decay) * violation * violation;
        step = state.dual_lr * violation / (std::sqrt(next.second_moment) + state.eps);
    } else {
        step = state.dual_lr * violation;
    }
    next.mu = std::max(0.0, state.mu + step);
    return next;
}

namespace {

struct EncodedExample {
    std::vector<int> ids;  // CLS first
    int label = 0;
    std::vector<int> rationale;
};

std::vector<EncodedExample> encode_split(const Vocab& vocab,
                                         const std::vector<RationaleExample>& split) {
    std::vector<EncodedExample> out;
    out.reserve(split.size());
    for (const auto& ex : split) {
        out.push_back({encode_with_cls(vocab, ex.tokens), ex.label, ex.rationale});
    }
    return out;
}

AttributionMap guided_map(const ModelOutput& out, Technique technique, int num_layers,
                          int gold_label) {
    switch (technique) {
        case Technique::att: return attention_attribution(out, num_layers - 1);
        case Technique::attr: return rollout_attribution(out, num_layers - 1);
        case Technique::ixg: return input_x_gradient_from(out, gold_label);
    }
    throw std::logic_error("unknown technique");
}

std::pair<double, double> eval_encoded(const Model& model,
                                       const std::vector<EncodedExample>& split,
                                       std::optional<Technique> technique) {
    if (split.empty()) return {0.0, 0.0};
    double ce_sum = 0.0;
    double expl_sum = 0.0;
    const int layers = model.config().num_layers;
    for (const auto& ex : split) {
        auto out = model.forward(ex.ids);
        ce_sum += ad::cross_entropy(out.logits, ex.label).item();
        if (technique) {
            auto map = guided_map(out, *technique, layers, ex.label);
            auto target = build_target(ex.rationale, *technique);
            expl_sum += explanation_loss(map, target).item();
        }
    }
    const auto n = static_cast<double>(split.size());
    return {ce_sum / n, expl_sum / n};
}

class AdamOptimizer {
public:
    AdamOptimizer(Model& model, const TrainConfig& cfg, int total_steps)
        : model_(model), cfg_(cfg), total_steps_(total_steps),
          warmup_steps_(static_cast<int>(std::llround(cfg.warmup_fraction * total_steps))) {
        for (const auto& p : model.params()) {
            m_.push_back(std::vector<double>(p.val().values.size(), 0.0));
            v_.push_back(std::vector<double>(p.val().values.size(), 0.0));
        }
    }

    void step(const std::vector<std::vector<double>>& grads) {
        ++t_;
        double lr = cfg_.learning_rate;
        if (warmup_steps_ > 0 && t_ <= warmup_steps_) {
            lr *= static_cast<double>(t_) / warmup_steps_;
        } else if (cfg_.lr_decay && total_steps_ > warmup_steps_) {
            lr *= std::max(0, total_steps_ - t_) /
                  static_cast<double>(total_steps_ - warmup_steps_);
        }
        const double bc1 = 1.0 - std::pow(cfg_.adam_beta1, t_);
        const double bc2 = 1.0 - std::pow(cfg_.adam_beta2, t_);
        auto& params = model_.params();
        for (size_t i = 0; i < params.size(); ++i) {
            auto& values = params[i].node()->value.values;
            for (size_t j = 0; j < values.size(); ++j) {
                const double g = grads[i][j];
                m_[i][j] = cfg_.adam_beta1 * m_[i][j] + (1.0 - cfg_.adam_beta1) * g;
                v_[i][j] = cfg_.adam_beta2 * v_[i][j] + (1.0 - cfg_.adam_beta2) * g * g;
                const double mhat = m_[i][j] / bc1;
                const double vhat = v_[i][j] / bc2;
                values[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.adam_eps);
            }
        }
    }

private:
    Model& model_;
    TrainConfig cfg_;
    int total_steps_;
    int warmup_steps_;
    int t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace

std::pair<double, double> evaluate_losses(const Model& model, const Vocab& vocab,
                                          const std::vector<RationaleExample>& split,
                                          std::optional<Technique> technique) {
    return eval_encoded(model, encode_split(vocab, split), technique);
}

TrainResult train(const ModelConfig& model_config, const DataSplits& data, const Vocab& vocab,
                  Objective objective, std::optional<Technique> technique,
                  const TrainConfig& config, uint64_t seed) {
    if (config.lambda < 0.0) throw std::invalid_argument("lambda must be nonnegative");
    if (config.max_epochs <= 0) throw std::invalid_argument("max_epochs must be positive");
    if (config.batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
    if (objective != Objective::baseline && !technique) {
        throw std::invalid_argument(objective_name(objective) +
                                    " training requires a guided technique");
    }
    if (objective == Objective::constrained && !config.b_train) {
        throw std::invalid_argument("constrained training requires b_train");
    }
    if (data.train.empty()) throw std::invalid_argument("empty training split");
    if (model_config.vocab_size != vocab.size()) {
        throw std::invalid_argument("model vocab_size does not match the vocabulary");
    }
    if (objective != Objective::baseline) {
        for (size_t i = 0; i < data.train.size(); ++i) {
            if (data.train[i].rationale.size() != data.train[i].tokens.size() ||
                std::find(data.train[i].rationale.begin(), data.train[i].rationale.end(), 1) ==
                    data.train[i].rationale.end()) {
                throw std::invalid_argument("train example " + std::to_string(i) +
                                            " lacks a usable rationale");
            }
        }
    }

    ModelConfig cfg = model_config;
    cfg.seed = seed;
    Model model = Model::init(cfg);

    const auto train_set = encode_split(vocab, data.train);
    const auto val_set = encode_split(vocab, data.dev);
    std::vector<ExplanationTarget> targets;
    if (technique) {
        targets.reserve(train_set.size());
        for (const auto& ex : train_set) targets.push_back(build_target(ex.rationale, *technique));
    }

    const int n = static_cast<int>(train_set.size());
    const int steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
    AdamOptimizer opt(model, config, config.max_epochs * steps_per_epoch);

    DualState dual;
    dual.b_train = config.b_train.value_or(0.0);
    dual.dual_lr = config.dual_lr;
    dual.adaptive = config.dual_adaptive;

    // lambda = 0 joint runs build the plain CE graph so they reduce to the
    // baseline exactly; their explanation loss is still measured per epoch.
    const bool expl_in_graph =
        technique && (objective == Objective::expl_only || objective == Objective::constrained ||
                      (objective == Objective::joint && config.lambda > 0.0));

    TrainResult result;
    result.model_config = cfg;

    Rng order_rng(derive_seed(seed, "batch-order"));
    std::vector<int> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    std::vector<std::vector<double>> grad_accum;
    for (const auto& p : model.params()) {
        grad_accum.push_back(std::vector<double>(p.val().values.size(), 0.0));
    }

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        order_rng.shuffle(order);
        for (int start = 0; start < n; start += config.batch_size) {
            const int end = std::min(n, start + config.batch_size);
            const int batch = end - start;
            for (auto& g : grad_accum) std::fill(g.begin(), g.end(), 0.0);
            double batch_expl = 0.0;
            for (int k = start; k < end; ++k) {
                const auto& ex = train_set[static_cast<size_t>(order[k])];
                auto out = model.forward(ex.ids);
                ad::Var ce = ad::cross_entropy(out.logits, ex.label);
                ad::Var loss = ce;
                if (expl_in_graph) {
                    auto map = guided_map(out, *technique, cfg.num_layers, ex.label);
                    ad::Var expl =
                        explanation_loss(map, targets[static_cast<size_t>(order[k])]);
                    batch_expl += expl.item();
                    switch (objective) {
                        case Objective::expl_only: loss = expl; break;
                        case Objective::joint: loss = joint_loss(ce, expl, config.lambda); break;
                        case Objective::constrained:
                            loss = ad::add(ce, ad::scale(expl, dual.mu));
                            break;
                        case Objective::baseline: break;
                    }
                }
                auto grads = ad::gradient(loss, model.params());
                for (size_t i = 0; i < grads.size(); ++i) {
                    const auto& gv = grads[i].values;
                    for (size_t j = 0; j < gv.size(); ++j) grad_accum[i][j] += gv[j] / batch;
                }
            }
            opt.step(grad_accum);
            if (objective == Objective::constrained) {
                dual = dual_update(dual, batch_expl / batch);
                result.mu_trace.push_back(dual.mu);
            }
        }

        auto [train_ce, train_expl] = eval_encoded(model, train_set, technique);
        auto [val_ce, val_expl] = eval_encoded(model, val_set, technique);
        auto total = [&](double ce, double expl) {
            switch (objective) {
                case Objective::baseline: return ce;
                case Objective::joint: return ce + config.lambda * expl;
                case Objective::expl_only: return expl;
                case Objective::constrained: return ce + dual.mu * (expl - dual.b_train);
            }
            return ce;
        };
        EpochCurves curves;
        curves.train = {train_ce, train_expl, total(train_ce, train_expl), dual.mu};
        curves.val = {val_ce, val_expl, total(val_ce, val_expl), dual.mu};
        result.epochs.push_back(curves);
        result.snapshots.push_back(model.snapshot());
    }
    return result;
}

Bounds set_bounds(const std::vector<TrainResult>& expl_only_runs) {
    if (expl_only_runs.empty()) {
        throw std::invalid_argument("bound setting needs at least one explanation-only run");
    }
    double train_sum = 0.0;
    double val_sum = 0.0;
    for (const auto& run : expl_only_runs) {
        if (run.epochs.empty()) throw std::invalid_argument("bound setting run has no epochs");
        double min_train = run.epochs[0].train.expl;
        double min_val = run.epochs[0].val.expl;
        for (const auto& e : run.epochs) {
            min_train = std::min(min_train, e.train.expl);
            min_val = std::min(min_val, e.val.expl);
        }
        train_sum += min_train;
        val_sum += min_val;
    }
    const auto n = static_cast<double>(expl_only_runs.size());
    return {1.5 * train_sum / n, val_sum / n};
}

size_t select_checkpoint(const TrainResult& result, const SelectionRule& rule) {
    if (result.epochs.empty()) throw std::invalid_argument("no epochs recorded");
    if (rule.kind == SelectionRule::Kind::min_avg_val_loss) {
        size_t best = 0;
        for (size_t e = 1; e < result.epochs.size(); ++e) {
            if (result.epochs[e].val.total < result.epochs[best].val.total) best = e;
        }
        return best;
    }
    const double threshold = rule.slack * rule.b_val;
    std::optional<size_t> best;
    for (size_t e = 0; e < result.epochs.size(); ++e) {
        if (result.epochs[e].val.expl < threshold) {
            if (!best || result.epochs[e].val.ce < result.epochs[*best].val.ce) best = e;
        }
    }
    if (!best) {
        throw std::runtime_error("bound never met: no epoch has validation explanation loss below " +
                                 std::to_string(threshold));
    }
    return *best;
}

void write_curves_csv(const std::string& path, const TrainResult& result) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "epoch,split,ce,expl,total,mu\n";
    char buf[128];
    auto row = [&](size_t epoch, const char* split, const CurvePoint& p) {
        std::snprintf(buf, sizeof(buf), "%zu,%s,%.17g,%.17g,%.17g,%.17g\n", epoch, split, p.ce,
                      p.expl, p.total, p.mu);
        out << buf;
    };
    for (size_t e = 0; e < result.epochs.size(); ++e) {
        row(e, "train", result.epochs[e].train);
        row(e, "val", result.epochs[e].val);
    }
}

}  // namespace erlab
