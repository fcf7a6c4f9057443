// Acceptance gate: one line per criterion, pinned tolerances, nonzero exit
// on any failure. The experiment grid in the second half dominates the
// runtime; everything before it finishes in seconds.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "erlab/attribution.hpp"
#include "erlab/dump.hpp"
#include "erlab/harness.hpp"
#include "erlab/rng.hpp"
#include "support/metric_oracles.hpp"

namespace fs = std::filesystem;
using namespace erlab;
using ad::Var;
using clk = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void record(const char* id, bool pass, const std::string& detail) {
    std::printf("%s %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    g_failures += pass ? 0 : 1;
}

double elapsed(clk::time_point start) {
    return std::chrono::duration<double>(clk::now() - start).count();
}

std::string fmt(const char* f, ...) {
    va_list args;
    va_start(args, f);
    char buf[512];
    std::vsnprintf(buf, sizeof buf, f, args);
    va_end(args);
    return buf;
}

// Grid runs use the library's training defaults, which are tuned so the
// constrained contract is satisfiable (the explanation loss must reach its
// noise floor within the epoch budget for the calibrated bound to be
// attainable).
TrainConfig grid_training() { return TrainConfig{}; }

std::vector<int> real_token_rationale(const RationaleExample& ex) { return ex.rationale; }

// ---------------------------------------------------------------------
// A1: finite-difference gradient checks on the toy configuration
// ---------------------------------------------------------------------
void run_a1() {
    const auto start = clk::now();
    SyntheticSpec spec;
    spec.train_size = 32;
    spec.dev_size = 8;
    spec.test_id_size = 4;
    spec.test_ood_size = 4;
    spec.min_len = 8;
    spec.max_len = 12;
    auto data = generate_synthetic(spec);
    auto vocab = build_vocab(data);

    ModelConfig mc;  // defaults are the pinned toy shape
    mc.vocab_size = vocab.size();
    mc.seed = 5;
    Model model = Model::init(mc);
    const int top = mc.num_layers - 1;

    const auto& ex = data.train.front();
    const auto ids = encode_with_cls(vocab, ex.tokens);
    const auto mask = real_token_rationale(ex);

    struct Case {
        const char* name;
        double tol;
        std::function<Var()> loss;
    };
    std::vector<Case> cases;
    cases.push_back({"ce", 1e-4, [&] {
                         return ad::cross_entropy(model.forward(ids).logits, ex.label);
                     }});
    cases.push_back({"att", 1e-3, [&] {
                         auto out = model.forward(ids);
                         return explanation_loss(attention_attribution(out, top),
                                                 build_target(mask, Technique::att));
                     }});
    cases.push_back({"attr", 1e-3, [&] {
                         auto out = model.forward(ids);
                         return explanation_loss(rollout_attribution(out, top),
                                                 build_target(mask, Technique::attr));
                     }});
    cases.push_back({"ixg", 1e-3, [&] {
                         auto out = model.forward(ids);
                         return explanation_loss(input_x_gradient_from(out, ex.label),
                                                 build_target(mask, Technique::ixg));
                     }});

    bool all = true;
    std::string detail;
    for (const auto& c : cases) {
        auto report = ad::finite_difference_check(c.loss, model.params(), 1e-5, c.tol,
                                                  model.param_names(), 8);
        all = all && report.pass;
        detail += fmt("%s=%.2e%s ", c.name, report.max_rel_err, report.pass ? "" : "(!)");
    }
    const double secs = elapsed(start);
    all = all && secs < 60.0;
    record("A1", all, fmt("max rel err %s runtime %.1fs (< 60s)", detail.c_str(), secs));
}

// ---------------------------------------------------------------------
// A2: independent rollout gradient recursion vs autodiff
// ---------------------------------------------------------------------
void run_a2() {
    SyntheticSpec spec;
    spec.train_size = 16;
    spec.dev_size = 4;
    spec.test_id_size = 4;
    spec.test_ood_size = 4;
    auto data = generate_synthetic(spec);
    auto vocab = build_vocab(data);

    ModelConfig mc;
    mc.vocab_size = vocab.size();
    mc.seed = 11;
    Model model = Model::init(mc);
    const int top = mc.num_layers - 1;

    const auto& ex = data.train.front();
    const auto ids = encode_with_cls(vocab, ex.tokens);
    const auto target = build_target(real_token_rationale(ex), Technique::attr);
    auto loss_on_attr = [&](const Var& attr) {
        AttributionMap map;
        map.technique = "attr";
        map.scores_var = attr;
        return explanation_loss(map, target);
    };

    auto reference = rollout_gradient_reference(model, ids, loss_on_attr, false);
    auto local = rollout_gradient_reference(model, ids, loss_on_attr, true);
    auto loss = loss_on_attr(rollout_attribution(model.forward(ids), top).scores_var);
    auto autodiff = ad::gradient(loss, model.params());

    double ref_diff = 0.0, local_diff = 0.0;
    for (size_t p = 0; p < autodiff.size(); ++p) {
        for (size_t i = 0; i < autodiff[p].values.size(); ++i) {
            ref_diff = std::max(ref_diff,
                                std::abs(autodiff[p].values[i] - reference[p].values[i]));
            local_diff = std::max(local_diff,
                                  std::abs(autodiff[p].values[i] - local[p].values[i]));
        }
    }
    const bool pass = ref_diff < 1e-6 && local_diff > 1e-8;
    record("A2", pass,
           fmt("reference vs autodiff max diff %.2e (< 1e-6); recursion dropped %.2e (> 1e-8)",
               ref_diff, local_diff));
}

// ---------------------------------------------------------------------
// A3: ranking metrics vs exhaustive oracles
// ---------------------------------------------------------------------
void run_a3() {
    Rng rng(derive_seed(2024, "acceptance-metrics"));
    const double levels[] = {0.0, 0.1, 0.25, 0.25, 0.5, 0.9};
    int compared = 0;
    double worst = 0.0;
    bool ok = true;

    auto match = [&](std::optional<double> got, std::optional<double> want) {
        if (got.has_value() != want.has_value()) {
            ok = false;
            return;
        }
        if (got) {
            worst = std::max(worst, std::abs(*got - *want));
            ok = ok && std::abs(*got - *want) <= 1e-9;
            ++compared;
        }
    };

    for (int trial = 0; trial < 3000 && ok; ++trial) {
        const int n = rng.uniform_int(1, 6);
        std::vector<double> s(n), s2(n);
        std::vector<int> m(n), pred(n), gold(n);
        for (int i = 0; i < n; ++i) {
            s[i] = trial % 2 ? levels[rng.below(6)] : rng.uniform();
            s2[i] = trial % 2 ? levels[rng.below(6)] : rng.uniform();
            m[i] = static_cast<int>(rng.below(2));
            pred[i] = static_cast<int>(rng.below(2));
            gold[i] = static_cast<int>(rng.below(2));
        }
        match(auc_plausibility(s, m), oracle::auc(s, m));
        match(average_precision(s, m), oracle::average_precision(s, m));
        const int k = rng.uniform_int(1, n);
        match(recall_at_k(s, m, k), oracle::recall_at_k(s, m, k));
        if (n >= 2) match(kendall_tau_b(s, s2), oracle::kendall_tau_b(s, s2));
        match(f1_macro(pred, gold), oracle::f1_macro(pred, gold));
    }
    ok = ok && compared >= 1000;
    record("A3", ok, fmt("%d defined comparisons, worst |diff| %.2e (<= 1e-9)", compared, worst));
}

// ---------------------------------------------------------------------
// A4: probability-vector and row-stochasticity invariants
// ---------------------------------------------------------------------
void run_a4() {
    SyntheticSpec spec;
    spec.train_size = 160;
    spec.dev_size = 16;
    spec.test_id_size = 8;
    spec.test_ood_size = 8;
    auto data = generate_synthetic(spec);
    auto vocab = build_vocab(data);

    ModelConfig mc;
    mc.vocab_size = vocab.size();
    mc.seed = 3;
    Model fresh = Model::init(mc);

    TrainConfig tc;
    tc.max_epochs = 1;
    auto trained_res = train(mc, data, vocab, Objective::joint, Technique::att, tc, 9);
    Model trained = Model::init(mc);
    trained.restore(trained_res.snapshots.back());

    double worst_sum = 0.0, worst_neg = 0.0;
    int maps = 0, rows = 0;
    for (const Model* model : {&fresh, &trained}) {
        for (size_t i = 0; i < data.dev.size(); ++i) {
            auto ids = encode_with_cls(vocab, data.dev[i].tokens);
            auto out = model->forward(ids);
            for (int layer = 0; layer < mc.num_layers; ++layer) {
                for (const AttributionMap& map :
                     {attention_attribution(out, layer), rollout_attribution(out, layer)}) {
                    double sum = 0.0;
                    for (double v : map.scores) {
                        sum += v;
                        worst_neg = std::min(worst_neg, v);
                    }
                    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
                    ++maps;
                }
            }
            for (const auto& R : rollout_matrices(out)) {
                const auto& t = R.val();
                for (int r = 0; r < t.rows(); ++r) {
                    double sum = 0.0;
                    for (int c = 0; c < t.cols(); ++c) {
                        sum += t.at(r, c);
                        worst_neg = std::min(worst_neg, t.at(r, c));
                    }
                    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
                    ++rows;
                }
            }
        }
    }
    const bool pass = worst_sum <= 1e-6 && worst_neg >= -1e-9;
    record("A4", pass,
           fmt("%d maps + %d rollout rows: worst |sum-1| %.2e (<= 1e-6), min entry %.1e",
               maps, rows, worst_sum, worst_neg));
}

// ---------------------------------------------------------------------
// A8 (fast parts): lambda = 0 bit-exactness and identity loss
// ---------------------------------------------------------------------
bool snapshots_identical(const std::vector<std::vector<Tensor>>& a,
                         const std::vector<std::vector<Tensor>>& b) {
    if (a.size() != b.size()) return false;
    for (size_t e = 0; e < a.size(); ++e) {
        if (a[e].size() != b[e].size()) return false;
        for (size_t p = 0; p < a[e].size(); ++p) {
            if (a[e][p].values.size() != b[e][p].values.size()) return false;
            if (std::memcmp(a[e][p].values.data(), b[e][p].values.data(),
                            a[e][p].values.size() * sizeof(double)) != 0) {
                return false;
            }
        }
    }
    return true;
}

bool g_a8_fast_ok = false;
std::string g_a8_fast_detail;

void run_a8_fast() {
    SyntheticSpec spec;
    spec.train_size = 128;
    spec.dev_size = 32;
    spec.test_id_size = 8;
    spec.test_ood_size = 8;
    auto data = generate_synthetic(spec);
    auto vocab = build_vocab(data);

    ModelConfig mc;
    mc.vocab_size = vocab.size();
    TrainConfig tc;
    tc.max_epochs = 2;

    auto base = train(mc, data, vocab, Objective::baseline, std::nullopt, tc, 21);
    TrainConfig zero = tc;
    zero.lambda = 0.0;
    auto joint0 = train(mc, data, vocab, Objective::joint, Technique::att, zero, 21);
    const bool bitexact = snapshots_identical(base.snapshots, joint0.snapshots);

    // identity: zero loss exactly when the post-processed map equals the target
    auto row = [](const std::vector<double>& v) {
        return Var::constant(Tensor({1, static_cast<int>(v.size())}, v));
    };
    AttributionMap ixg_map;
    ixg_map.technique = "ixg";
    ExplanationTarget ixg_target = build_target({1, 0, 1, 0}, Technique::ixg);
    ixg_map.scores_var = row(ixg_target.values);
    const double ixg_loss = explanation_loss(ixg_map, ixg_target).val().values[0];

    Rng rng(derive_seed(8, "identity"));
    std::vector<double> raw(6);
    for (double& v : raw) v = rng.uniform();
    std::vector<double> post(raw.size());
    double mx = *std::max_element(raw.begin(), raw.end()), z = 0.0;
    for (size_t i = 0; i < raw.size(); ++i) z += std::exp(100.0 * raw[i] - 100.0 * mx);
    for (size_t i = 0; i < raw.size(); ++i) post[i] = std::exp(100.0 * raw[i] - 100.0 * mx) / z;
    AttributionMap att_map;
    att_map.technique = "att";
    att_map.scores_var = row(raw);
    ExplanationTarget att_target{post, true};
    const double att_loss = explanation_loss(att_map, att_target).val().values[0];

    g_a8_fast_ok = bitexact && ixg_loss == 0.0 && att_loss < 1e-12;
    g_a8_fast_detail = fmt("lambda=0 bit-exact %s; identity loss ixg %.1e att %.1e",
                           bitexact ? "yes" : "NO", ixg_loss, att_loss);
}

// ---------------------------------------------------------------------
// A6: lambda sweep trend
// ---------------------------------------------------------------------
void run_a6() {
    ExperimentConfig cfg;
    cfg.approach = Approach::er_attr;
    cfg.training = grid_training();
    cfg.seeds = {1, 2, 3, 4, 5};
    cfg.synth.train_size = 1000;
    cfg.synth.dev_size = 250;
    cfg.synth.test_id_size = 64;
    cfg.synth.test_ood_size = 64;

    auto sweep = sweep_lambda(cfg, {0.0, 0.6, 1.0, 3.0, 10.0, 30.0, 100.0});
    int inversions = 0;
    for (size_t i = 1; i < sweep.rows.size(); ++i) {
        if (sweep.rows[i].train_expl.mean > sweep.rows[i - 1].train_expl.mean * (1 + 1e-9)) {
            ++inversions;
        }
    }
    const double ce0 = sweep.rows.front().train_ce.mean;
    const double ce100 = sweep.rows.back().train_ce.mean;
    std::string curve;
    for (const auto& r : sweep.rows) curve += fmt("%.3g ", r.train_expl.mean);
    const bool pass = inversions <= 1 && ce100 > ce0;
    record("A6", pass,
           fmt("train expl by lambda [ %s] inversions %d (<= 1); ce(100)=%.4f > ce(0)=%.4f %s",
               curve.c_str(), inversions, ce100, ce0, ce100 > ce0 ? "yes" : "NO"));
}

// ---------------------------------------------------------------------
// grid: A5, A7, A8
// ---------------------------------------------------------------------
std::optional<double> agg(const RunReport& r, const std::string& key) {
    auto it = r.aggregates.find(key);
    if (it == r.aggregates.end()) return std::nullopt;
    return it->second.mean;
}

void run_grid(const fs::path& work) {
    const std::vector<Approach> approaches = {
        Approach::baseline, Approach::er_att,  Approach::er_attr, Approach::er_ixg,
        Approach::erc_att,  Approach::erc_attr, Approach::erc_ixg};

    std::map<std::string, RunReport> reports;
    const auto grid_start = clk::now();
    for (Approach a : approaches) {
        ExperimentConfig cfg;
        cfg.approach = a;
        cfg.training = grid_training();
        cfg.out_dir = (work / "grid" / approach_name(a)).string();
        const auto t0 = clk::now();
        reports.emplace(approach_name(a), run_experiment(cfg));
        std::printf("  [grid] %-10s %.0fs\n", approach_name(a).c_str(), elapsed(t0));
        std::fflush(stdout);
    }
    const double grid_secs = elapsed(grid_start);

    // A5: constrained contract on the AttR-constrained report
    {
        const auto& rep = reports.at("erc-attr");
        int ok_seeds = 0;
        bool bound_held = true;
        double worst_ratio = 0.0;
        for (const auto& s : rep.seeds) {
            if (s.failed) continue;
            ++ok_seeds;
            const double limit = 1.1 * rep.bounds->b_val;
            worst_ratio = std::max(worst_ratio, s.final_val.expl / rep.bounds->b_val);
            bound_held = bound_held && s.final_val.expl <= limit + 1e-15;
        }
        // the multiplier is clamped at every step; verify on a direct run
        TrainConfig tc = grid_training();
        tc.b_train = rep.bounds->b_train;
        SyntheticSpec spec;
        auto data = generate_synthetic(spec);
        auto vocab = build_vocab(data);
        ModelConfig mc;
        mc.vocab_size = vocab.size();
        auto direct = train(mc, data, vocab, Objective::constrained, Technique::attr, tc, 1);
        bool mu_ok = !direct.mu_trace.empty();
        for (double m : direct.mu_trace) mu_ok = mu_ok && m >= 0.0;

        const bool pass = ok_seeds >= 10 && bound_held && mu_ok;
        record("A5", pass,
               fmt("%d/15 seeds in budget (>= 10); selected expl_val/b_val worst %.3f (<= 1.1); "
                   "mu >= 0 over %zu steps %s",
                   ok_seeds, worst_ratio, direct.mu_trace.size(), mu_ok ? "yes" : "NO"));
    }

    // A7: guided gain, local-only effect, constrained transfer
    {
        const auto base_att_top = agg(reports.at("baseline"), "dev/auc/att1");
        const auto base_att_bot = agg(reports.at("baseline"), "dev/auc/att0");
        const auto base_ixg = agg(reports.at("baseline"), "dev/auc/ixg");
        const auto eratt_top = agg(reports.at("er-att"), "dev/auc/att1");
        const auto eratt_bot = agg(reports.at("er-att"), "dev/auc/att0");
        const auto ercattr_ixg = agg(reports.at("erc-attr"), "dev/auc/ixg");

        bool pass = base_att_top && base_att_bot && base_ixg && eratt_top && eratt_bot &&
                    ercattr_ixg;
        double att_gain = 0, bot_shift = 0, ixg_gain = 0;
        if (pass) {
            att_gain = *eratt_top - *base_att_top;
            bot_shift = std::abs(*eratt_bot - *base_att_bot);
            ixg_gain = *ercattr_ixg - *base_ixg;
            pass = att_gain >= 15.0 && bot_shift < 5.0 && ixg_gain >= 10.0;
        }
        record("A7", pass,
               fmt("joint Att: guided layer +%.1f (>= 15), other layer shift %.1f (< 5); "
                   "constrained AttR: IxG +%.1f (>= 10)",
                   att_gain, bot_shift, ixg_gain));
    }

    // A8: reductions and wall clock
    {
        const bool pass = g_a8_fast_ok && grid_secs < 7200.0;
        record("A8", pass, fmt("%s; grid %.0fs (< 7200s)", g_a8_fast_detail.c_str(), grid_secs));
    }

    // context: the four-cell effect table from the grid (not a criterion)
    std::vector<RunReport> all;
    all.reserve(reports.size());
    for (const auto& [name, rep] : reports) all.push_back(rep);
    auto effects = summarize_effects(all);
    write_effects_json((work / "effects.json").string(), effects);
    write_scatter_csv((work / "scatter.csv").string(), emit_ood_scatter(all));
    for (const auto& c : effects.cells) {
        std::printf("  [table] %-11s %-6s f1 %s guided %s non-guided %s\n", c.setup.c_str(),
                    c.guidance.c_str(), c.f1_effect.c_str(), c.guided_effect.c_str(),
                    c.non_guided_effect.c_str());
    }
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path work = argc > 1 ? argv[1] : "acceptance_work";
    fs::create_directories(work);

    run_a3();
    run_a4();
    run_a2();
    run_a1();
    run_a8_fast();
    run_a6();
    run_grid(work);

    if (g_failures == 0) {
        std::printf("ACCEPTANCE: all 8 criteria passed\n");
    } else {
        std::printf("ACCEPTANCE: %d criteria FAILED\n", g_failures);
    }
    return g_failures == 0 ? 0 : 1;
}
