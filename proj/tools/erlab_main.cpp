#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "erlab/dump.hpp"
#include "erlab/harness.hpp"
#include "erlab/rng.hpp"
#include "erlab/training.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using namespace erlab;

namespace {

void check_keys(const ordered_json& j, const std::vector<std::string>& allowed,
                const std::string& context) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw std::invalid_argument("unknown key '" + key + "' in " + context);
        }
    }
}

ordered_json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    try {
        ordered_json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

void apply_model_json(const ordered_json& j, ModelConfig* m) {
    check_keys(j, {"num_layers", "num_heads", "d_model", "d_ff", "max_seq_len", "num_classes"},
               "model");
    m->num_layers = j.value("num_layers", m->num_layers);
    m->num_heads = j.value("num_heads", m->num_heads);
    m->d_model = j.value("d_model", m->d_model);
    m->d_ff = j.value("d_ff", m->d_ff);
    m->max_seq_len = j.value("max_seq_len", m->max_seq_len);
    m->num_classes = j.value("num_classes", m->num_classes);
}

void apply_synth_json(const ordered_json& j, SyntheticSpec* s) {
    check_keys(j,
               {"filler_vocab", "pos_cue_vocab", "neg_cue_vocab", "min_len", "max_len",
                "min_cues", "max_cues", "shortcut_token", "rho_id", "rho_ood",
                "ood_novel_filler_fraction", "train_size", "dev_size", "test_id_size",
                "test_ood_size", "seed"},
               "synthetic");
    s->filler_vocab = j.value("filler_vocab", s->filler_vocab);
    s->pos_cue_vocab = j.value("pos_cue_vocab", s->pos_cue_vocab);
    s->neg_cue_vocab = j.value("neg_cue_vocab", s->neg_cue_vocab);
    s->min_len = j.value("min_len", s->min_len);
    s->max_len = j.value("max_len", s->max_len);
    s->min_cues = j.value("min_cues", s->min_cues);
    s->max_cues = j.value("max_cues", s->max_cues);
    s->shortcut_token = j.value("shortcut_token", s->shortcut_token);
    s->rho_id = j.value("rho_id", s->rho_id);
    s->rho_ood = j.value("rho_ood", s->rho_ood);
    s->ood_novel_filler_fraction =
        j.value("ood_novel_filler_fraction", s->ood_novel_filler_fraction);
    s->train_size = j.value("train_size", s->train_size);
    s->dev_size = j.value("dev_size", s->dev_size);
    s->test_id_size = j.value("test_id_size", s->test_id_size);
    s->test_ood_size = j.value("test_ood_size", s->test_ood_size);
    s->seed = j.value("seed", s->seed);
}

void apply_training_json(const ordered_json& j, TrainConfig* t) {
    check_keys(j,
               {"lambda", "learning_rate", "max_epochs", "batch_size", "warmup_fraction",
                "lr_decay", "adam_beta1", "adam_beta2", "adam_eps", "dual_lr", "dual_adaptive",
                "b_train"},
               "training");
    t->lambda = j.value("lambda", t->lambda);
    t->learning_rate = j.value("learning_rate", t->learning_rate);
    t->max_epochs = j.value("max_epochs", t->max_epochs);
    t->batch_size = j.value("batch_size", t->batch_size);
    t->warmup_fraction = j.value("warmup_fraction", t->warmup_fraction);
    t->lr_decay = j.value("lr_decay", t->lr_decay);
    t->adam_beta1 = j.value("adam_beta1", t->adam_beta1);
    t->adam_beta2 = j.value("adam_beta2", t->adam_beta2);
    t->adam_eps = j.value("adam_eps", t->adam_eps);
    t->dual_lr = j.value("dual_lr", t->dual_lr);
    t->dual_adaptive = j.value("dual_adaptive", t->dual_adaptive);
    if (j.contains("b_train") && !j["b_train"].is_null()) {
        t->b_train = j["b_train"].get<double>();
    }
}

ExperimentConfig load_experiment_config(const std::string& path) {
    auto j = read_json_file(path);
    check_keys(j,
               {"approach", "model", "data_dir", "synthetic", "training", "seeds",
                "retry_budget", "bounds", "bound_seeds", "faithfulness_sample", "out_dir"},
               "experiment config");
    ExperimentConfig c;
    if (j.contains("approach")) c.approach = parse_approach(j["approach"].get<std::string>());
    if (j.contains("model")) apply_model_json(j["model"], &c.model);
    c.data_dir = j.value("data_dir", c.data_dir);
    if (j.contains("synthetic")) apply_synth_json(j["synthetic"], &c.synth);
    if (j.contains("training")) apply_training_json(j["training"], &c.training);
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<uint64_t>>();
    c.retry_budget = j.value("retry_budget", c.retry_budget);
    if (j.contains("bounds") && !j["bounds"].is_null()) {
        check_keys(j["bounds"], {"b_train", "b_val", "technique"}, "bounds");
        c.bounds = Bounds{j["bounds"].at("b_train").get<double>(),
                          j["bounds"].at("b_val").get<double>()};
    }
    c.bound_seeds = j.value("bound_seeds", c.bound_seeds);
    c.faithfulness_sample = j.value("faithfulness_sample", c.faithfulness_sample);
    c.out_dir = j.value("out_dir", c.out_dir);
    return c;
}

Bounds load_bounds_file(const std::string& path) {
    auto j = read_json_file(path);
    check_keys(j, {"technique", "b_train", "b_val", "seeds", "root_seed", "runs"}, "bounds file");
    return {j.at("b_train").get<double>(), j.at("b_val").get<double>()};
}

const std::vector<RationaleExample>& split_by_name(const DataSplits& data,
                                                   const std::string& name) {
    if (name == "train") return data.train;
    if (name == "dev") return data.dev;
    if (name == "test_id") return data.test_id;
    if (name == "test_ood") return data.test_ood;
    throw std::invalid_argument("unknown split '" + name +
                                "' (expected train, dev, test_id, or test_ood)");
}

struct LoadedData {
    DataSplits splits;
    Vocab vocab;
};

LoadedData load_data_dir(const std::string& dir) {
    LoadedData d;
    d.splits = load_dataset(dir);
    if (d.splits.train.empty()) {
        throw std::runtime_error(dir + " has no training split to build a vocabulary from");
    }
    d.vocab = build_vocab(d.splits);
    return d;
}

Model load_checkpoint(const std::string& path, const Vocab& vocab) {
    Model m = Model::load(path);
    if (m.config().vocab_size != vocab.size()) {
        throw std::runtime_error("checkpoint vocabulary (" +
                                 std::to_string(m.config().vocab_size) +
                                 ") does not match the dataset (" +
                                 std::to_string(vocab.size()) + ")");
    }
    return m;
}

void add_model_options(CLI::App* sub, ModelConfig* m) {
    sub->add_option("--layers", m->num_layers, "encoder layers");
    sub->add_option("--heads", m->num_heads, "attention heads");
    sub->add_option("--d-model", m->d_model, "model width");
    sub->add_option("--d-ff", m->d_ff, "feed-forward width");
    sub->add_option("--max-seq-len", m->max_seq_len, "maximum sequence length incl. CLS");
}

void add_training_options(CLI::App* sub, TrainConfig* t) {
    sub->add_option("--lr", t->learning_rate, "Adam learning rate");
    sub->add_option("--epochs", t->max_epochs, "training epochs");
    sub->add_option("--batch-size", t->batch_size, "examples per step");
    sub->add_option("--warmup", t->warmup_fraction, "linear warmup fraction of steps");
    sub->add_flag("--no-lr-decay{false}", t->lr_decay, "hold the learning rate after warmup");
    sub->add_option("--dual-lr", t->dual_lr, "dual ascent step size");
    sub->add_flag("--dual-plain{false}", t->dual_adaptive,
                  "plain ascent step instead of the RMSprop-normalised one");
}

ordered_json split_scores_json(const SplitScores& scores) {
    ordered_json j;
    j["f1"] = scores.f1;
    j["plausibility"] = ordered_json::array();
    for (const auto& row : scores.plausibility) {
        j["plausibility"].push_back({{"technique", row.technique},
                                     {"layer", row.layer},
                                     {"auc", row.auc},
                                     {"ap", row.ap},
                                     {"recall", row.recall},
                                     {"defined", row.defined}});
    }
    j["faithfulness"] = ordered_json::array();
    for (const auto& row : scores.faithfulness) {
        j["faithfulness"].push_back({{"technique", row.technique},
                                     {"null_diff", row.null_diff},
                                     {"norm_suff", row.norm_suff},
                                     {"norm_comp", row.norm_comp},
                                     {"n", row.n}});
    }
    return j;
}

void write_json_file(const std::string& path, const ordered_json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"explanation-regularisation lab: synthetic-data studies of rationale-guided "
                 "training and attribution behaviour"};
    app.require_subcommand(1);

    // generate-data -----------------------------------------------------
    auto* gen = app.add_subcommand("generate-data", "write a synthetic rationale dataset");
    SyntheticSpec synth;
    std::string gen_out;
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--seed", synth.seed, "generator seed");
    gen->add_option("--train-size", synth.train_size);
    gen->add_option("--dev-size", synth.dev_size);
    gen->add_option("--test-id-size", synth.test_id_size);
    gen->add_option("--test-ood-size", synth.test_ood_size);
    gen->add_option("--min-len", synth.min_len);
    gen->add_option("--max-len", synth.max_len);
    gen->add_option("--rho-id", synth.rho_id, "shortcut/label agreement in domain");
    gen->add_option("--rho-ood", synth.rho_ood, "shortcut/label agreement out of domain");
    gen->add_option("--shortcut-token", synth.shortcut_token);
    gen->callback([&] {
        auto data = generate_synthetic(synth);
        save_dataset(data, synth, gen_out);
        auto report = audit(data, synth.shortcut_token);
        auto line = [](const char* name, const SplitAudit& a) {
            std::printf("%-8s  n=%-5d  label1=%.3f  shortcut-agree=%.3f  oov=%.3f\n", name,
                        a.size, a.label1_fraction, a.shortcut_agreement, a.oov_token_fraction);
        };
        line("train", report.train);
        line("dev", report.dev);
        line("test_id", report.test_id);
        line("test_ood", report.test_ood);
        std::printf("wrote %s\n", gen_out.c_str());
    });

    // set-bounds ----------------------------------------------------------
    auto* sb = app.add_subcommand("set-bounds",
                                  "calibrate explanation-loss bounds from explanation-only runs");
    std::string sb_data, sb_technique, sb_out;
    int sb_seeds = 3;
    uint64_t sb_root = 1;
    ModelConfig sb_model;
    TrainConfig sb_train;
    sb->add_option("--data", sb_data, "dataset directory")->required();
    sb->add_option("--technique", sb_technique, "att|attr|ixg")->required();
    sb->add_option("--out", sb_out, "bounds JSON path")->required();
    sb->add_option("--seeds", sb_seeds, "number of explanation-only runs");
    sb->add_option("--root-seed", sb_root, "seed the run seeds derive from");
    add_model_options(sb, &sb_model);
    add_training_options(sb, &sb_train);
    sb->callback([&] {
        auto technique = parse_technique(sb_technique);
        auto data = load_data_dir(sb_data);
        ModelConfig mc = sb_model;
        mc.vocab_size = data.vocab.size();
        std::vector<TrainResult> runs;
        for (int k = 0; k < sb_seeds; ++k) {
            runs.push_back(train(mc, data.splits, data.vocab, Objective::expl_only, technique,
                                 sb_train, derive_seed(sb_root, "bounds", uint64_t(k))));
        }
        auto bounds = set_bounds(runs);
        ordered_json j;
        j["technique"] = sb_technique;
        j["b_train"] = bounds.b_train;
        j["b_val"] = bounds.b_val;
        j["seeds"] = sb_seeds;
        j["root_seed"] = sb_root;
        write_json_file(sb_out, j);
        std::printf("b_train=%.6g  b_val=%.6g  -> %s\n", bounds.b_train, bounds.b_val,
                    sb_out.c_str());
    });

    // train ---------------------------------------------------------------
    auto* tr = app.add_subcommand("train", "train one model and keep the selected checkpoint");
    std::string tr_data, tr_objective = "baseline", tr_technique, tr_out, tr_bounds;
    uint64_t tr_seed = 1;
    ModelConfig tr_model;
    TrainConfig tr_train;
    tr->add_option("--data", tr_data, "dataset directory")->required();
    tr->add_option("--objective", tr_objective, "baseline|joint|expl-only|constrained");
    tr->add_option("--technique", tr_technique, "guided technique (att|attr|ixg)");
    tr->add_option("--lambda", tr_train.lambda, "explanation weight for joint runs");
    tr->add_option("--seed", tr_seed, "training seed");
    tr->add_option("--out", tr_out, "output directory")->required();
    tr->add_option("--bounds", tr_bounds, "bounds JSON from set-bounds (constrained runs)");
    add_model_options(tr, &tr_model);
    add_training_options(tr, &tr_train);
    tr->callback([&] {
        auto objective = parse_objective(tr_objective);
        std::optional<Technique> technique;
        if (!tr_technique.empty()) technique = parse_technique(tr_technique);
        SelectionRule rule;
        if (objective == Objective::constrained) {
            if (tr_bounds.empty()) {
                throw std::invalid_argument("constrained training needs --bounds");
            }
            auto bounds = load_bounds_file(tr_bounds);
            tr_train.b_train = bounds.b_train;
            rule.kind = SelectionRule::Kind::min_val_ce_subject_to_bound;
            rule.b_val = bounds.b_val;
        }
        auto data = load_data_dir(tr_data);
        ModelConfig mc = tr_model;
        mc.vocab_size = data.vocab.size();
        auto result = train(mc, data.splits, data.vocab, objective, technique, tr_train, tr_seed);
        const size_t selected = select_checkpoint(result, rule);

        fs::create_directories(tr_out);
        write_curves_csv((fs::path(tr_out) / "curves.csv").string(), result);
        Model model = Model::init(result.model_config);
        model.restore(result.snapshots[selected]);
        model.save((fs::path(tr_out) / "checkpoint.json").string());
        ordered_json j;
        j["objective"] = tr_objective;
        j["technique"] = technique ? technique_name(*technique) : "";
        j["lambda"] = tr_train.lambda;
        j["seed"] = tr_seed;
        j["selected_epoch"] = selected;
        const auto& val = result.epochs[selected].val;
        j["val"] = {{"ce", val.ce}, {"expl", val.expl}, {"total", val.total}, {"mu", val.mu}};
        write_json_file((fs::path(tr_out) / "selection.json").string(), j);
        std::printf("selected epoch %zu  val ce=%.4f expl=%.4f  -> %s\n", selected, val.ce,
                    val.expl, tr_out.c_str());
    });

    // attribute -------------------------------------------------------------
    auto* at = app.add_subcommand("attribute", "dump attribution maps for one split");
    std::string at_ckpt, at_data, at_split = "dev", at_out, at_approach = "model";
    uint64_t at_seed = 0;
    at->add_option("--checkpoint", at_ckpt, "model checkpoint JSON")->required();
    at->add_option("--data", at_data, "dataset directory")->required();
    at->add_option("--split", at_split, "train|dev|test_id|test_ood");
    at->add_option("--out", at_out, "dump JSONL path")->required();
    at->add_option("--approach", at_approach, "label recorded in the dump");
    at->add_option("--seed", at_seed, "seed recorded in the dump");
    at->callback([&] {
        auto data = load_data_dir(at_data);
        Model model = load_checkpoint(at_ckpt, data.vocab);
        const auto& split = split_by_name(data.splits, at_split);
        auto dumps = dump_attributions(model, data.vocab, split, at_approach, at_seed);
        write_dump_records(at_out, dumps);
        std::printf("wrote %zu records for %zu examples -> %s\n", dumps.size(), split.size(),
                    at_out.c_str());
    });

    // evaluate ---------------------------------------------------------------
    auto* ev = app.add_subcommand("evaluate", "score dumped attributions and the classifier");
    std::string ev_ckpt, ev_data, ev_split = "dev", ev_dumps, ev_out;
    int ev_faith = 128;
    ev->add_option("--checkpoint", ev_ckpt)->required();
    ev->add_option("--data", ev_data)->required();
    ev->add_option("--split", ev_split, "train|dev|test_id|test_ood");
    ev->add_option("--dumps", ev_dumps, "dump JSONL from attribute")->required();
    ev->add_option("--out", ev_out, "metrics JSON path")->required();
    ev->add_option("--faith-sample", ev_faith, "faithfulness examples per split, 0 = all");
    ev->callback([&] {
        auto data = load_data_dir(ev_data);
        Model model = load_checkpoint(ev_ckpt, data.vocab);
        const auto& split = split_by_name(data.splits, ev_split);
        auto dumps = read_dump_records(ev_dumps);
        auto scores = score_split(model, data.vocab, split, dumps, ev_faith);
        ordered_json j;
        j["split"] = ev_split;
        j["scores"] = split_scores_json(scores);
        write_json_file(ev_out, j);
        std::printf("f1=%.2f  rows=%zu  -> %s\n", scores.f1, scores.plausibility.size(),
                    ev_out.c_str());
    });

    // sweep-lambda -----------------------------------------------------------
    auto* sw = app.add_subcommand("sweep-lambda", "joint-training tradeoff across lambda");
    std::string sw_config, sw_data, sw_technique = "attr", sw_out, sw_bounds;
    std::vector<double> sw_grid{0.0, 0.6, 1.0, 3.0, 10.0, 30.0, 100.0};
    std::vector<uint64_t> sw_seeds{1, 2, 3, 4, 5};
    ExperimentConfig sw_cfg;
    sw->add_option("--config", sw_config, "experiment config JSON");
    sw->add_option("--data", sw_data, "dataset directory");
    sw->add_option("--technique", sw_technique, "guided technique");
    sw->add_option("--grid", sw_grid, "lambda grid")->delimiter(',');
    sw->add_option("--seeds", sw_seeds, "seeds, comma separated")->delimiter(',');
    sw->add_option("--out", sw_out, "CSV path")->required();
    sw->add_option("--bounds", sw_bounds, "bounds JSON for the reference line");
    add_model_options(sw, &sw_cfg.model);
    add_training_options(sw, &sw_cfg.training);
    sw->callback([&] {
        ExperimentConfig cfg = sw_config.empty() ? sw_cfg : load_experiment_config(sw_config);
        if (!sw_config.empty()) {
            // flag overrides on top of the file
            if (sw->count("--data")) cfg.data_dir = sw_data;
            if (sw->count("--seeds")) cfg.seeds = sw_seeds;
        } else {
            cfg.data_dir = sw_data;
            cfg.seeds = sw_seeds;
        }
        switch (parse_technique(sw_technique)) {
            case Technique::att: cfg.approach = Approach::er_att; break;
            case Technique::attr: cfg.approach = Approach::er_attr; break;
            case Technique::ixg: cfg.approach = Approach::er_ixg; break;
        }
        if (!sw_bounds.empty()) cfg.bounds = load_bounds_file(sw_bounds);
        auto sweep = sweep_lambda(cfg, sw_grid);
        write_sweep_csv(sw_out, sweep);
        for (const auto& r : sweep.rows) {
            std::printf("lambda=%-7g train ce=%.4f+-%.4f  expl=%.4f+-%.4f\n", r.lambda,
                        r.train_ce.mean, r.train_ce.stdev, r.train_expl.mean,
                        r.train_expl.stdev);
        }
        std::printf("bound reference %.6g  -> %s\n", sweep.bound_reference, sw_out.c_str());
    });

    // correlate ----------------------------------------------------------------
    auto* co = app.add_subcommand("correlate", "rank-correlate attribution maps across models");
    std::vector<std::string> co_dumps;
    std::string co_technique = "att", co_a, co_b, co_out;
    int co_layer = -1;
    uint64_t co_sampling = 1;
    co->add_option("--dumps", co_dumps, "dump JSONL files")->required()->expected(-1);
    co->add_option("--technique", co_technique);
    co->add_option("--layer", co_layer);
    co->add_option("--approach-a", co_a)->required();
    co->add_option("--approach-b", co_b)->required();
    co->add_option("--sampling-seed", co_sampling);
    co->add_option("--out", co_out, "correlation JSON path")->required();
    co->callback([&] {
        std::vector<DumpRecord> all;
        for (const auto& path : co_dumps) {
            auto records = read_dump_records(path);
            all.insert(all.end(), std::make_move_iterator(records.begin()),
                       std::make_move_iterator(records.end()));
        }
        auto rec = correlate_across_approaches(all, co_technique, co_layer, co_a, co_b,
                                               co_sampling);
        ordered_json j;
        j["technique"] = rec.technique;
        j["layer"] = rec.layer;
        j["approach_a"] = rec.approach_a;
        j["approach_b"] = rec.approach_b;
        j["mean_tau"] = rec.mean_tau;
        j["skipped"] = rec.skipped;
        j["taus"] = rec.taus;
        write_json_file(co_out, j);
        std::printf("mean tau %.4f over %zu examples (%d skipped) -> %s\n", rec.mean_tau,
                    rec.taus.size(), rec.skipped, co_out.c_str());
    });

    // report ---------------------------------------------------------------------
    auto* rp = app.add_subcommand("report", "run one approach over its seeds and write a report");
    std::string rp_config, rp_approach, rp_data, rp_out, rp_bounds;
    std::vector<uint64_t> rp_seeds;
    int rp_faith = -1;
    ExperimentConfig rp_cfg;
    rp->add_option("--config", rp_config, "experiment config JSON");
    rp->add_option("--approach", rp_approach, "baseline|er-*|erc-*|expl-only-*");
    rp->add_option("--data", rp_data, "dataset directory");
    rp->add_option("--seeds", rp_seeds, "seeds, comma separated")->delimiter(',');
    rp->add_option("--out", rp_out, "output directory");
    rp->add_option("--bounds", rp_bounds, "bounds JSON for constrained approaches");
    rp->add_option("--faith-sample", rp_faith, "faithfulness examples per split, 0 = all");
    add_model_options(rp, &rp_cfg.model);
    add_training_options(rp, &rp_cfg.training);
    rp->callback([&] {
        ExperimentConfig cfg = rp_config.empty() ? rp_cfg : load_experiment_config(rp_config);
        if (rp->count("--approach")) cfg.approach = parse_approach(rp_approach);
        if (rp->count("--data")) cfg.data_dir = rp_data;
        if (rp->count("--seeds")) cfg.seeds = rp_seeds;
        if (rp->count("--out")) cfg.out_dir = rp_out;
        if (rp->count("--faith-sample")) cfg.faithfulness_sample = rp_faith;
        if (!rp_bounds.empty()) cfg.bounds = load_bounds_file(rp_bounds);
        if (cfg.out_dir.empty()) throw std::invalid_argument("report needs an output directory");
        auto report = run_experiment(cfg);
        int failed = 0;
        for (const auto& s : report.seeds) failed += s.failed ? 1 : 0;
        std::printf("%s: %zu seeds, %d failed\n", report.approach.c_str(), report.seeds.size(),
                    failed);
        for (const auto& key : {"dev/f1", "test_id/f1", "test_ood/f1"}) {
            auto it = report.aggregates.find(key);
            if (it != report.aggregates.end()) {
                std::printf("  %-12s %.2f +- %.2f\n", key, it->second.mean, it->second.stdev);
            }
        }
        std::printf("-> %s\n", (fs::path(cfg.out_dir) / "report.json").string().c_str());
    });

    // summarize -----------------------------------------------------------------
    auto* su = app.add_subcommand("summarize", "effect table and OOD scatter from reports");
    std::vector<std::string> su_reports;
    std::string su_out;
    double su_margin = 1.0;
    su->add_option("--reports", su_reports, "report JSON files")->required()->expected(-1);
    su->add_option("--out", su_out, "output directory")->required();
    su->add_option("--margin", su_margin, "effect margin in pooled standard deviations");
    su->callback([&] {
        std::vector<RunReport> reports;
        for (const auto& path : su_reports) reports.push_back(read_report(path));
        fs::create_directories(su_out);
        auto effects = summarize_effects(reports, su_margin);
        write_effects_json((fs::path(su_out) / "effects.json").string(), effects);
        auto scatter = emit_ood_scatter(reports);
        write_scatter_csv((fs::path(su_out) / "scatter.csv").string(), scatter);
        std::printf("%-12s %-7s  %-6s %-7s %-10s\n", "setup", "guide", "oodF1", "guided",
                    "non-guided");
        for (const auto& c : effects.cells) {
            std::printf("%-12s %-7s  %-6s %-7s %-10s\n", c.setup.c_str(), c.guidance.c_str(),
                        c.f1_effect.c_str(), c.guided_effect.c_str(),
                        c.non_guided_effect.c_str());
        }
        std::printf("-> %s\n", su_out.c_str());
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
