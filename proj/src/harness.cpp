#include "erlab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "erlab/dump.hpp"
#include "erlab/rng.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace erlab {

std::string approach_name(Approach a) {
    switch (a) {
        case Approach::baseline: return "baseline";
        case Approach::er_att: return "er-att";
        case Approach::er_attr: return "er-attr";
        case Approach::er_ixg: return "er-ixg";
        case Approach::erc_att: return "erc-att";
        case Approach::erc_attr: return "erc-attr";
        case Approach::erc_ixg: return "erc-ixg";
        case Approach::expl_only_att: return "expl-only-att";
        case Approach::expl_only_attr: return "expl-only-attr";
        case Approach::expl_only_ixg: return "expl-only-ixg";
    }
    throw std::logic_error("unknown approach");
}

Approach parse_approach(const std::string& name) {
    for (auto a : {Approach::baseline, Approach::er_att, Approach::er_attr, Approach::er_ixg,
                   Approach::erc_att, Approach::erc_attr, Approach::erc_ixg,
                   Approach::expl_only_att, Approach::expl_only_attr, Approach::expl_only_ixg}) {
        if (approach_name(a) == name) return a;
    }
    throw std::invalid_argument("unknown approach '" + name + "'");
}

Objective approach_objective(Approach a) {
    switch (a) {
        case Approach::baseline: return Objective::baseline;
        case Approach::er_att:
        case Approach::er_attr:
        case Approach::er_ixg: return Objective::joint;
        case Approach::erc_att:
        case Approach::erc_attr:
        case Approach::erc_ixg: return Objective::constrained;
        case Approach::expl_only_att:
        case Approach::expl_only_attr:
        case Approach::expl_only_ixg: return Objective::expl_only;
    }
    throw std::logic_error("unknown approach");
}

std::optional<Technique> approach_technique(Approach a) {
    switch (a) {
        case Approach::baseline: return std::nullopt;
        case Approach::er_att:
        case Approach::erc_att:
        case Approach::expl_only_att: return Technique::att;
        case Approach::er_attr:
        case Approach::erc_attr:
        case Approach::expl_only_attr: return Technique::attr;
        case Approach::er_ixg:
        case Approach::erc_ixg:
        case Approach::expl_only_ixg: return Technique::ixg;
    }
    throw std::logic_error("unknown approach");
}

std::vector<uint64_t> default_seeds() {
    std::vector<uint64_t> seeds(15);
    for (size_t i = 0; i < seeds.size(); ++i) seeds[i] = i + 1;
    return seeds;
}

MetricAggregate aggregate(const std::vector<double>& values) {
    MetricAggregate agg;
    agg.count = static_cast<int>(values.size());
    if (values.empty()) return agg;
    double sum = 0.0;
    for (double v : values) sum += v;
    agg.mean = sum / agg.count;
    if (agg.count > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
        agg.stdev = std::sqrt(ss / (agg.count - 1));
    }
    return agg;
}

namespace {

std::string plaus_key(const std::string& technique, int layer) {
    return technique == "ixg" ? technique : technique + std::to_string(layer);
}

DataSplits load_experiment_data(const ExperimentConfig& config) {
    if (!config.data_dir.empty()) return load_dataset(config.data_dir);
    return generate_synthetic(config.synth);
}

ModelConfig resolve_model_config(const ExperimentConfig& config, const Vocab& vocab,
                                 const DataSplits& data) {
    ModelConfig cfg = config.model;
    cfg.vocab_size = vocab.size();
    size_t longest = 0;
    for (const auto* split : {&data.train, &data.dev, &data.test_id, &data.test_ood}) {
        for (const auto& ex : *split) longest = std::max(longest, ex.tokens.size());
    }
    if (longest + 1 > static_cast<size_t>(cfg.max_seq_len)) {
        throw std::invalid_argument("max_seq_len " + std::to_string(cfg.max_seq_len) +
                                    " cannot hold an example of length " +
                                    std::to_string(longest));
    }
    return cfg;
}

Bounds compute_bounds(const ModelConfig& model_cfg, const DataSplits& data, const Vocab& vocab,
                      Technique technique, const TrainConfig& training, int bound_seeds,
                      uint64_t root_seed) {
    if (bound_seeds < 1) throw std::invalid_argument("bound setting needs at least one seed");
    TrainConfig tc = training;
    tc.b_train.reset();
    std::vector<TrainResult> runs;
    for (int k = 0; k < bound_seeds; ++k) {
        runs.push_back(train(model_cfg, data, vocab, Objective::expl_only, technique, tc,
                             derive_seed(root_seed, "bounds", static_cast<uint64_t>(k))));
    }
    return set_bounds(runs);
}

std::optional<double> top_layer_auc(const SplitScores& scores, const std::string& technique) {
    std::optional<double> best;
    int best_layer = -2;
    for (const auto& row : scores.plausibility) {
        if (row.technique == technique && row.layer > best_layer) {
            best_layer = row.layer;
            best = row.auc;
        }
    }
    return best;
}

}  // namespace

std::vector<DumpRecord> dump_attributions(const Model& model, const Vocab& vocab,
                                          const std::vector<RationaleExample>& split,
                                          const std::string& approach, uint64_t seed) {
    std::vector<DumpRecord> records;
    const int layers = model.config().num_layers;
    records.reserve(split.size() * (2 * static_cast<size_t>(layers) + 1));
    for (size_t i = 0; i < split.size(); ++i) {
        auto out = model.forward(encode_with_cls(vocab, split[i].tokens));
        const auto& logits = out.logits.val().values;
        const int predicted = static_cast<int>(
            std::max_element(logits.begin(), logits.end()) - logits.begin());
        auto push = [&](const AttributionMap& map) {
            DumpRecord r;
            r.approach = approach;
            r.seed = seed;
            r.example = static_cast<int>(i);
            r.technique = map.technique;
            r.layer = map.layer;
            r.scores = map.scores;
            records.push_back(std::move(r));
        };
        for (int l = 0; l < layers; ++l) {
            push(attention_attribution(out, l));
            push(rollout_attribution(out, l));
        }
        push(input_x_gradient_from(out, predicted));
    }
    return records;
}

SplitScores score_split(const Model& model, const Vocab& vocab,
                        const std::vector<RationaleExample>& split,
                        const std::vector<DumpRecord>& dumps, int faithfulness_sample) {
    SplitScores scores;
    if (split.empty()) return scores;

    std::vector<int> gold, predicted;
    for (const auto& ex : split) {
        gold.push_back(ex.label);
        predicted.push_back(model.predict(encode_with_cls(vocab, ex.tokens)));
    }
    scores.f1 = f1_macro(predicted, gold);

    // group dump rows by (technique, layer), keep scores per example
    std::map<std::pair<std::string, int>, std::vector<const DumpRecord*>> by_row;
    for (const auto& r : dumps) {
        if (r.example < 0 || static_cast<size_t>(r.example) >= split.size()) {
            throw std::invalid_argument("dump example index out of range");
        }
        by_row[{r.technique, r.layer}].push_back(&r);
    }
    for (const auto& [key, rows] : by_row) {
        PlausibilityRow out;
        out.technique = key.first;
        out.layer = key.second;
        double auc = 0, ap = 0, recall = 0;
        for (const auto* r : rows) {
            auto p = plausibility(r->scores, split[static_cast<size_t>(r->example)].rationale);
            if (p.auc && p.average_precision && p.recall_at_k) {
                auc += *p.auc;
                ap += *p.average_precision;
                recall += *p.recall_at_k;
                ++out.defined;
            }
        }
        if (out.defined > 0) {
            out.auc = auc / out.defined;
            out.ap = ap / out.defined;
            out.recall = recall / out.defined;
        }
        scores.plausibility.push_back(out);
    }

    const int top = model.config().num_layers - 1;
    const PredictFn predict = [&](const std::vector<int>& real_ids) {
        std::vector<int> ids{kClsId};
        ids.insert(ids.end(), real_ids.begin(), real_ids.end());
        return model.predict_proba(ids);
    };
    const auto grid = default_alpha_grid();
    const size_t sample = faithfulness_sample > 0
                              ? std::min(split.size(), static_cast<size_t>(faithfulness_sample))
                              : split.size();
    for (const auto& [tech, layer] : std::vector<std::pair<std::string, int>>{
             {"att", top}, {"attr", top}, {"ixg", -1}}) {
        auto it = by_row.find({tech, layer});
        if (it == by_row.end()) continue;
        std::vector<const DumpRecord*> per_example(split.size(), nullptr);
        for (const auto* r : it->second) per_example[static_cast<size_t>(r->example)] = r;
        FaithfulnessRow row;
        row.technique = tech;
        double nd = 0, ns = 0, nc = 0;
        int ns_n = 0, nc_n = 0;
        for (size_t i = 0; i < sample; ++i) {
            if (!per_example[i]) continue;
            auto f = faithfulness(predict, encode(vocab, split[i].tokens),
                                  per_example[i]->scores, grid, kMaskId);
            nd += f.null_diff;
            ++row.n;
            double s = 0, c = 0;
            int sn = 0, cn = 0;
            for (size_t g = 0; g < grid.size(); ++g) {
                if (f.norm_suff[g]) { s += *f.norm_suff[g]; ++sn; }
                if (f.norm_comp[g]) { c += *f.norm_comp[g]; ++cn; }
            }
            if (sn > 0) { ns += s / sn; ++ns_n; }
            if (cn > 0) { nc += c / cn; ++nc_n; }
        }
        if (row.n > 0) row.null_diff = nd / row.n;
        if (ns_n > 0) row.norm_suff = ns / ns_n;
        if (nc_n > 0) row.norm_comp = nc / nc_n;
        scores.faithfulness.push_back(row);
    }
    return scores;
}

std::map<std::string, MetricAggregate> aggregate_outcomes(const std::vector<SeedOutcome>& seeds) {
    std::map<std::string, std::vector<double>> values;
    for (const auto& s : seeds) {
        if (s.failed) continue;
        values["val/ce"].push_back(s.final_val.ce);
        values["val/expl"].push_back(s.final_val.expl);
        values["val/total"].push_back(s.final_val.total);
        values["val/mu"].push_back(s.final_val.mu);
        for (const auto& [split, scores] : s.splits) {
            values[split + "/f1"].push_back(scores.f1);
            for (const auto& row : scores.plausibility) {
                const std::string key = plaus_key(row.technique, row.layer);
                values[split + "/auc/" + key].push_back(row.auc);
                values[split + "/ap/" + key].push_back(row.ap);
                values[split + "/recall/" + key].push_back(row.recall);
            }
            for (const auto& row : scores.faithfulness) {
                values[split + "/faith/" + row.technique + "/null_diff"].push_back(row.null_diff);
                values[split + "/faith/" + row.technique + "/norm_suff"].push_back(row.norm_suff);
                values[split + "/faith/" + row.technique + "/norm_comp"].push_back(row.norm_comp);
            }
        }
    }
    std::map<std::string, MetricAggregate> out;
    for (const auto& [key, vec] : values) out[key] = aggregate(vec);
    return out;
}

RunReport run_experiment(const ExperimentConfig& config) {
    if (config.seeds.empty()) throw std::invalid_argument("experiment needs at least one seed");
    const auto data = load_experiment_data(config);
    const auto vocab = build_vocab(data);
    const auto model_cfg = resolve_model_config(config, vocab, data);
    const auto objective = approach_objective(config.approach);
    const auto technique = approach_technique(config.approach);
    const std::string name = approach_name(config.approach);

    RunReport report;
    report.approach = name;
    report.requested_seeds = config.seeds;
    report.bounds = config.bounds;

    TrainConfig tc = config.training;
    SelectionRule rule;
    if (objective == Objective::constrained) {
        if (!report.bounds) {
            report.bounds = compute_bounds(model_cfg, data, vocab, *technique, config.training,
                                           config.bound_seeds, config.seeds[0]);
        }
        tc.b_train = report.bounds->b_train;
        rule.kind = SelectionRule::Kind::min_val_ce_subject_to_bound;
        rule.b_val = report.bounds->b_val;
    }

    if (!config.out_dir.empty()) fs::create_directories(config.out_dir);

    const std::vector<std::pair<std::string, const std::vector<RationaleExample>*>> split_list = {
        {"dev", &data.dev}, {"test_id", &data.test_id}, {"test_ood", &data.test_ood}};
    std::vector<DumpRecord> dev_dumps;

    for (uint64_t requested : config.seeds) {
        SeedOutcome outcome;
        outcome.requested_seed = requested;
        uint64_t used = requested;
        int attempt = 0;
        TrainResult result;
        std::optional<size_t> selected;
        while (true) {
            result = train(model_cfg, data, vocab, objective, technique, tc, used);
            try {
                selected = select_checkpoint(result, rule);
                break;
            } catch (const std::runtime_error&) {
                if (attempt >= config.retry_budget) break;
                ++attempt;
                used = derive_seed(requested, "retry", static_cast<uint64_t>(attempt));
            }
        }
        outcome.used_seed = used;
        outcome.retries = attempt;
        if (!selected) {
            outcome.failed = true;
            report.seeds.push_back(std::move(outcome));
            continue;
        }
        outcome.selected_epoch = *selected;
        outcome.final_val = result.epochs[*selected].val;

        Model model = Model::init(result.model_config);
        model.restore(result.snapshots[*selected]);

        fs::path seed_dir;
        if (!config.out_dir.empty()) {
            seed_dir = fs::path(config.out_dir) / ("seed-" + std::to_string(requested));
            fs::create_directories(seed_dir);
            write_curves_csv((seed_dir / "curves.csv").string(), result);
            model.save((seed_dir / "checkpoint.json").string());
        }
        for (const auto& [split_name, split] : split_list) {
            auto dumps = dump_attributions(model, vocab, *split, name, used);
            outcome.splits[split_name] =
                score_split(model, vocab, *split, dumps, config.faithfulness_sample);
            if (!config.out_dir.empty()) {
                write_dump_records((seed_dir / ("dumps-" + split_name + ".jsonl")).string(),
                                   dumps);
            }
            if (split_name == "dev") {
                dev_dumps.insert(dev_dumps.end(), std::make_move_iterator(dumps.begin()),
                                 std::make_move_iterator(dumps.end()));
            }
        }
        report.seeds.push_back(std::move(outcome));
    }

    int successful = 0;
    for (const auto& s : report.seeds) successful += s.failed ? 0 : 1;
    if (successful >= 2) {
        const uint64_t sampling = derive_seed(config.seeds[0], "correlation");
        const int top = model_cfg.num_layers - 1;
        for (const auto& [tech, layer] :
             std::vector<std::pair<std::string, int>>{{"att", top}, {"attr", top}, {"ixg", -1}}) {
            report.correlations.push_back(
                correlate_across_approaches(dev_dumps, tech, layer, name, name, sampling));
        }
    }
    report.aggregates = aggregate_outcomes(report.seeds);

    if (!config.out_dir.empty()) {
        write_report((fs::path(config.out_dir) / "report.json").string(), report);
    }
    return report;
}

namespace {

ordered_json curve_point_json(const CurvePoint& p) {
    return ordered_json{{"ce", p.ce}, {"expl", p.expl}, {"total", p.total}, {"mu", p.mu}};
}

CurvePoint curve_point_from(const ordered_json& j) {
    return {j.at("ce").get<double>(), j.at("expl").get<double>(), j.at("total").get<double>(),
            j.at("mu").get<double>()};
}

}  // namespace

void write_report(const std::string& path, const RunReport& report) {
    ordered_json j;
    j["approach"] = report.approach;
    j["requested_seeds"] = report.requested_seeds;
    if (report.bounds) {
        j["bounds"] = {{"b_train", report.bounds->b_train}, {"b_val", report.bounds->b_val}};
    } else {
        j["bounds"] = nullptr;
    }
    j["seeds"] = ordered_json::array();
    for (const auto& s : report.seeds) {
        ordered_json js;
        js["requested_seed"] = s.requested_seed;
        js["used_seed"] = s.used_seed;
        js["retries"] = s.retries;
        js["failed"] = s.failed;
        js["selected_epoch"] = s.selected_epoch;
        js["final_val"] = curve_point_json(s.final_val);
        js["splits"] = ordered_json::object();
        for (const auto& [name, scores] : s.splits) {
            ordered_json js2;
            js2["f1"] = scores.f1;
            js2["plausibility"] = ordered_json::array();
            for (const auto& row : scores.plausibility) {
                js2["plausibility"].push_back({{"technique", row.technique},
                                               {"layer", row.layer},
                                               {"auc", row.auc},
                                               {"ap", row.ap},
                                               {"recall", row.recall},
                                               {"defined", row.defined}});
            }
            js2["faithfulness"] = ordered_json::array();
            for (const auto& row : scores.faithfulness) {
                js2["faithfulness"].push_back({{"technique", row.technique},
                                               {"null_diff", row.null_diff},
                                               {"norm_suff", row.norm_suff},
                                               {"norm_comp", row.norm_comp},
                                               {"n", row.n}});
            }
            js["splits"][name] = std::move(js2);
        }
        j["seeds"].push_back(std::move(js));
    }
    j["correlations"] = ordered_json::array();
    for (const auto& c : report.correlations) {
        j["correlations"].push_back({{"technique", c.technique},
                                     {"layer", c.layer},
                                     {"approach_a", c.approach_a},
                                     {"approach_b", c.approach_b},
                                     {"taus", c.taus},
                                     {"skipped", c.skipped},
                                     {"mean_tau", c.mean_tau}});
    }
    j["aggregates"] = ordered_json::object();
    for (const auto& [key, agg] : report.aggregates) {
        j["aggregates"][key] = {{"mean", agg.mean}, {"stdev", agg.stdev}, {"count", agg.count}};
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

RunReport read_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    RunReport report;
    report.approach = j.at("approach").get<std::string>();
    report.requested_seeds = j.at("requested_seeds").get<std::vector<uint64_t>>();
    if (!j.at("bounds").is_null()) {
        report.bounds = Bounds{j["bounds"].at("b_train").get<double>(),
                               j["bounds"].at("b_val").get<double>()};
    }
    for (const auto& js : j.at("seeds")) {
        SeedOutcome s;
        s.requested_seed = js.at("requested_seed").get<uint64_t>();
        s.used_seed = js.at("used_seed").get<uint64_t>();
        s.retries = js.at("retries").get<int>();
        s.failed = js.at("failed").get<bool>();
        s.selected_epoch = js.at("selected_epoch").get<size_t>();
        s.final_val = curve_point_from(js.at("final_val"));
        for (const auto& [name, js2] : js.at("splits").items()) {
            SplitScores scores;
            scores.f1 = js2.at("f1").get<double>();
            for (const auto& row : js2.at("plausibility")) {
                scores.plausibility.push_back({row.at("technique").get<std::string>(),
                                               row.at("layer").get<int>(),
                                               row.at("auc").get<double>(),
                                               row.at("ap").get<double>(),
                                               row.at("recall").get<double>(),
                                               row.at("defined").get<int>()});
            }
            for (const auto& row : js2.at("faithfulness")) {
                scores.faithfulness.push_back({row.at("technique").get<std::string>(),
                                               row.at("null_diff").get<double>(),
                                               row.at("norm_suff").get<double>(),
                                               row.at("norm_comp").get<double>(),
                                               row.at("n").get<int>()});
            }
            s.splits[name] = std::move(scores);
        }
        report.seeds.push_back(std::move(s));
    }
    for (const auto& jc : j.at("correlations")) {
        CorrelationRecord c;
        c.technique = jc.at("technique").get<std::string>();
        c.layer = jc.at("layer").get<int>();
        c.approach_a = jc.at("approach_a").get<std::string>();
        c.approach_b = jc.at("approach_b").get<std::string>();
        c.taus = jc.at("taus").get<std::vector<double>>();
        c.skipped = jc.at("skipped").get<int>();
        c.mean_tau = jc.at("mean_tau").get<double>();
        report.correlations.push_back(std::move(c));
    }
    for (const auto& [key, ja] : j.at("aggregates").items()) {
        report.aggregates[key] = {ja.at("mean").get<double>(), ja.at("stdev").get<double>(),
                                  ja.at("count").get<int>()};
    }
    return report;
}

LambdaSweep sweep_lambda(const ExperimentConfig& base, const std::vector<double>& grid) {
    if (approach_objective(base.approach) != Objective::joint) {
        throw std::invalid_argument("lambda sweeps need a jointly regularised approach");
    }
    if (base.seeds.size() < 5) {
        throw std::invalid_argument("lambda sweeps average over at least 5 seeds");
    }
    if (grid.empty()) throw std::invalid_argument("empty lambda grid");
    for (double l : grid) {
        if (l < 0.0) throw std::invalid_argument("lambda must be nonnegative");
    }
    const auto data = load_experiment_data(base);
    const auto vocab = build_vocab(data);
    const auto model_cfg = resolve_model_config(base, vocab, data);
    const Technique technique = *approach_technique(base.approach);

    LambdaSweep sweep;
    if (base.bounds) {
        sweep.bound_reference = base.bounds->b_val;
    } else {
        sweep.bound_reference = compute_bounds(model_cfg, data, vocab, technique, base.training,
                                               base.bound_seeds, base.seeds[0])
                                    .b_val;
    }
    for (double lambda : grid) {
        TrainConfig tc = base.training;
        tc.lambda = lambda;
        std::vector<double> train_ce, train_expl, val_ce, val_expl;
        for (uint64_t seed : base.seeds) {
            auto result = train(model_cfg, data, vocab, Objective::joint, technique, tc, seed);
            const auto& last = result.epochs.back();
            train_ce.push_back(last.train.ce);
            train_expl.push_back(last.train.expl);
            val_ce.push_back(last.val.ce);
            val_expl.push_back(last.val.expl);
        }
        LambdaSweepRow row;
        row.lambda = lambda;
        row.seeds = static_cast<int>(base.seeds.size());
        row.train_ce = aggregate(train_ce);
        row.train_expl = aggregate(train_expl);
        row.val_ce = aggregate(val_ce);
        row.val_expl = aggregate(val_expl);
        sweep.rows.push_back(row);
    }
    return sweep;
}

void write_sweep_csv(const std::string& path, const LambdaSweep& sweep) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "lambda,seeds,train_ce_mean,train_ce_std,train_expl_mean,train_expl_std,"
           "val_ce_mean,val_ce_std,val_expl_mean,val_expl_std,bound_reference\n";
    char buf[320];
    for (const auto& r : sweep.rows) {
        std::snprintf(buf, sizeof(buf),
                      "%.17g,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      r.lambda, r.seeds, r.train_ce.mean, r.train_ce.stdev, r.train_expl.mean,
                      r.train_expl.stdev, r.val_ce.mean, r.val_ce.stdev, r.val_expl.mean,
                      r.val_expl.stdev, sweep.bound_reference);
        out << buf;
    }
}

ScatterTable emit_ood_scatter(const std::vector<RunReport>& reports) {
    ScatterTable table;
    table.columns = {"seed",        "approach",    "dev_f1",      "dev_auc_att",
                     "dev_auc_attr", "dev_auc_ixg", "ood_auc_att", "ood_auc_attr",
                     "ood_auc_ixg",  "ood_f1"};
    for (const auto& report : reports) {
        for (const auto& s : report.seeds) {
            if (s.failed) continue;
            auto dev = s.splits.find("dev");
            auto ood = s.splits.find("test_ood");
            if (dev == s.splits.end() || ood == s.splits.end()) continue;
            ScatterTable::Row row;
            row.seed = s.requested_seed;
            row.approach = report.approach;
            for (const auto* scores : {&dev->second, &ood->second}) {
                if (scores == &dev->second) row.values.push_back(scores->f1);
                for (const char* tech : {"att", "attr", "ixg"}) {
                    auto auc = top_layer_auc(*scores, tech);
                    row.values.push_back(auc.value_or(0.0));
                }
            }
            row.values.push_back(ood->second.f1);
            table.rows.push_back(std::move(row));
        }
    }
    const size_t predictors = table.columns.size() - 3;  // between approach and ood_f1
    std::vector<double> ood_f1;
    for (const auto& r : table.rows) ood_f1.push_back(r.values.back());
    for (size_t c = 0; c < predictors; ++c) {
        std::vector<double> column;
        for (const auto& r : table.rows) column.push_back(r.values[c]);
        table.rank_correlations[table.columns[c + 2]] =
            table.rows.empty() ? std::nullopt : kendall_tau_b(column, ood_f1);
    }
    return table;
}

void write_scatter_csv(const std::string& path, const ScatterTable& table) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (size_t c = 0; c < table.columns.size(); ++c) {
        out << (c ? "," : "") << table.columns[c];
    }
    out << "\n";
    char buf[64];
    for (const auto& r : table.rows) {
        out << r.seed << "," << r.approach;
        for (double v : r.values) {
            std::snprintf(buf, sizeof(buf), ",%.17g", v);
            out << buf;
        }
        out << "\n";
    }
    out << "\npredictor,kendall_tau_b_vs_ood_f1\n";
    for (const auto& [name, tau] : table.rank_correlations) {
        out << name << ",";
        if (tau) {
            std::snprintf(buf, sizeof(buf), "%.17g", *tau);
            out << buf;
        }
        out << "\n";
    }
}

namespace {

struct PooledSamples {
    std::vector<double> treatment;
    std::vector<double> baseline;
};

std::string effect_flag(const PooledSamples& s, double margin_scale, double* delta) {
    if (s.treatment.empty() || s.baseline.empty()) {
        *delta = 0.0;
        return "?";
    }
    const auto t = aggregate(s.treatment);
    const auto b = aggregate(s.baseline);
    *delta = t.mean - b.mean;
    double pooled = 0.0;
    if (t.count + b.count > 2) {
        pooled = std::sqrt(((t.count - 1) * t.stdev * t.stdev +
                            (b.count - 1) * b.stdev * b.stdev) /
                           (t.count + b.count - 2));
    }
    const double margin = margin_scale * pooled;
    if (*delta > margin) return "+";
    if (*delta < -margin) return "-";
    return "0";
}

}  // namespace

EffectTable summarize_effects(const std::vector<RunReport>& reports, double margin_scale) {
    EffectTable table;
    const RunReport* baseline = nullptr;
    std::map<std::string, const RunReport*> by_name;
    for (const auto& r : reports) {
        by_name[r.approach] = &r;
        if (r.approach == "baseline") baseline = &r;
    }
    table.baseline_present = baseline != nullptr;

    const std::vector<std::tuple<std::string, std::string, std::vector<std::string>>> layout = {
        {"joint", "local", {"er-att"}},
        {"joint", "global", {"er-attr", "er-ixg"}},
        {"constrained", "local", {"erc-att"}},
        {"constrained", "global", {"erc-attr", "erc-ixg"}},
    };
    const std::vector<std::string> techniques = {"att", "attr", "ixg"};

    for (const auto& [setup, guidance, members] : layout) {
        EffectCell cell;
        cell.setup = setup;
        cell.guidance = guidance;
        PooledSamples f1, guided, non_guided;
        for (const auto& member : members) {
            auto it = by_name.find(member);
            if (it == by_name.end()) {
                cell.missing.push_back(member);
                continue;
            }
            cell.approaches.push_back(member);
            const std::string guided_tech =
                technique_name(*approach_technique(parse_approach(member)));
            for (const auto& s : it->second->seeds) {
                if (s.failed) continue;
                auto dev = s.splits.find("dev");
                auto ood = s.splits.find("test_ood");
                if (dev == s.splits.end() || ood == s.splits.end()) continue;
                f1.treatment.push_back(ood->second.f1);
                if (auto a = top_layer_auc(dev->second, guided_tech)) {
                    guided.treatment.push_back(*a);
                }
                double sum = 0.0;
                int n = 0;
                for (const auto& tech : techniques) {
                    if (tech == guided_tech) continue;
                    if (auto a = top_layer_auc(dev->second, tech)) {
                        sum += *a;
                        ++n;
                    }
                }
                if (n > 0) non_guided.treatment.push_back(sum / n);
            }
            if (baseline) {
                for (const auto& s : baseline->seeds) {
                    if (s.failed) continue;
                    auto dev = s.splits.find("dev");
                    if (dev == s.splits.end()) continue;
                    if (auto a = top_layer_auc(dev->second, guided_tech)) {
                        guided.baseline.push_back(*a);
                    }
                    double sum = 0.0;
                    int n = 0;
                    for (const auto& tech : techniques) {
                        if (tech == guided_tech) continue;
                        if (auto a = top_layer_auc(dev->second, tech)) {
                            sum += *a;
                            ++n;
                        }
                    }
                    if (n > 0) non_guided.baseline.push_back(sum / n);
                }
            }
        }
        if (baseline) {
            for (const auto& s : baseline->seeds) {
                if (s.failed) continue;
                auto ood = s.splits.find("test_ood");
                if (ood != s.splits.end()) f1.baseline.push_back(ood->second.f1);
            }
        }
        cell.f1_effect = effect_flag(f1, margin_scale, &cell.f1_delta);
        cell.guided_effect = effect_flag(guided, margin_scale, &cell.guided_delta);
        cell.non_guided_effect = effect_flag(non_guided, margin_scale, &cell.non_guided_delta);
        table.cells.push_back(std::move(cell));
    }
    return table;
}

void write_effects_json(const std::string& path, const EffectTable& table) {
    ordered_json j;
    j["baseline_present"] = table.baseline_present;
    j["cells"] = ordered_json::array();
    for (const auto& c : table.cells) {
        j["cells"].push_back({{"setup", c.setup},
                              {"guidance", c.guidance},
                              {"approaches", c.approaches},
                              {"missing", c.missing},
                              {"ood_f1", {{"effect", c.f1_effect}, {"delta", c.f1_delta}}},
                              {"guided_plausibility",
                               {{"effect", c.guided_effect}, {"delta", c.guided_delta}}},
                              {"non_guided_plausibility",
                               {{"effect", c.non_guided_effect}, {"delta", c.non_guided_delta}}}});
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

}  // namespace erlab
