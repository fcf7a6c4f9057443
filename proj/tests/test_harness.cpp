#include "doctest.h"
#include "erlab/harness.hpp"

#include <filesystem>
#include <fstream>

using namespace erlab;
namespace fs = std::filesystem;

namespace {

SyntheticSpec harness_spec() {
    SyntheticSpec s;
    s.filler_vocab = 10;
    s.pos_cue_vocab = 4;
    s.neg_cue_vocab = 4;
    s.min_len = 8;
    s.max_len = 10;
    s.train_size = 96;
    s.dev_size = 32;
    s.test_id_size = 12;
    s.test_ood_size = 12;
    s.seed = 41;
    return s;
}

ExperimentConfig small_config(Approach approach, const fs::path& out = {}) {
    ExperimentConfig c;
    c.approach = approach;
    c.model.num_layers = 2;
    c.model.num_heads = 2;
    c.model.d_model = 16;
    c.model.d_ff = 32;
    c.model.max_seq_len = 16;
    c.synth = harness_spec();
    c.training.max_epochs = 2;
    c.training.batch_size = 16;
    c.seeds = {1, 2};
    c.faithfulness_sample = 4;
    c.out_dir = out.string();
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

RunReport fake_report(const std::string& approach,
                      const std::vector<std::map<std::string, double>>& seed_metrics) {
    // metrics keys: f1_dev, f1_ood, auc_att, auc_attr, auc_ixg (dev),
    // ood_auc_att/attr/ixg; missing keys default to 50
    RunReport r;
    r.approach = approach;
    uint64_t seed = 1;
    for (const auto& m : seed_metrics) {
        auto get = [&](const std::string& k, double dflt = 50.0) {
            auto it = m.find(k);
            return it == m.end() ? dflt : it->second;
        };
        SeedOutcome s;
        s.requested_seed = seed;
        s.used_seed = seed;
        ++seed;
        SplitScores dev;
        dev.f1 = get("f1_dev");
        dev.plausibility = {{"att", 1, get("auc_att"), 0, 0, 1},
                            {"attr", 1, get("auc_attr"), 0, 0, 1},
                            {"ixg", -1, get("auc_ixg"), 0, 0, 1}};
        SplitScores ood;
        ood.f1 = get("f1_ood");
        ood.plausibility = {{"att", 1, get("ood_auc_att"), 0, 0, 1},
                            {"attr", 1, get("ood_auc_attr"), 0, 0, 1},
                            {"ixg", -1, get("ood_auc_ixg"), 0, 0, 1}};
        s.splits["dev"] = dev;
        s.splits["test_ood"] = ood;
        r.seeds.push_back(s);
    }
    r.aggregates = aggregate_outcomes(r.seeds);
    return r;
}

}  // namespace

TEST_CASE("approach names, objectives, and techniques line up") {
    for (auto a : {Approach::baseline, Approach::er_att, Approach::er_attr, Approach::er_ixg,
                   Approach::erc_att, Approach::erc_attr, Approach::erc_ixg,
                   Approach::expl_only_att, Approach::expl_only_attr, Approach::expl_only_ixg}) {
        CHECK(parse_approach(approach_name(a)) == a);
    }
    CHECK(approach_objective(Approach::baseline) == Objective::baseline);
    CHECK(approach_objective(Approach::er_attr) == Objective::joint);
    CHECK(approach_objective(Approach::erc_ixg) == Objective::constrained);
    CHECK(approach_objective(Approach::expl_only_att) == Objective::expl_only);
    CHECK_FALSE(approach_technique(Approach::baseline).has_value());
    CHECK(approach_technique(Approach::erc_attr) == Technique::attr);
    CHECK_THROWS_AS(parse_approach("er-nothing"), std::invalid_argument);
    CHECK(default_seeds().size() == 15);
}

TEST_CASE("aggregation computes sample statistics") {
    auto a = aggregate({2.0, 4.0, 6.0});
    CHECK(a.mean == doctest::Approx(4.0));
    CHECK(a.stdev == doctest::Approx(2.0));
    CHECK(a.count == 3);
    CHECK(aggregate({}).count == 0);
    CHECK(aggregate({7.0}).stdev == 0.0);
}

TEST_CASE("attribution dumps cover every technique and layer") {
    auto data = generate_synthetic(harness_spec());
    auto vocab = build_vocab(data);
    ModelConfig mc;
    mc.num_layers = 2;
    mc.num_heads = 2;
    mc.d_model = 16;
    mc.d_ff = 32;
    mc.vocab_size = vocab.size();
    mc.max_seq_len = 16;
    mc.seed = 9;
    Model m = Model::init(mc);

    auto dumps = dump_attributions(m, vocab, data.dev, "baseline", 9);
    CHECK(dumps.size() == data.dev.size() * 5);  // 2 att + 2 attr + 1 ixg
    int att0 = 0, att1 = 0, ixg = 0;
    for (const auto& r : dumps) {
        CHECK(r.approach == "baseline");
        CHECK(r.scores.size() == data.dev[static_cast<size_t>(r.example)].tokens.size());
        if (r.technique == "att" && r.layer == 0) ++att0;
        if (r.technique == "att" && r.layer == 1) ++att1;
        if (r.technique == "ixg") {
            ++ixg;
            CHECK(r.layer == -1);
        }
    }
    CHECK(att0 == static_cast<int>(data.dev.size()));
    CHECK(att1 == static_cast<int>(data.dev.size()));
    CHECK(ixg == static_cast<int>(data.dev.size()));

    auto scores = score_split(m, vocab, data.dev, dumps, 4);
    int att_rows = 0, attr_rows = 0, ixg_rows = 0;
    for (const auto& row : scores.plausibility) {
        if (row.technique == "att") ++att_rows;
        if (row.technique == "attr") ++attr_rows;
        if (row.technique == "ixg") ++ixg_rows;
        CHECK(row.defined == static_cast<int>(data.dev.size()));
    }
    CHECK(att_rows == mc.num_layers);
    CHECK(attr_rows == mc.num_layers);
    CHECK(ixg_rows == 1);
    REQUIRE(scores.faithfulness.size() == 3);
    for (const auto& row : scores.faithfulness) CHECK(row.n == 4);
    CHECK(scores.f1 >= 0.0);
    CHECK(scores.f1 <= 100.0);
}

TEST_CASE("dumps that mirror the rationale score perfect plausibility") {
    auto data = generate_synthetic(harness_spec());
    auto vocab = build_vocab(data);
    ModelConfig mc;
    mc.num_layers = 1;
    mc.num_heads = 1;
    mc.d_model = 8;
    mc.d_ff = 16;
    mc.vocab_size = vocab.size();
    mc.max_seq_len = 16;
    Model m = Model::init(mc);

    std::vector<DumpRecord> dumps;
    for (size_t i = 0; i < data.dev.size(); ++i) {
        DumpRecord r;
        r.approach = "x";
        r.seed = 1;
        r.example = static_cast<int>(i);
        r.technique = "att";
        r.layer = 0;
        for (int v : data.dev[i].rationale) r.scores.push_back(v);
        dumps.push_back(r);
    }
    auto scores = score_split(m, vocab, data.dev, dumps, 0);
    REQUIRE(scores.plausibility.size() == 1);
    CHECK(scores.plausibility[0].auc == doctest::Approx(100.0));
    CHECK(scores.plausibility[0].ap == doctest::Approx(100.0));
    CHECK(scores.plausibility[0].recall == doctest::Approx(100.0));
}

TEST_CASE("experiments reproduce byte for byte and reports re-aggregate") {
    const fs::path base = fs::temp_directory_path() / "erlab_tests" / "exp";
    fs::remove_all(base);
    auto run_a = run_experiment(small_config(Approach::er_att, base / "a"));
    auto run_b = run_experiment(small_config(Approach::er_att, base / "b"));

    for (const char* rel :
         {"report.json", "seed-1/curves.csv", "seed-1/dumps-dev.jsonl",
          "seed-2/dumps-test_ood.jsonl", "seed-1/checkpoint.json"}) {
        CHECK(slurp(base / "a" / rel) == slurp(base / "b" / rel));
    }

    auto loaded = read_report((base / "a" / "report.json").string());
    CHECK(loaded.approach == "er-att");
    REQUIRE(loaded.seeds.size() == 2);
    auto recomputed = aggregate_outcomes(loaded.seeds);
    REQUIRE(recomputed.size() == loaded.aggregates.size());
    for (const auto& [key, agg] : loaded.aggregates) {
        CHECK(recomputed.at(key).mean == agg.mean);
        CHECK(recomputed.at(key).stdev == agg.stdev);
        CHECK(recomputed.at(key).count == agg.count);
    }
    CHECK(loaded.aggregates.count("dev/f1") == 1);
    CHECK(loaded.aggregates.count("dev/auc/att1") == 1);
    CHECK(loaded.aggregates.count("test_ood/faith/ixg/norm_comp") == 1);
    CHECK(loaded.aggregates.at("dev/f1").count == 2);
    CHECK(run_a.correlations.size() == 3);  // att top, attr top, ixg

    // in-memory result matches the disk round trip
    CHECK(run_a.seeds[0].selected_epoch == loaded.seeds[0].selected_epoch);
    CHECK(run_a.aggregates.at("dev/f1").mean == loaded.aggregates.at("dev/f1").mean);
}

TEST_CASE("constrained seeds fail over to fresh seeds and record failures") {
    auto config = small_config(Approach::erc_attr);
    config.retry_budget = 1;
    config.bounds = Bounds{1e-9, 1e-9};  // unattainable
    auto report = run_experiment(config);
    REQUIRE(report.seeds.size() == 2);
    for (const auto& s : report.seeds) {
        CHECK(s.failed);
        CHECK(s.retries == 1);
        CHECK(s.used_seed != s.requested_seed);  // the retry seed was tried
        CHECK(s.splits.empty());
    }
    CHECK(report.aggregates.empty());

    config.bounds = Bounds{10.0, 10.0};  // trivially satisfied
    auto ok = run_experiment(config);
    for (const auto& s : ok.seeds) {
        CHECK_FALSE(s.failed);
        CHECK(s.retries == 0);
        CHECK(s.final_val.expl < 1.1 * 10.0);
        CHECK(s.final_val.mu >= 0.0);
    }
}

TEST_CASE("lambda sweeps validate input and reduce to the baseline at zero") {
    auto config = small_config(Approach::er_attr);
    config.seeds = {1, 2, 3, 4, 5};
    config.bounds = Bounds{0.02, 0.02};
    config.training.max_epochs = 1;

    CHECK_THROWS_AS(sweep_lambda(small_config(Approach::baseline), {0.0}),
                    std::invalid_argument);
    auto few = config;
    few.seeds = {1, 2};
    CHECK_THROWS_AS(sweep_lambda(few, {0.0}), std::invalid_argument);
    CHECK_THROWS_AS(sweep_lambda(config, {}), std::invalid_argument);
    CHECK_THROWS_AS(sweep_lambda(config, {-1.0}), std::invalid_argument);

    auto sweep = sweep_lambda(config, {0.0, 5.0});
    REQUIRE(sweep.rows.size() == 2);
    CHECK(sweep.bound_reference == 0.02);
    CHECK(sweep.rows[0].lambda == 0.0);
    CHECK(sweep.rows[0].seeds == 5);

    // the zero row is the baseline: rerun one seed as a plain baseline
    auto data = generate_synthetic(config.synth);
    auto vocab = build_vocab(data);
    ModelConfig mc = config.model;
    mc.vocab_size = vocab.size();
    TrainConfig tc = config.training;
    tc.lambda = 0.0;
    double ce_sum = 0.0;
    for (uint64_t seed : config.seeds) {
        auto r = train(mc, data, vocab, Objective::baseline, Technique::attr, tc, seed);
        ce_sum += r.epochs.back().train.ce;
    }
    CHECK(sweep.rows[0].train_ce.mean == doctest::Approx(ce_sum / 5).epsilon(1e-15));

    const auto csv = (fs::temp_directory_path() / "erlab_tests" / "sweep.csv").string();
    write_sweep_csv(csv, sweep);
    std::ifstream in(csv);
    std::string line;
    std::getline(in, line);
    CHECK(line.find("lambda,seeds,train_ce_mean") == 0);
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 2);
}

TEST_CASE("scatter table pairs predictors with OOD F1 and ranks them") {
    std::vector<RunReport> reports;
    // ood_f1 rises with f1_dev (perfect rank agreement); auc_att constant
    reports.push_back(fake_report(
        "baseline", {{{"f1_dev", 60}, {"f1_ood", 55}, {"auc_att", 50}, {"auc_attr", 61}},
                     {{"f1_dev", 70}, {"f1_ood", 65}, {"auc_att", 50}, {"auc_attr", 64}},
                     {{"f1_dev", 80}, {"f1_ood", 75}, {"auc_att", 50}, {"auc_attr", 69}}}));
    reports.push_back(fake_report(
        "er-att", {{{"f1_dev", 65}, {"f1_ood", 60}, {"auc_att", 50}, {"auc_attr", 62}},
                   {{"f1_dev", 75}, {"f1_ood", 70}, {"auc_att", 50}, {"auc_attr", 66}}}));

    auto table = emit_ood_scatter(reports);
    REQUIRE(table.rows.size() == 5);
    CHECK(table.columns.front() == "seed");
    CHECK(table.columns.back() == "ood_f1");
    CHECK(table.rank_correlations.at("dev_f1").value() == doctest::Approx(1.0));
    CHECK_FALSE(table.rank_correlations.at("dev_auc_att").has_value());  // constant column
    CHECK(table.rank_correlations.at("dev_auc_attr").value() == doctest::Approx(1.0));

    const auto csv = (fs::temp_directory_path() / "erlab_tests" / "scatter.csv").string();
    write_scatter_csv(csv, table);
    auto text = slurp(csv);
    CHECK(text.find("seed,approach,dev_f1") == 0);
    CHECK(text.find("predictor,kendall_tau_b_vs_ood_f1") != std::string::npos);

    // failed seeds stay out of the table
    RunReport failing = fake_report("erc-att", {{{"f1_dev", 50}}});
    failing.seeds[0].failed = true;
    auto reduced = emit_ood_scatter({failing});
    CHECK(reduced.rows.empty());
}

TEST_CASE("effect table flags directional differences against the baseline") {
    std::map<std::string, double> base_metrics = {
        {"f1_ood", 60}, {"auc_att", 55}, {"auc_attr", 56}, {"auc_ixg", 54}};
    std::vector<std::map<std::string, double>> base(4, base_metrics);
    // slight seed noise so the pooled std is nonzero
    base[1]["f1_ood"] = 61;
    base[2]["auc_att"] = 56;
    base[3]["auc_ixg"] = 55;

    auto joint_att = base;
    for (auto& m : joint_att) {
        m["auc_att"] += 30;  // guided jumps
        m["f1_ood"] += 8;    // ood improves
    }
    std::vector<RunReport> reports = {fake_report("baseline", base),
                                      fake_report("er-att", joint_att)};
    auto table = summarize_effects(reports);
    REQUIRE(table.cells.size() == 4);
    CHECK(table.baseline_present);

    const auto& jl = table.cells[0];
    CHECK(jl.setup == "joint");
    CHECK(jl.guidance == "local");
    CHECK(jl.approaches == std::vector<std::string>{"er-att"});
    CHECK(jl.guided_effect == "+");
    CHECK(jl.f1_effect == "+");
    CHECK(jl.non_guided_effect == "0");  // untouched techniques stay level

    const auto& jg = table.cells[1];
    CHECK(jg.missing == std::vector<std::string>{"er-attr", "er-ixg"});
    CHECK(jg.guided_effect == "?");

    auto no_baseline = summarize_effects({fake_report("er-att", joint_att)});
    CHECK_FALSE(no_baseline.baseline_present);
    CHECK(no_baseline.cells[0].guided_effect == "?");

    const auto path = (fs::temp_directory_path() / "erlab_tests" / "effects.json").string();
    write_effects_json(path, table);
    auto text = slurp(path);
    CHECK(text.find("\"guided_plausibility\"") != std::string::npos);
}
