#include "erlab/data.hpp"
#include "erlab/rng.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace erlab {

namespace {

using ordered_json = nlohmann::ordered_json;

void validate_spec(const SyntheticSpec& s) {
    if (s.filler_vocab < 1 || s.pos_cue_vocab < 1 || s.neg_cue_vocab < 1) {
        throw std::invalid_argument("synthetic spec: vocab sizes must be positive");
    }
    if (s.min_len < 1 || s.max_len < s.min_len) {
        throw std::invalid_argument("synthetic spec: bad length range");
    }
    if (s.min_cues < 1 || s.max_cues < s.min_cues) {
        throw std::invalid_argument("synthetic spec: bad cue range");
    }
    if (s.max_cues + 1 > s.min_len) {  // cues plus a possible shortcut must fit
        throw std::invalid_argument("synthetic spec: cues do not fit the shortest sequence");
    }
    if (s.rho_id < 0.0 || s.rho_id > 1.0 || s.rho_ood < 0.0 || s.rho_ood > 1.0) {
        throw std::invalid_argument("synthetic spec: correlations must lie in [0,1]");
    }
    if (s.ood_novel_filler_fraction < 0.0 || s.ood_novel_filler_fraction > 1.0) {
        throw std::invalid_argument("synthetic spec: novel filler fraction must lie in [0,1]");
    }
    if (s.train_size < 2 || s.dev_size < 0 || s.test_id_size < 0 || s.test_ood_size < 0) {
        throw std::invalid_argument("synthetic spec: bad split sizes");
    }
}

std::vector<RationaleExample> generate_split(const SyntheticSpec& spec, int size, double rho,
                                             bool novel_fillers, Rng& rng) {
    // Exact-count label assignment and exact-count shortcut agreement keep
    // the generated correlations on target for any split size.
    std::vector<int> labels(size);
    for (int i = 0; i < size; ++i) labels[i] = i < size / 2 ? 0 : 1;

    std::vector<int> shortcut(size, 0);
    for (int label = 0; label <= 1; ++label) {
        std::vector<int> members;
        for (int i = 0; i < size; ++i) {
            if (labels[i] == label) members.push_back(i);
        }
        rng.shuffle(members);
        const int agree = static_cast<int>(
            std::llround(rho * static_cast<double>(members.size())));
        // agreement means: shortcut present iff label is 1
        for (size_t j = 0; j < members.size(); ++j) {
            const bool agrees = static_cast<int>(j) < agree;
            shortcut[members[j]] = (label == 1) == agrees ? 1 : 0;
        }
    }

    std::vector<int> order(size);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    std::vector<RationaleExample> out;
    out.reserve(size);
    for (int oi = 0; oi < size; ++oi) {
        const int i = order[oi];
        RationaleExample ex;
        ex.label = labels[i];

        const int len = rng.uniform_int(spec.min_len, spec.max_len);
        const int has_shortcut = shortcut[i];
        const int cue_cap = std::min(spec.max_cues, len - has_shortcut);
        const int cues = rng.uniform_int(spec.min_cues, cue_cap);

        std::vector<int> positions(len);
        std::iota(positions.begin(), positions.end(), 0);
        rng.shuffle(positions);

        ex.tokens.assign(len, "");
        ex.rationale.assign(len, 0);
        int next = 0;
        for (int c = 0; c < cues; ++c) {
            const int p = positions[next++];
            const int vocab = ex.label == 1 ? spec.pos_cue_vocab : spec.neg_cue_vocab;
            const char* prefix = ex.label == 1 ? "pos" : "neg";
            ex.tokens[p] = prefix + std::to_string(rng.below(vocab));
            ex.rationale[p] = 1;
        }
        if (has_shortcut) ex.tokens[positions[next++]] = spec.shortcut_token;
        for (int p = 0; p < len; ++p) {
            if (!ex.tokens[p].empty()) continue;
            const bool novel = novel_fillers && rng.uniform() < spec.ood_novel_filler_fraction;
            ex.tokens[p] = (novel ? "o" : "f") + std::to_string(rng.below(spec.filler_vocab));
        }
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace

DataSplits generate_synthetic(const SyntheticSpec& spec) {
    validate_spec(spec);
    DataSplits splits;
    {
        Rng rng(derive_seed(spec.seed, "split-train"));
        splits.train = generate_split(spec, spec.train_size, spec.rho_id, false, rng);
    }
    {
        Rng rng(derive_seed(spec.seed, "split-dev"));
        splits.dev = generate_split(spec, spec.dev_size, spec.rho_id, false, rng);
    }
    {
        Rng rng(derive_seed(spec.seed, "split-test-id"));
        splits.test_id = generate_split(spec, spec.test_id_size, spec.rho_id, false, rng);
    }
    {
        Rng rng(derive_seed(spec.seed, "split-test-ood"));
        splits.test_ood = generate_split(spec, spec.test_ood_size, spec.rho_ood, true, rng);
    }
    return splits;
}

namespace {

const char* kSplitFiles[4] = {"train.jsonl", "dev.jsonl", "test_id.jsonl", "test_ood.jsonl"};

void write_split(const std::vector<RationaleExample>& split, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const RationaleExample& ex : split) {
        ordered_json j;
        j["tokens"] = ex.tokens;
        j["label"] = ex.label;
        j["rationale"] = ex.rationale;
        out << j.dump() << "\n";
    }
}

std::vector<RationaleExample> read_split(const std::string& path) {
    std::vector<RationaleExample> out;
    std::ifstream in(path, std::ios::binary);
    if (!in) return out;  // absent file = empty split
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(lineno);
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::runtime_error(where + ": malformed JSON (" + e.what() + ")");
        }
        if (!j.is_object() || !j.contains("tokens") || !j.contains("label") ||
            !j.contains("rationale")) {
            throw std::runtime_error(where + ": record must have tokens, label, rationale");
        }
        RationaleExample ex;
        try {
            ex.tokens = j["tokens"].get<std::vector<std::string>>();
            ex.label = j["label"].get<int>();
            ex.rationale = j["rationale"].get<std::vector<int>>();
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(where + ": bad field type (" + e.what() + ")");
        }
        if (ex.label != 0 && ex.label != 1) {
            throw std::runtime_error(where + ": label must be 0 or 1");
        }
        if (ex.rationale.size() != ex.tokens.size()) {
            throw std::runtime_error(where + ": rationale length does not match tokens");
        }
        for (int r : ex.rationale) {
            if (r != 0 && r != 1) throw std::runtime_error(where + ": rationale must be binary");
        }
        if (ex.tokens.empty()) throw std::runtime_error(where + ": empty token list");
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace

void save_dataset(const DataSplits& splits, const SyntheticSpec& spec, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const std::vector<RationaleExample>* parts[4] = {&splits.train, &splits.dev, &splits.test_id,
                                                     &splits.test_ood};
    for (int i = 0; i < 4; ++i) {
        write_split(*parts[i], dir + "/" + kSplitFiles[i]);
    }
    ordered_json m;
    m["filler_vocab"] = spec.filler_vocab;
    m["pos_cue_vocab"] = spec.pos_cue_vocab;
    m["neg_cue_vocab"] = spec.neg_cue_vocab;
    m["min_len"] = spec.min_len;
    m["max_len"] = spec.max_len;
    m["min_cues"] = spec.min_cues;
    m["max_cues"] = spec.max_cues;
    m["shortcut_token"] = spec.shortcut_token;
    m["rho_id"] = spec.rho_id;
    m["rho_ood"] = spec.rho_ood;
    m["ood_novel_filler_fraction"] = spec.ood_novel_filler_fraction;
    m["train_size"] = spec.train_size;
    m["dev_size"] = spec.dev_size;
    m["test_id_size"] = spec.test_id_size;
    m["test_ood_size"] = spec.test_ood_size;
    m["seed"] = spec.seed;
    std::ofstream out(dir + "/manifest.json", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + dir + "/manifest.json");
    out << m.dump(2) << "\n";
}

DataSplits load_dataset(const std::string& dir) {
    DataSplits splits;
    splits.train = read_split(dir + "/" + kSplitFiles[0]);
    splits.dev = read_split(dir + "/" + kSplitFiles[1]);
    splits.test_id = read_split(dir + "/" + kSplitFiles[2]);
    splits.test_ood = read_split(dir + "/" + kSplitFiles[3]);
    return splits;
}

Vocab build_vocab(const DataSplits& splits) {
    if (splits.train.empty()) throw std::invalid_argument("build_vocab: empty train split");
    Vocab v;
    v.id_to_token = {"[PAD]", "[CLS]", "[MASK]", "[UNK]"};
    for (int i = 0; i < 4; ++i) v.token_to_id[v.id_to_token[i]] = i;
    for (const RationaleExample& ex : splits.train) {
        for (const std::string& t : ex.tokens) {
            if (v.token_to_id.emplace(t, v.size()).second) v.id_to_token.push_back(t);
        }
    }
    return v;
}

std::vector<int> encode(const Vocab& vocab, const std::vector<std::string>& tokens) {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const std::string& t : tokens) ids.push_back(vocab.id_of(t));
    return ids;
}

std::vector<int> encode_with_cls(const Vocab& vocab, const std::vector<std::string>& tokens) {
    std::vector<int> ids;
    ids.reserve(tokens.size() + 1);
    ids.push_back(kClsId);
    for (const std::string& t : tokens) ids.push_back(vocab.id_of(t));
    return ids;
}

namespace {

SplitAudit audit_split(const std::vector<RationaleExample>& split,
                       const std::string& shortcut_token,
                       const std::set<std::string>& train_tokens,
                       const std::map<std::string, std::set<int>>& marked_labels) {
    SplitAudit a;
    a.size = static_cast<int>(split.size());
    if (split.empty()) return a;
    long label1 = 0, agree = 0, oov = 0, total_tokens = 0;
    for (const RationaleExample& ex : split) {
        label1 += ex.label;
        bool has_shortcut = false;
        int marked = 0;
        for (size_t i = 0; i < ex.tokens.size(); ++i) {
            ++total_tokens;
            if (ex.tokens[i] == shortcut_token) has_shortcut = true;
            if (!train_tokens.count(ex.tokens[i])) ++oov;
            marked += ex.rationale[i];
        }
        if (has_shortcut == (ex.label == 1)) ++agree;
        if (marked == 0) ++a.empty_rationales;
    }
    a.label1_fraction = static_cast<double>(label1) / a.size;
    a.shortcut_agreement = static_cast<double>(agree) / a.size;
    a.oov_token_fraction = static_cast<double>(oov) / total_tokens;
    for (const auto& [token, labels] : marked_labels) {
        if (labels.size() > 1) ++a.marked_token_label_conflicts;
    }
    return a;
}

}  // namespace

AuditReport audit(const DataSplits& splits, const std::string& shortcut_token) {
    std::set<std::string> train_tokens;
    for (const RationaleExample& ex : splits.train) {
        train_tokens.insert(ex.tokens.begin(), ex.tokens.end());
    }
    // which labels each rationale-marked token string appears under, pooled
    // over all splits: a cue that marks both classes is a generator bug
    std::map<std::string, std::set<int>> marked_labels;
    for (const auto* split : {&splits.train, &splits.dev, &splits.test_id, &splits.test_ood}) {
        for (const RationaleExample& ex : *split) {
            for (size_t i = 0; i < ex.tokens.size(); ++i) {
                if (ex.rationale[i]) marked_labels[ex.tokens[i]].insert(ex.label);
            }
        }
    }
    AuditReport r;
    r.train = audit_split(splits.train, shortcut_token, train_tokens, marked_labels);
    r.dev = audit_split(splits.dev, shortcut_token, train_tokens, marked_labels);
    r.test_id = audit_split(splits.test_id, shortcut_token, train_tokens, marked_labels);
    r.test_ood = audit_split(splits.test_ood, shortcut_token, train_tokens, marked_labels);
    return r;
}

}  // namespace erlab
