#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace erlab {

// Token ids reserved ahead of any corpus vocabulary.
inline constexpr int kPadId = 0;
inline constexpr int kClsId = 1;
inline constexpr int kMaskId = 2;
inline constexpr int kUnkId = 3;

struct RationaleExample {
    std::vector<std::string> tokens;
    int label = 0;                // {0,1}
    std::vector<int> rationale;   // binary, aligned to tokens
};

struct DataSplits {
    std::vector<RationaleExample> train;
    std::vector<RationaleExample> dev;
    std::vector<RationaleExample> test_id;
    std::vector<RationaleExample> test_ood;
};

// Controlled sentiment-style toy task. Label-consistent cue tokens form the
// rationale; one shortcut token tracks the label with agreement rho_id on
// the in-domain splits and rho_ood on the OOD split; the OOD split also
// swaps a fraction of filler tokens for unseen ones.
struct SyntheticSpec {
    int filler_vocab = 30;
    int pos_cue_vocab = 6;
    int neg_cue_vocab = 6;
    int min_len = 8;
    int max_len = 24;
    int min_cues = 1;
    int max_cues = 3;
    std::string shortcut_token = "shortcut";
    double rho_id = 0.95;
    double rho_ood = 0.5;
    double ood_novel_filler_fraction = 0.5;
    int train_size = 4000;
    int dev_size = 500;
    int test_id_size = 500;
    int test_ood_size = 500;
    uint64_t seed = 1234;
};

// Deterministic per spec.seed; byte-identical output for equal specs.
// Throws on infeasible geometry (cues + shortcut cannot fit min_len) or
// out-of-range correlations.
DataSplits generate_synthetic(const SyntheticSpec& spec);

// JSONL, one {"tokens": [...], "label": 0|1, "rationale": [...]} object per
// line, one file per split, plus manifest.json recording the spec.
void save_dataset(const DataSplits& splits, const SyntheticSpec& spec, const std::string& dir);

// Loads and validates <dir>/{train,dev,test_id,test_ood}.jsonl. Malformed
// records raise errors naming the file and line. Missing or empty files
// yield empty splits.
DataSplits load_dataset(const std::string& dir);

struct Vocab {
    std::unordered_map<std::string, int> token_to_id;
    std::vector<std::string> id_to_token;  // index = id; reserved ids included

    int size() const { return static_cast<int>(id_to_token.size()); }
    int id_of(const std::string& token) const {
        auto it = token_to_id.find(token);
        return it == token_to_id.end() ? kUnkId : it->second;
    }
};

// Reserved ids first, then train-split tokens in first-occurrence order.
// Tokens outside the train split (OOD fillers) map to UNK at encoding time.
Vocab build_vocab(const DataSplits& splits);

// Real-token ids (no CLS); unseen tokens become UNK.
std::vector<int> encode(const Vocab& vocab, const std::vector<std::string>& tokens);

// Same with CLS prepended, the layout the encoder consumes.
std::vector<int> encode_with_cls(const Vocab& vocab, const std::vector<std::string>& tokens);

// Distributional audit used by tests and the data tooling.
struct SplitAudit {
    int size = 0;
    double label1_fraction = 0.0;
    double shortcut_agreement = 0.0;   // (shortcut present) == (label 1)
    double oov_token_fraction = 0.0;   // tokens unseen in the train split
    int empty_rationales = 0;
    int marked_token_label_conflicts = 0;  // rationale tokens seen under both labels
};

struct AuditReport {
    SplitAudit train, dev, test_id, test_ood;
};

AuditReport audit(const DataSplits& splits, const std::string& shortcut_token);

}  // namespace erlab
