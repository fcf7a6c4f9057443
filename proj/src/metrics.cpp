#include "erlab/metrics.hpp"
#include "erlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace erlab {

namespace {

void check_lengths(const std::vector<double>& scores, const std::vector<int>& mask) {
    if (scores.size() != mask.size()) {
        throw std::invalid_argument("plausibility: scores and mask lengths differ");
    }
}

std::vector<int> descending_order(const std::vector<double>& scores) {
    std::vector<int> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int b) { return scores[a] > scores[b]; });
    return idx;
}

}  // namespace

std::optional<double> auc_plausibility(const std::vector<double>& scores,
                                       const std::vector<int>& mask) {
    check_lengths(scores, mask);
    const size_t n = scores.size();
    size_t pos = 0;
    for (int m : mask) pos += static_cast<size_t>(m != 0);
    const size_t neg = n - pos;
    if (pos == 0 || neg == 0) return std::nullopt;

    // Mann-Whitney U through average ranks (handles ties with 0.5 credit)
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return scores[a] < scores[b]; });
    std::vector<double> rank(n, 0.0);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based avg rank
        for (size_t t = i; t <= j; ++t) rank[idx[t]] = avg;
        i = j + 1;
    }
    double rank_sum_pos = 0.0;
    for (size_t t = 0; t < n; ++t) {
        if (mask[t]) rank_sum_pos += rank[t];
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(pos) * (pos + 1);
    return 100.0 * u / (static_cast<double>(pos) * static_cast<double>(neg));
}

std::optional<double> average_precision(const std::vector<double>& scores,
                                        const std::vector<int>& mask) {
    check_lengths(scores, mask);
    size_t pos = 0;
    for (int m : mask) pos += static_cast<size_t>(m != 0);
    if (pos == 0) return std::nullopt;

    std::vector<int> idx = descending_order(scores);
    const size_t n = idx.size();
    double ap = 0.0;
    double prev_recall = 0.0;
    size_t tp = 0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;  // group entries sharing one threshold
        while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
        for (size_t t = i; t <= j; ++t) tp += static_cast<size_t>(mask[idx[t]] != 0);
        const double recall = static_cast<double>(tp) / static_cast<double>(pos);
        const double precision = static_cast<double>(tp) / static_cast<double>(j + 1);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    return 100.0 * ap;
}

std::optional<double> recall_at_k(const std::vector<double>& scores,
                                  const std::vector<int>& mask,
                                  std::optional<int> k) {
    check_lengths(scores, mask);
    size_t pos = 0;
    for (int m : mask) pos += static_cast<size_t>(m != 0);
    if (pos == 0) return std::nullopt;
    const int kk = k.value_or(static_cast<int>(pos));
    if (kk < 1) throw std::invalid_argument("recall_at_k: k must be positive");

    std::vector<int> idx = descending_order(scores);  // stable: ties by position
    size_t hit = 0;
    const size_t upto = std::min<size_t>(static_cast<size_t>(kk), idx.size());
    for (size_t r = 0; r < upto; ++r) hit += static_cast<size_t>(mask[idx[r]] != 0);
    return 100.0 * static_cast<double>(hit) / static_cast<double>(pos);
}

PlausibilityScores plausibility(const std::vector<double>& scores,
                                const std::vector<int>& mask,
                                std::optional<int> k) {
    PlausibilityScores out;
    out.auc = auc_plausibility(scores, mask);
    out.average_precision = average_precision(scores, mask);
    out.recall_at_k = recall_at_k(scores, mask, k);
    size_t pos = 0;
    for (int m : mask) pos += static_cast<size_t>(m != 0);
    out.k_used = k.value_or(static_cast<int>(pos));
    return out;
}

double f1_macro(const std::vector<int>& predictions, const std::vector<int>& gold) {
    if (predictions.empty() || predictions.size() != gold.size()) {
        throw std::invalid_argument("f1_macro: empty input or length mismatch");
    }
    double total = 0.0;
    int classes = 0;
    for (int c = 0; c <= 1; ++c) {
        long tp = 0, fp = 0, fn = 0;
        for (size_t i = 0; i < gold.size(); ++i) {
            const bool p = predictions[i] == c, g = gold[i] == c;
            tp += p && g;
            fp += p && !g;
            fn += !p && g;
        }
        if (tp + fp + fn == 0) continue;  // class absent everywhere
        total += 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
        ++classes;
    }
    return 100.0 * total / classes;
}

namespace {

// counts strictly decreasing pairs; v is consumed as scratch
long long merge_count_inversions(std::vector<double>& v, std::vector<double>& tmp,
                                 size_t lo, size_t hi) {
    if (hi - lo < 2) return 0;
    const size_t mid = (lo + hi) / 2;
    long long inv = merge_count_inversions(v, tmp, lo, mid) +
                    merge_count_inversions(v, tmp, mid, hi);
    size_t a = lo, b = mid, o = lo;
    while (a < mid && b < hi) {
        if (v[b] < v[a]) {
            inv += static_cast<long long>(mid - a);
            tmp[o++] = v[b++];
        } else {
            tmp[o++] = v[a++];
        }
    }
    while (a < mid) tmp[o++] = v[a++];
    while (b < hi) tmp[o++] = v[b++];
    std::copy(tmp.begin() + lo, tmp.begin() + hi, v.begin() + lo);
    return inv;
}

long long tie_pair_count(std::vector<double> sorted) {
    long long t = 0;
    size_t i = 0;
    while (i < sorted.size()) {
        size_t j = i;
        while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
        const long long g = static_cast<long long>(j - i + 1);
        t += g * (g - 1) / 2;
        i = j + 1;
    }
    return t;
}

}  // namespace

std::optional<double> kendall_tau_b(const std::vector<double>& a,
                                    const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("kendall_tau_b: length mismatch");
    const size_t n = a.size();
    if (n < 2) return std::nullopt;

    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int x, int y) {
        if (a[x] != a[y]) return a[x] < a[y];
        return b[x] < b[y];
    });

    const long long n0 = static_cast<long long>(n) * (n - 1) / 2;

    // tie counts: n1 in a, n2 in b, n3 in both
    std::vector<double> a_sorted(n), b_sorted(n), b_by_a(n);
    for (size_t i = 0; i < n; ++i) {
        a_sorted[i] = a[idx[i]];
        b_by_a[i] = b[idx[i]];
    }
    std::copy(b.begin(), b.end(), b_sorted.begin());
    std::sort(b_sorted.begin(), b_sorted.end());
    const long long n1 = tie_pair_count(a_sorted);
    const long long n2 = tie_pair_count(b_sorted);

    long long n3 = 0;
    {
        size_t i = 0;
        while (i < n) {
            size_t j = i;
            while (j + 1 < n && a[idx[j + 1]] == a[idx[i]] && b[idx[j + 1]] == b[idx[i]]) ++j;
            const long long g = static_cast<long long>(j - i + 1);
            n3 += g * (g - 1) / 2;
            i = j + 1;
        }
    }

    // after sorting by (a, b), inversions in b are exactly the discordant pairs
    std::vector<double> tmp(n);
    const long long discordant = merge_count_inversions(b_by_a, tmp, 0, n);
    const long long numerator = n0 - n1 - n2 + n3 - 2 * discordant;  // P - Q

    const double denom_a = static_cast<double>(n0 - n1);
    const double denom_b = static_cast<double>(n0 - n2);
    if (denom_a <= 0.0 || denom_b <= 0.0) return std::nullopt;
    return static_cast<double>(numerator) / std::sqrt(denom_a * denom_b);
}

// ---------------------------------------------------------------------------
// faithfulness
// ---------------------------------------------------------------------------

namespace {

double clip01(double v) { return std::min(1.0, std::max(0.0, v)); }

// ids with everything except the top-k attributed tokens replaced by mask_id
std::vector<int> keep_top_k(const std::vector<int>& ids, const std::vector<int>& order,
                            size_t k, int mask_id, bool keep) {
    std::vector<int> out = ids;
    std::vector<char> selected(ids.size(), 0);
    for (size_t r = 0; r < k && r < order.size(); ++r) selected[order[r]] = 1;
    for (size_t i = 0; i < out.size(); ++i) {
        const bool in_top = selected[i] != 0;
        if (in_top != keep) out[i] = mask_id;
    }
    return out;
}

}  // namespace

FaithfulnessScores faithfulness(const PredictFn& predict,
                                const std::vector<int>& real_ids,
                                const std::vector<double>& attr_scores,
                                const std::vector<double>& alpha_grid,
                                int mask_id,
                                bool literal_suff_denominator) {
    if (real_ids.empty()) throw std::invalid_argument("faithfulness: empty input");
    if (real_ids.size() != attr_scores.size()) {
        throw std::invalid_argument("faithfulness: attribution not aligned to tokens");
    }

    const std::vector<double> full = predict(real_ids);
    const int yhat = static_cast<int>(std::max_element(full.begin(), full.end()) - full.begin());
    const double p_full = full[yhat];

    const std::vector<int> order = descending_order(attr_scores);
    const size_t len = real_ids.size();

    auto prob_kept = [&](size_t k, bool keep) {
        const std::vector<double> p = predict(keep_top_k(real_ids, order, k, mask_id, keep));
        return p[yhat];
    };

    FaithfulnessScores out;
    out.alpha_grid = alpha_grid;
    out.null_diff = std::max(0.0, p_full - prob_kept(0, true));
    const double suff0 = 1.0 - out.null_diff;
    const double comp1 = std::max(0.0, p_full - prob_kept(len, false));

    for (double alpha : alpha_grid) {
        const size_t k = static_cast<size_t>(
            std::min<double>(static_cast<double>(len),
                             std::ceil(alpha * static_cast<double>(len))));
        const double suff = 1.0 - std::max(0.0, p_full - prob_kept(k, true));
        const double comp = std::max(0.0, p_full - prob_kept(k, false));
        out.suff.push_back(suff);
        out.comp.push_back(comp);

        const double denom = literal_suff_denominator ? (1.0 - suff) : (1.0 - suff0);
        if (denom == 0.0) {
            out.norm_suff.push_back(std::nullopt);
        } else {
            out.norm_suff.push_back(clip01((suff - suff0) / denom));
        }
        if (comp1 == 0.0) {
            out.norm_comp.push_back(std::nullopt);
        } else {
            out.norm_comp.push_back(clip01(comp / comp1));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// cross-approach correlation
// ---------------------------------------------------------------------------

CorrelationRecord correlate_across_approaches(const std::vector<DumpRecord>& dumps,
                                              const std::string& technique, int layer,
                                              const std::string& approach_a,
                                              const std::string& approach_b,
                                              uint64_t sampling_seed) {
    // approach -> example -> sorted (seed, scores)
    using Versions = std::map<uint64_t, const std::vector<double>*>;
    std::map<std::string, std::map<int, Versions>> table;
    bool technique_seen = false;
    for (const DumpRecord& r : dumps) {
        if (r.technique != technique) continue;
        technique_seen = true;
        if (r.layer != layer) continue;
        table[r.approach][r.example][r.seed] = &r.scores;
    }
    if (!technique_seen) {
        throw std::invalid_argument("correlate: technique '" + technique + "' absent from dump");
    }
    auto ta = table.find(approach_a);
    auto tb = table.find(approach_b);
    if (ta == table.end() || tb == table.end()) {
        throw std::invalid_argument("correlate: approach absent from dump for technique '" +
                                    technique + "' layer " + std::to_string(layer));
    }

    const bool same = approach_a == approach_b;
    Rng rng(sampling_seed);
    CorrelationRecord rec;
    rec.technique = technique;
    rec.layer = layer;
    rec.approach_a = approach_a;
    rec.approach_b = approach_b;

    for (const auto& [example, versions_a] : ta->second) {
        auto itb = tb->second.find(example);
        if (itb == tb->second.end()) continue;
        const Versions& versions_b = itb->second;
        if (versions_a.empty() || versions_b.empty()) continue;
        if (same && versions_a.size() < 2) {
            throw std::invalid_argument("correlate: same-approach sampling needs >= 2 seeds");
        }

        std::vector<uint64_t> seeds_a, seeds_b;
        for (const auto& [s, _] : versions_a) seeds_a.push_back(s);
        for (const auto& [s, _] : versions_b) seeds_b.push_back(s);

        const uint64_t sa = seeds_a[rng.below(seeds_a.size())];
        uint64_t sb = seeds_b[rng.below(seeds_b.size())];
        while (same && sb == sa) sb = seeds_b[rng.below(seeds_b.size())];

        auto tau = kendall_tau_b(*versions_a.at(sa), *versions_b.at(sb));
        if (tau.has_value()) {
            rec.taus.push_back(*tau);
        } else {
            ++rec.skipped;
        }
    }
    if (!rec.taus.empty()) {
        double s = 0.0;
        for (double t : rec.taus) s += t;
        rec.mean_tau = s / static_cast<double>(rec.taus.size());
    }
    return rec;
}

}  // namespace erlab
