#pragma once

// Deliberately naive reference implementations of the ranking metrics,
// kept mechanically different from the library versions so the two can
// disagree. Quadratic loops and threshold re-scans only; fine for the
// short vectors the comparison suites use.

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <vector>

namespace oracle {

inline std::optional<double> auc(const std::vector<double>& s, const std::vector<int>& m) {
    double credit = 0.0;
    long pairs = 0;
    for (size_t i = 0; i < s.size(); ++i) {
        if (!m[i]) continue;
        for (size_t j = 0; j < s.size(); ++j) {
            if (m[j]) continue;
            ++pairs;
            if (s[i] > s[j]) credit += 1.0;
            else if (s[i] == s[j]) credit += 0.5;
        }
    }
    bool has_pos = false, has_neg = false;
    for (int v : m) (v ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) return std::nullopt;
    return 100.0 * credit / static_cast<double>(pairs);
}

inline std::optional<double> average_precision(const std::vector<double>& s,
                                               const std::vector<int>& m) {
    long pos = 0;
    for (int v : m) pos += v != 0;
    if (pos == 0) return std::nullopt;
    std::set<double, std::greater<double>> thresholds(s.begin(), s.end());
    double ap = 0.0, prev_recall = 0.0;
    for (double t : thresholds) {
        long tp = 0, predicted = 0;
        for (size_t i = 0; i < s.size(); ++i) {
            if (s[i] >= t) {
                ++predicted;
                tp += m[i] != 0;
            }
        }
        const double recall = static_cast<double>(tp) / pos;
        const double precision = static_cast<double>(tp) / predicted;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return 100.0 * ap;
}

inline std::optional<double> recall_at_k(const std::vector<double>& s,
                                         const std::vector<int>& m, int k) {
    long pos = 0;
    for (int v : m) pos += v != 0;
    if (pos == 0) return std::nullopt;
    long hit = 0;
    for (size_t i = 0; i < s.size(); ++i) {
        if (!m[i]) continue;
        long rank = 0;
        for (size_t j = 0; j < s.size(); ++j) {
            if (s[j] > s[i] || (s[j] == s[i] && j < i)) ++rank;
        }
        if (rank < k) ++hit;
    }
    return 100.0 * static_cast<double>(hit) / pos;
}

inline std::optional<double> kendall_tau_b(const std::vector<double>& a,
                                           const std::vector<double>& b) {
    const size_t n = a.size();
    if (n < 2) return std::nullopt;
    long long concordant = 0, discordant = 0, tie_a = 0, tie_b = 0;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            const double da = a[i] - a[j], db = b[i] - b[j];
            if (da == 0.0) ++tie_a;
            if (db == 0.0) ++tie_b;
            if (da == 0.0 || db == 0.0) continue;
            if ((da > 0) == (db > 0)) ++concordant;
            else ++discordant;
        }
    }
    const long long n0 = static_cast<long long>(n) * (n - 1) / 2;
    const double denom =
        std::sqrt(static_cast<double>(n0 - tie_a)) * std::sqrt(static_cast<double>(n0 - tie_b));
    if (denom == 0.0) return std::nullopt;
    return static_cast<double>(concordant - discordant) / denom;
}

inline double f1_macro(const std::vector<int>& pred, const std::vector<int>& gold) {
    double total = 0.0;
    int counted = 0;
    for (int c = 0; c <= 1; ++c) {
        long tp = 0, fp = 0, fn = 0;
        for (size_t i = 0; i < gold.size(); ++i) {
            if (pred[i] == c && gold[i] == c) ++tp;
            if (pred[i] == c && gold[i] != c) ++fp;
            if (pred[i] != c && gold[i] == c) ++fn;
        }
        if (tp + fp + fn == 0) continue;
        const double precision = tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0;
        const double recall = tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0;
        const double f1 =
            precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        total += f1;
        ++counted;
    }
    return 100.0 * total / counted;
}

}  // namespace oracle
