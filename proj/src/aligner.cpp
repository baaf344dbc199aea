#include "spinsum/aligner.hpp"

#include <cmath>

#include "spinsum/error.hpp"

namespace spinsum {

void AlignmentConfig::validate() const {
    if (w1 < 0.0 || w2 < 0.0 || wl < 0.0) {
        throw ConfigError("alignment weights must be nonnegative");
    }
    if (std::abs(w1 + w2 + wl - 1.0) > 1e-9) {
        throw ConfigError("alignment weights must sum to 1");
    }
    if (min_gain <= 0.0) throw ConfigError("alignment min_gain must be positive");
    if (max_units && *max_units < 1) throw ConfigError("alignment max_units must be >= 1");
}

double weighted_rouge(const TokenList& candidate, const TokenList& reference,
                      const AlignmentConfig& config) {
    if (reference.empty()) throw DataError("weighted_rouge: empty reference");
    double score = 0.0;
    if (config.w1 > 0.0) score += config.w1 * rouge_n(candidate, reference, 1).f1;
    if (config.w2 > 0.0) score += config.w2 * rouge_n(candidate, reference, 2).f1;
    if (config.wl > 0.0) score += config.wl * rouge_l(candidate, reference).f1;
    return score;
}

OracleLabels greedy_align(const Chapter& chapter, const AlignmentConfig& config) {
    config.validate();
    if (chapter.units.empty()) {
        throw DataError("greedy_align: chapter " + chapter.chapter_id + " has no units");
    }
    if (chapter.reference_summary.empty()) {
        throw DataError("greedy_align: chapter " + chapter.chapter_id +
                        " has no reference summary");
    }

    const std::size_t n = chapter.units.size();
    OracleLabels result;
    result.labels.assign(n, false);

    // Candidates are always rendered in positional order, matching the
    // re-ordering applied to inference-time extracts.
    auto render = [&](const std::vector<bool>& selected, std::size_t extra) {
        TokenList tokens;
        for (std::size_t i = 0; i < n; ++i) {
            if (selected[i] || i == extra) {
                tokens.insert(tokens.end(), chapter.units[i].tokens.begin(),
                              chapter.units[i].tokens.end());
            }
        }
        return tokens;
    };

    double current = 0.0;
    std::size_t picked = 0;
    while (!config.max_units || picked < *config.max_units) {
        double best_score = -1.0;
        std::size_t best_unit = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (result.labels[i]) continue;
            double score =
                weighted_rouge(render(result.labels, i), chapter.reference_summary, config);
            if (score > best_score) {
                best_score = score;
                best_unit = i;
            }
        }
        if (best_unit == n || best_score - current < config.min_gain) break;
        result.labels[best_unit] = true;
        current = best_score;
        result.round_scores.push_back(current);
        ++picked;
    }
    result.oracle_score = current;
    return result;
}

}  // namespace spinsum
