#ifndef SPINSUM_ALIGNER_HPP
#define SPINSUM_ALIGNER_HPP

#include <cstddef>
#include <optional>
#include <vector>

#include "spinsum/metrics.hpp"
#include "spinsum/segmenter.hpp"

namespace spinsum {

struct AlignmentConfig {
    double w1 = 1.0 / 3.0;  // ROUGE-1 F weight
    double w2 = 1.0 / 3.0;  // ROUGE-2 F weight
    double wl = 1.0 / 3.0;  // ROUGE-L F weight
    std::optional<std::size_t> max_units;
    double min_gain = 1e-6;

    void validate() const;
};

// w1*R1_F + w2*R2_F + wL*RL_F. Errors on an empty reference.
double weighted_rouge(const TokenList& candidate, const TokenList& reference,
                      const AlignmentConfig& config);

struct OracleLabels {
    std::vector<bool> labels;        // one per unit
    double oracle_score = 0.0;       // weighted ROUGE of the selected set
    std::vector<double> round_scores;  // score after each greedy round; non-decreasing
};

// Greedy oracle alignment: repeatedly add the unit that most improves the
// weighted ROUGE of the selection (rendered in positional order) against the
// reference summary. Stops when the best marginal gain drops below min_gain
// or max_units is reached. Ties break toward the lowest unit id.
OracleLabels greedy_align(const Chapter& chapter, const AlignmentConfig& config);

}  // namespace spinsum

#endif
