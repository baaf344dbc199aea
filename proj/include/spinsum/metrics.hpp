#ifndef SPINSUM_METRICS_HPP
#define SPINSUM_METRICS_HPP

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

namespace spinsum {

struct PRF {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// f1 = 0 when p + r = 0, else the harmonic mean.
PRF make_prf(double precision, double recall);

// Counters for non-fatal metric conditions.
struct MetricWarnings {
    std::size_t short_reference = 0;  // reference shorter than the n-gram order
};

using TokenList = std::vector<std::string>;

// Clipped n-gram overlap; precision over candidate n-grams, recall over
// reference n-grams. A reference shorter than n yields zeros and bumps the
// warning counter.
PRF rouge_n(const TokenList& candidate, const TokenList& reference, std::size_t n,
            MetricWarnings* warnings = nullptr);

// Longest-common-subsequence F-measure (Lin 2004, beta = 1). Empty inputs
// yield zeros.
PRF rouge_l(const TokenList& candidate, const TokenList& reference);

enum class OovPolicy { kSkip, kError };

class EmbeddingTable {
public:
    EmbeddingTable() = default;
    EmbeddingTable(std::size_t dimension, OovPolicy policy)
        : dimension_(dimension), policy_(policy) {}

    // One token per line: `token v1 v2 ... vd`. All rows must agree on d.
    static EmbeddingTable load(const std::string& path, OovPolicy policy = OovPolicy::kSkip);

    void insert(const std::string& token, std::vector<double> vec);
    const std::vector<double>* find(const std::string& token) const;
    std::size_t dimension() const { return dimension_; }
    std::size_t size() const { return vectors_.size(); }
    OovPolicy policy() const { return policy_; }

private:
    std::size_t dimension_ = 0;
    OovPolicy policy_ = OovPolicy::kSkip;
    std::unordered_map<std::string, std::vector<double>> vectors_;
};

// Relaxed Word Mover's Distance: the max of the two one-sided lower bounds,
// each moving every token's mass to its nearest counterpart in the other
// document (Euclidean ground distance over normalized bag-of-words mass).
// Errors when a document has no in-vocabulary token.
double relaxed_wmd(const TokenList& a, const TokenList& b, const EmbeddingTable& emb);

// Greedy-match embedding F-score: recall is the mean over reference tokens
// of the max cosine similarity to any candidate token; precision symmetric.
PRF greedy_match_fscore(const TokenList& candidate, const TokenList& reference,
                        const EmbeddingTable& emb);

}  // namespace spinsum

#endif
