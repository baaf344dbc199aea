#include "spinsum/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "spinsum/error.hpp"
#include "spinsum/util.hpp"

namespace spinsum {

namespace {

// n-gram multiset keyed by the joined token string.
std::map<std::string, std::size_t> ngram_counts(const TokenList& tokens, std::size_t n) {
    std::map<std::string, std::size_t> counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key = tokens[i];
        for (std::size_t j = 1; j < n; ++j) {
            key += '\x1f';
            key += tokens[i + j];
        }
        ++counts[key];
    }
    return counts;
}

// Normalized bag-of-words over in-vocabulary tokens. Errors with the OOV
// token list when nothing is in vocabulary.
struct BagOfWords {
    std::vector<const std::vector<double>*> vectors;
    std::vector<double> mass;
};

BagOfWords embed_bag(const TokenList& tokens, const EmbeddingTable& emb, const char* side) {
    std::map<std::string, std::size_t> counts;
    std::vector<std::string> oov;
    for (const std::string& token : tokens) {
        if (emb.find(token)) {
            ++counts[token];
        } else {
            oov.push_back(token);
        }
    }
    if (!oov.empty() && emb.policy() == OovPolicy::kError) {
        throw DataError(std::string("out-of-vocabulary tokens in ") + side + ": " +
                        util::join(oov, " "));
    }
    if (counts.empty()) {
        throw DataError(std::string("no in-vocabulary tokens in ") + side + ": " +
                        util::join(oov, " "));
    }
    BagOfWords bag;
    double total = 0.0;
    for (const auto& [token, count] : counts) {
        bag.vectors.push_back(emb.find(token));
        bag.mass.push_back(static_cast<double>(count));
        total += static_cast<double>(count);
    }
    for (double& m : bag.mass) m /= total;
    return bag;
}

double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        sum += d * d;
    }
    return std::sqrt(sum);
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    double denom = std::sqrt(na) * std::sqrt(nb);
    return denom > 0.0 ? dot / denom : 0.0;
}

// One-sided relaxed transport bound: each source point sends its whole mass
// to the nearest target point.
double one_sided_bound(const BagOfWords& from, const BagOfWords& to) {
    double cost = 0.0;
    for (std::size_t i = 0; i < from.vectors.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < to.vectors.size(); ++j) {
            best = std::min(best, euclidean(*from.vectors[i], *to.vectors[j]));
        }
        cost += from.mass[i] * best;
    }
    return cost;
}

}  // namespace

PRF make_prf(double precision, double recall) {
    PRF out;
    out.precision = precision;
    out.recall = recall;
    out.f1 = (precision + recall > 0.0) ? 2.0 * precision * recall / (precision + recall) : 0.0;
    return out;
}

PRF rouge_n(const TokenList& candidate, const TokenList& reference, std::size_t n,
            MetricWarnings* warnings) {
    if (n < 1) throw ConfigError("rouge_n: order must be >= 1");
    if (reference.size() < n) {
        if (warnings) ++warnings->short_reference;
        return PRF{};
    }
    auto cand_counts = ngram_counts(candidate, n);
    auto ref_counts = ngram_counts(reference, n);

    std::size_t overlap = 0;
    for (const auto& [key, count] : ref_counts) {
        auto it = cand_counts.find(key);
        if (it != cand_counts.end()) overlap += std::min(count, it->second);
    }
    std::size_t cand_total = candidate.size() >= n ? candidate.size() - n + 1 : 0;
    std::size_t ref_total = reference.size() - n + 1;
    double precision = cand_total > 0 ? static_cast<double>(overlap) / cand_total : 0.0;
    double recall = static_cast<double>(overlap) / ref_total;
    return make_prf(precision, recall);
}

PRF rouge_l(const TokenList& candidate, const TokenList& reference) {
    if (candidate.empty() || reference.empty()) return PRF{};
    // Two-row LCS dynamic program.
    const std::size_t m = candidate.size();
    const std::size_t n = reference.size();
    std::vector<std::size_t> prev(n + 1, 0), curr(n + 1, 0);
    for (std::size_t i = 1; i <= m; ++i) {
        for (std::size_t j = 1; j <= n; ++j) {
            if (candidate[i - 1] == reference[j - 1]) {
                curr[j] = prev[j - 1] + 1;
            } else {
                curr[j] = std::max(prev[j], curr[j - 1]);
            }
        }
        std::swap(prev, curr);
    }
    double lcs = static_cast<double>(prev[n]);
    return make_prf(lcs / m, lcs / n);
}

EmbeddingTable EmbeddingTable::load(const std::string& path, OovPolicy policy) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open embedding file: " + path);
    EmbeddingTable table(0, policy);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string token;
        ss >> token;
        std::vector<double> vec;
        double v;
        while (ss >> v) vec.push_back(v);
        if (token.empty() || vec.empty()) {
            throw DataError("embedding file line " + std::to_string(line_no) +
                            ": expected 'token v1 v2 ...'");
        }
        if (table.dimension_ == 0) table.dimension_ = vec.size();
        if (vec.size() != table.dimension_) {
            throw DataError("embedding file line " + std::to_string(line_no) + ": dimension " +
                            std::to_string(vec.size()) + " != " +
                            std::to_string(table.dimension_));
        }
        table.vectors_[token] = std::move(vec);
    }
    return table;
}

void EmbeddingTable::insert(const std::string& token, std::vector<double> vec) {
    if (dimension_ == 0) dimension_ = vec.size();
    if (vec.size() != dimension_) {
        throw DataError("embedding for '" + token + "' has dimension " +
                        std::to_string(vec.size()) + ", table has " + std::to_string(dimension_));
    }
    vectors_[token] = std::move(vec);
}

const std::vector<double>* EmbeddingTable::find(const std::string& token) const {
    auto it = vectors_.find(token);
    return it == vectors_.end() ? nullptr : &it->second;
}

double relaxed_wmd(const TokenList& a, const TokenList& b, const EmbeddingTable& emb) {
    BagOfWords bag_a = embed_bag(a, emb, "first document");
    BagOfWords bag_b = embed_bag(b, emb, "second document");
    return std::max(one_sided_bound(bag_a, bag_b), one_sided_bound(bag_b, bag_a));
}

PRF greedy_match_fscore(const TokenList& candidate, const TokenList& reference,
                        const EmbeddingTable& emb) {
    BagOfWords cand = embed_bag(candidate, emb, "candidate");
    BagOfWords ref = embed_bag(reference, emb, "reference");

    auto greedy_side = [](const BagOfWords& from, const BagOfWords& to) {
        double total = 0.0;
        for (std::size_t i = 0; i < from.vectors.size(); ++i) {
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < to.vectors.size(); ++j) {
                best = std::max(best, cosine(*from.vectors[i], *to.vectors[j]));
            }
            total += from.mass[i] * best;
        }
        return total;
    };
    return make_prf(greedy_side(cand, ref), greedy_side(ref, cand));
}

}  // namespace spinsum
