#ifndef SPINSUM_SEGMENTER_HPP
#define SPINSUM_SEGMENTER_HPP

#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include "spinsum/treebank.hpp"

namespace spinsum {

// One sub-sentential extraction candidate: a contiguous token span of one
// sentence, with a spine per token.
struct Unit {
    std::size_t unit_id = 0;      // ordinal within chapter
    std::size_t sentence_id = 0;
    std::size_t span_begin = 0;   // chapter-level token offsets, half-open
    std::size_t span_end = 0;
    std::vector<std::string> tokens;
    std::vector<Spine> spines;    // one per token

    std::size_t size() const { return tokens.size(); }
};

struct Chapter {
    std::string chapter_id;
    std::string split = "train";
    std::vector<Unit> units;
    std::vector<std::string> reference_summary;

    std::size_t token_count() const {
        std::size_t n = 0;
        for (const Unit& u : units) n += u.size();
        return n;
    }
};

struct SegmenterConfig {
    std::set<std::string> clause_labels = {"S", "SBAR", "SINV", "SQ", "SBARQ"};
    std::size_t min_tokens = 5;
    std::size_t truncate_limit = 30000;
};

// Splits one parsed sentence into clause-level units. The maximal
// clause-labeled constituents below the root of length >= min_tokens become
// units; uncovered gap tokens attach to the preceding unit (or the following
// one when there is no predecessor). Concatenating the units reproduces the
// sentence. A sentence with no qualifying constituent is one unit.
std::vector<Unit> segment_sentence(const ParseNode& tree, const HeadTable& table,
                                   const SegmenterConfig& config);

// Drops whole trailing units until the chapter holds at most `limit` tokens.
// Errors when even the first unit exceeds the limit.
Chapter truncate_chapter(Chapter chapter, std::size_t limit = 30000);

// Segments all sentences of a chapter, assigns chapter-level unit ids and
// token spans, and applies truncation.
Chapter segment_chapter(const std::string& chapter_id, const std::string& split,
                        const std::vector<ParseNode>& sentence_trees,
                        const std::vector<std::string>& reference_summary,
                        const HeadTable& table, const SegmenterConfig& config);

}  // namespace spinsum

#endif
