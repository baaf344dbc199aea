#include "spinsum/segmenter.hpp"

#include <algorithm>

#include "spinsum/error.hpp"

namespace spinsum {

namespace {

// Highest clause-labeled descendants below the root that are long enough.
// Once a node qualifies we do not descend into it.
void collect_clause_spans(const ParseNode& node, const SegmenterConfig& config,
                          std::vector<std::pair<std::size_t, std::size_t>>& out) {
    for (const ParseNode& child : node.children) {
        if (!child.is_leaf() && config.clause_labels.count(child.label) &&
            child.span_length() >= config.min_tokens) {
            out.emplace_back(child.span_begin, child.span_end);
        } else {
            collect_clause_spans(child, config, out);
        }
    }
}

}  // namespace

std::vector<Unit> segment_sentence(const ParseNode& tree, const HeadTable& table,
                                   const SegmenterConfig& config) {
    if (tree.span_length() == 0) throw DataError("segment_sentence: empty tree");
    if (config.min_tokens < 1) throw ConfigError("segmenter min_tokens must be >= 1");

    const std::size_t n = tree.span_length();
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    collect_clause_spans(tree, config, spans);
    std::sort(spans.begin(), spans.end());

    if (spans.empty()) spans.emplace_back(0, n);

    // Attach gap tokens: a gap before the first span extends that span
    // leftward; every other gap extends the preceding span rightward.
    spans.front().first = 0;
    for (std::size_t i = 0; i + 1 < spans.size(); ++i) spans[i].second = spans[i + 1].first;
    spans.back().second = n;

    std::vector<std::string> tokens = tree_tokens(tree);
    std::vector<Spine> spines = derive_spines(tree, table);

    std::vector<Unit> units;
    units.reserve(spans.size());
    for (const auto& [begin, end] : spans) {
        Unit unit;
        unit.span_begin = begin;
        unit.span_end = end;
        unit.tokens.assign(tokens.begin() + begin, tokens.begin() + end);
        unit.spines.assign(spines.begin() + begin, spines.begin() + end);
        units.push_back(std::move(unit));
    }
    return units;
}

Chapter truncate_chapter(Chapter chapter, std::size_t limit) {
    if (limit < 1) throw ConfigError("truncate limit must be >= 1");
    std::size_t total = 0;
    std::size_t keep = 0;
    for (const Unit& unit : chapter.units) {
        if (total + unit.size() > limit) break;
        total += unit.size();
        ++keep;
    }
    if (keep == 0 && !chapter.units.empty()) {
        throw DataError("chapter " + chapter.chapter_id + ": first unit (" +
                        std::to_string(chapter.units.front().size()) +
                        " tokens) exceeds the truncation limit of " + std::to_string(limit));
    }
    chapter.units.resize(keep);
    return chapter;
}

Chapter segment_chapter(const std::string& chapter_id, const std::string& split,
                        const std::vector<ParseNode>& sentence_trees,
                        const std::vector<std::string>& reference_summary,
                        const HeadTable& table, const SegmenterConfig& config) {
    Chapter chapter;
    chapter.chapter_id = chapter_id;
    chapter.split = split;
    chapter.reference_summary = reference_summary;

    std::size_t offset = 0;
    for (std::size_t s = 0; s < sentence_trees.size(); ++s) {
        std::vector<Unit> units = segment_sentence(sentence_trees[s], table, config);
        for (Unit& unit : units) {
            unit.unit_id = chapter.units.size();
            unit.sentence_id = s;
            unit.span_begin += offset;
            unit.span_end += offset;
            chapter.units.push_back(std::move(unit));
        }
        offset += sentence_trees[s].span_length();
    }
    return truncate_chapter(std::move(chapter), config.truncate_limit);
}

}  // namespace spinsum
