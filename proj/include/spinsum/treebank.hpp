#ifndef SPINSUM_TREEBANK_HPP
#define SPINSUM_TREEBANK_HPP

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace spinsum {

// One node of a bracketed constituency parse. Leaves carry the surface
// token and a POS label; internal nodes carry a constituent label and
// children whose spans are contiguous and ordered.
struct ParseNode {
    std::string label;
    std::string token;                     // leaves only
    std::vector<ParseNode> children;
    std::size_t span_begin = 0;            // half-open token interval
    std::size_t span_end = 0;

    bool is_leaf() const { return children.empty(); }
    std::size_t span_length() const { return span_end - span_begin; }
};

// Reads one bracketed parse. Errors name the character offset.
ParseNode parse_ptb(const std::string& text);
std::string serialize_tree(const ParseNode& node);

// Leaf tokens / leaf POS labels in order.
std::vector<std::string> tree_tokens(const ParseNode& root);
std::vector<std::string> tree_pos_tags(const ParseNode& root);
std::size_t tree_node_count(const ParseNode& root);

// Head-percolation rules. A rule for a parent label is an ordered list of
// search steps; the first step that matches any child picks the head.
//   priority_scan:  for each label in the list, scan children in the given
//                   direction; first hit wins (Collins' standard rules).
//   set_scan:       scan children in the given direction, picking the first
//                   child whose label is in the set ("leftdis"/"rightdis",
//                   used by the NP rule).
// A step with an empty label list selects the first child in scan order.
struct HeadRuleStep {
    bool right_to_left = false;
    bool set_scan = false;
    std::vector<std::string> labels;
};

class HeadTable {
public:
    // File format, one step per line:  PARENT left|right|leftdis|rightdis [LBL...]
    // Repeated PARENT lines form a multi-step rule, tried in order.
    // '#' starts a comment. Unlisted parents fall back to the leftmost child.
    static HeadTable load(const std::string& path);
    static HeadTable from_text(const std::string& text);

    void add_step(const std::string& parent, HeadRuleStep step);
    bool has_rule(const std::string& parent) const;

    // Index of the head child of an internal node. Total: the fallback
    // rule guarantees a result for any nonempty child list.
    std::size_t find_head(const ParseNode& node) const;

private:
    std::size_t scan(const HeadRuleStep& step, const ParseNode& node) const;
    std::map<std::string, std::vector<HeadRuleStep>> rules_;
};

// The chain of labels covering exactly the tree nodes whose lexical head is
// this token, from its POS tag upward.
struct Spine {
    std::vector<std::string> labels;
    std::size_t token_index = 0;
};

// One spine per token, in token order. Spines partition the tree's nodes.
std::vector<Spine> derive_spines(const ParseNode& root, const HeadTable& table);

}  // namespace spinsum

#endif
