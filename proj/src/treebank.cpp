#include "spinsum/treebank.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "spinsum/error.hpp"
#include "spinsum/util.hpp"

namespace spinsum {

namespace {

struct PtbParser {
    const std::string& text;
    std::size_t pos = 0;
    std::size_t next_token_index = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw DataError("parse error at offset " + std::to_string(pos) + ": " + what);
    }

    void skip_ws() {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    }

    bool at_end() const { return pos >= text.size(); }

    std::string read_symbol() {
        std::size_t start = pos;
        while (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos])) &&
               text[pos] != '(' && text[pos] != ')') {
            ++pos;
        }
        return text.substr(start, pos - start);
    }

    ParseNode read_node() {
        skip_ws();
        if (at_end() || text[pos] != '(') fail("expected '('");
        ++pos;
        skip_ws();
        ParseNode node;
        node.label = read_symbol();
        if (node.label.empty()) fail("empty node label");
        skip_ws();
        if (at_end()) fail("unexpected end of input");
        if (text[pos] == '(') {
            while (!at_end() && text[pos] == '(') {
                node.children.push_back(read_node());
                skip_ws();
                if (at_end()) fail("unexpected end of input");
            }
            if (text[pos] != ')') fail("expected ')'");
            ++pos;
            node.span_begin = node.children.front().span_begin;
            node.span_end = node.children.back().span_end;
        } else if (text[pos] == ')') {
            fail("node has neither token nor children");
        } else {
            node.token = read_symbol();
            node.span_begin = next_token_index;
            node.span_end = ++next_token_index;
            skip_ws();
            if (at_end() || text[pos] != ')') fail("expected ')' after leaf token");
            ++pos;
        }
        return node;
    }
};

void collect_leaves(const ParseNode& node, std::vector<const ParseNode*>& out) {
    if (node.is_leaf()) {
        out.push_back(&node);
        return;
    }
    for (const ParseNode& child : node.children) collect_leaves(child, out);
}

const std::set<std::string>& punctuation_tags() {
    static const std::set<std::string> tags = {",", ".", ":", "``", "''", "-LRB-", "-RRB-"};
    return tags;
}

}  // namespace

ParseNode parse_ptb(const std::string& text) {
    PtbParser parser{text};
    parser.skip_ws();
    if (parser.at_end()) throw DataError("parse error at offset 0: empty input");
    ParseNode root = parser.read_node();
    parser.skip_ws();
    if (!parser.at_end()) parser.fail("trailing input after tree");
    return root;
}

std::string serialize_tree(const ParseNode& node) {
    if (node.is_leaf()) return "(" + node.label + " " + node.token + ")";
    std::string out = "(" + node.label;
    for (const ParseNode& child : node.children) {
        out += " ";
        out += serialize_tree(child);
    }
    out += ")";
    return out;
}

std::vector<std::string> tree_tokens(const ParseNode& root) {
    std::vector<const ParseNode*> leaves;
    collect_leaves(root, leaves);
    std::vector<std::string> out;
    out.reserve(leaves.size());
    for (const ParseNode* leaf : leaves) out.push_back(leaf->token);
    return out;
}

std::vector<std::string> tree_pos_tags(const ParseNode& root) {
    std::vector<const ParseNode*> leaves;
    collect_leaves(root, leaves);
    std::vector<std::string> out;
    out.reserve(leaves.size());
    for (const ParseNode* leaf : leaves) out.push_back(leaf->label);
    return out;
}

std::size_t tree_node_count(const ParseNode& root) {
    std::size_t count = 1;
    for (const ParseNode& child : root.children) count += tree_node_count(child);
    return count;
}

HeadTable HeadTable::load(const std::string& path) {
    return from_text(util::read_file(path));
}

HeadTable HeadTable::from_text(const std::string& text) {
    HeadTable table;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::vector<std::string> fields = util::split_ws(line);
        if (fields.empty()) continue;
        if (fields.size() < 2) {
            throw DataError("head table line " + std::to_string(line_no) +
                            ": expected 'PARENT direction [labels...]'");
        }
        HeadRuleStep step;
        const std::string& dir = fields[1];
        if (dir == "left") {
            step.right_to_left = false;
            step.set_scan = false;
        } else if (dir == "right") {
            step.right_to_left = true;
            step.set_scan = false;
        } else if (dir == "leftdis") {
            step.right_to_left = false;
            step.set_scan = true;
        } else if (dir == "rightdis") {
            step.right_to_left = true;
            step.set_scan = true;
        } else {
            throw DataError("head table line " + std::to_string(line_no) +
                            ": unknown direction '" + dir + "'");
        }
        step.labels.assign(fields.begin() + 2, fields.end());
        table.add_step(fields[0], std::move(step));
    }
    return table;
}

void HeadTable::add_step(const std::string& parent, HeadRuleStep step) {
    rules_[parent].push_back(std::move(step));
}

bool HeadTable::has_rule(const std::string& parent) const {
    return rules_.count(parent) > 0;
}

std::size_t HeadTable::scan(const HeadRuleStep& step, const ParseNode& node) const {
    const std::size_t n = node.children.size();
    if (step.set_scan || step.labels.empty()) {
        for (std::size_t k = 0; k < n; ++k) {
            std::size_t i = step.right_to_left ? n - 1 - k : k;
            if (step.labels.empty() ||
                std::find(step.labels.begin(), step.labels.end(), node.children[i].label) !=
                    step.labels.end()) {
                return i;
            }
        }
        return n;
    }
    for (const std::string& wanted : step.labels) {
        for (std::size_t k = 0; k < n; ++k) {
            std::size_t i = step.right_to_left ? n - 1 - k : k;
            if (node.children[i].label == wanted) return i;
        }
    }
    return n;
}

std::size_t HeadTable::find_head(const ParseNode& node) const {
    if (node.is_leaf()) throw InternalError("find_head called on a leaf");
    const std::size_t n = node.children.size();
    std::size_t head = n;
    auto it = rules_.find(node.label);
    if (it != rules_.end()) {
        for (const HeadRuleStep& step : it->second) {
            std::size_t i = scan(step, node);
            if (i < n) {
                head = i;
                break;
            }
        }
        // Exhausted rule: first child in the rule's scan direction.
        if (head == n) head = it->second.back().right_to_left ? n - 1 : 0;
    } else {
        head = 0;  // unlisted parent: leftmost child
    }

    // Coordination adjustment: a head directly preceded by a conjunction
    // moves left past the CC to the nearest non-punctuation sibling.
    if (head >= 2 && node.children[head - 1].label == "CC") {
        std::size_t i = head - 1;
        while (i > 0) {
            --i;
            if (!punctuation_tags().count(node.children[i].label)) return i;
        }
    }
    return head;
}

std::vector<Spine> derive_spines(const ParseNode& root, const HeadTable& table) {
    // Percolate head token indices bottom-up, then chain each token's
    // ancestors as long as percolation keeps selecting that token.
    std::vector<Spine> spines(root.span_length());
    for (std::size_t t = 0; t < spines.size(); ++t) spines[t].token_index = t;

    struct Walker {
        const HeadTable& table;
        std::vector<Spine>& spines;

        // Returns the head token index of `node` and appends labels of
        // head-chain nodes to that token's spine on the way up.
        std::size_t walk(const ParseNode& node) {
            if (node.is_leaf()) {
                spines[node.span_begin].labels.push_back(node.label);
                return node.span_begin;
            }
            std::size_t head_child = table.find_head(node);
            std::size_t head_token = 0;
            for (std::size_t i = 0; i < node.children.size(); ++i) {
                std::size_t t = walk(node.children[i]);
                if (i == head_child) head_token = t;
            }
            spines[head_token].labels.push_back(node.label);
            return head_token;
        }
    };

    Walker{table, spines}.walk(root);
    return spines;
}

}  // namespace spinsum
