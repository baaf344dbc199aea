#ifndef SPINSUM_NNET_HPP
#define SPINSUM_NNET_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "spinsum/autodiff.hpp"
#include "spinsum/segmenter.hpp"

namespace spinsum {

// Scorer hyperparameters. The token stream is embedded, concatenated with a
// bidirectional-GRU encoding of each token's spine, projected to model_dim,
// and run through sliding-window self-attention layers; each unit's score is
// read at its CLS marker.
struct ModelConfig {
    std::size_t token_emb_dim = 16;
    std::size_t spine_label_emb_dim = 8;
    std::size_t spine_gru_hidden = 8;
    std::size_t model_dim = 24;
    std::size_t ff_dim = 48;
    std::size_t num_layers = 1;
    std::size_t num_heads = 2;
    std::size_t attention_window = 8;  // token radius
    std::size_t max_position = 4096;
    bool use_positions = true;
    std::uint64_t seed = 13;

    static ModelConfig desk_profile();
    static ModelConfig paper_profile();  // 768/512 dims per the reference setup
    void validate() const;
    std::size_t concat_dim() const { return token_emb_dim + 2 * spine_gru_hidden; }
};

// Reserved ids are shared by the token and spine-label vocabularies.
class Vocab {
public:
    static constexpr int kCls = 0;
    static constexpr int kSep = 1;
    static constexpr int kUnk = 2;

    Vocab();
    int add(const std::string& entry);          // idempotent
    int lookup(const std::string& entry) const;  // kUnk when absent
    std::size_t size() const { return entries_.size(); }
    const std::vector<std::string>& entries() const { return entries_; }

private:
    std::vector<std::string> entries_;
    std::unordered_map<std::string, int> index_;
};

Vocab build_token_vocab(const std::vector<Chapter>& chapters, const std::string& split);
Vocab build_label_vocab(const std::vector<Chapter>& chapters, const std::string& split);

// Named parameter tensors. Iteration order (std::map) fixes initialization
// and serialization order.
class ParamStore {
public:
    static ParamStore initialize(const ModelConfig& config, std::size_t token_vocab,
                                 std::size_t label_vocab);

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    const std::map<std::string, Tensor>& tensors() const { return tensors_; }
    std::map<std::string, Tensor>& tensors() { return tensors_; }

    std::string serialize() const;  // raw little-endian doubles
    static ParamStore deserialize(const std::string& bytes);
    std::uint64_t content_hash() const;

private:
    std::map<std::string, Tensor> tensors_;
};

// Model checkpoint: config + vocabularies + parameters + caller metadata.
// Round-trips bit-exactly.
struct Checkpoint {
    ModelConfig config;
    Vocab token_vocab;
    Vocab label_vocab;
    ParamStore params;
    std::string meta_json;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

// Chapter rendered as one marker-delimited id sequence: CLS before and SEP
// after each unit, one spine label-id list per position (markers get the
// empty-spine sentinel), segment ids alternating by unit.
struct UnitSequenceInput {
    std::vector<int> token_ids;
    std::vector<std::vector<int>> spine_ids;
    std::vector<int> segment_ids;
    std::vector<std::size_t> cls_positions;

    std::size_t length() const { return token_ids.size(); }
    std::size_t num_units() const { return cls_positions.size(); }
};

UnitSequenceInput build_input(const Chapter& chapter, const Vocab& tokens, const Vocab& labels,
                              const ModelConfig& config);

// Parameter tensors registered as graph leaves, so gradients can be read
// back after backward().
struct ModelVars {
    std::map<std::string, Var> vars;
    Var at(const std::string& name) const;
};

ModelVars register_params(Graph& graph, const ParamStore& params);
std::map<std::string, Tensor> collect_grads(const Graph& graph, const ModelVars& vars);

// Forward pass. `scores` is [units x 1] in (0,1); `logits` the pre-sigmoid
// column. hidden[0] is the projected input, hidden[l] the output of layer l.
struct ForwardTrace {
    Var logits;
    Var scores;
    std::vector<Var> hidden;
};

ForwardTrace scorer_forward(Graph& graph, const ModelVars& vars, const UnitSequenceInput& input,
                            const ModelConfig& config);

// Final forward+backward states of the spine bi-GRU, one row per spine.
Var encode_spines(Graph& graph, const ModelVars& vars,
                  const std::vector<std::vector<int>>& spines, const ModelConfig& config);

// Single-spine convenience wrapper over encode_spines.
std::vector<double> encode_spine(const std::vector<int>& spine_label_ids,
                                 const ParamStore& params, const ModelConfig& config);

// Inference scores for one chapter.
std::vector<double> score_chapter(const Chapter& chapter, const Checkpoint& checkpoint);

// ---- losses -------------------------------------------------------------

struct BceResult {
    double loss = 0.0;
    std::vector<double> grad;  // d loss / d score
    std::size_t clamped = 0;
};
BceResult bce_loss(const std::vector<double>& scores, const std::vector<double>& labels,
                   double eps = 1e-12);

struct MarginRankResult {
    double loss = 0.0;
    std::vector<double> grad_pos;
    std::vector<double> grad_neg;
    std::size_t active_pairs = 0;
};
MarginRankResult margin_ranking_loss(const std::vector<double>& pos_scores,
                                     const std::vector<double>& neg_scores, double margin);

// All pos x neg index pairs, uniformly subsampled to `cap` when larger.
std::vector<std::pair<std::size_t, std::size_t>> build_pairs(const std::vector<bool>& labels,
                                                             std::size_t cap,
                                                             std::mt19937_64& rng);

// ---- optimization and verification ---------------------------------------

class AdamOptimizer {
public:
    AdamOptimizer(ParamStore& params, double lr, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);
    void zero_grad();
    void accumulate(const std::map<std::string, Tensor>& grads, double weight);
    void step();

private:
    ParamStore& params_;
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::map<std::string, Tensor> accum_, m_, v_;
};

// Central finite differences against analytic gradients over sampled
// coordinates of every tensor. `eval` returns the loss; when `grads` is
// non-null it must also fill analytic gradients.
struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
};
GradCheckResult grad_check(
    ParamStore& params,
    const std::function<double(const ParamStore&, std::map<std::string, Tensor>*)>& eval,
    double epsilon = 1e-5, std::size_t samples_per_tensor = 6, std::uint64_t seed = 1);

// Pooled ranking AUC with tie handling via average ranks.
double ranking_auc(const std::vector<double>& scores, const std::vector<bool>& labels);

}  // namespace spinsum

#endif
