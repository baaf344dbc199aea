#ifndef SPINSUM_EXTRACTOR_HPP
#define SPINSUM_EXTRACTOR_HPP

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spinsum/metrics.hpp"
#include "spinsum/nnet.hpp"
#include "spinsum/segmenter.hpp"

namespace spinsum {

// Two-phase schedule: cross-entropy until convergence, then margin ranking
// from the best phase-1 checkpoint.
struct PhaseSchedule {
    std::size_t max_epochs = 30;
    std::size_t patience = 5;
    double learning_rate = 3e-3;
};

struct TrainSchedule {
    PhaseSchedule phase1{30, 5, 3e-3};
    PhaseSchedule phase2{15, 4, 1e-3};
    double margin = 1.0;
    bool margin_on_logits = true;  // hinge on pre-sigmoid logits
    std::size_t pair_cap = 10000;  // pairs sampled per chapter above this
    std::size_t batch_size = 8;

    void validate() const;
};

struct EpochRecord {
    int phase = 0;   // 1 = cross-entropy, 2 = margin ranking
    int epoch = 0;   // 0 is the pre-update evaluation of the phase
    double train_loss = 0.0;
    double dev_loss = 0.0;    // dev BCE
    double dev_auc = 0.0;     // pooled ranking AUC over dev units
    double dev_margin = 0.0;  // mean(s_pos) - mean(s_neg) on dev
    bool is_best = false;
};

struct TrainResult {
    Checkpoint final_checkpoint;   // phase-2 best
    Checkpoint phase1_checkpoint;  // phase-1 best (CE-only model)
    std::vector<EpochRecord> log;
    std::uint64_t phase1_best_hash = 0;
    std::uint64_t phase2_start_hash = 0;  // equals phase1_best_hash by contract
    std::size_t chapters_without_positives = 0;
};

// Trains on chapters with split == "train", early-stopping on split == "dev".
// `labels[i]` aligns with `chapters[i]`. Progress lines go to `progress`
// when non-null.
TrainResult train(const std::vector<Chapter>& chapters,
                  const std::vector<std::vector<bool>>& labels, const ModelConfig& config,
                  const TrainSchedule& schedule, std::ostream* progress = nullptr);

// Exactly one of k / token_budget is set.
struct SelectionPolicy {
    std::optional<std::size_t> k;
    std::optional<std::size_t> token_budget;
    void validate() const;
};

struct Extract {
    std::string chapter_id;
    std::vector<std::size_t> unit_ids;  // strictly increasing
    std::string text;                   // unit texts joined with "<q>"
    bool k_clamped = false;             // k exceeded the unit count
};

// Top-k by score (ties -> lower unit id) or greedy-by-score within a token
// budget, then re-ordered to original positions and rendered.
Extract select_and_order(const Chapter& chapter, const std::vector<double>& scores,
                         const SelectionPolicy& policy);

struct MetricsOptions {
    bool lowercase = true;
};

// One row of the evaluation report. ROUGE scores are percentages as
// conventionally reported; WMD and the embedding F-score stay in their
// natural units and are absent without an embedding table.
struct ReportRow {
    std::string system;
    double r1 = 0.0;
    double r2 = 0.0;
    double rl = 0.0;
    std::optional<double> wmd;
    std::optional<double> emb_f;
    std::size_t chapters = 0;
    std::size_t skipped = 0;  // extracts without a usable reference
};

ReportRow evaluate_system(const std::string& system, const std::vector<Extract>& extracts,
                          const std::map<std::string, const Chapter*>& chapters_by_id,
                          const MetricsOptions& options, const EmbeddingTable* embeddings,
                          int threads = 1);

// Mean token count of the positive units per chapter, rounded; the default
// token budget when the policy asks for one derived from the oracle.
std::size_t mean_oracle_extract_tokens(const std::vector<Chapter>& chapters,
                                       const std::vector<std::vector<bool>>& labels,
                                       const std::string& split);

}  // namespace spinsum

#endif
