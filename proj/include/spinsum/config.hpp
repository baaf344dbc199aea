#ifndef SPINSUM_CONFIG_HPP
#define SPINSUM_CONFIG_HPP

#include <optional>
#include <string>

#include "spinsum/aligner.hpp"
#include "spinsum/extractor.hpp"
#include "spinsum/nnet.hpp"
#include "spinsum/segmenter.hpp"

namespace spinsum {

struct PipelinePaths {
    std::string corpus;      // required input
    std::string parses;      // required input (sidecar, one parse per line)
    std::string head_table;  // required input
    std::string embeddings;  // optional; enables WMD and the embedding F-score
    std::string work_dir = "out";

    // Derived artifacts; empty fields resolve against work_dir.
    std::string segmented;
    std::string labels;
    std::string checkpoint;
    std::string checkpoint_phase1;
    std::string train_log;
    std::string extracts_model;
    std::string extracts_oracle;
    std::string report;
    std::string report_table;

    void resolve();
};

// The "auto" token budget: measure the mean oracle extract length on the
// training split at extraction time.
struct SelectionConfig {
    std::optional<std::size_t> k;
    std::optional<std::size_t> token_budget;
    bool auto_budget = true;
};

struct ExperimentConfig {
    PipelinePaths paths;
    SegmenterConfig segmenter;
    ModelConfig model;
    AlignmentConfig alignment;
    TrainSchedule schedule;
    SelectionConfig selection;
    MetricsOptions metrics;
    std::string eval_split = "test";
    std::string profile = "desk";
    std::uint64_t seed = 13;
    int threads = 1;

    // Canonical JSON snapshot of everything that defines the experiment
    // (threads excluded: worker count must not change results).
    std::string canonical_json() const;
    std::string fingerprint() const;

    static ExperimentConfig load(const std::string& path);
    static ExperimentConfig from_json_string(const std::string& text);
};

}  // namespace spinsum

#endif
