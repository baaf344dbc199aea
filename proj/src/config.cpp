#include "spinsum/config.hpp"

#include <json.hpp>

#include "spinsum/error.hpp"
#include "spinsum/json_io.hpp"
#include "spinsum/util.hpp"

namespace spinsum {

using nlohmann::json;

namespace {

// json exceptions become ConfigError with the field path prefixed.
template <typename Fn>
auto at_field(const char* field, Fn&& fn) {
    try {
        return fn();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field '") + field + "': " + e.what());
    }
}

}  // namespace

void PipelinePaths::resolve() {
    auto fill = [this](std::string& slot, const char* name) {
        if (slot.empty()) slot = work_dir + "/" + name;
    };
    fill(segmented, "segmented.jsonl");
    fill(labels, "labels.jsonl");
    fill(checkpoint, "checkpoint.bin");
    fill(checkpoint_phase1, "checkpoint.phase1.bin");
    fill(train_log, "trainlog.jsonl");
    fill(extracts_model, "extracts.model.jsonl");
    fill(extracts_oracle, "extracts.oracle.jsonl");
    fill(report, "report.jsonl");
    fill(report_table, "report.txt");
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    return from_json_string(util::read_file(path));
}

ExperimentConfig ExperimentConfig::from_json_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }

    ExperimentConfig cfg;
    cfg.profile = j.value("profile", "desk");
    if (cfg.profile == "desk") {
        cfg.model = ModelConfig::desk_profile();
    } else if (cfg.profile == "paper") {
        cfg.model = ModelConfig::paper_profile();
    } else {
        throw ConfigError("config field 'profile': expected 'desk' or 'paper', got '" +
                          cfg.profile + "'");
    }

    at_field("seed", [&] { cfg.seed = j.value("seed", cfg.seed); });
    at_field("threads", [&] { cfg.threads = j.value("threads", cfg.threads); });
    at_field("eval_split", [&] { cfg.eval_split = j.value("eval_split", cfg.eval_split); });

    if (!j.contains("paths")) throw ConfigError("config field 'paths': missing");
    at_field("paths", [&] {
        const json& p = j.at("paths");
        cfg.paths.corpus = p.value("corpus", "");
        cfg.paths.parses = p.value("parses", "");
        cfg.paths.head_table = p.value("head_table", "");
        cfg.paths.embeddings = p.value("embeddings", "");
        cfg.paths.work_dir = p.value("work_dir", cfg.paths.work_dir);
        cfg.paths.segmented = p.value("segmented", "");
        cfg.paths.labels = p.value("labels", "");
        cfg.paths.checkpoint = p.value("checkpoint", "");
        cfg.paths.checkpoint_phase1 = p.value("checkpoint_phase1", "");
        cfg.paths.train_log = p.value("train_log", "");
        cfg.paths.extracts_model = p.value("extracts_model", "");
        cfg.paths.extracts_oracle = p.value("extracts_oracle", "");
        cfg.paths.report = p.value("report", "");
        cfg.paths.report_table = p.value("report_table", "");
    });
    if (cfg.paths.corpus.empty()) throw ConfigError("config field 'paths.corpus': missing");
    if (cfg.paths.parses.empty()) throw ConfigError("config field 'paths.parses': missing");
    if (cfg.paths.head_table.empty()) {
        throw ConfigError("config field 'paths.head_table': missing");
    }
    cfg.paths.resolve();

    if (j.contains("segmenter")) {
        at_field("segmenter", [&] {
            const json& s = j.at("segmenter");
            if (s.contains("clause_labels")) {
                cfg.segmenter.clause_labels.clear();
                for (const auto& label : s.at("clause_labels")) {
                    cfg.segmenter.clause_labels.insert(label.get<std::string>());
                }
            }
            cfg.segmenter.min_tokens = s.value("min_tokens", cfg.segmenter.min_tokens);
            cfg.segmenter.truncate_limit =
                s.value("truncate_limit", cfg.segmenter.truncate_limit);
        });
    }

    if (j.contains("model")) {
        at_field("model", [&] { cfg.model = model_config_from_json_obj(j.at("model"), cfg.model); });
    }
    cfg.model.seed = j.value("seed", cfg.model.seed);
    at_field("model", [&] { cfg.model.validate(); });

    if (j.contains("alignment")) {
        at_field("alignment", [&] {
            const json& a = j.at("alignment");
            if (a.contains("weights")) {
                const json& w = a.at("weights");
                if (!w.is_array() || w.size() != 3) {
                    throw ConfigError("config field 'alignment.weights': expected [w1, w2, wL]");
                }
                cfg.alignment.w1 = w[0].get<double>();
                cfg.alignment.w2 = w[1].get<double>();
                cfg.alignment.wl = w[2].get<double>();
            }
            cfg.alignment.min_gain = a.value("min_gain", cfg.alignment.min_gain);
            if (a.contains("max_units") && !a.at("max_units").is_null()) {
                cfg.alignment.max_units = a.at("max_units").get<std::size_t>();
            }
        });
    }
    at_field("alignment", [&] { cfg.alignment.validate(); });

    if (j.contains("schedule")) {
        at_field("schedule", [&] {
            const json& s = j.at("schedule");
            auto phase = [](const json& p, PhaseSchedule base) {
                base.max_epochs = p.value("max_epochs", base.max_epochs);
                base.patience = p.value("patience", base.patience);
                base.learning_rate = p.value("learning_rate", base.learning_rate);
                return base;
            };
            if (s.contains("phase1")) cfg.schedule.phase1 = phase(s.at("phase1"), cfg.schedule.phase1);
            if (s.contains("phase2")) cfg.schedule.phase2 = phase(s.at("phase2"), cfg.schedule.phase2);
            cfg.schedule.margin = s.value("margin", cfg.schedule.margin);
            cfg.schedule.margin_on_logits =
                s.value("margin_on_logits", cfg.schedule.margin_on_logits);
            cfg.schedule.pair_cap = s.value("pair_cap", cfg.schedule.pair_cap);
            cfg.schedule.batch_size = s.value("batch_size", cfg.schedule.batch_size);
        });
    }
    at_field("schedule", [&] { cfg.schedule.validate(); });

    if (j.contains("selection")) {
        at_field("selection", [&] {
            const json& s = j.at("selection");
            cfg.selection.auto_budget = false;
            if (s.contains("k") && !s.at("k").is_null()) {
                cfg.selection.k = s.at("k").get<std::size_t>();
            }
            if (s.contains("token_budget") && !s.at("token_budget").is_null()) {
                if (s.at("token_budget").is_string()) {
                    if (s.at("token_budget").get<std::string>() != "auto") {
                        throw ConfigError(
                            "config field 'selection.token_budget': expected a count or "
                            "\"auto\"");
                    }
                    cfg.selection.auto_budget = true;
                } else {
                    cfg.selection.token_budget = s.at("token_budget").get<std::size_t>();
                }
            }
            if (cfg.selection.k && (cfg.selection.token_budget || cfg.selection.auto_budget)) {
                throw ConfigError("config field 'selection': set only one of k / token_budget");
            }
            if (!cfg.selection.k && !cfg.selection.token_budget && !cfg.selection.auto_budget) {
                throw ConfigError("config field 'selection': set one of k / token_budget");
            }
        });
    }

    if (j.contains("metrics")) {
        at_field("metrics", [&] {
            cfg.metrics.lowercase = j.at("metrics").value("lowercase", cfg.metrics.lowercase);
        });
    }
    return cfg;
}

std::string ExperimentConfig::canonical_json() const {
    json j;
    j["profile"] = profile;
    j["seed"] = seed;
    j["eval_split"] = eval_split;
    j["paths"] = {{"corpus", paths.corpus},
                  {"parses", paths.parses},
                  {"head_table", paths.head_table},
                  {"embeddings", paths.embeddings},
                  {"work_dir", paths.work_dir},
                  {"segmented", paths.segmented},
                  {"labels", paths.labels},
                  {"checkpoint", paths.checkpoint},
                  {"checkpoint_phase1", paths.checkpoint_phase1},
                  {"train_log", paths.train_log},
                  {"extracts_model", paths.extracts_model},
                  {"extracts_oracle", paths.extracts_oracle},
                  {"report", paths.report},
                  {"report_table", paths.report_table}};
    j["segmenter"] = {{"clause_labels", segmenter.clause_labels},
                      {"min_tokens", segmenter.min_tokens},
                      {"truncate_limit", segmenter.truncate_limit}};
    j["model"] = model_config_to_json_obj(model);
    j["alignment"] = {{"weights", {alignment.w1, alignment.w2, alignment.wl}},
                      {"min_gain", alignment.min_gain}};
    if (alignment.max_units) j["alignment"]["max_units"] = *alignment.max_units;
    j["schedule"] = {{"phase1",
                      {{"max_epochs", schedule.phase1.max_epochs},
                       {"patience", schedule.phase1.patience},
                       {"learning_rate", schedule.phase1.learning_rate}}},
                     {"phase2",
                      {{"max_epochs", schedule.phase2.max_epochs},
                       {"patience", schedule.phase2.patience},
                       {"learning_rate", schedule.phase2.learning_rate}}},
                     {"margin", schedule.margin},
                     {"margin_on_logits", schedule.margin_on_logits},
                     {"pair_cap", schedule.pair_cap},
                     {"batch_size", schedule.batch_size}};
    json sel;
    if (selection.k) sel["k"] = *selection.k;
    if (selection.token_budget) sel["token_budget"] = *selection.token_budget;
    if (selection.auto_budget) sel["token_budget"] = "auto";
    j["selection"] = sel;
    j["metrics"] = {{"lowercase", metrics.lowercase}};
    return j.dump();
}

std::string ExperimentConfig::fingerprint() const {
    return util::hex64(util::fnv1a64(canonical_json()));
}

}  // namespace spinsum
