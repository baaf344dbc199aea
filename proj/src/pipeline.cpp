#include "spinsum/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "spinsum/error.hpp"
#include "spinsum/util.hpp"

namespace spinsum {

using nlohmann::json;

namespace {

// ---- artifact framing ------------------------------------------------------

// Every artifact starts with a meta record holding the artifact name, the
// config fingerprint, and the full config snapshot.
std::string meta_line(const std::string& artifact, const ExperimentConfig& config) {
    json meta;
    meta["artifact"] = artifact;
    meta["fingerprint"] = config.fingerprint();
    meta["config"] = json::parse(config.canonical_json());
    return meta.dump();
}

struct Artifact {
    std::string artifact;
    std::string fingerprint;
    std::vector<json> records;
};

Artifact read_artifact(const std::string& path, const std::string& expected_name,
                       const std::string& expected_fingerprint) {
    if (!std::filesystem::exists(path)) {
        throw DataError("missing upstream artifact: " + path + " (run the '" + expected_name +
                        "' producing stage first)");
    }
    std::vector<std::string> lines = util::read_lines(path);
    if (lines.empty()) throw DataError("artifact " + path + " is empty");

    Artifact out;
    json meta;
    try {
        meta = json::parse(lines[0]);
        out.artifact = meta.at("artifact").get<std::string>();
        out.fingerprint = meta.at("fingerprint").get<std::string>();
    } catch (const json::exception& e) {
        throw DataError("artifact " + path + " has a corrupt meta line: " + e.what());
    }
    if (out.artifact != expected_name) {
        throw DataError("artifact " + path + " is a '" + out.artifact + "' artifact, expected '" +
                        expected_name + "'");
    }
    if (out.fingerprint != expected_fingerprint) {
        throw DataError("artifact " + path + " was produced with config fingerprint " +
                        out.fingerprint + " but the current config is " + expected_fingerprint +
                        "; regenerate the pipeline with one config");
    }
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        try {
            out.records.push_back(json::parse(lines[i]));
        } catch (const json::exception& e) {
            throw DataError("artifact " + path + " line " + std::to_string(i + 1) + ": " +
                            e.what());
        }
    }
    return out;
}

void write_artifact(const std::string& path, const std::string& name,
                    const ExperimentConfig& config, const std::vector<std::string>& lines) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::string blob = meta_line(name, config);
    blob += "\n";
    for (const std::string& line : lines) {
        blob += line;
        blob += "\n";
    }
    util::write_file(path, blob);
}

// ---- corpus ingestion --------------------------------------------------------

struct CorpusRecord {
    std::string chapter_id;
    std::string split;
    std::vector<std::vector<std::string>> sentences;  // tokenized
    std::vector<std::string> reference_summary;
};

std::vector<CorpusRecord> read_corpus(const std::string& path) {
    std::vector<std::string> lines = util::read_lines(path);
    std::vector<CorpusRecord> records;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        json j;
        try {
            j = json::parse(lines[i]);
            CorpusRecord rec;
            rec.chapter_id = j.at("chapter_id").get<std::string>();
            rec.split = j.value("split", "train");
            for (const auto& sentence : j.at("sentences")) {
                rec.sentences.push_back(util::split_ws(sentence.get<std::string>()));
            }
            rec.reference_summary = util::split_ws(j.value("reference_summary", ""));
            records.push_back(std::move(rec));
        } catch (const json::exception& e) {
            throw DataError("corpus " + path + " line " + std::to_string(i + 1) + ": " +
                            e.what());
        }
    }
    if (records.empty()) throw DataError("corpus " + path + " has no chapters");
    return records;
}

json chapter_to_json(const Chapter& chapter) {
    json units = json::array();
    for (const Unit& unit : chapter.units) {
        json spines = json::array();
        for (const Spine& spine : unit.spines) spines.push_back(spine.labels);
        units.push_back({{"unit_id", unit.unit_id},
                         {"sentence_id", unit.sentence_id},
                         {"span", {unit.span_begin, unit.span_end}},
                         {"tokens", util::join(unit.tokens, " ")},
                         {"spines", spines}});
    }
    return json{{"chapter_id", chapter.chapter_id},
                {"split", chapter.split},
                {"reference_summary", util::join(chapter.reference_summary, " ")},
                {"units", units}};
}

Chapter chapter_from_json(const json& j) {
    Chapter chapter;
    chapter.chapter_id = j.at("chapter_id").get<std::string>();
    chapter.split = j.value("split", "train");
    chapter.reference_summary = util::split_ws(j.value("reference_summary", ""));
    for (const auto& ju : j.at("units")) {
        Unit unit;
        unit.unit_id = ju.at("unit_id").get<std::size_t>();
        unit.sentence_id = ju.at("sentence_id").get<std::size_t>();
        unit.span_begin = ju.at("span").at(0).get<std::size_t>();
        unit.span_end = ju.at("span").at(1).get<std::size_t>();
        unit.tokens = util::split_ws(ju.at("tokens").get<std::string>());
        for (const auto& js : ju.at("spines")) {
            Spine spine;
            spine.token_index = unit.spines.size();
            for (const auto& label : js) spine.labels.push_back(label.get<std::string>());
            unit.spines.push_back(std::move(spine));
        }
        chapter.units.push_back(std::move(unit));
    }
    return chapter;
}

struct LabelsFile {
    std::map<std::string, std::vector<bool>> by_chapter;
    std::map<std::string, double> oracle_scores;
};

LabelsFile read_labels(const std::string& path, const std::string& fingerprint) {
    Artifact artifact = read_artifact(path, "labels", fingerprint);
    LabelsFile out;
    for (const json& j : artifact.records) {
        std::vector<bool> labels;
        for (const auto& v : j.at("labels")) labels.push_back(v.get<int>() != 0);
        std::string id = j.at("chapter_id").get<std::string>();
        out.by_chapter[id] = std::move(labels);
        out.oracle_scores[id] = j.at("oracle_score").get<double>();
    }
    return out;
}

std::vector<Extract> read_extracts(const std::string& path, const std::string& fingerprint,
                                   std::string* system_out) {
    Artifact artifact = read_artifact(path, "extracts", fingerprint);
    std::vector<Extract> extracts;
    for (const json& j : artifact.records) {
        Extract e;
        e.chapter_id = j.at("chapter_id").get<std::string>();
        for (const auto& v : j.at("unit_ids")) e.unit_ids.push_back(v.get<std::size_t>());
        e.text = j.at("text").get<std::string>();
        if (system_out) *system_out = j.at("system").get<std::string>();
        extracts.push_back(std::move(e));
    }
    if (extracts.empty()) throw DataError("extracts artifact " + path + " has no records");
    return extracts;
}

std::string format_row(const ReportRow& row) {
    char buf[200];
    auto opt = [](const std::optional<double>& v, const char* fmt) {
        char tmp[32];
        if (!v) return std::string("   N/A");
        std::snprintf(tmp, sizeof(tmp), fmt, *v);
        return std::string(tmp);
    };
    std::snprintf(buf, sizeof(buf), "%-14s %6.2f %6.2f %6.2f %s %s", row.system.c_str(), row.r1,
                  row.r2, row.rl, opt(row.wmd, "%6.3f").c_str(), opt(row.emb_f, "%6.3f").c_str());
    return std::string(buf);
}

}  // namespace

std::vector<Chapter> read_segmented(const std::string& path, const std::string& fingerprint) {
    Artifact artifact = read_artifact(path, "segmented", fingerprint);
    std::vector<Chapter> chapters;
    chapters.reserve(artifact.records.size());
    for (const json& j : artifact.records) {
        try {
            chapters.push_back(chapter_from_json(j));
        } catch (const json::exception& e) {
            throw DataError("segmented artifact " + path + ": " + e.what());
        }
    }
    if (chapters.empty()) throw DataError("segmented artifact " + path + " has no chapters");
    return chapters;
}

void cmd_segment(const ExperimentConfig& config, std::ostream& out) {
    std::vector<CorpusRecord> corpus = read_corpus(config.paths.corpus);
    std::vector<std::string> parse_lines = util::read_lines(config.paths.parses);
    while (!parse_lines.empty() && parse_lines.back().empty()) parse_lines.pop_back();

    std::size_t total_sentences = 0;
    for (const CorpusRecord& rec : corpus) total_sentences += rec.sentences.size();
    if (parse_lines.size() != total_sentences) {
        // Name the first record whose sentences run past the sidecar.
        std::size_t consumed = 0;
        std::string offender = corpus.back().chapter_id;
        for (const CorpusRecord& rec : corpus) {
            if (consumed + rec.sentences.size() > parse_lines.size()) {
                offender = rec.chapter_id;
                break;
            }
            consumed += rec.sentences.size();
        }
        throw DataError("parse sidecar " + config.paths.parses + " has " +
                        std::to_string(parse_lines.size()) + " lines but the corpus has " +
                        std::to_string(total_sentences) + " sentences (first mismatch in chapter " +
                        offender + ", sidecar line " + std::to_string(consumed + 1) + ")");
    }

    HeadTable table = HeadTable::load(config.paths.head_table);

    // Parse and validate each sentence against its sidecar line.
    std::vector<std::vector<ParseNode>> trees(corpus.size());
    std::size_t line = 0;
    for (std::size_t c = 0; c < corpus.size(); ++c) {
        for (std::size_t s = 0; s < corpus[c].sentences.size(); ++s, ++line) {
            ParseNode tree;
            try {
                tree = parse_ptb(parse_lines[line]);
            } catch (const DataError& e) {
                throw DataError("parse sidecar line " + std::to_string(line + 1) + ": " +
                                e.what());
            }
            if (tree_tokens(tree) != corpus[c].sentences[s]) {
                throw DataError("parse sidecar line " + std::to_string(line + 1) +
                                " does not match the tokens of chapter " +
                                corpus[c].chapter_id + " sentence " + std::to_string(s));
            }
            trees[c].push_back(std::move(tree));
        }
    }

    std::vector<Chapter> chapters(corpus.size());
    util::parallel_for(corpus.size(), config.threads, [&](std::size_t c) {
        chapters[c] = segment_chapter(corpus[c].chapter_id, corpus[c].split, trees[c],
                                      corpus[c].reference_summary, table, config.segmenter);
    });

    std::vector<std::string> lines;
    lines.reserve(chapters.size());
    std::map<std::string, std::size_t> split_counts;
    std::size_t total_units = 0, total_tokens = 0;
    for (const Chapter& chapter : chapters) {
        lines.push_back(chapter_to_json(chapter).dump());
        ++split_counts[chapter.split];
        total_units += chapter.units.size();
        total_tokens += chapter.token_count();
    }
    write_artifact(config.paths.segmented, "segmented", config, lines);

    out << "segmented " << chapters.size() << " chapters into " << total_units << " units ("
        << total_tokens << " tokens)\n";
    out << "splits: train/dev/test = " << split_counts["train"] << "/" << split_counts["dev"]
        << "/" << split_counts["test"] << "\n";
    char mean[32];
    std::snprintf(mean, sizeof(mean), "%.1f",
                  static_cast<double>(total_tokens) / static_cast<double>(chapters.size()));
    out << "mean chapter length: " << mean << " tokens\n";
    out << "wrote " << config.paths.segmented << "\n";
}

void cmd_align(const ExperimentConfig& config, std::ostream& out) {
    std::vector<Chapter> chapters =
        read_segmented(config.paths.segmented, config.fingerprint());

    std::vector<OracleLabels> labels(chapters.size());
    util::parallel_for(chapters.size(), config.threads, [&](std::size_t c) {
        labels[c] = greedy_align(chapters[c], config.alignment);
    });

    std::vector<std::string> lines;
    std::size_t positives = 0, units = 0;
    for (std::size_t c = 0; c < chapters.size(); ++c) {
        json j;
        j["chapter_id"] = chapters[c].chapter_id;
        json ys = json::array();
        for (bool b : labels[c].labels) {
            ys.push_back(b ? 1 : 0);
            positives += b;
        }
        units += labels[c].labels.size();
        j["labels"] = ys;
        j["oracle_score"] = labels[c].oracle_score;
        lines.push_back(j.dump());
    }
    write_artifact(config.paths.labels, "labels", config, lines);
    out << "aligned " << chapters.size() << " chapters: " << positives << "/" << units
        << " units labeled positive\n";
    out << "wrote " << config.paths.labels << "\n";
}

void cmd_train(const ExperimentConfig& config, std::ostream& out) {
    std::string fingerprint = config.fingerprint();
    std::vector<Chapter> chapters = read_segmented(config.paths.segmented, fingerprint);
    LabelsFile labels = read_labels(config.paths.labels, fingerprint);

    std::vector<std::vector<bool>> per_chapter;
    per_chapter.reserve(chapters.size());
    for (const Chapter& chapter : chapters) {
        auto it = labels.by_chapter.find(chapter.chapter_id);
        if (it == labels.by_chapter.end()) {
            throw DataError("labels artifact lacks chapter " + chapter.chapter_id);
        }
        per_chapter.push_back(it->second);
    }

    TrainResult result = train(chapters, per_chapter, config.model, config.schedule, &out);

    json meta;
    meta["fingerprint"] = fingerprint;
    meta["phase"] = 1;
    result.phase1_checkpoint.meta_json = meta.dump();
    result.phase1_checkpoint.save(config.paths.checkpoint_phase1);
    meta["phase"] = 2;
    result.final_checkpoint.meta_json = meta.dump();
    result.final_checkpoint.save(config.paths.checkpoint);

    std::vector<std::string> lines;
    for (const EpochRecord& rec : result.log) {
        lines.push_back(json{{"phase", rec.phase},
                             {"epoch", rec.epoch},
                             {"train_loss", rec.train_loss},
                             {"dev_loss", rec.dev_loss},
                             {"dev_auc", rec.dev_auc},
                             {"dev_margin", rec.dev_margin},
                             {"is_best", rec.is_best}}
                            .dump());
    }
    lines.push_back(json{{"summary", true},
                         {"phase1_best_hash", util::hex64(result.phase1_best_hash)},
                         {"phase2_start_hash", util::hex64(result.phase2_start_hash)},
                         {"chapters_without_positives", result.chapters_without_positives}}
                        .dump());
    write_artifact(config.paths.train_log, "trainlog", config, lines);
    out << "wrote " << config.paths.checkpoint_phase1 << "\n";
    out << "wrote " << config.paths.checkpoint << "\n";
    out << "wrote " << config.paths.train_log << "\n";
}

void cmd_extract(const ExperimentConfig& config, const std::string& system, std::ostream& out) {
    if (system != "model" && system != "oracle") {
        throw ConfigError("extract: unknown system '" + system + "' (use model or oracle)");
    }
    std::string fingerprint = config.fingerprint();
    std::vector<Chapter> chapters = read_segmented(config.paths.segmented, fingerprint);

    std::vector<std::size_t> targets;
    for (std::size_t c = 0; c < chapters.size(); ++c) {
        if (chapters[c].split == config.eval_split) targets.push_back(c);
    }
    if (targets.empty()) {
        throw DataError("no chapters in eval split '" + config.eval_split + "'");
    }

    std::vector<Extract> extracts(targets.size());
    if (system == "oracle") {
        LabelsFile labels = read_labels(config.paths.labels, fingerprint);
        for (std::size_t i = 0; i < targets.size(); ++i) {
            const Chapter& chapter = chapters[targets[i]];
            auto it = labels.by_chapter.find(chapter.chapter_id);
            if (it == labels.by_chapter.end()) {
                throw DataError("labels artifact lacks chapter " + chapter.chapter_id);
            }
            // Oracle-positive units, rendered like any other extract.
            std::vector<double> scores(it->second.size(), 0.0);
            std::size_t n_pos = 0;
            for (std::size_t u = 0; u < it->second.size(); ++u) {
                if (it->second[u]) {
                    scores[u] = 1.0;
                    ++n_pos;
                }
            }
            SelectionPolicy policy;
            policy.k = std::max<std::size_t>(1, n_pos);
            extracts[i] = select_and_order(chapter, scores, policy);
        }
    } else {
        Checkpoint checkpoint = Checkpoint::load(config.paths.checkpoint);
        try {
            json meta = json::parse(checkpoint.meta_json);
            if (meta.at("fingerprint").get<std::string>() != fingerprint) {
                throw DataError("checkpoint " + config.paths.checkpoint +
                                " was trained under a different config; rerun train");
            }
        } catch (const json::exception& e) {
            throw DataError("checkpoint meta is corrupt: " + std::string(e.what()));
        }

        SelectionPolicy policy;
        policy.k = config.selection.k;
        policy.token_budget = config.selection.token_budget;
        if (config.selection.auto_budget) {
            LabelsFile labels = read_labels(config.paths.labels, fingerprint);
            std::vector<std::vector<bool>> per_chapter;
            for (const Chapter& chapter : chapters) {
                auto it = labels.by_chapter.find(chapter.chapter_id);
                if (it == labels.by_chapter.end()) {
                    throw DataError("labels artifact lacks chapter " + chapter.chapter_id);
                }
                per_chapter.push_back(it->second);
            }
            policy.token_budget = mean_oracle_extract_tokens(chapters, per_chapter, "train");
            out << "auto token budget: " << *policy.token_budget
                << " tokens (mean oracle extract on train)\n";
        }

        util::parallel_for(targets.size(), config.threads, [&](std::size_t i) {
            const Chapter& chapter = chapters[targets[i]];
            std::vector<double> scores = score_chapter(chapter, checkpoint);
            extracts[i] = select_and_order(chapter, scores, policy);
        });
    }

    std::vector<std::string> lines;
    for (const Extract& e : extracts) {
        lines.push_back(json{{"chapter_id", e.chapter_id},
                             {"system", system},
                             {"unit_ids", e.unit_ids},
                             {"text", e.text}}
                            .dump());
    }
    const std::string& path =
        system == "oracle" ? config.paths.extracts_oracle : config.paths.extracts_model;
    write_artifact(path, "extracts", config, lines);
    out << "wrote " << extracts.size() << " extracts to " << path << "\n";
}

void cmd_evaluate(const ExperimentConfig& config, std::ostream& out) {
    std::string fingerprint = config.fingerprint();
    std::vector<Chapter> chapters = read_segmented(config.paths.segmented, fingerprint);
    std::map<std::string, const Chapter*> by_id;
    for (const Chapter& chapter : chapters) by_id[chapter.chapter_id] = &chapter;

    EmbeddingTable embeddings;
    bool have_embeddings = !config.paths.embeddings.empty();
    if (have_embeddings) embeddings = EmbeddingTable::load(config.paths.embeddings);

    // Oracle Ext first, matching the conventional report layout.
    std::vector<ReportRow> rows;
    struct SystemFile {
        const char* label;
        const std::string* path;
    };
    const SystemFile files[] = {{"Oracle Ext", &config.paths.extracts_oracle},
                                {"Model Ext", &config.paths.extracts_model}};
    for (const SystemFile& file : files) {
        if (!std::filesystem::exists(*file.path)) continue;
        std::vector<Extract> extracts = read_extracts(*file.path, fingerprint, nullptr);
        rows.push_back(evaluate_system(file.label, extracts, by_id, config.metrics,
                                       have_embeddings ? &embeddings : nullptr,
                                       config.threads));
    }
    if (rows.empty()) {
        throw DataError("no extracts artifacts found; run extract first (expected " +
                        config.paths.extracts_oracle + " or " + config.paths.extracts_model +
                        ")");
    }

    std::vector<std::string> lines;
    for (const ReportRow& row : rows) {
        json j;
        j["system"] = row.system;
        j["R1"] = row.r1;
        j["R2"] = row.r2;
        j["RL"] = row.rl;
        if (row.wmd) j["WMD"] = *row.wmd;
        else j["WMD"] = nullptr;
        if (row.emb_f) j["EmbF"] = *row.emb_f;
        else j["EmbF"] = nullptr;
        j["chapters"] = row.chapters;
        j["skipped"] = row.skipped;
        lines.push_back(j.dump());
    }
    write_artifact(config.paths.report, "report", config, lines);
    for (const ReportRow& row : rows) out << format_row(row) << "\n";
    out << "wrote " << config.paths.report << "\n";
}

void cmd_report(const ExperimentConfig& config, std::ostream& out) {
    Artifact artifact = read_artifact(config.paths.report, "report", config.fingerprint());

    std::ostringstream table;
    table << "# config " << config.fingerprint() << "\n";
    char header[120];
    std::snprintf(header, sizeof(header), "%-14s %6s %6s %6s %6s %6s", "System", "R1", "R2",
                  "RL", "WMD", "EmbF");
    table << header << "\n";
    table << std::string(48, '-') << "\n";
    for (const json& j : artifact.records) {
        ReportRow row;
        row.system = j.at("system").get<std::string>();
        row.r1 = j.at("R1").get<double>();
        row.r2 = j.at("R2").get<double>();
        row.rl = j.at("RL").get<double>();
        if (!j.at("WMD").is_null()) row.wmd = j.at("WMD").get<double>();
        if (!j.at("EmbF").is_null()) row.emb_f = j.at("EmbF").get<double>();
        table << format_row(row) << "\n";
    }
    util::write_file(config.paths.report_table, table.str());
    out << table.str();
    out << "wrote " << config.paths.report_table << "\n";
}

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"spinsum: constituent-level extractive summarization pipeline"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand

    std::string config_path;
    std::optional<std::uint64_t> seed_override;
    std::optional<int> threads_override;
    std::optional<std::string> profile_override;
    app.add_option("--config", config_path, "experiment config (JSON)")->required();
    app.add_option("--seed", seed_override, "override the config seed");
    app.add_option("--threads", threads_override, "worker threads for per-chapter stages");
    app.add_option("--profile", profile_override, "model profile: desk or paper");

    std::string extract_system = "model";
    CLI::App* segment = app.add_subcommand("segment", "split sentences into spined units");
    CLI::App* align = app.add_subcommand("align", "greedy weighted-ROUGE oracle labels");
    CLI::App* train_cmd = app.add_subcommand("train", "two-phase scorer training");
    CLI::App* extract = app.add_subcommand("extract", "select top units per chapter");
    extract->add_option("--system", extract_system, "which system to extract: model or oracle");
    CLI::App* evaluate = app.add_subcommand("evaluate", "score extracts against references");
    CLI::App* report = app.add_subcommand("report", "render the evaluation table");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        std::string config_text = util::read_file(config_path);
        if (profile_override) {
            json j = json::parse(config_text);
            j["profile"] = *profile_override;
            config_text = j.dump();
        }
        ExperimentConfig config = ExperimentConfig::from_json_string(config_text);
        if (seed_override) {
            config.seed = *seed_override;
            config.model.seed = *seed_override;
        }
        if (threads_override) config.threads = *threads_override;

        if (segment->parsed()) cmd_segment(config, std::cout);
        if (align->parsed()) cmd_align(config, std::cout);
        if (train_cmd->parsed()) cmd_train(config, std::cout);
        if (extract->parsed()) cmd_extract(config, extract_system, std::cout);
        if (evaluate->parsed()) cmd_evaluate(config, std::cout);
        if (report->parsed()) cmd_report(config, std::cout);
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const InternalError& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace spinsum
