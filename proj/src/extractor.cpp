#include "spinsum/extractor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "spinsum/error.hpp"
#include "spinsum/util.hpp"

namespace spinsum {

void TrainSchedule::validate() const {
    if (phase1.patience < 1 || phase2.patience < 1) {
        throw ConfigError("schedule patience must be >= 1");
    }
    if (phase1.max_epochs < 1 || phase2.max_epochs < 1) {
        throw ConfigError("schedule max_epochs must be >= 1");
    }
    if (phase1.learning_rate <= 0.0 || phase2.learning_rate <= 0.0) {
        throw ConfigError("schedule learning rates must be positive");
    }
    if (margin <= 0.0) throw ConfigError("schedule margin must be positive");
    if (pair_cap < 1) throw ConfigError("schedule pair_cap must be >= 1");
    if (batch_size < 1) throw ConfigError("schedule batch_size must be >= 1");
}

namespace {

struct DevStats {
    double bce = 0.0;
    double auc = 0.0;
    double margin = 0.0;
};

struct TrainContext {
    const ModelConfig& config;
    std::vector<UnitSequenceInput> inputs;       // aligned with chapter index
    std::vector<std::vector<double>> labels;     // 0/1 per unit
    std::vector<std::vector<bool>> label_bits;
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> dev_idx;
};

double chapter_bce(const ParamStore& params, const TrainContext& ctx, std::size_t idx,
                   std::map<std::string, Tensor>* grads) {
    Graph graph;
    ModelVars vars = register_params(graph, params);
    ForwardTrace trace = scorer_forward(graph, vars, ctx.inputs[idx], ctx.config);
    Var loss = graph.bce(trace.scores, ctx.labels[idx]);
    if (grads) {
        graph.backward(loss);
        *grads = collect_grads(graph, vars);
    }
    return graph.value(loss).data[0];
}

double chapter_margin_loss(const ParamStore& params, const TrainContext& ctx, std::size_t idx,
                           const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                           const TrainSchedule& schedule, std::map<std::string, Tensor>* grads) {
    Graph graph;
    ModelVars vars = register_params(graph, params);
    ForwardTrace trace = scorer_forward(graph, vars, ctx.inputs[idx], ctx.config);
    Var target = schedule.margin_on_logits ? trace.logits : trace.scores;
    Var loss = graph.hinge_pairs(target, pairs, schedule.margin);
    if (grads) {
        graph.backward(loss);
        *grads = collect_grads(graph, vars);
    }
    return graph.value(loss).data[0];
}

DevStats eval_dev(const ParamStore& params, const TrainContext& ctx) {
    DevStats stats;
    std::vector<double> pooled_scores;
    std::vector<bool> pooled_labels;
    for (std::size_t idx : ctx.dev_idx) {
        Graph graph;
        ModelVars vars = register_params(graph, params);
        ForwardTrace trace = scorer_forward(graph, vars, ctx.inputs[idx], ctx.config);
        const std::vector<double>& scores = graph.value(trace.scores).data;
        stats.bce += bce_loss(scores, ctx.labels[idx]).loss;
        for (std::size_t u = 0; u < scores.size(); ++u) {
            pooled_scores.push_back(scores[u]);
            pooled_labels.push_back(ctx.label_bits[idx][u]);
        }
    }
    stats.bce /= static_cast<double>(ctx.dev_idx.size());
    stats.auc = ranking_auc(pooled_scores, pooled_labels);

    double pos_sum = 0.0, neg_sum = 0.0;
    std::size_t pos_n = 0, neg_n = 0;
    for (std::size_t i = 0; i < pooled_scores.size(); ++i) {
        if (pooled_labels[i]) {
            pos_sum += pooled_scores[i];
            ++pos_n;
        } else {
            neg_sum += pooled_scores[i];
            ++neg_n;
        }
    }
    if (pos_n > 0 && neg_n > 0) {
        stats.margin = pos_sum / static_cast<double>(pos_n) -
                       neg_sum / static_cast<double>(neg_n);
    }
    return stats;
}

void emit(std::ostream* progress, const EpochRecord& rec) {
    if (!progress) return;
    char line[160];
    std::snprintf(line, sizeof(line),
                  "phase %d epoch %3d  train %.6f  dev %.6f  auc %.4f  margin %+.4f%s",
                  rec.phase, rec.epoch, rec.train_loss, rec.dev_loss, rec.dev_auc,
                  rec.dev_margin, rec.is_best ? "  *" : "");
    (*progress) << line << "\n";
}

}  // namespace

TrainResult train(const std::vector<Chapter>& chapters,
                  const std::vector<std::vector<bool>>& labels, const ModelConfig& config,
                  const TrainSchedule& schedule, std::ostream* progress) {
    config.validate();
    schedule.validate();
    if (chapters.size() != labels.size()) {
        throw DataError("train: chapter/label count mismatch: " +
                        std::to_string(chapters.size()) + " vs " +
                        std::to_string(labels.size()));
    }

    TrainContext ctx{config, {}, {}, {}, {}, {}};
    Vocab token_vocab = build_token_vocab(chapters, "train");
    Vocab label_vocab = build_label_vocab(chapters, "train");

    bool any_positive = false;
    std::size_t chapters_without_positives = 0;
    for (std::size_t i = 0; i < chapters.size(); ++i) {
        if (labels[i].size() != chapters[i].units.size()) {
            throw DataError("train: label count mismatch for chapter " +
                            chapters[i].chapter_id);
        }
        ctx.inputs.push_back(build_input(chapters[i], token_vocab, label_vocab, config));
        ctx.label_bits.push_back(labels[i]);
        std::vector<double> ys(labels[i].size(), 0.0);
        bool has_pos = false;
        for (std::size_t u = 0; u < labels[i].size(); ++u) {
            ys[u] = labels[i][u] ? 1.0 : 0.0;
            has_pos = has_pos || labels[i][u];
        }
        ctx.labels.push_back(std::move(ys));
        if (chapters[i].split == "train") {
            ctx.train_idx.push_back(i);
            any_positive = any_positive || has_pos;
            if (!has_pos) ++chapters_without_positives;
        } else if (chapters[i].split == "dev") {
            ctx.dev_idx.push_back(i);
        }
    }
    if (ctx.train_idx.empty()) throw DataError("train: no chapters with split 'train'");
    if (ctx.dev_idx.empty()) throw DataError("train: dev split is empty");
    if (!any_positive) {
        throw DataError("train: no positive oracle labels anywhere in the training split; "
                        "check the alignment stage");
    }

    ParamStore params = ParamStore::initialize(config, token_vocab.size(), label_vocab.size());
    TrainResult result;
    result.chapters_without_positives = chapters_without_positives;
    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ull);

    // ---- phase 1: cross-entropy with early stopping on dev BCE ----
    std::string best_blob;
    {
        AdamOptimizer adam(params, schedule.phase1.learning_rate);
        DevStats initial = eval_dev(params, ctx);
        EpochRecord rec0{1, 0, 0.0, initial.bce, initial.auc, initial.margin, true};
        result.log.push_back(rec0);
        emit(progress, rec0);

        double best_bce = initial.bce;
        best_blob = params.serialize();
        std::size_t bad_epochs = 0;

        for (std::size_t epoch = 1; epoch <= schedule.phase1.max_epochs; ++epoch) {
            std::vector<std::size_t> order = ctx.train_idx;
            std::shuffle(order.begin(), order.end(), rng);
            double train_loss = 0.0;
            for (std::size_t start = 0; start < order.size(); start += schedule.batch_size) {
                std::size_t end = std::min(order.size(), start + schedule.batch_size);
                adam.zero_grad();
                for (std::size_t b = start; b < end; ++b) {
                    std::map<std::string, Tensor> grads;
                    train_loss += chapter_bce(params, ctx, order[b], &grads);
                    adam.accumulate(grads, 1.0 / static_cast<double>(end - start));
                }
                adam.step();
            }
            train_loss /= static_cast<double>(order.size());

            DevStats dev = eval_dev(params, ctx);
            bool improved = dev.bce < best_bce - 1e-12;
            if (improved) {
                best_bce = dev.bce;
                best_blob = params.serialize();
                bad_epochs = 0;
            } else {
                ++bad_epochs;
            }
            EpochRecord rec{1,       static_cast<int>(epoch), train_loss,
                            dev.bce, dev.auc,                 dev.margin,
                            improved};
            result.log.push_back(rec);
            emit(progress, rec);
            if (bad_epochs >= schedule.phase1.patience) break;
        }
    }

    ParamStore phase1_best = ParamStore::deserialize(best_blob);
    result.phase1_best_hash = phase1_best.content_hash();

    // ---- phase 2: margin ranking from the best phase-1 parameters ----
    params = ParamStore::deserialize(best_blob);
    result.phase2_start_hash = params.content_hash();
    {
        AdamOptimizer adam(params, schedule.phase2.learning_rate);
        DevStats initial = eval_dev(params, ctx);
        EpochRecord rec0{2, 0, 0.0, initial.bce, initial.auc, initial.margin, true};
        result.log.push_back(rec0);
        emit(progress, rec0);

        // The phase-1 restore point is the floor: no snapshot may rank dev
        // worse than the CE-only model.
        const double floor_auc = initial.auc;
        double best_auc = initial.auc;
        double snapshot_margin = initial.margin;
        std::string best2_blob = params.serialize();
        std::size_t bad_epochs = 0;

        for (std::size_t epoch = 1; epoch <= schedule.phase2.max_epochs; ++epoch) {
            std::vector<std::size_t> order = ctx.train_idx;
            std::shuffle(order.begin(), order.end(), rng);
            double train_loss = 0.0;
            std::size_t contributing = 0;
            for (std::size_t start = 0; start < order.size(); start += schedule.batch_size) {
                std::size_t end = std::min(order.size(), start + schedule.batch_size);
                adam.zero_grad();
                std::size_t batch_contributing = 0;
                for (std::size_t b = start; b < end; ++b) {
                    auto pairs = build_pairs(ctx.label_bits[order[b]], schedule.pair_cap, rng);
                    if (pairs.empty()) continue;  // no positive units in this chapter
                    std::map<std::string, Tensor> grads;
                    train_loss +=
                        chapter_margin_loss(params, ctx, order[b], pairs, schedule, &grads);
                    adam.accumulate(grads, 1.0);
                    ++batch_contributing;
                }
                if (batch_contributing == 0) continue;
                contributing += batch_contributing;
                adam.step();
            }
            if (contributing > 0) train_loss /= static_cast<double>(contributing);

            DevStats dev = eval_dev(params, ctx);
            bool improved = dev.auc > best_auc + 1e-12;
            if (improved) bad_epochs = 0;
            else ++bad_epochs;
            // AUC improvements always refresh. Otherwise an epoch may still
            // refresh when it ranks no worse than the floor, stays within
            // tolerance of the best, and widens the score margin, which is
            // what this phase is for.
            bool margin_refresh = dev.auc >= floor_auc - 1e-12 &&
                                  dev.auc >= best_auc - 0.005 &&
                                  dev.margin > snapshot_margin;
            if (improved || margin_refresh) {
                best_auc = std::max(best_auc, dev.auc);
                snapshot_margin = dev.margin;
                best2_blob = params.serialize();
            }
            EpochRecord rec{2,       static_cast<int>(epoch), train_loss,
                            dev.bce, dev.auc,                 dev.margin,
                            improved || margin_refresh};
            result.log.push_back(rec);
            emit(progress, rec);
            if (bad_epochs >= schedule.phase2.patience) break;
        }
        params = ParamStore::deserialize(best2_blob);
    }

    result.phase1_checkpoint.config = config;
    result.phase1_checkpoint.token_vocab = token_vocab;
    result.phase1_checkpoint.label_vocab = label_vocab;
    result.phase1_checkpoint.params = std::move(phase1_best);
    result.final_checkpoint.config = config;
    result.final_checkpoint.token_vocab = token_vocab;
    result.final_checkpoint.label_vocab = label_vocab;
    result.final_checkpoint.params = std::move(params);
    return result;
}

void SelectionPolicy::validate() const {
    if (k.has_value() == token_budget.has_value()) {
        throw ConfigError("selection policy: set exactly one of k or token_budget");
    }
    if (k && *k < 1) throw ConfigError("selection policy: k must be >= 1");
    if (token_budget && *token_budget < 1) {
        throw ConfigError("selection policy: token_budget must be >= 1");
    }
}

Extract select_and_order(const Chapter& chapter, const std::vector<double>& scores,
                         const SelectionPolicy& policy) {
    policy.validate();
    if (scores.size() != chapter.units.size()) {
        throw InternalError("select_and_order: score/unit count mismatch for chapter " +
                            chapter.chapter_id);
    }
    if (scores.empty()) throw DataError("select_and_order: no units to select from");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;  // ties break toward the lower unit id
    });

    Extract extract;
    extract.chapter_id = chapter.chapter_id;
    std::vector<std::size_t> selected;
    if (policy.k) {
        std::size_t k = *policy.k;
        if (k > scores.size()) {
            k = scores.size();
            extract.k_clamped = true;
        }
        selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    } else {
        // Greedy by score under the budget; the top-scored unit is always
        // taken so the extract is never empty.
        std::size_t used = 0;
        for (std::size_t idx : order) {
            std::size_t size = chapter.units[idx].size();
            if (selected.empty() || used + size <= *policy.token_budget) {
                selected.push_back(idx);
                used += size;
            }
            if (used >= *policy.token_budget) break;
        }
    }

    std::sort(selected.begin(), selected.end());
    extract.unit_ids = selected;
    std::vector<std::string> parts;
    parts.reserve(selected.size());
    for (std::size_t idx : selected) {
        parts.push_back(util::join(chapter.units[idx].tokens, " "));
    }
    extract.text = util::join(parts, "<q>");
    return extract;
}

namespace {

TokenList extract_tokens(const Extract& extract, bool lowercase) {
    std::string text = extract.text;
    std::size_t pos = 0;
    while ((pos = text.find("<q>", pos)) != std::string::npos) {
        text.replace(pos, 3, " ");
        pos += 1;
    }
    if (lowercase) text = util::lowercase_ascii(text);
    return util::split_ws(text);
}

}  // namespace

ReportRow evaluate_system(const std::string& system, const std::vector<Extract>& extracts,
                          const std::map<std::string, const Chapter*>& chapters_by_id,
                          const MetricsOptions& options, const EmbeddingTable* embeddings,
                          int threads) {
    if (extracts.empty()) throw DataError("evaluate_system: no extracts for " + system);

    struct PerChapter {
        bool skipped = false;
        double r1 = 0.0, r2 = 0.0, rl = 0.0, wmd = 0.0, emb_f = 0.0;
    };
    std::vector<PerChapter> rows(extracts.size());

    util::parallel_for(extracts.size(), threads, [&](std::size_t i) {
        const Extract& extract = extracts[i];
        auto it = chapters_by_id.find(extract.chapter_id);
        if (it == chapters_by_id.end()) {
            throw DataError("evaluate_system: extract references unknown chapter " +
                            extract.chapter_id);
        }
        const Chapter& chapter = *it->second;
        if (chapter.reference_summary.empty()) {
            rows[i].skipped = true;
            return;
        }
        TokenList candidate = extract_tokens(extract, options.lowercase);
        TokenList reference = chapter.reference_summary;
        if (options.lowercase) {
            for (std::string& t : reference) t = util::lowercase_ascii(t);
        }
        rows[i].r1 = rouge_n(candidate, reference, 1).f1;
        rows[i].r2 = rouge_n(candidate, reference, 2).f1;
        rows[i].rl = rouge_l(candidate, reference).f1;
        if (embeddings) {
            rows[i].wmd = relaxed_wmd(candidate, reference, *embeddings);
            rows[i].emb_f = greedy_match_fscore(candidate, reference, *embeddings).f1;
        }
    });

    ReportRow report;
    report.system = system;
    double r1 = 0.0, r2 = 0.0, rl = 0.0, wmd = 0.0, emb_f = 0.0;
    for (const PerChapter& row : rows) {
        if (row.skipped) {
            ++report.skipped;
            continue;
        }
        ++report.chapters;
        r1 += row.r1;
        r2 += row.r2;
        rl += row.rl;
        wmd += row.wmd;
        emb_f += row.emb_f;
    }
    if (report.chapters == 0) {
        throw DataError("evaluate_system: no extract had a usable reference for " + system);
    }
    double n = static_cast<double>(report.chapters);
    report.r1 = 100.0 * r1 / n;
    report.r2 = 100.0 * r2 / n;
    report.rl = 100.0 * rl / n;
    if (embeddings) {
        report.wmd = wmd / n;
        report.emb_f = emb_f / n;
    }
    return report;
}

std::size_t mean_oracle_extract_tokens(const std::vector<Chapter>& chapters,
                                       const std::vector<std::vector<bool>>& labels,
                                       const std::string& split) {
    if (chapters.size() != labels.size()) {
        throw DataError("mean_oracle_extract_tokens: chapter/label count mismatch");
    }
    std::size_t total = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < chapters.size(); ++i) {
        if (chapters[i].split != split) continue;
        std::size_t tokens = 0;
        for (std::size_t u = 0; u < chapters[i].units.size(); ++u) {
            if (labels[i][u]) tokens += chapters[i].units[u].size();
        }
        if (tokens > 0) {
            total += tokens;
            ++n;
        }
    }
    if (n == 0) {
        throw DataError("mean_oracle_extract_tokens: no positive units in split '" + split +
                        "'");
    }
    return static_cast<std::size_t>(
        std::llround(static_cast<double>(total) / static_cast<double>(n)));
}

}  // namespace spinsum
