#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "spinsum/error.hpp"
#include "spinsum/extractor.hpp"
#include "spinsum/util.hpp"

using namespace spinsum;

namespace {

Unit make_unit(std::size_t unit_id, const std::vector<std::string>& tokens) {
    Unit u;
    u.unit_id = unit_id;
    u.sentence_id = unit_id;
    u.tokens = tokens;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        Spine s;
        s.token_index = t;
        s.labels = {"NN", "NP"};
        u.spines.push_back(s);
    }
    return u;
}

Chapter scored_chapter(std::size_t n_units) {
    Chapter ch;
    ch.chapter_id = "scored";
    for (std::size_t i = 0; i < n_units; ++i) {
        ch.units.push_back(make_unit(i, {"u" + std::to_string(i), "x", "y"}));
    }
    return ch;
}

// Synthetic separable corpus: positive units contain the marker token,
// concentrated in every eighth chapter so both the content signal and
// within-chapter localization are learnable.
struct ToyCorpus {
    std::vector<Chapter> chapters;
    std::vector<std::vector<bool>> labels;
};

ToyCorpus make_toy_corpus(std::size_t n_chapters, std::size_t units_per_chapter,
                          std::size_t positives_per_beacon_chapter, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> word(0, 19);
    std::uniform_int_distribution<std::size_t> unit_len(4, 6);

    ToyCorpus corpus;
    for (std::size_t c = 0; c < n_chapters; ++c) {
        Chapter ch;
        ch.chapter_id = "toy" + std::to_string(c);
        ch.split = (c % 5 == 4) ? "dev" : "train";
        std::vector<bool> ys(units_per_chapter, false);
        bool beacon_chapter = (c % 8 == 2);
        if (beacon_chapter) {
            std::vector<std::size_t> slots(units_per_chapter);
            std::iota(slots.begin(), slots.end(), 0);
            std::shuffle(slots.begin(), slots.end(), rng);
            for (std::size_t j = 0; j < positives_per_beacon_chapter; ++j) ys[slots[j]] = true;
        }
        for (std::size_t u = 0; u < units_per_chapter; ++u) {
            std::vector<std::string> tokens;
            std::size_t len = unit_len(rng);
            for (std::size_t t = 0; t < len; ++t) {
                tokens.push_back("w" + std::to_string(word(rng)));
            }
            if (ys[u]) {
                std::uniform_int_distribution<std::size_t> pos(0, tokens.size() - 1);
                tokens[pos(rng)] = "beacon";
            }
            ch.units.push_back(make_unit(u, tokens));
        }
        ch.reference_summary = {"beacon"};
        corpus.chapters.push_back(std::move(ch));
        corpus.labels.push_back(std::move(ys));
    }
    return corpus;
}

ModelConfig toy_model_config() {
    ModelConfig cfg;
    cfg.token_emb_dim = 16;
    cfg.spine_label_emb_dim = 4;
    cfg.spine_gru_hidden = 6;
    cfg.model_dim = 24;
    cfg.ff_dim = 48;
    cfg.num_layers = 1;
    cfg.num_heads = 2;
    cfg.attention_window = 4;
    cfg.max_position = 512;
    cfg.seed = 13;
    return cfg;
}

}  // namespace

TEST_CASE("select_and_order: top-k with re-ordering") {
    Chapter ch = scored_chapter(4);
    SelectionPolicy policy;
    policy.k = 2;
    Extract e = select_and_order(ch, {0.2, 0.9, 0.1, 0.8}, policy);
    CHECK(e.unit_ids == std::vector<std::size_t>{1, 3});
    CHECK(e.text == "u1 x y<q>u3 x y");
    CHECK(!e.k_clamped);
}

TEST_CASE("select_and_order: k equal to n is the identity selection") {
    Chapter ch = scored_chapter(3);
    SelectionPolicy policy;
    policy.k = 3;
    Extract e = select_and_order(ch, {0.5, 0.4, 0.6}, policy);
    CHECK(e.unit_ids == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("select_and_order: equal scores break toward low unit ids") {
    Chapter ch = scored_chapter(4);
    SelectionPolicy policy;
    policy.k = 2;
    Extract e = select_and_order(ch, {0.5, 0.5, 0.5, 0.5}, policy);
    CHECK(e.unit_ids == std::vector<std::size_t>{0, 1});
}

TEST_CASE("select_and_order: oversized k selects everything and warns") {
    Chapter ch = scored_chapter(2);
    SelectionPolicy policy;
    policy.k = 5;
    Extract e = select_and_order(ch, {0.1, 0.2}, policy);
    CHECK(e.unit_ids == std::vector<std::size_t>{0, 1});
    CHECK(e.k_clamped);
}

TEST_CASE("select_and_order: token budget greedy") {
    Chapter ch = scored_chapter(4);  // each unit has 3 tokens
    SelectionPolicy policy;
    policy.token_budget = 6;
    Extract e = select_and_order(ch, {0.9, 0.1, 0.8, 0.2}, policy);
    CHECK(e.unit_ids == std::vector<std::size_t>{0, 2});

    // A budget smaller than any unit still yields the best unit.
    policy.token_budget = 2;
    Extract tiny = select_and_order(ch, {0.1, 0.9, 0.2, 0.3}, policy);
    CHECK(tiny.unit_ids == std::vector<std::size_t>{1});
}

TEST_CASE("select_and_order: policy validation") {
    Chapter ch = scored_chapter(2);
    SelectionPolicy both;
    both.k = 1;
    both.token_budget = 5;
    CHECK_THROWS_AS(select_and_order(ch, {0.1, 0.2}, both), ConfigError);
    SelectionPolicy neither;
    CHECK_THROWS_AS(select_and_order(ch, {0.1, 0.2}, neither), ConfigError);
}

TEST_CASE("monotone selection: raising a selected unit's score keeps it selected") {
    Chapter ch = scored_chapter(5);
    SelectionPolicy policy;
    policy.k = 2;
    std::vector<double> scores = {0.3, 0.7, 0.5, 0.2, 0.6};
    Extract base = select_and_order(ch, scores, policy);
    for (std::size_t idx : base.unit_ids) {
        std::vector<double> boosted = scores;
        boosted[idx] = std::min(1.0, boosted[idx] + 0.2);
        Extract again = select_and_order(ch, boosted, policy);
        CHECK(std::find(again.unit_ids.begin(), again.unit_ids.end(), idx) !=
              again.unit_ids.end());
    }
}

TEST_CASE("evaluate_system: extracts equal to references score R1 = 100") {
    Chapter ch;
    ch.chapter_id = "c0";
    ch.units.push_back(make_unit(0, {"tess", "went", "home"}));
    ch.reference_summary = {"tess", "went", "home"};
    std::map<std::string, const Chapter*> by_id = {{"c0", &ch}};

    Extract e;
    e.chapter_id = "c0";
    e.unit_ids = {0};
    e.text = "tess went home";
    ReportRow row = evaluate_system("oracle", {e}, by_id, MetricsOptions{}, nullptr);
    CHECK(row.r1 == doctest::Approx(100.0));
    CHECK(row.rl == doctest::Approx(100.0));
    CHECK(row.chapters == 1);
    CHECK(!row.wmd.has_value());
}

TEST_CASE("evaluate_system: empty extract set and missing references") {
    std::map<std::string, const Chapter*> by_id;
    CHECK_THROWS_AS(evaluate_system("x", {}, by_id, MetricsOptions{}, nullptr), DataError);

    Chapter with_ref;
    with_ref.chapter_id = "a";
    with_ref.units.push_back(make_unit(0, {"x"}));
    with_ref.reference_summary = {"x"};
    Chapter no_ref;
    no_ref.chapter_id = "b";
    no_ref.units.push_back(make_unit(0, {"y"}));
    std::map<std::string, const Chapter*> mixed = {{"a", &with_ref}, {"b", &no_ref}};
    Extract ea;
    ea.chapter_id = "a";
    ea.text = "x";
    Extract eb;
    eb.chapter_id = "b";
    eb.text = "y";
    ReportRow row = evaluate_system("x", {ea, eb}, mixed, MetricsOptions{}, nullptr);
    CHECK(row.chapters == 1);
    CHECK(row.skipped == 1);

    Extract unknown;
    unknown.chapter_id = "nope";
    unknown.text = "z";
    CHECK_THROWS_AS(evaluate_system("x", {unknown}, mixed, MetricsOptions{}, nullptr),
                    DataError);
}

TEST_CASE("evaluate_system splits candidate text on the <q> delimiter") {
    Chapter ch;
    ch.chapter_id = "c0";
    ch.units.push_back(make_unit(0, {"alpha"}));
    ch.units.push_back(make_unit(1, {"beta"}));
    ch.reference_summary = {"alpha", "beta"};
    std::map<std::string, const Chapter*> by_id = {{"c0", &ch}};
    Extract e;
    e.chapter_id = "c0";
    e.unit_ids = {0, 1};
    e.text = "alpha<q>beta";
    ReportRow row = evaluate_system("s", {e}, by_id, MetricsOptions{}, nullptr);
    CHECK(row.r1 == doctest::Approx(100.0));
}

TEST_CASE("mean_oracle_extract_tokens averages positive-unit tokens") {
    ToyCorpus corpus = make_toy_corpus(10, 6, 2, 3);
    std::size_t budget = mean_oracle_extract_tokens(corpus.chapters, corpus.labels, "train");
    CHECK(budget >= 8);   // two positive units of 4..6 tokens
    CHECK(budget <= 12);

    std::vector<std::vector<bool>> empty_labels(corpus.chapters.size());
    for (std::size_t i = 0; i < corpus.chapters.size(); ++i) {
        empty_labels[i].assign(corpus.chapters[i].units.size(), false);
    }
    CHECK_THROWS_AS(mean_oracle_extract_tokens(corpus.chapters, empty_labels, "train"),
                    DataError);
}

TEST_CASE("train: schedule and data validation") {
    ToyCorpus corpus = make_toy_corpus(6, 4, 1, 4);
    ModelConfig cfg = toy_model_config();
    TrainSchedule bad;
    bad.phase1.patience = 0;
    CHECK_THROWS_AS(train(corpus.chapters, corpus.labels, cfg, bad), ConfigError);

    // No positive labels anywhere aborts with a diagnostic.
    ToyCorpus negative = corpus;
    for (auto& ys : negative.labels) ys.assign(ys.size(), false);
    TrainSchedule sched;
    try {
        train(negative.chapters, negative.labels, cfg, sched);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("no positive oracle labels") != std::string::npos);
    }

    // A corpus without a dev split is rejected.
    ToyCorpus no_dev = corpus;
    for (auto& ch : no_dev.chapters) ch.split = "train";
    CHECK_THROWS_AS(train(no_dev.chapters, no_dev.labels, cfg, sched), DataError);
}

TEST_CASE("train: two-phase trainer learns the separable toy corpus") {
    ToyCorpus corpus = make_toy_corpus(120, 8, 5, 20240813);
    ModelConfig cfg = toy_model_config();
    TrainSchedule sched;
    sched.phase1 = {20, 20, 1e-2};
    sched.phase2 = {10, 10, 1e-2 / 3.0};
    sched.margin = 2.0;
    sched.batch_size = 4;

    std::ostringstream progress;
    TrainResult result = train(corpus.chapters, corpus.labels, cfg, sched, &progress);
    INFO(progress.str());

    // Phase 2 resumes from the best phase-1 checkpoint (hash match).
    CHECK(result.phase2_start_hash == result.phase1_best_hash);
    CHECK(result.phase1_checkpoint.params.content_hash() == result.phase1_best_hash);

    // Fresh initialization scores ~0.5: the pre-update dev loss is ~ln 2.
    REQUIRE(!result.log.empty());
    CHECK(result.log.front().phase == 1);
    CHECK(result.log.front().epoch == 0);
    CHECK(std::abs(result.log.front().dev_loss - std::log(2.0)) < 0.1);

    // Dev BCE at phase-1 end does not exceed the first-epoch value.
    double epoch1_bce = -1.0;
    double best_bce = 1e9;
    double phase1_auc = 0.0;
    for (const EpochRecord& rec : result.log) {
        if (rec.phase != 1) continue;
        if (rec.epoch == 1) epoch1_bce = rec.dev_loss;
        if (rec.is_best) {
            best_bce = rec.dev_loss;
            phase1_auc = rec.dev_auc;
        }
    }
    REQUIRE(epoch1_bce >= 0.0);
    CHECK(best_bce <= epoch1_bce + 1e-12);

    // The separable rule is learned by phase 1 alone, within 20 epochs.
    CHECK(phase1_auc >= 0.95);

    // Phase 2 does not reduce AUC and separation stays wide.
    double phase2_auc = 0.0, phase2_margin = 0.0;
    for (const EpochRecord& rec : result.log) {
        if (rec.phase == 2 && rec.is_best) {
            phase2_auc = rec.dev_auc;
            phase2_margin = rec.dev_margin;
        }
    }
    CHECK(phase2_auc >= phase1_auc - 1e-9);
    CHECK(phase2_margin > 0.3);

    // The final checkpoint separates classes on a dev chapter.
    for (std::size_t i = 0; i < corpus.chapters.size(); ++i) {
        if (corpus.chapters[i].split != "dev") continue;
        std::vector<double> scores = score_chapter(corpus.chapters[i], result.final_checkpoint);
        CHECK(scores.size() == corpus.chapters[i].units.size());
        for (double s : scores) {
            CHECK(s > 0.0);
            CHECK(s < 1.0);
        }
    }
}
