#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "lfm/backend.hpp"
#include "lfm/data.hpp"
#include "lfm/errors.hpp"
#include "lfm/evaluation.hpp"
#include "lfm/learners.hpp"
#include "lfm/presets.hpp"
#include "lfm/synthetic.hpp"

#include "testutil.hpp"

using namespace lfm;
using namespace lfmtest;

namespace {

// Independent AUC estimator: count concordant score pairs (positive above
// negative) plus half-credit for exact ties, over all positive/negative pairs.
double pair_count_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    double num = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j]) num += 1.0;
            else if (scores[i] == scores[j]) num += 0.5;
        }
    }
    if (pairs == 0) return 0.5;
    return num / static_cast<double>(pairs);
}

EncodedMatrix hand_matrix(std::size_t rows, std::size_t cols, std::vector<double> data,
                          std::vector<std::string> names, std::vector<int> labels,
                          std::vector<std::string> classes) {
    EncodedMatrix m;
    m.rows = rows;
    m.cols = cols;
    m.data = std::move(data);
    m.column_names = std::move(names);
    m.label_indices = std::move(labels);
    m.class_labels = std::move(classes);
    return m;
}

// Deterministic dataset over the discharge preset whose label is a bijection
// of the single latent level: each level gets its own winning class, so a
// model that sees recovered latents can be exact while the raw-features arm
// has to approximate the conjunctive rules.
GenResult bijective_discharge(std::size_t n, std::uint64_t seed) {
    const Preset& preset = discharge_preset();
    GenConfig gc;
    gc.schema = preset.schema;
    gc.n = n;
    gc.program = preset.program;
    gc.outcome_weights = {
        {"Social_Support=strong", {3.0, -1.0, -1.0}},
        {"Social_Support=moderate", {-1.0, 3.0, -1.0}},
        {"Social_Support=limited", {-1.0, -1.0, 3.0}},
    };
    gc.noise_scale = 0.0;
    gc.seed = seed;
    return gen_dataset(gc);
}

CompareConfig discharge_compare(std::vector<std::uint64_t> seeds) {
    const Preset& preset = discharge_preset();
    CompareConfig cc;
    cc.seeds = std::move(seeds);
    cc.train_ratio = 0.75;
    cc.arch = Arch::Linear;
    cc.prompt = preset.prompt;
    cc.profile = preset.profile;
    cc.k_shots = 0;
    cc.importance_repeats = 3;
    return cc;
}

} // namespace

TEST_SUITE("evaluation") {

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

TEST_CASE("metrics on a hand-worked three-class table") {
    // Six rows, three classes.  Row 5 ties classes a and b at 0.4, so the
    // argmax must resolve to the lower index (a).
    std::vector<double> probs = {
        0.7, 0.2, 0.1, // true a, pred a
        0.1, 0.8, 0.1, // true b, pred b
        0.3, 0.3, 0.4, // true b, pred c
        0.5, 0.4, 0.1, // true c, pred a
        0.2, 0.3, 0.5, // true c, pred c
        0.4, 0.4, 0.2, // true b, pred a (tie -> lowest index)
    };
    std::vector<int> labels = {0, 1, 1, 2, 2, 1};
    MetricReport rep = metrics(probs, labels, {"a", "b", "c"});

    CHECK(rep.n == 6);
    CHECK(rep.accuracy == doctest::Approx(0.5).epsilon(1e-15));

    std::vector<std::vector<int>> expect_confusion = {
        {1, 0, 0},
        {1, 1, 1},
        {1, 0, 1},
    };
    CHECK(rep.confusion == expect_confusion);

    // Per class: a) TP=1 FP=2 FN=0; b) TP=1 FP=0 FN=2; c) TP=1 FP=1 FN=1.
    REQUIRE(rep.f1_per_class.size() == 3);
    CHECK(rep.f1_per_class.at("a") == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(rep.f1_per_class.at("b") == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(rep.f1_per_class.at("c") == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(rep.macro_f1 == doctest::Approx(0.5).epsilon(1e-15));

    // One-vs-rest AUCs worked by pair counting: class a = 5/5, class b =
    // (3 + 1.5 + 2.5)/9, class c = (4 + 1)/8.  Macro = 173/216.
    CHECK(rep.roc_auc_ovr_macro == doctest::Approx(173.0 / 216.0).epsilon(1e-12));
}

TEST_CASE("metrics rejects malformed inputs") {
    std::vector<double> probs = {0.6, 0.4, 0.3, 0.7};
    std::vector<int> labels = {0, 1};

    CHECK_THROWS_AS(metrics(probs, labels, {"only"}), DataError);
    CHECK_THROWS_AS(metrics({0.6, 0.4, 0.3}, labels, {"a", "b"}), DataError);
    CHECK_THROWS_AS(metrics({}, {}, {"a", "b"}), DataError);
    CHECK_THROWS_AS(metrics(probs, {0, 2}, {"a", "b"}), DataError);
    CHECK_THROWS_AS(metrics(probs, {0, -1}, {"a", "b"}), DataError);
    CHECK_NOTHROW(metrics(probs, labels, {"a", "b"}));
}

// ---------------------------------------------------------------------------
// roc_auc_binary
// ---------------------------------------------------------------------------

TEST_CASE("binary ROC AUC handles ties, degeneracy, and hand cases") {
    SUBCASE("hand case with one tie pair") {
        // P = {0.8, 0.3, 0.4}, N = {0.2, 0.4, 0.3}: concordant 6, ties 2,
        // discordant 1 -> (6 + 1)/9.
        std::vector<double> s = {0.2, 0.8, 0.3, 0.4, 0.3, 0.4};
        std::vector<int> y = {0, 1, 1, 0, 0, 1};
        CHECK(roc_auc_binary(s, y) == doctest::Approx(7.0 / 9.0).epsilon(1e-12));
    }
    SUBCASE("perfect and inverted rankings") {
        CHECK(roc_auc_binary({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == doctest::Approx(1.0));
        CHECK(roc_auc_binary({0.9, 0.8, 0.1, 0.2}, {0, 0, 1, 1}) == doctest::Approx(0.0));
    }
    SUBCASE("all scores equal gives chance level") {
        CHECK(roc_auc_binary({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) ==
              doctest::Approx(0.5).epsilon(1e-15));
    }
    SUBCASE("degenerate label sets return 0.5") {
        CHECK(roc_auc_binary({0.1, 0.9}, {1, 1}) == doctest::Approx(0.5));
        CHECK(roc_auc_binary({0.1, 0.9}, {0, 0}) == doctest::Approx(0.5));
        CHECK(roc_auc_binary({}, {}) == doctest::Approx(0.5));
    }
    SUBCASE("count mismatch is a data error") {
        CHECK_THROWS_AS(roc_auc_binary({0.1, 0.2}, {0}), DataError);
    }
}

TEST_CASE("trapezoidal AUC equals the pair-counting estimator on random tied data") {
    // Scores drawn from a ten-point grid so ties are plentiful; the two
    // estimators must agree to floating-point accuracy on every instance.
    std::mt19937_64 rng(20260814u);
    std::uniform_int_distribution<int> grid(0, 9);
    std::bernoulli_distribution coin(0.4);

    for (int instance = 0; instance < 25; ++instance) {
        std::size_t n = 60;
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = grid(rng) / 10.0;
            labels[i] = coin(rng) ? 1 : 0;
        }
        double trap = roc_auc_binary(scores, labels);
        double pairs = pair_count_auc(scores, labels);
        CHECK(std::abs(trap - pairs) <= 1e-12);
    }
}

// ---------------------------------------------------------------------------
// permutation importance
// ---------------------------------------------------------------------------

TEST_CASE("permutation importance ranks the informative group first") {
    // 40 rows: "signal" determines the label exactly, the "hue" one-hot pair
    // is shuffled-noise, and "pad" is constant (its permutation is a no-op).
    std::mt19937_64 rng(99u);
    std::bernoulli_distribution coin(0.5);
    std::size_t n = 40;
    std::vector<double> data;
    std::vector<int> labels;
    for (std::size_t i = 0; i < n; ++i) {
        int y = static_cast<int>(i % 2);
        double red = coin(rng) ? 1.0 : 0.0;
        data.push_back(y == 1 ? 1.0 : -1.0);
        data.push_back(red);
        data.push_back(1.0 - red);
        data.push_back(0.5);
        labels.push_back(y);
    }
    EncodedMatrix m = hand_matrix(n, 4, data, {"signal", "hue=red", "hue=blue", "pad"},
                                  labels, {"neg", "pos"});

    TrainConfig tc;
    tc.learning_rate = 1.0;
    tc.max_epochs = 300;
    auto [model, report] = train(m, tc, Arch::Linear);
    CHECK(report.final_loss() < 0.2);

    CHECK_THROWS_AS(permutation_importance(model, m, 11, 0), ConfigError);

    auto ranked = permutation_importance(model, m, 11, 4);
    REQUIRE(ranked.size() == 3);
    std::set<std::string> names;
    for (const auto& [g, d] : ranked) names.insert(g);
    CHECK(names == std::set<std::string>{"signal", "hue", "pad"});

    CHECK(ranked[0].first == "signal");
    CHECK(ranked[0].second > 0.2);

    auto find_drop = [&](const std::string& g) {
        for (const auto& [name, d] : ranked)
            if (name == g) return d;
        FAIL("group not found: ", g);
        return 0.0;
    };
    CHECK(find_drop("pad") == 0.0); // permuting a constant column changes nothing
    CHECK(std::abs(find_drop("hue")) < 0.15);

    SUBCASE("deterministic under the same seed") {
        auto again = permutation_importance(model, m, 11, 4);
        REQUIRE(again.size() == ranked.size());
        for (std::size_t i = 0; i < ranked.size(); ++i) {
            CHECK(again[i].first == ranked[i].first);
            CHECK(again[i].second == ranked[i].second);
        }
    }

    SUBCASE("csv export lists groups in rank order") {
        TempDir tmp;
        auto path = tmp.path() / "importance.csv";
        write_importance_csv(ranked, path);
        std::string text = read_text(path);
        CHECK(text.rfind("group,delta_macro_f1\n", 0) == 0);
        CHECK(std::count(text.begin(), text.end(), '\n') == 4);
        CHECK(text.find("signal,") != std::string::npos);
        CHECK(text.find("signal,") < text.find("hue,"));
    }
}

// ---------------------------------------------------------------------------
// run_comparison
// ---------------------------------------------------------------------------

TEST_CASE("comparison on a latent-bijective outcome reaches exact recovery") {
    // Zero label noise and one outcome class per latent level: the arm that
    // sees recovered latents separates the test split perfectly on every
    // seed, so its macro-F1 is exactly 1.
    const Preset& preset = discharge_preset();
    GenResult gen = bijective_discharge(400, 3);
    Backend backend{MockBackend{preset.program, preset.style}};

    CompareConfig cc = discharge_compare({1, 2, 3});
    ComparisonResult result = run_comparison(gen.dataset, preset.program, backend, cc);

    REQUIRE(result.with_latents.per_seed.size() == 3);
    REQUIRE(result.without_latents.per_seed.size() == 3);
    CHECK(result.with_latents.seeds == std::vector<std::uint64_t>{1, 2, 3});

    for (const MetricReport& rep : result.with_latents.per_seed) {
        CHECK(rep.macro_f1 == 1.0);
        CHECK(rep.accuracy == 1.0);
        CHECK(rep.roc_auc_ovr_macro == doctest::Approx(1.0).epsilon(1e-12));
    }

    // Aggregates are consistent with the per-seed rows.
    CHECK(result.with_latents.mean.at("macro_f1") == doctest::Approx(1.0).epsilon(1e-15));
    double gain_sum = 0.0;
    std::size_t positive = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        double gain = result.with_latents.per_seed[i].macro_f1 -
                      result.without_latents.per_seed[i].macro_f1;
        gain_sum += gain;
        if (gain > 0) ++positive;
    }
    CHECK(result.mean_macro_f1_gain == doctest::Approx(gain_sum / 3.0).epsilon(1e-15));
    CHECK(result.seeds_with_positive_gain == positive);

    // Importance over the augmented test split covers every original feature
    // plus the latent, and the latent group carries the model.
    REQUIRE(result.importance.size() == preset.schema.features.size() + 1);
    CHECK(result.importance[0].first == "Social_Support");
    CHECK(result.importance[0].second > 0.1);

    SUBCASE("summary csv layout") {
        TempDir tmp;
        auto path = tmp.path() / "summary.csv";
        write_summary_csv(result, path);
        std::string text = read_text(path);
        CHECK(text.rfind("arm,seed,accuracy,macro_f1,roc_auc_ovr_macro\n", 0) == 0);
        // Header + per arm: 3 seed rows + mean + std.
        CHECK(std::count(text.begin(), text.end(), '\n') == 11);
        CHECK(text.find("without_latents,1,") != std::string::npos);
        CHECK(text.find("without_latents,mean,") != std::string::npos);
        CHECK(text.find("without_latents,std,") != std::string::npos);
        CHECK(text.find("with_latents,3,") != std::string::npos);
        CHECK(text.find("with_latents,std,") != std::string::npos);
    }

    SUBCASE("json export shape") {
        auto j = nlohmann::json::parse(comparison_to_json(result));
        REQUIRE(j.contains("without_latents"));
        REQUIRE(j.contains("with_latents"));
        REQUIRE(j.contains("mean_macro_f1_gain"));
        REQUIRE(j.contains("seeds_with_positive_gain"));
        REQUIRE(j.contains("importance"));

        CHECK(j["with_latents"]["per_seed"].size() == 3);
        CHECK(j["with_latents"]["per_seed"][0]["seed"] == 1);
        CHECK(j["with_latents"]["per_seed"][0]["macro_f1"] == 1.0);
        CHECK(j["with_latents"]["mean"].contains("roc_auc_ovr_macro"));
        CHECK(j["with_latents"]["std"].contains("accuracy"));
        CHECK(j["mean_macro_f1_gain"].get<double>() ==
              doctest::Approx(result.mean_macro_f1_gain));
        REQUIRE(!j["importance"].empty());
        CHECK(j["importance"][0].contains("group"));
        CHECK(j["importance"][0].contains("delta_macro_f1"));
        CHECK(j["importance"][0]["group"] == "Social_Support");
    }
}

TEST_CASE("comparison with an empty latent schema runs both arms identically") {
    // The chain derives no latents, so augmentation is the identity and both
    // arms train on byte-identical splits.
    const Preset& preset = discharge_preset();
    ChainProgram no_latents = parse_chain(
        "stage P { P_emergency <- Admit_Type == \"Emergency\" }\n"
        "stage Z { score += 1.0 <- P_emergency }\n");
    REQUIRE(no_latents.latent_specs().empty());

    GenConfig gc;
    gc.schema = preset.schema;
    gc.n = 120;
    gc.program = no_latents;
    gc.outcome_weights = {
        {"Admit_Type=Emergency", {1.5, -1.0, 0.0}},
        {"Language=Other", {-1.0, 1.2, 0.3}},
        {"Insurance=Medicare", {0.2, 0.1, -0.5}},
    };
    gc.noise_scale = 0.25;
    gc.seed = 7;
    GenResult gen = gen_dataset(gc);

    RationaleStyle style;
    style.phrases = {{"P_emergency", "an emergency admission"}};
    style.p_template = "The chart notes {items}.";
    style.o_template = "Together these point to {items}.";
    style.z_template = "Hence the expected support level is {items}.";
    Backend backend{MockBackend{no_latents, style}};

    CompareConfig cc = discharge_compare({4, 9});
    ComparisonResult result = run_comparison(gen.dataset, no_latents, backend, cc);

    REQUIRE(result.without_latents.per_seed.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        const MetricReport& a = result.without_latents.per_seed[i];
        const MetricReport& b = result.with_latents.per_seed[i];
        CHECK(a.accuracy == b.accuracy);
        CHECK(a.macro_f1 == b.macro_f1);
        CHECK(a.roc_auc_ovr_macro == b.roc_auc_ovr_macro);
        CHECK(a.confusion == b.confusion);
    }
    CHECK(result.mean_macro_f1_gain == 0.0);
    CHECK(result.seeds_with_positive_gain == 0);
    // No latent column appears among the importance groups.
    for (const auto& [group, drop] : result.importance)
        CHECK(group != "Social_Support");
}

TEST_CASE("comparison rejects invalid configuration") {
    const Preset& preset = discharge_preset();
    GenResult gen = bijective_discharge(40, 1);
    Backend backend{MockBackend{preset.program, preset.style}};

    CompareConfig cc = discharge_compare({1});
    cc.seeds.clear();
    CHECK_THROWS_AS(run_comparison(gen.dataset, preset.program, backend, cc), ConfigError);

    cc = discharge_compare({1});
    cc.train_ratio = 0.0;
    CHECK_THROWS_AS(run_comparison(gen.dataset, preset.program, backend, cc), ConfigError);

    cc = discharge_compare({1});
    cc.train_ratio = 1.0;
    CHECK_THROWS_AS(run_comparison(gen.dataset, preset.program, backend, cc), ConfigError);
}

TEST_CASE("comparison surfaces per-record failures by index") {
    const Preset& preset = discharge_preset();
    GenResult gen = bijective_discharge(12, 2);

    SUBCASE("a scripted refusal leaves its row without latents") {
        // The scripted completion carries an empty latent footer, so the
        // failure surfaces when augmentation reaches that row.
        Backend backend{MockBackend{preset.program, preset.style, {5}}};
        CompareConfig cc = discharge_compare({1});
        try {
            run_comparison(gen.dataset, preset.program, backend, cc);
            FAIL("expected a data error");
        } catch (const DataError& e) {
            std::string msg = e.what();
            CHECK(msg.find("row 5") != std::string::npos);
            CHECK(msg.find("missing latent") != std::string::npos);
        }
    }

    SUBCASE("a prompt-building failure names the first affected record") {
        // Requesting more shots than the template holds fails per record and
        // is reported against the first one.
        Backend backend{MockBackend{preset.program, preset.style}};
        CompareConfig cc = discharge_compare({1});
        cc.k_shots = 3; // the preset template ships without shots
        try {
            run_comparison(gen.dataset, preset.program, backend, cc);
            FAIL("expected a backend error");
        } catch (const BackendError& e) {
            std::string msg = e.what();
            CHECK(msg.find("record 0") != std::string::npos);
        }
    }
}

// ---------------------------------------------------------------------------
// lemma_demo
// ---------------------------------------------------------------------------

TEST_CASE("warm-start demonstration accounting") {
    LemmaReport rep = lemma_demo(60, 40, 3, {1, 2, 3});

    CHECK(rep.n_train == 60);
    CHECK(rep.n_test == 40);
    CHECK(rep.n_noise == 3);
    REQUIRE(rep.rows.size() == 3);

    std::size_t part_i = 0;
    bool found = false;
    double max_margin = 0.0;
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        const LemmaSeedRow& row = rep.rows[i];
        CHECK(row.seed == i + 1);
        CHECK(row.in_sample_original > 0.0);
        CHECK(row.out_sample_original > 0.0);
        // Warm-started refits never end above the restricted optimum.
        CHECK(row.in_sample_augmented <= row.in_sample_original + 1e-12);
        if (row.in_sample_augmented <= row.in_sample_original + 1e-12) ++part_i;
        double margin = row.out_sample_augmented - row.out_sample_original;
        if (margin > 0) {
            found = true;
            max_margin = std::max(max_margin, margin);
        }
    }
    CHECK(rep.part_i_passes == part_i);
    CHECK(rep.part_i_passes == rep.rows.size());
    CHECK(rep.part_ii_found == found);
    CHECK(rep.max_out_margin == doctest::Approx(max_margin).epsilon(1e-15));

    SUBCASE("json export round-trips the report fields") {
        auto j = nlohmann::json::parse(lemma_report_to_json(rep));
        CHECK(j["n_train"] == 60);
        CHECK(j["n_test"] == 40);
        CHECK(j["n_noise"] == 3);
        REQUIRE(j["rows"].size() == 3);
        CHECK(j["rows"][0].contains("seed"));
        CHECK(j["rows"][0].contains("in_sample_original"));
        CHECK(j["rows"][0].contains("in_sample_augmented"));
        CHECK(j["rows"][0].contains("out_sample_original"));
        CHECK(j["rows"][0].contains("out_sample_augmented"));
        CHECK(j["part_i_passes"] == rep.part_i_passes);
        CHECK(j["part_ii_found"] == rep.part_ii_found);
        CHECK(j["max_out_margin"].get<double>() ==
              doctest::Approx(rep.max_out_margin));
    }
}

TEST_CASE("warm-start demonstration without extra columns still cannot regress") {
    LemmaReport rep = lemma_demo(30, 20, 0, {5});
    REQUIRE(rep.rows.size() == 1);
    CHECK(rep.part_i_passes == 1);
    CHECK(rep.rows[0].in_sample_augmented <=
          rep.rows[0].in_sample_original + 1e-12);
}

TEST_CASE("warm-start demonstration rejects degenerate sizes") {
    CHECK_THROWS_AS(lemma_demo(9, 50, 2, {1}), ConfigError);
    CHECK_THROWS_AS(lemma_demo(10, 0, 2, {1}), ConfigError);
    CHECK_NOTHROW(lemma_demo(10, 1, 0, {1}));
}

} // TEST_SUITE("evaluation")
