#include "lfm/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include "json.hpp"

#include "internal_util.hpp"
#include "lfm/engine.hpp"
#include "lfm/errors.hpp"
#include "lfm/seeds.hpp"

namespace lfm {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

double roc_auc_binary(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw DataError("roc_auc: score/label count mismatch");
    std::size_t pos = 0, neg = 0;
    for (int y : labels) (y == 1 ? pos : neg)++;
    if (pos == 0 || neg == 0) return 0.5;

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    // Sweep thresholds over descending-score tie groups; trapezoid over the
    // ROC polyline.  Equals (concordant + ties/2) / (P*N).
    double area = 0.0;
    double tp = 0, fp = 0, prev_tp = 0, prev_fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            (labels[order[j]] == 1 ? tp : fp)++;
            ++j;
        }
        area += (fp - prev_fp) * (tp + prev_tp) / 2.0;
        prev_tp = tp;
        prev_fp = fp;
        i = j;
    }
    return area / (static_cast<double>(pos) * static_cast<double>(neg));
}

MetricReport metrics(const std::vector<double>& probs, const std::vector<int>& labels,
                     const std::vector<std::string>& class_labels) {
    const std::size_t C = class_labels.size();
    const std::size_t n = labels.size();
    if (C < 2) throw DataError("metrics: need at least two classes");
    if (n == 0 || probs.size() != n * C)
        throw DataError("metrics: probability matrix shape mismatch");
    for (int y : labels)
        if (y < 0 || y >= static_cast<int>(C))
            throw DataError("metrics: label index outside class range");

    MetricReport rep;
    rep.n = n;
    rep.confusion.assign(C, std::vector<int>(C, 0));

    for (std::size_t i = 0; i < n; ++i) {
        std::size_t pred = 0;
        for (std::size_t c = 1; c < C; ++c)
            if (probs[i * C + c] > probs[i * C + pred]) pred = c;
        rep.confusion[static_cast<std::size_t>(labels[i])][pred]++;
    }

    std::size_t correct = 0;
    for (std::size_t c = 0; c < C; ++c) correct += rep.confusion[c][c];
    rep.accuracy = static_cast<double>(correct) / static_cast<double>(n);

    double f1_sum = 0.0, auc_sum = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
        long tp = rep.confusion[c][c], fp = 0, fn = 0;
        for (std::size_t k = 0; k < C; ++k) {
            if (k == c) continue;
            fp += rep.confusion[k][c];
            fn += rep.confusion[c][k];
        }
        double denom = static_cast<double>(2 * tp + fp + fn);
        double f1 = denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
        rep.f1_per_class[class_labels[c]] = f1;
        f1_sum += f1;

        std::vector<double> scores(n);
        std::vector<int> ovr(n);
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = probs[i * C + c];
            ovr[i] = labels[i] == static_cast<int>(c) ? 1 : 0;
        }
        auc_sum += roc_auc_binary(scores, ovr);
    }
    rep.macro_f1 = f1_sum / static_cast<double>(C);
    rep.roc_auc_ovr_macro = auc_sum / static_cast<double>(C);
    return rep;
}

// ---------------------------------------------------------------------------
// Permutation importance
// ---------------------------------------------------------------------------

std::vector<std::pair<std::string, double>>
permutation_importance(const Model& m, const EncodedMatrix& test, std::uint64_t seed,
                       std::size_t repeats) {
    if (repeats == 0) throw ConfigError("permutation_importance: repeats must be >= 1");
    const auto& class_labels =
        std::visit([](const auto& mm) -> const std::vector<std::string>& {
            return mm.class_labels;
        }, m);
    double base = metrics(predict_proba_all(m, test), test.label_indices,
                          class_labels).macro_f1;

    std::vector<std::pair<std::string, double>> out;
    for (const auto& [group, cols] : test.column_groups()) {
        std::mt19937_64 rng(derive_seed(seed, group));
        std::vector<std::size_t> perm(test.rows);
        double drop_sum = 0.0;
        for (std::size_t r = 0; r < repeats; ++r) {
            std::iota(perm.begin(), perm.end(), 0);
            std::shuffle(perm.begin(), perm.end(), rng);
            EncodedMatrix shuffled = test;
            for (std::size_t i = 0; i < test.rows; ++i)
                for (std::size_t c : cols)
                    shuffled.data[i * test.cols + c] = test.at(perm[i], c);
            double mf1 = metrics(predict_proba_all(m, shuffled), test.label_indices,
                                 class_labels).macro_f1;
            drop_sum += base - mf1;
        }
        out.emplace_back(group, drop_sum / static_cast<double>(repeats));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    return out;
}

void write_importance_csv(const std::vector<std::pair<std::string, double>>& ranked,
                          const std::filesystem::path& path) {
    std::string text = "group,delta_macro_f1\n";
    for (const auto& [group, delta] : ranked)
        text += group + "," + detail::format_double(delta) + "\n";
    detail::write_file(path, text);
}

// ---------------------------------------------------------------------------
// Multi-seed comparison
// ---------------------------------------------------------------------------

namespace {

// Recovers one latent map per record through the backend.  Mock backends run
// sequentially; HTTP backends fan out up to max_in_flight worker threads.
// Results land by record index, so the output order is deterministic.
std::vector<std::map<std::string, std::string>>
batch_latents(const Dataset& ds, const ChainProgram& program, const Backend& backend,
              const PromptTemplate& prompt, const ProfileTemplate& profile,
              std::size_t k_shots) {
    const auto specs = program.latent_specs();
    std::vector<std::map<std::string, std::string>> latents(ds.records.size());
    std::vector<std::string> errors(ds.records.size());

    auto work_one = [&](std::size_t i) {
        try {
            const FeatureRecord& rec = ds.records[i];
            std::string user_payload =
                write_profile(rec, profile) + "\n" +
                record_footer(rec, static_cast<std::int64_t>(i));
            auto req = build_prompt(prompt, user_payload, k_shots);
            latents[i] = parse_latents(complete(backend, req), specs);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    };

    int fan_out = 1;
    if (const auto* http = std::get_if<HttpBackend>(&backend))
        fan_out = std::max(1, http->max_in_flight);
    if (fan_out == 1) {
        for (std::size_t i = 0; i < ds.records.size(); ++i) work_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t i = next++; i < ds.records.size(); i = next++) work_one(i);
        };
        std::vector<std::thread> pool;
        for (int t = 0; t < fan_out; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    for (std::size_t i = 0; i < errors.size(); ++i)
        if (!errors[i].empty())
            throw BackendError("record " + std::to_string(i) + ": " + errors[i]);
    return latents;
}

MetricReport evaluate_split(const Dataset& train_ds, const Dataset& test_ds,
                            const TrainConfig& tc, Arch arch, Model* model_out,
                            EncodedMatrix* test_out) {
    EncodedMatrix train_m = encode(train_ds);
    EncodedMatrix test_m = encode(test_ds);
    auto [model, report] = train(train_m, tc, arch);
    (void)report;
    MetricReport rep = metrics(predict_proba_all(model, test_m), test_m.label_indices,
                               test_m.class_labels);
    if (model_out) *model_out = std::move(model);
    if (test_out) *test_out = std::move(test_m);
    return rep;
}

void summarize(ExperimentResult& result) {
    auto collect = [&](const char* key, auto getter) {
        double sum = 0.0;
        for (const auto& r : result.per_seed) sum += getter(r);
        double mean = sum / static_cast<double>(result.per_seed.size());
        double var = 0.0;
        for (const auto& r : result.per_seed) {
            double d = getter(r) - mean;
            var += d * d;
        }
        result.mean[key] = mean;
        result.stddev[key] = std::sqrt(var / static_cast<double>(result.per_seed.size()));
    };
    collect("accuracy", [](const MetricReport& r) { return r.accuracy; });
    collect("macro_f1", [](const MetricReport& r) { return r.macro_f1; });
    collect("roc_auc_ovr_macro", [](const MetricReport& r) { return r.roc_auc_ovr_macro; });
}

} // namespace

ComparisonResult run_comparison(const Dataset& ds, const ChainProgram& program,
                                const Backend& backend, const CompareConfig& cfg) {
    if (cfg.seeds.empty()) throw ConfigError("run_comparison: no seeds");
    if (!(cfg.train_ratio > 0.0 && cfg.train_ratio < 1.0))
        throw ConfigError("run_comparison: train_ratio must be in (0, 1)");

    const auto specs = program.latent_specs();
    auto latents = batch_latents(ds, program, backend, cfg.prompt, cfg.profile,
                                 cfg.k_shots);
    Dataset augmented = augment(ds, latents, specs);

    ComparisonResult result;
    result.without_latents.seeds = cfg.seeds;
    result.with_latents.seeds = cfg.seeds;

    for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
        std::uint64_t seed = cfg.seeds[si];
        TrainConfig tc = cfg.train;
        tc.seed = seed;

        SplitResult raw = split(ds, cfg.train_ratio, seed);
        SplitResult aug = split(augmented, cfg.train_ratio, seed);

        result.without_latents.per_seed.push_back(
            evaluate_split(raw.train, raw.test, tc, cfg.arch, nullptr, nullptr));

        Model first_model;
        EncodedMatrix first_test;
        bool keep = si == 0;
        result.with_latents.per_seed.push_back(
            evaluate_split(aug.train, aug.test, tc, cfg.arch,
                           keep ? &first_model : nullptr,
                           keep ? &first_test : nullptr));
        if (keep)
            result.importance = permutation_importance(first_model, first_test, seed,
                                                       cfg.importance_repeats);
    }

    summarize(result.without_latents);
    summarize(result.with_latents);

    double gain_sum = 0.0;
    for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
        double gain = result.with_latents.per_seed[si].macro_f1 -
                      result.without_latents.per_seed[si].macro_f1;
        gain_sum += gain;
        if (gain > 0) result.seeds_with_positive_gain++;
    }
    result.mean_macro_f1_gain = gain_sum / static_cast<double>(cfg.seeds.size());
    return result;
}

void write_summary_csv(const ComparisonResult& result, const std::filesystem::path& path) {
    std::string text = "arm,seed,accuracy,macro_f1,roc_auc_ovr_macro\n";
    auto emit_arm = [&](const char* arm, const ExperimentResult& r) {
        for (std::size_t i = 0; i < r.per_seed.size(); ++i) {
            const auto& m = r.per_seed[i];
            text += std::string(arm) + "," + std::to_string(r.seeds[i]) + "," +
                    detail::format_double(m.accuracy) + "," +
                    detail::format_double(m.macro_f1) + "," +
                    detail::format_double(m.roc_auc_ovr_macro) + "\n";
        }
        for (const char* row : {"mean", "std"}) {
            const auto& src = row == std::string("mean") ? r.mean : r.stddev;
            text += std::string(arm) + "," + row + "," +
                    detail::format_double(src.at("accuracy")) + "," +
                    detail::format_double(src.at("macro_f1")) + "," +
                    detail::format_double(src.at("roc_auc_ovr_macro")) + "\n";
        }
    };
    emit_arm("without_latents", result.without_latents);
    emit_arm("with_latents", result.with_latents);
    detail::write_file(path, text);
}

std::string comparison_to_json(const ComparisonResult& result) {
    auto arm_json = [](const ExperimentResult& r) {
        json per_seed = json::array();
        for (std::size_t i = 0; i < r.per_seed.size(); ++i) {
            const auto& m = r.per_seed[i];
            per_seed.push_back({{"seed", r.seeds[i]},
                                {"accuracy", m.accuracy},
                                {"macro_f1", m.macro_f1},
                                {"roc_auc_ovr_macro", m.roc_auc_ovr_macro}});
        }
        return json{{"per_seed", per_seed}, {"mean", r.mean}, {"std", r.stddev}};
    };
    json imp = json::array();
    for (const auto& [group, delta] : result.importance)
        imp.push_back({{"group", group}, {"delta_macro_f1", delta}});
    json j{{"without_latents", arm_json(result.without_latents)},
           {"with_latents", arm_json(result.with_latents)},
           {"mean_macro_f1_gain", result.mean_macro_f1_gain},
           {"seeds_with_positive_gain", result.seeds_with_positive_gain},
           {"importance", imp}};
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Warm-start augmentation demonstration
// ---------------------------------------------------------------------------

namespace {

EncodedMatrix make_matrix(std::vector<double> data, std::size_t rows, std::size_t cols,
                          std::vector<std::string> names, std::vector<int> labels) {
    EncodedMatrix m;
    m.rows = rows;
    m.cols = cols;
    m.data = std::move(data);
    m.column_names = std::move(names);
    m.label_indices = std::move(labels);
    m.class_labels = {"neg", "pos"};
    return m;
}

} // namespace

LemmaReport lemma_demo(std::size_t n_train, std::size_t n_test, std::size_t n_noise,
                       const std::vector<std::uint64_t>& seeds) {
    if (n_train < 10) throw ConfigError("lemma_demo: n_train must be at least 10");
    if (n_test == 0) throw ConfigError("lemma_demo: n_test must be at least 1");

    LemmaReport report;
    report.n_train = n_train;
    report.n_test = n_test;
    report.n_noise = n_noise;

    for (std::uint64_t seed : seeds) {
        std::mt19937_64 rng(derive_seed(seed, "noise-demo"));
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::uniform_real_distribution<double> unif(0.0, 1.0);

        auto draw = [&](std::size_t n) {
            std::vector<double> x(n);
            std::vector<int> y(n);
            for (std::size_t i = 0; i < n; ++i) {
                x[i] = gauss(rng);
                double p = 1.0 / (1.0 + std::exp(-2.0 * x[i]));
                y[i] = unif(rng) < p ? 1 : 0;
            }
            return std::pair{x, y};
        };
        auto [x_train, y_train] = draw(n_train);
        auto [x_test, y_test] = draw(n_test);

        EncodedMatrix train_orig =
            make_matrix(x_train, n_train, 1, {"x"}, y_train);
        EncodedMatrix test_orig = make_matrix(x_test, n_test, 1, {"x"}, y_test);

        TrainConfig tc;
        tc.learning_rate = 1.0;
        tc.max_epochs = 2000;
        tc.tol = 1e-10;
        tc.seed = seed;
        auto [m1, rep1] = train(train_orig, tc, Arch::Linear);

        std::vector<std::string> wide_names = {"x"};
        for (std::size_t k = 0; k < n_noise; ++k)
            wide_names.push_back("noise" + std::to_string(k + 1));
        auto widen_data = [&](const std::vector<double>& x, std::size_t n) {
            std::vector<double> d(n * (1 + n_noise));
            for (std::size_t i = 0; i < n; ++i) {
                d[i * (1 + n_noise)] = x[i];
                for (std::size_t k = 0; k < n_noise; ++k)
                    d[i * (1 + n_noise) + 1 + k] = gauss(rng);
            }
            return d;
        };
        EncodedMatrix train_aug = make_matrix(widen_data(x_train, n_train), n_train,
                                              1 + n_noise, wide_names, y_train);
        EncodedMatrix test_aug = make_matrix(widen_data(x_test, n_test), n_test,
                                             1 + n_noise, wide_names, y_test);

        TrainConfig tc2 = tc;
        tc2.warm_start = std::get<LinearModel>(m1);
        if (n_noise > 0) tc2.warm_start = widen(*tc2.warm_start, wide_names);
        auto [m2, rep2] = train(train_aug, tc2, Arch::Linear);

        LemmaSeedRow row;
        row.seed = seed;
        row.in_sample_original = rep1.final_loss();
        row.in_sample_augmented = rep2.final_loss();
        row.out_sample_original = loss_value(m1, test_orig, 0.0);
        row.out_sample_augmented = loss_value(m2, test_aug, 0.0);
        report.rows.push_back(row);

        if (row.in_sample_augmented <= row.in_sample_original + 1e-12)
            report.part_i_passes++;
        double margin = row.out_sample_augmented - row.out_sample_original;
        if (margin > 0) {
            report.part_ii_found = true;
            report.max_out_margin = std::max(report.max_out_margin, margin);
        }
    }
    return report;
}

std::string lemma_report_to_json(const LemmaReport& report) {
    json rows = json::array();
    for (const auto& r : report.rows)
        rows.push_back({{"seed", r.seed},
                        {"in_sample_original", r.in_sample_original},
                        {"in_sample_augmented", r.in_sample_augmented},
                        {"out_sample_original", r.out_sample_original},
                        {"out_sample_augmented", r.out_sample_augmented}});
    json j{{"n_train", report.n_train},
           {"n_test", report.n_test},
           {"n_noise", report.n_noise},
           {"rows", rows},
           {"part_i_passes", report.part_i_passes},
           {"part_ii_found", report.part_ii_found},
           {"max_out_margin", report.max_out_margin}};
    return j.dump(2) + "\n";
}

} // namespace lfm
