#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lfm/backend.hpp"
#include "lfm/chain.hpp"
#include "lfm/data.hpp"
#include "lfm/learners.hpp"
#include "lfm/narrative.hpp"

namespace lfm {

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct MetricReport {
    double accuracy = 0.0;
    std::map<std::string, double> f1_per_class;
    double macro_f1 = 0.0;
    double roc_auc_ovr_macro = 0.0;
    std::vector<std::vector<int>> confusion; // rows = true class, cols = predicted
    std::size_t n = 0;
};

// probs is row-major n x C; labels are class indices.  Accuracy via argmax
// (ties -> lowest class index); F1_c = 2TP/(2TP+FP+FN), 0 when the
// denominator is 0; AUC is one-vs-rest trapezoidal with midpoint tie
// handling, macro-averaged; a class with no positives or no negatives
// contributes 0.5.  Throws DataError on shape mismatch.
MetricReport metrics(const std::vector<double>& probs,
                     const std::vector<int>& labels,
                     const std::vector<std::string>& class_labels);

// Binary trapezoidal ROC AUC over (score, label in {0,1}) pairs; equals the
// pair-counting estimator (concordant + ties/2) / (P*N).  Degenerate inputs
// (no positives or no negatives) return 0.5.
double roc_auc_binary(const std::vector<double>& scores, const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// Permutation importance
// ---------------------------------------------------------------------------

// Shuffles each original-feature column group (all one-hot columns of one
// feature together) on the test set and reports the mean macro-F1 drop over
// `repeats` permutations, sorted descending (ties by group name).
std::vector<std::pair<std::string, double>>
permutation_importance(const Model& m, const EncodedMatrix& test, std::uint64_t seed,
                       std::size_t repeats);

void write_importance_csv(const std::vector<std::pair<std::string, double>>& ranked,
                          const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Multi-seed experiments
// ---------------------------------------------------------------------------

struct ExperimentResult {
    std::vector<std::uint64_t> seeds;
    std::vector<MetricReport> per_seed;
    std::map<std::string, double> mean;   // accuracy / macro_f1 / roc_auc_ovr_macro
    std::map<std::string, double> stddev; // population std of the same keys
};

struct CompareConfig {
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    double train_ratio = 0.8;
    TrainConfig train;
    Arch arch = Arch::Linear;
    PromptTemplate prompt;
    ProfileTemplate profile;
    std::size_t k_shots = 0;
    std::size_t importance_repeats = 5;
};

struct ComparisonResult {
    ExperimentResult without_latents;
    ExperimentResult with_latents;
    // Permutation importance of the first seed's with-latents model.
    std::vector<std::pair<std::string, double>> importance;
    double mean_macro_f1_gain = 0.0;
    std::size_t seeds_with_positive_gain = 0;
};

// Recovers latents for every record through the backend (profile -> prompt ->
// completion -> parsed latents), then for each seed splits train/test, trains
// f(X) and f(X, Z-hat) identically, and reports both arms.  With an empty
// latent schema both arms are bitwise identical.
ComparisonResult run_comparison(const Dataset& ds, const ChainProgram& program,
                                const Backend& backend, const CompareConfig& cfg);

// One row per (arm, seed) plus mean/std rows per arm.
void write_summary_csv(const ComparisonResult& result, const std::filesystem::path& path);
std::string comparison_to_json(const ComparisonResult& result);

// ---------------------------------------------------------------------------
// Warm-start augmentation demonstration
// ---------------------------------------------------------------------------

struct LemmaSeedRow {
    std::uint64_t seed = 0;
    double in_sample_original = 0.0;
    double in_sample_augmented = 0.0;
    double out_sample_original = 0.0;
    double out_sample_augmented = 0.0;
};

struct LemmaReport {
    std::size_t n_train = 0, n_test = 0, n_noise = 0;
    std::vector<LemmaSeedRow> rows;
    std::size_t part_i_passes = 0;  // in_aug <= in_orig + 1e-12
    bool part_ii_found = false;     // some seed with out_aug > out_orig
    double max_out_margin = 0.0;    // max over seeds of out_aug - out_orig
};

// Per seed: one informative feature x ~ N(0,1), y ~ Bernoulli(sigmoid(2x));
// fit the restricted model, append n_noise independent N(0,1) columns,
// warm-start the widened model and refit; record in/out-of-sample losses.
LemmaReport lemma_demo(std::size_t n_train, std::size_t n_test, std::size_t n_noise,
                       const std::vector<std::uint64_t>& seeds);

std::string lemma_report_to_json(const LemmaReport& report);

} // namespace lfm
