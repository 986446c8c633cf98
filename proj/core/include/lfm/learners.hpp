#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "lfm/data.hpp"

namespace lfm {

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

// Multinomial logistic regression.  weights is C x (d+1) row-major; the last
// column of each row is the intercept.  Probabilities come from a softmax
// over the C linear scores (the binary case is the usual sigmoid expressed
// with two score rows).
struct LinearModel {
    std::vector<std::string> class_labels;
    std::vector<std::string> column_names; // d feature columns
    std::vector<double> weights;           // C * (d+1)

    std::size_t classes() const { return class_labels.size(); }
    std::size_t dims() const { return column_names.size(); }
};

// One hidden layer of logistic units; layer1 is h x (d+1), layer2 is
// C x (h+1), both with trailing intercept columns.
struct MlpModel {
    std::vector<std::string> class_labels;
    std::vector<std::string> column_names;
    std::size_t hidden = 8;
    std::vector<double> layer1; // h * (d+1)
    std::vector<double> layer2; // C * (h+1)

    std::size_t classes() const { return class_labels.size(); }
    std::size_t dims() const { return column_names.size(); }
};

using Model = std::variant<LinearModel, MlpModel>;

enum class Arch { Linear, Mlp };

// ---------------------------------------------------------------------------
// Loss and prediction
// ---------------------------------------------------------------------------

// Mean cross-entropy with probabilities clamped to [eps, 1-eps], eps = 1e-12.
// Binary form: probs[i] is the probability of class 1.
double log_loss(const std::vector<double>& probs, const std::vector<int>& labels);
// Multiclass form: probs is n x C row-major, labels hold class indices.
double log_loss(const std::vector<double>& probs, std::size_t n_classes,
                const std::vector<int>& labels);

std::vector<double> predict_proba(const Model& m, std::span<const double> row);
std::vector<double> predict_proba_all(const Model& m, const EncodedMatrix& data); // n x C

// Objective used by training: mean cross-entropy plus l2 * ||w||^2 where the
// sum excludes every intercept column.
double loss_value(const Model& m, const EncodedMatrix& data, double l2);

// Analytic gradient of loss_value, flattened in parameter order (linear:
// weights; mlp: layer1 then layer2).
std::vector<double> gradient(const Model& m, const EncodedMatrix& data, double l2);

// Max discrepancy between the analytic gradient and central finite
// differences with step h, reported as |a - n| / max(1, |a| + |n|) per
// coordinate.
double grad_check(const Model& m, const EncodedMatrix& data, double h, double l2 = 0.0);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
    double learning_rate = 1.0;
    std::size_t max_epochs = 500;
    double l2 = 0.0;
    double tol = 1e-8; // stop when an accepted step improves loss by less
    std::uint64_t seed = 0;
    std::size_t hidden = 8;                 // mlp only
    std::optional<LinearModel> warm_start;  // linear only
};

struct TrainReport {
    std::vector<double> loss_trajectory; // [initial, after step 1, ...], non-increasing
    std::size_t epochs = 0;
    bool converged = false;

    double initial_loss() const { return loss_trajectory.front(); }
    double final_loss() const { return loss_trajectory.back(); }
};

// Full-batch gradient descent with backtracking step halving: a step is
// accepted only if it does not increase the loss, so the recorded trajectory
// is monotone non-increasing.  Deterministic under (config, data): the mlp
// init is seeded uniform(-0.5, 0.5); the linear init is zeros or the warm
// start.  Throws DataError on empty data or a non-finite loss.
std::pair<Model, TrainReport> train(const EncodedMatrix& data, const TrainConfig& cfg,
                                    Arch arch);

// Zero-padded copy of `m` over a wider column list: columns carried over by
// name keep their weights, new columns start at zero.  Every original column
// must appear in `new_columns`.  Predictions are bit-identical on data whose
// new columns the model thus ignores — the warm-start bridge.
LinearModel widen(const LinearModel& m, const std::vector<std::string>& new_columns);

std::string model_to_json(const Model& m);
Model model_from_json(const std::string& text);
void save_model(const Model& m, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

} // namespace lfm
