#include "lfm/learners.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "json.hpp"

#include "internal_util.hpp"
#include "lfm/errors.hpp"

namespace lfm {

using nlohmann::json;

namespace {

constexpr double kProbEps = 1e-12;

double clamp_prob(double p) { return std::clamp(p, kProbEps, 1.0 - kProbEps); }

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void softmax_inplace(std::vector<double>& scores) {
    double m = *std::max_element(scores.begin(), scores.end());
    double sum = 0.0;
    for (double& s : scores) {
        s = std::exp(s - m);
        sum += s;
    }
    for (double& s : scores) s /= sum;
}

void check_data(const EncodedMatrix& data) {
    if (data.rows == 0) throw DataError("empty training data");
    if (data.class_labels.size() < 2)
        throw DataError("need at least two classes, got " +
                        std::to_string(data.class_labels.size()));
    for (int y : data.label_indices)
        if (y < 0 || y >= static_cast<int>(data.class_labels.size()))
            throw DataError("label index outside class range");
}

// --- flat parameter access (shared by gradient checking and training) ------

std::vector<double> get_params(const Model& m) {
    if (const auto* lin = std::get_if<LinearModel>(&m)) return lin->weights;
    const auto& mlp = std::get<MlpModel>(m);
    std::vector<double> p = mlp.layer1;
    p.insert(p.end(), mlp.layer2.begin(), mlp.layer2.end());
    return p;
}

void set_params(Model& m, const std::vector<double>& p) {
    if (auto* lin = std::get_if<LinearModel>(&m)) {
        lin->weights = p;
        return;
    }
    auto& mlp = std::get<MlpModel>(m);
    std::copy(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(mlp.layer1.size()),
              mlp.layer1.begin());
    std::copy(p.begin() + static_cast<std::ptrdiff_t>(mlp.layer1.size()), p.end(),
              mlp.layer2.begin());
}

// Squared norm of non-intercept weights (the l2 term never sees intercepts).
double reg_norm2(const Model& m) {
    double s = 0.0;
    if (const auto* lin = std::get_if<LinearModel>(&m)) {
        std::size_t stride = lin->dims() + 1;
        for (std::size_t c = 0; c < lin->classes(); ++c)
            for (std::size_t j = 0; j + 1 < stride; ++j) {
                double w = lin->weights[c * stride + j];
                s += w * w;
            }
        return s;
    }
    const auto& mlp = std::get<MlpModel>(m);
    std::size_t s1 = mlp.dims() + 1;
    for (std::size_t k = 0; k < mlp.hidden; ++k)
        for (std::size_t j = 0; j + 1 < s1; ++j) {
            double w = mlp.layer1[k * s1 + j];
            s += w * w;
        }
    std::size_t s2 = mlp.hidden + 1;
    for (std::size_t c = 0; c < mlp.classes(); ++c)
        for (std::size_t k = 0; k + 1 < s2; ++k) {
            double w = mlp.layer2[c * s2 + k];
            s += w * w;
        }
    return s;
}

} // namespace

// ---------------------------------------------------------------------------
// Loss / prediction
// ---------------------------------------------------------------------------

double log_loss(const std::vector<double>& probs, const std::vector<int>& labels) {
    if (probs.size() != labels.size())
        throw DataError("log_loss: probability/label count mismatch");
    if (probs.empty()) throw DataError("log_loss: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        double p = clamp_prob(probs[i]);
        sum += labels[i] == 1 ? std::log(p) : std::log1p(-p);
    }
    return -sum / static_cast<double>(probs.size());
}

double log_loss(const std::vector<double>& probs, std::size_t n_classes,
                const std::vector<int>& labels) {
    if (n_classes == 0 || labels.empty() || probs.size() != labels.size() * n_classes)
        throw DataError("log_loss: shape mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        sum += std::log(clamp_prob(probs[i * n_classes + labels[i]]));
    return -sum / static_cast<double>(labels.size());
}

std::vector<double> predict_proba(const Model& m, std::span<const double> row) {
    if (const auto* lin = std::get_if<LinearModel>(&m)) {
        std::size_t d = lin->dims();
        if (row.size() != d) throw DataError("predict_proba: column count mismatch");
        std::size_t stride = d + 1;
        std::vector<double> scores(lin->classes());
        for (std::size_t c = 0; c < lin->classes(); ++c) {
            double s = lin->weights[c * stride + d]; // intercept
            for (std::size_t j = 0; j < d; ++j)
                s += lin->weights[c * stride + j] * row[j];
            scores[c] = s;
        }
        softmax_inplace(scores);
        return scores;
    }
    const auto& mlp = std::get<MlpModel>(m);
    std::size_t d = mlp.dims();
    if (row.size() != d) throw DataError("predict_proba: column count mismatch");
    std::size_t s1 = d + 1;
    std::vector<double> hidden(mlp.hidden);
    for (std::size_t k = 0; k < mlp.hidden; ++k) {
        double z = mlp.layer1[k * s1 + d];
        for (std::size_t j = 0; j < d; ++j) z += mlp.layer1[k * s1 + j] * row[j];
        hidden[k] = sigmoid(z);
    }
    std::size_t s2 = mlp.hidden + 1;
    std::vector<double> scores(mlp.classes());
    for (std::size_t c = 0; c < mlp.classes(); ++c) {
        double s = mlp.layer2[c * s2 + mlp.hidden];
        for (std::size_t k = 0; k < mlp.hidden; ++k)
            s += mlp.layer2[c * s2 + k] * hidden[k];
        scores[c] = s;
    }
    softmax_inplace(scores);
    return scores;
}

std::vector<double> predict_proba_all(const Model& m, const EncodedMatrix& data) {
    std::size_t C = std::visit([](const auto& mm) { return mm.classes(); }, m);
    std::vector<double> out;
    out.reserve(data.rows * C);
    for (std::size_t r = 0; r < data.rows; ++r) {
        auto p = predict_proba(m, data.row(r));
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

double loss_value(const Model& m, const EncodedMatrix& data, double l2) {
    check_data(data);
    auto probs = predict_proba_all(m, data);
    std::size_t C = std::visit([](const auto& mm) { return mm.classes(); }, m);
    return log_loss(probs, C, data.label_indices) + l2 * reg_norm2(m);
}

// ---------------------------------------------------------------------------
// Gradient
// ---------------------------------------------------------------------------

std::vector<double> gradient(const Model& m, const EncodedMatrix& data, double l2) {
    check_data(data);
    const double inv_n = 1.0 / static_cast<double>(data.rows);

    if (const auto* lin = std::get_if<LinearModel>(&m)) {
        std::size_t d = lin->dims(), C = lin->classes(), stride = d + 1;
        std::vector<double> g(lin->weights.size(), 0.0);
        for (std::size_t r = 0; r < data.rows; ++r) {
            auto row = data.row(r);
            auto p = predict_proba(m, row);
            p[static_cast<std::size_t>(data.label_indices[r])] -= 1.0;
            for (std::size_t c = 0; c < C; ++c) {
                double coeff = p[c] * inv_n;
                for (std::size_t j = 0; j < d; ++j) g[c * stride + j] += coeff * row[j];
                g[c * stride + d] += coeff;
            }
        }
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t j = 0; j < d; ++j)
                g[c * stride + j] += 2.0 * l2 * lin->weights[c * stride + j];
        return g;
    }

    const auto& mlp = std::get<MlpModel>(m);
    std::size_t d = mlp.dims(), C = mlp.classes(), h = mlp.hidden;
    std::size_t s1 = d + 1, s2 = h + 1;
    std::vector<double> g1(mlp.layer1.size(), 0.0), g2(mlp.layer2.size(), 0.0);
    std::vector<double> hidden(h), dscore(C), dhidden(h);

    for (std::size_t r = 0; r < data.rows; ++r) {
        auto row = data.row(r);
        for (std::size_t k = 0; k < h; ++k) {
            double z = mlp.layer1[k * s1 + d];
            for (std::size_t j = 0; j < d; ++j) z += mlp.layer1[k * s1 + j] * row[j];
            hidden[k] = sigmoid(z);
        }
        std::vector<double> scores(C);
        for (std::size_t c = 0; c < C; ++c) {
            double s = mlp.layer2[c * s2 + h];
            for (std::size_t k = 0; k < h; ++k) s += mlp.layer2[c * s2 + k] * hidden[k];
            scores[c] = s;
        }
        softmax_inplace(scores);
        for (std::size_t c = 0; c < C; ++c)
            dscore[c] = (scores[c] - (data.label_indices[r] == static_cast<int>(c)
                                          ? 1.0 : 0.0)) * inv_n;
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t k = 0; k < h; ++k) g2[c * s2 + k] += dscore[c] * hidden[k];
            g2[c * s2 + h] += dscore[c];
        }
        for (std::size_t k = 0; k < h; ++k) {
            double da = 0.0;
            for (std::size_t c = 0; c < C; ++c) da += dscore[c] * mlp.layer2[c * s2 + k];
            dhidden[k] = da * hidden[k] * (1.0 - hidden[k]);
        }
        for (std::size_t k = 0; k < h; ++k) {
            for (std::size_t j = 0; j < d; ++j) g1[k * s1 + j] += dhidden[k] * row[j];
            g1[k * s1 + d] += dhidden[k];
        }
    }
    for (std::size_t k = 0; k < h; ++k)
        for (std::size_t j = 0; j < d; ++j)
            g1[k * s1 + j] += 2.0 * l2 * mlp.layer1[k * s1 + j];
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t k = 0; k < h; ++k)
            g2[c * s2 + k] += 2.0 * l2 * mlp.layer2[c * s2 + k];

    g1.insert(g1.end(), g2.begin(), g2.end());
    return g1;
}

double grad_check(const Model& m, const EncodedMatrix& data, double h, double l2) {
    auto analytic = gradient(m, data, l2);
    auto params = get_params(m);
    Model probe = m;
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        double orig = params[i];
        params[i] = orig + h;
        set_params(probe, params);
        double up = loss_value(probe, data, l2);
        params[i] = orig - h;
        set_params(probe, params);
        double down = loss_value(probe, data, l2);
        params[i] = orig;
        double numeric = (up - down) / (2.0 * h);
        double err = std::abs(analytic[i] - numeric) /
                     std::max(1.0, std::abs(analytic[i]) + std::abs(numeric));
        worst = std::max(worst, err);
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

Model init_model(const EncodedMatrix& data, const TrainConfig& cfg, Arch arch) {
    if (arch == Arch::Linear) {
        LinearModel m;
        m.class_labels = data.class_labels;
        m.column_names = data.column_names;
        if (cfg.warm_start) {
            if (cfg.warm_start->column_names != data.column_names)
                throw ConfigError("warm start columns do not match the data "
                                  "(widen the model first)");
            if (cfg.warm_start->class_labels != data.class_labels)
                throw ConfigError("warm start classes do not match the data");
            m.weights = cfg.warm_start->weights;
        } else {
            m.weights.assign(data.class_labels.size() * (data.cols + 1), 0.0);
        }
        return m;
    }
    MlpModel m;
    m.class_labels = data.class_labels;
    m.column_names = data.column_names;
    m.hidden = std::max<std::size_t>(1, cfg.hidden);
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> dist(-0.5, 0.5);
    m.layer1.resize(m.hidden * (data.cols + 1));
    m.layer2.resize(data.class_labels.size() * (m.hidden + 1));
    for (double& w : m.layer1) w = dist(rng);
    for (double& w : m.layer2) w = dist(rng);
    return m;
}

} // namespace

std::pair<Model, TrainReport> train(const EncodedMatrix& data, const TrainConfig& cfg,
                                    Arch arch) {
    check_data(data);
    if (cfg.learning_rate <= 0) throw ConfigError("learning_rate must be positive");
    if (cfg.warm_start && arch != Arch::Linear)
        throw ConfigError("warm start is only supported for the linear model");

    Model m = init_model(data, cfg, arch);
    TrainReport report;
    double loss = loss_value(m, data, cfg.l2);
    if (!std::isfinite(loss)) throw DataError("non-finite initial loss");
    report.loss_trajectory.push_back(loss);

    auto params = get_params(m);
    double lr = cfg.learning_rate;
    Model trial = m;

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        auto grad = gradient(m, data, cfg.l2);
        bool accepted = false;
        double trial_lr = lr;
        double trial_loss = loss;
        std::vector<double> trial_params(params.size());
        for (int halvings = 0; halvings < 60; ++halvings) {
            for (std::size_t i = 0; i < params.size(); ++i)
                trial_params[i] = params[i] - trial_lr * grad[i];
            set_params(trial, trial_params);
            trial_loss = loss_value(trial, data, cfg.l2);
            if (std::isfinite(trial_loss) && trial_loss <= loss) {
                accepted = true;
                break;
            }
            trial_lr *= 0.5;
        }
        if (!accepted) {
            report.converged = true; // no descent step exists at any tried scale
            break;
        }
        params = trial_params;
        set_params(m, params);
        double improvement = loss - trial_loss;
        loss = trial_loss;
        report.loss_trajectory.push_back(loss);
        report.epochs = epoch + 1;
        lr = std::min(trial_lr * 2.0, cfg.learning_rate); // recover after backtracking
        if (improvement < cfg.tol) {
            report.converged = true;
            break;
        }
    }
    return {std::move(m), report};
}

LinearModel widen(const LinearModel& m, const std::vector<std::string>& new_columns) {
    LinearModel out;
    out.class_labels = m.class_labels;
    out.column_names = new_columns;
    std::size_t old_stride = m.dims() + 1, new_stride = new_columns.size() + 1;
    out.weights.assign(m.classes() * new_stride, 0.0);

    std::vector<std::ptrdiff_t> where(m.dims(), -1);
    for (std::size_t j = 0; j < m.dims(); ++j) {
        auto it = std::find(new_columns.begin(), new_columns.end(), m.column_names[j]);
        if (it == new_columns.end())
            throw ConfigError("widen: column disappeared: " + m.column_names[j]);
        where[j] = it - new_columns.begin();
    }
    for (std::size_t c = 0; c < m.classes(); ++c) {
        for (std::size_t j = 0; j < m.dims(); ++j)
            out.weights[c * new_stride + static_cast<std::size_t>(where[j])] =
                m.weights[c * old_stride + j];
        out.weights[c * new_stride + new_columns.size()] =
            m.weights[c * old_stride + m.dims()]; // intercept
    }
    return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

json matrix_to_json(const std::vector<double>& flat, std::size_t rows, std::size_t cols) {
    json out = json::array();
    for (std::size_t r = 0; r < rows; ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < cols; ++c) row.push_back(flat[r * cols + c]);
        out.push_back(std::move(row));
    }
    return out;
}

std::vector<double> matrix_from_json(const json& j, std::size_t rows, std::size_t cols,
                                     const std::string& what) {
    if (j.size() != rows) throw DataError("model JSON: bad row count in " + what);
    std::vector<double> flat;
    flat.reserve(rows * cols);
    for (const auto& row : j) {
        if (row.size() != cols) throw DataError("model JSON: bad column count in " + what);
        for (const auto& v : row) flat.push_back(v.get<double>());
    }
    return flat;
}

} // namespace

std::string model_to_json(const Model& m) {
    json j;
    if (const auto* lin = std::get_if<LinearModel>(&m)) {
        j["arch"] = "linear";
        j["class_labels"] = lin->class_labels;
        j["column_names"] = lin->column_names;
        j["weights"] = matrix_to_json(lin->weights, lin->classes(), lin->dims() + 1);
    } else {
        const auto& mlp = std::get<MlpModel>(m);
        j["arch"] = "mlp";
        j["class_labels"] = mlp.class_labels;
        j["column_names"] = mlp.column_names;
        j["hidden"] = mlp.hidden;
        j["weights"] = {
            {"layer1", matrix_to_json(mlp.layer1, mlp.hidden, mlp.dims() + 1)},
            {"layer2", matrix_to_json(mlp.layer2, mlp.classes(), mlp.hidden + 1)}};
    }
    return j.dump(2) + "\n";
}

Model model_from_json(const std::string& text) {
    try {
        json j = json::parse(text);
        std::string arch = j.at("arch").get<std::string>();
        if (arch == "linear") {
            LinearModel m;
            m.class_labels = j.at("class_labels").get<std::vector<std::string>>();
            m.column_names = j.at("column_names").get<std::vector<std::string>>();
            m.weights = matrix_from_json(j.at("weights"), m.classes(), m.dims() + 1,
                                         "weights");
            return m;
        }
        if (arch == "mlp") {
            MlpModel m;
            m.class_labels = j.at("class_labels").get<std::vector<std::string>>();
            m.column_names = j.at("column_names").get<std::vector<std::string>>();
            m.hidden = j.at("hidden").get<std::size_t>();
            m.layer1 = matrix_from_json(j.at("weights").at("layer1"), m.hidden,
                                        m.dims() + 1, "layer1");
            m.layer2 = matrix_from_json(j.at("weights").at("layer2"), m.classes(),
                                        m.hidden + 1, "layer2");
            return m;
        }
        throw DataError("model JSON: unknown arch: " + arch);
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed model JSON: ") + e.what());
    }
}

void save_model(const Model& m, const std::filesystem::path& path) {
    detail::write_file(path, model_to_json(m));
}

Model load_model(const std::filesystem::path& path) {
    return model_from_json(detail::read_file(path));
}

} // namespace lfm
