// lfm: command-line front end for the latent-feature-mining pipeline.
//
// Subcommands cover the full loop: check/pretty-print chain programs, render
// profiles, run batch inference, enlarge the rationale corpus with QC, export
// fine-tune data, align prompt templates, generate synthetic datasets, train
// and compare classifiers, run the warm-start augmentation demo, and scan
// text artifacts against a blocklist.
//
// Exit codes: 0 success, 1 usage/config error, 2 data/validation error,
// 3 backend/IO failure.  Errors also emit one JSON object on stderr:
//   {"error":{"kind":"...","message":"..."}}

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "lfm/backend.hpp"
#include "lfm/chain.hpp"
#include "lfm/data.hpp"
#include "lfm/engine.hpp"
#include "lfm/errors.hpp"
#include "lfm/evaluation.hpp"
#include "lfm/learners.hpp"
#include "lfm/narrative.hpp"
#include "lfm/presets.hpp"
#include "lfm/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Small IO helpers
// ---------------------------------------------------------------------------

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw lfm::IoError("cannot open for reading: " + path.string());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw lfm::IoError("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw lfm::IoError("write failed: " + path.string());
}

void emit_error(const std::string& kind, const std::string& message) {
    json j{{"error", {{"kind", kind}, {"message", message}}}};
    std::cerr << j.dump() << "\n";
}

void note_artifact(const fs::path& path) { std::cout << "wrote " << path.string() << "\n"; }

// ---------------------------------------------------------------------------
// Config + flag merging (flags win over config keys, which win over defaults)
// ---------------------------------------------------------------------------

json g_config = json::object();

void load_config(const std::string& path) {
    if (path.empty()) return;
    try {
        g_config = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw lfm::ConfigError("config " + path + ": " + e.what());
    }
    if (!g_config.is_object()) throw lfm::ConfigError("config must be a JSON object");
}

template <class T>
T pick(const CLI::Option* opt, const T& flag_value, const char* key, T fallback) {
    if (opt != nullptr && opt->count() > 0) return flag_value;
    if (g_config.contains(key)) {
        try {
            return g_config.at(key).get<T>();
        } catch (const json::exception& e) {
            throw lfm::ConfigError(std::string("config key '") + key + "': " + e.what());
        }
    }
    return fallback;
}

std::string pick_required(const CLI::Option* opt, const std::string& flag_value,
                          const char* key) {
    std::string v = pick<std::string>(opt, flag_value, key, "");
    if (v.empty())
        throw lfm::ConfigError(std::string("missing required setting '") + key +
                               "' (pass the flag or set the config key)");
    return v;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        seeds.push_back(std::stoull(item));
    }
    if (seeds.empty()) throw lfm::ConfigError("empty seed list");
    return seeds;
}

// "--seeds 5" means seeds 1..5; "--seeds 3,9,27" is an explicit list.
std::vector<std::uint64_t> expand_seeds(const std::string& text) {
    if (text.find(',') != std::string::npos) return parse_seed_list(text);
    std::uint64_t count = std::stoull(text);
    if (count == 0) throw lfm::ConfigError("seed count must be at least 1");
    std::vector<std::uint64_t> seeds(count);
    for (std::uint64_t i = 0; i < count; ++i) seeds[i] = i + 1;
    return seeds;
}

// ---------------------------------------------------------------------------
// Shared option bundles
// ---------------------------------------------------------------------------

struct CommonOpts {
    std::string config_path;
    std::string out_dir = ".";
    CLI::Option* out_opt = nullptr;

    fs::path out(const std::string& name) const {
        fs::path dir = pick<std::string>(out_opt, out_dir, "out", ".");
        fs::create_directories(dir);
        return dir / name;
    }
};

struct BackendOpts {
    std::string kind = "mock";
    std::string endpoint;
    std::string model = "default";
    std::string auth_env = "LFM_API_TOKEN";
    int timeout_ms = 30000;
    int max_retries = 2;
    int backoff_ms = 200;
    int max_in_flight = 4;
    CLI::Option *kind_opt = nullptr, *endpoint_opt = nullptr, *model_opt = nullptr,
                *auth_opt = nullptr, *timeout_opt = nullptr, *retries_opt = nullptr,
                *backoff_opt = nullptr, *inflight_opt = nullptr;

    void attach(CLI::App* cmd) {
        kind_opt = cmd->add_option("--backend", kind, "Backend: mock or http");
        endpoint_opt = cmd->add_option("--endpoint", endpoint,
                                       "HTTP chat-completion endpoint URL");
        model_opt = cmd->add_option("--model", model, "Model name sent to the endpoint");
        auth_opt = cmd->add_option("--auth-env", auth_env,
                                   "Environment variable holding the bearer token");
        timeout_opt = cmd->add_option("--timeout-ms", timeout_ms, "HTTP timeout");
        retries_opt = cmd->add_option("--max-retries", max_retries,
                                      "Retries on timeout/5xx");
        backoff_opt = cmd->add_option("--backoff-ms", backoff_ms, "Initial retry backoff");
        inflight_opt = cmd->add_option("--max-in-flight", max_in_flight,
                                       "Parallel request cap for batch calls");
    }

    lfm::Backend make(const lfm::ChainProgram& program,
                      const lfm::RationaleStyle& style) const {
        std::string k = pick<std::string>(kind_opt, kind, "backend", "mock");
        if (k == "mock") {
            lfm::MockBackend mock{program, style, {}};
            if (g_config.contains("failure_script"))
                for (const auto& id : g_config.at("failure_script"))
                    mock.failure_script.insert(id.get<std::int64_t>());
            return mock;
        }
        if (k == "http") {
            lfm::HttpBackend http;
            http.endpoint = pick_required(endpoint_opt, endpoint, "endpoint");
            http.model = pick<std::string>(model_opt, model, "model", "default");
            http.auth_token_env = pick<std::string>(auth_opt, auth_env, "auth_token_env",
                                                    "LFM_API_TOKEN");
            http.timeout_ms = pick(timeout_opt, timeout_ms, "timeout_ms", 30000);
            http.retry.max_retries = pick(retries_opt, max_retries, "max_retries", 2);
            http.retry.backoff_ms = pick(backoff_opt, backoff_ms, "backoff_ms", 200);
            http.max_in_flight = pick(inflight_opt, max_in_flight, "max_in_flight", 4);
            return http;
        }
        throw lfm::ConfigError("unknown backend kind: " + k + " (use mock or http)");
    }
};

// Resolves pipeline assets from explicit paths, falling back to a preset.
struct AssetOpts {
    std::string preset, schema_path, program_path, style_path, prompt_path,
        profile_path;
    CLI::Option *preset_opt = nullptr, *schema_opt = nullptr, *program_opt = nullptr,
                *style_opt = nullptr, *prompt_opt = nullptr, *profile_opt = nullptr;

    void attach(CLI::App* cmd) {
        preset_opt = cmd->add_option("--preset", preset,
                                     "Built-in bundle: diversion or discharge");
        schema_opt = cmd->add_option("--schema", schema_path, "Feature schema JSON");
        program_opt = cmd->add_option("--program", program_path, "Chain program source");
        style_opt = cmd->add_option("--style", style_path, "Rationale style JSON");
        prompt_opt = cmd->add_option("--prompt", prompt_path, "Prompt template JSON");
        profile_opt = cmd->add_option("--profile-template", profile_path,
                                      "Profile pattern text file");
    }

    const lfm::Preset* find() const {
        std::string name = pick<std::string>(preset_opt, preset, "preset", "");
        if (name.empty()) return nullptr;
        const lfm::Preset* p = lfm::find_preset(name);
        if (!p) throw lfm::ConfigError("unknown preset: " + name);
        return p;
    }

    lfm::FeatureSchema schema() const {
        std::string path = pick<std::string>(schema_opt, schema_path, "schema", "");
        if (!path.empty()) return lfm::load_schema(path);
        if (const auto* p = find()) return p->schema;
        throw lfm::ConfigError("missing schema: pass --schema or --preset");
    }

    lfm::ChainProgram program(bool must_validate = true) const {
        std::string path = pick<std::string>(program_opt, program_path, "program", "");
        lfm::ChainProgram prog;
        if (!path.empty()) {
            prog = lfm::load_chain(path);
        } else if (const auto* p = find()) {
            prog = p->program;
        } else {
            throw lfm::ConfigError("missing program: pass --program or --preset");
        }
        if (must_validate) {
            auto report = lfm::validate(prog);
            if (!report.valid())
                throw lfm::DataError("program failed validation:\n" + report.to_string());
        }
        return prog;
    }

    lfm::RationaleStyle style() const {
        std::string path = pick<std::string>(style_opt, style_path, "style", "");
        if (!path.empty()) return lfm::style_from_json(read_file(path));
        if (const auto* p = find()) return p->style;
        throw lfm::ConfigError("missing style: pass --style or --preset");
    }

    lfm::PromptTemplate prompt() const {
        std::string path = pick<std::string>(prompt_opt, prompt_path, "prompt", "");
        if (!path.empty()) return lfm::prompt_template_from_json(read_file(path));
        if (const auto* p = find()) return p->prompt;
        throw lfm::ConfigError("missing prompt template: pass --prompt or --preset");
    }

    lfm::ProfileTemplate profile(int sentence_limit = 0) const {
        std::string path = pick<std::string>(profile_opt, profile_path,
                                             "profile_template", "");
        if (!path.empty()) {
            std::string pattern = read_file(path);
            while (!pattern.empty() && (pattern.back() == '\n' || pattern.back() == '\r'))
                pattern.pop_back();
            return lfm::ProfileTemplate::parse(pattern, sentence_limit);
        }
        if (const auto* p = find()) {
            lfm::ProfileTemplate t = p->profile;
            t.sentence_limit = sentence_limit;
            return t;
        }
        throw lfm::ConfigError("missing profile template: pass --profile-template "
                               "or --preset");
    }
};

lfm::Dataset load_data(const CLI::Option* opt, const std::string& flag_value,
                       const lfm::FeatureSchema& schema) {
    std::string path = pick_required(opt, flag_value, "data");
    return lfm::load_csv(path, schema);
}

lfm::Arch parse_arch(const std::string& text) {
    if (text == "linear") return lfm::Arch::Linear;
    if (text == "mlp") return lfm::Arch::Mlp;
    throw lfm::ConfigError("unknown arch: " + text + " (use linear or mlp)");
}

// ---------------------------------------------------------------------------
// Latent sidecar CSV (written by gen, readable by train --latents)
// ---------------------------------------------------------------------------

void write_latents_csv(const std::vector<std::map<std::string, std::string>>& latents,
                       const std::vector<lfm::LatentSpec>& specs, const fs::path& path) {
    std::string text;
    for (std::size_t i = 0; i < specs.size(); ++i)
        text += (i ? "," : "") + lfm::csv_escape(specs[i].name);
    text += "\n";
    for (const auto& row : latents) {
        for (std::size_t i = 0; i < specs.size(); ++i) {
            auto it = row.find(specs[i].name);
            text += (i ? "," : "") +
                    lfm::csv_escape(it == row.end() ? std::string{} : it->second);
        }
        text += "\n";
    }
    write_file(path, text);
}

std::vector<std::map<std::string, std::string>>
read_latents_csv(const fs::path& path, const std::vector<lfm::LatentSpec>& specs) {
    auto rows = lfm::read_csv_rows(path);
    if (rows.empty()) throw lfm::DataError(path.string() + ": missing header row");
    const auto& header = rows.front();
    std::vector<std::map<std::string, std::string>> out;
    out.reserve(rows.size() - 1);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != header.size())
            throw lfm::DataError(path.string() + ": row " + std::to_string(r + 1) +
                                 ": field count mismatch");
        std::map<std::string, std::string> m;
        for (std::size_t c = 0; c < header.size(); ++c) m[header[c]] = rows[r][c];
        out.push_back(std::move(m));
    }
    (void)specs;
    return out;
}

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

void cmd_check(const AssetOpts& assets, bool print_canonical) {
    lfm::ChainProgram prog = assets.program(false);
    auto report = lfm::validate(prog);
    if (!report.valid())
        throw lfm::DataError("program failed validation:\n" + report.to_string());
    if (print_canonical) {
        std::cout << lfm::pretty_print(prog);
        return;
    }
    std::size_t rules = 0;
    for (const auto& st : prog.stages) rules += st.rules.size();
    std::cout << "valid\n";
    std::cout << "stages: " << prog.stages.size() << ", rules: " << rules
              << ", latents: " << prog.latent_specs().size()
              << ", bins: " << prog.bins.size() << "\n";
}

void cmd_profile(const CommonOpts& common, const AssetOpts& assets,
                 const CLI::Option* data_opt, const std::string& data_path,
                 const CLI::Option* limit_opt, int sentence_limit) {
    auto schema = assets.schema();
    auto ds = load_data(data_opt, data_path, schema);
    int limit = pick(limit_opt, sentence_limit, "sentence_limit", 0);
    auto tmpl = assets.profile(limit);

    std::string lines;
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        json j{{"id", i}, {"profile", lfm::write_profile(ds.records[i], tmpl)}};
        lines += j.dump() + "\n";
    }
    fs::path out = common.out("profiles.jsonl");
    write_file(out, lines);
    std::cout << "rendered " << ds.records.size() << " profiles\n";
    note_artifact(out);
}

void cmd_infer(const CommonOpts& common, const AssetOpts& assets,
               const CLI::Option* data_opt, const std::string& data_path) {
    auto schema = assets.schema();
    auto program = assets.program();
    auto ds = load_data(data_opt, data_path, schema);
    auto results = lfm::batch_infer(ds, program);

    std::string lines;
    for (std::size_t i = 0; i < results.size(); ++i) {
        json j = json::parse(lfm::to_json(results[i]));
        j["id"] = i;
        lines += j.dump() + "\n";
    }
    fs::path out = common.out("latents.jsonl");
    write_file(out, lines);
    std::cout << "inferred latents for " << results.size() << " records\n";
    note_artifact(out);
}

void cmd_enlarge(const CommonOpts& common, const AssetOpts& assets,
                 const BackendOpts& backend_opts, const CLI::Option* data_opt,
                 const std::string& data_path, const CLI::Option* baseline_opt,
                 const std::string& baseline_path, const CLI::Option* n_opt,
                 std::size_t n_target, const CLI::Option* thr_opt, double threshold,
                 const CLI::Option* req_opt, const std::string& required_csv,
                 const CLI::Option* seed_opt, std::uint64_t seed) {
    auto schema = assets.schema();
    auto program = assets.program();
    auto ds = load_data(data_opt, data_path, schema);
    auto backend = backend_opts.make(program, assets.style());

    lfm::EnlargeConfig cfg;
    cfg.n_target = pick(n_opt, n_target, "n_target", std::size_t{40});
    cfg.baseline = lfm::load_rationales(pick_required(baseline_opt, baseline_path,
                                                      "baseline"));
    cfg.coverage_threshold = pick(thr_opt, threshold, "coverage_threshold", 1.0);
    cfg.seed = pick(seed_opt, seed, "seed", std::uint64_t{0});
    if (req_opt->count() > 0) {
        std::stringstream ss(required_csv);
        std::string tok;
        while (std::getline(ss, tok, ','))
            if (!tok.empty()) cfg.required_tokens.push_back(tok);
    } else if (g_config.contains("required_tokens")) {
        cfg.required_tokens =
            g_config.at("required_tokens").get<std::vector<std::string>>();
    }

    auto result = lfm::enlarge(cfg, ds, program, assets.prompt(), assets.profile(),
                               backend);

    fs::path rat_path = common.out("rationales.jsonl");
    lfm::write_rationales(result.records, rat_path);
    json report{{"n_target", cfg.n_target},
                {"accepted", result.records.size()},
                {"attempts", result.attempts},
                {"acceptance_rate", result.acceptance_rate},
                {"budget_exhausted", result.budget_exhausted}};
    fs::path rep_path = common.out("enlarge_report.json");
    write_file(rep_path, report.dump(2) + "\n");

    std::cout << "accepted " << result.records.size() << "/" << cfg.n_target << " in "
              << result.attempts << " attempts (rate "
              << result.acceptance_rate << ")\n";
    note_artifact(rat_path);
    note_artifact(rep_path);
    if (result.budget_exhausted)
        throw lfm::DataError("attempt budget exhausted: accepted " +
                             std::to_string(result.records.size()) + " of " +
                             std::to_string(cfg.n_target) +
                             " (partial artifacts were written)");
}

void cmd_ft_export(const CommonOpts& common, const AssetOpts& assets,
                   const CLI::Option* rationales_opt, const std::string& rationales_path) {
    auto records =
        lfm::load_rationales(pick_required(rationales_opt, rationales_path, "rationales"));
    fs::path out = common.out("finetune.jsonl");
    std::size_t n = lfm::export_finetune(records, assets.prompt(), out);
    std::cout << "exported " << n << " fine-tune lines\n";
    note_artifact(out);
}

void cmd_align(const CommonOpts& common, const AssetOpts& assets,
               const BackendOpts& backend_opts, const CLI::Option* examples_opt,
               const std::string& examples_path, const CLI::Option* iters_opt,
               std::size_t max_iters) {
    auto program = assets.program();
    auto backend = backend_opts.make(program, assets.style());
    auto tmpl = assets.prompt();

    std::vector<lfm::AlignExample> examples;
    std::string text = read_file(pick_required(examples_opt, examples_path, "examples"));
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            json j = json::parse(line);
            lfm::AlignExample ex;
            ex.profile = j.at("profile").get<std::string>();
            for (const auto& [k, v] : j.at("truth").items())
                ex.truth[k] = v.get<std::string>();
            examples.push_back(std::move(ex));
        } catch (const json::exception& e) {
            throw lfm::DataError("examples line " + std::to_string(lineno) + ": " +
                                 e.what());
        }
    }
    if (examples.empty()) throw lfm::DataError("no alignment examples");

    std::size_t iters = pick(iters_opt, max_iters, "max_iters", std::size_t{5});
    auto [aligned, report] =
        lfm::align(tmpl, examples, backend, iters, program.latent_specs());

    fs::path tmpl_path = common.out("template_aligned.json");
    write_file(tmpl_path, lfm::prompt_template_to_json(aligned));
    json rep{{"pass_counts", report.pass_counts},
             {"converged", report.converged},
             {"added_shots", report.added_shots},
             {"residual_failures", report.residual_failures}};
    fs::path rep_path = common.out("align_report.json");
    write_file(rep_path, rep.dump(2) + "\n");

    std::cout << (report.converged ? "converged" : "did not converge") << " after "
              << report.pass_counts.size() << " passes, added " << report.added_shots
              << " shots\n";
    note_artifact(tmpl_path);
    note_artifact(rep_path);
    if (!report.converged)
        throw lfm::DataError("alignment did not converge within " +
                             std::to_string(iters) + " passes");
}

void cmd_gen(const CommonOpts& common, const AssetOpts& assets,
             const CLI::Option* n_opt, std::size_t n, const CLI::Option* noise_opt,
             double noise, const CLI::Option* seed_opt, std::uint64_t seed,
             const CLI::Option* weights_opt, const std::string& weights_path) {
    lfm::GenConfig cfg;
    cfg.schema = assets.schema();
    cfg.program = assets.program();
    cfg.n = pick(n_opt, n, "n", std::size_t{1000});
    cfg.seed = pick(seed_opt, seed, "seed", std::uint64_t{0});

    const lfm::Preset* preset = assets.find();
    double default_noise = preset ? preset->noise_scale : 0.0;
    cfg.noise_scale = pick(noise_opt, noise, "noise_scale", default_noise);

    std::string wpath = pick<std::string>(weights_opt, weights_path, "weights", "");
    if (!wpath.empty()) {
        try {
            json j = json::parse(read_file(wpath));
            for (const auto& [col, vec] : j.items())
                cfg.outcome_weights[col] = vec.get<std::vector<double>>();
        } catch (const json::exception& e) {
            throw lfm::ConfigError("weights " + wpath + ": " + e.what());
        }
    } else if (g_config.contains("outcome_weights")) {
        for (const auto& [col, vec] : g_config.at("outcome_weights").items())
            cfg.outcome_weights[col] = vec.get<std::vector<double>>();
    } else if (preset) {
        cfg.outcome_weights = preset->outcome_weights;
    } else {
        throw lfm::ConfigError("missing outcome weights: pass --weights, config "
                               "'outcome_weights', or --preset");
    }

    auto result = lfm::gen_dataset(cfg);

    fs::path data_path = common.out("data.csv");
    lfm::write_csv(result.dataset, data_path);
    fs::path lat_path = common.out("data.latents.csv");
    write_latents_csv(result.latents, cfg.program.latent_specs(), lat_path);

    std::map<std::string, std::size_t> class_counts;
    for (const auto& rec : result.dataset.records) class_counts[*rec.label]++;
    std::cout << "generated " << result.dataset.records.size() << " records; class counts:";
    for (const auto& [label, count] : class_counts)
        std::cout << " " << label << "=" << count;
    std::cout << "\n";
    note_artifact(data_path);
    note_artifact(lat_path);
}

void cmd_train(const CommonOpts& common, const AssetOpts& assets,
               const CLI::Option* data_opt, const std::string& data_path,
               const CLI::Option* latents_opt, const std::string& latents_path,
               const CLI::Option* arch_opt, const std::string& arch_name,
               const CLI::Option* lr_opt, double lr, const CLI::Option* epochs_opt,
               std::size_t epochs, const CLI::Option* l2_opt, double l2,
               const CLI::Option* tol_opt, double tol, const CLI::Option* seed_opt,
               std::uint64_t seed, const CLI::Option* hidden_opt, std::size_t hidden) {
    auto schema = assets.schema();
    auto ds = load_data(data_opt, data_path, schema);

    std::string lat = pick<std::string>(latents_opt, latents_path, "latents", "");
    if (!lat.empty()) {
        auto program = assets.program();
        auto specs = program.latent_specs();
        ds = lfm::augment(ds, read_latents_csv(lat, specs), specs);
    }

    lfm::TrainConfig cfg;
    cfg.learning_rate = pick(lr_opt, lr, "learning_rate", 1.0);
    cfg.max_epochs = pick(epochs_opt, epochs, "max_epochs", std::size_t{500});
    cfg.l2 = pick(l2_opt, l2, "l2", 0.0);
    cfg.tol = pick(tol_opt, tol, "tol", 1e-8);
    cfg.seed = pick(seed_opt, seed, "seed", std::uint64_t{0});
    cfg.hidden = pick(hidden_opt, hidden, "hidden", std::size_t{8});
    lfm::Arch arch = parse_arch(pick<std::string>(arch_opt, arch_name, "arch", "linear"));

    auto encoded = lfm::encode(ds);
    auto [model, report] = lfm::train(encoded, cfg, arch);

    fs::path model_path = common.out("model.json");
    lfm::save_model(model, model_path);
    json rep{{"epochs", report.epochs},
             {"converged", report.converged},
             {"initial_loss", report.initial_loss()},
             {"final_loss", report.final_loss()},
             {"trajectory", report.loss_trajectory}};
    fs::path rep_path = common.out("train_report.json");
    write_file(rep_path, rep.dump(2) + "\n");

    std::cout << "trained on " << encoded.rows << " rows, " << encoded.cols
              << " columns; final loss " << report.final_loss() << " after "
              << report.epochs << " epochs"
              << (report.converged ? " (converged)" : "") << "\n";
    note_artifact(model_path);
    note_artifact(rep_path);
}

void cmd_compare(const CommonOpts& common, const AssetOpts& assets,
                 const BackendOpts& backend_opts, const CLI::Option* data_opt,
                 const std::string& data_path, const CLI::Option* seeds_opt,
                 const std::string& seeds_text, const CLI::Option* ratio_opt,
                 double ratio, const CLI::Option* arch_opt, const std::string& arch_name,
                 const CLI::Option* lr_opt, double lr, const CLI::Option* epochs_opt,
                 std::size_t epochs, const CLI::Option* l2_opt, double l2,
                 const CLI::Option* hidden_opt, std::size_t hidden,
                 const CLI::Option* kshots_opt, std::size_t k_shots) {
    auto schema = assets.schema();
    auto program = assets.program();
    auto ds = load_data(data_opt, data_path, schema);
    auto backend = backend_opts.make(program, assets.style());

    lfm::CompareConfig cfg;
    if (seeds_opt->count() > 0) cfg.seeds = expand_seeds(seeds_text);
    else if (g_config.contains("seeds"))
        cfg.seeds = g_config.at("seeds").get<std::vector<std::uint64_t>>();
    cfg.train_ratio = pick(ratio_opt, ratio, "ratio", 0.8);
    cfg.arch = parse_arch(pick<std::string>(arch_opt, arch_name, "arch", "linear"));
    cfg.train.learning_rate = pick(lr_opt, lr, "learning_rate", 1.0);
    cfg.train.max_epochs = pick(epochs_opt, epochs, "max_epochs", std::size_t{300});
    cfg.train.l2 = pick(l2_opt, l2, "l2", 1e-4);
    cfg.train.hidden = pick(hidden_opt, hidden, "hidden", std::size_t{8});
    cfg.prompt = assets.prompt();
    cfg.profile = assets.profile();
    cfg.k_shots = pick(kshots_opt, k_shots, "k_shots", std::size_t{0});

    auto result = lfm::run_comparison(ds, program, backend, cfg);

    fs::path summary_path = common.out("summary.csv");
    lfm::write_summary_csv(result, summary_path);
    fs::path imp_path = common.out("importance.csv");
    lfm::write_importance_csv(result.importance, imp_path);
    fs::path json_path = common.out("comparison.json");
    write_file(json_path, lfm::comparison_to_json(result));

    std::cout << "macro F1 without latents: mean "
              << result.without_latents.mean.at("macro_f1") << " (std "
              << result.without_latents.stddev.at("macro_f1") << ")\n";
    std::cout << "macro F1 with latents:    mean "
              << result.with_latents.mean.at("macro_f1") << " (std "
              << result.with_latents.stddev.at("macro_f1") << ")\n";
    std::cout << "mean gain " << result.mean_macro_f1_gain << ", positive in "
              << result.seeds_with_positive_gain << "/" << cfg.seeds.size()
              << " seeds\n";
    note_artifact(summary_path);
    note_artifact(imp_path);
    note_artifact(json_path);
}

void cmd_lemma(const CommonOpts& common, const CLI::Option* ntrain_opt,
               std::size_t n_train, const CLI::Option* ntest_opt, std::size_t n_test,
               const CLI::Option* noise_opt, std::size_t n_noise,
               const CLI::Option* seeds_opt, const std::string& seeds_text) {
    std::vector<std::uint64_t> seeds;
    if (seeds_opt->count() > 0) seeds = expand_seeds(seeds_text);
    else if (g_config.contains("seeds"))
        seeds = g_config.at("seeds").get<std::vector<std::uint64_t>>();
    else seeds = expand_seeds("50");

    auto report = lfm::lemma_demo(pick(ntrain_opt, n_train, "n_train", std::size_t{30}),
                                  pick(ntest_opt, n_test, "n_test", std::size_t{1000}),
                                  pick(noise_opt, n_noise, "n_noise", std::size_t{5}),
                                  seeds);
    fs::path out = common.out("lemma.json");
    write_file(out, lfm::lemma_report_to_json(report));

    std::cout << "in-sample guarantee held in " << report.part_i_passes << "/"
              << report.rows.size() << " seeds\n";
    std::cout << "out-of-sample degradation found: "
              << (report.part_ii_found ? "yes" : "no") << " (max margin "
              << report.max_out_margin << ")\n";
    note_artifact(out);
}

void cmd_scan(const CommonOpts& common, const CLI::Option* rationales_opt,
              const std::string& rationales_path, const CLI::Option* blocklist_opt,
              const std::string& blocklist_path) {
    auto records =
        lfm::load_rationales(pick_required(rationales_opt, rationales_path, "rationales"));
    std::set<std::string> blocklist;
    {
        std::string text =
            read_file(pick_required(blocklist_opt, blocklist_path, "blocklist"));
        std::stringstream ss(text);
        std::string line;
        while (std::getline(ss, line)) {
            while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
                line.pop_back();
            if (!line.empty() && line[0] != '#') blocklist.insert(line);
        }
    }
    std::vector<std::string> texts;
    texts.reserve(records.size());
    for (const auto& r : records) texts.push_back(r.rationale);

    auto hits = lfm::term_scan(texts, blocklist);
    std::string csv = "index,term\n";
    for (const auto& [idx, term] : hits)
        csv += std::to_string(idx) + "," + lfm::csv_escape(term) + "\n";
    fs::path out = common.out("scan.csv");
    write_file(out, csv);
    std::cout << hits.size() << " blocklist hits across " << records.size()
              << " rationales\n";
    note_artifact(out);
}

void cmd_preset(const CommonOpts& common, const std::string& name) {
    const lfm::Preset* p = lfm::find_preset(name);
    if (!p) throw lfm::ConfigError("unknown preset: " + name);

    fs::path schema_path = common.out("schema.json");
    lfm::save_schema(p->schema, schema_path);
    fs::path program_path = common.out("program.chain");
    write_file(program_path, p->program_text);
    fs::path style_path = common.out("style.json");
    write_file(style_path, lfm::style_to_json(p->style));
    fs::path profile_path = common.out("profile.txt");
    write_file(profile_path, p->profile_pattern + "\n");
    fs::path prompt_path = common.out("prompt.json");
    write_file(prompt_path, lfm::prompt_template_to_json(p->prompt));

    json gen{{"preset", p->name},
             {"n", 2000},
             {"noise_scale", p->noise_scale},
             {"seed", 7},
             {"outcome_weights", p->outcome_weights}};
    fs::path gen_path = common.out("gen.json");
    write_file(gen_path, gen.dump(2) + "\n");

    std::cout << p->name << ": " << p->description << "\n";
    for (const auto& path :
         {schema_path, program_path, style_path, profile_path, prompt_path, gen_path})
        note_artifact(path);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"latent feature mining pipeline (chain programs -> rationales -> "
                 "classifiers)"};
    app.require_subcommand(1);
    app.fallthrough();

    CommonOpts common;
    app.add_option("-c,--config", common.config_path, "JSON config file; flags win");
    common.out_opt = app.add_option("-o,--out", common.out_dir, "Output directory");

    // ---- check ----
    auto* check = app.add_subcommand("check", "Parse and validate a chain program");
    AssetOpts check_assets;
    check_assets.attach(check);
    bool check_print = false;
    check->add_flag("--print", check_print, "Print the canonical rendering");
    check->callback([&] { cmd_check(check_assets, check_print); });

    // ---- profile ----
    auto* profile = app.add_subcommand("profile", "Render text profiles from a CSV");
    AssetOpts profile_assets;
    profile_assets.attach(profile);
    std::string profile_data;
    auto* profile_data_opt = profile->add_option("--data", profile_data, "Input CSV");
    int profile_limit = 0;
    auto* profile_limit_opt =
        profile->add_option("--sentence-limit", profile_limit, "Keep first n sentences");
    profile->callback([&] {
        cmd_profile(common, profile_assets, profile_data_opt, profile_data,
                    profile_limit_opt, profile_limit);
    });

    // ---- infer ----
    auto* infer = app.add_subcommand("infer", "Run the chain program over a CSV");
    AssetOpts infer_assets;
    infer_assets.attach(infer);
    std::string infer_data;
    auto* infer_data_opt = infer->add_option("--data", infer_data, "Input CSV");
    infer->callback(
        [&] { cmd_infer(common, infer_assets, infer_data_opt, infer_data); });

    // ---- enlarge ----
    auto* enlarge = app.add_subcommand("enlarge",
                                       "Grow the rationale corpus with keyword QC");
    AssetOpts enlarge_assets;
    enlarge_assets.attach(enlarge);
    BackendOpts enlarge_backend;
    enlarge_backend.attach(enlarge);
    std::string enlarge_data, enlarge_baseline, enlarge_required;
    std::size_t enlarge_n = 40;
    double enlarge_thr = 1.0;
    std::uint64_t enlarge_seed = 0;
    auto* enlarge_data_opt = enlarge->add_option("--data", enlarge_data, "Input CSV");
    auto* enlarge_baseline_opt = enlarge->add_option(
        "--baseline", enlarge_baseline, "Baseline rationales JSONL");
    auto* enlarge_n_opt =
        enlarge->add_option("--n-target", enlarge_n, "Accepted rationales to collect");
    auto* enlarge_thr_opt =
        enlarge->add_option("--threshold", enlarge_thr, "Keyword coverage threshold");
    auto* enlarge_req_opt = enlarge->add_option(
        "--required", enlarge_required, "Comma-separated required tokens");
    auto* enlarge_seed_opt = enlarge->add_option("--seed", enlarge_seed, "Sampling seed");
    enlarge->callback([&] {
        cmd_enlarge(common, enlarge_assets, enlarge_backend, enlarge_data_opt,
                    enlarge_data, enlarge_baseline_opt, enlarge_baseline, enlarge_n_opt,
                    enlarge_n, enlarge_thr_opt, enlarge_thr, enlarge_req_opt,
                    enlarge_required, enlarge_seed_opt, enlarge_seed);
    });

    // ---- ft-export ----
    auto* ft = app.add_subcommand("ft-export",
                                  "Write accepted rationales as fine-tune JSONL");
    AssetOpts ft_assets;
    ft_assets.attach(ft);
    std::string ft_rationales;
    auto* ft_rationales_opt =
        ft->add_option("--rationales", ft_rationales, "Rationales JSONL");
    ft->callback(
        [&] { cmd_ft_export(common, ft_assets, ft_rationales_opt, ft_rationales); });

    // ---- align ----
    auto* align = app.add_subcommand("align",
                                     "Revise a prompt template against ground truth");
    AssetOpts align_assets;
    align_assets.attach(align);
    BackendOpts align_backend;
    align_backend.attach(align);
    std::string align_examples;
    std::size_t align_iters = 5;
    auto* align_examples_opt = align->add_option(
        "--examples", align_examples, "JSONL of {\"profile\":...,\"truth\":{...}}");
    auto* align_iters_opt =
        align->add_option("--max-iters", align_iters, "Evaluation pass budget");
    align->callback([&] {
        cmd_align(common, align_assets, align_backend, align_examples_opt,
                  align_examples, align_iters_opt, align_iters);
    });

    // ---- gen ----
    auto* gen = app.add_subcommand("gen", "Generate a synthetic labeled dataset");
    AssetOpts gen_assets;
    gen_assets.attach(gen);
    std::size_t gen_n = 1000;
    double gen_noise = 0.0;
    std::uint64_t gen_seed = 0;
    std::string gen_weights;
    auto* gen_n_opt = gen->add_option("--n", gen_n, "Record count");
    auto* gen_noise_opt = gen->add_option("--noise", gen_noise, "Label noise scale");
    auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "Generator seed");
    auto* gen_weights_opt =
        gen->add_option("--weights", gen_weights, "Outcome weights JSON file");
    gen->callback([&] {
        cmd_gen(common, gen_assets, gen_n_opt, gen_n, gen_noise_opt, gen_noise,
                gen_seed_opt, gen_seed, gen_weights_opt, gen_weights);
    });

    // ---- train ----
    auto* train = app.add_subcommand("train", "Train a classifier on a labeled CSV");
    AssetOpts train_assets;
    train_assets.attach(train);
    std::string train_data, train_latents, train_arch = "linear";
    double train_lr = 1.0, train_l2 = 0.0, train_tol = 1e-8;
    std::size_t train_epochs = 500, train_hidden = 8;
    std::uint64_t train_seed = 0;
    auto* train_data_opt = train->add_option("--data", train_data, "Labeled CSV");
    auto* train_latents_opt = train->add_option(
        "--latents", train_latents, "Latent sidecar CSV to append (needs --program)");
    auto* train_arch_opt = train->add_option("--arch", train_arch, "linear or mlp");
    auto* train_lr_opt = train->add_option("--learning-rate", train_lr, "Step size");
    auto* train_epochs_opt = train->add_option("--max-epochs", train_epochs, "Epoch cap");
    auto* train_l2_opt = train->add_option("--l2", train_l2, "L2 penalty");
    auto* train_tol_opt = train->add_option("--tol", train_tol, "Convergence tolerance");
    auto* train_seed_opt = train->add_option("--seed", train_seed, "Init seed (mlp)");
    auto* train_hidden_opt = train->add_option("--hidden", train_hidden, "Hidden units");
    train->callback([&] {
        cmd_train(common, train_assets, train_data_opt, train_data, train_latents_opt,
                  train_latents, train_arch_opt, train_arch, train_lr_opt, train_lr,
                  train_epochs_opt, train_epochs, train_l2_opt, train_l2, train_tol_opt,
                  train_tol, train_seed_opt, train_seed, train_hidden_opt, train_hidden);
    });

    // ---- compare ----
    auto* compare = app.add_subcommand(
        "compare", "Train with and without inferred latents over several seeds");
    AssetOpts compare_assets;
    compare_assets.attach(compare);
    BackendOpts compare_backend;
    compare_backend.attach(compare);
    std::string compare_data, compare_seeds, compare_arch = "linear";
    double compare_ratio = 0.8, compare_lr = 1.0, compare_l2 = 1e-4;
    std::size_t compare_epochs = 300, compare_hidden = 8, compare_kshots = 0;
    auto* compare_data_opt = compare->add_option("--data", compare_data, "Labeled CSV");
    auto* compare_seeds_opt = compare->add_option(
        "--seeds", compare_seeds, "Seed count or comma-separated list");
    auto* compare_ratio_opt =
        compare->add_option("--ratio", compare_ratio, "Train split fraction");
    auto* compare_arch_opt = compare->add_option("--arch", compare_arch, "linear or mlp");
    auto* compare_lr_opt = compare->add_option("--learning-rate", compare_lr, "Step size");
    auto* compare_epochs_opt =
        compare->add_option("--max-epochs", compare_epochs, "Epoch cap");
    auto* compare_l2_opt = compare->add_option("--l2", compare_l2, "L2 penalty");
    auto* compare_hidden_opt =
        compare->add_option("--hidden", compare_hidden, "Hidden units (mlp)");
    auto* compare_kshots_opt =
        compare->add_option("--k-shots", compare_kshots, "Shots per prompt");
    compare->callback([&] {
        cmd_compare(common, compare_assets, compare_backend, compare_data_opt,
                    compare_data, compare_seeds_opt, compare_seeds, compare_ratio_opt,
                    compare_ratio, compare_arch_opt, compare_arch, compare_lr_opt,
                    compare_lr, compare_epochs_opt, compare_epochs, compare_l2_opt,
                    compare_l2, compare_hidden_opt, compare_hidden, compare_kshots_opt,
                    compare_kshots);
    });

    // ---- lemma ----
    auto* lemma = app.add_subcommand(
        "lemma", "Warm-start augmentation demo: in-sample vs out-of-sample loss");
    std::size_t lemma_train = 30, lemma_test = 1000, lemma_noise = 5;
    std::string lemma_seeds;
    auto* lemma_train_opt = lemma->add_option("--n-train", lemma_train, "Training rows");
    auto* lemma_test_opt = lemma->add_option("--n-test", lemma_test, "Test rows");
    auto* lemma_noise_opt =
        lemma->add_option("--noise-features", lemma_noise, "Appended noise columns");
    auto* lemma_seeds_opt = lemma->add_option(
        "--seeds", lemma_seeds, "Seed count or comma-separated list (default 50)");
    lemma->callback([&] {
        cmd_lemma(common, lemma_train_opt, lemma_train, lemma_test_opt, lemma_test,
                  lemma_noise_opt, lemma_noise, lemma_seeds_opt, lemma_seeds);
    });

    // ---- scan ----
    auto* scan = app.add_subcommand("scan", "Scan rationales against a term blocklist");
    std::string scan_rationales, scan_blocklist;
    auto* scan_rationales_opt =
        scan->add_option("--rationales", scan_rationales, "Rationales JSONL");
    auto* scan_blocklist_opt = scan->add_option(
        "--blocklist", scan_blocklist, "Blocked terms, one per line; '#' comments");
    scan->callback([&] {
        cmd_scan(common, scan_rationales_opt, scan_rationales, scan_blocklist_opt,
                 scan_blocklist);
    });

    // ---- preset ----
    auto* preset = app.add_subcommand("preset", "Write a preset's assets to disk");
    std::string preset_name;
    preset->add_option("--name", preset_name, "diversion or discharge")->required();
    preset->callback([&] { cmd_preset(common, preset_name); });

    // Load the config file before any subcommand body runs; parse_complete
    // fires once flags are in but before callbacks.
    app.parse_complete_callback([&] { load_config(common.config_path); });

    try {
        app.parse(argc, argv);
        return 0;
    } catch (const CLI::Success& e) {
        return app.exit(e); // --help and friends
    } catch (const CLI::ParseError& e) {
        emit_error("usage", e.what());
        return 1;
    } catch (const lfm::ConfigError& e) {
        emit_error("config", e.what());
        return 1;
    } catch (const lfm::ChainParseError& e) {
        emit_error("parse", e.what());
        return 2;
    } catch (const lfm::DataError& e) {
        emit_error("data", e.what());
        return 2;
    } catch (const lfm::BackendError& e) {
        emit_error("backend", e.what());
        return 3;
    } catch (const lfm::IoError& e) {
        emit_error("io", e.what());
        return 3;
    } catch (const std::exception& e) {
        emit_error("internal", e.what());
        return 3;
    }
}
