#include "lfm/synthetic.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "lfm/engine.hpp"
#include "lfm/errors.hpp"
#include "lfm/seeds.hpp"

namespace lfm {

namespace {

// Every encoded column name a weight map may legally reference.
std::set<std::string> weightable_columns(const FeatureSchema& schema,
                                         const std::vector<LatentSpec>& latents) {
    std::set<std::string> cols;
    for (const auto& f : schema.features) {
        if (f.kind == FeatureKind::Categorical)
            for (const auto& v : f.domain) cols.insert(f.name + "=" + v);
        else if (f.kind == FeatureKind::Numeric)
            cols.insert(f.name);
    }
    for (const auto& l : latents)
        for (const auto& v : l.domain) cols.insert(l.name + "=" + v);
    return cols;
}

} // namespace

GenResult gen_dataset(const GenConfig& cfg) {
    cfg.schema.validate();
    if (cfg.n == 0) throw ConfigError("gen: n must be at least 1");
    if (cfg.schema.label_domain.size() < 2)
        throw ConfigError("gen: need at least two outcome classes");
    if (cfg.noise_scale < 0) throw ConfigError("gen: noise_scale must be >= 0");
    auto report = validate(cfg.program);
    if (!report.valid())
        throw ConfigError("gen: invalid chain program:\n" + report.to_string());

    const auto latent_specs = cfg.program.latent_specs();
    const auto legal = weightable_columns(cfg.schema, latent_specs);
    const std::size_t n_classes = cfg.schema.label_domain.size();
    for (const auto& [col, w] : cfg.outcome_weights) {
        if (!legal.count(col))
            throw ConfigError("gen: outcome_weights references unknown column: " + col);
        if (w.size() != n_classes)
            throw ConfigError("gen: weight vector for " + col + " has " +
                              std::to_string(w.size()) + " entries, expected " +
                              std::to_string(n_classes));
    }

    std::mt19937_64 feat_rng(derive_seed(cfg.seed, "features"));
    std::mt19937_64 noise_rng(derive_seed(cfg.seed, "label-noise"));
    std::normal_distribution<double> gauss(0.0, 1.0);

    GenResult out;
    out.dataset.schema = cfg.schema;
    out.dataset.provenance = "synthetic:seed=" + std::to_string(cfg.seed);
    out.dataset.records.reserve(cfg.n);
    out.latents.reserve(cfg.n);

    for (std::size_t i = 0; i < cfg.n; ++i) {
        FeatureRecord rec;
        for (const auto& f : cfg.schema.features) {
            switch (f.kind) {
            case FeatureKind::Categorical: {
                std::uniform_int_distribution<std::size_t> pick(0, f.domain.size() - 1);
                rec.values[f.name] = f.domain[pick(feat_rng)];
                break;
            }
            case FeatureKind::Numeric: {
                std::uniform_real_distribution<double> pick(f.min, f.max);
                rec.values[f.name] = pick(feat_rng);
                break;
            }
            case FeatureKind::Text:
                rec.values[f.name] = std::string{};
                break;
            }
        }

        auto inference = infer(rec, cfg.program);
        for (const auto& spec : latent_specs)
            if (!inference.latents.count(spec.name))
                throw DataError("gen: record " + std::to_string(i) +
                                ": program left latent \"" + spec.name +
                                "\" unassigned; add a catch-all rule");

        // Per-class score: weighted encoded columns + optional Gaussian noise.
        std::vector<double> score(n_classes, 0.0);
        for (const auto& [col, w] : cfg.outcome_weights) {
            double x = 0.0;
            auto eq = col.find('=');
            if (eq == std::string::npos) { // numeric feature, min-max scaled
                const FeatureSpec* f = cfg.schema.find(col);
                double v = std::get<double>(rec.at(col));
                x = (v - f->min) / (f->max - f->min);
            } else {
                std::string name = col.substr(0, eq), value = col.substr(eq + 1);
                auto lat = inference.latents.find(name);
                if (lat != inference.latents.end()) {
                    x = lat->second == value ? 1.0 : 0.0;
                } else {
                    x = std::get<std::string>(rec.at(name)) == value ? 1.0 : 0.0;
                }
            }
            for (std::size_t c = 0; c < n_classes; ++c) score[c] += w[c] * x;
        }
        if (cfg.noise_scale > 0)
            for (std::size_t c = 0; c < n_classes; ++c)
                score[c] += cfg.noise_scale * gauss(noise_rng);

        std::size_t best = 0;
        for (std::size_t c = 1; c < n_classes; ++c)
            if (score[c] > score[best]) best = c;
        rec.label = cfg.schema.label_domain[best];

        out.dataset.records.push_back(std::move(rec));
        out.latents.push_back(std::move(inference.latents));
    }
    return out;
}

EnlargeResult enlarge(const EnlargeConfig& cfg, const Dataset& ds,
                      const ChainProgram& program, const PromptTemplate& tmpl,
                      const ProfileTemplate& profile_tmpl, const Backend& backend) {
    if (cfg.n_target == 0) throw ConfigError("enlarge: n_target must be at least 1");
    if (cfg.baseline.empty()) throw ConfigError("enlarge: baseline rationales are empty");
    if (!(cfg.coverage_threshold > 0.0 && cfg.coverage_threshold <= 1.0))
        throw ConfigError("enlarge: coverage_threshold must be in (0, 1]");
    if (ds.records.empty()) throw DataError("enlarge: dataset is empty");

    const auto latent_specs = program.latent_specs();
    std::set<std::string> required(cfg.required_tokens.begin(), cfg.required_tokens.end());

    std::mt19937_64 rng(derive_seed(cfg.seed, "enlarge"));
    std::uniform_int_distribution<std::size_t> pick_rec(0, ds.records.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_shot(0, cfg.baseline.size() - 1);

    EnlargeResult out;
    const std::size_t budget = 10 * cfg.n_target;
    while (out.records.size() < cfg.n_target && out.attempts < budget) {
        ++out.attempts;
        std::size_t ri = pick_rec(rng);
        const auto& shot = cfg.baseline[pick_shot(rng)];
        const FeatureRecord& rec = ds.records[ri];

        PromptTemplate work = tmpl;
        work.shots = {{shot.profile, shot.rationale}};
        std::string profile = write_profile(rec, profile_tmpl);
        std::string user_payload =
            profile + "\n" + record_footer(rec, static_cast<std::int64_t>(ri));
        auto req = build_prompt(work, user_payload, 1);
        std::string text = complete(backend, req);

        std::set<std::string> keywords = required;
        for (const auto& [name, value] : rec.values) {
            (void)name;
            std::string kw = value_text(value);
            if (!kw.empty()) keywords.insert(kw);
        }
        double coverage = keyword_coverage(text, keywords);
        bool required_ok = true;
        for (const auto& tok : required)
            if (keyword_coverage(text, {tok}) < 1.0) {
                required_ok = false;
                break;
            }

        RationaleRecord rr;
        rr.record_id = static_cast<std::int64_t>(ri);
        rr.profile = profile;
        rr.prompt = user_payload;
        rr.rationale = text;
        rr.latents = parse_latents(text, latent_specs);
        rr.coverage = coverage;
        rr.accepted = coverage >= cfg.coverage_threshold && required_ok;
        if (rr.accepted) out.records.push_back(std::move(rr));
    }
    out.acceptance_rate = out.attempts == 0
                              ? 0.0
                              : static_cast<double>(out.records.size()) /
                                    static_cast<double>(out.attempts);
    out.budget_exhausted = out.records.size() < cfg.n_target;
    return out;
}

} // namespace lfm
