#pragma once

// Shared fixtures and independent oracles for the test suites.
//
// The oracles here deliberately re-derive results through a different
// algorithm than the library (exhaustive truth-table search instead of
// fixed-point iteration, naive re-evaluation instead of shared helpers) so
// that agreement between the two is meaningful.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <unistd.h>
#include <variant>
#include <vector>

#include "lfm/backend.hpp"
#include "lfm/chain.hpp"
#include "lfm/data.hpp"
#include "lfm/engine.hpp"
#include "lfm/errors.hpp"
#include "lfm/narrative.hpp"

namespace lfmtest {

// ---------------------------------------------------------------------------
// Scratch directories
// ---------------------------------------------------------------------------

class TempDir {
public:
    TempDir() {
        auto base = std::filesystem::temp_directory_path();
        static std::atomic<unsigned> counter{0};
        for (int tries = 0; tries < 100; ++tries) {
            auto candidate = base / ("lfm-test-" + std::to_string(::getpid()) + "-" +
                                     std::to_string(counter++));
            std::error_code ec;
            if (std::filesystem::create_directory(candidate, ec)) {
                path_ = candidate;
                return;
            }
        }
        throw std::runtime_error("TempDir: could not create a scratch directory");
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path file(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_text: cannot open " + path.string());
    out << content;
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_text: cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// Worked case-management fixture
//
// A small intake schema with a hand-checkable chain: P1..P6 ground facts,
// O1/O2 intermediate conditions, three support-program latents, and a
// 0..10 risk score binned into three levels.
// ---------------------------------------------------------------------------

inline lfm::FeatureSchema fixture_schema() {
    lfm::FeatureSchema s;
    s.features = {
        {"employment", lfm::FeatureKind::Categorical, {"none", "part_time", "full_time"}},
        {"education_level", lfm::FeatureKind::Numeric, {}, 0.0, 20.0},
        {"marital", lfm::FeatureKind::Categorical, {"single", "married", "divorced"}},
        {"drug_issue", lfm::FeatureKind::Categorical, {"yes", "no"}},
        {"area_crime", lfm::FeatureKind::Categorical, {"high", "low"}},
        {"risk_assessed", lfm::FeatureKind::Numeric, {}, 0.0, 10.0},
    };
    s.label_field = "outcome";
    s.label_domain = {"completed", "revoked"};
    return s;
}

inline const char* fixture_program_text() {
    return R"(# Intake chain: facts -> conditions -> support programs + risk score.
stage P {
  P1 <- employment in {"none", "part_time"}
  P2 <- education_level < 10
  P3 <- marital == "single"
  P4 <- drug_issue == "yes"
  P5 <- area_crime == "high"
  P6 <- risk_assessed >= 7
}
stage O1 {
  O1 <- P1 & P2
  O2 <- P3 & P4 & P5
}
stage Z {
  latent "support_1" = "education" <- O1
  latent "support_2" = "substance abuse treatment" <- O2
  latent "support_3" = "community service" <- O2
  score += 2.0 <- O1
  score += 2.5 <- O2
  score += 3.0 <- P6
}
bins {
  [0, 4) -> "moderate"
  [4, 7.5) -> "high"
  [7.5, 10] -> "very_high"
}
)";
}

inline const lfm::ChainProgram& fixture_program() {
    static const lfm::ChainProgram p = lfm::parse_chain(fixture_program_text());
    return p;
}

inline lfm::RationaleStyle fixture_style() {
    lfm::RationaleStyle st;
    st.phrases = {
        {"P1", "an unsteady work situation"},
        {"P2", "schooling below the tenth grade"},
        {"P3", "single marital status"},
        {"P4", "ongoing substance issues"},
        {"P5", "residence in a high crime neighborhood"},
        {"P6", "an elevated risk score"},
        {"O1", "low socioeconomic status"},
        {"O2", "a lack of positive social backing"},
    };
    st.p_template = "The record shows {items}.";
    st.o_template = "Together these indicate {items}.";
    st.z_template = "Hence the client likely needs {items}.";
    st.latent_sentences = {
        {"education", "Education coursework would directly address the schooling gap."},
        {"substance abuse treatment",
         "Substance abuse treatment is crucial for recovery from substance dependence."},
        {"community service", "Community service builds accountability and local ties."},
    };
    return st;
}

inline lfm::ProfileTemplate fixture_profile_template() {
    return lfm::ProfileTemplate::parse(
        "The client works {employment}, has education level {education_level}, and is "
        "{marital}. Drug issue: {drug_issue}. Area crime: {area_crime}. "
        "Risk assessed: {risk_assessed}.");
}

inline lfm::PromptTemplate fixture_prompt_template() {
    lfm::PromptTemplate t;
    t.system = "You are a reviewing case worker.";
    t.instruction =
        "Review the profile, reason from the stated facts, and finish with an "
        "@@latents footer line.\n\n{profile}";
    t.stage_plan = {
        "Step 1. List the facts grounded in the profile below.\n\n{profile}",
        "Step 2. Facts so far:\n{previous}\n\nDerive the conditions they imply for "
        "the profile below.\n\n{profile}",
        "Step 3. Derivation so far:\n{previous}\n\nName the support programs for the "
        "profile below and finish with the @@latents footer.\n\n{profile}",
    };
    return t;
}

inline lfm::FeatureRecord make_record(const std::string& employment, double education,
                                      const std::string& marital, const std::string& drug,
                                      const std::string& crime, double risk,
                                      const std::string& label = "") {
    lfm::FeatureRecord r;
    r.values["employment"] = employment;
    r.values["education_level"] = education;
    r.values["marital"] = marital;
    r.values["drug_issue"] = drug;
    r.values["area_crime"] = crime;
    r.values["risk_assessed"] = risk;
    if (!label.empty()) r.label = label;
    return r;
}

// Fires exactly P1 and P2 in the P stage (plus O1 downstream).
inline lfm::FeatureRecord record_ground() {
    return make_record("none", 9.0, "married", "no", "low", 2.0);
}

// The fully worked record: P1..P5, O1, O2, all three support latents,
// score 4.5, bin "high".
inline lfm::FeatureRecord record_worked() {
    return make_record("none", 9.0, "single", "yes", "high", 3.0);
}

// ---------------------------------------------------------------------------
// Independent engine oracle
//
// Symbol stages are solved by exhaustive search over head subsets: a subset S
// is THE answer iff every head is in S exactly when one of its rules is
// satisfied under (record, earlier facts, S).  For validated programs
// (acyclic positive same-stage references, no same-stage negation) exactly
// one subset qualifies, and it equals the engine's fixed point.
// ---------------------------------------------------------------------------

struct OracleResult {
    std::set<std::string> p;
    std::set<std::string> o;
    std::map<std::string, std::string> latents;
    double score = 0.0;
    std::optional<std::string> bin;
};

inline bool oracle_eval_test(const lfm::FeatureTest& ft, const lfm::FeatureRecord& rec) {
    const lfm::FeatureValue& v = rec.at(ft.feature);
    const bool is_text = std::holds_alternative<std::string>(v);
    auto matches_one = [&](const lfm::Literal& lit) {
        if (std::holds_alternative<std::string>(lit))
            return is_text && std::get<std::string>(v) == std::get<std::string>(lit);
        return !is_text && std::get<double>(v) == std::get<double>(lit);
    };
    switch (ft.op) {
        case lfm::CmpOp::Eq: return matches_one(ft.operands.at(0));
        case lfm::CmpOp::Ne: return !matches_one(ft.operands.at(0));
        case lfm::CmpOp::In: {
            for (const auto& lit : ft.operands)
                if (matches_one(lit)) return true;
            return false;
        }
        default: break;
    }
    if (is_text) throw lfm::DataError("oracle: ordering comparison on text");
    double lhs = std::get<double>(v);
    double rhs = std::get<double>(ft.operands.at(0));
    switch (ft.op) {
        case lfm::CmpOp::Lt: return lhs < rhs;
        case lfm::CmpOp::Le: return lhs <= rhs;
        case lfm::CmpOp::Gt: return lhs > rhs;
        case lfm::CmpOp::Ge: return lhs >= rhs;
        default: throw std::logic_error("oracle: unexpected comparison");
    }
}

inline bool oracle_body_holds(const lfm::Rule& rule, const lfm::FeatureRecord& rec,
                              const std::set<std::string>& facts) {
    for (const auto& term : rule.body) {
        bool holds;
        if (const auto* ft = std::get_if<lfm::FeatureTest>(&term.atom))
            holds = oracle_eval_test(*ft, rec);
        else
            holds = facts.count(std::get<lfm::SymbolRef>(term.atom).symbol) > 0;
        if (holds == term.negated) return false;
    }
    return true;
}

// Returns the number of supported subsets found (callers assert it is 1) and
// writes the unique one to `result`.
inline int oracle_solve_stage(const lfm::Stage& stage, const lfm::FeatureRecord& rec,
                              const std::set<std::string>& earlier,
                              std::set<std::string>& result) {
    std::vector<std::string> heads;
    for (const auto& r : stage.rules) {
        const auto* name = std::get_if<std::string>(&r.head);
        if (name && std::find(heads.begin(), heads.end(), *name) == heads.end())
            heads.push_back(*name);
    }
    int found = 0;
    for (std::uint64_t mask = 0; mask < (1ULL << heads.size()); ++mask) {
        std::set<std::string> facts = earlier;
        std::set<std::string> subset;
        for (std::size_t i = 0; i < heads.size(); ++i)
            if (mask & (1ULL << i)) {
                subset.insert(heads[i]);
                facts.insert(heads[i]);
            }
        bool supported = true;
        for (const auto& h : heads) {
            bool derivable = false;
            for (const auto& r : stage.rules) {
                const auto* name = std::get_if<std::string>(&r.head);
                if (!name || *name != h) continue;
                if (oracle_body_holds(r, rec, facts)) {
                    derivable = true;
                    break;
                }
            }
            if (derivable != (subset.count(h) > 0)) {
                supported = false;
                break;
            }
        }
        if (supported) {
            ++found;
            result = subset;
        }
    }
    return found;
}

inline OracleResult oracle_infer(const lfm::FeatureRecord& rec,
                                 const lfm::ChainProgram& prog) {
    OracleResult out;
    std::set<std::string> earlier;
    for (const auto& stage : prog.stages) {
        if (stage.id == "Z") {
            for (const auto& rule : stage.rules) {
                if (!oracle_body_holds(rule, rec, earlier)) continue;
                if (const auto* la = std::get_if<lfm::LatentAssign>(&rule.head)) {
                    out.latents.emplace(la->name, la->label); // first assignment wins
                } else if (const auto* sa = std::get_if<lfm::ScoreAdd>(&rule.head)) {
                    out.score += sa->delta;
                }
            }
            continue;
        }
        std::set<std::string> solved;
        int n = oracle_solve_stage(stage, rec, earlier, solved);
        if (n != 1)
            throw std::logic_error("oracle: stage " + stage.id + " admitted " +
                                   std::to_string(n) + " supported subsets");
        (stage.id == "P" ? out.p : out.o).insert(solved.begin(), solved.end());
        earlier.insert(solved.begin(), solved.end());
    }
    if (!prog.bins.empty()) {
        double max = prog.bins.back().hi;
        if (out.score < 0) out.score = 0;
        if (out.score > max) out.score = max;
        for (const auto& b : prog.bins) {
            bool in_bin = out.score >= b.lo &&
                          (b.hi_closed ? out.score <= b.hi : out.score < b.hi);
            if (in_bin) {
                out.bin = b.label;
                break;
            }
        }
    }
    return out;
}

inline bool oracle_matches(const OracleResult& oracle, const lfm::InferenceResult& got) {
    std::set<std::string> got_p(got.fired_p.begin(), got.fired_p.end());
    std::set<std::string> got_o(got.fired_o.begin(), got.fired_o.end());
    return oracle.p == got_p && oracle.o == got_o && oracle.latents == got.latents &&
           oracle.score == got.score && oracle.bin == got.bin_label;
}

// ---------------------------------------------------------------------------
// Fuzzers
//
// fuzz_program emits guaranteed-valid programs with at most `max_symbols`
// plain heads spread over a P stage and up to two O stages, plus a Z stage
// exercising latent conflicts, scores, and (sometimes) bins.
// ---------------------------------------------------------------------------

inline lfm::FeatureTest fuzz_feature_test(std::mt19937_64& rng) {
    const auto schema = fixture_schema();
    std::uniform_int_distribution<std::size_t> pick_feature(0, schema.features.size() - 1);
    const auto& f = schema.features[pick_feature(rng)];
    lfm::FeatureTest t;
    t.feature = f.name;
    if (f.kind == lfm::FeatureKind::Categorical) {
        std::uniform_int_distribution<int> pick_op(0, 2);
        std::uniform_int_distribution<std::size_t> pick_val(0, f.domain.size() - 1);
        switch (pick_op(rng)) {
            case 0: t.op = lfm::CmpOp::Eq; t.operands = {f.domain[pick_val(rng)]}; break;
            case 1: t.op = lfm::CmpOp::Ne; t.operands = {f.domain[pick_val(rng)]}; break;
            default: {
                t.op = lfm::CmpOp::In;
                std::uniform_int_distribution<int> pick_k(1, 2);
                int k = pick_k(rng);
                for (int i = 0; i < k; ++i) t.operands.push_back(f.domain[pick_val(rng)]);
                break;
            }
        }
    } else {
        std::uniform_int_distribution<int> pick_op(0, 3);
        std::uniform_real_distribution<double> pick_threshold(f.min, f.max);
        constexpr lfm::CmpOp ops[] = {lfm::CmpOp::Lt, lfm::CmpOp::Le, lfm::CmpOp::Gt,
                                      lfm::CmpOp::Ge};
        t.op = ops[pick_op(rng)];
        // Snap to an exact binary fraction so the pretty-printed form is a
        // plain decimal (never scientific notation) and round-trips exactly.
        t.operands = {std::round(pick_threshold(rng) * 1024.0) / 1024.0};
    }
    return t;
}

inline lfm::FeatureRecord fuzz_record(std::mt19937_64& rng) {
    const auto schema = fixture_schema();
    lfm::FeatureRecord r;
    for (const auto& f : schema.features) {
        if (f.kind == lfm::FeatureKind::Categorical) {
            std::uniform_int_distribution<std::size_t> pick(0, f.domain.size() - 1);
            r.values[f.name] = f.domain[pick(rng)];
        } else {
            std::uniform_real_distribution<double> pick(f.min, f.max);
            r.values[f.name] = pick(rng);
        }
    }
    return r;
}

inline lfm::ChainProgram fuzz_program(std::mt19937_64& rng,
                                      std::size_t max_symbols = 6) {
    auto rand_int = [&](int lo, int hi) {
        std::uniform_int_distribution<int> d(lo, hi);
        return d(rng);
    };

    lfm::ChainProgram prog;
    const int total = rand_int(2, static_cast<int>(max_symbols));
    const int n_p = rand_int(1, std::min(3, total));
    int remaining = total - n_p;

    std::vector<std::string> visible; // earlier-stage heads, usable by later bodies

    // A body term: either a feature test, or a reference into `pool`
    // (earlier-stage symbols may be negated; same-stage ones may not).
    auto make_term = [&](const std::vector<std::string>& same_stage_defined) {
        lfm::BodyTerm term;
        bool use_ref = !visible.empty() && rand_int(0, 1) == 0;
        bool use_same = !same_stage_defined.empty() && rand_int(0, 3) == 0;
        if (use_same) {
            term.atom = lfm::SymbolRef{
                same_stage_defined[static_cast<std::size_t>(rand_int(
                    0, static_cast<int>(same_stage_defined.size()) - 1))]};
            term.negated = false; // same-stage negation is rejected by validation
        } else if (use_ref) {
            term.atom = lfm::SymbolRef{visible[static_cast<std::size_t>(
                rand_int(0, static_cast<int>(visible.size()) - 1))]};
            term.negated = rand_int(0, 9) < 3;
        } else {
            term.atom = fuzz_feature_test(rng);
            term.negated = rand_int(0, 9) < 2;
        }
        return term;
    };

    auto add_symbol_stage = [&](const std::string& id, const std::string& prefix,
                                int n_heads) {
        lfm::Stage st;
        st.id = id;
        std::vector<std::string> defined;
        for (int h = 0; h < n_heads; ++h) {
            std::string head = prefix + std::to_string(h + 1);
            int n_rules = rand_int(1, 2);
            for (int r = 0; r < n_rules; ++r) {
                lfm::Rule rule;
                rule.head = head;
                int n_terms = rand_int(1, 2);
                for (int t = 0; t < n_terms; ++t) rule.body.push_back(make_term(defined));
                st.rules.push_back(std::move(rule));
            }
            defined.push_back(head);
        }
        prog.stages.push_back(std::move(st));
        visible.insert(visible.end(), defined.begin(), defined.end());
    };

    add_symbol_stage("P", "GP", n_p);
    if (remaining > 0) {
        int first = remaining == 1 ? 1 : rand_int(1, remaining);
        add_symbol_stage("O1", "GQ", first);
        if (remaining - first > 0) add_symbol_stage("O2", "GR", remaining - first);
    }

    // Z stage: latent rules (shared names now and then, to exercise
    // first-assignment-wins), optional scores, plus one score rule per
    // otherwise-unreferenced head so validation's reachability check passes.
    lfm::Stage z;
    z.id = "Z";
    const std::vector<std::string> labels = {"alpha", "beta", "gamma"};
    int n_latent_rules = rand_int(1, 3);
    for (int i = 0; i < n_latent_rules; ++i) {
        lfm::Rule rule;
        std::string name = rand_int(0, 1) ? "L1" : "L2";
        rule.head = lfm::LatentAssign{
            name, labels[static_cast<std::size_t>(rand_int(0, 2))]};
        int n_terms = rand_int(1, 2);
        for (int t = 0; t < n_terms; ++t) rule.body.push_back(make_term({}));
        z.rules.push_back(std::move(rule));
    }
    double positive_sum = 0.0;
    int n_scores = rand_int(0, 2);
    for (int i = 0; i < n_scores; ++i) {
        lfm::Rule rule;
        double delta = rand_int(-2, 4) * 0.5;
        if (delta == 0.0) delta = 1.0;
        rule.head = lfm::ScoreAdd{delta};
        rule.body.push_back(make_term({}));
        z.rules.push_back(std::move(rule));
        if (delta > 0) positive_sum += delta;
    }

    std::set<std::string> referenced;
    auto note_refs = [&](const lfm::Stage& st) {
        for (const auto& r : st.rules)
            for (const auto& t : r.body)
                if (const auto* ref = std::get_if<lfm::SymbolRef>(&t.atom))
                    referenced.insert(ref->symbol);
    };
    for (const auto& st : prog.stages) note_refs(st);
    note_refs(z);
    for (const auto& head : visible) {
        if (referenced.count(head)) continue;
        lfm::Rule rule;
        rule.head = lfm::ScoreAdd{1.0};
        rule.body.push_back(lfm::BodyTerm{false, lfm::SymbolRef{head}});
        z.rules.push_back(std::move(rule));
        positive_sum += 1.0;
    }
    prog.stages.push_back(std::move(z));

    if (rand_int(0, 1) == 1) {
        double top = positive_sum > 0 ? positive_sum : 1.0;
        prog.bins = {{0.0, top * 0.4, false, "low"}, {top * 0.4, top, true, "high"}};
    }

    if (!lfm::validate(prog).valid())
        throw std::logic_error("fuzz_program produced an invalid program:\n" +
                               lfm::validate(prog).to_string());
    return prog;
}

} // namespace lfmtest
