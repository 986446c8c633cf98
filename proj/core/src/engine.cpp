#include "lfm/engine.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"

#include "internal_util.hpp"
#include "lfm/errors.hpp"

namespace lfm {

namespace {

// Renders one body atom for the trace, including its negation mark.
std::string render_term(const BodyTerm& t) {
    Rule tmp;
    tmp.head = std::string("_");
    tmp.body = {t};
    std::string s = pretty_print(tmp);
    return s.substr(std::string("_ <- ").size());
}

bool eval_feature_test(const FeatureTest& ft, const FeatureRecord& rec) {
    const FeatureValue& v = rec.at(ft.feature); // throws when absent

    auto literal_matches = [&](const Literal& lit) -> bool {
        if (const auto* s = std::get_if<std::string>(&lit)) {
            const auto* sv = std::get_if<std::string>(&v);
            return sv && *sv == *s;
        }
        const auto* dv = std::get_if<double>(&v);
        return dv && *dv == std::get<double>(lit);
    };

    switch (ft.op) {
        case CmpOp::In:
            return std::any_of(ft.operands.begin(), ft.operands.end(), literal_matches);
        case CmpOp::Eq:
            return literal_matches(ft.operands.front());
        case CmpOp::Ne:
            return !literal_matches(ft.operands.front());
        default: {
            const auto* dv = std::get_if<double>(&v);
            if (!dv)
                throw DataError("ordering comparison on non-numeric feature: " + ft.feature);
            double lit = std::get<double>(ft.operands.front());
            switch (ft.op) {
                case CmpOp::Lt: return *dv < lit;
                case CmpOp::Le: return *dv <= lit;
                case CmpOp::Gt: return *dv > lit;
                case CmpOp::Ge: return *dv >= lit;
                default: return false;
            }
        }
    }
}

struct StageState {
    std::set<std::string> derived;            // all symbols fired so far
    std::vector<std::string>* fired_order;    // sink for the current stage
    std::vector<TraceStep>* trace;
};

// True when every body term holds.  `same_stage` are the symbols derived so
// far in the stage being evaluated (monotone set); symbols from finished
// stages are final, so negation-as-failure is decidable.
bool body_satisfied(const Rule& r, const FeatureRecord& rec,
                    const std::set<std::string>& derived) {
    for (const auto& t : r.body) {
        bool value;
        if (const auto* ft = std::get_if<FeatureTest>(&t.atom))
            value = eval_feature_test(*ft, rec);
        else
            value = derived.count(std::get<SymbolRef>(t.atom).symbol) > 0;
        if (value == t.negated) return false;
    }
    return true;
}

std::vector<std::string> satisfied_atoms(const Rule& r) {
    std::vector<std::string> out;
    out.reserve(r.body.size());
    for (const auto& t : r.body) out.push_back(render_term(t));
    return out;
}

// Fires a symbol-headed stage to its fixed point.  Rules are scanned in
// source order; the pass repeats until no new symbol fires, so same-stage
// (positive, acyclic) references resolve regardless of rule order.
void run_symbol_stage(const Stage& st, const FeatureRecord& rec, StageState& state) {
    std::set<std::string> fired_rules_guard; // head+index of fired rules
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t ri = 0; ri < st.rules.size(); ++ri) {
            const Rule& r = st.rules[ri];
            const auto& head = std::get<std::string>(r.head);
            std::string guard_key = head + "#" + std::to_string(ri);
            if (fired_rules_guard.count(guard_key)) continue;
            if (!body_satisfied(r, rec, state.derived)) continue;
            fired_rules_guard.insert(guard_key);
            if (!state.derived.count(head)) {
                state.derived.insert(head);
                state.fired_order->push_back(head);
                changed = true;
            }
            state.trace->push_back({st.id, pretty_print(r), satisfied_atoms(r)});
        }
    }
}

} // namespace

std::string bin_score(double score, const std::vector<Bin>& bins) {
    if (bins.empty()) throw DataError("bin_score: program has no bins");
    if (score < bins.front().lo || score > bins.back().hi)
        throw DataError("score outside [" + detail::format_double(bins.front().lo) +
                        ", " + detail::format_double(bins.back().hi) +
                        "]: " + detail::format_double(score));
    for (const auto& b : bins) {
        if (score >= b.lo && (score < b.hi || (b.hi_closed && score <= b.hi)))
            return b.label;
    }
    // Unreachable for a validated table; guard against malformed bins.
    throw DataError("score not covered by bins: " + detail::format_double(score));
}

std::vector<std::string> ground(const FeatureRecord& rec, const ChainProgram& program) {
    std::vector<std::string> fired;
    const Stage* p = program.find_stage("P");
    if (!p) return fired;
    std::vector<TraceStep> trace;
    StageState state{{}, &fired, &trace};
    run_symbol_stage(*p, rec, state);
    return fired;
}

InferenceResult infer(const FeatureRecord& rec, const ChainProgram& program) {
    InferenceResult res;
    std::set<std::string> derived;

    for (const auto& st : program.stages) {
        if (st.id == "Z") {
            // Z bodies reference finished stages only; one ordered pass.
            for (const auto& r : st.rules) {
                if (!body_satisfied(r, rec, derived)) continue;
                if (const auto* la = std::get_if<LatentAssign>(&r.head)) {
                    auto it = res.latents.find(la->name);
                    if (it == res.latents.end()) {
                        res.latents.emplace(la->name, la->label);
                        res.trace.push_back({st.id, pretty_print(r), satisfied_atoms(r)});
                    } else if (it->second != la->label) {
                        // First fired assignment wins; keep the conflict visible.
                        res.trace.push_back(
                            {st.id,
                             pretty_print(r) + "  # skipped: latent \"" + la->name +
                                 "\" already assigned \"" + it->second + "\"",
                             satisfied_atoms(r)});
                    } else {
                        res.trace.push_back({st.id, pretty_print(r), satisfied_atoms(r)});
                    }
                } else if (const auto* sa = std::get_if<ScoreAdd>(&r.head)) {
                    res.score += sa->delta;
                    res.trace.push_back({st.id, pretty_print(r), satisfied_atoms(r)});
                }
                // Plain heads in Z are rejected by validation; ignore here.
            }
        } else {
            StageState state{derived,
                             st.id == "P" ? &res.fired_p : &res.fired_o,
                             &res.trace};
            run_symbol_stage(st, rec, state);
            derived = std::move(state.derived);
        }
    }

    if (!program.bins.empty()) {
        res.score = std::clamp(res.score, 0.0, program.bins_max());
        res.bin_label = bin_score(res.score, program.bins);
    }
    return res;
}

std::vector<InferenceResult> batch_infer(const Dataset& ds, const ChainProgram& program) {
    std::vector<InferenceResult> out;
    out.reserve(ds.size());
    std::string errors;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        try {
            out.push_back(infer(ds.records[i], program));
        } catch (const Error& e) {
            errors += "row " + std::to_string(i) + ": " + e.what();
            errors += '\n';
        }
    }
    if (!errors.empty()) throw DataError("batch inference failed:\n" + errors);
    return out;
}

std::string to_json(const InferenceResult& r) {
    nlohmann::json j;
    j["fired_P"] = r.fired_p;
    j["fired_O"] = r.fired_o;
    j["latents"] = r.latents;
    j["score"] = r.score;
    if (r.bin_label) j["bin_label"] = *r.bin_label;
    else j["bin_label"] = nullptr;
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& s : r.trace)
        trace.push_back({{"stage", s.stage}, {"rule", s.rule}, {"atoms", s.atoms}});
    j["trace"] = std::move(trace);
    return j.dump();
}

} // namespace lfm
