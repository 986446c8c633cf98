#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lfm/chain.hpp"
#include "lfm/data.hpp"

namespace lfm {

struct TraceStep {
    std::string stage;
    std::string rule;               // canonical single-line rule rendering
    std::vector<std::string> atoms; // satisfied body atoms, rendered

    bool operator==(const TraceStep&) const = default;
};

struct InferenceResult {
    std::vector<std::string> fired_p; // firing order
    std::vector<std::string> fired_o; // firing order, across all O-stages
    std::map<std::string, std::string> latents;
    double score = 0.0;
    std::optional<std::string> bin_label;
    std::vector<TraceStep> trace; // respects stage order

    bool operator==(const InferenceResult&) const = default;
};

// Runs only the P stage; returns the P heads derivable from `rec`.
// Throws DataError when a feature test touches a feature absent from the
// record or applies an ordering comparison to a non-numeric value.
std::vector<std::string> ground(const FeatureRecord& rec, const ChainProgram& program);

// Full forward pass over all stages.  Within a stage, rules fire to a fixed
// point; negation-as-failure consults earlier stages only (validation rejects
// same-stage negation).  The first fired assignment to a latent wins; a later
// conflicting assignment is recorded in the trace as a skipped step.  The
// score is the sum of fired score deltas, clamped to [0, bins max] when the
// program has bins, and then binned into `bin_label`.
InferenceResult infer(const FeatureRecord& rec, const ChainProgram& program);

// Label for a score under a bin table: half-open [lo, hi) ranges, last bin
// closed.  Throws DataError when the score falls outside [0, max] or the
// table is empty.
std::string bin_score(double score, const std::vector<Bin>& bins);

// Elementwise infer; errors are aggregated and rethrown as one DataError
// naming each failing row.
std::vector<InferenceResult> batch_infer(const Dataset& ds, const ChainProgram& program);

// One JSON object: {"fired_P":[],"fired_O":[],"latents":{},"score":s,
// "bin_label":l|null,"trace":[{"stage":..,"rule":..,"atoms":[..]}]}
std::string to_json(const InferenceResult& r);

} // namespace lfm
