#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lfm/backend.hpp"
#include "lfm/chain.hpp"
#include "lfm/data.hpp"
#include "lfm/narrative.hpp"

namespace lfm {

// ---------------------------------------------------------------------------
// Dataset generation
// ---------------------------------------------------------------------------

struct GenConfig {
    FeatureSchema schema;
    std::size_t n = 0;
    ChainProgram program; // ground-truth latent rules
    // Encoded column ("feature", "feature=value" or "latent=label") -> one
    // weight per label-domain class.
    std::map<std::string, std::vector<double>> outcome_weights;
    double noise_scale = 0.0;
    std::uint64_t seed = 0;
};

struct GenResult {
    Dataset dataset; // visible features only, every record labeled
    // Ground-truth latent assignments, parallel to dataset.records; written
    // to a sibling "<name>.latents.csv", never into the visible schema.
    std::vector<std::map<std::string, std::string>> latents;
};

// Samples features uniformly over their domains (numerics uniform in
// [min,max], text features empty), derives latents through the program, and
// labels each record by the highest-scoring class of
//   score[c] = sum over weighted columns of w[c]*encoded_value
//            + noise_scale * standard normal draw per class,
// ties resolved toward the lowest class index.  Deterministic under seed.
// Throws ConfigError on invalid config (n = 0, unknown weight column, weight
// vector length != class count, invalid program) and DataError when the
// program leaves some latent unassigned for a sampled record.
GenResult gen_dataset(const GenConfig& cfg);

// ---------------------------------------------------------------------------
// Self-instruct rationale enlargement with keyword QC
// ---------------------------------------------------------------------------

struct EnlargeConfig {
    std::size_t n_target = 0;
    std::vector<RationaleRecord> baseline; // hand-written rationales, non-empty
    double coverage_threshold = 1.0;       // in (0, 1]
    std::vector<std::string> required_tokens;
    std::uint64_t seed = 0;
};

struct EnlargeResult {
    std::vector<RationaleRecord> records; // accepted only
    std::size_t attempts = 0;
    double acceptance_rate = 0.0; // accepted / attempts
    bool budget_exhausted = false; // stopped at 10*n_target before n_target
};

// Repeatedly samples a record and one baseline rationale as the in-context
// shot, completes through the backend, and accepts the response iff keyword
// coverage over the record's feature values plus required_tokens reaches the
// threshold AND every required token is present.  Stops at n_target accepted
// or 10*n_target attempts (budget_exhausted then reports the shortfall).
EnlargeResult enlarge(const EnlargeConfig& cfg, const Dataset& ds,
                      const ChainProgram& program, const PromptTemplate& tmpl,
                      const ProfileTemplate& profile_tmpl, const Backend& backend);

} // namespace lfm
