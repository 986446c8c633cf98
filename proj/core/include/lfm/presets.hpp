#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "lfm/backend.hpp"
#include "lfm/chain.hpp"
#include "lfm/data.hpp"
#include "lfm/narrative.hpp"

namespace lfm {

// A ready-to-run bundle: schema, ground-truth chain program, narrative
// style, profile/prompt templates, and default outcome weights for the
// synthetic generator.  Latent outcome weights are 3x the observed ones so
// the latent signal dominates by construction.
struct Preset {
    std::string name;
    std::string description;
    FeatureSchema schema;
    std::string program_text; // chain DSL source, parses and validates
    ChainProgram program;
    RationaleStyle style;
    std::string profile_pattern;
    ProfileTemplate profile;
    PromptTemplate prompt;
    std::map<std::string, std::vector<double>> outcome_weights;
    double noise_scale = 0.5;
};

// Pretrial-diversion case management: 8 categorical intake features, a
// 4-class completion outcome, and three "Support_*" program latents.
const Preset& diversion_preset();

// Inpatient discharge planning: 6 categorical admission features, a 3-class
// discharge location outcome, and one "Social_Support" latent.  The chain
// rules deliberately never touch the Race feature.
const Preset& discharge_preset();

const Preset* find_preset(std::string_view name); // nullptr when unknown
std::vector<std::string> preset_names();

} // namespace lfm
