#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "lfm/data.hpp"
#include "lfm/engine.hpp"

namespace lfm {

// ---------------------------------------------------------------------------
// Normalization and matching
//
// All text matching in this module runs over a normalized form: ASCII
// letters lowercased, punctuation replaced by spaces, whitespace collapsed.
// Input is assumed to already be NFC-composed UTF-8 (true for all text this
// pipeline produces); non-ASCII bytes pass through untouched.  Matching is
// whole-word: a keyword of k words matches k consecutive normalized words.
// ---------------------------------------------------------------------------

std::string normalize_text(std::string_view text);
std::vector<std::string> normalized_words(std::string_view text);

// Fraction of keywords present in the text; the empty keyword set scores 1.0.
double keyword_coverage(std::string_view text, const std::set<std::string>& keywords);

// Deterministic unsupervised keyword ranking over unigrams and bigrams of
// consecutive non-stopword words.  score(t) = freq(t) * w(first(t)) where
// w(i) = n / (n + i) for first-occurrence sentence index i of n sentences,
// so repeated terms outrank one-off early terms.  Ties break lexicographically
// ascending.  Returns at most k terms.
std::vector<std::string> extract_keywords(std::string_view text, std::size_t k);

// Every (index, term) pair where texts[index] contains a blocklisted term,
// ascending by index then by term.
std::vector<std::pair<std::size_t, std::string>>
term_scan(const std::vector<std::string>& texts, const std::set<std::string>& blocklist);

// ---------------------------------------------------------------------------
// Profiles
// ---------------------------------------------------------------------------

struct ProfileTemplate {
    struct Segment {
        bool placeholder = false;
        std::string text; // literal text, or the feature name
    };
    std::vector<Segment> segments;
    int sentence_limit = 0; // 0 = unlimited; otherwise keep the first n sentences

    // Parses "{feature}" placeholders out of a pattern string.
    static ProfileTemplate parse(std::string_view pattern, int sentence_limit = 0);
    std::string pattern() const;
};

// Substitutes feature values into the template (numerics in shortest
// round-trip form) and applies the sentence limit.  Throws ConfigError when
// a placeholder names a feature the record does not have.
std::string write_profile(const FeatureRecord& rec, const ProfileTemplate& tmpl);

// ---------------------------------------------------------------------------
// Rationales
// ---------------------------------------------------------------------------

// Deterministic rationale rendering: one paragraph per stage transition.
// `phrases` maps fired symbols to display phrases; the paragraph templates
// take the joined items through an "{items}" placeholder; latent labels can
// carry one elaboration sentence each.  For faithful round-tripping, display
// phrases must not contain any latent label as a whole-word sequence —
// labels then appear exactly in the Z paragraph.
struct RationaleStyle {
    std::map<std::string, std::string> phrases; // symbol -> display phrase
    std::string p_template;                     // e.g. "The client presents with {items}."
    std::string o_template;                     // e.g. "These point to {items}."
    std::string z_template;                     // e.g. "Hence the client needs {items}."
    std::map<std::string, std::string> latent_sentences; // label -> sentence
};

// Empty inference results render as the empty string.  Throws ConfigError on
// a fired symbol without a display phrase.  Every fired O-symbol phrase and
// every assigned latent label appears verbatim in the output.
std::string render_rationale(const InferenceResult& result, const RationaleStyle& style);

RationaleStyle style_from_json(const std::string& text);
std::string style_to_json(const RationaleStyle& style);

// ---------------------------------------------------------------------------
// Rationale records
// ---------------------------------------------------------------------------

struct RationaleRecord {
    std::int64_t record_id = 0;
    std::string profile;
    std::string prompt;
    std::string rationale;
    std::map<std::string, std::string> latents;
    double coverage = 0.0;
    bool accepted = false;

    bool operator==(const RationaleRecord&) const = default;
};

std::string to_json(const RationaleRecord& rec);
RationaleRecord rationale_from_json(const std::string& line);
void write_rationales(const std::vector<RationaleRecord>& recs,
                      const std::filesystem::path& path); // JSONL, one per line
std::vector<RationaleRecord> load_rationales(const std::filesystem::path& path);

} // namespace lfm
