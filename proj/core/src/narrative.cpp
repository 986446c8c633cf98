#include "lfm/narrative.hpp"

#include <algorithm>
#include <cctype>

#include "json.hpp"

#include "internal_util.hpp"
#include "lfm/errors.hpp"

namespace lfm {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

std::string normalize_text(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (unsigned char c : text) {
        char mapped;
        if (c >= 0x80) {
            mapped = static_cast<char>(c); // UTF-8 continuation/lead bytes pass through
        } else if (std::isalnum(c)) {
            mapped = static_cast<char>(std::tolower(c));
        } else {
            pending_space = true;
            continue;
        }
        if (pending_space && !out.empty()) out += ' ';
        pending_space = false;
        out += mapped;
    }
    return out;
}

std::vector<std::string> normalized_words(std::string_view text) {
    std::string norm = normalize_text(text);
    std::vector<std::string> words;
    std::size_t i = 0;
    while (i < norm.size()) {
        std::size_t j = norm.find(' ', i);
        if (j == std::string::npos) j = norm.size();
        if (j > i) words.push_back(norm.substr(i, j - i));
        i = j + 1;
    }
    return words;
}

namespace {

// Position of the word sequence `needle` inside `haystack`, or npos.
std::size_t find_word_seq(const std::vector<std::string>& haystack,
                          const std::vector<std::string>& needle) {
    if (needle.empty() || needle.size() > haystack.size()) return std::string::npos;
    for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
        bool all = true;
        for (std::size_t k = 0; k < needle.size(); ++k)
            if (haystack[i + k] != needle[k]) { all = false; break; }
        if (all) return i;
    }
    return std::string::npos;
}

const std::set<std::string>& stopwords() {
    static const std::set<std::string> words = {
        "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "from",
        "had", "has", "have", "he", "her", "his", "i", "if", "in", "is", "it",
        "its", "my", "no", "not", "of", "on", "or", "our", "she", "so", "that",
        "the", "their", "them", "they", "these", "this", "those", "to",
        "us", "was", "we", "were", "will", "with", "would", "you", "your"};
    return words;
}

} // namespace

double keyword_coverage(std::string_view text, const std::set<std::string>& keywords) {
    if (keywords.empty()) return 1.0;
    auto words = normalized_words(text);
    std::size_t present = 0;
    for (const auto& kw : keywords) {
        auto needle = normalized_words(kw);
        if (!needle.empty() && find_word_seq(words, needle) != std::string::npos)
            ++present;
    }
    return static_cast<double>(present) / static_cast<double>(keywords.size());
}

std::vector<std::string> extract_keywords(std::string_view text, std::size_t k) {
    if (k == 0) return {};
    // Split into sentences first, then normalize each one.
    std::vector<std::string> sentences;
    std::string cur;
    for (char c : text) {
        cur += c;
        if (c == '.' || c == '!' || c == '?') {
            sentences.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) sentences.push_back(cur);

    struct Cand {
        double freq = 0;
        std::size_t first_sentence = 0;
    };
    std::map<std::string, Cand> cands;
    std::size_t n_nonempty = 0;
    std::vector<std::vector<std::string>> content_runs_per_sentence;
    std::vector<std::size_t> sentence_index_of_run;

    std::size_t sentence_idx = 0;
    for (const auto& s : sentences) {
        auto words = normalized_words(s);
        if (words.empty()) continue;
        auto add = [&](const std::string& term) {
            auto [it, fresh] = cands.try_emplace(term, Cand{0.0, sentence_idx});
            it->second.freq += 1.0;
            if (fresh) it->second.first_sentence = sentence_idx;
        };
        for (std::size_t i = 0; i < words.size(); ++i) {
            if (stopwords().count(words[i])) continue;
            add(words[i]);
            if (i + 1 < words.size() && !stopwords().count(words[i + 1]))
                add(words[i] + " " + words[i + 1]);
        }
        ++sentence_idx;
        ++n_nonempty;
    }
    if (cands.empty()) return {};

    const double n = static_cast<double>(n_nonempty);
    std::vector<std::pair<double, std::string>> scored;
    scored.reserve(cands.size());
    for (const auto& [term, c] : cands) {
        double weight = n / (n + static_cast<double>(c.first_sentence));
        scored.emplace_back(c.freq * weight, term);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < scored.size() && i < k; ++i)
        out.push_back(scored[i].second);
    return out;
}

std::vector<std::pair<std::size_t, std::string>>
term_scan(const std::vector<std::string>& texts, const std::set<std::string>& blocklist) {
    std::vector<std::pair<std::size_t, std::string>> hits;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        auto words = normalized_words(texts[i]);
        for (const auto& term : blocklist) {
            auto needle = normalized_words(term);
            if (!needle.empty() && find_word_seq(words, needle) != std::string::npos)
                hits.emplace_back(i, term);
        }
    }
    return hits;
}

// ---------------------------------------------------------------------------
// Profiles
// ---------------------------------------------------------------------------

ProfileTemplate ProfileTemplate::parse(std::string_view pattern, int sentence_limit) {
    ProfileTemplate t;
    t.sentence_limit = sentence_limit;
    std::string literal;
    std::size_t i = 0;
    while (i < pattern.size()) {
        if (pattern[i] == '{') {
            std::size_t close = pattern.find('}', i);
            if (close == std::string_view::npos)
                throw ConfigError("unterminated '{' in template: " + std::string(pattern));
            if (!literal.empty()) {
                t.segments.push_back({false, literal});
                literal.clear();
            }
            t.segments.push_back({true, std::string(pattern.substr(i + 1, close - i - 1))});
            i = close + 1;
        } else {
            literal += pattern[i++];
        }
    }
    if (!literal.empty()) t.segments.push_back({false, literal});
    return t;
}

std::string ProfileTemplate::pattern() const {
    std::string out;
    for (const auto& s : segments)
        out += s.placeholder ? "{" + s.text + "}" : s.text;
    return out;
}

std::string write_profile(const FeatureRecord& rec, const ProfileTemplate& tmpl) {
    std::string out;
    for (const auto& seg : tmpl.segments) {
        if (!seg.placeholder) {
            out += seg.text;
            continue;
        }
        auto it = rec.values.find(seg.text);
        if (it == rec.values.end())
            throw ConfigError("unresolved placeholder: {" + seg.text + "}");
        out += value_text(it->second);
    }
    if (tmpl.sentence_limit > 0) {
        int seen = 0;
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (out[i] == '.' || out[i] == '!' || out[i] == '?') {
                if (++seen == tmpl.sentence_limit) {
                    out = out.substr(0, i + 1);
                    break;
                }
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rationales
// ---------------------------------------------------------------------------

namespace {

std::string substitute_items(const std::string& tmpl, const std::string& items) {
    std::string out = tmpl;
    const std::string key = "{items}";
    auto pos = out.find(key);
    if (pos == std::string::npos)
        throw ConfigError("paragraph template is missing {items}: " + tmpl);
    out.replace(pos, key.size(), items);
    return out;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

} // namespace

std::string render_rationale(const InferenceResult& result, const RationaleStyle& style) {
    if (result.fired_p.empty() && result.fired_o.empty() && result.latents.empty())
        return "";

    auto phrase_of = [&](const std::string& symbol) -> const std::string& {
        auto it = style.phrases.find(symbol);
        if (it == style.phrases.end())
            throw ConfigError("missing display phrase for symbol: " + symbol);
        return it->second;
    };

    std::vector<std::string> paragraphs;
    if (!result.fired_p.empty()) {
        std::vector<std::string> items;
        for (const auto& s : result.fired_p) items.push_back(phrase_of(s));
        paragraphs.push_back(substitute_items(style.p_template, join(items, ", ")));
    }
    if (!result.fired_o.empty()) {
        std::vector<std::string> items;
        for (const auto& s : result.fired_o) items.push_back(phrase_of(s));
        paragraphs.push_back(substitute_items(style.o_template, join(items, " and ")));
    }
    if (!result.latents.empty()) {
        std::string z_paragraph;
        std::vector<std::string> labels;
        for (const auto& [name, label] : result.latents) {
            labels.push_back(label);
            auto it = style.latent_sentences.find(label);
            if (it != style.latent_sentences.end()) {
                z_paragraph += it->second;
                z_paragraph += ' ';
            }
        }
        z_paragraph += substitute_items(style.z_template, join(labels, ", "));
        paragraphs.push_back(z_paragraph);
    }
    return join(paragraphs, "\n");
}

RationaleStyle style_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
        RationaleStyle s;
        s.phrases = j.at("phrases").get<std::map<std::string, std::string>>();
        s.p_template = j.at("p_template").get<std::string>();
        s.o_template = j.at("o_template").get<std::string>();
        s.z_template = j.at("z_template").get<std::string>();
        if (j.contains("latent_sentences"))
            s.latent_sentences =
                j.at("latent_sentences").get<std::map<std::string, std::string>>();
        return s;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed style JSON: ") + e.what());
    }
}

std::string style_to_json(const RationaleStyle& style) {
    json j = {{"phrases", style.phrases},
              {"p_template", style.p_template},
              {"o_template", style.o_template},
              {"z_template", style.z_template},
              {"latent_sentences", style.latent_sentences}};
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Rationale records
// ---------------------------------------------------------------------------

std::string to_json(const RationaleRecord& rec) {
    json j = {{"record_id", rec.record_id}, {"profile", rec.profile},
              {"prompt", rec.prompt},       {"rationale", rec.rationale},
              {"latents", rec.latents},     {"coverage", rec.coverage},
              {"accepted", rec.accepted}};
    return j.dump();
}

RationaleRecord rationale_from_json(const std::string& line) {
    try {
        json j = json::parse(line);
        RationaleRecord r;
        r.record_id = j.at("record_id").get<std::int64_t>();
        r.profile = j.at("profile").get<std::string>();
        r.prompt = j.at("prompt").get<std::string>();
        r.rationale = j.at("rationale").get<std::string>();
        r.latents = j.at("latents").get<std::map<std::string, std::string>>();
        r.coverage = j.at("coverage").get<double>();
        r.accepted = j.at("accepted").get<bool>();
        return r;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed rationale record: ") + e.what());
    }
}

void write_rationales(const std::vector<RationaleRecord>& recs,
                      const std::filesystem::path& path) {
    std::string out;
    for (const auto& r : recs) {
        out += to_json(r);
        out += '\n';
    }
    detail::write_file(path, out);
}

std::vector<RationaleRecord> load_rationales(const std::filesystem::path& path) {
    std::string text = detail::read_file(path);
    std::vector<RationaleRecord> out;
    std::size_t i = 0;
    while (i < text.size()) {
        std::size_t j = text.find('\n', i);
        if (j == std::string::npos) j = text.size();
        if (j > i) out.push_back(rationale_from_json(text.substr(i, j - i)));
        i = j + 1;
    }
    return out;
}

} // namespace lfm
