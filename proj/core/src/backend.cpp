#include "lfm/backend.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "internal_util.hpp"
#include "lfm/engine.hpp"
#include "lfm/errors.hpp"

namespace lfm {

using nlohmann::json;

namespace {

constexpr std::string_view kRecordTag = "@@record ";
constexpr std::string_view kLatentsTag = "@@latents ";

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t i = 0;
    while (i <= text.size()) {
        std::size_t j = text.find('\n', i);
        if (j == std::string_view::npos) {
            lines.push_back(text.substr(i));
            break;
        }
        lines.push_back(text.substr(i, j - i));
        i = j + 1;
    }
    return lines;
}

std::optional<std::string_view> last_tagged_line(std::string_view text,
                                                 std::string_view tag) {
    std::optional<std::string_view> found;
    for (auto line : split_lines(text))
        if (line.substr(0, tag.size()) == tag) found = line.substr(tag.size());
    return found;
}

std::string replace_all(std::string text, std::string_view key, std::string_view value) {
    std::size_t pos = 0;
    while ((pos = text.find(key, pos)) != std::string::npos) {
        text.replace(pos, key.size(), value);
        pos += value.size();
    }
    return text;
}

} // namespace

// ---------------------------------------------------------------------------
// Footers and templates
// ---------------------------------------------------------------------------

std::string record_footer(const FeatureRecord& rec, std::int64_t id) {
    json values = json::object();
    for (const auto& [name, v] : rec.values) {
        if (const auto* s = std::get_if<std::string>(&v)) values[name] = *s;
        else values[name] = std::get<double>(v);
    }
    json j = {{"id", id}, {"values", values}};
    return std::string(kRecordTag) + j.dump();
}

std::string latents_footer(const std::map<std::string, std::string>& latents) {
    return std::string(kLatentsTag) + json(latents).dump();
}

PromptTemplate prompt_template_from_json(const std::string& text) {
    try {
        json j = json::parse(text);
        PromptTemplate t;
        t.system = j.at("system").get<std::string>();
        t.instruction = j.at("instruction").get<std::string>();
        if (j.contains("shots"))
            for (const auto& s : j.at("shots"))
                t.shots.emplace_back(s.at(0).get<std::string>(), s.at(1).get<std::string>());
        if (j.contains("stage_plan"))
            t.stage_plan = j.at("stage_plan").get<std::vector<std::string>>();
        return t;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed prompt template JSON: ") + e.what());
    }
}

std::string prompt_template_to_json(const PromptTemplate& tmpl) {
    json shots = json::array();
    for (const auto& [in, out] : tmpl.shots) shots.push_back({in, out});
    json j = {{"system", tmpl.system},
              {"instruction", tmpl.instruction},
              {"shots", shots},
              {"stage_plan", tmpl.stage_plan}};
    return j.dump(2) + "\n";
}

CompletionRequest build_prompt(const PromptTemplate& tmpl, std::string_view profile,
                               std::size_t k) {
    if (k > tmpl.shots.size())
        throw ConfigError("requested " + std::to_string(k) + " shots but template has " +
                          std::to_string(tmpl.shots.size()));
    if (tmpl.instruction.find("{profile}") == std::string::npos)
        throw ConfigError("instruction template must reference {profile}");
    CompletionRequest req;
    req.system = tmpl.system;
    for (std::size_t i = 0; i < k; ++i) {
        req.messages.push_back({"user", tmpl.shots[i].first});
        req.messages.push_back({"assistant", tmpl.shots[i].second});
    }
    req.messages.push_back(
        {"user", replace_all(tmpl.instruction, "{profile}", profile)});
    return req;
}

// ---------------------------------------------------------------------------
// Mock completion
// ---------------------------------------------------------------------------

namespace {

struct EmbeddedRecord {
    std::int64_t id = 0;
    FeatureRecord record;
};

EmbeddedRecord parse_record_footer(std::string_view payload) {
    try {
        json j = json::parse(payload);
        EmbeddedRecord out;
        out.id = j.at("id").get<std::int64_t>();
        for (const auto& [name, v] : j.at("values").items()) {
            if (v.is_string()) out.record.values[name] = v.get<std::string>();
            else if (v.is_number()) out.record.values[name] = v.get<double>();
            else throw BackendError("record footer value must be string or number: " + name);
        }
        return out;
    } catch (const json::exception& e) {
        throw BackendError(std::string("unparseable record footer: ") + e.what());
    }
}

std::string mock_restatement(const FeatureRecord& rec) {
    std::string out = "Reviewing the record:";
    bool first = true;
    for (const auto& [name, v] : rec.values) {
        out += first ? " " : "; ";
        out += name + " is " + value_text(v);
        first = false;
    }
    out += '.';
    return out;
}

std::string mock_complete(const MockBackend& mock, const CompletionRequest& req) {
    if (req.messages.empty() || req.messages.back().role != "user")
        throw BackendError("request must end with a user turn");
    auto payload = last_tagged_line(req.messages.back().content, kRecordTag);
    if (!payload)
        throw BackendError("final user turn is missing the @@record footer");
    EmbeddedRecord embedded = parse_record_footer(*payload);

    if (mock.failure_script.count(embedded.id)) {
        // The scripted failure clears once the record shows up as a shot.
        bool seen_as_shot = false;
        for (std::size_t i = 0; i + 1 < req.messages.size(); ++i) {
            if (req.messages[i].role != "user") continue;
            if (auto shot = last_tagged_line(req.messages[i].content, kRecordTag)) {
                try {
                    if (parse_record_footer(*shot).id == embedded.id) seen_as_shot = true;
                } catch (const BackendError&) {
                    // A shot without a parseable footer cannot clear the script.
                }
            }
        }
        if (!seen_as_shot)
            return "The profile does not give enough signal to name latent factors.\n" +
                   latents_footer({});
    }

    InferenceResult res = infer(embedded.record, mock.program);
    std::string rationale = render_rationale(res, mock.style);
    std::string out = mock_restatement(embedded.record);
    if (!rationale.empty()) {
        out += '\n';
        out += rationale;
    }
    out += '\n';
    out += latents_footer(res.latents);
    return out;
}

// ---------------------------------------------------------------------------
// HTTP completion
// ---------------------------------------------------------------------------

// Splits "http://host:port/path" into the client base and the request path.
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
    auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos)
        throw ConfigError("endpoint must start with http:// or https://: " + endpoint);
    auto path_start = endpoint.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {endpoint, "/"};
    return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

std::string http_complete(const HttpBackend& be, const CompletionRequest& req) {
    auto [base, path] = split_endpoint(be.endpoint);

    json messages = json::array();
    messages.push_back({{"role", "system"}, {"content", req.system}});
    for (const auto& m : req.messages)
        messages.push_back({{"role", m.role}, {"content", m.content}});
    json body = {{"model", be.model},
                 {"messages", messages},
                 {"temperature", req.temperature},
                 {"max_tokens", req.max_tokens}};
    const std::string payload = body.dump();

    httplib::Client client(base);
    client.set_connection_timeout(0, be.timeout_ms * 1000LL);
    client.set_read_timeout(0, be.timeout_ms * 1000LL);
    client.set_write_timeout(0, be.timeout_ms * 1000LL);
    httplib::Headers headers;
    if (!be.auth_token_env.empty()) {
        if (const char* token = std::getenv(be.auth_token_env.c_str());
            token && *token)
            headers.emplace("Authorization", std::string("Bearer ") + token);
    }

    httplib::Result result;
    int status = 0;
    for (int attempt = 0; attempt <= be.retry.max_retries; ++attempt) {
        if (attempt > 0 && be.retry.backoff_ms > 0)
            std::this_thread::sleep_for(
                std::chrono::milliseconds(be.retry.backoff_ms << (attempt - 1)));
        result = client.Post(path, headers, payload, "application/json");
        if (!result) continue;            // timeout / connection failure: retry
        status = result->status;
        if (status >= 500) continue;      // server error: retry
        break;                            // success or non-retryable client error
    }
    if (!result) {
        bool timed_out = result.error() == httplib::Error::ConnectionTimeout ||
                         result.error() == httplib::Error::Read;
        throw BackendError(std::string(timed_out ? "backend timeout: "
                                                 : "backend connection failed: ") +
                           httplib::to_string(result.error()));
    }
    if (status < 200 || status >= 300)
        throw BackendError("backend returned HTTP " + std::to_string(status));
    try {
        json j = json::parse(result->body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw BackendError(std::string("malformed backend response: ") + e.what());
    }
}

} // namespace

std::string complete(const Backend& backend, const CompletionRequest& req) {
    if (const auto* mock = std::get_if<MockBackend>(&backend))
        return mock_complete(*mock, req);
    return http_complete(std::get<HttpBackend>(backend), req);
}

std::string complete_staged(const Backend& backend, const PromptTemplate& tmpl,
                            std::string_view profile, std::size_t k) {
    if (tmpl.stage_plan.size() != 3)
        throw ConfigError("stage_plan must hold exactly 3 sub-task instructions");
    std::string previous;
    std::string answer;
    for (const auto& step : tmpl.stage_plan) {
        PromptTemplate staged = tmpl;
        staged.instruction = replace_all(step, "{previous}", previous);
        answer = complete(backend, build_prompt(staged, profile, k));
        previous = answer;
    }
    return answer;
}

// ---------------------------------------------------------------------------
// Latent parsing
// ---------------------------------------------------------------------------

std::map<std::string, std::string> parse_latents(std::string_view text,
                                                 const std::vector<LatentSpec>& specs) {
    std::map<std::string, std::string> footer;
    if (auto payload = last_tagged_line(text, kLatentsTag)) {
        try {
            json j = json::parse(*payload);
            for (const auto& [name, v] : j.items())
                if (v.is_string()) footer[name] = v.get<std::string>();
        } catch (const json::exception&) {
            // An unparseable footer falls back to the free-text scan.
        }
    }

    // Strip machine-readable lines so their payloads cannot double as prose.
    std::string prose;
    for (auto line : split_lines(text)) {
        if (line.substr(0, 2) == "@@") continue;
        prose += line;
        prose += '\n';
    }
    auto words = normalized_words(prose);

    std::map<std::string, std::string> out;
    for (const auto& spec : specs) {
        if (auto it = footer.find(spec.name); it != footer.end()) {
            const auto& dom = spec.domain;
            if (std::find(dom.begin(), dom.end(), it->second) != dom.end()) {
                out[spec.name] = it->second;
                continue;
            }
        }
        std::size_t best_pos = std::string::npos;
        std::size_t best_len = 0;
        const std::string* best = nullptr;
        for (const auto& label : spec.domain) {
            auto needle = normalized_words(label);
            std::size_t pos = std::string::npos;
            if (!needle.empty()) {
                for (std::size_t i = 0; i + needle.size() <= words.size(); ++i) {
                    bool match = true;
                    for (std::size_t w = 0; w < needle.size(); ++w)
                        if (words[i + w] != needle[w]) { match = false; break; }
                    if (match) { pos = i; break; }
                }
            }
            if (pos == std::string::npos) continue;
            bool better = pos < best_pos ||
                          (pos == best_pos &&
                           (needle.size() > best_len ||
                            (needle.size() == best_len && best && label < *best)));
            if (better) {
                best_pos = pos;
                best_len = needle.size();
                best = &label;
            }
        }
        if (best) out[spec.name] = *best;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Alignment
// ---------------------------------------------------------------------------

std::pair<PromptTemplate, AlignmentReport>
align(const PromptTemplate& tmpl, const std::vector<AlignExample>& examples,
      const Backend& backend, std::size_t max_iters,
      const std::vector<LatentSpec>& specs) {
    if (max_iters == 0) throw ConfigError("align needs max_iters >= 1");
    if (examples.empty()) throw ConfigError("align needs at least one example");

    PromptTemplate current = tmpl;
    AlignmentReport report;
    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        std::vector<std::size_t> failures;
        for (std::size_t i = 0; i < examples.size(); ++i) {
            auto req = build_prompt(current, examples[i].profile, current.shots.size());
            auto got = parse_latents(complete(backend, req), specs);
            if (got != examples[i].truth) failures.push_back(i);
        }
        report.pass_counts.push_back(examples.size() - failures.size());
        report.residual_failures = failures;
        if (failures.empty()) {
            report.converged = true;
            break;
        }
        if (iter + 1 == max_iters) break; // out of budget; report the failures
        const AlignExample& fix = examples[failures.front()];
        current.shots.emplace_back(fix.profile, latents_footer(fix.truth));
        ++report.added_shots;
    }
    return {current, report};
}

std::size_t export_finetune(const std::vector<RationaleRecord>& records,
                            const PromptTemplate& tmpl,
                            const std::filesystem::path& path) {
    std::string out;
    for (const auto& r : records) {
        if (!r.accepted)
            throw DataError("fine-tune export hit an unaccepted rationale (record_id " +
                            std::to_string(r.record_id) + ")");
        json line = {{"messages",
                      {{{"role", "system"}, {"content", tmpl.system}},
                       {{"role", "user"}, {"content", r.prompt}},
                       {{"role", "assistant"}, {"content", r.rationale}}}}};
        out += line.dump();
        out += '\n';
    }
    detail::write_file(path, out);
    return records.size();
}

} // namespace lfm
