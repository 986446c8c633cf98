#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "lfm/chain.hpp"
#include "lfm/data.hpp"
#include "lfm/narrative.hpp"

namespace lfm {

// ---------------------------------------------------------------------------
// Requests
// ---------------------------------------------------------------------------

struct ChatMessage {
    std::string role; // "user" | "assistant"
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct CompletionRequest {
    std::string system;
    std::vector<ChatMessage> messages; // alternating user/assistant, starts with user
    double temperature = 0.0;
    int max_tokens = 1024;
};

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

// Deterministic local backend: reads the record embedded in the final user
// turn (see record_footer), runs the chain program over it, and answers with
// a restatement of the record, the rendered rationale, and a machine-readable
// "@@latents {...}" footer.  Records listed in `failure_script` get a
// scripted wrong answer until the same record appears in an earlier shot —
// the knob that drives alignment tests.
struct MockBackend {
    ChainProgram program;
    RationaleStyle style;
    std::set<std::int64_t> failure_script;
};

struct RetryPolicy {
    int max_retries = 2;  // attempts beyond the first
    int backoff_ms = 200; // doubles per retry
};

// Chat-completion HTTP backend.  POSTs {"model","messages","temperature",
// "max_tokens"} to `endpoint` and reads choices[0].message.content.  The
// bearer token is read from the environment variable named by
// `auth_token_env` at call time and never stored or logged.  Retries only
// on timeout and 5xx responses.
struct HttpBackend {
    std::string endpoint; // e.g. "http://127.0.0.1:8080/v1/chat/completions"
    std::string model = "default";
    std::string auth_token_env = "LFM_API_TOKEN";
    int timeout_ms = 30000;
    RetryPolicy retry;
    int max_in_flight = 4; // fan-out cap for batch callers
};

using Backend = std::variant<MockBackend, HttpBackend>;

// ---------------------------------------------------------------------------
// Prompt assembly
// ---------------------------------------------------------------------------

struct PromptTemplate {
    std::string system;
    std::string instruction; // must reference {profile}; staged plans may use {previous}
    std::vector<std::pair<std::string, std::string>> shots; // (user, assistant)
    std::vector<std::string> stage_plan; // empty, or exactly 3 sub-task instructions
};

PromptTemplate prompt_template_from_json(const std::string& text);
std::string prompt_template_to_json(const PromptTemplate& tmpl);

// Machine-readable line embedding a record into a prompt:
//   @@record {"id":<id>,"values":{...}}
std::string record_footer(const FeatureRecord& rec, std::int64_t id);

// Machine-readable latent footer, also used as the assistant side of an
// appended alignment shot:  @@latents {"name":"label",...}
std::string latents_footer(const std::map<std::string, std::string>& latents);

// k shots + the final query; with the system turn the request carries
// 2k + 2 messages.  Throws ConfigError when k exceeds the available shots or
// the instruction lacks {profile}.
CompletionRequest build_prompt(const PromptTemplate& tmpl, std::string_view profile,
                               std::size_t k);

// Issues one completion.  Mock errors (BackendError): final user turn missing
// the record footer, unparseable footer.  Http errors (BackendError, distinct
// messages): timeout, non-2xx status, malformed response body.
std::string complete(const Backend& backend, const CompletionRequest& req);

// Runs the 3-step stage plan sequentially; each step's instruction sees the
// prior answer through {previous}.  Returns the final answer.
std::string complete_staged(const Backend& backend, const PromptTemplate& tmpl,
                            std::string_view profile, std::size_t k);

// Recovers latent assignments from generated text.  A trailing
// "@@latents {...}" footer wins per latent name; otherwise the earliest
// whole-word occurrence of any domain label decides (longer label wins a
// positional tie).  Latents with no evidence are absent from the result.
std::map<std::string, std::string> parse_latents(std::string_view text,
                                                 const std::vector<LatentSpec>& specs);

// ---------------------------------------------------------------------------
// Alignment and fine-tune export
// ---------------------------------------------------------------------------

struct AlignExample {
    std::string profile; // full user-side text, footer included
    std::map<std::string, std::string> truth;
};

struct AlignmentReport {
    std::vector<std::size_t> pass_counts; // one entry per evaluation pass
    bool converged = false;
    std::size_t added_shots = 0;
    std::vector<std::size_t> residual_failures; // example indices, last pass
};

// Evaluates all examples; on failure appends the first failing example as a
// new shot and retries, up to max_iters evaluation passes.
std::pair<PromptTemplate, AlignmentReport>
align(const PromptTemplate& tmpl, const std::vector<AlignExample>& examples,
      const Backend& backend, std::size_t max_iters,
      const std::vector<LatentSpec>& specs);

// One {"messages":[system,user,assistant]} JSON object per accepted record.
// Throws DataError if any record is not accepted.  Returns the line count.
std::size_t export_finetune(const std::vector<RationaleRecord>& records,
                            const PromptTemplate& tmpl,
                            const std::filesystem::path& path);

} // namespace lfm
