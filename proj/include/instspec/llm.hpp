#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "instspec/dsl.hpp"
#include "instspec/problems.hpp"

namespace instspec {

enum class ChatRole { System, User, Assistant };

struct ChatMessage {
    ChatRole role = ChatRole::User;
    std::string content;
};

struct TokenUsage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    std::int64_t total_tokens = 0;
};

struct ChatResult {
    bool ok = false;
    std::string text;
    TokenUsage usage;
    std::string error;  // set when !ok (transport-level failure)
};

// Transport abstraction. All network activity in the project goes through
// implementations of this interface.
class LlmClient {
public:
    virtual ~LlmClient() = default;
    virtual ChatResult complete(std::span<const ChatMessage> messages) = 0;
    virtual std::string identity() const = 0;
};

struct LlmConfig {
    std::string base_url = "http://localhost:8000/v1";
    std::string model_name = "default";
    std::string api_key_env = "INSTSPEC_LLM_API_KEY";
    double temperature = 1.0;
    double timeout_s = 60.0;
    int max_transport_retries = 3;
    std::string transcript_path;  // optional JSONL transcript, secrets redacted

    // Applies INSTSPEC_LLM_BASE_URL / INSTSPEC_LLM_MODEL when set.
    static LlmConfig from_env();
};

// Chat-completions HTTP backend. Retries transport errors and 5xx responses
// with exponential backoff; semantic failures (unparsable replies) are the
// caller's budgeted problem, never retried here.
class HttpLlmClient : public LlmClient {
public:
    explicit HttpLlmClient(LlmConfig config);
    ChatResult complete(std::span<const ChatMessage> messages) override;
    std::string identity() const override;

private:
    LlmConfig config_;
};

// Deterministic stand-in for the LLM. Replies are a pure function of
// (message contents, seed): the RNG is keyed by a digest of the rendered
// messages, so concurrent callers and arrival order cannot change replies.
// With probability failure_rate a reply is unparsable garbage.
class MockLlm : public LlmClient {
public:
    explicit MockLlm(std::uint64_t seed, double failure_rate = 0.0);
    ChatResult complete(std::span<const ChatMessage> messages) override;
    std::string identity() const override;

    std::uint64_t seed() const { return seed_; }
    double failure_rate() const { return failure_rate_; }

private:
    std::uint64_t seed_;
    double failure_rate_;
};

// Evolutionary operator tags. E1/E2 cross two parents; M1/M2/M3 mutate one.
enum class OperatorKind { E1, E2, M1, M2, M3 };
int operator_arity(OperatorKind op);
std::string to_string(OperatorKind op);

// Deterministic template expansion of a subclass into natural language.
// No LLM call involved; equal keys give equal texts.
std::string describe_subclass(const AnyKey& key);

// Prompt renderers. `attempt` >= 2 appends a retry note, which also makes
// retried prompts distinct for the content-keyed mock. `slot` numbers the
// population proposal so each one asks for a distinct candidate.
std::vector<ChatMessage> render_init_prompt(const std::string& subclass_description,
                                            ProblemKind kind, int slot = 1,
                                            int attempt = 1);
std::vector<ChatMessage> render_generation_prompt(OperatorKind op,
                                                  std::span<const HeuristicProgram> parents,
                                                  const std::string& subclass_description,
                                                  ProblemKind kind, int attempt = 1);

struct SelectionCandidateView {
    std::string description;
    std::string program_text;
    double fitness = 0.0;
};

std::vector<ChatMessage> render_selection_prompt(
    const FeatureVector& instance_features, ProblemKind kind,
    std::span<const SelectionCandidateView> candidates, int attempt = 1);

// Extracts the last fenced code block (or falls back to the raw text),
// parses it as a program of the given kind, and attaches a description from
// the preceding prose. Never throws on adversarial text.
struct ProgramResponse {
    std::optional<HeuristicProgram> program;
    std::string diagnostic;
};
ProgramResponse parse_program_response(const std::string& text, ProblemKind kind);

// First standalone integer in [1, candidate_count], or nullopt.
std::optional<int> parse_selection_response(const std::string& text, int candidate_count);

// Fenced-block scanner shared with the mock (last complete block).
std::vector<std::string> extract_fenced_blocks(const std::string& text);

}  // namespace instspec
