#include "instspec/llm.hpp"

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#ifdef INSTSPEC_HAVE_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include "httplib.h"
#include "json.hpp"

#include "instspec/prompts.hpp"

namespace instspec {

namespace {

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

std::string replace_all(std::string text, const std::string& from, const std::string& to) {
    std::size_t pos = 0;
    while ((pos = text.find(from, pos)) != std::string::npos) {
        text.replace(pos, from.size(), to);
        pos += to.size();
    }
    return text;
}

std::string role_name(ChatRole role) {
    switch (role) {
    case ChatRole::System: return "system";
    case ChatRole::User: return "user";
    case ChatRole::Assistant: return "assistant";
    }
    return "user";
}

std::string sequence_phrase(SequenceType s) {
    switch (s) {
    case SequenceType::Random: return "random arrival order";
    case SequenceType::NonDecreasing:
        return "non-decreasing weight order (smallest items first)";
    case SequenceType::NonIncreasing:
        return "non-increasing weight order (largest items first)";
    }
    return "random arrival order";
}

std::string variable_docs(ProblemKind kind) {
    std::string out;
    for (const BindingInfo& info : binding_set(kind)) {
        if (!out.empty()) out += "; ";
        out += info.name + " = " + info.doc;
    }
    return out;
}

const char* operator_instruction(OperatorKind op) {
    switch (op) {
    case OperatorKind::E1: return prompts::kOperatorE1;
    case OperatorKind::E2: return prompts::kOperatorE2;
    case OperatorKind::M1: return prompts::kOperatorM1;
    case OperatorKind::M2: return prompts::kOperatorM2;
    case OperatorKind::M3: return prompts::kOperatorM3;
    }
    return prompts::kOperatorM1;
}

std::string retry_note(int attempt) {
    if (attempt <= 1) return "";
    return "\n(Attempt " + std::to_string(attempt) +
           ": the previous reply could not be used; follow the reply format exactly.)";
}

std::string generation_system(ProblemKind kind) {
    std::string text = prompts::kGenerationSystem;
    text = replace_all(text, "{problem_name}",
                       kind == ProblemKind::Obpp ? "online bin packing"
                                                 : "capacitated vehicle routing");
    text = replace_all(text, "{variable_docs}", variable_docs(kind));
    return text;
}

}  // namespace

int operator_arity(OperatorKind op) {
    switch (op) {
    case OperatorKind::E1:
    case OperatorKind::E2: return 2;
    case OperatorKind::M1:
    case OperatorKind::M2:
    case OperatorKind::M3: return 1;
    }
    return 1;
}

std::string to_string(OperatorKind op) {
    switch (op) {
    case OperatorKind::E1: return "E1";
    case OperatorKind::E2: return "E2";
    case OperatorKind::M1: return "M1";
    case OperatorKind::M2: return "M2";
    case OperatorKind::M3: return "M3";
    }
    return "M1";
}

std::string describe_subclass(const AnyKey& key) {
    std::ostringstream out;
    if (std::holds_alternative<ObppSubclassKey>(key)) {
        const auto& k = std::get<ObppSubclassKey>(key);
        out << "Online bin packing subclass: " << k.num_items
            << " items arrive one at a time in " << sequence_phrase(k.sequence)
            << "; item weights follow a " << to_string(k.weight_dist)
            << " distribution; bins have capacity " << k.capacity << "; capacity ratio "
            << format_double(k.capacity_ratio)
            << " (mean item weight divided by bin capacity).";
    } else {
        const auto& k = std::get<CvrpSubclassKey>(key);
        out << "Capacitated vehicle routing subclass: " << k.num_customers
            << " customers; customer locations follow a " << to_string(k.location_dist)
            << " distribution over the 100x100 plane; customer demands follow a "
            << to_string(k.demand_dist) << " distribution; vehicles have capacity "
            << k.vehicle_capacity << "; capacity ratio " << format_double(k.capacity_ratio)
            << " (mean customer demand divided by vehicle capacity).";
    }
    return out.str();
}

std::vector<ChatMessage> render_init_prompt(const std::string& subclass_description,
                                            ProblemKind kind, int slot, int attempt) {
    std::string instruction = prompts::kOperatorInit;
    instruction += " This is population candidate " + std::to_string(slot) +
                   "; make it distinct from earlier candidates.";
    std::string user = prompts::kGenerationUser;
    user = replace_all(user, "{kind}", kind == ProblemKind::Obpp ? "OBPP" : "CVRP");
    user = replace_all(user, "{operation}", "INIT");
    user = replace_all(user, "{description}", subclass_description);
    user = replace_all(user, "{parents}", "");
    user = replace_all(user, "{instruction}", instruction);
    user = replace_all(user, "{retry_note}", retry_note(attempt));
    return {{ChatRole::System, generation_system(kind)}, {ChatRole::User, user}};
}

std::vector<ChatMessage> render_generation_prompt(OperatorKind op,
                                                  std::span<const HeuristicProgram> parents,
                                                  const std::string& subclass_description,
                                                  ProblemKind kind, int attempt) {
    if (static_cast<int>(parents.size()) != operator_arity(op)) {
        throw std::invalid_argument("render_generation_prompt: parent count must match "
                                    "operator arity");
    }
    std::string parent_text;
    for (std::size_t i = 0; i < parents.size(); ++i) {
        parent_text += "Parent expression " + std::to_string(i + 1);
        if (parents[i].fitness) {
            parent_text += " (fitness " + format_double(*parents[i].fitness) + ")";
        }
        parent_text += ":\n```\n" + parents[i].text + "\n```\n";
    }
    parent_text += "\n";

    std::string user = prompts::kGenerationUser;
    user = replace_all(user, "{kind}", kind == ProblemKind::Obpp ? "OBPP" : "CVRP");
    user = replace_all(user, "{operation}", to_string(op));
    user = replace_all(user, "{description}", subclass_description);
    user = replace_all(user, "{parents}", parent_text);
    user = replace_all(user, "{instruction}", operator_instruction(op));
    user = replace_all(user, "{retry_note}", retry_note(attempt));
    return {{ChatRole::System, generation_system(kind)}, {ChatRole::User, user}};
}

std::vector<ChatMessage> render_selection_prompt(
    const FeatureVector& instance_features, ProblemKind kind,
    std::span<const SelectionCandidateView> candidates, int attempt) {
    if (candidates.empty() || candidates.size() > 16) {
        throw std::invalid_argument("render_selection_prompt: 1..16 candidates required");
    }
    const auto& names = feature_names(kind);
    std::string features;
    for (std::size_t m = 0; m < 5; ++m) {
        features += "  " + names[m] + " = " + format_double(instance_features[m]) + "\n";
    }

    std::string rows;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        std::string entry = prompts::kCandidateEntry;
        entry = replace_all(entry, "{index}", std::to_string(i + 1));
        entry = replace_all(entry, "{description}", candidates[i].description);
        entry = replace_all(entry, "{program}", candidates[i].program_text);
        entry = replace_all(entry, "{fitness}", format_double(candidates[i].fitness));
        rows += entry;
    }

    std::string user = prompts::kSelectionUser;
    user = replace_all(user, "{features}", features);
    user = replace_all(user, "{candidates}", rows);
    user = replace_all(user, "{count}", std::to_string(candidates.size()));
    user = replace_all(user, "{retry_note}", retry_note(attempt));
    return {{ChatRole::System, prompts::kSelectionSystem}, {ChatRole::User, user}};
}

std::vector<std::string> extract_fenced_blocks(const std::string& text) {
    std::vector<std::string> blocks;
    std::size_t pos = 0;
    while (true) {
        const std::size_t open = text.find("```", pos);
        if (open == std::string::npos) break;
        const std::size_t start = open + 3;
        const std::size_t close = text.find("```", start);
        if (close == std::string::npos) break;
        blocks.push_back(text.substr(start, close - start));
        pos = close + 3;
    }
    return blocks;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::vector<std::string> split_lines(const std::string& s) {
    std::vector<std::string> lines;
    std::string current;
    for (char ch : s) {
        if (ch == '\n') {
            lines.push_back(current);
            current.clear();
        } else {
            current.push_back(ch);
        }
    }
    lines.push_back(current);
    return lines;
}

}  // namespace

ProgramResponse parse_program_response(const std::string& text, ProblemKind kind) {
    ProgramResponse response;

    std::string body;
    std::size_t fence_start = std::string::npos;
    const std::vector<std::string> blocks = extract_fenced_blocks(text);
    if (!blocks.empty()) {
        body = blocks.back();
        fence_start = text.rfind("```" + body);
    } else {
        body = text;
    }

    std::vector<std::string> candidates;
    candidates.push_back(trim(body));
    {
        // A fenced block may start with a language hint; also try line by
        // line from the end, where the expression usually sits.
        const std::vector<std::string> lines = split_lines(body);
        if (lines.size() > 1) {
            std::string rest;
            for (std::size_t i = 1; i < lines.size(); ++i) {
                rest += lines[i];
                rest += "\n";
            }
            candidates.push_back(trim(rest));
        }
        for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
            const std::string t = trim(*it);
            if (!t.empty()) candidates.push_back(t);
        }
    }

    std::string diagnostic = "no expression found";
    for (const std::string& candidate : candidates) {
        if (candidate.empty()) continue;
        ParseResult parsed = parse(candidate, kind);
        if (parsed.ok()) {
            HeuristicProgram program = std::move(*parsed.program);
            // Description: nearest non-empty prose line before the fence.
            std::string prose = fence_start == std::string::npos
                                    ? text.substr(0, text.find(candidate))
                                    : text.substr(0, fence_start);
            const std::vector<std::string> prose_lines = split_lines(prose);
            for (auto it = prose_lines.rbegin(); it != prose_lines.rend(); ++it) {
                std::string t = trim(*it);
                if (t.empty()) continue;
                if (!t.empty() && t.back() == ':') t.pop_back();
                program.description = t.substr(0, 240);
                break;
            }
            response.program = std::move(program);
            return response;
        }
        diagnostic = parsed.error.message + " at offset " +
                     std::to_string(parsed.error.offset);
    }
    response.diagnostic = diagnostic;
    return response;
}

std::optional<int> parse_selection_response(const std::string& text, int candidate_count) {
    if (candidate_count < 1) return std::nullopt;
    const auto is_word = [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
    };
    const auto is_digit_at = [&](std::size_t pos) {
        return pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]));
    };
    std::size_t i = 0;
    while (i < text.size()) {
        if (!std::isdigit(static_cast<unsigned char>(text[i]))) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
        // A run is part of a larger token when glued to word characters, a
        // minus sign, or a decimal point with digits on the far side
        // ("3.5"); a sentence-ending period ("pick 2.") does not disqualify.
        const bool decimal_before =
            i >= 2 && text[i - 1] == '.' && is_digit_at(i - 2);
        const bool decimal_after = j < text.size() && text[j] == '.' && is_digit_at(j + 1);
        const bool standalone =
            (i == 0 || (!is_word(text[i - 1]) && text[i - 1] != '-' && !decimal_before)) &&
            (j == text.size() || (!is_word(text[j]) && !decimal_after));
        if (standalone && j - i <= 9) {
            int value = 0;
            std::from_chars(text.data() + i, text.data() + j, value);
            if (value >= 1 && value <= candidate_count) return value;
        }
        i = j;
    }
    return std::nullopt;
}

LlmConfig LlmConfig::from_env() {
    LlmConfig config;
    if (const char* url = std::getenv("INSTSPEC_LLM_BASE_URL")) config.base_url = url;
    if (const char* model = std::getenv("INSTSPEC_LLM_MODEL")) config.model_name = model;
    return config;
}

HttpLlmClient::HttpLlmClient(LlmConfig config) : config_(std::move(config)) {
    if (config_.timeout_s <= 0.0) {
        throw std::invalid_argument("HttpLlmClient: timeout must be positive");
    }
    if (config_.max_transport_retries < 0) {
        throw std::invalid_argument("HttpLlmClient: retries must be >= 0");
    }
}

std::string HttpLlmClient::identity() const {
    return "http(" + config_.base_url + ", model=" + config_.model_name + ")";
}

ChatResult HttpLlmClient::complete(std::span<const ChatMessage> messages) {
    // Split base_url into scheme://host[:port] and path prefix.
    std::string origin = config_.base_url;
    std::string prefix;
    const std::size_t scheme_end = origin.find("://");
    if (scheme_end != std::string::npos) {
        const std::size_t path_start = origin.find('/', scheme_end + 3);
        if (path_start != std::string::npos) {
            prefix = origin.substr(path_start);
            origin = origin.substr(0, path_start);
        }
    }
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

    nlohmann::json request;
    request["model"] = config_.model_name;
    request["temperature"] = config_.temperature;
    nlohmann::json msgs = nlohmann::json::array();
    for (const ChatMessage& m : messages) {
        msgs.push_back({{"role", role_name(m.role)}, {"content", m.content}});
    }
    request["messages"] = std::move(msgs);
    const std::string body = request.dump();

    const char* key = std::getenv(config_.api_key_env.c_str());

    ChatResult result;
    for (int attempt = 0; attempt <= config_.max_transport_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(
                static_cast<int>(500.0 * static_cast<double>(1 << (attempt - 1)))));
        }
        httplib::Client client(origin);
        client.set_connection_timeout(static_cast<time_t>(config_.timeout_s));
        client.set_read_timeout(static_cast<time_t>(config_.timeout_s));
        client.set_write_timeout(static_cast<time_t>(config_.timeout_s));
        if (key != nullptr && key[0] != '\0') client.set_bearer_token_auth(key);

        auto http = client.Post(prefix + "/chat/completions", body, "application/json");
        if (!http) {
            result.error = "transport error: " + httplib::to_string(http.error());
            continue;
        }
        if (http->status >= 500) {
            result.error = "server error: HTTP " + std::to_string(http->status);
            continue;
        }
        if (http->status != 200) {
            result.error = "HTTP " + std::to_string(http->status) + ": " + http->body;
            break;  // 4xx will not improve on retry
        }
        try {
            const nlohmann::json reply = nlohmann::json::parse(http->body);
            result.text = reply.at("choices").at(0).at("message").at("content")
                              .get<std::string>();
            if (reply.contains("usage")) {
                const auto& usage = reply["usage"];
                result.usage.prompt_tokens = usage.value("prompt_tokens", 0);
                result.usage.completion_tokens = usage.value("completion_tokens", 0);
                result.usage.total_tokens = usage.value("total_tokens", 0);
            }
            result.ok = true;
            result.error.clear();
        } catch (const std::exception& e) {
            result.error = std::string("malformed completion payload: ") + e.what();
        }
        break;
    }

    if (!config_.transcript_path.empty()) {
        // Transcript never includes the bearer token.
        static std::mutex transcript_mutex;
        std::lock_guard<std::mutex> lock(transcript_mutex);
        std::ofstream out(config_.transcript_path, std::ios::app);
        nlohmann::json record;
        nlohmann::json rendered = nlohmann::json::array();
        for (const ChatMessage& m : messages) {
            rendered.push_back({{"role", role_name(m.role)}, {"content", m.content}});
        }
        record["messages"] = std::move(rendered);
        record["ok"] = result.ok;
        if (result.ok) {
            record["response"] = result.text;
            record["usage"] = {{"prompt_tokens", result.usage.prompt_tokens},
                               {"completion_tokens", result.usage.completion_tokens},
                               {"total_tokens", result.usage.total_tokens}};
        } else {
            record["error"] = result.error;
        }
        out << record.dump() << "\n";
    }
    return result;
}

}  // namespace instspec
