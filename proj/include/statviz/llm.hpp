#pragma once

#include "statviz/error.hpp"
#include "statviz/http.hpp"

#include <json.hpp>

#include <chrono>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace statviz::llm {

using nlohmann::json;

enum class Role { system, user, assistant, tool_result };

struct ImageAttachment {
    std::string media_type;
    std::string base64;
    bool operator==(const ImageAttachment&) const = default;
};

struct ToolCall {
    std::string id;
    std::string name;
    json arguments = json::object();
    bool operator==(const ToolCall&) const = default;
};

struct Message {
    Role role = Role::user;
    std::string content;
    std::optional<std::string> tool_call_id;  // tool_result only
    std::vector<ToolCall> tool_calls;         // assistant only
    std::optional<ImageAttachment> image;     // tool_result only
    bool operator==(const Message&) const = default;
};

enum class ParamType { string, integer, number, boolean };

struct ParamSpec {
    std::string name;
    ParamType type = ParamType::string;
    std::string description;
    bool required = false;
    bool operator==(const ParamSpec&) const = default;
};

struct ToolSpec {
    std::string name;
    std::string description;
    std::vector<ParamSpec> parameters;

    // JSON Schema object describing the parameters.
    json parameter_schema() const;
    bool operator==(const ToolSpec&) const = default;
};

enum class FinishReason { stop, tool_use, length, error };

struct Usage {
    long input_tokens = 0;
    long output_tokens = 0;
    bool operator==(const Usage&) const = default;
};

struct ModelTurn {
    std::optional<std::string> text;
    std::vector<ToolCall> tool_calls;
    std::optional<std::string> reasoning_trace;
    FinishReason finish = FinishReason::stop;
    std::optional<std::string> error;  // diagnostics for finish == error
    std::optional<json> raw;           // offending payload, when relevant
    Usage usage;

    static ModelTurn stop(std::string text);
    static ModelTurn tool_use(std::vector<ToolCall> calls, std::optional<std::string> text = std::nullopt);
    static ModelTurn failure(std::string diagnostics, std::optional<json> raw = std::nullopt);

    bool operator==(const ModelTurn&) const = default;
};

std::string_view to_string(Role r);
std::string_view to_string(FinishReason f);
Role role_from_string(std::string_view s);
FinishReason finish_from_string(std::string_view s);

void to_json(json& j, const ToolCall& c);
void from_json(const json& j, ToolCall& c);
void to_json(json& j, const Message& m);
void from_json(const json& j, Message& m);
void to_json(json& j, const ToolSpec& t);
void to_json(json& j, const ModelTurn& t);
void from_json(const json& j, ModelTurn& t);

struct ChatRequest {
    std::string system;
    std::vector<Message> history;
    std::vector<ToolSpec> tools;
};
void to_json(json& j, const ChatRequest& r);

struct ProviderReply {
    ModelTurn turn;
    json raw_request;
    json raw_response;
};

// One provider family behind a common surface. send() throws
// TransportError for retryable failures; anything the provider answered is
// returned as a turn (possibly finish == error).
class ChatProvider {
public:
    virtual ~ChatProvider() = default;
    virtual std::string name() const = 0;
    virtual bool accepts_images() const { return false; }
    virtual ProviderReply send(const ChatRequest& request) = 0;
};

struct ProviderSettings {
    std::string family = "mock";  // mock | openai | anthropic
    std::string endpoint;
    std::string model;
    std::optional<double> temperature;  // provider default when unset
    int max_tokens = 4096;
    std::string api_key;
    bool images = false;  // send plot images back to the model
};

// Chat-completions style wire format (messages with role "tool", function
// tool_calls with JSON-encoded argument strings).
class ChatCompletionsProvider final : public ChatProvider {
public:
    ChatCompletionsProvider(ProviderSettings settings, std::shared_ptr<http::Transport> transport);
    std::string name() const override { return "chat-completions:" + settings_.model; }
    bool accepts_images() const override { return settings_.images; }
    ProviderReply send(const ChatRequest& request) override;

    static json build_request(const ChatRequest& request, const ProviderSettings& settings);
    static ModelTurn parse_response(const json& response);

private:
    ProviderSettings settings_;
    std::shared_ptr<http::Transport> transport_;
};

// Tool-use style wire format (content blocks, tool_use / tool_result blocks).
class ToolUseProvider final : public ChatProvider {
public:
    ToolUseProvider(ProviderSettings settings, std::shared_ptr<http::Transport> transport);
    std::string name() const override { return "tool-use:" + settings_.model; }
    bool accepts_images() const override { return settings_.images; }
    ProviderReply send(const ChatRequest& request) override;

    static json build_request(const ChatRequest& request, const ProviderSettings& settings);
    static ModelTurn parse_response(const json& response);

private:
    ProviderSettings settings_;
    std::shared_ptr<http::Transport> transport_;
};

// Replays a fixed program of turns. Each send() pops the next turn; once the
// program is exhausted every call yields an error turn.
class ScriptedProvider final : public ChatProvider {
public:
    explicit ScriptedProvider(std::vector<ModelTurn> program, bool images = false);
    std::string name() const override { return "scripted"; }
    bool accepts_images() const override { return images_; }
    ProviderReply send(const ChatRequest& request) override;

    std::size_t calls() const;
    std::vector<ChatRequest> requests() const;

private:
    mutable std::mutex mutex_;
    std::deque<ModelTurn> program_;
    std::vector<ChatRequest> requests_;
    std::size_t calls_ = 0;
    bool images_;
};

std::shared_ptr<ScriptedProvider> script_mock(std::vector<ModelTurn> program);
// Reads a JSON array of turns (ModelTurn JSON form).
std::vector<ModelTurn> load_script(const std::filesystem::path& path);
// Turns as the provider returned them, in order, from an llm_log file.
std::vector<ModelTurn> load_logged_turns(const std::filesystem::path& llm_log);

std::shared_ptr<ChatProvider> make_provider(const ProviderSettings& settings,
                                            std::shared_ptr<http::Transport> transport);

struct GatewayOptions {
    std::optional<std::filesystem::path> log_path;  // line-delimited JSON
    int max_attempts = 3;
    std::chrono::milliseconds base_backoff{500};
    std::chrono::milliseconds max_backoff{8000};
    std::function<void(std::chrono::milliseconds)> sleep;  // defaults to this_thread::sleep_for
};

// Validates requests, retries transport failures with capped exponential
// backoff, checks tool calls against the offered specs and logs each
// exchange. One gateway serves one run.
class Gateway {
public:
    Gateway(std::shared_ptr<ChatProvider> provider, GatewayOptions options = {});

    ModelTurn complete(const std::vector<Message>& history, const std::string& system,
                       const std::vector<ToolSpec>& tools);

    const ChatProvider& provider() const { return *provider_; }
    int calls() const noexcept { return calls_; }
    Usage total_usage() const noexcept { return usage_; }

private:
    std::shared_ptr<ChatProvider> provider_;
    GatewayOptions options_;
    int calls_ = 0;
    Usage usage_;
};

// Empty when the history is acceptable, otherwise a description of the
// first problem.
std::optional<std::string> check_history(const std::vector<Message>& history);
std::optional<std::string> check_tool_specs(const std::vector<ToolSpec>& tools);
std::optional<std::string> check_tool_call(const ToolCall& call, const std::vector<ToolSpec>& tools);

} // namespace statviz::llm
