#include "statviz/llm.hpp"

#include "statviz/util.hpp"

#include <fmt/format.h>

#include <set>
#include <thread>

namespace statviz::llm {

namespace fs = std::filesystem;

// --- enums and JSON forms ---------------------------------------------------

std::string_view to_string(Role r) {
    switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    case Role::tool_result: return "tool_result";
    }
    return "user";
}

std::string_view to_string(FinishReason f) {
    switch (f) {
    case FinishReason::stop: return "stop";
    case FinishReason::tool_use: return "tool_use";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
    }
    return "error";
}

Role role_from_string(std::string_view s) {
    if (s == "system") return Role::system;
    if (s == "user") return Role::user;
    if (s == "assistant") return Role::assistant;
    if (s == "tool_result") return Role::tool_result;
    throw ParseError("unknown message role", std::string(s));
}

FinishReason finish_from_string(std::string_view s) {
    if (s == "stop") return FinishReason::stop;
    if (s == "tool_use") return FinishReason::tool_use;
    if (s == "length") return FinishReason::length;
    if (s == "error") return FinishReason::error;
    throw ParseError("unknown finish reason", std::string(s));
}

ModelTurn ModelTurn::stop(std::string text) {
    ModelTurn t;
    t.text = std::move(text);
    t.finish = FinishReason::stop;
    return t;
}

ModelTurn ModelTurn::tool_use(std::vector<ToolCall> calls, std::optional<std::string> text) {
    ModelTurn t;
    t.text = std::move(text);
    t.tool_calls = std::move(calls);
    t.finish = FinishReason::tool_use;
    return t;
}

ModelTurn ModelTurn::failure(std::string diagnostics, std::optional<json> raw) {
    ModelTurn t;
    t.finish = FinishReason::error;
    t.error = std::move(diagnostics);
    t.raw = std::move(raw);
    return t;
}

void to_json(json& j, const ToolCall& c) {
    j = json{{"id", c.id}, {"name", c.name}, {"arguments", c.arguments}};
}

void from_json(const json& j, ToolCall& c) {
    c.id = j.value("id", "");
    c.name = j.at("name").get<std::string>();
    c.arguments = j.contains("arguments") ? j.at("arguments") : json::object();
}

void to_json(json& j, const Message& m) {
    j = json{{"role", to_string(m.role)}, {"content", m.content}};
    if (m.tool_call_id) {
        j["tool_call_id"] = *m.tool_call_id;
    }
    if (!m.tool_calls.empty()) {
        j["tool_calls"] = m.tool_calls;
    }
    if (m.image) {
        j["image"] = {{"media_type", m.image->media_type}, {"base64", m.image->base64}};
    }
}

void from_json(const json& j, Message& m) {
    m.role = role_from_string(j.at("role").get<std::string>());
    m.content = j.value("content", "");
    if (j.contains("tool_call_id")) {
        m.tool_call_id = j.at("tool_call_id").get<std::string>();
    }
    if (j.contains("tool_calls")) {
        m.tool_calls = j.at("tool_calls").get<std::vector<ToolCall>>();
    }
    if (j.contains("image")) {
        m.image = ImageAttachment{j["image"].at("media_type").get<std::string>(), j["image"].at("base64").get<std::string>()};
    }
}

namespace {

std::string_view type_name(ParamType t) {
    switch (t) {
    case ParamType::string: return "string";
    case ParamType::integer: return "integer";
    case ParamType::number: return "number";
    case ParamType::boolean: return "boolean";
    }
    return "string";
}

} // namespace

json ToolSpec::parameter_schema() const {
    json props = json::object();
    json required = json::array();
    for (const auto& p : parameters) {
        props[p.name] = {{"type", type_name(p.type)}, {"description", p.description}};
        if (p.required) {
            required.push_back(p.name);
        }
    }
    return {{"type", "object"}, {"properties", props}, {"required", required}, {"additionalProperties", false}};
}

void to_json(json& j, const ToolSpec& t) {
    j = json{{"name", t.name}, {"description", t.description}, {"parameters", t.parameter_schema()}};
}

void to_json(json& j, const ModelTurn& t) {
    j = json::object();
    j["finish"] = to_string(t.finish);
    j["text"] = t.text ? json(*t.text) : json(nullptr);
    j["tool_calls"] = t.tool_calls;
    if (t.reasoning_trace) {
        j["reasoning_trace"] = *t.reasoning_trace;
    }
    if (t.error) {
        j["error"] = *t.error;
    }
    if (t.raw) {
        j["raw"] = *t.raw;
    }
    j["usage"] = {{"input_tokens", t.usage.input_tokens}, {"output_tokens", t.usage.output_tokens}};
}

void from_json(const json& j, ModelTurn& t) {
    t = ModelTurn{};
    if (j.contains("text") && j["text"].is_string()) {
        t.text = j["text"].get<std::string>();
    }
    if (j.contains("tool_calls")) {
        t.tool_calls = j["tool_calls"].get<std::vector<ToolCall>>();
    }
    if (j.contains("reasoning_trace") && j["reasoning_trace"].is_string()) {
        t.reasoning_trace = j["reasoning_trace"].get<std::string>();
    }
    if (j.contains("finish")) {
        t.finish = finish_from_string(j["finish"].get<std::string>());
    } else {
        t.finish = t.tool_calls.empty() ? FinishReason::stop : FinishReason::tool_use;
    }
    if (j.contains("error") && j["error"].is_string()) {
        t.error = j["error"].get<std::string>();
    }
    if (j.contains("raw")) {
        t.raw = j["raw"];
    }
    if (j.contains("usage")) {
        t.usage.input_tokens = j["usage"].value("input_tokens", 0L);
        t.usage.output_tokens = j["usage"].value("output_tokens", 0L);
    }
}

void to_json(json& j, const ChatRequest& r) {
    j = json{{"system", r.system}, {"history", r.history}, {"tools", r.tools}};
}

// --- validation ---------------------------------------------------------------

std::optional<std::string> check_history(const std::vector<Message>& history) {
    std::set<std::string> offered;
    for (std::size_t i = 0; i < history.size(); ++i) {
        const auto& m = history[i];
        switch (m.role) {
        case Role::system:
            return fmt::format("message {}: system text belongs in the system prompt, not the history", i);
        case Role::user:
            if (!m.tool_calls.empty() || m.tool_call_id) {
                return fmt::format("message {}: user message carries tool fields", i);
            }
            break;
        case Role::assistant:
            for (const auto& c : m.tool_calls) {
                if (c.id.empty() || !offered.insert(c.id).second) {
                    return fmt::format("message {}: tool call id '{}' is empty or repeated", i, c.id);
                }
            }
            break;
        case Role::tool_result:
            if (!m.tool_call_id || !offered.contains(*m.tool_call_id)) {
                return fmt::format("message {}: tool result does not answer a prior tool call", i);
            }
            break;
        }
    }
    if (!history.empty() && history.front().role != Role::user) {
        return std::string("history must start with a user message");
    }
    return std::nullopt;
}

std::optional<std::string> check_tool_specs(const std::vector<ToolSpec>& tools) {
    std::set<std::string> names;
    for (const auto& t : tools) {
        if (t.name.empty() || !names.insert(t.name).second) {
            return fmt::format("tool name '{}' is empty or repeated", t.name);
        }
        std::set<std::string> params;
        for (const auto& p : t.parameters) {
            if (p.name.empty() || !params.insert(p.name).second) {
                return fmt::format("tool {} has an empty or repeated parameter '{}'", t.name, p.name);
            }
        }
    }
    return std::nullopt;
}

std::optional<std::string> check_tool_call(const ToolCall& call, const std::vector<ToolSpec>& tools) {
    const ToolSpec* spec = nullptr;
    for (const auto& t : tools) {
        if (t.name == call.name) {
            spec = &t;
        }
    }
    if (!spec) {
        return fmt::format("tool '{}' was not offered", call.name);
    }
    if (!call.arguments.is_object()) {
        return fmt::format("arguments to {} are not an object", call.name);
    }
    for (const auto& [key, value] : call.arguments.items()) {
        const ParamSpec* param = nullptr;
        for (const auto& p : spec->parameters) {
            if (p.name == key) {
                param = &p;
            }
        }
        if (!param) {
            return fmt::format("{} has no parameter '{}'", call.name, key);
        }
        bool ok = false;
        switch (param->type) {
        case ParamType::string: ok = value.is_string(); break;
        case ParamType::integer: ok = value.is_number_integer(); break;
        case ParamType::number: ok = value.is_number(); break;
        case ParamType::boolean: ok = value.is_boolean(); break;
        }
        if (!ok) {
            return fmt::format("{}.{} must be {}, got {}", call.name, key, type_name(param->type), value.dump());
        }
    }
    for (const auto& p : spec->parameters) {
        if (p.required && !call.arguments.contains(p.name)) {
            return fmt::format("{} is missing required parameter '{}'", call.name, p.name);
        }
    }
    return std::nullopt;
}

// --- chat-completions adapter -------------------------------------------------

namespace {

http::Response post_json(http::Transport& transport, const std::string& url, const json& body,
                         http::Headers headers) {
    headers["Content-Type"] = "application/json";
    auto response = transport.post(url, body.dump(), headers);
    if (response.status == 429 || response.status >= 500) {
        throw TransportError(fmt::format("HTTP {} from {}", response.status, url));
    }
    return response;
}

json parse_body(const http::Response& response) {
    try {
        return json::parse(response.body);
    } catch (const json::parse_error&) {
        return json{{"unparsed_body", response.body}};
    }
}

} // namespace

ChatCompletionsProvider::ChatCompletionsProvider(ProviderSettings settings, std::shared_ptr<http::Transport> transport)
    : settings_(std::move(settings)), transport_(std::move(transport)) {}

json ChatCompletionsProvider::build_request(const ChatRequest& request, const ProviderSettings& settings) {
    json messages = json::array();
    messages.push_back({{"role", "system"}, {"content", request.system}});
    std::vector<std::pair<std::string, ImageAttachment>> pending_images;
    auto flush_images = [&] {
        for (const auto& [id, img] : pending_images) {
            messages.push_back(
                {{"role", "user"},
                 {"content", json::array({{{"type", "text"}, {"text", "Image returned by tool call " + id}},
                                          {{"type", "image_url"},
                                           {"image_url", {{"url", "data:" + img.media_type + ";base64," + img.base64}}}}})}});
        }
        pending_images.clear();
    };
    for (const auto& m : request.history) {
        if (m.role != Role::tool_result) {
            flush_images();
        }
        switch (m.role) {
        case Role::system:
        case Role::user:
            messages.push_back({{"role", "user"}, {"content", m.content}});
            break;
        case Role::assistant: {
            json msg{{"role", "assistant"}, {"content", m.content.empty() ? json(nullptr) : json(m.content)}};
            if (!m.tool_calls.empty()) {
                msg["tool_calls"] = json::array();
                for (const auto& c : m.tool_calls) {
                    msg["tool_calls"].push_back({{"id", c.id},
                                                 {"type", "function"},
                                                 {"function", {{"name", c.name}, {"arguments", c.arguments.dump()}}}});
                }
            }
            messages.push_back(std::move(msg));
            break;
        }
        case Role::tool_result:
            messages.push_back({{"role", "tool"}, {"tool_call_id", m.tool_call_id.value_or("")}, {"content", m.content}});
            if (m.image && settings.images) {
                pending_images.emplace_back(m.tool_call_id.value_or(""), *m.image);
            }
            break;
        }
    }
    flush_images();
    json body{{"model", settings.model}, {"messages", messages}, {"max_tokens", settings.max_tokens}};
    if (settings.temperature) {
        body["temperature"] = *settings.temperature;
    }
    if (!request.tools.empty()) {
        body["tools"] = json::array();
        for (const auto& t : request.tools) {
            body["tools"].push_back({{"type", "function"},
                                     {"function", {{"name", t.name}, {"description", t.description},
                                                   {"parameters", t.parameter_schema()}}}});
        }
    }
    return body;
}

ModelTurn ChatCompletionsProvider::parse_response(const json& response) {
    if (!response.is_object() || response.contains("error") || !response.contains("choices") ||
        !response["choices"].is_array() || response["choices"].empty()) {
        return ModelTurn::failure("provider returned no choices", response);
    }
    const auto& choice = response["choices"][0];
    const auto& message = choice.value("message", json::object());
    ModelTurn turn;
    if (message.contains("content") && message["content"].is_string()) {
        turn.text = message["content"].get<std::string>();
    }
    for (const char* key : {"reasoning_content", "reasoning"}) {
        if (message.contains(key) && message[key].is_string()) {
            turn.reasoning_trace = message[key].get<std::string>();
        }
    }
    if (message.contains("tool_calls") && message["tool_calls"].is_array()) {
        for (const auto& c : message["tool_calls"]) {
            ToolCall call;
            call.id = c.value("id", "");
            const auto& fn = c.value("function", json::object());
            call.name = fn.value("name", "");
            auto args = fn.value("arguments", std::string("{}"));
            try {
                call.arguments = args.empty() ? json::object() : json::parse(args);
            } catch (const json::parse_error& e) {
                return ModelTurn::failure(fmt::format("malformed arguments for tool call {}: {}", call.name, e.what()),
                                          response);
            }
            turn.tool_calls.push_back(std::move(call));
        }
    }
    auto reason = choice.value("finish_reason", std::string("stop"));
    if (reason == "stop") {
        turn.finish = FinishReason::stop;
    } else if (reason == "tool_calls" || reason == "function_call") {
        turn.finish = FinishReason::tool_use;
    } else if (reason == "length") {
        turn.finish = FinishReason::length;
    } else {
        return ModelTurn::failure("unexpected finish_reason '" + reason + "'", response);
    }
    if (response.contains("usage") && response["usage"].is_object()) {
        turn.usage.input_tokens = response["usage"].value("prompt_tokens", 0L);
        turn.usage.output_tokens = response["usage"].value("completion_tokens", 0L);
    }
    return turn;
}

ProviderReply ChatCompletionsProvider::send(const ChatRequest& request) {
    auto body = build_request(request, settings_);
    http::Headers headers;
    if (!settings_.api_key.empty()) {
        headers["Authorization"] = "Bearer " + settings_.api_key;
    }
    auto response = post_json(*transport_, settings_.endpoint, body, headers);
    auto parsed = parse_body(response);
    if (response.status != 200) {
        return {ModelTurn::failure(fmt::format("HTTP {}", response.status), parsed), body, parsed};
    }
    return {parse_response(parsed), body, parsed};
}

// --- tool-use adapter ---------------------------------------------------------

ToolUseProvider::ToolUseProvider(ProviderSettings settings, std::shared_ptr<http::Transport> transport)
    : settings_(std::move(settings)), transport_(std::move(transport)) {}

json ToolUseProvider::build_request(const ChatRequest& request, const ProviderSettings& settings) {
    json messages = json::array();
    auto append = [&](const char* role, json block) {
        if (!messages.empty() && messages.back()["role"] == role) {
            messages.back()["content"].push_back(std::move(block));
        } else {
            messages.push_back({{"role", role}, {"content", json::array({std::move(block)})}});
        }
    };
    for (const auto& m : request.history) {
        switch (m.role) {
        case Role::system:
        case Role::user:
            append("user", {{"type", "text"}, {"text", m.content}});
            break;
        case Role::assistant:
            if (!m.content.empty()) {
                append("assistant", {{"type", "text"}, {"text", m.content}});
            }
            for (const auto& c : m.tool_calls) {
                append("assistant", {{"type", "tool_use"}, {"id", c.id}, {"name", c.name}, {"input", c.arguments}});
            }
            break;
        case Role::tool_result: {
            json content = json::array({{{"type", "text"}, {"text", m.content}}});
            if (m.image && settings.images) {
                content.push_back({{"type", "image"},
                                   {"source", {{"type", "base64"}, {"media_type", m.image->media_type},
                                               {"data", m.image->base64}}}});
            }
            append("user", {{"type", "tool_result"}, {"tool_use_id", m.tool_call_id.value_or("")}, {"content", content}});
            break;
        }
        }
    }
    if (messages.empty()) {
        messages.push_back({{"role", "user"}, {"content", json::array({{{"type", "text"}, {"text", "Begin."}}})}});
    }
    json body{{"model", settings.model}, {"max_tokens", settings.max_tokens}, {"system", request.system},
              {"messages", messages}};
    if (settings.temperature) {
        body["temperature"] = *settings.temperature;
    }
    if (!request.tools.empty()) {
        body["tools"] = json::array();
        for (const auto& t : request.tools) {
            body["tools"].push_back({{"name", t.name}, {"description", t.description}, {"input_schema", t.parameter_schema()}});
        }
    }
    return body;
}

ModelTurn ToolUseProvider::parse_response(const json& response) {
    if (!response.is_object() || response.value("type", "") == "error" || !response.contains("content") ||
        !response["content"].is_array()) {
        return ModelTurn::failure("provider returned no content", response);
    }
    ModelTurn turn;
    std::string text;
    std::string reasoning;
    for (const auto& block : response["content"]) {
        auto type = block.value("type", "");
        if (type == "text") {
            text += block.value("text", "");
        } else if (type == "thinking") {
            reasoning += block.value("thinking", "");
        } else if (type == "tool_use") {
            ToolCall call{block.value("id", ""), block.value("name", ""),
                          block.contains("input") ? block["input"] : json::object()};
            if (!call.arguments.is_object()) {
                return ModelTurn::failure("malformed input for tool call " + call.name, response);
            }
            turn.tool_calls.push_back(std::move(call));
        }
    }
    if (!text.empty()) {
        turn.text = std::move(text);
    }
    if (!reasoning.empty()) {
        turn.reasoning_trace = std::move(reasoning);
    }
    auto reason = response.value("stop_reason", std::string("end_turn"));
    if (reason == "end_turn" || reason == "stop_sequence") {
        turn.finish = FinishReason::stop;
    } else if (reason == "tool_use") {
        turn.finish = FinishReason::tool_use;
    } else if (reason == "max_tokens") {
        turn.finish = FinishReason::length;
    } else {
        return ModelTurn::failure("unexpected stop_reason '" + reason + "'", response);
    }
    if (response.contains("usage") && response["usage"].is_object()) {
        turn.usage.input_tokens = response["usage"].value("input_tokens", 0L);
        turn.usage.output_tokens = response["usage"].value("output_tokens", 0L);
    }
    return turn;
}

ProviderReply ToolUseProvider::send(const ChatRequest& request) {
    auto body = build_request(request, settings_);
    http::Headers headers{{"anthropic-version", "2023-06-01"}};
    if (!settings_.api_key.empty()) {
        headers["x-api-key"] = settings_.api_key;
    }
    auto response = post_json(*transport_, settings_.endpoint, body, headers);
    auto parsed = parse_body(response);
    if (response.status != 200) {
        return {ModelTurn::failure(fmt::format("HTTP {}", response.status), parsed), body, parsed};
    }
    return {parse_response(parsed), body, parsed};
}

// --- scripted mock ------------------------------------------------------------

ScriptedProvider::ScriptedProvider(std::vector<ModelTurn> program, bool images)
    : program_(program.begin(), program.end()), images_(images) {}

ProviderReply ScriptedProvider::send(const ChatRequest& request) {
    std::lock_guard lock(mutex_);
    ++calls_;
    requests_.push_back(request);
    ModelTurn turn;
    if (program_.empty()) {
        turn = ModelTurn::failure(fmt::format("scripted program exhausted at call {}", calls_));
    } else {
        turn = std::move(program_.front());
        program_.pop_front();
    }
    json raw_response = turn;
    return {std::move(turn), json(request), std::move(raw_response)};
}

std::size_t ScriptedProvider::calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

std::vector<ChatRequest> ScriptedProvider::requests() const {
    std::lock_guard lock(mutex_);
    return requests_;
}

std::shared_ptr<ScriptedProvider> script_mock(std::vector<ModelTurn> program) {
    if (program.empty()) {
        throw PreconditionError("scripted program must contain at least one turn");
    }
    return std::make_shared<ScriptedProvider>(std::move(program));
}

std::vector<ModelTurn> load_script(const fs::path& path) {
    try {
        return json::parse(util::read_file(path)).get<std::vector<ModelTurn>>();
    } catch (const json::exception& e) {
        throw ParseError("bad scripted program " + path.string(), e.what());
    }
}

std::vector<ModelTurn> load_logged_turns(const fs::path& llm_log) {
    std::vector<ModelTurn> turns;
    for (const auto& line : util::split_lines(util::read_file(llm_log))) {
        if (util::trim(line).empty()) {
            continue;
        }
        try {
            turns.push_back(json::parse(line).at("provider_turn").get<ModelTurn>());
        } catch (const json::exception& e) {
            throw ParseError("bad llm_log line", line.substr(0, 200));
        }
    }
    return turns;
}

std::shared_ptr<ChatProvider> make_provider(const ProviderSettings& settings,
                                            std::shared_ptr<http::Transport> transport) {
    if (settings.family == "openai" || settings.family == "chat-completions") {
        return std::make_shared<ChatCompletionsProvider>(settings, std::move(transport));
    }
    if (settings.family == "anthropic" || settings.family == "tool-use") {
        return std::make_shared<ToolUseProvider>(settings, std::move(transport));
    }
    throw UsageError("unknown provider family '" + settings.family + "' (valid: openai, anthropic, mock)");
}

// --- gateway ------------------------------------------------------------------

Gateway::Gateway(std::shared_ptr<ChatProvider> provider, GatewayOptions options)
    : provider_(std::move(provider)), options_(std::move(options)) {
    if (!provider_) {
        throw PreconditionError("gateway needs a provider");
    }
    if (options_.max_attempts < 1) {
        options_.max_attempts = 1;
    }
    if (!options_.sleep) {
        options_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    }
}

ModelTurn Gateway::complete(const std::vector<Message>& history, const std::string& system,
                            const std::vector<ToolSpec>& tools) {
    if (auto problem = check_history(history)) {
        throw ValidationError("malformed history: " + *problem);
    }
    if (auto problem = check_tool_specs(tools)) {
        throw ValidationError("malformed tool specs: " + *problem);
    }
    ++calls_;
    ChatRequest request{system, history, tools};

    auto started = std::chrono::steady_clock::now();
    std::optional<ProviderReply> reply;
    std::string last_error;
    int attempts = 0;
    for (; attempts < options_.max_attempts && !reply; ++attempts) {
        if (attempts > 0) {
            auto delay = options_.base_backoff * (1LL << (attempts - 1));
            options_.sleep(std::min<std::chrono::milliseconds>(delay, options_.max_backoff));
        }
        try {
            reply = provider_->send(request);
        } catch (const TransportError& e) {
            last_error = e.what();
        }
    }
    auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);

    ModelTurn provider_turn;
    json raw_request = nullptr;
    json raw_response = nullptr;
    if (reply) {
        provider_turn = reply->turn;
        raw_request = std::move(reply->raw_request);
        raw_response = std::move(reply->raw_response);
    } else {
        provider_turn = ModelTurn::failure(fmt::format("transport failed after {} attempts: {}", attempts, last_error));
    }

    ModelTurn turn = provider_turn;
    for (std::size_t i = 0; i < turn.tool_calls.size(); ++i) {
        if (turn.tool_calls[i].id.empty()) {
            turn.tool_calls[i].id = fmt::format("call_{}_{}", calls_, i + 1);
        }
    }
    if (turn.finish != FinishReason::error) {
        std::set<std::string> ids;
        std::string problems;
        for (const auto& call : turn.tool_calls) {
            if (auto problem = check_tool_call(call, tools)) {
                problems += (problems.empty() ? "" : "; ") + *problem;
            }
            if (!ids.insert(call.id).second) {
                problems += (problems.empty() ? "" : "; ") + ("repeated tool call id " + call.id);
            }
        }
        if (!problems.empty()) {
            json calls = turn.tool_calls;
            turn = ModelTurn::failure("invalid tool call: " + problems, raw_response.is_null() ? calls : raw_response);
        } else if (!turn.tool_calls.empty()) {
            turn.finish = FinishReason::tool_use;
        } else if (turn.finish == FinishReason::tool_use) {
            turn = ModelTurn::failure("tool_use finish without tool calls", raw_response);
        }
    }
    turn.usage = provider_turn.usage;
    usage_.input_tokens += turn.usage.input_tokens;
    usage_.output_tokens += turn.usage.output_tokens;

    if (options_.log_path) {
        json entry{{"seq", calls_},
                   {"provider", provider_->name()},
                   {"attempts", attempts},
                   {"latency_ms", latency.count()},
                   {"request", request},
                   {"raw_request", raw_request},
                   {"raw_response", raw_response},
                   {"provider_turn", provider_turn},
                   {"turn", turn}};
        util::append_line(*options_.log_path, entry.dump());
    }
    return turn;
}

} // namespace statviz::llm
