#include "statviz/agent.hpp"

#include "statviz/error.hpp"
#include "statviz/util.hpp"

#include <fmt/format.h>

#include <chrono>
#include <ctime>
#include <deque>
#include <fstream>

namespace statviz::agent {

// --- tasks -------------------------------------------------------------------

std::string_view to_string(Difficulty d) {
    switch (d) {
    case Difficulty::easy: return "easy";
    case Difficulty::medium: return "medium";
    case Difficulty::hard: return "hard";
    }
    return "easy";
}

Difficulty difficulty_from_string(std::string_view s) {
    auto lower = util::to_lower(util::trim(s));
    if (lower == "easy") return Difficulty::easy;
    if (lower == "medium") return Difficulty::medium;
    if (lower == "hard") return Difficulty::hard;
    throw ValidationError(fmt::format("unknown difficulty '{}' (valid: easy, medium, hard)", s));
}

void to_json(json& j, const TaskSpec& t) {
    j = json{{"id", t.id}, {"prompt", t.prompt}, {"difficulty", to_string(t.difficulty)},
             {"gold_table", t.gold_table ? json(t.gold_table->id()) : json(nullptr)}};
}

void from_json(const json& j, TaskSpec& t) {
    t.id = j.at("id").get<std::string>();
    t.prompt = j.at("prompt").get<std::string>();
    t.difficulty = difficulty_from_string(j.at("difficulty").get<std::string>());
    t.gold_table.reset();
    if (j.contains("gold_table") && j["gold_table"].is_string()) {
        t.gold_table = catalog::TableRef(j["gold_table"].get<std::string>());
    }
}

std::vector<TaskSpec> parse_tasks(std::string_view text) {
    std::vector<TaskSpec> tasks;
    std::set<std::string> ids;
    bool header_seen = false;
    int line_no = 0;
    for (const auto& line : util::split_lines(text)) {
        ++line_no;
        if (util::trim(line).empty() || util::trim(line).front() == '#') {
            continue;
        }
        std::vector<std::string> cols;
        std::size_t start = 0;
        for (int i = 0; i < 3; ++i) {
            auto tab = line.find('\t', start);
            if (tab == std::string::npos) {
                throw ValidationError(fmt::format("task line {}: expected 4 tab-separated fields", line_no));
            }
            cols.push_back(util::trim(std::string_view(line).substr(start, tab - start)));
            start = tab + 1;
        }
        cols.push_back(util::trim(std::string_view(line).substr(start)));
        if (!header_seen) {
            header_seen = true;
            if (cols[0] == "id") {
                continue;
            }
        }
        TaskSpec task{cols[0], cols[3], difficulty_from_string(cols[1]), std::nullopt};
        if (task.id.empty() || task.prompt.empty()) {
            throw ValidationError(fmt::format("task line {}: id and prompt are required", line_no));
        }
        if (!prompting::is_safe_run_id(task.id)) {
            throw ValidationError(fmt::format("task line {}: id '{}' is not filesystem-safe", line_no, task.id));
        }
        if (!cols[2].empty()) {
            task.gold_table = catalog::TableRef(cols[2]);
        }
        if (!ids.insert(task.id).second) {
            throw ValidationError(fmt::format("task line {}: duplicate id '{}'", line_no, task.id));
        }
        tasks.push_back(std::move(task));
    }
    return tasks;
}

std::vector<TaskSpec> load_tasks(const fs::path& path) {
    return parse_tasks(util::read_file(path));
}

// --- path guard ---------------------------------------------------------------

bool is_within(const fs::path& path, const fs::path& root) {
    auto p = path.begin();
    for (auto r = root.begin(); r != root.end(); ++r, ++p) {
        if (r->empty()) {
            continue;  // trailing separator
        }
        if (p == path.end() || *p != *r) {
            return false;
        }
    }
    return true;
}

std::optional<fs::path> PathGuard::resolve(const fs::path& absolute_candidate) {
    if (!absolute_candidate.is_absolute()) {
        return std::nullopt;
    }
    std::deque<std::string> pending;
    for (auto it = std::next(absolute_candidate.begin()); it != absolute_candidate.end(); ++it) {
        pending.push_back(it->string());
    }
    auto has_more = [&] {
        return std::any_of(pending.begin(), pending.end(), [](const std::string& c) { return !c.empty() && c != "."; });
    };

    fs::path current = "/";
    int hops = 0;
    while (!pending.empty()) {
        auto comp = std::move(pending.front());
        pending.pop_front();
        if (comp.empty() || comp == ".") {
            continue;
        }
        if (comp == "..") {
            current = current.parent_path();
            continue;
        }
        auto next = current / comp;
        std::error_code ec;
        auto st = fs::symlink_status(next, ec);
        if (ec || !fs::exists(st)) {
            if (has_more()) {
                return std::nullopt;
            }
            return next;
        }
        if (fs::is_symlink(st)) {
            if (++hops > 40) {
                return std::nullopt;
            }
            auto target = fs::read_symlink(next, ec);
            if (ec) {
                return std::nullopt;
            }
            if (target.is_absolute()) {
                current = "/";
            }
            std::vector<std::string> parts;
            for (const auto& part : target) {
                if (part != "/") {
                    parts.push_back(part.string());
                }
            }
            pending.insert(pending.begin(), parts.begin(), parts.end());
            continue;
        }
        if (!fs::is_directory(st) && has_more()) {
            return std::nullopt;
        }
        current = std::move(next);
    }
    return current;
}

PathGuard::PathGuard(std::vector<fs::path> roots, fs::path base) : base_(fs::absolute(base)) {
    for (auto& root : roots) {
        auto resolved = resolve(fs::absolute(root).lexically_normal());
        if (!resolved) {
            throw PreconditionError("guard root cannot be resolved: " + root.string());
        }
        roots_.push_back(*resolved);
    }
}

GuardVerdict PathGuard::check(const fs::path& candidate) const {
    GuardVerdict verdict;
    if (candidate.empty()) {
        verdict.reason = "empty path";
        return verdict;
    }
    auto absolute = candidate.is_absolute() ? candidate : base_ / candidate;
    auto resolved = resolve(absolute);
    if (!resolved) {
        verdict.reason = "path cannot be resolved";
        return verdict;
    }
    verdict.resolved = *resolved;
    for (const auto& root : roots_) {
        if (is_within(*resolved, root)) {
            verdict.allowed = true;
            return verdict;
        }
    }
    verdict.reason = "outside the allowed directories";
    return verdict;
}

// --- tools --------------------------------------------------------------------

std::string_view to_string(ToolStatus s) {
    switch (s) {
    case ToolStatus::ok: return "ok";
    case ToolStatus::error: return "error";
    case ToolStatus::denied: return "denied";
    }
    return "error";
}

namespace {

ToolStatus tool_status_from_string(std::string_view s) {
    if (s == "ok") return ToolStatus::ok;
    if (s == "error") return ToolStatus::error;
    if (s == "denied") return ToolStatus::denied;
    throw ParseError("unknown tool status", std::string(s));
}

} // namespace

std::string ToolResult::observation() const {
    std::string body = payload.is_string() ? payload.get<std::string>() : payload.dump(2);
    switch (status) {
    case ToolStatus::ok: return body;
    case ToolStatus::error: return "ERROR: " + body;
    case ToolStatus::denied: return "DENIED: " + body;
    }
    return body;
}

void to_json(json& j, const ToolResult& r) {
    j = json{{"call_id", r.call_id}, {"status", to_string(r.status)}, {"payload", r.payload}};
    if (r.denied_path) {
        j["denied_path"] = *r.denied_path;
    }
    // Images are not stored in the manifest; the plot file is on disk.
    j["image_attached"] = r.image.has_value();
}

void from_json(const json& j, ToolResult& r) {
    r.call_id = j.at("call_id").get<std::string>();
    r.status = tool_status_from_string(j.at("status").get<std::string>());
    r.payload = j.value("payload", json());
    r.denied_path.reset();
    if (j.contains("denied_path")) {
        r.denied_path = j["denied_path"].get<std::string>();
    }
    r.image.reset();
}

const std::vector<llm::ToolSpec>& tool_specs() {
    using llm::ParamType;
    static const std::vector<llm::ToolSpec> specs{
        {"list_files",
         "Lists files in directory. Defaults to the data directory.",
         {{"directory", ParamType::string, "Directory to list, e.g. 'data/' or the run's output directory.", false}}},
        {"read_file_head",
         "Reads start of file: returns its first lines.",
         {{"path", ParamType::string, "File to read, e.g. 'data/<table>.csv'.", true},
          {"n_lines", ParamType::integer, "Number of lines to return (default 20).", false}}},
        {"execute_python_code",
         "Executes Python code. The retrieved dataset is preloaded as the pandas DataFrame `df`; "
         "save the figure to the target plot path. Returns stdout, stderr and whether a plot was written.",
         {{"code", ParamType::string, "Complete Python source to run.", true}}},
        {"read_visualization_image",
         "Reads the plot so it can be checked. Defaults to the run's target plot.",
         {{"path", ParamType::string, "Image to read (default: target plot).", false}}},
        {"get_human_feedback",
         "Logs request for help to the human feedback file. Nobody answers during the run.",
         {{"request", ParamType::string, "What you need help with and why.", true}}},
    };
    return specs;
}

namespace {

std::string display_path(const fs::path& p, const fs::path& workspace) {
    if (is_within(p, workspace)) {
        auto rel = p.lexically_relative(workspace);
        return rel.empty() ? "." : rel.generic_string();
    }
    return p.generic_string();
}

ToolResult make_result(const llm::ToolCall& call, ToolStatus status, json payload) {
    ToolResult r;
    r.call_id = call.id;
    r.status = status;
    r.payload = std::move(payload);
    return r;
}

ToolResult denied(const llm::ToolCall& call, const std::string& path, const GuardVerdict& v) {
    auto r = make_result(call, ToolStatus::denied, fmt::format("path '{}' is {}", path, v.reason));
    r.denied_path = path;
    return r;
}

std::string string_arg(const llm::ToolCall& call, const char* name, std::string fallback) {
    if (call.arguments.contains(name) && call.arguments[name].is_string()) {
        return call.arguments[name].get<std::string>();
    }
    return fallback;
}

ToolResult list_files(const llm::ToolCall& call, ToolContext& ctx) {
    auto dir = string_arg(call, "directory", "data/");
    auto verdict = ctx.guard->check(dir);
    if (!verdict.allowed) {
        return denied(call, dir, verdict);
    }
    std::error_code ec;
    if (!fs::is_directory(verdict.resolved, ec)) {
        return make_result(call, ToolStatus::error, fmt::format("'{}' is not a directory", dir));
    }
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(verdict.resolved)) {
        auto name = entry.path().filename().string();
        if (name.starts_with(".")) {
            continue;
        }
        names.push_back(entry.is_directory() ? name + "/" : name);
    }
    std::sort(names.begin(), names.end());
    return make_result(call, ToolStatus::ok, names);
}

ToolResult read_file_head(const llm::ToolCall& call, ToolContext& ctx) {
    auto path = string_arg(call, "path", "");
    long n = ctx.default_head_lines;
    if (call.arguments.contains("n_lines")) {
        n = call.arguments["n_lines"].get<long>();
    }
    if (n < 1) {
        return make_result(call, ToolStatus::error, "n_lines must be at least 1");
    }
    auto verdict = ctx.guard->check(path);
    if (!verdict.allowed) {
        return denied(call, path, verdict);
    }
    std::error_code ec;
    if (!fs::is_regular_file(verdict.resolved, ec)) {
        return make_result(call, ToolStatus::error, fmt::format("file not found: '{}'", path));
    }
    std::ifstream in(verdict.resolved, std::ios::binary);
    std::string text;
    std::string line;
    for (long i = 0; i < n && std::getline(in, line); ++i) {
        text += line;
        text += '\n';
    }
    return make_result(call, ToolStatus::ok, text);
}

ToolResult execute_python_code(const llm::ToolCall& call, ToolContext& ctx) {
    auto code = string_arg(call, "code", "");
    if (util::trim(code).empty()) {
        return make_result(call, ToolStatus::error, "no code supplied");
    }
    auto n = static_cast<int>(ctx.code_iterations->size()) + 1;
    auto code_path = ctx.run_dir / fmt::format("code_iter_{}.py", n);
    util::write_file_atomic(code_path, code);
    ctx.code_iterations->push_back(code_path);

    sandbox::ExecutionRequest request{code, ctx.dataset_csv, ctx.target_plot, ctx.timeout_s, ctx.run_dir};
    auto result = ctx.executor->execute(request);
    json payload = result;
    payload["code_file"] = display_path(code_path, ctx.workspace);
    payload["target_plot"] = display_path(ctx.target_plot, ctx.workspace);
    auto status = result.exit_status == sandbox::ExitStatus::ok ? ToolStatus::ok : ToolStatus::error;
    return make_result(call, status, std::move(payload));
}

ToolResult read_visualization_image(const llm::ToolCall& call, ToolContext& ctx) {
    auto path = string_arg(call, "path", display_path(ctx.target_plot, ctx.workspace));
    auto verdict = ctx.guard->check(path);
    if (!verdict.allowed) {
        return denied(call, path, verdict);
    }
    auto dims = sandbox::png_dimensions(verdict.resolved);
    if (!dims) {
        std::error_code ec;
        auto what = fs::exists(verdict.resolved, ec) ? "is not a PNG image" : "does not exist";
        return make_result(call, ToolStatus::error, fmt::format("'{}' {}", path, what));
    }
    auto bytes = fs::file_size(verdict.resolved);
    json payload{{"path", path}, {"exists", true}, {"width", dims->first}, {"height", dims->second}, {"bytes", bytes}};
    auto result = make_result(call, ToolStatus::ok, std::move(payload));
    if (ctx.send_images) {
        result.image = llm::ImageAttachment{"image/png", util::base64_encode(util::read_file(verdict.resolved))};
        result.payload["image"] = "attached";
    }
    return result;
}

ToolResult get_human_feedback(const llm::ToolCall& call, ToolContext& ctx) {
    auto request = string_arg(call, "request", "");
    util::append_line(ctx.feedback_file, fmt::format("[{}] {}", call.id, request));
    return make_result(call, ToolStatus::ok,
                       fmt::format("Request logged to {}. No human is available during this run; continue on your own.",
                                   display_path(ctx.feedback_file, ctx.workspace)));
}

} // namespace

ToolResult dispatch_tool(const llm::ToolCall& call, ToolContext& ctx) {
    if (!ctx.guard || !ctx.executor || !ctx.code_iterations) {
        throw PreconditionError("tool context is incomplete");
    }
    if (auto problem = llm::check_tool_call(call, tool_specs())) {
        return make_result(call, ToolStatus::error, *problem);
    }
    try {
        if (call.name == "list_files") return list_files(call, ctx);
        if (call.name == "read_file_head") return read_file_head(call, ctx);
        if (call.name == "execute_python_code") return execute_python_code(call, ctx);
        if (call.name == "read_visualization_image") return read_visualization_image(call, ctx);
        if (call.name == "get_human_feedback") return get_human_feedback(call, ctx);
    } catch (const fs::filesystem_error& e) {
        return make_result(call, ToolStatus::error, e.what());
    } catch (const IoError& e) {
        return make_result(call, ToolStatus::error, e.what());
    }
    return make_result(call, ToolStatus::error, "unknown tool " + call.name);
}

// --- run records ----------------------------------------------------------------

std::string_view to_string(Mode m) {
    return m == Mode::zero_shot ? "zero_shot" : "agentic";
}

Mode mode_from_string(std::string_view s) {
    if (s == "zero_shot" || s == "zero-shot") return Mode::zero_shot;
    if (s == "agentic") return Mode::agentic;
    throw UsageError(fmt::format("unknown mode '{}' (valid: zero_shot, agentic)", s));
}

std::string_view to_string(RunStatus s) {
    switch (s) {
    case RunStatus::completed: return "completed";
    case RunStatus::exhausted_iters: return "exhausted_iters";
    case RunStatus::failed: return "failed";
    }
    return "failed";
}

RunStatus run_status_from_string(std::string_view s) {
    if (s == "completed") return RunStatus::completed;
    if (s == "exhausted_iters") return RunStatus::exhausted_iters;
    if (s == "failed") return RunStatus::failed;
    throw ParseError("unknown run status", std::string(s));
}

void to_json(json& j, const RunRecord& r) {
    j = json::object();
    j["run_id"] = r.run_id;
    j["mode"] = to_string(r.mode);
    j["model_config"] = r.model_config;
    j["task"] = r.task;
    j["retrieved"] = r.retrieved ? json{{"ref", r.retrieved->ref.id()}, {"score", r.retrieved->score},
                                        {"rank", r.retrieved->rank}}
                                 : json(nullptr);
    j["gold_rank"] = r.gold_rank ? json(*r.gold_rank) : json(nullptr);
    j["status"] = to_string(r.status);
    j["failure_reason"] = r.failure_reason;
    j["code_iterations"] = r.code_iterations;
    j["final_plot"] = r.final_plot ? json(*r.final_plot) : json(nullptr);
    j["prompt_hashes"] = r.prompt_hashes;
    j["executor"] = r.executor;
    j["config"] = r.config;
    j["started_at"] = r.started_at;
    j["finished_at"] = r.finished_at;
    j["turns"] = json::array();
    for (const auto& t : r.turns) {
        j["turns"].push_back({{"turn", t.turn}, {"results", t.results}});
    }
}

void from_json(const json& j, RunRecord& r) {
    r = RunRecord{};
    r.run_id = j.at("run_id").get<std::string>();
    r.mode = mode_from_string(j.at("mode").get<std::string>());
    r.model_config = j.value("model_config", "");
    r.task = j.at("task").get<TaskSpec>();
    if (j.contains("retrieved") && j["retrieved"].is_object()) {
        const auto& m = j["retrieved"];
        r.retrieved = retrieval::RankedMatch{catalog::TableRef(m.at("ref").get<std::string>()),
                                             m.at("score").get<double>(), m.at("rank").get<int>()};
    }
    if (j.contains("gold_rank") && j["gold_rank"].is_number_integer()) {
        r.gold_rank = j["gold_rank"].get<int>();
    }
    r.status = run_status_from_string(j.at("status").get<std::string>());
    r.failure_reason = j.value("failure_reason", "");
    r.code_iterations = j.value("code_iterations", std::vector<std::string>{});
    if (j.contains("final_plot") && j["final_plot"].is_string()) {
        r.final_plot = j["final_plot"].get<std::string>();
    }
    r.prompt_hashes = j.value("prompt_hashes", std::map<std::string, std::string>{});
    r.executor = j.value("executor", "");
    r.config = j.value("config", json::object());
    r.started_at = j.value("started_at", "");
    r.finished_at = j.value("finished_at", "");
    for (const auto& t : j.value("turns", json::array())) {
        r.turns.push_back({t.at("turn").get<llm::ModelTurn>(), t.value("results", std::vector<ToolResult>{})});
    }
}

RunRecord load_run(const fs::path& run_dir) {
    auto manifest = run_dir / "manifest.json";
    if (!fs::exists(manifest)) {
        throw NotFoundError("no run manifest in " + run_dir.string());
    }
    try {
        return json::parse(util::read_file(manifest)).get<RunRecord>();
    } catch (const json::exception& e) {
        throw ParseError("bad run manifest " + manifest.string(), e.what());
    }
}

std::optional<std::string> extract_code_block(std::string_view text) {
    auto open = text.find("```");
    if (open == std::string_view::npos) {
        return std::nullopt;
    }
    auto body_start = text.find('\n', open + 3);
    if (body_start == std::string_view::npos) {
        return std::nullopt;
    }
    auto close = text.find("```", body_start + 1);
    if (close == std::string_view::npos) {
        return std::nullopt;
    }
    auto code = std::string(text.substr(body_start + 1, close - body_start - 1));
    if (util::trim(code).empty()) {
        return std::nullopt;
    }
    return code;
}

std::string make_run_id(const std::string& model_config, Mode mode, const std::string& task_id) {
    auto id = util::slugify(fmt::format("{}-{}-{}", model_config.empty() ? "default" : model_config,
                                        to_string(mode), task_id));
    if (!prompting::is_safe_run_id(id)) {
        throw ValidationError("cannot derive a safe run id from '" + task_id + "'");
    }
    return id;
}

// --- runner -------------------------------------------------------------------

namespace {

std::string now_utc() {
    auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

fs::path under(const fs::path& workspace, const fs::path& p) {
    return (p.is_absolute() ? p : workspace / p).lexically_normal();
}

bool plot_ok(const fs::path& p) {
    std::error_code ec;
    return sandbox::png_dimensions(p).has_value() && fs::file_size(p, ec) > 0;
}

// Owns the per-run directory, logs and manifest.
class RunSession {
public:
    RunSession(const TaskSpec& task, const AgentConfig& config, const std::string& run_id, const RunDeps& deps)
        : config_(config), deps_(deps) {
        if (!deps.index || !deps.embedder || !deps.chat || !deps.executor) {
            throw PreconditionError("run dependencies are incomplete");
        }
        if (config.max_iters < 1) {
            throw PreconditionError("max_iters must be at least 1");
        }
        if (util::trim(task.prompt).empty()) {
            throw PreconditionError("task prompt is empty");
        }
        workspace_ = fs::absolute(config.workspace).lexically_normal();
        data_dir_ = under(workspace_, config.data_dir);
        output_dir_ = under(workspace_, config.output_dir);
        paths_ = prompting::RunPaths::make(output_dir_, run_id);

        std::error_code ec;
        fs::remove_all(paths_.run_dir, ec);
        fs::create_directories(paths_.run_dir);

        record_.run_id = run_id;
        record_.mode = config.mode;
        record_.model_config = config.model_config;
        record_.task = task;
        record_.executor = deps.executor->name();
        record_.prompt_hashes = prompting::ModuleLibrary::installed().hashes(config.modules);
        json modules = json::array();
        for (auto id : config.modules) {
            modules.push_back(prompting::to_string(id));
        }
        record_.config = {{"max_iters", config.max_iters},
                          {"timeout_s", config.timeout_s},
                          {"modules", modules},
                          {"provider", deps.chat->name()},
                          {"provider_settings", config.provider_info}};
        record_.started_at = now_utc();

        auto gateway_options = deps.gateway;
        gateway_options.log_path = paths_.run_dir / "llm_log";
        gateway_.emplace(deps.chat, gateway_options);
        // Create the log even if no call is made.
        util::append_line(paths_.log_file, json{{"event", "start"}, {"run_id", run_id}, {"at", record_.started_at}}.dump());
        std::ofstream(paths_.run_dir / "llm_log", std::ios::app);
    }

    RunRecord& record() { return record_; }
    llm::Gateway& gateway() { return *gateway_; }
    const prompting::RunPaths& paths() const { return paths_; }
    const fs::path& workspace() const { return workspace_; }
    const fs::path& data_dir() const { return data_dir_; }
    const fs::path& output_dir() const { return output_dir_; }

    std::string display(const fs::path& p) const { return display_path(p, workspace_); }

    void log(const std::string& event, json detail = json::object()) {
        detail["event"] = event;
        util::append_line(paths_.log_file, detail.dump());
    }

    catalog::LoadedDataset retrieve() {
        auto ranking = retrieval::query(*deps_.index, record_.task.prompt, deps_.index->size(), *deps_.embedder);
        record_.retrieved = ranking.front();
        if (record_.task.gold_table) {
            record_.gold_rank = retrieval::gold_rank(ranking, *record_.task.gold_table);
        }
        log("retrieved", {{"ref", ranking.front().ref.id()}, {"score", ranking.front().score}});
        return catalog::load_dataset(data_dir_, ranking.front().ref);
    }

    void fail(std::string reason) {
        record_.status = RunStatus::failed;
        record_.failure_reason = std::move(reason);
    }

    RunRecord finish() {
        record_.finished_at = now_utc();
        if (plot_ok(paths_.target_plot)) {
            record_.final_plot = display(paths_.target_plot);
        }
        log("finish", {{"status", to_string(record_.status)}, {"reason", record_.failure_reason},
                       {"at", record_.finished_at}});
        util::write_file_atomic(paths_.run_dir / "manifest.json", json(record_).dump(2) + "\n");
        return record_;
    }

private:
    const AgentConfig& config_;
    const RunDeps& deps_;
    fs::path workspace_, data_dir_, output_dir_;
    prompting::RunPaths paths_;
    std::optional<llm::Gateway> gateway_;
    RunRecord record_;
};

std::string tail(const std::string& s, std::size_t n) {
    return s.size() <= n ? s : "..." + s.substr(s.size() - n);
}

} // namespace

RunRecord run_zero_shot(const TaskSpec& task, const AgentConfig& config, const std::string& run_id, RunDeps deps) {
    RunSession session(task, config, run_id, deps);
    auto& record = session.record();
    record.mode = Mode::zero_shot;
    try {
        auto dataset = session.retrieve();
        auto bundle = prompting::assemble_zero_shot(dataset.meta, catalog::sample_row(dataset.table), task.prompt,
                                                    config.modules);
        util::write_file_atomic(session.paths().run_dir / "prompt.txt", bundle.system_text);

        auto turn = session.gateway().complete({}, bundle.system_text, {});
        record.turns.push_back({turn, {}});
        session.log("model_turn", {{"finish", llm::to_string(turn.finish)}});
        if (turn.finish == llm::FinishReason::error) {
            session.fail("provider error: " + turn.error.value_or("unknown"));
            return session.finish();
        }
        auto code = extract_code_block(turn.text.value_or(""));
        if (!code) {
            session.fail("no code block");
            return session.finish();
        }

        auto code_path = session.paths().code_iteration(1);
        util::write_file_atomic(code_path, *code);
        record.code_iterations.push_back(session.display(code_path));
        auto csv = session.data_dir() / (dataset.meta.ref.id() + ".csv");
        auto result = deps.executor->execute(
            {*code, csv, session.paths().target_plot, config.timeout_s, session.paths().run_dir});
        json payload = result;
        payload["code_file"] = session.display(code_path);
        ToolResult exec{"zero_shot_execution",
                        result.exit_status == sandbox::ExitStatus::ok ? ToolStatus::ok : ToolStatus::error,
                        std::move(payload), std::nullopt, std::nullopt};
        record.turns.back().results.push_back(std::move(exec));
        session.log("executed", {{"exit_status", sandbox::to_string(result.exit_status)}});

        if (result.exit_status != sandbox::ExitStatus::ok) {
            session.fail(fmt::format("execution {}: {}", sandbox::to_string(result.exit_status),
                                     tail(util::trim(result.stderr_text), 400)));
        } else if (!plot_ok(session.paths().target_plot)) {
            session.fail("code ran but wrote no plot");
        } else {
            record.status = RunStatus::completed;
        }
    } catch (const Error& e) {
        session.fail(e.what());
    }
    return session.finish();
}

RunRecord run_agentic(const TaskSpec& task, const AgentConfig& config, const std::string& run_id, RunDeps deps) {
    RunSession session(task, config, run_id, deps);
    auto& record = session.record();
    record.mode = Mode::agentic;
    try {
        auto dataset = session.retrieve();
        auto csv = session.data_dir() / (dataset.meta.ref.id() + ".csv");
        auto shown_paths = prompting::RunPaths::make(session.display(session.output_dir()), run_id);
        auto bundle = prompting::assemble_agentic(shown_paths, prompting::describe_dataset(dataset.meta, session.display(csv)),
                                                  config.modules);
        util::write_file_atomic(session.paths().run_dir / "prompt.txt", bundle.system_text);

        PathGuard guard({session.data_dir(), session.paths().run_dir}, session.workspace());
        std::vector<fs::path> code_files;
        ToolContext ctx;
        ctx.guard = &guard;
        ctx.executor = deps.executor;
        ctx.workspace = session.workspace();
        ctx.run_dir = session.paths().run_dir;
        ctx.target_plot = session.paths().target_plot;
        ctx.feedback_file = session.paths().feedback_file;
        ctx.dataset_csv = csv;
        ctx.timeout_s = config.timeout_s;
        ctx.send_images = deps.chat->accepts_images();
        ctx.code_iterations = &code_files;

        std::vector<llm::Message> history{{llm::Role::user, task.prompt, std::nullopt, {}, std::nullopt}};
        bool finished = false;
        for (int t = 1; t <= config.max_iters && !finished; ++t) {
            auto turn = session.gateway().complete(history, bundle.system_text, tool_specs());
            record.turns.push_back({turn, {}});
            session.log("model_turn", {{"iteration", t}, {"finish", llm::to_string(turn.finish)},
                                       {"tool_calls", turn.tool_calls.size()}});
            switch (turn.finish) {
            case llm::FinishReason::error:
                session.fail("provider error: " + turn.error.value_or("unknown"));
                finished = true;
                break;
            case llm::FinishReason::tool_use: {
                history.push_back({llm::Role::assistant, turn.text.value_or(""), std::nullopt, turn.tool_calls,
                                   std::nullopt});
                for (const auto& call : turn.tool_calls) {
                    auto result = dispatch_tool(call, ctx);
                    session.log("tool", {{"iteration", t}, {"name", call.name}, {"status", to_string(result.status)}});
                    history.push_back({llm::Role::tool_result, result.observation(), call.id, {}, result.image});
                    record.turns.back().results.push_back(std::move(result));
                }
                break;
            }
            case llm::FinishReason::length:
                history.push_back({llm::Role::assistant, turn.text.value_or(""), std::nullopt, {}, std::nullopt});
                history.push_back({llm::Role::user, "Your previous reply was cut off. Continue.", std::nullopt, {},
                                   std::nullopt});
                break;
            case llm::FinishReason::stop:
                if (plot_ok(session.paths().target_plot)) {
                    record.status = RunStatus::completed;
                } else {
                    session.fail("model stopped without producing a plot");
                }
                finished = true;
                break;
            }
        }
        for (const auto& f : code_files) {
            record.code_iterations.push_back(session.display(f));
        }
        if (!finished) {
            record.status = RunStatus::exhausted_iters;
            record.failure_reason = fmt::format("no stop turn within {} iterations", config.max_iters);
        }
    } catch (const Error& e) {
        session.fail(e.what());
    }
    return session.finish();
}

RunRecord run_task(const TaskSpec& task, const AgentConfig& config, const std::string& run_id, RunDeps deps) {
    return config.mode == Mode::zero_shot ? run_zero_shot(task, config, run_id, std::move(deps))
                                          : run_agentic(task, config, run_id, std::move(deps));
}

} // namespace statviz::agent
