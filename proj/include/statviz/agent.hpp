#pragma once

#include "statviz/catalog.hpp"
#include "statviz/llm.hpp"
#include "statviz/prompting.hpp"
#include "statviz/retrieval.hpp"
#include "statviz/sandbox.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace statviz::agent {

namespace fs = std::filesystem;
using nlohmann::json;

// --- tasks -------------------------------------------------------------------

enum class Difficulty { easy, medium, hard };
std::string_view to_string(Difficulty d);
Difficulty difficulty_from_string(std::string_view s);

struct TaskSpec {
    std::string id;
    std::string prompt;
    Difficulty difficulty = Difficulty::easy;
    std::optional<catalog::TableRef> gold_table;

    bool operator==(const TaskSpec&) const = default;
};

void to_json(json& j, const TaskSpec& t);
void from_json(const json& j, TaskSpec& t);

// Tab-separated task suite: header `id<TAB>difficulty<TAB>gold_table<TAB>prompt`,
// '#' comments allowed, empty gold_table allowed.
std::vector<TaskSpec> load_tasks(const fs::path& path);
std::vector<TaskSpec> parse_tasks(std::string_view text);

// --- path guard ---------------------------------------------------------------

struct GuardVerdict {
    bool allowed = false;
    fs::path resolved;  // absolute, symlinks resolved, when resolution succeeded
    std::string reason;
};

// Allows a path iff, after resolving symlinks and "..", it names one of the
// roots or something beneath it. Relative candidates are taken relative to
// `base`. Intermediate components must exist; the last one may be missing.
class PathGuard {
public:
    PathGuard(std::vector<fs::path> roots, fs::path base);

    GuardVerdict check(const fs::path& candidate) const;
    const std::vector<fs::path>& roots() const noexcept { return roots_; }

    // Resolves like realpath(3) but tolerates a missing final component.
    static std::optional<fs::path> resolve(const fs::path& absolute_candidate);

private:
    std::vector<fs::path> roots_;
    fs::path base_;
};

bool is_within(const fs::path& path, const fs::path& root);

// --- tools ------------------------------------------------------------------

enum class ToolStatus { ok, error, denied };
std::string_view to_string(ToolStatus s);

struct ToolResult {
    std::string call_id;
    ToolStatus status = ToolStatus::ok;
    json payload;  // text, or a structured object such as an execution result
    std::optional<std::string> denied_path;
    std::optional<llm::ImageAttachment> image;

    // Text handed back to the model.
    std::string observation() const;
    bool operator==(const ToolResult&) const = default;
};

void to_json(json& j, const ToolResult& r);
void from_json(const json& j, ToolResult& r);

// The five tools offered to the model, by wire name.
const std::vector<llm::ToolSpec>& tool_specs();

struct ToolContext {
    const PathGuard* guard = nullptr;
    sandbox::CodeExecutor* executor = nullptr;
    fs::path workspace;          // relative model paths resolve here
    fs::path run_dir;            // absolute
    fs::path target_plot;        // absolute
    fs::path feedback_file;      // absolute
    fs::path dataset_csv;        // absolute path of the retrieved table
    double timeout_s = 60;
    bool send_images = false;
    int default_head_lines = 20;
    std::vector<fs::path>* code_iterations = nullptr;  // appended per execution
};

ToolResult dispatch_tool(const llm::ToolCall& call, ToolContext& ctx);

// --- runs --------------------------------------------------------------------

enum class Mode { zero_shot, agentic };
std::string_view to_string(Mode m);
Mode mode_from_string(std::string_view s);

struct AgentConfig {
    Mode mode = Mode::agentic;
    int max_iters = 25;
    prompting::ModuleSet modules;
    fs::path workspace = ".";
    fs::path data_dir = "data";      // relative paths resolve against workspace
    fs::path output_dir = "output";
    double timeout_s = 60;
    std::string model_config;        // label used when grading and reporting
    json provider_info = json::object();  // recorded verbatim in the manifest
};

enum class RunStatus { completed, exhausted_iters, failed };
std::string_view to_string(RunStatus s);
RunStatus run_status_from_string(std::string_view s);

struct TurnRecord {
    llm::ModelTurn turn;
    std::vector<ToolResult> results;
    bool operator==(const TurnRecord&) const = default;
};

struct RunRecord {
    std::string run_id;
    Mode mode = Mode::agentic;
    std::string model_config;
    TaskSpec task;
    std::optional<retrieval::RankedMatch> retrieved;
    std::optional<int> gold_rank;  // 0 when the gold table is not indexed
    std::vector<TurnRecord> turns;
    std::vector<std::string> code_iterations;  // workspace-relative
    std::optional<std::string> final_plot;     // workspace-relative
    RunStatus status = RunStatus::failed;
    std::string failure_reason;
    std::map<std::string, std::string> prompt_hashes;
    std::string executor;
    json config = json::object();
    std::string started_at;
    std::string finished_at;
};

void to_json(json& j, const RunRecord& r);
void from_json(const json& j, RunRecord& r);
RunRecord load_run(const fs::path& run_dir);

struct RunDeps {
    const retrieval::RetrievalIndex* index = nullptr;
    retrieval::EmbeddingProvider* embedder = nullptr;
    std::shared_ptr<llm::ChatProvider> chat;
    sandbox::CodeExecutor* executor = nullptr;
    llm::GatewayOptions gateway;  // log_path is set per run
};

// Retrieves the top-1 table, makes one model call with the zero-shot
// prompt, extracts the first fenced code block and executes it once.
RunRecord run_zero_shot(const TaskSpec& task, const AgentConfig& config, const std::string& run_id, RunDeps deps);

// Tool-using loop: at most config.max_iters model turns. Completes when the
// model stops after a plot exists; a stop without a plot fails.
RunRecord run_agentic(const TaskSpec& task, const AgentConfig& config, const std::string& run_id, RunDeps deps);

RunRecord run_task(const TaskSpec& task, const AgentConfig& config, const std::string& run_id, RunDeps deps);

// First ``` fenced block (language tag optional), or nullopt.
std::optional<std::string> extract_code_block(std::string_view text);

// Deterministic run id: <model_config>-<mode>-<task id>, slugified.
std::string make_run_id(const std::string& model_config, Mode mode, const std::string& task_id);

} // namespace statviz::agent
