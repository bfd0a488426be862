#include "statviz/prompting.hpp"

#include "statviz/error.hpp"
#include "statviz/util.hpp"

#include <fmt/format.h>

#ifndef STATVIZ_PROMPTS_DIR
#define STATVIZ_PROMPTS_DIR "prompts"
#endif

namespace statviz::prompting {

namespace fs = std::filesystem;

std::string_view to_string(ModuleId id) {
    switch (id) {
    case ModuleId::viz_context: return "viz_context";
    case ModuleId::lessons_learned: return "lessons_learned";
    case ModuleId::viz_checklist: return "viz_checklist";
    }
    return "viz_context";
}

ModuleId parse_module_id(std::string_view s) {
    for (auto id : kAllModules) {
        if (to_string(id) == s) {
            return id;
        }
    }
    throw UsageError(fmt::format("unknown prompt module '{}' (valid: viz_context, lessons_learned, viz_checklist)", s));
}

ModuleSet parse_module_list(std::string_view s) {
    ModuleSet out;
    auto text = util::trim(s);
    if (text.empty() || text == "none") {
        return out;
    }
    std::size_t start = 0;
    while (start <= text.size()) {
        auto comma = text.find(',', start);
        auto item = util::trim(std::string_view(text).substr(start, comma == std::string::npos ? std::string::npos : comma - start));
        out.insert(parse_module_id(item));
        if (comma == std::string::npos) {
            break;
        }
        start = comma + 1;
    }
    return out;
}

ModuleLibrary::ModuleLibrary(const fs::path& prompts_dir) {
    for (auto id : kAllModules) {
        auto path = prompts_dir / "modules" / (std::string(to_string(id)) + ".txt");
        if (!fs::exists(path)) {
            throw NotFoundError("prompt module asset missing: " + path.string());
        }
        auto body = util::trim(util::read_file(path));
        if (body.empty()) {
            throw ValidationError("prompt module asset is empty: " + path.string());
        }
        auto hash = util::sha256_hex(body);
        modules_.emplace(id, ModuleText{std::move(body), std::move(hash)});
    }
}

const ModuleLibrary& ModuleLibrary::installed() {
    static const ModuleLibrary library{fs::path(STATVIZ_PROMPTS_DIR)};
    return library;
}

const ModuleText& ModuleLibrary::get(ModuleId id) const {
    return modules_.at(id);
}

std::map<std::string, std::string> ModuleLibrary::hashes(const ModuleSet& modules) const {
    std::map<std::string, std::string> out;
    for (auto id : modules) {
        out.emplace(std::string(to_string(id)), get(id).sha256);
    }
    return out;
}

std::string render_module(ModuleId id, const ModuleLibrary& library) {
    return library.get(id).body;
}

bool is_safe_run_id(std::string_view run_id) {
    if (run_id.empty() || run_id.size() > 128 || run_id.front() == '.' || run_id.front() == '-') {
        return false;
    }
    for (char c : run_id) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' ||
                  c == '_' || c == '-';
        if (!ok) {
            return false;
        }
    }
    return true;
}

RunPaths RunPaths::make(const fs::path& output_root, std::string run_id) {
    if (!is_safe_run_id(run_id)) {
        throw PreconditionError(fmt::format("run id '{}' is not filesystem-safe", run_id));
    }
    auto dir = output_root / run_id;
    return {std::move(run_id), dir, dir / "agent_log", dir / "code_iter_<n>.py", dir / "plot.png",
            dir / "feedback.txt"};
}

fs::path RunPaths::code_iteration(int n) const {
    return run_dir / fmt::format("code_iter_{}.py", n);
}

std::string format_sample_row(const catalog::Row& row) {
    std::string out;
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i > 0) {
            out += ", ";
        }
        out += row[i] ? util::trim(*row[i]) : "null";
    }
    return out;
}

namespace {

std::string task_clause(const std::string& task) {
    auto t = util::trim(task);
    while (!t.empty() && (t.back() == '.' || t.back() == ' ')) {
        t.pop_back();
    }
    // "Plot the ..." reads as "Write Python code to plot the ...".
    if (t.size() > 1 && t[0] >= 'A' && t[0] <= 'Z' && t[1] >= 'a' && t[1] <= 'z') {
        t[0] = static_cast<char>(t[0] - 'A' + 'a');
    }
    return t;
}

std::string module_block(const ModuleSet& modules, const ModuleLibrary& library) {
    std::string out;
    for (auto id : modules) {
        out += library.get(id).body;
        out += "\n\n";
    }
    return out;
}

} // namespace

PromptBundle assemble_zero_shot(const catalog::TableMetadata& meta, const catalog::Row& sample,
                                const std::string& task, const ModuleSet& modules, const ModuleLibrary& library) {
    if (meta.columns.empty()) {
        throw PreconditionError("table " + meta.ref.id() + " has no columns");
    }
    auto clause = task_clause(task);
    if (clause.empty()) {
        throw PreconditionError("task text is empty");
    }
    std::string columns;
    for (std::size_t i = 0; i < meta.columns.size(); ++i) {
        columns += (i ? ", " : "") + meta.columns[i].name;
    }

    std::string text;
    text += "Data Analysis Request\n";
    text += "Column names (attributes) of data to be analyzed:\n";
    text += columns + "\n\n";
    text += "Sample row from the data (example):\n";
    text += format_sample_row(sample) + "\n\n";
    text += "Data description:\n";
    text += util::trim(meta.description) + "\n\n";
    text += module_block(modules, library);
    text += "Additional information: Don't use the sample row as input. Make sure to use only the corresponding "
            "column name(s) from the list provided above. Assume that you already have access to all the data "
            "stored in a variable named df. Don't use any variables other than df and those derived from df. "
            "Now do the following: Write Python code to ";
    text += clause;
    text += ". Provide a short description of the data, separated from the code.\n";
    return {PromptKind::zero_shot, std::move(text), std::nullopt, modules};
}

PromptBundle assemble_agentic(const RunPaths& paths, const std::string& dataset_context, const ModuleSet& modules,
                              const ModuleLibrary& library) {
    if (!is_safe_run_id(paths.run_id)) {
        throw PreconditionError("run paths carry an unsafe run id");
    }
    std::string text;
    text += "You are an expert data analysis and visualization assistant. Your goal is to help the user create a "
            "visualization based on their request.\n\n";
    if (!util::trim(dataset_context).empty()) {
        text += util::trim(dataset_context) + "\n\n";
    }
    text += module_block(modules, library);
    text += fmt::format("You have access to a filesystem restricted to the './data/' directory. All outputs for this "
                        "run will be saved within './output/{}/'.\n",
                        paths.run_id);
    text += "Key file paths for this run:\n";
    text += "- Log File: " + paths.log_file.generic_string() + "\n";
    text += "- Executed Code: " + paths.code_save_pattern.generic_string() + "\n";
    text += "- Target Plot: " + paths.target_plot.generic_string() + "\n";
    text += "- Human Feedback: " + paths.feedback_file.generic_string() + "\n\n";
    text += "Follow these steps:\n"
            "1. Understand Request: Clarify the user's goal.\n"
            "2. Explore Data: Use list_files if needed.\n"
            "3. Inspect Data: Use read_file_head.\n"
            "4. Plan Code: Plan pandas/matplotlib/seaborn code.\n"
            "5. Execute Code: Use execute_python_code.\n"
            "6. Analyze Results: Check execution output.\n"
            "7. Respond: Explain steps, results, describe plot.\n\n";
    text += "Available Tools:\n"
            "- list_files: Lists files in directory\n"
            "- read_file_head: Reads start of file\n"
            "- execute_python_code: Executes Python code\n"
            "- read_visualization_image: Reads the plot\n"
            "- get_human_feedback: Logs request for help\n";
    return {PromptKind::agentic, std::move(text), std::nullopt, modules};
}

std::string describe_dataset(const catalog::TableMetadata& meta, const fs::path& csv_display_path) {
    std::string out = fmt::format("Dataset selected for this request: {} ({})\n", meta.title, meta.ref.id());
    out += "File: " + csv_display_path.generic_string() + "\n";
    out += "Description: " + util::trim(meta.description) + "\n";
    out += "Columns:\n";
    for (const auto& c : meta.columns) {
        out += fmt::format("- {} ({}{})\n", c.name, catalog::to_string(c.kind), c.unit ? ", unit: " + *c.unit : "");
    }
    return out;
}

} // namespace statviz::prompting
