#pragma once

#include "statviz/catalog.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

namespace statviz::prompting {

// Declaration order is the order module bodies appear in prompts.
enum class ModuleId { viz_context, lessons_learned, viz_checklist };

inline constexpr std::array<ModuleId, 3> kAllModules{ModuleId::viz_context, ModuleId::lessons_learned,
                                                     ModuleId::viz_checklist};

using ModuleSet = std::set<ModuleId>;

std::string_view to_string(ModuleId id);
// Throws UsageError naming the valid ids.
ModuleId parse_module_id(std::string_view s);
// Comma-separated list; empty string or "none" gives the empty set.
ModuleSet parse_module_list(std::string_view s);

struct ModuleText {
    std::string body;
    std::string sha256;
};

// Curated module bodies loaded from <dir>/modules/<id>.txt.
class ModuleLibrary {
public:
    explicit ModuleLibrary(const std::filesystem::path& prompts_dir);
    // Library at the prompts directory baked in at build time.
    static const ModuleLibrary& installed();

    const ModuleText& get(ModuleId id) const;
    std::map<std::string, std::string> hashes(const ModuleSet& modules) const;

private:
    std::map<ModuleId, ModuleText> modules_;
};

std::string render_module(ModuleId id, const ModuleLibrary& library = ModuleLibrary::installed());

enum class PromptKind { zero_shot, agentic };

struct PromptBundle {
    PromptKind kind = PromptKind::zero_shot;
    std::string system_text;
    std::optional<std::string> user_text;
    ModuleSet enabled_modules;
};

// Locations the agentic prompt advertises for one run. All paths sit under
// <output_root>/<run_id>/.
struct RunPaths {
    std::string run_id;
    std::filesystem::path run_dir;
    std::filesystem::path log_file;
    std::filesystem::path code_save_pattern;  // contains the literal "<n>"
    std::filesystem::path target_plot;
    std::filesystem::path feedback_file;

    static RunPaths make(const std::filesystem::path& output_root, std::string run_id);
    std::filesystem::path code_iteration(int n) const;
};

bool is_safe_run_id(std::string_view run_id);

// Comma-separated values in column order, nulls as "null".
std::string format_sample_row(const catalog::Row& row);

PromptBundle assemble_zero_shot(const catalog::TableMetadata& meta, const catalog::Row& sample,
                                const std::string& task, const ModuleSet& modules,
                                const ModuleLibrary& library = ModuleLibrary::installed());

PromptBundle assemble_agentic(const RunPaths& paths, const std::string& dataset_context, const ModuleSet& modules,
                              const ModuleLibrary& library = ModuleLibrary::installed());

// Title, description, file location and column list of the retrieved table,
// as injected into the agentic prompt.
std::string describe_dataset(const catalog::TableMetadata& meta, const std::filesystem::path& csv_display_path);

} // namespace statviz::prompting
