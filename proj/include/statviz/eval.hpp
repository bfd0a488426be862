#pragma once

#include "statviz/agent.hpp"
#include "statviz/error.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace statviz::eval {

namespace fs = std::filesystem;

// An answer outside {0,1}.
class DomainError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

enum class Category { visual, code, data };
std::string_view to_string(Category c);

struct ChecklistItem {
    std::string_view id;
    Category category;
    std::string_view label;
    std::string_view question;
};

inline constexpr int kVisualItems = 8;
inline constexpr int kCodeItems = 7;
inline constexpr int kDataItems = 7;
inline constexpr int kChecklistSize = kVisualItems + kCodeItems + kDataItems;

// Visual items first, then code, then data.
const std::array<ChecklistItem, kChecklistSize>& checklist();
const ChecklistItem* find_item(std::string_view id);
int category_size(Category c);

struct GradeSheet {
    std::string run_id;
    std::string model_config;
    std::string task_id;
    std::map<std::string, int> answers;  // item id -> 0 or 1
    std::string grader;
    std::optional<std::string> notes;
};

// Throws ValidationError for missing, unknown or duplicate ids and
// DomainError for answers other than 0/1.
void validate(const GradeSheet& sheet);

struct RawTotals {
    int visual = 0;
    int code = 0;
    int data = 0;
    bool operator==(const RawTotals&) const = default;
};

struct CategoryScores {
    double visual = 0;
    double code = 0;
    double data = 0;
    RawTotals raw;
};

RawTotals raw_totals(const GradeSheet& sheet);
CategoryScores normalize(const RawTotals& raw);
CategoryScores normalize(const GradeSheet& sheet);

struct ScoreRow {
    std::string model_config;
    std::optional<agent::Difficulty> difficulty;  // set in breakdown rows
    double visual = 0;
    double code = 0;
    double data = 0;
    int n = 0;
    bool operator==(const ScoreRow&) const = default;
};

struct ScoreReport {
    std::vector<ScoreRow> rows;       // sorted by model_config
    std::vector<ScoreRow> breakdown;  // by model_config, then difficulty
    int n_sheets = 0;
};

// Means of the rounded per-sheet scores, rounded again half-up to 2 places.
ScoreReport aggregate(const std::vector<GradeSheet>& sheets, const std::vector<agent::TaskSpec>& tasks,
                      bool by_difficulty = false);

enum class ReportFormat { text_table, csv };
ReportFormat report_format_from_string(std::string_view s);

std::string render_report(const ScoreReport& report, ReportFormat format);
ScoreReport parse_report_csv(std::string_view text);

// --- grade forms ---------------------------------------------------------------

fs::path grade_form_path(const fs::path& grades_dir, const std::string& model_config, const std::string& task_id);

std::string render_grade_form(const agent::RunRecord& run);

// Writes the blank form for the run in run_dir. An existing form is kept
// (it may already hold answers) unless overwrite is set.
fs::path emit_grade_form(const fs::path& run_dir, const fs::path& grades_dir, bool overwrite = false);

GradeSheet parse_grade_sheet(std::string_view text);
GradeSheet ingest_grades(const fs::path& file);

// Every *.grade.txt file in dir, ordered by file name.
std::vector<GradeSheet> ingest_directory(const fs::path& dir);

} // namespace statviz::eval
