#include "statviz/eval.hpp"

#include "statviz/util.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <set>
#include <tuple>

namespace statviz::eval {

std::string_view to_string(Category c) {
    switch (c) {
    case Category::visual: return "visual";
    case Category::code: return "code";
    case Category::data: return "data";
    }
    return "visual";
}

namespace {

using enum Category;

constexpr std::array<ChecklistItem, kChecklistSize> kChecklist{{
    {"x_axis_correct", visual, "X-axis correct", "Does the x-axis show the variable the prompt asks for?"},
    {"y_axis_correct", visual, "Y-axis correct", "Does the y-axis show the requested measure?"},
    {"axis_labels_clear", visual, "Axis labels clear", "Are both axes labelled clearly, with units where relevant?"},
    {"color_used_well", visual, "Color used well", "Does colour distinguish series without confusing the reader?"},
    {"legend_accurate", visual, "Legend accurate", "Is the legend present when needed and does it match the series?"},
    {"good_scaling", visual, "Good scaling", "Are the axis ranges and scales appropriate for the data?"},
    {"marks_correct", visual, "Marks correct", "Are the marks (lines, bars, points) the right ones for the data?"},
    {"readable_layout", visual, "Readable layout", "Is the layout readable, with no overlapping text or clutter?"},
    {"correct_imports", code, "Correct imports", "Does the code import what it uses and nothing missing?"},
    {"code_runs", code, "Code runs", "Does the code run without errors?"},
    {"correct_columns", code, "Correct columns", "Does the code reference the right dataset columns?"},
    {"filters_correctly", code, "Filters correctly", "Are the filters in the code correct?"},
    {"no_hardcoding", code, "No hardcoding", "Does the code avoid hardcoding values that belong to the data?"},
    {"prompt_fully_handled", code, "Prompt fully handled", "Does the code address every part of the prompt?"},
    {"no_redundancy", code, "No redundancy", "Is the code free of redundant or dead steps?"},
    {"correct_chart_type", data, "Correct chart type", "Is the chart type suitable for the question?"},
    {"column_selection", data, "Column selection", "Are the plotted columns the right ones?"},
    {"correct_filtering", data, "Correct filtering", "Is the plotted data filtered as the prompt requires?"},
    {"correct_aggregation", data, "Correct aggregation", "Is the data aggregated correctly (or left unaggregated when it should be)?"},
    {"subset_accurate", data, "Subset accurate", "Does the plotted subset match the requested periods and categories?"},
    {"handles_nulls", data, "Handles nulls", "Are missing values handled sensibly?"},
    {"prompt_fully_covered", data, "Prompt fully covered", "Does the plotted data cover everything the prompt asks for?"},
}};

constexpr int count_of(Category c) {
    int n = 0;
    for (const auto& item : kChecklist) {
        n += item.category == c ? 1 : 0;
    }
    return n;
}

static_assert(count_of(visual) == kVisualItems);
static_assert(count_of(code) == kCodeItems);
static_assert(count_of(data) == kDataItems);

} // namespace

const std::array<ChecklistItem, kChecklistSize>& checklist() {
    return kChecklist;
}

const ChecklistItem* find_item(std::string_view id) {
    for (const auto& item : kChecklist) {
        if (item.id == id) {
            return &item;
        }
    }
    return nullptr;
}

int category_size(Category c) {
    return count_of(c);
}

void validate(const GradeSheet& sheet) {
    for (const auto& [id, value] : sheet.answers) {
        if (!find_item(id)) {
            throw ValidationError(fmt::format("unknown checklist item '{}'", id));
        }
        if (value != 0 && value != 1) {
            throw DomainError(fmt::format("answer for '{}' must be 0 or 1, got {}", id, value));
        }
    }
    for (const auto& item : kChecklist) {
        if (!sheet.answers.contains(std::string(item.id))) {
            throw ValidationError(fmt::format("missing answer for '{}'", item.id));
        }
    }
}

RawTotals raw_totals(const GradeSheet& sheet) {
    validate(sheet);
    RawTotals raw;
    for (const auto& item : kChecklist) {
        int v = sheet.answers.at(std::string(item.id));
        switch (item.category) {
        case visual: raw.visual += v; break;
        case code: raw.code += v; break;
        case data: raw.data += v; break;
        }
    }
    return raw;
}

CategoryScores normalize(const RawTotals& raw) {
    auto scale = [](int got, int size, std::string_view what) {
        if (got < 0 || got > size) {
            throw DomainError(fmt::format("{} total {} outside 0..{}", what, got, size));
        }
        return util::round_half_up(10.0 * got / size);
    };
    return {scale(raw.visual, kVisualItems, "visual"), scale(raw.code, kCodeItems, "code"),
            scale(raw.data, kDataItems, "data"), raw};
}

CategoryScores normalize(const GradeSheet& sheet) {
    return normalize(raw_totals(sheet));
}

ScoreReport aggregate(const std::vector<GradeSheet>& sheets, const std::vector<agent::TaskSpec>& tasks,
                      bool by_difficulty) {
    std::map<std::string, agent::Difficulty> difficulty;
    for (const auto& t : tasks) {
        difficulty[t.id] = t.difficulty;
    }

    struct Sum {
        double visual = 0, code = 0, data = 0;
        int n = 0;
        void add(const CategoryScores& s) {
            visual += s.visual;
            code += s.code;
            data += s.data;
            ++n;
        }
    };
    std::map<std::string, Sum> by_config;
    std::map<std::pair<std::string, agent::Difficulty>, Sum> by_group;
    std::set<std::pair<std::string, std::string>> seen;

    for (const auto& sheet : sheets) {
        auto d = difficulty.find(sheet.task_id);
        if (d == difficulty.end()) {
            throw ValidationError(fmt::format("grade sheet for run '{}' references unknown task '{}'", sheet.run_id,
                                              sheet.task_id));
        }
        if (!seen.emplace(sheet.model_config, sheet.task_id).second) {
            throw ValidationError(fmt::format("two grade sheets for ({}, {})", sheet.model_config, sheet.task_id));
        }
        auto scores = normalize(sheet);
        by_config[sheet.model_config].add(scores);
        by_group[{sheet.model_config, d->second}].add(scores);
    }

    auto row = [](const std::string& config, std::optional<agent::Difficulty> diff, const Sum& s) {
        return ScoreRow{config,
                        diff,
                        util::round_half_up(s.visual / s.n),
                        util::round_half_up(s.code / s.n),
                        util::round_half_up(s.data / s.n),
                        s.n};
    };
    ScoreReport report;
    report.n_sheets = static_cast<int>(sheets.size());
    for (const auto& [config, sum] : by_config) {
        report.rows.push_back(row(config, std::nullopt, sum));
    }
    if (by_difficulty) {
        for (const auto& [key, sum] : by_group) {
            report.breakdown.push_back(row(key.first, key.second, sum));
        }
    }
    return report;
}

ReportFormat report_format_from_string(std::string_view s) {
    if (s == "text-table" || s == "text" || s == "table") return ReportFormat::text_table;
    if (s == "csv") return ReportFormat::csv;
    throw UsageError(fmt::format("unknown report format '{}' (valid: text-table, csv)", s));
}

namespace {

std::string render_csv(const ScoreReport& report) {
    std::string out = "model_config,visual,code,data,n\n";
    for (const auto& r : report.rows) {
        std::vector<util::Field> cells{r.model_config, util::format_fixed(r.visual), util::format_fixed(r.code),
                                       util::format_fixed(r.data), std::to_string(r.n)};
        out += util::csv_format_row(cells) + "\n";
    }
    if (!report.breakdown.empty()) {
        out += "\nmodel_config,difficulty,visual,code,data,n\n";
        for (const auto& r : report.breakdown) {
            std::vector<util::Field> cells{r.model_config,
                                           std::string(agent::to_string(*r.difficulty)),
                                           util::format_fixed(r.visual),
                                           util::format_fixed(r.code),
                                           util::format_fixed(r.data),
                                           std::to_string(r.n)};
            out += util::csv_format_row(cells) + "\n";
        }
    }
    return out;
}

std::string render_table(const ScoreReport& report) {
    std::size_t width = std::string_view("model_config").size();
    for (const auto& r : report.rows) {
        width = std::max(width, r.model_config.size());
    }
    std::string out = fmt::format("{:<{}}  {:>6}  {:>6}  {:>6}  {:>4}\n", "model_config", width, "Visual", "Code",
                                  "Data", "n");
    for (const auto& r : report.rows) {
        out += fmt::format("{:<{}}  {:>6}  {:>6}  {:>6}  {:>4}\n", r.model_config, width, util::format_fixed(r.visual),
                           util::format_fixed(r.code), util::format_fixed(r.data), r.n);
    }
    if (!report.breakdown.empty()) {
        out += fmt::format("\nBy difficulty\n{:<{}}  {:<10}  {:>6}  {:>6}  {:>6}  {:>4}\n", "model_config", width,
                           "difficulty", "Visual", "Code", "Data", "n");
        for (const auto& r : report.breakdown) {
            out += fmt::format("{:<{}}  {:<10}  {:>6}  {:>6}  {:>6}  {:>4}\n", r.model_config, width,
                               agent::to_string(*r.difficulty), util::format_fixed(r.visual),
                               util::format_fixed(r.code), util::format_fixed(r.data), r.n);
        }
    }
    out += fmt::format("\n{} grade sheets\n", report.n_sheets);
    return out;
}

double parse_score(const util::Field& f) {
    if (!f) {
        throw ParseError("missing score in report csv", "");
    }
    try {
        std::size_t used = 0;
        double v = std::stod(*f, &used);
        if (used != f->size()) {
            throw ParseError("bad score in report csv", *f);
        }
        return v;
    } catch (const std::logic_error&) {
        throw ParseError("bad score in report csv", *f);
    }
}

int parse_count(const util::Field& f) {
    auto v = parse_score(f);
    if (v < 0 || v != static_cast<int>(v)) {
        throw ParseError("bad count in report csv", f.value_or(""));
    }
    return static_cast<int>(v);
}

} // namespace

std::string render_report(const ScoreReport& report, ReportFormat format) {
    if (report.rows.empty()) {
        throw PreconditionError("report has no rows");
    }
    return format == ReportFormat::csv ? render_csv(report) : render_table(report);
}

ScoreReport parse_report_csv(std::string_view text) {
    ScoreReport report;
    enum { none, main_block, breakdown_block } block = none;
    for (const auto& line : util::split_lines(text)) {
        if (util::trim(line).empty()) {
            block = none;
            continue;
        }
        auto rows = util::csv_parse(line);
        if (rows.size() != 1) {
            throw ParseError("unexpected line in report csv", line);
        }
        const auto& cells = rows.front();
        if (line == "model_config,visual,code,data,n") {
            block = main_block;
            continue;
        }
        if (line == "model_config,difficulty,visual,code,data,n") {
            block = breakdown_block;
            continue;
        }
        if (block == main_block && cells.size() == 5) {
            report.rows.push_back({cells[0].value_or(""), std::nullopt, parse_score(cells[1]), parse_score(cells[2]),
                                   parse_score(cells[3]), parse_count(cells[4])});
        } else if (block == breakdown_block && cells.size() == 6) {
            report.breakdown.push_back({cells[0].value_or(""), agent::difficulty_from_string(cells[1].value_or("")),
                                        parse_score(cells[2]), parse_score(cells[3]), parse_score(cells[4]),
                                        parse_count(cells[5])});
        } else {
            throw ParseError("unexpected line in report csv", line);
        }
    }
    for (const auto& r : report.rows) {
        report.n_sheets += r.n;
    }
    return report;
}

// --- grade forms ---------------------------------------------------------------

fs::path grade_form_path(const fs::path& grades_dir, const std::string& model_config, const std::string& task_id) {
    auto config = util::slugify(model_config.empty() ? "default" : model_config);
    return grades_dir / fmt::format("{}__{}.grade.txt", config, util::slugify(task_id));
}

std::string render_grade_form(const agent::RunRecord& run) {
    std::string out;
    out += "# Grade form. Answer every item with 1 (yes) or 0 (no).\n";
    out += fmt::format("# prompt: {}\n", run.task.prompt);
    out += fmt::format("# status: {}{}\n", agent::to_string(run.status),
                       run.failure_reason.empty() ? "" : " (" + run.failure_reason + ")");
    out += fmt::format("# plot: {}\n", run.final_plot.value_or("none"));
    for (const auto& code : run.code_iterations) {
        out += fmt::format("# code: {}\n", code);
    }
    out += fmt::format("run_id = {}\n", run.run_id);
    out += fmt::format("model_config = {}\n", run.model_config);
    out += fmt::format("task_id = {}\n", run.task.id);
    out += fmt::format("difficulty = {}\n", agent::to_string(run.task.difficulty));
    out += "grader =\n";
    out += "notes =\n";
    out += "---\n";
    for (const auto& item : kChecklist) {
        out += fmt::format("# [{}] {}: {}\n{} =\n", to_string(item.category), item.label, item.question, item.id);
    }
    return out;
}

fs::path emit_grade_form(const fs::path& run_dir, const fs::path& grades_dir, bool overwrite) {
    if (!fs::is_directory(run_dir)) {
        throw NotFoundError("run directory not found: " + run_dir.string());
    }
    auto run = agent::load_run(run_dir);
    fs::create_directories(grades_dir);
    auto path = grade_form_path(grades_dir, run.model_config, run.task.id);
    if (overwrite || !fs::exists(path)) {
        util::write_file_atomic(path, render_grade_form(run));
    }
    return path;
}

GradeSheet parse_grade_sheet(std::string_view text) {
    GradeSheet sheet;
    std::map<std::string, std::string> header;
    bool in_answers = false;
    int line_no = 0;
    for (const auto& raw : util::split_lines(text)) {
        ++line_no;
        auto line = util::trim(raw);
        if (line.empty() || line.front() == '#') {
            continue;
        }
        if (line == "---") {
            in_answers = true;
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError(fmt::format("line {}: expected key = value", line_no), line);
        }
        auto key = util::trim(std::string_view(line).substr(0, eq));
        auto value = util::trim(std::string_view(line).substr(eq + 1));
        if (!in_answers) {
            header[key] = value;
            continue;
        }
        if (!find_item(key)) {
            throw ValidationError(fmt::format("line {}: unknown checklist item '{}'", line_no, key));
        }
        if (sheet.answers.contains(key)) {
            throw ValidationError(fmt::format("line {}: duplicate answer for '{}'", line_no, key));
        }
        if (value.empty()) {
            throw ValidationError(fmt::format("missing answer for '{}'", key));
        }
        if (value != "0" && value != "1") {
            throw DomainError(fmt::format("line {}: answer for '{}' must be 0 or 1, got '{}'", line_no, key, value));
        }
        sheet.answers[key] = value == "1" ? 1 : 0;
    }
    for (const char* key : {"run_id", "model_config", "task_id"}) {
        if (header[key].empty()) {
            throw ValidationError(fmt::format("grade sheet header lacks '{}'", key));
        }
    }
    sheet.run_id = header["run_id"];
    sheet.model_config = header["model_config"];
    sheet.task_id = header["task_id"];
    sheet.grader = header["grader"];
    if (!header["notes"].empty()) {
        sheet.notes = header["notes"];
    }
    validate(sheet);
    return sheet;
}

GradeSheet ingest_grades(const fs::path& file) {
    try {
        return parse_grade_sheet(util::read_file(file));
    } catch (const DomainError& e) {
        throw DomainError(file.filename().string() + ": " + e.what());
    } catch (const ValidationError& e) {
        throw ValidationError(file.filename().string() + ": " + e.what());
    }
}

std::vector<GradeSheet> ingest_directory(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw NotFoundError("grades directory not found: " + dir.string());
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().filename().string().ends_with(".grade.txt")) {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::vector<GradeSheet> sheets;
    for (const auto& f : files) {
        sheets.push_back(ingest_grades(f));
    }
    return sheets;
}

} // namespace statviz::eval
