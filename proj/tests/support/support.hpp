#pragma once

#include "statviz/eval.hpp"
#include "statviz/http.hpp"
#include "statviz/llm.hpp"

#include <atomic>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace statviz::testing {

namespace fs = std::filesystem;

fs::path source_dir();
fs::path fixtures_dir();
fs::path prompts_dir();

inline const std::string kFixtureBase = "https://fixture.test";

// The seven materializable fixture tables, sorted.
const std::vector<std::string>& fixture_table_ids();

class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const noexcept { return path_; }
    fs::path operator/(const fs::path& p) const { return path_ / p; }

private:
    fs::path path_;
};

// Serves tests/fixtures/odata/<id>/<resource>.json for any origin,
// applying $top/$skip to TypedDataSet. Unknown tables get a 404.
class FixtureTransport final : public http::Transport {
public:
    explicit FixtureTransport(fs::path root = fixtures_dir() / "odata");

    http::Response get(const std::string& url, const http::Headers& headers = {}) override;
    http::Response post(const std::string& url, const std::string& body, const http::Headers& headers = {}) override;

    // Any GET whose URL contains the key answers with the status instead.
    void fail_when(std::string url_fragment, int status);
    // GETs after the first n succeed no more; they return status.
    void fail_after(int n, int status);

    int gets() const noexcept { return gets_; }
    std::vector<std::string> urls() const;

private:
    fs::path root_;
    std::map<std::string, int> fail_fragments_;
    std::optional<std::pair<int, int>> fail_after_;
    std::atomic<int> gets_{0};
    mutable std::mutex mu_;
    std::vector<std::string> urls_;
};

// Fetches and materializes all fixture tables into data_dir.
void materialize_fixture_catalog(const fs::path& data_dir);

// A sheet whose first v visual, c code and d data items are answered yes.
eval::GradeSheet synthetic_sheet(std::string model_config, std::string task_id, int v, int c, int d);

// Fills the blanks of a rendered grade form with the sheet's answers and grader.
std::string fill_form(const std::string& form, const eval::GradeSheet& sheet);

llm::ToolCall call(std::string id, std::string name, nlohmann::json args = nlohmann::json::object());

} // namespace statviz::testing
