#include "support.hpp"

#include "statviz/catalog.hpp"
#include "statviz/util.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <random>

namespace statviz::testing {

using nlohmann::json;

fs::path source_dir() {
    return STATVIZ_SOURCE_DIR;
}

fs::path fixtures_dir() {
    return source_dir() / "tests" / "fixtures";
}

fs::path prompts_dir() {
    return source_dir() / "prompts";
}

const std::vector<std::string>& fixture_table_ids() {
    static const std::vector<std::string> ids{"37325ENG", "7425ENG",  "80001ENG", "80002ENG",
                                              "82610ENG", "83131ENG", "85332ENG"};
    return ids;
}

TempDir::TempDir() {
    std::random_device rd;
    auto base = fs::temp_directory_path();
    for (int attempt = 0; attempt < 100; ++attempt) {
        auto candidate = base / fmt::format("statviz-test-{:016x}", (std::uint64_t(rd()) << 32) | rd());
        if (fs::create_directory(candidate)) {
            // Canonical so guard checks are not confused by a symlinked /tmp.
            path_ = fs::canonical(candidate);
            return;
        }
    }
    throw std::runtime_error("cannot create a temporary directory");
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

FixtureTransport::FixtureTransport(fs::path root) : root_(std::move(root)) {}

void FixtureTransport::fail_when(std::string url_fragment, int status) {
    fail_fragments_[std::move(url_fragment)] = status;
}

void FixtureTransport::fail_after(int n, int status) {
    fail_after_ = {n, status};
}

std::vector<std::string> FixtureTransport::urls() const {
    std::lock_guard lock(mu_);
    return urls_;
}

namespace {

long query_param(const std::string& query, const std::string& name, long fallback) {
    auto pos = query.find(name + "=");
    if (pos == std::string::npos) {
        return fallback;
    }
    return std::stol(query.substr(pos + name.size() + 1));
}

http::Response not_found(const std::string& what) {
    return {404, json{{"odata.error", {{"code", ""}, {"message", {{"lang", "en-US"}, {"value", what}}}}}}.dump()};
}

} // namespace

http::Response FixtureTransport::get(const std::string& url, const http::Headers&) {
    int n = ++gets_;
    {
        std::lock_guard lock(mu_);
        urls_.push_back(url);
    }
    for (const auto& [fragment, status] : fail_fragments_) {
        if (url.find(fragment) != std::string::npos) {
            return {status, "injected failure"};
        }
    }
    if (fail_after_ && n > fail_after_->first) {
        return {fail_after_->second, "injected failure"};
    }
    const std::string marker = "/ODataApi/OData/";
    auto at = url.find(marker);
    if (at == std::string::npos) {
        return not_found("unknown endpoint");
    }
    auto rest = url.substr(at + marker.size());
    std::string query;
    if (auto q = rest.find('?'); q != std::string::npos) {
        query = rest.substr(q + 1);
        rest = rest.substr(0, q);
    }
    auto slash = rest.find('/');
    if (slash == std::string::npos) {
        return not_found("no resource");
    }
    auto file = root_ / rest.substr(0, slash) / (rest.substr(slash + 1) + ".json");
    if (!fs::exists(file)) {
        return not_found("Resource not found for the segment '" + rest.substr(0, slash) + "'");
    }
    auto doc = json::parse(util::read_file(file));
    if (rest.ends_with("/TypedDataSet") && !query.empty()) {
        auto skip = query_param(query, "$skip", 0);
        auto top = query_param(query, "$top", static_cast<long>(doc["value"].size()));
        json page = json::array();
        for (long i = skip; i < skip + top && i < static_cast<long>(doc["value"].size()); ++i) {
            page.push_back(doc["value"][static_cast<std::size_t>(i)]);
        }
        doc["value"] = page;
    }
    return {200, doc.dump()};
}

http::Response FixtureTransport::post(const std::string&, const std::string&, const http::Headers&) {
    return {405, "fixture transport is read-only"};
}

void materialize_fixture_catalog(const fs::path& data_dir) {
    fs::create_directories(data_dir);
    catalog::ODataClient client(kFixtureBase, std::make_shared<FixtureTransport>());
    for (const auto& id : fixture_table_ids()) {
        auto meta = client.fetch_metadata(catalog::TableRef(id));
        catalog::materialize(client.fetch_table(meta, 1000), meta, data_dir);
    }
}

eval::GradeSheet synthetic_sheet(std::string model_config, std::string task_id, int v, int c, int d) {
    eval::GradeSheet sheet;
    sheet.run_id = model_config + "-" + task_id;
    sheet.model_config = std::move(model_config);
    sheet.task_id = std::move(task_id);
    sheet.grader = "synthetic";
    std::map<eval::Category, int> yes{{eval::Category::visual, v}, {eval::Category::code, c}, {eval::Category::data, d}};
    for (const auto& item : eval::checklist()) {
        sheet.answers[std::string(item.id)] = yes[item.category]-- > 0 ? 1 : 0;
    }
    return sheet;
}

std::string fill_form(const std::string& form, const eval::GradeSheet& sheet) {
    std::string out;
    for (const auto& line : util::split_lines(form)) {
        if (line == "grader =") {
            out += "grader = " + sheet.grader + "\n";
            continue;
        }
        auto key = line.size() > 2 && line.ends_with(" =") ? line.substr(0, line.size() - 2) : std::string();
        auto it = sheet.answers.find(key);
        out += it == sheet.answers.end() ? line : fmt::format("{} = {}", key, it->second);
        out += "\n";
    }
    return out;
}

llm::ToolCall call(std::string id, std::string name, json args) {
    return {std::move(id), std::move(name), std::move(args)};
}

} // namespace statviz::testing
