#include "statviz/catalog.hpp"

#include "statviz/error.hpp"
#include "statviz/util.hpp"

#include <json.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <set>
#include <unordered_map>

namespace statviz::catalog {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

TableRef::TableRef(std::string id) : id_(std::move(id)) {
    if (!is_well_formed(id_)) {
        throw PreconditionError(fmt::format("malformed table identifier '{}'", id_));
    }
}

bool TableRef::is_well_formed(std::string_view id) {
    if (id.empty() || id.size() > 64) {
        return false;
    }
    return std::all_of(id.begin(), id.end(), [](char c) {
        return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
    });
}

std::string_view to_string(ColumnKind kind) {
    switch (kind) {
    case ColumnKind::categorical: return "categorical";
    case ColumnKind::numeric: return "numeric";
    case ColumnKind::period_string: return "period-string";
    case ColumnKind::key: return "key";
    }
    return "categorical";
}

ColumnKind column_kind_from_string(std::string_view s) {
    if (s == "categorical") return ColumnKind::categorical;
    if (s == "numeric") return ColumnKind::numeric;
    if (s == "period-string") return ColumnKind::period_string;
    if (s == "key") return ColumnKind::key;
    throw ParseError("unknown column kind", std::string(s));
}

std::string TableMetadata::retrieval_text() const {
    if (title.empty()) {
        return description;
    }
    return title + ". " + description;
}

void TableMetadata::validate() const {
    if (util::trim(description).empty()) {
        throw ValidationError("table " + ref.id() + " has an empty description");
    }
    std::set<std::string> seen;
    for (const auto& c : columns) {
        if (!seen.insert(c.name).second) {
            throw ValidationError(fmt::format("table {} has duplicate column '{}'", ref.id(), c.name));
        }
    }
}

std::size_t DataTable::column_index(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i].name == name) {
            return i;
        }
    }
    throw NotFoundError(fmt::format("table {} has no column '{}'", ref.id(), name));
}

void DataTable::check_arity() const {
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != columns.size()) {
            throw ValidationError(fmt::format("table {} row {} has {} values for {} columns", ref.id(), r,
                                              rows[r].size(), columns.size()));
        }
    }
}

bool parses_as_number(std::string_view s) {
    auto t = util::trim(s);
    if (t.empty()) {
        return false;
    }
    double v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    return ec == std::errc{} && ptr == t.data() + t.size();
}

namespace {

bool starts_with_year(std::string_view s) {
    return s.size() >= 4 && std::all_of(s.begin(), s.begin() + 4, [](char c) { return c >= '0' && c <= '9'; });
}

} // namespace

ColumnKind infer_column_kind(std::string_view name, const std::vector<Value>& values) {
    if (name == "ID") {
        return ColumnKind::key;
    }
    if (name == "Periods") {
        return ColumnKind::period_string;
    }
    bool any = false;
    bool all_numeric = true;
    bool all_year_prefixed = true;
    for (const auto& v : values) {
        if (!v) {
            continue;
        }
        any = true;
        all_numeric = all_numeric && parses_as_number(*v);
        all_year_prefixed = all_year_prefixed && starts_with_year(*v);
    }
    if (!any) {
        return ColumnKind::categorical;
    }
    if (all_year_prefixed && !all_numeric) {
        return ColumnKind::period_string;
    }
    return all_numeric ? ColumnKind::numeric : ColumnKind::categorical;
}

ODataClient::ODataClient(std::string base_url, std::shared_ptr<http::Transport> transport)
    : base_url_(std::move(base_url)), transport_(std::move(transport)) {
    while (!base_url_.empty() && base_url_.back() == '/') {
        base_url_.pop_back();
    }
}

std::string ODataClient::resource_url(const TableRef& ref, std::string_view resource) const {
    return fmt::format("{}/ODataApi/OData/{}/{}", base_url_, ref.id(), resource);
}

std::string ODataClient::typed_dataset_url(const TableRef& ref) const {
    return resource_url(ref, "TypedDataSet");
}

http::Response ODataClient::get_checked(const TableRef& ref, const std::string& url) {
    auto response = transport_->get(url, {{"Accept", "application/json"}});
    if (response.status == 404) {
        throw NotFoundError(fmt::format("table {} not found at {}", ref.id(), url));
    }
    if (response.status >= 500 || response.status == 429) {
        throw TransportError(fmt::format("HTTP {} from {}", response.status, url));
    }
    if (response.status != 200) {
        throw UsageError(fmt::format("HTTP {} from {}", response.status, url));
    }
    return response;
}

namespace {

ordered_json parse_envelope(const std::string& body) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(body);
    } catch (const nlohmann::json::parse_error&) {
        throw ParseError("response is not JSON", body.substr(0, 200));
    }
    if (!doc.is_object() || !doc.contains("value") || !doc["value"].is_array()) {
        throw ParseError("response lacks a \"value\" array", body.substr(0, 200));
    }
    return doc;
}

std::string string_field(const ordered_json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
        return {};
    }
    if (!it->is_string()) {
        throw ParseError(fmt::format("field {} is not a string", key), it->dump());
    }
    return util::trim(it->get<std::string>());
}

ColumnKind kind_from_property(const ordered_json& prop) {
    auto type = string_field(prop, "Type");
    auto key = string_field(prop, "Key");
    if (type == "TimeDimension") {
        return ColumnKind::period_string;
    }
    if (type == "Topic") {
        auto datatype = string_field(prop, "Datatype");
        if (datatype == "String" || datatype == "Char") {
            return ColumnKind::categorical;
        }
        return ColumnKind::numeric;
    }
    return infer_column_kind(key, {});
}

Value cell_value(const ordered_json& v) {
    if (v.is_null()) {
        return std::nullopt;
    }
    if (v.is_string()) {
        return v.get<std::string>();
    }
    if (v.is_number() || v.is_boolean()) {
        return v.dump();
    }
    throw ParseError("non-scalar cell value", v.dump().substr(0, 200));
}

} // namespace

TableMetadata ODataClient::fetch_metadata(const TableRef& ref) {
    auto infos = parse_envelope(get_checked(ref, resource_url(ref, "TableInfos")).body);
    if (infos["value"].empty()) {
        throw NotFoundError(fmt::format("table {} has no TableInfos entry", ref.id()));
    }
    const auto& info = infos["value"][0];
    if (!info.is_object()) {
        throw ParseError("TableInfos entry is not an object", info.dump().substr(0, 200));
    }

    TableMetadata meta{ref, string_field(info, "Title"), {}, {}, typed_dataset_url(ref)};
    meta.description = string_field(info, "ShortDescription");
    if (meta.description.empty()) {
        meta.description = string_field(info, "Summary");
    }
    if (meta.description.empty()) {
        meta.description = meta.title;
    }

    auto props = parse_envelope(get_checked(ref, resource_url(ref, "DataProperties")).body);
    meta.columns.push_back({"ID", ColumnKind::key, std::nullopt});
    for (const auto& prop : props["value"]) {
        if (!prop.is_object()) {
            throw ParseError("DataProperties entry is not an object", prop.dump().substr(0, 200));
        }
        auto type = string_field(prop, "Type");
        if (type == "TopicGroup") {
            continue;
        }
        auto key = string_field(prop, "Key");
        if (key.empty()) {
            throw ParseError("DataProperties entry without Key", prop.dump().substr(0, 200));
        }
        ColumnSpec col{key, kind_from_property(prop), std::nullopt};
        if (auto unit = string_field(prop, "Unit"); !unit.empty()) {
            col.unit = unit;
        }
        meta.columns.push_back(std::move(col));
    }
    try {
        meta.validate();
    } catch (const ValidationError& e) {
        throw ParseError("invalid metadata", e.what());
    }
    return meta;
}

DataTable ODataClient::fetch_table(const TableMetadata& meta, int page_size) {
    if (page_size <= 0) {
        throw PreconditionError(fmt::format("page_size must be positive, got {}", page_size));
    }
    DataTable table{meta.ref, meta.columns, {}};
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < meta.columns.size(); ++i) {
        index.emplace(meta.columns[i].name, i);
    }

    for (int page = 0;; ++page) {
        auto url = fmt::format("{}?$top={}&$skip={}", typed_dataset_url(meta.ref), page_size,
                               static_cast<long long>(page) * page_size);
        ordered_json doc;
        try {
            doc = parse_envelope(get_checked(meta.ref, url).body);
        } catch (const NotFoundError&) {
            if (page == 0) {
                throw;
            }
            throw PartialFetchError(fmt::format("table {}: page {} not found; last good page {}",
                                                meta.ref.id(), page, page - 1), page - 1);
        } catch (const Error& e) {
            throw PartialFetchError(fmt::format("table {}: page {} failed ({}); last good page {}",
                                                meta.ref.id(), page, e.what(), page - 1), page - 1);
        }
        const auto& rows = doc["value"];
        for (const auto& obj : rows) {
            if (!obj.is_object()) {
                throw ParseError("row is not an object", obj.dump().substr(0, 200));
            }
            Row row(table.columns.size());
            for (const auto& [key, value] : obj.items()) {
                auto it = index.find(key);
                if (it == index.end()) {
                    throw ParseError(fmt::format("row has column '{}' absent from metadata", key),
                                     obj.dump().substr(0, 200));
                }
                row[it->second] = cell_value(value);
            }
            table.rows.push_back(std::move(row));
        }
        if (static_cast<int>(rows.size()) < page_size) {
            break;
        }
    }

    for (std::size_t c = 0; c < table.columns.size(); ++c) {
        std::vector<Value> values;
        values.reserve(table.rows.size());
        for (const auto& row : table.rows) {
            values.push_back(row[c]);
        }
        if (!values.empty()) {
            table.columns[c].kind = infer_column_kind(table.columns[c].name, values);
        }
    }
    return table;
}

namespace {

ordered_json metadata_json(const TableMetadata& meta, const DataTable* table) {
    ordered_json j;
    j["id"] = meta.ref.id();
    j["title"] = meta.title;
    j["description"] = meta.description;
    j["source_url"] = meta.source_url;
    j["columns"] = ordered_json::array();
    const auto& columns = table ? table->columns : meta.columns;
    for (std::size_t c = 0; c < columns.size(); ++c) {
        ordered_json col;
        col["name"] = columns[c].name;
        col["kind"] = std::string(to_string(columns[c].kind));
        col["unit"] = columns[c].unit ? ordered_json(*columns[c].unit) : ordered_json(nullptr);
        if (table) {
            std::size_t nulls = 0;
            for (const auto& row : table->rows) {
                nulls += row[c] ? 0 : 1;
            }
            col["null_count"] = nulls;
        }
        j["columns"].push_back(std::move(col));
    }
    if (table) {
        j["row_count"] = table->rows.size();
    }
    return j;
}

} // namespace

StoredDataset materialize(const DataTable& table, const TableMetadata& meta, const fs::path& data_dir) {
    if (table.ref != meta.ref) {
        throw PreconditionError(fmt::format("table {} does not match metadata {}", table.ref.id(), meta.ref.id()));
    }
    if (!fs::is_directory(data_dir)) {
        throw IoError("data directory does not exist: " + data_dir.string());
    }
    table.check_arity();
    if (table.rows.empty()) {
        throw EmptyTableError("refusing to materialize empty table " + table.ref.id());
    }

    // Units come from the catalog; kinds come from the fetched values.
    DataTable stored = table;
    for (auto& col : stored.columns) {
        for (const auto& mc : meta.columns) {
            if (mc.name == col.name && !col.unit) {
                col.unit = mc.unit;
            }
        }
    }

    std::string csv;
    std::vector<util::Field> header;
    for (const auto& c : stored.columns) {
        header.emplace_back(c.name);
    }
    csv += util::csv_format_row(header);
    csv += '\n';
    for (const auto& row : stored.rows) {
        csv += util::csv_format_row(row);
        csv += '\n';
    }

    StoredDataset out{data_dir / (table.ref.id() + ".csv"), data_dir / (table.ref.id() + ".meta.json")};
    util::write_file_atomic(out.csv_path, csv);
    util::write_file_atomic(out.meta_path, metadata_json(meta, &stored).dump(2) + "\n");
    return out;
}

TableMetadata load_metadata(const fs::path& meta_path) {
    auto text = util::read_file(meta_path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
        TableMetadata meta{TableRef(j.at("id").get<std::string>()), j.at("title").get<std::string>(),
                           j.at("description").get<std::string>(), {}, j.value("source_url", std::string())};
        for (const auto& col : j.at("columns")) {
            ColumnSpec spec{col.at("name").get<std::string>(),
                            column_kind_from_string(col.at("kind").get<std::string>()), std::nullopt};
            if (col.contains("unit") && col["unit"].is_string()) {
                spec.unit = col["unit"].get<std::string>();
            }
            meta.columns.push_back(std::move(spec));
        }
        meta.validate();
        return meta;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("bad metadata sidecar " + meta_path.string(), e.what());
    }
}

LoadedDataset load_dataset(const fs::path& data_dir, const TableRef& ref) {
    auto meta_path = data_dir / (ref.id() + ".meta.json");
    auto csv_path = data_dir / (ref.id() + ".csv");
    if (!fs::exists(meta_path) || !fs::exists(csv_path)) {
        throw NotFoundError(fmt::format("dataset {} is not materialized in {}", ref.id(), data_dir.string()));
    }
    auto meta = load_metadata(meta_path);
    auto rows = util::csv_parse(util::read_file(csv_path));
    if (rows.empty()) {
        throw ParseError("CSV has no header", csv_path.string());
    }
    const auto& header = rows.front();
    if (header.size() != meta.columns.size()) {
        throw ParseError("CSV header does not match sidecar columns", csv_path.string());
    }
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (!header[i] || *header[i] != meta.columns[i].name) {
            throw ParseError("CSV header does not match sidecar columns", header[i].value_or("<null>"));
        }
    }
    DataTable table{ref, meta.columns, {}};
    table.rows.assign(std::make_move_iterator(rows.begin() + 1), std::make_move_iterator(rows.end()));
    table.check_arity();
    return {std::move(meta), std::move(table)};
}

std::vector<TableMetadata> list_materialized(const fs::path& data_dir) {
    std::vector<TableMetadata> out;
    if (!fs::is_directory(data_dir)) {
        throw NotFoundError("data directory does not exist: " + data_dir.string());
    }
    for (const auto& entry : fs::directory_iterator(data_dir)) {
        auto name = entry.path().filename().string();
        constexpr std::string_view suffix = ".meta.json";
        if (name.size() > suffix.size() && name.ends_with(suffix)) {
            out.push_back(load_metadata(entry.path()));
        }
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.ref < b.ref; });
    return out;
}

const Row& sample_row(const DataTable& table) {
    if (table.rows.empty()) {
        throw EmptyTableError("table " + table.ref.id() + " has no rows to sample");
    }
    return table.rows.front();
}

} // namespace statviz::catalog
