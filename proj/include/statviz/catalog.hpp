#pragma once

#include "statviz/error.hpp"
#include "statviz/http.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace statviz::catalog {

// Catalog identifier such as "85332ENG". Always non-empty and alphanumeric.
class TableRef {
public:
    explicit TableRef(std::string id);

    const std::string& id() const noexcept { return id_; }
    static bool is_well_formed(std::string_view id);

    auto operator<=>(const TableRef&) const = default;

private:
    std::string id_;
};

enum class ColumnKind { categorical, numeric, period_string, key };

std::string_view to_string(ColumnKind kind);
ColumnKind column_kind_from_string(std::string_view s);

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::categorical;
    std::optional<std::string> unit;

    bool operator==(const ColumnSpec&) const = default;
};

struct TableMetadata {
    TableRef ref;
    std::string title;
    std::string description;
    std::vector<ColumnSpec> columns;
    std::string source_url;

    // Text indexed for retrieval: title and description joined.
    std::string retrieval_text() const;
    void validate() const;

    bool operator==(const TableMetadata&) const = default;
};

using Value = std::optional<std::string>;  // nullopt is a null cell
using Row = std::vector<Value>;

struct DataTable {
    TableRef ref;
    std::vector<ColumnSpec> columns;
    std::vector<Row> rows;

    std::size_t column_index(std::string_view name) const;
    // Throws ValidationError if any row's arity differs from the column count.
    void check_arity() const;

    bool operator==(const DataTable&) const = default;
};

struct StoredDataset {
    std::filesystem::path csv_path;
    std::filesystem::path meta_path;
};

// Assigns kinds from column names and cell values: "ID" is the key column,
// "Periods" or values that all start with four digits (and are not all
// numbers) are period strings, columns whose non-null values all parse as
// numbers are numeric, everything else is categorical.
ColumnKind infer_column_kind(std::string_view name, const std::vector<Value>& values);
bool parses_as_number(std::string_view s);

// Client for the statistics OData v3 feed. Responses go through the given
// transport; wrap it in a CachingTransport to get the on-disk cache.
class ODataClient {
public:
    ODataClient(std::string base_url, std::shared_ptr<http::Transport> transport);

    TableMetadata fetch_metadata(const TableRef& ref);
    DataTable fetch_table(const TableMetadata& meta, int page_size);

    std::string typed_dataset_url(const TableRef& ref) const;
    const std::string& base_url() const noexcept { return base_url_; }

private:
    std::string resource_url(const TableRef& ref, std::string_view resource) const;
    http::Response get_checked(const TableRef& ref, const std::string& url);

    std::string base_url_;
    std::shared_ptr<http::Transport> transport_;
};

// Raised when paging fails part-way. last_good_page is 0-based; -1 means
// not even the first page arrived.
class PartialFetchError : public Error {
public:
    PartialFetchError(const std::string& what, int last_good_page)
        : Error(what), last_good_page_(last_good_page) {}
    int last_good_page() const noexcept { return last_good_page_; }

private:
    int last_good_page_;
};

class EmptyTableError : public UsageError {
public:
    using UsageError::UsageError;
};

// Writes <id>.csv and <id>.meta.json under data_dir. Each file is replaced
// atomically; nothing is written if data_dir is missing or a row is malformed.
StoredDataset materialize(const DataTable& table, const TableMetadata& meta,
                          const std::filesystem::path& data_dir);

struct LoadedDataset {
    TableMetadata meta;
    DataTable table;
};
LoadedDataset load_dataset(const std::filesystem::path& data_dir, const TableRef& ref);
TableMetadata load_metadata(const std::filesystem::path& meta_path);
// Every <id>.meta.json in data_dir, sorted by id.
std::vector<TableMetadata> list_materialized(const std::filesystem::path& data_dir);

const Row& sample_row(const DataTable& table);

} // namespace statviz::catalog
