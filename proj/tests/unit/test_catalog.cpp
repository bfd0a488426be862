#include <gtest/gtest.h>

#include "statviz/catalog.hpp"
#include "statviz/util.hpp"
#include "support.hpp"

#include <httplib.h>
#include <fmt/format.h>
#include <json.hpp>

#include <thread>

using namespace statviz;
using namespace statviz::catalog;
using statviz::testing::FixtureTransport;
using statviz::testing::TempDir;

namespace {

ODataClient fixture_client(std::shared_ptr<FixtureTransport> t = std::make_shared<FixtureTransport>()) {
    return ODataClient("https://opendata.cbs.nl", std::move(t));
}

DataTable two_by_two() {
    return DataTable{TableRef("T1"),
                     {{"Name", ColumnKind::categorical, std::nullopt}, {"Value", ColumnKind::numeric, std::nullopt}},
                     {{Value{"a"}, Value{"1"}}, {Value{"b"}, Value{"2"}}}};
}

TableMetadata meta_for(const DataTable& t) {
    return TableMetadata{t.ref, "Test table", "A small table.", t.columns, "https://example.test/T1"};
}

} // namespace

TEST(TableRefTest, AcceptsAlphanumericIds) {
    EXPECT_EQ(TableRef("85332ENG").id(), "85332ENG");
    EXPECT_THROW(TableRef(""), PreconditionError);
    EXPECT_THROW(TableRef("../etc"), PreconditionError);
    EXPECT_THROW(TableRef("85332 ENG"), PreconditionError);
    EXPECT_THROW(TableRef(std::string(65, 'A')), PreconditionError);
}

TEST(FetchMetadata, SourceUrlPointsAtTypedDataSet) {
    auto meta = fixture_client().fetch_metadata(TableRef("85332ENG"));
    EXPECT_EQ(meta.source_url, "https://opendata.cbs.nl/ODataApi/OData/85332ENG/TypedDataSet");
    EXPECT_EQ(meta.title, "Manufacturing industry; daily turnover index, seasonally adjusted");
    EXPECT_FALSE(meta.description.empty());
    EXPECT_EQ(meta.retrieval_text(), meta.title + ". " + meta.description);
}

TEST(FetchMetadata, ColumnsFollowDataPropertiesAndSkipGroups) {
    auto meta = fixture_client().fetch_metadata(TableRef("7425ENG"));
    std::vector<std::string> names;
    for (const auto& c : meta.columns) {
        names.push_back(c.name);
    }
    EXPECT_EQ(names, (std::vector<std::string>{"ID", "Periods", "RawCowSMilkDeliveredByDairyFarmers_1",
                                               "CheeseProduction_2", "ButterProduction_3", "SkimmedMilkPowder_4"}));
    EXPECT_EQ(meta.columns[0].kind, ColumnKind::key);
    EXPECT_EQ(meta.columns[1].kind, ColumnKind::period_string);
    EXPECT_EQ(meta.columns[3].kind, ColumnKind::numeric);
    EXPECT_EQ(meta.columns[3].unit, std::optional<std::string>("mln kg"));
}

TEST(FetchMetadata, FallsBackToTitleWhenNoDescription) {
    auto meta = fixture_client().fetch_metadata(TableRef("83131ENG"));
    EXPECT_EQ(meta.description, "Consumer price index (CPI) and annual inflation by expenditure category.");
}

TEST(FetchMetadata, UnknownTableIsNotFound) {
    EXPECT_THROW(fixture_client().fetch_metadata(TableRef("NOPE999")), NotFoundError);
}

TEST(FetchMetadata, ServerErrorIsTransportError) {
    auto t = std::make_shared<FixtureTransport>();
    t->fail_when("TableInfos", 503);
    EXPECT_THROW(fixture_client(t).fetch_metadata(TableRef("7425ENG")), TransportError);
}

TEST(FetchTable, ThreePagesOfHundredRows) {
    auto t = std::make_shared<FixtureTransport>();
    auto client = fixture_client(t);
    auto meta = client.fetch_metadata(TableRef("7425ENG"));
    auto before = t->gets();
    auto table = client.fetch_table(meta, 100);
    EXPECT_EQ(table.rows.size(), 300u);
    // Three full pages and the empty page that ends paging.
    EXPECT_EQ(t->gets() - before, 4);
    EXPECT_EQ(table.rows.front()[1], Value{"2000MM01"});
    EXPECT_EQ(table.rows.back()[1], Value{"2024MM12"});
}

TEST(FetchTable, ShortLastPageStopsPaging) {
    auto t = std::make_shared<FixtureTransport>();
    auto client = fixture_client(t);
    auto meta = client.fetch_metadata(TableRef("7425ENG"));
    auto before = t->gets();
    EXPECT_EQ(client.fetch_table(meta, 128).rows.size(), 300u);
    EXPECT_EQ(t->gets() - before, 3);
}

TEST(FetchTable, EmptySourceGivesEmptyTable) {
    auto client = fixture_client();
    auto meta = client.fetch_metadata(TableRef("99999ENG"));
    auto table = client.fetch_table(meta, 100);
    EXPECT_TRUE(table.rows.empty());
    TempDir tmp;
    EXPECT_THROW(materialize(table, meta, tmp.path()), EmptyTableError);
    EXPECT_FALSE(std::filesystem::exists(tmp / "99999ENG.csv"));
}

TEST(FetchTable, NonPositivePageSizeIsPrecondition) {
    auto client = fixture_client();
    auto meta = client.fetch_metadata(TableRef("7425ENG"));
    EXPECT_THROW(client.fetch_table(meta, 0), PreconditionError);
    EXPECT_THROW(client.fetch_table(meta, -5), PreconditionError);
}

TEST(FetchTable, MidPaginationFailureNamesLastGoodPage) {
    auto t = std::make_shared<FixtureTransport>();
    auto client = fixture_client(t);
    auto meta = client.fetch_metadata(TableRef("7425ENG"));
    t->fail_when("$skip=200", 500);
    try {
        client.fetch_table(meta, 100);
        FAIL() << "expected PartialFetchError";
    } catch (const PartialFetchError& e) {
        EXPECT_EQ(e.last_good_page(), 1);
        EXPECT_NE(std::string(e.what()).find("last good page 1"), std::string::npos);
    }
}

TEST(FetchTable, FirstPageFailureHasNoGoodPage) {
    auto t = std::make_shared<FixtureTransport>();
    auto client = fixture_client(t);
    auto meta = client.fetch_metadata(TableRef("7425ENG"));
    t->fail_when("$skip=0", 502);
    try {
        client.fetch_table(meta, 100);
        FAIL() << "expected PartialFetchError";
    } catch (const PartialFetchError& e) {
        EXPECT_EQ(e.last_good_page(), -1);
    }
}

TEST(FetchTable, InfersKindsFromValues) {
    auto client = fixture_client();
    auto meta = client.fetch_metadata(TableRef("85332ENG"));
    auto table = client.fetch_table(meta, 1000);
    EXPECT_EQ(table.columns[table.column_index("SectorBranchesSIC2008")].kind, ColumnKind::categorical);
    EXPECT_EQ(table.columns[table.column_index("Periods")].kind, ColumnKind::period_string);
    EXPECT_EQ(table.columns[table.column_index("DailyTurnoverSeasonallyAdjusted_1")].kind, ColumnKind::numeric);
    EXPECT_EQ(table.rows.size(), 3u * 3u * 48u);
}

TEST(InferKind, Rules) {
    EXPECT_EQ(infer_column_kind("ID", {Value{"0"}}), ColumnKind::key);
    EXPECT_EQ(infer_column_kind("Periods", {Value{"x"}}), ColumnKind::period_string);
    EXPECT_EQ(infer_column_kind("P", {Value{"2010MM01"}, Value{"2011JJ00"}}), ColumnKind::period_string);
    EXPECT_EQ(infer_column_kind("Year", {Value{"2010"}, Value{"2011"}}), ColumnKind::numeric);
    EXPECT_EQ(infer_column_kind("V", {Value{"1.5"}, std::nullopt, Value{"-3e2"}}), ColumnKind::numeric);
    EXPECT_EQ(infer_column_kind("V", {Value{"1.5"}, Value{"n/a"}}), ColumnKind::categorical);
    EXPECT_EQ(infer_column_kind("V", {std::nullopt}), ColumnKind::categorical);
    EXPECT_EQ(infer_column_kind("V", {}), ColumnKind::categorical);
}

TEST(Materialize, TwoByTwoWritesHeaderAndRows) {
    TempDir tmp;
    auto t = two_by_two();
    auto stored = materialize(t, meta_for(t), tmp.path());
    EXPECT_EQ(stored.csv_path, tmp / "T1.csv");
    EXPECT_EQ(stored.meta_path, tmp / "T1.meta.json");
    EXPECT_EQ(util::read_file(stored.csv_path), "Name,Value\na,1\nb,2\n");
}

TEST(Materialize, NamingFollowsRef) {
    TempDir tmp;
    auto client = fixture_client();
    auto meta = client.fetch_metadata(TableRef("85332ENG"));
    materialize(client.fetch_table(meta, 500), meta, tmp.path());
    EXPECT_TRUE(std::filesystem::exists(tmp / "85332ENG.csv"));
    EXPECT_TRUE(std::filesystem::exists(tmp / "85332ENG.meta.json"));
}

TEST(Materialize, MissingDirectoryLeavesNothing) {
    TempDir tmp;
    auto t = two_by_two();
    EXPECT_THROW(materialize(t, meta_for(t), tmp / "missing"), IoError);
    EXPECT_FALSE(std::filesystem::exists(tmp / "missing"));
}

TEST(Materialize, ArityMismatchRejectedBeforeWriting) {
    TempDir tmp;
    auto t = two_by_two();
    t.rows.push_back({Value{"c"}});
    EXPECT_THROW(materialize(t, meta_for(t), tmp.path()), ValidationError);
    EXPECT_FALSE(std::filesystem::exists(tmp / "T1.csv"));
}

TEST(Materialize, RoundTripPreservesTable) {
    TempDir tmp;
    auto client = fixture_client();
    for (const auto& id : statviz::testing::fixture_table_ids()) {
        auto meta = client.fetch_metadata(TableRef(id));
        auto table = client.fetch_table(meta, 250);
        materialize(table, meta, tmp.path());
        auto loaded = load_dataset(tmp.path(), TableRef(id));
        EXPECT_EQ(loaded.table, table) << id;
        EXPECT_EQ(loaded.meta.title, meta.title);
    }
}

TEST(Materialize, SidecarRecordsNullCounts) {
    TempDir tmp;
    auto client = fixture_client();
    auto meta = client.fetch_metadata(TableRef("7425ENG"));
    auto table = client.fetch_table(meta, 1000);
    materialize(table, meta, tmp.path());
    auto sidecar = nlohmann::json::parse(util::read_file(tmp / "7425ENG.meta.json"));
    std::size_t expected = 0;
    auto idx = table.column_index("SkimmedMilkPowder_4");
    for (const auto& r : table.rows) {
        expected += r[idx] ? 0 : 1;
    }
    ASSERT_GT(expected, 0u);
    EXPECT_EQ(sidecar["columns"][idx]["null_count"], expected);
    EXPECT_EQ(sidecar["row_count"], 300);
}

TEST(Materialize, RefetchIsByteIdentical) {
    TempDir a, b;
    statviz::testing::materialize_fixture_catalog(a.path());
    statviz::testing::materialize_fixture_catalog(b.path());
    for (const auto& id : statviz::testing::fixture_table_ids()) {
        EXPECT_EQ(util::read_file(a / (id + ".csv")), util::read_file(b / (id + ".csv")));
        EXPECT_EQ(util::read_file(a / (id + ".meta.json")), util::read_file(b / (id + ".meta.json")));
    }
    // Rewriting in place is an idempotent overwrite.
    auto before = util::read_file(a / "7425ENG.csv");
    statviz::testing::materialize_fixture_catalog(a.path());
    EXPECT_EQ(util::read_file(a / "7425ENG.csv"), before);
}

TEST(Materialize, CsvLinesMatchRowCountAndArity) {
    TempDir tmp;
    statviz::testing::materialize_fixture_catalog(tmp.path());
    for (const auto& id : statviz::testing::fixture_table_ids()) {
        auto loaded = load_dataset(tmp.path(), TableRef(id));
        auto parsed = util::csv_parse(util::read_file(tmp / (id + ".csv")));
        EXPECT_EQ(parsed.size(), loaded.table.rows.size() + 1) << id;
        for (const auto& row : parsed) {
            EXPECT_EQ(row.size(), loaded.meta.columns.size()) << id;
        }
    }
}

TEST(Listing, SortedByRef) {
    TempDir tmp;
    statviz::testing::materialize_fixture_catalog(tmp.path());
    auto listed = list_materialized(tmp.path());
    ASSERT_EQ(listed.size(), 7u);
    for (std::size_t i = 0; i < listed.size(); ++i) {
        EXPECT_EQ(listed[i].ref.id(), statviz::testing::fixture_table_ids()[i]);
    }
    EXPECT_THROW(load_dataset(tmp.path(), TableRef("NOPE999")), NotFoundError);
}

TEST(SampleRow, FirstRowOrError) {
    auto t = two_by_two();
    EXPECT_EQ(sample_row(t), (Row{Value{"a"}, Value{"1"}}));
    t.rows.erase(t.rows.begin());
    EXPECT_EQ(sample_row(t), (Row{Value{"b"}, Value{"2"}}));
    t.rows.clear();
    EXPECT_THROW(sample_row(t), EmptyTableError);
}

TEST(Caching, SecondFetchServedFromDisk) {
    TempDir tmp;
    auto fixture = std::make_shared<FixtureTransport>();
    auto cached = std::make_shared<http::CachingTransport>(fixture, tmp.path());
    ODataClient client("https://opendata.cbs.nl", cached);
    auto first = client.fetch_table(client.fetch_metadata(TableRef("80001ENG")), 10);
    auto gets = fixture->gets();
    auto second = client.fetch_table(client.fetch_metadata(TableRef("80001ENG")), 10);
    EXPECT_EQ(fixture->gets(), gets);
    EXPECT_EQ(first, second);
}

TEST(Caching, ErrorsAreNotCached) {
    TempDir tmp;
    auto fixture = std::make_shared<FixtureTransport>();
    auto cached = std::make_shared<http::CachingTransport>(fixture, tmp.path());
    ODataClient client("https://opendata.cbs.nl", cached);
    EXPECT_THROW(client.fetch_metadata(TableRef("NOPE999")), NotFoundError);
    EXPECT_THROW(client.fetch_metadata(TableRef("NOPE999")), NotFoundError);
    EXPECT_EQ(fixture->gets(), 2);
}

TEST(NetworkTransportTest, LocalServer404IsNotFound) {
    httplib::Server server;
    server.Get(R"(/ODataApi/OData/([A-Za-z0-9]+)/TableInfos)", [](const httplib::Request& req, httplib::Response& res) {
        if (req.matches[1] == "GOOD1") {
            res.set_content(R"({"value":[{"Title":"Good","ShortDescription":"A good table."}]})", "application/json");
        } else {
            res.status = 404;
            res.set_content(R"({"odata.error":{}})", "application/json");
        }
    });
    server.Get(R"(/ODataApi/OData/GOOD1/DataProperties)", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"value":[{"Type":"TimeDimension","Key":"Periods"}]})", "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port, 0);
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ODataClient client(fmt::format("http://127.0.0.1:{}", port),
                       std::make_shared<http::NetworkTransport>(std::chrono::seconds(5)));
    EXPECT_THROW(client.fetch_metadata(TableRef("NOPE999")), NotFoundError);
    auto meta = client.fetch_metadata(TableRef("GOOD1"));
    EXPECT_EQ(meta.description, "A good table.");
    ASSERT_EQ(meta.columns.size(), 2u);
    server.stop();
    th.join();
}

TEST(NetworkTransportTest, UnreachableHostIsTransportError) {
    http::NetworkTransport t(std::chrono::seconds(1));
    EXPECT_THROW(t.get("http://127.0.0.1:1/x"), TransportError);
}
