#include <gtest/gtest.h>

#include "statviz/agent.hpp"
#include "statviz/util.hpp"
#include "support.hpp"

#include <json.hpp>

#include <random>
#include <regex>

using namespace statviz;
using namespace statviz::agent;
using nlohmann::json;
using statviz::testing::TempDir;
using statviz::testing::call;
using llm::ModelTurn;

namespace {

const std::string kPlotCode =
    "import pandas as pd\nimport matplotlib.pyplot as plt\n"
    "df = pd.read_csv('data/7425ENG.csv')\nplt.plot(df['Periods'], df['CheeseProduction_2'])\n"
    "plt.savefig('output/plot.png')\n";

std::string fenced(const std::string& code) {
    return "Here is the code:\n```python\n" + code + "```\nDone.";
}

// A workspace with the fixture catalog materialized and indexed.
struct Bench {
    TempDir dir;
    retrieval::HashingEmbeddingProvider embedder{128};
    retrieval::RetrievalIndex index{"none", 1, {}};
    sandbox::StubExecutor executor;

    Bench() {
        statviz::testing::materialize_fixture_catalog(dir / "data");
        index = retrieval::build_index(catalog::list_materialized(dir / "data"), embedder);
    }

    AgentConfig config(Mode mode, int max_iters = 25) const {
        AgentConfig c;
        c.mode = mode;
        c.max_iters = max_iters;
        c.workspace = dir.path();
        c.model_config = "mock";
        return c;
    }

    RunDeps deps(std::shared_ptr<llm::ChatProvider> chat) {
        RunDeps d;
        d.index = &index;
        d.embedder = &embedder;
        d.chat = std::move(chat);
        d.executor = &executor;
        d.gateway.sleep = [](std::chrono::milliseconds) {};
        return d;
    }
};

TaskSpec cheese() {
    return {"e01", "Plot the volume of cheese production in the Netherlands", Difficulty::easy,
            catalog::TableRef("7425ENG")};
}

struct GuardBench {
    TempDir dir;
    PathGuard guard;

    static PathGuard make(const TempDir& d) {
        namespace fs = std::filesystem;
        fs::create_directories(d / "data" / "sub");
        fs::create_directories(d / "output" / "r1");
        fs::create_directories(d / "secret");
        util::write_file_atomic(d / "data" / "a.csv", "x\n");
        util::write_file_atomic(d / "secret" / "key.txt", "k\n");
        fs::create_directory_symlink("../secret", d / "data" / "escape");
        fs::create_directory_symlink("../output/r1", d / "data" / "inner");
        fs::create_symlink("../secret/key.txt", d / "data" / "key_link");
        fs::create_directory_symlink("/etc", d / "output" / "r1" / "etc");
        fs::create_symlink("loop_b", d / "data" / "loop_a");
        fs::create_symlink("loop_a", d / "data" / "loop_b");
        return PathGuard({d / "data", d / "output" / "r1"}, d.path());
    }

    GuardBench() : guard(make(dir)) {}
};

} // namespace

// --- tasks -------------------------------------------------------------------

TEST(Tasks, ParsesSuiteFile) {
    auto tasks = load_tasks(statviz::testing::source_dir() / "tasks" / "suite.tsv");
    ASSERT_EQ(tasks.size(), 25u);
    std::map<Difficulty, int> counts;
    for (const auto& t : tasks) {
        ++counts[t.difficulty];
        EXPECT_TRUE(t.gold_table) << t.id;
    }
    EXPECT_EQ(counts[Difficulty::easy], 7);
    EXPECT_EQ(counts[Difficulty::medium], 11);
    EXPECT_EQ(counts[Difficulty::hard], 7);
    EXPECT_EQ(tasks[0].prompt, "Plot the volume of cheese production in the Netherlands");
}

TEST(Tasks, ParseRules) {
    auto tasks = parse_tasks("# c\nid\tdifficulty\tgold_table\tprompt\nt1\tmedium\t\tDo a thing\n");
    ASSERT_EQ(tasks.size(), 1u);
    EXPECT_FALSE(tasks[0].gold_table);
    EXPECT_EQ(tasks[0].difficulty, Difficulty::medium);
    EXPECT_THROW(parse_tasks("t1\tmedium\tX\n"), ValidationError);
    EXPECT_THROW(parse_tasks("t1\tsevere\t\tp\n"), ValidationError);
    EXPECT_THROW(parse_tasks("t1\teasy\t\tp\nt1\teasy\t\tq\n"), ValidationError);
    EXPECT_THROW(parse_tasks("../x\teasy\t\tp\n"), ValidationError);
}

TEST(Tasks, JsonRoundTrip) {
    json j = cheese();
    EXPECT_EQ(j.get<TaskSpec>(), cheese());
}

// --- path guard ---------------------------------------------------------------

TEST(PathGuard, Examples) {
    GuardBench b;
    auto allowed = [&](const char* p) { return b.guard.check(p).allowed; };
    EXPECT_TRUE(allowed("data/"));
    EXPECT_TRUE(allowed("data/a.csv"));
    EXPECT_TRUE(allowed("data/new_file.csv"));
    EXPECT_TRUE(allowed("output/r1/plot.png"));
    EXPECT_TRUE(allowed("data/inner/plot.png"));
    EXPECT_TRUE(allowed("data/sub/../a.csv"));
    EXPECT_TRUE(allowed((b.dir / "data" / "a.csv").c_str()));
    EXPECT_FALSE(allowed(""));
    EXPECT_FALSE(allowed("."));
    EXPECT_FALSE(allowed("secret/key.txt"));
    EXPECT_FALSE(allowed("data/../secret/key.txt"));
    EXPECT_FALSE(allowed("data/escape/key.txt"));
    EXPECT_FALSE(allowed("data/key_link"));
    EXPECT_FALSE(allowed("output/r1/etc/passwd"));
    EXPECT_FALSE(allowed("output/r2/plot.png"));
    EXPECT_FALSE(allowed("data/missing/dir/file"));
    EXPECT_FALSE(allowed("data/loop_a"));
    EXPECT_FALSE(allowed("/etc/passwd"));
    EXPECT_FALSE(allowed("data/a.csv/../../secret"));
    EXPECT_EQ(b.guard.check("secret/key.txt").reason, "outside the allowed directories");
}

TEST(PathGuard, IsWithinComparesComponents) {
    EXPECT_TRUE(is_within("/a/b/c", "/a/b"));
    EXPECT_TRUE(is_within("/a/b", "/a/b"));
    EXPECT_FALSE(is_within("/a/bc", "/a/b"));
    EXPECT_FALSE(is_within("/a", "/a/b"));
}

// Random paths built from hostile components. A path the guard allows must
// resolve inside a root, and for paths that exist the verdict must match the
// operating system's own resolution.
TEST(PathGuard, AdversarialPathsNeverEscape) {
    GuardBench b;
    namespace fs = std::filesystem;
    const std::vector<std::string> parts{"data", "output", "r1", "secret", "..", ".", "escape", "inner",
                                         "key_link", "etc", "a.csv", "sub", "loop_a", "passwd", "key.txt", ""};
    std::vector<fs::path> roots{b.dir / "data", b.dir / "output" / "r1"};
    std::mt19937 rng(20251018);
    int existing = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::string p = trial % 10 == 0 ? b.dir.path().string() : "";
        int n = 1 + static_cast<int>(rng() % 6);
        for (int i = 0; i < n; ++i) {
            if (!p.empty()) {
                p += "/";
            }
            p += parts[rng() % parts.size()];
        }
        if (p.empty()) {
            continue;
        }
        auto verdict = b.guard.check(p);
        fs::path full = fs::path(p).is_absolute() ? fs::path(p) : b.dir / p;
        std::error_code ec;
        auto oracle = fs::weakly_canonical(full, ec);
        auto inside = [&](const fs::path& q) {
            return std::any_of(roots.begin(), roots.end(), [&](const fs::path& r) { return is_within(q, r); });
        };
        if (verdict.allowed) {
            ASSERT_FALSE(ec) << p;
            EXPECT_TRUE(inside(oracle)) << p;
            EXPECT_EQ(verdict.resolved, oracle.has_filename() ? oracle : oracle.parent_path()) << p;
        }
        if (fs::exists(full, ec)) {
            ++existing;
            EXPECT_EQ(verdict.allowed, inside(fs::canonical(full))) << p;
        }
    }
    EXPECT_GT(existing, 50);
}

// --- tools --------------------------------------------------------------------

struct ToolBench {
    Bench bench;
    std::filesystem::path run_dir;
    PathGuard guard;
    std::vector<std::filesystem::path> code_files;
    ToolContext ctx;

    ToolBench()
        : run_dir(bench.dir / "output" / "r1"),
          guard((std::filesystem::create_directories(bench.dir / "output" / "r1"),
                 std::vector<std::filesystem::path>{bench.dir / "data", bench.dir / "output" / "r1"}),
                bench.dir.path()) {
        util::write_file_atomic(bench.dir / "secret.txt", "hunter2\n");
        ctx.guard = &guard;
        ctx.executor = &bench.executor;
        ctx.workspace = bench.dir.path();
        ctx.run_dir = run_dir;
        ctx.target_plot = run_dir / "plot.png";
        ctx.feedback_file = run_dir / "feedback.txt";
        ctx.dataset_csv = bench.dir / "data" / "7425ENG.csv";
        ctx.code_iterations = &code_files;
    }

    ToolResult run(const llm::ToolCall& c) { return dispatch_tool(c, ctx); }
};

TEST(Tools, SpecsAreWellFormed) {
    const auto& specs = tool_specs();
    ASSERT_EQ(specs.size(), 5u);
    EXPECT_FALSE(llm::check_tool_specs(specs));
    std::vector<std::string> names;
    for (const auto& s : specs) {
        names.push_back(s.name);
    }
    EXPECT_EQ(names, (std::vector<std::string>{"list_files", "read_file_head", "execute_python_code",
                                               "read_visualization_image", "get_human_feedback"}));
}

TEST(Tools, ListFiles) {
    ToolBench t;
    auto r = t.run(call("1", "list_files", {{"directory", "data/"}}));
    ASSERT_EQ(r.status, ToolStatus::ok);
    ASSERT_EQ(r.payload.size(), 14u);
    EXPECT_EQ(r.payload[0], "37325ENG.csv");
    EXPECT_EQ(r.payload, t.run(call("2", "list_files")).payload);
    auto outside = t.run(call("3", "list_files", {{"directory", "."}}));
    EXPECT_EQ(outside.status, ToolStatus::denied);
    EXPECT_EQ(outside.denied_path, ".");
    EXPECT_TRUE(outside.observation().starts_with("DENIED: "));
    EXPECT_EQ(t.run(call("4", "list_files", {{"directory", "data/7425ENG.csv"}})).status, ToolStatus::error);
}

TEST(Tools, ReadFileHead) {
    ToolBench t;
    auto r = t.run(call("1", "read_file_head", {{"path", "data/85332ENG.csv"}, {"n_lines", 3}}));
    ASSERT_EQ(r.status, ToolStatus::ok);
    auto lines = util::split_lines(r.payload.get<std::string>());
    ASSERT_GE(lines.size(), 3u);
    EXPECT_TRUE(lines[0].starts_with("ID,SectorBranchesSIC2008,Markets,Periods"));
    auto text = r.payload.get<std::string>();
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
    EXPECT_EQ(t.run(call("2", "read_file_head", {{"path", "secret.txt"}})).status, ToolStatus::denied);
    EXPECT_EQ(t.run(call("3", "read_file_head", {{"path", "data/../secret.txt"}})).status, ToolStatus::denied);
    EXPECT_EQ(t.run(call("4", "read_file_head", {{"path", "data/none.csv"}})).status, ToolStatus::error);
    EXPECT_EQ(t.run(call("5", "read_file_head", {{"path", "data/7425ENG.csv"}, {"n_lines", 0}})).status,
              ToolStatus::error);
    auto bad = t.run(call("6", "read_file_head", {{"path", "data/7425ENG.csv"}, {"n_lines", "3"}}));
    EXPECT_EQ(bad.status, ToolStatus::error);
    EXPECT_TRUE(bad.observation().starts_with("ERROR: "));
    EXPECT_EQ(t.run(call("7", "read_file_head")).status, ToolStatus::error);
}

TEST(Tools, ExecuteSavesEachIteration) {
    ToolBench t;
    auto r = t.run(call("1", "execute_python_code", {{"code", kPlotCode}}));
    EXPECT_EQ(r.status, ToolStatus::ok);
    EXPECT_EQ(r.payload["code_file"], "output/r1/code_iter_1.py");
    EXPECT_EQ(r.payload["exit_status"], "ok");
    auto r2 = t.run(call("2", "execute_python_code", {{"code", "raise ValueError('x')"}}));
    EXPECT_EQ(r2.status, ToolStatus::error);
    ASSERT_EQ(t.code_files.size(), 2u);
    EXPECT_EQ(util::read_file(t.run_dir / "code_iter_2.py"), "raise ValueError('x')");
    EXPECT_EQ(t.bench.executor.executions(), 2u);
}

TEST(Tools, ReadImage) {
    ToolBench t;
    EXPECT_EQ(t.run(call("1", "read_visualization_image")).status, ToolStatus::error);
    sandbox::write_placeholder_png(t.run_dir / "plot.png");
    auto r = t.run(call("2", "read_visualization_image"));
    ASSERT_EQ(r.status, ToolStatus::ok);
    EXPECT_EQ(r.payload["width"], 160);
    EXPECT_FALSE(r.image);
    t.ctx.send_images = true;
    auto with = t.run(call("3", "read_visualization_image", {{"path", "output/r1/plot.png"}}));
    ASSERT_TRUE(with.image);
    EXPECT_EQ(with.image->base64, util::base64_encode(util::read_file(t.run_dir / "plot.png")));
}

TEST(Tools, HumanFeedbackIsLogged) {
    ToolBench t;
    auto r = t.run(call("h1", "get_human_feedback", {{"request", "Is the axis right?"}}));
    EXPECT_EQ(r.status, ToolStatus::ok);
    EXPECT_EQ(util::read_file(t.run_dir / "feedback.txt"), "[h1] Is the axis right?\n");
}

TEST(Tools, UnknownToolAndResultJson) {
    ToolBench t;
    auto r = t.run(call("1", "rm_rf"));
    EXPECT_EQ(r.status, ToolStatus::error);
    json j = r;
    EXPECT_EQ(j.get<ToolResult>(), r);
}

// --- runs ---------------------------------------------------------------------

TEST(CodeBlock, Extraction) {
    EXPECT_EQ(extract_code_block("```python\nprint(1)\n```"), "print(1)\n");
    EXPECT_EQ(extract_code_block("x\n```\na\n```\n```\nb\n```"), "a\n");
    EXPECT_FALSE(extract_code_block("no code here"));
    EXPECT_FALSE(extract_code_block("```python\nunterminated"));
    EXPECT_FALSE(extract_code_block("```python\n```"));
}

TEST(RunId, Deterministic) {
    EXPECT_EQ(make_run_id("o1-High", Mode::agentic, "e01"), "o1-high-agentic-e01");
    EXPECT_EQ(make_run_id("", Mode::zero_shot, "m02"), "default-zero_shot-m02");
    EXPECT_TRUE(prompting::is_safe_run_id(make_run_id("a/b:c", Mode::agentic, "t")));
}

TEST(ZeroShot, OneCallOneExecution) {
    Bench b;
    auto mock = llm::script_mock({ModelTurn::stop(fenced(kPlotCode))});
    auto record = run_zero_shot(cheese(), b.config(Mode::zero_shot), "zs1", b.deps(mock));
    EXPECT_EQ(record.status, RunStatus::completed) << record.failure_reason;
    EXPECT_EQ(mock->calls(), 1u);
    EXPECT_EQ(b.executor.executions(), 1u);
    EXPECT_TRUE(mock->requests()[0].tools.empty());
    EXPECT_TRUE(mock->requests()[0].history.empty());
    auto run_dir = b.dir / "output" / "zs1";
    EXPECT_EQ(util::read_file(run_dir / "code_iter_1.py"), kPlotCode);
    EXPECT_EQ(record.code_iterations, std::vector<std::string>{"output/zs1/code_iter_1.py"});
    EXPECT_EQ(record.final_plot, "output/zs1/plot.png");
    EXPECT_EQ(util::read_file(run_dir / "prompt.txt"), mock->requests()[0].system);
    EXPECT_EQ(load_run(run_dir).status, RunStatus::completed);
}

TEST(ZeroShot, NoCodeBlockMeansNoExecution) {
    Bench b;
    auto mock = llm::script_mock({ModelTurn::stop("I cannot help with that.")});
    auto record = run_zero_shot(cheese(), b.config(Mode::zero_shot), "zs2", b.deps(mock));
    EXPECT_EQ(record.status, RunStatus::failed);
    EXPECT_EQ(record.failure_reason, "no code block");
    EXPECT_EQ(b.executor.executions(), 0u);
}

TEST(ZeroShot, ExecutionFailureRecorded) {
    Bench b;
    auto mock = llm::script_mock({ModelTurn::stop(fenced("df = 1/0\n"))});
    auto record = run_zero_shot(cheese(), b.config(Mode::zero_shot), "zs3", b.deps(mock));
    EXPECT_EQ(record.status, RunStatus::failed);
    EXPECT_NE(record.failure_reason.find("ZeroDivisionError"), std::string::npos);
    EXPECT_EQ(b.executor.executions(), 1u);
    EXPECT_FALSE(record.final_plot);
}

TEST(Agentic, ToolLoopCompletes) {
    Bench b;
    auto mock = llm::script_mock({
        ModelTurn::tool_use({call("c1", "list_files", {{"directory", "data/"}})}),
        ModelTurn::tool_use({call("c2", "read_file_head", {{"path", "data/7425ENG.csv"}, {"n_lines", 3}}),
                             call("c3", "read_file_head", {{"path", "../../etc/passwd"}})}),
        ModelTurn::tool_use({call("c4", "execute_python_code", {{"code", "raise KeyError('Cheese')"}})}),
        ModelTurn::tool_use({call("c5", "execute_python_code", {{"code", kPlotCode}})}),
        ModelTurn::tool_use({call("c6", "read_visualization_image")}),
        ModelTurn::stop("The plot is saved."),
    });
    auto record = run_agentic(cheese(), b.config(Mode::agentic), "ag1", b.deps(mock));
    EXPECT_EQ(record.status, RunStatus::completed) << record.failure_reason;
    EXPECT_EQ(mock->calls(), 6u);
    ASSERT_EQ(record.turns.size(), 6u);
    EXPECT_EQ(record.turns[1].results[1].status, ToolStatus::denied);
    EXPECT_EQ(record.turns[2].results[0].status, ToolStatus::error);
    EXPECT_EQ(record.code_iterations,
              (std::vector<std::string>{"output/ag1/code_iter_1.py", "output/ag1/code_iter_2.py"}));
    EXPECT_EQ(record.final_plot, "output/ag1/plot.png");
    EXPECT_EQ(record.executor, "stub");

    // The last request carries the full tool exchange.
    auto history = mock->requests().back().history;
    ASSERT_EQ(history.size(), 1u + 5 * 1 + 6);
    EXPECT_EQ(history[0].content, cheese().prompt);
    EXPECT_EQ(history[5].role, llm::Role::tool_result);
    EXPECT_TRUE(history[5].content.starts_with("DENIED: "));
    EXPECT_EQ(mock->requests()[0].tools.size(), 5u);
    EXPECT_NE(mock->requests()[0].system.find("output/ag1/plot.png"), std::string::npos);

    auto run_dir = b.dir / "output" / "ag1";
    auto manifest = json::parse(util::read_file(run_dir / "manifest.json"));
    EXPECT_EQ(manifest["status"], "completed");
    EXPECT_EQ(manifest["mode"], "agentic");
    EXPECT_EQ(manifest["turns"].size(), 6u);
    EXPECT_EQ(llm::load_logged_turns(run_dir / "llm_log").size(), 6u);
    EXPECT_TRUE(std::filesystem::exists(run_dir / "agent_log"));
}

TEST(Agentic, ExhaustsIterationBudget) {
    Bench b;
    std::vector<ModelTurn> program;
    for (int i = 0; i < 10; ++i) {
        program.push_back(ModelTurn::tool_use({call("", "list_files")}));
    }
    auto mock = llm::script_mock(program);
    auto record = run_agentic(cheese(), b.config(Mode::agentic, 3), "ag2", b.deps(mock));
    EXPECT_EQ(record.status, RunStatus::exhausted_iters);
    EXPECT_EQ(mock->calls(), 3u);
    EXPECT_EQ(record.turns.size(), 3u);
}

TEST(Agentic, StopWithoutPlotFails) {
    Bench b;
    auto mock = llm::script_mock({ModelTurn::stop("done")});
    auto record = run_agentic(cheese(), b.config(Mode::agentic), "ag3", b.deps(mock));
    EXPECT_EQ(record.status, RunStatus::failed);
    EXPECT_FALSE(record.final_plot);
}

TEST(Agentic, ProviderErrorAndTruncation) {
    Bench b;
    ModelTurn cut;
    cut.text = "partial";
    cut.finish = llm::FinishReason::length;
    auto mock = llm::script_mock({cut, ModelTurn::failure("boom")});
    auto record = run_agentic(cheese(), b.config(Mode::agentic), "ag4", b.deps(mock));
    EXPECT_EQ(record.status, RunStatus::failed);
    EXPECT_EQ(record.failure_reason, "provider error: boom");
    auto second = mock->requests()[1].history;
    ASSERT_EQ(second.size(), 3u);
    EXPECT_EQ(second[2].content, "Your previous reply was cut off. Continue.");
}

TEST(Runs, RetrievalAndGoldRankRecorded) {
    Bench b;
    auto record = run_agentic(cheese(), b.config(Mode::agentic), "ag5",
                              b.deps(llm::script_mock({ModelTurn::stop("x")})));
    ASSERT_TRUE(record.retrieved);
    ASSERT_TRUE(record.gold_rank);
    EXPECT_GE(*record.gold_rank, 1);
    auto loaded = load_run(b.dir / "output" / "ag5");
    EXPECT_EQ(loaded.retrieved->ref, record.retrieved->ref);
    EXPECT_EQ(loaded.gold_rank, record.gold_rank);
    EXPECT_EQ(loaded.task, cheese());
    EXPECT_THROW(load_run(b.dir / "output" / "nope"), NotFoundError);
}

TEST(Runs, RejectsBadConfig) {
    Bench b;
    auto mock = llm::script_mock({ModelTurn::stop("x")});
    EXPECT_THROW(run_agentic(cheese(), b.config(Mode::agentic, 0), "bad1", b.deps(mock)), PreconditionError);
    RunDeps missing = b.deps(mock);
    missing.executor = nullptr;
    EXPECT_THROW(run_agentic(cheese(), b.config(Mode::agentic), "bad2", missing), PreconditionError);
}
