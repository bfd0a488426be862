#include <gtest/gtest.h>

#include "statviz/sandbox.hpp"
#include "statviz/util.hpp"
#include "support.hpp"

#include <cstdlib>

using namespace statviz;
using namespace statviz::sandbox;
using statviz::testing::TempDir;
using statviz::testing::fixtures_dir;

namespace {

SubprocessExecutor::Options fake_harness() {
    SubprocessExecutor::Options o;
    o.script = fixtures_dir() / "fake_harness.py";
    o.kill_grace_s = 0.5;
    return o;
}

class ScopedEnv {
public:
    ScopedEnv(const char* name, const char* value) : name_(name) { setenv(name, value, 1); }
    ~ScopedEnv() { unsetenv(name_); }

private:
    const char* name_;
};

struct Workspace {
    TempDir dir;
    std::filesystem::path csv = dir / "data.csv";
    std::filesystem::path run = dir / "run";

    Workspace() {
        util::write_file_atomic(csv, "Periods,Value\n2020,1\n2021,2\n2022,3\n");
        std::filesystem::create_directories(run);
    }

    ExecutionRequest request(std::string code, double timeout = 10) const {
        return {std::move(code), csv, run / "plot.png", timeout, run};
    }
};

} // namespace

TEST(ExitStatus, StringRoundTrip) {
    for (auto s : {ExitStatus::ok, ExitStatus::runtime_error, ExitStatus::timeout, ExitStatus::setup_error}) {
        EXPECT_EQ(exit_status_from_string(to_string(s)), s);
    }
    EXPECT_THROW(exit_status_from_string("crashed"), Error);
}

TEST(ExecutionResult, JsonRoundTrip) {
    ExecutionResult r{ExitStatus::runtime_error, "out", "err", true, 1.5};
    nlohmann::json j = r;
    EXPECT_EQ(j["exit_status"], "runtime_error");
    EXPECT_EQ(j.get<ExecutionResult>(), r);
}

TEST(Png, PlaceholderHasDimensions) {
    TempDir dir;
    write_placeholder_png(dir / "p.png");
    auto dims = png_dimensions(dir / "p.png");
    ASSERT_TRUE(dims);
    EXPECT_EQ(dims->first, 160u);
    EXPECT_EQ(dims->second, 120u);
    util::write_file_atomic(dir / "x.png", "not a png at all, but long enough");
    EXPECT_FALSE(png_dimensions(dir / "x.png"));
    EXPECT_FALSE(png_dimensions(dir / "missing.png"));
}

TEST(Stub, PrintsRowCount) {
    TempDir dir;
    statviz::testing::materialize_fixture_catalog(dir / "data");
    std::filesystem::create_directories(dir / "run");
    StubExecutor stub;
    ExecutionRequest req{"import pandas as pd\ndf = pd.read_csv('data/7425ENG.csv')\nprint(len(df))\n",
                         dir / "data" / "7425ENG.csv", dir / "run" / "plot.png", 60, dir / "run"};
    auto r = stub.execute(req);
    EXPECT_EQ(r.exit_status, ExitStatus::ok);
    EXPECT_EQ(r.stdout_text, "300\n");
    EXPECT_FALSE(r.plot_written);
    EXPECT_EQ(stub.executions(), 1u);
}

TEST(Stub, Behaviours) {
    Workspace ws;
    StubExecutor stub;
    auto plot = stub.execute(ws.request("import matplotlib.pyplot as plt\nplt.plot([1])\nplt.savefig('plot.png')\n"));
    EXPECT_EQ(plot.exit_status, ExitStatus::ok);
    EXPECT_TRUE(plot.plot_written);
    EXPECT_TRUE(png_dimensions(ws.run / "plot.png"));

    auto err = stub.execute(ws.request("x = 1\ny = 1/0\n"));
    EXPECT_EQ(err.exit_status, ExitStatus::runtime_error);
    EXPECT_NE(err.stderr_text.find("line 2"), std::string::npos);
    EXPECT_NE(err.stderr_text.find("ZeroDivisionError"), std::string::npos);

    auto raised = stub.execute(ws.request("raise KeyError('Periods')\n"));
    EXPECT_NE(raised.stderr_text.find("KeyError"), std::string::npos);

    EXPECT_EQ(stub.execute(ws.request("# stub: timeout\n", 7)).exit_status, ExitStatus::timeout);

    auto req = ws.request("print(1)");
    req.dataset_csv = ws.dir / "nope.csv";
    EXPECT_EQ(stub.execute(req).exit_status, ExitStatus::setup_error);
    EXPECT_THROW(stub.execute(ws.request("")), PreconditionError);
    EXPECT_EQ(stub.executions(), 5u);
}

TEST(Stub, HandshakeDeclaresItself) {
    StubExecutor stub;
    auto r = stub.handshake();
    EXPECT_TRUE(r.ok);
    EXPECT_EQ(r.harness_version, "stub");
}

TEST(Process, CapturesOutputAndExitCode) {
    auto r = run_process({"sh", "-c", "echo out; echo err >&2; exit 3"}, {}, 10);
    EXPECT_EQ(r.exit_code, 3);
    EXPECT_EQ(r.stdout_text, "out\n");
    EXPECT_EQ(r.stderr_text, "err\n");
    EXPECT_FALSE(r.timed_out);
}

TEST(Process, KillsOnTimeout) {
    auto r = run_process({"sh", "-c", "sleep 30"}, {}, 0.3);
    EXPECT_TRUE(r.timed_out);
    EXPECT_LT(r.duration_s, 5);
}

TEST(Process, MissingBinary) {
    EXPECT_EQ(run_process({"definitely-not-a-binary-xyz"}, {}, 5).exit_code, 127);
    EXPECT_THROW(run_process({}, {}, 5), PreconditionError);
}

TEST(Harness, HandshakeOk) {
    SubprocessExecutor ex(fake_harness());
    auto r = ex.handshake();
    EXPECT_TRUE(r.ok) << r.diagnostic;
    EXPECT_EQ(r.harness_version, "fake-1.0");
    EXPECT_TRUE(r.capabilities.at("seaborn"));
    EXPECT_TRUE(r.diagnostic.empty());
}

TEST(Harness, HandshakeReportsMissingLibraries) {
    ScopedEnv env("FAKE_HARNESS_MISSING", "seaborn,numpy");
    SubprocessExecutor ex(fake_harness());
    auto r = ex.handshake();
    EXPECT_TRUE(r.ok);
    EXPECT_FALSE(r.capabilities.at("seaborn"));
    EXPECT_EQ(r.diagnostic, "harness is missing: seaborn, numpy");
}

TEST(Harness, HandshakeFailure) {
    ScopedEnv env("FAKE_HARNESS_FAIL", "1");
    SubprocessExecutor ex(fake_harness());
    auto r = ex.handshake();
    EXPECT_FALSE(r.ok);
    EXPECT_NE(r.diagnostic.find("harness broken"), std::string::npos);
}

TEST(Harness, MissingScriptOrInterpreter) {
    auto o = fake_harness();
    o.script = "/nonexistent/harness.py";
    EXPECT_FALSE(SubprocessExecutor(o).handshake().ok);
    o = fake_harness();
    o.python = "no-such-python-xyz";
    auto r = SubprocessExecutor(o).handshake();
    EXPECT_FALSE(r.ok);
    EXPECT_NE(r.diagnostic.find("interpreter"), std::string::npos);
}

TEST(Harness, ExecuteOkWithPlot) {
    Workspace ws;
    SubprocessExecutor ex(fake_harness());
    auto r = ex.execute(ws.request("df = load()\nprint(len(df))\nplt.savefig('plot.png')\n"));
    EXPECT_EQ(r.exit_status, ExitStatus::ok) << r.stderr_text;
    EXPECT_EQ(r.stdout_text, "3\n");
    EXPECT_TRUE(r.plot_written);
    EXPECT_FALSE(std::filesystem::exists(ws.run / ".harness_request.json"));
    EXPECT_FALSE(std::filesystem::exists(ws.run / ".harness_response.json"));
}

TEST(Harness, ExecuteRuntimeError) {
    Workspace ws;
    SubprocessExecutor ex(fake_harness());
    auto r = ex.execute(ws.request("raise ValueError('boom')"));
    EXPECT_EQ(r.exit_status, ExitStatus::runtime_error);
    EXPECT_NE(r.stderr_text.find("Traceback"), std::string::npos);
    EXPECT_FALSE(r.plot_written);
}

TEST(Harness, ExecuteSetupError) {
    Workspace ws;
    SubprocessExecutor ex(fake_harness());
    auto req = ws.request("print(1)");
    req.dataset_csv = ws.dir / "missing.csv";
    EXPECT_EQ(ex.execute(req).exit_status, ExitStatus::setup_error);
}

TEST(Harness, TimeoutKillsWithinGrace) {
    Workspace ws;
    SubprocessExecutor ex(fake_harness());
    auto started = std::chrono::steady_clock::now();
    auto r = ex.execute(ws.request("sleep_forever", 0.5));
    auto took = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    EXPECT_EQ(r.exit_status, ExitStatus::timeout);
    EXPECT_LT(took, 0.5 + 0.5 + 2.0);
}

TEST(Harness, MissingOrGarbledResponse) {
    Workspace ws;
    SubprocessExecutor ex(fake_harness());
    auto none = ex.execute(ws.request("no_response"));
    EXPECT_EQ(none.exit_status, ExitStatus::setup_error);
    EXPECT_NE(none.stderr_text.find("without a response"), std::string::npos);
    auto garbled = ex.execute(ws.request("garbage"));
    EXPECT_EQ(garbled.exit_status, ExitStatus::setup_error);
    EXPECT_NE(garbled.stderr_text.find("unreadable"), std::string::npos);
}

TEST(Select, PrefersHarness) {
    auto sel = select_executor(fake_harness(), false);
    EXPECT_EQ(sel.executor->name(), "subprocess");
    EXPECT_TRUE(sel.report.ok);
}

TEST(Select, FallsBackToStubOnlyWhenAllowed) {
    auto o = fake_harness();
    o.script = "/nonexistent/harness.py";
    auto sel = select_executor(o, true);
    EXPECT_EQ(sel.executor->name(), "stub");
    EXPECT_FALSE(sel.report.ok);
    EXPECT_NE(sel.report.diagnostic.find("not found"), std::string::npos);
    EXPECT_THROW(select_executor(o, false), Error);
}
