#pragma once

#include "statviz/error.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace statviz::sandbox {

struct ExecutionRequest {
    std::string code;
    std::filesystem::path dataset_csv;
    std::filesystem::path target_plot;
    double timeout_s = 60;
    std::filesystem::path allowed_write_dir;
};

enum class ExitStatus { ok, runtime_error, timeout, setup_error };

std::string_view to_string(ExitStatus s);
ExitStatus exit_status_from_string(std::string_view s);

struct ExecutionResult {
    ExitStatus exit_status = ExitStatus::setup_error;
    std::string stdout_text;
    std::string stderr_text;
    bool plot_written = false;
    double duration_s = 0;

    bool operator==(const ExecutionResult&) const = default;
};

void to_json(nlohmann::json& j, const ExecutionResult& r);
void from_json(const nlohmann::json& j, ExecutionResult& r);
nlohmann::json request_json(const ExecutionRequest& r);

struct HandshakeReport {
    bool ok = false;
    std::string harness_version;
    std::map<std::string, bool> capabilities;  // pandas, matplotlib, seaborn, numpy
    std::string diagnostic;                    // set when !ok or a capability is missing
};

class CodeExecutor {
public:
    virtual ~CodeExecutor() = default;
    virtual std::string name() const = 0;
    virtual HandshakeReport handshake() = 0;
    virtual ExecutionResult execute(const ExecutionRequest& request) = 0;
};

// Client for the out-of-process Python harness (see harness/protocol.md).
// Each request runs `<python> <script> --request R --response S` in a fresh
// process whose working directory is the allowed write directory.
class SubprocessExecutor final : public CodeExecutor {
public:
    struct Options {
        std::string python = "python3";
        std::filesystem::path script = "harness/statviz_harness.py";
        double kill_grace_s = 5;  // added to timeout_s before the client kills the harness
    };

    explicit SubprocessExecutor(Options options);
    std::string name() const override { return "subprocess"; }
    HandshakeReport handshake() override;
    ExecutionResult execute(const ExecutionRequest& request) override;

private:
    Options options_;
};

// Stands in for the harness when it is not installed. It never runs Python:
//  - a missing dataset gives setup_error;
//  - code containing `raise`, a literal `1/0` or the marker `# stub: error`
//    gives runtime_error with a traceback-shaped stderr;
//  - the marker `# stub: timeout` gives timeout;
//  - `print(len(df))` prints the dataset's row count;
//  - code that calls matplotlib/seaborn/pandas plotting gets a placeholder
//    PNG written to target_plot.
class StubExecutor final : public CodeExecutor {
public:
    std::string name() const override { return "stub"; }
    HandshakeReport handshake() override;
    ExecutionResult execute(const ExecutionRequest& request) override;

    std::size_t executions() const noexcept { return executions_; }

private:
    std::size_t executions_ = 0;
};

struct ExecutorSelection {
    std::unique_ptr<CodeExecutor> executor;
    HandshakeReport report;  // from the harness, even when the stub was chosen
};

// Uses the harness when its handshake succeeds. Otherwise returns the stub
// if allowed, or throws Error carrying the handshake diagnostic.
ExecutorSelection select_executor(const SubprocessExecutor::Options& options, bool allow_stub);

// Width and height from a PNG header, or nullopt if the file is not a PNG.
std::optional<std::pair<std::uint32_t, std::uint32_t>> png_dimensions(const std::filesystem::path& path);
void write_placeholder_png(const std::filesystem::path& path);

struct ProcessOutcome {
    int exit_code = -1;
    bool timed_out = false;
    std::string stdout_text;
    std::string stderr_text;
    double duration_s = 0;
};

// Runs argv without a shell, capturing stdout/stderr; kills the process group
// after timeout_s.
ProcessOutcome run_process(const std::vector<std::string>& argv, const std::filesystem::path& cwd, double timeout_s);

} // namespace statviz::sandbox
