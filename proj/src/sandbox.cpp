#include "statviz/sandbox.hpp"

#include "statviz/util.hpp"

#include <fmt/format.h>
#include <zlib.h>

#include <algorithm>
#include <csignal>
#include <fstream>
#include <cstdlib>
#include <fcntl.h>
#include <regex>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

namespace statviz::sandbox {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kProtocolVersion = 1;

std::string_view to_string(ExitStatus s) {
    switch (s) {
    case ExitStatus::ok: return "ok";
    case ExitStatus::runtime_error: return "runtime_error";
    case ExitStatus::timeout: return "timeout";
    case ExitStatus::setup_error: return "setup_error";
    }
    return "setup_error";
}

ExitStatus exit_status_from_string(std::string_view s) {
    if (s == "ok") return ExitStatus::ok;
    if (s == "runtime_error") return ExitStatus::runtime_error;
    if (s == "timeout") return ExitStatus::timeout;
    if (s == "setup_error") return ExitStatus::setup_error;
    throw ParseError("unknown exit status", std::string(s));
}

void to_json(json& j, const ExecutionResult& r) {
    j = json{{"exit_status", to_string(r.exit_status)},
             {"stdout", r.stdout_text},
             {"stderr", r.stderr_text},
             {"plot_written", r.plot_written},
             {"duration_s", r.duration_s}};
}

void from_json(const json& j, ExecutionResult& r) {
    r.exit_status = exit_status_from_string(j.at("exit_status").get<std::string>());
    r.stdout_text = j.value("stdout", "");
    r.stderr_text = j.value("stderr", "");
    r.plot_written = j.value("plot_written", false);
    r.duration_s = j.value("duration_s", 0.0);
}

json request_json(const ExecutionRequest& r) {
    return {{"protocol", kProtocolVersion},
            {"code", r.code},
            {"dataset_csv", r.dataset_csv.string()},
            {"target_plot", r.target_plot.string()},
            {"timeout_s", r.timeout_s},
            {"allowed_write_dir", r.allowed_write_dir.string()}};
}

// --- process runner -----------------------------------------------------------

namespace {

struct TempFile {
    fs::path path;
    int fd = -1;

    TempFile() {
        std::string tmpl = (fs::temp_directory_path() / "statviz-XXXXXX").string();
        fd = mkstemp(tmpl.data());
        if (fd < 0) {
            throw IoError("cannot create temp file");
        }
        path = tmpl;
    }
    ~TempFile() {
        if (fd >= 0) {
            close(fd);
        }
        std::error_code ec;
        fs::remove(path, ec);
    }
    TempFile(const TempFile&) = delete;
    TempFile& operator=(const TempFile&) = delete;
};

} // namespace

ProcessOutcome run_process(const std::vector<std::string>& argv, const fs::path& cwd, double timeout_s) {
    if (argv.empty()) {
        throw PreconditionError("empty argv");
    }
    TempFile out;
    TempFile err;
    std::vector<char*> args;
    for (const auto& a : argv) {
        args.push_back(const_cast<char*>(a.c_str()));
    }
    args.push_back(nullptr);

    auto started = std::chrono::steady_clock::now();
    pid_t pid = fork();
    if (pid < 0) {
        throw IoError("fork failed");
    }
    if (pid == 0) {
        setpgid(0, 0);
        if (!cwd.empty() && chdir(cwd.c_str()) != 0) {
            _exit(126);
        }
        int devnull = open("/dev/null", O_RDONLY);
        if (devnull >= 0) {
            dup2(devnull, STDIN_FILENO);
        }
        dup2(out.fd, STDOUT_FILENO);
        dup2(err.fd, STDERR_FILENO);
        execvp(args[0], args.data());
        _exit(127);
    }
    setpgid(pid, pid);

    ProcessOutcome outcome;
    int status = 0;
    auto deadline = started + std::chrono::duration<double>(timeout_s);
    while (true) {
        pid_t done = waitpid(pid, &status, WNOHANG);
        if (done == pid) {
            break;
        }
        if (std::chrono::steady_clock::now() >= deadline) {
            kill(-pid, SIGKILL);
            kill(pid, SIGKILL);
            waitpid(pid, &status, 0);
            outcome.timed_out = true;
            break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    outcome.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (WIFEXITED(status)) {
        outcome.exit_code = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
        outcome.exit_code = 128 + WTERMSIG(status);
    }
    outcome.stdout_text = util::read_file(out.path);
    outcome.stderr_text = util::read_file(err.path);
    return outcome;
}

// --- subprocess executor --------------------------------------------------------

SubprocessExecutor::SubprocessExecutor(Options options) : options_(std::move(options)) {}

HandshakeReport SubprocessExecutor::handshake() {
    HandshakeReport report;
    if (!fs::exists(options_.script)) {
        report.diagnostic = "harness script not found: " + options_.script.string();
        return report;
    }
    ProcessOutcome outcome;
    try {
        outcome = run_process({options_.python, options_.script.string(), "--handshake"}, {}, 30);
    } catch (const Error& e) {
        report.diagnostic = e.what();
        return report;
    }
    if (outcome.exit_code == 127) {
        report.diagnostic = "python interpreter not found: " + options_.python;
        return report;
    }
    if (outcome.timed_out || outcome.exit_code != 0) {
        report.diagnostic = fmt::format("harness handshake exited with {}: {}", outcome.exit_code,
                                        util::trim(outcome.stderr_text).substr(0, 500));
        return report;
    }
    try {
        auto j = json::parse(outcome.stdout_text);
        if (j.value("protocol", 0) != kProtocolVersion) {
            report.diagnostic = fmt::format("harness speaks protocol {}, expected {}", j.value("protocol", 0),
                                            kProtocolVersion);
            return report;
        }
        report.harness_version = j.value("harness_version", "");
        for (const auto& [lib, available] : j.at("capabilities").items()) {
            report.capabilities[lib] = available.get<bool>();
        }
    } catch (const json::exception& e) {
        report.diagnostic = std::string("unreadable handshake reply: ") + e.what();
        return report;
    }
    report.ok = true;
    std::string missing;
    for (const char* lib : {"pandas", "matplotlib", "seaborn", "numpy"}) {
        auto it = report.capabilities.find(lib);
        if (it == report.capabilities.end() || !it->second) {
            missing += (missing.empty() ? "" : ", ") + std::string(lib);
            report.capabilities[lib] = false;
        }
    }
    if (!missing.empty()) {
        report.diagnostic = "harness is missing: " + missing;
    }
    return report;
}

ExecutionResult SubprocessExecutor::execute(const ExecutionRequest& request) {
    if (request.code.empty()) {
        throw PreconditionError("execution request without code");
    }
    ExecutionResult result;
    if (!fs::is_directory(request.allowed_write_dir)) {
        result.stderr_text = "write directory does not exist: " + request.allowed_write_dir.string();
        return result;
    }
    auto req_path = request.allowed_write_dir / ".harness_request.json";
    auto resp_path = request.allowed_write_dir / ".harness_response.json";
    std::error_code ec;
    fs::remove(resp_path, ec);
    util::write_file_atomic(req_path, request_json(request).dump());

    auto outcome = run_process({options_.python, fs::absolute(options_.script).string(), "--request",
                                req_path.string(), "--response", resp_path.string()},
                               request.allowed_write_dir, request.timeout_s + options_.kill_grace_s);
    fs::remove(req_path, ec);
    if (outcome.timed_out) {
        result.exit_status = ExitStatus::timeout;
        result.stdout_text = outcome.stdout_text;
        result.stderr_text = outcome.stderr_text + fmt::format("\nkilled after {:.1f}s", outcome.duration_s);
        result.duration_s = outcome.duration_s;
        return result;
    }
    if (!fs::exists(resp_path)) {
        result.exit_status = ExitStatus::setup_error;
        result.stdout_text = outcome.stdout_text;
        result.stderr_text = fmt::format("harness exited with {} without a response\n{}", outcome.exit_code,
                                         outcome.stderr_text);
        result.duration_s = outcome.duration_s;
        return result;
    }
    try {
        result = json::parse(util::read_file(resp_path)).get<ExecutionResult>();
    } catch (const std::exception& e) {
        result = {};
        result.stderr_text = std::string("unreadable harness response: ") + e.what();
    }
    fs::remove(resp_path, ec);
    // The file on disk is the ground truth for plot_written.
    result.plot_written = png_dimensions(request.target_plot).has_value() && fs::file_size(request.target_plot) > 0;
    return result;
}

// --- stub executor --------------------------------------------------------------

HandshakeReport StubExecutor::handshake() {
    HandshakeReport report;
    report.ok = true;
    report.harness_version = "stub";
    report.diagnostic = "stub executor: code is pattern-matched, not run";
    for (const char* lib : {"pandas", "matplotlib", "seaborn", "numpy"}) {
        report.capabilities[lib] = false;
    }
    return report;
}

namespace {

std::size_t csv_data_rows(const fs::path& csv) {
    auto rows = util::csv_parse(util::read_file(csv));
    return rows.empty() ? 0 : rows.size() - 1;
}

int line_of(const std::string& code, std::size_t pos) {
    return 1 + static_cast<int>(std::count(code.begin(), code.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

} // namespace

ExecutionResult StubExecutor::execute(const ExecutionRequest& request) {
    if (request.code.empty()) {
        throw PreconditionError("execution request without code");
    }
    ++executions_;
    ExecutionResult result;
    if (!fs::exists(request.dataset_csv)) {
        result.exit_status = ExitStatus::setup_error;
        result.stderr_text = "dataset not readable: " + request.dataset_csv.string();
        return result;
    }
    if (!fs::is_directory(request.allowed_write_dir)) {
        result.exit_status = ExitStatus::setup_error;
        result.stderr_text = "write directory does not exist: " + request.allowed_write_dir.string();
        return result;
    }
    const auto& code = request.code;
    if (code.find("# stub: timeout") != std::string::npos) {
        result.exit_status = ExitStatus::timeout;
        result.stderr_text = fmt::format("execution exceeded {}s", request.timeout_s);
        result.duration_s = request.timeout_s;
        return result;
    }

    static const std::regex div_zero(R"(\b1\s*/\s*0\b)");
    static const std::regex raise_stmt(R"(\braise\s+([A-Za-z_][A-Za-z0-9_]*)?)");
    std::smatch m;
    if (std::regex_search(code, m, div_zero)) {
        result.exit_status = ExitStatus::runtime_error;
        result.stderr_text = fmt::format("Traceback (most recent call last):\n  File \"<analysis>\", line {}\n"
                                         "ZeroDivisionError: division by zero\n",
                                         line_of(code, static_cast<std::size_t>(m.position(0))));
        return result;
    }
    if (std::regex_search(code, m, raise_stmt) || code.find("# stub: error") != std::string::npos) {
        std::string exc = m.size() > 1 && m[1].matched ? m[1].str() : "RuntimeError";
        result.exit_status = ExitStatus::runtime_error;
        result.stderr_text = fmt::format("Traceback (most recent call last):\n  File \"<analysis>\", line {}\n{}: "
                                         "raised by analysis code\n",
                                         m.empty() ? 1 : line_of(code, static_cast<std::size_t>(m.position(0))), exc);
        return result;
    }

    result.exit_status = ExitStatus::ok;
    if (code.find("print(len(df))") != std::string::npos) {
        result.stdout_text = fmt::format("{}\n", csv_data_rows(request.dataset_csv));
    }
    static const std::regex plotting(R"(\bplt\.|\bsns\.|\.plot\(|savefig\()");
    if (std::regex_search(code, plotting)) {
        write_placeholder_png(request.target_plot);
        result.plot_written = true;
    }
    return result;
}

ExecutorSelection select_executor(const SubprocessExecutor::Options& options, bool allow_stub) {
    auto harness = std::make_unique<SubprocessExecutor>(options);
    auto report = harness->handshake();
    if (report.ok) {
        return {std::move(harness), std::move(report)};
    }
    if (!allow_stub) {
        throw Error("code execution unavailable: " + report.diagnostic);
    }
    return {std::make_unique<StubExecutor>(), std::move(report)};
}

// --- PNG helpers ----------------------------------------------------------------

std::optional<std::pair<std::uint32_t, std::uint32_t>> png_dimensions(const fs::path& path) {
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) {
        return std::nullopt;
    }
    std::string head;
    {
        std::ifstream in(path, std::ios::binary);
        head.resize(24);
        in.read(head.data(), 24);
        if (in.gcount() != 24) {
            return std::nullopt;
        }
    }
    static const char sig[8] = {'\x89', 'P', 'N', 'G', '\r', '\n', '\x1a', '\n'};
    if (head.compare(0, 8, std::string(sig, 8)) != 0 || head.compare(12, 4, "IHDR") != 0) {
        return std::nullopt;
    }
    auto be32 = [&](std::size_t off) {
        return (static_cast<std::uint32_t>(static_cast<unsigned char>(head[off])) << 24) |
               (static_cast<std::uint32_t>(static_cast<unsigned char>(head[off + 1])) << 16) |
               (static_cast<std::uint32_t>(static_cast<unsigned char>(head[off + 2])) << 8) |
               static_cast<std::uint32_t>(static_cast<unsigned char>(head[off + 3]));
    };
    return std::make_pair(be32(16), be32(20));
}

namespace {

void put_be32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>((v >> 24) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>(v & 0xff));
}

void put_chunk(std::string& out, const char* type, const std::string& data) {
    put_be32(out, static_cast<std::uint32_t>(data.size()));
    std::string body = std::string(type, 4) + data;
    out += body;
    put_be32(out, static_cast<std::uint32_t>(
                      crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
}

} // namespace

void write_placeholder_png(const fs::path& path) {
    constexpr std::uint32_t width = 160;
    constexpr std::uint32_t height = 120;
    std::string raw;
    for (std::uint32_t y = 0; y < height; ++y) {
        raw.push_back('\0');  // filter: none
        raw.append(width * 3, '\xff');
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::string packed(bound, '\0');
    if (compress(reinterpret_cast<Bytef*>(packed.data()), &bound, reinterpret_cast<const Bytef*>(raw.data()),
                 static_cast<uLong>(raw.size())) != Z_OK) {
        throw IoError("zlib compression failed");
    }
    packed.resize(bound);

    std::string png("\x89PNG\r\n\x1a\n", 8);
    std::string ihdr;
    put_be32(ihdr, width);
    put_be32(ihdr, height);
    ihdr += std::string("\x08\x02\x00\x00\x00", 5);  // 8-bit RGB
    put_chunk(png, "IHDR", ihdr);
    put_chunk(png, "IDAT", packed);
    put_chunk(png, "IEND", "");
    util::write_file_atomic(path, png);
}

} // namespace statviz::sandbox
