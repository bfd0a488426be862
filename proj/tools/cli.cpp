#include "cli.hpp"

#include "statviz/agent.hpp"
#include "statviz/catalog.hpp"
#include "statviz/error.hpp"
#include "statviz/eval.hpp"
#include "statviz/llm.hpp"
#include "statviz/prompting.hpp"
#include "statviz/retrieval.hpp"
#include "statviz/sandbox.hpp"
#include "statviz/util.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include <atomic>
#include <cstdlib>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

extern char** environ;

namespace statviz::cli {

namespace fs = std::filesystem;
using nlohmann::json;

Environment Environment::from_process() {
    Environment env;
    for (char** e = environ; e && *e; ++e) {
        std::string_view kv(*e);
        auto eq = kv.find('=');
        if (eq != std::string_view::npos && kv.starts_with("STATVIZ_")) {
            env.vars.emplace(std::string(kv.substr(0, eq)), std::string(kv.substr(eq + 1)));
        }
    }
    for (const char* name : {"OPENAI_API_KEY", "ANTHROPIC_API_KEY"}) {
        if (const char* v = std::getenv(name)) {
            env.vars.emplace(name, v);
        }
    }
    return env;
}

std::optional<std::string> Environment::get(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end() || it->second.empty()) {
        return std::nullopt;
    }
    return it->second;
}

namespace {

struct Config {
    std::string odata_base = "https://opendata.cbs.nl";
    fs::path workspace = ".";
    fs::path data_dir = "data";
    fs::path index_dir = "index";
    fs::path output_dir = "output";
    fs::path grades_dir = "grades";
    fs::path cache_dir = ".cache/odata";
    int page_size = 10000;

    std::string embedder = "hash";  // hash | precomputed | http
    std::size_t embed_dim = 256;
    fs::path embed_file;
    std::string embed_endpoint;
    std::string embed_model;

    llm::ProviderSettings provider;
    std::string model_config;
    int max_iters = 25;
    double timeout_s = 60;
    int workers = 1;

    std::string python = "python3";
    fs::path harness_script = "harness/statviz_harness.py";
    bool allow_stub = false;
};

int to_int(const std::string& name, const std::string& v) {
    try {
        std::size_t used = 0;
        int n = std::stoi(v, &used);
        if (used == v.size()) {
            return n;
        }
    } catch (const std::logic_error&) {
    }
    throw UsageError(fmt::format("{} must be an integer, got '{}'", name, v));
}

double to_double(const std::string& name, const std::string& v) {
    try {
        std::size_t used = 0;
        double d = std::stod(v, &used);
        if (used == v.size()) {
            return d;
        }
    } catch (const std::logic_error&) {
    }
    throw UsageError(fmt::format("{} must be a number, got '{}'", name, v));
}

void apply_json(Config& c, const json& j) {
    for (const char* secret : {"api_key", "embed_api_key"}) {
        if (j.contains(secret) || (j.contains("provider") && j["provider"].contains(secret))) {
            throw UsageError("config files must not hold secrets; set API keys in the environment");
        }
    }
    auto path = [&](const char* key, fs::path& target) {
        if (j.contains(key)) target = j[key].get<std::string>();
    };
    if (j.contains("odata_base")) c.odata_base = j["odata_base"].get<std::string>();
    path("workspace", c.workspace);
    path("data_dir", c.data_dir);
    path("index_dir", c.index_dir);
    path("output_dir", c.output_dir);
    path("grades_dir", c.grades_dir);
    path("cache_dir", c.cache_dir);
    c.page_size = j.value("page_size", c.page_size);
    c.embedder = j.value("embedder", c.embedder);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    path("embed_file", c.embed_file);
    c.embed_endpoint = j.value("embed_endpoint", c.embed_endpoint);
    c.embed_model = j.value("embed_model", c.embed_model);
    if (j.contains("provider")) {
        const auto& p = j["provider"];
        c.provider.family = p.value("family", c.provider.family);
        c.provider.endpoint = p.value("endpoint", c.provider.endpoint);
        c.provider.model = p.value("model", c.provider.model);
        if (p.contains("temperature") && p["temperature"].is_number()) {
            c.provider.temperature = p["temperature"].get<double>();
        }
        c.provider.max_tokens = p.value("max_tokens", c.provider.max_tokens);
        c.provider.images = p.value("images", c.provider.images);
    }
    c.model_config = j.value("model_config", c.model_config);
    c.max_iters = j.value("max_iters", c.max_iters);
    c.timeout_s = j.value("timeout_s", c.timeout_s);
    c.workers = j.value("workers", c.workers);
    c.python = j.value("python", c.python);
    path("harness_script", c.harness_script);
    c.allow_stub = j.value("allow_stub", c.allow_stub);
}

void apply_env(Config& c, const Environment& env) {
    if (auto v = env.get("STATVIZ_ODATA_BASE")) c.odata_base = *v;
    if (auto v = env.get("STATVIZ_WORKSPACE")) c.workspace = *v;
    if (auto v = env.get("STATVIZ_DATA_DIR")) c.data_dir = *v;
    if (auto v = env.get("STATVIZ_INDEX_DIR")) c.index_dir = *v;
    if (auto v = env.get("STATVIZ_OUTPUT_DIR")) c.output_dir = *v;
    if (auto v = env.get("STATVIZ_GRADES_DIR")) c.grades_dir = *v;
    if (auto v = env.get("STATVIZ_CACHE_DIR")) c.cache_dir = *v;
    if (auto v = env.get("STATVIZ_EMBEDDER")) c.embedder = *v;
    if (auto v = env.get("STATVIZ_EMBED_ENDPOINT")) c.embed_endpoint = *v;
    if (auto v = env.get("STATVIZ_EMBED_MODEL")) c.embed_model = *v;
    if (auto v = env.get("STATVIZ_PROVIDER")) c.provider.family = *v;
    if (auto v = env.get("STATVIZ_ENDPOINT")) c.provider.endpoint = *v;
    if (auto v = env.get("STATVIZ_MODEL")) c.provider.model = *v;
    if (auto v = env.get("STATVIZ_MODEL_CONFIG")) c.model_config = *v;
    if (auto v = env.get("STATVIZ_MAX_ITERS")) c.max_iters = to_int("STATVIZ_MAX_ITERS", *v);
    if (auto v = env.get("STATVIZ_TIMEOUT_S")) c.timeout_s = to_double("STATVIZ_TIMEOUT_S", *v);
    if (auto v = env.get("STATVIZ_WORKERS")) c.workers = to_int("STATVIZ_WORKERS", *v);
    if (auto v = env.get("STATVIZ_PYTHON")) c.python = *v;
    if (auto v = env.get("STATVIZ_HARNESS")) c.harness_script = *v;
    if (auto v = env.get("STATVIZ_ALLOW_STUB")) c.allow_stub = *v == "1" || *v == "true";
}

fs::path resolve(const Config& c, const fs::path& p) {
    return p.is_absolute() ? p : c.workspace / p;
}

std::shared_ptr<http::Transport> transport_for(const Environment& env) {
    return env.transport ? env.transport : std::make_shared<http::NetworkTransport>();
}

// Serializes calls into a provider that may not be thread-safe.
class LockedEmbedder final : public retrieval::EmbeddingProvider {
public:
    explicit LockedEmbedder(std::unique_ptr<retrieval::EmbeddingProvider> inner) : inner_(std::move(inner)) {}
    std::string id() const override { return inner_->id(); }
    std::size_t dim() const override { return inner_->dim(); }
    std::vector<retrieval::EmbeddingVector> embed_batch(const std::vector<std::string>& texts) override {
        std::lock_guard lock(mu_);
        return inner_->embed_batch(texts);
    }

private:
    std::unique_ptr<retrieval::EmbeddingProvider> inner_;
    std::mutex mu_;
};

std::unique_ptr<retrieval::EmbeddingProvider> make_embedder(const Config& c, const Environment& env) {
    std::unique_ptr<retrieval::EmbeddingProvider> inner;
    if (c.embedder == "hash") {
        inner = std::make_unique<retrieval::HashingEmbeddingProvider>(c.embed_dim);
    } else if (c.embedder == "precomputed") {
        if (c.embed_file.empty()) {
            throw UsageError("--embedder precomputed needs embed_file in the config");
        }
        inner = std::make_unique<retrieval::PrecomputedEmbeddingProvider>(
            retrieval::PrecomputedEmbeddingProvider::from_file(resolve(c, c.embed_file)));
    } else if (c.embedder == "http") {
        if (c.embed_endpoint.empty()) {
            throw UsageError("--embedder http needs embed_endpoint (config or STATVIZ_EMBED_ENDPOINT)");
        }
        retrieval::HttpEmbeddingProvider::Options o;
        o.endpoint = c.embed_endpoint;
        o.model = c.embed_model;
        o.dim = c.embed_dim;
        o.api_key = env.get("STATVIZ_EMBED_API_KEY").value_or("");
        inner = std::make_unique<retrieval::HttpEmbeddingProvider>(o, transport_for(env));
    } else {
        throw UsageError(fmt::format("unknown embedder '{}' (valid: hash, precomputed, http)", c.embedder));
    }
    return std::make_unique<LockedEmbedder>(std::move(inner));
}

std::vector<std::string> split_refs(const std::vector<std::string>& refs) {
    std::vector<std::string> out;
    for (const auto& r : refs) {
        std::stringstream ss(r);
        std::string part;
        while (std::getline(ss, part, ',')) {
            if (!util::trim(part).empty()) {
                out.push_back(util::trim(part));
            }
        }
    }
    return out;
}

int cmd_fetch(const Config& c, const Environment& env, const std::vector<std::string>& ref_args, bool no_cache,
              std::ostream& out) {
    auto refs = split_refs(ref_args);
    if (refs.empty()) {
        throw UsageError("fetch needs at least one table id");
    }
    auto data_dir = resolve(c, c.data_dir);
    fs::create_directories(data_dir);
    std::shared_ptr<http::Transport> transport = transport_for(env);
    if (!no_cache) {
        fs::create_directories(resolve(c, c.cache_dir));
        transport = std::make_shared<http::CachingTransport>(transport, resolve(c, c.cache_dir));
    }
    catalog::ODataClient client(c.odata_base, transport);
    for (const auto& id : refs) {
        catalog::TableRef ref(id);
        auto meta = client.fetch_metadata(ref);
        auto table = client.fetch_table(meta, c.page_size);
        auto stored = catalog::materialize(table, meta, data_dir);
        out << fmt::format("{}\t{} rows\t{}\n", ref.id(), table.rows.size(), stored.csv_path.string());
    }
    return 0;
}

int cmd_index(const Config& c, const Environment& env, std::ostream& out) {
    auto catalog = catalog::list_materialized(resolve(c, c.data_dir));
    if (catalog.empty()) {
        throw UsageError("no materialized datasets in " + resolve(c, c.data_dir).string() + "; run fetch first");
    }
    auto embedder = make_embedder(c, env);
    auto index = retrieval::build_index(catalog, *embedder);
    index.save(resolve(c, c.index_dir));
    out << fmt::format("indexed {} tables with {} into {}\n", index.size(), index.provider_id(),
                       resolve(c, c.index_dir).string());
    return 0;
}

int cmd_retrieve(const Config& c, const Environment& env, const std::string& prompt, int k, std::ostream& out) {
    if (k < 1) {
        throw UsageError("--k must be at least 1");
    }
    auto index = retrieval::RetrievalIndex::load(resolve(c, c.index_dir));
    auto embedder = make_embedder(c, env);
    auto ranking = retrieval::query(index, prompt, static_cast<std::size_t>(k), *embedder);
    for (const auto& m : ranking) {
        out << fmt::format("{}\t{}\t{:.6f}\n", m.rank, m.ref.id(), m.score);
    }
    return 0;
}

struct RunOptions {
    std::string tasks_file;
    std::string prompt;
    std::string task_id = "adhoc";
    std::string difficulty = "easy";
    std::string gold;
    std::vector<std::string> only;
    std::string mode = "agentic";
    std::string modules = "none";
    std::string mock_script;
    bool force = false;
};

// A fresh scripted provider per task; a script may be one program for all
// tasks or an object mapping task id to program.
class MockScripts {
public:
    explicit MockScripts(const fs::path& path) {
        auto doc = json::parse(util::read_file(path));
        if (doc.is_array()) {
            shared_ = doc;
        } else if (doc.is_object()) {
            per_task_ = doc;
        } else {
            throw UsageError("mock script must be a JSON array of turns or an object of task id -> turns");
        }
    }

    std::shared_ptr<llm::ChatProvider> for_task(const std::string& task_id, bool images) const {
        const json* program = shared_ ? &*shared_ : nullptr;
        if (per_task_ && per_task_->contains(task_id)) {
            program = &(*per_task_)[task_id];
        } else if (per_task_ && per_task_->contains("*")) {
            program = &(*per_task_)["*"];
        }
        if (!program) {
            throw UsageError("mock script has no program for task '" + task_id + "'");
        }
        return std::make_shared<llm::ScriptedProvider>(program->get<std::vector<llm::ModelTurn>>(), images);
    }

private:
    std::optional<json> shared_;
    std::optional<json> per_task_;
};

int cmd_run(const Config& c, const Environment& env, const RunOptions& o, std::ostream& out, std::ostream& err) {
    std::vector<agent::TaskSpec> tasks;
    if (!o.tasks_file.empty() && !o.prompt.empty()) {
        throw UsageError("give either --tasks or --prompt, not both");
    }
    if (!o.tasks_file.empty()) {
        tasks = agent::load_tasks(o.tasks_file);
    } else if (!o.prompt.empty()) {
        agent::TaskSpec t{o.task_id, o.prompt, agent::difficulty_from_string(o.difficulty), std::nullopt};
        if (!o.gold.empty()) {
            t.gold_table = catalog::TableRef(o.gold);
        }
        tasks.push_back(t);
    } else {
        throw UsageError("run needs --tasks FILE or --prompt TEXT");
    }
    if (!o.only.empty()) {
        std::set<std::string> keep(o.only.begin(), o.only.end());
        std::erase_if(tasks, [&](const agent::TaskSpec& t) { return !keep.contains(t.id); });
    }
    if (c.max_iters < 1) {
        throw UsageError("--max-iters must be at least 1");
    }
    if (c.workers < 1) {
        throw UsageError("--workers must be at least 1");
    }

    agent::AgentConfig base;
    base.mode = agent::mode_from_string(o.mode);
    base.max_iters = c.max_iters;
    base.modules = prompting::parse_module_list(o.modules);
    base.workspace = c.workspace;
    base.data_dir = c.data_dir;
    base.output_dir = c.output_dir;
    base.timeout_s = c.timeout_s;

    std::optional<MockScripts> mocks;
    std::shared_ptr<llm::ChatProvider> remote;
    auto settings = c.provider;
    if (settings.family == "mock") {
        if (o.mock_script.empty()) {
            throw UsageError("--provider mock needs --mock-script FILE");
        }
        mocks.emplace(o.mock_script);
        base.model_config = c.model_config.empty() ? "mock" : c.model_config;
    } else {
        if (settings.model.empty()) {
            throw UsageError("provider " + settings.family + " needs a model (--model or STATVIZ_MODEL)");
        }
        auto key_var = settings.family == "anthropic" ? "ANTHROPIC_API_KEY" : "OPENAI_API_KEY";
        settings.api_key = env.get("STATVIZ_API_KEY").value_or(env.get(key_var).value_or(""));
        remote = llm::make_provider(settings, transport_for(env));
        base.model_config = c.model_config.empty() ? settings.family + ":" + settings.model : c.model_config;
    }
    base.provider_info = {{"family", settings.family},
                          {"endpoint", settings.endpoint},
                          {"model", settings.model},
                          {"temperature", settings.temperature ? json(*settings.temperature) : json("provider default")},
                          {"max_tokens", settings.max_tokens},
                          {"images", settings.images}};

    auto index = retrieval::RetrievalIndex::load(resolve(c, c.index_dir));
    auto embedder = make_embedder(c, env);

    sandbox::SubprocessExecutor::Options harness{c.python, resolve(c, c.harness_script), 5};
    auto selection = sandbox::select_executor(harness, c.allow_stub);
    bool use_stub = selection.executor->name() == "stub";
    if (use_stub) {
        err << "harness unavailable (" << selection.report.diagnostic << "); using the stub executor\n";
    } else if (!selection.report.diagnostic.empty()) {
        err << "harness: " << selection.report.diagnostic << "\n";
    }

    std::mutex io;
    std::atomic<std::size_t> next{0};
    std::atomic<int> internal_errors{0};
    auto output_dir = resolve(c, c.output_dir);

    auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
            const auto& task = tasks[i];
            try {
                auto run_id = agent::make_run_id(base.model_config, base.mode, task.id);
                auto manifest = output_dir / run_id / "manifest.json";
                if (!o.force && fs::exists(manifest)) {
                    auto prior = agent::load_run(output_dir / run_id);
                    std::lock_guard lock(io);
                    out << fmt::format("{}\t{}\tskipped (already recorded)\n", run_id, agent::to_string(prior.status));
                    continue;
                }
                std::unique_ptr<sandbox::CodeExecutor> executor;
                if (use_stub) {
                    executor = std::make_unique<sandbox::StubExecutor>();
                } else {
                    executor = std::make_unique<sandbox::SubprocessExecutor>(harness);
                }
                agent::RunDeps deps;
                deps.index = &index;
                deps.embedder = embedder.get();
                deps.chat = mocks ? mocks->for_task(task.id, settings.images) : remote;
                deps.executor = executor.get();
                auto record = agent::run_task(task, base, run_id, deps);
                std::lock_guard lock(io);
                out << fmt::format("{}\t{}\t{}\n", run_id, agent::to_string(record.status),
                                   record.failure_reason.empty() ? "-" : record.failure_reason);
            } catch (const std::exception& e) {
                ++internal_errors;
                std::lock_guard lock(io);
                err << fmt::format("task {}: {}\n", task.id, e.what());
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        auto n = std::min<std::size_t>(static_cast<std::size_t>(c.workers), std::max<std::size_t>(tasks.size(), 1));
        for (std::size_t w = 0; w < n; ++w) {
            pool.emplace_back(worker);
        }
    }
    return internal_errors > 0 ? 2 : 0;
}

int cmd_grade(const Config& c, bool force, std::ostream& out) {
    auto output_dir = resolve(c, c.output_dir);
    if (!fs::is_directory(output_dir)) {
        throw NotFoundError("no output directory at " + output_dir.string());
    }
    std::vector<fs::path> runs;
    for (const auto& entry : fs::directory_iterator(output_dir)) {
        if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) {
            runs.push_back(entry.path());
        }
    }
    std::sort(runs.begin(), runs.end());
    for (const auto& run : runs) {
        out << eval::emit_grade_form(run, resolve(c, c.grades_dir), force).string() << "\n";
    }
    out << fmt::format("{} grade forms in {}\n", runs.size(), resolve(c, c.grades_dir).string());
    return 0;
}

int cmd_report(const Config& c, const std::string& tasks_file, bool by_difficulty, const std::string& format,
               std::ostream& out) {
    auto fmt_kind = eval::report_format_from_string(format);
    auto tasks = agent::load_tasks(tasks_file);
    auto sheets = eval::ingest_directory(resolve(c, c.grades_dir));
    if (sheets.empty()) {
        throw UsageError("no grade sheets in " + resolve(c, c.grades_dir).string());
    }
    out << eval::render_report(eval::aggregate(sheets, tasks, by_difficulty), fmt_kind);
    return 0;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const Environment& env) {
    CLI::App app{"statviz: retrieve official statistics tables, generate charts with an LLM agent, grade the results", "statviz"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "statviz 0.1.0");

    std::string config_file;
    app.add_option("--config", config_file, "JSON config file (default: $STATVIZ_CONFIG, then ./statviz.json)");

    // Flag values land in optionals so they override the config only when given.
    std::optional<std::string> workspace, data_dir, index_dir, output_dir, grades_dir, embedder, provider, model,
        endpoint, model_config, odata_base;
    std::optional<int> max_iters, workers, page_size;
    std::optional<double> timeout_s;
    bool allow_stub = false;
    app.add_option("--workspace", workspace, "Base directory for relative paths");
    app.add_option("--data-dir", data_dir, "Materialized datasets");
    app.add_option("--index-dir", index_dir, "Retrieval index");
    app.add_option("--output-dir", output_dir, "Run directories");
    app.add_option("--grades-dir", grades_dir, "Grade forms and sheets");
    app.add_option("--embedder", embedder, "hash | precomputed | http");

    auto* fetch = app.add_subcommand("fetch", "Download tables from the OData feed and write csv + metadata");
    std::vector<std::string> refs;
    bool no_cache = false;
    fetch->add_option("refs", refs, "Table ids (space or comma separated)")->required();
    fetch->add_option("--odata-base", odata_base, "Feed base URL");
    fetch->add_option("--page-size", page_size, "Rows per request");
    fetch->add_flag("--no-cache", no_cache, "Bypass the response cache");

    auto* index = app.add_subcommand("index", "Embed every materialized table and save the index");

    auto* retrieve = app.add_subcommand("retrieve", "Rank tables for a prompt");
    std::string prompt;
    int k = 5;
    retrieve->add_option("prompt", prompt, "Natural-language question")->required();
    retrieve->add_option("--k", k, "Number of results")->capture_default_str();

    auto* run_cmd = app.add_subcommand("run", "Run tasks through the zero-shot or agentic pipeline");
    RunOptions ro;
    run_cmd->add_option("--tasks", ro.tasks_file, "Task suite (tsv)");
    run_cmd->add_option("--prompt", ro.prompt, "Single ad-hoc prompt");
    run_cmd->add_option("--task-id", ro.task_id, "Id for --prompt")->capture_default_str();
    run_cmd->add_option("--difficulty", ro.difficulty, "Difficulty for --prompt")->capture_default_str();
    run_cmd->add_option("--gold", ro.gold, "Gold table for --prompt");
    run_cmd->add_option("--only", ro.only, "Run only these task ids");
    run_cmd->add_option("--mode", ro.mode, "zero_shot | agentic")->capture_default_str();
    run_cmd->add_option("--modules", ro.modules, "Comma-separated prompt modules, or none")->capture_default_str();
    run_cmd->add_option("--max-iters", max_iters, "Agent turn budget");
    run_cmd->add_option("--timeout", timeout_s, "Per-execution timeout (s)");
    run_cmd->add_option("--workers", workers, "Parallel tasks");
    run_cmd->add_option("--provider", provider, "mock | openai | anthropic");
    run_cmd->add_option("--model", model, "Provider model name");
    run_cmd->add_option("--endpoint", endpoint, "Provider endpoint URL");
    run_cmd->add_option("--model-config", model_config, "Label used in grades and reports");
    run_cmd->add_option("--mock-script", ro.mock_script, "Scripted turns for --provider mock");
    run_cmd->add_flag("--force", ro.force, "Rerun tasks that already have a run record");
    run_cmd->add_flag("--allow-stub", allow_stub, "Use the stub executor if the Python harness is unavailable");

    auto* grade = app.add_subcommand("grade", "Write a blank grade form for every recorded run");
    bool force_forms = false;
    grade->add_flag("--force", force_forms, "Overwrite existing forms");

    auto* report = app.add_subcommand("report", "Aggregate filled grade sheets");
    std::string report_tasks;
    bool by_difficulty = false;
    std::string format = "text-table";
    report->add_option("--tasks", report_tasks, "Task suite giving each task's difficulty")->required();
    report->add_flag("--by-difficulty", by_difficulty, "Add a per-difficulty breakdown");
    report->add_option("--format", format, "text-table | csv")->capture_default_str();

    std::vector<std::string> argv(args.rbegin(), args.rend());
    try {
        app.parse(argv);
    } catch (const CLI::ParseError& e) {
        std::ostringstream o, er;
        int code = app.exit(e, o, er);
        out << o.str();
        err << er.str();
        return code == 0 ? 0 : 1;
    }

    try {
        Config c;
        fs::path cfg_path = !config_file.empty() ? fs::path(config_file)
                                                 : fs::path(env.get("STATVIZ_CONFIG").value_or("statviz.json"));
        if (!config_file.empty() || env.get("STATVIZ_CONFIG") || fs::exists(cfg_path)) {
            if (!fs::exists(cfg_path)) {
                throw UsageError("config file not found: " + cfg_path.string());
            }
            try {
                apply_json(c, json::parse(util::read_file(cfg_path)));
            } catch (const json::exception& e) {
                throw UsageError(fmt::format("bad config file {}: {}", cfg_path.string(), e.what()));
            }
        }
        apply_env(c, env);
        if (workspace) c.workspace = *workspace;
        if (data_dir) c.data_dir = *data_dir;
        if (index_dir) c.index_dir = *index_dir;
        if (output_dir) c.output_dir = *output_dir;
        if (grades_dir) c.grades_dir = *grades_dir;
        if (embedder) c.embedder = *embedder;
        if (odata_base) c.odata_base = *odata_base;
        if (page_size) c.page_size = *page_size;
        if (provider) c.provider.family = *provider;
        if (model) c.provider.model = *model;
        if (endpoint) c.provider.endpoint = *endpoint;
        if (model_config) c.model_config = *model_config;
        if (max_iters) c.max_iters = *max_iters;
        if (timeout_s) c.timeout_s = *timeout_s;
        if (workers) c.workers = *workers;
        if (allow_stub) c.allow_stub = true;
        c.workspace = fs::absolute(c.workspace);

        if (*fetch) return cmd_fetch(c, env, refs, no_cache, out);
        if (*index) return cmd_index(c, env, out);
        if (*retrieve) return cmd_retrieve(c, env, prompt, k, out);
        if (*run_cmd) return cmd_run(c, env, ro, out, err);
        if (*grade) return cmd_grade(c, force_forms, out);
        if (*report) return cmd_report(c, report_tasks, by_difficulty, format, out);
        return 1;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return 2;
    }
}

} // namespace statviz::cli
