#include "instspec/cli.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "instspec/classifier.hpp"
#include "instspec/evaluation.hpp"
#include "instspec/evolution.hpp"
#include "instspec/llm.hpp"
#include "instspec/pool.hpp"
#include "instspec/selection.hpp"

namespace instspec {

namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;
constexpr int kExitTransport = 4;
constexpr int kExitPartial = 5;

struct LlmFlags {
    bool mock = false;
    std::uint64_t mock_seed = 0;
    double mock_failure_rate = 0.0;
    std::string base_url;
    std::string model_name;
    double temperature = 1.0;
    double timeout_s = 60.0;
    int transport_retries = 3;
    std::string transcript;

    void attach(CLI::App* cmd) {
        cmd->add_flag("--mock", mock, "Use the deterministic offline mock client");
        cmd->add_option("--mock-seed", mock_seed, "Mock client seed");
        cmd->add_option("--mock-failure-rate", mock_failure_rate,
                        "Probability of an unparsable mock reply")
            ->check(CLI::Range(0.0, 0.999));
        cmd->add_option("--base-url", base_url,
                        "Chat-completions base URL (default: INSTSPEC_LLM_BASE_URL)");
        cmd->add_option("--model-name", model_name,
                        "Model name (default: INSTSPEC_LLM_MODEL)");
        cmd->add_option("--temperature", temperature, "Sampling temperature");
        cmd->add_option("--timeout", timeout_s, "HTTP timeout in seconds");
        cmd->add_option("--transport-retries", transport_retries,
                        "Transport-level retry count");
        cmd->add_option("--transcript", transcript,
                        "Append raw exchanges to this JSONL file (secrets redacted)");
    }

    std::unique_ptr<LlmClient> make_client() const {
        if (mock) return std::make_unique<MockLlm>(mock_seed, mock_failure_rate);
        LlmConfig config = LlmConfig::from_env();
        if (!base_url.empty()) config.base_url = base_url;
        if (!model_name.empty()) config.model_name = model_name;
        config.temperature = temperature;
        config.timeout_s = timeout_s;
        config.max_transport_retries = transport_retries;
        config.transcript_path = transcript;
        return std::make_unique<HttpLlmClient>(config);
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["mock"] = mock;
        if (mock) {
            j["mock_seed"] = mock_seed;
            j["mock_failure_rate"] = mock_failure_rate;
        } else {
            j["base_url"] = base_url;
            j["model_name"] = model_name;
            j["temperature"] = temperature;
            j["timeout_s"] = timeout_s;
            j["transport_retries"] = transport_retries;
        }
        return j;
    }
};

// Every invocation leaves a manifest next to its primary output.
struct Manifest {
    nlohmann::json body;
    std::string path;
    std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

    void finish(int exit_code) {
        if (path.empty()) return;
        const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - started);
        body["duration_ms"] = elapsed.count();
        body["exit_code"] = exit_code;
        std::error_code ec;
        const fs::path parent = fs::path(path).parent_path();
        if (!parent.empty()) fs::create_directories(parent, ec);
        std::ofstream out(path, std::ios::binary);
        if (out) out << body.dump(2) << "\n";
    }
};

std::string csv_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        out += c;
    }
    out += "\"";
    return out;
}

std::vector<AnyKey> grid_keys(ProblemKind kind) {
    std::vector<AnyKey> keys;
    if (kind == ProblemKind::Obpp) {
        for (const auto& k : enumerate_obpp_subclasses()) keys.emplace_back(k);
    } else {
        for (const auto& k : enumerate_cvrp_subclasses()) keys.emplace_back(k);
    }
    return keys;
}

// Index-addressed parallel map; the first task exception is rethrown here.
void run_parallel_indexed(int count, int workers, const std::function<void(int)>& task) {
    workers = std::max(1, std::min(workers, count));
    if (workers == 1) {
        for (int i = 0; i < count; ++i) task(i);
        return;
    }
    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w) {
        threads.emplace_back([&] {
            while (!failed.load()) {
                const int i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    task(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    failed.store(true);
                    return;
                }
            }
        });
    }
    for (std::thread& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

// --- subclasses ---------------------------------------------------------------

struct SubclassesOptions {
    std::string kind;
    std::string out;
};

int cmd_subclasses(const SubclassesOptions& options, Manifest& manifest) {
    const ProblemKind kind = problem_kind_from_string(options.kind);
    std::ostringstream csv;
    csv << "subclass_id,feature_1,feature_2,feature_3,feature_4,feature_5,description\n";
    int rows = 0;
    for (const AnyKey& key : grid_keys(kind)) {
        const FeatureVector fv = feature_vector(key);
        csv << subclass_id(key);
        for (double v : fv) {
            char buf[64];
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
            (void)ec;
            csv << "," << std::string(buf, ptr);
        }
        csv << "," << csv_quote(describe_subclass(key)) << "\n";
        ++rows;
    }
    std::ofstream out(options.out, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + options.out);
    out << csv.str();
    std::cout << "wrote " << rows << " subclasses to " << options.out << "\n";
    manifest.body["rows"] = rows;
    return kExitOk;
}

// --- generate -----------------------------------------------------------------

struct GenerateOptions {
    std::string kind;
    std::string key;
    bool all = false;
    int count = 30;
    std::uint64_t seed = 0;
    std::string out_dir;
};

int cmd_generate(const GenerateOptions& options, Manifest& manifest) {
    const ProblemKind kind = problem_kind_from_string(options.kind);
    std::vector<AnyKey> keys;
    if (options.all) {
        keys = grid_keys(kind);
    } else {
        if (options.key.empty()) {
            throw std::invalid_argument("generate: provide --key or --all");
        }
        AnyKey key = parse_key_string(kind, options.key);
        if (!is_grid_key(key)) {
            std::cerr << "warning: " << subclass_id(key)
                      << " is off the enumeration grid; generating anyway\n";
        }
        keys.push_back(std::move(key));
    }

    fs::create_directories(options.out_dir);
    int written = 0;
    for (const AnyKey& key : keys) {
        const std::uint64_t kh = key_hash(key);
        for (int j = 0; j < options.count; ++j) {
            const std::uint64_t seed =
                derive_seed({options.seed, kh, 0x7261ULL, static_cast<std::uint64_t>(j)});
            const AnyInstance instance = generate_instance(key, seed);
            const std::string path =
                options.out_dir + "/" + instance_id(instance) + ".json";
            write_instance_file(instance, path);
            ++written;
        }
    }
    std::cout << "wrote " << written << " instances to " << options.out_dir << "\n";
    manifest.body["instances_written"] = written;
    return kExitOk;
}

// --- build --------------------------------------------------------------------

struct BuildOptionsCli {
    std::string kind;
    int subset = 0;
    std::string out;
    std::string log_dir;
    int workers = 1;
    std::uint64_t seed = 0;
    int population = 10;
    int budget = 800;
    int k_n = 20;
    int instances = 30;
    int retry_limit = 3;
    LlmFlags llm;
};

int cmd_build(const BuildOptionsCli& options, Manifest& manifest) {
    const ProblemKind kind = problem_kind_from_string(options.kind);
    std::vector<AnyKey> keys = grid_keys(kind);
    if (options.subset > 0 && options.subset < static_cast<int>(keys.size())) {
        keys.resize(static_cast<std::size_t>(options.subset));
    }

    EvolutionConfig config;
    config.population_size = options.population;
    config.query_budget = options.budget;
    config.k_n = options.k_n;
    config.seed = options.seed;
    config.training_instances_per_subclass = options.instances;
    config.parse_retry_limit = options.retry_limit;
    config.validate();

    const std::unique_ptr<LlmClient> client = options.llm.make_client();
    BuildOptions build_options;
    build_options.workers = options.workers;
    build_options.log_dir = options.log_dir;

    BuildStats stats;
    const HeuristicPool pool = build_pool(keys, config, *client, build_options, &stats);
    save_pool(pool, options.out);

    int ns_improved = 0;
    for (const auto& [key, entry] : pool.entries) {
        if (entry.fitness_post_ns > entry.fitness_pre_ns) ++ns_improved;
    }
    std::cout << "pool: " << pool.entries.size() << " entries, ns improved "
              << ns_improved << ", max queries/subclass " << stats.max_queries << "/"
              << config.query_budget << ", partial="
              << (pool.build.partial ? "yes" : "no") << " -> " << options.out << "\n";
    manifest.body["entries"] = pool.entries.size();
    manifest.body["ns_improved"] = ns_improved;
    manifest.body["max_queries_per_subclass"] = stats.max_queries;
    manifest.body["partial"] = pool.build.partial;
    manifest.body["config_digest"] = pool.build.config_digest;
    return pool.build.partial ? kExitPartial : kExitOk;
}

// --- shared selection/evaluation plumbing --------------------------------------

struct StrategyOptions {
    std::string strategy = "closest";
    int k_c = 0;  // 0: resolve from the per-kind defaults below
    int retry_limit = 3;
    std::uint64_t seed = 0;
    std::string model_path;
    LlmFlags llm;
};

// Default candidate counts per kind and strategy; overridable via --kc.
int default_k_c(ProblemKind kind, const std::string& strategy) {
    if (strategy == "classifier") return kind == ProblemKind::Obpp ? 5 : 2;
    if (strategy == "llm") return kind == ProblemKind::Obpp ? 3 : 2;
    return 3;
}

struct Router {
    const HeuristicPool& pool;
    const StrategyOptions& options;
    int k_c;
    std::unique_ptr<LlmClient> client;        // llm strategy only
    std::optional<ClassifierModel> model;     // classifier strategy only

    Router(const HeuristicPool& p, const StrategyOptions& o) : pool(p), options(o) {
        k_c = options.k_c > 0 ? options.k_c : default_k_c(pool.kind, options.strategy);
        if (options.strategy == "llm") client = options.llm.make_client();
        if (options.strategy == "classifier") {
            if (options.model_path.empty()) {
                throw std::invalid_argument("classifier strategy requires --model");
            }
            model = load_classifier(options.model_path);
        }
    }

    SelectionOutcome route(const FeatureVector& features, Rng& rng) const {
        const CandidateSet candidates = preselect(features, pool, k_c);
        if (options.strategy == "random") return select_random(candidates, rng);
        if (options.strategy == "closest") return select_closest(candidates);
        if (options.strategy == "llm") {
            return select_llm(candidates, features, pool.kind, *client,
                              options.retry_limit);
        }
        if (options.strategy == "classifier") {
            return select_classifier(*model, candidates,
                                     standardize(features, pool.stats));
        }
        throw std::invalid_argument("unknown strategy: " + options.strategy);
    }
};

struct References {
    std::map<std::string, double> by_id;

    static References load(const std::string& path) {
        References refs;
        if (path.empty()) return refs;
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open reference file: " + path);
        nlohmann::json j;
        in >> j;
        for (auto it = j.begin(); it != j.end(); ++it) {
            refs.by_id[it.key()] = it.value().get<double>();
        }
        return refs;
    }

    std::optional<double> reference_for(const AnyInstance& instance) const {
        if (std::holds_alternative<ObppInstance>(instance)) {
            return obpp_lower_bound(std::get<ObppInstance>(instance));
        }
        const auto it = by_id.find(instance_id(instance));
        if (it != by_id.end()) return it->second;
        const auto& cvrp = std::get<CvrpInstance>(instance);
        if (cvrp.customers.size() <= 8) return brute_force_cvrp(cvrp);
        return std::nullopt;  // gap unavailable
    }
};

HeuristicProgram program_for(const HeuristicPool& pool, const std::string& text) {
    ParseResult parsed = parse(text, pool.kind);
    if (!parsed.ok()) {
        throw std::runtime_error("pool program failed to parse: " + parsed.error.message);
    }
    return std::move(*parsed.program);
}

nlohmann::json outcome_to_json(const SelectionOutcome& outcome) {
    nlohmann::json j;
    j["chosen_id"] = outcome.chosen_id;
    j["chosen_subclass"] = subclass_id(outcome.chosen_key);
    j["strategy"] = outcome.strategy;
    j["queries_used"] = outcome.queries_used;
    j["fallback"] = outcome.fallback;
    nlohmann::json cands = nlohmann::json::array();
    for (const Candidate& c : outcome.candidates) {
        cands.push_back({{"subclass", subclass_id(c.key)},
                         {"heuristic_id", c.heuristic_id},
                         {"distance", c.distance}});
    }
    j["candidates"] = std::move(cands);
    return j;
}

// --- select -------------------------------------------------------------------

struct SelectOptions {
    std::string pool_path;
    std::string instance_path;
    std::string refs_path;
    StrategyOptions strategy;
};

int cmd_select(const SelectOptions& options, Manifest& manifest) {
    const HeuristicPool pool = load_pool(options.pool_path);
    const AnyInstance instance = read_instance_file(options.instance_path);
    if (kind_of(instance) != pool.kind) {
        throw std::invalid_argument("instance kind does not match pool kind");
    }
    if (const auto warning = check_declared_features(instance)) {
        std::cerr << "warning: " << *warning << "\n";
    }

    const Router router(pool, options.strategy);
    Rng rng(options.strategy.seed);
    const SelectionOutcome outcome = router.route(feature_vector(key_of(instance)), rng);
    const HeuristicProgram program = program_for(pool, outcome.program_text);

    const References refs = References::load(options.refs_path);
    const double obj = objective(instance, program);
    const std::optional<double> ref = refs.reference_for(instance);

    nlohmann::json j = outcome_to_json(outcome);
    j["instance"] = instance_id(instance);
    j["objective"] = obj;
    if (ref) {
        j["reference"] = *ref;
        j["gap_percent"] = optimality_gap(obj, *ref);
    }
    std::cout << j.dump(2) << "\n";
    manifest.body["result"] = std::move(j);
    return kExitOk;
}

// --- evaluate -----------------------------------------------------------------

struct EvaluateOptions {
    std::string pool_path;
    std::string instances_dir;
    std::string refs_path;
    std::string group_by;
    std::string out;
    int workers = 1;
    StrategyOptions strategy;
};

int cmd_evaluate(const EvaluateOptions& options, Manifest& manifest) {
    const HeuristicPool pool = load_pool(options.pool_path);
    const Router router(pool, options.strategy);
    const References refs = References::load(options.refs_path);
    const HeuristicProgram baseline = baseline_builtin(pool.kind);

    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(options.instances_dir)) {
        const std::string name = entry.path().filename().string();
        if (entry.path().extension() == ".json" &&
            name.find("manifest") == std::string::npos) {
            files.push_back(entry.path().string());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        throw std::invalid_argument("no instance files in " + options.instances_dir);
    }

    struct PerInstance {
        ReportRow row;
        ReportRow baseline_row;
        int queries_used = 0;
        bool fallback = false;
        std::string chosen_id;
    };
    std::vector<PerInstance> results(files.size());

    run_parallel_indexed(static_cast<int>(files.size()), options.workers, [&](int i) {
        const AnyInstance instance = read_instance_file(files[static_cast<std::size_t>(i)]);
        if (kind_of(instance) != pool.kind) {
            throw std::invalid_argument("instance kind does not match pool kind: " +
                                        files[static_cast<std::size_t>(i)]);
        }
        // Independent per-instance stream: worker count cannot reorder draws.
        Rng rng(derive_seed({options.strategy.seed, static_cast<std::uint64_t>(i)}));
        const SelectionOutcome outcome =
            router.route(feature_vector(key_of(instance)), rng);
        const HeuristicProgram program = program_for(pool, outcome.program_text);

        PerInstance& out = results[static_cast<std::size_t>(i)];
        out.queries_used = outcome.queries_used;
        out.fallback = outcome.fallback;
        out.chosen_id = outcome.chosen_id;

        const std::optional<double> ref = refs.reference_for(instance);
        out.row.instance_id = instance_id(instance);
        out.row.kind = pool.kind;
        out.row.features = feature_vector(key_of(instance));
        out.row.objective = objective(instance, program);
        out.row.reference = ref;
        if (ref) out.row.gap_percent = optimality_gap(out.row.objective, *ref);

        out.baseline_row = out.row;
        out.baseline_row.objective = objective(instance, baseline);
        if (ref) {
            out.baseline_row.gap_percent = optimality_gap(out.baseline_row.objective, *ref);
        } else {
            out.baseline_row.gap_percent.reset();
        }
    });

    std::vector<ReportRow> rows;
    std::vector<ReportRow> baseline_rows;
    double queries_total = 0.0;
    int fallbacks = 0;
    for (const PerInstance& r : results) {
        rows.push_back(r.row);
        baseline_rows.push_back(r.baseline_row);
        queries_total += r.queries_used;
        fallbacks += r.fallback ? 1 : 0;
    }

    // Aggregate table: grouped when requested, otherwise one "all" row.
    struct OutRow {
        std::string group;
        std::string feature_value;
        FeatureGroupRow main;
        FeatureGroupRow base;
    };
    std::vector<OutRow> table;
    const auto summarize = [](std::span<const ReportRow> span) {
        FeatureGroupRow g;
        g.count = static_cast<int>(span.size());
        double obj = 0.0, gap = 0.0;
        int gaps = 0;
        for (const ReportRow& row : span) {
            obj += row.objective;
            if (row.gap_percent) {
                gap += *row.gap_percent;
                ++gaps;
            }
        }
        g.mean_obj = obj / static_cast<double>(span.size());
        if (gaps > 0) {
            g.mean_gap = gap / gaps;
            g.one_minus_gap = 1.0 - *g.mean_gap / 100.0;
        }
        return g;
    };

    if (options.group_by.empty()) {
        table.push_back({"all", "", summarize(rows), summarize(baseline_rows)});
    } else {
        const auto grouped = aggregate_by_feature(rows, pool.kind, options.group_by);
        const auto grouped_base =
            aggregate_by_feature(baseline_rows, pool.kind, options.group_by);
        for (std::size_t g = 0; g < grouped.size(); ++g) {
            char buf[64];
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf),
                                           grouped[g].feature_value);
            (void)ec;
            table.push_back({options.group_by, std::string(buf, ptr), grouped[g],
                             grouped_base[g]});
        }
    }

    std::ostringstream csv;
    csv << "group,feature_value,mean_obj,mean_gap,one_minus_gap,baseline_mean_obj,"
           "baseline_mean_gap\n";
    csv.precision(6);
    csv << std::fixed;
    const auto emit_opt = [&](const std::optional<double>& v) {
        if (v) csv << *v;
    };
    for (const OutRow& row : table) {
        csv << row.group << "," << row.feature_value << "," << row.main.mean_obj << ",";
        emit_opt(row.main.mean_gap);
        csv << ",";
        emit_opt(row.main.one_minus_gap);
        csv << "," << row.base.mean_obj << ",";
        emit_opt(row.base.mean_gap);
        csv << "\n";
    }
    std::ofstream csv_out(options.out + ".csv", std::ios::binary);
    if (!csv_out) throw std::runtime_error("cannot write " + options.out + ".csv");
    csv_out << csv.str();

    nlohmann::json j;
    nlohmann::json groups = nlohmann::json::array();
    for (const OutRow& row : table) {
        nlohmann::json gj;
        gj["group"] = row.group;
        gj["feature_value"] = row.feature_value;
        gj["count"] = row.main.count;
        gj["mean_obj"] = row.main.mean_obj;
        if (row.main.mean_gap) gj["mean_gap"] = *row.main.mean_gap;
        if (row.main.one_minus_gap) gj["one_minus_gap"] = *row.main.one_minus_gap;
        gj["baseline_mean_obj"] = row.base.mean_obj;
        if (row.base.mean_gap) gj["baseline_mean_gap"] = *row.base.mean_gap;
        groups.push_back(std::move(gj));
    }
    j["groups"] = std::move(groups);
    nlohmann::json per_instance = nlohmann::json::array();
    for (const PerInstance& r : results) {
        nlohmann::json rj;
        rj["instance"] = r.row.instance_id;
        rj["chosen_id"] = r.chosen_id;
        rj["objective"] = r.row.objective;
        if (r.row.reference) rj["reference"] = *r.row.reference;
        if (r.row.gap_percent) rj["gap_percent"] = *r.row.gap_percent;
        rj["baseline_objective"] = r.baseline_row.objective;
        rj["queries_used"] = r.queries_used;
        per_instance.push_back(std::move(rj));
    }
    j["per_instance"] = std::move(per_instance);
    j["summary"] = {{"instances", files.size()},
                    {"mean_queries", queries_total / static_cast<double>(files.size())},
                    {"fallbacks", fallbacks}};
    std::ofstream json_out(options.out + ".json", std::ios::binary);
    json_out << j.dump(2) << "\n";

    std::cout << csv.str();
    manifest.body["instances"] = files.size();
    manifest.body["out_csv"] = options.out + ".csv";
    manifest.body["out_json"] = options.out + ".json";
    return kExitOk;
}

// --- train-classifier -----------------------------------------------------------

struct TrainClassifierOptions {
    std::string pool_path;
    std::string out;
    int epochs = 200;
    int batch_size = 32;
    double learning_rate = 0.05;
    std::uint64_t seed = 0;
    int per_subclass = 1;
};

int cmd_train_classifier(const TrainClassifierOptions& options, Manifest& manifest) {
    const HeuristicPool pool = load_pool(options.pool_path);
    const std::vector<std::string> ids = distinct_heuristic_ids(pool);

    std::vector<TrainSample> dataset;
    for (const auto& [key, entry] : pool.entries) {
        const FeatureVector fv = standardize(feature_vector(key), pool.stats);
        for (int m = 0; m < options.per_subclass; ++m) {
            dataset.push_back({fv, entry.program_id});
        }
    }

    TrainConfig config;
    config.epochs = options.epochs;
    config.batch_size = options.batch_size;
    config.learning_rate = options.learning_rate;
    config.seed = options.seed;

    const TrainResult result = train_classifier(dataset, config, ids);
    save_classifier(result.model, options.out);

    nlohmann::json j;
    j["classes"] = ids.size();
    j["samples"] = dataset.size();
    j["epochs"] = options.epochs;
    j["initial_loss"] = result.loss_per_epoch.front();
    j["final_loss"] = result.loss_per_epoch.back();
    std::cout << j.dump(2) << "\n";
    manifest.body["training"] = std::move(j);
    manifest.body["loss_per_epoch"] = result.loss_per_epoch;
    return kExitOk;
}

void attach_strategy(CLI::App* cmd, StrategyOptions& options) {
    cmd->add_option("--strategy", options.strategy,
                    "Selection strategy: random|closest|llm|classifier")
        ->check(CLI::IsMember({"random", "closest", "llm", "classifier"}));
    cmd->add_option("--kc", options.k_c,
                    "Pre-selection candidate count (default per kind/strategy)");
    cmd->add_option("--retry-limit", options.retry_limit,
                    "LLM selection parse-retry limit");
    cmd->add_option("--seed", options.seed, "Seed for the random strategy");
    cmd->add_option("--model", options.model_path, "Classifier model file");
    options.llm.attach(cmd);
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Instance-specific hyper-heuristic pipeline"};
    app.require_subcommand(1);
    app.footer("Environment: INSTSPEC_LLM_BASE_URL, INSTSPEC_LLM_MODEL, "
               "INSTSPEC_LLM_API_KEY (bearer token for the HTTP client).");

    SubclassesOptions subclasses_options;
    auto* subclasses_cmd =
        app.add_subcommand("subclasses", "List the subclass grid as CSV");
    subclasses_cmd->add_option("--kind", subclasses_options.kind, "obpp or cvrp")
        ->required();
    subclasses_cmd->add_option("--out", subclasses_options.out, "Output CSV path")
        ->required();

    GenerateOptions generate_options;
    auto* generate_cmd =
        app.add_subcommand("generate", "Write seeded instance files");
    generate_cmd->add_option("--kind", generate_options.kind, "obpp or cvrp")->required();
    generate_cmd->add_option("--key", generate_options.key,
                             "Subclass key, e.g. \"500,uniform,random,100,0.5\"");
    generate_cmd->add_flag("--all", generate_options.all, "Generate for the whole grid");
    generate_cmd->add_option("--n", generate_options.count, "Instances per subclass");
    generate_cmd->add_option("--seed", generate_options.seed, "Master seed");
    generate_cmd->add_option("--out-dir", generate_options.out_dir, "Output directory")
        ->required();

    BuildOptionsCli build_options;
    auto* build_cmd = app.add_subcommand(
        "build", "Evolve one heuristic per subclass and run neighbor search");
    build_cmd->add_option("--kind", build_options.kind, "obpp or cvrp")->required();
    build_cmd->add_option("--subset", build_options.subset,
                          "Build only the first N grid subclasses");
    build_cmd->add_option("--out", build_options.out, "Pool output path")->required();
    build_cmd->add_option("--log-dir", build_options.log_dir,
                          "Per-subclass JSONL evolution logs");
    build_cmd->add_option("--workers", build_options.workers, "Parallel workers");
    build_cmd->add_option("--seed", build_options.seed, "Master seed");
    build_cmd->add_option("--population", build_options.population, "Population size");
    build_cmd->add_option("--budget", build_options.budget, "LLM query budget per subclass");
    build_cmd->add_option("--kn", build_options.k_n, "Neighbor-search size");
    build_cmd->add_option("--instances", build_options.instances,
                          "Training instances per subclass");
    build_cmd->add_option("--retry-limit", build_options.retry_limit,
                          "Parse-retry limit per offspring");
    build_options.llm.attach(build_cmd);

    SelectOptions select_options;
    auto* select_cmd = app.add_subcommand(
        "select", "Route one instance to a pool heuristic and solve it");
    select_cmd->add_option("--pool", select_options.pool_path, "Pool file")->required();
    select_cmd->add_option("--instance", select_options.instance_path, "Instance file")
        ->required();
    select_cmd->add_option("--refs", select_options.refs_path,
                           "Reference objectives JSON (instance id -> objective)");
    attach_strategy(select_cmd, select_options.strategy);

    EvaluateOptions evaluate_options;
    auto* evaluate_cmd = app.add_subcommand(
        "evaluate", "Batch selection + solving + gap report");
    evaluate_cmd->add_option("--pool", evaluate_options.pool_path, "Pool file")->required();
    evaluate_cmd->add_option("--instances", evaluate_options.instances_dir,
                             "Directory of instance files")
        ->required();
    evaluate_cmd->add_option("--refs", evaluate_options.refs_path,
                             "Reference objectives JSON");
    evaluate_cmd->add_option("--group-by", evaluate_options.group_by,
                             "Feature dimension for aggregation");
    evaluate_cmd->add_option("--out", evaluate_options.out,
                             "Report path prefix (.csv and .json)")
        ->required();
    evaluate_cmd->add_option("--workers", evaluate_options.workers, "Parallel workers");
    attach_strategy(evaluate_cmd, evaluate_options.strategy);

    TrainClassifierOptions train_options;
    auto* train_cmd = app.add_subcommand(
        "train-classifier", "Train the routing classifier from a pool");
    train_cmd->add_option("--pool", train_options.pool_path, "Pool file")->required();
    train_cmd->add_option("--out", train_options.out, "Model output path")->required();
    train_cmd->add_option("--epochs", train_options.epochs, "Training epochs");
    train_cmd->add_option("--batch", train_options.batch_size, "Mini-batch size");
    train_cmd->add_option("--lr", train_options.learning_rate, "Learning rate");
    train_cmd->add_option("--seed", train_options.seed, "Init/shuffle seed");
    train_cmd->add_option("--per-subclass", train_options.per_subclass,
                          "Dataset rows per subclass");

    nlohmann::json args = nlohmann::json::array();
    for (int i = 0; i < argc; ++i) args.push_back(argv[i]);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        if (code == 0) return kExitOk;  // --help / --version
        Manifest manifest;
        manifest.path = "instspec-manifest.json";
        manifest.body["argv"] = std::move(args);
        manifest.body["command"] = "(usage error)";
        manifest.finish(kExitUsage);
        return kExitUsage;
    }

    Manifest manifest;
    manifest.body["argv"] = std::move(args);

    int code = kExitOk;
    try {
        if (subclasses_cmd->parsed()) {
            manifest.path = subclasses_options.out + ".manifest.json";
            manifest.body["command"] = "subclasses";
            manifest.body["options"] = {{"kind", subclasses_options.kind},
                                        {"out", subclasses_options.out}};
            code = cmd_subclasses(subclasses_options, manifest);
        } else if (generate_cmd->parsed()) {
            manifest.path = generate_options.out_dir + "/manifest.json";
            manifest.body["command"] = "generate";
            manifest.body["options"] = {{"kind", generate_options.kind},
                                        {"key", generate_options.key},
                                        {"all", generate_options.all},
                                        {"n", generate_options.count},
                                        {"seed", generate_options.seed},
                                        {"out_dir", generate_options.out_dir}};
            code = cmd_generate(generate_options, manifest);
        } else if (build_cmd->parsed()) {
            manifest.path = build_options.out + ".manifest.json";
            manifest.body["command"] = "build";
            manifest.body["options"] = {{"kind", build_options.kind},
                                        {"subset", build_options.subset},
                                        {"out", build_options.out},
                                        {"workers", build_options.workers},
                                        {"seed", build_options.seed},
                                        {"population", build_options.population},
                                        {"budget", build_options.budget},
                                        {"kn", build_options.k_n},
                                        {"instances", build_options.instances},
                                        {"retry_limit", build_options.retry_limit},
                                        {"llm", build_options.llm.to_json()}};
            code = cmd_build(build_options, manifest);
        } else if (select_cmd->parsed()) {
            manifest.path = select_options.instance_path + ".select-manifest.json";
            manifest.body["command"] = "select";
            manifest.body["options"] = {{"pool", select_options.pool_path},
                                        {"instance", select_options.instance_path},
                                        {"strategy", select_options.strategy.strategy},
                                        {"kc", select_options.strategy.k_c},
                                        {"retry_limit", select_options.strategy.retry_limit},
                                        {"seed", select_options.strategy.seed},
                                        {"model", select_options.strategy.model_path},
                                        {"llm", select_options.strategy.llm.to_json()}};
            code = cmd_select(select_options, manifest);
        } else if (evaluate_cmd->parsed()) {
            manifest.path = evaluate_options.out + ".manifest.json";
            manifest.body["command"] = "evaluate";
            manifest.body["options"] = {{"pool", evaluate_options.pool_path},
                                        {"instances", evaluate_options.instances_dir},
                                        {"group_by", evaluate_options.group_by},
                                        {"out", evaluate_options.out},
                                        {"workers", evaluate_options.workers},
                                        {"strategy", evaluate_options.strategy.strategy},
                                        {"kc", evaluate_options.strategy.k_c},
                                        {"retry_limit", evaluate_options.strategy.retry_limit},
                                        {"seed", evaluate_options.strategy.seed},
                                        {"model", evaluate_options.strategy.model_path},
                                        {"llm", evaluate_options.strategy.llm.to_json()}};
            code = cmd_evaluate(evaluate_options, manifest);
        } else if (train_cmd->parsed()) {
            manifest.path = train_options.out + ".manifest.json";
            manifest.body["command"] = "train-classifier";
            manifest.body["options"] = {{"pool", train_options.pool_path},
                                        {"out", train_options.out},
                                        {"epochs", train_options.epochs},
                                        {"batch", train_options.batch_size},
                                        {"lr", train_options.learning_rate},
                                        {"seed", train_options.seed},
                                        {"per_subclass", train_options.per_subclass}};
            code = cmd_train_classifier(train_options, manifest);
        }
    } catch (const TransportError& e) {
        std::cerr << "transport error: " << e.what() << "\n";
        code = kExitTransport;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        code = kExitValidation;
    }
    manifest.finish(code);
    return code;
}

}  // namespace instspec
