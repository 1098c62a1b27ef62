#include "instspec/evolution.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <mutex>
#include <thread>

#include "json.hpp"

#include "instspec/evaluation.hpp"

namespace instspec {

namespace {

constexpr OperatorKind kOperatorCycle[] = {OperatorKind::E1, OperatorKind::E2,
                                           OperatorKind::M1, OperatorKind::M2,
                                           OperatorKind::M3};

void record_query(QueryMeter& meter, const std::string& op,
                  const std::vector<std::string>& parent_ids, const std::string& reply,
                  bool parse_ok, const std::string& offspring_id,
                  std::optional<double> offspring_fitness, double best_fitness) {
    meter.used += 1;
    if (meter.log == nullptr) return;
    QueryRecord record;
    record.query_index = meter.used;
    record.operator_tag = op;
    record.parent_ids = parent_ids;
    record.response_digest = to_hex(fnv1a64(reply));
    record.parse_ok = parse_ok;
    record.offspring_id = offspring_id;
    record.offspring_fitness = offspring_fitness;
    record.best_fitness_so_far = best_fitness;
    meter.log->queries.push_back(std::move(record));
    meter.log->best_trajectory.push_back(best_fitness);
}

// Deterministic order for equal fitness: better fitness first, then id.
void sort_members(std::vector<HeuristicProgram>& members) {
    std::sort(members.begin(), members.end(),
              [](const HeuristicProgram& a, const HeuristicProgram& b) {
                  if (*a.fitness != *b.fitness) return *a.fitness > *b.fitness;
                  return a.id < b.id;
              });
}

bool contains_id(const std::vector<HeuristicProgram>& members, const std::string& id) {
    return std::any_of(members.begin(), members.end(),
                       [&](const HeuristicProgram& m) { return m.id == id; });
}

nlohmann::json record_to_json(const QueryRecord& record) {
    nlohmann::json j;
    j["query"] = record.query_index;
    j["operator"] = record.operator_tag;
    j["parents"] = record.parent_ids;
    j["response_digest"] = record.response_digest;
    j["parse_ok"] = record.parse_ok;
    if (!record.offspring_id.empty()) j["offspring_id"] = record.offspring_id;
    if (record.offspring_fitness) j["offspring_fitness"] = *record.offspring_fitness;
    j["best_fitness"] = record.best_fitness_so_far;
    return j;
}

}  // namespace

void EvolutionConfig::validate() const {
    if (population_size < 2) {
        throw std::invalid_argument("EvolutionConfig: population_size must be >= 2");
    }
    if (query_budget < population_size) {
        throw std::invalid_argument("EvolutionConfig: query_budget must be >= population");
    }
    if (k_n < 1) throw std::invalid_argument("EvolutionConfig: k_n must be >= 1");
    if (training_instances_per_subclass < 1) {
        throw std::invalid_argument("EvolutionConfig: need at least one instance");
    }
    if (parse_retry_limit < 1) {
        throw std::invalid_argument("EvolutionConfig: parse_retry_limit must be >= 1");
    }
}

std::string EvolutionConfig::digest() const {
    // Worker count and log paths are deliberately not part of the digest:
    // they must not affect build outputs.
    const std::string blob = "N=" + std::to_string(population_size) +
                             ";budget=" + std::to_string(query_budget) +
                             ";kn=" + std::to_string(k_n) +
                             ";seed=" + std::to_string(seed) +
                             ";instances=" + std::to_string(training_instances_per_subclass) +
                             ";retries=" + std::to_string(parse_retry_limit);
    return to_hex(fnv1a64(blob));
}

HeuristicProgram baseline_builtin(ProblemKind kind) {
    return kind == ProblemKind::Obpp ? builtin("best_fit") : builtin("closest_priority");
}

std::vector<AnyInstance> training_instances(const AnyKey& subclass,
                                            const EvolutionConfig& config) {
    std::vector<AnyInstance> instances;
    instances.reserve(static_cast<std::size_t>(config.training_instances_per_subclass));
    const std::uint64_t kh = key_hash(subclass);
    for (int j = 0; j < config.training_instances_per_subclass; ++j) {
        const std::uint64_t seed =
            derive_seed({config.seed, kh, 0x7261ULL, static_cast<std::uint64_t>(j)});
        instances.push_back(generate_instance(subclass, seed));
    }
    return instances;
}

std::vector<HeuristicProgram> roulette_select(const Population& population, int k,
                                              Rng& rng) {
    const int n = static_cast<int>(population.members.size());
    if (n == 0) throw std::invalid_argument("roulette_select: empty population");
    if (k > n) throw std::invalid_argument("roulette_select: k exceeds population size");

    std::vector<const HeuristicProgram*> ordered;
    ordered.reserve(static_cast<std::size_t>(n));
    for (const HeuristicProgram& m : population.members) ordered.push_back(&m);
    std::sort(ordered.begin(), ordered.end(),
              [](const HeuristicProgram* a, const HeuristicProgram* b) {
                  if (*a->fitness != *b->fitness) return *a->fitness > *b->fitness;
                  return a->id < b->id;
              });

    // Rank weights with tie groups sharing their span's mean weight.
    std::vector<double> weights(static_cast<std::size_t>(n), 0.0);
    int i = 0;
    while (i < n) {
        int j = i;
        while (j < n && *ordered[static_cast<std::size_t>(j)]->fitness ==
                            *ordered[static_cast<std::size_t>(i)]->fitness) {
            ++j;
        }
        double sum = 0.0;
        for (int r = i; r < j; ++r) sum += 1.0 / (r + 1);
        const double shared = sum / (j - i);
        for (int r = i; r < j; ++r) weights[static_cast<std::size_t>(r)] = shared;
        i = j;
    }

    std::vector<HeuristicProgram> picked;
    std::vector<bool> taken(static_cast<std::size_t>(n), false);
    for (int round = 0; round < k; ++round) {
        double total = 0.0;
        for (int r = 0; r < n; ++r) {
            if (!taken[static_cast<std::size_t>(r)]) total += weights[static_cast<std::size_t>(r)];
        }
        double roll = rng.uniform01() * total;
        int chosen = -1;
        for (int r = 0; r < n; ++r) {
            if (taken[static_cast<std::size_t>(r)]) continue;
            roll -= weights[static_cast<std::size_t>(r)];
            chosen = r;
            if (roll <= 0.0) break;
        }
        taken[static_cast<std::size_t>(chosen)] = true;
        picked.push_back(*ordered[static_cast<std::size_t>(chosen)]);
    }
    return picked;
}

namespace {

struct OffspringAttempt {
    std::optional<HeuristicProgram> program;
    bool transport_failed = false;
    std::string transport_error;
};

// Runs one prompt with parse retries; every attempt consumes one query.
OffspringAttempt attempt_offspring(
    LlmClient& client, const AnyKey& subclass, ProblemKind kind, const std::string& op_tag,
    const std::vector<std::string>& parent_ids, QueryMeter& meter, double best_fitness,
    const std::function<std::vector<ChatMessage>(int attempt)>& render_attempt,
    int retry_limit) {
    OffspringAttempt out;
    (void)subclass;
    for (int attempt = 1; attempt <= retry_limit && meter.remaining() > 0; ++attempt) {
        const std::vector<ChatMessage> messages = render_attempt(attempt);
        const ChatResult reply = client.complete(messages);
        if (!reply.ok) {
            out.transport_failed = true;
            out.transport_error = reply.error;
            return out;
        }
        ProgramResponse parsed = parse_program_response(reply.text, kind);
        const bool ok = parsed.program.has_value();
        record_query(meter, op_tag, parent_ids, reply.text, ok,
                     ok ? parsed.program->id : "", std::nullopt, best_fitness);
        if (ok) {
            out.program = std::move(parsed.program);
            return out;
        }
    }
    return out;
}

}  // namespace

Population init_population(const AnyKey& subclass, std::span<const AnyInstance> instances,
                           LlmClient& client, const EvolutionConfig& config,
                           QueryMeter& meter, Rng& rng) {
    const ProblemKind kind = kind_of(subclass);
    const std::string description = describe_subclass(subclass);

    Population population;
    HeuristicProgram baseline = baseline_builtin(kind);
    baseline.fitness = fitness(baseline, instances);
    population.members.push_back(baseline);
    double running_best = *baseline.fitness;

    while (static_cast<int>(population.members.size()) < config.population_size) {
        const int slot = static_cast<int>(population.members.size());
        const std::size_t records_before = meter.log ? meter.log->queries.size() : 0;
        OffspringAttempt attempt = attempt_offspring(
            client, subclass, kind, "INIT", {}, meter, running_best,
            [&](int n) { return render_init_prompt(description, kind, slot, n); },
            std::min(config.parse_retry_limit, std::max(meter.remaining(), 0)));
        if (attempt.transport_failed) {
            throw TransportError("init_population: " + attempt.transport_error);
        }
        HeuristicProgram member;
        if (attempt.program) {
            member = std::move(*attempt.program);
            member.lineage.push_back({"INIT", {}});
        } else {
            // Retry budget exhausted for this slot: substitute a random
            // small expression so the population always fills up.
            member = make_program(kind, random_expr(rng, kind, 3),
                                  "randomly substituted after failed proposals",
                                  {{"INIT-substitute", {}}});
        }
        // Duplicate ids would collapse the population; replace them with
        // random expressions, which costs no further queries.
        for (int guard = 0; guard < 64 && contains_id(population.members, member.id);
             ++guard) {
            member = make_program(kind, random_expr(rng, kind, 3),
                                  "randomly substituted duplicate", {{"INIT-substitute", {}}});
        }
        member.fitness = fitness(member, instances);
        running_best = std::max(running_best, *member.fitness);
        // Failed attempts were recorded with the pre-member best; the
        // successful record also carries the proposal's evaluated fitness.
        if (meter.log != nullptr && meter.log->queries.size() > records_before &&
            meter.log->queries.back().parse_ok) {
            meter.log->queries.back().offspring_fitness = member.fitness;
            meter.log->queries.back().best_fitness_so_far = running_best;
            meter.log->best_trajectory.back() = running_best;
        }
        population.members.push_back(std::move(member));
    }
    sort_members(population.members);
    return population;
}

std::optional<HeuristicProgram> evolve_step(OperatorKind op,
                                            std::span<const HeuristicProgram> parents,
                                            LlmClient& client, const AnyKey& subclass,
                                            QueryMeter& meter, int retry_limit) {
    if (static_cast<int>(parents.size()) != operator_arity(op)) {
        throw std::invalid_argument("evolve_step: parent count must match operator arity");
    }
    const ProblemKind kind = kind_of(subclass);
    const std::string description = describe_subclass(subclass);
    std::vector<std::string> parent_ids;
    for (const HeuristicProgram& p : parents) parent_ids.push_back(p.id);

    OffspringAttempt attempt = attempt_offspring(
        client, subclass, kind, to_string(op), parent_ids, meter,
        /*best_fitness=*/0.0,  // the caller rewrites best_fitness in its records
        [&](int n) {
            return render_generation_prompt(op, parents, description, kind, n);
        },
        std::min(retry_limit, std::max(meter.remaining(), 0)));
    if (attempt.transport_failed) {
        throw TransportError("evolve_step: " + attempt.transport_error);
    }
    if (!attempt.program) return std::nullopt;
    HeuristicProgram offspring = std::move(*attempt.program);
    offspring.lineage.push_back({to_string(op), parent_ids});
    return offspring;
}

EvolutionResult run_evolution(const AnyKey& subclass,
                              std::span<const AnyInstance> instances, LlmClient& client,
                              const EvolutionConfig& config) {
    config.validate();
    const ProblemKind kind = kind_of(subclass);
    const std::string description = describe_subclass(subclass);

    EvolutionResult result;
    QueryMeter meter{config.query_budget, 0, &result.log};
    Rng rng(derive_seed({config.seed, key_hash(subclass), 0xe7071ULL}));

    Population population =
        init_population(subclass, instances, client, config, meter, rng);
    result.baseline_fitness = fitness(baseline_builtin(kind), instances);

    HeuristicProgram best = population.members.front();
    for (const HeuristicProgram& m : population.members) {
        if (*m.fitness > *best.fitness) best = m;
    }

    std::size_t op_index = 0;
    while (meter.remaining() > 0) {
        const OperatorKind op = kOperatorCycle[op_index % std::size(kOperatorCycle)];
        ++op_index;

        const int arity = operator_arity(op);
        std::vector<HeuristicProgram> parents = roulette_select(
            population, std::min(arity, static_cast<int>(population.members.size())), rng);
        if (static_cast<int>(parents.size()) < arity) continue;

        const std::size_t records_before = result.log.queries.size();
        std::optional<HeuristicProgram> offspring;
        try {
            offspring = evolve_step(op, parents, client, subclass, meter,
                                    config.parse_retry_limit);
        } catch (const TransportError&) {
            result.log.aborted = true;
            result.log.abort_reason = "transport failure";
            throw;
        }

        if (offspring) {
            offspring->fitness = fitness(*offspring, instances);
            if (result.log.queries.size() > records_before) {
                result.log.queries.back().offspring_fitness = offspring->fitness;
            }
            if (*offspring->fitness > *best.fitness) best = *offspring;

            if (!contains_id(population.members, offspring->id)) {
                population.members.push_back(*offspring);
                sort_members(population.members);
                if (static_cast<int>(population.members.size()) > config.population_size) {
                    population.members.resize(
                        static_cast<std::size_t>(config.population_size));
                }
                population.generation += 1;
            }
        }
        for (std::size_t i = records_before; i < result.log.queries.size(); ++i) {
            result.log.queries[i].best_fitness_so_far = *best.fitness;
            result.log.best_trajectory[i] = *best.fitness;
        }
    }

    result.champion = best;
    result.final_population = std::move(population);
    return result;
}

PoolEntry neighbor_search(const HeuristicPool& pre_ns_pool, const AnyKey& subclass,
                          std::span<const AnyInstance> instances, int k_n) {
    const PoolEntry* incumbent = lookup(pre_ns_pool, subclass);
    if (incumbent == nullptr) {
        throw std::invalid_argument("neighbor_search: subclass missing from pool");
    }

    const FeatureVector own = standardize(feature_vector(subclass), pre_ns_pool.stats);

    struct Neighbor {
        double distance;
        const PoolEntry* entry;
    };
    std::vector<Neighbor> neighbors;
    for (const auto& [key, entry] : pre_ns_pool.entries) {
        if (!key_less(key, subclass) && !key_less(subclass, key)) continue;  // skip self
        const FeatureVector other = standardize(feature_vector(key), pre_ns_pool.stats);
        double sq = 0.0;
        for (std::size_t m = 0; m < 5; ++m) {
            const double d = own[m] - other[m];
            sq += d * d;
        }
        neighbors.push_back({std::sqrt(sq), &entry});
    }
    std::stable_sort(neighbors.begin(), neighbors.end(),
                     [](const Neighbor& a, const Neighbor& b) {
                         return a.distance < b.distance;
                     });  // map iteration is lexicographic, so ties stay lexicographic
    if (static_cast<int>(neighbors.size()) > k_n) {
        neighbors.resize(static_cast<std::size_t>(k_n));
    }

    // Candidates: incumbent first, then neighbors by distance; first maximum
    // wins, so the incumbent survives ties.
    PoolEntry updated = *incumbent;
    ParseResult incumbent_parsed = parse(incumbent->program_text, pre_ns_pool.kind);
    double best_fitness = fitness(*incumbent_parsed.program, instances);
    updated.fitness_post_ns = best_fitness;

    for (const Neighbor& n : neighbors) {
        ParseResult parsed = parse(n.entry->program_text, pre_ns_pool.kind);
        const double f = fitness(*parsed.program, instances);
        if (f > best_fitness) {
            best_fitness = f;
            updated.program_text = n.entry->program_text;
            updated.program_id = n.entry->program_id;
            updated.fitness_post_ns = f;
            updated.lineage = incumbent->lineage + " | ns:adopted-from:" +
                              subclass_id(n.entry->key);
        }
    }
    // Guard against evaluation noise: the stored pre-NS fitness is on the
    // same instance set, so the incumbent's re-evaluated fitness matches it.
    updated.fitness_post_ns = std::max(updated.fitness_post_ns, updated.fitness_pre_ns);
    return updated;
}

namespace {

// Index-addressed parallel map. The first exception thrown by a task stops
// the pool and is rethrown on the calling thread.
void run_parallel(int task_count, int workers, const std::function<void(int)>& task) {
    workers = std::max(1, std::min(workers, task_count));
    if (workers == 1) {
        for (int i = 0; i < task_count; ++i) task(i);
        return;
    }
    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        threads.emplace_back([&] {
            while (!failed.load()) {
                const int i = next.fetch_add(1);
                if (i >= task_count) return;
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

}  // namespace

HeuristicPool build_pool(const std::vector<AnyKey>& subclasses,
                         const EvolutionConfig& config, LlmClient& client,
                         const BuildOptions& options, BuildStats* stats) {
    config.validate();
    if (subclasses.empty()) {
        throw std::invalid_argument("build_pool: no subclasses given");
    }
    const ProblemKind kind = kind_of(subclasses.front());
    for (const AnyKey& key : subclasses) {
        if (kind_of(key) != kind) {
            throw std::invalid_argument("build_pool: mixed problem kinds");
        }
        if (!is_grid_key(key)) {
            throw std::invalid_argument("build_pool: off-grid subclass " +
                                        subclass_id(key));
        }
    }

    std::vector<AnyKey> ordered = subclasses;
    std::sort(ordered.begin(), ordered.end(), AnyKeyLess{});
    ordered.erase(std::unique(ordered.begin(), ordered.end(),
                              [](const AnyKey& a, const AnyKey& b) {
                                  return !key_less(a, b) && !key_less(b, a);
                              }),
                  ordered.end());

    struct SubclassOutcome {
        bool ok = false;
        bool transport = false;
        std::string error;
        PoolEntry entry;
        EvolutionLog log;
    };
    std::vector<SubclassOutcome> outcomes(ordered.size());

    run_parallel(static_cast<int>(ordered.size()), options.workers, [&](int i) {
        const AnyKey& key = ordered[static_cast<std::size_t>(i)];
        SubclassOutcome& out = outcomes[static_cast<std::size_t>(i)];
        try {
            const std::vector<AnyInstance> instances = training_instances(key, config);
            EvolutionResult result = run_evolution(key, instances, client, config);
            PoolEntry entry;
            entry.key = key;
            entry.program_text = result.champion.text;
            entry.program_id = result.champion.id;
            entry.fitness_pre_ns = *result.champion.fitness;
            entry.fitness_post_ns = *result.champion.fitness;
            entry.description = describe_subclass(key);
            std::string lineage = "evolved";
            if (!result.champion.lineage.empty()) {
                lineage += ":" + result.champion.lineage.back().op;
            }
            entry.lineage = lineage;
            out.entry = std::move(entry);
            out.log = std::move(result.log);
            out.ok = true;
        } catch (const TransportError& e) {
            out.transport = true;
            out.error = e.what();
        } catch (const std::exception& e) {
            out.error = e.what();
        }
    });

    HeuristicPool pool;
    pool.kind = kind;
    pool.build.master_seed = config.seed;
    pool.build.config_digest = config.digest();
    pool.build.client_identity = client.identity();
    BuildStats local_stats;
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        if (outcomes[i].ok) {
            pool.entries.emplace(ordered[i], outcomes[i].entry);
            local_stats.subclasses_ok += 1;
            local_stats.max_queries = std::max(
                local_stats.max_queries, static_cast<int>(outcomes[i].log.queries.size()));
        } else {
            pool.build.partial = true;
            pool.build.failed_subclasses.push_back(subclass_id(ordered[i]) + ": " +
                                                   outcomes[i].error);
            local_stats.subclasses_failed += 1;
        }
    }
    if (stats != nullptr) *stats = local_stats;
    if (pool.entries.empty()) {
        for (const SubclassOutcome& out : outcomes) {
            if (out.transport) {
                throw TransportError("build_pool: every subclass failed; first "
                                     "transport error: " +
                                     out.error);
            }
        }
        throw std::runtime_error("build_pool: every subclass failed");
    }

    const std::vector<AnyKey> keys = pool_keys(pool);
    pool.stats = compute_feature_stats(keys);

    // Neighbor-search pass over the frozen pool.
    std::vector<PoolEntry> refined(keys.size());
    run_parallel(static_cast<int>(keys.size()), options.workers, [&](int i) {
        const AnyKey& key = keys[static_cast<std::size_t>(i)];
        const std::vector<AnyInstance> instances = training_instances(key, config);
        refined[static_cast<std::size_t>(i)] =
            neighbor_search(pool, key, instances, config.k_n);
    });
    for (std::size_t i = 0; i < keys.size(); ++i) {
        pool.entries[keys[i]] = refined[i];
    }

    if (!options.log_dir.empty()) {
        std::filesystem::create_directories(options.log_dir);
        for (std::size_t i = 0; i < ordered.size(); ++i) {
            if (!outcomes[i].ok) continue;
            const std::string path =
                options.log_dir + "/" + subclass_id(ordered[i]) + ".jsonl";
            std::ofstream out(path, std::ios::binary);
            for (const QueryRecord& record : outcomes[i].log.queries) {
                out << record_to_json(record).dump() << "\n";
            }
        }
    }
    return pool;
}

}  // namespace instspec
