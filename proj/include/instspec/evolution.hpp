#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "instspec/dsl.hpp"
#include "instspec/llm.hpp"
#include "instspec/pool.hpp"
#include "instspec/problems.hpp"
#include "instspec/rng.hpp"

namespace instspec {

struct EvolutionConfig {
    int population_size = 10;
    int query_budget = 800;
    int k_n = 20;
    std::uint64_t seed = 0;
    int training_instances_per_subclass = 30;
    int parse_retry_limit = 3;  // total attempts per offspring, each one query

    void validate() const;  // throws std::invalid_argument
    std::string digest() const;
};

struct QueryRecord {
    int query_index = 0;  // 1-based
    std::string operator_tag;
    std::vector<std::string> parent_ids;
    std::string response_digest;
    bool parse_ok = false;
    std::string offspring_id;
    std::optional<double> offspring_fitness;
    double best_fitness_so_far = 0.0;
};

struct EvolutionLog {
    std::vector<QueryRecord> queries;
    std::vector<double> best_trajectory;  // best-ever fitness after each query
    bool aborted = false;
    std::string abort_reason;
};

struct Population {
    std::vector<HeuristicProgram> members;  // fitness set on every member
    int generation = 0;
};

class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Counts LLM queries against the per-subclass budget and records them.
struct QueryMeter {
    int budget = 0;
    int used = 0;
    EvolutionLog* log = nullptr;
    int remaining() const { return budget - used; }
};

// Rank-weighted roulette selection without replacement: weight 1/(rank+1)
// with rank 0 = best fitness; tied fitness values share the mean weight of
// their rank span, so an all-equal population is sampled uniformly.
std::vector<HeuristicProgram> roulette_select(const Population& population, int k,
                                              Rng& rng);

// Seeds the population with the kind's baseline builtin plus N-1 proposals
// from the client (one query per attempt; after parse_retry_limit failed
// attempts a random small expression is substituted). All members are
// evaluated. Throws TransportError when the client fails at transport level.
Population init_population(const AnyKey& subclass, std::span<const AnyInstance> instances,
                           LlmClient& client, const EvolutionConfig& config,
                           QueryMeter& meter, Rng& rng);

// One offspring attempt set for the given operator: renders the prompt,
// spends up to retry_limit queries (bounded by the meter), returns the
// parsed program with lineage, or nullopt when every attempt failed.
std::optional<HeuristicProgram> evolve_step(OperatorKind op,
                                            std::span<const HeuristicProgram> parents,
                                            LlmClient& client, const AnyKey& subclass,
                                            QueryMeter& meter, int retry_limit = 3);

struct EvolutionResult {
    HeuristicProgram champion;
    double baseline_fitness = 0.0;
    EvolutionLog log;
    Population final_population;
};

// The per-subclass loop: init, then cyclic operators (E1,E2,M1,M2,M3) with
// steady-state replacement keeping the N best, until the query budget is
// exhausted. Returns the best program ever evaluated.
EvolutionResult run_evolution(const AnyKey& subclass,
                              std::span<const AnyInstance> instances, LlmClient& client,
                              const EvolutionConfig& config);

// Neighbor-search refinement for one entry: evaluates the incumbent plus the
// champions of the k_n nearest subclasses (standardized-feature distance,
// ties by lexicographic key) on this subclass's training instances and keeps
// the fittest. Candidates come from the frozen pre-NS pool so the pass is
// order-independent.
PoolEntry neighbor_search(const HeuristicPool& pre_ns_pool, const AnyKey& subclass,
                          std::span<const AnyInstance> instances, int k_n);

struct BuildOptions {
    int workers = 1;
    std::string log_dir;  // when set, one JSONL log per subclass
};

struct BuildStats {
    int max_queries = 0;   // largest per-subclass query count
    int subclasses_ok = 0;
    int subclasses_failed = 0;
};

// Full offline phase over a set of grid subclasses: evolve one champion per
// subclass, then one neighbor-search pass. Per-subclass failures leave the
// pool partial rather than failing the build. Deterministic for a fixed
// (config, client) regardless of worker count.
HeuristicPool build_pool(const std::vector<AnyKey>& subclasses,
                         const EvolutionConfig& config, LlmClient& client,
                         const BuildOptions& options = {},
                         BuildStats* stats = nullptr);

// Training instances for a subclass, with seeds derived from (master seed,
// key); shared by evolution, neighbor search, and classifier training.
std::vector<AnyInstance> training_instances(const AnyKey& subclass,
                                            const EvolutionConfig& config);

// The population's baseline builtin for a kind: best_fit or closest_priority.
HeuristicProgram baseline_builtin(ProblemKind kind);

}  // namespace instspec
