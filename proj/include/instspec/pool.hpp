#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "instspec/problems.hpp"

namespace instspec {

struct PoolEntry {
    AnyKey key;
    std::string program_text;  // canonical DSL
    std::string program_id;
    double fitness_pre_ns = 0.0;
    double fitness_post_ns = 0.0;
    std::string lineage;
    std::string description;  // subclass description
};

// The framework's central artifact: subclass -> champion heuristic, plus
// the feature statistics used by every distance computation.
struct HeuristicPool {
    static constexpr int kSchemaVersion = 1;

    ProblemKind kind = ProblemKind::Obpp;
    std::map<AnyKey, PoolEntry, AnyKeyLess> entries;
    FeatureStats stats;

    struct BuildMeta {
        std::uint64_t master_seed = 0;
        std::string config_digest;
        std::string client_identity;
        bool partial = false;
        std::vector<std::string> failed_subclasses;
    } build;
};

class PoolError : public std::runtime_error {
public:
    enum class Kind { VersionMismatch, Corrupt, BadProgram };
    PoolError(Kind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

// Canonical serialization: entries in lexicographic key order with fixed
// formatting, so equal pools produce byte-identical files. Writing is
// atomic (temp file + rename).
void save_pool(const HeuristicPool& pool, const std::string& path);
HeuristicPool load_pool(const std::string& path);

const PoolEntry* lookup(const HeuristicPool& pool, const AnyKey& key);

std::vector<AnyKey> pool_keys(const HeuristicPool& pool);

// Distinct champion ids in entry (key) order, first occurrence wins.
std::vector<std::string> distinct_heuristic_ids(const HeuristicPool& pool);

}  // namespace instspec
