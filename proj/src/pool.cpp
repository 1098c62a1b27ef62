#include "instspec/pool.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "instspec/dsl.hpp"

namespace instspec {

namespace {

nlohmann::json entry_to_json(const PoolEntry& entry) {
    nlohmann::json j;
    j["key"] = key_to_json(entry.key);
    j["program"] = entry.program_text;
    j["program_id"] = entry.program_id;
    j["fitness_pre_ns"] = entry.fitness_pre_ns;
    j["fitness_post_ns"] = entry.fitness_post_ns;
    j["lineage"] = entry.lineage;
    j["description"] = entry.description;
    return j;
}

}  // namespace

void save_pool(const HeuristicPool& pool, const std::string& path) {
    nlohmann::json j;
    j["schema_version"] = HeuristicPool::kSchemaVersion;
    j["kind"] = to_string(pool.kind);
    j["build"] = {{"master_seed", pool.build.master_seed},
                  {"config_digest", pool.build.config_digest},
                  {"client", pool.build.client_identity},
                  {"partial", pool.build.partial},
                  {"failed_subclasses", pool.build.failed_subclasses}};
    j["stats"] = {{"mean", pool.stats.mean}, {"std", pool.stats.stddev}};
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [key, entry] : pool.entries) {  // map order = lexicographic
        entries.push_back(entry_to_json(entry));
    }
    j["entries"] = std::move(entries);

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open for writing: " + tmp);
        out << j.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path);
}

HeuristicPool load_pool(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PoolError(PoolError::Kind::Corrupt, "cannot open pool file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw PoolError(PoolError::Kind::Corrupt,
                        std::string("pool file is not valid JSON: ") + e.what());
    }

    HeuristicPool pool;
    try {
        const int version = j.at("schema_version").get<int>();
        if (version != HeuristicPool::kSchemaVersion) {
            throw PoolError(PoolError::Kind::VersionMismatch,
                            "unsupported pool schema version " + std::to_string(version));
        }
        pool.kind = problem_kind_from_string(j.at("kind").get<std::string>());
        const auto& build = j.at("build");
        pool.build.master_seed = build.at("master_seed").get<std::uint64_t>();
        pool.build.config_digest = build.at("config_digest").get<std::string>();
        pool.build.client_identity = build.at("client").get<std::string>();
        pool.build.partial = build.at("partial").get<bool>();
        pool.build.failed_subclasses =
            build.at("failed_subclasses").get<std::vector<std::string>>();
        const auto& stats = j.at("stats");
        for (std::size_t m = 0; m < 5; ++m) {
            pool.stats.mean[m] = stats.at("mean").at(m).get<double>();
            pool.stats.stddev[m] = stats.at("std").at(m).get<double>();
        }
        for (const auto& ej : j.at("entries")) {
            PoolEntry entry;
            entry.key = key_from_json(pool.kind, ej.at("key"));
            entry.program_text = ej.at("program").get<std::string>();
            entry.program_id = ej.at("program_id").get<std::string>();
            entry.fitness_pre_ns = ej.at("fitness_pre_ns").get<double>();
            entry.fitness_post_ns = ej.at("fitness_post_ns").get<double>();
            entry.lineage = ej.at("lineage").get<std::string>();
            entry.description = ej.at("description").get<std::string>();

            ParseResult parsed = parse(entry.program_text, pool.kind);
            if (!parsed.ok()) {
                throw PoolError(PoolError::Kind::BadProgram,
                                "entry " + subclass_id(entry.key) +
                                    " holds an unparsable program: " +
                                    parsed.error.message);
            }
            if (parsed.program->id != entry.program_id) {
                throw PoolError(PoolError::Kind::BadProgram,
                                "entry " + subclass_id(entry.key) +
                                    " has a program_id that does not match its text");
            }
            if (entry.fitness_post_ns < entry.fitness_pre_ns) {
                throw PoolError(PoolError::Kind::Corrupt,
                                "entry " + subclass_id(entry.key) +
                                    " violates fitness_post_ns >= fitness_pre_ns");
            }
            pool.entries.emplace(entry.key, std::move(entry));
        }
    } catch (const PoolError&) {
        throw;
    } catch (const std::exception& e) {
        throw PoolError(PoolError::Kind::Corrupt,
                        std::string("malformed pool file: ") + e.what());
    }
    return pool;
}

const PoolEntry* lookup(const HeuristicPool& pool, const AnyKey& key) {
    auto it = pool.entries.find(key);
    return it == pool.entries.end() ? nullptr : &it->second;
}

std::vector<AnyKey> pool_keys(const HeuristicPool& pool) {
    std::vector<AnyKey> keys;
    keys.reserve(pool.entries.size());
    for (const auto& [key, entry] : pool.entries) keys.push_back(key);
    return keys;
}

std::vector<std::string> distinct_heuristic_ids(const HeuristicPool& pool) {
    std::vector<std::string> ids;
    for (const auto& [key, entry] : pool.entries) {
        if (std::find(ids.begin(), ids.end(), entry.program_id) == ids.end()) {
            ids.push_back(entry.program_id);
        }
    }
    return ids;
}

}  // namespace instspec
