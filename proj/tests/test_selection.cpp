#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <map>

#include "instspec/evolution.hpp"
#include "instspec/selection.hpp"

using namespace instspec;

namespace {

AnyKey obpp_key(int cap, double ratio) {
    return ObppSubclassKey{500, WeightDistribution::Uniform, SequenceType::Random, cap,
                           ratio};
}

// A 5x5 pool over (capacity, ratio) with a distinct program per entry.
HeuristicPool grid_pool() {
    HeuristicPool pool;
    pool.kind = ProblemKind::Obpp;
    int i = 0;
    for (int cap : {50, 100, 150, 200, 250}) {
        for (int r : {3, 4, 5, 6, 7}) {
            const AnyKey key = obpp_key(cap, r / 10.0);
            const HeuristicProgram program = make_program(
                ProblemKind::Obpp,
                make_binary(BinaryOp::Sub, make_var(ProblemKind::Obpp, "item"),
                            make_const(static_cast<double>(i))));
            pool.entries.emplace(key, PoolEntry{key, program.text, program.id,
                                                -20.0 - i, -19.0 - i, "evolved",
                                                describe_subclass(key)});
            ++i;
        }
    }
    const auto keys = pool_keys(pool);
    pool.stats = compute_feature_stats(keys);
    return pool;
}

}  // namespace

TEST_CASE("preselect returns the nearest keys in order") {
    const HeuristicPool pool = grid_pool();

    // A target equal to a pool key comes back first at distance zero.
    const AnyKey target = obpp_key(150, 0.5);
    const CandidateSet hits = preselect(feature_vector(target), pool, 3);
    REQUIRE(hits.size() == 3);
    CHECK(subclass_id(hits[0].key) == subclass_id(target));
    CHECK(hits[0].distance == 0.0);
    for (std::size_t i = 1; i < hits.size(); ++i) {
        CHECK(hits[i].distance >= hits[i - 1].distance);
    }

    // k_c = pool size returns everything sorted; larger k_c clips.
    const CandidateSet all = preselect(feature_vector(target), pool, 25);
    CHECK(all.size() == 25);
    const CandidateSet clipped = preselect(feature_vector(target), pool, 100);
    CHECK(clipped.size() == 25);

    CHECK_THROWS_AS(preselect(feature_vector(target), pool, 0), std::invalid_argument);
    CHECK_THROWS_AS(preselect(feature_vector(target), HeuristicPool{}, 1),
                    std::invalid_argument);
}

TEST_CASE("preselect is independent of entry insertion order") {
    const HeuristicPool pool = grid_pool();
    HeuristicPool reversed;
    reversed.kind = pool.kind;
    reversed.stats = pool.stats;
    std::vector<PoolEntry> entries;
    for (const auto& [key, entry] : pool.entries) entries.push_back(entry);
    for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
        reversed.entries.emplace(it->key, *it);
    }

    const FeatureVector target = feature_vector(obpp_key(120, 0.45));
    const CandidateSet a = preselect(target, pool, 6);
    const CandidateSet b = preselect(target, reversed, 6);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(subclass_id(a[i].key) == subclass_id(b[i].key));
        CHECK(a[i].distance == b[i].distance);
    }
}

TEST_CASE("preselect depends on keys, never on program contents") {
    HeuristicPool pool = grid_pool();
    const FeatureVector target = feature_vector(obpp_key(120, 0.45));
    const CandidateSet before = preselect(target, pool, 5);

    // Rewrite every program in the pool; the candidate keys cannot move.
    const HeuristicProgram bf = builtin("best_fit");
    for (auto& [key, entry] : pool.entries) {
        entry.program_text = bf.text;
        entry.program_id = bf.id;
    }
    const CandidateSet after = preselect(target, pool, 5);
    REQUIRE(before.size() == after.size());
    for (std::size_t i = 0; i < before.size(); ++i) {
        CHECK(subclass_id(before[i].key) == subclass_id(after[i].key));
        CHECK(before[i].distance == after[i].distance);
    }
}

TEST_CASE("select_closest: zero-distance identity, stable head, tie break") {
    const HeuristicPool pool = grid_pool();

    for (int cap : {50, 100, 150, 200, 250}) {
        for (int r : {3, 4, 5, 6, 7}) {
            const AnyKey key = obpp_key(cap, r / 10.0);
            const CandidateSet candidates = preselect(feature_vector(key), pool, 3);
            const SelectionOutcome outcome = select_closest(candidates);
            CHECK(subclass_id(outcome.chosen_key) == subclass_id(key));
            CHECK(outcome.queries_used == 0);
        }
    }

    // The head never changes as k_c grows.
    const FeatureVector target = feature_vector(obpp_key(120, 0.45));
    const std::string head =
        subclass_id(select_closest(preselect(target, pool, 1)).chosen_key);
    for (int k : {2, 5, 10, 25}) {
        CHECK(subclass_id(select_closest(preselect(target, pool, k)).chosen_key) == head);
    }

    // Equidistant neighbors break ties toward the lexicographically smaller
    // key: capacity 100 sits exactly between 50 and 150.
    const FeatureVector between = feature_vector(obpp_key(100, 0.45));
    const CandidateSet near = preselect(between, pool, 4);
    CHECK(std::get<ObppSubclassKey>(near[0].key).capacity <=
          std::get<ObppSubclassKey>(near[1].key).capacity);

    CHECK_THROWS_AS(select_closest(CandidateSet{}), std::invalid_argument);
}

TEST_CASE("select_random is uniform over distinct ids and seeded") {
    const HeuristicPool pool = grid_pool();
    const CandidateSet candidates =
        preselect(feature_vector(obpp_key(150, 0.5)), pool, 5);

    Rng rng(11);
    std::map<std::string, int> counts;
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) {
        counts[select_random(candidates, rng).chosen_id] += 1;
    }
    REQUIRE(counts.size() == 5);
    double chi2 = 0.0;
    const double expected = draws / 5.0;
    for (const auto& [id, count] : counts) {
        chi2 += (count - expected) * (count - expected) / expected;
    }
    CHECK(chi2 < 13.277);  // chi-square 0.99 quantile, 4 dof

    Rng a(5);
    Rng b(5);
    for (int i = 0; i < 100; ++i) {
        CHECK(select_random(candidates, a).chosen_id ==
              select_random(candidates, b).chosen_id);
    }

    const CandidateSet single(candidates.begin(), candidates.begin() + 1);
    CHECK(select_random(single, rng).chosen_id == single[0].heuristic_id);

    // Containment holds for every strategy outcome.
    for (int i = 0; i < 100; ++i) {
        const SelectionOutcome outcome = select_random(candidates, rng);
        bool found = false;
        for (const Candidate& c : candidates) {
            if (c.heuristic_id == outcome.chosen_id) found = true;
        }
        CHECK(found);
    }
}

TEST_CASE("select_llm follows the mock and counts queries") {
    const HeuristicPool pool = grid_pool();
    const FeatureVector target = feature_vector(obpp_key(150, 0.5));
    const CandidateSet candidates = preselect(target, pool, 3);

    MockLlm mock(0);
    const SelectionOutcome outcome =
        select_llm(candidates, target, pool.kind, mock, 3);
    CHECK(outcome.chosen_id == candidates[0].heuristic_id);  // mock picks 1
    CHECK(outcome.queries_used == 1);
    CHECK_FALSE(outcome.fallback);

    // Permanent parse failure: retries, then falls back to closest.
    MockLlm broken(1, 0.9999);
    const SelectionOutcome fallback =
        select_llm(candidates, target, pool.kind, broken, 3);
    CHECK(fallback.fallback);
    CHECK(fallback.queries_used == 3);
    CHECK(fallback.chosen_id == select_closest(candidates).chosen_id);

    // Transport failure: immediate fallback, no queries counted.
    struct DeadClient : LlmClient {
        ChatResult complete(std::span<const ChatMessage>) override {
            return ChatResult{false, "", {}, "unreachable"};
        }
        std::string identity() const override { return "dead"; }
    };
    DeadClient dead;
    const SelectionOutcome transport =
        select_llm(candidates, target, pool.kind, dead, 3);
    CHECK(transport.fallback);
    CHECK(transport.queries_used == 0);
}

TEST_CASE("select_llm retry statistics under injected faults") {
    const HeuristicPool pool = grid_pool();
    MockLlm faulty(2, 0.1);
    double total_queries = 0.0;
    const int trials = 1000;
    for (int i = 0; i < trials; ++i) {
        // Distinct target features per selection so mock fates vary.
        FeatureVector target = feature_vector(obpp_key(60 + i % 190, 0.35));
        target[4] += 0.001 * static_cast<double>(i);
        const CandidateSet candidates = preselect(target, pool, 3);
        const SelectionOutcome outcome =
            select_llm(candidates, target, pool.kind, faulty, 3);
        total_queries += outcome.queries_used;
    }
    const double mean = total_queries / trials;
    CHECK(mean > 1.02);
    CHECK(mean < 1.25);
}

TEST_CASE("declared-feature cross check flags large mismatches") {
    const ObppSubclassKey key{500, WeightDistribution::Uniform, SequenceType::Random,
                              100, 0.5};
    const ObppInstance honest = generate_obpp_instance(key, 1);
    CHECK_FALSE(check_declared_features(honest).has_value());

    ObppInstance lying = honest;
    lying.key.capacity_ratio = 0.7;  // realized mean is near 0.5
    const auto warning = check_declared_features(lying);
    REQUIRE(warning.has_value());
    CHECK(warning->find("ratio") != std::string::npos);

    ObppInstance truncated = honest;
    truncated.items.resize(100);
    CHECK(check_declared_features(truncated).has_value());

    const CvrpInstance cvrp = generate_cvrp_instance(
        {200, LocationDistribution::Uniform, WeightDistribution::Uniform, 100, 0.5}, 2);
    CHECK_FALSE(check_declared_features(cvrp).has_value());
    CvrpInstance wrong = cvrp;
    wrong.key.num_customers = 400;
    CHECK(check_declared_features(wrong).has_value());
}
