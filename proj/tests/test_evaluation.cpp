#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "instspec/evaluation.hpp"
#include "instspec/rng.hpp"

using namespace instspec;

namespace {

ObppInstance obpp_fixture(int capacity, std::vector<int> items) {
    ObppInstance inst;
    inst.capacity = capacity;
    inst.items = std::move(items);
    inst.key = {static_cast<int>(inst.items.size()), WeightDistribution::Uniform,
                SequenceType::Random, capacity, 0.5};
    inst.seed = 0;
    return inst;
}

// Independent reference implementations of the classical baselines. These
// never consult the DSL path they are checking.
struct DirectBestFit {
    static ObppSolution run(const ObppInstance& inst) {
        ObppSolution s;
        std::vector<int> remaining;
        for (int item : inst.items) {
            int best = -1;
            for (std::size_t b = 0; b < remaining.size(); ++b) {
                if (remaining[b] < item) continue;
                if (best < 0 || remaining[b] < remaining[static_cast<std::size_t>(best)]) {
                    best = static_cast<int>(b);
                }
            }
            if (best < 0) {
                remaining.push_back(inst.capacity - item);
                best = static_cast<int>(remaining.size()) - 1;
            } else {
                remaining[static_cast<std::size_t>(best)] -= item;
            }
            s.assignments.push_back(best);
        }
        s.bin_count = static_cast<int>(remaining.size());
        for (int r : remaining) s.loads.push_back(inst.capacity - r);
        return s;
    }
};

struct DirectFirstFit {
    static ObppSolution run(const ObppInstance& inst) {
        ObppSolution s;
        std::vector<int> remaining;
        for (int item : inst.items) {
            int chosen = -1;
            for (std::size_t b = 0; b < remaining.size(); ++b) {
                if (remaining[b] >= item) {
                    chosen = static_cast<int>(b);
                    break;
                }
            }
            if (chosen < 0) {
                remaining.push_back(inst.capacity - item);
                chosen = static_cast<int>(remaining.size()) - 1;
            } else {
                remaining[static_cast<std::size_t>(chosen)] -= item;
            }
            s.assignments.push_back(chosen);
        }
        s.bin_count = static_cast<int>(remaining.size());
        for (int r : remaining) s.loads.push_back(inst.capacity - r);
        return s;
    }
};

CvrpSolution direct_nearest_neighbor(const CvrpInstance& inst) {
    const int n = static_cast<int>(inst.customers.size());
    CvrpSolution s;
    std::vector<bool> visited(static_cast<std::size_t>(n), false);
    int left = n;
    Point pos = inst.depot;
    int remaining = inst.vehicle_capacity;
    std::vector<int> route;
    while (left > 0) {
        int best = -1;
        double best_dist = 0.0;
        for (int j = 0; j < n; ++j) {
            if (visited[static_cast<std::size_t>(j)]) continue;
            if (inst.customers[static_cast<std::size_t>(j)].demand > remaining) continue;
            const double d = euclidean(pos, inst.customers[static_cast<std::size_t>(j)].pos);
            if (best < 0 || d < best_dist) {
                best = j;
                best_dist = d;
            }
        }
        if (best < 0) {
            s.total_distance += euclidean(pos, inst.depot);
            s.routes.push_back(route);
            route.clear();
            pos = inst.depot;
            remaining = inst.vehicle_capacity;
            continue;
        }
        s.total_distance += best_dist;
        pos = inst.customers[static_cast<std::size_t>(best)].pos;
        remaining -= inst.customers[static_cast<std::size_t>(best)].demand;
        visited[static_cast<std::size_t>(best)] = true;
        route.push_back(best);
        --left;
    }
    if (!route.empty()) {
        s.total_distance += euclidean(pos, inst.depot);
        s.routes.push_back(route);
    }
    return s;
}

ObppSubclassKey small_obpp_key(Rng& rng, int n) {
    return {n, static_cast<WeightDistribution>(rng.uniform_below(3)),
            static_cast<SequenceType>(rng.uniform_below(3)),
            50 + static_cast<int>(rng.uniform_below(451)),
            0.3 + 0.4 * rng.uniform01()};
}

}  // namespace

TEST_CASE("pack_obpp hand traces") {
    const HeuristicProgram bf = builtin("best_fit");
    const HeuristicProgram ff = builtin("first_fit");

    // Best Fit: {6,4} and {5,3,2}; 2 bins is optimal since ceil(20/10) = 2.
    const ObppInstance a = obpp_fixture(10, {6, 5, 4, 3, 2});
    const ObppSolution sa = pack_obpp(a, bf);
    CHECK(sa.bin_count == 2);
    CHECK(sa.assignments == std::vector<int>{0, 1, 0, 1, 1});
    CHECK(sa.loads == std::vector<int>{10, 10});
    CHECK_FALSE(check_solution(a, sa).has_value());

    // [5,6,4]: best fit puts the 4 with the 6 (residual 0); first fit puts it
    // with the 5. Both use two bins.
    const ObppInstance b = obpp_fixture(10, {5, 6, 4});
    const ObppSolution sb_bf = pack_obpp(b, bf);
    const ObppSolution sb_ff = pack_obpp(b, ff);
    CHECK(sb_bf.bin_count == 2);
    CHECK(sb_ff.bin_count == 2);
    CHECK(sb_bf.assignments == std::vector<int>{0, 1, 1});
    CHECK(sb_ff.assignments == std::vector<int>{0, 1, 0});

    const ObppInstance single = obpp_fixture(10, {7});
    CHECK(pack_obpp(single, bf).bin_count == 1);

    CHECK_THROWS_AS(pack_obpp(a, builtin("closest_priority")), std::invalid_argument);
}

TEST_CASE("obpp lower bound") {
    CHECK(obpp_lower_bound(obpp_fixture(10, {6, 5, 4, 3, 2})) == 2.0);
    CHECK(obpp_lower_bound(obpp_fixture(10, {6, 5, 4, 3, 3})) == 3.0);

    Rng rng(5);
    const HeuristicProgram bf = builtin("best_fit");
    for (int i = 0; i < 50; ++i) {
        const ObppInstance inst = generate_obpp_instance(small_obpp_key(rng, 300), i);
        CHECK(pack_obpp(inst, bf).bin_count >= obpp_lower_bound(inst));
    }
}

TEST_CASE("optimality gap formula") {
    // Back-solved reference: 1383.78 / 1.1094.
    const double ref = 1383.78 / 1.1094;
    CHECK(optimality_gap(1383.78, ref) == doctest::Approx(10.94).epsilon(1e-6));
    CHECK(optimality_gap(123.0, 123.0) == 0.0);
    CHECK(optimality_gap(90.0, 100.0) == -10.0);
    CHECK_THROWS_AS(optimality_gap(1.0, 0.0), std::invalid_argument);

    // Linear in obj for fixed ref.
    const double g1 = optimality_gap(110.0, 100.0);
    const double g2 = optimality_gap(120.0, 100.0);
    const double g3 = optimality_gap(130.0, 100.0);
    CHECK(g2 - g1 == doctest::Approx(g3 - g2));
}

TEST_CASE("fitness is the negated mean objective") {
    // Items all equal to capacity force exactly n bins, so bin counts are
    // 10, 12, 14 across the three instances.
    std::vector<AnyInstance> instances;
    for (int n : {10, 12, 14}) {
        instances.emplace_back(obpp_fixture(5, std::vector<int>(
                                                   static_cast<std::size_t>(n), 5)));
    }
    const HeuristicProgram bf = builtin("best_fit");
    CHECK(fitness(bf, instances) == doctest::Approx(-12.0));

    CHECK_THROWS_AS(fitness(bf, std::span<const AnyInstance>{}), std::invalid_argument);
    CHECK_THROWS_AS(fitness(builtin("closest_priority"), instances),
                    std::invalid_argument);
}

TEST_CASE("best fit fitness on a fixed training set is stable") {
    const ObppSubclassKey key{500, WeightDistribution::Uniform, SequenceType::Random,
                              100, 0.5};
    std::vector<AnyInstance> instances;
    for (int j = 0; j < 30; ++j) {
        instances.emplace_back(generate_obpp_instance(key, 9000 + j));
    }
    const double f = fitness(builtin("best_fit"), instances);
    // Frozen regression value from the first run of this generator/simulator
    // pairing (7866 bins over 30 instances).
    CHECK(f == doctest::Approx(-262.2).epsilon(1e-12));
}

TEST_CASE("dsl baselines equal the directly coded classics") {
    Rng rng(42);
    const HeuristicProgram bf = builtin("best_fit");
    const HeuristicProgram ff = builtin("first_fit");
    for (int i = 0; i < 200; ++i) {
        const ObppInstance inst = generate_obpp_instance(small_obpp_key(rng, 200), i);
        const ObppSolution via_dsl_bf = pack_obpp(inst, bf);
        const ObppSolution direct_bf = DirectBestFit::run(inst);
        CHECK(via_dsl_bf.bin_count == direct_bf.bin_count);
        CHECK(via_dsl_bf.assignments == direct_bf.assignments);

        const ObppSolution via_dsl_ff = pack_obpp(inst, ff);
        const ObppSolution direct_ff = DirectFirstFit::run(inst);
        CHECK(via_dsl_ff.bin_count == direct_ff.bin_count);
        CHECK(via_dsl_ff.assignments == direct_ff.assignments);
    }

    const HeuristicProgram cp = builtin("closest_priority");
    Rng crng(43);
    for (int i = 0; i < 100; ++i) {
        const CvrpSubclassKey key{200,
                                  static_cast<LocationDistribution>(crng.uniform_below(3)),
                                  static_cast<WeightDistribution>(crng.uniform_below(3)),
                                  50 + 25 * static_cast<int>(crng.uniform_below(5)),
                                  (3 + 2 * static_cast<int>(crng.uniform_below(3))) / 10.0};
        const CvrpInstance inst = generate_cvrp_instance(key, i);
        const CvrpSolution via_dsl = route_cvrp(inst, cp);
        const CvrpSolution direct = direct_nearest_neighbor(inst);
        CHECK(via_dsl.routes == direct.routes);
        CHECK(via_dsl.total_distance == doctest::Approx(direct.total_distance).epsilon(1e-9));
        CHECK_FALSE(check_solution(inst, via_dsl).has_value());
    }
}

TEST_CASE("simulators reject instances violating the capacity invariants") {
    const ObppInstance oversized = obpp_fixture(10, {5, 11});
    CHECK_THROWS_AS(pack_obpp(oversized, builtin("best_fit")), std::invalid_argument);

    CvrpInstance impossible;
    impossible.depot = {50, 50};
    impossible.vehicle_capacity = 10;
    impossible.customers = {{{60, 50}, 11}};
    impossible.key = {1, LocationDistribution::Uniform, WeightDistribution::Uniform, 10,
                      0.5};
    CHECK_THROWS_AS(route_cvrp(impossible, builtin("closest_priority")),
                    std::invalid_argument);
}

TEST_CASE("route_cvrp edge cases") {
    const HeuristicProgram cp = builtin("closest_priority");

    CvrpInstance one;
    one.depot = {50, 50};
    one.vehicle_capacity = 10;
    one.customers = {{{60, 50}, 5}};
    one.key = {1, LocationDistribution::Uniform, WeightDistribution::Uniform, 10, 0.5};
    const CvrpSolution s1 = route_cvrp(one, cp);
    CHECK(s1.routes.size() == 1);
    CHECK(s1.total_distance == doctest::Approx(20.0));

    CvrpInstance full;
    full.depot = {50, 50};
    full.vehicle_capacity = 7;
    full.customers = {{{10, 10}, 7}, {{20, 80}, 7}, {{90, 30}, 7}};
    full.key = {3, LocationDistribution::Uniform, WeightDistribution::Uniform, 7, 0.7};
    const CvrpSolution s2 = route_cvrp(full, cp);
    CHECK(s2.routes.size() == 3);  // every demand fills a vehicle
    CHECK_FALSE(check_solution(full, s2).has_value());
}

TEST_CASE("brute force obpp oracle") {
    CHECK(brute_force_obpp(obpp_fixture(7, {5, 4, 3, 2})) == 2);
    CHECK(brute_force_obpp(obpp_fixture(5, {5, 5, 5})) == 3);
    CHECK_THROWS_AS(brute_force_obpp(obpp_fixture(10, std::vector<int>(13, 1))),
                    std::invalid_argument);

    Rng rng(77);
    const HeuristicProgram bf = builtin("best_fit");
    for (int i = 0; i < 60; ++i) {
        const int n = 3 + static_cast<int>(rng.uniform_below(10));
        const ObppInstance inst = generate_obpp_instance(small_obpp_key(rng, n), i);
        const int optimum = brute_force_obpp(inst);
        CHECK(pack_obpp(inst, bf).bin_count >= optimum);
        CHECK(optimum >= static_cast<int>(obpp_lower_bound(inst)));
    }
}

TEST_CASE("brute force cvrp oracle") {
    CvrpInstance one;
    one.depot = {50, 50};
    one.vehicle_capacity = 10;
    one.customers = {{{80, 50}, 4}};
    one.key = {1, LocationDistribution::Uniform, WeightDistribution::Uniform, 10, 0.4};
    CHECK(brute_force_cvrp(one) == doctest::Approx(60.0));

    // Two customers with joint demand within capacity: optimum is the best
    // of one combined route (either direction) and two singletons.
    CvrpInstance two;
    two.depot = {0, 0};
    two.vehicle_capacity = 10;
    two.customers = {{{10, 0}, 5}, {{10, 5}, 5}};
    two.key = {2, LocationDistribution::Uniform, WeightDistribution::Uniform, 10, 0.5};
    const double combined = 10.0 + 5.0 + std::sqrt(100.0 + 25.0);
    const double singletons = 20.0 + 2.0 * std::sqrt(125.0);
    CHECK(brute_force_cvrp(two) == doctest::Approx(std::min(combined, singletons)));

    Rng rng(78);
    const HeuristicProgram cp = builtin("closest_priority");
    for (int i = 0; i < 40; ++i) {
        const int n = 2 + static_cast<int>(rng.uniform_below(6));
        const CvrpSubclassKey key{n, static_cast<LocationDistribution>(rng.uniform_below(3)),
                                  static_cast<WeightDistribution>(rng.uniform_below(3)),
                                  50, 0.5};
        const CvrpInstance inst = generate_cvrp_instance(key, i);
        const double optimum = brute_force_cvrp(inst);
        CHECK(route_cvrp(inst, cp).total_distance >= optimum - 1e-6);
    }

    CvrpInstance too_big;
    too_big.vehicle_capacity = 10;
    too_big.customers.assign(9, {{1, 1}, 1});
    CHECK_THROWS_AS(brute_force_cvrp(too_big), std::invalid_argument);
}

TEST_CASE("solutions stay feasible under adversarial programs") {
    Rng rng(99);
    for (int i = 0; i < 60; ++i) {
        const HeuristicProgram random_obpp =
            make_program(ProblemKind::Obpp, random_expr(rng, ProblemKind::Obpp, 5));
        const ObppInstance inst = generate_obpp_instance(small_obpp_key(rng, 80), i);
        CHECK_FALSE(check_solution(inst, pack_obpp(inst, random_obpp)).has_value());

        const HeuristicProgram random_cvrp =
            make_program(ProblemKind::Cvrp, random_expr(rng, ProblemKind::Cvrp, 5));
        const CvrpInstance cinst = generate_cvrp_instance(
            {40, LocationDistribution::Uniform, WeightDistribution::Uniform, 50, 0.5}, i);
        CHECK_FALSE(check_solution(cinst, route_cvrp(cinst, random_cvrp)).has_value());
    }
}

TEST_CASE("aggregation by feature dimension") {
    std::vector<ReportRow> rows;
    const auto add_row = [&](SequenceType seq, double obj, double gap) {
        ReportRow row;
        row.kind = ProblemKind::Obpp;
        row.features = feature_vector(ObppSubclassKey{
            500, WeightDistribution::Uniform, seq, 100, 0.5});
        row.objective = obj;
        row.reference = obj / (1.0 + gap / 100.0);
        row.gap_percent = gap;
        rows.push_back(row);
    };
    add_row(SequenceType::Random, 10, 5);
    add_row(SequenceType::Random, 20, 15);
    add_row(SequenceType::NonDecreasing, 30, 10);
    add_row(SequenceType::NonDecreasing, 40, 20);
    add_row(SequenceType::NonIncreasing, 50, 25);
    add_row(SequenceType::NonIncreasing, 60, 35);

    const auto groups = aggregate_by_feature(rows, ProblemKind::Obpp, "sequence");
    REQUIRE(groups.size() == 3);
    CHECK(groups[0].feature_value == 0.0);
    CHECK(groups[0].mean_obj == doctest::Approx(15.0));
    CHECK(*groups[0].mean_gap == doctest::Approx(10.0));
    CHECK(*groups[0].one_minus_gap == doctest::Approx(0.9));
    CHECK(groups[1].mean_obj == doctest::Approx(35.0));
    CHECK(groups[2].mean_obj == doctest::Approx(55.0));

    // Two equal-size groups average to the overall mean.
    double overall = 0.0;
    for (const auto& g : groups) overall += g.mean_obj;
    overall /= 3.0;
    double direct = 0.0;
    for (const auto& row : rows) direct += row.objective;
    direct /= static_cast<double>(rows.size());
    CHECK(overall == doctest::Approx(direct));

    // Single group equals the global mean.
    const auto by_items = aggregate_by_feature(rows, ProblemKind::Obpp, "num_items");
    REQUIRE(by_items.size() == 1);
    CHECK(by_items[0].mean_obj == doctest::Approx(direct));

    CHECK_THROWS_AS(aggregate_by_feature(rows, ProblemKind::Obpp, "bogus"),
                    std::invalid_argument);

    const std::string csv = report_csv("sequence", groups);
    CHECK(csv.rfind("group,feature_value,mean_obj,mean_gap,one_minus_gap\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);  // header + 3 rows
}
