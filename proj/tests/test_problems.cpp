#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "instspec/problems.hpp"
#include "instspec/rng.hpp"

using namespace instspec;

namespace {

double mean_of(const std::vector<int>& values) {
    return std::accumulate(values.begin(), values.end(), 0.0) /
           static_cast<double>(values.size());
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in),
                       std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("obpp grid enumeration") {
    const auto keys = enumerate_obpp_subclasses();
    CHECK(keys.size() == 4500);
    CHECK(keys.front() == ObppSubclassKey{500, WeightDistribution::Uniform,
                                          SequenceType::Random, 50, 0.3});
    CHECK(std::is_sorted(keys.begin(), keys.end()));

    std::set<ObppSubclassKey> unique(keys.begin(), keys.end());
    CHECK(unique.size() == keys.size());

    // The grid step sizes must factor into the published subclass count.
    std::set<int> items, caps;
    std::set<double> ratios;
    for (const auto& k : keys) {
        items.insert(k.num_items);
        caps.insert(k.capacity);
        ratios.insert(k.capacity_ratio);
    }
    CHECK(items.size() * 3 * 3 * caps.size() * ratios.size() == 4500);
    CHECK(items.size() == 10);
    CHECK(caps.size() == 10);
    CHECK(ratios.size() == 5);
}

TEST_CASE("cvrp grid enumeration") {
    const auto keys = enumerate_cvrp_subclasses();
    CHECK(keys.size() == 675);
    CHECK(keys.front() == CvrpSubclassKey{200, LocationDistribution::Uniform,
                                          WeightDistribution::Uniform, 50, 0.3});
    CHECK(std::is_sorted(keys.begin(), keys.end()));

    std::set<int> customers, caps;
    std::set<double> ratios;
    for (const auto& k : keys) {
        customers.insert(k.num_customers);
        caps.insert(k.vehicle_capacity);
        ratios.insert(k.capacity_ratio);
    }
    CHECK(customers.size() * 3 * 3 * caps.size() * ratios.size() == 675);
    CHECK(customers.size() == 5);
    CHECK(caps.size() == 5);
    CHECK(ratios.size() == 3);
}

TEST_CASE("obpp generation matches declared features") {
    const ObppSubclassKey key{500, WeightDistribution::Uniform,
                              SequenceType::NonDecreasing, 100, 0.5};
    const ObppInstance inst = generate_obpp_instance(key, 7);
    REQUIRE(inst.items.size() == 500);
    CHECK(std::is_sorted(inst.items.begin(), inst.items.end()));
    const double mean = mean_of(inst.items);
    CHECK(mean > 47.5);
    CHECK(mean < 52.5);

    const ObppInstance again = generate_obpp_instance(key, 7);
    CHECK(inst.items == again.items);
}

TEST_CASE("weibull weights stay bounded with the declared mean") {
    const ObppSubclassKey key{500, WeightDistribution::Weibull, SequenceType::Random,
                              100, 0.3};
    const ObppInstance inst = generate_obpp_instance(key, 1);
    const double mean = mean_of(inst.items);
    CHECK(mean > 28.5);
    CHECK(mean < 31.5);
    for (int w : inst.items) {
        CHECK(w >= 1);
        CHECK(w <= 100);
    }
}

TEST_CASE("generation rejects out-of-range requests") {
    CHECK_THROWS_AS(generate_obpp_instance(
                        {100, WeightDistribution::Uniform, SequenceType::Random, 50, 0.0},
                        1),
                    std::invalid_argument);
    CHECK_THROWS_AS(generate_obpp_instance(
                        {100, WeightDistribution::Uniform, SequenceType::Random, 50, 1.2},
                        1),
                    std::invalid_argument);
    CHECK_THROWS_AS(generate_obpp_instance(
                        {0, WeightDistribution::Uniform, SequenceType::Random, 50, 0.5}, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(generate_cvrp_instance({0, LocationDistribution::Uniform,
                                            WeightDistribution::Uniform, 50, 0.5},
                                           1),
                    std::invalid_argument);
}

TEST_CASE("cvrp grid locations form the expected lattice") {
    const CvrpSubclassKey key{200, LocationDistribution::Grid,
                              WeightDistribution::Uniform, 100, 0.5};
    const CvrpInstance inst = generate_cvrp_instance(key, 3);
    REQUIRE(inst.customers.size() == 200);
    CHECK(inst.depot == Point{50.0, 50.0});

    // ceil(sqrt(200)) = 15; first 200 cells row-major at cell centers.
    const int side = 15;
    for (int i = 0; i < 200; ++i) {
        const double expect_x = std::round((i % side + 0.5) * 100.0 / side * 1e6) / 1e6;
        const double expect_y = std::round((i / side + 0.5) * 100.0 / side * 1e6) / 1e6;
        CHECK(inst.customers[static_cast<std::size_t>(i)].pos.x ==
              doctest::Approx(expect_x).epsilon(1e-12));
        CHECK(inst.customers[static_cast<std::size_t>(i)].pos.y ==
              doctest::Approx(expect_y).epsilon(1e-12));
    }

    double demand_sum = 0.0;
    for (const Customer& c : inst.customers) {
        CHECK(c.demand >= 1);
        CHECK(c.demand <= 100);
        demand_sum += c.demand;
    }
    const double mean = demand_sum / 200.0;
    CHECK(mean > 47.5);
    CHECK(mean < 52.5);

    const CvrpInstance again = generate_cvrp_instance(key, 3);
    CHECK(inst.customers == again.customers);
}

TEST_CASE("ratio fidelity holds across random keys") {
    Rng pick(2024);
    // Also exercises off-grid (inter-subclass) keys: values in range but not
    // on the enumeration steps.
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 200 + static_cast<int>(pick.uniform_below(2801));
        const int cap = 50 + static_cast<int>(pick.uniform_below(451));
        const double ratio = 0.3 + 0.4 * pick.uniform01();
        const auto dist = static_cast<WeightDistribution>(pick.uniform_below(3));
        const auto seq = static_cast<SequenceType>(pick.uniform_below(3));
        const ObppInstance inst =
            generate_obpp_instance({n, dist, seq, cap, ratio}, 1000 + trial);
        const double realized = mean_of(inst.items) / cap;
        CHECK(std::abs(realized - ratio) / ratio < 0.05);
        if (seq == SequenceType::NonDecreasing) {
            CHECK(std::is_sorted(inst.items.begin(), inst.items.end()));
        }
        if (seq == SequenceType::NonIncreasing) {
            CHECK(std::is_sorted(inst.items.rbegin(), inst.items.rend()));
        }
        for (int w : inst.items) {
            CHECK(w >= 1);
            CHECK(w <= cap);
        }
    }
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 200 + 200 * static_cast<int>(pick.uniform_below(5));
        const int cap = 50 + 25 * static_cast<int>(pick.uniform_below(5));
        const double ratio = (3 + 2 * static_cast<int>(pick.uniform_below(3))) / 10.0;
        const auto loc = static_cast<LocationDistribution>(pick.uniform_below(3));
        const auto dem = static_cast<WeightDistribution>(pick.uniform_below(3));
        const CvrpInstance inst =
            generate_cvrp_instance({n, loc, dem, cap, ratio}, 500 + trial);
        double sum = 0.0;
        for (const Customer& c : inst.customers) {
            CHECK(c.demand >= 1);
            CHECK(c.demand <= cap);
            CHECK(c.pos.x >= 0.0);
            CHECK(c.pos.x <= 100.0);
            CHECK(c.pos.y >= 0.0);
            CHECK(c.pos.y <= 100.0);
            sum += c.demand;
        }
        const double realized = sum / n / cap;
        CHECK(std::abs(realized - ratio) / ratio < 0.05);
    }
}

TEST_CASE("feature vectors use the fixed integer encodings") {
    CHECK(feature_vector(ObppSubclassKey{500, WeightDistribution::Uniform,
                                         SequenceType::Random, 100, 0.5}) ==
          FeatureVector{500, 0, 0, 100, 0.5});
    CHECK(feature_vector(ObppSubclassKey{1000, WeightDistribution::Weibull,
                                         SequenceType::NonIncreasing, 50, 0.7}) ==
          FeatureVector{1000, 2, 2, 50, 0.7});

    // Equal vectors identify the same subclass.
    const ObppSubclassKey a{500, WeightDistribution::Gaussian, SequenceType::Random, 100,
                            0.4};
    const ObppSubclassKey b = a;
    CHECK(feature_vector(a) == feature_vector(b));
    CHECK(a == b);
}

TEST_CASE("feature stats and standardization") {
    const ObppSubclassKey single{500, WeightDistribution::Uniform, SequenceType::Random,
                                 100, 0.5};
    const std::vector<ObppSubclassKey> one{single};
    const FeatureStats degenerate = compute_feature_stats(std::span(one));
    for (double s : degenerate.stddev) CHECK(s == 0.0);

    const std::vector<FeatureVector> two{{0, 0, 0, 0, 0}, {2, 2, 2, 2, 2}};
    const FeatureStats stats = compute_feature_stats(std::span(two));
    for (double m : stats.mean) CHECK(m == doctest::Approx(1.0));
    for (double s : stats.stddev) CHECK(s == doctest::Approx(1.0));

    const auto grid = enumerate_obpp_subclasses();
    const FeatureStats grid_stats = compute_feature_stats(std::span(grid));
    CHECK(grid_stats.mean[0] == doctest::Approx(2750.0));

    CHECK_THROWS_AS(compute_feature_stats(std::span<const FeatureVector>{}),
                    std::invalid_argument);

    // fv = mean -> zeros; fv = mean + std -> ones; zero-std dims -> 0.
    FeatureVector centered = standardize(stats.mean, stats);
    for (double v : centered) CHECK(v == 0.0);
    FeatureVector shifted;
    for (std::size_t m = 0; m < 5; ++m) shifted[m] = stats.mean[m] + stats.stddev[m];
    for (double v : standardize(shifted, stats)) CHECK(v == doctest::Approx(1.0));

    FeatureVector off = feature_vector(single);
    off[0] += 10.0;
    const FeatureVector z = standardize(off, degenerate);
    CHECK(z[0] == 0.0);
}

TEST_CASE("instance files round-trip and rewrite byte-identically") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "instspec_test_problems";
    fs::create_directories(dir);

    const AnyInstance obpp = generate_obpp_instance(
        {500, WeightDistribution::Gaussian, SequenceType::Random, 200, 0.4}, 11);
    const AnyInstance cvrp = generate_cvrp_instance(
        {200, LocationDistribution::Gaussian, WeightDistribution::Weibull, 75, 0.3}, 12);

    for (const AnyInstance& inst : {obpp, cvrp}) {
        const std::string path = (dir / (instance_id(inst) + ".json")).string();
        write_instance_file(inst, path);
        const AnyInstance loaded = read_instance_file(path);
        CHECK(instance_id(loaded) == instance_id(inst));
        CHECK(feature_vector(key_of(loaded)) == feature_vector(key_of(inst)));
        if (std::holds_alternative<ObppInstance>(inst)) {
            CHECK(std::get<ObppInstance>(loaded).items ==
                  std::get<ObppInstance>(inst).items);
        } else {
            CHECK(std::get<CvrpInstance>(loaded).customers ==
                  std::get<CvrpInstance>(inst).customers);
        }
        const std::string first = slurp(path);
        write_instance_file(loaded, path);
        CHECK(slurp(path) == first);
    }
    fs::remove_all(dir);
}

TEST_CASE("key strings parse and grid membership is detected") {
    const AnyKey obpp = parse_key_string(ProblemKind::Obpp, "500,uniform,random,100,0.5");
    CHECK(std::get<ObppSubclassKey>(obpp) ==
          ObppSubclassKey{500, WeightDistribution::Uniform, SequenceType::Random, 100, 0.5});
    CHECK(is_grid_key(obpp));

    const AnyKey off = parse_key_string(ProblemKind::Obpp, "750,uniform,random,100,0.5");
    CHECK_FALSE(is_grid_key(off));

    const AnyKey cvrp = parse_key_string(ProblemKind::Cvrp, "200,grid,weibull,125,0.7");
    CHECK(std::get<CvrpSubclassKey>(cvrp) ==
          CvrpSubclassKey{200, LocationDistribution::Grid, WeightDistribution::Weibull,
                          125, 0.7});
    CHECK(is_grid_key(cvrp));

    CHECK_THROWS_AS(parse_key_string(ProblemKind::Obpp, "500,uniform,random,100"),
                    std::invalid_argument);
    CHECK_THROWS_AS(parse_key_string(ProblemKind::Obpp, "500,weird,random,100,0.5"),
                    std::invalid_argument);
}
