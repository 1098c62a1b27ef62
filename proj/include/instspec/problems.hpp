#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace instspec {

enum class ProblemKind { Obpp, Cvrp };

// Categorical features carry stable integer encodings used in feature
// vectors and wire formats.
enum class WeightDistribution : int { Uniform = 0, Gaussian = 1, Weibull = 2 };
enum class SequenceType : int { Random = 0, NonDecreasing = 1, NonIncreasing = 2 };
enum class LocationDistribution : int { Uniform = 0, Gaussian = 1, Grid = 2 };

std::string to_string(ProblemKind kind);
std::string to_string(WeightDistribution d);
std::string to_string(SequenceType s);
std::string to_string(LocationDistribution d);
ProblemKind problem_kind_from_string(const std::string& s);
WeightDistribution weight_distribution_from_string(const std::string& s);
SequenceType sequence_type_from_string(const std::string& s);
LocationDistribution location_distribution_from_string(const std::string& s);

// One point of the OBPP feature grid. Field order is the feature-vector
// order and the lexicographic sort order.
struct ObppSubclassKey {
    int num_items = 0;
    WeightDistribution weight_dist = WeightDistribution::Uniform;
    SequenceType sequence = SequenceType::Random;
    int capacity = 0;
    double capacity_ratio = 0.0;

    auto operator<=>(const ObppSubclassKey&) const = default;
};

struct CvrpSubclassKey {
    int num_customers = 0;
    LocationDistribution location_dist = LocationDistribution::Uniform;
    WeightDistribution demand_dist = WeightDistribution::Uniform;
    int vehicle_capacity = 0;
    double capacity_ratio = 0.0;

    auto operator<=>(const CvrpSubclassKey&) const = default;
};

using AnyKey = std::variant<ObppSubclassKey, CvrpSubclassKey>;

struct Point {
    double x = 0.0;
    double y = 0.0;
    auto operator<=>(const Point&) const = default;
};

double euclidean(Point a, Point b);

struct ObppInstance {
    int capacity = 0;
    std::vector<int> items;  // arrival order is significant
    ObppSubclassKey key;
    std::uint64_t seed = 0;
};

struct Customer {
    Point pos;
    int demand = 0;
    auto operator<=>(const Customer&) const = default;
};

struct CvrpInstance {
    Point depot;
    std::vector<Customer> customers;
    int vehicle_capacity = 0;
    CvrpSubclassKey key;
    std::uint64_t seed = 0;
};

using AnyInstance = std::variant<ObppInstance, CvrpInstance>;

using FeatureVector = std::array<double, 5>;

// Per-dimension mean and population standard deviation over a key set.
// A zero stddev entry marks a degenerate dimension; standardize() maps it
// to 0.
struct FeatureStats {
    FeatureVector mean{};
    FeatureVector stddev{};
};

// Full grids in lexicographic field order.
std::vector<ObppSubclassKey> enumerate_obpp_subclasses();
std::vector<CvrpSubclassKey> enumerate_cvrp_subclasses();

FeatureVector feature_vector(const ObppSubclassKey& key);
FeatureVector feature_vector(const CvrpSubclassKey& key);
FeatureVector feature_vector(const AnyKey& key);

FeatureStats compute_feature_stats(std::span<const FeatureVector> vectors);
FeatureStats compute_feature_stats(std::span<const ObppSubclassKey> keys);
FeatureStats compute_feature_stats(std::span<const CvrpSubclassKey> keys);
FeatureStats compute_feature_stats(std::span<const AnyKey> keys);

FeatureVector standardize(const FeatureVector& fv, const FeatureStats& stats);

// Deterministic seeded generators. The same (key, seed) pair always yields
// the same instance. Keys may sit off the grid as long as the values are in
// range; only pool building restricts itself to grid keys.
ObppInstance generate_obpp_instance(const ObppSubclassKey& key, std::uint64_t seed);
CvrpInstance generate_cvrp_instance(const CvrpSubclassKey& key, std::uint64_t seed);
AnyInstance generate_instance(const AnyKey& key, std::uint64_t seed);

ProblemKind kind_of(const AnyKey& key);
ProblemKind kind_of(const AnyInstance& instance);
AnyKey key_of(const AnyInstance& instance);
std::uint64_t key_hash(const AnyKey& key);
bool key_less(const AnyKey& a, const AnyKey& b);

struct AnyKeyLess {
    bool operator()(const AnyKey& a, const AnyKey& b) const { return key_less(a, b); }
};

// Stable textual ids, filesystem-safe. Subclass ids identify grid points;
// instance ids additionally carry the seed.
std::string subclass_id(const AnyKey& key);
std::string instance_id(const AnyInstance& instance);

// Feature dimension names per kind ("num_items", "weight_dist", ...).
const std::array<std::string, 5>& feature_names(ProblemKind kind);
int feature_index(ProblemKind kind, const std::string& name);

// Parses "500,uniform,random,100,0.5" (OBPP) or
// "200,uniform,uniform,50,0.3" (CVRP). Throws std::invalid_argument.
AnyKey parse_key_string(ProblemKind kind, const std::string& text);

// Returns true when the key is exactly on the enumeration grid.
bool is_grid_key(const AnyKey& key);

// Instance files: one JSON document per instance.
nlohmann::json key_to_json(const AnyKey& key);
AnyKey key_from_json(ProblemKind kind, const nlohmann::json& j);
nlohmann::json instance_to_json(const AnyInstance& instance);
AnyInstance instance_from_json(const nlohmann::json& j);
void write_instance_file(const AnyInstance& instance, const std::string& path);
AnyInstance read_instance_file(const std::string& path);

}  // namespace instspec
