#include "instspec/problems.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "instspec/rng.hpp"

namespace instspec {

namespace {

// Rounds a coordinate to 6 fractional digits so in-memory values match the
// instance file format exactly.
double quantize6(double x) { return std::round(x * 1e6) / 1e6; }

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

// ---------------------------------------------------------------------------
// Integer weight/demand sampling.
//
// Each distribution family is sampled by inverse transform: an integer draw
// is clamp(round(quantile(u)), 1, cap). The location/scale parameter is
// calibrated numerically so that the mean of the *clamped integer* draw
// equals ratio * cap. Calibration makes the realized mean match the declared
// capacity ratio for every reachable target, including ratios where naive
// parameterizations would be biased by the [1, cap] support.
// ---------------------------------------------------------------------------

struct WeightSampler {
    WeightDistribution dist = WeightDistribution::Uniform;
    double param = 0.0;  // uniform/gaussian: location; weibull: scale
    double sigma = 0.0;  // gaussian only
    int cap = 0;

    double quantile(double u) const {
        u = std::clamp(u, 1e-12, 1.0 - 1e-12);
        switch (dist) {
        case WeightDistribution::Uniform: {
            const double halfw = std::max(0.0, std::min(param - 1.0, cap - param));
            return param + (2.0 * u - 1.0) * halfw;
        }
        case WeightDistribution::Gaussian:
            return param + sigma * normal_quantile(u);
        case WeightDistribution::Weibull:
            return param * std::pow(-std::log1p(-u), 1.0 / 1.5);
        }
        return param;
    }

    int draw(double u) const {
        const double q = quantile(u);
        const long long w = std::llround(q);
        return static_cast<int>(std::clamp<long long>(w, 1, cap));
    }

    // Mean of the clamped integer draw, via midpoint quadrature in u-space.
    // The draw is a monotone step function of u, so with M midpoints the
    // error is bounded by cap / (2 M) — far below the sampling tolerance.
    double discrete_mean() const {
        constexpr int kPoints = 16384;
        double sum = 0.0;
        for (int i = 0; i < kPoints; ++i) {
            sum += draw((i + 0.5) / kPoints);
        }
        return sum / kPoints;
    }
};

WeightSampler make_sampler(WeightDistribution dist, double param, double mu, int cap) {
    WeightSampler s;
    s.dist = dist;
    s.param = param;
    s.sigma = mu / 4.0;
    s.cap = cap;
    return s;
}

double calibrate_param(WeightDistribution dist, double mu, int cap) {
    double lo = 0.0;
    double hi = 0.0;
    switch (dist) {
    case WeightDistribution::Uniform:
        lo = 1.0;
        hi = static_cast<double>(cap);
        break;
    case WeightDistribution::Gaussian:
        lo = -2.0 * cap;
        hi = 3.0 * cap;
        break;
    case WeightDistribution::Weibull:
        lo = 1e-9;
        hi = 64.0 * cap;
        break;
    }
    // The mean is nondecreasing in the parameter (the quantile is pointwise
    // nondecreasing), so plain bisection applies.
    for (int iter = 0; iter < 64; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (make_sampler(dist, mid, mu, cap).discrete_mean() < mu) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

WeightSampler calibrated_sampler(WeightDistribution dist, double mu, int cap) {
    struct CacheKey {
        int dist;
        double mu;
        int cap;
        auto operator<=>(const CacheKey&) const = default;
    };
    static std::mutex mutex;
    static std::map<CacheKey, double> cache;

    const CacheKey key{static_cast<int>(dist), mu, cap};
    {
        std::lock_guard<std::mutex> lock(mutex);
        auto it = cache.find(key);
        if (it != cache.end()) return make_sampler(dist, it->second, mu, cap);
    }
    const double param = calibrate_param(dist, mu, cap);
    {
        std::lock_guard<std::mutex> lock(mutex);
        cache.emplace(key, param);
    }
    return make_sampler(dist, param, mu, cap);
}

// Stratified inverse-transform sampling: item i draws its quantile from the
// i-th of n equal strata. This keeps the realized mean within a fraction of
// a percent of the calibrated target even for the smallest instances, where
// i.i.d. draws would use up the 5% ratio tolerance on noise alone.
std::vector<int> sample_weights(const WeightSampler& sampler, int n, Rng& rng) {
    std::vector<int> weights(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double u = (i + rng.uniform01()) / n;
        weights[static_cast<std::size_t>(i)] = sampler.draw(u);
    }
    return weights;
}

void validate_generation_request(int count, int cap, double ratio, const char* what) {
    if (count <= 0) {
        throw std::invalid_argument(std::string(what) + ": count must be positive");
    }
    if (cap <= 0) {
        throw std::invalid_argument(std::string(what) + ": capacity must be positive");
    }
    if (!(ratio > 0.0) || ratio > 1.0) {
        throw std::invalid_argument(std::string(what) +
                                    ": capacity_ratio must lie in (0, 1]");
    }
}

}  // namespace

std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

double euclidean(Point a, Point b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

std::string to_string(ProblemKind kind) {
    return kind == ProblemKind::Obpp ? "obpp" : "cvrp";
}

std::string to_string(WeightDistribution d) {
    switch (d) {
    case WeightDistribution::Uniform: return "uniform";
    case WeightDistribution::Gaussian: return "gaussian";
    case WeightDistribution::Weibull: return "weibull";
    }
    return "uniform";
}

std::string to_string(SequenceType s) {
    switch (s) {
    case SequenceType::Random: return "random";
    case SequenceType::NonDecreasing: return "nondecreasing";
    case SequenceType::NonIncreasing: return "nonincreasing";
    }
    return "random";
}

std::string to_string(LocationDistribution d) {
    switch (d) {
    case LocationDistribution::Uniform: return "uniform";
    case LocationDistribution::Gaussian: return "gaussian";
    case LocationDistribution::Grid: return "grid";
    }
    return "uniform";
}

ProblemKind problem_kind_from_string(const std::string& s) {
    if (s == "obpp") return ProblemKind::Obpp;
    if (s == "cvrp") return ProblemKind::Cvrp;
    throw std::invalid_argument("unknown problem kind: " + s);
}

WeightDistribution weight_distribution_from_string(const std::string& s) {
    if (s == "uniform") return WeightDistribution::Uniform;
    if (s == "gaussian") return WeightDistribution::Gaussian;
    if (s == "weibull") return WeightDistribution::Weibull;
    throw std::invalid_argument("unknown weight distribution: " + s);
}

SequenceType sequence_type_from_string(const std::string& s) {
    if (s == "random") return SequenceType::Random;
    if (s == "nondecreasing") return SequenceType::NonDecreasing;
    if (s == "nonincreasing") return SequenceType::NonIncreasing;
    throw std::invalid_argument("unknown sequence type: " + s);
}

LocationDistribution location_distribution_from_string(const std::string& s) {
    if (s == "uniform") return LocationDistribution::Uniform;
    if (s == "gaussian") return LocationDistribution::Gaussian;
    if (s == "grid") return LocationDistribution::Grid;
    throw std::invalid_argument("unknown location distribution: " + s);
}

std::vector<ObppSubclassKey> enumerate_obpp_subclasses() {
    std::vector<ObppSubclassKey> keys;
    keys.reserve(4500);
    for (int n = 500; n <= 5000; n += 500) {
        for (int wd = 0; wd < 3; ++wd) {
            for (int seq = 0; seq < 3; ++seq) {
                for (int cap = 50; cap <= 500; cap += 50) {
                    for (int r = 3; r <= 7; ++r) {
                        keys.push_back(ObppSubclassKey{
                            n, static_cast<WeightDistribution>(wd),
                            static_cast<SequenceType>(seq), cap, r / 10.0});
                    }
                }
            }
        }
    }
    return keys;
}

std::vector<CvrpSubclassKey> enumerate_cvrp_subclasses() {
    std::vector<CvrpSubclassKey> keys;
    keys.reserve(675);
    for (int n = 200; n <= 1000; n += 200) {
        for (int loc = 0; loc < 3; ++loc) {
            for (int dem = 0; dem < 3; ++dem) {
                for (int cap = 50; cap <= 150; cap += 25) {
                    for (int r = 3; r <= 7; r += 2) {
                        keys.push_back(CvrpSubclassKey{
                            n, static_cast<LocationDistribution>(loc),
                            static_cast<WeightDistribution>(dem), cap, r / 10.0});
                    }
                }
            }
        }
    }
    return keys;
}

FeatureVector feature_vector(const ObppSubclassKey& key) {
    return {static_cast<double>(key.num_items),
            static_cast<double>(static_cast<int>(key.weight_dist)),
            static_cast<double>(static_cast<int>(key.sequence)),
            static_cast<double>(key.capacity), key.capacity_ratio};
}

FeatureVector feature_vector(const CvrpSubclassKey& key) {
    return {static_cast<double>(key.num_customers),
            static_cast<double>(static_cast<int>(key.location_dist)),
            static_cast<double>(static_cast<int>(key.demand_dist)),
            static_cast<double>(key.vehicle_capacity), key.capacity_ratio};
}

FeatureVector feature_vector(const AnyKey& key) {
    return std::visit([](const auto& k) { return feature_vector(k); }, key);
}

FeatureStats compute_feature_stats(std::span<const FeatureVector> vectors) {
    if (vectors.empty()) {
        throw std::invalid_argument("compute_feature_stats: empty key list");
    }
    FeatureStats stats;
    for (std::size_t m = 0; m < 5; ++m) {
        double sum = 0.0;
        for (const auto& v : vectors) sum += v[m];
        const double mean = sum / static_cast<double>(vectors.size());
        double var = 0.0;
        for (const auto& v : vectors) {
            const double d = v[m] - mean;
            var += d * d;
        }
        var /= static_cast<double>(vectors.size());
        stats.mean[m] = mean;
        stats.stddev[m] = var > 0.0 ? std::sqrt(var) : 0.0;
    }
    return stats;
}

namespace {
template <typename KeyT>
FeatureStats stats_from_keys(std::span<const KeyT> keys) {
    std::vector<FeatureVector> vectors;
    vectors.reserve(keys.size());
    for (const auto& k : keys) vectors.push_back(feature_vector(k));
    return compute_feature_stats(vectors);
}
}  // namespace

FeatureStats compute_feature_stats(std::span<const ObppSubclassKey> keys) {
    return stats_from_keys(keys);
}
FeatureStats compute_feature_stats(std::span<const CvrpSubclassKey> keys) {
    return stats_from_keys(keys);
}
FeatureStats compute_feature_stats(std::span<const AnyKey> keys) {
    return stats_from_keys(keys);
}

FeatureVector standardize(const FeatureVector& fv, const FeatureStats& stats) {
    FeatureVector out{};
    for (std::size_t m = 0; m < 5; ++m) {
        out[m] = stats.stddev[m] > 0.0 ? (fv[m] - stats.mean[m]) / stats.stddev[m] : 0.0;
    }
    return out;
}

ObppInstance generate_obpp_instance(const ObppSubclassKey& key, std::uint64_t seed) {
    validate_generation_request(key.num_items, key.capacity, key.capacity_ratio,
                                "generate_obpp_instance");
    const double mu = key.capacity_ratio * key.capacity;
    const WeightSampler sampler = calibrated_sampler(key.weight_dist, mu, key.capacity);

    Rng rng(derive_seed({seed, key_hash(AnyKey{key}), 0x0b17ULL}));
    std::vector<int> items = sample_weights(sampler, key.num_items, rng);
    switch (key.sequence) {
    case SequenceType::Random:
        rng.shuffle(items);
        break;
    case SequenceType::NonDecreasing:
        std::sort(items.begin(), items.end());
        break;
    case SequenceType::NonIncreasing:
        std::sort(items.begin(), items.end(), std::greater<int>());
        break;
    }
    return ObppInstance{key.capacity, std::move(items), key, seed};
}

CvrpInstance generate_cvrp_instance(const CvrpSubclassKey& key, std::uint64_t seed) {
    validate_generation_request(key.num_customers, key.vehicle_capacity,
                                key.capacity_ratio, "generate_cvrp_instance");
    const double mu = key.capacity_ratio * key.vehicle_capacity;
    const WeightSampler sampler =
        calibrated_sampler(key.demand_dist, mu, key.vehicle_capacity);

    Rng rng(derive_seed({seed, key_hash(AnyKey{key}), 0xc49bULL}));
    const int n = key.num_customers;

    std::vector<Point> positions(static_cast<std::size_t>(n));
    switch (key.location_dist) {
    case LocationDistribution::Uniform:
        for (auto& p : positions) {
            p.x = quantize6(100.0 * rng.uniform01());
            p.y = quantize6(100.0 * rng.uniform01());
        }
        break;
    case LocationDistribution::Gaussian:
        for (auto& p : positions) {
            p.x = quantize6(std::clamp(50.0 + 15.0 * normal_quantile(rng.uniform01()), 0.0, 100.0));
            p.y = quantize6(std::clamp(50.0 + 15.0 * normal_quantile(rng.uniform01()), 0.0, 100.0));
        }
        break;
    case LocationDistribution::Grid: {
        // First n cells of the ceil(sqrt(n))^2 lattice, row-major, at cell
        // centers, no jitter.
        const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
        for (int i = 0; i < n; ++i) {
            const int row = i / side;
            const int col = i % side;
            positions[static_cast<std::size_t>(i)] = {
                quantize6((col + 0.5) * 100.0 / side),
                quantize6((row + 0.5) * 100.0 / side)};
        }
        break;
    }
    }

    std::vector<int> demands = sample_weights(sampler, n, rng);
    // Shuffle so demand magnitude is independent of customer position
    // (stratified draws arrive in ascending order).
    rng.shuffle(demands);

    CvrpInstance inst;
    inst.depot = {50.0, 50.0};
    inst.vehicle_capacity = key.vehicle_capacity;
    inst.key = key;
    inst.seed = seed;
    inst.customers.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        inst.customers[static_cast<std::size_t>(i)] = {
            positions[static_cast<std::size_t>(i)], demands[static_cast<std::size_t>(i)]};
    }
    return inst;
}

AnyInstance generate_instance(const AnyKey& key, std::uint64_t seed) {
    if (std::holds_alternative<ObppSubclassKey>(key)) {
        return generate_obpp_instance(std::get<ObppSubclassKey>(key), seed);
    }
    return generate_cvrp_instance(std::get<CvrpSubclassKey>(key), seed);
}

ProblemKind kind_of(const AnyKey& key) {
    return std::holds_alternative<ObppSubclassKey>(key) ? ProblemKind::Obpp
                                                        : ProblemKind::Cvrp;
}

ProblemKind kind_of(const AnyInstance& instance) {
    return std::holds_alternative<ObppInstance>(instance) ? ProblemKind::Obpp
                                                          : ProblemKind::Cvrp;
}

AnyKey key_of(const AnyInstance& instance) {
    if (std::holds_alternative<ObppInstance>(instance)) {
        return std::get<ObppInstance>(instance).key;
    }
    return std::get<CvrpInstance>(instance).key;
}

std::uint64_t key_hash(const AnyKey& key) { return fnv1a64(subclass_id(key)); }

bool key_less(const AnyKey& a, const AnyKey& b) {
    if (a.index() != b.index()) return a.index() < b.index();
    if (std::holds_alternative<ObppSubclassKey>(a)) {
        return std::get<ObppSubclassKey>(a) < std::get<ObppSubclassKey>(b);
    }
    return std::get<CvrpSubclassKey>(a) < std::get<CvrpSubclassKey>(b);
}

std::string subclass_id(const AnyKey& key) {
    std::ostringstream out;
    if (std::holds_alternative<ObppSubclassKey>(key)) {
        const auto& k = std::get<ObppSubclassKey>(key);
        out << "obpp-n" << k.num_items << "-" << to_string(k.weight_dist) << "-"
            << to_string(k.sequence) << "-c" << k.capacity << "-r"
            << format_double(k.capacity_ratio);
    } else {
        const auto& k = std::get<CvrpSubclassKey>(key);
        out << "cvrp-n" << k.num_customers << "-" << to_string(k.location_dist) << "-"
            << to_string(k.demand_dist) << "-c" << k.vehicle_capacity << "-r"
            << format_double(k.capacity_ratio);
    }
    return out.str();
}

std::string instance_id(const AnyInstance& instance) {
    const std::uint64_t seed = std::holds_alternative<ObppInstance>(instance)
                                   ? std::get<ObppInstance>(instance).seed
                                   : std::get<CvrpInstance>(instance).seed;
    return subclass_id(key_of(instance)) + "-s" + std::to_string(seed);
}

const std::array<std::string, 5>& feature_names(ProblemKind kind) {
    static const std::array<std::string, 5> obpp = {
        "num_items", "weight_dist", "sequence", "capacity", "capacity_ratio"};
    static const std::array<std::string, 5> cvrp = {
        "num_customers", "location_dist", "demand_dist", "vehicle_capacity",
        "capacity_ratio"};
    return kind == ProblemKind::Obpp ? obpp : cvrp;
}

int feature_index(ProblemKind kind, const std::string& name) {
    const auto& names = feature_names(kind);
    for (int i = 0; i < 5; ++i) {
        if (names[static_cast<std::size_t>(i)] == name) return i;
    }
    throw std::invalid_argument("unknown feature dimension: " + name);
}

AnyKey parse_key_string(ProblemKind kind, const std::string& text) {
    std::vector<std::string> parts;
    std::string current;
    for (char ch : text) {
        if (ch == ',') {
            parts.push_back(current);
            current.clear();
        } else if (!std::isspace(static_cast<unsigned char>(ch))) {
            current.push_back(ch);
        }
    }
    parts.push_back(current);
    if (parts.size() != 5) {
        throw std::invalid_argument(
            "key must have 5 comma-separated fields, got: " + text);
    }
    const auto to_int = [&](const std::string& s) {
        std::size_t pos = 0;
        const int v = std::stoi(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("bad integer in key: " + s);
        return v;
    };
    const auto to_real = [&](const std::string& s) {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("bad real in key: " + s);
        return v;
    };
    if (kind == ProblemKind::Obpp) {
        return ObppSubclassKey{to_int(parts[0]), weight_distribution_from_string(parts[1]),
                               sequence_type_from_string(parts[2]), to_int(parts[3]),
                               to_real(parts[4])};
    }
    return CvrpSubclassKey{to_int(parts[0]), location_distribution_from_string(parts[1]),
                           weight_distribution_from_string(parts[2]), to_int(parts[3]),
                           to_real(parts[4])};
}

bool is_grid_key(const AnyKey& key) {
    if (std::holds_alternative<ObppSubclassKey>(key)) {
        const auto& k = std::get<ObppSubclassKey>(key);
        const bool items_ok = k.num_items >= 500 && k.num_items <= 5000 &&
                              k.num_items % 500 == 0;
        const bool cap_ok = k.capacity >= 50 && k.capacity <= 500 && k.capacity % 50 == 0;
        const double scaled = k.capacity_ratio * 10.0;
        const double nearest = std::round(scaled);
        const bool ratio_ok = std::abs(scaled - nearest) < 1e-9 && nearest >= 3 && nearest <= 7;
        return items_ok && cap_ok && ratio_ok;
    }
    const auto& k = std::get<CvrpSubclassKey>(key);
    const bool cust_ok = k.num_customers >= 200 && k.num_customers <= 1000 &&
                         k.num_customers % 200 == 0;
    const bool cap_ok = k.vehicle_capacity >= 50 && k.vehicle_capacity <= 150 &&
                        k.vehicle_capacity % 25 == 0;
    const double scaled = k.capacity_ratio * 10.0;
    const double nearest = std::round(scaled);
    const bool ratio_ok = std::abs(scaled - nearest) < 1e-9 &&
                          (nearest == 3 || nearest == 5 || nearest == 7);
    return cust_ok && cap_ok && ratio_ok;
}

nlohmann::json key_to_json(const AnyKey& key) {
    nlohmann::json j;
    if (std::holds_alternative<ObppSubclassKey>(key)) {
        const auto& k = std::get<ObppSubclassKey>(key);
        j["num_items"] = k.num_items;
        j["weight_dist"] = to_string(k.weight_dist);
        j["sequence"] = to_string(k.sequence);
        j["capacity"] = k.capacity;
        j["capacity_ratio"] = k.capacity_ratio;
    } else {
        const auto& k = std::get<CvrpSubclassKey>(key);
        j["num_customers"] = k.num_customers;
        j["location_dist"] = to_string(k.location_dist);
        j["demand_dist"] = to_string(k.demand_dist);
        j["vehicle_capacity"] = k.vehicle_capacity;
        j["capacity_ratio"] = k.capacity_ratio;
    }
    return j;
}

AnyKey key_from_json(ProblemKind kind, const nlohmann::json& j) {
    if (kind == ProblemKind::Obpp) {
        return ObppSubclassKey{
            j.at("num_items").get<int>(),
            weight_distribution_from_string(j.at("weight_dist").get<std::string>()),
            sequence_type_from_string(j.at("sequence").get<std::string>()),
            j.at("capacity").get<int>(), j.at("capacity_ratio").get<double>()};
    }
    return CvrpSubclassKey{
        j.at("num_customers").get<int>(),
        location_distribution_from_string(j.at("location_dist").get<std::string>()),
        weight_distribution_from_string(j.at("demand_dist").get<std::string>()),
        j.at("vehicle_capacity").get<int>(), j.at("capacity_ratio").get<double>()};
}

nlohmann::json instance_to_json(const AnyInstance& instance) {
    nlohmann::json j;
    if (std::holds_alternative<ObppInstance>(instance)) {
        const auto& inst = std::get<ObppInstance>(instance);
        j["kind"] = "obpp";
        j["key"] = key_to_json(inst.key);
        j["seed"] = inst.seed;
        j["capacity"] = inst.capacity;
        j["items"] = inst.items;
    } else {
        const auto& inst = std::get<CvrpInstance>(instance);
        j["kind"] = "cvrp";
        j["key"] = key_to_json(inst.key);
        j["seed"] = inst.seed;
        j["vehicle_capacity"] = inst.vehicle_capacity;
        j["depot"] = {inst.depot.x, inst.depot.y};
        nlohmann::json customers = nlohmann::json::array();
        for (const auto& c : inst.customers) {
            customers.push_back({{"x", c.pos.x}, {"y", c.pos.y}, {"demand", c.demand}});
        }
        j["customers"] = std::move(customers);
    }
    return j;
}

AnyInstance instance_from_json(const nlohmann::json& j) {
    const ProblemKind kind = problem_kind_from_string(j.at("kind").get<std::string>());
    if (kind == ProblemKind::Obpp) {
        ObppInstance inst;
        inst.key = std::get<ObppSubclassKey>(key_from_json(kind, j.at("key")));
        inst.seed = j.at("seed").get<std::uint64_t>();
        inst.capacity = j.at("capacity").get<int>();
        inst.items = j.at("items").get<std::vector<int>>();
        return inst;
    }
    CvrpInstance inst;
    inst.key = std::get<CvrpSubclassKey>(key_from_json(kind, j.at("key")));
    inst.seed = j.at("seed").get<std::uint64_t>();
    inst.vehicle_capacity = j.at("vehicle_capacity").get<int>();
    inst.depot = {j.at("depot")[0].get<double>(), j.at("depot")[1].get<double>()};
    for (const auto& c : j.at("customers")) {
        inst.customers.push_back(
            {{c.at("x").get<double>(), c.at("y").get<double>()}, c.at("demand").get<int>()});
    }
    return inst;
}

void write_instance_file(const AnyInstance& instance, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << instance_to_json(instance).dump(2) << "\n";
}

AnyInstance read_instance_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open instance file: " + path);
    nlohmann::json j;
    in >> j;
    return instance_from_json(j);
}

}  // namespace instspec
