#include "instspec/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace instspec {

namespace {

// OBPP binding slots, in binding_set(Obpp) order.
constexpr int kItem = 0;
constexpr int kRemaining = 1;
constexpr int kCapacity = 2;
constexpr int kFill = 3;
constexpr int kIndex = 4;
constexpr int kBinsOpen = 5;

// CVRP binding slots.
constexpr int kDist = 0;
constexpr int kDemand = 1;
constexpr int kVRemaining = 2;
constexpr int kVCapacity = 3;
constexpr int kDistDepotC = 4;
constexpr int kDistPDepot = 5;
constexpr int kUnserved = 6;

}  // namespace

ObppSolution pack_obpp(const ObppInstance& instance, const HeuristicProgram& program) {
    if (program.kind != ProblemKind::Obpp) {
        throw std::invalid_argument("pack_obpp: program kind must be OBPP");
    }
    const CompiledProgram compiled = CompiledProgram::compile(program);
    const double capacity = static_cast<double>(instance.capacity);

    ObppSolution solution;
    solution.assignments.reserve(instance.items.size());
    std::vector<int> remaining;  // per open bin

    std::array<double, kMaxVarSlots> slots{};
    slots[kCapacity] = capacity;

    for (int item : instance.items) {
        slots[kItem] = static_cast<double>(item);
        slots[kBinsOpen] = static_cast<double>(remaining.size());

        int best_bin = -1;
        double best_score = 0.0;
        for (std::size_t b = 0; b < remaining.size(); ++b) {
            if (remaining[b] < item) continue;
            slots[kRemaining] = static_cast<double>(remaining[b]);
            slots[kFill] = capacity - slots[kRemaining];
            slots[kIndex] = static_cast<double>(b);
            const double score = compiled.eval(slots);
            if (best_bin < 0 || score > best_score) {
                best_bin = static_cast<int>(b);
                best_score = score;
            }
        }
        if (best_bin < 0) {
            if (item > instance.capacity) {
                throw std::invalid_argument(
                    "pack_obpp: item exceeds bin capacity (instance invariant violated)");
            }
            remaining.push_back(instance.capacity - item);
            best_bin = static_cast<int>(remaining.size()) - 1;
        } else {
            remaining[static_cast<std::size_t>(best_bin)] -= item;
        }
        solution.assignments.push_back(best_bin);
    }

    solution.bin_count = static_cast<int>(remaining.size());
    solution.loads.resize(remaining.size());
    for (std::size_t b = 0; b < remaining.size(); ++b) {
        solution.loads[b] = instance.capacity - remaining[b];
    }
    return solution;
}

CvrpSolution route_cvrp(const CvrpInstance& instance, const HeuristicProgram& program) {
    if (program.kind != ProblemKind::Cvrp) {
        throw std::invalid_argument("route_cvrp: program kind must be CVRP");
    }
    const CompiledProgram compiled = CompiledProgram::compile(program);
    const int n = static_cast<int>(instance.customers.size());

    CvrpSolution solution;
    std::vector<bool> visited(static_cast<std::size_t>(n), false);
    int unserved = n;

    std::array<double, kMaxVarSlots> slots{};
    slots[kVCapacity] = static_cast<double>(instance.vehicle_capacity);

    Point position = instance.depot;
    int remaining = instance.vehicle_capacity;
    std::vector<int> route;

    while (unserved > 0) {
        slots[kVRemaining] = static_cast<double>(remaining);
        slots[kDistPDepot] = euclidean(position, instance.depot);
        slots[kUnserved] = static_cast<double>(unserved);

        int best = -1;
        double best_score = 0.0;
        for (int j = 0; j < n; ++j) {
            if (visited[static_cast<std::size_t>(j)]) continue;
            const Customer& cust = instance.customers[static_cast<std::size_t>(j)];
            if (cust.demand > remaining) continue;
            slots[kDist] = euclidean(position, cust.pos);
            slots[kDemand] = static_cast<double>(cust.demand);
            slots[kDistDepotC] = euclidean(instance.depot, cust.pos);
            const double score = compiled.eval(slots);
            if (best < 0 || score > best_score) {
                best = j;
                best_score = score;
            }
        }

        if (best < 0) {
            if (route.empty()) {
                // A fresh vehicle cannot serve anyone left, so some demand
                // exceeds the vehicle capacity.
                throw std::invalid_argument(
                    "route_cvrp: customer demand exceeds vehicle capacity "
                    "(instance invariant violated)");
            }
            // No feasible customer: close the route and start fresh.
            solution.total_distance += euclidean(position, instance.depot);
            solution.routes.push_back(std::move(route));
            route.clear();
            position = instance.depot;
            remaining = instance.vehicle_capacity;
            continue;
        }

        const Customer& cust = instance.customers[static_cast<std::size_t>(best)];
        solution.total_distance += euclidean(position, cust.pos);
        position = cust.pos;
        remaining -= cust.demand;
        visited[static_cast<std::size_t>(best)] = true;
        route.push_back(best);
        --unserved;
    }
    if (!route.empty()) {
        solution.total_distance += euclidean(position, instance.depot);
        solution.routes.push_back(std::move(route));
    }
    return solution;
}

double obpp_lower_bound(const ObppInstance& instance) {
    long long total = 0;
    for (int w : instance.items) total += w;
    const long long cap = instance.capacity;
    return static_cast<double>((total + cap - 1) / cap);
}

double optimality_gap(double obj, double ref) {
    if (ref == 0.0) {
        throw std::invalid_argument("optimality_gap: reference must be nonzero");
    }
    return 100.0 * (obj - ref) / std::abs(ref);
}

double objective(const AnyInstance& instance, const HeuristicProgram& program) {
    if (std::holds_alternative<ObppInstance>(instance)) {
        return static_cast<double>(
            pack_obpp(std::get<ObppInstance>(instance), program).bin_count);
    }
    return route_cvrp(std::get<CvrpInstance>(instance), program).total_distance;
}

double fitness(const HeuristicProgram& program, std::span<const AnyInstance> instances) {
    if (instances.empty()) {
        throw std::invalid_argument("fitness: empty instance list");
    }
    double sum = 0.0;
    for (const AnyInstance& inst : instances) {
        if (kind_of(inst) != program.kind) {
            throw std::invalid_argument("fitness: instance kind does not match program");
        }
        sum += objective(inst, program);
    }
    return -(sum / static_cast<double>(instances.size()));
}

namespace {

struct ObppBranchAndBound {
    const std::vector<int>& items;
    int capacity;
    int best;
    std::vector<int> remaining;

    explicit ObppBranchAndBound(const ObppInstance& inst)
        : items(inst.items), capacity(inst.capacity),
          best(static_cast<int>(inst.items.size())) {}

    void dfs(std::size_t idx, int bins, long long weight_left) {
        if (bins >= best) return;
        if (idx == items.size()) {
            best = bins;
            return;
        }
        // Free space in open bins caps how much can be absorbed without new
        // bins; the rest needs at least ceil(overflow / capacity) more.
        long long free_space = 0;
        for (int r : remaining) free_space += r;
        const long long overflow = weight_left - free_space;
        if (overflow > 0) {
            const int extra = static_cast<int>((overflow + capacity - 1) / capacity);
            if (bins + extra >= best) return;
        }

        const int item = items[idx];
        for (std::size_t b = 0; b < remaining.size(); ++b) {
            if (remaining[b] < item) continue;
            remaining[b] -= item;
            dfs(idx + 1, bins, weight_left - item);
            remaining[b] += item;
        }
        // Opening one new bin covers all symmetric placements.
        remaining.push_back(capacity - item);
        dfs(idx + 1, bins + 1, weight_left - item);
        remaining.pop_back();
    }
};

}  // namespace

int brute_force_obpp(const ObppInstance& instance) {
    const std::size_t n = instance.items.size();
    if (n > 12) {
        throw std::invalid_argument("brute_force_obpp: supports at most 12 items");
    }
    if (n == 0) return 0;
    ObppBranchAndBound bnb(instance);
    long long total = 0;
    for (int w : instance.items) total += w;
    bnb.dfs(0, 0, total);
    return bnb.best;
}

double brute_force_cvrp(const CvrpInstance& instance) {
    const int n = static_cast<int>(instance.customers.size());
    if (n > 8) {
        throw std::invalid_argument("brute_force_cvrp: supports at most 8 customers");
    }
    if (n == 0) return 0.0;

    const int full = (1 << n) - 1;
    constexpr double kInf = std::numeric_limits<double>::infinity();

    std::vector<std::array<double, 8>> dist_c(static_cast<std::size_t>(n));
    std::array<double, 8> dist_depot{};
    for (int i = 0; i < n; ++i) {
        dist_depot[static_cast<std::size_t>(i)] =
            euclidean(instance.depot, instance.customers[static_cast<std::size_t>(i)].pos);
        for (int j = 0; j < n; ++j) {
            dist_c[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                euclidean(instance.customers[static_cast<std::size_t>(i)].pos,
                          instance.customers[static_cast<std::size_t>(j)].pos);
        }
    }

    // Held-Karp paths: dp[mask][k] = cheapest depot-start path visiting mask,
    // ending at customer k.
    std::vector<std::array<double, 8>> dp(static_cast<std::size_t>(full + 1));
    for (auto& row : dp) row.fill(kInf);
    for (int k = 0; k < n; ++k) {
        dp[static_cast<std::size_t>(1 << k)][static_cast<std::size_t>(k)] =
            dist_depot[static_cast<std::size_t>(k)];
    }
    for (int mask = 1; mask <= full; ++mask) {
        for (int k = 0; k < n; ++k) {
            const double cur = dp[static_cast<std::size_t>(mask)][static_cast<std::size_t>(k)];
            if (!(cur < kInf) || !(mask & (1 << k))) continue;
            for (int j = 0; j < n; ++j) {
                if (mask & (1 << j)) continue;
                const int next = mask | (1 << j);
                double& cell = dp[static_cast<std::size_t>(next)][static_cast<std::size_t>(j)];
                const double cand =
                    cur + dist_c[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
                if (cand < cell) cell = cand;
            }
        }
    }

    // Route cost per capacity-feasible subset, closing back to the depot.
    std::vector<double> route_cost(static_cast<std::size_t>(full + 1), kInf);
    for (int mask = 1; mask <= full; ++mask) {
        int demand = 0;
        for (int k = 0; k < n; ++k) {
            if (mask & (1 << k)) demand += instance.customers[static_cast<std::size_t>(k)].demand;
        }
        if (demand > instance.vehicle_capacity) continue;
        double best = kInf;
        for (int k = 0; k < n; ++k) {
            if (!(mask & (1 << k))) continue;
            const double cand =
                dp[static_cast<std::size_t>(mask)][static_cast<std::size_t>(k)] +
                dist_depot[static_cast<std::size_t>(k)];
            best = std::min(best, cand);
        }
        route_cost[static_cast<std::size_t>(mask)] = best;
    }

    // Partition into feasible routes.
    std::vector<double> part(static_cast<std::size_t>(full + 1), kInf);
    part[0] = 0.0;
    for (int mask = 1; mask <= full; ++mask) {
        const int low = mask & (-mask);
        for (int sub = mask; sub > 0; sub = (sub - 1) & mask) {
            if (!(sub & low)) continue;  // force the lowest customer into this route
            const double rc = route_cost[static_cast<std::size_t>(sub)];
            const double rest = part[static_cast<std::size_t>(mask ^ sub)];
            if (rc < kInf && rest < kInf) {
                part[static_cast<std::size_t>(mask)] =
                    std::min(part[static_cast<std::size_t>(mask)], rc + rest);
            }
        }
    }
    return part[static_cast<std::size_t>(full)];
}

std::optional<std::string> check_solution(const ObppInstance& instance,
                                          const ObppSolution& solution) {
    if (solution.assignments.size() != instance.items.size()) {
        return "assignment count does not match item count";
    }
    std::vector<int> loads(static_cast<std::size_t>(solution.bin_count), 0);
    for (std::size_t i = 0; i < instance.items.size(); ++i) {
        const int b = solution.assignments[i];
        if (b < 0 || b >= solution.bin_count) return "bin index out of range";
        loads[static_cast<std::size_t>(b)] += instance.items[i];
    }
    for (std::size_t b = 0; b < loads.size(); ++b) {
        if (loads[b] > instance.capacity) return "bin overload";
        if (loads[b] == 0) return "empty bin (indices not dense)";
        if (b < solution.loads.size() && loads[b] != solution.loads[b]) {
            return "recorded load mismatch";
        }
    }
    if (solution.loads.size() != loads.size()) return "load vector size mismatch";
    return std::nullopt;
}

std::optional<std::string> check_solution(const CvrpInstance& instance,
                                          const CvrpSolution& solution) {
    const int n = static_cast<int>(instance.customers.size());
    std::vector<int> seen(static_cast<std::size_t>(n), 0);
    double recomputed = 0.0;
    for (const auto& route : solution.routes) {
        if (route.empty()) return "empty route";
        int demand = 0;
        Point position = instance.depot;
        for (int j : route) {
            if (j < 0 || j >= n) return "customer index out of range";
            seen[static_cast<std::size_t>(j)] += 1;
            const Customer& cust = instance.customers[static_cast<std::size_t>(j)];
            demand += cust.demand;
            recomputed += euclidean(position, cust.pos);
            position = cust.pos;
        }
        recomputed += euclidean(position, instance.depot);
        if (demand > instance.vehicle_capacity) return "route demand exceeds capacity";
    }
    for (int j = 0; j < n; ++j) {
        if (seen[static_cast<std::size_t>(j)] != 1) return "customer not served exactly once";
    }
    if (std::abs(recomputed - solution.total_distance) > 1e-9) {
        return "total distance does not match recomputation";
    }
    return std::nullopt;
}

std::vector<FeatureGroupRow> aggregate_by_feature(std::span<const ReportRow> rows,
                                                  ProblemKind kind,
                                                  const std::string& dimension) {
    const int dim = feature_index(kind, dimension);
    std::map<double, std::vector<const ReportRow*>> groups;
    for (const ReportRow& row : rows) {
        groups[row.features[static_cast<std::size_t>(dim)]].push_back(&row);
    }
    std::vector<FeatureGroupRow> out;
    out.reserve(groups.size());
    for (const auto& [value, members] : groups) {
        FeatureGroupRow g;
        g.feature_value = value;
        g.count = static_cast<int>(members.size());
        double obj_sum = 0.0;
        double gap_sum = 0.0;
        int gap_count = 0;
        for (const ReportRow* row : members) {
            obj_sum += row->objective;
            if (row->gap_percent) {
                gap_sum += *row->gap_percent;
                ++gap_count;
            }
        }
        g.mean_obj = obj_sum / static_cast<double>(members.size());
        if (gap_count > 0) {
            g.mean_gap = gap_sum / static_cast<double>(gap_count);
            g.one_minus_gap = 1.0 - *g.mean_gap / 100.0;
        }
        out.push_back(g);
    }
    return out;
}

std::string report_csv(const std::string& group_name,
                       std::span<const FeatureGroupRow> rows) {
    std::ostringstream out;
    out << "group,feature_value,mean_obj,mean_gap,one_minus_gap\n";
    out.precision(6);
    out << std::fixed;
    for (const FeatureGroupRow& row : rows) {
        out << group_name << "," << row.feature_value << "," << row.mean_obj << ",";
        if (row.mean_gap) out << *row.mean_gap;
        out << ",";
        if (row.one_minus_gap) out << *row.one_minus_gap;
        out << "\n";
    }
    return out.str();
}

}  // namespace instspec
