#include "instspec/selection.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace instspec {

namespace {

SelectionOutcome outcome_from(const Candidate& chosen, const char* strategy,
                              const CandidateSet& candidates, int queries_used = 0,
                              bool fallback = false) {
    SelectionOutcome out;
    out.chosen_id = chosen.heuristic_id;
    out.chosen_key = chosen.key;
    out.program_text = chosen.program_text;
    out.strategy = strategy;
    out.queries_used = queries_used;
    out.fallback = fallback;
    out.candidates = candidates;
    return out;
}

// Candidates deduplicated by heuristic id, order preserved. Random and
// classifier strategies operate on distinct ids; the LLM sees every entry.
std::vector<const Candidate*> distinct_candidates(const CandidateSet& candidates) {
    std::vector<const Candidate*> out;
    for (const Candidate& c : candidates) {
        const bool seen = std::any_of(out.begin(), out.end(), [&](const Candidate* p) {
            return p->heuristic_id == c.heuristic_id;
        });
        if (!seen) out.push_back(&c);
    }
    return out;
}

}  // namespace

CandidateSet preselect(const FeatureVector& instance_features, const HeuristicPool& pool,
                       int k_c) {
    if (pool.entries.empty()) {
        throw std::invalid_argument("preselect: empty pool");
    }
    if (k_c < 1) {
        throw std::invalid_argument("preselect: k_c must be >= 1");
    }
    const FeatureVector target = standardize(instance_features, pool.stats);

    CandidateSet all;
    all.reserve(pool.entries.size());
    for (const auto& [key, entry] : pool.entries) {  // lexicographic order
        const FeatureVector other = standardize(feature_vector(key), pool.stats);
        double sq = 0.0;
        for (std::size_t m = 0; m < 5; ++m) {
            const double d = target[m] - other[m];
            sq += d * d;
        }
        Candidate c;
        c.key = key;
        c.heuristic_id = entry.program_id;
        c.distance = std::sqrt(sq);
        c.description = entry.description;
        c.program_text = entry.program_text;
        c.fitness = entry.fitness_post_ns;
        all.push_back(std::move(c));
    }
    // Stable sort keeps the lexicographic key order within equal distances.
    std::stable_sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) {
        return a.distance < b.distance;
    });
    if (static_cast<int>(all.size()) > k_c) {
        all.resize(static_cast<std::size_t>(k_c));
    }
    return all;
}

SelectionOutcome select_random(const CandidateSet& candidates, Rng& rng) {
    if (candidates.empty()) {
        throw std::invalid_argument("select_random: empty candidate set");
    }
    const std::vector<const Candidate*> distinct = distinct_candidates(candidates);
    const Candidate& chosen = *distinct[rng.uniform_below(distinct.size())];
    return outcome_from(chosen, "random", candidates);
}

SelectionOutcome select_closest(const CandidateSet& candidates) {
    if (candidates.empty()) {
        throw std::invalid_argument("select_closest: empty candidate set");
    }
    return outcome_from(candidates.front(), "closest", candidates);
}

SelectionOutcome select_llm(const CandidateSet& candidates,
                            const FeatureVector& instance_features, ProblemKind kind,
                            LlmClient& client, int retry_limit) {
    if (candidates.empty()) {
        throw std::invalid_argument("select_llm: empty candidate set");
    }
    std::vector<SelectionCandidateView> views;
    views.reserve(candidates.size());
    for (const Candidate& c : candidates) {
        views.push_back({c.description, c.program_text, c.fitness});
    }

    int queries_used = 0;
    for (int attempt = 1; attempt <= std::max(retry_limit, 1); ++attempt) {
        const std::vector<ChatMessage> messages =
            render_selection_prompt(instance_features, kind, views, attempt);
        const ChatResult reply = client.complete(messages);
        if (!reply.ok) break;  // transport failure: fall back below
        ++queries_used;
        const std::optional<int> index =
            parse_selection_response(reply.text, static_cast<int>(candidates.size()));
        if (index) {
            return outcome_from(candidates[static_cast<std::size_t>(*index - 1)], "llm",
                                candidates, queries_used);
        }
    }
    SelectionOutcome out = select_closest(candidates);
    out.strategy = "llm";
    out.queries_used = queries_used;
    out.fallback = true;
    return out;
}

SelectionOutcome select_classifier(const ClassifierModel& model,
                                   const CandidateSet& candidates,
                                   const FeatureVector& standardized_features) {
    if (candidates.empty()) {
        throw std::invalid_argument("select_classifier: empty candidate set");
    }
    const std::vector<double> probs = classifier_forward(model, standardized_features);

    const Candidate* best = nullptr;
    double best_prob = -1.0;
    for (const Candidate* c : distinct_candidates(candidates)) {
        int column = -1;
        for (std::size_t i = 0; i < model.ids.size(); ++i) {
            if (model.ids[i] == c->heuristic_id) {
                column = static_cast<int>(i);
                break;
            }
        }
        if (column < 0) continue;  // id unknown to the model
        const double p = probs[static_cast<std::size_t>(column)];
        if (p > best_prob) {
            best_prob = p;
            best = c;
        }
    }
    if (best == nullptr) {
        SelectionOutcome out = select_closest(candidates);
        out.strategy = "classifier";
        out.fallback = true;
        return out;
    }
    return outcome_from(*best, "classifier", candidates);
}

std::optional<std::string> check_declared_features(const AnyInstance& instance) {
    const auto relative_off = [](double actual, double declared) {
        if (declared == 0.0) return actual != 0.0;
        return std::abs(actual - declared) / std::abs(declared) > 0.10;
    };
    std::string warning;
    if (std::holds_alternative<ObppInstance>(instance)) {
        const auto& inst = std::get<ObppInstance>(instance);
        if (relative_off(static_cast<double>(inst.items.size()), inst.key.num_items)) {
            warning += "item count differs from declared num_items by more than 10%; ";
        }
        if (inst.capacity != inst.key.capacity) {
            warning += "instance capacity differs from declared capacity; ";
        }
        double sum = 0.0;
        for (int w : inst.items) sum += w;
        const double realized =
            inst.items.empty() ? 0.0 : sum / static_cast<double>(inst.items.size()) /
                                           inst.capacity;
        if (relative_off(realized, inst.key.capacity_ratio)) {
            warning += "realized weight ratio differs from declared capacity_ratio by "
                       "more than 10%; ";
        }
    } else {
        const auto& inst = std::get<CvrpInstance>(instance);
        if (relative_off(static_cast<double>(inst.customers.size()),
                         inst.key.num_customers)) {
            warning += "customer count differs from declared num_customers by more "
                       "than 10%; ";
        }
        if (inst.vehicle_capacity != inst.key.vehicle_capacity) {
            warning += "instance capacity differs from declared vehicle_capacity; ";
        }
        double sum = 0.0;
        for (const Customer& c : inst.customers) sum += c.demand;
        const double realized = inst.customers.empty()
                                    ? 0.0
                                    : sum / static_cast<double>(inst.customers.size()) /
                                          inst.vehicle_capacity;
        if (relative_off(realized, inst.key.capacity_ratio)) {
            warning += "realized demand ratio differs from declared capacity_ratio by "
                       "more than 10%; ";
        }
    }
    if (warning.empty()) return std::nullopt;
    warning.resize(warning.size() - 2);  // drop trailing "; "
    return warning;
}

}  // namespace instspec
