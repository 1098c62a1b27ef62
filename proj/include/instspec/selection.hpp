#pragma once

#include <optional>
#include <string>
#include <vector>

#include "instspec/classifier.hpp"
#include "instspec/llm.hpp"
#include "instspec/pool.hpp"
#include "instspec/problems.hpp"
#include "instspec/rng.hpp"

namespace instspec {

struct Candidate {
    AnyKey key;
    std::string heuristic_id;
    double distance = 0.0;
    std::string description;
    std::string program_text;
    double fitness = 0.0;
};

// Ascending by distance, ties by lexicographic key. Entries sharing a
// heuristic id are kept: they carry distinct subclass descriptions.
using CandidateSet = std::vector<Candidate>;

struct SelectionOutcome {
    std::string chosen_id;
    AnyKey chosen_key;
    std::string program_text;
    std::string strategy;
    int queries_used = 0;
    bool fallback = false;  // set when llm/classifier fell back to closest
    CandidateSet candidates;
};

// Distance-based pre-selection: standardizes the target features with the
// pool's stats and returns the k_c nearest pool keys. Depends only on
// feature vectors and pool keys, never on program contents.
CandidateSet preselect(const FeatureVector& instance_features, const HeuristicPool& pool,
                       int k_c);

SelectionOutcome select_random(const CandidateSet& candidates, Rng& rng);
SelectionOutcome select_closest(const CandidateSet& candidates);
SelectionOutcome select_llm(const CandidateSet& candidates,
                            const FeatureVector& instance_features, ProblemKind kind,
                            LlmClient& client, int retry_limit);
SelectionOutcome select_classifier(const ClassifierModel& model,
                                   const CandidateSet& candidates,
                                   const FeatureVector& standardized_features);

// Derives count / capacity / realized mean ratio from raw instance data and
// cross-checks the declared key; returns a warning when any numeric feature
// disagrees by more than 10%.
std::optional<std::string> check_declared_features(const AnyInstance& instance);

}  // namespace instspec
