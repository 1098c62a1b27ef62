#pragma once

// Prompt templates. The same text is versioned under data/prompts/ so
// experiment prompts are auditable; a unit test keeps the two in sync.
// Placeholders in {braces} are substituted by the renderers in llm.cpp.

namespace instspec::prompts {

inline constexpr const char* kGenerationSystem =
    R"(You design priority functions for {problem_name}. A priority function is one arithmetic expression that scores a single candidate decision; at each step the candidate with the highest score is chosen.

Expression language:
- variables: {variable_docs}
- operators: + - * / and unary minus; division by a near-zero value yields 0
- functions: min(a, b), max(a, b), abs(x), sqrt(x) of |x|, log(x) of |x| + 1e-9, exp(x) with the argument capped at 50, pow(a, b) which preserves the sign of a and clamps b to [-8, 8], iflt(a, b, x, y) which yields x when a < b and y otherwise
- numeric constants in decimal or scientific notation
- at most 512 nodes and nesting depth 24

Reply with a one-line rationale followed by exactly one fenced code block containing a single expression and nothing else.)";

inline constexpr const char* kGenerationUser =
    R"([Kind: {kind}]
[Operation: {operation}]
Problem subclass:
{description}

{parents}{instruction}{retry_note})";

inline constexpr const char* kSelectionSystem =
    R"(You route optimization problem instances to stored heuristics. Given the feature profile of a target instance and a numbered list of candidate heuristics, pick the candidate whose subclass profile best matches the target instance.

Answer with the single number of the chosen candidate.)";

inline constexpr const char* kSelectionUser =
    R"([Task: SELECT]
Target instance features:
{features}

Candidate heuristics:
{candidates}
Answer with one number between 1 and {count}.{retry_note})";

inline constexpr const char* kCandidateEntry =
    R"(Candidate {index}:
  Subclass: {description}
  Priority expression: `{program}`
  Training fitness: {fitness}
)";

inline constexpr const char* kOperatorInit =
    "Propose one priority expression well suited to this subclass.";
inline constexpr const char* kOperatorE1 =
    "Combine ideas from both parent expressions into a child expression whose "
    "decision behavior departs substantially from either parent.";
inline constexpr const char* kOperatorE2 =
    "Merge the two parent expressions into a child expression that keeps the "
    "core decision logic they share.";
inline constexpr const char* kOperatorM1 =
    "Rework part of the parent expression's structure so the resulting child "
    "expression makes better decisions.";
inline constexpr const char* kOperatorM2 =
    "Keep the parent expression's structure and tune its numeric constants for "
    "better local behavior.";
inline constexpr const char* kOperatorM3 =
    "Simplify the parent expression by removing redundant components while "
    "keeping its behavior.";

}  // namespace instspec::prompts
