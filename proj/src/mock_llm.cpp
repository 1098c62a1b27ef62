#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "instspec/llm.hpp"
#include "instspec/rng.hpp"

namespace instspec {

namespace {

// --- tree surgery helpers ---------------------------------------------------

void collect_nodes(const ExprPtr& e, std::vector<ExprPtr>& out) {
    if (!e) return;
    out.push_back(e);
    collect_nodes(e->a, out);
    collect_nodes(e->b, out);
    collect_nodes(e->c, out);
    collect_nodes(e->d, out);
}

ExprPtr rebuild(const Expr& node, ExprPtr a, ExprPtr b, ExprPtr c, ExprPtr d) {
    switch (node.kind) {
    case Expr::Kind::Const: return make_const(node.value);
    case Expr::Kind::Var: {
        auto copy = std::make_shared<Expr>(node);
        return copy;
    }
    case Expr::Kind::Unary: return make_unary(node.uop, std::move(a));
    case Expr::Kind::Binary: return make_binary(node.bop, std::move(a), std::move(b));
    case Expr::Kind::IfLess:
        return make_iflt(std::move(a), std::move(b), std::move(c), std::move(d));
    }
    return make_const(0.0);
}

// Replaces the subtree at preorder index `target` (0 = root).
ExprPtr replace_at(const ExprPtr& e, int& counter, int target, const ExprPtr& repl) {
    if (!e) return nullptr;
    if (counter++ == target) return repl;
    ExprPtr a = replace_at(e->a, counter, target, repl);
    ExprPtr b = replace_at(e->b, counter, target, repl);
    ExprPtr c = replace_at(e->c, counter, target, repl);
    ExprPtr d = replace_at(e->d, counter, target, repl);
    return rebuild(*e, std::move(a), std::move(b), std::move(c), std::move(d));
}

ExprPtr replace_subtree(const ExprPtr& root, int target, const ExprPtr& repl) {
    int counter = 0;
    return replace_at(root, counter, target, repl);
}

ExprPtr random_node_of(Rng& rng, const ExprPtr& root) {
    std::vector<ExprPtr> nodes;
    collect_nodes(root, nodes);
    return nodes[rng.uniform_below(nodes.size())];
}

// Random proper subtree (never the root) of a multi-node tree.
ExprPtr random_proper_subtree(Rng& rng, const ExprPtr& root) {
    std::vector<ExprPtr> nodes;
    collect_nodes(root, nodes);
    if (nodes.size() <= 1) return root;
    return nodes[1 + rng.uniform_below(nodes.size() - 1)];
}

ExprPtr enforce_budget(Rng& rng, ExprPtr e) {
    while (expr_size(e) > kMaxExprNodes || expr_depth(e) > kMaxExprDepth) {
        e = random_proper_subtree(rng, e);
    }
    return e;
}

// --- syntactic operators -----------------------------------------------------

ExprPtr jitter_constants(Rng& rng, const ExprPtr& e, bool& changed) {
    if (!e) return nullptr;
    if (e->kind == Expr::Kind::Const) {
        const double sigma = 0.2 * std::abs(e->value);
        if (sigma > 0.0) {
            changed = true;
            return make_const(e->value + sigma * normal_quantile(rng.uniform01()));
        }
        return make_const(e->value);
    }
    ExprPtr a = jitter_constants(rng, e->a, changed);
    ExprPtr b = jitter_constants(rng, e->b, changed);
    ExprPtr c = jitter_constants(rng, e->c, changed);
    ExprPtr d = jitter_constants(rng, e->d, changed);
    return rebuild(*e, std::move(a), std::move(b), std::move(c), std::move(d));
}

// E1: replace a random subtree of A with a random subtree of B. The result is
// nudged with a constant factor if it collapses onto either parent, so
// crossover offspring always get a fresh id.
ExprPtr crossover_disruptive(Rng& rng, const ExprPtr& a, const ExprPtr& b,
                             const std::string& text_a, const std::string& text_b) {
    const int size_a = expr_size(a);
    const int target = size_a > 1 ? 1 + static_cast<int>(rng.uniform_below(
                                            static_cast<std::uint64_t>(size_a - 1)))
                                  : 0;
    ExprPtr child = replace_subtree(a, target, random_node_of(rng, b));
    child = enforce_budget(rng, child);
    for (int guard = 0; guard < 4; ++guard) {
        const std::string text = render(child);
        if (text != text_a && text != text_b) break;
        const double factor = 1.1 + rng.uniform01();
        child = enforce_budget(rng, make_binary(BinaryOp::Mul, child, make_const(
                                                    std::round(factor * 100.0) / 100.0)));
    }
    return child;
}

// E2: keep A's root, replace one of its child slots with a subtree of B.
ExprPtr crossover_conservative(Rng& rng, const ExprPtr& a, const ExprPtr& b) {
    const ExprPtr donor = random_node_of(rng, b);
    switch (a->kind) {
    case Expr::Kind::Unary:
        return make_unary(a->uop, donor);
    case Expr::Kind::Binary:
        return rng.uniform01() < 0.5 ? make_binary(a->bop, donor, a->b)
                                     : make_binary(a->bop, a->a, donor);
    case Expr::Kind::IfLess: {
        switch (rng.uniform_below(4)) {
        case 0: return make_iflt(donor, a->b, a->c, a->d);
        case 1: return make_iflt(a->a, donor, a->c, a->d);
        case 2: return make_iflt(a->a, a->b, donor, a->d);
        default: return make_iflt(a->a, a->b, a->c, donor);
        }
    }
    case Expr::Kind::Const:
    case Expr::Kind::Var:
        break;
    }
    // Leaf root: nothing to preserve below it, combine both parents instead.
    if (b->kind != Expr::Kind::Const && b->kind != Expr::Kind::Var) {
        return crossover_conservative(rng, b, a);
    }
    return make_binary(BinaryOp::Add, a, b);
}

bool is_const_value(const ExprPtr& e, double v) {
    return e->kind == Expr::Kind::Const && e->value == v;
}

bool subtree_has_var(const ExprPtr& e) {
    if (!e) return false;
    if (e->kind == Expr::Kind::Var) return true;
    return subtree_has_var(e->a) || subtree_has_var(e->b) || subtree_has_var(e->c) ||
           subtree_has_var(e->d);
}

// M3 core: one bottom-up algebraic simplification pass.
ExprPtr simplify(const ExprPtr& e, ProblemKind kind) {
    if (!e || e->kind == Expr::Kind::Const || e->kind == Expr::Kind::Var) return e;
    ExprPtr a = simplify(e->a, kind);
    ExprPtr b = simplify(e->b, kind);
    ExprPtr c = simplify(e->c, kind);
    ExprPtr d = simplify(e->d, kind);
    ExprPtr node = rebuild(*e, a, b, c, d);

    // Constant folding over variable-free subtrees (protected semantics).
    if (!subtree_has_var(node) && node->kind != Expr::Kind::Const) {
        const HeuristicProgram tmp = make_program(kind, node);
        const double slots[kMaxVarSlots] = {};
        return make_const(evaluate_score(tmp, std::span<const double>(slots)));
    }

    switch (node->kind) {
    case Expr::Kind::Unary:
        if (node->uop == UnaryOp::Neg && node->a->kind == Expr::Kind::Unary &&
            node->a->uop == UnaryOp::Neg) {
            return node->a->a;
        }
        if (node->uop == UnaryOp::Abs && node->a->kind == Expr::Kind::Unary &&
            node->a->uop == UnaryOp::Abs) {
            return node->a;
        }
        return node;
    case Expr::Kind::Binary: {
        const ExprPtr& l = node->a;
        const ExprPtr& r = node->b;
        switch (node->bop) {
        case BinaryOp::Sub:
            if (structural_equal(l, r)) return make_const(0.0);
            if (is_const_value(r, 0.0)) return l;
            break;
        case BinaryOp::Div:
            if (structural_equal(l, r)) return make_const(1.0);
            if (is_const_value(r, 1.0)) return l;
            break;
        case BinaryOp::Add:
            if (is_const_value(l, 0.0)) return r;
            if (is_const_value(r, 0.0)) return l;
            break;
        case BinaryOp::Mul:
            if (is_const_value(l, 1.0)) return r;
            if (is_const_value(r, 1.0)) return l;
            if (is_const_value(l, 0.0) || is_const_value(r, 0.0)) return make_const(0.0);
            break;
        case BinaryOp::Min:
        case BinaryOp::Max:
            if (structural_equal(l, r)) return l;
            break;
        case BinaryOp::Pow:
            if (is_const_value(r, 1.0)) return l;
            break;
        }
        return node;
    }
    case Expr::Kind::IfLess:
        if (structural_equal(node->c, node->d)) return node->c;
        return node;
    default:
        return node;
    }
}

// --- plausible initial rules --------------------------------------------------

const std::vector<std::string>& motif_pool(ProblemKind kind) {
    static const std::vector<std::string> obpp = {
        "-(remaining - item)",
        "remaining",
        "-remaining",
        "-index",
        "fill",
        "iflt(remaining - item, 0.5, 1000, remaining)",
        "iflt(remaining - item, 0.5, 1000, -(remaining - item))",
        "iflt(remaining - item, 0.25 * capacity, -(remaining - item), remaining)",
        "-(remaining - item) * item",
        "-(remaining - item) / (1 + index)",
        "-abs(remaining - 2 * item)",
        "-pow(remaining - item, 2)",
        "min(-(remaining - item), -index)",
        "fill - 0.5 * index",
    };
    static const std::vector<std::string> cvrp = {
        "-dist",
        "-dist - 0.5 * dist_depot_c",
        "-dist + 0.2 * dist_depot_c",
        "-dist + 0.1 * (remaining - demand)",
        "-dist * (1 + demand / capacity)",
        "-(dist + dist_p_depot) / 2",
        "iflt(remaining - demand, 5, -1000, -dist)",
        "-dist - 0.1 * demand",
        "-pow(dist, 2)",
        "-dist + demand / capacity",
    };
    return kind == ProblemKind::Obpp ? obpp : cvrp;
}

ExprPtr plausible_expr(Rng& rng, ProblemKind kind) {
    if (rng.uniform01() < 0.55) {
        const auto& pool = motif_pool(kind);
        const std::string& text = pool[rng.uniform_below(pool.size())];
        ParseResult parsed = parse(text, kind);
        ExprPtr expr = parsed.program->expr;
        if (rng.uniform01() < 0.5) {
            bool changed = false;
            expr = jitter_constants(rng, expr, changed);
        }
        return expr;
    }
    return random_expr(rng, kind, 4);
}

std::string garbage_reply(Rng& rng) {
    static const char* kLetters = "bcdfghjklmnpqrstvwxz";
    std::string noise;
    for (int i = 0; i < 12; ++i) noise += kLetters[rng.uniform_below(20)];
    return "?? unusable reply " + noise + " ??";
}

std::string wrap_expression(const char* note, const ExprPtr& expr) {
    return std::string(note) + "\n```\n" + render(expr) + "\n```\n";
}

}  // namespace

MockLlm::MockLlm(std::uint64_t seed, double failure_rate)
    : seed_(seed), failure_rate_(failure_rate) {}

std::string MockLlm::identity() const {
    return "mock(seed=" + std::to_string(seed_) +
           ",failure_rate=" + std::to_string(failure_rate_) + ")";
}

ChatResult MockLlm::complete(std::span<const ChatMessage> messages) {
    std::string all;
    for (const ChatMessage& m : messages) {
        all += static_cast<char>('0' + static_cast<int>(m.role));
        all += '\x1f';
        all += m.content;
        all += '\x1e';
    }
    Rng rng(derive_seed({seed_, fnv1a64(all)}));

    ChatResult result;
    result.ok = true;
    result.usage.prompt_tokens = static_cast<std::int64_t>(all.size() / 4);

    if (rng.uniform01() < failure_rate_) {
        result.text = garbage_reply(rng);
        result.usage.completion_tokens = static_cast<std::int64_t>(result.text.size() / 4);
        result.usage.total_tokens = result.usage.prompt_tokens + result.usage.completion_tokens;
        return result;
    }

    if (all.find("[Task: SELECT]") != std::string::npos) {
        result.text = "I select candidate 1.";
        result.usage.completion_tokens = 6;
        result.usage.total_tokens = result.usage.prompt_tokens + result.usage.completion_tokens;
        return result;
    }

    const std::size_t op_pos = all.find("[Operation: ");
    const std::size_t kind_pos = all.find("[Kind: ");
    if (op_pos == std::string::npos || kind_pos == std::string::npos) {
        result.text = garbage_reply(rng);
        return result;
    }
    const std::size_t op_end = all.find(']', op_pos);
    const std::string op_tag = all.substr(op_pos + 12, op_end - (op_pos + 12));
    const ProblemKind kind = all.compare(kind_pos + 7, 4, "OBPP") == 0
                                 ? ProblemKind::Obpp
                                 : ProblemKind::Cvrp;

    std::vector<ExprPtr> parents;
    for (const std::string& block : extract_fenced_blocks(all)) {
        std::string text = block;
        // Trim fence padding.
        while (!text.empty() && (text.front() == '\n' || text.front() == ' ')) {
            text.erase(text.begin());
        }
        while (!text.empty() && (text.back() == '\n' || text.back() == ' ')) text.pop_back();
        ParseResult parsed = parse(text, kind);
        if (parsed.ok()) parents.push_back(parsed.program->expr);
    }

    ExprPtr child;
    const char* note = "Proposed priority rule for this subclass.";
    if (op_tag == "INIT") {
        child = plausible_expr(rng, kind);
    } else if (op_tag == "E1" && parents.size() >= 2) {
        child = crossover_disruptive(rng, parents[0], parents[1], render(parents[0]),
                                     render(parents[1]));
        note = "Recombined the parents into a substantially different rule.";
    } else if (op_tag == "E2" && parents.size() >= 2) {
        child = crossover_conservative(rng, parents[0], parents[1]);
        note = "Merged the parents while keeping their shared logic.";
    } else if (op_tag == "M1" && !parents.empty()) {
        const int size = expr_size(parents[0]);
        const int target = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(size)));
        child = replace_subtree(parents[0], target, random_expr(rng, kind, 3));
        note = "Reworked part of the parent rule's structure.";
    } else if (op_tag == "M2" && !parents.empty()) {
        bool changed = false;
        child = jitter_constants(rng, parents[0], changed);
        if (!changed) {
            // Constant-free parent: keep the structure and attach one tuned
            // constant factor.
            const double factor = 1.0 + 0.2 * normal_quantile(rng.uniform01());
            child = make_binary(BinaryOp::Mul, parents[0],
                                make_const(std::round(factor * 1000.0) / 1000.0));
        }
        note = "Tuned the parent rule's constants.";
    } else if (op_tag == "M3" && !parents.empty()) {
        child = simplify(parents[0], kind);
        if (structural_equal(child, parents[0]) && expr_size(parents[0]) > 1) {
            child = random_proper_subtree(rng, parents[0]);
        }
        note = "Removed redundant components from the parent rule.";
    } else {
        result.text = garbage_reply(rng);
        return result;
    }

    child = enforce_budget(rng, child);
    result.text = wrap_expression(note, child);
    result.usage.completion_tokens = static_cast<std::int64_t>(result.text.size() / 4);
    result.usage.total_tokens = result.usage.prompt_tokens + result.usage.completion_tokens;
    return result;
}

}  // namespace instspec
