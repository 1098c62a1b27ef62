#include "instspec/dsl.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <stdexcept>

namespace instspec {

namespace {

double saturate(double v) {
    if (std::isnan(v)) return 0.0;
    return std::clamp(v, -kScoreClamp, kScoreClamp);
}

double apply_unary(UnaryOp op, double x) {
    switch (op) {
    case UnaryOp::Neg: return -x;
    case UnaryOp::Abs: return std::abs(x);
    case UnaryOp::Sqrt: return std::sqrt(std::abs(x));
    case UnaryOp::Exp: return std::exp(std::min(x, 50.0));
    case UnaryOp::Log: return std::log(std::abs(x) + 1e-9);
    }
    return 0.0;
}

double apply_binary(BinaryOp op, double a, double b) {
    switch (op) {
    case BinaryOp::Add: return a + b;
    case BinaryOp::Sub: return a - b;
    case BinaryOp::Mul: return a * b;
    case BinaryOp::Div: return std::abs(b) >= 1e-9 ? a / b : 0.0;
    case BinaryOp::Pow: {
        const double sign = a < 0.0 ? -1.0 : 1.0;
        const double expo = std::clamp(b, -8.0, 8.0);
        return sign * std::pow(std::abs(a), expo);
    }
    case BinaryOp::Min: return std::min(a, b);
    case BinaryOp::Max: return std::max(a, b);
    }
    return 0.0;
}

std::string format_number(double v) {
    if (v == 0.0) v = 0.0;  // normalize -0
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

void render_expr(const ExprPtr& e, std::string& out) {
    switch (e->kind) {
    case Expr::Kind::Const:
        out += format_number(e->value);
        return;
    case Expr::Kind::Var:
        out += e->var_name;
        return;
    case Expr::Kind::Unary:
        switch (e->uop) {
        case UnaryOp::Neg:
            out += "(-";
            render_expr(e->a, out);
            out += ")";
            return;
        case UnaryOp::Abs: out += "abs("; break;
        case UnaryOp::Sqrt: out += "sqrt("; break;
        case UnaryOp::Exp: out += "exp("; break;
        case UnaryOp::Log: out += "log("; break;
        }
        render_expr(e->a, out);
        out += ")";
        return;
    case Expr::Kind::Binary:
        switch (e->bop) {
        case BinaryOp::Add:
        case BinaryOp::Sub:
        case BinaryOp::Mul:
        case BinaryOp::Div: {
            const char* op = e->bop == BinaryOp::Add   ? " + "
                             : e->bop == BinaryOp::Sub ? " - "
                             : e->bop == BinaryOp::Mul ? " * "
                                                       : " / ";
            out += "(";
            render_expr(e->a, out);
            out += op;
            render_expr(e->b, out);
            out += ")";
            return;
        }
        case BinaryOp::Min: out += "min("; break;
        case BinaryOp::Max: out += "max("; break;
        case BinaryOp::Pow: out += "pow("; break;
        }
        render_expr(e->a, out);
        out += ", ";
        render_expr(e->b, out);
        out += ")";
        return;
    case Expr::Kind::IfLess:
        out += "iflt(";
        render_expr(e->a, out);
        out += ", ";
        render_expr(e->b, out);
        out += ", ";
        render_expr(e->c, out);
        out += ", ";
        render_expr(e->d, out);
        out += ")";
        return;
    }
}

// ---------------------------------------------------------------------------
// Parser: recursive descent with the usual precedence. Whitespace is
// insignificant. Errors carry the byte offset of the failure.
// ---------------------------------------------------------------------------

struct Parser {
    // Parentheses add no nodes, so the node budget alone would not stop a
    // pathologically nested input from exhausting the call stack.
    static constexpr int kMaxRecursion = 2000;

    const std::string& text;
    ProblemKind kind;
    std::size_t pos = 0;
    int nodes = 0;
    int recursion = 0;
    ParseError error;
    bool failed = false;

    explicit Parser(const std::string& t, ProblemKind k) : text(t), kind(k) {}

    struct RecursionGuard {
        Parser& parser;
        explicit RecursionGuard(Parser& p) : parser(p) {
            if (++parser.recursion > kMaxRecursion) {
                parser.fail(ParseError::Kind::BudgetExceeded, parser.pos,
                            "expression nests too deeply");
            }
        }
        ~RecursionGuard() { --parser.recursion; }
    };

    void fail(ParseError::Kind ekind, std::size_t at, std::string message) {
        if (failed) return;
        failed = true;
        error.kind = ekind;
        error.offset = at;
        error.message = std::move(message);
    }

    void skip_ws() {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) {
            ++pos;
        }
    }

    bool peek_is(char c) {
        skip_ws();
        return pos < text.size() && text[pos] == c;
    }

    bool consume(char c) {
        if (peek_is(c)) {
            ++pos;
            return true;
        }
        return false;
    }

    ExprPtr count_node(ExprPtr e) {
        if (!e) return nullptr;
        if (++nodes > kMaxExprNodes) {
            fail(ParseError::Kind::BudgetExceeded, pos,
                 "expression exceeds the 512 node budget");
            return nullptr;
        }
        return e;
    }

    ExprPtr parse_expr() {
        RecursionGuard guard(*this);
        if (failed) return nullptr;
        ExprPtr lhs = parse_term();
        while (!failed) {
            skip_ws();
            if (consume('+')) {
                ExprPtr rhs = parse_term();
                if (failed) return nullptr;
                lhs = count_node(make_binary(BinaryOp::Add, lhs, rhs));
            } else if (consume('-')) {
                ExprPtr rhs = parse_term();
                if (failed) return nullptr;
                lhs = count_node(make_binary(BinaryOp::Sub, lhs, rhs));
            } else {
                break;
            }
        }
        return failed ? nullptr : lhs;
    }

    ExprPtr parse_term() {
        ExprPtr lhs = parse_factor();
        while (!failed) {
            skip_ws();
            if (consume('*')) {
                ExprPtr rhs = parse_factor();
                if (failed) return nullptr;
                lhs = count_node(make_binary(BinaryOp::Mul, lhs, rhs));
            } else if (consume('/')) {
                ExprPtr rhs = parse_factor();
                if (failed) return nullptr;
                lhs = count_node(make_binary(BinaryOp::Div, lhs, rhs));
            } else {
                break;
            }
        }
        return failed ? nullptr : lhs;
    }

    ExprPtr parse_factor() {
        RecursionGuard guard(*this);
        if (failed) return nullptr;
        skip_ws();
        if (consume('-')) {
            ExprPtr child = parse_factor();
            if (failed) return nullptr;
            return count_node(make_unary(UnaryOp::Neg, child));
        }
        return parse_primary();
    }

    ExprPtr parse_primary() {
        skip_ws();
        if (pos >= text.size()) {
            fail(ParseError::Kind::Syntax, pos, "unexpected end of expression");
            return nullptr;
        }
        const char c = text[pos];
        if (c == '(') {
            ++pos;
            ExprPtr inner = parse_expr();
            if (failed) return nullptr;
            if (!consume(')')) {
                fail(ParseError::Kind::Syntax, pos, "expected ')'");
                return nullptr;
            }
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            return parse_number();
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            return parse_identifier_or_call();
        }
        fail(ParseError::Kind::Syntax, pos, std::string("unexpected character '") + c + "'");
        return nullptr;
    }

    ExprPtr parse_number() {
        const char* begin = text.data() + pos;
        const char* end = text.data() + text.size();
        double value = 0.0;
        auto [ptr, ec] = std::from_chars(begin, end, value);
        if (ec != std::errc{} || ptr == begin) {
            fail(ParseError::Kind::Syntax, pos, "malformed number");
            return nullptr;
        }
        pos += static_cast<std::size_t>(ptr - begin);
        return count_node(make_const(value));
    }

    ExprPtr parse_identifier_or_call() {
        const std::size_t start = pos;
        while (pos < text.size() &&
               (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_')) {
            ++pos;
        }
        const std::string name = text.substr(start, pos - start);
        skip_ws();
        const bool is_call = pos < text.size() && text[pos] == '(';

        if (is_call) {
            static const std::map<std::string, std::pair<int, int>> functions = {
                // name -> {arity, tag}: tag < 8 unary, 8..15 binary, 16 iflt
                {"abs", {1, 1}},  {"sqrt", {1, 2}}, {"exp", {1, 3}},  {"log", {1, 4}},
                {"min", {2, 8}},  {"max", {2, 9}},  {"pow", {2, 10}}, {"iflt", {4, 16}},
            };
            auto it = functions.find(name);
            if (it == functions.end()) {
                fail(ParseError::Kind::UnknownIdentifier, start,
                     "unknown function: " + name);
                return nullptr;
            }
            ++pos;  // consume '('
            std::vector<ExprPtr> args;
            if (!peek_is(')')) {
                while (true) {
                    args.push_back(parse_expr());
                    if (failed) return nullptr;
                    if (consume(',')) continue;
                    break;
                }
            }
            if (!consume(')')) {
                fail(ParseError::Kind::Syntax, pos, "expected ')' after arguments");
                return nullptr;
            }
            if (static_cast<int>(args.size()) != it->second.first) {
                fail(ParseError::Kind::Syntax, start,
                     name + " expects " + std::to_string(it->second.first) + " arguments");
                return nullptr;
            }
            switch (it->second.second) {
            case 1: return count_node(make_unary(UnaryOp::Abs, args[0]));
            case 2: return count_node(make_unary(UnaryOp::Sqrt, args[0]));
            case 3: return count_node(make_unary(UnaryOp::Exp, args[0]));
            case 4: return count_node(make_unary(UnaryOp::Log, args[0]));
            case 8: return count_node(make_binary(BinaryOp::Min, args[0], args[1]));
            case 9: return count_node(make_binary(BinaryOp::Max, args[0], args[1]));
            case 10: return count_node(make_binary(BinaryOp::Pow, args[0], args[1]));
            case 16: return count_node(make_iflt(args[0], args[1], args[2], args[3]));
            }
            return nullptr;
        }

        const int slot = binding_slot(kind, name);
        if (slot < 0) {
            fail(ParseError::Kind::UnknownIdentifier, start, "unknown identifier: " + name);
            return nullptr;
        }
        auto node = std::make_shared<Expr>();
        node->kind = Expr::Kind::Var;
        node->var_slot = slot;
        node->var_name = name;
        return count_node(node);
    }
};

}  // namespace

ExprPtr make_const(double value) {
    auto node = std::make_shared<Expr>();
    node->kind = Expr::Kind::Const;
    node->value = saturate(value);
    return node;
}

ExprPtr make_var(ProblemKind kind, const std::string& name) {
    const int slot = binding_slot(kind, name);
    if (slot < 0) {
        throw std::invalid_argument("make_var: unknown identifier " + name);
    }
    auto node = std::make_shared<Expr>();
    node->kind = Expr::Kind::Var;
    node->var_slot = slot;
    node->var_name = name;
    return node;
}

ExprPtr make_unary(UnaryOp op, ExprPtr child) {
    // Fold negated constants so "-5" and Neg(Const 5) share one canonical
    // form; otherwise rendered negative literals would not round-trip
    // structurally.
    if (op == UnaryOp::Neg && child && child->kind == Expr::Kind::Const) {
        return make_const(-child->value);
    }
    auto node = std::make_shared<Expr>();
    node->kind = Expr::Kind::Unary;
    node->uop = op;
    node->a = std::move(child);
    return node;
}

ExprPtr make_binary(BinaryOp op, ExprPtr lhs, ExprPtr rhs) {
    auto node = std::make_shared<Expr>();
    node->kind = Expr::Kind::Binary;
    node->bop = op;
    node->a = std::move(lhs);
    node->b = std::move(rhs);
    return node;
}

ExprPtr make_iflt(ExprPtr a, ExprPtr b, ExprPtr then_branch, ExprPtr else_branch) {
    auto node = std::make_shared<Expr>();
    node->kind = Expr::Kind::IfLess;
    node->a = std::move(a);
    node->b = std::move(b);
    node->c = std::move(then_branch);
    node->d = std::move(else_branch);
    return node;
}

int expr_size(const ExprPtr& e) {
    if (!e) return 0;
    return 1 + expr_size(e->a) + expr_size(e->b) + expr_size(e->c) + expr_size(e->d);
}

int expr_depth(const ExprPtr& e) {
    if (!e) return 0;
    const int child = std::max(std::max(expr_depth(e->a), expr_depth(e->b)),
                               std::max(expr_depth(e->c), expr_depth(e->d)));
    return 1 + child;
}

bool structural_equal(const ExprPtr& a, const ExprPtr& b) {
    if (!a || !b) return !a && !b;
    if (a->kind != b->kind) return false;
    switch (a->kind) {
    case Expr::Kind::Const: return a->value == b->value;
    case Expr::Kind::Var: return a->var_slot == b->var_slot && a->var_name == b->var_name;
    case Expr::Kind::Unary:
        return a->uop == b->uop && structural_equal(a->a, b->a);
    case Expr::Kind::Binary:
        return a->bop == b->bop && structural_equal(a->a, b->a) &&
               structural_equal(a->b, b->b);
    case Expr::Kind::IfLess:
        return structural_equal(a->a, b->a) && structural_equal(a->b, b->b) &&
               structural_equal(a->c, b->c) && structural_equal(a->d, b->d);
    }
    return false;
}

const std::vector<BindingInfo>& binding_set(ProblemKind kind) {
    static const std::vector<BindingInfo> obpp = {
        {"item", "weight of the arriving item"},
        {"remaining", "remaining capacity of the candidate bin"},
        {"capacity", "bin capacity"},
        {"fill", "current load of the candidate bin (capacity - remaining)"},
        {"index", "0-based index of the candidate bin"},
        {"bins_open", "number of currently open bins"},
    };
    static const std::vector<BindingInfo> cvrp = {
        {"dist", "Euclidean distance from the current position to the candidate"},
        {"demand", "demand of the candidate customer"},
        {"remaining", "remaining capacity of the current vehicle"},
        {"capacity", "vehicle capacity"},
        {"dist_depot_c", "Euclidean distance from the depot to the candidate"},
        {"dist_p_depot", "Euclidean distance from the current position to the depot"},
        {"unserved", "number of customers not yet served"},
    };
    return kind == ProblemKind::Obpp ? obpp : cvrp;
}

int binding_slot(ProblemKind kind, const std::string& name) {
    const auto& set = binding_set(kind);
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (set[i].name == name) return static_cast<int>(i);
    }
    return -1;
}

std::string render(const ExprPtr& expr) {
    std::string out;
    out.reserve(64);
    render_expr(expr, out);
    return out;
}

std::string render(const HeuristicProgram& program) { return program.text; }

HeuristicProgram make_program(ProblemKind kind, ExprPtr expr, std::string description,
                              std::vector<LineageEntry> lineage) {
    HeuristicProgram p;
    p.kind = kind;
    p.expr = std::move(expr);
    p.text = render(p.expr);
    p.id = to_hex(fnv1a64(p.text));
    p.description = std::move(description);
    p.lineage = std::move(lineage);
    return p;
}

ParseResult parse(const std::string& text, ProblemKind kind) {
    Parser parser(text, kind);
    ExprPtr expr = parser.parse_expr();
    if (!parser.failed) {
        parser.skip_ws();
        if (parser.pos != text.size()) {
            parser.fail(ParseError::Kind::Syntax, parser.pos, "trailing input");
        }
    }
    if (!parser.failed && expr_depth(expr) > kMaxExprDepth) {
        parser.fail(ParseError::Kind::BudgetExceeded, 0,
                    "expression exceeds the depth budget of 24");
    }
    ParseResult result;
    if (parser.failed) {
        result.error = parser.error;
        return result;
    }
    result.program = make_program(kind, std::move(expr));
    return result;
}

double evaluate_score(const HeuristicProgram& program, std::span<const double> slots) {
    return CompiledProgram::compile(program).eval(slots);
}

double evaluate_score(const HeuristicProgram& program,
                      const std::map<std::string, double>& bindings) {
    const auto& set = binding_set(program.kind);
    std::array<double, kMaxVarSlots> slots{};
    // Only names the program actually references must be bound.
    std::array<bool, kMaxVarSlots> bound{};
    for (const auto& [name, value] : bindings) {
        const int slot = binding_slot(program.kind, name);
        if (slot < 0) {
            throw std::invalid_argument("evaluate_score: unknown binding " + name);
        }
        slots[static_cast<std::size_t>(slot)] = value;
        bound[static_cast<std::size_t>(slot)] = true;
    }
    const auto check = [&](const ExprPtr& e, const auto& self) -> void {
        if (!e) return;
        if (e->kind == Expr::Kind::Var && !bound[static_cast<std::size_t>(e->var_slot)]) {
            throw std::invalid_argument("evaluate_score: missing binding " +
                                        set[static_cast<std::size_t>(e->var_slot)].name);
        }
        self(e->a, self);
        self(e->b, self);
        self(e->c, self);
        self(e->d, self);
    };
    check(program.expr, check);
    return evaluate_score(program, std::span<const double>(slots));
}

CompiledProgram CompiledProgram::compile(const HeuristicProgram& program) {
    CompiledProgram out;
    out.code_.reserve(static_cast<std::size_t>(expr_size(program.expr)));
    const auto emit = [&](const ExprPtr& e, const auto& self) -> void {
        switch (e->kind) {
        case Expr::Kind::Const:
            out.code_.push_back({Op::PushConst, 0, e->value});
            return;
        case Expr::Kind::Var:
            out.code_.push_back({Op::PushVar, e->var_slot, 0.0});
            return;
        case Expr::Kind::Unary:
            self(e->a, self);
            switch (e->uop) {
            case UnaryOp::Neg: out.code_.push_back({Op::Neg, 0, 0.0}); return;
            case UnaryOp::Abs: out.code_.push_back({Op::Abs, 0, 0.0}); return;
            case UnaryOp::Sqrt: out.code_.push_back({Op::Sqrt, 0, 0.0}); return;
            case UnaryOp::Exp: out.code_.push_back({Op::Exp, 0, 0.0}); return;
            case UnaryOp::Log: out.code_.push_back({Op::Log, 0, 0.0}); return;
            }
            return;
        case Expr::Kind::Binary:
            self(e->a, self);
            self(e->b, self);
            switch (e->bop) {
            case BinaryOp::Add: out.code_.push_back({Op::Add, 0, 0.0}); return;
            case BinaryOp::Sub: out.code_.push_back({Op::Sub, 0, 0.0}); return;
            case BinaryOp::Mul: out.code_.push_back({Op::Mul, 0, 0.0}); return;
            case BinaryOp::Div: out.code_.push_back({Op::Div, 0, 0.0}); return;
            case BinaryOp::Pow: out.code_.push_back({Op::Pow, 0, 0.0}); return;
            case BinaryOp::Min: out.code_.push_back({Op::Min, 0, 0.0}); return;
            case BinaryOp::Max: out.code_.push_back({Op::Max, 0, 0.0}); return;
            }
            return;
        case Expr::Kind::IfLess:
            self(e->a, self);
            self(e->b, self);
            self(e->c, self);
            self(e->d, self);
            out.code_.push_back({Op::IfLess, 0, 0.0});
            return;
        }
    };
    emit(program.expr, emit);
    return out;
}

double CompiledProgram::eval(std::span<const double> slots) const {
    // Depth <= 24 with fan-in <= 4 bounds the operand stack well below 128.
    std::array<double, 128> stack;
    std::size_t top = 0;
    for (const Instr& ins : code_) {
        switch (ins.op) {
        case Op::PushConst:
            stack[top++] = ins.imm;
            break;
        case Op::PushVar:
            stack[top++] = slots[static_cast<std::size_t>(ins.slot)];
            break;
        case Op::Neg:
        case Op::Abs:
        case Op::Sqrt:
        case Op::Exp:
        case Op::Log: {
            const UnaryOp uop = ins.op == Op::Neg    ? UnaryOp::Neg
                                : ins.op == Op::Abs  ? UnaryOp::Abs
                                : ins.op == Op::Sqrt ? UnaryOp::Sqrt
                                : ins.op == Op::Exp  ? UnaryOp::Exp
                                                     : UnaryOp::Log;
            stack[top - 1] = saturate(apply_unary(uop, stack[top - 1]));
            break;
        }
        case Op::IfLess: {
            const double e = stack[--top];
            const double t = stack[--top];
            const double b = stack[--top];
            const double a = stack[top - 1];
            stack[top - 1] = a < b ? t : e;
            break;
        }
        default: {
            const double b = stack[--top];
            const double a = stack[top - 1];
            const BinaryOp bop = ins.op == Op::Add   ? BinaryOp::Add
                                 : ins.op == Op::Sub ? BinaryOp::Sub
                                 : ins.op == Op::Mul ? BinaryOp::Mul
                                 : ins.op == Op::Div ? BinaryOp::Div
                                 : ins.op == Op::Pow ? BinaryOp::Pow
                                 : ins.op == Op::Min ? BinaryOp::Min
                                                     : BinaryOp::Max;
            stack[top - 1] = saturate(apply_binary(bop, a, b));
            break;
        }
        }
    }
    return stack[0];
}

HeuristicProgram builtin(const std::string& name) {
    if (name == "best_fit") {
        auto expr = make_unary(
            UnaryOp::Neg, make_binary(BinaryOp::Sub, make_var(ProblemKind::Obpp, "remaining"),
                                      make_var(ProblemKind::Obpp, "item")));
        return make_program(ProblemKind::Obpp, std::move(expr),
                            "places the item into the feasible bin with the least "
                            "remaining space",
                            {{"builtin", {}}});
    }
    if (name == "first_fit") {
        auto expr = make_unary(UnaryOp::Neg, make_var(ProblemKind::Obpp, "index"));
        return make_program(ProblemKind::Obpp, std::move(expr),
                            "places the item into the lowest-indexed feasible bin",
                            {{"builtin", {}}});
    }
    if (name == "closest_priority") {
        auto expr = make_unary(UnaryOp::Neg, make_var(ProblemKind::Cvrp, "dist"));
        return make_program(ProblemKind::Cvrp, std::move(expr),
                            "always moves to the nearest feasible customer",
                            {{"builtin", {}}});
    }
    throw std::invalid_argument("unknown builtin: " + name);
}

ExprPtr random_expr(Rng& rng, ProblemKind kind, int max_depth) {
    const auto& bindings = binding_set(kind);
    if (max_depth <= 1 || rng.uniform01() < 0.3) {
        if (rng.uniform01() < 0.5) {
            const auto& info = bindings[rng.uniform_below(bindings.size())];
            return make_var(kind, info.name);
        }
        static const double kConstPool[] = {0.0, 0.5, 1.0, 2.0, 3.0, 5.0, 10.0, 100.0};
        if (rng.uniform01() < 0.5) {
            return make_const(kConstPool[rng.uniform_below(std::size(kConstPool))]);
        }
        return make_const(std::round((rng.uniform01() * 20.0 - 10.0) * 100.0) / 100.0);
    }
    const double roll = rng.uniform01();
    if (roll < 0.2) {
        static const UnaryOp kUnary[] = {UnaryOp::Neg, UnaryOp::Abs, UnaryOp::Sqrt,
                                         UnaryOp::Exp, UnaryOp::Log};
        return make_unary(kUnary[rng.uniform_below(std::size(kUnary))],
                          random_expr(rng, kind, max_depth - 1));
    }
    if (roll < 0.9) {
        static const BinaryOp kBinary[] = {BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul,
                                           BinaryOp::Div, BinaryOp::Pow, BinaryOp::Min,
                                           BinaryOp::Max};
        return make_binary(kBinary[rng.uniform_below(std::size(kBinary))],
                           random_expr(rng, kind, max_depth - 1),
                           random_expr(rng, kind, max_depth - 1));
    }
    return make_iflt(random_expr(rng, kind, max_depth - 1),
                     random_expr(rng, kind, max_depth - 1),
                     random_expr(rng, kind, max_depth - 1),
                     random_expr(rng, kind, max_depth - 1));
}

}  // namespace instspec
