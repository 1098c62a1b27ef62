#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "instspec/problems.hpp"
#include "instspec/rng.hpp"

namespace instspec {

// Priority functions are closed arithmetic expressions over a fixed,
// kind-specific variable set. Trees are immutable and shared.

enum class UnaryOp { Neg, Abs, Sqrt, Exp, Log };
enum class BinaryOp { Add, Sub, Mul, Div, Pow, Min, Max };

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
    enum class Kind { Const, Var, Unary, Binary, IfLess };
    Kind kind = Kind::Const;
    double value = 0.0;    // Const
    int var_slot = -1;     // Var: index into the kind's binding set
    std::string var_name;  // Var
    UnaryOp uop = UnaryOp::Neg;
    BinaryOp bop = BinaryOp::Add;
    ExprPtr a, b, c, d;  // unary: a; binary: a,b; iflt: a,b,c,d
};

constexpr int kMaxExprNodes = 512;
constexpr int kMaxExprDepth = 24;
constexpr std::size_t kMaxVarSlots = 8;
constexpr double kScoreClamp = 1e18;

// Node constructors.
ExprPtr make_const(double value);
ExprPtr make_var(ProblemKind kind, const std::string& name);  // throws on unknown name
ExprPtr make_unary(UnaryOp op, ExprPtr child);
ExprPtr make_binary(BinaryOp op, ExprPtr lhs, ExprPtr rhs);
ExprPtr make_iflt(ExprPtr a, ExprPtr b, ExprPtr then_branch, ExprPtr else_branch);

int expr_size(const ExprPtr& e);
int expr_depth(const ExprPtr& e);
bool structural_equal(const ExprPtr& a, const ExprPtr& b);

// Binding sets. Slot order is fixed and documented; evaluation binds a flat
// array indexed by slot.
struct BindingInfo {
    std::string name;
    std::string doc;
};
const std::vector<BindingInfo>& binding_set(ProblemKind kind);
int binding_slot(ProblemKind kind, const std::string& name);  // -1 when unknown

struct LineageEntry {
    std::string op;
    std::vector<std::string> parents;
};

struct HeuristicProgram {
    std::string id;    // hex FNV-1a of the canonical text
    std::string text;  // canonical rendering
    ProblemKind kind = ProblemKind::Obpp;
    ExprPtr expr;
    std::string description;
    std::vector<LineageEntry> lineage;
    std::optional<double> fitness;
};

// Canonical rendering: fully parenthesized infix with shortest round-trip
// number formatting. parse(render(p)) is structurally identical to p.
std::string render(const ExprPtr& expr);
std::string render(const HeuristicProgram& program);

HeuristicProgram make_program(ProblemKind kind, ExprPtr expr,
                              std::string description = {},
                              std::vector<LineageEntry> lineage = {});

struct ParseError {
    enum class Kind { Syntax, UnknownIdentifier, BudgetExceeded };
    Kind kind = Kind::Syntax;
    std::size_t offset = 0;
    std::string message;
};

struct ParseResult {
    std::optional<HeuristicProgram> program;
    ParseError error;
    bool ok() const { return program.has_value(); }
};

ParseResult parse(const std::string& text, ProblemKind kind);

// Total, pure scalar evaluation. Protected operators:
//   a / b        -> a/b when |b| >= 1e-9, else 0
//   log(x)       -> ln(|x| + 1e-9)
//   sqrt(x)      -> sqrt(|x|)
//   exp(x)       -> e^min(x, 50)
//   pow(a, b)    -> sign(a) * |a|^clamp(b, -8, 8)
// Every node's result saturates into [-1e18, 1e18] and NaN collapses to 0,
// so scores are always finite.
double evaluate_score(const HeuristicProgram& program, std::span<const double> slots);
// Name-keyed convenience; throws std::invalid_argument on a missing binding.
double evaluate_score(const HeuristicProgram& program,
                      const std::map<std::string, double>& bindings);

// Flattened postfix form for hot loops.
class CompiledProgram {
public:
    static CompiledProgram compile(const HeuristicProgram& program);
    double eval(std::span<const double> slots) const;

private:
    enum class Op : std::uint8_t {
        PushConst, PushVar, Neg, Abs, Sqrt, Exp, Log,
        Add, Sub, Mul, Div, Pow, Min, Max, IfLess,
    };
    struct Instr {
        Op op;
        int slot = 0;
        double imm = 0.0;
    };
    std::vector<Instr> code_;
};

// Scoring-rule baselines: best_fit and first_fit for OBPP, closest_priority
// for CVRP. Throws std::invalid_argument on an unknown name.
HeuristicProgram builtin(const std::string& name);

// Uniform random expression tree, for fuzzing and as the substitute when
// LLM proposals fail to parse.
ExprPtr random_expr(Rng& rng, ProblemKind kind, int max_depth = 4);

}  // namespace instspec
