#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "lfm/data.hpp" // LatentSpec

namespace lfm {

// ---------------------------------------------------------------------------
// AST for chain programs
//
// A program is an ordered list of stages (P, then O1..On, then Z) holding
// Horn-style rules, plus an optional score-binning table.  Multiple rules
// with the same head act as a disjunction; `!` is negation as failure.
// ---------------------------------------------------------------------------

enum class CmpOp { Eq, Ne, Lt, Le, Gt, Ge, In };

std::string_view to_string(CmpOp op);

using Literal = std::variant<std::string, double>;

struct FeatureTest {
    std::string feature;
    CmpOp op = CmpOp::Eq;
    std::vector<Literal> operands; // 1 element, or >=1 for In

    bool operator==(const FeatureTest&) const = default;
};

struct SymbolRef {
    std::string symbol;

    bool operator==(const SymbolRef&) const = default;
};

using Atom = std::variant<FeatureTest, SymbolRef>;

struct BodyTerm {
    bool negated = false;
    Atom atom;

    bool operator==(const BodyTerm&) const = default;
};

struct LatentAssign {
    std::string name;
    std::string label;

    bool operator==(const LatentAssign&) const = default;
};

struct ScoreAdd {
    double delta = 0.0;

    bool operator==(const ScoreAdd&) const = default;
};

using RuleHead = std::variant<std::string, LatentAssign, ScoreAdd>;

struct Rule {
    RuleHead head;
    std::vector<BodyTerm> body;
    int line = 0; // source position, ignored by equality
    int col = 0;

    bool operator==(const Rule& o) const { return head == o.head && body == o.body; }
};

struct Stage {
    std::string id; // "P", "O1".."On", "Z"
    std::vector<Rule> rules;

    bool operator==(const Stage&) const = default;
};

struct Bin {
    double lo = 0.0;
    double hi = 0.0;
    bool hi_closed = false; // true only for the last bin
    std::string label;

    bool operator==(const Bin&) const = default;
};

struct ChainProgram {
    std::vector<Stage> stages;
    std::vector<Bin> bins;

    const Stage* find_stage(std::string_view id) const;

    // Latent names with their label sets, derived from `latent` heads in
    // first-occurrence order.  This is the latent schema induced by the
    // program (used by augment and by free-text latent parsing).
    std::vector<LatentSpec> latent_specs() const;

    // Upper edge of the last bin; 0 when the program has no bins.
    double bins_max() const;

    bool operator==(const ChainProgram&) const = default;
};

// ---------------------------------------------------------------------------
// Parse / validate / print
// ---------------------------------------------------------------------------

// Parses chain source.  Comments run from '#' to end of line.  Throws
// ChainParseError with a 1-based line/column on any syntax error, duplicate
// stage id, or malformed literal.
ChainProgram parse_chain(std::string_view source);
ChainProgram load_chain(const std::filesystem::path& path);

enum class IssueKind {
    StageOrder,        // stages not in P, O1..On (ascending), Z order
    UnresolvedSymbol,  // body references a head defined nowhere visible
    SameStageNegation, // !symbol where symbol is defined in the same stage
    SameStageCycle,    // positive dependency cycle inside one stage
    UnreachableHead,   // non-final plain head never referenced later
    MisplacedHead,     // latent/score head outside Z, or plain head inside Z
    BinGap,            // bins leave part of [0, max] uncovered
    BinOverlap,        // bins overlap or are unsorted
    BinBoundary,       // wrong open/closed ends, or first bin not at 0
    EmptyStage,        // stage with no rules
};

std::string_view to_string(IssueKind k);

struct ValidationIssue {
    IssueKind kind;
    std::string detail;
    int line = 0;
    int col = 0;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;

    bool valid() const { return issues.empty(); }
    std::string to_string() const;
};

// Structural validation; a program is valid iff the report is empty.
ValidationReport validate(const ChainProgram& program);

// Canonical source rendering.  For any parseable program p,
// parse_chain(pretty_print(p)) is structurally equal to p.
std::string pretty_print(const ChainProgram& program);
std::string pretty_print(const Rule& rule);

} // namespace lfm
