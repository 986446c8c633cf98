#include "lfm/chain.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <functional>
#include <map>
#include <set>

#include "internal_util.hpp"
#include "lfm/errors.hpp"

namespace lfm {

std::string_view to_string(CmpOp op) {
    switch (op) {
        case CmpOp::Eq: return "==";
        case CmpOp::Ne: return "!=";
        case CmpOp::Lt: return "<";
        case CmpOp::Le: return "<=";
        case CmpOp::Gt: return ">";
        case CmpOp::Ge: return ">=";
        case CmpOp::In: return "in";
    }
    return "==";
}

const Stage* ChainProgram::find_stage(std::string_view id) const {
    for (const auto& s : stages)
        if (s.id == id) return &s;
    return nullptr;
}

std::vector<LatentSpec> ChainProgram::latent_specs() const {
    std::vector<LatentSpec> specs;
    auto find = [&](const std::string& name) -> LatentSpec* {
        for (auto& s : specs)
            if (s.name == name) return &s;
        return nullptr;
    };
    for (const auto& stage : stages)
        for (const auto& rule : stage.rules)
            if (const auto* la = std::get_if<LatentAssign>(&rule.head)) {
                LatentSpec* spec = find(la->name);
                if (!spec) {
                    specs.push_back({la->name, {}});
                    spec = &specs.back();
                }
                auto& dom = spec->domain;
                if (std::find(dom.begin(), dom.end(), la->label) == dom.end())
                    dom.push_back(la->label);
            }
    return specs;
}

double ChainProgram::bins_max() const {
    return bins.empty() ? 0.0 : bins.back().hi;
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

namespace {

enum class Tok {
    End, Ident, String, Number,
    KwStage, KwBins, KwIn, KwLatent, KwScore,
    LBrace, RBrace, LBracket, RBracket, RParen,
    Comma, Amp, Bang, Assign, PlusEq, RuleArrow, BinArrow,
    Eq, Ne, Lt, Le, Gt, Ge,
};

struct Token {
    Tok kind = Tok::End;
    std::string text;   // identifier or decoded string
    double number = 0.0;
    int line = 1;
    int col = 1;
};

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    Token next() {
        skip_ws_and_comments();
        Token t;
        t.line = line_;
        t.col = col_;
        if (eof()) return t;
        char c = peek();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_')
            return ident(t);
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '-' && pos_ + 1 < src_.size() &&
             (std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])) ||
              src_[pos_ + 1] == '.')) ||
            (c == '.' && pos_ + 1 < src_.size() &&
             std::isdigit(static_cast<unsigned char>(src_[pos_ + 1]))))
            return number(t);
        if (c == '"') return string(t);
        return punct(t);
    }

private:
    bool eof() const { return pos_ >= src_.size(); }
    char peek() const { return src_[pos_]; }
    char advance() {
        char c = src_[pos_++];
        if (c == '\n') { ++line_; col_ = 1; }
        else ++col_;
        return c;
    }
    bool match(char c) {
        if (!eof() && peek() == c) { advance(); return true; }
        return false;
    }
    [[noreturn]] void fail(const std::string& msg, int line, int col) {
        throw ChainParseError(msg, line, col);
    }

    void skip_ws_and_comments() {
        while (!eof()) {
            char c = peek();
            if (c == '#') {
                while (!eof() && peek() != '\n') advance();
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                advance();
            } else {
                break;
            }
        }
    }

    Token ident(Token t) {
        std::string s;
        while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_'))
            s += advance();
        if (s == "stage") t.kind = Tok::KwStage;
        else if (s == "bins") t.kind = Tok::KwBins;
        else if (s == "in") t.kind = Tok::KwIn;
        else if (s == "latent") t.kind = Tok::KwLatent;
        else if (s == "score") t.kind = Tok::KwScore;
        else { t.kind = Tok::Ident; t.text = std::move(s); }
        return t;
    }

    Token number(Token t) {
        std::string s;
        if (peek() == '-') s += advance();
        while (!eof() && (std::isdigit(static_cast<unsigned char>(peek())) || peek() == '.'))
            s += advance();
        double d = 0;
        auto res = std::from_chars(s.data(), s.data() + s.size(), d);
        if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
            fail("malformed number: " + s, t.line, t.col);
        t.kind = Tok::Number;
        t.number = d;
        return t;
    }

    Token string(Token t) {
        advance(); // opening quote
        std::string s;
        while (true) {
            if (eof()) fail("unterminated string literal", t.line, t.col);
            char c = advance();
            if (c == '"') break;
            if (c == '\n') fail("newline inside string literal", t.line, t.col);
            if (c == '\\') {
                if (eof()) fail("unterminated escape sequence", t.line, t.col);
                char e = advance();
                if (e == '"') s += '"';
                else if (e == '\\') s += '\\';
                else fail(std::string("unknown escape sequence: \\") + e, t.line, t.col);
            } else {
                s += c;
            }
        }
        t.kind = Tok::String;
        t.text = std::move(s);
        return t;
    }

    Token punct(Token t) {
        char c = advance();
        switch (c) {
            case '{': t.kind = Tok::LBrace; return t;
            case '}': t.kind = Tok::RBrace; return t;
            case '[': t.kind = Tok::LBracket; return t;
            case ']': t.kind = Tok::RBracket; return t;
            case ')': t.kind = Tok::RParen; return t;
            case ',': t.kind = Tok::Comma; return t;
            case '&': t.kind = Tok::Amp; return t;
            case '=':
                if (match('=')) { t.kind = Tok::Eq; return t; }
                t.kind = Tok::Assign; return t;
            case '!':
                if (match('=')) { t.kind = Tok::Ne; return t; }
                t.kind = Tok::Bang; return t;
            case '<':
                if (match('-')) { t.kind = Tok::RuleArrow; return t; }
                if (match('=')) { t.kind = Tok::Le; return t; }
                t.kind = Tok::Lt; return t;
            case '>':
                if (match('=')) { t.kind = Tok::Ge; return t; }
                t.kind = Tok::Gt; return t;
            case '+':
                if (match('=')) { t.kind = Tok::PlusEq; return t; }
                fail("expected '+='", t.line, t.col);
            case '-':
                if (match('>')) { t.kind = Tok::BinArrow; return t; }
                fail("expected '->'", t.line, t.col);
            default:
                fail(std::string("unexpected character: '") + c + "'", t.line, t.col);
        }
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
};

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

// Stage rank: P=0, O<k>=k, Z=max.  Returns -1 for ids outside that shape.
int stage_rank(std::string_view id) {
    if (id == "P") return 0;
    if (id == "Z") return 1 << 20;
    if (id.size() >= 2 && id[0] == 'O') {
        int k = 0;
        auto res = std::from_chars(id.data() + 1, id.data() + id.size(), k);
        if (res.ec == std::errc{} && res.ptr == id.data() + id.size() && k >= 1)
            return k;
    }
    return -1;
}

class Parser {
public:
    explicit Parser(std::string_view src) : lex_(src) { bump(); }

    ChainProgram parse() {
        ChainProgram prog;
        if (cur_.kind != Tok::KwStage)
            fail("expected 'stage'");
        while (cur_.kind == Tok::KwStage) prog.stages.push_back(stage());
        if (cur_.kind == Tok::KwBins) prog.bins = bins();
        if (cur_.kind != Tok::End)
            fail("expected 'stage', 'bins', or end of input");
        return prog;
    }

private:
    void bump() { cur_ = lex_.next(); }
    [[noreturn]] void fail(const std::string& msg) {
        throw ChainParseError(msg, cur_.line, cur_.col);
    }
    Token expect(Tok kind, const std::string& what) {
        if (cur_.kind != kind) fail("expected " + what);
        Token t = cur_;
        bump();
        return t;
    }

    Stage stage() {
        expect(Tok::KwStage, "'stage'");
        Token id = expect(Tok::Ident, "stage id");
        if (stage_rank(id.text) < 0)
            throw ChainParseError("invalid stage id: " + id.text +
                                  " (expected P, O1..On, or Z)", id.line, id.col);
        for (const auto& s : seen_stages_)
            if (s == id.text)
                throw ChainParseError("duplicate stage id: " + id.text, id.line, id.col);
        seen_stages_.push_back(id.text);
        Stage st;
        st.id = id.text;
        expect(Tok::LBrace, "'{'");
        while (cur_.kind != Tok::RBrace) {
            if (cur_.kind == Tok::End) fail("unterminated stage (missing '}')");
            st.rules.push_back(rule());
        }
        bump(); // '}'
        return st;
    }

    Rule rule() {
        Rule r;
        r.line = cur_.line;
        r.col = cur_.col;
        if (cur_.kind == Tok::KwLatent) {
            bump();
            Token name = expect(Tok::String, "latent name string");
            expect(Tok::Assign, "'='");
            Token label = expect(Tok::String, "latent label string");
            r.head = LatentAssign{name.text, label.text};
        } else if (cur_.kind == Tok::KwScore) {
            bump();
            expect(Tok::PlusEq, "'+='");
            Token num = expect(Tok::Number, "number");
            r.head = ScoreAdd{num.number};
        } else {
            Token id = expect(Tok::Ident, "rule head");
            r.head = id.text;
        }
        expect(Tok::RuleArrow, "'<-'");
        r.body.push_back(term());
        while (cur_.kind == Tok::Amp) {
            bump();
            r.body.push_back(term());
        }
        return r;
    }

    BodyTerm term() {
        BodyTerm t;
        if (cur_.kind == Tok::Bang) {
            t.negated = true;
            bump();
        }
        t.atom = atom();
        return t;
    }

    Atom atom() {
        Token id = expect(Tok::Ident, "identifier");
        switch (cur_.kind) {
            case Tok::Eq: case Tok::Ne: case Tok::Lt:
            case Tok::Le: case Tok::Gt: case Tok::Ge: {
                CmpOp op = cmp_of(cur_.kind);
                bump();
                FeatureTest ft{id.text, op, {literal()}};
                if (op != CmpOp::Eq && op != CmpOp::Ne &&
                    std::holds_alternative<std::string>(ft.operands[0]))
                    throw ChainParseError("ordering comparison needs a numeric literal",
                                          id.line, id.col);
                return ft;
            }
            case Tok::KwIn: {
                bump();
                expect(Tok::LBrace, "'{'");
                FeatureTest ft{id.text, CmpOp::In, {}};
                ft.operands.push_back(literal());
                while (cur_.kind == Tok::Comma) {
                    bump();
                    ft.operands.push_back(literal());
                }
                expect(Tok::RBrace, "'}'");
                return ft;
            }
            default:
                return SymbolRef{id.text};
        }
    }

    static CmpOp cmp_of(Tok k) {
        switch (k) {
            case Tok::Eq: return CmpOp::Eq;
            case Tok::Ne: return CmpOp::Ne;
            case Tok::Lt: return CmpOp::Lt;
            case Tok::Le: return CmpOp::Le;
            case Tok::Gt: return CmpOp::Gt;
            default: return CmpOp::Ge;
        }
    }

    Literal literal() {
        if (cur_.kind == Tok::String) {
            Literal l = cur_.text;
            bump();
            return l;
        }
        if (cur_.kind == Tok::Number) {
            Literal l = cur_.number;
            bump();
            return l;
        }
        fail("expected a string or number literal");
    }

    std::vector<Bin> bins() {
        expect(Tok::KwBins, "'bins'");
        expect(Tok::LBrace, "'{'");
        std::vector<Bin> out;
        while (cur_.kind != Tok::RBrace) {
            if (cur_.kind == Tok::End) fail("unterminated bins block (missing '}')");
            Bin b;
            expect(Tok::LBracket, "'['");
            b.lo = expect(Tok::Number, "number").number;
            expect(Tok::Comma, "','");
            b.hi = expect(Tok::Number, "number").number;
            if (cur_.kind == Tok::RBracket) b.hi_closed = true;
            else if (cur_.kind == Tok::RParen) b.hi_closed = false;
            else fail("expected ']' or ')'");
            bump();
            expect(Tok::BinArrow, "'->'");
            b.label = expect(Tok::String, "bin label string").text;
            out.push_back(std::move(b));
        }
        bump(); // '}'
        if (out.empty()) fail("bins block needs at least one range");
        return out;
    }

    Lexer lex_;
    Token cur_;
    std::vector<std::string> seen_stages_;
};

} // namespace

ChainProgram parse_chain(std::string_view source) {
    return Parser(source).parse();
}

ChainProgram load_chain(const std::filesystem::path& path) {
    return parse_chain(detail::read_file(path));
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

std::string_view to_string(IssueKind k) {
    switch (k) {
        case IssueKind::StageOrder: return "stage-order";
        case IssueKind::UnresolvedSymbol: return "unresolved-symbol";
        case IssueKind::SameStageNegation: return "same-stage-negation";
        case IssueKind::SameStageCycle: return "same-stage-cycle";
        case IssueKind::UnreachableHead: return "unreachable-head";
        case IssueKind::MisplacedHead: return "misplaced-head";
        case IssueKind::BinGap: return "bin-gap";
        case IssueKind::BinOverlap: return "bin-overlap";
        case IssueKind::BinBoundary: return "bin-boundary";
        case IssueKind::EmptyStage: return "empty-stage";
    }
    return "issue";
}

std::string ValidationReport::to_string() const {
    if (issues.empty()) return "valid\n";
    std::string out;
    for (const auto& i : issues) {
        out += std::string(lfm::to_string(i.kind));
        out += ": " + i.detail;
        if (i.line > 0)
            out += " (line " + std::to_string(i.line) + ", column " +
                   std::to_string(i.col) + ")";
        out += '\n';
    }
    return out;
}

ValidationReport validate(const ChainProgram& program) {
    ValidationReport rep;
    auto issue = [&](IssueKind k, std::string detail, int line = 0, int col = 0) {
        rep.issues.push_back({k, std::move(detail), line, col});
    };

    // Stage order: ranks strictly ascending, i.e. P, O1..On ascending, Z last.
    for (std::size_t i = 0; i + 1 < program.stages.size(); ++i) {
        if (stage_rank(program.stages[i].id) >= stage_rank(program.stages[i + 1].id))
            issue(IssueKind::StageOrder,
                  "stage " + program.stages[i + 1].id + " cannot follow stage " +
                      program.stages[i].id);
    }

    // Heads per stage, and head-placement rules.
    const std::size_t n_stages = program.stages.size();
    std::vector<std::set<std::string>> heads(n_stages);
    for (std::size_t si = 0; si < n_stages; ++si) {
        const Stage& st = program.stages[si];
        if (st.rules.empty())
            issue(IssueKind::EmptyStage, "stage " + st.id + " has no rules");
        for (const auto& r : st.rules) {
            if (const auto* name = std::get_if<std::string>(&r.head)) {
                if (st.id == "Z")
                    issue(IssueKind::MisplacedHead,
                          "plain head '" + *name + "' in stage Z (Z rules assign latents or scores)",
                          r.line, r.col);
                else
                    heads[si].insert(*name);
            } else if (st.id != "Z") {
                issue(IssueKind::MisplacedHead,
                      "latent/score head outside stage Z (stage " + st.id + ")",
                      r.line, r.col);
            }
        }
    }

    // Symbol resolution and negation-stratification.
    std::set<std::string> referenced;
    for (std::size_t si = 0; si < n_stages; ++si) {
        for (const auto& r : program.stages[si].rules) {
            for (const auto& t : r.body) {
                const auto* ref = std::get_if<SymbolRef>(&t.atom);
                if (!ref) continue;
                referenced.insert(ref->symbol);
                bool in_same = heads[si].count(ref->symbol) > 0;
                bool in_earlier = false;
                for (std::size_t sj = 0; sj < si; ++sj)
                    if (heads[sj].count(ref->symbol)) { in_earlier = true; break; }
                if (!in_same && !in_earlier)
                    issue(IssueKind::UnresolvedSymbol,
                          "'" + ref->symbol + "' is not defined in stage " +
                              program.stages[si].id + " or any earlier stage",
                          r.line, r.col);
                else if (t.negated && in_same)
                    issue(IssueKind::SameStageNegation,
                          "'!" + ref->symbol + "' negates a symbol defined in the same stage",
                          r.line, r.col);
            }
        }
    }

    // Positive dependency cycles inside one stage.
    for (std::size_t si = 0; si < n_stages; ++si) {
        std::map<std::string, std::set<std::string>> deps;
        for (const auto& r : program.stages[si].rules) {
            const auto* name = std::get_if<std::string>(&r.head);
            if (!name) continue;
            for (const auto& t : r.body)
                if (const auto* ref = std::get_if<SymbolRef>(&t.atom);
                    ref && !t.negated && heads[si].count(ref->symbol))
                    deps[*name].insert(ref->symbol);
        }
        // Iterative DFS with colors; report each cycle-participating head once.
        std::map<std::string, int> color; // 0 unvisited, 1 in progress, 2 done
        std::set<std::string> cyclic;
        std::function<bool(const std::string&)> visit =
            [&](const std::string& u) -> bool {
            color[u] = 1;
            for (const auto& v : deps[u]) {
                if (color[v] == 1 || (color[v] == 0 && visit(v))) {
                    cyclic.insert(u);
                    return true;
                }
            }
            color[u] = 2;
            return false;
        };
        for (const auto& [h, _] : deps)
            if (color[h] == 0) visit(h);
        for (const auto& h : cyclic)
            issue(IssueKind::SameStageCycle,
                  "'" + h + "' participates in a dependency cycle within stage " +
                      program.stages[si].id);
    }

    // Plain heads in non-final stages must be referenced somewhere.
    for (std::size_t si = 0; si + 1 < n_stages; ++si)
        for (const auto& h : heads[si])
            if (!referenced.count(h))
                issue(IssueKind::UnreachableHead,
                      "'" + h + "' (stage " + program.stages[si].id +
                          ") is never referenced by any rule");

    // Bins: sorted, contiguous from 0, half-open except the closed last bin.
    const auto& bins = program.bins;
    if (!bins.empty()) {
        if (bins.front().lo != 0.0)
            issue(IssueKind::BinBoundary, "first bin must start at 0");
        for (std::size_t i = 0; i < bins.size(); ++i) {
            const Bin& b = bins[i];
            if (!(b.lo < b.hi))
                issue(IssueKind::BinBoundary,
                      "bin [" + detail::format_double(b.lo) + ", " +
                          detail::format_double(b.hi) + ") needs lo < hi");
            bool last = (i + 1 == bins.size());
            if (b.hi_closed != last)
                issue(IssueKind::BinBoundary,
                      last ? "last bin must be closed at its upper edge"
                           : "bin " + std::to_string(i) +
                                 " must be half-open (only the last bin is closed)");
            if (!last) {
                double next_lo = bins[i + 1].lo;
                if (b.hi < next_lo)
                    issue(IssueKind::BinGap,
                          "gap between " + detail::format_double(b.hi) + " and " +
                              detail::format_double(next_lo));
                else if (b.hi > next_lo)
                    issue(IssueKind::BinOverlap,
                          "overlap between " + detail::format_double(next_lo) +
                              " and " + detail::format_double(b.hi));
            }
        }
    }

    return rep;
}

// ---------------------------------------------------------------------------
// Pretty printing
// ---------------------------------------------------------------------------

namespace {

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    out += '"';
    return out;
}

std::string print_literal(const Literal& l) {
    if (const auto* s = std::get_if<std::string>(&l)) return quote(*s);
    return detail::format_double(std::get<double>(l));
}

std::string print_atom(const Atom& a) {
    if (const auto* ref = std::get_if<SymbolRef>(&a)) return ref->symbol;
    const auto& ft = std::get<FeatureTest>(a);
    if (ft.op == CmpOp::In) {
        std::string out = ft.feature + " in {";
        for (std::size_t i = 0; i < ft.operands.size(); ++i) {
            if (i) out += ", ";
            out += print_literal(ft.operands[i]);
        }
        out += "}";
        return out;
    }
    return ft.feature + " " + std::string(to_string(ft.op)) + " " +
           print_literal(ft.operands.front());
}

std::string print_head(const RuleHead& h) {
    if (const auto* name = std::get_if<std::string>(&h)) return *name;
    if (const auto* la = std::get_if<LatentAssign>(&h))
        return "latent " + quote(la->name) + " = " + quote(la->label);
    return "score += " + detail::format_double(std::get<ScoreAdd>(h).delta);
}

} // namespace

std::string pretty_print(const Rule& rule) {
    std::string out = print_head(rule.head) + " <- ";
    for (std::size_t i = 0; i < rule.body.size(); ++i) {
        if (i) out += " & ";
        if (rule.body[i].negated) out += "!";
        out += print_atom(rule.body[i].atom);
    }
    return out;
}

std::string pretty_print(const ChainProgram& program) {
    std::string out;
    for (const auto& st : program.stages) {
        out += "stage " + st.id + " {\n";
        for (const auto& r : st.rules) out += "  " + pretty_print(r) + "\n";
        out += "}\n";
    }
    if (!program.bins.empty()) {
        out += "bins {\n";
        for (const auto& b : program.bins) {
            out += "  [" + detail::format_double(b.lo) + ", " +
                   detail::format_double(b.hi) + (b.hi_closed ? "]" : ")") +
                   " -> " + quote(b.label) + "\n";
        }
        out += "}\n";
    }
    return out;
}

} // namespace lfm
