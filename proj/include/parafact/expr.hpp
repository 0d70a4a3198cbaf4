#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "parafact/rational.hpp"

namespace parafact {

enum class VarRole {
    Time,           // t
    Base,           // x^i
    Fiber,          // u
    QuotientTime,   // tau
    QuotientBase,   // y^k
    QuotientFiber,  // v
    Parameter
};

struct Var {
    std::string name;
    VarRole role = VarRole::Parameter;
    int index = -1;  // for Base / QuotientBase families

    friend bool operator==(const Var& a, const Var& b) { return a.name == b.name; }
    friend bool operator<(const Var& a, const Var& b) { return a.name < b.name; }
};

enum class Fn { Sin, Cos, Exp, Ln, Sqrt, Abs, Mod };

inline const char* fn_name(Fn f) {
    switch (f) {
        case Fn::Sin: return "sin";
        case Fn::Cos: return "cos";
        case Fn::Exp: return "exp";
        case Fn::Ln: return "ln";
        case Fn::Sqrt: return "sqrt";
        case Fn::Abs: return "abs";
        case Fn::Mod: return "mod";
    }
    return "?";
}

inline int fn_arity(Fn f) { return f == Fn::Mod ? 2 : 1; }

// A function known only through a numeric evaluator. `eval(deriv, args)`
// returns the partial derivative of multi-order `deriv` at `args`.
struct OpaqueFn {
    std::string name;
    int arity = 1;
    int max_order = 2;
    std::function<double(const std::vector<int>&, const std::vector<double>&)> eval;
};

using OpaqueRef = std::shared_ptr<const OpaqueFn>;

struct singular_eval : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct unbound_variable : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Point = std::unordered_map<std::string, double>;

class Expr;
int compare(const Expr& a, const Expr& b);

// Immutable normalized expression tree. Sums and products are kept flat and
// sorted; rational constants are folded and like terms collected.
class Expr {
public:
    enum class Kind { Rational, Float, Variable, Sum, Product, Power, Builtin, Opaque };

    struct Node {
        Kind kind;
        parafact::Rational rat;    // Kind::Rational, and exponent for Power
        double flt = 0.0;          // Kind::Float
        Var var;                   // Kind::Variable
        std::vector<Expr> kids;    // Sum/Product terms, Power base, Builtin/Opaque args
        Fn fn = Fn::Sin;           // Kind::Builtin
        OpaqueRef op;              // Kind::Opaque
        std::vector<int> deriv;    // Kind::Opaque derivative multi-order
        std::size_t hash = 0;
    };

    Expr() : Expr(rational(0)) {}

    Kind kind() const { return p_->kind; }
    const Rational& rat() const { return p_->rat; }
    double flt() const { return p_->flt; }
    const Var& var() const { return p_->var; }
    const std::vector<Expr>& kids() const { return p_->kids; }
    const Rational& exponent() const { return p_->rat; }
    const Expr& base() const { return p_->kids[0]; }
    Fn fn() const { return p_->fn; }
    const OpaqueRef& opaque_fn() const { return p_->op; }
    const std::vector<int>& deriv_order() const { return p_->deriv; }
    std::size_t hash() const { return p_->hash; }

    bool is_rational() const { return kind() == Kind::Rational; }
    bool is_zero() const { return is_rational() && rat().is_zero(); }
    bool is_one() const { return is_rational() && rat().is_one(); }
    bool is_constant() const { return kind() == Kind::Rational || kind() == Kind::Float; }

    // ---- constructors (always produce normal form) ----

    static Expr rational(Rational r) {
        Node n;
        n.kind = Kind::Rational;
        n.rat = r;
        return finish(std::move(n));
    }
    static Expr rational(std::int64_t num, std::int64_t den = 1) { return rational(Rational{num, den}); }

    static Expr real(double v) {
        Node n;
        n.kind = Kind::Float;
        n.flt = v;
        return finish(std::move(n));
    }

    static Expr variable(Var v) {
        Node n;
        n.kind = Kind::Variable;
        n.var = std::move(v);
        return finish(std::move(n));
    }

    static Expr add(std::vector<Expr> terms);
    static Expr mul(std::vector<Expr> factors);
    static Expr pow(Expr base, Rational e);
    static Expr apply(Fn f, std::vector<Expr> args);
    static Expr opaque(OpaqueRef f, std::vector<Expr> args, std::vector<int> deriv = {});

    friend bool operator==(const Expr& a, const Expr& b) {
        return a.p_ == b.p_ || (a.hash() == b.hash() && compare(a, b) == 0);
    }
    friend bool operator!=(const Expr& a, const Expr& b) { return !(a == b); }

private:
    std::shared_ptr<const Node> p_;
    explicit Expr(std::shared_ptr<const Node> p) : p_(std::move(p)) {}

    static std::size_t node_hash(const Node& n) {
        auto mix = [](std::size_t h, std::size_t v) {
            return h ^ (v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2));
        };
        std::size_t h = static_cast<std::size_t>(n.kind) * 0x100000001b3ull;
        switch (n.kind) {
            case Kind::Rational:
                h = mix(h, std::hash<std::int64_t>{}(n.rat.num));
                h = mix(h, std::hash<std::int64_t>{}(n.rat.den));
                break;
            case Kind::Float:
                h = mix(h, std::hash<double>{}(n.flt));
                break;
            case Kind::Variable:
                h = mix(h, std::hash<std::string>{}(n.var.name));
                break;
            case Kind::Power:
                h = mix(h, std::hash<std::int64_t>{}(n.rat.num));
                h = mix(h, std::hash<std::int64_t>{}(n.rat.den));
                break;
            case Kind::Builtin:
                h = mix(h, static_cast<std::size_t>(n.fn));
                break;
            case Kind::Opaque:
                h = mix(h, std::hash<std::string>{}(n.op->name));
                for (int d : n.deriv) h = mix(h, static_cast<std::size_t>(d) + 1);
                break;
            default:
                break;
        }
        for (const Expr& k : n.kids) h = mix(h, k.hash());
        return h;
    }

    static Expr finish(Node n) {
        n.hash = node_hash(n);
        return Expr(std::make_shared<const Node>(std::move(n)));
    }
};

// Fixed total order on nodes; sums and products are sorted by it.
inline int compare(const Expr& a, const Expr& b) {
    using K = Expr::Kind;
    if (a.kind() != b.kind())
        return static_cast<int>(a.kind()) < static_cast<int>(b.kind()) ? -1 : 1;
    switch (a.kind()) {
        case K::Rational: {
            if (a.rat() == b.rat()) return 0;
            return a.rat() < b.rat() ? -1 : 1;
        }
        case K::Float: {
            if (a.flt() == b.flt()) return 0;
            return a.flt() < b.flt() ? -1 : 1;
        }
        case K::Variable: {
            int c = a.var().name.compare(b.var().name);
            return c < 0 ? -1 : (c > 0 ? 1 : 0);
        }
        case K::Power: {
            int c = compare(a.base(), b.base());
            if (c != 0) return c;
            if (a.exponent() == b.exponent()) return 0;
            return a.exponent() < b.exponent() ? -1 : 1;
        }
        case K::Builtin: {
            if (a.fn() != b.fn()) return static_cast<int>(a.fn()) < static_cast<int>(b.fn()) ? -1 : 1;
            break;
        }
        case K::Opaque: {
            int c = a.opaque_fn()->name.compare(b.opaque_fn()->name);
            if (c != 0) return c < 0 ? -1 : 1;
            if (a.deriv_order() != b.deriv_order()) return a.deriv_order() < b.deriv_order() ? -1 : 1;
            break;
        }
        default:
            break;
    }
    const auto& ka = a.kids();
    const auto& kb = b.kids();
    if (ka.size() != kb.size()) return ka.size() < kb.size() ? -1 : 1;
    for (std::size_t i = 0; i < ka.size(); ++i) {
        int c = compare(ka[i], kb[i]);
        if (c != 0) return c;
    }
    return 0;
}

namespace detail {

// Splits a normalized term into (rational coefficient, remaining factor).
inline std::pair<Rational, Expr> split_coeff(const Expr& e) {
    using K = Expr::Kind;
    if (e.kind() == K::Rational) return {e.rat(), Expr::rational(1)};
    if (e.kind() == K::Product && !e.kids().empty() && e.kids()[0].kind() == K::Rational) {
        std::vector<Expr> rest(e.kids().begin() + 1, e.kids().end());
        return {e.kids()[0].rat(), Expr::mul(std::move(rest))};
    }
    return {Rational{1}, e};
}

}  // namespace detail

inline Expr Expr::add(std::vector<Expr> terms) {
    using K = Kind;
    // flatten, split coefficients, collect like terms
    Rational rat_acc{0};
    double flt_acc = 0.0;
    bool has_flt = false;
    std::vector<std::pair<Expr, Rational>> collected;  // ordered core -> coeff
    std::function<void(const Expr&)> absorb = [&](const Expr& t) {
        if (t.kind() == K::Sum) {
            for (const Expr& k : t.kids()) absorb(k);
            return;
        }
        if (t.kind() == K::Rational) {
            rat_acc = rat_acc + t.rat();
            return;
        }
        if (t.kind() == K::Float) {
            flt_acc += t.flt();
            has_flt = true;
            return;
        }
        auto [c, core] = detail::split_coeff(t);
        if (core.is_constant()) {  // e.g. rational * float
            if (core.kind() == K::Float) {
                flt_acc += c.to_double() * core.flt();
                has_flt = true;
            } else {
                rat_acc = rat_acc + c * core.rat();
            }
            return;
        }
        for (auto& [k, v] : collected) {
            if (k == core) {
                v = v + c;
                return;
            }
        }
        collected.emplace_back(core, c);
    };
    for (const Expr& t : terms) absorb(t);

    std::vector<Expr> out;
    for (auto& [core, c] : collected) {
        if (c.is_zero()) continue;
        if (c.is_one())
            out.push_back(core);
        else
            out.push_back(Expr::mul({Expr::rational(c), core}));
    }
    std::sort(out.begin(), out.end(), [](const Expr& a, const Expr& b) { return compare(a, b) < 0; });
    if (has_flt) {
        double cst = flt_acc + rat_acc.to_double();
        if (cst != 0.0 || out.empty()) out.insert(out.begin(), Expr::real(cst));
    } else if (!rat_acc.is_zero() || out.empty()) {
        out.insert(out.begin(), Expr::rational(rat_acc));
    }
    if (out.size() == 1) return out[0];
    Node n;
    n.kind = K::Sum;
    n.kids = std::move(out);
    return finish(std::move(n));
}

inline Expr Expr::mul(std::vector<Expr> factors) {
    using K = Kind;
    Rational rat_acc{1};
    double flt_acc = 1.0;
    bool has_flt = false;
    std::vector<std::pair<Expr, Rational>> powers;  // base -> accumulated exponent
    std::function<void(const Expr&, Rational)> absorb = [&](const Expr& f, Rational e) {
        if (f.kind() == K::Product && e.is_integer()) {
            for (const Expr& k : f.kids()) absorb(k, e);
            return;
        }
        if (f.kind() == K::Rational && e.is_integer()) {
            rat_acc = rat_acc * rat_pow(f.rat(), e.num);
            return;
        }
        if (f.kind() == K::Float) {
            flt_acc *= std::pow(f.flt(), e.to_double());
            has_flt = true;
            return;
        }
        if (f.kind() == K::Power) {
            absorb(f.base(), f.exponent() * e);
            return;
        }
        for (auto& [b, x] : powers) {
            if (b == f) {
                x = x + e;
                return;
            }
        }
        powers.emplace_back(f, e);
    };
    for (const Expr& f : factors) absorb(f, Rational{1});

    if (rat_acc.is_zero()) return Expr::rational(0);

    std::vector<Expr> out;
    for (auto& [b, e] : powers) {
        if (e.is_zero()) continue;
        out.push_back(Expr::pow(b, e));
    }
    // pow() may have folded something back into a constant or nested product
    bool refold = std::any_of(out.begin(), out.end(), [](const Expr& f) {
        return f.is_constant() || f.kind() == K::Product;
    });
    if (refold) {
        std::vector<Expr> again = std::move(out);
        again.push_back(has_flt ? Expr::real(flt_acc * rat_acc.to_double()) : Expr::rational(rat_acc));
        return Expr::mul(std::move(again));
    }
    std::sort(out.begin(), out.end(), [](const Expr& a, const Expr& b) { return compare(a, b) < 0; });
    if (has_flt) {
        double cst = flt_acc * rat_acc.to_double();
        if (cst == 0.0) return Expr::real(0.0);
        if (cst != 1.0 || out.empty()) out.insert(out.begin(), Expr::real(cst));
    } else if (!rat_acc.is_one() || out.empty()) {
        out.insert(out.begin(), Expr::rational(rat_acc));
    }
    if (out.size() == 1) return out[0];
    Node n;
    n.kind = K::Product;
    n.kids = std::move(out);
    return finish(std::move(n));
}

inline Expr Expr::pow(Expr base, Rational e) {
    using K = Kind;
    if (e.is_zero()) return Expr::rational(1);
    if (e.is_one()) return base;
    if (base.kind() == K::Rational && e.is_integer()) return Expr::rational(rat_pow(base.rat(), e.num));
    if (base.kind() == K::Float) return Expr::real(std::pow(base.flt(), e.to_double()));
    if (base.kind() == K::Power) return Expr::pow(base.base(), base.exponent() * e);
    if (base.kind() == K::Product && e.is_integer()) {
        std::vector<Expr> fs;
        for (const Expr& k : base.kids()) fs.push_back(Expr::pow(k, e));
        return Expr::mul(std::move(fs));
    }
    Node n;
    n.kind = K::Power;
    n.rat = e;
    n.kids = {std::move(base)};
    return finish(std::move(n));
}

inline Expr Expr::apply(Fn f, std::vector<Expr> args) {
    if (static_cast<int>(args.size()) != fn_arity(f))
        throw std::invalid_argument(std::string(fn_name(f)) + ": arity mismatch");
    if (args.size() == 1 && args[0].kind() == Kind::Rational) {
        const Rational& r = args[0].rat();
        if (r.is_zero()) {
            if (f == Fn::Sin || f == Fn::Sqrt || f == Fn::Abs) return Expr::rational(0);
            if (f == Fn::Cos || f == Fn::Exp) return Expr::rational(1);
        }
        if (r.is_one()) {
            if (f == Fn::Ln) return Expr::rational(0);
            if (f == Fn::Sqrt || f == Fn::Abs) return Expr::rational(1);
        }
        if (f == Fn::Abs && r.num < 0) return Expr::rational(Rational{-r.num, r.den});
    }
    Node n;
    n.kind = Kind::Builtin;
    n.fn = f;
    n.kids = std::move(args);
    return finish(std::move(n));
}

inline Expr Expr::opaque(OpaqueRef f, std::vector<Expr> args, std::vector<int> deriv) {
    if (!f) throw std::invalid_argument("null opaque function");
    if (static_cast<int>(args.size()) != f->arity)
        throw std::invalid_argument(f->name + ": arity mismatch");
    if (deriv.empty()) deriv.assign(f->arity, 0);
    Node n;
    n.kind = Kind::Opaque;
    n.op = std::move(f);
    n.kids = std::move(args);
    n.deriv = std::move(deriv);
    return finish(std::move(n));
}

// ---- arithmetic sugar ----

inline Expr operator+(const Expr& a, const Expr& b) { return Expr::add({a, b}); }
inline Expr operator-(const Expr& a, const Expr& b) { return Expr::add({a, Expr::mul({Expr::rational(-1), b})}); }
inline Expr operator-(const Expr& a) { return Expr::mul({Expr::rational(-1), a}); }
inline Expr operator*(const Expr& a, const Expr& b) { return Expr::mul({a, b}); }
inline Expr operator/(const Expr& a, const Expr& b) { return Expr::mul({a, Expr::pow(b, Rational{-1})}); }

// ---- differentiation ----

inline Expr diff(const Expr& e, const Var& w) {
    using K = Expr::Kind;
    switch (e.kind()) {
        case K::Rational:
        case K::Float:
            return Expr::rational(0);
        case K::Variable:
            return e.var() == w ? Expr::rational(1) : Expr::rational(0);
        case K::Sum: {
            std::vector<Expr> ts;
            for (const Expr& k : e.kids()) ts.push_back(diff(k, w));
            return Expr::add(std::move(ts));
        }
        case K::Product: {
            std::vector<Expr> ts;
            for (std::size_t i = 0; i < e.kids().size(); ++i) {
                std::vector<Expr> fs;
                for (std::size_t j = 0; j < e.kids().size(); ++j)
                    fs.push_back(j == i ? diff(e.kids()[j], w) : e.kids()[j]);
                ts.push_back(Expr::mul(std::move(fs)));
            }
            return Expr::add(std::move(ts));
        }
        case K::Power: {
            // d(b^r) = r b^(r-1) db
            Rational r = e.exponent();
            return Expr::mul({Expr::rational(r), Expr::pow(e.base(), r - Rational{1}), diff(e.base(), w)});
        }
        case K::Builtin: {
            const Expr& a = e.kids()[0];
            Expr da = diff(a, w);
            switch (e.fn()) {
                case Fn::Sin: return Expr::apply(Fn::Cos, {a}) * da;
                case Fn::Cos: return -(Expr::apply(Fn::Sin, {a})) * da;
                case Fn::Exp: return e * da;
                case Fn::Ln: return da / a;
                case Fn::Sqrt: return Expr::rational(1, 2) * Expr::pow(a, Rational{-1, 2}) * da;
                case Fn::Abs: return a / e * da;  // x/|x|, a.e.
                case Fn::Mod: return da;          // d mod(x,m)/dx = 1 a.e.; m assumed constant in w
            }
            break;
        }
        case K::Opaque: {
            std::vector<Expr> ts;
            int total = 0;
            for (int d : e.deriv_order()) total += d;
            for (std::size_t i = 0; i < e.kids().size(); ++i) {
                Expr da = diff(e.kids()[i], w);
                if (da.is_zero()) continue;
                if (total + 1 > e.opaque_fn()->max_order)
                    throw std::domain_error(e.opaque_fn()->name + ": derivative order exceeds registered evaluators");
                std::vector<int> d = e.deriv_order();
                d[i] += 1;
                ts.push_back(Expr::opaque(e.opaque_fn(), e.kids(), std::move(d)) * da);
            }
            return Expr::add(std::move(ts));
        }
    }
    throw std::logic_error("diff: unreachable");
}

// ---- substitution ----

inline Expr subst(const Expr& e, const std::map<std::string, Expr>& bindings) {
    using K = Expr::Kind;
    switch (e.kind()) {
        case K::Rational:
        case K::Float:
            return e;
        case K::Variable: {
            auto it = bindings.find(e.var().name);
            return it == bindings.end() ? e : it->second;
        }
        case K::Sum: {
            std::vector<Expr> ts;
            for (const Expr& k : e.kids()) ts.push_back(subst(k, bindings));
            return Expr::add(std::move(ts));
        }
        case K::Product: {
            std::vector<Expr> ts;
            for (const Expr& k : e.kids()) ts.push_back(subst(k, bindings));
            return Expr::mul(std::move(ts));
        }
        case K::Power:
            return Expr::pow(subst(e.base(), bindings), e.exponent());
        case K::Builtin: {
            std::vector<Expr> as;
            for (const Expr& k : e.kids()) as.push_back(subst(k, bindings));
            return Expr::apply(e.fn(), std::move(as));
        }
        case K::Opaque: {
            std::vector<Expr> as;
            for (const Expr& k : e.kids()) as.push_back(subst(k, bindings));
            return Expr::opaque(e.opaque_fn(), std::move(as), e.deriv_order());
        }
    }
    throw std::logic_error("subst: unreachable");
}

inline Expr subst(const Expr& e, const Var& v, const Expr& r) { return subst(e, {{v.name, r}}); }

// ---- evaluation ----

inline double eval(const Expr& e, const Point& point) {
    using K = Expr::Kind;
    auto check = [](double v) {
        if (!std::isfinite(v)) throw singular_eval("non-finite value");
        return v;
    };
    switch (e.kind()) {
        case K::Rational:
            return e.rat().to_double();
        case K::Float:
            return check(e.flt());
        case K::Variable: {
            auto it = point.find(e.var().name);
            if (it == point.end()) throw unbound_variable("unbound variable: " + e.var().name);
            return check(it->second);
        }
        case K::Sum: {
            double s = 0;
            for (const Expr& k : e.kids()) s += eval(k, point);
            return check(s);
        }
        case K::Product: {
            double s = 1;
            for (const Expr& k : e.kids()) s *= eval(k, point);
            return check(s);
        }
        case K::Power: {
            double b = eval(e.base(), point);
            const Rational& r = e.exponent();
            double v;
            if (r.is_integer()) {
                v = std::pow(b, static_cast<double>(r.num));
            } else if (r.den == 2 || (b >= 0)) {
                v = (b < 0) ? std::nan("") : std::pow(b, r.to_double());
            } else if (r.den % 2 == 1) {  // odd root of a negative base is real
                double mag = std::pow(-b, r.to_double());
                v = (r.num % 2 == 0) ? mag : -mag;
            } else {
                v = std::nan("");
            }
            return check(v);
        }
        case K::Builtin: {
            double a = eval(e.kids()[0], point);
            switch (e.fn()) {
                case Fn::Sin: return check(std::sin(a));
                case Fn::Cos: return check(std::cos(a));
                case Fn::Exp: return check(std::exp(a));
                case Fn::Ln:
                    if (a <= 0) throw singular_eval("ln of nonpositive value");
                    return check(std::log(a));
                case Fn::Sqrt:
                    if (a < 0) throw singular_eval("sqrt of negative value");
                    return check(std::sqrt(a));
                case Fn::Abs: return std::fabs(a);
                case Fn::Mod: {
                    double m = eval(e.kids()[1], point);
                    if (m == 0) throw singular_eval("mod with zero modulus");
                    return check(a - m * std::floor(a / m));
                }
            }
            break;
        }
        case K::Opaque: {
            std::vector<double> args;
            for (const Expr& k : e.kids()) args.push_back(eval(k, point));
            return check(e.opaque_fn()->eval(e.deriv_order(), args));
        }
    }
    throw std::logic_error("eval: unreachable");
}

// ---- free variables ----

inline void collect_vars(const Expr& e, std::map<std::string, Var>& out) {
    if (e.kind() == Expr::Kind::Variable) {
        out.emplace(e.var().name, e.var());
        return;
    }
    for (const Expr& k : e.kids()) collect_vars(k, out);
}

inline std::map<std::string, Var> free_vars(const Expr& e) {
    std::map<std::string, Var> out;
    collect_vars(e, out);
    return out;
}

inline bool depends_on(const Expr& e, const Var& v) {
    if (e.kind() == Expr::Kind::Variable) return e.var() == v;
    for (const Expr& k : e.kids())
        if (depends_on(k, v)) return true;
    return false;
}

// ---- printing (round-trips through the parser on normal forms) ----

namespace detail {

enum Prec { PrecSum = 0, PrecProd = 1, PrecUnary = 2, PrecPow = 3, PrecAtom = 4 };

inline void print(std::ostream& os, const Expr& e, int parent_prec);

inline void print_product(std::ostream& os, const std::vector<Expr>& fs, int parent_prec) {
    // split into numerator and denominator by exponent sign
    std::vector<Expr> num, den;
    for (const Expr& f : fs) {
        if (f.kind() == Expr::Kind::Power && f.exponent() < Rational{0})
            den.push_back(Expr::pow(f.base(), -f.exponent()));
        else
            num.push_back(f);
    }
    int prec = PrecProd;
    if (parent_prec > prec) os << "(";
    if (num.empty()) {
        os << "1";
    } else {
        for (std::size_t i = 0; i < num.size(); ++i) {
            if (i) os << "*";
            print(os, num[i], prec + 1);
        }
    }
    for (const Expr& d : den) {
        os << "/";
        print(os, d, PrecUnary + 1);
    }
    if (parent_prec > prec) os << ")";
}

inline void print(std::ostream& os, const Expr& e, int parent_prec) {
    using K = Expr::Kind;
    switch (e.kind()) {
        case K::Rational: {
            const Rational& r = e.rat();
            bool neg = r.num < 0;
            bool frac = !r.is_integer();
            if ((neg && parent_prec > PrecSum) || (frac && parent_prec >= PrecPow)) {
                os << "(" << r.str() << ")";
            } else if (frac && parent_prec > PrecSum) {
                os << "(" << r.str() << ")";
            } else {
                os << r.str();
            }
            return;
        }
        case K::Float: {
            std::ostringstream tmp;
            tmp.precision(17);
            tmp << e.flt();
            std::string s = tmp.str();
            bool neg = e.flt() < 0;
            if (neg && parent_prec > PrecSum)
                os << "(" << s << ")";
            else
                os << s;
            return;
        }
        case K::Variable:
            os << e.var().name;
            return;
        case K::Sum: {
            if (parent_prec > PrecSum) os << "(";
            bool first = true;
            for (const Expr& t : e.kids()) {
                auto [c, core] = split_coeff(t);
                bool neg = c.num < 0 || (t.kind() == K::Float && t.flt() < 0);
                if (first) {
                    print(os, t, PrecSum + 1);
                } else if (neg) {
                    os << " - ";
                    if (t.kind() == K::Float) {
                        print(os, Expr::real(-t.flt()), PrecSum + 1);
                    } else {
                        Expr pos = Expr::mul({Expr::rational(-c), core});
                        print(os, pos, PrecSum + 1);
                    }
                } else {
                    os << " + ";
                    print(os, t, PrecSum + 1);
                }
                first = false;
            }
            if (parent_prec > PrecSum) os << ")";
            return;
        }
        case K::Product:
            print_product(os, e.kids(), parent_prec);
            return;
        case K::Power: {
            if (parent_prec > PrecPow) os << "(";
            if (e.exponent() < Rational{0}) {
                // standalone reciprocal
                os << "1/";
                print(os, Expr::pow(e.base(), -e.exponent()), PrecAtom);
            } else {
                print(os, e.base(), PrecAtom);
                os << "^";
                print(os, Expr::rational(e.exponent()), PrecAtom);
            }
            if (parent_prec > PrecPow) os << ")";
            return;
        }
        case K::Builtin: {
            os << fn_name(e.fn()) << "(";
            for (std::size_t i = 0; i < e.kids().size(); ++i) {
                if (i) os << ", ";
                print(os, e.kids()[i], PrecSum);
            }
            os << ")";
            return;
        }
        case K::Opaque: {
            os << e.opaque_fn()->name;
            bool any = false;
            for (int d : e.deriv_order()) any = any || d > 0;
            if (any) {
                os << "_d";
                for (int d : e.deriv_order()) os << d;
            }
            os << "(";
            for (std::size_t i = 0; i < e.kids().size(); ++i) {
                if (i) os << ", ";
                print(os, e.kids()[i], PrecSum);
            }
            os << ")";
            return;
        }
    }
}

}  // namespace detail

inline std::string to_string(const Expr& e) {
    std::ostringstream os;
    detail::print(os, e, detail::PrecSum);
    return os.str();
}

}  // namespace parafact
