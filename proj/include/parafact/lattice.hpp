#pragma once

#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "normalize.hpp"

namespace parafact::lattice {

// Relation types an inclusion arrow between equation families can carry.
enum : unsigned {
    kWide = 1,       // same objects, fewer morphisms
    kFull = 2,       // keeps every morphism between its own objects
    kFullIso = 4,    // keeps every isomorphism between its own objects
    kClosed = 8,     // keeps every morphism out of its objects
    kClosedIso = 16, // keeps every isomorphism out of its objects
    kDense = 32,     // every object is isomorphic to one inside
    kPlentiful = 64, // every quotient object has a representative inside
    kAllKinds = 127
};
using KindSet = unsigned;

inline const std::vector<std::pair<unsigned, const char*>>& kind_table() {
    static const std::vector<std::pair<unsigned, const char*>> t = {
        {kWide, "Wide"},       {kFull, "Full"},           {kFullIso, "FullIso"},
        {kClosed, "Closed"},   {kClosedIso, "ClosedIso"}, {kDense, "Dense"},
        {kPlentiful, "Plentiful"}};
    return t;
}

inline std::string kinds_to_string(KindSet k) {
    std::string s;
    for (const auto& [bit, name] : kind_table())
        if (k & bit) {
            if (!s.empty()) s += ",";
            s += name;
        }
    return s.empty() ? "-" : s;
}

inline KindSet parse_kinds(const std::string& text) {
    KindSet k = 0;
    std::string tok;
    std::istringstream in(text);
    while (std::getline(in, tok, ',')) {
        auto b = tok.find_first_not_of(" \t");
        auto e = tok.find_last_not_of(" \t");
        if (b == std::string::npos) continue;
        tok = tok.substr(b, e - b + 1);
        if (tok == "-") continue;
        bool found = false;
        for (const auto& [bit, name] : kind_table())
            if (tok == name) {
                k |= bit;
                found = true;
            }
        if (!found) throw std::invalid_argument("unknown relation kind: " + tok);
    }
    return k;
}

// Conditions on the diffusion-law class a under which an arrow applies.
enum : unsigned {
    kNeedNotExceptional = 1,  // a outside the exp/deg classes with nonconstant H
    kNeedNotExtended = 2,     // a outside the extended classes (constant H allowed)
    kNeedNotConst = 4
};

inline bool aclass_exceptional(const AClass& ac) {
    return ac.kind == AClass::Kind::Aexp || ac.kind == AClass::Kind::Adeg;
}

// a = const lies in the extended exponential class (zero rate, constant H),
// so "not extended" also rules it out
inline bool aclass_extended(const AClass& ac) { return ac.kind != AClass::Kind::None; }

inline bool condition_met(unsigned cond, const AClass& ac) {
    if ((cond & kNeedNotExceptional) && aclass_exceptional(ac)) return false;
    if ((cond & kNeedNotExtended) && aclass_extended(ac)) return false;
    if ((cond & kNeedNotConst) && ac.kind == AClass::Kind::Const) return false;
    return true;
}

inline std::string condition_to_string(unsigned cond) {
    std::vector<std::string> parts;
    if (cond & kNeedNotExceptional) parts.push_back("a not exceptional");
    if (cond & kNeedNotExtended) parts.push_back("a not extended");
    if (cond & kNeedNotConst) parts.push_back("a nonconstant");
    std::string s;
    for (const auto& p : parts) s += (s.empty() ? "" : ", ") + p;
    return s;
}

inline unsigned parse_condition(const std::string& text) {
    unsigned c = 0;
    std::string tok;
    std::istringstream in(text);
    while (std::getline(in, tok, ',')) {
        auto b = tok.find_first_not_of(" \t");
        auto e = tok.find_last_not_of(" \t");
        if (b == std::string::npos) continue;
        tok = tok.substr(b, e - b + 1);
        if (tok == "a not exceptional") c |= kNeedNotExceptional;
        else if (tok == "a not extended") c |= kNeedNotExtended;
        else if (tok == "a nonconstant") c |= kNeedNotConst;
        else throw std::invalid_argument("unknown arrow condition: " + tok);
    }
    return c;
}

// ---- rule base ----

struct ImplicationRule {
    KindSet need;
    KindSet grant;
    const char* name;
};

// Same-arrow implications; the last four are the cap identities between
// intersections of the basic relation types.
inline const std::vector<ImplicationRule>& implication_rules() {
    static const std::vector<ImplicationRule> rules = {
        {kClosed, kFull, "closed-implies-full"},
        {kFull, kFullIso, "full-restricts-to-isos"},
        {kClosed, kClosedIso, "closed-restricts-to-isos"},
        {kWide, kDense, "wide-implies-dense"},
        {kClosed, kPlentiful, "cap.closed-is-iso-closed-and-plentiful"},
        {kFullIso | kPlentiful, kFull, "cap.iso-full-plentiful-is-full-plentiful"},
        {kClosedIso | kPlentiful, kClosed, "cap.iso-closed-plentiful-is-closed"},
        {kFull | kDense, kPlentiful, "cap.fully-dense-is-fully-plentiful"},
    };
    return rules;
}

struct TraceStep {
    std::string rule;
    std::string detail;
};

inline KindSet closure(KindSet k, std::vector<TraceStep>* trace = nullptr) {
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& r : implication_rules())
            if ((k & r.need) == r.need && (k | r.grant) != k) {
                k |= r.grant;
                changed = true;
                if (trace) trace->push_back({r.name, "grants " + kinds_to_string(r.grant)});
            }
    }
    return k;
}

// Kinds of a two-arrow chain. Wide/Full/Closed/Dense compose transitively;
// Plentiful survives only when the second leg is fully plentiful (the
// canonical isomorphism of the second leg must act inside the middle family,
// which fullness guarantees). A full set marks equality of families.
inline KindSet compose_kinds(KindSet k1, KindSet k2, std::vector<TraceStep>* trace = nullptr) {
    if (k1 == kAllKinds) return closure(k2, trace);
    if (k2 == kAllKinds) return closure(k1, trace);
    KindSet r = 0;
    for (unsigned bit : {kWide, kFull, kClosed, kDense})
        if ((k1 & bit) && (k2 & bit)) {
            r |= bit;
            if (trace)
                trace->push_back({"transitivity", kinds_to_string(bit) + " composes with itself"});
        }
    if ((k1 & kPlentiful) && (k2 & kFull) && (k2 & kPlentiful)) {
        r |= kPlentiful;
        if (trace)
            trace->push_back({"plentiful-through-fully-plentiful",
                              "Plentiful then Full,Plentiful stays Plentiful"});
    }
    return closure(r, trace);
}

// ---- arrows and the graph ----

struct LatticeArrow {
    std::string src, dst;
    KindSet kinds = 0;  // stored closed under the implication rules
    std::string provenance;
    unsigned condition = 0;
};

struct Relation {
    KindSet kinds = 0;
    std::vector<TraceStep> trace;
};

// Families defined as intersections of two others, enabling the
// closed-meets-anything rule: when A is closed in the query source and B has
// some relation types there, A cap B is closed in B and inherits B's types
// relative to A.
struct Intersection {
    std::string node, a, b;
};

inline const std::vector<Intersection>& builtin_intersections() {
    static const std::vector<Intersection> t = {
        {"PE3", "PE1", "PE2"},
        {"PE5", "PE3", "PE4"},
        {"QPE''_0n", "QPE''_0", "QPE''_n"},
        {"SQPE_0n", "SQPE_0", "SQPE_n"},
    };
    return t;
}

class Lattice {
public:
    void add(LatticeArrow a) {
        if (a.src.empty() || a.dst.empty()) throw std::invalid_argument("arrow needs two nodes");
        a.kinds = closure(a.kinds);
        arrows_.push_back(std::move(a));
    }

    void add_user(LatticeArrow a) {
        a.provenance = a.provenance.empty() ? "user" : "user: " + a.provenance;
        add(std::move(a));
    }

    const std::vector<LatticeArrow>& arrows() const { return arrows_; }

    bool has_node(const std::string& name) const {
        for (const auto& a : arrows_)
            if (a.src == name || a.dst == name) return true;
        for (const auto& in : builtin_intersections())
            if (in.node == name) return true;
        return false;
    }

    std::set<std::string> nodes() const {
        std::set<std::string> s;
        for (const auto& a : arrows_) {
            s.insert(a.src);
            s.insert(a.dst);
        }
        return s;
    }

    // Strongest derivable kind-set from src to dst along all chains, under
    // the given diffusion-law class. Empty kinds means nothing derivable,
    // not a claim of absence.
    Relation infer(const std::string& src, const std::string& dst,
                   const AClass& ac = {}) const {
        if (!has_node(src)) throw std::invalid_argument("unknown node: " + src);
        if (!has_node(dst)) throw std::invalid_argument("unknown node: " + dst);
        Relation out;
        std::map<std::string, KindSet> rel;
        rel[src] = kAllKinds;
        if (src == dst) {
            out.kinds = kAllKinds;
            out.trace.push_back({"identity", src + " is " + dst});
            return out;
        }
        bool changed = true;
        while (changed) {
            changed = false;
            for (const auto& a : arrows_) {
                if (!condition_met(a.condition, ac)) continue;
                auto it = rel.find(a.src);
                if (it == rel.end()) continue;
                KindSet cand = compose_kinds(it->second, a.kinds);
                KindSet prev = rel.count(a.dst) ? rel[a.dst] : 0;
                if ((prev | cand) != prev) {
                    rel[a.dst] = prev | cand;
                    changed = true;
                    out.trace.push_back(
                        {"compose", src + " => " + a.src + " => " + a.dst + " [" + a.provenance +
                                        "] gives " + kinds_to_string(rel[a.dst])});
                }
            }
            for (const auto& in : builtin_intersections()) {
                for (int swap = 0; swap < 2; ++swap) {
                    const std::string& ca = swap ? in.b : in.a;  // the closed leg
                    const std::string& cb = swap ? in.a : in.b;
                    auto ia = rel.find(ca);
                    auto ib = rel.find(cb);
                    if (ia == rel.end() || ib == rel.end()) continue;
                    if (!(ia->second & kClosed)) continue;
                    KindSet prev = rel.count(in.node) ? rel[in.node] : 0;
                    KindSet add = compose_kinds(ib->second, closure(kClosed));
                    for (unsigned bit : {kFull, kClosed, kDense, kPlentiful})
                        if (ib->second & bit)
                            add |= compose_kinds(ia->second, closure(bit));
                    if ((prev | add) != prev) {
                        rel[in.node] = prev | add;
                        changed = true;
                        out.trace.push_back(
                            {"closed-meets-subfamily",
                             in.node + " = " + in.a + " cap " + in.b + " gives " +
                                 kinds_to_string(rel[in.node])});
                    }
                }
            }
        }
        out.kinds = rel.count(dst) ? rel[dst] : 0;
        return out;
    }

    // Kind-set guaranteed for the composite of the whole chain.
    Relation weakest(const std::vector<std::string>& chain, const AClass& ac = {}) const {
        if (chain.empty()) throw std::invalid_argument("empty chain");
        Relation out;
        out.kinds = kAllKinds;
        for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
            Relation leg = infer(chain[i], chain[i + 1], ac);
            if (leg.kinds == 0)
                throw std::invalid_argument("broken chain: nothing derivable from " + chain[i] +
                                            " to " + chain[i + 1]);
            out.trace.push_back({"leg", chain[i] + " => " + chain[i + 1] + " : " +
                                            kinds_to_string(leg.kinds)});
            out.kinds = compose_kinds(out.kinds, leg.kinds, &out.trace);
        }
        return out;
    }

    void save(std::ostream& os) const {
        for (const auto& a : arrows_) {
            os << a.src << " -> " << a.dst << " : " << kinds_to_string(a.kinds) << " : "
               << a.provenance;
            if (a.condition) os << " : " << condition_to_string(a.condition);
            os << "\n";
        }
    }

    static Lattice load(std::istream& is) {
        Lattice lat;
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            auto b = line.find_first_not_of(" \t");
            if (b == std::string::npos || line[b] == '#') continue;
            auto arrow = line.find(" -> ");
            if (arrow == std::string::npos)
                throw std::invalid_argument("line " + std::to_string(lineno) + ": missing ' -> '");
            LatticeArrow a;
            a.src = line.substr(b, arrow - b);
            std::vector<std::string> fields;
            std::size_t pos = arrow + 4;
            while (pos <= line.size()) {
                auto next = line.find(" : ", pos);
                if (next == std::string::npos) {
                    fields.push_back(line.substr(pos));
                    break;
                }
                fields.push_back(line.substr(pos, next - pos));
                pos = next + 3;
            }
            if (fields.size() < 3)
                throw std::invalid_argument("line " + std::to_string(lineno) +
                                            ": expected 'src -> dst : kinds : provenance'");
            auto trim = [](std::string s) {
                auto x = s.find_first_not_of(" \t");
                auto y = s.find_last_not_of(" \t");
                return x == std::string::npos ? std::string() : s.substr(x, y - x + 1);
            };
            a.dst = trim(fields[0]);
            a.kinds = parse_kinds(fields[1]);
            a.provenance = trim(fields[2]);
            if (fields.size() > 3) a.condition = parse_condition(fields[3]);
            lat.add(std::move(a));
        }
        return lat;
    }

    static const Lattice& builtin();

private:
    std::vector<LatticeArrow> arrows_;
};

// The shipped dataset. Each provenance tag resolves to an entry of the fact
// index in docs/lattice-rules.md.
inline const char* builtin_dataset() {
    return R"(# inclusion arrows between parabolic equation families
# src -> dst : kinds : provenance [: condition]
PE -> PE1 : Closed : pe.1
PE -> PE2 : Closed : pe.1
PE1 -> PE3 : Closed : pe.2
PE2 -> PE3 : Closed : pe.2
PE -> PE3 : Closed : pe.2
PE2 -> PE4 : Closed : pe.3
PE -> PE4 : Closed : pe.3
PE3 -> PE5 : Closed : pe.4
PE4 -> PE5 : Closed : pe.4
PE -> PE5 : Closed : pe.4
PE -> TPE : Wide,Plentiful : tpe.1
TPE -> TPE1 : Closed : tpe.2
TPE -> TPE2 : Closed : tpe.2
TPE -> TPE3 : Closed : tpe.2
TPE -> TPE4 : Closed : tpe.2
TPE -> TPE5 : Closed : tpe.2
PE1 -> TPE1 : Wide,Plentiful : tpe.2
PE2 -> TPE2 : Wide,Plentiful : tpe.2
PE3 -> TPE3 : Wide,Plentiful : tpe.2
PE4 -> TPE4 : Wide,Plentiful : tpe.2
PE5 -> TPE5 : Wide,Plentiful : tpe.2
bQPE -> QPE : Closed : qpe.1
TPE1 -> QPE : Full,Dense : qpe.1
QPE -> QPE_c : Closed : qpe.2
TPE3 -> QPE' : Full,Dense : qpe.3
QPE -> QPE' : Closed : qpe.3
TPE5 -> QPE'_1 : Full,Dense : qpe.4
QPE' -> QPE'_1 : Closed : qpe.4
QPE' -> QPE'' : Closed : qpe.5
QPE'_1 -> QPE''_1 : Closed : qpe.6
QPE'' -> QPE''_1 : Closed : qpe.6
QPE''_0 -> QPE''_1 : Closed : qpe.6
QPE''_1 -> QPE''_1q : Closed : qpe.7
QPE' -> QPE'_n : Closed : qpe.8
QPE''_n -> QPE''_0n : Full,Plentiful : qpe.9
QPE''_c -> QPE''_0c : Full,Dense : qpe.10
QPE'' -> QPE''_a(a) : Full,Plentiful : qpe-a.1 : a not exceptional
QPE''_a(a) -> QPE''_0a(a) : Full,Plentiful : qpe-a.2
QPE''_0 -> QPE''_0a(a) : Full,Plentiful : qpe-a.2 : a not exceptional
QPE''_ca(a) -> QPE''_0ca(a) : Full,Dense : qpe-a.3
bSQPE -> SQPE : Closed : sqpe.1
SQPE -> SQPE_0 : Closed : sqpe.2
SQPE -> SQPE_n : Closed : sqpe.2
SQPE -> SQPE_b : Closed : sqpe.2
SQPE_0 -> SQPE_0n : Closed : sqpe.3
SQPE_n -> SQPE_0n : Closed : sqpe.3
SQPE_0 -> SQPE_1 : Closed : sqpe.4
SQPE -> SQPE_a(a) : Full,Plentiful : sqpe.5 : a not exceptional
bAQPE -> AQPE : Closed : aqpe.1
AQPE -> AQPE_n : Closed : aqpe.2
SQPE_bn -> AQPE_n : Full : aqpe.2
AQPE -> AQPE_0 : Closed : aqpe.3
AQPE -> AQPE_1 : Closed : aqpe.3
AQPE -> AQPE_a(a) : Full,Plentiful : aqpe.4 : a not exceptional
SQPE_na(a) -> AQPE_na(a) : Closed : aqpe.5
TPE -> AQPE_0a(a) : Full,Plentiful : seq.1 : a not exceptional, a nonconstant
PE -> AQPE_0a(a) : Plentiful : seq.1 : a not exceptional, a nonconstant
TPE -> EPE_0a(a) : Full,Plentiful : seq.2 : a not extended
PE -> EPE_0a(a) : Plentiful : seq.2 : a not extended
bEPE -> EPE : Closed : epe.1
AQPE -> EPE : Wide : epe.1
EPE -> EPE_n : Closed : epe.2
EPE -> EPE_0 : Closed : epe.2
EPE -> EPE_1 : Closed : epe.2
EPE -> EPE_a(a) : Closed : epe.2
)";
}

inline const Lattice& Lattice::builtin() {
    static const Lattice lat = [] {
        std::istringstream in(builtin_dataset());
        return load(in);
    }();
    return lat;
}

inline const Lattice& builtin_graph() { return Lattice::builtin(); }

// ---- canonical form queries ----

struct CanonicalForm {
    bool known = false;
    std::string morphism;
    std::string quotient;
    std::string provenance;
    std::string note;
};

// Guaranteed shape of a canonical quotient representative for a
// reaction-diffusion equation, by its classification labels and the class of
// its diffusion law.
inline CanonicalForm canonical_form_query(const std::set<std::string>& labels,
                                          const AClass& ac) {
    CanonicalForm out;
    bool reaction_diffusion =
        labels.count("AQPE_0") && labels.count("AQPE_n") && labels.count("AQPE_a");
    if (!reaction_diffusion) {
        out.note = "no guarantee known";
        return out;
    }
    if (aclass_exceptional(ac)) {
        out.note = "no guarantee known: the diffusion law is exceptional";
        return out;
    }
    if (ac.kind == AClass::Kind::Const) {
        out.note = "no guarantee known: constant diffusion law";
        return out;
    }
    out.known = true;
    out.morphism = aclass_extended(ac) ? "(t, x, u) -> (t, y(x), phi(x) u + psi(x))"
                                       : "(t, x, u) -> (t, y(x), u)";
    out.quotient = "v_t = a(v) (Lap v + H grad v) + Q(y, v), with the source diffusion law a";
    out.provenance = "canonical.reaction-diffusion";
    return out;
}

}  // namespace parafact::lattice
