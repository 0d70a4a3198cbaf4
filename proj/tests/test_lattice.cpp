#include <sstream>

#include "doctest.h"
#include "parafact/lattice.hpp"

using namespace parafact;
using namespace parafact::lattice;

namespace {

AClass aclass_of(AClass::Kind k) {
    AClass a;
    a.kind = k;
    return a;
}

}  // namespace

TEST_CASE("closure: the three cap identities are rule fixed points") {
    CHECK(closure(kFullIso | kPlentiful) == closure(kFull | kPlentiful));
    CHECK(closure(kClosedIso | kPlentiful) == closure(kClosed));
    CHECK(closure(kFull | kPlentiful | kDense) == closure(kFull | kDense));
}

TEST_CASE("closure: basic implications") {
    KindSet c = closure(kClosed);
    CHECK((c & kFull));
    CHECK((c & kFullIso));
    CHECK((c & kClosedIso));
    CHECK((c & kPlentiful));
    CHECK_FALSE((c & kDense));
    CHECK_FALSE((c & kWide));
    KindSet w = closure(kWide);
    CHECK((w & kDense));
    CHECK_FALSE((w & kFull));
}

TEST_CASE("kind sets round-trip through text") {
    KindSet k = kFull | kPlentiful | kDense;
    CHECK(parse_kinds(kinds_to_string(k)) == k);
    CHECK(parse_kinds("-") == 0u);
    CHECK_THROWS_AS(parse_kinds("Bogus"), std::invalid_argument);
}

TEST_CASE("builtin graph: loads, closed kinds, known provenance") {
    const Lattice& g = Lattice::builtin();
    CHECK(g.arrows().size() >= 45);
    for (const auto& a : g.arrows()) {
        CAPTURE(a.src + " -> " + a.dst);
        CHECK(a.kinds == closure(a.kinds));
        CHECK_FALSE(a.provenance.empty());
    }
    CHECK(g.has_node("PE"));
    CHECK(g.has_node("EPE_a(a)"));
}

TEST_CASE("infer: identity and unknown nodes") {
    const Lattice& g = Lattice::builtin();
    CHECK(g.infer("PE", "PE").kinds == kAllKinds);
    CHECK_THROWS_AS(g.infer("PE", "NoSuchFamily"), std::invalid_argument);
}

TEST_CASE("infer: chained closed inclusions stay closed") {
    const Lattice& g = Lattice::builtin();
    Relation r = g.infer("PE", "PE5");
    CHECK((r.kinds & kClosed));
    CHECK(r.kinds == closure(kClosed));
    CHECK_FALSE(r.trace.empty());
}

TEST_CASE("infer: wide and plentiful arrow reports its closure") {
    const Lattice& g = Lattice::builtin();
    Relation r = g.infer("PE", "TPE");
    CHECK(r.kinds == closure(kWide | kPlentiful));
    CHECK((r.kinds & kDense));
}

TEST_CASE("intersection rule: closed legs give a closed intersection") {
    Lattice g;
    g.add({"PE", "PE1", kClosed, "test"});
    g.add({"PE", "PE2", kClosed, "test"});
    Relation r = g.infer("PE", "PE3");
    CHECK(r.kinds == closure(kClosed));
    bool used = false;
    for (const auto& s : r.trace) used = used || s.rule == "closed-meets-subfamily";
    CHECK(used);
}

TEST_CASE("conditions: exceptional diffusion laws disable family arrows") {
    const Lattice& g = Lattice::builtin();
    Relation ok = g.infer("QPE''", "QPE''_a(a)");
    CHECK((ok.kinds & kFull));
    CHECK((ok.kinds & kPlentiful));
    Relation blocked = g.infer("QPE''", "QPE''_a(a)", aclass_of(AClass::Kind::Aexp));
    CHECK(blocked.kinds == 0u);
    // the extended-but-not-exceptional classes keep the arrow
    Relation ext = g.infer("QPE''", "QPE''_a(a)", aclass_of(AClass::Kind::AexpExt));
    CHECK((ext.kinds & kPlentiful));
}

TEST_CASE("weakest arrow: the canonical chain down to the autonomous family") {
    const Lattice& g = Lattice::builtin();
    std::vector<std::string> chain = {"PE",   "TPE",  "TPE1",       "QPE",
                                      "QPE'", "QPE''", "QPE''_a(a)", "QPE''_0a(a)"};
    Relation rel_pe = g.weakest(chain);
    CHECK(rel_pe.kinds == closure(kPlentiful));
    CHECK_FALSE((rel_pe.kinds & kFull));

    std::vector<std::string> from_tpe(chain.begin() + 1, chain.end());
    Relation rel_tpe = g.weakest(from_tpe);
    CHECK((rel_tpe.kinds & kFull));
    CHECK((rel_tpe.kinds & kPlentiful));
    CHECK_FALSE((rel_tpe.kinds & kClosed));
    CHECK_FALSE((rel_tpe.kinds & kDense));
}

TEST_CASE("weakest arrow: trivial chain and broken chain") {
    const Lattice& g = Lattice::builtin();
    CHECK(g.weakest({"PE", "PE"}).kinds == kAllKinds);
    CHECK_THROWS_AS(g.weakest({"QPE''_1q", "PE"}), std::invalid_argument);
    CHECK_THROWS_AS(g.weakest({"PE", "EPE_0a(a)"}, aclass_of(AClass::Kind::AexpExt)),
                    std::invalid_argument);
}

TEST_CASE("weakest arrow: identity-fiber endpoint under stricter condition") {
    const Lattice& g = Lattice::builtin();
    Relation r = g.weakest({"PE", "EPE_0a(a)"});
    CHECK(r.kinds == closure(kPlentiful));
    Relation rt = g.weakest({"TPE", "EPE_0a(a)"});
    CHECK((rt.kinds & kFull));
    CHECK((rt.kinds & kPlentiful));
}

TEST_CASE("derivation traces replay deterministically") {
    const Lattice& g = Lattice::builtin();
    Relation r1 = g.infer("PE", "QPE''_1q");
    Relation r2 = g.infer("PE", "QPE''_1q");
    CHECK(r1.kinds == r2.kinds);
    REQUIRE(r1.trace.size() == r2.trace.size());
    for (std::size_t i = 0; i < r1.trace.size(); ++i) {
        CHECK(r1.trace[i].rule == r2.trace[i].rule);
        CHECK(r1.trace[i].detail == r2.trace[i].detail);
    }
}

TEST_CASE("monotonicity: user arrows only grow derivable kind sets") {
    Lattice g = Lattice::builtin();
    std::vector<std::pair<std::string, std::string>> probes = {
        {"PE", "PE5"}, {"PE", "TPE"}, {"QPE'", "QPE''_1"}};
    std::vector<KindSet> before;
    for (const auto& [s, d] : probes) before.push_back(g.infer(s, d).kinds);

    LatticeArrow extra;
    extra.src = "QPE''_0";
    extra.dst = "QPE''_n";
    extra.kinds = kClosed;
    extra.provenance = "assumed for the test";
    g.add_user(extra);
    CHECK(g.arrows().back().provenance.rfind("user", 0) == 0);

    for (std::size_t i = 0; i < probes.size(); ++i) {
        KindSet after = g.infer(probes[i].first, probes[i].second).kinds;
        CHECK((after & before[i]) == before[i]);
    }
    // the new arrow makes the intersection family reachable from QPE''_0
    Relation r = g.infer("QPE''_0", "QPE''_0n");
    CHECK((r.kinds & kClosed));
}

TEST_CASE("dataset save/load round-trips byte-identically") {
    const Lattice& g = Lattice::builtin();
    std::ostringstream s1;
    g.save(s1);
    std::istringstream in(s1.str());
    Lattice g2 = Lattice::load(in);
    std::ostringstream s2;
    g2.save(s2);
    CHECK(s1.str() == s2.str());
    CHECK(g2.arrows().size() == g.arrows().size());
}

TEST_CASE("dataset load: diagnostics for malformed lines") {
    std::istringstream bad1("PE PE1 : Closed : x\n");
    CHECK_THROWS_AS(Lattice::load(bad1), std::invalid_argument);
    std::istringstream bad2("PE -> PE1 : Closed\n");
    CHECK_THROWS_AS(Lattice::load(bad2), std::invalid_argument);
    std::istringstream ok("# comment\n\nPE -> PE1 : Closed : x : a nonconstant\n");
    Lattice g = Lattice::load(ok);
    REQUIRE(g.arrows().size() == 1);
    CHECK(g.arrows()[0].condition == kNeedNotConst);
}

TEST_CASE("canonical form query: reaction-diffusion shapes") {
    std::set<std::string> rd = {"AQPE_0", "AQPE_n", "AQPE_a"};
    CanonicalForm plain = canonical_form_query(rd, aclass_of(AClass::Kind::None));
    CHECK(plain.known);
    CHECK(plain.morphism == "(t, x, u) -> (t, y(x), u)");
    CHECK(plain.quotient.find("a(v)") != std::string::npos);

    CanonicalForm gauged = canonical_form_query(rd, aclass_of(AClass::Kind::AexpExt));
    CHECK(gauged.known);
    CHECK(gauged.morphism.find("phi(x) u + psi(x)") != std::string::npos);

    CHECK_FALSE(canonical_form_query(rd, aclass_of(AClass::Kind::Aexp)).known);
    CHECK_FALSE(canonical_form_query(rd, aclass_of(AClass::Kind::Const)).known);
    CHECK_FALSE(canonical_form_query({"PE"}, aclass_of(AClass::Kind::None)).known);
}
