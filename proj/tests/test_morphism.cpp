#include <cmath>

#include "doctest.h"
#include "parafact/morphism.hpp"
#include "parafact/parser.hpp"
#include "test_helpers.hpp"

using namespace parafact;
using namespace parafact::testing;

namespace {

Domain line_domain() {
    Domain d;
    d.ranges = {VarRange::interval(tvar(), 0, 1), VarRange::whole_line(xplain()),
                VarRange::whole_line(uvar())};
    return d;
}

Domain circle_domain(double mod = 1.0) {
    Domain d;
    d.ranges = {VarRange::interval(tvar(), 0, 1), VarRange::periodic_mod(xplain(), mod),
                VarRange::whole_line(uvar())};
    return d;
}

FiberedMap map1d(const std::string& tau, const std::string& y, const std::string& v) {
    auto st = basic_symbols();
    return FiberedMap::make(tvar(), {xplain()}, uvar(), tauvar(), {yvar()}, vvar(),
                            parse(tau, st), {parse(y, st)}, parse(v, st));
}

FiberedMap with_section(FiberedMap F, const std::string& t_back, const std::string& x_back,
                        const std::string& u_back) {
    auto st = basic_symbols();
    F.section = std::vector<Expr>{parse(t_back, st), parse(x_back, st), parse(u_back, st)};
    return F;
}

ParabolicEquation heat_sin_line() {
    auto st = basic_symbols();
    auto eq = ParabolicEquation::make(tvar(), {xplain()}, uvar(), line_domain());
    eq.b[0][0] = parse("2 + sin(u)", st);
    eq.name = "heat-sin";
    return eq;
}

ParabolicEquation heat_circle() {
    auto eq = ParabolicEquation::make(tvar(), {xplain()}, uvar(), circle_domain());
    eq.b[0][0] = Expr::rational(1);
    eq.name = "heat-circle";
    return eq;
}

}  // namespace

TEST_CASE("map structure: tau may not depend on x") {
    auto st = basic_symbols();
    CHECK_THROWS_AS(FiberedMap::make(tvar(), {xplain()}, uvar(), tauvar(), {yvar()}, vvar(),
                                     parse("t + x", st), {parse("x", st)}, parse("u", st)),
                    std::invalid_argument);
    CHECK_THROWS_AS(FiberedMap::make(tvar(), {xplain()}, uvar(), tauvar(), {yvar()}, vvar(),
                                     parse("t", st), {parse("x + u", st)}, parse("u", st)),
                    std::invalid_argument);
}

TEST_CASE("shape inference") {
    CHECK(map1d("t", "x", "u").shape == MapShape::EPE);
    CHECK(map1d("t", "x^3", "2*u + x").shape == MapShape::AQPEAffine);
    CHECK(map1d("t", "x", "u + t").shape == MapShape::SQPE);
    CHECK(map1d("t", "x + t", "2*u").shape == MapShape::QPEAffine);
    CHECK(map1d("t", "x", "u^3 + u").shape == MapShape::TPE);
    CHECK(map1d("4*t", "2*x", "u").shape == MapShape::PEGeneral);
}

TEST_CASE("check_submersion") {
    Domain d = line_domain();
    CHECK(morphism::check_submersion(map1d("t", "x", "u"), d, 400).pass());
    CHECK(morphism::check_submersion(map1d("4*t", "2*x", "u"), d, 400).pass());

    Domain dn;
    dn.ranges = {VarRange::interval(tvar(), 0, 1), VarRange::interval(xplain(), -1, 1),
                 VarRange::whole_line(uvar())};
    Verdict v = morphism::check_submersion(map1d("t", "x^2", "u"), dn, 400);
    CHECK(v.status == Status::Fail);
    REQUIRE(v.witness.has_value());
    CHECK(std::fabs(v.witness->at("x")) < 0.5);
}

TEST_CASE("fiber_pairs: periodic projection") {
    auto F = map1d("t", "mod(x, 6.283185307179586)", "u");
    auto fp = oracle::fiber_pairs(F, line_domain(), 32, 1e-6, 1);
    REQUIRE(fp.pairs.size() >= 16);
    for (const auto& pr : fp.pairs) {
        CHECK(pr.image_defect <= 1e-6);
        CHECK(std::fabs(std::fabs(pr.p2.at("x") - pr.p1.at("x")) - 2 * M_PI) < 1e-6);
        CHECK(pr.p2.at("u") == doctest::Approx(pr.p1.at("u")));
    }
}

TEST_CASE("fiber_pairs: sheared periodic projection solves the fiber coordinate") {
    auto F = map1d("t", "mod(x, 6.283185307179586)", "u + x");
    auto fp = oracle::fiber_pairs(F, line_domain(), 32, 1e-6, 2);
    REQUIRE(fp.pairs.size() >= 16);
    for (const auto& pr : fp.pairs) {
        double du = pr.p2.at("u") - pr.p1.at("u");
        double dx = pr.p2.at("x") - pr.p1.at("x");
        CHECK(du == doctest::Approx(-dx).epsilon(1e-6));
    }
}

TEST_CASE("fiber_pairs: injective map reports discrete fibers") {
    auto F = map1d("t", "x", "u");
    auto fp = oracle::fiber_pairs(F, line_domain(), 16, 1e-6, 3);
    CHECK(fp.pairs.empty());
    CHECK(fp.discrete);
}

TEST_CASE("fiber_constancy examples") {
    auto st = basic_symbols();
    auto F = map1d("t", "mod(x, 6.283185307179586)", "u");
    Domain d = line_domain();

    CHECK(morphism::fiber_constancy(parse("sin(u - x)", st), F, d, 32, 1e-6, 4).pass());

    Verdict v = morphism::fiber_constancy(parse("sin(u - x/2)", st), F, d, 32, 1e-6, 5);
    CHECK(v.status == Status::Fail);
    REQUIRE(v.witness.has_value());
    REQUIRE(v.witness_partner.has_value());
    CHECK(std::fabs(std::fabs(v.witness_partner->at("x") - v.witness->at("x")) - 2 * M_PI) < 1e-5);

    Verdict vac = morphism::fiber_constancy(parse("sin(u*x)", st), map1d("t", "x", "u"), d, 16,
                                            1e-6, 6);
    CHECK(vac.pass());
    CHECK(vac.note == "discrete fiber");
}

TEST_CASE("pushforward: heat equation on the circle under (4t, 2x, u)") {
    auto eq = heat_circle();
    auto F = with_section(map1d("4*t", "mod(2*x, 1)", "u"), "tau/4", "y/2", "v");
    CheckConfig cfg;
    cfg.samples = 400;
    auto rep = morphism::pushforward(eq, F, std::nullopt, cfg, 48);
    REQUIRE(rep.accepted());
    REQUIRE(rep.quotient.has_value());
    CHECK(rep.quotient->b[0][0].is_one());
    CHECK(rep.quotient->c[0][0].is_zero());
    CHECK(rep.quotient->bvec[0].is_zero());
    CHECK(rep.quotient->q.is_zero());
}

TEST_CASE("pushforward: shear onto the circle keeps the diffusion profile") {
    auto eq = heat_sin_line();
    auto F = with_section(map1d("t", "mod(x, 6.283185307179586)", "u + x"), "tau", "y", "v - y");
    CheckConfig cfg;
    cfg.samples = 400;
    auto rep = morphism::pushforward(eq, F, std::nullopt, cfg, 48);
    REQUIRE(rep.accepted());
    REQUIRE(rep.quotient.has_value());
    auto st = basic_symbols();
    Domain qd;
    qd.ranges = {VarRange::interval(tauvar(), 0, 1), VarRange::periodic_mod(yvar(), 2 * M_PI),
                 VarRange::interval(vvar(), -5, 5)};
    CHECK(oracle::prob_equal(rep.quotient->b[0][0], parse("2 + sin(v - y)", st), qd, 400, 1e-6, 7)
              .pass());
    CHECK(oracle::prob_zero(rep.quotient->c[0][0], qd, 400, 1e-6, 8).pass());
    CHECK(oracle::prob_zero(rep.quotient->q, qd, 400, 1e-6, 9).pass());
}

TEST_CASE("pushforward: half shear does not descend") {
    auto eq = heat_sin_line();
    auto F = map1d("t", "mod(x, 6.283185307179586)", "u + x/2");
    CheckConfig cfg;
    cfg.samples = 400;
    auto rep = morphism::pushforward(eq, F, std::nullopt, cfg, 48);
    CHECK(rep.outcome == morphism::MorphismReport::Outcome::Rejected);
    CHECK(rep.detail.witness.has_value());
    CHECK(rep.detail.witness_partner.has_value());
}

TEST_CASE("pushforward: identity map reproduces the equation") {
    auto st = basic_symbols();
    auto eq = heat_sin_line();
    eq.bvec[0] = parse("x", st);
    eq.q = parse("u^2", st);
    auto F = with_section(map1d("t", "x", "u"), "tau", "y", "v");
    CheckConfig cfg;
    cfg.samples = 400;
    auto rep = morphism::pushforward(eq, F, std::nullopt, cfg, 16);
    REQUIRE(rep.accepted());
    REQUIRE(rep.quotient.has_value());
    std::map<std::string, Expr> ren{{"t", parse("tau", st)},
                                    {"x", parse("y", st)},
                                    {"u", parse("v", st)}};
    CHECK(rep.quotient->b[0][0] == subst(eq.b[0][0], ren));
    CHECK(rep.quotient->bvec[0] == subst(eq.bvec[0], ren));
    CHECK(rep.quotient->q == subst(eq.q, ren));
}

TEST_CASE("affine gauge: quadratic-gradient candidates vanish when c = 0") {
    auto eq = heat_sin_line();
    auto F = map1d("t", "x^3 + x", "2*u + x");
    REQUIRE(F.shape == MapShape::AQPEAffine);
    auto cd = morphism::compute_candidates(eq, F);
    CHECK(cd.Ckl[0][0].is_zero());
}

TEST_CASE("residual identity on an accepted quotient") {
    auto eq = heat_sin_line();
    auto F = with_section(map1d("t", "mod(x, 6.283185307179586)", "u + x"), "tau", "y", "v - y");
    CheckConfig cfg;
    cfg.samples = 400;
    auto rep = morphism::pushforward(eq, F, std::nullopt, cfg, 48);
    REQUIRE(rep.accepted());
    REQUIRE(rep.quotient.has_value());
    auto res = morphism::quotient_residuals(eq, F, *rep.quotient);
    for (const auto& r : res) CHECK(oracle::prob_zero(r, eq.dom, 1000, 1e-6, 10).pass());
}

TEST_CASE("compose: scaling maps multiply") {
    auto st = basic_symbols();
    Var sig{"sig", VarRole::QuotientTime}, z{"z", VarRole::QuotientBase, 1},
        w{"w", VarRole::QuotientFiber};
    st.declare(sig);
    st.declare(z);
    st.declare(w);
    auto F = map1d("4*t", "2*x", "u");
    auto G = FiberedMap::make(tauvar(), {yvar()}, vvar(), sig, {z}, w, parse("4*tau", st),
                              {parse("2*y", st)}, parse("v", st));
    auto H = morphism::compose(F, G);
    CHECK(H.tau_expr == parse("16*t", st));
    CHECK(H.y_expr[0] == parse("4*x", st));
    CHECK(H.v_expr == parse("u", st));
}

TEST_CASE("compose: identity is neutral") {
    auto st = basic_symbols();
    Var sig{"sig", VarRole::QuotientTime}, z{"z", VarRole::QuotientBase, 1},
        w{"w", VarRole::QuotientFiber};
    st.declare(sig);
    st.declare(z);
    st.declare(w);
    auto F = map1d("t", "x^3 + x", "2*u");
    auto I = FiberedMap::make(tauvar(), {yvar()}, vvar(), sig, {z}, w, parse("tau", st),
                              {parse("y", st)}, parse("v", st));
    auto H = morphism::compose(F, I);
    CHECK(H.tau_expr == F.tau_expr);
    CHECK(H.y_expr[0] == F.y_expr[0]);
    CHECK(H.v_expr == F.v_expr);
}

TEST_CASE("composition law on circle coverings") {
    auto st = basic_symbols();
    Var sig{"sig", VarRole::QuotientTime}, z{"z", VarRole::QuotientBase, 1},
        w{"w", VarRole::QuotientFiber};
    st.declare(sig);
    st.declare(z);
    st.declare(w);
    CheckConfig cfg;
    cfg.samples = 400;

    // A on the 4pi circle, F the projection to the 2pi circle, G a doubling
    auto eq = ParabolicEquation::make(tvar(), {xplain()}, uvar(), circle_domain(4 * M_PI));
    eq.b[0][0] = parse("2 + sin(u)", st);

    auto F = with_section(map1d("t", "mod(x, 6.283185307179586)", "u"), "tau", "y", "v");
    auto G = FiberedMap::make(tauvar(), {yvar()}, vvar(), sig, {z}, w, parse("tau", st),
                              {parse("mod(2*y, 6.283185307179586)", st)}, parse("v", st));
    G.section = std::vector<Expr>{parse("sig", st), parse("z/2", st), parse("w", st)};

    auto repF = morphism::pushforward(eq, F, std::nullopt, cfg, 48);
    REQUIRE(repF.accepted());
    REQUIRE(repF.quotient.has_value());

    auto repG = morphism::pushforward(*repF.quotient, G, std::nullopt, cfg.with_seed(1), 48);
    REQUIRE(repG.accepted());
    REQUIRE(repG.quotient.has_value());

    auto H = morphism::compose(F, G);
    auto repH = morphism::pushforward(eq, H, std::nullopt, cfg.with_seed(2), 48);
    REQUIRE(repH.accepted());
    REQUIRE(repH.quotient.has_value());

    Domain qd;
    qd.ranges = {VarRange::interval(sig, 0, 1), VarRange::periodic_mod(z, 2 * M_PI),
                 VarRange::interval(w, -3, 3)};
    CHECK(oracle::prob_equal(repH.quotient->b[0][0], repG.quotient->b[0][0], qd, 400, 1e-6, 11)
              .pass());
    CHECK(oracle::prob_equal(repH.quotient->q, repG.quotient->q, qd, 400, 1e-6, 12).pass());
}

TEST_CASE("closedness regression: quotients keep closed labels") {
    auto eq = heat_sin_line();  // PE1, PE2, QPE member
    auto F = with_section(map1d("t", "mod(x, 6.283185307179586)", "u"), "tau", "y", "v");
    CheckConfig cfg;
    cfg.samples = 400;
    auto rep = morphism::pushforward(eq, F, std::nullopt, cfg, 48);
    REQUIRE(rep.accepted());
    REQUIRE(rep.quotient.has_value());
    auto before = equation::classify(eq, cfg);
    auto after = equation::classify(*rep.quotient, cfg);
    for (const char* closed : {"PE1", "PE2", "PE4", "QPE"})
        if (before.has(closed)) {
            CAPTURE(closed);
            CHECK(after.has(closed));
        }
}

TEST_CASE("is_isomorphism") {
    CheckConfig cfg;
    cfg.samples = 200;
    Domain d = line_domain();

    auto id = with_section(map1d("t", "x", "u"), "tau", "y", "v");
    Domain target;
    target.ranges = {VarRange::interval(tauvar(), 0, 1), VarRange::whole_line(yvar()),
                     VarRange::whole_line(vvar())};
    CHECK(morphism::is_isomorphism(id, d, target, cfg).is_iso);

    auto shift = map1d("t", "x + 3", "u");
    CHECK(morphism::is_isomorphism(shift, d, target, cfg).is_iso);

    auto cover = map1d("4*t", "mod(2*x, 1)", "u");
    Domain circle = circle_domain();
    Domain tcircle;
    tcircle.ranges = {VarRange::interval(tauvar(), 0, 4), VarRange::periodic_mod(yvar(), 1),
                      VarRange::whole_line(vvar())};
    auto iso = morphism::is_isomorphism(cover, circle, tcircle, cfg);
    CHECK_FALSE(iso.is_iso);
    CHECK(iso.evidence.note == "not injective");
}
