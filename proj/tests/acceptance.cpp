// End-to-end acceptance checks, one summary line per criterion.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "parafact/eqfile.hpp"
#include "parafact/lattice.hpp"
#include "parafact/normalize.hpp"

using namespace parafact;

namespace {

constexpr double kTwoPi = 6.283185307179586;

std::string g_detail;
int g_failures = 0;

void report(int idx, const char* title, bool ok) {
    std::printf("criterion %d (%s): %s%s%s\n", idx, title, ok ? "pass" : "FAIL",
                g_detail.empty() ? "" : " -- ", g_detail.c_str());
    if (!ok) ++g_failures;
    g_detail.clear();
}

bool expect(bool cond, const std::string& what) {
    if (!cond && g_detail.empty()) g_detail = what;
    return cond;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

io::EquationFile load_eq(const std::string& name) {
    return io::read_equation_file(std::string(CORPUS_DIR) + "/" + name);
}

FiberedMap load_map(const std::string& name, const ParabolicEquation& src) {
    return io::read_map_file(std::string(CORPUS_DIR) + "/" + name, src);
}

SymbolTable quotient_symbols(const ParabolicEquation& q) {
    SymbolTable st;
    st.declare(q.t);
    st.declare(q.u);
    for (const auto& yv : q.x) st.declare(yv);
    return st;
}

// ---- criterion 1: scaling endomorphism of the circle ----

bool criterion_scaling() {
    auto t0 = std::chrono::steady_clock::now();
    io::EquationFile f = load_eq("heat_circle.eq");
    FiberedMap F = load_map("scale.map", f.eq);
    CheckConfig cfg;
    cfg.samples = 1000;
    cfg.tol = 1e-9;
    auto rep = morphism::pushforward(f.eq, F, std::nullopt, cfg);
    bool ok = expect(rep.accepted(), "map not accepted");
    ok = ok && expect(rep.max_residual < 1e-9, "residuals above 1e-9");
    ok = ok && expect(rep.quotient.has_value(), "no quotient produced");
    if (ok) {
        SymbolTable st = quotient_symbols(*rep.quotient);
        ok = expect(oracle::prob_equal(rep.quotient->b[0][0], parse("1", st),
                                       rep.quotient->dom, 1000, 1e-9)
                        .pass(),
                    "quotient diffusion is not 1");
    }
    auto iso = morphism::is_isomorphism(F, f.eq.dom, rep.quotient ? rep.quotient->dom : f.eq.dom);
    ok = ok && expect(!iso.is_iso, "doubling map wrongly judged invertible");
    ok = ok && expect(iso.evidence.status == Status::Fail, "non-invertibility not witnessed");
    return expect(ok, "") && expect(seconds_since(t0) < 1.0, "slower than 1 s");
}

// ---- criterion 2: periodic-in-u diffusion and its two wraps ----

bool criterion_sin_diffusion() {
    io::EquationFile f = load_eq("sin_diffusion.eq");
    CheckConfig cfg;

    auto plain = morphism::pushforward(f.eq, load_map("wrap.map", f.eq), std::nullopt, cfg);
    bool ok = expect(plain.accepted() && plain.quotient.has_value(), "plain wrap not accepted");
    if (ok) {
        SymbolTable st = quotient_symbols(*plain.quotient);
        ok = expect(oracle::prob_equal(plain.quotient->b[0][0], parse("2 + sin(v)", st),
                                       plain.quotient->dom, 1000, 1e-6)
                        .pass(),
                    "plain wrap quotient diffusion mismatch");
    }

    FiberedMap shifted = load_map("fullshift.map", f.eq);
    auto full = morphism::pushforward(f.eq, shifted, std::nullopt, cfg);
    ok = ok && expect(full.accepted() && full.quotient.has_value(), "shifted wrap not accepted");
    if (ok) {
        SymbolTable st = quotient_symbols(*full.quotient);
        ok = expect(oracle::prob_equal(full.quotient->b[0][0], parse("2 + sin(v - y)", st),
                                       full.quotient->dom, 1000, 1e-6)
                        .pass(),
                    "shifted wrap quotient diffusion mismatch");
    }

    FiberedMap half = load_map("halfshift.map", f.eq);
    auto rej = morphism::pushforward(f.eq, half, std::nullopt, cfg);
    ok = ok && expect(rej.outcome == morphism::MorphismReport::Outcome::Rejected,
                      "half-period shift not rejected");
    ok = ok && expect(rej.detail.witness.has_value(), "rejection carries no fiber witness");

    // gauge congruence: the admissible shift differs by whole periods only
    AOptions ao;
    AClass ac = normalize::classify_a(f.eq.b[0][0], f.eq.u,
                                      VarRange::interval(f.eq.u, -50, 50), ao);
    ok = ok && expect(ac.kind == AClass::Kind::Aexp, "diffusion law not recognized as periodic");
    CheckConfig gcfg;
    gcfg.tol = 1e-6;
    auto good = normalize::gauge_canonicalize(f.eq, shifted, ac, gcfg);
    ok = ok && expect(good.congruence.status == Status::Pass,
                      "full-period gauge congruence failed");
    auto bad = normalize::gauge_canonicalize(f.eq, half, ac, gcfg);
    ok = ok && expect(bad.congruence.status == Status::Fail,
                      "half-period gauge congruence not rejected");
    return ok;
}

// ---- criterion 3: radial reduction twisted by a first-order harmonic ----

bool criterion_spherical() {
    auto t0 = std::chrono::steady_clock::now();
    io::EquationFile f = load_eq("sph_heat.eq");
    FiberedMap F = load_map("sph.map", f.eq);
    auto rep = morphism::pushforward(f.eq, F);
    bool ok = expect(rep.accepted() && rep.quotient.has_value(), "reduction not accepted");
    if (ok) {
        SymbolTable st = quotient_symbols(*rep.quotient);
        const ParabolicEquation& q = *rep.quotient;
        ok = expect(oracle::prob_equal(q.b[0][0], parse("1", st), q.dom, 1000, 1e-6).pass(),
                    "quotient diffusion is not 1");
        // potential coefficient: q v^-1 y^2 == -k(k+1) == -2
        ok = ok && expect(oracle::prob_equal(q.q, parse("(-2)*v/y^2", st), q.dom, 1000, 1e-6).pass(),
                          "potential coefficient is not -2/y^2");
        ok = ok && expect(oracle::prob_zero(q.bvec[0], q.dom, 1000, 1e-6).pass(),
                          "quotient drift does not vanish");
    }
    return ok && expect(seconds_since(t0) < 5.0, "slower than 5 s");
}

// ---- criterion 4: primitive projection of the curved 4-dimensional flow ----

bool criterion_primitive_4d() {
    io::EquationFile f = load_eq("prim4d.eq");
    bool ok = expect(f.geometric(), "corpus file lost its geometry mode");
    const ParabolicEquation& eq = f.eq;
    SymbolTable st = f.symbols;

    // displayed coordinate operator of the source
    Expr al = parse("x1*exp(x4)", st);
    Expr be = parse("x1*exp(x3)", st);
    Expr a = parse("2 + u^2", st);
    std::vector<std::vector<Expr>> bref(4, std::vector<Expr>(4, Expr::rational(0)));
    bref[0][0] = a;
    bref[1][1] = a;
    bref[1][2] = bref[2][1] = -a * al;
    bref[1][3] = bref[3][1] = -a * be;
    bref[2][2] = a * (Expr::rational(1) + al * al);
    bref[2][3] = bref[3][2] = a * al * be;
    bref[3][3] = a * (Expr::rational(1) + be * be);
    Expr albe = al * be;  // (alpha beta)_z == (alpha beta)_w == alpha beta here
    for (int i = 0; i < 4 && ok; ++i)
        for (int j = i; j < 4 && ok; ++j)
            ok = expect(oracle::prob_equal(eq.b[i][j], bref[i][j], eq.dom, 1000, 1e-6).pass(),
                        "expanded b." + std::to_string(i + 1) + "." + std::to_string(j + 1) +
                            " mismatches the displayed operator");
    ok = ok && expect(oracle::prob_zero(eq.bvec[0], eq.dom, 1000, 1e-6).pass() &&
                          oracle::prob_zero(eq.bvec[1], eq.dom, 1000, 1e-6).pass(),
                      "flat directions acquired a drift");
    ok = ok && expect(oracle::prob_equal(eq.bvec[2], a * albe, eq.dom, 1000, 1e-6).pass() &&
                          oracle::prob_equal(eq.bvec[3], a * albe, eq.dom, 1000, 1e-6).pass(),
                      "expanded drift mismatches the displayed operator");

    FiberedMap F = load_map("proj4d.map", f.eq);
    auto rep = morphism::pushforward(f.eq, F);
    ok = ok && expect(rep.accepted() && rep.quotient.has_value(), "projection not accepted");
    if (ok) {
        const ParabolicEquation& q = *rep.quotient;
        SymbolTable qs = quotient_symbols(q);
        Expr av = parse("2 + v^2", qs);
        for (int k = 0; k < 2 && ok; ++k)
            for (int l = k; l < 2 && ok; ++l) {
                Expr want = k == l ? av : Expr::rational(0);
                ok = expect(oracle::prob_equal(q.b[k][l], want, q.dom, 1000, 1e-6).pass(),
                            "quotient diffusion is not a(v) times the identity");
                ok = ok && expect(oracle::prob_zero(q.c[k][l], q.dom, 1000, 1e-6).pass(),
                                  "quotient gradient terms do not vanish");
            }
        for (int k = 0; k < 2 && ok; ++k)
            ok = expect(oracle::prob_zero(q.bvec[k], q.dom, 1000, 1e-6).pass(),
                        "quotient drift does not vanish");
        ok = ok && expect(oracle::prob_zero(q.q, q.dom, 1000, 1e-6).pass(),
                          "quotient source term does not vanish");
    }
    return ok;
}

// ---- criterion 5: diffusion-law classification suite ----

bool criterion_classify_a() {
    Var u{"u", VarRole::Fiber};
    SymbolTable st;
    st.declare(u);
    AOptions ao;
    auto timed = [&](const char* text, double lo, double hi, auto&& verify) {
        auto t0 = std::chrono::steady_clock::now();
        AClass ac = normalize::classify_a(parse(text, st), u, VarRange::interval(u, lo, hi), ao);
        bool ok = verify(ac);
        if (!ok && g_detail.empty()) g_detail = std::string(text) + " misclassified";
        return expect(ok, "") &&
               expect(seconds_since(t0) < 2.0, std::string(text) + " slower than 2 s");
    };
    bool ok = timed("2 + sin(u)", -50, 50, [](const AClass& a) {
        return a.kind == AClass::Kind::Aexp && std::fabs(a.lambda) < 1e-3 &&
               std::fabs(a.period - kTwoPi) < 1e-3;
    });
    ok = ok && timed("exp(2*u)*(3 + cos(u))", -50, 50, [](const AClass& a) {
        return a.kind == AClass::Kind::Aexp && std::fabs(a.lambda - 2) < 1e-3 &&
               std::fabs(a.period - kTwoPi) < 1e-3;
    });
    ok = ok && timed("exp(u)", -50, 50, [](const AClass& a) {
        return a.kind == AClass::Kind::AexpExt && std::fabs(a.lambda - 1) < 1e-3;
    });
    ok = ok && timed("u^2", 0, 50, [](const AClass& a) {
        return a.kind == AClass::Kind::AdegExt && std::fabs(a.u0) < 1e-6 &&
               std::fabs(a.lambda - 2) < 1e-3;
    });
    ok = ok && timed("1 + u^2", -50, 50,
                     [](const AClass& a) { return a.kind == AClass::Kind::None; });
    return ok;
}

// ---- criterion 6: quasilinearization ----

bool criterion_quasilinearize() {
    io::EquationFile f = load_eq("grad_square.eq");
    auto nr = normalize::quasilinearize(f.eq, 0.0);
    bool ok = expect(nr.iso.v_expr == parse("exp(u) - 1", f.symbols), "fiber change is not e^u - 1");
    ok = ok && expect(nr.target.has_value(), "no target equation");
    if (ok) {
        SymbolTable qs = quotient_symbols(*nr.target);
        ok = expect(nr.target->b[0][0] == parse("1", qs) && nr.target->c[0][0].is_zero() &&
                        nr.target->q.is_zero(),
                    "target is not the heat equation");
        auto residuals = morphism::quotient_residuals(f.eq, nr.iso, *nr.target);
        for (const auto& r : residuals)
            ok = ok && expect(oracle::prob_zero(r, f.eq.dom, 1000, 1e-8).pass(),
                              "defining-system residual above 1e-8");
    }
    return ok;
}

// ---- criterion 7: drift removal ----

bool criterion_remove_drift() {
    io::EquationFile f = load_eq("sin_drift.eq");
    auto nr = normalize::remove_drift(f.eq);
    bool ok = expect(nr.iso.y_expr[0] == parse("x + 3*t", f.symbols),
                     "characteristic change is not x + 3t");
    ok = ok && expect(nr.target.has_value(), "no target equation");
    if (ok) {
        SymbolTable qs = quotient_symbols(*nr.target);
        ok = expect(oracle::prob_equal(nr.target->b[0][0], parse("2 + sin(v)", qs),
                                       nr.target->dom, 1000, 1e-6)
                        .pass(),
                    "target diffusion is not a(v)");
        // xi-candidate of the target must vanish
        CheckConfig cfg;
        auto fac = equation::factor_pe2(*nr.target, nr.target->omega_mid(), cfg);
        ok = ok && expect(fac.has_value(), "target diffusion does not factor");
        if (ok) {
            Status split = equation::factor_qpe2(*nr.target, *fac, cfg);
            ok = expect(split != Status::Fail && fac->xi.has_value(), "target drift does not split");
            if (ok)
                ok = expect(oracle::prob_zero((*fac->xi)[0], nr.target->dom, 1000, 1e-6).pass(),
                            "xi-candidate residual above 1e-6");
        }
    }
    return ok;
}

// ---- criterion 8: lattice engine ----

bool criterion_lattice() {
    using namespace lattice;
    bool ok = expect(closure(kFullIso | kPlentiful) == closure(kFull | kPlentiful) &&
                         closure(kClosedIso | kPlentiful) == closure(kClosed) &&
                         closure(kFull | kPlentiful | kDense) == closure(kFull | kDense),
                     "cap identities are not rule fixed points");

    const Lattice& g = Lattice::builtin();
    std::vector<std::string> chain = {"PE",   "TPE",   "TPE1",       "QPE",
                                      "QPE'", "QPE''", "QPE''_a(a)", "QPE''_0a(a)"};
    Relation rel_pe = g.weakest(chain);
    ok = ok && expect(rel_pe.kinds == closure(kPlentiful) && !(rel_pe.kinds & kFull),
                      "chain relative to PE is not exactly Plentiful");
    Relation rel_tpe = g.weakest({chain.begin() + 1, chain.end()});
    ok = ok && expect((rel_tpe.kinds & kFull) && (rel_tpe.kinds & kPlentiful) &&
                          !(rel_tpe.kinds & kClosed) && !(rel_tpe.kinds & kDense),
                      "chain relative to TPE is not Full and Plentiful");

    Relation r1 = g.infer("PE", "QPE''_0a(a)");
    Relation r2 = g.infer("PE", "QPE''_0a(a)");
    bool same = r1.kinds == r2.kinds && r1.trace.size() == r2.trace.size();
    for (std::size_t i = 0; same && i < r1.trace.size(); ++i)
        same = r1.trace[i].rule == r2.trace[i].rule && r1.trace[i].detail == r2.trace[i].detail;
    return ok && expect(same, "derivation traces do not replay deterministically");
}

// ---- criterion 9: property suites ----

Expr random_expr(std::mt19937_64& rng, const std::vector<Var>& vars, int depth) {
    std::uniform_int_distribution<int> pick(0, depth > 0 ? 6 : 1);
    std::uniform_real_distribution<double> coin(0, 1);
    switch (pick(rng)) {
        case 0: {
            std::uniform_int_distribution<std::size_t> vi(0, vars.size() - 1);
            return Expr::variable(vars[vi(rng)]);
        }
        case 1: {
            std::uniform_int_distribution<int> num(-3, 3);
            return Expr::rational(num(rng), 2);
        }
        case 2: return random_expr(rng, vars, depth - 1) + random_expr(rng, vars, depth - 1);
        case 3: return random_expr(rng, vars, depth - 1) * random_expr(rng, vars, depth - 1);
        case 4: return Expr::apply(Fn::Sin, {random_expr(rng, vars, depth - 1)});
        case 5: return Expr::apply(Fn::Cos, {random_expr(rng, vars, depth - 1)});
        default:
            return Expr::apply(Fn::Exp, {Expr::rational(1, 4) * random_expr(rng, vars, depth - 1)});
    }
}

bool property_fd_vs_derivative() {
    Var t{"t", VarRole::Time}, x{"x", VarRole::Base, 1}, u{"u", VarRole::Fiber};
    std::vector<Var> vars{t, x, u};
    std::mt19937_64 rng(20240817);
    std::uniform_real_distribution<double> pt(-1, 1);
    std::uniform_int_distribution<std::size_t> vi(0, vars.size() - 1);
    const double h = 1e-4;
    int done = 0;
    while (done < 1000) {
        Expr e = random_expr(rng, vars, 3);
        const Var& w = vars[vi(rng)];
        if (!depends_on(e, w)) continue;
        Expr d = diff(e, w);
        Point p{{"t", pt(rng)}, {"x", pt(rng)}, {"u", pt(rng)}};
        double exact, lo, hi;
        try {
            exact = eval(d, p);
            Point pl = p, ph = p;
            pl[w.name] -= h;
            ph[w.name] += h;
            lo = eval(e, pl);
            hi = eval(e, ph);
        } catch (const singular_eval&) {
            continue;
        }
        double fd = (hi - lo) / (2 * h);
        double rel = std::fabs(fd - exact) / (1.0 + std::fabs(exact));
        if (!expect(rel < 1e-5, "finite-difference mismatch " + std::to_string(rel) + " on " +
                                    to_string(e)))
            return false;
        ++done;
    }
    return true;
}

bool property_normalize_idempotent() {
    std::mt19937_64 rng(7311);
    std::uniform_real_distribution<double> cdist(-4, 4);
    Var t{"t", VarRole::Time}, x{"x", VarRole::Base, 1}, u{"u", VarRole::Fiber};
    SymbolTable st;
    st.declare(t);
    st.declare(x);
    st.declare(u);

    for (int it = 0; it < 12; ++it) {
        double lam = cdist(rng);
        if (std::fabs(lam) < 0.25) continue;
        Domain dom;
        dom.ranges = {VarRange::interval(t, 0, 1), VarRange::whole_line(x),
                      VarRange::interval(u, -1, 1)};
        ParabolicEquation eq = ParabolicEquation::make(t, {x}, u, dom);
        eq.b[0][0] = Expr::rational(1);
        eq.c[0][0] = Expr::real(lam);
        auto first = normalize::quasilinearize(eq, 0.0);
        if (!expect(first.target.has_value(), "quasilinearize lost its target")) return false;
        auto again = normalize::quasilinearize(*first.target, 0.0);
        if (!expect(again.iso.v_expr == Expr::variable(again.iso.u),
                    "quasilinearize is not idempotent at lambda " + std::to_string(lam)))
            return false;
    }

    for (int it = 0; it < 12; ++it) {
        double c = cdist(rng);
        Domain dom;
        dom.ranges = {VarRange::interval(t, 0, 2), VarRange::whole_line(x),
                      VarRange::whole_line(u)};
        ParabolicEquation eq = ParabolicEquation::make(t, {x}, u, dom);
        eq.b[0][0] = parse("2 + sin(u)", st);
        eq.bvec[0] = Expr::real(c);
        auto first = normalize::remove_drift(eq);
        if (!expect(first.target.has_value(), "remove_drift lost its target")) return false;
        auto again = normalize::remove_drift(*first.target);
        if (!expect(again.iso.y_expr[0] == Expr::variable(again.iso.x[0]),
                    "remove_drift is not idempotent at drift " + std::to_string(c)))
            return false;
    }
    return true;
}

bool quotients_agree(const ParabolicEquation& q1, const ParabolicEquation& q2) {
    if (q1.n != q2.n) return false;
    for (int k = 0; k < q1.n; ++k) {
        for (int l = k; l < q1.n; ++l) {
            if (!oracle::prob_equal(q1.b[k][l], q2.b[k][l], q1.dom, 500, 1e-6).pass()) return false;
            if (!oracle::prob_equal(q1.c[k][l], q2.c[k][l], q1.dom, 500, 1e-6).pass()) return false;
        }
        if (!oracle::prob_equal(q1.bvec[k], q2.bvec[k], q1.dom, 500, 1e-6).pass()) return false;
    }
    return oracle::prob_equal(q1.q, q2.q, q1.dom, 500, 1e-6).pass();
}

bool property_composition() {
    struct Pair {
        const char* eq_file;
        const char* map_file;
        // second leg built against the quotient chart (tau, y..., v)
        std::function<FiberedMap(const ParabolicEquation&)> second;
    };
    Var sig{"sig", VarRole::QuotientTime}, w{"w", VarRole::QuotientFiber};
    auto second_vars = [&](int m) { return io::base_vars(m, VarRole::QuotientBase, "z"); };

    std::vector<Pair> pairs;
    pairs.push_back({"heat_circle.eq", "scale.map", [&](const ParabolicEquation& q) {
                         SymbolTable st = quotient_symbols(const_cast<ParabolicEquation&>(q));
                         auto zs = second_vars(1);
                         FiberedMap G = FiberedMap::make(
                             q.t, q.x, q.u, sig, zs, w, parse("4*tau", st),
                             {parse("mod(2*y, 1)", st)}, parse("v", st));
                         SymbolTable ts;
                         ts.declare(sig);
                         ts.declare(w);
                         for (const auto& z : zs) ts.declare(z);
                         G.section = {parse("sig/4", ts), parse("z/2", ts), parse("w", ts)};
                         return G;
                     }});
    pairs.push_back({"heat_line.eq", "timescale.map", [&](const ParabolicEquation& q) {
                         SymbolTable st = quotient_symbols(q);
                         auto zs = second_vars(1);
                         FiberedMap G =
                             FiberedMap::make(q.t, q.x, q.u, sig, zs, w, parse("2*tau", st),
                                              {parse("y", st)}, parse("v", st));
                         SymbolTable ts;
                         ts.declare(sig);
                         ts.declare(w);
                         for (const auto& z : zs) ts.declare(z);
                         G.section = {parse("sig/2", ts), parse("z", ts), parse("w", ts)};
                         return G;
                     }});
    pairs.push_back({"grad_square.eq", "expmap.map", [&](const ParabolicEquation& q) {
                         SymbolTable st = quotient_symbols(q);
                         auto zs = second_vars(1);
                         FiberedMap G =
                             FiberedMap::make(q.t, q.x, q.u, sig, zs, w, parse("tau", st),
                                              {parse("y + tau", st)}, parse("v", st));
                         SymbolTable ts;
                         ts.declare(sig);
                         ts.declare(w);
                         for (const auto& z : zs) ts.declare(z);
                         G.section = {parse("sig", ts), parse("z - sig", ts), parse("w", ts)};
                         return G;
                     }});

    for (const auto& pr : pairs) {
        io::EquationFile f = load_eq(pr.eq_file);
        FiberedMap F = load_map(pr.map_file, f.eq);
        auto repF = morphism::pushforward(f.eq, F);
        if (!expect(repF.accepted() && repF.quotient.has_value(),
                    std::string(pr.map_file) + ": first leg not accepted"))
            return false;
        FiberedMap G = pr.second(*repF.quotient);
        auto repG = morphism::pushforward(*repF.quotient, G);
        if (!expect(repG.accepted() && repG.quotient.has_value(),
                    std::string(pr.map_file) + ": second leg not accepted"))
            return false;
        FiberedMap H = morphism::compose(F, G);
        auto repH = morphism::pushforward(f.eq, H, repG.quotient->dom);
        if (!expect(repH.accepted() && repH.quotient.has_value(),
                    std::string(pr.map_file) + ": composite not accepted"))
            return false;
        if (!expect(quotients_agree(*repH.quotient, *repG.quotient),
                    std::string(pr.map_file) + ": composite quotient disagrees"))
            return false;
    }
    return true;
}

bool property_closedness() {
    struct Case {
        const char* eq_file;
        const char* map_file;
        const char* label;
    };
    for (const Case& c : {Case{"grad_square.eq", "expmap.map", "PE1"},
                          Case{"sin_diffusion.eq", "wrap.map", "PE2"},
                          Case{"heat_line.eq", "timescale.map", "PE4"}}) {
        io::EquationFile f = load_eq(c.eq_file);
        ClassifyResult src = equation::classify(f.eq);
        if (!expect(src.has(c.label), std::string(c.eq_file) + " lost its " + c.label + " label"))
            return false;
        auto rep = morphism::pushforward(f.eq, load_map(c.map_file, f.eq));
        if (!expect(rep.accepted() && rep.quotient.has_value(),
                    std::string(c.map_file) + " not accepted"))
            return false;
        ClassifyResult quot = equation::classify(*rep.quotient);
        if (!expect(quot.has(c.label),
                    std::string(c.label) + " not preserved under the quotient of " + c.eq_file))
            return false;
    }
    return true;
}

bool criterion_properties() {
    auto t0 = std::chrono::steady_clock::now();
    bool ok = property_fd_vs_derivative();
    ok = ok && property_normalize_idempotent();
    ok = ok && property_composition();
    ok = ok && property_closedness();
    return ok && expect(seconds_since(t0) < 120.0, "property suites slower than 120 s");
}

}  // namespace

int main() {
    report(1, "circle scaling endomorphism", criterion_scaling());
    report(2, "periodic-in-u diffusion wraps", criterion_sin_diffusion());
    report(3, "twisted radial reduction", criterion_spherical());
    report(4, "primitive 4-dimensional projection", criterion_primitive_4d());
    report(5, "diffusion-law classification suite", criterion_classify_a());
    report(6, "quasilinearization", criterion_quasilinearize());
    report(7, "drift removal", criterion_remove_drift());
    report(8, "lattice engine", criterion_lattice());
    report(9, "property suites", criterion_properties());
    if (g_failures) {
        std::printf("%d criteria FAILED\n", g_failures);
        return 1;
    }
    std::printf("all 9 criteria passed\n");
    return 0;
}
