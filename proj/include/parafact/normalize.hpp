#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "parafact/equation.hpp"
#include "parafact/expr.hpp"
#include "parafact/morphism.hpp"
#include "parafact/oracle.hpp"
#include "parafact/table.hpp"

namespace parafact {

// Classification of a one-variable diffusion law a(u): affine log (Const /
// AexpExt), log-periodic-plus-linear (Aexp), the same after s = ln(u - u0)
// (Adeg / AdegExt), or None.
struct AClass {
    enum class Kind { Const, Aexp, Adeg, AexpExt, AdegExt, None };
    Kind kind = Kind::None;
    double lambda = 0.0;
    double period = 0.0;  // minimal detected period, > 0 for Aexp/Adeg
    double u0 = 0.0;      // base point of the degenerate substitution
    double residual = 0.0;
    std::string note;

    bool exceptional() const { return kind == Kind::Aexp || kind == Kind::Adeg; }
};

inline const char* aclass_name(AClass::Kind k) {
    switch (k) {
        case AClass::Kind::Const: return "Const";
        case AClass::Kind::Aexp: return "Aexp";
        case AClass::Kind::Adeg: return "Adeg";
        case AClass::Kind::AexpExt: return "AexpExt";
        case AClass::Kind::AdegExt: return "AdegExt";
        case AClass::Kind::None: return "None";
    }
    return "?";
}

struct AOptions {
    int grid = 512;
    double tol = 1e-4;  // normalized variance threshold of the period scan
    std::uint64_t seed = 0;
    std::vector<double> u0_hints;
};

// Output of a canonicalization: an isomorphism of charts plus the transformed
// equation. Opaque components carry their numeric evaluators; `artifacts`
// holds serializable interpolation tables for caching.
struct NormalizationResult {
    FiberedMap iso;
    std::optional<ParabolicEquation> target;
    std::string provenance;
    std::optional<Expr> psi;  // fiber shift of the gauge construction
    Verdict congruence;       // period congruence / descent evidence (gauge)
    std::vector<std::pair<std::string, Table1D>> artifacts;
};

namespace normalize {

namespace detail {

inline Expr num_const(double x) {
    double r = std::round(x);
    if (r == x && std::fabs(x) < 1e15) return Expr::rational(static_cast<std::int64_t>(r));
    return Expr::real(x);
}

inline std::string fresh_name(std::string base, const std::vector<std::string>& taken) {
    while (std::find(taken.begin(), taken.end(), base) != taken.end()) base += "_";
    return base;
}

// fresh target chart (tau, y..., v) avoiding the source names
inline void quotient_chart(const ParabolicEquation& eq, Var& tau, std::vector<Var>& ys, Var& v) {
    std::vector<std::string> taken{eq.t.name, eq.u.name};
    for (const auto& xv : eq.x) taken.push_back(xv.name);
    tau = Var{fresh_name("tau", taken), VarRole::QuotientTime, -1};
    taken.push_back(tau.name);
    ys.clear();
    for (int k = 0; k < eq.n; ++k) {
        std::string base = eq.n == 1 ? "y" : "y" + std::to_string(k + 1);
        ys.push_back(Var{fresh_name(base, taken), VarRole::QuotientBase, k});
        taken.push_back(ys.back().name);
    }
    v = Var{fresh_name("v", taken), VarRole::QuotientFiber, -1};
}

// cumulative integral table of f on a uniform grid (per-interval Simpson)
inline Table1D cumulative_integral(const std::function<double(double)>& f, double lo, double hi,
                                   int count) {
    Table1D t;
    t.lo = lo;
    t.hi = hi;
    t.values.resize(count);
    t.values[0] = 0.0;
    double h = (hi - lo) / (count - 1);
    double fa = f(lo);
    for (int i = 1; i < count; ++i) {
        double a = lo + (i - 1) * h;
        double fm = f(a + 0.5 * h), fb = f(a + h);
        t.values[i] = t.values[i - 1] + h / 6.0 * (fa + 4.0 * fm + fb);
        fa = fb;
    }
    return t;
}

// monotone scalar solve g(t) = target on [lo, hi] by bisection
template <class G>
inline double bisect_monotone(G g, double lo, double hi, double target) {
    double glo = g(lo), ghi = g(hi);
    bool increasing = ghi > glo;
    if ((target < std::min(glo, ghi) - 1e-9) || (target > std::max(glo, ghi) + 1e-9))
        throw singular_eval("inverse queried outside the tabulated range");
    for (int it = 0; it < 100; ++it) {
        double mid = 0.5 * (lo + hi);
        double gm = g(mid);
        if ((gm < target) == increasing)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

// ---- period detection ----

struct PeriodFit {
    bool found = false;
    double h = 0.0;
    double lambda = 0.0;
    double score = std::numeric_limits<double>::infinity();
    double detrended_sd = 0.0;  // spread of g - lambda*u, the "H" part
};

// Scan for the minimal h with Var[g(u+h) - g(u)] ~ 0 on [lo, hi]; grid of
// log-spaced candidates in (L/256, L/2) refined by golden section on the
// normalized variance objective.
inline PeriodFit scan_period(const std::function<std::optional<double>(double)>& g, double lo,
                             double hi, int grid, double tol) {
    PeriodFit out;
    const double L = hi - lo;
    if (!(L > 0) || grid < 8) return out;

    // detrended variance of g for normalization
    const int N = 1024;
    std::vector<double> us, gs;
    for (int i = 0; i < N; ++i) {
        double u = lo + (i + 0.5) / N * L;
        if (auto v = g(u)) {
            us.push_back(u);
            gs.push_back(*v);
        }
    }
    if (static_cast<int>(us.size()) < N / 2) return out;
    double su = 0, sg = 0, suu = 0, sug = 0;
    for (std::size_t i = 0; i < us.size(); ++i) {
        su += us[i];
        sg += gs[i];
        suu += us[i] * us[i];
        sug += us[i] * gs[i];
    }
    double m = static_cast<double>(us.size());
    double det = m * suu - su * su;
    double slope = det != 0 ? (m * sug - su * sg) / det : 0.0;
    double icept = (sg - slope * su) / m;
    double var_r = 0.0;
    for (std::size_t i = 0; i < us.size(); ++i) {
        double r = gs[i] - slope * us[i] - icept;
        var_r += r * r;
    }
    var_r /= m;
    out.detrended_sd = std::sqrt(var_r);
    if (var_r < 1e-14 * (1.0 + slope * slope * L * L)) {
        // effectively affine; nothing periodic to find
        return out;
    }

    const int M = 256;
    auto score = [&](double h, double* mean_out) -> double {
        double s = 0, s2 = 0;
        int ok = 0;
        for (int i = 0; i < M; ++i) {
            double u = lo + (i + 0.5) / M * (L - h);
            auto a = g(u), b = g(u + h);
            if (!a || !b) continue;
            double d = *b - *a;
            s += d;
            s2 += d * d;
            ++ok;
        }
        if (ok < M / 2) return std::numeric_limits<double>::infinity();
        double mean = s / ok;
        if (mean_out) *mean_out = mean;
        return (s2 / ok - mean * mean) / var_r;
    };

    double h0 = L / 256, h1 = L / 2;
    std::vector<double> hs(grid), sc(grid);
    for (int i = 0; i < grid; ++i) {
        hs[i] = h0 * std::pow(h1 / h0, i / (grid - 1.0));
        sc[i] = score(hs[i], nullptr);
    }
    int refined = 0;
    for (int i = 0; i < grid && refined < 32; ++i) {
        bool local_min = sc[i] < 0.05 && (i == 0 || sc[i] <= sc[i - 1]) &&
                         (i + 1 == grid || sc[i] <= sc[i + 1]);
        if (!local_min) continue;
        ++refined;
        double a = hs[std::max(0, i - 1)], b = hs[std::min(grid - 1, i + 1)];
        const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
        double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
        double f1 = score(x1, nullptr), f2 = score(x2, nullptr);
        for (int it = 0; it < 80; ++it) {
            if (f1 < f2) {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - gr * (b - a);
                f1 = score(x1, nullptr);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + gr * (b - a);
                f2 = score(x2, nullptr);
            }
        }
        double h = 0.5 * (a + b), mean = 0.0;
        double fs = score(h, &mean);
        // a genuine minimal period scores badly at h/2; a smooth function's
        // vanishing small-h variance scores even better there
        if (fs < tol && score(0.5 * h, nullptr) > 100.0 * fs + 1e-8) {
            out.found = true;
            out.h = h;
            out.lambda = mean / h;
            out.score = fs;
            return out;
        }
        out.score = std::min(out.score, fs);
    }
    return out;
}

}  // namespace detail

// ---- classification of the diffusion law a(u) ----

inline AClass classify_a(const Expr& a, const Var& u, const VarRange& omega,
                         const AOptions& opt = {}) {
    AClass res;
    VarRange r = omega;
    r.var = u;
    double lo = r.sample_lo(), hi = r.sample_hi();
    double L = hi - lo;
    if (!(L > 0)) {
        res.note = "empty interval";
        return res;
    }
    Domain udom;
    udom.ranges.push_back(r);

    auto alpha_at = [&](double uu) -> std::optional<double> {
        Point p{{u.name, uu}};
        try {
            double v = eval(a, p);
            if (!(v > 0)) return std::nullopt;
            return std::log(v);
        } catch (const singular_eval&) {
            return std::nullopt;
        } catch (const unbound_variable&) {
            return std::nullopt;
        }
    };
    {
        int ok = 0;
        for (int i = 0; i < 64; ++i)
            if (alpha_at(lo + (i + 0.5) / 64.0 * L)) ++ok;
        if (ok < 32) {
            res.note = "a not positive on the interval";
            return res;
        }
    }

    Expr alpha = Expr::apply(Fn::Ln, {a});
    Expr alpha1 = diff(alpha, u);
    Expr alpha2 = diff(alpha1, u);

    // affine log: Const or AexpExt
    Verdict lin = oracle::prob_zero(alpha2, udom, 400, 1e-8, opt.seed);
    if (lin.pass()) {
        Verdict flat = oracle::prob_zero(alpha1, udom, 400, 1e-8, opt.seed + 1);
        res.residual = lin.max_residual;
        if (flat.pass()) {
            res.kind = AClass::Kind::Const;
            return res;
        }
        res.kind = AClass::Kind::AexpExt;
        res.lambda = eval(alpha1, {{u.name, lo + 0.5 * L}});
        return res;
    }

    // periodic-plus-linear log
    auto fit = detail::scan_period(alpha_at, lo, hi, opt.grid, opt.tol);
    if (fit.found) {
        res.lambda = fit.lambda;
        res.period = fit.h;
        res.residual = fit.score;
        res.kind = fit.detrended_sd > 1e-6 * (1.0 + std::fabs(fit.lambda) * L)
                       ? AClass::Kind::Aexp
                       : AClass::Kind::AexpExt;
        return res;
    }

    // degenerate substitution s = ln(u - u0)
    std::vector<double> cands = opt.u0_hints;
    if (std::isfinite(omega.lo) && !omega.periodic) cands.push_back(omega.lo);
    if (cands.size() > 64) cands.resize(64);
    Var s{detail::fresh_name("s", {u.name}), VarRole::Parameter, -1};
    for (double u0 : cands) {
        double span = hi - u0;
        if (!(span > 0)) continue;
        double s_lo = std::log(std::max(1e-8 * span, 1e-300));
        double s_hi = std::log(0.999 * span);
        if (!(s_hi - s_lo > 0.5)) continue;
        Expr beta = subst(alpha, u, detail::num_const(u0) + Expr::apply(Fn::Exp, {Expr::variable(s)}));
        Domain sdom;
        sdom.ranges.push_back(VarRange::interval(s, s_lo, s_hi));
        Expr beta1 = diff(beta, s);
        Verdict blin = oracle::prob_zero(diff(beta1, s), sdom, 400, 1e-8, opt.seed + 2);
        if (blin.pass()) {
            res.kind = AClass::Kind::AdegExt;
            res.u0 = u0;
            res.residual = blin.max_residual;
            res.lambda = eval(beta1, {{s.name, 0.5 * (s_lo + s_hi)}});
            return res;
        }
        auto beta_at = [&](double ss) -> std::optional<double> {
            return alpha_at(u0 + std::exp(ss));
        };
        auto bfit = detail::scan_period(beta_at, s_lo, s_hi, opt.grid, opt.tol);
        if (bfit.found) {
            res.kind = bfit.detrended_sd > 1e-6 * (1.0 + std::fabs(bfit.lambda) * (s_hi - s_lo))
                           ? AClass::Kind::Adeg
                           : AClass::Kind::AdegExt;
            res.u0 = u0;
            res.lambda = bfit.lambda;
            res.period = bfit.h;
            res.residual = bfit.score;
            return res;
        }
    }

    res.kind = AClass::Kind::None;
    res.residual = fit.score;
    res.note = "no structure detected; periods above half the interval are not detectable";
    return res;
}

// ---- time reparametrization ----

// Builds the chart isomorphism (tau, y, v) -> (t(tau), y, v) with t the
// inverse of the time component of F, so that I o F has identity time.
inline NormalizationResult time_reparam(const FiberedMap& F, const Domain& source_dom,
                                        const std::optional<ParabolicEquation>& quot = std::nullopt,
                                        const CheckConfig& cfg = {}) {
    NormalizationResult out;
    const VarRange* tr = source_dom.find(F.t.name);
    if (!tr) throw std::invalid_argument("source domain lacks the time variable");
    double tlo = tr->sample_lo(), thi = tr->sample_hi();

    Expr tau_t = diff(F.tau_expr, F.t);
    double sign = 0.0;
    for (int i = 0; i < 128; ++i) {
        double t = tlo + (i + 0.5) / 128.0 * (thi - tlo);
        double d;
        try {
            d = eval(tau_t, {{F.t.name, t}});
        } catch (const singular_eval&) {
            throw std::invalid_argument("time component not evaluable on T");
        }
        if (std::fabs(d) < 1e-9 || (sign != 0.0 && d * sign < 0))
            throw std::invalid_argument("time component is not strictly monotone");
        sign = d > 0 ? 1.0 : -1.0;
    }

    Expr tau_var = Expr::variable(F.tau);
    Expr tinv = Expr::rational(0);
    if (diff(tau_t, F.t).is_zero()) {
        // affine: tau = c t + d
        Expr d = subst(F.tau_expr, F.t, Expr::rational(0));
        tinv = (tau_var - d) / tau_t;
        out.provenance = "time-reparam: affine inverse";
    } else {
        Expr tau_tt = diff(tau_t, F.t);
        Expr tau_expr = F.tau_expr;
        std::string tname = F.t.name;
        auto fn = std::make_shared<OpaqueFn>();
        fn->name = "tinv";
        fn->arity = 1;
        fn->max_order = 2;
        fn->eval = [tau_expr, tau_t, tau_tt, tname, tlo, thi](const std::vector<int>& deriv,
                                                              const std::vector<double>& args) {
            auto g = [&](double t) { return eval(tau_expr, {{tname, t}}); };
            double tstar = detail::bisect_monotone(g, tlo, thi, args[0]);
            if (deriv[0] == 0) return tstar;
            double d1 = eval(tau_t, {{tname, tstar}});
            if (deriv[0] == 1) return 1.0 / d1;
            double d2 = eval(tau_tt, {{tname, tstar}});
            return -d2 / (d1 * d1 * d1);  // order 2
        };
        tinv = Expr::opaque(fn, {tau_var});
        out.provenance = "time-reparam: tabulated numeric inverse";
        double qlo = eval(F.tau_expr, {{F.t.name, tlo}});
        double qhi = eval(F.tau_expr, {{F.t.name, thi}});
        if (qlo > qhi) std::swap(qlo, qhi);
        Expr tcap = tinv;
        out.artifacts.emplace_back(
            "tinv", Table1D::tabulate(
                        [&](double x) { return eval(tcap, {{F.tau.name, x}}); }, qlo, qhi, 257));
    }

    std::vector<Expr> id_ys;
    for (const auto& yv : F.y) id_ys.push_back(Expr::variable(yv));
    out.iso = FiberedMap::make(F.tau, F.y, F.v, F.t, F.y, F.v, tinv, id_ys,
                               Expr::variable(F.v));
    std::vector<Expr> sec{F.tau_expr};
    for (const auto& yv : F.y) sec.push_back(Expr::variable(yv));
    sec.push_back(Expr::variable(F.v));
    out.iso.section = std::move(sec);

    if (quot) {
        auto rep = morphism::pushforward(*quot, out.iso, std::nullopt, cfg);
        if (rep.quotient) out.target = rep.quotient;
    }
    return out;
}

// ---- quasilinearization ----

// With c = lambda b, the fiber change v = int_{u0}^{u} exp(int_{u0}^{xi}
// lambda) dxi removes the gradient-squared term (target C == 0).
inline NormalizationResult quasilinearize(const ParabolicEquation& eq, double u0,
                                          const CheckConfig& cfg = {}) {
    NormalizationResult out;
    auto lambda = equation::factor_pe1(eq, cfg);
    if (!lambda) throw std::invalid_argument("equation does not satisfy c = lambda b");
    Expr lam = *lambda;
    const Var& u = eq.u;
    bool dep_u = depends_on(lam, u);
    bool dep_base = depends_on(lam, eq.t);
    for (const auto& xv : eq.x) dep_base = dep_base || depends_on(lam, xv);
    Expr u0c = detail::num_const(u0);

    Var tau, v;
    std::vector<Var> ys;
    detail::quotient_chart(eq, tau, ys, v);
    std::map<std::string, Expr> tgt;  // source base names -> target vars
    tgt[eq.t.name] = Expr::variable(tau);
    for (int i = 0; i < eq.n; ++i) tgt[eq.x[i].name] = Expr::variable(ys[i]);

    Expr uvar = Expr::variable(u);
    Expr vvar = Expr::variable(v);
    Expr v_expr = Expr::rational(0), sec_u = Expr::rational(0);

    if (oracle::prob_zero(lam, eq.dom, cfg.samples, cfg.tol, cfg.seed).pass()) {
        v_expr = uvar - u0c;
        sec_u = vvar + u0c;
        out.provenance = "quasilinearize: lambda = 0, fiber shift";
    } else if (!dep_u) {
        v_expr = (Expr::apply(Fn::Exp, {lam * (uvar - u0c)}) - Expr::rational(1)) / lam;
        Expr lamT = subst(lam, tgt);
        sec_u = u0c + Expr::apply(Fn::Ln, {Expr::rational(1) + lamT * vvar}) / lamT;
        out.provenance = "quasilinearize: closed form, fiber-independent lambda";
    } else if (!dep_base) {
        const VarRange* ur = eq.dom.find(u.name);
        if (!ur) throw std::invalid_argument("domain lacks the fiber variable");
        double glo = std::min(u0, ur->sample_lo()), ghi = std::max(u0, ur->sample_hi());
        std::string uname = u.name;
        Expr lam_cap = lam;
        auto lam_at = [lam_cap, uname](double x) { return eval(lam_cap, {{uname, x}}); };
        Table1D inner = detail::cumulative_integral(lam_at, glo, ghi, 4097);
        double inner0 = inner(u0);
        auto integrand = [&](double x) { return std::exp(inner(x) - inner0); };
        Table1D outer = detail::cumulative_integral(integrand, glo, ghi, 4097);
        double outer0 = outer(u0);
        Expr dlam = diff(lam, u);

        auto fwd = std::make_shared<OpaqueFn>();
        fwd->name = "qlin";
        fwd->arity = 1;
        fwd->max_order = 3;
        fwd->eval = [inner, outer, inner0, outer0, lam_cap, dlam, uname](
                        const std::vector<int>& deriv, const std::vector<double>& args) {
            double x = args[0];
            switch (deriv[0]) {
                case 0: return outer(x) - outer0;
                case 1: return std::exp(inner(x) - inner0);
                case 2: return eval(lam_cap, {{uname, x}}) * std::exp(inner(x) - inner0);
                default: {
                    double l = eval(lam_cap, {{uname, x}});
                    double dl = eval(dlam, {{uname, x}});
                    return (dl + l * l) * std::exp(inner(x) - inner0);
                }
            }
        };
        v_expr = Expr::opaque(fwd, {uvar});

        auto inv = std::make_shared<OpaqueFn>();
        inv->name = "qinv";
        inv->arity = 1;
        inv->max_order = 2;
        inv->eval = [inner, outer, inner0, outer0, lam_cap, uname, glo, ghi](
                        const std::vector<int>& deriv, const std::vector<double>& args) {
            auto g = [&](double x) { return outer(x) - outer0; };
            double ustar = detail::bisect_monotone(g, glo, ghi, args[0]);
            double e = std::exp(inner(ustar) - inner0);
            if (deriv[0] == 0) return ustar;
            if (deriv[0] == 1) return 1.0 / e;
            return -eval(lam_cap, {{uname, ustar}}) / (e * e);  // order 2
        };
        sec_u = Expr::opaque(inv, {vvar});
        out.provenance = "quasilinearize: tabulated double quadrature";
        out.artifacts.emplace_back("qlin", outer);
        out.artifacts.emplace_back("qlin-exponent", inner);
    } else {
        throw std::invalid_argument(
            "lambda mixes fiber and base dependence; no product quadrature applies");
    }

    std::vector<Expr> id_ys;
    for (const auto& xv : eq.x) id_ys.push_back(Expr::variable(xv));
    out.iso = FiberedMap::make(eq.t, eq.x, u, tau, ys, v, Expr::variable(eq.t),
                               std::move(id_ys), v_expr);
    std::vector<Expr> sec{Expr::variable(tau)};
    for (const auto& yv : ys) sec.push_back(Expr::variable(yv));
    sec.push_back(sec_u);
    out.iso.section = std::move(sec);

    auto rep = morphism::pushforward(eq, out.iso, std::nullopt, cfg);
    if (rep.quotient) out.target = rep.quotient;
    return out;
}

// ---- drift removal ----

namespace detail {

// Flow map of dx/ds = field(s, x) between a variable time and the anchor,
// differentiated by nested central differences, values memoized per point.
struct FlowEvaluator {
    std::vector<Expr> field;
    Var svar;
    std::vector<Var> xvars;
    double anchor = 0.0;
    bool reverse = false;  // false: args[0] -> anchor; true: anchor -> args[0]
    int steps = 96;
    std::map<std::vector<double>, std::vector<double>> cache;

    const std::vector<double>& value(const std::vector<double>& args) {
        auto it = cache.find(args);
        if (it != cache.end()) return it->second;
        std::vector<double> x0(args.begin() + 1, args.end());
        double s0 = reverse ? anchor : args[0];
        double s1 = reverse ? args[0] : anchor;
        auto r = oracle::integrate_flow(field, svar, xvars, s0, s1, std::move(x0), steps);
        return cache.emplace(args, std::move(r.x)).first->second;
    }

    double eval(int comp, std::vector<int> deriv, std::vector<double> args) {
        if (!reverse && deriv[0] > 0) {
            // the value is constant along trajectories, so its time
            // derivative is exactly -sum_i f_i d/dx_i of the value; remaining
            // derivatives distribute by Leibniz, with the field
            // differentiated symbolically
            std::vector<int> alpha = deriv;
            alpha[0] -= 1;
            Point at{{svar.name, args[0]}};
            for (std::size_t i = 0; i < xvars.size(); ++i) at[xvars[i].name] = args[1 + i];
            double acc = 0.0;
            std::vector<int> beta(alpha.size(), 0);
            for (;;) {
                double coeff = 1.0;
                for (std::size_t k = 0; k < alpha.size(); ++k)
                    for (int r = 0; r < beta[k]; ++r)
                        coeff *= double(alpha[k] - r) / (r + 1);
                for (std::size_t i = 0; i < xvars.size(); ++i) {
                    Expr df = field[i];
                    for (int r = 0; r < beta[0]; ++r) df = diff(df, svar);
                    for (std::size_t k = 1; k < beta.size(); ++k)
                        for (int r = 0; r < beta[k]; ++r) df = diff(df, xvars[k - 1]);
                    std::vector<int> rem(alpha.size());
                    for (std::size_t k = 0; k < alpha.size(); ++k) rem[k] = alpha[k] - beta[k];
                    rem[1 + i] += 1;
                    acc -= coeff * parafact::eval(df, at) * eval(comp, rem, args);
                }
                std::size_t k = 0;
                while (k < beta.size() && beta[k] == alpha[k]) beta[k++] = 0;
                if (k == beta.size()) break;
                beta[k] += 1;
            }
            return acc;
        }
        for (std::size_t j = 0; j < deriv.size(); ++j) {
            if (deriv[j] > 0) {
                deriv[j] -= 1;
                // fourth-order stencil with a fixed step: the step must not
                // depend on args[j], or the truncation error would differ
                // between points that are identified by a deck shift
                const double h = 1e-2;
                double acc = 0.0;
                const double w[4] = {1.0, -8.0, 8.0, -1.0};
                const double o[4] = {-2.0, -1.0, 1.0, 2.0};
                for (int k = 0; k < 4; ++k) {
                    auto a2 = args;
                    a2[j] += o[k] * h;
                    acc += w[k] * eval(comp, deriv, std::move(a2));
                }
                return acc / (12 * h);
            }
        }
        return value(args)[comp];
    }
};

}  // namespace detail

// Straightens the drift split b^i = a bbar^i + xi^i by the characteristics of
// dx/ds = -xi(s, x), anchored at the left end of T.
inline NormalizationResult remove_drift(const ParabolicEquation& eq, const CheckConfig& cfg = {}) {
    NormalizationResult out;
    auto f = equation::factor_pe2(eq, eq.omega_mid(), cfg);
    if (!f) throw std::invalid_argument("diffusion does not factor as a(t,x,u) bbar(t,x)");
    Status st = equation::factor_qpe2(eq, *f, cfg);
    if (st == Status::Fail || !f->xi)
        throw std::invalid_argument("drift does not split as a bbar^i + xi^i");
    const std::vector<Expr>& xi = *f->xi;

    const VarRange* tr = eq.dom.find(eq.t.name);
    double t0 = (tr && std::isfinite(tr->lo)) ? tr->lo : 0.0;
    Expr t0c = detail::num_const(t0);

    Var tau, v;
    std::vector<Var> ys;
    detail::quotient_chart(eq, tau, ys, v);

    bool all_zero = true, all_const = true;
    for (const auto& e : xi) {
        all_zero = all_zero && e.is_zero();
        all_const = all_const && free_vars(e).empty();
    }

    std::vector<Expr> y_exprs, sec_x;
    if (all_zero) {
        for (const auto& xv : eq.x) y_exprs.push_back(Expr::variable(xv));
        for (const auto& yv : ys) sec_x.push_back(Expr::variable(yv));
        out.provenance = "drift-removal: identity (no drift residue)";
    } else if (all_const) {
        for (int i = 0; i < eq.n; ++i) {
            Expr shift = xi[i] * (Expr::variable(eq.t) - t0c);
            Expr ye = Expr::variable(eq.x[i]) + shift;
            const VarRange* xr = eq.dom.find(eq.x[i].name);
            if (xr && xr->periodic)
                ye = Expr::apply(Fn::Mod, {ye, detail::num_const(xr->modulus)});
            y_exprs.push_back(ye);
            sec_x.push_back(Expr::variable(ys[i]) - xi[i] * (Expr::variable(tau) - t0c));
        }
        out.provenance = "drift-removal: constant drift, affine shear";
    } else {
        auto fwd = std::make_shared<detail::FlowEvaluator>();
        auto bwd = std::make_shared<detail::FlowEvaluator>();
        for (const auto& e : xi) fwd->field.push_back(-e);
        fwd->svar = eq.t;
        fwd->xvars = eq.x;
        fwd->anchor = t0;
        *bwd = *fwd;
        bwd->reverse = true;
        bwd->svar = tau;  // section integrates in the target time
        bwd->xvars = ys;
        std::map<std::string, Expr> to_target{{eq.t.name, Expr::variable(tau)}};
        for (int i = 0; i < eq.n; ++i)
            to_target.emplace(eq.x[i].name, Expr::variable(ys[i]));
        for (auto& e : bwd->field) e = subst(e, to_target);
        std::vector<Expr> fargs{Expr::variable(eq.t)};
        for (const auto& xv : eq.x) fargs.push_back(Expr::variable(xv));
        std::vector<Expr> bargs{Expr::variable(tau)};
        for (const auto& yv : ys) bargs.push_back(Expr::variable(yv));
        for (int k = 0; k < eq.n; ++k) {
            auto ffn = std::make_shared<OpaqueFn>();
            ffn->name = eq.n == 1 ? "driftflow" : "driftflow" + std::to_string(k + 1);
            ffn->arity = 1 + eq.n;
            ffn->max_order = 3;
            ffn->eval = [fwd, k](const std::vector<int>& d, const std::vector<double>& a) {
                return fwd->eval(k, d, a);
            };
            Expr ye = Expr::opaque(ffn, fargs);
            const VarRange* xr = eq.dom.find(eq.x[k].name);
            if (xr && xr->periodic)
                ye = Expr::apply(Fn::Mod, {ye, detail::num_const(xr->modulus)});
            y_exprs.push_back(ye);

            auto bfn = std::make_shared<OpaqueFn>();
            bfn->name = eq.n == 1 ? "driftsec" : "driftsec" + std::to_string(k + 1);
            bfn->arity = 1 + eq.n;
            bfn->max_order = 3;
            bfn->eval = [bwd, k](const std::vector<int>& d, const std::vector<double>& a) {
                return bwd->eval(k, d, a);
            };
            sec_x.push_back(Expr::opaque(bfn, bargs));
        }
        out.provenance = "drift-removal: numeric characteristic flow";
    }

    out.iso = FiberedMap::make(eq.t, eq.x, eq.u, tau, ys, v, Expr::variable(eq.t),
                               std::move(y_exprs), Expr::variable(eq.u));
    std::vector<Expr> sec{Expr::variable(tau)};
    for (auto& e : sec_x) sec.push_back(std::move(e));
    sec.push_back(Expr::variable(v));
    out.iso.section = std::move(sec);

    auto rep = morphism::pushforward(eq, out.iso, std::nullopt, cfg);
    if (rep.quotient) out.target = rep.quotient;
    return out;
}

// ---- gauge canonicalization ----

// Normalizes an affine-in-fiber morphism v = phi u + psi0 according to the
// class of the diffusion law: exceptional exponential laws keep only a shift
// u + psi whose fiber differences must be integral multiples of the period;
// the degenerate variant keeps v0 + (u - u0) exp(psi); otherwise the gauge is
// absorbed entirely and the composite fiber map becomes the identity.
inline NormalizationResult gauge_canonicalize(const ParabolicEquation& eq, const FiberedMap& F,
                                              const AClass& ac, const CheckConfig& cfg = {},
                                              double v0 = 0.0) {
    NormalizationResult out;
    if (!diff(diff(F.v_expr, F.u), F.u).is_zero())
        throw std::invalid_argument("gauge canonicalization requires a fiber-affine map");
    if (!F.section) throw std::invalid_argument("gauge canonicalization requires a section");

    Expr phi = diff(F.v_expr, F.u);
    Expr psi0 = subst(F.v_expr, F.u, Expr::rational(0));
    auto sb = F.section_bindings();
    Expr phibar = subst(phi, sb);

    auto fp = oracle::fiber_pairs(F, eq.dom, 32, cfg.tol, cfg.seed);
    Verdict phi_desc = morphism::fiber_constancy(phi, fp, 32, cfg.tol, cfg.seed);
    if (phi_desc.status == Status::Fail) {
        out.congruence = phi_desc;
        out.congruence.note = "gauge factor does not descend to the target";
        out.provenance = "gauge: inconsistent";
        out.iso = F;  // placeholder; no canonicalization exists
        return out;
    }

    std::vector<std::string> taken{F.tau.name, F.v.name};
    for (const auto& yv : F.y) taken.push_back(yv.name);
    Var w{detail::fresh_name("w", taken), VarRole::QuotientFiber, -1};
    Expr vvar = Expr::variable(F.v), wvar = Expr::variable(w);
    std::vector<Expr> id_ys;
    for (const auto& yv : F.y) id_ys.push_back(Expr::variable(yv));

    auto finish_iso = [&](Expr w_expr, Expr sec_v) {
        out.iso = FiberedMap::make(F.tau, F.y, F.v, F.tau, F.y, w, Expr::variable(F.tau),
                                   id_ys, std::move(w_expr));
        std::vector<Expr> sec{Expr::variable(F.tau)};
        for (const auto& yv : F.y) sec.push_back(Expr::variable(yv));
        sec.push_back(subst(sec_v, F.v, wvar));
        out.iso.section = std::move(sec);
    };

    auto congruence_of = [&](const Expr& psi) {
        Verdict v;
        v.seed = cfg.seed;
        v.samples = static_cast<int>(fp.pairs.size());
        if (fp.pairs.empty()) {
            v.status = fp.discrete ? Status::Pass : Status::Inconclusive;
            v.note = fp.discrete ? "discrete fiber" : "insufficient fiber pairs";
            return v;
        }
        for (const auto& pr : fp.pairs) {
            double d;
            try {
                d = eval(psi, pr.p2) - eval(psi, pr.p1);
            } catch (const singular_eval&) {
                ++v.singular;
                continue;
            }
            double resid;
            if (ac.period > 0) {
                double k = std::round(d / ac.period);
                resid = std::fabs(d - k * ac.period) / (1.0 + std::fabs(d));
            } else {
                resid = std::fabs(d) / (1.0 + std::fabs(d));
            }
            v.max_residual = std::max(v.max_residual, resid);
            if (resid > std::max(1e-6, cfg.tol) && !v.witness) {
                v.witness = pr.p1;
                v.witness_partner = pr.p2;
            }
        }
        if (v.witness) {
            v.status = Status::Fail;
            v.note = ac.period > 0 ? "fiber shift differences are not multiples of the period"
                                   : "fiber shift does not descend";
        } else {
            v.status = Status::Pass;
        }
        return v;
    };

    switch (ac.kind) {
        case AClass::Kind::Aexp: {
            finish_iso(vvar / phibar, vvar * phibar);
            out.psi = psi0 / phi;
            out.congruence = congruence_of(*out.psi);
            out.provenance = "gauge: exponential law, composite u + psi";
            break;
        }
        case AClass::Kind::Adeg: {
            Expr chi = subst(F.v_expr, F.u, detail::num_const(ac.u0));
            Expr chibar = subst(chi, sb);
            Expr v0c = detail::num_const(v0);
            finish_iso(v0c + vvar - chibar, vvar - v0c + chibar);
            out.psi = Expr::apply(Fn::Ln, {phi});
            out.congruence = congruence_of(*out.psi);
            out.provenance = "gauge: degenerate law, composite v0 + (u - u0) exp(psi)";
            break;
        }
        default: {
            Expr psibar = subst(psi0, sb);
            finish_iso((vvar - psibar) / phibar, vvar * phibar + psibar);
            out.congruence = congruence_of(psi0 / phi);
            out.congruence.note = out.congruence.note.empty() ? "gauge fully absorbed"
                                                              : out.congruence.note;
            out.provenance = "gauge: non-exceptional law, composite fiber identity";
            break;
        }
    }

    auto composite = morphism::compose(F, out.iso);
    auto rep = morphism::pushforward(eq, composite, std::nullopt, cfg);
    if (rep.quotient) out.target = rep.quotient;
    return out;
}

}  // namespace normalize
}  // namespace parafact
