#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "parafact/equation.hpp"
#include "parafact/expr.hpp"
#include "parafact/oracle.hpp"

namespace parafact {

// Shape of the map, from most general to most restricted.
enum class MapShape { PEGeneral, TPE, QPEAffine, SQPE, AQPEAffine, EPE };

inline const char* shape_name(MapShape s) {
    switch (s) {
        case MapShape::PEGeneral: return "PE-general";
        case MapShape::TPE: return "TPE";
        case MapShape::QPEAffine: return "QPE-affine";
        case MapShape::SQPE: return "SQPE";
        case MapShape::AQPEAffine: return "AQPE-affine";
        case MapShape::EPE: return "EPE";
    }
    return "?";
}

// generality rank; lower = more restricted
inline int shape_rank(MapShape s) {
    switch (s) {
        case MapShape::EPE: return 0;
        case MapShape::AQPEAffine: return 1;
        case MapShape::SQPE: return 2;
        case MapShape::QPEAffine: return 3;
        case MapShape::TPE: return 4;
        case MapShape::PEGeneral: return 5;
    }
    return 5;
}

// (t, x, u) -> (tau(t), y(t,x), v(t,x,u)), submersive in each block.
struct FiberedMap {
    Var t;
    std::vector<Var> x;
    Var u;
    Var tau;
    std::vector<Var> y;
    Var v;
    Expr tau_expr = Expr::rational(0);
    std::vector<Expr> y_expr;
    Expr v_expr = Expr::rational(0);
    // back-map (t(tau), x_i(tau,y,v)..., u(tau,y,v)), size n()+2
    std::optional<std::vector<Expr>> section;
    MapShape shape = MapShape::PEGeneral;

    int n() const { return static_cast<int>(x.size()); }
    int m() const { return static_cast<int>(y.size()); }

    static FiberedMap make(Var t, std::vector<Var> x, Var u, Var tau, std::vector<Var> y, Var v,
                           Expr tau_expr, std::vector<Expr> y_expr, Expr v_expr) {
        FiberedMap F;
        F.t = std::move(t);
        F.x = std::move(x);
        F.u = std::move(u);
        F.tau = std::move(tau);
        F.y = std::move(y);
        F.v = std::move(v);
        F.tau_expr = std::move(tau_expr);
        F.y_expr = std::move(y_expr);
        F.v_expr = std::move(v_expr);
        F.check_structure();
        F.shape = F.infer_shape();
        return F;
    }

    // variable-dependence constraints of the admissible triangular form
    void check_structure() const {
        auto allowed = [&](const Expr& e, const std::vector<Var>& vars, const char* what) {
            for (const auto& [name, var] : free_vars(e)) {
                bool ok = false;
                for (const auto& w : vars) ok = ok || w.name == name;
                if (!ok)
                    throw std::invalid_argument(std::string(what) + " may not depend on " + name);
            }
        };
        allowed(tau_expr, {t}, "tau");
        std::vector<Var> tx{t};
        tx.insert(tx.end(), x.begin(), x.end());
        for (const auto& ye : y_expr) allowed(ye, tx, "y");
        std::vector<Var> txu = tx;
        txu.push_back(u);
        allowed(v_expr, txu, "v");
        if (y_expr.size() != y.size()) throw std::invalid_argument("y arity mismatch");
    }

    MapShape infer_shape() const {
        bool tpe = tau_expr == Expr::variable(t);
        if (!tpe) return MapShape::PEGeneral;
        bool affine = diff(diff(v_expr, u), u).is_zero();
        if (!affine) return MapShape::TPE;
        bool y_static = true;
        for (const auto& ye : y_expr) y_static = y_static && !depends_on(ye, t);
        if (!y_static) return MapShape::QPEAffine;
        if (v_expr == Expr::variable(u)) return MapShape::EPE;
        if (!depends_on(v_expr, t)) return MapShape::AQPEAffine;
        return MapShape::SQPE;
    }

    // evaluate the image of a source point, named by the target variables
    Point image(const Point& p) const {
        Point q;
        q[tau.name] = eval(tau_expr, p);
        for (int k = 0; k < m(); ++k) q[y[k].name] = eval(y_expr[k], p);
        q[v.name] = eval(v_expr, p);
        return q;
    }

    // bindings mapping target variable names to the forward expressions
    std::map<std::string, Expr> forward_bindings() const {
        std::map<std::string, Expr> b;
        b[tau.name] = tau_expr;
        for (int k = 0; k < m(); ++k) b[y[k].name] = y_expr[k];
        b[v.name] = v_expr;
        return b;
    }

    std::map<std::string, Expr> section_bindings() const {
        if (!section) throw std::logic_error("map has no section");
        std::map<std::string, Expr> b;
        b[t.name] = (*section)[0];
        for (int i = 0; i < n(); ++i) b[x[i].name] = (*section)[1 + i];
        b[u.name] = (*section)[1 + n()];
        return b;
    }
};

// Derivatives of the fiber inverse u = U(t,x,v), written in the source
// variables through v(t,x,u).
struct FiberDifferentialOps {
    Expr tau_t, v_u, U_v, lnUv_v, U_t;
    std::vector<Expr> U_j, lnUv_j;
    std::vector<std::vector<Expr>> U_ij;

    explicit FiberDifferentialOps(const FiberedMap& F) {
        const int n = F.n();
        tau_t = diff(F.tau_expr, F.t);
        v_u = diff(F.v_expr, F.u);
        Expr v_uu = diff(v_u, F.u);
        U_v = Expr::rational(1) / v_u;
        lnUv_v = -v_uu / (v_u * v_u);
        U_t = -diff(F.v_expr, F.t) / v_u;
        U_j.resize(n);
        lnUv_j.resize(n);
        for (int j = 0; j < n; ++j) {
            Expr v_j = diff(F.v_expr, F.x[j]);
            Expr v_uj = diff(v_u, F.x[j]);
            U_j[j] = -v_j / v_u;
            lnUv_j[j] = -v_uj / v_u + v_j * v_uu / (v_u * v_u);
        }
        U_ij.assign(n, std::vector<Expr>(n, Expr::rational(0)));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) U_ij[i][j] = fiber_fixed_deriv(F, U_j[j], i);
    }

    // D_i at fixed fiber coordinate v: d_i - (v_i/v_u) d_u
    static Expr fiber_fixed_deriv(const FiberedMap& F, const Expr& e, int i) {
        Expr v_i = diff(F.v_expr, F.x[i]);
        Expr v_u = diff(F.v_expr, F.u);
        return diff(e, F.x[i]) - (v_i / v_u) * diff(e, F.u);
    }
};

namespace oracle {

struct FiberPair {
    Point p1, p2;
    double image_defect = 0.0;
};

struct FiberPairSet {
    std::vector<FiberPair> pairs;
    bool partial = false;
    bool discrete = false;
};

namespace detail {

// top-level periodic structure y^k = mod(arg, modulus)
struct ModStructure {
    int k;
    Expr arg;
    double modulus;
};

inline std::vector<ModStructure> mod_structures(const FiberedMap& F) {
    std::vector<ModStructure> out;
    for (int k = 0; k < F.m(); ++k) {
        const Expr& ye = F.y_expr[k];
        if (ye.kind() == Expr::Kind::Builtin && ye.fn() == Fn::Mod &&
            ye.kids()[1].is_constant()) {
            double m = eval(ye.kids()[1], {});
            if (m > 0) out.push_back({k, ye.kids()[0], m});
        }
    }
    return out;
}

inline double image_defect(const FiberedMap& F, const Point& p1, const Point& p2) {
    Point q1 = F.image(p1), q2 = F.image(p2);
    double d = 0.0;
    for (const auto& [name, a] : q1) {
        double b = q2.at(name);
        d = std::max(d, std::fabs(a - b) / (1.0 + std::fabs(a) + std::fabs(b)));
    }
    return d;
}

inline double separation(const Point& p1, const Point& p2) {
    double d = 0.0;
    for (const auto& [name, a] : p1) d = std::max(d, std::fabs(a - p2.at(name)));
    return d;
}

}  // namespace detail

// Solve F(p2) = F(p1) for p2 != p1. Periodic identifications are handled by
// analytic shifts along the argument gradient; otherwise seeded Newton solves
// from sample restarts.
inline FiberPairSet fiber_pairs(const FiberedMap& F, const Domain& dom, int count,
                                double tol = 1e-6, std::uint64_t seed = 0) {
    FiberPairSet out;
    std::vector<Point> pts;
    try {
        pts = sample(dom, std::max(count, 32), seed);
    } catch (const sampling_error&) {
        out.partial = true;
        return out;
    }
    auto mods = detail::mod_structures(F);
    const int n = F.n();

    auto try_accept = [&](const Point& p1, Point p2) {
        if (detail::separation(p1, p2) < 10 * tol) return false;
        for (const auto& r : dom.ranges) {
            auto it = p2.find(r.var.name);
            if (it != p2.end() && !r.contains(it->second)) return false;
        }
        if (!dom.satisfied(p2)) return false;
        double defect;
        try {
            defect = detail::image_defect(F, p1, p2);
        } catch (const singular_eval&) {
            return false;
        }
        if (defect > tol) return false;
        out.pairs.push_back({p1, std::move(p2), defect});
        return true;
    };

    // analytic periodic shifts
    if (!mods.empty()) {
        int dir = 1;
        for (const auto& p1 : pts) {
            if (static_cast<int>(out.pairs.size()) >= count) break;
            for (const auto& ms : mods) {
                std::vector<double> grad(n);
                double norm2 = 0.0;
                bool ok = true;
                for (int i = 0; i < n; ++i) {
                    try {
                        grad[i] = eval(diff(ms.arg, F.x[i]), p1);
                    } catch (const singular_eval&) {
                        ok = false;
                        break;
                    }
                    norm2 += grad[i] * grad[i];
                }
                if (!ok || norm2 < 1e-12) continue;
                double a1;
                try {
                    a1 = eval(ms.arg, p1);
                } catch (const singular_eval&) {
                    continue;
                }
                Point p2 = p1;
                for (int i = 0; i < n; ++i)
                    p2[F.x[i].name] += dir * ms.modulus * grad[i] / norm2;
                // the gradient shift is exact only for affine arguments; polish
                auto refined = newton_solve({ms.arg}, F.x, {a1 + dir * ms.modulus}, p2);
                if (refined) p2 = *refined;
                dir = -dir;
                // restore the fiber coordinate
                if (depends_on(F.v_expr, F.u)) {
                    double v1;
                    try {
                        v1 = eval(F.v_expr, p1);
                    } catch (const singular_eval&) {
                        continue;
                    }
                    auto solved = newton_solve({F.v_expr}, {F.u}, {v1}, p2);
                    if (!solved) continue;
                    p2 = *solved;
                }
                try_accept(p1, p2);
                if (static_cast<int>(out.pairs.size()) >= count) break;
            }
        }
    }

    // generic Newton restarts
    if (static_cast<int>(out.pairs.size()) < count) {
        std::vector<Expr> img_exprs = F.y_expr;
        img_exprs.push_back(F.v_expr);
        std::vector<Var> unknowns = F.x;
        unknowns.push_back(F.u);
        const int npts = static_cast<int>(pts.size());
        for (int a = 0; a < npts && static_cast<int>(out.pairs.size()) < count; ++a) {
            const Point& p1 = pts[a];
            std::vector<double> target;
            bool ok = true;
            for (const auto& e : img_exprs) {
                try {
                    target.push_back(eval(e, p1));
                } catch (const singular_eval&) {
                    ok = false;
                    break;
                }
            }
            if (!ok) continue;
            for (int r = 1; r <= 4; ++r) {
                Point start = pts[(a + r * 7 + 1) % npts];
                start[F.t.name] = p1.at(F.t.name);
                auto solved = newton_solve(img_exprs, unknowns, target, start);
                if (solved && try_accept(p1, *solved)) break;
            }
        }
    }

    out.partial = static_cast<int>(out.pairs.size()) < count;
    if (static_cast<int>(out.pairs.size()) < std::max(1, count / 10)) {
        // no usable fibers found; scan for image collisions to distinguish
        // discrete fibers from sampling failure
        int nscan = std::min<int>(pts.size(), 200);
        std::vector<Point> imgs;
        imgs.reserve(nscan);
        bool collision = false;
        for (int i = 0; i < nscan; ++i) {
            try {
                imgs.push_back(F.image(pts[i]));
            } catch (const singular_eval&) {
                imgs.push_back({});
            }
        }
        for (int i = 0; i < nscan && !collision; ++i)
            for (int j = i + 1; j < nscan; ++j) {
                if (imgs[i].empty() || imgs[j].empty()) continue;
                double d = 0.0;
                for (const auto& [name, a] : imgs[i])
                    d = std::max(d, std::fabs(a - imgs[j].at(name)) / (1.0 + std::fabs(a)));
                if (d <= tol && detail::separation(pts[i], pts[j]) > 10 * tol) {
                    collision = true;
                    break;
                }
            }
        out.discrete = !collision;
    }
    return out;
}

// Invert F at a target image point by damped Newton from sample restarts.
inline std::optional<Point> newton_invert(const FiberedMap& F, const Point& target,
                                          const Domain& dom, std::uint64_t seed = 0) {
    std::vector<Expr> img_exprs{F.tau_expr};
    img_exprs.insert(img_exprs.end(), F.y_expr.begin(), F.y_expr.end());
    img_exprs.push_back(F.v_expr);
    std::vector<Var> unknowns{F.t};
    unknowns.insert(unknowns.end(), F.x.begin(), F.x.end());
    unknowns.push_back(F.u);
    std::vector<double> tvec;
    tvec.push_back(target.at(F.tau.name));
    for (const auto& yv : F.y) tvec.push_back(target.at(yv.name));
    tvec.push_back(target.at(F.v.name));
    std::vector<Point> starts;
    try {
        starts = sample(dom, 32, seed);
    } catch (const sampling_error&) {
        return std::nullopt;
    }
    for (const auto& s : starts) {
        auto solved = newton_solve(img_exprs, unknowns, tvec, s);
        if (solved) return solved;
    }
    return std::nullopt;
}

}  // namespace oracle

namespace morphism {

namespace detail {

// derivative-free compass search toward the minimum, clipped to the domain
template <class Fn>
inline std::pair<double, Point> pattern_minimize(Fn f, Point p, const Domain& dom) {
    double best = f(p);
    double h = 0.25;
    for (int it = 0; it < 400 && h > 1e-13; ++it) {
        bool improved = false;
        for (const auto& r : dom.ranges) {
            auto it2 = p.find(r.var.name);
            if (it2 == p.end()) continue;
            for (double s : {h, -h}) {
                Point q = p;
                double scale = r.sample_hi() - r.sample_lo();
                q[r.var.name] = std::clamp(it2->second + s * scale, r.sample_lo(), r.sample_hi());
                double fv = f(q);
                if (fv < best) {
                    best = fv;
                    p = std::move(q);
                    improved = true;
                }
            }
        }
        if (!improved) h *= 0.5;
    }
    return {best, p};
}

}  // namespace detail

inline Verdict check_submersion(const FiberedMap& F, const Domain& dom, int samples = 1000,
                                double tol = 1e-7, std::uint64_t seed = 0) {
    Verdict v;
    v.seed = seed;
    std::vector<Point> pts;
    try {
        pts = oracle::sample(dom, samples, seed);
    } catch (const oracle::sampling_error& e) {
        v.status = Status::Inconclusive;
        v.note = e.what();
        return v;
    }
    v.samples = static_cast<int>(pts.size());
    Expr tau_t = diff(F.tau_expr, F.t);
    Expr v_u = diff(F.v_expr, F.u);
    const int m = F.m(), n = F.n();
    std::vector<std::vector<Expr>> J(m, std::vector<Expr>(n, Expr::rational(0)));
    for (int k = 0; k < m; ++k)
        for (int i = 0; i < n; ++i) J[k][i] = diff(F.y_expr[k], F.x[i]);

    const double inf = std::numeric_limits<double>::infinity();
    auto f_tau = [&](const Point& p) {
        try {
            return std::fabs(eval(tau_t, p));
        } catch (const singular_eval&) {
            return inf;
        }
    };
    auto f_sigma = [&](const Point& p) {
        try {
            Eigen::MatrixXd Jm(m, n);
            for (int k = 0; k < m; ++k)
                for (int i = 0; i < n; ++i) Jm(k, i) = eval(J[k][i], p);
            return Eigen::JacobiSVD<Eigen::MatrixXd>(Jm).singularValues().minCoeff();
        } catch (const singular_eval&) {
            return inf;
        }
    };
    auto f_vu = [&](const Point& p) {
        try {
            return std::fabs(eval(v_u, p));
        } catch (const singular_eval&) {
            return inf;
        }
    };

    struct Quantity {
        double min = std::numeric_limits<double>::infinity();
        Point argmin;
        const char* label;
    };
    Quantity qs[3] = {{.label = "tau not submersive"},
                      {.label = "base map not submersive"},
                      {.label = "fiber map not submersive"}};
    for (const auto& p : pts) {
        double vals[3] = {f_tau(p), f_sigma(p), f_vu(p)};
        bool any = false;
        for (int i = 0; i < 3; ++i) {
            if (std::isinf(vals[i])) continue;
            any = true;
            if (vals[i] < qs[i].min) {
                qs[i].min = vals[i];
                qs[i].argmin = p;
            }
        }
        if (!any) ++v.singular;
    }
    // polish each minimizer: sampling alone misses isolated rank drops
    auto fns = std::array<std::function<double(const Point&)>, 3>{f_tau, f_sigma, f_vu};
    for (int i = 0; i < 3; ++i) {
        if (std::isinf(qs[i].min)) continue;
        auto [mv, mp] = detail::pattern_minimize(fns[i], qs[i].argmin, dom);
        if (mv <= tol) {
            v.status = Status::Fail;
            v.witness = mp;
            v.note = qs[i].label;
            return v;
        }
    }
    if (v.singular > samples / 5) {
        v.status = Status::Inconclusive;
        v.note = "more than 20% of samples singular";
    } else {
        v.status = Status::Pass;
    }
    return v;
}

inline Verdict fiber_constancy(const Expr& cand, const oracle::FiberPairSet& fp, int requested,
                               double tol, std::uint64_t seed) {
    Verdict v;
    v.seed = seed;
    v.samples = static_cast<int>(fp.pairs.size());
    if (static_cast<int>(fp.pairs.size()) < std::max(1, requested / 10)) {
        if (fp.discrete) {
            v.status = Status::Pass;
            v.note = "discrete fiber";
        } else {
            v.status = Status::Inconclusive;
            v.note = "insufficient fiber pairs";
        }
        return v;
    }
    double sum = 0.0;
    int ok = 0;
    for (const auto& pr : fp.pairs) {
        double a, b;
        try {
            a = eval(cand, pr.p1);
            b = eval(cand, pr.p2);
        } catch (const singular_eval&) {
            ++v.singular;
            continue;
        }
        double resid = std::fabs(a - b) / (1.0 + std::fabs(a));
        sum += resid;
        ++ok;
        v.max_residual = std::max(v.max_residual, resid);
        if (resid > tol && !v.witness) {
            v.witness = pr.p1;
            v.witness_partner = pr.p2;
        }
    }
    if (ok > 0) v.mean_residual = sum / ok;
    if (v.singular > static_cast<int>(fp.pairs.size()) / 5) {
        v.status = Status::Inconclusive;
        v.note = "more than 20% of pairs singular";
    } else if (v.witness) {
        v.status = Status::Fail;
    } else {
        v.status = Status::Pass;
    }
    return v;
}

inline Verdict fiber_constancy(const Expr& cand, const FiberedMap& F, const Domain& dom, int pairs,
                               double tol = 1e-6, std::uint64_t seed = 0) {
    auto fp = oracle::fiber_pairs(F, dom, pairs, tol, seed);
    return fiber_constancy(cand, fp, pairs, tol, seed);
}

struct MorphismReport {
    enum class Outcome { Accepted, Rejected, Inconclusive };
    Outcome outcome = Outcome::Inconclusive;
    std::vector<std::vector<Expr>> Bkl, Ckl;
    std::vector<Expr> Bk;
    Expr Q = Expr::rational(0);
    std::optional<ParabolicEquation> quotient;
    bool quotient_implicit = false;
    std::string failing_candidate;
    Verdict detail;
    double max_residual = 0.0;
    double mean_residual = 0.0;
    int samples = 0;
    int pairs = 0;
    double tol = 0.0;
    std::uint64_t seed = 0;

    bool accepted() const { return outcome == Outcome::Accepted; }
};

inline const char* outcome_name(MorphismReport::Outcome o) {
    using O = MorphismReport::Outcome;
    switch (o) {
        case O::Accepted: return "accepted";
        case O::Rejected: return "rejected";
        case O::Inconclusive: return "inconclusive";
    }
    return "?";
}

// Candidate quotient coefficients in the source variables.
struct Candidates {
    std::vector<std::vector<Expr>> Bkl, Ckl;
    std::vector<Expr> Bk;
    Expr Q = Expr::rational(0);
};

inline Candidates compute_candidates(const ParabolicEquation& eq, const FiberedMap& F) {
    const int n = F.n(), m = F.m();
    FiberDifferentialOps ops(F);
    std::vector<std::vector<Expr>> dy(m, std::vector<Expr>(n, Expr::rational(0)));
    for (int k = 0; k < m; ++k)
        for (int i = 0; i < n; ++i) dy[k][i] = diff(F.y_expr[k], F.x[i]);

    Candidates cd;
    cd.Bkl.assign(m, std::vector<Expr>(m, Expr::rational(0)));
    cd.Ckl.assign(m, std::vector<Expr>(m, Expr::rational(0)));
    cd.Bk.assign(m, Expr::rational(0));

    for (int k = 0; k < m; ++k)
        for (int l = 0; l < m; ++l) {
            Expr sb = Expr::rational(0), sc = Expr::rational(0);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    sb = sb + eq.b[i][j] * dy[k][i] * dy[l][j];
                    sc = sc + eq.c[i][j] * dy[k][i] * dy[l][j];
                }
            cd.Bkl[k][l] = sb / ops.tau_t;
            cd.Ckl[k][l] = (ops.lnUv_v * cd.Bkl[k][l] + ops.U_v * sc) / ops.tau_t;
        }
    for (int k = 0; k < m; ++k) {
        Expr s = -diff(F.y_expr[k], F.t);
        for (int i = 0; i < n; ++i) {
            s = s + eq.bvec[i] * dy[k][i];
            for (int j = 0; j < n; ++j) {
                s = s + eq.b[i][j] * diff(dy[k][i], F.x[j]) +
                    Expr::rational(2) * eq.b[i][j] * ops.lnUv_j[j] * dy[k][i] +
                    Expr::rational(2) * eq.c[i][j] * ops.U_j[j] * dy[k][i];
            }
        }
        cd.Bk[k] = s / ops.tau_t;
    }
    Expr sq = eq.q - ops.U_t;
    for (int i = 0; i < n; ++i) {
        sq = sq + eq.bvec[i] * ops.U_j[i];
        for (int j = 0; j < n; ++j)
            sq = sq + eq.b[i][j] * ops.U_ij[i][j] + eq.c[i][j] * ops.U_j[i] * ops.U_j[j];
    }
    cd.Q = sq / (ops.tau_t * ops.U_v);
    return cd;
}

// Target-chart domain inferred from the image of the source samples.
inline Domain infer_quotient_domain(const ParabolicEquation& eq, const FiberedMap& F,
                                    const CheckConfig& cfg = {}) {
    Domain qdom;
    auto mods = oracle::detail::mod_structures(F);
    auto pts = oracle::sample(eq.dom, std::max(64, cfg.samples / 4), cfg.seed);
    auto range_of = [&](const Expr& e) -> std::pair<double, double> {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& p : pts) {
            try {
                double w = eval(e, p);
                lo = std::min(lo, w);
                hi = std::max(hi, w);
            } catch (const singular_eval&) {
            }
        }
        return {lo, hi};
    };
    auto [tlo, thi] = range_of(F.tau_expr);
    qdom.ranges.push_back(VarRange::interval(F.tau, tlo, thi));
    for (int k = 0; k < F.m(); ++k) {
        bool is_mod = false;
        for (const auto& ms : mods)
            if (ms.k == k) {
                qdom.ranges.push_back(VarRange::periodic_mod(F.y[k], ms.modulus));
                is_mod = true;
            }
        if (!is_mod && F.y_expr[k].kind() == Expr::Kind::Variable) {
            const VarRange* src = eq.dom.find(F.y_expr[k].var().name);
            if (src && src->periodic) {
                qdom.ranges.push_back(VarRange::periodic_mod(F.y[k], src->modulus));
                is_mod = true;
            }
        }
        if (!is_mod) {
            auto [lo, hi] = range_of(F.y_expr[k]);
            qdom.ranges.push_back(VarRange::interval(F.y[k], lo, hi));
        }
    }
    auto [vlo, vhi] = range_of(F.v_expr);
    qdom.ranges.push_back(VarRange::interval(F.v, vlo, vhi));
    return qdom;
}

inline MorphismReport pushforward(const ParabolicEquation& eq, const FiberedMap& F,
                                  std::optional<Domain> qdom = std::nullopt,
                                  const CheckConfig& cfg = {}, int pairs = 64) {
    MorphismReport rep;
    rep.samples = cfg.samples;
    rep.pairs = pairs;
    rep.tol = cfg.tol;
    rep.seed = cfg.seed;

    Verdict sub = check_submersion(F, eq.dom, cfg.samples, 1e-7, cfg.seed);
    if (!sub.pass()) {
        rep.outcome = sub.status == Status::Fail ? MorphismReport::Outcome::Rejected
                                                 : MorphismReport::Outcome::Inconclusive;
        rep.failing_candidate = "submersion";
        rep.detail = sub;
        return rep;
    }

    Candidates cd = compute_candidates(eq, F);
    rep.Bkl = cd.Bkl;
    rep.Ckl = cd.Ckl;
    rep.Bk = cd.Bk;
    rep.Q = cd.Q;

    auto fp = oracle::fiber_pairs(F, eq.dom, pairs, cfg.tol, cfg.seed);
    const int m = F.m();
    auto run = [&](const Expr& cand, const std::string& name) -> bool {
        Verdict v = fiber_constancy(cand, fp, pairs, cfg.tol, cfg.seed);
        if (v.status == Status::Fail) {
            rep.outcome = MorphismReport::Outcome::Rejected;
            rep.failing_candidate = name;
            rep.detail = v;
            return false;
        }
        if (v.status == Status::Inconclusive && v.note != "discrete fiber") {
            rep.outcome = MorphismReport::Outcome::Inconclusive;
            rep.failing_candidate = name;
            rep.detail = v;
            return false;
        }
        rep.max_residual = std::max(rep.max_residual, v.max_residual);
        rep.mean_residual = std::max(rep.mean_residual, v.mean_residual);
        return true;
    };
    for (int k = 0; k < m; ++k)
        for (int l = k; l < m; ++l) {
            std::string idx = std::to_string(k + 1) + std::to_string(l + 1);
            if (!run(cd.Bkl[k][l], "B^" + idx)) return rep;
            if (!run(cd.Ckl[k][l], "C^" + idx)) return rep;
        }
    for (int k = 0; k < m; ++k)
        if (!run(cd.Bk[k], "B^" + std::to_string(k + 1))) return rep;
    if (!run(cd.Q, "Q")) return rep;

    rep.outcome = MorphismReport::Outcome::Accepted;

    if (!F.section) {
        rep.quotient_implicit = true;
        return rep;
    }

    // rewrite candidates through the section into the target chart
    auto sb = F.section_bindings();
    Domain qd = qdom ? *qdom : infer_quotient_domain(eq, F, cfg);
    ParabolicEquation quot = ParabolicEquation::make(F.tau, F.y, F.v, qd);
    quot.compact_x = false;
    quot.name = eq.name.empty() ? "quotient" : eq.name + "/quotient";
    for (int k = 0; k < m; ++k)
        for (int l = 0; l < m; ++l) {
            quot.b[k][l] = subst(cd.Bkl[k][l], sb);
            quot.c[k][l] = subst(cd.Ckl[k][l], sb);
        }
    for (int k = 0; k < m; ++k) quot.bvec[k] = subst(cd.Bk[k], sb);
    quot.q = subst(cd.Q, sb);

    // cross-validate the section: quotient coefficients at image points must
    // reproduce the candidates
    auto pts = oracle::sample(eq.dom, std::min(cfg.samples, 400), cfg.seed + 777);
    double xmax = 0.0;
    int checked = 0, singular = 0;
    auto cross = [&](const Expr& qe, const Expr& cand) {
        for (const auto& p : pts) {
            try {
                Point img = F.image(p);
                double a = eval(qe, img);
                double b = eval(cand, p);
                xmax = std::max(xmax, std::fabs(a - b) / (1.0 + std::fabs(a) + std::fabs(b)));
                ++checked;
            } catch (const singular_eval&) {
                ++singular;
            }
        }
    };
    for (int k = 0; k < m; ++k)
        for (int l = k; l < m; ++l) {
            cross(quot.b[k][l], cd.Bkl[k][l]);
            cross(quot.c[k][l], cd.Ckl[k][l]);
        }
    for (int k = 0; k < m; ++k) cross(quot.bvec[k], cd.Bk[k]);
    cross(quot.q, cd.Q);
    if (checked == 0 || singular > checked) {
        rep.outcome = MorphismReport::Outcome::Inconclusive;
        rep.detail.note = "section cross-validation inconclusive";
        return rep;
    }
    if (xmax > cfg.tol) {
        rep.outcome = MorphismReport::Outcome::Inconclusive;
        rep.detail.note = "section cross-validation failed";
        rep.detail.max_residual = xmax;
        return rep;
    }
    rep.max_residual = std::max(rep.max_residual, xmax);
    rep.quotient = std::move(quot);
    return rep;
}

// Residuals of the defining system with the quotient coefficients pulled back
// through the map; all should vanish on an accepted morphism.
inline std::vector<Expr> quotient_residuals(const ParabolicEquation& eq, const FiberedMap& F,
                                            const ParabolicEquation& quot) {
    FiberDifferentialOps ops(F);
    const int n = F.n(), m = F.m();
    auto fb = F.forward_bindings();
    std::vector<std::vector<Expr>> dy(m, std::vector<Expr>(n, Expr::rational(0)));
    for (int k = 0; k < m; ++k)
        for (int i = 0; i < n; ++i) dy[k][i] = diff(F.y_expr[k], F.x[i]);
    std::vector<Expr> res;
    for (int k = 0; k < m; ++k)
        for (int l = k; l < m; ++l) {
            Expr sb = Expr::rational(0), sc = Expr::rational(0);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    sb = sb + eq.b[i][j] * dy[k][i] * dy[l][j];
                    sc = sc + eq.c[i][j] * dy[k][i] * dy[l][j];
                }
            Expr Bq = subst(quot.b[k][l], fb), Cq = subst(quot.c[k][l], fb);
            res.push_back(ops.tau_t * Bq - sb);
            res.push_back(ops.tau_t * Cq - ops.lnUv_v * Bq - ops.U_v * sc);
        }
    for (int k = 0; k < m; ++k) {
        Expr s = -diff(F.y_expr[k], F.t);
        for (int i = 0; i < n; ++i) {
            s = s + eq.bvec[i] * dy[k][i];
            for (int j = 0; j < n; ++j)
                s = s + eq.b[i][j] * diff(dy[k][i], F.x[j]) +
                    Expr::rational(2) * eq.b[i][j] * ops.lnUv_j[j] * dy[k][i] +
                    Expr::rational(2) * eq.c[i][j] * ops.U_j[j] * dy[k][i];
        }
        res.push_back(ops.tau_t * subst(quot.bvec[k], fb) - s);
    }
    Expr sq = eq.q - ops.U_t;
    for (int i = 0; i < n; ++i) {
        sq = sq + eq.bvec[i] * ops.U_j[i];
        for (int j = 0; j < n; ++j)
            sq = sq + eq.b[i][j] * ops.U_ij[i][j] + eq.c[i][j] * ops.U_j[i] * ops.U_j[j];
    }
    res.push_back(ops.tau_t * subst(quot.q, fb) - sq / ops.U_v);
    return res;
}

inline FiberedMap compose(const FiberedMap& F, const FiberedMap& G) {
    if (G.n() != F.m() || G.t.name != F.tau.name || G.u.name != F.v.name)
        throw std::invalid_argument("composition mismatch: source of second map must be target of first");
    for (int k = 0; k < F.m(); ++k)
        if (G.x[k].name != F.y[k].name)
            throw std::invalid_argument("composition mismatch in base variables");
    auto fb = F.forward_bindings();
    std::vector<Expr> ys;
    for (const auto& ge : G.y_expr) ys.push_back(subst(ge, fb));
    FiberedMap H = FiberedMap::make(F.t, F.x, F.u, G.tau, G.y, G.v, subst(G.tau_expr, fb),
                                    std::move(ys), subst(G.v_expr, fb));
    if (shape_rank(H.shape) < std::max(shape_rank(F.shape), shape_rank(G.shape)))
        H.shape = shape_rank(F.shape) > shape_rank(G.shape) ? F.shape : G.shape;
    if (F.section && G.section) {
        auto gs = G.section_bindings();
        std::vector<Expr> sec;
        sec.push_back(subst((*F.section)[0], gs));
        for (int i = 0; i < F.n(); ++i) sec.push_back(subst((*F.section)[1 + i], gs));
        sec.push_back(subst((*F.section)[1 + F.n()], gs));
        H.section = std::move(sec);
    }
    return H;
}

struct IsoResult {
    bool is_iso = false;
    Verdict evidence;
};

inline IsoResult is_isomorphism(const FiberedMap& F, const Domain& dom, const Domain& target_dom,
                                const CheckConfig& cfg = {}) {
    IsoResult out;
    out.evidence.seed = cfg.seed;
    if (F.m() != F.n()) {
        out.evidence.status = Status::Fail;
        out.evidence.note = "dimension mismatch";
        return out;
    }
    Verdict sub = check_submersion(F, dom, cfg.samples, 1e-7, cfg.seed);
    if (!sub.pass()) {
        out.evidence = sub;
        return out;
    }
    auto fp = oracle::fiber_pairs(F, dom, 16, cfg.tol, cfg.seed);
    if (!fp.pairs.empty()) {
        out.evidence.status = Status::Fail;
        out.evidence.note = "not injective";
        out.evidence.witness = fp.pairs[0].p1;
        out.evidence.witness_partner = fp.pairs[0].p2;
        return out;
    }
    if (!fp.discrete) {
        out.evidence.status = Status::Inconclusive;
        out.evidence.note = "injectivity scan inconclusive";
        return out;
    }
    if (!F.section) {
        // construct a section pointwise to certify surjectivity near samples
        std::vector<Point> tpts;
        try {
            tpts = oracle::sample(target_dom, 16, cfg.seed + 5);
        } catch (const oracle::sampling_error&) {
            out.evidence.status = Status::Inconclusive;
            out.evidence.note = "target domain unsampleable";
            return out;
        }
        int hit = 0;
        for (const auto& q : tpts)
            if (oracle::newton_invert(F, q, dom, cfg.seed + 9)) ++hit;
        if (hit < static_cast<int>(tpts.size())) {
            out.evidence.status = Status::Fail;
            out.evidence.note = "no preimage for some target samples";
            return out;
        }
    }
    out.is_iso = true;
    out.evidence.status = Status::Pass;
    return out;
}

}  // namespace morphism
}  // namespace parafact
