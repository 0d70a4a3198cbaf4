#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "parafact/domain.hpp"
#include "parafact/expr.hpp"
#include "parafact/oracle.hpp"

namespace parafact {

struct CheckConfig {
    int samples = 1000;
    double tol = 1e-6;
    std::uint64_t seed = 0;

    CheckConfig with_seed(std::uint64_t s) const {
        CheckConfig c = *this;
        c.seed = s;
        return c;
    }
};

// u_t = sum b^ij u_ij + sum c^ij u_i u_j + sum b^i u_i + q on a chart
// T x X x Omega.
struct ParabolicEquation {
    int n = 1;
    Var t;
    std::vector<Var> x;
    Var u;
    Domain dom;  // ranges for t, x..., u
    std::vector<std::vector<Expr>> b;  // n x n, symmetric, positive definite
    std::vector<std::vector<Expr>> c;  // n x n, symmetric
    std::vector<Expr> bvec;            // n
    Expr q;
    bool compact_x = false;
    std::string name;

    static ParabolicEquation make(Var t, std::vector<Var> x, Var u, Domain dom) {
        ParabolicEquation eq;
        eq.n = static_cast<int>(x.size());
        eq.t = std::move(t);
        eq.x = std::move(x);
        eq.u = std::move(u);
        eq.dom = std::move(dom);
        eq.b.assign(eq.n, std::vector<Expr>(eq.n, Expr::rational(0)));
        eq.c.assign(eq.n, std::vector<Expr>(eq.n, Expr::rational(0)));
        eq.bvec.assign(eq.n, Expr::rational(0));
        eq.q = Expr::rational(0);
        return eq;
    }

    double omega_mid() const {
        const VarRange* r = dom.find(u.name);
        return r ? 0.5 * (r->sample_lo() + r->sample_hi()) : 0.0;
    }

    // All free variables of the coefficients.
    std::vector<Var> chart_vars() const {
        std::vector<Var> vs{t};
        vs.insert(vs.end(), x.begin(), x.end());
        vs.push_back(u);
        return vs;
    }
};

// b^ij = a(t,x,u) bbar^ij(t,x) with a(.,.,u0) = 1; optional drift split
// b^i = a bbar^i(t,x) + xi^i(t,x).
struct FactoredForm {
    Expr a = Expr::rational(1);
    std::vector<std::vector<Expr>> bbar;
    std::optional<Expr> lambda;
    std::optional<std::vector<Expr>> bibar;
    std::optional<std::vector<Expr>> xi;
    bool drift_split_ambiguous = false;
    double u0 = 0.0;
};

struct ClassLabel {
    std::string name;
    std::optional<Expr> param;

    std::string display() const {
        if (param) return name + "(" + to_string(*param) + ")";
        return name;
    }
    friend bool operator<(const ClassLabel& a, const ClassLabel& b) { return a.name < b.name; }
};

struct ClassifyResult {
    std::set<std::string> labels;
    std::optional<Expr> a_param;  // the a(u) of the *_a(a) family labels
    FactoredForm factored;
    std::map<std::string, Verdict> detail;  // verdict per tested label

    bool has(const std::string& l) const { return labels.count(l) > 0; }
};

namespace equation {

// ---- validation ----

inline Verdict validate(const ParabolicEquation& eq, const CheckConfig& cfg = {}) {
    Verdict v;
    v.seed = cfg.seed;
    for (int i = 0; i < eq.n; ++i)
        for (int j = 0; j < i; ++j) {
            if (eq.b[i][j] != eq.b[j][i]) {
                v.status = Status::Fail;
                v.note = "b^" + std::to_string(i + 1) + std::to_string(j + 1) + " not structurally symmetric";
                return v;
            }
            if (eq.c[i][j] != eq.c[j][i]) {
                v.status = Status::Fail;
                v.note = "c^" + std::to_string(i + 1) + std::to_string(j + 1) + " not structurally symmetric";
                return v;
            }
        }
    std::vector<Point> pts;
    try {
        pts = oracle::sample(eq.dom, cfg.samples, cfg.seed);
    } catch (const oracle::sampling_error& e) {
        v.status = Status::Inconclusive;
        v.note = e.what();
        return v;
    }
    v.samples = static_cast<int>(pts.size());
    double min_eig = std::numeric_limits<double>::infinity();
    for (const auto& p : pts) {
        Eigen::MatrixXd B(eq.n, eq.n);
        bool singular = false;
        for (int i = 0; i < eq.n && !singular; ++i)
            for (int j = 0; j < eq.n; ++j) {
                try {
                    B(i, j) = eval(eq.b[i][j], p);
                } catch (const singular_eval&) {
                    singular = true;
                    break;
                }
            }
        if (singular) {
            ++v.singular;
            continue;
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B);
        double lam = es.eigenvalues().minCoeff();
        min_eig = std::min(min_eig, lam);
        if (lam <= cfg.tol && !v.witness) v.witness = p;
    }
    if (v.singular > cfg.samples / 5) {
        v.status = Status::Inconclusive;
        v.note = "more than 20% of samples singular";
    } else if (v.witness) {
        v.status = Status::Fail;
        v.note = "b not positive definite (min eigenvalue " + std::to_string(min_eig) + ")";
    } else {
        v.status = Status::Pass;
    }
    return v;
}

// ---- factorizations ----

namespace detail {

inline Expr at_fiber(const Expr& e, const Var& u, double u0) {
    double r = std::round(u0);
    Expr c = (r == u0 && std::fabs(u0) < 1e15) ? Expr::rational(static_cast<std::int64_t>(r)) : Expr::real(u0);
    return subst(e, u, c);
}

inline bool indep_of(const Expr& e, const Var& w, const ParabolicEquation& eq, const CheckConfig& cfg,
                     Verdict* out = nullptr) {
    Verdict v = oracle::prob_zero(diff(e, w), eq.dom, cfg.samples, cfg.tol, cfg.seed);
    if (out) *out = v;
    return v.pass();
}

// mid-chart point for producing parameter expressions
inline std::map<std::string, Expr> base_midpoint_bindings(const ParabolicEquation& eq) {
    std::map<std::string, Expr> m;
    auto mid = [&](const Var& v) {
        const VarRange* r = eq.dom.find(v.name);
        double x = r ? 0.5 * (r->sample_lo() + r->sample_hi()) : 0.0;
        double rr = std::round(x);
        return (rr == x) ? Expr::rational(static_cast<std::int64_t>(rr)) : Expr::real(x);
    };
    m[eq.t.name] = mid(eq.t);
    for (const auto& xv : eq.x) m[xv.name] = mid(xv);
    return m;
}

}  // namespace detail

// c^ij = lambda b^ij test; returns lambda = c^11 / b^11 on success.
inline std::optional<Expr> factor_pe1(const ParabolicEquation& eq, const CheckConfig& cfg,
                                      Verdict* out = nullptr) {
    bool all_zero = true;
    for (int i = 0; i < eq.n && all_zero; ++i)
        for (int j = 0; j < eq.n; ++j)
            if (!eq.c[i][j].is_zero()) {
                all_zero = false;
                break;
            }
    if (all_zero) {
        if (out) {
            out->status = Status::Pass;
            out->seed = cfg.seed;
        }
        return Expr::rational(0);
    }
    std::uint64_t s = cfg.seed;
    for (int i = 0; i < eq.n; ++i)
        for (int j = i; j < eq.n; ++j)
            for (int k = 0; k < eq.n; ++k)
                for (int l = k; l < eq.n; ++l) {
                    Verdict v = oracle::prob_equal(eq.c[i][j] * eq.b[k][l], eq.c[k][l] * eq.b[i][j],
                                                   eq.dom, cfg.samples, cfg.tol, ++s);
                    if (!v.pass()) {
                        if (out) *out = v;
                        return std::nullopt;
                    }
                }
    if (out) {
        out->status = Status::Pass;
        out->seed = cfg.seed;
    }
    return eq.c[0][0] / eq.b[0][0];
}

// b^ij = a(t,x,u) bbar^ij(t,x) with the gauge a(t,x,u0) = 1.
inline std::optional<FactoredForm> factor_pe2(const ParabolicEquation& eq, double u0,
                                              const CheckConfig& cfg, Verdict* out = nullptr) {
    FactoredForm f;
    f.u0 = u0;
    Expr b11_at = detail::at_fiber(eq.b[0][0], eq.u, u0);
    f.a = eq.b[0][0] / b11_at;
    f.bbar.assign(eq.n, std::vector<Expr>(eq.n, Expr::rational(0)));
    std::uint64_t s = cfg.seed;
    for (int i = 0; i < eq.n; ++i)
        for (int j = 0; j < eq.n; ++j) {
            f.bbar[i][j] = detail::at_fiber(eq.b[i][j], eq.u, u0);
            Verdict v = oracle::prob_equal(f.a * f.bbar[i][j], eq.b[i][j], eq.dom, cfg.samples,
                                           cfg.tol, ++s);
            if (!v.pass()) {
                if (out) {
                    *out = v;
                    out->note = "a*bbar^" + std::to_string(i + 1) + std::to_string(j + 1) +
                                " does not reproduce b";
                }
                return std::nullopt;
            }
        }
    if (out) {
        out->status = Status::Pass;
        out->seed = cfg.seed;
    }
    return f;
}

// Drift split b^i = a bbar^i(t,x) + xi^i(t,x), given the PE2 factorization.
// When a is fiber-independent the split is not unique: reported ambiguous,
// defaulting to xi = b^i, bbar^i = 0 (valid only if b^i is fiber-independent).
inline Status factor_qpe2(const ParabolicEquation& eq, FactoredForm& f, const CheckConfig& cfg,
                          Verdict* out = nullptr) {
    const Var& u = eq.u;
    Expr da = diff(f.a, u);
    Verdict a_const = oracle::prob_zero(da, eq.dom, cfg.samples, cfg.tol, cfg.seed);
    std::vector<Expr> bibar(eq.n, Expr::rational(0)), xi(eq.n, Expr::rational(0));
    std::uint64_t s = cfg.seed + 1;
    if (a_const.pass()) {
        // ambiguous decomposition; requires fiber-independent b^i
        for (int i = 0; i < eq.n; ++i) {
            Verdict v = oracle::prob_zero(diff(eq.bvec[i], u), eq.dom, cfg.samples, cfg.tol, ++s);
            if (!v.pass()) {
                if (out) {
                    *out = v;
                    out->note = "b^i fiber-dependent while a is fiber-independent";
                }
                return Status::Fail;
            }
            xi[i] = detail::at_fiber(eq.bvec[i], u, f.u0);
        }
        f.bibar = bibar;
        f.xi = xi;
        f.drift_split_ambiguous = true;
        if (out) {
            out->status = Status::Inconclusive;
            out->note = "fiber-independent diffusion factor: split not unique, defaulted to xi = b^i";
        }
        return Status::Inconclusive;
    }
    for (int i = 0; i < eq.n; ++i) {
        Expr ratio = diff(eq.bvec[i], u) / da;
        Verdict v1 = oracle::prob_zero(diff(ratio, u), eq.dom, cfg.samples, cfg.tol, ++s);
        if (!v1.pass()) {
            if (out) {
                *out = v1;
                out->note = "d_u b^" + std::to_string(i + 1) + " / d_u a depends on the fiber";
            }
            return Status::Fail;
        }
        bibar[i] = detail::at_fiber(ratio, u, f.u0);
        Expr xi_i = eq.bvec[i] - f.a * bibar[i];
        Verdict v2 = oracle::prob_zero(diff(xi_i, u), eq.dom, cfg.samples, cfg.tol, ++s);
        if (!v2.pass()) {
            if (out) {
                *out = v2;
                out->note = "xi^" + std::to_string(i + 1) + " depends on the fiber";
            }
            return Status::Fail;
        }
        xi[i] = detail::at_fiber(xi_i, u, f.u0);
    }
    f.bibar = bibar;
    f.xi = xi;
    if (out) {
        out->status = Status::Pass;
        out->seed = cfg.seed;
    }
    return Status::Pass;
}

// ---- the A_nc condition: a genuinely non-constant in u over every base point ----

inline bool a_nonconstant_everywhere(const Expr& a, const ParabolicEquation& eq,
                                     const CheckConfig& cfg) {
    Domain base;
    for (const auto& r : eq.dom.ranges)
        if (r.var.name != eq.u.name) base.ranges.push_back(r);
    base.predicates = eq.dom.predicates;
    const VarRange* ur = eq.dom.find(eq.u.name);
    if (!ur) return false;
    double lo = ur->sample_lo(), hi = ur->sample_hi();
    int base_samples = std::max(16, cfg.samples / 16);
    std::vector<Point> pts;
    try {
        pts = oracle::sample(base, base_samples, cfg.seed);
    } catch (const oracle::sampling_error&) {
        return false;
    }
    for (auto p : pts) {
        double lo_v = std::numeric_limits<double>::infinity();
        double hi_v = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < 24; ++k) {
            p[eq.u.name] = lo + (k + 0.5) / 24.0 * (hi - lo);
            try {
                double v = eval(a, p);
                lo_v = std::min(lo_v, v);
                hi_v = std::max(hi_v, v);
            } catch (const singular_eval&) {
            }
        }
        if (!(hi_v - lo_v > cfg.tol * (1.0 + std::fabs(hi_v)))) return false;
    }
    return true;
}

// ---- classification ----

inline ClassifyResult classify(const ParabolicEquation& eq, const CheckConfig& cfg = {},
                               std::optional<double> u0_opt = std::nullopt) {
    ClassifyResult res;
    Verdict val = validate(eq, cfg);
    res.detail["PE"] = val;
    if (!val.pass()) return res;
    res.labels.insert("PE");

    const Var& u = eq.u;
    const Var& t = eq.t;
    double u0 = u0_opt.value_or(eq.omega_mid());
    std::uint64_t s = cfg.seed + 100;

    // PE1
    Verdict v_pe1;
    auto lambda = factor_pe1(eq, cfg.with_seed(++s), &v_pe1);
    res.detail["PE1"] = v_pe1;
    if (lambda) res.labels.insert("PE1");

    // PE2
    Verdict v_pe2;
    auto factored = factor_pe2(eq, u0, cfg.with_seed(++s), &v_pe2);
    res.detail["PE2"] = v_pe2;
    if (factored) {
        res.labels.insert("PE2");
        res.factored = *factored;
        if (lambda) res.factored.lambda = lambda;
    }

    if (lambda && factored) res.labels.insert("PE3");

    // PE4: b fiber-independent
    bool pe4 = true;
    for (int i = 0; i < eq.n && pe4; ++i)
        for (int j = i; j < eq.n; ++j) {
            Verdict v;
            if (!detail::indep_of(eq.b[i][j], u, eq, cfg.with_seed(++s), &v)) {
                res.detail["PE4"] = v;
                pe4 = false;
                break;
            }
        }
    if (pe4) res.labels.insert("PE4");
    if (pe4 && res.has("PE3")) res.labels.insert("PE5");

    // QPE: c == 0
    bool qpe = true;
    for (int i = 0; i < eq.n && qpe; ++i)
        for (int j = i; j < eq.n; ++j) {
            Verdict v = oracle::prob_zero(eq.c[i][j], eq.dom, cfg.samples, cfg.tol, ++s);
            if (!v.pass()) {
                res.detail["QPE"] = v;
                qpe = false;
                break;
            }
        }
    if (qpe) {
        res.labels.insert("QPE");
        if (eq.compact_x) res.labels.insert("QPE_c");
        if (res.has("PE2")) res.labels.insert("QPE'");
        if (pe4) res.labels.insert("QPE'_1");
    }

    bool anc = false;
    if (res.has("QPE'")) {
        anc = a_nonconstant_everywhere(res.factored.a, eq, cfg.with_seed(++s));
        if (anc) res.labels.insert("QPE'_n");
    }

    // QPE'' and its refinements
    if (res.has("QPE'")) {
        Verdict v_split;
        Status split = factor_qpe2(eq, res.factored, cfg.with_seed(++s), &v_split);
        res.detail["QPE''"] = v_split;
        if (split != Status::Fail) {
            res.labels.insert("QPE''");
            res.labels.insert("SQPE");
            if (anc) res.labels.insert("SQPE_n");

            // with a fiber-independent the reported split defaults to xi = b^i,
            // but a split with xi = 0 (bbar^i := b^i / a) always exists there
            bool xi_zero = res.factored.drift_split_ambiguous;
            if (!xi_zero) {
                xi_zero = true;
                for (int i = 0; i < eq.n; ++i)
                    if (!oracle::prob_zero((*res.factored.xi)[i], eq.dom, cfg.samples, cfg.tol, ++s).pass())
                        xi_zero = false;
            }
            if (xi_zero) {
                res.labels.insert("QPE''_0");
                res.labels.insert("SQPE_0");
            }

            // a = a(u) only
            bool a_fiber_only = detail::indep_of(res.factored.a, t, eq, cfg.with_seed(++s));
            for (const auto& xv : eq.x)
                a_fiber_only = a_fiber_only && detail::indep_of(res.factored.a, xv, eq, cfg.with_seed(++s));
            if (a_fiber_only) {
                auto mid = detail::base_midpoint_bindings(eq);
                // report the unnormalized diffusion profile b^11 at a base midpoint
                res.a_param = subst(eq.b[0][0], mid);
                res.labels.insert("QPE''_a");
                res.labels.insert("SQPE_a");
            }

            // a constant in u and b^i fiber-independent -> linear-diffusion family
            bool a_const = detail::indep_of(res.factored.a, u, eq, cfg.with_seed(++s));
            if (a_const && pe4) {
                bool bi_const = true;
                for (int i = 0; i < eq.n; ++i)
                    bi_const = bi_const && detail::indep_of(eq.bvec[i], u, eq, cfg.with_seed(++s));
                if (bi_const) {
                    res.labels.insert("QPE''_1");
                    res.labels.insert("SQPE_1");
                    if (oracle::prob_zero(diff(diff(eq.q, u), u), eq.dom, cfg.samples, cfg.tol, ++s).pass())
                        res.labels.insert("QPE''_1q");
                }
            }

            // bbar^kl / bbar^11 time-independent (up to the scale gauge)
            bool b_shape_static = true;
            for (int i = 0; i < eq.n && b_shape_static; ++i)
                for (int j = i; j < eq.n; ++j) {
                    Expr ratio = res.factored.bbar[i][j] / res.factored.bbar[0][0];
                    if (!detail::indep_of(ratio, t, eq, cfg.with_seed(++s), nullptr)) {
                        b_shape_static = false;
                        break;
                    }
                }
            if (b_shape_static) res.labels.insert("SQPE_b");

            // autonomous family: every coefficient time-independent
            bool autonomous = detail::indep_of(eq.q, t, eq, cfg.with_seed(++s));
            for (int i = 0; i < eq.n && autonomous; ++i) {
                autonomous = autonomous && detail::indep_of(eq.bvec[i], t, eq, cfg.with_seed(++s));
                for (int j = i; j < eq.n && autonomous; ++j)
                    autonomous = autonomous && detail::indep_of(eq.b[i][j], t, eq, cfg.with_seed(++s));
            }
            if (autonomous) {
                res.labels.insert("AQPE");
                res.labels.insert("EPE");
                if (res.has("QPE''_0")) {
                    res.labels.insert("AQPE_0");
                    res.labels.insert("EPE_0");
                }
                if (anc) {
                    res.labels.insert("AQPE_n");
                    res.labels.insert("EPE_n");
                }
                if (res.has("QPE''_a")) {
                    res.labels.insert("AQPE_a");
                    res.labels.insert("EPE_a");
                }
                if (res.has("QPE''_1")) {
                    res.labels.insert("AQPE_1");
                    res.labels.insert("EPE_1");
                }
            }
        }
    }
    return res;
}

}  // namespace equation
}  // namespace parafact
