#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "parafact/domain.hpp"
#include "parafact/expr.hpp"

namespace parafact {

enum class Status { Pass, Fail, Inconclusive };

inline const char* status_name(Status s) {
    switch (s) {
        case Status::Pass: return "pass";
        case Status::Fail: return "fail";
        case Status::Inconclusive: return "inconclusive";
    }
    return "?";
}

struct Verdict {
    Status status = Status::Inconclusive;
    std::optional<Point> witness;          // reproducible from the seed
    std::optional<Point> witness_partner;  // second point, for pairwise checks
    double max_residual = 0.0;
    double mean_residual = 0.0;
    int samples = 0;
    int singular = 0;
    std::uint64_t seed = 0;
    std::string note;

    bool pass() const { return status == Status::Pass; }
    explicit operator bool() const { return pass(); }
};

namespace oracle {

// ---- low-discrepancy sampling ----

inline double halton(std::uint64_t index, int base) {
    double f = 1.0, r = 0.0;
    while (index > 0) {
        f /= base;
        r += f * (index % base);
        index /= base;
    }
    return r;
}

inline int nth_prime(int k) {
    static const int primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
    if (k < 16) return primes[k];
    throw std::invalid_argument("sampling dimension too large");
}

struct sampling_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Deterministic in-domain points: Halton sequence offset by seed, rejection
// sampling against the domain predicates (budget 100 n trials).
inline std::vector<Point> sample(const Domain& dom, int n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
    if (dom.ranges.empty()) throw sampling_error("sample: empty domain");
    for (const auto& r : dom.ranges)
        if (!r.periodic && !(r.sample_lo() < r.sample_hi()))
            throw sampling_error("sample: empty interval for " + r.var.name);

    std::vector<Point> out;
    out.reserve(n);
    std::uint64_t index = 1 + (seed % 0x7fffffffull) * 4099;
    long budget = 100L * n;
    while (static_cast<int>(out.size()) < n && budget-- > 0) {
        Point p;
        for (std::size_t d = 0; d < dom.ranges.size(); ++d) {
            const auto& r = dom.ranges[d];
            double u = halton(index, nth_prime(static_cast<int>(d)));
            double lo = r.sample_lo(), hi = r.sample_hi();
            // keep away from open endpoints
            p[r.var.name] = lo + (0.01 + 0.98 * u) * (hi - lo);
        }
        ++index;
        if (dom.satisfied(p)) out.push_back(std::move(p));
    }
    if (static_cast<int>(out.size()) < n)
        throw sampling_error("sample: rejection budget exhausted");
    return out;
}

// ---- probabilistic identity testing ----

inline Verdict prob_equal(const Expr& e1, const Expr& e2, const Domain& dom, int samples = 1000,
                          double tol = 1e-6, std::uint64_t seed = 0) {
    Verdict v;
    v.seed = seed;
    v.samples = samples;
    auto pts = sample(dom, samples, seed);
    double sum = 0.0;
    int ok = 0;
    for (const auto& p : pts) {
        double a, b;
        try {
            a = eval(e1, p);
            b = eval(e2, p);
        } catch (const singular_eval&) {
            ++v.singular;
            continue;
        }
        double resid = std::fabs(a - b) / (1.0 + std::fabs(a) + std::fabs(b));
        sum += resid;
        ++ok;
        v.max_residual = std::max(v.max_residual, resid);
        if (resid > tol && !v.witness) {
            v.witness = p;
        }
    }
    if (ok > 0) v.mean_residual = sum / ok;
    if (v.singular > samples / 5) {
        v.status = Status::Inconclusive;
        v.note = "more than 20% of samples singular";
    } else if (v.witness) {
        v.status = Status::Fail;
    } else {
        v.status = Status::Pass;
    }
    return v;
}

inline Verdict prob_zero(const Expr& e, const Domain& dom, int samples = 1000, double tol = 1e-6,
                         std::uint64_t seed = 0) {
    return prob_equal(e, Expr::rational(0), dom, samples, tol, seed);
}

// ---- Newton root finding ----

// Damped Newton for F(p) = target over the listed unknowns; other coordinates
// of `start` are held fixed. Jacobian by central differences, Eigen least
// squares step, halving line search.
inline std::optional<Point> newton_solve(const std::vector<Expr>& eqs, const std::vector<Var>& unknowns,
                                         const std::vector<double>& target, Point start,
                                         int max_iter = 100, double tol = 1e-10) {
    const int m = static_cast<int>(eqs.size());
    const int n = static_cast<int>(unknowns.size());
    auto residual = [&](const Point& p, Eigen::VectorXd& r) -> bool {
        for (int i = 0; i < m; ++i) {
            try {
                r(i) = eval(eqs[i], p) - target[i];
            } catch (const singular_eval&) {
                return false;
            } catch (const unbound_variable&) {
                return false;
            }
        }
        return true;
    };
    Eigen::VectorXd r(m), rn(m);
    if (!residual(start, r)) return std::nullopt;
    for (int iter = 0; iter < max_iter; ++iter) {
        if (r.norm() < tol) return start;
        Eigen::MatrixXd J(m, n);
        for (int j = 0; j < n; ++j) {
            double x = start[unknowns[j].name];
            double h = 1e-7 * (1.0 + std::fabs(x));
            Point pp = start, pm = start;
            pp[unknowns[j].name] = x + h;
            pm[unknowns[j].name] = x - h;
            Eigen::VectorXd fp(m), fm(m);
            if (!residual(pp, fp) || !residual(pm, fm)) return std::nullopt;
            J.col(j) = (fp - fm) / (2 * h);
        }
        Eigen::VectorXd step = J.completeOrthogonalDecomposition().solve(r);
        double damp = 1.0;
        bool improved = false;
        for (int back = 0; back < 30; ++back) {
            Point trial = start;
            for (int j = 0; j < n; ++j) trial[unknowns[j].name] -= damp * step(j);
            if (residual(trial, rn) && rn.norm() < r.norm()) {
                start = trial;
                r = rn;
                improved = true;
                break;
            }
            damp *= 0.5;
        }
        if (!improved) return std::nullopt;
    }
    return r.norm() < tol ? std::optional<Point>(start) : std::nullopt;
}

// ---- ODE flow ----

struct FlowResult {
    std::vector<double> x;
    double error_estimate = 0.0;
    bool left_domain = false;
};

// Fixed-step RK4 for dx/ds = field(s, x) with a halved-step Richardson
// error estimate. `svar` names the flow parameter inside the field exprs.
inline FlowResult integrate_flow(const std::vector<Expr>& field, const Var& svar,
                                 const std::vector<Var>& xvars, double s0, double s1,
                                 std::vector<double> x0, int steps = 256,
                                 const Domain* chart = nullptr) {
    const int n = static_cast<int>(field.size());
    auto rhs = [&](double s, const std::vector<double>& x, std::vector<double>& dx) {
        Point p;
        p[svar.name] = s;
        for (int i = 0; i < n; ++i) p[xvars[i].name] = x[i];
        for (int i = 0; i < n; ++i) dx[i] = eval(field[i], p);
    };
    auto run = [&](int nsteps, bool* left) {
        std::vector<double> x = x0, k1(n), k2(n), k3(n), k4(n), tmp(n);
        double h = (s1 - s0) / nsteps;
        for (int step = 0; step < nsteps; ++step) {
            double s = s0 + step * h;
            rhs(s, x, k1);
            for (int i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
            rhs(s + 0.5 * h, tmp, k2);
            for (int i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
            rhs(s + 0.5 * h, tmp, k3);
            for (int i = 0; i < n; ++i) tmp[i] = x[i] + h * k3[i];
            rhs(s + h, tmp, k4);
            for (int i = 0; i < n; ++i) x[i] += h / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
            if (chart && left) {
                Point p;
                for (int i = 0; i < n; ++i) p[xvars[i].name] = x[i];
                for (const auto& r : chart->ranges) {
                    auto it = p.find(r.var.name);
                    if (it != p.end() && !r.contains(it->second)) *left = true;
                }
            }
        }
        return x;
    };
    FlowResult res;
    bool left = false;
    auto coarse = run(steps, nullptr);
    res.x = run(2 * steps, &left);
    res.left_domain = left;
    double err = 0.0;
    for (int i = 0; i < n; ++i) err = std::max(err, std::fabs(coarse[i] - res.x[i]) / 15.0);
    res.error_estimate = err;
    return res;
}

}  // namespace oracle
}  // namespace parafact
