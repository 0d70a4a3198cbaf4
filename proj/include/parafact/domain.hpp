#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "parafact/expr.hpp"

namespace parafact {

// Sampling window substituted for unbounded interval endpoints.
inline constexpr double kUnboundedWindow = 10.0;

// One coordinate range: an interval (possibly unbounded) or a periodic
// identification x ~ x + modulus, sampled in [0, modulus).
struct VarRange {
    Var var;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    bool periodic = false;
    double modulus = 0.0;

    static VarRange interval(Var v, double lo, double hi) {
        VarRange r;
        r.var = std::move(v);
        r.lo = lo;
        r.hi = hi;
        return r;
    }
    static VarRange whole_line(Var v) { return interval(std::move(v), -std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()); }
    static VarRange periodic_mod(Var v, double m) {
        VarRange r;
        r.var = std::move(v);
        r.periodic = true;
        r.modulus = m;
        r.lo = 0.0;
        r.hi = m;
        return r;
    }

    // Effective sampling bounds (fundamental domain, unbounded ends clipped).
    double sample_lo() const {
        if (periodic) return 0.0;
        return std::isfinite(lo) ? lo : -kUnboundedWindow;
    }
    double sample_hi() const {
        if (periodic) return modulus;
        return std::isfinite(hi) ? hi : kUnboundedWindow;
    }

    bool contains(double x) const {
        if (periodic) return true;
        return x >= lo && x <= hi;
    }
};

// Cartesian box of ranges plus optional strict-positivity predicates.
struct Domain {
    std::vector<VarRange> ranges;
    std::vector<Expr> predicates;  // each required > 0 at sampled points

    const VarRange* find(const std::string& name) const {
        for (const auto& r : ranges)
            if (r.var.name == name) return &r;
        return nullptr;
    }

    bool satisfied(const Point& p) const {
        for (const Expr& pred : predicates) {
            try {
                if (eval(pred, p) <= 0) return false;
            } catch (const singular_eval&) {
                return false;
            }
        }
        return true;
    }
};

}  // namespace parafact
