#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "parafact/domain.hpp"
#include "parafact/expr.hpp"
#include "parafact/parser.hpp"

namespace parafact::testing {

inline Var tvar() { return Var{"t", VarRole::Time}; }
inline Var xvar(int i = 1) { return Var{"x" + std::to_string(i), VarRole::Base, i}; }
inline Var xplain() { return Var{"x", VarRole::Base, 1}; }
inline Var uvar() { return Var{"u", VarRole::Fiber}; }
inline Var yvar(int k = 1) { return Var{"y", VarRole::QuotientBase, k}; }
inline Var vvar() { return Var{"v", VarRole::QuotientFiber}; }
inline Var tauvar() { return Var{"tau", VarRole::QuotientTime}; }

// H(u) = cosh(u), with exact partials to order 4.
inline OpaqueRef cosh_fn(const std::string& name = "H") {
    auto f = std::make_shared<OpaqueFn>();
    f->name = name;
    f->arity = 1;
    f->max_order = 4;
    f->eval = [](const std::vector<int>& d, const std::vector<double>& a) {
        return (d[0] % 2 == 0) ? std::cosh(a[0]) : std::sinh(a[0]);
    };
    return f;
}

inline SymbolTable basic_symbols() {
    SymbolTable st;
    st.declare(tvar());
    st.declare(xplain());
    for (int i = 1; i <= 4; ++i) st.declare(xvar(i));
    st.declare(uvar());
    st.declare(yvar());
    st.declare(vvar());
    st.declare(tauvar());
    st.declare(Var{"l", VarRole::Parameter});
    st.declare(Var{"w", VarRole::Parameter});
    st.declare(cosh_fn());
    return st;
}

inline Domain box(std::initializer_list<std::pair<Var, std::pair<double, double>>> rs) {
    Domain d;
    for (const auto& [v, iv] : rs) d.ranges.push_back(VarRange::interval(v, iv.first, iv.second));
    return d;
}

}  // namespace parafact::testing
