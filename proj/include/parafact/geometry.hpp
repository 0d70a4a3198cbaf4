#pragma once

#include <stdexcept>
#include <vector>

#include "parafact/equation.hpp"
#include "parafact/expr.hpp"

namespace parafact {

// u_t = a (Laplace-Beltrami u + eta . grad u) + xi . grad u + q, written
// against a Riemannian metric g on the base chart.
struct GeometricEquation {
    int n = 1;
    Var t;
    std::vector<Var> x;
    Var u;
    Domain dom;
    std::vector<std::vector<Expr>> g;  // metric, lower indices
    Expr a = Expr::rational(1);
    std::vector<Expr> eta;
    std::vector<Expr> xi;
    Expr q = Expr::rational(0);
    bool compact_x = false;
    std::string name;

    static GeometricEquation make(Var t, std::vector<Var> x, Var u, Domain dom) {
        GeometricEquation ge;
        ge.n = static_cast<int>(x.size());
        ge.t = std::move(t);
        ge.x = std::move(x);
        ge.u = std::move(u);
        ge.dom = std::move(dom);
        ge.g.assign(ge.n, std::vector<Expr>(ge.n, Expr::rational(0)));
        for (int i = 0; i < ge.n; ++i) ge.g[i][i] = Expr::rational(1);
        ge.eta.assign(ge.n, Expr::rational(0));
        ge.xi.assign(ge.n, Expr::rational(0));
        return ge;
    }
};

namespace geometry {

using Matrix = std::vector<std::vector<Expr>>;

inline Expr det(const Matrix& m) {
    const int n = static_cast<int>(m.size());
    if (n == 1) return m[0][0];
    if (n == 2) return m[0][0] * m[1][1] - m[0][1] * m[1][0];
    Expr d = Expr::rational(0);
    for (int j = 0; j < n; ++j) {
        Matrix minor(n - 1, std::vector<Expr>(n - 1, Expr::rational(0)));
        for (int r = 1; r < n; ++r)
            for (int c = 0, cc = 0; c < n; ++c)
                if (c != j) minor[r - 1][cc++] = m[r][c];
        Expr term = m[0][j] * det(minor);
        d = (j % 2 == 0) ? d + term : d - term;
    }
    return d;
}

inline Matrix inverse(const Matrix& m) {
    const int n = static_cast<int>(m.size());
    if (n > 4) throw std::invalid_argument("symbolic inverse supported up to dimension 4");
    Expr d = det(m);
    if (d.is_zero()) throw std::invalid_argument("metric determinant is identically zero");
    Matrix inv(n, std::vector<Expr>(n, Expr::rational(0)));
    if (n == 1) {
        inv[0][0] = Expr::rational(1) / d;
        return inv;
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            Matrix minor(n - 1, std::vector<Expr>(n - 1, Expr::rational(0)));
            for (int r = 0, rr = 0; r < n; ++r) {
                if (r == j) continue;
                for (int c = 0, cc = 0; c < n; ++c)
                    if (c != i) minor[rr][cc++] = m[r][c];
                ++rr;
            }
            Expr cof = det(minor);
            inv[i][j] = (((i + j) % 2 == 0) ? cof : -cof) / d;
        }
    return inv;
}

// Gamma^i_jk = 1/2 g^il (d_j g_lk + d_k g_lj - d_l g_jk)
inline std::vector<Matrix> christoffel(const Matrix& g, const Matrix& ginv,
                                       const std::vector<Var>& x) {
    const int n = static_cast<int>(x.size());
    std::vector<Matrix> gamma(n, Matrix(n, std::vector<Expr>(n, Expr::rational(0))));
    Expr half = Expr::rational(1, 2);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = j; k < n; ++k) {
                Expr s = Expr::rational(0);
                for (int l = 0; l < n; ++l)
                    s = s + ginv[i][l] *
                                (diff(g[l][k], x[j]) + diff(g[l][j], x[k]) - diff(g[j][k], x[l]));
                gamma[i][j][k] = half * s;
                gamma[i][k][j] = gamma[i][j][k];
            }
    return gamma;
}

// Expand to the coordinate form: b^ij = a g^ij, c = 0,
// b^i = a (-g^jk Gamma^i_jk + eta^i) + xi^i.
inline ParabolicEquation expand(const GeometricEquation& ge) {
    ParabolicEquation eq = ParabolicEquation::make(ge.t, ge.x, ge.u, ge.dom);
    eq.compact_x = ge.compact_x;
    eq.name = ge.name;
    Matrix ginv = inverse(ge.g);
    auto gamma = christoffel(ge.g, ginv, ge.x);
    for (int i = 0; i < ge.n; ++i)
        for (int j = 0; j < ge.n; ++j) eq.b[i][j] = ge.a * ginv[i][j];
    for (int i = 0; i < ge.n; ++i) {
        Expr contracted = Expr::rational(0);
        for (int j = 0; j < ge.n; ++j)
            for (int k = 0; k < ge.n; ++k) contracted = contracted + ginv[j][k] * gamma[i][j][k];
        eq.bvec[i] = ge.a * (ge.eta[i] - contracted) + ge.xi[i];
    }
    eq.q = ge.q;
    return eq;
}

}  // namespace geometry
}  // namespace parafact
