#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "parafact/equation.hpp"
#include "parafact/geometry.hpp"
#include "parafact/morphism.hpp"
#include "parafact/parser.hpp"

namespace parafact::io {

struct io_error : std::runtime_error {
    int line;
    io_error(const std::string& msg, int line_no)
        : std::runtime_error("line " + std::to_string(line_no) + ": " + msg), line(line_no) {}
};

namespace detail {

// section -> ordered key/value entries, each tagged with its source line
struct Entry {
    std::string key;
    std::string value;
    bool quoted = false;
    int line = 0;
};

using Sections = std::vector<std::pair<std::string, std::vector<Entry>>>;

inline std::string strip(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline Sections read_sections(std::istream& in) {
    Sections out;
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = strip(raw);
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw io_error("unterminated section header", line_no);
            out.emplace_back(strip(line.substr(1, line.size() - 2)), std::vector<Entry>{});
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw io_error("expected 'key = value'", line_no);
        if (out.empty()) throw io_error("entry before any section header", line_no);
        Entry e;
        e.key = strip(line.substr(0, eq));
        e.value = strip(line.substr(eq + 1));
        e.line = line_no;
        if (e.key.empty()) throw io_error("empty key", line_no);
        if (e.value.size() >= 2 && e.value.front() == '"' && e.value.back() == '"') {
            e.value = e.value.substr(1, e.value.size() - 2);
            e.quoted = true;
        }
        out.back().second.push_back(e);
    }
    return out;
}

inline double parse_number(const Entry& e, const std::string& text) {
    std::string s = strip(text);
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw io_error("expected a number, got '" + s + "'", e.line);
    }
}

inline std::pair<double, double> parse_interval(const Entry& e) {
    std::size_t comma = e.value.find(',');
    if (comma == std::string::npos) throw io_error("expected 'lo, hi'", e.line);
    double lo = parse_number(e, e.value.substr(0, comma));
    double hi = parse_number(e, e.value.substr(comma + 1));
    if (!(lo < hi)) throw io_error("empty interval", e.line);
    return {lo, hi};
}

inline bool parse_bool(const Entry& e) {
    if (e.value == "true") return true;
    if (e.value == "false") return false;
    throw io_error("expected 'true' or 'false'", e.line);
}

inline Expr parse_expr(const Entry& e, const SymbolTable& st) {
    try {
        return parse(e.value, st);
    } catch (const parse_error& err) {
        throw io_error(std::string(err.what()) + " in \"" + e.value + "\"", e.line);
    }
}

// "b.2.1" -> {"b", "2", "1"}
inline std::vector<std::string> split_key(const std::string& key) {
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (pos <= key.size()) {
        std::size_t dot = key.find('.', pos);
        if (dot == std::string::npos) dot = key.size();
        parts.push_back(key.substr(pos, dot - pos));
        pos = dot + 1;
    }
    return parts;
}

inline int parse_index(const Entry& e, const std::string& part, int n) {
    int idx = 0;
    auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), idx);
    if (ec != std::errc{} || p != part.data() + part.size() || idx < 1 || idx > n)
        throw io_error("index '" + part + "' out of range in key '" + e.key + "'", e.line);
    return idx - 1;
}

inline std::string format_number(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

}  // namespace detail

// Chart naming convention shared by files and the CLI: base variables are
// "x" when n = 1 and "x1".."xn" otherwise; target charts use "y" likewise.
inline std::vector<Var> base_vars(int n, VarRole role = VarRole::Base,
                                  const std::string& stem = "x") {
    std::vector<Var> xs;
    for (int i = 1; i <= n; ++i)
        xs.push_back(Var{n == 1 ? stem : stem + std::to_string(i), role, i});
    return xs;
}

struct EquationFile {
    ParabolicEquation eq;                 // coordinate form, expanded if geometric
    std::optional<GeometricEquation> geo; // present in geometry mode
    SymbolTable symbols;                  // chart symbols for further parsing

    bool geometric() const { return geo.has_value(); }
};

inline EquationFile read_equation(std::istream& in) {
    using namespace detail;
    Sections secs = read_sections(in);
    auto find = [&](const std::string& name) -> const std::vector<Entry>* {
        for (const auto& [s, es] : secs)
            if (s == name) return &es;
        return nullptr;
    };
    for (const auto& [s, es] : secs)
        if (s != "meta" && s != "vars" && s != "coeffs" && s != "geometry")
            throw io_error("unknown section [" + s + "]",
                           es.empty() ? 0 : es.front().line - 1);

    const auto* vars = find("vars");
    if (!vars) throw io_error("missing [vars] section", 0);
    const auto* coeffs = find("coeffs");
    const auto* geom = find("geometry");
    if (coeffs && geom)
        throw io_error("[coeffs] and [geometry] may not both be present",
                       geom->empty() ? 0 : geom->front().line - 1);
    if (!coeffs && !geom) throw io_error("missing [coeffs] or [geometry] section", 0);

    int n = 0;
    for (const auto& e : *vars)
        if (e.key == "n") n = static_cast<int>(parse_number(e, e.value));
    if (n < 1 || n > 4) throw io_error("[vars] must declare n in 1..4", vars->front().line);

    Var t{"t", VarRole::Time};
    Var u{"u", VarRole::Fiber};
    std::vector<Var> xs = base_vars(n);

    Domain dom;
    std::vector<std::optional<VarRange>> xr(n);
    std::optional<VarRange> tr, ur;
    for (const auto& e : *vars) {
        if (e.key == "n") continue;
        if (e.key == "t_interval") {
            auto [lo, hi] = parse_interval(e);
            tr = VarRange::interval(t, lo, hi);
        } else if (e.key == "omega_interval") {
            auto [lo, hi] = parse_interval(e);
            ur = VarRange::interval(u, lo, hi);
        } else if (e.key.size() > 10 && e.key.substr(0, 1) == "x" &&
                   e.key.substr(e.key.size() - 9) == "_interval") {
            int i = parse_index(e, e.key.substr(1, e.key.size() - 10), n);
            auto [lo, hi] = parse_interval(e);
            xr[i] = VarRange::interval(xs[i], lo, hi);
        } else if (e.key.size() > 5 && e.key.substr(0, 1) == "x" &&
                   e.key.substr(e.key.size() - 4) == "_mod") {
            int i = parse_index(e, e.key.substr(1, e.key.size() - 5), n);
            double m = parse_number(e, e.value);
            if (!(m > 0)) throw io_error("modulus must be positive", e.line);
            xr[i] = VarRange::periodic_mod(xs[i], m);
        } else {
            throw io_error("unknown [vars] key '" + e.key + "'", e.line);
        }
    }
    dom.ranges.push_back(tr.value_or(VarRange::whole_line(t)));
    for (int i = 0; i < n; ++i) {
        if (!xr[i])
            throw io_error("missing x" + std::to_string(i + 1) + "_interval or _mod",
                           vars->front().line);
        dom.ranges.push_back(*xr[i]);
    }
    dom.ranges.push_back(ur.value_or(VarRange::whole_line(u)));

    EquationFile out;
    out.symbols.declare(t);
    out.symbols.declare(u);
    for (const auto& xv : xs) out.symbols.declare(xv);

    std::string name;
    bool compact = false;
    if (const auto* meta = find("meta")) {
        for (const auto& e : *meta) {
            if (e.key == "name")
                name = e.value;
            else if (e.key == "compact")
                compact = parse_bool(e);
            else
                throw io_error("unknown [meta] key '" + e.key + "'", e.line);
        }
    }

    if (coeffs) {
        ParabolicEquation eq = ParabolicEquation::make(t, xs, u, dom);
        eq.name = name;
        eq.compact_x = compact;
        auto set_sym = [&](std::vector<std::vector<Expr>>& mat, const Entry& e, int i, int j,
                           const char* what) {
            Expr v = parse_expr(e, out.symbols);
            if (i != j && !mat[j][i].is_zero() && !(mat[j][i] == v))
                throw io_error(std::string(what) + "." + std::to_string(i + 1) + "." +
                                   std::to_string(j + 1) + " contradicts its transpose entry",
                               e.line);
            mat[i][j] = v;
            mat[j][i] = std::move(v);
        };
        for (const auto& e : *coeffs) {
            auto parts = split_key(e.key);
            if (parts.size() == 3 && (parts[0] == "b" || parts[0] == "c")) {
                int i = parse_index(e, parts[1], n), j = parse_index(e, parts[2], n);
                set_sym(parts[0] == "b" ? eq.b : eq.c, e, i, j, parts[0].c_str());
            } else if (parts.size() == 2 && parts[0] == "b") {
                eq.bvec[parse_index(e, parts[1], n)] = parse_expr(e, out.symbols);
            } else if (parts.size() == 1 && parts[0] == "q") {
                eq.q = parse_expr(e, out.symbols);
            } else {
                throw io_error("unknown [coeffs] key '" + e.key + "'", e.line);
            }
        }
        out.eq = std::move(eq);
    } else {
        GeometricEquation ge = GeometricEquation::make(t, xs, u, dom);
        ge.name = name;
        ge.compact_x = compact;
        for (const auto& e : *geom) {
            auto parts = split_key(e.key);
            if (parts.size() == 3 && parts[0] == "g") {
                int i = parse_index(e, parts[1], n), j = parse_index(e, parts[2], n);
                Expr v = parse_expr(e, out.symbols);
                if (i != j && !ge.g[j][i].is_zero() && !(ge.g[j][i] == v))
                    throw io_error("g." + std::to_string(i + 1) + "." + std::to_string(j + 1) +
                                       " contradicts its transpose entry",
                                   e.line);
                ge.g[i][j] = v;
                ge.g[j][i] = std::move(v);
            } else if (parts.size() == 2 && (parts[0] == "eta" || parts[0] == "xi")) {
                auto& vec = parts[0] == "eta" ? ge.eta : ge.xi;
                vec[parse_index(e, parts[1], n)] = parse_expr(e, out.symbols);
            } else if (parts.size() == 1 && parts[0] == "a") {
                ge.a = parse_expr(e, out.symbols);
            } else if (parts.size() == 1 && parts[0] == "q") {
                ge.q = parse_expr(e, out.symbols);
            } else {
                throw io_error("unknown [geometry] key '" + e.key + "'", e.line);
            }
        }
        out.eq = geometry::expand(ge);
        out.geo = std::move(ge);
    }
    return out;
}

inline EquationFile read_equation_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open '" + path + "'", 0);
    return read_equation(in);
}

namespace detail {

inline void write_vars(std::ostream& os, const Domain& dom, const Var& t,
                       const std::vector<Var>& xs, const Var& u) {
    os << "[vars]\n";
    os << "n = " << xs.size() << "\n";
    auto write_range = [&](const VarRange* r, const std::string& key_stem, bool allow_mod) {
        if (!r) return;
        if (r->periodic && allow_mod)
            os << key_stem << "_mod = " << format_number(r->modulus) << "\n";
        else
            os << key_stem << "_interval = " << format_number(r->lo) << ", "
               << format_number(r->hi) << "\n";
    };
    write_range(dom.find(t.name), "t", false);
    for (std::size_t i = 0; i < xs.size(); ++i)
        write_range(dom.find(xs[i].name), "x" + std::to_string(i + 1), true);
    const VarRange* ur = dom.find(u.name);
    if (ur)
        os << "omega_interval = " << format_number(ur->lo) << ", " << format_number(ur->hi)
           << "\n";
}

inline void write_meta(std::ostream& os, const std::string& name, bool compact) {
    os << "[meta]\n";
    if (!name.empty()) os << "name = \"" << name << "\"\n";
    os << "compact = " << (compact ? "true" : "false") << "\n\n";
}

}  // namespace detail

// Normalized emission: meta, vars, then coefficients in index order with the
// zero entries omitted. write(read(write(eq))) is byte-identical.
inline void write_equation(std::ostream& os, const ParabolicEquation& eq) {
    using namespace detail;
    write_meta(os, eq.name, eq.compact_x);
    write_vars(os, eq.dom, eq.t, eq.x, eq.u);
    os << "\n[coeffs]\n";
    for (int i = 0; i < eq.n; ++i)
        for (int j = i; j < eq.n; ++j)
            if (!eq.b[i][j].is_zero())
                os << "b." << i + 1 << "." << j + 1 << " = \"" << to_string(eq.b[i][j]) << "\"\n";
    for (int i = 0; i < eq.n; ++i)
        for (int j = i; j < eq.n; ++j)
            if (!eq.c[i][j].is_zero())
                os << "c." << i + 1 << "." << j + 1 << " = \"" << to_string(eq.c[i][j]) << "\"\n";
    for (int i = 0; i < eq.n; ++i)
        if (!eq.bvec[i].is_zero())
            os << "b." << i + 1 << " = \"" << to_string(eq.bvec[i]) << "\"\n";
    if (!eq.q.is_zero()) os << "q = \"" << to_string(eq.q) << "\"\n";
}

inline void write_equation(std::ostream& os, const GeometricEquation& ge) {
    using namespace detail;
    write_meta(os, ge.name, ge.compact_x);
    write_vars(os, ge.dom, ge.t, ge.x, ge.u);
    os << "\n[geometry]\n";
    for (int i = 0; i < ge.n; ++i)
        for (int j = i; j < ge.n; ++j)
            if (!ge.g[i][j].is_zero())
                os << "g." << i + 1 << "." << j + 1 << " = \"" << to_string(ge.g[i][j]) << "\"\n";
    os << "a = \"" << to_string(ge.a) << "\"\n";
    for (int i = 0; i < ge.n; ++i)
        if (!ge.eta[i].is_zero())
            os << "eta." << i + 1 << " = \"" << to_string(ge.eta[i]) << "\"\n";
    for (int i = 0; i < ge.n; ++i)
        if (!ge.xi[i].is_zero())
            os << "xi." << i + 1 << " = \"" << to_string(ge.xi[i]) << "\"\n";
    if (!ge.q.is_zero()) os << "q = \"" << to_string(ge.q) << "\"\n";
}

// Map files carry the forward components against the source chart of `src`;
// target variables are tau, y (or y1..ym), v.
inline FiberedMap read_map(std::istream& in, const ParabolicEquation& src) {
    using namespace detail;
    Sections secs = read_sections(in);
    const std::vector<Entry>*map = nullptr, *section = nullptr, *fibers = nullptr;
    for (const auto& [s, es] : secs) {
        if (s == "map")
            map = &es;
        else if (s == "section")
            section = &es;
        else if (s == "fibers")
            fibers = &es;
        else
            throw io_error("unknown section [" + s + "]", es.empty() ? 0 : es.front().line - 1);
    }
    if (!map) throw io_error("missing [map] section", 0);

    // arity from the y keys
    int m = 0;
    for (const auto& e : *map) {
        auto parts = split_key(e.key);
        if (parts[0] == "y") m = std::max(m, parts.size() == 1 ? 1 : std::stoi(parts[1]));
    }
    if (m < 1) throw io_error("[map] must define at least y.1", map->front().line);

    Var tau{"tau", VarRole::QuotientTime};
    Var v{"v", VarRole::QuotientFiber};
    std::vector<Var> ys = base_vars(m, VarRole::QuotientBase, "y");

    SymbolTable src_syms;
    src_syms.declare(src.t);
    src_syms.declare(src.u);
    for (const auto& xv : src.x) src_syms.declare(xv);

    std::optional<Expr> tau_e, v_e;
    std::vector<std::optional<Expr>> y_e(m);
    for (const auto& e : *map) {
        auto parts = split_key(e.key);
        if (parts.size() == 1 && parts[0] == "tau") {
            tau_e = parse_expr(e, src_syms);
        } else if (parts[0] == "y" && parts.size() <= 2) {
            int k = parts.size() == 1 ? 0 : parse_index(e, parts[1], m);
            y_e[k] = parse_expr(e, src_syms);
        } else if (parts.size() == 1 && parts[0] == "v") {
            v_e = parse_expr(e, src_syms);
        } else {
            throw io_error("unknown [map] key '" + e.key + "'", e.line);
        }
    }
    if (!tau_e) throw io_error("[map] is missing tau", map->front().line);
    if (!v_e) throw io_error("[map] is missing v", map->front().line);
    for (int k = 0; k < m; ++k)
        if (!y_e[k])
            throw io_error("[map] is missing y." + std::to_string(k + 1), map->front().line);

    std::vector<Expr> yv;
    for (auto& e : y_e) yv.push_back(std::move(*e));
    FiberedMap F;
    try {
        F = FiberedMap::make(src.t, src.x, src.u, tau, ys, v, std::move(*tau_e), std::move(yv),
                             std::move(*v_e));
    } catch (const std::invalid_argument& err) {
        throw io_error(err.what(), map->front().line);
    }

    if (section) {
        SymbolTable tgt_syms;
        tgt_syms.declare(tau);
        tgt_syms.declare(v);
        for (const auto& yvar : ys) tgt_syms.declare(yvar);
        std::optional<Expr> t_b, u_b;
        std::vector<std::optional<Expr>> x_b(src.n);
        for (const auto& e : *section) {
            auto parts = split_key(e.key);
            if (parts.size() == 1 && parts[0] == "t") {
                t_b = parse_expr(e, tgt_syms);
            } else if (parts[0] == "x" && parts.size() <= 2) {
                int i = parts.size() == 1 ? 0 : parse_index(e, parts[1], src.n);
                x_b[i] = parse_expr(e, tgt_syms);
            } else if (parts.size() == 1 && parts[0] == "u") {
                u_b = parse_expr(e, tgt_syms);
            } else {
                throw io_error("unknown [section] key '" + e.key + "'", e.line);
            }
        }
        if (!t_b || !u_b) throw io_error("[section] needs t and u", section->front().line);
        std::vector<Expr> sec{std::move(*t_b)};
        for (int i = 0; i < src.n; ++i) {
            if (!x_b[i])
                throw io_error("[section] is missing x." + std::to_string(i + 1),
                               section->front().line);
            sec.push_back(std::move(*x_b[i]));
        }
        sec.push_back(std::move(*u_b));
        F.section = std::move(sec);
    }

    if (fibers) {
        for (const auto& e : *fibers) {
            if (e.key != "kind" || (e.value != "periodic" && e.value != "custom"))
                throw io_error("[fibers] allows only kind = periodic|custom", e.line);
        }
    }
    return F;
}

inline FiberedMap read_map_file(const std::string& path, const ParabolicEquation& src) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open '" + path + "'", 0);
    return read_map(in, src);
}

inline void write_map(std::ostream& os, const FiberedMap& F) {
    os << "[map]\n";
    os << "tau = \"" << to_string(F.tau_expr) << "\"\n";
    for (int k = 0; k < F.m(); ++k) {
        os << "y";
        if (F.m() > 1) os << "." << k + 1;
        os << " = \"" << to_string(F.y_expr[k]) << "\"\n";
    }
    os << "v = \"" << to_string(F.v_expr) << "\"\n";
    if (F.section) {
        os << "\n[section]\n";
        os << "t = \"" << to_string((*F.section)[0]) << "\"\n";
        for (int i = 0; i < F.n(); ++i) {
            os << "x";
            if (F.n() > 1) os << "." << i + 1;
            os << " = \"" << to_string((*F.section)[1 + i]) << "\"\n";
        }
        os << "u = \"" << to_string((*F.section)[1 + F.n()]) << "\"\n";
    }
}

}  // namespace parafact::io
