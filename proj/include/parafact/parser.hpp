#pragma once

#include <cctype>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "parafact/expr.hpp"

namespace parafact {

struct parse_error : std::runtime_error {
    std::size_t position;
    parse_error(const std::string& msg, std::size_t pos)
        : std::runtime_error(msg + " at position " + std::to_string(pos)), position(pos) {}
};

// Name resolution context for the expression DSL.
struct SymbolTable {
    std::map<std::string, Var> vars;
    std::map<std::string, OpaqueRef> opaques;

    void declare(Var v) { vars[v.name] = std::move(v); }
    void declare(OpaqueRef f) { opaques[f->name] = std::move(f); }
};

namespace detail {

class Parser {
public:
    Parser(std::string_view text, const SymbolTable& syms) : text_(text), syms_(syms) {}

    Expr parse() {
        Expr e = expression(0);
        skip_ws();
        if (pos_ != text_.size()) throw parse_error("unexpected trailing input", pos_);
        return e;
    }

private:
    std::string_view text_;
    const SymbolTable& syms_;
    std::size_t pos_ = 0;

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    char peek() {
        skip_ws();
        return pos_ < text_.size() ? text_[pos_] : '\0';
    }

    bool accept(char c) {
        if (peek() == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!accept(c)) throw parse_error(std::string("expected '") + c + "'", pos_);
    }

    // Pratt-style precedence climbing: + - (0), * / (1), unary - (2), ^ (3, right-assoc).
    Expr expression(int min_prec) {
        Expr lhs = unary();
        for (;;) {
            char op = peek();
            int prec;
            if (op == '+' || op == '-')
                prec = 0;
            else if (op == '*' || op == '/')
                prec = 1;
            else
                break;
            if (prec < min_prec) break;
            ++pos_;
            Expr rhs = expression(prec + 1);
            switch (op) {
                case '+': lhs = lhs + rhs; break;
                case '-': lhs = lhs - rhs; break;
                case '*': lhs = lhs * rhs; break;
                case '/': lhs = lhs / rhs; break;
            }
        }
        return lhs;
    }

    Expr unary() {
        if (accept('-')) return -unary();
        if (accept('+')) return unary();
        return power();
    }

    Expr power() {
        Expr base = atom();
        if (accept('^')) {
            std::size_t at = pos_;
            Expr e = unary();  // right-associative; exponent may itself be a^b
            // Exponents are restricted to rational constants.
            if (e.kind() == Expr::Kind::Rational) return Expr::pow(base, e.rat());
            if (e.kind() == Expr::Kind::Product && e.kids().size() == 2 &&
                e.kids()[0].is_rational() && e.kids()[1].kind() == Expr::Kind::Power &&
                e.kids()[1].base().is_rational()) {
                // e.g. "1/2" parsed as product
                Rational r = e.kids()[0].rat() * rat_pow(e.kids()[1].base().rat(),
                                                         e.kids()[1].exponent().num);
                return Expr::pow(base, r);
            }
            throw parse_error("exponent must be a rational constant", at);
        }
        return base;
    }

    Expr atom() {
        char c = peek();
        if (c == '(') {
            ++pos_;
            Expr e = expression(0);
            expect(')');
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
        throw parse_error("unexpected character", pos_);
    }

    Expr number() {
        skip_ws();
        std::size_t start = pos_;
        bool is_float = false;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        if (pos_ < text_.size() && text_[pos_] == '.') {
            is_float = true;
            ++pos_;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        }
        if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
            std::size_t mark = pos_++;
            if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
            if (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
                is_float = true;
                while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
            } else {
                pos_ = mark;  // 'e' belongs to an identifier, not this literal
            }
        }
        std::string s(text_.substr(start, pos_ - start));
        if (is_float) return Expr::real(std::stod(s));
        return Expr::rational(std::stoll(s));
    }

    Expr identifier() {
        skip_ws();
        std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
            ++pos_;
        std::string name(text_.substr(start, pos_ - start));

        if (peek() == '(') {
            ++pos_;
            std::vector<Expr> args;
            if (peek() != ')') {
                args.push_back(expression(0));
                while (accept(',')) args.push_back(expression(0));
            }
            expect(')');
            return call(name, std::move(args), start);
        }

        auto it = syms_.vars.find(name);
        if (it == syms_.vars.end()) throw parse_error("unknown identifier '" + name + "'", start);
        return Expr::variable(it->second);
    }

    Expr call(const std::string& name, std::vector<Expr> args, std::size_t at) {
        static const std::map<std::string, Fn> builtins = {
            {"sin", Fn::Sin}, {"cos", Fn::Cos}, {"exp", Fn::Exp},  {"ln", Fn::Ln},
            {"log", Fn::Ln},  {"sqrt", Fn::Sqrt}, {"abs", Fn::Abs}, {"mod", Fn::Mod}};
        if (auto b = builtins.find(name); b != builtins.end()) {
            if (static_cast<int>(args.size()) != fn_arity(b->second))
                throw parse_error(name + ": arity mismatch", at);
            return Expr::apply(b->second, std::move(args));
        }
        if (auto o = syms_.opaques.find(name); o != syms_.opaques.end()) {
            if (static_cast<int>(args.size()) != o->second->arity)
                throw parse_error(name + ": arity mismatch", at);
            return Expr::opaque(o->second, std::move(args));
        }
        // derivative spelling: base name + "_d" + one order digit per argument
        auto dp = name.rfind("_d");
        if (dp != std::string::npos) {
            std::string base = name.substr(0, dp);
            std::string digits = name.substr(dp + 2);
            auto o = syms_.opaques.find(base);
            if (o != syms_.opaques.end() && !digits.empty() &&
                static_cast<int>(digits.size()) == o->second->arity &&
                std::all_of(digits.begin(), digits.end(),
                            [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
                if (static_cast<int>(args.size()) != o->second->arity)
                    throw parse_error(name + ": arity mismatch", at);
                std::vector<int> deriv;
                for (char ch : digits) deriv.push_back(ch - '0');
                return Expr::opaque(o->second, std::move(args), std::move(deriv));
            }
        }
        throw parse_error("unknown function '" + name + "'", at);
    }
};

}  // namespace detail

inline Expr parse(std::string_view text, const SymbolTable& syms) {
    return detail::Parser(text, syms).parse();
}

}  // namespace parafact
