// Command-line frontend: equation/map files in, verdicts and reports out.
#include <chrono>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "parafact/eqfile.hpp"
#include "parafact/lattice.hpp"
#include "parafact/normalize.hpp"

using namespace parafact;
using nlohmann::json;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitInconclusive = 2;
constexpr int kExitInput = 3;

struct Options {
    int samples = 1000;
    double tol = 1e-6;
    std::uint64_t seed = 0;
    int pairs = 64;
    std::string json_path;

    CheckConfig check() const { return CheckConfig{samples, tol, seed}; }
};

std::string file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    std::ostringstream hex;
    hex << std::hex << std::hash<std::string>{}(buf.str());
    return hex.str();
}

struct Report {
    json j;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    Report(const std::string& command, const Options& opt) {
        j["schema"] = 1;
        j["command"] = command;
        j["seed"] = opt.seed;
        j["samples"] = opt.samples;
        j["tol"] = opt.tol;
        j["pairs"] = opt.pairs;
        j["inputs"] = json::array();
    }

    void input(const std::string& path) {
        j["inputs"].push_back({{"path", path}, {"hash", file_hash(path)}});
    }

    void finish(const Options& opt, int exit_code) {
        auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - start)
                      .count();
        j["wall_ms"] = ms;
        j["exit"] = exit_code;
        if (!opt.json_path.empty()) {
            std::ofstream out(opt.json_path);
            out << j.dump(2) << "\n";
        }
    }
};

json verdict_json(const Verdict& v) {
    json out;
    out["status"] = v.status == Status::Pass   ? "pass"
                    : v.status == Status::Fail ? "fail"
                                               : "inconclusive";
    out["max_residual"] = v.max_residual;
    out["mean_residual"] = v.mean_residual;
    out["samples"] = v.samples;
    out["seed"] = v.seed;
    if (!v.note.empty()) out["note"] = v.note;
    if (v.witness) {
        json w;
        for (const auto& [name, val] : *v.witness) w[name] = val;
        out["witness"] = w;
    }
    return out;
}

std::string equation_text(const ParabolicEquation& eq) {
    std::ostringstream os;
    io::write_equation(os, eq);
    return os.str();
}

std::string map_text(const FiberedMap& F) {
    std::ostringstream os;
    io::write_map(os, F);
    return os.str();
}

json aclass_json(const AClass& ac) {
    json out;
    out["kind"] = aclass_name(ac.kind);
    out["lambda"] = ac.lambda;
    out["period"] = ac.period;
    out["u0"] = ac.u0;
    out["residual"] = ac.residual;
    if (!ac.note.empty()) out["note"] = ac.note;
    return out;
}

void print_aclass(std::ostream& out, const AClass& ac) {
    out << "class: " << aclass_name(ac.kind);
    if (ac.kind == AClass::Kind::Aexp || ac.kind == AClass::Kind::AexpExt)
        out << "  lambda = " << ac.lambda;
    if (ac.kind == AClass::Kind::Adeg || ac.kind == AClass::Kind::AdegExt)
        out << "  u0 = " << ac.u0 << "  lambda = " << ac.lambda;
    if (ac.period > 0) out << "  period = " << ac.period;
    out << "\n";
    if (!ac.note.empty()) out << "note: " << ac.note << "\n";
}

AClass classify_diffusion(const ParabolicEquation& eq, const ClassifyResult& cls,
                          const Options& opt) {
    const VarRange* ur = eq.dom.find(eq.u.name);
    AOptions ao;
    ao.seed = opt.seed;
    if (cls.has("PE2") && ur) return normalize::classify_a(cls.factored.a, eq.u, *ur, ao);
    AClass none;
    none.note = "no factored diffusion law";
    return none;
}

int outcome_exit(morphism::MorphismReport::Outcome o) {
    using O = morphism::MorphismReport::Outcome;
    return o == O::Accepted ? kExitPass : o == O::Rejected ? kExitFail : kExitInconclusive;
}

int run_pushforward(const std::string& eq_path, const std::string& map_path, const Options& opt,
                    bool want_iso, const std::string& out_path, Report& rep, std::ostream& out) {
    io::EquationFile f = io::read_equation_file(eq_path);
    rep.input(eq_path);
    FiberedMap F = io::read_map_file(map_path, f.eq);
    rep.input(map_path);

    morphism::MorphismReport mr = morphism::pushforward(f.eq, F, std::nullopt, opt.check(), opt.pairs);
    out << "outcome: " << morphism::outcome_name(mr.outcome) << "\n";
    rep.j["outcome"] = morphism::outcome_name(mr.outcome);
    if (!mr.failing_candidate.empty() && !mr.accepted()) {
        out << "failed at: " << mr.failing_candidate << "\n";
        rep.j["failed_at"] = mr.failing_candidate;
        rep.j["detail"] = verdict_json(mr.detail);
        if (mr.detail.witness) {
            out << "witness:";
            for (const auto& [name, val] : *mr.detail.witness) out << " " << name << "=" << val;
            out << "\n";
        }
    }
    if (mr.accepted()) {
        out << "max residual: " << mr.max_residual << "\n";
        rep.j["max_residual"] = mr.max_residual;
        if (mr.quotient) {
            std::string text = equation_text(*mr.quotient);
            rep.j["quotient"] = text;
            if (!out_path.empty()) {
                std::ofstream qf(out_path);
                qf << text;
                out << "quotient written to " << out_path << "\n";
            } else {
                out << "quotient:\n" << text;
            }
        } else {
            out << "quotient: implicit (map carries no section)\n";
            rep.j["quotient"] = nullptr;
        }
        if (want_iso) {
            Domain tgt = mr.quotient ? mr.quotient->dom
                                     : morphism::infer_quotient_domain(f.eq, F, opt.check());
            auto iso = morphism::is_isomorphism(F, f.eq.dom, tgt, opt.check());
            out << "isomorphism: " << (iso.is_iso ? "yes" : "no");
            if (!iso.evidence.note.empty()) out << " (" << iso.evidence.note << ")";
            out << "\n";
            rep.j["isomorphism"] = iso.is_iso;
        }
    }
    return outcome_exit(mr.outcome);
}

int run_classify(const std::string& eq_path, std::optional<double> u0, const Options& opt,
                 Report& rep, std::ostream& out) {
    io::EquationFile f = io::read_equation_file(eq_path);
    rep.input(eq_path);
    ClassifyResult cls = equation::classify(f.eq, opt.check(), u0);
    if (cls.labels.empty()) {
        const Verdict& v = cls.detail.at("PE");
        out << "not a parabolic equation: " << v.note << "\n";
        rep.j["labels"] = json::array();
        rep.j["detail"] = verdict_json(v);
        return v.status == Status::Fail ? kExitFail : kExitInconclusive;
    }
    out << "labels:";
    rep.j["labels"] = json::array();
    for (const auto& l : cls.labels) {
        out << " " << l;
        rep.j["labels"].push_back(l);
    }
    out << "\n";
    if (cls.has("PE2")) {
        out << "a = " << to_string(cls.factored.a) << "\n";
        rep.j["a"] = to_string(cls.factored.a);
        AClass ac = classify_diffusion(f.eq, cls, opt);
        print_aclass(out, ac);
        rep.j["aclass"] = aclass_json(ac);
    }
    return kExitPass;
}

int run_classify_a(const std::string& expr_text, const std::string& omega, int grid,
                   const Options& opt, Report& rep, std::ostream& out) {
    Var u{"u", VarRole::Fiber};
    SymbolTable st;
    st.declare(u);
    Expr a = parse(expr_text, st);
    rep.j["expr"] = expr_text;

    double lo = -50, hi = 50;
    if (!omega.empty()) {
        std::size_t comma = omega.find(',');
        if (comma == std::string::npos)
            throw std::invalid_argument("--omega expects 'lo,hi'");
        lo = std::stod(omega.substr(0, comma));
        hi = std::stod(omega.substr(comma + 1));
    }
    AOptions ao;
    ao.seed = opt.seed;
    if (grid > 0) ao.grid = grid;
    AClass ac = normalize::classify_a(a, u, VarRange::interval(u, lo, hi), ao);
    print_aclass(out, ac);
    rep.j["aclass"] = aclass_json(ac);
    return kExitPass;
}

int run_normalize(const std::string& op, const std::string& eq_path, const std::string& map_path,
                  const Options& opt, Report& rep, std::ostream& out) {
    io::EquationFile f = io::read_equation_file(eq_path);
    rep.input(eq_path);

    NormalizationResult nr;
    try {
        if (op == "quasilinearize") {
            nr = normalize::quasilinearize(f.eq, f.eq.omega_mid(), opt.check());
        } else if (op == "remove-drift") {
            nr = normalize::remove_drift(f.eq, opt.check());
        } else if (op == "time-reparam") {
            if (map_path.empty()) throw std::invalid_argument("time-reparam needs --map");
            FiberedMap F = io::read_map_file(map_path, f.eq);
            rep.input(map_path);
            nr = normalize::time_reparam(F, f.eq.dom, std::nullopt, opt.check());
        } else if (op == "gauge") {
            if (map_path.empty()) throw std::invalid_argument("gauge needs --map");
            FiberedMap F = io::read_map_file(map_path, f.eq);
            rep.input(map_path);
            ClassifyResult cls = equation::classify(f.eq, opt.check());
            AClass ac = classify_diffusion(f.eq, cls, opt);
            nr = normalize::gauge_canonicalize(f.eq, F, ac, opt.check());
        } else {
            throw std::invalid_argument("unknown op '" + op + "'");
        }
    } catch (const std::invalid_argument& e) {
        out << "rejected: " << e.what() << "\n";
        rep.j["rejected"] = e.what();
        return kExitFail;
    }

    out << "provenance: " << nr.provenance << "\n";
    rep.j["provenance"] = nr.provenance;
    out << "isomorphism:\n" << map_text(nr.iso);
    rep.j["iso"] = map_text(nr.iso);
    if (nr.psi) {
        out << "psi = " << to_string(*nr.psi) << "\n";
        rep.j["psi"] = to_string(*nr.psi);
    }
    if (nr.congruence.status != Status::Pass || !nr.congruence.note.empty()) {
        out << "congruence: " << verdict_json(nr.congruence)["status"].get<std::string>();
        if (!nr.congruence.note.empty()) out << " (" << nr.congruence.note << ")";
        out << "\n";
        rep.j["congruence"] = verdict_json(nr.congruence);
    }
    if (nr.target) {
        out << "target:\n" << equation_text(*nr.target);
        rep.j["target"] = equation_text(*nr.target);
    }
    if (nr.congruence.status == Status::Fail) return kExitFail;
    if (nr.congruence.status == Status::Inconclusive && !nr.congruence.note.empty())
        return kExitInconclusive;
    return kExitPass;
}

std::optional<AClass::Kind> parse_aclass_kind(const std::string& s) {
    for (AClass::Kind k : {AClass::Kind::Const, AClass::Kind::Aexp, AClass::Kind::Adeg,
                           AClass::Kind::AexpExt, AClass::Kind::AdegExt, AClass::Kind::None})
        if (s == aclass_name(k)) return k;
    return std::nullopt;
}

void print_relation(std::ostream& out, const lattice::Relation& r) {
    out << "kinds: " << lattice::kinds_to_string(r.kinds) << "\n";
    for (const auto& step : r.trace) out << "  [" << step.rule << "] " << step.detail << "\n";
}

int run_lattice_query(const std::string& from, const std::string& to, const std::string& aclass,
                      Report& rep, std::ostream& out) {
    AClass ac;
    if (!aclass.empty()) {
        auto k = parse_aclass_kind(aclass);
        if (!k) throw std::invalid_argument("unknown diffusion class '" + aclass + "'");
        ac.kind = *k;
    }
    lattice::Relation r = lattice::Lattice::builtin().infer(from, to, ac);
    print_relation(out, r);
    rep.j["kinds"] = lattice::kinds_to_string(r.kinds);
    rep.j["trace"] = json::array();
    for (const auto& s : r.trace) rep.j["trace"].push_back({{"rule", s.rule}, {"detail", s.detail}});
    return r.kinds ? kExitPass : kExitFail;
}

int run_lattice_chain(const std::vector<std::string>& nodes, const std::string& aclass,
                      Report& rep, std::ostream& out) {
    AClass ac;
    if (!aclass.empty()) {
        auto k = parse_aclass_kind(aclass);
        if (!k) throw std::invalid_argument("unknown diffusion class '" + aclass + "'");
        ac.kind = *k;
    }
    lattice::Relation r;
    try {
        r = lattice::Lattice::builtin().weakest(nodes, ac);
    } catch (const std::invalid_argument& e) {
        out << "chain fails: " << e.what() << "\n";
        rep.j["error"] = e.what();
        return kExitFail;
    }
    print_relation(out, r);
    rep.j["kinds"] = lattice::kinds_to_string(r.kinds);
    return r.kinds ? kExitPass : kExitFail;
}

int run_lattice_canonical(const std::string& eq_path, const Options& opt, Report& rep,
                          std::ostream& out) {
    io::EquationFile f = io::read_equation_file(eq_path);
    rep.input(eq_path);
    ClassifyResult cls = equation::classify(f.eq, opt.check());
    AClass ac = classify_diffusion(f.eq, cls, opt);
    lattice::CanonicalForm cf = lattice::canonical_form_query(cls.labels, ac);
    rep.j["labels"] = json::array();
    for (const auto& l : cls.labels) rep.j["labels"].push_back(l);
    rep.j["aclass"] = aclass_json(ac);
    rep.j["known"] = cf.known;
    if (!cf.known) {
        out << "no canonical form: " << cf.note << "\n";
        rep.j["note"] = cf.note;
        return kExitFail;
    }
    out << "morphism: " << cf.morphism << "\n";
    out << "quotient: " << cf.quotient << "\n";
    rep.j["morphism"] = cf.morphism;
    rep.j["quotient"] = cf.quotient;
    rep.j["provenance"] = cf.provenance;
    return kExitPass;
}

int run(std::vector<std::string> args, std::ostream& out);

int run_examples(const std::string& dir, Report& rep, std::ostream& out) {
    std::string manifest = dir + "/manifest.txt";
    std::ifstream in(manifest);
    if (!in) throw io::io_error("cannot open '" + manifest + "'", 0);
    std::string line;
    int line_no = 0, total = 0, failed = 0;
    rep.j["cases"] = json::array();
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tok;
        std::vector<std::string> toks;
        while (ls >> tok) toks.push_back(tok);
        if (toks.empty() || toks[0][0] == '#') continue;
        if (toks.size() < 2) throw io::io_error("manifest line needs 'expect command ...'", line_no);
        int expect = 0;
        try {
            expect = std::stoi(toks[0]);
        } catch (const std::exception&) {
            throw io::io_error("bad expected exit code '" + toks[0] + "'", line_no);
        }
        std::vector<std::string> sub(toks.begin() + 1, toks.end());
        for (auto& a : sub) {
            auto dot = a.rfind('.');
            if (dot != std::string::npos && (a.substr(dot) == ".eq" || a.substr(dot) == ".map"))
                a = dir + "/" + a;
        }
        std::ostringstream sink;
        int got = run(sub, sink);
        ++total;
        bool ok = got == expect;
        if (!ok) ++failed;
        out << (ok ? "pass" : "FAIL") << "  [" << expect << "/" << got << "]  " << line << "\n";
        if (!ok) out << sink.str();
        rep.j["cases"].push_back({{"line", line}, {"expect", expect}, {"got", got}, {"ok", ok}});
    }
    out << total - failed << "/" << total << " manifest cases matched\n";
    rep.j["total"] = total;
    rep.j["failed"] = failed;
    return failed == 0 ? kExitPass : kExitFail;
}

int run(std::vector<std::string> args, std::ostream& out) {
    CLI::App app{"morphism and classification toolkit for parabolic equations"};
    app.require_subcommand(1);

    Options opt;
    app.add_option("--samples", opt.samples, "oracle sample count");
    app.add_option("--tol", opt.tol, "oracle residual tolerance");
    app.add_option("--seed", opt.seed, "oracle RNG seed");
    app.add_option("--pairs", opt.pairs, "fiber pair count");
    app.add_option("--json", opt.json_path, "write a machine-readable report here");

    std::string eq_path, map_path, out_path, omega, op, from, to, aclass, dir = "corpus";
    std::string expr_text;
    std::optional<double> u0;
    double u0_val = 0.0;
    int grid = 0;
    bool want_iso = false;
    std::vector<std::string> chain_nodes;

    auto* check = app.add_subcommand("check", "decide whether a map is a morphism");
    check->add_option("--eq", eq_path, "equation file")->required();
    check->add_option("--map", map_path, "map file")->required();
    check->add_flag("--iso", want_iso, "also test for isomorphism");

    auto* quot = app.add_subcommand("quotient", "compute the quotient equation");
    quot->add_option("--eq", eq_path, "equation file")->required();
    quot->add_option("--map", map_path, "map file")->required();
    quot->add_option("--out", out_path, "write the quotient equation here");

    auto* cls = app.add_subcommand("classify", "subcategory labels of an equation");
    cls->add_option("--eq", eq_path, "equation file")->required();
    auto* u0_opt = cls->add_option("--u0", u0_val, "normalization fiber point");

    auto* ca = app.add_subcommand("classify-a", "classify a diffusion law a(u)");
    ca->add_option("expr", expr_text, "expression in u")->required();
    ca->add_option("--omega", omega, "fiber interval lo,hi");
    ca->add_option("--grid", grid, "scan grid size");

    auto* nrm = app.add_subcommand("normalize", "apply a canonicalization");
    nrm->add_option("--op", op, "quasilinearize|remove-drift|time-reparam|gauge")->required();
    nrm->add_option("--eq", eq_path, "equation file")->required();
    nrm->add_option("--map", map_path, "map file (time-reparam, gauge)");

    auto* lat = app.add_subcommand("lattice", "subcategory lattice queries");
    lat->require_subcommand(1);
    auto* lq = lat->add_subcommand("query", "derive relation kinds between two families");
    lq->add_option("--from", from, "ambient family")->required();
    lq->add_option("--to", to, "subfamily")->required();
    lq->add_option("--aclass", aclass, "diffusion class for conditional arrows");
    auto* lc = lat->add_subcommand("chain", "weakest relation along a chain");
    lc->add_option("nodes", chain_nodes, "family names")->required()->expected(-2);
    lc->add_option("--aclass", aclass, "diffusion class for conditional arrows");
    auto* lcan = lat->add_subcommand("canonical", "canonical form for a classified equation");
    lcan->add_option("--eq", eq_path, "equation file")->required();

    auto* ex = app.add_subcommand("examples", "run the example corpus");
    ex->require_subcommand(1);
    auto* exr = ex->add_subcommand("run-all", "run every manifest case");
    exr->add_option("--dir", dir, "corpus directory");

    try {
        std::reverse(args.begin(), args.end());  // CLI11 consumes a reversed vector
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return kExitPass;
        }
        std::cerr << e.what() << "\n";
        return kExitInput;
    }
    if (u0_opt->count()) u0 = u0_val;

    std::string cmd = app.get_subcommands()[0]->get_name();
    Report rep(cmd, opt);
    int code = kExitInput;
    try {
        if (check->parsed())
            code = run_pushforward(eq_path, map_path, opt, want_iso, "", rep, out);
        else if (quot->parsed())
            code = run_pushforward(eq_path, map_path, opt, false, out_path, rep, out);
        else if (cls->parsed())
            code = run_classify(eq_path, u0, opt, rep, out);
        else if (ca->parsed())
            code = run_classify_a(expr_text, omega, grid, opt, rep, out);
        else if (nrm->parsed())
            code = run_normalize(op, eq_path, map_path, opt, rep, out);
        else if (lq->parsed())
            code = run_lattice_query(from, to, aclass, rep, out);
        else if (lc->parsed())
            code = run_lattice_chain(chain_nodes, aclass, rep, out);
        else if (lcan->parsed())
            code = run_lattice_canonical(eq_path, opt, rep, out);
        else if (exr->parsed())
            code = run_examples(dir, rep, out);
    } catch (const io::io_error& e) {
        std::cerr << "input error: " << e.what() << "\n";
        code = kExitInput;
    } catch (const parse_error& e) {
        std::cerr << "input error: " << e.what() << "\n";
        code = kExitInput;
    } catch (const std::invalid_argument& e) {
        std::cerr << "input error: " << e.what() << "\n";
        code = kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        code = kExitInconclusive;
    }
    rep.finish(opt, code);
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout);
}
