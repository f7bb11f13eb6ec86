#include "fcalc/convlab.hpp"
#include "fcalc/delta.hpp"
#include "fcalc/heis.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

using namespace fcalc;
using json = nlohmann::json;

namespace {

// config problems found after parsing
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Common {
    std::string out;
    unsigned jobs = 1;
    std::uint64_t seed = 1;
};

std::string default_out(const std::string& sub) {
    const char* dir = std::getenv("FCALC_REPORT_DIR");
    std::string d = dir && *dir ? dir : ".";
    return d + "/" + sub + ".json";
}

// runs tasks on up to `jobs` threads; results keep task order
template <class R>
std::vector<R> run_parallel(unsigned jobs, const std::vector<std::function<R()>>& tasks) {
    std::vector<R> out(tasks.size());
    std::vector<std::exception_ptr> err(tasks.size());
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (size_t i; (i = next++) < tasks.size();) {
            try {
                out[i] = tasks[i]();
            } catch (...) {
                err[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned k = 1; k < std::max(1u, jobs) && k < tasks.size(); ++k) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (auto& e : err)
        if (e) std::rethrow_exception(e);
    return out;
}

cplx complex_arg(const std::string& s, const char* flag) {
    try {
        return parse_complex(s);
    } catch (const std::exception&) {
        throw ConfigError(std::string(flag) + ": not a complex literal: " + s);
    }
}

Rational rational_arg(const std::string& s, const char* flag) {
    try {
        return parse_rational(s);
    } catch (const std::exception&) {
        throw ConfigError(std::string(flag) + ": not a rational: " + s);
    }
}

int write_report(const Common& c, const std::string& sub, json report, bool pass) {
    report["subcommand"] = sub;
    report["pass"] = pass;
    if (c.seed) report["seed"] = c.seed;
    std::string path = c.out.empty() ? default_out(sub) : c.out;
    std::ofstream f(path);
    if (!f) {
        std::cerr << "cannot write report " << path << "\n";
        return 2;
    }
    f << report.dump(2) << "\n";
    std::cout << (pass ? "PASS" : "FAIL") << "  report: " << path << "\n";
    return pass ? 0 : 1;
}

json load_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read " + path);
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

// ---- verify-delta ----

struct DeltaCfg {
    std::string id;
    std::string mode;
    std::string z1, z2;
    long frame = 4;
    double tol = 1e-9;
    bool outside = false;
};

std::vector<std::pair<cplx, cplx>> default_grid(DeltaId id) {
    if (id == DeltaId::L2b || id == DeltaId::L4)
        return {{1.25, 1}, {cplx(1.5, 1.2), cplx(1, 1)}, {-1.5, -2}, {cplx(0, 2.5), cplx(0, 2)}, {cplx(1.3, -0.2), 1}};
    return {{2, 1}, {cplx(1.5, 1.5), cplx(0, 1)}, {-3, cplx(1, 1)}, {cplx(0, 2), -1}, {2.5, cplx(0.5, -1)}};
}

int run_verify_delta(const Common& c, const DeltaCfg& d) {
    auto id = parse_delta_id(d.id);
    if (!id) throw ConfigError("--id must be one of l1, l2a, l2b, l3, l4");
    if (d.frame < 0 || d.frame > 12) throw ConfigError("--frame must be in [0, 12]");
    if (!(d.tol > 0)) throw ConfigError("--tol must be positive");
    if (d.z1.empty() != d.z2.empty()) throw ConfigError("--z1 and --z2 go together");
    std::string mode = d.mode.empty() ? (*id == DeltaId::L1 && d.z1.empty() ? "formal" : "numeric") : d.mode;
    if (mode != "formal" && mode != "numeric") throw ConfigError("--mode must be formal or numeric");
    VerifyOptions opt;
    opt.frame = d.frame;
    opt.tol = d.tol;
    opt.outside_domain = d.outside;
    std::vector<std::pair<cplx, cplx>> pts;
    if (!d.z1.empty()) {
        pts.push_back({complex_arg(d.z1, "--z1"), complex_arg(d.z2, "--z2")});
        if (!d.outside) check_delta_domain(*id, pts[0].first, pts[0].second);
    } else if (mode == "numeric") {
        pts = default_grid(*id);
    }
    json j;
    j["config"] = {{"id", d.id}, {"mode", mode}, {"frame", d.frame}, {"tol", d.tol}};
    bool pass = true;
    std::vector<std::function<VerificationReport()>> tasks;
    if (mode == "formal") tasks.push_back([&] { return verify_delta_identity(*id, VerifyMode::Formal, opt); });
    for (auto p : pts) tasks.push_back([&, p] { return verify_delta_identity(*id, VerifyMode::Numeric, opt, p); });
    for (const auto& r : run_parallel(c.jobs, tasks)) {
        pass = pass && r.pass;
        j["results"].push_back(r.to_json());
        std::cout << d.id << " " << r.mode;
        if (r.point) std::cout << " (" << format_complex(r.point->first) << ", " << format_complex(r.point->second) << ")";
        std::cout << ": " << (r.pass ? "pass" : "fail") << ", " << r.monomials << " monomials, max deviation "
                  << r.max_deviation << "\n";
    }
    return write_report(c, "verify-delta", j, pass);
}

// ---- convergence-report ----

struct ConvCfg {
    std::string series;
    std::string z;
    std::vector<std::string> assign;
    int p = 0;
    double tol = 1e-9;
    std::string schedule = "weight";
    std::string weight_var = "x2";
};

int run_convergence(const Common& c, const ConvCfg& k) {
    if (!(k.tol > 0)) throw ConfigError("--tol must be positive");
    if (k.schedule != "weight" && k.schedule != "degree") throw ConfigError("--schedule must be weight or degree");
    auto wv = parse_var(k.weight_var);
    if (!wv) throw ConfigError("--weight-var: unknown variable");
    std::ifstream f(k.series);
    if (!f) throw ConfigError("cannot read " + k.series);
    std::stringstream buf;
    buf << f.rdbuf();
    FormalSeries s = [&] {
        try {
            return deserialize(buf.str());
        } catch (const std::exception& e) {
            throw ConfigError(k.series + ": " + e.what());
        }
    }();
    Assignment a;
    for (const auto& spec : k.assign) {
        // var=value[@p]
        auto eq = spec.find('=');
        if (eq == std::string::npos) throw ConfigError("--assign expects var=value[@p]");
        auto v = parse_var(spec.substr(0, eq));
        if (!v) throw ConfigError("--assign: unknown variable " + spec.substr(0, eq));
        std::string rest = spec.substr(eq + 1);
        int br = 0;
        if (auto at = rest.find('@'); at != std::string::npos) {
            br = std::stoi(rest.substr(at + 1));
            rest = rest.substr(0, at);
        }
        a[*v] = {complex_arg(rest, "--assign"), br};
    }
    if (!k.z.empty()) {
        if (s.frame().windows().size() != 1)
            throw ConfigError("--z needs a series in one variable; use --assign for several");
        a[s.frame().windows().begin()->first] = {complex_arg(k.z, "--z"), k.p};
    }
    for (const auto& [v, w] : s.frame().windows())
        if (!a.count(v)) throw ConfigError(std::string("no value for variable ") + var_name(v));
    Schedule sch{k.schedule == "weight" ? ScheduleKind::Weight : ScheduleKind::Degree, *wv};
    EvalStream st = specialize(s, a, sch);
    ConvergenceReport r = abs_convergence_probe(st.generator(), ProbeOptions{k.tol, 8, 1000000, false, true});
    json j;
    j["config"] = {{"series", k.series}, {"schedule", k.schedule}, {"tol", k.tol}};
    j["report"] = {{"status", verdict_name(r.status)}, {"value", format_complex(r.value)},
                   {"tail_estimate", r.tail_estimate}, {"ratio_estimate", r.ratio_estimate},
                   {"terms_used", r.terms_used},   {"notes", r.notes},
                   {"positive_real_point", st.positive_real_point()}};
    std::cout << verdict_name(r.status) << " value " << format_complex(r.value) << " tail " << r.tail_estimate
              << " groups " << r.terms_used << "\n";
    return write_report(c, "convergence-report", j, r.converged());
}

// ---- recover ----

struct RecoverCfg {
    std::string samples, support;
    double max_condition = 1e12;
    double tol = 1e-8;
};

int run_recover(const Common& c, const RecoverCfg& k) {
    json sj = load_json(k.samples), pj = load_json(k.support);
    std::vector<std::pair<BranchedPoint, cplx>> samples;
    Support S;
    try {
        for (const auto& e : sj)
            samples.push_back({{parse_complex(e.at("z").get<std::string>()), e.value("p", 0)},
                               parse_complex(e.at("value").get<std::string>())});
        for (const auto& e : pj) S.push_back({parse_rational(e.at("alpha").get<std::string>()), e.value("log", 0u)});
    } catch (const std::exception& e) {
        throw ConfigError(std::string("malformed samples or support: ") + e.what());
    }
    json j;
    j["config"] = {{"samples", k.samples}, {"support", k.support}, {"max_condition", k.max_condition}};
    try {
        RecoveryResult r = unique_expansion_recover(samples, S, k.max_condition);
        for (const auto& [key, v] : r.coefficients)
            j["coefficients"].push_back({{"alpha", to_string(key.first)}, {"log", key.second}, {"value", format_complex(v)}});
        j["residual"] = r.residual;
        j["condition_estimate"] = r.condition_estimate;
        std::cout << "recovered " << r.coefficients.size() << " coefficients, residual " << r.residual
                  << ", condition " << r.condition_estimate << "\n";
        return write_report(c, "recover", j, r.residual <= k.tol);
    } catch (const RankError& e) {
        j["error"] = e.what();
        j["condition_estimate"] = e.condition;
        std::cout << e.what() << "\n";
        return write_report(c, "recover", j, false);
    }
}

// ---- heis ----

struct HeisCfg {
    std::vector<std::string> charges{"1", "-1", "0"};
    std::vector<std::string> nil{"0", "0", "0"};
    std::vector<int> K{1};
    std::string lambda4;
    std::string insertion = "hw";
    std::string kind = "product";
    std::string z1, z2, z0;
    int p = 0, q = 0;
    long cutoff = 8;
    double tol = 1e-8;
    std::string mode = "numeric";
    std::string v = "h1";
    long frame = 3;
    std::string equation = "i2p";
    int j = 0;
};

heis::Triple make_triple(const HeisCfg& h) {
    if (h.charges.size() != 3) throw ConfigError("--charges needs three rationals");
    if (h.nil.size() != 3) throw ConfigError("--nil needs three rationals");
    if (h.K.size() != 1 && h.K.size() != 3) throw ConfigError("--K takes one or three integers");
    heis::ChargeSpec cs;
    for (int i = 0; i < 3; ++i) {
        cs.lambda[i] = rational_arg(h.charges[i], "--charges");
        cs.nu[i] = rational_arg(h.nil[i], "--nil");
        cs.K[i] = h.K.size() == 1 ? h.K[0] : h.K[i];
        if (cs.K[i] < 1 || cs.K[i] > 3) throw ConfigError("--K must be in [1, 3]");
    }
    if (!h.lambda4.empty()) cs.lambda4 = rational_arg(h.lambda4, "--lambda4");
    return cs.triple();
}

heis::Insertion make_insertion(const HeisCfg& h, const heis::Triple& t) {
    if (h.insertion == "hw") return heis::highest_weight(t);
    if (h.insertion == "desc") return heis::descendant_insertion(t);
    throw ConfigError("--insertion must be hw or desc");
}

heis::Kind make_kind(const HeisCfg& h) {
    if (h.kind == "product") return heis::Kind::Product;
    if (h.kind == "iterate") return heis::Kind::Iterate;
    throw ConfigError("--kind must be product or iterate");
}

// (za, zb) = (z1, z2) for the product, (z2, z0) for the iterate; z0 defaults to z1 - z2
std::pair<cplx, cplx> points(const HeisCfg& h, heis::Kind k, std::pair<cplx, cplx> dflt) {
    cplx z1 = h.z1.empty() ? cplx(0) : complex_arg(h.z1, "--z1");
    cplx z2 = h.z2.empty() ? cplx(0) : complex_arg(h.z2, "--z2");
    cplx z0 = h.z0.empty() ? cplx(0) : complex_arg(h.z0, "--z0");
    if (k == heis::Kind::Product) {
        if (h.z1.empty() && h.z2.empty()) return dflt;
        if (h.z1.empty() || h.z2.empty()) throw ConfigError("--z1 and --z2 are both needed");
        return {z1, z2};
    }
    if (h.z2.empty() && h.z0.empty() && h.z1.empty()) return dflt;
    if (h.z2.empty()) throw ConfigError("--z2 is needed");
    if (h.z0.empty()) {
        if (h.z1.empty()) throw ConfigError("--z0 (or --z1) is needed");
        z0 = z1 - z2;
    }
    return {z2, z0};
}

void require_domain(heis::Kind k, std::pair<cplx, cplx> z) {
    if (!(std::abs(z.first) > std::abs(z.second) && std::abs(z.second) > 0))
        throw DomainViolation(k == heis::Kind::Product ? "|z1|>|z2|>0 violated" : "|z2|>|z0|>0 violated");
}

json triple_json(const HeisCfg& h) {
    return {{"charges", h.charges}, {"nil", h.nil}, {"K", h.K}, {"insertion", h.insertion}};
}

int heis_result(const Common& c, const std::string& sub, json cfg, const std::vector<heis::Report>& rs) {
    json j;
    j["config"] = std::move(cfg);
    bool pass = !rs.empty();
    for (const auto& r : rs) {
        pass = pass && r.pass;
        j["results"].push_back(r.to_json());
        std::cout << r.name << ": " << (r.pass ? "pass" : "fail") << ", max deviation " << r.max_deviation
                  << (r.worst.empty() ? "" : " at " + r.worst) << "\n";
    }
    return write_report(c, sub, j, pass);
}

int run_correlator(const Common& c, const HeisCfg& h) {
    heis::Triple t = make_triple(h);
    heis::Insertion ins = make_insertion(h, t);
    heis::Kind k = make_kind(h);
    auto z = points(h, k, {2, 1});
    require_domain(k, z);
    if (h.cutoff < 0 || h.cutoff > 400) throw ConfigError("--cutoff must be in [0, 400]");
    bool prod = k == heis::Kind::Product;
    BranchedPoint a{z.first, prod ? h.p : h.q}, b{z.second, prod ? h.q : h.p};
    heis::SumResult r = prod ? heis::sum_product(t, ins, a, b) : heis::sum_iterate(t, ins, b, a);
    FormalSeries s = prod ? heis::product_correlator(t, ins, h.cutoff) : heis::iterate_correlator(t, ins, h.cutoff);
    json j;
    j["config"] = triple_json(h);
    j["config"]["kind"] = h.kind;
    j["config"]["point"] = {format_complex(z.first), format_complex(z.second)};
    j["config"]["branches"] = {h.p, h.q};
    j["config"]["cutoff"] = h.cutoff;
    j["value"] = format_complex(r.value);
    j["status"] = verdict_name(r.report.status);
    j["levels"] = r.levels;
    j["series"] = to_json(s);
    bool pass = r.converged();
    std::cout << h.kind << " correlator " << format_complex(r.value) << " (" << verdict_name(r.report.status) << ", "
              << r.levels << " levels)\n";
    if (ins.w1.is_highest_weight() && ins.w2.is_highest_weight() && ins.w3.is_highest_weight()) {
        auto cf = heis::closed_form_correlator(t, ins);
        cplx o = prod ? cf.product_chart(a, b) : cf.iterate_chart(b, a);
        double dev = heis::rel_dev(r.value, o);
        j["closed_form"] = format_complex(o);
        j["closed_form_deviation"] = dev;
        pass = pass && dev <= h.tol;
        std::cout << "closed form " << format_complex(o) << ", deviation " << dev << "\n";
    }
    return write_report(c, "heis-correlator", j, pass);
}

int run_equivalence(const Common& c, const HeisCfg& h) {
    heis::Triple t = make_triple(h);
    heis::Insertion ins = make_insertion(h, t);
    auto z = points(h, heis::Kind::Product, {1.2, 1.0});
    cplx z1 = z.first, z2 = z.second, z0 = z1 - z2;
    require_domain(heis::Kind::Product, z);
    require_domain(heis::Kind::Iterate, {z2, z0});
    // both charts agree only where the two branch conventions coincide
    if (!(z1.imag() == 0 && z2.imag() == 0 && z1.real() > 0 && z2.real() > 0))
        throw DomainViolation("equivalence needs z1, z2 on the positive real axis");
    auto p = heis::sum_product(t, ins, {z1, 0}, {z2, 0});
    auto i = heis::sum_iterate(t, ins, {z0, 0}, {z2, 0});
    heis::Report r;
    r.name = "product-vs-iterate";
    r.compared = 1;
    r.max_deviation = heis::rel_dev(p.value, i.value);
    r.notes = {"product " + format_complex(p.value), "iterate " + format_complex(i.value)};
    r.pass = p.converged() && i.converged() && r.max_deviation <= h.tol;
    json cfg = triple_json(h);
    cfg["z1"] = format_complex(z1);
    cfg["z2"] = format_complex(z2);
    cfg["tol"] = h.tol;
    return heis_result(c, "heis-equivalence", cfg, {r});
}

heis::VoaVec make_v(const HeisCfg& h) {
    if (h.v == "vacuum") return heis::VoaVec::Vacuum;
    if (h.v == "h1") return heis::VoaVec::H1;
    throw ConfigError("--v must be vacuum or h1");
}

int run_jacobi(const Common& c, const HeisCfg& h) {
    heis::Triple t = make_triple(h);
    heis::Insertion ins = make_insertion(h, t);
    heis::Kind k = make_kind(h);
    heis::JacobiOptions o;
    o.frame = h.frame;
    o.cutoff = h.cutoff;
    o.tol = h.tol;
    if (h.frame < 0 || h.frame > 4) throw ConfigError("--frame must be in [0, 4]");
    json cfg = triple_json(h);
    cfg["kind"] = h.kind;
    cfg["mode"] = h.mode;
    cfg["v"] = h.v;
    cfg["frame"] = h.frame;
    if (h.mode == "formal") {
        for (const auto& x : t.c)
            if (!x.nil_part().is_zero()) throw ConfigError("formal mode needs nil-free charges");
        return heis_result(c, "heis-jacobi", cfg, {heis::check_composite_jacobi_formal(k, make_v(h), t, ins, o)});
    }
    if (h.mode != "numeric") throw ConfigError("--mode must be formal or numeric");
    auto z = points(h, k, k == heis::Kind::Product ? std::pair<cplx, cplx>{2, 1} : std::pair<cplx, cplx>{1, 0.25});
    require_domain(k, z);
    cfg["point"] = {format_complex(z.first), format_complex(z.second)};
    return heis_result(c, "heis-jacobi", cfg,
                       {heis::check_composite_jacobi_numeric(k, make_v(h), t, ins, z.first, z.second, o)});
}

int run_tau(const Common& c, const HeisCfg& h) {
    heis::Triple t = make_triple(h);
    heis::Insertion ins = make_insertion(h, t);
    auto z = points(h, heis::Kind::Product, {2, 1});
    if (z.first == 0.0 || z.second == 0.0 || z.first == z.second) throw DomainViolation("z1, z2 nonzero and distinct");
    heis::CompatOptions o;
    o.frame = h.frame;
    o.tol = h.tol;
    if (h.frame < 0 || h.frame > 4) throw ConfigError("--frame must be in [0, 4]");
    heis::VoaVec v = make_v(h);
    auto lam = heis::TripleFunctional::from_product(t, ins.bra, z.first, z.second);
    std::vector<heis::Report> rs;
    rs.push_back(heis::check_Pz1z2_compatibility(lam, v, ins.w1, ins.w2, ins.w3, o));
    rs.push_back(heis::check_tau_intertwining(v, t, ins.bra, ins.w1, ins.w2, ins.w3, z.first, z.second, o));
    // negative control: a random functional must not pass
    if (v == heis::VoaVec::H1) {
        heis::Report neg = heis::check_Pz1z2_compatibility(heis::TripleFunctional::random(t, c.seed), v, ins.w1,
                                                           ins.w2, ins.w3, o);
        heis::Report ctl;
        ctl.name = "random-functional-control";
        ctl.pass = !neg.pass;
        ctl.max_deviation = neg.max_deviation;
        ctl.worst = neg.worst;
        ctl.compared = neg.compared;
        ctl.notes = {"a random functional is expected to fail compatibility"};
        rs.push_back(ctl);
    }
    json cfg = triple_json(h);
    cfg["v"] = h.v;
    cfg["frame"] = h.frame;
    cfg["point"] = {format_complex(z.first), format_complex(z.second)};
    return heis_result(c, "heis-tau-check", cfg, rs);
}

int run_omega(const Common& c, const HeisCfg& h) {
    heis::Triple t = make_triple(h);
    heis::Insertion ins = make_insertion(h, t);
    json cfg = triple_json(h);
    cfg["equation"] = h.equation;
    if (h.equation == "i2p") {
        auto z = points(h, heis::Kind::Iterate, {-2, 1});
        require_domain(heis::Kind::Iterate, z);
        cfg["point"] = {format_complex(z.first), format_complex(z.second)};
        return heis_result(c, "heis-omega", cfg, {heis::check_i2p(t, ins, z.first, z.second, h.tol)});
    }
    if (h.equation == "p2i") {
        auto z = points(h, heis::Kind::Product, {1.5, 1});
        require_domain(heis::Kind::Product, z);
        cfg["point"] = {format_complex(z.first), format_complex(z.second)};
        return heis_result(c, "heis-omega", cfg, {heis::check_p2i(t, ins, z.first, z.second, h.tol)});
    }
    throw ConfigError("--equation must be i2p or p2i");
}

int run_sl2(const Common& c, const HeisCfg& h) {
    heis::Triple t = make_triple(h);
    heis::Insertion ins = make_insertion(h, t);
    heis::Kind k = make_kind(h);
    if (h.j < -1 || h.j > 1) throw ConfigError("--j must be -1, 0 or 1");
    auto z = points(h, k, k == heis::Kind::Product ? std::pair<cplx, cplx>{2, 1} : std::pair<cplx, cplx>{1, 0.25});
    require_domain(k, z);
    json cfg = triple_json(h);
    cfg["kind"] = h.kind;
    cfg["j"] = h.j;
    cfg["point"] = {format_complex(z.first), format_complex(z.second)};
    return heis_result(c, "heis-sl2", cfg, {heis::check_sl2(k, h.j, t, ins, z.first, z.second, h.tol)});
}

void add_charge_flags(CLI::App* s, HeisCfg& h) {
    s->add_option("--charges", h.charges, "three rationals lambda1,lambda2,lambda3")->delimiter(',');
    s->add_option("--nil", h.nil, "nilpotent parts nu1,nu2,nu3")->delimiter(',');
    s->add_option("--K", h.K, "Jordan block sizes (one value or three)")->delimiter(',');
    s->add_option("--lambda4", h.lambda4, "charge of the bra module (default: the sum)");
    s->add_option("--insertion", h.insertion, "hw or desc");
    s->add_option("--tol", h.tol, "tolerance");
}

void add_point_flags(CLI::App* s, HeisCfg& h) {
    s->add_option("--z1", h.z1, "complex a+bi");
    s->add_option("--z2", h.z2, "complex a+bi");
    s->add_option("--z0", h.z0, "complex a+bi (iterate)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"formal calculus and free-boson verification suites"};
    app.require_subcommand(1);
    app.fallthrough();
    Common common;
    app.add_option("--out", common.out, "report path (default $FCALC_REPORT_DIR/<subcommand>.json)");
    app.add_option("--jobs", common.jobs, "worker threads")->check(CLI::Range(1u, 256u));
    app.add_option("--seed", common.seed, "seed for randomized controls");

    DeltaCfg dc;
    auto* vd = app.add_subcommand("verify-delta", "check a delta-function identity");
    vd->add_option("--id", dc.id, "l1, l2a, l2b, l3 or l4")->required();
    vd->add_option("--mode", dc.mode, "formal or numeric");
    vd->add_option("--z1", dc.z1, "complex a+bi");
    vd->add_option("--z2", dc.z2, "complex a+bi");
    vd->add_option("--frame", dc.frame, "exponent window");
    vd->add_option("--tol", dc.tol, "tolerance");
    vd->add_flag("--outside-domain", dc.outside, "probe a point outside the stated domain");

    ConvCfg cc;
    auto* cr = app.add_subcommand("convergence-report", "probe absolute convergence of a serialized series");
    cr->add_option("--series", cc.series, "serialized series file")->required();
    cr->add_option("--z", cc.z, "value for a one-variable series");
    cr->add_option("--p", cc.p, "branch index for --z");
    cr->add_option("--assign", cc.assign, "var=value[@p], repeatable");
    cr->add_option("--tol", cc.tol, "tail tolerance");
    cr->add_option("--schedule", cc.schedule, "weight or degree");
    cr->add_option("--weight-var", cc.weight_var, "variable grouped by the weight schedule");

    RecoverCfg rc;
    auto* rv = app.add_subcommand("recover", "recover expansion coefficients from samples");
    rv->add_option("--samples", rc.samples, "JSON list of {z, p, value}")->required();
    rv->add_option("--support", rc.support, "JSON list of {alpha, log}")->required();
    rv->add_option("--max-condition", rc.max_condition, "refuse worse-conditioned systems");
    rv->add_option("--tol", rc.tol, "residual tolerance");

    HeisCfg hc;
    auto* he = app.add_subcommand("heis", "free-boson correlator suites");
    he->require_subcommand(1);
    he->fallthrough();
    auto* hcor = he->add_subcommand("correlator", "sum a product or iterate correlator");
    add_charge_flags(hcor, hc);
    add_point_flags(hcor, hc);
    hcor->add_option("--kind", hc.kind, "product or iterate");
    hcor->add_option("--p", hc.p, "branch of the first point");
    hcor->add_option("--q", hc.q, "branch of the second point");
    hcor->add_option("--cutoff", hc.cutoff, "intermediate weight cutoff of the emitted series");
    auto* hjac = he->add_subcommand("jacobi", "composite Jacobi identity");
    add_charge_flags(hjac, hc);
    add_point_flags(hjac, hc);
    hjac->add_option("--kind", hc.kind, "product or iterate");
    hjac->add_option("--mode", hc.mode, "formal or numeric");
    hjac->add_option("--v", hc.v, "vacuum or h1");
    hjac->add_option("--frame", hc.frame, "exponent window");
    hjac->add_option("--cutoff", hc.cutoff, "initial mode window");
    auto* htau = he->add_subcommand("tau-check", "compatibility of w4' o F");
    add_charge_flags(htau, hc);
    add_point_flags(htau, hc);
    htau->add_option("--v", hc.v, "vacuum or h1");
    htau->add_option("--frame", hc.frame, "exponent window");
    auto* heq = he->add_subcommand("equivalence", "product against iterate on the overlap");
    add_charge_flags(heq, hc);
    add_point_flags(heq, hc);
    auto* hom = he->add_subcommand("omega", "the skew-symmetry equations");
    add_charge_flags(hom, hc);
    add_point_flags(hom, hc);
    hom->add_option("--equation", hc.equation, "i2p or p2i");
    auto* hsl = he->add_subcommand("sl2", "sl(2) bracket relations");
    add_charge_flags(hsl, hc);
    add_point_flags(hsl, hc);
    hsl->add_option("--kind", hc.kind, "product or iterate");
    hsl->add_option("--j", hc.j, "-1, 0 or 1");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    if (hc.tol <= 0 || dc.tol <= 0) {
        std::cerr << "error: --tol must be positive\n";
        return 2;
    }
    try {
        if (*vd) return run_verify_delta(common, dc);
        if (*cr) return run_convergence(common, cc);
        if (*rv) return run_recover(common, rc);
        if (*hcor) return run_correlator(common, hc);
        if (*hjac) return run_jacobi(common, hc);
        if (*htau) return run_tau(common, hc);
        if (*heq) return run_equivalence(common, hc);
        if (*hom) return run_omega(common, hc);
        if (*hsl) return run_sl2(common, hc);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DomainViolation& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "failed: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
