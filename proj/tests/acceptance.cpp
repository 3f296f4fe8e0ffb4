// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include "sirbif/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace sirbif;
using contin::PointKind;
using model::ParamId;
using model::Params;
namespace fs = std::filesystem;

namespace {

Params at(double gamma, double rho)
{
    Params p;
    p.gamma = gamma;
    p.rho = rho;
    return p;
}

std::string g(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.7g", v);
    return buf;
}

/// Accumulates clause results for one criterion.
struct Verdict {
    bool ok = true;
    std::vector<std::string> notes;

    void check(bool cond, const std::string& what)
    {
        ok = ok && cond;
        notes.push_back((cond ? "" : "FAILED ") + what);
    }
    void within(const std::string& what, double got, double want, double tol)
    {
        check(std::isfinite(got) && std::abs(got - want) <= tol,
              what + " " + g(got) + " (want " + g(want) + " +- " + g(tol) + ")");
    }
};

const contin::SpecialPoint* nearest(const std::vector<cli::SweepEvent>& ev, PointKind k, double want,
                                    std::size_t* index = nullptr)
{
    const contin::SpecialPoint* best = nullptr;
    double d = INFINITY;
    for (std::size_t i = 0; i < ev.size(); ++i)
        if (ev[i].point.kind == k && std::abs(ev[i].value - want) < d) {
            d = std::abs(ev[i].value - want);
            best = &ev[i].point;
            if (index)
                *index = i;
        }
    return best;
}

double value(const contin::SpecialPoint* sp, ParamId a)
{
    return sp ? (a == ParamId::Gamma ? sp->gamma : sp->rho) : NAN;
}

std::vector<cycles::Cycle> all_cycles;  // every converged cycle met on the way, for the property suite

void collect(const cli::SweepResult& r)
{
    for (const auto& b : r.cycles)
        all_cycles.insert(all_cycles.end(), b.cycles.begin(), b.cycles.end());
}

Verdict criterion1()
{
    Verdict v;
    const auto p = at(0.3, 0.1);
    const auto eqs = model::endemic_equilibria(p);
    v.check(!eqs.empty(), "endemic start found");
    if (eqs.empty())
        return v;
    const auto b = contin::continue_bidirectional(p, eqs.back(), ParamId::Gamma, {0.0, 1.0});
    const contin::SpecialPoint *lp = nullptr, *hb = nullptr;
    for (const auto& sp : b.special) {
        if (sp.kind == PointKind::LP && (!lp || std::abs(sp.gamma - 0.356902) < std::abs(lp->gamma - 0.356902)))
            lp = &sp;
        if (sp.kind == PointKind::HB && (!hb || std::abs(sp.gamma - 0.349638) < std::abs(hb->gamma - 0.349638)))
            hb = &sp;
    }
    v.within("LP gamma", value(lp, ParamId::Gamma), 0.356902, 1e-4);
    v.within("HB gamma", value(hb, ParamId::Gamma), 0.349638, 1e-4);
    return v;
}

Verdict criterion2()
{
    Verdict v;
    cli::RunConfig cfg;
    cfg.cycle_slices = 0;
    const auto d = cli::compute_diagram(cfg);
    for (const auto& f : d.failures)
        v.check(false, "diagram failure: " + f);
    auto marker = [&](const std::string& label) -> const contin::SpecialPoint* {
        for (const auto& m : d.markers)
            if (m.label == label)
                return &m.point;
        return nullptr;
    };
    const struct {
        const char* label;
        double gamma, rho;
    } want[] = {{"BT1", 0.404023, 0.229494}, {"BT2", 0.164201, 0.002600}, {"GH1", 0.372814, 0.134955},
                {"GH2", 0.163907, 0.002496}};
    for (const auto& w : want) {
        const auto* m = marker(w.label);
        if (!m) {
            v.check(false, std::string(w.label) + " not detected");
            continue;
        }
        v.within(std::string(w.label) + " gamma", m->gamma, w.gamma, 1e-3);
        v.within(std::string(w.label) + " rho", m->rho, w.rho, 1e-3);
    }
    // BTs seen from the Hopf curve pair up with those from the fold curve.
    std::vector<contin::SpecialPoint> from_fold, from_hopf;
    if (d.fold)
        for (const auto& sp : d.fold->special)
            if (sp.kind == PointKind::BT)
                from_fold.push_back(sp);
    if (d.hopf)
        for (const auto& sp : d.hopf->special)
            if (sp.kind == PointKind::BT)
                from_hopf.push_back(sp);
    bool paired = !from_fold.empty() && from_fold.size() == from_hopf.size();
    double worst = 0.0;
    for (const auto& a : from_fold) {
        double best = INFINITY;
        for (const auto& b : from_hopf)
            best = std::min(best, std::max(std::abs(a.gamma - b.gamma), std::abs(a.rho - b.rho)));
        worst = std::max(worst, best);
    }
    v.check(paired && worst <= 1e-3, "BT sets fold/Hopf: " + std::to_string(from_fold.size()) + " vs " +
                                         std::to_string(from_hopf.size()) + ", max gap " + g(worst));
    return v;
}

/// Checks kinds appear at the wanted values and in the listed order along the sweep.
void ordered(Verdict& v, const cli::SweepResult& r, ParamId a,
             const std::vector<std::tuple<PointKind, double, double>>& want)
{
    std::size_t prev = 0;
    bool first = true, in_order = true;
    for (const auto& [k, val, tol] : want) {
        std::size_t idx = 0;
        const auto* sp = nearest(r.events, k, val, &idx);
        v.within(std::string(contin::to_string(k)), value(sp, a), val, tol);
        if (sp) {
            in_order = in_order && (first || idx > prev);
            prev = idx;
            first = false;
        }
    }
    v.check(in_order, "event order");
}

double l1_of(const contin::SpecialPoint* sp)
{
    if (!sp)
        return NAN;
    const auto it = sp->aux.find("l1");
    return it == sp->aux.end() ? NAN : it->second;
}

Verdict criterion3()
{
    Verdict v;
    const auto r = cli::run_sweep(at(0.392, 0.19), ParamId::Rho, {0.19, 0.17});
    collect(r);
    ordered(v, r, ParamId::Rho,
            {{PointKind::HOM, 0.183711, 2e-3}, {PointKind::HB, 0.181354, 2e-4}, {PointKind::LP, 0.176117, 1e-4}});
    const double l1 = l1_of(nearest(r.events, PointKind::HB, 0.181354));
    v.check(l1 > 0.0, "HB subcritical (l1 = " + g(l1) + ")");
    return v;
}

Verdict criterion4()
{
    Verdict v;
    const auto r = cli::run_sweep(at(0.162, 0.007), ParamId::Rho, {0.007, 0.001});
    collect(r);
    ordered(v, r, ParamId::Rho, {{PointKind::HB, 0.002408, 2e-4}, {PointKind::LP, 0.001573, 1e-4}});
    const double l1 = l1_of(nearest(r.events, PointKind::HB, 0.002408));
    v.check(l1 < 0.0, "HB supercritical (l1 = " + g(l1) + ")");
    return v;
}

Verdict criterion5()
{
    Verdict v;
    const auto r = cli::run_sweep(at(0.36, 0.13), ParamId::Gamma, {0.36, 0.38});
    collect(r);
    ordered(v, r, ParamId::Gamma,
            {{PointKind::HOM, 0.369662, 2e-3}, {PointKind::HB, 0.370127, 2e-4}, {PointKind::LPC, 0.370138, 2e-4}});
    const double l1 = l1_of(nearest(r.events, PointKind::HB, 0.370127));
    v.check(l1 > 0.0, "HB subcritical (l1 = " + g(l1) + ")");
    return v;
}

Verdict criterion6()
{
    Verdict v;
    for (double rho : {0.01, 0.1, 0.25}) {
        const auto p = at(0.1, rho);
        const auto b =
            contin::continue_equilibrium(p, model::disease_free_equilibrium(p), ParamId::Gamma, {0.0, 0.5});
        const contin::SpecialPoint* bp = nullptr;
        for (const auto& sp : b.special)
            if (sp.kind == PointKind::BP)
                bp = &sp;
        v.within("BP at rho=" + g(rho), value(bp, ParamId::Gamma), 4969.0 / 31000.0, 1e-6);
    }
    return v;
}

Verdict criterion7()
{
    Verdict v;
    for (const auto& pr : cli::presets()) {
        const auto s = cli::summarize_scenario(at(pr.gamma, pr.rho));
        for (const auto& c : s.census.cycles)
            all_cycles.push_back(c);
        const std::string diff = cli::compare_scenario(s, pr.expected);
        v.check(diff.empty(), pr.id + (diff.empty() ? "" : " (" + diff + ")"));
    }
    return v;
}

/// Endemic equilibria from a dense sign scan of the I-equation after
/// eliminating S; independent of the polynomial route.
std::vector<model::State2> scan_equilibria(const Params& p)
{
    auto s_of = [&p](double i) {
        // lambda - mu S - beta S I / (1 + gamma S) = 0, quadratic in S.
        const double a = p.mu * p.gamma, b = p.mu + p.beta * i - p.lambda * p.gamma, c = -p.lambda;
        return a == 0.0 ? -c / b : (-b + std::sqrt(b * b - 4 * a * c)) / (2 * a);
    };
    auto h = [&](double i) {
        const double s = s_of(i);
        return p.beta * s / (1 + p.gamma * s) - (p.mu + p.mu_prime) - p.alpha / (1 + p.rho * i);
    };
    std::vector<model::State2> out;
    const double top = p.lambda / (p.mu + p.mu_prime);
    const int n = 200000;
    double x0 = top * 1e-9, h0 = h(x0);
    for (int k = 1; k <= n; ++k) {
        const double x1 = top * k / n, h1 = h(x1);
        if ((h0 > 0) != (h1 > 0)) {
            double a = x0, b = x1, ha = h0;
            for (int it = 0; it < 200 && b - a > 1e-15 * b; ++it) {
                const double m = 0.5 * (a + b), hm = h(m);
                if ((hm > 0) == (ha > 0)) {
                    a = m;
                    ha = hm;
                } else {
                    b = m;
                }
            }
            const double i = 0.5 * (a + b);
            out.push_back({s_of(i), i});
        }
        x0 = x1;
        h0 = h1;
    }
    return out;
}

Verdict criterion8()
{
    Verdict v;
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> ug(0.0, 1.0), us(0.0, 1500.0), ui(0.0, 120.0);

    double worst_pop = 0.0;
    for (int k = 0; k < 12; ++k) {
        const Params p = at(ug(rng), ug(rng));
        const auto tr = odeflow::integrate(p, {us(rng), ui(rng), 50.0 * ug(rng)}, 3000.0);
        worst_pop = std::max(worst_pop, odeflow::population_law_residual(p, tr));
    }
    v.check(worst_pop <= 1e-6, "population law max rel. deviation " + g(worst_pop));

    double worst_jac = 0.0;
    for (int k = 0; k < 200; ++k) {
        const Params p = at(ug(rng), ug(rng));
        const model::State2 x{us(rng) + 1.0, ui(rng) + 0.1};
        const auto j = model::jacobian_reduced(x, p);
        for (int c = 0; c < 2; ++c) {
            const double hstep = 1e-6 * std::max(1.0, std::abs(x[c]));
            auto xp = x, xm = x;
            xp[c] += hstep;
            xm[c] -= hstep;
            const auto fp = model::rhs_reduced(xp, p), fm = model::rhs_reduced(xm, p);
            for (int r = 0; r < 2; ++r) {
                const double fd = (fp[r] - fm[r]) / (2 * hstep);
                worst_jac = std::max(worst_jac, std::abs(fd - j[r][c]) / std::max(1.0, std::abs(j[r][c])));
            }
        }
    }
    v.check(worst_jac <= 1e-6, "Jacobian vs central differences " + g(worst_jac));

    int agree = 0;
    for (int k = 0; k < 50; ++k) {
        const Params p = at(cli::gamma0 + (0.42 - cli::gamma0) * ug(rng), cli::rho0 + (0.27 - cli::rho0) * ug(rng));
        const auto eqs = model::endemic_equilibria(p);
        const auto oracle = scan_equilibria(p);
        bool same = eqs.size() == oracle.size();
        for (std::size_t i = 0; same && i < eqs.size(); ++i)
            same = odeflow::scaled_distance(eqs[i].planar(), oracle[i]) <= 1e-8;
        agree += same;
    }
    v.check(agree == 50, "endemic equilibria vs scan oracle " + std::to_string(agree) + "/50");

    double worst_triv = 0.0;
    for (const auto& c : all_cycles)
        worst_triv = std::max(worst_triv, std::abs(c.multipliers[0] - 1.0));
    v.check(!all_cycles.empty() && worst_triv <= 1e-4,
            "trivial multiplier over " + std::to_string(all_cycles.size()) + " cycles, max |mu1-1| " + g(worst_triv));

    bool l1_ok = true;
    for (double a : {1.0, -1.0}) {
        auto f = [a](const model::State2& x) {
            const double r2 = x[0] * x[0] + x[1] * x[1];
            return model::State2{-x[1] + a * x[0] * r2, x[0] + a * x[1] * r2};
        };
        const double l1 = codim2::lyapunov_l1(f, {0.0, 0.0}, model::Mat2{{{0.0, -1.0}, {1.0, 0.0}}}, 1.0);
        l1_ok = l1_ok && (l1 > 0.0) == (a > 0.0);
    }
    v.check(l1_ok, "l1 sign on the normal form for a = +1, -1");

    // Same special points from both ends of the e1 branch at rho = 0.1.
    const auto p = at(0.3, 0.1);
    const auto fwd = contin::continue_equilibrium(p, model::endemic_equilibria(p).back(), ParamId::Gamma, {0.3, 0.42});
    const auto q = at(0.34, 0.1);
    const auto rev = contin::continue_equilibrium(q, model::endemic_equilibria(q).front(), ParamId::Gamma, {0.3, 0.42});
    double worst_rev = 0.0;
    int matched = 0;
    for (const auto& a : fwd.special)
        for (const auto& b : rev.special)
            if (a.kind == b.kind) {
                worst_rev = std::max(worst_rev, std::abs(a.gamma - b.gamma));
                ++matched;
            }
    v.check(matched >= 2 && worst_rev <= 1e-7,
            "direction reversal: " + std::to_string(matched) + " points, max gap " + g(worst_rev));
    return v;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Verdict criterion9()
{
    Verdict v;
    const fs::path base = fs::temp_directory_path() / ("sirbif-acceptance-" + std::to_string(::getpid()));
    fs::remove_all(base);
    cli::RunConfig cfg = cli::load_config(cli::json::object());
    cfg.out_dir = (base / "a").string();
    cli::cmd_diagram(cfg);
    cfg.out_dir = (base / "b").string();
    cli::cmd_diagram(cfg);
    int files = 0, same = 0;
    for (const auto& e : fs::directory_iterator(base / "a")) {
        const auto ext = e.path().extension();
        if (ext != ".csv" && ext != ".svg")
            continue;
        ++files;
        same += slurp(e.path()) == slurp(base / "b" / e.path().filename());
    }
    v.check(files >= 5 && same == files, std::to_string(same) + "/" + std::to_string(files) + " CSV/SVG files identical");
    fs::remove_all(base);
    return v;
}

}  // namespace

int main()
{
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
        {"1 codim-1 points at rho=0.1", criterion1},
        {"2 codim-2 points BT1 BT2 GH1 GH2 and BT consistency", criterion2},
        {"3 gamma=0.392 sweep: HOM, subcritical HB, LP", criterion3},
        {"4 gamma=0.162 sweep: supercritical HB, LP", criterion4},
        {"5 rho=0.13 sweep: HOM, subcritical HB, LPC", criterion5},
        {"6 branch point on e0 at gamma0 for three rho", criterion6},
        {"7 scenario classification P1..P15", criterion7},
        {"8 property suite", criterion8},
        {"9 diagram determinism", criterion9},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = fn();
        } catch (const std::exception& e) {
            v.check(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::string detail;
        for (const auto& n : v.notes)
            detail += (detail.empty() ? "" : "; ") + n;
        std::printf("%s criterion %s [%.1fs]: %s\n", v.ok ? "PASS" : "FAIL", name.c_str(), secs, detail.c_str());
        std::fflush(stdout);
        failed += !v.ok;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed ? 1 : 0;
}
