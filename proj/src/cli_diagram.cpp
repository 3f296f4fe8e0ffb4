#include "cli_internal.hpp"

#include <algorithm>
#include <cmath>

namespace sirbif::cli {

using detail::CsvRow;

namespace {

/// LP and HB on the endemic gamma-branch at fixed rho, nearest to gamma_hint
/// (any when the hint is NaN).
std::pair<std::optional<contin::SpecialPoint>, std::optional<contin::SpecialPoint>>
codim1_seeds(const Params& base, double gamma_hint, double rho)
{
    Params p = base;
    p.rho = rho;
    // The first gamma sample whose endemic equilibrium the corrector accepts;
    // samples right at a fold are singular and skipped.
    std::optional<contin::Branch> found;
    std::string last_error = "no endemic equilibrium for gamma in [0,1]";
    for (int k = 0; k <= 100 && !found; ++k) {
        p.gamma = k / 100.0;
        const auto eqs = model::endemic_equilibria(p);
        if (eqs.empty())
            continue;
        try {
            found = contin::continue_bidirectional(p, eqs.back(), ParamId::Gamma, {0.0, 1.0});
        } catch (const contin::ContinuationError& e) {
            last_error = e.what();
        }
    }
    if (!found)
        throw std::runtime_error(last_error);
    const contin::Branch& br = *found;
    std::optional<contin::SpecialPoint> lp, hb;
    auto closer = [&](const contin::SpecialPoint& a, const std::optional<contin::SpecialPoint>& b) {
        return !b || (std::isfinite(gamma_hint) && std::abs(a.gamma - gamma_hint) < std::abs(b->gamma - gamma_hint));
    };
    for (const auto& sp : br.special) {
        if (sp.kind == contin::PointKind::LP && closer(sp, lp))
            lp = sp;
        if (sp.kind == contin::PointKind::HB && closer(sp, hb))
            hb = sp;
    }
    return {lp, hb};
}

bool same_location(const contin::SpecialPoint& sp, const codim2::CurvePoint& cp)
{
    return std::abs(sp.gamma - cp.gamma) + std::abs(sp.rho - cp.rho) < 1e-10;
}

std::vector<CsvRow> curve_rows(const codim2::Codim2Curve& c)
{
    std::vector<CsvRow> rows;
    for (std::size_t i = 0; i < c.points.size(); ++i) {
        const auto& cp = c.points[i];
        CsvRow row{cp.gamma, cp.rho, cp.state, ""};
        for (const auto& sp : c.special)
            if (same_location(sp, cp))
                row.type = std::string(contin::to_string(sp.kind));
        rows.push_back(row);
        for (const auto& sp : c.special) {
            if (static_cast<std::size_t>(sp.aux.at("segment")) != i)
                continue;
            if (same_location(sp, cp) || (i + 1 < c.points.size() && same_location(sp, c.points[i + 1])))
                continue;
            rows.push_back({sp.gamma, sp.rho, sp.state, std::string(contin::to_string(sp.kind))});
        }
    }
    return rows;
}

std::vector<CsvRow> sample_rows(const std::vector<contin::SpecialPoint>& pts)
{
    std::vector<CsvRow> rows;
    for (const auto& sp : pts)
        rows.push_back({sp.gamma, sp.rho, sp.state, std::string(contin::to_string(sp.kind))});
    return rows;
}

}  // namespace

using Pt = std::pair<double, double>;

std::vector<std::pair<std::vector<Pt>, bool>> detail::hopf_pieces(const codim2::Codim2Curve& c)
{
    std::vector<std::pair<std::vector<Pt>, bool>> pieces;
    if (c.points.empty())
        return pieces;
    auto sign_of = [](double l1, bool prev) { return std::isfinite(l1) ? l1 > 0.0 : prev; };
    bool positive = false;
    for (const auto& cp : c.points)
        if (std::isfinite(cp.l1)) {
            positive = cp.l1 > 0.0;
            break;
        }
    pieces.push_back({{{c.points[0].gamma, c.points[0].rho}}, positive});
    for (std::size_t i = 1; i < c.points.size(); ++i) {
        const auto& cp = c.points[i];
        const bool s = sign_of(cp.l1, positive);
        if (s != positive) {
            std::optional<Pt> gh;
            for (const auto& sp : c.special)
                if (sp.kind == contin::PointKind::GH && static_cast<std::size_t>(sp.aux.at("segment")) == i - 1)
                    gh = Pt{sp.gamma, sp.rho};
            if (!gh) {
                const auto& a = c.points[i - 1];
                const double t = a.l1 / (a.l1 - cp.l1);
                gh = Pt{a.gamma + t * (cp.gamma - a.gamma), a.rho + t * (cp.rho - a.rho)};
            }
            pieces.back().first.push_back(*gh);
            pieces.push_back({{*gh}, s});
            positive = s;
        }
        pieces.back().first.push_back({cp.gamma, cp.rho});
    }
    return pieces;
}

DiagramResult compute_diagram(const RunConfig& cfg)
{
    DiagramResult res;
    const Params base = cfg.params;
    std::vector<std::pair<double, double>> seeds = cfg.seeds;
    if (seeds.empty())
        for (double r : {0.1, 0.05, 0.2, 0.01})
            seeds.emplace_back(std::numeric_limits<double>::quiet_NaN(), r);
    std::optional<contin::SpecialPoint> lp, hb;
    std::vector<std::string> seed_errors;
    for (const auto& [g, r] : seeds) {
        if (lp && hb)
            break;
        try {
            auto [l, h] = codim1_seeds(base, g, r);
            if (!lp)
                lp = l;
            if (!hb)
                hb = h;
        } catch (const std::exception& e) {
            seed_errors.push_back("seed search at rho=" + fmt9(r) + ": " + e.what());
        }
    }
    if (!lp || !hb)
        res.failures.insert(res.failures.end(), seed_errors.begin(), seed_errors.end());
    if (!lp)
        res.failures.push_back("fold curve: no LP seed found");
    if (!hb)
        res.failures.push_back("hopf curve: no HB seed found");

    codim2::CurveOptions copt;
    copt.h0 = cfg.h0;
    copt.hmax = cfg.hmax;
    copt.newton_tol = cfg.newton_tol;

    // Curves (two tasks) and the HOM/LPC parameter slices share one pool.
    const std::size_t n = static_cast<std::size_t>(std::max(0, cfg.cycle_slices));
    std::vector<std::optional<codim2::Codim2Curve>> curves(2);
    std::vector<std::string> curve_errors(2);
    std::vector<SweepResult> slices(2 * n);
    std::vector<std::string> slice_errors(2 * n);
    detail::parallel_for(2 + 2 * n, cfg.threads, [&](std::size_t task) {
        if (task < 2) {
            const auto& seed = task == 0 ? lp : hb;
            if (!seed)
                return;
            try {
                curves[task] = task == 0 ? codim2::continue_fold_curve(*seed, base, copt)
                                         : codim2::continue_hopf_curve(*seed, base, copt);
            } catch (const std::exception& e) {
                curve_errors[task] = std::string(task == 0 ? "fold" : "hopf") + " curve: " + e.what();
            }
            return;
        }
        const std::size_t k = (task - 2) % n;
        const bool rho_slice = task - 2 < n;
        const auto& w = rho_slice ? cfg.rho_window : cfg.gamma_window;
        const double v = w.first + (static_cast<double>(k) + 0.5) / static_cast<double>(n) * (w.second - w.first);
        Params p = base;
        try {
            if (rho_slice) {
                p.rho = v;
                slices[task - 2] = run_sweep(p, ParamId::Gamma, cfg.gamma_window, cfg);
            } else {
                p.gamma = v;
                slices[task - 2] = run_sweep(p, ParamId::Rho, cfg.rho_window, cfg);
            }
        } catch (const std::exception& e) {
            slice_errors[task - 2] = "slice " + std::string(rho_slice ? "rho=" : "gamma=") + fmt9(v) + ": " + e.what();
        }
    });
    res.fold = std::move(curves[0]);
    res.hopf = std::move(curves[1]);
    for (const auto& e : curve_errors)
        if (!e.empty())
            res.failures.push_back(e);
    for (const auto& c : {res.fold, res.hopf})
        if (c && c->truncated)
            res.failures.push_back(std::string(codim2::to_string(c->kind)) + " curve truncated: " + c->warning);
    for (std::size_t k = 0; k < slices.size(); ++k) {
        if (!slice_errors[k].empty())
            res.failures.push_back(slice_errors[k]);
        for (const auto& ev : slices[k].events) {
            const auto& sp = ev.point;
            if (sp.kind == contin::PointKind::LPC)
                res.lpc.push_back(sp);
            else if (sp.kind == contin::PointKind::HOM && sp.aux.count("extrapolated") &&
                     sp.aux.at("extrapolated") == 1.0)
                res.homoclinic.push_back(sp);
        }
    }

    auto add_markers = [&res](std::vector<contin::SpecialPoint> pts, const std::string& prefix) {
        std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.gamma > b.gamma; });
        for (std::size_t i = 0; i < pts.size(); ++i)
            res.markers.push_back({prefix + std::to_string(i + 1), pts[i]});
    };
    std::vector<contin::SpecialPoint> bts, ghs;
    if (res.fold)
        for (const auto& sp : res.fold->special)
            if (sp.kind == contin::PointKind::BT)
                bts.push_back(sp);
    if (res.hopf) {
        for (const auto& sp : res.hopf->special)
            if (sp.kind == contin::PointKind::GH)
                ghs.push_back(sp);
        if (bts.empty())
            for (const auto& sp : res.hopf->special)
                if (sp.kind == contin::PointKind::BT)
                    bts.push_back(sp);
    }
    add_markers(bts, "BT");
    add_markers(ghs, "GH");
    return res;
}

json cmd_diagram(const RunConfig& cfg)
{
    const DiagramResult d = compute_diagram(cfg);
    const std::string name = detail::stem(cfg, "diagram");
    json files = json::array();
    auto emit = [&](const std::string& suffix, const std::string& content) {
        write_atomic(detail::path_in(cfg, name + suffix), content);
        files.push_back(name + suffix);
    };
    json curves = json::object();
    auto curve_summary = [&](const codim2::Codim2Curve& c) {
        json j = {{"points", c.points.size()}, {"truncated", c.truncated}};
        if (!c.points.empty()) {
            j["first"] = {detail::num(c.points.front().gamma), detail::num(c.points.front().rho)};
            j["last"] = {detail::num(c.points.back().gamma), detail::num(c.points.back().rho)};
        }
        json sp = json::array();
        for (const auto& s : c.special)
            sp.push_back(detail::special_json(s));
        j["special"] = sp;
        return j;
    };
    if (d.fold) {
        emit(".fold.branch.csv", detail::branch_csv(curve_rows(*d.fold), cfg.params));
        curves["fold"] = curve_summary(*d.fold);
    }
    if (d.hopf) {
        emit(".hopf.branch.csv", detail::branch_csv(curve_rows(*d.hopf), cfg.params));
        json s = curve_summary(*d.hopf);
        json l1 = json::array();
        for (const auto& cp : d.hopf->points)
            l1.push_back(detail::num(cp.l1));
        s["l1"] = l1;
        curves["hopf"] = s;
    }
    emit(".homoclinic.branch.csv", detail::branch_csv(sample_rows(d.homoclinic), cfg.params));
    emit(".lpc.branch.csv", detail::branch_csv(sample_rows(d.lpc), cfg.params));
    curves["homoclinic_samples"] = d.homoclinic.size();
    curves["lpc_samples"] = d.lpc.size();

    detail::SvgPlot plot(cfg.gamma_window.first, cfg.gamma_window.second, cfg.rho_window.first,
                         cfg.rho_window.second, "γ (cautiousness)", "ρ (bed occupancy)",
                         "Two-parameter bifurcation diagram");
    if (d.fold) {
        std::vector<Pt> pts;
        for (const auto& cp : d.fold->points)
            pts.emplace_back(cp.gamma, cp.rho);
        plot.polyline(pts, "blue", 2.0);
    }
    if (d.hopf)
        for (const auto& [pts, positive] : detail::hopf_pieces(*d.hopf))
            plot.polyline(pts, "black", 2.0, positive ? "7,5" : "");
    for (const auto& sp : d.homoclinic)
        plot.marker(sp.gamma, sp.rho, "circle", "red", "red", 2.5);
    for (const auto& sp : d.lpc)
        plot.marker(sp.gamma, sp.rho, "circle", "green", "green", 2.5);
    for (const auto& m : d.markers) {
        plot.marker(m.point.gamma, m.point.rho, m.label.rfind("BT", 0) == 0 ? "square" : "diamond", "white",
                    "black", 5.0);
        plot.label(m.point.gamma, m.point.rho, m.label, "black");
    }
    plot.legend({{"blue", "fold (LP)"},
                 {"black", "Hopf, l1 < 0 solid"},
                 {"black", "Hopf, l1 > 0 dashed"},
                 {"red", "homoclinic"},
                 {"green", "fold of cycles"}});
    emit(".svg", plot.str());

    json markers = json::array();
    for (const auto& m : d.markers) {
        json j = detail::special_json(m.point);
        j["label"] = m.label;
        markers.push_back(j);
    }
    json report = {{"command", "diagram"},
                   {"params", detail::params_json(cfg.params)},
                   {"window",
                    {{"gamma", {detail::num(cfg.gamma_window.first), detail::num(cfg.gamma_window.second)}},
                     {"rho", {detail::num(cfg.rho_window.first), detail::num(cfg.rho_window.second)}}}},
                   {"markers", markers},
                   {"curves", curves},
                   {"failures", d.failures},
                   {"files", files}};
    files.push_back(name + ".report.json");
    report["files"] = files;
    write_atomic(detail::path_in(cfg, name + ".report.json"), report.dump(2) + "\n");
    return report;
}

}  // namespace sirbif::cli
