#include "cli_internal.hpp"

#include "sirbif/dopri5.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace sirbif::cli {

using detail::num;

namespace {

std::string lower_label(model::Label l)
{
    std::string s(model::to_string(l));
    s[0] = 'e';
    return s;
}

bool is_stable(model::Stability s)
{
    return s == model::Stability::StableNode || s == model::Stability::StableSpiral;
}

json equilibrium_json(const model::EquilibriumPoint& eq)
{
    json ev = json::array();
    for (const auto& z : eq.eigenvalues)
        ev.push_back({num(z.real()), num(z.imag())});
    return {{"label", std::string(model::to_string(eq.label))},
            {"S", num(eq.state[0])},
            {"I", num(eq.state[1])},
            {"R", num(eq.state[2])},
            {"eigenvalues", ev},
            {"class", std::string(model::to_string(eq.stability))}};
}

json cycle_json(const cycles::Cycle& c)
{
    double s_lo = c.mesh[0][0], s_hi = s_lo, i_lo = c.mesh[0][1], i_hi = i_lo;
    for (const auto& x : c.mesh) {
        s_lo = std::min(s_lo, x[0]);
        s_hi = std::max(s_hi, x[0]);
        i_lo = std::min(i_lo, x[1]);
        i_hi = std::max(i_hi, x[1]);
    }
    return {{"stability", std::string(cycles::to_string(c.stability))},
            {"period", num(c.period)},
            {"multiplier", num(c.multipliers[1].real())},
            {"trivial_multiplier", num(c.multipliers[0].real())},
            {"amplitude", num(cycles::amplitude(c))},
            {"S_range", {num(s_lo), num(s_hi)}},
            {"I_range", {num(i_lo), num(i_hi)}}};
}

cycles::CensusOptions census_options(const RunConfig& cfg)
{
    cycles::CensusOptions o;
    o.continuation.cycle.newton_tol = cfg.shooting_tol;
    return o;
}

json scenario_json(const ScenarioSummary& s)
{
    json cyc = json::array();
    for (const auto& c : s.census.cycles)
        cyc.push_back(cycle_json(c));
    json nearby = json::array();
    for (const auto& sp : s.census.nearby)
        nearby.push_back(detail::special_json(sp));
    return {{"endemic_equilibria", s.endemic.size()},
            {"cycles", cyc},
            {"homoclinic", s.census.homoclinic},
            {"nearby_special_points", nearby},
            {"attractors", s.attractors}};
}

json expected_json(const ExpectedScenario& e)
{
    json cyc = json::array();
    for (auto s : e.cycles)
        cyc.push_back(std::string(cycles::to_string(s)));
    return {{"endemic_equilibria", e.endemic},
            {"cycles", cyc},
            {"homoclinic", e.homoclinic},
            {"attractors", e.attractors}};
}

/// Backward-time orbit from x0 until it leaves the enlarged window, turns
/// negative or runs out of time.
std::vector<model::State2> backward_orbit(const Params& p, const model::State2& x0, const odeflow::Window& w,
                                          double t_max)
{
    ode::StepOptions so;
    so.rel_tol = 1e-9;
    so.abs_tol = 1e-9;
    so.h_max = 5.0;
    ode::DormandPrince5<2> dp(
        [&p](double, const model::State2& x) {
            auto f = model::rhs_reduced(x, p);
            return model::State2{-f[0], -f[1]};
        },
        0.0, x0, so);
    const double ds = w.s_max - w.s_min, di = w.i_max - w.i_min;
    std::vector<model::State2> out{x0};
    while (dp.t() < t_max && out.size() < 20000) {
        try {
            dp.step(t_max);
        } catch (const std::exception&) {
            break;
        }
        const auto& x = dp.y();
        out.push_back(x);
        if (x[0] < 0.0 || x[1] < 0.0 || x[0] < w.s_min - 0.25 * ds || x[0] > w.s_max + 0.25 * ds ||
            x[1] < w.i_min - 0.25 * di || x[1] > w.i_max + 0.25 * di)
            break;
    }
    return out;
}

std::string fate_name(const odeflow::OrbitFate& f)
{
    switch (f.kind) {
    case odeflow::FateKind::ToEquilibrium:
        return lower_label(f.label);
    case odeflow::FateKind::ToCycle:
        return "cycle";
    default:
        return "undecided";
    }
}

std::string eq_branch_csv(const contin::Branch& br, const Params& base)
{
    std::vector<detail::CsvRow> rows;
    auto at = [&](double v, const model::State2& x) {
        Params p = model::with(base, br.active_param, v);
        return detail::CsvRow{p.gamma, p.rho, x, ""};
    };
    for (std::size_t i = 0; i < br.points.size(); ++i) {
        rows.push_back(at(br.points[i].active_param_value, br.points[i].state));
        for (const auto& sp : br.special) {
            const auto it = sp.aux.find("branch_index");
            if (it == sp.aux.end() || static_cast<std::size_t>(it->second) != i)
                continue;
            rows.push_back({sp.gamma, sp.rho, sp.state, std::string(contin::to_string(sp.kind))});
        }
    }
    return detail::branch_csv(rows, base);
}

}  // namespace

ScenarioSummary summarize_scenario(const Params& p, const cycles::CensusOptions& opt)
{
    ScenarioSummary s;
    s.disease_free = model::disease_free_equilibrium(p);
    s.endemic = model::endemic_equilibria(p);
    s.census = cycles::cycles_at(p, opt);
    std::set<std::string> att;
    if (is_stable(s.disease_free.stability))
        att.insert("e0");
    for (const auto& e : s.endemic)
        if (is_stable(e.stability))
            att.insert(lower_label(e.label));
    for (const auto& c : s.census.cycles)
        if (c.stability != cycles::CycleStability::Unstable)
            att.insert("cycle");
    s.attractors.assign(att.begin(), att.end());
    return s;
}

std::string compare_scenario(const ScenarioSummary& s, const ExpectedScenario& e)
{
    std::string diff;
    auto add = [&diff](const std::string& m) { diff += (diff.empty() ? "" : "; ") + m; };
    if (static_cast<int>(s.endemic.size()) != e.endemic)
        add("endemic equilibria " + std::to_string(s.endemic.size()) + " != " + std::to_string(e.endemic));
    std::vector<cycles::CycleStability> got;
    for (const auto& c : s.census.cycles)
        got.push_back(c.stability);
    if (got != e.cycles) {
        std::string g, w;
        for (auto x : got)
            g += (g.empty() ? "" : ",") + std::string(cycles::to_string(x));
        for (auto x : e.cycles)
            w += (w.empty() ? "" : ",") + std::string(cycles::to_string(x));
        add("cycles [" + g + "] != [" + w + "]");
    }
    if (s.census.homoclinic != e.homoclinic)
        add(std::string("homoclinic ") + (s.census.homoclinic ? "true" : "false") + " != " +
            (e.homoclinic ? "true" : "false"));
    if (s.attractors != e.attractors) {
        std::string g, w;
        for (const auto& x : s.attractors)
            g += (g.empty() ? "" : ",") + x;
        for (const auto& x : e.attractors)
            w += (w.empty() ? "" : ",") + x;
        add("attractors {" + g + "} != {" + w + "}");
    }
    return diff;
}

json cmd_equilibria(const RunConfig& cfg)
{
    const Params& p = cfg.params;
    const auto e0 = model::disease_free_equilibrium(p);
    const auto endemic = model::endemic_equilibria(p);
    json eqs = json::array();
    for (const auto& e : endemic)
        eqs.push_back(equilibrium_json(e));
    json report = {{"command", "equilibria"},
                   {"params", detail::params_json(p)},
                   {"R0", num(model::r0(p))},
                   {"disease_free", equilibrium_json(e0)},
                   {"endemic", eqs}};
    if (cfg.preset)
        report["preset"] = *cfg.preset;
    const std::string name = detail::stem(cfg, "equilibria") + ".report.json";
    report["files"] = json::array({name});
    write_atomic(detail::path_in(cfg, name), report.dump(2) + "\n");
    return report;
}

json cmd_portrait(const RunConfig& cfg)
{
    const Params& p = cfg.params;
    const odeflow::Window& w = cfg.portrait_window;
    odeflow::ClassifyOptions co;
    co.budget = cfg.budget;
    co.rel_tol = cfg.integrator_rel;
    co.abs_tol = cfg.integrator_abs;
    const auto field = odeflow::phase_portrait(p, w, cfg.nx, cfg.ny, co, cfg.threads);
    const ScenarioSummary scen = summarize_scenario(p, census_options(cfg));

    // Stable manifolds of the saddles, traced backward from both sides.
    std::vector<std::vector<model::State2>> separatrices;
    std::vector<model::EquilibriumPoint> all_eq{scen.disease_free};
    all_eq.insert(all_eq.end(), scen.endemic.begin(), scen.endemic.end());
    for (const auto& eq : all_eq) {
        if (eq.stability != model::Stability::Saddle || eq.label == model::Label::E0)
            continue;
        const auto j = model::jacobian_reduced(eq.planar(), p);
        double ls = std::min(eq.eigenvalues[0].real(), eq.eigenvalues[1].real());
        // Eigenvector of ls in scaled coordinates.
        const auto& sc = model::state_scale;
        double vx = j[0][1] / sc[1] * sc[0], vy = ls - j[0][0];
        if (std::abs(vx) + std::abs(vy) < 1e-14) {
            vx = ls - j[1][1];
            vy = j[1][0] / sc[0] * sc[1];
        }
        const double n = std::hypot(vx, vy);
        for (double sign : {1.0, -1.0}) {
            const model::State2 x0{eq.state[0] + sign * 1e-6 * vx / n / sc[0],
                                   eq.state[1] + sign * 1e-6 * vy / n / sc[1]};
            separatrices.push_back(backward_orbit(p, x0, w, 0.5 * cfg.budget));
        }
    }

    const std::string name = detail::stem(cfg, "portrait");
    json files = json::array();
    auto emit = [&](const std::string& suffix, const std::string& content) {
        write_atomic(detail::path_in(cfg, name + suffix), content);
        files.push_back(name + suffix);
    };

    std::string cells = "idx,S,I,fate,period,transient_time\n";
    std::set<std::string> grid_att;
    for (std::size_t k = 0; k < field.starts.size(); ++k) {
        const auto& f = field.fates[k];
        const std::string fate = fate_name(f);
        if (fate != "undecided")
            grid_att.insert(fate);
        cells += std::to_string(k) + ',' + fmt9(field.starts[k][0]) + ',' + fmt9(field.starts[k][1]) + ',' + fate +
                 ',' + fmt9(f.kind == odeflow::FateKind::ToCycle ? f.period : 0.0) + ',' + fmt9(f.transient_time) +
                 '\n';
    }
    emit(".portrait.csv", cells);

    std::string cyc = "cycle,stability,period,idx,phase,S,I\n";
    for (std::size_t c = 0; c < scen.census.cycles.size(); ++c) {
        const auto& cy = scen.census.cycles[c];
        const std::size_t m = cy.mesh.size();
        for (std::size_t k = 0; k < m; ++k)
            cyc += std::to_string(c) + ',' + std::string(cycles::to_string(cy.stability)) + ',' + fmt9(cy.period) +
                   ',' + std::to_string(k) + ',' + fmt9(m > 1 ? static_cast<double>(k) / (m - 1) : 0.0) + ',' +
                   fmt9(cy.mesh[k][0]) + ',' + fmt9(cy.mesh[k][1]) + '\n';
    }
    emit(".cycles.csv", cyc);

    std::string sep = "branch,idx,S,I\n";
    for (std::size_t b = 0; b < separatrices.size(); ++b)
        for (std::size_t k = 0; k < separatrices[b].size(); ++k)
            sep += std::to_string(b) + ',' + std::to_string(k) + ',' + fmt9(separatrices[b][k][0]) + ',' +
                   fmt9(separatrices[b][k][1]) + '\n';
    emit(".separatrix.csv", sep);

    std::string title = "Phase portrait, γ = " + fmt9(p.gamma) + ", ρ = " + fmt9(p.rho);
    if (cfg.preset)
        title = *cfg.preset + ": " + title;
    detail::SvgPlot plot(w.s_min, w.s_max, w.i_min, w.i_max, "S", "I", title);
    const double dx = field.nx > 1 ? (w.s_max - w.s_min) / (field.nx - 1) : w.s_max - w.s_min;
    const double dy = field.ny > 1 ? (w.i_max - w.i_min) / (field.ny - 1) : w.i_max - w.i_min;
    for (std::size_t k = 0; k < field.starts.size(); ++k) {
        const std::string fate = fate_name(field.fates[k]);
        const std::string fill = fate == "e0" ? "#dddddd" : fate == "e1" ? "#bcd4f0" : fate == "cycle" ? "#c8ebc0" : "#ffffff";
        const auto& x = field.starts[k];
        plot.cell(x[0] - 0.5 * dx, x[1] - 0.5 * dy, x[0] + 0.5 * dx, x[1] + 0.5 * dy, fill);
    }
    for (const auto& s : separatrices) {
        std::vector<std::pair<double, double>> pts;
        for (const auto& x : s)
            pts.emplace_back(x[0], x[1]);
        plot.polyline(pts, "purple", 1.5);
    }
    for (const auto& c : scen.census.cycles) {
        std::vector<std::pair<double, double>> pts;
        for (const auto& x : c.mesh)
            pts.emplace_back(x[0], x[1]);
        const bool stable = c.stability == cycles::CycleStability::Stable;
        const bool semi = c.stability == cycles::CycleStability::Semistable;
        plot.polyline(pts, stable ? "green" : semi ? "orange" : "red", 2.0, stable || semi ? "" : "6,4");
    }
    for (const auto& eq : all_eq) {
        const bool stable = is_stable(eq.stability);
        const bool saddle = eq.stability == model::Stability::Saddle;
        plot.marker(eq.state[0], eq.state[1], saddle ? "square" : "circle", stable ? "black" : "white", "black", 5.0);
        plot.label(eq.state[0], eq.state[1], std::string(model::to_string(eq.label)), "black");
    }
    plot.legend({{"#dddddd", "basin of e0"},
                 {"#bcd4f0", "basin of e1"},
                 {"#c8ebc0", "basin of the cycle"},
                 {"green", "stable cycle"},
                 {"red", "unstable cycle (dashed)"},
                 {"orange", "semistable cycle"},
                 {"purple", "saddle stable manifold"}});
    emit(".svg", plot.str());

    json eqs = json::array();
    for (const auto& e : all_eq)
        eqs.push_back(equilibrium_json(e));
    json report = {{"command", "portrait"},
                   {"params", detail::params_json(p)},
                   {"window",
                    {{"S", {num(w.s_min), num(w.s_max)}}, {"I", {num(w.i_min), num(w.i_max)}}}},
                   {"grid", {field.nx, field.ny}},
                   {"equilibria", eqs},
                   {"scenario", scenario_json(scen)},
                   {"grid_attractors", std::vector<std::string>(grid_att.begin(), grid_att.end())},
                   {"separatrix_branches", separatrices.size()}};
    if (cfg.preset) {
        const auto& pr = find_preset(*cfg.preset);
        report["preset"] = pr.id;
        report["expected"] = expected_json(pr.expected);
        report["mismatch"] = compare_scenario(scen, pr.expected);
    }
    files.push_back(name + ".report.json");
    report["files"] = files;
    write_atomic(detail::path_in(cfg, name + ".report.json"), report.dump(2) + "\n");
    return report;
}

json cmd_sweep(const RunConfig& cfg)
{
    if (!cfg.active || !cfg.range)
        throw ConfigError("sweep needs active_param and range");
    const SweepResult r = run_sweep(cfg.params, *cfg.active, *cfg.range, cfg);
    const std::string name = detail::stem(cfg, "sweep");
    json files = json::array();
    auto emit = [&](const std::string& suffix, const std::string& content) {
        write_atomic(detail::path_in(cfg, name + suffix), content);
        files.push_back(name + suffix);
    };
    for (std::size_t b = 0; b < r.equilibria.size(); ++b)
        emit(".equilibria" + (b ? std::to_string(b) : std::string()) + ".branch.csv",
             eq_branch_csv(r.equilibria[b], cfg.params));

    std::string cyc = "branch,idx,gamma,rho,period,amplitude,multiplier,stability,point_type\n";
    for (std::size_t b = 0; b < r.cycles.size(); ++b) {
        const auto& cb = r.cycles[b];
        for (std::size_t i = 0; i < cb.cycles.size(); ++i) {
            const auto& c = cb.cycles[i];
            std::string type;
            for (const auto& sp : cb.special) {
                const auto it = sp.aux.find("branch_index");
                if (sp.kind == contin::PointKind::LPC && it != sp.aux.end() && static_cast<std::size_t>(it->second) == i)
                    type = "LPC";
            }
            cyc += std::to_string(b) + ',' + std::to_string(i) + ',' + fmt9(c.params.gamma) + ',' +
                   fmt9(c.params.rho) + ',' + fmt9(c.period) + ',' + fmt9(cycles::amplitude(c)) + ',' +
                   fmt9(c.multipliers[1].real()) + ',' + std::string(cycles::to_string(c.stability)) + ',' + type +
                   '\n';
        }
    }
    emit(".cycles.csv", cyc);

    json events = json::array();
    for (const auto& e : r.events) {
        json j = detail::special_json(e.point);
        j["value"] = num(e.value);
        events.push_back(j);
    }
    json cbs = json::array();
    for (const auto& cb : r.cycles)
        cbs.push_back({{"points", cb.cycles.size()},
                       {"termination", cb.termination},
                       {"truncated", cb.truncated}});
    json report = {{"command", "sweep"},
                   {"params", detail::params_json(cfg.params)},
                   {"active_param", std::string(model::to_string(r.active))},
                   {"frozen_value", num(r.frozen)},
                   {"range", {num(r.range.first), num(r.range.second)}},
                   {"events", events},
                   {"cycle_branches", cbs},
                   {"warnings", r.warnings}};
    files.push_back(name + ".report.json");
    report["files"] = files;
    write_atomic(detail::path_in(cfg, name + ".report.json"), report.dump(2) + "\n");
    return report;
}

}  // namespace sirbif::cli
