#include "cli_internal.hpp"

#include <algorithm>
#include <cmath>

namespace sirbif::cli {

namespace {

contin::ContinuationOptions continuation_options(const RunConfig& cfg)
{
    contin::ContinuationOptions o;
    o.h0 = cfg.h0;
    o.hmax = cfg.hmax;
    o.newton_tol = cfg.newton_tol;
    return o;
}

double value_of(const contin::SpecialPoint& sp, ParamId active)
{
    return active == ParamId::Gamma ? sp.gamma : sp.rho;
}

}  // namespace

SweepResult run_sweep(const Params& p, ParamId active, std::pair<double, double> range, const RunConfig& cfg)
{
    SweepResult res;
    res.active = active;
    res.frozen = model::get(p, active == ParamId::Gamma ? ParamId::Rho : ParamId::Gamma);
    res.range = range;
    const double lo = std::min(range.first, range.second), hi = std::max(range.first, range.second);

    // A start on the endemic branch: the first sample of the range that has one.
    std::optional<model::EquilibriumPoint> start;
    Params ps = p;
    constexpr int samples = 40;
    for (int k = 0; k <= samples && !start; ++k) {
        ps = model::with(p, active, range.first + (range.second - range.first) * k / samples);
        const auto eqs = model::endemic_equilibria(ps);
        if (!eqs.empty())
            start = eqs.back();
    }
    std::vector<contin::SpecialPoint> events;
    if (start) {
        auto opt = continuation_options(cfg);
        try {
            res.equilibria.push_back(contin::continue_bidirectional(ps, *start, active, {lo, hi}, opt));
        } catch (const std::exception& e) {
            res.warnings.push_back(std::string("equilibrium continuation failed: ") + e.what());
        }
    }

    cycles::CycleContinuationOptions copt;
    copt.cycle.newton_tol = cfg.shooting_tol;
    for (const auto& br : res.equilibria) {
        if (br.truncated)
            res.warnings.push_back("equilibrium branch truncated: " + br.warning);
        for (auto sp : br.special) {
            if (sp.kind == contin::PointKind::HB) {
                const Params ph = contin::params_at(sp, p);
                try {
                    const double omega = contin::hopf_frequency(sp, p);
                    const auto l1 = codim2::lyapunov_l1_checked(ph, sp.state, omega);
                    sp.aux["l1"] = l1.value;
                    sp.aux["l1_converged"] = l1.converged ? 1.0 : 0.0;
                } catch (const std::exception& e) {
                    res.warnings.push_back(std::string("l1 evaluation failed: ") + e.what());
                }
                try {
                    const auto c0 = cycles::cycle_from_hopf(sp, active, 1e-2, p, copt.cycle);
                    auto cb = cycles::continue_cycles(c0, active, {lo, hi}, copt);
                    if (cb.truncated)
                        res.warnings.push_back("cycle branch truncated: " + cb.termination);
                    for (const auto& cs : cb.special) {
                        const double v = value_of(cs, active);
                        if (v >= lo && v <= hi)
                            events.push_back(cs);
                    }
                    res.cycles.push_back(std::move(cb));
                } catch (const std::exception& e) {
                    res.warnings.push_back(std::string("cycle continuation from HB failed: ") + e.what());
                }
            }
            events.push_back(sp);
        }
    }

    const bool ascending = range.second > range.first;
    std::sort(events.begin(), events.end(), [&](const auto& a, const auto& b) {
        const double va = value_of(a, active), vb = value_of(b, active);
        return ascending ? va < vb : va > vb;
    });
    for (const auto& e : events) {
        const double v = value_of(e, active);
        if (!res.events.empty() && std::abs(res.events.back().value - v) <= 1e-9 * std::max(1.0, std::abs(v))) {
            if (res.events.back().point.kind != e.kind)
                res.warnings.push_back("coincident events " + std::string(contin::to_string(e.kind)) + " and " +
                                       std::string(contin::to_string(res.events.back().point.kind)) +
                                       "; keeping the first");
            continue;
        }
        res.events.push_back({v, e});
    }
    return res;
}

}  // namespace sirbif::cli
