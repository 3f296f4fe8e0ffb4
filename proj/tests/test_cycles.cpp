#include "sirbif/codim2.hpp"
#include "sirbif/cycles.hpp"
#include "sirbif/odeflow.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace sirbif;
using namespace sirbif::cycles;
using model::ParamId;

namespace {

model::Params at(double gamma, double rho)
{
    model::Params p;
    p.gamma = gamma;
    p.rho = rho;
    return p;
}

/// Hopf points on the e1 branch through (gamma, rho) when `active` varies.
std::vector<SpecialPoint> hopf_points(double gamma, double rho, ParamId active)
{
    const auto p = at(gamma, rho);
    const auto eqs = model::endemic_equilibria(p);
    REQUIRE(!eqs.empty());
    std::vector<SpecialPoint> out;
    for (const auto& sp : contin::continue_bidirectional(p, eqs.back(), active, {0.0, 1.0}).special)
        if (sp.kind == contin::PointKind::HB)
            out.push_back(sp);
    return out;
}

SpecialPoint hopf_near(double gamma, double rho, ParamId active, double value)
{
    auto hbs = hopf_points(gamma, rho, active);
    REQUIRE(!hbs.empty());
    auto key = [active](const SpecialPoint& s) { return active == ParamId::Gamma ? s.gamma : s.rho; };
    return *std::min_element(hbs.begin(), hbs.end(), [&](const auto& a, const auto& b) {
        return std::abs(key(a) - value) < std::abs(key(b) - value);
    });
}

const SpecialPoint* find(const CycleBranch& b, contin::PointKind k)
{
    for (const auto& sp : b.special)
        if (sp.kind == k)
            return &sp;
    return nullptr;
}

void check_cycle(const Cycle& c)
{
    CHECK(c.residual <= 1e-8);
    CHECK(std::abs(c.multipliers[0].real() - 1.0) <= 1e-4);
    CHECK(c.period > 0.0);
    REQUIRE(c.mesh.size() >= 2);
    CHECK(odeflow::scaled_distance(c.mesh.front(), c.mesh.back()) <= 1e-6);
}

Cycle only_cycle(const CycleCensus& census)
{
    REQUIRE(census.cycles.size() == 1);
    return census.cycles.front();
}

}  // namespace

TEST_CASE("Hopf-born cycles: period, closure and the trivial multiplier")
{
    struct Case {
        double gamma, rho;
        ParamId active;
        double hopf_value;
    };
    for (const Case& k : {Case{0.162, 0.004, ParamId::Rho, 0.002408}, Case{0.392, 0.19, ParamId::Rho, 0.181},
                          Case{0.369, 0.13, ParamId::Gamma, 0.370127}}) {
        const SpecialPoint hb = hopf_near(k.gamma, k.rho, k.active, k.hopf_value);
        const Cycle c = cycle_from_hopf(hb, k.active, 1e-2, at(k.gamma, k.rho));
        check_cycle(c);
        const double t_lin = 2.0 * std::numbers::pi / contin::hopf_frequency(hb, at(k.gamma, k.rho));
        CHECK(std::abs(c.period - t_lin) <= 0.05 * t_lin);
        // The small cycle surrounds the Hopf equilibrium.
        CHECK(odeflow::scaled_distance(c.nodes[0], hb.state) == doctest::Approx(1e-2).epsilon(0.5));
    }
}

TEST_CASE("stability of the Hopf-born cycle follows the sign of l1")
{
    struct Case {
        double gamma, rho;
        ParamId active;
        double hopf_value;
    };
    for (const Case& k : {Case{0.162, 0.004, ParamId::Rho, 0.002408}, Case{0.162, 0.004, ParamId::Rho, 0.00566},
                          Case{0.392, 0.19, ParamId::Rho, 0.181}, Case{0.369, 0.13, ParamId::Gamma, 0.370127},
                          Case{0.3735, 0.137, ParamId::Rho, 0.1363}}) {
        const auto base = at(k.gamma, k.rho);
        const SpecialPoint hb = hopf_near(k.gamma, k.rho, k.active, k.hopf_value);
        const auto l1 = codim2::lyapunov_l1_checked(contin::params_at(hb, base), hb.state,
                                                    contin::hopf_frequency(hb, base));
        REQUIRE(l1.converged);
        const Cycle c = cycle_from_hopf(hb, k.active, 1e-2, base);
        INFO("hb gamma=" << hb.gamma << " rho=" << hb.rho << " l1=" << l1.value);
        CHECK(c.stability == (l1.value < 0.0 ? CycleStability::Stable : CycleStability::Unstable));
    }
}

TEST_CASE("stable cycle at P7, unstable cycle at P3")
{
    const Cycle stable = only_cycle(cycles_at(at(0.162, 0.004)));
    check_cycle(stable);
    CHECK(std::abs(stable.multipliers[1]) < 1.0);
    CHECK(stable.stability == CycleStability::Stable);

    const Cycle unstable = only_cycle(cycles_at(at(0.392, 0.1825)));
    check_cycle(unstable);
    CHECK(std::abs(unstable.multipliers[1]) > 1.0);
    CHECK(unstable.stability == CycleStability::Unstable);
}

TEST_CASE("tighter shooting tolerances tighten the trivial multiplier")
{
    const Cycle c = only_cycle(cycles_at(at(0.392, 0.1825)));
    CycleOptions tight;
    tight.rel_tol = tight.abs_tol = 1e-11;
    const auto mu = floquet_multipliers(c, tight);
    CHECK(std::abs(mu[0].real() - 1.0) <= 1e-5);
    CHECK(std::abs(mu[1].real() - c.multipliers[1].real()) <= 1e-6 * std::abs(mu[1].real()));
}

TEST_CASE("mesh refinement does not move the P7 period")
{
    const auto p = at(0.162, 0.004);
    const Cycle c = only_cycle(cycles_at(p));
    CycleOptions fine;
    fine.segment_time = 0.5 * CycleOptions{}.segment_time;
    fine.min_segments = 2 * CycleOptions{}.min_segments;
    fine.mesh_points = 2 * CycleOptions{}.mesh_points;
    const Cycle refined = cycle_from_state(p, c.nodes[0], c.period, fine);
    CHECK(refined.nodes.size() == 2 * c.nodes.size());
    CHECK(refined.mesh.size() == 2 * c.mesh.size());
    CHECK(std::abs(refined.period - c.period) <= 1e-6 * c.period);
}

TEST_CASE("orbit classification agrees with the stable cycle")
{
    const auto p = at(0.162, 0.004);
    const Cycle c = only_cycle(cycles_at(p));
    const auto fate = odeflow::classify_orbit(p, c.mesh[c.mesh.size() / 3]);
    REQUIRE(fate.kind == odeflow::FateKind::ToCycle);
    CHECK(std::abs(fate.period - c.period) <= 1e-3 * c.period);
}

TEST_CASE("cycle_from_state converges from an off-cycle start")
{
    const auto p = at(0.162, 0.004);
    const Cycle c = only_cycle(cycles_at(p));
    const auto e1 = model::endemic_equilibria(p).back().planar();
    // A point between e1 and the cycle spirals out onto it.
    const model::State2 x{0.5 * (e1[0] + c.nodes[0][0]), 0.5 * (e1[1] + c.nodes[0][1])};
    const auto fate = odeflow::classify_orbit(p, x);
    REQUIRE(fate.kind == odeflow::FateKind::ToCycle);
    const Cycle again = cycle_from_state(p, c.mesh[10], 1.02 * c.period);
    CHECK(std::abs(again.period - c.period) <= 1e-8 * c.period);
    CHECK(odeflow::scaled_distance(again.nodes[0], c.nodes[0]) <= 1e-6);
    CHECK_THROWS_AS(cycle_from_state(p, c.nodes[0], -1.0), std::invalid_argument);
}

TEST_CASE("fold of cycles at rho = 0.13")
{
    const auto base = at(0.369, 0.13);
    const SpecialPoint hb = hopf_near(0.369, 0.13, ParamId::Gamma, 0.370127);
    const auto branch = continue_cycles(cycle_from_hopf(hb, ParamId::Gamma, 1e-2, base), ParamId::Gamma, {0.3, 0.4});
    for (const auto& c : branch.cycles)
        check_cycle(c);
    const SpecialPoint* lpc = find(branch, contin::PointKind::LPC);
    REQUIRE(lpc != nullptr);
    CHECK(std::abs(lpc->gamma - 0.370138) <= 2e-4);
    // The fold is the extreme gamma on the branch.
    for (const auto& c : branch.cycles)
        CHECK(c.params.gamma <= lpc->gamma + 1e-12);
    // Neighbours on the two sides of the fold have multipliers on opposite sides of 1.
    const auto k = static_cast<std::size_t>(lpc->aux.at("branch_index"));
    REQUIRE(k > 0);
    REQUIRE(k + 1 < branch.cycles.size());
    const double before = branch.cycles[k - 1].multipliers[1].real();
    const double after = branch.cycles[k + 1].multipliers[1].real();
    CHECK((before - 1.0) * (after - 1.0) < 0.0);
    CHECK(std::abs(branch.cycles[k].multipliers[1].real() - 1.0) < std::min(std::abs(before - 1.0), std::abs(after - 1.0)));
    CHECK(branch.cycles[k].stability == CycleStability::Semistable);
}

TEST_CASE("homoclinic limits of cycle branches")
{
    SUBCASE("gamma = 0.392, continuing in rho")
    {
        const auto base = at(0.392, 0.19);
        const SpecialPoint hb = hopf_near(0.392, 0.19, ParamId::Rho, 0.181);
        const auto branch = continue_cycles(cycle_from_hopf(hb, ParamId::Rho, 1e-2, base), ParamId::Rho, {0.0, 1.0});
        CHECK(branch.termination == "period blow-up");
        const SpecialPoint* hom = find(branch, contin::PointKind::HOM);
        REQUIRE(hom != nullptr);
        CHECK(std::abs(hom->rho - 0.183711) <= 2e-3);
        CHECK(hom->aux.at("period") >= branch.period_blowup_threshold);
        CHECK(hom->aux.at("saddle_distance") <= 1e-2);
        // The extrapolated loop lies beyond every computed cycle.
        for (const auto& c : branch.cycles)
            CHECK(c.params.rho <= hom->rho);
        // The homoclinic saddle is e2.
        const auto eqs = model::endemic_equilibria(contin::params_at(*hom, base));
        REQUIRE(eqs.size() == 2);
        CHECK(odeflow::scaled_distance(hom->state, eqs.front().planar()) <= 1e-9);
    }
    SUBCASE("rho = 0.13, continuing in gamma")
    {
        const auto base = at(0.369, 0.13);
        const SpecialPoint hb = hopf_near(0.369, 0.13, ParamId::Gamma, 0.370127);
        const auto branch = continue_cycles(cycle_from_hopf(hb, ParamId::Gamma, 1e-2, base), ParamId::Gamma, {0.3, 0.4});
        const SpecialPoint* hom = find(branch, contin::PointKind::HOM);
        REQUIRE(hom != nullptr);
        CHECK(std::abs(hom->gamma - 0.369662) <= 2e-3);
        HomoclinicFit fit;
        REQUIRE(homoclinic_proxy(branch, nullptr, &fit).has_value());
        CHECK(fit.residual < 1e-3);
        CHECK(fit.sigma > 0.0);
    }
}

TEST_CASE("bounded branches report no homoclinic point")
{
    // The gamma = 0.162 cycles join two Hopf points and never grow long.
    const auto base = at(0.162, 0.004);
    const SpecialPoint hb = hopf_near(0.162, 0.004, ParamId::Rho, 0.002408);
    const auto branch = continue_cycles(cycle_from_hopf(hb, ParamId::Rho, 1e-2, base), ParamId::Rho, {0.0, 1.0});
    CHECK(branch.termination == "cycle shrank onto a Hopf point");
    CHECK(find(branch, contin::PointKind::HOM) == nullptr);
    CHECK(find(branch, contin::PointKind::LPC) == nullptr);
    std::string why;
    CHECK_FALSE(homoclinic_proxy(branch, &why).has_value());
    CHECK(!why.empty());
    // It ends near the second Hopf point.
    const SpecialPoint other = hopf_near(0.162, 0.004, ParamId::Rho, 0.00566);
    CHECK(std::abs(branch.cycles.back().params.rho - other.rho) <= 2e-4);
    for (const auto& c : branch.cycles)
        CHECK(c.stability == CycleStability::Stable);
}

TEST_CASE("homoclinic_proxy rejects a noisy tail")
{
    CycleBranch b;
    b.active = ParamId::Rho;
    const Cycle c = only_cycle(cycles_at(at(0.392, 0.1825)));
    for (int k = 0; k < 6; ++k) {
        Cycle x = c;
        x.period = 1000.0 + 200.0 * k;
        x.params.rho = 0.18 + ((k % 2) ? 1e-4 : -1e-4);
        b.cycles.push_back(x);
    }
    std::string why;
    CHECK_FALSE(homoclinic_proxy(b, &why).has_value());
    CHECK(why.find("residual") != std::string::npos);
}

TEST_CASE("cycle census at the rho = 0.13 presets")
{
    SUBCASE("two nested cycles of opposite stability")
    {
        const auto census = cycles_at(at(0.37013, 0.13));
        REQUIRE(census.cycles.size() == 2);
        const Cycle& inner = census.cycles[0];
        const Cycle& outer = census.cycles[1];
        CHECK(inner.stability == CycleStability::Stable);
        CHECK(outer.stability == CycleStability::Unstable);
        CHECK(amplitude(inner) < amplitude(outer));
        for (const auto& c : census.cycles)
            check_cycle(c);
    }
    SUBCASE("semistable cycle at the fold")
    {
        const auto census = cycles_at(at(0.370138, 0.13));
        REQUIRE(census.cycles.size() == 1);
        CHECK(census.cycles[0].stability == CycleStability::Semistable);
        REQUIRE(!census.nearby.empty());
        CHECK(census.nearby[0].kind == contin::PointKind::LPC);
    }
    SUBCASE("homoclinic loop and past the fold")
    {
        const auto hom = cycles_at(at(0.369662, 0.13));
        CHECK(hom.homoclinic);
        CHECK(hom.cycles.empty());
        CHECK(cycles_at(at(0.3735, 0.13)).cycles.empty());
    }
}

TEST_CASE("cycle_from_hopf argument checks")
{
    SpecialPoint lp;
    lp.kind = contin::PointKind::LP;
    CHECK_THROWS_AS(cycle_from_hopf(lp, ParamId::Gamma), std::invalid_argument);
    const SpecialPoint hb = hopf_near(0.162, 0.004, ParamId::Rho, 0.002408);
    CHECK_THROWS_AS(cycle_from_hopf(hb, ParamId::Rho, 0.0, at(0.162, 0.004)), std::invalid_argument);
    CHECK(to_string(CycleStability::Semistable) == "semistable");
}
