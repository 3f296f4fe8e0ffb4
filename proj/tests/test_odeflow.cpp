#include "sirbif/odeflow.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace sirbif;
using namespace sirbif::odeflow;

namespace {

model::Params at(double gamma, double rho)
{
    model::Params p;
    p.gamma = gamma;
    p.rho = rho;
    return p;
}

}  // namespace

TEST_CASE("integrate stays on the disease-free equilibrium")
{
    const auto p = at(0.3, 0.2);
    const auto traj = integrate(p, {1000.0, 0.0, 0.0}, 3000.0, 1e-8, 1e-8);
    REQUIRE(traj.times.size() >= 2);
    for (const auto& x : traj.states) {
        CHECK(std::abs(x[0] - 1000.0) <= 1e-8);
        CHECK(x[1] == 0.0);
        CHECK(x[2] == 0.0);
    }
}

TEST_CASE("integrate reaches the disease-free state at P5")
{
    const auto p = at(0.392, 0.173);
    const auto traj = integrate(p, {1000.0, 1.0, 0.0}, 5000.0, 1e-9, 1e-9);
    const auto& x = traj.states.back();
    CHECK(traj.times.back() == doctest::Approx(5000.0));
    CHECK(std::abs(x[0] - 1000.0) < 1e-3);
    CHECK(std::abs(x[1]) < 1e-3);
    CHECK(std::abs(x[2]) < 1e-3);
    for (std::size_t k = 1; k < traj.times.size(); ++k)
        CHECK(traj.times[k] > traj.times[k - 1]);
}

TEST_CASE("population law and nonnegativity on assorted orbits")
{
    struct Case {
        double gamma, rho;
        model::State3 x0;
    };
    const Case cases[] = {{0.392, 0.19, {500.0, 30.0, 10.0}},
                          {0.162, 0.004, {100.0, 30.0, 0.0}},
                          {0.0, 0.0, {999.0, 1.0, 0.0}},
                          {0.37013, 0.13, {60.0, 70.0, 500.0}},
                          {0.3, 0.5, {0.0, 0.0, 100.0}}};
    for (const auto& c : cases) {
        const double abs_tol = 1e-9;
        const auto traj = integrate(at(c.gamma, c.rho), c.x0, 4000.0, 1e-10, abs_tol);
        CHECK(population_law_residual(at(c.gamma, c.rho), traj) <= 1e-6);
        double lowest = 0.0;
        for (const auto& x : traj.states)
            lowest = std::min({lowest, x[0], x[1], x[2]});
        CHECK(lowest >= -10.0 * abs_tol);
    }
    // Disease-free orbits follow the law with no death correction at all.
    const auto p = at(0.5, 0.5);
    const auto traj = integrate(p, {200.0, 0.0, 50.0}, 1000.0, 1e-10, 1e-10);
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        const auto& x = traj.states[k];
        CHECK(std::abs(x[0] + x[1] + x[2] - total_population_reference(p, 250.0, traj.times[k])) <=
              1e-6 * total_population_reference(p, 250.0, traj.times[k]));
    }
}

TEST_CASE("integrate rejects bad input")
{
    CHECK_THROWS_AS(integrate(at(0.3, 0.1), {-1.0, 0.0, 0.0}, 10.0), std::domain_error);
    CHECK_THROWS_AS(integrate(at(0.3, 0.1), {1.0, 0.0, 0.0}, 10.0, 1e-2), std::invalid_argument);
    CHECK_THROWS_AS(integrate(at(0.3, 0.1), {1.0, 0.0, 0.0}, 10.0, 1e-8, 1e-13), std::invalid_argument);
}

TEST_CASE("classify_orbit basic outcomes")
{
    const auto e0 = classify_orbit(at(0.392, 0.19), {1000.0, 0.0});
    CHECK(e0.kind == FateKind::ToEquilibrium);
    CHECK(e0.label == model::Label::E0);
    CHECK(e0.transient_time == 0.0);

    ClassifyOptions opt;
    opt.budget = 40000.0;
    const auto p2 = at(0.392, 0.183711);
    const auto eqs = model::endemic_equilibria(p2);
    REQUIRE(eqs.size() == 2);
    const auto e1 = eqs[1].planar();
    const auto inside = classify_orbit(p2, {e1[0] + 2.0, e1[1]}, opt);
    CHECK(inside.kind == FateKind::ToEquilibrium);
    CHECK(inside.label == model::Label::E1);
    const auto outside = classify_orbit(p2, {900.0, 1.0}, opt);
    CHECK(outside.kind == FateKind::ToEquilibrium);
    CHECK(outside.label == model::Label::E0);
}

TEST_CASE("classify_orbit finds the stable cycle at P7")
{
    const auto p7 = at(0.162, 0.004);
    const auto eqs = model::endemic_equilibria(p7);
    REQUIRE(eqs.size() == 2);
    const auto e1 = eqs[1].planar();
    ClassifyOptions opt;
    opt.budget = 60000.0;
    const auto fate = classify_orbit(p7, {e1[0] + 1.0, e1[1] + 0.5}, opt);
    CHECK(fate.kind == FateKind::ToCycle);
    CHECK(fate.period > 0.0);
    CHECK(fate.mean_infected > 0.0);
}

TEST_CASE("phase_portrait at P5 sends every decided cell to E0")
{
    const auto field = phase_portrait(at(0.392, 0.173), Window{0.0, 1000.0, 0.0, 100.0}, 8, 8);
    REQUIRE(field.fates.size() == 64);
    int decided = 0;
    for (const auto& f : field.fates) {
        if (f.kind == FateKind::Undecided)
            continue;
        ++decided;
        CHECK(f.kind == FateKind::ToEquilibrium);
        CHECK(f.label == model::Label::E0);
    }
    CHECK(decided > 0);
    CHECK_THROWS_AS(phase_portrait(at(0.3, 0.1), Window{}, 201, 2), std::invalid_argument);
}
