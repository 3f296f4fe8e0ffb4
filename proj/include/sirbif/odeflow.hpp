#pragma once

#include "sirbif/dopri5.hpp"
#include "sirbif/model.hpp"

#include <cstddef>
#include <vector>

namespace sirbif::odeflow {

using model::Params;
using model::State2;
using model::State3;

struct Trajectory {
    std::vector<double> times;
    std::vector<State3> states;
    /// D(t) = mu' * integral_0^t exp(-mu (t - s)) I(s) ds, integrated alongside
    /// the state so that N + D obeys a closed-form law.
    std::vector<double> discounted_deaths;
    long accepted_steps = 0;
    long rejected_steps = 0;
};

/// Integrates the full (S, I, R) system from t = 0 to t_end, recording every
/// accepted step. Tolerances must lie in [1e-12, 1e-3].
Trajectory integrate(const Params& p, const State3& x0, double t_end, double rel_tol = 1e-8,
                     double abs_tol = 1e-8);

/// lambda/mu + (n0 - lambda/mu) exp(-mu t): the total population when no
/// disease deaths occur. Summing the three equations gives
/// dN/dt = lambda - mu N - mu' I, so in general N + D follows this law.
double total_population_reference(const Params& p, double n0, double t) noexcept;

/// Largest relative deviation of N(t) + D(t) from total_population_reference
/// over the recorded steps.
double population_law_residual(const Params& p, const Trajectory& traj);

enum class FateKind { ToEquilibrium, ToCycle, Undecided };

struct OrbitFate {
    FateKind kind = FateKind::Undecided;
    model::Label label = model::Label::E0;  // valid for ToEquilibrium
    double period = 0.0;                    // valid for ToCycle
    double mean_infected = 0.0;             // valid for ToCycle
    double transient_time = 0.0;
};

struct ClassifyOptions {
    double budget = 10000.0;
    double window = 500.0;
    double equilibrium_tol = 1e-5;  // scaled max-norm distance
    double cycle_position_tol = 1e-6;
    double cycle_period_rel_tol = 1e-4;
    double rel_tol = 1e-9;
    double abs_tol = 1e-9;
};

/// Integrates in windows until the orbit settles on a known equilibrium or a
/// limit cycle (successive I-maxima on the section dI/dt = 0 converge).
OrbitFate classify_orbit(const Params& p, const State2& x0, const ClassifyOptions& opt = {});

struct Window {
    double s_min = 0.0, s_max = 1000.0;
    double i_min = 0.0, i_max = 100.0;
};

struct PortraitField {
    Window window;
    std::size_t nx = 0, ny = 0;
    std::vector<State2> starts;  // row-major, I outer, S inner
    std::vector<OrbitFate> fates;
};

/// Classifies the orbit through every node of an nx-by-ny grid over the window.
/// Cells are evaluated on worker threads; results are stored by cell index, so
/// the output does not depend on scheduling.
PortraitField phase_portrait(const Params& p, const Window& window, std::size_t nx, std::size_t ny,
                             const ClassifyOptions& opt = {}, unsigned threads = 0);

/// Scaled max-norm distance used throughout for state comparisons.
double scaled_distance(const State2& a, const State2& b) noexcept;

}  // namespace sirbif::odeflow
