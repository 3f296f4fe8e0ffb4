#include "sirbif/odeflow.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

namespace sirbif::odeflow {

namespace {

void check_tolerance(double tol, const char* name)
{
    if (!(tol >= 1e-12 && tol <= 1e-3))
        throw std::invalid_argument(std::string(name) + " must lie in [1e-12, 1e-3]");
}

}  // namespace

double scaled_distance(const State2& a, const State2& b) noexcept
{
    return std::max(std::abs(a[0] - b[0]) * model::state_scale[0], std::abs(a[1] - b[1]) * model::state_scale[1]);
}

Trajectory integrate(const Params& p, const State3& x0, double t_end, double rel_tol, double abs_tol)
{
    p.validate();
    check_tolerance(rel_tol, "rel_tol");
    check_tolerance(abs_tol, "abs_tol");
    for (double v : x0)
        if (!std::isfinite(v) || v < 0.0)
            throw std::domain_error("integrate: initial state must be finite and nonnegative");
    if (!(t_end >= 0.0))
        throw std::invalid_argument("integrate: t_end must be nonnegative");

    // (S, I, R, D) with D' = mu' I - mu D.
    using Stepper = ode::DormandPrince5<4>;
    auto rhs = [p](double, const Stepper::State& y) -> Stepper::State {
        const State3 f = model::rhs_full({y[0], y[1], y[2]}, p);
        return {f[0], f[1], f[2], p.mu_prime * y[1] - p.mu * y[3]};
    };
    ode::StepOptions opt;
    opt.rel_tol = rel_tol;
    opt.abs_tol = abs_tol;
    Stepper stepper(rhs, 0.0, {x0[0], x0[1], x0[2], 0.0}, opt);

    Trajectory traj;
    traj.times.push_back(0.0);
    traj.states.push_back(x0);
    traj.discounted_deaths.push_back(0.0);
    stepper.advance_to(t_end, [&](const Stepper& s) {
        const auto& y = s.y();
        traj.times.push_back(s.t());
        traj.states.push_back({y[0], y[1], y[2]});
        traj.discounted_deaths.push_back(y[3]);
    });
    traj.accepted_steps = stepper.accepted();
    traj.rejected_steps = stepper.rejected();
    return traj;
}

double total_population_reference(const Params& p, double n0, double t) noexcept
{
    const double eq = p.lambda / p.mu;
    return eq + (n0 - eq) * std::exp(-p.mu * t);
}

double population_law_residual(const Params& p, const Trajectory& traj)
{
    if (traj.states.empty())
        return 0.0;
    const auto& x0 = traj.states.front();
    const double n0 = x0[0] + x0[1] + x0[2];
    double worst = 0.0;
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        const auto& x = traj.states[k];
        const double lhs = x[0] + x[1] + x[2] + traj.discounted_deaths[k];
        const double ref = total_population_reference(p, n0, traj.times[k]);
        worst = std::max(worst, std::abs(lhs - ref) / std::max(std::abs(ref), 1e-300));
    }
    return worst;
}

OrbitFate classify_orbit(const Params& p, const State2& x0, const ClassifyOptions& opt)
{
    p.validate();
    if (!(x0[0] >= 0.0 && x0[1] >= 0.0) || !std::isfinite(x0[0]) || !std::isfinite(x0[1]))
        throw std::domain_error("classify_orbit: initial state must be finite and nonnegative");

    std::vector<model::EquilibriumPoint> equilibria{model::disease_free_equilibrium(p)};
    for (auto& e : model::endemic_equilibria(p))
        equilibria.push_back(std::move(e));

    using Stepper = ode::DormandPrince5<2>;
    ode::StepOptions step_opt;
    step_opt.rel_tol = opt.rel_tol;
    step_opt.abs_tol = opt.abs_tol;
    Stepper stepper([p](double, const State2& y) { return model::rhs_reduced(y, p); }, 0.0, x0, step_opt);

    std::vector<double> inside_since(equilibria.size(), -1.0);
    auto update_balls = [&](double t, const State2& y) -> const model::EquilibriumPoint* {
        for (std::size_t k = 0; k < equilibria.size(); ++k) {
            if (scaled_distance(y, equilibria[k].planar()) <= opt.equilibrium_tol) {
                if (inside_since[k] < 0.0)
                    inside_since[k] = t;
                if (t - inside_since[k] >= opt.window)
                    return &equilibria[k];
            } else {
                inside_since[k] = -1.0;
            }
        }
        return nullptr;
    };

    struct Return {
        double t;
        State2 x;
        double integral_i;  // cumulative integral of I up to t
    };
    std::vector<Return> returns;
    double cumulative_i = 0.0;
    auto near_equilibrium = [&](const State2& y) {
        for (const auto& e : equilibria)
            if (scaled_distance(y, e.planar()) <= 1e-3)
                return true;
        return false;
    };

    update_balls(0.0, x0);
    OrbitFate fate;
    while (stepper.t() < opt.budget) {
        const double t_window_end = std::min(opt.budget, stepper.t() + opt.window);
        while (stepper.t() < t_window_end) {
            stepper.step(t_window_end);
            const double t0 = stepper.t_prev();
            const double t1 = stepper.t();
            const State2& y1 = stepper.y();
            const State2& y0 = stepper.y_prev();
            const double h = t1 - t0;
            cumulative_i += h / 6.0 * (y0[1] + 4.0 * stepper.dense(t0 + 0.5 * h)[1] + y1[1]);

            if (const auto* hit = update_balls(t1, y1)) {
                fate.kind = FateKind::ToEquilibrium;
                fate.label = hit->label;
                fate.transient_time = inside_since[static_cast<std::size_t>(hit - equilibria.data())];
                return fate;
            }

            const double g0 = model::rhs_reduced(y0, p)[1];
            const double g1 = model::rhs_reduced(y1, p)[1];
            if (g0 > 0.0 && g1 <= 0.0) {
                // Downward crossing of the section dI/dt = 0: regula falsi (Illinois).
                double a = t0, b = t1, ga = g0, gb = g1;
                int side = 0;
                double tc = b;
                for (int it = 0; it < 60; ++it) {
                    tc = (a * gb - b * ga) / (gb - ga);
                    const double gc = model::rhs_reduced(stepper.dense(tc), p)[1];
                    if (std::abs(gc) < 1e-14 || b - a < 1e-12 * std::max(1.0, std::abs(tc)))
                        break;
                    if ((gc > 0.0) == (ga > 0.0)) {
                        a = tc;
                        ga = gc;
                        if (side == -1)
                            gb *= 0.5;
                        side = -1;
                    } else {
                        b = tc;
                        gb = gc;
                        if (side == 1)
                            ga *= 0.5;
                        side = 1;
                    }
                }
                const State2 xc = stepper.dense(tc);
                // Integral of I from tc to t1 is subtracted using the trapezoid of
                // the sub-interval; its error is far below the period tolerance.
                const double tail = 0.5 * (t1 - tc) * (xc[1] + y1[1]);
                returns.push_back({tc, xc, cumulative_i - tail});
                const std::size_t n = returns.size();
                if (n >= 3 && !near_equilibrium(xc)) {
                    const Return& r2 = returns[n - 1];
                    const Return& r1 = returns[n - 2];
                    const Return& r0 = returns[n - 3];
                    const double p_new = r2.t - r1.t;
                    const double p_old = r1.t - r0.t;
                    if (scaled_distance(r2.x, r1.x) <= opt.cycle_position_tol &&
                        std::abs(p_new - p_old) <= opt.cycle_period_rel_tol * p_new) {
                        fate.kind = FateKind::ToCycle;
                        fate.period = p_new;
                        fate.mean_infected = (r2.integral_i - r1.integral_i) / p_new;
                        fate.transient_time = r1.t;
                        return fate;
                    }
                }
            }
        }
    }
    fate.kind = FateKind::Undecided;
    fate.transient_time = opt.budget;
    return fate;
}

PortraitField phase_portrait(const Params& p, const Window& window, std::size_t nx, std::size_t ny,
                             const ClassifyOptions& opt, unsigned threads)
{
    p.validate();
    if (nx < 1 || ny < 1 || nx > 200 || ny > 200)
        throw std::invalid_argument("phase_portrait: grid must be between 1x1 and 200x200");
    if (!(window.s_max >= window.s_min) || !(window.i_max >= window.i_min) || window.s_min < 0.0 ||
        window.i_min < 0.0)
        throw std::invalid_argument("phase_portrait: invalid window");

    PortraitField field;
    field.window = window;
    field.nx = nx;
    field.ny = ny;
    field.starts.reserve(nx * ny);
    auto coord = [](double lo, double hi, std::size_t k, std::size_t n) {
        return n == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1);
    };
    for (std::size_t j = 0; j < ny; ++j)
        for (std::size_t i = 0; i < nx; ++i)
            field.starts.push_back({coord(window.s_min, window.s_max, i, nx), coord(window.i_min, window.i_max, j, ny)});
    field.fates.resize(field.starts.size());

    if (threads == 0)
        threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, field.starts.size()));

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t k = next.fetch_add(1); k < field.starts.size(); k = next.fetch_add(1)) {
            try {
                field.fates[k] = classify_orbit(p, field.starts[k], opt);
            } catch (const std::exception&) {
                field.fates[k] = OrbitFate{};
                field.fates[k].transient_time = opt.budget;
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < threads; ++t)
        pool.emplace_back(worker);
    worker();
    for (auto& th : pool)
        th.join();
    return field;
}

}  // namespace sirbif::odeflow
