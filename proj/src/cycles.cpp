#include "sirbif/cycles.hpp"

#include "sirbif/dopri5.hpp"
#include "sirbif/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

namespace sirbif::cycles {

namespace {

constexpr auto& sc = model::state_scale;
constexpr double t_scale = 1000.0;  // period unit in the continuation unknowns

struct Segment {
    State2 end{};
    std::array<double, 4> phi{};  // row-major monodromy of the segment
    State2 xp{};                  // d(end)/d(param)
    double logdet = 0.0;          // integral of trace J
};

Segment integrate_segment(const Params& p, ParamId active, const State2& x0, double tau, const CycleOptions& opt)
{
    using Stepper = ode::DormandPrince5<9>;
    auto rhs = [&p, active](double, const Stepper::State& y) -> Stepper::State {
        const State2 x{y[0], y[1]};
        const State2 f = model::rhs_reduced(x, p);
        const model::Mat2 j = model::jacobian_reduced(x, p);
        const State2 fp = model::param_derivative(x, p, active);
        Stepper::State d{};
        d[0] = f[0];
        d[1] = f[1];
        for (std::size_t r = 0; r < 2; ++r)
            for (std::size_t c = 0; c < 2; ++c)
                d[2 + 2 * r + c] = j[r][0] * y[2 + c] + j[r][1] * y[4 + c];
        d[6] = j[0][0] * y[6] + j[0][1] * y[7] + fp[0];
        d[7] = j[1][0] * y[6] + j[1][1] * y[7] + fp[1];
        d[8] = j[0][0] + j[1][1];
        return d;
    };
    ode::StepOptions so;
    so.rel_tol = opt.rel_tol;
    so.abs_tol = opt.abs_tol;
    Stepper st(rhs, 0.0, {x0[0], x0[1], 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0}, so);
    st.advance_to(tau);
    const auto& y = st.y();
    Segment s;
    s.end = {y[0], y[1]};
    s.phi = {y[2], y[3], y[4], y[5]};
    s.xp = {y[6], y[7]};
    s.logdet = y[8];
    return s;
}

/// Orbit samples at the given increasing times, starting from x0 at t = 0.
std::vector<State2> sample_orbit(const Params& p, const State2& x0, const std::vector<double>& times,
                                 const CycleOptions& opt)
{
    using Stepper = ode::DormandPrince5<2>;
    ode::StepOptions so;
    so.rel_tol = opt.rel_tol;
    so.abs_tol = opt.abs_tol;
    Stepper st([&p](double, const State2& y) { return model::rhs_reduced(y, p); }, 0.0, x0, so);
    std::vector<State2> out;
    out.reserve(times.size());
    for (double t : times) {
        if (t <= 0.0) {
            out.push_back(x0);
            continue;
        }
        while (st.t() < t)
            st.step(times.back());
        out.push_back(t == st.t() ? st.y() : st.dense(t));
    }
    return out;
}

int segments_for(double period, const CycleOptions& opt)
{
    const int m = static_cast<int>(std::ceil(period / opt.segment_time));
    return std::clamp(m, opt.min_segments, opt.max_segments);
}

// Unknowns: scaled nodes y_0..y_{M-1}, T / t_scale, p.
struct Layout {
    int m;
    std::size_t n() const noexcept { return 2 * static_cast<std::size_t>(m) + 2; }
    std::size_t t_index() const noexcept { return 2 * static_cast<std::size_t>(m); }
    std::size_t p_index() const noexcept { return 2 * static_cast<std::size_t>(m) + 1; }
};

State2 node(const num::Vector& u, std::size_t i) noexcept { return {u[2 * i] / sc[0], u[2 * i + 1] / sc[1]}; }

std::vector<State2> nodes_of(const num::Vector& u, Layout lay)
{
    std::vector<State2> v;
    for (std::size_t i = 0; i < static_cast<std::size_t>(lay.m); ++i)
        v.push_back(node(u, i));
    return v;
}

struct Eval {
    num::Vector r;  // 2M shooting rows + phase row
    num::Matrix a;  // (2M+1) x (2M+2)
};

Eval evaluate(const Params& base, ParamId active, const num::Vector& u, Layout lay, const CycleOptions& opt)
{
    const std::size_t m = static_cast<std::size_t>(lay.m);
    const double period = u[lay.t_index()] * t_scale;
    const double pv = u[lay.p_index()];
    if (!(period > 0.0) || !(pv >= 0.0 && pv <= 1.0))
        throw CycleError("shooting: period or parameter out of range");
    const Params p = model::with(base, active, pv);
    const double tau = period / static_cast<double>(m);
    Eval ev{num::Vector(2 * m + 1, 0.0), num::Matrix(2 * m + 1, lay.n())};
    for (std::size_t i = 0; i < m; ++i) {
        const State2 xi = node(u, i);
        if (!(xi[0] >= 0.0 && xi[1] >= 0.0))
            throw CycleError("shooting: node left the nonnegative quadrant");
        const Segment s = integrate_segment(p, active, xi, tau, opt);
        const State2 fe = model::rhs_reduced(s.end, p);
        const std::size_t next = (i + 1) % m;
        for (std::size_t k = 0; k < 2; ++k) {
            const std::size_t row = 2 * i + k;
            ev.r[row] = sc[k] * s.end[k] - u[2 * next + k];
            for (std::size_t l = 0; l < 2; ++l)
                ev.a(row, 2 * i + l) = sc[k] * s.phi[2 * k + l] / sc[l];
            ev.a(row, 2 * next + k) -= 1.0;
            ev.a(row, lay.t_index()) = sc[k] * fe[k] / static_cast<double>(m) * t_scale;
            ev.a(row, lay.p_index()) = sc[k] * s.xp[k];
        }
    }
    const State2 x0 = node(u, 0);
    const model::Mat2 j = model::jacobian_reduced(x0, p);
    const State2 fp = model::param_derivative(x0, p, active);
    ev.r[2 * m] = sc[1] * model::rhs_reduced(x0, p)[1];
    ev.a(2 * m, 0) = sc[1] * j[1][0] / sc[0];
    ev.a(2 * m, 1) = sc[1] * j[1][1] / sc[1];
    ev.a(2 * m, lay.p_index()) = sc[1] * fp[1];
    return ev;
}

/// Extra scalar condition closing the square system.
struct ExtraRow {
    std::function<double(const num::Vector&)> value;
    std::function<num::Vector(const num::Vector&)> gradient;
};

struct NewtonResult {
    bool ok = false;
    num::Vector u;
    Eval ev;
    double residual = 0.0;
};

num::Matrix bordered(const num::Matrix& a, const num::Vector& last_row)
{
    const std::size_t n = a.cols();
    num::Matrix m(n, n);
    for (std::size_t r = 0; r + 1 < n; ++r)
        for (std::size_t c = 0; c < n; ++c)
            m(r, c) = a(r, c);
    for (std::size_t c = 0; c < n; ++c)
        m(n - 1, c) = last_row[c];
    return m;
}

NewtonResult newton(const Params& base, ParamId active, num::Vector u, Layout lay, const ExtraRow& extra,
                    const CycleOptions& opt)
{
    NewtonResult res;
    double prev_norm = std::numeric_limits<double>::infinity();
    for (int it = 0; it <= opt.newton_max_iter; ++it) {
        Eval ev;
        try {
            ev = evaluate(base, active, u, lay, opt);
        } catch (const std::exception&) {
            return res;
        }
        num::Vector f = ev.r;
        f.push_back(extra.value(u));
        const double nrm = num::norm_inf(f);
        if (!std::isfinite(nrm))
            return res;
        if (nrm <= opt.newton_tol) {
            res.ok = true;
            res.u = std::move(u);
            res.ev = std::move(ev);
            res.residual = nrm;
            return res;
        }
        if (it == opt.newton_max_iter || (it > 3 && nrm > 0.9 * prev_norm && nrm > 1e3 * opt.newton_tol))
            return res;
        prev_norm = nrm;
        num::Vector dx;
        try {
            dx = num::LuFactorization(bordered(ev.a, extra.gradient(u))).solve(f);
        } catch (const std::exception&) {
            return res;
        }
        for (std::size_t k = 0; k < u.size(); ++k)
            u[k] -= dx[k];
    }
    return res;
}

num::Vector weights(Layout lay)
{
    num::Vector w(lay.n(), 1.0 / static_cast<double>(lay.m));
    w[lay.t_index()] = 1.0;
    w[lay.p_index()] = 1.0;
    return w;
}

double wdot(const num::Vector& w, const num::Vector& a, const num::Vector& b)
{
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
        s += w[k] * a[k] * b[k];
    return s;
}

/// Null vector of the shooting Jacobian with <border, v> = 1, unit W-norm.
bool tangent(const Eval& ev, const num::Vector& border, const num::Vector& w, num::Vector& out)
{
    num::Vector e(border.size(), 0.0);
    e.back() = 1.0;
    try {
        out = num::LuFactorization(bordered(ev.a, border)).solve(e);
    } catch (const std::exception&) {
        return false;
    }
    const double n = std::sqrt(wdot(w, out, out));
    if (!(n > 0.0) || !std::isfinite(n))
        return false;
    for (auto& v : out)
        v /= n;
    return true;
}

num::Vector pack(const std::vector<State2>& nodes, double period, double pv)
{
    num::Vector u;
    u.reserve(2 * nodes.size() + 2);
    for (const auto& x : nodes) {
        u.push_back(x[0] * sc[0]);
        u.push_back(x[1] * sc[1]);
    }
    u.push_back(period / t_scale);
    u.push_back(pv);
    return u;
}

Cycle unpack(const Params& base, ParamId active, const num::Vector& u, Layout lay, double residual,
             const CycleOptions& opt)
{
    Cycle c;
    c.params = model::with(base, active, u[lay.p_index()]);
    c.period = u[lay.t_index()] * t_scale;
    c.nodes = nodes_of(u, lay);
    c.residual = residual;
    finalize(c, opt);
    return c;
}

/// Orbit states at times in [0, T], each integrated from the shooting node of
/// its segment so that long unstable cycles are not sampled by one long run.
std::vector<State2> sample_by_segment(const Params& p, const std::vector<State2>& nodes, double period,
                                      const std::vector<double>& times, const CycleOptions& opt)
{
    const std::size_t m = nodes.size();
    const double tau = period / static_cast<double>(m);
    std::vector<std::vector<double>> local(m);
    std::vector<std::pair<std::size_t, std::size_t>> where;  // (segment, index in local)
    for (double t : times) {
        const std::size_t i = std::min(m - 1, static_cast<std::size_t>(std::max(0.0, t) / tau));
        where.emplace_back(i, local[i].size());
        local[i].push_back(std::max(0.0, t - static_cast<double>(i) * tau));
    }
    std::vector<std::vector<State2>> seg(m);
    for (std::size_t i = 0; i < m; ++i)
        if (!local[i].empty())
            seg[i] = sample_orbit(p, nodes[i], local[i], opt);
    std::vector<State2> out;
    out.reserve(times.size());
    for (const auto& [i, k] : where)
        out.push_back(seg[i][k]);
    return out;
}

/// Re-samples the nodes of u for a different segment count.
num::Vector remesh(const Params& base, ParamId active, const num::Vector& u, Layout from, int m_new,
                   const CycleOptions& opt)
{
    const double period = u[from.t_index()] * t_scale;
    const Params p = model::with(base, active, u[from.p_index()]);
    std::vector<double> times;
    for (int i = 0; i < m_new; ++i)
        times.push_back(period * i / m_new);
    return pack(sample_by_segment(p, nodes_of(u, from), period, times, opt), period, u[from.p_index()]);
}

/// Equilibrium enclosed by a cycle: the endemic equilibrium nearest the mesh centroid.
std::optional<State2> inner_equilibrium(const Cycle& c)
{
    State2 mean{0.0, 0.0};
    for (const auto& x : c.mesh) {
        mean[0] += x[0];
        mean[1] += x[1];
    }
    mean[0] /= static_cast<double>(c.mesh.size());
    mean[1] /= static_cast<double>(c.mesh.size());
    std::optional<State2> best;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& e : model::endemic_equilibria(c.params)) {
        const double d = std::hypot((e.state[0] - mean[0]) * sc[0], (e.state[1] - mean[1]) * sc[1]);
        if (d < best_d) {
            best_d = d;
            best = e.planar();
        }
    }
    return best;
}

}  // namespace

std::string_view to_string(CycleStability s) noexcept
{
    switch (s) {
    case CycleStability::Stable: return "stable";
    case CycleStability::Unstable: return "unstable";
    case CycleStability::Semistable: return "semistable";
    }
    return "?";
}

double amplitude(const Cycle& c) noexcept
{
    if (c.mesh.empty())
        return 0.0;
    double lo0 = c.mesh[0][0], hi0 = lo0, lo1 = c.mesh[0][1], hi1 = lo1;
    for (const auto& x : c.mesh) {
        lo0 = std::min(lo0, x[0]);
        hi0 = std::max(hi0, x[0]);
        lo1 = std::min(lo1, x[1]);
        hi1 = std::max(hi1, x[1]);
    }
    return std::max((hi0 - lo0) * sc[0], (hi1 - lo1) * sc[1]);
}

std::array<std::complex<double>, 2> floquet_multipliers(const Cycle& c, const CycleOptions& opt)
{
    if (c.nodes.empty() || !(c.period > 0.0))
        throw CycleError("floquet_multipliers: cycle has no nodes");
    const double tau = c.period / static_cast<double>(c.nodes.size());
    // Trivial multiplier as a product of per-segment ratios <f(end), Phi f(start)> / |f(end)|^2
    // in scaled coordinates; exact for the flow, and free of the growth that
    // chaining the full monodromy would amplify.
    double trivial = 1.0;
    double logdet = 0.0;
    for (const auto& x : c.nodes) {
        const Segment s = integrate_segment(c.params, ParamId::Gamma, x, tau, opt);
        const State2 f0 = model::rhs_reduced(x, c.params);
        const State2 f1 = model::rhs_reduced(s.end, c.params);
        const State2 v{s.phi[0] * f0[0] + s.phi[1] * f0[1], s.phi[2] * f0[0] + s.phi[3] * f0[1]};
        const double a0 = f1[0] * sc[0], a1 = f1[1] * sc[1];
        trivial *= (a0 * v[0] * sc[0] + a1 * v[1] * sc[1]) / (a0 * a0 + a1 * a1);
        logdet += s.logdet;
    }
    return {std::complex<double>{trivial, 0.0}, std::complex<double>{std::exp(logdet), 0.0}};
}

void finalize(Cycle& c, const CycleOptions& opt)
{
    const int n = std::max(2, opt.mesh_points);
    std::vector<double> times;
    for (int k = 0; k < n; ++k)
        times.push_back(c.period * k / (n - 1));
    c.mesh = sample_by_segment(c.params, c.nodes, c.period, times, opt);
    c.mesh.back() = c.mesh.front();
    c.multipliers = floquet_multipliers(c, opt);
    const double mu2 = c.multipliers[1].real();
    if (std::abs(mu2 - 1.0) <= opt.stability_tol)
        c.stability = CycleStability::Semistable;
    else
        c.stability = mu2 < 1.0 ? CycleStability::Stable : CycleStability::Unstable;
}

Cycle cycle_from_hopf(const SpecialPoint& hb, ParamId active, double amp, const Params& base, const CycleOptions& opt)
{
    if (hb.kind != contin::PointKind::HB)
        throw std::invalid_argument("cycle_from_hopf: special point is not HB");
    if (!(amp > 0.0))
        throw std::invalid_argument("cycle_from_hopf: amplitude must be positive");
    const Params p = contin::params_at(hb, base);
    const State2 xs = hb.state;
    const model::Mat2 j = model::jacobian_reduced(xs, p);
    const double omega = contin::hopf_frequency(j);

    using C = std::complex<double>;
    std::array<C, 2> q;
    if (std::abs(j[0][1]) >= std::abs(j[1][0]))
        q = {C{j[0][1], 0.0}, C{-j[0][0], omega}};
    else
        q = {C{-j[1][1], omega}, C{j[1][0], 0.0}};
    // Linear flow: Re(exp(i(theta0 + omega t)) q); theta0 puts node 0 at the I maximum.
    const double theta0 = -std::arg(q[1]);
    auto offset = [&](double theta) {
        const C e = std::polar(1.0, theta);
        return State2{(e * q[0]).real(), (e * q[1]).real()};
    };
    const State2 d0 = offset(theta0);
    const double c = amp / std::hypot(d0[0] * sc[0], d0[1] * sc[1]);
    const double period = 2.0 * std::numbers::pi / omega;
    const Layout lay{segments_for(period, opt)};
    std::vector<State2> nodes;
    for (int i = 0; i < lay.m; ++i) {
        const State2 d = offset(theta0 + 2.0 * std::numbers::pi * i / lay.m);
        nodes.push_back({xs[0] + c * d[0], xs[1] + c * d[1]});
    }
    const double p0 = model::get(p, active);
    const num::Vector u0 = pack(nodes, period, p0);
    const State2 ys{xs[0] * sc[0], xs[1] * sc[1]};
    ExtraRow amplitude_row{
        [&](const num::Vector& u) {
            return (u[0] - ys[0]) * (u[0] - ys[0]) + (u[1] - ys[1]) * (u[1] - ys[1]) - amp * amp;
        },
        [&](const num::Vector& u) {
            num::Vector g(u.size(), 0.0);
            g[0] = 2.0 * (u[0] - ys[0]);
            g[1] = 2.0 * (u[1] - ys[1]);
            return g;
        }};
    const NewtonResult nr = newton(p, active, u0, lay, amplitude_row, opt);
    if (!nr.ok)
        throw CycleError("cycle_from_hopf: shooting corrector failed; try a smaller amplitude");
    return unpack(p, active, nr.u, lay, nr.residual, opt);
}

namespace {

struct Accepted {
    num::Vector u;
    Layout lay;
    num::Vector tangent;
    Eval ev;
};

/// Bisection on the sign of the tangent's parameter component between two
/// accepted points (same layout).
std::optional<num::Vector> locate_fold(const Params& base, ParamId active, const Accepted& a, const Accepted& b,
                                       const CycleOptions& opt)
{
    const Layout lay = b.lay;
    const num::Vector w = weights(lay);
    num::Vector ua = a.u;
    if (a.lay.m != lay.m)
        ua = remesh(base, active, a.u, a.lay, lay.m, opt);
    const num::Vector ub = b.u;
    num::Vector d(ub.size());
    for (std::size_t k = 0; k < d.size(); ++k)
        d[k] = ub[k] - ua[k];
    const double nd = std::sqrt(wdot(w, d, d));
    if (!(nd > 0.0))
        return std::nullopt;
    for (auto& v : d)
        v /= nd;
    num::Vector border(b.tangent.size());
    for (std::size_t k = 0; k < border.size(); ++k)
        border[k] = w[k] * b.tangent[k];
    const double sign_b = b.tangent[lay.p_index()] > 0.0 ? 1.0 : -1.0;

    double s_lo = 0.0, s_hi = 1.0;
    num::Vector lo = ua, hi = ub;
    for (int it = 0; it < 40; ++it) {
        if (std::abs(hi[lay.p_index()] - lo[lay.p_index()]) < 1e-14)
            break;
        const double s = 0.5 * (s_lo + s_hi);
        num::Vector anchor(ua.size());
        for (std::size_t k = 0; k < anchor.size(); ++k)
            anchor[k] = ua[k] + s * nd * d[k];
        ExtraRow row{[&](const num::Vector& u) {
                         double v = 0.0;
                         for (std::size_t k = 0; k < u.size(); ++k)
                             v += w[k] * d[k] * (u[k] - anchor[k]);
                         return v;
                     },
                     [&](const num::Vector& u) {
                         num::Vector g(u.size());
                         for (std::size_t k = 0; k < u.size(); ++k)
                             g[k] = w[k] * d[k];
                         return g;
                     }};
        num::Vector guess(ua.size());
        for (std::size_t k = 0; k < guess.size(); ++k)
            guess[k] = 0.5 * (lo[k] + hi[k]);
        const NewtonResult nr = newton(base, active, guess, lay, row, opt);
        if (!nr.ok)
            break;
        num::Vector t;
        if (!tangent(nr.ev, border, w, t))
            break;
        if ((t[lay.p_index()] > 0.0 ? 1.0 : -1.0) == sign_b) {
            hi = nr.u;
            s_hi = s;
        } else {
            lo = nr.u;
            s_lo = s;
        }
    }
    const bool max_fold = a.tangent[a.lay.p_index()] > 0.0;
    return (lo[lay.p_index()] > hi[lay.p_index()]) == max_fold ? lo : hi;
}

}  // namespace

CycleBranch continue_cycles(const Cycle& start, ParamId active, std::pair<double, double> range,
                            const CycleContinuationOptions& opt)
{
    if (start.nodes.empty())
        throw std::invalid_argument("continue_cycles: start cycle has no shooting nodes");
    const double lo_p = std::max(0.0, std::min(range.first, range.second));
    const double hi_p = std::min(1.0, std::max(range.first, range.second));
    const Params base = start.params;
    const CycleOptions& co = opt.cycle;

    CycleBranch br;
    br.active = active;
    br.frozen_param_value = model::get(base, active == ParamId::Gamma ? ParamId::Rho : ParamId::Gamma);
    br.period_blowup_threshold = opt.period_blowup_threshold;

    Layout lay{static_cast<int>(start.nodes.size())};
    num::Vector u = pack(start.nodes, start.period, model::get(base, active));
    Eval ev;
    try {
        ev = evaluate(base, active, u, lay, co);
    } catch (const std::exception& e) {
        throw CycleError(std::string("continue_cycles: start cycle cannot be evaluated: ") + e.what());
    }
    if (num::norm_inf(ev.r) > 1e-7)
        throw CycleError("continue_cycles: start cycle does not satisfy the shooting conditions");

    // Initial orientation.
    num::Vector w = weights(lay);
    num::Vector border(lay.n(), 0.0);
    if (opt.direction == 0) {
        const auto centre = inner_equilibrium(start);
        if (!centre)
            throw CycleError("continue_cycles: no equilibrium inside the start cycle");
        border[0] = 2.0 * (u[0] - (*centre)[0] * sc[0]);
        border[1] = 2.0 * (u[1] - (*centre)[1] * sc[1]);
    } else {
        border[lay.p_index()] = opt.direction > 0 ? 1.0 : -1.0;
    }
    num::Vector tau;
    if (!tangent(ev, border, w, tau))
        throw CycleError("continue_cycles: singular start point");

    br.cycles.push_back(start);
    Accepted prev{u, lay, tau, ev};
    double h = opt.h0;
    int successes = 0;

    while (static_cast<int>(br.cycles.size()) < opt.max_points) {
        num::Vector pred(u.size());
        for (std::size_t k = 0; k < u.size(); ++k)
            pred[k] = u[k] + h * tau[k];
        ExtraRow row{[&](const num::Vector& x) {
                         double v = 0.0;
                         for (std::size_t k = 0; k < x.size(); ++k)
                             v += w[k] * tau[k] * (x[k] - pred[k]);
                         return v;
                     },
                     [&](const num::Vector& x) {
                         num::Vector g(x.size());
                         for (std::size_t k = 0; k < x.size(); ++k)
                             g[k] = w[k] * tau[k];
                         return g;
                     }};
        NewtonResult nr = newton(base, active, pred, lay, row, co);
        num::Vector tau_new;
        bool ok = nr.ok;
        if (ok) {
            num::Vector bd(tau.size());
            for (std::size_t k = 0; k < bd.size(); ++k)
                bd[k] = w[k] * tau[k];
            ok = tangent(nr.ev, bd, w, tau_new) && wdot(w, tau_new, tau) >= 0.9;
        }
        if (!ok) {
            h *= 0.5;
            successes = 0;
            if (h < opt.hmin) {
                br.truncated = true;
                br.termination = "step size underflow";
                break;
            }
            continue;
        }

        const double pv = nr.u[lay.p_index()];
        if (pv < lo_p || pv > hi_p) {
            br.termination = "parameter range boundary";
            break;
        }
        Cycle cyc = unpack(base, active, nr.u, lay, nr.residual, co);
        const Accepted cur{nr.u, lay, tau_new, nr.ev};
        // Node 0 sits at the I maximum; passing through a Hopf point moves it
        // to the I minimum of the mirrored small cycle.
        if (const auto centre = inner_equilibrium(cyc); !centre || cyc.nodes[0][1] <= (*centre)[1]) {
            br.termination = "cycle shrank onto a Hopf point";
            break;
        }

        const double amp_prev = amplitude(br.cycles.back());
        // Fold of the branch in the parameter: LPC. The fold cycle joins the list.
        if ((prev.tangent[prev.lay.p_index()] > 0.0) != (tau_new[lay.p_index()] > 0.0)) {
            if (const auto uf = locate_fold(base, active, prev, cur, co)) {
                Cycle lpc = unpack(base, active, *uf, lay, 0.0, co);
                lpc.stability = CycleStability::Semistable;
                SpecialPoint sp;
                sp.kind = contin::PointKind::LPC;
                sp.gamma = lpc.params.gamma;
                sp.rho = lpc.params.rho;
                sp.state = lpc.nodes[0];
                sp.aux["period"] = lpc.period;
                sp.aux["multiplier"] = lpc.multipliers[1].real();
                sp.aux["branch_index"] = static_cast<double>(br.cycles.size());
                br.special.push_back(sp);
                br.cycles.push_back(std::move(lpc));
            }
        }

        br.cycles.push_back(cyc);
        prev = cur;
        u = nr.u;
        tau = tau_new;

        if (cyc.period >= opt.period_max) {
            br.termination = "period blow-up";
            break;
        }
        if (amplitude(cyc) < opt.min_amplitude && amplitude(cyc) < amp_prev) {
            br.termination = "cycle shrank onto a Hopf point";
            break;
        }

        const int m_new = segments_for(cyc.period, co);
        if (m_new != lay.m) {
            const Layout nl{m_new};
            num::Vector un = remesh(base, active, u, lay, m_new, co);
            const num::Vector wn = weights(nl);
            // Node 0, T and p keep their meaning across meshes.
            num::Vector bd(nl.n(), 0.0);
            bd[0] = wn[0] * tau[0];
            bd[1] = wn[1] * tau[1];
            bd[nl.t_index()] = tau[lay.t_index()];
            bd[nl.p_index()] = tau[lay.p_index()];
            ExtraRow fix{[&](const num::Vector& x) { return x[nl.t_index()] - un[nl.t_index()]; },
                         [&](const num::Vector& x) {
                             num::Vector g(x.size(), 0.0);
                             g[nl.t_index()] = 1.0;
                             return g;
                         }};
            const NewtonResult rr = newton(base, active, un, nl, fix, co);
            num::Vector tn;
            if (!rr.ok || !tangent(rr.ev, bd, wn, tn)) {
                br.truncated = true;
                br.termination = "re-meshing failed";
                break;
            }
            lay = nl;
            w = wn;
            u = rr.u;
            tau = tn;
            prev = Accepted{u, lay, tau, rr.ev};
        }
        if (++successes >= 3) {
            h = std::min(1.3 * h, opt.hmax);
            successes = 0;
        }
    }
    if (br.termination.empty())
        br.termination = "maximum number of points";

    std::string diag;
    if (auto hom = homoclinic_proxy(br, &diag)) {
        br.special.push_back(*hom);
    } else if (!br.cycles.empty() && br.cycles.back().period >= br.period_blowup_threshold) {
        // Period blew up but the extrapolation was rejected: flag the last entry.
        const Cycle& last = br.cycles.back();
        SpecialPoint sp;
        sp.kind = contin::PointKind::HOM;
        sp.gamma = last.params.gamma;
        sp.rho = last.params.rho;
        sp.state = last.nodes[0];
        sp.aux["period"] = last.period;
        sp.aux["extrapolated"] = 0.0;
        br.special.push_back(sp);
    }
    return br;
}

std::optional<SpecialPoint> homoclinic_proxy(const CycleBranch& branch, std::string* diagnostic, HomoclinicFit* fit)
{
    auto fail = [&](const std::string& why) -> std::optional<SpecialPoint> {
        if (diagnostic)
            *diagnostic = why;
        return std::nullopt;
    };
    std::vector<const Cycle*> tail;
    for (const auto& c : branch.cycles)
        if (c.period >= branch.period_blowup_threshold)
            tail.push_back(&c);
    if (tail.size() < 5)
        return fail("fewer than five cycles above the period threshold");
    tail.erase(tail.begin(), tail.end() - 5);
    for (std::size_t k = 1; k < tail.size(); ++k)
        if (!(tail[k]->period > tail[k - 1]->period))
            return fail("period tail is not monotone");

    const ParamId active = branch.active;
    std::array<double, 5> t{}, pv{};
    for (std::size_t k = 0; k < 5; ++k) {
        t[k] = tail[k]->period;
        pv[k] = model::get(tail[k]->params, active);
    }
    const double t0 = t[0];
    // For fixed sigma the model is linear in (param_hom, c).
    auto solve = [&](double sigma, double& a, double& c) {
        double s1 = 0, se = 0, see = 0, sp = 0, sep = 0;
        for (std::size_t k = 0; k < 5; ++k) {
            const double e = std::exp(-sigma * (t[k] - t0));
            s1 += 1.0;
            se += e;
            see += e * e;
            sp += pv[k];
            sep += e * pv[k];
        }
        const double det = s1 * see - se * se;
        if (std::abs(det) < 1e-300) {
            a = sp / s1;
            c = 0.0;
        } else {
            a = (see * sp - se * sep) / det;
            c = (s1 * sep - se * sp) / det;
        }
        double sse = 0.0;
        for (std::size_t k = 0; k < 5; ++k) {
            const double r = pv[k] - a - c * std::exp(-sigma * (t[k] - t0));
            sse += r * r;
        }
        return sse;
    };
    // Golden-section search on log(sigma).
    double lo = std::log(1e-5), hi = std::log(0.5);
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
    double a = 0, c = 0;
    double f1 = solve(std::exp(x1), a, c), f2 = solve(std::exp(x2), a, c);
    for (int it = 0; it < 100; ++it) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = solve(std::exp(x1), a, c);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = solve(std::exp(x2), a, c);
        }
    }
    const double sigma = std::exp(0.5 * (lo + hi));
    solve(sigma, a, c);
    double spread = 0.0, worst = 0.0;
    for (std::size_t k = 0; k < 5; ++k) {
        spread = std::max(spread, std::abs(pv[k] - pv[0]));
        worst = std::max(worst, std::abs(pv[k] - a - c * std::exp(-sigma * (t[k] - t0))));
    }
    const double rel = spread > 0.0 ? worst / spread : 0.0;

    const Cycle& last = *tail.back();
    double dmin = std::numeric_limits<double>::infinity();
    State2 saddle{};
    for (const auto& e : model::endemic_equilibria(last.params)) {
        if (e.stability != model::Stability::Saddle)
            continue;
        for (const auto& x : last.mesh) {
            const double d = std::max(std::abs(x[0] - e.state[0]) * sc[0], std::abs(x[1] - e.state[1]) * sc[1]);
            if (d < dmin) {
                dmin = d;
                saddle = e.planar();
            }
        }
    }
    if (fit)
        *fit = HomoclinicFit{a, sigma, c, rel, dmin};
    if (!(rel < 1e-3))
        return fail("extrapolation residual above 1e-3");
    if (!(dmin <= 1e-2))
        return fail("longest cycle does not pass within 1e-2 of a saddle");
    // The extrapolated limit must lie beyond the tail, in the direction it is moving.
    SpecialPoint sp;
    sp.kind = contin::PointKind::HOM;
    const Params ph = model::with(last.params, active, a);
    sp.gamma = ph.gamma;
    sp.rho = ph.rho;
    sp.state = saddle;
    for (const auto& e : model::endemic_equilibria(ph))
        if (e.stability == model::Stability::Saddle)
            sp.state = e.planar();
    sp.aux["period"] = last.period;
    sp.aux["sigma"] = sigma;
    sp.aux["fit_residual"] = rel;
    sp.aux["saddle_distance"] = dmin;
    sp.aux["extrapolated"] = 1.0;
    return sp;
}

namespace {

/// Corrects u (any cycle near the target) with the parameter pinned to `target`.
NewtonResult correct_at(const Params& base, ParamId active, const num::Vector& u, Layout lay, double target,
                        const CycleOptions& opt)
{
    const std::size_t ip = lay.p_index();
    ExtraRow pin{[ip, target](const num::Vector& x) { return x[ip] - target; },
                 [ip](const num::Vector& x) {
                     num::Vector g(x.size(), 0.0);
                     g[ip] = 1.0;
                     return g;
                 }};
    num::Vector start = u;
    start[ip] = target;
    return newton(base, active, start, lay, pin, opt);
}

/// Fold cycles found from different parameter families sit at slightly
/// different parameters, so they are matched more loosely.
bool same_cycle(const Cycle& a, const Cycle& b)
{
    const bool folds = a.stability == CycleStability::Semistable && b.stability == CycleStability::Semistable;
    const double dt = folds ? 1e-3 : 1e-6;
    const double dx = folds ? 1e-2 : 1e-5;
    const double d = std::max(std::abs(a.nodes[0][0] - b.nodes[0][0]) * sc[0],
                              std::abs(a.nodes[0][1] - b.nodes[0][1]) * sc[1]);
    return std::abs(a.period - b.period) <= dt * std::max(a.period, b.period) && d <= dx;
}

}  // namespace

Cycle cycle_from_state(const Params& p, const State2& x, double period_guess, const CycleOptions& opt)
{
    if (!(period_guess > 0.0))
        throw std::invalid_argument("cycle_from_state: period guess must be positive");
    using Stepper = ode::DormandPrince5<2>;
    ode::StepOptions so;
    so.rel_tol = opt.rel_tol;
    so.abs_tol = opt.abs_tol;
    Stepper st([&p](double, const State2& y) { return model::rhs_reduced(y, p); }, 0.0, x, so);
    const double t_end = 10.0 * period_guess;
    std::optional<State2> peak;
    while (!peak && st.t() < t_end) {
        const double f_before = model::rhs_reduced(st.y(), p)[1];
        st.step(t_end);
        const double f_after = model::rhs_reduced(st.y(), p)[1];
        if (f_before > 0.0 && f_after <= 0.0) {
            double a = st.t_prev(), b = st.t();
            for (int it = 0; it < 60; ++it) {
                const double m = 0.5 * (a + b);
                (model::rhs_reduced(st.dense(m), p)[1] > 0.0 ? a : b) = m;
            }
            peak = st.dense(0.5 * (a + b));
        }
    }
    if (!peak)
        throw CycleError("cycle_from_state: orbit has no I maximum within ten period guesses");
    const Layout lay{segments_for(period_guess, opt)};
    std::vector<double> times;
    for (int i = 0; i < lay.m; ++i)
        times.push_back(period_guess * i / lay.m);
    const num::Vector u = pack(sample_orbit(p, *peak, times, opt), period_guess, p.gamma);
    const NewtonResult nr = correct_at(p, ParamId::Gamma, u, lay, p.gamma, opt);
    if (!nr.ok)
        throw CycleError("cycle_from_state: shooting corrector failed");
    return unpack(p, ParamId::Gamma, nr.u, lay, nr.residual, opt);
}

CycleCensus cycles_at(const Params& p, const CensusOptions& opt)
{
    CycleCensus out;
    const auto eqs = model::endemic_equilibria(p);
    if (eqs.empty())
        return out;
    const CycleOptions& co = opt.continuation.cycle;
    for (ParamId active : {ParamId::Rho, ParamId::Gamma}) {
        const double target = model::get(p, active);
        contin::Branch eb;
        try {
            eb = contin::continue_bidirectional(p, eqs.back(), active, {0.0, 1.0});
        } catch (const std::exception&) {
            continue;
        }
        for (const auto& hb : eb.special) {
            if (hb.kind != contin::PointKind::HB)
                continue;
            CycleBranch br;
            try {
                const Cycle c0 = cycle_from_hopf(hb, active, opt.hopf_amplitude, p, co);
                br = continue_cycles(c0, active, {0.0, 1.0}, opt.continuation);
            } catch (const std::exception&) {
                continue;
            }
            std::vector<std::size_t> folds;
            for (const auto& sp : br.special) {
                const double v = sp.kind == contin::PointKind::LPC || sp.kind == contin::PointKind::HOM
                                     ? (active == ParamId::Gamma ? sp.gamma : sp.rho)
                                     : std::numeric_limits<double>::quiet_NaN();
                if (sp.kind == contin::PointKind::LPC && std::abs(v - target) <= opt.semistable_param_tol) {
                    const auto k = static_cast<std::size_t>(sp.aux.at("branch_index"));
                    folds.push_back(k);
                    Cycle c = br.cycles[k];
                    c.stability = CycleStability::Semistable;
                    out.cycles.push_back(std::move(c));
                    out.nearby.push_back(sp);
                } else if (sp.kind == contin::PointKind::HOM && sp.aux.count("extrapolated") &&
                           sp.aux.at("extrapolated") == 1.0 && std::abs(v - target) <= opt.homoclinic_param_tol) {
                    out.homoclinic = true;
                    out.nearby.push_back(sp);
                }
            }
            for (std::size_t k = 0; k + 1 < br.cycles.size(); ++k) {
                if (std::find_if(folds.begin(), folds.end(), [k](std::size_t f) { return f == k || f == k + 1; }) !=
                    folds.end())
                    continue;
                const Cycle& a = br.cycles[k];
                const Cycle& b = br.cycles[k + 1];
                const double pa = model::get(a.params, active) - target;
                const double pb = model::get(b.params, active) - target;
                if (pa * pb > 0.0 || pa == pb || (pb == 0.0 && k + 2 < br.cycles.size()))
                    continue;
                const Layout lay{static_cast<int>(b.nodes.size())};
                num::Vector ua = pack(a.nodes, a.period, model::get(a.params, active));
                if (a.nodes.size() != b.nodes.size())
                    ua = remesh(p, active, ua, Layout{static_cast<int>(a.nodes.size())}, lay.m, co);
                const num::Vector ub = pack(b.nodes, b.period, model::get(b.params, active));
                const double w = pa / (pa - pb);
                num::Vector guess(ua.size());
                for (std::size_t i = 0; i < guess.size(); ++i)
                    guess[i] = (1.0 - w) * ua[i] + w * ub[i];
                const NewtonResult nr = correct_at(p, active, guess, lay, target, co);
                if (!nr.ok)
                    continue;
                out.cycles.push_back(unpack(p, active, nr.u, lay, nr.residual, co));
            }
        }
    }
    std::vector<Cycle> unique;
    for (auto& c : out.cycles)
        if (std::none_of(unique.begin(), unique.end(), [&](const Cycle& u) { return same_cycle(u, c); }))
            unique.push_back(std::move(c));
    std::sort(unique.begin(), unique.end(),
              [](const Cycle& a, const Cycle& b) { return amplitude(a) < amplitude(b); });
    out.cycles = std::move(unique);
    return out;
}

}  // namespace sirbif::cycles
