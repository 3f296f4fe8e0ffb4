#include "sirbif/codim2.hpp"

#include "sirbif/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>

namespace sirbif::codim2 {

namespace {

using W = std::array<double, 4>;  // scaled (S, I, gamma, rho)
constexpr auto& sc = model::state_scale;

double dot(const W& a, const W& b) noexcept { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]; }
double norm(const W& a) noexcept { return std::sqrt(dot(a, a)); }
W sub(const W& a, const W& b) noexcept { return {a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]}; }
W axpy(const W& x, double s, const W& d) noexcept
{
    return {x[0] + s * d[0], x[1] + s * d[1], x[2] + s * d[2], x[3] + s * d[3]};
}

Params params_of(const Params& base, double g, double r) noexcept
{
    Params p = base;
    p.gamma = g;
    p.rho = r;
    return p;
}
State2 state_of(std::span<const double> w) noexcept { return {w[0] / sc[0], w[1] / sc[1]}; }
W to_w(const State2& x, double g, double r) noexcept { return {x[0] * sc[0], x[1] * sc[1], g, r}; }

bool is_fold(CurveKind k) noexcept { return k == CurveKind::FoldCurve; }

/// Gradient of det J or trace J along a Jacobian derivative.
double grad_of(bool det_test, const model::Mat2& j, const model::Mat2& dj) noexcept
{
    if (!det_test)
        return dj[0][0] + dj[1][1];
    return j[1][1] * dj[0][0] - j[0][1] * dj[1][0] - j[1][0] * dj[0][1] + j[0][0] * dj[1][1];
}

std::array<double, 3> defining(CurveKind kind, const Params& base, std::span<const double> w)
{
    const Params p = params_of(base, w[2], w[3]);
    const State2 x = state_of(w);
    const State2 f = model::rhs_reduced(x, p);
    const model::Mat2 j = model::jacobian_reduced(x, p);
    return {f[0], f[1], is_fold(kind) ? model::det(j) : model::trace(j)};
}

/// 3x4 Jacobian of the defining system in scaled unknowns.
num::Matrix defining_jacobian(CurveKind kind, const Params& base, std::span<const double> w)
{
    const Params p = params_of(base, w[2], w[3]);
    const State2 x = state_of(w);
    const model::Mat2 j = model::jacobian_reduced(x, p);
    const State2 fg = model::param_derivative(x, p, model::ParamId::Gamma);
    const State2 fr = model::param_derivative(x, p, model::ParamId::Rho);
    const auto d = model::jacobian_derivatives(x, p);
    const bool dt = is_fold(kind);
    num::Matrix a(3, 4);
    for (std::size_t r = 0; r < 2; ++r) {
        a(r, 0) = j[r][0] / sc[0];
        a(r, 1) = j[r][1] / sc[1];
        a(r, 2) = fg[r];
        a(r, 3) = fr[r];
    }
    a(2, 0) = grad_of(dt, j, d.dS) / sc[0];
    a(2, 1) = grad_of(dt, j, d.dI) / sc[1];
    a(2, 2) = grad_of(dt, j, d.dgamma);
    a(2, 3) = grad_of(dt, j, d.drho);
    return a;
}

/// Null vector of a 3x4 matrix from signed 3x3 minors.
W null_vector(const num::Matrix& a)
{
    W v{};
    for (std::size_t k = 0; k < 4; ++k) {
        std::array<std::size_t, 3> c{};
        for (std::size_t i = 0, n = 0; i < 4; ++i)
            if (i != k)
                c[n++] = i;
        const double m = a(0, c[0]) * (a(1, c[1]) * a(2, c[2]) - a(1, c[2]) * a(2, c[1])) -
                         a(0, c[1]) * (a(1, c[0]) * a(2, c[2]) - a(1, c[2]) * a(2, c[0])) +
                         a(0, c[2]) * (a(1, c[0]) * a(2, c[1]) - a(1, c[1]) * a(2, c[0]));
        v[k] = (k % 2 == 0 ? 1.0 : -1.0) * m;
    }
    const double n = norm(v);
    if (!(n > 0.0) || !std::isfinite(n))
        return W{};
    for (auto& x : v)
        x /= n;
    return v;
}

bool correct(CurveKind kind, const Params& base, const W& anchor, const W& dir, W& w, double tol)
{
    auto g = [&](std::span<const double> v) {
        const auto d = defining(kind, base, v);
        return num::Vector{d[0], d[1], d[2],
                           (v[0] - anchor[0]) * dir[0] + (v[1] - anchor[1]) * dir[1] +
                               (v[2] - anchor[2]) * dir[2] + (v[3] - anchor[3]) * dir[3]};
    };
    auto jac = [&](std::span<const double> v) {
        const num::Matrix a = defining_jacobian(kind, base, v);
        num::Matrix m(4, 4);
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t c = 0; c < 4; ++c)
                m(r, c) = a(r, c);
        for (std::size_t c = 0; c < 4; ++c)
            m(3, c) = dir[c];
        return m;
    };
    num::NewtonReport rep;
    try {
        rep = num::newton(g, jac, num::Vector(w.begin(), w.end()), tol, 15);
    } catch (const std::exception&) {
        return false;
    }
    if (!rep.converged)
        return false;
    w = {rep.root[0], rep.root[1], rep.root[2], rep.root[3]};
    return true;
}

struct Monitor {
    double det, trace, l1;
    bool l1_ok;
};

CurvePoint make_point(CurveKind kind, const Params& base, const W& w, bool with_l1)
{
    CurvePoint cp;
    cp.gamma = w[2];
    cp.rho = w[3];
    cp.state = state_of(w);
    const auto d = defining(kind, base, w);
    cp.residual = std::max({std::abs(d[0]), std::abs(d[1]), std::abs(d[2])});
    const model::Mat2 j = model::jacobian_reduced(cp.state, params_of(base, w[2], w[3]));
    cp.det = model::det(j);
    cp.trace = model::trace(j);
    if (kind == CurveKind::HopfCurve && with_l1 && cp.det > 0.0) {
        const auto est = lyapunov_l1_checked(params_of(base, w[2], w[3]), cp.state, std::sqrt(cp.det));
        cp.l1 = est.value;
        cp.l1_converged = est.converged;
    }
    return cp;
}

W w_of(const CurvePoint& cp) noexcept { return to_w(cp.state, cp.gamma, cp.rho); }

/// Bisection along the chord between two curve points on a scalar monitor.
/// Returns the bracket endpoints after refinement.
std::pair<W, W> bisect(CurveKind kind, const Params& base, const CurvePoint& a, const CurvePoint& b,
                       const std::function<double(const W&)>& monitor)
{
    W lo = w_of(a), hi = w_of(b);
    const W wa = lo;
    const W d = sub(hi, lo);
    const double nd = norm(d);
    const W dir{d[0] / nd, d[1] / nd, d[2] / nd, d[3] / nd};
    double m_lo = monitor(lo);
    double s_lo = 0.0, s_hi = 1.0;
    for (int it = 0; it < 60 && norm(sub(hi, lo)) > 1e-13; ++it) {
        const double s = 0.5 * (s_lo + s_hi);
        const W anchor = axpy(wa, s, d);
        W w{0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2]), 0.5 * (lo[3] + hi[3])};
        if (!correct(kind, base, anchor, dir, w, 1e-11))
            break;
        const double m = monitor(w);
        if (!std::isfinite(m))
            break;
        if ((m > 0.0) == (m_lo > 0.0)) {
            lo = w;
            s_lo = s;
            m_lo = m;
        } else {
            hi = w;
            s_hi = s;
        }
    }
    return {lo, hi};
}

SpecialPoint special_at(contin::PointKind kind, const Params& base, const W& w)
{
    SpecialPoint sp;
    sp.kind = kind;
    sp.gamma = w[2];
    sp.rho = w[3];
    sp.state = state_of(w);
    const model::Mat2 j = model::jacobian_reduced(sp.state, params_of(base, w[2], w[3]));
    sp.aux["det"] = model::det(j);
    sp.aux["trace"] = model::trace(j);
    return sp;
}

/// One direction of a curve run. Returns the points after the seed.
std::vector<CurvePoint> run(CurveKind kind, const Params& base, const W& seed, W t, const CurveOptions& opt,
                            bool& truncated, std::string& warning)
{
    std::vector<CurvePoint> out;
    W w = seed;
    W dir = t;
    double h = opt.h0;
    int successes = 0;
    const bool hopf = kind == CurveKind::HopfCurve;
    while (static_cast<int>(out.size()) + 1 < opt.max_points) {
        const W wp = axpy(w, h, dir);
        W wn = wp;
        bool ok = correct(kind, base, wp, dir, wn, opt.newton_tol);
        W tn{};
        if (ok) {
            tn = null_vector(defining_jacobian(kind, base, wn));
            if (norm(tn) == 0.0)
                tn = t;
            if (dot(tn, sub(wn, w)) < 0.0)
                for (auto& v : tn)
                    v = -v;
            if (dot(tn, t) < 0.8 || norm(sub(wn, wp)) > 0.5 * h)
                ok = false;
        }
        if (!ok) {
            h *= 0.5;
            successes = 0;
            if (h < opt.hmin) {
                truncated = true;
                warning += "step size underflow; ";
                break;
            }
            continue;
        }
        if (wn[2] < opt.gamma_min || wn[2] > opt.gamma_max || wn[3] < opt.rho_min || wn[3] > opt.rho_max)
            break;
        if (wn[0] <= 0.0 || wn[1] <= 0.0)
            break;
        CurvePoint cp = make_point(kind, base, wn, opt.l1_monitor);
        cp.arclength = (out.empty() ? 0.0 : out.back().arclength) + std::min(h, std::abs(dot(sub(wn, w), dir)));
        out.push_back(cp);
        if (hopf && cp.det <= 0.0)
            break;  // passed the BT end point

        const W sec = sub(wn, w);
        const double ns = norm(sec);
        dir = ns > 0.0 ? W{sec[0] / ns, sec[1] / ns, sec[2] / ns, sec[3] / ns} : tn;
        w = wn;
        t = tn;
        if (++successes >= 4) {
            h = std::min(h * 1.3, opt.hmax);
            successes = 0;
        }
    }
    return out;
}

Codim2Curve continue_curve(CurveKind kind, const SpecialPoint& seed, const Params& base, const CurveOptions& opt)
{
    base.validate();
    const W w0 = to_w(seed.state, seed.gamma, seed.rho);
    const auto d0 = defining(kind, base, w0);
    if (std::max({std::abs(d0[0]), std::abs(d0[1]), std::abs(d0[2])}) > 1e-8)
        throw contin::ContinuationError("codim2: seed does not satisfy the defining system");
    const W t0 = null_vector(defining_jacobian(kind, base, w0));
    if (norm(t0) == 0.0)
        throw contin::ContinuationError("codim2: defining system is singular at the seed");

    Codim2Curve curve;
    curve.kind = kind;
    curve.base = base;
    const auto fwd = run(kind, base, w0, t0, opt, curve.truncated, curve.warning);
    const auto bwd = run(kind, base, w0, W{-t0[0], -t0[1], -t0[2], -t0[3]}, opt, curve.truncated, curve.warning);
    for (auto it = bwd.rbegin(); it != bwd.rend(); ++it) {
        CurvePoint cp = *it;
        cp.arclength = -cp.arclength;
        curve.points.push_back(cp);
    }
    curve.points.push_back(make_point(kind, base, w0, opt.l1_monitor));
    curve.points.insert(curve.points.end(), fwd.begin(), fwd.end());
    return curve;
}

}  // namespace

std::string_view to_string(CurveKind k) noexcept
{
    switch (k) {
    case CurveKind::FoldCurve: return "fold";
    case CurveKind::HopfCurve: return "hopf";
    case CurveKind::HomoclinicCurve: return "homoclinic";
    case CurveKind::LPCCurve: return "lpc";
    }
    return "?";
}

double lyapunov_l1(const PlanarField& f, const State2& x, const model::Mat2& jac, double omega, double rel_step)
{
    if (!(omega > 0.0))
        throw std::domain_error("lyapunov_l1: omega must be positive");
    using C = std::complex<double>;
    const double a = jac[0][0], b = jac[0][1], c = jac[1][0], d = jac[1][1];
    std::array<C, 2> q;
    if (std::abs(b) >= std::abs(c))
        q = {C{b, 0.0}, C{-a, omega}};
    else
        q = {C{-d, omega}, C{c, 0.0}};
    // |q|^2 = 2, so that Re q and Im q are unit vectors for a pure rotation.
    const double nq = std::sqrt(0.5 * (std::norm(q[0]) + std::norm(q[1])));
    if (!(nq > 0.0))
        throw std::domain_error("lyapunov_l1: degenerate linearization");
    // Columns Im q, Re q: in these coordinates the linear part is a rotation.
    const double p00 = q[0].imag() / nq, p01 = q[0].real() / nq;
    const double p10 = q[1].imag() / nq, p11 = q[1].real() / nq;
    const double dp = p00 * p11 - p01 * p10;
    if (!(std::abs(dp) > 1e-14))
        throw std::domain_error("lyapunov_l1: degenerate linearization");

    auto field = [&](double u, double v) -> State2 {
        const State2 y = f({x[0] + p00 * u + p01 * v, x[1] + p10 * u + p11 * v});
        return {(p11 * y[0] - p01 * y[1]) / dp, (-p10 * y[0] + p00 * y[1]) / dp};
    };
    const double h = rel_step * (1.0 + std::hypot(x[0], x[1]));

    // Stencil values, shared between both components.
    std::array<std::array<State2, 5>, 5> s{};
    for (int i = -2; i <= 2; ++i)
        for (int j = -2; j <= 2; ++j)
            if (std::abs(i) + std::abs(j) <= 2)
                s[static_cast<std::size_t>(i + 2)][static_cast<std::size_t>(j + 2)] = field(i * h, j * h);
    auto at = [&](int i, int j, int comp) {
        return s[static_cast<std::size_t>(i + 2)][static_cast<std::size_t>(j + 2)][static_cast<std::size_t>(comp)];
    };
    struct D {
        double xx, yy, xy, xxx, yyy, xyy, xxy;
    };
    auto derivs = [&](int k) {
        D r{};
        const double h2 = h * h, h3 = h2 * h;
        r.xx = (at(1, 0, k) - 2.0 * at(0, 0, k) + at(-1, 0, k)) / h2;
        r.yy = (at(0, 1, k) - 2.0 * at(0, 0, k) + at(0, -1, k)) / h2;
        r.xy = (at(1, 1, k) - at(1, -1, k) - at(-1, 1, k) + at(-1, -1, k)) / (4.0 * h2);
        r.xxx = (at(2, 0, k) - 2.0 * at(1, 0, k) + 2.0 * at(-1, 0, k) - at(-2, 0, k)) / (2.0 * h3);
        r.yyy = (at(0, 2, k) - 2.0 * at(0, 1, k) + 2.0 * at(0, -1, k) - at(0, -2, k)) / (2.0 * h3);
        r.xyy = (at(1, 1, k) - 2.0 * at(1, 0, k) + at(1, -1, k) - at(-1, 1, k) + 2.0 * at(-1, 0, k) -
                 at(-1, -1, k)) / (2.0 * h3);
        r.xxy = (at(1, 1, k) - 2.0 * at(0, 1, k) + at(-1, 1, k) - at(1, -1, k) + 2.0 * at(0, -1, k) -
                 at(-1, -1, k)) / (2.0 * h3);
        return r;
    };
    const D F = derivs(0), G = derivs(1);
    return (F.xxx + F.xyy + G.xxy + G.yyy) / 16.0 +
           (F.xy * (F.xx + F.yy) - G.xy * (G.xx + G.yy) - F.xx * G.xx + F.yy * G.yy) / (16.0 * omega);
}

double lyapunov_l1(const Params& p, const State2& hopf_state, double omega, double rel_step)
{
    const model::Mat2 j = model::jacobian_reduced(hopf_state, p);
    if (std::abs(model::trace(j)) > 1e-8 || !(model::det(j) > 0.0))
        throw std::domain_error("lyapunov_l1: not a Hopf point (trace != 0 or det <= 0)");
    return lyapunov_l1([&p](const State2& y) { return model::rhs_reduced(y, p); }, hopf_state, j, omega, rel_step);
}

L1Estimate lyapunov_l1_checked(const Params& p, const State2& hopf_state, double omega, double rel_step)
{
    L1Estimate e;
    e.value = lyapunov_l1(p, hopf_state, omega, rel_step);
    e.halved = lyapunov_l1(p, hopf_state, omega, 0.5 * rel_step);
    e.converged = std::abs(e.value - e.halved) <= 0.05 * std::abs(e.value);
    return e;
}

bool polish_bt(const Params& base, State2& x, double& gamma, double& rho)
{
    auto g = [&](std::span<const double> v) {
        const Params p = params_of(base, v[2], v[3]);
        const State2 f = model::rhs_reduced({v[0], v[1]}, p);
        const model::Mat2 j = model::jacobian_reduced({v[0], v[1]}, p);
        return num::Vector{f[0], f[1], model::det(j), model::trace(j)};
    };
    auto jac = [&](std::span<const double> v) {
        const Params p = params_of(base, v[2], v[3]);
        const State2 xs{v[0], v[1]};
        const model::Mat2 j = model::jacobian_reduced(xs, p);
        const State2 fg = model::param_derivative(xs, p, model::ParamId::Gamma);
        const State2 fr = model::param_derivative(xs, p, model::ParamId::Rho);
        const auto d = model::jacobian_derivatives(xs, p);
        num::Matrix m(4, 4);
        for (std::size_t r = 0; r < 2; ++r) {
            m(r, 0) = j[r][0];
            m(r, 1) = j[r][1];
            m(r, 2) = fg[r];
            m(r, 3) = fr[r];
        }
        const std::array<const model::Mat2*, 4> dj{&d.dS, &d.dI, &d.dgamma, &d.drho};
        for (std::size_t c = 0; c < 4; ++c) {
            m(2, c) = grad_of(true, j, *dj[c]);
            m(3, c) = grad_of(false, j, *dj[c]);
        }
        return m;
    };
    num::NewtonReport rep;
    try {
        rep = num::newton(g, jac, {x[0], x[1], gamma, rho}, 1e-14, 30);
    } catch (const std::exception&) {
        return false;
    }
    const auto r = g(rep.root);
    if (!(std::max(std::abs(r[0]), std::abs(r[1])) <= 1e-10 && std::abs(r[2]) <= 1e-8 && std::abs(r[3]) <= 1e-8))
        return false;
    x = {rep.root[0], rep.root[1]};
    gamma = rep.root[2];
    rho = rep.root[3];
    return true;
}

std::vector<SpecialPoint> detect_bt(const Codim2Curve& curve)
{
    std::vector<SpecialPoint> out;
    if (curve.kind != CurveKind::FoldCurve && curve.kind != CurveKind::HopfCurve)
        return out;
    const bool fold = curve.kind == CurveKind::FoldCurve;
    auto value = [fold](const CurvePoint& cp) { return fold ? cp.trace : cp.det; };
    auto monitor = [&](const W& w) {
        const model::Mat2 j = model::jacobian_reduced(state_of(w), params_of(curve.base, w[2], w[3]));
        return fold ? model::trace(j) : model::det(j);
    };
    for (std::size_t k = 1; k < curve.points.size(); ++k) {
        const CurvePoint& a = curve.points[k - 1];
        const CurvePoint& b = curve.points[k];
        if ((value(a) > 0.0) == (value(b) > 0.0))
            continue;
        auto [lo, hi] = bisect(curve.kind, curve.base, a, b, monitor);
        W w{0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2]), 0.5 * (lo[3] + hi[3])};
        State2 x = state_of(w);
        double g = w[2], r = w[3];
        if (polish_bt(curve.base, x, g, r))
            w = to_w(x, g, r);
        SpecialPoint sp = special_at(contin::PointKind::BT, curve.base, w);
        sp.aux["segment"] = static_cast<double>(k - 1);
        out.push_back(sp);
    }
    return out;
}

std::vector<SpecialPoint> detect_gh(const Codim2Curve& curve)
{
    std::vector<SpecialPoint> out;
    if (curve.kind != CurveKind::HopfCurve)
        return out;
    auto monitor = [&](const W& w) {
        const Params p = params_of(curve.base, w[2], w[3]);
        const model::Mat2 j = model::jacobian_reduced(state_of(w), p);
        if (!(model::det(j) > 0.0))
            return std::numeric_limits<double>::quiet_NaN();
        return lyapunov_l1(p, state_of(w), std::sqrt(model::det(j)));
    };
    for (std::size_t k = 1; k < curve.points.size(); ++k) {
        const CurvePoint& a = curve.points[k - 1];
        const CurvePoint& b = curve.points[k];
        if (!std::isfinite(a.l1) || !std::isfinite(b.l1) || (a.l1 > 0.0) == (b.l1 > 0.0))
            continue;
        auto [lo, hi] = bisect(curve.kind, curve.base, a, b, monitor);
        const W w{0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2]), 0.5 * (lo[3] + hi[3])};
        SpecialPoint sp = special_at(contin::PointKind::GH, curve.base, w);
        sp.aux["segment"] = static_cast<double>(k - 1);
        sp.aux["l1_slope_sign"] = b.l1 > a.l1 ? 1.0 : -1.0;
        if (sp.aux["det"] > 0.0)
            sp.aux["omega"] = std::sqrt(sp.aux["det"]);
        out.push_back(sp);
    }
    return out;
}

Codim2Curve continue_fold_curve(const SpecialPoint& seed, const Params& base, const CurveOptions& opt)
{
    Codim2Curve curve = continue_curve(CurveKind::FoldCurve, seed, base, opt);
    curve.special = detect_bt(curve);
    return curve;
}

Codim2Curve continue_hopf_curve(const SpecialPoint& seed, const Params& base, const CurveOptions& opt)
{
    Codim2Curve curve = continue_curve(CurveKind::HopfCurve, seed, base, opt);
    curve.special = detect_bt(curve);
    // Replace the overshoot points past each BT end by the BT point itself.
    for (const auto& bt : curve.special) {
        const auto seg = static_cast<std::size_t>(bt.aux.at("segment"));
        const std::size_t end = curve.points[seg].det <= 0.0 ? seg : seg + 1;
        CurvePoint& cp = curve.points[end];
        const double arc = cp.arclength;
        cp = make_point(CurveKind::HopfCurve, base, to_w(bt.state, bt.gamma, bt.rho), false);
        cp.arclength = arc;
    }
    if (opt.l1_monitor) {
        auto gh = detect_gh(curve);
        curve.special.insert(curve.special.end(), gh.begin(), gh.end());
    }
    return curve;
}

}  // namespace sirbif::codim2
