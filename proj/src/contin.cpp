#include "sirbif/contin.hpp"

#include "sirbif/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <span>

namespace sirbif::contin {

namespace {

using Z = std::array<double, 3>;  // scaled (S, I, p)
constexpr auto& sc = model::state_scale;

double dot(const Z& a, const Z& b) noexcept { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(const Z& a) noexcept { return std::sqrt(dot(a, a)); }

Z to_z(const State2& x, double pv) noexcept { return {x[0] * sc[0], x[1] * sc[1], pv}; }
State2 state_of(std::span<const double> z) noexcept { return {z[0] / sc[0], z[1] / sc[1]}; }

double residual(const State2& x, const Params& p)
{
    const State2 f = model::rhs_reduced(x, p);
    return std::max(std::abs(f[0]), std::abs(f[1]));
}

/// Unit null vector of d f / d z, or zero when the rows are dependent.
Z tangent_at(const Z& z, const Params& base, ParamId active)
{
    const Params p = model::with(base, active, z[2]);
    const State2 x = state_of(z);
    const model::Mat2 j = model::jacobian_reduced(x, p);
    const State2 fp = model::param_derivative(x, p, active);
    const Z r1{j[0][0] / sc[0], j[0][1] / sc[1], fp[0]};
    const Z r2{j[1][0] / sc[0], j[1][1] / sc[1], fp[1]};
    Z t{r1[1] * r2[2] - r1[2] * r2[1], r1[2] * r2[0] - r1[0] * r2[2], r1[0] * r2[1] - r1[1] * r2[0]};
    const double n = norm(t);
    if (!(n > 0.0) || !std::isfinite(n))
        return {0.0, 0.0, 0.0};
    for (auto& v : t)
        v /= n;
    return t;
}

/// Solves f = 0 together with <z - anchor, dir> = 0.
bool correct(const Params& base, ParamId active, const Z& anchor, const Z& dir, Z& z, double tol, int max_iter)
{
    auto g = [&](std::span<const double> v) {
        const Params p = model::with(base, active, v[2]);
        const State2 f = model::rhs_reduced(state_of(v), p);
        return num::Vector{f[0], f[1],
                           (v[0] - anchor[0]) * dir[0] + (v[1] - anchor[1]) * dir[1] + (v[2] - anchor[2]) * dir[2]};
    };
    auto jac = [&](std::span<const double> v) {
        const Params p = model::with(base, active, v[2]);
        const State2 x = state_of(v);
        const model::Mat2 j = model::jacobian_reduced(x, p);
        const State2 fp = model::param_derivative(x, p, active);
        return num::Matrix{{j[0][0] / sc[0], j[0][1] / sc[1], fp[0]},
                           {j[1][0] / sc[0], j[1][1] / sc[1], fp[1]},
                           {dir[0], dir[1], dir[2]}};
    };
    num::NewtonReport rep;
    try {
        rep = num::newton(g, jac, num::Vector(z.begin(), z.end()), tol, max_iter);
    } catch (const std::exception&) {
        return false;
    }
    if (!rep.converged)
        return false;
    const Z out{rep.root[0], rep.root[1], rep.root[2]};
    if (!(out[2] >= 0.0 && out[2] <= 1.0))
        return false;
    if (residual(state_of(out), model::with(base, active, out[2])) > tol)
        return false;
    z = out;
    return true;
}

/// Equilibrium at a fixed parameter value, Newton from `guess`.
bool correct_fixed(const Params& p, State2& x, double tol)
{
    auto g = [&](std::span<const double> v) {
        const State2 f = model::rhs_reduced({v[0], v[1]}, p);
        return num::Vector{f[0], f[1]};
    };
    auto jac = [&](std::span<const double> v) {
        const model::Mat2 j = model::jacobian_reduced({v[0], v[1]}, p);
        return num::Matrix{{j[0][0], j[0][1]}, {j[1][0], j[1][1]}};
    };
    const auto rep = num::newton(g, jac, {x[0], x[1]}, tol, 30);
    if (!rep.converged)
        return false;
    x = {rep.root[0], rep.root[1]};
    return true;
}

double test_value(const BranchPoint& b, PointKind kind) noexcept
{
    return kind == PointKind::HB ? b.test_hopf : b.test_fold;
}

bool sign_change(double a, double b) noexcept { return (a > 0.0) != (b > 0.0); }

/// Newton on {f = 0, g = 0} in (S, I, p), where g is det J (fold) or trace J (Hopf).
bool polish(const Params& base, ParamId active, PointKind kind, State2& x, double& pv)
{
    auto g = [&](std::span<const double> v) {
        const Params p = model::with(base, active, v[2]);
        const State2 f = model::rhs_reduced({v[0], v[1]}, p);
        const model::Mat2 j = model::jacobian_reduced({v[0], v[1]}, p);
        return num::Vector{f[0], f[1], kind == PointKind::HB ? model::trace(j) : model::det(j)};
    };
    auto jac = [&](std::span<const double> v) {
        const Params p = model::with(base, active, v[2]);
        const State2 xs{v[0], v[1]};
        const model::Mat2 j = model::jacobian_reduced(xs, p);
        const State2 fp = model::param_derivative(xs, p, active);
        const auto d = model::jacobian_derivatives(xs, p);
        auto grad = [&](const model::Mat2& dj) {
            if (kind == PointKind::HB)
                return model::trace(dj);
            // Jacobi's formula for a 2x2 matrix.
            return j[1][1] * dj[0][0] - j[0][1] * dj[1][0] - j[1][0] * dj[0][1] + j[0][0] * dj[1][1];
        };
        return num::Matrix{{j[0][0], j[0][1], fp[0]},
                           {j[1][0], j[1][1], fp[1]},
                           {grad(d.dS), grad(d.dI), grad(d.by_param(active))}};
    };
    num::NewtonReport rep;
    try {
        rep = num::newton(g, jac, {x[0], x[1], pv}, 1e-13, 20);
    } catch (const std::exception&) {
        return false;
    }
    // The test function is tiny in absolute terms; accept on a small step too.
    if (!rep.converged) {
        const auto r = g(rep.root);
        if (!(std::max(std::abs(r[0]), std::abs(r[1])) <= 1e-10 && std::abs(r[2]) <= 1e-12))
            return false;
    }
    x = {rep.root[0], rep.root[1]};
    pv = rep.root[2];
    return true;
}

SpecialPoint to_special(PointKind kind, const State2& x, const Params& p, double pv, ParamId active)
{
    SpecialPoint sp;
    sp.kind = kind;
    const Params q = model::with(p, active, pv);
    sp.gamma = q.gamma;
    sp.rho = q.rho;
    sp.state = x;
    const model::Mat2 j = model::jacobian_reduced(x, q);
    sp.aux["det"] = model::det(j);
    sp.aux["trace"] = model::trace(j);
    if (kind == PointKind::HB && model::det(j) > 0.0)
        sp.aux["omega"] = std::sqrt(model::det(j));
    return sp;
}

}  // namespace

std::string_view to_string(PointKind k) noexcept
{
    switch (k) {
    case PointKind::LP: return "LP";
    case PointKind::HB: return "HB";
    case PointKind::BP: return "BP";
    case PointKind::BT: return "BT";
    case PointKind::GH: return "GH";
    case PointKind::HOM: return "HOM";
    case PointKind::LPC: return "LPC";
    }
    return "?";
}

Params params_at(const SpecialPoint& sp, Params base) noexcept
{
    base.gamma = sp.gamma;
    base.rho = sp.rho;
    return base;
}

BranchPoint make_branch_point(const State2& x, double active_value, const Params& p, ParamId active)
{
    BranchPoint b;
    b.state = x;
    b.active_param_value = active_value;
    const model::Mat2 j = model::jacobian_reduced(x, model::with(p, active, active_value));
    b.test_fold = model::det(j);
    b.test_hopf = model::trace(j);
    b.eigenvalues = model::eigenvalues(j);
    return b;
}

double hopf_frequency(const model::Mat2& jac)
{
    const double d = model::det(jac);
    if (!(d > 0.0))
        throw std::domain_error("hopf_frequency: det J <= 0, the point is not a proper Hopf point");
    return std::sqrt(d);
}

double hopf_frequency(const SpecialPoint& sp, const Params& base)
{
    if (sp.kind != PointKind::HB)
        throw std::invalid_argument("hopf_frequency: special point is not HB");
    return hopf_frequency(model::jacobian_reduced(sp.state, params_at(sp, base)));
}

SpecialPoint localize_special(const Params& p, ParamId active, const BranchPoint& a, const BranchPoint& b,
                              PointKind kind)
{
    if (kind != PointKind::LP && kind != PointKind::HB && kind != PointKind::BP)
        throw std::invalid_argument("localize_special: only LP, HB and BP are localized on equilibrium branches");
    double ta = test_value(a, kind);
    if (!sign_change(ta, test_value(b, kind)))
        throw LocalizationError("localize_special: test function does not change sign", a, b);

    Z lo = to_z(a.state, a.active_param_value);
    Z hi = to_z(b.state, b.active_param_value);
    const Z za = lo;
    Z d{hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]};
    double s_lo = 0.0, s_hi = 1.0;
    for (int it = 0; it < 80; ++it) {
        if (std::abs(hi[2] - lo[2]) < 1e-13 && std::max(std::abs(hi[0] - lo[0]), std::abs(hi[1] - lo[1])) < 1e-12)
            break;
        const double s = 0.5 * (s_lo + s_hi);
        const Z anchor{za[0] + s * d[0], za[1] + s * d[1], za[2] + s * d[2]};
        Z z{0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2])};
        if (!correct(p, active, anchor, d, z, 1e-11, 20))
            break;
        const BranchPoint m = make_branch_point(state_of(z), z[2], p, active);
        const double tm = test_value(m, kind);
        if (tm == 0.0) {
            lo = hi = z;
            break;
        }
        if (sign_change(ta, tm)) {
            hi = z;
            s_hi = s;
        } else {
            lo = z;
            s_lo = s;
            ta = tm;
        }
    }

    State2 x = state_of(std::array<double, 3>{0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.0});
    double pv = 0.5 * (lo[2] + hi[2]);
    const double width = std::abs(hi[2] - lo[2]);
    if (kind != PointKind::BP) {
        State2 xp = x;
        double pp = pv;
        const double slack = 1e-6 + std::abs(b.active_param_value - a.active_param_value);
        const double pmin = std::min(a.active_param_value, b.active_param_value) - slack;
        const double pmax = std::max(a.active_param_value, b.active_param_value) + slack;
        if (polish(p, active, kind, xp, pp) && pp >= pmin && pp <= pmax) {
            x = xp;
            pv = pp;
        } else if (width > 1e-8) {
            throw LocalizationError("localize_special: Newton polish failed on an unresolved bracket", a, b);
        }
    } else if (width > 1e-8) {
        throw LocalizationError("localize_special: bisection did not resolve the bracket", a, b);
    }
    return to_special(kind, x, p, pv, active);
}

Branch continue_equilibrium(const Params& p, const model::EquilibriumPoint& start, ParamId active,
                            std::pair<double, double> range, const ContinuationOptions& opt)
{
    p.validate();
    double lo_p = std::max(0.0, std::min(range.first, range.second));
    double hi_p = std::min(1.0, std::max(range.first, range.second));
    if (!(lo_p < hi_p))
        throw std::invalid_argument("continue_equilibrium: empty parameter range");
    if (!(opt.h0 > 0.0) || !(opt.hmax >= opt.h0) || !(opt.hmin > 0.0))
        throw std::invalid_argument("continue_equilibrium: invalid step sizes");

    const Params base = model::with(p, active, model::get(start.params, active));
    const double p0 = model::get(start.params, active);
    const State2 x0 = start.planar();
    if (residual(x0, base) > 1e-10)
        throw ContinuationError("continue_equilibrium: start point is not an equilibrium (residual > 1e-10)");

    Branch br;
    br.active_param = active;
    br.frozen_param_value = model::get(base, active == ParamId::Gamma ? ParamId::Rho : ParamId::Gamma);

    Z z = to_z(x0, p0);
    Z t = tangent_at(z, base, active);
    if (norm(t) == 0.0)
        throw ContinuationError("continue_equilibrium: start point is singular");
    if (t[2] * opt.direction < 0.0 || (t[2] == 0.0 && opt.direction < 0))
        for (auto& v : t)
            v = -v;

    BranchPoint first = make_branch_point(x0, p0, base, active);
    first.tangent = t;
    br.points.push_back(first);

    Z dir = t;
    double h = opt.h0;
    int successes = 0;

    auto detect = [&](const BranchPoint& a, const BranchPoint& b) {
        auto add = [&](PointKind kind) {
            try {
                SpecialPoint sp = localize_special(base, active, a, b, kind);
                if (kind == PointKind::HB && !(sp.aux["det"] > 0.0))
                    return;  // neutral saddle, not a Hopf point
                sp.aux["branch_index"] = static_cast<double>(br.points.size() - 1);
                br.special.push_back(std::move(sp));
            } catch (const LocalizationError& e) {
                br.warning += std::string(e.what()) + "; ";
            }
        };
        if (sign_change(a.test_fold, b.test_fold))
            add(sign_change(a.tangent[2], b.tangent[2]) ? PointKind::LP : PointKind::BP);
        if (sign_change(a.test_hopf, b.test_hopf) && (a.test_fold > 0.0 || b.test_fold > 0.0))
            add(PointKind::HB);
    };

    while (static_cast<int>(br.points.size()) < opt.max_points) {
        const Z zp{z[0] + h * dir[0], z[1] + h * dir[1], z[2] + h * dir[2]};
        Z zn = zp;
        bool ok = correct(base, active, zp, dir, zn, opt.newton_tol, opt.newton_max_iter);
        Z tn{};
        if (ok) {
            tn = tangent_at(zn, base, active);
            const Z sec{zn[0] - z[0], zn[1] - z[1], zn[2] - z[2]};
            if (norm(tn) == 0.0)
                tn = t;
            if (dot(tn, sec) < 0.0)
                for (auto& v : tn)
                    v = -v;
            // Reject steps that turn too sharply or drift far from the prediction.
            if (dot(tn, t) < 0.8 || norm(Z{zn[0] - zp[0], zn[1] - zp[1], zn[2] - zp[2]}) > 0.5 * h)
                ok = false;
        }
        if (!ok) {
            h *= 0.5;
            successes = 0;
            if (h < opt.hmin) {
                if (br.points.size() == 1)
                    throw ContinuationError("continue_equilibrium: corrector failed at the start point");
                br.truncated = true;
                br.warning += "step size underflow; ";
                break;
            }
            continue;
        }

        bool at_end = false;
        if (zn[2] < lo_p || zn[2] > hi_p) {
            // Land exactly on the range boundary.
            const double pb = zn[2] < lo_p ? lo_p : hi_p;
            const double w = (pb - z[2]) / (zn[2] - z[2]);
            State2 xb = state_of(Z{z[0] + w * (zn[0] - z[0]), z[1] + w * (zn[1] - z[1]), 0.0});
            if (correct_fixed(model::with(base, active, pb), xb, opt.newton_tol)) {
                zn = to_z(xb, pb);
                const Z tb = tangent_at(zn, base, active);
                if (norm(tb) > 0.0)
                    tn = dot(tb, tn) < 0.0 ? Z{-tb[0], -tb[1], -tb[2]} : tb;
            }
            at_end = true;
        }

        BranchPoint bp = make_branch_point(state_of(zn), zn[2], base, active);
        bp.tangent = tn;
        // Pseudo-arclength: the projection of the step on the predictor direction.
        bp.arclength = br.points.back().arclength +
                       std::min(h, std::abs(dot(Z{zn[0] - z[0], zn[1] - z[1], zn[2] - z[2]}, dir)));
        const BranchPoint prev = br.points.back();
        br.points.push_back(bp);
        detect(prev, bp);
        if (at_end)
            break;

        const Z sec{zn[0] - z[0], zn[1] - z[1], zn[2] - z[2]};
        const double ns = norm(sec);
        dir = ns > 0.0 ? Z{sec[0] / ns, sec[1] / ns, sec[2] / ns} : tn;
        z = zn;
        t = tn;
        if (++successes >= 4) {
            h = std::min(h * 1.3, opt.hmax);
            successes = 0;
        }
    }
    return br;
}

Branch continue_bidirectional(const Params& p, const model::EquilibriumPoint& start, ParamId active,
                              std::pair<double, double> range, ContinuationOptions opt)
{
    opt.direction = +1;
    Branch fwd = continue_equilibrium(p, start, active, range, opt);
    opt.direction = -1;
    Branch bwd = continue_equilibrium(p, start, active, range, opt);

    Branch out;
    out.active_param = active;
    out.frozen_param_value = fwd.frozen_param_value;
    out.truncated = fwd.truncated || bwd.truncated;
    out.warning = bwd.warning + fwd.warning;
    const std::size_t nb = bwd.points.size();
    for (std::size_t k = nb; k-- > 1;) {
        BranchPoint bp = bwd.points[k];
        bp.arclength = -bp.arclength;
        for (auto& v : bp.tangent)
            v = -v;
        out.points.push_back(bp);
    }
    for (auto& bp : fwd.points)
        out.points.push_back(bp);
    for (auto it = bwd.special.rbegin(); it != bwd.special.rend(); ++it) {
        SpecialPoint sp = *it;
        sp.aux["branch_index"] = static_cast<double>(nb) - sp.aux["branch_index"];
        out.special.push_back(sp);
    }
    for (auto sp : fwd.special) {
        sp.aux["branch_index"] += static_cast<double>(nb - 1);
        out.special.push_back(sp);
    }
    return out;
}

}  // namespace sirbif::contin
