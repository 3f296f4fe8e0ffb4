#include "sirbif/codim2.hpp"

#include <doctest.h>

#include <cmath>
#include <complex>

using namespace sirbif;
using namespace sirbif::codim2;
using contin::PointKind;
using C = std::complex<double>;

namespace {

model::Params at(double gamma, double rho)
{
    model::Params p;
    p.gamma = gamma;
    p.rho = rho;
    return p;
}

SpecialPoint seed(PointKind kind)
{
    const auto p = at(0.3, 0.1);
    const auto b = contin::continue_equilibrium(p, model::endemic_equilibria(p).back(), model::ParamId::Gamma,
                                                {0.3, 0.42});
    for (const auto& sp : b.special)
        if (sp.kind == kind)
            return sp;
    FAIL("seed not found");
    return {};
}

const Codim2Curve& fold_curve()
{
    static const Codim2Curve c = continue_fold_curve(seed(PointKind::LP));
    return c;
}

const Codim2Curve& hopf_curve()
{
    static const Codim2Curve c = continue_hopf_curve(seed(PointKind::HB));
    return c;
}

std::vector<SpecialPoint> of_kind(const Codim2Curve& c, PointKind k)
{
    std::vector<SpecialPoint> out;
    for (const auto& sp : c.special)
        if (sp.kind == k)
            out.push_back(sp);
    return out;
}

bool near(const SpecialPoint& sp, double g, double r, double tol)
{
    return std::abs(sp.gamma - g) <= tol && std::abs(sp.rho - r) <= tol;
}

// Independent oracle: the complex-eigenvector formula for the first Lyapunov
// coefficient, with multilinear forms taken from differences of the analytic
// Jacobian (one order lower than differencing the field itself).
double l1_oracle(const model::Params& p, const model::State2& x)
{
    const model::Mat2 a = model::jacobian_reduced(x, p);
    const double omega = std::sqrt(model::det(a));
    const double h = 1e-3 * (1.0 + std::hypot(x[0], x[1]));
    auto jac_at = [&](double du, double dv) { return model::jacobian_reduced({x[0] + du, x[1] + dv}, p); };
    auto apply = [](const model::Mat2& m, const std::array<double, 2>& u) {
        return std::array<double, 2>{m[0][0] * u[0] + m[0][1] * u[1], m[1][0] * u[0] + m[1][1] * u[1]};
    };
    using R2 = std::array<double, 2>;
    auto b_real = [&](const R2& u, const R2& v) {
        const R2 jp = apply(jac_at(h * v[0], h * v[1]), u);
        const R2 jm = apply(jac_at(-h * v[0], -h * v[1]), u);
        return R2{(jp[0] - jm[0]) / (2 * h), (jp[1] - jm[1]) / (2 * h)};
    };
    auto c_real = [&](const R2& u, const R2& v, const R2& w) {
        auto j = [&](double sv, double sw) {
            return apply(jac_at(h * (sv * v[0] + sw * w[0]), h * (sv * v[1] + sw * w[1])), u);
        };
        const R2 pp = j(1, 1), pm = j(1, -1), mp = j(-1, 1), mm = j(-1, -1);
        return R2{(pp[0] - pm[0] - mp[0] + mm[0]) / (4 * h * h), (pp[1] - pm[1] - mp[1] + mm[1]) / (4 * h * h)};
    };
    using C2 = std::array<C, 2>;
    auto re = [](const C2& z) { return R2{z[0].real(), z[1].real()}; };
    auto im = [](const C2& z) { return R2{z[0].imag(), z[1].imag()}; };
    auto B = [&](const C2& u, const C2& v) {
        const R2 rr = b_real(re(u), re(v)), ii = b_real(im(u), im(v));
        const R2 ri = b_real(re(u), im(v)), ir = b_real(im(u), re(v));
        return C2{C{rr[0] - ii[0], ri[0] + ir[0]}, C{rr[1] - ii[1], ri[1] + ir[1]}};
    };
    auto Cf = [&](const C2& u, const C2& v, const C2& w) {
        C2 out{};
        for (int mask = 0; mask < 8; ++mask) {
            const R2 uu = (mask & 1) ? im(u) : re(u);
            const R2 vv = (mask & 2) ? im(v) : re(v);
            const R2 ww = (mask & 4) ? im(w) : re(w);
            C factor = 1.0;
            if (mask & 1)
                factor *= C{0, 1};
            if (mask & 2)
                factor *= C{0, 1};
            if (mask & 4)
                factor *= C{0, 1};
            const R2 val = c_real(uu, vv, ww);
            out[0] += factor * val[0];
            out[1] += factor * val[1];
        }
        return out;
    };
    auto conj2 = [](const C2& z) { return C2{std::conj(z[0]), std::conj(z[1])}; };
    auto solve = [](C m00, C m01, C m10, C m11, const C2& r) {
        const C d = m00 * m11 - m01 * m10;
        return C2{(m11 * r[0] - m01 * r[1]) / d, (-m10 * r[0] + m00 * r[1]) / d};
    };
    const C iw{0.0, omega};
    // A q = i w q, A^T p = -i w p, <p, q> = 1.
    C2 q = std::abs(a[0][1]) >= std::abs(a[1][0]) ? C2{a[0][1], iw - a[0][0]} : C2{iw - a[1][1], a[1][0]};
    C2 pv = std::abs(a[1][0]) >= std::abs(a[0][1]) ? C2{a[1][0], -iw - a[0][0]} : C2{-iw - a[1][1], a[0][1]};
    const double nq = std::sqrt(std::norm(q[0]) + std::norm(q[1]));
    q = {q[0] / nq, q[1] / nq};
    const C pq = std::conj(pv[0]) * q[0] + std::conj(pv[1]) * q[1];
    pv = {pv[0] / std::conj(pq), pv[1] / std::conj(pq)};
    auto inner = [](const C2& u, const C2& v) { return std::conj(u[0]) * v[0] + std::conj(u[1]) * v[1]; };

    const C2 qb = conj2(q);
    const C2 bqqb = B(q, qb);
    const C2 s1 = solve(a[0][0], a[0][1], a[1][0], a[1][1], bqqb);
    const C2 bqq = B(q, q);
    const C2 s2 = solve(2.0 * iw - a[0][0], -a[0][1], -a[1][0], 2.0 * iw - a[1][1], bqq);
    const C val = inner(pv, Cf(q, q, qb)) - 2.0 * inner(pv, B(q, s1)) + inner(pv, B(qb, s2));
    return val.real() / (2.0 * omega);
}

}  // namespace

TEST_CASE("lyapunov_l1 on the normal form")
{
    for (double a : {1.0, -1.0, 0.3, -0.02}) {
        auto f = [a](const model::State2& x) {
            const double r2 = x[0] * x[0] + x[1] * x[1];
            return model::State2{-x[1] + a * x[0] * r2, x[0] + a * x[1] * r2};
        };
        const double l1 = lyapunov_l1(f, {0.0, 0.0}, model::Mat2{{{0.0, -1.0}, {1.0, 0.0}}}, 1.0, 1e-2);
        CHECK((l1 > 0.0) == (a > 0.0));
        CHECK(l1 == doctest::Approx(a).epsilon(1e-6));
    }
    // Same system after a linear change of coordinates and a shift: the sign survives.
    for (double a : {1.0, -1.0}) {
        const double m00 = 2.0, m01 = 0.5, m10 = -0.3, m11 = 1.5;  // x = M y + c
        const double det = m00 * m11 - m01 * m10;
        auto f = [&](const model::State2& x) {
            const double y0 = (m11 * (x[0] - 3.0) - m01 * (x[1] + 1.0)) / det;
            const double y1 = (-m10 * (x[0] - 3.0) + m00 * (x[1] + 1.0)) / det;
            const double r2 = y0 * y0 + y1 * y1;
            const double g0 = -2.0 * y1 + a * y0 * r2, g1 = 2.0 * y0 + a * y1 * r2;
            return model::State2{m00 * g0 + m01 * g1, m10 * g0 + m11 * g1};
        };
        model::Mat2 j{};
        for (int c = 0; c < 2; ++c) {
            model::State2 xp{3.0, -1.0}, xm{3.0, -1.0};
            xp[static_cast<std::size_t>(c)] += 1e-6;
            xm[static_cast<std::size_t>(c)] -= 1e-6;
            for (int r = 0; r < 2; ++r)
                j[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] =
                    (f(xp)[static_cast<std::size_t>(r)] - f(xm)[static_cast<std::size_t>(r)]) / 2e-6;
        }
        const double l1 = lyapunov_l1(f, {3.0, -1.0}, j, 2.0, 1e-3);
        CHECK((l1 > 0.0) == (a > 0.0));
    }
    CHECK_THROWS_AS(lyapunov_l1(at(0.3, 0.1), {1000.0, 0.0}, 1.0), std::domain_error);
}

TEST_CASE("lyapunov_l1 at the rho = 0.1 Hopf point is negative and step-converged")
{
    const SpecialPoint hb = seed(PointKind::HB);
    const auto est = lyapunov_l1_checked(contin::params_at(hb), hb.state, contin::hopf_frequency(hb));
    CHECK(est.value < 0.0);
    CHECK(est.converged);
    CHECK((l1_oracle(contin::params_at(hb), hb.state) < 0.0));
}

TEST_CASE("lyapunov_l1 sign agrees with the complex-eigenvector oracle along the Hopf curve")
{
    const auto& c = hopf_curve();
    int compared = 0;
    for (const auto& cp : c.points) {
        if (!std::isfinite(cp.l1) || std::abs(cp.l1) < 1e-10)
            continue;
        const double oracle = l1_oracle(at(cp.gamma, cp.rho), cp.state);
        CHECK((oracle > 0.0) == (cp.l1 > 0.0));
        ++compared;
    }
    CHECK(compared > 50);
}

TEST_CASE("fold curve: defining residuals, BT points and end points")
{
    const auto& c = fold_curve();
    CHECK_FALSE(c.truncated);
    for (const auto& cp : c.points) {
        CHECK(cp.residual <= 1e-9);
        CHECK(std::abs(cp.det) <= 1e-9);
        CHECK(cp.gamma >= 0.0);
        CHECK(cp.rho <= 1.0);
    }
    const auto bts = detect_bt(c);
    REQUIRE(bts.size() == 2);
    int found1 = 0, found2 = 0;
    for (const auto& bt : bts) {
        CHECK(std::abs(bt.aux.at("det")) <= 1e-8);
        CHECK(std::abs(bt.aux.at("trace")) <= 1e-8);
        found1 += near(bt, 0.404023, 0.229494, 1e-3);
        found2 += near(bt, 0.164201, 0.002600, 1e-3);
    }
    CHECK(found1 == 1);
    CHECK(found2 == 1);
}

TEST_CASE("fold curve separates zero from two endemic equilibria")
{
    const auto& c = fold_curve();
    REQUIRE(c.points.size() > 40);
    int checked = 0;
    const double gamma0 = 4969.0 / 31000.0;
    for (std::size_t k = 5; k + 5 < c.points.size(); k += 15) {
        // Near its lower end the fold curve runs within 1e-4 of the transcritical
        // line gamma = gamma0, where a 1e-4 nudge would cross both.
        if (c.points[k].gamma - gamma0 < 1e-3)
            continue;
        const auto& a = c.points[k - 1];
        const auto& b = c.points[k + 1];
        const auto& m = c.points[k];
        const double dg = b.gamma - a.gamma, dr = b.rho - a.rho, n = std::hypot(dg, dr);
        const double ng = -dr / n, nr = dg / n;
        auto count_near = [&](double sgn) {
            const double g = m.gamma + sgn * 1e-4 * ng, r = m.rho + sgn * 1e-4 * nr;
            return static_cast<int>(model::endemic_equilibria(at(g, r)).size());
        };
        const int plus = count_near(+1.0), minus = count_near(-1.0);
        INFO(m.gamma, " ", m.rho, " ", plus, " ", minus);
        CHECK(((plus == 2 && minus == 0) || (plus == 0 && minus == 2)));
        ++checked;
    }
    CHECK(checked > 3);
}

TEST_CASE("Hopf curve: defining residuals, BT ends, GH points")
{
    const auto& h = hopf_curve();
    REQUIRE(h.points.size() > 20);
    for (std::size_t k = 0; k < h.points.size(); ++k) {
        const auto& cp = h.points[k];
        CHECK(cp.residual <= 1e-9);
        CHECK(std::abs(cp.trace) <= 1e-9);
        if (k > 0 && k + 1 < h.points.size())
            CHECK(cp.det > 0.0);
    }
    const auto bt_h = of_kind(h, PointKind::BT);
    const auto bt_f = detect_bt(fold_curve());
    REQUIRE(bt_h.size() == 2);
    for (const auto& bt : bt_h) {
        bool match = false;
        for (const auto& other : bt_f)
            match = match || near(bt, other.gamma, other.rho, 1e-3);
        CHECK(match);
    }
    // End points of the Hopf curve are the BT points.
    CHECK(std::abs(h.points.front().det) <= 1e-8);
    CHECK(std::abs(h.points.back().det) <= 1e-8);

    // omega decreases monotonically over the last 10 points toward each end.
    for (int side = 0; side < 2; ++side) {
        double prev = -1.0;
        for (int i = 10; i >= 1; --i) {
            const std::size_t k = side == 0 ? static_cast<std::size_t>(i) : h.points.size() - 1 - static_cast<std::size_t>(i);
            const double w = std::sqrt(h.points[k].det);
            if (prev >= 0.0)
                CHECK(w < prev);
            prev = w;
        }
    }

    const auto gh = of_kind(h, PointKind::GH);
    REQUIRE(!gh.empty());
    bool gh1 = false;
    for (const auto& g : gh)
        gh1 = gh1 || near(g, 0.372814, 0.134955, 1e-3);
    CHECK(gh1);
    // Every l1 sign change along the curve is matched by exactly one GH point.
    int changes = 0;
    for (std::size_t k = 1; k < h.points.size(); ++k) {
        const double a = h.points[k - 1].l1, b = h.points[k].l1;
        if (std::isfinite(a) && std::isfinite(b) && (a > 0.0) != (b > 0.0))
            ++changes;
    }
    CHECK(changes == static_cast<int>(gh.size()));
}

TEST_CASE("detect_bt and detect_gh on synthetic curves")
{
    Codim2Curve fold;
    fold.kind = CurveKind::FoldCurve;
    for (int k = 0; k < 5; ++k) {
        CurvePoint cp;
        cp.trace = 0.1 + k;
        cp.det = 0.0;
        fold.points.push_back(cp);
    }
    CHECK(detect_bt(fold).empty());

    Codim2Curve hopf;
    hopf.kind = CurveKind::HopfCurve;
    for (int k = 0; k < 5; ++k) {
        CurvePoint cp;
        cp.det = 1.0;
        cp.l1 = -1.0 - k;
        hopf.points.push_back(cp);
    }
    CHECK(detect_gh(hopf).empty());
    CHECK(detect_gh(fold).empty());
}
