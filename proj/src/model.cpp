#include "sirbif/model.hpp"

#include <algorithm>
#include <cmath>

namespace sirbif::model {

namespace {

void require_finite(std::span<const double> x)
{
    for (double v : x)
        if (!std::isfinite(v))
            throw std::domain_error("state contains non-finite values");
}

// Polynomial helpers, ascending powers.
using Poly = std::vector<double>;

Poly poly_mul(const Poly& a, const Poly& b)
{
    Poly out(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j)
            out[i + j] += a[i] * b[j];
    return out;
}

Poly poly_axpy(double alpha, const Poly& a, const Poly& b)
{
    Poly out(std::max(a.size(), b.size()), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        out[i] += alpha * a[i];
    for (std::size_t i = 0; i < b.size(); ++i)
        out[i] += b[i];
    return out;
}

}  // namespace

void Params::validate() const
{
    for (double v : {beta, lambda, mu, mu_prime, alpha})
        if (!(v > 0.0) || !std::isfinite(v))
            throw std::domain_error("beta, lambda, mu, mu_prime and alpha must be positive and finite");
    if (!(gamma >= 0.0 && gamma <= 1.0))
        throw std::domain_error("gamma must lie in [0, 1]");
    if (!(rho >= 0.0 && rho <= 1.0))
        throw std::domain_error("rho must lie in [0, 1]");
}

double get(const Params& p, ParamId id) noexcept
{
    return id == ParamId::Gamma ? p.gamma : p.rho;
}

Params with(Params p, ParamId id, double value) noexcept
{
    (id == ParamId::Gamma ? p.gamma : p.rho) = value;
    return p;
}

std::string_view to_string(ParamId id) noexcept
{
    return id == ParamId::Gamma ? "gamma" : "rho";
}

ParamId param_from_string(std::string_view name)
{
    if (name == "gamma")
        return ParamId::Gamma;
    if (name == "rho")
        return ParamId::Rho;
    throw std::invalid_argument("unknown parameter '" + std::string(name) + "' (expected gamma or rho)");
}

std::string_view to_string(Stability s) noexcept
{
    switch (s) {
    case Stability::StableNode: return "stable_node";
    case Stability::StableSpiral: return "stable_spiral";
    case Stability::Saddle: return "saddle";
    case Stability::UnstableNode: return "unstable_node";
    case Stability::UnstableSpiral: return "unstable_spiral";
    case Stability::NonHyperbolic: return "non_hyperbolic";
    }
    return "?";
}

std::string_view to_string(Label l) noexcept
{
    switch (l) {
    case Label::E0: return "E0";
    case Label::E1: return "E1";
    case Label::E2: return "E2";
    case Label::E3: return "E3";
    }
    return "?";
}

State3 rhs_full(const State3& x, const Params& p)
{
    require_finite(x);
    const auto [s, i, r] = x;
    const double incidence = p.beta * s * i / (1.0 + p.gamma * s);
    const double treatment = p.alpha * i / (1.0 + p.rho * i);
    return {p.lambda - p.mu * s - incidence, -(p.mu + p.mu_prime) * i + incidence - treatment,
            -p.mu * r + treatment};
}

State2 rhs_reduced(const State2& x, const Params& p)
{
    require_finite(x);
    const auto [s, i] = x;
    const double incidence = p.beta * s * i / (1.0 + p.gamma * s);
    const double treatment = p.alpha * i / (1.0 + p.rho * i);
    return {p.lambda - p.mu * s - incidence, -(p.mu + p.mu_prime) * i + incidence - treatment};
}

Mat2 jacobian_reduced(const State2& x, const Params& p)
{
    require_finite(x);
    const auto [s, i] = x;
    const double w = 1.0 + p.gamma * s;
    const double u = 1.0 + p.rho * i;
    const double dq_ds = p.beta / (w * w);  // d/dS of beta S / (1 + gamma S)
    const double q = p.beta * s / w;
    return {{{-p.mu - i * dq_ds, -q}, {i * dq_ds, -(p.mu + p.mu_prime) + q - p.alpha / (u * u)}}};
}

State2 param_derivative(const State2& x, const Params& p, ParamId id)
{
    const auto [s, i] = x;
    if (id == ParamId::Gamma) {
        const double w = 1.0 + p.gamma * s;
        const double d = p.beta * s * s * i / (w * w);
        return {d, -d};
    }
    const double u = 1.0 + p.rho * i;
    return {0.0, p.alpha * i * i / (u * u)};
}

JacobianDerivatives jacobian_derivatives(const State2& x, const Params& p)
{
    const auto [s, i] = x;
    const double w = 1.0 + p.gamma * s;
    const double u = 1.0 + p.rho * i;
    const double w2 = w * w;
    const double w3 = w2 * w;
    const double u3 = u * u * u;
    JacobianDerivatives d;
    // J11 = -mu - I b/w^2, J12 = -b S/w, J21 = I b/w^2, J22 = -(mu+mu') + b S/w - a/u^2
    d.dS = {{{2.0 * i * p.beta * p.gamma / w3, -p.beta / w2}, {-2.0 * i * p.beta * p.gamma / w3, p.beta / w2}}};
    d.dI = {{{-p.beta / w2, 0.0}, {p.beta / w2, 2.0 * p.alpha * p.rho / u3}}};
    d.dgamma = {{{2.0 * i * p.beta * s / w3, p.beta * s * s / w2}, {-2.0 * i * p.beta * s / w3, -p.beta * s * s / w2}}};
    d.drho = {{{0.0, 0.0}, {0.0, 2.0 * p.alpha * i / u3}}};
    return d;
}

double det(const Mat2& m) noexcept
{
    return m[0][0] * m[1][1] - m[0][1] * m[1][0];
}

double trace(const Mat2& m) noexcept
{
    return m[0][0] + m[1][1];
}

num::Matrix to_matrix(const Mat2& m)
{
    return num::Matrix{{m[0][0], m[0][1]}, {m[1][0], m[1][1]}};
}

std::vector<std::complex<double>> eigenvalues(const Mat2& m)
{
    return num::eigvals_small(to_matrix(m));
}

double r0(const Params& p)
{
    return p.beta * p.lambda / ((p.mu + p.gamma * p.lambda) * (p.mu + p.mu_prime + p.alpha));
}

double recovered_at_equilibrium(double infected, const Params& p) noexcept
{
    return p.alpha * infected / (p.mu * (1.0 + p.rho * infected));
}

Stability classify_eigenvalues(const std::vector<std::complex<double>>& ev, double tol)
{
    bool any_pos = false;
    bool any_neg = false;
    bool complex_pair = false;
    for (const auto& z : ev) {
        if (std::abs(z.real()) <= tol)
            return Stability::NonHyperbolic;
        (z.real() > 0.0 ? any_pos : any_neg) = true;
        if (z.imag() != 0.0)
            complex_pair = true;
    }
    if (any_pos && any_neg)
        return Stability::Saddle;
    if (any_neg)
        return complex_pair ? Stability::StableSpiral : Stability::StableNode;
    return complex_pair ? Stability::UnstableSpiral : Stability::UnstableNode;
}

Stability classify_equilibrium(const EquilibriumPoint& eq)
{
    return classify_eigenvalues(eq.eigenvalues);
}

EquilibriumPoint make_equilibrium(const State2& x, const Params& p, Label label)
{
    EquilibriumPoint eq;
    eq.state = {x[0], x[1], recovered_at_equilibrium(x[1], p)};
    eq.params = p;
    eq.eigenvalues = eigenvalues(jacobian_reduced(x, p));
    eq.stability = classify_equilibrium(eq);
    eq.label = label;
    return eq;
}

EquilibriumPoint disease_free_equilibrium(const Params& p)
{
    p.validate();
    return make_equilibrium({p.lambda / p.mu, 0.0}, p, Label::E0);
}

std::vector<double> endemic_polynomial(const Params& p)
{
    // With u = 1 + rho I and m = mu + mu', the I-equation gives
    // beta S/(1 + gamma S) = (m u + alpha)/u, hence S = (m u + alpha)/D with
    // D = (beta - gamma m) u - gamma alpha. Substituting into the S-equation
    // and clearing u D yields
    //   lambda u D - mu u (m u + alpha) - I (m u + alpha) D = 0.
    const double m = p.mu + p.mu_prime;
    const Poly u{1.0, p.rho};
    const Poly mua{m + p.alpha, m * p.rho};
    const Poly d{(p.beta - p.gamma * m) - p.gamma * p.alpha, (p.beta - p.gamma * m) * p.rho};
    const Poly ud = poly_mul(u, d);
    const Poly umua = poly_mul(u, mua);
    const Poly imuad = poly_mul(Poly{0.0, 1.0}, poly_mul(mua, d));
    Poly out = poly_axpy(p.lambda, ud, poly_axpy(-p.mu, umua, poly_axpy(-1.0, imuad, Poly{0.0})));
    while (out.size() > 1 && out.back() == 0.0)
        out.pop_back();
    return out;
}

std::vector<EquilibriumPoint> endemic_equilibria(const Params& p)
{
    p.validate();
    const std::vector<double> coeffs = endemic_polynomial(p);
    if (coeffs.size() < 2)
        return {};
    std::vector<double> roots;
    try {
        roots = num::poly_real_roots(coeffs);
    } catch (const std::exception& e) {
        throw RootFindingError(std::string("endemic polynomial: ") + e.what(), coeffs);
    }

    const double m = p.mu + p.mu_prime;
    std::vector<State2> states;
    for (double infected : roots) {
        if (!(infected > 0.0))
            continue;
        const double u = 1.0 + p.rho * infected;
        const double g = m + p.alpha / u;
        const double denom = p.beta - p.gamma * g;
        if (!(denom > 0.0))
            continue;
        State2 x{g / denom, infected};
        // Newton polish on the planar residual.
        for (int it = 0; it < 8; ++it) {
            const State2 f = rhs_reduced(x, p);
            if (std::max(std::abs(f[0]), std::abs(f[1])) < 1e-13)
                break;
            const Mat2 j = jacobian_reduced(x, p);
            const double dj = det(j);
            if (dj == 0.0)
                break;
            const double dx0 = (j[1][1] * f[0] - j[0][1] * f[1]) / dj;
            const double dx1 = (-j[1][0] * f[0] + j[0][0] * f[1]) / dj;
            const State2 next{x[0] - dx0, x[1] - dx1};
            if (!std::isfinite(next[0]) || !std::isfinite(next[1]))
                break;
            x = next;
        }
        const State2 f = rhs_reduced(x, p);
        const double resid = std::max(std::abs(f[0]), std::abs(f[1]));
        if (!(resid < 1e-8))
            throw RootFindingError("endemic equilibrium refinement did not converge", coeffs);
        if (x[0] > 0.0 && x[1] > 0.0)
            states.push_back(x);
    }
    std::sort(states.begin(), states.end(), [](const State2& a, const State2& b) { return a[1] < b[1]; });

    std::vector<EquilibriumPoint> out;
    out.reserve(states.size());
    for (std::size_t k = 0; k < states.size(); ++k) {
        const auto rank = states.size() - 1 - k;  // 0 for the largest I
        out.push_back(make_equilibrium(states[k], p, static_cast<Label>(1 + rank)));
    }
    return out;
}

}  // namespace sirbif::model
