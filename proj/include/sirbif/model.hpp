#pragma once

#include "sirbif/numerics.hpp"

#include <array>
#include <complex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sirbif::model {

/// Model parameters. Defaults are the reference rates of the COVID-19 SIR
/// model; gamma (cautiousness) and rho (bed occupancy) are the bifurcation
/// parameters.
struct Params {
    double beta = 0.05;
    double lambda = 10.0;
    double mu = 0.01;
    double mu_prime = 0.1;
    double alpha = 0.2;
    double gamma = 0.0;
    double rho = 0.0;

    /// Throws std::domain_error when a rate is non-positive or gamma/rho leave [0,1].
    void validate() const;
};

enum class ParamId { Gamma, Rho };

double get(const Params& p, ParamId id) noexcept;
Params with(Params p, ParamId id, double value) noexcept;
std::string_view to_string(ParamId id) noexcept;
ParamId param_from_string(std::string_view name);

/// Planar (S, I) state. R decouples and is reconstructed when needed.
using State2 = std::array<double, 2>;
/// Full (S, I, R) state.
using State3 = std::array<double, 3>;
using Mat2 = std::array<std::array<double, 2>, 2>;

enum class Stability { StableNode, StableSpiral, Saddle, UnstableNode, UnstableSpiral, NonHyperbolic };
enum class Label { E0, E1, E2, E3 };

std::string_view to_string(Stability s) noexcept;
std::string_view to_string(Label l) noexcept;

inline constexpr double tol_hyperbolic = 1e-8;

struct EquilibriumPoint {
    State3 state{};
    Params params;
    std::vector<std::complex<double>> eigenvalues;  // of the planar (S, I) linearization
    Stability stability = Stability::NonHyperbolic;
    Label label = Label::E0;

    State2 planar() const noexcept { return {state[0], state[1]}; }
};

/// Raised when the equilibrium polynomial cannot be solved; carries the
/// polynomial (ascending powers of I) for diagnosis.
class RootFindingError : public std::runtime_error {
public:
    RootFindingError(const std::string& what, std::vector<double> coeffs)
        : std::runtime_error(what), coeffs_(std::move(coeffs))
    {
    }
    const std::vector<double>& coefficients() const noexcept { return coeffs_; }

private:
    std::vector<double> coeffs_;
};

State3 rhs_full(const State3& x, const Params& p);
State2 rhs_reduced(const State2& x, const Params& p);
Mat2 jacobian_reduced(const State2& x, const Params& p);

/// d(rhs_reduced)/d(parameter) at fixed state.
State2 param_derivative(const State2& x, const Params& p, ParamId id);

/// Partial derivatives of the planar Jacobian with respect to S, I, gamma, rho.
struct JacobianDerivatives {
    Mat2 dS{}, dI{}, dgamma{}, drho{};
    const Mat2& by_param(ParamId id) const noexcept { return id == ParamId::Gamma ? dgamma : drho; }
};
JacobianDerivatives jacobian_derivatives(const State2& x, const Params& p);

double det(const Mat2& m) noexcept;
double trace(const Mat2& m) noexcept;
num::Matrix to_matrix(const Mat2& m);
std::vector<std::complex<double>> eigenvalues(const Mat2& m);

double r0(const Params& p);

/// Reconstructs R at an equilibrium from I.
double recovered_at_equilibrium(double infected, const Params& p) noexcept;

Stability classify_eigenvalues(const std::vector<std::complex<double>>& ev, double tol = tol_hyperbolic);
Stability classify_equilibrium(const EquilibriumPoint& eq);

EquilibriumPoint disease_free_equilibrium(const Params& p);

/// Cubic in I whose positive roots (with S > 0) are the endemic equilibria.
std::vector<double> endemic_polynomial(const Params& p);

/// Endemic equilibria sorted by ascending I. Labels follow the convention that
/// the largest-I equilibrium is E1, the next E2 and so on, so that at the
/// reference scenarios E1 is the anti-saddle and E2 the saddle.
std::vector<EquilibriumPoint> endemic_equilibria(const Params& p);

/// Builds an EquilibriumPoint (eigenvalues, class) at a planar state.
EquilibriumPoint make_equilibrium(const State2& x, const Params& p, Label label);

/// State scaling used by continuation and distance tests: S/1000, I/40.
inline constexpr State2 state_scale{1.0 / 1000.0, 1.0 / 40.0};

}  // namespace sirbif::model
