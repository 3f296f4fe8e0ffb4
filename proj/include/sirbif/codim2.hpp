#pragma once

#include "sirbif/contin.hpp"

#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace sirbif::codim2 {

using contin::SpecialPoint;
using model::Params;
using model::State2;

enum class CurveKind { FoldCurve, HopfCurve, HomoclinicCurve, LPCCurve };

std::string_view to_string(CurveKind k) noexcept;

struct CurvePoint {
    double gamma = 0.0;
    double rho = 0.0;
    State2 state{};
    double residual = 0.0;  // max-norm of the defining system
    double det = 0.0;
    double trace = 0.0;
    double l1 = std::numeric_limits<double>::quiet_NaN();  // Hopf curves only
    bool l1_converged = true;  // step-halving check passed
    double arclength = 0.0;
};

struct Codim2Curve {
    CurveKind kind = CurveKind::FoldCurve;
    Params base;  // rates other than gamma and rho
    std::vector<CurvePoint> points;
    std::vector<SpecialPoint> special;
    bool truncated = false;
    std::string warning;
};

struct CurveOptions {
    double h0 = 1e-3;
    double hmax = 1e-2;
    double hmin = 1e-10;
    int max_points = 20000;
    double newton_tol = 1e-10;
    double gamma_min = 0.0, gamma_max = 1.0;
    double rho_min = 0.0, rho_max = 1.0;
    bool l1_monitor = true;
};

/// Continues {f = 0, det J = 0} in (S, I, gamma, rho) both ways from an LP
/// seed. Runs stop on leaving the box, when I or S reaches zero, or after
/// max_points. BT points (trace J sign changes) are localized.
Codim2Curve continue_fold_curve(const SpecialPoint& seed, const Params& base = {}, const CurveOptions& opt = {});

/// Continues {f = 0, trace J = 0} both ways from an HB seed. Each direction
/// ends at the BT point where det J reaches zero. l1 is monitored and GH
/// points are localized.
Codim2Curve continue_hopf_curve(const SpecialPoint& seed, const Params& base = {}, const CurveOptions& opt = {});

using PlanarField = std::function<State2(const State2&)>;

/// Default finite-difference step factor for lyapunov_l1: h = factor * (1 + |x|).
inline constexpr double l1_step_factor = 2e-3;

/// First Lyapunov coefficient of a planar field at a Hopf point x with
/// Jacobian `jac` (trace 0, det = omega^2). The field is written in the real
/// eigenbasis, where the linear part is a rotation, and the cubic normal-form
/// coefficient is assembled from central differences with step
/// rel_step * (1 + |x|).
double lyapunov_l1(const PlanarField& f, const State2& x, const model::Mat2& jac, double omega,
                   double rel_step = l1_step_factor);

/// Model version; throws std::domain_error when the point is not a proper Hopf point.
double lyapunov_l1(const Params& p, const State2& hopf_state, double omega, double rel_step = l1_step_factor);

struct L1Estimate {
    double value = 0.0;
    double halved = 0.0;  // with half the step
    bool converged = false;  // relative change below 5 %
};
L1Estimate lyapunov_l1_checked(const Params& p, const State2& hopf_state, double omega,
                               double rel_step = l1_step_factor);

/// BT points along a curve: trace sign changes on fold curves, det sign
/// changes on Hopf curves. Each result satisfies |det|, |trace| <= 1e-8.
std::vector<SpecialPoint> detect_bt(const Codim2Curve& curve);

/// GH points where the l1 monitor changes sign, localized by bisection along
/// the curve. aux["l1_slope_sign"] is the sign of dl1/ds in curve order.
std::vector<SpecialPoint> detect_gh(const Codim2Curve& curve);

/// Newton on {f = 0, det J = 0, trace J = 0} in (S, I, gamma, rho).
bool polish_bt(const Params& base, State2& x, double& gamma, double& rho);

}  // namespace sirbif::codim2
