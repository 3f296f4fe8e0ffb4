#pragma once

#include "sirbif/model.hpp"

#include <complex>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace sirbif::contin {

using model::ParamId;
using model::Params;
using model::State2;

enum class PointKind { LP, HB, BP, BT, GH, HOM, LPC };

std::string_view to_string(PointKind k) noexcept;

struct BranchPoint {
    State2 state{};
    double active_param_value = 0.0;
    double test_fold = 0.0;  // det J
    double test_hopf = 0.0;  // trace J
    std::vector<std::complex<double>> eigenvalues;
    double arclength = 0.0;
    /// Unit tangent in scaled (S, I, p) coordinates, oriented along the branch.
    std::array<double, 3> tangent{};
};

struct SpecialPoint {
    PointKind kind = PointKind::LP;
    double gamma = 0.0;
    double rho = 0.0;
    State2 state{};
    /// omega, l1, period, branch_index and similar diagnostics.
    std::map<std::string, double> aux;
};

struct Branch {
    std::vector<BranchPoint> points;
    std::vector<SpecialPoint> special;
    ParamId active_param = ParamId::Gamma;
    double frozen_param_value = 0.0;
    bool truncated = false;
    std::string warning;
};

struct ContinuationOptions {
    double h0 = 1e-3;
    double hmax = 1e-2;
    double hmin = 1e-9;
    int max_points = 20000;
    int direction = +1;  // initial sign of d(active parameter)
    double newton_tol = 1e-10;
    int newton_max_iter = 12;
};

class ContinuationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a bracket cannot be resolved; the bracket is kept for diagnosis.
class LocalizationError : public std::runtime_error {
public:
    LocalizationError(const std::string& what, BranchPoint a, BranchPoint b)
        : std::runtime_error(what), a_(std::move(a)), b_(std::move(b))
    {
    }
    const BranchPoint& lower() const noexcept { return a_; }
    const BranchPoint& upper() const noexcept { return b_; }

private:
    BranchPoint a_, b_;
};

/// Pseudo-arclength continuation of equilibria in one parameter, starting
/// from `start`. Stops at the boundary of `range` (the final point lies on
/// it), after max_points, or on step underflow (truncated = true).
Branch continue_equilibrium(const Params& p, const model::EquilibriumPoint& start, ParamId active,
                            std::pair<double, double> range, const ContinuationOptions& opt = {});

/// Runs both directions from `start` and joins them into a single branch
/// ordered along the arc.
Branch continue_bidirectional(const Params& p, const model::EquilibriumPoint& start, ParamId active,
                              std::pair<double, double> range, ContinuationOptions opt = {});

/// Bisection on the branch segment [a, b] for a sign change of the test
/// function of `kind` (LP/BP: det J, HB: trace J), followed by a Newton
/// polish on {f = 0, test = 0} for LP and HB.
SpecialPoint localize_special(const Params& p, ParamId active, const BranchPoint& a, const BranchPoint& b,
                              PointKind kind);

/// sqrt(det J) at a Hopf point.
double hopf_frequency(const SpecialPoint& sp, const Params& base = {});
/// Same, for an arbitrary planar Jacobian with zero trace.
double hopf_frequency(const model::Mat2& jac);

/// Parameters at a special point's location.
Params params_at(const SpecialPoint& sp, Params base = {}) noexcept;

/// Builds a BranchPoint (tests, eigenvalues) at an equilibrium; the tangent is
/// left zero.
BranchPoint make_branch_point(const State2& x, double active_value, const Params& p, ParamId active);

}  // namespace sirbif::contin
