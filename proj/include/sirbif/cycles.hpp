#pragma once

#include "sirbif/contin.hpp"

#include <array>
#include <complex>
#include <optional>
#include <string>
#include <vector>

namespace sirbif::cycles {

using contin::SpecialPoint;
using model::ParamId;
using model::Params;
using model::State2;

enum class CycleStability { Stable, Unstable, Semistable };

std::string_view to_string(CycleStability s) noexcept;

struct Cycle {
    /// States at uniform phase t_k = k T / (N - 1); the last closes the orbit.
    std::vector<State2> mesh;
    double period = 0.0;
    Params params;
    /// Trivial multiplier first, then the nontrivial one.
    std::array<std::complex<double>, 2> multipliers{};
    CycleStability stability = CycleStability::Semistable;
    /// Shooting nodes at t_i = i T / M; nodes[0] is the phase point (dI/dt = 0).
    std::vector<State2> nodes;
    /// Scaled max-norm of the shooting residual at convergence.
    double residual = 0.0;
};

struct CycleOptions {
    int mesh_points = 100;
    double segment_time = 150.0;  // target duration of one shooting segment
    int min_segments = 4;
    int max_segments = 64;
    double rel_tol = 1e-10;  // integrator tolerances
    double abs_tol = 1e-10;
    double newton_tol = 1e-9;  // scaled residual
    int newton_max_iter = 15;
    double stability_tol = 1e-6;  // |mu2 - 1| below this is flagged semistable
};

struct CycleBranch {
    std::vector<Cycle> cycles;
    std::vector<SpecialPoint> special;
    ParamId active = ParamId::Gamma;
    double frozen_param_value = 0.0;
    double period_blowup_threshold = 1000.0;
    bool truncated = false;
    std::string termination;  // why the run stopped
};

struct CycleContinuationOptions {
    CycleOptions cycle;
    double h0 = 1e-2;
    double hmax = 0.1;
    double hmin = 1e-9;
    int max_points = 600;
    double period_max = 2200.0;  // stop once a cycle this long is reached
    double period_blowup_threshold = 1000.0;
    double min_amplitude = 2e-3;  // scaled extent at which the cycle is back at a Hopf point
    /// 0: away from the Hopf point (growing amplitude); +1/-1: initial sign of d(param).
    int direction = 0;
};

class CycleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Small cycle near a Hopf point: an ellipse of the given scaled amplitude in
/// the eigenplane, corrected by multiple shooting with the phase condition
/// dI/dt = 0 at node 0, an amplitude condition, and `active` left free.
Cycle cycle_from_hopf(const SpecialPoint& hb, ParamId active, double amplitude = 1e-2, const Params& base = {},
                      const CycleOptions& opt = {});

/// Pseudo-arclength continuation of a cycle in one parameter. Flags LPC at
/// folds of the branch (the localized fold cycle is inserted into the list,
/// its index in aux "branch_index") and HOM once periods pass the blow-up
/// threshold (see homoclinic_proxy for the extrapolated location).
CycleBranch continue_cycles(const Cycle& start, ParamId active, std::pair<double, double> range,
                            const CycleContinuationOptions& opt = {});

/// Monodromy multipliers: the trivial one as the Rayleigh quotient of the
/// flow direction, the other from Liouville's formula exp(integral of trace J).
std::array<std::complex<double>, 2> floquet_multipliers(const Cycle& c, const CycleOptions& opt = {});

struct HomoclinicFit {
    double param = 0.0;  // extrapolated parameter value
    double sigma = 0.0;
    double amplitude = 0.0;
    double residual = 0.0;  // max fit residual relative to the parameter spread
    double saddle_distance = 0.0;  // scaled, from the longest cycle
};

/// Fits param(T) = param_hom + c exp(-sigma T) over the last five entries with
/// period above the threshold. Returns nothing (and fills `diagnostic`) when
/// the tail is short, non-monotone, badly fitted or far from a saddle.
std::optional<SpecialPoint> homoclinic_proxy(const CycleBranch& branch, std::string* diagnostic = nullptr,
                                             HomoclinicFit* fit = nullptr);

struct CensusOptions {
    CycleContinuationOptions continuation;
    double hopf_amplitude = 1e-2;
    /// A target this close to an LPC parameter reports the fold cycle, flagged semistable.
    double semistable_param_tol = 1e-6;
    /// A target this close to an extrapolated HOM parameter is reported as homoclinic.
    double homoclinic_param_tol = 1e-5;
};

struct CycleCensus {
    std::vector<Cycle> cycles;  // ordered by increasing amplitude
    bool homoclinic = false;
    std::vector<SpecialPoint> nearby;  // LPC / HOM points that matched the target
};

/// Limit cycles at fixed parameters: Hopf points of the endemic branches in
/// either parameter seed cycle branches, which are cut at the target value and
/// re-corrected there.
CycleCensus cycles_at(const Params& p, const CensusOptions& opt = {});

/// Cycle through (or near) a state at fixed parameters: the orbit is run to its
/// next I maximum, sampled over period_guess and corrected by shooting.
Cycle cycle_from_state(const Params& p, const State2& x, double period_guess, const CycleOptions& opt = {});

/// Scaled extent (max over both coordinates of max - min) of a cycle's mesh.
double amplitude(const Cycle& c) noexcept;

/// Rebuilds the phase mesh, multipliers and stability of a cycle from its
/// nodes and period.
void finalize(Cycle& c, const CycleOptions& opt = {});

}  // namespace sirbif::cycles
