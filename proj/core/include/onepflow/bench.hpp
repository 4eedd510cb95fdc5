#pragma once

#include "onepflow/solver.hpp"

namespace onepflow {

// ---------------------------------------------------------------------------
// Reference problems with known structure.
// ---------------------------------------------------------------------------

struct RadialSample {
  double value = 0;
  Coord gradient = {0, 0};
};

/// (|x|-1)_+^(p')/p' with p' = p/(p-1); the flat region covers the unit ball
/// and the gradient (|x|-1)_+^(p'-1) x/|x| matches continuously across it.
/// The stationary residual div(A(grad u)) - n vanishes away from the flat set.
RadialSample exact_radial(double p, int n, const Coord& x);

/// Stationary benchmark on the box (-2,2)^2 (n must be 2): boundary data from
/// exact_radial, a1 = ap = 1, identity gamma, uniform forcing -n (so the
/// steady limit obeys div(A(grad u)) = n), initial field a linear blend of
/// the boundary traces.
Scenario scenario_radial_steady(double p, int n, int resolution, double eps,
                                double delta);

/// Scalar channel-flow reduction on a square cross-section (-1,1)^2 with
/// p = 2, zero boundary data, and uniform time-dependent forcing f(t); the
/// plug region shows up as the flat set of the solution.
Scenario scenario_bingham_pipe(std::function<double(double)> forcing,
                               std::string forcing_descriptor, int resolution,
                               double eps, double delta);

/// Constant data everywhere; the exact solution is the constant.
Scenario scenario_constant(double c, double p, int resolution, double eps,
                           double delta);

}  // namespace onepflow
