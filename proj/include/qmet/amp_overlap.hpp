#pragma once

#include <complex>
#include <optional>

#include "qmet/oracles.hpp"
#include "qmet/pea.hpp"

namespace qmet {

// A point on the unit upper hemisphere: the disk of overlap values o is
// lifted to (Re o, Im o, sqrt(1 - |o|^2)) and distances are measured along
// great circles, so precision near the rim (|o| -> 1) is angular rather
// than Euclidean.
struct HemispherePoint {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
};

// Throws invalid_operand when |o| exceeds 1 beyond rounding (1e-9).
HemispherePoint hemisphere_lift(cd o);

// Great-circle distance between the lifts of two overlap values; ranges
// over [0, pi] on the closed disk (d(0, 1) = pi/2, d(1, -1) = pi).
double hemisphere_distance(cd a, cd b);

struct AmpEstimate {
    double value = 0.0;   // estimate of |<psi|U|psi>| in [0, 1]
    double phase = 0.0;   // the reflection eigenphase it was read from
    PhaseEstimate pea;    // the underlying run
    ResourceLedger ledger;
};

// Amplitude estimation: phase-estimates the reflection S built from (v, u)
// at precision 2p and reports |cos(phase/2)|.  The grid error of the phase
// maps to an arccos-scale amplitude error of at most p (in units of pi).
// With `c` present the repetition-hardened phase estimation is used and the
// guarantee holds with probability at least c; with `c` absent the plain
// sequential variant runs, which makes the resource counts exact:
// 4*N(2p)+1 preparations and 2*N(2p) uses of u, N(q) = 2^ceil(log2(1/q))-1.
AmpEstimate amp_estimate(const CostedUnitary& u, const StatePrep& v, double p,
                         std::optional<double> c, Rng& rng);

// Combines the three measured magnitudes into the overlap's Cartesian
// estimate: y = (4*b0^2 - a^2 - 1)/2 + i*(4*b_half_pi^2 - a^2 - 1)/2.
// Exact when fed exact magnitudes.
cd reconstruct_y(double a, double b0, double b_half_pi);

struct OverlapEstimate {
    cd value;               // a * e^{i theta}
    double a = 0.0;         // |<psi|U|psi>| estimate
    double b0 = 0.0;        // |(1 + o)/2| estimate
    double b_half_pi = 0.0; // |(1 - i o)/2| estimate
    double theta = 0.0;     // phase estimate, 0 when unreliable
    bool phase_unreliable = false;  // |y| too small to carry a direction
    ResourceLedger ledger;
};

// Full overlap estimation: the magnitude at precision p/4 plus two
// controlled-u magnitudes at p/16 (one with an extra pi/2 ancilla phase)
// determine Re and Im of the overlap; the reported value keeps the measured
// magnitude and takes only the direction from y.  With `c` present each of
// the three calls runs at confidence 1-(1-c)/3.  Hemisphere distance to the
// true overlap is within p with probability about c (validated empirically;
// see the project README for the error budget).
OverlapEstimate overlap_estimate(const CostedUnitary& u, const StatePrep& v,
                                 double p, std::optional<double> c, Rng& rng);

}  // namespace qmet
