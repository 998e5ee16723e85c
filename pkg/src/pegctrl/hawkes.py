"""Marked self-exciting mint/redemption streams with peg-feedback intensity.

Each stream is a univariate Hawkes process with exponential kernel: the
intensity jumps by ``kappa`` at every event and relaxes back to baseline at
rate ``theta``.  The redemption stream additionally carries an instantaneous
peg-feedback term ``zeta * dP(t)**2`` that is treated as piecewise constant
per simulation substep.

Event times are drawn by exact time rescaling: the compensator between events
has a closed form for the exponential kernel, so the next event time is the
(Newton-solved) inverse of the compensator at a unit-exponential draw.  This
is exact, rejection-free, and gives a monotone coupling under shared draws
(raising the baseline can only add events), which the property tests rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .errors import SimulationError

#: Intensity ceiling (events/hour) above which a stream is considered to have
#: exploded due to misconfiguration.
EXPLOSION_GUARD = 1.0e6


@dataclass(frozen=True)
class HawkesParams:
    """Parameters of one marked self-exciting stream.

    lambda0:   baseline intensity, events/hour
    kappa:     self-excitation jump per event, events/hour
    theta:     excitation decay rate, 1/hour
    mark_mean: mean transaction size, dollars
    """

    lambda0: float
    kappa: float
    theta: float
    mark_mean: float

    def __post_init__(self):
        if self.lambda0 < 0:
            raise ValueError(f"lambda0 must be >= 0, got {self.lambda0}")
        if self.kappa <= 0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")
        if self.theta <= 0:
            raise ValueError(f"theta must be > 0, got {self.theta}")
        if self.mark_mean <= 0:
            raise ValueError(f"mark_mean must be > 0, got {self.mark_mean}")
        if self.kappa / self.theta >= 1.0:
            raise ValueError(
                f"branching ratio kappa/theta = {self.kappa / self.theta:.3f} "
                "must be < 1 (supercritical streams explode)"
            )


@dataclass(frozen=True)
class IntensityState:
    """Filtered intensity of one stream (baseline + excitation, no feedback)."""

    current: float
    last_update: float = 0.0


@dataclass(frozen=True)
class MarkedEvent:
    """One mint or redemption with its dollar size."""

    time: float
    kind: str  # "mint" or "redemption"
    size: float


@dataclass(frozen=True)
class PegFeedback:
    """Strength of the peg-instability feedback on redemption intensity."""

    zeta: float = 0.0

    def __post_init__(self):
        if self.zeta < 0:
            raise ValueError(f"zeta must be >= 0, got {self.zeta}")


class StreamRNG:
    """Four decoupled random substreams for one simulation replica.

    Event times and marks use separate generators per stream so that changing
    one stream's rate cannot perturb the other stream's draws, and marks
    cannot perturb event times.  This is what makes the monotone-coupling
    property hold pathwise under a shared seed.
    """

    def __init__(self, seed):
        if isinstance(seed, np.random.SeedSequence):
            ss = seed
        else:
            ss = np.random.SeedSequence(seed)
        kids = ss.spawn(4)
        self.redemption_times = np.random.default_rng(kids[0])
        self.redemption_marks = np.random.default_rng(kids[1])
        self.mint_times = np.random.default_rng(kids[2])
        self.mint_marks = np.random.default_rng(kids[3])

    @classmethod
    def coerce(cls, rng):
        if isinstance(rng, cls):
            return rng
        if isinstance(rng, np.random.Generator):
            obj = cls.__new__(cls)
            kids = rng.spawn(4)
            obj.redemption_times, obj.redemption_marks = kids[0], kids[1]
            obj.mint_times, obj.mint_marks = kids[2], kids[3]
            return obj
        return cls(rng)


def decay_intensity(state: IntensityState, params: HawkesParams, dt: float) -> IntensityState:
    """Relax the filtered intensity toward baseline over an event-free gap."""
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    lam = params.lambda0 + (state.current - params.lambda0) * np.exp(-params.theta * dt)
    return IntensityState(current=lam, last_update=state.last_update + dt)


def apply_event_jump(state: IntensityState, params: HawkesParams) -> IntensityState:
    """Add the self-excitation jump at an event time."""
    return replace(state, current=state.current + params.kappa)


def branching_ratio(params: HawkesParams) -> float:
    """Expected number of child events per event; < 1 means subcritical."""
    if params.theta <= 0:
        raise ValueError(f"theta must be > 0, got {params.theta}")
    return params.kappa / params.theta


def sample_mark(mark_mean: float, rng: np.random.Generator) -> float:
    """Draw one exponential transaction size with the given mean."""
    if mark_mean <= 0:
        raise ValueError(f"mark_mean must be > 0, got {mark_mean}")
    while True:
        z = rng.exponential(mark_mean)
        if z > 0.0:
            return z


@njit(cache=True)
def _stream_piece(b, kappa, theta, mark_mean, exc, e_rem, t0, t1, guard, rng_t, rng_m):
    """Advance one stream over [t0, t1) with constant effective baseline b.

    exc is the excitation level (intensity minus effective baseline) at t0.
    e_rem carries the unconsumed part of the current unit-exponential draw
    across piece boundaries (negative means draw a fresh one).

    Returns (times, sizes, exc_end, e_rem_end, status); status 1 flags an
    intensity explosion.
    """
    cap = 64
    times = np.empty(cap, np.float64)
    sizes = np.empty(cap, np.float64)
    n = 0
    t = t0
    while True:
        if e_rem < 0.0:
            e_rem = rng_t.standard_exponential()
        tau_b = t1 - t
        comp_b = b * tau_b + (exc / theta) * (1.0 - np.exp(-theta * tau_b))
        if e_rem >= comp_b:
            e_rem -= comp_b
            exc *= np.exp(-theta * tau_b)
            return times[:n], sizes[:n], exc, e_rem, 0
        # Invert the compensator: solve b*tau + exc/theta*(1-exp(-theta*tau)) = e_rem.
        # f is concave increasing, so Newton from below converges monotonically.
        lam_t = b + exc
        tau = e_rem / lam_t
        for _ in range(100):
            ex = np.exp(-theta * tau)
            f = b * tau + (exc / theta) * (1.0 - ex) - e_rem
            fp = b + exc * ex
            step = f / fp
            tau -= step
            if abs(step) <= 1e-15 * (1.0 + abs(tau)):
                break
        t += tau
        exc = exc * np.exp(-theta * tau) + kappa
        if n == cap:
            cap *= 2
            new_t = np.empty(cap, np.float64)
            new_s = np.empty(cap, np.float64)
            new_t[:n] = times
            new_s[:n] = sizes
            times, sizes = new_t, new_s
        times[n] = t
        sizes[n] = rng_m.exponential(mark_mean)
        n += 1
        e_rem = -1.0
        if b + exc > guard:
            return times[:n], sizes[:n], exc, e_rem, 1


def simulate_stream_segment(
    params_R: HawkesParams,
    params_M: HawkesParams,
    feedback: PegFeedback,
    peg_lookup,
    t0: float,
    t1: float,
    states: tuple[IntensityState, IntensityState],
    rng,
    substep: float = 0.1,
):
    """Simulate both streams over [t0, t1) against a peg-deviation path.

    The peg path enters the redemption intensity as an additive term
    ``zeta * peg_lookup(t)**2`` held piecewise constant per substep.  Returns
    the time-ordered event list and the exact filtered intensity pair at t1.
    """
    if not t0 < t1:
        raise ValueError(f"need t0 < t1, got [{t0}, {t1}]")
    rng = StreamRNG.coerce(rng)
    state_R, state_M = states
    exc_R = state_R.current - params_R.lambda0
    exc_M = state_M.current - params_M.lambda0
    e_rem_R = -1.0
    e_rem_M = -1.0

    n_sub = max(1, int(np.ceil((t1 - t0) / substep - 1e-12)))
    all_t: list[np.ndarray] = []
    all_z: list[np.ndarray] = []
    all_kind: list[np.ndarray] = []
    for i in range(n_sub):
        ts = t0 + i * (t1 - t0) / n_sub
        te = t0 + (i + 1) * (t1 - t0) / n_sub
        dp = float(peg_lookup(ts))
        if not np.isfinite(dp):
            raise SimulationError(f"peg_lookup({ts}) returned non-finite value {dp}")
        b_R = params_R.lambda0 + feedback.zeta * dp * dp
        t_R, z_R, exc_R, e_rem_R, st_R = _stream_piece(
            b_R, params_R.kappa, params_R.theta, params_R.mark_mean,
            exc_R, e_rem_R, ts, te, EXPLOSION_GUARD,
            rng.redemption_times, rng.redemption_marks,
        )
        t_M, z_M, exc_M, e_rem_M, st_M = _stream_piece(
            params_M.lambda0, params_M.kappa, params_M.theta, params_M.mark_mean,
            exc_M, e_rem_M, ts, te, EXPLOSION_GUARD,
            rng.mint_times, rng.mint_marks,
        )
        if st_R or st_M:
            raise SimulationError(
                f"intensity exploded past {EXPLOSION_GUARD:.0e} events/hour near t={ts:.2f}h"
            )
        all_t.extend((t_R, t_M))
        all_z.extend((z_R, z_M))
        all_kind.append(np.zeros(len(t_R), dtype=np.int8))
        all_kind.append(np.ones(len(t_M), dtype=np.int8))

    times = np.concatenate(all_t)
    sizes = np.concatenate(all_z)
    kinds = np.concatenate(all_kind)
    order = np.argsort(times, kind="stable")
    events = [
        MarkedEvent(time=float(times[j]),
                    kind="redemption" if kinds[j] == 0 else "mint",
                    size=float(sizes[j]))
        for j in order
    ]
    out_R = IntensityState(current=params_R.lambda0 + exc_R, last_update=t1)
    out_M = IntensityState(current=params_M.lambda0 + exc_M, last_update=t1)
    return events, (out_R, out_M)
