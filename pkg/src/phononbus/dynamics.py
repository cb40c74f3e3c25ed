"""Open-system evolution of the transducer under piecewise-constant detunings.

The master equation is integrated in the frame rotating at the phonon
frequency. Configured rates are ordinary frequencies (Hz); the angular 2pi
factors enter here and only here:

  - Hamiltonian: H = 2pi [ (d_sc/2) sz_sc + (d_e/2) sz_e + d_p a+a
                           + g_scp (s+_sc a + h.c.) + g_pe (s+_e a + h.c.) ]
  - Dissipators: standard form D[c] rho = c rho c+ - (1/2){c+c, rho} with
    angular rate 2pi*kappa on jumps (s-_sc, a, s-_e), so a lone excitation
    decays as exp(-2pi kappa t).

Two integration routes are provided. The default treats each constant
segment exactly by exponentiating the Liouvillian superoperator; an adaptive
Runge-Kutta stepper over the same Liouvillian serves as the cross-check and
would extend to smooth schedules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .device import SystemRates
from .errors import IntegrationError
from .qops import DensityMatrix, Operator, SpaceLayout, annihilator, embed, sigma_z

TWO_PI = 2.0 * math.pi

SINGLE_EXCITATION_TARGETS = ((1, 0, 0), (0, 1, 0), (0, 0, 1))

TRAJECTORY_CSV_HEADER = "t_s,P_sc,P_p,P_e,F_sc,F_p,F_e,trace_err"


@dataclass(frozen=True)
class Segment:
    """One constant-detuning interval. Times in s, detunings in Hz."""

    t_start: float
    t_end: float
    delta_sc: float = 0.0
    delta_e: float = 0.0
    delta_p: float = 0.0

    def __post_init__(self):
        if self.t_end < self.t_start:
            raise ValueError(f"segment ends ({self.t_end}) before it starts ({self.t_start})")

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class DetuningSchedule:
    """Contiguous, non-overlapping segments starting at t = 0."""

    segments: tuple[Segment, ...]

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ValueError("schedule needs at least one segment")
        if segs[0].t_start != 0.0:
            raise ValueError("first segment must start at t = 0")
        for a, b in zip(segs, segs[1:]):
            if not math.isclose(a.t_end, b.t_start, rel_tol=1e-12, abs_tol=1e-18):
                raise ValueError(
                    f"segments are not contiguous: {a.t_end} then {b.t_start}"
                )
        for s in segs:
            if s.duration <= 0.0:
                raise ValueError("segments must have positive duration")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def constant(
        cls, duration: float, delta_sc: float = 0.0, delta_e: float = 0.0, delta_p: float = 0.0
    ) -> "DetuningSchedule":
        return cls((Segment(0.0, duration, delta_sc, delta_e, delta_p),))

    @property
    def duration(self) -> float:
        return self.segments[-1].t_end


@dataclass(frozen=True)
class SimOptions:
    """Integrator options.

    method: "piecewise-exponential" (exact per constant segment) or
    "adaptive-stepper". rel_tol controls the stepper and the documented
    agreement between the two routes. n_ph is the phonon truncation.
    sample_dt defaults to duration/2000 when omitted.
    """

    method: str = "piecewise-exponential"
    rel_tol: float = 1e-8
    n_ph: int = 3
    sample_dt: float | None = None

    def __post_init__(self):
        if self.method not in ("piecewise-exponential", "adaptive-stepper"):
            raise ValueError(f"unknown integration method '{self.method}'")
        if not 0.0 < self.rel_tol <= 1e-4:
            raise ValueError("rel_tol must lie in (0, 1e-4]")
        if not 2 <= self.n_ph <= 8:
            raise ValueError("phonon truncation n_ph must lie in [2, 8]")
        if self.sample_dt is not None and self.sample_dt <= 0:
            raise ValueError("sample_dt must be positive")

    @property
    def layout(self) -> SpaceLayout:
        return SpaceLayout.tripartite(self.n_ph)


@dataclass(frozen=True)
class LindbladModel:
    """Rates + layout + schedule defining one evolution.

    spin_decay_model "energy" uses the jump s-_e at angular rate
    2pi*kappa_e. The "dephasing" variant replaces it with sz_e at angular
    rate pi*kappa_e, so the spin coherence decays at 2pi*kappa_e while its
    population persists; populations then only leak through the other
    channels. Intended for sensitivity analysis.
    """

    rates: SystemRates
    layout: SpaceLayout
    schedule: DetuningSchedule
    spin_decay_model: str = "energy"

    def __post_init__(self):
        if len(self.layout.dims) != 3 or self.layout.dims[0] != 2 or self.layout.dims[2] != 2:
            raise ValueError("layout must be (2, N_ph, 2)")
        if self.layout.dims[1] < 2:
            raise ValueError("phonon truncation must be at least 2")
        if self.spin_decay_model not in ("energy", "dephasing"):
            raise ValueError(f"unknown spin decay model '{self.spin_decay_model}'")


@dataclass(frozen=True)
class Trajectory:
    """Sampled populations and fidelities of one evolution."""

    times: np.ndarray
    p_sc: np.ndarray
    p_p: np.ndarray
    p_e: np.ndarray
    fidelities: dict[str, np.ndarray]
    trace_errs: np.ndarray
    min_eigenvalues: np.ndarray

    def __post_init__(self):
        for name in ("times", "p_sc", "p_p", "p_e", "trace_errs", "min_eigenvalues"):
            a = np.asarray(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        for a in self.fidelities.values():
            a.setflags(write=False)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    @property
    def f_sc(self) -> np.ndarray:
        return self.fidelities["100"]

    @property
    def f_p(self) -> np.ndarray:
        return self.fidelities["010"]

    @property
    def f_e(self) -> np.ndarray:
        return self.fidelities["001"]

    @property
    def trace_error(self) -> float:
        """max_t |tr rho(t) - 1| over the sampled times."""
        return float(self.trace_errs.max())

    @property
    def min_eigenvalue(self) -> float:
        """Most negative state eigenvalue observed at the sampled times."""
        return float(self.min_eigenvalues.min())

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            self.write_csv(fh)

    def write_csv(self, fh) -> None:
        fh.write(TRAJECTORY_CSV_HEADER + "\n")
        for k in range(self.times.size):
            row = (
                self.times[k], self.p_sc[k], self.p_p[k], self.p_e[k],
                self.f_sc[k], self.f_p[k], self.f_e[k], self.trace_errs[k],
            )
            fh.write(",".join(f"{x:.16e}" for x in row) + "\n")


def tripartite_operators(layout: SpaceLayout) -> dict[str, np.ndarray]:
    """Embedded mode operators on the composite space."""
    n_ph = layout.dims[1]
    sm = annihilator(2)
    a = annihilator(n_ph)
    ops = {
        "sm_sc": embed(sm, 0, layout).matrix,
        "a": embed(a, 1, layout).matrix,
        "sm_e": embed(sm, 2, layout).matrix,
        "sz_sc": embed(sigma_z(2), 0, layout).matrix,
        "sz_e": embed(sigma_z(2), 2, layout).matrix,
    }
    ops["n_p"] = ops["a"].conj().T @ ops["a"]
    ops["n_sc"] = ops["sm_sc"].conj().T @ ops["sm_sc"]
    ops["n_e"] = ops["sm_e"].conj().T @ ops["sm_e"]
    return ops


def build_rotating_hamiltonian(
    rates: SystemRates, deltas: tuple[float, float, float], layout: SpaceLayout
) -> Operator:
    """Rotating-frame Hamiltonian for detunings (delta_sc, delta_e, delta_p), angular units."""
    d_sc, d_e, d_p = deltas
    ops = tripartite_operators(layout)
    h = TWO_PI * (
        0.5 * d_sc * ops["sz_sc"]
        + 0.5 * d_e * ops["sz_e"]
        + d_p * ops["n_p"]
        + rates.g_scp * (ops["sm_sc"].conj().T @ ops["a"] + ops["a"].conj().T @ ops["sm_sc"])
        + rates.g_pe * (ops["sm_e"].conj().T @ ops["a"] + ops["a"].conj().T @ ops["sm_e"])
    )
    return Operator(h, layout)


def jump_operators(model: LindbladModel) -> list[tuple[float, np.ndarray]]:
    """(angular rate, operator) pairs for the model's dissipators."""
    ops = tripartite_operators(model.layout)
    jumps = []
    if model.rates.kappa_sc > 0:
        jumps.append((TWO_PI * model.rates.kappa_sc, ops["sm_sc"]))
    if model.rates.kappa_p > 0:
        jumps.append((TWO_PI * model.rates.kappa_p, ops["a"]))
    if model.rates.kappa_e > 0:
        if model.spin_decay_model == "energy":
            jumps.append((TWO_PI * model.rates.kappa_e, ops["sm_e"]))
        else:
            jumps.append((math.pi * model.rates.kappa_e, ops["sz_e"]))
    return jumps


def liouvillian(h_matrix: np.ndarray, jumps: Iterable[tuple[float, np.ndarray]]) -> np.ndarray:
    """Superoperator generator in column-stacking convention: d vec(rho)/dt = L vec(rho)."""
    d = h_matrix.shape[0]
    eye = np.eye(d, dtype=complex)
    l_super = -1j * (np.kron(eye, h_matrix) - np.kron(h_matrix.T, eye))
    for rate, c in jumps:
        cdc = c.conj().T @ c
        l_super += rate * (
            np.kron(c.conj(), c)
            - 0.5 * np.kron(eye, cdc)
            - 0.5 * np.kron(cdc.T, eye)
        )
    return l_super


def segment_liouvillian(model: LindbladModel, segment: Segment) -> np.ndarray:
    h = build_rotating_hamiltonian(
        model.rates, (segment.delta_sc, segment.delta_e, segment.delta_p), model.layout
    )
    return liouvillian(h.matrix, jump_operators(model))


def _vec(rho: np.ndarray) -> np.ndarray:
    return rho.reshape(-1, order="F")


def _unvec(v: np.ndarray, d: int) -> np.ndarray:
    return v.reshape(d, d, order="F")


def _symmetrized(rho: np.ndarray) -> np.ndarray:
    return 0.5 * (rho + rho.conj().T)


def _checked_expm(l_super: np.ndarray, dt: float) -> np.ndarray:
    p = expm(l_super * dt)
    if not np.all(np.isfinite(p)):
        raise IntegrationError(
            f"superoperator exponential overflowed for step {dt:.3e} s"
        )
    return p


class _SegmentPropagator:
    """Exact propagation within one constant segment, with step caching.

    Cache keys are rounded to 12 significant digits: consecutive sample
    times differ by the same nominal step up to 1-ulp noise, and a 1e-12
    relative step perturbation is far below every monitored tolerance.
    """

    def __init__(self, l_super: np.ndarray):
        self.l_super = l_super
        self._cache: dict[str, np.ndarray] = {}

    def advance(self, v: np.ndarray, dt: float) -> np.ndarray:
        if dt == 0.0:
            return v
        key = f"{dt:.12e}"
        p = self._cache.get(key)
        if p is None:
            p = _checked_expm(self.l_super, float(key))
            self._cache[key] = p
        return p @ v


def _adaptive_segment(
    l_super: np.ndarray, v0: np.ndarray, eval_ts: np.ndarray, rel_tol: float
) -> np.ndarray:
    """Integrate dv/dt = L v over [0, eval_ts[-1]], returning v at every eval time.

    The solver is driven two decades below rel_tol so that accumulated global
    error, including the positivity drift of the integrated state, stays
    safely inside the rel_tol agreement documented against the exact route.
    """
    sol = solve_ivp(
        lambda _t, y: l_super @ y,
        (0.0, float(eval_ts[-1])),
        v0,
        method="DOP853",
        t_eval=eval_ts,
        rtol=max(rel_tol * 1e-2, 1e-13),
        atol=rel_tol * 1e-8,
    )
    if not sol.success:
        raise IntegrationError(f"adaptive stepper failed: {sol.message}")
    return sol.y


def sample_times(duration: float, dt: float) -> np.ndarray:
    """Uniform grid 0, dt, 2dt, ... always ending exactly at ``duration``."""
    n_full = int(math.floor(duration / dt + 1e-9))
    ts = dt * np.arange(n_full + 1)
    if ts[-1] > duration or duration - ts[-1] < 1e-9 * dt:
        ts[-1] = duration
    else:
        ts = np.append(ts, duration)
    return ts


def evolve(
    model: LindbladModel,
    rho0: DensityMatrix,
    options: SimOptions,
    targets: Sequence[Sequence[int]] | None = None,
) -> Trajectory:
    """Integrate the master equation over the model's schedule.

    Samples every ``options.sample_dt`` (default: duration/2000). The state
    is re-symmetrized at every sample; trace error and the most negative
    eigenvalue are monitored, never corrected.
    """
    layout = model.layout
    if rho0.layout != layout:
        raise ValueError("initial state layout does not match the model layout")
    duration = model.schedule.duration
    dt = options.sample_dt if options.sample_dt is not None else duration / 2000.0
    ts = sample_times(duration, dt)

    if targets is None:
        targets = SINGLE_EXCITATION_TARGETS
    target_list = [tuple(int(x) for x in t) for t in targets]
    for t in SINGLE_EXCITATION_TARGETS:
        if t not in target_list:
            target_list.append(t)
    target_idx = {"".join(map(str, t)): layout.index(t) for t in target_list}

    ops = tripartite_operators(layout)
    n_diags = {k: np.real(np.diag(ops[k])) for k in ("n_sc", "n_p", "n_e")}

    d = layout.dim
    n_samples = ts.size
    p_sc = np.empty(n_samples)
    p_p = np.empty(n_samples)
    p_e = np.empty(n_samples)
    fids = {k: np.empty(n_samples) for k in target_idx}
    tr_errs = np.empty(n_samples)
    min_eigs = np.empty(n_samples)

    def record(k: int, rho: np.ndarray):
        diag = np.real(np.diag(rho))
        p_sc[k] = float(n_diags["n_sc"] @ diag)
        p_p[k] = float(n_diags["n_p"] @ diag)
        p_e[k] = float(n_diags["n_e"] @ diag)
        for key, idx in target_idx.items():
            fids[key][k] = diag[idx]
        tr_errs[k] = abs(diag.sum() - 1.0)
        min_eigs[k] = float(np.linalg.eigvalsh(rho)[0])

    rho = _symmetrized(np.asarray(rho0.matrix))
    record(0, rho)
    v = _vec(rho)

    adaptive = options.method == "adaptive-stepper"
    k_next = 1
    for segment in model.schedule.segments:
        in_seg = []
        while k_next < n_samples and ts[k_next] <= segment.t_end + 1e-9 * max(dt, 1e-30):
            in_seg.append(k_next)
            k_next += 1
        eval_rel = [ts[k] - segment.t_start for k in in_seg]
        if not eval_rel or eval_rel[-1] < segment.duration:
            eval_rel.append(segment.duration)      # always land on the boundary
        eval_rel = np.asarray(eval_rel)

        l_super = segment_liouvillian(model, segment)
        if adaptive:
            states = _adaptive_segment(l_super, v, eval_rel, options.rel_tol)
            if not np.all(np.isfinite(states)):
                raise IntegrationError("adaptive stepper produced non-finite state")
            for col, k in enumerate(in_seg):
                rho_k = _symmetrized(_unvec(states[:, col], d))
                record(k, rho_k)
            v = _vec(_symmetrized(_unvec(states[:, -1], d)))
        else:
            prop = _SegmentPropagator(l_super)
            t_prev = 0.0
            for col, t_rel in enumerate(eval_rel):
                v = prop.advance(v, t_rel - t_prev)
                t_prev = t_rel
                rho_k = _symmetrized(_unvec(v, d))
                v = _vec(rho_k)
                if col < len(in_seg):
                    record(in_seg[col], rho_k)

    return Trajectory(ts, p_sc, p_p, p_e, fids, tr_errs, min_eigs)


def propagate_segment(
    model: LindbladModel, rho: DensityMatrix, segment: Segment, options: SimOptions
) -> DensityMatrix:
    """Apply one constant segment as a single completely positive map."""
    if rho.layout != model.layout:
        raise ValueError("state layout does not match the model layout")
    l_super = segment_liouvillian(model, segment)
    if options.method == "adaptive-stepper" and segment.duration > 0.0:
        states = _adaptive_segment(
            l_super, _vec(np.asarray(rho.matrix)), np.array([segment.duration]), options.rel_tol
        )
        out = states[:, -1]
    else:
        p = _checked_expm(l_super, segment.duration)
        out = p @ _vec(np.asarray(rho.matrix))
    if not np.all(np.isfinite(out)):
        raise IntegrationError("segment propagation produced non-finite state")
    return DensityMatrix(_symmetrized(_unvec(out, model.layout.dim)), model.layout)
