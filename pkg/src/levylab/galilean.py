"""Galilean-covariant open dynamics: closed-form symbol calculus and its
Langevin dilation.

The generator combines the free kinetic term with a translation-boost
covariant dissipative part parametrized by a 2-D increment law over
``(xi, eta)``: ``xi`` drives position shifts, ``eta`` momentum kicks, via
the stochastic Heisenberg equations ``dQ = P dt + dxi`` and ``dP = deta``
(unit mass).  Each noise increment acts as the unitary kick
``exp(i (deta Q - dxi P))``, i.e. a Weyl displacement with label
``(x, v) = (dxi, deta)``.

Displacement operators are eigenvectors of the dissipative part: conjugating
``W(x0, v0)`` by a kick with increments ``(dxi, deta)`` multiplies it by
``exp(i (v0 dxi - x0 deta))``, so averaging over the increment law gives

    dissipative rate on W(x0, v0)  =  eta2(mu = v0, lam = x0),

with ``eta2`` the 2-D characteristic exponent.  This pairing is pinned by
the dilation itself (drift-only generators must match the Monte Carlo
exactly) and is the single place all sign conventions are resolved; see
``docs/conventions.md``.

Under the free flow the label is transported, ``x(s) = x0 - v0 s``, and the
closed-form evolution multiplies ``W`` by ``exp(integral of the rate along
the transported label)``.  The Monte Carlo side realizes the time-ordered
dilation by Strang-split steps: half free flow, exact Weyl kick from the
step's increments, half free flow; all discretization error comes from the
non-commutativity of the free flow with the kicks and is second order in
the step size.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rng
from .errors import NumericalFailure, SupportOverflowError
from .grid import (
    BOUNDARY_WINDOW,
    GridSpec,
    Observable,
    WaveFunction,
    WeylLabel,
    apply_free_evolution,
    apply_weyl,
    expectation,
)
from .levy import LevyTriplet2D, _chol_psd, noise_covariance_2d
from .montecarlo import MCConfig, MCResult, mc_stats, run_chunks
from .semigroup import OVERFLOW_FRACTION, OVERFLOW_TOL, STATE_BATCH, _observable_values

_SIMPSON_TOL = 1e-10


@dataclass(frozen=True)
class GalileanGenerator:
    """Covariant generator: 2-D increment law plus the free kinetic term flag."""

    triplet2: LevyTriplet2D
    include_free_hamiltonian: bool = True

    @property
    def is_noise_free(self) -> bool:
        t = self.triplet2
        return (
            t.beta_p == 0.0
            and t.beta_q == 0.0
            and not np.any(t.alpha_matrix)
            and not t.jumps.atoms
            and t.jumps.density is None
        )


@dataclass
class WeylSymbolState:
    """Closed-form image of a displacement operator: scalar times a transported label."""

    multiplier: complex
    point: tuple[float, float]

    def __post_init__(self):
        if abs(self.multiplier) > 1.0 + 1e-12:
            raise ValueError(f"|multiplier| = {abs(self.multiplier)} exceeds 1")


def weyl_symbol_rate(gen: GalileanGenerator, x0: float, v0: float) -> complex:
    """Dissipative eigenvalue on the displacement ``W(x0, v0)``.

    Assembled from the conjugation algebra: drift enters through the
    commutation phases ``i (v0 beta_p - x0 beta_q)``, diffusion through the
    quadratic form in ``(v0, x0)``, and each jump atom through the Weyl
    conjugation multiplier ``exp(i (v0 x_a - x0 v_a))`` with its small-jump
    compensator.  Always has nonpositive real part.
    """
    t = gen.triplet2
    a = t.alpha_matrix
    rate = 1j * (v0 * t.beta_p - x0 * t.beta_q)
    rate -= 0.5 * (a[0, 0] * v0 * v0 + 2.0 * a[0, 1] * v0 * x0 + a[1, 1] * x0 * x0)
    locs, rates = t.jumps.atom_arrays()
    if locs.size:
        phase = v0 * locs[:, 0] - x0 * locs[:, 1]
        comp = (np.hypot(locs[:, 0], locs[:, 1]) <= t.h).astype(float)
        rate += complex(np.sum(rates * (np.exp(1j * phase) - 1.0 - 1j * phase * comp)))
    return complex(rate)


def _adaptive_simpson(fn, a: float, b: float, tol: float = _SIMPSON_TOL, depth: int = 24) -> complex:
    """Adaptive Simpson quadrature for a smooth complex integrand."""
    fa, fm, fb = fn(a), fn(0.5 * (a + b)), fn(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, b, fa, fm, fb, whole, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = fn(lm), fn(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        if depth <= 0:
            raise NumericalFailure("adaptive Simpson recursion exhausted", {"interval": (a, b)})
        if abs(left + right - whole) <= 15.0 * tol * max(1.0, abs(whole)):
            return left + right + (left + right - whole) / 15.0
        return (
            recurse(a, m, fa, flm, fm, left, depth - 1)
            + recurse(m, b, fm, frm, fb, right, depth - 1)
        )

    if a == b:
        return 0.0 + 0.0j
    return recurse(a, b, fa, fm, fb, whole, depth)


def evolve_weyl_closed_form(gen: GalileanGenerator, x0: float, v0: float, t: float) -> WeylSymbolState:
    """Closed-form image of ``W(x0, v0)`` after time ``t``.

    The label rides the free flow to ``(x0 - v0 t, v0)`` (identity when the
    free term is off); the multiplier integrates the dissipative rate along
    the transported label by adaptive Simpson quadrature.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if gen.include_free_hamiltonian:
        point = (x0 - v0 * t, v0)
        integral = _adaptive_simpson(lambda s: weyl_symbol_rate(gen, x0 - v0 * s, v0), 0.0, t)
    else:
        point = (x0, v0)
        integral = t * weyl_symbol_rate(gen, x0, v0)
    multiplier = np.exp(integral)
    if abs(multiplier) > 1.0:  # quadrature round-off can overshoot contractivity
        multiplier = multiplier / abs(multiplier)
    return WeylSymbolState(multiplier=complex(multiplier), point=point)


# --------------------------------------------------------------------------
# Langevin dilation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LangevinStep:
    """One Strang-split step: half free flow, Weyl kick, half free flow.

    The kick label is ``(x, v) = (dxi, deta)`` with the package's central
    phase convention; with the free term disabled the step is the bare kick.
    """

    dt: float
    kick: WeylLabel
    include_free: bool

    def apply(self, psi: WaveFunction) -> WaveFunction:
        half = 0.5 * self.dt if self.include_free else 0.0
        out = apply_free_evolution(psi, half, check_bandlimit=False) if half else psi
        out = apply_weyl(out, self.kick, check_support=False)
        return apply_free_evolution(out, half, check_bandlimit=False) if half else out


def sample_langevin_step(gen: GalileanGenerator, dt: float, increments: tuple[float, float]) -> LangevinStep:
    """Unitary recipe for one time step given sampled increments ``(dxi, deta)``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    dxi, deta = increments
    return LangevinStep(dt=dt, kick=WeylLabel(x=float(dxi), v=float(deta)), include_free=gen.include_free_hamiltonian)


def _apply_weyl_block(states: np.ndarray, grid: GridSpec, label: WeylLabel) -> np.ndarray:
    """Batched Weyl displacement of a block of states (paths along axis 0)."""
    hat = np.fft.fft(states, axis=1, norm="ortho")
    hat *= np.exp(-1j * label.x * grid.p)[None, :]
    out = np.fft.ifft(hat, axis=1, norm="ortho")
    out *= (label.central_phase * np.exp(1j * label.v * grid.x))[None, :]
    return out


def _evolve_block(
    gen: GalileanGenerator,
    psi: WaveFunction,
    increments: np.ndarray,
    dt: float,
) -> np.ndarray:
    """Evolve a block of paths through Strang-split steps.

    ``increments`` has shape (paths, steps, 2).  Adjacent free half-steps
    are merged and each kick's shift part rides the same momentum pass as
    the free flow, so every step costs one FFT round trip.
    """
    import scipy.fft as sfft

    grid = psi.grid
    n_paths, n_steps, _ = increments.shape
    p = grid.p
    x = grid.x
    include = gen.include_free_hamiltonian
    free_half = np.exp(-0.25j * dt * p**2) if include else None
    free_full = free_half * free_half if include else None
    states_p = sfft.fft(np.tile(psi.amplitudes, (n_paths, 1)), axis=1, norm="ortho")
    states_x = None
    for step in range(n_steps):
        dxi = increments[:, step, 0]
        deta = increments[:, step, 1]
        phase_p = np.exp(-1j * np.outer(dxi, p))
        if include:
            phase_p *= (free_half if step == 0 else free_full)[None, :]
        states_p *= phase_p
        states_x = sfft.ifft(states_p, axis=1, norm="ortho")
        central = np.exp(-0.5j * dxi * deta)  # BCH phase of exp(i(deta Q - dxi P))
        states_x *= central[:, None] * np.exp(1j * np.outer(deta, x))
        if step < n_steps - 1:
            states_p = sfft.fft(states_x, axis=1, norm="ortho")
    if include:
        states_p = sfft.fft(states_x, axis=1, norm="ortho")
        states_p *= free_half[None, :]
        states_x = sfft.ifft(states_p, axis=1, norm="ortho")
    return states_x


def _sample_step_increments(
    triplet: LevyTriplet2D, dt: float, n_paths: int, n_steps: int, gen: np.random.Generator
) -> np.ndarray:
    """Exact per-step increments, shape (n_paths, n_steps, 2)."""
    out = np.empty((n_paths, n_steps, 2))
    drift = np.array([triplet.beta_p, triplet.beta_q]) * dt
    chol = _chol_psd(noise_covariance_2d(triplet)) * np.sqrt(dt)
    locs, rates = triplet.jumps.atom_arrays()
    inside = np.hypot(locs[:, 0], locs[:, 1]) <= triplet.h if locs.size else np.zeros(0, bool)
    for step in range(n_steps):
        inc = drift + gen.standard_normal((n_paths, 2)) @ chol.T
        for j in range(len(rates)):
            counts = gen.poisson(rates[j] * dt, size=n_paths)
            inc = inc + counts[:, None] * locs[j]
            if inside[j]:
                inc = inc - rates[j] * locs[j] * dt
        out[:, step] = inc
    return out


def mc_weyl_expectation(
    gen: GalileanGenerator,
    psi: WaveFunction,
    label: WeylLabel,
    t: float,
    n_steps: int,
    mc: MCConfig,
    aggregate: int = 1,
) -> MCResult:
    """Monte Carlo Heisenberg expectation of a displacement via the dilation.

    Increments are sampled on a grid of ``aggregate * n_steps`` fine steps
    and summed in groups of ``aggregate`` before evolving, so runs at
    different step counts can share the same underlying noise (set
    ``aggregate=2`` to coarse-grain the ``2 n_steps`` ensemble).
    """
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    psi = psi.normalized() if abs(psi.norm() - 1.0) > 1e-12 else psi
    fine = n_steps * aggregate
    dt_fine = t / fine
    values = np.empty(mc.n_paths, dtype=complex)
    grid = psi.grid
    overflow = 0

    def worker(idx, start, stop):
        stream = rng.stream(mc.seed, idx)
        inc = _sample_step_increments(gen.triplet2, dt_fine, stop - start, fine, stream)
        if aggregate > 1:
            inc = inc.reshape(stop - start, n_steps, aggregate, 2).sum(axis=2)
        block_vals = np.empty(stop - start, dtype=complex)
        block_overflow = 0
        for bstart in range(0, stop - start, STATE_BATCH):
            bsl = slice(bstart, min(bstart + STATE_BATCH, stop - start))
            states = _evolve_block(gen, psi, inc[bsl], t / n_steps)
            dens = np.abs(states) ** 2
            edge = grid.dx * (dens[:, :BOUNDARY_WINDOW].sum(1) + dens[:, -BOUNDARY_WINDOW:].sum(1))
            block_overflow += int(np.count_nonzero(edge > OVERFLOW_TOL))
            block_vals[bsl] = _observable_values(states, grid, label)
        return start, stop, block_vals, block_overflow

    for start, stop, vals, ov in run_chunks(worker, mc.n_paths, threads=mc.threads, chunk=4 * STATE_BATCH):
        values[start:stop] = vals
        overflow += ov
    if overflow > OVERFLOW_FRACTION * mc.n_paths:
        raise SupportOverflowError(
            f"{overflow}/{mc.n_paths} dilation paths exceeded boundary mass {OVERFLOW_TOL:.0e}",
            fraction=overflow / mc.n_paths,
        )
    est, se = mc_stats(values)
    return MCResult(est, se, mc.n_paths, mc.seed)


def scheme_expected_weyl(
    gen: GalileanGenerator,
    psi: WaveFunction,
    x0: float,
    v0: float,
    t: float,
    n_steps: int,
) -> complex:
    """Exact expectation of the n-step split scheme (no sampling).

    Increment independence factorizes the path average into a product of
    one-step multipliers, so the scheme's law is the closed form with the
    rate integral replaced by its midpoint-rule sum.  The Monte Carlo
    estimator fluctuates around this value; its distance to the closed form
    is the deterministic part of the splitting error and shrinks as
    ``1/n_steps^2``.
    """
    psi = psi.normalized() if abs(psi.norm() - 1.0) > 1e-12 else psi
    dt = t / n_steps
    mids = (np.arange(n_steps) + 0.5) * dt
    if gen.include_free_hamiltonian:
        rates = np.array([weyl_symbol_rate(gen, x0 - v0 * s, v0) for s in mids])
        point = (x0 - v0 * t, v0)
    else:
        rates = np.full(n_steps, weyl_symbol_rate(gen, x0, v0))
        point = (x0, v0)
    multiplier = np.exp(dt * rates.sum())
    return complex(multiplier * expectation(psi, WeylLabel(point[0], point[1])))


@dataclass
class DilationCompareReport:
    """Closed-form symbol versus Langevin Monte Carlo, with discretization bands.

    The two Monte Carlo runs (``n_steps`` and ``2 n_steps``) share the same
    fine-grained noise, so their difference isolates the Strang splitting
    error; ``band`` is ``4 stderr + discretization allowance`` derived from
    that difference assuming second-order scaling.  ``inconclusive`` is set
    when the statistical band swamps the effect size.
    """

    closed_value: complex
    closed_multiplier: complex
    closed_point: tuple[float, float]
    mc_coarse: MCResult
    mc_fine: MCResult
    n_steps: int
    split_defect: float
    band_coarse: float
    band_fine: float
    deviation_coarse: float
    deviation_fine: float
    order_estimate: float
    passed: bool
    inconclusive: bool


def mc_vs_closed_form(
    gen: GalileanGenerator,
    x0: float,
    v0: float,
    psi: WaveFunction,
    t: float,
    n_steps: int,
    mc: MCConfig,
) -> DilationCompareReport:
    """Compare the dilation Monte Carlo against the closed-form symbol.

    The closed-form side is ``multiplier * <psi| W(transported) |psi>``.
    The Monte Carlo side runs at ``n_steps`` and ``2 n_steps`` with shared
    fine noise; second-order splitting puts the continuum limit at about
    ``(4 E_fine - E_coarse) / 3``, so the coarse/fine allowances are
    ``(4/3) |E_coarse - E_fine|`` and ``(1/3) |E_coarse - E_fine|``.

    ``order_estimate`` is the observed order of the scheme's deterministic
    bias (log2 ratio of the exact scheme laws' distances to the closed
    form); NaN when the noise commutes with the free flow and the bias
    vanishes.
    """
    psi = psi.normalized() if abs(psi.norm() - 1.0) > 1e-12 else psi
    label = WeylLabel(x0, v0)
    sym = evolve_weyl_closed_form(gen, x0, v0, t)
    closed = sym.multiplier * expectation(psi, WeylLabel(sym.point[0], sym.point[1]))
    fine = mc_weyl_expectation(gen, psi, label, t, 2 * n_steps, mc, aggregate=1)
    coarse = mc_weyl_expectation(gen, psi, label, t, n_steps, mc, aggregate=2)
    bias_coarse = abs(scheme_expected_weyl(gen, psi, x0, v0, t, n_steps) - closed)
    bias_fine = abs(scheme_expected_weyl(gen, psi, x0, v0, t, 2 * n_steps) - closed)
    order = float(np.log2(bias_coarse / bias_fine)) if bias_fine > 1e-13 else float("nan")
    split = abs(coarse.estimate - fine.estimate)
    band_coarse = 4.0 * coarse.stderr + (4.0 / 3.0) * split + 1e-8
    band_fine = 4.0 * fine.stderr + (1.0 / 3.0) * split + 4.0 * coarse.stderr + 1e-8
    dev_coarse = abs(coarse.estimate - closed)
    dev_fine = abs(fine.estimate - closed)
    inconclusive = bool(4.0 * fine.stderr > max(abs(closed), 0.05))
    passed = bool(dev_coarse <= band_coarse and dev_fine <= band_fine) and not inconclusive
    return DilationCompareReport(
        closed_value=complex(closed),
        closed_multiplier=sym.multiplier,
        closed_point=sym.point,
        mc_coarse=coarse,
        mc_fine=fine,
        n_steps=n_steps,
        split_defect=float(split),
        band_coarse=float(band_coarse),
        band_fine=float(band_fine),
        deviation_coarse=float(dev_coarse),
        deviation_fine=float(dev_fine),
        order_estimate=order,
        passed=passed,
        inconclusive=inconclusive,
    )


def galilean_covariance_check(
    gen: GalileanGenerator,
    x: float,
    v: float,
    t: float,
    psi: WaveFunction,
    mc: MCConfig,
    n_steps: int = 32,
    observables: Sequence[Observable] | None = None,
) -> float:
    """Shared-seed defect of the space-boost covariance identity.

    Conjugating the observable by ``W(x, v)`` before evolving must equal
    boosting the state by ``W(x - v t, v)``; with identical noise on both
    sides the defect is round-off (commuting the displacement through free
    flow transports its label, through kicks it only collects a central
    phase that cancels in the sandwich).
    """
    psi = psi.normalized() if abs(psi.norm() - 1.0) > 1e-12 else psi
    battery = list(observables) if observables is not None else [
        WeylLabel(0.4, 0.0), WeylLabel(0.0, 0.6), WeylLabel(-0.5, 0.8),
    ]
    boosted = apply_weyl(psi, WeylLabel(x - v * t, v))
    conj = WeylLabel(x, v)
    dt_fine = t / n_steps
    sum_a = np.zeros(len(battery), dtype=complex)
    sum_b = np.zeros(len(battery), dtype=complex)

    for idx, start, stop in rng.chunk_bounds(mc.n_paths, 4 * STATE_BATCH):
        stream = rng.stream(mc.seed, idx)
        inc = _sample_step_increments(gen.triplet2, dt_fine, stop - start, n_steps, stream)
        # side A measures W(x,v)^dag X W(x,v) on evolved psi; side B measures
        # X on the evolution of the boosted state, same increments.
        conj_states = _apply_weyl_block(_evolve_block(gen, psi, inc, dt_fine), psi.grid, conj)
        states_b = _evolve_block(gen, boosted, inc, dt_fine)
        for k, ob in enumerate(battery):
            sum_a[k] += _observable_values(conj_states, psi.grid, ob).sum()
            sum_b[k] += _observable_values(states_b, psi.grid, ob).sum()
    return float(np.abs((sum_a - sum_b) / mc.n_paths).max())


def one_dimensional_reduction(gen: GalileanGenerator) -> "LevyTriplet1D | None":
    """The 1-D increment law this generator reduces to, when it does.

    Requires no free term, no second-component drift/diffusion and jumps on
    the first axis only; returns None otherwise.
    """
    from .levy import JumpMeasure, LevyTriplet1D

    t = gen.triplet2
    a = t.alpha_matrix
    if gen.include_free_hamiltonian or t.beta_q != 0.0 or a[0, 1] != 0.0 or a[1, 1] != 0.0:
        return None
    atoms = []
    for (xa, va), r in t.jumps.atoms:
        if va != 0.0:
            return None
        atoms.append((xa, r))
    return LevyTriplet1D(beta=t.beta_p, alpha=a[0, 0], jumps=JumpMeasure(atoms=tuple(atoms)), h=t.h)
