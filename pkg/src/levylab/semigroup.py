"""Monte Carlo realization of the noise-averaged dynamical semigroup.

The dynamics conjugates observables by the random shift ``exp(-i xi_t P)``
and averages over the increment law: the Heisenberg expectation at time
``t`` needs only the law of ``xi_t``, so every path is a single exact
increment draw followed by one exact spectral shift -- no time stepping,
hence no discretization error in this module.

On observables ``f(Q)`` the evolution reduces to classical smoothing of
``f`` by the increment law, which is the oracle all quantum estimates here
are checked against.  Observables ``g(P)`` commute with the coupling and
are returned exactly, with no Monte Carlo error attached.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import SupportOverflowError
from .grid import (
    BOUNDARY_WINDOW,
    GridSpec,
    Observable,
    PTable,
    QTable,
    WaveFunction,
    WeylLabel,
    expectation,
)
from .levy import LevyTriplet1D, convolve_classical, sample_ensemble
from .montecarlo import MCConfig, MCResult, mc_stats

#: Paths evolved per state batch (memory control; no effect on results).
STATE_BATCH = 1024
#: Boundary mass above which a shifted path counts as overflowed.
OVERFLOW_TOL = 1e-10
#: Run aborts when more than this fraction of paths overflow.
OVERFLOW_FRACTION = 0.01


@dataclass(frozen=True)
class NoiseSemigroupSpec:
    """Increment law plus the lattice carrying the quantum system.

    The coupling is fixed: increments act through position shifts
    ``exp(-i xi P)``.
    """

    triplet: LevyTriplet1D
    grid: GridSpec


@dataclass
class MCEnsemble:
    """Per-path results of an ensemble evolution with running accumulators."""

    n_paths: int
    seed: int
    values: np.ndarray | None = None
    states: np.ndarray | None = None
    coarse_rho: np.ndarray | None = None
    mean: complex = 0.0
    variance: float = 0.0

    def validate(self) -> None:
        if self.values is not None and self.values.shape[0] != self.n_paths:
            raise ValueError("accumulator count does not match n_paths")
        if self.states is not None and self.states.shape[0] != self.n_paths:
            raise ValueError("state count does not match n_paths")
        if self.variance < 0:
            raise ValueError("variance must be nonnegative")


def _support_interval(psi: WaveFunction, tol: float = OVERFLOW_TOL) -> tuple[float, float]:
    """Smallest lattice interval outside which the state carries mass < tol."""
    dens = np.abs(psi.amplitudes) ** 2 * psi.grid.dx
    cum = np.cumsum(dens)
    lo = int(np.searchsorted(cum, tol / 2))
    hi = int(np.searchsorted(cum, cum[-1] - tol / 2))
    x = psi.grid.x
    return float(x[max(lo, 0)]), float(x[min(hi, x.size - 1)])


def _shifted_batches(psi: WaveFunction, xi: np.ndarray, batch: int = STATE_BATCH):
    """Yield (slice, shifted amplitude block) for exact spectral shifts by xi.

    Aborts with :class:`SupportOverflowError` when more than
    ``OVERFLOW_FRACTION`` of the paths would carry support past the boundary
    window (interval arithmetic on the support, so full wrap-arounds are
    caught, not just mass straddling the edge).
    """
    grid = psi.grid
    lo_x, hi_x = _support_interval(psi)
    margin = BOUNDARY_WINDOW * grid.dx
    allowed_lo = (grid.x[0] + margin) - lo_x
    allowed_hi = (grid.x[-1] - margin) - hi_x
    overflowed = int(np.count_nonzero((xi < allowed_lo) | (xi > allowed_hi)))
    if overflowed > OVERFLOW_FRACTION * xi.size:
        raise SupportOverflowError(
            f"{overflowed}/{xi.size} shifts would push support into the boundary window",
            fraction=overflowed / xi.size,
        )
    hat = np.fft.fft(psi.amplitudes, norm="ortho")
    p = grid.p
    for start in range(0, xi.size, batch):
        block_xi = xi[start:start + batch]
        phases = np.exp(-1j * np.outer(block_xi, p))
        states = np.fft.ifft(hat[None, :] * phases, axis=1, norm="ortho")
        yield slice(start, start + block_xi.size), states


def _qtable_values(states: np.ndarray, dx: float, f_arrays: Sequence[np.ndarray]) -> list[np.ndarray]:
    dens = np.abs(states) ** 2
    return [dx * dens @ f for f in f_arrays]


def _weyl_values(states: np.ndarray, grid: GridSpec, label: WeylLabel) -> np.ndarray:
    hat = np.fft.fft(states, axis=1, norm="ortho")
    hat = hat * np.exp(-1j * label.x * grid.p)[None, :]
    moved = np.fft.ifft(hat, axis=1, norm="ortho")
    moved = moved * (label.central_phase * np.exp(1j * label.v * grid.x))[None, :]
    return grid.dx * np.einsum("ij,ij->i", states.conj(), moved)


def mc_heisenberg_expectation(
    spec: NoiseSemigroupSpec,
    psi: WaveFunction,
    observable: Observable,
    t: float,
    mc: MCConfig,
) -> MCResult:
    """Monte Carlo estimate of the evolved Heisenberg expectation at time ``t``.

    ``g(P)`` observables commute with the coupling and are returned exactly
    (zero stderr, ``exact=True``).  Antithetic pairing is applied when the
    increment law is symmetric (or as forced by the config).
    """
    psi = psi.normalized() if abs(psi.norm() - 1.0) > 1e-12 else psi
    if isinstance(observable, PTable):
        return MCResult(
            estimate=expectation(psi, observable),
            stderr=0.0,
            n_paths=0,
            seed=mc.seed,
            exact=True,
        )
    batch = mc_heisenberg_batch(spec, psi, [observable], t, mc)
    return batch[0]


def mc_heisenberg_batch(
    spec: NoiseSemigroupSpec,
    psi: WaveFunction,
    observables: Sequence[Observable],
    t: float,
    mc: MCConfig,
) -> list[MCResult]:
    """Shared-path estimates for several observables at once.

    All sampled observables see the same increment ensemble; estimates are
    individually valid, correlations only matter across observables.
    """
    psi = psi.normalized() if abs(psi.norm() - 1.0) > 1e-12 else psi
    antithetic = mc.resolve_antithetic(spec.triplet.is_symmetric)
    results: list[MCResult | None] = [None] * len(observables)
    sampled = [i for i, ob in enumerate(observables) if not isinstance(ob, PTable)]
    for i, ob in enumerate(observables):
        if isinstance(ob, PTable):
            results[i] = MCResult(expectation(psi, ob), 0.0, 0, mc.seed, exact=True)
    if sampled:
        xi = sample_ensemble(spec.triplet, t, mc.n_paths, mc.seed, antithetic=antithetic, threads=mc.threads)
        values = np.zeros((len(sampled), mc.n_paths), dtype=complex)
        for sl, states in _shifted_batches(psi, xi):
            for row, i in enumerate(sampled):
                values[row, sl] = _observable_values(states, spec.grid, observables[i])
        for row, i in enumerate(sampled):
            est, se = mc_stats(values[row], antithetic=antithetic)
            results[i] = MCResult(est, se, mc.n_paths, mc.seed, antithetic=antithetic)
    return results  # type: ignore[return-value]


def mc_evolve_state_ensemble(
    spec: NoiseSemigroupSpec,
    psi: WaveFunction,
    t: float,
    mc: MCConfig,
    keep_states: bool = False,
    coarse_bins: int = 16,
) -> MCEnsemble:
    """Evolve an ensemble of states; each path is one exact shift of ``psi``.

    Accumulates per-path norms, a coarse-grained average density matrix on
    ``coarse_bins`` orthonormal box modes (for mixing diagnostics), and the
    states themselves when ``keep_states`` is set (memory permitting).
    """
    psi = psi.normalized() if abs(psi.norm() - 1.0) > 1e-12 else psi
    grid = spec.grid
    if grid.n_points % coarse_bins != 0:
        raise ValueError("coarse_bins must divide the grid size")
    xi = sample_ensemble(spec.triplet, t, mc.n_paths, mc.seed, threads=mc.threads)
    width = grid.n_points // coarse_bins
    rho = np.zeros((coarse_bins, coarse_bins), dtype=complex)
    norms = np.empty(mc.n_paths)
    kept = np.empty((mc.n_paths, grid.n_points), dtype=complex) if keep_states else None
    for sl, states in _shifted_batches(psi, xi):
        norms[sl] = np.sqrt(grid.dx * np.sum(np.abs(states) ** 2, axis=1))
        coarse = states.reshape(states.shape[0], coarse_bins, width).sum(axis=2) * np.sqrt(grid.dx / width)
        rho += np.einsum("bi,bj->ij", coarse, coarse.conj())
        if kept is not None:
            kept[sl] = states
    rho /= mc.n_paths
    mean, se = mc_stats(norms.astype(complex))
    ens = MCEnsemble(
        n_paths=mc.n_paths,
        seed=mc.seed,
        values=norms,
        states=kept,
        coarse_rho=rho,
        mean=mean,
        variance=float(np.var(norms)),
    )
    ens.validate()
    return ens


def coarse_purity(rho: np.ndarray) -> float:
    """Purity ``Tr rho^2 / (Tr rho)^2`` of a coarse-grained density matrix."""
    tr = np.trace(rho).real
    return float(np.trace(rho @ rho).real / tr**2)


# --------------------------------------------------------------------------
# Classical reduction: generator and fixed-point oracle
# --------------------------------------------------------------------------

@dataclass
class TableFunction:
    """Cubic-spline wrapper turning a sampled table into a callable with a domain."""

    x: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        from scipy.interpolate import CubicSpline

        self.x = np.asarray(self.x, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self._spline = CubicSpline(self.x, self.values)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < self.x[0]) or np.any(x > self.x[-1]):
            raise ValueError("argument outside the tabulated domain")
        return self._spline(x)


def classical_generator_apply(
    triplet: LevyTriplet1D,
    f: Callable[[np.ndarray], np.ndarray],
    x: float,
    fd_step: float = 1e-3,
) -> float:
    """Generator of the increment process applied to ``f`` at ``x``:

    ``beta f'(x) + (alpha/2) f''(x)
      + sum_atoms rate [f(x+y) - f(x) - y f'(x) (|y| <= h)]``

    Derivatives use central finite differences with step ``fd_step``
    (second order; exact on quadratics).  Density components contribute
    through quadrature of the same integrand.
    """
    x = float(x)
    fp = (float(f(x + fd_step)) - float(f(x - fd_step))) / (2.0 * fd_step)
    fpp = (float(f(x + fd_step)) - 2.0 * float(f(x)) + float(f(x - fd_step))) / fd_step**2
    out = triplet.beta * fp + 0.5 * triplet.alpha * fpp
    locs, rates = triplet.jumps.atom_arrays()
    fx = float(f(x))
    for y, r in zip(locs, rates):
        comp = fp * y if abs(y) <= triplet.h else 0.0
        out += r * (float(f(x + y)) - fx - comp)
    spec = triplet.jumps.density
    if spec is not None:
        from .levy import _density_integral

        h = triplet.h
        out += float(np.real(_density_integral(
            spec,
            lambda y: f(x + y) - fx - y * fp * (np.abs(y) <= h),
            "classical generator (density part)",
        )))
    return float(out)


@dataclass
class GeneratorCheckReport:
    """Finite-time quotient of the semigroup against the generator, with bands.

    ``quotient`` is ``(E f(x + xi_t) - f(x)) / t`` estimated by Monte Carlo;
    ``band`` is ``4 stderr + 1.5 |O(t) coefficient| t`` with the linear-in-t
    coefficient estimated by Richardson comparison of the quotients at
    ``t`` and ``t/2`` (the 1.5 factor absorbs the quadratic residue the
    two-point estimate cannot see).  ``inconclusive`` is set when the Monte
    Carlo noise dominates the generator signal; an inconclusive run never
    counts as a pass.
    """

    x: np.ndarray
    quotient: np.ndarray
    generator: np.ndarray
    band: np.ndarray
    max_deviation: float
    passed: bool
    inconclusive: bool
    t: float


def generator_consistency_check(
    triplet: LevyTriplet1D,
    f: Callable[[np.ndarray], np.ndarray],
    t_small: float,
    mc: MCConfig,
    x_points: np.ndarray | None = None,
) -> GeneratorCheckReport:
    if t_small <= 0:
        raise ValueError("t_small must be positive")
    x = np.asarray(x_points if x_points is not None else np.linspace(-2.0, 2.0, 9), dtype=float)
    fx = np.asarray(f(x), dtype=float)
    conv_t = convolve_classical(f, triplet, t_small, MCConfig(mc.n_paths, mc.seed, threads=mc.threads), x)
    conv_h = convolve_classical(f, triplet, 0.5 * t_small, MCConfig(mc.n_paths, mc.seed + 1, threads=mc.threads), x)
    q_t = (conv_t.values - fx) / t_small
    q_h = (conv_h.values - fx) / (0.5 * t_small)
    se_t = conv_t.stderr / t_small
    se_h = conv_h.stderr / (0.5 * t_small)
    lf = np.array([classical_generator_apply(triplet, f, xi) for xi in x])
    slope = 2.0 * (q_t - q_h) / t_small  # first-order-in-t coefficient estimate
    band = 4.0 * (se_t + se_h) + 1.5 * np.abs(slope) * t_small + 1e-12
    deviation = np.abs(q_t - lf)
    signal = np.max(np.abs(lf))
    inconclusive = bool(np.median(4.0 * se_t) > 0.5 * max(signal, 1e-12))
    passed = bool(np.all(deviation <= band)) and not inconclusive
    return GeneratorCheckReport(
        x=x,
        quotient=q_t,
        generator=lf,
        band=band,
        max_deviation=float(deviation.max()),
        passed=passed,
        inconclusive=inconclusive,
        t=t_small,
    )


def classical_fixed_point_oracle(
    f: Callable[[np.ndarray], np.ndarray],
    triplet: LevyTriplet1D,
    t: float,
    psi: WaveFunction,
    mc: MCConfig,
) -> MCResult:
    """Classical estimate of the evolved expectation, weighted by ``|psi|^2``.

    Samples the increment law directly (no quantum machinery), aggregating
    ``integral |psi(x)|^2 f(x + xi) dx`` per sample so the stderr is honest
    for the weighted quantity.
    """
    xi = sample_ensemble(triplet, t, mc.n_paths, mc.seed, threads=mc.threads)
    weights = np.abs(psi.normalized().amplitudes) ** 2 * psi.grid.dx
    x = psi.grid.x
    vals = np.empty(mc.n_paths)
    step = max(1, (1 << 21) // x.size)
    for start in range(0, mc.n_paths, step):
        block = np.asarray(f(x[None, :] + xi[start:start + step, None]), dtype=float)
        vals[start:start + block.shape[0]] = block @ weights
    est, se = mc_stats(vals.astype(complex))
    return MCResult(est, se, mc.n_paths, mc.seed)


# --------------------------------------------------------------------------
# Covariance and the semigroup law
# --------------------------------------------------------------------------

def momentum_covariance_check(
    spec: NoiseSemigroupSpec,
    observable: Observable,
    y: float,
    t: float,
    mc: MCConfig,
    psi: WaveFunction | None = None,
) -> float:
    """Shared-seed defect of covariance under momentum translations.

    Compares evolving ``exp(-iyQ) X exp(iyQ)``-conjugated observables
    against boosting the state before evolving, with identical increments
    on both sides; the defect is pure round-off because the phase picked up
    by commuting the boost through each shift cancels in the sandwich.
    """
    from .grid import apply_position_phase

    psi = psi if psi is not None else gaussian_default(spec.grid)
    xi = sample_ensemble(spec.triplet, t, mc.n_paths, mc.seed, threads=mc.threads)
    boosted = apply_position_phase(psi, y)
    vals_a = np.empty(mc.n_paths, dtype=complex)
    vals_b = np.empty(mc.n_paths, dtype=complex)
    for sl, states in _shifted_batches(psi, xi):
        phased = states * np.exp(1j * y * spec.grid.x)[None, :]
        vals_a[sl] = _observable_values(phased, spec.grid, observable)
    for sl, states in _shifted_batches(boosted, xi):
        vals_b[sl] = _observable_values(states, spec.grid, observable)
    return float(np.abs(np.mean(vals_a) - np.mean(vals_b)))


def _observable_values(states: np.ndarray, grid: GridSpec, observable: Observable) -> np.ndarray:
    if isinstance(observable, QTable):
        return _qtable_values(states, grid.dx, [observable.array])[0]
    if isinstance(observable, WeylLabel):
        return _weyl_values(states, grid, observable)
    if isinstance(observable, PTable):
        hat = np.fft.fft(states, axis=1, norm="ortho")
        return grid.dx * (np.abs(hat) ** 2) @ observable.array
    raise TypeError(f"unsupported observable {type(observable)!r}")


def semigroup_two_stage(
    spec: NoiseSemigroupSpec,
    psi: WaveFunction,
    observable: Observable,
    t: float,
    s: float,
    mc: MCConfig,
) -> tuple[MCResult, MCResult]:
    """One-shot estimate at ``t+s`` versus composition of independent stages.

    Composition is realized through the additivity of shifts: independent
    increments for the two stages are summed before the single shift.
    """
    one = mc_heisenberg_expectation(spec, psi, observable, t + s, mc)
    xi1 = sample_ensemble(spec.triplet, t, mc.n_paths, mc.seed + 101, threads=mc.threads)
    xi2 = sample_ensemble(spec.triplet, s, mc.n_paths, mc.seed + 202, threads=mc.threads)
    vals = np.empty(mc.n_paths, dtype=complex)
    for sl, states in _shifted_batches(psi, xi1 + xi2):
        vals[sl] = _observable_values(states, spec.grid, observable)
    est, se = mc_stats(vals)
    two = MCResult(est, se, mc.n_paths, mc.seed)
    return one, two


def gaussian_default(grid: GridSpec) -> WaveFunction:
    from .grid import gaussian_state

    return gaussian_state(grid, 0.0, 1.0, 0.0)
