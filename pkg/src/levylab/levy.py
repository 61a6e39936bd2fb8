"""Processes with stationary independent increments.

Laws are parametrized by a drift rate, a diffusion rate (matrix in 2-D), a
jump measure and a truncation radius ``h``: jumps inside the closed ball
``|y| <= h`` enter the characteristic exponent compensated by their mean,
larger jumps enter uncompensated.  ``h`` is arbitrary but fixed; changing it
must be accompanied by the drift adjustment :func:`with_truncation` performs,
which leaves the exponent invariant.

Jump measures are finite atomic lists by default; an infinite-activity
density is supported through an explicit truncation-at-``eps`` scheme: jumps
below ``eps`` are dropped, their compensating drift is kept exactly, and an
optional Gaussian with the matched variance replaces their fluctuation.

Increment sampling is exact per time step (no Euler sub-stepping): Gaussian
part from the normal law, each atom from its Poisson count, density jumps
from an inverse-CDF table above the ``eps`` cutoff.

Conventions:
  * 1-D exponent: ``E exp(i lam xi_t) = exp(t * char_exponent_1d(lam))``.
  * 2-D exponent over increments ``(xi, eta)``:
    ``E exp(i (mu xi - lam eta)) = exp(t * char_exponent_2d(mu, lam))``;
    the minus sign on the second slot is part of the convention, so the
    plain dot-product argument for :func:`empirical_char_function` is
    ``(mu, -lam)``.
"""

from __future__ import annotations

import functools
import json
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from . import rng
from .errors import NumericalFailure
from .montecarlo import MCConfig, mc_stats, run_chunks

_PSD_TOL = 1e-12


@dataclass(frozen=True)
class DensitySpec:
    """Jump density with a small-jump cutoff.

    ``density`` is the Levy density on ``support`` minus the origin;
    ``eps`` is the sampling cutoff (jumps below it are folded into drift
    and, when ``gaussian_correction`` is set, a matched-variance Gaussian).
    """

    density: Callable[[np.ndarray], np.ndarray]
    eps: float
    support: tuple[float, float]
    gaussian_correction: bool = True
    inv_cdf_nodes: int = 512

    def __post_init__(self):
        lo, hi = self.support
        problems = []
        if not self.eps > 0:
            problems.append("density spec: eps must be positive")
        if not lo < hi:
            problems.append("density spec: support must be a nonempty interval")
        if lo >= 0 and hi <= 0:
            problems.append("density spec: support must touch one side of the origin")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def sides(self) -> list[tuple[float, float]]:
        """Sampling intervals (above the cutoff) on each side of the origin."""
        lo, hi = self.support
        out = []
        if lo < -self.eps:
            out.append((lo, -self.eps))
        if hi > self.eps:
            out.append((self.eps, hi))
        return out


@dataclass(frozen=True)
class JumpMeasure:
    """Finite atomic jump measure plus an optional density component.

    Atoms are ``(location, rate)`` pairs; locations are nonzero floats in
    1-D or nonzero ``(x, v)`` pairs in 2-D, rates are per unit time.
    """

    atoms: tuple = ()
    density: DensitySpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple((self._norm_loc(loc), float(r)) for loc, r in self.atoms))

    @staticmethod
    def _norm_loc(loc):
        if isinstance(loc, (tuple, list, np.ndarray)):
            return tuple(float(c) for c in loc)
        return float(loc)

    @property
    def dim(self) -> int:
        for loc, _ in self.atoms:
            return 2 if isinstance(loc, tuple) else 1
        return 1

    def validate(self, dim: int) -> list[str]:
        problems = []
        for loc, rate in self.atoms:
            loc_dim = 2 if isinstance(loc, tuple) else 1
            if loc_dim != dim:
                problems.append(f"jump atom {loc!r}: expected dimension {dim}")
                continue
            mag = np.hypot(*loc) if dim == 2 else abs(loc)
            if mag == 0.0:
                problems.append("jump atom at the origin is not allowed")
            if not rate > 0:
                problems.append(f"jump atom {loc!r}: rate must be strictly positive, got {rate}")
        if self.density is not None and dim != 1:
            problems.append("density components are supported in 1-D only")
        return problems

    def atom_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Locations (shape (m,) or (m, 2)) and rates (shape (m,))."""
        if not self.atoms:
            d = self.dim
            return np.zeros((0, 2) if d == 2 else 0), np.zeros(0)
        locs = np.array([loc for loc, _ in self.atoms], dtype=float)
        rates = np.array([r for _, r in self.atoms], dtype=float)
        return locs, rates


NO_JUMPS = JumpMeasure()


@dataclass(frozen=True)
class LevyTriplet1D:
    """Drift rate, diffusion rate, jump measure and truncation radius for a 1-D law."""

    beta: float = 0.0
    alpha: float = 0.0
    jumps: JumpMeasure = NO_JUMPS
    h: float = 1.0

    def __post_init__(self):
        problems = []
        if self.alpha < 0:
            problems.append(f"alpha must be nonnegative, got {self.alpha}")
        if not self.h > 0:
            problems.append(f"h must be positive, got {self.h}")
        problems += self.jumps.validate(dim=1)
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def is_symmetric(self) -> bool:
        """True when the law of the increment is symmetric under negation.

        Requires zero drift and an atom list closed under ``y -> -y`` with
        equal rates; densities are never auto-detected as symmetric.
        """
        if self.beta != 0.0 or self.jumps.density is not None:
            return False
        bag = {}
        for y, r in self.jumps.atoms:
            bag[y] = bag.get(y, 0.0) + r
        return all(abs(bag.get(-y, 0.0) - r) <= 1e-15 * max(1.0, r) for y, r in bag.items())


@dataclass(frozen=True)
class LevyTriplet2D:
    """Two-component law for increments ``(xi, eta)``.

    ``beta_p`` is the drift of the first component (the one that shifts
    position in the quantum coupling), ``beta_q`` of the second;
    ``alpha`` is the symmetric 2x2 diffusion matrix as
    ``((a_pp, a_pq), (a_pq, a_qq))``; atom locations are ``(x, v)`` with
    ``x`` feeding the first component and ``v`` the second.
    """

    beta_p: float = 0.0
    beta_q: float = 0.0
    alpha: tuple = ((0.0, 0.0), (0.0, 0.0))
    jumps: JumpMeasure = NO_JUMPS
    h: float = 1.0

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        problems = []
        if a.shape != (2, 2):
            problems.append(f"alpha must be a 2x2 matrix, got shape {a.shape}")
        else:
            if abs(a[0, 1] - a[1, 0]) > _PSD_TOL * max(1.0, np.abs(a).max()):
                problems.append("alpha must be symmetric")
            eigs = np.linalg.eigvalsh(0.5 * (a + a.T))
            if eigs.min() < -_PSD_TOL * max(1.0, np.abs(a).max()):
                problems.append(f"alpha must be positive semidefinite, min eigenvalue {eigs.min():.3e}")
        if not self.h > 0:
            problems.append(f"h must be positive, got {self.h}")
        problems += self.jumps.validate(dim=2)
        if problems:
            raise ValueError("; ".join(problems))
        object.__setattr__(self, "alpha", tuple(tuple(float(v) for v in row) for row in a))

    @property
    def alpha_matrix(self) -> np.ndarray:
        return np.asarray(self.alpha, dtype=float)

    @property
    def is_symmetric(self) -> bool:
        if self.beta_p != 0.0 or self.beta_q != 0.0:
            return False
        bag = {}
        for loc, r in self.jumps.atoms:
            bag[loc] = bag.get(loc, 0.0) + r
        return all(abs(bag.get((-x, -v), 0.0) - r) <= 1e-15 * max(1.0, r) for (x, v), r in bag.items())


@dataclass
class PathSample:
    """A sampled path: time grid, process values, and the log of big jumps.

    ``values`` has shape ``(n_times,)`` in 1-D or ``(n_times, 2)`` in 2-D and
    starts at the origin.  ``jump_log`` records ``(time, magnitude)`` for
    every jump whose norm exceeds the truncation radius.
    """

    times: np.ndarray
    values: np.ndarray
    jump_log: tuple
    seed: int

    def validate(self, h: float) -> None:
        if self.times[0] != 0.0 or np.any(np.diff(self.times) <= 0):
            raise ValueError("times must start at 0 and increase strictly")
        if np.any(np.atleast_1d(self.values[0]) != 0.0):
            raise ValueError("path must start at the origin")
        for _, mag in self.jump_log:
            norm = np.hypot(*mag) if isinstance(mag, tuple) else abs(mag)
            if norm <= h:
                raise ValueError("jump_log may only contain jumps larger than h")


# --------------------------------------------------------------------------
# Characteristic exponents
# --------------------------------------------------------------------------

def _quad_part(fn, lo, hi, points, what):
    """Adaptive quadrature of a real integrand; loud failure on divergence."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        val, err = integrate.quad(fn, lo, hi, points=points, limit=300)
    bad = [str(w.message) for w in caught if issubclass(w.category, integrate.IntegrationWarning)]
    if bad or not np.isfinite(val):
        raise NumericalFailure(
            f"quadrature failed for {what} on [{lo}, {hi}]",
            {"value": val, "abserr": err, "warnings": bad},
        )
    return val


def _density_integral(spec: DensitySpec, integrand, what: str) -> complex:
    """Integrate ``integrand(y) * density(y)`` over the support minus {0}."""
    lo, hi = spec.support
    total = 0.0 + 0.0j
    for a, b in ((lo, 0.0), (0.0, hi)):
        if a >= b:
            continue
        pts = sorted({p for p in (-spec.eps, spec.eps) if a < p < b})
        fn = lambda y: integrand(y) * spec.density(y)
        re = _quad_part(lambda y: np.real(fn(y)), a, b, pts or None, what)
        im = _quad_part(lambda y: np.imag(fn(y)), a, b, pts or None, what)
        total += re + 1j * im
    return total


def char_exponent_1d(triplet: LevyTriplet1D, lam: float) -> complex:
    """Characteristic exponent: ``E exp(i lam xi_t) = exp(t * eta(lam))``."""
    lam = float(lam)
    eta = 1j * triplet.beta * lam - 0.5 * triplet.alpha * lam * lam
    locs, rates = triplet.jumps.atom_arrays()
    if locs.size:
        comp = (np.abs(locs) <= triplet.h).astype(float)
        eta += complex(np.sum(rates * (np.exp(1j * locs * lam) - 1.0 - 1j * locs * lam * comp)))
    if triplet.jumps.density is not None:
        h = triplet.h
        eta += _density_integral(
            triplet.jumps.density,
            lambda y: np.exp(1j * y * lam) - 1.0 - 1j * y * lam * (np.abs(y) <= h),
            "characteristic exponent (density part)",
        )
    return complex(eta)


def char_exponent_2d(triplet: LevyTriplet2D, mu: float, lam: float) -> complex:
    """Two-component exponent: ``E exp(i (mu xi_t - lam eta_t)) = exp(t * eta2(mu, lam))``."""
    mu, lam = float(mu), float(lam)
    a = triplet.alpha_matrix
    eta = 1j * (mu * triplet.beta_p - lam * triplet.beta_q)
    eta -= 0.5 * (a[0, 0] * mu * mu + 2.0 * a[0, 1] * mu * lam + a[1, 1] * lam * lam)
    locs, rates = triplet.jumps.atom_arrays()
    if locs.size:
        phase = mu * locs[:, 0] - lam * locs[:, 1]
        comp = (np.hypot(locs[:, 0], locs[:, 1]) <= triplet.h).astype(float)
        eta += complex(np.sum(rates * (np.exp(1j * phase) - 1.0 - 1j * phase * comp)))
    return complex(eta)


def with_truncation(triplet: LevyTriplet1D | LevyTriplet2D, new_h: float):
    """Re-express the same law with truncation radius ``new_h``.

    The drift absorbs the change of compensator so the characteristic
    exponent is unchanged.
    """
    if not new_h > 0:
        raise ValueError("new_h must be positive")
    if isinstance(triplet, LevyTriplet1D):
        locs, rates = triplet.jumps.atom_arrays()
        shift = 0.0
        if locs.size:
            delta = (np.abs(locs) <= new_h).astype(float) - (np.abs(locs) <= triplet.h).astype(float)
            shift += float(np.sum(rates * locs * delta))
        if triplet.jumps.density is not None:
            h_old, h_new = triplet.h, new_h
            shift += float(np.real(_density_integral(
                triplet.jumps.density,
                lambda y: y * ((np.abs(y) <= h_new).astype(float) - (np.abs(y) <= h_old).astype(float)),
                "compensator shift",
            )))
        return LevyTriplet1D(beta=triplet.beta + shift, alpha=triplet.alpha, jumps=triplet.jumps, h=new_h)
    locs, rates = triplet.jumps.atom_arrays()
    shift = np.zeros(2)
    if locs.size:
        norms = np.hypot(locs[:, 0], locs[:, 1])
        delta = (norms <= new_h).astype(float) - (norms <= triplet.h).astype(float)
        shift = (rates * delta) @ locs
    return LevyTriplet2D(
        beta_p=triplet.beta_p + float(shift[0]),
        beta_q=triplet.beta_q + float(shift[1]),
        alpha=triplet.alpha,
        jumps=triplet.jumps,
        h=new_h,
    )


# --------------------------------------------------------------------------
# Integrability condition
# --------------------------------------------------------------------------

@dataclass
class LevyConditionReport:
    """Value and verdict for the small-jump square-integrability condition."""

    value: float
    passed: bool
    diagnostics: dict = field(default_factory=dict)


def _refinement_verdict(partials: np.ndarray) -> tuple[bool, dict]:
    """Divergence detection from a refinement sequence of truncated integrals.

    ``partials[k]`` is the integral with inner cutoff ``eps_k = h 2^{-k}``.
    Convergent sequences have geometrically vanishing increments; increments
    that stall or grow signal divergence.
    """
    diffs = np.diff(partials)
    scale = max(abs(partials[-1]), 1.0)
    tail = diffs[-4:]
    if np.all(np.abs(tail) <= 1e-12 * scale):
        return True, {"partials": partials, "ratio": 0.0}
    ratios = np.abs(tail[1:]) / np.maximum(np.abs(tail[:-1]), 1e-300)
    q = float(np.exp(np.mean(np.log(np.maximum(ratios, 1e-300)))))
    converged = q < 0.7
    return converged, {"partials": partials, "ratio": q}


def validate_levy_condition(triplet: LevyTriplet1D | LevyTriplet2D) -> LevyConditionReport:
    """Evaluate ``integral of (|y|^2 inside h) + (1 outside h)`` against the measure.

    Finite atomic measures always pass (finite sum, reported exactly).
    Density components are probed by refining the inner cutoff toward the
    origin; a non-vanishing trend of increments fails the test with the
    refinement trace attached.
    """
    two_d = isinstance(triplet, LevyTriplet2D)
    locs, rates = triplet.jumps.atom_arrays()
    value = 0.0
    if locs.size:
        norms = np.hypot(locs[:, 0], locs[:, 1]) if two_d else np.abs(locs)
        inside = norms <= triplet.h
        value += float(np.sum(rates * np.where(inside, norms**2, 1.0)))
    diagnostics: dict = {"atomic_value": value}
    passed = True
    spec = triplet.jumps.density
    if spec is not None:
        h = triplet.h
        lo, hi = spec.support
        ks = np.arange(1, 15)
        partials = []
        outer = 0.0
        for a, b in ((lo, min(-h, 0.0)), (max(h, 0.0), hi)):
            if a < b:
                outer += _quad_part(lambda y: spec.density(y), a, b, None, "tail mass")
        for k in ks:
            eps_k = h * 2.0 ** (-float(k))
            inner = 0.0
            for sgn in (-1.0, 1.0):
                a, b = sorted((sgn * eps_k, sgn * h))
                a = max(a, lo)
                b = min(b, hi)
                if a < b:
                    inner += _quad_part(lambda y: y * y * spec.density(y), a, b, None, "small-jump variance")
            partials.append(outer + inner)
        partials = np.array(partials)
        converged, diag = _refinement_verdict(partials)
        diagnostics["density_refinement"] = diag
        passed = converged
        value = float(partials[-1]) if converged else float("inf")
        value += diagnostics["atomic_value"] if converged else 0.0
    return LevyConditionReport(value=value, passed=passed, diagnostics=diagnostics)


# --------------------------------------------------------------------------
# Density sampling tables
# --------------------------------------------------------------------------

@functools.lru_cache(maxsize=32)
def _density_tables(spec: DensitySpec, h: float):
    """Inverse-CDF tables and compensation constants for the eps-cutoff scheme."""
    sides = []
    for a, b in spec.sides:
        # geometric spacing toward the origin-side endpoint
        if a > 0:
            nodes = np.geomspace(a, b, spec.inv_cdf_nodes)
        else:
            nodes = -np.geomspace(-b, -a, spec.inv_cdf_nodes)[::-1]
        pdf = spec.density(nodes)
        if np.any(pdf < 0) or not np.all(np.isfinite(pdf)):
            raise NumericalFailure("density is negative or non-finite on its sampling range", {})
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(nodes))])
        rate = cdf[-1]
        if rate > 0:
            sides.append({"nodes": nodes, "cdf": cdf / rate, "rate": rate})
    total_rate = sum(s["rate"] for s in sides)
    lo, hi = spec.support
    comp_drift = 0.0  # mean of kept-but-compensated jumps (eps < |y| <= h)
    for sgn in (-1.0, 1.0):
        a, b = sorted((sgn * spec.eps, sgn * h))
        a, b = max(a, lo), min(b, hi)
        if a < b:
            comp_drift += _quad_part(lambda y: y * spec.density(y), a, b, None, "compensating drift")
    var_eps = 0.0  # variance rate of the dropped sub-eps jumps
    for a, b in ((max(lo, -spec.eps), 0.0), (0.0, min(hi, spec.eps))):
        if a < b:
            var_eps += _quad_part(lambda y: y * y * spec.density(y), a, b, None, "matched variance")
    return {"sides": sides, "total_rate": total_rate, "comp_drift": comp_drift, "var_eps": var_eps}


def _sample_density_magnitudes(tables, count: int, gen: np.random.Generator) -> np.ndarray:
    """Draw ``count`` jump magnitudes from the truncated normalized density."""
    if count == 0:
        return np.zeros(0)
    weights = np.array([s["rate"] for s in tables["sides"]])
    weights = weights / weights.sum()
    sides = gen.choice(len(weights), size=count, p=weights) if len(weights) > 1 else np.zeros(count, dtype=int)
    u = gen.random(count)
    out = np.empty(count)
    for i, s in enumerate(tables["sides"]):
        mask = sides == i
        out[mask] = np.interp(u[mask], s["cdf"], s["nodes"])
    return out


# --------------------------------------------------------------------------
# Sampling
# --------------------------------------------------------------------------

def _validate_grid(time_grid) -> np.ndarray:
    grid = np.asarray(time_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("time grid must be a nonempty 1-D sequence")
    if grid[0] != 0.0:
        raise ValueError("time grid must start at 0")
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise ValueError("time grid must be strictly increasing")
    return grid


def sample_increments(triplet: LevyTriplet1D | LevyTriplet2D, time_grid: Sequence[float], seed: int) -> PathSample:
    """Sample one path on ``time_grid`` with exact per-step increments.

    Identical ``(triplet, time_grid, seed)`` produce bit-identical output.
    Jumps larger than ``h`` are recorded in the jump log with a time drawn
    uniformly inside their step.
    """
    grid = _validate_grid(time_grid)
    two_d = isinstance(triplet, LevyTriplet2D)
    gen = rng.stream(seed, 0)
    locs, rates = triplet.jumps.atom_arrays()
    if two_d:
        norms = np.hypot(locs[:, 0], locs[:, 1]) if locs.size else np.zeros(0)
        chol = _chol_psd(noise_covariance_2d(triplet))
        values = np.zeros((grid.size, 2))
    else:
        norms = np.abs(locs)
        values = np.zeros(grid.size)
    big = norms > triplet.h
    jump_log = []
    tables = _density_tables(triplet.jumps.density, triplet.h) if triplet.jumps.density is not None else None

    pos = values[0].copy() if two_d else 0.0
    for k in range(1, grid.size):
        dt = grid[k] - grid[k - 1]
        if two_d:
            inc = np.array([triplet.beta_p, triplet.beta_q]) * dt
            inc += chol @ gen.standard_normal(2) * np.sqrt(dt)
        else:
            inc = triplet.beta * dt
            if triplet.alpha > 0:
                inc += np.sqrt(triplet.alpha * dt) * gen.standard_normal()
        for j in range(len(rates)):
            count = int(gen.poisson(rates[j] * dt))
            loc = locs[j]
            inc = inc + count * loc
            if big[j]:
                if count:
                    jt = grid[k - 1] + dt * np.sort(gen.random(count))
                    mag = tuple(loc) if two_d else float(loc)
                    jump_log.extend((float(t), mag) for t in jt)
            else:
                inc = inc - rates[j] * loc * dt
        if tables is not None:
            count = int(gen.poisson(tables["total_rate"] * dt))
            if count:
                mags = _sample_density_magnitudes(tables, count, gen)
                inc = inc + mags.sum()
                big_mags = mags[np.abs(mags) > triplet.h]
                if big_mags.size:
                    jt = grid[k - 1] + dt * np.sort(gen.random(big_mags.size))
                    jump_log.extend((float(t), float(m)) for t, m in zip(jt, big_mags))
            inc = inc - tables["comp_drift"] * dt
            if triplet.jumps.density.gaussian_correction and tables["var_eps"] > 0:
                inc = inc + np.sqrt(tables["var_eps"] * dt) * gen.standard_normal()
        pos = pos + inc
        values[k] = pos
    sample = PathSample(times=grid, values=values, jump_log=tuple(jump_log), seed=seed)
    sample.validate(triplet.h)
    return sample


def _chol_psd(a: np.ndarray) -> np.ndarray:
    """Factor a PSD matrix, tolerating tiny negative eigenvalues."""
    w, v = np.linalg.eigh(0.5 * (a + a.T))
    w = np.clip(w, 0.0, None)
    return v * np.sqrt(w)


def noise_covariance_2d(triplet: LevyTriplet2D) -> np.ndarray:
    """Covariance matrix of the Gaussian part of ``(xi, eta)``.

    The exponent's quadratic form ``-(1/2)(a_pp mu^2 + 2 a_pq mu lam
    + a_qq lam^2)`` pairs ``mu`` with ``xi`` and ``lam`` with ``-eta``, so
    the plain covariance of ``(xi, eta)`` carries the off-diagonal entry
    with a flipped sign.
    """
    a = triplet.alpha_matrix
    return np.array([[a[0, 0], -a[0, 1]], [-a[0, 1], a[1, 1]]])


def _ensemble_chunk_1d(triplet: LevyTriplet1D, t: float, m: int, gen: np.random.Generator) -> np.ndarray:
    out = np.full(m, triplet.beta * t)
    if triplet.alpha > 0:
        out += np.sqrt(triplet.alpha * t) * gen.standard_normal(m)
    locs, rates = triplet.jumps.atom_arrays()
    for j in range(len(rates)):
        counts = gen.poisson(rates[j] * t, size=m)
        out += counts * locs[j]
        if abs(locs[j]) <= triplet.h:
            out -= rates[j] * locs[j] * t
    spec = triplet.jumps.density
    if spec is not None:
        tables = _density_tables(spec, triplet.h)
        counts = gen.poisson(tables["total_rate"] * t, size=m)
        total = int(counts.sum())
        if total:
            mags = _sample_density_magnitudes(tables, total, gen)
            owner = np.repeat(np.arange(m), counts)
            out += np.bincount(owner, weights=mags, minlength=m)
        out -= tables["comp_drift"] * t
        if spec.gaussian_correction and tables["var_eps"] > 0:
            out += np.sqrt(tables["var_eps"] * t) * gen.standard_normal(m)
    return out


def _ensemble_chunk_2d(triplet: LevyTriplet2D, t: float, m: int, gen: np.random.Generator) -> np.ndarray:
    out = np.tile(np.array([triplet.beta_p, triplet.beta_q]) * t, (m, 1))
    chol = _chol_psd(noise_covariance_2d(triplet))
    out += gen.standard_normal((m, 2)) @ chol.T * np.sqrt(t)
    locs, rates = triplet.jumps.atom_arrays()
    for j in range(len(rates)):
        counts = gen.poisson(rates[j] * t, size=m)
        out += counts[:, None] * locs[j]
        if np.hypot(*locs[j]) <= triplet.h:
            out -= rates[j] * locs[j] * t
    return out


def sample_ensemble(
    triplet: LevyTriplet1D | LevyTriplet2D,
    t: float,
    n_paths: int,
    seed: int,
    antithetic: bool = False,
    threads: int = 1,
) -> np.ndarray:
    """One-shot increments at time ``t`` for ``n_paths`` paths.

    Chunked over derived streams so the result is independent of execution
    order; with ``antithetic`` the second half mirrors the first
    (``n_paths`` must be even and the law symmetric, which the caller
    asserts via :class:`MCConfig`).
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    two_d = isinstance(triplet, LevyTriplet2D)
    n_draw = n_paths // 2 if antithetic else n_paths
    shape = (n_paths, 2) if two_d else (n_paths,)
    if t == 0.0 or n_draw == 0:
        return np.zeros(shape)
    out = np.empty((n_draw, 2) if two_d else n_draw)

    def worker(idx, start, stop):
        gen = rng.stream(seed, idx)
        if two_d:
            return idx, start, stop, _ensemble_chunk_2d(triplet, t, stop - start, gen)
        return idx, start, stop, _ensemble_chunk_1d(triplet, t, stop - start, gen)

    for _, start, stop, vals in run_chunks(worker, n_draw, threads=threads):
        out[start:stop] = vals
    if antithetic:
        out = np.concatenate([out, -out])
    return out


# --------------------------------------------------------------------------
# Oracles
# --------------------------------------------------------------------------

def empirical_char_function(samples: np.ndarray, arg) -> tuple[complex, float]:
    """Sample mean of ``exp(i <arg, sample>)`` with its standard error."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("empty sample list")
    if samples.ndim == 2:
        theta = samples @ np.asarray(arg, dtype=float)
    else:
        theta = samples * float(arg)
    return mc_stats(np.exp(1j * theta))


@dataclass
class ConvolutionTable:
    """Monte Carlo table of ``x -> E f(x + xi_t)`` with per-point standard errors."""

    x: np.ndarray
    values: np.ndarray
    stderr: np.ndarray


def convolve_classical(
    f: Callable[[np.ndarray], np.ndarray],
    triplet: LevyTriplet1D,
    t: float,
    mc: MCConfig,
    x_grid: np.ndarray,
) -> ConvolutionTable:
    """Classical smoothing of ``f`` by the increment law at time ``t``.

    ``t = 0`` returns ``f`` exactly with zero error bars.  This is the
    abelian oracle the quantum Monte Carlo results are checked against.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    x_grid = np.asarray(x_grid, dtype=float)
    if t == 0.0:
        vals = np.asarray(f(x_grid), dtype=float)
        return ConvolutionTable(x=x_grid, values=vals, stderr=np.zeros_like(vals))
    xi = sample_ensemble(triplet, t, mc.n_paths, mc.seed, threads=mc.threads)
    n = xi.shape[0]
    sums = np.zeros(x_grid.size)
    sq = np.zeros(x_grid.size)
    step = max(1, (1 << 21) // max(1, x_grid.size))
    for start in range(0, n, step):
        block = np.asarray(f(x_grid[None, :] + xi[start:start + step, None]), dtype=float)
        sums += block.sum(axis=0)
        sq += (block * block).sum(axis=0)
    mean = sums / n
    var = np.maximum(sq / n - mean**2, 0.0) * (n / max(n - 1, 1))
    return ConvolutionTable(x=x_grid, values=mean, stderr=np.sqrt(var / n))


# --------------------------------------------------------------------------
# Export
# --------------------------------------------------------------------------

def save_path_csv(sample: PathSample, csv_path, json_path) -> None:
    """Write a path as CSV (time, value columns) with the jump log as sidecar JSON."""
    two_d = sample.values.ndim == 2
    header = "time,xi,eta" if two_d else "time,xi"
    lines = [header]
    for i, t in enumerate(sample.times):
        if two_d:
            lines.append(f"{t:.17g},{sample.values[i, 0]:.17g},{sample.values[i, 1]:.17g}")
        else:
            lines.append(f"{t:.17g},{sample.values[i]:.17g}")
    with open(csv_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    log = [{"time": t, "magnitude": list(m) if isinstance(m, tuple) else m} for t, m in sample.jump_log]
    with open(json_path, "w") as fh:
        json.dump({"seed": sample.seed, "jumps": log}, fh, sort_keys=True)
        fh.write("\n")
