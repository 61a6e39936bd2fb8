"""Discretized one-dimensional quantum system on a periodic grid.

Position acts by multiplication with the lattice ``x_k = x_min + k dx``;
momentum is realized spectrally on the FFT lattice ``p_j``, which makes the
shift group and free evolution exact on band-limited states.  All aliasing
and boundary risks are surfaced through explicit support and band-limit
checks (warnings), never hidden.

Operator conventions, fixed by testable identities rather than typography:

  * ``position_phase(y)``  = exp(i y Q): multiply by ``exp(i y x_k)``.
  * ``shift(x)``           = exp(-i x P): spectral phase ``exp(-i x p_j)``;
    moves a state right by ``x`` (expectation of Q gains ``+x``).
  * exchange relation: ``shift(x) position_phase(y)
    = exp(-i x y) position_phase(y) shift(x)`` -- exact on the lattice for
    grid-commensurate pairs, including wrap-around.
  * ``weyl(x, v)`` = exp(i (v Q - x P)) = exp(-i v x / 2) position_phase(v)
    shift(x); the central phase sign follows from [Q, P] = i with the
    conventions above.  Displacements: Q -> Q + x, P -> P + v.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import rng

#: Lattice points on each edge counted as "boundary" by support checks.
BOUNDARY_WINDOW = 16
#: Probability mass allowed in the boundary window / top momentum band.
SUPPORT_TOL = 1e-12


class BoundarySupportWarning(UserWarning):
    """State carries non-negligible mass near the periodic boundary."""


class BandLimitWarning(UserWarning):
    """State carries non-negligible mass at the extreme momenta."""


class IncommensurateShiftWarning(UserWarning):
    """Shift/phase pair is not grid-commensurate; finite-size defect expected."""


class UnnormalizedStateWarning(UserWarning):
    """Expectation requested on an unnormalized state; it was rescaled."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic lattice: ``n_points`` (a power of two), origin and spacing."""

    n_points: int
    x_min: float
    dx: float

    def __post_init__(self):
        problems = []
        if self.n_points < 2 or (self.n_points & (self.n_points - 1)) != 0:
            problems.append(f"n_points must be a power of two >= 2, got {self.n_points}")
        if not self.dx > 0:
            problems.append(f"dx must be positive, got {self.dx}")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    @property
    def p(self) -> np.ndarray:
        """Momentum lattice in FFT ordering, spacing ``2 pi / (n dx)``."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)

    @property
    def dp(self) -> float:
        return 2.0 * np.pi / (self.n_points * self.dx)

    @property
    def length(self) -> float:
        return self.n_points * self.dx


def default_grid(n_points: int = 1024, half_width: float = 40.0) -> GridSpec:
    """The workhorse grid: ``x in [-half_width, half_width)``."""
    return GridSpec(n_points=n_points, x_min=-half_width, dx=2.0 * half_width / n_points)


@dataclass
class WaveFunction:
    """State on a grid; norm convention ``sum |psi_k|^2 dx``."""

    grid: GridSpec
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.grid.n_points,):
            raise ValueError(f"amplitudes shape {amps.shape} does not match grid ({self.grid.n_points},)")
        if not np.all(np.isfinite(amps.view(float))):
            raise ValueError("amplitudes must be finite")
        self.amplitudes = amps

    def norm(self) -> float:
        return float(np.sqrt(self.grid.dx * np.sum(np.abs(self.amplitudes) ** 2)))

    def normalized(self) -> "WaveFunction":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize the zero state")
        return WaveFunction(self.grid, self.amplitudes / n)

    def inner(self, other: "WaveFunction") -> complex:
        return complex(self.grid.dx * np.vdot(self.amplitudes, other.amplitudes))

    def boundary_mass(self, window: int = BOUNDARY_WINDOW) -> float:
        d = np.abs(self.amplitudes) ** 2
        return float(self.grid.dx * (d[:window].sum() + d[-window:].sum()))

    def momentum_tail_mass(self, fraction: float = 0.125) -> float:
        """Mass carried by the top ``fraction`` of the momentum band."""
        hat = np.fft.fft(self.amplitudes, norm="ortho")
        cut = (1.0 - fraction) * np.abs(self.grid.p).max()
        sel = np.abs(self.grid.p) >= cut
        total = np.sum(np.abs(hat) ** 2)
        return float(np.sum(np.abs(hat[sel]) ** 2) / total) if total > 0 else 0.0


def gaussian_state(grid: GridSpec, center: float = 0.0, width: float = 1.0, momentum: float = 0.0) -> WaveFunction:
    """Normalized Gaussian wave packet ``exp(-(x-c)^2/(2 w^2) + i p0 x)``."""
    x = grid.x
    amps = np.exp(-((x - center) ** 2) / (2.0 * width**2) + 1j * momentum * x)
    return WaveFunction(grid, amps).normalized()


# --------------------------------------------------------------------------
# Observables
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class QTable:
    """Multiplication operator f(Q) given by its values on the position lattice."""

    values: tuple
    label: str = "f(Q)"

    @classmethod
    def from_function(cls, grid: GridSpec, f: Callable[[np.ndarray], np.ndarray], label: str = "f(Q)") -> "QTable":
        return cls(values=tuple(np.asarray(f(grid.x), dtype=float)), label=label)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


@dataclass(frozen=True)
class PTable:
    """Multiplication operator g(P) on the momentum lattice (FFT ordering)."""

    values: tuple
    label: str = "g(P)"

    @classmethod
    def from_function(cls, grid: GridSpec, g: Callable[[np.ndarray], np.ndarray], label: str = "g(P)") -> "PTable":
        return cls(values=tuple(np.asarray(g(grid.p), dtype=float)), label=label)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


@dataclass(frozen=True)
class WeylLabel:
    """Phase-space displacement label for ``W = exp(i (v Q - x P))``.

    ``half_phase_sign`` is the sign ``s`` in the factorization
    ``W = exp(i s v x / 2) position_phase(v) shift(x)``; the default ``-1``
    is what [Q, P] = i forces for this operator ordering.
    """

    x: float
    v: float
    half_phase_sign: int = -1
    label: str = "W(x,v)"

    def __post_init__(self):
        if self.half_phase_sign not in (-1, 1):
            raise ValueError("half_phase_sign must be +1 or -1")
        if not (np.isfinite(self.x) and np.isfinite(self.v)):
            raise ValueError("Weyl label entries must be finite")

    @property
    def central_phase(self) -> complex:
        return np.exp(0.5j * self.half_phase_sign * self.v * self.x)


Observable = QTable | PTable | WeylLabel


# --------------------------------------------------------------------------
# Unitaries
# --------------------------------------------------------------------------

def _check_support(psi: WaveFunction) -> None:
    mass = psi.boundary_mass()
    if mass > SUPPORT_TOL:
        warnings.warn(
            f"state has boundary mass {mass:.3e} > {SUPPORT_TOL:.0e}; shifts wrap around",
            BoundarySupportWarning,
            stacklevel=3,
        )


def apply_position_phase(psi: WaveFunction, y: float) -> WaveFunction:
    """``exp(i y Q)``: pointwise phase; exactly norm-preserving."""
    return WaveFunction(psi.grid, psi.amplitudes * np.exp(1j * y * psi.grid.x))


def apply_shift(psi: WaveFunction, x: float, check_support: bool = True) -> WaveFunction:
    """``exp(-i x P)``: spectral shift moving the state right by ``x``.

    Exact circular index shift when ``x`` is a multiple of ``dx``; for
    band-limited states exact interpolation otherwise.
    """
    if x == 0.0:
        return WaveFunction(psi.grid, psi.amplitudes.copy())
    if check_support:
        _check_support(psi)
    hat = np.fft.fft(psi.amplitudes, norm="ortho")
    hat *= np.exp(-1j * x * psi.grid.p)
    return WaveFunction(psi.grid, np.fft.ifft(hat, norm="ortho"))


def apply_weyl(psi: WaveFunction, label: WeylLabel, check_support: bool = True) -> WaveFunction:
    """``exp(i (v Q - x P))`` with the documented central phase."""
    out = apply_shift(psi, label.x, check_support=check_support)
    out = apply_position_phase(out, label.v)
    return WaveFunction(psi.grid, out.amplitudes * label.central_phase)


def apply_free_evolution(psi: WaveFunction, t: float, check_bandlimit: bool = True) -> WaveFunction:
    """Free kinetic evolution ``exp(-i t P^2 / 2)`` via momentum phases."""
    if t == 0.0:
        return WaveFunction(psi.grid, psi.amplitudes.copy())
    if check_bandlimit:
        tail = psi.momentum_tail_mass()
        if tail > SUPPORT_TOL:
            warnings.warn(
                f"state has momentum tail mass {tail:.3e} > {SUPPORT_TOL:.0e}; free evolution may alias",
                BandLimitWarning,
                stacklevel=2,
            )
    hat = np.fft.fft(psi.amplitudes, norm="ortho")
    hat *= np.exp(-0.5j * t * psi.grid.p**2)
    return WaveFunction(psi.grid, np.fft.ifft(hat, norm="ortho"))


def expectation(psi: WaveFunction, observable: Observable) -> complex:
    """``<psi| X |psi>`` in the representation that diagonalizes ``X``.

    Unnormalized states are rescaled with a warning.
    """
    nrm = psi.norm()
    if abs(nrm - 1.0) > 1e-8:
        warnings.warn(f"state norm {nrm:.6g} != 1; rescaled", UnnormalizedStateWarning, stacklevel=2)
        psi = WaveFunction(psi.grid, psi.amplitudes / nrm)
    if isinstance(observable, QTable):
        d = np.abs(psi.amplitudes) ** 2
        return complex(psi.grid.dx * np.sum(observable.array * d))
    if isinstance(observable, PTable):
        hat = np.fft.fft(psi.amplitudes, norm="ortho")
        return complex(psi.grid.dx * np.sum(observable.array * np.abs(hat) ** 2))
    if isinstance(observable, WeylLabel):
        return psi.inner(apply_weyl(psi, observable))
    raise TypeError(f"unsupported observable type {type(observable)!r}")


def position_expectation(psi: WaveFunction) -> float:
    return float(np.real(expectation(psi, QTable(values=tuple(psi.grid.x), label="Q"))))


def momentum_expectation(psi: WaveFunction) -> float:
    return float(np.real(expectation(psi, PTable(values=tuple(psi.grid.p), label="P"))))


def kinetic_energy(psi: WaveFunction) -> float:
    return float(np.real(expectation(psi, PTable(values=tuple(0.5 * psi.grid.p**2), label="P^2/2"))))


# --------------------------------------------------------------------------
# Exchange-relation diagnostic
# --------------------------------------------------------------------------

def _default_battery(grid: GridSpec) -> list[WaveFunction]:
    states = [
        gaussian_state(grid, 0.0, 1.0, 0.0),
        gaussian_state(grid, -3.0, 2.0, 1.5),
        gaussian_state(grid, 4.0, 0.7, -2.0),
    ]
    gen = rng.stream(0xC0FFEE, 0)
    hat = np.zeros(grid.n_points, dtype=complex)
    band = grid.n_points // 8
    coeffs = gen.standard_normal(2 * band) + 1j * gen.standard_normal(2 * band)
    hat[:band] = coeffs[:band]
    hat[-band:] = coeffs[band:]
    psi = WaveFunction(grid, np.fft.ifft(hat, norm="ortho"))
    states.append(psi.normalized())
    return states


def is_commensurate(grid: GridSpec, x: float, y: float, rtol: float = 1e-9) -> bool:
    """True when ``x`` is a multiple of ``dx`` and ``y`` of the momentum spacing."""
    def _multiple(val, unit):
        if val == 0.0:
            return True
        k = val / unit
        return abs(k - round(k)) <= rtol * max(1.0, abs(k))
    return _multiple(x, grid.dx) and _multiple(y, grid.dp)


def ccr_defect(grid: GridSpec, x: float, y: float, states: list[WaveFunction] | None = None) -> float:
    """Largest norm defect of the exchange relation over a battery of states.

    Returns ``max over psi`` of ``|| (shift(x) phase(y) - exp(-i x y)
    phase(y) shift(x)) psi ||``.  For grid-commensurate pairs this is pure
    round-off; incommensurate pairs are computed anyway but flagged with a
    warning, since a finite lattice cannot represent them exactly.
    """
    if not is_commensurate(grid, x, y):
        warnings.warn(
            f"(x={x}, y={y}) is not grid-commensurate; defect reflects lattice artifacts",
            IncommensurateShiftWarning,
            stacklevel=2,
        )
    battery = states if states is not None else _default_battery(grid)
    phase = np.exp(-1j * x * y)
    worst = 0.0
    for psi in battery:
        lhs = apply_shift(apply_position_phase(psi, y), x, check_support=False)
        rhs = apply_position_phase(apply_shift(psi, x, check_support=False), y)
        diff = lhs.amplitudes - phase * rhs.amplitudes
        worst = max(worst, float(np.sqrt(grid.dx * np.sum(np.abs(diff) ** 2))))
    return worst


# --------------------------------------------------------------------------
# CSV interface
# --------------------------------------------------------------------------

def wavefunction_to_csv(psi: WaveFunction, path) -> None:
    lines = ["x,re,im"]
    for xk, a in zip(psi.grid.x, psi.amplitudes):
        lines.append(f"{xk:.17g},{a.real:.17g},{a.imag:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def wavefunction_from_csv(path) -> WaveFunction:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    x, re, im = data[:, 0], data[:, 1], data[:, 2]
    n = x.size
    dx = x[1] - x[0]
    if not np.allclose(np.diff(x), dx, rtol=0, atol=1e-12 * max(1.0, abs(dx))):
        raise ValueError("CSV lattice is not uniform")
    return WaveFunction(GridSpec(n_points=n, x_min=float(x[0]), dx=float(dx)), re + 1j * im)
