"""Run-configuration parsing and validation.

The format is a deliberately small line-oriented grammar (documented in
``docs/config_grammar.md``): ``[section]`` headers, ``key = value`` entries,
``#`` comments.  Values are scalars, comma-separated lists, or semicolon
lists of ``location:rate`` jump atoms.  Validation is schema-driven per
experiment kind and reports every problem found, never just the first;
unknown sections or keys are errors, and the seed is always explicit.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .grid import GridSpec, PTable, QTable, WeylLabel, gaussian_state
from .levy import JumpMeasure, LevyTriplet1D, LevyTriplet2D
from .montecarlo import MCConfig

KINDS = (
    "levy-sample",
    "char-check",
    "mc-semigroup",
    "generator-check",
    "cp-suite",
    "dyson",
    "gauge-suite",
    "galilei-compare",
    "covariance-check",
    "feller-classify",
    "killed-diffusion",
)

FORMATS = ("csv", "json", "both")


@dataclass
class RunConfig:
    """Validated experiment description; ``params`` holds constructed objects."""

    kind: str
    seed: int
    out_dir: str
    formats: str
    threads: int
    params: dict
    text_hash: str


# --------------------------------------------------------------------------
# Tokenizer
# --------------------------------------------------------------------------

def _parse_sections(text: str, errors: list[str]) -> dict[str, dict[str, str]]:
    sections: dict[str, dict[str, str]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if not current:
                errors.append(f"line {lineno}: empty section name")
                current = None
            elif current in sections:
                errors.append(f"line {lineno}: duplicate section [{current}]")
            else:
                sections[current] = {}
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got {line!r}")
            continue
        if current is None:
            errors.append(f"line {lineno}: entry outside any [section]")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            errors.append(f"line {lineno}: empty key")
        elif key in sections[current]:
            errors.append(f"line {lineno}: duplicate key {key!r} in [{current}]")
        else:
            sections[current][key] = value
    return sections


# --------------------------------------------------------------------------
# Field coercion
# --------------------------------------------------------------------------

def _coerce(kind: str, raw: str, where: str, errors: list[str]):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "str":
            return raw
        if kind == "list_float":
            return [float(p) for p in raw.split(",") if p.strip()]
        if kind == "atoms1d":
            atoms = []
            for part in raw.split(";"):
                part = part.strip()
                if not part:
                    continue
                loc, rate = part.split(":")
                atoms.append((float(loc), float(rate)))
            return tuple(atoms)
        if kind == "atoms2d":
            atoms = []
            for part in raw.split(";"):
                part = part.strip()
                if not part:
                    continue
                loc, rate = part.split(":")
                x, v = loc.split(",")
                atoms.append(((float(x), float(v)), float(rate)))
            return tuple(atoms)
        raise AssertionError(kind)
    except (ValueError, IndexError) as exc:
        errors.append(f"{where}: cannot parse as {kind}: {exc}")
        return None


@dataclass(frozen=True)
class Field:
    type: str
    required: bool = False
    default: object = None


_RUN_FIELDS = {
    "kind": Field("str", required=True),
    "seed": Field("int", required=True),
    "out": Field("str", default="."),
    "format": Field("str", default="both"),
    "threads": Field("int", default=1),
}

_TRIPLET_FIELDS = {
    "beta": Field("float", default=0.0),
    "alpha": Field("float", default=0.0),
    "h": Field("float", default=1.0),
    "atoms": Field("atoms1d", default=()),
}

_TRIPLET2_FIELDS = {
    "beta_p": Field("float", default=0.0),
    "beta_q": Field("float", default=0.0),
    "alpha": Field("list_float", default=[0.0, 0.0, 0.0]),
    "h": Field("float", default=1.0),
    "atoms": Field("atoms2d", default=()),
}

_GRID_FIELDS = {
    "n": Field("int", default=1024),
    "x_min": Field("float", default=-40.0),
    "dx": Field("float", default=0.078125),
}

_STATE_FIELDS = {
    "center": Field("float", default=0.0),
    "width": Field("float", default=1.0),
    "momentum": Field("float", default=0.0),
}

_MC_FIELDS = {
    "n_paths": Field("int", required=True),
    "antithetic": Field("str", default="auto"),
}

_OBSERVABLE_FIELDS = {
    "kind": Field("str", required=True),
    "func": Field("str", default="cos"),
    "scale": Field("float", default=0.7),
    "x": Field("float", default=0.0),
    "v": Field("float", default=0.0),
}

SCHEMAS: dict[str, dict[str, dict[str, Field]]] = {
    "levy-sample": {
        "triplet": _TRIPLET_FIELDS,
        "sample": {"t_max": Field("float", required=True), "n_steps": Field("int", default=100)},
    },
    "char-check": {
        "triplet": _TRIPLET_FIELDS,
        "check": {
            "t": Field("list_float", default=[0.5, 1.0]),
            "args": Field("list_float", required=True),
            "n_samples": Field("int", default=100000),
            "sigmas": Field("float", default=4.0),
        },
    },
    "mc-semigroup": {
        "triplet": _TRIPLET_FIELDS,
        "grid": _GRID_FIELDS,
        "state": _STATE_FIELDS,
        "mc": _MC_FIELDS,
        "observable": _OBSERVABLE_FIELDS,
        "semigroup": {"t": Field("list_float", default=[1.0])},
    },
    "generator-check": {
        "triplet": _TRIPLET_FIELDS,
        "mc": _MC_FIELDS,
        "genchk": {
            "t_small": Field("float", default=0.01),
            "points": Field("list_float", default=[-2.0, -1.0, 0.0, 1.0, 2.0]),
            "func": Field("str", default="bump"),
            "scale": Field("float", default=1.0),
        },
    },
    "cp-suite": {
        "suite": {
            "count": Field("int", default=20),
            "max_dim": Field("int", default=4),
            "max_jumps": Field("int", default=3),
            "times": Field("list_float", default=[0.1, 1.0, 10.0]),
        },
    },
    "dyson": {
        "dyson": {
            "gamma": Field("float", default=1.0),
            "drive": Field("float", default=0.5),
            "detuning": Field("float", default=0.25),
            "t": Field("float", default=1.0),
            "n_terms": Field("int", default=12),
        },
    },
    "gauge-suite": {
        "suite": {
            "count": Field("int", default=20),
            "d": Field("int", default=2),
            "m": Field("int", default=3),
        },
    },
    "galilei-compare": {
        "triplet2": _TRIPLET2_FIELDS,
        "grid": _GRID_FIELDS,
        "state": _STATE_FIELDS,
        "mc": _MC_FIELDS,
        "galilei": {
            "x0": Field("float", default=0.0),
            "v0": Field("float", default=1.0),
            "t": Field("float", default=1.0),
            "n_steps": Field("int", default=64),
            "free": Field("bool", default=True),
        },
    },
    "covariance-check": {
        "triplet2": _TRIPLET2_FIELDS,
        "grid": _GRID_FIELDS,
        "state": _STATE_FIELDS,
        "mc": _MC_FIELDS,
        "galilei": {
            "x": Field("float", default=1.0),
            "v": Field("float", default=0.8),
            "t": Field("float", default=0.7),
            "n_steps": Field("int", default=32),
            "free": Field("bool", default=True),
        },
    },
    "feller-classify": {
        "feller": {
            "drift": Field("str", required=True),
            "coefficient": Field("float", default=1.0),
            "l": Field("float", default=0.0),
            "x0": Field("float", default=1.0),
            "expect_left": Field("str", default=""),
            "expect_right": Field("str", default=""),
        },
    },
    "killed-diffusion": {
        "feller": {
            "drift": Field("str", required=True),
            "coefficient": Field("float", default=1.0),
            "l": Field("float", default=0.0),
            "x0": Field("float", default=1.0),
        },
        "mc": _MC_FIELDS,
        "kd": {
            "x_start": Field("float", default=1.0),
            "t": Field("float", default=1.0),
            "dt": Field("float", default=0.001),
            "expect": Field("float", default=float("nan")),
            "tol": Field("float", default=0.01),
            "reflecting": Field("bool", default=False),
        },
    },
}

OBSERVABLE_FUNCS = {
    "cos": lambda s: (lambda x: np.cos(s * x)),
    "bump": lambda s: (lambda x: np.exp(-0.5 * (s * x) ** 2)),
    "step": lambda s: (lambda x: np.tanh(s * x)),
    "one": lambda s: (lambda x: np.ones_like(np.asarray(x, dtype=float))),
}


def _check_section(
    name: str,
    fields: dict[str, Field],
    sections: dict[str, dict[str, str]],
    errors: list[str],
) -> dict:
    raw = sections.get(name, {})
    out = {}
    for key, spec in fields.items():
        if key in raw:
            out[key] = _coerce(spec.type, raw[key], f"[{name}] {key}", errors)
        elif spec.required:
            errors.append(f"[{name}]: missing required key {key!r}")
        else:
            out[key] = spec.default
    for key in raw:
        if key not in fields:
            errors.append(f"[{name}]: unknown key {key!r}")
    return out


def _build_observable(params: dict, grid: GridSpec, errors: list[str]):
    kind = params["kind"]
    if kind == "weyl":
        return WeylLabel(params["x"], params["v"])
    func_name = params["func"]
    if func_name not in OBSERVABLE_FUNCS:
        errors.append(f"[observable]: unknown func {func_name!r} (choose from {sorted(OBSERVABLE_FUNCS)})")
        return None
    fn = OBSERVABLE_FUNCS[func_name](params["scale"])
    label = f"{func_name}({params['scale']:g})"
    if kind == "qtable":
        return QTable.from_function(grid, fn, label=f"{label}(Q)")
    if kind == "ptable":
        return PTable.from_function(grid, fn, label=f"{label}(P)")
    errors.append(f"[observable]: unknown kind {kind!r} (qtable, ptable or weyl)")
    return None


def parse_config(text: str, kind_override: str | None = None) -> RunConfig:
    """Parse and fully validate a run configuration.

    Raises :class:`ConfigError` carrying *all* problems found.  Domain
    invariants (nonnegative diffusion, valid grids, positive rates) are
    enforced by constructing the actual objects here.
    """
    errors: list[str] = []
    sections = _parse_sections(text, errors)

    run = _check_section("run", _RUN_FIELDS, sections, errors)
    kind = run.get("kind") or kind_override
    if kind_override is not None and run.get("kind") not in (None, kind_override):
        errors.append(f"[run] kind = {run.get('kind')!r} does not match the requested command {kind_override!r}")
    if kind not in KINDS:
        errors.append(f"[run]: unknown kind {kind!r} (choose from {', '.join(KINDS)})")
        raise ConfigError(errors)
    if run.get("format") not in FORMATS:
        errors.append(f"[run]: format must be one of {FORMATS}, got {run.get('format')!r}")
    if isinstance(run.get("threads"), int) and run["threads"] < 1:
        errors.append("[run]: threads must be >= 1")

    schema = SCHEMAS[kind]
    params: dict = {}
    for section, fields in schema.items():
        params[section] = _check_section(section, fields, sections, errors)
    for section in sections:
        if section != "run" and section not in schema:
            errors.append(f"unknown section [{section}] for kind {kind!r}")

    built: dict = {}
    if isinstance(run.get("seed"), int):
        try_build(kind, params, built, errors, run)
    if errors:
        raise ConfigError(errors)

    # Hash only what determines the numbers: kind, seed, and every parameter
    # entry. Presentation knobs (out, format, threads) must not change it.
    canonical = [f"kind={kind}", f"seed={run['seed']}"]
    for section in sorted(sections):
        for key in sorted(sections[section]):
            if section == "run" and key in ("out", "format", "threads", "kind", "seed"):
                continue
            canonical.append(f"{section}.{key}={sections[section][key]}")
    digest = hashlib.sha256("\n".join(canonical).encode())
    return RunConfig(
        kind=kind,
        seed=run["seed"],
        out_dir=run["out"],
        formats=run["format"],
        threads=run["threads"],
        params=built,
        text_hash=digest.hexdigest(),
    )


def try_build(kind: str, params: dict, built: dict, errors: list[str], run: dict) -> None:
    """Construct domain objects, folding their invariant errors into the list."""

    def attempt(label, fn):
        try:
            built[label] = fn()
        except ValueError as exc:
            errors.append(f"{label}: {exc}")
        except TypeError:
            pass  # a field failed coercion; that error is already recorded

    if "triplet" in params:
        p = params["triplet"]
        attempt("triplet", lambda: LevyTriplet1D(
            beta=p["beta"], alpha=p["alpha"], jumps=JumpMeasure(atoms=p["atoms"]), h=p["h"]
        ))
    if "triplet2" in params:
        p = params["triplet2"]
        a = p["alpha"]
        if len(a) != 3:
            errors.append("[triplet2] alpha: expected three entries a_pp, a_pq, a_qq")
        else:
            attempt("triplet2", lambda: LevyTriplet2D(
                beta_p=p["beta_p"], beta_q=p["beta_q"],
                alpha=((a[0], a[1]), (a[1], a[2])),
                jumps=JumpMeasure(atoms=p["atoms"]), h=p["h"],
            ))
    if "grid" in params:
        p = params["grid"]
        attempt("grid", lambda: GridSpec(n_points=p["n"], x_min=p["x_min"], dx=p["dx"]))
    if "state" in params and "grid" in built:
        p = params["state"]
        attempt("state", lambda: gaussian_state(built["grid"], p["center"], p["width"], p["momentum"]))
    if "mc" in params:
        p = params["mc"]
        anti = {"auto": "auto", "true": True, "false": False}.get(str(p["antithetic"]).lower())
        if anti is None:
            errors.append("[mc] antithetic: expected auto, true or false")
        else:
            attempt("mc", lambda: MCConfig(
                n_paths=p["n_paths"], seed=run["seed"], antithetic=anti, threads=run["threads"]
            ))
    if "observable" in params and "grid" in built:
        obs = _build_observable(params["observable"], built["grid"], errors)
        if obs is not None:
            built["observable"] = obs
    if "feller" in params:
        from .feller import CANONICAL_DRIFTS, DriftSpec

        p = params["feller"]
        built["feller_params"] = p
        name = p["drift"]
        if name in CANONICAL_DRIFTS:
            attempt("feller", lambda: CANONICAL_DRIFTS[name](l=p["l"], x0=p["x0"]))
        elif name == "linear":
            c = p["coefficient"]
            attempt("feller", lambda: DriftSpec(
                l=p["l"], drift=lambda x: c * np.ones_like(np.asarray(x, dtype=float)), x0=p["x0"]
            ))
        else:
            errors.append(f"[feller] drift: unknown drift {name!r} (zero, bessel3, ou, linear)")
        for key in ("expect_left", "expect_right"):
            if key in p and p[key] and p[key] not in ("absorbing", "non-absorbing", "inconclusive"):
                errors.append(f"[feller] {key}: invalid verdict {p[key]!r}")
    for section in params:
        if section not in ("triplet", "triplet2", "grid", "state", "mc", "observable", "feller"):
            built[section] = params[section]
