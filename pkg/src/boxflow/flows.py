"""Vector fields, fixed-step RK4 integration, and escape tracking.

A system is a vector field on a closed rectangular domain together with an
internal step size.  All integration is done with the classic fourth order
Runge-Kutta scheme on batches of points at once.  A trajectory that leaves
the closed domain is frozen at its last in-domain position and reported as
an escape rather than integrated further.
"""

import json
import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .errors import CatalogError, DomainError, IngestionError, NumericalError, PreconditionError


@dataclass
class FlowSystem:
    """A vector field restricted to a closed box domain.

    field maps an (n, d) array of points to an (n, d) array of velocities.
    domain is a (d, 2) array of [low, high] bounds per axis.  step is the
    internal RK4 step size.  equilibria is informational only.
    """

    dimension: int
    field: callable
    domain: np.ndarray
    step: float = 0.01
    name: str = "custom"
    equilibria: tuple = ()

    def __post_init__(self):
        self.domain = np.asarray(self.domain, dtype=float)
        if self.domain.shape != (self.dimension, 2):
            raise PreconditionError(
                f"domain must have shape ({self.dimension}, 2), got {self.domain.shape}")
        if not np.isfinite(self.domain).all():
            raise PreconditionError("domain bounds must be finite")
        if (self.domain[:, 0] >= self.domain[:, 1]).any():
            raise PreconditionError("each domain axis needs low < high")
        if not self.step > 0:
            raise PreconditionError(f"step must be positive, got {self.step}")

    def contains(self, points):
        """Boolean mask of rows of an (n, d) array inside the closed domain."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo = self.domain[:, 0]
        hi = self.domain[:, 1]
        return (pts >= lo).all(axis=1) & (pts <= hi).all(axis=1)


@dataclass
class Escape:
    """Marker returned when a trajectory leaves the closed domain.

    point is the last computed position still inside the domain and time is
    the elapsed integration time at that position.  The true exit happens
    within one internal step after time.
    """

    point: np.ndarray
    time: float


@dataclass
class Trajectory:
    """Equally spaced samples along one orbit.

    If escaped is True the orbit left the domain and escape_index is the
    index of the first sample that could not be produced; times and points
    only cover the produced samples.
    """

    times: np.ndarray
    points: np.ndarray
    escaped: bool = False
    escape_index: int = dataclass_field(default=None)


def _schedule(t, h):
    """Split a duration into whole RK4 steps plus a remainder.

    Durations that are an integer number of steps up to roundoff snap to
    a zero remainder so that repeated composition stays exact.
    """
    n = int(math.floor(t / h + 1e-9))
    rem = t - n * h
    if rem <= 1e-12 * max(1.0, abs(t)):
        rem = 0.0
    return n, rem


def _rk4_step(field, pts, h):
    k1 = field(pts)
    k2 = field(pts + 0.5 * h * k1)
    k3 = field(pts + 0.5 * h * k2)
    k4 = field(pts + h * k3)
    return pts + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _advance(system, points, t):
    """March a batch of in-domain points forward by time t.

    Returns (positions, escaped, escape_times).  Rows that leave the closed
    domain are frozen at their last in-domain position; their escape time is
    the elapsed time at that frozen position.  Non-escaped rows have nan in
    escape_times.
    """
    if t < 0:
        raise PreconditionError(f"advance time must be nonnegative, got {t}")
    pts = np.array(points, dtype=float, copy=True)
    n = pts.shape[0]
    active = np.ones(n, dtype=bool)
    esc_time = np.full(n, np.nan)
    if t == 0 or n == 0:
        return pts, ~active, esc_time

    lo = system.domain[:, 0]
    hi = system.domain[:, 1]
    n_steps, rem = _schedule(t, system.step)
    sizes = [system.step] * n_steps + ([rem] if rem > 0 else [])
    elapsed = 0.0
    for h in sizes:
        if not active.any():
            break
        nxt = _rk4_step(system.field, pts, h)
        if not np.isfinite(nxt[active]).all():
            raise NumericalError(
                f"integration of {system.name} produced non-finite values at t={elapsed + h:g}")
        inside = (nxt >= lo).all(axis=1) & (nxt <= hi).all(axis=1)
        newly_out = active & ~inside
        if newly_out.any():
            esc_time[newly_out] = elapsed
            active &= inside
        np.copyto(pts, nxt, where=active[:, None])
        elapsed += h
    return pts, ~active, esc_time


def flow_map(system, x, t):
    """Advance a single point by time t.

    Returns the new position, or an Escape if the orbit leaves the closed
    domain before time t elapses.  The starting point must lie inside the
    domain.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (system.dimension,):
        raise PreconditionError(
            f"point must have shape ({system.dimension},), got {x.shape}")
    if not system.contains(x)[0]:
        raise DomainError(f"point {x.tolist()} is outside the domain of {system.name}")
    pts, escaped, esc_time = _advance(system, x[None, :], t)
    if escaped[0]:
        return Escape(point=pts[0], time=float(esc_time[0]))
    return pts[0]


def sample_trajectory(system, x, horizon, sample_step):
    """Sample one orbit at multiples of sample_step up to the horizon."""
    if sample_step <= 0:
        raise PreconditionError(f"sample_step must be positive, got {sample_step}")
    if not sample_step <= horizon:
        raise PreconditionError(
            f"sample_step ({sample_step}) must not exceed horizon ({horizon})")
    n_samples = int(math.floor(horizon / sample_step + 1e-9)) + 1
    x = np.asarray(x, dtype=float)
    pts = [x]
    current = x
    for k in range(1, n_samples):
        nxt = flow_map(system, current, sample_step)
        if isinstance(nxt, Escape):
            produced = np.array(pts)
            return Trajectory(times=np.arange(k) * sample_step, points=produced,
                              escaped=True, escape_index=k)
        pts.append(nxt)
        current = nxt
    return Trajectory(times=np.arange(n_samples) * sample_step, points=np.array(pts))


def polynomial_field(terms, dimension):
    """Build a vectorized polynomial vector field from a term list.

    Each term is a mapping with "coeffs" (one coefficient per output axis)
    and "exponents" (one nonnegative integer per input axis); the term
    contributes coeffs * prod(x**exponents) to the velocity.
    """
    coeffs = []
    expos = []
    for i, term in enumerate(terms):
        try:
            c = np.asarray(term["coeffs"], dtype=float)
            e = np.asarray(term["exponents"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise IngestionError(f"term {i} needs numeric 'coeffs' and 'exponents'") from exc
        if c.shape != (dimension,) or e.shape != (dimension,):
            raise IngestionError(
                f"term {i}: coeffs and exponents must each have {dimension} entries")
        if (e < 0).any() or (e != np.round(e)).any():
            raise IngestionError(f"term {i}: exponents must be nonnegative integers")
        coeffs.append(c)
        expos.append(e)

    def field(pts):
        out = np.zeros_like(pts)
        for c, e in zip(coeffs, expos):
            out += np.prod(pts ** e, axis=1)[:, None] * c
        return out

    return field


def _builtin_specs():
    def saddle(p):
        return p.copy()

    def contract(p):
        return -p

    def doublewell(p):
        return p - p ** 3

    def gradient(p):
        out = np.empty_like(p)
        out[:, 0] = -p[:, 0]
        out[:, 1] = -2.0 * p[:, 1]
        return out

    def hopf(p):
        x = p[:, 0]
        y = p[:, 1]
        r2 = x * x + y * y
        out = np.empty_like(p)
        out[:, 0] = x - y - x * r2
        out[:, 1] = x + y - y * r2
        return out

    return {
        "saddle1d": (1, saddle, [[-1.0, 1.0]], ((0.0,),)),
        "contract1d": (1, contract, [[-2.0, 2.0]], ((0.0,),)),
        "doublewell1d": (1, doublewell, [[-2.0, 2.0]], ((-1.0,), (0.0,), (1.0,))),
        "gradient2d": (2, gradient, [[-2.0, 2.0], [-2.0, 2.0]], ((0.0, 0.0),)),
        "hopf2d": (2, hopf, [[-2.0, 2.0], [-2.0, 2.0]], ((0.0, 0.0),)),
    }


def builtin_names():
    return sorted(_builtin_specs())


def builtin_system(name, step=0.01):
    """Look up one of the named example systems."""
    specs = _builtin_specs()
    if name not in specs:
        known = ", ".join(builtin_names())
        raise CatalogError(f"unknown system '{name}'; available: {known}")
    dim, fn, dom, eq = specs[name]
    return FlowSystem(dimension=dim, field=fn, domain=np.asarray(dom, dtype=float),
                      step=step, name=name, equilibria=eq)


def load_system(path):
    """Read a system description from a JSON file.

    The file either names a built-in under "field" or gives a polynomial
    term list; dimension, domain and step may override built-in defaults.
    """
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise IngestionError(f"cannot read system file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IngestionError(f"system file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise IngestionError("system file must contain a JSON object")
    if "field" not in data:
        raise IngestionError("system file is missing 'field'")

    fld = data["field"]
    if isinstance(fld, str):
        base = builtin_system(fld)
        dim = data.get("dimension", base.dimension)
        if dim != base.dimension:
            raise IngestionError(
                f"dimension {dim} does not match built-in '{fld}' ({base.dimension})")
        domain = np.asarray(data.get("domain", base.domain), dtype=float)
        step = data.get("step", base.step)
        name = data.get("name", base.name)
        return FlowSystem(dimension=dim, field=base.field, domain=domain,
                          step=step, name=name, equilibria=base.equilibria)

    if not isinstance(fld, list):
        raise IngestionError("'field' must be a built-in name or a list of terms")
    for key in ("dimension", "domain"):
        if key not in data:
            raise IngestionError(f"system file is missing '{key}'")
    dim = data["dimension"]
    if not isinstance(dim, int) or dim < 1:
        raise IngestionError(f"'dimension' must be a positive integer, got {dim!r}")
    fn = polynomial_field(fld, dim)
    return FlowSystem(dimension=dim, field=fn,
                      domain=np.asarray(data["domain"], dtype=float),
                      step=data.get("step", 0.01),
                      name=data.get("name", "custom"))
