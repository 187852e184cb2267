"""Synthetic non-stationary dynamics with i.i.d. system parameters.

Each series follows a damped, drifting planar rotation plus a fixed
reflection-type term of strength ``sym_break``::

    X_{t+1} = clip( c_t R(w_t) X_t + sym_break * diag(1, -1) X_t )
    w_t = omega_i + t * omega_drift
    c_t = clamp(damping_i + t * damping_drift, (0, 1])

where ``omega_i`` and ``damping_i`` are drawn once per series. The rotation
part commutes with every planar rotation, so at ``sym_break = 0`` the map is
exactly C_n-equivariant for every n. Observations add isotropic Gaussian noise
and are clipped to the ``state_bound`` ball. For ``dim > 2`` the same map acts
on each consecutive coordinate plane.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from symbound.errors import DatasetParseError, IntegrityError, InvalidArgumentError
from symbound.seeding import mix64

MIN_DAMPING = 1e-6


@dataclass(frozen=True)
class GeneratorSpec:
    dim: int = 2
    sym_break: float = 0.0
    omega0: float = 0.3
    omega_drift: float = 0.005
    damping0: float = 0.98
    damping_drift: float = -0.002
    noise_std: float = 0.05
    # per-series parameters are drawn uniformly from center +/- spread
    omega_spread: float = 0.1
    damping_spread: float = 0.02
    state_bound: float = 1.0

    def __post_init__(self):
        if self.dim < 2 or self.dim % 2:
            raise InvalidArgumentError(f"dim must be even and >= 2, got {self.dim}")
        if self.sym_break < 0:
            raise InvalidArgumentError("sym_break must be nonnegative")
        if self.state_bound <= 0:
            raise InvalidArgumentError("state_bound must be positive")
        if self.noise_std < 0 or self.omega_spread < 0 or self.damping_spread < 0:
            raise InvalidArgumentError("noise_std and spreads must be nonnegative")
        if not 0 < self.damping0 <= 1:
            raise InvalidArgumentError("damping0 must lie in (0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> GeneratorSpec:
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InvalidArgumentError(f"unknown generator fields: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True, eq=False)
class Sample:
    window: np.ndarray  # (k, d), most recent state first
    target: np.ndarray  # (d,)
    t_index: int = 0
    series_index: int = 0


@dataclass(frozen=True, eq=False)
class TimeSeries:
    states: np.ndarray  # (T + 1, d)
    params: dict
    seed: int

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return (
            self.seed == other.seed
            and self.params == other.params
            and np.array_equal(self.states, other.states)
        )


def clip_to_ball(x: np.ndarray, radius: float) -> np.ndarray:
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    scale = np.minimum(1.0, radius / np.maximum(norm, np.finfo(float).tiny))
    return x * scale


def step(spec: GeneratorSpec, x: np.ndarray, t: int, params: dict) -> np.ndarray:
    """One application of the step map; ``x`` may carry leading batch axes.

    ``params`` holds ``omega`` and ``damping`` (scalars or arrays broadcasting
    against the batch axes of ``x``).
    """
    x = np.asarray(x, dtype=float)
    omega = np.asarray(params["omega"], dtype=float) + t * spec.omega_drift
    damp = np.asarray(params["damping"], dtype=float) + t * spec.damping_drift
    damp = np.clip(damp, MIN_DAMPING, 1.0)
    cos = (damp * np.cos(omega))[..., None]
    sin = (damp * np.sin(omega))[..., None]
    planes = x.reshape(*x.shape[:-1], spec.dim // 2, 2)
    x0, x1 = planes[..., 0], planes[..., 1]
    eps = spec.sym_break
    y0 = cos * x0 - sin * x1 + eps * x0
    y1 = sin * x0 + cos * x1 - eps * x1
    y = np.stack([y0, y1], axis=-1).reshape(x.shape)
    return clip_to_ball(y, spec.state_bound)


def _draw(spec: GeneratorSpec, T: int, seed: int):
    g = np.random.default_rng(seed)
    omega = spec.omega0 + g.uniform(-1.0, 1.0) * spec.omega_spread
    damping = min(1.0, spec.damping0 + g.uniform(-1.0, 1.0) * spec.damping_spread)
    direction = g.standard_normal(spec.dim)
    direction /= np.linalg.norm(direction)
    radius = 0.5 * spec.state_bound * g.uniform() ** (1.0 / spec.dim)
    noise = g.standard_normal((T + 1, spec.dim)) * spec.noise_std
    return omega, damping, radius * direction, noise


def simulate_many(spec: GeneratorSpec, T: int, seeds) -> tuple[np.ndarray, list[dict]]:
    """Simulate one series per seed, stepping all of them together.

    Returns observed states of shape (n, T + 1, d) and the per-series params.
    Every series is bit-identical to ``simulate_series`` with the same seed.
    """
    draws = [_draw(spec, T, int(s)) for s in seeds]
    omega = np.array([d[0] for d in draws])
    damping = np.array([d[1] for d in draws])
    x = np.stack([d[2] for d in draws])
    noise = np.stack([d[3] for d in draws])
    params = {"omega": omega, "damping": damping}
    clean = np.empty((len(draws), T + 1, spec.dim))
    clean[:, 0] = x
    for t in range(1, T + 1):
        x = step(spec, x, t, params)
        clean[:, t] = x
    observed = clip_to_ball(clean + noise, spec.state_bound)
    plist = [{"omega": float(o), "damping": float(c)} for o, c in zip(omega, damping)]
    return observed, plist


def simulate_series(spec: GeneratorSpec, T: int, k: int, seed: int) -> TimeSeries:
    if T < k + 1:
        raise InvalidArgumentError(f"need T >= k + 1, got T={T}, k={k}")
    states, params = simulate_many(spec, T, [seed])
    return TimeSeries(states[0], params[0], int(seed))


def windows_from_states(states: np.ndarray, k: int, t_from: int, t_to: int):
    """Windows and targets for 1-based times ``t_from..t_to`` inclusive.

    ``states[..., s, :]`` is X_{s+1}. Returns windows (..., H, k, d) with the
    most recent lag first, and targets (..., H, d).
    """
    ts = np.arange(t_from, t_to + 1)
    lags = (ts[:, None] - 2) - np.arange(k)[None, :]
    # contiguous copies keep reduction order independent of how states were laid out
    return np.ascontiguousarray(states[..., lags, :]), np.ascontiguousarray(states[..., ts - 1, :])


class Dataset:
    """N series of length T + 1 with their lag-``k`` windowed samples.

    ``windows``/``targets`` hold the training samples for t = k+1..T with shapes
    (N, T-k, k, d) and (N, T-k, d); ``target_windows``/``target_states`` hold
    the held-out Z_{T+1}.
    """

    def __init__(self, series: list[TimeSeries], k: int, spec: GeneratorSpec | None = None):
        if not series:
            raise InvalidArgumentError("dataset needs at least one series")
        self.series = list(series)
        self.k = int(k)
        self.spec = spec
        states = np.stack([s.states for s in self.series])
        T = states.shape[1] - 1
        if T < self.k + 1:
            raise InvalidArgumentError(f"need T >= k + 1, got T={T}, k={self.k}")
        self.states = states
        self.windows, self.targets = windows_from_states(states, self.k, self.k + 1, T)
        tw, tt = windows_from_states(states, self.k, T + 1, T + 1)
        self.target_windows, self.target_states = np.ascontiguousarray(tw[:, 0]), np.ascontiguousarray(tt[:, 0])
        for arr in (self.states, self.windows, self.targets, self.target_windows, self.target_states):
            arr.setflags(write=False)

    @property
    def N(self) -> int:
        return self.states.shape[0]

    @property
    def T(self) -> int:
        return self.states.shape[1] - 1

    @property
    def dim(self) -> int:
        return self.states.shape[2]

    @property
    def horizon(self) -> int:
        return self.T - self.k

    @property
    def train_samples(self) -> list[Sample]:
        return [
            Sample(self.windows[i, h], self.targets[i, h], h + self.k + 1, i)
            for i in range(self.N)
            for h in range(self.horizon)
        ]

    @property
    def target_samples(self) -> list[Sample]:
        return [
            Sample(self.target_windows[i], self.target_states[i], self.T + 1, i)
            for i in range(self.N)
        ]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.k == other.k and self.spec == other.spec and self.series == other.series


def make_dataset(spec: GeneratorSpec, N: int, T: int, k: int, seed: int) -> Dataset:
    if N < 1:
        raise InvalidArgumentError(f"N must be >= 1, got {N}")
    if T < k + 1:
        raise InvalidArgumentError(f"need T >= k + 1, got T={T}, k={k}")
    seeds = [mix64(seed, i) for i in range(N)]
    states, params = simulate_many(spec, T, seeds)
    series = [TimeSeries(states[i], params[i], seeds[i]) for i in range(N)]
    return Dataset(series, k, spec)


def fresh_samples(spec: GeneratorSpec, n: int, T: int, k: int, seed: int):
    """Windows/targets for all of t = k+1..T+1 from ``n`` new series."""
    seeds = [mix64(seed, i) for i in range(n)]
    states, _ = simulate_many(spec, T, seeds)
    return windows_from_states(states, k, k + 1, T + 1)


# -- serialization ----------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        if not math.isfinite(x):
            raise InvalidArgumentError("cannot serialize non-finite float")
        return format(float(x), ".17g")
    if isinstance(x, str):
        return json.dumps(x)
    if isinstance(x, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{_fmt(v)}" for k, v in x.items()) + "}"
    if isinstance(x, (list, tuple, np.ndarray)):
        return "[" + ",".join(_fmt(v) for v in x) + "]"
    raise InvalidArgumentError(f"cannot serialize {type(x).__name__}")


def dumps17(obj) -> str:
    """JSON text with every float written to 17 significant digits."""
    return _fmt(obj)


def save_dataset(dataset: Dataset, path) -> None:
    spec = dataset.spec.to_dict() if dataset.spec is not None else None
    lines = [dumps17({"N": dataset.N, "T": dataset.T, "k": dataset.k, "spec": spec})]
    for i, s in enumerate(dataset.series):
        lines.append(dumps17({"i": i, "seed": s.seed, "params": s.params, "states": s.states}))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_dataset(path) -> Dataset:
    text = Path(path).read_text(encoding="utf-8")
    records = []
    last_good = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetParseError(exc.msg, lineno, last_good) from None
        if not isinstance(rec, dict):
            raise DatasetParseError("record is not a JSON object", lineno, last_good)
        records.append(rec)
        last_good = lineno
    if not records:
        raise IntegrityError(f"{path}: empty dataset file")
    header, body = records[0], records[1:]
    try:
        N, T, k = int(header["N"]), int(header["T"]), int(header["k"])
        spec = GeneratorSpec.from_dict(header["spec"]) if header.get("spec") else None
    except (KeyError, TypeError, ValueError) as exc:
        raise IntegrityError(f"{path}: bad header: {exc}") from None
    if len(body) != N:
        raise IntegrityError(f"{path}: header declares N={N} but file holds {len(body)} series")
    bound = spec.state_bound if spec is not None else np.inf
    series = []
    for expected_i, rec in enumerate(body):
        try:
            i, seed, params = int(rec["i"]), int(rec["seed"]), dict(rec["params"])
            states = np.asarray(rec["states"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise IntegrityError(f"{path}: series record {expected_i}: {exc}") from None
        if i != expected_i:
            raise IntegrityError(f"{path}: expected series index {expected_i}, found {i}")
        if states.ndim != 2 or states.shape[0] != T + 1:
            raise IntegrityError(f"{path}: series {i} has shape {states.shape}, expected ({T + 1}, d)")
        if spec is not None and states.shape[1] != spec.dim:
            raise IntegrityError(f"{path}: series {i} has dimension {states.shape[1]}, expected {spec.dim}")
        if not np.all(np.isfinite(states)):
            raise IntegrityError(f"{path}: series {i} has non-finite states")
        if np.max(np.linalg.norm(states, axis=1)) > bound * (1 + 1e-12):
            raise IntegrityError(f"{path}: series {i} leaves the state ball")
        series.append(TimeSeries(states, params, seed))
    try:
        return Dataset(series, k, spec)
    except InvalidArgumentError as exc:
        raise IntegrityError(f"{path}: {exc}") from None
