"""Force-trace recording schema, CSV/manifest I/O, and the synthetic dataset generator.

A recording is one letter-writing trial: a timestamped sequence of 3-axis
force samples tagged with user/task/trial/variant labels.  CSV files carry
the mandatory header ``timestamp,fx,fy,fz``; a JSON manifest indexes a
directory of such files.  Because the human dataset behind this toolkit is
private, :func:`synth_dataset` generates labeled traces with controllable
per-user force signatures that stand in for it.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    EmptyTraceError,
    SchemaError,
    TraceOrderingError,
)

CSV_HEADER = "timestamp,fx,fy,fz"
VARIANTS = ("raw", "filtered")
DEFAULT_SAMPLE_RATE = 250.0
DEFAULT_TASKS = ("a", "b", "c", "d", "e", "f", "g")


class ForceSample(NamedTuple):
    timestamp: float
    fx: float
    fy: float
    fz: float


@dataclass(frozen=True)
class ForceTrace:
    """One recorded trial: strictly increasing timestamps and a T x 3 force matrix."""

    timestamps: np.ndarray  # (T,) float32 seconds
    forces: np.ndarray      # (T, 3) float32 newtons
    user_id: str
    task_id: str
    trial_index: int
    variant: str = "raw"
    sample_rate: float = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.float32)
        f = np.asarray(self.forces, dtype=np.float32)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "forces", f)
        if ts.ndim != 1 or f.ndim != 2 or f.shape[1] != 3:
            raise DataError(f"expected (T,) timestamps and (T, 3) forces, got {ts.shape} and {f.shape}")
        if len(ts) != len(f):
            raise DataError(f"timestamp/force length mismatch: {len(ts)} vs {len(f)}")
        if len(ts) == 0:
            raise EmptyTraceError("trace has no samples")
        if not np.isfinite(ts).all() or not np.isfinite(f).all():
            raise DataError("trace contains non-finite values")
        if (ts < 0).any():
            raise DataError("negative timestamp in trace")
        if len(ts) > 1 and not (np.diff(ts) > 0).all():
            raise TraceOrderingError("timestamps must strictly increase")
        if self.variant not in VARIANTS:
            raise DataError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.trial_index < 0:
            raise DataError(f"trial_index must be >= 0, got {self.trial_index}")

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def samples(self) -> list[ForceSample]:
        return [
            ForceSample(float(t), float(x), float(y), float(z))
            for t, (x, y, z) in zip(self.timestamps, self.forces)
        ]

    @property
    def key(self) -> tuple[str, str, int, str]:
        return (self.user_id, self.task_id, self.trial_index, self.variant)


def parse_trace_csv(
    data: bytes | str,
    *,
    user_id: str,
    task_id: str,
    trial_index: int,
    variant: str = "raw",
    sample_rate: float = DEFAULT_SAMPLE_RATE,
) -> ForceTrace:
    """Parse ``timestamp,fx,fy,fz`` CSV text into a ForceTrace.

    Raises SchemaError for a bad header, DataError for non-numeric or
    non-finite rows (naming the row index), TraceOrderingError for
    non-increasing timestamps and EmptyTraceError for a header-only file.
    """
    if isinstance(data, bytes):
        text = data.decode("utf-8")
    else:
        text = data
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != CSV_HEADER:
        got = lines[0].strip() if lines else "<empty file>"
        raise SchemaError(f"expected header {CSV_HEADER!r}, got {got!r}")
    rows = np.empty((len(lines) - 1, 4), dtype=np.float32)
    for i, line in enumerate(lines[1:]):
        parts = line.split(",")
        if len(parts) != 4:
            raise SchemaError(f"row {i}: expected 4 columns, got {len(parts)}")
        try:
            vals = [float(p) for p in parts]
        except ValueError as exc:
            raise DataError(f"row {i}: non-numeric value ({exc})") from None
        if not all(math.isfinite(v) for v in vals):
            raise DataError(f"row {i}: non-finite value in {parts}")
        rows[i] = vals
    if len(rows) == 0:
        raise EmptyTraceError("CSV contains a header but no data rows")
    return ForceTrace(
        timestamps=rows[:, 0],
        forces=rows[:, 1:4],
        user_id=user_id,
        task_id=task_id,
        trial_index=trial_index,
        variant=variant,
        sample_rate=sample_rate,
    )


def write_trace_csv(trace: ForceTrace) -> bytes:
    """Serialize a trace to CSV bytes; round-trips float32 values exactly."""
    if len(trace) == 0:  # unreachable through the constructor, kept as a guard
        raise EmptyTraceError("refusing to write an empty trace")
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for t, (x, y, z) in zip(trace.timestamps, trace.forces):
        # str() of a float32 scalar prints the shortest digits that parse back bit-exactly
        buf.write(f"{t},{x},{y},{z}\n")
    return buf.getvalue().encode("utf-8")


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    user: str
    task: str
    trial: int
    variant: str

    def labels(self) -> tuple[str, str, int, str]:
        return (self.user, self.task, self.trial, self.variant)


@dataclass
class DatasetManifest:
    """Index of trace files: one entry per (user, task, trial, variant)."""

    entries: list[ManifestEntry] = field(default_factory=list)
    sample_rate: float = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        keys = [e.labels() for e in self.entries]
        if len(set(keys)) != len(keys):
            seen = set()
            for k in keys:
                if k in seen:
                    raise DataError(f"duplicate manifest entry for {k}")
                seen.add(k)

    def __len__(self) -> int:
        return len(self.entries)

    def to_json(self) -> str:
        doc = {
            "sample_rate": self.sample_rate,
            "entries": [
                {"path": e.path, "user": e.user, "task": e.task, "trial": e.trial, "variant": e.variant}
                for e in self.entries
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"manifest is not valid JSON: {exc}") from None
        if not isinstance(doc, dict) or "entries" not in doc:
            raise SchemaError("manifest must be an object with an 'entries' list")
        entries = []
        for i, raw in enumerate(doc["entries"]):
            try:
                entries.append(
                    ManifestEntry(
                        path=str(raw["path"]),
                        user=str(raw["user"]),
                        task=str(raw["task"]),
                        trial=int(raw["trial"]),
                        variant=str(raw["variant"]),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaError(f"manifest entry {i} invalid: {exc}") from None
            if entries[-1].variant not in VARIANTS:
                raise SchemaError(f"manifest entry {i}: bad variant {entries[-1].variant!r}")
        return cls(entries=entries, sample_rate=float(doc.get("sample_rate", DEFAULT_SAMPLE_RATE)))

    def save(self, path: Path | str) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: Path | str) -> "DatasetManifest":
        p = Path(path)
        if not p.exists():
            raise DataError(f"manifest not found: {p}")
        return cls.from_json(p.read_text(encoding="utf-8"))


class TraceDataset:
    """Immutable labeled collection of force traces with group lookups."""

    def __init__(self, traces: Iterable[ForceTrace]):
        self._traces = tuple(traces)
        groups: dict[tuple[str, str], list[ForceTrace]] = {}
        for tr in self._traces:
            groups.setdefault((tr.user_id, tr.task_id), []).append(tr)
        self._groups = {k: tuple(v) for k, v in groups.items()}

    def __len__(self) -> int:
        return len(self._traces)

    def __iter__(self):
        return iter(self._traces)

    @property
    def traces(self) -> tuple[ForceTrace, ...]:
        return self._traces

    @property
    def users(self) -> list[str]:
        return sorted({tr.user_id for tr in self._traces})

    @property
    def tasks(self) -> list[str]:
        return sorted({tr.task_id for tr in self._traces})

    def group(self, user_id: str, task_id: str) -> tuple[ForceTrace, ...]:
        return self._groups.get((user_id, task_id), ())

    def by_group(self) -> dict[tuple[str, str], tuple[ForceTrace, ...]]:
        return dict(self._groups)

    def subset(self, *, variant: str | None = None, user_id: str | None = None,
               task_id: str | None = None) -> "TraceDataset":
        kept = [
            tr for tr in self._traces
            if (variant is None or tr.variant == variant)
            and (user_id is None or tr.user_id == user_id)
            and (task_id is None or tr.task_id == task_id)
        ]
        return TraceDataset(kept)


def load_dataset(manifest: DatasetManifest, base_dir: Path | str) -> TraceDataset:
    """Load every manifest entry; any unreadable or invalid file aborts with its path."""
    base = Path(base_dir)
    traces = []
    for entry in manifest.entries:
        path = base / entry.path
        try:
            raw = path.read_bytes()
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc}") from None
        try:
            traces.append(
                parse_trace_csv(
                    raw,
                    user_id=entry.user,
                    task_id=entry.task,
                    trial_index=entry.trial,
                    variant=entry.variant,
                    sample_rate=manifest.sample_rate,
                )
            )
        except DataError as exc:
            raise DataError(f"{path}: {exc}") from None
    return TraceDataset(traces)


def save_dataset(dataset: TraceDataset, out_dir: Path | str,
                 sample_rate: float = DEFAULT_SAMPLE_RATE) -> DatasetManifest:
    """Write one CSV per trace plus a manifest.json into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for tr in dataset:
        name = f"{tr.user_id}_{tr.task_id}_{tr.trial_index:04d}_{tr.variant}.csv"
        (out / name).write_bytes(write_trace_csv(tr))
        entries.append(ManifestEntry(path=name, user=tr.user_id, task=tr.task_id,
                                     trial=tr.trial_index, variant=tr.variant))
    manifest = DatasetManifest(entries=entries, sample_rate=sample_rate)
    manifest.save(out / "manifest.json")
    return manifest


# --- synthetic generation -------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    """Controls the synthetic stand-in dataset.

    Each per-user signature parameter is a (low, high) range; every user
    receives one deterministic draw per parameter, stratified across users
    so that no two users collapse onto the same signature.
    """

    num_users: int = 5
    tasks: Sequence[str] = DEFAULT_TASKS
    trials_per_task: int = 10
    seed: int = 0
    duration_range: tuple[float, float] = (1.0, 2.0)        # seconds per trial
    press_force_range: tuple[float, float] = (0.5, 5.0)     # N, mean pen-down force
    press_variance_range: tuple[float, float] = (0.01, 0.25)  # N^2, slow pressure wobble
    tremor_freq_range: tuple[float, float] = (4.0, 12.0)    # Hz, physiological tremor band
    tremor_amp_range: tuple[float, float] = (0.05, 0.6)     # N
    speed_scale_range: tuple[float, float] = (0.7, 1.4)     # dimensionless stroke speed
    noise_std_range: tuple[float, float] = (0.01, 0.08)     # N, sensor white noise
    sample_rate: float = DEFAULT_SAMPLE_RATE

    def validate(self) -> None:
        if self.num_users < 2:
            raise ConfigError(f"num_users must be >= 2, got {self.num_users}")
        if self.trials_per_task < 1:
            raise ConfigError(f"trials_per_task must be >= 1, got {self.trials_per_task}")
        if not self.tasks:
            raise ConfigError("tasks list is empty")
        if len(set(self.tasks)) != len(self.tasks):
            raise ConfigError("task labels must be unique")
        if self.sample_rate <= 0:
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}")
        for name in ("duration_range", "press_force_range", "press_variance_range",
                     "tremor_freq_range", "tremor_amp_range", "speed_scale_range",
                     "noise_std_range"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ConfigError(f"{name} must satisfy 0 < low <= high, got ({lo}, {hi})")


_PARAM_RANGES = (
    "press_force_range",
    "press_variance_range",
    "tremor_freq_range",
    "tremor_amp_range",
    "speed_scale_range",
    "noise_std_range",
)

_N_HARMONICS = 4


class _StrokeTemplate:
    """Deterministic 2-D stroke for one task label: harmonic pen path with
    unit-RMS tangent and curvature.

    Each letter a..z carries its own stroke fundamental (number of direction
    reversals per stroke), which is what makes tasks distinguishable from
    the force dynamics alone; other labels derive a fundamental from a hash.
    """

    def __init__(self, task_id: str):
        digest = hashlib.sha256(task_id.encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        if len(task_id) == 1 and "a" <= task_id <= "z":
            fundamental = 1.0 + 0.5 * (ord(task_id) - ord("a"))
        else:
            fundamental = 1.0 + 3.0 * (digest[8] / 255.0)
        k = fundamental * np.arange(1, _N_HARMONICS + 1, dtype=np.float64)
        self.amp = rng.uniform(-1.0, 1.0, size=(2, _N_HARMONICS)) / np.arange(1, _N_HARMONICS + 1) ** 2
        self.phase = rng.uniform(0.0, 2.0 * np.pi, size=(2, _N_HARMONICS))
        self.k = k
        grid = np.linspace(0.0, 1.0, 512)
        tan, curv = self._raw_derivatives(grid)
        self.tan_scale = 1.0 / max(np.sqrt(np.mean(tan**2)), 1e-9)
        self.curv_scale = 1.0 / max(np.sqrt(np.mean(curv**2)), 1e-9)

    def _raw_derivatives(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        # u: (n,) progress in [0,1]; returns tangent and curvature, each (n, 2)
        arg = 2.0 * np.pi * self.k[None, None, :] * u[:, None, None] + self.phase[None, :, :]
        dcoef = self.amp * (2.0 * np.pi * self.k)
        ddcoef = self.amp * (2.0 * np.pi * self.k) ** 2
        tangent = np.sum(dcoef[None, :, :] * np.cos(arg), axis=2)
        curvature = -np.sum(ddcoef[None, :, :] * np.sin(arg), axis=2)
        return tangent, curvature

    def derivatives(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        tan, curv = self._raw_derivatives(u)
        return tan * self.tan_scale, curv * self.curv_scale


def _smoothstep(s: np.ndarray) -> np.ndarray:
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def _draw_user_params(cfg: SynthConfig) -> dict[str, np.ndarray]:
    """Stratified per-user draws: each parameter dimension assigns every user
    its own jittered stratum under a seeded, dimension-specific permutation."""
    rng = np.random.default_rng([cfg.seed, 0xA11CE])
    n = cfg.num_users
    out = {}
    for name in _PARAM_RANGES:
        lo, hi = getattr(cfg, name)
        order = rng.permutation(n).astype(np.float64)
        jitter = rng.uniform(0.2, 0.8, size=n)
        out[name] = lo + (order + jitter) * (hi - lo) / n
    return out


def _synth_trace(cfg: SynthConfig, template: _StrokeTemplate, params: dict[str, float],
                 user_id: str, task_id: str, trial_index: int,
                 rng: np.random.Generator) -> ForceTrace:
    rate = cfg.sample_rate
    duration = rng.uniform(*cfg.duration_range)
    n = max(4, int(round(duration * rate)))
    t = np.arange(n, dtype=np.float64) / rate

    speed = params["speed_scale_range"]
    progress = np.minimum(speed * t / duration, 1.0)
    tangent, curvature = template.derivatives(progress)
    moving = (speed * t / duration < 1.0).astype(np.float64)

    press_mean = params["press_force_range"]
    press_std = np.sqrt(params["press_variance_range"])
    # pen-down pressure tracks wall-clock trial time: ramp in, hold, ramp out
    edge = 0.1
    u_time = t / duration
    envelope = _smoothstep(u_time / edge) * _smoothstep((1.0 - u_time) / edge)
    wobble_freq = rng.uniform(0.3, 1.0)
    wobble_phase = rng.uniform(0.0, 2.0 * np.pi)
    press = press_mean * envelope + press_std * np.sin(2.0 * np.pi * wobble_freq * t + wobble_phase)

    tremor_phase = rng.uniform(0.0, 2.0 * np.pi)
    tremor = params["tremor_amp_range"] * np.sin(
        2.0 * np.pi * params["tremor_freq_range"] * t + tremor_phase
    )

    noise_std = params["noise_std_range"]
    noise = rng.normal(0.0, noise_std, size=(n, 3))

    # static friction keeps a floor under the drag force of light pressers
    stiffness = 0.2 + 0.3 * press_mean
    fx = stiffness * (speed * tangent[:, 0] * moving + 0.3 * curvature[:, 0]) + noise[:, 0]
    fy = stiffness * (speed * tangent[:, 1] * moving + 0.3 * curvature[:, 1]) + noise[:, 1]
    fz = press + tremor + noise[:, 2]

    forces = np.stack([fx, fy, fz], axis=1).astype(np.float32)
    return ForceTrace(
        timestamps=(np.arange(n, dtype=np.float64) / rate).astype(np.float32),
        forces=forces,
        user_id=user_id,
        task_id=task_id,
        trial_index=trial_index,
        variant="raw",
        sample_rate=rate,
    )


def synth_dataset(cfg: SynthConfig) -> TraceDataset:
    """Generate a labeled synthetic dataset; a pure function of the config."""
    cfg.validate()
    user_params = _draw_user_params(cfg)
    templates = {task: _StrokeTemplate(task) for task in cfg.tasks}
    width = max(2, len(str(cfg.num_users)))
    traces = []
    for ui in range(cfg.num_users):
        user_id = f"u{ui + 1:0{width}d}"
        params = {name: float(vals[ui]) for name, vals in user_params.items()}
        for tj, task_id in enumerate(cfg.tasks):
            for k in range(cfg.trials_per_task):
                rng = np.random.default_rng([cfg.seed, ui, tj, k])
                traces.append(
                    _synth_trace(cfg, templates[task_id], params, user_id, task_id, k, rng)
                )
    return TraceDataset(traces)
