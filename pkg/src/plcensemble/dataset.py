"""Process-log ingestion and a synthetic traffic-light PLC process.

The synthetic process stands in for the HMI historian export of a two-group
traffic-light controller. Each row is one HMI cycle:

    ns_green, ns_yellow, ns_red, ew_green, ew_yellow, ew_red   output lamps
    ns_request, ew_request                                      latched inputs
    cycle_timer, phase_timer                                    timing bits

Lamps and requests are 0/1. The two timers are integer tick counters divided
by ``cycle_length_ticks`` so they live in [0, 1). ``cycle_timer`` is a sawtooth
over the full cycle and ``phase_timer`` a sawtooth over the current phase, so
in normal operation ``cycle_timer - phase_timer`` equals the start tick of the
phase shown on the lamps.

Anomaly scenarios (tag -> mechanism):

    1  stuck output        an extra lamp of one group is lit (two lamps on)
    2  double green        both groups show green at once
    3  dropped transition  during a yellow phase the group already shows red
    4  inverted input      request bits inverted while a group is green
    5  premature skip      early in a green phase the lamps show the next phase
    6  timer freeze        cycle timer stuck at a stale value
    7  timer jitter        both timers offset by unequal random amounts

Scenarios 6 and 7 leave lamps and requests consistent with the true phase and
only break timing-bit relations.
"""

from __future__ import annotations

import configparser
import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyFile, InvalidConfig, MalformedCsv
from .seeding import derive_seed

logger = logging.getLogger(__name__)

FEATURE_NAMES: tuple[str, ...] = (
    "ns_green",
    "ns_yellow",
    "ns_red",
    "ew_green",
    "ew_yellow",
    "ew_red",
    "ns_request",
    "ew_request",
    "cycle_timer",
    "phase_timer",
)
N_SCENARIOS = 7
TIMING_SCENARIOS = (6, 7)
LABEL_COLUMN = "label"
SCENARIO_COLUMN = "scenario"

NORMAL = 0
ANOMALY = 1

# lamp pattern per phase: NS green, NS yellow, all red, EW green, EW yellow, all red
_PHASE_LAMPS = np.array(
    [
        [1, 0, 0, 0, 0, 1],
        [0, 1, 0, 0, 0, 1],
        [0, 0, 1, 0, 0, 1],
        [0, 0, 1, 1, 0, 0],
        [0, 0, 1, 0, 1, 0],
        [0, 0, 1, 0, 0, 1],
    ],
    dtype=np.int64,
)
_GREEN_PHASE = {0: 0, 1: 3}  # group -> phase index
_YELLOW_PHASE = {0: 1, 1: 4}
_REQUEST_PROB = 0.08

TRAIN_SIZE = 41580
TEST_SPECS: tuple[tuple[int, float], ...] = (
    (5000, 0.10),
    (7000, 0.10),
    (13130, 0.20),
    (15000, 0.30),
    (18270, 0.50),
)
SIGNAL_MIX = (0.2, 0.2, 0.2, 0.2, 0.2, 0.0, 0.0)
TIMING_MIX = (0.02, 0.02, 0.02, 0.02, 0.02, 0.45, 0.45)
DEFAULT_CYCLE = 60


@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("feature matrix must be 2-D")
        n, d = values.shape
        if n < 1 or d < 1:
            raise ValueError("feature matrix needs at least one sample and one feature")
        if not np.all(np.isfinite(values)):
            raise ValueError("feature matrix contains NaN or Inf")
        if len(self.feature_names) != d:
            raise ValueError(f"{len(self.feature_names)} feature names for {d} columns")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LabeledSet:
    """Samples with 0/1 labels (1 = anomaly) and scenario tags (0 = none)."""

    features: FeatureMatrix
    labels: np.ndarray
    scenario_tags: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        tags = np.asarray(self.scenario_tags, dtype=np.int64)
        n = self.features.n_samples
        if labels.shape != (n,) or tags.shape != (n,):
            raise ValueError("labels and scenario tags must have one entry per sample")
        if not np.isin(labels, (NORMAL, ANOMALY)).all():
            raise ValueError("labels must be 0 (normal) or 1 (anomaly)")
        if ((tags < 0) | (tags > N_SCENARIOS)).any():
            raise ValueError("scenario tags must be in 0..7")
        if (labels[tags > 0] != ANOMALY).any():
            raise ValueError("every scenario-tagged sample must be labeled anomaly")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "scenario_tags", tags)

    @property
    def X(self) -> np.ndarray:
        return self.features.values

    @property
    def n_samples(self) -> int:
        return self.features.n_samples

    @property
    def n_anomalies(self) -> int:
        return int(self.labels.sum())


@dataclass(frozen=True)
class SimConfig:
    n_records: int
    anomaly_fraction: float = 0.0
    scenario_mix: tuple[float, ...] = SIGNAL_MIX
    cycle_length_ticks: int = DEFAULT_CYCLE
    rng_seed: int = 0

    def __post_init__(self):
        mix = tuple(float(w) for w in self.scenario_mix)
        object.__setattr__(self, "scenario_mix", mix)
        if int(self.n_records) < 1:
            raise InvalidConfig("n_records must be >= 1")
        if not 0.0 <= self.anomaly_fraction <= 1.0:
            raise InvalidConfig("anomaly_fraction must be in [0, 1]")
        if len(mix) != N_SCENARIOS:
            raise InvalidConfig(f"scenario_mix needs {N_SCENARIOS} weights")
        if any(w < 0 for w in mix) or abs(math.fsum(mix) - 1.0) > 1e-9:
            raise InvalidConfig("scenario weights must be nonnegative and sum to 1")
        if self.cycle_length_ticks < 20:
            raise InvalidConfig("cycle_length_ticks must be >= 20")

    @classmethod
    def from_file(cls, path: str | Path) -> SimConfig:
        """Read a flat ``key = value`` file; ``scenario_mix`` is comma separated."""
        items = read_keyvalue_file(path)
        kwargs: dict = {}
        try:
            for key, raw in items.items():
                if key == "scenario_mix":
                    kwargs[key] = tuple(float(v) for v in raw.split(","))
                elif key == "anomaly_fraction":
                    kwargs[key] = float(raw)
                elif key in ("n_records", "cycle_length_ticks", "rng_seed"):
                    kwargs[key] = int(raw)
                else:
                    raise InvalidConfig(f"unknown SimConfig key {key!r}")
        except ValueError as exc:
            if isinstance(exc, InvalidConfig):
                raise
            raise InvalidConfig(str(exc)) from exc
        if "n_records" not in kwargs:
            raise InvalidConfig("n_records is required")
        return cls(**kwargs)


def read_keyvalue_file(path: str | Path) -> dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidConfig(f"cannot read config file {path}: {exc}") from exc
    try:
        parser.read_string("[root]\n" + text)
    except configparser.Error as exc:
        raise InvalidConfig(f"bad config file {path}: {exc}") from exc
    return dict(parser["root"])


# ---------------------------------------------------------------------------
# process model


@dataclass(frozen=True)
class CycleLayout:
    """Phase start ticks and durations for one controller cycle."""

    length: int
    starts: tuple[int, ...] = field(init=False)
    durations: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        L = self.length
        half = L // 2
        yellow = max(2, round(L / 15))
        red = max(1, round(L / 30))
        ns = (half - yellow - red, yellow, red)
        rest = L - half
        ew = (rest - yellow - red, yellow, red)
        durations = ns + ew
        starts = tuple(int(s) for s in np.concatenate([[0], np.cumsum(durations)[:-1]]))
        object.__setattr__(self, "durations", durations)
        object.__setattr__(self, "starts", starts)

    def phase_of(self, tick: np.ndarray) -> np.ndarray:
        return np.searchsorted(np.array(self.starts), np.asarray(tick) % self.length, side="right") - 1


def _rows(layout: CycleLayout, lamps, requests, cycle_ticks, phase_ticks) -> np.ndarray:
    L = float(layout.length)
    return np.column_stack(
        [
            np.asarray(lamps, dtype=np.float64),
            np.asarray(requests, dtype=np.float64),
            np.asarray(cycle_ticks, dtype=np.float64) / L,
            np.asarray(phase_ticks, dtype=np.float64) / L,
        ]
    )


def _normal_run(layout: CycleLayout, n: int, rng: np.random.Generator):
    offset = int(rng.integers(layout.length))
    ticks = (offset + np.arange(n)) % layout.length
    phases = layout.phase_of(ticks)
    lamps = _PHASE_LAMPS[phases]
    phase_ticks = ticks - np.array(layout.starts)[phases]
    presses = rng.random((n, 2)) < _REQUEST_PROB
    requests = np.zeros((n, 2), dtype=np.int64)
    latched = [0, 0]
    for i in range(n):
        for g in (0, 1):
            if lamps[i, 3 * g] == 1:
                latched[g] = 0
            elif presses[i, g]:
                latched[g] = 1
            requests[i, g] = latched[g]
    return ticks, phases, lamps, requests, phase_ticks


def _pick_tick(layout: CycleLayout, rng, phase: int | None = None, early: bool = False) -> int:
    if phase is None:
        return int(rng.integers(layout.length))
    dur = layout.durations[phase]
    span = max(1, dur // 2) if early else dur
    return layout.starts[phase] + int(rng.integers(span))


def _valid_requests(rng, lamps) -> list[int]:
    return [0 if lamps[3 * g] == 1 else int(rng.random() < 0.5) for g in (0, 1)]


def _looks_normal(layout: CycleLayout, lamps, cycle_tick: int, phase_tick: int) -> bool:
    # the two all-red clearance phases share a lamp pattern, so a shifted timer
    # can land on a row that is indistinguishable from normal operation
    phase = int(layout.phase_of(cycle_tick))
    return cycle_tick - phase_tick == layout.starts[phase] and bool(np.array_equal(lamps, _PHASE_LAMPS[phase]))


def _inject(scenario: int, layout: CycleLayout, rng: np.random.Generator):
    """Return (lamps, requests, cycle_tick, phase_tick) for one anomalous row."""
    L = layout.length
    if scenario in (1, 2, 6, 7):
        tick = _pick_tick(layout, rng)
    elif scenario == 3:
        tick = _pick_tick(layout, rng, _YELLOW_PHASE[int(rng.integers(2))])
    elif scenario in (4, 5):
        tick = _pick_tick(layout, rng, _GREEN_PHASE[int(rng.integers(2))], early=scenario == 5)
    else:
        raise ValueError(f"unknown scenario {scenario}")
    phase = int(layout.phase_of(tick))
    lamps = _PHASE_LAMPS[phase].copy()
    requests = _valid_requests(rng, lamps)
    cycle_tick = tick
    phase_tick = tick - layout.starts[phase]

    if scenario == 1:
        g = int(rng.integers(2))
        off = [3 * g + k for k in range(3) if lamps[3 * g + k] == 0]
        lamps[off[int(rng.integers(len(off)))]] = 1
    elif scenario == 2:
        lamps[:] = (1, 0, 0, 1, 0, 0)
        requests = [0, 0]
    elif scenario == 3:
        g = 0 if phase == _YELLOW_PHASE[0] else 1
        lamps[3 * g : 3 * g + 3] = (0, 0, 1)
    elif scenario == 4:
        requests = [1 - r for r in requests]
    elif scenario == 5:
        lamps = _PHASE_LAMPS[phase + 1].copy()
    elif scenario == 6:
        while True:
            lag = int(rng.integers(max(2, L // 10), L // 2 + 1))
            cycle_tick = (tick - lag) % L
            if not _looks_normal(layout, lamps, cycle_tick, phase_tick):
                break
    elif scenario == 7:
        jitter = max(3, L // 6)
        while True:
            dc, dp = (int(v) for v in rng.integers(-jitter, jitter + 1, size=2))
            c = min(max(tick + dc, 0), L - 1)
            p = min(max(phase_tick + dp, 0), L - 1)
            if not _looks_normal(layout, lamps, c, p):
                cycle_tick, phase_tick = c, p
                break
    return lamps, requests, cycle_tick, phase_tick


def _apportion(total: int, weights: tuple[float, ...]) -> np.ndarray:
    """Largest-remainder split of ``total`` over ``weights`` (ties -> lower index)."""
    w = np.asarray(weights, dtype=np.float64)
    exact = w * total
    counts = np.floor(exact).astype(np.int64)
    remainder = total - int(counts.sum())
    order = np.lexsort((np.arange(len(w)), -(exact - counts)))
    counts[order[:remainder]] += 1
    return counts


def simulate_tlight(config: SimConfig) -> LabeledSet:
    """Generate a labeled synthetic run of the traffic-light process."""
    layout = CycleLayout(config.cycle_length_ticks)
    rng = np.random.default_rng(config.rng_seed)
    n = int(config.n_records)
    ticks, phases, lamps, requests, phase_ticks = _normal_run(layout, n, rng)
    X = _rows(layout, lamps, requests, ticks, phase_ticks)

    labels = np.zeros(n, dtype=np.int64)
    tags = np.zeros(n, dtype=np.int64)
    n_anom = int(round(config.anomaly_fraction * n))
    if n_anom:
        idx = np.sort(rng.choice(n, size=n_anom, replace=False))
        counts = _apportion(n_anom, config.scenario_mix)
        scen = rng.permutation(np.repeat(np.arange(1, N_SCENARIOS + 1), counts))
        for i, s in zip(idx, scen):
            row_lamps, row_req, c, p = _inject(int(s), layout, rng)
            X[i] = _rows(layout, [row_lamps], [row_req], [c], [p])[0]
        labels[idx] = ANOMALY
        tags[idx] = scen
    return LabeledSet(FeatureMatrix(X, FEATURE_NAMES), labels, tags)


def constraint_violations(X: np.ndarray, cycle_length_ticks: int = DEFAULT_CYCLE) -> dict[str, np.ndarray]:
    """Per-row boolean masks of violated process constraints.

    ``one_hot``, ``double_green`` and ``request_latch`` are signal constraints;
    ``counter_range``, ``timer_relation`` and ``lamp_timer`` involve the timing bits.
    """
    layout = CycleLayout(cycle_length_ticks)
    X = np.asarray(X, dtype=np.float64)
    lamps = X[:, :6]
    req = X[:, 6:8]
    cyc = np.rint(X[:, 8] * cycle_length_ticks).astype(np.int64)
    ph = np.rint(X[:, 9] * cycle_length_ticks).astype(np.int64)
    in_range = (cyc >= 0) & (cyc <= cycle_length_ticks) & (ph >= 0) & (ph <= cycle_length_ticks)
    phase = layout.phase_of(np.clip(cyc, 0, cycle_length_ticks - 1))
    expected = _PHASE_LAMPS[phase]
    return {
        "one_hot": (lamps[:, 0:3].sum(axis=1) != 1) | (lamps[:, 3:6].sum(axis=1) != 1),
        "double_green": (lamps[:, 0] == 1) & (lamps[:, 3] == 1),
        "request_latch": ((lamps[:, 0] == 1) & (req[:, 0] == 1)) | ((lamps[:, 3] == 1) & (req[:, 1] == 1)),
        "counter_range": ~in_range,
        "timer_relation": cyc - ph != np.array(layout.starts)[phase],
        "lamp_timer": (lamps != expected).any(axis=1),
    }


SIGNAL_CONSTRAINTS = ("one_hot", "double_green", "request_latch")
TIMING_CONSTRAINTS = ("counter_range", "timer_relation", "lamp_timer")


def standard_test_configs(rng_seed: int, cycle_length_ticks: int = DEFAULT_CYCLE) -> list[SimConfig]:
    """The five test-set specifications (sizes and anomaly fractions)."""
    configs = []
    for i, (n, frac) in enumerate(TEST_SPECS, start=1):
        configs.append(
            SimConfig(
                n_records=n,
                anomaly_fraction=frac,
                scenario_mix=TIMING_MIX if i >= 4 else SIGNAL_MIX,
                cycle_length_ticks=cycle_length_ticks,
                rng_seed=derive_seed(rng_seed, f"test{i}"),
            )
        )
    return configs


def make_paper_splits(rng_seed: int, cycle_length_ticks: int = DEFAULT_CYCLE) -> tuple[LabeledSet, list[LabeledSet]]:
    train = simulate_tlight(
        SimConfig(
            n_records=TRAIN_SIZE,
            anomaly_fraction=0.0,
            cycle_length_ticks=cycle_length_ticks,
            rng_seed=derive_seed(rng_seed, "train"),
        )
    )
    tests = [simulate_tlight(cfg) for cfg in standard_test_configs(rng_seed, cycle_length_ticks)]
    return train, tests


# ---------------------------------------------------------------------------
# CSV


def _parse_cell(text: str, lineno: int) -> float:
    t = text.strip()
    low = t.lower()
    if low == "true":
        return 1.0
    if low == "false":
        return 0.0
    try:
        value = float(t)
    except ValueError:
        raise MalformedCsv(f"line {lineno}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise MalformedCsv(f"line {lineno}: non-finite value {text!r}")
    return value


def load_csv(path: str | Path, label_column: str | None = LABEL_COLUMN) -> LabeledSet:
    """Read an HMI export. Missing label column means every row is normal.

    A ``scenario`` column, when present, is read back as scenario tags.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFile(f"{path} is empty") from None
        header = [h.strip() for h in header]
        rows = [row for row in reader if row]
    if not rows:
        raise EmptyFile(f"{path} has a header but no data rows")
    width = len(header)
    label_idx = header.index(label_column) if label_column and label_column in header else None
    scen_idx = header.index(SCENARIO_COLUMN) if SCENARIO_COLUMN in header else None
    feat_idx = [j for j in range(width) if j not in (label_idx, scen_idx)]
    if not feat_idx:
        raise MalformedCsv(f"{path} has no feature columns")

    X = np.empty((len(rows), len(feat_idx)), dtype=np.float64)
    labels = np.zeros(len(rows), dtype=np.int64)
    tags = np.zeros(len(rows), dtype=np.int64)
    for i, row in enumerate(rows):
        lineno = i + 2
        if len(row) != width:
            raise MalformedCsv(f"line {lineno}: expected {width} cells, got {len(row)}")
        X[i] = [_parse_cell(row[j], lineno) for j in feat_idx]
        if label_idx is not None:
            lab = _parse_cell(row[label_idx], lineno)
            if lab not in (0.0, 1.0):
                raise MalformedCsv(f"line {lineno}: label must be 0 or 1")
            labels[i] = int(lab)
        if scen_idx is not None:
            tags[i] = int(_parse_cell(row[scen_idx], lineno))
    try:
        return LabeledSet(FeatureMatrix(X, tuple(header[j] for j in feat_idx)), labels, tags)
    except ValueError as exc:
        raise MalformedCsv(f"{path}: {exc}") from exc


def write_csv(path: str | Path, data: LabeledSet, with_scenarios: bool | None = None) -> None:
    """Write ``data`` with a trailing label column; values at 17 significant digits."""
    if with_scenarios is None:
        with_scenarios = bool(data.scenario_tags.any())
    header = list(data.features.feature_names)
    if with_scenarios:
        header.append(SCENARIO_COLUMN)
    header.append(LABEL_COLUMN)
    lines = [",".join(header)]
    for row, lab, tag in zip(data.X, data.labels, data.scenario_tags):
        cells = [format(v, ".17g") for v in row]
        if with_scenarios:
            cells.append(str(int(tag)))
        cells.append(str(int(lab)))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
