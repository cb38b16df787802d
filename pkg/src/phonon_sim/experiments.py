"""Declarative reproductions of the simulated bright/dark-state curves.

An :class:`ExperimentConfig` names one experiment from :data:`CATALOGUE` and
carries everything needed to rerun it. :func:`run` turns it into a
:class:`ResultSet`, a plain table plus metadata that echoes the full config,
so any result can be regenerated from its own sidecar.
"""
from __future__ import annotations

import csv
import enum
import hashlib
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .dynamics import (SimParams, Trajectory, collapse_operators, evolve, first_peak,
                       heisenberg_observable, interaction_hamiltonian, readout,
                       trajectory_peak, UnitaryPropagator)
from .hilbert import (UP, DensityOp, PureState, SpaceConfig, State, boundary_population,
                      level_population, level_projector, mode_marginals, with_levels)
from .sequences import (PulseKind, SequenceSpec, coherent_program, run_sequence, sequence_from_dict,
                        sequence_to_dict, single_mode_program, single_phonon_program,
                        upsilon_program)
from .tomography import (PhononDistribution, RabiModel, Sideband, fit_coherent_alpha,
                         fit_distribution, synthetic_trace)

SCHEMA_VERSION = 1


class ExperimentName(str, enum.Enum):
    PHASE_SCAN_FOCK = "PHASE_SCAN_FOCK"
    RABI_FOCK = "RABI_FOCK"
    DISTRIBUTIONS_FOCK = "DISTRIBUTIONS_FOCK"
    RABI_COHERENT = "RABI_COHERENT"
    RABI_UPSILON = "RABI_UPSILON"
    PHASE_SCAN_BOTH = "PHASE_SCAN_BOTH"
    RABI_EXCITED = "RABI_EXCITED"
    TOMO_ROUNDTRIP = "TOMO_ROUNDTRIP"


CATALOGUE = {
    ExperimentName.PHASE_SCAN_FOCK: "Fig. 3(a)  single-phonon state scanned from bright to dark by phase",
    ExperimentName.RABI_FOCK: "Fig. 4(a)  Rabi oscillations of |B1>, |D1> and |0,1> with the ion in |down>",
    ExperimentName.DISTRIBUTIONS_FOCK: "Fig. 4(b-e)  per-mode phonon distributions after a bichromatic pi pulse",
    ExperimentName.RABI_COHERENT: "Fig. 5  Rabi oscillations of two-mode coherent bright, dark and single-mode states",
    ExperimentName.RABI_UPSILON: "Fig. 6(a)  Rabi oscillations of the Upsilon state for phase 0, pi/2, pi",
    ExperimentName.PHASE_SCAN_BOTH: "Fig. 6(b)  fixed-duration phase scans of the Upsilon and coherent states",
    ExperimentName.RABI_EXCITED: "Fig. 10  Rabi oscillations of |B1>, |D1> and |0,1> with the ion in |up>",
    ExperimentName.TOMO_ROUNDTRIP: "Figs. 7-9  sideband tomography round trip on ideal distributions",
}


class TableRow(str, enum.Enum):
    FOCK = "FOCK"
    COHERENT = "COHERENT"
    UPSILON = "UPSILON"


def table1_defaults(row: TableRow | str) -> SimParams:
    """Fitted coupling, dephasing and readout parameters for one family of curves."""
    row = TableRow(row)
    if row is TableRow.FOCK:
        return SimParams.symmetric(5.2, gamma_m=0.0, gamma_e=1.5, contrast=0.94, offset=0.03)
    if row is TableRow.COHERENT:
        return SimParams.symmetric(7.1, gamma_m=0.11, gamma_e=3.8, contrast=1.0, offset=0.0,
                                   n_th=0.025)
    return SimParams.symmetric(7.3, gamma_m=0.28, gamma_e=2.9, contrast=0.68, offset=0.11)


_DEFAULT_ROW = {
    ExperimentName.PHASE_SCAN_FOCK: TableRow.FOCK,
    ExperimentName.RABI_FOCK: TableRow.FOCK,
    ExperimentName.DISTRIBUTIONS_FOCK: TableRow.FOCK,
    ExperimentName.RABI_EXCITED: TableRow.FOCK,
    ExperimentName.TOMO_ROUNDTRIP: TableRow.FOCK,
    ExperimentName.RABI_COHERENT: TableRow.COHERENT,
    ExperimentName.RABI_UPSILON: TableRow.UPSILON,
    ExperimentName.PHASE_SCAN_BOTH: TableRow.UPSILON,
}

# Fock cutoff per mode; alpha = 1 coherent states need ~10 to keep the tail below 1e-6
_DEFAULT_CUTOFF = {
    ExperimentName.RABI_COHERENT: 10,
    ExperimentName.PHASE_SCAN_BOTH: 10,
    ExperimentName.TOMO_ROUNDTRIP: 10,
}

_PHASE_SCANS = {ExperimentName.PHASE_SCAN_FOCK, ExperimentName.PHASE_SCAN_BOTH}


class ExperimentError(RuntimeError):
    pass


def _strict_keys(d: dict, allowed, where: str) -> None:
    if not isinstance(d, dict):
        raise ValueError(f"{where} must be a mapping")
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ValueError(f"unknown config key {extra[0]!r} in {where}")


def bright_coupling(params: SimParams) -> float:
    """Rate (kHz) of the single-phonon bright-state oscillation, sqrt(g1^2 + g2^2)."""
    return math.hypot(params.g1, params.g2)


@dataclass(frozen=True)
class ScanSpec:
    """Uniform grid over durations (ms) or phases (rad).

    ``duration`` fixes the bichromatic pulse length of a phase scan;
    ``reference_duration`` does the same for the coherent series of the
    combined scan. ``None`` means "derive from the dynamics".
    """
    kind: str
    start: float
    stop: float
    points: int = 101
    duration: Optional[float] = None
    reference_duration: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("time", "phase"):
            raise ValueError(f"scan kind must be 'time' or 'phase', got {self.kind!r}")
        if int(self.points) != self.points or self.points < 1:
            raise ValueError("scan needs at least one point")
        object.__setattr__(self, "points", int(self.points))
        if self.points > 1 and not self.stop > self.start:
            raise ValueError("scan stop must exceed start")
        if self.kind == "time" and self.start < 0:
            raise ValueError("time scans start at t >= 0")
        for name in ("duration", "reference_duration"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be >= 0")

    def grid(self) -> np.ndarray:
        if self.points == 1:
            return np.array([float(self.start)])
        return np.linspace(self.start, self.stop, self.points)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ScanSpec":
        _strict_keys(d, [f.name for f in fields(cls)], "scan")
        return cls(**d)


@dataclass(frozen=True)
class TomographySettings:
    """Synthetic sideband-tomography settings. ``shots = 0`` means noiseless traces."""
    eta: float = 0.041
    shots: int = 200
    nmax: int = 7
    decay: float = 0.0
    decay_exponent: float = 0.0
    mode: int = 1

    def __post_init__(self):
        if self.shots < 0 or self.nmax < 1 or self.mode not in (1, 2):
            raise ValueError("tomography needs shots >= 0, nmax >= 1 and mode 1 or 2")

    def model(self, params: SimParams) -> RabiModel:
        g = params.g1 if self.mode == 1 else params.g2
        # the sideband coupling g is omega0 * eta
        return RabiModel(g / self.eta, self.eta, self.decay, self.decay_exponent)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "TomographySettings":
        _strict_keys(d, [f.name for f in fields(cls)], "tomography")
        return cls(**d)


def _params_from_dict(d: dict, where: str = "params") -> SimParams:
    _strict_keys(d, SimParams.__dataclass_fields__, where)
    if "g" in d:
        raise ValueError(f"unknown config key 'g' in {where}; use g1 and g2")
    return SimParams(**d)


def default_scan(name: ExperimentName, params: SimParams) -> ScanSpec:
    if name in _PHASE_SCANS:
        duration = 1 / (4 * bright_coupling(params)) if name is ExperimentName.PHASE_SCAN_FOCK else None
        return ScanSpec("phase", 0.0, 4 * math.pi, 101, duration=duration)
    if name is ExperimentName.TOMO_ROUNDTRIP:
        # two periods of the n = 0 blue sideband
        return ScanSpec("time", 0.0, 2 / params.g1, 101)
    # two periods of the single-phonon bright-state population
    return ScanSpec("time", 0.0, 1 / bright_coupling(params), 101)


@dataclass(frozen=True)
class ExperimentConfig:
    name: ExperimentName
    params: SimParams
    space: SpaceConfig
    scan: ScanSpec
    seed: int = 0
    phi0: float = 0.0
    alpha: float = 1.0
    tomography: TomographySettings = field(default_factory=TomographySettings)
    reference_params: Optional[SimParams] = None
    preparation: Optional[SequenceSpec] = None
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        object.__setattr__(self, "name", ExperimentName(self.name))
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {self.schema_version}")
        want = "phase" if self.name in _PHASE_SCANS else "time"
        if self.scan.kind != want:
            raise ValueError(f"{self.name.value} needs a {want} scan, got {self.scan.kind}")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")

    @classmethod
    def default(cls, name: ExperimentName | str, **overrides) -> "ExperimentConfig":
        name = ExperimentName(name)
        params = overrides.pop("params", None) or table1_defaults(_DEFAULT_ROW[name])
        cutoff = _DEFAULT_CUTOFF.get(name, 3)
        space = overrides.pop("space", None) or SpaceConfig(cutoff, cutoff, 2)
        scan = overrides.pop("scan", None) or default_scan(name, params)
        return cls(name, params, space, scan, **overrides)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "name": self.name.value,
            "params": self.params.to_dict(),
            "space": self.space.to_dict(),
            "scan": self.scan.to_dict(),
            "seed": self.seed,
            "phi0": self.phi0,
            "alpha": self.alpha,
            "tomography": self.tomography.to_dict(),
            "reference_params": None if self.reference_params is None
            else self.reference_params.to_dict(),
            "preparation": None if self.preparation is None
            else sequence_to_dict(self.preparation),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        """Build a config, filling anything unspecified from the experiment's defaults.

        Unknown keys at any level raise ``ValueError`` naming the key.
        """
        _strict_keys(d, [f.name for f in fields(cls)], "config")
        if "name" not in d:
            raise ValueError("config needs an experiment 'name'")
        name = ExperimentName(d["name"])
        if d.get("params") is not None:
            base = table1_defaults(_DEFAULT_ROW[name]).to_dict()
            _strict_keys(d["params"], base, "params")
            base.update(d["params"])
            params = _params_from_dict(base)
        else:
            params = table1_defaults(_DEFAULT_ROW[name])
        kw = {"params": params}
        if d.get("space") is not None:
            kw["space"] = SpaceConfig.from_dict(_checked(d["space"], ("n1", "n2", "levels"), "space"))
        if d.get("scan") is not None:
            base = default_scan(name, params).to_dict()
            _strict_keys(d["scan"], base, "scan")
            base.update(d["scan"])
            kw["scan"] = ScanSpec.from_dict(base)
        for key in ("seed", "phi0", "alpha", "schema_version"):
            if key in d:
                kw[key] = d[key]
        if d.get("tomography") is not None:
            kw["tomography"] = TomographySettings.from_dict(d["tomography"])
        if d.get("reference_params") is not None:
            kw["reference_params"] = _params_from_dict(d["reference_params"], "reference_params")
        if d.get("preparation") is not None:
            kw["preparation"] = sequence_from_dict(d["preparation"])
        if "seed" in kw and int(kw["seed"]) != kw["seed"]:
            raise ValueError("seed must be an integer")
        return cls.default(name, **kw)

    def with_cutoffs(self, n1: int, n2: int) -> "ExperimentConfig":
        return replace(self, space=SpaceConfig(n1, n2, self.space.electronic_levels))

    def config_hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:12]


def _checked(d: dict, allowed, where: str) -> dict:
    _strict_keys(d, allowed, where)
    return d


@dataclass
class ResultSet:
    name: str
    columns: list
    units: list
    rows: list
    metadata: dict

    def __post_init__(self):
        if len(self.columns) != len(self.units):
            raise ValueError("every column needs a unit")
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError("row length does not match the columns")

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([row[i] for row in self.rows])

    def stem(self) -> str:
        return f"{self.name.lower()}-{self.metadata['config_hash']}"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({
            "name": self.name,
            "columns": [{"name": c, "unit": u} for c, u in zip(self.columns, self.units)],
            "rows": [list(r) for r in self.rows],
            "metadata": self.metadata,
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ResultSet":
        d = json.loads(text)
        cols = d["columns"]
        return cls(d["name"], [c["name"] for c in cols], [c["unit"] for c in cols],
                   [tuple(r) for r in d["rows"]], d["metadata"])

    def sidecar(self) -> str:
        return json.dumps({
            "name": self.name,
            "columns": [{"name": c, "unit": u} for c, u in zip(self.columns, self.units)],
            "metadata": self.metadata,
        }, indent=1)

    def write(self, out_dir: Path | str, fmt: str = "csv") -> list[Path]:
        """Write the table (and a ``.meta.json`` sidecar for CSV) into ``out_dir``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if fmt == "csv":
            data, meta = out / f"{self.stem()}.csv", out / f"{self.stem()}.meta.json"
            data.write_text(self.to_csv())
            meta.write_text(self.sidecar())
            return [data, meta]
        if fmt == "json":
            data = out / f"{self.stem()}.json"
            data.write_text(self.to_json())
            return [data]
        raise ValueError(f"unknown output format {fmt!r}")


# --- helpers ---------------------------------------------------------------------

def thread_count() -> int:
    raw = os.environ.get("PHONON_SIM_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"PHONON_SIM_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ValueError("PHONON_SIM_THREADS must be >= 1")
    return n


def _map(fn: Callable, items: list) -> list:
    """Order-preserving map over independent work items, threaded when allowed."""
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _prep_space(space: SpaceConfig, levels: int = 2) -> SpaceConfig:
    return SpaceConfig(space.n_max_1, space.n_max_2, max(levels, space.electronic_levels))


def _prepare(space: SpaceConfig, seq: SequenceSpec, levels: int = 2) -> State:
    state, _ = run_sequence(_prep_space(space, levels), seq)
    return with_levels(state, space.electronic_levels)


def _max_boundary(traj: Trajectory) -> float:
    return max(boundary_population(s) for s in traj.states)


def _model(space: SpaceConfig, params: SimParams):
    return interaction_hamiltonian(space, params), collapse_operators(space, params)


def _rabi_table(config: ExperimentConfig):
    """Evolve each prepared state over the time grid and tabulate raw and reported P(up)."""
    params = config.params
    series = rabi_series(config)
    H, collapse = _model(config.space, params)
    times = config.scan.grid()
    labels = list(series)

    def one(label):
        return evolve(H, collapse, prepared_state(config, series[label]), times)

    trajs = dict(zip(labels, _map(one, labels)))
    columns, units = ["t_ms"], ["ms"]
    data = [times]
    for label in labels:
        columns += [label, f"{label}_raw"]
        units += ["1", "1"]
        data += [readout(trajs[label].p_up, params), trajs[label].p_up]
    rows = [tuple(float(v[i]) for v in data) for i in range(len(times))]
    meta = {"truncation_boundary_population": {k: _max_boundary(t) for k, t in trajs.items()},
            "max_trace_drift": {k: float(np.max(t.trace_err)) for k, t in trajs.items()}}
    return columns, units, rows, meta


def _ideal_transfer_time(space: SpaceConfig, params: SimParams, state: PureState,
                         t_max: float) -> float:
    """First maximum of the population moved out of the initial electronic level, at zero dephasing."""
    ideal = replace(params, gamma_m=0.0, gamma_e=0.0)
    prop = UnitaryPropagator(interaction_hamiltonian(space, ideal))
    if level_population(state, UP) > 0.5:
        return first_peak(lambda t: 1 - prop.p_up(state, t), t_max)[0]
    return first_peak(lambda t: prop.p_up(state, t), t_max)[0]


def _simulated_first_peak(space: SpaceConfig, params: SimParams, state: State,
                          t_max: float, points: int = 41) -> float:
    H, collapse = _model(space, params)
    traj = evolve(H, collapse, state, np.linspace(0.0, t_max, points))
    return trajectory_peak(H, collapse, traj)[0]


def _phase_series(space: SpaceConfig, params: SimParams, duration: float,
                  prepare: Callable[[float], State], phases: np.ndarray) -> np.ndarray:
    """P(up) after a fixed-duration pulse for each prepared phase, via the adjoint generator."""
    H, collapse = _model(space, params)
    obs = heisenberg_observable(H, collapse, level_projector(space, UP), duration)

    def one(phi):
        state = prepare(phi)
        if isinstance(state, PureState):
            return float(np.real(np.vdot(state.amplitudes, obs @ state.amplitudes)))
        return float(np.real(np.trace(obs @ state.matrix)))

    return np.array(_map(one, list(phases)))


# --- experiments -------------------------------------------------------------------

def rabi_series(config: ExperimentConfig) -> dict:
    """Preparation programs of a Rabi-type experiment, keyed by column label."""
    name, a, n_th = config.name, config.alpha, config.params.n_th
    if name is ExperimentName.RABI_FOCK:
        series = {"bright": single_phonon_program(0.0), "dark": single_phonon_program(math.pi),
                  "single": single_mode_program(2)}
    elif name is ExperimentName.RABI_EXCITED:
        series = {"bright": single_phonon_program(0.0, final_carrier=False),
                  "dark": single_phonon_program(math.pi, final_carrier=False),
                  "single": single_mode_program(2, excited=True)}
    elif name is ExperimentName.RABI_COHERENT:
        series = {"bright": coherent_program(a, a, n_th), "dark": coherent_program(a, -a, n_th),
                  "single": coherent_program(a, 0.0, n_th)}
    elif name is ExperimentName.RABI_UPSILON:
        series = {"upsilon_0": upsilon_program(0.0, 0.0),
                  "upsilon_pi_2": upsilon_program(math.pi / 2, math.pi / 2),
                  "upsilon_pi": upsilon_program(math.pi, math.pi)}
    else:
        raise ValueError(f"{name.value} is not a Rabi-oscillation experiment")
    if config.preparation is not None:
        series["custom"] = config.preparation
    return series


def prepared_state(config: ExperimentConfig, seq: SequenceSpec) -> State:
    levels = 3 if any(getattr(p, "kind", None) is PulseKind.CARRIER_B for p in seq.pulses) else 2
    return _prepare(config.space, seq, levels)


def rabi_first_peaks(config: ExperimentConfig, labels=None) -> dict:
    """First maximum of the reported P(up) per series: (time in ms, height).

    Each curve is propagated on the config's time grid and the sampled
    maximum is refined by local re-propagation. Series without an interior
    maximum map to ``None``.
    """
    series = rabi_series(config)
    labels = list(series) if labels is None else list(labels)
    H, collapse = _model(config.space, config.params)
    times = config.scan.grid()

    def one(label):
        traj = evolve(H, collapse, prepared_state(config, series[label]), times)
        try:
            t, p = trajectory_peak(H, collapse, traj)
        except ValueError:
            return None
        return t, float(readout(p, config.params))

    return dict(zip(labels, _map(one, labels)))


def _run_rabi_excited(config: ExperimentConfig):
    columns, units, rows, meta = _rabi_table(config)
    series = rabi_series(config)
    t_max = config.scan.grid()[-1]
    meta["ideal_transfer_time_ms"] = {
        k: _ideal_transfer_time(config.space, config.params,
                                prepared_state(config, series[k]), t_max)
        for k in ("bright", "dark", "single")}
    return columns, units, rows, meta


def _run_rabi_upsilon(config: ExperimentConfig):
    columns, units, rows, meta = _rabi_table(config)
    meta["preparation_weight"] = {
        k: run_sequence(_prep_space(config.space, 3), seq)[0].weight
        for k, seq in rabi_series(config).items()}
    return columns, units, rows, meta


def _run_phase_scan_fock(config: ExperimentConfig):
    space, params = config.space, config.params
    phases = config.scan.grid()
    duration = config.scan.duration
    if duration is None:
        duration = 1 / (4 * bright_coupling(params))
    p = _phase_series(space, params, duration,
                      lambda phi: _prepare(space, single_phonon_program(phi - config.phi0)), phases)
    rows = [(float(f), float(r), float(q)) for f, r, q in zip(phases, readout(p, params), p)]
    return (["phi_rad", "p_up", "p_up_raw"], ["rad", "1", "1"], rows,
            {"pulse_duration_ms": duration})


def _run_phase_scan_both(config: ExperimentConfig):
    space, params = config.space, config.params
    ref = config.reference_params or table1_defaults(TableRow.COHERENT)
    phases = config.scan.grid()
    a = config.alpha

    def upsilon(phi):
        return _prepare(space, upsilon_program(phi, phi), levels=3)

    def coherent(phi):
        return _prepare(space, coherent_program(a, np.exp(1j * phi) * a, ref.n_th))

    t_u = config.scan.duration
    if t_u is None:
        t_u = _simulated_first_peak(space, params, upsilon(math.pi),
                                    1 / (2 * bright_coupling(params)))
    t_c = config.scan.reference_duration
    if t_c is None:
        t_c = _simulated_first_peak(space, ref, coherent(0.0), 1 / (2 * bright_coupling(ref)))
    pu = _phase_series(space, params, t_u, lambda phi: upsilon(phi - config.phi0), phases)
    pc = _phase_series(space, ref, t_c, lambda phi: coherent(phi - config.phi0), phases)
    rows = [(float(f), float(x), float(y), float(z), float(w)) for f, x, y, z, w in
            zip(phases, readout(pu, params), pu, readout(pc, ref), pc)]
    return (["phi_rad", "upsilon", "upsilon_raw", "coherent", "coherent_raw"],
            ["rad", "1", "1", "1", "1"], rows,
            {"pulse_duration_ms": {"upsilon": t_u, "coherent": t_c},
             "reference_params": ref.to_dict()})


def _run_distributions_fock(config: ExperimentConfig):
    space, params = config.space, config.params
    ideal = replace(params, gamma_m=0.0, gamma_e=0.0)
    t_max = config.scan.grid()[-1]
    prepared = {
        "bright_down": _prepare(space, single_phonon_program(0.0)),
        "dark_down": _prepare(space, single_phonon_program(math.pi)),
        "bright_up": _prepare(space, single_phonon_program(0.0, final_carrier=False)),
        "dark_up": _prepare(space, single_phonon_program(math.pi, final_carrier=False)),
    }
    tau_b = _ideal_transfer_time(space, params, prepared["bright_down"], t_max)
    durations = {
        "bright_down": tau_b,
        "dark_down": tau_b,
        "bright_up": _ideal_transfer_time(space, params, prepared["bright_up"], t_max),
        "dark_up": _ideal_transfer_time(space, params, prepared["dark_up"], t_max),
    }
    H, collapse = _model(space, params)
    H0 = interaction_hamiltonian(space, ideal)

    def one(case):
        t = durations[case]
        state = prepared[case]
        after = evolve(H, collapse, state, [t]).states[-1]
        ideal_after = evolve(H0, [], state, [t]).states[-1]
        return mode_marginals(state), mode_marginals(after), mode_marginals(ideal_after)

    cases = list(prepared)
    results = dict(zip(cases, _map(one, cases)))
    rows = []
    for case in cases:
        before, after, ideal_m = results[case]
        for mode in (0, 1):
            for n in range(len(after[mode])):
                rows.append((case, mode + 1, n, float(before[mode][n]), float(after[mode][n]),
                             float(ideal_m[mode][n])))
    return (["case", "mode", "n", "p_before", "p_after", "p_ideal"],
            ["", "", "phonons", "1", "1", "1"], rows, {"pulse_duration_ms": durations})


def _run_tomo_roundtrip(config: ExperimentConfig):
    space, params, tomo = config.space, config.params, config.tomography
    a = config.alpha
    truths = {
        "ground": _prepare(space, SequenceSpec(())),
        "bright1": _prepare(space, single_phonon_program(0.0)),
        "upsilon": _prepare(space, upsilon_program(0.0, 0.0), levels=3),
        "coherent": _prepare(space, coherent_program(a, a, params.n_th)),
    }
    model = tomo.model(params)
    times = config.scan.grid()
    rng = np.random.default_rng(config.seed)
    shots = tomo.shots or None
    rows, meta = [], {"omega0_khz": model.omega0, "truth_tail": {}}
    for label, state in truths.items():
        marg = mode_marginals(state)[tomo.mode - 1]
        dist = PhononDistribution(marg / marg.sum())
        rsb = synthetic_trace(dist, model, Sideband.RSB, times, tomo.mode, shots, rng)
        bsb = synthetic_trace(dist, model, Sideband.BSB, times, tomo.mode, shots, rng)
        fit = fit_distribution(rsb, bsb, model, nmax=tomo.nmax, seed=config.seed)
        meta["truth_tail"][label] = float(marg[tomo.nmax + 1:].sum())
        for n in range(tomo.nmax + 1):
            p_true = float(marg[n]) if n < len(marg) else 0.0
            rows.append((label, n, p_true, float(fit.distribution.probs[n]), float(fit.stderr[n])))
        if label == "coherent":
            alpha_fit, nth_fit = fit_coherent_alpha(bsb, model, seed=config.seed)
            meta["coherent_fit"] = {"alpha": alpha_fit, "n_th": nth_fit}
    return (["state", "n", "p_true", "p_fit", "stderr"], ["", "phonons", "1", "1", "1"],
            rows, meta)


_RUNNERS = {
    ExperimentName.PHASE_SCAN_FOCK: _run_phase_scan_fock,
    ExperimentName.RABI_FOCK: _rabi_table,
    ExperimentName.DISTRIBUTIONS_FOCK: _run_distributions_fock,
    ExperimentName.RABI_COHERENT: _rabi_table,
    ExperimentName.RABI_UPSILON: _run_rabi_upsilon,
    ExperimentName.PHASE_SCAN_BOTH: _run_phase_scan_both,
    ExperimentName.RABI_EXCITED: _run_rabi_excited,
    ExperimentName.TOMO_ROUNDTRIP: _run_tomo_roundtrip,
}


def run(config: ExperimentConfig) -> ResultSet:
    """Execute one experiment; deterministic for a given config."""
    try:
        columns, units, rows, extra = _RUNNERS[config.name](config)
    except Exception as exc:
        raise ExperimentError(f"{config.name.value} failed: {exc}") from exc
    meta = {
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "code_version": __version__,
        "cutoffs": [config.space.n_max_1, config.space.n_max_2],
    }
    meta.update(extra)
    return ResultSet(config.name.value, columns, units, rows, _jsonable(meta))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def regenerate(metadata: dict) -> ResultSet:
    """Rerun an experiment from the metadata of a previous result."""
    return run(ExperimentConfig.from_dict(metadata["config"]))
