"""Command-line front end: JSON config in, CSV tables out.

Commands: ``derive``, ``trace``, ``gate-error``, ``sweep-temp``, ``manybody``
and ``compare``. Exit status is 0 on success, 2 for configuration errors and
3 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from math import log10, pi
from pathlib import Path
from typing import Any, Mapping, Sequence as SequenceT

import numpy as np

from . import echogate, errorbudget, manybody
from .echogate import GateParams
from .hilbert import NumericalError, basis_state
from .pulsemodel import DEFAULT_SUBSTEPS, Sequence, run_sequence
from .units import ordinary

__all__ = ["COLUMNS", "ConfigError", "CsvTable", "RunConfig", "main", "parse_config", "run_command"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

LOG_FLOOR = 1e-300

COLUMNS: dict[str, tuple[str, ...]] = {
    "derive": (
        "V0_MHz", "V1_MHz", "Vplus_MHz", "Omega_c_MHz", "Omega_t2_MHz", "Omega_t3_MHz",
        "Omega_t4_MHz", "kappa", "T_wait_ns", "t1_ns", "t2_ns", "t3_ns", "t4_ns", "t5_ns",
        "t_gap_ns", "rydberg_time_ns", "phi4_rad", "blockade_ratio_t2", "blockade_ratio_t3",
        "Omega_bar_t2_MHz", "Omega_bar_t3_MHz", "eps_plus_MHz", "eps_minus_MHz",
        "kappa2", "kappa3", "eps1", "eps2", "alpha_rad",
    ),
    "trace": (
        "t_us", "stage", "pop_rc0", "pop_rcr0", "pop_rcr1", "arg_rc0",
        "log10_err_rc0", "log10_pop_rcr0", "log10_pop_rcr1", "log10_arg_dev_rc0",
    ),
    "gate-error": (
        "Ta_uK", "E_de", "E_ro", "E_Do", "E_total", "T_Ry_rc_us", "T_Ry_r0_us", "T_Ry_r1_us",
    ),
    "manybody": ("t_us", "M", "P"),
    "compare": (
        "Ta_uK", "E_de_spin_echo", "E_ro_spin_echo", "E_total_spin_echo",
        "E_de_traditional", "E_ro_traditional", "E_total_traditional", "ratio_total",
    ),
}
COLUMNS["sweep-temp"] = COLUMNS["gate-error"]


class ConfigError(ValueError):
    """Invalid or unparseable configuration; the message names the field."""


@dataclass(frozen=True)
class ThermalBlock:
    Ta_uK: float = 0.0
    trap_depth_mK: float = 20.0
    waist_um: float = 1.0
    mass_amu: float = 86.909180527


@dataclass(frozen=True)
class DecayBlock:
    lifetimes_us: dict = field(default_factory=lambda: {"rc": 1200.0, "r0": 1200.0, "r1": 1200.0})


@dataclass(frozen=True)
class DopplerBlock:
    excitation: str = "two_photon"
    k_eff_per_um: float | None = None


@dataclass(frozen=True)
class ManybodyBlock:
    regime: str = "dressing"
    N: int = 4
    lattice_um: float | None = None
    omega_MHz: float | None = None
    delta_MHz: float | None = None
    c6_00: float = 56.2
    c6_11: float = -52.6
    t0_us: float | None = None
    swap: str = "ideal"
    omega_mu_MHz: float = 500.0
    initial: str | None = None
    substeps: int = 200


@dataclass(frozen=True)
class SweepBlock:
    Ta_uK: list = field(default_factory=lambda: [0.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0])
    samples: int = 2000
    seed: int = 0
    substeps: int = DEFAULT_SUBSTEPS


@dataclass(frozen=True)
class OutputBlock:
    out: str | None = None


@dataclass(frozen=True)
class RunConfig:
    protocol: str = "spin_echo"
    gate: GateParams = field(default_factory=GateParams)
    thermal: ThermalBlock = field(default_factory=ThermalBlock)
    decay: DecayBlock = field(default_factory=DecayBlock)
    doppler: DopplerBlock = field(default_factory=DopplerBlock)
    manybody: ManybodyBlock = field(default_factory=ManybodyBlock)
    sweep: SweepBlock = field(default_factory=SweepBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


_BLOCK_TYPES = {
    "gate": GateParams,
    "thermal": ThermalBlock,
    "decay": DecayBlock,
    "doppler": DopplerBlock,
    "manybody": ManybodyBlock,
    "sweep": SweepBlock,
    "output": OutputBlock,
}


def _coerce(block: str, name: str, value: Any, default: Any) -> Any:
    where = f"{block}.{name}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return int(value)
    if isinstance(default, float) or (default is None and isinstance(value, (int, float))):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            if value is None and default is None:
                return None
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        ):
            raise ConfigError(f"{where}: expected a list of numbers, got {value!r}")
        return [float(v) for v in value]
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected an object, got {value!r}")
        out = {}
        for k, v in value.items():
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{where}.{k}: expected a number, got {v!r}")
            out[str(k)] = float(v)
        return out
    if value is not None and not isinstance(value, str):
        raise ConfigError(f"{where}: expected a string, got {value!r}")
    return value


def _build_block(block: str, data: Any):
    cls = _BLOCK_TYPES[block]
    if not isinstance(data, Mapping):
        raise ConfigError(f"{block}: expected an object")
    defaults = cls()
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"{block}.{key}: unknown field")
        kwargs[key] = _coerce(block, key, value, getattr(defaults, key))
    try:
        return replace(defaults, **kwargs)
    except ValueError as exc:
        msg = str(exc)
        name = msg.split()[0] if msg else "?"
        raise ConfigError(f"{block}.{name}: {msg}") from None


def _validate(cfg: RunConfig) -> None:
    if cfg.protocol not in ("spin_echo", "traditional"):
        raise ConfigError(f"protocol: must be 'spin_echo' or 'traditional', got {cfg.protocol!r}")
    th = cfg.thermal
    for name in ("trap_depth_mK", "waist_um", "mass_amu"):
        if not getattr(th, name) > 0:
            raise ConfigError(f"thermal.{name}: must be positive")
    if th.Ta_uK < 0:
        raise ConfigError("thermal.Ta_uK: must be non-negative")
    for k, tau in cfg.decay.lifetimes_us.items():
        if not tau > 0:
            raise ConfigError(f"decay.lifetimes_us.{k}: must be positive")
    if cfg.doppler.excitation not in ("two_photon", "single_photon_uv"):
        raise ConfigError("doppler.excitation: must be 'two_photon' or 'single_photon_uv'")
    if cfg.doppler.k_eff_per_um is not None and not cfg.doppler.k_eff_per_um > 0:
        raise ConfigError("doppler.k_eff_per_um: must be positive")
    mb = cfg.manybody
    if mb.regime not in ("dressing", "near_resonant"):
        raise ConfigError("manybody.regime: must be 'dressing' or 'near_resonant'")
    if not 1 <= mb.N <= manybody.MAX_ATOMS:
        raise ConfigError(f"manybody.N: must be between 1 and {manybody.MAX_ATOMS}")
    for name in ("lattice_um", "omega_MHz", "t0_us", "omega_mu_MHz"):
        v = getattr(mb, name)
        if v is not None and not v > 0:
            raise ConfigError(f"manybody.{name}: must be positive")
    if mb.delta_MHz is not None and mb.delta_MHz < 0:
        raise ConfigError("manybody.delta_MHz: must be non-negative")
    if not mb.c6_00 * mb.c6_11 < 0:
        raise ConfigError("manybody.c6_11: C6(r1r1)/C6(r0r0) must be negative")
    if mb.swap not in ("ideal", "finite"):
        raise ConfigError("manybody.swap: must be 'ideal' or 'finite'")
    if mb.initial not in (None, "up", "one"):
        raise ConfigError("manybody.initial: must be 'up' or 'one'")
    if mb.substeps < 1:
        raise ConfigError("manybody.substeps: must be at least 1")
    sw = cfg.sweep
    if not sw.Ta_uK:
        raise ConfigError("sweep.Ta_uK: grid is empty")
    if any(t < 0 for t in sw.Ta_uK):
        raise ConfigError("sweep.Ta_uK: temperatures must be non-negative")
    if sw.samples < 1:
        raise ConfigError("sweep.samples: must be at least 1")
    if sw.seed < 0:
        raise ConfigError("sweep.seed: must be non-negative")
    if sw.substeps < 1:
        raise ConfigError("sweep.substeps: must be at least 1")


def config_from_dict(data: Mapping) -> RunConfig:
    if not isinstance(data, Mapping):
        raise ConfigError("config: top level must be a JSON object")
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key == "protocol":
            if not isinstance(value, str):
                raise ConfigError("protocol: expected a string")
            kwargs["protocol"] = value
        elif key in _BLOCK_TYPES:
            kwargs[key] = _build_block(key, value)
        else:
            raise ConfigError(f"{key}: unknown block")
    cfg = RunConfig(**kwargs)
    _validate(cfg)
    return cfg


def _resolve_key(key: str) -> tuple[str, ...]:
    parts = tuple(key.split("."))
    if len(parts) > 1 or key == "protocol":
        return parts
    hits = [b for b, cls in _BLOCK_TYPES.items() if key in {f.name for f in fields(cls)}]
    if len(hits) == 1:
        return (hits[0], key)
    if not hits:
        raise ConfigError(f"{key}: unknown field")
    raise ConfigError(f"{key}: ambiguous, use one of {', '.join(h + '.' + key for h in hits)}")


def apply_overrides(data: dict, overrides: SequenceT[str]) -> dict:
    """Apply ``key=value`` pairs (values parsed as JSON, else kept as strings)."""
    data = json.loads(json.dumps(data))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        path = _resolve_key(key.strip())
        node = data
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"{key}: {part} is not a block")
        node[path[-1]] = value
    return data


def parse_config(path: str | Path | None = None, overrides: SequenceT[str] = ()) -> RunConfig:
    """Read a JSON config (empty or missing path means all defaults)."""
    data: dict = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"{p}: {exc.strerror or exc}") from None
        if text.strip():
            try:
                data = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{p}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    data = apply_overrides(data, overrides)
    return config_from_dict(data)


@dataclass(frozen=True)
class CsvTable:
    header: tuple[str, ...]
    rows: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        for r in self.rows:
            if len(r) != len(self.header):
                raise ValueError("CSV rows must match the header width")

    def column(self, name: str) -> np.ndarray:
        k = self.header.index(name)
        return np.array([r[k] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(self.header)
        for r in self.rows:
            w.writerow([f"{float(x):.11e}" for x in r])
        return buf.getvalue()


def _table(command: str, rows: list[SequenceT[float]]) -> CsvTable:
    return CsvTable(COLUMNS[command], tuple(tuple(float(x) for x in r) for r in rows))


def _log10(x: float) -> float:
    return log10(max(abs(x), LOG_FLOOR))


def _thermal(cfg: RunConfig, Ta_uK: float | None = None) -> errorbudget.ThermalModel:
    th = cfg.thermal
    Ta = th.Ta_uK if Ta_uK is None else Ta_uK
    from scipy import constants as sc

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return errorbudget.ThermalModel(
            Ta=Ta * 1e-6,
            trap_depth=th.trap_depth_mK * 1e-3,
            waist=th.waist_um,
            mass=th.mass_amu * sc.physical_constants["atomic mass constant"][0],
        )


def _k_eff(cfg: RunConfig) -> float:
    if cfg.doppler.k_eff_per_um is not None:
        return cfg.doppler.k_eff_per_um
    if cfg.doppler.excitation == "single_photon_uv":
        return errorbudget.K_EFF_UV
    return errorbudget.K_EFF_TWO_PHOTON


def _report_row(r: errorbudget.ErrorReport) -> list[float]:
    return [
        r.Ta * 1e6, r.E_de, r.E_ro, r.E_Do, r.total,
        r.dwell.get("rc", 0.0), r.dwell.get("r0", 0.0), r.dwell.get("r1", 0.0),
    ]


def cmd_derive(cfg: RunConfig) -> CsvTable:
    d = echogate.derive_frequencies(cfg.gate)
    a = echogate.analytic_blockade(d)
    ns = 1e3
    row = [
        ordinary(d.V0), ordinary(d.V1), ordinary(d.Vplus), ordinary(d.omega_c),
        ordinary(d.omega_t2), ordinary(d.omega_t3), ordinary(d.omega_t4), d.kappa_ratio,
        d.T_wait * ns, d.t1 * ns, d.t2 * ns, d.t3 * ns, d.t4 * ns, d.t5 * ns,
        d.t_gap * ns, d.rydberg_time * ns, d.phi4, d.blockade_ratio_t2, d.blockade_ratio_t3,
        ordinary(a.omega_bar_t2), ordinary(a.omega_bar_t3), ordinary(a.eps_plus),
        ordinary(a.eps_minus), a.kappa2, a.kappa3, a.eps1, a.eps2, a.alpha,
    ]
    return _table("derive", [row])


def trace_sequence(cfg: RunConfig) -> Sequence:
    """Target-only part of the gate (pulses 2-4, or the 2pi pulse)."""
    full = echogate.build_sequence(cfg.protocol, cfg.gate)
    keep = [st for st in full.stages if st.label not in ("pulse1", "pulse5")]
    return Sequence(full.basis, tuple(keep), full.interactions)


def cmd_trace(cfg: RunConfig) -> CsvTable:
    seq = trace_sequence(cfg)
    init = basis_state(seq.basis, ("rc", "0")) * (-1j)
    traj = run_sequence(seq, init, cfg.sweep.substeps).trajectory
    p_rc0 = traj.population(("rc", "0"))
    p_r0 = traj.population(("rc", "r0"))
    p_r1 = traj.population(("rc", "r1"))
    arg = traj.argument(("rc", "0"))
    rows = []
    for i, t in enumerate(traj.times):
        rows.append([
            t, max(int(traj.stage_index[i]), 0), p_rc0[i], p_r0[i], p_r1[i], arg[i],
            _log10(1.0 - p_rc0[i]), _log10(p_r0[i]), _log10(p_r1[i]), _log10(arg[i] + pi / 2),
        ])
    return _table("trace", rows)


def _reports(cfg: RunConfig, protocol: str, grid_uK: SequenceT[float]) -> list[errorbudget.ErrorReport]:
    decay = errorbudget.DecayModel(dict(cfg.decay.lifetimes_us))
    thermal = _thermal(cfg, 0.0)
    return errorbudget.sweep_temperature(
        cfg.gate,
        [t * 1e-6 for t in grid_uK],
        thermal,
        decay,
        protocol=protocol,
        samples=cfg.sweep.samples,
        seed=cfg.sweep.seed,
        k_eff=_k_eff(cfg),
    )


def cmd_gate_error(cfg: RunConfig) -> CsvTable:
    (r,) = _reports(cfg, cfg.protocol, [cfg.thermal.Ta_uK])
    return _table("gate-error", [_report_row(r)])


def cmd_sweep(cfg: RunConfig) -> CsvTable:
    return _table("sweep-temp", [_report_row(r) for r in _reports(cfg, cfg.protocol, cfg.sweep.Ta_uK)])


def cmd_compare(cfg: RunConfig) -> CsvTable:
    echo = _reports(cfg, "spin_echo", cfg.sweep.Ta_uK)
    trad = _reports(cfg, "traditional", cfg.sweep.Ta_uK)
    rows = []
    for e, t in zip(echo, trad):
        ratio = t.total / e.total if e.total > 0 else float("inf")
        rows.append([e.Ta * 1e6, e.E_de, e.E_ro, e.total, t.E_de, t.E_ro, t.total, ratio])
    return _table("compare", rows)


def manybody_setup(cfg: RunConfig):
    mb = cfg.manybody
    lat0, dr0 = manybody.regime(mb.regime)
    lattice = manybody.LatticeConfig(mb.N, mb.lattice_um or lat0.lattice_constant)
    dressing = manybody.DressingParams(
        omega=mb.omega_MHz or dr0.omega,
        delta=dr0.delta if mb.delta_MHz is None else mb.delta_MHz,
        c6_00=mb.c6_00,
        c6_11=mb.c6_11,
    )
    t0 = mb.t0_us or 4 * pi / (2 * pi * dressing.omega)
    schedule = manybody.EchoSchedule(
        t0, mb.swap, mb.omega_mu_MHz if mb.swap == "finite" else None
    )
    initial = mb.initial or ("up" if mb.regime == "dressing" else "one")
    local = manybody.UP if initial == "up" else manybody.ONE
    state = manybody.uniform_product_state(manybody.lattice_basis(lattice), local)
    return lattice, dressing, schedule, state


def cmd_manybody(cfg: RunConfig) -> CsvTable:
    lattice, dressing, schedule, state = manybody_setup(cfg)
    res = manybody.run_echo(lattice, dressing, state, schedule, cfg.manybody.substeps)
    s = res.series
    return _table("manybody", list(zip(s.times, s.magnetization, s.population_one)))


COMMANDS = {
    "derive": cmd_derive,
    "trace": cmd_trace,
    "gate-error": cmd_gate_error,
    "sweep-temp": cmd_sweep,
    "manybody": cmd_manybody,
    "compare": cmd_compare,
}


def run_command(command: str, cfg: RunConfig) -> CsvTable:
    try:
        fn = COMMANDS[command]
    except KeyError:
        raise ConfigError(f"unknown command {command!r}") from None
    return fn(cfg)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rydecho",
        description="Spin-echo Rydberg gate simulator: derived frequencies, traces, error budgets.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", metavar="PATH", help="JSON config file")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="override a config field, e.g. gate.L=16 (repeatable)",
    )
    parser.add_argument("--out", metavar="PATH", help="write CSV here instead of stdout")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--samples", type=int)
    parser.add_argument("--protocol", choices=("spin_echo", "traditional"))
    parser.add_argument("--regime", choices=("dressing", "near_resonant"))
    return parser


def main(argv: SequenceT[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"sweep.seed={args.seed}")
    if args.samples is not None:
        overrides.append(f"sweep.samples={args.samples}")
    if args.protocol is not None:
        overrides.append(f'protocol="{args.protocol}"')
    if args.regime is not None:
        overrides.append(f'manybody.regime="{args.regime}"')
    try:
        cfg = parse_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        table = run_command(args.command, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        print(f"numerical failure in {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    text = table.to_csv()
    out = args.out or cfg.output.out
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
