"""Command-line front end: compile, simulate, sweep, validate.

All configuration comes from a single JSON document in human units
(GHz for omega/2pi, MHz for rates, ns for durations), converted once at
this boundary.  Subcommands:

    synth      compile the configured target into a sequence JSON
    simulate   replay a sequence file (ideal | full | lindblad)
    sweep      full-dynamics fidelity over an (x, eta) grid, CSV out
    validate   parameter-selection report, exit code reflects pass/fail
    stepcount  closed-form sequence lengths

Exit codes: 0 success, 1 config error, 2 synthesis error, 3 simulation
error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import evolve, synth, validate as validate_mod
from .couplings import SystemParams, ghz_from_angular, ns_from_seconds
from .evolve import DecayRates, IntegratorOptions
from .fock import DensityMatrix, build_space, vacuum_state
from .synth import PulseSequence, SynthesisError, TargetState

log = logging.getLogger("twomode")

CSV_HEADER = "x,eta,fidelity,total_time_ns,steps"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration; see README for the JSON schema."""

    system: SystemParams
    x: float
    decay: DecayRates = field(default_factory=DecayRates)
    fock_cutoff: int = 7
    rtol: float = 1e-6
    atol: float = 1e-9
    frame: str = "displaced"
    target_kind: str = "even"
    n_max: int = 2
    custom_amplitudes: dict | None = None
    x_values: tuple = ()
    eta_values: tuple = ()

    def target(self) -> TargetState:
        if self.target_kind == "even":
            return TargetState.even(self.n_max)
        if self.target_kind == "noon":
            return TargetState.noon(self.n_max)
        return TargetState(self.n_max, self.custom_amplitudes)

    def plan(self):
        if self.target_kind == "noon":
            return synth.plan_noon(self.n_max)
        return synth.plan_procedures(self.n_max)

    def options(self, frame: str | None = None) -> IntegratorOptions:
        return IntegratorOptions(rtol=self.rtol, atol=self.atol,
                                 frame=frame or self.frame,
                                 fock_cutoff=self.fock_cutoff)

    def to_json_dict(self) -> dict:
        out = {
            "system": self.system.to_ghz_dict(),
            "drive": {"x": self.x},
            "decay": {
                "gamma_eg_mhz": self.decay.gamma_eg / (2e6 * math.pi),
                "gamma_ee_mhz": self.decay.gamma_ee / (2e6 * math.pi),
                "gamma_gg_mhz": self.decay.gamma_gg / (2e6 * math.pi),
                "kappa_1_mhz": self.decay.kappa_1 / (2e6 * math.pi),
                "kappa_2_mhz": self.decay.kappa_2 / (2e6 * math.pi),
            },
            "simulation": {"fock_cutoff": self.fock_cutoff, "rtol": self.rtol,
                           "atol": self.atol, "frame": self.frame},
            "target": {"kind": self.target_kind, "n_max": self.n_max},
            "sweep": {"x_values": list(self.x_values),
                      "eta_values": list(self.eta_values)},
        }
        if self.custom_amplitudes is not None:
            out["target"]["amplitudes"] = {
                f"{n1},{n2}": [c.real, c.imag]
                for (n1, n2), c in self.custom_amplitudes.items()}
        return out


def _require(block: dict, key: str, where: str):
    if key not in block:
        raise ConfigError(f"missing '{key}' in config block '{where}'")
    return block[key]


def _parse_custom_amplitudes(raw: dict) -> dict:
    amps = {}
    for key, val in raw.items():
        try:
            n1_s, n2_s = key.split(",")
            pair = (int(n1_s), int(n2_s))
        except ValueError:
            raise ConfigError(f"bad amplitude key {key!r}; expected 'n1,n2'") from None
        if isinstance(val, (int, float)):
            amps[pair] = complex(val)
        elif isinstance(val, (list, tuple)) and len(val) == 2:
            amps[pair] = complex(val[0], val[1])
        else:
            raise ConfigError(f"bad amplitude value {val!r} for key {key!r}")
    total = sum(abs(c) ** 2 for c in amps.values())
    if abs(total - 1.0) >= 1e-6:
        raise ConfigError(f"custom amplitudes are not normalized: sum |C|^2 = {total}")
    if total != 1.0:
        warnings.warn("custom amplitudes renormalized "
                      f"(sum |C|^2 was {total:.12f})", stacklevel=2)
        amps = {k: c / math.sqrt(total) for k, c in amps.items()}
    return amps


def parse_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    system_raw = _require(doc, "system", "<root>")
    try:
        system = SystemParams.from_ghz(
            _require(system_raw, "omega_x_ghz", "system"),
            _require(system_raw, "omega_z_ghz", "system"),
            _require(system_raw, "omega_1_ghz", "system"),
            _require(system_raw, "omega_2_ghz", "system"),
            _require(system_raw, "eta_1", "system"),
            _require(system_raw, "eta_2", "system"))
    except ValueError as exc:
        raise ConfigError(f"bad system block: {exc}") from exc
    drive = _require(doc, "drive", "<root>")
    x = float(_require(drive, "x", "drive"))
    if x <= 0:
        raise ConfigError("drive.x must be positive")

    decay_raw = doc.get("decay", {})
    try:
        decay = DecayRates.from_mhz(
            decay_raw.get("gamma_eg_mhz", 0.0), decay_raw.get("gamma_ee_mhz", 0.0),
            decay_raw.get("gamma_gg_mhz", 0.0), decay_raw.get("kappa_1_mhz", 0.0),
            decay_raw.get("kappa_2_mhz", 0.0))
    except ValueError as exc:
        raise ConfigError(f"bad decay block: {exc}") from exc

    sim = doc.get("simulation", {})
    frame = sim.get("frame", "displaced")
    if frame not in ("displaced", "displaced-explicit", "lab"):
        raise ConfigError(f"simulation.frame {frame!r} not recognized")
    fock_cutoff = int(sim.get("fock_cutoff", 7))
    rtol = float(sim.get("rtol", 1e-6))
    atol = float(sim.get("atol", 1e-9))
    if fock_cutoff < 1 or rtol <= 0 or atol <= 0:
        raise ConfigError("bad simulation block")

    target_raw = doc.get("target", {})
    kind = target_raw.get("kind", "even")
    if kind not in ("even", "noon", "custom"):
        raise ConfigError(f"target.kind {kind!r} not recognized")
    n_max = int(target_raw.get("n_max", 2))
    if n_max < 1:
        raise ConfigError("target.n_max must be >= 1")
    custom = None
    if kind == "custom":
        custom = _parse_custom_amplitudes(_require(target_raw, "amplitudes", "target"))
        for (n1, n2) in custom:
            if n1 < 0 or n2 < 0 or n1 + n2 > n_max:
                raise ConfigError(f"amplitude at ({n1},{n2}) outside n1+n2 <= {n_max}")

    sweep = doc.get("sweep", {})
    x_values = tuple(float(v) for v in sweep.get("x_values", ()))
    eta_values = tuple(float(v) for v in sweep.get("eta_values", ()))

    return RunConfig(system=system, x=x, decay=decay, fock_cutoff=fock_cutoff,
                     rtol=rtol, atol=atol, frame=frame, target_kind=kind,
                     n_max=n_max, custom_amplitudes=custom,
                     x_values=x_values, eta_values=eta_values)


def load_config(path) -> RunConfig:
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(doc)


def _print_step_table(sequence: PulseSequence, file=sys.stdout):
    print(f"{'nu':>4s} {'type':10s} {'pair':8s} {'dir':5s} "
          f"{'freq_ghz':>10s} {'t_ns':>10s} {'phase_rad':>10s}", file=file)
    for s in sequence.steps:
        pair = f"({s.pair_g[0]},{s.pair_g[1]})"
        print(f"{s.nu:4d} {s.transition.name:10s} {pair:8s} "
              f"{'ge' if s.direction == synth.G_TO_E else 'eg':5s} "
              f"{ghz_from_angular(s.omega_drive):10.4f} "
              f"{ns_from_seconds(s.duration):10.5f} {s.phase:10.6f}", file=file)
    print(f"total: {ns_from_seconds(sequence.total_duration):.4f} ns "
          f"({len(sequence.steps)} steps)", file=file)


def cmd_synth(args) -> int:
    cfg = load_config(args.config)
    sequence = synth.synthesize(cfg.target(), cfg.system, cfg.x, plan=cfg.plan())
    _print_step_table(sequence)
    if args.out:
        synth.save_sequence(sequence, args.out)
        log.info("sequence written to %s", args.out)
    return 0


def _simulate(cfg: RunConfig, sequence: PulseSequence, mode: str,
              frame: str | None, trajectory=None) -> dict:
    space = build_space(cfg.fock_cutoff, cfg.fock_cutoff)
    target = cfg.target()
    result = {"mode": mode,
              "total_time_ns": ns_from_seconds(sequence.total_duration)}
    if mode == "ideal":
        final = evolve.ideal_replay(sequence, vacuum_state(space))
        result["fidelity"] = evolve.fidelity(final, target)
        result["norm_drift"] = abs(final.norm() - 1.0)
    elif mode == "full":
        final = evolve.schrodinger_evolve(vacuum_state(space), sequence,
                                          cfg.system, cfg.options(frame),
                                          trajectory=trajectory)
        result["fidelity"] = evolve.fidelity(final, target)
        result["norm_drift"] = abs(final.norm() - 1.0)
    elif mode == "lindblad":
        rho0 = DensityMatrix.from_state(vacuum_state(space))
        final = evolve.lindblad_evolve(rho0, sequence, cfg.system, cfg.decay,
                                       cfg.options(frame), trajectory=trajectory)
        result["fidelity"] = evolve.fidelity(final, target)
        result["trace_drift"] = abs(final.trace().real - 1.0)
    else:
        raise ConfigError(f"unknown mode {mode!r}")
    return result


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    try:
        sequence = synth.load_sequence(args.sequence)
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load sequence {args.sequence}: {exc}") from exc
    result = _simulate(cfg, sequence, args.mode, args.frame,
                       trajectory=args.trajectory)
    payload = json.dumps(result, indent=2)
    print(payload)
    if args.out:
        with open(args.out, "w") as f:
            f.write(payload + "\n")
    return 0


def _sweep_point(doc: dict, x: float, eta: float) -> dict:
    """One grid point, self-contained so it can run in a worker process."""
    cfg = parse_config(doc)
    system = SystemParams(
        omega_x=cfg.system.omega_x, omega_z=cfg.system.omega_z,
        omega_1=cfg.system.omega_1, omega_2=cfg.system.omega_2,
        eta_1=eta, eta_2=eta)
    target = cfg.target()
    plan = cfg.plan()
    sequence = synth.synthesize(target, system, x, plan=plan)
    space = build_space(cfg.fock_cutoff, cfg.fock_cutoff)
    final = evolve.schrodinger_evolve(vacuum_state(space), sequence, system,
                                      cfg.options())
    return {"x": x, "eta": eta,
            "fidelity": evolve.fidelity(final, target),
            "total_time_ns": ns_from_seconds(sequence.total_duration),
            "steps": len(sequence.steps)}


def _format_row(row: dict) -> str:
    return (f"{row['x']:g},{row['eta']:g},{row['fidelity']:.6f},"
            f"{row['total_time_ns']:.4f},{row['steps']}")


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if not cfg.x_values or not cfg.eta_values:
        raise ConfigError("sweep requires non-empty sweep.x_values and sweep.eta_values")
    doc = cfg.to_json_dict()
    grid = [(x, eta) for x in cfg.x_values for eta in cfg.eta_values]  # x-major
    rows: list[dict | None] = [None] * len(grid)
    if args.workers and args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = {i: pool.submit(_sweep_point, doc, x, eta)
                       for i, (x, eta) in enumerate(grid)}
            for i, fut in futures.items():
                x, eta = grid[i]
                try:
                    rows[i] = fut.result()
                except Exception as exc:
                    log.warning("sweep point x=%g eta=%g failed: %s", x, eta, exc)
                    rows[i] = {"x": x, "eta": eta, "fidelity": float("nan"),
                               "total_time_ns": float("nan"), "steps": 0}
    else:
        for i, (x, eta) in enumerate(grid):
            try:
                rows[i] = _sweep_point(doc, x, eta)
            except Exception as exc:
                log.warning("sweep point x=%g eta=%g failed: %s", x, eta, exc)
                rows[i] = {"x": x, "eta": eta, "fidelity": float("nan"),
                           "total_time_ns": float("nan"), "steps": 0}
    lines = [CSV_HEADER] + [_format_row(r) for r in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
        log.info("sweep written to %s", args.out)
    else:
        sys.stdout.write(text)
    return 0


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    report = validate_mod.validate_parameters(cfg.system, cfg.x, cfg.n_max)
    print(report.render_table())
    if args.out:
        validate_mod.save_report(report, args.out)
    return 0 if report.overall_pass else 4


def cmd_stepcount(args) -> int:
    print(synth.step_count(args.n_max, args.kind))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twomode",
        description="Compile and simulate two-mode photon state generation sequences.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="compile the configured target to a sequence file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="sequence JSON path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("simulate", help="replay a sequence file")
    p.add_argument("--config", required=True)
    p.add_argument("--sequence", required=True)
    p.add_argument("--mode", choices=("ideal", "full", "lindblad"), default="full")
    p.add_argument("--frame", choices=("displaced", "lab"), default=None)
    p.add_argument("--out", default=None, help="result JSON path")
    p.add_argument("--trajectory", default=None, help="per-step populations CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="fidelity over the configured (x, eta) grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="results CSV path")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="parameter-selection report")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="report JSON path")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("stepcount", help="closed-form sequence length")
    p.add_argument("--n-max", type=int, required=True)
    p.add_argument("--kind", choices=("general", "noon"), default="general")
    p.set_defaults(func=cmd_stepcount)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, validate_mod.IncommensurateError) as exc:
        log.error("config error: %s", exc)
        return 1
    except SynthesisError as exc:
        log.error("synthesis error: %s", exc)
        return 2
    except evolve.IntegrationError as exc:
        log.error("simulation error: %s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
