"""Command-line front end: ``ensemble-pne {generate,chsh,scan,validate}``.

Exit codes: 0 success, 1 usage error, 2 runtime error (no data, exhausted
attempts), 3 validation failure.
"""
from __future__ import annotations

import argparse
import contextlib
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import chsh, oracle, protocol
from .chsh import ChshSettings, PneState
from .protocol import ProtocolParams

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_VALIDATION = 0, 1, 2, 3
COMMANDS = ("generate", "chsh", "scan", "validate")
DEFAULT_GRID = tuple(round(0.05 * i, 10) for i in range(21))

# key -> (parser, is_angle)
_KEYS = {
    "alpha": (float, False),
    "theta1": (float, True),
    "phi12": (float, True),
    "p_c": (float, False),
    "eta": (float, False),
    "c_vacuum": (float, False),
    "t0": (float, False),
    "trials": (int, False),
    "seed": (int, False),
    "alpha_grid": (None, False),
    "phi_l": (None, True),
    "phi_r": (None, True),
    "output": (str, False),
    "degrees": (None, False),
    "include_double_excitation": (None, False),
    "unconditioned_e": (None, False),
    "max_attempts": (int, False),
    "truncation": (int, False),
}
_FLAGS = ("degrees", "include_double_excitation", "unconditioned_e")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    params: ProtocolParams = field(default_factory=ProtocolParams)
    settings: ChshSettings = field(default_factory=ChshSettings)
    alpha: float = 1 / math.sqrt(2)
    trials: int = 100_000
    seed: int = 42
    alpha_grid: tuple[float, ...] = DEFAULT_GRID
    output: str | None = None
    unconditioned: bool = False
    max_attempts: int = 10**6


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ensemble-pne", description="Tunable ensemble entanglement and CHSH simulator.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="flat key = value file; flags override it")
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--theta1", type=float)
    parser.add_argument("--phi12", type=float)
    parser.add_argument("--p-c", dest="p_c", type=float)
    parser.add_argument("--eta", type=float)
    parser.add_argument("--c-vacuum", dest="c_vacuum", type=float)
    parser.add_argument("--t0", type=float)
    parser.add_argument("--trials", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--alpha-grid", dest="alpha_grid", help="comma-separated alpha values")
    parser.add_argument("--phi-l", dest="phi_l", help="three comma-separated side-L phases")
    parser.add_argument("--phi-r", dest="phi_r", help="three comma-separated side-R phases")
    parser.add_argument("--output")
    parser.add_argument("--max-attempts", dest="max_attempts", type=int)
    parser.add_argument("--truncation", type=int)
    parser.add_argument("--degrees", action="store_true", default=None)
    parser.add_argument("--include-double-excitation", dest="include_double_excitation",
                        action="store_true", default=None)
    parser.add_argument("--unconditioned-e", dest="unconditioned_e", action="store_true", default=None)
    return parser


def _parse_bool(key: str, text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"{key}: expected a boolean, got {text!r}")


def read_config_file(path: str | Path) -> dict:
    values = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        if key in values:
            raise UsageError(f"{path}:{lineno}: duplicate key {key!r}")
        if key in _FLAGS:
            values[key] = _parse_bool(key, value)
            continue
        conv = _KEYS[key][0]
        try:
            values[key] = conv(value) if conv else value
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return values


def _floats(key: str, text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in str(text).split(",") if x.strip())
    except ValueError:
        raise UsageError(f"{key}: expected comma-separated numbers, got {text!r}") from None


def parse_config(argv: Sequence[str]) -> RunConfig:
    args = vars(_build_parser().parse_args(list(argv)))
    command = args.pop("command")
    file_path = args.pop("config")
    flags = {k: v for k, v in args.items() if v is not None}
    if "alpha" in flags and "theta1" in flags:
        raise UsageError("--alpha and --theta1 are mutually exclusive")
    from_file = read_config_file(file_path) if file_path else {}
    if "alpha" in from_file and "theta1" in from_file:
        raise UsageError("config file sets both alpha and theta1")
    if "alpha" in flags:
        from_file.pop("theta1", None)
    if "theta1" in flags:
        from_file.pop("alpha", None)
    values = {**from_file, **flags}

    degrees = values.get("degrees", False)
    to_rad = math.radians if degrees else float

    try:
        if "alpha" in values:
            alpha = values["alpha"]
            if not 0.0 <= alpha <= 1.0:
                raise UsageError(f"alpha: must lie in [0, 1], got {alpha}")
            theta1 = math.asin(alpha) / 2
        elif "theta1" in values:
            theta1 = to_rad(values["theta1"])
            if not 0.0 <= theta1 <= math.pi / 4 + 1e-15:
                raise UsageError(f"theta1: must lie in [0, pi/4], got {values['theta1']}")
            theta1 = min(theta1, math.pi / 4)
            alpha = math.sin(2 * theta1)
        else:
            alpha = 1 / math.sqrt(2)
            theta1 = math.pi / 8

        param_kwargs = {"theta1": theta1}
        if "phi12" in values:
            param_kwargs["phi12"] = to_rad(values["phi12"])
        for key in ("p_c", "eta", "c_vacuum", "t0", "truncation"):
            if key in values:
                param_kwargs[key] = values[key]
        param_kwargs["include_double_excitation"] = bool(values.get("include_double_excitation", False))
        for key in ("p_c", "eta", "c_vacuum", "t0", "truncation"):
            if key in param_kwargs:
                try:
                    ProtocolParams(**{key: param_kwargs[key]})
                except ValueError as exc:
                    raise UsageError(f"{key}: {exc}") from None
        params = ProtocolParams(**param_kwargs)

        settings_kwargs = {}
        for key, attr in (("phi_l", "phi_L"), ("phi_r", "phi_R")):
            if key in values:
                settings_kwargs[attr] = tuple(to_rad(x) for x in _floats(key, values[key]))
        try:
            settings = ChshSettings(**settings_kwargs)
        except ValueError as exc:
            raise UsageError(f"phi_l/phi_r: {exc}") from None

        trials = values.get("trials", 100_000)
        if trials < 1:
            raise UsageError(f"trials: must be >= 1, got {trials}")
        seed = values.get("seed", 42)
        if not 0 <= seed < 2 ** 64:
            raise UsageError(f"seed: must be a 64-bit unsigned integer, got {seed}")
        max_attempts = values.get("max_attempts", 10**6)
        if max_attempts < 1:
            raise UsageError(f"max_attempts: must be >= 1, got {max_attempts}")
        grid = _floats("alpha_grid", values["alpha_grid"]) if "alpha_grid" in values else DEFAULT_GRID
        if not grid:
            raise UsageError("alpha_grid: empty")
        if any(not 0.0 <= a <= 1.0 for a in grid):
            raise UsageError("alpha_grid: values must lie in [0, 1]")
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    return RunConfig(command, params, settings, alpha, trials, seed, tuple(grid), values.get("output"),
                     bool(values.get("unconditioned_e", False)), max_attempts)


@contextlib.contextmanager
def _open_output(path: str | None):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _run_generate(cfg: RunConfig) -> int:
    results = protocol.simulate_generation(cfg.params, cfg.trials, cfg.seed, cfg.max_attempts)
    with _open_output(cfg.output) as fh:
        protocol.write_attempt_log(results, fh, cfg.params.t0)
    attempts = np.array([r.attempts for r in results], dtype=float)
    summary = sys.stdout if cfg.output else sys.stderr
    table = protocol.attempt_table(cfg.params)
    print(f"runs={cfg.trials} mean_attempts={attempts.mean():.9g} "
          f"mean_elapsed={attempts.mean() * cfg.params.t0:.9g} "
          f"paper_T={protocol.expected_generation_time(cfg.params):.9g} "
          f"exact_success_probability={table.success_probability:.9g}", file=summary)
    return EXIT_OK


def _run_chsh(cfg: RunConfig) -> int:
    pne = PneState(cfg.alpha, cfg.params.c_vacuum, cfg.params.phi12)
    report = chsh.s_simulated(pne, cfg.settings, cfg.trials, np.random.default_rng(
        np.random.SeedSequence(cfg.seed)), not cfg.unconditioned)
    with _open_output(cfg.output) as fh:
        chsh.write_correlation_csv(report.correlations, fh)
        if cfg.output is None:
            fh.write("\n")
    chsh.write_scan_csv([report], sys.stdout)
    return EXIT_OK


def _run_scan(cfg: RunConfig) -> int:
    reports = chsh.scan_alpha(cfg.alpha_grid, cfg.settings, cfg.trials, cfg.seed,
                              cfg.params.c_vacuum, cfg.params.phi12, not cfg.unconditioned)
    with _open_output(cfg.output) as fh:
        chsh.write_scan_csv(reports, fh)
    return EXIT_OK


def validation_failures(seed: int = 2024, draws: int = 100) -> list[str]:
    failures = oracle.run_validation(draws, seed)
    for p_c, eta, theta1, phi12 in ((0.05, 0.0, 0.2, 0.0), (0.1, 0.3, math.pi / 8, 1.1), (0.3, 0.6, 0.7, -2.0)):
        params = ProtocolParams(p_c=p_c, eta=eta, theta1=theta1, phi12=phi12)
        dense = oracle.generation_click_distribution(params)
        table = protocol.attempt_table(params)
        for outcome in protocol.OUTCOMES:
            diff = abs(dense.get(outcome.value, 0.0) - table.probability(outcome))
            if diff > 1e-10:
                failures.append(f"click distribution {params}: {outcome.value} off by {diff:.3e}")
    for alpha in (0.0, 0.6, 1 / math.sqrt(2), 1.0):
        pne = PneState(alpha, 0.5, 0.4)
        sparse = chsh.coincidence_distribution(pne, 0.3, -0.9)
        dense = oracle.coincidence_probabilities(pne, 0.3, -0.9)
        for key, value in dense.items():
            if abs(sparse[key] - value) > 1e-10:
                failures.append(f"coincidences alpha={alpha}: {key} off by {abs(sparse[key] - value):.3e}")
    return failures


def _run_validate(cfg: RunConfig) -> int:
    failures = validation_failures(cfg.seed)
    for line in failures:
        print(f"FAIL {line}")
    if failures:
        return EXIT_VALIDATION
    print("validate: sparse engine agrees with dense oracle")
    return EXIT_OK


def run(cfg: RunConfig) -> int:
    handler = {"generate": _run_generate, "chsh": _run_chsh, "scan": _run_scan, "validate": _run_validate}
    try:
        return handler[cfg.command](cfg)
    except (chsh.NoDataError, oracle.NoCoincidences, protocol.ExhaustedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main(argv: Sequence[str] | None = None) -> int:
    try:
        cfg = parse_config(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
