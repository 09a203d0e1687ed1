"""Command-line front end: rate sweeps, Monte Carlo runs, self checks.

Exit codes: 0 ok, 1 internal error, 2 bad configuration, 3 infeasible
parameters, 4 check-mode failure (observed error rate too high).
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import multi_path as mp
from . import quasi_static as qs
from . import two_path as tp
from .numerics import InfeasibleError
from .selfcheck import run_selfcheck
from .simulation import (
    MultiPathScenario,
    QuasiStaticScenario,
    TwoPathScenario,
    monte_carlo,
)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_BAD_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_CHECK_FAILED = 4

SWEEP_VARIABLES = ("N", "D", "sigmaZ", "Ptilde", "SNR", "K")
CURVE_LABELS = (
    "capacity_fd",
    "fd_baseline",
    "theorem1",
    "theorem2",
    "tp_benchmark",
    "theorem3",
    "theorem3_real_dim",
)


class ConfigError(ValueError):
    """Malformed or incomplete configuration input."""


def _fmt(value: float) -> str:
    return f"{value:.12g}"


def _require(cfg: dict, key: str, context: str):
    if key not in cfg:
        raise ConfigError(f"{context}: missing required key '{key}'")
    return cfg[key]


def _load_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top-level JSON object expected")
    return data


# ---------------------------------------------------------------------------
# rate sweeps
# ---------------------------------------------------------------------------

def _sweep_values(spec: dict):
    values = _require(spec, "values", "sweep spec")
    if isinstance(values, dict):
        start = _require(values, "start", "sweep range")
        stop = _require(values, "stop", "sweep range")
        count = int(_require(values, "count", "sweep range"))
        if count < 1:
            raise ConfigError("sweep range: count must be positive")
        points = np.linspace(float(start), float(stop), count).tolist()
    elif isinstance(values, list) and values:
        points = [float(v) for v in values]
    else:
        raise ConfigError("sweep spec: 'values' must be a list or a range object")
    return sorted(points)


def _apply_variable(fixed: dict, variable: str, x: float) -> dict:
    cfg = dict(fixed)
    if variable == "N":
        cfg["n"] = int(round(x))
    elif variable == "D":
        cfg["distortion"] = x
    elif variable == "sigmaZ":
        cfg["sigma_z"] = x
    elif variable == "Ptilde":
        cfg["P_tilde"] = x
    elif variable == "SNR":
        sigma2 = _require(cfg, "sigma2", "SNR sweep")
        cfg["P"] = x * float(sigma2)
    elif variable == "K":
        cfg["subchannels"] = int(round(x))
    else:
        raise ConfigError(f"unknown sweep variable '{variable}'")
    return cfg


def _taps_from(cfg: dict):
    re = _require(cfg, "h_re", "theorem3 curve")
    im = cfg.get("h_im", [0.0] * len(re))
    if len(im) != len(re):
        raise ConfigError("h_re and h_im must have the same length")
    return tuple(complex(a, b) for a, b in zip(re, im))


def _eval_curve(label: str, cfg: dict) -> float:
    snr = float(_require(cfg, "P", label)) / float(_require(cfg, "sigma2", label))
    n = int(_require(cfg, "n", label))
    eps = float(_require(cfg, "eps", label))
    if label == "capacity_fd":
        return qs.capacity_fd(float(_require(cfg, "h", label)), snr)
    if label == "fd_baseline":
        return qs.rate_fd_baseline(float(_require(cfg, "h", label)), snr, n, eps)
    if label == "theorem1":
        csi = qs.TransmitterCsi(
            float(_require(cfg, "h_hat", label)),
            float(_require(cfg, "distortion", label)),
        )
        params = qs.derive_params1(
            float(cfg["sigma2"]), float(cfg["P"]),
            float(_require(cfg, "P_tilde", label)),
            float(_require(cfg, "sigma_z", label)), csi, n, eps,
        )
        return params.rate
    if label == "theorem2":
        csi = tp.TransmitterCsi2(
            float(_require(cfg, "h1_hat", label)),
            float(_require(cfg, "h2_hat", label)),
            float(_require(cfg, "distortion", label)),
        )
        params = tp.derive_params2(
            float(cfg["sigma2"]), float(cfg["P"]),
            float(_require(cfg, "P_tilde", label)),
            float(_require(cfg, "sigma_z", label)), csi, n, eps,
        )
        return params.rate
    if label == "tp_benchmark":
        return tp.rate_tp_benchmark(
            float(_require(cfg, "h1", label)),
            float(_require(cfg, "h2", label)), snr, n, eps,
        )
    if label in ("theorem3", "theorem3_real_dim"):
        channel = mp.MultiPathChannel(
            _taps_from(cfg), float(cfg["sigma2"]), float(cfg["P"])
        )
        if "subchannels" in cfg:
            plan = mp.plan_block(channel, n, eps, int(cfg["subchannels"]))
        else:
            plan = mp.optimize_subchannel_count(channel, n, eps)
        return plan.rate if label == "theorem3" else plan.rate_per_real_dim
    raise ConfigError(f"unknown curve label '{label}'")


def cmd_rate_sweep(spec_path: str, out_path):
    spec = _load_json(spec_path)
    variable = _require(spec, "variable", "sweep spec")
    if variable not in SWEEP_VARIABLES:
        raise ConfigError(f"sweep variable must be one of {SWEEP_VARIABLES}")
    curves = _require(spec, "curves", "sweep spec")
    if not isinstance(curves, list) or not curves:
        raise ConfigError("sweep spec: 'curves' must be a nonempty list")
    for label in curves:
        if label not in CURVE_LABELS:
            raise ConfigError(f"unknown curve label '{label}' (known: {CURVE_LABELS})")
    fixed = spec.get("fixed", {})
    points = _sweep_values(spec)

    lines = ["x," + ",".join(curves)]
    for x in points:
        cells = [_fmt(x)]
        cfg = _apply_variable(fixed, variable, x)
        for label in curves:
            try:
                cells.append(_fmt(_eval_curve(label, cfg)))
            except (InfeasibleError, ValueError) as exc:
                if isinstance(exc, ConfigError):
                    raise
                print(f"note: {label} infeasible at {variable}={x:g}: {exc}",
                      file=sys.stderr)
                cells.append("")
        lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

def _scenario_from_config(cfg: dict):
    scheme = _require(cfg, "scheme", "simulate config")
    common = dict(
        n=int(_require(cfg, "n", "simulate config")),
        eps=float(_require(cfg, "eps", "simulate config")),
        sigma2=float(_require(cfg, "sigma2", "simulate config")),
        P=float(_require(cfg, "P", "simulate config")),
        # validation knob: scales the realized forward noise (0 = noiseless
        # loop) while the design still assumes sigma2
        noise_scale=float(cfg.get("noise_scale", 1.0)),
    )
    if scheme == 1:
        return QuasiStaticScenario(
            h_hat=float(_require(cfg, "h_hat", "scheme 1 config")),
            distortion=float(_require(cfg, "distortion", "scheme 1 config")),
            P_tilde=float(_require(cfg, "P_tilde", "scheme 1 config")),
            sigma_z=float(_require(cfg, "sigma_z", "scheme 1 config")),
            h=float(cfg["h"]) if "h" in cfg else None,
            **common,
        )
    if scheme == 2:
        return TwoPathScenario(
            h1_hat=float(_require(cfg, "h1_hat", "scheme 2 config")),
            h2_hat=float(_require(cfg, "h2_hat", "scheme 2 config")),
            distortion=float(_require(cfg, "distortion", "scheme 2 config")),
            P_tilde=float(_require(cfg, "P_tilde", "scheme 2 config")),
            sigma_z=float(_require(cfg, "sigma_z", "scheme 2 config")),
            h1=float(cfg["h1"]) if "h1" in cfg else None,
            h2=float(cfg["h2"]) if "h2" in cfg else None,
            **common,
        )
    if scheme == 3:
        taps = _taps_from(cfg)
        return MultiPathScenario(
            h=taps,
            subchannels=int(cfg["subchannels"]) if "subchannels" in cfg else None,
            **common,
        )
    raise ConfigError(f"unknown scheme {scheme!r} (expected 1, 2 or 3)")


def cmd_simulate(config_path: str, trials: int, seed: int, check: bool, out_path):
    cfg = _load_json(config_path)
    if trials < 1:
        raise ConfigError("trials must be positive")
    scenario = _scenario_from_config(cfg)
    report = monte_carlo(scenario, trials, seed)
    payload = {
        "trials": report.trials,
        "errors": report.error_count,
        "dep": report.dep_estimate,
        "ci95_lo": report.wilson_lo,
        "ci95_hi": report.wilson_hi,
        "aliasing_rate_per_iter": report.aliasing_rate_per_iteration.tolist(),
        "avg_fwd_power": report.avg_forward_power,
        "avg_fb_power": report.avg_feedback_power,
        "config_echo": cfg,
    }
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if check and report.wilson_hi > scenario.eps:
        print(
            f"check failed: Wilson upper bound {report.wilson_hi:.3e} exceeds "
            f"target {scenario.eps:.3e}",
            file=sys.stderr,
        )
        return EXIT_CHECK_FAILED
    return EXIT_OK


# ---------------------------------------------------------------------------
# selfcheck
# ---------------------------------------------------------------------------

def cmd_selfcheck() -> int:
    results = run_selfcheck()
    width = max(len(r.name) for r in results)
    ok = True
    for r in results:
        status = "pass" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  residual {r.residual:.3e}  "
              f"tol {r.tolerance:.1e}  {status}")
        ok &= r.passed
    return EXIT_OK if ok else EXIT_INTERNAL


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skfading",
        description="Feedback coding schemes for fading channels: closed-form "
                    "rate curves, Monte Carlo error simulation and self checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("rate-sweep", help="evaluate closed-form rate curves")
    sweep.add_argument("--spec", required=True, help="sweep specification (JSON)")
    sweep.add_argument("--out", default=None, help="output CSV path (default stdout)")

    sim = sub.add_parser("simulate", help="Monte Carlo decoding-error run")
    sim.add_argument("--config", required=True, help="scenario configuration (JSON)")
    sim.add_argument("--trials", required=True, type=int)
    sim.add_argument("--seed", required=True, type=int)
    sim.add_argument("--check", action="store_true",
                     help="exit 4 unless the Wilson upper bound meets the target")
    sim.add_argument("--out", default=None, help="output JSON path (default stdout)")

    sub.add_parser("selfcheck", help="run the fast invariant suite")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "rate-sweep":
            return cmd_rate_sweep(args.spec, args.out)
        if args.command == "simulate":
            return cmd_simulate(args.config, args.trials, args.seed, args.check, args.out)
        if args.command == "selfcheck":
            return cmd_selfcheck()
        parser.error(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible parameters: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except Exception as exc:  # noqa: BLE001 - map anything else to exit 1
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
