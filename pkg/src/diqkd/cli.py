"""Command-line entry point.

Reports are JSON on stdout (or ``--out``); sweeps are CSV with a header
row. Exit codes: 0 completed, 2 protocol aborted, 1 usage or validation
error. Every error message names the violated precondition.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import (
    EstimationParams,
    InfeasibleError,
    definetti_bound,
    invert_mu,
    key_rate,
    lemma1_bound,
    mu_as_printed,
    mu_closed_form,
)
from .chsh import PlanarAngles, chsh_p, chsh_S, planar_qubit_strategy, s_max_horodecki, s_max_optimize
from .fileio import _read_json, load_observable_pair, load_state
from .jordan import block_diagonalize
from .linalg import DensityOperator, ValidationError
from .presets import PAIR_PRESETS, STATE_PRESETS, device_from_spec, pair_preset, state_preset
from .protocol.runner import ProtocolConfig, run_protocol

EXIT_OK, EXIT_ERROR, EXIT_ABORTED = 0, 1, 2
JORDAN_RESIDUAL_MAX = 1e-8


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"usage: {message}")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _grid(spec: str) -> np.ndarray:
    """``start:stop:step`` with ``stop`` included when it lies on the grid."""
    try:
        start, stop, step = (float(v) for v in spec.split(":"))
    except ValueError:
        raise UsageError(f"grid spec must be start:stop:step, got {spec!r}") from None
    if step <= 0 or stop < start:
        raise UsageError(f"grid spec needs step > 0 and stop >= start, got {spec!r}")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return np.round(start + step * np.arange(count), 12)


class Report:
    """Structured output: command echo, input digests, seed, outputs."""

    def __init__(self, args, argv):
        self.doc = {"command": list(argv), "version": __version__, "inputs": {}, "seed": getattr(args, "seed", None)}
        self.timing = getattr(args, "timing", False)
        self._t0 = time.perf_counter()

    def add_input(self, path):
        self.doc["inputs"][str(path)] = _sha256(path)

    def render(self, outputs: dict) -> str:
        doc = dict(self.doc, outputs=outputs)
        if self.timing:
            doc["wall_time"] = time.perf_counter() - self._t0
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _emit(args, text: str):
    if getattr(args, "out", None):
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _load_state_arg(args, report: Report) -> DensityOperator:
    if args.state:
        report.add_input(args.state)
        return load_state(args.state)
    return DensityOperator(state_preset(args.preset, args.visibility))


def cmd_chsh(args, report: Report) -> int:
    state = _load_state_arg(args, report)
    if state.dim != 4:
        raise ValidationError("state is two-qubit", f"dim {state.dim}")
    out = {"S_horodecki": s_max_horodecki(state)}
    if args.optimize:
        S, angles = s_max_optimize(state, n_starts=args.starts, seed=args.seed)
        strategy = planar_qubit_strategy(state, angles)
        out.update({
            "S": S,
            "p": chsh_p(strategy),
            "alice_angles": list(angles.alice_angles),
            "bob_angles": list(angles.bob_angles),
            "alice_frame": _complex_rows(angles.alice_frame),
            "bob_frame": _complex_rows(angles.bob_frame),
        })
    else:
        a0, a1, b0, b1 = args.angles
        strategy = planar_qubit_strategy(state, PlanarAngles((a0, a1), (b0, b1)))
        out.update({"S": chsh_S(strategy), "p": chsh_p(strategy),
                    "alice_angles": [a0, a1], "bob_angles": [b0, b1]})
    _emit(args, report.render(out))
    return EXIT_OK


def _complex_rows(m) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m)]


def cmd_jordan(args, report: Report) -> int:
    if args.observables:
        report.add_input(args.observables)
        a0, a1 = load_observable_pair(args.observables)
    else:
        a0, a1 = pair_preset(args.preset)
    dec = block_diagonalize(a0, a1)
    out = dec.report(a0, a1)
    worst = max(out["reconstruction_residuals"] + [out["isometry_defect"]])
    out["residual_ok"] = worst <= JORDAN_RESIDUAL_MAX
    _emit(args, report.render(out))
    if not out["residual_ok"]:
        sys.stderr.write(f"error: invariant violated: reconstruction residual <= {JORDAN_RESIDUAL_MAX} ({worst:.3g})\n")
        return EXIT_ERROR
    return EXIT_OK


def _check_S(S: float):
    if not math.isfinite(S) or S > 2.0 * math.sqrt(2.0) + 1e-9:
        raise ValidationError("S <= 2 sqrt(2) (quantum bound)", repr(S))
    if S < 2.0:
        raise ValidationError("S >= 2", repr(S))


def cmd_keyrate(args, report: Report) -> int:
    if args.sweep:
        grid = [float(S) for S in _grid(args.sweep)]
        for S in grid:
            _check_S(S)
        rows = [(S, args.q, key_rate(S, args.q)) for S in grid]
        _emit(args, _csv(["S", "q", "rate"], rows))
        return EXIT_OK
    if args.S is None:
        raise UsageError("usage: keyrate needs --S or --sweep")
    _check_S(args.S)
    _emit(args, report.render({"S": args.S, "q": args.q, "rate": key_rate(args.S, args.q)}))
    return EXIT_OK


def cmd_estimate(args, report: Report) -> int:
    n = args.n if args.n is not None else args.m
    if args.m <= args.r:
        raise ValidationError("m > r", f"m={args.m}, r={args.r}")
    params = EstimationParams(n, args.m, args.k, args.r, args.eps, args.p)
    target = 2.0 * args.eps / 9.0
    if args.mu_grid:
        rows = [(mu, lemma1_bound(params, mu)) for mu in _grid(args.mu_grid)]
        _emit(args, _csv(["mu", "bound"], rows))
        return EXIT_OK
    out = {"params": {"n": n, "m": args.m, "k": args.k, "r": args.r, "eps": args.eps, "p": args.p},
           "target": target}
    if args.mu is not None:
        out["mu"] = args.mu
        out["bound"] = lemma1_bound(params, args.mu)
    else:
        mu = invert_mu(params, target)
        out.update({
            "mu": mu,
            "bound": lemma1_bound(params, mu),
            "mu_closed_form": mu_closed_form(params, target),
            "mu_as_printed": _nan_to_none(mu_as_printed(params)),
            "Y_threshold": args.m * (args.p + mu),
        })
    _emit(args, report.render(out))
    return EXIT_OK


def _nan_to_none(v: float):
    return None if math.isnan(v) else v


def cmd_definetti(args, report: Report) -> int:
    rs = range(args.r, args.r + 1) if args.r_sweep is None else _int_grid(args.r_sweep)
    rows = [(r, definetti_bound(args.n, args.k, r, args.dim)) for r in rs]
    _emit(args, _csv(["r", "bound"], rows))
    return EXIT_OK


def _int_grid(spec: str) -> range:
    try:
        start, stop, step = (int(v) for v in spec.split(":"))
    except ValueError:
        raise UsageError(f"integer grid spec must be start:stop:step, got {spec!r}") from None
    if step <= 0:
        raise UsageError("integer grid step must be positive")
    return range(start, stop + 1, step)


def cmd_simulate(args, report: Report) -> int:
    report.add_input(args.config)
    doc = _read_json(args.config)
    if not isinstance(doc, dict):
        raise ValidationError("config is an object")
    doc = dict(doc)
    device = device_from_spec(doc.pop("device", None))
    config = ProtocolConfig.from_dict(doc)
    report.doc["seed"] = config.seed
    tr = run_protocol(config, device)
    if args.transcript:
        tr.write(args.transcript)
    out = {k: v for k, v in tr.summary().items() if k not in ("alice_key", "bob_key", "kind")}
    out["keys_equal"] = bool(np.array_equal(tr.alice_key, tr.bob_key))
    out["status"] = "aborted" if tr.aborted else "completed"
    _emit(args, report.render(out))
    return EXIT_ABORTED if tr.aborted else EXIT_OK


def _add_common(p):
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--timing", action="store_true", help="include wall time in the report")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="diqkd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("chsh", help="CHSH value of a two-qubit state")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--state", help="state file (JSON matrix)")
    src.add_argument("--preset", choices=STATE_PRESETS)
    p.add_argument("--visibility", type=float, help="visibility for the werner preset")
    how = p.add_mutually_exclusive_group(required=True)
    how.add_argument("--optimize", action="store_true")
    how.add_argument("--angles", type=float, nargs=4, metavar=("A0", "A1", "B0", "B1"))
    p.add_argument("--starts", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    _add_common(p)
    p.set_defaults(func=cmd_chsh)

    p = sub.add_parser("jordan", help="simultaneous block form of two observables")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("observables", nargs="?", help="observable-pair file")
    src.add_argument("--preset", choices=PAIR_PRESETS)
    _add_common(p)
    p.set_defaults(func=cmd_jordan)

    p = sub.add_parser("keyrate", help="asymptotic key rate")
    p.add_argument("--S", type=float)
    p.add_argument("--q", type=float, default=0.0)
    p.add_argument("--sweep", help="S grid start:stop:step; emits CSV")
    _add_common(p)
    p.set_defaults(func=cmd_keyrate)

    p = sub.add_parser("estimate", help="estimation slack and tail bound")
    p.add_argument("--n", type=int, help="key trials (default: m)")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--r", type=int, default=0)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--p", type=float, default=0.8, help="reference success probability")
    p.add_argument("--mu", type=float, help="evaluate the bound at this slack")
    p.add_argument("--mu-grid", help="mu grid start:stop:step; emits CSV")
    _add_common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("definetti", help="finite de Finetti bound (CSV)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--r", type=int, default=0)
    p.add_argument("--r-sweep", help="integer grid start:stop:step")
    _add_common(p)
    p.set_defaults(func=cmd_definetti)

    p = sub.add_parser("simulate", help="run the protocol from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--transcript", help="write the JSONL transcript here")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
        return args.func(args, Report(args, argv))
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
    except (ValidationError, InfeasibleError) as exc:
        sys.stderr.write(f"error: {exc}\n")
    except (ValueError, OSError) as exc:
        sys.stderr.write(f"error: invariant violated: {exc}\n")
    except TypeError as exc:
        sys.stderr.write(f"error: invariant violated: config field types ({exc})\n")
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
