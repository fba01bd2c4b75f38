"""Command-line front end.

Every subcommand writes one CSV or JSON document (to ``--out`` or stdout)
whose metadata block records m, n, seed, budgets and the version string.
Exit codes: 0 success, 2 bad arguments, 3 numerical non-convergence,
4 budget or size cap exceeded.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import dual, estimators, limit, reporting, spectral
from .dynamics import tail_from_times
from .errors import ConvergenceError, SizeCapError
from .induced import InducedKernel, check_sizes, induced_absorption_times

EXIT_OK, EXIT_ARGS, EXIT_NUMERIC, EXIT_CAP = 0, 2, 3, 4

DEFAULT_RESTART_STEPS = 10**7
DEFAULT_REPLICAS = 10**5


def _meta(command: str, m: int, n: int, seed=None, **budgets) -> dict:
    meta = {"command": command, "m": m, "n": n}
    if seed is not None:
        meta["seed"] = seed
    meta.update({k: v for k, v in budgets.items() if v is not None})
    meta["version"] = reporting.version_string()
    return meta


def default_initial_state(n: int) -> tuple[int, int]:
    """One yes on the small side and ceil(n/2) on the large side."""
    return 1, math.ceil(n / 2)


def cmd_lambda(m: int, n: int, cap: int = spectral.DEFAULT_STATE_CAP) -> dict:
    check_sizes(m, n)
    numeric = dual.lambda_cmc_numeric(m, n)
    report = {
        "m": m,
        "n": n,
        "lambda_numeric": numeric,
        "lambda_asymptotic": dual.lambda_asymptotic(m, n),
        "one_minus_lambda": 1.0 - numeric,
    }
    values = {"numeric": numeric, "asymptotic": report["lambda_asymptotic"]}
    if m == 1:
        report["lambda_closed_m1"] = dual.lambda_closed_m1(n)
        values["closed_m1"] = report["lambda_closed_m1"]
    else:
        report["f1"], report["f2"], report["f3"] = dual.expected_absorption_times(m, n)
    dim = (m + 1) * (n + 1) - 4
    if dim <= cap:
        try:
            _, perron = spectral.exact_qsd(m, n)
            report["lambda_spectral"] = perron.lam
            values["spectral"] = perron.lam
        except ConvergenceError as exc:
            report["spectral_note"] = f"spectral route failed: {exc}"
    else:
        report["spectral_note"] = f"{dim} states exceeds cap {cap}"
    names = list(values)
    report["gaps"] = {
        f"{a}-{b}": abs(values[a] - values[b]) for i, a in enumerate(names) for b in names[i + 1 :]
    }
    return report


def cmd_qsd(
    m: int,
    n: int,
    method: str = "exact",
    seed: int = 0,
    steps: int = DEFAULT_RESTART_STEPS,
    burn_in: int | None = None,
    t_star: int | None = None,
    replicas: int = DEFAULT_REPLICAS,
) -> tuple[list, np.ndarray, dict]:
    """Return (states, probabilities, metadata) for the chosen method."""
    check_sizes(m, n)
    kernel = InducedKernel(m, n)
    initial = default_initial_state(n)
    if method == "exact":
        s, perron = spectral.exact_qsd(m, n)
        return list(s.states), perron.left_vector, _meta("qsd", m, n, method=method, lam=perron.lam)
    if method == "restart":
        est = estimators.estimate_qsd_restart(kernel, initial, steps, burn_in, seed)
        meta = _meta("qsd", m, n, seed, method=method, steps=steps, burn_in=burn_in if burn_in is not None else steps // 100)
        return list(est.states), est.probabilities(), meta
    if method == "conditional":
        if t_star is None:
            raise ValueError("--t-star is required for the conditional method")
        est = estimators.estimate_qsd_conditional(kernel, initial, t_star, replicas, seed)
        meta = _meta("qsd", m, n, seed, method=method, t_star=t_star, replicas=replicas, survivors=est.total)
        return list(est.states), est.probabilities(), meta
    raise ValueError(f"unknown method {method!r}")


def cmd_tail(
    m: int,
    n: int,
    replicas: int = DEFAULT_REPLICAS,
    horizon: int | None = None,
    seed: int = 0,
    trim: float = 0.001,
    threads: int = 1,
):
    """Survival tail from the default initial state and its regression."""
    check_sizes(m, n)
    kernel = InducedKernel(m, n)
    times = induced_absorption_times(kernel, default_initial_state(n), replicas, horizon, seed, threads=threads)
    tail = tail_from_times(times, horizon)
    report = estimators.regress_lambda(tail, trim)
    return tail, report


def cmd_sigma(m: int, n: int, samples: int = DEFAULT_REPLICAS, start: str = "SPLIT", seed: int = 0, trim: float = 0.001):
    check_sizes(m, n)
    times = dual.sample_sigma_many(m, n, dual.PairState[start], samples, seed)
    tail = tail_from_times(times)
    return tail, estimators.regress_lambda(tail, trim)


def cmd_spectrum(m: int, n: int) -> np.ndarray:
    """Rows (re, im, reflected_re) of the spectrum of S."""
    ev = spectral.full_spectrum(spectral.build_S(m, n))
    re = ev.real
    reflected = np.sort(re[0] + re[-1] - re)[::-1]
    return np.column_stack([re, ev.imag, reflected])


def cmd_limit_check(m: int, n: int) -> dict:
    s, perron = spectral.exact_qsd(m, n)
    nu, lam = perron.left_vector, perron.lam
    diag = limit.compare_to_limit(nu, m, n)
    sl = limit.sl_decompose(nu, lam, m, n)
    taylor = limit.taylor_identity_check(nu, lam, m, n, np.exp, np.exp, np.exp)
    return {
        **diag.as_dict(),
        "sl_residual": sl.residual,
        "s_telescoping": sl.s_telescoping,
        "l_telescoping": sl.l_telescoping,
        "taylor_gap": taylor.gap,
        "taylor_gap_n3": taylor.gap * n**3,
        "lambda": lam,
    }


def _emit(text: str, out: str | None) -> None:
    if out:
        reporting.atomic_write(out, text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="invasion-qsd", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--m", type=int, required=False)
    common.add_argument("--n", type=int, required=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="output file (default stdout)")
    common.add_argument("--config", default=None, help="JSON file whose keys override flags")
    common.add_argument("--threads", type=int, default=1)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("lambda", parents=[common], help="survival rate by every available route")

    p = sub.add_parser("qsd", parents=[common], help="QSD as CSV (k, l, nu)")
    p.add_argument("--method", choices=["exact", "restart", "conditional"], default="exact")
    p.add_argument("--steps", type=int, default=DEFAULT_RESTART_STEPS)
    p.add_argument("--burn-in", type=int, default=None)
    p.add_argument("--t-star", type=int, default=None)
    p.add_argument("--replicas", type=int, default=DEFAULT_REPLICAS)

    p = sub.add_parser("tail", parents=[common], help="empirical survival tail and regression")
    p.add_argument("--replicas", type=int, default=DEFAULT_REPLICAS)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--trim", type=float, default=0.001)
    p.add_argument("--report", default=None, help="regression JSON path (default stderr)")

    p = sub.add_parser("sigma", parents=[common], help="pair-chain coalescence tail and regression")
    p.add_argument("--samples", type=int, default=DEFAULT_REPLICAS)
    p.add_argument("--start", choices=[s.name for s in dual.PairState], default="SPLIT")
    p.add_argument("--trim", type=float, default=0.001)
    p.add_argument("--report", default=None)

    sub.add_parser("spectrum", parents=[common], help="eigenvalues of S with midpoint reflection")
    sub.add_parser("limit-check", parents=[common], help="distances to the large-n limit")
    return parser


def _apply_config(args: argparse.Namespace) -> argparse.Namespace:
    if args.config:
        with open(args.config) as fh:
            overrides = json.load(fh)
        for key, value in overrides.items():
            setattr(args, key.replace("-", "_"), value)
    if args.m is None or args.n is None:
        raise ValueError("--m and --n are required")
    for name in ("replicas", "samples", "steps"):
        if getattr(args, name, 1) is not None and getattr(args, name, 1) < 1:
            raise ValueError(f"--{name} must be positive")
    return args


def _run(args: argparse.Namespace) -> None:
    m, n, seed = args.m, args.n, args.seed
    cmd = args.command
    if cmd == "lambda":
        _emit(reporting.json_text(cmd_lambda(m, n), _meta(cmd, m, n)), args.out)
    elif cmd == "qsd":
        states, probs, meta = cmd_qsd(m, n, args.method, seed, args.steps, args.burn_in, args.t_star, args.replicas)
        _emit(reporting.csv_text(["k", "l", "nu"], reporting.qsd_rows(states, probs), meta), args.out)
    elif cmd in ("tail", "sigma"):
        if cmd == "tail":
            tail, report = cmd_tail(m, n, args.replicas, args.horizon, seed, args.trim, args.threads)
            meta = _meta(cmd, m, n, seed, replicas=args.replicas, horizon=args.horizon, trim=args.trim)
            count = args.replicas
        else:
            tail, report = cmd_sigma(m, n, args.samples, args.start, seed, args.trim)
            meta = _meta(cmd, m, n, seed, samples=args.samples, start=args.start, trim=args.trim)
            count = args.samples
        rows = [(t, int(round(p * count)), float(p)) for t, p in enumerate(tail)]
        _emit(reporting.csv_text(["t", "survivors", "p_hat"], rows, meta), args.out)
        payload = report.as_dict()
        if cmd == "tail":
            payload["lambda_numeric"] = dual.lambda_cmc_numeric(m, n)
        text = reporting.json_text(payload, meta)
        if args.report:
            reporting.atomic_write(args.report, text)
        else:
            sys.stderr.write(text)
    elif cmd == "spectrum":
        rows = cmd_spectrum(m, n)
        meta = _meta(cmd, m, n, max_abs_imag=float(np.abs(rows[:, 1]).max()), symmetry_gap=float(np.abs(rows[:, 0] - rows[:, 2]).max()))
        _emit(reporting.csv_text(["re", "im", "reflected_re"], rows.tolist(), meta), args.out)
    elif cmd == "limit-check":
        _emit(reporting.json_text(cmd_limit_check(m, n), _meta(cmd, m, n)), args.out)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _run(_apply_config(args))
    except SizeCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (ConvergenceError, estimators.NoSurvivorsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
