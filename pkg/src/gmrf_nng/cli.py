"""Command-line experiment runner.

Every subcommand takes ``--seed``, ``--out``, ``--config``, ``--format`` and
``--workers``. Settings come from built-in defaults, then the optional
``key = value`` config file, then explicit flags. Exit codes: 0 success,
1 validation failure, 2 bad arguments or unwritable output.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from pathlib import Path

from . import rng as _rng
from .detection import NpConfig, calibrate_threshold, estimate_miss_probability, llr_spectrum_mean
from .exponent import closed_form_exponent, iid_exponent
from .geometry import build_nng, geometry_statistics, sample_points, write_graph
from .gmrf import MAX_NUGGET, CorrelationModel, GmrfParams, covariance_matrix, potential_matrix, write_matrix_csv

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# option parsing


def _float(text) -> float:
    v = float(text)
    if math.isnan(v):
        raise ValueError("nan is not a valid number")
    return v


def _float_list(text) -> list[float]:
    """``a,b,c`` or inclusive ``start:stop:step``."""
    text = str(text).strip()
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
            raise ValueError(f"bad range {text!r}; expected start:stop:step")
        start, stop, step = parts
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + k * step, 12) for k in range(count)]
    return [_float(p) for p in text.split(",") if p.strip()]


def _int_list(text) -> list[int]:
    out = []
    for v in _float_list(text):
        if v != int(v):
            raise ValueError(f"{v} is not an integer")
        out.append(int(v))
    return out


def _bool(text) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"{text!r} is not one of {', '.join(options)}")
        return text

    return parse


K_DB_DEFAULT = 10 * math.log10(4.0)

COMMON = {
    "seed": (int, 0, "base seed for every random stream"),
    "out": (str, "-", "output file (directory for graph-dump); '-' is stdout"),
    "format": (_choice("csv", "csv+svg"), "csv", "csv, or csv plus an SVG plot next to --out"),
    "workers": (int, 1, "threads for Monte Carlo replicates (results do not depend on it)"),
}
MODEL = {
    "k_db": (_float, K_DB_DEFAULT, "variance ratio K in dB"),
    "m": (_float, 0.5, "nugget M"),
    "a": (_float, 0.5, "decay a ('inf' allowed for the exponential family)"),
    "family": (_choice("exponential", "rational", "constant"), "exponential", "correlation family"),
    "lam": (_float, 1.0, "node density"),
    "sigma0_sq": (_float, 1.0, "null variance"),
    "process": (_choice("binomial", "poisson"), "binomial", "point process"),
}

COMMANDS: dict[str, dict] = {
    "exponent-grid": {
        "k_db": (_float_list, "-10:20:1", "K in dB: list or start:stop:step"),
        "m": (_float_list, "0.5", "nugget values"),
        "a": (_float_list, "0,0.5,inf", "decay values; inf gives the independent exponent"),
        "lam": (_float_list, "1", "densities"),
        "family": MODEL["family"],
        "method": (_choice("quadrature", "monte_carlo"), "quadrature", "expectation method"),
        "mc_samples": (int, 1_000_000, "Monte Carlo samples per expectation"),
    },
    "spectrum": {
        "n": (_int_list, "1000,5000,20000", "ladder of node counts"),
        "reps": (int, 50, "replicates per n"),
        "single_realization": (_bool, False, "use one realization per n (no averaging)"),
        **MODEL,
    },
    "detect-sim": {
        "n": (_int_list, "8,16,32,64", "ladder of node counts"),
        "alpha": (_float, 0.1, "false-alarm level"),
        "reps": (int, 10_000, "alternative replicates per n"),
        "calibration_reps": (int, 10_000, "null replicates for the threshold"),
        **MODEL,
    },
    "geometry-stats": {
        "n": (_int_list, "100000", "node counts"),
        "lam": (_float_list, "1", "densities"),
        "process": (_choice("binomial", "poisson"), "poisson", "point process"),
    },
    "graph-dump": {
        "n": (int, 100, "node count"),
        "matrices": (_bool, False, "also write covariance.csv and potential.csv"),
        **MODEL,
    },
    "validate": {},
}


def _parse_config(path: str) -> dict[str, str]:
    values = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gmrf-nng", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, table in COMMANDS.items():
        p = sub.add_parser(name, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="key = value file; flags override it")
        for key, (_, default, help_) in {**COMMON, **table}.items():
            p.add_argument("--" + key.replace("_", "-"), dest=key, help=f"{help_} (default: {default})")
    return parser


def resolve_options(command: str, explicit: dict) -> argparse.Namespace:
    table = {**COMMON, **COMMANDS[command]}
    raw = {k: v[1] for k, v in table.items()}
    if explicit.get("config"):
        file_values = _parse_config(explicit["config"])
        unknown = sorted(set(file_values) - set(table))
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
        raw.update(file_values)
    raw.update({k: v for k, v in explicit.items() if k in table})
    opts = {}
    for key, value in raw.items():
        try:
            opts[key] = table[key][0](value)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"--{key.replace('_', '-')}: {exc}") from exc
    return argparse.Namespace(**opts)


# ---------------------------------------------------------------------------
# helpers


def fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, int)) and not isinstance(v, float):
        return str(int(v))
    return f"{float(v):.12g}"


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _emit(text: str, out: str) -> None:
    if out == "-":
        sys.stdout.write(text)
        return
    try:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise UsageError(f"cannot write {out}: {exc}") from exc


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise UsageError(message)


def _check_model(m: float, a: float, lam: float, family: str) -> None:
    _require(0.0 <= m <= MAX_NUGGET, f"M must lie in [0, {MAX_NUGGET}], got {m}")
    _require(a >= 0, f"a must be nonnegative, got {a}")
    _require(not (math.isinf(a) and family != "exponential"), "a = inf needs the exponential family")
    _require(math.isfinite(lam) and lam > 0, f"density must be positive, got {lam}")


def _check_common(o) -> None:
    _require(o.workers >= 1, "workers must be at least 1")
    _require(not (o.format == "csv+svg" and o.out == "-"), "--format csv+svg needs --out <file>")


def _params(o) -> GmrfParams:
    _check_model(o.m, o.a, o.lam, o.family)
    _require(math.isfinite(o.k_db), "K in dB must be finite")
    _require(math.isfinite(o.sigma0_sq) and o.sigma0_sq > 0, "sigma0_sq must be positive")
    return GmrfParams.from_ratio(10 ** (o.k_db / 10), CorrelationModel(o.family, o.m, o.a), o.sigma0_sq)


# ---------------------------------------------------------------------------
# commands


def cmd_exponent_grid(o) -> int:
    _check_common(o)
    _require(bool(o.k_db and o.m and o.a and o.lam), "every grid axis needs at least one value")
    for m in o.m:
        for a in o.a:
            for lam in o.lam:
                _check_model(m, a, lam, o.family)
    _require(o.mc_samples >= 2, "mc_samples must be at least 2")
    rows = []
    series: dict[str, tuple[list[float], list[float]]] = {}
    for m in o.m:
        for a in o.a:
            for lam in o.lam:
                label = f"M={fmt(m)}, a={fmt(a)}" + (f", lambda={fmt(lam)}" if len(o.lam) > 1 else "")
                xs, ys = series.setdefault(label, ([], []))
                model = CorrelationModel(o.family, m, a)
                for k_db in o.k_db:
                    K = 10 ** (k_db / 10)
                    if math.isinf(a):
                        edge, iid, err = 0.0, iid_exponent(K), 0.0
                        d = iid
                    else:
                        res = closed_form_exponent(K, model, lam, o.method, o.mc_samples, o.seed)
                        d, edge, iid, err = res.D, res.edge_term, res.iid_term, res.error_estimate
                    rows.append([k_db, m, a, lam, d, edge, iid, o.method, err])
                    xs.append(k_db)
                    ys.append(d)
    header = ["K_db", "M", "a", "lambda", "D", "edge_term", "iid_term", "method", "error_estimate"]
    _emit(_csv_text(header, rows), o.out)
    if o.format == "csv+svg":
        from .plotting import exponent_svg

        try:
            exponent_svg(series, Path(o.out).with_suffix(".svg"))
        except OSError as exc:
            raise UsageError(f"cannot write SVG: {exc}") from exc
    return EXIT_OK


def cmd_spectrum(o) -> int:
    _check_common(o)
    params = _params(o)
    _require(all(n >= 2 for n in o.n), "every n must be at least 2")
    reps = 1 if o.single_realization else o.reps
    _require(reps >= 1, "reps must be positive")
    D = closed_form_exponent(params.K, params.correlation, o.lam).D
    rows = []
    for n in o.n:
        est = llr_spectrum_mean(n, params, o.lam, reps, _rng.derive_seed(o.seed, n), o.process, o.workers)
        rows.append([n, reps, est.mean, est.stderr, D, abs(est.mean - D)])
    _emit(_csv_text(["n", "reps", "mean", "stderr", "closed_form_D", "abs_gap"], rows), o.out)
    return EXIT_OK


def cmd_detect_sim(o) -> int:
    _check_common(o)
    params = _params(o)
    _require(all(n >= 2 for n in o.n), "every n must be at least 2")
    _require(0 < o.alpha < 1, "alpha must lie in (0, 1)")
    _require(o.reps >= 1000, "reps must be at least 1000")
    _require(o.calibration_reps >= 1000, "calibration_reps must be at least 1000")
    _require(o.alpha * o.calibration_reps >= 20, "alpha * calibration_reps must be at least 20")
    config = NpConfig(o.alpha, o.calibration_reps)
    rows = []
    for n in o.n:
        seed = _rng.derive_seed(o.seed, n)
        tau = calibrate_threshold(n, config, params, o.lam, seed, o.process, o.workers)
        est = estimate_miss_probability(n, tau, params, o.lam, o.reps, seed, o.process, o.workers)
        if est.zero_events:
            print(f"note: n={n}: no misses in {o.reps} replicates; exponent column is a lower bound", file=sys.stderr)
            rate = -math.log(est.ci_hi) / n
        else:
            rate = -math.log(est.p) / n
        rows.append([n, o.alpha, tau, est.p, est.ci_lo, est.ci_hi, rate])
    header = ["n", "alpha", "threshold", "p_miss", "ci_lo", "ci_hi", "minus_log_pm_over_n"]
    _emit(_csv_text(header, rows), o.out)
    return EXIT_OK


def cmd_geometry_stats(o) -> int:
    _check_common(o)
    _require(all(n >= 2 for n in o.n), "every n must be at least 2")
    _require(all(math.isfinite(lam) and lam > 0 for lam in o.lam), "densities must be positive")
    rows = []
    for n in o.n:
        for k, lam in enumerate(o.lam):
            ps = sample_points(n, lam, _rng.derive_seed(o.seed, n, k), o.process)
            stats = geometry_statistics(build_nng(ps))
            rows.append([ps.n, lam, stats.biroot_fraction, stats.edges_per_node, stats.ks_distance])
    header = ["n", "lambda", "biroot_fraction", "edges_per_node", "ks_distance_nn_tail"]
    _emit(_csv_text(header, rows), o.out)
    return EXIT_OK


def cmd_graph_dump(o) -> int:
    _check_common(o)
    _require(o.out != "-", "graph-dump needs --out <directory>")
    _require(o.n >= 2, "n must be at least 2")
    params = _params(o)
    nng = build_nng(sample_points(o.n, o.lam, o.seed, o.process))
    try:
        write_graph(nng, o.out)
        if o.matrices:
            write_matrix_csv(covariance_matrix(nng, params), Path(o.out) / "covariance.csv")
            write_matrix_csv(potential_matrix(nng, params), Path(o.out) / "potential.csv")
    except OSError as exc:
        raise UsageError(f"cannot write to {o.out}: {exc}") from exc
    return EXIT_OK


def cmd_validate(o) -> int:
    from .validation import run_all

    results = run_all(o.seed)
    lines = [r.line() for r in results]
    failed = sum(not r.passed for r in results)
    lines.append(f"{len(results) - failed}/{len(results)} checks passed")
    _emit("\n".join(lines) + "\n", o.out)
    return EXIT_OK if failed == 0 else EXIT_FAIL


HANDLERS = {
    "exponent-grid": cmd_exponent_grid,
    "spectrum": cmd_spectrum,
    "detect-sim": cmd_detect_sim,
    "geometry-stats": cmd_geometry_stats,
    "graph-dump": cmd_graph_dump,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    explicit = {k: v for k, v in vars(ns).items() if k != "command"}
    try:
        opts = resolve_options(ns.command, explicit)
        return HANDLERS[ns.command](opts)
    except (UsageError, ValueError) as exc:
        print(f"gmrf-nng {ns.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
