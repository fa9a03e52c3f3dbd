"""Command-line front end.

Subcommands: detect, sweep, section, lyapunov, hist, verify.  Every flag can
also come from a ``--config`` file of ``key = value`` lines (``#`` starts a
comment); keys are flag names without the leading dashes, and flags given on
the command line win.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .core import State
from .detector import DetectionResult, DetectorOptions, Status, detect, write_trace_csv
from .foliations import QFLOW_LABELS, TWOWAVE_LABELS, Foliation
from .integrator import StepControl
from .models import QFlowModel, QFlowParams, TwoWaveModel, TwoWaveParams

COMMANDS = ("detect", "sweep", "section", "lyapunov", "hist", "verify")
SUITE_NAMES = ("forms", "beltrami", "gradients", "residuals", "invariances", "all")

DEFAULT_FOLIATION = {"twowave": "s1", "qflow": "qpsi"}
DEFAULT_AXES = {
    "twowave": ("mu:0:0.03:100", "p0:0:1:100", "p0"),
    "qflow": ("eps:0:0.5:100", f"u0:0:{math.pi!r}:100", "uu0"),
}


class UsageError(Exception):
    """Bad command line or config file."""


@dataclass(frozen=True)
class RunConfig:
    command: str
    model: str = "twowave"
    params: Tuple[Tuple[str, float], ...] = ()
    foliation: str = "s1"
    initial: Tuple[float, float, float] = (0.0, 0.5, 0.0)
    control: StepControl = StepControl()
    t_max: float = 150.0
    singular_tol: float = 1e-6
    workers: int = 1
    seed: int = 0
    trace: Optional[str] = None
    out: Optional[str] = None
    image: Optional[str] = None
    axis1: Optional[str] = None
    axis2: Optional[str] = None
    ic_line: Optional[str] = None
    extra: Tuple[Tuple[str, object], ...] = field(default=())

    @property
    def options(self) -> DetectorOptions:
        return DetectorOptions(t_max=self.t_max, singular_tol=self.singular_tol,
                               record_trace=self.trace is not None, control=self.control)

    def model_params(self):
        kw = dict(self.params)
        return TwoWaveParams(**kw) if self.model == "twowave" else QFlowParams(**kw)

    def build_model(self):
        P = self.model_params()
        return TwoWaveModel(P) if self.model == "twowave" else QFlowModel(P)

    def state(self) -> State:
        return State(*self.initial, chart=self.model)

    def get(self, key: str):
        return dict(self.extra).get(key)


# --------------------------------------------------------------------------
# parser

def _common(p: argparse.ArgumentParser, *, model=True, ic=True, control=True) -> None:
    p.add_argument("--config", help="flat key=value file applied before flags")
    if model:
        g = p.add_argument_group("model")
        g.add_argument("--model", choices=("twowave", "qflow"), default=None,
                       help="flow model (default twowave)")
        g.add_argument("--mu", type=float, help="two-wave amplitude mu (default 0.015)")
        g.add_argument("--nu", type=float, help="relative amplitude nu (default 1)")
        g.add_argument("--k", type=int, help="second wave number k (default 1)")
        g.add_argument("--q", type=int, help="Q-flow symmetry q (default 4)")
        g.add_argument("--eps", type=float, help="Q-flow perturbation eps (default 0)")
        g.add_argument("--foliation", choices=TWOWAVE_LABELS + QFLOW_LABELS,
                       help="foliation (default s1 for twowave, qpsi for qflow)")
    if ic:
        g = p.add_argument_group("initial condition")
        for name, default in (("q0", 0.0), ("p0", 0.5), ("t0", 0.0)):
            g.add_argument(f"--{name}", type=float, help=f"two-wave {name} (default {default:g})")
        for name in ("x0", "y0", "z0"):
            g.add_argument(f"--{name}", type=float, help=f"Q-flow {name} (default 0)")
    if control:
        g = p.add_argument_group("integration")
        g.add_argument("--tmax", type=float, default=150.0, help="time cap (default 150)")
        g.add_argument("--rtol", type=float, default=1e-8, help="relative tolerance (default 1e-8)")
        g.add_argument("--atol", type=float, default=1e-10, help="absolute tolerance (default 1e-10)")
        g.add_argument("--h-max", type=float, default=0.1, help="largest step (default 0.1)")
        g.add_argument("--singular-tol", type=float, default=1e-6,
                       help="gradient norm below which a leaf is singular (default 1e-6)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conversekam",
        description="Converse KAM detection of non-existence of invariant tori in 3D flows.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="classify one initial condition")
    _common(p)
    p.add_argument("--trace", help="write a t,K,guard,c0,c1,c2 CSV trace here")

    p = sub.add_parser("sweep", help="run the detector over a parameter grid")
    _common(p, ic=False)
    p.add_argument("--axis1", help="outer axis name:lo:hi:n (mu|nu for twowave, eps for qflow)")
    p.add_argument("--axis2", help="initial-condition axis name:lo:hi:n (p0|u0|y0|x0)")
    p.add_argument("--ic-line", choices=("p0", "uu0", "y0", "x0"),
                   help="initial-condition line (p0 for twowave, uu0|y0|x0 for qflow)")
    p.add_argument("--q0", type=float, default=0.0, help="fixed q0 on the p0 line (default 0)")
    p.add_argument("--t0", type=float, default=0.0, help="fixed t0 on the p0 line (default 0)")
    p.add_argument("--workers", type=int, default=1, help="worker threads (default 1)")
    p.add_argument("--out", help="grid CSV output path")
    p.add_argument("--image", help="PGM heat-map output path")

    p = sub.add_parser("section", help="stroboscopic section (twowave) or orbit dump (qflow)")
    _common(p)
    p.add_argument("--n", type=int, default=500, help="number of crossings (default 500)")
    p.add_argument("--t-section", type=float, default=0.0, help="section phase in [0,1) (default 0)")
    p.add_argument("--dt", type=float, default=0.1, help="Q-flow sampling interval (default 0.1)")
    p.add_argument("--out", help="CSV output path (default stdout)")

    p = sub.add_parser("lyapunov", help="finite-time maximal Lyapunov exponent")
    _common(p)
    p.add_argument("--T", type=float, default=150.0, help="integration time (default 150)")
    p.add_argument("--v0", default="0,1,0", help="initial tangent vector (default 0,1,0)")

    p = sub.add_parser("hist", help="t_c histogram or 1/t_c profile of a grid CSV")
    p.add_argument("--config", help="flat key=value file applied before flags")
    p.add_argument("--input", help="grid CSV written by sweep")
    p.add_argument("--bin-width", type=float, default=5.0, help="bin width (default 5)")
    p.add_argument("--profile-row", type=int,
                   help="print 1/t_c along axis2 for this axis1 index instead of a histogram")
    p.add_argument("--out", help="CSV output path (default stdout)")

    p = sub.add_parser("verify", help="run property suites")
    p.add_argument("--config", help="flat key=value file applied before flags")
    p.add_argument("suite", nargs="?", default="all", choices=SUITE_NAMES)
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    return parser


def read_config(path: str) -> Dict[str, str]:
    """Parse a flat ``key = value`` file."""
    out: Dict[str, str] = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"--config: cannot read {path}: {exc}") from exc
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"--config {path}:{n}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for a in parser._actions:
        if isinstance(a, argparse._SubParsersAction):
            return a.choices[command]
    raise KeyError(command)


def _apply_config(sp: argparse.ArgumentParser, cfg: Dict[str, str]) -> None:
    actions = {a.dest: a for a in sp._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, text in cfg.items():
        if key not in actions:
            raise UsageError(f"--config: unknown key {key!r}")
        a = actions[key]
        try:
            val = a.type(text) if a.type else text
        except ValueError as exc:
            raise UsageError(f"--config: bad value for {key}: {text!r}") from exc
        if a.choices is not None and val not in a.choices:
            raise UsageError(f"--config: {key} must be one of {list(a.choices)}")
        defaults[key] = val
    sp.set_defaults(**defaults)


def parse_args(argv: Sequence[str]) -> RunConfig:
    """Resolve argv (and an optional config file) into a RunConfig.

    Raises UsageError naming the offending flag on invalid input.
    """
    argv = list(argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config and known.command in COMMANDS:
        _apply_config(_subparser(parser, known.command), read_config(known.config))
    try:
        ns = _parse(parser, argv)
    except _ArgError as exc:
        raise UsageError(str(exc)) from None
    return _resolve(ns)


class _ArgError(Exception):
    pass


def _parse(parser: argparse.ArgumentParser, argv: List[str]) -> argparse.Namespace:
    def fail(message):
        raise _ArgError(message)

    parser.error = fail  # type: ignore[assignment]
    for a in parser._actions:
        if isinstance(a, argparse._SubParsersAction):
            for sp in a.choices.values():
                sp.error = fail  # type: ignore[assignment]
    return parser.parse_args(argv)


def _check_positive(name: str, value) -> None:
    if value is not None and not value > 0:
        raise UsageError(f"--{name} must be positive (got {value})")


def _resolve(ns: argparse.Namespace) -> RunConfig:
    cmd = ns.command
    d = vars(ns)
    if cmd in ("hist", "verify"):
        extra = {k: v for k, v in d.items() if k not in ("command", "config")}
        return RunConfig(cmd, seed=d.get("seed", 0) or 0, out=d.get("out"),
                         extra=tuple(sorted(extra.items())))

    model = d.get("model") or "twowave"
    tw_flags = ("mu", "nu", "k")
    qf_flags = ("q", "eps")
    own, other = (tw_flags, qf_flags) if model == "twowave" else (qf_flags, tw_flags)
    for f in other:
        if d.get(f) is not None:
            raise UsageError(f"--{f} does not apply to model {model}")
    if model == "twowave":
        params = {"mu": 0.015 if d.get("mu") is None else d["mu"],
                  "nu": 1.0 if d.get("nu") is None else d["nu"],
                  "k": 1 if d.get("k") is None else d["k"]}
        if params["mu"] < 0:
            raise UsageError(f"--mu must be >= 0 (got {params['mu']})")
        if params["k"] < 1:
            raise UsageError(f"--k must be a positive integer (got {params['k']})")
    else:
        params = {"q": 4 if d.get("q") is None else d["q"],
                  "eps": 0.0 if d.get("eps") is None else d["eps"]}
        if params["q"] < 1:
            raise UsageError(f"--q must be a positive integer (got {params['q']})")
        if params["eps"] < 0:
            raise UsageError(f"--eps must be >= 0 (got {params['eps']})")

    fol = d.get("foliation") or DEFAULT_FOLIATION[model]
    labels = TWOWAVE_LABELS if model == "twowave" else QFLOW_LABELS
    if fol not in labels:
        raise UsageError(f"--foliation {fol} does not belong to model {model}")
    if fol == "s2" and params.get("k") != 1:
        raise UsageError("--foliation s2 requires --k 1")

    for name in ("tmax", "rtol", "atol", "h_max", "singular_tol"):
        _check_positive(name.replace("_", "-"), d.get(name))
    try:
        control = StepControl(rtol=d["rtol"], atol=d["atol"], h_max=d["h_max"],
                              h_init=min(1e-3, d["h_max"]), t_max=d["tmax"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    initial = (0.0, 0.5, 0.0)
    if "q0" in d and cmd != "sweep":
        tw_ic = ("q0", "p0", "t0")
        qf_ic = ("x0", "y0", "z0")
        own_ic, other_ic = (tw_ic, qf_ic) if model == "twowave" else (qf_ic, tw_ic)
        for f in other_ic:
            if d.get(f) is not None:
                raise UsageError(f"--{f} does not apply to model {model}")
        defaults = (0.0, 0.5, 0.0) if model == "twowave" else (0.0, 0.0, 0.0)
        initial = tuple(defaults[i] if d.get(f) is None else float(d[f])
                        for i, f in enumerate(own_ic))

    extra: Dict[str, object] = {}
    axis1 = axis2 = ic_line = None
    if cmd == "sweep":
        a1, a2, line = DEFAULT_AXES[model]
        axis1 = d.get("axis1") or a1
        ic_line = d.get("ic_line") or line
        axis2 = d.get("axis2") or _default_axis2(model, ic_line, a2)
        if ic_line not in (("p0",) if model == "twowave" else ("uu0", "y0", "x0")):
            raise UsageError(f"--ic-line {ic_line} does not belong to model {model}")
        if d["workers"] < 1:
            raise UsageError(f"--workers must be >= 1 (got {d['workers']})")
        extra.update(q0=d["q0"], t0=d["t0"])
        initial = (d["q0"], 0.0, d["t0"]) if model == "twowave" else (0.0, 0.0, 0.0)
    elif cmd == "section":
        if d["n"] < 1:
            raise UsageError("--n must be >= 1")
        if not 0.0 <= d["t_section"] < 1.0:
            raise UsageError("--t-section must lie in [0, 1)")
        _check_positive("dt", d["dt"])
        extra.update(n=d["n"], t_section=d["t_section"], dt=d["dt"])
    elif cmd == "lyapunov":
        _check_positive("T", d["T"])
        try:
            v0 = tuple(float(c) for c in d["v0"].split(","))
        except ValueError:
            raise UsageError(f"--v0 must be three comma-separated numbers (got {d['v0']!r})") from None
        if len(v0) != 3 or not any(v0):
            raise UsageError("--v0 must be a nonzero 3-vector")
        extra.update(T=d["T"], v0=v0)

    return RunConfig(
        command=cmd, model=model, params=tuple(sorted(params.items())), foliation=fol,
        initial=initial, control=control, t_max=d["tmax"], singular_tol=d["singular_tol"],
        workers=d.get("workers", 1), seed=0, trace=d.get("trace"), out=d.get("out"),
        image=d.get("image"), axis1=axis1, axis2=axis2, ic_line=ic_line,
        extra=tuple(sorted(extra.items())))


def _default_axis2(model: str, ic_line: str, fallback: str) -> str:
    if model == "twowave":
        return fallback
    name = {"uu0": "u0", "y0": "y0", "x0": "x0"}[ic_line]
    return f"{name}:0:{math.pi!r}:100"


# --------------------------------------------------------------------------
# commands

def _fmt(x: float) -> str:
    return repr(float(x))


def cmd_detect(cfg: RunConfig) -> int:
    model = cfg.build_model()
    fol = Foliation(cfg.foliation, model.params, cfg.singular_tol)
    r = detect(model, fol, cfg.state(), cfg.options)
    tc = "" if r.t_c is None else _fmt(r.t_c)
    msg = f"status={r.status.value} t_c={tc} n_steps={r.n_steps}"
    if r.status is Status.EXCLUDED:
        msg += f" exclusion_time={_fmt(r.exclusion_time)}"
    if r.reason:
        msg += f" reason={r.reason!r}"
    print(msg)
    if cfg.trace:
        write_trace_csv(r.trace, cfg.trace)
    return 2 if r.status is Status.ERROR else 0


def make_grid_spec(cfg: RunConfig):
    from .sweep import Axis, GridSpec
    try:
        a1, a2 = Axis.parse(cfg.axis1), Axis.parse(cfg.axis2)
    except ValueError as exc:
        raise UsageError(f"--axis1/--axis2: {exc}") from None
    params = {k: v for k, v in cfg.params if k != a1.name}
    try:
        return GridSpec(cfg.model, cfg.foliation, a1, a2, cfg.ic_line, tuple(sorted(params.items())),
                        q0=cfg.get("q0") or 0.0, t0=cfg.get("t0") or 0.0,
                        options=DetectorOptions(t_max=cfg.t_max, singular_tol=cfg.singular_tol,
                                                control=cfg.control))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_sweep(cfg: RunConfig) -> int:
    from .sweep import render_pgm, run_sweep, write_grid_csv
    spec = make_grid_spec(cfg)
    g = run_sweep(spec, cfg.workers)
    if cfg.out:
        write_grid_csv(g, cfg.out)
    if cfg.image:
        render_pgm(g, cfg.image)
    counts = {s.value: 0 for s in Status}
    for c in g.cells:
        counts[c.status.value] += 1
    print(" ".join(f"{k}={v}" for k, v in counts.items()))
    return 2 if g.n_errors else 0


def _open_out(path):
    return open(path, "w", newline="") if path else sys.stdout


def cmd_section(cfg: RunConfig) -> int:
    from .analysis import orbit_samples, poincare_section
    model = cfg.build_model()
    fh = _open_out(cfg.out)
    try:
        w = csv.writer(fh, lineterminator="\n")
        if cfg.model == "twowave":
            pts = poincare_section(model, cfg.state(), cfg.get("n"), cfg.get("t_section"), cfg.control)
            w.writerow(["crossing", "q", "p"])
            for sp in pts:
                w.writerow([sp.crossing_index, _fmt(sp.q), _fmt(sp.p)])
        else:
            rows = orbit_samples(model, cfg.state(), cfg.t_max, cfg.get("dt"), cfg.control)
            w.writerow(["t", "x", "y", "z"])
            for r in rows:
                w.writerow([_fmt(v) for v in r])
    finally:
        if cfg.out:
            fh.close()
    return 0


def cmd_lyapunov(cfg: RunConfig) -> int:
    from .analysis import ftle
    r = ftle(cfg.build_model(), cfg.state(), cfg.get("T"), cfg.get("v0"), cfg.control)
    print(f"lambda={_fmt(r.lam)} T={_fmt(r.T)} n_steps={r.n_steps}")
    return 0


def read_results_csv(path) -> List[Tuple[float, float, DetectionResult]]:
    """(axis1, axis2, result) rows of a grid CSV."""
    out = []
    try:
        with open(path, newline="") as fh:
            rd = csv.reader(fh)
            header = next(rd, None)
            if header != ["axis1", "axis2", "status", "t_c"]:
                raise UsageError(f"--input {path}: not a grid CSV")
            for x1, x2, st, tc in rd:
                s = Status(st)
                out.append((float(x1), float(x2),
                            DetectionResult(s, float(tc) if s is Status.DETECTED else None)))
    except OSError as exc:
        raise UsageError(f"--input: cannot read {path}: {exc}") from exc
    return out


def cmd_hist(cfg: RunConfig) -> int:
    from .analysis import histogram_tc, inverse_tc_profile
    path = cfg.get("input")
    if not path:
        raise UsageError("--input is required")
    rows = read_results_csv(path)
    fh = _open_out(cfg.out)
    try:
        w = csv.writer(fh, lineterminator="\n")
        row_idx = cfg.get("profile_row")
        if row_idx is not None:
            a1 = sorted({r[0] for r in rows})
            if not 0 <= row_idx < len(a1):
                raise UsageError(f"--profile-row must be in [0, {len(a1) - 1}]")
            sel = [r for r in rows if r[0] == a1[row_idx]]
            w.writerow(["axis2", "inv_tc"])
            for (_, x2, _), v in zip(sel, inverse_tc_profile([r[2] for r in sel])):
                w.writerow([_fmt(x2), _fmt(v)])
        else:
            bw = cfg.get("bin_width")
            if not bw > 0:
                raise UsageError("--bin-width must be positive")
            w.writerow(["bin_start", "count"])
            for b, c in histogram_tc([r[2] for r in rows], bw):
                w.writerow([_fmt(b), c])
    finally:
        if cfg.out:
            fh.close()
    return 0


def cmd_verify(cfg: RunConfig) -> int:
    from .verify import run_suite
    results = run_suite(cfg.get("suite"), seed=cfg.get("seed"))
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} properties passed")
    return 0 if ok else 1


HANDLERS = {
    "detect": cmd_detect,
    "sweep": cmd_sweep,
    "section": cmd_section,
    "lyapunov": cmd_lyapunov,
    "hist": cmd_hist,
    "verify": cmd_verify,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv or argv[0] in ("-h", "--help"):
        build_parser().print_help()
        return 0 if argv else 1
    try:
        cfg = parse_args(argv)
        return HANDLERS[cfg.command](cfg)
    except UsageError as exc:
        print(f"conversekam: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
