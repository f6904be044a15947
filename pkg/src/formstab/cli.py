"""Command-line front-end.

Subcommands: check, synthesize, simulate, pairwise, demo.  Exit codes form
a contract for CI gating: 0 = stable / envelope pass, 2 = unstable,
3 = envelope fail, 1 = usage or input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import criterion, instances, pairwise, synthesis
from .controllers import load_controller, save_controller
from .errors import FormationValidationError, FormstabError
from .linalg import Tolerances
from .model import decompose, load_formation, split_components, validate
from .simulation import (
    ConstantSignal,
    SinusoidSignal,
    ZeroSignal,
    chain_residual,
    fit_envelope,
    ideal_initial_states,
    simulate,
    write_trace_csv,
)

__all__ = ["main", "RunConfig"]

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_UNSTABLE = 2
EXIT_ENVELOPE_FAIL = 3


@dataclass(frozen=True)
class RunConfig:
    """One record of every knob the commands share."""

    eps_solve: float = 1e-8
    eps_hurwitz: float = 1e-9
    rank_cutoff: float = 1.0
    dt: float | None = None
    T: float = 20.0
    seed: int = 0
    out: str = "."

    def __post_init__(self):
        if self.eps_solve <= 0 or self.eps_hurwitz <= 0 or self.rank_cutoff <= 0:
            raise ValueError("tolerances must be positive")
        if self.T <= 0:
            raise ValueError("horizon T must be positive")
        if self.dt is not None and not 0 < self.dt < self.T:
            raise ValueError("need T > dt > 0")

    @property
    def tolerances(self) -> Tolerances:
        return Tolerances(
            eps_solve=self.eps_solve,
            eps_hurwitz=self.eps_hurwitz,
            rank_cutoff=self.rank_cutoff,
        )


def _load_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        unknown = set(data) - {
            "eps_solve",
            "eps_hurwitz",
            "rank_cutoff",
            "dt",
            "T",
            "seed",
            "out",
        }
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = replace(cfg, **data)
    overrides = {}
    for key in ("dt", "T", "seed", "out"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; 2 means "unstable" here
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_INPUT_ERROR)


def _parse_vector(text: str) -> np.ndarray:
    return np.array([float(x) for x in text.split(",")])


def _parse_signal(text: str, m: int):
    """zero | const:v1,v2,... | sin:a1,a2,...@omega[@phase]"""
    if text == "zero":
        return ZeroSignal(m)
    if text.startswith("const:"):
        c = _parse_vector(text[len("const:") :])
        if c.shape != (m,):
            raise ValueError(f"constant signal needs {m} components, got {c.shape[0]}")
        return ConstantSignal(c)
    if text.startswith("sin:"):
        body = text[len("sin:") :].split("@")
        if len(body) not in (2, 3):
            raise ValueError("sinusoid format is sin:a1,a2,...@omega[@phase]")
        amp = _parse_vector(body[0])
        if amp.shape != (m,):
            raise ValueError(f"sinusoid amplitude needs {m} components, got {amp.shape[0]}")
        omega = float(body[1])
        phase = float(body[2]) if len(body) == 3 else 0.0
        return SinusoidSignal(amp, omega, phase)
    raise ValueError(f"unknown signal spec {text!r}")


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _load_instance(path: str):
    spec = load_formation(path)
    validate(spec)
    return spec, decompose(spec)


# ---------------------------------------------------------------------------
# commands


def cmd_check(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    stem = Path(args.spec).stem
    spec = load_formation(args.spec)

    if args.split:
        parts = split_components(spec)
        all_stable = True
        for ids, sub in parts:
            validate(sub)
            rep = criterion.check(sub, decompose(sub), cfg.tolerances)
            all_stable &= rep.stable
            label = ",".join(str(i) for i in ids)
            print(f"component [{label}]: {rep.overall}")
            print(rep.format_table())
        return EXIT_OK if all_stable else EXIT_UNSTABLE

    validate(spec)
    rep = criterion.check(spec, decompose(spec), cfg.tolerances)
    _write_json(out / f"{stem}_criterion.json", rep.to_dict())
    table = rep.format_table()
    (out / f"{stem}_criterion.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return EXIT_OK if rep.stable else EXIT_UNSTABLE


def cmd_synthesize(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    stem = Path(args.spec).stem
    spec, decomp = _load_instance(args.spec)
    rep = criterion.check(spec, decomp, cfg.tolerances)
    if not rep.stable:
        print("instance is unstable; no controller exists", file=sys.stderr)
        return EXIT_UNSTABLE

    strategy = {
        "parent-only": synthesis.PARENT_ONLY,
        "uniform": synthesis.UNIFORM,
    }[args.strategy]
    if args.family > 1:
        family = synthesis.enumerate_family(
            spec, decomp, rep, args.family, rng=cfg.seed, tol=cfg.tolerances
        )
        for k, ctrl in enumerate(family):
            save_controller(ctrl, out / f"{stem}_controller_{k}.json")
        print(f"wrote {len(family)} controllers to {out}")
        ctrl = family[0]
    else:
        ctrl = synthesis.synthesize(spec, decomp, rep, strategy, cfg.tolerances)
        save_controller(ctrl, out / f"{stem}_controller.json")
        print(f"wrote controller to {out / (stem + '_controller.json')}")

    ver = criterion.verify_controller(spec, decomp, ctrl, cfg.tolerances)
    print(
        f"verification: {'pass' if ver.passed else 'FAIL'}  "
        f"matrix defect {ver.max_matrix_defect:.3e}  offset defect {ver.max_offset_defect:.3e}"
    )
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    stem = Path(args.spec).stem
    spec, decomp = _load_instance(args.spec)

    if args.controller:
        ctrl = load_controller(args.controller)
    else:
        rep = criterion.check(spec, decomp, cfg.tolerances)
        if not rep.stable:
            print("instance is unstable; cannot auto-synthesize", file=sys.stderr)
            return EXIT_UNSTABLE
        ctrl = synthesis.synthesize(spec, decomp, rep, tol=cfg.tolerances)

    if args.ideal:
        x0 = ideal_initial_states(decomp, np.zeros(spec.n))
    elif args.x0:
        rows = [_parse_vector(part) for part in args.x0.split(";")]
        if len(rows) != spec.l or any(r.shape != (spec.n,) for r in rows):
            raise ValueError(
                f"--x0 needs {spec.l} groups of {spec.n} values separated by ';'"
            )
        x0 = {i: rows[i - 1] for i in spec.nodes}
    else:  # --random is the default
        rng = np.random.default_rng(cfg.seed)
        x0 = {i: rng.standard_normal(spec.n) for i in spec.nodes}

    signals = None
    if args.signals and args.signals != "zero":
        sig = _parse_signal(args.signals, spec.m)
        signals = {i: sig for i in sorted(decomp.leaders)}

    trace = simulate(spec, decomp, ctrl, x0, signals=signals, T=cfg.T, dt=cfg.dt)
    write_trace_csv(trace, decomp, out / f"{stem}_trace.csv")
    fit = fit_envelope(trace, decomp)
    _write_json(out / f"{stem}_envelope.json", fit.to_dict())
    if args.plot:
        _write_error_svg(trace, decomp, Path(args.plot))
    print(
        f"envelope: {'pass' if fit.passed else 'FAIL'}  "
        f"max violation {fit.max_violation:.3e}  ||z(0)|| = {fit.z0_norm:.6g}"
    )
    return EXIT_OK if fit.passed else EXIT_ENVELOPE_FAIL


def cmd_pairwise(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    stem = Path(args.spec).stem
    spec, decomp = _load_instance(args.spec)
    cross = pairwise.cross_compare(spec, decomp, cfg.tolerances)
    _write_json(out / f"{stem}_pairwise.json", cross.to_dict())
    print(cross.pairwise.format_table())
    print(f"formation verdict: {cross.criterion.overall}")
    print(f"pattern: {cross.pattern}")
    return EXIT_OK


def _expect(condition: bool, message: str):
    if not condition:
        print(f"DEMO MISMATCH: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT_ERROR)
    print(f"  ok: {message}")


def cmd_demo(args) -> int:
    cfg = _load_config(args)
    try:
        spec = instances.demo_instance(args.name)
    except KeyError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INPUT_ERROR
    tol = cfg.tolerances
    decomp = decompose(spec)
    rep = criterion.check(spec, decomp, tol)
    cross = pairwise.cross_compare(spec, decomp, tol)
    print(f"demo {args.name}: verdict {rep.overall}, pattern {cross.pattern}")

    if args.name == "example2":
        _expect(rep.stable, "formation is stable")
        _expect(
            not cross.pairwise.entry((3, 2)).stable,
            "pair (3, 2) alone is unstable",
        )
        n2 = rep.gain_solution(2)
        n3 = rep.gain_solution(3)
        _expect(
            np.allclose(n2.N, [[1.0, 1.0]]) and np.allclose(n3.N, [[1.0, 1.0]]),
            "aggregate gains are [1, 1] for both followers",
        )
        _expect(
            np.allclose(n2.k_tilde, [-1.0]) and np.allclose(n3.k_tilde, [-4.0]),
            "offsets are -1 and -4",
        )
        ctrl = synthesis.synthesize(spec, decomp, rep, tol=tol)
        trace = simulate(spec, decomp, ctrl, ideal_initial_states(decomp, np.zeros(spec.n)), T=10.0)
        worst = max(float(np.abs(z).max()) for z in trace.errors.values())
        _expect(worst <= 1e-9, f"ideal run keeps errors at zero (max {worst:.2e})")
    elif args.name == "example1":
        _expect(not rep.stable, "formation is unstable")
        _expect(cross.pairs_all_stable, "all three pairs alone are stable")
        bad = [c for c in rep.condition3 if not c.passed]
        _expect(
            [c.edge for c in bad] == [(3, 1)],
            "displacement condition fails exactly on edge (3, 1)",
        )
        d = spec.displacement(3, 1)
        _expect(
            np.allclose(bad[0].defect, -d),
            "the (3, 1) defect equals minus the shared displacement",
        )
    elif args.name == "remark5":
        _expect(not rep.stable, "formation is unstable")
        _expect(rep.condition4.binding and rep.condition4.passed,
                "leader matrices agree and are Hurwitz")
        _expect(all(c.passed for c in rep.condition2), "follower equations are solvable")
        bad = [c.edge for c in rep.condition3 if not c.passed]
        _expect(bad == [(3, 1)], "condition d_31 = d_32 violated")
        print("  condition d_31 = d_32 violated: displacements toward the two "
              "leaders differ, which no control can reconcile")
    elif args.name == "triangle":
        _expect(rep.stable, "formation is stable")
        _expect(rep.applicable_corollary == "none", "no special-case corollary applies")
        ctrl = synthesis.synthesize(spec, decomp, rep, tol=tol)
        rng = np.random.default_rng(cfg.seed)
        x0 = {i: rng.standard_normal(spec.n) for i in spec.nodes}
        # the unstable leader grows like exp(2t); keep the horizon short
        # enough that roundoff stays below the envelope tolerance
        trace = simulate(spec, decomp, ctrl, x0, T=6.0)
        resid = chain_residual(trace, decomp, (3, 1), 2)
        _expect(float(resid.max()) <= 1e-9, "two-parent chain identity holds on the trace")
        fit = fit_envelope(trace, decomp)
        _expect(fit.passed, "error envelope holds")
    return EXIT_OK


# ---------------------------------------------------------------------------
# plotting (dependency-free SVG)


_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _write_error_svg(trace, decomp, path: Path, width=720, height=440):
    """Line chart of per-edge error norms over time."""
    margin = 50.0
    times = trace.times
    new = {i: decomp.new_index(i) for i in decomp.renumbering}
    edges = sorted(trace.errors.keys(), key=lambda e: (new[e[0]], new[e[1]]))
    norms = {e: np.linalg.norm(trace.errors[e], axis=1) for e in edges}
    y_max = max((float(v.max()) for v in norms.values()), default=1.0)
    y_max = y_max if y_max > 0 else 1.0
    t_max = float(times[-1]) if times[-1] > 0 else 1.0

    def sx(t):
        return margin + (width - 2 * margin) * t / t_max

    def sy(v):
        return height - margin - (height - 2 * margin) * v / y_max

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" '
        f'stroke="black"/>',
    ]
    for k in range(5):
        t = t_max * k / 4
        v = y_max * k / 4
        parts.append(
            f'<text x="{sx(t):.1f}" y="{height - margin + 18:.1f}" font-size="11" '
            f'text-anchor="middle">{t:.3g}</text>'
        )
        parts.append(
            f'<text x="{margin - 6:.1f}" y="{sy(v) + 4:.1f}" font-size="11" '
            f'text-anchor="end">{v:.3g}</text>'
        )
    parts.append(
        f'<text x="{width / 2:.1f}" y="{height - 10:.1f}" font-size="12" '
        f'text-anchor="middle">t</text>'
    )
    for idx, e in enumerate(edges):
        color = _PALETTE[idx % len(_PALETTE)]
        pts = " ".join(
            f"{sx(float(t)):.2f},{sy(float(v)):.2f}" for t, v in zip(times, norms[e])
        )
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>'
        )
        parts.append(
            f'<text x="{width - margin + 4:.1f}" y="{margin + 14 * idx + 10:.1f}" '
            f'font-size="11" fill="{color}">z_{e[0]}_{e[1]}</text>'
        )
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="formstab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_spec=True):
        if with_spec:
            p.add_argument("spec", help="formation instance file (JSON)")
        p.add_argument("--config", help="config file (JSON)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--dt", type=float, default=None)
        p.add_argument("--T", type=float, default=None)
        p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("check", help="decide internal stability")
    common(p)
    p.add_argument("--split", action="store_true",
                   help="analyze each weak component independently")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("synthesize", help="construct a stabilizing controller")
    common(p)
    p.add_argument("--strategy", choices=["parent-only", "uniform"], default="parent-only")
    p.add_argument("--family", type=int, default=1,
                   help="sample this many members of the controller family")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("simulate", help="integrate the closed loop and check the envelope")
    common(p)
    p.add_argument("--controller", help="controller file (JSON); default: synthesize")
    p.add_argument("--auto", action="store_true",
                   help="synthesize the controller (same as omitting --controller)")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--ideal", action="store_true",
                       help="start every agent at its ideal offset")
    group.add_argument("--random", action="store_true",
                       help="random initial states (default)")
    group.add_argument("--x0", help="explicit initial states: 'v1,v2;v1,v2;...'")
    p.add_argument("--signals", default="zero",
                   help="leader inputs: zero | const:v1,... | sin:a1,...@omega[@phase]")
    p.add_argument("--plot", help="write an SVG chart of error norms to this path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pairwise", help="analyze every edge as a two-agent formation")
    common(p)
    p.set_defaults(func=cmd_pairwise)

    p = sub.add_parser("demo", help="run a bundled instance end to end")
    p.add_argument("name", help="one of: " + ", ".join(sorted(instances.DEMO_BUILDERS)))
    p.add_argument("--config", help="config file (JSON)")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_demo)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except FormationValidationError as exc:
        print("invalid formation:", file=sys.stderr)
        for v in exc.violations:
            print(f"  - {v}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except SystemExit as exc:
        return int(exc.code or 0)
    except FormstabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
