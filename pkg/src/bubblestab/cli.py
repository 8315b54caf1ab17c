"""Command-line scenario runner.

Every command reads an optional key=value config file, writes its artifacts into the
output directory and prints a short report. Exit status: 0 success, 2 invalid input,
3 cache refusal (fingerprint or integrity), 4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import cache, evolve, extension, modal_control, nonlinear, presets, steklov
from .config import BubbleConfig, ConfigError, fingerprint, load_config
from .geometry import rigid_project

EXIT_INPUT, EXIT_CACHE, EXIT_NUMERIC = 2, 3, 4


def _fmt(x: float) -> str:
    return "%.16e" % x


def _header(kind: str, fp: str, columns: list[str]) -> str:
    return f"# bubblestab {kind} fingerprint={fp}\n" + ",".join(columns) + "\n"


def _operator(cfg: BubbleConfig, args) -> steklov.SteklovOperator:
    expected = fingerprint(steklov.operator_params(cfg, args.backend))
    if args.operator:
        P = steklov.loads(Path(args.operator).read_text(), expected)
        print(f"operator loaded from {args.operator}")
        return P
    P, hit = steklov.load_or_assemble(cfg, args.backend, Path(args.cache_dir))
    print(f"operator {P.fingerprint}: {'cache hit' if hit else 'assembled and cached'}")
    return P


def _law(P, cfg: BubbleConfig, args) -> modal_control.FeedbackLaw:
    spec = modal_control.mode_spectrum(P, cfg)
    return modal_control.build_feedback(P, spec, cfg.lam, cfg, include_rotation=not args.exclude_rotation)


def cmd_steklov(cfg, args, out: Path) -> None:
    P = _operator(cfg, args)
    cols = ["k"] + [f"{part}_{e}" for e in ("nn", "nt", "tn", "tt") for part in ("re", "im")]
    lines = [_header("steklov", P.fingerprint, cols)]
    for k in range(P.K + 1):
        b = P.block(k).ravel()
        vals = [v for z in b for v in (z.real, z.imag)]
        lines.append(",".join([str(k)] + [_fmt(v) for v in vals]) + "\n")
    (out / "steklov_blocks.csv").write_text("".join(lines))


def cmd_spectrum(cfg, args, out: Path) -> None:
    P = _operator(cfg, args)
    spec = modal_control.mode_spectrum(P, cfg)
    fp = fingerprint({**cfg.as_dict(), "backend": args.backend})
    lines = [_header("spectrum", fp, ["k", "eig_1", "eig_2", "tag_1", "tag_2"])]
    for m in spec.modes:
        lines.append(f"{m.k},{_fmt(m.values[0])},{_fmt(m.values[1])},{m.tags[0]},{m.tags[1]}\n")
    (out / "spectrum.csv").write_text("".join(lines))
    print(f"slowest nonzero decay rate: {modal_control.slowest_nonzero_rate(spec):.6g}")


def cmd_feedback(cfg, args, out: Path) -> None:
    P = _operator(cfg, args)
    law = _law(P, cfg, args)
    (out / "feedback_law.json").write_text(modal_control.dumps(law))
    lines = [f"lambda: {law.lam!r}", f"unstable directions: {len(law.unstable)}"]
    for d in law.unstable:
        lines.append(f"  k={d.k} eigenvalue={d.value:.6g} {d.tag}".rstrip())
    lines.append(f"max Riccati residual: {max(law.riccati_residuals.values(), default=0.0):.3e}")
    lines.append(f"closed-loop margin: {law.closed_loop_margin:.6g}")
    text = "\n".join(lines) + "\n"
    (out / "feedback_report.txt").write_text(text)
    print(text, end="")


def _initial(cfg, args):
    Z0 = presets.parse(args.initial, cfg.K, cfg.R_s)
    c = Z0.coeffs.copy()
    c[cfg.K, 0] = 0.0
    return type(Z0)(c)


def cmd_simulate(cfg, args, out: Path) -> None:
    P = _operator(cfg, args)
    Z0 = _initial(cfg, args)
    law = None if args.open_loop else _law(P, cfg, args)
    traj = evolve.simulate_linear(Z0, P, cfg, law)
    fp = fingerprint({**cfg.as_dict(), "initial": args.initial, "open_loop": args.open_loop,
                      "exclude_rotation": args.exclude_rotation, "backend": args.backend})
    evolve.write_csv(traj, out / "trajectory.csv", fp)
    g = traj.diagnostics["grad_sq"]
    res = traj.diagnostics["energy_residual"]
    lines = [f"mode: {'open loop' if law is None else 'closed loop'}", f"steps: {len(traj.times) - 1}"]
    try:
        lines.append(f"fitted decay rate (raw): {evolve.decay_fit(traj, 'raw'):.6g}")
        lines.append(f"fitted decay rate (quotient): {evolve.decay_fit(traj, 'quotient'):.6g}")
    except evolve.UndefinedRateError as exc:
        lines.append(f"fitted decay rate: undefined ({exc})")
    lines.append(f"max |energy residual|: {np.abs(res).max():.3e}")
    lines.append(f"max step increase of |grad Z|^2: {np.diff(g).max(initial=0.0):.3e}")
    lines.append(f"gradient norm monotone: {bool(np.all(np.diff(g) <= 1e-12 * max(1.0, g[0])))}")
    text = "\n".join(lines) + "\n"
    (out / "simulate_report.txt").write_text(text)
    print(text, end="")


def cmd_simulate_nonlinear(cfg, args, out: Path) -> None:
    P = _operator(cfg, args)
    law = _law(P, cfg, args)
    X0 = presets.parse(args.initial, cfg.K, cfg.R_s)
    traj, rep = nonlinear.stabilize_nonlinear(X0, law, P, cfg, tol=args.tol, max_iter=args.max_iter)
    fp = fingerprint({**cfg.as_dict(), "initial": args.initial, "exclude_rotation": args.exclude_rotation,
                      "backend": args.backend, "nonlinear": True})
    evolve.write_csv(traj, out / "trajectory.csv", fp)
    text = rep.as_text()
    (out / "nonlinear_report.txt").write_text(text)
    print(text, end="")
    if not rep.converged:
        raise RuntimeError(rep.message)


def cmd_extension_check(cfg, args, out: Path) -> None:
    Z = presets.parse(args.initial, cfg.K, cfg.R_s)
    E = extension.harmonic_extend(Z, cfg)
    d_in, d_out = E.jacobian_det("inner"), E.jacobian_det("outer")
    errs = extension.boundary_errors(E, Z)
    shape = rigid_project(Z)
    lines = [
        f"min det (disk): {d_in.min():.6g}",
        f"min det (annulus): {d_out.min():.6g}",
        f"mean det: {np.mean(np.concatenate([d_in.ravel(), d_out.ravel()])):.6g}",
        f"interface reproduction error: {max(errs['inner'], errs['outer']):.3e}",
        f"wall trace: {errs['wall']:.3e}",
        f"harmonicity residual: {extension.harmonicity_residual(E):.3e}",
        f"maximum principle: {extension.maximum_principle(E)}",
        f"annulus circles nested: {extension.winding_check(E)}",
    ]
    if np.abs(shape.coeffs).max() > 0:
        unit = shape * (1.0 / np.abs(shape.coeffs).max())
        thr = extension.folding_threshold(unit, cfg)
        lines.append(f"folding threshold (max-coefficient scale): {thr:.6g}")
    else:
        lines.append("folding threshold: none (rigid displacement)")
    text = "\n".join(lines) + "\n"
    (out / "extension_report.txt").write_text(text)
    print(text, end="")


COMMANDS = {
    "steklov": cmd_steklov,
    "spectrum": cmd_spectrum,
    "feedback": cmd_feedback,
    "simulate": cmd_simulate,
    "simulate-nonlinear": cmd_simulate_nonlinear,
    "extension-check": cmd_extension_check,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bubblestab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="key = value parameter file (defaults used when omitted)")
    ap.add_argument("--initial", default="ellipse(0.005)",
                    help="ellipse(a) | mode(k, amp_n, amp_t) | translation(cx[, cy]) | file(path)")
    ap.add_argument("--out", default="bubblestab-out", help="output directory")
    ap.add_argument("--cache-dir", default=None, help="operator cache directory (default: <out>/cache)")
    ap.add_argument("--operator", help="load this cached operator file instead of the cache directory")
    ap.add_argument("--backend", choices=steklov.BACKENDS, default="analytic")
    ap.add_argument("--open-loop", action="store_true", help="simulate without feedback")
    ap.add_argument("--exclude-rotation", action="store_true",
                    help="leave the rotation mode out of the controlled set")
    ap.add_argument("--tol", type=float, default=1e-8, help="Picard tolerance")
    ap.add_argument("--max-iter", type=int, default=30, help="Picard iteration limit")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for name, msg in exc.problems.items():
            print(f"config error: {name}: {msg}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.cache_dir is None:
        args.cache_dir = str(out / "cache")
    try:
        COMMANDS[args.command](cfg, args, out)
    except cache.FingerprintMismatchError as exc:
        print(f"refusing cached data: expected fingerprint {exc.expected}, file has {exc.found}", file=sys.stderr)
        return EXIT_CACHE
    except cache.CacheIntegrityError as exc:
        print(f"refusing cached data: {exc}", file=sys.stderr)
        return EXIT_CACHE
    except (presets.PresetError, nonlinear.SmallnessError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
