"""Command line entry point: ``robustmc <mode> --config PATH [--seed U64] [--out DIR]``.

Exit status: 0 ok, 1 invalid configuration, 2 numerical failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .binom import clopper_pearson_table, explicit_table
from .config import MODES, ConfigError, ExperimentConfig, parse_config
from .curve import global_strategy
from .margin import InconclusiveComparison, estimate_margin
from .output import (OutputError, RunLog, ci_table_csv, ci_table_svg, curve_csv, curve_svg, margin_csv,
                     out_path, write_text)
from .rng import RngStream
from .systems import NumericalError, poly_roots, step_response_specs

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


class StageError(RuntimeError):
    """A numerical failure inside a named pipeline stage."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@contextlib.contextmanager
def _stage(name):
    try:
        yield
    except (ConfigError, OutputError):
        raise
    except (NumericalError, InconclusiveComparison, OverflowError, FloatingPointError,
            np.linalg.LinAlgError, RuntimeError, ValueError, ZeroDivisionError) as exc:
        raise StageError(name, exc) from exc


def _run_margin(cfg: ExperimentConfig, log: RunLog, stream: RngStream):
    with _stage("margin"):
        try:
            init, final = estimate_margin(cfg.problem, cfg.margin, stream)
        except InconclusiveComparison as exc:
            log.add_comparisons(exc.partial.records)
            raise
    log.add_comparisons(final.records)
    log.add("margin_result", initial_a=init.a, initial_b=init.b, a=final.a, b=final.b,
            inconclusive_at=list(final.inconclusive_at))
    return init, final


def _ci_table(cfg, out):
    with _stage("ci-table"):
        exp = explicit_table(cfg.ci_n, cfg.ci_delta)
        cp = clopper_pearson_table(cfg.ci_n, cfg.ci_delta)
    files = {
        "ci_table.csv": write_text(out_path(out, "ci_table.csv"), ci_table_csv(cfg.ci_n, exp, cp)),
        "ci_table.svg": write_text(out_path(out, "ci_table.svg"), ci_table_svg(cfg.ci_n, exp, cp, cfg.ci_delta)),
    }
    width = cp[1] - cp[0]
    inflation = float(np.max((exp[1] - exp[0]) / width))
    return files, {"max_width_inflation": inflation}


def _specs(cfg, out):
    with _stage("specs"):
        d = cfg.specs_delta[None, :]
        ol_num = np.polymul(cfg.compensator.num, cfg.plant.num(d)[0])
        char = np.polyadd(np.polymul(cfg.compensator.den, cfg.plant.den(d)[0]), ol_num)
        roots = poly_roots(char)
        info = {"delta": cfg.specs_delta.tolist(), "char_poly": char.tolist(),
                "roots": [[float(z.real), float(z.imag)] for z in roots]}
        if np.all(roots.real < 0):
            spec = cfg.time_spec
            info["time_specs"] = step_response_specs(
                ol_num, char, cfg.sim,
                settle_band=spec.settle_band if spec else 0.02,
                rise_def=spec.rise_def if spec else "10-90")
        else:
            info["time_specs"] = None
    lines = [f"characteristic polynomial: {' '.join(format(c, '.12g') for c in char)}", "roots:"]
    lines += [f"  {z.real:.6f} {z.imag:+.6f}i" for z in roots]
    if info["time_specs"]:
        ts = info["time_specs"]
        lines.append(f"peak {ts['peak']:.6g}  rise time {ts['rise_time']:.6g}  "
                     f"settling time {ts['settling_time']:.6g}")
    else:
        lines.append("closed loop is not asymptotically stable; no time specs")
    print("\n".join(lines))
    files = {"specs.json": write_text(out_path(out, "specs.json"), json.dumps(info, indent=2) + "\n")}
    return files, info


def _curve(cfg, out, log, root):
    files = {}
    summary = {}
    cs = cfg.curve
    r_hat = cs.r_hat
    if r_hat is None:
        _, final = _run_margin(cfg, log, root.child(0))
        files["margin.csv"] = write_text(out_path(out, "margin.csv"), margin_csv(final.records))
        r_hat = final.b
        summary["margin"] = [final.a, final.b]
    N = cs.sample_size
    with _stage("curve"):
        res = global_strategy(cfg.problem, N, cs.epsilon, cs.delta, r_hat, cs.l, root.child(1),
                              cs.max_halvings)
    for i, c in enumerate(res.curves):
        log.add_curve(c, i)
    log.add("curve_result", R_hat=r_hat, N=N, terminated=res.terminated,
            generated_samples=res.generated_samples, intervals=len(res.curves))
    points = [p for c in res.curves for p in c.points]
    files["curve.csv"] = write_text(out_path(out, "curve.csv"), curve_csv(points))
    files["curve.svg"] = write_text(out_path(out, "curve.svg"), curve_svg(points, cs.epsilon))
    summary.update(R_hat=r_hat, N=N, terminated=res.terminated, generated_samples=res.generated_samples,
                   result=res)
    if not res.terminated:
        raise StageError("curve", "global strategy did not terminate")
    return files, summary


def run_experiment(cfg: ExperimentConfig, out_dir=".") -> dict:
    """Run one experiment and write its artifacts into ``out_dir``.

    Returns a dict with the written ``files`` and a mode specific ``summary``.
    Raises :class:`ConfigError`, :class:`StageError` or :class:`OutputError`;
    the run log is written in every case where the output directory is usable.
    """
    out = Path(out_dir)
    log = RunLog(cfg.mode, cfg.seed, cfg.text, __version__)
    root = RngStream(cfg.seed)
    files, summary = {}, {}
    try:
        if cfg.mode == "ci-table":
            files, summary = _ci_table(cfg, out)
            log.add("ci-table", N=cfg.ci_n, delta=cfg.ci_delta, **summary)
        elif cfg.mode == "specs":
            files, summary = _specs(cfg, out)
            log.add("specs", **{k: v for k, v in summary.items() if k != "time_specs"},
                    **(summary["time_specs"] or {}))
        elif cfg.mode == "margin":
            init, final = _run_margin(cfg, log, root.child(0))
            files["margin.csv"] = write_text(out_path(out, "margin.csv"), margin_csv(final.records))
            summary = {"initial": (init.a, init.b), "final": (final.a, final.b), "estimate": final}
        else:
            files, summary = _curve(cfg, out, log, root)
        log.add("status", ok=True)
    except StageError as exc:
        log.add("status", ok=False, failed_stage=exc.stage, error=str(exc.cause))
        raise
    finally:
        with contextlib.suppress(OutputError):
            files["run.jsonl"] = log.write(out_path(out, "run.jsonl"))
    return {"files": files, "summary": summary, "log": log}


def _parser():
    p = argparse.ArgumentParser(prog="robustmc", description="Monte Carlo robustness analysis")
    p.add_argument("mode", choices=MODES)
    p.add_argument("--config", help="experiment configuration (optional for demo1/demo2)")
    p.add_argument("--seed", type=int, help="unsigned 64-bit seed, overrides the config")
    p.add_argument("--out", default="robustmc-out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    text = ""
    if args.config is not None:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except UnicodeDecodeError as exc:
            print(f"error: {args.config}: not UTF-8 text ({exc.reason})", file=sys.stderr)
            return EXIT_CONFIG
        except OSError as exc:
            print(f"error: cannot read {args.config}: {exc.strerror or exc}", file=sys.stderr)
            return EXIT_IO
    elif args.mode not in ("demo1", "demo2"):
        print(f"error: mode {args.mode!r} needs --config", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(text, args.mode, args.seed)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        res = run_experiment(cfg, args.out)
    except StageError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for name, path in res["files"].items():
        print(f"wrote {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
