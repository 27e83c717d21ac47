"""Command-line front end.

    approxai [--config F] [--workers W] [--seed S] [--out-dir D] explain ig|shapley|distill ...
    approxai ... optimize-levels --size N --psnr-db P [--energy-budget E] [--prob Q] ...
    approxai ... bench --size N (--level L | --schedule a,b,... | --psnr-db P) ...

Exit status: 0 on success, 2 on invalid input, 3 when the request cannot
be met (infeasible constraints, too many Shapley features). Nothing is
written unless the whole command succeeds.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
import zlib
from pathlib import Path

import numpy as np

from . import apxnum, io, levelopt, xai_distill, xai_ig, xai_shapley
from .apxfft import LevelSchedule, ax_fft, fft_exact, log2_exact, psnr_values
from .apxnum import EnergyLedger
from .errors import ApproxAIError, InfeasibleError, TooManyFeaturesError
from .tinymodel import forward, load_model, model_digest

EXIT_OK, EXIT_INVALID, EXIT_UNMET = 0, 2, 3


class CliError(Exception):
    def __init__(self, msg, code=EXIT_INVALID):
        super().__init__(msg)
        self.code = code


def rng_for(seed: int, name: str) -> np.random.Generator:
    """Independent stream per named consumer, all derived from one seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))


def _level_arg(text: str):
    if text == "auto":
        return text
    try:
        return apxnum.as_level(int(text))
    except (ValueError, ApproxAIError):
        raise argparse.ArgumentTypeError(f"level must be 0..11 or 'auto', got {text!r}") from None


def _levels_arg(text: str) -> tuple:
    try:
        return tuple(apxnum.as_level(int(v)) for v in text.split(","))
    except (ValueError, ApproxAIError):
        raise argparse.ArgumentTypeError(f"bad schedule {text!r}") from None


def _groups_arg(text: str) -> tuple:
    try:
        return tuple(tuple(int(v) for v in g.split(",")) for g in text.split(";") if g.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad groups {text!r}; use '0,1;2;3'") from None


def _pos_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="approxai", description="Approximate-arithmetic XAI toolkit.")
    p.add_argument("--config", help=f"JSON config (default: ${io.CONFIG_ENV})")
    p.add_argument("--workers", type=_pos_int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default="out")
    sub = p.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("explain", help="attribute a model's output to its inputs")
    exs = ex.add_subparsers(dest="kind", required=True)
    for kind in ("ig", "shapley"):
        e = exs.add_parser(kind)
        e.add_argument("--model", required=True)
        e.add_argument("--input", required=True)
        e.add_argument("--baseline", default="zeros", help="'zeros' or a CSV file")
        e.add_argument("--class-index", type=int, default=0)
        e.add_argument("--level", type=_level_arg, default=None)
    ig = exs.choices["ig"]
    ig.add_argument("--steps", type=int, default=9)
    ig.add_argument("--t", type=_pos_int, default=8)
    sh = exs.choices["shapley"]
    sh.add_argument("--groups", type=_groups_arg, default=None)
    sh.add_argument("--features-cap", type=_pos_int, default=xai_shapley.MAX_FEATURES)
    di = exs.add_parser("distill")
    di.add_argument("--input", required=True, help="2-D CSV map X")
    src = di.add_mutually_exclusive_group(required=True)
    src.add_argument("--response", help="2-D CSV map Y")
    src.add_argument("--model", help="model whose output, tiled to X's shape, is Y")
    di.add_argument("--level", type=_level_arg, default=None)
    di.add_argument("--eps", type=float, default=xai_distill.DEFAULT_EPS)
    di.add_argument("--no-contributions", action="store_true")

    op = sub.add_parser("optimize-levels", help="choose per-stage FFT levels")
    op.add_argument("--size", type=int, required=True)
    op.add_argument("--psnr-db", type=float, required=True)
    op.add_argument("--energy-budget", type=float, default=math.inf)
    op.add_argument("--prob", type=float, default=0.9)
    op.add_argument("--samples", type=_pos_int, default=100)
    op.add_argument("--seed", type=int, default=None, dest="sub_seed")
    op.add_argument("--mode", choices=levelopt.MODES, default="auto")

    be = sub.add_parser("bench", help="energy ratio and PSNR of a schedule against all-11")
    be.add_argument("--size", type=int, required=True)
    how = be.add_mutually_exclusive_group(required=True)
    how.add_argument("--level", type=_level_arg)
    how.add_argument("--schedule", type=_levels_arg)
    how.add_argument("--psnr-db", type=float, help="optimize the schedule first")
    be.add_argument("--prob", type=float, default=0.9)
    be.add_argument("--samples", type=_pos_int, default=100)
    be.add_argument("--seed", type=int, default=None, dest="sub_seed")
    return p


class Context:
    def __init__(self, args):
        self.args = args
        self.cfg = io.load_config(args.config)
        self.table = io.energy_table(self.cfg)
        self.table_label = "config" if "energy_table" in self.cfg else "default"
        self.workers = args.workers or int(self.cfg.get("workers", 1))
        seed = getattr(args, "sub_seed", None)
        if seed is None:
            seed = args.seed
        self.seed = int(self.cfg.get("seed", 0) if seed is None else seed)

    def level(self, value):
        if value is None:
            value = self.cfg.get("level", apxnum.EXACT_LEVEL)
        return value if value == "auto" else apxnum.as_level(value)


def _load_pair(model_path, input_path, baseline):
    m = load_model(model_path)
    x = io.read_matrix(input_path)
    if x.size != int(np.prod(m.input_shape)):
        raise CliError(f"{input_path}: input size does not match model input {m.input_shape}")
    x = x.reshape(m.input_shape)
    if baseline == "zeros":
        xb = np.zeros(m.input_shape)
    else:
        b = io.read_matrix(baseline)
        if b.size != x.size:
            raise CliError(f"{baseline}: baseline size does not match input")
        xb = b.reshape(m.input_shape)
    digests = {"model": model_digest(m), "input": io.file_digest(input_path)}
    if baseline != "zeros":
        digests["baseline"] = io.file_digest(baseline)
    return m, x, xb, digests


def _neighbours(x, ctx, name, count=8, scale=0.1):
    rng = rng_for(ctx.seed, name)
    return [x] + [x + rng.normal(0.0, scale, x.shape) for _ in range(count - 1)]


def _payload_files(stem, values, shape):
    """CSV always; a PGM heatmap too when the payload is a 2-D map (after squeezing)."""
    shape = tuple(d for d in shape if d != 1) or (1,)
    values = np.asarray(values).reshape(shape)
    files = {f"{stem}.csv": io.format_csv(values)}
    if values.ndim == 2:
        files[f"{stem}.pgm"] = io.format_pgm(values)
    return files


def cmd_explain_ig(ctx: Context):
    a = ctx.args
    m, x, xb, digests = _load_pair(a.model, a.input, a.baseline)
    level = ctx.level(a.level)
    base = xai_ig.IGConfig(n=a.steps, t=a.t, class_index=a.class_index, workers=ctx.workers)
    if level == "auto":
        level, _ = xai_ig.select_level(m, _neighbours(x, ctx, "ig-level"), xb, base)
    cfg = xai_ig.IGConfig(n=a.steps, t=a.t, class_index=a.class_index, level=level,
                          workers=ctx.workers)
    ledger = EnergyLedger(ctx.table)
    res = xai_ig.attribute(m, x, xb, cfg, ledger)
    report = {"command": "explain ig", "inputs": digests, "level": level, "steps": a.steps,
              "t": a.t, "class_index": a.class_index, "attribution": res.to_dict(),
              "energy_units": ledger.total}
    return report, _payload_files("attribution", res.values, m.input_shape)


def cmd_explain_shapley(ctx: Context):
    a = ctx.args
    m, x, xb, digests = _load_pair(a.model, a.input, a.baseline)
    level = ctx.level(a.level)
    cfg = xai_shapley.ShapleyConfig(workers=ctx.workers, baseline=xb, class_index=a.class_index,
                                    groups=a.groups, max_features=a.features_cap)
    if level == "auto":
        level, _ = xai_shapley.select_level(m, _neighbours(x, ctx, "shapley-level"), cfg)
    cfg = xai_shapley.ShapleyConfig(level=level, workers=ctx.workers, baseline=xb,
                                    class_index=a.class_index, groups=a.groups,
                                    max_features=a.features_cap)
    ledger = EnergyLedger(ctx.table)
    res = xai_shapley.shapley(m, x, cfg, ledger)
    report = {"command": "explain shapley", "inputs": digests, "level": level,
              "class_index": a.class_index, "groups": a.groups, "shapley": res.to_dict(),
              "energy_units": ledger.total}
    shape = m.input_shape if a.groups is None else (len(res.values),)
    return report, _payload_files("shapley", res.values, shape)


def cmd_explain_distill(ctx: Context):
    a = ctx.args
    X = io.read_matrix(a.input)
    digests = {"input": io.file_digest(a.input)}
    if a.response:
        Y = io.read_matrix(a.response)
        digests["response"] = io.file_digest(a.response)
    else:
        m = load_model(a.model)
        if int(np.prod(m.input_shape)) != X.size:
            raise CliError(f"{a.input}: map size does not match model input {m.input_shape}")
        Y = np.resize(forward(m, X.reshape(m.input_shape)), X.shape)
        digests["model"] = model_digest(m)
    level = ctx.level(a.level)
    if level == "auto":
        raise CliError("distill takes a fixed --level; use optimize-levels to pick one")
    pair = xai_distill.ResponsePair(X, Y)
    ledger = EnergyLedger(ctx.table)
    kern = xai_distill.distill(pair, level, ctx.workers, a.eps, ledger)
    report = {"command": "explain distill", "inputs": digests, "level": level, "eps": a.eps,
              "guard": kern.eps, "shape": list(X.shape)}
    files = _payload_files("kernel", kern.K, X.shape)
    if not a.no_contributions:
        scores = xai_distill.contribution_scores(pair, kern, level, ctx.workers, ledger)
        report["contributions"] = scores
        files.update(_payload_files("contributions", scores, X.shape))
    report["energy_units"] = ledger.total
    return report, files


def _constraints(ctx, psnr_db, budget, prob, samples):
    try:
        return levelopt.OptConstraints(psnr_db, budget, prob, samples)
    except ValueError as exc:
        raise CliError(str(exc)) from None


def cmd_optimize(ctx: Context):
    a = ctx.args
    log2_exact(a.size)
    cons = _constraints(ctx, a.psnr_db, a.energy_budget, a.prob, a.samples)
    res = levelopt.optimize(a.size, cons, ctx.seed, a.mode, ctx.table)
    report = {"command": "optimize-levels", "size": a.size, "seed": ctx.seed, "mode": a.mode,
              "constraints": {"psnr_db": a.psnr_db, "energy_budget": a.energy_budget,
                              "prob": a.prob, "samples": a.samples},
              "energy_table": ctx.table_label, "result": res.to_dict()}
    return report, {}


def cmd_bench(ctx: Context):
    a = ctx.args
    n_stages = log2_exact(a.size)
    sig = levelopt.make_samples(a.size, a.samples, ctx.seed)
    if a.psnr_db is not None:
        cons = _constraints(ctx, a.psnr_db, math.inf, a.prob, a.samples)
        sched = levelopt.optimize(a.size, cons, ctx.seed, "auto", ctx.table).schedule
    elif a.schedule is not None:
        sched = LevelSchedule(a.schedule)
    else:
        if a.level == "auto":
            raise CliError("bench --level needs a number; use --psnr-db to optimize")
        sched = LevelSchedule.uniform(a.level, n_stages)
    sched.check(a.size)
    ref = fft_exact(sig)
    rows = {}
    for name, s in (("schedule", sched), ("exact", LevelSchedule.exact(n_stages))):
        ledger = EnergyLedger(ctx.table)
        db, _, _ = psnr_values(ref, ax_fft(sig, s, ledger))
        rows[name] = {"levels": list(s.levels), "energy_units": ledger.total,
                      "median_psnr_db": float(np.median(db))}
    ratio = rows["schedule"]["energy_units"] / rows["exact"]["energy_units"]
    report = {"command": "bench", "size": a.size, "samples": a.samples, "seed": ctx.seed,
              "energy_table": ctx.table_label, "energy_ratio": ratio, **rows}
    return report, {}


COMMANDS = {
    ("explain", "ig"): cmd_explain_ig,
    ("explain", "shapley"): cmd_explain_shapley,
    ("explain", "distill"): cmd_explain_distill,
    ("optimize-levels", None): cmd_optimize,
    ("bench", None): cmd_bench,
}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        ctx = Context(args)
        handler = COMMANDS[(args.command, getattr(args, "kind", None))]
        report, files = handler(ctx)
        report["wall_time"] = time.perf_counter() - start
        files = {**files, "report.json": io.format_report(report)}
    except CliError as exc:
        print(f"approxai: error: {exc}", file=sys.stderr)
        return exc.code
    except (InfeasibleError, TooManyFeaturesError) as exc:
        print(f"approxai: {exc}", file=sys.stderr)
        return EXIT_UNMET
    except (ApproxAIError, ValueError, OSError) as exc:
        print(f"approxai: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    io.write_outputs(Path(args.out_dir), files)
    sys.stdout.write(files["report.json"])
    return EXIT_OK


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
