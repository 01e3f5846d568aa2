"""Command-line entry point.

Exit codes: 0 success, 2 usage error, 3 I/O error, 4 domain error.  On
failure a one-line JSON object ``{"error": <category>, "message": ...}`` is
written to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ._errors import DomainError

EXIT_USAGE, EXIT_IO, EXIT_DOMAIN = 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _default_threads() -> int:
    raw = os.environ.get("VOXELSEG_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"VOXELSEG_THREADS must be an integer, got {raw!r}") from None


def _write_json(path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise OSError(f"{path}: not valid JSON ({exc})") from exc


# -- subcommands ---------------------------------------------------------------

def cmd_phantom_gen(args) -> int:
    from .phantom import PhantomConfig, generate_phantom

    base = PhantomConfig.from_json(_read_json(args.config)) if args.config else PhantomConfig()
    over = {"seed": args.seed}
    if args.teeth is not None:
        over["tooth_count"] = args.teeth
    if args.gap is not None:
        over["gap_mm"] = args.gap
    if args.spacing is not None:
        over["spacing_mm"] = args.spacing
    if args.shape is not None:
        over["grid_shape"] = tuple(args.shape)
    cfg = replace(base, **over)
    case = generate_phantom(PhantomConfig.from_json(cfg.to_json()))
    case.save(args.out)
    if args.with_offsets:
        from .clustering import oracle_offsets
        from .volume import save_volume

        save_volume(oracle_offsets(case.labels, case.centroids), Path(args.out) / "offsets")
    _write_json(Path(args.out) / "phantom.json", cfg.to_json())
    print(f"wrote {case.tooth_count} teeth on {'x'.join(map(str, case.labels.dims))} grid to {args.out}")
    return 0


def cmd_sdt(args) -> int:
    from .sdt import signed_distance_map
    from .volume import load_volume, save_volume

    vol = load_volume(args.inp)
    mask = vol.data == args.label if args.label is not None else vol.data != 0
    save_volume(signed_distance_map(vol.with_data(mask.astype(np.uint8), kind="label")), args.out)
    return 0


def cmd_cluster(args) -> int:
    from .clustering import density_peaks, vote_density
    from .volume import load_volume, save_volume

    offsets = load_volume(args.offsets)
    mask = load_volume(args.mask)
    density = vote_density(offsets, mask.data != 0)
    cents = density_peaks(density, args.rho_min, args.delta_min)
    cents.save(args.out)
    if args.density:
        save_volume(density, args.density, dtype="f32")
    print(f"{len(cents)} centroids")
    return 0


def cmd_assign(args) -> int:
    from .clustering import CentroidSet, assign_instances
    from .volume import load_volume, save_volume

    mask = load_volume(args.mask)
    cents = CentroidSet.load(args.centroids)
    save_volume(assign_instances(mask.with_data((mask.data != 0).astype(np.uint8), kind="label"), cents), args.out)
    return 0


def cmd_losscheck(args) -> int:
    from .losses import gradient_report

    worst = gradient_report(instances=args.trials, seed=args.seed, step=args.step)
    out = {"instances": args.trials, "seed": args.seed, "step": args.step,
           "losses": {k: {"max_rel_err": v} for k, v in worst.items()}}
    if args.out:
        _write_json(args.out, out)
    _emit(out)
    return 0


def cmd_eval(args) -> int:
    from .metrics import evaluate_case
    from .volume import load_volume

    pred = load_volume(args.pred)
    gt = load_volume(args.gt)
    report = evaluate_case(pred, gt, gt.spacing, hd95=args.hd95)
    out = report.to_json()
    if args.json:
        _write_json(args.json, out)
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    print(f"Dice / Jaccard / HD (mm) / ASD (mm): {report.summary_line()}")
    if not args.json:
        _emit(out)
    return 0


def _pipeline_cfg(args):
    from .pipeline import VARIANTS, PipelineConfig

    base = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    over = dict(threads=args.threads)
    if args.variant:
        over.update(VARIANTS[args.variant])
    for flag in ("centroid_prompt", "multilabel", "shape"):
        val = getattr(args, flag)
        if val is not None:
            over[flag] = val
    return replace(base, **over)


def cmd_pipeline_run(args) -> int:
    from .phantom import PhantomCase
    from .pipeline import OracleMode, run_oracle_case
    from .volume import save_volume

    case = PhantomCase.load(args.case)
    cfg = _pipeline_cfg(args)
    mode = OracleMode.parse(args.mode, seed=args.seed)
    result, report = run_oracle_case(case, cfg, mode)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_volume(result.labels, out / "labels")
    result.centroids.save(out / "centroids.json")
    _write_json(out / "report.json", {"variant": cfg.variant, "mode": args.mode, "seed": args.seed, **report.to_json()})
    _write_json(out / "config.json", cfg.to_json() | {"threads": 1})
    print(f"{cfg.variant}: {report.summary_line()}   conflicts={result.conflicts}")
    return 0


def cmd_ablate(args) -> int:
    from .phantom import PhantomConfig
    from .pipeline import PipelineConfig, ablation_table, run_ablation

    pcfg = PhantomConfig.from_json(_read_json(args.phantom_config)) if args.phantom_config else PhantomConfig()
    over = {}
    if args.teeth is not None:
        over["tooth_count"] = args.teeth
    if args.gap is not None:
        over["gap_mm"] = args.gap
    pcfg = replace(pcfg, **over)
    seeds = list(range(args.seed, args.seed + args.cases))
    rows = run_ablation(seeds, pcfg, grow_mm=args.grow, variants=tuple(args.variants),
                        base_cfg=PipelineConfig(threads=args.threads))
    print(ablation_table(rows))
    if args.out:
        _write_json(args.out, {"seeds": seeds, "gap_mm": pcfg.gap_mm, "grow_mm": args.grow,
                               "rows": [r.__dict__ for r in rows]})
    return 0


# -- parser --------------------------------------------------------------------

def _flag(p, name, help):
    p.add_argument(f"--{name.replace('_', '-')}", dest=name, action=argparse.BooleanOptionalAction,
                   default=None, help=help)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="cap on internal parallelism (default: $VOXELSEG_THREADS or 1)")

    p = _Parser(prog="voxelseg", description="tooth instance segmentation toolkit", parents=[common])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ph = sub.add_parser("phantom", help="synthetic phantoms")
    phs = ph.add_subparsers(dest="action", required=True, parser_class=_Parser)
    g = phs.add_parser("gen", parents=[common], help="generate one phantom case")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--teeth", type=int)
    g.add_argument("--gap", type=float, help="minimum surface gap between neighbours (mm)")
    g.add_argument("--spacing", type=float, help="isotropic voxel size (mm)")
    g.add_argument("--shape", type=int, nargs=3, metavar=("X", "Y", "Z"), help="fixed grid size")
    g.add_argument("--config", help="phantom config JSON")
    g.add_argument("--with-offsets", action="store_true", help="also write oracle centroid offsets")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_phantom_gen)

    s = sub.add_parser("sdt", parents=[common], help="signed distance map of a mask")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--label", type=int, help="use voxels equal to this label (default: nonzero)")
    s.set_defaults(func=cmd_sdt)

    c = sub.add_parser("cluster", parents=[common], help="density-peak centroids from offset votes")
    c.add_argument("--offsets", required=True)
    c.add_argument("--mask", required=True)
    c.add_argument("--out", required=True, help="centroids JSON")
    c.add_argument("--density", help="also write the vote density volume")
    c.add_argument("--rho-min", type=float)
    c.add_argument("--delta-min", type=float, default=4.0)
    c.set_defaults(func=cmd_cluster)

    a = sub.add_parser("assign", parents=[common], help="label a mask by nearest centroid")
    a.add_argument("--mask", required=True)
    a.add_argument("--centroids", required=True)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_assign)

    lc = sub.add_parser("losscheck", parents=[common], help="finite-difference gradient checks")
    lc.add_argument("--trials", type=int, default=50, help="random instances")
    lc.add_argument("--seed", type=int, default=0)
    lc.add_argument("--step", type=float, default=1e-3)
    lc.add_argument("--out")
    lc.set_defaults(func=cmd_losscheck)

    e = sub.add_parser("eval", parents=[common], help="per-instance metrics")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--json")
    e.add_argument("--csv")
    e.add_argument("--hd95", action="store_true")
    e.set_defaults(func=cmd_eval)

    pl = sub.add_parser("pipeline", help="three-stage pipeline")
    pls = pl.add_subparsers(dest="action", required=True, parser_class=_Parser)
    r = pls.add_parser("run", parents=[common], help="run on a phantom case with oracle predictors")
    r.add_argument("--case", required=True, help="phantom case directory")
    r.add_argument("--out", required=True)
    r.add_argument("--mode", default="perfect", help="perfect | noisy(sigma[,blur]) | adhesion(grow_mm)")
    r.add_argument("--variant", choices=["B", "C", "CM", "CMS"])
    r.add_argument("--config", help="pipeline config JSON")
    r.add_argument("--seed", type=int, default=0)
    _flag(r, "centroid_prompt", "centroid prompt channel")
    _flag(r, "multilabel", "target/adjacent/background labels")
    _flag(r, "shape", "fuse with the SDM head")
    r.set_defaults(func=cmd_pipeline_run)

    ab = sub.add_parser("ablate", parents=[common], help="B/C/CM/CMS comparison on adhesion phantoms")
    ab.add_argument("--cases", type=int, default=20)
    ab.add_argument("--seed", type=int, default=0, help="first phantom seed")
    ab.add_argument("--teeth", type=int)
    ab.add_argument("--gap", type=float, default=0.6)
    ab.add_argument("--grow", type=float, default=0.8)
    ab.add_argument("--variants", nargs="+", default=["B", "C", "CM", "CMS"], choices=["B", "C", "CM", "CMS"])
    ab.add_argument("--phantom-config")
    ab.add_argument("--out")
    ab.set_defaults(func=cmd_ablate)
    return p


def _fail(code: int, category: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": category, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "threads", None) is None:
            args.threads = _default_threads()
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        from .pipeline import _set_threads

        _set_threads(args.threads)
        return args.func(args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "UsageError", str(exc))
    except DomainError as exc:
        return _fail(EXIT_DOMAIN, exc.category, str(exc))
    except OSError as exc:
        return _fail(EXIT_IO, "IoError", str(exc))
    except ValueError as exc:
        return _fail(EXIT_USAGE, "UsageError", str(exc))


if __name__ == "__main__":
    sys.exit(main())
