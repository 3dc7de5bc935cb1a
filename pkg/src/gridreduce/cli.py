"""
Command-line pipeline: reduce -> gen -> dataset -> train -> eval.

Settings resolve as command-line flags, then a JSON config file
(``--config``), then built-in defaults. The config file is a flat object
whose keys are flag names with underscores, for example::

    {"sigma": 0.15, "seed": 7, "split": [8000, 2000],
     "method": "lbfgs", "batch_size": 100, "max_iter": 500, "tol": 1e-6}

Exit codes: 0 success, 2 bad input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from gridreduce import __version__
from gridreduce import io as gio
from gridreduce.errors import GridReduceError, InputError, NumericalError, TrainingAborted
from gridreduce.learn import HyperParams, build_dataset, evaluate, generate_scenarios, optimize
from gridreduce.netmodel import fingerprint, parse_case
from gridreduce.reduce import Reduction, load_partition

log = logging.getLogger("gridreduce")

DEFAULTS = {
    "sigma": 0.15,
    "seed": 0,
    "split": None,
    "count": 10000,
    "method": "lbfgs",
    "batch_size": 100,
    "max_iter": None,
    "tol": 1e-6,
    "lower_b": None,
    "workers": 1,
}


def _read_text(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}") from None


def _load(case_path, zones_path):
    net = parse_case(_read_text(case_path))
    if zones_path is None:
        print("warning: no zone file given; every bus becomes its own zone", file=sys.stderr)
        zp = load_partition("", net)
    else:
        zp = load_partition(_read_text(zones_path), net)
    return net, Reduction.build(net, zp)


def _settings(args) -> dict:
    cfg = {}
    if getattr(args, "config", None):
        cfg = gio._load_json(args.config)
        unknown = set(cfg) - set(DEFAULTS)
        if unknown:
            raise InputError(f"unknown config keys: {', '.join(sorted(unknown))}")
    out = {}
    for key, default in DEFAULTS.items():
        flag = getattr(args, key, None)
        out[key] = flag if flag is not None else cfg.get(key, default)
    return out


def _parse_split(text):
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    try:
        parts = tuple(int(v) for v in str(text).replace(",", "/").split("/"))
    except ValueError:
        raise InputError(f"--split expects TRAIN/TEST, got {text!r}") from None
    if len(parts) != 2 or min(parts) < 0:
        raise InputError(f"--split expects TRAIN/TEST, got {text!r}")
    return parts


def _summary_table(red: Reduction) -> str:
    rn = red.reduced
    lines = [f"zones: {rn.zone_count}  tie-lines: {rn.n_ties}  reference zone: {rn.ref_zone}",
             f"{'tie':>5}  {'zones':>9}  {'branches':>8}  {'b0':>12}"]
    b0 = red.baseline().b
    for k, t in enumerate(rn.tie_lines):
        lines.append(f"{k:>5}  {t.zones[0]:>4}-{t.zones[1]:<4}  {len(t.branches):>8}  {b0[k]:>12.4f}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# commands


def cmd_reduce(args):
    net, red = _load(args.case, args.zones)
    zones_hash = gio.file_hash(args.zones) if args.zones else ""
    gio.write_bundle(red, args.out, gio.file_hash(args.case), zones_hash)
    print(_summary_table(red))


def cmd_gen(args):
    s = _settings(args)
    net = parse_case(_read_text(args.case))
    split = _parse_split(s["split"])
    count = int(s["count"]) if split is None else sum(split)
    if split is not None and args.count is not None and args.count != count:
        raise InputError(f"--count {args.count} disagrees with --split total {count}")
    scen = generate_scenarios(net, count, sigma=float(s["sigma"]), seed=int(s["seed"]), split=split)
    gio.write_scenarios(scen, args.out)
    print(f"wrote {len(scen)} scenarios ({scen.split[0]} train / {scen.split[1]} test) to {args.out}")


def cmd_dataset(args):
    s = _settings(args)
    net, red = _load(args.case, args.zones)
    scen = gio.read_scenarios(args.scenarios)
    if scen.network_hash and scen.network_hash != fingerprint(net):
        raise InputError(f"{args.scenarios} was generated for a different network")
    ds = build_dataset(net, red.partition, scen, workers=int(s["workers"]))
    gio.write_dataset(ds, args.out, gio.file_hash(args.scenarios))
    print(f"wrote {len(ds)} rows to {args.out} ({ds.n_discarded} scenarios discarded)")


def _load_dataset(path, split):
    ds = gio.read_dataset(path)
    if split == "train":
        ds = ds.train()
    elif split == "test":
        ds = ds.test()
    if len(ds) == 0:
        raise InputError(f"{path}: no {split} rows")
    return ds


def cmd_train(args):
    s = _settings(args)
    ds = _load_dataset(args.dataset, "train")
    bs = int(s["batch_size"]) if s["batch_size"] else None
    hp = HyperParams(max_iter=s["max_iter"], tol=float(s["tol"]), batch_size=bs,
                     seed=int(s["seed"]), lower_b=s["lower_b"])
    init = None
    if args.init:
        init, meta = gio.read_checkpoint(args.init)
        gio.check_hash(ds.zone_hash, meta.get("zone_hash", ""), args.init)
    try:
        rep = optimize(ds, s["method"], hp, init=init)
    except TrainingAborted as e:
        print(f"training aborted: {e}", file=sys.stderr)
        for k, v in (e.diagnostics or {}).items():
            print(f"  {k}: {v}", file=sys.stderr)
        raise
    gio.write_checkpoint(
        args.out, rep.params, ds, method=rep.method.value, seed=hp.seed,
        batch_size=bs, iterations=rep.iterations, converged=rep.converged,
        message=rep.message, final_loss=rep.loss_history[-1],
        dataset_sha256=gio.file_hash(args.dataset),
    )
    print(f"{rep.method.value}: {rep.iterations} iterations, loss {rep.loss_history[0]:.6g} -> "
          f"{rep.loss_history[-1]:.6g} ({rep.message})")


def cmd_eval(args):
    ds = _load_dataset(args.dataset, args.split)
    params, meta = gio.read_checkpoint(args.checkpoint)
    gio.check_hash(ds.zone_hash, meta.get("zone_hash", ""), args.checkpoint)
    m = evaluate(params, ds)
    gio.write_eval(m, ds, args.out, {
        "split": args.split,
        "checkpoint_sha256": gio.file_hash(args.checkpoint),
        "dataset_sha256": gio.file_hash(args.dataset),
    })
    print(f"{len(ds)} scenarios: MAE {m.mae_mw:.4f} MW, max error {m.inf_norm_loss:.4f} pu, "
          f"sq loss {m.sq_two_norm_loss:.6g}")


def cmd_inspect(args):
    path = Path(args.path)
    if path.suffix == ".m":
        net = parse_case(_read_text(path))
        print(f"case: {net.n_bus} buses, {net.n_branch} branches, base {net.base_mva} MVA, "
              f"slack bus {net.ref_bus}")
        print(f"fingerprint: {fingerprint(net)}")
        return
    meta = gio._load_json(path if path.suffix == ".json" else gio.sidecar_path(path))
    for k in sorted(meta):
        v = meta[k]
        if isinstance(v, list) and len(v) > 8:
            v = f"[{len(v)} entries]"
        elif isinstance(v, dict):
            v = f"{{{len(v)} keys}}"
        print(f"{k}: {v}")


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gridreduce", description=__doc__.split("\n\n")[0].strip())
    p.add_argument("--version", action="version", version=f"gridreduce {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, *names):
        if "config" in names:
            sp.add_argument("--config", help="JSON file with default settings")
        if "seed" in names:
            sp.add_argument("--seed", type=int)
        if "workers" in names:
            sp.add_argument("--workers", type=int, help="parallel AC solves")

    r = sub.add_parser("reduce", help="build the zonal reduction and baseline parameters")
    r.add_argument("case")
    r.add_argument("--zones", help="JSON zone file; default is one zone per bus")
    r.add_argument("-o", "--out", required=True)
    r.set_defaults(func=cmd_reduce)

    g = sub.add_parser("gen", help="generate injection scenarios")
    g.add_argument("case")
    g.add_argument("--count", type=int)
    g.add_argument("--sigma", type=float)
    g.add_argument("--split", help="TRAIN/TEST counts, e.g. 8000/2000")
    g.add_argument("-o", "--out", required=True)
    common(g, "config", "seed")
    g.set_defaults(func=cmd_gen)

    d = sub.add_parser("dataset", help="solve AC power flow per scenario")
    d.add_argument("case")
    d.add_argument("scenarios")
    d.add_argument("--zones")
    d.add_argument("-o", "--out", required=True)
    common(d, "config", "workers")
    d.set_defaults(func=cmd_dataset)

    t = sub.add_parser("train", help="fit parameters on the training rows of a dataset")
    t.add_argument("dataset")
    t.add_argument("--method", choices=["gd", "bfgs", "lbfgs", "tnc"])
    t.add_argument("--batch-size", type=int, help="0 for full batch (default 100)")
    t.add_argument("--max-iter", type=int)
    t.add_argument("--tol", type=float)
    t.add_argument("--lower-b", type=float, help="TNC only: lower bound on b")
    t.add_argument("--init", help="start from this checkpoint or reduction bundle")
    t.add_argument("-o", "--out", required=True)
    common(t, "config", "seed")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint and write plot data")
    e.add_argument("dataset")
    e.add_argument("checkpoint", help="trained checkpoint or reduction bundle (baseline)")
    e.add_argument("--split", choices=["train", "test", "all"], default="test")
    e.add_argument("-o", "--out", required=True, help="output directory")
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("inspect", help="summarize a case or artifact file")
    i.add_argument("path")
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    np.seterr(all="ignore")
    try:
        args.func(args)
    except InputError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3
    except GridReduceError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
