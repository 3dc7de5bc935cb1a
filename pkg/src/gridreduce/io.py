"""
File formats for pipeline artifacts.

Tabular data is CSV with a JSON sidecar of the same stem (``foo.csv`` ->
``foo.json``). Every artifact records the tool version, the seed where one
applies, and hashes of its inputs. Floats are written with ``repr`` so a
round-trip is exact and reruns are byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from gridreduce.errors import HashMismatch, InputError
from gridreduce.learn.dataset import Dataset
from gridreduce.learn.scenarios import ScenarioSet
from gridreduce.reduce import EquivalentParams, Reduction

FORMAT_VERSION = 1


def _version():
    from gridreduce import __version__

    return __version__


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _dump_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise InputError(f"missing file: {path}") from None
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: not valid JSON ({e})") from None


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_csv(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise InputError(f"missing file: {path}") from None
    if not rows:
        raise InputError(f"{path}: empty file")
    return rows[0], rows[1:]


def _floats(values):
    return [repr(float(v)) for v in values]


def _pairs(seq):
    return [tuple(int(v) for v in t) for t in seq]


def check_hash(expected: str, found: str, what: str):
    if expected != found:
        raise HashMismatch(
            f"{what} was built for zone map {found[:12]}, expected {expected[:12]}; "
            "artifacts come from different reductions")


# ---------------------------------------------------------------------------
# scenarios


def write_scenarios(scen: ScenarioSet, path):
    header = (["scenario", "split"] + [f"p_{b}" for b in scen.bus_ids]
              + [f"q_{b}" for b in scen.bus_ids])
    train = scen.is_train
    rows = [[m, "train" if train[m] else "test"] + _floats(scen.injections[m])
            + _floats(scen.q_injections[m]) for m in range(len(scen))]
    _write_csv(path, header, rows)
    _dump_json({
        "kind": "scenarios",
        "format": FORMAT_VERSION,
        "tool_version": _version(),
        "seed": scen.seed,
        "sigma": scen.sigma,
        "split": list(scen.split),
        "base_mva": scen.base_mva,
        "network_hash": scen.network_hash,
        "csv_sha256": file_hash(path),
    }, sidecar_path(path))


def read_scenarios(path) -> ScenarioSet:
    meta = _load_json(sidecar_path(path))
    header, rows = _read_csv(path)
    n = (len(header) - 2) // 2
    bus_ids = tuple(int(h[2:]) for h in header[2:2 + n])
    data = np.array([[float(v) for v in r[2:]] for r in rows]).reshape(len(rows), 2 * n)
    return ScenarioSet(
        injections=data[:, :n], q_injections=data[:, n:], seed=int(meta["seed"]),
        sigma=float(meta["sigma"]), split=tuple(meta["split"]), bus_ids=bus_ids,
        base_mva=float(meta["base_mva"]), network_hash=meta.get("network_hash", ""),
    )


# ---------------------------------------------------------------------------
# datasets


def write_dataset(ds: Dataset, path, scenario_hash: str = ""):
    zones = [z for z in range(ds.zone_count) if z != ds.ref_zone]
    header = (["scenario", "split"] + [f"P_{z}" for z in zones]
              + [f"p_{a}_{b}" for a, b in ds.tie_order])
    rows = [[int(ds.scenario_ids[m]), "train" if ds.is_train[m] else "test"]
            + _floats(ds.P_R[m]) + _floats(ds.targets[m]) for m in range(len(ds))]
    _write_csv(path, header, rows)
    meta = {
        "kind": "dataset",
        "format": FORMAT_VERSION,
        "tool_version": _version(),
        "zone_hash": ds.zone_hash,
        "tie_order": [list(t) for t in ds.tie_order],
        "zone_count": ds.zone_count,
        "ref_zone": ds.ref_zone,
        "base_mva": ds.base_mva,
        "n_discarded": ds.n_discarded,
        "scenarios_sha256": scenario_hash,
        "csv_sha256": file_hash(path),
        "baseline": ds.baseline.to_dict() if ds.baseline is not None else None,
    }
    meta.update(ds.meta)
    _dump_json(meta, sidecar_path(path))


def read_dataset(path) -> Dataset:
    meta = _load_json(sidecar_path(path))
    header, rows = _read_csv(path)
    n_free = meta["zone_count"] - 1
    n_ties = len(meta["tie_order"])
    if len(header) != 2 + n_free + n_ties:
        raise InputError(f"{path}: expected {2 + n_free + n_ties} columns, found {len(header)}")
    vals = np.array([[float(v) for v in r[2:]] for r in rows]).reshape(len(rows), n_free + n_ties)
    base = meta.get("baseline")
    known = {"kind", "format", "tool_version", "zone_hash", "tie_order", "zone_count",
             "ref_zone", "base_mva", "n_discarded", "scenarios_sha256", "csv_sha256", "baseline"}
    return Dataset(
        P_R=vals[:, :n_free],
        targets=vals[:, n_free:],
        scenario_ids=np.array([int(r[0]) for r in rows], dtype=int),
        is_train=np.array([r[1] == "train" for r in rows], dtype=bool),
        tie_order=tuple(_pairs(meta["tie_order"])),
        zone_count=int(meta["zone_count"]),
        ref_zone=int(meta["ref_zone"]),
        base_mva=float(meta["base_mva"]),
        zone_hash=meta["zone_hash"],
        n_discarded=int(meta.get("n_discarded", 0)),
        baseline=_params_from(base) if base else None,
        meta={k: v for k, v in meta.items() if k not in known},
    )


# ---------------------------------------------------------------------------
# checkpoints and reduction bundles


def _params_from(d) -> EquivalentParams:
    return EquivalentParams(np.array(d["b"], dtype=float), np.array(d["gamma"], dtype=float),
                            np.array(d["rho"], dtype=float))


def checkpoint_dict(params: EquivalentParams, tie_order, ref_zone, zone_count, zone_hash,
                    **extra) -> dict:
    d = params.to_dict()
    d.update({
        "kind": "checkpoint",
        "format": FORMAT_VERSION,
        "tool_version": _version(),
        "tie_order": [list(t) for t in tie_order],
        "ref_zone": int(ref_zone),
        "zone_count": int(zone_count),
        "zone_hash": zone_hash,
    })
    d.update(extra)
    return d


def write_checkpoint(path, params, ds_or_red, **extra):
    """Write parameters with the reduction identity taken from a Dataset or Reduction."""
    if isinstance(ds_or_red, Reduction):
        rn = ds_or_red.reduced
        ident = (rn.tie_order, rn.ref_zone, rn.zone_count, ds_or_red.zone_hash)
    else:
        ident = (ds_or_red.tie_order, ds_or_red.ref_zone, ds_or_red.zone_count,
                 ds_or_red.zone_hash)
    _dump_json(checkpoint_dict(params, *ident, **extra), path)


def read_checkpoint(path):
    """Return ``(params, meta)``. Reduction bundles are accepted as baseline checkpoints."""
    d = _load_json(path)
    if d.get("kind") == "reduction":
        return _params_from(d["init_params"]), d
    try:
        return _params_from(d), d
    except KeyError as e:
        raise InputError(f"{path}: checkpoint lacks field {e}") from None


def write_bundle(red: Reduction, path, case_hash: str = "", zones_hash: str = ""):
    rn = red.reduced
    bundle = {
        "kind": "reduction",
        "format": FORMAT_VERSION,
        "tool_version": _version(),
        "case_sha256": case_hash,
        "zones_sha256": zones_hash,
        "zone_hash": red.zone_hash,
        "zone_count": rn.zone_count,
        "ref_zone": rn.ref_zone,
        "tie_order": [list(t) for t in rn.tie_order],
        "assignment": {str(k): v for k, v in sorted(red.partition.assignment.items())},
        "tie_lines": [{"zones": list(t.zones), "branches": list(t.branches),
                       "signs": list(t.signs)} for t in rn.tie_lines],
        "incidence": rn.incidence.tolist(),
        "init_params": red.baseline().to_dict(),
    }
    _dump_json(bundle, path)


# ---------------------------------------------------------------------------
# evaluation outputs


def write_eval(metrics, ds: Dataset, out_dir, extra=None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    d = metrics.to_dict()
    d.update({"kind": "metrics", "tool_version": _version(), "zone_hash": ds.zone_hash,
              "n_scenarios": len(ds), "tie_order": [list(t) for t in ds.tie_order]})
    d.update(extra or {})
    _dump_json(d, out / "metrics.json")
    _write_csv(out / "per_tie_mae.csv", ["from_zone", "to_zone", "mae_mw"],
               [[a, b, repr(float(v))] for (a, b), v in zip(ds.tie_order, metrics.per_tie_mae)])
    _write_csv(out / "cumulative_error.csv", ["abs_error_pu", "cumulative_fraction"],
               [[repr(float(e)), repr(float(c))]
                for e, c in zip(metrics.curve_errors, metrics.curve_fraction)])
