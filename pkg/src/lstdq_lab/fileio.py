"""JSON documents and CSV tables for MDPs, features, datasets and reports.

Floats in JSON use Python's shortest round-trip representation; CSV cells use
17 significant digits.  Both reproduce the in-memory doubles exactly.
Non-finite values are written as the strings ``"inf"``, ``"-inf"``, ``"nan"``.
All writes go through a temporary file followed by an atomic rename.
"""

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .coverage import CoverageReport
from .estimators import LstdqSolution, MomentSet
from .experiments import AGGREGATE_COLUMNS, AUDIT_COLUMNS, CELL_COLUMNS
from .features import AbstractionSpec, FeatureMap
from .mdp import Policy, StateActionDist, TabularMDP
from .sampling import Dataset

SCHEMA_VERSION = 1
DATASET_COLUMNS = ["s", "a", "r", "s_next", "a_next"]


class FormatError(ValueError):
    """A document does not match the expected layout."""


def _encode(obj):
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return [_encode(x) for x in obj]
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return obj


def _num(x):
    """Decode a number that may have been written as ``"inf"`` / ``"nan"``."""
    if isinstance(x, list):
        return [_num(v) for v in x]
    if isinstance(x, str):
        if x in ("inf", "-inf", "nan"):
            return float(x)
        raise FormatError(f"expected a number, got {x!r}")
    return x


def fmt_float(x):
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def atomic_write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, doc):
    atomic_write_text(path, json.dumps(_encode(doc), indent=1) + "\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def csv_text(columns, rows):
    """Render ``rows`` (dicts) as CSV with a fixed column order."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt_float(row[c]) for c in columns])
    return buf.getvalue()


def write_csv(path, columns, rows):
    atomic_write_text(path, csv_text(columns, rows))


def _expect(doc, kind):
    if not isinstance(doc, dict) or doc.get("type") != kind:
        raise FormatError(f"expected a {kind!r} document")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise FormatError(f"unsupported schema_version {version!r}")


# --- MDPs, policies, distributions, features ---------------------------------

def mdp_to_dict(mdp):
    return {
        "schema_version": SCHEMA_VERSION,
        "type": "tabular_mdp",
        "transition": mdp.transition,
        "mean_reward": mdp.mean_reward,
        "reward_noise_halfwidth": mdp.reward_noise_halfwidth,
        "r_max": mdp.r_max,
        "gamma": mdp.gamma,
        "initial_dist": mdp.initial_dist,
    }


def mdp_from_dict(doc):
    _expect(doc, "tabular_mdp")
    return TabularMDP(
        transition=doc["transition"],
        mean_reward=doc["mean_reward"],
        gamma=doc["gamma"],
        initial_dist=doc["initial_dist"],
        r_max=doc.get("r_max", 1.0),
        reward_noise_halfwidth=doc.get("reward_noise_halfwidth", 0.0),
    )


def policy_to_dict(pi):
    return {"schema_version": SCHEMA_VERSION, "type": "policy", "action_probs": pi.action_probs}


def policy_from_dict(doc):
    _expect(doc, "policy")
    return Policy(doc["action_probs"])


def dist_to_dict(dist):
    return {"schema_version": SCHEMA_VERSION, "type": "state_action_dist", "probs": dist.probs}


def dist_from_dict(doc):
    _expect(doc, "state_action_dist")
    return StateActionDist(doc["probs"])


def features_to_dict(fmap):
    return {"schema_version": SCHEMA_VERSION, "type": "feature_map",
            "matrix": fmap.matrix, "feature_bound": fmap.feature_bound}


def features_from_dict(doc):
    _expect(doc, "feature_map")
    return FeatureMap(doc["matrix"], doc.get("feature_bound"))


def abstraction_to_dict(spec):
    return {"schema_version": SCHEMA_VERSION, "type": "abstraction",
            "state_to_block": spec.state_to_block, "num_blocks": spec.num_blocks}


def abstraction_from_dict(doc):
    _expect(doc, "abstraction")
    return AbstractionSpec(doc["state_to_block"], doc["num_blocks"])


# --- moments and solutions ----------------------------------------------------

def moments_to_dict(m):
    return {
        "schema_version": SCHEMA_VERSION,
        "type": "moment_set",
        "provenance": m.provenance,
        "n": m.n,
        "gamma": m.gamma,
        "next_feature_mode": m.next_feature_mode,
        "sigma": m.sigma,
        "sigma_cr": m.sigma_cr,
        "a_mat": m.a_mat,
        "b_vec": m.b_vec,
        "phi0": m.phi0,
    }


def moments_from_dict(doc):
    _expect(doc, "moment_set")
    # a_mat is informational; it is always recomputed from sigma and sigma_cr.
    return MomentSet(_num(doc["sigma"]), _num(doc["sigma_cr"]), _num(doc["b_vec"]),
                     _num(doc["phi0"]), doc["gamma"], doc["provenance"], doc.get("n"),
                     doc["next_feature_mode"])


def solution_to_dict(sol):
    return {
        "schema_version": SCHEMA_VERSION,
        "type": "lstdq_solution",
        "theta": None if sol.theta is None else sol.theta,
        "solver": sol.solver,
        "invertible": sol.invertible,
        "min_singular_a": sol.min_singular_a,
        "unique": sol.unique,
    }


def solution_from_dict(doc):
    _expect(doc, "lstdq_solution")
    theta = doc.get("theta")
    return LstdqSolution(None if theta is None else np.array(_num(theta), dtype=float),
                         doc["solver"], bool(doc["invertible"]),
                         float(_num(doc["min_singular_a"])), bool(doc.get("unique", True)))


# --- datasets ------------------------------------------------------------------

def dataset_meta_path(csv_path):
    csv_path = Path(csv_path)
    return csv_path.with_name(csv_path.stem + ".meta.json")


def save_dataset(dataset, csv_path):
    """Write ``csv_path`` plus the sidecar ``<stem>.meta.json``."""
    rows = ({"s": t.s, "a": t.a, "r": t.r, "s_next": t.s_next, "a_next": t.a_next}
            for t in dataset)
    write_csv(csv_path, DATASET_COLUMNS, rows)
    write_json(dataset_meta_path(csv_path), {
        "schema_version": SCHEMA_VERSION,
        "type": "dataset",
        "csv": Path(csv_path).name,
        "seed": dataset.seed,
        "n": dataset.n,
        "mu_d": dataset.mu_d.probs,
    })


def load_dataset(csv_path):
    meta = read_json(dataset_meta_path(csv_path))
    _expect(meta, "dataset")
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != DATASET_COLUMNS:
            raise FormatError(f"dataset header must be {','.join(DATASET_COLUMNS)}, got {header}")
        rows = list(reader)
    if len(rows) != meta["n"]:
        raise FormatError(f"dataset has {len(rows)} rows, metadata says {meta['n']}")
    cols = list(zip(*rows)) if rows else [[]] * 5
    return Dataset(
        s=np.array(cols[0], dtype=np.int64),
        a=np.array(cols[1], dtype=np.int64),
        r=np.array(cols[2], dtype=float),
        s_next=np.array(cols[3], dtype=np.int64),
        a_next=np.array(cols[4], dtype=np.int64),
        seed=meta["seed"],
        mu_d=StateActionDist(meta["mu_d"]),
    )


# --- reports -------------------------------------------------------------------

def read_csv(path):
    """Rows of a CSV file as dicts of strings, plus the header."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return reader.fieldnames, list(reader)


def coverage_rows(reports):
    """``(instance_id, CoverageReport)`` pairs to CSV row dicts."""
    return [{"instance_id": iid, **rep.as_dict()} for iid, rep in reports]


def coverage_columns():
    return ["instance_id"] + CoverageReport.columns()


def write_coverage(path, reports):
    write_csv(path, coverage_columns(), coverage_rows(reports))


def write_sweep(directory, result):
    """Write ``cells.csv`` and ``aggregate.csv`` under ``directory``."""
    directory = Path(directory)
    write_csv(directory / "cells.csv", CELL_COLUMNS, result.cells)
    write_csv(directory / "aggregate.csv", AGGREGATE_COLUMNS, result.aggregates)


def audit_rows(rows):
    return [{"instance_id": r.instance_id, "property_id": r.property_id,
             "residual": r.residual, "pass": r.passed} for r in rows]


def write_audit(path, rows):
    write_csv(path, AUDIT_COLUMNS, audit_rows(rows))
