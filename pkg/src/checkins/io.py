"""File formats: event CSV with a JSON sidecar, edge-list CSV for graphs,
and JSON for parameters and fit results.

The event CSV has the header ``t,user,category,location``; the sidecar
declares the id universe: ``n_users``, ``n_categories``, ``n_locations``,
``horizon``, and ``location_categories`` (the category of each location id).
All ids are 0-based.  Writers format floats with repr so outputs round-trip
bit-exactly and rewriting the same data yields identical bytes.
"""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .core import Checkin, EventLog, ModelParams, SocialGraph
from .inference import FitResult


def _sidecar(csv_path: Path) -> Path:
    return csv_path.with_suffix(".json")


def save_events(log: EventLog, csv_path: str | Path, sidecar_path: str | Path | None = None) -> None:
    csv_path = Path(csv_path)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "user", "category", "location"])
        for i in range(len(log)):
            writer.writerow(
                [repr(float(log.t[i])), int(log.user[i]), int(log.category[i]), int(log.location[i])]
            )
    meta = {
        "n_users": log.n_users,
        "n_categories": log.n_categories,
        "n_locations": log.n_locations,
        "horizon": log.horizon,
        "location_categories": log.location_categories.tolist(),
    }
    side = Path(sidecar_path) if sidecar_path else _sidecar(csv_path)
    with open(side, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_events(csv_path: str | Path, sidecar_path: str | Path | None = None) -> EventLog:
    csv_path = Path(csv_path)
    side = Path(sidecar_path) if sidecar_path else _sidecar(csv_path)
    if not csv_path.exists():
        raise FileNotFoundError(f"event file not found: {csv_path}")
    if not side.exists():
        raise FileNotFoundError(f"event sidecar not found: {side}")
    with open(side) as fh:
        meta = json.load(fh)
    for key in ("n_users", "n_categories", "n_locations", "horizon", "location_categories"):
        if key not in meta:
            raise ValueError(f"{side}: sidecar is missing the {key!r} field")
    events = []
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["t", "user", "category", "location"]:
            raise ValueError(f"{csv_path}: expected header t,user,category,location, got {header}")
        for row in reader:
            if len(row) != 4:
                raise ValueError(f"{csv_path}: malformed row {row}")
            events.append(Checkin(float(row[0]), int(row[1]), int(row[2]), int(row[3])))
    return EventLog(
        events,
        meta["n_users"],
        meta["n_categories"],
        meta["n_locations"],
        meta["horizon"],
        meta["location_categories"],
    )


def params_to_dict(params: ModelParams) -> dict:
    return {
        "mu": params.mu.tolist(),
        "beta": params.beta.tolist(),
        "alpha": params.alpha.tolist(),
        "eta": params.eta.tolist(),
    }


def params_from_dict(data: dict) -> ModelParams:
    return ModelParams(
        np.asarray(data["mu"]),
        np.asarray(data["beta"]),
        np.asarray(data["alpha"]),
        np.asarray(data["eta"]),
    )


def save_params(params: ModelParams, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(params_to_dict(params), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_params(path: str | Path) -> ModelParams:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"parameter file not found: {path}")
    with open(path) as fh:
        return params_from_dict(json.load(fh))


def save_graph(graph: SocialGraph, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["src", "dst"])
        for v, u in sorted(graph.edges):
            writer.writerow([v, u])


def load_graph(path: str | Path, n: int | None = None) -> SocialGraph:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"graph file not found: {path}")
    edges = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["src", "dst"]:
            raise ValueError(f"{path}: expected header src,dst, got {header}")
        for row in reader:
            edges.append((int(row[0]), int(row[1])))
    if n is None:
        n = 1 + max((max(v, u) for v, u in edges), default=-1)
    return SocialGraph(n, edges)


def save_fit_result(result: FitResult, path: str | Path, extra: dict | None = None) -> None:
    data = {
        "params": params_to_dict(result.params),
        "loglik_trace": [float(x) for x in result.loglik_trace],
        "em_iters_used": result.em_iters_used,
        "user_converged": [bool(x) for x in result.user_converged],
    }
    if extra:
        data.update(extra)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_fit_result(path: str | Path) -> FitResult:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"fit result not found: {path}")
    with open(path) as fh:
        data = json.load(fh)
    return FitResult(
        params=params_from_dict(data["params"]),
        loglik_trace=list(data["loglik_trace"]),
        em_iters_used=int(data["em_iters_used"]),
        user_converged=np.asarray(data["user_converged"], dtype=bool),
    )


def content_hash(*paths: str | Path) -> str:
    """SHA-256 over the concatenated bytes of the given files."""
    digest = hashlib.sha256()
    for p in paths:
        digest.update(Path(p).read_bytes())
    return digest.hexdigest()
