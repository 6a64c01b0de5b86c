"""CSV and JSON readers/writers for trajectories, ensembles, moments and traces.

Every CSV is comma separated with a header row, UTF-8 and LF line endings.
Floats are written with ``repr`` so they round-trip exactly.
"""
import csv
import json
import math
import os
from collections import defaultdict

import numpy as np

from .distfit import FitReport
from .ensemble import MomentRecord
from .errors import MissingArtifactError, ShapeError
from .model import SPECIES

_COV_PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


def _f(v):
    return repr(float(v))


def _writer(path):
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    fh = open(path, "w", newline="", encoding="utf-8")
    return fh, csv.writer(fh, lineterminator="\n")


def _reader(path):
    if not os.path.exists(path):
        raise MissingArtifactError(f"missing input file: {path}")
    return open(path, newline="", encoding="utf-8")


def _require(reader, path, columns):
    missing = [c for c in columns if c not in (reader.fieldnames or ())]
    if missing:
        raise ShapeError(f"{path}: missing columns {missing}")


def write_trajectory_csv(path, times, traj):
    """Wide layout: ``time, S_1..S_n, D_1..D_n, N_1..N_n``."""
    traj = np.asarray(traj, dtype=np.float64)
    n = traj.shape[-1]
    fh, w = _writer(path)
    with fh:
        w.writerow(["time"] + [f"{s}_{i}" for s in SPECIES for i in range(1, n + 1)])
        for t, row in zip(times, traj.reshape(len(times), -1)):
            w.writerow([_f(t)] + [_f(v) for v in row])


def read_trajectory_csv(path):
    with _reader(path) as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[0] != "time" or (len(header) - 1) % 3:
        raise ShapeError(f"{path}: not a trajectory file")
    data = np.array([[float(v) for v in r] for r in body]).reshape(len(body), -1)
    n = (len(header) - 1) // 3
    return data[:, 0], data[:, 1:].reshape(len(body), 3, n)


def write_members_csv(path, result):
    """Long layout: ``member, time, shell, S, D, N``."""
    fh, w = _writer(path)
    with fh:
        w.writerow(["member", "time", "shell", "S", "D", "N"])
        for m, mid in enumerate(result.member_ids):
            for k, t in enumerate(result.times):
                snap = result.members[m, k]
                for i in range(snap.shape[1]):
                    w.writerow([int(mid), _f(t), i + 1, _f(snap[0, i]), _f(snap[1, i]), _f(snap[2, i])])


def read_members_csv(path):
    """Return ``(members[M, T, 3, n], times, member_ids)``."""
    with _reader(path) as fh:
        reader = csv.DictReader(fh)
        _require(reader, path, ["member", "time", "shell", "S", "D", "N"])
        raw = [(int(r["member"]), float(r["time"]), int(r["shell"]),
                float(r["S"]), float(r["D"]), float(r["N"])) for r in reader]
    if not raw:
        raise ShapeError(f"{path}: no rows")
    ids = sorted({r[0] for r in raw})
    times = sorted({r[1] for r in raw})
    n = max(r[2] for r in raw)
    mi = {v: k for k, v in enumerate(ids)}
    ti = {v: k for k, v in enumerate(times)}
    out = np.full((len(ids), len(times), 3, n), np.nan)
    for mid, t, shell, s, d, nn in raw:
        out[mi[mid], ti[t], :, shell - 1] = (s, d, nn)
    if np.isnan(out).any():
        raise ShapeError(f"{path}: incomplete member/time/shell grid")
    return out, np.array(times), np.array(ids)


def write_moments_csv(path, records):
    """Long layout ``time, shell, statistic, value``.

    Statistics: ``n_members``, ``mean_X``, ``cov_XY`` and, for cross-shell
    records, ``xcov:j:XY`` (covariance of X in this shell with Y in shell j > i).
    """
    fh, w = _writer(path)
    with fh:
        w.writerow(["time", "shell", "statistic", "value"])
        for rec in records:
            n = rec.n_shells
            for i in range(n):
                t = _f(rec.time)
                w.writerow([t, i + 1, "n_members", rec.n_members])
                for a, s in enumerate(SPECIES):
                    w.writerow([t, i + 1, f"mean_{s}", _f(rec.mean[i, a])])
                for a, b in _COV_PAIRS:
                    w.writerow([t, i + 1, f"cov_{SPECIES[a]}{SPECIES[b]}", _f(rec.cov[i, a, b])])
                if rec.cross is not None:
                    for j in range(i + 1, n):
                        for a in range(3):
                            for b in range(3):
                                w.writerow([t, i + 1, f"xcov:{j + 1}:{SPECIES[a]}{SPECIES[b]}",
                                            _f(rec.cross[3 * i + a, 3 * j + b])])


def read_moments_csv(path):
    with _reader(path) as fh:
        reader = csv.DictReader(fh)
        _require(reader, path, ["time", "shell", "statistic", "value"])
        groups = defaultdict(list)
        for r in reader:
            groups[float(r["time"])].append((int(r["shell"]), r["statistic"], r["value"]))
    records = []
    for t in sorted(groups):
        rows = groups[t]
        n = max(r[0] for r in rows)
        mean = np.full((n, 3), np.nan)
        cov = np.full((n, 3, 3), np.nan)
        cross = None
        count = 0
        for shell, stat, value in rows:
            i = shell - 1
            if stat == "n_members":
                count = int(value)
            elif stat.startswith("mean_"):
                mean[i, SPECIES.index(stat[5:])] = float(value)
            elif stat.startswith("cov_"):
                a, b = SPECIES.index(stat[4]), SPECIES.index(stat[5])
                cov[i, a, b] = cov[i, b, a] = float(value)
            elif stat.startswith("xcov:"):
                if cross is None:
                    cross = np.zeros((3 * n, 3 * n))
                _, j, pair = stat.split(":")
                j = int(j) - 1
                a, b = SPECIES.index(pair[0]), SPECIES.index(pair[1])
                cross[3 * i + a, 3 * j + b] = cross[3 * j + b, 3 * i + a] = float(value)
            else:
                raise ShapeError(f"{path}: unknown statistic {stat!r}")
        if np.isnan(mean).any() or np.isnan(cov).any():
            raise ShapeError(f"{path}: incomplete moments at time {t}")
        if cross is not None:
            for i in range(n):
                cross[3 * i:3 * i + 3, 3 * i:3 * i + 3] = cov[i]
        records.append(MomentRecord(t, mean, cov, cross, count))
    return records


def write_trace_csv(path, trace):
    """Long layout ``time, state_index, estimate, variance`` (0-based state index)."""
    fh, w = _writer(path)
    with fh:
        w.writerow(["time", "state_index", "estimate", "variance"])
        for k, t in enumerate(trace.times):
            tt = _f(t)
            for j in range(trace.x.shape[1]):
                w.writerow([tt, j, _f(trace.x[k, j]), _f(trace.var[k, j])])


def read_trace_csv(path):
    """Return ``(times, estimates[T, dim], variances[T, dim])``."""
    with _reader(path) as fh:
        reader = csv.DictReader(fh)
        _require(reader, path, ["time", "state_index", "estimate", "variance"])
        rows = [(float(r["time"]), int(r["state_index"]), float(r["estimate"]), float(r["variance"]))
                for r in reader]
    times = sorted({r[0] for r in rows})
    dim = max((r[1] for r in rows), default=-1) + 1
    ti = {t: k for k, t in enumerate(times)}
    est = np.full((len(times), dim), np.nan)
    var = np.full((len(times), dim), np.nan)
    for t, j, e, v in rows:
        est[ti[t], j] = e
        var[ti[t], j] = v
    return np.array(times), est, var


FIT_COLUMNS = ["time", "shell", "species", "family", "rmse", "param1", "param2", "n_samples"]


def write_fit_index_csv(path, reports):
    fh, w = _writer(path)
    with fh:
        w.writerow(FIT_COLUMNS)
        for r in reports:
            w.writerow([_f(r.time), r.shell, r.species, r.family, _f(r.rmse),
                        _f(r.params[0]), _f(r.params[1]), r.n_samples])


def read_fit_index_csv(path):
    with _reader(path) as fh:
        reader = csv.DictReader(fh)
        _require(reader, path, FIT_COLUMNS)
        return [FitReport(r["family"], (float(r["param1"]), float(r["param2"])), float(r["rmse"]),
                          int(r["shell"]), r["species"], float(r["time"]), int(r["n_samples"]))
                for r in reader]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path, obj):
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with _reader(path) as fh:
        return json.load(fh)
