"""On-disk formats.

ValueField binary layout (little-endian throughout)::

    offset 0   4 bytes   magic b"OSVF"
    offset 4   uint16    format version (1)
    offset 6   uint32    header length L in bytes
    offset 10  L bytes   UTF-8 JSON header: box, spacing, lam, times, case_tag,
                         dt, scheme, objective_name, residual, f_probe, shape
    ...        0-7 bytes zero padding so the payload starts on a multiple of 8
    payload    float64   values, C order over (time, axis_1, ..., axis_n)

ValueField CSV: ``#``-prefixed ``key: json`` header lines, then columns
``t, x_1..x_n, u`` with one row per (stored time, node), nodes in C order.

Trajectory CSV: ``#`` header (lam, case, bound, cost, eps) and columns
``s, y_1..y_n, alpha_1..alpha_n, f_y, dist_to_M, discounted_weight``; row k
holds the state at s_k and the control on [s_k, s_{k+1}] (0 on the last row).
"""
from __future__ import annotations

import csv
import io as _io
import json
import math
import struct
from pathlib import Path

import numpy as np

from .cases import Case
from .control import ControlSignal, Trajectory, control_bound, cost
from .hjb import GridSpec, ValueField
from .measures import OccupationMeasure, histogram
from .objectives import Objective, distance_to_minimizers

MAGIC = b"OSVF"
VERSION = 1


def fmt(x) -> str:
    """Shortest round-tripping text for a float."""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return repr(x)


def _field_header(field: ValueField) -> dict:
    return {
        "box": field.grid.box.tolist(),
        "spacing": field.grid.spacing.tolist(),
        "lam": field.lam,
        "times": field.times.tolist(),
        "case_tag": field.case_tag.value,
        "dt": field.dt,
        "scheme": field.scheme,
        "objective_name": field.objective_name,
        "residual": field.residual,
        "sup_norm": field.sup_norm,
        "f_probe": None if field.f_probe is None else field.f_probe.tolist(),
        "shape": list(field.values.shape),
    }


def _field_from_header(header: dict, values: np.ndarray) -> ValueField:
    probe = header.get("f_probe")
    return ValueField(
        grid=GridSpec(box=header["box"], spacing=header["spacing"]),
        lam=header["lam"],
        times=np.array(header["times"], dtype=float),
        values=values.reshape(header["shape"]),
        case_tag=header["case_tag"],
        dt=header["dt"],
        scheme=header.get("scheme", "godunov"),
        residual=header.get("residual"),
        objective_name=header.get("objective_name", ""),
        f_probe=None if probe is None else np.array(probe, dtype=float),
        sup_norm=header.get("sup_norm"),
    )


def write_field_binary(field: ValueField, path) -> Path:
    header = json.dumps(_field_header(field), sort_keys=True).encode("utf-8")
    prefix = MAGIC + struct.pack("<HI", VERSION, len(header)) + header
    pad = (-len(prefix)) % 8
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(prefix + b"\0" * pad)
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())
    return path


def read_field_binary(path) -> ValueField:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not a value-field file")
    version, length = struct.unpack("<HI", data[4:10])
    if version != VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    header = json.loads(data[10:10 + length].decode("utf-8"))
    start = 10 + length
    start += (-start) % 8
    values = np.frombuffer(data, dtype="<f8", offset=start).astype(float)
    return _field_from_header(header, values)


def write_field_csv(field: ValueField, path, final_only: bool = False) -> Path:
    """CSV dump; ``final_only`` keeps just the last stored slice."""
    header = _field_header(field)
    ks = [len(field.times) - 1] if final_only else range(len(field.times))
    header["times"] = [field.times[k] for k in ks]
    header["shape"] = [len(header["times"])] + list(field.grid.shape)
    nodes = field.grid.nodes().reshape(-1, field.grid.dim)
    n = field.grid.dim
    with open(path, "w", newline="") as fh:
        for key in sorted(header):
            fh.write(f"# {key}: {json.dumps(header[key])}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"x_{i + 1}" for i in range(n)] + ["u"])
        for k in ks:
            tk = fmt(field.times[k])
            for node, u in zip(nodes, field.values[k].reshape(-1)):
                w.writerow([tk] + [fmt(v) for v in node] + [fmt(u)])
    return Path(path)


def _read_commented_csv(path):
    meta, rows = {}, []
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = json.loads(value.strip())
        else:
            body.append(line)
    reader = csv.reader(body)
    columns = next(reader)
    for r in reader:
        rows.append([float(v) for v in r])
    return meta, columns, np.array(rows, dtype=float).reshape(-1, len(columns))


def read_field_csv(path) -> ValueField:
    meta, columns, table = _read_commented_csv(path)
    return _field_from_header(meta, table[:, -1])


def read_field(path) -> ValueField:
    with open(path, "rb") as fh:
        magic = fh.read(4)
    return read_field_binary(path) if magic == MAGIC else read_field_csv(path)


# --------------------------------------------------------------------------- #
# trajectories

def write_trajectory_csv(traj: Trajectory, obj: Objective, path) -> Path:
    n = traj.dim
    alphas = np.vstack([traj.control.values, np.zeros((1, n))])
    fvals = obj.eval(traj.states)
    dists = np.asarray(distance_to_minimizers(obj, traj.states)).reshape(-1)
    weights = np.exp(-traj.lam * traj.times)
    meta = {
        "case": traj.case.value,
        "lam": traj.lam,
        "bound": traj.control.bound,
        "cost": traj.cost,
        "eps": traj.epsilon_certificate,
        "objective": obj.name,
    }
    with open(path, "w", newline="") as fh:
        for key in sorted(meta):
            fh.write(f"# {key}: {json.dumps(meta[key])}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s"] + [f"y_{i + 1}" for i in range(n)] + [f"alpha_{i + 1}" for i in range(n)]
                   + ["f_y", "dist_to_M", "discounted_weight"])
        for k in range(len(traj.times)):
            w.writerow([fmt(traj.times[k])] + [fmt(v) for v in traj.states[k]] + [fmt(v) for v in alphas[k]]
                       + [fmt(fvals[k]), fmt(dists[k]), fmt(weights[k])])
    return Path(path)


def read_trajectory_csv(path, obj: Objective | None = None) -> Trajectory:
    """Rebuild a trajectory; states are re-integrated from the stored controls."""
    meta, columns, table = _read_commented_csv(path)
    n = sum(c.startswith("y_") for c in columns)
    times = table[:, 0]
    alphas = table[:-1, 1 + n:1 + 2 * n]
    bound = meta.get("bound") or (control_bound(obj) if obj is not None else float(np.max(np.linalg.norm(alphas, axis=1))))
    signal = ControlSignal(times - times[0], alphas, bound)
    traj = Trajectory(start=table[0, 1:1 + n], control=signal, lam=meta.get("lam", 0.0),
                      case=meta.get("case", "evolutive_undiscounted"))
    traj.cost = cost(obj, traj) if obj is not None else meta.get("cost")
    traj.epsilon_certificate = meta.get("eps")
    return traj


def read_control_csv(path, bound: float) -> ControlSignal:
    """Control initializer from a trajectory CSV."""
    _, columns, table = _read_commented_csv(path)
    n = sum(c.startswith("alpha_") for c in columns)
    first = columns.index("alpha_1")
    return ControlSignal(table[:, 0] - table[0, 0], table[:-1, first:first + n], bound)


# --------------------------------------------------------------------------- #
# measures

def write_measure_csv(meas: OccupationMeasure, path) -> Path:
    meta = {"case": meas.case_tag.measure_tag, "lam": meas.lam, "horizon": meas.horizon, "tail_mass": meas.tail_mass}
    with open(path, "w", newline="") as fh:
        for key in sorted(meta):
            fh.write(f"# {key}: {json.dumps(meta[key])}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["interval_start", "interval_end"] + [f"y_{i + 1}" for i in range(meas.dim)] + ["weight"])
        for a, b, y, wt in zip(meas.interval_start, meas.interval_end, meas.states, meas.weights):
            w.writerow([fmt(a), fmt(b)] + [fmt(v) for v in y] + [fmt(wt)])
    return Path(path)


def read_measure_csv(path) -> OccupationMeasure:
    meta, columns, table = _read_commented_csv(path)
    n = len(columns) - 3
    return OccupationMeasure(
        case_tag=Case.parse(meta["case"]),
        lam=meta["lam"],
        horizon=meta["horizon"],
        interval_start=table[:, 0],
        interval_end=table[:, 1],
        states=table[:, 2:2 + n],
        weights=table[:, -1],
        tail_mass=meta["tail_mass"],
    )


def write_histogram_csv(meas: OccupationMeasure, edges, path) -> Path:
    """Histogram dump for plotting: one row per bin with its lower/upper edges and mass."""
    masses = histogram(meas, edges)
    n = len(edges)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([c for i in range(n) for c in (f"lo_{i + 1}", f"hi_{i + 1}")] + ["mass"])
        for idx in np.ndindex(masses.shape):
            w.writerow([fmt(v) for i, j in enumerate(idx) for v in (edges[i][j], edges[i][j + 1])] + [fmt(masses[idx])])
    return Path(path)


# --------------------------------------------------------------------------- #
# tables

def write_table_csv(rows: list[dict], columns: list[str], path) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in columns])
    return Path(path)


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return fmt(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_cell(x) for x in np.asarray(v).reshape(-1))
    return str(v)


def table_text(rows: list[dict], columns: list[str]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()
