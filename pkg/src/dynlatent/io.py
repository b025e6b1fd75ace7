"""Reading and writing networks in long (dyad-per-row) text format.

Dyad file: delimiter-separated columns ``t, source, target, value`` with a
header row and ``value`` in ``{0, 1, NA}``. Tab or comma delimiters are
detected from the header. Dyads not listed default to 0.

Roster file (optional): columns ``t, actor, observed`` with ``observed`` in
``{0, 1}``. An actor marked unobserved at time ``t`` has all its incident
dyads at ``t`` set missing. Without a roster the actor set is every label
appearing in the dyad file and all actors are observed at every time.
"""
from __future__ import annotations

import csv
import zipfile
import io as _io
from pathlib import Path

import numpy as np

from .model import MISSING, DynamicNetwork

DYAD_HEADER = ("t", "source", "target", "value")
ROSTER_HEADER = ("t", "actor", "observed")


class NetworkFormatError(ValueError):
    """Raised for malformed network or roster files."""


def _read_rows(path, header):
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines:
        raise NetworkFormatError(f"{path}: empty file")
    delim = "\t" if "\t" in lines[0] else ","
    reader = csv.reader(_io.StringIO(text), delimiter=delim)
    head = [h.strip().lower() for h in next(reader)]
    if tuple(head) != header:
        raise NetworkFormatError(f"{path}:1: expected header {','.join(header)}, got {','.join(head)}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise NetworkFormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        rows.append((lineno, [c.strip() for c in row]))
    return rows


def _time_key(label):
    try:
        return (0, int(label), label)
    except ValueError:
        return (1, 0, label)


def parse_network(path, roster=None, directed: bool = True) -> DynamicNetwork:
    """Read a dyad file (and optional roster) into a :class:`DynamicNetwork`."""
    dyads = _read_rows(path, DYAD_HEADER)
    observed = {}
    if roster is not None:
        actors, times = [], []
        for lineno, (t, a, obs) in _read_rows(roster, ROSTER_HEADER):
            if obs not in ("0", "1"):
                raise NetworkFormatError(f"{roster}:{lineno}: observed must be 0 or 1, got {obs!r}")
            if (t, a) in observed:
                raise NetworkFormatError(f"{roster}:{lineno}: duplicate roster entry ({t}, {a})")
            observed[(t, a)] = obs == "1"
            if a not in actors:
                actors.append(a)
            if t not in times:
                times.append(t)
    else:
        actors, times = [], []
        for _, (t, s, r, _) in dyads:
            for a in (s, r):
                if a not in actors:
                    actors.append(a)
            if t not in times:
                times.append(t)
    times = sorted(times, key=_time_key)
    if len(actors) < 2 or not times:
        raise NetworkFormatError(f"{path}: need at least two actors and one time point")
    a_idx = {a: k for k, a in enumerate(actors)}
    t_idx = {t: k for k, t in enumerate(times)}
    n, T = len(actors), len(times)
    cells = np.zeros((T, n, n), dtype=np.int8)
    seen = set()
    for lineno, (t, s, r, v) in dyads:
        if t not in t_idx:
            raise NetworkFormatError(f"{path}:{lineno}: unknown time {t!r}")
        for a in (s, r):
            if a not in a_idx:
                raise NetworkFormatError(f"{path}:{lineno}: unknown actor {a!r}")
        if s == r:
            raise NetworkFormatError(f"{path}:{lineno}: self-loop for actor {s!r}")
        key = (t, s, r) if directed else (t, *sorted((s, r)))
        if key in seen:
            raise NetworkFormatError(f"{path}:{lineno}: duplicate dyad ({t}, {s}, {r})")
        seen.add(key)
        if v.upper() in ("NA", ""):
            val = MISSING
        elif v in ("0", "1"):
            val = int(v)
        else:
            raise NetworkFormatError(f"{path}:{lineno}: value must be 0, 1 or NA, got {v!r}")
        ti, si, ri = t_idx[t], a_idx[s], a_idx[r]
        cells[ti, si, ri] = val
        if not directed:
            cells[ti, ri, si] = val
    for (t, a), obs in observed.items():
        if not obs:
            ti, ai = t_idx[t], a_idx[a]
            cells[ti, ai, :] = MISSING
            cells[ti, :, ai] = MISSING
    for t in range(T):
        np.fill_diagonal(cells[t], 0)
    return DynamicNetwork(cells, directed=directed, actor_labels=list(actors), time_labels=list(times))


def _labels(Y):
    actors = Y.actor_labels if Y.actor_labels is not None else [str(k) for k in range(Y.n)]
    times = Y.time_labels if Y.time_labels is not None else [str(k + 1) for k in range(Y.T)]
    return [str(a) for a in actors], [str(t) for t in times]


def write_network(Y: DynamicNetwork, path, roster=None, delimiter: str = "\t") -> None:
    """Write ``Y`` so that :func:`parse_network` restores it exactly.

    Ones and missing cells are listed explicitly; zeros are implied. A roster
    listing every actor as observed is written when ``roster`` is given.
    """
    actors, times = _labels(Y)
    upper_only = not Y.directed
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(DYAD_HEADER)
        for t in range(Y.T):
            ii, jj = np.nonzero(Y.cells[t] != 0)
            for i, j in zip(ii, jj):
                if i == j or (upper_only and i > j):
                    continue
                v = Y.cells[t, i, j]
                w.writerow((times[t], actors[i], actors[j], "NA" if v == MISSING else int(v)))
    if roster is not None:
        with open(roster, "w", newline="") as fh:
            w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
            w.writerow(ROSTER_HEADER)
            for t in range(Y.T):
                for a in actors:
                    w.writerow((times[t], a, 1))


def write_matrix(path, M, header_comment: str | None = None, fmt: str = "%.17g") -> None:
    """Whitespace-separated matrix with an optional leading comment line."""
    np.savetxt(path, np.atleast_2d(M), fmt=fmt, delimiter="\t",
               header=header_comment or "", comments="# ")


def write_table(path, columns: dict, header_comment: str | None = None) -> None:
    """Columnar text: one named column per key, full precision."""
    names = list(columns)
    cols = [np.asarray(columns[k]) for k in names]
    if len({len(c) for c in cols}) > 1:
        raise ValueError("columns must have equal length")

    def fmt(x):
        return str(int(x)) if isinstance(x, (int, np.integer)) else repr(float(x))

    with open(path, "w") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write("\t".join(names) + "\n")
        for row in zip(*[c.tolist() for c in cols]):
            fh.write("\t".join(fmt(x) for x in row) + "\n")


def save_npz(path, arrays: dict) -> None:
    """Compressed ``.npz`` archive whose bytes depend only on the arrays.

    Entries carry a fixed timestamp, unlike :func:`numpy.savez_compressed`.
    """
    path = str(path)
    if not path.endswith(".npz"):
        path += ".npz"
    with zipfile.ZipFile(path, "w") as zf:
        for name, arr in arrays.items():
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            buf = _io.BytesIO()
            np.lib.format.write_array(buf, np.asanyarray(arr), allow_pickle=False)
            zf.writestr(info, buf.getvalue())
