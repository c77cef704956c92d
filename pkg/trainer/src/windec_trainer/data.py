"""Readers and writers for the decoding engine's dataset files.

The engine is consumed purely through its published formats.  Binary
files open with a magic line, then one ASCII ``key=value`` header line,
then one packed-bit row per record (little-endian bit order within each
byte).  The formats handled here:

============  =====================================================
magic         row contents
============  =====================================================
``WDWT1``     one window record: ``depth*(d+1)**2`` tensor bits,
              then the window's label bit
``WDGP1``     one shot: every window's tensor in order, then the
              global label bit
``WDLB1``     one shot: the global bit, then one bit per window
``WDTL1``     one shot: ``m*core`` truncated-core label bits; column
              ``i*core + tau - 1`` is window ``i``'s label with its
              core cut to ``tau`` layers (``tau == core`` = full)
============  =====================================================

Predictions are plain text — a ``shots=N m=M`` line, then
``shot window probability`` lines — exactly what the engine's
external-decoder scoring path reads back.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MAGICS = {
    "WDWT1": b"WDWT1\n",
    "WDGP1": b"WDGP1\n",
    "WDLB1": b"WDLB1\n",
    "WDTL1": b"WDTL1\n",
}


def _read_packed(path: str, magic: bytes):
    with open(path, "rb") as fh:
        got = fh.read(len(magic))
        if got != magic:
            raise ValueError(f"{path}: bad magic {got!r}, wanted {magic!r}")
        line = b""
        while not line.endswith(b"\n"):
            ch = fh.read(1)
            if not ch:
                raise ValueError(f"{path}: truncated header")
            line += ch
        meta = {}
        for tok in line.decode().split():
            k, v = tok.split("=", 1)
            meta[k] = v
        return fh.read(), meta


def _unpack(raw: bytes, rows: int, cols: int) -> np.ndarray:
    nbytes = -(-cols // 8)
    if len(raw) != rows * nbytes:
        raise ValueError(
            f"payload holds {len(raw)} bytes, expected {rows * nbytes}")
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(rows, nbytes)
    return np.unpackbits(arr, axis=1, count=cols, bitorder="little")


@dataclass
class WindowRecords:
    """Flat per-window training records, possibly pooled across files.

    ``window`` and ``shot`` give each record's window index and shot row
    in its source export, ``source`` the file it came from.  When
    truncated-core labels were paired in, ``tau_labels[r, t-1]`` is the
    label of record ``r`` with its core cut to ``t`` layers (and the
    last column equals ``label``).
    """

    tensors: np.ndarray          # (R, depth, d+1, d+1) uint8
    label: np.ndarray            # (R,) uint8
    window: np.ndarray           # (R,) int32
    shot: np.ndarray             # (R,) int32
    source: np.ndarray           # (R,) int32
    d: int
    buffer: int
    core: int
    tau_labels: np.ndarray = None   # (R, core) uint8 or None

    def __len__(self):
        return self.tensors.shape[0]


def read_window_shard(path: str):
    """One WDWT1 file -> (tensors, labels, window_ids, shot_ids, meta)."""
    raw, meta = _read_packed(path, _MAGICS["WDWT1"])
    d = int(meta["d"])
    depth = int(meta["depth"])
    nrec = int(meta["records"])
    shots = int(meta["shots"])
    width = (d + 1) * (d + 1)
    bits = _unpack(raw, nrec, depth * width + 1)
    tensors = bits[:, :-1].reshape(nrec, depth, d + 1, d + 1).copy()
    windows = [int(t) for t in meta["windows"].split(",")]
    if len(windows) * shots != nrec:
        raise ValueError(f"{path}: {nrec} records from {len(windows)} "
                         f"windows x {shots} shots")
    window_ids = np.repeat(np.asarray(windows, np.int32), shots)
    shot_ids = np.tile(np.arange(shots, dtype=np.int32), len(windows))
    return tensors, bits[:, -1].copy(), window_ids, shot_ids, meta


def read_grouped(path: str):
    """One WDGP1 file -> (tensors (S, m, depth, d+1, d+1), y_global, meta)."""
    raw, meta = _read_packed(path, _MAGICS["WDGP1"])
    d = int(meta["d"])
    depth = int(meta["depth"])
    m = int(meta["m"])
    shots = int(meta["shots"])
    width = (d + 1) * (d + 1)
    bits = _unpack(raw, shots, m * depth * width + 1)
    tensors = bits[:, :-1].reshape(shots, m, depth, d + 1, d + 1).copy()
    return tensors, bits[:, -1].copy(), meta


def read_labels(path: str):
    """One WDLB1 file -> (y_global, y_window (S, m), meta)."""
    raw, meta = _read_packed(path, _MAGICS["WDLB1"])
    shots = int(meta["shots"])
    m = int(meta["m"])
    bits = _unpack(raw, shots, m + 1)
    return bits[:, 0].copy(), bits[:, 1:].copy(), meta


def read_truncated(path: str):
    """One WDTL1 file -> (bits (S, m*core), meta)."""
    raw, meta = _read_packed(path, _MAGICS["WDTL1"])
    shots = int(meta["shots"])
    cols = int(meta["m"]) * int(meta["core"])
    return _unpack(raw, shots, cols).copy(), meta


def load_training_records(pairs) -> WindowRecords:
    """Pool shard files into one record table.

    ``pairs`` is a sequence of ``(shard_path, truncated_path_or_None)``.
    All files must agree on d, buffer and core; rounds may differ (the
    shards of several memory lengths train one model together).  When
    every pair carries a truncated-labels file, per-record ``tau_labels``
    are aligned by (window, shot) and cross-checked against the shard's
    own label bits.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("no shard files given")
    tensors, labels, windows, shots_, sources, taus = [], [], [], [], [], []
    key = None
    for src, (shard, trunc) in enumerate(pairs):
        t, y, wid, sid, meta = read_window_shard(shard)
        this = (int(meta["d"]), int(meta["buffer"]), int(meta["core"]))
        if key is None:
            key = this
        elif this != key:
            raise ValueError(f"{shard}: geometry {this} != {key}")
        tensors.append(t)
        labels.append(y)
        windows.append(wid)
        shots_.append(sid)
        sources.append(np.full(len(y), src, np.int32))
        if trunc is not None:
            bits, tmeta = read_truncated(trunc)
            core = int(tmeta["core"])
            if core != key[2] or int(tmeta["rounds"]) != int(meta["rounds"]):
                raise ValueError(f"{trunc}: does not match {shard}")
            cols = (wid[:, None] * core + np.arange(core)[None, :])
            tau = bits[sid[:, None], cols]
            if not np.array_equal(tau[:, -1], y):
                raise ValueError(
                    f"{trunc}: full-core column disagrees with {shard}")
            taus.append(tau)
    d, buf, core = key
    return WindowRecords(
        tensors=np.concatenate(tensors),
        label=np.concatenate(labels),
        window=np.concatenate(windows),
        shot=np.concatenate(shots_),
        source=np.concatenate(sources),
        d=d, buffer=buf, core=core,
        tau_labels=np.concatenate(taus) if len(taus) == len(pairs) else None,
    )


def write_predictions(path: str, probs: np.ndarray) -> None:
    """Per-window probabilities in the engine's text format."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ValueError(f"expected (shots, m), got {probs.shape}")
    if not np.all(np.isfinite(probs)) or probs.min() < 0 or probs.max() > 1:
        raise ValueError("probabilities must be finite and within [0, 1]")
    shots, m = probs.shape
    with open(path, "w") as fh:
        fh.write(f"shots={shots} m={m}\n")
        for si in range(shots):
            for i in range(m):
                fh.write(f"{si} {i} {float(probs[si, i])!r}\n")


def read_predictions(path: str) -> np.ndarray:
    with open(path) as fh:
        head = dict(tok.split("=", 1) for tok in fh.readline().split())
        probs = np.zeros((int(head["shots"]), int(head["m"])), np.float64)
        for line in fh:
            si, i, v = line.split()
            probs[int(si), int(i)] = float(v)
    return probs
