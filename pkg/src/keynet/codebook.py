"""The secret key: binary class codes and their matching rules.

A codebook assigns each of m class labels a distinct random t-bit row.
Each column splits the labels into a binary dichotomy, so a network
trained to regress the rows is really solving t random binary problems
at once. An input is accepted only when its binarized output matches a
row; anything else is treated as adversarial. The codebook is generated
from a seed and must be kept secret.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

# generation retries before giving up on the no-constant-column constraint
MAX_GENERATION_ATTEMPTS = 10_000

# rows are sampled as integers in [0, 2^t); int64 caps the usable width
MAX_CODE_LENGTH = 62


class CodebookError(ValueError):
    pass


@dataclass(frozen=True)
class Codebook:
    """m distinct t-bit rows (uint8 matrix) plus the seed that made them."""

    rows: np.ndarray
    seed: int

    def __post_init__(self):
        rows = np.ascontiguousarray(self.rows, dtype=np.uint8)
        object.__setattr__(self, "rows", rows)
        if rows.ndim != 2:
            raise CodebookError(f"rows must be 2-D, got shape {rows.shape}")
        if not np.isin(rows, (0, 1)).all():
            raise CodebookError("rows must be binary")
        if len({r.tobytes() for r in rows}) != rows.shape[0]:
            raise CodebookError("rows must be pairwise distinct")

    @property
    def m(self):
        return self.rows.shape[0]

    @property
    def t(self):
        return self.rows.shape[1]


def generate_codebook(m, t, seed):
    """Draw m distinct rows uniformly from {0,1}^t, rejecting codebooks
    with a constant column; deterministic in ``seed``.

    Sampling scheme (re-derivable by tests): integers are drawn from
    default_rng(seed).integers(0, 2^t) until m distinct values are
    collected; value v maps to bits MSB-first (bit j = (v >> (t-1-j)) & 1).
    The whole draw repeats while some column is constant.
    """
    m, t = int(m), int(t)
    if m < 2:
        raise CodebookError(f"need at least 2 classes, got m={m}")
    if t > MAX_CODE_LENGTH:
        raise CodebookError(f"code length {t} exceeds {MAX_CODE_LENGTH}")
    min_t = int(np.ceil(np.log2(m)))
    if t < min_t or 2 ** t < m:
        raise CodebookError(
            f"code length {t} too small for {m} distinct rows "
            f"(need t >= {min_t})")
    rng = np.random.default_rng(seed)
    for _ in range(MAX_GENERATION_ATTEMPTS):
        chosen = []
        seen = set()
        while len(chosen) < m:
            v = int(rng.integers(0, 2 ** t))
            if v not in seen:
                seen.add(v)
                chosen.append(v)
        rows = np.array(
            [[(v >> (t - 1 - j)) & 1 for j in range(t)] for v in chosen],
            dtype=np.uint8)
        col_sums = rows.sum(axis=0)
        if ((col_sums > 0) & (col_sums < m)).all():
            return Codebook(rows=rows, seed=int(seed))
    raise CodebookError(
        f"gave up after {MAX_GENERATION_ATTEMPTS} attempts: could not draw "
        f"{m} rows of length {t} without a constant column")


def encode(cb, y):
    """Code vector for class label ``y`` (row y of the codebook)."""
    y = int(y)
    if not 0 <= y < cb.m:
        raise CodebookError(f"label {y} out of range [0, {cb.m})")
    return cb.rows[y].copy()


def decode(cb, code):
    """Exact-match lookup: the label whose row equals ``code``, else None.

    None is the adversarial verdict signal, not an error.
    """
    code = _as_code(code, cb.t)
    hits = np.flatnonzero((cb.rows == code).all(axis=1))
    return int(hits[0]) if hits.size else None


def binarize(v, threshold=0.5):
    """Threshold a real vector in (0,1)^t to bits: 1 iff v_j >= threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0,1), got {threshold}")
    return (np.asarray(v) >= threshold).astype(np.uint8)


def hamming(a, b):
    """Number of differing positions between two equal-length codes."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise CodebookError(f"length mismatch: {a.shape} vs {b.shape}")
    return int((a != b).sum())


def match_with_tolerance(cb, code, tau):
    """Label of the unique closest row within Hamming distance ``tau``.

    Returns None when no row is within tau, or when two rows tie at the
    minimal distance (ambiguity is rejected: the defense fails closed).
    tau=0 reduces to exact decode.
    """
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    code = _as_code(code, cb.t)
    dists = (cb.rows != code).sum(axis=1)
    dmin = int(dists.min())
    if dmin > tau:
        return None
    winners = np.flatnonzero(dists == dmin)
    return int(winners[0]) if winners.size == 1 else None


def dichotomy_count(m):
    """Number of distinct nontrivial binary label splits a column can
    encode: 2^(m-1) - 1 (constant assignments and mirror images excluded).
    """
    m = int(m)
    if m < 2:
        raise CodebookError(f"need at least 2 classes, got m={m}")
    return 2 ** (m - 1) - 1


def min_pairwise_distance(cb):
    """Smallest Hamming distance between any two rows (diagnostic only;
    generation imposes no distance constraint)."""
    best = cb.t
    for i in range(cb.m):
        d = (cb.rows[i + 1:] != cb.rows[i]).sum(axis=1)
        if d.size:
            best = min(best, int(d.min()))
    return best


def _as_code(code, t):
    code = np.asarray(code, dtype=np.uint8)
    if code.shape != (t,):
        raise CodebookError(f"code shape {code.shape} != ({t},)")
    return code


def save_codebook(cb, path):
    """Write the codebook as JSON; the file is the secret key, so it is
    created owner-readable only (mode 0600) where the OS supports it."""
    payload = {
        "m": cb.m,
        "t": cb.t,
        "seed": cb.seed,
        "rows": ["".join(str(b) for b in row) for row in cb.rows],
    }
    tmp = f"{path}.tmp"
    fd = os.open(tmp, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    with os.fdopen(fd, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)


def load_codebook(path):
    with open(path) as f:
        payload = json.load(f)
    rows = np.array([[int(c) for c in row] for row in payload["rows"]],
                    dtype=np.uint8)
    cb = Codebook(rows=rows, seed=int(payload["seed"]))
    if cb.m != payload["m"] or cb.t != payload["t"]:
        raise CodebookError(
            f"{path}: declared size ({payload['m']}x{payload['t']}) does "
            f"not match rows ({cb.m}x{cb.t})")
    return cb
