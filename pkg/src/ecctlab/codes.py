"""Binary linear codes given by parity-check matrices.

Provides alist / dense-text parsing and serialization, syndrome computation,
generator derivation over GF(2), and the built-in code instances used by the
experiments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class CodeError(ValueError):
    """Raised for malformed code definitions (bad parse, rank deficiency, ...)."""


class ParseError(CodeError):
    """Parse failure; the message names the offending 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class ParityCheckMatrix:
    """A binary r-by-n parity-check matrix H.

    The attention input length is L = n + r.  Entries are stored as a
    read-only uint8 array.
    """

    entries: np.ndarray
    name: str = ""

    def __post_init__(self):
        h = np.ascontiguousarray(np.asarray(self.entries, dtype=np.uint8))
        if h.ndim != 2:
            raise CodeError(f"H must be 2-D, got shape {h.shape}")
        r, n = h.shape
        if r < 1 or n < 2:
            raise CodeError(f"H needs r >= 1 and n >= 2, got {r}x{n}")
        if not np.isin(h, (0, 1)).all():
            raise CodeError("H entries must be 0 or 1")
        h.setflags(write=False)
        object.__setattr__(self, "entries", h)

    @property
    def r(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    @property
    def L(self) -> int:
        return self.n + self.r

    def rank(self) -> int:
        return gf2_rank(self.entries)

    def dimension(self) -> int:
        """Code dimension k = n - rank(H)."""
        return self.n - self.rank()

    def rate(self) -> float:
        return self.dimension() / self.n

    def __eq__(self, other) -> bool:
        return isinstance(other, ParityCheckMatrix) and np.array_equal(
            self.entries, other.entries
        )


@dataclass(frozen=True)
class GeneratorMatrix:
    """A k-by-n generator whose rows span the null space of H over GF(2)."""

    entries: np.ndarray

    def __post_init__(self):
        g = np.ascontiguousarray(np.asarray(self.entries, dtype=np.uint8))
        g.setflags(write=False)
        object.__setattr__(self, "entries", g)

    @property
    def k(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    def encode(self, message: np.ndarray) -> np.ndarray:
        """Map a k-bit message (or a batch of them) to a codeword."""
        message = np.asarray(message, dtype=np.uint8)
        return (message @ self.entries) % 2


def gf2_rank(matrix: np.ndarray) -> int:
    """Rank over GF(2) by Gaussian elimination."""
    work = np.array(matrix, dtype=np.uint8) % 2
    rows, cols = work.shape
    rank = 0
    for col in range(cols):
        if rank == rows:
            break
        pivots = np.nonzero(work[rank:, col])[0]
        if pivots.size == 0:
            continue
        pivot = rank + pivots[0]
        if pivot != rank:
            work[[rank, pivot]] = work[[pivot, rank]]
        others = np.nonzero(work[:, col])[0]
        others = others[others != rank]
        work[others] ^= work[rank]
        rank += 1
    return rank


def syndrome(H: ParityCheckMatrix, bits: np.ndarray) -> np.ndarray:
    """GF(2) syndrome s = H * bits, one parity bit per row of H."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape[-1] != H.n:
        raise CodeError(f"expected {H.n} bits, got {bits.shape[-1]}")
    return (bits @ H.entries.T) % 2


def hamming_7_4() -> ParityCheckMatrix:
    """The pinned (7,4) Hamming parity-check matrix used as running example."""
    h = [
        [1, 1, 1, 0, 1, 0, 0],
        [1, 1, 0, 1, 0, 1, 0],
        [1, 0, 1, 1, 0, 0, 1],
    ]
    return ParityCheckMatrix(np.array(h, dtype=np.uint8), name="hamming74")


def bch_31_16() -> ParityCheckMatrix:
    """Parity-check matrix of the (31,16) triple-error-correcting BCH code.

    Rows are the GF(32) traces of alpha^(e*j) for e in {1, 3, 5}, with the
    field generated by x^5 + x^2 + 1.
    """
    # Power table of alpha in GF(2^5); 5-bit field elements as ints.
    powers = [1]
    for _ in range(30):
        v = powers[-1] << 1
        if v & 0b100000:
            v ^= 0b100101
        powers.append(v)
    rows = []
    for e in (1, 3, 5):
        block = np.zeros((5, 31), dtype=np.uint8)
        for j in range(31):
            elem = powers[(e * j) % 31]
            for b in range(5):
                block[b, j] = (elem >> b) & 1
        rows.append(block)
    return ParityCheckMatrix(np.vstack(rows), name="bch3116")


def derive_generator(H: ParityCheckMatrix) -> GeneratorMatrix:
    """Generator with G H^T = 0, via GF(2) elimination with column pivoting.

    Pivot search takes the leftmost usable column; the column permutation is
    inverted afterwards so G refers to the original bit order.  Raises if H
    is row-rank deficient, reporting the achieved rank.
    """
    r, n = H.r, H.n
    work = np.array(H.entries, dtype=np.uint8)
    perm = list(range(n))
    for step in range(r):
        pivot_col = None
        pivot_row = None
        for j in range(step, n):
            hits = np.nonzero(work[step:, j])[0]
            if hits.size:
                pivot_col = j
                pivot_row = step + hits[0]
                break
        if pivot_col is None:
            raise CodeError(f"H is rank deficient: rank {step} < r = {r}")
        if pivot_row != step:
            work[[step, pivot_row]] = work[[pivot_row, step]]
        if pivot_col != step:
            work[:, [step, pivot_col]] = work[:, [pivot_col, step]]
            perm[step], perm[pivot_col] = perm[pivot_col], perm[step]
        others = np.nonzero(work[:, step])[0]
        others = others[others != step]
        work[others] ^= work[step]
    # work is now [I_r | B] in permuted column order; G_perm = [B^T | I_k].
    k = n - r
    B = work[:, r:]
    g_perm = np.hstack([B.T, np.eye(k, dtype=np.uint8)])
    g = np.zeros((k, n), dtype=np.uint8)
    for pos, orig in enumerate(perm):
        g[:, orig] = g_perm[:, pos]
    return GeneratorMatrix(g)


def random_regular_code(
    n: int, r: int, col_weight: int, seed: int, max_attempts: int = 64
) -> ParityCheckMatrix:
    """Seeded random column-regular H with balanced row weights and full rank.

    Every column gets exactly `col_weight` ones; with n*col_weight divisible
    by r every row ends up with n*col_weight/r ones.  Construction retries
    with a derived seed until rank r is reached.
    """
    if col_weight < 2:
        raise CodeError("col_weight must be >= 2")
    if col_weight > r:
        raise CodeError(f"infeasible degrees: col_weight {col_weight} > r {r}")
    total = n * col_weight
    if total % r != 0:
        raise CodeError(f"infeasible degrees: n*col_weight = {total} not divisible by r = {r}")
    row_weight = total // r
    if row_weight > n:
        raise CodeError(f"infeasible degrees: row weight {row_weight} > n {n}")

    for attempt in range(max_attempts):
        rng = np.random.default_rng((seed, attempt))
        h = np.zeros((r, n), dtype=np.uint8)
        capacity = np.full(r, row_weight, dtype=np.int64)
        ok = True
        for col in range(n):
            tie = rng.random(r)
            order = np.lexsort((tie, -capacity))
            chosen = order[:col_weight]
            if capacity[chosen[-1]] <= 0:
                ok = False
                break
            h[chosen, col] = 1
            capacity[chosen] -= 1
        if not ok:
            continue
        if gf2_rank(h) == r:
            return ParityCheckMatrix(h, name=f"regular_{n}_{r}_{col_weight}_s{seed}")
    raise CodeError(f"could not build a full-rank regular code in {max_attempts} attempts")


# ---------------------------------------------------------------------------
# alist interchange format (MacKay layout, 1-based indices)
# ---------------------------------------------------------------------------


class _Lines:
    def __init__(self, text: str):
        self.raw = text.splitlines()
        self.pos = 0

    def next_ints(self, what: str) -> tuple[int, list[int]]:
        while self.pos < len(self.raw):
            lineno = self.pos + 1
            stripped = self.raw[self.pos].strip()
            self.pos += 1
            if not stripped:
                continue
            try:
                return lineno, [int(tok) for tok in stripped.split()]
            except ValueError:
                raise ParseError(lineno, f"non-integer token in {what}")
        raise ParseError(len(self.raw) + 1, f"missing {what}")


def parse_alist(text: str) -> ParityCheckMatrix:
    """Parse alist text into a ParityCheckMatrix.

    Layout: "n r" header, max column/row degrees, per-column degrees,
    per-row degrees, then 1-based row-index lists per column and column-index
    lists per row.  Trailing zeros in the index lists are treated as padding.
    Column and row adjacency must agree.
    """
    lines = _Lines(text)
    lineno, header = lines.next_ints("header")
    if len(header) != 2:
        raise ParseError(lineno, f"header must be 'n r', got {len(header)} tokens")
    n, r = header
    if n < 2 or r < 1:
        raise ParseError(lineno, f"invalid dimensions n={n}, r={r}")

    lineno, maxdeg = lines.next_ints("max degrees")
    if len(maxdeg) != 2:
        raise ParseError(lineno, "expected 'max_col_degree max_row_degree'")
    max_col, max_row = maxdeg

    lineno, col_deg = lines.next_ints("column degrees")
    if len(col_deg) != n:
        raise ParseError(lineno, f"expected {n} column degrees, got {len(col_deg)}")
    if any(d < 0 or d > max_col for d in col_deg):
        raise ParseError(lineno, f"column degree outside [0, {max_col}]")

    lineno, row_deg = lines.next_ints("row degrees")
    if len(row_deg) != r:
        raise ParseError(lineno, f"expected {r} row degrees, got {len(row_deg)}")
    if any(d < 0 or d > max_row for d in row_deg):
        raise ParseError(lineno, f"row degree outside [0, {max_row}]")

    def read_adjacency(count, degrees, limit, axis):
        listed = []
        for i in range(count):
            lineno, entries = lines.next_ints(f"{axis} list {i + 1}")
            vals = [v for v in entries if v != 0]
            if len(entries) > len(vals) and any(v != 0 for v in entries[len(vals):]):
                raise ParseError(lineno, "zero padding must be trailing")
            if len(vals) != degrees[i]:
                raise ParseError(
                    lineno, f"{axis} {i + 1} lists {len(vals)} indices, degree says {degrees[i]}"
                )
            for v in vals:
                if v < 1 or v > limit:
                    raise ParseError(lineno, f"index {v} outside [1, {limit}]")
            if len(set(vals)) != len(vals):
                raise ParseError(lineno, f"duplicate index in {axis} {i + 1}")
            listed.append((lineno, vals))
        return listed

    col_lists = read_adjacency(n, col_deg, r, "column")
    row_lists = read_adjacency(r, row_deg, n, "row")

    h = np.zeros((r, n), dtype=np.uint8)
    for col, (_, rows_of_col) in enumerate(col_lists):
        for row in rows_of_col:
            h[row - 1, col] = 1
    for row, (lineno, cols_of_row) in enumerate(row_lists):
        from_cols = set(np.nonzero(h[row])[0] + 1)
        if from_cols != set(cols_of_row):
            raise ParseError(lineno, f"row {row + 1} adjacency inconsistent with column lists")
    return ParityCheckMatrix(h)


def serialize_alist(H: ParityCheckMatrix) -> str:
    """Serialize to alist text; parse_alist(serialize_alist(H)) == H."""
    h = H.entries
    col_deg = h.sum(axis=0)
    row_deg = h.sum(axis=1)
    out = [
        f"{H.n} {H.r}",
        f"{int(col_deg.max(initial=0))} {int(row_deg.max(initial=0))}",
        " ".join(str(int(d)) for d in col_deg),
        " ".join(str(int(d)) for d in row_deg),
    ]
    # degree-0 lines carry a single padding zero so no line is ever blank
    for col in range(H.n):
        out.append(" ".join(str(int(i) + 1) for i in np.nonzero(h[:, col])[0]) or "0")
    for row in range(H.r):
        out.append(" ".join(str(int(j) + 1) for j in np.nonzero(h[row])[0]) or "0")
    return "\n".join(out) + "\n"


def parse_dense(text: str) -> ParityCheckMatrix:
    """Parse a dense 0/1 grid, one row per line."""
    rows = []
    width = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped:
            continue
        toks = stripped.split()
        for tok in toks:
            if tok not in ("0", "1"):
                raise ParseError(lineno, f"non-binary token {tok!r}")
        if width is None:
            width = len(toks)
        elif len(toks) != width:
            raise ParseError(lineno, f"ragged row: {len(toks)} tokens, expected {width}")
        rows.append([int(t) for t in toks])
    if not rows:
        raise ParseError(1, "empty matrix")
    return ParityCheckMatrix(np.array(rows, dtype=np.uint8))


def serialize_dense(H: ParityCheckMatrix) -> str:
    return "\n".join(" ".join(str(int(v)) for v in row) for row in H.entries) + "\n"


BUILTIN_CODES = {
    "hamming74": hamming_7_4,
    "bch3116": bch_31_16,
}
