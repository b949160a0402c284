"""Rating-file ingestion, seeded splitting and matrix persistence."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp


class DataError(ValueError):
    """Malformed or inconsistent rating data."""


class ParseError(DataError):
    def __init__(self, path, line_no: int, msg: str):
        super().__init__(f"{path}:{line_no}: {msg}")
        self.path = path
        self.line_no = line_no


@dataclass(frozen=True)
class ValueRange:
    r_min: float
    r_max: float

    def __post_init__(self):
        if not (math.isfinite(self.r_min) and math.isfinite(self.r_max)):
            raise DataError("value range bounds must be finite")
        if not self.r_min < self.r_max:
            raise DataError(f"degenerate range: r_min={self.r_min} is not below r_max={self.r_max}")


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Observed entries of a high-dimensional sparse matrix.

    Entries are held as three parallel read-only arrays. Row/column lookups
    go through lazily built CSR/CSC views. ``row_tokens``/``col_tokens``
    carry the external ids when the matrix came from a rating file; they do
    not take part in equality.
    """

    n_rows: int
    n_cols: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    row_tokens: tuple[str, ...] | None = None
    col_tokens: tuple[str, ...] | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        rows = np.ascontiguousarray(self.rows, dtype=np.int64)
        cols = np.ascontiguousarray(self.cols, dtype=np.int64)
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if not (rows.shape == cols.shape == values.shape) or rows.ndim != 1:
            raise DataError("rows, cols and values must be 1-d arrays of equal length")
        if self.n_rows < 0 or self.n_cols < 0:
            raise DataError("negative matrix dimension")
        if len(rows):
            if rows.min() < 0 or rows.max() >= self.n_rows:
                raise DataError("row id out of range")
            if cols.min() < 0 or cols.max() >= self.n_cols:
                raise DataError("col id out of range")
            if not np.all(np.isfinite(values)):
                raise DataError("non-finite rating value")
            keys = rows * self.n_cols + cols
            uniq, counts = np.unique(keys, return_counts=True)
            if len(uniq) != len(keys):
                dup = int(uniq[np.argmax(counts > 1)])
                raise DataError(f"duplicate entry ({dup // self.n_cols}, {dup % self.n_cols})")
        for a in (rows, cols, values):
            a.flags.writeable = False
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_entries(cls, n_rows: int, n_cols: int, entries: Sequence[tuple[int, int, float]]) -> "SparseMatrix":
        if len(entries):
            r, c, v = zip(*entries)
        else:
            r, c, v = (), (), ()
        return cls(n_rows, n_cols, np.array(r, dtype=np.int64), np.array(c, dtype=np.int64),
                   np.array(v, dtype=np.float64))

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self) -> Iterator[tuple[int, int, float]]:
        return zip(self.rows.tolist(), self.cols.tolist(), self.values.tolist())

    @property
    def entries(self) -> list[tuple[int, int, float]]:
        return list(self)

    @property
    def nnz(self) -> int:
        return len(self.values)

    @property
    def density(self) -> float:
        return self.nnz / (self.n_rows * self.n_cols)

    def mean(self) -> float:
        if not self.nnz:
            raise DataError("mean of an empty matrix")
        return float(self.values.mean())

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        if (self.n_rows, self.n_cols, self.nnz) != (other.n_rows, other.n_cols, other.nnz):
            return False
        a = np.lexsort((self.cols, self.rows))
        b = np.lexsort((other.cols, other.rows))
        return (np.array_equal(self.rows[a], other.rows[b])
                and np.array_equal(self.cols[a], other.cols[b])
                and np.array_equal(self.values[a], other.values[b]))

    __hash__ = None

    def csr(self) -> sp.csr_matrix:
        """Row-indexed view; column indices are sorted within each row."""
        if "csr" not in self._cache:
            m = sp.csr_matrix((self.values, (self.rows, self.cols)), shape=(self.n_rows, self.n_cols))
            m.sort_indices()
            self._cache["csr"] = m
        return self._cache["csr"]

    def csc(self) -> sp.csc_matrix:
        if "csc" not in self._cache:
            m = sp.csc_matrix((self.values, (self.rows, self.cols)), shape=(self.n_rows, self.n_cols))
            m.sort_indices()
            self._cache["csc"] = m
        return self._cache["csc"]

    def row_entries(self, u: int) -> list[tuple[int, float]]:
        m = self.csr()
        lo, hi = m.indptr[u], m.indptr[u + 1]
        return list(zip(m.indices[lo:hi].tolist(), m.data[lo:hi].tolist()))

    def col_entries(self, i: int) -> list[tuple[int, float]]:
        m = self.csc()
        lo, hi = m.indptr[i], m.indptr[i + 1]
        return list(zip(m.indices[lo:hi].tolist(), m.data[lo:hi].tolist()))

    def contains(self, u: int, i: int) -> bool:
        m = self.csr()
        lo, hi = m.indptr[u], m.indptr[u + 1]
        k = np.searchsorted(m.indices[lo:hi], i)
        return bool(k < hi - lo and m.indices[lo + k] == i)

    def row_degrees(self) -> np.ndarray:
        return np.bincount(self.rows, minlength=self.n_rows)

    def col_degrees(self) -> np.ndarray:
        return np.bincount(self.cols, minlength=self.n_cols)

    def subset(self, index: np.ndarray) -> "SparseMatrix":
        return SparseMatrix(self.n_rows, self.n_cols, self.rows[index], self.cols[index],
                            self.values[index], self.row_tokens, self.col_tokens)


_SEPARATORS = {"movielens": "::", "tsv": "\t", "csv": ","}


def load_ratings(path, format: str = "movielens", has_header: bool = False) -> SparseMatrix:
    """Parse a rating file into a SparseMatrix.

    User and item tokens are renumbered densely in first-seen order; the
    original tokens are kept on the result for writing predictions back.
    Lines starting with ``#`` and blank lines are skipped. Fields beyond the
    third (timestamps) are ignored.
    """
    try:
        sep = _SEPARATORS[format]
    except KeyError:
        raise DataError(f"unknown rating format {format!r}") from None
    users: dict[str, int] = {}
    items: dict[str, int] = {}
    rows, cols, vals = [], [], []
    seen: dict[tuple[int, int], int] = {}
    header_pending = has_header
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header_pending:
                header_pending = False
                continue
            parts = line.split(sep)
            if len(parts) < 3:
                raise ParseError(path, line_no, f"expected at least 3 fields, got {len(parts)}")
            user, item = parts[0].strip(), parts[1].strip()
            try:
                value = float(parts[2])
            except ValueError:
                raise ParseError(path, line_no, f"non-numeric rating {parts[2]!r}") from None
            if not math.isfinite(value):
                raise ParseError(path, line_no, f"non-finite rating {parts[2]!r}")
            u = users.setdefault(user, len(users))
            i = items.setdefault(item, len(items))
            if (u, i) in seen:
                raise ParseError(path, line_no, f"duplicate rating for user {user!r}, item {item!r} "
                                                f"(first seen at line {seen[(u, i)]})")
            seen[(u, i)] = line_no
            rows.append(u)
            cols.append(i)
            vals.append(value)
    return SparseMatrix(len(users), len(items), np.array(rows, dtype=np.int64),
                        np.array(cols, dtype=np.int64), np.array(vals, dtype=np.float64),
                        tuple(users), tuple(items))


def split(matrix: SparseMatrix, train_fraction: float, seed) -> tuple[SparseMatrix, SparseMatrix]:
    """Partition the observed entries uniformly at random.

    ``seed`` may be an int or a ``numpy.random.Generator``. The training part
    receives ``round(train_fraction * nnz)`` entries (halves round up); both
    parts keep the original dimensions and the original entry order.
    """
    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    if matrix.nnz < 2:
        raise DataError("need at least two entries to split")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n_train = int(math.floor(train_fraction * matrix.nnz + 0.5))
    perm = rng.permutation(matrix.nnz)
    mask = np.zeros(matrix.nnz, dtype=bool)
    mask[perm[:n_train]] = True
    return matrix.subset(np.flatnonzero(mask)), matrix.subset(np.flatnonzero(~mask))


def value_range(matrix: SparseMatrix) -> ValueRange:
    if matrix.nnz == 0:
        raise DataError("value range of an empty matrix")
    return ValueRange(float(matrix.values.min()), float(matrix.values.max()))


def save_matrix(matrix: SparseMatrix, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# rows={matrix.n_rows} cols={matrix.n_cols} nnz={matrix.nnz}\n")
        fh.writelines(f"{u}\t{i}\t{v!r}\n" for u, i, v in matrix)


def load_matrix(path) -> SparseMatrix:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header:
            raise DataError(f"{path}: empty matrix file")
        try:
            fields = dict(kv.split("=") for kv in header.lstrip("#").split())
            n_rows, n_cols, nnz = int(fields["rows"]), int(fields["cols"]), int(fields["nnz"])
        except (ValueError, KeyError):
            raise ParseError(path, 1, f"bad matrix header {header.strip()!r}") from None
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=np.float64)
        k = 0
        for line_no, line in enumerate(fh, 2):
            if not line.strip():
                continue
            if k >= nnz:
                raise ParseError(path, line_no, f"more entries than the declared nnz={nnz}")
            try:
                u, i, v = line.split("\t")
                rows[k], cols[k], vals[k] = int(u), int(i), float(v)
            except ValueError:
                raise ParseError(path, line_no, f"malformed entry {line.strip()!r}") from None
            k += 1
    if k != nnz:
        raise DataError(f"{path}: header declares nnz={nnz} but {k} entries were read")
    return SparseMatrix(n_rows, n_cols, rows, cols, vals)


def save_id_map(matrix: SparseMatrix, path) -> None:
    """Write the external-token sidecar as ``kind<TAB>id<TAB>token`` lines."""
    if matrix.row_tokens is None or matrix.col_tokens is None:
        raise DataError("matrix carries no id map")
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(f"user\t{k}\t{t}\n" for k, t in enumerate(matrix.row_tokens))
        fh.writelines(f"item\t{k}\t{t}\n" for k, t in enumerate(matrix.col_tokens))


def load_id_map(path) -> tuple[list[str], list[str]]:
    users: list[str] = []
    items: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            kind, idx, token = line.rstrip("\n").split("\t")
            target = users if kind == "user" else items
            if int(idx) != len(target):
                raise ParseError(path, line_no, "id map is not densely ordered")
            target.append(token)
    return users, items


def read_any(path, format: str = "auto", has_header: bool = False) -> SparseMatrix:
    """Load either the canonical TSV format or a raw rating file."""
    path = Path(path)
    if format in ("auto", "canonical"):
        with open(path, encoding="utf-8") as fh:
            first = fh.readline()
        if first.startswith("# rows="):
            return load_matrix(path)
        if format == "canonical":
            raise ParseError(path, 1, "missing canonical '# rows=' header")
        if path.suffix == ".csv":
            format = "csv"
        elif path.suffix in (".tsv", ".txt", ".inter"):
            format = "tsv"
        else:
            format = "movielens"
    return load_ratings(path, format, has_header)
