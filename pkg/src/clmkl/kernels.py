"""Gram matrix construction, normalization, bundles, and kernel file I/O."""

from __future__ import annotations

import csv
import io
import os
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

KMX_MAGIC = b"KMX1"

# Largest dimension we accept from a kernel file header; anything bigger is
# either corruption or would not fit in memory anyway.
_MAX_DIM = 2**32


class KernelFormatError(ValueError):
    """Raised when a kernel file does not conform to the KMX1/CSV format."""


def validate_gram(K, name: str = "kernel") -> np.ndarray:
    """Check symmetry and finiteness of a square Gram matrix.

    Returns the matrix as a float64 array. Symmetry tolerance is
    1e-12 relative to the entry magnitude.
    """
    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError(f"{name}: expected a square matrix, got shape {K.shape}")
    if not np.all(np.isfinite(K)):
        raise ValueError(f"{name}: non-finite entries")
    scale = np.maximum(1.0, np.abs(K))
    if not np.all(np.abs(K - K.T) <= 1e-12 * scale):
        raise ValueError(f"{name}: matrix is not symmetric")
    return K


def min_eigenvalue(K) -> float:
    return float(np.linalg.eigvalsh(np.asarray(K, dtype=np.float64))[0])


def check_psd(K, name: str = "kernel") -> float:
    """Advisory PSD check: warn (do not fail) on eigenvalues below
    -1e-8 * trace/n, which is beyond what normalization round-off produces."""
    K = np.asarray(K, dtype=np.float64)
    lo = min_eigenvalue(K)
    threshold = -1e-8 * np.trace(K) / K.shape[0]
    if lo < threshold:
        warnings.warn(
            f"{name}: smallest eigenvalue {lo:.3e} below PSD tolerance {threshold:.3e}",
            stacklevel=2,
        )
    return lo


@dataclass(frozen=True)
class KernelSpec:
    """Closed-form kernel on primitive feature vectors.

    kind is one of 'linear', 'gaussian', 'polynomial', 'chi2'.
    width > 0 for gaussian; for chi2 width may be None, meaning "use the
    mean chi-squared distance of the data" at Gram-computation time.
    """

    kind: str
    width: float | None = None
    degree: int = 1
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in ("linear", "gaussian", "polynomial", "chi2"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "gaussian" and (self.width is None or self.width <= 0):
            raise ValueError("gaussian kernel needs width > 0")
        if self.kind == "chi2" and self.width is not None and self.width <= 0:
            raise ValueError("chi2 kernel width must be > 0 (or omitted for auto)")
        if self.kind == "polynomial" and self.degree < 1:
            raise ValueError("polynomial degree must be >= 1")


def parse_kernel_spec(text: str) -> KernelSpec:
    """Parse 'linear', 'gaussian:width=2', 'polynomial:degree=3,offset=1',
    'chi2' or 'chi2:width=1.5'."""
    kind, _, rest = text.partition(":")
    kind = kind.strip()
    params = {}
    if rest:
        for item in rest.split(","):
            key, _, val = item.partition("=")
            if not val:
                raise ValueError(f"bad kernel spec parameter {item!r} in {text!r}")
            params[key.strip()] = val.strip()
    try:
        if kind == "linear":
            return KernelSpec("linear")
        if kind == "gaussian":
            return KernelSpec("gaussian", width=float(params.pop("width")))
        if kind == "polynomial":
            return KernelSpec(
                "polynomial",
                degree=int(params.pop("degree", 2)),
                offset=float(params.pop("offset", 1.0)),
            )
        if kind == "chi2":
            width = params.pop("width", None)
            return KernelSpec("chi2", width=float(width) if width is not None else None)
    except KeyError as exc:
        raise ValueError(f"kernel spec {text!r} is missing parameter {exc}") from None
    raise ValueError(f"unknown kernel kind {kind!r}")


def _sq_distances(X, Z):
    # |x - z|^2 without forming the difference tensor
    xx = np.einsum("ij,ij->i", X, X)
    zz = np.einsum("ij,ij->i", Z, Z)
    d = xx[:, None] + zz[None, :] - 2.0 * (X @ Z.T)
    np.maximum(d, 0.0, out=d)
    return d


def _chi2_distances(X, Z):
    # sum_d (x_d - z_d)^2 / (x_d + z_d), with 0/0 := 0
    n, m = X.shape[0], Z.shape[0]
    out = np.empty((n, m))
    for i in range(n):
        num = (X[i][None, :] - Z) ** 2
        den = X[i][None, :] + Z
        ratio = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
        out[i] = ratio.sum(axis=1)
    return out


def _kernel_values(X, Z, spec: KernelSpec) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    Z = np.asarray(Z, dtype=np.float64)
    if X.ndim != 2 or Z.ndim != 2 or X.shape[1] != Z.shape[1]:
        raise ValueError("feature matrices must be 2-d with equal width")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Z))):
        raise ValueError("non-finite feature values")
    if spec.kind == "linear":
        return X @ Z.T
    if spec.kind == "gaussian":
        return np.exp(-_sq_distances(X, Z) / (2.0 * spec.width**2))
    if spec.kind == "polynomial":
        return (X @ Z.T + spec.offset) ** spec.degree
    # chi2
    if np.any(X < 0) or np.any(Z < 0):
        raise ValueError("chi-squared kernel requires nonnegative features")
    d = _chi2_distances(X, Z)
    width = spec.width
    if width is None:
        width = float(np.mean(d))
        if width <= 0:
            width = 1.0
    return np.exp(-d / width)


def compute_gram(X, spec: KernelSpec) -> np.ndarray:
    """Gram matrix of the given closed-form kernel over the rows of X."""
    K = _kernel_values(X, X, spec)
    # enforce exact symmetry against float round-off
    K = 0.5 * (K + K.T)
    return K


@dataclass(frozen=True)
class CrossKernelMatrix:
    """Kernel evaluations k(x_test, x_train), plus the test self-evaluations
    k(x, x) needed for feature-space distances of new points."""

    values: np.ndarray  # n_test x n_train
    diag_test: np.ndarray | None = None  # n_test self-evaluations

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("cross-kernel values must be 2-d")
        if not np.all(np.isfinite(values)):
            raise ValueError("cross-kernel has non-finite entries")
        object.__setattr__(self, "values", values)
        if self.diag_test is not None:
            diag = np.asarray(self.diag_test, dtype=np.float64)
            if diag.shape != (values.shape[0],):
                raise ValueError("diag_test length must match the test row count")
            object.__setattr__(self, "diag_test", diag)


def compute_cross(X_test, X_train, spec: KernelSpec) -> CrossKernelMatrix:
    values = _kernel_values(X_test, X_train, spec)
    X_test = np.asarray(X_test, dtype=np.float64)
    diag = np.array([_kernel_values(x[None, :], x[None, :], spec)[0, 0] for x in X_test])
    return CrossKernelMatrix(values, diag)


def normalize_multiplicative(K) -> np.ndarray:
    """Rescale so every point has unit self-similarity:
    K'[i,j] = K[i,j] / sqrt(K[i,i] K[j,j])."""
    K = np.asarray(K, dtype=np.float64)
    d = np.diag(K)
    if np.any(d <= 0):
        raise ValueError("multiplicative normalization needs a positive diagonal")
    s = 1.0 / np.sqrt(d)
    out = K * np.outer(s, s)
    np.fill_diagonal(out, 1.0)
    return out


def normalize_multiplicative_cross(
    cross: CrossKernelMatrix, train_diag
) -> CrossKernelMatrix:
    """Apply the training kernel's multiplicative normalization to a cross
    matrix; requires the test self-evaluations to scale the rows."""
    train_diag = np.asarray(train_diag, dtype=np.float64)
    if np.any(train_diag <= 0):
        raise ValueError("multiplicative normalization needs a positive diagonal")
    if cross.diag_test is None:
        raise ValueError("cross matrix lacks test diagonal, cannot normalize rows")
    if np.any(cross.diag_test <= 0):
        raise ValueError("test self-evaluations must be positive")
    values = cross.values / np.sqrt(cross.diag_test)[:, None] / np.sqrt(train_diag)[None, :]
    return CrossKernelMatrix(values, np.ones(values.shape[0]))


def normalize_trace(K) -> np.ndarray:
    """Scale to trace(K') = n so unit-diagonal kernels are fixed points."""
    K = np.asarray(K, dtype=np.float64)
    t = float(np.trace(K))
    if t <= 0:
        raise ValueError("trace normalization needs a positive trace")
    return K * (K.shape[0] / t)


def trace_scale(K) -> float:
    """The factor n/trace(K) that normalize_trace multiplies by."""
    K = np.asarray(K, dtype=np.float64)
    t = float(np.trace(K))
    if t <= 0:
        raise ValueError("trace normalization needs a positive trace")
    return K.shape[0] / t


def sum_uniform(kernels) -> np.ndarray:
    """Entrywise mean of the bundle's kernels (the uniform combination)."""
    mats = list(kernels)
    if not mats:
        raise ValueError("empty kernel bundle")
    out = np.zeros_like(np.asarray(mats[0], dtype=np.float64))
    for K in mats:
        out += np.asarray(K, dtype=np.float64)
    out /= len(mats)
    return out


@dataclass
class KernelBundle:
    """Ordered collection of M Gram matrices over the same n points."""

    kernels: list = field(default_factory=list)
    names: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.kernels) < 1:
            raise ValueError("bundle needs at least one kernel")
        if len(self.names) != len(self.kernels):
            raise ValueError("one name per kernel required")
        if len(set(self.names)) != len(self.names):
            raise ValueError("kernel names must be unique")
        self.kernels = [validate_gram(K, name) for K, name in zip(self.kernels, self.names)]
        n = self.kernels[0].shape[0]
        for K, name in zip(self.kernels, self.names):
            if K.shape[0] != n:
                raise ValueError(f"kernel {name!r} has size {K.shape[0]}, expected {n}")

    @property
    def n(self) -> int:
        return self.kernels[0].shape[0]

    @property
    def M(self) -> int:
        return len(self.kernels)


def store_kernel_matrix(K, path) -> None:
    """Write a matrix as a KMX1 file: magic, two u64-le dims, row-major f64-le."""
    K = np.ascontiguousarray(K, dtype="<f8")
    if K.ndim != 2:
        raise ValueError("kernel files hold 2-d matrices")
    if not np.all(np.isfinite(K)):
        raise ValueError("refusing to store non-finite kernel entries")
    payload = io.BytesIO()
    payload.write(KMX_MAGIC)
    payload.write(struct.pack("<QQ", K.shape[0], K.shape[1]))
    payload.write(K.tobytes(order="C"))
    atomic_write_bytes(path, payload.getvalue())


def load_kernel_matrix(path) -> np.ndarray:
    """Read a KMX1 file back; store/load round-trips bit-exactly."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != KMX_MAGIC:
            raise KernelFormatError(f"{path}: bad magic {magic!r}, expected {KMX_MAGIC!r}")
        header = fh.read(16)
        if len(header) != 16:
            raise KernelFormatError(f"{path}: truncated header")
        rows, cols = struct.unpack("<QQ", header)
        if rows > _MAX_DIM or cols > _MAX_DIM:
            raise KernelFormatError(f"{path}: implausible dimensions {rows}x{cols}")
        # validate against the real file size before trusting the header
        remaining = os.fstat(fh.fileno()).st_size - 20
        expected = rows * cols * 8
        if remaining < expected:
            raise KernelFormatError(f"{path}: truncated payload")
        if remaining > expected:
            raise KernelFormatError(f"{path}: trailing bytes after payload")
        data = fh.read(expected)
    K = np.frombuffer(data, dtype="<f8").reshape(rows, cols).copy()
    if np.any(np.isnan(K)):
        raise KernelFormatError(f"{path}: NaN entries")
    return K


def load_kernel_csv(path) -> np.ndarray:
    """Headerless comma-separated matrix, for interoperability."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise KernelFormatError(f"{path}:{lineno}: non-numeric entry") from None
    if not rows:
        raise KernelFormatError(f"{path}: empty matrix")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise KernelFormatError(f"{path}: ragged rows")
    K = np.asarray(rows, dtype=np.float64)
    if np.any(np.isnan(K)):
        raise KernelFormatError(f"{path}: NaN entries")
    return K


def load_matrix(path) -> np.ndarray:
    """Dispatch on extension: .csv is parsed as CSV, anything else as KMX1."""
    if str(path).endswith(".csv"):
        return load_kernel_csv(path)
    return load_kernel_matrix(path)


def atomic_write_bytes(path, data: bytes) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))
