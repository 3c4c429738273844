"""Laguerre-Gauss cavity modes and the radial quadrature engine."""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

# Gauss-Kronrod 7/15 nodes and weights on [-1, 1] (non-negative half).
_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KW = np.concatenate([_WGK[:-1], _WGK[::-1]])
_GW = np.zeros(15)
# Gauss points are the odd-indexed Kronrod nodes of the half table.
for _j, _i in enumerate((1, 3, 5)):
    _GW[_i] = _WG[_j]
    _GW[14 - _i] = _WG[_j]
_GW[7] = _WG[3]


class QuadratureError(RuntimeError):
    """Adaptive quadrature stopped before reaching its tolerance."""

    def __init__(self, message: str, value: float, err_estimate: float):
        super().__init__(f"{message} (value={value!r}, error estimate={err_estimate:.3e})")
        self.value = value
        self.err_estimate = err_estimate


@dataclass(frozen=True)
class ModeIndex:
    """Radial (n) and angular (l) quantum numbers of a Laguerre-Gauss mode."""

    n: int
    l: int

    def __post_init__(self):
        if self.n < 0 or self.l < 0:
            raise ValueError(f"mode indices must be non-negative, got n={self.n}, l={self.l}")

    @property
    def alpha(self) -> int:
        """Landau-manifold label l mod 3."""
        return self.l % 3

    @property
    def in_lll(self) -> bool:
        return self.n == 0 and self.alpha == 0


@dataclass(frozen=True)
class CavityGeometry:
    """Cavity waist and the (n, alpha) -> frequency table.

    Modes with equal (n, l mod 3) are degenerate, so the table is keyed by
    that pair only.
    """

    w0: float = 1.0
    delta_freqs: Mapping[tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.w0 > 0:
            raise ValueError("w0 must be positive")
        for (n, alpha) in self.delta_freqs:
            if n < 0 or alpha not in (0, 1, 2):
                raise ValueError(f"bad frequency key {(n, alpha)}")

    def frequency(self, mode: ModeIndex) -> float:
        return self.delta_freqs[(mode.n, mode.alpha)]


@dataclass(frozen=True)
class QuadratureConfig:
    """Settings for :func:`radial_quadrature`.

    The stopping rule is ``err <= max(atol, rtol * integral of |f|)`` so that
    integrals cancelling to zero still terminate.
    """

    rtol: float = 1e-10
    atol: float = 0.0
    max_evals: int = 1_000_000
    breakpoints: Sequence[float] = ()
    x_max: float | None = None
    initial_panels: int = 16


def laguerre(n: int, k: float, x):
    """Generalized Laguerre polynomial L_n^k(x) by the upward recurrence in n."""
    if n < 0:
        raise ValueError("n must be non-negative")
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if n == 0:
        return prev if prev.ndim else float(prev)
    cur = 1.0 + k - x
    for j in range(1, n):
        prev, cur = cur, ((2 * j + 1 + k - x) * cur - (j + k) * prev) / (j + 1)
    return cur if cur.ndim else float(cur)


def log_mode_norm(n: int, l: int) -> float:
    """log C_{n,l} for w0 = 1."""
    l = abs(l)
    return 0.5 * ((l + 1) * math.log(2.0) + math.lgamma(n + 1) - math.log(math.pi) - math.lgamma(l + n + 1))


def mode_norm(n: int, l: int, w0: float = 1.0) -> float:
    return math.exp(log_mode_norm(n, l)) / w0


def mode_function(mode: ModeIndex, r, phi, w0: float = 1.0):
    """Normalized LG mode f_{n,l}(r, phi) with x = r / w0."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("r must be non-negative")
    x = r / w0
    l = abs(mode.l)
    if l == 0:
        logmag = -x * x + log_mode_norm(mode.n, 0)
    else:
        with np.errstate(divide="ignore"):
            # x**l e^{-x^2} assembled in log space so large l does not overflow
            logmag = l * np.log(x) - x * x + log_mode_norm(mode.n, l)
    radial = np.exp(logmag) * laguerre(mode.n, l, 2 * x * x)
    out = radial * np.exp(1j * mode.l * np.asarray(phi, dtype=float)) / w0
    return out if np.ndim(out) else complex(out)


def _auto_cutoff(integrand: Callable, floor: float = 1e-22) -> float:
    grid = np.linspace(0.0, 64.0, 257)
    with np.errstate(all="ignore"):
        vals = np.abs(np.nan_to_num(np.asarray(integrand(grid), dtype=float)))
    peak = vals.max()
    if peak == 0.0:
        return 8.0
    significant = np.nonzero(vals > floor * peak)[0]
    return float(min(64.0, grid[significant[-1]] + 1.5))


def radial_quadrature(integrand: Callable, config: QuadratureConfig | None = None) -> tuple[float, float]:
    """Adaptive Gauss-Kronrod (7/15) integral of ``integrand`` over [0, inf).

    ``integrand`` must accept a 1-D array of abscissae.  The domain is cut at
    an automatically detected x_max beyond which the integrand is below
    1e-22 of its peak (Gaussian decay is assumed).  Panels are bisected
    worst-first until the summed Kronrod-Gauss difference meets the
    tolerance.  Returns ``(value, err_estimate)``.
    """
    cfg = config or QuadratureConfig()
    x_max = cfg.x_max if cfg.x_max is not None else _auto_cutoff(integrand)
    edges = set(np.linspace(0.0, x_max, cfg.initial_panels + 1).tolist())
    edges.update(b for b in cfg.breakpoints if 0.0 < b < x_max)
    edges = sorted(edges)

    def evaluate(panels):
        lo = np.array([p[0] for p in panels])
        hi = np.array([p[1] for p in panels])
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        pts = mid[:, None] + half[:, None] * _NODES[None, :]
        f = np.asarray(integrand(pts.ravel()), dtype=float).reshape(pts.shape)
        kron = half * (f @ _KW)
        gauss = half * (f @ _GW)
        absint = half * (np.abs(f) @ _KW)
        return kron, np.abs(kron - gauss), absint

    panels = list(zip(edges[:-1], edges[1:]))
    kron, err, absint = evaluate(panels)
    n_evals = 15 * len(panels)
    heap = [(-e, a, b, k, s) for (a, b), k, e, s in zip(panels, kron, err, absint)]
    heapq.heapify(heap)
    total = float(np.sum(kron))
    total_err = float(np.sum(err))
    total_abs = float(np.sum(absint))

    while True:
        tol = max(cfg.atol, cfg.rtol * total_abs)
        if total_err <= tol:
            return total, total_err
        if n_evals >= cfg.max_evals:
            raise QuadratureError("radial quadrature hit its evaluation budget", total, total_err)
        # split the worst panels carrying at least half the error
        batch, carried = [], 0.0
        while heap and (carried < 0.5 * total_err or not batch) and len(batch) < 256:
            item = heapq.heappop(heap)
            batch.append(item)
            carried += -item[0]
        children = []
        for _, a, b, _, _ in batch:
            c = 0.5 * (a + b)
            if not (a < c < b):
                raise QuadratureError("panel width underflow in radial quadrature", total, total_err)
            children.extend([(a, c), (c, b)])
        ck, ce, cs = evaluate(children)
        n_evals += 15 * len(children)
        for _, _, _, k, s in batch:
            total -= k
            total_abs -= s
        total_err -= carried
        for (a, b), k, e, s in zip(children, ck, ce, cs):
            heapq.heappush(heap, (-e, a, b, k, s))
        total += float(np.sum(ck))
        total_abs += float(np.sum(cs))
        total_err = float(sum(-h[0] for h in heap))


def mode_overlap(a: ModeIndex, b: ModeIndex, w0: float = 1.0, config: QuadratureConfig | None = None) -> complex:
    """<f_a | f_b>; the azimuthal integral is the Kronecker delta in l."""
    if a.l != b.l:
        return 0j
    l = abs(a.l)
    lognorm = log_mode_norm(a.n, l) + log_mode_norm(b.n, l)

    def radial(x):
        with np.errstate(divide="ignore"):
            w = np.exp(lognorm + (2 * l + 1) * np.log(x) - 2 * x * x) if l else x * np.exp(lognorm - 2 * x * x)
        return w * laguerre(a.n, l, 2 * x * x) * laguerre(b.n, l, 2 * x * x)

    value, _ = radial_quadrature(radial, config)
    # r dr carries w0^2, the two normalization constants 1/w0^2
    return complex(2.0 * math.pi * value)
