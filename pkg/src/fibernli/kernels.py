"""EGN kernels (phi1..phi4) and memory kernels (chi, xi, psi).

All kernels at a fixed output frequency ``f`` are weighted reductions of one
table of triplet-beating values on a tensor quadrature mesh over
``[-B, B]^2``. The table is built once per ``f`` (:class:`KernelGrid`) and the
delay weights are applied through row, column and anti-diagonal sums or small
matrix products, so a full set of delays costs little more than one kernel.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, UsageError
from .linkmodel import LinkConfig, PulseShape, mu

PHI_IDS = ("phi1", "phi2", "phi3", "phi4")
SINGLE_DELAY_IDS = ("chi1", "chi2", "chi3", "xi1", "psi1", "psi2")
DOUBLE_DELAY_IDS = ("xi2", "psi3")
KERNEL_IDS = PHI_IDS + SINGLE_DELAY_IDS + DOUBLE_DELAY_IDS

_RULES = ("trapezoid", "simpson")


@dataclass(frozen=True)
class QuadratureConfig:
    """Tensor-product quadrature on ``[-B, B]^2``.

    ``integration_bound_hz=None`` means ``B = Rs/2``. ``singular_refinement``
    multiplies the number of mesh intervals (a uniform refinement; the
    phase-matched lines are grid lines already because the node count is odd).
    """

    points_per_axis: int = 401
    integration_bound_hz: float | None = None
    singular_refinement: int | None = None
    rule: str = "trapezoid"

    def __post_init__(self):
        n = self.points_per_axis
        if int(n) != n or n < 3 or n % 2 == 0:
            raise ConfigError("points_per_axis must be an odd integer >= 3", key="points_per_axis")
        if self.integration_bound_hz is not None and not self.integration_bound_hz > 0:
            raise ConfigError("integration_bound_hz must be > 0", key="integration_bound_hz")
        r = self.singular_refinement
        if r is not None and (int(r) != r or r < 1):
            raise ConfigError("singular_refinement must be a positive integer", key="singular_refinement")
        if self.rule not in _RULES:
            raise ConfigError(f"rule must be one of {_RULES}", key="rule")

    def nodes(self, pulse):
        bound = self.integration_bound_hz or pulse.symbol_rate_hz / 2.0
        n = (self.points_per_axis - 1) * (self.singular_refinement or 1) + 1
        x = np.linspace(-bound, bound, n)
        h = x[1] - x[0]
        if self.rule == "trapezoid":
            w = np.full(n, h)
            w[0] = w[-1] = h / 2.0
        else:
            w = np.full(n, 2.0 * h / 3.0)
            w[1::2] = 4.0 * h / 3.0
            w[0] = w[-1] = h / 3.0
        return x, w


@dataclass(frozen=True, eq=False)
class KernelGrid:
    """Triplet-beating tables at one output frequency.

    ``upsilon[i, j]`` is Upsilon(x_i, x_j, f). ``inner[i, j]`` is the same
    without the S(f1) factor, and ``inner_sub[i, j]`` is the integrand of the
    substituted inner integral, S(f2) S(f1-f2+f) mu(f1-f2+f, f2, f).
    """

    f_target: float
    nodes: np.ndarray
    weights: np.ndarray
    s_nodes: np.ndarray
    inner: np.ndarray
    inner_sub: np.ndarray
    symbol_rate: float

    @property
    def upsilon(self):
        return self.s_nodes[:, None] * self.inner

    @property
    def mesh_weights(self):
        return np.outer(self.weights, self.weights)

    def diagnostics(self):
        n = self.nodes.size
        nbytes = self.inner.nbytes + self.inner_sub.nbytes
        return {
            "points_per_axis": n,
            "table_entries": n * n,
            "tables": 2,
            "nbytes": int(nbytes),
            "finite": bool(np.isfinite(self.inner).all() and np.isfinite(self.inner_sub).all()),
        }


def _build(f, pulse, link, quad):
    x, w = quad.nodes(pulse)
    s = pulse.spectrum(x)
    F1 = x[:, None]
    F2 = x[None, :]
    inner = s[None, :] * pulse.spectrum(F1 + F2 - f) * mu(F1, F2, f, link)
    g = F1 - F2 + f
    inner_sub = s[None, :] * pulse.spectrum(g) * mu(g, F2, f, link)
    for arr in (x, w, s, inner, inner_sub):
        arr.setflags(write=False)
    return KernelGrid(float(f), x, w, s, inner, inner_sub, pulse.symbol_rate_hz)


@functools.lru_cache(maxsize=8)
def _build_cached(f, pulse, link, quad):
    return _build(f, pulse, link, quad)


def build_kernel_grid(f, pulse, link, quad=None, cache=True):
    """Tabulate Upsilon on the quadrature mesh for output frequency ``f``."""
    if not isinstance(pulse, PulseShape) or not isinstance(link, LinkConfig):
        raise ConfigError("build_kernel_grid needs a PulseShape and a LinkConfig")
    quad = quad or QuadratureConfig()
    if cache:
        return _build_cached(float(f), pulse, link, quad)
    return _build(float(f), pulse, link, quad)


@dataclass(frozen=True)
class KernelValue:
    kernel_id: str
    f: float
    value: float
    tau: int | None = None
    tau_prime: int | None = None


@dataclass(eq=False)
class KernelTable:
    """Every kernel at one frequency for delays ``0..max_tau`` (and
    ``0..max_tau_prime`` for the double-delay kernels)."""

    f: float
    max_tau: int
    max_tau_prime: int
    phi: dict
    single: dict
    double: dict = field(default_factory=dict)

    def get(self, kernel_id, tau=None, tau_prime=None):
        if kernel_id in PHI_IDS:
            return self.phi[kernel_id]
        if kernel_id in SINGLE_DELAY_IDS:
            return self.single[kernel_id][tau]
        if kernel_id in DOUBLE_DELAY_IDS:
            return self.double[kernel_id][tau, tau_prime]
        raise UsageError(f"unknown kernel id {kernel_id!r}")


def _phi_values(grid):
    Rs = grid.symbol_rate
    w = grid.weights
    s2w = w * grid.s_nodes**2
    ups = grid.upsilon
    wu = ups * grid.mesh_weights
    inner = grid.inner @ w
    inner_sub = grid.inner_sub @ w
    return {
        "phi1": 16.0 / 27.0 * Rs**3 * float(np.sum(grid.mesh_weights * np.abs(ups) ** 2)),
        "phi2": 16.0 / 81.0 * Rs**2 * float(np.sum(s2w * np.abs(inner) ** 2)),
        "phi3": 16.0 / 81.0 * Rs**2 * float(np.sum(s2w * np.abs(inner_sub) ** 2)),
        "phi4": 16.0 / 81.0 * Rs * float(np.abs(np.sum(wu)) ** 2),
    }


def _antidiagonal_sums(a):
    n = a.shape[0]
    k = (np.arange(n)[:, None] + np.arange(n)[None, :]).ravel()
    re = np.bincount(k, weights=a.real.ravel(), minlength=2 * n - 1)
    im = np.bincount(k, weights=a.imag.ravel(), minlength=2 * n - 1)
    return re + 1j * im


def _single_values(grid, taus):
    Rs = grid.symbol_rate
    f = grid.f_target
    x = grid.nodes
    w = grid.weights
    s2w = w * grid.s_nodes**2
    wu = grid.upsilon * grid.mesh_weights
    t = np.asarray(taus, dtype=float)[:, None]
    out = {}

    # chi1: weight depends on f2 only -> column sums
    col = wu.sum(axis=0)
    c2 = np.cos(np.pi * t * (f - x) / Rs) ** 2
    out["chi1"] = 32.0 / 81.0 * Rs * (np.abs(c2 @ col) ** 2 - np.abs((1.0 - c2) @ col) ** 2)

    # chi2: weight depends on f1 only -> row sums.
    # |sum g cos|^2 + |sum g sin|^2 = (|sum g e^{+j}|^2 + |sum g e^{-j}|^2) / 2
    row = wu.sum(axis=1)
    e = np.exp(2j * np.pi * t * x / Rs)
    out["chi2"] = 32.0 / 81.0 * Rs * 0.5 * (np.abs(e @ row) ** 2 + np.abs(e.conj() @ row) ** 2)

    # chi3: weight depends on f1 + f2 -> anti-diagonal sums of the uniform mesh
    diag = _antidiagonal_sums(wu)
    ssum = 2.0 * x[0] + np.arange(diag.size) * (x[1] - x[0])
    e = np.exp(2j * np.pi * t * (ssum - f) / Rs)
    out["chi3"] = 32.0 / 81.0 * Rs * 0.5 * (np.abs(e @ diag) ** 2 + np.abs(e.conj() @ diag) ** 2)

    inner = grid.inner @ w
    q = s2w * np.abs(inner) ** 2
    c2 = np.cos(np.pi * t * (f - x) / Rs) ** 2
    out["xi1"] = 32.0 / 81.0 * Rs**2 * (c2 @ q - (1.0 - c2) @ q)

    e = np.exp(2j * np.pi * t * x / Rs).T  # (n, T)
    vw = grid.inner * w[None, :]
    a_plus = vw @ e
    a_minus = vw @ e.conj()
    out["psi1"] = 32.0 / 81.0 * Rs**2 * 0.5 * (s2w @ (np.abs(a_plus) ** 2 + np.abs(a_minus) ** 2))

    # psi2: the weight's argument f1 - f2 + f splits into a per-row phase,
    # which drops out of the cos^2 + sin^2 pair
    vw = grid.inner_sub * w[None, :]
    b_plus = vw @ e.conj()
    b_minus = vw @ e
    out["psi2"] = 16.0 / 81.0 * Rs**2 * 0.5 * (s2w @ (np.abs(b_plus) ** 2 + np.abs(b_minus) ** 2))
    return out


def _double_values(grid, max_tau, max_tau_prime):
    Rs = grid.symbol_rate
    f = grid.f_target
    x = grid.nodes
    wu = grid.upsilon * grid.mesh_weights
    K = max_tau_prime
    d = np.arange(-K, K + 1)
    ea = np.exp(2j * np.pi * d[:, None] * x[None, :] / Rs)  # (2K+1, n)

    row = wu.sum(axis=1)
    Tvals = (ea @ row) * np.exp(-2j * np.pi * d * f / Rs)

    def T(k):
        return Tvals[k + K]

    F = ea @ wu @ ea.T

    def Fab(a, b):
        return F[a + K, b + K]

    tau = np.arange(max_tau + 1)[:, None]
    taup = np.arange(max_tau_prime + 1)[None, :]
    tau, taup = np.broadcast_arrays(tau, taup)
    xi2 = 2.0 * np.real(
        T(tau) * np.conj(T(taup)) + T(taup - tau) * np.conj(T(-tau)) + T(tau - taup) * np.conj(T(-taup))
    )
    psi3 = (
        np.abs(Fab(-tau, -taup)) ** 2
        + np.abs(Fab(-taup, -tau)) ** 2
        + np.abs(Fab(tau, tau - taup)) ** 2
        + np.abs(Fab(tau - taup, tau)) ** 2
        + np.abs(Fab(taup - tau, taup)) ** 2
        + np.abs(Fab(taup, taup - tau)) ** 2
    )
    return {"xi2": 16.0 / 81.0 * Rs * xi2, "psi3": 16.0 / 81.0 * Rs * psi3}


def kernel_table(grid, max_tau, max_tau_prime=None, double=True):
    """All kernels from one grid, for ``tau = 0..max_tau``.

    Double-delay arrays are indexed ``[tau, tau_prime]`` with
    ``tau_prime = 0..max_tau_prime`` (default ``2 * max_tau``, the largest
    delay reached by the double sums).
    """
    if max_tau < 0:
        raise UsageError("max_tau must be >= 0")
    if max_tau_prime is None:
        max_tau_prime = 2 * max_tau
    taus = np.arange(max_tau + 1)
    table = KernelTable(
        f=grid.f_target,
        max_tau=int(max_tau),
        max_tau_prime=int(max_tau_prime),
        phi=_phi_values(grid),
        single=_single_values(grid, taus),
    )
    if double:
        table.double = _double_values(grid, max_tau, max_tau_prime)
    return table


def eval_phi(i, f, pulse, link, quad=None, grid=None):
    """One EGN kernel phi_i(f), ``i`` in 1..4 (or ``"phi1"`` ...)."""
    kid = i if isinstance(i, str) else f"phi{i}"
    if kid not in PHI_IDS:
        raise UsageError(f"unknown EGN kernel {i!r}")
    grid = grid or build_kernel_grid(f, pulse, link, quad)
    return KernelValue(kid, float(f), _phi_values(grid)[kid])


def eval_single_delay_kernel(kernel_id, tau, f, pulse, link, quad=None, grid=None):
    if kernel_id not in SINGLE_DELAY_IDS:
        raise UsageError(f"unknown single-delay kernel {kernel_id!r}")
    if int(tau) != tau or tau < 0:
        raise UsageError("tau must be a non-negative integer")
    grid = grid or build_kernel_grid(f, pulse, link, quad)
    value = _single_values(grid, [int(tau)])[kernel_id][0]
    return KernelValue(kernel_id, float(f), float(value), tau=int(tau))


def eval_double_delay_kernel(kernel_id, tau, tau_prime, f, pulse, link, quad=None, grid=None, strict=True):
    """xi2 or psi3 at (tau, tau'). The model only uses ``0 < tau < tau'``;
    ``strict=False`` allows any non-negative pair (used for the tau=0 checks)."""
    if kernel_id not in DOUBLE_DELAY_IDS:
        raise UsageError(f"unknown double-delay kernel {kernel_id!r}")
    if strict and not 0 < tau < tau_prime:
        raise UsageError("double-delay kernels are defined for 0 < tau < tau_prime")
    if tau < 0 or tau_prime < 0:
        raise UsageError("delays must be non-negative")
    grid = grid or build_kernel_grid(f, pulse, link, quad)
    vals = _double_values(grid, int(tau), max(int(tau), int(tau_prime)))
    return KernelValue(kernel_id, float(f), float(vals[kernel_id][tau, tau_prime]), int(tau), int(tau_prime))
