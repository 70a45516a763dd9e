"""Ideal constant-composition shaping and the 1-D/2-D/4-D dimension mappings."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ParameterError, UsageError
from .stats import MAPPINGS, AmplitudeComposition, amplitude_moments

PMF_64QAM = (0.4, 0.3, 0.2, 0.1)
ALPHABET_64QAM = (1, 3, 5, 7)


def make_composition(pmf, alphabet, N, strict=False):
    """Integer level counts close to ``N * pmf`` summing to ``N``.

    Counts are floored and the remaining slots go to the largest remainders.
    With ``strict=True`` a non-integer ``N * pmf`` is rejected.
    """
    pmf = np.asarray(pmf, dtype=float)
    if pmf.ndim != 1 or pmf.size != len(alphabet):
        raise ParameterError("pmf and alphabet must have the same length")
    if np.any(pmf < 0) or not np.isclose(pmf.sum(), 1.0, atol=1e-9):
        raise ParameterError("pmf must be non-negative and sum to 1")
    if int(N) != N or N < 1:
        raise ParameterError("N must be a positive integer")
    N = int(N)
    target = N * pmf
    counts = np.floor(target + 1e-9).astype(int)
    short = N - counts.sum()
    if short < 0 or short > pmf.size:
        raise ParameterError(f"cannot round N*pmf={target.tolist()} to N={N}")
    order = np.argsort(-(target - counts), kind="stable")
    counts[order[:short]] += 1
    if strict and np.max(np.abs(counts - target)) > 1e-9:
        raise ParameterError(f"N*pmf={target.tolist()} is not integer valued")
    return AmplitudeComposition(tuple(alphabet), tuple(int(c) for c in counts))


def generate_block(comp, rng):
    """One uniformly random arrangement of the composition multiset."""
    return rng.permutation(comp.multiset())


def generate_blocks(comp, n_blocks, rng):
    """``n_blocks`` independent arrangements as an (n_blocks, N) array."""
    base = np.broadcast_to(comp.multiset(), (int(n_blocks), comp.blocklength))
    return rng.permuted(base, axis=1)


@dataclass(frozen=True)
class ShapingScheme:
    """Constant-composition PAS with H-D mapping.

    ``power_target`` is the per-polarization launch power in W.
    """

    composition: AmplitudeComposition
    mapping_h: int = 4
    power_target: float = 1.0
    sign_source: str = "iud"

    def __post_init__(self):
        if self.mapping_h not in MAPPINGS:
            raise UsageError(f"mapping_h must be one of {MAPPINGS}")
        if self.composition.blocklength % self.mapping_h:
            raise ParameterError(f"blocklength must be a multiple of H={self.mapping_h}")
        if not self.power_target > 0:
            raise ParameterError("power_target must be positive")
        if self.sign_source != "iud":
            raise ParameterError("only i.u.d. signs are supported")

    @property
    def corr_length(self):
        return self.composition.blocklength // self.mapping_h

    @property
    def amplitude_scale(self):
        """Factor mapping integer amplitudes to the target power."""
        E2 = float(amplitude_moments(self.composition).amp_moments[2])
        return float(np.sqrt(self.power_target / (2.0 * E2)))


@dataclass
class SymbolStream:
    """Dual-polarization symbols with their shaping metadata."""

    x_pol: np.ndarray
    y_pol: np.ndarray
    block_len_symbols: int | None = None
    mapping_h: int | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x_pol = np.asarray(self.x_pol, dtype=complex)
        self.y_pol = np.asarray(self.y_pol, dtype=complex)
        if self.x_pol.shape != self.y_pol.shape or self.x_pol.ndim != 1:
            raise DataError("x_pol and y_pol must be 1-D arrays of equal length")

    def __len__(self):
        return self.x_pol.size

    def as_array(self):
        return np.stack([self.x_pol, self.y_pol], axis=1)

    def slice(self, n):
        return SymbolStream(self.x_pol[:n], self.y_pol[:n], self.block_len_symbols, self.mapping_h, dict(self.metadata))

    def to_csv(self, path):
        rows = np.column_stack([
            np.arange(len(self)), self.x_pol.real, self.x_pol.imag, self.y_pol.real, self.y_pol.imag,
        ])
        header = "slot,x_re,x_im,y_re,y_im"
        np.savetxt(path, rows, delimiter=",", header=header, comments="", fmt=["%d"] + ["%.17g"] * 4)

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.shape[1] != 5:
            raise DataError("expected columns slot,x_re,x_im,y_re,y_im")
        return cls(data[:, 1] + 1j * data[:, 2], data[:, 3] + 1j * data[:, 4])


def _layout(blocks, H):
    """Arrange (n_blocks, N) amplitudes into (n_slots, 4) real dimensions
    ordered (x_I, x_Q, y_I, y_Q)."""
    nb, N = blocks.shape
    if H == 4:
        return blocks.reshape(nb * (N // 4), 4)
    if H == 2:
        # consecutive block pairs: first fills x (I, Q), second fills y
        pairs = blocks.reshape(nb // 2, 2, N // 2, 2)
        return pairs.transpose(0, 2, 1, 3).reshape(nb // 2 * (N // 2), 4)
    # H == 1: blocks cycle (x_I, x_Q, y_I, y_Q) over the same N slots
    quads = blocks.reshape(nb // 4, 4, N)
    return quads.transpose(0, 2, 1).reshape(nb // 4 * N, 4)


def map_to_qam(blocks, H, sign_rng, power_target=None, composition=None):
    """Map amplitude blocks to dual-polarization QAM symbols.

    ``blocks`` is an (n_blocks, N) array; ``n_blocks`` must fill whole groups
    (a multiple of 4/H). Signs are i.u.d. per real dimension. With
    ``power_target`` and ``composition`` the amplitudes are scaled so the
    per-polarization mean energy is ``power_target``; the scale comes from the
    composition, so it is exact for every group of blocks.
    """
    blocks = np.asarray(blocks, dtype=float)
    if blocks.ndim != 2:
        raise DataError("blocks must be a 2-D array (n_blocks, N)")
    if H not in MAPPINGS:
        raise UsageError(f"H must be one of {MAPPINGS}")
    nb, N = blocks.shape
    if N % H:
        raise ParameterError(f"blocklength must be a multiple of H={H}")
    group = 4 // H
    if nb % group:
        raise DataError(f"H={H} needs the number of blocks to be a multiple of {group}")
    dims = _layout(blocks, H)
    signs = sign_rng.integers(0, 2, size=dims.shape) * 2 - 1
    dims = dims * signs
    if power_target is not None:
        if composition is None:
            raise UsageError("power normalization needs the composition")
        E2 = float(amplitude_moments(composition).amp_moments[2])
        dims = dims * np.sqrt(power_target / (2.0 * E2))
    x = dims[:, 0] + 1j * dims[:, 1]
    y = dims[:, 2] + 1j * dims[:, 3]
    return SymbolStream(x, y, block_len_symbols=N // H, mapping_h=H)


def generate_stream(scheme, num_slots, rng):
    """Shaped stream with at least ``num_slots`` slots, truncated to length.

    Slot 0 is aligned with a block boundary.
    """
    comp = scheme.composition
    N = comp.blocklength
    # a group of 4/H blocks covers Ms = N/H slots
    Ms = N // scheme.mapping_h
    group = 4 // scheme.mapping_h
    n_groups = -(-int(num_slots) // Ms)
    blocks = generate_blocks(comp, n_groups * group, rng)
    stream = map_to_qam(blocks, scheme.mapping_h, rng, scheme.power_target, comp)
    out = stream.slice(int(num_slots))
    out.metadata.update({"N": N, "H": scheme.mapping_h, "power": scheme.power_target})
    return out


def gaussian_stream(num_slots, power, rng):
    """Circular Gaussian reference symbols (the GN-model limit)."""
    s = np.sqrt(power / 2.0)
    x = (rng.standard_normal(num_slots) + 1j * rng.standard_normal(num_slots)) * s
    y = (rng.standard_normal(num_slots) + 1j * rng.standard_normal(num_slots)) * s
    return SymbolStream(x, y, metadata={"source": "gaussian", "power": power})


def iid_stream(pmf, alphabet, num_slots, power, rng):
    """i.i.d. PAS symbols: amplitudes drawn independently from ``pmf``."""
    pmf = np.asarray(pmf, dtype=float)
    alphabet = np.asarray(alphabet, dtype=float)
    amps = rng.choice(alphabet, size=(num_slots, 4), p=pmf)
    signs = rng.integers(0, 2, size=amps.shape) * 2 - 1
    dims = amps * signs * np.sqrt(power / (2.0 * float(pmf @ alphabet**2)))
    return SymbolStream(dims[:, 0] + 1j * dims[:, 1], dims[:, 2] + 1j * dims[:, 3],
                        metadata={"source": "iid", "power": power})
