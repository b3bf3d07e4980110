"""Channel coefficients to keys.

CDF quantization maps each coefficient through a (empirical or analytic)
CDF into one of 2^m equal-probability cells, Gray-encodes the cell index,
and the per-path bit allocation is chosen so the predicted post-
reconciliation key error rate stays below a target. Reconciliation is
syndrome-based over a regular (3,6) parity-check code with hard-decision
bit flipping; Alice's key is the reference and only her syndromes plus a
32-bit verification digest leak.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .analysis import gaussian_pair_bdr
from .numerics import RandomSource

__all__ = [
    "QuantizationPlan",
    "KeyMaterial",
    "LdpcCode",
    "gray_encode",
    "gray_decode",
    "cdf_quantize",
    "empirical_bdr",
    "plan_quantization",
    "build_ldpc",
    "encode",
    "syndrome",
    "decode_syndrome",
    "reconcile",
    "kgr_accounting",
    "ReconciliationCapability",
    "measure_reconciliation_capability",
    "default_capability",
    "export_ldpc",
    "load_ldpc",
]

DIGEST_BITS = 32


# ---------------------------------------------------------------- gray code

def gray_encode(index: int, m: int) -> np.ndarray:
    """m-bit reflected Gray code of a cell index, MSB first."""
    index = int(index)
    if m < 1:
        raise ValueError("m must be >= 1")
    if not (0 <= index < (1 << m)):
        raise ValueError(f"index {index} out of range for {m} bits")
    g = index ^ (index >> 1)
    return np.array([(g >> (m - 1 - i)) & 1 for i in range(m)], dtype=np.uint8)


def gray_decode(bits: Sequence[int]) -> int:
    """Inverse of gray_encode: running-XOR fold over the code bits."""
    i = 0
    acc = 0
    for b in bits:
        acc ^= int(b)
        i = (i << 1) | acc
    return i


def _gray_table(m: int) -> np.ndarray:
    idx = np.arange(1 << m, dtype=np.int64)
    return idx ^ (idx >> 1)


# ------------------------------------------------------------- quantization

def cdf_quantize(values, m: int, cdf: str | Callable = "empirical") -> np.ndarray:
    """Quantize real coefficients into Gray-coded bits via CDF cells.

    ``cdf`` is either ``"empirical"`` (rank-based over the batch, which makes
    the output balanced to within one count per cell) or a callable mapping
    values to probabilities. A value whose CDF lands exactly on a cell
    boundary belongs to the lower cell; this floor tie-break is fixed so that
    bit output is reproducible across implementations.

    Returns a flat uint8 array of len(values) * m bits, MSB first per value.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("values must be a nonempty 1-D sequence")
    cells = 1 << m
    if callable(cdf):
        u = np.asarray(cdf(arr), dtype=float)
        if u.shape != arr.shape:
            raise ValueError("cdf callable must return one probability per value")
    elif cdf == "empirical":
        if np.all(arr == arr[0]):
            raise ValueError("empirical CDF is degenerate on all-equal values")
        order = np.argsort(arr, kind="stable")
        ranks = np.empty(arr.size, dtype=np.int64)
        ranks[order] = np.arange(arr.size)
        u = (ranks + 1) / arr.size
    else:
        raise ValueError(f"cdf must be 'empirical' or a callable, got {cdf!r}")

    idx = np.clip(np.ceil(u * cells) - 1, 0, cells - 1).astype(np.int64)
    codes = _gray_table(m)[idx]
    shifts = np.arange(m - 1, -1, -1)
    return ((codes[:, None] >> shifts[None, :]) & 1).astype(np.uint8).ravel()


def empirical_bdr(a, b) -> float:
    """Hamming distance over length of two equal-length bit strings."""
    a = np.asarray(a, dtype=np.uint8)
    b = np.asarray(b, dtype=np.uint8)
    if a.shape != b.shape or a.size == 0:
        raise ValueError("bit strings must be nonempty and of equal length")
    return float(np.mean(a != b))


# ---------------------------------------------------------------------- ldpc

@dataclass(frozen=True, eq=False)
class LdpcCode:
    """Regular (3,6) parity-check code with syndrome bit-flipping decoding."""

    H: np.ndarray
    n: int
    k: int
    max_iterations: int = 40

    def __post_init__(self):
        H = np.asarray(self.H, dtype=np.uint8)
        object.__setattr__(self, "H", H)
        m, n = H.shape
        if n != self.n or m != self.n - self.k:
            # rank-deficient codes carry extra redundant rows
            if n != self.n:
                raise ValueError("H width does not match n")
        row_w = H.sum(axis=1)
        col_w = H.sum(axis=0)
        if len(set(row_w.tolist())) != 1:
            raise ValueError("check row weights are not all equal")
        if len(set(col_w.tolist())) != 1:
            raise ValueError("variable column weights are not all equal")

    @property
    def n_checks(self) -> int:
        return int(self.H.shape[0])

    @property
    def syndrome_bits(self) -> int:
        return self.n - self.k


def _gf2_rref(H: np.ndarray):
    """Row-reduce over GF(2); returns (R, pivot_cols)."""
    R = H.copy().astype(np.uint8)
    m, n = R.shape
    pivots = []
    row = 0
    for col in range(n):
        if row >= m:
            break
        hit = np.nonzero(R[row:, col])[0]
        if hit.size == 0:
            continue
        pr = row + hit[0]
        if pr != row:
            R[[row, pr]] = R[[pr, row]]
        elim = np.nonzero(R[:, col])[0]
        elim = elim[elim != row]
        R[elim] ^= R[row]
        pivots.append(col)
        row += 1
    return R, pivots


def _count_four_cycles(H: np.ndarray) -> int:
    overlap = H.astype(np.int64) @ H.T.astype(np.int64)
    np.fill_diagonal(overlap, 0)
    c = overlap[np.triu_indices_from(overlap, k=1)]
    return int(np.sum(c * (c - 1) // 2))


def _matched_stubs(n: int, m: int, dv: int, dc: int, rng: RandomSource) -> np.ndarray:
    """Random stub matching repaired until every check has distinct variables."""
    slots = np.repeat(np.arange(n), dv)[rng.permutation(n * dv)]
    for _ in range(64 * n):
        rows = slots.reshape(m, dc)
        dup = -1
        dup_pos = 0
        for r in range(m):
            seen = set()
            for j in range(dc):
                c = int(rows[r, j])
                if c in seen:
                    dup, dup_pos = r, j
                    break
                seen.add(c)
            if dup >= 0:
                break
        if dup < 0:
            return slots
        other = int(rng.integers(0, slots.size))
        i = dup * dc + dup_pos
        slots[i], slots[other] = slots[other], slots[i]
    raise ValueError("stub repair did not converge")


def _break_four_cycles(H: np.ndarray, rng: RandomSource, rounds: int) -> bool:
    """Edge swaps until no two checks share two variables; True on success.

    Swapping edge (r2, c) with edge (r3, c2) preserves all row and column
    weights, so the graph stays (3,6)-regular throughout. The check-overlap
    matrix is maintained incrementally, which keeps this near-linear.
    """
    m, n = H.shape
    Hf = H.astype(np.float32)
    overlap = np.rint(Hf @ Hf.T).astype(np.int32)
    np.fill_diagonal(overlap, 0)

    def refresh(row):
        Hf[row] = H[row]
        line = np.rint(Hf @ Hf[row]).astype(np.int32)
        line[row] = 0
        overlap[row, :] = line
        overlap[:, row] = line

    for _ in range(rounds):
        bad = np.argwhere(overlap >= 2)
        if bad.size == 0:
            return True
        r1, r2 = (int(bad[0, 0]), int(bad[0, 1]))
        shared = np.nonzero(H[r1] & H[r2])[0]
        c = int(shared[0])
        for _ in range(64):
            r3 = int(rng.integers(0, m))
            if r3 in (r1, r2) or H[r3, c]:
                continue
            cols3 = np.nonzero(H[r3])[0]
            pick = cols3[~H[r2, cols3].astype(bool)]
            if pick.size == 0:
                continue
            c2 = int(pick[int(rng.integers(0, pick.size))])
            H[r2, c] = 0
            H[r2, c2] = 1
            H[r3, c2] = 0
            H[r3, c] = 1
            refresh(r2)
            refresh(r3)
            break
    return _count_four_cycles(H) == 0


def build_ldpc(n: int, rate: float = 0.5, rng: RandomSource | None = None,
               max_iterations: int = 30, attempts: int = 8) -> LdpcCode:
    """Sample a regular (3,6) code of length n deterministically from rng.

    Variable stubs are matched to check slots at random, repaired until no
    check sees a variable twice, and 4-cycles are swapped away so the girth
    is at least 6 (a single flipped bit is then always the unique majority
    candidate of the decoder). The first full-rank candidate wins.
    """
    if rng is None:
        raise ValueError("build_ldpc needs a RandomSource")
    if rate != 0.5:
        raise ValueError("only rate 1/2 (3,6) codes are supported")
    if n < 64 or n % 2:
        raise ValueError("n must be even and >= 64")
    dv, dc = 3, 6
    m = n // 2

    fallback = None
    for _ in range(attempts):
        rows = _matched_stubs(n, m, dv, dc, rng).reshape(m, dc)
        H = np.zeros((m, n), dtype=np.uint8)
        for r in range(m):
            H[r, rows[r]] = 1
        girth_ok = _break_four_cycles(H, rng, rounds=40 * n)
        _, pivots = _gf2_rref(H)
        if len(pivots) != m:
            continue  # keep syndromes non-redundant
        if girth_ok:
            return LdpcCode(H, n, n - m, max_iterations)
        if fallback is None:
            fallback = H
    if fallback is not None:
        return LdpcCode(fallback, n, n - m, max_iterations)
    raise ValueError(f"could not construct a valid (3,6) code of length {n}")


def syndrome(code: LdpcCode, bits: np.ndarray) -> np.ndarray:
    """H @ bits mod 2; accepts (..., n) batches."""
    b = np.asarray(bits, dtype=np.float32)
    # float matmul is exact here (row sums <= 6) and hits BLAS
    return (np.rint(b @ code.H.T.astype(np.float32)).astype(np.int64) % 2).astype(np.uint8)


def encode(code: LdpcCode, message: np.ndarray) -> np.ndarray:
    """Systematic-style encoder: message fills the free columns of H's RREF."""
    u = np.asarray(message, dtype=np.uint8)
    if u.shape[-1] != code.k:
        raise ValueError(f"message length must be k={code.k}")
    R, pivots = _gf2_rref(code.H)
    free = [j for j in range(code.n) if j not in set(pivots)]
    c = np.zeros(u.shape[:-1] + (code.n,), dtype=np.uint8)
    c[..., free] = u
    rhs = (u.astype(np.int64) @ R[: len(pivots)][:, free].T.astype(np.int64)) % 2
    c[..., pivots] = rhs.astype(np.uint8)
    return c


_edge_cache: dict = {}


def _edge_structure(code: LdpcCode):
    """Edge index maps between check-major and variable-major ordering."""
    key = id(code)
    hit = _edge_cache.get(key)
    if hit is not None:
        return hit
    chk_of, var_of = np.nonzero(code.H)  # check-major enumeration
    order_v = np.lexsort((chk_of, var_of))
    inv = np.empty(var_of.size, dtype=np.int64)
    inv[order_v] = np.arange(var_of.size)
    dv = int(code.H.sum(axis=0)[0])
    dc = int(code.H.sum(axis=1)[0])
    entry = (order_v, inv, dv, dc)
    if len(_edge_cache) > 16:
        _edge_cache.clear()
    _edge_cache[key] = entry
    return entry


def decode_syndrome(code: LdpcCode, received: np.ndarray, target: np.ndarray,
                    max_iterations: int | None = None):
    """Hard-decision bit flipping toward a target syndrome (Gallager B).

    Works on batches: received is (B, n), target (B, m). Messages are single
    bits exchanged along the Tanner-graph edges: a check tells each variable
    the value that would satisfy it given the others, and a variable flips
    its message when all other incoming verdicts outvote its prior. The
    error estimate is the incoming majority. Returns (corrected, converged,
    iterations used).
    """
    iters_cap = code.max_iterations if max_iterations is None else int(max_iterations)
    r = np.atleast_2d(np.asarray(received, dtype=np.uint8))
    t = np.atleast_2d(np.asarray(target, dtype=np.uint8))
    to_var, to_chk, dv, dc = _edge_structure(code)
    m, n = code.H.shape
    B = r.shape[0]
    want = t ^ syndrome(code, r)  # syndrome the error estimate must hit
    maj = (dv // 2) + 1
    e = np.zeros_like(r)
    converged = ~want.any(axis=1)
    live = np.nonzero(~converged)[0]
    mv2c = np.zeros((live.size, m * dc), dtype=np.uint8)  # check-major messages
    want_l = want[live]
    e_l = np.zeros((live.size, n), dtype=np.uint8)
    iters = 0
    for iters in range(1, iters_cap + 1):
        if live.size == 0:
            iters -= 1
            break
        g = mv2c.reshape(-1, m, dc)
        ext = np.bitwise_xor.reduce(g, axis=2) ^ want_l     # check verdicts
        mc2v = (ext[:, :, None] ^ g).reshape(-1, m * dc)
        mc2v_v = mc2v[:, to_var].reshape(-1, n, dv)         # variable-major
        votes = mc2v_v.sum(axis=2, dtype=np.int16)
        e_l = (votes >= maj).astype(np.uint8)
        still = (want_l ^ syndrome(code, e_l)).any(axis=1)
        if not still.all():
            done = ~still
            e[live[done]] = e_l[done]
            converged[live[done]] = True
            live = live[still]
            if live.size == 0:
                break
            mc2v_v = mc2v_v[still]
            votes = votes[still]
            want_l = want_l[still]
            e_l = e_l[still]
        mv2c = ((votes[:, :, None] - mc2v_v) >= dv - 1).astype(np.uint8)
        mv2c = mv2c.reshape(-1, n * dv)[:, to_chk]
    if live.size:
        e[live] = e_l  # best effort for rows that never converged
    converged = ~(want ^ syndrome(code, e)).any(axis=1)
    corrected = r ^ e
    if np.asarray(received).ndim == 1:
        return corrected[0], bool(converged[0]), iters
    return corrected, converged, iters


# --------------------------------------------------------------- key material

@dataclass(frozen=True, eq=False)
class KeyMaterial:
    """Raw bit strings, the reconciled key when agreement held, and leakage."""

    bits_alice: np.ndarray
    bits_bob: np.ndarray
    reconciled_key: np.ndarray | None
    leaked_bits: int
    agreed: bool

    def __post_init__(self):
        if self.bits_alice.shape != self.bits_bob.shape:
            raise ValueError("raw bit strings must have equal length")
        if self.agreed != (self.reconciled_key is not None):
            raise ValueError("reconciled key must be present exactly when agreed")

    @property
    def raw_bits(self) -> int:
        return int(self.bits_alice.size)


def _digest(bits: np.ndarray) -> int:
    return zlib.crc32(np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes())


def reconcile(bits_a, bits_b, code: LdpcCode) -> KeyMaterial:
    """Syndrome reconciliation of Bob's bits toward Alice's.

    Alice discloses one syndrome per n-bit block plus a 32-bit digest of her
    key; Bob bit-flips toward her syndromes. Failure (any block not
    converging, or a digest mismatch) is an in-band outcome: no key is
    emitted and the round's bits are discarded.
    """
    a = np.asarray(bits_a, dtype=np.uint8)
    b = np.asarray(bits_b, dtype=np.uint8)
    if a.shape != b.shape or a.ndim != 1 or a.size == 0:
        raise ValueError("bit strings must be nonempty, 1-D, equal length")
    if a.size % code.n:
        raise ValueError(f"length {a.size} is not a multiple of block size {code.n}")
    blocks = a.size // code.n
    syn_a = syndrome(code, a.reshape(blocks, code.n))
    corrected, converged, _ = decode_syndrome(
        code, b.reshape(blocks, code.n), syn_a
    )
    corrected = corrected.reshape(-1)
    leaked = blocks * code.syndrome_bits + DIGEST_BITS
    agreed = bool(converged.all()) and _digest(corrected) == _digest(a)
    return KeyMaterial(a, b, corrected if agreed else None, leaked, agreed)


def kgr_accounting(plans, outcomes: Sequence[KeyMaterial], channel_uses: int) -> float:
    """Net agreed secret bits per channel use.

    Each agreed outcome contributes raw bits minus leaked bits; failed
    reconciliations contribute nothing. ``plans`` is accepted for audit
    symmetry with the caller's bookkeeping and may be None.
    """
    if channel_uses <= 0:
        raise ValueError("channel_uses must be positive")
    if plans is not None and len(plans) != len(outcomes):
        raise ValueError("one plan per outcome expected")
    net = sum(o.raw_bits - o.leaked_bits for o in outcomes if o.agreed)
    return float(net) / float(channel_uses)


# ------------------------------------------------------------------ planning

@dataclass(frozen=True)
class QuantizationPlan:
    """Bits per real dimension for every path, and what the plan aimed for."""

    per_path_bits: tuple[int, ...]
    target_ker: float
    dimensions_per_path: int = 2

    def __post_init__(self):
        if any(m < 0 for m in self.per_path_bits):
            raise ValueError("per-path bit counts must be >= 0")
        if self.dimensions_per_path not in (1, 2):
            raise ValueError("dimensions_per_path must be 1 or 2")

    @property
    def total_bits(self) -> int:
        return sum(self.per_path_bits) * self.dimensions_per_path


@dataclass(frozen=True)
class ReconciliationCapability:
    """Measured block-failure probability of a code versus input disagreement."""

    bdr_grid: tuple[float, ...]
    failure_rates: tuple[float, ...]

    def failure_probability(self, bdr: float) -> float:
        """Conservative lookup: the rate at the next grid point >= bdr."""
        if bdr <= 0:
            return float(self.failure_rates[0])
        for g, r in zip(self.bdr_grid, self.failure_rates):
            if bdr <= g:
                return float(r)
        return 1.0


_DEFAULT_BDR_GRID = (0.002, 0.004, 0.008, 0.012, 0.016, 0.02, 0.03, 0.05, 0.12)


def measure_reconciliation_capability(
    code: LdpcCode,
    bdr_grid: Sequence[float] = _DEFAULT_BDR_GRID,
    trials: int = 4000,
    rng: RandomSource | None = None,
) -> ReconciliationCapability:
    """Monte Carlo the failure curve of a code over a disagreement grid.

    Failure means the decoder did not converge or converged to the wrong
    word. Rates are Laplace-smoothed so a clean grid point still predicts a
    nonzero failure probability.
    """
    if rng is None:
        raise ValueError("measurement needs a RandomSource")
    rates = []
    n_trials = int(trials)
    for p in sorted(bdr_grid):
        if rates and rates[-1] > 0.02:
            # deep in the failure region, coarse rates suffice
            n_trials = min(n_trials, 800)
        errs = (rng.uniform(n_trials * code.n).reshape(n_trials, code.n) < p)
        errs = errs.astype(np.uint8)
        corrected, converged, _ = decode_syndrome(
            code, errs, np.zeros((n_trials, code.n_checks), dtype=np.uint8)
        )
        good = converged & ~corrected.any(axis=1)
        rates.append((n_trials - int(good.sum()) + 1) / (n_trials + 1))
    rates = np.maximum.accumulate(rates)  # failure cannot improve with worse input
    return ReconciliationCapability(tuple(float(p) for p in sorted(bdr_grid)),
                                    tuple(float(r) for r in rates))


_capability_cache: dict = {}
_default_code: LdpcCode | None = None


def default_code() -> LdpcCode:
    """The package's stock 128-bit rate-1/2 code (fixed internal seed)."""
    global _default_code
    if _default_code is None:
        _default_code = build_ldpc(128, rng=RandomSource(7).substream("ldpc-default"))
    return _default_code


def capability_for(code: LdpcCode, trials: int = 4000) -> ReconciliationCapability:
    key = (code.n, code.k, code.max_iterations, hash(code.H.tobytes()), trials)
    if key not in _capability_cache:
        _capability_cache[key] = measure_reconciliation_capability(
            code, trials=trials, rng=RandomSource(7).substream("capability")
        )
    return _capability_cache[key]


def default_capability() -> ReconciliationCapability:
    return capability_for(default_code())


def plan_quantization(
    snrs: Sequence[float],
    target_ker: float,
    max_bits: int,
    capability: ReconciliationCapability | None = None,
    dimensions_per_path: int = 2,
) -> QuantizationPlan:
    """Allocate per-path quantization depth against a key-error budget.

    For each path the predictor chains the Gaussian pair disagreement at the
    path's estimate correlation snr/(1+snr) into the measured reconciliation
    failure curve, and keeps the largest m whose predicted failure stays at
    or below target_ker. Paths where even one bit fails get zero.
    """
    if not (0.0 < target_ker < 0.5):
        raise ValueError("target_ker must lie in (0, 0.5)")
    if max_bits < 1:
        raise ValueError("max_bits must be >= 1")
    cap = capability if capability is not None else default_capability()
    bits = []
    for snr in snrs:
        if not np.isfinite(snr):
            bits.append(max_bits if snr > 0 else 0)
            continue
        rho = 0.0 if snr <= 0 else snr / (1.0 + snr)
        chosen = 0
        for m in range(max_bits, 0, -1):
            if cap.failure_probability(gaussian_pair_bdr(rho, m)) <= target_ker:
                chosen = m
                break
        bits.append(chosen)
    return QuantizationPlan(tuple(bits), float(target_ker), dimensions_per_path)


# ------------------------------------------------------------------ fixtures

def export_ldpc(code: LdpcCode, path) -> None:
    """Text fixture: header line, then one check per line as column indices."""
    with open(path, "w") as fh:
        fh.write(f"# n={code.n} k={code.k} max_iterations={code.max_iterations}\n")
        for row in code.H:
            cols = np.nonzero(row)[0]
            fh.write(" ".join(str(int(c)) for c in cols) + "\n")


def load_ldpc(path) -> LdpcCode:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("#"):
            raise ValueError("missing fixture header")
        fields = dict(tok.split("=") for tok in header[1:].split())
        n = int(fields["n"])
        max_iterations = int(fields.get("max_iterations", 40))
        rows = []
        for line in fh:
            line = line.strip()
            if line:
                rows.append([int(c) for c in line.split()])
    H = np.zeros((len(rows), n), dtype=np.uint8)
    for r, cols in enumerate(rows):
        H[r, cols] = 1
    _, pivots = _gf2_rref(H)
    return LdpcCode(H, n, n - len(pivots), max_iterations)
