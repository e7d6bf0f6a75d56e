"""MCMC decoding of binary linear codes, with alist I/O and a BP baseline.

The decoding posterior is the Boltzmann distribution of the energy
E(b) = sum_i b_i llr_i + weight * (# unsatisfied parity checks),
so hard parity constraints enter as a finite penalty that simulated
annealing can tighten.  LLR sign convention: positive favors bit 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .channel import rng_from_key, split_key
from .engine import ChainState, anneal_temperature, run_chains

__all__ = [
    "ParityCheck",
    "DecoderState",
    "DecodeConfig",
    "AlistFormatError",
    "parse_alist",
    "write_alist",
    "gen_regular_code",
    "derive_generator",
    "encode",
    "decode_energy",
    "mh_bitflip_step",
    "gibbs_bit_step",
    "mcmc_decode",
    "bp_decode",
]


class AlistFormatError(ValueError):
    """Malformed alist text; the message names the offending line."""


@dataclass
class ParityCheck:
    """Sparse binary parity-check matrix in adjacency form."""

    n: int
    m: int
    rows: list  # per-check sorted column indices (np.ndarray int64)
    cols: list  # per-column sorted check indices (np.ndarray int64)

    def dense(self) -> np.ndarray:
        h = np.zeros((self.m, self.n), dtype=np.uint8)
        for c, cols in enumerate(self.rows):
            h[c, cols] = 1
        return h

    def syndrome(self, bits: np.ndarray) -> np.ndarray:
        return np.array(
            [bits[r].sum() & 1 for r in self.rows], dtype=np.uint8
        )


def _validate_parity(n, m, rows, cols):
    for c, r in enumerate(rows):
        if len(set(r.tolist())) != r.shape[0]:
            raise ValueError(f"duplicate column index in check {c}")
    for c, r in enumerate(rows):
        for v in r:
            if not 0 <= v < n:
                raise ValueError(f"column index {v} out of range in check {c}")
    # cross-consistency
    from_rows = [[] for _ in range(n)]
    for c, r in enumerate(rows):
        for v in r:
            from_rows[v].append(c)
    for v in range(n):
        got = np.asarray(sorted(from_rows[v]), dtype=np.int64)
        if not np.array_equal(got, cols[v]):
            raise ValueError(
                f"row/column tables inconsistent at column {v + 1}: "
                f"checks {cols[v].tolist()} vs {got.tolist()}"
            )


# ---------------------------------------------------------------------------
# alist interchange format


def _alist_ints(lines, li, what):
    raw = lines[li][1]
    toks = raw.split()
    vals = []
    for t in toks:
        try:
            vals.append(int(t))
        except ValueError:
            raise AlistFormatError(
                f"line {lines[li][0]}: non-integer token {t!r} in {what}"
            ) from None
    return vals


def parse_alist(text: str) -> ParityCheck:
    """Parse alist text into a validated :class:`ParityCheck`.

    Layout: "n m" / "max_col_deg max_row_deg" / n column degrees /
    m row degrees / n per-column 1-based check lists (zero-padded) /
    m per-row 1-based column lists (zero-padded).
    """
    lines = [
        (i + 1, ln) for i, ln in enumerate(text.splitlines()) if ln.strip()
    ]
    need = 4
    if len(lines) < need:
        raise AlistFormatError(
            f"line {len(lines) + 1}: truncated file, expected at least 4 header lines"
        )
    header = _alist_ints(lines, 0, "size header")
    if len(header) != 2:
        raise AlistFormatError(
            f"line {lines[0][0]}: size header must be 'n m', got {len(header)} values"
        )
    n, m = header
    if n < 1 or m < 1:
        raise AlistFormatError(f"line {lines[0][0]}: n and m must be positive")
    degs = _alist_ints(lines, 1, "max-degree header")
    if len(degs) != 2:
        raise AlistFormatError(
            f"line {lines[1][0]}: max-degree header must be two values"
        )
    max_col, max_row = degs
    col_deg = _alist_ints(lines, 2, "column degree list")
    if len(col_deg) != n:
        raise AlistFormatError(
            f"line {lines[2][0]}: expected {n} column degrees, got {len(col_deg)}"
        )
    row_deg = _alist_ints(lines, 3, "row degree list")
    if len(row_deg) != m:
        raise AlistFormatError(
            f"line {lines[3][0]}: expected {m} row degrees, got {len(row_deg)}"
        )
    for v, d in enumerate(col_deg):
        if not 0 <= d <= max_col:
            raise AlistFormatError(
                f"line {lines[2][0]}: column {v + 1} degree {d} outside [0, {max_col}]"
            )
    for c, d in enumerate(row_deg):
        if not 0 <= d <= max_row:
            raise AlistFormatError(
                f"line {lines[3][0]}: row {c + 1} degree {d} outside [0, {max_row}]"
            )
    if sum(col_deg) != sum(row_deg):
        raise AlistFormatError(
            f"line {lines[3][0]}: column degrees sum to {sum(col_deg)} but row "
            f"degrees sum to {sum(row_deg)}"
        )
    if len(lines) != 4 + n + m:
        raise AlistFormatError(
            f"line {lines[-1][0]}: expected {4 + n + m} lines total, got {len(lines)}"
        )

    def read_block(offset, count, deg, limit, kind):
        out = []
        for k in range(count):
            li = offset + k
            vals = _alist_ints(lines, li, f"{kind} list")
            nz = [v for v in vals if v != 0]
            if any(v < 0 for v in vals):
                raise AlistFormatError(
                    f"line {lines[li][0]}: negative index in {kind} list"
                )
            if len(nz) != deg[k]:
                raise AlistFormatError(
                    f"line {lines[li][0]}: {kind} {k + 1} lists {len(nz)} entries "
                    f"but degree is {deg[k]}"
                )
            for v in nz:
                if v > limit:
                    raise AlistFormatError(
                        f"line {lines[li][0]}: index {v} out of range 1..{limit}"
                    )
            if len(set(nz)) != len(nz):
                raise AlistFormatError(
                    f"line {lines[li][0]}: duplicate index in {kind} {k + 1}"
                )
            out.append(np.asarray(sorted(v - 1 for v in nz), dtype=np.int64))
        return out

    cols = read_block(4, n, col_deg, m, "column")
    rows = read_block(4 + n, m, row_deg, n, "row")
    try:
        _validate_parity(n, m, rows, cols)
    except ValueError as exc:
        raise AlistFormatError(f"line {lines[4][0]}: {exc}") from None
    return ParityCheck(n=n, m=m, rows=rows, cols=cols)


def write_alist(pc: ParityCheck) -> str:
    """Serialize a parity-check matrix in zero-padded alist form."""
    col_deg = [c.shape[0] for c in pc.cols]
    row_deg = [r.shape[0] for r in pc.rows]
    max_col, max_row = max(col_deg), max(row_deg)

    def fmt(indices, width):
        vals = [str(v + 1) for v in indices] + ["0"] * (width - len(indices))
        return " ".join(vals)

    out = [
        f"{pc.n} {pc.m}",
        f"{max_col} {max_row}",
        " ".join(map(str, col_deg)),
        " ".join(map(str, row_deg)),
    ]
    out += [fmt(c, max_col) for c in pc.cols]
    out += [fmt(r, max_row) for r in pc.rows]
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# code construction and encoding


def gen_regular_code(
    n: int, dv: int = 3, dc: int = 6, seed=0, require_full_rank: bool = True
) -> ParityCheck:
    """Seeded (dv, dc)-regular code via random socket matching with repair."""
    if (n * dv) % dc != 0:
        raise ValueError(f"n*dv={n * dv} not divisible by dc={dc}")
    m = n * dv // dc
    for attempt in range(1000):
        rng = rng_from_key(split_key(seed, attempt))
        perm = rng.permutation(n * dv)
        var_of_socket = np.repeat(np.arange(n), dv)
        check_of_socket = np.repeat(np.arange(m), dc)
        edges = list(zip(var_of_socket[perm], check_of_socket))
        if not _repair_duplicates(edges, rng):
            continue
        rows = [[] for _ in range(m)]
        cols = [[] for _ in range(n)]
        for v, c in edges:
            rows[c].append(int(v))
            cols[v].append(int(c))
        pc = ParityCheck(
            n=n,
            m=m,
            rows=[np.asarray(sorted(r), dtype=np.int64) for r in rows],
            cols=[np.asarray(sorted(c), dtype=np.int64) for c in cols],
        )
        if require_full_rank and _gf2_rank(pc.dense()) < m:
            continue
        return pc
    raise RuntimeError(f"could not build a simple full-rank ({dv},{dc}) code, n={n}")


def _repair_duplicates(edges: list, rng: np.random.Generator, max_swaps: int = 10000) -> bool:
    """Swap check endpoints until no (var, check) pair repeats."""
    for _ in range(max_swaps):
        seen: dict[tuple, int] = {}
        dup = -1
        for i, e in enumerate(edges):
            e = (int(e[0]), int(e[1]))
            edges[i] = e
            if e in seen:
                dup = i
                break
            seen[e] = i
        if dup < 0:
            return True
        other = int(rng.integers(0, len(edges)))
        v1, c1 = edges[dup]
        v2, c2 = edges[other]
        edges[dup] = (v1, c2)
        edges[other] = (v2, c1)
    return False


def _gf2_rank(h: np.ndarray) -> int:
    h = h.copy()
    rank = 0
    for c in range(h.shape[1]):
        pivots = np.nonzero(h[rank:, c])[0]
        if pivots.size == 0:
            continue
        p = rank + pivots[0]
        h[[rank, p]] = h[[p, rank]]
        mask = h[:, c] == 1
        mask[rank] = False
        h[mask] ^= h[rank]
        rank += 1
        if rank == h.shape[0]:
            break
    return rank


def derive_generator(pc: ParityCheck) -> tuple[np.ndarray, np.ndarray]:
    """Systematic generator G = [I_k | P] plus the column permutation.

    ``perm[j]`` is the original column holding permuted position j; message
    bits occupy positions perm[:k].  G @ H_perm^T = 0 over GF(2).
    """
    h = pc.dense()
    m, n = h.shape
    rank = 0
    pivots = []
    for c in range(n):
        rows_with = np.nonzero(h[rank:, c])[0]
        if rows_with.size == 0:
            continue
        p = rank + rows_with[0]
        h[[rank, p]] = h[[p, rank]]
        mask = h[:, c] == 1
        mask[rank] = False
        h[mask] ^= h[rank]
        pivots.append(c)
        rank += 1
        if rank == m:
            break
    free = [c for c in range(n) if c not in set(pivots)]
    k = n - rank
    perm = np.asarray(free + pivots, dtype=np.int64)
    f_block = h[:rank][:, free]  # (rank, k): parity = F @ msg
    gen = np.hstack([np.eye(k, dtype=np.uint8), f_block.T.astype(np.uint8)])
    return gen, perm


def encode(msg: np.ndarray, generator: np.ndarray, permutation: np.ndarray) -> np.ndarray:
    """Systematic encode followed by the inverse column permutation."""
    msg = np.asarray(msg, dtype=np.uint8)
    k, n = generator.shape
    if msg.shape != (k,):
        raise ValueError(f"message must have length {k}, got {msg.shape}")
    cw_perm = (msg @ generator) & 1
    cw = np.empty(n, dtype=np.uint8)
    cw[permutation] = cw_perm
    return cw


# ---------------------------------------------------------------------------
# decoding posterior and kernels


@dataclass
class DecoderState:
    bits: np.ndarray  # (n,) uint8
    syndrome: np.ndarray  # (m,) uint8
    energy: float
    temperature: float = 1.0


def decode_energy(
    bits: np.ndarray, llr: np.ndarray, weight: float, pc: ParityCheck
) -> tuple[float, np.ndarray]:
    """Full energy recomputation: E = b.llr + weight * (#unsatisfied)."""
    if not weight > 0:
        raise ValueError("weight must be positive")
    syndrome = pc.syndrome(bits)
    energy = float(bits @ llr) + weight * float(syndrome.sum())
    return energy, syndrome


def _flip_delta(state: DecoderState, i: int, llr, weight, pc) -> float:
    checks = pc.cols[i]
    dsynd = float((1 - 2 * state.syndrome[checks].astype(np.int64)).sum())
    return float((1 - 2 * int(state.bits[i])) * llr[i]) + weight * dsynd


def _apply_flip(state: DecoderState, i: int, delta: float, pc) -> DecoderState:
    bits = state.bits.copy()
    syndrome = state.syndrome.copy()
    bits[i] ^= 1
    syndrome[pc.cols[i]] ^= 1
    return replace(state, bits=bits, syndrome=syndrome, energy=state.energy + delta)


def mh_bitflip_step(
    state: DecoderState,
    llr: np.ndarray,
    weight: float,
    pc: ParityCheck,
    rng: np.random.Generator,
    site: int | None = None,
) -> tuple[DecoderState, bool]:
    """Single-bit-flip Metropolis step (symmetric proposal, no correction)."""
    i = int(rng.integers(0, pc.n)) if site is None else site
    delta = _flip_delta(state, i, llr, weight, pc)
    if delta <= 0 or rng.random() < np.exp(-delta / state.temperature):
        return _apply_flip(state, i, delta, pc), True
    return state, False


def gibbs_bit_step(
    state: DecoderState,
    llr: np.ndarray,
    weight: float,
    pc: ParityCheck,
    i: int,
    rng: np.random.Generator,
) -> DecoderState:
    """Heat-bath update of bit i from its full conditional."""
    if not 0 <= i < pc.n:
        raise ValueError(f"bit index {i} out of range")
    # energy difference E(b_i=1) - E(b_i=0) with the rest fixed
    checks = pc.cols[i]
    synd0 = state.syndrome[checks] ^ state.bits[i]  # parity excluding bit i
    de = float(llr[i]) + weight * float((1 - 2 * synd0.astype(np.int64)).sum())
    p1 = 1.0 / (1.0 + np.exp(de / state.temperature))
    want = 1 if rng.random() < p1 else 0
    if want != state.bits[i]:
        delta = _flip_delta(state, i, llr, weight, pc)
        return _apply_flip(state, i, delta, pc)
    return state


@dataclass(frozen=True)
class DecodeConfig:
    kernel: str = "mh"  # "mh" | "gibbs"
    iters: int = 3000
    chains: int = 4
    t0: float = 2.0
    t_min: float = 0.4
    ratio: float = 0.995
    weight: float | None = None  # default 2 * mean(|llr|)
    estimator: str = "bit_count"  # "bit_count" | "min_energy"
    burn_in: int | None = None  # default: once the anneal reaches t_min
    scan: str = "uniform"  # proposal site choice: "uniform" | "sequential"
    seed: int | tuple = 0

    def resolve_burn_in(self) -> int:
        if self.burn_in is not None:
            return min(self.burn_in, self.iters - 1)
        if self.t0 <= self.t_min:
            return self.iters // 2
        it = int(np.ceil(np.log(self.t_min / self.t0) / np.log(self.ratio)))
        return min(max(it, 0), self.iters - 1)


def mcmc_decode(
    llr: np.ndarray, pc: ParityCheck, config: DecodeConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Annealed MCMC decoding; returns (bits, posterior bit-1 marginals).

    bit_count: majority vote over post-burn-in samples (collected once the
    temperature has annealed to t_min); min_energy: lowest-energy visited
    state.  Chains start from the sign decision of the channel LLRs.
    """
    llr = np.asarray(llr, dtype=np.float64)
    weight = config.weight if config.weight is not None else 2.0 * float(np.mean(np.abs(llr)))
    burn_in = config.resolve_burn_in()
    init_bits = (llr < 0).astype(np.uint8)

    def init(_chain_index, _rng):
        e, syn = decode_energy(init_bits, llr, weight, pc)
        st = DecoderState(bits=init_bits.copy(), syndrome=syn, energy=e,
                          temperature=config.t0)
        return ChainState(state=st, log_density=-e)

    def kernel(cs: ChainState, rng):
        st: DecoderState = cs.state
        t = anneal_temperature(config.t0, config.t_min, config.ratio, cs.iteration)
        st = replace(st, temperature=t)
        if config.kernel == "mh":
            if config.scan == "sequential":
                st, acc = mh_bitflip_step(st, llr, weight, pc, rng,
                                          site=cs.iteration % pc.n)
            else:
                st, acc = mh_bitflip_step(st, llr, weight, pc, rng)
            accepted, proposed = int(acc), 1
        elif config.kernel == "gibbs":
            for i in range(pc.n):
                st = gibbs_bit_step(st, llr, weight, pc, i, rng)
            accepted, proposed = 1, 1
        else:
            raise ValueError(f"unknown kernel {config.kernel!r}")
        return ChainState(state=st, log_density=-st.energy,
                          iteration=cs.iteration), accepted, proposed

    samples, diags = run_chains(
        config.chains, config.iters, burn_in, kernel, init, config.seed
    )
    if config.estimator == "min_energy":
        best = max(diags, key=lambda d: d.best_log_density).best_state
        bits = best.bits.copy()
    elif config.estimator == "bit_count":
        freq = np.mean([st.bits for st, _ in samples.samples], axis=0)
        bits = (freq > 0.5).astype(np.uint8)
    else:
        raise ValueError(f"unknown estimator {config.estimator!r}")
    marginals = np.mean([st.bits for st, _ in samples.samples], axis=0)
    return bits, marginals


# ---------------------------------------------------------------------------
# sum-product belief propagation baseline

_ATANH_CLIP = 1.0 - 1e-15
_MSG_CLIP = 30.0


def bp_decode(
    llr: np.ndarray, pc: ParityCheck, max_iters: int
) -> tuple[np.ndarray, np.ndarray]:
    """Flooding sum-product decoding; returns (bits, extrinsic llrs).

    Check updates use the tanh rule with leave-one-out products that treat
    exact-zero messages (erasures) exactly.  Stops early once the hard
    decisions satisfy every check.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    llr = np.asarray(llr, dtype=np.float64)
    # check-to-variable messages, stored per check in row order
    c2v = [np.zeros(r.shape[0]) for r in pc.rows]
    extrinsic = np.zeros(pc.n)
    for _ in range(max_iters):
        post = llr + extrinsic
        for c, cols in enumerate(pc.rows):
            v2c = post[cols] - c2v[c]
            t = np.tanh(np.clip(v2c, -_MSG_CLIP, _MSG_CLIP) / 2.0)
            zero = t == 0.0
            nz = int(zero.sum())
            if nz == 0:
                total = np.prod(t)
                loo = total / t
            elif nz == 1:
                loo = np.zeros_like(t)
                loo[zero] = np.prod(t[~zero])
            else:
                loo = np.zeros_like(t)
            c2v[c] = 2.0 * np.arctanh(np.clip(loo, -_ATANH_CLIP, _ATANH_CLIP))
        extrinsic = np.zeros(pc.n)
        for c, cols in enumerate(pc.rows):
            extrinsic[cols] += c2v[c]
        bits = ((llr + extrinsic) < 0).astype(np.uint8)
        if not pc.syndrome(bits).any():
            break
    return bits, extrinsic
