"""Monte Carlo simulation of the block-Markov scheme with a cribbing helper.

Transmission uses B sub-blocks of n channel uses. Each sub-block carries a
superposition codebook: cloud centers indexed by the previous sub-message
and, per center, satellite codewords indexed by the fresh sub-message.
The helper cannot decode backward (that would violate causality), so it
decodes each sub-message at the end of its sub-block from the channel
inputs it overheard; at the start of the next sub-block both the helper
and the encoder point at a cloud center — the helper at the center of its
own estimate, the encoder at the center of the true previous message the
encoder itself sent. The receiver decodes backward from the last
sub-block, using each recovered sub-message as the satellite index one
sub-block earlier. The first and last sub-blocks use a fixed index 0 in
place of the nonexistent previous/next message, so B-1 sub-messages move
in B sub-blocks and the effective rate is R(B-1)/B.

Typicality is tested in the robust sense: the empirical frequency of
every joint symbol cell must lie within +/- delta of its model
probability, and cells of model probability zero must not occur at all.
The slack delta is a free parameter of the scheme (default 0.05); the
accepted set grows monotonically with it.

Codebooks are never materialized unless asked for: every codeword is an
independent seeded stream, so the encoder, helper, and decoder all see
consistent values while only the panels a trial actually touches are
generated. Error probabilities are averaged over fresh codebooks each
trial (the random-coding ensemble) unless ``fixed_codebook`` is set.

Two statistically equivalent trial engines are provided:

* ``codebook`` — the literal search over codeword candidates. Feasible
  while M^2 * n * B fits the cell budget.
* ``counts`` — for message sets far too large to scan (M = floor(2^{nR})
  grows past millions quickly): the true transmission path is simulated
  codeword-for-codeword, and the number of *false* typicality hits in
  each decoding scan is drawn from its exact Binomial law, with the hit
  probability computed exactly per trial from the realized sequences
  (a per-class multinomial box probability). Candidates whose codewords
  were actually realized (the true path and the helper's, possibly
  wrong, center) are always tested explicitly. The only approximation is
  that the helper scan and the receiver scan of one sub-block treat
  their false candidates as independent, although they share a single
  codeword out of M; this is negligible for the large M this mode is
  meant for.

Simulating the scheme at rates near capacity is out of reach by design —
the codebook search is exponential in nR — so the simulator demonstrates
mechanism correctness and error-probability trends at reduced rates.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channel import AuxiliarySystem, ChannelSpec, build_joint
from .probability import marginalize

DEFAULT_CELL_BUDGET = 50_000_000
_Z95 = 1.959963984540054
_AMBIGUOUS_SAMPLE_CAP = 1024


class SimulationLimitError(RuntimeError):
    """A requested simulation exceeds a configured resource limit."""


@dataclass(frozen=True)
class SchemeParams:
    """Block length, sub-block count, nominal rate, and run controls."""

    n: int
    B: int
    R: float
    delta: float = 0.05
    seed: int = 0
    trials: int = 1000

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.B < 2:
            raise ValueError("B must be >= 2")
        if self.R < 0:
            raise ValueError("R must be >= 0")
        if self.delta <= 0:
            raise ValueError("delta must be > 0")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")

    @property
    def M(self) -> int:
        """Message-set size floor(2^{nR}), at least 1."""
        exponent = self.n * self.R
        if exponent >= 62:
            raise SimulationLimitError(
                f"message set size 2^{exponent:.1f} exceeds 2^62; reduce n or R"
            )
        return max(1, int(math.floor(2.0**exponent + 1e-9)))

    @property
    def effective_rate(self) -> float:
        """Overall bits per channel use actually attempted: R(B-1)/B."""
        return self.R * (self.B - 1) / self.B

    @property
    def realized_rate(self) -> float:
        """log2(M)/n, the per-sub-block rate after flooring the message set."""
        return math.log2(self.M) / self.n


def wilson_halfwidth(errors: int, trials: int, z: float = _Z95) -> float:
    """Halfwidth of the 95% Wilson score interval for a binomial rate."""
    p = errors / trials
    denom = 1.0 + z * z / trials
    return z * math.sqrt(p * (1.0 - p) / trials + z * z / (4.0 * trials * trials)) / denom


def typicality_boxes(model: np.ndarray, n: int, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Allowed count range per cell: |count/n - p| <= delta, zero cells stay zero.

    Returns integer arrays (lo, hi); hi is 0 wherever the model
    probability is 0. Both bounds are monotone in delta.
    """
    p = np.asarray(model, dtype=float)
    lo = np.ceil(n * (p - delta) - 1e-9).astype(np.int64)
    np.clip(lo, 0, None, out=lo)
    hi = np.floor(n * (p + delta) + 1e-9).astype(np.int64)
    hi[p <= 0.0] = 0
    lo[p <= 0.0] = 0
    return lo, hi


def _counts_in_boxes(counts: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Row-wise box membership for a (rows, cells) count matrix."""
    return ((counts >= lo) & (counts <= hi)).all(axis=-1)


def _inv_cdf(cdf_rows: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling; cdf_rows broadcast against r's trailing axes."""
    idx = (cdf_rows <= r[..., None]).sum(axis=-1)
    return np.minimum(idx, cdf_rows.shape[-1] - 1)


class Codebook:
    """Superposition codebooks for all B sub-blocks of one trial.

    Every cloud center and every satellite is its own seeded random
    stream (derived from the codebook seed and its indices), so any
    access order yields bit-identical codewords and only the panels that
    are touched get generated. ``materialize`` renders the dense arrays
    for small message sets.
    """

    def __init__(self, params: SchemeParams, aux: AuxiliarySystem, entropy=None):
        self.params = params
        self.aux = aux
        self.M = params.M
        self.n = params.n
        self.B = params.B
        if entropy is None:
            entropy = (params.seed, 0, 0)
        self._entropy = tuple(int(e) for e in entropy)
        self._base = np.random.PCG64(np.random.SeedSequence(self._entropy))
        self._cdf_v = np.cumsum(aux.p_v.probs)
        self._cdf_u_given_v = np.cumsum(aux.p_u_given_v.rows, axis=1)
        self._center_cache: dict[int, np.ndarray] = {}
        self._family_cache: dict[tuple[int, int], np.ndarray] = {}
        self._column_cache: dict[tuple[int, int], np.ndarray] = {}

    def _stream(self, k: int) -> np.random.Generator:
        return np.random.Generator(self._base.jumped(k))

    def _center_stream(self, b: int, j: int) -> int:
        return b * self.M + j

    def _satellite_stream(self, b: int, m: int, j: int) -> int:
        return self.B * self.M + ((b * self.M + j) * self.M + m)

    def center(self, b: int, j: int) -> np.ndarray:
        """Cloud center j of sub-block b, an (n,) symbol sequence over V."""
        cached = self._center_cache.get(b)
        if cached is not None:
            return cached[j]
        r = self._stream(self._center_stream(b, j)).random(self.n)
        return _inv_cdf(self._cdf_v, r)

    def centers(self, b: int) -> np.ndarray:
        """All M cloud centers of sub-block b, shape (M, n)."""
        cached = self._center_cache.get(b)
        if cached is None:
            r = np.empty((self.M, self.n))
            for j in range(self.M):
                r[j] = self._stream(self._center_stream(b, j)).random(self.n)
            cached = _inv_cdf(self._cdf_v, r)
            self._center_cache[b] = cached
        return cached

    def satellite(self, b: int, m: int, j: int) -> np.ndarray:
        """Satellite m of center j in sub-block b, an (n,) sequence over U."""
        fam = self._family_cache.get((b, j))
        if fam is not None:
            return fam[m]
        col = self._column_cache.get((b, m))
        if col is not None:
            return col[j]
        r = self._stream(self._satellite_stream(b, m, j)).random(self.n)
        return _inv_cdf(self._cdf_u_given_v[self.center(b, j)], r)

    def family(self, b: int, j: int) -> np.ndarray:
        """All satellites of center j in sub-block b, shape (M, n)."""
        fam = self._family_cache.get((b, j))
        if fam is None:
            r = np.empty((self.M, self.n))
            for m in range(self.M):
                r[m] = self._stream(self._satellite_stream(b, m, j)).random(self.n)
            fam = _inv_cdf(self._cdf_u_given_v[self.center(b, j)][None, :, :], r)
            self._family_cache[(b, j)] = fam
        return fam

    def column(self, b: int, m: int) -> np.ndarray:
        """Satellite m of every center in sub-block b, shape (M, n)."""
        col = self._column_cache.get((b, m))
        if col is None:
            r = np.empty((self.M, self.n))
            for j in range(self.M):
                r[j] = self._stream(self._satellite_stream(b, m, j)).random(self.n)
            col = _inv_cdf(self._cdf_u_given_v[self.centers(b)], r)
            self._column_cache[(b, m)] = col
        return col

    def materialize(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense (centers, satellites) arrays of shapes (B,M,n) and (B,M,M,n)."""
        centers = np.stack([self.centers(b) for b in range(self.B)])
        sats = np.stack(
            [np.stack([self.family(b, j) for j in range(self.M)], axis=1) for b in range(self.B)]
        )
        return centers, sats


def generate_codebooks(
    params: SchemeParams,
    aux: AuxiliarySystem,
    trial: int = 0,
    cell_budget: int = DEFAULT_CELL_BUDGET,
) -> Codebook:
    """Codebooks for one trial; identical inputs give identical codebooks.

    Refuses message sets whose nominal codebook size M^2 * n * B exceeds
    ``cell_budget`` cells; such runs must use the ``counts`` engine of
    :func:`estimate_error` instead.
    """
    cells = params.M * params.M * params.n * params.B
    if cells > cell_budget:
        raise SimulationLimitError(
            f"codebook needs M^2*n*B = {cells} cells, over the budget of {cell_budget}; "
            "use estimate_error(mode='counts') for message sets this large"
        )
    return Codebook(params, aux, entropy=(params.seed, trial, 0))


# ---------------------------------------------------------------------------
# Precomputed per-(channel, aux, params) context shared by all trials.
# ---------------------------------------------------------------------------


class _BoxTest:
    """Typicality boxes over (symbol, class) cells plus the class layout."""

    def __init__(self, model_cells: np.ndarray, laws: np.ndarray, n: int, delta: float):
        # model_cells, laws: (n_classes, n_symbols)
        self.model = model_cells
        self.laws = laws
        self.lo, self.hi = typicality_boxes(model_cells, n, delta)
        self.n_classes, self.n_symbols = model_cells.shape
        # Classes that never occur must tolerate zero counts in every cell.
        self.class_feasible_when_absent = (self.lo == 0).all(axis=1)


class _SchemeContext:
    def __init__(self, params: SchemeParams, ch: ChannelSpec, aux: AuxiliarySystem):
        self.params = params
        self.ch = ch
        self.aux = aux
        self.U, self.V = aux.u_size, aux.v_size
        self.X, self.S, self.Y, self.T = ch.x_size, ch.s_size, ch.y_size, ch.t_size

        self.p_s_cdf = np.cumsum(ch.P_S.probs)
        self.w_cdf = np.cumsum(ch.w_xsy(), axis=2)  # (X, S, Y)

        self.helper_det = aux.helper_is_deterministic
        self.encoder_det = aux.encoder_is_deterministic
        self.helper_map = aux.helper if self.helper_det else None
        self.encoder_map = aux.encoder if self.encoder_det else None
        self.kt_cdf = None if self.helper_det else np.cumsum(aux.helper_kernel(ch.t_size), axis=2)
        self.kx_cdf = None if self.encoder_det else np.cumsum(aux.encoder_kernel(ch.x_size), axis=3)

        joint = build_joint(ch, aux)  # vars (S, U, V, T, X, Y)
        n, delta = params.n, params.delta

        # Helper-side test: tuple (U, X, V, T); class = (x, v, t), symbol = u.
        m_uxvt = marginalize(joint, ("U", "X", "V", "T")).values  # axes (U,V,T,X)
        m_uxvt = np.transpose(m_uxvt, (0, 3, 1, 2))  # (U, X, V, T)
        cells = m_uxvt.reshape(self.U, self.X * self.V * self.T).T  # (class, u)
        v_of_class = (np.arange(self.X * self.V * self.T) // self.T) % self.V
        laws = aux.p_u_given_v.rows[v_of_class]  # (class, u)
        self.helper_test = _BoxTest(cells, laws, n, delta)

        # Receiver-side test: tuple (U, V, Y); class = y, symbol = (u, v).
        m_uvy = marginalize(joint, ("U", "V", "Y")).values  # (U, V, Y)
        cells = m_uvy.reshape(self.U * self.V, self.Y).T  # (y, uv)
        p_uv_flat = aux.p_uv().reshape(-1)
        laws = np.tile(p_uv_flat, (self.Y, 1))
        self.receiver_test = _BoxTest(cells, laws, n, delta)

        # Receiver-side test against a candidate whose center is already
        # realized: class = (v, y), symbol = u.
        cells_vy = np.transpose(m_uvy, (1, 2, 0)).reshape(self.V * self.Y, self.U)
        v_of_vy = np.arange(self.V * self.Y) // self.Y
        laws_vy = aux.p_u_given_v.rows[v_of_vy]
        self.receiver_fixed_v_test = _BoxTest(cells_vy, laws_vy, n, delta)

        self.p_v_cdf = np.cumsum(aux.p_v.probs)
        self.p_u_given_v_cdf = np.cumsum(aux.p_u_given_v.rows, axis=1)

    # -- symbol emission ----------------------------------------------------

    def helper_symbols(self, s: np.ndarray, v: np.ndarray, rand: np.ndarray) -> np.ndarray:
        if self.helper_det:
            return self.helper_map[s, v]
        return _inv_cdf(self.kt_cdf[v, s], rand)

    def encoder_symbols(self, u: np.ndarray, v: np.ndarray, t: np.ndarray, rand: np.ndarray) -> np.ndarray:
        if self.encoder_det:
            return self.encoder_map[u, v, t]
        return _inv_cdf(self.kx_cdf[u, v, t], rand)

    def channel_symbols(self, x: np.ndarray, s: np.ndarray, rand: np.ndarray) -> np.ndarray:
        return _inv_cdf(self.w_cdf[x, s], rand)

    # -- class layouts ------------------------------------------------------

    def helper_classes(self, x: np.ndarray, v: np.ndarray, t: np.ndarray) -> np.ndarray:
        return (x * self.V + v) * self.T + t

    def receiver_classes(self, y: np.ndarray) -> np.ndarray:
        return y

    def fixed_v_classes(self, v: np.ndarray, y: np.ndarray) -> np.ndarray:
        return v * self.Y + y


def _scan_hits(symbol_rows: np.ndarray, class_idx: np.ndarray, test: _BoxTest) -> np.ndarray:
    """Boolean hit vector for candidate symbol rows against fixed classes.

    Cells are numbered class-major to line up with the (class, symbol)
    box arrays.
    """
    m, n = symbol_rows.shape
    cells = class_idx[None, :] * test.n_symbols + symbol_rows
    offsets = (np.arange(m) * (test.n_symbols * test.n_classes))[:, None]
    counts = np.bincount(
        (cells + offsets).ravel(), minlength=m * test.n_symbols * test.n_classes
    ).reshape(m, test.n_symbols * test.n_classes)
    return _counts_in_boxes(counts, test.lo.reshape(-1)[None, :], test.hi.reshape(-1)[None, :])


def _member(symbols: np.ndarray, class_idx: np.ndarray, test: _BoxTest) -> bool:
    """Membership of one realized sequence pair in the typical set."""
    return bool(_scan_hits(symbols[None, :], class_idx, test)[0])


def _pair_rows(u_rows: np.ndarray, v_rows: np.ndarray, v_size: int) -> np.ndarray:
    return u_rows * v_size + v_rows


def _hit_probability(class_idx: np.ndarray, test: _BoxTest) -> float:
    """Exact probability that a fresh candidate is typical given the classes.

    The candidate's symbols are drawn independently per position with the
    class-conditional law; counts are independent multinomials across
    classes, so the typical-set probability is a product of per-class
    multinomial box probabilities.
    """
    n = class_idx.shape[0]
    class_counts = np.bincount(class_idx, minlength=test.n_classes)
    absent = class_counts == 0
    if not test.class_feasible_when_absent[absent].all():
        return 0.0
    prob = 1.0
    for c in np.nonzero(~absent)[0]:
        prob *= _multinomial_box_prob(
            int(class_counts[c]), test.laws[c], test.lo[c], test.hi[c]
        )
        if prob == 0.0:
            return 0.0
    return prob


def _multinomial_box_prob(n_g: int, probs: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> float:
    """P(every count of Multinomial(n_g, probs) lies in its [lo, hi] box).

    Exponential-generating-function convolution over symbols: weight
    p^c / c! per allowed count c, final coefficient times n_g!. Done in
    log space at the end to stay in float range (n_g up to a few hundred).
    """
    if n_g > 300:
        raise SimulationLimitError("multinomial box DP supports group sizes up to 300")
    f = np.zeros(n_g + 1)
    f[0] = 1.0
    for p, l, h in zip(probs, lo, hi):
        h = min(int(h), n_g)
        l = int(l)
        if l > h:
            return 0.0
        weights = np.zeros(h - l + 1)
        for c in range(l, h + 1):
            if p == 0.0:
                weights[c - l] = 1.0 if c == 0 else 0.0
            else:
                weights[c - l] = math.exp(c * math.log(p) - math.lgamma(c + 1))
        g = np.zeros(n_g + 1)
        for c in range(l, h + 1):
            w = weights[c - l]
            if w:
                g[c:] += f[: n_g + 1 - c] * w
        f = g
        if not f.any():
            return 0.0
    coeff = f[n_g]
    if coeff <= 0.0:
        return 0.0
    return min(1.0, math.exp(math.log(coeff) + math.lgamma(n_g + 1)))


# ---------------------------------------------------------------------------
# Decoding rules shared by both engines.
# ---------------------------------------------------------------------------


def _resolve_hits(hit_indices: list[int], truth_hint: int | None = None):
    """Apply the unique-index rule and pick a continuation index.

    Unique hit: that index is the decode. No hit: declared error,
    continue with index 0. Multiple hits: declared error, continue with
    the smallest hitting index. The continuation only matters for error
    propagation; declared errors are counted either way.
    """
    if len(hit_indices) == 1:
        return hit_indices[0], "unique"
    if not hit_indices:
        return 0, "none"
    return min(hit_indices), "ambiguous"


def helper_step(aux: AuxiliarySystem, codebook: Codebook, b: int, i: int, s_i: int, decoded_prev: int, rand: float | None = None) -> int:
    """One causal helper emission: t_i from the current state symbol only.

    The helper knows its decoded previous message (index 0 before the
    first sub-block) and reads component i of that cloud center; nothing
    about future states or inputs enters.
    """
    v_i = int(codebook.center(b, decoded_prev)[i])
    if aux.helper_is_deterministic:
        return int(aux.helper[s_i, v_i])
    cdf = np.cumsum(aux.helper[v_i, s_i])
    return int(_inv_cdf(cdf, np.asarray(rand)))


def encoder_step(aux: AuxiliarySystem, codebook: Codebook, b: int, i: int, m_b: int, m_prev: int, t_i: int, rand: float | None = None) -> int:
    """One causal encoder emission: x_i from its codewords and t_i."""
    u_i = int(codebook.satellite(b, m_b, m_prev)[i])
    v_i = int(codebook.center(b, m_prev)[i])
    if aux.encoder_is_deterministic:
        return int(aux.encoder[u_i, v_i, t_i])
    cdf = np.cumsum(aux.encoder[u_i, v_i, t_i])
    return int(_inv_cdf(cdf, np.asarray(rand)))


def helper_end_decode(
    params: SchemeParams,
    ch: ChannelSpec,
    aux: AuxiliarySystem,
    codebook: Codebook,
    b: int,
    cribbed_x: np.ndarray,
    t: np.ndarray,
    v: np.ndarray,
    prev_index: int,
):
    """The helper's end-of-sub-block decode of the fresh sub-message.

    Scans the satellites of the center it used (``prev_index``) for the
    unique index whose codeword is jointly typical with the cribbed
    inputs given (v, t). Returns ``(decoded, status, continuation)``
    where status is one of ``unique`` / ``none`` / ``ambiguous``; the
    latter two are declared errors.
    """
    ctx = _SchemeContext(params, ch, aux)
    return _helper_decode(ctx, codebook, b, cribbed_x, t, v, prev_index)


def _helper_decode(ctx, codebook, b, x, t, v, prev_index):
    classes = ctx.helper_classes(np.asarray(x), np.asarray(v), np.asarray(t))
    fam = codebook.family(b, prev_index)
    hits = np.nonzero(_scan_hits(fam, classes, ctx.helper_test))[0]
    decoded, status = _resolve_hits(list(hits))
    return decoded, status, list(hits)


def backward_decode(
    params: SchemeParams,
    ch: ChannelSpec,
    aux: AuxiliarySystem,
    codebook: Codebook,
    y_blocks: np.ndarray,
):
    """Receiver decoding of all sub-messages, last sub-block first.

    The final sub-block carries the known index 0, which pins its
    satellite; each recovered center index is the previous sub-block's
    message and serves as that sub-block's satellite index in turn. The
    first sub-block's output is never used. Returns ``(estimates,
    statuses)`` for messages 1..B-1 in transmission order.
    """
    ctx = _SchemeContext(params, ch, aux)
    return _backward_decode(ctx, codebook, np.asarray(y_blocks))


def _backward_decode(ctx, codebook, y_blocks):
    B = ctx.params.B
    estimates = [0] * (B - 1)
    statuses = ["unique"] * (B - 1)
    sat_idx = 0  # the known index carried by the last sub-block
    for k in range(B - 1, 0, -1):
        cols = codebook.column(k, sat_idx)
        cents = codebook.centers(k)
        pair_rows = _pair_rows(cols, cents, ctx.V)
        classes = ctx.receiver_classes(y_blocks[k])
        hits = np.nonzero(_scan_hits(pair_rows, classes, ctx.receiver_test))[0]
        decoded, status = _resolve_hits(list(hits))
        estimates[k - 1] = decoded
        statuses[k - 1] = status
        sat_idx = decoded
    return tuple(estimates), tuple(statuses)


@dataclass(frozen=True)
class TrialOutcome:
    messages: tuple[int, ...]
    helper_decoded: tuple[int, ...]
    helper_status: tuple[str, ...]
    receiver_decoded: tuple[int, ...]
    receiver_status: tuple[str, ...]
    success: bool


def run_trial(
    params: SchemeParams,
    ch: ChannelSpec,
    aux: AuxiliarySystem,
    codebook: Codebook,
    rng: np.random.Generator,
    oracle_helper: bool = False,
    force_helper_decode: dict[int, int] | None = None,
) -> TrialOutcome:
    """One full transmission: B sub-blocks driven symbol-by-symbol.

    Per channel use the helper emits t_i from the current state and its
    center, then the encoder emits x_i, then the channel emits y_i. At
    the end of each of the first B-1 sub-blocks the helper decodes the
    fresh sub-message from the inputs it cribbed; its estimate selects
    its center for the next sub-block (mis-decodes are not corrected and
    propagate). After all sub-blocks the receiver decodes backward.

    ``oracle_helper`` forces the helper's center to the true previous
    message (its decodes are still recorded). ``force_helper_decode``
    maps sub-block index to an injected decode, for fault injection.
    """
    ctx = _SchemeContext(params, ch, aux)
    return _run_trial_codebook(ctx, codebook, rng, oracle_helper, force_helper_decode)


def _draw_trial_randomness(ctx, rng):
    """All protocol randomness, drawn in a fixed order so that runs with
    matched seeds stay coupled when the helper mode changes."""
    p = ctx.params
    messages = rng.integers(0, p.M, size=p.B - 1)
    state_u = rng.random((p.B, p.n))
    chan_u = rng.random((p.B, p.n))
    helper_u = rng.random((p.B, p.n))
    enc_u = rng.random((p.B, p.n))
    states = _inv_cdf(ctx.p_s_cdf, state_u)
    return messages, states, chan_u, helper_u, enc_u


def _run_trial_codebook(ctx, codebook, rng, oracle_helper, force_helper_decode):
    p = ctx.params
    B, M = p.B, p.M
    force = force_helper_decode or {}
    messages, states, chan_u, helper_u, enc_u = _draw_trial_randomness(ctx, rng)

    helper_decoded = [0] * (B - 1)
    helper_status = ["unique"] * (B - 1)
    y_blocks = np.empty((B, p.n), dtype=np.int64)
    helper_belief = 0  # helper's index for the current sub-block's center

    for b in range(B):
        m_prev = int(messages[b - 1]) if b >= 1 else 0
        m_b = int(messages[b]) if b <= B - 2 else 0
        if b >= 1:
            helper_belief = m_prev if oracle_helper else helper_decoded[b - 1]
        center_enc = codebook.center(b, m_prev)
        center_help = codebook.center(b, helper_belief)
        sat_enc = codebook.satellite(b, m_b, m_prev)
        t = ctx.helper_symbols(states[b], center_help, helper_u[b])
        x = ctx.encoder_symbols(sat_enc, center_enc, t, enc_u[b])
        y_blocks[b] = ctx.channel_symbols(x, states[b], chan_u[b])
        if b <= B - 2:
            decoded, status, _ = _helper_decode(
                ctx, codebook, b, x, t, center_help, helper_belief
            )
            if b in force:
                decoded = force[b] % M
                status = "forced"
            helper_decoded[b] = decoded
            helper_status[b] = status

    receiver_decoded, receiver_status = _backward_decode(ctx, codebook, y_blocks)
    success = all(int(messages[k]) == receiver_decoded[k] for k in range(B - 1))
    return TrialOutcome(
        messages=tuple(int(m) for m in messages),
        helper_decoded=tuple(helper_decoded),
        helper_status=tuple(helper_status),
        receiver_decoded=tuple(receiver_decoded),
        receiver_status=tuple(receiver_status),
        success=success,
    )


# ---------------------------------------------------------------------------
# The counts engine: identical protocol, scan outcomes drawn from their
# exact distributions instead of enumerating codewords.
# ---------------------------------------------------------------------------


def _sample_anonymous_min(rng, n_hits: int, m: int, excluded: set[int]) -> int:
    """Smallest of ``n_hits`` uniform distinct indices outside ``excluded``.

    Sampling is capped: beyond the cap the minimum of the sampled subset
    is statistically indistinguishable from the true minimum at the
    message-set sizes this engine targets.
    """
    take = min(n_hits, _AMBIGUOUS_SAMPLE_CAP)
    found: set[int] = set()
    while len(found) < take:
        cand = int(rng.integers(0, m))
        if cand not in excluded and cand not in found:
            found.add(cand)
    return min(found)


def _draw_sequence(rng, cdf_rows, n):
    r = rng.random(n)
    if cdf_rows.ndim == 1:
        return _inv_cdf(cdf_rows, r)
    return _inv_cdf(cdf_rows, r)


def _run_trial_counts(ctx, rng, rng_code, rng_counts, oracle_helper, force_helper_decode):
    p = ctx.params
    B, M, n = p.B, p.M, p.n
    force = force_helper_decode or {}
    messages, states, chan_u, helper_u, enc_u = _draw_trial_randomness(ctx, rng)

    helper_decoded = [0] * (B - 1)
    helper_status = ["unique"] * (B - 1)
    # Realized codewords per sub-block, for the receiver pass.
    realized = []
    y_blocks = np.empty((B, n), dtype=np.int64)
    helper_belief = 0

    for b in range(B):
        m_prev = int(messages[b - 1]) if b >= 1 else 0
        m_b = int(messages[b]) if b <= B - 2 else 0
        if b >= 1:
            helper_belief = m_prev if oracle_helper else helper_decoded[b - 1]
        center_enc = _draw_sequence(rng_code, ctx.p_v_cdf, n)
        sat_enc = _inv_cdf(ctx.p_u_given_v_cdf[center_enc], rng_code.random(n))
        if helper_belief == m_prev:
            center_help = center_enc
        else:
            center_help = _draw_sequence(rng_code, ctx.p_v_cdf, n)
        t = ctx.helper_symbols(states[b], center_help, helper_u[b])
        x = ctx.encoder_symbols(sat_enc, center_enc, t, enc_u[b])
        y_blocks[b] = ctx.channel_symbols(x, states[b], chan_u[b])
        realized.append(
            {
                "m_prev": m_prev,
                "m_b": m_b,
                "center_enc": center_enc,
                "center_help": center_help,
                "sat_enc": sat_enc,
                "helper_belief": helper_belief,
            }
        )
        if b <= B - 2:
            classes = ctx.helper_classes(x, center_help, t)
            q = _hit_probability(classes, ctx.helper_test)
            known_hits = []
            if helper_belief == m_prev:
                if _member(sat_enc, classes, ctx.helper_test):
                    known_hits.append(m_b)
                n_false = int(rng_counts.binomial(M - 1, q)) if M > 1 else 0
                excluded = {m_b}
            else:
                n_false = int(rng_counts.binomial(M, q))
                excluded = set()
            decoded, status = _resolve_counts(
                rng_counts, known_hits, n_false, M, excluded
            )
            if b in force:
                decoded = force[b] % M
                status = "forced"
            helper_decoded[b] = decoded
            helper_status[b] = status

    receiver_decoded = [0] * (B - 1)
    receiver_status = ["unique"] * (B - 1)
    sat_idx = 0
    for k in range(B - 1, 0, -1):
        blk = realized[k]
        c_true = blk["m_prev"]
        classes_y = ctx.receiver_classes(y_blocks[k])
        q_generic = _hit_probability(classes_y, ctx.receiver_test)
        known_hits = []
        specials = {c_true: blk["center_enc"]}
        if blk["helper_belief"] != c_true:
            specials[blk["helper_belief"]] = blk["center_help"]
        for j0, v0 in specials.items():
            if j0 == c_true and sat_idx == blk["m_b"]:
                # The candidate is the transmitted pair itself.
                if _member_pair(ctx, blk["sat_enc"], v0, y_blocks[k]):
                    known_hits.append(j0)
            else:
                classes_vy = ctx.fixed_v_classes(v0, y_blocks[k])
                q_j = _hit_probability(classes_vy, ctx.receiver_fixed_v_test)
                if rng_counts.random() < q_j:
                    known_hits.append(j0)
        n_other = M - len(specials)
        n_false = int(rng_counts.binomial(n_other, q_generic)) if n_other > 0 else 0
        decoded, status = _resolve_counts(
            rng_counts, known_hits, n_false, M, set(specials.keys())
        )
        receiver_decoded[k - 1] = decoded
        receiver_status[k - 1] = status
        sat_idx = decoded

    success = all(int(messages[k]) == receiver_decoded[k] for k in range(B - 1))
    return TrialOutcome(
        messages=tuple(int(m) for m in messages),
        helper_decoded=tuple(helper_decoded),
        helper_status=tuple(helper_status),
        receiver_decoded=tuple(receiver_decoded),
        receiver_status=tuple(receiver_status),
        success=success,
    )


def _member_pair(ctx, u_seq, v_seq, y_seq) -> bool:
    pair = _pair_rows(np.asarray(u_seq), np.asarray(v_seq), ctx.V)
    return _member(pair, ctx.receiver_classes(np.asarray(y_seq)), ctx.receiver_test)


def _resolve_counts(rng, known_hits: list[int], n_false: int, m: int, excluded: set[int]):
    total = len(known_hits) + n_false
    if total == 0:
        return 0, "none"
    if total == 1:
        if known_hits:
            return known_hits[0], "unique"
        # A single anonymous hit: uniform over the unexcluded indices.
        while True:
            cand = int(rng.integers(0, m))
            if cand not in excluded:
                return cand, "unique"
    candidates = list(known_hits)
    if n_false:
        candidates.append(_sample_anonymous_min(rng, n_false, m, excluded))
    return min(candidates), "ambiguous"


@dataclass(frozen=True)
class SimReport:
    """Monte Carlo error estimates for one parameter point."""

    overall_error_rate: float
    helper_error_rate: tuple[float, ...]
    decoder_error_rate: tuple[float, ...]
    trials: int
    wilson_halfwidth: float
    mode: str
    M: int
    nominal_rate: float
    realized_rate: float
    effective_rate: float
    delta: float
    seed: int
    oracle_helper: bool
    fixed_codebook: bool


def _trial_entropies(params: SchemeParams, trial: int, fixed_codebook: bool):
    code_trial = 0 if fixed_codebook else trial
    return (params.seed, code_trial, 0), (params.seed, trial, 1), (params.seed, trial, 2)


def _one_trial(params, ch, aux, trial, mode, oracle_helper, fixed_codebook, ctx=None):
    ctx = ctx or _SchemeContext(params, ch, aux)
    code_entropy, rng_entropy, counts_entropy = _trial_entropies(params, trial, fixed_codebook)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(rng_entropy)))
    if mode == "codebook":
        codebook = Codebook(params, aux, entropy=code_entropy)
        return _run_trial_codebook(ctx, codebook, rng, oracle_helper, None)
    rng_code = np.random.Generator(np.random.PCG64(np.random.SeedSequence(code_entropy)))
    rng_counts = np.random.Generator(np.random.PCG64(np.random.SeedSequence(counts_entropy)))
    return _run_trial_counts(ctx, rng, rng_code, rng_counts, oracle_helper, None)


def _run_trial_block(args):
    params, ch, aux, lo, hi, mode, oracle_helper, fixed_codebook = args
    ctx = _SchemeContext(params, ch, aux)
    B = params.B
    overall = 0
    helper_err = np.zeros(B - 1, dtype=np.int64)
    receiver_err = np.zeros(B - 1, dtype=np.int64)
    for trial in range(lo, hi):
        out = _one_trial(params, ch, aux, trial, mode, oracle_helper, fixed_codebook, ctx)
        overall += not out.success
        for k in range(B - 1):
            helper_err[k] += out.helper_decoded[k] != out.messages[k]
            receiver_err[k] += out.receiver_decoded[k] != out.messages[k]
    return overall, helper_err, receiver_err


def estimate_error(
    params: SchemeParams,
    ch: ChannelSpec,
    aux: AuxiliarySystem,
    mode: str = "auto",
    oracle_helper: bool = False,
    fixed_codebook: bool = False,
    cell_budget: int = DEFAULT_CELL_BUDGET,
    workers: int = 1,
) -> SimReport:
    """Monte Carlo error probability over fresh codebooks each trial.

    ``mode`` is ``codebook`` (literal candidate scans; requires
    M^2 * n * B within ``cell_budget``), ``counts`` (exact-distribution
    sampling of scan outcomes, any M), or ``auto`` to pick by budget.
    Per-trial seeds derive from ``params.seed`` and the trial index, so
    results are identical for any ``workers`` count.
    """
    cells = params.M * params.M * params.n * params.B
    if mode == "auto":
        mode = "codebook" if cells <= cell_budget else "counts"
    elif mode == "codebook" and cells > cell_budget:
        raise SimulationLimitError(
            f"codebook mode needs M^2*n*B = {cells} cells, over the budget of {cell_budget}; "
            "raise cell_budget or use mode='counts'"
        )
    elif mode not in ("codebook", "counts"):
        raise ValueError(f"unknown mode {mode!r}")

    trials = params.trials
    if workers > 1:
        bounds = np.linspace(0, trials, workers + 1).astype(int)
        payloads = [
            (params, ch, aux, int(lo), int(hi), mode, oracle_helper, fixed_codebook)
            for lo, hi in zip(bounds[:-1], bounds[1:])
            if hi > lo
        ]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_trial_block, payloads))
    else:
        parts = [
            _run_trial_block(
                (params, ch, aux, 0, trials, mode, oracle_helper, fixed_codebook)
            )
        ]
    overall = sum(p[0] for p in parts)
    helper_err = np.sum([p[1] for p in parts], axis=0)
    receiver_err = np.sum([p[2] for p in parts], axis=0)
    return SimReport(
        overall_error_rate=overall / trials,
        helper_error_rate=tuple(helper_err / trials),
        decoder_error_rate=tuple(receiver_err / trials),
        trials=trials,
        wilson_halfwidth=wilson_halfwidth(overall, trials),
        mode=mode,
        M=params.M,
        nominal_rate=params.R,
        realized_rate=params.realized_rate,
        effective_rate=params.effective_rate,
        delta=params.delta,
        seed=params.seed,
        oracle_helper=oracle_helper,
        fixed_codebook=fixed_codebook,
    )
