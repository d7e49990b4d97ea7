"""Numerical maximization of the achievable-rate bound over auxiliary systems.

The search space is: a deterministic helper map h: S x V -> T, a
deterministic encoder map f: U x V x T -> X, and a joint distribution
P(u, v) on the auxiliary pair. Map pairs are enumerated exhaustively when
the space is small and sampled without replacement otherwise; for each
pair the inner problem max min{I(UV;Y), I(U;X|VT)} over P(u,v) is attacked
by multi-restart hill climbing on the probability simplex (pairwise mass
transfers with a geometrically shrinking step).

Every candidate evaluated is achievable, so the best value found is a
valid lower bound on capacity; no optimality certificate is claimed.
The theoretical alphabet bounds from :func:`cardinality_bounds` run to
thousands of symbols and are far beyond desk search, which is why the
caller chooses working sizes for U and V and results are reported as
lower bounds only.

Deterministic maps suffice at the optimum, but the search also accepts
stochastic kernels: :func:`capacity_lower_bound` can run an optional
refinement pass over full kernels starting from the best deterministic
candidate and reports any gain it finds.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channel import (
    AuxiliarySystem,
    ChannelSpec,
    RatePair,
    aux_from_joint_uv,
    rate_pair,
)
from .probability import _entropy_bits


@dataclass(frozen=True)
class SearchBudget:
    """Knobs bounding the work done by one search invocation."""

    max_map_candidates: int = 128
    restarts: int = 4
    grid_resolution: int = 1
    local_steps: int = 50
    seed: int = 0

    def __post_init__(self):
        for name in ("max_map_candidates", "restarts", "grid_resolution", "local_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"SearchBudget.{name} must be positive")


@dataclass(frozen=True)
class CardinalityBounds:
    """Alphabet sizes beyond which enlarging U and V cannot help."""

    L: int
    v_max: int
    u_max: int


@dataclass(frozen=True)
class SearchResult:
    best_aux: AuxiliarySystem
    best_rate: float
    rate_pair: RatePair
    evaluations: int
    seed: int
    stochastic_gain: float | None = None


def cardinality_bounds(ch: ChannelSpec) -> CardinalityBounds:
    """Sufficient auxiliary alphabet sizes, in exact integer arithmetic."""
    L = ch.x_size * ch.t_size * ch.s_size + 1
    v_max = L * L * ch.s_size * (ch.t_size - 1) + L
    u_max = L * L * L * ch.t_size * (ch.x_size - 1) + L
    return CardinalityBounds(L=L, v_max=v_max, u_max=u_max)


def _enumerate_maps(shape: tuple[int, ...], base: int, budget: SearchBudget, tag: int):
    """Yield deterministic maps as int arrays of ``shape`` with entries < base.

    Exhaustive in lexicographic order when the space fits the budget,
    otherwise a seeded uniform sample without replacement of exactly
    ``budget.max_map_candidates`` distinct maps.
    """
    n_cells = int(np.prod(shape))
    space = base**n_cells
    if space <= budget.max_map_candidates:
        for flat in itertools.product(range(base), repeat=n_cells):
            yield np.asarray(flat, dtype=np.int64).reshape(shape)
        return
    rng = np.random.default_rng(np.random.SeedSequence((budget.seed, tag)))
    seen: set[bytes] = set()
    while len(seen) < budget.max_map_candidates:
        m = rng.integers(0, base, size=shape, dtype=np.int64)
        key = m.tobytes()
        if key in seen:
            continue
        seen.add(key)
        yield m


def enumerate_helper_maps(ch: ChannelSpec, v_size: int, budget: SearchBudget, ignore_v: bool = False):
    """Deterministic helper maps h: S x V -> T as (|S|, v_size) int arrays.

    With ``ignore_v`` the map is constant across V (a symbol-by-symbol
    helper), which restricts the space to |T|^|S| maps.
    """
    if v_size < 1:
        raise ValueError("v_size must be >= 1")
    if ignore_v:
        for col in _enumerate_maps((ch.s_size, 1), ch.t_size, budget, tag=101):
            yield np.repeat(col, v_size, axis=1)
        return
    yield from _enumerate_maps((ch.s_size, v_size), ch.t_size, budget, tag=1)


def enumerate_encoder_maps(ch: ChannelSpec, u_size: int, v_size: int, budget: SearchBudget):
    """Deterministic encoder maps f: U x V x T -> X as (u_size, v_size, |T|) int arrays."""
    if u_size < 1 or v_size < 1:
        raise ValueError("u_size and v_size must be >= 1")
    yield from _enumerate_maps((u_size, v_size, ch.t_size), ch.x_size, budget, tag=2)


class _RateEvaluator:
    """Fast (I(UV;Y), I(U;X|VT)) evaluation for a fixed map pair.

    The six-variable joint factors so that only two small tensors depend
    on the maps; for each trial P(u,v) the two informations are sums over
    at most a few hundred cells.
    """

    def __init__(self, ch: ChannelSpec, kt: np.ndarray, kx: np.ndarray):
        w = ch.w_xsy()
        ps = ch.P_S.probs
        # a[u,v,y] = P(y | u,v);  c[u,v,t,x] = P(t,x | u,v)
        self.a_uvy = np.einsum("s,vst,uvtx,xsy->uvy", ps, kt, kx, w, optimize=True)
        self.c_uvtx = np.einsum("s,vst,uvtx->uvtx", ps, kt, kx, optimize=True)

    def pair(self, p_uv: np.ndarray) -> tuple[float, float]:
        p_uv = p_uv.reshape(self.a_uvy.shape[:2])
        p_uvy = p_uv[:, :, None] * self.a_uvy
        h_uv = _entropy_bits(p_uv)
        i_dec = h_uv + _entropy_bits(p_uvy.sum(axis=(0, 1))) - _entropy_bits(p_uvy)
        p_uvtx = p_uv[:, :, None, None] * self.c_uvtx
        p_uvt = p_uvtx.sum(axis=3)
        p_vtx = p_uvtx.sum(axis=0)
        p_vt = p_uvt.sum(axis=0)
        i_help = (
            _entropy_bits(p_uvt)
            + _entropy_bits(p_vtx)
            - _entropy_bits(p_uvtx)
            - _entropy_bits(p_vt)
        )
        return max(0.0, i_dec), max(0.0, i_help)


def _score(pair: tuple[float, float]) -> tuple[float, float]:
    # Primary objective is the min; ties between candidates are broken in
    # favor of the larger decoder-side information.
    return min(pair), pair[0]


def _better(a: tuple[float, float], b: tuple[float, float], eps: float = 1e-13) -> bool:
    if a[0] > b[0] + eps:
        return True
    return abs(a[0] - b[0]) <= eps and a[1] > b[1] + eps


def _hill_climb(evaluator: _RateEvaluator, p0: np.ndarray, max_sweeps: int):
    """Greedy pairwise mass transfers with a shrinking step schedule.

    At each step size, every ordered cell pair (i, j) is tried as a
    transfer of ``min(step, p[i])`` mass from i to j; first improvements
    are accepted immediately. The step halves from 0.25 after each sweep
    with no improvement, ending below 1e-4.
    """
    p = p0.astype(float).ravel().copy()
    p /= p.sum()
    k = p.size
    score = _score(evaluator.pair(p))
    evals = 1
    step = 0.25
    sweeps = 0
    while step >= 1e-4 and sweeps < max_sweeps:
        improved = False
        for i in range(k):
            for j in range(k):
                if i == j or p[i] <= 1e-15:
                    continue
                amt = min(step, p[i])
                p[i] -= amt
                p[j] += amt
                cand = _score(evaluator.pair(p))
                evals += 1
                if _better(cand, score):
                    score = cand
                    improved = True
                else:
                    p[i] += amt
                    p[j] -= amt
        p /= p.sum()
        sweeps += 1
        if not improved:
            step *= 0.5
    return p, score, evals


def _grid_starts(k: int, resolution: int) -> list[np.ndarray]:
    count = math.comb(resolution + k - 1, k - 1)
    if count > 20000:
        raise ValueError(
            f"grid_resolution {resolution} over a {k}-cell simplex yields {count} "
            "start points; lower the resolution"
        )
    starts = []
    for cuts in itertools.combinations(range(resolution + k - 1), k - 1):
        prev = -1
        parts = []
        for c in cuts:
            parts.append(c - prev - 1)
            prev = c
        parts.append(resolution + k - 2 - prev)
        starts.append(np.asarray(parts, dtype=float) / resolution)
    return starts


def _start_points(k: int, budget: SearchBudget, candidate_index: int) -> list[np.ndarray]:
    starts = _grid_starts(k, budget.grid_resolution)
    rng = np.random.default_rng(np.random.SeedSequence((budget.seed, 7, candidate_index)))
    starts.extend(rng.dirichlet(np.ones(k)) for _ in range(budget.restarts))
    return starts


def _kernels(ch: ChannelSpec, helper, encoder, u_size: int, v_size: int):
    helper = np.asarray(helper)
    encoder = np.asarray(encoder)
    if np.issubdtype(helper.dtype, np.integer):
        kt = np.eye(ch.t_size)[helper].transpose(1, 0, 2)
    else:
        kt = helper
    if np.issubdtype(encoder.dtype, np.integer):
        kx = np.eye(ch.x_size)[encoder]
    else:
        kx = encoder
    if kt.shape != (v_size, ch.s_size, ch.t_size):
        raise ValueError(f"helper shape {helper.shape} inconsistent with sizes")
    if kx.shape != (u_size, v_size, ch.t_size, ch.x_size):
        raise ValueError(f"encoder shape {encoder.shape} inconsistent with sizes")
    return kt, kx


def _optimize_puv(ch, helper, encoder, u_size, v_size, budget, candidate_index=0):
    kt, kx = _kernels(ch, helper, encoder, u_size, v_size)
    evaluator = _RateEvaluator(ch, kt, kx)
    k = u_size * v_size
    best_p = None
    best_score = (-1.0, -1.0)
    evals = 0
    for start in _start_points(k, budget, candidate_index):
        p, score, n = _hill_climb(evaluator, start, budget.local_steps)
        evals += n
        if _better(score, best_score):
            best_score = score
            best_p = p
    return best_p.reshape(u_size, v_size), best_score, evals


def optimize_puv(
    ch: ChannelSpec,
    helper: np.ndarray,
    encoder: np.ndarray,
    u_size: int,
    v_size: int,
    budget: SearchBudget,
) -> tuple[np.ndarray, RatePair]:
    """Maximize min{I(UV;Y), I(U;X|VT)} over P(u,v) for fixed maps.

    Start points are the simplex grid at ``budget.grid_resolution`` plus
    ``budget.restarts`` seeded Dirichlet(1) draws; the returned pair is
    re-evaluated through the exact joint-table path. Deterministic for a
    given budget seed.
    """
    p_uv, _, _ = _optimize_puv(ch, helper, encoder, u_size, v_size, budget)
    aux = aux_from_joint_uv(p_uv, helper=np.asarray(helper), encoder=np.asarray(encoder))
    return p_uv, rate_pair(ch, aux)


def _candidate_pairs(ch, u_size, v_size, budget, helper_ignores_v):
    """Deterministic stream of (h, f) map pairs honoring the budget."""
    h_cells = ch.s_size * (1 if helper_ignores_v else v_size)
    f_cells = u_size * v_size * ch.t_size
    h_space = ch.t_size**h_cells
    f_space = ch.x_size**f_cells
    if h_space * f_space <= budget.max_map_candidates:
        for h in enumerate_helper_maps(ch, v_size, budget, ignore_v=helper_ignores_v):
            for f in enumerate_encoder_maps(ch, u_size, v_size, budget):
                yield h, f
        return
    rng = np.random.default_rng(np.random.SeedSequence((budget.seed, 3)))
    seen: set[bytes] = set()
    while len(seen) < budget.max_map_candidates:
        if helper_ignores_v:
            h = np.repeat(
                rng.integers(0, ch.t_size, size=(ch.s_size, 1), dtype=np.int64),
                v_size,
                axis=1,
            )
        else:
            h = rng.integers(0, ch.t_size, size=(ch.s_size, v_size), dtype=np.int64)
        f = rng.integers(0, ch.x_size, size=(u_size, v_size, ch.t_size), dtype=np.int64)
        key = h.tobytes() + f.tobytes()
        if key in seen:
            continue
        seen.add(key)
        yield h, f


def _eval_candidate(args):
    ch, helper, encoder, u_size, v_size, budget, idx = args
    p_uv, score, evals = _optimize_puv(ch, helper, encoder, u_size, v_size, budget, idx)
    return idx, p_uv, score, evals


def capacity_lower_bound(
    ch: ChannelSpec,
    u_size: int,
    v_size: int,
    budget: SearchBudget,
    include=(),
    helper_ignores_v: bool = False,
    workers: int = 1,
    stochastic_refine: bool = False,
) -> SearchResult:
    """Best achievable rate found over (helper map, encoder map, P(u,v)).

    ``include`` is a sequence of (helper, encoder) map pairs evaluated
    ahead of the budgeted stream (e.g. a warm start loaded from an aux
    file). Candidate evaluations are independent; with ``workers > 1``
    they run in a process pool, and the reduction is by candidate index,
    so results are identical for any worker count.
    """
    if u_size < 1 or v_size < 1:
        raise ValueError("u_size and v_size must be >= 1")
    candidates = [(np.asarray(h), np.asarray(f)) for h, f in include]
    candidates.extend(_candidate_pairs(ch, u_size, v_size, budget, helper_ignores_v))
    payloads = [
        (ch, h, f, u_size, v_size, budget, idx) for idx, (h, f) in enumerate(candidates)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_eval_candidate, payloads, chunksize=4))
    else:
        results = [_eval_candidate(p) for p in payloads]

    best = None
    best_score = (-1.0, -1.0)
    evaluations = 0
    for idx, p_uv, score, evals in results:
        evaluations += evals
        if _better(score, best_score):
            best_score = score
            best = (idx, p_uv)
    idx, p_uv = best
    helper, encoder = candidates[idx]
    gain = None
    if stochastic_refine:
        p_uv, helper, encoder, refine_evals, gain = _refine_stochastic(
            ch, p_uv, helper, encoder, u_size, v_size, budget
        )
        evaluations += refine_evals
    aux = aux_from_joint_uv(p_uv, helper=helper, encoder=encoder)
    pair = rate_pair(ch, aux)
    return SearchResult(
        best_aux=aux,
        best_rate=pair.bound,
        rate_pair=pair,
        evaluations=evaluations,
        seed=budget.seed,
        stochastic_gain=gain,
    )


def _refine_stochastic(ch, p_uv, helper, encoder, u_size, v_size, budget):
    """Local ascent over full stochastic kernels, from a deterministic start.

    Alternates pairwise-transfer sweeps on P(u,v) and on each row of the
    helper and encoder kernels. Reports the improvement over the starting
    point; whether allowing stochastic kernels at these alphabet sizes can
    ever beat the best deterministic maps is not settled here, so the gain
    is surfaced rather than interpreted.
    """
    kt, kx = _kernels(ch, helper, encoder, u_size, v_size)
    kt = kt.copy()
    kx = kx.copy()
    p = p_uv.copy()
    evals = 0

    def current_score():
        ev = _RateEvaluator(ch, kt, kx)
        return _score(ev.pair(p))

    base = current_score()
    score = base
    for _ in range(2):
        p, score, n = _hill_climb(_RateEvaluator(ch, kt, kx), p, budget.local_steps)
        p = p.reshape(u_size, v_size)
        evals += n
        for rows, shape in ((kt, (v_size * ch.s_size, ch.t_size)), (kx, (u_size * v_size * ch.t_size, ch.x_size))):
            flat = rows.reshape(shape)
            for r in range(shape[0]):
                step = 0.25
                while step >= 1e-3:
                    improved = False
                    for i in range(shape[1]):
                        for j in range(shape[1]):
                            if i == j or flat[r, i] <= 1e-15:
                                continue
                            amt = min(step, flat[r, i])
                            flat[r, i] -= amt
                            flat[r, j] += amt
                            cand = current_score()
                            evals += 1
                            if _better(cand, score):
                                score = cand
                                improved = True
                            else:
                                flat[r, i] += amt
                                flat[r, j] -= amt
                    if not improved:
                        step *= 0.5
    gain = max(0.0, score[0] - base[0])
    return p, kt, kx, evals, gain
