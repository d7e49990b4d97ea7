"""The bit-pair worked example with a one-bit helper.

Inputs, states, and outputs are bit pairs: x = (a, b), s = (s0, s1),
y = (y0, y1), flattened row-major to indices in {0,1,2,3}. The two state
bits are independent fair coins, and the channel is deterministic:

    y = (a, b XOR s_a)

i.e. the first input bit selects which state bit corrupts the second.
The helper may send one bit per use (|T| = 2).

Known reference points for this channel: a helper that knows the message
achieves 2 bits, a helper that sees only the state achieves log2(3), and
a helper that also overhears past channel inputs achieves at least 5/3
(the construction below); its exact capacity is not known, only that it
is strictly below 2.

The alpha-parameterized construction: U = (a, u~) uniform on 4 symbols,
an independent Bernoulli(alpha) switch sigma, V = (v~, sigma) with
v~ = a when sigma = 1 and v~ = 0 otherwise. The helper reports t = s_{v~}
(the state bit selected by v~) and the encoder ignores v and sends
x = (a, u~ XOR t). With probability alpha the helper is reporting exactly
the state bit that will corrupt the transmission, so the corruption
cancels; otherwise it reports bit 0, which cancels only when a = 0.
The resulting rates are (alpha+3)/2 on the decoder side and 2-alpha on
the helper side, so the best choice alpha = 1/3 yields 5/3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import (
    AuxiliarySystem,
    ChannelSpec,
    RatePair,
    aux_from_joint_uv,
    build_joint,
    rate_pair,
)
from .probability import Alphabet, CondPmf, Pmf, mutual_information

_PAIR_LABELS = ("00", "01", "10", "11")


def _pair(idx: int) -> tuple[int, int]:
    return idx >> 1, idx & 1


def make_example_channel() -> ChannelSpec:
    """The deterministic bit-pair channel with uniform IID state bits."""
    w = np.zeros((16, 4))
    for x in range(4):
        a, b = _pair(x)
        for s in range(4):
            s_bits = _pair(s)
            y = (a << 1) | (b ^ s_bits[a])
            w[x * 4 + s, y] = 1.0
    return ChannelSpec(
        x_alpha=Alphabet(4, _PAIR_LABELS),
        s_alpha=Alphabet(4, _PAIR_LABELS),
        y_alpha=Alphabet(4, _PAIR_LABELS),
        t_alpha=Alphabet(2, ("0", "1")),
        W=CondPmf(w),
        P_S=Pmf(np.full(4, 0.25)),
    )


def example_maps(u_size: int = 4, v_size: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """The construction's helper and encoder maps, embeddable in larger index spaces.

    The helper reports the state bit selected by the first component of
    v: h(s, v) = s_{v~} with v~ = v >> 1. The encoder ignores v and sends
    x = (a, u~ XOR t) where (a, u~) are the low two bits of u. Requires
    u_size >= 4 and v_size >= 2 so the construction's symbols exist;
    extra u symbols reuse the low bits, extra v symbols select bit 1.
    """
    if u_size < 4 or v_size < 2:
        raise ValueError("need u_size >= 4 and v_size >= 2 to embed the construction")
    h = np.zeros((4, v_size), dtype=np.int64)
    for s in range(4):
        s_bits = _pair(s)
        for v in range(v_size):
            v_tilde = (v >> 1) & 1
            h[s, v] = s_bits[v_tilde]
    f = np.zeros((u_size, v_size, 2), dtype=np.int64)
    for u in range(u_size):
        a, u_tilde = _pair(u & 3)
        for v in range(v_size):
            for t in range(2):
                f[u, v, t] = (a << 1) | (u_tilde ^ t)
    return h, f


@dataclass(frozen=True)
class ExampleAux:
    """The alpha-parameterized candidate, assembled as an AuxiliarySystem."""

    alpha: float
    aux: AuxiliarySystem


def make_example_aux(alpha: float) -> ExampleAux:
    """Assemble the construction at mixing weight ``alpha``.

    V is realized on 4 symbols (v~, sigma) even though (1, 0) has zero
    probability; zero-mass symbols are harmless and keep the pair
    structure literal.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    # v index = 2*v_tilde + sigma
    p_v = np.array([1.0 - alpha, alpha / 2.0, 0.0, alpha / 2.0])
    p_u_given_v = np.full((4, 4), 0.25)
    p_u_given_v[1] = [0.5, 0.5, 0.0, 0.0]  # sigma=1, v~=0 forces a=0
    p_u_given_v[3] = [0.0, 0.0, 0.5, 0.5]  # sigma=1, v~=1 forces a=1
    h, f = example_maps(4, 4)
    aux = AuxiliarySystem(
        u_alpha=Alphabet(4, _PAIR_LABELS),
        v_alpha=Alphabet(4, _PAIR_LABELS),
        p_v=Pmf(p_v),
        p_u_given_v=CondPmf(p_u_given_v),
        helper=h,
        encoder=f,
    )
    return ExampleAux(alpha=alpha, aux=aux)


def closed_form_rates(alpha: float) -> tuple[float, float]:
    """(decoder_rate, helper_rate) = ((alpha+3)/2, 2-alpha)."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    return (alpha + 3.0) / 2.0, 2.0 - alpha


def baselines() -> dict[str, float]:
    """Reference rates for this channel.

    ``cognizant`` and ``oblivious`` are cited values for message-aware and
    state-only helpers; ``cribbing_lb`` is the rate achieved here by the
    construction at alpha = 1/3.
    """
    return {
        "cognizant": 2.0,
        "oblivious": math.log2(3.0),
        "cribbing_lb": 5.0 / 3.0,
    }


@dataclass(frozen=True)
class GapProbeReport:
    """Result of the strict-gap falsification probe."""

    candidates_probed: int
    flagged: int  # candidates with helper-side information >= 2 - 1e-6
    max_i_uv_y: float  # largest decoder-side information among flagged
    gap: float  # 2 - max_i_uv_y
    vacuous: bool


def strict_gap_probe(n_candidates: int = 200, seed: int = 0, u_size: int = 4) -> GapProbeReport:
    """Search for a counterexample to the strict gap below 2 bits.

    Samples candidate auxiliary systems for the example channel; every
    candidate whose helper-side information I(U;X|VT) reaches 2 (the
    maximum possible) has its decoder-side I(UV;Y) recorded, and the
    probe fails loudly if any of them also reaches 2. This is a
    falsification probe over the sampled candidates, not a proof.

    With ``u_size >= 4`` the sample deliberately includes hand-built
    candidates that pin I(U;X|VT) = 2 (uniform U driving X bijectively
    per (v, t)), plus seeded random systems. Smaller U alphabets cannot
    reach 2 bits at all, so the probe set is empty and the report is
    vacuous.
    """
    ch = make_example_channel()
    rng = np.random.default_rng(seed)
    candidates: list[AuxiliarySystem] = []

    if u_size >= 4:
        # Hand-built: X = U uniform on 4, V constant, helper constant /
        # state-bit reporters. All have X uniform given (V, T), hence
        # I(U;X|VT) = 2.
        identity_f = np.arange(4, dtype=np.int64).reshape(4, 1, 1).repeat(2, axis=2)
        for h_row in ([[0], [0], [0], [0]], [[0], [0], [1], [1]], [[0], [1], [0], [1]]):
            candidates.append(
                aux_from_joint_uv(
                    np.full((4, 1), 0.25),
                    helper=np.asarray(h_row, dtype=np.int64),
                    encoder=identity_f,
                )
            )

    for _ in range(n_candidates):
        v_size = int(rng.integers(1, 3))
        h = rng.integers(0, 2, size=(4, v_size))
        if u_size >= 4 and rng.random() < 0.5:
            # Bijective-in-u encoder per (v, t) with uniform independent U:
            # keeps the helper-side information at its maximum.
            f = np.zeros((u_size, v_size, 2), dtype=np.int64)
            for v in range(v_size):
                for t in range(2):
                    f[:, v, t] = np.resize(rng.permutation(4), u_size)
            p_uv = np.full((u_size, v_size), 1.0) * rng.dirichlet(np.ones(v_size))
            p_uv[4:] = 0.0
            p_uv /= p_uv.sum()
        else:
            f = rng.integers(0, 4, size=(u_size, v_size, 2))
            p_uv = rng.dirichlet(np.ones(u_size * v_size)).reshape(u_size, v_size)
        candidates.append(aux_from_joint_uv(p_uv, helper=h, encoder=f))

    flagged = 0
    max_i_uv_y = float("-inf")
    for aux in candidates:
        rp = rate_pair(ch, aux)
        if rp.i_u_x_given_vt >= 2.0 - 1e-6:
            flagged += 1
            max_i_uv_y = max(max_i_uv_y, rp.i_uv_y)
    if flagged and max_i_uv_y >= 2.0 - 1e-9:
        raise RuntimeError(
            f"strict-gap probe found a candidate with I(U;X|VT) ~ 2 and I(UV;Y) = {max_i_uv_y}"
        )
    return GapProbeReport(
        candidates_probed=len(candidates),
        flagged=flagged,
        max_i_uv_y=max_i_uv_y if flagged else float("nan"),
        gap=2.0 - max_i_uv_y if flagged else float("nan"),
        vacuous=flagged == 0,
    )


def alpha_sweep(alphas) -> list[dict[str, float]]:
    """Evaluate closed forms and exact table rates along an alpha grid."""
    ch = make_example_channel()
    rows = []
    for alpha in alphas:
        dec, helper = closed_form_rates(alpha)
        rp = rate_pair(ch, make_example_aux(alpha).aux)
        rows.append(
            {
                "alpha": float(alpha),
                "decoder_rate": dec,
                "helper_rate": helper,
                "rate_bound": min(dec, helper),
                "i_uv_y": rp.i_uv_y,
                "i_u_x_given_vt": rp.i_u_x_given_vt,
            }
        )
    return rows
