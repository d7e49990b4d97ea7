"""Channel instances, helper/encoder candidates, and the rate bound.

A :class:`ChannelSpec` fixes the problem: finite input/state/output
alphabets, the channel law W(y|x,s) as a row-stochastic kernel with one
row per (x, s) pair (row-major), the state distribution, and the size of
the assistance alphabet available to the helper.

An :class:`AuxiliarySystem` is one candidate solution: a pair of finite
auxiliaries (U, V) with a joint law stored factored as P_V and P_{U|V},
a helper map from (state, V) to the assistance symbol, and an encoder map
from (U, V, assistance) to the channel input. Both maps may be given
either as deterministic lookup tables or as stochastic kernels; optima
are attained by deterministic maps, but searches may pass through
stochastic iterates.

``build_joint`` assembles the full six-variable law

    P(s,u,v,t,x,y) = P_S(s) P_UV(u,v) P(t|v,s) P(x|u,v,t) W(y|x,s)

and ``rate_pair`` evaluates on it the two mutual informations whose
minimum is the achievable rate of a candidate: the decoder-side
I(UV;Y) and the helper-side I(U;X|VT).

Product alphabets (e.g. bit pairs) are always flattened to integer
indices row-major: pair (a, b) over {0,1}x{0,1} becomes index 2a + b.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .probability import Alphabet, CondPmf, JointTable, Pmf, mutual_information

JOINT_VARS = ("S", "U", "V", "T", "X", "Y")


class SpecValidationError(ValueError):
    """A channel or auxiliary definition failed validation."""


@dataclass(frozen=True)
class ChannelSpec:
    """A state-dependent channel together with its assistance alphabet."""

    x_alpha: Alphabet
    s_alpha: Alphabet
    y_alpha: Alphabet
    t_alpha: Alphabet
    W: CondPmf  # one row per (x, s), row-major; columns indexed by y
    P_S: Pmf

    def __post_init__(self):
        if self.t_alpha.size < 2:
            raise SpecValidationError(
                f"assistance alphabet must have size >= 2, got {self.t_alpha.size}"
            )
        want_rows = self.x_alpha.size * self.s_alpha.size
        if self.W.n_rows != want_rows:
            raise SpecValidationError(
                f"W has {self.W.n_rows} rows, expected |X|*|S| = {want_rows}"
            )
        if self.W.n_cols != self.y_alpha.size:
            raise SpecValidationError(
                f"W rows have {self.W.n_cols} entries, expected |Y| = {self.y_alpha.size}"
            )
        if self.P_S.size != self.s_alpha.size:
            raise SpecValidationError(
                f"P_S has {self.P_S.size} entries, expected |S| = {self.s_alpha.size}"
            )

    @property
    def x_size(self) -> int:
        return self.x_alpha.size

    @property
    def s_size(self) -> int:
        return self.s_alpha.size

    @property
    def y_size(self) -> int:
        return self.y_alpha.size

    @property
    def t_size(self) -> int:
        return self.t_alpha.size

    def w_xsy(self) -> np.ndarray:
        """The channel law reshaped to shape (|X|, |S|, |Y|)."""
        return self.W.rows.reshape(self.x_size, self.s_size, self.y_size)


def _is_int_array(a: np.ndarray) -> bool:
    return np.issubdtype(a.dtype, np.integer)


@dataclass(frozen=True)
class AuxiliarySystem:
    """One candidate in the rate maximization.

    ``helper`` is either an integer map of shape (|S|, |V|) giving the
    assistance symbol for each (state, V) pair, or a stochastic kernel of
    shape (|V|, |S|, |T|). ``encoder`` is either an integer map of shape
    (|U|, |V|, |T|) giving the channel input, or a kernel of shape
    (|U|, |V|, |T|, |X|).
    """

    u_alpha: Alphabet
    v_alpha: Alphabet
    p_v: Pmf
    p_u_given_v: CondPmf  # one row per v, columns indexed by u
    helper: np.ndarray
    encoder: np.ndarray

    def __post_init__(self):
        if self.p_v.size != self.v_alpha.size:
            raise SpecValidationError("P_V size does not match the V alphabet")
        if self.p_u_given_v.n_rows != self.v_alpha.size:
            raise SpecValidationError("P_{U|V} must have one row per v symbol")
        if self.p_u_given_v.n_cols != self.u_alpha.size:
            raise SpecValidationError("P_{U|V} rows must have one entry per u symbol")
        h = np.asarray(self.helper)
        if _is_int_array(h):
            if h.ndim != 2 or h.shape[1] != self.v_alpha.size:
                raise SpecValidationError(
                    f"helper map must have shape (|S|, {self.v_alpha.size}), got {h.shape}"
                )
            if h.min() < 0:
                raise SpecValidationError("helper map has negative symbol indices")
            h = np.ascontiguousarray(h, dtype=np.int64)
        else:
            h = np.asarray(h, dtype=float)
            if h.ndim != 3 or h.shape[0] != self.v_alpha.size:
                raise SpecValidationError(
                    f"helper kernel must have shape (|V|, |S|, |T|), got {h.shape}"
                )
            _validate_kernel_rows(h.reshape(-1, h.shape[-1]), "helper kernel")
        e = np.asarray(self.encoder)
        if _is_int_array(e):
            if e.ndim != 3 or e.shape[:2] != (self.u_alpha.size, self.v_alpha.size):
                raise SpecValidationError(
                    f"encoder map must have shape (|U|, |V|, |T|), got {e.shape}"
                )
            if e.min() < 0:
                raise SpecValidationError("encoder map has negative symbol indices")
            e = np.ascontiguousarray(e, dtype=np.int64)
        else:
            e = np.asarray(e, dtype=float)
            if e.ndim != 4 or e.shape[:2] != (self.u_alpha.size, self.v_alpha.size):
                raise SpecValidationError(
                    f"encoder kernel must have shape (|U|, |V|, |T|, |X|), got {e.shape}"
                )
            _validate_kernel_rows(e.reshape(-1, e.shape[-1]), "encoder kernel")
        h.setflags(write=False)
        e.setflags(write=False)
        object.__setattr__(self, "helper", h)
        object.__setattr__(self, "encoder", e)

    @property
    def u_size(self) -> int:
        return self.u_alpha.size

    @property
    def v_size(self) -> int:
        return self.v_alpha.size

    @property
    def helper_is_deterministic(self) -> bool:
        return _is_int_array(self.helper)

    @property
    def encoder_is_deterministic(self) -> bool:
        return _is_int_array(self.encoder)

    def p_uv(self) -> np.ndarray:
        """The joint P(u, v) = P_V(v) P(u|v), shape (|U|, |V|)."""
        return (self.p_u_given_v.rows * self.p_v.probs[:, None]).T

    def helper_kernel(self, t_size: int) -> np.ndarray:
        """P(t|v,s) of shape (|V|, |S|, |T|); 0-1 rows for a deterministic map."""
        h = self.helper
        if not self.helper_is_deterministic:
            if h.shape[2] != t_size:
                raise SpecValidationError(
                    f"helper kernel has {h.shape[2]} assistance symbols, channel has {t_size}"
                )
            return h
        if h.max() >= t_size:
            raise SpecValidationError(
                f"helper map uses symbol {int(h.max())}, assistance alphabet has {t_size}"
            )
        return np.eye(t_size)[h].transpose(1, 0, 2)  # (s, v, t) -> (v, s, t)

    def encoder_kernel(self, x_size: int) -> np.ndarray:
        """P(x|u,v,t) of shape (|U|, |V|, |T|, |X|); 0-1 rows for a map."""
        e = self.encoder
        if not self.encoder_is_deterministic:
            if e.shape[3] != x_size:
                raise SpecValidationError(
                    f"encoder kernel has {e.shape[3]} input symbols, channel has {x_size}"
                )
            return e
        if e.max() >= x_size:
            raise SpecValidationError(
                f"encoder map uses symbol {int(e.max())}, input alphabet has {x_size}"
            )
        return np.eye(x_size)[e]


def _validate_kernel_rows(rows: np.ndarray, what: str):
    if np.any(rows < 0):
        raise SpecValidationError(f"{what} has negative entries")
    sums = rows.sum(axis=1)
    bad = np.nonzero(np.abs(sums - 1.0) > 1e-12)[0]
    if bad.size:
        i = int(bad[0])
        raise SpecValidationError(
            f"{what} row {i} sums to {sums[i]!r}, expected 1 within 1e-12"
        )


def aux_from_joint_uv(
    p_uv: np.ndarray,
    helper: np.ndarray,
    encoder: np.ndarray,
    u_alpha: Alphabet | None = None,
    v_alpha: Alphabet | None = None,
) -> AuxiliarySystem:
    """Build an AuxiliarySystem from a joint P(u,v) of shape (|U|, |V|).

    The joint is factored into P_V and P_{U|V}; rows conditioned on
    zero-mass v symbols are set uniform (they never matter).
    """
    p_uv = np.asarray(p_uv, dtype=float)
    if p_uv.ndim != 2:
        raise SpecValidationError("p_uv must be a (|U|, |V|) matrix")
    u_size, v_size = p_uv.shape
    p_v = p_uv.sum(axis=0)
    rows = np.full((v_size, u_size), 1.0 / u_size)
    nz = p_v > 0
    rows[nz] = (p_uv[:, nz] / p_v[nz]).T
    # Guard against accumulated rounding before the strict Pmf checks.
    rows = rows / rows.sum(axis=1, keepdims=True)
    p_v = p_v / p_v.sum()
    return AuxiliarySystem(
        u_alpha=u_alpha or Alphabet(u_size),
        v_alpha=v_alpha or Alphabet(v_size),
        p_v=Pmf(p_v),
        p_u_given_v=CondPmf(rows),
        helper=helper,
        encoder=encoder,
    )


@dataclass(frozen=True)
class RatePair:
    """The two mutual informations whose minimum bounds the rate."""

    i_uv_y: float
    i_u_x_given_vt: float

    @property
    def bound(self) -> float:
        return min(self.i_uv_y, self.i_u_x_given_vt)


def help_rate(ch: ChannelSpec) -> float:
    """Bits of assistance available per channel use: log2 |T|."""
    return math.log2(ch.t_size)


def build_joint(ch: ChannelSpec, aux: AuxiliarySystem) -> JointTable:
    """Assemble the joint law of (S, U, V, T, X, Y) for one candidate."""
    kt = aux.helper_kernel(ch.t_size)  # (v, s, t)
    kx = aux.encoder_kernel(ch.x_size)  # (u, v, t, x)
    w = ch.w_xsy()  # (x, s, y)
    vals = np.einsum(
        "s,uv,vst,uvtx,xsy->suvtxy",
        ch.P_S.probs,
        aux.p_uv(),
        kt,
        kx,
        w,
        optimize=True,
    )
    vars_ = (
        ("S", ch.s_alpha),
        ("U", aux.u_alpha),
        ("V", aux.v_alpha),
        ("T", ch.t_alpha),
        ("X", ch.x_alpha),
        ("Y", ch.y_alpha),
    )
    return JointTable(vars_, vals)


def rate_pair(ch: ChannelSpec, aux: AuxiliarySystem) -> RatePair:
    """Evaluate (I(UV;Y), I(U;X|VT)) on the assembled joint."""
    j = build_joint(ch, aux)
    i_dec = mutual_information(j, ("U", "V"), "Y")
    i_help = mutual_information(j, "U", "X", given=("V", "T"))
    slack = 1e-9
    if i_dec > math.log2(ch.y_size) + slack:
        raise AssertionError(f"I(UV;Y) = {i_dec} exceeds log2|Y|")
    if i_help > math.log2(ch.x_size) + slack:
        raise AssertionError(f"I(U;X|VT) = {i_help} exceeds log2|X|")
    return RatePair(i_uv_y=i_dec, i_u_x_given_vt=i_help)


def rate_bound(ch: ChannelSpec, aux: AuxiliarySystem) -> float:
    """The achievable rate of one candidate: min of the rate pair."""
    return rate_pair(ch, aux).bound


# ---------------------------------------------------------------------------
# File formats. Channels and auxiliary systems are plain JSON documents so
# that runs are reproducible from human-diffable inputs.
# ---------------------------------------------------------------------------


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise SpecValidationError(f"{where}: missing required field {key!r}")
    return d[key]


def channel_from_dict(d: dict, where: str = "channel") -> ChannelSpec:
    sizes = {}
    for key in ("x_size", "s_size", "y_size", "t_size"):
        v = _require(d, key, where)
        if not isinstance(v, int) or v < 1:
            raise SpecValidationError(f"{where}: {key} must be a positive integer")
        sizes[key] = v
    labels = d.get("labels", {}) or {}
    alphas = {}
    for key, short in (("x_size", "x"), ("s_size", "s"), ("y_size", "y"), ("t_size", "t")):
        lab = labels.get(short)
        try:
            alphas[short] = Alphabet(sizes[key], tuple(lab) if lab else None)
        except ValueError as e:
            raise SpecValidationError(f"{where}: labels for {short!r}: {e}") from e
    p_s = _require(d, "P_S", where)
    try:
        p_s = Pmf(np.asarray(p_s, dtype=float))
    except ValueError as e:
        raise SpecValidationError(f"{where}: P_S: {e}") from e
    w_rows = _require(d, "W", where)
    w = np.asarray(w_rows, dtype=float)
    want = (sizes["x_size"] * sizes["s_size"], sizes["y_size"])
    if w.ndim != 2 or w.shape != want:
        raise SpecValidationError(
            f"{where}: W must be {want[0]} rows (one per (x,s), row-major) of {want[1]} entries; got shape {w.shape}"
        )
    sums = w.sum(axis=1)
    bad = np.nonzero((np.abs(sums - 1.0) > 1e-12) | (w < 0).any(axis=1))[0]
    if bad.size:
        i = int(bad[0])
        x, s = divmod(i, sizes["s_size"])
        raise SpecValidationError(
            f"{where}: W row {i} (x={x}, s={s}) is not a probability vector (sum {sums[i]!r})"
        )
    return ChannelSpec(
        x_alpha=alphas["x"],
        s_alpha=alphas["s"],
        y_alpha=alphas["y"],
        t_alpha=alphas["t"],
        W=CondPmf(w),
        P_S=p_s,
    )


def channel_to_dict(ch: ChannelSpec) -> dict:
    d = {
        "x_size": ch.x_size,
        "s_size": ch.s_size,
        "y_size": ch.y_size,
        "t_size": ch.t_size,
        "P_S": ch.P_S.probs.tolist(),
        "W": ch.W.rows.tolist(),
    }
    labels = {}
    for short, alpha in (("x", ch.x_alpha), ("s", ch.s_alpha), ("y", ch.y_alpha), ("t", ch.t_alpha)):
        if alpha.labels is not None:
            labels[short] = list(alpha.labels)
    if labels:
        d["labels"] = labels
    return d


def load_channel(path) -> ChannelSpec:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise SpecValidationError(f"{path}: not valid JSON: {e}") from e
    return channel_from_dict(d, where=str(path))


def aux_from_dict(d: dict, ch: ChannelSpec, where: str = "aux") -> AuxiliarySystem:
    u_size = _require(d, "u_size", where)
    v_size = _require(d, "v_size", where)
    if not isinstance(u_size, int) or u_size < 1 or not isinstance(v_size, int) or v_size < 1:
        raise SpecValidationError(f"{where}: u_size and v_size must be positive integers")
    try:
        p_v = Pmf(np.asarray(_require(d, "P_V", where), dtype=float))
    except ValueError as e:
        raise SpecValidationError(f"{where}: P_V: {e}") from e
    puv = np.asarray(_require(d, "P_U_given_V", where), dtype=float)
    if puv.shape != (v_size, u_size):
        raise SpecValidationError(
            f"{where}: P_U_given_V must be {v_size} rows of {u_size} entries, got {puv.shape}"
        )
    if "helper_map" in d:
        helper = np.asarray(d["helper_map"], dtype=np.int64)
        if helper.shape != (ch.s_size, v_size):
            raise SpecValidationError(
                f"{where}: helper_map must have shape ({ch.s_size}, {v_size}), got {helper.shape}"
            )
        if helper.min() < 0 or helper.max() >= ch.t_size:
            raise SpecValidationError(f"{where}: helper_map entries must be in [0, {ch.t_size})")
    elif "helper_kernel" in d:
        helper = np.asarray(d["helper_kernel"], dtype=float)
    else:
        raise SpecValidationError(f"{where}: need helper_map or helper_kernel")
    if "encoder_map" in d:
        encoder = np.asarray(d["encoder_map"], dtype=np.int64)
        if encoder.shape != (u_size, v_size, ch.t_size):
            raise SpecValidationError(
                f"{where}: encoder_map must have shape ({u_size}, {v_size}, {ch.t_size}), got {encoder.shape}"
            )
        if encoder.min() < 0 or encoder.max() >= ch.x_size:
            raise SpecValidationError(f"{where}: encoder_map entries must be in [0, {ch.x_size})")
    elif "encoder_kernel" in d:
        encoder = np.asarray(d["encoder_kernel"], dtype=float)
    else:
        raise SpecValidationError(f"{where}: need encoder_map or encoder_kernel")
    try:
        return AuxiliarySystem(
            u_alpha=Alphabet(u_size),
            v_alpha=Alphabet(v_size),
            p_v=p_v,
            p_u_given_v=CondPmf(puv),
            helper=helper,
            encoder=encoder,
        )
    except ValueError as e:
        raise SpecValidationError(f"{where}: {e}") from e


def aux_to_dict(aux: AuxiliarySystem) -> dict:
    d = {
        "u_size": aux.u_size,
        "v_size": aux.v_size,
        "P_V": aux.p_v.probs.tolist(),
        "P_U_given_V": aux.p_u_given_v.rows.tolist(),
    }
    if aux.helper_is_deterministic:
        d["helper_map"] = aux.helper.tolist()
    else:
        d["helper_kernel"] = aux.helper.tolist()
    if aux.encoder_is_deterministic:
        d["encoder_map"] = aux.encoder.tolist()
    else:
        d["encoder_kernel"] = aux.encoder.tolist()
    return d


def load_aux(path, ch: ChannelSpec) -> AuxiliarySystem:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise SpecValidationError(f"{path}: not valid JSON: {e}") from e
    return aux_from_dict(d, ch, where=str(path))
