"""Predicate and function groundings.

Two learnable predicate architectures share one batched interface:

* :class:`LtnPredicate`: ``sigmoid(u . tanh(v^T W[1:k] v + V v + b))``, all
  weights trained.
* :class:`RwtnPredicate`: a frozen random tensor encoder
  ``z = tanh(v^T W_res[1:R] v + V_in v + noise)`` followed by a trained
  bias-free one-hidden-layer decoder ``sigmoid(k . tanh(u^T z))``.

Crisp groundings (argmax typing and the thresholded part-of rule) implement
the same interface without parameters. Every predicate works on a batch
``X`` of shape ``(N, m*n)`` of concatenated argument vectors:
``prepare(X)`` computes whatever does not depend on learnable weights,
``forward(ctx, rng)`` returns truths and a cache, and ``backward(cache, dy)``
returns gradients for the learnable arrays only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import serialize
from .boxes import inclusion_ratio, inclusion_ratio_batch
from .linalg import DimensionError, bilinear_form, sigmoid, tanh_map
from .reservoir import ReservoirConfig, gen_input_weights, gen_sparse_matrix, scale_to_spectral_radius
from .rng import derive_seed, stream

INIT_STD = 0.1


# -- parameter containers --------------------------------------------------

@dataclass
class LtnPredicateParams:
    W: np.ndarray  # (k, mn, mn)
    V: np.ndarray  # (k, mn)
    b: np.ndarray  # (k,)
    u: np.ndarray  # (k,)

    def __post_init__(self):
        k, d, d2 = self.W.shape
        if d != d2 or self.V.shape != (k, d) or self.b.shape != (k,) or self.u.shape != (k,):
            raise DimensionError("inconsistent LTN parameter shapes")
        if k < 1:
            raise ValueError("k must be at least 1")

    @property
    def k(self) -> int:
        return self.W.shape[0]

    @property
    def dim(self) -> int:
        return self.W.shape[1]

    @classmethod
    def init(cls, dim: int, k: int, seed: int, std: float = INIT_STD) -> "LtnPredicateParams":
        rng = stream(seed, "ltn_init")
        return cls(
            W=rng.normal(0.0, std, (k, dim, dim)),
            V=rng.normal(0.0, std, (k, dim)),
            b=rng.normal(0.0, std, k),
            u=rng.normal(0.0, std, k),
        )

    @classmethod
    def zeros(cls, dim: int, k: int) -> "LtnPredicateParams":
        return cls(np.zeros((k, dim, dim)), np.zeros((k, dim)), np.zeros(k), np.zeros(k))

    def arrays(self) -> dict[str, np.ndarray]:
        return {"W": self.W, "V": self.V, "b": self.b, "u": self.u}


@dataclass
class RwtnEncoderParams:
    W_res: np.ndarray  # (R, mn, mn), frozen
    V_in: np.ndarray  # (R, mn), frozen
    xi: float = 0.0
    seed: int = 0

    def __post_init__(self):
        R, d, d2 = self.W_res.shape
        if d != d2 or self.V_in.shape != (R, d):
            raise DimensionError("inconsistent RWTN encoder shapes")
        self.W_res.setflags(write=False)
        self.V_in.setflags(write=False)

    @property
    def R(self) -> int:
        return self.W_res.shape[0]

    @property
    def dim(self) -> int:
        return self.W_res.shape[1]

    def digest(self) -> str:
        return serialize.digest(self.W_res, self.V_in, [self.xi])

    def encode(self, X) -> np.ndarray:
        """Noise-free pre-activations ``v^T W_res v + V_in v``, shape ``(N, R)``."""
        X = np.asarray(X, dtype=np.float64)
        return bilinear_form(X, self.W_res) + X @ self.V_in.T

    def to_doc(self) -> dict:
        return {
            "W_res": serialize.encode_array(self.W_res),
            "V_in": serialize.encode_array(self.V_in),
            "xi": self.xi,
            "seed": self.seed,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "RwtnEncoderParams":
        return cls(serialize.decode_array(doc["W_res"]), serialize.decode_array(doc["V_in"]),
                   float(doc["xi"]), int(doc["seed"]))


@dataclass
class RwtnDecoderParams:
    u: np.ndarray  # (R, t)
    k_out: np.ndarray  # (t,)

    def __post_init__(self):
        if self.u.ndim != 2 or self.k_out.shape != (self.u.shape[1],):
            raise DimensionError("inconsistent RWTN decoder shapes")
        if self.u.shape[1] < 1:
            raise ValueError("t must be at least 1")

    @classmethod
    def init(cls, R: int, t: int, seed: int, std: float = INIT_STD) -> "RwtnDecoderParams":
        rng = stream(seed, "rwtn_decoder_init")
        return cls(rng.normal(0.0, std, (R, t)), rng.normal(0.0, std, t))

    def arrays(self) -> dict[str, np.ndarray]:
        return {"u": self.u, "k_out": self.k_out}


@dataclass
class LinearFunctionParams:
    M: np.ndarray  # (n, mn)
    N: np.ndarray  # (n,)

    def __post_init__(self):
        if self.M.ndim != 2 or self.N.shape != (self.M.shape[0],):
            raise DimensionError("inconsistent linear function shapes")


@dataclass
class PartWholeTable:
    """``w[i, j] = 1`` iff class ``i`` is a part of class ``j``.

    Classes are indexed in predicate declaration order; ``wholes`` and
    ``parts`` list the indices of each kind.
    """

    w: np.ndarray
    wholes: tuple[int, ...]
    parts: tuple[int, ...]

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.int8)
        n = self.w.shape[0]
        if self.w.shape != (n, n) or not np.isin(self.w, (0, 1)).all():
            raise ValueError("part-whole table must be a square 0/1 matrix")
        if sorted((*self.wholes, *self.parts)) != list(range(n)):
            raise ValueError("wholes and parts must partition the classes")
        self.wholes = tuple(self.wholes)
        self.parts = tuple(self.parts)
        for group in (self.wholes, self.parts):
            if group and self.w[np.ix_(group, group)].any():
                raise ValueError("whole-whole and part-part entries must be 0")
        if self.wholes and self.parts and self.w[np.ix_(self.wholes, self.parts)].any():
            raise ValueError("a whole class cannot be a part of a part class")

    @classmethod
    def from_parts(cls, n_wholes: int, n_parts: int,
                   parts_of: dict[int, tuple[int, ...]] | None = None) -> "PartWholeTable":
        """Wholes take indices ``0..n_wholes-1``, parts follow.

        ``parts_of[p]`` lists the whole indices part ``p`` (0-based among the
        parts) belongs to; by default part ``p`` belongs to wholes ``p`` and
        ``p + 1`` (mod ``n_wholes``).
        """
        n = n_wholes + n_parts
        w = np.zeros((n, n), dtype=np.int8)
        for p in range(n_parts):
            if parts_of is not None:
                owners = parts_of.get(p, ())
            elif n_wholes:
                owners = tuple(sorted({p % n_wholes, (p + 1) % n_wholes}))
            else:
                owners = ()
            for j in owners:
                w[n_wholes + p, j] = 1
        return cls(w, tuple(range(n_wholes)), tuple(range(n_wholes, n)))

    @property
    def n_classes(self) -> int:
        return self.w.shape[0]

    def to_doc(self) -> dict:
        return {"w": self.w.tolist(), "wholes": list(self.wholes), "parts": list(self.parts)}

    @classmethod
    def from_doc(cls, doc: dict) -> "PartWholeTable":
        return cls(np.array(doc["w"], dtype=np.int8), tuple(doc["wholes"]), tuple(doc["parts"]))


# -- encoder generation ----------------------------------------------------

def make_encoder(dim: int, config: ReservoirConfig) -> RwtnEncoderParams:
    """Draw a frozen encoder; every tensor slice is scaled to radius ``rho``."""
    slices = []
    for r in range(config.R):
        attempt = 0
        while True:
            seed = derive_seed(config.seed, "W_res", r, attempt)
            S = gen_sparse_matrix(dim, dim, config.beta, seed)
            try:
                slices.append(scale_to_spectral_radius(S, config.rho))
                break
            except ValueError:
                # all-zero or nilpotent draw; redraw
                attempt += 1
                if attempt > 100:
                    raise
    W_res = np.stack(slices) if slices else np.zeros((0, dim, dim))
    V_in = gen_input_weights(config.R, dim, config.omega, derive_seed(config.seed, "V_in"))
    return RwtnEncoderParams(W_res, V_in, config.xi, config.seed)


# -- single-vector groundings ----------------------------------------------

def ltn_predicate(params: LtnPredicateParams, v) -> float:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (params.dim,):
        raise DimensionError(f"input length {v.shape} != {params.dim}")
    pre = bilinear_form(v, params.W) + params.V @ v + params.b
    return float(sigmoid(params.u @ tanh_map(pre)))


def rwtn_predicate(enc: RwtnEncoderParams, dec: RwtnDecoderParams, v, noise_draw=None) -> float:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (enc.dim,):
        raise DimensionError(f"input length {v.shape} != {enc.dim}")
    if dec.u.shape[0] != enc.R:
        raise DimensionError("decoder does not match encoder width")
    pre = enc.encode(v[None, :])[0]
    if noise_draw is not None:
        pre = pre + np.asarray(noise_draw, dtype=np.float64)
    z = tanh_map(pre)
    h = tanh_map(dec.u.T @ z)
    return float(sigmoid(dec.k_out @ h))


def ground_function(params: LinearFunctionParams, args) -> np.ndarray:
    args = np.asarray(args, dtype=np.float64)
    if args.shape[-1] != params.M.shape[1]:
        raise DimensionError(f"argument length {args.shape[-1]} != {params.M.shape[1]}")
    return args @ params.M.T + params.N


def crisp_type(x, class_index: int) -> int:
    """1 iff ``class_index`` (0-based) is the argmax of the score block.

    ``x`` is a grounding vector: ``|P1|`` class scores followed by the four
    box coordinates. Ties go to the lowest index.
    """
    x = np.asarray(x, dtype=np.float64)
    n_classes = x.shape[-1] - 4
    if not 0 <= class_index < n_classes:
        raise IndexError(f"class index {class_index} outside 0..{n_classes - 1}")
    return int(np.argmax(x[:n_classes]) == class_index)


def part_of_score(b, b2, table: PartWholeTable) -> float:
    """``ir(b, b2) * max_ij w_ij x_i x'_j`` for two box records."""
    x = np.asarray(b.scores, dtype=np.float64)
    x2 = np.asarray(b2.scores, dtype=np.float64)
    ir = inclusion_ratio(b.box, b2.box)
    return ir * float(np.max(table.w * np.outer(x, x2)))


def crisp_part_of(b, b2, table: PartWholeTable, th_ir: float = 0.7) -> int:
    return int(part_of_score(b, b2, table) >= th_ir)


# -- batched predicate handles ---------------------------------------------

class Predicate:
    """Interface for batched groundings of an ``arity``-ary predicate."""

    arity: int = 1
    dim: int  # length of the concatenated argument vector

    def prepare(self, X):
        return np.asarray(X, dtype=np.float64)

    def forward(self, ctx, rng: np.random.Generator | None = None):
        raise NotImplementedError

    def backward(self, cache, dy) -> dict[str, np.ndarray]:
        return {}

    def learnable(self) -> dict[str, np.ndarray]:
        return {}

    def __call__(self, X, rng=None) -> np.ndarray:
        y, _ = self.forward(self.prepare(X), rng)
        return y


class LtnPredicate(Predicate):
    kind = "ltn"

    def __init__(self, params: LtnPredicateParams, arity: int = 1):
        self.params = params
        self.arity = arity
        self.dim = params.dim

    def forward(self, ctx, rng=None):
        X = ctx
        p = self.params
        if X.shape[1] != p.dim:
            raise DimensionError(f"input width {X.shape[1]} != {p.dim}")
        h = tanh_map(bilinear_form(X, p.W) + X @ p.V.T + p.b)
        y = sigmoid(h @ p.u)
        return np.atleast_1d(y), (X, h, np.atleast_1d(y))

    def backward(self, cache, dy):
        X, h, y = cache
        p = self.params
        ds = dy * y * (1.0 - y)
        da = (ds[:, None] * p.u) * (1.0 - h * h)
        dW = np.empty_like(p.W)
        for i in range(p.k):
            dW[i] = (X * da[:, i:i + 1]).T @ X
        return {"W": dW, "V": da.T @ X, "b": da.sum(axis=0), "u": h.T @ ds}

    def learnable(self):
        return self.params.arrays()

    def to_doc(self) -> dict:
        return {"kind": self.kind, "arity": self.arity,
                **{k: serialize.encode_array(v) for k, v in self.params.arrays().items()}}


class RwtnPredicate(Predicate):
    kind = "rwtn"

    def __init__(self, encoder: RwtnEncoderParams, decoder: RwtnDecoderParams, arity: int = 1):
        if decoder.u.shape[0] != encoder.R:
            raise DimensionError("decoder does not match encoder width")
        self.encoder = encoder
        self.decoder = decoder
        self.arity = arity
        self.dim = encoder.dim

    def prepare(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != self.dim:
            raise DimensionError(f"input width {X.shape[1]} != {self.dim}")
        pre = self.encoder.encode(X)
        return pre, tanh_map(pre)

    def forward(self, ctx, rng=None):
        pre, z = ctx
        if rng is not None and self.encoder.xi > 0:
            z = tanh_map(pre + self.encoder.xi * rng.standard_normal(pre.shape))
        hid = tanh_map(z @ self.decoder.u)
        y = np.atleast_1d(sigmoid(hid @ self.decoder.k_out))
        return y, (z, hid, y)

    def backward(self, cache, dy):
        z, hid, y = cache
        ds = dy * y * (1.0 - y)
        dq = (ds[:, None] * self.decoder.k_out) * (1.0 - hid * hid)
        return {"u": z.T @ dq, "k_out": hid.T @ ds}

    def learnable(self):
        return self.decoder.arrays()

    def to_doc(self, encoder_ref: str | None = None) -> dict:
        doc = {"kind": self.kind, "arity": self.arity,
               "u": serialize.encode_array(self.decoder.u),
               "k_out": serialize.encode_array(self.decoder.k_out)}
        if encoder_ref is None:
            doc["encoder"] = self.encoder.to_doc()
        else:
            doc["encoder_ref"] = encoder_ref
        return doc


class RidgeReadoutPredicate(Predicate):
    """Frozen encoder plus a closed-form linear readout, clipped to [0, 1]."""

    kind = "rwtn_ridge"

    def __init__(self, encoder: RwtnEncoderParams, V_o, v_o: float, arity: int = 1):
        self.encoder = encoder
        self.V_o = np.asarray(V_o, dtype=np.float64).reshape(-1)
        self.v_o = float(v_o)
        if self.V_o.shape[0] != encoder.R:
            raise DimensionError("readout does not match encoder width")
        self.arity = arity
        self.dim = encoder.dim

    def prepare(self, X):
        return tanh_map(self.encoder.encode(np.asarray(X, dtype=np.float64)))

    def forward(self, ctx, rng=None):
        return np.clip(ctx @ self.V_o + self.v_o, 0.0, 1.0), None


class CrispTypePredicate(Predicate):
    """Argmax typing on the score block of a box grounding vector."""

    kind = "crisp_type"

    def __init__(self, class_index: int, n_classes: int):
        self.class_index = class_index
        self.n_classes = n_classes
        self.arity = 1
        self.dim = n_classes + 4

    def forward(self, ctx, rng=None):
        scores = ctx[:, :self.n_classes]
        return (np.argmax(scores, axis=1) == self.class_index).astype(np.float64), None


class CrispPartOfPredicate(Predicate):
    """Thresholded ``ir * max_ij w_ij x_i x'_j`` on pair vectors.

    With ``th_ir=None`` the raw product is returned, clipped to [0, 1].
    """

    kind = "crisp_part_of"

    def __init__(self, table: PartWholeTable, th_ir: float | None = 0.7):
        self.table = table
        self.th_ir = th_ir
        self.arity = 2
        self.dim = 2 * (table.n_classes + 4)

    def forward(self, ctx, rng=None):
        P = self.table.n_classes
        x, box = ctx[:, :P], ctx[:, P:P + 4]
        x2, box2 = ctx[:, P + 4:2 * P + 4], ctx[:, 2 * P + 4:]
        ir = inclusion_ratio_batch(box, box2)
        compat = np.max(x[:, :, None] * x2[:, None, :] * self.table.w, axis=(1, 2))
        score = np.clip(ir * compat, 0.0, 1.0)
        if self.th_ir is None:
            return score, None
        return (score >= self.th_ir).astype(np.float64), None


class ConstantPredicate(Predicate):
    kind = "constant"

    def __init__(self, value: float, arity: int = 1, dim: int | None = None):
        self.value = float(value)
        self.arity = arity
        self.dim = dim

    def forward(self, ctx, rng=None):
        return np.full(ctx.shape[0], self.value), None


class TablePredicate(Predicate):
    """Truth looked up from a callable on each input row; for tests and oracles."""

    kind = "table"

    def __init__(self, fn, arity: int = 1, dim: int | None = None):
        self.fn = fn
        self.arity = arity
        self.dim = dim

    def forward(self, ctx, rng=None):
        return np.array([float(self.fn(row)) for row in ctx]), None


# -- parameter accounting --------------------------------------------------

def ltn_param_count(n: int, m: int, k: int) -> int:
    mn = n * m
    return (mn * mn + mn + 2) * k


def rwtn_param_count(R: int, t: int) -> int:
    return (R + 1) * t


def shared_space(n: int, m: int, R: int, t: int, i: int) -> tuple[int, int]:
    """Stored values for ``i`` RWTN classifiers: (separate encoders, one shared encoder)."""
    mn = n * m
    encoder = (mn * mn + mn) * R
    decoder = rwtn_param_count(R, t)
    return (encoder + decoder) * i, encoder + decoder * i


def count_learnable(pred: Predicate) -> int:
    return sum(int(a.size) for a in pred.learnable().values())
