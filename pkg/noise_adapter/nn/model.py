"""Residual Noise Adapter: a 41 -> 128 -> 128 -> 64 -> 32 MLP whose output is
added to the noisy sub-vector x[9:] before a softmax.

Each hidden block is Linear -> LayerNorm -> GELU (-> Dropout on the first two).
Gradients are derived by hand for this fixed architecture; everything runs in
float64.
"""
import hashlib
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
from scipy.special import ndtr, xlogy

from ..errors import DomainError, NumericError, ParameterError, UsageError

logger = logging.getLogger(__name__)

INPUT_DIM = 41
OUTPUT_DIM = 32
NOISY_OFFSET = 9
LN_EPS = 1e-5
DROPOUT_RATE = 0.10

# (name, fan_in, fan_out, dropout after block)
BLOCKS: Tuple[Tuple[str, int, int, bool], ...] = (
    ("block1", INPUT_DIM, 128, True),
    ("block2", 128, 128, True),
    ("block3", 128, 64, False),
)
HEAD = ("head", 64, OUTPUT_DIM)

TENSOR_NAMES: Tuple[str, ...] = tuple(
    f"{block}.{part}" for block, *_ in BLOCKS for part in ("W", "b", "ln_gamma", "ln_beta")
) + ("head.W", "head.b")

HEAD_TENSORS = frozenset({"head.W", "head.b"})
BLOCK3_AND_HEAD_TENSORS = HEAD_TENSORS | {f"block3.{p}" for p in ("W", "b", "ln_gamma", "ln_beta")}

Gradients = Dict[str, np.ndarray]

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class RnaParams:
    '''Named parameter tensors; `version` bumps on every in-place update'''

    def __init__(self, tensors: Dict[str, np.ndarray]):
        missing = set(TENSOR_NAMES) - set(tensors)
        extra = set(tensors) - set(TENSOR_NAMES)
        if missing or extra:
            raise ParameterError(f"parameter names mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        self.tensors: Dict[str, np.ndarray] = {
            name: np.array(tensors[name], dtype=np.float64) for name in TENSOR_NAMES
        }
        for name, expected in expected_shapes().items():
            if self.tensors[name].shape != expected:
                raise ParameterError(f"{name} has shape {self.tensors[name].shape}, expected {expected}")
        self.version = 0

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def names(self) -> Tuple[str, ...]:
        return TENSOR_NAMES

    def items(self) -> Iterable[Tuple[str, np.ndarray]]:
        return ((name, self.tensors[name]) for name in TENSOR_NAMES)

    def copy(self) -> "RnaParams":
        return RnaParams({name: t.copy() for name, t in self.tensors.items()})

    def bump(self) -> None:
        self.version += 1

    def checksum(self, names: Optional[Iterable[str]] = None) -> str:
        digest = hashlib.sha256()
        for name in names if names is not None else TENSOR_NAMES:
            digest.update(name.encode("utf-8"))
            digest.update(np.ascontiguousarray(self.tensors[name]).tobytes())
        return digest.hexdigest()

    def n_parameters(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))


def expected_shapes() -> Dict[str, Tuple[int, ...]]:
    shapes: Dict[str, Tuple[int, ...]] = {}
    for name, fan_in, fan_out, _ in BLOCKS:
        shapes[f"{name}.W"] = (fan_out, fan_in)
        shapes[f"{name}.b"] = (fan_out,)
        shapes[f"{name}.ln_gamma"] = (fan_out,)
        shapes[f"{name}.ln_beta"] = (fan_out,)
    shapes["head.W"] = (HEAD[2], HEAD[1])
    shapes["head.b"] = (HEAD[2],)
    return shapes


@dataclass
class BlockCache:
    h_in: np.ndarray
    nhat: np.ndarray
    inv_std: np.ndarray
    pre_gelu: np.ndarray
    mask: Optional[np.ndarray]


@dataclass
class ForwardTrace:
    '''Everything backward needs from one train-mode forward pass'''
    params: RnaParams
    version: int
    x: np.ndarray
    blocks: List[BlockCache] = field(default_factory=list)
    h_last: Optional[np.ndarray] = None
    yhat: Optional[np.ndarray] = None

    @property
    def batch_size(self) -> int:
        return self.x.shape[0]


def init_params(seed: int) -> RnaParams:
    '''Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); LayerNorm gamma=1, beta=0'''
    rng = np.random.default_rng(seed)
    tensors: Dict[str, np.ndarray] = {}
    for name, fan_in, fan_out, _ in BLOCKS + ((HEAD[0], HEAD[1], HEAD[2], False),):
        bound = 1.0 / np.sqrt(fan_in)
        tensors[f"{name}.W"] = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        tensors[f"{name}.b"] = rng.uniform(-bound, bound, size=fan_out)
        if name != HEAD[0]:
            tensors[f"{name}.ln_gamma"] = np.ones(fan_out)
            tensors[f"{name}.ln_beta"] = np.zeros(fan_out)
    return RnaParams(tensors)


def gelu(u: np.ndarray) -> np.ndarray:
    '''Exact GELU u * Phi(u)'''
    return u * ndtr(u)


def gelu_grad(u: np.ndarray) -> np.ndarray:
    return ndtr(u) + u * _INV_SQRT_2PI * np.exp(-0.5 * u * u)


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def forward(
    params: RnaParams,
    x: np.ndarray,
    mode: str = "eval",
    rng: Optional[np.random.Generator] = None,
    dropout_rate: float = DROPOUT_RATE,
) -> Tuple[np.ndarray, Optional[ForwardTrace]]:
    """yhat = softmax(x[9:] + f(x)).

    `x` may be one feature vector or a (B, 41) batch. In "train" mode dropout
    (inverted, keep probability 1 - dropout_rate) is drawn from `rng` and a
    ForwardTrace is returned; "eval" mode is deterministic and returns None.
    """
    if mode not in ("train", "eval"):
        raise ParameterError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != INPUT_DIM:
        raise ParameterError(f"expected input of width {INPUT_DIM}, got shape {x.shape}")
    if not np.all(np.isfinite(xb)):
        raise NumericError("non-finite value in model input")

    train = mode == "train"
    use_dropout = train and dropout_rate > 0
    if use_dropout and rng is None:
        raise UsageError("train-mode forward with dropout needs an rng")
    keep = 1.0 - dropout_rate

    trace = ForwardTrace(params=params, version=params.version, x=xb) if train else None
    h = xb
    for name, _, _, has_dropout in BLOCKS:
        a = h @ params[f"{name}.W"].T + params[f"{name}.b"]
        mu = a.mean(axis=1, keepdims=True)
        var = a.var(axis=1, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + LN_EPS)
        nhat = (a - mu) * inv_std
        pre = params[f"{name}.ln_gamma"] * nhat + params[f"{name}.ln_beta"]
        out = gelu(pre)
        mask = None
        if use_dropout and has_dropout:
            mask = (rng.random(out.shape) < keep) / keep
            out = out * mask
        if trace is not None:
            trace.blocks.append(BlockCache(h_in=h, nhat=nhat, inv_std=inv_std, pre_gelu=pre, mask=mask))
        h = out

    residual = h @ params["head.W"].T + params["head.b"]
    yhat = softmax(xb[:, NOISY_OFFSET:] + residual)
    if trace is not None:
        trace.h_last = h
        trace.yhat = yhat
    return (yhat[0] if single else yhat), trace


def kl_batchmean_loss(y_true: np.ndarray, yhat: np.ndarray) -> float:
    '''(1/B) sum_b sum_i y (ln y - ln yhat), with 0 ln 0 = 0'''
    y = np.atleast_2d(np.asarray(y_true, dtype=np.float64))
    q = np.atleast_2d(np.asarray(yhat, dtype=np.float64))
    if y.shape != q.shape:
        raise ParameterError(f"shape mismatch {y.shape} vs {q.shape}")
    if np.any(q <= 0):
        raise DomainError("predicted distribution must be strictly positive")
    return float((xlogy(y, y) - xlogy(y, q)).sum() / y.shape[0])


def backward(
    trace: Optional[ForwardTrace],
    y_true: np.ndarray,
    trainable: Optional[Iterable[str]] = None,
) -> Gradients:
    """Exact gradients of kl_batchmean_loss w.r.t. every tensor.

    Tensors outside `trainable` (default: all) get all-zero gradients.
    """
    if trace is None or trace.yhat is None:
        raise UsageError("backward needs the trace of a train-mode forward pass")
    if trace.params.version != trace.version:
        raise UsageError("stale trace: parameters changed since the forward pass")
    params = trace.params
    y = np.atleast_2d(np.asarray(y_true, dtype=np.float64))
    if y.shape != trace.yhat.shape:
        raise ParameterError(f"target shape {y.shape} does not match prediction {trace.yhat.shape}")

    grads: Gradients = {}
    # softmax + KL collapse to (yhat - y) / B at the logits
    dz = (trace.yhat - y) / trace.batch_size
    grads["head.W"] = dz.T @ trace.h_last
    grads["head.b"] = dz.sum(axis=0)
    dh = dz @ params["head.W"]

    for (name, _, _, _), cache in reversed(list(zip(BLOCKS, trace.blocks))):
        dout = dh * cache.mask if cache.mask is not None else dh
        dpre = dout * gelu_grad(cache.pre_gelu)
        grads[f"{name}.ln_gamma"] = (dpre * cache.nhat).sum(axis=0)
        grads[f"{name}.ln_beta"] = dpre.sum(axis=0)
        dnhat = dpre * params[f"{name}.ln_gamma"]
        da = cache.inv_std * (
            dnhat
            - dnhat.mean(axis=1, keepdims=True)
            - cache.nhat * (dnhat * cache.nhat).mean(axis=1, keepdims=True)
        )
        grads[f"{name}.W"] = da.T @ cache.h_in
        grads[f"{name}.b"] = da.sum(axis=0)
        dh = da @ params[f"{name}.W"]

    if trainable is not None:
        allowed = set(trainable)
        unknown = allowed - set(TENSOR_NAMES)
        if unknown:
            raise ParameterError(f"unknown tensor names {sorted(unknown)}")
        for name in TENSOR_NAMES:
            if name not in allowed:
                grads[name] = np.zeros_like(grads[name])
    return {name: grads[name] for name in TENSOR_NAMES}


def predict(params: RnaParams, x: np.ndarray) -> np.ndarray:
    '''Eval-mode batch prediction'''
    yhat, _ = forward(params, np.atleast_2d(x), mode="eval")
    return yhat
