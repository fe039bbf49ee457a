"""Pointwise feature encoder: per-instance affine blocks + BatchNorm + ReLU.

A kernel-size-1 1D convolution over the feature axis is exactly a per-
instance affine map, so the whole encoder operates on the flattened
(N*T) x D matrix: each hidden block is affine -> batch norm (statistics
pooled over the full N*T axis) -> ReLU, and the final block is a plain
affine projection to the representation dimension F with no BN/ReLU.

Batch statistics use the biased (population) variance, and running stats are
updated with the same convention:
    running <- (1 - momentum) * running + momentum * batch_stat
All arithmetic is float64. backward() computes exact reverse-mode gradients,
including the full dependence of the batch statistics on the inputs (not the
frozen-stat approximation).
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class EncoderConfig:
    input_dim: int
    hidden_dims: tuple[int, ...] = (128, 64, 32)
    output_dim: int = 320
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        if any(d < 1 for d in dims):
            raise ValueError(f"all dimensions must be >= 1, got {dims}")
        if not 0.0 < self.bn_momentum <= 1.0:
            raise ValueError(f"bn_momentum must be in (0, 1], got {self.bn_momentum}")
        if not self.bn_eps > 0:
            raise ValueError(f"bn_eps must be positive, got {self.bn_eps}")


@dataclass
class BlockParams:
    """One hidden block: affine weights plus batch-norm parameters and stats."""

    weight: np.ndarray           # out x in
    bias: np.ndarray             # out
    bn_gamma: np.ndarray
    bn_beta: np.ndarray
    bn_running_mean: np.ndarray
    bn_running_var: np.ndarray


@dataclass
class EncoderState:
    config: EncoderConfig
    blocks: list[BlockParams]
    proj_weight: np.ndarray      # F x last_hidden
    proj_bias: np.ndarray        # F
    mode: str = "train"
    forward_count: int = 0       # ties caches to the forward that made them


@dataclass
class ForwardCache:
    """Bookkeeping for one train-mode forward, consumed by exactly one backward."""

    block_inputs: list[np.ndarray]
    block_xhat: list[np.ndarray]
    block_inv_std: list[np.ndarray]
    block_relu_mask: list[np.ndarray]
    proj_input: np.ndarray
    input_shape: tuple[int, int, int]
    forward_index: int
    consumed: bool = False


def init_params(cfg: EncoderConfig) -> EncoderState:
    """Seeded init: weights uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)), biases 0,
    gamma 1, beta 0, running mean 0, running var 1, mode train."""
    rng = np.random.default_rng(cfg.init_seed)
    blocks = []
    fan_in = cfg.input_dim
    for width in cfg.hidden_dims:
        bound = 1.0 / np.sqrt(fan_in)
        blocks.append(BlockParams(
            weight=rng.uniform(-bound, bound, size=(width, fan_in)),
            bias=np.zeros(width),
            bn_gamma=np.ones(width),
            bn_beta=np.zeros(width),
            bn_running_mean=np.zeros(width),
            bn_running_var=np.ones(width),
        ))
        fan_in = width
    bound = 1.0 / np.sqrt(fan_in)
    proj_weight = rng.uniform(-bound, bound, size=(cfg.output_dim, fan_in))
    proj_bias = np.zeros(cfg.output_dim)
    return EncoderState(cfg, blocks, proj_weight, proj_bias, mode="train")


def named_parameters(state: EncoderState) -> list[tuple[str, np.ndarray]]:
    """Learnable parameters in declaration order (running stats excluded)."""
    out = []
    for i, blk in enumerate(state.blocks):
        out.append((f"block{i}.weight", blk.weight))
        out.append((f"block{i}.bias", blk.bias))
        out.append((f"block{i}.bn_gamma", blk.bn_gamma))
        out.append((f"block{i}.bn_beta", blk.bn_beta))
    out.append(("proj.weight", state.proj_weight))
    out.append(("proj.bias", state.proj_bias))
    return out


def parameter_count(state: EncoderState) -> int:
    return sum(int(p.size) for _, p in named_parameters(state))


def forward(state: EncoderState, x: np.ndarray
            ) -> tuple[np.ndarray, ForwardCache | None]:
    """Map an N x T x D batch to N x T x F embeddings.

    Train mode uses batch statistics and updates running stats (the one
    mutation this module performs); eval mode uses running stats and is a
    pure function. The cache is returned in train mode only.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise DataError(f"input must be N x T x D, got shape {x.shape}")
    n, t, d = x.shape
    if d != state.config.input_dim:
        raise DataError(
            f"input dimension {d} does not match encoder input_dim "
            f"{state.config.input_dim}")
    train = state.mode == "train"
    eps = state.config.bn_eps
    mom = state.config.bn_momentum

    h = x.reshape(n * t, d)
    block_inputs, block_xhat, block_inv_std, block_masks = [], [], [], []
    for blk in state.blocks:
        block_inputs.append(h)
        pre = h @ blk.weight.T + blk.bias
        if train:
            mu = pre.mean(axis=0)
            var = pre.var(axis=0)            # biased (population) variance
            blk.bn_running_mean = (1.0 - mom) * blk.bn_running_mean + mom * mu
            blk.bn_running_var = (1.0 - mom) * blk.bn_running_var + mom * var
        else:
            mu = blk.bn_running_mean
            var = blk.bn_running_var
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = (pre - mu) * inv_std
        bn_out = blk.bn_gamma * xhat + blk.bn_beta
        mask = bn_out > 0.0
        h = np.where(mask, bn_out, 0.0)
        block_xhat.append(xhat)
        block_inv_std.append(inv_std)
        block_masks.append(mask)

    z = (h @ state.proj_weight.T + state.proj_bias).reshape(n, t, -1)
    if not train:
        return z, None
    state.forward_count += 1
    cache = ForwardCache(block_inputs, block_xhat, block_inv_std, block_masks,
                         proj_input=h, input_shape=(n, t, d),
                         forward_index=state.forward_count)
    return z, cache


def backward(state: EncoderState, cache: ForwardCache | None, grad_z: np.ndarray
             ) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Exact gradients for every learnable parameter and for the input.

    Requires the cache of the immediately preceding train-mode forward; a
    cache is single-use.
    """
    if cache is None:
        raise DataError("backward needs the cache from a train-mode forward")
    if cache.consumed:
        raise DataError("forward cache already consumed by a previous backward")
    if cache.forward_index != state.forward_count:
        raise DataError("stale cache: another forward ran after this cache was made")
    cache.consumed = True

    n, t, d = cache.input_shape
    f = state.proj_weight.shape[0]
    g = np.asarray(grad_z, dtype=np.float64).reshape(n * t, f)
    m_rows = n * t

    grads: dict[str, np.ndarray] = {
        "proj.weight": g.T @ cache.proj_input,
        "proj.bias": g.sum(axis=0),
    }
    dh = g @ state.proj_weight

    for i in reversed(range(len(state.blocks))):
        blk = state.blocks[i]
        dout = np.where(cache.block_relu_mask[i], dh, 0.0)
        xhat = cache.block_xhat[i]
        inv_std = cache.block_inv_std[i]
        grads[f"block{i}.bn_gamma"] = (dout * xhat).sum(axis=0)
        grads[f"block{i}.bn_beta"] = dout.sum(axis=0)
        dxhat = dout * blk.bn_gamma
        # Full batch-norm backward: the batch mean and variance depend on
        # every row, so the naive dxhat*inv_std picks up two correction terms.
        dpre = (inv_std / m_rows) * (
            m_rows * dxhat
            - dxhat.sum(axis=0)
            - xhat * (dxhat * xhat).sum(axis=0)
        )
        grads[f"block{i}.weight"] = dpre.T @ cache.block_inputs[i]
        grads[f"block{i}.bias"] = dpre.sum(axis=0)
        dh = dpre @ blk.weight

    return grads, dh.reshape(n, t, d)


def set_mode(state: EncoderState, mode: str) -> EncoderState:
    """Toggle train/eval. Eval mode freezes running statistics."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    state.mode = mode
    return state
