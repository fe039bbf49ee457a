"""AdamW pretraining of the encoder under a configured loss variant.

One iteration = one optimizer step on one batch. The iteration budget
follows the dataset-size rule (auto: 200 below 100,000 instances, 600 at or
above). Non-finite gradients or losses abort with NonFiniteGradientError
carrying the iteration index instead of propagating NaNs.

Checkpoint format (little-endian): magic "CATTCKPT", version u16, a
length-prefixed JSON header echoing the EncoderConfig and the tensor
declaration order, then raw float64 tensor bytes. A human-readable JSON
sidecar (<path>.json) records shapes and sha256 hashes. load(save(x)) is
bit-exact for parameters, running stats, and optimizer moments.
"""

import hashlib
import json
import math
import struct
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import InstanceSequence, make_batches
from .encoder import EncoderConfig, EncoderState, backward, forward, init_params, \
    named_parameters
from .errors import CheckpointError, NonFiniteGradientError
from .losses import LossConfig, loss_forward
from .seeding import derive_seed

CKPT_MAGIC = b"CATTCKPT"
CKPT_VERSION = 1

AUTO_ITERATION_THRESHOLD = 100_000
AUTO_ITERATIONS_SMALL = 200
AUTO_ITERATIONS_LARGE = 600


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 8
    temperature: float = 0.5
    variant: str = "mp_xent"
    n_iterations: int | str = "auto"
    weight_decay: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    seq_len: int = 200
    per_sequence_mask: bool = False

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.adam_beta1 < 1.0:
            raise ValueError(f"adam_beta1 must be in (0, 1), got {self.adam_beta1}")
        if not 0.0 < self.adam_beta2 < 1.0:
            raise ValueError(f"adam_beta2 must be in (0, 1), got {self.adam_beta2}")
        if not self.adam_eps > 0:
            raise ValueError(f"adam_eps must be positive, got {self.adam_eps}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be nonnegative, got {self.weight_decay}")
        if self.seq_len < 3:
            raise ValueError(f"seq_len must be >= 3, got {self.seq_len}")
        if self.n_iterations != "auto":
            if not isinstance(self.n_iterations, int) or self.n_iterations < 1:
                raise ValueError(
                    f"n_iterations must be 'auto' or a positive integer, "
                    f"got {self.n_iterations!r}")
        # reuse the loss module's temperature/variant validation
        LossConfig(self.temperature, self.variant)

    def loss_config(self, shuffle_seed: int = 0) -> LossConfig:
        return LossConfig(self.temperature, self.variant, shuffle_seed,
                          self.per_sequence_mask)


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0


@dataclass
class IterationRecord:
    iteration: int
    loss: float
    wall_ms: float


@dataclass
class RunLog:
    records: list[IterationRecord] = field(default_factory=list)
    total_seconds: float = 0.0
    final_optimizer: OptimizerState | None = None

    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])

    def to_jsonl(self) -> str:
        lines = [json.dumps({"iteration": r.iteration, "loss": r.loss,
                             "wall_ms": r.wall_ms}) for r in self.records]
        return "\n".join(lines) + "\n"


def resolve_iterations(dataset_size: int, requested: int | str) -> int:
    """Dataset-size rule: auto is 200 below 100,000 instances, 600 otherwise."""
    if dataset_size < 1:
        raise ValueError(f"dataset_size must be >= 1, got {dataset_size}")
    if requested == "auto":
        return AUTO_ITERATIONS_SMALL if dataset_size < AUTO_ITERATION_THRESHOLD \
            else AUTO_ITERATIONS_LARGE
    requested = int(requested)
    if requested < 1:
        raise ValueError(f"requested iterations must be >= 1, got {requested}")
    return requested


def init_optimizer(params: dict[str, np.ndarray]) -> OptimizerState:
    return OptimizerState(
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
        step=0,
    )


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
               opt: OptimizerState, cfg: TrainConfig
               ) -> tuple[dict[str, np.ndarray], OptimizerState]:
    """One decoupled-weight-decay Adam step with bias correction (in place).

    m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2
    mhat = m/(1-b1^t);     vhat = v/(1-b2^t)
    theta <- theta - lr*(mhat/(sqrt(vhat)+eps) + wd*theta)
    """
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise NonFiniteGradientError(opt.step + 1, detail=f"parameter {name}")
    t = opt.step + 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads[name]
        m = opt.m[name]
        v = opt.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        update = (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)
        if cfg.weight_decay:
            update = update + cfg.weight_decay * p
        p -= cfg.learning_rate * update
    opt.step = t
    return params, opt


def _batch_stream(seq: InstanceSequence, cfg: TrainConfig):
    epoch = 0
    while True:
        shuffle = derive_seed(cfg.seed, "shuffle", epoch)
        yield from make_batches(seq, cfg.seq_len, cfg.batch_size, shuffle)
        epoch += 1


def pretrain(seq: InstanceSequence, enc_cfg: EncoderConfig, train_cfg: TrainConfig
             ) -> tuple[EncoderState, RunLog]:
    """Self-supervised pretraining loop; deterministic given the seeds.

    Every iteration draws the next batch, runs a train-mode forward, the
    configured loss, the exact backward, and one AdamW step. The returned
    RunLog carries the final OptimizerState so callers can checkpoint
    moments.
    """
    n_iter = resolve_iterations(seq.n_instances, train_cfg.n_iterations)
    state = init_params(enc_cfg)
    params = dict(named_parameters(state))
    opt = init_optimizer(params)
    log = RunLog()
    stream = _batch_stream(seq, train_cfg)

    start = time.perf_counter()
    for it in range(1, n_iter + 1):
        t0 = time.perf_counter()
        batch = next(stream)
        with np.errstate(over="ignore", invalid="ignore"):
            z, cache = forward(state, batch.data)
        if not np.isfinite(z).all():
            raise NonFiniteGradientError(it, detail="non-finite embeddings")
        # fresh negative shuffling each step, still fully seeded
        loss_cfg = train_cfg.loss_config(derive_seed(train_cfg.seed, "loss", it))
        out = loss_forward(z, loss_cfg)
        if not math.isfinite(out.value):
            raise NonFiniteGradientError(it, out.value, detail="loss value")
        grads, _ = backward(state, cache, out.grad)
        for name, g in grads.items():
            if not np.isfinite(g).all():
                raise NonFiniteGradientError(it, out.value, detail=f"parameter {name}")
        adamw_step(params, grads, opt, train_cfg)
        log.records.append(IterationRecord(it, out.value,
                                           (time.perf_counter() - t0) * 1e3))
    log.total_seconds = time.perf_counter() - start
    log.final_optimizer = opt
    return state, log


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def _state_tensors(state: EncoderState) -> list[tuple[str, np.ndarray]]:
    """All persistent encoder tensors (params + running stats) in declaration order."""
    out = []
    for i, blk in enumerate(state.blocks):
        out.extend([
            (f"block{i}.weight", blk.weight),
            (f"block{i}.bias", blk.bias),
            (f"block{i}.bn_gamma", blk.bn_gamma),
            (f"block{i}.bn_beta", blk.bn_beta),
            (f"block{i}.bn_running_mean", blk.bn_running_mean),
            (f"block{i}.bn_running_var", blk.bn_running_var),
        ])
    out.append(("proj.weight", state.proj_weight))
    out.append(("proj.bias", state.proj_bias))
    return out


def _expected_shapes(cfg: EncoderConfig) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    fan_in = cfg.input_dim
    for i, width in enumerate(cfg.hidden_dims):
        shapes[f"block{i}.weight"] = (width, fan_in)
        for part in ("bias", "bn_gamma", "bn_beta", "bn_running_mean", "bn_running_var"):
            shapes[f"block{i}.{part}"] = (width,)
        fan_in = width
    shapes["proj.weight"] = (cfg.output_dim, fan_in)
    shapes["proj.bias"] = (cfg.output_dim,)
    return shapes


def save_checkpoint(state: EncoderState, opt: OptimizerState | None, path) -> None:
    """Serialize encoder state (and optimizer moments, if given) plus a JSON sidecar."""
    tensors = list(_state_tensors(state))
    if opt is not None:
        for name in opt.m:
            tensors.append((f"opt.m.{name}", opt.m[name]))
        for name in opt.v:
            tensors.append((f"opt.v.{name}", opt.v[name]))
    header = {
        "config": asdict(state.config),
        "mode": state.mode,
        "optimizer_step": None if opt is None else opt.step,
        "dtype": "float64",
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in tensors],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    path = str(path)
    sidecar: dict = {"magic": CKPT_MAGIC.decode(), "version": CKPT_VERSION,
                     "config": header["config"], "dtype": "float64", "tensors": []}
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<HQ", CKPT_VERSION, len(header_bytes)))
        fh.write(header_bytes)
        for name, arr in tensors:
            blob = np.ascontiguousarray(arr, dtype="<f8").tobytes()
            fh.write(blob)
            sidecar["tensors"].append({
                "name": name, "shape": list(arr.shape),
                "sha256": hashlib.sha256(blob).hexdigest(),
            })
    with open(path, "rb") as fh:
        sidecar["file_sha256"] = hashlib.sha256(fh.read()).hexdigest()
    with open(path + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path, expected_config: EncoderConfig | None = None
                    ) -> tuple[EncoderState, OptimizerState | None]:
    """Load a checkpoint; bit-exact inverse of save_checkpoint."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot open {path}: {exc}") from exc
    prefix = len(CKPT_MAGIC) + struct.calcsize("<HQ")
    if len(blob) < prefix or blob[:len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, header_len = struct.unpack_from("<HQ", blob, len(CKPT_MAGIC))
    if version != CKPT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    if len(blob) < prefix + header_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(blob[prefix:prefix + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc

    cfg_dict = dict(header["config"])
    cfg_dict["hidden_dims"] = tuple(cfg_dict["hidden_dims"])
    cfg = EncoderConfig(**cfg_dict)
    if expected_config is not None:
        for fld, want in asdict(expected_config).items():
            got = getattr(cfg, fld)
            if (tuple(got) if isinstance(got, (list, tuple)) else got) != \
                    (tuple(want) if isinstance(want, (list, tuple)) else want):
                raise CheckpointError(
                    f"{path}: checkpoint field {fld!r} is {got!r}, expected {want!r}")

    expected = _expected_shapes(cfg)
    arrays: dict[str, np.ndarray] = {}
    offset = prefix + header_len
    for entry in header["tensors"]:
        name, shape = entry["name"], tuple(entry["shape"])
        base = name.split(".", 2)[-1] if name.startswith("opt.") else name
        if base in expected and shape != expected[base]:
            raise CheckpointError(
                f"{path}: tensor {name!r} has shape {shape}, config expects "
                f"{expected[base]}")
        count = int(np.prod(shape)) if shape else 1
        nbytes = 8 * count
        if offset + nbytes > len(blob):
            raise CheckpointError(f"{path}: truncated tensor data at {name!r}")
        arrays[name] = np.frombuffer(blob, dtype="<f8", count=count,
                                     offset=offset).reshape(shape).copy()
        offset += nbytes
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} trailing bytes")
    missing = [n for n in expected if n not in arrays]
    if missing:
        raise CheckpointError(f"{path}: missing tensors {missing}")

    from .encoder import BlockParams  # local import to keep module deps one-way
    blocks = []
    for i in range(len(cfg.hidden_dims)):
        blocks.append(BlockParams(
            weight=arrays[f"block{i}.weight"],
            bias=arrays[f"block{i}.bias"],
            bn_gamma=arrays[f"block{i}.bn_gamma"],
            bn_beta=arrays[f"block{i}.bn_beta"],
            bn_running_mean=arrays[f"block{i}.bn_running_mean"],
            bn_running_var=arrays[f"block{i}.bn_running_var"],
        ))
    state = EncoderState(cfg, blocks, arrays["proj.weight"], arrays["proj.bias"],
                         mode=header.get("mode", "train"))

    opt = None
    if header.get("optimizer_step") is not None:
        m = {n[len("opt.m."):]: a for n, a in arrays.items() if n.startswith("opt.m.")}
        v = {n[len("opt.v."):]: a for n, a in arrays.items() if n.startswith("opt.v.")}
        opt = OptimizerState(m=m, v=v, step=int(header["optimizer_step"]))
    return state, opt
