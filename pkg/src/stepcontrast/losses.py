"""Contrastive losses over all time steps of a batch, with analytic gradients.

An embedding batch is an N x T x F tensor viewed as M = N*T flattened rows
(row j = i*T + t). Cosine similarities between all row pairs are
exponentiated at temperature tau: S[a,b] = exp(cos(z_a, z_b)/tau).

Variants (LossConfig.variant):

  mp_xent               Multiple positives. Anchors are interior rows
                        j = 1..M-2 (0-indexed; the first and last row have
                        only one neighbor and are skipped):
                          num(j) = S[j,j-1] + S[j,j+1]
                          D1(j)  = sum_{k not in {j-1,j,j+1}} S[j,k]
                          D2(j)  = sum_{l not in {j-1,j}}     S[j-1,l]
                          l(j)   = -log(num / (D1 + D2))
                        L is the mean over anchors. Adjacency deliberately
                        crosses sequence boundaries inside the batch; set
                        per_sequence_mask to keep anchors within sequences.
  mp_xent_shuffled      Same numerator; the denominator sums run against a
                        seeded permutation pi of the rows:
                        D1'(j) = sum_{k not in {j-1,j,j+1}} S[j, pi(k)], and
                        analogously for D2'. Identity pi reproduces mp_xent
                        bit-for-bit (same code path, same summation order).
  single_positive       Anchors j = 0..M-2, l(j) = -log(S[j,j+1] /
                        sum_{k != j} S[j,k]).
  single_positive_no_neg  Alignment only: l(j) = -cos(z_j, z_{j+1})/tau.

Gradients are analytic closed forms through exp, cosine, and the log-ratio
(no autograd tape); every variant is verified against central finite
differences by loss_gradient_check. All computation is float64 with a fixed
summation order, so results are bit-reproducible run to run.
"""

import math
from dataclasses import dataclass

import numpy as np

NORM_FLOOR = 1e-12
MIN_TEMPERATURE = 0.01

VARIANTS = ("single_positive_no_neg", "single_positive", "mp_xent",
            "mp_xent_shuffled")


@dataclass(frozen=True)
class LossConfig:
    temperature: float
    variant: str = "mp_xent"
    shuffle_seed: int = 0
    per_sequence_mask: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        # exp(cos/tau) with cos in [-1,1] stays finite iff tau is not tiny;
        # exp(100) ~ 2.7e43 is the worst case permitted here.
        if not self.temperature >= MIN_TEMPERATURE:
            raise ValueError(
                f"temperature must be >= {MIN_TEMPERATURE}, got {self.temperature}")


@dataclass
class LossOutput:
    """Loss value, gradient w.r.t. the embeddings, and per-anchor terms."""

    value: float
    grad: np.ndarray          # N x T x F, same shape as the input
    per_anchor: np.ndarray    # one entry per anchor row
    floored_rows: int = 0     # rows whose norm hit NORM_FLOOR (diagnostics)


# ---------------------------------------------------------------------------
# Shared pieces
# ---------------------------------------------------------------------------

def _as_batch(z: np.ndarray) -> np.ndarray:
    z = np.ascontiguousarray(z, dtype=np.float64)
    if z.ndim != 3:
        raise ValueError(f"embedding batch must be N x T x F, got shape {z.shape}")
    n, t, f = z.shape
    if n < 1 or t < 3 or f < 1:
        raise ValueError(f"need N >= 1, T >= 3, F >= 1, got {z.shape}")
    if not np.isfinite(z).all():
        raise ValueError("embedding batch contains non-finite values")
    return z


def _unit_rows(flat: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Row-normalize; zero-norm rows are floored rather than made NaN."""
    norms = np.linalg.norm(flat, axis=1)
    floored = int(np.count_nonzero(norms < NORM_FLOOR))
    safe = np.maximum(norms, NORM_FLOOR)
    return flat / safe[:, None], safe, floored


def _cosine_matrix(flat_hat: np.ndarray) -> np.ndarray:
    c = flat_hat @ flat_hat.T
    np.clip(c, -1.0, 1.0, out=c)
    np.fill_diagonal(c, 1.0)
    return c


def cosine_similarity_matrix(z: np.ndarray, temperature: float) -> np.ndarray:
    """Exp-scaled cosine similarities S[a,b] = exp(cos(z_a, z_b)/temperature).

    Accepts an N x T x F batch or an already-flattened M x F matrix.
    S is symmetric with diagonal exp(1/temperature). Zero-norm rows get a
    norm floor of NORM_FLOOR instead of dividing by zero.
    """
    z = np.asarray(z, dtype=np.float64)
    flat = z.reshape(-1, z.shape[-1])
    flat_hat, _, _ = _unit_rows(flat)
    return np.exp(_cosine_matrix(flat_hat) / temperature)


def _anchor_indices(m: int, t: int, variant: str, per_sequence_mask: bool
                    ) -> np.ndarray:
    """Anchor rows. mp_xent needs both neighbors, single_* only the right one."""
    if variant in ("mp_xent", "mp_xent_shuffled"):
        if per_sequence_mask:
            pos = np.arange(m) % t
            return np.flatnonzero((pos >= 1) & (pos <= t - 2))
        return np.arange(1, m - 1)
    if per_sequence_mask:
        return np.flatnonzero(np.arange(m) % t <= t - 2)
    return np.arange(0, m - 1)


def _grad_from_gc(g_c: np.ndarray, flat: np.ndarray, flat_hat: np.ndarray,
                  norms: np.ndarray) -> np.ndarray:
    """Chain dL/dC (diagonal already zeroed) back to dL/dz.

    C = Zhat Zhat^T gives dL/dZhat = (G + G^T) Zhat; row normalization then
    projects out the radial component and divides by the row norm, which is
    exactly why every gradient row is orthogonal to its embedding row.
    """
    gz = (g_c + g_c.T) @ flat_hat
    radial = np.einsum("ij,ij->i", gz, flat_hat)
    return (gz - radial[:, None] * flat_hat) / norms[:, None]


# ---------------------------------------------------------------------------
# MP-Xent, matrix form (shared by the plain and shuffled variants)
# ---------------------------------------------------------------------------

def _mpxent_impl(z: np.ndarray, cfg: LossConfig, perm: np.ndarray) -> LossOutput:
    z = _as_batch(z)
    n, t, f = z.shape
    m = n * t
    if m < 4:
        raise ValueError(f"mp_xent needs M = N*T >= 4, got M={m}")
    flat = z.reshape(m, f)
    flat_hat, norms, floored = _unit_rows(flat)
    tau = cfg.temperature

    c = _cosine_matrix(flat_hat)
    s = np.exp(c / tau)
    sp = s[:, perm]                      # S'[r,k] = S[r, perm[k]]
    row_sums_p = sp.sum(axis=1)

    anchors = _anchor_indices(m, t, cfg.variant, cfg.per_sequence_mask)
    a = anchors
    num = s[a, a - 1] + s[a, a + 1]
    d1 = row_sums_p[a] - sp[a, a - 1] - sp[a, a] - sp[a, a + 1]
    d2 = row_sums_p[a - 1] - sp[a - 1, a - 1] - sp[a - 1, a]
    den = d1 + d2
    per_anchor = -np.log(num / den)
    value = float(per_anchor.mean())

    # Gradient: accumulate dL/dS as a weight matrix W on the unpermuted
    # S-plane (a weight on S'[r,k] lands on S[r, perm[k]]), then chain
    # through S = exp(C/tau). Entries can collide (e.g. anchor j's D1 and
    # anchor j+1's D2 touch the same cell), hence np.add.at.
    n_anchors = a.shape[0]
    inv_num = 1.0 / num
    inv_den = 1.0 / den
    w = np.zeros((m, m))
    row_coef = np.zeros(m)
    np.add.at(row_coef, a, inv_den)          # D1' spreads over row j
    np.add.at(row_coef, a - 1, inv_den)      # D2' spreads over row j-1
    w += row_coef[:, None]
    np.add.at(w, (a, perm[a - 1]), -inv_den)
    np.add.at(w, (a, perm[a]), -inv_den)
    np.add.at(w, (a, perm[a + 1]), -inv_den)
    np.add.at(w, (a - 1, perm[a - 1]), -inv_den)
    np.add.at(w, (a - 1, perm[a]), -inv_den)
    np.add.at(w, (a, a - 1), -inv_num)       # numerator terms, never permuted
    np.add.at(w, (a, a + 1), -inv_num)

    g_c = w * s / (tau * n_anchors)
    np.fill_diagonal(g_c, 0.0)               # cos(z_r, z_r) is constant
    grad = _grad_from_gc(g_c, flat, flat_hat, norms).reshape(n, t, f)
    return LossOutput(value, grad, per_anchor, floored)


def mpxent_loss_matrix(z: np.ndarray, cfg: LossConfig) -> LossOutput:
    """Multiple-positive loss in the vectorized matrix form.

    Numerically identical to mpxent_loss_oracle; one M x M similarity
    matrix, numerator from the sub-diagonal shifted left/right, denominators
    from row sums minus the excluded slices.
    """
    if cfg.variant != "mp_xent":
        raise ValueError(f"variant {cfg.variant!r} does not belong to this form")
    z = _as_batch(z)
    m = z.shape[0] * z.shape[1]
    return _mpxent_impl(z, cfg, np.arange(m))


def mpxent_loss_shuffled(z: np.ndarray, cfg: LossConfig,
                         permutation: np.ndarray | None = None) -> LossOutput:
    """Shuffled-negatives ablation: denominators read through a permutation.

    The permutation is drawn from cfg.shuffle_seed unless given explicitly.
    With the identity permutation this is bit-for-bit mpxent_loss_matrix.
    """
    if cfg.variant not in ("mp_xent", "mp_xent_shuffled"):
        raise ValueError(f"variant {cfg.variant!r} does not belong to this form")
    z = _as_batch(z)
    m = z.shape[0] * z.shape[1]
    if permutation is None:
        permutation = np.random.default_rng(cfg.shuffle_seed).permutation(m)
    else:
        permutation = np.asarray(permutation, dtype=np.intp)
        if sorted(permutation.tolist()) != list(range(m)):
            raise ValueError("permutation must be a permutation of 0..M-1")
    return _mpxent_impl(z, cfg, permutation)


# ---------------------------------------------------------------------------
# Single-positive variants
# ---------------------------------------------------------------------------

def ntxent_single_positive(z: np.ndarray, cfg: LossConfig) -> LossOutput:
    """Single-positive NT-Xent and its no-negatives (alignment-only) form."""
    if cfg.variant not in ("single_positive", "single_positive_no_neg"):
        raise ValueError(f"variant {cfg.variant!r} is not a single-positive form")
    z = _as_batch(z)
    n, t, f = z.shape
    m = n * t
    if m < 3:
        raise ValueError(f"single-positive losses need M >= 3, got M={m}")
    flat = z.reshape(m, f)
    flat_hat, norms, floored = _unit_rows(flat)
    tau = cfg.temperature

    c = _cosine_matrix(flat_hat)
    anchors = _anchor_indices(m, t, cfg.variant, cfg.per_sequence_mask)
    a = anchors
    n_anchors = a.shape[0]

    if cfg.variant == "single_positive_no_neg":
        per_anchor = -c[a, a + 1] / tau
        g_c = np.zeros((m, m))
        g_c[a, a + 1] = -1.0 / (tau * n_anchors)
    else:
        s = np.exp(c / tau)
        num = s[a, a + 1]
        den = s[a].sum(axis=1) - s[a, a]
        per_anchor = -np.log(num / den)
        w = np.zeros((m, m))
        w[a, :] += (1.0 / den)[:, None]
        # the k = j exclusion lands on the diagonal, which is zeroed below
        np.add.at(w, (a, a + 1), -1.0 / num)
        g_c = w * s / (tau * n_anchors)

    np.fill_diagonal(g_c, 0.0)
    grad = _grad_from_gc(g_c, flat, flat_hat, norms).reshape(n, t, f)
    return LossOutput(float(per_anchor.mean()), grad, per_anchor, floored)


# ---------------------------------------------------------------------------
# Explicit-loop oracle
# ---------------------------------------------------------------------------

def mpxent_loss_oracle(z: np.ndarray, cfg: LossConfig) -> LossOutput:
    """Ground-truth mp_xent by explicit O(M^2) loops.

    Cosines come from raw dot products pair by pair; the per-anchor terms
    and the gradient are accumulated pair by pair from the analytic partial
    of each l(j) through exp and cosine. Slow on purpose; every equivalence
    test measures mpxent_loss_matrix against this.
    """
    if cfg.variant != "mp_xent":
        raise ValueError("the oracle computes the mp_xent variant only")
    z = _as_batch(z)
    n, t, f = z.shape
    m = n * t
    if m < 4:
        raise ValueError(f"mp_xent needs M = N*T >= 4, got M={m}")
    flat = z.reshape(m, f)
    tau = cfg.temperature

    norms = np.empty(m)
    for r in range(m):
        norms[r] = max(math.sqrt(float(np.dot(flat[r], flat[r]))), NORM_FLOOR)
    c = np.empty((m, m))
    for a_row in range(m):
        c[a_row, a_row] = 1.0
        for b_row in range(a_row + 1, m):
            val = float(np.dot(flat[a_row], flat[b_row])) / (norms[a_row] * norms[b_row])
            val = min(1.0, max(-1.0, val))
            c[a_row, b_row] = val
            c[b_row, a_row] = val
    s = np.exp(c / tau)

    anchors = _anchor_indices(m, t, "mp_xent", cfg.per_sequence_mask)
    n_anchors = anchors.shape[0]
    per_anchor = np.empty(n_anchors)
    grad = np.zeros((m, f))

    def add_pair_grad(a_row: int, b_row: int, weight: float) -> None:
        # weight = dl/dS[a,b]; chain through S = exp(C/tau) and the cosine.
        g = weight * s[a_row, b_row] / tau
        na, nb = norms[a_row], norms[b_row]
        cab = c[a_row, b_row]
        grad[a_row] += g * (flat[b_row] / (na * nb) - cab * flat[a_row] / (na * na))
        grad[b_row] += g * (flat[a_row] / (na * nb) - cab * flat[b_row] / (nb * nb))

    for idx, j in enumerate(anchors):
        j = int(j)
        num = s[j, j - 1] + s[j, j + 1]
        d1 = 0.0
        for k in range(m):
            if k not in (j - 1, j, j + 1):
                d1 += s[j, k]
        d2 = 0.0
        for l in range(m):
            if l not in (j - 1, j):
                d2 += s[j - 1, l]
        den = d1 + d2
        per_anchor[idx] = -math.log(num / den)

        add_pair_grad(j, j - 1, -1.0 / num)
        add_pair_grad(j, j + 1, -1.0 / num)
        for k in range(m):
            if k not in (j - 1, j, j + 1):
                add_pair_grad(j, k, 1.0 / den)
        for l in range(m):
            if l not in (j - 1, j):
                add_pair_grad(j - 1, l, 1.0 / den)

    grad /= n_anchors
    return LossOutput(float(per_anchor.mean()), grad.reshape(n, t, f), per_anchor, 0)


# ---------------------------------------------------------------------------
# Dispatch and verification
# ---------------------------------------------------------------------------

def loss_forward(z: np.ndarray, cfg: LossConfig) -> LossOutput:
    """Compute the configured variant (the trainer's entry point)."""
    if cfg.variant == "mp_xent":
        return mpxent_loss_matrix(z, cfg)
    if cfg.variant == "mp_xent_shuffled":
        return mpxent_loss_shuffled(z, cfg)
    return ntxent_single_positive(z, cfg)


def loss_gradient_check(z: np.ndarray, cfg: LossConfig, h: float = 1e-5) -> float:
    """Max relative error between the analytic gradient and central differences.

    Relative error uses denominator max(|analytic|, |numeric|, 1e-8) per
    coordinate. Keep the batch tiny; every coordinate costs two forward
    passes.
    """
    if not 1e-6 <= h <= 1e-4:
        raise ValueError(f"h must lie in [1e-6, 1e-4], got {h}")
    z = _as_batch(z)
    analytic = loss_forward(z, cfg).grad
    worst = 0.0
    flat = z.reshape(-1)
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + h
        f_plus = loss_forward(z, cfg).value
        flat[i] = saved - h
        f_minus = loss_forward(z, cfg).value
        flat[i] = saved
        numeric = (f_plus - f_minus) / (2.0 * h)
        a = analytic.reshape(-1)[i]
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, rel)
    return worst
