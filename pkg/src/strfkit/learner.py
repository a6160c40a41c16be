"""Gradient-based fitting of the 4 Gabor parameters per filter.

The trainable model is deliberately small: STRF layer -> output-mode
projection -> global mean pooling per filter -> linear softmax readout.
Gradients reach the filter parameters by the chain rule: the upstream
gradient on each kernel value is contracted against the analytic kernel
partials, summed over the kernel grid.

Spreads are optimized in log space (positivity structural) and projected
to stay >= SIGMA_MIN after every step; F folds back to nonnegative by
absorbing a sign flip into gamma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import fft as sfft

from . import _fftconv
from .defaults import (
    ADAM_BETAS,
    ADAM_EPS,
    DIVERGENCE_CEILING,
    F_MAX_CYC,
    SIGMA_MIN,
)
from .errors import DivergedError, InvalidConfig, InvalidInput, NumericalError
from .gaborkit import (
    FilterBank,
    GaborParams,
    KernelGrid,
    from_cartesian,
    gabor_gradients,
    gabor_kernel,
)
from .parallel import fft_workers
from .strfconv import OutputMode

_CHUNK_COMPLEX_BUDGET = 4_000_000  # per-chunk working-set cap, complex128 elems


@dataclass(frozen=True)
class ToyTask:
    """A seeded desk-scale classification task on mel spectrograms.

    sample(n, rng) must return (features [n, T, M], labels [n]) with
    balanced class priors; everything it draws must come from rng so runs
    are reproducible.
    """

    name: str
    n_classes: int
    sample: Callable[[int, np.random.Generator], tuple[np.ndarray, np.ndarray]]
    frame_rate: float
    channels_per_octave: float
    size: int = 256

    def __post_init__(self):
        if self.n_classes < 2:
            raise InvalidConfig("a task needs at least 2 classes")
        if self.size < self.n_classes:
            raise InvalidConfig("task size smaller than the class count")


@dataclass(frozen=True)
class TrainConfig:
    n_filters: int
    learning_rate: float = 1e-2
    n_epochs: int = 30
    batch_size: int = 32
    optimizer: str = "adam"
    seed: int = 0
    output_mode: OutputMode = OutputMode.CONCAT_RE_IM

    def __post_init__(self):
        if min(self.n_filters, self.n_epochs, self.batch_size) <= 0:
            raise InvalidConfig("counts in TrainConfig must be positive")
        if self.learning_rate < 0:
            raise InvalidConfig("learning_rate must be nonnegative")
        if self.optimizer.lower() not in ("sgd", "adam"):
            raise InvalidConfig(f"unknown optimizer {self.optimizer!r}")
        if isinstance(self.output_mode, str):
            object.__setattr__(
                self, "output_mode", OutputMode.from_string(self.output_mode)
            )


@dataclass
class Readout:
    """Linear softmax head on the pooled features."""

    weights: np.ndarray  # [n_classes, n_features]
    bias: np.ndarray  # [n_classes]

    @classmethod
    def zeros(cls, n_classes: int, n_features: int) -> "Readout":
        return cls(np.zeros((n_classes, n_features)), np.zeros(n_classes))


@dataclass
class TrainReport:
    task_name: str
    config: TrainConfig
    epoch_losses: list[float]
    epoch_accuracies: list[float]
    initial_bank: FilterBank
    bank: FilterBank
    readout: Readout
    gradient_check: dict


def features_per_filter(mode: OutputMode) -> int:
    return 2 if mode is OutputMode.CONCAT_RE_IM else 1


def _pool(Z: np.ndarray, mode: OutputMode) -> np.ndarray:
    """Global mean over time and mel axes, per filter (and per Re/Im
    block for the concatenated mode). Z: [..., T, M, N] -> [..., D]."""
    if mode is OutputMode.REAL:
        return Z.real.mean(axis=(-3, -2))
    if mode is OutputMode.IMAG:
        return Z.imag.mean(axis=(-3, -2))
    if mode is OutputMode.MAGNITUDE:
        return np.abs(Z).mean(axis=(-3, -2))
    if mode is OutputMode.CONCAT_RE_IM:
        return np.concatenate(
            [Z.real.mean(axis=(-3, -2)), Z.imag.mean(axis=(-3, -2))], axis=-1
        )
    raise InvalidInput(f"unknown output mode {mode!r}")


def _unpool(dfeat: np.ndarray, Z: np.ndarray, mode: OutputMode) -> np.ndarray:
    """Adjoint of _pool: upstream feature grads -> complex grads on Z."""
    B, T, M, N = Z.shape
    scale = 1.0 / (T * M)
    if mode is OutputMode.REAL:
        return (dfeat * scale)[:, None, None, :] * np.ones_like(Z.real) + 0j
    if mode is OutputMode.IMAG:
        return 1j * (dfeat * scale)[:, None, None, :] * np.ones_like(Z.real)
    if mode is OutputMode.MAGNITUDE:
        mag = np.abs(Z)
        unit = np.divide(Z, mag, out=np.zeros_like(Z), where=mag > 0)
        return (dfeat * scale)[:, None, None, :] * unit
    if mode is OutputMode.CONCAT_RE_IM:
        dre = (dfeat[:, :N] * scale)[:, None, None, :]
        dim = (dfeat[:, N:] * scale)[:, None, None, :]
        return (dre + 1j * dim) * np.ones_like(Z.real)
    raise InvalidInput(f"unknown output mode {mode!r}")


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def pooled_features(
    X: np.ndarray, bank, grid: KernelGrid, mode: OutputMode
) -> np.ndarray:
    """Forward pass up to the readout: [B, T, M] -> [B, D]."""
    X = np.asarray(X, dtype=float)
    kernels = np.stack([gabor_kernel(p, grid) for p in bank])
    B, T, M = X.shape
    P, Q = _fftconv.fft_sizes(T, M, grid.n_time, grid.n_freq)
    Kf = _fftconv.bank_spectra(kernels, P, Q)
    feats = np.empty((B, len(bank) * features_per_filter(mode)))
    for lo, hi in _chunks(B, len(bank), P, Q):
        Yf = sfft.fft2(X[lo:hi], s=(P, Q), axes=(-2, -1), workers=fft_workers())
        Z = _fftconv.conv_same_from_spectra(Yf, Kf, T, M, grid.n_time, grid.n_freq)
        feats[lo:hi] = _pool(Z, mode)
    return feats


def _chunks(B, N, P, Q):
    per_sample = max(1, N * P * Q)
    step = max(1, _CHUNK_COMPLEX_BUDGET // per_sample)
    for lo in range(0, B, step):
        yield lo, min(B, lo + step)


def loss_and_param_grads(
    batch: tuple[np.ndarray, np.ndarray],
    bank,
    readout: Readout,
    cfg: TrainConfig,
    grid: KernelGrid = KernelGrid(),
):
    """Mean cross-entropy and its gradients for one batch.

    batch is (features [B, T, M], integer labels [B]). Returns
    (loss, filter_grads [N, 4] ordered (sigma_t, sigma_f, F, gamma),
    (d_weights, d_bias)). Gradients flow only to the 4 parameters per
    filter and the readout; the grid-summed chain rule contracts the
    upstream kernel gradient against the analytic kernel partials.
    """
    X, labels = batch
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    if X.ndim != 3 or X.shape[0] != labels.shape[0]:
        raise InvalidInput("batch must be ([B, T, M] features, [B] labels)")
    bank = list(bank)
    if not bank:
        raise InvalidInput("filter bank is empty")
    mode = cfg.output_mode
    N = len(bank)
    B, T, M = X.shape
    D = N * features_per_filter(mode)
    W, b = readout.weights, readout.bias
    if W.shape != (len(np.atleast_1d(b)), D):
        raise InvalidInput(
            f"readout weights {W.shape} do not match {D} pooled features"
        )

    kernels = np.stack([gabor_kernel(p, grid) for p in bank])
    kgrads = np.stack(
        [np.stack(gabor_gradients(p, grid)) for p in bank]
    )  # [N, 4, n_freq, n_time]
    P, Q = _fftconv.fft_sizes(T, M, grid.n_time, grid.n_freq)
    Kf = _fftconv.bank_spectra(kernels, P, Q)

    loss = 0.0
    dW = np.zeros_like(W)
    db = np.zeros_like(b)
    G = np.zeros((N, grid.n_freq, grid.n_time), dtype=complex)
    onehot = np.eye(W.shape[0])[labels]

    for lo, hi in _chunks(B, N, P, Q):
        Yf = sfft.fft2(X[lo:hi], s=(P, Q), axes=(-2, -1), workers=fft_workers())
        Z = _fftconv.conv_same_from_spectra(Yf, Kf, T, M, grid.n_time, grid.n_freq)
        finite = np.isfinite(Z.real) & np.isfinite(Z.imag)
        if not finite.all():
            bad = int(np.nonzero(~finite.all(axis=(0, 1, 2)))[0][0])
            raise NumericalError(
                f"non-finite filter response (filter {bad})", filter_index=bad
            )
        feats = _pool(Z, mode)
        logits = feats @ W.T + b
        probs = _softmax(logits)
        with np.errstate(divide="ignore"):
            # an underflowed probability is a diverged model, not a bug:
            # let the loss go to inf so the trainer can abort on it
            chunk_nll = -np.log(probs[np.arange(hi - lo), labels[lo:hi]])
        loss += chunk_nll.sum() / B
        dlogits = (probs - onehot[lo:hi]) / B
        dW += dlogits.T @ feats
        db += dlogits.sum(axis=0)
        dfeat = dlogits @ W
        Dz = _unpool(dfeat, Z, mode)  # [c, T, M, N]
        Dz = np.moveaxis(Dz, -1, 1)  # [c, N, T, M]
        Gc = _fftconv.kernel_grad_from_spectra(
            Dz, np.conj(Yf)[:, None], grid.n_time, grid.n_freq, P, Q
        )
        G += Gc.sum(axis=0)

    if math.isnan(loss):
        raise NumericalError("NaN loss")
    # dL/dtheta = sum over grid of Re(G * conj(dK/dtheta))
    filter_grads = np.real(np.einsum("kft,kpft->kp", G, np.conj(kgrads)))
    return float(loss), filter_grads, (dW, db)


def init_bank(
    n_filters: int,
    rng: np.random.Generator,
    frame_rate: float,
    channels_per_octave: float,
    grid: KernelGrid = KernelGrid(),
) -> FilterBank:
    """Random initialization over the reachable modulation plane.

    omega uniform over +/-[0, frame Nyquist], Omega uniform over
    [0, channel Nyquist], sigma_t in [2, 20] frames, sigma_f in
    [0.5, 2] channels.
    """
    omega_nyq = 0.5 * frame_rate
    Omega_nyq = 0.5 * channels_per_octave
    filters = []
    for _ in range(n_filters):
        omega = rng.uniform(-omega_nyq, omega_nyq)
        Omega = rng.uniform(0.0, Omega_nyq)
        sigma_t = rng.uniform(2.0, 20.0)
        sigma_f = rng.uniform(0.5, 2.0)
        filters.append(
            from_cartesian(
                omega,
                Omega,
                sigma_t / frame_rate,
                sigma_f / channels_per_octave,
                frame_rate,
                channels_per_octave,
            )
        )
    return FilterBank(
        filters=tuple(filters),
        grid=grid,
        frame_rate=frame_rate,
        channels_per_octave=channels_per_octave,
    )


def _bank_to_internal(bank) -> np.ndarray:
    """[N, 4] internal coords (log sigma_t, log sigma_f, F, gamma)."""
    out = np.array(
        [[math.log(p.sigma_t), math.log(p.sigma_f), p.F, p.gamma] for p in bank]
    )
    return out


def _internal_to_params(theta: np.ndarray) -> list[GaborParams]:
    return [
        GaborParams(math.exp(u_t), math.exp(u_f), F, gamma)
        for u_t, u_f, F, gamma in theta
    ]


# spreads above any realistic grid extent act as flat envelopes; the cap
# keeps exp(u) finite when an optimizer step runs away
_SIGMA_CAP = 1e3


def _project_internal(theta: np.ndarray) -> np.ndarray:
    """Keep internal coords inside the parameter box after a step."""
    log_bounds = (math.log(SIGMA_MIN), math.log(_SIGMA_CAP))
    theta[:, 0] = np.clip(theta[:, 0], *log_bounds)
    theta[:, 1] = np.clip(theta[:, 1], *log_bounds)
    neg = theta[:, 2] < 0  # fold F<0 into a half-turn of gamma
    theta[neg, 2] = -theta[neg, 2]
    theta[neg, 3] += np.pi
    theta[:, 2] = np.minimum(theta[:, 2], F_MAX_CYC)
    wrap = np.abs(theta[:, 3]) > np.pi
    theta[wrap, 3] = (theta[wrap, 3] + np.pi) % (2 * np.pi) - np.pi
    return theta


class _Optimizer:
    def __init__(self, shapes, kind: str, lr: float):
        self.kind = kind.lower()
        self.lr = lr
        self.t = 0
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        if self.kind == "sgd":
            for p, g in zip(params, grads):
                p -= self.lr * g
            return
        b1, b2 = ADAM_BETAS
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / (1 - b1**self.t)
            vhat = v / (1 - b2**self.t)
            p -= self.lr * mhat / (np.sqrt(vhat) + ADAM_EPS)


def evaluate(
    X: np.ndarray,
    labels: np.ndarray,
    bank,
    readout: Readout,
    grid: KernelGrid,
    mode: OutputMode,
) -> tuple[float, float]:
    """(mean cross-entropy, accuracy) of the current model on a dataset."""
    feats = pooled_features(X, bank, grid, mode)
    logits = feats @ readout.weights.T + readout.bias
    probs = _softmax(logits)
    with np.errstate(divide="ignore"):
        nll = -np.log(probs[np.arange(len(labels)), labels])
    acc = float((logits.argmax(axis=1) == labels).mean())
    return float(nll.mean()), acc


def _probe_is_interior(p: GaborParams, p_idx: int, step: float) -> bool:
    """Central differences need room on both sides of the parameter box."""
    if p_idx in (0, 1):
        sigma = p.sigma_t if p_idx == 0 else p.sigma_f
        return sigma > SIGMA_MIN + 2 * step
    if p_idx == 2:
        return 2 * step < p.F < F_MAX_CYC - 2 * step
    return True


def _gradient_spot_check(
    batch, bank, readout, cfg, grid, rng, n_probes=6, step=1e-4
) -> dict:
    """Finite-difference audit of a few filter-parameter gradients.

    Coordinates pinned at a box boundary (sigma clamp, F range) are
    skipped; the FD quotient is meaningless across a projection.
    """
    _, analytic, _ = loss_and_param_grads(batch, bank, readout, cfg, grid)
    errors = []
    N = len(bank)
    attempts = 0
    probed = 0
    while probed < n_probes and attempts < 20 * n_probes:
        attempts += 1
        k = int(rng.integers(N))
        p_idx = int(rng.integers(4))
        if not _probe_is_interior(bank[k], p_idx, step):
            continue
        probed += 1
        vec = bank[k].as_vector()
        hi, lo = vec.copy(), vec.copy()
        hi[p_idx] += step
        lo[p_idx] -= step
        bank_hi = list(bank)
        bank_lo = list(bank)
        bank_hi[k] = GaborParams.from_vector(hi)
        bank_lo[k] = GaborParams.from_vector(lo)
        f_hi, _, _ = loss_and_param_grads(batch, bank_hi, readout, cfg, grid)
        f_lo, _, _ = loss_and_param_grads(batch, bank_lo, readout, cfg, grid)
        fd = (f_hi - f_lo) / (2 * step)
        denom = max(abs(fd), abs(analytic[k, p_idx]), 1e-8)
        errors.append(abs(analytic[k, p_idx] - fd) / denom)
    return {
        "n_probes": probed,
        "fd_step": step,
        "max_relative_error": float(max(errors)) if errors else 0.0,
    }


def train(task: ToyTask, cfg: TrainConfig, grid: KernelGrid = KernelGrid()) -> TrainReport:
    """Fit a bank and readout on a toy task; fully seeded and deterministic.

    Raises DivergedError (with the last stable snapshot attached) if the
    training loss passes the divergence ceiling.
    """
    rng = np.random.default_rng(cfg.seed)
    X, labels = task.sample(task.size, rng)
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels, dtype=int)

    bank0 = init_bank(
        cfg.n_filters, rng, task.frame_rate, task.channels_per_octave, grid
    )
    theta = _bank_to_internal(bank0.filters)
    initial_filters = _internal_to_params(theta)
    D = cfg.n_filters * features_per_filter(cfg.output_mode)
    readout = Readout.zeros(task.n_classes, D)
    opt = _Optimizer(
        [theta.shape, readout.weights.shape, readout.bias.shape],
        cfg.optimizer,
        cfg.learning_rate,
    )

    n = X.shape[0]
    epoch_losses: list[float] = []
    epoch_accs: list[float] = []
    snapshot = (list(initial_filters), Readout(readout.weights.copy(), readout.bias.copy()))
    for _epoch in range(cfg.n_epochs):
        order = rng.permutation(n)
        batch_losses = []
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            bank = _internal_to_params(theta)
            loss, fgrads, (dW, db) = loss_and_param_grads(
                (X[idx], labels[idx]), bank, readout, cfg, grid
            )
            if loss > DIVERGENCE_CEILING:
                raise DivergedError(
                    f"loss {loss:.3e} exceeded {DIVERGENCE_CEILING:.0e}",
                    snapshot=snapshot,
                )
            snapshot = (
                list(bank),
                Readout(readout.weights.copy(), readout.bias.copy()),
            )
            batch_losses.append(loss)
            # chain rule into log-space spreads: dL/du = dL/dsigma * sigma
            internal_grads = fgrads.copy()
            internal_grads[:, 0] *= np.exp(theta[:, 0])
            internal_grads[:, 1] *= np.exp(theta[:, 1])
            opt.step(
                [theta, readout.weights, readout.bias], [internal_grads, dW, db]
            )
            _project_internal(theta)
        bank = _internal_to_params(theta)
        ep_loss, ep_acc = evaluate(X, labels, bank, readout, grid, cfg.output_mode)
        if math.isnan(ep_loss):
            raise NumericalError("NaN epoch loss")
        if ep_loss > DIVERGENCE_CEILING:
            raise DivergedError(
                f"epoch loss {ep_loss:.3e} exceeded {DIVERGENCE_CEILING:.0e}",
                snapshot=snapshot,
            )
        epoch_losses.append(ep_loss)
        epoch_accs.append(ep_acc)

    final_filters = _internal_to_params(theta)
    probe = (X[: min(n, 8)], labels[: min(n, 8)])
    grad_check = _gradient_spot_check(
        probe, final_filters, readout, cfg, grid, rng
    )

    def mk_bank(filters):
        return FilterBank(
            filters=tuple(filters),
            grid=grid,
            frame_rate=task.frame_rate,
            channels_per_octave=task.channels_per_octave,
        )

    return TrainReport(
        task_name=task.name,
        config=cfg,
        epoch_losses=epoch_losses,
        epoch_accuracies=epoch_accs,
        initial_bank=mk_bank(initial_filters),
        bank=mk_bank(final_filters),
        readout=readout,
        gradient_check=grad_check,
    )


def filter_contributions(
    X: np.ndarray,
    labels: np.ndarray,
    bank,
    readout: Readout,
    grid: KernelGrid,
    mode: OutputMode,
) -> np.ndarray:
    """Mean logit contribution of each filter to each class, [C, N].

    Sums readout-weighted pooled features over the feature columns that
    belong to one filter, averaged over the samples of each class.
    """
    feats = pooled_features(X, bank, grid, mode)
    N = len(bank)
    fpf = features_per_filter(mode)
    C = readout.weights.shape[0]
    contrib = np.zeros((C, N))
    for c in range(C):
        mask = labels == c
        if not mask.any():
            continue
        weighted = feats[mask] * readout.weights[c]  # [n_c, D]
        per_filter = weighted.reshape(mask.sum(), fpf, N).sum(axis=1)
        contrib[c] = per_filter.mean(axis=0)
    return contrib


def class_preferred_filters(
    X, labels, bank, readout, grid, mode
) -> np.ndarray:
    """Index of the most readout-weighted filter for each class."""
    return filter_contributions(X, labels, bank, readout, grid, mode).argmax(axis=1)
