"""Rate fitting, probabilistic XOR combination, losses, and stream diagnostics.

Everything here is pure numeric post-processing: no decoding, no sampling.
The fidelity model used throughout is F = 1 - 2*p_L, with the per-round
error rate eps defined through F = (1 - 2*eps)**N.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

_PRED_CLAMP = 1e-7


def pl_from_epsilon(epsilon, rounds):
    """Final logical error rate after ``rounds`` independent eps-flips.

    Evaluates (1 - (1 - 2*eps)**N) / 2 through expm1/log1p so small
    rates keep full relative precision instead of drowning in the
    1 - x cancellation.
    """
    if not 0.0 <= epsilon <= 0.5:
        raise ValueError(f"per-round rate {epsilon!r} outside [0, 0.5]")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if epsilon == 0.5:
        return 0.5
    return -0.5 * math.expm1(rounds * math.log1p(-2.0 * epsilon))


def epsilon_from_pl(p_l, rounds):
    """Per-round rate whose ``rounds``-fold accumulation gives ``p_l``.

    Inverse of :func:`pl_from_epsilon`.  Only defined for p_l < 0.5: at
    one half the flip process has fully decohered and every per-round
    rate in (0, 0.5] is consistent with it.
    """
    if not 0.0 <= p_l < 0.5:
        raise ValueError(f"logical error rate {p_l!r} outside [0, 0.5)")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    return -0.5 * math.expm1(math.log1p(-2.0 * p_l) / rounds)


@dataclass(frozen=True)
class FitResult:
    """Least-squares fit of ln F = N ln(1 - 2 eps) + ln C."""

    epsilon: float
    constant: float
    rounds: tuple          # N values that entered the fit
    fidelity: tuple        # F values that entered the fit
    residual: float        # sum of squared ln-F residuals
    dropped: int           # points excluded by the F > 0.1 floor


# Fidelity floor below which ln F is too noise-dominated to constrain the
# slope; points at or under it are excluded from the regression.
FIT_FIDELITY_FLOOR = 0.1


def fit_epsilon(points):
    """Fit a per-round error rate to (rounds, p_L, shots) samples.

    Ordinary least squares on (N, ln F).  Points with non-positive
    fidelity are dropped with a warning (their logarithm does not
    exist); points with 0 < F <= 0.1 are dropped quietly per the
    documented floor.  Raises when fewer than two usable points remain.
    """
    xs, ys, fs, dropped = [], [], [], 0
    for rounds, p_l, _shots in points:
        f = 1.0 - 2.0 * p_l
        if f <= 0.0:
            warnings.warn(
                f"dropping N={rounds}: fidelity {f:.4g} is not positive",
                stacklevel=2,
            )
            dropped += 1
            continue
        if f <= FIT_FIDELITY_FLOOR:
            dropped += 1
            continue
        xs.append(float(rounds))
        ys.append(math.log(f))
        fs.append(f)
    if len(xs) < 2:
        raise ValueError(f"need >= 2 points with F > {FIT_FIDELITY_FLOOR}, have {len(xs)}")
    x = np.asarray(xs)
    y = np.asarray(ys)
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sum((y - (slope * x + intercept)) ** 2))
    eps = 0.5 * (1.0 - math.exp(slope))
    eps = min(max(eps, 0.0), 0.5)
    return FitResult(
        epsilon=eps,
        constant=math.exp(intercept),
        rounds=tuple(xs),
        fidelity=tuple(fs),
        residual=resid,
        dropped=dropped,
    )


def _check_probs(probs):
    arr = np.asarray(probs, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("expected a non-empty 1-d sequence of probabilities")
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    return arr


def soft_xor(probs):
    """Probability that an odd number of independent events fire.

    Reduces to the hard XOR on {0, 1} inputs and to the identity for a
    single input; any input of exactly 0.5 forces the output to 0.5.
    """
    arr = _check_probs(probs)
    return 0.5 * (1.0 - float(np.prod(1.0 - 2.0 * arr)))


def soft_xor_grad(probs):
    """Gradient of :func:`soft_xor` with respect to each input.

    d/dp_j = prod_{i != j} (1 - 2 p_i).  Computed with an explicit
    leave-one-out product so inputs at exactly 0.5 (zero factors) do not
    poison the other components.
    """
    arr = _check_probs(probs)
    factors = 1.0 - 2.0 * arr
    out = np.empty_like(factors)
    for j in range(factors.size):
        out[j] = np.prod(np.delete(factors, j))
    return out


def bce_loss(pred, label):
    """Mean binary cross entropy with predictions clamped to [1e-7, 1-1e-7]."""
    p = np.clip(np.asarray(pred, dtype=float), _PRED_CLAMP, 1.0 - _PRED_CLAMP)
    t = np.asarray(label, dtype=float)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: pred {p.shape} vs label {t.shape}")
    return float(np.mean(-(t * np.log(p) + (1.0 - t) * np.log1p(-p))))


def recurrent_loss(preds, labels):
    """Mean BCE over a sequence of truncated-readout steps.

    ``preds[k]`` and ``labels[k]`` are the prediction/label pair after
    consuming k+1 core rounds; with a single step this is exactly
    :func:`bce_loss`.
    """
    if len(preds) != len(labels):
        raise ValueError(f"length mismatch: {len(preds)} preds vs {len(labels)} labels")
    if len(preds) == 0:
        raise ValueError("empty sequence")
    return float(np.mean([bce_loss(p, t) for p, t in zip(preds, labels)]))


def independence_estimate(p1, p2, p3):
    """Global flip probability if three window flips were independent.

    Sum over the four odd-parity outcomes of three independent
    Bernoulli variables.
    """
    for p in (p1, p2, p3):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"probability {p!r} outside [0, 1]")
    return (
        p1 * (1 - p2) * (1 - p3)
        + (1 - p1) * p2 * (1 - p3)
        + (1 - p1) * (1 - p2) * p3
        + p1 * p2 * p3
    )


def _plaquette_weight(plaquette, d):
    """Number of data qubits a plaquette touches (2 on the boundary, 4 inside)."""
    r, c = plaquette
    return sum(
        1
        for dr in (0, 1)
        for dc in (0, 1)
        if 0 <= r + dr < d and 0 <= c + dc < d
    )


@dataclass(frozen=True)
class DepCurves:
    """Detection-event probabilities split by stabilizer weight."""

    layers: tuple            # sorted detector layers present in the model
    detector_rate: np.ndarray    # (n_det,) mean event rate per detector
    detector_weight: np.ndarray  # (n_det,) plaquette weight (2 or 4)
    detector_layer: np.ndarray   # (n_det,)
    curves: dict             # weight -> per-layer mean rate (NaN if absent)


def dep_curves(events, dem):
    """Per-detector and per-round event rates, grouped by stabilizer weight.

    ``events`` is a (shots, n_detectors) 0/1 array whose columns follow
    ``dem.detectors``.  Requires at least 1000 shots so the per-detector
    rates are meaningful.
    """
    ev = np.asarray(events)
    if ev.ndim != 2 or ev.shape[1] != len(dem.detectors):
        raise ValueError("events shape does not match the detector list")
    if ev.shape[0] < 1000:
        raise ValueError(f"need >= 1000 shots, have {ev.shape[0]}")
    rate = ev.mean(axis=0, dtype=float)
    weight = np.array(
        [_plaquette_weight(det[3], dem.distance) for det in dem.detectors],
        dtype=np.int64,
    )
    layer = np.array([det[1] for det in dem.detectors], dtype=np.int64)
    layers = tuple(sorted(set(layer.tolist())))
    curves = {}
    for w in (2, 4):
        curve = np.full(len(layers), np.nan)
        for k, lay in enumerate(layers):
            mask = (weight == w) & (layer == lay)
            if mask.any():
                curve[k] = rate[mask].mean()
        curves[w] = curve
    return DepCurves(
        layers=layers,
        detector_rate=rate,
        detector_weight=weight,
        detector_layer=layer,
        curves=curves,
    )


@dataclass(frozen=True)
class RoundCorrelation:
    """Pearson correlation of per-round detection-event counts."""

    layers: tuple
    matrix: np.ndarray         # (n_layers, n_layers)
    zero_variance: np.ndarray  # (n_layers,) bool, rows/cols forced to 0


def round_correlation(events, dem):
    """Correlation matrix of per-round event counts across shots.

    Rounds whose count never varies carry no correlation information;
    their rows and columns are set to 0 and flagged.
    """
    ev = np.asarray(events)
    if ev.ndim != 2 or ev.shape[1] != len(dem.detectors):
        raise ValueError("events shape does not match the detector list")
    layer = np.array([det[1] for det in dem.detectors], dtype=np.int64)
    layers = tuple(sorted(set(layer.tolist())))
    counts = np.empty((ev.shape[0], len(layers)), dtype=np.float64)
    for k, lay in enumerate(layers):
        counts[:, k] = ev[:, layer == lay].sum(axis=1)
    centered = counts - counts.mean(axis=0)
    std = centered.std(axis=0)
    zv = std == 0.0
    denom = np.where(zv, 1.0, std)
    normed = centered / denom
    mat = normed.T @ normed / ev.shape[0]
    mat[zv, :] = 0.0
    mat[:, zv] = 0.0
    return RoundCorrelation(layers=layers, matrix=mat, zero_variance=zv)
