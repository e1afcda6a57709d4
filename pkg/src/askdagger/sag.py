"""S-aware gating: query thresholds tracking a user-specified rate.

Whether the novice queries the teacher is decided by comparing its
prediction uncertainty against a threshold.  The threshold is recomputed
from the recent feedback history so that the realized sensitivity
(fraction of novice failures queried), specificity (fraction of successes
left alone), or system success rate tracks a desired value.

The pipeline per decision:

1. ``get_window``: shortest history suffix holding enough relevant labels;
2. ``normalize_uncertainties``: linear drift correction so stale
   uncertainties match the current model version;
3. ``fit_logistic``: failure probability as a function of uncertainty,
   fitted on the labeled part of the window;
4. ``impute_labels`` / ``set_threshold``: sample pseudo labels for
   unlabeled decisions, pick the threshold whose empirical rate straddles
   the (random-query corrected) target, repeat, take the median.

Queries are treated as positives.  Random queries fire with probability
``p_rand`` independently of the threshold, which both collects labels over
the whole uncertainty range and floors the trackable sensitivity at
``p_rand``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from askdagger.core import FeedbackRecord, Reward

INF = math.inf

MODES = ("sensitivity", "specificity", "success")

# Logistic fit knobs: ridge keeps small separable windows solvable, the slope
# cap bounds perfectly separated fits, constant fallbacks stay in (0, 1).
_RIDGE = 1e-6
_GRAD_TOL = 1e-8
_MAX_NEWTON_ITERS = 100
_SLOPE_CAP = 50.0
_CONST_CLIP = (0.01, 0.99)


@dataclass(frozen=True)
class GatingConfig:
    """Gating mode, target value, and estimation parameters."""

    mode: str = "sensitivity"
    sigma_des: float = 0.9
    p_rand: float = 0.1
    n_min: int = 15
    n_rep: int = 25
    impute: bool = True  # ablation: pseudo-label imputation on/off
    normalize: bool = True  # ablation: uncertainty drift correction on/off

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 < self.sigma_des < 1.0:
            raise ValueError(f"sigma_des must be in (0, 1), got {self.sigma_des}")
        if not 0.0 <= self.p_rand < 1.0:
            raise ValueError(f"p_rand must be in [0, 1), got {self.p_rand}")
        if self.n_min < 1 or self.n_rep < 1:
            raise ValueError("n_min and n_rep must be positive")
        if self.mode == "sensitivity" and self.sigma_des < self.p_rand:
            warnings.warn(
                f"sigma_des={self.sigma_des} below p_rand={self.p_rand}: "
                f"expected sensitivity is floored at p_rand",
                stacklevel=2,
            )


@dataclass(frozen=True)
class LabeledWindow:
    """Suffix of the feedback history used for threshold estimation.

    ``f_w`` holds failure labels (+1 failure, -1 success, 0 unknown),
    i.e. the negated rewards of the window.
    """

    u_w: np.ndarray
    f_w: np.ndarray
    k_w: np.ndarray
    window_start: int


@dataclass(frozen=True)
class GatingDecision:
    """Outcome of one gate evaluation."""

    gamma: float
    queried: bool
    reason: str  # active | random | none


class FeedbackHistory:
    """Array-backed feedback history with per-sign label positions.

    Equivalent to a list of :class:`FeedbackRecord` but keeps numpy views
    and label indices so window extraction stays O(window) per decision.
    Append-only, single writer.
    """

    def __init__(self, records: list[FeedbackRecord] | None = None):
        self._u: list[float] = []
        self._r: list[int] = []
        self._k: list[int] = []
        self._neg: list[int] = []  # positions with r = -1
        self._pos: list[int] = []  # positions with r = +1
        self._labeled: list[int] = []  # positions with r != 0
        self.records: list[FeedbackRecord] = []
        for rec in records or []:
            self.append(rec)

    def __len__(self) -> int:
        return len(self._u)

    def append(self, rec: FeedbackRecord) -> None:
        idx = len(self._u)
        self._u.append(rec.u)
        self._r.append(int(rec.r))
        self._k.append(rec.k)
        if rec.r == Reward.REJECTED:
            self._neg.append(idx)
            self._labeled.append(idx)
        elif rec.r == Reward.VALIDATED:
            self._pos.append(idx)
            self._labeled.append(idx)
        self.records.append(rec)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (
            np.array(self._u, dtype=np.float64),
            np.array(self._r, dtype=np.int64),
            np.array(self._k, dtype=np.int64),
        )

    def relevant_positions(self, mode: str) -> list[int]:
        if mode == "sensitivity":
            return self._neg
        if mode == "specificity":
            return self._pos
        return self._labeled


def _as_history(records) -> FeedbackHistory:
    if isinstance(records, FeedbackHistory):
        return records
    return FeedbackHistory(list(records))


def get_window(records, n_min: int, mode: str) -> LabeledWindow:
    """Smallest history suffix holding >= n_min relevant labels.

    Relevant labels are r=-1 for sensitivity, r=+1 for specificity, and
    either for success mode.  Histories with fewer relevant labels yield
    the full history.
    """
    history = _as_history(records)
    u, r, k = history.arrays()
    positions = history.relevant_positions(mode)
    start = positions[-n_min] if len(positions) >= n_min else 0
    return LabeledWindow(
        u_w=u[start:].copy(), f_w=-r[start:], k_w=k[start:], window_start=start
    )


def _linear_slope(k: np.ndarray, u: np.ndarray) -> float:
    """Ordinary least-squares slope of u on k; 0 for degenerate inputs."""
    if len(k) < 2:
        return 0.0
    kc = k.astype(np.float64) - k.mean()
    denom = float(kc @ kc)
    if denom == 0.0:
        return 0.0
    return float(kc @ (u - u.mean())) / denom


def normalize_uncertainties(window: LabeledWindow, current_k: int) -> LabeledWindow:
    """Shift stale uncertainties to the current model version.

    Each entry moves by slope * (K - k) where the slope comes from the OLS
    line of u on k over the window; results are clamped to [0, 1].
    """
    slope = _linear_slope(window.k_w, window.u_w)
    shifted = np.clip(window.u_w + slope * (current_k - window.k_w), 0.0, 1.0)
    return replace(window, u_w=shifted)


def sigmoid(x: np.ndarray | float) -> np.ndarray | float:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def _nll(y: np.ndarray, p: np.ndarray, w: float, b: float) -> float:
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    reg = 0.5 * _RIDGE * (w * w + b * b)
    return float(-(y @ np.log(p) + (1.0 - y) @ np.log(1.0 - p))) + reg


def _refit_intercept(u: np.ndarray, y: np.ndarray, w: float, b: float) -> float:
    """1-D Newton on the intercept with the slope held at its cap."""
    for _ in range(25):
        p = sigmoid(w * u + b)
        grad = float(np.sum(p - y)) + _RIDGE * b
        hess = float(np.sum(p * (1.0 - p))) + _RIDGE
        if abs(grad) <= _GRAD_TOL:
            break
        b -= grad / hess
    return b


def fit_logistic(u_w: np.ndarray, f_w: np.ndarray) -> tuple[float, float]:
    """Fit P(failure | u) = sigmoid(w*u + b) on known failure labels.

    ``f_w`` entries are +1 (failure) or -1 (success).  Single-class inputs
    fall back to a constant model at the clipped class frequency; perfect
    separation is capped at |w| = 50 with the intercept refitted.
    """
    u = np.asarray(u_w, dtype=np.float64)
    f = np.asarray(f_w)
    y = (f > 0).astype(np.float64)
    n = len(u)
    if n == 0:
        return 0.0, 0.0
    mean = float(y.mean())
    if mean in (0.0, 1.0):
        p = min(max(mean, _CONST_CLIP[0]), _CONST_CLIP[1])
        return 0.0, float(np.log(p / (1.0 - p)))

    X = np.column_stack([u, np.ones(n)])
    theta = np.zeros(2)
    p = sigmoid(X @ theta)
    loss = _nll(y, p, *theta)
    for _ in range(_MAX_NEWTON_ITERS):
        grad = X.T @ (p - y) + _RIDGE * theta
        if float(np.linalg.norm(grad)) <= _GRAD_TOL:
            break
        s = p * (1.0 - p)
        hess = (X * s[:, None]).T @ X + _RIDGE * np.eye(2)
        step = np.linalg.solve(hess, grad)
        # Damping: halve the step until the penalized likelihood improves.
        scale = 1.0
        for _ in range(30):
            cand = theta - scale * step
            p_cand = sigmoid(X @ cand)
            cand_loss = _nll(y, p_cand, *cand)
            if cand_loss <= loss:
                break
            scale *= 0.5
        theta = theta - scale * step
        p = sigmoid(X @ theta)
        loss = _nll(y, p, *theta)

    w, b = float(theta[0]), float(theta[1])
    if abs(w) > _SLOPE_CAP:
        w = math.copysign(_SLOPE_CAP, w)
        b = _refit_intercept(u, y, w, b)
    return w, b


def impute_labels(
    window: LabeledWindow, w_log: float, b_log: float, rng: np.random.Generator
) -> np.ndarray:
    """Fill unknown entries of ``f_w`` with sampled pseudo failure labels.

    Known labels pass through unchanged; each unknown entry draws +1 with
    probability sigmoid(w*u + b), independently per call.
    """
    f = np.array(window.f_w, dtype=np.int64)
    unknown = f == 0
    n_unknown = int(unknown.sum())
    if n_unknown:
        p_fail = sigmoid(w_log * window.u_w[unknown] + b_log)
        draws = rng.random(n_unknown)
        f[unknown] = np.where(draws < p_fail, 1, -1)
    return f


def target_rate(sigma_des: float, p_rand: float, mode: str) -> float:
    """Gating-only rate that yields ``sigma_des`` once random queries are added.

    Sensitivity and success modes invert sigma = s + p_rand (1 - s);
    specificity inverts sigma = s (1 - p_rand).
    """
    if mode == "specificity":
        return sigma_des / (1.0 - p_rand)
    return (sigma_des - p_rand) / (1.0 - p_rand)


def expected_rate(gating_rate: float, p_rand: float, mode: str) -> float:
    """Total expected rate once random queries act on top of the gate."""
    if mode == "specificity":
        return gating_rate * (1.0 - p_rand)
    return gating_rate + p_rand * (1.0 - gating_rate)


class _ThresholdProblem:
    """Shared sorted view of a window for repeated threshold evaluations.

    Sorting the uncertainties once lets every imputation repetition reuse
    the same candidate set; metric curves then reduce to cumulative counts
    over the sorted order.
    """

    def __init__(self, u: np.ndarray, mode: str):
        self.mode = mode
        self.u = np.asarray(u, dtype=np.float64)
        self.n = len(self.u)
        self.order = np.argsort(self.u, kind="stable")
        u_sorted = self.u[self.order]
        # First index of each distinct value; candidate thresholds are the
        # distinct uncertainties plus the never-query sentinel.
        if self.n:
            boundary = np.empty(self.n, dtype=bool)
            boundary[0] = True
            boundary[1:] = u_sorted[1:] != u_sorted[:-1]
            self.boundaries = np.flatnonzero(boundary)
            self.candidates = np.append(u_sorted[self.boundaries], INF)
        else:
            self.boundaries = np.empty(0, dtype=np.int64)
            self.candidates = np.array([INF])

    def metrics(self, f_rows: np.ndarray) -> np.ndarray:
        """Metric value at every candidate, one row per label assignment.

        For a candidate threshold c, decisions with u >= c count as queried
        (positives).  Sensitivity is queried failures over failures,
        specificity unqueried successes over successes, success mode one
        minus unqueried failures over all decisions.
        """
        f = np.atleast_2d(f_rows)
        fails = (f[:, self.order] == 1).astype(np.int64)
        succs = (f[:, self.order] == -1).astype(np.int64)
        # prefix[i] = count strictly before sorted position i.
        prefix_fail = np.concatenate(
            [np.zeros((f.shape[0], 1), dtype=np.int64), np.cumsum(fails, axis=1)], axis=1
        )
        prefix_succ = np.concatenate(
            [np.zeros((f.shape[0], 1), dtype=np.int64), np.cumsum(succs, axis=1)], axis=1
        )
        total_fail = prefix_fail[:, -1:]
        total_succ = prefix_succ[:, -1:]
        cols = np.append(self.boundaries, self.n)
        with np.errstate(invalid="ignore", divide="ignore"):
            if self.mode == "sensitivity":
                queried_fail = total_fail - prefix_fail[:, cols]
                out = queried_fail / total_fail
            elif self.mode == "specificity":
                out = prefix_succ[:, cols] / total_succ
            else:
                out = 1.0 - prefix_fail[:, cols] / max(self.n, 1)
        return out

    def pick(self, metrics: np.ndarray, target: float) -> float:
        """Threshold whose empirical metric straddles the target.

        Exact hits resolve to the highest candidate achieving the target
        (any lower threshold adds queries without moving the tracked
        metric; in particular a target of zero resolves to the sentinel)
        and the returned value is centered in the gap below that
        candidate: every threshold in the gap realizes the same window
        metric, and the midpoint avoids the knife-edge of gating exactly
        at an observed sample.  Otherwise the two adjacent candidates
        bracketing the target are interpolated on the metric axis;
        targets outside the achievable range return the extreme candidate
        on that side.  A bracket against the sentinel cannot be
        interpolated, so the closer endpoint wins, with distance ties
        going to the lower (more-querying) threshold.
        """
        cands = self.candidates
        exact = np.flatnonzero(metrics == target)
        if exact.size:
            top = int(exact[-1])
            if top == 0 or math.isinf(cands[top]):
                return float(cands[top])
            return float((cands[top - 1] + cands[top]) / 2.0)
        decreasing = self.mode != "specificity"
        lo, hi = (metrics[-1], metrics[0]) if decreasing else (metrics[0], metrics[-1])
        if target > hi:
            return float(cands[0] if decreasing else cands[-1])
        if target < lo:
            return float(cands[-1] if decreasing else cands[0])
        # Unique strict crossing of the monotone step curve.
        if decreasing:
            i = int(np.flatnonzero((metrics[:-1] > target) & (metrics[1:] < target))[0])
            g_above, m_above = cands[i], metrics[i]
            g_below, m_below = cands[i + 1], metrics[i + 1]
        else:
            i = int(np.flatnonzero((metrics[:-1] < target) & (metrics[1:] > target))[0])
            g_below, m_below = cands[i], metrics[i]
            g_above, m_above = cands[i + 1], metrics[i + 1]
        if math.isinf(g_above) or math.isinf(g_below):
            finite, infinite = (g_below, g_above) if math.isinf(g_above) else (g_above, g_below)
            m_finite = m_below if math.isinf(g_above) else m_above
            m_inf = m_above if math.isinf(g_above) else m_below
            if abs(m_finite - target) <= abs(m_inf - target):
                return float(finite)
            return float(infinite)
        t = (target - m_below) / (m_above - m_below)
        return float(g_below + t * (g_above - g_below))


def set_threshold(
    u_w: np.ndarray,
    f_w: np.ndarray,
    sigma_des: float,
    p_rand: float,
    mode: str,
) -> float:
    """Threshold tracking ``sigma_des`` on a fully labeled window.

    Candidate thresholds are the distinct window uncertainties plus a
    never-query sentinel; the returned value interpolates between the two
    adjacent candidates whose empirical metric straddles the
    random-query-corrected target.
    """
    u = np.asarray(u_w, dtype=np.float64)
    f = np.asarray(f_w, dtype=np.int64)
    if len(u) != len(f):
        raise ValueError(f"window length mismatch: {len(u)} vs {len(f)}")
    if len(u) == 0:
        raise ValueError("empty window")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "sensitivity" and not np.any(f == 1):
        return INF
    if mode == "specificity" and not np.any(f == -1):
        return float(u.min())
    problem = _ThresholdProblem(u, mode)
    metrics = problem.metrics(f[None, :])[0]
    return problem.pick(metrics, target_rate(sigma_des, p_rand, mode))


def sag_threshold(
    records,
    config: GatingConfig,
    current_k: int,
    rng: np.random.Generator,
) -> float:
    """Full gating pipeline: window, drift correction, imputation, median.

    Returns the median of ``n_rep`` thresholds computed on independently
    imputed label assignments (sentinels enter the median as the largest
    value).  Histories without any labeled feedback cannot inform a
    threshold: sensitivity mode backs off to the sentinel and lets random
    queries bootstrap labels, the other modes query everything.
    """
    history = _as_history(records)
    if len(history) == 0:
        return INF if config.mode == "sensitivity" else 0.0
    window = get_window(history, config.n_min, config.mode)
    if config.normalize:
        window = normalize_uncertainties(window, current_k)
    known = window.f_w != 0
    if not known.any():
        return INF if config.mode == "sensitivity" else 0.0

    target = target_rate(config.sigma_des, config.p_rand, config.mode)
    if not config.impute:
        u = window.u_w[known]
        f = window.f_w[known]
        return set_threshold(u, f, config.sigma_des, config.p_rand, config.mode)

    w_log, b_log = fit_logistic(window.u_w[known], window.f_w[known])
    problem = _ThresholdProblem(window.u_w, config.mode)
    f_matrix = np.tile(window.f_w, (config.n_rep, 1))
    unknown = np.flatnonzero(~known)
    if unknown.size:
        p_fail = sigmoid(w_log * window.u_w[unknown] + b_log)
        draws = rng.random((config.n_rep, unknown.size))
        f_matrix[:, unknown] = np.where(draws < p_fail[None, :], 1, -1)
    if config.mode == "sensitivity":
        valid = (f_matrix == 1).any(axis=1)
    elif config.mode == "specificity":
        valid = (f_matrix == -1).any(axis=1)
    else:
        valid = np.ones(config.n_rep, dtype=bool)
    metrics = problem.metrics(f_matrix)
    thresholds = np.empty(config.n_rep)
    for i in range(config.n_rep):
        if not valid[i]:
            thresholds[i] = INF if config.mode == "sensitivity" else float(window.u_w.min())
        else:
            thresholds[i] = problem.pick(metrics[i], target)
    return float(np.median(thresholds))


def decide(
    u: float, gamma: float, p_rand: float, rng: np.random.Generator
) -> GatingDecision:
    """Query if uncertainty reaches the threshold, else randomly with p_rand."""
    if u >= gamma:
        return GatingDecision(gamma=gamma, queried=True, reason="active")
    if rng.random() < p_rand:
        return GatingDecision(gamma=gamma, queried=True, reason="random")
    return GatingDecision(gamma=gamma, queried=False, reason="none")
