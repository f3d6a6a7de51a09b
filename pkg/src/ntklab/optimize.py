"""Full-batch gradient descent and online SGD with trajectory instrumentation.

Both loops record per-step scalars (risk, qhat, row movement, optional margins
against a reference direction) and support anchored distance-inequality
monitors.  Weight snapshots are kept only at step 0, the running best-risk
step, and the final step unless extra steps are requested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .model import (Dataset, InitSnapshot, NetworkParams, empirical_risk,
                    logistic_loss, logistic_loss_slope)
from .separators import UBarMatrix
from .util import DivergenceError, OracleExhausted, ValidationError

MOVE_SLACK = 1e-9  # fp allowance when asserting the movement chain


@dataclass(frozen=True)
class ScheduleConstants:
    """Width / step-count budget under which average risk provably falls to eps.

    lam scales the reference direction, width_threshold is the sufficient
    width, and steps is the iteration budget at step size eta.
    """

    lam: float
    width_threshold: float
    steps: int
    gamma: float
    eps: float
    delta: float
    n: int
    eta: float

    def row_move_bound(self, m: int) -> float:
        """Per-row movement envelope 4 lam / (gamma sqrt(m))."""
        return 4.0 * self.lam / (self.gamma * math.sqrt(m))


def schedule_constants(n: int, delta: float, eps: float, gamma: float, eta: float) -> ScheduleConstants:
    """lam = 4 (sqrt(2 ln(4n/delta)) + ln(4/eps)) / gamma, width 4096 lam^2 / gamma^6,
    steps ceil(2 lam^2 / (eta eps))."""
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    if not 0.0 < eps < 1.0:
        raise ValidationError(f"eps must lie in (0,1), got {eps}")
    if not 0.0 < delta < 1.0 / 3.0:
        raise ValidationError(f"delta must lie in (0,1/3), got {delta}")
    if gamma <= 0.0:
        raise ValidationError(f"gamma must be positive, got {gamma}")
    if not 0.0 < eta <= 1.0:
        raise ValidationError(f"eta must lie in (0,1], got {eta}")
    lam = (math.sqrt(2.0 * math.log(4.0 * n / delta)) + math.log(4.0 / eps)) / (gamma / 4.0)
    return ScheduleConstants(
        lam=lam,
        width_threshold=4096.0 * lam ** 2 / gamma ** 6,
        steps=math.ceil(2.0 * lam ** 2 / (eta * eps)),
        gamma=gamma, eps=eps, delta=delta, n=n, eta=eta)


@dataclass
class TrainTrace:
    """Per-step records of one training run (GD iterates t or SGD steps i).

    For SGD, `risk` holds the fresh-example stream loss and `qhat` the
    per-step -loss'(y_i f_i) before the update.  `extras` carries run-specific
    columns such as distance-inequality slacks or held-out estimates.
    """

    step: np.ndarray
    risk: np.ndarray
    qhat: np.ndarray
    max_row_move: np.ndarray
    move_bound: np.ndarray
    min_margin_u: np.ndarray
    cum_qhat: np.ndarray
    k_min_risk: int
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)
    extras: dict[str, np.ndarray] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.step)

    @property
    def running_avg_risk(self) -> np.ndarray:
        return np.cumsum(self.risk) / (np.arange(len(self.risk)) + 1.0)


class DistanceInequalityMonitor:
    """Per-step slack of the anchored distance inequality.

    At step t the recorded slack is
        ||W0 - Wbar||_F^2 + 2 eta sum_{tau<t} r_bar_tau
        - eta sum_{tau<t} r_tau - ||W_t - Wbar||_F^2,
    where r_tau is the step's own risk and r_bar_tau the anchor's risk in the
    step's frozen-feature model.  Convexity plus homogeneity keep it >= 0.
    """

    def __init__(self, w_bar: np.ndarray, eta: float, name: str):
        self.w_bar = np.asarray(w_bar, dtype=np.float64)
        self.eta = float(eta)
        self.name = name
        self.cum_risk = 0.0
        self.cum_anchor = 0.0
        self.base = None
        self.slacks: list[float] = []

    def update(self, W: np.ndarray, risk_now: float, anchor_risk_now: float) -> float:
        if self.base is None:
            self.base = float(np.linalg.norm(W - self.w_bar) ** 2)
        dist = float(np.linalg.norm(W - self.w_bar) ** 2)
        slack = self.base + 2.0 * self.eta * self.cum_anchor - self.eta * self.cum_risk - dist
        self.cum_risk += risk_now
        self.cum_anchor += anchor_risk_now
        self.slacks.append(slack)
        return slack

    @property
    def min_slack(self) -> float:
        return min(self.slacks) if self.slacks else float("nan")


def _margin_u_column(a_scaled: np.ndarray, active: np.ndarray, PU: np.ndarray, y: np.ndarray) -> float:
    return float(np.min(y * (a_scaled @ (active * PU))))


def gd_train(params: NetworkParams, init: InitSnapshot, dataset: Dataset, eta: float, t_max: int,
             u_bar: UBarMatrix | None = None, monitors: Sequence[DistanceInequalityMonitor] = (),
             move_bound: float = float("nan"), stop_avg_risk: float | None = None,
             snapshot_steps: Sequence[int] = ()) -> TrainTrace:
    """Run full-batch gradient descent W <- W - eta grad for t_max steps.

    Records one row per visited iterate t = 0..T (T = t_max unless
    stop_avg_risk ends the run early); params hold the final iterate on return.
    The per-row movement chain max_s ||w_s(t)-w_s(0)|| <= (eta/sqrt(m)) sum qhat
    is asserted at every step.
    """
    if not 0.0 < eta <= 1.0:
        raise ValidationError(f"eta must lie in (0,1], got {eta}")
    if t_max < 1:
        raise ValidationError(f"t_max must be >= 1, got {t_max}")
    X, y = dataset.X, dataset.y
    n = dataset.n
    m = params.m
    a_scaled = params.a / np.sqrt(m)
    PU = u_bar.matrix @ X.T if u_bar is not None else None
    anchor_pred = {id(mon): mon.w_bar @ X.T for mon in monitors}
    cols = {k: [] for k in ("risk", "qhat", "move", "margin_u")}
    snapshots: dict[int, np.ndarray] = {}
    mon_slacks: dict[str, list[float]] = {mon.name: [] for mon in monitors}
    cum_q = 0.0
    risk_sum = 0.0
    best_risk = math.inf
    best_step = 0
    t = 0
    while True:
        W = params.W
        if not np.all(np.isfinite(W)):
            raise DivergenceError(f"non-finite weights at step {t}")
        Z = W @ X.T
        active = Z > 0.0
        f = a_scaled @ np.maximum(Z, 0.0)
        margins = y * f
        losses = logistic_loss(margins)
        risk = float(np.mean(losses))
        slopes = logistic_loss_slope(margins)
        q = float(np.mean(-slopes))
        move = float(np.max(np.linalg.norm(W - init.W0, axis=1)))
        chain = eta * cum_q / np.sqrt(m)
        if move > chain + MOVE_SLACK * (1.0 + chain):
            raise DivergenceError(f"movement chain violated at step {t}: {move} > {chain}")
        cols["risk"].append(risk)
        cols["qhat"].append(q)
        cols["move"].append(move)
        cols["margin_u"].append(_margin_u_column(a_scaled, active, PU, y) if PU is not None else math.nan)
        for mon in monitors:
            r_bar = float(np.mean(logistic_loss(y * (a_scaled @ (active * anchor_pred[id(mon)])))))
            mon_slacks[mon.name].append(mon.update(W, risk, r_bar))
        if risk < best_risk:
            best_risk = risk
            best_step = t
            snapshots[-1] = W.copy()  # rolling best; re-keyed at the end
        if t in snapshot_steps or t == 0:
            snapshots[t] = W.copy()
        risk_sum += risk
        if t >= t_max or (stop_avg_risk is not None and risk_sum / (t + 1) <= stop_avg_risk):
            break
        coef = slopes * y / n
        grad = (a_scaled[:, None] * active * coef[None, :]) @ X
        params.W = W - eta * grad
        cum_q += q
        t += 1
    snapshots[t] = params.W.copy()
    best_W = snapshots.pop(-1)
    snapshots.setdefault(best_step, best_W)
    steps = np.arange(t + 1)
    trace = TrainTrace(
        step=steps,
        risk=np.array(cols["risk"]),
        qhat=np.array(cols["qhat"]),
        max_row_move=np.array(cols["move"]),
        move_bound=np.full(t + 1, move_bound),
        min_margin_u=np.array(cols["margin_u"]),
        cum_qhat=np.concatenate([[0.0], np.cumsum(cols["qhat"])[:-1]]),
        k_min_risk=best_step,
        snapshots=snapshots,
        extras={f"slack_{name}": np.array(v) for name, v in mon_slacks.items()},
    )
    return trace


def sgd_train(params: NetworkParams, init: InitSnapshot, stream: Iterator[tuple[np.ndarray, float]],
              eta: float, n_steps: int, u_bar: UBarMatrix | None = None,
              monitors: Sequence[DistanceInequalityMonitor] = (), move_bound: float = float("nan"),
              eval_set: Dataset | None = None, eval_stride: int = 1) -> TrainTrace:
    """Online SGD: one fresh example per step, W <- W - eta loss' y grad f.

    Step i records the stream loss and -loss' of the incoming example under the
    pre-update weights.  With eval_set given, held-out misclassification and
    qhat estimates are maintained through rank-one pre-activation updates and
    recorded every eval_stride steps (every step when eval_stride == 1).
    """
    if not 0.0 < eta <= 1.0:
        raise ValidationError(f"eta must lie in (0,1], got {eta}")
    if n_steps < 1:
        raise ValidationError(f"n_steps must be >= 1, got {n_steps}")
    m = params.m
    a_scaled = params.a / np.sqrt(m)
    cols = {k: [] for k in ("risk", "qhat", "move", "margin_u")}
    mon_slacks: dict[str, list[float]] = {mon.name: [] for mon in monitors}
    eval_cols: dict[str, list[float]] = {"step": [], "test_err": [], "qhat_test": []}
    Z_eval = params.W @ eval_set.X.T if eval_set is not None else None
    cum_q = 0.0
    best_risk = math.inf
    best_step = 0
    snapshots = {0: params.W.copy()}
    for i in range(n_steps):
        try:
            x, y = next(stream)
        except StopIteration:
            raise OracleExhausted(f"oracle exhausted after {i} of {n_steps} steps") from None
        x = np.asarray(x, dtype=np.float64)
        W = params.W
        if not np.all(np.isfinite(W)):
            raise DivergenceError(f"non-finite weights at step {i}")
        z = W @ x
        active = z > 0.0
        f = float(a_scaled @ np.maximum(z, 0.0))
        loss = float(logistic_loss(y * f))
        slope = float(logistic_loss_slope(y * f))
        move = float(np.max(np.linalg.norm(W - init.W0, axis=1)))
        chain = eta * cum_q / np.sqrt(m)
        if move > chain + MOVE_SLACK * (1.0 + chain):
            raise DivergenceError(f"movement chain violated at step {i}: {move} > {chain}")
        cols["risk"].append(loss)
        cols["qhat"].append(-slope)
        cols["move"].append(move)
        if u_bar is not None:
            gu = float(y * (a_scaled * active) @ (u_bar.matrix @ x))
            cols["margin_u"].append(gu)
        else:
            cols["margin_u"].append(math.nan)
        for mon in monitors:
            anchor_pred = float(y * (a_scaled * active) @ (mon.w_bar @ x))
            r_bar = float(logistic_loss(anchor_pred))
            mon_slacks[mon.name].append(mon.update(W, loss, r_bar))
        if eval_set is not None:
            f_eval = a_scaled @ np.maximum(Z_eval, 0.0)
            me = eval_set.y * f_eval
            if (i + 1) % eval_stride == 0 or i == 0:
                eval_cols["step"].append(i)
                eval_cols["test_err"].append(float(np.mean(me <= 0.0)))
                eval_cols["qhat_test"].append(float(np.mean(-logistic_loss_slope(me))))
        if loss < best_risk:
            best_risk = loss
            best_step = i
        delta_vec = -eta * slope * y * (a_scaled * active)
        params.W = W + delta_vec[:, None] * x[None, :]
        if Z_eval is not None:
            Z_eval += np.outer(delta_vec, eval_set.X @ x)
        cum_q += -slope
    snapshots[n_steps] = params.W.copy()
    extras = {f"slack_{name}": np.array(v) for name, v in mon_slacks.items()}
    if eval_set is not None:
        extras["eval_step"] = np.array(eval_cols["step"])
        extras["test_err"] = np.array(eval_cols["test_err"])
        extras["qhat_test"] = np.array(eval_cols["qhat_test"])
    return TrainTrace(
        step=np.arange(n_steps),
        risk=np.array(cols["risk"]),
        qhat=np.array(cols["qhat"]),
        max_row_move=np.array(cols["move"]),
        move_bound=np.full(n_steps, move_bound),
        min_margin_u=np.array(cols["margin_u"]),
        cum_qhat=np.concatenate([[0.0], np.cumsum(cols["qhat"])[:-1]]),
        k_min_risk=best_step,
        snapshots=snapshots,
        extras=extras,
    )


def distance_inequality_slacks(iterates: Sequence[np.ndarray], a: np.ndarray, w_bar: np.ndarray,
                               dataset: Dataset, eta: float) -> np.ndarray:
    """Replay the anchored distance inequality over stored GD iterates.

    `iterates` are consecutive weight matrices W(0), W(1), ... from one run and
    `a` the fixed sign vector; returns one slack per iterate.
    """
    if len(iterates) == 0:
        raise ValidationError("need at least the initial iterate")
    from .model import linearized_risk

    mon = DistanceInequalityMonitor(w_bar, eta, "replay")
    for W in iterates:
        params = NetworkParams(W=np.array(W, dtype=np.float64), a=a)
        mon.update(params.W, empirical_risk(params, dataset),
                   linearized_risk(params, mon.w_bar, dataset))
    return np.array(mon.slacks)
