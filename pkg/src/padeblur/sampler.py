"""Learned non-uniform pixel sampling.

A SamplingPlan carries the selected grid coordinates and, in training mode,
the probability map it was drawn from, so the score-function (REINFORCE)
update can reach the policy parameters through the hard selection step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import BudgetError, PlanModeError, ShapeError
from .nnops import conv2d, gather_pixels, scatter_pixels


@dataclass
class SamplingPlan:
    rows: np.ndarray            # (L,) int64 grid rows
    cols: np.ndarray            # (L,) int64 grid cols
    grid: tuple[int, int]       # (H, W)
    budget: int                 # target pixel count L
    mode: str                   # "topL" | "stochastic"
    G: Tensor | None = None     # probability map (H, W); graph-connected when training
    action: np.ndarray | None = None  # realized boolean mask (stochastic mode)
    score: np.ndarray | None = None   # G values at selected pixels, for subplans
    block: int = 1              # side of the square blocks drawn jointly

    @property
    def L(self) -> int:
        return len(self.rows)

    @property
    def normalized(self) -> np.ndarray:
        """(L, 2) coordinates scaled to [0, 1] (file-format form)."""
        H, W = self.grid
        out = np.empty((self.L, 2))
        out[:, 0] = self.rows / max(H - 1, 1)
        out[:, 1] = self.cols / max(W - 1, 1)
        return out

    def subplan(self, L2: int) -> "SamplingPlan":
        """Keep the L2 highest-probability pixels of this plan (deterministic)."""
        if L2 > self.L:
            raise BudgetError(f"subplan budget {L2} exceeds plan size {self.L}")
        if self.score is None:
            keep = np.arange(L2)
        else:
            order = np.argsort(-self.score, kind="stable")[:L2]
            keep = np.sort(order)
        return SamplingPlan(self.rows[keep], self.cols[keep], self.grid, L2,
                            self.mode,
                            score=None if self.score is None else self.score[keep])


def uniform_plan(H: int, W: int, r: int = 1) -> SamplingPlan:
    """Strided uniform grid: (H//r) x (W//r) pixels, raster order."""
    off = (r - 1) // 2
    rr, cc = np.meshgrid(np.arange(off, H, r), np.arange(off, W, r), indexing="ij")
    rows = rr.reshape(-1).astype(np.int64)
    cols = cc.reshape(-1).astype(np.int64)
    return SamplingPlan(rows, cols, (H, W), len(rows), "topL")


def sample(x: Tensor, plan: SamplingPlan) -> Tensor:
    """Exact integer gather of the planned pixels: (C,H,W) -> (C,L)."""
    if x.shape[1:] != plan.grid:
        raise ShapeError(f"feature grid {x.shape[1:]} != plan grid {plan.grid}")
    return gather_pixels(x, plan.rows, plan.cols)


def unsample(y: Tensor, plan: SamplingPlan, skip: Tensor) -> Tensor:
    """Scatter sampled pixels back; unsampled positions take `skip` values."""
    if skip.shape[1:] != plan.grid:
        raise ShapeError(f"skip grid {skip.shape[1:]} != plan grid {plan.grid}")
    return scatter_pixels(y, plan.rows, plan.cols, skip)


class PolicyNet:
    """Lightweight conv stack producing the hard-pixel probability map G.

    pi(.) = conv7x7(C -> C//2) + ReLU + conv5x5(C//2 -> 1); G = sigmoid(pi).
    The wide kernels give an 11x11 receptive field: judging how blurred a
    neighbourhood is takes more context than a restoration feature carries
    at a single position.
    """

    def __init__(self, channels: int, rng: np.random.Generator,
                 init_bias: float = 0.0):
        c_mid = max(channels // 2, 1)
        s1 = np.sqrt(2.0 / (channels * 49))
        self.w1 = Tensor(rng.normal(0, s1, (c_mid, channels, 7, 7)).astype(np.float32),
                         requires_grad=True)
        self.b1 = Tensor(np.zeros(c_mid, np.float32), requires_grad=True)
        self.w2 = Tensor(np.zeros((1, c_mid, 5, 5), np.float32), requires_grad=True)
        self.b2 = Tensor(np.full(1, init_bias, np.float32), requires_grad=True)

    def parameters(self) -> dict[str, Tensor]:
        return {"policy.w1": self.w1, "policy.b1": self.b1,
                "policy.w2": self.w2, "policy.b2": self.b2}

    def predict_G(self, x_prev: Tensor) -> Tensor:
        """Per-pixel probability of being hard to restore, shape (H, W).

        The input features are detached: the score-function loss trains
        only this head, so its gradient noise never reaches the shared
        restoration backbone.
        """
        h = ag.relu(conv2d(Tensor(x_prev.data), self.w1, self.b1))
        logits = conv2d(h, self.w2, self.b2)
        return ag.sigmoid(logits).reshape(x_prev.shape[1:])


def select_topL(G: Tensor | np.ndarray, L: int) -> SamplingPlan:
    """The L most probable pixels; ties broken toward the smaller raster index."""
    g = G.data if isinstance(G, Tensor) else np.asarray(G)
    H, W = g.shape
    if L > H * W:
        raise BudgetError(f"budget {L} exceeds grid size {H * W}")
    top = np.argsort(-g.reshape(-1), kind="stable")[:L]
    top = np.sort(top)
    rows, cols = np.divmod(top, W)
    return SamplingPlan(rows.astype(np.int64), cols.astype(np.int64), (H, W), L,
                        "topL", G=G if isinstance(G, Tensor) else None,
                        score=g.reshape(-1)[top])


def select_stochastic(G: Tensor, L: int, rng: np.random.Generator,
                      block: int = 1) -> SamplingPlan:
    """Bernoulli draw of the training-time sampling mask.

    block=1 draws every pixel independently with probability G_j. block>1
    draws each `block`-sized square jointly with probability mean(G) over
    the square: coarser exploration whose reward effect per action is large
    enough to rise above the estimation noise, while G itself stays a
    per-pixel map.
    """
    g = G.data
    H, W = g.shape
    if block > 1:
        if H % block or W % block:
            raise ShapeError(f"grid {H}x{W} not divisible by block {block}")
        gb = g.reshape(H // block, block, W // block, block).mean((1, 3))
        action = np.kron(rng.random(gb.shape) < gb,
                         np.ones((block, block), bool))
    else:
        action = rng.random(g.shape) < g
    flat = np.flatnonzero(action.reshape(-1))
    rows, cols = np.divmod(flat, W)
    return SamplingPlan(rows.astype(np.int64), cols.astype(np.int64), (H, W), L,
                        "stochastic", G=G, action=action,
                        score=g.reshape(-1)[flat], block=block)


def mask_log_prob(plan: SamplingPlan) -> Tensor:
    """Log-probability map of the realized select/skip actions under G."""
    if plan.mode != "stochastic" or plan.G is None or plan.action is None:
        raise PlanModeError("log-probabilities exist only for stochastic plans")
    # squeeze G into [eps, 1-eps] so saturated probabilities cannot
    # produce log(0); the map stays differentiable
    eps = 1e-6
    G = plan.G * (1.0 - 2.0 * eps) + eps
    action = plan.action
    if plan.block > 1:
        B = plan.block
        H, W = plan.grid
        G = G.reshape((H // B, B, W // B, B)).mean(axis=(1, 3))
        action = action[::B, ::B]
    a = Tensor(action.astype(G.dtype))
    one = Tensor(np.ones_like(G.data))
    return a * ag.log(G) + (one - a) * ag.log(one - G)


@dataclass
class RewardInputs:
    op1: np.ndarray             # earlier-stage output (3,H,W)
    op2: np.ndarray             # later-stage output (3,H,W)
    gt: np.ndarray              # ground truth (3,H,W)
    realized: int               # L'
    budget: int                 # L
    alpha: float = 1.0
    beta: float = 0.5


def reward(inp: RewardInputs) -> np.ndarray:
    """Per-pixel reward: negative stage errors minus the over-budget penalty."""
    if not (inp.op1.shape == inp.op2.shape == inp.gt.shape):
        raise ShapeError("reward inputs must share a shape")
    err = (np.abs(inp.op2 - inp.gt).mean(axis=0)
           + np.abs(inp.op1 - inp.gt).mean(axis=0))
    r = -inp.alpha * err
    if inp.realized > inp.budget:
        r = r - inp.beta
    return r


def policy_surrogate_loss(plan: SamplingPlan, R: np.ndarray) -> Tensor:
    """Negated score-function objective: -sum_j R_j * logprob_j(a_j).

    Each pixel's reward multiplies its own action log-probability (shared
    parameters, per-pixel credit). Minimizing this performs gradient ascent
    on the expected reward.
    """
    logp = mask_log_prob(plan)
    return -(Tensor(R.astype(logp.dtype)) * logp).sum()


def policy_gradient_step(plan: SamplingPlan, R: np.ndarray, policy: PolicyNet,
                         lr: float):
    """One plain-SGD ascent step on the policy parameters."""
    loss = policy_surrogate_loss(plan, R)
    params = list(policy.parameters().values())
    for p in params:
        p.grad = None
    loss.backward()
    for p in params:
        if p.grad is not None:
            p.data = p.data - lr * p.grad
            p.grad = None
    return float(loss.data)
