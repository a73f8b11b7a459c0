"""Three-stage multi-patch restoration network.

Each stage is an encoder-decoder over non-overlapping patches whose levels
are expressed through the sampling formalism: a level with factor r
processes L = (H/r)(W/r) pixels, gathered uniformly (stride-r grid) or
non-uniformly (learned plan). Every block refines the sampled pixels with
the content-aware module (linear attention + pixel-dependent filtering,
attentively fused), scatters them back, and blends with a 3x3 merge conv.
Stage outputs are supervised against the ground truth; the whole stage is a
global residual around its input, with the final projection zero-initialized
so an untrained network is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter

from . import autograd as ag
from .attention import AttentionParams, cross_attention, linear_attention
from .autograd import Tensor
from .errors import ConfigError, NumericError, ShapeError, WiringError
from .fusion import FusionParams, fuse
from .nnops import conv2d
from .pdffilter import PixelFilterParams, pdf_apply_nonuniform
from .sampler import (PolicyNet, RewardInputs, SamplingPlan, mask_log_prob,
                      reward, sample, select_stochastic, select_topL,
                      uniform_plan, unsample)


@dataclass
class NetworkConfig:
    stages: int = 3
    blocks: int = 2                   # content-aware resblocks per level (M)
    patch_factor: int = 2             # patch-count division between stages (P)
    channels: int = 16
    maps: int = 16                    # attention map cluster size (C2)
    K: int = 5
    delta_max: float = 4.0
    level_factors: tuple[int, ...] = (2, 4)
    alpha: float = 1.0
    beta: float = 0.5
    lr: float = 1e-4
    lr_halve_every: int = 2000
    mode: str = "uniform"             # "uniform" | "nonuniform"
    rl_block: int = 1                 # exploration block side for training draws
    seed: int = 0

    def __post_init__(self):
        if self.K % 2 == 0:
            raise ConfigError("K must be odd")
        if self.mode not in ("uniform", "nonuniform"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        for r in self.level_factors:
            if r & (r - 1):
                raise ConfigError(f"level factor {r} is not a power of 2")

    @property
    def patches_per_stage(self) -> list[int]:
        return [self.patch_factor ** (self.stages - 1 - k) for k in range(self.stages)]


@dataclass
class StageIO:
    restored: Tensor                      # (3, H, W)
    feature: Tensor                       # (C, H, W) pre-projection feature
    plans: list[SamplingPlan] = field(default_factory=list)  # level-1 plan per patch
    realized: int = 0                     # total selected pixels at level 1
    budget: int = 0                       # level-1 pixel budget
    diagnostics: dict = field(default_factory=dict)


def patch_boxes(H: int, W: int, n: int) -> list[tuple[int, int, int, int]]:
    if n == 1:
        return [(0, H, 0, W)]
    if n == 2:
        if H % 2:
            raise ShapeError(f"height {H} not divisible by 2")
        return [(0, H // 2, 0, W), (H // 2, H, 0, W)]
    if n == 4:
        if H % 2 or W % 2:
            raise ShapeError(f"shape {H}x{W} not divisible into a 2x2 grid")
        h2, w2 = H // 2, W // 2
        return [(0, h2, 0, w2), (0, h2, w2, W), (h2, H, 0, w2), (h2, H, w2, W)]
    raise ConfigError(f"patch count must be 1, 2 or 4, got {n}")


def slice_patches(img: Tensor, n: int) -> list[Tensor]:
    _, H, W = img.shape
    return [ag.crop2d(img, r0, r1, c0, c1) for r0, r1, c0, c1 in patch_boxes(H, W, n)]


def stitch_patches(patches: list[Tensor], n: int) -> Tensor:
    if n == 1:
        return patches[0]
    if n == 2:
        return ag.concat(patches, axis=1)
    if n == 4:
        top = ag.concat(patches[:2], axis=2)
        bot = ag.concat(patches[2:], axis=2)
        return ag.concat([top, bot], axis=1)
    raise ConfigError(f"patch count must be 1, 2 or 4, got {n}")


def _conv_init(rng, c_out, c_in, k, scale=None):
    scale = scale if scale is not None else np.sqrt(2.0 / (c_in * k * k))
    w = Tensor(rng.normal(0, scale, (c_out, c_in, k, k)).astype(np.float32),
               requires_grad=True)
    b = Tensor(np.zeros(c_out, np.float32), requires_grad=True)
    return w, b


class ContentAwareBlock:
    """One resblock: fused attention + PDF branches on the sampled pixels."""

    def __init__(self, cfg: NetworkConfig, rng, cross_encdec=False, cross_level=False):
        C = cfg.channels
        self.att = AttentionParams(C, cfg.maps, rng)
        self.att_ed = AttentionParams(C, cfg.maps, rng) if cross_encdec else None
        self.att_lv = AttentionParams(C, cfg.maps, rng) if cross_level else None
        self.pdf = PixelFilterParams(C, cfg.K, cfg.delta_max, rng)
        self.fus = FusionParams(C, rng)
        # merge conv starts near identity so early training stays stable
        w = np.zeros((C, C, 3, 3), np.float32)
        w[np.arange(C), np.arange(C), 1, 1] = 1.0
        w += rng.normal(0, 0.02, w.shape).astype(np.float32)
        self.w_merge = Tensor(w, requires_grad=True)
        self.b_merge = Tensor(np.zeros(C, np.float32), requires_grad=True)
        # zero-initialized residual gain: the block starts as a pass-through
        self.gain = Tensor(np.zeros((1, 1), np.float32), requires_grad=True)

    def parameters(self, prefix):
        out = {}
        out.update(self.att.parameters(f"{prefix}.att"))
        if self.att_ed is not None:
            out.update(self.att_ed.parameters(f"{prefix}.att_ed"))
        if self.att_lv is not None:
            out.update(self.att_lv.parameters(f"{prefix}.att_lv"))
        out.update(self.pdf.parameters(f"{prefix}.pdf"))
        out.update(self.fus.parameters(f"{prefix}.fus"))
        out[f"{prefix}.w_merge"] = self.w_merge
        out[f"{prefix}.b_merge"] = self.b_merge
        out[f"{prefix}.gain"] = self.gain
        return out

    def apply(self, F: Tensor, plan: SamplingPlan, uplan: SamplingPlan,
              enc_feat: Tensor | None = None, prev_feat: Tensor | None = None) -> Tensor:
        x_u = sample(F, uplan)
        x_q = x_u if plan is uplan else sample(F, plan)
        y_att = linear_attention(x_u, x_q, self.att)
        if self.att_ed is not None and enc_feat is not None:
            y_att = y_att + cross_attention(sample(enc_feat, plan), x_q, self.att_ed)
        if self.att_lv is not None and prev_feat is not None:
            y_att = y_att + cross_attention(sample(prev_feat, plan), x_q, self.att_lv)
        y_dyn = pdf_apply_nonuniform(F, plan, self.pdf)
        y = fuse(x_q, y_att, y_dyn, self.fus)
        merged = unsample(x_q + self.gain * y, plan, F)
        return conv2d(merged, self.w_merge, self.b_merge)


class Stage:
    def __init__(self, cfg: NetworkConfig, stage_index: int, rng):
        C = cfg.channels
        self.cfg = cfg
        self.index = stage_index
        self.w_head, self.b_head = _conv_init(rng, C, 3, 3)
        self.enc = [[ContentAwareBlock(cfg, rng) for _ in range(cfg.blocks)]
                    for _ in cfg.level_factors]
        cross_lv = stage_index > 0
        self.dec = [[ContentAwareBlock(cfg, rng, cross_encdec=True,
                                       cross_level=cross_lv)
                     for _ in range(cfg.blocks)]
                    for _ in cfg.level_factors]
        self.w_tail = Tensor(np.zeros((3, C, 3, 3), np.float32), requires_grad=True)
        self.b_tail = Tensor(np.zeros(3, np.float32), requires_grad=True)

    def parameters(self, prefix):
        out = {f"{prefix}.w_head": self.w_head, f"{prefix}.b_head": self.b_head}
        for li, blocks in enumerate(self.enc):
            for bi, blk in enumerate(blocks):
                out.update(blk.parameters(f"{prefix}.enc{li}.b{bi}"))
        for li, blocks in enumerate(self.dec):
            for bi, blk in enumerate(blocks):
                out.update(blk.parameters(f"{prefix}.dec{li}.b{bi}"))
        out[f"{prefix}.w_tail"] = self.w_tail
        out[f"{prefix}.b_tail"] = self.b_tail
        return out

    def run_patch(self, patch: Tensor, plans: list[SamplingPlan],
                  uplans: list[SamplingPlan],
                  prev_feat: Tensor | None) -> tuple[Tensor, Tensor]:
        F = conv2d(patch, self.w_head, self.b_head)
        if prev_feat is not None:
            F = F + prev_feat
        enc_feats = []
        for li in range(len(self.cfg.level_factors)):
            for blk in self.enc[li]:
                F = blk.apply(F, plans[li], uplans[li])
            enc_feats.append(F)
        for li in reversed(range(len(self.cfg.level_factors))):
            for blk in self.dec[li]:
                F = blk.apply(F, plans[li], uplans[li],
                              enc_feat=enc_feats[li], prev_feat=prev_feat)
        restored = patch + conv2d(F, self.w_tail, self.b_tail)
        return restored, F


class Network:
    """Full progressive network plus the shared sampling policy."""

    def __init__(self, cfg: NetworkConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        self.stages = [Stage(cfg, k, rng) for k in range(cfg.stages)]
        # bias start puts the Bernoulli rate near the level-1 budget fraction
        self.policy = PolicyNet(cfg.channels, rng,
                                init_bias=float(np.log(1.0 / 3.0)))
        self._uplan_cache: dict[tuple[int, int, int], SamplingPlan] = {}

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for k, st in enumerate(self.stages):
            out.update(st.parameters(f"stage{k}"))
        out.update(self.policy.parameters())
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.astype(np.float32) for k, p in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        params = self.parameters()
        missing = set(params) - set(state)
        if missing:
            raise ShapeError(f"checkpoint missing parameters: {sorted(missing)[:4]}...")
        for k, p in params.items():
            arr = np.asarray(state[k], dtype=p.data.dtype)
            if arr.shape != p.data.shape:
                raise ShapeError(f"parameter {k} shape {arr.shape} != {p.data.shape}")
            p.data = arr

    # -- plan construction ------------------------------------------------
    def _uplan(self, H, W, r) -> SamplingPlan:
        key = (H, W, r)
        if key not in self._uplan_cache:
            self._uplan_cache[key] = uniform_plan(H, W, r)
        return self._uplan_cache[key]

    def _patch_plans(self, Hp, Wp, G_patch: Tensor | None, training: bool,
                     rng) -> tuple[list[SamplingPlan], list[SamplingPlan]]:
        """Per-level (plan, uniform plan) pairs for one patch."""
        uplans = [self._uplan(Hp, Wp, r) for r in self.cfg.level_factors]
        if G_patch is None:
            return uplans, uplans
        budgets = [(Hp // r) * (Wp // r) for r in self.cfg.level_factors]
        if training:
            if rng is None:
                raise WiringError("stochastic plans need an rng")
            base = select_stochastic(G_patch, budgets[0], rng,
                                     block=self.cfg.rl_block)
            if base.L == 0:  # degenerate draw; keep forward well-defined
                base = select_topL(G_patch, 1)
        else:
            base = select_topL(G_patch, budgets[0])
        plans = [base]
        for L in budgets[1:]:
            plans.append(base.subplan(min(L, base.L)))
        return plans, uplans

    # -- forward ----------------------------------------------------------
    def forward(self, img: Tensor, training: bool = False,
                rng: np.random.Generator | None = None,
                plan_override: dict[int, list[list[SamplingPlan]]] | None = None,
                force_uniform: bool = False) -> list[StageIO]:
        """Run all stages; returns one StageIO per stage.

        `training` switches stages >= 2 of a nonuniform network to stochastic
        Bernoulli plans with recorded actions. `force_uniform` runs a
        nonuniform network on plain stride-r grids (used to pre-train the
        restoration path before the policy provides meaningful scores).
        `plan_override` maps stage index -> per-patch per-level plans
        (testing hook).
        """
        _, H, W = img.shape
        outs: list[StageIO] = []
        prev: StageIO | None = None
        for k, stage in enumerate(self.stages):
            n = self.cfg.patches_per_stage[k]
            boxes = patch_boxes(H, W, n)
            nonuni = (self.cfg.mode == "nonuniform" and k >= 1
                      and not force_uniform)
            G_full = None
            if nonuni:
                if prev is None:
                    raise WiringError(f"stage {k} needs previous-stage features")
                G_full = self.policy.predict_G(prev.feature)
            rest, feats, plans_out = [], [], []
            realized = budget = 0
            for pi, (r0, r1, c0, c1) in enumerate(boxes):
                patch = ag.crop2d(img, r0, r1, c0, c1)
                Hp, Wp = r1 - r0, c1 - c0
                prev_feat = (ag.crop2d(prev.feature, r0, r1, c0, c1)
                             if prev is not None else None)
                G_patch = None
                if G_full is not None:
                    G3 = G_full.reshape((1, H, W))
                    G_patch = ag.crop2d(G3, r0, r1, c0, c1).reshape((Hp, Wp))
                if plan_override and k in plan_override:
                    plans = plan_override[k][pi]
                    uplans = [self._uplan(Hp, Wp, r) for r in self.cfg.level_factors]
                else:
                    plans, uplans = self._patch_plans(Hp, Wp, G_patch, training, rng)
                rp, fp = stage.run_patch(patch, plans, uplans, prev_feat)
                rest.append(rp)
                feats.append(fp)
                plans_out.append(plans[0])
                realized += plans[0].L
                budget += (Hp // self.cfg.level_factors[0]) * (Wp // self.cfg.level_factors[0])
            io = StageIO(stitch_patches(rest, n), stitch_patches(feats, n),
                         plans_out, realized, budget)
            if G_full is not None:
                io.diagnostics["G"] = G_full.data.copy()
                mask = np.zeros((H, W), bool)
                for (r0, r1, c0, c1), pl in zip(boxes, plans_out):
                    mask[pl.rows + r0, pl.cols + c0] = True
                io.diagnostics["sampling_mask"] = mask
            outs.append(io)
            prev = io
        return outs


def restoration_loss(outs: list[StageIO], gt: Tensor) -> Tensor:
    """Mean over stages of the per-stage mean absolute error."""
    total = None
    for io in outs:
        l = ag.absval(io.restored - gt).mean()
        total = l if total is None else total + l
    return total * (1.0 / len(outs))


def rl_surrogate(outs: list[StageIO], gt: np.ndarray, cfg: NetworkConfig,
                 base_err: np.ndarray | None = None
                 ) -> tuple[Tensor | None, np.ndarray | None]:
    """Score-function loss for the sampling policy over the later stages.

    The score-function term uses the error part of the reward minus a
    per-pixel baseline. The baseline is the same error map computed from a
    plain uniform-grid forward pass when available (`base_err`), else the
    spatial mean; either is constant with respect to the sampled actions,
    so the estimator's expectation is unchanged (the score function
    integrates to zero) while the image's static error field — by far the
    largest noise source — cancels, leaving the sampling-induced error
    differences the policy is supposed to learn from. The budget is
    enforced separately by a deterministic regularizer pulling mean(G)
    toward the budget fraction: the realized over-budget indicator is a
    coin flip near the budget, and routing it through the score function
    injects a common-mode gradient whose variance swamps the per-pixel
    signal. The regularizer has the same fixed point (expected sample
    count equals the budget) with zero variance, and its gradient vanishes
    once the budget is met.
    """
    sampled = [io for io in outs if io.plans and io.plans[0].mode == "stochastic"]
    if not sampled:
        return None, None
    op1 = outs[-2].restored.data
    op2 = outs[-1].restored.data
    H, W = gt.shape[1:]
    total = None
    R_last = None
    for io in sampled:
        R = reward(RewardInputs(op1, op2, gt, io.realized, io.budget,
                                cfg.alpha, cfg.beta))
        R_last = R
        err = reward(RewardInputs(op1, op2, gt, io.realized, io.budget,
                                  cfg.alpha, beta=0.0))
        advantage = err - (base_err if base_err is not None else err.mean())
        # credit each action with the reward change over its area of
        # influence: a sampled pixel alters its whole filter footprint
        # (kernel size plus tap offsets), not just its own value, and
        # averaging over the window also suppresses single-pixel reward
        # noise the action cannot have caused
        advantage = uniform_filter(advantage, size=2 * cfg.K - 1,
                                   mode="nearest")
        n = len(io.plans)
        for (r0, r1, c0, c1), plan in zip(patch_boxes(H, W, n), io.plans):
            if plan.mode != "stochastic":
                continue  # degenerate empty draw fell back to a fixed plan
            logp = mask_log_prob(plan)
            adv = advantage[r0:r1, c0:c1]
            if plan.block > 1:
                # one action per block: credit it with the block's total
                B = plan.block
                hp, wp = adv.shape
                adv = adv.reshape(hp // B, B, wp // B, B).sum((1, 3))
            term = -(Tensor(adv.astype(logp.dtype)) * logp).sum()
            Hp, Wp = plan.grid
            dev = plan.G.mean() - plan.budget / (Hp * Wp)
            term = term + (dev * dev) * (cfg.beta * Hp * Wp)
            total = term if total is None else total + term
    return total, R_last


def training_step(net: Network, batch: list[tuple[np.ndarray, np.ndarray]],
                  optimizer, iteration: int, rl_enabled: bool = False,
                  rng: np.random.Generator | None = None,
                  rl_weight: float = 1.0) -> dict:
    """One Adam update over a batch of (blurred, sharp) image pairs.

    The learning rate halves every cfg.lr_halve_every iterations. When
    rl_enabled is off (uniform mode, or the nonuniform warm-up) the step is
    plain supervised training on uniform grids. When on, the restoration
    loss still comes from a uniform-grid forward — so the backbone receives
    exactly the signal a uniform-mode network would — while two independent
    stochastic forwards of the same image drive the policy's score-function
    loss: one provides the actions, the other's error map is the per-pixel
    baseline. Both draws share the same error-map expectation, so the
    baseline cancels every action-independent component of the reward and
    only sampling-induced error differences steer the policy.
    Raises NumericError on a non-finite loss.
    """
    cfg = net.cfg
    optimizer.zero_grad()
    total = None
    rl_total = 0.0
    for blur, sharp in batch:
        img = Tensor(blur)
        outs = net.forward(img, force_uniform=True)
        loss = restoration_loss(outs, Tensor(sharp))
        if rl_enabled and cfg.mode == "nonuniform":
            souts = net.forward(img, training=True, rng=rng)
            bouts = net.forward(img, training=True, rng=rng)
            base_err = reward(RewardInputs(
                bouts[-2].restored.data, bouts[-1].restored.data, sharp,
                0, 1, cfg.alpha, beta=0.0))
            surr, _ = rl_surrogate(souts, sharp, cfg, base_err=base_err)
            if surr is not None:
                loss = loss + surr * (rl_weight / sharp[0].size)
                rl_total += float(surr.data)
        total = loss if total is None else total + loss
    total = total * (1.0 / len(batch))
    if not np.isfinite(total.data):
        raise NumericError(f"non-finite loss at iteration {iteration}")
    total.backward()
    lr = cfg.lr * 0.5 ** (iteration // cfg.lr_halve_every)
    optimizer.step(lr=lr)
    return {"loss": float(total.data), "rl_loss": rl_total, "lr": lr}
