"""Stage-wise adversarial training loop.

Per stage: iter iterations, each doing n_deep generator Adam steps (fresh
latent every step, adversarial + weighted reconstruction loss) followed by
one critic Adam step (WGAN with gradient penalty). When a stage closes,
everything trained so far is frozen, the next local block is seeded from
the previous one, and the critic continues from its current weights.
"""

import json
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__, checkpoint
from . import critic as critic_module
from .critic import Critic
from .globalnet import GlobalNetConfig
from .grad import Adam, Tape, Tensor, no_trace, ops
from .localnet import GeneratorStack, NoiseSpec
from .losses import gradient_penalty, rec_loss
from .metrics import rmse
from .schedule import (
    ScaleSchedule,
    build_pyramid,
    build_schedule,
    resample_image,
    schedule_for_target,
)


class TrainingDivergedError(RuntimeError):
    """A loss went non-finite; training state was dumped for inspection."""


@dataclass
class TrainConfig:
    stages: int = 6             # N
    iters: int = 1000           # iterations per stage
    gen_steps: int = 3          # generator updates per iteration (n_deep)
    rec_weight: float = 10.0    # gamma
    scale_r: float = 0.72
    min_size: int = 25          # short side of stage 1
    max_size: int = 0           # when > 0, anchor the final stage instead
    channels: int = 24          # feature/grid channels C
    heads: int = 6
    encoders: int = 1           # transformer blocks n
    latent_dim: int = 1024      # S
    ffn_ratio: float = 2.0
    dropout: float = 0.0
    critic_width: int = 32
    gp_weight: float = 10.0
    lr: float = 5e-4
    lr_decay: float = 1.0        # lr multiplier applied late in each stage
    lr_decay_at: float = 0.8     # fraction of the stage's iterations
    beta1: float = 0.5
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    precision: str = "f32"      # f32 | f64
    deterministic: bool = True  # zero volatile fields in manifests/reports

    def validate(self):
        if self.stages < 2:
            raise ValueError(f"stages must be >= 2, got {self.stages}")
        for name in ("iters", "gen_steps", "min_size", "channels", "heads",
                     "encoders", "latent_dim", "critic_width"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("rec_weight", "scale_r", "gp_weight", "lr"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.precision not in ("f32", "f64"):
            raise ValueError(f"precision must be f32 or f64, got {self.precision!r}")
        return self

    @property
    def dtype(self):
        return np.float32 if self.precision == "f32" else np.float64

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d).validate()


@dataclass
class StageRecord:
    stage: int
    size: tuple
    sigma: float
    losses: dict = field(default_factory=dict)
    gen_updates: int = 0
    critic_updates: int = 0
    step_log: list = field(default_factory=list)
    duration_seconds: float = 0.0
    checkpoint_path: str = ""
    checkpoint_sha256: str = ""
    param_digests_start: dict = field(default_factory=dict)
    param_digests_end: dict = field(default_factory=dict)
    critic_digest_start: str = ""
    critic_digest_end: str = ""


@dataclass
class RunManifest:
    version: str
    config: dict
    schedule: dict
    sigmas: list
    seed: int
    gp_mode: str
    stages: list
    total_duration_seconds: float = 0.0

    def to_json(self):
        d = asdict(self)
        return json.dumps(d, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        d["stages"] = [StageRecord(**{**s, "size": tuple(s["size"])}) for s in d["stages"]]
        return cls(**d)


def _schedule_dict(s):
    return {"base": list(s.base), "r": s.r, "sizes": [list(x) for x in s.sizes],
            "method": s.method}


def base_for_image(shape, cfg):
    """Stage-1 (h, w): short side = min_size, long side keeps aspect."""
    h, w = shape[0], shape[1]
    m = cfg.min_size
    if h <= w:
        return (m, max(4, int(round(m * w / h))))
    return (max(4, int(round(m * h / w))), m)


def make_schedule(image_shape, cfg):
    if cfg.max_size and cfg.max_size > 0:
        h, w = image_shape[0], image_shape[1]
        if h >= w:
            target = (cfg.max_size, max(4, int(round(cfg.max_size * w / h))))
        else:
            target = (max(4, int(round(cfg.max_size * h / w))), cfg.max_size)
        return schedule_for_target(target, cfg.scale_r, cfg.stages)
    return build_schedule(base_for_image(image_shape, cfg), cfg.scale_r, cfg.stages)


class Trainer:
    """Owns one training run: schedule, pyramid, stack, critic, manifest."""

    def __init__(self, image, cfg, out_dir=None):
        cfg.validate()
        self.cfg = cfg
        self.out_dir = out_dir
        self.image = np.asarray(image, dtype=cfg.dtype)
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise ValueError(f"training image must be (H, W, 3), got {self.image.shape}")
        self.schedule = make_schedule(self.image.shape, cfg)
        if min(self.schedule.sizes[0]) < critic_module.MIN_INPUT:
            raise ValueError(
                f"stage-1 size {self.schedule.sizes[0]} is below the critic's "
                f"{critic_module.MIN_INPUT}px receptive field; raise min_size"
            )
        tokens = min(self.schedule.base)
        if (tokens * cfg.channels) % cfg.heads != 0:
            raise ValueError(
                f"embed dim {tokens * cfg.channels} not divisible by {cfg.heads} heads"
            )
        self.gcfg = GlobalNetConfig(
            latent_dim=cfg.latent_dim,
            tokens=tokens,
            channels=cfg.channels,
            heads=cfg.heads,
            blocks=cfg.encoders,
            ffn_ratio=cfg.ffn_ratio,
            dropout=cfg.dropout,
        )
        self.rng = np.random.default_rng(cfg.seed)
        self.stack = GeneratorStack.build(self.gcfg, self.schedule, self.rng, cfg.dtype)
        self.critic = Critic(self.rng, cfg.critic_width, cfg.dtype)
        levels = build_pyramid(self.image, self.schedule)
        self.pyramid = [Tensor(lv.astype(cfg.dtype)) for lv in levels]
        self.records = []

    # -- helpers ----------------------------------------------------------

    def _all_named(self):
        return self.stack.named_parameters() + self.critic.named_parameters()

    def reconstruct(self, upto_stage):
        with no_trace():
            img = self.stack.generate(upto_stage=upto_stage, mode="reconstruction")
        return img.data

    def _stage_sigma(self, i):
        """sigma_i = RMSE(upsampled previous reconstruction, x_i); 1.0 for
        the first stage."""
        if i == 1:
            return 1.0
        prev = self.reconstruct(i - 1)
        up = resample_image(prev, self.schedule.sizes[i - 1], "up")
        return float(rmse(up, self.pyramid[i - 1].data))

    def _dump_diverged(self, stage, iteration, values):
        path = ""
        if self.out_dir:
            path = os.path.join(self.out_dir, f"diverged_stage{stage}.ckpt")
            self.save_checkpoint(path)
        raise TrainingDivergedError(
            f"non-finite loss at stage {stage} iteration {iteration}: {values}"
            + (f"; state dumped to {path}" if path else "")
        )

    # -- the loop ---------------------------------------------------------

    def train_stage(self, stage):
        cfg = self.cfg
        dt = cfg.dtype
        x_i = self.pyramid[stage - 1]
        rec = StageRecord(
            stage=stage,
            size=self.schedule.sizes[stage - 1],
            sigma=self.stack.noise.sigmas[stage - 1],
            losses={"adv_d": [], "adv_g": [], "rec": [], "gp": []},
        )
        rec.param_digests_start = checkpoint.digest_named(self._all_named())
        rec.critic_digest_start = checkpoint.digest_array(
            np.concatenate([p.data.ravel() for _, p in self.critic.named_parameters()])
        )
        opt_g = Adam(self.stack.stage_parameters(stage), cfg.lr, cfg.beta1,
                     cfg.beta2, cfg.adam_eps)
        opt_d = Adam(self.critic.parameters(), cfg.lr, cfg.beta1, cfg.beta2,
                     cfg.adam_eps)
        decay_at = int(cfg.lr_decay_at * cfg.iters)
        t0 = time.monotonic()
        for it in range(cfg.iters):
            if it == decay_at and cfg.lr_decay != 1.0:
                opt_g.lr = cfg.lr * cfg.lr_decay
                opt_d.lr = cfg.lr * cfg.lr_decay
            self.critic.set_trainable(False)
            last_adv_g = last_rec = 0.0
            for _ in range(cfg.gen_steps):
                z = Tensor(self.rng.standard_normal(cfg.latent_dim).astype(dt))
                noises = self.stack.draw_noises(stage, self.rng, dt)
                with Tape() as tape:
                    fake = self.stack.generate(
                        z=z, upto_stage=stage, mode="random", noises=noises,
                        rng=self.rng, training=True,
                    )
                    adv_g = ops.neg(self.critic.score(fake))
                    frec = self.stack.generate(upto_stage=stage, mode="reconstruction")
                    rloss = rec_loss(frec, x_i)
                    loss_g = ops.add(adv_g, ops.mul(cfg.rec_weight, rloss))
                last_adv_g, last_rec = adv_g.item(), rloss.item()
                if not np.isfinite(loss_g.item()):
                    self._dump_diverged(stage, it, {"adv_g": last_adv_g, "rec": last_rec})
                opt_g.zero_grad()
                tape.backward(loss_g)
                opt_g.step()
                rec.gen_updates += 1
                rec.step_log.append("G")
            self.critic.set_trainable(True)

            z = Tensor(self.rng.standard_normal(cfg.latent_dim).astype(dt))
            noises = self.stack.draw_noises(stage, self.rng, dt)
            with no_trace():
                fake_img = self.stack.generate(
                    z=z, upto_stage=stage, mode="random", noises=noises
                )
            with Tape() as tape:
                s_fake = self.critic.score(Tensor(fake_img.data))
                s_real = self.critic.score(x_i)
                gp = gradient_penalty(
                    self.critic, x_i, fake_img, cfg.gp_weight, rng=self.rng
                )
                loss_d = ops.add(ops.sub(s_fake, s_real), gp)
            adv_d_val = s_fake.item() - s_real.item()
            gp_val = gp.item()
            if not np.isfinite(loss_d.item()):
                self._dump_diverged(stage, it, {"adv_d": adv_d_val, "gp": gp_val})
            opt_d.zero_grad()
            tape.backward(loss_d)
            opt_d.step()
            rec.critic_updates += 1
            rec.step_log.append("D")

            rec.losses["adv_d"].append(adv_d_val)
            rec.losses["adv_g"].append(last_adv_g)
            rec.losses["rec"].append(last_rec)
            rec.losses["gp"].append(gp_val)

        rec.duration_seconds = 0.0 if cfg.deterministic else time.monotonic() - t0
        self.stack.trained_stages = stage
        rec.param_digests_end = checkpoint.digest_named(self._all_named())
        rec.critic_digest_end = checkpoint.digest_array(
            np.concatenate([p.data.ravel() for _, p in self.critic.named_parameters()])
        )
        self.records.append(rec)
        return rec

    def train_all(self):
        cfg = self.cfg
        t0 = time.monotonic()
        for stage in range(1, cfg.stages + 1):
            if stage >= 2:
                self.stack.noise.sigmas.append(self._stage_sigma(stage))
                self.stack.expand_stage()
                self.critic = self.critic.warm_start()
            rec = self.train_stage(stage)
            if self.out_dir:
                name = f"stage{stage}.ckpt"
                rec.checkpoint_sha256 = self.save_checkpoint(
                    os.path.join(self.out_dir, name)
                )
                # stored relative to the manifest so identical runs into
                # different directories stay byte-identical
                rec.checkpoint_path = name
        manifest = RunManifest(
            version=__version__,
            config=cfg.to_dict(),
            schedule=_schedule_dict(self.schedule),
            sigmas=list(self.stack.noise.sigmas),
            seed=cfg.seed,
            gp_mode="analytic-double-backward",
            stages=[asdict(r) for r in self.records],
            total_duration_seconds=0.0 if cfg.deterministic else time.monotonic() - t0,
        )
        if self.out_dir:
            os.makedirs(self.out_dir, exist_ok=True)
            mpath = os.path.join(self.out_dir, "manifest.json")
            tmp = mpath + ".tmp"
            with open(tmp, "w") as fh:
                fh.write(manifest.to_json())
            os.replace(tmp, mpath)
            write_loss_csv(manifest, os.path.join(self.out_dir, "losses.csv"))
        return manifest

    # -- persistence ------------------------------------------------------

    def save_checkpoint(self, path):
        return save_checkpoint(path, self.stack, self.critic, self.cfg)


def save_checkpoint(path, stack, critic, cfg):
    arrays = list(stack.named_parameters()) + list(critic.named_parameters())
    arrays.append(("noise.z_rec", stack.noise.z_rec))
    meta = {
        "format": "tcgan-checkpoint",
        "config": cfg.to_dict(),
        "schedule": _schedule_dict(stack.schedule),
        "sigmas": list(stack.noise.sigmas),
        "trained_stages": stack.trained_stages,
        "tokens": stack.global_net.cfg.tokens,
    }
    return checkpoint.save_state(path, arrays, meta)


def load_checkpoint(path):
    """Rebuild (stack, critic, cfg) from a checkpoint file; everything is
    loaded frozen, ready for sampling."""
    meta, arrays = checkpoint.load_state(path)
    cfg = TrainConfig.from_dict(meta["config"])
    sd = meta["schedule"]
    sched = ScaleSchedule(
        base=tuple(sd["base"]),
        r=sd["r"],
        sizes=[tuple(x) for x in sd["sizes"]],
        method=sd.get("method", "tcgan"),
    )
    gcfg = GlobalNetConfig(
        latent_dim=cfg.latent_dim,
        tokens=meta["tokens"],
        channels=cfg.channels,
        heads=cfg.heads,
        blocks=cfg.encoders,
        ffn_ratio=cfg.ffn_ratio,
        dropout=cfg.dropout,
    )
    rng = np.random.default_rng(0)  # shapes only; data overwritten below
    stack = GeneratorStack.build(gcfg, sched, rng, cfg.dtype)
    n_stages = meta["trained_stages"]
    while stack.num_stages < n_stages:
        stack.blocks.append(stack.blocks[-1].copy())
        stack.heads.append(stack.heads[-1].copy())
    stack.noise = NoiseSpec(arrays["noise.z_rec"], meta["sigmas"])
    stack.trained_stages = n_stages
    critic = Critic(rng, cfg.critic_width, cfg.dtype)
    named = dict(stack.named_parameters() + critic.named_parameters())
    expect = set(named)
    got = set(arrays) - {"noise.z_rec"}
    if expect != got:
        raise checkpoint.CorruptCheckpointError(
            f"{path}: parameter set mismatch (missing {sorted(expect - got)[:3]}, "
            f"unexpected {sorted(got - expect)[:3]})"
        )
    for name, p in named.items():
        if tuple(p.data.shape) != tuple(arrays[name].shape):
            raise checkpoint.CorruptCheckpointError(
                f"{path}: shape mismatch for {name!r}"
            )
        p.data = arrays[name].astype(cfg.dtype)
        p.trainable = False
    return stack, critic, cfg


def write_loss_csv(manifest, path):
    with open(path, "w", newline="") as fh:
        fh.write("stage,iteration,adv_d,adv_g,rec,gp\n")
        for srec in manifest.stages:
            losses = srec["losses"]
            for i in range(len(losses["adv_d"])):
                fh.write(
                    f"{srec['stage']},{i + 1},{losses['adv_d'][i]:.8g},"
                    f"{losses['adv_g'][i]:.8g},{losses['rec'][i]:.8g},"
                    f"{losses['gp'][i]:.8g}\n"
                )
    return path


def train_all(image, cfg, out_dir=None):
    """Convenience wrapper: build a Trainer, run every stage, return
    (manifest, trainer)."""
    trainer = Trainer(image, cfg, out_dir=out_dir)
    manifest = trainer.train_all()
    return manifest, trainer
