"""Plain-text key=value configuration for the CLI.

One key per line, ``#`` starts a comment, unknown keys are rejected.
Every key has a documented default; parsing then re-emitting a config
yields the same settings.
"""

from .training import TrainConfig


class ConfigError(ValueError):
    pass


def _bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


# key -> (type tag, default, description)
CONFIG_KEYS = {
    "image": ("str", "", "path of the training image (PNG/JPEG)"),
    "out": ("str", "", "output directory for checkpoints, reports, figures"),
    "stages": ("int", 6, "number of pyramid stages N"),
    "iters": ("int", 1000, "training iterations per stage"),
    "gen_steps": ("int", 3, "generator updates per iteration (n_deep)"),
    "rec_weight": ("float", 10.0, "reconstruction loss weight gamma"),
    "scale_r": ("float", 0.72, "scaling scalar r of the stage-size formula"),
    "min_size": ("int", 25, "short side of the stage-1 image"),
    "max_size": ("int", 0, "when > 0, anchor the final stage long side here"),
    "channels": ("int", 24, "feature grid channels C (embed dim = min_size*C)"),
    "heads": ("int", 6, "attention heads"),
    "encoders": ("int", 1, "transformer encoder blocks n"),
    "latent_dim": ("int", 1024, "Gaussian latent length S"),
    "ffn_ratio": ("float", 2.0, "transformer feed-forward expansion"),
    "dropout": ("float", 0.0, "encoder dropout rate"),
    "critic_width": ("int", 32, "critic conv channels"),
    "gp_weight": ("float", 10.0, "gradient penalty weight"),
    "lr": ("float", 5e-4, "Adam learning rate"),
    "lr_decay": ("float", 1.0, "learning-rate multiplier late in each stage (1 = none)"),
    "lr_decay_at": ("float", 0.8, "fraction of a stage's iterations before the decay"),
    "beta1": ("float", 0.5, "Adam beta1"),
    "beta2": ("float", 0.999, "Adam beta2"),
    "adam_eps": ("float", 1e-8, "Adam epsilon"),
    "seed": ("int", 0, "RNG seed for the whole run"),
    "precision": ("str", "f32", "f32 or f64"),
    "deterministic": ("bool", True, "zero wall-clock fields so outputs are byte-reproducible"),
    "sample_count": ("int", 5, "number of images for the sample task"),
    "sr_target": ("int", 600, "super-resolution target long side"),
    "inject_stage": ("int", 4, "harmonization injection stage"),
    "mask": ("str", "", "optional paste-region mask for harmonization"),
    "feather": ("bool", False, "feathered mask blending after harmonization"),
    "ext_metric_name": ("str", "", "optional external metric name for eval"),
    "ext_metric_cmd": ("str", "", "external metric command with {a}/{b} placeholders"),
}

_PARSERS = {"int": int, "float": float, "str": lambda s: s, "bool": _bool}


def defaults():
    return {k: v for k, (_, v, _) in CONFIG_KEYS.items()}


def parse_config(text):
    """Parse key=value text into a full settings dict (defaults applied)."""
    cfg = defaults()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        kind = CONFIG_KEYS[key][0]
        try:
            cfg[key] = _PARSERS[kind](value)
        except (ValueError, ConfigError) as e:
            raise ConfigError(f"line {lineno}: bad value for {key}: {e}") from None
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None


def emit_config(cfg):
    """Render a settings dict back to key=value text (documented)."""
    lines = []
    for key, (kind, _, doc) in CONFIG_KEYS.items():
        val = cfg[key]
        if kind == "bool":
            val = "true" if val else "false"
        lines.append(f"{key} = {val}  # {doc}")
    return "\n".join(lines) + "\n"


_TRAIN_FIELDS = [
    "stages", "iters", "gen_steps", "rec_weight", "scale_r", "min_size",
    "max_size", "channels", "heads", "encoders", "latent_dim", "ffn_ratio",
    "dropout", "critic_width", "gp_weight", "lr", "lr_decay", "lr_decay_at",
    "beta1", "beta2", "adam_eps", "seed", "precision", "deterministic",
]


def to_train_config(cfg):
    return TrainConfig(**{k: cfg[k] for k in _TRAIN_FIELDS}).validate()
