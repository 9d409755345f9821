"""Figure rendering for the CLI report paths.

Every delimited output (loss CSV, schedule CSV, eval CSV) gets a matching
PNG figure next to it.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def save_loss_figure(manifest, path):
    """2x2 grid of per-iteration loss curves, one line per stage."""
    fig, axes = plt.subplots(2, 2, figsize=(9, 6), sharex=True)
    panels = [("adv_d", "critic loss"), ("adv_g", "generator adv"),
              ("rec", "reconstruction"), ("gp", "gradient penalty")]
    for ax, (key, title) in zip(axes.ravel(), panels):
        for srec in manifest.stages:
            vals = srec["losses"][key]
            ax.plot(range(1, len(vals) + 1), vals, lw=0.9,
                    label=f"stage {srec['stage']}")
        ax.set_title(title, fontsize=10)
        ax.grid(alpha=0.3)
    axes[0, 0].legend(fontsize=7)
    for ax in axes[1]:
        ax.set_xlabel("iteration")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def save_schedule_figure(named_schedules, path):
    """Stage index vs long-side size for each schedule method."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, sched in named_schedules:
        sizes = [max(h, w) for h, w in sched.sizes]
        ax.plot(range(1, len(sizes) + 1), sizes, marker="o", label=name)
    ax.set_xlabel("stage")
    ax.set_ylabel("size (long side, px)")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def save_eval_figure(names, values, path):
    """Per-pair SSIM bars with the mean as a horizontal line."""
    fig, ax = plt.subplots(figsize=(max(4, 0.5 * len(names) + 2), 4))
    if names:
        ax.bar(range(len(names)), values, color="#4878d0")
        mean = sum(values) / len(values)
        ax.axhline(mean, color="#d65f5f", lw=1.2, label=f"mean {mean:.4f}")
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=60, ha="right", fontsize=7)
        ax.legend(fontsize=8)
    ax.set_ylabel("SSIM")
    ax.set_ylim(0, 1.05)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
