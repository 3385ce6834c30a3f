"""Render BLER/BER curves from result rows to a PNG file."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

MARKERS = "osv^D*Px"


def plot_rows(rows, path, metric="bler"):
    """One semilog curve per decoder over the SNR points in `rows`
    (dicts as produced by sim.run), written to `path`."""
    by_dec = {}
    for row in rows:
        by_dec.setdefault(row["decoder"], []).append(
            (float(row["snr_db"]), float(row[metric])))
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for i, (name, pts) in enumerate(by_dec.items()):
        pts.sort()
        xs = [p[0] for p in pts]
        ys = [max(p[1], 1e-12) for p in pts]
        ax.semilogy(xs, ys, marker=MARKERS[i % len(MARKERS)], label=name)
    ax.set_xlabel("Eb/N0 (dB)")
    ax.set_ylabel(metric.upper())
    ax.grid(True, which="both", alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
