"""Figure rendering for test reports and power-study tables.

matplotlib is imported lazily inside the functions so the core library
and CLI stay importable on headless or matplotlib-free setups; figures
are written as PNG files next to the delimited outputs.
"""

from pathlib import Path


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def save_test_report_figures(document: dict, prefix) -> list[Path]:
    """Render eigenvalue, correlogram, and pair-statistic figures.

    ``document`` is the JSON-shaped CLI test document; one PNG set is
    written per method, named ``<prefix>_<method>_<figure>.png``.
    """
    plt = _pyplot()
    prefix = Path(prefix)
    written = []
    for result in document.get("results", []):
        method = result["method"]
        for rep in result["per-lag"]:
            tag = f"{prefix.name}_{method}_lag{rep['lag']:g}"
            diag = rep["diagnostics"]

            fig, ax = plt.subplots(figsize=(5, 3.2))
            lag_vals = diag["lag-eigenvalues"][: max(10, rep["R"])]
            ax.plot(range(1, len(lag_vals) + 1), lag_vals, "o-", label="lag covariance")
            matched = diag["matched-plain-eigenvalues"]
            ax.plot(range(1, len(matched) + 1), matched, "s--", label="matched plain")
            ax.axvline(rep["R"] + 0.5, color="gray", lw=0.8)
            ax.set_xlabel("component")
            ax.set_ylabel("eigenvalue")
            ax.legend(frameon=False)
            fig.tight_layout()
            path = prefix.parent / f"{tag}_eigenvalues.png"
            fig.savefig(path, dpi=150)
            plt.close(fig)
            written.append(path)

            if "correlograms" in diag:
                fig, ax = plt.subplots(figsize=(5, 3.2))
                for cg in diag["correlograms"]:
                    pts = ax.plot(cg["distances"], cg["rho"], ".", ms=3,
                                  label=f"component {cg['component']}")
                    ax.plot(cg["distances"], cg["fitted"], "-", lw=1,
                            color=pts[0].get_color())
                ax.axhline(0.0, color="gray", lw=0.6)
                ax.set_xlabel("distance")
                ax.set_ylabel("spatial correlation")
                ax.legend(frameon=False, fontsize=8)
                fig.tight_layout()
                path = prefix.parent / f"{tag}_correlograms.png"
                fig.savefig(path, dpi=150)
                plt.close(fig)
                written.append(path)

            fig, ax = plt.subplots(figsize=(5, 3.2))
            labels = [f"({ps['j']},{ps['k']})" for ps in rep["pair-stats"]]
            values = [ps["standardized"] for ps in rep["pair-stats"]]
            ax.bar(labels, values)
            ax.axhline(1.96, color="tab:red", lw=0.8, ls="--")
            ax.axhline(-1.96, color="tab:red", lw=0.8, ls="--")
            ax.set_xlabel("component pair")
            ax.set_ylabel("T / sigma")
            ax.set_title(f"S={rep['S']:.3g}, df={rep['df']}, p={rep['p-value']:.3g}")
            fig.tight_layout()
            path = prefix.parent / f"{tag}_pairstats.png"
            fig.savefig(path, dpi=150)
            plt.close(fig)
            written.append(path)
    return written


def save_power_figures(rows: list[dict], prefix) -> list[Path]:
    """Render rejection-rate curves (rate vs lag, one line per rho12/fve/method)."""
    plt = _pyplot()
    prefix = Path(prefix)
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    series: dict = {}
    for row in rows:
        key = (row["rho12"], row["fve"], row["method"])
        series.setdefault(key, []).append((row["lag"], row["rate"]))
    for (rho12, fve, method), pts in sorted(series.items()):
        pts.sort()
        ax.plot(
            [p[0] for p in pts],
            [p[1] for p in pts],
            "o-",
            label=f"rho12={rho12:g}, fve={fve:g}, {method}",
        )
    ax.set_xlabel("lag distance")
    ax.set_ylabel("rejection rate")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    path = prefix.parent / f"{prefix.name}_rates.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return [path]
