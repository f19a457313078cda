#!/usr/bin/env python3
"""Freeze reference statistics fixtures under fixtures/stats/.

Requires scipy + numpy (fixture generation only; the package itself never
imports them). The Shapiro-Wilk references come straight from
scipy.stats.shapiro. The pairwise rank-comparison references are computed
from scipy primitives (rankdata for midranks, norm.sf for tail areas) with
the documented tie-corrected z statistic and Bonferroni adjustment.
"""
import json
import sys
from pathlib import Path

import numpy as np
from scipy import stats

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "fixtures" / "stats"


def shapiro_fixtures() -> list[dict]:
    rng = np.random.default_rng(20240811)
    samples = {
        "normal": rng.normal(0.0, 1.0, 50),
        "uniform": rng.uniform(-2.0, 2.0, 50),
        "exponential": rng.exponential(1.5, 50),
        "lognormal": rng.lognormal(0.0, 0.6, 50),
        "bimodal": np.concatenate(
            [rng.normal(-2.0, 0.4, 25), rng.normal(2.0, 0.4, 25)]
        ),
    }
    out = []
    for name, values in samples.items():
        values = np.round(values, 9)
        w, p = stats.shapiro(values)
        out.append(
            {"name": name, "values": values.tolist(), "W": float(w), "p": float(p)}
        )
    return out


def dunn_reference(groups: list[list[float]], alpha: float = 0.05) -> list[dict]:
    pooled = np.concatenate([np.asarray(g, dtype=float) for g in groups])
    ranks = stats.rankdata(pooled)  # midranks
    sizes = [len(g) for g in groups]
    n_total = len(pooled)
    mean_ranks = []
    offset = 0
    for size in sizes:
        mean_ranks.append(float(np.mean(ranks[offset : offset + size])))
        offset += size
    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_sum = float(np.sum(tie_counts.astype(float) ** 3 - tie_counts))
    base = n_total * (n_total + 1) / 12.0 - tie_sum / (12.0 * (n_total - 1))
    k = len(groups)
    m = k * (k - 1) / 2
    rows = []
    for i in range(k):
        for j in range(i + 1, k):
            se_sq = base * (1.0 / sizes[i] + 1.0 / sizes[j])
            z = 0.0 if se_sq <= 0 else (mean_ranks[i] - mean_ranks[j]) / np.sqrt(se_sq)
            p_raw = float(2.0 * stats.norm.sf(abs(z)))
            p_adj = float(min(1.0, p_raw * m))
            rows.append(
                {
                    "group_a": i,
                    "group_b": j,
                    "z": float(z),
                    "p_raw": p_raw,
                    "p_adjusted": p_adj,
                    "significant": bool(p_adj < alpha),
                }
            )
    return rows


def dunn_fixtures() -> list[dict]:
    rng = np.random.default_rng(77)
    sets = {
        "separated_normals": [
            np.round(rng.normal(0.0, 1.0, 12), 6).tolist(),
            np.round(rng.normal(1.6, 1.0, 15), 6).tolist(),
            np.round(rng.normal(3.1, 1.0, 13), 6).tolist(),
        ],
        "tied_integers": [
            rng.integers(0, 6, 10).tolist(),
            rng.integers(1, 7, 10).tolist(),
            rng.integers(2, 8, 10).tolist(),
            rng.integers(0, 6, 10).tolist(),
        ],
        "duplicates_across_groups": [
            [0.5, 0.5, 1.0, 1.5, 2.0, 2.0, 3.0, 3.5],
            [0.5, 1.0, 1.0, 2.0, 2.5, 3.0, 3.0, 4.0],
            [2.0, 2.5, 3.5, 4.0, 4.0, 5.0, 5.5, 6.0, 6.0],
        ],
    }
    out = []
    for name, groups in sets.items():
        groups = [[float(v) for v in g] for g in groups]
        out.append(
            {"name": name, "groups": groups, "comparisons": dunn_reference(groups)}
        )
    return out


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "shapiro.json").write_text(
        json.dumps({"n": 50, "cases": shapiro_fixtures()}, indent=2) + "\n",
        encoding="utf-8",
    )
    (OUT / "dunn.json").write_text(
        json.dumps({"alpha": 0.05, "cases": dunn_fixtures()}, indent=2) + "\n",
        encoding="utf-8",
    )
    print("wrote", OUT / "shapiro.json", "and", OUT / "dunn.json")


if __name__ == "__main__":
    sys.exit(main())
