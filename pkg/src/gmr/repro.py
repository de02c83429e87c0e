"""Data behind the case-study figures: CSV tables, JSON manifests and SVG plots."""
from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .core import GaussianMixture, dumps17, mixture_to_dict
from .dissim import QuadratureConfig, _pair_terms, ise, kld_gm_numeric, nise
from .greedy import KLD_BARYCENTER, MergeMethod, runnalls_reduce, williams_reduce
from .merge import bsga

__all__ = [
    "CASE_IDS",
    "CASE_WEIGHTS",
    "CASE_VARIANCES",
    "CASE_MU1",
    "CASE_MU2",
    "TEST_GM_WEIGHTS",
    "TEST_GM_MEANS",
    "TEST_GM_VARIANCES",
    "case_study_mixture",
    "test_mixture",
    "ise_nise_surface",
    "grid_local_minima",
    "run_case",
    "UnknownCaseError",
]

CASE_IDS = ("fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8")

# two-component case studies
CASE_WEIGHTS = (0.45, 0.55)
CASE_VARIANCES = (0.15, 0.15)
CASE_MU1 = -1.0
CASE_MU2 = {"fig1": 1.0, "fig2": 2.0, "fig3": 4.0, "fig4": 10.0}

# five-component 1-d test mixture reduced to two components
TEST_GM_WEIGHTS = (0.083, 0.167, 0.25, 0.333, 0.167)
TEST_GM_MEANS = (1.0, 2.0, 3.0, 4.0, 10.0)
TEST_GM_VARIANCES = (0.1, 20.0, 2.0, 2.0, 2.0)

DENSITY_POINTS = 2048
DENSITY_SIGMAS = 6.0
SURFACE_MU = (-4.0, 6.0)
SURFACE_VAR_MAX = 15.0
SURFACE_SIZE = 200


class UnknownCaseError(ValueError):
    pass


def case_study_mixture(mu2: float) -> GaussianMixture:
    return GaussianMixture(np.array(CASE_WEIGHTS), np.array([CASE_MU1, mu2]), np.array(CASE_VARIANCES))


def test_mixture() -> GaussianMixture:
    return GaussianMixture(np.array(TEST_GM_WEIGHTS), np.array(TEST_GM_MEANS), np.array(TEST_GM_VARIANCES))


def _grid(mixtures: list[GaussianMixture]) -> np.ndarray:
    lo = min(m.means[:, 0].min() for m in mixtures)
    hi = max(m.means[:, 0].max() for m in mixtures)
    sig = max(np.sqrt(m.covs[:, 0, 0].max()) for m in mixtures)
    return np.linspace(lo - DENSITY_SIGMAS * sig, hi + DENSITY_SIGMAS * sig, DENSITY_POINTS)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _write_csv(path: Path, header: list[str], columns: list[np.ndarray]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in zip(*columns):
        writer.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")


# --- SVG ------------------------------------------------------------------------

_PALETTE = ("#000000", "#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def svg_lines(x: np.ndarray, series: dict[str, np.ndarray], title: str, width=640, height=400) -> str:
    pad_l, pad_r, pad_t, pad_b = 50, 20, 30, 40
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b
    ymax = max(float(np.max(y)) for y in series.values()) * 1.05 or 1.0
    x0, x1 = float(x[0]), float(x[-1])

    def sx(v):
        return pad_l + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return pad_t + ph - v / ymax * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-family="sans-serif" font-size="13">{title}</text>',
        f'<line x1="{pad_l}" y1="{pad_t + ph}" x2="{pad_l + pw}" y2="{pad_t + ph}" stroke="#444"/>',
        f'<line x1="{pad_l}" y1="{pad_t}" x2="{pad_l}" y2="{pad_t + ph}" stroke="#444"/>',
    ]
    for t in np.linspace(x0, x1, 6):
        parts.append(
            f'<text x="{sx(t):.1f}" y="{pad_t + ph + 16}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10">{t:.2f}</text>'
        )
    for t in np.linspace(0, ymax, 5):
        parts.append(
            f'<text x="{pad_l - 4}" y="{sy(t) + 3:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="10">{t:.3f}</text>'
        )
    for k, (name, y) in enumerate(series.items()):
        color = _PALETTE[k % len(_PALETTE)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        parts.append(
            f'<text x="{pad_l + pw - 4}" y="{pad_t + 14 + 14 * k}" text-anchor="end" fill="{color}" '
            f'font-family="sans-serif" font-size="11">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _color(t: float) -> str:
    # dark blue -> teal -> yellow
    anchors = np.array([[68, 1, 84], [33, 145, 140], [253, 231, 37]], dtype=float)
    t = min(max(t, 0.0), 1.0) * (len(anchors) - 1)
    k = min(int(t), len(anchors) - 2)
    c = anchors[k] + (anchors[k + 1] - anchors[k]) * (t - k)
    return "#%02x%02x%02x" % tuple(int(round(v)) for v in c)


def svg_heatmap(xs: np.ndarray, ys: np.ndarray, z: np.ndarray, title: str, marks=(), stride: int = 2) -> str:
    """Heatmap of ``z[i, j]`` over ``xs[i]`` (horizontal) and ``ys[j]`` (vertical)."""
    width, height, pad = 520, 440, 40
    zs = z[::stride, ::stride]
    nx, ny = zs.shape
    cw, ch = (width - 2 * pad) / nx, (height - 2 * pad) / ny
    lo, hi = float(np.min(z)), float(np.max(z))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-family="sans-serif" font-size="13">{title}</text>',
    ]
    for i in range(nx):
        for j in range(ny):
            t = (zs[i, j] - lo) / (hi - lo) if hi > lo else 0.0
            parts.append(
                f'<rect x="{pad + i * cw:.2f}" y="{height - pad - (j + 1) * ch:.2f}" '
                f'width="{cw + 0.05:.2f}" height="{ch + 0.05:.2f}" fill="{_color(t)}"/>'
            )
    x0, x1, y0, y1 = xs[0], xs[-1], ys[0], ys[-1]
    for mx, my in marks:
        px = pad + (mx - x0) / (x1 - x0) * (width - 2 * pad)
        py = height - pad - (my - y0) / (y1 - y0) * (height - 2 * pad)
        parts.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="4" fill="none" stroke="red" stroke-width="1.5"/>')
    parts.append(
        f'<text x="{width / 2:.1f}" y="{height - 10}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="11">mean {x0:.1f} .. {x1:.1f}; variance {y0:.3f} .. {y1:.1f} (bottom to top)</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# --- surfaces -------------------------------------------------------------------

def ise_nise_surface(f: GaussianMixture, mus: np.ndarray, variances: np.ndarray):
    """ISE and NISE from ``f`` to every single Gaussian ``N(mu, var)`` on the grid.

    Returns two arrays indexed ``[i_mu, i_var]``.
    """
    mm, vv = np.meshgrid(mus, variances, indexing="ij")
    means = mm.reshape(-1, 1)
    covs = vv.reshape(-1, 1, 1)
    Hhh = _pair_terms(f.means, f.covs, f.means, f.covs)[0]
    Jhh = float(f.weights @ Hhh @ f.weights)
    Hhr = _pair_terms(f.means, f.covs, means, covs)[0]
    Jhr = f.weights @ Hhr
    Jrr = 1.0 / np.sqrt(4.0 * np.pi * vv.ravel())
    ise_grid = np.maximum(Jhh - 2.0 * Jhr + Jrr, 0.0).reshape(mm.shape)
    nise_grid = (1.0 - 2.0 * Jhr / (Jhh + Jrr)).reshape(mm.shape)
    return ise_grid, nise_grid


def grid_local_minima(z: np.ndarray) -> list[tuple[int, int]]:
    """Interior grid points strictly below all eight neighbours."""
    out = []
    for i in range(1, z.shape[0] - 1):
        for j in range(1, z.shape[1] - 1):
            block = z[i - 1:i + 2, j - 1:j + 2].ravel()
            centre = block[4]
            if np.all(centre < np.delete(block, 4)):
                out.append((i, j))
    return out


# --- cases ------------------------------------------------------------------------

def _gauss_dict(g) -> dict:
    return {"mean": g.mean.tolist(), "cov": g.cov.tolist()}


def _bsga_case(case_id: str, out: Path) -> dict:
    mu2 = CASE_MU2[case_id]
    f = case_study_mixture(mu2)
    res = {
        "kld": bsga(f, "kld"),
        "ise": bsga(f, "ise", multistart=True),
        "nise": bsga(f, "nise", multistart=True),
    }
    singles = {k: GaussianMixture.single(r.gaussian) for k, r in res.items()}
    x = _grid([f, *singles.values()])
    cols = {"original": f.pdf(x), **{f"{k}_bsga": s.pdf(x) for k, s in singles.items()}}
    csv_name, svg_name = f"{case_id}_densities.csv", f"{case_id}.svg"
    _write_csv(out / csv_name, ["x", *cols], [x, *cols.values()])
    (out / svg_name).write_text(
        svg_lines(x, cols, f"BSGA of components with means {CASE_MU1:g} and {mu2:g}"), encoding="utf-8"
    )
    return {
        "inputs": {"weights": list(CASE_WEIGHTS), "variances": list(CASE_VARIANCES), "mu1": CASE_MU1, "mu2": mu2},
        "bsga": {
            k: {**_gauss_dict(r.gaussian), "objective": r.objective, "converged": r.converged}
            for k, r in res.items()
        },
        "density_columns": list(cols),
        "files": [csv_name, svg_name],
    }


def _surface_case(out: Path) -> dict:
    f = case_study_mixture(CASE_MU2["fig2"])
    mus = np.linspace(SURFACE_MU[0], SURFACE_MU[1], SURFACE_SIZE)
    variances = np.linspace(SURFACE_VAR_MAX / SURFACE_SIZE, SURFACE_VAR_MAX, SURFACE_SIZE)
    ise_grid, nise_grid = ise_nise_surface(f, mus, variances)
    mm, vv = np.meshgrid(mus, variances, indexing="ij")
    _write_csv(out / "fig5_surface.csv", ["mean", "variance", "ise", "nise"],
               [mm.ravel(), vv.ravel(), ise_grid.ravel(), nise_grid.ravel()])
    minima = {}
    for name, z in (("ise", ise_grid), ("nise", nise_grid)):
        pts = grid_local_minima(z)
        minima[name] = [
            {"mean": float(mus[i]), "variance": float(variances[j]), "value": float(z[i, j])} for i, j in pts
        ]
        marks = [(mus[i], variances[j]) for i, j in pts]
        (out / f"fig5_{name}.svg").write_text(
            svg_heatmap(mus, variances, z, f"{name.upper()} surface, means -1 and 2", marks), encoding="utf-8"
        )
    return {
        "inputs": {"weights": list(CASE_WEIGHTS), "variances": list(CASE_VARIANCES), "mu1": CASE_MU1,
                   "mu2": CASE_MU2["fig2"]},
        "grid": {"mean": list(SURFACE_MU), "variance": [float(variances[0]), SURFACE_VAR_MAX],
                 "size": [SURFACE_SIZE, SURFACE_SIZE]},
        "local_minima": minima,
        "files": ["fig5_surface.csv", "fig5_ise.svg", "fig5_nise.svg"],
    }


def _williams_case(case_id: str, out: Path) -> dict:
    f = test_mixture()
    method = KLD_BARYCENTER if case_id == "fig6" else MergeMethod.bsga("ise")
    g, trace = williams_reduce(f, 2, method)
    x = _grid([f])
    cols = {"original": f.pdf(x), "reduced": g.pdf(x)}
    names = [f"{case_id}_densities.csv", f"{case_id}_trace.json", f"{case_id}_reduced.json", f"{case_id}.svg"]
    _write_csv(out / names[0], ["x", *cols], [x, *cols.values()])
    (out / names[1]).write_text(dumps17(trace.to_dict()) + "\n", encoding="utf-8")
    (out / names[2]).write_text(dumps17(mixture_to_dict(g)) + "\n", encoding="utf-8")
    title = "Williams reduction, " + ("KLD barycenter merges" if case_id == "fig6" else "ISE BSGA merges")
    (out / names[3]).write_text(svg_lines(x, cols, title), encoding="utf-8")
    return {
        "inputs": _test_inputs(),
        "merge_method": method.label,
        "trace": trace.render(f.n),
        "score": trace.final_cost,
        "files": names,
    }


def _test_inputs() -> dict:
    return {"weights": list(TEST_GM_WEIGHTS), "means": list(TEST_GM_MEANS), "variances": list(TEST_GM_VARIANCES)}


def _comparison_case(out: Path, quad: QuadratureConfig) -> dict:
    f = test_mixture()
    g_w, t_w = williams_reduce(f, 2, MergeMethod.bsga("ise"))
    g_r, t_r = runnalls_reduce(f, 2, quad)
    x = _grid([f])
    cols = {"original": f.pdf(x), "williams_ise": g_w.pdf(x), "runnalls": g_r.pdf(x)}
    names = ["fig8_densities.csv", "fig8_williams_ise.json", "fig8_runnalls.json", "fig8.svg"]
    _write_csv(out / names[0], ["x", *cols], [x, *cols.values()])
    (out / names[1]).write_text(dumps17(mixture_to_dict(g_w)) + "\n", encoding="utf-8")
    (out / names[2]).write_text(dumps17(mixture_to_dict(g_r)) + "\n", encoding="utf-8")
    (out / names[3]).write_text(svg_lines(x, cols, "ISE-consistent Williams vs Runnalls"), encoding="utf-8")

    def scores(g):
        return {"ise": ise(f, g), "nise": nise(f, g), "kld": kld_gm_numeric(f, g, quad).value}

    return {
        "inputs": _test_inputs(),
        "williams_ise": {"trace": t_w.render(f.n), "scores": scores(g_w)},
        "runnalls": {"trace": t_r.render(f.n), "scores": scores(g_r)},
        "files": names,
    }


def run_case(case_id: str, outdir, quad: QuadratureConfig | None = None) -> dict:
    """Compute one case, write its files into ``outdir`` and return the manifest."""
    if case_id not in CASE_IDS:
        raise UnknownCaseError(f"unknown case {case_id!r}; expected one of {', '.join(CASE_IDS)}")
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    quad = quad or QuadratureConfig()
    if case_id in CASE_MU2:
        body = _bsga_case(case_id, out)
    elif case_id == "fig5":
        body = _surface_case(out)
    elif case_id in ("fig6", "fig7"):
        body = _williams_case(case_id, out)
    else:
        body = _comparison_case(out, quad)
    manifest = {"case": case_id, **body}
    name = f"{case_id}_manifest.json"
    manifest["files"] = [*body["files"], name]
    (out / name).write_text(dumps17(manifest) + "\n", encoding="utf-8")
    return manifest
