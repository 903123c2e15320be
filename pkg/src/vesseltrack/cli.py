"""Batch pipeline: lift -> cost -> solve -> track -> plot.

Annotations (seed and tips) are given in flat-image pixel coordinates
plus an orientation in degrees: ``[col, row, deg]``.  Planar runs use
the image's own grid (x = col * pixel_size, y = row * pixel_size,
origin at pixel (0, 0)); spherical runs center the camera on the image
(physical x = (col - cx) * pixel_size) and convert annotations through
the inverse projective lift automatically.

The pipeline writes, in the output directory: the cost volume (and
coverage mask where applicable), the distance map, one CSV per tip, a
JSON run report and a PNG overlay.  Stages exchange data through those
artifacts, so running a stage's subcommand on the saved files
reproduces the pipeline's arrays bit for bit.  The process exit code is
0 only when the solver converged and every track reached the seed.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .arrayio import load_track_csv, load_volume, save_track_csv, save_volume
from .eikonal import DistanceMap, solve
from .errors import BadConfig, VesselTrackError
from .grids import CostVolume, GridSpec
from .lifting import (
    FrangiParams,
    Image,
    OrientationScore,
    build_cake_wavelets,
    cost_from_vesselness,
    cost_w2_from_r2,
    frangi_vesselness,
    load_image,
    orientation_score,
    vesselness_m2,
)
from .metric import MetricParams
from .projection import CameraGeometry, lift_pi_inverse, pi, pullback_cost
from .tracking import backtrack, detect_cusps

__all__ = ["PipelineConfig", "run_pipeline", "main"]

_COST_SOURCES = ("crossing_preserving", "frangi_r2", "external")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything one end-to-end run needs; loadable from a JSON file."""

    image: str
    manifold: str = "m2"
    model: str = "sr"
    cost_source: str = "crossing_preserving"
    external_cost: str | None = None
    xi: float = 4.0
    eta: float = 0.1
    lam: float = 100.0
    p: float = 2.0
    camera_a: float = 13.0 / 21.0
    camera_c: float = 0.5
    n_orientations: int = 32
    wavelet_size: int = 51
    spline_order: int = 3
    inflection: float = 0.8
    scales: tuple = (1.5, 2.5, 4.0)
    frangi_dark_ridges: bool = True
    pixel_size: float | None = None
    grid_w2: dict = field(default_factory=lambda: {
        "n_alpha": 48, "n_beta": 48, "n_phi": 32,
        "alpha_extent": 0.4, "beta_extent": 0.4,
    })
    seed: tuple = (0.0, 0.0, 0.0)
    tips: tuple = ()
    epsilon: float | None = None
    n_max: int = 6000
    tol_sup: float = 1e-4
    parallel: bool = True
    h_t: float = 0.5
    max_steps: int = 10000
    capture_radius: float = 2.0
    output_dir: str = "out"

    def __post_init__(self):
        if self.manifold not in ("m2", "w2"):
            raise BadConfig(f"manifold must be m2 or w2, got {self.manifold!r}")
        if self.model not in ("sr", "forward"):
            raise BadConfig(f"model must be sr or forward, got {self.model!r}")
        if self.cost_source not in _COST_SOURCES:
            raise BadConfig(
                f"cost_source must be one of {_COST_SOURCES}, got {self.cost_source!r}"
            )
        if (self.cost_source == "external") != (self.external_cost is not None):
            raise BadConfig(
                "exactly one cost source: pass external_cost if and only if "
                "cost_source is 'external'"
            )
        if self.xi <= 0 or self.eta < 0 or self.lam <= 0 or self.p <= 0:
            raise BadConfig("xi, lam, p must be positive and eta non-negative")
        if self.n_orientations < 4:
            raise BadConfig("need at least 4 orientations")
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))
        object.__setattr__(self, "seed", tuple(float(v) for v in self.seed))
        object.__setattr__(
            self, "tips", tuple(tuple(float(v) for v in t) for t in self.tips)
        )

    @property
    def effective_pixel_size(self) -> float:
        """Default: one orientation step per pixel step, so the spatial
        and angular axes are balanced in grid units."""
        if self.pixel_size is not None:
            return float(self.pixel_size)
        return 2.0 * np.pi / self.n_orientations

    @property
    def geometry(self) -> CameraGeometry:
        return CameraGeometry(a=self.camera_a, c=self.camera_c)

    @property
    def metric(self) -> MetricParams:
        return MetricParams(
            manifold=self.manifold, model=self.model, xi=self.xi, eta=self.eta
        )

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise BadConfig(f"missing config file: expected {path}")
        raw = json.loads(path.read_text())
        unknown = set(raw) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise BadConfig(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def as_dict(self) -> dict:
        out = {}
        for name in self.__dataclass_fields__:
            v = getattr(self, name)
            if isinstance(v, tuple):
                v = [list(x) if isinstance(x, tuple) else x for x in v]
            out[name] = v
        return out


# ---------------------------------------------------------------------------
# annotation conversion
# ---------------------------------------------------------------------------

def _image_center(img: Image) -> tuple[float, float]:
    return ((img.width - 1) / 2.0, (img.height - 1) / 2.0)


def annotation_to_point(cfg: PipelineConfig, ann, img: Image) -> np.ndarray:
    """Map a (col, row, deg) annotation to manifold coordinates."""
    col, row, deg = (float(v) for v in ann)
    ps = cfg.effective_pixel_size
    theta = np.deg2rad(deg)
    if cfg.manifold == "m2":
        return np.array([col * ps, row * ps, theta])
    cx, cy = _image_center(img)
    x = (col - cx) * ps
    y = (row - cy) * ps
    alpha, beta, phi = lift_pi_inverse(cfg.geometry, x, y, theta)
    return np.array([float(alpha), float(beta), float(phi)])


def _w2_grid(cfg: PipelineConfig) -> GridSpec:
    g = cfg.grid_w2
    na, nb, np_ = int(g["n_alpha"]), int(g["n_beta"]), int(g["n_phi"])
    ae, be = float(g["alpha_extent"]), float(g["beta_extent"])
    return GridSpec(
        manifold="w2",
        shape=(na, nb, np_),
        origin=(-ae, -be, -np.pi),
        spacing=(2 * ae / (na - 1), 2 * be / (nb - 1), 2 * np.pi / np_),
    )


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def _load_image_checked(path) -> Image:
    p = Path(path)
    if not p.exists():
        raise BadConfig(f"missing image file: expected {p}")
    return load_image(p)


def stage_lift(cfg: PipelineConfig, out: Path) -> Path:
    """Lift the image and store the orientation-response magnitudes."""
    img = _load_image_checked(cfg.image)
    psi = build_cake_wavelets(
        cfg.n_orientations, cfg.wavelet_size, cfg.spline_order, cfg.inflection
    )
    score = orientation_score(img, psi, pixel_size=cfg.effective_pixel_size)
    return save_volume(
        out / "score_abs.raw",
        np.abs(score.values),
        score.grid,
        kind="orientation_score_magnitude",
        provenance={
            "image": str(cfg.image),
            "n_orientations": cfg.n_orientations,
            "wavelet_size": cfg.wavelet_size,
            "spline_order": cfg.spline_order,
            "inflection": cfg.inflection,
        },
    )


def stage_cost(cfg: PipelineConfig, out: Path, score_path: Path | None) -> Path:
    """Build the configured cost volume and save it as cost.raw."""
    if cfg.cost_source == "external":
        values, grid, meta = load_volume(cfg.external_cost)
        if grid.manifold != cfg.manifold:
            raise BadConfig(
                f"external cost is on {grid.manifold!r}, run wants {cfg.manifold!r}"
            )
        if not np.all(values > 0.0):
            raise BadConfig("external cost must be strictly positive")
        cost = CostVolume(grid=grid, values=np.asarray(values, float),
                          provenance={"source": "external",
                                      "path": str(cfg.external_cost),
                                      **meta.get("provenance", {})})
    elif cfg.cost_source == "crossing_preserving":
        if score_path is None or not Path(score_path).exists():
            raise BadConfig(
                f"missing orientation score: expected {score_path or '<out>/score_abs.raw'}"
            )
        mag, grid_m2, _ = load_volume(score_path)
        score = OrientationScore(grid=grid_m2, values=mag.astype(float))
        ps = cfg.effective_pixel_size
        vness = vesselness_m2(score, [s * ps for s in cfg.scales])
        cost_m2 = cost_from_vesselness(
            vness, grid_m2, cfg.lam, cfg.p,
            provenance={"source": "crossing_preserving"},
        )
        if cfg.manifold == "m2":
            cost = cost_m2
        else:
            img = _load_image_checked(cfg.image)
            cx, cy = _image_center(img)
            shifted = GridSpec(
                manifold="m2",
                shape=grid_m2.shape,
                origin=(-cx * ps, -cy * ps, grid_m2.origin[2]),
                spacing=grid_m2.spacing,
            )
            centered = CostVolume(grid=shifted, values=cost_m2.values,
                                  provenance=cost_m2.provenance)
            cost = pullback_cost(centered, _w2_grid(cfg), cfg.geometry)
    else:  # frangi_r2
        img = _load_image_checked(cfg.image)
        V = frangi_vesselness(
            img, cfg.scales, FrangiParams(dark_ridges=cfg.frangi_dark_ridges)
        )
        ps = cfg.effective_pixel_size
        if cfg.manifold == "m2":
            grid = GridSpec(
                manifold="m2",
                shape=(img.width, img.height, cfg.n_orientations),
                origin=(0.0, 0.0, 0.0),
                spacing=(ps, ps, 2 * np.pi / cfg.n_orientations),
            )
            flat = np.repeat(V.T[:, :, None], cfg.n_orientations, axis=2)
            cost = cost_from_vesselness(
                flat, grid, cfg.lam, cfg.p, provenance={"source": "frangi_r2"}
            )
        else:
            cost = cost_w2_from_r2(
                V, _w2_grid(cfg), cfg.geometry, cfg.lam, cfg.p, pixel_size=ps
            )
    path = save_volume(out / "cost.raw", cost.values, cost.grid,
                       kind="cost", provenance=cost.provenance)
    if cost.coverage is not None:
        save_volume(out / "coverage.raw", cost.coverage.astype(np.float32),
                    cost.grid, kind="coverage", provenance=cost.provenance)
    return path


def _load_cost(path) -> CostVolume:
    values, grid, meta = load_volume(path)
    return CostVolume(grid=grid, values=np.asarray(values, float),
                      provenance=meta.get("provenance", {}))


def stage_solve(cfg: PipelineConfig, out: Path, cost_path: Path) -> tuple[Path, dict]:
    """Solve the eikonal PDE on a saved cost volume."""
    cost = _load_cost(cost_path)
    img = _load_image_checked(cfg.image)
    seed_pt = annotation_to_point(cfg, cfg.seed, img)
    params = cfg.metric
    eps = cfg.epsilon if cfg.epsilon is not None else "local"
    dm = solve(cost, seed_pt, params, epsilon=eps, n_max=cfg.n_max,
               tol_sup=cfg.tol_sup, parallel=cfg.parallel)
    report = dm.report.as_dict()
    prov = {
        "metric": {"manifold": params.manifold, "model": params.model,
                   "xi": params.xi, "eta": params.eta},
        "seed_index": list(dm.seed_index),
        "seed_point": [float(v) for v in seed_pt],
        "solver": report,
    }
    path = save_volume(out / "distance.raw", dm.values, cost.grid,
                       kind="distance", provenance=prov)
    (out / "solve_report.json").write_text(
        json.dumps(prov, indent=2, sort_keys=True) + "\n"
    )
    return path, report


def _load_distance(path) -> tuple[DistanceMap, MetricParams]:
    values, grid, meta = load_volume(path)
    prov = meta.get("provenance", {})
    if "metric" not in prov or "seed_index" not in prov:
        raise BadConfig(
            f"{path} lacks solver provenance; re-create it with the solve stage"
        )
    m = prov["metric"]
    params = MetricParams(manifold=m["manifold"], model=m["model"],
                          xi=float(m["xi"]), eta=float(m["eta"]))
    dm = DistanceMap(grid=grid, values=np.asarray(values, float),
                     seed_index=tuple(int(i) for i in prov["seed_index"]))
    return dm, params


def stage_track(cfg: PipelineConfig, out: Path, distance_path: Path,
                cost_path: Path) -> list[dict]:
    """Backtrack one geodesic per configured tip; save CSVs."""
    dm, params = _load_distance(distance_path)
    cost = _load_cost(cost_path)
    img = _load_image_checked(cfg.image)
    results = []
    for i, ann in enumerate(cfg.tips):
        tip = annotation_to_point(cfg, ann, img)
        track = backtrack(dm, cost, tip, params, h_t=cfg.h_t,
                          max_steps=cfg.max_steps,
                          capture_radius=cfg.capture_radius)
        path = out / f"track_{i:02d}.csv"
        save_track_csv(path, track)
        results.append({
            "file": path.name,
            "tip_annotation": list(ann),
            "status": track.status,
            "n_samples": len(track.t),
            "finsler_length": track.finsler_length,
            "cusps": list(track.cusp_locations),
        })
    (out / "track_report.json").write_text(
        json.dumps(results, indent=2, sort_keys=True) + "\n"
    )
    return results


def _tracks_to_pixels(cfg: PipelineConfig, img: Image, points: np.ndarray) -> np.ndarray:
    """Manifold track samples -> (col, row) pixel positions."""
    ps = cfg.effective_pixel_size
    if cfg.manifold == "m2":
        return np.column_stack([points[:, 0] / ps, points[:, 1] / ps])
    x, y = pi(cfg.geometry, points[:, 0], points[:, 1])
    cx, cy = _image_center(img)
    return np.column_stack([x / ps + cx, y / ps + cy])


def stage_plot(cfg: PipelineConfig, out: Path, track_files) -> Path:
    """Overlay the tracks on the input image (bare image if none)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    img = _load_image_checked(cfg.image)
    fig, ax = plt.subplots(figsize=(6, 6 * img.height / max(img.width, 1)))
    ax.imshow(img.intensities, cmap="gray", vmin=0.0, vmax=1.0)
    cmap = plt.get_cmap("tab10")
    for i, tf in enumerate(track_files):
        t, pts, u, w = load_track_csv(tf)
        px = _tracks_to_pixels(cfg, img, pts)
        keep = np.all(np.isfinite(px), axis=1)
        ax.plot(px[keep, 0], px[keep, 1], color=cmap(i % 10), lw=1.5)
        ax.plot(px[keep][-1:, 0], px[keep][-1:, 1], "*", color="yellow", ms=10)
        ax.plot(px[keep][:1, 0], px[keep][:1, 1], "o", color=cmap(i % 10), ms=4)
    ax.set_xlim(-0.5, img.width - 0.5)
    ax.set_ylim(img.height - 0.5, -0.5)
    ax.set_axis_off()
    path = out / "overlay.png"
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Run lift -> cost -> solve -> track -> plot; return the run report.

    Each stage's failure is recorded under its name and stops the run;
    artifacts written so far stay on disk.  The report's "converged"
    flag is True only if the solver converged and every track reached
    the seed.
    """
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    report: dict = {"config": cfg.as_dict(), "stages": {}, "converged": False}
    t_all = time.perf_counter()
    score_path = None
    current = "lift"
    try:
        if cfg.cost_source == "crossing_preserving":
            t0 = time.perf_counter()
            score_path = stage_lift(cfg, out)
            report["stages"]["lift"] = {"seconds": time.perf_counter() - t0,
                                        "artifact": score_path.name}
        current = "cost"
        t0 = time.perf_counter()
        cost_path = stage_cost(cfg, out, score_path)
        report["stages"]["cost"] = {"seconds": time.perf_counter() - t0,
                                    "artifact": cost_path.name}
        current = "solve"
        t0 = time.perf_counter()
        distance_path, solver_report = stage_solve(cfg, out, cost_path)
        report["stages"]["solve"] = {"seconds": time.perf_counter() - t0,
                                     "artifact": distance_path.name,
                                     "solver": solver_report}
        current = "track"
        t0 = time.perf_counter()
        tracks = stage_track(cfg, out, distance_path, cost_path)
        report["stages"]["track"] = {"seconds": time.perf_counter() - t0,
                                     "tracks": tracks}
        current = "plot"
        t0 = time.perf_counter()
        plot_path = stage_plot(cfg, out, [out / t["file"] for t in tracks])
        report["stages"]["plot"] = {"seconds": time.perf_counter() - t0,
                                    "artifact": plot_path.name}
        report["converged"] = bool(solver_report["converged"]) and all(
            t["status"] == "ok" for t in tracks
        )
    except VesselTrackError as exc:
        report["error"] = {"stage": current, "message": str(exc)}
    report["total_seconds"] = time.perf_counter() - t_all
    (out / "run_report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True, default=float) + "\n"
    )
    return report


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _parse_annotation(text: str):
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(
            "annotations are col,row,degrees triples"
        )
    return tuple(parts)


def _common_cfg(args, **overrides) -> PipelineConfig:
    base = {}
    if getattr(args, "config", None):
        base = PipelineConfig.from_json(args.config).as_dict()
    base.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig(**base)


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="vesseltrack",
        description="Geodesic vessel tracking in position-orientation space",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", help="JSON config file (flags override)")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("lift", help="image -> orientation-response volume")
    add_config(p)
    p.add_argument("--image")
    p.add_argument("--n-orientations", type=int)
    p.add_argument("--wavelet-size", type=int)
    p.add_argument("--pixel-size", type=float)

    p = sub.add_parser("cost", help="orientation score or image -> cost volume")
    add_config(p)
    p.add_argument("--image")
    p.add_argument("--score", help="score_abs.raw from the lift stage")
    p.add_argument("--source", choices=_COST_SOURCES)
    p.add_argument("--external", help="external cost volume (.raw)")
    p.add_argument("--manifold", choices=("m2", "w2"))
    p.add_argument("--lam", type=float)
    p.add_argument("--p", dest="p_exp", type=float)

    p = sub.add_parser("solve", help="cost volume -> distance map")
    add_config(p)
    p.add_argument("--cost", help="cost.raw from the cost stage")
    p.add_argument("--image")
    p.add_argument("--seed", type=_parse_annotation, help="col,row,deg")
    p.add_argument("--manifold", choices=("m2", "w2"))
    p.add_argument("--model", choices=("sr", "forward"))
    p.add_argument("--xi", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--n-max", type=int)
    p.add_argument("--tol-sup", type=float)
    p.add_argument("--sequential", action="store_true")

    p = sub.add_parser("track", help="distance map + tips -> track CSVs")
    add_config(p)
    p.add_argument("--distance", help="distance.raw from the solve stage")
    p.add_argument("--cost", help="cost.raw from the cost stage")
    p.add_argument("--image")
    p.add_argument("--tips", help="semicolon-separated col,row,deg triples")

    p = sub.add_parser("plot", help="tracks -> overlay PNG")
    add_config(p)
    p.add_argument("--image")
    p.add_argument("--tracks", nargs="*", default=None, help="track CSV files")
    p.add_argument("--manifold", choices=("m2", "w2"))

    p = sub.add_parser("run", help="full pipeline from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override the config's output directory")
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = PipelineConfig.from_json(args.config)
            if args.out:
                cfg = replace(cfg, output_dir=args.out)
            report = run_pipeline(cfg)
            if "error" in report:
                print(
                    f"error in stage {report['error']['stage']}: "
                    f"{report['error']['message']}", file=sys.stderr,
                )
                return 1
            return 0 if report["converged"] else 3

        out = Path(getattr(args, "out", None) or "out")
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "lift":
            cfg = _common_cfg(args, image=args.image,
                              n_orientations=args.n_orientations,
                              wavelet_size=args.wavelet_size,
                              pixel_size=args.pixel_size, output_dir=str(out))
            path = stage_lift(cfg, out)
            print(path)
            return 0
        if args.command == "cost":
            cfg = _common_cfg(args, image=args.image, cost_source=args.source,
                              external_cost=args.external,
                              manifold=args.manifold, lam=args.lam,
                              p=args.p_exp, output_dir=str(out))
            score = args.score or (out / "score_abs.raw")
            path = stage_cost(cfg, out, Path(score))
            print(path)
            return 0
        if args.command == "solve":
            cfg = _common_cfg(args, image=args.image, manifold=args.manifold,
                              model=args.model, xi=args.xi, eta=args.eta,
                              epsilon=args.epsilon, n_max=args.n_max,
                              tol_sup=args.tol_sup, seed=args.seed,
                              output_dir=str(out))
            if args.sequential:
                cfg = replace(cfg, parallel=False)
            cost_path = Path(args.cost or (out / "cost.raw"))
            path, report = stage_solve(cfg, out, cost_path)
            print(path)
            return 0 if report["converged"] else 3
        if args.command == "track":
            tips = None
            if args.tips:
                tips = tuple(_parse_annotation(t) for t in args.tips.split(";"))
            cfg = _common_cfg(args, image=args.image, tips=tips,
                              output_dir=str(out))
            results = stage_track(
                cfg, out,
                Path(args.distance or (out / "distance.raw")),
                Path(args.cost or (out / "cost.raw")),
            )
            for r in results:
                print(r["file"], r["status"])
            return 0 if all(r["status"] == "ok" for r in results) else 3
        if args.command == "plot":
            cfg = _common_cfg(args, image=args.image, manifold=args.manifold,
                              output_dir=str(out))
            files = args.tracks
            if files is None:
                files = sorted(out.glob("track_*.csv"))
            path = stage_plot(cfg, out, [Path(f) for f in files])
            print(path)
            return 0
    except VesselTrackError as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
