"""Command-line entry point: synth, train, render, eval, plot."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

__all__ = ["main", "build_parser", "sample_receivers"]

log = logging.getLogger("gasplat")


def sample_receivers(cfg: dict, seed: int) -> np.ndarray:
    """Uniform receiver positions in a box at fixed height, away from the transmitter axis."""
    rng = np.random.default_rng(seed)
    tx = np.asarray(cfg["tx"], dtype=float)
    n, (x0, x1), (y0, y1), z = cfg["n"], cfg["x"], cfg["y"], float(cfg["z"])
    min_h = float(cfg.get("min_horizontal", 0.0))
    out = []
    for _ in range(1000 * n):
        p = np.array([rng.uniform(x0, x1), rng.uniform(y0, y1), z])
        if np.hypot(*(p - tx)[:2]) >= min_h:
            out.append(p)
            if len(out) == n:
                return np.array(out)
    raise ValueError("could not place the requested receivers; relax min_horizontal or widen the box")


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from None


def cmd_synth(args) -> int:
    from .datasets import DatasetManifest, save_rssi_dataset, save_spectrum_dataset
    from .synth import SyntheticSceneSpec, synth_generate

    doc = _load_json(args.spec)
    split = doc.pop("split", {"test_size": 0.3, "seed": 42})
    if "rx_sampling" in doc:
        sampling = dict(doc.pop("rx_sampling"), tx=doc["tx_position"])
        doc["rx_positions"] = sample_receivers(sampling, args.seed).tolist()
    spec = SyntheticSceneSpec.from_dict(doc)
    cloud, records = synth_generate(spec)
    manifest = DatasetManifest(records, spec.tx_position, points=cloud).with_split(
        split.get("test_size", 0.3), split.get("seed", args.seed)
    )
    out = Path(args.out)
    save_spectrum_dataset(out, manifest)
    save_rssi_dataset(out / "rssi.csv", records, spec.tx_position)
    (out / "scene.json").write_text(json.dumps(spec.to_dict(), indent=1))
    print(f"wrote {len(records)} records and {len(cloud)} cloud points to {out}")
    return 0


def _load_dataset(path, points=None, tx=None):
    from .datasets import load_points, load_rssi_dataset, load_spectrum_dataset

    p = Path(path)
    m = load_spectrum_dataset(p) if p.is_dir() or p.suffix == ".json" else load_rssi_dataset(p)
    if points is not None:
        m = replace(m, points=load_points(points))
    if tx is not None:
        m = replace(m, tx_position=np.asarray(tx, dtype=float))
    return m


def _parse_vec(text: str, n: int = 3) -> list[float]:
    try:
        v = [float(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {text!r}") from None
    if len(v) != n:
        raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {text!r}")
    return v


def cmd_train(args) -> int:
    from .estimator import GaussianFieldRegressor
    from .io import save_checkpoint

    cfg = _load_json(args.config) if args.config else {}
    params = dict(cfg.get("estimator", {}))
    for key, flag in (("target", args.target), ("n_steps", args.steps), ("batch_size", args.batch_size), ("lr", args.lr)):
        if flag is not None:
            params[key] = flag
    params["seed"] = args.seed
    m = _load_dataset(args.data, args.points, args.tx)
    if m.split is None:
        split = cfg.get("split", {})
        m = m.with_split(split.get("test_size", 0.3), split.get("seed", 42))
    if m.points is None or m.tx_position is None:
        raise ValueError("training needs a point cloud and a transmitter position (see --points / --tx)")
    target = params.get("target", "spectrum")
    X = m.positions("train")
    y = m.spectra("train") if target == "spectrum" else m.rssi("train")
    est = GaussianFieldRegressor(points=m.points, tx_position=m.tx_position, run_log=args.log, **params)
    est.fit(X, y)
    save_checkpoint(est, args.out)
    print(f"trained {len(est.step_losses_)} steps in {est.fit_seconds_:.1f} s; final loss {est.step_losses_[-1]:.6g}; saved {args.out}")
    return 0


def cmd_render(args) -> int:
    from .io import load_checkpoint, plot_heatmap, save_grid_csv

    est = load_checkpoint(args.checkpoint)
    grid = est.render(np.array([args.pose]))[0]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_grid_csv(out.with_suffix(".csv"), grid)
    plot_heatmap(grid, out.with_suffix(".png"), title=f"receiver at {tuple(args.pose)}")
    if est.target == "rssi":
        print(f"rssi {est.predict(np.array([args.pose]))[0]:.3f} dB")
    print(f"wrote {out.with_suffix('.csv')} and {out.with_suffix('.png')}")
    return 0


def cmd_eval(args) -> int:
    from .io import load_checkpoint, metrics, write_report

    est = load_checkpoint(args.checkpoint)
    m = _load_dataset(args.data)
    if m.split is None and args.split != "all":
        m = m.with_split(seed=args.seed)
    X = m.positions(args.split)
    if est.target == "spectrum":
        report = metrics(est.predict(X), m.spectra(args.split), "spectrum")
    else:
        report = metrics(est.predict(X), m.rssi(args.split), "rssi")
    report["split"] = args.split
    write_report(report, args.out)
    headline = report.get("mean_ssim", report.get("median_mae_db"))
    print(f"{report['kind']} {'mean SSIM' if report['kind'] == 'spectrum' else 'median MAE dB'} {headline:.6g} over {report['n']} records")
    return 0


def cmd_plot(args) -> int:
    from .io import plot_cdf, plot_heatmap, plot_run_log

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if not (args.metrics or args.log or args.grid):
        raise ValueError("nothing to plot; pass --metrics, --log or --grid")
    if args.metrics:
        report = _load_json(args.metrics)
        if report.get("kind") == "spectrum":
            plot_cdf(report["ssim"], out / "ssim_cdf.png")
        else:
            plot_cdf(report["abs_errors_db"], out / "rssi_error_cdf.png", xlabel="absolute error (dB)")
    if args.log:
        plot_run_log(args.log, out / "loss.png")
    if args.grid:
        plot_heatmap(np.loadtxt(args.grid, delimiter=","), out / (Path(args.grid).stem + ".png"))
    print(f"plots written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gasplat", description="Gaussian radio-field reconstruction")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--seed", type=int, default=0)
        sp.set_defaults(func=func)
        return sp

    sp = add("synth", cmd_synth, "generate a synthetic dataset from a scene spec")
    sp.add_argument("--spec", required=True)
    sp.add_argument("--out", required=True)

    sp = add("train", cmd_train, "fit a model and write a checkpoint")
    sp.add_argument("--data", required=True, help="spectrum dataset directory or RSSI CSV")
    sp.add_argument("--config")
    sp.add_argument("--out", required=True)
    sp.add_argument("--log", help="JSON-lines run log")
    sp.add_argument("--target", choices=["spectrum", "rssi"])
    sp.add_argument("--steps", type=int)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--points", help="point cloud CSV (x,y,z) when the dataset has none")
    sp.add_argument("--tx", type=_parse_vec, help="transmitter position x,y,z")

    sp = add("render", cmd_render, "render a spectrum for one receiver pose")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--pose", type=_parse_vec, required=True, help="receiver position x,y,z")
    sp.add_argument("--out", required=True, help="output path prefix (.csv and .png are written)")

    sp = add("eval", cmd_eval, "evaluate a checkpoint on a dataset split")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--split", choices=["train", "test", "all"], default="test")
    sp.add_argument("--out", required=True)

    sp = add("plot", cmd_plot, "plot metrics, run logs or grids")
    sp.add_argument("--metrics")
    sp.add_argument("--log")
    sp.add_argument("--grid")
    sp.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        import torch

        torch.manual_seed(args.seed)
        return args.func(args)
    except (ValueError, OSError, RuntimeError, KeyError) as exc:
        print(f"gasplat {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
