"""Command-line front end.

Global flags go before or after the verb::

    windcast --config run.cfg --out out/ generate
    windcast --out out/ analyze --input out/data.csv
    windcast --config run.cfg --out out/ train --input data.csv
    windcast --out out/ forecast --model out/model.json --input data.csv
    windcast --out out/ evaluate --forecast out/forecasts.csv --input data.csv

Exit codes: 0 success, 1 domain error (one ``error: Class: message`` line
on stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
from dataclasses import asdict, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, analysis, metrics, pipeline, synthetic
from .baselines import ModifiedPersistenceModel, persistence_forecast
from .config import RunConfig, load_config
from .deepar import DeepARModel, PredictionInterval, read_forecast_csv, train, write_forecast_csv
from .errors import AlignmentError, ConfigError, WindcastError
from .series import TimeSeries, format_timestamp, read_csv, split, write_csv

log = logging.getLogger("windcast")

MANIFEST = "manifest.json"
LOG_FILE = "windcast.log"
_UNHASHED = {MANIFEST, LOG_FILE}


# ---------------------------------------------------------------------------
# plot output


def emit_plot_data(interval: PredictionInterval, obs_timestamps, observations, out_dir, stem: str = "plot",
                   capacity: float | None = None) -> tuple[Path, Path]:
    """Write ``<stem>.csv`` (timestamp, observed, median, lower, upper) and a band chart ``<stem>.svg``."""
    ts = np.asarray(obs_timestamps, dtype=np.int64)
    y = np.asarray(observations, dtype=np.float64)
    if ts.shape != y.shape:
        raise AlignmentError(f"{len(ts)} timestamps for {len(y)} observations")
    if len(ts) != len(interval.timestamps) or np.any(ts != interval.timestamps):
        raise AlignmentError("observation timestamps do not match the forecast horizon")
    out = Path(out_dir)
    csv_path, svg_path = out / f"{stem}.csv", out / f"{stem}.svg"
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "observed", "median", "lower", "upper"])
        for k in range(len(ts)):
            w.writerow([format_timestamp(ts[k])] + [repr(float(v[k])) for v in
                                                     (y, interval.median, interval.lower, interval.upper)])
    svg_path.write_text(_band_svg(y, interval, capacity), encoding="utf-8")
    return csv_path, svg_path


def _band_svg(y, pi: PredictionInterval, capacity: float | None, width: int = 720, height: int = 360) -> str:
    pad = 40
    n = len(y)
    top = max(float(np.max(pi.upper)), float(np.max(y)), capacity or 0.0)
    bottom = min(float(np.min(pi.lower)), float(np.min(y)), 0.0)
    span = top - bottom or 1.0

    def px(k, v):
        x = pad + (width - 2 * pad) * (k / max(n - 1, 1))
        yy = height - pad - (height - 2 * pad) * ((v - bottom) / span)
        return f"{x:.2f},{yy:.2f}"

    band = [px(k, v) for k, v in enumerate(pi.upper)] + [px(k, v) for k, v in reversed(list(enumerate(pi.lower)))]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<polygon class="interval" points="{" ".join(band)}" fill="#9ecae1" fill-opacity="0.6" stroke="none"/>',
        f'<polyline class="median" points="{" ".join(px(k, v) for k, v in enumerate(pi.median))}" '
        'fill="none" stroke="#08519c" stroke-width="2"/>',
        f'<polyline class="observed" points="{" ".join(px(k, v) for k, v in enumerate(y))}" '
        'fill="none" stroke="black" stroke-width="1.5"/>',
    ]
    if capacity is not None:
        a, b = px(0, capacity), px(n - 1, capacity)
        (x1, y1), (x2, y2) = a.split(","), b.split(",")
        parts.append(f'<line class="capacity" x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" stroke="red" '
                     'stroke-dasharray="4 3"/>')
    parts += [
        f'<text x="{pad}" y="{pad - 12}" font-size="12">{format_timestamp(pi.timestamps[0])} to '
        f'{format_timestamp(pi.timestamps[-1])}, {100 * (1 - pi.alpha):g}% interval</text>',
        "</svg>",
    ]
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# helpers


def _load_series(args, cfg: RunConfig, seed: int) -> TimeSeries:
    if getattr(args, "input", None):
        return read_csv(args.input, capacity=cfg.data.capacity)
    if cfg.data.synthetic:
        return synthetic.generate(cfg.farm, cfg.weather, cfg.data.n_hours, seed)
    return read_csv(cfg.data_path(), capacity=cfg.data.capacity)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out: Path, argv: Sequence[str], cfg: RunConfig, config_path, seed: int, verb: str) -> None:
    outputs = {p.name: _sha256(p) for p in sorted(out.iterdir()) if p.is_file() and p.name not in _UNHASHED}
    manifest = {
        "verb": verb,
        "argv": list(argv),
        "config_path": str(config_path) if config_path else None,
        "config_sha256": cfg.sha256,
        "seed": seed,
        "versions": {"windcast": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "outputs": outputs,
        "created": datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def replay_argv(manifest_path, out_dir) -> list[str]:
    """The manifest's argv with ``--out`` pointed at ``out_dir``.

    Raises ConfigError when the config file changed since the recorded run.
    """
    manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    cfg_path = manifest.get("config_path")
    if cfg_path:
        current = load_config(cfg_path).sha256
        if current != manifest["config_sha256"]:
            raise ConfigError(f"{cfg_path} changed since the recorded run")
    argv, out, skip = [], str(out_dir), False
    for a in manifest["argv"]:
        if skip:
            skip = False
            continue
        if a == "--out":
            skip = True
            continue
        if a.startswith("--out="):
            continue
        argv.append(a)
    return ["--out", out] + argv


# ---------------------------------------------------------------------------
# verbs


def cmd_generate(args, cfg: RunConfig, seed: int, out: Path) -> None:
    n = args.hours or cfg.data.n_hours
    series = synthetic.generate(cfg.farm, cfg.weather, n, seed)
    write_csv(series, out / "data.csv")
    log.info("wrote %d rows", len(series))


def cmd_analyze(args, cfg: RunConfig, seed: int, out: Path) -> None:
    series = _load_series(args, cfg, seed)
    y = series.target
    results = (analysis.acf(y, args.lags), analysis.pacf(y, args.lags))
    for r in results:
        r.write(out / f"{r.kind}.txt")
    summary = [f"n = {len(y)}", f"lags = {args.lags}", f"band = {results[0].band!r}"]
    for r in results:
        summary.append(f"{r.kind}_outside_band = {len(r.outside_band())}")
    (out / "summary.txt").write_text("\n".join(summary) + "\n", encoding="utf-8")


def _model_config(args, cfg: RunConfig):
    mc = cfg.model
    if getattr(args, "epochs", None):
        mc = replace(mc, max_epochs=args.epochs)
    return mc


def cmd_train(args, cfg: RunConfig, seed: int, out: Path) -> None:
    dc = pipeline.dataset_config(args.dataset or cfg.experiment.config)
    data = dc.select(_load_series(args, cfg, seed))
    mc = _model_config(args, cfg)
    train_s, val_s, _ = split(data, cfg.experiment.split, mc.window_length)
    result = train(mc, train_s, val_s, seed)
    result.model.save(out / "model.json")
    with (out / "history.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_nll", "val_nll"])
        for h in result.history:
            w.writerow([h["epoch"], repr(h["train_nll"]), repr(h["val_nll"])])
    log.info("best epoch %d, validation NLL %.6f", result.best_epoch, result.best_val_nll)


def cmd_gridsearch(args, cfg: RunConfig, seed: int, out: Path) -> None:
    dc = pipeline.dataset_config(args.dataset or cfg.experiment.config)
    series = _load_series(args, cfg, seed)
    workers = args.workers or cfg.run.workers
    result = pipeline.grid_search(series, dc, cfg.grid, _model_config(args, cfg), seed, cfg.experiment.split,
                                  workers, cfg.experiment.alpha, cfg.experiment.m)
    result.write(out / "leaderboard.csv")
    best = asdict(result.best) if result.best is not None else None
    (out / "best_config.json").write_text(json.dumps(best, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if result.best is None:
        raise WindcastError("every grid point failed")


def cmd_forecast(args, cfg: RunConfig, seed: int, out: Path) -> None:
    model = DeepARModel.load(args.model)
    mc = model.config
    data = _load_series(args, cfg, seed).select(model.channels)
    train_s, val_s, _ = split(data, cfg.experiment.split, mc.window_length)
    exp = cfg.experiment
    origins = pipeline.forecast_origins(data, len(train_s) + len(val_s), mc.context_length, mc.horizon,
                                        exp.stride, exp.origin_hour)
    _, _, wins, dists, pis, capped = pipeline.evaluate_windows(
        model, data, origins, train_s.target, seed, exp.alpha, exp.m, args.paths
    )
    origin_ts = [w.origin_timestamp for w in wins]
    write_forecast_csv(out / "forecasts.csv", pis, origins=origin_ts)
    write_forecast_csv(out / "forecasts_clamped.csv", capped, origins=origin_ts)
    if args.samples:
        write_forecast_csv(out / "samples.csv", pis, dists, origins=origin_ts)
    mp = ModifiedPersistenceModel().fit(train_s.target, mc.horizon)
    for name, fn in (("persistence", lambda v: persistence_forecast(v, mc.horizon)), ("modified_persistence", mp.forecast)):
        point = [fn(w.context[-1]) for w in wins]
        write_forecast_csv(out / f"{name}.csv", [PredictionInterval(exp.alpha, p, p, p, w.future_timestamps)
                                                 for p, w in zip(point, wins)], origins=origin_ts)
    k = min(args.plot_index, len(wins) - 1)
    emit_plot_data(pis[k], wins[k].future_timestamps, wins[k].future_target, out, "plot", data.capacity)
    emit_plot_data(capped[k], wins[k].future_timestamps, wins[k].future_target, out, "plot_clamped", data.capacity)


def _aligned(series: TimeSeries, timestamps: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(series.timestamps, timestamps)
    ok = (idx < len(series)) & (series.timestamps[np.minimum(idx, len(series) - 1)] == timestamps)
    if not np.all(ok):
        bad = format_timestamp(timestamps[np.argmin(ok)])
        raise AlignmentError(f"no observation at forecast timestamp {bad}")
    return idx


def cmd_evaluate(args, cfg: RunConfig, seed: int, out: Path) -> None:
    table = read_forecast_csv(args.forecast)
    series = _load_series(args, cfg, seed)
    idx = _aligned(series, table.timestamps)
    y = series.target[idx]
    train_s, _, _ = split(series, cfg.experiment.split, 2)
    training = series.target[series.timestamps < table.timestamps.min()] if args.msis_history else train_s.target
    ctx = metrics.MsisContext(training, cfg.experiment.m, cfg.experiment.alpha)
    meta = {"config": "file", "model": "forecast", "source": Path(args.forecast).name,
            "origins": int(len(np.unique(table.origins))), "capacity": series.capacity}
    report = metrics.evaluate_interval(y, table.median, table.lower, table.upper, ctx, dict(meta, variant="original"))
    capped = pipeline.clamp_pi(PredictionInterval(cfg.experiment.alpha, table.lower, table.median, table.upper,
                                                  table.timestamps), series.capacity)
    capped_report = metrics.evaluate_interval(y, capped.median, capped.lower, capped.upper, ctx,
                                              dict(meta, variant="clamped"))
    report.to_json(out / "report.json")
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    capped_report.to_json(out / "report_clamped.json")
    (out / "clamp_comparison.txt").write_text(pipeline.compare_clamped(report, capped_report).to_text(),
                                              encoding="utf-8")

    # persistence baselines issued at the same origins
    origin_idx = _aligned(series, table.origins)
    H = int(np.max(np.unique(table.origins, return_counts=True)[1]))
    step = (table.timestamps - table.origins) // 3600
    last = series.target[origin_idx]
    mp = ModifiedPersistenceModel().fit(train_s.target, H)
    a = np.asarray(mp.lag_correlations)[step - 1]
    rows = [
        ("DeepAR", report),
        ("DeepAR (capped)", capped_report),
        ("Persistence", metrics.evaluate_point(y, last)),
        ("Modified Persistence", metrics.evaluate_point(y, a * last + (1 - a) * mp.mean)),
    ]
    (out / "table.txt").write_text(metrics.format_table(rows, "forecast scores"), encoding="utf-8")


VERBS = {
    "generate": cmd_generate,
    "analyze": cmd_analyze,
    "train": cmd_train,
    "gridsearch": cmd_gridsearch,
    "forecast": cmd_forecast,
    "evaluate": cmd_evaluate,
}


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=d, help="INI run configuration")
    parser.add_argument("--seed", type=int, default=d, help="overrides [run] seed")
    parser.add_argument("--out", default=argparse.SUPPRESS if suppress else ".", help="output directory")
    parser.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="windcast", description="Probabilistic wind power forecasting.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="verb", metavar="VERB", required=True)

    def verb(name, help_):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        return p

    p = verb("generate", "write a synthetic farm series")
    p.add_argument("--hours", type=int, default=None)

    p = verb("analyze", "autocorrelation and partial autocorrelation of the target")
    p.add_argument("--input")
    p.add_argument("--lags", type=int, default=50)

    p = verb("train", "train a model on the training/validation split")
    p.add_argument("--input")
    p.add_argument("--dataset", choices=sorted(pipeline.DATASET_CONFIGS))
    p.add_argument("--epochs", type=int)

    p = verb("gridsearch", "hyperparameter search scored on the validation split")
    p.add_argument("--input")
    p.add_argument("--dataset", choices=sorted(pipeline.DATASET_CONFIGS))
    p.add_argument("--epochs", type=int)
    p.add_argument("--workers", type=int)

    p = verb("forecast", "forecast every test origin with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--input")
    p.add_argument("--paths", type=int)
    p.add_argument("--samples", action="store_true", help="also write every sample path")
    p.add_argument("--plot-index", type=int, default=0, help="which test window to plot")

    p = verb("evaluate", "score a forecast file against observations")
    p.add_argument("--forecast", required=True)
    p.add_argument("--input")
    p.add_argument("--msis-history", action="store_true",
                   help="scale MSIS by all observations before the first forecast instead of the training split")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    out = Path(args.out)
    root = logging.getLogger("windcast")
    root.setLevel(logging.INFO)
    handlers = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        fh = logging.FileHandler(out / LOG_FILE, mode="w", encoding="utf-8")
        fh.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        handlers.append(fh)
        if not args.quiet:
            sh = logging.StreamHandler(sys.stderr)
            sh.setFormatter(logging.Formatter("%(message)s"))
            handlers.append(sh)
        for h in handlers:
            root.addHandler(h)

        cfg = load_config(args.config)
        seed = cfg.run.seed if args.seed is None else args.seed
        VERBS[args.verb](args, cfg, seed, out)
        _write_manifest(out, argv, cfg, args.config, seed, args.verb)
        return 0
    except Exception as exc:  # every failure becomes one stderr line and exit 1
        for h in handlers[1:]:  # keep the traceback out of stderr
            root.removeHandler(h)
        log.exception("command failed")
        print(f"error: {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}", file=sys.stderr)
        return 1
    finally:
        for h in handlers:
            root.removeHandler(h)
            h.close()


if __name__ == "__main__":
    sys.exit(main())
