"""Command-line interface.

Exit codes: 0 success, 1 usage/config error, 2 data/validation error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import attacks, book as book_mod, embedder, encoder, experiment, series
from .detector import DEFAULT_GAMMA, DEFAULT_TOP_K, detect_topk, detect_zscore
from .errors import ConfigError, WatermarkError


def _norm(args):
    if getattr(args, "norm", None):
        stats = series.DatasetManifest.load(args.norm).norm_stats
        if stats is None:
            raise ConfigError(f"{args.norm} has no norm_stats")
        return series.NormStats.from_dict(stats)
    return None


def _columns(path, stats):
    channels = series.load_csv(path)
    if stats is not None:
        channels = {k: series.normalize(v, stats) for k, v in channels.items()}
    return channels


def _windows(path, K, stats):
    windows = series.channels_to_windows(series.load_csv(path), K)
    return [series.normalize(w, stats) for w in windows] if stats is not None else windows


def _dump(obj, out):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_gen(args):
    manifest = experiment.load_manifest(args.manifest) if args.manifest else experiment.load_manifest({})
    if args.seed is not None:
        manifest["seed"] = args.seed
    ds = manifest["dataset"]
    n = args.n_windows or int(ds["n_train"]) + int(ds["n_calibration"]) + int(ds["n_test"])
    comps = series.SyntheticComponents.from_dict(ds.get("components") or {})
    windows, stats = series.generate_synthetic_dataset(
        int(manifest["seed"]), n, int(ds["K"]), int(ds["L"]), comps, stats_windows=args.stats_windows
    )
    series.save_csv(args.out, series.windows_to_channels(windows))
    if args.out_manifest:
        series.DatasetManifest(
            int(manifest["seed"]), int(ds["K"]), int(ds["L"]), n, comps.to_dict(), stats.to_dict()
        ).save(args.out_manifest)


def cmd_fixture(args):
    seed = experiment.default_seed() if args.seed is None else args.seed
    fx = encoder.make_synthetic_protected_model(
        seed, args.vocab, args.d, args.P, args.warm_fraction, stride=args.stride
    )
    encoder.save_model(fx.model, args.out)
    if args.truth:
        _dump({"warm_ids": fx.warm_ids.tolist(), "cold_ids": fx.cold_ids.tolist()}, args.truth)


def cmd_build_book(args):
    model = encoder.load_model(args.model)
    corpus = _windows(args.corpus, args.K, _norm(args))
    b = book_mod.build_book(model, corpus, corpus, args.M, args.stat_mode)
    book_mod.save_book(b, args.out)


def cmd_embed(args):
    model = encoder.load_model(args.model)
    b = book_mod.load_book(args.book, model)
    stats = _norm(args)
    cfg = embedder.EmbedConfig(
        alpha=args.alpha, eta=args.eta, step=args.step, iters=args.iters,
        optimizer=args.optimizer, mode=args.mode, lambda_soft=args.lambda_soft,
    )
    out, plans = {}, {}
    raw = series.load_csv(args.input)
    for name, values in _columns(args.input, stats).items():
        wm, plan = embedder.embed(values, model, b, cfg)
        if stats is not None:
            # untouched samples keep their raw bits; a normalize round trip would not
            wm = np.where(wm != values, series.denormalize(wm, stats), raw[name])
        out[name] = wm
        plans[name] = plan.to_dict()
    series.save_csv(args.out, out)
    if args.plan:
        _dump(plans, args.plan)


def cmd_detect(args):
    model = encoder.load_model(args.model)
    b = book_mod.load_book(args.book, model)
    results = {}
    for name, values in _columns(args.input, _norm(args)).items():
        if args.method == "zscore":
            r = detect_zscore(values, model, b, args.gamma)
        else:
            r = detect_topk(values, model, None, b, args.top_k)
        results[name] = r.to_dict()
    _dump(results, args.out)


def cmd_eval(args):
    result = experiment.run_experiment(args.manifest)
    Path(args.out_report).write_text(result.report.to_json())
    if args.out_csv:
        Path(args.out_csv).write_text(experiment.rows_to_csv(result.rows))
    if args.out_tokens:
        Path(args.out_tokens).write_text(experiment.rows_to_csv(result.token_rows))


def cmd_distill(args):
    model = encoder.load_model(args.model)
    b = book_mod.load_book(args.book, model)
    stats = _norm(args)
    train = _windows(args.train, args.K, stats)
    test = _windows(args.test, args.K, stats)
    cfg = embedder.EmbedConfig(alpha=args.alpha, eta=args.eta, step=args.step, iters=args.iters)
    report = attacks.distill_and_probe(
        model, b, train, cfg, args.gamma, test_dataset=test, reg=args.reg, student=args.student
    )
    Path(args.out_report).write_text(report.to_json())


def _fsw_cfg(args):
    return attacks.FswConfig(args.amplitude, args.period, args.segment_len, args.rule, args.start)


def cmd_fsw_embed(args):
    cfg = _fsw_cfg(args)
    cols = series.load_csv(args.input)
    series.save_csv(args.out, {k: attacks.fsw_embed(v, cfg) for k, v in cols.items()})


def cmd_fsw_detect(args):
    cfg = _fsw_cfg(args)
    out = {}
    for name, values in series.load_csv(args.input).items():
        corr = attacks.fsw_correlation(values, cfg)
        out[name] = {"correlation": corr, "decision": corr > args.threshold}
    _dump(out, args.out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tswatermark", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic windows CSV")
    g.add_argument("--manifest")
    g.add_argument("--seed", type=int)
    g.add_argument("--n-windows", type=int)
    g.add_argument("--stats-windows", type=int, help="fit norm stats on the first N windows")
    g.add_argument("--out", required=True)
    g.add_argument("--out-manifest")
    g.set_defaults(func=cmd_gen)

    f = sub.add_parser("fixture", help="build the synthetic protected model")
    f.add_argument("--seed", type=int)
    f.add_argument("--vocab", type=int, default=1024)
    f.add_argument("--d", type=int, default=64)
    f.add_argument("--P", type=int, default=16)
    f.add_argument("--stride", type=int)
    f.add_argument("--warm-fraction", type=float, default=0.5)
    f.add_argument("--out", required=True)
    f.add_argument("--truth", help="also write ground-truth warm/cold ids here")
    f.set_defaults(func=cmd_fixture)

    b = sub.add_parser("build-book", help="mine cold tokens and calibrate mu/sigma")
    b.add_argument("--model", required=True)
    b.add_argument("--corpus", required=True, help="windows CSV, one column per window")
    b.add_argument("--K", type=int, default=96, help="history length of each window")
    b.add_argument("--M", type=int, default=32)
    b.add_argument("--stat-mode", choices=book_mod.STAT_MODES, default="per_window_max")
    b.add_argument("--norm", help="dataset manifest with norm_stats")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_build_book)

    e = sub.add_parser("embed", help="watermark every column of a CSV")
    e.add_argument("--model", required=True)
    e.add_argument("--book", required=True)
    e.add_argument("--in", dest="input", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--alpha", type=int, default=1)
    e.add_argument("--eta", type=float, default=0.01)
    e.add_argument("--step", type=float, default=0.1)
    e.add_argument("--iters", type=int, default=20)
    e.add_argument("--mode", choices=embedder.MODES, default="hard")
    e.add_argument("--optimizer", choices=embedder.OPTIMIZERS, default="projected_adam")
    e.add_argument("--lambda-soft", type=float, default=0.1)
    e.add_argument("--norm")
    e.add_argument("--plan", help="write the watermark plans as JSON")
    e.set_defaults(func=cmd_embed)

    d = sub.add_parser("detect", help="test every column of a CSV for the watermark")
    d.add_argument("--model", required=True)
    d.add_argument("--book", required=True)
    d.add_argument("--in", dest="input", required=True)
    d.add_argument("--gamma", type=float, default=DEFAULT_GAMMA)
    d.add_argument("--method", choices=("zscore", "topk"), default="zscore")
    d.add_argument("--top-k", type=int, default=DEFAULT_TOP_K)
    d.add_argument("--norm")
    d.add_argument("--out")
    d.set_defaults(func=cmd_detect)

    v = sub.add_parser("eval", help="run the mixed-pool experiment of a manifest")
    v.add_argument("--manifest", required=True)
    v.add_argument("--out-report", required=True)
    v.add_argument("--out-csv")
    v.add_argument("--out-tokens", help="per-token accumulated similarity table")
    v.set_defaults(func=cmd_eval)

    s = sub.add_parser("distill", help="distillation traceability probe")
    s.add_argument("--model", required=True)
    s.add_argument("--book", required=True)
    s.add_argument("--train", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--K", type=int, default=96)
    s.add_argument("--alpha", type=int, default=1)
    s.add_argument("--eta", type=float, default=0.01)
    s.add_argument("--step", type=float, default=0.1)
    s.add_argument("--iters", type=int, default=20)
    s.add_argument("--gamma", type=float, default=DEFAULT_GAMMA)
    s.add_argument("--reg", type=float, default=1e-3)
    s.add_argument("--student", choices=attacks.STUDENTS, default="linear")
    s.add_argument("--norm")
    s.add_argument("--out-report", required=True)
    s.set_defaults(func=cmd_distill)

    for name, func in (("fsw-embed", cmd_fsw_embed), ("fsw-detect", cmd_fsw_detect)):
        w = sub.add_parser(name, help="sine-pattern baseline")
        w.add_argument("--in", dest="input", required=True)
        w.add_argument("--amplitude", type=float, default=0.5)
        w.add_argument("--period", type=int, default=8)
        w.add_argument("--segment-len", type=int, default=32)
        w.add_argument("--rule", choices=attacks.SEGMENT_RULES, default="fixed")
        w.add_argument("--start", type=int, default=0)
        if name == "fsw-embed":
            w.add_argument("--out", required=True)
        else:
            w.add_argument("--threshold", type=float, default=0.5)
            w.add_argument("--out")
        w.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        args.func(args)
    except WatermarkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
