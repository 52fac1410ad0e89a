"""Command-line entry point.

Exit codes: 0 success, 1 validation/usage error, 2 runtime failure.
Logging level is controlled by VARGAN_LOG in {quiet, info, debug}.
"""

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("vargan")


def _setup_logging():
    level = os.environ.get("VARGAN_LOG", "info").lower()
    mapping = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(
        level=mapping.get(level, logging.INFO),
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )


def _read_targets_csv(path):
    from .data import LANDMARK_NAMES

    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    if tuple(header) != LANDMARK_NAMES:
        raise ValueError(f"targets file header does not match {LANDMARK_NAMES}")
    return np.array(rows)


def cmd_synth_data(args):
    from .data import N_LANDMARKS, generate_dataset, save_dataset

    if args.landmarks != N_LANDMARKS:
        raise ValueError(f"the sprite renderer defines exactly {N_LANDMARKS} landmarks")
    ds = generate_dataset(args.n, image_size=args.size, seed=args.seed,
                          noise=not args.no_noise)
    out = save_dataset(ds, args.out)
    log.info("wrote %d records to %s (digest %s)", ds.n, out, ds.digest()[:16])
    return 0


def cmd_train(args):
    from .training import TrainerConfig, train

    flat = {}
    if args.config:
        text = Path(args.config).read_text()
        for line in text.splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                k, _, v = line.partition("=")
                flat[k.strip()] = v.strip()
    # CLI flags override the config file
    for key, val in (
        ("method", args.method), ("dataset", args.data), ("total_steps", args.steps),
        ("batch_size", args.batch), ("seed", args.seed),
    ):
        if val is not None:
            flat[key] = str(val)
    config = TrainerConfig.from_flat(flat)
    state, rows = train(config, out_dir=args.out, log=log.info)
    log.info("trained %s to step %d (out=%s)", config.method, state.step, args.out)
    return 0


def cmd_generate(args):
    from .metrics import emit_grid, generate_samples
    from .training import load_run

    if not Path(args.checkpoint).exists():
        raise ValueError(f"checkpoint not found: {args.checkpoint}")
    state = load_run(args.checkpoint)
    targets = _read_targets_csv(args.targets)
    samples = generate_samples(state, targets, args.per_target, args.seed)
    flat = samples.reshape(-1, *samples.shape[2:])
    if args.grid:
        emit_grid(flat, args.per_target, args.grid)
        log.info("wrote grid %s", args.grid)
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        for i, img in enumerate(flat):
            emit_grid(img[None], 1, outdir / f"sample_{i:04d}.pgm")
        log.info("wrote %d samples to %s", len(flat), outdir)
    return 0


def _get_oracle(oracle_path, dataset, seed):
    from .metrics import oracle_load, oracle_save, train_oracle_regressor
    from .arch import ArchConfig

    path = Path(oracle_path)
    if path.exists():
        net, _ = oracle_load(path)
        return net
    arch = ArchConfig(image_size=dataset.image_size,
                      landmark_count=dataset.landmark_count)
    net, err = train_oracle_regressor(dataset, arch, seed=seed, log=log.info)
    oracle_save(net, arch, path)
    log.info("trained oracle regressor (holdout error %.4f) -> %s", err, path)
    return net


def cmd_evaluate(args):
    from .data import load_dataset
    from .metrics import evaluate_model
    from .training import load_run

    dataset = load_dataset(args.data)
    state = load_run(args.checkpoint)
    oracle = _get_oracle(args.oracle, dataset, args.seed)
    rng = np.random.default_rng(args.seed)
    targets = dataset.targets[rng.choice(dataset.n, size=8, replace=False)]
    report = evaluate_model(state, oracle, targets, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval_report.txt").write_text("\n".join(report.lines()) + "\n")
    for line in report.lines():
        print(line)
    return 0


def cmd_compare(args):
    from .data import load_dataset
    from .metrics import compare_report
    from .training import load_run

    dataset = load_dataset(args.data)
    state_a = load_run(args.vargan)
    state_b = load_run(args.cbigan)
    seeds = [int(s) for s in args.seeds.split(",")]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    oracle = _get_oracle(out / "oracle.vgor", dataset, seeds[0])
    rng = np.random.default_rng(seeds[0])
    targets = dataset.targets[rng.choice(dataset.n, size=8, replace=False)]
    result = compare_report(state_a, state_b, oracle, targets, seeds)
    (out / "verdicts.csv").write_text(result.verdict_csv())
    for i, (ra, rb) in enumerate(zip(result.reports_a, result.reports_b)):
        (out / f"report_vargan_seed{seeds[i]}.txt").write_text("\n".join(ra.lines()) + "\n")
        (out / f"report_cbigan_seed{seeds[i]}.txt").write_text("\n".join(rb.lines()) + "\n")
    print((out / "verdicts.csv").read_text(), end="")
    return 0


def cmd_verify_theory(args):
    from .theory import run_theory_sweep

    result = run_theory_sweep(trials=args.trials, seed=args.seed)
    for line in result.lines():
        print(line)
    n_fail = sum(not r.passed for r in result.reports)
    print(f"checks={len(result.reports)} failures={n_fail}")
    return 0 if result.passed else 2


def cmd_grid(args):
    from .metrics import emit_grid

    raw = Path(args.infile).read_bytes()
    # expects a square u8 image stream (concatenated PGM-less frames)
    side = int(args.size)
    n = len(raw) // (side * side)
    imgs = np.frombuffer(raw[: n * side * side], dtype=np.uint8)
    imgs = imgs.reshape(n, side, side).astype(np.float64) / 255.0
    emit_grid(imgs, args.cols, args.out)
    log.info("wrote grid %s", args.out)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="vargan", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth-data", help="generate the synthetic sprite-face dataset")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--size", type=int, default=32)
    sp.add_argument("--landmarks", type=int, default=5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--no-noise", action="store_true")
    sp.set_defaults(fn=cmd_synth_data)

    sp = sub.add_parser("train", help="train a generator")
    sp.add_argument("--method", choices=["vargan", "cbigan", "began"])
    sp.add_argument("--data")
    sp.add_argument("--steps", type=int)
    sp.add_argument("--batch", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--config")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("generate", help="sample a trained generator")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--targets", required=True)
    sp.add_argument("--per-target", type=int, default=8)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--grid")
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_generate)

    sp = sub.add_parser("evaluate", help="run the metric suite on a checkpoint")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--oracle", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_evaluate)

    sp = sub.add_parser("compare", help="compare two trained models")
    sp.add_argument("--vargan", required=True)
    sp.add_argument("--cbigan", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--seeds", default="0,1,2")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_compare)

    sp = sub.add_parser("verify-theory", help="run the numerical theory sweep")
    sp.add_argument("--trials", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_verify_theory)

    sp = sub.add_parser("grid", help="tile raw u8 square frames into a PGM grid")
    sp.add_argument("--in", dest="infile", required=True)
    sp.add_argument("--size", type=int, default=32)
    sp.add_argument("--cols", type=int, default=8)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_grid)
    return p


def run(argv):
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return 1
    except Exception as exc:  # runtime failure
        log.error("runtime failure: %s", exc)
        return 2


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
