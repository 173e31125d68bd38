"""Command-line interface.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 numeric failure.
Settings come from flags, then an optional JSON config file, then defaults;
``ULDA_SEED`` overrides the config file's seed but not ``--seed``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

from ulda import io as uio
from ulda.annotator_sim import SimConfig, simulate
from ulda.cwl import SCHEMES, compute_weights
from ulda.data import DataError, NumericError, SequenceDataset
from ulda.harness import ExperimentConfig, run_experiment
from ulda.label_dist import DiscreteKernel, LabelBinning, bin_labels, build_kernel, convolve, make_plan
from ulda.svg import PALETTE, bench_figure, histogram_figure
from ulda.tns import augment_sequence

log = logging.getLogger("ulda")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    bins: int = 100
    kernel_size: float = 0.06
    kernel_sigma: float = 0.02
    identity_kernel: bool = False
    threshold: int = 10
    seed: int = 0
    clamp: bool = False
    regressor: str = "ridge"
    ridge_penalty: float = 1.0
    knn_k: int = 10
    schemes: tuple = ("cwl",)
    region_threshold: float = 500.0
    region_fraction: Optional[float] = None
    repeats: int = 3
    train_fraction: float = 0.5
    missing_bins: str = "skip"

    def binning(self, label_range) -> LabelBinning:
        return LabelBinning(label_range[0], label_range[1], self.bins)

    def kernel(self, binning: LabelBinning) -> DiscreteKernel:
        if self.identity_kernel:
            return DiscreteKernel.identity()
        return build_kernel(self.kernel_size, self.kernel_sigma, binning.bin_width)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schemes"] = list(self.schemes)
        return d


_RUN_FIELDS = {f.name for f in fields(RunConfig)}
_SIM_FIELDS = {f.name for f in fields(SimConfig)}

# flag dest -> SimConfig field
_SIM_FLAGS = {
    "sequences": "sequence_count",
    "frames": "frames_per_sequence",
    "dim": "feature_dim",
    "annotators": "annotator_count",
    "vote_std": "vote_std",
    "smoothness": "smoothness",
    "feature_noise": "feature_noise",
    "label_min": "label_min",
    "label_max": "label_max",
}


def _load_config_file(path: Optional[str]) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})")
    if not isinstance(data, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    unknown = set(data) - _RUN_FIELDS - {"sim"}
    if unknown:
        raise UsageError(f"{path}: unknown config keys {sorted(unknown)}")
    sim = data.get("sim", {})
    unknown = set(sim) - _SIM_FIELDS
    if unknown:
        raise UsageError(f"{path}: unknown sim config keys {sorted(unknown)}")
    return data


def resolve_config(args) -> tuple:
    """Merge defaults < config file < ULDA_SEED < flags into (RunConfig, SimConfig)."""
    file_cfg = _load_config_file(getattr(args, "config", None))
    run_kw = {k: v for k, v in file_cfg.items() if k != "sim"}
    sim_kw = dict(file_cfg.get("sim", {}))
    env_seed = os.environ.get("ULDA_SEED")
    if env_seed is not None:
        try:
            run_kw["seed"] = int(env_seed)
        except ValueError:
            raise UsageError(f"ULDA_SEED must be an integer, got {env_seed!r}")
    for name in _RUN_FIELDS:
        val = getattr(args, name, None)
        if val is not None:
            run_kw[name] = val
    for flag, name in _SIM_FLAGS.items():
        val = getattr(args, flag, None)
        if val is not None:
            sim_kw[name] = val
    if "schemes" in run_kw:
        run_kw["schemes"] = tuple(s.lower() for s in run_kw["schemes"])
        bad = [s for s in run_kw["schemes"] if s not in SCHEMES]
        if bad:
            raise UsageError(f"unknown weighting scheme(s) {bad}; choose from {list(SCHEMES)}")
    try:
        run = RunConfig(**run_kw)
        sim_kw.setdefault("seed", run.seed)
        if "seed" in run_kw:
            sim_kw["seed"] = run.seed
        sim = SimConfig(**sim_kw)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc))
    return run, sim


# ---------------------------------------------------------------- commands

def _histograms(dataset: SequenceDataset, run: RunConfig):
    binning = run.binning(dataset.label_range)
    return binning, [(s.seq_id, bin_labels(s, binning, clamp=run.clamp)) for s in dataset]


def cmd_stats(args, run: RunConfig, sim: SimConfig) -> None:
    dataset = uio.read_dataset(args.data)
    binning, hists = _histograms(dataset, run)
    out = Path(args.out)
    uio.write_text(out / "histograms.csv", uio.histogram_table((sid, {"count": h}) for sid, h in hists))
    for sid, h in hists:
        svg = histogram_figure(binning, [("frames", h.counts, PALETTE["red"])],
                               title=f"label distribution: {sid}")
        uio.write_text(out / f"stats_{sid}.svg", svg)
    uio.write_text(out / "config.json", uio.dumps_json(run.to_dict()))
    for sid, h in hists:
        print(f"{sid}\t{int(h.total_mass)} frames")


def cmd_convolve(args, run: RunConfig, sim: SimConfig) -> None:
    dataset = uio.read_dataset(args.data)
    binning, hists = _histograms(dataset, run)
    kernel = run.kernel(binning)
    out = Path(args.out)
    pairs = [(sid, h, convolve(h, kernel)) for sid, h in hists]
    uio.write_text(
        out / "histograms.csv",
        uio.histogram_table((sid, {"before": b, "after": a}) for sid, b, a in pairs),
    )
    uio.write_text(out / "plan.csv", uio.plan_table((sid, make_plan(b, a)) for sid, b, a in pairs))
    for sid, b, a in pairs:
        svg = histogram_figure(
            binning,
            [("original", b.counts, PALETTE["red"]), ("convolved", a.counts, PALETTE["blue"])],
            title=f"label distribution before and after convolution: {sid}",
        )
        uio.write_text(out / f"convolve_{sid}.svg", svg)
    uio.write_text(out / "config.json", uio.dumps_json(run.to_dict()))


def cmd_augment(args, run: RunConfig, sim: SimConfig) -> None:
    dataset = uio.read_dataset(args.data)
    binning, hists = _histograms(dataset, run)
    kernel = run.kernel(binning)
    if args.plan:
        plans = uio.read_plans(args.plan, binning)
    else:
        plans = {sid: make_plan(h, convolve(h, kernel)) for sid, h in hists}
    out = Path(args.out)
    new_seqs, provenance = [], []
    for seq in dataset:
        if seq.seq_id not in plans:
            raise DataError(f"plan has no entry for sequence {seq.seq_id!r}")
        res = augment_sequence(seq, plans[seq.seq_id], run.threshold, seed=run.seed,
                               missing_bins=run.missing_bins)
        new_seqs.append(res.sequence)
        provenance.extend(res.provenance)
    augmented = SequenceDataset(tuple(new_seqs), dataset.label_range, dataset.dim)
    uio.write_dataset(augmented, out, metadata={"augmented": True, "config": run.to_dict()})
    uio.write_text(out / "provenance.jsonl", uio.jsonl(provenance))
    print(f"added {len(provenance)} frames across {len(dataset)} sequences")


def cmd_weights(args, run: RunConfig, sim: SimConfig) -> None:
    dataset = uio.read_dataset(args.data)
    binning, hists = _histograms(dataset, run)
    kernel = run.kernel(binning)
    out = Path(args.out)
    for seq, (_, hist) in zip(dataset, hists):
        cols = {
            f"weight_{scheme}": compute_weights(scheme, seq, hist, kernel).weights
            for scheme in run.schemes
        }
        uio.write_text(out / f"{seq.seq_id}.csv", uio.sequence_csv(seq, cols))
    uio.write_text(out / "config.json", uio.dumps_json(run.to_dict()))


def cmd_simulate(args, run: RunConfig, sim: SimConfig) -> None:
    corpus = simulate(sim)
    uio.write_dataset(corpus.observed, Path(args.out), metadata={"sim": sim.to_dict()})
    print(f"wrote {sim.sequence_count} sequences of {sim.frames_per_sequence} frames to {args.out}")


def cmd_bench(args, run: RunConfig, sim: SimConfig) -> None:
    cfg = ExperimentConfig(
        sim=sim,
        bins=run.bins,
        kernel_size=run.kernel_size,
        kernel_sigma=run.kernel_sigma,
        threshold=run.threshold,
        regressor=run.regressor,
        ridge_penalty=run.ridge_penalty,
        knn_k=run.knn_k,
        repeats=run.repeats,
        train_fraction=run.train_fraction,
        region_threshold=run.region_threshold,
        region_fraction=run.region_fraction,
        identity_kernel=run.identity_kernel,
        seed=run.seed,
    )
    report = run_experiment(cfg)
    out = Path(args.out)
    uio.write_text(out / "report.json", uio.dumps_json(report))
    uio.write_text(out / "bench.svg", bench_figure(report, cfg.binning()))
    summary = report["summary"]
    for name in cfg.strategies:
        s = summary[name]
        print(f"{name:10s} mse={s['mse_mean']:.6f} pcc={s['pcc_mean']:.4f} "
              f"bin-range={s['mean_bin_mse_range']:.5f}")
    dp = summary["distribution_pcc"]
    print(f"distribution pcc raw={dp['raw_train_vs_test_mean']:.4f} "
          f"convolved={dp['convolved_train_vs_test_mean']:.4f}")


COMMANDS = {
    "stats": cmd_stats,
    "convolve": cmd_convolve,
    "augment": cmd_augment,
    "weights": cmd_weights,
    "simulate": cmd_simulate,
    "bench": cmd_bench,
}


# ------------------------------------------------------------------ parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _bool_flag(p, name, help_):
    p.add_argument(f"--{name}", dest=name.replace("-", "_"), action="store_true", default=None, help=help_)
    p.add_argument(f"--no-{name}", dest=name.replace("-", "_"), action="store_false", help=argparse.SUPPRESS)


def _common(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--bins", type=int, help="number of label bins b")
    p.add_argument("--kernel-size", dest="kernel_size", type=float, help="kernel width delta (label units)")
    p.add_argument("--kernel-sigma", dest="kernel_sigma", type=float, help="kernel std sigma (label units)")
    _bool_flag(p, "identity-kernel", "use the identity kernel (no smoothing)")
    _bool_flag(p, "clamp", "clamp out-of-range labels instead of failing")
    p.add_argument("-v", "--verbose", action="store_true")


def _sim_flags(p):
    p.add_argument("--sequences", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--annotators", type=int)
    p.add_argument("--vote-std", dest="vote_std", type=float)
    p.add_argument("--smoothness", type=float)
    p.add_argument("--feature-noise", dest="feature_noise", type=float)
    p.add_argument("--label-min", dest="label_min", type=float)
    p.add_argument("--label-max", dest="label_max", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ulda", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("stats", help="per-sequence label histograms and plots")
    p.add_argument("data")
    p.add_argument("--out", required=True)
    _common(p)

    p = sub.add_parser("convolve", help="smoothed histograms, overlay plots and augmentation plan")
    p.add_argument("data")
    p.add_argument("--out", required=True)
    _common(p)

    p = sub.add_parser("augment", help="time-slice normal sampling of under-populated bins")
    p.add_argument("data")
    p.add_argument("--out", required=True)
    p.add_argument("--plan", help="plan.csv from `convolve` (default: compute from the data)")
    p.add_argument("--threshold", type=int, help="slice length threshold T")
    p.add_argument("--missing-bins", dest="missing_bins", choices=["error", "skip"])
    _common(p)

    p = sub.add_parser("weights", help="append per-frame loss weight columns")
    p.add_argument("data")
    p.add_argument("--out", required=True)
    p.add_argument("--scheme", dest="schemes", action="append", choices=list(SCHEMES))
    _common(p)

    p = sub.add_parser("simulate", help="synthetic corpus with utopia labels")
    p.add_argument("--out", required=True)
    _common(p)
    _sim_flags(p)

    p = sub.add_parser("bench", help="Baseline vs CWL vs TNS+CWL on synthetic corpora")
    p.add_argument("--out", required=True)
    p.add_argument("--repeats", type=int)
    p.add_argument("--threshold", type=int)
    p.add_argument("--regressor", choices=["ridge", "knn"])
    p.add_argument("--ridge-penalty", dest="ridge_penalty", type=float)
    p.add_argument("--knn-k", dest="knn_k", type=int)
    p.add_argument("--region-threshold", dest="region_threshold", type=float)
    p.add_argument("--region-fraction", dest="region_fraction", type=float)
    _common(p)
    _sim_flags(p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("missing subcommand; choose from " + ", ".join(COMMANDS))
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        run, sim = resolve_config(args)
        COMMANDS[args.command](args, run, sim)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
