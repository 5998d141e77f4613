"""Command-line pipeline: generate, train, compress, evaluate, bench, report.

All commands share one JSON config (defaults reproduce the cart-pole
experiment: degree-10 monomials, 100 controlled trajectories of 100 steps
for both training and evaluation). Artifacts are content-addressed: file
names embed a hash of the config fields they depend on, so outputs from
different configurations never mix in one output directory.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import (cartpole, compress, dictionary, edmd, evaluation, hclust,
               svd_baseline)

DEFAULT_CONFIG = {
    "cartpole": {
        "cart_mass": 1.0,
        "pole_mass": 0.1,
        "pole_half_length": 0.5,
        "gravity": 9.8,
        "force_magnitude": 10.0,
        "dt": 0.05,
        "horizon": 5.0,
    },
    "dictionary": {"state_dim": 4, "max_degree": 10},
    "dataset": {"n_train_traj": 100, "n_eval_traj": 100, "seed": 4242},
    # Least-squares cutoff for the experiment pipeline. Degree-10 monomial
    # data is ill-conditioned enough that a near-machine-precision cutoff
    # keeps junk directions which destabilize every downstream operator;
    # 7e-5 keeps the directions the data actually resolves.
    "svd_tolerance": 7e-5,
    "ratios": [[1.0, 1.0], [0.8, 0.8], [0.6, 0.6], [0.4, 0.4],
               [0.3, 0.3], [0.2, 0.2]],
    "svd_ranks": [300, 200, 100, 50, 20],
    "bench_ratios": [1.0, 0.8, 0.6, 0.4, 0.2],
    "horizon": 100,
    "bench_steps": 10000,
}


class CommandError(RuntimeError):
    """Pipeline failure with a category for the structured error line."""

    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise CommandError("config", f"unknown config key {here!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise CommandError("config", f"{here!r} must be an object")
            out[key] = _merge(base[key], value, here)
        else:
            out[key] = value
    return out


def load_config(path: Path | None, overrides: dict) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise CommandError("config", f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise CommandError("config", f"config is not valid JSON: {exc}")
        cfg = _merge(cfg, doc)
    cfg = _merge(cfg, overrides)
    _validate_config(cfg)
    return cfg


def _validate_config(cfg: dict) -> None:
    ds = cfg["dataset"]
    if ds["n_train_traj"] < 1 or ds["n_eval_traj"] < 1:
        raise CommandError("config", "trajectory counts must be >= 1")
    for pair in cfg["ratios"]:
        if len(pair) != 2 or not all(0.0 < r <= 1.0 for r in pair):
            raise CommandError("config", f"ratio pair out of (0, 1]: {pair}")
    for r in cfg["bench_ratios"]:
        if not 0.0 < r <= 1.0:
            raise CommandError("config", f"bench ratio out of (0, 1]: {r}")
    for rank in cfg["svd_ranks"]:
        if rank < 1:
            raise CommandError("config", f"svd rank must be >= 1: {rank}")
    if cfg["horizon"] < 1:
        raise CommandError("config", "horizon must be >= 1")
    if cfg["bench_steps"] < evaluation.MIN_TIMING_STEPS:
        raise CommandError(
            "config",
            f"bench_steps must be >= {evaluation.MIN_TIMING_STEPS}")


def _hash_of(doc) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


class Workspace:
    """Output directory plus the content-address keys of this config."""

    def __init__(self, out_dir: Path, cfg: dict):
        self.out_dir = Path(out_dir)
        self.cfg = cfg
        self.data_key = _hash_of({"cartpole": cfg["cartpole"],
                                  "dataset": cfg["dataset"]})
        self.model_key = _hash_of({"cartpole": cfg["cartpole"],
                                   "dataset": cfg["dataset"],
                                   "dictionary": cfg["dictionary"],
                                   "svd_tolerance": cfg["svd_tolerance"]})

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def data_csv(self, split: str) -> Path:
        return self.path(f"data-{self.data_key}-{split}.csv")

    def koopman_prefix(self) -> Path:
        return self.path(f"koopman-{self.model_key}")

    def dendro_json(self, axis: str) -> Path:
        return self.path(f"dendro-{self.model_key}-{axis}.json")

    def compressed_prefix(self, ratio_row: float, ratio_col: float) -> Path:
        return self.path(
            f"compressed-{self.model_key}-{ratio_row:g}x{ratio_col:g}")

    def svd_prefix(self, rank: int) -> Path:
        return self.path(f"svd-{self.model_key}-rank{rank}")

    def report_file(self, stem: str, ext: str) -> Path:
        return self.path(f"{stem}-{self.model_key}.{ext}")

    def params(self) -> cartpole.CartPoleParams:
        return cartpole.CartPoleParams(**self.cfg["cartpole"])

    def dictionary(self) -> dictionary.Dictionary:
        d = self.cfg["dictionary"]
        return dictionary.build(d["state_dim"], d["max_degree"])

    def write_manifest(self) -> None:
        doc = {"data_key": self.data_key, "model_key": self.model_key,
               "config": self.cfg}
        with open(self.path("manifest.json"), "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise CommandError("missing-artifact", f"{path} not found; {hint}")
    return path


def _load_koopman(ws: Workspace):
    prefix = ws.koopman_prefix()
    _require(Path(f"{prefix}.json"), "run the train command first")
    km = edmd.load_koopman(prefix)
    dic = ws.dictionary()
    if km.dict_hash != dic.content_hash():
        raise CommandError(
            "artifact-mismatch",
            "stored matrix was trained with a different dictionary")
    return km, dic


def cmd_generate(ws: Workspace) -> None:
    """Simulate train and eval trajectory sets and write them as CSV."""
    p = ws.params()
    ds = ws.cfg["dataset"]
    splits = (("train", ds["n_train_traj"], ds["seed"]),
              ("eval", ds["n_eval_traj"], ds["seed"] + 1))
    for split, n_traj, seed in splits:
        trajs = cartpole.generate_trajectories(p, n_traj, seed=seed)
        cartpole.save_trajectories(ws.data_csv(split), trajs)
        n_pairs = trajs.shape[0] * (trajs.shape[1] - 1)
        print(f"{split}: {trajs.shape[0]} trajectories, "
              f"{n_pairs} snapshot pairs -> {ws.data_csv(split).name}")


def cmd_train(ws: Workspace) -> None:
    """Fit the Koopman matrix by least squares on the training pairs."""
    trajs = cartpole.load_trajectories(
        _require(ws.data_csv("train"), "run the generate command first"))
    dic = ws.dictionary()
    print(f"dictionary size D = {dic.size}")
    pairs = cartpole.snapshot_pairs(trajs)
    data = edmd.build_data_matrices(dic, pairs)
    km = edmd.estimate(data, svd_tolerance=ws.cfg["svd_tolerance"],
                       dict_hash=dic.content_hash())
    edmd.save_koopman(ws.koopman_prefix(), km)
    print(f"least-squares residual = {km.residual:.6e}")
    print(f"wrote {ws.koopman_prefix().name}.bin")


def _dendrograms(ws: Workspace, km) -> tuple[hclust.Dendrogram, hclust.Dendrogram]:
    out = []
    for axis_name, axis in (("row", 0), ("col", 1)):
        path = ws.dendro_json(axis_name)
        if path.exists():
            out.append(hclust.dendrogram_from_json(path.read_text()))
        else:
            dendro = compress.cluster_axis(km.k, axis)
            path.write_text(hclust.dendrogram_to_json(dendro))
            out.append(dendro)
        print(f"{axis_name} dendrogram ready ({path.name})")
    return out[0], out[1]


def cmd_compress(ws: Workspace) -> None:
    """Cluster rows/columns of K and write compressed operators."""
    km, dic = _load_koopman(ws)
    row_dendro, col_dendro = _dendrograms(ws, km)
    for ratio_row, ratio_col in ws.cfg["ratios"]:
        prefix = ws.compressed_prefix(ratio_row, ratio_col)
        if Path(f"{prefix}.json").exists():
            print(f"[{ratio_row:g}, {ratio_col:g}] cached ({prefix.name})")
            continue
        ck = compress.compress_with_dendrograms(
            km.k, row_dendro, col_dendro, ratio_row, ratio_col,
            source_hash=km.dict_hash)
        compress.save_compressed(prefix, ck)
        n, m = ck.shape
        print(f"[{ratio_row:g}, {ratio_col:g}] -> K' {n}x{m}, "
              f"square operator {n * n} elements ({prefix.name})")


def _svd_factors(ws: Workspace, km, rank: int) -> svd_baseline.SvdFactors:
    prefix = ws.svd_prefix(rank)
    if Path(f"{prefix}.json").exists():
        return svd_baseline.load_factors(prefix)
    factors = svd_baseline.truncate(km, rank)
    svd_baseline.save_factors(prefix, factors)
    return factors


def _evaluation_predictors(ws: Workspace, km, dic) -> list[evaluation.Predictor]:
    preds = [evaluation.simulator_predictor(ws.params()),
             evaluation.full_predictor(km, dic)]
    for ratio_row, ratio_col in ws.cfg["ratios"]:
        prefix = ws.compressed_prefix(ratio_row, ratio_col)
        _require(Path(f"{prefix}.json"), "run the compress command first")
        ck = compress.load_compressed(prefix)
        preds.append(evaluation.compressed_predictor(ck, dic))
    for rank in ws.cfg["svd_ranks"]:
        if rank > dic.size:
            raise CommandError("config",
                               f"svd rank {rank} exceeds D = {dic.size}")
        preds.append(evaluation.svd_predictor(_svd_factors(ws, km, rank), dic))
    return preds


def cmd_evaluate(ws: Workspace) -> None:
    """Rollout accuracy reports for every predictor."""
    km, dic = _load_koopman(ws)
    trajs = cartpole.load_trajectories(
        _require(ws.data_csv("eval"), "run the generate command first"))
    horizon = ws.cfg["horizon"]
    if horizon > trajs.shape[1] - 1:
        raise CommandError(
            "config", f"horizon {horizon} exceeds trajectory length "
            f"{trajs.shape[1] - 1}")
    preds = _evaluation_predictors(ws, km, dic)
    reports = []
    for pred in preds:
        rep = evaluation.evaluate_accuracy(pred, trajs, horizon)
        reports.append(rep)
        print(f"{pred.name}: mean theta MSE {rep.horizon_mean('theta'):.6e}, "
              f"valid at horizon {rep.n_valid[-1]}/{trajs.shape[0]}")
    evaluation.write_accuracy_csv(ws.report_file("accuracy", "csv"), reports)
    evaluation.write_accuracy_summary(
        ws.report_file("accuracy-summary", "json"), reports)
    sizes = evaluation.count_elements(preds)
    with open(ws.report_file("sizes", "json"), "w") as fh:
        json.dump(sizes.counts, fh, indent=2, sort_keys=True)
    print(f"wrote {ws.report_file('accuracy', 'csv').name}, "
          f"{ws.report_file('accuracy-summary', 'json').name}, "
          f"{ws.report_file('sizes', 'json').name}")


def cmd_bench(ws: Workspace) -> None:
    """Per-step latency grid over the bench ratio pairs."""
    km, dic = _load_koopman(ws)
    row_dendro, col_dendro = _dendrograms(ws, km)
    ratios = ws.cfg["bench_ratios"]
    steps = ws.cfg["bench_steps"]
    grid = {}
    details = []
    for ratio_row in ratios:
        for ratio_col in ratios:
            ck = compress.compress_with_dendrograms(
                km.k, row_dendro, col_dendro, ratio_row, ratio_col,
                source_hash=km.dict_hash)
            pred = evaluation.compressed_predictor(ck, dic)
            rep = evaluation.benchmark_timing(pred, n_steps=steps)
            grid[(ratio_row, ratio_col)] = rep.mean_ms
            details.append(rep)
            print(f"[{ratio_row:g}, {ratio_col:g}] mean "
                  f"{rep.mean_ms:.4f} ms/step (median {rep.median_ms:.4f})")
    sim = evaluation.benchmark_timing(
        evaluation.simulator_predictor(ws.params()), n_steps=steps)
    details.append(sim)
    print(f"simulator mean {sim.mean_ms:.4f} ms/step")

    with open(ws.report_file("timing", "csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row_ratio"] + [f"col_{c:g}" for c in ratios])
        for ratio_row in ratios:
            writer.writerow([f"{ratio_row:g}"] +
                            [f"{grid[(ratio_row, c)]:.6f}" for c in ratios])
    detail_doc = [
        {"predictor": r.predictor, "n_steps": r.n_steps,
         "mean_ms": r.mean_ms, "median_ms": r.median_ms,
         "batch_means_ms": list(r.batch_means_ms)}
        for r in details
    ]
    with open(ws.report_file("timing-detail", "json"), "w") as fh:
        json.dump(detail_doc, fh, indent=2, sort_keys=True)
    print(f"wrote {ws.report_file('timing', 'csv').name}")


def _matched_rank(count: int, ranks: list[int], dim: int) -> int | None:
    if not ranks:
        return None
    return min(ranks, key=lambda r: abs(2 * dim * r - count))


def cmd_report(ws: Workspace) -> None:
    """Consolidate accuracy, size, and timing artifacts."""
    summary_path = _require(ws.report_file("accuracy-summary", "json"),
                            "run the evaluate command first")
    sizes_path = _require(ws.report_file("sizes", "json"),
                          "run the evaluate command first")
    with open(summary_path) as fh:
        summary = json.load(fh)
    with open(sizes_path) as fh:
        sizes = json.load(fh)
    dim = ws.dictionary().size

    print(f"{'predictor':<16} {'elements':>10} {'mean theta MSE':>16}")
    for name in sorted(sizes, key=sizes.get, reverse=True):
        theta = summary.get(name, {}).get("mse_mean", {}).get("theta")
        theta_txt = f"{theta:.6e}" if theta is not None else "diverged"
        print(f"{name:<16} {sizes[name]:>10} {theta_txt:>16}")

    matched = []
    for ratio_row, ratio_col in ws.cfg["ratios"]:
        name = f"ratio-{ratio_row:g}-{ratio_col:g}"
        if name not in sizes:
            continue
        rank = _matched_rank(sizes[name], ws.cfg["svd_ranks"], dim)
        if rank is None:
            continue
        rival = f"svd-{rank}"
        matched.append({
            "ratio_pair": [ratio_row, ratio_col],
            "proposed": {"name": name, "elements": sizes[name],
                         "theta_mse": summary[name]["mse_mean"]["theta"]},
            "svd": {"name": rival, "elements": 2 * dim * rank,
                    "theta_mse": summary.get(rival, {}).get("mse_mean", {})
                                        .get("theta")},
        })
    doc = {"dimension": dim, "sizes": sizes, "summary": summary,
           "memory_matched": matched}
    timing_path = ws.report_file("timing-detail", "json")
    if timing_path.exists():
        with open(timing_path) as fh:
            doc["timing"] = json.load(fh)
    with open(ws.report_file("report", "json"), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
    print(f"wrote {ws.report_file('report', 'json').name}")


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "compress": cmd_compress,
    "evaluate": cmd_evaluate,
    "bench": cmd_bench,
    "report": cmd_report,
}


def _parse_ratio_pairs(text: str) -> list[list[float]]:
    pairs = []
    for chunk in text.split(","):
        parts = chunk.split(":")
        if len(parts) != 2:
            raise argparse.ArgumentTypeError(
                f"expected row:col pairs separated by commas, got {chunk!r}")
        pairs.append([float(parts[0]), float(parts[1])])
    return pairs


def _parse_floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",")]


def _parse_ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="koopcompress",
        description="Koopman matrix compression experiments on a cart-pole "
                    "system: data generation, least-squares training, "
                    "co-cluster compression, SVD baseline, accuracy and "
                    "timing reports.")
    ap.add_argument("--config", type=Path, default=None,
                    help="JSON config; keys override built-in defaults")
    ap.add_argument("--out-dir", type=Path, default=Path("runs"),
                    help="directory for all artifacts (default: runs)")
    ap.add_argument("--seed", type=int, help="dataset seed override")
    ap.add_argument("--max-degree", type=int,
                    help="dictionary max total degree override")
    ap.add_argument("--n-train-traj", type=int,
                    help="training trajectory count override")
    ap.add_argument("--n-eval-traj", type=int,
                    help="evaluation trajectory count override")
    ap.add_argument("--horizon", type=int,
                    help="evaluation horizon in steps override")
    ap.add_argument("--ratios", type=_parse_ratio_pairs,
                    help="compression ratio pairs, e.g. 0.8:0.8,0.4:0.4")
    ap.add_argument("--svd-ranks", type=_parse_ints,
                    help="SVD ranks, e.g. 300,100,20")
    ap.add_argument("--bench-ratios", type=_parse_floats,
                    help="bench grid ratios, e.g. 1.0,0.6,0.2")
    ap.add_argument("--bench-steps", type=int,
                    help="timed steps per bench cell override")
    sub = ap.add_subparsers(dest="command", required=True, metavar="command")
    for name, fn in COMMANDS.items():
        sub.add_parser(name, help=fn.__doc__)
    return ap


def _overrides_from_args(args: argparse.Namespace) -> dict:
    overrides: dict = {}
    dataset = {}
    if args.seed is not None:
        dataset["seed"] = args.seed
    if args.n_train_traj is not None:
        dataset["n_train_traj"] = args.n_train_traj
    if args.n_eval_traj is not None:
        dataset["n_eval_traj"] = args.n_eval_traj
    if dataset:
        overrides["dataset"] = dataset
    if args.max_degree is not None:
        overrides["dictionary"] = {"max_degree": args.max_degree}
    for key in ("horizon", "ratios", "svd_ranks", "bench_ratios",
                "bench_steps"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    return overrides


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides_from_args(args))
        ws = Workspace(args.out_dir, cfg)
        ws.out_dir.mkdir(parents=True, exist_ok=True)
        ws.write_manifest()
        COMMANDS[args.command](ws)
    except CommandError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return 1
    except (dictionary.DictionarySizeError,
            dictionary.EvaluationOverflowError) as exc:
        print(f"error: dictionary: {exc}", file=sys.stderr)
        return 1
    except cartpole.SimulationBlowUpError as exc:
        print(f"error: simulation: {exc}", file=sys.stderr)
        return 1
    except edmd.DegenerateDataError as exc:
        print(f"error: training-data: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
