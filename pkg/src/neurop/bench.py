"""Command-line benchmark harness: data generation, training, sweeps,
parameter audits, and CSV/JSON reporting.

All commands are deterministic given their spec: datasets, checkpoints
and history CSVs are byte-identical across repeated invocations.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .darcy import Dataset, make_dataset_setting1, make_dataset_setting2
from .errors import InvalidArgumentError
from .fixedpoint import build_linear_ifno, iterate_trace
from .operator import (
    HyperParams,
    count_params,
    init_model,
    load_checkpoint,
    save_checkpoint,
)
from .train import TrainConfig, evaluate, save_history_csv, shallow_to_deep, train

SETTINGS = ("darcy1", "darcy2")


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to reproduce a dataset + training sweep."""

    setting: str = "darcy1"
    n_train: int = 200
    n_test: int = 50
    fine_n: int = 241
    stride: int = 8
    data_seed: int = 0
    b_seed: int = 2024  # fixed permeability stream for darcy2
    d: int = 16
    k1: int = 8
    k2: int = 8
    d_Q: int = 64  # desk-scale width; the published-table audit pins 128 itself
    epochs: int = 100
    lr0: float = 1e-3
    decay_every: int = 100
    decay_ratio: float = 0.5
    batch_size: int = 20
    variant: str = "ifno"
    depths: tuple[int, ...] = (2, 4, 8, 16)
    seeds: tuple[int, ...] = (0, 1, 2)

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise InvalidArgumentError(f"setting must be one of {SETTINGS}")
        if not self.depths:
            raise InvalidArgumentError("depth list must be non-empty")
        if self.n_train < 1 or self.n_test < 0:
            raise InvalidArgumentError("invalid split sizes")
        object.__setattr__(self, "depths", tuple(int(v) for v in self.depths))
        object.__setattr__(self, "seeds", tuple(int(v) for v in self.seeds))

    @property
    def n_samples(self) -> int:
        return self.n_train + self.n_test

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            lr0=self.lr0,
            decay_every=self.decay_every,
            decay_ratio=self.decay_ratio,
            batch_size=self.batch_size,
            seed=seed,
        )

    def hyper(self, d_F: int, d_u: int, depth: int, variant: str | None = None) -> HyperParams:
        return HyperParams(
            d=self.d,
            d_F=d_F,
            d_u=d_u,
            d_Q=self.d_Q,
            k1=self.k1,
            k2=self.k2,
            L=depth,
            variant=variant or self.variant,
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentSpec":
        return cls(**json.loads(text))

    @classmethod
    def from_file(cls, path) -> "ExperimentSpec":
        return cls.from_json(Path(path).read_text())


def _load_split(data_path, spec: ExperimentSpec):
    ds = Dataset.load(data_path)
    if ds.n_samples < spec.n_samples:
        raise InvalidArgumentError(
            f"dataset has {ds.n_samples} samples, spec needs {spec.n_samples}"
        )
    tr = (ds.inputs[: spec.n_train], ds.outputs[: spec.n_train])
    te = (
        ds.inputs[spec.n_train : spec.n_train + spec.n_test],
        ds.outputs[spec.n_train : spec.n_train + spec.n_test],
    )
    return ds, tr, te


def _ckpt_path(out_dir: Path, variant: str, depth: int, seed: int) -> Path:
    return out_dir / f"{variant}_L{depth}_seed{seed}.ckpt"


def cmd_gen_data(spec: ExperimentSpec, out_path) -> dict:
    """Generate the dataset file and return a summary."""
    if spec.setting == "darcy1":
        ds = make_dataset_setting1(spec.n_samples, spec.data_seed, spec.fine_n, spec.stride)
    else:
        ds = make_dataset_setting2(
            spec.n_samples, spec.data_seed, spec.fine_n, spec.stride, spec.b_seed
        )
    ds.metadata["n_train"] = spec.n_train
    ds.metadata["n_test"] = spec.n_test
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    ds.save(out_path)
    summary = {
        "path": str(out_path),
        "setting": spec.setting,
        "n_samples": ds.n_samples,
        "nx": int(ds.inputs.shape[3]),
        "ny": int(ds.inputs.shape[2]),
        "c_in": int(ds.inputs.shape[1]),
        "c_out": int(ds.outputs.shape[1]),
        "sha256": ds.sha256(out_path),
    }
    if spec.setting == "darcy1":
        summary["phase_fraction_12"] = float(np.mean(ds.inputs[:, 2] == 12.0))
    return summary


def cmd_train(
    spec: ExperimentSpec,
    depth: int,
    seed: int,
    data_path,
    out_dir,
    variant: str | None = None,
) -> dict:
    """One training job; uses shallow-to-deep init when a half-depth
    checkpoint of the same spec exists."""
    variant = variant or spec.variant
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _, tr, te = _load_split(data_path, spec)
    d_F, d_u = tr[0].shape[1], tr[1].shape[1]
    hyper = spec.hyper(d_F, d_u, depth, variant)

    init_kind = "random"
    parent = _ckpt_path(out_dir, variant, depth // 2, seed)
    if variant == "ifno" and depth % 2 == 0 and depth // 2 >= 1 and parent.exists():
        model = shallow_to_deep(load_checkpoint(parent), depth)
        init_kind = f"shallow_to_deep(L={depth // 2})"
    else:
        model = init_model(hyper, seed)

    tic = time.perf_counter()
    model, history = train(model, tr, te, spec.train_config(seed))
    wall = time.perf_counter() - tic

    ckpt = _ckpt_path(out_dir, variant, depth, seed)
    save_checkpoint(model, ckpt)
    csv = out_dir / f"{variant}_L{depth}_seed{seed}_history.csv"
    save_history_csv(history, csv)

    train_err, train_se = evaluate(model, tr)
    test_err, test_se = evaluate(model, te)
    return {
        "variant": variant,
        "depth": depth,
        "seed": seed,
        "init": init_kind,
        "params": count_params(hyper),
        "train_err": train_err,
        "train_se": train_se,
        "test_err": test_err,
        "test_se": test_se,
        "first_epoch_loss": history.train_loss[0] if history.train_loss else float("nan"),
        "seconds": wall,
        "checkpoint": str(ckpt),
        "history_csv": str(csv),
    }


def _mean_se(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    se = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
    return mean, se


def cmd_sweep(spec: ExperimentSpec, data_path, out_dir, threads: int = 1) -> dict:
    """Train every (depth, seed) pair and aggregate mean +- standard error.

    Depths run in ascending order within each seed so shallow-to-deep
    initialization can chain; seeds are independent jobs.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds = Dataset.load(data_path)
    data_hash = ds.sha256(data_path)
    depths = sorted(spec.depths)

    def run_seed(seed: int) -> list[dict]:
        rows = []
        for depth in depths:
            try:
                rows.append(cmd_train(spec, depth, seed, data_path, out_dir))
            except Exception as exc:  # record the failure, keep sweeping
                rows.append(
                    {
                        "variant": spec.variant,
                        "depth": depth,
                        "seed": seed,
                        "error": f"{type(exc).__name__}: {exc}",
                    }
                )
        return rows

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_seed = list(pool.map(run_seed, spec.seeds))
    else:
        per_seed = [run_seed(s) for s in spec.seeds]
    rows = [row for seed_rows in per_seed for row in seed_rows]
    rows.sort(key=lambda r: (r["depth"], r["seed"]))

    summary = []
    for depth in depths:
        ok = [r for r in rows if r["depth"] == depth and "error" not in r]
        if not ok:
            continue
        mean_train, se_train = _mean_se([r["train_err"] for r in ok])
        mean_test, se_test = _mean_se([r["test_err"] for r in ok])
        summary.append(
            {
                "depth": depth,
                "mean_train": mean_train,
                "se_train": se_train,
                "mean_test": mean_test,
                "se_test": se_test,
                "params": ok[0]["params"],
                "n_seeds": len(ok),
            }
        )

    rows_csv = out_dir / f"sweep_{spec.variant}_rows.csv"
    with open(rows_csv, "w", newline="\n") as fh:
        fh.write("variant,depth,seed,params,train_err,test_err,seconds\n")
        for r in rows:
            if "error" in r:
                fh.write(f"{r['variant']},{r['depth']},{r['seed']},,,,\n")
            else:
                fh.write(
                    f"{r['variant']},{r['depth']},{r['seed']},{r['params']},"
                    f"{r['train_err']!r},{r['test_err']!r},{r['seconds']!r}\n"
                )
    summary_csv = out_dir / f"sweep_{spec.variant}_summary.csv"
    with open(summary_csv, "w", newline="\n") as fh:
        fh.write("depth,mean_train,se_train,mean_test,se_test\n")
        for s in summary:
            fh.write(
                f"{s['depth']},{s['mean_train']!r},{s['se_train']!r},"
                f"{s['mean_test']!r},{s['se_test']!r}\n"
            )

    report = {
        "spec": asdict(spec),
        "dataset_sha256": data_hash,
        "rows": rows,
        "summary": summary,
        "rows_csv": str(rows_csv),
        "summary_csv": str(summary_csv),
    }
    (out_dir / f"sweep_{spec.variant}_report.json").write_text(
        json.dumps(report, sort_keys=True, indent=2)
    )
    return report


def cmd_eval(ckpt_path, data_path, spec: ExperimentSpec) -> dict:
    model = load_checkpoint(ckpt_path)
    _, tr, te = _load_split(data_path, spec)
    train_err, train_se = evaluate(model, tr)
    test_err, test_se = evaluate(model, te)
    return {
        "checkpoint": str(ckpt_path),
        "params": count_params(model.hyper),
        "train_err": train_err,
        "train_se": train_se,
        "test_err": test_err,
        "test_se": test_se,
    }


# Published parameter counts being audited (setting, variant) -> per-depth.
_AUDIT_DEPTHS = (1, 2, 4, 8, 16, 32)
_AUDIT_HYPER = {
    "setting1": dict(d=32, d_F=3, d_u=1, d_Q=128, k1=9, k2=9),
    "setting2": dict(d=32, d_F=4, d_u=1, d_Q=128, k1=12, k2=12),
}
_AUDIT_EXPECT = {
    ("setting1", "fno"): ("171.42k", "338.37k", "672.26k", "1.34M", "2.68M", "5.35M"),
    ("setting1", "ifno"): ("171.42k",) * 6,
    ("setting2", "fno"): ("300.48k", "596.45k", "1.19M", "2.37M", "4.74M", "9.48M"),
    ("setting2", "ifno"): ("300.48k",) * 6,
}


def format_param_count(value: int) -> str:
    """Render like the published table: 2 decimals with a k/M suffix."""
    if value < 10**6:
        return f"{value / 1e3:.2f}k"
    return f"{value / 1e6:.2f}M"


def cmd_param_audit() -> tuple[list[dict], bool]:
    """Check count_params against the published table; flag mismatches."""
    rows = []
    all_ok = True
    for setting, base in _AUDIT_HYPER.items():
        for variant in ("fno", "ifno"):
            expected = _AUDIT_EXPECT[(setting, variant)]
            for depth, exp in zip(_AUDIT_DEPTHS, expected):
                hyper = HyperParams(L=depth, variant=variant, **base)
                got = count_params(hyper)
                rendered = format_param_count(got)
                ok = rendered == exp
                all_ok &= ok
                rows.append(
                    {
                        "setting": setting,
                        "variant": variant,
                        "depth": depth,
                        "params": got,
                        "rendered": rendered,
                        "expected": exp,
                        "ok": ok,
                    }
                )
    return rows, all_ok


def cmd_fixedpoint_demo(n: int = 8, omega: float = 0.25, L: int = 800) -> dict:
    """Richardson-as-network demo on the 1D Poisson tridiagonal system."""
    A = 2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    F = np.sin(np.linspace(0.5, 2.5, n))
    net = build_linear_ifno(A, F, omega, L)
    exact = np.linalg.solve(A, F)
    net_seq = net.layer_readouts()
    ref_seq = iterate_trace(net.problem, L)
    max_dev = max(
        float(np.linalg.norm(a - b)) for a, b in zip(net_seq, ref_seq)
    )
    return {
        "n": n,
        "omega": omega,
        "L": L,
        "contraction": net.problem.contraction,
        "final_error": float(np.linalg.norm(net_seq[-1] - exact)),
        "max_layer_deviation_vs_reference": max_dev,
    }


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="neurop", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_spec_flags(p):
        p.add_argument("--config", type=Path, help="ExperimentSpec JSON file")
        p.add_argument("--variant", choices=("fno", "ifno"))
        p.add_argument("--depth", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--epochs", type=int)

    p = sub.add_parser("gen-data", help="generate a dataset file")
    add_spec_flags(p)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("train", help="train one (depth, seed) job")
    add_spec_flags(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("sweep", help="train all (depth, seed) pairs and report")
    add_spec_flags(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    add_spec_flags(p)
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)

    sub.add_parser("param-audit", help="audit parameter counts against the published table")

    p = sub.add_parser("fixedpoint-demo", help="run the Richardson-as-network demo")
    p.add_argument("--layers", type=int, default=800)
    return parser


def _spec_from_args(args) -> ExperimentSpec:
    spec = ExperimentSpec.from_file(args.config) if args.config else ExperimentSpec()
    overrides = {}
    if getattr(args, "variant", None):
        overrides["variant"] = args.variant
    if getattr(args, "epochs", None) is not None:
        overrides["epochs"] = args.epochs
    return replace(spec, **overrides) if overrides else spec


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "gen-data":
        out = cmd_gen_data(_spec_from_args(args), args.out)
    elif args.command == "train":
        spec = _spec_from_args(args)
        depth = args.depth if args.depth is not None else spec.depths[0]
        seed = args.seed if args.seed is not None else spec.seeds[0]
        out = cmd_train(spec, depth, seed, args.data, args.out)
    elif args.command == "sweep":
        out = cmd_sweep(_spec_from_args(args), args.data, args.out, threads=args.threads)
    elif args.command == "eval":
        out = cmd_eval(args.ckpt, args.data, _spec_from_args(args))
    elif args.command == "param-audit":
        rows, ok = cmd_param_audit()
        out = {"rows": rows, "all_ok": ok}
        print(json.dumps(out, indent=2))
        return 0 if ok else 1
    elif args.command == "fixedpoint-demo":
        out = cmd_fixedpoint_demo(L=args.layers)
    else:  # pragma: no cover
        raise InvalidArgumentError(f"unknown command {args.command}")
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
