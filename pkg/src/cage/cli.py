"""Command-line interface: generate, train, explain, verify, compare."""

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from cage.chain_graph import bundled_chain_graph, load_chain_graph
from cage.datasets import (
    SYNTHETIC_KINDS,
    generate_synthetic,
    load_csv,
    normalize_split,
    write_load_report,
)
from cage.explainers import CAGE, SAGE
from cage.gaussian import DEFAULT_RIDGE
from cage.predictors import DEEP_PRESET, LinearModel, MLPModel, compute_loss, load_model, save_model
from cage.properties import true_linear_model, verify_properties
from cage.report import Report, compare_reports, emit_report, load_report
from cage.scm import dump_scm

log = logging.getLogger("cage")

OUT_ENV = "CAGE_OUT"
BUNDLED_GRAPHS = SYNTHETIC_KINDS + ("adni",)
SUBCOMMANDS = ("generate", "train", "explain", "verify", "compare")


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage, exc):
        super().__init__(f"[{stage}] {exc}")
        self.stage = stage


@dataclass
class RunConfig:
    subcommand: str = "explain"
    dataset: str = "direct_cause"
    target: str = "Y"
    n: int = 10_000
    train_fraction: float = 0.75
    noise_param: str = "std"
    model: str = "linear"
    model_file: str = None
    layers: tuple = (100,)
    epochs: int = 200
    lr: float = 1e-3
    batch_size: int = 32
    loss: str = "mse"
    methods: tuple = ("cage", "sage")
    chain_graph: str = None
    N: int = 2000
    M: int = 64
    seed: int = 0
    workers: int = 1
    sampler: str = "exact"
    gibbs_burnin: int = 100
    ridge: float = DEFAULT_RIDGE
    target_stderr: float = None
    suite: str = "all"
    reports: tuple = ()
    out: str = "cage-out"

    @property
    def synthetic(self):
        return self.dataset in SYNTHETIC_KINDS

    def validate(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {self.subcommand!r}")
        for name in ("n", "epochs", "N", "M", "workers", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"--{name} must be >= 1")
        if self.loss not in ("mse", "bce"):
            raise ConfigError(f"unknown loss {self.loss!r}")
        bad = set(self.methods) - {"cage", "sage"}
        if bad or not self.methods:
            raise ConfigError(f"--method must list cage and/or sage, got {','.join(self.methods)}")
        if self.sampler not in ("exact", "gibbs"):
            raise ConfigError(f"--sampler must be exact or gibbs, got {self.sampler!r}")
        if self.model not in ("linear", "mlp", "true"):
            raise ConfigError(f"--model must be linear, mlp or true, got {self.model!r}")
        if self.model == "true" and not self.synthetic:
            raise ConfigError("--model true is only available for synthetic datasets")
        if self.loss == "bce" and self.model in ("linear", "true") and self.model_file is None:
            raise ConfigError("bce loss needs a logistic-output model (use --model mlp)")
        if self.subcommand in ("explain", "train") and not self.synthetic:
            if not Path(self.dataset).suffix == ".csv" and not Path(self.dataset).is_file():
                raise ConfigError(f"--dataset must be one of {SYNTHETIC_KINDS} or a CSV path")
        needs_graph = self.subcommand == "explain" and "cage" in self.methods
        if needs_graph and self.chain_graph is None and not self.synthetic:
            raise ConfigError("cage on a CSV dataset requires --chain-graph")
        if self.subcommand == "compare" and len(self.reports) != 2:
            raise ConfigError("compare needs exactly two report paths")
        return self

    def to_dict(self):
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d):
        kwargs = {}
        for f in fields(cls):
            if f.name in d:
                v = d[f.name]
                kwargs[f.name] = tuple(v) if isinstance(v, list) else v
        return cls(**kwargs)


def _parse_layers(text):
    if text in ("deep", "preset"):
        return DEEP_PRESET
    try:
        return tuple(int(w) for w in text.split(",") if w.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid layer widths {text!r}") from None


def build_parser():
    p = argparse.ArgumentParser(prog="cage", description=__doc__)
    sub = p.add_subparsers(dest="subcommand", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=os.environ.get(OUT_ENV, "cage-out"),
                        help=f"output directory (default ${OUT_ENV} or ./cage-out)")
        sp.add_argument("-v", "--verbose", action="store_true")

    def data_args(sp):
        sp.add_argument("--dataset", default="direct_cause",
                        help=f"one of {', '.join(SYNTHETIC_KINDS)} or a CSV path")
        sp.add_argument("--target", default="Y")
        sp.add_argument("--n", type=int, default=10_000, help="rows per split for synthetic data")
        sp.add_argument("--train-fraction", type=float, default=0.75)
        sp.add_argument("--noise-param", choices=("std", "var"), default="std")

    def model_args(sp):
        sp.add_argument("--model", default="linear", choices=("linear", "mlp", "true"))
        sp.add_argument("--model-file", default=None)
        sp.add_argument("--layers", type=_parse_layers, default=(100,),
                        help="comma-separated hidden widths, or 'deep' for 64,128,128,64,32")
        sp.add_argument("--epochs", type=int, default=200)
        sp.add_argument("--lr", type=float, default=1e-3)
        sp.add_argument("--batch-size", type=int, default=32)
        sp.add_argument("--loss", choices=("mse", "bce"), default="mse")

    sp = sub.add_parser("generate", help="sample a bundled synthetic dataset")
    data_args(sp)
    common(sp)

    sp = sub.add_parser("train", help="train a model and save it")
    data_args(sp)
    model_args(sp)
    common(sp)

    sp = sub.add_parser("explain", help="compute global importances")
    data_args(sp)
    model_args(sp)
    sp.add_argument("--method", default="cage,sage")
    sp.add_argument("--chain-graph", default=None,
                    help=f"chain-graph file or bundled id ({', '.join(BUNDLED_GRAPHS)})")
    sp.add_argument("--N", type=int, default=2000, help="outer permutation samples")
    sp.add_argument("--M", type=int, default=64, help="inner completions per coalition")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--sampler", choices=("exact", "gibbs"), default="exact")
    sp.add_argument("--gibbs-burnin", type=int, default=100)
    sp.add_argument("--ridge", type=float, default=DEFAULT_RIDGE)
    sp.add_argument("--target-stderr", type=float, default=None)
    common(sp)

    sp = sub.add_parser("verify", help="run the causal-soundness property checks")
    sp.add_argument("--suite", default="all", help="all, or a comma list of p1,p2,p3,p4")
    sp.add_argument("--N", type=int, default=2000)
    sp.add_argument("--M", type=int, default=64)
    sp.add_argument("--n", type=int, default=10_000)
    sp.add_argument("--sampler", choices=("exact", "gibbs"), default="exact")
    common(sp)

    sp = sub.add_parser("compare", help="diff two stored reports feature by feature")
    sp.add_argument("reports", nargs=2)
    common(sp)
    return p


def config_from_args(args):
    d = {k: v for k, v in vars(args).items() if v is not None or k in ("chain_graph", "model_file")}
    if "method" in d:
        d["methods"] = tuple(m.strip() for m in d.pop("method").split(",") if m.strip())
    d.pop("verbose", None)
    return RunConfig.from_dict(d)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ConfigError, StageError):
        raise
    except Exception as exc:  # noqa: BLE001 - every failure is reported with its stage
        raise StageError(name, exc) from exc


def load_data(cfg):
    """Return ``(train, test, scm_or_None, default_chain_or_None)``."""
    if cfg.synthetic:
        ds, scm, chain = generate_synthetic(cfg.dataset, 2 * cfg.n, cfg.seed, cfg.noise_param)
        return ds.take(slice(0, cfg.n)), ds.take(slice(cfg.n, None)), scm, chain
    ds = load_csv(cfg.dataset, cfg.target)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_load_report(ds.load_report, out / "load_report.txt")
    train, test = normalize_split(ds, cfg.train_fraction, cfg.seed)
    return train, test, None, None


def resolve_chain(cfg, features, target, default):
    if cfg.chain_graph is None:
        return default
    if cfg.chain_graph in BUNDLED_GRAPHS:
        return bundled_chain_graph(cfg.chain_graph, features, target)
    return load_chain_graph(cfg.chain_graph, features, target)


def train_model(cfg, train, scm):
    if cfg.model_file:
        return load_model(cfg.model_file)
    if cfg.loss == "bce" and not train.is_binary():
        raise ConfigError("bce loss requires a binary {0,1} target")
    if cfg.model == "true":
        return true_linear_model(scm)
    if cfg.model == "linear":
        return LinearModel(feature_names=train.feature_names).fit(train.X, train.y)
    mlp = MLPModel(hidden_layers=tuple(cfg.layers), epochs=cfg.epochs, learning_rate=cfg.lr,
                   batch_size=cfg.batch_size, output="logistic" if cfg.loss == "bce" else "identity",
                   random_state=cfg.seed, feature_names=train.feature_names)
    return mlp.fit(train.X, train.y)


def run_explain(cfg):
    timings = {}
    t0 = time.perf_counter()
    train, test, scm, default_chain = _stage("load", load_data, cfg)
    chain = _stage("chain-graph", resolve_chain, cfg, train.feature_names, train.target_name,
                   default_chain) if "cage" in cfg.methods else None
    timings["load"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    model = _stage("train", train_model, cfg, train, scm)
    timings["train"] = time.perf_counter() - t0
    test_loss = compute_loss(cfg.loss, model.predict(test.X), test.y) if test.n else float("nan")

    results = []
    for method in cfg.methods:
        t0 = time.perf_counter()
        cls = CAGE if method == "cage" else SAGE
        explainer = cls(model=model, chain_graph=chain, loss=cfg.loss, n_outer=cfg.N, n_inner=cfg.M,
                        sampler=cfg.sampler, ridge=cfg.ridge, gibbs_burn_in=cfg.gibbs_burnin,
                        target_stderr=cfg.target_stderr, n_jobs=cfg.workers, random_state=cfg.seed)
        result = _stage(f"explain:{method}", lambda: explainer.fit(train.X).explain(test.X, test.y))
        results.append(result)
        timings[method] = time.perf_counter() - t0
        log.info("%s done in %.1fs", method, timings[method])
    extras = {"test_loss": test_loss, "n_train": train.n, "n_explain": test.n}
    return Report(cfg.to_dict(), results, [], timings, extras)


def run_generate(cfg):
    ds, scm, chain = _stage("generate", generate_synthetic, cfg.dataset, cfg.n, cfg.seed, cfg.noise_param)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "data.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*ds.feature_names, ds.target_name])
        for row, y in zip(ds.X, ds.y):
            w.writerow([repr(float(v)) for v in row] + [repr(float(y))])
    (out / "scm.toml").write_text(dump_scm(scm), encoding="utf-8")
    (out / "chain.toml").write_text(chain.to_toml(), encoding="utf-8")
    return out


def run_train(cfg):
    train, test, scm, _ = _stage("load", load_data, cfg)
    model = _stage("train", train_model, cfg, train, scm)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(model, out / "model.txt")
    losses = {"train_loss": compute_loss(cfg.loss, model.predict(train.X), train.y)}
    if test.n:
        losses["test_loss"] = compute_loss(cfg.loss, model.predict(test.X), test.y)
    return losses


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args).validate()
        if cfg.subcommand == "generate":
            print(run_generate(cfg))
        elif cfg.subcommand == "train":
            print(json.dumps(run_train(cfg), indent=2))
        elif cfg.subcommand == "explain":
            report = run_explain(cfg)
            _stage("report", emit_report, report, cfg.out)
            sys.stdout.write(Path(cfg.out, "ranking.txt").read_text(encoding="utf-8"))
        elif cfg.subcommand == "verify":
            t0 = time.perf_counter()
            checks = _stage("verify", verify_properties, cfg.suite, cfg.seed, cfg.n, cfg.N,
                            max(cfg.N, 4000), cfg.M, cfg.sampler)
            report = Report(cfg.to_dict(), [], checks, {"verify": time.perf_counter() - t0})
            _stage("report", emit_report, report, cfg.out)
            for c in checks:
                print(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.measured:.3g} (< {c.threshold:.3g})")
            return 0 if all(c.passed for c in checks) else 1
        elif cfg.subcommand == "compare":
            a, b = (_stage("compare", load_report, p) for p in cfg.reports)
            rows = compare_reports(a, b)
            for r in rows:
                print(f"{r['method']:<5} {r['feature']:<12} {r['phi_a']:>12.5g} {r['phi_b']:>12.5g} "
                      f"{r['diff']:>+12.5g}  z={r['z']:.2f}")
            out = Path(cfg.out)
            out.mkdir(parents=True, exist_ok=True)
            with (out / "compare.csv").open("w", newline="", encoding="utf-8") as fh:
                w = csv.DictWriter(fh, fieldnames=["method", "feature", "phi_a", "phi_b", "diff", "z"],
                                   lineterminator="\n")
                w.writeheader()
                w.writerows(rows)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
