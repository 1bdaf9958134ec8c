"""Batch front-end: synthetic data, CSV ingestion and experiment runs.

Experiments are described by an INI file (one [chain:NAME] section per
chain) or entirely by flags; flags override file values. Outputs are a
samples CSV and a metrics JSON per chain plus one combined comparison
table.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from . import cv, diag, glm, modefit
from .glm import Dataset, ModelKind
from .priors import parse_prior
from .samplers import ALGORITHMS, ChainConfig, ChainOutput, run_chain
from .thinning import BoundViolationError

OUTPUT_DIR_ENV = "MHSS_OUTPUT_DIR"

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BOUND_VIOLATION = 3


class ValidationError(ValueError):
    pass


_MODEL_NAMES = {
    "logistic": ModelKind.logistic,
    "probit": ModelKind.probit,
    "poisson": ModelKind.poisson,
    "poisson-softplus": ModelKind.poisson,
}


def parse_model(name: str, rate_scale: float = 1.0) -> ModelKind:
    name = name.strip().lower()
    if name not in _MODEL_NAMES:
        raise ValidationError(f"unknown model {name!r}")
    if name.startswith("poisson"):
        return ModelKind.poisson(rate_scale)
    return _MODEL_NAMES[name]()


def generate_synthetic(n: int, d: int, model: ModelKind, seed: int):
    """Simulate a design with an intercept column and N(0, 1/d) covariates,
    true coefficients beta_j ~ N(0, 1) and model-distributed responses.

    Returns (dataset, beta_true).
    """
    if n < 1 or d < 1:
        raise ValidationError("need n >= 1 and d >= 1")
    rng = np.random.default_rng(seed)
    X = np.ones((n, d))
    if d > 1:
        X[:, 1:] = rng.normal(0.0, 1.0 / np.sqrt(d), size=(n, d - 1))
    beta = rng.normal(0.0, 1.0, size=d)
    eta = X @ beta
    if model.variant == glm.LOGISTIC:
        y = (rng.random(n) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
    elif model.variant == glm.PROBIT:
        from scipy.special import ndtr

        y = (rng.random(n) < ndtr(eta)).astype(float)
    else:
        mean = np.logaddexp(0.0, eta + np.log(model.rate_scale))
        y = rng.poisson(mean).astype(float)
    return Dataset(X=X, y=y, model=model), beta


def load_csv(path, model: ModelKind, response_column: str,
             add_intercept: bool = True, standardize: bool = False) -> Dataset:
    """Read a CSV into a Dataset.

    Non-numeric predictor columns are one-hot encoded with the first
    level dropped. Standardization uses the population mean and standard
    deviation per column and skips the intercept.
    """
    frame = pd.read_csv(path)
    if response_column not in frame.columns:
        raise ValidationError(f"missing response column {response_column!r}")
    y = pd.to_numeric(frame[response_column], errors="coerce")
    if y.isna().any():
        raise ValidationError(f"non-numeric cell in response column {response_column!r}")
    predictors = frame.drop(columns=[response_column])

    numeric_cols, categorical_cols = [], []
    for name in predictors.columns:
        as_num = pd.to_numeric(predictors[name], errors="coerce")
        if as_num.isna().any():
            categorical_cols.append(name)
        else:
            predictors[name] = as_num
            numeric_cols.append(name)
    if categorical_cols:
        predictors = pd.get_dummies(
            predictors, columns=categorical_cols, drop_first=True, dtype=float
        )

    X = predictors.to_numpy(dtype=float)
    names = list(predictors.columns)
    if standardize:
        mu = X.mean(axis=0)
        sd = X.std(axis=0)
        for j, name in enumerate(names):
            if sd[j] == 0.0:
                raise ValidationError(f"cannot standardize constant column {name!r}")
        X = (X - mu) / sd
    if add_intercept:
        X = np.column_stack([np.ones(X.shape[0]), X])
    try:
        return Dataset(X=X, y=y.to_numpy(dtype=float), model=model)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc


@dataclass
class ExperimentSpec:
    chains: list
    output_dir: str
    data_path: str | None = None
    response_column: str = "y"
    add_intercept: bool = True
    standardize: bool = False
    synthetic_n: int = 1000
    synthetic_d: int = 5
    model: ModelKind = field(default_factory=ModelKind.logistic)
    data_seed: int = 0
    replicates: int = 1

    def __post_init__(self):
        if not self.chains:
            raise ValidationError("an experiment needs at least one chain")
        if self.data_path is None and (self.synthetic_n < 1 or self.synthetic_d < 1):
            raise ValidationError("synthetic data needs n >= 1 and d >= 1")
        if self.replicates < 1:
            raise ValidationError("replicate count must be at least 1")


def _load_dataset(spec: ExperimentSpec) -> Dataset:
    if spec.data_path is not None:
        return load_csv(
            spec.data_path, spec.model, spec.response_column,
            add_intercept=spec.add_intercept, standardize=spec.standardize,
        )
    dataset, _ = generate_synthetic(
        spec.synthetic_n, spec.synthetic_d, spec.model, spec.data_seed
    )
    return dataset


def write_samples_csv(path, output: ChainOutput):
    """One row per retained iteration; floats carry 17 significant digits
    so a round-trip through text is lossless."""
    burn = output.burn_in
    d = output.samples.shape[1]
    with open(path, "w") as fh:
        cols = ",".join(f"theta_{j}" for j in range(d))
        fh.write(f"iter,{cols},accepted,stage1_pass,batch\n")
        for row in range(output.samples.shape[0]):
            t = burn + row
            theta = ",".join(f"{v:.17g}" for v in output.samples[row])
            fh.write(
                f"{t},{theta},{int(output.accept_flags[t])},"
                f"{int(output.stage1_pass_flags[t])},{int(output.batch_sizes[t])}\n"
            )


def run_experiment(spec: ExperimentSpec):
    """Fit the mode, build the cache, run every chain and write results.

    Returns the list of files written. Chain seeds are offset by the
    replicate index, so a rerun of the same spec is byte-identical.
    """
    os.makedirs(spec.output_dir, exist_ok=True)
    dataset = _load_dataset(spec)
    theta_hat = modefit.fit_mode(dataset)
    cache = cv.build_cache(dataset, theta_hat)

    written = []
    table_rows = []
    for rep in range(spec.replicates):
        for config in spec.chains:
            cfg = replace(config, seed=config.seed + rep)
            output = run_chain(dataset, cache, cfg)
            metrics = diag.summarize(output)
            tag = f"{cfg.algorithm.lower()}_rep{rep}"
            samples_path = os.path.join(spec.output_dir, f"samples_{tag}.csv")
            metrics_path = os.path.join(spec.output_dir, f"metrics_{tag}.json")
            write_samples_csv(samples_path, output)
            with open(metrics_path, "w") as fh:
                fh.write(metrics.to_json())
            written += [samples_path, metrics_path]
            table_rows.append(
                {
                    "algorithm": cfg.algorithm,
                    "replicate": rep,
                    "acceptance_rate": metrics.acceptance_rate,
                    "mean_batch": metrics.mean_batch,
                    "ess_per_second": metrics.ess_per_second,
                    "ess_per_batch": metrics.ess_per_batch,
                }
            )
    table_path = os.path.join(spec.output_dir, "comparison.csv")
    pd.DataFrame(table_rows).to_csv(table_path, index=False)
    written.append(table_path)
    return written


# --- argument and config-file handling -------------------------------------

def _add_data_flags(p):
    p.add_argument("--data", help="CSV path; omit to simulate")
    p.add_argument("--response-column", default="y")
    p.add_argument("--no-intercept", action="store_true")
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--model", default="logistic")
    p.add_argument("--rate-scale", type=float, default=1.0)
    p.add_argument("--data-seed", type=int, default=0)


def _chain_from_section(section, overrides) -> ChainConfig:
    def get(key, cast, default):
        if overrides.get(key) is not None:
            return overrides[key]
        if key in section:
            return cast(section[key])
        return default

    algorithm = section.get("algorithm")
    if overrides.get("algorithm"):
        algorithm = overrides["algorithm"]
    if algorithm is None:
        raise ValidationError("chain section is missing 'algorithm'")
    algorithm = algorithm.upper()
    if algorithm not in ALGORITHMS:
        raise ValidationError(f"unknown algorithm {algorithm!r}")
    try:
        return ChainConfig(
            algorithm=algorithm,
            lam=get("lambda", float, 0.0),
            gamma=get("gamma", float, 0.0),
            iterations=get("iterations", int, 10_000),
            burn_in=get("burn_in", int, 0),
            seed=get("seed", int, 0),
            chi=get("chi", float, 0.0),
            prior=parse_prior(get("prior", str, "flat")),
        )
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc


def _spec_from_args(args) -> ExperimentSpec:
    overrides = {
        "lambda": args.lam,
        "gamma": args.gamma,
        "iterations": args.iterations,
        "burn_in": args.burn_in,
        "seed": args.seed,
        "chi": args.chi,
        "prior": args.prior,
        "algorithm": None,
    }
    chains = []
    file_section = {}
    if args.config:
        parser = configparser.ConfigParser()
        if not parser.read(args.config):
            raise ValidationError(f"cannot read config file {args.config!r}")
        if parser.has_section("experiment"):
            file_section = dict(parser["experiment"])
        for name in parser.sections():
            if name.startswith("chain:"):
                chains.append(_chain_from_section(parser[name], overrides))
    if args.algorithms:
        for algo in args.algorithms.split(","):
            chains.append(_chain_from_section({}, {**overrides, "algorithm": algo.strip()}))

    def file_or(key, cast, flag_value, default):
        if flag_value is not None:
            return flag_value
        if key in file_section:
            return cast(file_section[key])
        return default

    output_dir = os.environ.get(
        OUTPUT_DIR_ENV, file_or("output_dir", str, args.output_dir, "mhss-out")
    )
    model = parse_model(
        file_or("model", str, args.model, "logistic"),
        file_or("rate_scale", float, args.rate_scale, 1.0),
    )
    return ExperimentSpec(
        chains=chains,
        output_dir=output_dir,
        data_path=file_or("data", str, args.data, None),
        response_column=file_or("response_column", str, args.response_column, "y"),
        add_intercept=not file_or("no_intercept", lambda s: s.lower() == "true",
                                  args.no_intercept or None, False),
        standardize=file_or("standardize", lambda s: s.lower() == "true",
                            args.standardize or None, False),
        synthetic_n=file_or("n", int, args.n, 1000),
        synthetic_d=file_or("d", int, args.d, 5),
        model=model,
        data_seed=file_or("data_seed", int, args.data_seed, 0),
        replicates=file_or("replicates", int, args.replicates, 1),
    )


def _cmd_generate(args) -> int:
    model = parse_model(args.model, args.rate_scale)
    dataset, beta = generate_synthetic(args.n, args.d, model, args.data_seed)
    frame = pd.DataFrame(dataset.X, columns=[f"x_{j}" for j in range(dataset.d)])
    frame.insert(0, "y", dataset.y)
    frame.to_csv(args.out, index=False)
    with open(args.out + ".beta.json", "w") as fh:
        json.dump({"beta_true": beta.tolist(), "seed": args.data_seed}, fh)
    print(f"wrote {args.out} (n={dataset.n}, d={dataset.d})")
    return EXIT_OK


def _dataset_from_args(args) -> Dataset:
    model = parse_model(args.model, args.rate_scale)
    if args.data:
        return load_csv(args.data, model, args.response_column,
                        add_intercept=not args.no_intercept,
                        standardize=args.standardize)
    dataset, _ = generate_synthetic(args.n, args.d, model, args.data_seed)
    return dataset


def _cmd_fit_mode(args) -> int:
    dataset = _dataset_from_args(args)
    config = modefit.ModeFitConfig(method=args.method, seed=args.seed or 0)
    theta_hat = modefit.fit_mode(dataset, config)
    cache = cv.build_cache(dataset, theta_hat)
    H = modefit.hessian_at(dataset, parse_prior(args.prior or "flat"), theta_hat)
    V_d, _ = modefit.preconditioner(H)
    cv.save_cache(args.out, cache, V_d)
    print(f"wrote cache sidecar {args.out} (grad norm at theta_hat: "
          f"{np.linalg.norm(modefit.log_posterior_grad(dataset, parse_prior(args.prior or 'flat'), theta_hat)):.3g})")
    return EXIT_OK


def _cmd_sample(args) -> int:
    spec = _spec_from_args(args)
    written = run_experiment(spec)
    print("\n".join(written))
    return EXIT_OK


def _cmd_diagnose(args) -> int:
    frame = pd.read_csv(args.samples)
    theta_cols = [c for c in frame.columns if c.startswith("theta_")]
    samples = frame[theta_cols].to_numpy()
    metrics = {
        "ess": [diag.ess(samples[:, j]) for j in range(samples.shape[1])],
        "msjd": diag.msjd(samples),
        "acceptance_rate": float(frame["accepted"].mean()),
        "stage1_rate": float(frame["stage1_pass"].mean()),
        "mean_batch": float(frame["batch"].mean()),
    }
    text = json.dumps(metrics, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text)
    return EXIT_OK


def _cmd_compare(args) -> int:
    rows = []
    for path in sorted(args.metrics):
        with open(path) as fh:
            m = json.load(fh)
        name = os.path.basename(path)
        rows.append(
            {
                "algorithm": name.removeprefix("metrics_").removesuffix(".json"),
                "acceptance_rate": m["acceptance_rate"],
                "mean_batch": m["mean_batch"],
                "ess_per_second": m["ess_per_second"],
                "ess_per_batch": m["ess_per_batch"],
            }
        )
    frame = pd.DataFrame(rows)
    if args.out:
        frame.to_csv(args.out, index=False)
    print(frame.to_string(index=False))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mhss",
        description="Subsampling MCMC for logistic, probit and softplus-Poisson regression",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate a synthetic dataset to CSV")
    _add_data_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_generate)

    p = sub.add_parser("fit-mode", help="fit theta_hat and write a cache sidecar")
    _add_data_flags(p)
    p.add_argument("--method", default="FullGradient", choices=["FullGradient", "SGD"])
    p.add_argument("--prior", default="flat")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_fit_mode)

    p = sub.add_parser("sample", help="run an experiment (mode fit, cache, chains)")
    _add_data_flags(p)
    p.add_argument("--config", help="INI experiment file")
    p.add_argument("--algorithms", help="comma list, e.g. MHSS1,SMH1,RWM")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--iterations", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--chi", type=float)
    p.add_argument("--prior")
    p.add_argument("--replicates", type=int)
    p.add_argument("--output-dir", dest="output_dir")
    p.set_defaults(fn=_cmd_sample)

    p = sub.add_parser("diagnose", help="metrics from a samples CSV")
    p.add_argument("--samples", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_diagnose)

    p = sub.add_parser("compare", help="combine metrics JSONs into one table")
    p.add_argument("metrics", nargs="+")
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except BoundViolationError as exc:
        print(f"bound violation: {exc}", file=sys.stderr)
        return EXIT_BOUND_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
