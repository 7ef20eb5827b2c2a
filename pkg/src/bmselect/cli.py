"""Command-line interface.

Subcommands: ``simulate`` (draw synthetic datasets), ``bf`` (price one
candidate model), ``mcmc`` (posterior sampling or exact enumeration),
``scan`` (single-covariate baseline), ``validate`` (accuracy benchmark
against the numerical reference), ``eval`` (true/false-positive trade-off
curves). Every run writes a ``*_manifest.json`` recording inputs, flags,
seeds and package versions; outputs are deterministic given those.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 resource
limit.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bayes_factors import model_bf
from .data import SSMRData
from .exceptions import DataValidationError, NumericalError, ResourceLimitError
from .io import (
    file_digest,
    read_dataset,
    read_pip_tsv,
    read_truth,
    scenario_from_json,
    write_curve_tsv,
    write_dataset,
    write_matrix_tsv,
    write_pip_tsv,
    write_top_models_jsonl,
    write_truth,
)
from .models import ModelConfig
from .priors import PriorSpec
from .regression import prepare
from .search import McmcConfig, enumerate_posterior, run_mcmc, single_covariate_scan
from .simulate import SimTruth, evaluate, simulate
from .validation import VALIDATION_PRESETS, rmse_table, run_validation


def _write_manifest(out_dir: Path, command: str, args: argparse.Namespace, inputs) -> None:
    manifest = {
        "command": command,
        "flags": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "inputs": {str(p): file_digest(p) for p in inputs if p and Path(p).exists()},
        "versions": {
            "bmselect": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{command}_manifest.json").write_text(json.dumps(manifest, indent=2))


def _load_prior(path, data: SSMRData) -> PriorSpec:
    n_cells = data.s * data.r
    if path is None:
        return PriorSpec.default(n_cells)
    return PriorSpec.from_json(Path(path).read_text(), n_cells)


def _load_regions(path):
    if path is None:
        return None
    payload = json.loads(Path(path).read_text())
    return {str(name): [int(i) for i in idx] for name, idx in payload.items()}


def _load_model(args, data: SSMRData) -> ModelConfig:
    if args.model_file:
        strings = [ln.strip() for ln in Path(args.model_file).read_text().splitlines() if ln.strip()]
    elif args.model:
        strings = [tok.strip() for tok in args.model.split(",") if tok.strip()]
    else:
        raise DataValidationError("either --model or --model-file is required")
    if len(strings) != data.p:
        raise DataValidationError(
            f"model lists {len(strings)} configuration strings; dataset has {data.p} covariates"
        )
    return ModelConfig.from_strings(strings, data.s, data.r)


def cmd_simulate(args) -> int:
    scenario = scenario_from_json(args.scenario)
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)
    data, truth = simulate(scenario)
    out = Path(args.out)
    write_dataset(out, data)
    write_truth(out / "truth.json", truth, scenario)
    _write_manifest(out, "simulate", args, [args.scenario])
    print(f"wrote dataset ({data.s} subgroups, p={data.p}, r={data.r}) to {out}")
    return 0


def cmd_bf(args) -> int:
    data = read_dataset(args.data)
    prior = _load_prior(args.prior, data)
    model = _load_model(args, data)
    null = prepare(data)
    if args.known_sigma:
        sigma = [np.asarray(m, dtype=np.float64)
                 for m in json.loads(Path(args.known_sigma).read_text())]
        from scipy.special import logsumexp

        from .bayes_factors import LOG10, exact_bf
        from .priors import build_w

        # exact model BF: the grid mixture of known-variance Bayes factors
        values = np.array([
            exact_bf(data, model,
                     build_w(model, tuple(pt), scale_invariant=prior.scale_invariant),
                     sigma, null=null).log10_bf
            for pt in prior.grid.points
        ])
        log10_bf = float(logsumexp(LOG10 * values, b=prior.grid.weights) / LOG10)
        payload = {"log10_bf": log10_bf, "method": "exact", "alpha": None,
                   "restricted": False, "grid_sampled": False}
    else:
        result = model_bf(data, model, prior, alpha=args.alpha, budget=args.budget,
                          seed=args.seed, null=null)
        payload = {"log10_bf": result.log10_bf, "method": result.method,
                   "alpha": result.alpha, "restricted": result.restricted,
                   "grid_sampled": result.grid_sampled}
    payload["model"] = model.gamma_strings()
    text = json.dumps(payload, indent=2)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        _write_manifest(out.parent, "bf", args, [args.data, args.prior, args.known_sigma])
    print(text)
    return 0


def cmd_mcmc(args) -> int:
    data = read_dataset(args.data)
    prior = _load_prior(args.prior, data)
    regions = _load_regions(args.regions)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.exact:
        summary = enumerate_posterior(data, prior, alpha=args.alpha,
                                      max_models=args.max_models, regions=regions)
    else:
        cfg = McmcConfig(burn_in=args.burn_in, samples=args.samples, seed=args.seed,
                         grid_budget=args.budget, rb_eval_budget=args.rb_eval_budget)
        summary = run_mcmc(data, prior, cfg, alpha=args.alpha, regions=regions)
    write_pip_tsv(out / "pip.tsv", summary.pip, summary.state_labels)
    write_top_models_jsonl(out / "top_models.jsonl", summary.top_models)
    (out / "diagnostics.json").write_text(json.dumps(summary.diagnostics, indent=2, default=float))
    if summary.region_probs is not None:
        (out / "region_probs.json").write_text(json.dumps(summary.region_probs, indent=2))
    _write_manifest(out, "mcmc", args, [args.data, args.prior, args.regions])
    print(f"wrote posterior summary to {out}")
    return 0


def cmd_scan(args) -> int:
    data = read_dataset(args.data)
    prior = _load_prior(args.prior, data)
    regions = _load_regions(args.regions)
    result = single_covariate_scan(data, prior, alpha=args.alpha, regions=regions)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_pip_tsv(out / "scan_pip.tsv", result.posterior, result.state_labels)
    write_matrix_tsv(out / "scan_log10_bf.tsv", result.log10_bfs, result.state_labels)
    if result.region_probs is not None:
        (out / "region_probs.json").write_text(json.dumps(result.region_probs, indent=2))
    _write_manifest(out, "scan", args, [args.data, args.prior, args.regions])
    print(f"wrote scan results to {out}")
    return 0


def cmd_validate(args) -> int:
    frame = run_validation(preset=args.preset, alphas=tuple(args.alpha),
                           replicates=args.replicates, seed=args.seed,
                           threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out / "validation.tsv", sep="\t", index=False, float_format="%.10g")
    table = rmse_table(frame, alphas=tuple(args.alpha))
    table.to_csv(out / "rmse.tsv", sep="\t", index=False, float_format="%.6g")
    _write_manifest(out, "validate", args, [])
    print(table.to_string(index=False))
    return 0


def cmd_eval(args) -> int:
    pairs = []
    for line in Path(args.pairs).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataValidationError("pairs file needs two tab-separated paths per line")
        pip, _, _ = read_pip_tsv(parts[0])
        truth = read_truth(parts[1])
        pairs.append((1.0 - pip[:, 0], truth))
    curve = evaluate(pairs, mode=args.mode, regions=_load_regions(args.regions))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_curve_tsv(out, curve)
    _write_manifest(out.parent, "eval", args, [args.pairs])
    print(f"wrote curve ({len(curve.thresholds)} thresholds) to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bmselect",
        description="Bayesian model selection for systems of multivariate linear regressions",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="draw a synthetic dataset from a scenario file")
    p_sim.add_argument("--scenario", required=True, help="scenario JSON file")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_sim.set_defaults(func=cmd_simulate)

    p_bf = sub.add_parser("bf", help="log10 Bayes factor of one candidate model")
    p_bf.add_argument("--data", required=True, help="dataset manifest JSON")
    p_bf.add_argument("--model", help="comma-separated configuration bitstrings, one per covariate")
    p_bf.add_argument("--model-file", help="file with one configuration bitstring per line")
    p_bf.add_argument("--prior", help="prior JSON file (defaults to the built-in prior)")
    p_bf.add_argument("--alpha", type=float, default=0.5)
    p_bf.add_argument("--known-sigma", help="JSON file with per-subgroup error covariance matrices")
    p_bf.add_argument("--budget", type=int, default=4096, help="grid assignments before sampling")
    p_bf.add_argument("--seed", type=int, default=0)
    p_bf.add_argument("--out", help="write the result JSON here as well")
    p_bf.set_defaults(func=cmd_bf)

    p_mcmc = sub.add_parser("mcmc", help="posterior over models by sampling or enumeration")
    p_mcmc.add_argument("--data", required=True)
    p_mcmc.add_argument("--prior")
    p_mcmc.add_argument("--burn-in", type=int, default=25000)
    p_mcmc.add_argument("--samples", type=int, default=50000)
    p_mcmc.add_argument("--seed", type=int, default=0)
    p_mcmc.add_argument("--alpha", type=float, default=0.5)
    p_mcmc.add_argument("--regions", help="JSON file mapping region names to covariate indices")
    p_mcmc.add_argument("--exact", action="store_true",
                        help="enumerate the model space instead of sampling")
    p_mcmc.add_argument("--max-models", type=int, default=65536,
                        help="enumeration size limit with --exact")
    p_mcmc.add_argument("--budget", type=int, default=4096)
    p_mcmc.add_argument("--rb-eval-budget", type=int, default=500_000)
    p_mcmc.add_argument("--out", required=True)
    p_mcmc.set_defaults(func=cmd_mcmc)

    p_scan = sub.add_parser("scan", help="single-covariate posterior baseline")
    p_scan.add_argument("--data", required=True)
    p_scan.add_argument("--prior")
    p_scan.add_argument("--alpha", type=float, default=0.5)
    p_scan.add_argument("--regions")
    p_scan.add_argument("--out", required=True)
    p_scan.set_defaults(func=cmd_scan)

    p_val = sub.add_parser("validate", help="benchmark the approximation against the reference")
    p_val.add_argument("--preset", required=True, choices=sorted(VALIDATION_PRESETS))
    p_val.add_argument("--alpha", type=float, nargs="+", default=[0.0, 0.5, 1.0])
    p_val.add_argument("--replicates", type=int, default=500)
    p_val.add_argument("--seed", type=int, default=0)
    p_val.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p_val.add_argument("--out", required=True)
    p_val.set_defaults(func=cmd_validate)

    p_eval = sub.add_parser("eval", help="true/false-positive curve from replicate outputs")
    p_eval.add_argument("--pairs", required=True,
                        help="TSV file: per line, a pip.tsv path and a truth.json path")
    p_eval.add_argument("--mode", choices=["covariate", "region"], default="covariate")
    p_eval.add_argument("--regions")
    p_eval.add_argument("--out", required=True)
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except ResourceLimitError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
