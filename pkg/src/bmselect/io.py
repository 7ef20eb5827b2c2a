"""File formats: TSV matrices, dataset manifests, scenario and result files.

All tabular data is tab-separated with a header row; datasets are described
by a small JSON manifest listing per-subgroup file paths (resolved relative
to the manifest). Formats are documented in docs/FORMATS.md.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import pandas as pd

from .data import SSMRData
from .exceptions import DataValidationError
from .models import ModelConfig, code_to_gamma, gamma_to_string, string_to_gamma
from .simulate import SimScenario, SimTruth


def write_matrix_tsv(path, array, columns) -> None:
    df = pd.DataFrame(np.asarray(array), columns=list(columns))
    df.to_csv(path, sep="\t", index=False, float_format="%.17g")


def read_matrix_tsv(path):
    try:
        df = pd.read_csv(path, sep="\t")
    except Exception as exc:
        raise DataValidationError(f"cannot read matrix file {path}: {exc}") from exc
    return df.to_numpy(dtype=np.float64), list(df.columns)


def write_dataset(out_dir, data: SSMRData, covariate_ids=None, response_ids=None) -> Path:
    """Write per-subgroup TSVs plus a manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if covariate_ids is None:
        covariate_ids = [f"cov{j}" for j in range(data.p)]
    if response_ids is None:
        response_ids = [f"resp{k}" for k in range(data.r)]
    entries = []
    for i, sub in enumerate(data.subgroups):
        cand = f"candidates_{i}.tsv"
        resp = f"responses_{i}.tsv"
        ctrl = f"controls_{i}.tsv"
        write_matrix_tsv(out / cand, sub.candidates, covariate_ids)
        write_matrix_tsv(out / resp, sub.responses, response_ids)
        entry = {"candidates": cand, "responses": resp}
        if sub.q == 1 and np.ptp(sub.controls[:, 0]) == 0 and sub.controls[0, 0] == 1.0:
            entry["controls"] = None
        else:
            write_matrix_tsv(out / ctrl, sub.controls,
                             ["intercept"] + [f"ctrl{m}" for m in range(1, sub.q)])
            entry["controls"] = ctrl
        entries.append(entry)
    manifest = out / "dataset.json"
    manifest.write_text(json.dumps({"subgroups": entries}, indent=2))
    return manifest


def read_dataset(manifest_path) -> SSMRData:
    """Load a dataset from its manifest.

    Each subgroup entry names candidate/response TSVs and optionally a
    controls TSV whose first column must already be the intercept; without
    one an intercept-only design is used.
    """
    path = Path(manifest_path)
    try:
        manifest = json.loads(path.read_text())
    except Exception as exc:
        raise DataValidationError(f"cannot read dataset manifest {path}: {exc}") from exc
    subgroups = manifest.get("subgroups")
    if not subgroups:
        raise DataValidationError("dataset manifest must list at least one subgroup")
    ys, xs, cs = [], [], []
    for entry in subgroups:
        x, _ = read_matrix_tsv(path.parent / entry["candidates"])
        y, _ = read_matrix_tsv(path.parent / entry["responses"])
        ctrl = entry.get("controls")
        if ctrl is None:
            c = np.ones((x.shape[0], 1))
        else:
            c, _ = read_matrix_tsv(path.parent / ctrl)
        ys.append(y)
        xs.append(x)
        cs.append(c)
    return SSMRData.from_arrays(ys, xs, cs)


def scenario_to_json(scenario: SimScenario) -> str:
    n_cells = scenario.s * scenario.r
    payload = {
        "n": scenario.n, "p": scenario.p, "r": scenario.r, "s": scenario.s,
        "causal_rate": scenario.causal_rate,
        "config_dist": {
            gamma_to_string(code_to_gamma(c, n_cells)): v
            for c, v in sorted(scenario.config_dist.items())
        },
        "effect_model": scenario.effect_model,
        "sigma_truth": np.asarray(scenario.sigma_truth).tolist(),
        "covariate_model": scenario.covariate_model,
        "maf_range": list(scenario.maf_range),
        "seed": scenario.seed,
    }
    return json.dumps(payload, indent=2)


def scenario_from_json(text_or_path) -> SimScenario:
    text = text_or_path
    path = Path(str(text_or_path))
    if path.exists():
        text = path.read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataValidationError(
            f"malformed scenario JSON (line {exc.lineno}, column {exc.colno}): {exc.msg}"
        ) from exc
    known = {"n", "p", "r", "s", "causal_rate", "config_dist", "effect_model",
             "sigma_truth", "covariate_model", "maf_range", "seed"}
    unknown = set(cfg) - known
    if unknown:
        raise DataValidationError(f"unknown scenario fields: {sorted(unknown)}")
    kwargs = dict(cfg)
    if "config_dist" in kwargs and kwargs["config_dist"] is not None:
        n_cells = int(cfg.get("s", 1)) * int(cfg.get("r", 3))
        dist = {}
        for key, val in kwargs["config_dist"].items():
            gamma = string_to_gamma(key, n_cells)
            dist[sum(int(b) << t for t, b in enumerate(gamma))] = float(val)
        kwargs["config_dist"] = dist
    if "sigma_truth" in kwargs and kwargs["sigma_truth"] is not None:
        kwargs["sigma_truth"] = np.asarray(kwargs["sigma_truth"], dtype=np.float64)
    if "maf_range" in kwargs:
        kwargs["maf_range"] = tuple(kwargs["maf_range"])
    return SimScenario(**kwargs)


def write_truth(path, truth: SimTruth, scenario: SimScenario | None = None) -> None:
    payload = {
        "gammas": truth.model.gamma_strings(),
        "effects": truth.effects.tolist(),
    }
    if scenario is not None:
        payload["scenario"] = json.loads(scenario_to_json(scenario))
    Path(path).write_text(json.dumps(payload, indent=2))


def read_truth(path) -> SimTruth:
    try:
        payload = json.loads(Path(path).read_text())
    except Exception as exc:
        raise DataValidationError(f"cannot read truth file {path}: {exc}") from exc
    strings = payload["gammas"]
    scenario = payload.get("scenario", {})
    s = int(scenario.get("s", 1))
    r = int(scenario.get("r", len(strings[0]) if strings else 1))
    model = ModelConfig.from_strings(strings, s, r)
    effects = np.asarray(payload.get("effects", np.zeros((model.p, s * r))), dtype=np.float64)
    return SimTruth(model, effects)


def write_pip_tsv(path, pip: np.ndarray, state_labels, covariate_ids=None) -> None:
    p, n_states = pip.shape
    if covariate_ids is None:
        covariate_ids = [f"cov{j}" for j in range(p)]
    rows = []
    for j in range(p):
        for c in range(n_states):
            rows.append((covariate_ids[j], state_labels[c], pip[j, c]))
    df = pd.DataFrame(rows, columns=["covariate", "configuration", "probability"])
    df.to_csv(path, sep="\t", index=False, float_format="%.12g")


def read_pip_tsv(path):
    df = pd.read_csv(path, sep="\t", dtype={"configuration": str})
    covs = list(dict.fromkeys(df["covariate"]))
    labels = list(dict.fromkeys(df["configuration"]))
    pip = np.zeros((len(covs), len(labels)))
    cov_ix = {c: i for i, c in enumerate(covs)}
    lab_ix = {c: i for i, c in enumerate(labels)}
    for _, row in df.iterrows():
        pip[cov_ix[row["covariate"]], lab_ix[row["configuration"]]] = row["probability"]
    return pip, labels, covs


def write_top_models_jsonl(path, top_models) -> None:
    with open(path, "w") as fh:
        for tm in top_models:
            fh.write(json.dumps({
                "gammas": list(tm.gamma_strings),
                "visits": tm.visits,
                "log10_score": tm.log10_score,
            }) + "\n")


def write_curve_tsv(path, curve) -> None:
    df = pd.DataFrame({
        "threshold": curve.thresholds, "tp": curve.tp, "fp": curve.fp,
    })
    df.to_csv(path, sep="\t", index=False, float_format="%.12g")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
