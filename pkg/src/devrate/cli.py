"""Command-line interface: ``devrate {fit,compare,bma,simulate,ppc,evidence}``.

Exit status is 0 on success, 1 for invalid input and 2 for numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .advi import AdviConfig, advi_fit
from .bma import bma_summary, evidence_weights, ic_weights
from .criteria import LoocvResult, criteria_report, loocv_exact
from .errors import DegenerateElbo, MissingQuantity, NumericalError, UnsupportedZero, ValidationError
from .evidence import (BridgeConfig, TemperatureLadder, bridge_evidence, importance_evidence,
                       power_posterior_evidence)
from .hmc import DrawsMatrix, deviance_summary, hmc_sample
from .io import (NA, RunConfig, atomic_write, load_config, load_dataset, read_json, save_dataset,
                 write_json, write_table)
from .model import ModelSpec
from .obs_models import Dataset, default_priors, format_prior, parse_prior
from .predictive import derived_draws, posterior_predictive, summarize
from .rng import stream, stream_manifest

EVIDENCE_COLUMNS = {"importance": "log_z_IS", "power_posterior": "log_z_PP", "bridge": "log_z_BS"}
QUANTITIES = ("T_min", "T_opt", "T_max", "deviance")


# --------------------------------------------------------------------------
# shared steps


def build_model(curve: str, obs: str, prior_text: dict) -> ModelSpec:
    base = default_priors(curve, obs)
    overrides = {k: parse_prior(v) for k, v in prior_text.items() if k in base.names()}
    return ModelSpec(curve, obs, base.with_overrides(overrides))


def _model_dir(out: Path, model: ModelSpec, n_models: int) -> Path:
    return out / model.name if n_models > 1 else out


def _resolve(cfg: RunConfig, args) -> RunConfig:
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.sampler = dataclasses.replace(cfg.sampler, seed=args.seed)
    if args.data:
        cfg.data = args.data
    if args.out:
        cfg.out = args.out
    if args.threads:
        cfg.sampler = dataclasses.replace(cfg.sampler, n_jobs=args.threads)
    if cfg.out is None:
        raise ValidationError("no output directory: pass --out or set 'out' in the config")
    return cfg


def _load_data(cfg: RunConfig) -> Dataset:
    if cfg.data is None:
        raise ValidationError("no dataset: pass --data or set 'data' in the config")
    return load_dataset(cfg.data)


def _check_compatible(model: ModelSpec, data: Dataset) -> None:
    if not model.obs.allows_zero and np.any(data.rate == 0):
        raise UnsupportedZero(sorted(set(data.temperature[data.rate == 0].tolist())))


def _echo_config(out: Path, cfg: RunConfig, command: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    atomic_write(out / "config.toml", cfg.source_text)
    names = [("chain", i) for i in range(cfg.sampler.n_chains)] + ["prior-rung", "importance", "bridge", "bma",
                                                                     "ppc", "simulate"]
    write_json(out / "manifest.json", {
        "command": command, "version": __version__, "seed": cfg.seed,
        "data": cfg.data, "models": ["-".join(m) for m in cfg.models],
        "streams": stream_manifest(cfg.seed, names),
    })


def _posterior_table(model: ModelSpec, fit: DrawsMatrix, derived: dict, dev: dict):
    rows = []
    summ = fit.summary()
    for name in fit.names:
        s = summ[name]
        rows.append([name, s["mean"], s["sd"], s["q2.5"], s["q50"], s["q97.5"], s["ess"], s["rhat"]])
    for q, x in derived.items():
        s = summarize(x)
        rows.append([q, s["mean"] if s["n"] else NA, NA, s["q2.5"] if s["n"] else NA, NA,
                     s["q97.5"] if s["n"] else NA, NA, NA])
    rows.append(["deviance", dev["mean"], NA, dev["q2.5"], NA, dev["q97.5"], NA, NA])
    return ["parameter", "mean", "sd", "q2.5", "q50", "q97.5", "ess", "rhat"], rows


def run_fit(model: ModelSpec, data: Dataset, cfg: RunConfig, out: Path) -> tuple:
    """HMC fit (plus configured ADVI fits) of one model; writes its artifact directory."""
    _check_compatible(model, data)
    fit = hmc_sample(model, data, cfg.sampler)
    derived = derived_draws(model, fit)
    dev = deviance_summary(model, data, fit)
    out.mkdir(parents=True, exist_ok=True)
    fit.save(out / "draws.npz")
    np.savez(out / "derived.npz", deviance=dev["draws"], **derived)
    write_json(out / "model.json", {
        "curve": model.curve.name, "obs": model.obs.name,
        "priors": {n: format_prior(model.priors[n]) for n in model.param_names},
    })
    cols, rows = _posterior_table(model, fit, derived, dev)
    write_table(out, "posterior", cols, rows, f"Posterior summary: {model.name} (HMC)",
                {"diagnostics": {k: v for k, v in fit.diagnostics.items() if k != "config"}})
    advi_results = {}
    for fam in cfg.advi:
        try:
            res = advi_fit(model, data, AdviConfig(family=fam, seed=cfg.seed))
        except DegenerateElbo as exc:
            print(f"devrate: warning: {model.name}: ADVI ({fam}) failed: {exc}", file=sys.stderr)
            advi_results[fam] = None
            continue
        advi_results[fam] = res
        d = derived_draws(model, res.draws)
        dv = deviance_summary(model, data, res.draws)
        cols, rows = _posterior_table(model, res.draws, d, dv)
        rows = [r[:6] + [NA, NA] for r in rows]
        write_table(out, f"advi_{fam}", cols, rows, f"Posterior summary: {model.name} (ADVI {fam})",
                    {"elbo": res.elbo.value, "elbo_se": res.elbo.se, "converged": res.converged,
                     "iterations": res.n_iter})
    return fit, derived, dev, advi_results


def run_evidence(model: ModelSpec, data: Dataset, fit: DrawsMatrix, cfg: RunConfig) -> dict:
    ev = cfg.evidence
    out = {}
    for method in ev.methods:
        if method == "importance":
            est = importance_evidence(model, data, fit, n_is=ev.n_is, rng=stream(cfg.seed, "importance"),
                                      proposal=ev.is_proposal)
        elif method == "bridge":
            est = bridge_evidence(model, data, fit, BridgeConfig(warp=ev.bridge_warp, seed=cfg.seed))
        else:
            rung_cfg = dataclasses.replace(cfg.sampler, n_warmup=ev.rung_warmup, n_draws=ev.rung_draws,
                                           n_chains=ev.rung_chains, n_jobs=1)
            ladder = TemperatureLadder.power(ev.n_rungs, ev.ladder_exponent, rung_cfg)
            est = power_posterior_evidence(model, data, ladder, n_jobs=cfg.sampler.n_jobs, rule=ev.pp_rule)
        out[method] = est
    return out


# --------------------------------------------------------------------------
# commands


def cmd_fit(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    data = _load_data(cfg)
    _echo_config(out, cfg, "fit")
    for curve, obs in cfg.models:
        model = build_model(curve, obs, cfg.priors)
        run_fit(model, data, cfg, _model_dir(out, model, len(cfg.models)))
    return out


def cmd_evidence(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    data = _load_data(cfg)
    _echo_config(out, cfg, "evidence")
    rows = []
    for curve, obs in cfg.models:
        model = build_model(curve, obs, cfg.priors)
        _check_compatible(model, data)
        fit = hmc_sample(model, data, cfg.sampler)
        for method, est in run_evidence(model, data, fit, cfg).items():
            rows.append([model.name, method, est.log_z, est.se])
    write_table(out, "evidence", ["model", "method", "log_z", "se"], rows, "Log marginal likelihood (nats)")
    return out


def cmd_compare(cfg: RunConfig) -> Path:
    """Fit every model, then tabulate AIC, DIC, LooCV, WAIC, BIC and three log evidences."""
    out = Path(cfg.out)
    data = _load_data(cfg)
    _echo_config(out, cfg, "compare")
    columns = ["model", "AIC", "DIC", "LooCV", "WAIC", "BIC",
               "log_z_IS", "se_IS", "log_z_PP", "se_PP", "log_z_BS", "se_BS"]
    rows, details = [], {}
    for curve, obs in cfg.models:
        model = build_model(curve, obs, cfg.priors)
        mdir = out / model.name
        fit, derived, dev, advi_results = run_fit(model, data, cfg, mdir)
        loo: Optional[LoocvResult] = None
        if cfg.loocv:
            loo = loocv_exact(model, data, cfg.sampler, fit, n_jobs=cfg.sampler.n_jobs)
        crit = criteria_report(model, data, fit, loo)
        evid = run_evidence(model, data, fit, cfg)
        row = [model.name, crit.aic, crit.dic_1, crit.loocv, crit.waic_2, crit.bic]
        for method in ("importance", "power_posterior", "bridge"):
            est = evid.get(method)
            row += [est.log_z, est.se] if est is not None else [NA, NA]
        rows.append(row)
        details[model.name] = {
            "criteria": crit.as_dict(),
            "evidence": {m: e.as_dict() for m, e in evid.items()},
            "elbo": {fam: ({"value": r.elbo.value, "se": r.elbo.se, "converged": r.converged} if r is not None
                           else {"value": NA, "se": NA, "converged": False})
                     for fam, r in advi_results.items()},
            "dir": model.name,
        }
    write_table(out, "compare", columns, rows, "Model selection criteria (deviance scale) and log evidence (nats)",
                {"details": details})
    return out


def _weight_sources(doc: dict) -> dict:
    rows = {r[0]: r for r in doc["rows"]}
    cols = doc["columns"]
    names = list(rows)
    sources = {}
    for label, col in (("aic", "AIC"), ("dic", "DIC"), ("loocv", "LooCV"), ("waic", "WAIC"), ("bic", "BIC")):
        vals = [rows[n][cols.index(col)] for n in names]
        if all(v != NA for v in vals):
            sources[label] = ic_weights(vals, label, names)
    for method, col in EVIDENCE_COLUMNS.items():
        vals = [rows[n][cols.index(col)] for n in names]
        if all(v != NA for v in vals):
            sources[f"evidence_{method}"] = evidence_weights(vals, names=names)
    for fam, label in (("meanfield", "elbo_mf"), ("fullrank", "elbo_fr")):
        vals = [doc["details"][n]["elbo"].get(fam, {}).get("value", NA) for n in names]
        if all(v != NA for v in vals):
            sources[label] = evidence_weights(vals, names=names, source=label)
    return sources


def cmd_bma(artifact: Path, out: Optional[Path], seed: int) -> Path:
    artifact = Path(artifact)
    doc = read_json(artifact / "compare.json")
    out = Path(out) if out else artifact
    names = [r[0] for r in doc["rows"]]
    per_model = []
    for n in names:
        path = artifact / doc["details"][n]["dir"] / "derived.npz"
        try:
            with np.load(path) as f:
                per_model.append({k: f[k] for k in f.files})
        except OSError as exc:
            raise ValidationError(f"missing derived draws for {n}: {exc}") from exc
    sources = _weight_sources(doc)
    if not sources:
        raise ValidationError("compare artifact has no complete criterion or evidence column")
    wrows = [[n] + [float(w.weights[i]) for w in sources.values()] for i, n in enumerate(names)]
    write_table(out, "weights", ["model"] + list(sources), wrows, "Model weights",
                {"diagnostic_only": [s for s, w in sources.items() if w.diagnostic_only]})
    brows = []
    for label, w in sources.items():
        for q in QUANTITIES:
            try:
                s = bma_summary(w, per_model, [q], names, seed=seed, min_draws=1)[q]
                brows.append([label, q, s["mean"], s["q2.5"], s["q97.5"]])
            except MissingQuantity:
                brows.append([label, q, NA, NA, NA])
    write_table(out, "bma", ["weights", "quantity", "mean", "q2.5", "q97.5"], brows,
                "Model-averaged estimates")
    return out


def cmd_simulate(cfg: RunConfig) -> Path:
    """Draw a synthetic dataset from the first configured model at ``[simulate] truth``.

    Rates are clipped to [0, 1] so the file always loads; realistic truths never reach the clip.
    """
    sim = cfg.simulate
    for key in ("truth", "temperatures", "n_per_temp"):
        if key not in sim:
            raise ValidationError(f"[simulate] needs {key!r}")
    model = build_model(cfg.curve, cfg.obs, cfg.priors)
    truth = sim["truth"]
    missing = set(model.param_names) - set(truth)
    if missing:
        raise ValidationError(f"[simulate] truth lacks {sorted(missing)}")
    theta = np.array([float(truth[n]) for n in model.param_names])
    if not model.transform.in_support(theta):
        raise ValidationError(f"[simulate] truth {truth} lies outside the parameter space")
    temps = np.repeat(np.asarray(sim["temperatures"], dtype=float), int(sim["n_per_temp"]))
    y = np.clip(model.simulate(theta, temps, stream(cfg.seed, "simulate")), 0.0, 1.0)
    out = Path(cfg.out)
    _echo_config(out, cfg, "simulate")
    save_dataset(Dataset(temps, y), out / "data.csv")
    write_json(out / "truth.json", {"model": model.name, "truth": dict(zip(model.param_names, theta)),
                                    "derived": model.curve.derived(theta[: model.curve.dim])})
    return out


def _parse_grid(text: str) -> np.ndarray:
    try:
        a, b, n = text.split(":")
        return np.linspace(float(a), float(b), int(n))
    except ValueError:
        raise ValidationError(f"grid must be start:stop:num, got {text!r}") from None


def cmd_ppc(artifact: Path, grid: np.ndarray, out: Optional[Path], seed: int) -> Path:
    artifact = Path(artifact)
    meta = read_json(artifact / "model.json")
    model = build_model(meta["curve"], meta["obs"], meta["priors"])
    fit = DrawsMatrix.load(artifact / "draws.npz")
    band = posterior_predictive(model, fit, grid, seed=seed)
    cols = [k for k in band]
    rows = [[float(band[c][i]) for c in cols] for i in range(grid.size)]
    write_table(Path(out) if out else artifact, "ppc", cols, rows, f"Posterior predictive bands: {model.name}")
    return Path(out) if out else artifact


# --------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="devrate", description="Bayesian developmental-rate curve fitting")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="TOML run configuration")
        sp.add_argument("--data", help="dataset file (temperature,rate)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int, help="root seed (overrides the config)")
        sp.add_argument("--threads", type=int, default=None, help="worker processes for chains and rungs")

    for name, helptext in (("fit", "fit one or more models by HMC"),
                           ("compare", "fit models and tabulate criteria and evidence"),
                           ("evidence", "log marginal likelihood estimates"),
                           ("simulate", "write a synthetic dataset")):
        common(sub.add_parser(name, help=helptext))
    sp = sub.add_parser("bma", help="model weights and averaged estimates from a compare artifact")
    sp.add_argument("artifact")
    common(sp, config_required=False)
    sp = sub.add_parser("ppc", help="posterior predictive bands from a fit artifact")
    sp.add_argument("artifact")
    sp.add_argument("--grid", default="0:45:91", help="start:stop:num temperatures")
    common(sp, config_required=False)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command in ("bma", "ppc"):
            seed = args.seed
            if seed is None and args.config:
                seed = load_config(args.config).seed
            seed = seed or 0
            if args.command == "bma":
                path = cmd_bma(Path(args.artifact), args.out, seed)
            else:
                path = cmd_ppc(Path(args.artifact), _parse_grid(args.grid), args.out, seed)
        else:
            cfg = _resolve(load_config(args.config), args)
            path = {"fit": cmd_fit, "compare": cmd_compare, "evidence": cmd_evidence,
                    "simulate": cmd_simulate}[args.command](cfg)
    except ValidationError as exc:
        print(f"devrate {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"devrate {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
