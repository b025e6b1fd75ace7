"""Command-line interface: ``dynlatent {fit,predict,attraction,simulate,eval}``.

Every output file starts with (or, for JSON, contains) the digest of the
run manifest so results can be traced to the configuration that made them.
The output directory defaults to ``$DYNLATENT_OUT_DIR`` or ``./dynlatent_out``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Failures print a JSON error record on stderr.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .attraction import AttractionPriorConfig, scan_all_pairs, von_mises_grid
from .evaluation import (
    detection_scores,
    distance_ratio_distribution,
    fit_auc,
    mse,
)
from .io import (NetworkFormatError, parse_network, save_npz, write_matrix, write_network,
                 write_table)
from .model import PriorConfig
from .predict import hard_threshold, naive_average_predictor, predict
from .sampler import ChainConfig, PosteriorChain, run_chain
from .synth import SimConfig, generate, generate_planted

logger = logging.getLogger("dynlatent")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
OUT_DIR_ENV = "DYNLATENT_OUT_DIR"


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def config_digest(config: dict) -> str:
    blob = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: dict = field(default_factory=dict)
    seed: int | None = None
    version: str = __version__
    timing: dict = field(default_factory=dict)
    acceptance: dict = field(default_factory=dict)

    @property
    def digest(self) -> str:
        return config_digest({"command": self.command, "config": self.config, "inputs": self.inputs,
                              "seed": self.seed, "version": self.version})

    def to_dict(self) -> dict:
        return _jsonable({**asdict(self), "digest": self.digest})

    def write(self, out_dir: Path) -> None:
        _write_json(out_dir / "manifest.json", self.to_dict())


def _write_json(path, obj):
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _tag(manifest: RunManifest) -> str:
    return f"manifest {manifest.digest}"


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    unknown = set(cfg) - {"chain", "prior", "attraction", "simulation"}
    if unknown:
        raise UsageError(f"unknown config sections: {sorted(unknown)}")
    return cfg


def _build(cls, values: dict, section: str):
    names = {f.name for f in fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise UsageError(f"unknown keys in '{section}': {sorted(unknown)}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid '{section}' settings: {exc}") from exc


_CHAIN_FLAGS = {"seed": "seed", "iterations": "iterations", "burn_in": "burn_in", "thin": "thin",
                "latent_dim": "latent_dim", "n0": "n0"}


def _chain_settings(args, cfg) -> dict:
    chain = dict(cfg.get("chain", {}))
    for flag, key in _CHAIN_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            chain[key] = v
    return chain


def _out_dir(args) -> Path:
    out = args.out_dir or os.environ.get(OUT_DIR_ENV) or "dynlatent_out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _read_network(args):
    if args.input is None:
        raise UsageError("--input is required")
    try:
        return parse_network(args.input, args.roster, directed=not args.undirected)
    except FileNotFoundError as exc:
        raise DataError(f"file not found: {exc.filename}") from exc
    except (NetworkFormatError, ValueError) as exc:
        raise DataError(str(exc)) from exc


def _inputs(args) -> dict:
    out = {}
    for key in ("input", "roster", "chain", "truth", "holdout"):
        p = getattr(args, key, None)
        if p is not None and Path(p).exists():
            out[key] = {"path": str(p), "sha256": _file_digest(p)}
    return out


def _load_chain(path) -> PosteriorChain:
    if path is None:
        raise UsageError("--chain is required")
    try:
        return PosteriorChain.load(path)
    except FileNotFoundError as exc:
        raise DataError(f"chain file not found: {path}") from exc
    except (KeyError, ValueError, OSError) as exc:
        raise DataError(f"cannot read chain file {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _chain_seeds(seed: int, k: int) -> list:
    if k == 1:
        return [seed]
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(k)]


def _run_one(args):
    Y, prior, config = args
    return run_chain(Y, prior, config)


def _write_chain_outputs(out: Path, chain: PosteriorChain, suffix: str, tag: str, Y):
    chain.save(out / f"chain{suffix}.npz")
    write_table(out / f"trace{suffix}.tsv",
                {"draw": np.arange(len(chain)), "beta_in": chain.beta_in, "beta_out": chain.beta_out,
                 "sigma2": chain.sigma2, "tau2": chain.tau2}, tag)
    X_hat = chain.posterior_mean_positions()
    n, T, p = X_hat.shape
    cols = {"actor": np.repeat(np.arange(n), T), "time": np.tile(np.arange(T), n)}
    for k in range(p):
        cols[f"x{k + 1}"] = X_hat[:, :, k].ravel()
    write_table(out / f"positions{suffix}.tsv", cols, tag)
    pm = chain.posterior_mean_params()
    write_table(out / f"radii{suffix}.tsv",
                {"actor": np.arange(n), "mean": pm.radii, "sd": chain.radii.std(axis=0)}, tag)
    summary = {
        "manifest": tag.split()[-1],
        "draws": len(chain),
        "posterior_mean": {"beta_in": pm.beta_in, "beta_out": pm.beta_out,
                           "sigma2": pm.sigma2, "tau2": pm.tau2},
        "posterior_sd": {"beta_in": float(chain.beta_in.std()), "beta_out": float(chain.beta_out.std()),
                         "sigma2": float(chain.sigma2.std()), "tau2": float(chain.tau2.std())},
        "acceptance": chain.acceptance,
        "actor_labels": list(Y.actor_labels) if Y.actor_labels else None,
        "time_labels": list(Y.time_labels) if Y.time_labels else None,
    }
    _write_json(out / f"summary{suffix}.json", summary)


def cmd_fit(args) -> int:
    cfg = _load_config(args.config)
    Y = _read_network(args)
    chain_cfg = _build(ChainConfig, _chain_settings(args, cfg), "chain")
    prior = _build(PriorConfig, cfg.get("prior", {}), "prior")
    k = args.chains
    seeds = _chain_seeds(chain_cfg.seed, k)
    configs = [ChainConfig(**{**asdict(chain_cfg), "seed": s}) for s in seeds]
    manifest = RunManifest("fit", {"chain": asdict(chain_cfg), "prior": asdict(prior), "chains": k,
                                   "directed": Y.directed}, _inputs(args), chain_cfg.seed)
    started = time.perf_counter()
    jobs = [(Y, prior, c) for c in configs]
    if args.jobs > 1 and k > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            chains = list(pool.map(_run_one, jobs))
    else:
        chains = [_run_one(j) for j in jobs]
    out = _out_dir(args)
    tag = _tag(manifest)
    for c, chain in enumerate(chains):
        if not all(np.isfinite(a).all() for a in (chain.X, chain.beta_in, chain.beta_out, chain.radii)):
            raise FloatingPointError("non-finite values in the chain")
        _write_chain_outputs(out, chain, "" if k == 1 else f"_{c}", tag, Y)
    manifest.timing = {"wall_clock": time.perf_counter() - started,
                       "per_chain": [ch.timing for ch in chains]}
    manifest.acceptance = {f"chain_{c}": ch.acceptance for c, ch in enumerate(chains)}
    manifest.write(out)
    print(out)
    return EXIT_OK


def cmd_predict(args) -> int:
    chain = _load_chain(args.chain)
    manifest = RunManifest("predict", {"threshold": args.threshold}, _inputs(args))
    res = predict(chain)
    out = _out_dir(args)
    tag = _tag(manifest)
    write_matrix(out / "latent_hat.tsv", res.latent_hat, tag)
    write_matrix(out / "edge_probs.tsv", res.edge_probs, tag)
    write_matrix(out / "edge_pred.tsv", hard_threshold(res.edge_probs, args.threshold), tag, fmt="%d")
    write_matrix(out / "weight_ess.tsv", res.ess, tag)
    manifest.write(out)
    print(out)
    return EXIT_OK


def cmd_attraction(args) -> int:
    cfg = _load_config(args.config)
    chain = _load_chain(args.chain)
    att = dict(cfg.get("attraction", {}))
    if args.p0 is not None:
        att["p0"] = args.p0
    if args.lam is not None:
        att["lam"] = args.lam
    prior = _build(AttractionPriorConfig, att, "attraction")
    if chain.p != 2:
        raise UsageError("edge attraction needs a 2-dimensional latent space")
    manifest = RunManifest("attraction", {"prior": asdict(prior), "threshold": args.threshold},
                           _inputs(args))
    reports = scan_all_pairs(chain, prior, args.threshold)
    out = _out_dir(args)
    tag = _tag(manifest)
    _write_json(out / "attraction.json",
                {"manifest": manifest.digest, "reports": [r.to_dict() for r in reports]})
    rows = {"influenced": [], "influencer": [], "step": [], "angle": [], "density": []}
    for r in reports:
        angles, dens = von_mises_grid(r.concentrations, r.mean_angles, args.grid)
        for t in range(dens.shape[0]):
            rows["influenced"].extend([r.influenced] * len(angles))
            rows["influencer"].extend([r.influencer] * len(angles))
            rows["step"].extend([t + 2] * len(angles))
            rows["angle"].extend(angles)
            rows["density"].extend(dens[t])
    write_table(out / "von_mises_grid.tsv", rows, tag)
    manifest.write(out)
    print(out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    sim = dict(cfg.get("simulation", {}))
    for key in ("n", "T", "seed", "missing_rate", "target_density"):
        v = getattr(args, key, None)
        if v is not None:
            sim[key] = v
    n_influenced = sim.pop("n_influenced", 0)
    if args.influenced is not None:
        n_influenced = args.influenced
    mu = sim.pop("mu", None)
    sim_cfg = _build(SimConfig, sim, "simulation")
    if n_influenced:
        result = generate_planted(sim_cfg, n_influenced, mu)
        sim_cfg = result.config
    else:
        result = generate(sim_cfg)
    manifest = RunManifest("simulate", {"simulation": asdict(sim_cfg)}, seed=sim_cfg.seed)
    out = _out_dir(args)
    write_network(result.network, out / "network.tsv", roster=out / "roster.tsv")
    p = result.params
    save_npz(out / "truth.npz", dict(
        X=result.X, tau2=p.tau2, sigma2=p.sigma2, beta_in=p.beta_in, beta_out=p.beta_out,
        radii=p.radii, complete=result.complete,
        pairs=np.array(sim_cfg.attraction_pairs, dtype=float).reshape(-1, 3),
        manifest=np.array(manifest.digest)))
    manifest.write(out)
    print(out)
    return EXIT_OK


def cmd_eval(args) -> int:
    chain = _load_chain(args.chain)
    Y = _read_network(args)
    if (Y.n, Y.T) != (chain.n, chain.T):
        raise DataError("network and chain dimensions differ")
    manifest = RunManifest("eval", {"threshold": args.threshold}, _inputs(args))
    metrics = {"fit_auc": fit_auc(Y, chain), "auc_pooling": "all time points pooled"}
    if Y.directed:
        metrics["fit_auc_undirected"] = fit_auc(Y, chain, undirected=True)
    if args.truth:
        try:
            truth = np.load(args.truth)
        except (FileNotFoundError, OSError, ValueError) as exc:
            raise DataError(f"cannot read truth file {args.truth}: {exc}") from exc
        ratios = distance_ratio_distribution(chain.posterior_mean_positions(), truth["X"])
        metrics["distance_ratio"] = {**ratios.quantiles, "iqr": ratios.iqr, "skipped": ratios.skipped}
        pm = chain.posterior_mean_params()
        metrics["beta_in"], metrics["beta_out"] = pm.beta_in, pm.beta_out
        metrics["radii_correlation"] = float(np.corrcoef(pm.radii, truth["radii"])[0, 1])
        if chain.p == 2 and chain.T >= 2:
            reports = scan_all_pairs(chain, AttractionPriorConfig(), args.threshold)
            sens, spec = detection_scores(reports, [tuple(r) for r in truth["pairs"]], chain.n)
            metrics["sensitivity"], metrics["specificity"] = sens, spec
    if args.holdout:
        try:
            Yh = parse_network(args.holdout, args.holdout_roster, directed=Y.directed)
        except (FileNotFoundError, NetworkFormatError, ValueError) as exc:
            raise DataError(str(exc)) from exc
        obs = Yh.observed_mask[0]
        P = predict(chain).edge_probs
        metrics["mse_weighted"] = mse(P, Yh.cells[0], obs)
        metrics["mse_naive"] = mse(naive_average_predictor(Y), Yh.cells[0], obs)
        metrics["mse_hard"] = mse(hard_threshold(P, args.threshold), Yh.cells[0], obs)
    out = _out_dir(args)
    metrics["manifest"] = manifest.digest
    _write_json(out / "metrics.json", metrics)
    flat = {k: v for k, v in metrics.items() if isinstance(v, (int, float))}
    with open(out / "metrics.tsv", "w") as fh:
        fh.write(f"# {_tag(manifest)}\nmetric\tvalue\n")
        for k, v in flat.items():
            fh.write(f"{k}\t{v!r}\n")
    manifest.write(out)
    print(out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dynlatent", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, network=True):
        p.add_argument("--out-dir", help=f"output directory (default ${OUT_DIR_ENV} or ./dynlatent_out)")
        p.add_argument("--config", help="JSON file with chain/prior/attraction/simulation sections")
        if network:
            p.add_argument("--input", help="dyad file with columns t, source, target, value")
            p.add_argument("--roster", help="roster file with columns t, actor, observed")
            p.add_argument("--undirected", action="store_true")

    p = sub.add_parser("fit", help="run the MCMC sampler")
    common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--latent-dim", type=int)
    p.add_argument("--n0", type=int, help="controls per stratum; 0 uses the exact likelihood")
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1, help="chains run in parallel")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict the next time step")
    common(p, network=False)
    p.add_argument("--chain", help="chain file written by fit")
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("attraction", help="detect edge attraction")
    common(p, network=False)
    p.add_argument("--chain", help="chain file written by fit")
    p.add_argument("--threshold", type=float, default=0.5, help="report pairs with null mass below this")
    p.add_argument("--p0", type=float)
    p.add_argument("--lam", type=float)
    p.add_argument("--grid", type=int, default=360, help="angular grid size for densities")
    p.set_defaults(func=cmd_attraction)

    p = sub.add_parser("simulate", help="simulate a network from the model")
    common(p, network=False)
    p.add_argument("--n", type=int)
    p.add_argument("--T", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--missing-rate", type=float)
    p.add_argument("--target-density", type=float)
    p.add_argument("--influenced", type=int, help="number of planted influenced actors")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("eval", help="evaluate a fitted chain")
    common(p)
    p.add_argument("--chain", help="chain file written by fit")
    p.add_argument("--truth", help="truth.npz written by simulate")
    p.add_argument("--holdout", help="dyad file for the next time step")
    p.add_argument("--holdout-roster")
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_eval)
    return parser


def _fail(code: int, exc: BaseException) -> int:
    record = {"status": "error", "exit_code": code, "error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(record), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with np.errstate(over="ignore", under="ignore"):
            return args.func(args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except DataError as exc:
        return _fail(EXIT_DATA, exc)
    except (ValueError, KeyError) as exc:
        return _fail(EXIT_DATA, exc)
    except Exception as exc:  # numerical breakdown deep inside the sampler
        return _fail(EXIT_NUMERIC, exc)


if __name__ == "__main__":
    sys.exit(main())
