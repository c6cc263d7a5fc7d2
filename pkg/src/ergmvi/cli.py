"""Command-line interface: ``ergmvi <subcommand> [options]``.

Every option may also come from a TOML file given with ``--config``; options
on the command line win. Each run writes its outputs plus a JSON manifest
into ``--out``. Exit status is 0 on success, 1 on a library error and 2 on a
usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import DATA_FORMAT_VERSION, __version__
from .errors import ConfigurationError, ErgmError
from .network import Network, karate, load_network, save_edgelist
from .stats import ModelSpec, all_change_stats, suff_stats

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger("ergmvi")

DEFAULTS = {
    "seed": 0, "workers": 1, "out": ".", "verbose": False,
    "network": None, "nodes": None, "attr": [], "karate": False, "terms": None,
    "aux_iters": 30000, "thin": 1000, "count": 1000, "chains": 1, "prior_var": 100.0,
    "theta": None, "save_network": False, "theta0": None, "final_count": None,
    "temps": 20, "rung_samples": 500, "rung_thin": None, "rung_burn": 0,
    "adjust_cache": None, "elbo_ref": None, "tol": None, "max_iters": None, "quad_order": 20,
    "mode": "snis", "K": 100, "K0": 1000, "init": "ncvmp", "ess_frac": 1.0 / 3.0,
    "step": 0.01, "check_every": 1000,
    "iters": 11000, "burnin": 1000, "sigma_eps": "0.1",
    "posterior": None, "path": "I", "N": 1000, "J": 50, "label": None,
    "inputs": [], "reference": 0, "a": None, "b": None, "mle": False,
    "quick": False, "full": False,
}


class UsageError(Exception):
    pass


def _floats(text):
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return np.array([float(x) for x in text])
    return np.array([float(x) for x in str(text).replace(" ", "").split(",") if x])


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(r if isinstance(r, str) else _fmt(r) if isinstance(r, (float, np.floating))
                              else str(r) for r in row))
    Path(path).write_text("\n".join(lines) + "\n")


# -- argument parsing -------------------------------------------------------

def _common(p):
    p.add_argument("--seed", type=int, default=None, help="root seed for every random stream (default 0)")
    p.add_argument("--workers", type=int, default=None, help="threads for independent chains (default 1)")
    p.add_argument("--config", default=None, help="TOML file with option values; flags win")
    p.add_argument("--out", default=None, help="output directory (default .)")
    p.add_argument("-v", "--verbose", action="store_true", default=None)


def _net(p):
    p.add_argument("--network", default=None, help="edge-list file, 1-based node pairs")
    p.add_argument("--nodes", type=int, default=None, help="node count for --network")
    p.add_argument("--attr", action="append", default=None, metavar="NAME=PATH",
                   help="categorical node attribute file (repeatable)")
    p.add_argument("--karate", action="store_true", default=None, help="use the bundled karate network")


def _model(p):
    p.add_argument("--terms", default=None, help="model terms, e.g. edges,gwesp:0.2,gwd:0.8")


def _sampler(p):
    p.add_argument("--aux-iters", type=int, default=None, help="burn-in steps per simulation (default 30000)")
    p.add_argument("--thin", type=int, default=None, help="steps between recorded networks (default 1000)")
    p.add_argument("--count", type=int, default=None, help="networks per simulation (default 1000)")
    p.add_argument("--chains", type=int, default=None, help="independent chains per simulation (default 1)")


def _prior(p):
    p.add_argument("--prior-var", type=float, default=None, help="prior variance per parameter (default 100)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ergmvi", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version",
                        version=f"ergmvi {__version__} (data format {DATA_FORMAT_VERSION})")
    sub = parser.add_subparsers(dest="command", metavar="subcommand")
    sub.required = True

    def add(name, help_, *groups):
        p = sub.add_parser(name, help=help_)
        _common(p)
        for g in groups:
            g(p)
        return p

    p = add("simulate", "simulate networks and record their statistics", _net, _model, _sampler)
    p.add_argument("--theta", default=None, help="comma-separated parameter vector")
    p.add_argument("--save-network", action="store_true", default=None)

    add("mple", "maximum pseudolikelihood estimate", _net, _model)

    p = add("mcmle", "Monte Carlo maximum likelihood estimate", _net, _model, _sampler)
    p.add_argument("--theta0", default=None)
    p.add_argument("--final-count", type=int, default=None)

    p = add("adjust", "fit the adjusted pseudolikelihood and write its cache", _net, _model, _sampler)
    p.add_argument("--temps", type=int, default=None, help="tempering rungs J (default 20)")
    p.add_argument("--rung-samples", type=int, default=None, help="draws per rung K (default 500)")
    p.add_argument("--rung-thin", type=int, default=None, help="thinning on the ladder (default --thin)")
    p.add_argument("--rung-burn", type=int, default=None, help="burn-in between rungs (default 0)")
    p.add_argument("--adjust-cache", default=None, help="output path (default OUT/adjust.json)")

    p = add("fit-ncvmp", "Gaussian posterior by message passing", _prior)
    p.add_argument("--adjust-cache", default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--quad-order", type=int, default=None)

    p = add("fit-svi", "Gaussian posterior by stochastic variational inference",
            _net, _model, _sampler, _prior)
    p.add_argument("--adjust-cache", default=None)
    p.add_argument("--mode", choices=["mc", "snis", "fixed"], default=None)
    p.add_argument("--K", type=int, default=None, help="networks per gradient estimate")
    p.add_argument("--K0", type=int, default=None, help="reference draws for the bound estimate")
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--init", choices=["ncvmp", "mple", "laplace"], default=None)
    p.add_argument("--ess-frac", type=float, default=None)
    p.add_argument("--step", type=float, default=None, help="Adam step scale (default 0.01)")
    p.add_argument("--check-every", type=int, default=None)
    p.add_argument("--max-iters", type=int, default=None)

    p = add("fit-laplace", "Laplace approximation on the adjusted pseudolikelihood", _prior)
    p.add_argument("--adjust-cache", default=None)

    p = add("fit-exchange", "exchange-algorithm posterior draws", _net, _model, _sampler, _prior)
    p.add_argument("--iters", type=int, default=None, help="iterations including burn-in")
    p.add_argument("--burnin", type=int, default=None)
    p.add_argument("--sigma-eps", default=None, help="proposal sd, scalar or one per parameter")
    p.add_argument("--theta0", default=None)

    p = add("iwlb", "importance-weighted lower bound on log evidence", _prior)
    p.add_argument("--posterior", default=None)
    p.add_argument("--path", choices=["I", "II"], default=None)
    p.add_argument("--adjust-cache", default=None)
    p.add_argument("--elbo-ref", default=None, help="alias of --adjust-cache for path II")
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--J", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--label", default=None)

    p = add("compare", "Bayes factors from IWLB outputs")
    p.add_argument("--inputs", nargs="+", default=None)
    p.add_argument("--reference", type=int, default=None)

    p = add("kl-compare", "marginal KL between two posterior files or chains")
    p.add_argument("--a", default=None)
    p.add_argument("--b", default=None)

    add("dump-changestats", "write the change-statistic matrix", _net, _model)

    p = add("oracle", "exact quantities by enumerating every graph (n <= 5)", _net, _model)
    p.add_argument("--theta", default=None)
    p.add_argument("--mle", action="store_true", default=None, help="exact MLE for --network")

    p = add("reproduce-karate", "run the karate model comparison end to end", _sampler)
    p.add_argument("--quick", action="store_true", default=None)
    p.add_argument("--full", action="store_true", default=None)
    return parser


def resolve(ns: argparse.Namespace) -> dict:
    """Merge built-in defaults, the TOML config and explicit flags (flags win)."""
    cfg = {}
    if ns.config:
        path = Path(ns.config)
        if not path.exists():
            bundled = resources.files("ergmvi.data") / f"{ns.config}.toml"
            if not bundled.is_file():
                raise UsageError(f"config file not found: {ns.config}")
            text = bundled.read_text()
        else:
            text = path.read_text()
        try:
            raw = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise UsageError(f"bad config {ns.config}: {exc}") from None
        for k, v in raw.items():
            key = k.replace("-", "_")
            if key not in DEFAULTS:
                raise UsageError(f"unknown config key {k!r}")
            cfg[key] = v
    out = {"command": ns.command}
    for key, default in DEFAULTS.items():
        val = getattr(ns, key, None)
        if val is None:
            val = cfg.get(key, default)
        out[key] = val
    return out


def _network(o) -> tuple[Network, dict]:
    if o["karate"] and o["network"]:
        raise UsageError("give either --karate or --network, not both")
    if o["karate"]:
        return karate(), {}
    if not o["network"]:
        raise UsageError("a network is required: --network PATH --nodes N, or --karate")
    if not o["nodes"]:
        raise UsageError("--nodes is required with --network")
    inputs = {}
    path = Path(o["network"])
    if not path.exists():
        raise UsageError(f"network file not found: {path}")
    inputs[str(path)] = _sha256(path)
    attrs = {}
    for item in o["attr"] or []:
        name, sep, apath = item.partition("=")
        if not sep or not name:
            raise UsageError(f"--attr expects NAME=PATH, got {item!r}")
        if not Path(apath).exists():
            raise UsageError(f"attribute file not found: {apath}")
        attrs[name] = apath
        inputs[apath] = _sha256(apath)
    return load_network(path, o["nodes"], attrs), inputs


def _spec(o) -> ModelSpec:
    if not o["terms"]:
        raise UsageError("--terms is required")
    return ModelSpec.parse(o["terms"])


def _sampler_cfg(o, seed_name):
    from .sampler import SamplerConfig
    from .seeding import derive_seed
    return SamplerConfig(aux_iters=o["aux_iters"], thin=o["thin"], count=o["count"],
                         seed=derive_seed(o["seed"], seed_name), chains=o["chains"],
                         workers=o["workers"])


def _prior_for(p, o):
    from .variational import GaussianPrior
    return GaussianPrior.isotropic(p, float(o["prior_var"]))


def _load_apl(o, key="adjust_cache"):
    from .pseudo import AdjustedPL
    path = o[key] or o.get("elbo_ref")
    if not path:
        raise UsageError("--adjust-cache is required (run `ergmvi adjust` first)")
    if not Path(path).exists():
        raise UsageError(f"adjustment cache not found: {path}")
    return AdjustedPL.load(path), {str(path): _sha256(path)}


def _need(o, key, flag):
    if o[key] is None:
        raise UsageError(f"{flag} is required")
    return o[key]


# -- subcommands -------------------------------------------------------------

def cmd_simulate(o, out):
    from .sampler import tnt_sample
    net, inputs = _network(o)
    spec = _spec(o)
    theta = _floats(_need(o, "theta", "--theta"))
    res = tnt_sample(net, theta, spec, _sampler_cfg(o, "simulate"), keep_final=o["save_network"])
    files = {}
    f = out / "simulate.csv"
    _write_csv(f, spec.labels, res.stats.tolist())
    files["stats"] = f
    if o["save_network"]:
        for c, final in enumerate(res.final):
            g = out / f"simulate-final-{c}.edgelist"
            save_edgelist(final, g)
            files[f"final_{c}"] = g
    print(f"simulated {res.K} networks, acceptance rate {res.acceptance_rate:.4f}")
    print("mean statistics: " + ", ".join(f"{l}={m:.6g}" for l, m in zip(spec.labels, res.mean())))
    return inputs, files


def cmd_mple(o, out):
    from .pseudo import mple
    net, inputs = _network(o)
    spec = _spec(o)
    theta = mple(net, spec)
    f = out / "mple.csv"
    _write_csv(f, ["param", "estimate"], [[l, t] for l, t in zip(spec.labels, theta)])
    for l, t in zip(spec.labels, theta):
        print(f"{l:>16s} {t: .6f}")
    return inputs, {"estimate": f}


def cmd_mcmle(o, out):
    from .pseudo import mcmc_mle
    net, inputs = _network(o)
    spec = _spec(o)
    theta = mcmc_mle(net, spec, _floats(o["theta0"]), _sampler_cfg(o, "mcmle"),
                     final_count=o["final_count"])
    f = out / "mcmle.csv"
    _write_csv(f, ["param", "estimate"], [[l, t] for l, t in zip(spec.labels, theta)])
    for l, t in zip(spec.labels, theta):
        print(f"{l:>16s} {t: .6f}")
    return inputs, {"estimate": f}


def cmd_adjust(o, out):
    from .pseudo import AdjustConfig, TemperSchedule, fit_adjustment
    net, inputs = _network(o)
    spec = _spec(o)
    sched = TemperSchedule.uniform(o["temps"], K=o["rung_samples"], aux_iters=o["aux_iters"],
                                   thin=o["rung_thin"] or o["thin"], burn_between=o["rung_burn"])
    cfg = AdjustConfig(sampler=_sampler_cfg(o, "adjust"), temper=sched, seed=o["seed"])
    apl = fit_adjustment(net, spec, cfg)
    f = Path(o["adjust_cache"]) if o["adjust_cache"] else out / "adjust.json"
    apl.save(f)
    print(f"theta_pl = {apl.theta_pl.tolist()}")
    print(f"theta_ml = {apl.theta_ml.tolist()}")
    print(f"log z(theta_ml) = {apl.log_z_ml:.6f}, log M = {apl.log_M:.6f}")
    return inputs, {"adjust_cache": f}


def _write_posterior(path, names, q, meta):
    from .variational import PosteriorFile
    PosteriorFile(list(names), q, meta).write(path)


def cmd_fit_ncvmp(o, out):
    from .ncvmp import ncvmp_fit
    from .quadrature import Quadrature
    apl, inputs = _load_apl(o)
    prior = _prior_for(apl.p, o)
    res = ncvmp_fit(apl, prior, tol=o["tol"] or 1e-5, max_iter=o["max_iters"] or 1000,
                    quad=Quadrature.hermite(o["quad_order"]))
    post = out / "posterior.csv"
    _write_posterior(post, apl.labels, res.q, {"method": "ncvmp", "elbo": repr(res.elbo),
                                               "spec": apl.meta.get("spec", ""),
                                               "iterations": res.iterations})
    tr = out / "ncvmp-trace.csv"
    rhos = [float("nan")] + res.rho
    _write_csv(tr, ["iteration", "elbo", "rho"], [[k, v, r] for k, (v, r) in enumerate(zip(res.trace, rhos))])
    print(f"NCVMP converged in {res.iterations} iterations, bound {res.elbo:.6f}")
    return inputs, {"posterior": post, "trace": tr}


def _svi_init(o, apl, prior):
    from .ncvmp import ncvmp_fit
    from .posterior import laplace_fit
    from .variational import GaussianVariational
    if o["init"] == "ncvmp":
        return ncvmp_fit(apl, prior).q
    if o["init"] == "laplace":
        return laplace_fit(apl, prior)
    return GaussianVariational(apl.theta_pl, 0.01 * np.eye(apl.p))


def _elbo_reference(o, apl, net, spec):
    from .modelsel import ElboReference
    from .sampler import tnt_sample
    ref = ElboReference.from_adjustment(apl)
    if o["K0"] != ref.K0:
        cfg = _sampler_cfg(o, "elbo-ref").replace(count=o["K0"])
        ref = ElboReference(apl.theta_ml, apl.log_z_ml, tnt_sample(net, apl.theta_ml, spec, cfg).stats,
                            apl.s_obs)
    return ref


def _check_match(apl, net, spec):
    if apl.meta.get("network") not in (None, net.fingerprint()):
        raise ConfigurationError("adjustment cache was built for a different network")
    if apl.meta.get("spec") not in (None, str(spec)):
        raise ConfigurationError(f"adjustment cache was built for terms {apl.meta.get('spec')}")


def cmd_fit_svi(o, out):
    from .svi import SVIConfig, svi_fit
    net, inputs = _network(o)
    spec = _spec(o)
    apl, more = _load_apl(o)
    inputs.update(more)
    _check_match(apl, net, spec)
    prior = _prior_for(spec.p, o)
    cfg = SVIConfig(mode=o["mode"], K=o["K"], K0=o["K0"], step=o["step"], tol=o["tol"] or 1e-5,
                    check_every=o["check_every"], max_iter=o["max_iters"] or 100_000,
                    ess_frac=o["ess_frac"], seed=o["seed"])
    ref = _elbo_reference(o, apl, net, spec)
    res = svi_fit(net, spec, prior, _svi_init(o, apl, prior), cfg, ref, _sampler_cfg(o, "svi"))
    post = out / "posterior.csv"
    _write_posterior(post, spec.labels, res.q,
                     {"method": f"svi-{o['mode']}", "elbo": repr(res.elbo), "spec": str(spec),
                      "iterations": res.iterations, "K": o["K"], "particles": res.particles})
    lb = out / "svi-lbar.csv"
    _write_csv(lb, ["iteration", "lbar"], [[(k + 1) * cfg.check_every, v] for k, v in enumerate(res.lbar)])
    es = out / "svi-ess.csv"
    _write_csv(es, ["iteration", "ess", "refreshed", "lhat"],
               [[t + 1, res.ess[t], int(res.refreshed[t]), res.lhat[t]] for t in range(res.iterations)])
    pa = out / "svi-particles.csv"
    _write_csv(pa, ["particle", "inserted_at"], [[k, it] for k, it in enumerate(res.inserted_at)])
    print(f"SVI ({o['mode']}) stopped after {res.iterations} iterations "
          f"({'converged' if res.converged else 'iteration cap'}), bound {res.elbo:.6f}, "
          f"particles {res.particles}")
    return inputs, {"posterior": post, "lbar": lb, "ess": es, "particles": pa}


def cmd_fit_laplace(o, out):
    from .posterior import laplace_fit
    apl, inputs = _load_apl(o)
    prior = _prior_for(apl.p, o)
    q = laplace_fit(apl, prior)
    post = out / "posterior.csv"
    _write_posterior(post, apl.labels, q, {"method": "laplace", "spec": apl.meta.get("spec", "")})
    print("Laplace mode: " + ", ".join(f"{m:.6f}" for m in q.mu))
    return inputs, {"posterior": post}


def cmd_fit_exchange(o, out):
    from .posterior import exchange_sample
    net, inputs = _network(o)
    spec = _spec(o)
    prior = _prior_for(spec.p, o)
    chain = exchange_sample(net, spec, prior, o["iters"], o["burnin"], _floats(o["sigma_eps"]),
                            _sampler_cfg(o, "exchange"), seed=o["seed"], theta0=_floats(o["theta0"]))
    f = out / "exchange.csv"
    chain.write_csv(f, spec.labels)
    print(f"exchange: {len(chain.draws)} draws, acceptance rate {chain.acceptance_rate:.4f}")
    print("means: " + ", ".join(f"{m:.6f}" for m in chain.draws.mean(axis=0)))
    return inputs, {"chain": f}


def cmd_iwlb(o, out):
    from .modelsel import ElboReference, iwlb
    from .variational import PosteriorFile
    post_path = _need(o, "posterior", "--posterior")
    if not Path(post_path).exists():
        raise UsageError(f"posterior file not found: {post_path}")
    pf = PosteriorFile.read(post_path)
    apl, inputs = _load_apl(o)
    inputs[str(post_path)] = _sha256(post_path)
    prior = _prior_for(apl.p, o)
    lik = apl if o["path"] == "I" else ElboReference.from_adjustment(apl)
    init = float(pf.meta["elbo"]) if "elbo" in pf.meta else None
    res = iwlb(pf.q, prior, lik, N=o["N"], J=o["J"], tol=o["tol"] or 1e-5, seed=o["seed"], init=init)
    label = o["label"] or pf.meta.get("method", "model")
    f = out / "iwlb.csv"
    _write_csv(f, ["label", "spec", "path", "method", "iwlb", "V", "clipped"],
               [[label, pf.meta.get("spec", "").replace(",", "+"), o["path"],
                 pf.meta.get("method", ""), res.value, res.V, res.clipped]])
    print(f"IWLB (path {o['path']}) = {res.value:.4f} at V = {res.V}")
    return inputs, {"iwlb": f}


def cmd_compare(o, out):
    from .modelsel import bayes_factors, log_bayes_factors
    files = o["inputs"]
    if not files or len(files) < 2:
        raise UsageError("--inputs needs at least two iwlb.csv files")
    labels, vals, inputs = [], [], {}
    for path in files:
        if not Path(path).exists():
            raise UsageError(f"input not found: {path}")
        inputs[str(path)] = _sha256(path)
        lines = Path(path).read_text().splitlines()
        head = lines[0].split(",")
        row = dict(zip(head, lines[1].split(",")))
        labels.append(row.get("label") or Path(path).parent.name)
        vals.append(float(row["iwlb"]))
    ref = o["reference"]
    lbf = log_bayes_factors(vals, ref)
    bf = bayes_factors(vals, ref)
    order = np.argsort(-np.asarray(vals), kind="stable")
    rank = np.empty(len(vals), dtype=int)
    rank[order] = np.arange(1, len(vals) + 1)
    f = out / "compare.csv"
    _write_csv(f, ["label", "iwlb", "log_bf", "bf", "rank"],
               [[l, v, a, b, int(r)] for l, v, a, b, r in zip(labels, vals, lbf, bf, rank)])
    w = max(len(l) for l in labels)
    print(f"{'model':<{w}s}  {'IWLB':>10s}  {'log BF':>9s}  {'BF':>11s}  rank   (reference: {labels[ref]})")
    for l, v, a, b, r in zip(labels, vals, lbf, bf, rank):
        print(f"{l:<{w}s}  {v:10.3f}  {a:9.3f}  {b:11.4g}  {r:4d}")
    return inputs, {"compare": f}


def _load_any(path):
    from .variational import PosteriorFile
    head = Path(path).read_text().lstrip().splitlines()
    first = next((l for l in head if not l.startswith("#")), "")
    if first.startswith("param,mean,sd"):
        pf = PosteriorFile.read(path)
        return pf.names, pf.q
    from .posterior import McmcChain
    return first.split(","), McmcChain.read_csv(path)


def cmd_kl_compare(o, out):
    from .posterior import marginal_kl
    a, b = _need(o, "a", "--a"), _need(o, "b", "--b")
    for p in (a, b):
        if not Path(p).exists():
            raise UsageError(f"file not found: {p}")
    names, qa = _load_any(a)
    _, qb = _load_any(b)
    kl = marginal_kl(qa, qb)
    f = out / "kl.csv"
    _write_csv(f, ["param", "kl"], [[n, k] for n, k in zip(names, kl)])
    for n, k in zip(names, kl):
        print(f"{n:>16s} {k:.6f}")
    return {a: _sha256(a), b: _sha256(b)}, {"kl": f}


def cmd_dump_changestats(o, out):
    from .network import dyads
    net, inputs = _network(o)
    spec = _spec(o)
    X = all_change_stats(net, spec)
    y = net.dyad_values()
    d = dyads(net.n)
    f = out / "changestats.csv"
    _write_csv(f, ["i", "j", "y"] + spec.labels,
               [[int(i) + 1, int(j) + 1, int(v)] + list(x) for (i, j), v, x in zip(d, y, X)])
    print(f"wrote {len(y)} dyads x {spec.p} terms")
    return inputs, {"changestats": f}


def cmd_oracle(o, out):
    from .sampler import enumerate_oracle, exact_mle
    spec = _spec(o)
    result = {"terms": str(spec)}
    inputs = {}
    if o["mle"]:
        net, inputs = _network(o)
        n = net.n
        theta = exact_mle(n, suff_stats(net, spec), spec, net.attributes)
        result["mle"] = theta.tolist()
        print("exact MLE: " + ", ".join(f"{t:.10f}" for t in theta))
        attrs = net.attributes
    else:
        n = _need(o, "nodes", "--nodes")
        attrs = None
        theta = _floats(_need(o, "theta", "--theta"))
        if theta.size == 1 and spec.p > 1:
            theta = np.full(spec.p, theta[0])
    log_z, mean, cov = enumerate_oracle(n, theta, spec, attrs)
    result.update({"nodes": n, "theta": theta.tolist(), "log_z": log_z,
                   "mean": mean.tolist(), "cov": cov.tolist()})
    print(f"log_z = {log_z:.12f}")
    print("mean = " + ", ".join(f"{m:.10f}" for m in mean))
    f = out / "oracle.json"
    f.write_text(json.dumps(result, sort_keys=True, indent=1) + "\n")
    return inputs, {"oracle": f}


def cmd_reproduce_karate(o, out):
    from .reproduce import reproduce_karate
    if o["full"]:
        raise ConfigurationError("the friends and ecoli studies need datasets that are not bundled; "
                                 "--full is not available in this build")
    report = reproduce_karate(out, seed=o["seed"], quick=o["quick"], workers=o["workers"])
    files = {k: v for k, v in report["files"].items()}
    return {}, files


COMMANDS = {
    "simulate": cmd_simulate, "mple": cmd_mple, "mcmle": cmd_mcmle, "adjust": cmd_adjust,
    "fit-ncvmp": cmd_fit_ncvmp, "fit-svi": cmd_fit_svi, "fit-laplace": cmd_fit_laplace,
    "fit-exchange": cmd_fit_exchange, "iwlb": cmd_iwlb, "compare": cmd_compare,
    "kl-compare": cmd_kl_compare, "dump-changestats": cmd_dump_changestats, "oracle": cmd_oracle,
    "reproduce-karate": cmd_reproduce_karate,
}


def _manifest(o, inputs, files, seconds, out):
    record = {
        "subcommand": o["command"],
        "version": __version__,
        "data_format": DATA_FORMAT_VERSION,
        "config": {k: v for k, v in o.items() if k != "command"},
        "seed": o["seed"],
        "inputs": inputs,
        "outputs": {name: {"path": str(p), "sha256": _sha256(p)} for name, p in files.items()},
        "wall_clock_seconds": round(seconds, 3),
    }
    path = out / f"{o['command']}.manifest.json"
    path.write_text(json.dumps(record, sort_keys=True, indent=1, default=str) + "\n")
    return path


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        o = resolve(ns)
        logging.basicConfig(level=logging.INFO if o["verbose"] else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        out = Path(o["out"])
        out.mkdir(parents=True, exist_ok=True)
        start = time.perf_counter()
        inputs, files = COMMANDS[o["command"]](o, out)
        _manifest(o, inputs, files, time.perf_counter() - start, out)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ergmvi: error: {exc}", file=sys.stderr)
        return 2
    except ErgmError as exc:
        print(f"ergmvi: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
