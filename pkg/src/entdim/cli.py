"""Command-line entry point: ``entdim simulate | certify | sweep | thresholds``.

Exit codes: 0 success, 2 configuration error, 3 data error.  The number of
worker threads comes from ``ENTDIM_WORKERS`` (default 1).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .certifier import CertificationResult, FidelityCertifier, certify_exact, _plain
from .config import ConfigError, ExperimentConfig
from .reference import exact_fidelity, make_reference
from .sampling import ShotFormatError, ShotSet, _workers, sample_momenta, sample_positions
from .stats import SWEEP_AXES, SweepPoint, SweepResult

log = logging.getLogger("entdim")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3

_AXIS_KEYS = {"U_over_J": "hubbard.U", "r": "noise.r", "sigma_V": "noise.sigma_V",
              "L": "lattice.L", "N_s": "sampler.n_mom", "beta_J": "noise.beta_J",
              "lambda1": "reference.lambda1"}


class DataError(ValueError):
    pass


def _seeds(cfg: ExperimentConfig):
    return [cfg.seed, 0], [cfg.seed, 1]


def simulate(cfg: ExperimentConfig):
    """Draw position and momentum shots; returns ``(positions, momenta, metadata)``."""
    rho = cfg.state()
    env = cfg.envelope()
    s_pos, s_mom = _seeds(cfg)
    smp = cfg["sampler"]
    pos = sample_positions(rho, smp["n_pos"], seed=s_pos)
    mom = sample_momenta(rho, env, smp["n_mom"], delta_c=smp["delta_c"], seed=s_mom)
    meta = {"config_hash": cfg.hash(), "config": cfg.to_dict(), "sigma_k": env.sigma_k,
            "seeds": {"positions": s_pos, "momenta": s_mom},
            "n_pos": smp["n_pos"], "n_mom": smp["n_mom"], "delta_c": mom.meta.get("delta_c")}
    try:
        ref = cfg.reference()
        meta["reference"] = {"kind": ref.kind.value, "lambda1": ref.lambda1,
                             "schmidt_spectrum": ref.spectrum}
        meta["exact_fidelity"] = exact_fidelity(rho, ref)
        meta["exact_bound"] = certify_exact(rho, ref).bound
    except ValueError as exc:
        meta["reference_error"] = str(exc)
    return pos, mom, _plain(meta)


def certify(cfg: ExperimentConfig, pos: ShotSet, mom: ShotSet, lambda1=None):
    b = cfg.basis()
    r = cfg["reference"]
    est = FidelityCertifier(
        sites=b.L, atoms=b.N, species=b.n_species, statistics=b.statistics.value,
        reference=r["kind"], lambda1=r["lambda1"] if lambda1 is None else lambda1,
        lambda_grid=cfg.lambda_grid(), sigma_k=cfg.envelope().sigma_k,
        n_bootstrap=int(cfg["bootstrap"]["replicas"]), bootstrap_seed=cfg["bootstrap"]["seed"],
        solver=cfg["solver"]["method"], dense_limit=int(cfg["solver"]["dense_limit"]))
    try:
        res = est.fit(pos, mom).result_
    except ValueError as exc:
        if isinstance(exc, ShotFormatError):
            raise
        raise DataError(str(exc)) from exc
    res.meta["config_hash"] = cfg.hash()
    res.seeds.update(config=cfg.seed)
    return res


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config)
    over = {}
    for item in args.set or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        try:
            over[key] = json.loads(raw)
        except json.JSONDecodeError:
            over[key] = raw
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    return cfg.replace(**over) if over else cfg


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out or cfg["output"]["dir"])
    pos, mom, meta = simulate(cfg)
    out.mkdir(parents=True, exist_ok=True)
    pos.to_jsonl(out / "positions.jsonl")
    mom.to_jsonl(out / "momenta.jsonl")
    _write_json(out / "metadata.json", meta)
    print(f"wrote {len(pos)} position and {len(mom)} momentum shots to {out}")
    if "exact_fidelity" in meta:
        print(f"exact F = {meta['exact_fidelity']:.6f}, exact-input bound = "
              f"{meta['exact_bound']:.6f}")
    return EXIT_OK


def _read_shots(path, tag) -> ShotSet:
    try:
        ss = ShotSet.from_jsonl(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    if ss.basis != tag:
        raise ShotFormatError(f"{path} holds {ss.basis} shots, expected {tag}")
    return ss


def cmd_certify(args) -> int:
    cfg = _load_config(args)
    pos = _read_shots(args.positions, "position")
    mom = _read_shots(args.momenta, "momentum")
    meta_path = Path(args.metadata) if args.metadata else Path(args.momenta).parent / "metadata.json"
    if meta_path.exists():
        try:
            meta = json.loads(meta_path.read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"bad metadata file {meta_path}: {exc}") from exc
        sk = meta.get("sigma_k")
        if sk is not None and not np.isclose(sk, cfg.envelope().sigma_k, rtol=1e-9):
            log.warning("envelope mismatch: shots were generated with sigma_k=%s but the "
                        "config uses %s", sk, cfg.envelope().sigma_k)
        for tag, ss in (("positions", pos), ("momenta", mom)):
            seed = meta.get("seeds", {}).get(tag)
            if seed is not None:
                ss.meta["seed"] = seed
    res = certify(cfg, pos, mom)
    print(res.ladder_table())
    print(f"F~ = {res.bound:.6f} +/- {res.se:.6f}  (population {res.population:.6f}, "
          f"coherence {res.coherence:.6f})")
    print(f"certified dimension: {res.dimension} (1 sigma: {res.dimension_1sigma}, "
          f"3 sigma: {res.dimension_3sigma})")
    if args.out:
        _write_json(Path(args.out), res.to_dict())
    return EXIT_OK


def _sweep_point(cfg: ExperimentConfig, axis: str, value, index: int, exact: bool):
    if axis == "lambda1":
        # post-processing only: every point reuses the same shots
        pcfg = cfg
    else:
        val = int(value) if axis in ("L", "N_s") else float(value)
        pcfg = cfg.replace(**{_AXIS_KEYS[axis]: val, "seed": cfg.seed + index})
    lam = float(value) if axis == "lambda1" else None
    rho = pcfg.state()
    ref = pcfg.reference(lam) if lam is not None else pcfg.reference()
    F = exact_fidelity(rho, ref)
    ex = certify_exact(rho, ref)
    if exact:
        res = ex
        res.meta["config_hash"] = pcfg.hash()
    else:
        pos, mom, _ = simulate(pcfg)
        res = certify(pcfg, pos, mom, lambda1=lam)
        res.fidelity = F
    pt = SweepPoint(float(value), F, res.bound, res.se, res.dimension, res.dimension_1sigma,
                    res.dimension_3sigma, ex.bound)
    return pt, res


def run_sweep(cfg: ExperimentConfig, axis: str, values, exact: bool = False):
    if axis not in SWEEP_AXES:
        raise ConfigError(f"invalid sweep axis {axis!r}; choose from {', '.join(SWEEP_AXES)}")
    if axis == "lambda1" and cfg["reference"]["kind"] not in ("lambda_family", "lambda"):
        raise ConfigError("a lambda1 sweep needs reference.kind = lambda_family")
    values = list(values)
    jobs = list(enumerate(values))
    w = _workers()
    if w > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(w) as pool:
            out = list(pool.map(lambda j: _sweep_point(cfg, axis, j[1], j[0], exact), jobs))
    else:
        out = [_sweep_point(cfg, axis, v, i, exact) for i, v in jobs]
    try:
        sweep = SweepResult(axis, [p for p, _ in out],
                            {"config_hash": cfg.hash(), "seed": cfg.seed, "exact": exact})
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return sweep, [r for _, r in out]


def _parse_values(text: str):
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError("range values take start:stop:num")
        return np.linspace(float(parts[0]), float(parts[1]), int(parts[2]))
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse sweep values {text!r}") from exc


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    values = _parse_values(args.values)
    sweep, results = run_sweep(cfg, args.axis, values, exact=args.exact)
    out = Path(args.out or cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    sweep.to_csv(out / f"sweep_{args.axis}.csv")
    for i, res in enumerate(results):
        _write_json(out / f"point_{i:03d}.json", res.to_dict())
    for p in sweep.points:
        print(f"{args.axis}={p.value:g}  F={p.fidelity:.5f}  F~={p.bound:.5f} +/- {p.se:.5f}  "
              f"D={p.dimension}")
    return EXIT_OK


def cmd_thresholds(args) -> int:
    if args.config:
        cfg = _load_config(args)
        ref = cfg.reference(args.lambda1)
    else:
        from .fock import make_basis
        try:
            basis = make_basis(args.sites, args.atoms, args.species, args.statistics)
            ref = make_reference(args.kind, basis, args.lambda1)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    lad = ref.ladder
    print(f"reference: {ref.kind.value}  Schmidt rank {ref.schmidt_rank}")
    print(f"{'k':>3}  {'B_k':>10}  exact")
    for k in range(1, len(lad) + 1):
        ex = str(lad.exact[k - 1]) if lad.exact else "-"
        print(f"{k:>3}  {lad[k]:10.6f}  {ex}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="entdim", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp, required=True):
        sp.add_argument("config", nargs=None if required else "?", help="JSON config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config value, e.g. hubbard.U=-15")
        sp.add_argument("--seed", type=int)

    s = sub.add_parser("simulate", help="generate position and momentum shots")
    with_config(s)
    s.add_argument("--out", help="output directory")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("certify", help="certify from shot files")
    with_config(c)
    c.add_argument("--positions", required=True)
    c.add_argument("--momenta", required=True)
    c.add_argument("--metadata", help="metadata JSON written by simulate")
    c.add_argument("--out", help="write the result JSON here")
    c.set_defaults(func=cmd_certify)

    w = sub.add_parser("sweep", help="run a parameter sweep")
    with_config(w)
    w.add_argument("--axis", required=True)
    w.add_argument("--values", required=True, help="comma list or start:stop:num")
    w.add_argument("--exact", action="store_true", help="exact inputs, no sampling")
    w.add_argument("--out", help="output directory")
    w.set_defaults(func=cmd_sweep)

    t = sub.add_parser("thresholds", help="print the threshold ladder of a reference")
    with_config(t, required=False)
    t.add_argument("--kind", default="mes")
    t.add_argument("--sites", type=int, default=6)
    t.add_argument("--atoms", type=int, default=1)
    t.add_argument("--species", type=int, default=2)
    t.add_argument("--statistics", default="distinguishable")
    t.add_argument("--lambda1", type=float)
    t.set_defaults(func=cmd_thresholds)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ShotFormatError, DataError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
