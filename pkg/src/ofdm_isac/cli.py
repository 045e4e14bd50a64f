"""Reproducible experiment runner.

Subcommands: verify | dr-sweep | profiles | pcs | tradeoff | codebook.
Every command reads an optional JSON config, takes an explicit master seed
(never the wall clock), and writes CSV/JSON artifacts whose bytes depend only
on (config, seed). CSV files start with '#' provenance lines naming units,
provenance (closed-form vs empirical), trials, and seeds.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .air import AirConfig
from .channel import FrameDims, Scene, Target
from .constellation import Family, make_shaped, make_uniform, save_codebook
from .detection import CfarConfig, default_tradeoff_scene, detection_probability
from .filtering import MF, RF, FilterKind, wiener
from .metrics import (
    closed_form_metrics,
    empirical_dd_profile,
    expected_dd_power,
)
from .pcs import PcsConfig, SolverError, c0_bounds, mba_solve, tradeoff_sweep
from .verification import run_verification

_MISSING = object()


class ConfigError(Exception):
    """Malformed or missing configuration field; message carries the field path."""


def _cfg_get(cfg: dict, path: str, default=_MISSING, cast=None):
    node = cfg
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            if default is _MISSING:
                raise ConfigError(f"missing config field '{path}'")
            return default
        node = node[part]
    if cast is not None:
        try:
            return cast(node)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad config field '{path}': {exc}") from exc
    return node


def _load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data


def _dims(cfg: dict, default=(64, 32)) -> FrameDims:
    return FrameDims(
        _cfg_get(cfg, "dims.N", default[0], int),
        _cfg_get(cfg, "dims.M", default[1], int),
    )


def _filter_kind(name: str, snr_in: float) -> FilterKind:
    name = name.lower()
    if name == "mf":
        return MF
    if name == "rf":
        return RF
    if name == "wf":
        return wiener(snr_in)
    raise ConfigError(f"bad config field 'filter': unknown kind {name!r}")


def _master_seed(cfg: dict, args) -> int:
    if args.seed is not None:
        return args.seed
    return _cfg_get(cfg, "master_seed", 0, int)


def _derived_seeds(master: int, count: int = 8) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(master).generate_state(count)]


def _write_table(path_base: Path, fmt: str, comments: list[str], columns: list[str], rows) -> Path:
    if fmt == "csv":
        path = path_base.with_suffix(".csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            for line in comments:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(columns)
            writer.writerows(rows)
    else:
        path = path_base.with_suffix(".json")
        payload = {"meta": comments, "columns": columns, "rows": [list(r) for r in rows]}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    return path


def _db(x: float) -> float:
    return 10.0 * math.log10(x) if x > 0 else -math.inf


# ---------------------------------------------------------------- commands


def _cmd_verify(args) -> int:
    cfg = _load_config(args.config)
    checks = run_verification(
        dims=_dims(cfg),
        order=_cfg_get(cfg, "order", 64, int),
        snr_in_db=_cfg_get(cfg, "snr_in_db", 4.0, float),
        trials=_cfg_get(cfg, "trials", 10_000, int),
        seed=_master_seed(cfg, args),
        threads=args.threads,
    )
    for check in checks:
        status = "PASS" if check.passed else "FAIL"
        print(f"[{status}] {check.name}: residual={check.residual:.3e} tol={check.tolerance:.1e}")
    report = {"all_pass": all(c.passed for c in checks), "checks": [c.as_dict() for c in checks]}
    path = args.out / "verify_report.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    print(f"report written to {path}")
    return 0 if report["all_pass"] else 1


def _cmd_dr_sweep(args) -> int:
    cfg = _load_config(args.config)
    family = Family(_cfg_get(cfg, "family", "qam", str))
    order = _cfg_get(cfg, "order", 64, int)
    dims = _dims(cfg)
    gain_var = _cfg_get(cfg, "gain_var", 1.0, float)
    start = _cfg_get(cfg, "snr_db_start", -10.0, float)
    stop = _cfg_get(cfg, "snr_db_stop", 30.0, float)
    step = _cfg_get(cfg, "snr_db_step", 0.25, float)
    if step <= 0:
        raise ConfigError("bad config field 'snr_db_step': must be > 0")
    c = make_uniform(family, order)
    rows = []
    db = start
    while db <= stop + 1e-9:
        snr = 10.0 ** (db / 10.0)
        noise_var = gain_var / snr
        drs = [
            closed_form_metrics(c, f, dims, gain_var, noise_var).dr
            for f in (MF, RF, wiener(snr))
        ]
        rows.append((round(db, 10), snr, *drs, *(_db(v) for v in drs)))
        db += step
    path = _write_table(
        args.out / "dr_sweep",
        args.format,
        [
            "units: snr_in_db and dr_*_db in dB; snr_in_linear and dr_* linear power ratios",
            "provenance: closed-form",
            f"constellation: uniform {order}-{family.value}",
            f"dims: N={dims.n_subcarriers} M={dims.n_symbols}",
        ],
        ["snr_in_db", "snr_in_linear", "dr_mf", "dr_rf", "dr_wf", "dr_mf_db", "dr_rf_db", "dr_wf_db"],
        rows,
    )
    print(f"wrote {path}")
    return 0


def _profile_rows(expected: np.ndarray, empirical: np.ndarray):
    e_peak = expected.max()
    m_peak = empirical.max()
    return [
        (
            k,
            _db(expected[k] / e_peak),
            _db(empirical[k] / m_peak),
            expected[k],
            empirical[k],
        )
        for k in range(len(expected))
    ]


def _cmd_profiles(args) -> int:
    cfg = _load_config(args.config)
    family = Family(_cfg_get(cfg, "family", "qam", str))
    order = _cfg_get(cfg, "order", 64, int)
    snr_db = _cfg_get(cfg, "snr_in_db", 4.0, float)
    gain_var = _cfg_get(cfg, "gain_var", 1.0, float)
    trials = _cfg_get(cfg, "trials", 2000, int)
    kernel = _cfg_get(cfg, "kernel", "dirichlet", str)
    snr = 10.0 ** (snr_db / 10.0)
    noise_var = gain_var / snr
    f = _filter_kind(_cfg_get(cfg, "filter", "mf", str), snr)
    delay_bin = _cfg_get(cfg, "target.delay_bin", 0.0, float)
    doppler_bin = _cfg_get(cfg, "target.doppler_bin", 0.0, float)
    dims_list = _cfg_get(cfg, "dims_list", [[16, 16], [64, 32]])
    c = make_uniform(family, order)
    seed = _derived_seeds(_master_seed(cfg, args))[0]
    for entry in dims_list:
        dims = FrameDims(int(entry[0]), int(entry[1]))
        scene = Scene((Target(gain_var, delay_bin, doppler_bin),), noise_var)
        mean_map = empirical_dd_profile(c, f, dims, scene, trials, seed, threads=args.threads)
        tk = int(round(delay_bin)) % dims.n_subcarriers
        tp = int(round(doppler_bin)) % dims.n_symbols
        comments = [
            "units: *_norm_db in dB below the slice peak; *_power linear",
            f"provenance: expected closed-form ({kernel} kernel); empirical trials={trials} seed={seed}",
            f"constellation: uniform {order}-{family.value}; filter={f.kind.value}; snr_in_db={snr_db}",
            f"dims: N={dims.n_subcarriers} M={dims.n_symbols}; target=({delay_bin},{doppler_bin})",
        ]
        ks = np.arange(dims.n_subcarriers)
        expected = expected_dd_power(
            ks, np.full(ks.shape, float(tp)), (delay_bin, doppler_bin), c, f, dims,
            gain_var, noise_var, kernel,
        )
        path = _write_table(
            args.out / f"profile_delay_{dims.n_subcarriers}x{dims.n_symbols}",
            args.format,
            comments,
            ["delay_bin", "expected_norm_db", "empirical_norm_db", "expected_power", "empirical_power"],
            _profile_rows(expected, mean_map[:, tp]),
        )
        print(f"wrote {path}")
        ps = np.arange(dims.n_symbols)
        expected = expected_dd_power(
            np.full(ps.shape, float(tk)), ps, (delay_bin, doppler_bin), c, f, dims,
            gain_var, noise_var, kernel,
        )
        path = _write_table(
            args.out / f"profile_doppler_{dims.n_subcarriers}x{dims.n_symbols}",
            args.format,
            comments,
            ["doppler_bin", "expected_norm_db", "empirical_norm_db", "expected_power", "empirical_power"],
            _profile_rows(expected, mean_map[tk, :]),
        )
        print(f"wrote {path}")
    return 0


def _pcs_config(cfg: dict, args) -> PcsConfig:
    family = Family(_cfg_get(cfg, "family", "qam", str))
    order = _cfg_get(cfg, "order", 64, int)
    dims = _dims(cfg)
    gain_var = _cfg_get(cfg, "gain_var", 1.0, float)
    snr_db = _cfg_get(cfg, "snr_in_db", 4.0, float)
    snr = 10.0 ** (snr_db / 10.0)
    noise_var = gain_var / snr
    filt = _filter_kind(_cfg_get(cfg, "filter", "wf", str), snr)
    seeds = _derived_seeds(_master_seed(cfg, args))
    comm = AirConfig(
        comm_noise_var=_cfg_get(cfg, "comm.noise_var", 0.1, float),
        channel_gain=complex(
            _cfg_get(cfg, "comm.channel_gain_re", 1.0, float),
            _cfg_get(cfg, "comm.channel_gain_im", 0.0, float),
        ),
        mc_samples=_cfg_get(cfg, "comm.mc_samples", 200_000, int),
        seed=seeds[2],
    )
    c_lo, c_hi = c0_bounds(order, filt, dims, gain_var, noise_var, family)
    c0 = _cfg_get(cfg, "c0", None, float)
    if c0 is None:
        fraction = _cfg_get(cfg, "c0_fraction", 1.0, float)
        c0 = c_lo + fraction * (c_hi - c_lo)
    return PcsConfig(
        family=family,
        order=order,
        filt=filt,
        dims=dims,
        gain_var=gain_var,
        noise_var=noise_var,
        comm=comm,
        c0=c0,
        tol=_cfg_get(cfg, "tol", 1e-5, float),
        max_outer_iters=_cfg_get(cfg, "max_outer_iters", 500, int),
        bank_samples_per_point=_cfg_get(cfg, "bank_samples_per_point", 200, int),
        bank_seed=seeds[1],
    )


def _trace_comments(cfg: PcsConfig) -> list[str]:
    return [
        "units: objective_nats in nats; mse linear power; power linear",
        f"provenance: solver trace; bank_samples_per_point={cfg.bank_samples_per_point} "
        f"bank_seed={cfg.bank_seed} air_seed={cfg.comm.seed}",
        f"problem: {cfg.order}-{Family(cfg.family).value} filter={cfg.filt.kind.value} "
        f"snr_in={cfg.gain_var / cfg.noise_var:g} c0={cfg.c0:g}",
    ]


def _cmd_pcs(args) -> int:
    cfg = _load_config(args.config)
    pcfg = _pcs_config(cfg, args)
    try:
        sol = mba_solve(pcfg)
    except SolverError as exc:
        path = args.out / "pcs_error.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"error": str(exc), "diagnostics": exc.diagnostics}, fh, indent=2)
        print(f"solver failed: {exc} (diagnostics in {path})", file=sys.stderr)
        return 1
    shaped = make_shaped(pcfg.family, pcfg.order, sol.probs)
    codebook_path = args.out / "codebook.json"
    save_codebook(
        codebook_path,
        shaped,
        snr_in=pcfg.gain_var / pcfg.noise_var,
        filter_kind=pcfg.filt.kind.value,
        c0=sol.c0_effective,
        provenance=(
            f"mba_solve iters={sol.outer_iters} converged={sol.converged} "
            f"air_bits={sol.air_bits:.6f} sensing_mse={sol.sensing_mse:.6g} "
            f"bank_seed={pcfg.bank_seed} air_seed={pcfg.comm.seed}"
        ),
    )
    trace_path = _write_table(
        args.out / "pcs_trace",
        args.format,
        _trace_comments(pcfg),
        ["iter", "objective_nats", "mse", "power", "lambda1", "lambda2"],
        sol.trace_rows,
    )
    print(
        f"solved: air={sol.air_bits:.4f} bits, mse={sol.sensing_mse:.6g} "
        f"(budget {sol.c0_effective:.6g}), iters={sol.outer_iters}"
    )
    print(f"wrote {codebook_path} and {trace_path}")
    return 0


def _cmd_tradeoff(args) -> int:
    cfg = _load_config(args.config)
    pcfg = _pcs_config(cfg, args)
    c_lo, c_hi = c0_bounds(
        pcfg.order, pcfg.filt, pcfg.dims, pcfg.gain_var, pcfg.noise_var, pcfg.family
    )
    grid = _cfg_get(cfg, "c0_grid", None)
    if grid is None:
        n_points = _cfg_get(cfg, "n_grid", 8, int)
        grid = np.linspace(c_lo, c_hi, n_points).tolist()
    cfar = CfarConfig(
        guard_cells=_cfg_get(cfg, "detection.cfar.guard", 2, int),
        train_cells=_cfg_get(cfg, "detection.cfar.train", 16, int),
        pfa=_cfg_get(cfg, "detection.cfar.pfa", 1e-4, float),
    )
    det_trials = _cfg_get(cfg, "detection.trials", 500, int)
    scene = default_tradeoff_scene(
        pcfg.noise_var,
        weak_delay_bin=_cfg_get(cfg, "detection.weak_delay_bin", 5, int),
        weak_rel_power_db=_cfg_get(cfg, "detection.weak_rel_power_db", -15.0, float),
    )
    det_seed = _derived_seeds(_master_seed(cfg, args))[3]
    points = tradeoff_sweep(pcfg, grid)
    rows = []
    for i, pt in enumerate(points):
        if pt.error is not None:
            rows.append((pt.c0, math.nan, math.nan, math.nan, pt.error))
            continue
        shaped = make_shaped(pcfg.family, pcfg.order, pt.probs)
        pd = detection_probability(
            pcfg.dims, scene, shaped, pcfg.filt, cfar, det_trials, det_seed, threads=args.threads
        )
        rows.append((pt.c0, pt.air_bits, pt.sensing_mse, pd, ""))
        save_codebook(
            args.out / f"codebook_{i:02d}.json",
            shaped,
            snr_in=pcfg.gain_var / pcfg.noise_var,
            filter_kind=pcfg.filt.kind.value,
            c0=pt.c0,
            provenance=f"tradeoff point {i}: air_bits={pt.air_bits:.6f} pd={pd:.4f}",
        )
    path = _write_table(
        args.out / "tradeoff",
        args.format,
        [
            "units: c0 and sensing_mse linear power; air_bits bits/symbol; pd probability",
            f"provenance: empirical pd trials={det_trials} seed={det_seed}; "
            f"cfar guard={cfar.guard_cells} train={cfar.train_cells} pfa={cfar.pfa:g}",
            f"problem: {pcfg.order}-{Family(pcfg.family).value} filter={pcfg.filt.kind.value} "
            f"snr_in={pcfg.gain_var / pcfg.noise_var:g}",
        ],
        ["c0", "air_bits", "sensing_mse", "pd", "error"],
        rows,
    )
    print(f"wrote {path}")
    return 0


def _cmd_codebook(args) -> int:
    cfg = _load_config(args.config)
    family = Family(_cfg_get(cfg, "family", "qam", str))
    order = _cfg_get(cfg, "order", 64, int)
    probs_file = _cfg_get(cfg, "probs_file", None)
    if probs_file is not None:
        with open(probs_file, encoding="utf-8") as fh:
            probs = json.load(fh)
        c = make_shaped(family, order, probs)
        provenance = f"probs from {probs_file}"
    else:
        c = make_uniform(family, order)
        provenance = "uniform"
    path = args.out / "codebook.json"
    save_codebook(path, c, provenance=provenance)
    print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------- parser


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ofdm-isac",
        description="OFDM ISAC sensing-metric and constellation-shaping experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    handlers = {
        "verify": (_cmd_verify, "run the identity and invariant self-checks"),
        "dr-sweep": (_cmd_dr_sweep, "closed-form dynamic range vs input SNR sweep"),
        "profiles": (_cmd_profiles, "expected and empirical delay/Doppler profiles"),
        "pcs": (_cmd_pcs, "solve one shaping problem and export the codebook"),
        "tradeoff": (_cmd_tradeoff, "budget sweep with detection probability per point"),
        "codebook": (_cmd_codebook, "export a codebook JSON for a constellation"),
    }
    for name, (func, help_text) in handlers.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", type=Path, default=None, help="JSON config file")
        sp.add_argument("--seed", type=int, default=None, help="master seed override")
        sp.add_argument("--out", type=Path, default=Path("."), help="output directory")
        sp.add_argument("--threads", type=int, default=1, help="worker thread cap")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
