"""Command line interface.

Wires CSV ingestion, configuration, chain execution, forecasting, and
report emission into six subcommands: simulate, fit, predict, backtest,
compare, evalcorr.  Exit codes: 0 success, 1 usage or configuration
problem, 2 data problem, 3 numerical failure.

All output files of a command are byte-reproducible under a fixed seed;
wall-clock metadata is isolated in run_meta.json.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import evaluate, predict
from .errors import ConfigError, DataError, NumericalError, OdcfmsvError
from .gibbs import ChainDraws, McmcConfig, run_chain, summarize
from .model import (
    FactorDataset,
    ModelVariant,
    PriorConfig,
    sigma_eps_path,
    sigma_y_path,
)
from .presets import PRESETS, simulate_preset

__all__ = ["RunConfig", "ingest_csv", "main"]


# -- data ingestion ----------------------------------------------------------


@dataclass(frozen=True)
class IngestedCsv:
    """A rectangular numeric CSV: values plus the header names."""

    values: np.ndarray
    names: list[str]
    path: str


def ingest_csv(path, rescale: bool = False) -> IngestedCsv:
    """Read a headered rectangular CSV into a T x n float matrix.

    ``rescale`` multiplies every value by 0.01 (percent units to plain
    returns).  Malformed input raises DataError with the file line and
    column of the first offence; the header is line 1.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file does not exist")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        names = [h.strip() for h in header]
        if not any(names):
            raise DataError(f"{path}: empty header row (line 1)")
        n = len(names)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != n:
                raise DataError(
                    f"{path}: ragged row at line {lineno}: "
                    f"expected {n} fields, found {len(row)}"
                )
            vals = np.empty(n)
            for c, cell in enumerate(row):
                try:
                    vals[c] = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric cell at line {lineno}, "
                        f"column {c + 1} ({names[c]}): {cell!r}"
                    ) from None
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows after the header")
    values = np.vstack(rows)
    if rescale:
        values = values * 0.01
    return IngestedCsv(values=values, names=names, path=str(path))


# -- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Everything one command invocation needs.

    Built by merging the config file (when given) with command line
    flags; flags win.  Referenced input files must exist and a backtest
    needs at least one forecast period.
    """

    command: str
    returns_csv: str | None = None
    factors_csv: str | None = None
    checkpoint: str | None = None
    truth: str | None = None
    variant: str = "odcfmsv"
    models: tuple[str, ...] = ()
    priors: PriorConfig = dataclasses.field(default_factory=PriorConfig)
    burn_in: int = 10000
    kept: int = 10000
    thin: int = 1
    start: int | None = None
    periods: int = 1
    weights: str = "equal"
    out_dir: str = "odcfmsv_out"
    seed: int | None = None
    rescale_percent: bool = False
    threads: int = 1
    preset: str = "paper-3.1"
    n_obs: int | None = None
    radius: int = 6
    reps: int = 10

    def __post_init__(self):
        for attr in ("returns_csv", "factors_csv", "checkpoint", "truth"):
            p = getattr(self, attr)
            if p is not None and not Path(p).exists():
                raise DataError(f"{attr.replace('_csv', '')} file not found: {p}")
        if self.command == "backtest" and self.periods < 1:
            raise ConfigError("backtest needs at least one forecast period")
        if self.threads < 1:
            raise ConfigError("--threads must be positive")

    def mcmc(self, variant: str | None = None) -> McmcConfig:
        return McmcConfig(
            burn_in=self.burn_in,
            kept=self.kept,
            thin=self.thin,
            seed=self.seed,
            variant=variant if variant is not None else self.variant,
        )


_MCMC_KEYS = ("burn_in", "kept", "thin")
_TOP_KEYS = (
    "returns", "factors", "checkpoint", "truth", "variant", "models",
    "start", "periods", "weights", "out", "seed", "rescale_percent",
    "threads", "preset", "n_obs", "radius", "reps",
)


def _load_config_file(path) -> dict:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise DataError(f"config file not found: {path}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"config file {path} is not valid: {e}") from None
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a mapping at top level")
    unknown = set(raw) - set(_TOP_KEYS) - {"mcmc", "priors"}
    if unknown:
        raise ConfigError(f"config file {path}: unknown keys {sorted(unknown)}")
    return raw


def _build_priors(overrides: dict | None) -> PriorConfig:
    if not overrides:
        return PriorConfig()
    valid = {f.name for f in dataclasses.fields(PriorConfig)}
    unknown = set(overrides) - valid
    if unknown:
        raise ConfigError(f"unknown prior settings {sorted(unknown)}")
    if "d_bounds" in overrides:
        overrides = dict(overrides)
        overrides["d_bounds"] = tuple(overrides["d_bounds"])
    try:
        return PriorConfig(**overrides)
    except ValueError as e:
        raise ConfigError(f"invalid prior settings: {e}") from None


def _merge(args: argparse.Namespace) -> RunConfig:
    filecfg = _load_config_file(args.config) if args.config else {}
    mcmc_file = filecfg.get("mcmc") or {}

    def pick(flag_value, file_key, default, section=None):
        if flag_value is not None:
            return flag_value
        src = mcmc_file if section == "mcmc" else filecfg
        v = src.get(file_key)
        return default if v is None else v

    models = pick(getattr(args, "models", None), "models", None)
    if isinstance(models, str):
        models = tuple(m.strip() for m in models.split(",") if m.strip())
    elif isinstance(models, (list, tuple)):
        models = tuple(models)
    else:
        models = ()
    for m in models:
        ModelVariant.parse(m)  # raises on an unknown name

    kwargs = dict(
        command=args.command,
        returns_csv=pick(getattr(args, "returns", None), "returns", None),
        factors_csv=pick(getattr(args, "factors", None), "factors", None),
        checkpoint=pick(getattr(args, "checkpoint", None), "checkpoint", None),
        truth=pick(getattr(args, "truth", None), "truth", None),
        variant=ModelVariant.parse(
            pick(args.variant, "variant", "odcfmsv")
        ).value,
        models=models,
        priors=_build_priors(filecfg.get("priors")),
        burn_in=int(pick(args.burn_in, "burn_in", 10000, "mcmc")),
        kept=int(pick(args.kept, "kept", 10000, "mcmc")),
        thin=int(pick(args.thin, "thin", 1, "mcmc")),
        start=pick(getattr(args, "start", None), "start", None),
        periods=int(pick(getattr(args, "periods", None), "periods", 1)),
        weights=pick(args.weights, "weights", "equal"),
        out_dir=pick(args.out, "out", "odcfmsv_out"),
        seed=pick(args.seed, "seed", None),
        rescale_percent=bool(
            pick(args.rescale_percent or None, "rescale_percent", False)
        ),
        threads=int(pick(args.threads, "threads", 1)),
        preset=pick(getattr(args, "preset", None), "preset", "paper-3.1"),
        n_obs=pick(getattr(args, "n_obs", None), "n_obs", None),
        radius=int(pick(getattr(args, "radius", None), "radius", 6)),
        reps=int(pick(getattr(args, "reps", None), "reps", 10)),
    )
    if kwargs["seed"] is not None:
        kwargs["seed"] = int(kwargs["seed"])
    if kwargs["start"] is not None:
        kwargs["start"] = int(kwargs["start"])
    if kwargs["n_obs"] is not None:
        kwargs["n_obs"] = int(kwargs["n_obs"])
    return RunConfig(**kwargs)


# -- output helpers ----------------------------------------------------------


def _fmt(x) -> str:
    """6 significant digits; empty string for missing values."""
    if x is None:
        return ""
    if isinstance(x, float) and np.isnan(x):
        return "nan"
    return f"{x:.6g}"


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (int, float)) or v is None
                        else v for v in row])


def _write_meta(out: Path, cfg: RunConfig, started: float, extra=None) -> None:
    # the only file carrying wall-clock state, so everything else is
    # byte-reproducible under a fixed seed
    meta = {
        "command": cfg.command,
        "seed": cfg.seed,
        "started_unix": started,
        "elapsed_s": time.time() - started,
    }
    if extra:
        meta.update(extra)
    with open(out / "run_meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_weights(cfg: RunConfig, p: int) -> np.ndarray:
    """Weight vector from the configured source: 'equal' or a CSV path."""
    if cfg.weights == "equal":
        return np.full(p, 1.0 / p)
    w = ingest_csv(cfg.weights).values
    w = w.reshape(-1)
    if w.shape[0] != p:
        raise DataError(
            f"weights file {cfg.weights} has {w.shape[0]} entries, expected {p}"
        )
    return w


def _load_dataset(cfg: RunConfig) -> tuple[FactorDataset, list[str], list[str]]:
    if cfg.returns_csv is None or cfg.factors_csv is None:
        raise ConfigError(f"{cfg.command} needs --returns and --factors")
    ret = ingest_csv(cfg.returns_csv, cfg.rescale_percent)
    fac = ingest_csv(cfg.factors_csv, cfg.rescale_percent)
    print(f"loaded {ret.path}: {ret.values.shape[0]} rows, "
          f"columns {','.join(ret.names)}")
    print(f"loaded {fac.path}: {fac.values.shape[0]} rows, "
          f"columns {','.join(fac.names)}")
    try:
        data = FactorDataset(ret.values, fac.values)
    except ValueError as e:
        raise DataError(str(e)) from None
    return data, ret.names, fac.names


def _load_truth(cfg: RunConfig):
    if cfg.truth is None:
        return None, None
    with open(cfg.truth) as fh:
        raw = json.load(fh)
    truth = {
        key: np.asarray(val) if isinstance(val, list) else val
        for key, val in raw.items()
        if key in {"B", "omega", "mu", "phi", "sigma_eta_sq", "A", "d", "k"}
    }
    paths = None
    ref = raw.get("paths_file")
    if ref:
        candidate = Path(cfg.truth).parent / ref
        if candidate.exists():
            paths = np.load(candidate)
    return truth, paths


# -- commands ----------------------------------------------------------------


def cmd_simulate(cfg: RunConfig) -> int:
    started = time.time()
    out = _out_dir(cfg)
    rng = np.random.default_rng(cfg.seed)
    data, state = simulate_preset(cfg.preset, rng, T=cfg.n_obs)
    p, q = data.p, data.q
    _write_csv(out / "Y.csv", [f"y{j + 1}" for j in range(p)], data.returns)
    _write_csv(out / "F.csv", [f"f{i + 1}" for i in range(q)], data.factors)

    variant = (
        ModelVariant.PG if state.sv is None else ModelVariant.ODCFMSV
    )
    truth = {
        "preset": cfg.preset,
        "variant": variant.value,
        "T": data.T,
        "B": state.meas.B.tolist(),
        "omega": state.meas.omega.tolist(),
        "A": state.corr.A.tolist(),
        "d": state.corr.d,
        "k": state.corr.k,
        "paths_file": "truth_paths.npz",
    }
    if state.sv is not None:
        truth["mu"] = state.sv.mu.tolist()
        truth["phi"] = state.sv.phi.tolist()
        truth["sigma_eta_sq"] = state.sv.sigma_eta_sq.tolist()
    with open(out / "truth.json", "w") as fh:
        json.dump(truth, fh, indent=2, sort_keys=True)
        fh.write("\n")

    w = np.full(p, 1.0 / p)
    sigma_y = sigma_y_path(state, variant)
    arrays = {
        "P": state.corr_path.P,
        "sigma_eps": sigma_eps_path(state.corr_path),
        "sigma_y": sigma_y,
        "var_true": evaluate.true_var_series(state, w, variant),
    }
    if state.sv_path is not None:
        arrays["h"] = state.sv_path.h
    np.savez(out / "truth_paths.npz", **arrays)
    _write_meta(out, cfg, started, {"preset": cfg.preset, "T": data.T})
    print(f"simulate: wrote Y.csv, F.csv, truth.json to {out}")
    return 0


def cmd_fit(cfg: RunConfig) -> int:
    started = time.time()
    out = _out_dir(cfg)
    data, _, _ = _load_dataset(cfg)
    w = _load_weights(cfg, data.p)
    draws = run_chain(
        data, cfg.priors, cfg.mcmc(), np.random.default_rng(cfg.seed), weights=w
    )
    ckpt = out / f"draws_{cfg.variant}.npz"
    draws.save(ckpt)

    truth, paths = _load_truth(cfg)
    rows = summarize(draws, truth)
    _write_csv(
        out / "summary.csv",
        ["parameter", "name", "true", "mean", "lower", "upper"],
        [[r.parameter, r.name, r.true, r.mean, r.lower, r.upper] for r in rows],
    )

    T = np.arange(data.T)
    rho_est = evaluate.smoothed_corr_series(draws)
    var_est = evaluate.smoothed_var_series(draws)
    if paths is not None and "sigma_eps" in paths:
        rho_true = paths["sigma_eps"][:, 1, 0]
        var_true = paths["var_true"]
        _write_csv(out / "rho_path.csv", ["t", "rho_true", "rho_est"],
                   np.column_stack([T, rho_true, rho_est]))
        _write_csv(out / "var_path.csv", ["t", "var_true", "var_est"],
                   np.column_stack([T, var_true, var_est]))
        report = evaluate.PerformanceReport(
            mae_rho=evaluate.mae_series(rho_est, rho_true),
            mae_var_smooth=evaluate.mae_series(var_est, var_true),
        )
        (out / "performance.txt").write_text(report.serialize())
    else:
        _write_csv(out / "rho_path.csv", ["t", "rho_est"],
                   np.column_stack([T, rho_est]))
        _write_csv(out / "var_path.csv", ["t", "var_est"],
                   np.column_stack([T, var_est]))

    _write_meta(out, cfg, started, {"checkpoint": ckpt.name,
                                    "n_draws": draws.n_draws})
    print(f"fit: {draws.n_draws} draws saved to {ckpt}")
    return 0


def cmd_predict(cfg: RunConfig) -> int:
    started = time.time()
    out = _out_dir(cfg)
    if cfg.checkpoint is None:
        raise ConfigError("predict needs --checkpoint from a previous fit")
    draws = ChainDraws.load(cfg.checkpoint)
    data, _, _ = _load_dataset(cfg)
    w = _load_weights(cfg, data.p)
    t_fit = int(draws.diagnostics.get("n_obs", data.T))
    y_next = data.returns[t_fit] if t_fit < data.T else None
    pf = predict.one_step_forecast(
        draws, np.random.default_rng(cfg.seed), y_next=y_next, weights=w,
        index=t_fit,
    )
    report = predict.ForecastReport(
        variant=draws.variant.value, weights=w, periods=(pf,)
    )
    np.save(out / "sigma_pred.npy", pf.sigma_hat[None])
    (out / "forecast.txt").write_text(
        predict.serialize_report(report, "sigma_pred.npy")
    )
    _write_meta(out, cfg, started)
    print(f"predict: period {pf.index} var={pf.var_5:.6g} lps={pf.lps:.6g}")
    return 0


def cmd_backtest(cfg: RunConfig) -> int:
    started = time.time()
    out = _out_dir(cfg)
    data, _, _ = _load_dataset(cfg)
    w = _load_weights(cfg, data.p)
    models = cfg.models if cfg.models else (cfg.variant,)
    if len(models) > 2:
        raise ConfigError("backtest compares at most two models")
    start = cfg.start if cfg.start is not None else data.T - cfg.periods

    reports = []
    for name in models:
        rep = predict.rolling_backtest(
            data, start, cfg.periods, variant=name, priors=cfg.priors,
            config=cfg.mcmc(name), seed=cfg.seed, weights=w,
        )
        sigmas = np.stack([pf.sigma_hat for pf in rep.periods])
        np.save(out / f"sigma_{name}.npy", sigmas)
        reports.append(rep)

    if len(reports) == 2:
        lead = predict.compare_reports(reports[0], reports[1])
        rows = []
        for i, t in enumerate(lead.indices):
            rows.append([
                t,
                reports[0].periods[i].var_5, reports[0].periods[i].lps,
                reports[0].periods[i].lps_ew,
                reports[1].periods[i].var_5, reports[1].periods[i].lps,
                reports[1].periods[i].lps_ew,
                lead.lps_series[i] - reports[1].lps_series[i],
                lead.lps_ew_series[i] - reports[1].lps_ew_series[i],
            ])
        rows.append([
            "cumulative", None, None, None, None, None, None,
            lead.cum_log_bf, lead.cum_log_bf_ew,
        ])
        m0, m1 = models[0], models[1]
        _write_csv(
            out / "backtest.csv",
            ["index",
             f"var_{m0}", f"lps_{m0}", f"lps_ew_{m0}",
             f"var_{m1}", f"lps_{m1}", f"lps_ew_{m1}",
             "diff_lps", "diff_lps_ew"],
            rows,
        )
        (out / f"backtest_{m0}.txt").write_text(
            predict.serialize_report(lead, f"sigma_{m0}.npy")
        )
        (out / f"backtest_{m1}.txt").write_text(
            predict.serialize_report(reports[1], f"sigma_{m1}.npy")
        )
        print(
            f"backtest: cumulative log BF ({m0} vs {m1}) = "
            f"{lead.cum_log_bf:.6g} ({lead.evidence.value}); "
            f"EW portfolio {lead.cum_log_bf_ew:.6g} ({lead.evidence_ew.value})"
        )
    else:
        rep = reports[0]
        name = models[0]
        (out / f"backtest_{name}.txt").write_text(
            predict.serialize_report(rep, f"sigma_{name}.npy")
        )
        print(f"backtest: {cfg.periods} periods of {name} written")
    _write_meta(out, cfg, started, {"models": list(models), "start": start})
    return 0


def cmd_compare(cfg: RunConfig) -> int:
    started = time.time()
    out = _out_dir(cfg)
    dgps = cfg.models if cfg.models else ("odcfmsv", "pg")
    scale = evaluate.ExperimentScale(
        T=cfg.n_obs if cfg.n_obs is not None else 300,
        burn_in=cfg.burn_in, kept=cfg.kept, thin=cfg.thin,
        n_workers=cfg.threads,
    )
    rng = np.random.default_rng(cfg.seed)
    lines = ["delta-mkl-report"]
    for dgp in dgps:
        res = evaluate.delta_mkl_experiment(dgp, cfg.reps, scale, rng)
        lines.append(
            f"dgp={dgp} reps={cfg.reps} failed={res.n_failed} "
            f"mean={res.mean:.10g} se={res.se:.10g}"
        )
        print(lines[-1])
    (out / "compare.txt").write_text("\n".join(lines) + "\n")
    _write_meta(out, cfg, started, {"dgps": list(dgps), "reps": cfg.reps})
    return 0


def cmd_evalcorr(cfg: RunConfig) -> int:
    started = time.time()
    out = _out_dir(cfg)
    if cfg.factors_csv is None:
        raise ConfigError("evalcorr needs --factors")
    fac = ingest_csv(cfg.factors_csv, cfg.rescale_percent)
    print(f"loaded {fac.path}: {fac.values.shape[0]} rows, "
          f"columns {','.join(fac.names)}")
    series = evaluate.rolling_corr(fac.values, cfg.radius)
    pairs = evaluate.corr_pairs(fac.values.shape[1])
    header = ["t"] + [
        f"corr({fac.names[i]},{fac.names[j]})" for i, j in pairs
    ]
    T = np.arange(series.shape[0])
    _write_csv(out / "evalcorr.csv", header, np.column_stack([T, series]))
    _write_meta(out, cfg, started, {"radius": cfg.radius})
    print(f"evalcorr: {len(pairs)} pair series over {series.shape[0]} periods")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "backtest": cmd_backtest,
    "compare": cmd_compare,
    "evalcorr": cmd_evalcorr,
}


# -- argument parsing --------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="odcfmsv",
        description="Dynamic-correlation factor stochastic volatility toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML config file; flags override it")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--rescale-percent", dest="rescale_percent",
                        action="store_true", default=False,
                        help="multiply ingested values by 0.01")
        sp.add_argument("--variant", default=None,
                        choices=[v.value for v in ModelVariant])
        sp.add_argument("--burn-in", dest="burn_in", type=int, default=None)
        sp.add_argument("--kept", type=int, default=None)
        sp.add_argument("--thin", type=int, default=None)
        sp.add_argument("--weights", default=None,
                        help="'equal' or a one-column CSV of weights")

    sp = sub.add_parser("simulate", help="write a synthetic dataset")
    common(sp)
    sp.add_argument("--preset", default=None, choices=sorted(PRESETS))
    sp.add_argument("--n-obs", dest="n_obs", type=int, default=None,
                    help="override the preset sample size")

    sp = sub.add_parser("fit", help="run the posterior sampler")
    common(sp)
    sp.add_argument("--returns", default=None)
    sp.add_argument("--factors", default=None)
    sp.add_argument("--truth", default=None,
                    help="truth.json from simulate, fills the true column")

    sp = sub.add_parser("predict", help="one-step-ahead forecast from a fit")
    common(sp)
    sp.add_argument("--returns", default=None)
    sp.add_argument("--factors", default=None)
    sp.add_argument("--checkpoint", default=None)

    sp = sub.add_parser("backtest", help="rolling one-step-ahead comparison")
    common(sp)
    sp.add_argument("--returns", default=None)
    sp.add_argument("--factors", default=None)
    sp.add_argument("--models", default=None,
                    help="comma-separated variants, at most two")
    sp.add_argument("--start", type=int, default=None,
                    help="first forecast row (0-based); default T - periods")
    sp.add_argument("--periods", type=int, default=None)

    sp = sub.add_parser("compare", help="replicated wrong-vs-true MKL study")
    common(sp)
    sp.add_argument("--models", default=None,
                    help="comma-separated DGP variants")
    sp.add_argument("--reps", type=int, default=None)
    sp.add_argument("--n-obs", dest="n_obs", type=int, default=None,
                    help="sample size per replication")

    sp = sub.add_parser("evalcorr", help="rolling empirical correlations")
    common(sp)
    sp.add_argument("--factors", default=None)
    sp.add_argument("--radius", type=int, default=None,
                    help="window half-width r; window is [t-r, t+r]")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 1
    command = args.command
    try:
        cfg = _merge(args)
        return _COMMANDS[command](cfg)
    except ConfigError as e:
        print(f"{command}: {e}", file=sys.stderr)
        return 1
    except DataError as e:
        print(f"{command}: {e}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError) as e:
        print(f"{command}: numerical failure: {e}", file=sys.stderr)
        return 3
    except OdcfmsvError as e:
        print(f"{command}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
