"""Command-line front end: experiment orchestration and CSV emission.

Subcommands
-----------
atmi       simulate each maturity, emit MC ATM implied vol vs the
           closed-form approximation and limit
skew       same for the central-difference ATM skew (closed form only in
           Heston mode)
asymptote  closed forms only, no simulation
validate   run the acceptance criteria end to end; nonzero exit on failure

Configuration is flat ``key = value`` text (``#`` comments) overridden by
command-line flags of the same names; ``VIXSMILE_SEED`` is the seed fallback.
CSV goes to ``--out`` or stdout with a schema/parameter header line; floats
are printed with 17 significant digits so outputs are byte-stable. Logs go
to stderr.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, field

from . import asymptotics as asy
from .acceptance import CRITERIA, run_criterion
from .asymptotics import DegenerateModelError, FormulaId, evaluate
from .mc import SimGrid, build_vix_sampler, sample_rv, sample_vix
from .model import HestonParams, ModelParams
from .pricing import atmi, atmi_skew

__all__ = ["RunConfig", "cmd_atmi", "cmd_skew", "cmd_asymptote", "cmd_validate", "main"]

SCHEMA_VERSION = "v1"
_DEFAULT_OFFSETS = [round(-0.1 + 0.02 * i, 10) for i in range(11)]

_CONFIG_KEYS = {
    "model", "underlying", "v0", "hurst", "beta", "gamma", "nu", "eta",
    "delta", "T", "paths", "inner", "seed", "skew_step", "offsets", "out",
    "workers", "heston_k", "heston_theta",
}


@dataclass
class RunConfig:
    """Resolved run configuration (defaults < config file < flags < env seed)."""

    model: str = "mixed"
    underlying: str = "vix"
    v0: float = 0.04
    hurst: float = 0.3
    beta: float = 0.0
    gamma: float = 1.0
    nu: float = 2.0
    eta: float = 0.0
    delta: float = 30.0 / 365.0
    maturities: list[float] = field(default_factory=lambda: [0.25])
    n_paths: int = 200_000
    n_inner: int = 64
    seed: int = 42
    skew_step: float = 0.01
    offsets: list[float] = field(default_factory=lambda: list(_DEFAULT_OFFSETS))
    out_path: str = "-"
    workers: int = 0  # 0: all cores
    quick: bool = False
    heston_k: float = 1.0
    heston_theta: float | None = None

    def __post_init__(self) -> None:
        if self.model not in ("mixed", "heston"):
            raise ValueError(f"model must be 'mixed' or 'heston', got {self.model!r}")
        if self.underlying not in ("vix", "rv"):
            raise ValueError(f"underlying must be 'vix' or 'rv', got {self.underlying!r}")
        if not self.maturities or any(t <= 0.0 for t in self.maturities):
            raise ValueError("maturities must be nonempty and positive")
        if self.workers < 0:
            raise ValueError("workers must be nonnegative")

    @property
    def effective_workers(self) -> int:
        return self.workers if self.workers > 0 else (os.cpu_count() or 1)

    def model_params(self) -> ModelParams:
        return ModelParams(v0=self.v0, H=self.hurst, beta=self.beta,
                           gamma=self.gamma, nu=self.nu, eta=self.eta)

    def heston_params(self) -> HestonParams:
        theta = self.v0 if self.heston_theta is None else self.heston_theta
        return HestonParams(k=self.heston_k, theta=theta, nu=self.nu, v0=self.v0)

    def sim_grid(self, maturity: float) -> SimGrid:
        return SimGrid(T=maturity, delta=self.delta, n_inner=self.n_inner,
                       n_paths=self.n_paths, seed=self.seed)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _echo_header(config: RunConfig, schema: str) -> str:
    # workers and out are excluded: they do not affect the numbers, and the
    # byte-identity contract must hold across worker counts.
    fields = [
        f"model={config.model}",
        f"underlying={config.underlying}",
        f"v0={_fmt(config.v0)}",
        f"hurst={_fmt(config.hurst)}",
        f"beta={_fmt(config.beta)}",
        f"gamma={_fmt(config.gamma)}",
        f"nu={_fmt(config.nu)}",
        f"eta={_fmt(config.eta)}",
        f"delta={_fmt(config.delta)}",
        "T=" + ",".join(_fmt(t) for t in config.maturities),
        f"paths={config.n_paths}",
        f"inner={config.n_inner}",
        f"seed={config.seed}",
        f"skew_step={_fmt(config.skew_step)}",
        "offsets=" + ",".join(_fmt(k) for k in config.offsets),
    ]
    if config.model == "heston":
        fields.append(f"heston_k={_fmt(config.heston_k)}")
        theta = config.v0 if config.heston_theta is None else config.heston_theta
        fields.append(f"heston_theta={_fmt(theta)}")
    return f"# vixsmile-csv schema={schema}.{SCHEMA_VERSION} " + " ".join(fields)


def _log(message: str) -> None:
    print(message, file=sys.stderr, flush=True)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_atmi(config: RunConfig, stream) -> None:
    """One row per maturity: MC ATM implied vol vs approximation and limit."""
    params = config.model_params()
    stream.write(_echo_header(config, "atmi") + "\n")
    stream.write("T,mc_atmi,mc_stderr,approx_atmi,limit_value,rel_gap,status\n")
    degenerate = params.volvol_mean == 0.0
    for maturity in config.maturities:
        try:
            if degenerate:
                row = [maturity, 0.0, 0.0, 0.0, 0.0, 0.0]
                status = "degenerate"
            else:
                _log(f"atmi: simulating {config.underlying} at T={maturity:g}")
                grid = config.sim_grid(maturity)
                if config.underlying == "vix":
                    batch = sample_vix(build_vix_sampler(params, grid),
                                       workers=config.effective_workers)
                    approx = asy.vix_atmi_approx(params, config.delta, maturity)
                    limit = asy.vix_atmi_limit(params, config.delta)
                else:
                    batch = sample_rv(params, grid, workers=config.effective_workers)
                    approx = asy.rv_atmi_approx(params, maturity)
                    limit = asy.rv_atmi_limit(params)
                vol, stderr = atmi(batch, maturity)
                rel_gap = abs(approx - vol) / vol if vol > 0.0 else math.inf
                row = [maturity, vol, stderr, approx, limit, rel_gap]
                status = "ok"
            stream.write(",".join(_fmt(v) for v in row) + f",{status}\n")
            stream.flush()
        except Exception as exc:
            stream.write(f"{_fmt(maturity)},,,,,,error\n")
            stream.write(f"# error at T={maturity!r}: {exc!r}\n")
            stream.flush()
            raise


def cmd_skew(config: RunConfig, stream) -> None:
    """One row per maturity: MC central-difference skew vs approximation/limit.

    In Heston mode no simulation is run; the closed-form skew-sign value is
    emitted instead.
    """
    stream.write(_echo_header(config, "skew") + "\n")
    if config.model == "heston":
        stream.write("T,mc_skew,mc_stderr,approx_skew,limit_value,status\n")
        value, sign = asy.heston_vix_skew_sign(config.heston_params(), config.delta)
        for maturity in config.maturities:
            row = f"{_fmt(maturity)},,,{_fmt(value)},{_fmt(value)},closed_form_sign={sign:+d}"
            stream.write(row + "\n")
        stream.flush()
        return

    params = config.model_params()
    stream.write("T,mc_skew,mc_stderr,approx_skew,limit_value,status\n")
    degenerate = params.volvol_mean == 0.0
    for maturity in config.maturities:
        try:
            if degenerate:
                stream.write(",".join(_fmt(v) for v in [maturity, 0, 0, 0, 0]))
                stream.write(",degenerate\n")
                stream.flush()
                continue
            _log(f"skew: simulating {config.underlying} at T={maturity:g}")
            grid = config.sim_grid(maturity)
            if config.underlying == "vix":
                batch = sample_vix(build_vix_sampler(params, grid),
                                   workers=config.effective_workers)
                approx = asy.vix_skew_approx(params, config.delta, maturity)
                limit = asy.vix_skew_limit(params, config.delta)
            else:
                batch = sample_rv(params, grid, workers=config.effective_workers)
                limit = asy.rv_skew_limit(params)
                approx = limit * maturity ** (params.H - 0.5)
            value, stderr = atmi_skew(batch, maturity, step=config.skew_step)
            row = [maturity, value, stderr, approx, limit]
            stream.write(",".join(_fmt(v) for v in row) + ",ok\n")
            stream.flush()
        except Exception as exc:
            stream.write(f"{_fmt(maturity)},,,,,error\n")
            stream.write(f"# error at T={maturity!r}: {exc!r}\n")
            stream.flush()
            raise


def cmd_asymptote(config: RunConfig, stream) -> None:
    """Closed forms only: every formula applicable to the configuration."""
    stream.write(_echo_header(config, "asymptote") + "\n")
    stream.write("formula_id,maturity,value,quad_error_bound,status\n")

    def write_row(fid: FormulaId, maturity: float | None) -> None:
        params = (config.heston_params() if fid is FormulaId.HESTON_VIX_SKEW_SIGN
                  else config.model_params())
        try:
            res = evaluate(fid, params, delta=config.delta, maturity=maturity)
            extra = f"sign={res.inputs_echo['sign']:+d}" if "sign" in res.inputs_echo else "ok"
            stream.write(
                f"{fid.value},{'' if maturity is None else _fmt(maturity)},"
                f"{_fmt(res.value)},{_fmt(res.quad_error_bound)},{extra}\n"
            )
        except DegenerateModelError:
            stream.write(
                f"{fid.value},{'' if maturity is None else _fmt(maturity)},,,degenerate\n"
            )

    if config.model == "heston":
        write_row(FormulaId.HESTON_VIX_SKEW_SIGN, None)
        stream.flush()
        return

    for fid in (FormulaId.VIX_ATMI_LIMIT, FormulaId.VIX_SKEW_LIMIT,
                FormulaId.SABR_VIX_SKEW, FormulaId.RV_ATMI_LIMIT,
                FormulaId.RV_SKEW_LIMIT):
        write_row(fid, None)
    for maturity in config.maturities:
        for fid in (FormulaId.VIX_ATMI_APPROX, FormulaId.VIX_SKEW_APPROX,
                    FormulaId.RV_ATMI_APPROX):
            write_row(fid, maturity)
    stream.flush()


def cmd_validate(config: RunConfig, stream) -> int:
    """Run the acceptance criteria; returns the number of failures."""
    failures = 0
    stream.write(
        f"{'criterion':<10s} {'status':<6s} {'achieved':>12s} {'tolerance':>12s} "
        f"{'seconds':>8s}  name\n"
    )
    stream.flush()
    for criterion in CRITERIA:
        result = run_criterion(criterion, quick=config.quick)
        status = "PASS" if result.passed else "FAIL"
        failures += 0 if result.passed else 1
        stream.write(
            f"{result.key:<10s} {status:<6s} {result.achieved:>12.4e} "
            f"{result.tolerance:>12.4e} {result.seconds:>8.1f}  {result.name}\n"
        )
        stream.flush()
        _log(f"validate {result.key}: {status} ({result.detail})")
    stream.write(f"# {len(CRITERIA) - failures}/{len(CRITERIA)} criteria passed\n")
    stream.flush()
    return failures


# ---------------------------------------------------------------------------
# configuration plumbing
# ---------------------------------------------------------------------------

def _parse_float_list(text: str) -> list[float]:
    values = [float(tok) for tok in text.split(",") if tok.strip()]
    if not values:
        raise ValueError(f"empty list: {text!r}")
    return values


def load_config_file(path: str) -> dict[str, str]:
    """Flat ``key = value`` pairs; ``#`` starts a comment."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _CONFIG_KEYS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vixsmile",
        description=(
            "Short-maturity ATM implied-vol asymptotics for VIX and "
            "realized-variance options, validated by Monte Carlo."
        ),
        epilog=(
            "CSV columns: atmi -> T,mc_atmi,mc_stderr,approx_atmi,limit_value,"
            "rel_gap,status | skew -> T,mc_skew,mc_stderr,approx_skew,"
            "limit_value,status | asymptote -> formula_id,maturity,value,"
            "quad_error_bound,status. For the rv underlying, limit_value is "
            "the power-law coefficient of T^(H-1/2). Floats carry 17 "
            "significant digits; outputs are byte-stable for a fixed seed, "
            "independent of --workers."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("atmi", "Monte Carlo ATM implied vol vs closed forms, one row per maturity"),
        ("skew", "Monte Carlo ATM skew vs closed forms (closed form only for heston)"),
        ("asymptote", "closed-form values only, no simulation"),
        ("validate", "run the acceptance criteria suite"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--model", choices=["mixed", "heston"])
        p.add_argument("--underlying", choices=["vix", "rv"])
        p.add_argument("--v0", type=float, help="initial instantaneous variance")
        p.add_argument("--hurst", type=float, help="Hurst parameter in (0, 1/2]")
        p.add_argument("--beta", type=float, help="kernel mean-reversion rate")
        p.add_argument("--gamma", type=float, help="mixing weight in [0, 1]")
        p.add_argument("--nu", type=float, help="first vol-of-vol")
        p.add_argument("--eta", type=float, help="second vol-of-vol")
        p.add_argument("--delta", type=float, help="averaging window in years")
        p.add_argument("--T", dest="maturities", help="comma list of maturities")
        p.add_argument("--paths", type=int, help="Monte Carlo paths")
        p.add_argument("--inner", type=int, help="inner quadrature nodes")
        p.add_argument("--seed", type=int, help="RNG seed (VIXSMILE_SEED fallback)")
        p.add_argument("--skew-step", dest="skew_step", type=float,
                       help="central-difference log-strike step")
        p.add_argument("--offsets", help="comma list of log-strike offsets")
        p.add_argument("--out", help="output path ('-' for stdout)")
        p.add_argument("--workers", type=int, help="parallel workers (0: all cores)")
        p.add_argument("--quick", action="store_true",
                       help="reduced paths, doubled MC tolerances")
        p.add_argument("--heston-k", dest="heston_k", type=float,
                       help="Heston reversion speed (heston model only)")
        p.add_argument("--heston-theta", dest="heston_theta", type=float,
                       help="Heston long-run variance (defaults to v0)")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    settings: dict[str, str] = {}
    if args.config:
        settings.update(load_config_file(args.config))

    def pick(flag_value, key: str, default, caster):
        if flag_value is not None:
            return flag_value
        if key in settings:
            return caster(settings[key])
        return default

    seed_default = int(os.environ.get("VIXSMILE_SEED", "42"))
    maturities = pick(args.maturities, "T", "0.25", str)
    offsets = pick(args.offsets, "offsets", None, str)
    theta = pick(args.heston_theta, "heston_theta", None, float)
    return RunConfig(
        model=pick(args.model, "model", "mixed", str),
        underlying=pick(args.underlying, "underlying", "vix", str),
        v0=pick(args.v0, "v0", 0.04, float),
        hurst=pick(args.hurst, "hurst", 0.3, float),
        beta=pick(args.beta, "beta", 0.0, float),
        gamma=pick(args.gamma, "gamma", 1.0, float),
        nu=pick(args.nu, "nu", 2.0, float),
        eta=pick(args.eta, "eta", 0.0, float),
        delta=pick(args.delta, "delta", 30.0 / 365.0, float),
        maturities=_parse_float_list(maturities if isinstance(maturities, str)
                                     else str(maturities)),
        n_paths=pick(args.paths, "paths", 200_000, int),
        n_inner=pick(args.inner, "inner", 64, int),
        seed=pick(args.seed, "seed", seed_default, int),
        skew_step=pick(args.skew_step, "skew_step", 0.01, float),
        offsets=(_parse_float_list(offsets) if offsets is not None
                 else list(_DEFAULT_OFFSETS)),
        out_path=pick(args.out, "out", "-", str),
        workers=pick(args.workers, "workers", 0, int),
        quick=bool(args.quick),
        heston_k=pick(args.heston_k, "heston_k", 1.0, float),
        heston_theta=float(theta) if theta is not None else None,
    )


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
        # Fail fast on invalid model parameters before any simulation.
        if config.model == "mixed":
            config.model_params()
        else:
            config.heston_params()
    except (ValueError, OSError) as exc:
        _log(f"vixsmile: configuration error: {exc}")
        return 2

    own_stream = config.out_path not in ("-", "")
    stream = open(config.out_path, "w", encoding="utf-8") if own_stream else sys.stdout
    try:
        if args.command == "atmi":
            cmd_atmi(config, stream)
        elif args.command == "skew":
            cmd_skew(config, stream)
        elif args.command == "asymptote":
            cmd_asymptote(config, stream)
        elif args.command == "validate":
            return 1 if cmd_validate(config, stream) else 0
        return 0
    except Exception as exc:
        _log(f"vixsmile: error: {exc!r}")
        return 1
    finally:
        if own_stream:
            stream.close()


if __name__ == "__main__":
    sys.exit(main())
