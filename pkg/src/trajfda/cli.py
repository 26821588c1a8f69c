"""Command-line interface tying the pipeline together.

Subcommands: simulate, gp-sample, ingest, rank, detect, boxplot, msbdwo,
benchmark.  Tunables come from flags or a flat ``key = value`` config file
(flags win).  All outputs are deterministic for a fixed seed; the
TRAJFDA_THREADS environment variable caps worker parallelism (0 = auto).
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, fields

from .core import NumericalError, RandomSeed, ValidationError, restrict
from .depthrank import MsbdConfig, assign_bands, msbd, rank
from .detect import MsbdRuleConfig, RmdRuleConfig, WoRuleConfig, detect_all, wo_outliers
from .figures import boxplot_figure, categorize, emit_boxplot_svg, emit_msbdwo, msbdwo_figure
from .io import (
    atomic_write_bytes,
    dumps_report,
    ensemble_from_tracks,
    ingest_csv,
    write_ensemble_csv,
    write_labels,
)
from .outlyingness import Mahalanobis, Projection, profile_ensemble
from .pointwise import PointwiseDepthMethod
from .preprocess import GCV, Fixed, SmoothingConfig, smooth_resample
from .simgen import (
    ClosedCurveConfig,
    DetectorConfigs,
    MaternSpec,
    Model,
    ModelSpec,
    benchmark,
    generate,
    gp_sample,
)


@dataclass
class RunConfig:
    """Every tunable across the pipeline, with module defaults.

    ``alpha`` is kept as text since the boxplot/msbdwo subcommands accept a
    comma list (one figure per value).
    """

    alpha: str = "0.975"
    factor: float = 1.5
    method: str = "projection"
    directions: int = 180
    max_triples: int = 200_000
    seed: int = 0
    exclude_query: bool = True
    h_fraction: float | None = None
    n_starts: int = 500
    target_k: int = 200
    lam: str = "gcv"
    align: str = "none"
    band_levels: str = "25,50,75"

    def depth_method(self) -> PointwiseDepthMethod:
        if self.method == "projection":
            return Projection(self.directions)
        if self.method == "mahalanobis":
            return Mahalanobis()
        raise ValidationError(f"unknown method {self.method!r}")

    def msbd_config(self) -> MsbdConfig:
        return MsbdConfig(self.max_triples, RandomSeed(self.seed), self.exclude_query)

    def msbd_rule(self) -> MsbdRuleConfig:
        return MsbdRuleConfig(self.factor)

    def rmd_rule(self) -> RmdRuleConfig:
        return RmdRuleConfig(self.h_fraction, seed=RandomSeed(self.seed),
                             n_starts=self.n_starts)

    def smoothing(self) -> SmoothingConfig:
        lam = GCV() if self.lam == "gcv" else Fixed(float(self.lam))
        return SmoothingConfig(self.target_k, lam, self.align)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def load_config_file(path: str) -> dict:
    """Flat ``key = value`` lines; '#' starts a comment."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"bad config line: {raw.strip()!r}")
            key, val = (part.strip() for part in line.split("=", 1))
            values[key.replace("-", "_")] = val
    return values


def _coerce(cfg: RunConfig, key: str, raw: str):
    for f in fields(RunConfig):
        if f.name == key:
            current = getattr(cfg, key)
            if key == "h_fraction":
                return None if raw.lower() in ("none", "") else float(raw)
            if isinstance(current, bool):
                return raw.lower() in ("1", "true", "yes")
            if isinstance(current, int):
                return int(raw)
            if isinstance(current, float):
                return float(raw)
            return raw
    raise ValidationError(f"unknown config key {key!r}")


def build_run_config(args: argparse.Namespace) -> tuple[RunConfig, set[str]]:
    """Config file first, flags override; returns the explicitly set keys."""
    cfg = RunConfig()
    explicit: set[str] = set()
    if getattr(args, "config", None):
        for key, raw in load_config_file(args.config).items():
            setattr(cfg, key, _coerce(cfg, key, raw))
            explicit.add(key)
    for f in fields(RunConfig):
        val = getattr(args, f.name, None)
        if val is not None:
            setattr(cfg, f.name, val)
            explicit.add(f.name)
    return cfg, explicit


def thread_count() -> int:
    raw = os.environ.get("TRAJFDA_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"TRAJFDA_THREADS must be an integer, got {raw!r}") from None
    if n == 0:
        return os.cpu_count() or 1
    return max(1, n)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors: synopsis to stderr, exit 1
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_common(sp: argparse.ArgumentParser):
    sp.add_argument("--config", help="key = value config file; flags override")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--method", choices=["projection", "mahalanobis"], default=None)
    sp.add_argument("--directions", type=int, default=None)
    sp.add_argument("--alpha", default=None)
    sp.add_argument("--factor", type=float, default=None)
    sp.add_argument("--max-triples", dest="max_triples", type=int, default=None)
    sp.add_argument("--h-fraction", dest="h_fraction", type=float, default=None)
    sp.add_argument("--n-starts", dest="n_starts", type=int, default=None)


def make_parser() -> _Parser:
    parser = _Parser(prog="trajfda", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="generate a model ensemble CSV + labels")
    sp.add_argument("--model", required=True, choices=[m.value for m in Model])
    sp.add_argument("--k", type=int, default=0)
    sp.add_argument("--contaminate", action="store_true", default=True)
    sp.add_argument("--no-contaminate", dest="contaminate", action="store_false")
    sp.add_argument("--out", required=True)
    sp.add_argument("--labels", default=None)
    _add_common(sp)

    sp = sub.add_parser("gp-sample", help="sample the bivariate Matern process")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--k", type=int, default=200)
    sp.add_argument("--rho12", type=float, default=0.6)
    sp.add_argument("--out", required=True)
    _add_common(sp)

    sp = sub.add_parser("ingest", help="smooth/resample raw tracks to an ensemble CSV")
    sp.add_argument("--input", required=True)
    sp.add_argument("--target-k", dest="target_k", type=int, default=None)
    sp.add_argument("--lam", default=None, help='"gcv" or a fixed penalty value')
    sp.add_argument("--align", choices=["none", "common-start"], default=None)
    sp.add_argument("--out", required=True)
    _add_common(sp)

    sp = sub.add_parser("rank", help="depth ranking report (JSON)")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    _add_common(sp)

    sp = sub.add_parser("detect", help="three-rule detection report (JSON)")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    _add_common(sp)

    sp = sub.add_parser("boxplot", help="trajectory functional boxplot SVG(s)")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True, help="output path; alpha tag appended for lists")
    _add_common(sp)

    sp = sub.add_parser("msbdwo", help="depth-vs-wiggliness scatter (JSON or SVG)")
    sp.add_argument("--input", required=True)
    sp.add_argument("--format", choices=["json", "svg"], default="json")
    sp.add_argument("--out", required=True)
    _add_common(sp)

    sp = sub.add_parser("benchmark", help="pc/pf table over seeded replicates")
    sp.add_argument("--model", required=True, choices=[m.value for m in Model])
    sp.add_argument("--replicates", type=int, required=True)
    sp.add_argument("--k", type=int, default=0)
    sp.add_argument("--out", required=True, help="output prefix (.txt and .json)")
    _add_common(sp)
    return parser


def _load_ensemble(path: str):
    return ensemble_from_tracks(ingest_csv(path))


def _alphas(cfg: RunConfig) -> list[float]:
    raw = str(cfg.alpha)
    return [float(a) for a in raw.split(",")]


def _detect_pipeline(ensemble, cfg: RunConfig, alpha: float):
    method = cfg.depth_method()
    profiles = profile_ensemble(ensemble, method)
    wo_res = wo_outliers(profiles, WoRuleConfig(alpha))
    outlier_ids = [p.curve_id for p, f in zip(profiles, wo_res.flags) if f]
    survivors = [cid for cid in ensemble.ids if cid not in set(outlier_ids)]
    ranking = rank(restrict(ensemble, survivors), cfg.msbd_config())
    bands = assign_bands(ranking)
    return profiles, outlier_ids, ranking, bands


def _out_path(base: str, alpha: float, multi: bool) -> str:
    if not multi:
        return base
    stem, dot, ext = base.rpartition(".")
    tag = f"alpha{format(alpha, 'g').replace('.', '_')}"
    return f"{stem}-{tag}{dot}{ext}" if dot else f"{base}-{tag}"


def run(argv: list[str]) -> int:
    args = make_parser().parse_args(argv)
    cfg, explicit = build_run_config(args)

    if args.command == "simulate":
        spec = ModelSpec(Model(args.model), args.k, RandomSeed(cfg.seed), args.contaminate)
        ensemble, outlier_ids = generate(spec)
        write_ensemble_csv(ensemble, args.out)
        labels_path = args.labels or (args.out + ".labels")
        write_labels(labels_path, ensemble.ids, outlier_ids)
        return 0

    if args.command == "gp-sample":
        spec = MaternSpec(rho12=args.rho12, k=args.k)
        ensemble = gp_sample(spec, args.n, RandomSeed(cfg.seed))
        write_ensemble_csv(ensemble, args.out)
        return 0

    if args.command == "ingest":
        tracks = ingest_csv(args.input)
        ensemble = smooth_resample(tracks, cfg.smoothing())
        write_ensemble_csv(ensemble, args.out)
        return 0

    if args.command == "rank":
        ensemble = _load_ensemble(args.input)
        ranking = rank(ensemble, cfg.msbd_config())
        bands = assign_bands(ranking)
        report = {
            "config": cfg.as_dict(),
            "ranking": {
                "entries": [{"id": cid, "msbd": v} for cid, v in ranking.entries],
                "order": list(ranking.order),
            },
            "bands": {
                "median_id": bands.median_id,
                "band25": bands.bands[25],
                "band50": bands.bands[50],
                "band75": bands.bands[75],
                "outer": bands.outer_ids,
            },
        }
        atomic_write_bytes(args.out, dumps_report(report))
        return 0

    if args.command == "detect":
        ensemble = _load_ensemble(args.input)
        alpha = _alphas(cfg)[0]
        method = cfg.depth_method()
        profiles = profile_ensemble(ensemble, method)
        ranking = rank(ensemble, cfg.msbd_config())
        report_obj = detect_all(
            ensemble, profiles, ranking,
            WoRuleConfig(alpha), cfg.msbd_rule(), cfg.rmd_rule(),
        )
        bands = assign_bands(ranking)
        report = {
            "config": cfg.as_dict(),
            "ranking": {
                "entries": [{"id": cid, "msbd": v} for cid, v in ranking.entries],
                "order": list(ranking.order),
            },
            "detection": {
                "records": [
                    {
                        "id": r.curve_id,
                        "wo": r.wo,
                        "standardized_log_wo": r.standardized_log_wo,
                        "wo_flag": r.wo_flag,
                        "msbd": r.msbd,
                        "msbd_flag": r.msbd_flag,
                        "rmd2": r.rmd2,
                        "rmd_flag": r.rmd_flag,
                    }
                    for r in report_obj.records
                ],
                "thresholds": {
                    "wo_threshold": report_obj.wo_threshold,
                    "rmd_threshold": report_obj.rmd_threshold,
                    "mcd_c": report_obj.mcd_c,
                    "mcd_m": report_obj.mcd_m,
                },
            },
            "bands": {
                "median_id": bands.median_id,
                "band25": bands.bands[25],
                "band50": bands.bands[50],
                "band75": bands.bands[75],
                "outer": bands.outer_ids,
            },
        }
        atomic_write_bytes(args.out, dumps_report(report))
        return 0

    if args.command == "boxplot":
        ensemble = _load_ensemble(args.input)
        alphas = _alphas(cfg)
        for alpha in alphas:
            _, outlier_ids, ranking, bands = _detect_pipeline(ensemble, cfg, alpha)
            fig = boxplot_figure(ensemble, bands, outlier_ids)
            atomic_write_bytes(_out_path(args.out, alpha, len(alphas) > 1),
                               emit_boxplot_svg(fig))
        return 0

    if args.command == "msbdwo":
        ensemble = _load_ensemble(args.input)
        alphas = _alphas(cfg)
        for alpha in alphas:
            profiles, outlier_ids, ranking, bands = _detect_pipeline(ensemble, cfg, alpha)
            # Outlier depths are measured against the same survivor vertex
            # set the ranking used, so the boxplot median stays the deepest
            # non-outlier point in the scatter.
            survivors = [cid for cid in ensemble.ids if cid not in set(outlier_ids)]
            entries = list(ranking.entries)
            for cid in outlier_ids:
                sub = restrict(ensemble, survivors + [cid])
                entries.append((cid, msbd(sub, cid, cfg.msbd_config())))
            cats = categorize(bands, outlier_ids)
            fig = msbdwo_figure(entries, profiles, cats)
            atomic_write_bytes(_out_path(args.out, alpha, len(alphas) > 1),
                               emit_msbdwo(fig, args.format))
        return 0

    if args.command == "benchmark":
        spec = ModelSpec(Model(args.model), args.k, RandomSeed(cfg.seed))
        # The paper-comparison runs use Mahalanobis outlyingness unless the
        # method is set explicitly.
        method = cfg.depth_method() if "method" in explicit else Mahalanobis()
        cfgs = DetectorConfigs(
            method=method,
            wo=WoRuleConfig(_alphas(cfg)[0]),
            msbd_rule=cfg.msbd_rule(),
            rmd=cfg.rmd_rule(),
            msbd=cfg.msbd_config(),
        )
        result = benchmark(spec, args.replicates, cfgs, ClosedCurveConfig(),
                           threads=thread_count())
        lines = [f"model {args.model}  replicates {result.replicates}",
                 f"{'method':<6} {'pc':>6} {'sd(pc)':>7} {'pf':>6} {'sd(pf)':>7}"]
        for name in ("RMD", "MSBD", "WO"):
            r = result.rates[name]
            lines.append(
                f"{name:<6} {r.pc_mean:>6.2f} {r.pc_sd:>7.3f} {r.pf_mean:>6.2f} {r.pf_sd:>7.3f}"
            )
        text = "\n".join(lines) + "\n"
        atomic_write_bytes(args.out + ".txt", text.encode("utf-8"))
        payload = {
            "model": args.model,
            "replicates": result.replicates,
            "rates": {
                name: {
                    "pc_mean": r.pc_mean, "pc_sd": r.pc_sd,
                    "pf_mean": r.pf_mean, "pf_sd": r.pf_sd,
                }
                for name, r in result.rates.items()
            },
        }
        atomic_write_bytes(args.out + ".json", dumps_report(payload))
        sys.stdout.write(text)
        return 0

    raise ValidationError(f"unknown command {args.command!r}")  # pragma: no cover


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        return run(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ValidationError as exc:
        print(f"trajfda: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"trajfda: numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
