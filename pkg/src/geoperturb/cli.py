"""Command-line interface: ``geoperturb {synth,perturb,sweep,fit,attack}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness
from .attack import attack_success
from .distfit import best_fit, disc_law, fit_all, write_report
from .errors import GeoperturbError, ValidationError
from .population import load_synth_spec, synth_generate, write_blocks, write_locations

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


def _list_of(kind, name):
    def parse(text: str):
        try:
            vals = tuple(kind(v) for v in text.split(",") if v.strip())
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid {name} list {text!r}")
        if not vals:
            raise argparse.ArgumentTypeError(f"empty {name} list")
        return vals
    return parse


def _mechanisms(text: str):
    vals = _list_of(str, "mechanism")(text)
    bad = set(vals) - set(harness.MECHANISMS)
    if bad:
        raise argparse.ArgumentTypeError(f"unknown mechanism(s) {sorted(bad)}")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("experiment")
    g.add_argument("--mechanism", type=_mechanisms, default=harness.MECHANISMS,
                   help="comma-separated subset of donut,geoi")
    g.add_argument("--k-max", type=_list_of(int, "k-max"), default=harness.DEFAULT_K_MAX)
    g.add_argument("--epsilon", type=_list_of(float, "epsilon"),
                   default=harness.DEFAULT_EPSILON)
    g.add_argument("--epsilon-mode", choices=("per_meter", "budget_over_radius"),
                   default="per_meter")
    g.add_argument("--radial-mode", choices=("uniform_area", "uniform_distance"),
                   default="uniform_area")
    g.add_argument("--inner-fraction", type=float, default=0.10)
    g.add_argument("--max-attempts", type=int, default=1000)
    g.add_argument("--truncate", action="store_true",
                   help="resample Geo-I outputs that leave block coverage")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--locations")
    g.add_argument("--blocks")
    g.add_argument("--origin-lat", type=float)
    g.add_argument("--origin-lon", type=float)
    g.add_argument("--synth-config")
    g.add_argument("--k-min", type=int, default=10)
    g.add_argument("--out", default="results")
    g.add_argument("--attack", action="store_true", help="also run the adversary per cell")
    g.add_argument("--attack-grid-step", type=float, default=10.0)
    g.add_argument("--attack-grid-extent", type=float, default=500.0)
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="geoperturb",
                                description="Donut geomask and Geo-I evaluation toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="write a synthetic blocks/locations pair")
    sub.add_parser("perturb", parents=[common], help="perturb locations, write records")
    sub.add_parser("sweep", parents=[common], help="full Max-K x epsilon evaluation")
    for name, text in (("fit", "fit distance distributions to records CSVs"),
                       ("attack", "re-identify originals in records CSVs")):
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.add_argument("inputs", nargs="+", help="records_*.csv files")
    return p


def cli_parse(argv) -> harness.ExperimentConfig:
    """Parse ``argv`` into a validated config; usage problems exit with 2."""
    parser = build_parser()
    a = parser.parse_args(argv)
    try:
        return harness.ExperimentConfig(
            mechanisms=a.mechanism,
            k_max_list=a.k_max,
            epsilon_list=a.epsilon,
            seed=a.seed,
            locations=a.locations,
            blocks=a.blocks,
            origin_lat=a.origin_lat,
            origin_lon=a.origin_lon,
            synth_config=a.synth_config,
            inner_fraction=a.inner_fraction,
            radial_mode=a.radial_mode,
            max_attempts=a.max_attempts,
            epsilon_mode=a.epsilon_mode,
            truncate_to_coverage=a.truncate,
            k_min=a.k_min,
            output_dir=a.out,
            attack=a.attack,
            attack_grid_step=a.attack_grid_step,
            attack_grid_extent=a.attack_grid_extent,
            workers=a.workers,
            command=a.command,
            inputs=tuple(getattr(a, "inputs", ()) or ()),
        )
    except ValidationError as exc:
        parser.error(str(exc))


def _synth(cfg: harness.ExperimentConfig) -> list[Path]:
    if not cfg.synth_config:
        raise ValidationError("synth needs --synth-config")
    spec = load_synth_spec(cfg.synth_config)
    blocks, xy = synth_generate(spec)
    lats, lons = spec.projection.inverse(xy) if len(xy) else ((), ())
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_blocks(out / "blocks.csv", blocks)
    write_locations(out / "locations.csv", [f"h{i}" for i in range(len(xy))], lats, lons)
    print(f"origin {spec.origin_lat},{spec.origin_lon}: pass --origin-lat/--origin-lon "
          "when loading these files")
    return [out / "blocks.csv", out / "locations.csv"]


def _fit(cfg: harness.ExperimentConfig) -> list[Path]:
    rows = [(Path(p).stem, fit_all(harness.load_records(p).distance)) for p in cfg.inputs]
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_report(out / "fits.csv", rows)
    for method, fits in rows:
        best = best_fit(fits)
        print(f"{method}: best {best.family} {best.param_dict} ll={best.log_likelihood:.3f}")
    return [out / "fits.csv"]


def _attack(cfg: harness.ExperimentConfig) -> list[Path]:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for p in cfg.inputs:
        recs = harness.load_records(p)
        law = best_fit(fit_all(recs.distance))
        per, summ = attack_success(recs, law, cfg.attack_grid_step, cfg.attack_grid_extent)
        _, base = attack_success(recs, disc_law(cfg.attack_grid_extent * 2 ** 0.5),
                                 cfg.attack_grid_step, cfg.attack_grid_extent)
        path = out / f"attack_{Path(p).stem}.csv"
        harness.write_rows(path, harness.ATTACK_HEADER,
                           [(a.id, a.posterior_rank, repr(a.top_cell_error)) for a in per])
        written.append(path)
        print(f"{Path(p).stem}: law={law.family} mean_rank={summ.mean_rank:.1f} "
              f"(uniform baseline {base.mean_rank:.1f}) of {summ.n_cells} cells, "
              f"median top-cell error {summ.median_top_cell_error:.1f} m")
    return written


COMMANDS = {
    "synth": _synth,
    "perturb": harness.run_perturb,
    "sweep": harness.run_sweep,
    "fit": _fit,
    "attack": _attack,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    cfg = cli_parse(argv)
    logging.basicConfig(level=logging.INFO if "-v" in argv or "--verbose" in argv
                        else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if cfg.command in ("perturb", "sweep") and not cfg.has_input():
        print("geoperturb: error: give --locations/--blocks or --synth-config", file=sys.stderr)
        return EXIT_USAGE
    try:
        for path in COMMANDS[cfg.command](cfg):
            logging.getLogger(__name__).info("wrote %s", path)
    except (GeoperturbError, OSError) as exc:
        print(f"geoperturb: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
