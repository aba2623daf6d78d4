"""Command-line pipeline driver.

Subcommands mirror the processing stages: scenario synthesis, port
extraction, message annotation, voyage extraction, snapshot construction,
training, evaluation, and the two report sweeps. Every command is a pure
function of its input files, flags and seed, so re-runs are byte-identical.

Flat TOML config files hold shared defaults; command-line flags win over
config values, which win over built-in defaults. Exit codes: 0 success,
1 validation problem, 2 numeric failure during training.
"""

from __future__ import annotations

import dataclasses
import sys
from pathlib import Path

import click

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .core import parse_ais_csv
from .engine.model import TrainConfig
from .engine.training import checkpoint_to_json, train
from .errors import NumericError, PortgraphError, ValidationError
from .graphs import (
    TemporalDataset,
    build_snapshots,
    snapshots_from_ndjson,
    snapshots_to_ndjson,
)
from .metrics import (
    ablation_csv,
    ablation_report,
    confusion_csv,
    dropout_csv,
    dropout_sweep,
    format_ablation_table,
    loss_history_csv,
    run_cv,
)
from .ports import (
    DEFAULT_BUFFER,
    DEFAULT_SOG_MAX,
    DbscanParams,
    extract_ports,
    registry_from_json,
    registry_to_json,
    transfer_labels,
)
from .segmentation import (
    annotate,
    annotated_from_csv,
    annotated_to_csv,
    extract_visits,
    extract_voyages,
    voyages_to_csv,
)
from .synthetic import ScenarioConfig, generate

#: Allowed flat config keys and the types their values must carry.
CONFIG_KEYS: dict[str, tuple[type, ...]] = {
    "seed": (int,),
    # scenario
    "actual_ports": (int,), "gateway_ports": (int,), "vessels": (int,),
    "days": (int,), "report_interval": (int,), "region": (list,),
    "dwell_multiplier": (int, float), "placement_radius": (int, float),
    "gateway_visit_prob": (int, float), "mean_dwell_hours": (int, float),
    "cruise_speed_kn": (int, float), "long_stay_prob": (int, float),
    "congested_ports": (int,),
    # port extraction
    "eps": (int, float), "min_pts": (int,), "sog_max": (int, float),
    "buffer": (int, float),
    # model and training
    "learning_rate": (int, float), "dropout": (int, float), "patience": (int,),
    "heads": (int,), "hidden_dim": (int,), "cheb_order": (int,),
    "max_epochs": (int,), "splits": (int,), "attention": (bool,),
    "temporal": (bool,), "normalize": (bool,),
}


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"config file not found: {path}")
    with open(p, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ValidationError(f"malformed config {path}: {exc}") from None
    unknown = sorted(set(raw) - set(CONFIG_KEYS))
    if unknown:
        raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
    for key, value in raw.items():
        if not isinstance(value, CONFIG_KEYS[key]) or isinstance(value, bool) != (
            bool in CONFIG_KEYS[key]
        ):
            want = " or ".join(t.__name__ for t in CONFIG_KEYS[key])
            raise ValidationError(
                f"config key {key} must be {want}, got {type(value).__name__}"
            )
    return raw


def _pick(cfg: dict, flag_value, key: str, default):
    """Flag beats config beats default; None flags mean 'not given'."""
    if flag_value is not None:
        return flag_value
    if key in cfg:
        return cfg[key]
    return default


def scenario_config(cfg: dict, seed) -> ScenarioConfig:
    region = cfg.get("region")
    kwargs = dict(
        n_actual_ports=cfg.get("actual_ports", 10),
        n_gateway_ports=cfg.get("gateway_ports", 5),
        n_vessels=cfg.get("vessels", 10),
        days=cfg.get("days", 120),
        report_interval=cfg.get("report_interval", 60),
        seed=_pick(cfg, seed, "seed", 7),
        dwell_multiplier=float(cfg.get("dwell_multiplier", 4.0)),
        placement_radius=float(cfg.get("placement_radius", 0.02)),
        gateway_visit_prob=float(cfg.get("gateway_visit_prob", 0.8)),
        mean_dwell_hours=float(cfg.get("mean_dwell_hours", 10.0)),
        cruise_speed_kn=float(cfg.get("cruise_speed_kn", 10.0)),
        long_stay_prob=float(cfg.get("long_stay_prob", 0.1)),
        n_congested_ports=cfg.get("congested_ports", 1),
    )
    if region is not None:
        if len(region) != 4 or not all(isinstance(v, (int, float)) for v in region):
            raise ValidationError("config key region must be [lon_min, lat_min, lon_max, lat_max]")
        kwargs["region"] = tuple(float(v) for v in region)
    return ScenarioConfig(**kwargs)


def train_config(cfg: dict, seed=None, dropout=None, splits=None,
                 attention=None, temporal=None) -> TrainConfig:
    return TrainConfig(
        learning_rate=float(cfg.get("learning_rate", 1e-4)),
        dropout_p=float(_pick(cfg, dropout, "dropout", 0.2)),
        patience=cfg.get("patience", 10),
        heads=cfg.get("heads", 2),
        hidden_dim=cfg.get("hidden_dim", 64),
        cheb_order=cfg.get("cheb_order", 2),
        max_epochs=cfg.get("max_epochs", 1000),
        seed=_pick(cfg, seed, "seed", 7),
        use_attention=_pick(cfg, attention, "attention", True),
        use_temporal=_pick(cfg, temporal, "temporal", True),
        n_splits=_pick(cfg, splits, "splits", 8),
        normalize_features=cfg.get("normalize", True),
    )


def _read_text(path: str, what: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"{what} file not found: {path}")
    return p.read_text()


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _fail(exc: PortgraphError) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(2 if isinstance(exc, NumericError) else 1)


@click.group()
def main():
    """Classify waiting regions among ports extracted from AIS traffic."""


def _common(fn):
    fn = click.option("--config", "config_path", default=None,
                      help="Flat TOML config file.")(fn)
    fn = click.option("--out", "out_dir", default=".", show_default=True,
                      help="Directory for produced artifacts.")(fn)
    fn = click.option("--seed", type=int, default=None,
                      help="Override the config seed.")(fn)
    return fn


@main.command()
@_common
def synth(config_path, out_dir, seed):
    """Generate a synthetic scenario: ais.csv plus ports_truth.json."""
    try:
        cfg = load_config(config_path)
        scenario = scenario_config(cfg, seed)
        csv_text, truth = generate(scenario)
        _write_text(Path(out_dir) / "ais.csv", csv_text)
        _write_text(Path(out_dir) / "ports_truth.json", registry_to_json(truth))
    except PortgraphError as exc:
        _fail(exc)
    click.echo(f"wrote {out_dir}/ais.csv and {out_dir}/ports_truth.json")


@main.command("extract-ports")
@_common
@click.option("--input", "input_path", default=None, help="AIS CSV input.")
@click.option("--eps", type=float, default=None, help="Clustering radius, degrees.")
@click.option("--min-pts", type=int, default=None, help="Density threshold.")
@click.option("--sog-max", type=float, default=None,
              help="Stationary speed cutoff, knots.")
@click.option("--buffer", "buffer_deg", type=float, default=None,
              help="Hull buffer, degrees.")
@click.option("--labels-from", default=None,
              help="Registry whose labels transfer onto the extracted ports.")
def extract_ports_cmd(config_path, out_dir, seed, input_path, eps, min_pts,
                      sog_max, buffer_deg, labels_from):
    """Cluster stationary traffic into ports.json."""
    del seed
    try:
        cfg = load_config(config_path)
        path = input_path or str(Path(out_dir) / "ais.csv")
        messages = parse_ais_csv(_read_text(path, "AIS input"))
        params = DbscanParams(
            eps=float(_pick(cfg, eps, "eps", 0.005)),
            min_pts=_pick(cfg, min_pts, "min_pts", 20),
        )
        registry = extract_ports(
            messages,
            params=params,
            sog_max=float(_pick(cfg, sog_max, "sog_max", DEFAULT_SOG_MAX)),
            buffer=float(_pick(cfg, buffer_deg, "buffer", DEFAULT_BUFFER)),
        )
        if labels_from is not None:
            truth = registry_from_json(_read_text(labels_from, "label registry"))
            registry = transfer_labels(registry, truth)
        _write_text(Path(out_dir) / "ports.json", registry_to_json(registry))
    except PortgraphError as exc:
        _fail(exc)
    click.echo(f"wrote {out_dir}/ports.json ({len(registry)} ports)")


@main.command("annotate")
@_common
@click.option("--input", "input_path", default=None, help="AIS CSV input.")
@click.option("--ports", "ports_path", default=None, help="Port registry JSON.")
def annotate_cmd(config_path, out_dir, seed, input_path, ports_path):
    """Label each message with its containing port, writing annotated.csv."""
    del config_path, seed
    try:
        in_path = input_path or str(Path(out_dir) / "ais.csv")
        reg_path = ports_path or str(Path(out_dir) / "ports.json")
        messages = parse_ais_csv(_read_text(in_path, "AIS input"))
        registry = registry_from_json(_read_text(reg_path, "port registry"))
        labeled = annotate(messages, registry)
        _write_text(Path(out_dir) / "annotated.csv", annotated_to_csv(labeled))
    except PortgraphError as exc:
        _fail(exc)
    click.echo(f"wrote {out_dir}/annotated.csv")


@main.command("voyages")
@_common
@click.option("--input", "input_path", default=None, help="Annotated CSV input.")
def voyages_cmd(config_path, out_dir, seed, input_path):
    """Pair consecutive port visits into voyages.csv."""
    del config_path, seed
    try:
        in_path = input_path or str(Path(out_dir) / "annotated.csv")
        labeled = annotated_from_csv(_read_text(in_path, "annotated input"))
        visits = extract_visits(labeled)
        voyages = extract_voyages(visits, labeled)
        _write_text(Path(out_dir) / "voyages.csv", voyages_to_csv(voyages))
    except PortgraphError as exc:
        _fail(exc)
    click.echo(f"wrote {out_dir}/voyages.csv ({len(voyages)} voyages)")


@main.command("build-graphs")
@_common
@click.option("--input", "input_path", default=None, help="Annotated CSV input.")
@click.option("--ports", "ports_path", default=None, help="Labeled registry JSON.")
def build_graphs_cmd(config_path, out_dir, seed, input_path, ports_path):
    """Build one graph snapshot per day into snapshots.ndjson."""
    del config_path, seed
    try:
        in_path = input_path or str(Path(out_dir) / "annotated.csv")
        reg_path = ports_path or str(Path(out_dir) / "ports.json")
        labeled = annotated_from_csv(_read_text(in_path, "annotated input"))
        registry = registry_from_json(_read_text(reg_path, "port registry"))
        visits = extract_visits(labeled)
        voyages = extract_voyages(visits, labeled)
        snapshots = build_snapshots(voyages, labeled, registry)
        _write_text(Path(out_dir) / "snapshots.ndjson", snapshots_to_ndjson(snapshots))
    except PortgraphError as exc:
        _fail(exc)
    click.echo(f"wrote {out_dir}/snapshots.ndjson ({len(snapshots)} days)")


def _load_dataset(out_dir: str, input_path: str | None) -> TemporalDataset:
    path = input_path or str(Path(out_dir) / "snapshots.ndjson")
    return TemporalDataset(tuple(snapshots_from_ndjson(_read_text(path, "snapshots"))))


_train_flags = [
    click.option("--input", "input_path", default=None, help="Snapshot NDJSON input."),
    click.option("--dropout", type=float, default=None, help="Dropout probability."),
    click.option("--splits", type=int, default=None, help="Cross-validation folds."),
    click.option("--no-attention", "attention", flag_value=False, default=None,
                 help="Replace learned attention with uniform averaging."),
    click.option("--no-temporal", "temporal", flag_value=False, default=None,
                 help="Reset recurrent state at every snapshot."),
]


def _with_train_flags(fn):
    for deco in reversed(_train_flags):
        fn = deco(fn)
    return fn


@main.command("train")
@_common
@_with_train_flags
def train_cmd(config_path, out_dir, seed, input_path, dropout, splits,
              attention, temporal):
    """Cross-validated training; saves the last fold's checkpoint.json."""
    try:
        cfg = load_config(config_path)
        dataset = _load_dataset(out_dir, input_path)
        tconf = train_config(cfg, seed, dropout, splits, attention, temporal)
        results = train(dataset, tconf)
        best = results[-1]
        _write_text(Path(out_dir) / "checkpoint.json", checkpoint_to_json(best, tconf))
        _write_text(Path(out_dir) / "loss_history.csv", loss_history_csv(results))
    except PortgraphError as exc:
        _fail(exc)
    click.echo(
        f"wrote {out_dir}/checkpoint.json "
        f"(fold {best.fold}, best epoch {best.best_epoch}, "
        f"val loss {best.best_val_loss:.4f})"
    )


@main.command("evaluate")
@_common
@_with_train_flags
def evaluate_cmd(config_path, out_dir, seed, input_path, dropout, splits,
                 attention, temporal):
    """Cross-validated scores and a pooled confusion matrix."""
    try:
        cfg = load_config(config_path)
        dataset = _load_dataset(out_dir, input_path)
        tconf = train_config(cfg, seed, dropout, splits, attention, temporal)
        outcome = run_cv(dataset, tconf)
        _write_text(Path(out_dir) / f"confusion_{outcome.setting}.csv",
                    confusion_csv(outcome.confusion))
        _write_text(Path(out_dir) / "loss_history.csv",
                    loss_history_csv(outcome.fold_results))
    except PortgraphError as exc:
        _fail(exc)
    r = outcome.report
    click.echo(format_ablation_table([outcome]), nl=False)
    click.echo(f"wrote {out_dir}/confusion_{outcome.setting}.csv "
               f"(f-score {r.f_mu:.3f} +/- {r.f_sd:.3f})")


@main.command("ablate")
@_common
@_with_train_flags
def ablate_cmd(config_path, out_dir, seed, input_path, dropout, splits,
               attention, temporal):
    """Compare attention-only, temporal-only and combined settings."""
    del attention, temporal  # the sweep sets the architecture flags itself
    try:
        cfg = load_config(config_path)
        dataset = _load_dataset(out_dir, input_path)
        base = train_config(cfg, seed, dropout, splits)
        outcomes = ablation_report(dataset, base)
        _write_text(Path(out_dir) / "ablation.csv", ablation_csv(outcomes))
        for o in outcomes:
            _write_text(Path(out_dir) / f"confusion_{o.setting}.csv",
                        confusion_csv(o.confusion))
    except PortgraphError as exc:
        _fail(exc)
    click.echo(format_ablation_table(outcomes), nl=False)
    click.echo(f"wrote {out_dir}/ablation.csv")


@main.command("sweep-dropout")
@_common
@_with_train_flags
def sweep_dropout_cmd(config_path, out_dir, seed, input_path, dropout, splits,
                      attention, temporal):
    """Score the dropout grid {0, 0.1, 0.2, 0.3}."""
    del dropout  # the sweep sets dropout itself
    try:
        cfg = load_config(config_path)
        dataset = _load_dataset(out_dir, input_path)
        base = train_config(cfg, seed, None, splits, attention, temporal)
        sweep = dropout_sweep(dataset, base)
        _write_text(Path(out_dir) / "dropout_sweep.csv", dropout_csv(sweep))
    except PortgraphError as exc:
        _fail(exc)
    click.echo(f"wrote {out_dir}/dropout_sweep.csv")


@main.command("all")
@_common
@_with_train_flags
def all_cmd(config_path, out_dir, seed, input_path, dropout, splits,
            attention, temporal):
    """Full chain: synth through reports, in one deterministic run."""
    del input_path
    try:
        cfg = load_config(config_path)
        scenario = scenario_config(cfg, seed)
        out = Path(out_dir)

        csv_text, truth = generate(scenario)
        _write_text(out / "ais.csv", csv_text)
        _write_text(out / "ports_truth.json", registry_to_json(truth))
        click.echo("scenario generated")

        messages = parse_ais_csv(csv_text)
        del csv_text
        registry = transfer_labels(
            extract_ports(
                messages,
                params=DbscanParams(eps=float(cfg.get("eps", 0.005)),
                                    min_pts=cfg.get("min_pts", 20)),
                sog_max=float(cfg.get("sog_max", DEFAULT_SOG_MAX)),
                buffer=float(cfg.get("buffer", DEFAULT_BUFFER)),
            ),
            truth,
        )
        _write_text(out / "ports.json", registry_to_json(registry))
        click.echo(f"extracted {len(registry)} ports")

        labeled = annotate(messages, registry)
        del messages
        _write_text(out / "annotated.csv", annotated_to_csv(labeled))
        visits = extract_visits(labeled)
        voyages = extract_voyages(visits, labeled)
        _write_text(out / "voyages.csv", voyages_to_csv(voyages))
        snapshots = build_snapshots(voyages, labeled, registry)
        del labeled
        _write_text(out / "snapshots.ndjson", snapshots_to_ndjson(snapshots))
        click.echo(f"built {len(snapshots)} snapshots, {len(voyages)} voyages")

        dataset = TemporalDataset(tuple(snapshots))
        base = train_config(cfg, seed, dropout, splits, attention, temporal)
        results = train(dataset, base)
        _write_text(out / "checkpoint.json", checkpoint_to_json(results[-1], base))
        click.echo("trained; running reports")

        outcomes = ablation_report(dataset, base)
        _write_text(out / "ablation.csv", ablation_csv(outcomes))
        for o in outcomes:
            _write_text(out / f"confusion_{o.setting}.csv", confusion_csv(o.confusion))
        full = outcomes[-1]
        _write_text(out / "loss_history.csv", loss_history_csv(full.fold_results))
        sweep = dropout_sweep(dataset, base)
        _write_text(out / "dropout_sweep.csv", dropout_csv(sweep))
    except PortgraphError as exc:
        _fail(exc)
    click.echo(format_ablation_table(outcomes), nl=False)
    click.echo(f"artifacts in {out_dir}")


if __name__ == "__main__":
    main()
