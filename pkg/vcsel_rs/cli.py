import json
import logging
import os
import sys

import fire
import numpy as np

from vcsel_rs import __version__
from vcsel_rs.channel import build_branch_gains, channel_to_frame, select_branch
from vcsel_rs.config import load_config, to_scenario_config
from vcsel_rs.errors import AggregationError, PrecodingError, ValidationError
from vcsel_rs.geometry import default_scene
from vcsel_rs.ratesplit import HRS, RS
from vcsel_rs.report import (
    build_manifest,
    plot_sweep,
    write_channel_csv,
    write_manifest,
    write_sweep_csv,
    write_trials
)
from vcsel_rs.scenario import FOOTPRINT_PLACEMENTS, place_users, sweep_groups, sweep_users, sweep_waist, visible_footprints
from vcsel_rs.util import trial_rng


logger = logging.getLogger("vcsel_rs")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

SCHEME_FLAGS = {"rs": [RS], "hrs": [HRS], "both": [RS, HRS]}


def _setup_logging(verbose):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )


def _flag_overrides(seed=None, trials=None, scheme=None, groups=None, keep_trials=None, workers=None):
    overrides = {}
    if seed is not None:
        overrides["scenario.master_seed"] = seed
    if trials is not None:
        overrides["scenario.trials"] = trials
    if scheme is not None:
        if scheme not in SCHEME_FLAGS:
            raise ValidationError("--scheme must be one of {}, got {!r}".format(sorted(SCHEME_FLAGS), scheme))
        overrides["scenario.schemes"] = SCHEME_FLAGS[scheme]
    if groups is not None:
        overrides["hrs.groups"] = list(groups) if isinstance(groups, (list, tuple)) else groups
    if keep_trials:
        overrides["scenario.keep_trials"] = True
    if workers is not None:
        overrides["scenario.workers"] = workers
    return overrides


def _write_sweep_outputs(command, sweep, values, out_dir, no_plot):
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "{}.csv".format(command))
    write_sweep_csv(sweep, csv_path)
    outputs = [csv_path]
    if not no_plot:
        svg_path = os.path.join(out_dir, "{}.svg".format(command))
        plot_sweep(sweep, svg_path, title=command)
        outputs.append(svg_path)
    if values["scenario.keep_trials"]:
        trials_path = os.path.join(out_dir, "{}.trials.jsonl".format(command))
        write_trials(sweep, trials_path)
        outputs.append(trials_path)
    manifest_path = os.path.join(out_dir, "{}.manifest.json".format(command))
    manifest = build_manifest(command, values, values["scenario.master_seed"], outputs, __version__)
    write_manifest(manifest, manifest_path)
    for path in outputs:
        logger.info("Wrote %s", path)
    if sweep.skipped:
        logger.info("%d sweep points skipped", len(sweep.skipped))


def cmd_channel(
    config=None,
    seed=None,
    users_file=None,
    out_dir="output",
    verbose=False
):
    _setup_logging(verbose)
    values = load_config(config, _flag_overrides(seed=seed))
    scenario = to_scenario_config(values)
    scene = default_scene(scenario.scene)

    if users_file:
        with open(users_file, encoding="utf-8") as r:
            users = np.asarray(json.load(r), dtype=float).reshape(-1, 3)
        if len(users) == 0:
            raise ValidationError("users file {} contains no users".format(users_file))
    else:
        footprints = None
        if scenario.placement.variant in FOOTPRINT_PLACEMENTS:
            footprints = visible_footprints(scene, scenario.gain_model)
        rng = trial_rng(scenario.master_seed, 0)
        users = place_users(scene.room, scenario.users, scenario.placement, rng, footprints)

    channel = select_branch(build_branch_gains(scene, users, scenario.gain_model), scenario.branch_policy)
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "channel.csv")
    write_channel_csv(channel_to_frame(channel), csv_path)
    manifest = build_manifest("channel", values, scenario.master_seed, [csv_path], __version__)
    write_manifest(manifest, os.path.join(out_dir, "channel.manifest.json"))
    logger.info("Wrote %s (%d users x %d elements)", csv_path, channel.user_count, channel.element_count)


def _sweep_command(command, run_sweep, config, seed, trials, out_dir, scheme, groups, keep_trials, no_plot,
                   workers, verbose):
    _setup_logging(verbose)
    overrides = _flag_overrides(seed, trials, scheme, groups, keep_trials, workers)
    values = load_config(config, overrides)
    sweep = run_sweep(to_scenario_config(values), values)
    _write_sweep_outputs(command, sweep, values, out_dir, no_plot)


def cmd_run(config=None, seed=None, trials=None, out_dir="output", scheme=None, groups=None, keep_trials=False,
            no_plot=False, workers=None, verbose=False):
    """Evaluate the configured schemes at scenario.users over all trials."""
    _sweep_command(
        "run", lambda scenario, values: sweep_users(scenario, [scenario.users]),
        config, seed, trials, out_dir, scheme, groups, keep_trials, no_plot, workers, verbose
    )


def cmd_sweep_users(config=None, seed=None, trials=None, out_dir="output", scheme=None, groups=None,
                    keep_trials=False, no_plot=False, workers=None, verbose=False):
    _sweep_command(
        "sweep-users", lambda scenario, values: sweep_users(scenario, values["sweep.users"]),
        config, seed, trials, out_dir, scheme, groups, keep_trials, no_plot, workers, verbose
    )


def cmd_sweep_waist(config=None, seed=None, trials=None, out_dir="output", scheme=None, groups=None,
                    keep_trials=False, no_plot=False, workers=None, verbose=False):
    _sweep_command(
        "sweep-waist",
        lambda scenario, values: sweep_waist(scenario, [w * 1e-6 for w in values["sweep.beam_waist_um"]]),
        config, seed, trials, out_dir, scheme, groups, keep_trials, no_plot, workers, verbose
    )


def cmd_sweep_groups(config=None, seed=None, trials=None, out_dir="output", keep_trials=False, no_plot=False,
                     workers=None, verbose=False):
    _sweep_command(
        "sweep-groups", lambda scenario, values: sweep_groups(scenario, values["sweep.groups"]),
        config, seed, trials, out_dir, None, None, keep_trials, no_plot, workers, verbose
    )


COMMANDS = {
    "channel": cmd_channel,
    "run": cmd_run,
    "sweep_users": cmd_sweep_users,
    "sweep_waist": cmd_sweep_waist,
    "sweep_groups": cmd_sweep_groups,
}


def run(argv=None):
    try:
        fire.Fire(COMMANDS, command=argv, name="vcsel-rs")
    except ValidationError as e:
        logger.error("%s", e)
        return EXIT_VALIDATION
    except (PrecodingError, AggregationError, OSError) as e:
        logger.error("%s", e)
        return EXIT_RUNTIME
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
