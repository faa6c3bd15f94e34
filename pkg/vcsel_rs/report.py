import datetime

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from vcsel_rs.ratesplit import RS  # noqa: E402
from vcsel_rs.scenario import SweepResult  # noqa: E402
from vcsel_rs.util import write_json, write_jsonl  # noqa: E402


SWEEP_COLUMNS = [
    "param", "scheme", "groups", "mean_user_rate_bps", "std",
    "ci95_lo", "ci95_hi", "sum_rate_bps", "trials", "failures"
]
FLOAT_FORMAT = "%.8e"

PARAM_LABELS = {
    "users": "param (users)",
    "beam_waist_m": "param (beam_waist_m)",
    "groups": "param (groups)",
}


def sweep_frame(sweep: SweepResult) -> pd.DataFrame:
    records = [{column: getattr(p, column) for column in SWEEP_COLUMNS} for p in sweep.points]
    frame = pd.DataFrame(records, columns=SWEEP_COLUMNS)
    return frame.astype({"param": float, "groups": int, "trials": int, "failures": int})


def write_sweep_csv(sweep: SweepResult, path):
    sweep_frame(sweep).to_csv(path, index=False, float_format=FLOAT_FORMAT)


def read_sweep_csv(path) -> pd.DataFrame:
    return pd.read_csv(path, dtype={"scheme": str, "groups": int, "trials": int, "failures": int})


def write_channel_csv(frame: pd.DataFrame, path):
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)


def write_trials(sweep: SweepResult, path):
    records = []
    for value, trials in sweep.raw_trials.items():
        for trial in trials:
            record = trial.to_record()
            record[sweep.parameter] = value
            records.append(record)
    write_jsonl(records, path)


def _curve_label(scheme, groups):
    return "RS" if scheme == RS else "HRS (G={})".format(groups)


def plot_sweep(sweep: SweepResult, path, title=None):
    """Render one mean user rate curve per scheme, with 95% CI bands, as a self-contained SVG."""
    frame = sweep_frame(sweep)
    with plt.rc_context({"svg.fonttype": "path", "svg.hashsalt": "vcsel-rs"}):
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for (scheme, groups), curve in frame.groupby(["scheme", "groups"], sort=False):
            ax.plot(curve["param"], curve["mean_user_rate_bps"], marker="o", label=_curve_label(scheme, groups))
            ax.fill_between(curve["param"], curve["ci95_lo"], curve["ci95_hi"], alpha=0.2)
        ax.set_xlabel(PARAM_LABELS.get(sweep.parameter, "param"))
        ax.set_ylabel("mean_user_rate_bps")
        if title:
            ax.set_title(title)
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def build_manifest(command, config_values, master_seed, outputs, tool_version):
    return {
        "tool_version": tool_version,
        "command": command,
        "master_seed": master_seed,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "outputs": [str(o) for o in outputs],
        "config": config_values,
    }


def write_manifest(manifest, path):
    write_json(manifest, path)
