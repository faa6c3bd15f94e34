import json

import jsonlines
import numpy as np


def read_jsonl(path):
    with jsonlines.open(path) as reader:
        return list(reader)


def write_jsonl(records, path):
    with jsonlines.open(path, mode="w") as writer:
        for r in records:
            writer.write(r)


def write_json(data, path):
    with open(path, "w", encoding="utf-8") as w:
        json.dump(data, w, indent=4, ensure_ascii=False)


def trial_seed_sequence(master_seed, index):
    # Index-derived, so a trial draws the same numbers whichever worker runs it
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))


def trial_rng(master_seed, index):
    return np.random.default_rng(trial_seed_sequence(master_seed, index))


def trial_seed(master_seed, index):
    return int(trial_seed_sequence(master_seed, index).generate_state(1, dtype=np.uint64)[0])
