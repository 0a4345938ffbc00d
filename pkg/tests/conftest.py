import numpy as np
import pytest

from emgforce import synth, training
from emgforce.config import TrainConfig


@pytest.fixture(scope="session")
def small_subject():
    """One synthetic subject (seed 42 protocol) with LN and DD checkpoints."""
    cohort = synth.generate_cohort(1, reps=3, duration_s=2.0, seed=42)
    records = cohort.records
    data = training.build_subject_data(records)
    train_val, test = training.split_records(data.n_records, seed=42)
    ckpts = {}
    for kind in ("ln", "dd"):
        ckpts[kind], _ = training.train(
            data, kind, TrainConfig(), train_val_records=train_val
        )
    mixing = synth.subject_mixing(synth.mixing_matrix(), 42, 0, 0.2)
    return {
        "records": records,
        "data": data,
        "train_val": train_val,
        "test": test,
        "test_records": [records[i] for i in test],
        "ckpts": ckpts,
        "mixing": mixing,
    }


@pytest.fixture(scope="session")
def ln_ckpt_file(small_subject, tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "ln.ckpt"
    training.save_checkpoint(small_subject["ckpts"]["ln"], path)
    return path
