import time
from types import SimpleNamespace

import numpy as np
import pytest

from harssl import encoder, ingest, pairing
from harssl.evalkit import subject_split

DESK_SEED = 0
DESK_STEPS = 2000
DESK_BATCH_PAIRS = 32


@pytest.fixture(scope="session")
def desk_corpus():
    """Seeded 4-class synthetic corpus, 8 subjects x 200 s per class."""
    spec = ingest.SynthSpec(ingest.DEFAULT_SYNTH_CLASSES, subjects=8, seconds_per_class=200, seed=DESK_SEED)
    windows = ingest.windows_from_series(ingest.synth_corpus(spec))
    train, test = subject_split(windows, "held_out_subjects", DESK_SEED, 0.25)
    return SimpleNamespace(spec=spec, windows=windows, train=train, test=test)


@pytest.fixture(scope="session")
def desk_pretrain(desk_corpus):
    """One 2000-step pre-training run at b=32, shared by the tests that need it."""
    cfg = encoder.EncoderConfig(batch_pairs=DESK_BATCH_PAIRS, steps=DESK_STEPS, seed=DESK_SEED, log_every=100)
    pcfg = pairing.PairingConfig(batch_pairs=DESK_BATCH_PAIRS, seed=DESK_SEED)
    t0 = time.perf_counter()
    result = encoder.pretrain(pairing.build_corpus_index(desk_corpus.train), cfg, pcfg)
    return SimpleNamespace(result=result, seconds=time.perf_counter() - t0)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
