from types import SimpleNamespace

import pytest

from nextaction import ingest, synth


@pytest.fixture(scope="session")
def default_data(tmp_path_factory):
    """The default synthetic corpus, generated and ingested once per session."""
    root = tmp_path_factory.mktemp("default-corpus")
    cfg = synth.SynthConfig()
    outputs = synth.generate(cfg, root)
    corpus, stats = ingest.ingest_files(
        outputs.events_path, outputs.roster_path, min_count=40
    )
    return SimpleNamespace(
        cfg=cfg,
        outputs=outputs,
        corpus=corpus,
        stats=stats,
        certified=ingest.filter_cohort(corpus, certified=True),
        uncertified=ingest.filter_cohort(corpus, certified=False),
    )
