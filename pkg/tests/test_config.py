from pathlib import Path

import pytest

from rekbqa.config import ExperimentConfig, load_config, parse_config, synthetic_config

CONFIGS = Path(__file__).parent.parent / "configs"


def test_defaults_match_published_settings():
    cfg = ExperimentConfig()
    assert (cfg.lr, cfg.batch_size, cfg.dropout, cfg.num_step) == (8e-4, 40, 0.3, 3)
    assert (cfg.entity_dim, cfg.word_dim, cfg.max_candidates, cfg.tau) == (50, 300, 2000, 2000)
    assert (cfg.h1, cfg.h2, cfg.rho, cfg.lam) == (1.5, 1.2, 0.5, 0.5)
    assert (cfg.ppr_alpha, cfg.ppr_epsilon) == (0.15, 1e-4)


def test_synthetic_preset_overrides_only_schedule():
    base, syn = ExperimentConfig(), synthetic_config()
    changed = {k for k in vars(base) if getattr(base, k) != getattr(syn, k)}
    assert changed == {"lr", "epochs"}
    assert synthetic_config(seed=4).seed == 4


def test_dumps_roundtrip():
    cfg = synthetic_config(uniform_ppr=True, lam=0.3, stopwords="x.txt")
    assert parse_config(cfg.dumps()) == cfg


def test_shipped_config_is_synthetic_preset():
    assert load_config(CONFIGS / "synthetic.cfg") == synthetic_config()


def test_parse_overrides_base_and_comments():
    cfg = parse_config("epochs = 7  # short\n# comment\nuse_serr = off\n", synthetic_config())
    assert cfg.epochs == 7 and cfg.use_serr is False and cfg.lr == 5e-3


def test_unknown_key_and_bad_values():
    with pytest.raises(KeyError, match="learning_rate"):
        parse_config("learning_rate = 1\n")
    with pytest.raises(ValueError):
        parse_config("use_serr = maybe\n")
    with pytest.raises(ValueError):
        parse_config("epochs = many\n")


def test_component_views():
    cfg = ExperimentConfig(synthetic_two_hop_share=0.0)
    assert cfg.synthetic().hop_weights == {1: 1.0}
    assert cfg.reasoner().num_step == 3
    assert cfg.retrieval().max_candidates == 2000
    assert cfg.rerank().h1 == 1.5
