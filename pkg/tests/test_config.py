from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qikt.errors import ParseError, ValidationError
from qikt.harness.config import ScenarioConfig, dump_config, load_config, parse_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

MINIMAL = """\
scenario = free_gaussian
[benchmark]
kind = free_gaussian
"""


def test_minimal_config_gets_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg == ScenarioConfig("free_gaussian", "free_gaussian")
    assert (cfg.grid_n, cfg.grid_extent, cfg.T_o, cfg.n_particles) == (512, 20.0, 0.75, 100000)
    assert cfg.checkpoints == (0.5, 1.0, 2.0)
    assert (cfg.dt_ode, cfg.t_end, cfg.closure, cfg.frozen_T0) == (1e-3, 4.0, "maxwellian", False)


def test_shipped_config_is_the_default_scenario():
    assert load_config(CONFIGS / "free_gaussian.ini") == parse_config(MINIMAL)


def test_negative_temperature_names_the_key():
    with pytest.raises(ValidationError, match="T_o must be > 0") as exc:
        parse_config(MINIMAL + "[temps]\nT_o = -1\n")
    assert exc.value.key == "temps.T_o"


def test_duplicate_key_reports_position():
    with pytest.raises(ParseError) as exc:
        parse_config("scenario = free_gaussian\n[grid]\nn = 256\n  n = 512\n")
    assert (exc.value.line, exc.value.column) == (4, 3)


def test_duplicate_across_spellings():
    with pytest.raises(ParseError) as exc:
        parse_config("scenario = free_gaussian\ngrid.n = 256\n[grid]\nn = 512\n")
    assert exc.value.line == 4


def test_malformed_line_and_bad_bytes():
    with pytest.raises(ParseError) as exc:
        parse_config("scenario = free_gaussian\njust words\n")
    assert exc.value.line == 2
    with pytest.raises(ParseError) as exc:
        parse_config(b"scenario = free_gaussian\nx = \xff\n")
    assert (exc.value.line, exc.value.column) == (2, 5)


@pytest.mark.parametrize("text,key", [
    (MINIMAL + "[grid]\nsize = 3\n", "grid.size"),
    ("[benchmark]\nkind = free_gaussian\n", "scenario"),
    ("scenario = custom\n", "benchmark.kind"),
    (MINIMAL + "[grid]\nn = 500\n", "grid.n"),
    ("scenario = free_gaussian\n[benchmark]\nomega = zero\n", "benchmark.omega"),
    ("closure = bgk\n" + MINIMAL, "closure"),
    (MINIMAL + "[particles]\nn = 10\n", "particles.n"),
    (MINIMAL + "[time]\nt_end = 1.0\n", "particles.t_end"),
    (MINIMAL + "[time]\ndt_ode = 0.3\n", "time.dt_ode"),
    (MINIMAL + "[diagnostics]\nfrozen_T0 = maybe\n", "diagnostics.frozen_T0"),
    (MINIMAL + "[grid]\ndim = 2\n[fields]\nsource = solver\n", "fields.source"),
])
def test_validation_errors(text, key):
    with pytest.raises(ValidationError) as exc:
        parse_config(text)
    assert exc.value.key == key


def test_scenario_name_implies_benchmark():
    cfg = parse_config("scenario = harmonic_coherent\n")
    assert cfg.kind == "harmonic_coherent"


def test_section_and_dotted_spellings_agree():
    a = parse_config(MINIMAL + "[time]\ndt_ode = 0.002\n[diagnostics]\nfrozen_T0 = yes\n")
    b = parse_config("scenario = free_gaussian\ntime.dt_ode = 0.002\ndiagnostics.frozen_T0 = true\n"
                     "benchmark.kind = free_gaussian\n")
    assert a == b
    assert a.config_hash == b.config_hash


def test_hash_ignores_output_dir_only():
    cfg = parse_config(MINIMAL)
    assert cfg.with_output("/tmp/x").config_hash == cfg.config_hash
    assert cfg.with_seed(1).config_hash != cfg.config_hash
    assert len(cfg.config_hash) == 16


configs = st.builds(
    lambda kind, n, T_o, seed, frozen, closure, pts: ScenarioConfig(
        kind, kind, grid_n=n, T_o=T_o, seed=seed, frozen_T0=frozen, closure=closure, checkpoints=pts),
    st.sampled_from(["free_gaussian", "harmonic_ground", "harmonic_coherent"]),
    st.sampled_from([64, 256, 1024]),
    st.floats(1e-6, 1e3, allow_nan=False),
    st.integers(0, 2**32),
    st.booleans(),
    st.sampled_from(["maxwellian", "empirical"]),
    st.lists(st.floats(0.01, 2.0), min_size=1, max_size=4).map(tuple),
)


@settings(max_examples=60, deadline=None)
@given(configs)
def test_dump_round_trip(cfg):
    back = parse_config(dump_config(cfg))
    assert back == cfg
    assert back.config_hash == cfg.config_hash
