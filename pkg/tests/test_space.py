from collections import Counter
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from flashnas import DEFAULT_SPEC, ArchConfig, DataError, DomainError, InfeasibleError, SpaceSpec
from flashnas.space import (cell_widths, concat_counts, feature_map_sizes, iter_space, realize_layers,
                            sample_uniform, search_space_size, search_space_size_closed_form, validate)

EXAMPLE = ArchConfig(1, 3, 5, (5, 10, 20))


def naive_count(spec):
    """Enumerate the bounding box and keep what validates."""
    n = 0
    for w_m, n_c, d_c in product(spec.w_m_range, spec.n_c_range, spec.d_c_range):
        ceil = spec.ceilings(w_m, n_c, d_c)
        for t in product(*(range(c + 1) for c in ceil)):
            if validate(ArchConfig(w_m, n_c, d_c, t), spec).ok:
                n += 1
    return n


small_specs = st.builds(
    SpaceSpec,
    w_m_min=st.integers(1, 2), w_m_max=st.integers(1, 2),
    d_c_min=st.integers(3, 5), d_c_max=st.integers(3, 5),
    n_c=st.integers(1, 3),
    base_widths=st.just((1, 2, 3)),
    t1_min=st.integers(0, 3),
)


@pytest.mark.parametrize("w_m, expected", [(1, [16, 32, 64]), (3, [48, 96, 192]), (2, [32, 64, 128])])
def test_cell_widths(w_m, expected):
    assert cell_widths(w_m) == expected


def test_cell_widths_out_of_range():
    with pytest.raises(DomainError):
        cell_widths(4)


def test_validate_examples():
    assert validate(EXAMPLE).ok
    bad = validate(ArchConfig(1, 3, 5, (5, 9, 20)))
    assert not bad.ok and any("t_2 < 2·t_1" in v for v in bad.violations)
    ceil = validate(ArchConfig(1, 3, 5, (5, 10, 200)))
    assert any("t_3 > 64·1·(5−2)=192" in v for v in ceil.violations)


def test_validate_lists_every_violation():
    report = validate(ArchConfig(9, 2, 40, (1, 1)))
    assert len(report.violations) == 5  # w_m, n_c, d_c, t_1 floor, coupling


def test_arch_record_round_trip():
    rec = EXAMPLE.to_record()
    assert rec["t"] == "5;10;20"
    assert ArchConfig.from_record(rec) == EXAMPLE
    assert ArchConfig.from_json('{"w_m": 1, "n_c": 3, "d_c": 5, "t": [5, 10, 20]}') == EXAMPLE


def test_arch_rejects_mismatched_t():
    with pytest.raises(DomainError):
        ArchConfig(1, 3, 5, (5, 10))
    with pytest.raises(DataError):
        ArchConfig.from_record({"w_m": "x", "d_c": 5, "t": "1;2"})


def test_spec_from_dict_rejects_unknown_keys():
    with pytest.raises(DataError):
        SpaceSpec.from_dict({"w_m_min": 1, "bogus": 2})
    assert SpaceSpec.from_dict(DEFAULT_SPEC.to_dict()) == DEFAULT_SPEC


def test_default_size_matches_closed_form():
    assert search_space_size() == search_space_size_closed_form() == 31_966_698_504


def test_empty_d_c_range_has_size_zero():
    assert search_space_size(SpaceSpec(d_c_min=6, d_c_max=5)) == 0


def test_reduced_spec_matches_enumeration():
    spec = SpaceSpec(w_m_min=1, w_m_max=1, d_c_min=5, d_c_max=6, base_widths=(2, 4, 8), t1_min=1)
    assert search_space_size(spec) == naive_count(spec) == sum(1 for _ in iter_space(spec))


@settings(max_examples=40, deadline=None)
@given(small_specs)
def test_size_equals_enumeration(spec):
    assert search_space_size(spec) == naive_count(spec)


@settings(max_examples=40, deadline=None)
@given(small_specs)
def test_iter_space_is_sorted_and_valid(spec):
    configs = list(iter_space(spec))
    assert configs == sorted(configs)
    assert len(set(configs)) == len(configs) == search_space_size(spec)
    assert all(validate(c, spec).ok for c in configs)


def test_sample_uniform_valid_and_deterministic():
    a = sample_uniform(DEFAULT_SPEC, seed=7, n=100)
    assert len(a) == 100 and all(validate(c).ok for c in a)
    assert a == sample_uniform(DEFAULT_SPEC, seed=7, n=100)
    assert sample_uniform(DEFAULT_SPEC, seed=7, n=0) == []


def test_sample_uniform_chi_square():
    spec = SpaceSpec(w_m_min=1, w_m_max=2, d_c_min=4, d_c_max=5, base_widths=(1, 2, 4), t1_min=0)
    space = list(iter_space(spec))
    n = 40 * len(space)
    counts = Counter(sample_uniform(spec, seed=3, n=n))
    assert set(counts) <= set(space)
    observed = np.array([counts[c] for c in space])
    assert chisquare(observed).pvalue > 1e-3


def test_sample_uniform_with_cell_count_range():
    spec = SpaceSpec(w_m_min=1, w_m_max=1, d_c_min=4, d_c_max=4, n_c=(1, 2), base_widths=(1, 2), t1_min=0)
    space = list(iter_space(spec))
    counts = Counter(sample_uniform(spec, seed=5, n=60 * len(space)))
    assert chisquare(np.array([counts[c] for c in space])).pvalue > 1e-3


def test_sample_uniform_empty_space():
    with pytest.raises(InfeasibleError):
        sample_uniform(SpaceSpec(d_c_min=6, d_c_max=5), n=1)


def test_realize_layers_example():
    layers = realize_layers(EXAMPLE)
    assert len(layers) == 15
    assert [l.h for l in layers] == [32] * 5 + [16] * 5 + [8] * 5
    first = layers[:5]
    assert [l.concat_count for l in first] == [0, 0, 5, 5, 5]
    assert first[2].n_if == 21
    assert first[0].n_if == 3 and layers[5].n_if == 16 and layers[10].n_if == 32


def test_feature_map_halving_rounds_up():
    assert feature_map_sizes(4, 33, 7) == [(33, 7), (17, 4), (9, 2), (5, 1)]


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 64), st.integers(0, 40), st.integers(0, 500))
def test_concat_sum_matches_formula(w_c, d_c, t_c):
    expected = sum(min((i - 1) * w_c, t_c) for i in range(2, d_c))
    assert sum(concat_counts(w_c, d_c, t_c)) == expected
