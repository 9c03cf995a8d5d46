import pytest

from lcplab import benaloh, lcp_model
from lcplab.errors import DecryptionError, DomainError, ParameterError
from lcplab.lcp_model import DimensionSpec, INTERVAL


def test_classify_interval(age):
    assert lcp_model.classify(0, age) == 1
    assert lcp_model.classify(17, age) == 1
    assert lcp_model.classify(18, age) == 2
    assert lcp_model.classify(119, age) == 5
    with pytest.raises(DomainError):
        lcp_model.classify(120, age)
    with pytest.raises(DomainError):
        lcp_model.classify(-1, age)


def test_classify_closed_upper():
    spec = DimensionSpec(name='safety', kind=INTERVAL, boundaries=(0.0, 0.5, 1.0),
                         closed_upper=True)
    assert lcp_model.classify(1.0, spec) == 2
    assert spec.labels() == ['[0.0,0.5)', '[0.5,1.0]']


def test_classify_discrete(gender):
    assert gender.b == 3
    assert lcp_model.classify('male', gender) == 2
    assert lcp_model.classify('unstated', gender) == 3
    assert gender.labels() == ['female', 'male', 'other|unstated']
    with pytest.raises(DomainError):
        lcp_model.classify('robot', gender)


@pytest.mark.parametrize('kind, boundaries', [
    (INTERVAL, (0,)),
    (INTERVAL, (0, 10, 10)),
    ('discrete', ('a', ('a', 'b'))),
    ('ordinal', (0, 1)),
])
def test_dimension_spec_validation(kind, boundaries):
    with pytest.raises(ParameterError):
        DimensionSpec(name='x', kind=kind, boundaries=boundaries)


def test_dimension_from_mapping():
    spec = DimensionSpec.from_mapping({'name': 'gender', 'type': 'discrete',
                                       'boundaries': ['f', 'm', ['o', 'u']]})
    assert spec.boundaries == ('f', 'm', ('o', 'u'))


def test_init_counters_decrypt_to_zero_counts(keys, age, rng):
    pk, sk = keys
    counters = lcp_model.init_counters(pk, age, rng)
    pairs = lcp_model.decrypt_counters(pk, sk, counters)
    assert pairs == [(1, 0), (2, 0), (3, 0), (4, 0), (5, 0)]


def test_counters_need_room_in_plaintext_space(toy_keys, age, rng):
    pk, _ = toy_keys
    with pytest.raises(ParameterError):
        lcp_model.init_counters(pk, age, rng)


def test_increments_build_the_histogram(keys, age, rng):
    pk, sk = keys
    counters = lcp_model.init_counters(pk, age, rng)
    values = [25, 25, 40, 70]
    for value in values:
        counters, witness = lcp_model.reencrypt_and_increment(
            pk, counters, lcp_model.classify(value, age), rng)
        assert witness.j == lcp_model.classify(value, age)
    assert counters.checkins == 4
    counts = lcp_model.histogram(lcp_model.decrypt_counters(pk, sk, counters))
    assert counts == [0, 2, 1, 0, 1]
    assert counts == lcp_model.plaintext_histogram([2, 2, 3, 5], 5)


def test_reencryption_changes_every_record(keys, age, rng):
    pk, _ = keys
    c_prev = lcp_model.init_counters(pk, age, rng)
    c_next, _ = lcp_model.reencrypt_and_increment(pk, c_prev, 3, rng)
    for before, after in zip(c_prev.counters, c_next.counters):
        assert before.count_part != after.count_part
        assert before.index_part != after.index_part


def test_increment_index_out_of_range(keys, age, rng):
    pk, _ = keys
    counters = lcp_model.init_counters(pk, age, rng)
    with pytest.raises(DomainError):
        lcp_model.reencrypt_and_increment(pk, counters, 6, rng)


def test_corrupted_index_record_is_detected(keys, age, rng):
    pk, sk = keys
    counters = lcp_model.init_counters(pk, age, rng)
    record = counters[1]
    shifted = lcp_model.EncryptedCounter(count_part=record.count_part,
                                         index_part=benaloh.increment(pk, record.index_part))
    broken = lcp_model.CounterSet(dimension='age', counters=(counters[0], shifted)
                                  + counters.counters[2:])
    with pytest.raises(DecryptionError):
        lcp_model.decrypt_counters(pk, sk, broken)


def test_storage_form_is_two_ciphertexts_per_subrange(keys, age, rng):
    pk, _ = keys
    counters = lcp_model.init_counters(pk, age, rng)
    data = lcp_model.counter_set_to_bytes(pk, counters)
    assert len(data) == 2 * 5 * 32
    values = [int.from_bytes(data[i:i + 32], 'big') for i in range(0, len(data), 32)]
    assert lcp_model.counter_set_from_values('age', values) == counters


@pytest.mark.parametrize('shift', ['plus_n', 'zero', 'factor'])
def test_wire_values_must_be_units(keys, age, rng, shift):
    pk, sk = keys
    counters = lcp_model.init_counters(pk, age, rng)
    values = [v for record in counters.counters
              for v in (record.count_part.value, record.index_part.value)]
    values[0] = {'plus_n': values[0] + pk.n, 'zero': 0, 'factor': sk.p}[shift]
    assert lcp_model.counter_set_from_values('age', values).b == 5
    with pytest.raises(DomainError):
        lcp_model.counter_set_from_values('age', values, pk=pk)
