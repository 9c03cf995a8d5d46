import pytest

from lcplab import bench, lcp_model
from lcplab.errors import ParameterError


def test_formulas():
    assert bench.comm_bits(1, 64) == 448
    assert bench.storage_bits(5, 512) == 5120
    with pytest.raises(ParameterError):
        bench.comm_bits(0, 64)
    with pytest.raises(ParameterError):
        bench.storage_bits(5, 16)


def test_accounting_matches_formulas():
    table = bench.accounting_table(subranges=(1, 20), moduli=(1024,), seed=3)
    row = table[table['B'] == 20].iloc[0]
    assert row['comm_formula_bytes'] == 17920
    assert row['storage_formula_bytes'] == 5120
    assert row['storage_measured_bytes'] == 5120
    assert (table['comm_error_pct'] <= 2.0).all()


def test_sampled_rounds_average_near_7bn(keys, age, rng):
    pk, _ = keys
    c_prev = lcp_model.init_counters(pk, age, rng)
    c_next, witness = lcp_model.reencrypt_and_increment(pk, c_prev, 2, rng)
    bits = bench.sampled_round_bits(pk, c_prev, c_next, witness, 200, rng)
    expected = 7 * age.b * pk.modulus_bits
    # each round is 8BN or 6BN
    assert 6 * age.b * pk.modulus_bits <= bits <= 8 * age.b * pk.modulus_bits
    assert bits == pytest.approx(expected, rel=0.1)


def test_strictly_increasing():
    assert bench.strictly_increasing([1.0, 2.0, 3.5])
    assert not bench.strictly_increasing([1.0, 1.0, 2.0])


def test_linear_fit():
    fit = bench.linear_fit([1, 2, 3, 4], [3, 5, 7, 9])
    assert fit['slope'] == pytest.approx(2.0)
    assert fit['intercept'] == pytest.approx(1.0)
    assert fit['r_squared'] == pytest.approx(1.0)


def test_bench_argument_checks():
    with pytest.raises(ParameterError):
        bench.bench('setup', [64], repeats=3)
    with pytest.raises(ParameterError):
        bench.bench('teleport', [64])


def test_setup_bench_table():
    report = bench.bench('setup', [64, 128], repeats=10, seed=1)
    assert list(report.table['modulus_bits']) == [64, 128]
    assert (report.table['median_s'] > 0).all()
    assert 'strictly_increasing' in report.annotations
    assert 'python' in report.environment


def test_zkctr_bench_has_rounds_sweep():
    report = bench.bench('zkctr', [64, 128], repeats=10, seed=2, rounds_sweep=(2, 4, 8))
    rounds = report.table[report.table['sweep'] == 'rounds']
    assert list(rounds['rounds']) == [2, 4, 8]
    assert {'slope', 'r_squared', 'prover_increasing'} <= set(report.annotations)
    modulus = report.table[report.table['sweep'] == 'modulus']
    assert (modulus['comm_bits'] >= 6 * 5 * modulus['modulus_bits']).all()


@pytest.mark.slow
def test_end2end_bench():
    report = bench.bench('end2end', [256], repeats=10, seed=3)
    row = report.table.iloc[0]
    assert row['k'] == 5
    assert row['wire_bytes'] > 0
    assert row['simulated_ms'] > 0
