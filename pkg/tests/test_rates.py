import math

import numpy as np
import pandas as pd
import pytest

from core.errors import InsufficientPoints
from experiments.rates import (
    RateFit,
    contraction_checks,
    count_inversions,
    emit_report,
    fit_rate,
    seed_averaged,
)
from loaders.results_loader import CONTRACTION_COLUMNS, to_frame, write_table

N_GRID = [200, 400, 800, 1600, 3200]


def frame_from(values):
    rows = []
    for replicate, series in enumerate(values):
        for n, value in zip(N_GRID, series):
            rows.append({'n': n, 'replicate': replicate, 'seed': replicate, 'draws': 10,
                         'posterior_W2_median': value, 'posterior_W2_q90': 2 * value})
    return to_frame(rows, CONTRACTION_COLUMNS, sort_by=['n', 'replicate'])


class TestFitRate:
    def test_polynomial_rate(self):
        frame = frame_from([[3.0 * n ** -0.25 for n in N_GRID]])
        fit = fit_rate(frame, 'log_n')
        assert fit.slope == pytest.approx(-0.25, abs=1e-12)
        assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-10)
        assert fit.residual_rms < 1e-10
        assert fit.points == 5

    def test_logarithmic_rate(self):
        frame = frame_from([[math.log(n) ** -0.5 for n in N_GRID]])
        fit = fit_rate(frame, 'log_log_n')
        assert fit.slope == pytest.approx(-0.5, abs=1e-10)
        assert fit.residual_rms < 1e-10

    def test_replicates_are_averaged(self):
        frame = frame_from([[1.0 * n ** -0.25 for n in N_GRID], [3.0 * n ** -0.25 for n in N_GRID]])
        np.testing.assert_allclose(seed_averaged(frame).to_numpy(), [2.0 * n ** -0.25 for n in N_GRID])
        assert fit_rate(frame).slope == pytest.approx(-0.25, abs=1e-12)

    def test_reads_csv(self, tmp_path):
        path = str(tmp_path / 'c.csv')
        write_table(frame_from([[n ** -0.5 for n in N_GRID]]), path)
        assert fit_rate(path).slope == pytest.approx(-0.5, abs=1e-12)

    def test_too_few_sizes(self):
        frame = frame_from([[0.2, 0.1]])
        with pytest.raises(InsufficientPoints):
            fit_rate(frame)

    def test_unknown_transform(self):
        with pytest.raises(ValueError):
            fit_rate(frame_from([[0.3, 0.2, 0.1]]), 'sqrt_n')

    def test_log_log_requires_large_n(self):
        frame = pd.DataFrame({'n': [1, 2, 3], 'posterior_W2_median': [0.3, 0.2, 0.1]})
        with pytest.raises(ValueError):
            fit_rate(frame, 'log_log_n')


def test_count_inversions():
    assert count_inversions([3.0, 2.0, 2.5, 1.0]) == 1
    assert count_inversions([3.0, 2.0, 1.0]) == 0



class TestContractionChecks:
    def test_finite_rate_in_band(self):
        checks = contraction_checks(frame_from([[3.0 * n ** -0.25 for n in N_GRID]]), 'finite_k')
        assert checks['medians_decrease'] == {'valido': True, 'value': 0.0}
        assert checks['slope_in_band']['valido']
        assert checks['slope_in_band']['value'] == pytest.approx(-0.25, abs=1e-12)

    def test_finite_rate_too_fast(self):
        checks = contraction_checks(frame_from([[n ** -0.5 for n in N_GRID]]), 'finite_k')
        assert not checks['slope_in_band']['valido']

    def test_one_inversion_is_tolerated(self):
        frame = frame_from([[0.5, 0.4, 0.41, 0.3, 0.2]])
        assert contraction_checks(frame, 'finite_k')['medians_decrease']['valido']
        frame = frame_from([[0.5, 0.6, 0.4, 0.45, 0.2]])
        checks = contraction_checks(frame, 'finite_k')
        assert not checks['medians_decrease']['valido']
        assert checks['medians_decrease']['value'] == 2.0

    def test_dp_logarithmic_and_shallower(self):
        dp = frame_from([[math.log(n) ** -0.5 for n in N_GRID]])
        finite = frame_from([[3.0 * n ** -0.25 for n in N_GRID]])
        checks = contraction_checks(dp, 'dp', reference=finite)
        assert checks['log_log_slope_negative']['valido']
        assert checks['log_log_slope_negative']['value'] == pytest.approx(-0.5, abs=1e-10)
        assert checks['shallower_than_finite']['valido']
        assert checks['shallower_than_finite']['value'] > 0.0
        assert 'slope_in_band' not in checks

    def test_dp_steeper_than_finite_fails(self):
        dp = frame_from([[n ** -0.5 for n in N_GRID]])
        finite = frame_from([[n ** -0.25 for n in N_GRID]])
        assert not contraction_checks(dp, 'dp', reference=finite)['shallower_than_finite']['valido']

    def test_dp_without_reference(self):
        checks = contraction_checks(frame_from([[math.log(n) ** -0.5 for n in N_GRID]]), 'dp')
        assert set(checks) == {'medians_decrease', 'log_log_slope_negative'}

    def test_reference_grid_must_match(self):
        dp = frame_from([[math.log(n) ** -0.5 for n in N_GRID]])
        finite = frame_from([[0.3, 0.2, 0.1]])
        with pytest.raises(ValueError):
            contraction_checks(dp, 'dp', reference=finite)


class TestReport:
    def fits(self):
        return {
            'log_n': RateFit(-0.25, 1.0, 1e-3, 'log_n', 5),
            'log_log_n': RateFit(-1.5, 2.0, 4e-3, 'log_log_n', 5),
        }

    def test_sections(self, tmp_path):
        manifest = [{'n': 200, 'replicate': 0, 'data_seed': 11, 'chain_seed': 12}]
        path = emit_report(self.fits(), {}, str(tmp_path / 'r.txt'),
                           config_echo=['model = finite_k'], seed_manifest=manifest)
        lines = open(path, encoding='utf-8').read().splitlines()
        assert lines[0] == '# contraction report'
        assert lines.index('[config]') < lines.index('[fits]') < lines.index('[seeds]')
        assert 'log_log_n,log_log_n,-1.5,2,0.0040000000000000001,5' in lines
        assert '200,0,11,12' in lines

    def test_checks_section(self, tmp_path):
        checks = {'medians_decrease': {'valido': True, 'value': 0.0},
                  'log_log_slope_negative': {'valido': False, 'value': 0.5}}
        path = emit_report(self.fits(), {}, str(tmp_path / 'r.txt'), checks=checks)
        lines = open(path, encoding='utf-8').read().splitlines()
        assert lines.index('[fits]') < lines.index('[checks]')
        assert 'name,valido,value' in lines
        assert 'log_log_slope_negative,False,0.5' in lines
        assert 'medians_decrease,True,0' in lines

    def test_tables_are_written_next_to_report(self, tmp_path):
        table = frame_from([[0.3, 0.2, 0.1, 0.05, 0.02]])
        emit_report(self.fits(), {'cells': table}, str(tmp_path / 'r.txt'))
        assert (tmp_path / 'cells.csv').exists()
        assert 'cells = cells.csv' in (tmp_path / 'r.txt').read_text(encoding='utf-8')

    def test_deterministic(self, tmp_path):
        first = emit_report(self.fits(), {}, str(tmp_path / 'a.txt'), config_echo=['seed = 1'])
        second = emit_report(self.fits(), {}, str(tmp_path / 'b.txt'), config_echo=['seed = 1'])
        assert open(first, 'rb').read() == open(second, 'rb').read()

    def test_requires_fits(self, tmp_path):
        with pytest.raises(InsufficientPoints):
            emit_report({}, {}, str(tmp_path / 'r.txt'))
