import json

import numpy as np
import pytest

from robust_scatter import CsvFormatError, load_csv
from robust_scatter.dataio import dump_json, result_payload
from robust_scatter import RhoFamily, estimate_scatter
from conftest import axis_design


AXIS_CSV = "1,0\n-1,0\n0,1\n0,-1\n"


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestLoadCsv:
    def test_axis_design(self, tmp_path):
        sample = load_csv(write(tmp_path, AXIS_CSV))
        assert sample.n == 4 and sample.q == 2
        np.testing.assert_array_equal(sample.w, np.full(4, 0.25))
        np.testing.assert_array_equal(
            sample.X, [[1, 0], [-1, 0], [0, 1], [0, -1]]
        )

    def test_header_skipped(self, tmp_path):
        sample = load_csv(write(tmp_path, "a,b\n" + AXIS_CSV), header=True)
        assert sample.n == 4

    def test_weight_column_renormalized_with_warning(self, tmp_path):
        text = "a,b,wt\n1,0,2.0\n-1,0,2.0\n0,1,2.0\n0,-1,2.0\n"
        with pytest.warns(UserWarning, match="renormalizing"):
            sample = load_csv(write(tmp_path, text), header=True,
                              weights_col="wt")
        assert sample.q == 2
        np.testing.assert_allclose(sample.w, 0.25)

    def test_weight_column_requires_header(self, tmp_path):
        with pytest.raises(CsvFormatError, match="header"):
            load_csv(write(tmp_path, AXIS_CSV), weights_col="wt")

    def test_unknown_weight_column(self, tmp_path):
        with pytest.raises(CsvFormatError, match="not in header"):
            load_csv(write(tmp_path, "a,b\n1,2\n"), header=True,
                     weights_col="wt")

    def test_ragged_row_reports_line(self, tmp_path):
        with pytest.raises(CsvFormatError, match="line 3"):
            load_csv(write(tmp_path, "1,0\n-1,0\n0\n"))

    def test_non_numeric_reports_position(self, tmp_path):
        with pytest.raises(CsvFormatError, match="line 2, column 2"):
            load_csv(write(tmp_path, "1,0\n-1,x\n"))

    def test_negative_weight_rejected(self, tmp_path):
        text = "a,wt\n1,0.5\n2,-0.5\n"
        with pytest.raises(CsvFormatError, match="not positive"):
            load_csv(write(tmp_path, text), header=True, weights_col="wt")

    def test_empty_file_rejected(self, tmp_path):
        with pytest.raises(CsvFormatError, match="no data rows"):
            load_csv(write(tmp_path, ""))


class TestResultPayload:
    def test_schema(self, tmp_path):
        fit = estimate_scatter(axis_design(2), RhoFamily(1, 2))
        payload = result_payload(fit, {"algo": "pn"})
        assert payload["schema_version"] == 1
        assert payload["config_echo"] == {"algo": "pn"}
        result = payload["result"]
        assert result["converged"] is True
        assert np.asarray(result["sigma"]).shape == (2, 2)
        assert result["mu"] is None
        out = tmp_path / "result.json"
        dump_json(payload, str(out))
        round_tripped = json.loads(out.read_text())
        assert round_tripped == payload
