import numpy as np
import pytest

from fibernli import cli, plots
from fibernli.errors import SchemaError
from fibernli.pipeline import SWEEP_COLUMNS
from fibernli.shaping import make_composition
from fibernli.stats import analytic_covariances
from fibernli.tables import read_csv, write_csv


@pytest.fixture
def kernel_csv(tmp_path):
    rows = []
    for f in (-1e9, 0.0, 1e9):
        rows.append(("phi1", None, None, f, 3.0))
        for t in range(4):
            rows.append(("chi1", t, None, f, (4 - t) * (2 + abs(f) / 1e9)))
            rows.append(("chi3", t, None, f, -1.0 - t))
    p = tmp_path / "kernels.csv"
    write_csv(p, cli.KERNEL_COLUMNS, rows, "abc")
    return p


def test_kernel_heatmap_normalized_to_one(kernel_csv):
    _, rows = read_csv(kernel_csv)
    taus, fs, Z = plots.kernel_heatmap_data(rows, "chi1")
    assert Z.shape == (4, 3) and np.nanmax(Z) == 1.0
    assert list(taus) == [0, 1, 2, 3]
    _, _, Z3 = plots.kernel_heatmap_data(rows, "chi3")
    assert np.nanmax(np.abs(Z3)) == 1.0
    with pytest.raises(SchemaError):
        plots.kernel_heatmap_data(rows, "psi9")


def test_plot_csv_writes_images(kernel_csv, tmp_path):
    out = plots.plot_csv(kernel_csv, tmp_path)
    assert out.endswith("kernels.png") and (tmp_path / "kernels.png").stat().st_size > 0
    comp = make_composition((0.4, 0.3, 0.2, 0.1), (1, 3, 5, 7), 40)
    cov = analytic_covariances(comp, 4, 12, 24, power=1.0)
    p = tmp_path / "cov.csv"
    write_csv(p, ("kind", "tau", "tau_prime", "value", "stderr"), cov.to_rows(), "abc")
    assert plots.plot_csv(p, tmp_path, "svg").endswith("cov.svg")


def _eta_rows(with_sim):
    rows = []
    i = 0
    for mapping in (1, 4):
        for n in (100, 1000, 10000):
            megn_ = 1000.0 + n / 100 + mapping
            row = dict(point=i, blocklength=n, mapping=mapping, symbol_rate_gbd=32.0, spans=10, memory=50,
                       mode="approx", launch_power_dbm=-6.0, eta_megn=megn_, eta_egn=1200.0,
                       eta_sim=megn_ * 1.01 if with_sim else None, eta_sim_stderr=5.0 if with_sim else None,
                       delta_eta=0.0099 if with_sim else None, snr_eff_db=20.0, snr_opt_db=21.0)
            rows.append([row[c] for c in SWEEP_COLUMNS])
            i += 1
    return rows


def test_eta_plot_with_simulation_markers(tmp_path):
    p = tmp_path / "sweep.csv"
    write_csv(p, SWEEP_COLUMNS, _eta_rows(True), "abc")
    out = plots.plot_csv(p, tmp_path)
    assert isinstance(out, list) and out[1].endswith("sweep_error.png")
    for o in out:
        assert (tmp_path / o.split("/")[-1]).exists()
    p2 = tmp_path / "model.csv"
    write_csv(p2, SWEEP_COLUMNS, _eta_rows(False), "abc")
    assert plots.plot_csv(p2, tmp_path).endswith("model.png")


def test_schema_error_names_column(tmp_path):
    p = tmp_path / "bad.csv"
    write_csv(p, ("kernel_id", "tau", "f_hz", "value"), [("chi1", 0, 0.0, 1.0)], "abc")
    with pytest.raises(SchemaError) as info:
        plots.plot_csv(p, tmp_path)
    assert info.value.column == "tau_prime"
    p = tmp_path / "bad2.csv"
    write_csv(p, SWEEP_COLUMNS, [[0, 100, 4, 32.0, 10, 50, "approx", -6.0, "oops", 1.0, None, None, None, 1, 1]], "abc")
    with pytest.raises(SchemaError) as info:
        plots.plot_csv(p, tmp_path)
    assert info.value.column == "eta_megn"
    p = tmp_path / "unknown.csv"
    write_csv(p, ("a", "b"), [(1, 2)], "abc")
    with pytest.raises(SchemaError):
        plots.plot_csv(p, tmp_path)


def test_cli_plot_exit_codes(kernel_csv, tmp_path, capsys):
    assert cli.main(["plot", str(kernel_csv), "--out", str(tmp_path / "fig")]) == 0
    assert (tmp_path / "fig" / "kernels.png").exists()
    bad = tmp_path / "bad.csv"
    write_csv(bad, ("kernel_id", "value"), [("chi1", 1.0)], "abc")
    assert cli.main(["plot", str(bad), "--out", str(tmp_path)]) == cli.EXIT_DATA
    assert "column tau" in capsys.readouterr().err
