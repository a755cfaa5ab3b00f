import hashlib

from bs4 import BeautifulSoup

from reporting.manifest import MANIFEST_NAME, RunManifest, sha256_file
from reporting.svg_constructor import SVGConstructor


def test_manifest_records_relative_paths_and_checksums(tmp_path):
    (tmp_path / "day_00").mkdir()
    path = tmp_path / "day_00" / "orders.csv"
    path.write_text("time_ns\n1\n")
    manifest = RunManifest(command="simulate", seed=4)
    manifest.add_output(path, tmp_path)
    manifest.write(tmp_path)

    loaded = RunManifest.read(tmp_path)
    assert loaded.outputs == {"day_00/orders.csv": hashlib.sha256(b"time_ns\n1\n").hexdigest()}
    assert loaded.seed == 4
    assert (tmp_path / MANIFEST_NAME).exists()


def test_sha256_of_an_empty_file(tmp_path):
    path = tmp_path / "empty"
    path.write_bytes(b"")
    assert sha256_file(path) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


def test_heatmap_has_one_cell_per_entry():
    svg = SVGConstructor.construct_heatmap([[3, 1], [0, 2]], ["A", "B"], "Confusion")
    document = BeautifulSoup(svg, "xml")
    # background plus four cells
    assert len(document.find_all("rect")) == 5
    assert "Confusion" in document.get_text()


def test_histogram_draws_a_bar_per_bin_and_series(tmp_path):
    svg = SVGConstructor.construct_histogram([0.0, 1.0, 2.0, 3.0], {"true": [1, 2, 3], "predicted": [3, 2, 1]},
                                             "Sizes", density=[1.0, 2.0, 1.0])
    document = BeautifulSoup(svg, "xml")
    assert len(document.find_all("rect")) == 1 + 6
    assert len(document.find_all("polyline")) == 1
    path = SVGConstructor.write(svg, tmp_path / "h.svg")
    assert path.read_text() == svg


def test_histogram_without_bins_is_an_empty_chart():
    document = BeautifulSoup(SVGConstructor.construct_histogram([], {"returns": []}, "Empty"), "xml")
    assert len(document.find_all("rect")) == 1
