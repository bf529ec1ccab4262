import json
import math

import pytest

import dentlabel

TABLE3 = (
    "01: Anatomical modification in the right and left mandible condyle.\n"
    "02: Missing teeth: 18, 28 and 48.\n"
    "03: Teeth 13 and 38 included and impacted.\n"
    "04: Tooth 36 and 37: endodontic treatment. Partially filled root canals.\n"
    "05: Mild bone loss in the region of the present teeth.\n"
    "06: Modification of the bone trabeculation in the region of tooth 48 compatible with a bone scar.\n"
    "07: Calcification of the right and left stylohyoid ligament complex.\n"
)


def test_mcc():
    assert dentlabel.mcc(5, 0, 0, 5) == 1.0
    assert dentlabel.mcc(0, 5, 5, 0) == -1.0
    assert math.isclose(dentlabel.mcc(6, 2, 3, 9), 48 / math.sqrt(8 * 9 * 11 * 12), rel_tol=1e-14)


def test_golden_linkage():
    pairs = set(dentlabel.link_report(TABLE3))
    assert pairs == {
        (36, "endodontic treatment"),
        (36, "unfilled root canals"),
        (37, "endodontic treatment"),
        (37, "unfilled root canals"),
        (13, "included and impacted"),
        (38, "included and impacted"),
    }
    report = dentlabel.parse_report(TABLE3)
    assert report["lines"][1]["excluded"] is True


def test_crop_window_and_split():
    assert dentlabel.crop_window(10, 10, 224, 1000, 500) == (0, 0)
    assert dentlabel.crop_window(995, 495, 224, 1000, 500) == (776, 276)
    crops = [(f"img_{i}", 11) for i in range(100)]
    split = dentlabel.split_dataset(crops, seed=3)
    assert split == dentlabel.split_dataset(list(reversed(crops)), seed=3)
    counts = {s: list(split.values()).count(s) for s in ("train", "val", "test")}
    assert counts == {"train": 70, "val": 15, "test": 15}


def test_fleiss_kappa():
    assert dentlabel.fleiss_kappa([[3, 0], [0, 3]]) == 1.0
    with pytest.raises(dentlabel.DentlabelError) as info:
        dentlabel.fleiss_kappa([[4, 0], [4, 0]])
    assert info.value.code == "DegenerateAgreement"


def test_error_carries_code():
    with pytest.raises(dentlabel.DentlabelError) as info:
        dentlabel.mcc(0, 0, 0, 0)
    assert info.value.code == "EmptyCounts"
    assert isinstance(info.value, ValueError)


def test_run_cli_version():
    code, out, err = dentlabel.run_cli(["--version"])
    assert code == 0
    info = json.loads(out)
    assert info == dentlabel.version_info()
    assert info["version"] == dentlabel.__version__
