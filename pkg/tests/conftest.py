import json

import numpy as np
import pytest

from camofs.annotations import AnnotationSet
from camofs.synthetic import make_annotation_set

_criteria: list[tuple[str, str]] = []


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    if "acceptance" not in report.keywords:
        return
    doc = getattr(report, "criterion", None) or report.nodeid.split("::")[-1]
    status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
    _criteria.append((status, doc))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    doc = item.function.__doc__
    if doc:
        report.criterion = " ".join(doc.split())


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for status, doc in _criteria:
        terminalreporter.write_line(f"{status}  {doc}")
    n_pass = sum(s == "PASS" for s, _ in _criteria)
    terminalreporter.write_line(f"{n_pass}/{len(_criteria)} criteria passed")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_set(instances_per_image=(1,), size=(100, 100)) -> AnnotationSet:
    """One category, one image per entry, ``n`` 10x10 boxes per image."""
    images, anns = [], []
    aid = 1
    for i, n in enumerate(instances_per_image, start=1):
        images.append({"id": i, "width": size[0], "height": size[1], "file_name": f"{i}.jpg"})
        for j in range(n):
            x = 10 * j
            anns.append({"id": aid, "image_id": i, "category_id": 1, "bbox": [x, 0, 10, 10],
                         "segmentation": [[x, 0, x + 10, 0, x + 10, 10, x, 10]],
                         "area": 100.0, "iscrowd": 0})
            aid += 1
    return AnnotationSet(images, anns, [{"id": 1, "name": "frog"}])


@pytest.fixture
def synth47():
    return make_annotation_set(num_images=200, num_classes=47, seed=7)


@pytest.fixture
def write_json(tmp_path):
    def _write(name, doc):
        p = tmp_path / name
        p.write_text(json.dumps(doc))
        return p
    return _write
