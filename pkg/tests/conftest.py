import pytest


@pytest.fixture(autouse=True)
def empty_cache(tmp_path_factory, monkeypatch):
    """Keep runs offline and reproducible: no cached dataset, synthetic fallback."""
    cache = tmp_path_factory.mktemp("cache")
    monkeypatch.setenv("ITA_CACHE_DIR", str(cache))
    monkeypatch.delenv("ITA_DATASET_URL", raising=False)
    return cache


def intel_line(i, temp, hum, light, volt, mote=1):
    sec = i % 60
    return f"2004-02-28 00:{(i // 60) % 60:02d}:{sec:02d}.{(i * 7919) % 100000:05d} {i} {mote} {temp} {hum} {light} {volt}"


@pytest.fixture
def write_dataset(tmp_path):
    def _write(lines, name="data.txt"):
        path = tmp_path / name
        path.write_text("\n".join(lines) + "\n")
        return path
    return _write


_ACCEPTANCE: list[str] = []


@pytest.fixture
def verdict():
    """Record one pass/fail line for an acceptance criterion. Hard checks also
    assert; soft ones (documented examples) are only reported."""
    def _check(label, ok, detail="", hard=True):
        status = ("PASS" if ok else "FAIL") if hard else ("ok" if ok else "off")
        line = f"{status:<4}  {label}" + (f"  ({detail})" if detail else "")
        _ACCEPTANCE.append(line)
        print(line)
        if hard:
            assert ok, line
    return _check


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
