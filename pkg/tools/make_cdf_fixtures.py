"""Render the IEEE 14/118-bus test systems as IEEE Common Data Format text.

The original archive files are not bundled with any installable package, so the
fixtures are rebuilt from PYPOWER's copies of the same data (which were
themselves converted from CDF).  Only needed when regenerating
``src/cipflow/data/*.cdf``::

    pip download pypower --no-deps -d /tmp/pp && python -m zipfile -e /tmp/pp/*.whl /tmp/pp/x
    PYTHONPATH=/tmp/pp/x python tools/make_cdf_fixtures.py
"""
from pathlib import Path

from pypower.case14 import case14
from pypower.case118 import case118

OUT = Path(__file__).resolve().parents[1] / "src" / "cipflow" / "data"


def _put(buf, start, end, text):
    # 1-based inclusive columns, right-justified
    width = end - start + 1
    if len(text) > width:
        raise ValueError(f"{text!r} does not fit columns {start}-{end}")
    buf[start - 1:end] = list(text.rjust(width))


def _num(value, decimals):
    text = f"{value:.{decimals}f}"
    if text.startswith("0."):
        text = text[1:]
    elif text.startswith("-0."):
        text = "-" + text[2:]
    return text


def render(ppc, title, date="08/19/93"):
    base = ppc["baseMVA"]
    bus, gen, branch = ppc["bus"], ppc["gen"], ppc["branch"]
    gens = {int(g[0]): g for g in gen}
    lines = []
    head = [" "] * 73
    _put(head, 2, 9, date)
    head[10:30] = list("UW ARCHIVE".ljust(20))
    _put(head, 32, 37, f"{base:.1f}")
    _put(head, 39, 42, "1962")
    head[43] = "W"
    head[45:73] = list(title.ljust(28)[:28])
    lines.append("".join(head).rstrip())
    lines.append(f"BUS DATA FOLLOWS                            {len(bus)} ITEMS")
    for row in bus:
        num = int(row[0])
        g = gens.get(num)
        buf = [" "] * 127
        _put(buf, 1, 4, str(num))
        buf[5:17] = list(f"Bus {num}".ljust(12))
        _put(buf, 19, 20, "1")
        _put(buf, 21, 23, "1")
        _put(buf, 25, 26, str(int(row[1])))
        _put(buf, 28, 33, f"{row[7]:.3f}")
        _put(buf, 34, 40, f"{row[8]:.2f}")
        _put(buf, 41, 49, f"{row[2]:.1f}")
        _put(buf, 50, 59, f"{row[3]:.1f}")
        _put(buf, 60, 67, f"{g[1]:.1f}" if g is not None else "0.0")
        _put(buf, 68, 75, f"{g[2]:.1f}" if g is not None else "0.0")
        _put(buf, 77, 83, f"{row[9]:.1f}")
        _put(buf, 85, 90, f"{g[5]:.3f}" if g is not None else "0.0")
        _put(buf, 91, 98, f"{g[3]:.1f}" if g is not None else "0.0")
        _put(buf, 99, 106, f"{g[4]:.1f}" if g is not None else "0.0")
        _put(buf, 107, 114, f"{row[4] / base:.4f}")
        _put(buf, 115, 122, f"{row[5] / base:.4f}")
        _put(buf, 124, 127, "0")
        lines.append("".join(buf).rstrip())
    lines.append("-999")
    lines.append(f"BRANCH DATA FOLLOWS                         {len(branch)} ITEMS")
    seen = {}
    for row in branch:
        f, t = int(row[0]), int(row[1])
        seen[(f, t)] = seen.get((f, t), 0) + 1
        ratio = row[8]
        buf = [" "] * 126
        _put(buf, 1, 4, str(f))
        _put(buf, 6, 9, str(t))
        _put(buf, 11, 12, "1")
        _put(buf, 13, 14, "1")
        _put(buf, 17, 17, str(seen[(f, t)]))
        _put(buf, 19, 19, "1" if ratio else "0")
        _put(buf, 20, 29, _num(row[2], 5))
        _put(buf, 30, 40, _num(row[3], 5))
        _put(buf, 41, 50, _num(row[4], 5))
        _put(buf, 51, 55, "0")
        _put(buf, 57, 61, "0")
        _put(buf, 63, 67, "0")
        _put(buf, 69, 72, "0")
        _put(buf, 74, 74, "0")
        _put(buf, 77, 82, f"{ratio:.3f}" if ratio else "0.0")
        _put(buf, 84, 90, "0.0")
        lines.append("".join(buf).rstrip())
    lines.append("-999")
    lines += ["LOSS ZONES FOLLOWS                     1 ITEMS", "  1 IEEE", "-99",
              "INTERCHANGE DATA FOLLOWS                 1 ITEMS",
              " 1    1 Bus 1        0.0  999.99  IEEE     IEEE TEST SYSTEM", "-9",
              "TIE LINES FOLLOWS                     0 ITEMS", "-999", "END OF DATA"]
    return "\n".join(lines) + "\n"


if __name__ == "__main__":
    (OUT / "ieee14.cdf").write_text(render(case14(), "IEEE 14 Bus Test Case"))
    (OUT / "ieee118.cdf").write_text(render(case118(), "IEEE 118 Bus Test Case"))
