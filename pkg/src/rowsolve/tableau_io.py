"""Plain-text tableau files.

Format, by example (blank lines and ``#`` comments are ignored)::

    [method]
    name = ROS2D
    order = 2
    embedded_order = 1

    [alpha]
    1.0

    [gamma]
    0.2928932188134524
    -0.5857864376269049 0.2928932188134524

    [b]
    0.5 0.5

    [bhat]
    1.0 0.0

Matrix sections are row-major lower triangles: [gamma] has one line per
stage with as many entries as its row index; [alpha] is strictly lower, so
its first row is omitted and line k carries the k entries of row k+1.
Anything that would land on or above the diagonal is rejected with the
offending line number.
"""
from __future__ import annotations

import numpy as np

from .errors import StructuralError
from .tableaus import RowTableau

_SECTIONS = ("method", "alpha", "gamma", "b", "bhat")


def parse_tableau_text(text: str) -> RowTableau:
    """Parse the text form of a classic tableau. StructuralError on any
    malformed content, always naming the line."""
    sections: dict[str, list[tuple[int, str]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip().lower()
            if name not in _SECTIONS:
                raise StructuralError(f"line {lineno}: unknown section [{name}]")
            if name in sections:
                raise StructuralError(f"line {lineno}: duplicate section [{name}]")
            sections[name] = []
            current = name
            continue
        if current is None:
            raise StructuralError(f"line {lineno}: content before any section header")
        sections[current].append((lineno, line))

    for required in ("method", "gamma", "b"):
        if required not in sections:
            raise StructuralError(f"missing [{required}] section")

    meta = {}
    for lineno, line in sections["method"]:
        if "=" not in line:
            raise StructuralError(f"line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        if key not in ("name", "order", "embedded_order"):
            raise StructuralError(f"line {lineno}: unknown key '{key}'")
        meta[key] = (lineno, value.strip())
    if "name" not in meta or "order" not in meta:
        raise StructuralError("[method] must define name and order")

    def parse_int(key):
        lineno, value = meta[key]
        try:
            return int(value)
        except ValueError:
            raise StructuralError(f"line {lineno}: {key} must be an integer") from None

    def parse_row(lineno, line):
        out = []
        for token in line.split():
            try:
                out.append(float(token))
            except ValueError:
                raise StructuralError(
                    f"line {lineno}: '{token}' is not a number") from None
        return out

    def parse_vector(name):
        rows = sections[name]
        if len(rows) != 1:
            lineno = rows[1][0] if len(rows) > 1 else 0
            raise StructuralError(f"line {lineno}: [{name}] must be a single line")
        return np.array(parse_row(*rows[0]))

    b = parse_vector("b")
    s = b.size

    def parse_lower(name, strict):
        mat = np.zeros((s, s))
        rows = sections.get(name, [])
        first_row = 1 if strict else 0  # strictly lower: row 0 has no entries
        expected = s - first_row
        if len(rows) != expected:
            raise StructuralError(
                f"[{name}] must have {expected} rows for {s} stages, got {len(rows)}")
        for k, (lineno, line) in enumerate(rows):
            i = first_row + k
            entries = parse_row(lineno, line)
            allowed = i if strict else i + 1
            if len(entries) > allowed:
                raise StructuralError(
                    f"line {lineno}: row {i + 1} of [{name}] has {len(entries)} "
                    f"entries; entry {allowed + 1} would sit on or above the diagonal")
            if len(entries) < allowed:
                raise StructuralError(
                    f"line {lineno}: row {i + 1} of [{name}] needs {allowed} "
                    f"entries, got {len(entries)}")
            mat[i, :allowed] = entries
        return mat

    alpha = parse_lower("alpha", strict=True)
    gamma = parse_lower("gamma", strict=False)

    b_hat = None
    embedded_order = None
    if "bhat" in sections:
        b_hat = parse_vector("bhat")
        if b_hat.size != s:
            raise StructuralError("[bhat] length must match [b]")
        if "embedded_order" not in meta:
            raise StructuralError("[bhat] requires embedded_order in [method]")
        embedded_order = parse_int("embedded_order")
    elif "embedded_order" in meta:
        raise StructuralError("embedded_order given without a [bhat] section")

    return RowTableau(name=meta["name"][1], alpha=alpha, gamma=gamma, b=b,
                      order=parse_int("order"), b_hat=b_hat,
                      embedded_order=embedded_order)


def format_tableau(t: RowTableau) -> str:
    """Serialize a classic tableau to the text form parse_tableau_text reads."""
    lines = ["[method]", f"name = {t.name}", f"order = {t.order}"]
    if t.embedded_order is not None:
        lines.append(f"embedded_order = {t.embedded_order}")
    s = t.stages

    def fmt(x):
        return repr(float(x))

    if s > 1:
        lines += ["", "[alpha]"]
        for i in range(1, s):
            lines.append(" ".join(fmt(t.alpha[i, j]) for j in range(i)))
    lines += ["", "[gamma]"]
    for i in range(s):
        lines.append(" ".join(fmt(t.gamma[i, j]) for j in range(i + 1)))
    lines += ["", "[b]", " ".join(fmt(x) for x in t.b)]
    if t.b_hat is not None:
        lines += ["", "[bhat]", " ".join(fmt(x) for x in t.b_hat)]
    return "\n".join(lines) + "\n"


def load_tableau(path) -> RowTableau:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_tableau_text(fh.read())


def save_tableau(t: RowTableau, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_tableau(t))
