"""Plain-text matrix files for constant-coefficient models.

Layout: a header line ``dims n ell m``, optionally followed by
``ic k`` when interconnection relation blocks are present, then the
named blocks in any order, each exactly once:

    E (ell x n)   J (ell x ell)   R (ell x ell)
    B (ell x m)   P (ell x m)     S (m x m)      N (m x m)
    Z (ell x n)   w (ell)         Q (n x n)      v (n)     c (scalar)

plus ``M_ic`` and ``N_ic`` (k x m each) when ``ic k`` was declared.
Entries are whitespace-separated decimals in row-major order and may
wrap across lines; ``#`` starts a comment.  Parse errors name the line
and the block being read.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import LTIModel
from .transform import InterconnectionSpec

_MODEL_BLOCKS = ("E", "J", "R", "B", "P", "S", "N", "Z", "w", "Q", "v", "c")
_IC_BLOCKS = ("M_ic", "N_ic")


class ModelFileError(ValueError):
    """Malformed model file; message carries line number and block."""


@dataclass(frozen=True)
class LTIFile:
    model: LTIModel
    interconnection: InterconnectionSpec | None = None


def _tokens(text: str):
    """Yield (line_number, token) pairs, skipping comments and blanks."""
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0]
        for tok in body.split():
            yield lineno, tok


def _block_shapes(n: int, ell: int, m: int, k: int | None) -> dict:
    shapes = {
        "E": (ell, n), "J": (ell, ell), "R": (ell, ell),
        "B": (ell, m), "P": (ell, m), "S": (m, m), "N": (m, m),
        "Z": (ell, n), "w": (ell,), "Q": (n, n), "v": (n,), "c": (),
    }
    if k is not None:
        shapes["M_ic"] = (k, m)
        shapes["N_ic"] = (k, m)
    return shapes


def parse_lti_text(text: str, source: str = "<string>") -> LTIFile:
    stream = _tokens(text)

    def next_token(expect: str):
        try:
            return next(stream)
        except StopIteration:
            raise ModelFileError(
                f"{source}: unexpected end of file while reading {expect}") from None

    def read_int(expect: str) -> int:
        lineno, tok = next_token(expect)
        try:
            value = int(tok)
        except ValueError:
            raise ModelFileError(
                f"{source}:{lineno}: expected an integer for {expect}, "
                f"got {tok!r}") from None
        if value < 0:
            raise ModelFileError(f"{source}:{lineno}: {expect} must be nonnegative")
        return value

    lineno, tok = next_token("the 'dims' header")
    if tok != "dims":
        raise ModelFileError(
            f"{source}:{lineno}: file must start with 'dims n ell m', got {tok!r}")
    n = read_int("n")
    ell = read_int("ell")
    m = read_int("m")

    k = None
    blocks: dict[str, np.ndarray] = {}
    pending = None  # a lookahead token consumed while checking for 'ic'
    try:
        first = next(stream)
    except StopIteration:
        first = None
    if first is not None and first[1] == "ic":
        k = read_int("k")
    else:
        pending = first

    shapes = _block_shapes(n, ell, m, k)
    expected_names = set(_MODEL_BLOCKS) | (set(_IC_BLOCKS) if k is not None else set())

    while True:
        if pending is not None:
            lineno, name = pending
            pending = None
        else:
            try:
                lineno, name = next(stream)
            except StopIteration:
                break
        if name not in shapes:
            raise ModelFileError(
                f"{source}:{lineno}: unknown block {name!r} (expected one of "
                f"{', '.join(sorted(expected_names))})")
        if name in blocks:
            raise ModelFileError(f"{source}:{lineno}: duplicate block {name!r}")
        shape = shapes[name]
        count = int(np.prod(shape)) if shape else 1
        values = np.empty(count)
        for i in range(count):
            vline, vtok = next_token(f"entry {i + 1}/{count} of block {name!r}")
            try:
                values[i] = float(vtok)
            except ValueError:
                raise ModelFileError(
                    f"{source}:{vline}: bad number {vtok!r} in block {name!r}") from None
        blocks[name] = values.reshape(shape) if shape else values[0]

    missing = expected_names - set(blocks)
    if missing:
        raise ModelFileError(
            f"{source}: missing block(s): {', '.join(sorted(missing))}")

    model = LTIModel(
        E=blocks["E"], J=blocks["J"], R=blocks["R"], B=blocks["B"],
        P=blocks["P"], S=blocks["S"], N=blocks["N"], Z=blocks["Z"],
        w=blocks["w"], Q=blocks["Q"], v=blocks["v"], c=float(blocks["c"]),
    )
    ic = None
    if k is not None:
        ic = InterconnectionSpec(M_ic=blocks["M_ic"], N_ic=blocks["N_ic"])
    return LTIFile(model=model, interconnection=ic)


def load_lti_file(path) -> LTIFile:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_lti_text(fh.read(), source=str(path))


def format_lti_model(lti: LTIModel, ic: InterconnectionSpec | None = None) -> str:
    """Render model data back into the text format (17 significant digits)."""
    def render(name, arr):
        arr = np.atleast_2d(np.asarray(arr, dtype=float))
        rows = [" ".join(f"{v:.17g}" for v in row) for row in arr]
        return "\n".join([name] + (rows if arr.size else []))

    lines = [f"dims {lti.n} {lti.ell} {lti.m}"]
    if ic is not None:
        lines.append(f"ic {ic.k}")
    for name in ("E", "J", "R", "B", "P", "S", "N", "Z"):
        lines.append(render(name, getattr(lti, name)))
    lines.append(render("w", lti.w))
    lines.append(render("Q", lti.Q))
    lines.append(render("v", lti.v))
    lines.append(f"c\n{lti.c:.17g}")
    if ic is not None:
        lines.append(render("M_ic", ic.M_ic))
        lines.append(render("N_ic", ic.N_ic))
    return "\n".join(lines) + "\n"
