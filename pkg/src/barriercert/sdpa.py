"""SDPA sparse (".dat-s") export and import.

The file encodes the standard SDPA pair

    (P)  min  c^T x   s.t.  X = sum_k x_k F_k - F_0,  X >= 0
    (D)  max  tr(F_0 Y)  s.t.  tr(F_k Y) = c_k,  Y >= 0

Our :class:`~barriercert.sos.SdpProblem` is exactly the (D) side: Y holds
the Gram blocks plus a trailing diagonal block carrying each free scalar z
as a +/- pair (z = Y[2j] - Y[2j+1] on that block's diagonal), the rows
become the trace equalities (c_k = rhs), and F_0 carries the objective.

Export is deterministic and writes a comment header (lines starting with
"*#") recording the block map, free-variable names and row labels so a
certificate can be reconstructed bit-for-bit from external solver output.
Import inverts export exactly on our own files and also accepts plain
third-party files (no header): their diagonal blocks are expanded into
1x1 PSD blocks and no free scalars are recovered.
"""

from __future__ import annotations

import json
from typing import Dict, List, Tuple

import numpy as np

from .sos import SdpProblem, SdpRow

HEADER_TAG = "*#barriercert "


class SdpaFormatError(ValueError):
    def __init__(self, message: str, line: int = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


def export_sdpa(p: SdpProblem) -> str:
    """Serialize an SdpProblem in SDPA sparse format (deterministic)."""
    m = len(p.rows)
    nfree = len(p.free_vars)
    psd_sizes = [n for _, n in p.blocks]
    sizes: List[int] = list(psd_sizes)
    if nfree:
        sizes.append(-2 * nfree)
    header = {
        "blocks": [[name, n] for name, n in p.blocks],
        "free_vars": list(p.free_vars),
        "objective_const": p.objective_const,
        "row_labels": [r.label for r in p.rows],
    }
    out = [HEADER_TAG + json.dumps(header, separators=(",", ":"))]
    out.append("* SDPA sparse export; (D)-side data: rows are trace equalities")
    out.append(f"{m}")
    out.append(f"{len(sizes)}")
    out.append(" ".join(str(s) for s in sizes))
    out.append(" ".join(_fmt(r.rhs) for r in p.rows))

    entries: List[str] = []
    fblk = len(psd_sizes) + 1  # 1-based index of the diagonal free block
    vidx = {v: j for j, v in enumerate(p.free_vars)}

    def emit(k: int, blk: int, i: int, j: int, val: float):
        if val != 0.0:
            entries.append(f"{k} {blk} {i} {j} {_fmt(val)}")

    # F_0: objective
    for (blk, a, c), val in sorted(p.objective_gram.items()):
        emit(0, blk + 1, a + 1, c + 1, val)
    for v in p.free_vars:
        val = p.objective_free.get(v, 0.0)
        j = vidx[v]
        emit(0, fblk, 2 * j + 1, 2 * j + 1, val)
        emit(0, fblk, 2 * j + 2, 2 * j + 2, -val)

    # F_k: one per row
    for k, row in enumerate(p.rows, start=1):
        for (blk, a, c) in sorted(row.gram):
            emit(k, blk + 1, a + 1, c + 1, row.gram[(blk, a, c)])
        for v in sorted(row.free, key=lambda v: vidx[v]):
            j = vidx[v]
            val = row.free[v]
            emit(k, fblk, 2 * j + 1, 2 * j + 1, val)
            emit(k, fblk, 2 * j + 2, 2 * j + 2, -val)

    out.extend(entries)
    return "\n".join(out) + "\n"


def import_sdpa(text: str) -> SdpProblem:
    """Parse SDPA sparse text; inverse of export on our own files."""
    header = None
    body: List[Tuple[int, str]] = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith(HEADER_TAG):
            try:
                header = json.loads(line[len(HEADER_TAG):])
            except json.JSONDecodeError as e:
                raise SdpaFormatError(f"bad header JSON: {e}", ln)
            continue
        if not line or line.startswith("*") or line.startswith('"'):
            continue
        body.append((ln, line))

    if len(body) < 2:
        raise SdpaFormatError("file too short: need m, nblocks, block sizes")

    def ints(s: str, ln: int, what: str) -> List[int]:
        toks = s.replace(",", " ").replace("{", " ").replace("}", " ") \
                .replace("(", " ").replace(")", " ").split()
        try:
            return [int(t) for t in toks]
        except ValueError:
            raise SdpaFormatError(f"expected integers for {what}: {s!r}", ln)

    ln, s = body[0]
    m = ints(s, ln, "variable count")[0]
    ln, s = body[1]
    nblocks = ints(s, ln, "block count")[0]
    if nblocks == 0:
        sizes: List[int] = []
        cursor = 2
    else:
        ln, s = body[2]
        sizes = ints(s, ln, "block sizes")
        if len(sizes) != nblocks:
            raise SdpaFormatError(f"declared {nblocks} blocks but found {len(sizes)} sizes", ln)
        cursor = 3

    cvals: List[float] = []
    while len(cvals) < m and cursor < len(body):
        ln, s = body[cursor]
        toks = s.replace(",", " ").replace("{", " ").replace("}", " ").split()
        try:
            cvals.extend(float(t) for t in toks)
        except ValueError:
            raise SdpaFormatError(f"expected objective values: {s!r}", ln)
        cursor += 1
    if len(cvals) != m:
        raise SdpaFormatError(f"expected {m} objective values, found {len(cvals)}")

    # block layout: map SDPA block -> list of (our_block_index, offset) or free pairs
    free_from_header = header["free_vars"] if header else None
    blocks: List[Tuple[str, int]] = []
    diag_expansion: Dict[int, List[int]] = {}  # sdpa blk -> our 1x1 block indices
    free_block = None
    for t, s in enumerate(sizes, start=1):
        if s >= 0 and (not header or t <= len(header["blocks"])):
            if header:
                name, n = header["blocks"][t - 1]
                if n != s:
                    raise SdpaFormatError(f"header block size mismatch for {name}")
                blocks.append((name, n))
            else:
                blocks.append((f"B{t}", s))
        elif header and free_from_header is not None and t == len(sizes) and s < 0:
            if -s != 2 * len(free_from_header):
                raise SdpaFormatError("free-variable diagonal block size mismatch")
            free_block = t
        else:
            # third-party diagonal block: expand to 1x1 PSD blocks
            idxs = []
            for r in range(-s if s < 0 else s):
                idxs.append(len(blocks))
                blocks.append((f"L{t}[{r}]", 1))
            diag_expansion[t] = idxs

    if header and free_from_header and free_block is None:
        raise SdpaFormatError("header declares free variables but no diagonal block found")

    free_vars = list(free_from_header or [])
    labels = header["row_labels"] if header else [f"row{k}" for k in range(1, m + 1)]
    if len(labels) != m:
        raise SdpaFormatError("header row label count mismatch")

    rows = [SdpRow({}, {}, c, lbl) for c, lbl in zip(cvals, labels)]
    obj_gram: Dict[Tuple[int, int, int], float] = {}
    obj_free: Dict[str, float] = {}

    for ln, s in body[cursor:]:
        toks = s.replace(",", " ").split()
        if len(toks) != 5:
            raise SdpaFormatError(f"malformed entry (need 5 fields): {s!r}", ln)
        try:
            k, blk, i, j = (int(t) for t in toks[:4])
            val = float(toks[4])
        except ValueError:
            raise SdpaFormatError(f"malformed entry values: {s!r}", ln)
        if not (0 <= k <= m):
            raise SdpaFormatError(f"matrix index {k} out of range", ln)
        if not (1 <= blk <= nblocks):
            raise SdpaFormatError(f"block index {blk} out of range", ln)
        if i > j:
            i, j = j, i

        if free_block is not None and blk == free_block:
            if i != j:
                raise SdpaFormatError("off-diagonal entry in diagonal block", ln)
            pos = i - 1
            vj, sign = divmod(pos, 2)
            name = free_vars[vj]
            coef = val if sign == 0 else -val
            if sign == 1:
                continue  # the +side entry carries the coefficient
            if k == 0:
                obj_free[name] = obj_free.get(name, 0.0) + coef
            else:
                rows[k - 1].free[name] = rows[k - 1].free.get(name, 0.0) + coef
        elif blk in diag_expansion:
            if i != j:
                raise SdpaFormatError("off-diagonal entry in diagonal block", ln)
            our = diag_expansion[blk][i - 1]
            key = (our, 0, 0)
            if k == 0:
                obj_gram[key] = obj_gram.get(key, 0.0) + val
            else:
                rows[k - 1].gram[key] = rows[k - 1].gram.get(key, 0.0) + val
        else:
            our = blk - 1
            if our >= len(blocks) or blocks[our][1] < max(i, j):
                raise SdpaFormatError(f"entry ({i},{j}) exceeds block size", ln)
            key = (our, i - 1, j - 1)
            if k == 0:
                obj_gram[key] = obj_gram.get(key, 0.0) + val
            else:
                rows[k - 1].gram[key] = rows[k - 1].gram.get(key, 0.0) + val

    return SdpProblem(blocks=blocks, free_vars=free_vars, rows=rows,
                      objective_free=obj_free,
                      objective_const=header["objective_const"] if header else 0.0,
                      objective_gram=obj_gram)


def _fmt(x: float) -> str:
    return repr(float(x))
