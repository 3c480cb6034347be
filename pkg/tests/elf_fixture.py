"""
Minimal ELF64 little-endian object writer for tests
"""

import struct
from typing import Dict

ET_REL = 1
ET_EXEC = 2
SHT_PROGBITS = 1
SHT_STRTAB = 3

_EHDR = "<16sHHIQQQIHHHHHH"
_SHDR = "<IIQQQQIIQQ"


def build_elf(sections: Dict[str, bytes], e_type: int = ET_REL) -> bytes:
    """Object with the given PROGBITS sections plus .shstrtab"""
    names = list(sections) + [".shstrtab"]
    shstrtab = b"\0"
    name_offsets = {}
    for name in names:
        name_offsets[name] = len(shstrtab)
        shstrtab += name.encode("ascii") + b"\0"
    payloads = dict(sections)
    payloads[".shstrtab"] = shstrtab

    offset = struct.calcsize(_EHDR)
    body = b""
    placed = {}
    for name in names:
        data = payloads[name]
        placed[name] = (offset + len(body), len(data))
        body += data
        body += b"\0" * (-len(body) % 8)

    shoff = offset + len(body)
    headers = struct.pack(_SHDR, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0)
    for name in names:
        kind = SHT_STRTAB if name == ".shstrtab" else SHT_PROGBITS
        start, size = placed[name]
        headers += struct.pack(_SHDR, name_offsets[name], kind, 0, 0, start, size, 0, 0, 1, 0)

    ident = b"\x7fELF" + bytes([2, 1, 1, 0]) + b"\0" * 8
    ehdr = struct.pack(_EHDR, ident, e_type, 62, 1, 0, 0, shoff, 0, struct.calcsize(_EHDR), 0, 0,
                       struct.calcsize(_SHDR), len(names) + 1, len(names))
    return ehdr + body + headers
