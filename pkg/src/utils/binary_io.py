"""
Little-endian binary helpers shared by the checkpoint and raw tensor formats
"""
import struct
import zlib
from typing import Tuple

from src.utils.errors import FormatError

U8 = struct.Struct('<B')
U32 = struct.Struct('<I')
U64 = struct.Struct('<Q')


def crc32(data: bytes) -> int:
    return zlib.crc32(data) & 0xFFFFFFFF


def append_crc(body: bytes) -> bytes:
    """Return body followed by the CRC32 of body"""
    return body + U32.pack(crc32(body))


def split_crc(data: bytes, what: str) -> Tuple[bytes, int]:
    """Separate the trailing CRC32 from the bytes it covers"""
    if len(data) < U32.size:
        raise FormatError(f"{what} is too short to hold a checksum ({len(data)} bytes)", 0)
    return data[:-U32.size], U32.unpack(data[-U32.size:])[0]


def verify_crc(body: bytes, stored: int, what: str) -> None:
    actual = crc32(body)
    if actual != stored:
        raise FormatError(f"{what} checksum mismatch: stored 0x{stored:08x}, computed 0x{actual:08x}", len(body))


class ByteReader:
    """Sequential reader that reports the byte offset of any malformed field"""

    def __init__(self, data: bytes, what: str):
        self.data = data
        self.what = what
        self.offset = 0

    @property
    def remaining(self) -> int:
        return len(self.data) - self.offset

    def take(self, count: int) -> bytes:
        if count < 0 or count > self.remaining:
            raise FormatError(f"{self.what} truncated: needed {count} bytes, {self.remaining} available", self.offset)
        chunk = self.data[self.offset:self.offset + count]
        self.offset += count
        return chunk

    def unpack(self, layout: struct.Struct) -> int:
        return layout.unpack(self.take(layout.size))[0]

    def u8(self) -> int:
        return self.unpack(U8)

    def u32(self) -> int:
        return self.unpack(U32)

    def u64(self) -> int:
        return self.unpack(U64)

    def expect_magic(self, magic: bytes) -> None:
        start = self.offset
        found = self.take(len(magic)) if self.remaining >= len(magic) else self.data[start:]
        if found != magic:
            raise FormatError(f"{self.what} has bad magic {found!r}, expected {magic!r}", start)

    def expect_version(self, version: int) -> None:
        start = self.offset
        found = self.u32()
        if found != version:
            raise FormatError(f"{self.what} version {found} is not supported (expected {version})", start)

    def expect_end(self) -> None:
        if self.remaining:
            raise FormatError(f"{self.what} has {self.remaining} unexpected trailing bytes", self.offset)
