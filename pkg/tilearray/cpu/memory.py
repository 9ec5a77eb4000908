"""
memory.py

Flat byte-addressed memory image behind the tile loads and stores.
"""

import numpy as np

from tilearray.errors import MemoryAccessError
from tilearray.isa.tiles import empty_payload


class MemoryImage(object):

    def __init__(self, data):
        self.data = np.array(data, dtype=np.uint8, copy=True).ravel()

    @classmethod
    def zeros(cls, size):
        return cls(np.zeros(size, dtype=np.uint8))

    @property
    def size(self):
        return self.data.size

    def copy(self):
        return MemoryImage(self.data)

    def _rows(self, base, stride, rows, row_bytes, what):
        last = base + (rows - 1) * stride + row_bytes
        if base < 0 or last > self.data.size:
            raise MemoryAccessError("%s of %d rows x %d B at 0x%x stride %d reaches 0x%x, image ends at 0x%x"
                                    % (what, rows, row_bytes, base, stride, last, self.data.size))
        return base + stride * np.arange(rows)

    def read_tile(self, base, stride, shape):
        """
        :param shape: TileShape of the destination register
        :return: 16 x 64 uint8 register payload, unused bytes zero
        """
        starts = self._rows(base, stride, shape.rows, shape.cols_bytes, "tile load")
        payload = empty_payload()
        for r, start in enumerate(starts):
            payload[r, :shape.cols_bytes] = self.data[start:start + shape.cols_bytes]
        return payload

    def write_tile(self, base, stride, shape, payload):
        starts = self._rows(base, stride, shape.rows, shape.cols_bytes, "tile store")
        for r, start in enumerate(starts):
            self.data[start:start + shape.cols_bytes] = payload[r, :shape.cols_bytes]

    def __eq__(self, other):
        if not isinstance(other, MemoryImage):
            return NotImplemented
        return np.array_equal(self.data, other.data)

    __hash__ = None
