"""Named parameter collection and its versioned binary checkpoint format.

Layout (little-endian): magic ``A4DP``, uint32 version, uint32 tensor count,
then per tensor: uint32 name length, utf-8 name, uint32 rank, rank uint64
dims, float64 payload.  Round-trips bit-exactly.
"""

import struct

import numpy as np

from auto4d.nn.tensor import Tensor

_MAGIC = b"A4DP"
_VERSION = 1


class ParamSet:
    def __init__(self, tensors=None):
        self._tensors = {}
        if tensors:
            self.update(tensors)

    def add(self, name, tensor):
        if name in self._tensors:
            raise ValueError(f"duplicate parameter name: {name}")
        self._tensors[name] = tensor

    def update(self, mapping):
        for name, tensor in mapping.items():
            self.add(name, tensor)

    def items(self):
        return self._tensors.items()

    def names(self):
        return list(self._tensors)

    def __len__(self):
        return len(self._tensors)

    def __contains__(self, name):
        return name in self._tensors

    def __getitem__(self, name):
        return self._tensors[name]

    def zero_grad(self):
        for t in self._tensors.values():
            t.grad[...] = 0.0

    def save(self, path):
        chunks = [_MAGIC, struct.pack("<II", _VERSION, len(self._tensors))]
        for name, t in self._tensors.items():
            nb = name.encode("utf-8")
            chunks.append(struct.pack("<I", len(nb)))
            chunks.append(nb)
            shape = t.data.shape
            chunks.append(struct.pack("<I", len(shape)))
            chunks.append(struct.pack(f"<{len(shape)}Q", *shape) if shape else b"")
            chunks.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
        with open(path, "wb") as fh:
            fh.write(b"".join(chunks))

    @classmethod
    def load(cls, path):
        out = cls()
        with open(path, "rb") as fh:
            buf = fh.read()
        if buf[:4] != _MAGIC:
            raise ValueError("not a parameter checkpoint")
        version, count = struct.unpack_from("<II", buf, 4)
        if version != _VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        off = 12
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", buf, off)
            off += 4
            name = buf[off:off + nlen].decode("utf-8")
            off += nlen
            (rank,) = struct.unpack_from("<I", buf, off)
            off += 4
            shape = struct.unpack_from(f"<{rank}Q", buf, off) if rank else ()
            off += 8 * rank
            n = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(buf, dtype="<f8", count=n, offset=off).reshape(shape)
            off += 8 * n
            out.add(name, Tensor(data.copy(), requires_grad=True))
        return out

    def load_state(self, path):
        """Copy checkpoint values into the existing tensors (shapes must match)."""
        loaded = ParamSet.load(path)
        if loaded.names() != self.names():
            raise ValueError("checkpoint parameter names do not match")
        for name, t in self._tensors.items():
            src = loaded[name].data
            if src.shape != t.data.shape:
                raise ValueError(f"shape mismatch for {name}")
            t.data[...] = src
