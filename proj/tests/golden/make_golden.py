"""Writes the wire-format fixtures with Python's struct module.

The C++ encoder is checked against these bytes, so they are produced
independently of it. Re-running must not change any file.
"""
import struct
from pathlib import Path

HERE = Path(__file__).resolve().parent


def header(kind):
    return b"VSRL" + struct.pack("<BB", 1, kind)


def state_1v1():
    out = header(0x01)
    out += struct.pack("<If", 1234, 0.25)
    out += struct.pack("<bbI", 2, 1, 0)
    out += struct.pack("<4f", 12.5, -7.25, 30.0, -15.5)
    out += struct.pack("<BB", 1, 1)
    out += struct.pack("<B6f", 0, -20.5, 10.25, 0.5, 40.0, 21.875, -1.5)
    out += struct.pack("<B6f", 0, 20.0, -10.0, 3.0, 0.0, 0.0, 0.25)
    return out


def command_wheel():
    out = header(0x02) + struct.pack("<BB", 0, 1)
    out += struct.pack("<BBff", 0, 0, 50.0, -50.0)
    return out


def command_mixed():
    out = header(0x02) + struct.pack("<BB", 1, 3)
    out += struct.pack("<BBff", 0, 0, -100.0, 100.0)
    out += struct.pack("<BBff", 1, 1, 30.5, -1.25)
    out += struct.pack("<BBff", 2, 2, 4.0, 0.0)
    return out


if __name__ == "__main__":
    for name, data in [("state_1v1.bin", state_1v1()), ("command_wheel.bin", command_wheel()),
                       ("command_mixed.bin", command_mixed())]:
        (HERE / name).write_bytes(data)
        print(name, len(data))
