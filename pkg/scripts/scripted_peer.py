#!/usr/bin/env python3
"""A minimal live client for manual testing: joins the server over raw TCP,
takes a seat, and keeps nodding its head so viewers have something to watch.

Usage: python3 scripts/scripted_peer.py [--host H] [--port P] [--seat seat_b]
"""

import argparse
import asyncio
import math
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from panomeet.geometry import Pose, Vec3, rot_y  # noqa: E402
from panomeet.protocol import (  # noqa: E402
    ClientHello,
    DEFAULT_PORT,
    PoseUpdate,
    SeatRequest,
    decode_message,
    encode_message,
    envelope,
)


async def run(host: str, port: int, seat: str, name: str):
    reader, writer = await asyncio.open_connection(host, port)
    seq = 0

    def send(body):
        nonlocal seq
        writer.write(encode_message(envelope(body, seq=seq, ts_ms=time.time() * 1000)))
        seq += 1

    send(ClientHello(name))
    env = decode_message(await reader.readline())
    print(f"joined as {env.body.session_id}")
    send(SeatRequest(seat))

    async def reader_loop():
        while True:
            line = await reader.readline()
            if not line:
                print("server closed the connection")
                return
            got = decode_message(line)
            if got.msg_type in ("seat_update", "element_state_msg", "error_msg"):
                print(f"<- {got.msg_type}: {got.body}")

    async def mover_loop():
        t0 = time.time()
        while True:
            await asyncio.sleep(1 / 30)
            t = time.time() - t0
            head = Pose(Vec3(0, 0.05 * math.sin(t * 2.1), 0), rot_y(0.4 * math.sin(t * 0.7)))
            send(PoseUpdate(head=head))

    await asyncio.gather(reader_loop(), mover_loop())


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=DEFAULT_PORT)
    parser.add_argument("--seat", default="seat_b")
    parser.add_argument("--name", default="scripted-peer")
    args = parser.parse_args()
    try:
        asyncio.run(run(args.host, args.port, args.seat, args.name))
    except KeyboardInterrupt:
        pass


if __name__ == "__main__":
    main()
