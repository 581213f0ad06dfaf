"""Talk to a live simulation server over its line-delimited JSON protocol.

Starts a service on a free port in-process, then acts as a plain TCP
client: reads the banner, nudges the throttle, steps time forward, and
pulls a range scan. The same exchanges work against `fairwaysim serve`
from another terminal or another language.
"""

import json
import socket

from fairwaysim.service import SimSession, VesselService


def rpc(fh, rid, method, params=None):
    fh.write(json.dumps({"id": rid, "method": method,
                         "params": params or {}}).encode() + b"\n")
    fh.flush()
    reply = json.loads(fh.readline())
    if not reply["ok"]:
        raise RuntimeError(f"{method}: {reply['error']['code']}")
    return reply["result"]


def main():
    service = VesselService(SimSession(), port=0)
    service.start()
    host, port = service.address
    print(f"server up on {host}:{port}")

    sock = socket.create_connection((host, port))
    fh = sock.makefile("rwb")
    banner = json.loads(fh.readline())
    print(f"banner: protocol {banner['protocol']}, {banner['mode']} mode, "
          f"dt {banner['dt']}, {len(banner['methods'])} methods")

    rpc(fh, 1, "set_vessel_controls", {"thrust": 0.8, "angle": 0.5})
    rpc(fh, 2, "sim_step", {"n": 500})          # 10 s of lockstep time
    state = rpc(fh, 3, "get_state")
    print(f"after 10 s at thrust 0.8: x={state['pose']['x']:.2f} m, "
          f"surge {state['nu_r'][0]:.3f} m/s")

    scan = rpc(fh, 4, "get_scan", {"n_beams": 8})
    print("8-beam scan ranges:", [round(r, 1) for r in scan["ranges"]])

    fh.close()
    sock.close()
    service.close()
    print("session closed")


if __name__ == "__main__":
    main()
