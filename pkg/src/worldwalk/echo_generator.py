"""Reference implementation of the external-generator wire protocol.

Echoes each request's rendered point-cloud frames back as the generated
frames, so a session driven through it must reproduce the passthrough
generator bit for bit. Useful as a template for wiring up a real generator
and as a loopback test double.

Run:  python -m worldwalk.echo_generator [--delay S] [--drop N] [--malformed]

The flags inject protocol faults for testing the client's error handling.
"""
from __future__ import annotations

import argparse
import json
import sys
import time


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--delay", type=float, default=0.0,
                        help="sleep this many seconds before every reply")
    parser.add_argument("--drop", type=int, default=0,
                        help="omit this many frames from every reply")
    parser.add_argument("--malformed", action="store_true",
                        help="reply with a record of the wrong type")
    args = parser.parse_args(argv)

    for line in sys.stdin:
        if not line.strip():
            continue
        request = json.loads(line)
        if request.get("type") != "generate":
            reply = {"type": "error", "message": f"unexpected request {request.get('type')!r}"}
        elif args.malformed:
            reply = {"type": "oops", "step": request["step"]}
        else:
            frames = list(request["pc_video_png_b64"])
            if args.drop:
                frames = frames[: max(0, len(frames) - args.drop)]
            if args.delay:
                time.sleep(args.delay)
            reply = {"type": "frames", "step": request["step"], "frames_png_b64": frames}
        sys.stdout.write(json.dumps(reply) + "\n")
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
