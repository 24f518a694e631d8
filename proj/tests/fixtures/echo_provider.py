#!/usr/bin/env python3
# Test provider: echoes the rendered image back as the gradient and returns the
# clean frames from a refine call. Views with azimuth above 170 are refused.
import json
import sys

for line in sys.stdin:
    req = json.loads(line)
    if req["op"] == "guidance":
        if req["camera"]["azimuth"] > 170:
            reply = {"error": "azimuth out of coverage"}
        else:
            reply = {"gradient": req["image"]}
    elif req["op"] == "refine":
        reply = {"frames": req["clean"]}
    else:
        reply = {"error": "unknown op " + req["op"]}
    sys.stdout.write(json.dumps(reply) + "\n")
    sys.stdout.flush()
