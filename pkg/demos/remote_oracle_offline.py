"""
Talking to a vision model, offline
==================================

The remote oracle speaks the OpenAI-style chat-completion protocol. Here it
talks to a scripted local server, so the whole exchange, retries included,
can be watched without network access. The session
is recorded and replayed to reproduce the run exactly.

To use a real endpoint instead, set ORACLE_ENDPOINT, ORACLE_MODEL and
ORACLE_API_KEY and build the oracle with ``RemoteOracle.from_env()``.
"""

import io
import itertools
import re

from vlmrrt import PlannerConfig, plan_vlm_rrt
from vlmrrt.bench import BenchConfig, bench_scenario
from vlmrrt.oracle import PROMPT_MODES, RecordingOracle, RemoteOracle, ReplayOracle, geometric_direction
from vlmrrt.oracle.mock_server import MockVisionServer

env = bench_scenario(BenchConfig(seed=0), 2).env
cfg = PlannerConfig(max_iterations=60, gamma=0.85, rng_seed=1, goal_mode="ball_or_rect")

# A stand-in model: it reads the ringed node's world position from the
# prompt and answers like the geometric oracle, but every fourth reply
# forgets the output format. Unparseable replies are retried; after three
# failed attempts the iteration falls back to uniform sampling.
POSITION = re.compile(r"world position \(([-\d.]+), ([-\d.]+)\)")


def stand_in_model():
    counter = itertools.count(1)

    def respond(body):
        text = body["messages"][1]["content"][0]["text"]
        x, y = map(float, POSITION.search(text).groups())
        if next(counter) % 4 == 0:
            return 200, "Hard to say from this picture."
        d = geometric_direction(env, (x, y), env.goal_centroid, 30.0)
        return 200, f"The goal lies beyond the fire fronts.\nDIRECTION: {d.value}"

    return respond


for mode in PROMPT_MODES:
    with MockVisionServer(stand_in_model()) as server:
        oracle = RemoteOracle(server.url, "mock-vision", prompt_mode=mode, backoff=0.0)
        res = plan_vlm_rrt(env, cfg, oracle)
    body = server.requests[0][1]
    prompt = body["messages"][1]["content"][0]["text"]
    print(f"{mode:9s} {res.status:15s} {res.vlm_queries:3d} queries, {len(server.requests):3d} HTTP calls, "
          f"prompt {len(prompt)} chars + {len(body['messages'][1]['content'][1]['image_url']['url'])} "
          "chars of image")

# %%
# Record one run, then replay the tape: no server needed the second time.
tape = io.StringIO()
with MockVisionServer(stand_in_model()) as server:
    live = plan_vlm_rrt(env, cfg, RecordingOracle(RemoteOracle(server.url, "mock-vision", backoff=0.0), tape))
tape.seek(0)
again = plan_vlm_rrt(env, cfg, ReplayOracle.from_jsonl(tape))
print("replay reproduces the live run:", live == again)
