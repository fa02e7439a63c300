"""Writes RC_2022-03.jsonl.gz, the small dump used by the test suites.

Run from this directory. Output is byte-stable (gzip mtime pinned to 0).
"""
import gzip
import json

MARCH = 1646092800  # 2022-03-01T00:00:00Z
FEB = 1643760000  # 2022-02-02T00:00:00Z
REGIONS = ["chicago", "boston", "denver", "seattle"]
KINDS = ["", "team", "food", "jobs"]


def sub(region, kind):
    return REGIONS[region] + KINDS[kind]


lines = []
seq = 0


def emit(author, subreddit, body="text", when=None, ts_format=int):
    global seq
    seq += 1
    t = MARCH + seq * 37 if when is None else when
    lines.append(json.dumps({
        "id": f"f{seq:05d}",
        "author": author,
        "subreddit": subreddit,
        "created_utc": ts_format(t),
        "body": body,
    }, separators=(",", ":")))


# Core users: user i writes i comments, nine in ten inside its home region.
for i in range(1, 101):
    home = i % 4
    for j in range(i):
        region = home if j % 10 != 9 else (home + 1) % 4
        fmt = str if (i + j) % 7 == 0 else (float if (i + j) % 11 == 0 else int)
        emit(f"user{i:03d}", sub(region, (i + j) % 4), ts_format=fmt)
# user001 also posts on its own profile page, so it reaches the activity
# filter with only one comment.
emit("user001", "u_user001")
# Profile-only poster.
emit("selfposter", "u_selfposter")
emit("selfposter", "u_selfposter")
# Subreddit outside the top 16.
for _ in range(3):
    emit("drifter", "tinysub")
# Deleted authors.
for k in range(5):
    emit("[deleted]", sub(k % 4, 0))
# Removed or deleted bodies.
emit("lurker", "chicago", body="[removed]")
emit("lurker", "boston", body="[removed]")
emit("lurker", "denver", body="[deleted]")
# Users with a single comment in the month.
for k in range(7):
    emit(f"once{k}", sub(k % 4, 1))

out = []
for n, line in enumerate(lines):
    out.append(line)
    if n == 2500:
        out.append('{"id": "broken", "author": ')
    if n in (1000, 4000):
        seq += 1
        out.append(json.dumps({"id": f"old{n}", "author": "user050", "subreddit": "chicago",
                               "created_utc": FEB, "body": "late"}, separators=(",", ":")))

with open("RC_2022-03.jsonl.gz", "wb") as f:
    with gzip.GzipFile(filename="", mode="wb", fileobj=f, mtime=0) as gz:
        gz.write(("\n".join(out) + "\n").encode())
