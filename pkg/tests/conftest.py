import sys
import shutil
from pathlib import Path

import pytest

REPO = Path(__file__).resolve().parents[1]
TOY_CONFIG = REPO / "demos" / "toy.toml"
TOY_CORPUS = REPO / "src" / "cqa_perspectives" / "resources" / "toy_corpus.json"


def write_config(directory: Path, **sections) -> Path:
    """A stub-backend config over the toy corpus, writing into `directory`/out.

    Keyword arguments add or replace whole sections, e.g.
    ``summarize={"stage2_enabled": False}``.
    """
    base = {
        "paths": {"corpus": str(TOY_CORPUS), "output_dir": str(directory / "out")},
        "embedding": {"kind": "stub"},
        "extractive": {"kind": "stub"},
        "abstractive": {"kind": "stub"},
    }
    base.update(sections)
    lines = []
    for name, values in base.items():
        lines.append(f"[{name}]")
        for k, v in values.items():
            if isinstance(v, bool):
                lines.append(f"{k} = {'true' if v else 'false'}")
            elif isinstance(v, (int, float)):
                lines.append(f"{k} = {v!r}")
            else:
                lines.append(f'{k} = "{v}"')
        lines.append("")
    path = directory / "config.toml"
    path.write_text("\n".join(lines), encoding="utf-8")
    return path


@pytest.fixture
def toy_config(tmp_path):
    return write_config(tmp_path)


@pytest.fixture
def toy_corpus_copy(tmp_path):
    dst = tmp_path / "corpus.json"
    shutil.copy(TOY_CORPUS, dst)
    return dst


class _JsonService:
    """Tiny local HTTP server answering JSON POSTs with `respond(payload)`."""

    def __init__(self, respond):
        import http.server
        import json
        import threading

        self.requests = []
        service = self

        class Handler(http.server.BaseHTTPRequestHandler):
            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                service.requests.append(body)
                try:
                    status, out = 200, respond(body)
                except Exception as e:  # noqa: BLE001
                    status, out = 500, {"error": str(e)}
                data = json.dumps(out).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}/"
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def json_service():
    started = []

    def start(respond):
        svc = _JsonService(respond)
        started.append(svc)
        return svc

    yield start
    for svc in started:
        svc.close()


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(module.RESULTS):
        terminalreporter.write_line(line)
