"""Service launcher: `model-service --port 8070 [--config service.json]`."""
from __future__ import annotations

import argparse

import uvicorn

from .app import create_app
from .config import ServiceConfig, load_service_config


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="model-service")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8070)
    parser.add_argument("--config", help="service config JSON")
    parser.add_argument(
        "--dump-conformance",
        metavar="DIR",
        help="write request/response fixture pairs to DIR and exit",
    )
    args = parser.parse_args(argv)
    cfg = load_service_config(args.config) if args.config else ServiceConfig()
    if args.dump_conformance:
        from .conformance import conformance_fixture_dump

        for path in conformance_fixture_dump(args.dump_conformance, cfg):
            print(path)
        return 0
    uvicorn.run(create_app(cfg), host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
