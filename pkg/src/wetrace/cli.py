"""Command-line entry points.

Exit codes: 0 success, 1 invalid input (bad flags, scenario, refused report),
2 runtime failure (network, bind, relay errors).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import urllib.error
from pathlib import Path

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _emit(args, doc, text: str) -> None:
    if args.json:
        print(json.dumps(doc, sort_keys=True))
    else:
        print(text)


def _fail(code: int, message: str) -> int:
    print(message, file=sys.stderr)
    return code


def _load_scenario(path: str):
    from .simnet import Scenario, ScenarioError

    if not Path(path).is_file():
        raise FileNotFoundError(f"scenario not found: {path}")
    try:
        return Scenario.load(path)
    except ScenarioError:
        raise
    except (OSError, UnicodeDecodeError) as exc:
        raise ScenarioError("<document>", str(exc)) from None


def cmd_simulate(args) -> int:
    from .simnet import ScenarioError, run

    try:
        scenario = _load_scenario(args.scenario)
    except FileNotFoundError as exc:
        return _fail(EXIT_INVALID, str(exc))
    except ScenarioError as exc:
        return _fail(EXIT_INVALID, f"invalid scenario: {exc}")
    result = run(scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(result.metrics.to_json() + "\n")
    (out / "metrics.txt").write_text(result.metrics.table() + "\n")
    (out / "events.jsonl").write_text(result.event_log())
    if args.export_states:
        export = Path(args.export_states)
        export.mkdir(parents=True, exist_ok=True)
        for dev_id, device in result.devices.items():
            (export / f"{dev_id}.state.json").write_bytes(device.to_bytes())
    _emit(args, result.metrics.to_dict(), result.metrics.table())
    return EXIT_OK


def cmd_validate(args) -> int:
    from .simnet import ScenarioError

    try:
        scenario = _load_scenario(args.scenario)
    except FileNotFoundError as exc:
        return _fail(EXIT_INVALID, str(exc))
    except ScenarioError as exc:
        return _fail(EXIT_INVALID, f"invalid scenario: {exc}")
    doc = {"valid": True, "devices": len(scenario.devices), "attackers": len(scenario.attackers),
           "events": len(scenario.events), "duration": scenario.duration}
    _emit(args, doc, f"ok: {doc['devices']} devices, {doc['attackers']} attackers, "
                     f"{doc['events']} events over {scenario.duration:g} s")
    return EXIT_OK


def _parse_listen(value: str) -> tuple[str, int]:
    host, sep, port = value.rpartition(":")
    if not sep or not port.isdigit():
        raise argparse.ArgumentTypeError("expected HOST:PORT")
    return host or "127.0.0.1", int(port)


def cmd_serve(args) -> int:
    from .backend import BackendStore
    from .backend.service import RelayServer

    try:
        store = BackendStore(args.retention, args.difficulty, args.token)
    except ValueError as exc:
        return _fail(EXIT_INVALID, str(exc))
    host, port = args.listen
    try:
        server = RelayServer(store, host, port, purge_interval=args.purge_interval)
    except OSError as exc:
        return _fail(EXIT_RUNTIME, f"cannot bind {host}:{port}: {exc}")
    print(f"relay listening on {server.url} (difficulty {args.difficulty}, retention {args.retention:g} s)",
          file=sys.stderr, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.httpd.server_close()
    return EXIT_OK


def cmd_agent(args) -> int:
    from . import agent
    from .backend import PublishError
    from .backend.client import RelayClient
    from .device import ReportError

    if args.action == "init":
        try:
            agent.init_state(args.state, force=args.force)
        except FileExistsError as exc:
            return _fail(EXIT_INVALID, str(exc))
        _emit(args, {"initialized": True}, "initialized new device state")
        return EXIT_OK
    if not Path(args.state).is_file():
        return _fail(EXIT_INVALID, f"state file not found: {args.state} (run 'device-agent init' first)")
    if args.action == "show":
        info = agent.show(args.state)
        _emit(args, info, f"status: {info['status']}\nreported: {'yes' if info['report_spent'] else 'no'}\n"
                          f"encounters: {info['encounters']}\ncursor: {info['cursor']}")
        return EXIT_OK
    if not args.backend:
        return _fail(EXIT_INVALID, "no backend URL (use --backend or WETRACE_BACKEND_URL)")
    client = RelayClient(args.backend)
    try:
        if args.action == "report":
            accepted = agent.report(args.state, client, args.level, args.difficulty, args.token, args.now)
            if accepted == 0:
                print("warning: no contacts to notify", file=sys.stderr)
            _emit(args, {"published": accepted}, f"published {accepted} messages")
        else:
            payloads, attempts = agent.poll(args.state, client, args.now)
            docs = [agent.describe_payload(p) for p in payloads]
            text = "\n".join(
                " ".join(f"{k}={v}" for k, v in d.items()) for d in docs
            ) or "no notifications for this device"
            _emit(args, {"notifications": docs, "attempts": attempts}, text)
    except ReportError as exc:
        return _fail(EXIT_INVALID, str(exc))
    except PublishError as exc:
        return _fail(EXIT_RUNTIME, f"relay rejected publish: {exc.reason}")
    except (urllib.error.URLError, OSError) as exc:
        return _fail(EXIT_RUNTIME, f"cannot reach relay: {exc}")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import bench_decrypt

    report = bench_decrypt(args.messages, args.keys, args.prefix_bits, args.cipher, args.seed)
    _emit(args, report.to_dict(), report.summary())
    return EXIT_OK


def _positive_int(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("must be positive")
    return n


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output on stdout")

    parser = _Parser(prog="wetrace", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="run a scenario file")
    p.add_argument("scenario")
    p.add_argument("--out", required=True, help="directory for metrics and event log")
    p.add_argument("--export-states", metavar="DIR", help="also write each device's state file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("scenario-validate", parents=[common], help="check a scenario file")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_validate)

    env = os.environ
    p = sub.add_parser("backend-serve", parents=[common], help="run the relay service")
    p.add_argument("--listen", type=_parse_listen, default=_parse_listen(env.get("WETRACE_LISTEN", "127.0.0.1:8080")))
    p.add_argument("--retention", type=float, default=float(env.get("WETRACE_RETENTION", 14 * 24 * 3600)))
    p.add_argument("--difficulty", type=int, default=int(env.get("WETRACE_DIFFICULTY", 20)))
    p.add_argument("--token", default=env.get("WETRACE_TOKEN"), help="accept this bearer token instead of proof of work")
    p.add_argument("--purge-interval", type=float, default=60.0)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("device-agent", help="drive one device against a relay")
    p.add_argument("--state", required=True, help="device state file")
    p.add_argument("--backend", default=env.get("WETRACE_BACKEND_URL"))
    p.add_argument("--difficulty", type=int, default=int(env.get("WETRACE_DIFFICULTY", 20)),
                   help="proof-of-work bits the relay expects")
    p.add_argument("--now", type=float, default=None, help="clock override (seconds since epoch)")
    actions = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    a = actions.add_parser("init", parents=[common])
    a.add_argument("--force", action="store_true")
    a = actions.add_parser("report", parents=[common])
    a.add_argument("--level", type=int, choices=[1, 2, 3, 4], required=True)
    a.add_argument("--token", default=None, help="hospital token instead of proof of work")
    actions.add_parser("poll", parents=[common])
    actions.add_parser("show", parents=[common])
    p.set_defaults(func=cmd_agent)

    p = sub.add_parser("bench-decrypt", parents=[common], help="measure decryption attempts per prefix length")
    p.add_argument("--messages", type=_positive_int, default=10_000)
    p.add_argument("--keys", type=_positive_int, default=1344)
    p.add_argument("--prefix-bits", type=int, choices=range(0, 33), metavar="0..32", default=0)
    p.add_argument("--cipher", choices=["real", "stub"], default="real")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
